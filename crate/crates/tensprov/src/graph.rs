//! The pipeline graph: operations linked by dataflow precedence, their
//! tensors and annotations, the materialization policy, and record-level
//! recomputation of released intermediates.
//!
//! Only pipeline sources, current sinks, and the inputs of contextual
//! operations keep their row values; everything else is released at
//! registration time and reconstructed on demand by tracing the needed rows
//! backward through the tensors and replaying the operations forward on just
//! those rows.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::dataset::{Dataset, DatasetId, Schema};
use crate::error::{Error, Result};
use crate::ops::{
    append_right_positions, append_right_row, apply_cell, compute_stats, derive_cell,
    join_rest_columns, join_stitch_row, one_hot_cells, oversampled_row, string_index_cell,
    CaptureResult, OpDescriptor, OpParams,
};
use crate::tensor::{duplicate_canon, ProvTensor, RowIdx, MEM_ACCOUNTING};
use crate::value::CellValue;

/// Duplicate-row classes of one dataset, for set-semantics queries.
#[derive(Debug, Clone)]
pub struct DupClasses {
    /// Smallest row index of each row's duplicate class.
    pub canon: Vec<RowIdx>,
    /// Class members keyed by the canonical index.
    pub members: HashMap<RowIdx, Vec<RowIdx>>,
}

impl DupClasses {
    fn from_dataset(d: &Dataset) -> DupClasses {
        let canon = duplicate_canon(d);
        let mut members: HashMap<RowIdx, Vec<RowIdx>> = HashMap::new();
        for (i, &c) in canon.iter().enumerate() {
            members.entry(c).or_default().push(i as RowIdx);
        }
        DupClasses { canon, members }
    }

    /// All rows sharing a duplicate class with any row in `rows`.
    pub fn expand(&self, rows: &BTreeSet<RowIdx>) -> BTreeSet<RowIdx> {
        let mut out = BTreeSet::new();
        for &r in rows {
            match self.canon.get(r as usize) {
                Some(c) => out.extend(self.members[c].iter().copied()),
                None => {
                    out.insert(r);
                }
            }
        }
        out
    }

    /// Canonical representative of each row in `rows`.
    pub fn canonize(&self, rows: &BTreeSet<RowIdx>) -> BTreeSet<RowIdx> {
        rows.iter()
            .map(|&r| self.canon.get(r as usize).copied().unwrap_or(r))
            .collect()
    }
}

/// Registry entry for a dataset: schema and row count always survive so
/// tensors stay interpretable; row values only while materialized.
#[derive(Debug)]
pub struct DatasetInfo {
    pub schema: Schema,
    pub row_count: usize,
    pub is_source: bool,
    value: Option<Dataset>,
}

/// One hop of a dataflow path: the op traversed and the input dataset the
/// path enters it through.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathHop {
    pub op_id: String,
    pub via_input: DatasetId,
}

/// Requested rows of one dataset, possibly reconstructed.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRows {
    pub dataset: DatasetId,
    pub schema: Schema,
    pub rows: BTreeMap<RowIdx, Vec<CellValue>>,
}

#[derive(Debug, Serialize)]
pub struct MemoryReport {
    pub per_op_tensor_bytes: BTreeMap<String, u64>,
    pub tensor_bytes_total: u64,
    pub materialized_dataset_bytes: BTreeMap<String, u64>,
    pub materialized_bytes_total: u64,
    pub total_bytes: u64,
    pub accounting: String,
}

/// A captured pipeline: frozen after the run, read-only for querying.
#[derive(Debug, Default)]
pub struct Pipeline {
    id: String,
    set_semantics: bool,
    ops: Vec<OpDescriptor>,
    op_index: HashMap<String, usize>,
    tensors: HashMap<String, Vec<ProvTensor>>,
    /// Set-semantics variants, canonicalized against each op's output.
    canon_tensors: HashMap<String, Vec<ProvTensor>>,
    datasets: HashMap<DatasetId, DatasetInfo>,
    producer: HashMap<DatasetId, String>,
    consumers: HashMap<DatasetId, Vec<String>>,
    dup: HashMap<DatasetId, DupClasses>,
}

impl Pipeline {
    pub fn new(id: impl Into<String>, set_semantics: bool) -> Pipeline {
        Pipeline {
            id: id.into(),
            set_semantics,
            ..Pipeline::default()
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_semantics(&self) -> bool {
        self.set_semantics
    }

    /// Register a pipeline source dataset.
    pub fn register_source(&mut self, d: Dataset) -> Result<()> {
        if self.datasets.contains_key(d.id()) {
            return Err(Error::DuplicateDataset(d.id().to_string()));
        }
        if self.set_semantics {
            self.dup.insert(d.id().to_string(), DupClasses::from_dataset(&d));
        }
        self.datasets.insert(
            d.id().to_string(),
            DatasetInfo {
                schema: d.schema().clone(),
                row_count: d.row_count(),
                is_source: true,
                value: Some(d),
            },
        );
        Ok(())
    }

    /// Register a captured operation: attach its descriptor and tensors, add
    /// the output dataset, and re-apply the materialization policy.
    pub fn register(&mut self, result: CaptureResult) -> Result<()> {
        let CaptureResult {
            output,
            tensors,
            descriptor,
            ..
        } = result;
        if self.op_index.contains_key(&descriptor.id) {
            return Err(Error::DuplicateOpId(descriptor.id.clone()));
        }
        for input in &descriptor.inputs {
            if !self.datasets.contains_key(input) {
                return Err(Error::UnknownDataset(input.clone()));
            }
        }
        if self.datasets.contains_key(&descriptor.output) {
            return Err(Error::DuplicateDataset(descriptor.output.clone()));
        }
        if descriptor.output != output.id() {
            return Err(Error::InvalidParams(format!(
                "descriptor output '{}' does not match dataset id '{}'",
                descriptor.output,
                output.id()
            )));
        }
        for t in &tensors {
            for dim in t.dims() {
                let known = dim.dataset == descriptor.output
                    || descriptor.inputs.contains(&dim.dataset);
                if !known {
                    return Err(Error::InvalidTensor(format!(
                        "tensor dimension refers to '{}' which the op does not touch",
                        dim.dataset
                    )));
                }
            }
        }

        // Two paths between the same dataset pair are rejected: the lineage
        // path algorithms assume a single tensor chain.
        if descriptor.inputs.len() == 2 {
            let (a, b) = (&descriptor.inputs[0], &descriptor.inputs[1]);
            if a == b {
                return Err(Error::DiamondDataflow {
                    op: descriptor.id.clone(),
                    ancestor: a.clone(),
                });
            }
            let (anc_a, anc_b) = (self.ancestors(a), self.ancestors(b));
            if let Some(shared) = anc_a.intersection(&anc_b).next() {
                return Err(Error::DiamondDataflow {
                    op: descriptor.id.clone(),
                    ancestor: shared.clone(),
                });
            }
        }

        if self.set_semantics {
            self.dup
                .insert(output.id().to_string(), DupClasses::from_dataset(&output));
            let canon: Vec<ProvTensor> = tensors
                .iter()
                .map(|t| t.to_set_semantics(&output))
                .collect::<Result<_>>()?;
            self.canon_tensors.insert(descriptor.id.clone(), canon);
        }

        self.datasets.insert(
            output.id().to_string(),
            DatasetInfo {
                schema: output.schema().clone(),
                row_count: output.row_count(),
                is_source: false,
                value: Some(output),
            },
        );
        self.producer
            .insert(descriptor.output.clone(), descriptor.id.clone());
        for input in &descriptor.inputs {
            self.consumers
                .entry(input.clone())
                .or_default()
                .push(descriptor.id.clone());
        }
        self.tensors.insert(descriptor.id.clone(), tensors);
        self.op_index.insert(descriptor.id.clone(), self.ops.len());
        let inputs = descriptor.inputs.clone();
        self.ops.push(descriptor);

        // Inputs that stopped being sinks may now be released.
        for input in &inputs {
            if !self.must_materialize(input) {
                if let Some(info) = self.datasets.get_mut(input) {
                    info.value = None;
                }
            }
        }
        Ok(())
    }

    fn must_materialize(&self, id: &str) -> bool {
        let Some(info) = self.datasets.get(id) else {
            return false;
        };
        if info.is_source || self.is_sink(id) {
            return true;
        }
        self.consumers
            .get(id)
            .map(|ops| {
                ops.iter()
                    .any(|op_id| self.ops[self.op_index[op_id]].contextual)
            })
            .unwrap_or(false)
    }

    fn is_sink(&self, id: &str) -> bool {
        self.consumers.get(id).map(|c| c.is_empty()).unwrap_or(true)
    }

    /// Verify that every dataset the policy requires is actually retained.
    pub fn check_materialization_invariant(&self) -> Result<()> {
        for (id, info) in &self.datasets {
            if self.must_materialize(id) && info.value.is_none() {
                return Err(Error::PolicyViolation(id.clone()));
            }
        }
        Ok(())
    }

    pub(crate) fn ancestors(&self, id: &str) -> BTreeSet<DatasetId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id.to_string()];
        while let Some(d) = stack.pop() {
            if !out.insert(d.clone()) {
                continue;
            }
            if let Some(op_id) = self.producer.get(&d) {
                for input in &self.ops[self.op_index[op_id]].inputs {
                    stack.push(input.clone());
                }
            }
        }
        out
    }

    pub fn ops(&self) -> &[OpDescriptor] {
        &self.ops
    }

    pub fn op(&self, id: &str) -> Option<&OpDescriptor> {
        self.op_index.get(id).map(|&i| &self.ops[i])
    }

    pub fn op_tensors(&self, id: &str) -> Option<&[ProvTensor]> {
        self.tensors.get(id).map(|v| &v[..])
    }

    /// Tensors consulted by set-semantics queries (canonicalized outputs).
    pub fn op_tensors_canonical(&self, id: &str) -> Option<&[ProvTensor]> {
        self.canon_tensors.get(id).map(|v| &v[..])
    }

    pub fn dataset_info(&self, id: &str) -> Result<&DatasetInfo> {
        self.datasets
            .get(id)
            .ok_or_else(|| Error::UnknownDataset(id.to_string()))
    }

    pub fn dataset_ids(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(|s| s.as_str())
    }

    /// The retained dataset value, if this dataset is materialized.
    pub fn materialized(&self, id: &str) -> Option<&Dataset> {
        self.datasets.get(id).and_then(|i| i.value.as_ref())
    }

    pub fn producer_op(&self, dataset: &str) -> Option<&OpDescriptor> {
        self.producer.get(dataset).and_then(|op| self.op(op))
    }

    pub fn dup_classes(&self, dataset: &str) -> Option<&DupClasses> {
        self.dup.get(dataset)
    }

    pub fn sources(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .datasets
            .iter()
            .filter(|(_, i)| i.is_source)
            .map(|(id, _)| id.as_str())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn sinks(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .datasets
            .keys()
            .filter(|id| self.is_sink(id))
            .map(|id| id.as_str())
            .collect();
        v.sort_unstable();
        v
    }

    /// The unique dataflow path from `src` to `dst`, as the ops traversed
    /// and the input side each is entered through.
    pub fn dataflow_path(&self, src: &str, dst: &str) -> Result<Vec<PathHop>> {
        if src == dst {
            return Err(Error::InvalidParams(
                "dataflow path endpoints must differ".to_string(),
            ));
        }
        self.dataset_info(src)?;
        self.dataset_info(dst)?;
        let mut hops = Vec::new();
        // Hops are pushed on the way back up the recursion, source end first.
        if self.path_into(src, dst, &mut hops) {
            Ok(hops)
        } else {
            Err(Error::NoPath {
                src: src.to_string(),
                dst: dst.to_string(),
            })
        }
    }

    fn path_into(&self, src: &str, dst: &str, hops: &mut Vec<PathHop>) -> bool {
        let Some(op_id) = self.producer.get(dst) else {
            return false;
        };
        let op = &self.ops[self.op_index[op_id]];
        for input in &op.inputs {
            if input == src || self.path_into(src, input, hops) {
                hops.push(PathHop {
                    op_id: op_id.clone(),
                    via_input: input.clone(),
                });
                return true;
            }
        }
        false
    }

    /// The tensors of a hop that range over its traversed input side, with
    /// the matching input dimension and the output dimension. Appends and
    /// outer joins carry several tensors; every one on the traversed side
    /// takes part and results are unioned by the caller.
    pub fn hop_tensors(&self, hop: &PathHop, canonical: bool) -> Vec<(&ProvTensor, usize, usize)> {
        let store = if canonical {
            self.canon_tensors.get(&hop.op_id).or_else(|| self.tensors.get(&hop.op_id))
        } else {
            self.tensors.get(&hop.op_id)
        };
        let mut out = Vec::new();
        if let Some(tensors) = store {
            for t in tensors {
                for in_dim in t.input_dims_for(&hop.via_input) {
                    out.push((t, in_dim, t.output_dim()));
                }
            }
        }
        out
    }

    /// Flattened tensor chain of the path from `src` to `dst`.
    pub fn dataflow_tensor_chain(&self, src: &str, dst: &str) -> Result<Vec<(&ProvTensor, usize, usize)>> {
        let mut chain = Vec::new();
        for hop in self.dataflow_path(src, dst)? {
            chain.extend(self.hop_tensors(&hop, false));
        }
        Ok(chain)
    }

    /// Fetch rows of a dataset, reconstructing them when the dataset was
    /// released: trace the needed rows back to the nearest materialized
    /// ancestors through the tensors and replay each op forward on only
    /// those rows.
    pub fn recompute_records(&self, dataset: &str, rows: &BTreeSet<RowIdx>) -> Result<PartialRows> {
        let info = self.dataset_info(dataset)?;
        for &r in rows {
            if r as usize >= info.row_count {
                return Err(Error::RowOutOfRange {
                    dataset: dataset.to_string(),
                    index: r as usize,
                    rows: info.row_count,
                });
            }
        }
        let rows = self.fetch_rows(dataset, rows)?;
        Ok(PartialRows {
            dataset: dataset.to_string(),
            schema: info.schema.clone(),
            rows,
        })
    }

    fn fetch_rows(
        &self,
        dataset: &str,
        rows: &BTreeSet<RowIdx>,
    ) -> Result<BTreeMap<RowIdx, Vec<CellValue>>> {
        if let Some(d) = self.materialized(dataset) {
            let mut out = BTreeMap::new();
            for &r in rows {
                out.insert(r, d.get_row(r as usize)?.to_vec());
            }
            return Ok(out);
        }
        let op_id = self
            .producer
            .get(dataset)
            .ok_or_else(|| Error::PolicyViolation(dataset.to_string()))?;
        let op = &self.ops[self.op_index[op_id]];
        let tensors = &self.tensors[op_id];

        if op.contextual {
            for input in &op.inputs {
                if self.materialized(input).is_none() {
                    return Err(Error::PolicyViolation(input.clone()));
                }
            }
        }

        // Backward-trace the input rows each requested output row needs.
        let mut needed: HashMap<&str, BTreeSet<RowIdx>> = HashMap::new();
        for t in tensors {
            let out_dim = t.output_dim();
            for leaf in t.slice(out_dim, rows.iter().copied())? {
                for (d, role) in t.dims().iter().enumerate() {
                    if d != out_dim {
                        needed.entry(role.dataset.as_str()).or_default().insert(leaf[d]);
                    }
                }
            }
        }
        let mut fetched: HashMap<&str, BTreeMap<RowIdx, Vec<CellValue>>> = HashMap::new();
        for (input, idxs) in needed {
            fetched.insert(input, self.fetch_rows(input, &idxs)?);
        }
        self.replay(op, tensors, &fetched, rows)
    }

    /// Replay one op on the traced subset of its input rows, producing the
    /// requested output rows cell-for-cell as a full run would.
    fn replay(
        &self,
        op: &OpDescriptor,
        tensors: &[ProvTensor],
        fetched: &HashMap<&str, BTreeMap<RowIdx, Vec<CellValue>>>,
        rows: &BTreeSet<RowIdx>,
    ) -> Result<BTreeMap<RowIdx, Vec<CellValue>>> {
        let input_id = op.inputs[0].as_str();
        let input_info = self.dataset_info(input_id)?;
        let mut out = BTreeMap::new();

        // Source row of an identity-tensor op is the output index itself;
        // other categories read the mapping off the tensor leaves.
        let source_of = |o: RowIdx, tensor: &ProvTensor| -> Result<Option<RowIdx>> {
            let leaves = tensor.slice(tensor.output_dim(), [o])?;
            Ok(leaves.first().map(|l| l[1]))
        };

        match &op.params {
            OpParams::Transform { func, columns } => {
                let stats = if func.contextual() {
                    let full = self.materialized(input_id).ok_or_else(|| {
                        Error::PolicyViolation(input_id.to_string())
                    })?;
                    columns
                        .iter()
                        .map(|&c| compute_stats(full, c, func))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    columns.iter().map(|_| Ok(crate::ops::ColStats::None)).collect::<Result<Vec<_>>>()?
                };
                for &o in rows {
                    let row = &fetched[input_id][&o];
                    let mut cells = row.clone();
                    for (k, &col) in columns.iter().enumerate() {
                        let ty = input_info.schema.attr(col)?.ty;
                        cells[col] = apply_cell(&row[col], ty, func, &stats[k]);
                    }
                    out.insert(o, cells);
                }
            }
            OpParams::DropColumns { dropped } => {
                let kept: Vec<usize> = (0..input_info.schema.len())
                    .filter(|c| !dropped.contains(c))
                    .collect();
                for &o in rows {
                    let row = &fetched[input_id][&o];
                    out.insert(o, kept.iter().map(|&c| row[c].clone()).collect());
                }
            }
            OpParams::OneHot { column, categories, .. } => {
                for &o in rows {
                    let row = &fetched[input_id][&o];
                    let mut cells = row.clone();
                    cells.extend(one_hot_cells(&row[*column], categories));
                    out.insert(o, cells);
                }
            }
            OpParams::StringIndexer { column, categories } => {
                for &o in rows {
                    let row = &fetched[input_id][&o];
                    let mut cells = row.clone();
                    cells.push(string_index_cell(&row[*column], categories));
                    out.insert(o, cells);
                }
            }
            OpParams::DeriveColumns { sources, derived } => {
                for &o in rows {
                    let row = &fetched[input_id][&o];
                    let mut cells = row.clone();
                    let srcs: Vec<&CellValue> = sources.iter().map(|&c| &row[c]).collect();
                    cells.extend(derived.iter().map(|(_, f)| derive_cell(*f, &srcs)));
                    out.insert(o, cells);
                }
            }
            OpParams::Filter { .. } | OpParams::Sample { .. } => {
                // Masked rows pass through unchanged.
                for &o in rows {
                    let src = source_of(o, &tensors[0])?.ok_or_else(|| {
                        Error::Query(format!("output row {o} has no provenance leaf"))
                    })?;
                    out.insert(o, fetched[input_id][&src].clone());
                }
            }
            OpParams::Oversample { strategy, seed, .. } => {
                let n = input_info.row_count as RowIdx;
                for &o in rows {
                    let src = source_of(o, &tensors[0])?.ok_or_else(|| {
                        Error::Query(format!("output row {o} has no provenance leaf"))
                    })?;
                    let source = &fetched[input_id][&src];
                    let cells = if o < n {
                        source.clone()
                    } else {
                        oversampled_row(source, *strategy, *seed, o as usize)
                    };
                    out.insert(o, cells);
                }
            }
            OpParams::Join { keys, kind: _ } => {
                let right_id = op.inputs[1].as_str();
                let right_info = self.dataset_info(right_id)?;
                let right_rest = join_rest_columns(&right_info.schema, keys);
                let left_len = input_info.schema.len();
                for &o in rows {
                    let mut lrow: Option<&Vec<CellValue>> = None;
                    let mut rrow: Option<&Vec<CellValue>> = None;
                    for t in tensors {
                        if let Some(leaf) = t.slice(t.output_dim(), [o])?.first() {
                            if t.order() == 3 {
                                lrow = fetched.get(input_id).and_then(|m| m.get(&leaf[1]));
                                rrow = fetched.get(right_id).and_then(|m| m.get(&leaf[2]));
                            } else if t.dims()[1].dataset == input_id {
                                lrow = fetched.get(input_id).and_then(|m| m.get(&leaf[1]));
                            } else {
                                rrow = fetched.get(right_id).and_then(|m| m.get(&leaf[1]));
                            }
                        }
                    }
                    if lrow.is_none() && rrow.is_none() {
                        return Err(Error::Query(format!(
                            "output row {o} has no provenance leaf"
                        )));
                    }
                    out.insert(
                        o,
                        join_stitch_row(
                            left_len,
                            &right_rest,
                            keys,
                            lrow.map(|r| &r[..]),
                            rrow.map(|r| &r[..]),
                        ),
                    );
                }
            }
            OpParams::Append => {
                let right_id = op.inputs[1].as_str();
                let right_info = self.dataset_info(right_id)?;
                let out_info = self.dataset_info(&op.output)?;
                let out_len = out_info.schema.len();
                let right_positions = append_right_positions(&input_info.schema, &right_info.schema);
                let n = input_info.row_count as RowIdx;
                for &o in rows {
                    let cells = if o < n {
                        let row = &fetched[input_id][&o];
                        let mut c = row.clone();
                        c.resize(out_len, CellValue::Null);
                        c
                    } else {
                        let row = &fetched[right_id][&(o - n)];
                        append_right_row(out_len, &right_positions, row)
                    };
                    out.insert(o, cells);
                }
            }
        }
        Ok(out)
    }

    /// Accounted bytes of tensors and retained datasets.
    pub fn memory_report(&self) -> MemoryReport {
        let mut per_op = BTreeMap::new();
        for op in &self.ops {
            let bytes: u64 = self.tensors[&op.id].iter().map(|t| t.memory_bytes()).sum();
            per_op.insert(op.id.clone(), bytes);
        }
        let tensor_total: u64 = per_op.values().sum();
        let mut per_ds = BTreeMap::new();
        for (id, info) in &self.datasets {
            if let Some(d) = &info.value {
                per_ds.insert(id.clone(), dataset_memory_bytes(d));
            }
        }
        let ds_total: u64 = per_ds.values().sum();
        MemoryReport {
            per_op_tensor_bytes: per_op,
            tensor_bytes_total: tensor_total,
            materialized_dataset_bytes: per_ds,
            materialized_bytes_total: ds_total,
            total_bytes: tensor_total + ds_total,
            accounting: format!(
                "tensors: {MEM_ACCOUNTING}; datasets: 64B + 16B per row + 8B per cell + text payload"
            ),
        }
    }
}

/// Accounted in-memory size of a dataset: 64B + 16B per row + 8B per cell
/// plus text payload bytes.
pub fn dataset_memory_bytes(d: &Dataset) -> u64 {
    let mut bytes = 64u64 + 16 * d.row_count() as u64;
    for row in d.rows() {
        bytes += 8 * row.len() as u64;
        for cell in row {
            if let CellValue::Text(s) = cell {
                bytes += s.len() as u64;
            }
        }
    }
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_csv_reader;
    use crate::ops::{self, TransformFn};
    use crate::predicate::Predicate;

    fn source() -> Dataset {
        load_csv_reader(
            "src",
            "a,b\n1,10\n,20\n3,30\n4,40\n5,50\n".as_bytes(),
            true,
            None,
        )
        .unwrap()
    }

    fn linear_pipeline(contextual_second: bool) -> Pipeline {
        let mut p = Pipeline::new("t", false);
        let d0 = source();
        p.register_source(d0.clone()).unwrap();
        let r1 = ops::filter(&d0, "d1", "op1", Predicate::parse("b >= 20").unwrap()).unwrap();
        let d1 = r1.output.clone();
        p.register(r1).unwrap();
        let func = if contextual_second {
            TransformFn::ImputeMean
        } else {
            TransformFn::ImputeConstant(CellValue::Int(0))
        };
        let r2 = ops::transform(&d1, "d2", "op2", func, &[0]).unwrap();
        let d2 = r2.output.clone();
        p.register(r2).unwrap();
        let r3 = ops::drop_columns(&d2, "d3", "op3", &[1]).unwrap();
        p.register(r3).unwrap();
        p
    }

    #[test]
    fn endpoints_only_materialized_without_contextual_ops() {
        let p = linear_pipeline(false);
        assert!(p.materialized("src").is_some());
        assert!(p.materialized("d3").is_some());
        assert!(p.materialized("d1").is_none());
        assert!(p.materialized("d2").is_none());
        p.check_materialization_invariant().unwrap();
    }

    #[test]
    fn contextual_op_keeps_its_input() {
        let p = linear_pipeline(true);
        assert!(p.materialized("d1").is_some());
        assert!(p.materialized("d2").is_none());
        p.check_materialization_invariant().unwrap();
    }

    #[test]
    fn unknown_input_and_duplicate_ids_rejected() {
        let mut p = Pipeline::new("t", false);
        let d0 = source();
        p.register_source(d0.clone()).unwrap();
        let ghost = load_csv_reader("ghost", "a\n1\n".as_bytes(), true, None).unwrap();
        let r = ops::drop_columns(&ghost, "x", "op", &[0]);
        // drop of the only column fails; build a valid capture on ghost.
        assert!(r.is_err());
        let ghost2 = load_csv_reader("ghost", "a,b\n1,2\n".as_bytes(), true, None).unwrap();
        let r = ops::drop_columns(&ghost2, "x", "op", &[0]).unwrap();
        assert!(matches!(p.register(r), Err(Error::UnknownDataset(_))));

        let r1 = ops::drop_columns(&d0, "d1", "op1", &[1]).unwrap();
        p.register(r1).unwrap();
        let r_dup = ops::drop_columns(&d0, "d2", "op1", &[1]).unwrap();
        assert!(matches!(p.register(r_dup), Err(Error::DuplicateOpId(_))));
    }

    #[test]
    fn diamond_dataflow_rejected_at_registration() {
        let mut p = Pipeline::new("t", false);
        let d0 = source();
        p.register_source(d0.clone()).unwrap();
        let r1 = ops::filter(&d0, "left", "op1", Predicate::parse("b >= 20").unwrap()).unwrap();
        let left = r1.output.clone();
        p.register(r1).unwrap();
        let r2 = ops::drop_columns(&d0, "right", "op2", &[1]).unwrap();
        let right = r2.output.clone();
        p.register(r2).unwrap();
        let rj = ops::join(&left, &right, "joined", "op3", &[(0, 0)], ops::JoinKind::Inner).unwrap();
        assert!(matches!(p.register(rj), Err(Error::DiamondDataflow { .. })));
    }

    #[test]
    fn dataflow_path_structure() {
        let p = linear_pipeline(false);
        let path = p.dataflow_path("src", "d3").unwrap();
        assert_eq!(path.len(), 3);
        assert_eq!(path[0].op_id, "op1");
        assert_eq!(path[0].via_input, "src");
        assert_eq!(path[2].op_id, "op3");
        assert!(p.dataflow_path("src", "src").is_err());
        assert!(matches!(
            p.dataflow_path("d3", "src"),
            Err(Error::NoPath { .. })
        ));
    }

    #[test]
    fn path_through_join_selects_entering_side() {
        let mut p = Pipeline::new("t", false);
        let l = load_csv_reader("l", "K,V\n1,a\n2,b\n".as_bytes(), true, None).unwrap();
        let r = load_csv_reader("r", "K,W\n1,x\n2,y\n".as_bytes(), true, None).unwrap();
        p.register_source(l.clone()).unwrap();
        p.register_source(r.clone()).unwrap();
        let rj = ops::join(&l, &r, "j", "opj", &[(0, 0)], ops::JoinKind::Inner).unwrap();
        p.register(rj).unwrap();
        let path = p.dataflow_path("r", "j").unwrap();
        assert_eq!(path.len(), 1);
        let hops = p.hop_tensors(&path[0], false);
        assert_eq!(hops.len(), 1);
        let (t, in_dim, out_dim) = hops[0];
        assert_eq!(t.order(), 3);
        assert_eq!(in_dim, 2);
        assert_eq!(out_dim, 0);
    }

    #[test]
    fn recompute_localized_intermediate_rows() {
        let p = linear_pipeline(false);
        // d1 is filter output (rows b>=20 of src: src rows 1..4).
        let got = p
            .recompute_records("d1", &BTreeSet::from([0, 3]))
            .unwrap();
        assert_eq!(got.rows[&0], vec![CellValue::Null, CellValue::Int(20)]);
        assert_eq!(got.rows[&3], vec![CellValue::Int(5), CellValue::Int(50)]);
        // d2 imputes constant 0 into column a.
        let got = p.recompute_records("d2", &BTreeSet::from([0])).unwrap();
        assert_eq!(got.rows[&0], vec![CellValue::Int(0), CellValue::Int(20)]);
    }

    #[test]
    fn recompute_contextual_uses_materialized_input() {
        let p = linear_pipeline(true);
        // d2's op is impute-mean over d1 column a = {null,3,4,5}: mean 4.
        let got = p.recompute_records("d2", &BTreeSet::from([0])).unwrap();
        assert_eq!(got.rows[&0], vec![CellValue::Int(4), CellValue::Int(20)]);
    }

    #[test]
    fn recompute_empty_request() {
        let p = linear_pipeline(false);
        let got = p.recompute_records("d1", &BTreeSet::new()).unwrap();
        assert!(got.rows.is_empty());
        assert!(p
            .recompute_records("d1", &BTreeSet::from([99]))
            .is_err());
    }

    #[test]
    fn memory_report_totals() {
        let p = linear_pipeline(false);
        let rep = p.memory_report();
        assert_eq!(rep.per_op_tensor_bytes.len(), 3);
        assert_eq!(
            rep.total_bytes,
            rep.tensor_bytes_total + rep.materialized_bytes_total
        );
        // Identity-tensor ops cost only the fixed overhead.
        assert_eq!(rep.per_op_tensor_bytes["op2"], crate::tensor::MEM_STRUCT_OVERHEAD);
        let empty = Pipeline::new("e", false);
        let rep = empty.memory_report();
        assert_eq!(rep.total_bytes, 0);
    }
}
