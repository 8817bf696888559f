//! The provenance query engine: record-level and attribute-level lineage in
//! both directions, how-provenance traces, the all-transformations listing,
//! co-contributory and co-dependency tracing, and whole-dataset mappings.
//!
//! Record queries chain per-hop slice/project over the dataflow path; the
//! attribute variants thread positions through each hop's bitset mapping,
//! pruning when an attribute was dropped or does not originate from the
//! traversed side. Under set semantics, index sets are expanded to their
//! duplicate classes before each hop and the canonicalized tensors are
//! consulted.

use std::collections::BTreeSet;

use crate::dataset::DatasetId;
use crate::error::{Error, Result};
use crate::graph::{PathHop, Pipeline};
use crate::ops::{OpCategory, OpDescriptor};
use crate::tensor::{compose_on, union, ProvTensor, RowIdx};

/// One data record, identified by dataset and row index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordRef {
    pub dataset: DatasetId,
    pub row: RowIdx,
}

impl RecordRef {
    pub fn new(dataset: impl Into<DatasetId>, row: RowIdx) -> RecordRef {
        RecordRef {
            dataset: dataset.into(),
            row,
        }
    }
}

/// One attribute value of one data record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRef {
    pub record: RecordRef,
    pub attr: usize,
}

impl CellRef {
    pub fn new(dataset: impl Into<DatasetId>, row: RowIdx, attr: usize) -> CellRef {
        CellRef {
            record: RecordRef::new(dataset, row),
            attr,
        }
    }
}

/// One hop of a how-provenance trace: the operation and the record sets
/// entering and leaving it along the traced lineage, oriented with the
/// dataflow. Attribute variants also carry the mapped positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HowStep {
    pub op_id: String,
    pub op_name: String,
    pub category: OpCategory,
    pub inputs: Vec<RecordRef>,
    pub outputs: Vec<RecordRef>,
    pub input_attrs: Option<BTreeSet<usize>>,
    pub output_attrs: Option<BTreeSet<usize>>,
}

/// Direction of a lineage query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Read-only query engine over a frozen pipeline.
pub struct QueryEngine<'a> {
    pipeline: &'a Pipeline,
    set_semantics: bool,
}

impl<'a> QueryEngine<'a> {
    pub fn new(pipeline: &'a Pipeline) -> QueryEngine<'a> {
        QueryEngine {
            pipeline,
            set_semantics: false,
        }
    }

    /// Enable set semantics for this engine's queries: seeds and
    /// intermediate sets expand to their duplicate classes and the
    /// canonicalized tensors are consulted.
    pub fn with_set_semantics(pipeline: &'a Pipeline, on: bool) -> QueryEngine<'a> {
        QueryEngine {
            pipeline,
            set_semantics: on,
        }
    }

    fn check_record(&self, r: &RecordRef) -> Result<()> {
        let info = self.pipeline.dataset_info(&r.dataset)?;
        if r.row as usize >= info.row_count {
            return Err(Error::RowOutOfRange {
                dataset: r.dataset.clone(),
                index: r.row as usize,
                rows: info.row_count,
            });
        }
        Ok(())
    }

    fn check_cell(&self, c: &CellRef) -> Result<()> {
        self.check_record(&c.record)?;
        let info = self.pipeline.dataset_info(&c.record.dataset)?;
        if c.attr >= info.schema.len() {
            return Err(Error::AttrOutOfRange {
                pos: c.attr,
                len: info.schema.len(),
            });
        }
        Ok(())
    }

    fn expand(&self, dataset: &str, rows: BTreeSet<RowIdx>) -> BTreeSet<RowIdx> {
        if !self.set_semantics {
            return rows;
        }
        match self.pipeline.dup_classes(dataset) {
            Some(classes) => classes.expand(&rows),
            None => rows,
        }
    }

    fn forward_hop(&self, hop: &PathHop, rows: BTreeSet<RowIdx>) -> Result<BTreeSet<RowIdx>> {
        let rows = self.expand(&hop.via_input, rows);
        let mut out = BTreeSet::new();
        for (t, in_dim, out_dim) in self.pipeline.hop_tensors(hop, self.set_semantics) {
            out.extend(t.slice_project(in_dim, rows.iter().copied(), out_dim)?);
        }
        Ok(out)
    }

    fn backward_hop(&self, hop: &PathHop, op: &OpDescriptor, rows: BTreeSet<RowIdx>) -> Result<BTreeSet<RowIdx>> {
        let rows = self.expand(&op.output, rows);
        let mut out = BTreeSet::new();
        for (t, in_dim, out_dim) in self.pipeline.hop_tensors(hop, self.set_semantics) {
            out.extend(t.slice_project(out_dim, rows.iter().copied(), in_dim)?);
        }
        Ok(out)
    }

    /// Contributors on every input side of an op for the given output rows.
    fn all_side_contributors(&self, op: &OpDescriptor, rows: &BTreeSet<RowIdx>) -> Result<Vec<RecordRef>> {
        let tensors = if self.set_semantics {
            self.pipeline
                .op_tensors_canonical(&op.id)
                .or_else(|| self.pipeline.op_tensors(&op.id))
        } else {
            self.pipeline.op_tensors(&op.id)
        }
        .unwrap_or(&[]);
        let mut refs = BTreeSet::new();
        for t in tensors {
            let out_dim = t.output_dim();
            for leaf in t.slice(out_dim, rows.iter().copied())? {
                for (d, role) in t.dims().iter().enumerate() {
                    if d != out_dim {
                        refs.insert(RecordRef::new(role.dataset.clone(), leaf[d]));
                    }
                }
            }
        }
        Ok(refs.into_iter().collect())
    }

    /// Q1: records of `dst` derived from `src`.
    pub fn forward_records(&self, src: &RecordRef, dst: &str) -> Result<BTreeSet<RecordRef>> {
        Ok(self
            .forward_trace(src, dst, None, false)?
            .hits
            .into_iter()
            .map(|r| RecordRef::new(dst, r))
            .collect())
    }

    /// Q2: records of `src` that contributed to `dst_rec`.
    pub fn backward_records(&self, dst_rec: &RecordRef, src: &str) -> Result<BTreeSet<RecordRef>> {
        Ok(self
            .backward_trace(dst_rec, src, None, false)?
            .hits
            .into_iter()
            .map(|r| RecordRef::new(src, r))
            .collect())
    }

    /// Q3: attribute values of `dst` derived from the given cell.
    pub fn forward_attr(&self, src: &CellRef, dst: &str) -> Result<BTreeSet<CellRef>> {
        self.check_cell(src)?;
        let out = self.forward_trace(&src.record, dst, Some(BTreeSet::from([src.attr])), false)?;
        Ok(cells(dst, &out))
    }

    /// Q4: attribute values that contributed to the given cell.
    pub fn backward_attr(&self, dst_cell: &CellRef, src: &str) -> Result<BTreeSet<CellRef>> {
        self.check_cell(dst_cell)?;
        let out =
            self.backward_trace(&dst_cell.record, src, Some(BTreeSet::from([dst_cell.attr])), false)?;
        Ok(cells(src, &out))
    }

    /// Q7/Q8: attribute-level lineage with the operations traversed.
    pub fn how_attr(
        &self,
        cell: &CellRef,
        other: &str,
        direction: Direction,
    ) -> Result<(BTreeSet<CellRef>, Vec<HowStep>)> {
        self.check_cell(cell)?;
        let attrs = Some(BTreeSet::from([cell.attr]));
        let out = match direction {
            Direction::Forward => self.forward_trace(&cell.record, other, attrs, true)?,
            Direction::Backward => self.backward_trace(&cell.record, other, attrs, true)?,
        };
        let hits = cells(other, &out);
        Ok((hits, out.steps))
    }

    /// Q5/Q6 (and Q7/Q8 with an attribute): lineage plus the operations
    /// traversed.
    pub fn how_records(
        &self,
        rec: &RecordRef,
        other: &str,
        direction: Direction,
        attr: Option<usize>,
    ) -> Result<(BTreeSet<RecordRef>, Vec<HowStep>)> {
        if let Some(a) = attr {
            self.check_cell(&CellRef {
                record: rec.clone(),
                attr: a,
            })?;
        }
        let attrs = attr.map(|a| BTreeSet::from([a]));
        let out = match direction {
            Direction::Forward => self.forward_trace(rec, other, attrs, true)?,
            Direction::Backward => self.backward_trace(rec, other, attrs, true)?,
        };
        let hits = out
            .hits
            .iter()
            .map(|&r| RecordRef::new(other, r))
            .collect();
        Ok((hits, out.steps))
    }

    /// Q9: every operation on a dataflow path from the sources to `d`, in
    /// topological (execution) order. Depends only on the graph structure.
    pub fn all_transformations(&self, d: &str) -> Result<Vec<&'a OpDescriptor>> {
        self.pipeline.dataset_info(d)?;
        let upstream = self.pipeline.ancestors(d);
        Ok(self
            .pipeline
            .ops()
            .iter()
            .filter(|op| upstream.contains(&op.output))
            .collect())
    }

    /// Q10: records of `d2` combined with `d1_rec` by the nearest common
    /// combining operation. Returns the hits, the op chosen, and any other
    /// candidate combining ops (flagged, not traced).
    pub fn co_contributory(
        &self,
        d1_rec: &RecordRef,
        d2: &str,
    ) -> Result<(BTreeSet<RecordRef>, String, Vec<String>)> {
        self.check_record(d1_rec)?;
        self.pipeline.dataset_info(d2)?;
        let d1 = d1_rec.dataset.as_str();

        // Candidate joins: d1 reaches one input side, d2 reaches the other.
        let mut candidates: Vec<(usize, usize, usize)> = Vec::new(); // (dist, op idx, d1 side)
        for (idx, op) in self.pipeline.ops().iter().enumerate() {
            if op.category != OpCategory::Join {
                continue;
            }
            for side in 0..2 {
                let in_a = op.inputs[side].as_str();
                let in_b = op.inputs[1 - side].as_str();
                let dist = if in_a == d1 {
                    Some(0)
                } else {
                    self.pipeline.dataflow_path(d1, in_a).ok().map(|p| p.len())
                };
                let reaches_b = in_b == d2 || self.pipeline.dataflow_path(d2, in_b).is_ok();
                if let (Some(dist), true) = (dist, reaches_b) {
                    candidates.push((dist, idx, side));
                }
            }
        }
        candidates.sort_unstable();
        let Some(&(_, op_idx, side)) = candidates.first() else {
            return Err(Error::NoCombiningOp {
                d1: d1.to_string(),
                d2: d2.to_string(),
            });
        };
        let others: Vec<String> = candidates[1..]
            .iter()
            .map(|&(_, i, _)| self.pipeline.ops()[i].id.clone())
            .collect();
        let op = &self.pipeline.ops()[op_idx];
        let in_a = op.inputs[side].as_str();
        let in_b = op.inputs[1 - side].as_str();

        // Trace the record to the combining op's input on its side.
        let rows_a = if in_a == d1 {
            self.expand(d1, BTreeSet::from([d1_rec.row]))
        } else {
            self.forward_trace(d1_rec, in_a, None, false)?.hits
        };
        // Pair through the order-3 tensor: slice this side, project the other.
        let tensors = if self.set_semantics {
            self.pipeline
                .op_tensors_canonical(&op.id)
                .or_else(|| self.pipeline.op_tensors(&op.id))
        } else {
            self.pipeline.op_tensors(&op.id)
        }
        .unwrap_or(&[]);
        let mut rows_b = BTreeSet::new();
        let rows_a = self.expand(in_a, rows_a);
        for t in tensors {
            if t.order() != 3 {
                continue;
            }
            let dim_a = 1 + side;
            let dim_b = 1 + (1 - side);
            rows_b.extend(t.slice_project(dim_a, rows_a.iter().copied(), dim_b)?);
        }
        // Back from the other input side to d2.
        let hits = if in_b == d2 {
            rows_b
        } else {
            self.backward_rows(in_b, rows_b, d2)?
        };
        Ok((
            hits.into_iter().map(|r| RecordRef::new(d2, r)).collect(),
            op.id.clone(),
            others,
        ))
    }

    /// Q11: records of `d3` lineage-dependent on the `d1` records that
    /// generated `d2_rec`.
    pub fn co_dependency(
        &self,
        d2_rec: &RecordRef,
        d1: &str,
        d3: &str,
    ) -> Result<BTreeSet<RecordRef>> {
        let ancestors = self.backward_trace(d2_rec, d1, None, false)?.hits;
        let mut out = BTreeSet::new();
        if d3 == d1 {
            return Ok(ancestors.into_iter().map(|r| RecordRef::new(d3, r)).collect());
        }
        let path = self.pipeline.dataflow_path(d1, d3)?;
        let mut rows = ancestors;
        for hop in &path {
            rows = self.forward_hop(hop, rows)?;
            if rows.is_empty() {
                break;
            }
        }
        out.extend(rows.into_iter().map(|r| RecordRef::new(d3, r)));
        Ok(out)
    }

    /// Whole-dataset mapping: fold the tensor chain from `src` to `dst` by
    /// Einstein-summation-style contraction into one order-2 binary tensor
    /// relating src rows to dst rows.
    pub fn whole_dataset_mapping(&self, src: &str, dst: &str) -> Result<ProvTensor> {
        let path = self.pipeline.dataflow_path(src, dst)?;
        let mut acc: Option<ProvTensor> = None;
        for hop in &path {
            let parts = self.pipeline.hop_tensors(hop, false);
            let mut merged: Option<ProvTensor> = None;
            for (t, in_dim, _) in parts {
                let piece = match &acc {
                    None => t.project_to_dims(in_dim)?,
                    Some(a) => compose_on(a, t, in_dim)?.project_to_dims(1)?,
                };
                merged = Some(match merged {
                    None => piece,
                    Some(m) => union(&m, &piece)?,
                });
            }
            acc = Some(merged.ok_or_else(|| Error::NoPath {
                src: src.to_string(),
                dst: dst.to_string(),
            })?);
        }
        acc.ok_or_else(|| Error::NoPath {
            src: src.to_string(),
            dst: dst.to_string(),
        })
    }

    /// Set-based backward traversal from rows of `from` to `src`.
    fn backward_rows(&self, from: &str, rows: BTreeSet<RowIdx>, src: &str) -> Result<BTreeSet<RowIdx>> {
        let path = self.pipeline.dataflow_path(src, from)?;
        let mut rows = rows;
        for hop in path.iter().rev() {
            let op = self
                .pipeline
                .op(&hop.op_id)
                .ok_or_else(|| Error::Query(format!("unknown op '{}'", hop.op_id)))?;
            rows = self.backward_hop(hop, op, rows)?;
            if rows.is_empty() {
                break;
            }
        }
        Ok(rows)
    }

    fn forward_trace(
        &self,
        src: &RecordRef,
        dst: &str,
        attrs: Option<BTreeSet<usize>>,
        want_steps: bool,
    ) -> Result<Trace> {
        self.check_record(src)?;
        let path = self.pipeline.dataflow_path(&src.dataset, dst)?;
        let mut rows = BTreeSet::from([src.row]);
        let mut attrs = attrs;
        let mut steps = Vec::new();
        for hop in &path {
            let op = self
                .pipeline
                .op(&hop.op_id)
                .ok_or_else(|| Error::Query(format!("unknown op '{}'", hop.op_id)))?;
            let before = rows.clone();
            rows = self.forward_hop(hop, rows)?;
            if let Some(a) = attrs {
                let mapped = map_attrs(op, &hop.via_input, &a, Direction::Forward)?;
                if want_steps {
                    steps.push(make_step(op, &hop.via_input, &before, &rows, Some(&a), Some(&mapped)));
                }
                if mapped.is_empty() {
                    return Ok(Trace {
                        hits: BTreeSet::new(),
                        steps,
                        attrs: Some(BTreeSet::new()),
                    });
                }
                attrs = Some(mapped);
            } else if want_steps {
                steps.push(make_step(op, &hop.via_input, &before, &rows, None, None));
            }
            if rows.is_empty() {
                break;
            }
        }
        Ok(Trace {
            hits: rows,
            steps,
            attrs,
        })
    }

    fn backward_trace(
        &self,
        dst_rec: &RecordRef,
        src: &str,
        attrs: Option<BTreeSet<usize>>,
        want_steps: bool,
    ) -> Result<Trace> {
        self.check_record(dst_rec)?;
        let path = self.pipeline.dataflow_path(src, &dst_rec.dataset)?;
        let mut rows = BTreeSet::from([dst_rec.row]);
        let mut attrs = attrs;
        let mut steps = Vec::new();
        for hop in path.iter().rev() {
            let op = self
                .pipeline
                .op(&hop.op_id)
                .ok_or_else(|| Error::Query(format!("unknown op '{}'", hop.op_id)))?;
            let before = rows.clone();
            let next = self.backward_hop(hop, op, rows)?;
            if want_steps {
                // Contributions from every input side are collected; only
                // the traversed side propagates further.
                let inputs = self.all_side_contributors(op, &before)?;
                let outputs: Vec<RecordRef> = before
                    .iter()
                    .map(|&r| RecordRef::new(op.output.clone(), r))
                    .collect();
                let (in_attrs, out_attrs) = match &attrs {
                    Some(a) => {
                        let mapped = map_attrs(op, &hop.via_input, a, Direction::Backward)?;
                        (Some(mapped), Some(a.clone()))
                    }
                    None => (None, None),
                };
                steps.push(HowStep {
                    op_id: op.id.clone(),
                    op_name: op.name.clone(),
                    category: op.category,
                    inputs,
                    outputs,
                    input_attrs: in_attrs,
                    output_attrs: out_attrs,
                });
            }
            if let Some(a) = attrs {
                let mapped = map_attrs(op, &hop.via_input, &a, Direction::Backward)?;
                if mapped.is_empty() {
                    return Ok(Trace {
                        hits: BTreeSet::new(),
                        steps,
                        attrs: Some(BTreeSet::new()),
                    });
                }
                attrs = Some(mapped);
            }
            rows = next;
            if rows.is_empty() {
                break;
            }
        }
        Ok(Trace {
            hits: rows,
            steps,
            attrs,
        })
    }
}

struct Trace {
    hits: BTreeSet<RowIdx>,
    steps: Vec<HowStep>,
    /// Attribute positions surviving the traversal, for attribute queries.
    attrs: Option<BTreeSet<usize>>,
}

/// Cross product of the hit records with the surviving attribute positions.
fn cells(dataset: &str, trace: &Trace) -> BTreeSet<CellRef> {
    let Some(attrs) = &trace.attrs else {
        return BTreeSet::new();
    };
    let mut out = BTreeSet::new();
    for &row in &trace.hits {
        for &attr in attrs {
            out.insert(CellRef::new(dataset, row, attr));
        }
    }
    out
}

/// Positional mapping of one hop, per operation category and direction.
fn map_attrs(
    op: &OpDescriptor,
    via_input: &str,
    attrs: &BTreeSet<usize>,
    direction: Direction,
) -> Result<BTreeSet<usize>> {
    let annot = match op.category {
        OpCategory::DataTransformation
        | OpCategory::HorizontalReduction
        | OpCategory::HorizontalAugmentation => {
            // Positional identity.
            return Ok(attrs.clone());
        }
        OpCategory::VerticalReduction | OpCategory::VerticalAugmentation => &op.annots[0],
        OpCategory::Join | OpCategory::Append => {
            let side = op
                .inputs
                .iter()
                .position(|i| i == via_input)
                .ok_or_else(|| Error::Query(format!(
                    "'{via_input}' is not an input of op '{}'",
                    op.id
                )))?;
            &op.annots[side]
        }
    };
    let mut out = BTreeSet::new();
    for &a in attrs {
        let mapped = match direction {
            Direction::Forward => annot.forward(a)?,
            Direction::Backward => annot.backward(a)?,
        };
        out.extend(mapped);
    }
    Ok(out)
}

fn make_step(
    op: &OpDescriptor,
    via_input: &str,
    before: &BTreeSet<RowIdx>,
    after: &BTreeSet<RowIdx>,
    in_attrs: Option<&BTreeSet<usize>>,
    out_attrs: Option<&BTreeSet<usize>>,
) -> HowStep {
    HowStep {
        op_id: op.id.clone(),
        op_name: op.name.clone(),
        category: op.category,
        inputs: before
            .iter()
            .map(|&r| RecordRef::new(via_input, r))
            .collect(),
        outputs: after
            .iter()
            .map(|&r| RecordRef::new(op.output.clone(), r))
            .collect(),
        input_attrs: in_attrs.cloned(),
        output_attrs: out_attrs.cloned(),
    }
}
