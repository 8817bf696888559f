//! Sparse binary provenance tensors.
//!
//! One tensor records the provenance of one captured operation (two for
//! append). A non-zero cell is a leaf tuple holding one row index per
//! dimension; leaves are stored once and reachable from a per-dimension
//! index, so a lineage hop costs a number of leaf accesses proportional to
//! the result, not to the tensor.
//!
//! Operations whose provenance is a (shifted) identity relation are kept in
//! a virtual diagonal form that records only the row count and offset. It
//! answers slice/project like any other tensor; `nnz` reports the logical
//! count while `memory_bytes` reports the O(1) storage.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetId};
use crate::error::{Error, Result};

pub type RowIdx = u32;

/// A non-zero cell: one row index per dimension.
pub type LeafTuple = Vec<RowIdx>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Input,
    Output,
}

/// Which dataset a tensor dimension ranges over, and on which side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionRole {
    pub dataset: DatasetId,
    pub polarity: Polarity,
}

impl DimensionRole {
    pub fn output(dataset: impl Into<DatasetId>) -> Self {
        DimensionRole {
            dataset: dataset.into(),
            polarity: Polarity::Output,
        }
    }

    pub fn input(dataset: impl Into<DatasetId>) -> Self {
        DimensionRole {
            dataset: dataset.into(),
            polarity: Polarity::Input,
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    /// Leaf j = (offset + j, j) for j in 0..n; dimension 0 is the output.
    Diagonal { offset: RowIdx, n: RowIdx },
    Explicit(Explicit),
}

#[derive(Debug, Clone)]
struct Explicit {
    /// Flat leaf storage with stride = order; leaf id = position.
    leaves: Vec<RowIdx>,
    /// Per dimension: row index -> ids of the leaves containing it.
    index: Vec<HashMap<RowIdx, Vec<u32>>>,
}

impl Explicit {
    fn from_leaves(order: usize, tuples: impl IntoIterator<Item = LeafTuple>) -> Result<Explicit> {
        let mut leaves = Vec::new();
        let mut count = 0u32;
        let mut index: Vec<HashMap<RowIdx, Vec<u32>>> = vec![HashMap::new(); order];
        for tuple in tuples {
            if tuple.len() != order {
                return Err(Error::InvalidTensor(format!(
                    "leaf of length {} in an order-{order} tensor",
                    tuple.len()
                )));
            }
            let id = count;
            count = count.checked_add(1).ok_or_else(|| {
                Error::InvalidTensor("leaf count exceeds u32 range".to_string())
            })?;
            for (d, &row) in tuple.iter().enumerate() {
                index[d].entry(row).or_default().push(id);
            }
            leaves.extend_from_slice(&tuple);
        }
        Ok(Explicit { leaves, index })
    }

    fn leaf(&self, order: usize, id: u32) -> &[RowIdx] {
        let start = id as usize * order;
        &self.leaves[start..start + order]
    }

    fn nnz(&self, order: usize) -> u64 {
        if order == 0 {
            0
        } else {
            (self.leaves.len() / order) as u64
        }
    }
}

/// Sparse binary tensor recording the provenance of one operation.
#[derive(Debug)]
pub struct ProvTensor {
    dims: Vec<DimensionRole>,
    repr: Repr,
    /// Leaf references touched by slicing since the last reset.
    slice_accesses: AtomicU64,
}

impl Clone for ProvTensor {
    fn clone(&self) -> Self {
        ProvTensor {
            dims: self.dims.clone(),
            repr: self.repr.clone(),
            slice_accesses: AtomicU64::new(0),
        }
    }
}

impl PartialEq for ProvTensor {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.leaf_set() == other.leaf_set()
    }
}

/// Fixed per-structure overhead of the documented accounting formula.
pub const MEM_STRUCT_OVERHEAD: u64 = 64;
/// Accounted bytes per leaf tuple entry.
pub const MEM_PER_TUPLE_ENTRY: u64 = 8;
/// Accounted bytes per per-dimension index entry (one indexed row).
pub const MEM_PER_INDEX_ENTRY: u64 = 16;

/// Human-readable statement of the accounting formula, echoed in reports.
pub const MEM_ACCOUNTING: &str =
    "8B per leaf tuple entry + 16B per indexed row per dimension + 64B per tensor; \
     virtual diagonal tensors account 64B";

impl ProvTensor {
    fn new(dims: Vec<DimensionRole>, repr: Repr) -> Result<ProvTensor> {
        if dims.len() < 2 {
            return Err(Error::InvalidTensor(format!(
                "tensor order must be at least 2, got {}",
                dims.len()
            )));
        }
        let outputs = dims.iter().filter(|d| d.polarity == Polarity::Output).count();
        if outputs != 1 {
            return Err(Error::InvalidTensor(format!(
                "exactly one dimension must be the output, got {outputs}"
            )));
        }
        Ok(ProvTensor {
            dims,
            repr,
            slice_accesses: AtomicU64::new(0),
        })
    }

    /// Identity tensor for data transformation, vertical reduction, and
    /// vertical augmentation: leaf (i, i) for i in 0..n, stored virtually.
    pub fn identity(dataset_in: &str, dataset_out: &str, n: RowIdx) -> ProvTensor {
        ProvTensor::new(
            vec![
                DimensionRole::output(dataset_out),
                DimensionRole::input(dataset_in),
            ],
            Repr::Diagonal { offset: 0, n },
        )
        .expect("valid identity dims")
    }

    /// Masking tensor for horizontal reduction: leaf (o, kept[o]).
    pub fn masking(dataset_in: &str, dataset_out: &str, kept: &[RowIdx]) -> Result<ProvTensor> {
        for w in kept.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidTensor(format!(
                    "kept indices must be strictly increasing, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let tuples = kept
            .iter()
            .enumerate()
            .map(|(o, &i)| vec![o as RowIdx, i]);
        ProvTensor::new(
            vec![
                DimensionRole::output(dataset_out),
                DimensionRole::input(dataset_in),
            ],
            Repr::Explicit(Explicit::from_leaves(2, tuples)?),
        )
    }

    /// Order-3 join tensor: leaf (o, l, r) when output row o combines left
    /// row l with right row r. Bag semantics: one triple per output row.
    pub fn join(
        out: &str,
        left: &str,
        right: &str,
        triples: impl IntoIterator<Item = (RowIdx, RowIdx, RowIdx)>,
    ) -> Result<ProvTensor> {
        let mut seen = HashSet::new();
        let mut tuples = Vec::new();
        for (o, l, r) in triples {
            if !seen.insert(o) {
                return Err(Error::InvalidTensor(format!(
                    "duplicate output index {o} across join triples"
                )));
            }
            tuples.push(vec![o, l, r]);
        }
        ProvTensor::new(
            vec![
                DimensionRole::output(out),
                DimensionRole::input(left),
                DimensionRole::input(right),
            ],
            Repr::Explicit(Explicit::from_leaves(3, tuples)?),
        )
    }

    /// The two block-diagonal tensors of an append: (out x left) with leaves
    /// (i, i) for i < n, and (out x right) with leaves (n + j, j) for j < m.
    pub fn append(out: &str, left: &str, right: &str, n: RowIdx, m: RowIdx) -> (ProvTensor, ProvTensor) {
        let left_t = ProvTensor::new(
            vec![DimensionRole::output(out), DimensionRole::input(left)],
            Repr::Diagonal { offset: 0, n },
        )
        .expect("valid append dims");
        let right_t = ProvTensor::new(
            vec![DimensionRole::output(out), DimensionRole::input(right)],
            Repr::Diagonal { offset: n, n: m },
        )
        .expect("valid append dims");
        (left_t, right_t)
    }

    /// Tensor for horizontal augmentation from explicit (output, input) pairs.
    /// An output row with no establishable source simply has no leaf.
    pub fn augmentation(
        out: &str,
        input: &str,
        out_rows: RowIdx,
        in_rows: RowIdx,
        pairs: impl IntoIterator<Item = (RowIdx, RowIdx)>,
    ) -> Result<ProvTensor> {
        let mut tuples = Vec::new();
        for (o, i) in pairs {
            if o >= out_rows || i >= in_rows {
                return Err(Error::InvalidTensor(format!(
                    "augmentation pair ({o}, {i}) out of range ({out_rows} x {in_rows})"
                )));
            }
            tuples.push(vec![o, i]);
        }
        ProvTensor::new(
            vec![DimensionRole::output(out), DimensionRole::input(input)],
            Repr::Explicit(Explicit::from_leaves(2, tuples)?),
        )
    }

    /// Build an explicit tensor from dimension roles and leaf tuples.
    pub fn from_leaves(
        dims: Vec<DimensionRole>,
        leaves: impl IntoIterator<Item = LeafTuple>,
    ) -> Result<ProvTensor> {
        let order = dims.len();
        ProvTensor::new(dims, Repr::Explicit(Explicit::from_leaves(order, leaves)?))
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[DimensionRole] {
        &self.dims
    }

    /// Position of the unique output dimension.
    pub fn output_dim(&self) -> usize {
        self.dims
            .iter()
            .position(|d| d.polarity == Polarity::Output)
            .expect("tensor has an output dimension")
    }

    /// Positions of the input dimensions ranging over `dataset`.
    pub fn input_dims_for(&self, dataset: &str) -> Vec<usize> {
        self.dims
            .iter()
            .enumerate()
            .filter(|(_, d)| d.polarity == Polarity::Input && d.dataset == dataset)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of non-zero cells (logical count for virtual tensors).
    pub fn nnz(&self) -> u64 {
        match &self.repr {
            Repr::Diagonal { n, .. } => *n as u64,
            Repr::Explicit(e) => e.nnz(self.order()),
        }
    }

    /// Accounted memory per the documented formula (see [`MEM_ACCOUNTING`]).
    pub fn memory_bytes(&self) -> u64 {
        match &self.repr {
            Repr::Diagonal { .. } => MEM_STRUCT_OVERHEAD,
            Repr::Explicit(e) => {
                let tuple_entries = e.leaves.len() as u64;
                let index_entries: u64 = e.index.iter().map(|m| m.len() as u64).sum();
                MEM_PER_TUPLE_ENTRY * tuple_entries
                    + MEM_PER_INDEX_ENTRY * index_entries
                    + MEM_STRUCT_OVERHEAD
            }
        }
    }

    /// Whether a row is indexed on the given dimension (appears in a leaf).
    pub fn contains_index(&self, dim: usize, row: RowIdx) -> bool {
        match &self.repr {
            Repr::Diagonal { offset, n } => {
                if dim == 0 {
                    row >= *offset && row - *offset < *n
                } else {
                    row < *n
                }
            }
            Repr::Explicit(e) => e.index[dim].contains_key(&row),
        }
    }

    /// Row indices indexed on a dimension, ascending.
    pub fn indexed_rows(&self, dim: usize) -> Vec<RowIdx> {
        match &self.repr {
            Repr::Diagonal { offset, n } => {
                let base = if dim == 0 { *offset } else { 0 };
                (0..*n).map(|j| base + j).collect()
            }
            Repr::Explicit(e) => {
                let mut rows: Vec<RowIdx> = e.index[dim].keys().copied().collect();
                rows.sort_unstable();
                rows
            }
        }
    }

    /// All leaves whose entry on `dim` is in `rows`. Unknown indices yield
    /// no leaves. Cost is proportional to the number of leaves returned;
    /// the instrumented counter (see [`slice_accesses`](Self::slice_accesses))
    /// records exactly that number.
    pub fn slice<I>(&self, dim: usize, rows: I) -> Result<Vec<LeafTuple>>
    where
        I: IntoIterator<Item = RowIdx>,
    {
        if dim >= self.order() {
            return Err(Error::InvalidTensor(format!(
                "slice dimension {dim} out of range for order {}",
                self.order()
            )));
        }
        let mut out = Vec::new();
        match &self.repr {
            Repr::Diagonal { offset, n } => {
                for row in rows {
                    let leaf = if dim == 0 {
                        (row >= *offset && row - *offset < *n).then(|| vec![row, row - *offset])
                    } else {
                        (row < *n).then(|| vec![*offset + row, row])
                    };
                    if let Some(l) = leaf {
                        out.push(l);
                        self.slice_accesses.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
            Repr::Explicit(e) => {
                let order = self.order();
                for row in rows {
                    if let Some(ids) = e.index[dim].get(&row) {
                        for &id in ids {
                            out.push(e.leaf(order, id).to_vec());
                            self.slice_accesses.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Fused slice-then-project: row indices on `dim_to` of the leaves whose
    /// `dim_from` entry is in `rows`.
    pub fn slice_project<I>(&self, dim_from: usize, rows: I, dim_to: usize) -> Result<BTreeSet<RowIdx>>
    where
        I: IntoIterator<Item = RowIdx>,
    {
        if dim_to >= self.order() {
            return Err(Error::InvalidTensor(format!(
                "projection dimension {dim_to} out of range for order {}",
                self.order()
            )));
        }
        Ok(project(&self.slice(dim_from, rows)?, dim_to))
    }

    /// Leaf references touched by `slice` since the last reset.
    pub fn slice_accesses(&self) -> u64 {
        self.slice_accesses.load(Ordering::Relaxed)
    }

    pub fn reset_slice_accesses(&self) {
        self.slice_accesses.store(0, Ordering::Relaxed);
    }

    /// All leaves, materialized (virtual diagonals expand).
    pub fn leaf_vec(&self) -> Vec<LeafTuple> {
        match &self.repr {
            Repr::Diagonal { offset, n } => {
                (0..*n).map(|j| vec![*offset + j, j]).collect()
            }
            Repr::Explicit(e) => {
                let order = self.order();
                (0..e.nnz(order) as u32)
                    .map(|id| e.leaf(order, id).to_vec())
                    .collect()
            }
        }
    }

    fn leaf_set(&self) -> BTreeSet<LeafTuple> {
        self.leaf_vec().into_iter().collect()
    }

    /// Canonicalize duplicate output rows to the smallest index of their
    /// duplicate class (bag to set semantics). Leaves for a duplicate are
    /// rewritten onto the class representative, and the output dimension of
    /// the index shrinks accordingly.
    pub fn to_set_semantics(&self, out_dataset: &Dataset) -> Result<ProvTensor> {
        let out_dim = self.output_dim();
        if self.dims[out_dim].dataset != out_dataset.id() {
            return Err(Error::InvalidTensor(format!(
                "output dimension refers to '{}', not '{}'",
                self.dims[out_dim].dataset,
                out_dataset.id()
            )));
        }
        let canon = duplicate_canon(out_dataset);
        if canon.iter().enumerate().all(|(i, &c)| c as usize == i) {
            return Ok(self.clone());
        }
        let mut seen = HashSet::new();
        let mut tuples = Vec::new();
        for mut leaf in self.leaf_vec() {
            let o = leaf[out_dim] as usize;
            if o < canon.len() {
                leaf[out_dim] = canon[o];
            }
            if seen.insert(leaf.clone()) {
                tuples.push(leaf);
            }
        }
        ProvTensor::from_leaves(self.dims.clone(), tuples)
    }

    /// Collapse to an order-2 tensor over (output dim, one input dim) by
    /// logical OR over the remaining dimensions.
    pub fn project_to_dims(&self, in_dim: usize) -> Result<ProvTensor> {
        let out_dim = self.output_dim();
        if in_dim >= self.order() || in_dim == out_dim {
            return Err(Error::InvalidTensor(format!(
                "dimension {in_dim} is not an input dimension"
            )));
        }
        if self.order() == 2 && out_dim == 0 && in_dim == 1 {
            return Ok(self.clone());
        }
        let mut seen = HashSet::new();
        let mut tuples = Vec::new();
        for leaf in self.leaf_vec() {
            let t = vec![leaf[out_dim], leaf[in_dim]];
            if seen.insert(t.clone()) {
                tuples.push(t);
            }
        }
        ProvTensor::from_leaves(
            vec![self.dims[out_dim].clone(), self.dims[in_dim].clone()],
            tuples,
        )
    }

    /// Debug serialization to a JSON document `{dims, leaves}`. Not a
    /// stability contract; used for test fixtures.
    pub fn to_debug_json(&self) -> String {
        let mut leaves = self.leaf_vec();
        leaves.sort_unstable();
        let doc = TensorDebug {
            dims: self.dims.clone(),
            leaves,
        };
        serde_json::to_string(&doc).expect("tensor debug serialization")
    }

    /// Rebuild a tensor from its debug JSON form, validating the structure.
    pub fn from_debug_json(json: &str) -> Result<ProvTensor> {
        let doc: TensorDebug = serde_json::from_str(json)
            .map_err(|e| Error::InvalidTensor(format!("debug json: {e}")))?;
        ProvTensor::from_leaves(doc.dims, doc.leaves)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorDebug {
    dims: Vec<DimensionRole>,
    leaves: Vec<LeafTuple>,
}

/// Per-row canonical index under duplicate-row classes: the smallest row
/// index whose cells compare equal (hash first, then verified equality).
pub fn duplicate_canon(dataset: &Dataset) -> Vec<RowIdx> {
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};

    let mut buckets: HashMap<u64, Vec<u32>> = HashMap::new();
    let mut canon: Vec<RowIdx> = (0..dataset.row_count() as u32).collect();
    for (i, row) in dataset.rows().enumerate() {
        let mut h = DefaultHasher::new();
        row.hash(&mut h);
        let key = h.finish();
        let bucket = buckets.entry(key).or_default();
        let mut found = None;
        for &j in bucket.iter() {
            if dataset.get_row(j as usize).expect("bucketed row") == row {
                found = Some(canon[j as usize]);
                break;
            }
        }
        match found {
            Some(c) => canon[i] = c,
            None => bucket.push(i as u32),
        }
    }
    canon
}

/// Logical-OR collapse of all dimensions except `dim`: the set of row
/// indices appearing at position `dim` across the leaves.
pub fn project(leaves: &[LeafTuple], dim: usize) -> BTreeSet<RowIdx> {
    leaves.iter().map(|l| l[dim]).collect()
}

/// Contraction of `t1`'s output dimension with the input dimension of `t2`
/// ranging over the same dataset. The result is binary: a leaf is present
/// when some shared row index links a leaf of `t1` with a leaf of `t2`.
/// Result dimensions: `t2`'s output, then `t1`'s inputs, then `t2`'s
/// remaining inputs.
pub fn compose(t1: &ProvTensor, t2: &ProvTensor) -> Result<ProvTensor> {
    let shared = &t1.dims()[t1.output_dim()].dataset;
    let candidates = t2.input_dims_for(shared);
    let dim2 = *candidates.first().ok_or_else(|| Error::InvalidTensor(format!(
        "no input dimension of the second tensor ranges over '{shared}'"
    )))?;
    compose_on(t1, t2, dim2)
}

/// [`compose`] with the contracted input dimension of `t2` given explicitly.
pub fn compose_on(t1: &ProvTensor, t2: &ProvTensor, dim2: usize) -> Result<ProvTensor> {
    let out1 = t1.output_dim();
    let out2 = t2.output_dim();
    if dim2 >= t2.order() || t2.dims()[dim2].polarity != Polarity::Input {
        return Err(Error::InvalidTensor(format!(
            "dimension {dim2} is not an input dimension of the second tensor"
        )));
    }
    if t2.dims()[dim2].dataset != t1.dims()[out1].dataset {
        return Err(Error::InvalidTensor(format!(
            "cannot contract: '{}' does not match '{}'",
            t2.dims()[dim2].dataset,
            t1.dims()[out1].dataset
        )));
    }

    let mut dims = vec![t2.dims()[out2].clone()];
    let t1_input_dims: Vec<usize> = (0..t1.order()).filter(|&d| d != out1).collect();
    for &d in &t1_input_dims {
        dims.push(t1.dims()[d].clone());
    }
    let t2_rest_dims: Vec<usize> = (0..t2.order()).filter(|&d| d != out2 && d != dim2).collect();
    for &d in &t2_rest_dims {
        dims.push(t2.dims()[d].clone());
    }

    // Two diagonals contract to a diagonal.
    if let (Repr::Diagonal { offset: o1, n: n1 }, Repr::Diagonal { offset: o2, n: n2 }) =
        (&t1.repr, &t2.repr)
    {
        let hi = (o1 + n1).min(*n2);
        let n = hi.saturating_sub(*o1);
        return ProvTensor::new(dims, Repr::Diagonal { offset: o2 + o1, n });
    }

    let mut seen: HashSet<LeafTuple> = HashSet::new();
    let mut tuples: Vec<LeafTuple> = Vec::new();
    let mut emit = |leaf2: &[RowIdx], leaf1_inputs: &[RowIdx]| {
        let mut tuple = Vec::with_capacity(dims.len());
        tuple.push(leaf2[out2]);
        tuple.extend_from_slice(leaf1_inputs);
        for &d in &t2_rest_dims {
            tuple.push(leaf2[d]);
        }
        if seen.insert(tuple.clone()) {
            tuples.push(tuple);
        }
    };

    for leaf2 in t2.leaf_vec() {
        let k = leaf2[dim2];
        for leaf1 in t1.slice(out1, [k])? {
            let inputs1: Vec<RowIdx> = t1_input_dims.iter().map(|&d| leaf1[d]).collect();
            emit(&leaf2, &inputs1);
        }
    }
    ProvTensor::new(
        dims.clone(),
        Repr::Explicit(Explicit::from_leaves(dims.len(), tuples)?),
    )
}

/// Union of two tensors over identical dimension roles.
pub fn union(a: &ProvTensor, b: &ProvTensor) -> Result<ProvTensor> {
    if a.dims() != b.dims() {
        return Err(Error::InvalidTensor(
            "union requires identical dimension roles".to_string(),
        ));
    }
    let mut leaves = a.leaf_set();
    leaves.extend(b.leaf_vec());
    ProvTensor::from_leaves(a.dims().to_vec(), leaves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_csv_reader;

    fn set(rows: &[RowIdx]) -> BTreeSet<RowIdx> {
        rows.iter().copied().collect()
    }

    #[test]
    fn identity_leaves() {
        let t = ProvTensor::identity("in", "out", 3);
        let mut leaves = t.leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 0], vec![1, 1], vec![2, 2]]);
        assert_eq!(ProvTensor::identity("in", "out", 0).nnz(), 0);
        assert_eq!(ProvTensor::identity("in", "out", 1000).nnz(), 1000);
    }

    #[test]
    fn masking_leaves_and_monotonicity() {
        let t = ProvTensor::masking("in", "out", &[1, 3]).unwrap();
        let mut leaves = t.leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 1], vec![1, 3]]);
        assert_eq!(ProvTensor::masking("in", "out", &[]).unwrap().nnz(), 0);
        assert!(ProvTensor::masking("in", "out", &[3, 1]).is_err());
        assert!(ProvTensor::masking("in", "out", &[2, 2]).is_err());
    }

    #[test]
    fn join_triples_and_duplicate_output_rejection() {
        let t = ProvTensor::join("dj", "dl", "dr", [(0, 1, 0), (1, 3, 1)]).unwrap();
        assert_eq!(t.order(), 3);
        assert_eq!(t.nnz(), 2);
        let mut leaves = t.leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 1, 0], vec![1, 3, 1]]);
        assert!(ProvTensor::join("dj", "dl", "dr", [(0, 1, 0), (0, 2, 1)]).is_err());
    }

    #[test]
    fn append_block_diagonals() {
        let (l, r) = ProvTensor::append("da", "dl", "dr", 4, 2);
        let mut ll = l.leaf_vec();
        ll.sort();
        assert_eq!(ll, vec![vec![0, 0], vec![1, 1], vec![2, 2], vec![3, 3]]);
        let mut rl = r.leaf_vec();
        rl.sort();
        assert_eq!(rl, vec![vec![4, 0], vec![5, 1]]);

        let (_, r0) = ProvTensor::append("da", "dl", "dr", 4, 0);
        assert_eq!(r0.nnz(), 0);
        let (l0, r1) = ProvTensor::append("da", "dl", "dr", 0, 2);
        assert_eq!(l0.nnz(), 0);
        let mut rl = r1.leaf_vec();
        rl.sort();
        assert_eq!(rl, vec![vec![0, 0], vec![1, 1]]);
    }

    #[test]
    fn augmentation_pairs() {
        let t = ProvTensor::augmentation("out", "in", 4, 3, [(0, 0), (1, 1), (2, 2), (3, 2)])
            .unwrap();
        assert_eq!(t.nnz(), 4);
        assert_eq!(t.slice_project(0, [3], 1).unwrap(), set(&[2]));
        assert!(ProvTensor::augmentation("out", "in", 4, 3, [(4, 0)]).is_err());
        // Multi-parent synthesis: one output row, two sources.
        let t = ProvTensor::augmentation("out", "in", 4, 2, [(3, 0), (3, 1)]).unwrap();
        assert_eq!(t.slice_project(0, [3], 1).unwrap(), set(&[0, 1]));
    }

    #[test]
    fn slice_on_join_tensor() {
        let t = ProvTensor::join("dj", "dl", "dr", [(0, 1, 0), (1, 3, 1)]).unwrap();
        assert_eq!(t.slice(1, [1]).unwrap(), vec![vec![0, 1, 0]]);
        assert_eq!(t.slice(1, []).unwrap(), Vec::<LeafTuple>::new());
        let all = t.slice(0, [0, 1]).unwrap();
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn slice_touches_exactly_result_leaves() {
        let t = ProvTensor::join("dj", "dl", "dr", [(0, 1, 0), (1, 3, 1), (2, 3, 0)]).unwrap();
        t.reset_slice_accesses();
        let hit = t.slice(1, [3]).unwrap();
        assert_eq!(hit.len(), 2);
        assert_eq!(t.slice_accesses(), 2);
        t.reset_slice_accesses();
        let miss = t.slice(1, [7]).unwrap();
        assert!(miss.is_empty());
        assert_eq!(t.slice_accesses(), 0);
    }

    #[test]
    fn project_collapses_to_sets() {
        let leaves = vec![vec![0, 1, 0], vec![1, 3, 1]];
        assert_eq!(project(&leaves, 1), set(&[1, 3]));
        assert_eq!(project(&[], 0), BTreeSet::new());
        let t = ProvTensor::identity("in", "out", 5);
        let leaves = t.leaf_vec();
        assert_eq!(project(&leaves, 0), set(&[0, 1, 2, 3, 4]));
        assert_eq!(project(&leaves, 1), set(&[0, 1, 2, 3, 4]));
    }

    #[test]
    fn forward_backward_duality() {
        let t = ProvTensor::join("dj", "dl", "dr", [(0, 1, 0), (1, 3, 1), (2, 3, 0)]).unwrap();
        for i in 0..5u32 {
            let fwd = t.slice_project(1, [i], 0).unwrap();
            for &o in &fwd {
                let back = t.slice_project(0, [o], 1).unwrap();
                assert!(back.contains(&i));
            }
        }
        for o in 0..3u32 {
            let back = t.slice_project(0, [o], 1).unwrap();
            for &i in &back {
                let fwd = t.slice_project(1, [i], 0).unwrap();
                assert!(fwd.contains(&o));
            }
        }
    }

    #[test]
    fn compose_identities() {
        let a = ProvTensor::identity("d0", "d1", 7);
        let b = ProvTensor::identity("d1", "d2", 7);
        let c = compose(&a, &b).unwrap();
        assert_eq!(c.nnz(), 7);
        assert_eq!(c, ProvTensor::identity("d0", "d2", 7));
        assert_eq!(c.memory_bytes(), MEM_STRUCT_OVERHEAD);
    }

    #[test]
    fn compose_masking_after_identity() {
        let a = ProvTensor::identity("d0", "d1", 4);
        let b = ProvTensor::masking("d1", "d2", &[1, 3]).unwrap();
        let c = compose(&a, &b).unwrap();
        let mut leaves = c.leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 1], vec![1, 3]]);
    }

    #[test]
    fn compose_masking_after_join() {
        let j = ProvTensor::join("dj", "dl", "dr", [(0, 1, 0), (1, 3, 1)]).unwrap();
        let m = ProvTensor::masking("dj", "df", &[1]).unwrap();
        let c = compose_on(&j, &m, 1).unwrap();
        assert_eq!(c.order(), 3);
        let mut leaves = c.leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 3, 1]]);
        assert_eq!(c.dims()[0].dataset, "df");
        assert_eq!(c.dims()[1].dataset, "dl");
        assert_eq!(c.dims()[2].dataset, "dr");
    }

    #[test]
    fn compose_is_associative() {
        let a = ProvTensor::masking("d0", "d1", &[0, 2, 4, 5]).unwrap();
        let b = ProvTensor::masking("d1", "d2", &[1, 3]).unwrap();
        let c = ProvTensor::masking("d2", "d3", &[1]).unwrap();
        let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        assert_eq!(left.leaf_set(), right.leaf_set());
    }

    #[test]
    fn compose_requires_shared_dataset() {
        let a = ProvTensor::identity("d0", "d1", 3);
        let b = ProvTensor::identity("dX", "d2", 3);
        assert!(compose(&a, &b).is_err());
    }

    #[test]
    fn set_semantics_rewrites_duplicates() {
        // Rows 2 and 4 of the output are identical.
        let out = load_csv_reader(
            "dj",
            "k,v\n0,a\n1,b\n2,dup\n3,c\n2,dup\n".as_bytes(),
            true,
            None,
        )
        .unwrap();
        let t = ProvTensor::join("dj", "dl", "dr", [(0, 0, 0), (1, 1, 0), (2, 1, 1), (3, 2, 1), (4, 2, 2)])
            .unwrap();
        let s = t.to_set_semantics(&out).unwrap();
        let mut leaves = s.leaf_vec();
        leaves.sort();
        assert_eq!(
            leaves,
            vec![vec![0, 0, 0], vec![1, 1, 0], vec![2, 1, 1], vec![2, 2, 2], vec![3, 2, 1]]
        );
        // Output dimension of the index shrinks: 4 distinct outputs, not 5.
        assert_eq!(s.indexed_rows(0).len(), 4);
    }

    #[test]
    fn set_semantics_no_duplicates_is_unchanged() {
        let out = load_csv_reader("d1", "v\na\nb\nc\n".as_bytes(), true, None).unwrap();
        let t = ProvTensor::identity("d0", "d1", 3);
        let s = t.to_set_semantics(&out).unwrap();
        assert_eq!(s, t);
        assert_eq!(s.memory_bytes(), MEM_STRUCT_OVERHEAD);
    }

    #[test]
    fn set_semantics_all_rows_identical() {
        let out = load_csv_reader("d1", "v\nx\nx\nx\nx\n".as_bytes(), true, None).unwrap();
        let t = ProvTensor::identity("d0", "d1", 4);
        let s = t.to_set_semantics(&out).unwrap();
        let mut leaves = s.leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![0, 3]]);
        assert_eq!(s.indexed_rows(0), vec![0]);
    }

    #[test]
    fn memory_accounting_is_linear() {
        for &n in &[1_000u32, 10_000, 100_000] {
            let kept: Vec<RowIdx> = (0..n).collect();
            let t = ProvTensor::masking("in", "out", &kept).unwrap();
            let bytes = t.memory_bytes();
            let per = (bytes - MEM_STRUCT_OVERHEAD) as f64 / (t.nnz() * t.order() as u64) as f64;
            // 8B per tuple entry + 16B per index entry, both dims fully distinct.
            assert!((per - 24.0).abs() < 1e-9, "per-entry cost {per}");
        }
    }

    #[test]
    fn debug_json_round_trip() {
        let t = ProvTensor::join("dj", "dl", "dr", [(0, 1, 0), (1, 3, 1)]).unwrap();
        let json = t.to_debug_json();
        let back = ProvTensor::from_debug_json(&json).unwrap();
        assert_eq!(back, t);
        assert!(ProvTensor::from_debug_json("{\"dims\":[],\"leaves\":[]}").is_err());
    }
}
