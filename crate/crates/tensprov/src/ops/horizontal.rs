//! Horizontal reduction and augmentation executors.
//!
//! Reductions capture provenance by index observation: the executor keeps
//! the surviving input indices and builds the masking tensor from them, never
//! comparing cell values for capture. Augmentation records each appended
//! row's source index at generation time.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::predicate::Predicate;
use crate::tensor::{ProvTensor, RowIdx};
use crate::value::CellValue;

use super::{CaptureResult, CaptureTrace, OpCategory, OpDescriptor, OpParams};

fn masked_result(
    d: &Dataset,
    out_id: &str,
    op_id: &str,
    name: &str,
    kept: Vec<usize>,
    params: OpParams,
) -> Result<CaptureResult> {
    let rows: Vec<Vec<CellValue>> = kept
        .iter()
        .map(|&i| d.get_row(i).map(|r| r.to_vec()))
        .collect::<Result<_>>()?;
    let output = Dataset::new(out_id, d.schema().clone(), rows)?;
    let kept_idx: Vec<RowIdx> = kept.iter().map(|&i| i as RowIdx).collect();
    let tensor = ProvTensor::masking(d.id(), out_id, &kept_idx)?;
    let descriptor = OpDescriptor {
        id: op_id.to_string(),
        category: OpCategory::HorizontalReduction,
        name: name.to_string(),
        contextual: false,
        inputs: vec![d.id().to_string()],
        output: out_id.to_string(),
        annots: vec![],
        params,
    };
    Ok(CaptureResult {
        output,
        tensors: vec![tensor],
        descriptor,
        trace: CaptureTrace::default(),
    })
}

/// Keep the rows satisfying the predicate, in input order.
pub fn filter(d: &Dataset, out_id: &str, op_id: &str, predicate: Predicate) -> Result<CaptureResult> {
    predicate.validate(d.schema())?;
    let mut kept = Vec::new();
    for (i, row) in d.rows().enumerate() {
        if predicate.eval(d.schema(), row)? {
            kept.push(i);
        }
    }
    masked_result(d, out_id, op_id, "filter", kept, OpParams::Filter { predicate })
}

/// Seeded undersampling: keep `floor(fraction * rows)` rows chosen without
/// replacement, in input order.
pub fn sample(d: &Dataset, out_id: &str, op_id: &str, fraction: f64, seed: u64) -> Result<CaptureResult> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParams(format!(
            "sample fraction must be within [0, 1], got {fraction}"
        )));
    }
    let n = d.row_count();
    let count = (fraction * n as f64).floor() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first `count` slots end up uniformly chosen.
    for i in 0..count.min(n.saturating_sub(1)) {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    let mut kept: Vec<usize> = indices[..count].to_vec();
    kept.sort_unstable();
    masked_result(d, out_id, op_id, "sample", kept, OpParams::Sample { fraction, seed })
}

/// How oversampled rows are produced from their sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OversampleStrategy {
    /// Exact copies of minority rows, cycling through them in row order.
    DuplicateMinority,
    /// Copies with gaussian noise of the given sigma added to numeric cells.
    NoisyDuplicate { sigma: f64 },
}

fn mix_seed(seed: u64, out_row: u64, col: u64) -> u64 {
    // splitmix64-style mixing keyed by output row and column, so replay of a
    // single row regenerates the identical noise.
    let mut z = seed ^ out_row.wrapping_mul(0x9E3779B97F4A7C15) ^ col.wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn gaussian(rng: &mut StdRng) -> f64 {
    // Box-Muller from two uniforms.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// One oversampled row derived from its source row. Deterministic in
/// (seed, output row index), so record-level replay is exact.
pub fn oversampled_row(
    source: &[CellValue],
    strategy: OversampleStrategy,
    seed: u64,
    out_row: usize,
) -> Vec<CellValue> {
    match strategy {
        OversampleStrategy::DuplicateMinority => source.to_vec(),
        OversampleStrategy::NoisyDuplicate { sigma } => source
            .iter()
            .enumerate()
            .map(|(col, cell)| match cell {
                CellValue::Int(v) => {
                    let mut rng = StdRng::seed_from_u64(mix_seed(seed, out_row as u64, col as u64));
                    CellValue::Int(v + (gaussian(&mut rng) * sigma).round() as i64)
                }
                CellValue::Real(v) => {
                    let mut rng = StdRng::seed_from_u64(mix_seed(seed, out_row as u64, col as u64));
                    CellValue::Real(v + gaussian(&mut rng) * sigma)
                }
                other => other.clone(),
            })
            .collect(),
    }
}

/// Oversample the minority class of `target` up to the majority count.
/// Original rows come first with identity provenance; appended rows carry a
/// pair to the source row they were generated from.
pub fn oversample(
    d: &Dataset,
    out_id: &str,
    op_id: &str,
    target: usize,
    strategy: OversampleStrategy,
    seed: u64,
) -> Result<CaptureResult> {
    d.schema().attr(target)?;
    let mut class_rows: Vec<(CellValue, Vec<usize>)> = Vec::new();
    for (i, row) in d.rows().enumerate() {
        let v = &row[target];
        match class_rows.iter_mut().find(|(c, _)| c == v) {
            Some((_, rows)) => rows.push(i),
            None => class_rows.push((v.clone(), vec![i])),
        }
    }
    if class_rows.is_empty() {
        return Err(Error::InvalidParams(
            "oversample: dataset is empty, no minority class".into(),
        ));
    }

    let majority = class_rows.iter().map(|(_, r)| r.len()).max().unwrap();
    // Minority class: fewest rows, ties to the smallest value.
    let (_, minority_rows) = class_rows
        .iter()
        .min_by(|(va, ra), (vb, rb)| ra.len().cmp(&rb.len()).then_with(|| va.cmp(vb)))
        .unwrap();

    let n = d.row_count();
    let deficit = majority - minority_rows.len();
    let mut rows: Vec<Vec<CellValue>> = d.rows().map(|r| r.to_vec()).collect();
    let mut pairs: Vec<(RowIdx, RowIdx)> = (0..n as RowIdx).map(|i| (i, i)).collect();
    for k in 0..deficit {
        let src = minority_rows[k % minority_rows.len()];
        let out_row = n + k;
        rows.push(oversampled_row(
            d.get_row(src)?,
            strategy,
            seed,
            out_row,
        ));
        pairs.push((out_row as RowIdx, src as RowIdx));
    }

    let out_rows = rows.len() as RowIdx;
    let output = Dataset::new(out_id, d.schema().clone(), rows)?;
    let tensor = ProvTensor::augmentation(out_id, d.id(), out_rows, n as RowIdx, pairs)?;
    let descriptor = OpDescriptor {
        id: op_id.to_string(),
        category: OpCategory::HorizontalAugmentation,
        name: "oversample".to_string(),
        contextual: false,
        inputs: vec![d.id().to_string()],
        output: out_id.to_string(),
        annots: vec![],
        params: OpParams::Oversample {
            target,
            strategy,
            seed,
        },
    };
    Ok(CaptureResult {
        output,
        tensors: vec![tensor],
        descriptor,
        trace: CaptureTrace::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_csv_reader;

    fn paper_left() -> Dataset {
        load_csv_reader("dl",
            "ID,Birthdate,Gender\n10,1996-07-12,F\n20,1994-03-08,M\n30,,F\n40,1987-11-23,M\n".as_bytes(),
            true,
            None,
        )
        .unwrap()
    }

    #[test]
    fn filter_gender_m_masks_rows_one_and_three() {
        let d = paper_left();
        let p = Predicate::parse("Gender == \"M\"").unwrap();
        let r = filter(&d, "o", "op", p).unwrap();
        assert_eq!(r.output.row_count(), 2);
        let mut leaves = r.tensors[0].leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 1], vec![1, 3]]);
        assert_eq!(r.output.cell(0, 0).unwrap(), &CellValue::Int(20));
    }

    #[test]
    fn always_false_and_always_true_filters() {
        let d = paper_left();
        let p = Predicate::parse("ID < 0").unwrap();
        let r = filter(&d, "o", "op", p).unwrap();
        assert_eq!(r.output.row_count(), 0);
        assert_eq!(r.tensors[0].nnz(), 0);

        let p = Predicate::parse("ID >= 0").unwrap();
        let r = filter(&d, "o", "op", p).unwrap();
        assert_eq!(r.output.row_count(), 4);
        let identity = ProvTensor::identity(d.id(), "o", 4);
        assert_eq!(r.tensors[0], identity);
    }

    #[test]
    fn filter_type_mismatch_is_an_error() {
        let d = paper_left();
        let p = Predicate::parse("ID == \"x\"").unwrap();
        assert!(filter(&d, "o", "op", p).is_err());
    }

    #[test]
    fn sample_is_seeded_and_ordered() {
        let d = load_csv_reader(
            "d",
            format!("a\n{}", (0..100).map(|i| i.to_string()).collect::<Vec<_>>().join("\n")).as_bytes(),
            true,
            None,
        )
        .unwrap();
        let a = sample(&d, "o", "op", 0.3, 7).unwrap();
        let b = sample(&d, "o", "op", 0.3, 7).unwrap();
        assert_eq!(a.output, b.output);
        assert_eq!(a.output.row_count(), 30);
        let leaves = a.tensors[0].leaf_vec();
        let mut inputs: Vec<u32> = leaves.iter().map(|l| l[1]).collect();
        let sorted = {
            let mut s = inputs.clone();
            s.sort_unstable();
            s
        };
        inputs.sort_unstable();
        assert_eq!(inputs, sorted);
        let c = sample(&d, "o", "op", 0.3, 8).unwrap();
        assert_ne!(a.output, c.output);
    }

    #[test]
    fn oversample_duplicates_minority_once() {
        // Classes: x appears twice, y once; one duplicate of row 2 is added.
        let d = load_csv_reader("d", "v,cls\n1,x\n2,x\n3,y\n".as_bytes(), true, None).unwrap();
        let r = oversample(&d, "o", "op", 1, OversampleStrategy::DuplicateMinority, 42).unwrap();
        assert_eq!(r.output.row_count(), 4);
        assert_eq!(r.output.get_row(3).unwrap(), d.get_row(2).unwrap());
        let mut leaves = r.tensors[0].leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 0], vec![1, 1], vec![2, 2], vec![3, 2]]);
    }

    #[test]
    fn oversample_balanced_input_is_identity() {
        let d = load_csv_reader("d", "v,cls\n1,x\n2,y\n".as_bytes(), true, None).unwrap();
        let r = oversample(&d, "o", "op", 1, OversampleStrategy::DuplicateMinority, 42).unwrap();
        assert_eq!(r.output.row_count(), 2);
        assert_eq!(r.tensors[0].nnz(), 2);
        let mut leaves = r.tensors[0].leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 0], vec![1, 1]]);
    }

    #[test]
    fn noisy_duplicate_keeps_source_mapping_and_replays_exactly() {
        let d = load_csv_reader("d", "v,cls\n1.5,x\n2.5,x\n9.0,y\n".as_bytes(), true, None).unwrap();
        let strat = OversampleStrategy::NoisyDuplicate { sigma: 0.5 };
        let r = oversample(&d, "o", "op", 1, strat, 11).unwrap();
        assert_eq!(r.output.row_count(), 4);
        // Source mapping recorded at generation time.
        assert_eq!(
            r.tensors[0].slice_project(0, [3], 1).unwrap(),
            std::collections::BTreeSet::from([2u32])
        );
        // Perturbed value differs from the source but replays identically.
        let source = d.get_row(2).unwrap();
        let replayed = oversampled_row(source, strat, 11, 3);
        assert_eq!(r.output.get_row(3).unwrap(), &replayed[..]);
        assert_ne!(r.output.get_row(3).unwrap()[0], source[0]);
    }

    #[test]
    fn oversample_empty_dataset_is_an_error() {
        let d = load_csv_reader("d", "v,cls\n".as_bytes(), true, None).unwrap();
        assert!(oversample(&d, "o", "op", 1, OversampleStrategy::DuplicateMinority, 1).is_err());
    }
}
