//! Data transformation executors: value-level functions that change neither
//! the schema nor the row count, captured with an identity tensor.

use crate::dataset::{Dataset, Schema};
use crate::error::{Error, Result};
use crate::tensor::ProvTensor;
use crate::value::{CellType, CellValue};

use super::{CaptureResult, CaptureTrace, OpCategory, OpDescriptor, OpParams};

/// Registered transformation functions.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformFn {
    ImputeMean,
    ImputeMedian,
    ImputeMode,
    ImputeConstant(CellValue),
    Binarize { threshold: f64 },
    NormalizeMinMax,
    Discretize { bins: usize },
    ValueMap { pairs: Vec<(CellValue, CellValue)> },
}

impl TransformFn {
    pub fn name(&self) -> &'static str {
        match self {
            TransformFn::ImputeMean => "impute-mean",
            TransformFn::ImputeMedian => "impute-median",
            TransformFn::ImputeMode => "impute-mode",
            TransformFn::ImputeConstant(_) => "impute-constant",
            TransformFn::Binarize { .. } => "binarize",
            TransformFn::NormalizeMinMax => "normalize-minmax",
            TransformFn::Discretize { .. } => "discretize",
            TransformFn::ValueMap { .. } => "value-map",
        }
    }

    /// Whether the function needs whole-column statistics.
    pub fn contextual(&self) -> bool {
        matches!(
            self,
            TransformFn::ImputeMean
                | TransformFn::ImputeMedian
                | TransformFn::ImputeMode
                | TransformFn::NormalizeMinMax
                | TransformFn::Discretize { .. }
        )
    }
}

/// Whole-column statistics a contextual function needs, computed from the
/// full input column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColStats {
    None,
    Fill(CellValue),
    MinMax { min: f64, max: f64 },
    BinEdges(Vec<f64>),
}

fn numeric_column(d: &Dataset, col: usize, what: &str) -> Result<Vec<f64>> {
    let ty = d.schema().attr(col)?.ty;
    if !matches!(ty, CellType::Integer | CellType::Real) {
        return Err(Error::TypeMismatch(format!(
            "{what} requires a numeric column, '{}' is {ty}",
            d.schema().attr(col)?.name
        )));
    }
    Ok(d.rows().filter_map(|r| r[col].as_f64()).collect())
}

fn round_to_type(v: f64, ty: CellType) -> CellValue {
    match ty {
        CellType::Integer => CellValue::Int(v.round() as i64),
        _ => CellValue::Real(v),
    }
}

/// Compute the statistics `func` needs over column `col` of the full input.
pub fn compute_stats(d: &Dataset, col: usize, func: &TransformFn) -> Result<ColStats> {
    let ty = d.schema().attr(col)?.ty;
    match func {
        TransformFn::ImputeMean => {
            let vals = numeric_column(d, col, "impute-mean")?;
            if vals.is_empty() {
                return Err(Error::InvalidParams(format!(
                    "impute-mean: column '{}' has no non-null values",
                    d.schema().attr(col)?.name
                )));
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            Ok(ColStats::Fill(round_to_type(mean, ty)))
        }
        TransformFn::ImputeMedian => {
            let mut vals = numeric_column(d, col, "impute-median")?;
            if vals.is_empty() {
                return Err(Error::InvalidParams(format!(
                    "impute-median: column '{}' has no non-null values",
                    d.schema().attr(col)?.name
                )));
            }
            vals.sort_by(f64::total_cmp);
            let mid = vals.len() / 2;
            let median = if vals.len() % 2 == 1 {
                vals[mid]
            } else {
                (vals[mid - 1] + vals[mid]) / 2.0
            };
            Ok(ColStats::Fill(round_to_type(median, ty)))
        }
        TransformFn::ImputeMode => {
            let mut counts: std::collections::HashMap<&CellValue, usize> =
                std::collections::HashMap::new();
            for row in d.rows() {
                if !row[col].is_null() {
                    *counts.entry(&row[col]).or_default() += 1;
                }
            }
            // Ties break to the smallest value for determinism.
            let name = &d.schema().attr(col)?.name;
            let mode = counts
                .into_iter()
                .max_by(|(va, ca), (vb, cb)| ca.cmp(cb).then_with(|| vb.cmp(va)))
                .map(|(v, _)| v.clone())
                .ok_or_else(|| {
                    Error::InvalidParams(format!(
                        "impute-mode: column '{name}' has no non-null values"
                    ))
                })?;
            Ok(ColStats::Fill(mode))
        }
        TransformFn::NormalizeMinMax => {
            if ty != CellType::Real {
                return Err(Error::TypeMismatch(format!(
                    "normalize-minmax requires a real column, '{}' is {ty}",
                    d.schema().attr(col)?.name
                )));
            }
            let vals = numeric_column(d, col, "normalize-minmax")?;
            if vals.is_empty() {
                return Err(Error::InvalidParams(format!(
                    "normalize-minmax: column '{}' has no non-null values",
                    d.schema().attr(col)?.name
                )));
            }
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(ColStats::MinMax { min, max })
        }
        TransformFn::Discretize { bins } => {
            if *bins == 0 {
                return Err(Error::InvalidParams("discretize needs at least one bin".into()));
            }
            let mut vals = numeric_column(d, col, "discretize")?;
            if vals.is_empty() {
                return Err(Error::InvalidParams(format!(
                    "discretize: column '{}' has no non-null values",
                    d.schema().attr(col)?.name
                )));
            }
            vals.sort_by(f64::total_cmp);
            let mut edges = Vec::with_capacity(bins - 1);
            for j in 1..*bins {
                let q = j as f64 / *bins as f64;
                let idx = q * (vals.len() - 1) as f64;
                let lo = idx.floor() as usize;
                let hi = idx.ceil() as usize;
                let frac = idx - lo as f64;
                edges.push(vals[lo] + (vals[hi] - vals[lo]) * frac);
            }
            Ok(ColStats::BinEdges(edges))
        }
        TransformFn::ImputeConstant(value) => {
            if !value.fits(ty) && !value.is_null() {
                return Err(Error::TypeMismatch(format!(
                    "impute-constant value {value:?} does not fit column type {ty}"
                )));
            }
            Ok(ColStats::None)
        }
        TransformFn::Binarize { .. } => {
            numeric_column(d, col, "binarize")?;
            Ok(ColStats::None)
        }
        TransformFn::ValueMap { pairs } => {
            for (from, to) in pairs {
                if !from.fits(ty) || !to.fits(ty) {
                    return Err(Error::TypeMismatch(format!(
                        "value-map pair ({from:?} -> {to:?}) does not fit column type {ty}"
                    )));
                }
            }
            Ok(ColStats::None)
        }
    }
}

/// Apply `func` to one cell given the column's type and statistics.
pub fn apply_cell(cell: &CellValue, ty: CellType, func: &TransformFn, stats: &ColStats) -> CellValue {
    match func {
        TransformFn::ImputeMean | TransformFn::ImputeMedian | TransformFn::ImputeMode => {
            if cell.is_null() {
                match stats {
                    ColStats::Fill(v) => v.clone(),
                    _ => CellValue::Null,
                }
            } else {
                cell.clone()
            }
        }
        TransformFn::ImputeConstant(v) => {
            if cell.is_null() {
                v.clone()
            } else {
                cell.clone()
            }
        }
        TransformFn::Binarize { threshold } => match cell.as_f64() {
            // Boundary maps to 0: strictly greater becomes 1.
            Some(v) => round_to_type(if v > *threshold { 1.0 } else { 0.0 }, ty),
            None => CellValue::Null,
        },
        TransformFn::NormalizeMinMax => match (cell.as_f64(), stats) {
            (Some(v), ColStats::MinMax { min, max }) => {
                let span = max - min;
                let scaled = if span == 0.0 { 0.0 } else { (v - min) / span };
                CellValue::Real(scaled)
            }
            _ => CellValue::Null,
        },
        TransformFn::Discretize { .. } => match (cell.as_f64(), stats) {
            (Some(v), ColStats::BinEdges(edges)) => {
                let bin = edges.iter().filter(|e| v > **e).count();
                round_to_type(bin as f64, ty)
            }
            _ => CellValue::Null,
        },
        TransformFn::ValueMap { pairs } => {
            for (from, to) in pairs {
                if cell == from {
                    return to.clone();
                }
            }
            cell.clone()
        }
    }
}

/// Run a registered transformation over the given columns with capture.
pub fn transform(
    d: &Dataset,
    out_id: &str,
    op_id: &str,
    func: TransformFn,
    columns: &[usize],
) -> Result<CaptureResult> {
    if columns.is_empty() {
        return Err(Error::InvalidParams("transform needs at least one column".into()));
    }
    let mut stats = Vec::with_capacity(columns.len());
    for &col in columns {
        d.schema().attr(col)?;
        stats.push(compute_stats(d, col, &func)?);
    }

    let schema = transformed_schema(d.schema(), &func, columns);
    let mut rows = Vec::with_capacity(d.row_count());
    for row in d.rows() {
        let mut cells: Vec<CellValue> = row.to_vec();
        for (k, &col) in columns.iter().enumerate() {
            let ty = d.schema().attr(col)?.ty;
            cells[col] = apply_cell(&row[col], ty, &func, &stats[k]);
        }
        rows.push(cells);
    }
    let output = Dataset::new(out_id, schema, rows)?;

    let tensor = ProvTensor::identity(d.id(), out_id, d.row_count() as u32);
    let descriptor = OpDescriptor {
        id: op_id.to_string(),
        category: OpCategory::DataTransformation,
        name: func.name().to_string(),
        contextual: func.contextual(),
        inputs: vec![d.id().to_string()],
        output: out_id.to_string(),
        annots: vec![],
        params: OpParams::Transform {
            func,
            columns: columns.to_vec(),
        },
    };
    Ok(CaptureResult {
        output,
        tensors: vec![tensor],
        descriptor,
        trace: CaptureTrace::default(),
    })
}

fn transformed_schema(schema: &Schema, _func: &TransformFn, _columns: &[usize]) -> Schema {
    schema.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_csv_reader;

    fn ints(data: &str) -> Dataset {
        load_csv_reader("d", data.as_bytes(), true, None).unwrap()
    }

    fn col_vals(d: &Dataset, col: usize) -> Vec<CellValue> {
        d.rows().map(|r| r[col].clone()).collect()
    }

    #[test]
    fn binarize_boundary_goes_to_zero() {
        let d = ints("a\n-1\n2\n0\n");
        let r = transform(&d, "o", "op", TransformFn::Binarize { threshold: 0.0 }, &[0]).unwrap();
        assert_eq!(
            col_vals(&r.output, 0),
            vec![CellValue::Int(0), CellValue::Int(1), CellValue::Int(0)]
        );
        assert_eq!(r.tensors[0].nnz(), 3);
        assert_eq!(r.output.row_count(), d.row_count());
        assert!(!r.descriptor.contextual);
    }

    #[test]
    fn impute_mean_fills_nulls() {
        let d = ints("a,b\n1,0\n,0\n3,0\n");
        let r = transform(&d, "o", "op", TransformFn::ImputeMean, &[0]).unwrap();
        assert_eq!(
            col_vals(&r.output, 0),
            vec![CellValue::Int(1), CellValue::Int(2), CellValue::Int(3)]
        );
        assert!(r.descriptor.contextual);
    }

    #[test]
    fn impute_median_and_mode() {
        let d = ints("a,b\n1,0\n9,0\n,0\n3,0\n");
        let r = transform(&d, "o", "op", TransformFn::ImputeMedian, &[0]).unwrap();
        assert_eq!(col_vals(&r.output, 0)[2], CellValue::Int(3));

        let d = load_csv_reader("d", "a,b\nx,1\ny,2\nx,3\n,4\n".as_bytes(), true, None).unwrap();
        let r = transform(&d, "o", "op", TransformFn::ImputeMode, &[0]).unwrap();
        assert_eq!(col_vals(&r.output, 0)[3], CellValue::Text("x".into()));
    }

    #[test]
    fn mode_tie_breaks_to_smallest() {
        let d = load_csv_reader("d", "a,b\ny,1\nx,2\n,3\n".as_bytes(), true, None).unwrap();
        let r = transform(&d, "o", "op", TransformFn::ImputeMode, &[0]).unwrap();
        assert_eq!(col_vals(&r.output, 0)[2], CellValue::Text("x".into()));
    }

    #[test]
    fn normalize_requires_real_column() {
        let d = ints("a\n1\n2\n");
        assert!(transform(&d, "o", "op", TransformFn::NormalizeMinMax, &[0]).is_err());
        let d = ints("a\n1.0\n3.0\n2.0\n");
        let r = transform(&d, "o", "op", TransformFn::NormalizeMinMax, &[0]).unwrap();
        assert_eq!(
            col_vals(&r.output, 0),
            vec![CellValue::Real(0.0), CellValue::Real(1.0), CellValue::Real(0.5)]
        );
    }

    #[test]
    fn discretize_quantile_bins_preserve_type() {
        let d = ints("a\n1\n2\n3\n4\n5\n6\n7\n8\n");
        let r = transform(&d, "o", "op", TransformFn::Discretize { bins: 4 }, &[0]).unwrap();
        let vals = col_vals(&r.output, 0);
        assert_eq!(vals[0], CellValue::Int(0));
        assert_eq!(vals[7], CellValue::Int(3));
        let distinct: std::collections::BTreeSet<_> = vals.into_iter().collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn value_map_replaces_matches() {
        let d = load_csv_reader("d", "g\nM\nF\nM\n".as_bytes(), true, None).unwrap();
        let func = TransformFn::ValueMap {
            pairs: vec![(CellValue::Text("M".into()), CellValue::Text("male".into()))],
        };
        let r = transform(&d, "o", "op", func, &[0]).unwrap();
        assert_eq!(col_vals(&r.output, 0)[0], CellValue::Text("male".into()));
        assert_eq!(col_vals(&r.output, 0)[1], CellValue::Text("F".into()));
    }

    #[test]
    fn numeric_fn_on_text_column_rejected() {
        let d = load_csv_reader("d", "a\nx\n".as_bytes(), true, None).unwrap();
        assert!(transform(&d, "o", "op", TransformFn::ImputeMean, &[0]).is_err());
        // A column with no non-null values cannot provide a mean.
        let d = load_csv_reader(
            "d",
            "a,b\n,1\n,2\n".as_bytes(),
            true,
            Some(&std::collections::HashMap::from([("a".to_string(), CellType::Integer)])),
        )
        .unwrap();
        assert!(transform(&d, "o", "op", TransformFn::ImputeMean, &[0]).is_err());
    }
}
