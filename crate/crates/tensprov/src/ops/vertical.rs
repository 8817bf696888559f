//! Vertical reduction and vertical augmentation executors. Both preserve the
//! row count and carry an identity tensor; the schema change is described by
//! a bitset annotation.

use std::collections::BTreeSet;

use crate::attrmap::{AttrAnnot, AttrBitset, BitsetSemantics};
use crate::dataset::{Attribute, Dataset, Schema};
use crate::error::{Error, Result};
use crate::tensor::ProvTensor;
use crate::value::{CellType, CellValue};

use super::{CaptureResult, CaptureTrace, OpCategory, OpDescriptor, OpParams};

/// Remove the given attribute positions, preserving order of the rest.
pub fn drop_columns(d: &Dataset, out_id: &str, op_id: &str, drop: &[usize]) -> Result<CaptureResult> {
    if drop.is_empty() {
        return Err(Error::InvalidParams("drop-columns needs at least one column".into()));
    }
    let dropped: BTreeSet<usize> = drop.iter().copied().collect();
    for &c in &dropped {
        d.schema().attr(c)?;
    }
    if dropped.len() == d.schema().len() {
        return Err(Error::InvalidParams("drop-columns cannot drop every column".into()));
    }

    let kept: Vec<usize> = (0..d.schema().len()).filter(|c| !dropped.contains(c)).collect();
    let schema = Schema::new(kept.iter().map(|&c| d.schema().attrs()[c].clone()).collect())?;
    let rows: Vec<Vec<CellValue>> = d
        .rows()
        .map(|r| kept.iter().map(|&c| r[c].clone()).collect())
        .collect();
    let output = Dataset::new(out_id, schema, rows)?;

    let bits = AttrBitset::new(
        (0..d.schema().len()).map(|c| !dropped.contains(&c)),
        BitsetSemantics::VerticalReduction,
    );
    let descriptor = OpDescriptor {
        id: op_id.to_string(),
        category: OpCategory::VerticalReduction,
        name: "drop-columns".to_string(),
        contextual: false,
        inputs: vec![d.id().to_string()],
        output: out_id.to_string(),
        annots: vec![AttrAnnot::Bitset(bits)],
        params: OpParams::DropColumns {
            dropped: dropped.into_iter().collect(),
        },
    };
    Ok(CaptureResult {
        output,
        tensors: vec![ProvTensor::identity(d.id(), out_id, d.row_count() as u32)],
        descriptor,
        trace: CaptureTrace::default(),
    })
}

/// Distinct non-null values of a column in ascending order.
fn distinct_values(d: &Dataset, col: usize) -> Vec<CellValue> {
    let mut set: BTreeSet<CellValue> = BTreeSet::new();
    for row in d.rows() {
        if !row[col].is_null() {
            set.insert(row[col].clone());
        }
    }
    set.into_iter().collect()
}

fn check_new_names(schema: &Schema, names: &[String]) -> Result<()> {
    let mut seen: BTreeSet<&str> = schema.attrs().iter().map(|a| a.name.as_str()).collect();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::InvalidParams(format!(
                "generated column name '{n}' collides with an existing attribute"
            )));
        }
    }
    Ok(())
}

fn augmentation_bitset(input_attrs: usize, sources: &[usize], new_cols: usize) -> AttrBitset {
    let total = input_attrs + new_cols;
    AttrBitset::new(
        (0..total).map(|i| i >= input_attrs || sources.contains(&i)),
        BitsetSemantics::VerticalAugmentation { input_attrs },
    )
}

fn augment(
    d: &Dataset,
    out_id: &str,
    op_id: &str,
    name: &str,
    sources: &[usize],
    new_attrs: Vec<Attribute>,
    new_cells: impl Fn(&[CellValue]) -> Vec<CellValue>,
    params: OpParams,
) -> Result<CaptureResult> {
    let new_names: Vec<String> = new_attrs.iter().map(|a| a.name.clone()).collect();
    check_new_names(d.schema(), &new_names)?;

    let mut attrs = d.schema().attrs().to_vec();
    attrs.extend(new_attrs);
    let schema = Schema::new(attrs)?;

    let rows: Vec<Vec<CellValue>> = d
        .rows()
        .map(|r| {
            let mut cells = r.to_vec();
            cells.extend(new_cells(r));
            cells
        })
        .collect();
    let output = Dataset::new(out_id, schema, rows)?;

    let bits = augmentation_bitset(d.schema().len(), sources, new_names.len());
    let descriptor = OpDescriptor {
        id: op_id.to_string(),
        category: OpCategory::VerticalAugmentation,
        name: name.to_string(),
        contextual: false,
        inputs: vec![d.id().to_string()],
        output: out_id.to_string(),
        annots: vec![AttrAnnot::Bitset(bits)],
        params,
    };
    Ok(CaptureResult {
        output,
        tensors: vec![ProvTensor::identity(d.id(), out_id, d.row_count() as u32)],
        descriptor,
        trace: CaptureTrace::default(),
    })
}

/// Encode one cell of a one-hot expansion: indicator per learned category.
pub fn one_hot_cells(cell: &CellValue, categories: &[CellValue]) -> Vec<CellValue> {
    categories
        .iter()
        .map(|cat| CellValue::Int(i64::from(cell == cat)))
        .collect()
}

/// Append one indicator column per distinct value of a text or integer
/// column, in ascending value order.
pub fn one_hot_encode(d: &Dataset, out_id: &str, op_id: &str, col: usize, cap: usize) -> Result<CaptureResult> {
    let attr = d.schema().attr(col)?.clone();
    if !matches!(attr.ty, CellType::Text | CellType::Integer) {
        return Err(Error::TypeMismatch(format!(
            "one-hot requires a text or integer column, '{}' is {}",
            attr.name, attr.ty
        )));
    }
    let categories = distinct_values(d, col);
    if categories.len() > cap {
        return Err(Error::InvalidParams(format!(
            "one-hot cardinality {} of column '{}' exceeds the cap {cap}",
            categories.len(),
            attr.name
        )));
    }
    let new_attrs: Vec<Attribute> = categories
        .iter()
        .map(|v| Attribute {
            name: format!("{}_{}", attr.name, v),
            ty: CellType::Integer,
        })
        .collect();
    let cats = categories.clone();
    augment(
        d,
        out_id,
        op_id,
        "one-hot",
        &[col],
        new_attrs,
        move |row| one_hot_cells(&row[col], &cats),
        OpParams::OneHot {
            column: col,
            categories,
            cap,
        },
    )
}

/// Index one cell against learned categories (null stays null).
pub fn string_index_cell(cell: &CellValue, categories: &[CellValue]) -> CellValue {
    if cell.is_null() {
        return CellValue::Null;
    }
    match categories.binary_search(cell) {
        Ok(i) => CellValue::Int(i as i64),
        Err(_) => CellValue::Null,
    }
}

/// Append a `<col>_index` column holding the rank of each value among the
/// distinct values of the column.
pub fn string_indexer(d: &Dataset, out_id: &str, op_id: &str, col: usize) -> Result<CaptureResult> {
    let attr = d.schema().attr(col)?.clone();
    if !matches!(attr.ty, CellType::Text | CellType::Integer) {
        return Err(Error::TypeMismatch(format!(
            "string-indexer requires a text or integer column, '{}' is {}",
            attr.name, attr.ty
        )));
    }
    let categories = distinct_values(d, col);
    let new_attrs = vec![Attribute {
        name: format!("{}_index", attr.name),
        ty: CellType::Integer,
    }];
    let cats = categories.clone();
    augment(
        d,
        out_id,
        op_id,
        "string-indexer",
        &[col],
        new_attrs,
        move |row| vec![string_index_cell(&row[col], &cats)],
        OpParams::StringIndexer {
            column: col,
            categories,
        },
    )
}

/// Functions available to `derive-columns` (space transformation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeriveFn {
    Sum,
    Product,
    Difference,
    Mean,
    Concat,
}

impl DeriveFn {
    pub fn name(&self) -> &'static str {
        match self {
            DeriveFn::Sum => "sum",
            DeriveFn::Product => "product",
            DeriveFn::Difference => "difference",
            DeriveFn::Mean => "mean",
            DeriveFn::Concat => "concat",
        }
    }

    pub fn parse(s: &str) -> Option<DeriveFn> {
        Some(match s {
            "sum" => DeriveFn::Sum,
            "product" => DeriveFn::Product,
            "difference" => DeriveFn::Difference,
            "mean" => DeriveFn::Mean,
            "concat" => DeriveFn::Concat,
            _ => return None,
        })
    }

    fn output_type(&self) -> CellType {
        match self {
            DeriveFn::Concat => CellType::Text,
            _ => CellType::Real,
        }
    }
}

/// Compute one derived cell from the source cells of a row.
pub fn derive_cell(func: DeriveFn, sources: &[&CellValue]) -> CellValue {
    match func {
        DeriveFn::Concat => {
            let parts: Vec<String> = sources.iter().map(|c| c.to_string()).collect();
            CellValue::Text(parts.join("_"))
        }
        _ => {
            let mut nums = Vec::with_capacity(sources.len());
            for c in sources {
                match c.as_f64() {
                    Some(v) => nums.push(v),
                    None => return CellValue::Null,
                }
            }
            let v = match func {
                DeriveFn::Sum => nums.iter().sum(),
                DeriveFn::Product => nums.iter().product(),
                DeriveFn::Difference => nums[1..].iter().fold(nums[0], |a, b| a - b),
                DeriveFn::Mean => nums.iter().sum::<f64>() / nums.len() as f64,
                DeriveFn::Concat => unreachable!(),
            };
            CellValue::Real(v)
        }
    }
}

/// Space transformation: engineer new columns from a set of source columns.
pub fn derive_columns(
    d: &Dataset,
    out_id: &str,
    op_id: &str,
    sources: &[usize],
    derived: &[(String, DeriveFn)],
) -> Result<CaptureResult> {
    if sources.is_empty() || derived.is_empty() {
        return Err(Error::InvalidParams(
            "derive-columns needs source columns and at least one derived column".into(),
        ));
    }
    for &c in sources {
        let attr = d.schema().attr(c)?;
        let numeric_needed = derived.iter().any(|(_, f)| *f != DeriveFn::Concat);
        if numeric_needed && !matches!(attr.ty, CellType::Integer | CellType::Real) {
            return Err(Error::TypeMismatch(format!(
                "derive-columns source '{}' must be numeric for {}",
                attr.name,
                derived
                    .iter()
                    .find(|(_, f)| *f != DeriveFn::Concat)
                    .map(|(_, f)| f.name())
                    .unwrap_or("numeric functions")
            )));
        }
    }
    let new_attrs: Vec<Attribute> = derived
        .iter()
        .map(|(name, f)| Attribute {
            name: name.clone(),
            ty: f.output_type(),
        })
        .collect();
    let srcs = sources.to_vec();
    let specs = derived.to_vec();
    augment(
        d,
        out_id,
        op_id,
        "derive-columns",
        sources,
        new_attrs,
        move |row| {
            let cells: Vec<&CellValue> = srcs.iter().map(|&c| &row[c]).collect();
            specs.iter().map(|(_, f)| derive_cell(*f, &cells)).collect()
        },
        OpParams::DeriveColumns {
            sources: sources.to_vec(),
            derived: derived.to_vec(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_csv_reader;

    fn d5() -> Dataset {
        load_csv_reader("d",
            "a,b,c,dd,e\n1,2,3,4,5\n6,7,8,9,10\n".as_bytes(),
            true,
            None,
        )
        .unwrap()
    }

    #[test]
    fn drop_columns_bitset_matches_metadata_example() {
        let r = drop_columns(&d5(), "o", "op", &[1, 2]).unwrap();
        assert_eq!(r.descriptor.annots[0].render(), "10011");
        assert_eq!(r.output.schema().len(), 3);
        assert_eq!(r.output.schema().attr(0).unwrap().name, "a");
        assert_eq!(r.output.schema().attr(1).unwrap().name, "dd");
        assert_eq!(r.output.row_count(), 2);
        assert_eq!(r.output.cell(0, 2).unwrap(), &CellValue::Int(5));
    }

    #[test]
    fn drop_columns_rejects_empty_and_total_drops() {
        assert!(drop_columns(&d5(), "o", "op", &[]).is_err());
        assert!(drop_columns(&d5(), "o", "op", &[0, 1, 2, 3, 4]).is_err());
        assert!(drop_columns(&d5(), "o", "op", &[9]).is_err());
    }

    #[test]
    fn one_hot_gender_column() {
        let d = load_csv_reader("d", "g\nM\nF\nM\n".as_bytes(), true, None).unwrap();
        let r = one_hot_encode(&d, "o", "op", 0, 64).unwrap();
        assert_eq!(r.output.schema().len(), 3);
        assert_eq!(r.output.schema().attr(1).unwrap().name, "g_F");
        assert_eq!(r.output.schema().attr(2).unwrap().name, "g_M");
        // Every row's indicators sum to one.
        for row in r.output.rows() {
            let sum: i64 = row[1..]
                .iter()
                .map(|c| match c {
                    CellValue::Int(v) => *v,
                    _ => 0,
                })
                .sum();
            assert_eq!(sum, 1);
        }
        assert_eq!(r.descriptor.annots[0].render(), "111");
    }

    #[test]
    fn one_hot_single_distinct_value() {
        let d = load_csv_reader("d", "g\nx\nx\n".as_bytes(), true, None).unwrap();
        let r = one_hot_encode(&d, "o", "op", 0, 64).unwrap();
        assert_eq!(r.output.schema().len(), 2);
        assert_eq!(r.output.cell(0, 1).unwrap(), &CellValue::Int(1));
        assert_eq!(r.output.cell(1, 1).unwrap(), &CellValue::Int(1));
    }

    #[test]
    fn one_hot_cap_and_type_errors() {
        let d = load_csv_reader("d", "g\na\nb\nc\n".as_bytes(), true, None).unwrap();
        assert!(one_hot_encode(&d, "o", "op", 0, 2).is_err());
        let d = load_csv_reader("d", "g\n1.5\n".as_bytes(), true, None).unwrap();
        assert!(one_hot_encode(&d, "o", "op", 0, 64).is_err());
    }

    #[test]
    fn derive_two_columns_from_two_sources_gives_combined_bitset() {
        let d = load_csv_reader("d", "a,b,c,dd\n1,2,3,4\n".as_bytes(), true, None).unwrap();
        let r = derive_columns(
            &d,
            "o",
            "op",
            &[0, 2],
            &[("s".into(), DeriveFn::Sum), ("p".into(), DeriveFn::Product)],
        )
        .unwrap();
        assert_eq!(r.descriptor.annots[0].render(), "101011");
        assert_eq!(r.output.cell(0, 4).unwrap(), &CellValue::Real(4.0));
        assert_eq!(r.output.cell(0, 5).unwrap(), &CellValue::Real(3.0));
    }

    #[test]
    fn string_indexer_ranks_values() {
        let d = load_csv_reader("d", "g,x\nM,1\nF,2\n,3\nM,4\n".as_bytes(), true, None).unwrap();
        let r = string_indexer(&d, "o", "op", 0).unwrap();
        let idx: Vec<&CellValue> = r.output.rows().map(|row| &row[2]).collect();
        assert_eq!(idx[0], &CellValue::Int(1));
        assert_eq!(idx[1], &CellValue::Int(0));
        assert_eq!(idx[2], &CellValue::Null);
        assert_eq!(idx[3], &CellValue::Int(1));
        assert_eq!(r.descriptor.annots[0].render(), "101");
    }

    #[test]
    fn name_collisions_rejected() {
        let d = load_csv_reader("d", "g,g_M\nM,1\n".as_bytes(), true, None).unwrap();
        assert!(one_hot_encode(&d, "o", "op", 0, 64).is_err());
    }
}
