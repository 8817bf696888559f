//! Join and append executors.
//!
//! Joins do not preserve row indices, so their provenance is captured
//! actively: a hidden identifier column is injected into each input before
//! joining, the identifiers are read back from the joined rows to form the
//! tensor triples, and the columns are stripped from the output. Triple
//! extraction goes through a read log so tests can assert that no user
//! column is touched for capture.

use std::collections::{BTreeSet, HashMap};

use crate::attrmap::{AttrAnnot, AttrBitset, BitsetSemantics};
use crate::dataset::{Attribute, Dataset, Schema};
use crate::error::{Error, Result};
use crate::tensor::{DimensionRole, ProvTensor, RowIdx};
use crate::value::{CellType, CellValue};

use super::{CaptureResult, CaptureTrace, OpCategory, OpDescriptor, OpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
    Full,
}

impl JoinKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            JoinKind::Inner => "inner",
            JoinKind::Left => "left",
            JoinKind::Right => "right",
            JoinKind::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<JoinKind> {
        Some(match s {
            "inner" => JoinKind::Inner,
            "left" => JoinKind::Left,
            "right" => JoinKind::Right,
            "full" => JoinKind::Full,
            _ => return None,
        })
    }
}

fn unique_name(base: &str, taken: &BTreeSet<&str>) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    let mut k = 2;
    loop {
        let candidate = format!("{base}{k}");
        if !taken.contains(candidate.as_str()) {
            return candidate;
        }
        k += 1;
    }
}

fn with_id_column(d: &Dataset, id_name: &str) -> Result<Dataset> {
    let mut attrs = d.schema().attrs().to_vec();
    attrs.push(Attribute {
        name: id_name.to_string(),
        ty: CellType::Integer,
    });
    let schema = Schema::new(attrs)?;
    let rows: Vec<Vec<CellValue>> = d
        .rows()
        .enumerate()
        .map(|(i, r)| {
            let mut cells = r.to_vec();
            cells.push(CellValue::Int(i as i64));
            cells
        })
        .collect();
    Dataset::new(d.id(), schema, rows)
}

/// Logged cell reader; records which columns were consulted.
struct ReadLog<'a> {
    schema: &'a Schema,
    columns: BTreeSet<String>,
}

impl<'a> ReadLog<'a> {
    fn new(schema: &'a Schema) -> Self {
        ReadLog {
            schema,
            columns: BTreeSet::new(),
        }
    }

    fn read<'r>(&mut self, row: &'r [CellValue], col: usize) -> &'r CellValue {
        self.columns
            .insert(self.schema.attrs()[col].name.clone());
        &row[col]
    }
}

/// Right-side columns that survive into the join output (non-key columns).
pub fn join_rest_columns(right: &Schema, keys: &[(usize, usize)]) -> Vec<usize> {
    let right_key_cols: BTreeSet<usize> = keys.iter().map(|&(_, r)| r).collect();
    (0..right.len()).filter(|c| !right_key_cols.contains(c)).collect()
}

/// One joined output row from an optional pair of input rows; absent sides
/// pad with nulls, key values surviving from whichever side is present.
pub fn join_stitch_row(
    left_len: usize,
    right_rest: &[usize],
    keys: &[(usize, usize)],
    lrow: Option<&[CellValue]>,
    rrow: Option<&[CellValue]>,
) -> Vec<CellValue> {
    let mut cells: Vec<CellValue> = match lrow {
        Some(l) => l.to_vec(),
        None => {
            let mut c = vec![CellValue::Null; left_len];
            if let Some(r) = rrow {
                for &(lc, rc) in keys {
                    c[lc] = r[rc].clone();
                }
            }
            c
        }
    };
    match rrow {
        Some(r) => cells.extend(right_rest.iter().map(|&c| r[c].clone())),
        None => cells.extend(right_rest.iter().map(|_| CellValue::Null)),
    }
    cells
}

/// One appended output row from a right-side input row, given where each
/// right attribute lands in the output schema.
pub fn append_right_row(out_len: usize, right_positions: &[usize], row: &[CellValue]) -> Vec<CellValue> {
    let mut cells = vec![CellValue::Null; out_len];
    for (j, &pos) in right_positions.iter().enumerate() {
        cells[pos] = row[j].clone();
    }
    cells
}

/// Output positions of the right-side attributes of an append.
pub fn append_right_positions(left: &Schema, right: &Schema) -> Vec<usize> {
    let mut appended = left.len();
    right
        .attrs()
        .iter()
        .map(|a| match left.position(&a.name) {
            Some(p) => p,
            None => {
                let pos = appended;
                appended += 1;
                pos
            }
        })
        .collect()
}

/// Stitched rows of the id-augmented join, bag semantics: one output row per
/// matching pair. Left rows drive the order; unmatched right rows (right and
/// full joins) follow at the end.
fn join_core(
    left: &Dataset,
    right: &Dataset,
    keys: &[(usize, usize)],
    kind: JoinKind,
) -> Result<(Schema, Vec<Vec<CellValue>>)> {
    let right_rest = join_rest_columns(right.schema(), keys);
    let left_len = left.schema().len();

    let mut attrs = left.schema().attrs().to_vec();
    for &c in &right_rest {
        attrs.push(right.schema().attrs()[c].clone());
    }
    let schema = Schema::new(attrs)?;

    // Hash the right side on its key tuple; rows with a null key never match.
    let mut table: HashMap<Vec<&CellValue>, Vec<usize>> = HashMap::new();
    for (j, row) in right.rows().enumerate() {
        let key: Vec<&CellValue> = keys.iter().map(|&(_, rc)| &row[rc]).collect();
        if key.iter().any(|c| c.is_null()) {
            continue;
        }
        table.entry(key).or_default().push(j);
    }

    let mut rows: Vec<Vec<CellValue>> = Vec::new();
    let mut right_matched = vec![false; right.row_count()];
    for lrow in left.rows() {
        let key: Vec<&CellValue> = keys.iter().map(|&(lc, _)| &lrow[lc]).collect();
        let matches = if key.iter().any(|c| c.is_null()) {
            None
        } else {
            table.get(&key)
        };
        match matches {
            Some(js) => {
                for &j in js {
                    right_matched[j] = true;
                    let rrow = right.get_row(j)?;
                    rows.push(join_stitch_row(left_len, &right_rest, keys, Some(lrow), Some(rrow)));
                }
            }
            None => {
                if matches!(kind, JoinKind::Left | JoinKind::Full) {
                    rows.push(join_stitch_row(left_len, &right_rest, keys, Some(lrow), None));
                }
            }
        }
    }
    if matches!(kind, JoinKind::Right | JoinKind::Full) {
        for (j, matched) in right_matched.iter().enumerate() {
            if !matched {
                let rrow = right.get_row(j)?;
                rows.push(join_stitch_row(left_len, &right_rest, keys, None, Some(rrow)));
            }
        }
    }
    Ok((schema, rows))
}

/// Annotation for the attribute positions one input side claims in the
/// output: a bitset when the mapping preserves order, the kept-order list
/// otherwise.
fn side_annot(out_len: usize, out_pos_in_order: &[usize], semantics: BitsetSemantics) -> AttrAnnot {
    let increasing = out_pos_in_order.windows(2).all(|w| w[0] < w[1]);
    if increasing {
        let claimed: BTreeSet<usize> = out_pos_in_order.iter().copied().collect();
        AttrAnnot::Bitset(AttrBitset::new(
            (0..out_len).map(|p| claimed.contains(&p)),
            semantics,
        ))
    } else {
        let mut map = vec![None; out_len];
        for (attr, &pos) in out_pos_in_order.iter().enumerate() {
            map[pos] = Some(attr);
        }
        AttrAnnot::KeptOrder { semantics, map }
    }
}

/// Join two datasets on key column pairs. The key column is kept once,
/// under its left name; the output schema is the left attributes followed by
/// the non-key right attributes.
pub fn join(
    l: &Dataset,
    r: &Dataset,
    out_id: &str,
    op_id: &str,
    keys: &[(usize, usize)],
    kind: JoinKind,
) -> Result<CaptureResult> {
    if keys.is_empty() {
        return Err(Error::InvalidParams("join needs at least one key pair".into()));
    }
    let mut seen_l = BTreeSet::new();
    let mut seen_r = BTreeSet::new();
    for &(lc, rc) in keys {
        let la = l.schema().attr(lc)?;
        let ra = r.schema().attr(rc)?;
        if la.ty != ra.ty {
            return Err(Error::TypeMismatch(format!(
                "join key '{}' ({}) is incompatible with '{}' ({})",
                la.name, la.ty, ra.name, ra.ty
            )));
        }
        if !seen_l.insert(lc) || !seen_r.insert(rc) {
            return Err(Error::InvalidParams("duplicate column in join keys".into()));
        }
    }

    // Active capture: inject identifier columns before joining.
    let taken: BTreeSet<&str> = l
        .schema()
        .attrs()
        .iter()
        .chain(r.schema().attrs())
        .map(|a| a.name.as_str())
        .collect();
    let lid_name = unique_name("__tensprov_lid", &taken);
    let rid_name = unique_name("__tensprov_rid", &taken);
    let left_aug = with_id_column(l, &lid_name)?;
    let right_aug = with_id_column(r, &rid_name)?;

    let (inter_schema, inter_rows) = join_core(&left_aug, &right_aug, keys, kind)?;

    // Read the identifiers back from the joined rows.
    let lid_pos = inter_schema.position(&lid_name).expect("lid column present");
    let rid_pos = inter_schema.position(&rid_name).expect("rid column present");
    let mut log = ReadLog::new(&inter_schema);
    let mut triples: Vec<(RowIdx, RowIdx, RowIdx)> = Vec::new();
    let mut left_only: Vec<Vec<RowIdx>> = Vec::new();
    let mut right_only: Vec<Vec<RowIdx>> = Vec::new();
    for (o, row) in inter_rows.iter().enumerate() {
        let lid = match log.read(row, lid_pos) {
            CellValue::Int(v) => Some(*v as RowIdx),
            _ => None,
        };
        let rid = match log.read(row, rid_pos) {
            CellValue::Int(v) => Some(*v as RowIdx),
            _ => None,
        };
        match (lid, rid) {
            (Some(li), Some(ri)) => triples.push((o as RowIdx, li, ri)),
            (Some(li), None) => left_only.push(vec![o as RowIdx, li]),
            (None, Some(ri)) => right_only.push(vec![o as RowIdx, ri]),
            (None, None) => {
                return Err(Error::InvalidTensor(
                    "joined row carries neither input identifier".into(),
                ))
            }
        }
    }

    // Strip the identifier columns.
    let final_cols: Vec<usize> = (0..inter_schema.len())
        .filter(|&c| c != lid_pos && c != rid_pos)
        .collect();
    let final_schema = Schema::new(
        final_cols
            .iter()
            .map(|&c| inter_schema.attrs()[c].clone())
            .collect(),
    )?;
    let rows: Vec<Vec<CellValue>> = inter_rows
        .iter()
        .map(|row| final_cols.iter().map(|&c| row[c].clone()).collect())
        .collect();
    let output = Dataset::new(out_id, final_schema, rows)?;

    let mut tensors = vec![ProvTensor::join(out_id, l.id(), r.id(), triples)?];
    if !left_only.is_empty() {
        tensors.push(ProvTensor::from_leaves(
            vec![DimensionRole::output(out_id), DimensionRole::input(l.id())],
            left_only,
        )?);
    }
    if !right_only.is_empty() {
        tensors.push(ProvTensor::from_leaves(
            vec![DimensionRole::output(out_id), DimensionRole::input(r.id())],
            right_only,
        )?);
    }

    // Attribute stitch: left claims its own positions plus nothing else;
    // the right side claims the kept key columns and its appended columns.
    let nl = l.schema().len();
    let out_len = output.schema().len();
    let left_positions: Vec<usize> = (0..nl).collect();
    let right_key_map: HashMap<usize, usize> = keys.iter().map(|&(lc, rc)| (rc, lc)).collect();
    let right_key_cols: BTreeSet<usize> = keys.iter().map(|&(_, rc)| rc).collect();
    let mut appended = 0usize;
    let right_positions: Vec<usize> = (0..r.schema().len())
        .map(|j| {
            if let Some(&lc) = right_key_map.get(&j) {
                lc
            } else {
                let pos = nl + appended;
                appended += 1;
                pos
            }
        })
        .collect();
    debug_assert_eq!(appended, r.schema().len() - right_key_cols.len());
    let annots = vec![
        side_annot(out_len, &left_positions, BitsetSemantics::JoinSide),
        side_annot(out_len, &right_positions, BitsetSemantics::JoinSide),
    ];

    let descriptor = OpDescriptor {
        id: op_id.to_string(),
        category: OpCategory::Join,
        name: "join".to_string(),
        contextual: false,
        inputs: vec![l.id().to_string(), r.id().to_string()],
        output: out_id.to_string(),
        annots,
        params: OpParams::Join {
            keys: keys.to_vec(),
            kind,
        },
    };
    Ok(CaptureResult {
        output,
        tensors,
        descriptor,
        trace: CaptureTrace {
            columns_read_for_provenance: log.columns,
        },
    })
}

/// Append the rows of `r` after the rows of `l`. Schemas may differ: the
/// output schema is the left attributes followed by the right-only
/// attributes, and missing cells are null.
pub fn append(l: &Dataset, r: &Dataset, out_id: &str, op_id: &str) -> Result<CaptureResult> {
    let mut attrs = l.schema().attrs().to_vec();
    for ra in r.schema().attrs() {
        match l.schema().position(&ra.name) {
            Some(p) => {
                let la = &l.schema().attrs()[p];
                if la.ty != ra.ty {
                    return Err(Error::TypeMismatch(format!(
                        "attribute '{}' present in both inputs with incompatible types ({} vs {})",
                        ra.name, la.ty, ra.ty
                    )));
                }
            }
            None => attrs.push(ra.clone()),
        }
    }
    let schema = Schema::new(attrs)?;
    let out_len = schema.len();

    let mut rows: Vec<Vec<CellValue>> = Vec::with_capacity(l.row_count() + r.row_count());
    for row in l.rows() {
        let mut cells = row.to_vec();
        cells.resize(out_len, CellValue::Null);
        rows.push(cells);
    }
    // Where each right attribute lands in the output schema.
    let right_positions = append_right_positions(l.schema(), r.schema());
    for row in r.rows() {
        rows.push(append_right_row(out_len, &right_positions, row));
    }
    let output = Dataset::new(out_id, schema, rows)?;

    let (tl, tr) = ProvTensor::append(
        out_id,
        l.id(),
        r.id(),
        l.row_count() as RowIdx,
        r.row_count() as RowIdx,
    );
    let left_positions: Vec<usize> = (0..l.schema().len()).collect();
    let annots = vec![
        side_annot(out_len, &left_positions, BitsetSemantics::AppendSide),
        side_annot(out_len, &right_positions, BitsetSemantics::AppendSide),
    ];
    let descriptor = OpDescriptor {
        id: op_id.to_string(),
        category: OpCategory::Append,
        name: "append".to_string(),
        contextual: false,
        inputs: vec![l.id().to_string(), r.id().to_string()],
        output: out_id.to_string(),
        annots,
        params: OpParams::Append,
    };
    Ok(CaptureResult {
        output,
        tensors: vec![tl, tr],
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

    fn paper_right() -> Dataset {
        load_csv_reader("dr", "ID,Name\n20,Alice\n40,Bob\n".as_bytes(), true, None).unwrap()
    }

    fn text(s: &str) -> CellValue {
        CellValue::Text(s.to_string())
    }

    #[test]
    fn inner_join_of_the_worked_example() {
        let r = join(&paper_left(), &paper_right(), "dj", "op", &[(0, 0)], JoinKind::Inner).unwrap();
        assert_eq!(r.output.row_count(), 2);
        assert_eq!(
            r.output.get_row(0).unwrap(),
            &[
                CellValue::Int(20),
                text("1994-03-08"),
                text("M"),
                text("Alice")
            ]
        );
        assert_eq!(
            r.output.get_row(1).unwrap(),
            &[
                CellValue::Int(40),
                text("1987-11-23"),
                text("M"),
                text("Bob")
            ]
        );
        let mut leaves = r.tensors[0].leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 1, 0], vec![1, 3, 1]]);
        assert_eq!(r.tensors.len(), 1);
        assert_eq!(r.tensors[0].nnz(), r.output.row_count() as u64);
    }

    #[test]
    fn capture_reads_only_injected_identifier_columns() {
        let r = join(&paper_left(), &paper_right(), "dj", "op", &[(0, 0)], JoinKind::Inner).unwrap();
        assert_eq!(
            r.trace.columns_read_for_provenance,
            BTreeSet::from(["__tensprov_lid".to_string(), "__tensprov_rid".to_string()])
        );
    }

    #[test]
    fn join_side_bitsets_from_schema_stitch() {
        let r = join(&paper_left(), &paper_right(), "dj", "op", &[(0, 0)], JoinKind::Inner).unwrap();
        assert_eq!(r.descriptor.annots[0].render(), "1110");
        assert_eq!(r.descriptor.annots[1].render(), "1001");
    }

    #[test]
    fn empty_right_input_inner_join() {
        let empty = load_csv_reader("dr", "ID,Name\n".as_bytes(), true, None).unwrap();
        // Type of an empty ID column infers to text; hint-free joins need
        // compatible key types, so join on a text key from the left too.
        let left = load_csv_reader("dl", "K,V\nx,1\n".as_bytes(), true, None).unwrap();
        let r = join(&left, &empty, "dj", "op", &[(0, 0)], JoinKind::Inner).unwrap();
        assert_eq!(r.output.row_count(), 0);
        assert_eq!(r.tensors[0].nnz(), 0);
    }

    #[test]
    fn duplicate_keys_multiply() {
        let l = load_csv_reader("dl", "K,V\n1,a\n1,b\n".as_bytes(), true, None).unwrap();
        let r = load_csv_reader("dr", "K,W\n1,x\n1,y\n1,z\n".as_bytes(), true, None).unwrap();
        let res = join(&l, &r, "dj", "op", &[(0, 0)], JoinKind::Inner).unwrap();
        assert_eq!(res.output.row_count(), 6);
        assert_eq!(res.tensors[0].nnz(), 6);
    }

    #[test]
    fn left_join_pads_and_supplements() {
        let res = join(&paper_left(), &paper_right(), "dj", "op", &[(0, 0)], JoinKind::Left).unwrap();
        assert_eq!(res.output.row_count(), 4);
        // Unmatched rows keep input order interleaved with matches.
        assert_eq!(res.output.cell(0, 3).unwrap(), &CellValue::Null);
        assert_eq!(res.output.cell(1, 3).unwrap(), &text("Alice"));
        assert_eq!(res.tensors.len(), 2);
        assert_eq!(res.tensors[0].nnz(), 2);
        let supp = &res.tensors[1];
        assert_eq!(supp.order(), 2);
        assert_eq!(supp.dims()[1].dataset, "dl");
        let mut leaves = supp.leaf_vec();
        leaves.sort();
        assert_eq!(leaves, vec![vec![0, 0], vec![2, 2]]);
    }

    #[test]
    fn full_join_has_supplements_on_both_sides() {
        let l = load_csv_reader("dl", "K,V\n1,a\n2,b\n".as_bytes(), true, None).unwrap();
        let r = load_csv_reader("dr", "K,W\n2,x\n3,y\n".as_bytes(), true, None).unwrap();
        let res = join(&l, &r, "dj", "op", &[(0, 0)], JoinKind::Full).unwrap();
        assert_eq!(res.output.row_count(), 3);
        assert_eq!(res.tensors.len(), 3);
        // The right-only row carries the key value from the right side.
        assert_eq!(res.output.cell(2, 0).unwrap(), &CellValue::Int(3));
        assert_eq!(res.output.cell(2, 1).unwrap(), &CellValue::Null);
    }

    #[test]
    fn incompatible_key_types_rejected() {
        let l = load_csv_reader("dl", "K\n1\n".as_bytes(), true, None).unwrap();
        let r = load_csv_reader("dr", "K\nx\n".as_bytes(), true, None).unwrap();
        assert!(join(&l, &r, "dj", "op", &[(0, 0)], JoinKind::Inner).is_err());
    }

    #[test]
    fn reordered_right_side_falls_back_to_kept_order() {
        let l = load_csv_reader("dl", "K,V\n1,a\n".as_bytes(), true, None).unwrap();
        let r = load_csv_reader("dr", "W,K\nx,1\n".as_bytes(), true, None).unwrap();
        let res = join(&l, &r, "dj", "op", &[(0, 1)], JoinKind::Inner).unwrap();
        // Right attrs: W -> appended position 2, K -> key position 0.
        match &res.descriptor.annots[1] {
            AttrAnnot::KeptOrder { map, .. } => {
                assert_eq!(map, &vec![Some(1), None, Some(0)]);
            }
            other => panic!("expected kept-order fallback, got {other:?}"),
        }
        assert_eq!(res.descriptor.annots[1].backward(0).unwrap(), BTreeSet::from([1]));
        assert_eq!(res.descriptor.annots[1].forward(0).unwrap(), BTreeSet::from([2]));
    }

    #[test]
    fn append_of_the_worked_example() {
        let res = append(&paper_left(), &paper_right(), "da", "op").unwrap();
        assert_eq!(res.output.row_count(), 6);
        assert_eq!(res.output.schema().len(), 4);
        assert_eq!(
            res.output.get_row(4).unwrap(),
            &[CellValue::Int(20), CellValue::Null, CellValue::Null, text("Alice")]
        );
        assert_eq!(
            res.output.get_row(5).unwrap(),
            &[CellValue::Int(40), CellValue::Null, CellValue::Null, text("Bob")]
        );
        let mut left_leaves = res.tensors[0].leaf_vec();
        left_leaves.sort();
        assert_eq!(left_leaves, vec![vec![0, 0], vec![1, 1], vec![2, 2], vec![3, 3]]);
        let mut right_leaves = res.tensors[1].leaf_vec();
        right_leaves.sort();
        assert_eq!(right_leaves, vec![vec![4, 0], vec![5, 1]]);
        assert_eq!(res.descriptor.annots[0].render(), "1110");
        assert_eq!(res.descriptor.annots[1].render(), "1001");
    }

    #[test]
    fn append_empty_right_is_left() {
        let l = paper_left();
        let r = load_csv_reader("dr",
            "ID,Birthdate,Gender\n".as_bytes(),
            true,
            Some(&std::collections::HashMap::from([
                ("ID".to_string(), CellType::Integer),
                ("Birthdate".to_string(), CellType::Text),
                ("Gender".to_string(), CellType::Text),
            ])),
        )
        .unwrap();
        let res = append(&l, &r, "da", "op").unwrap();
        assert_eq!(res.output.row_count(), 4);
        for i in 0..4 {
            assert_eq!(res.output.get_row(i).unwrap(), l.get_row(i).unwrap());
        }
        assert_eq!(res.tensors[1].nnz(), 0);
        assert_eq!(res.descriptor.annots[0].render(), "111");
        assert_eq!(res.descriptor.annots[1].render(), "111");
    }

    #[test]
    fn append_incompatible_shared_attribute_rejected() {
        let l = load_csv_reader("dl", "A\n1\n".as_bytes(), true, None).unwrap();
        let r = load_csv_reader("dr", "A\nx\n".as_bytes(), true, None).unwrap();
        assert!(append(&l, &r, "da", "op").is_err());
    }
}
