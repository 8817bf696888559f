//! In-memory tabular datasets.
//!
//! A dataset is an identifier, an ordered typed schema, and a dense sequence
//! of rows. Row indices are assigned at construction (0-based, in order) and
//! never reused or reordered: every provenance tensor refers to rows by these
//! indices. Datasets are immutable after construction.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::value::{CellType, CellValue};

pub type DatasetId = String;

/// One named, typed attribute. Position within the schema is its identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub ty: CellType,
}

/// Ordered list of attributes with unique names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    attrs: Vec<Attribute>,
}

impl Schema {
    pub fn new(attrs: Vec<Attribute>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for a in &attrs {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::DuplicateAttribute(a.name.clone()));
            }
        }
        Ok(Schema { attrs })
    }

    pub fn from_pairs(pairs: &[(&str, CellType)]) -> Result<Self> {
        Schema::new(
            pairs
                .iter()
                .map(|(n, t)| Attribute {
                    name: (*n).to_string(),
                    ty: *t,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn attrs(&self) -> &[Attribute] {
        &self.attrs
    }

    pub fn attr(&self, pos: usize) -> Result<&Attribute> {
        self.attrs.get(pos).ok_or(Error::AttrOutOfRange {
            pos,
            len: self.attrs.len(),
        })
    }

    /// Position of the attribute with the given name.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }
}

/// Immutable in-memory table with stable 0-based row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: DatasetId,
    schema: Schema,
    rows: Vec<Box<[CellValue]>>,
}

impl Dataset {
    pub fn new(id: impl Into<DatasetId>, schema: Schema, rows: Vec<Vec<CellValue>>) -> Result<Self> {
        let id = id.into();
        let mut packed = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::RaggedRow {
                    line: i as u64 + 1,
                    expected: schema.len(),
                    found: row.len(),
                });
            }
            packed.push(row.into_boxed_slice());
        }
        Ok(Dataset {
            id,
            schema,
            rows: packed,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// The cells of row `i`, borrowed in place.
    pub fn get_row(&self, i: usize) -> Result<&[CellValue]> {
        self.rows.get(i).map(|r| &r[..]).ok_or(Error::RowOutOfRange {
            dataset: self.id.clone(),
            index: i,
            rows: self.rows.len(),
        })
    }

    pub fn rows(&self) -> impl Iterator<Item = &[CellValue]> {
        self.rows.iter().map(|r| &r[..])
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<&CellValue> {
        let r = self.get_row(row)?;
        r.get(col).ok_or(Error::AttrOutOfRange {
            pos: col,
            len: self.schema.len(),
        })
    }

    /// Position-wise total equality of two rows (`null == null` holds).
    pub fn row_equal(&self, i: usize, j: usize) -> Result<bool> {
        let a = self.get_row(i)?;
        let b = self.get_row(j)?;
        Ok(a == b)
    }

    /// Serialize to RFC-4180 CSV with a header row. Nulls become empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.attrs().iter().map(|a| a.name.as_str()))?;
        let mut field = String::new();
        for row in &self.rows {
            w.write_record(row.iter().map(|c| {
                field.clear();
                use std::fmt::Write as _;
                let _ = write!(field, "{c}");
                field.clone()
            }))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Byte length of the CSV serialization, computed without retaining it.
    pub fn csv_byte_size(&self) -> u64 {
        struct CountingSink(u64);
        impl Write for CountingSink {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0 += buf.len() as u64;
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let mut sink = CountingSink(0);
        // Serialization of an already-valid dataset cannot fail.
        self.write_csv(&mut sink).expect("csv serialization");
        sink.0
    }
}

/// Per-column type hints for CSV ingestion, keyed by attribute name.
pub type TypeHints = HashMap<String, CellType>;

/// Load a dataset from a CSV file (RFC-4180 quoting).
///
/// With `has_header` unset, columns are named `c0..cN`. Untyped columns are
/// inferred integer → real → text; an empty field is null in any column.
pub fn load_csv(
    id: impl Into<DatasetId>,
    path: impl AsRef<Path>,
    has_header: bool,
    hints: Option<&TypeHints>,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(id, file, has_header, hints)
}

/// Same as [`load_csv`] but from any reader, for tests and fuzzing.
pub fn load_csv_reader<R: Read>(
    id: impl Into<DatasetId>,
    reader: R,
    has_header: bool,
    hints: Option<&TypeHints>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut records = rdr.records();
    let mut names: Vec<String> = Vec::new();
    let mut raw_rows: Vec<(u64, Vec<String>)> = Vec::new();
    let mut width: Option<usize> = None;

    let mut first = true;
    while let Some(rec) = records.next() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fields: Vec<String> = rec.iter().map(|s| s.to_string()).collect();
        if first {
            first = false;
            width = Some(fields.len());
            if has_header {
                names = fields;
                continue;
            }
        }
        let expected = width.unwrap_or(fields.len());
        if fields.len() != expected {
            return Err(Error::RaggedRow {
                line,
                expected,
                found: fields.len(),
            });
        }
        raw_rows.push((line, fields));
    }

    let ncols = width.unwrap_or(0);
    if !has_header {
        names = (0..ncols).map(|i| format!("c{i}")).collect();
    }

    // Resolve each column type: hint wins, otherwise infer from the data.
    let mut types = Vec::with_capacity(ncols);
    for (c, name) in names.iter().enumerate() {
        let hinted = hints.and_then(|h| h.get(name)).copied();
        types.push(hinted.unwrap_or_else(|| infer_column_type(&raw_rows, c)));
    }

    let schema = Schema::new(
        names
            .into_iter()
            .zip(types.iter())
            .map(|(name, ty)| Attribute { name, ty: *ty })
            .collect(),
    )?;

    let mut rows = Vec::with_capacity(raw_rows.len());
    for (line, fields) in raw_rows {
        let mut cells = Vec::with_capacity(ncols);
        for (c, field) in fields.into_iter().enumerate() {
            cells.push(parse_cell(&field, types[c], line)?);
        }
        rows.push(cells);
    }

    Dataset::new(id, schema, rows)
}

fn infer_column_type(rows: &[(u64, Vec<String>)], col: usize) -> CellType {
    let mut all_int = true;
    let mut all_real = true;
    let mut saw_value = false;
    for (_, fields) in rows {
        let f = &fields[col];
        if f.is_empty() {
            continue;
        }
        saw_value = true;
        if all_int && f.parse::<i64>().is_err() {
            all_int = false;
        }
        if all_real && f.parse::<f64>().is_err() {
            all_real = false;
        }
        if !all_int && !all_real {
            break;
        }
    }
    if !saw_value {
        // All-null column: text is the least committal choice.
        return CellType::Text;
    }
    if all_int {
        CellType::Integer
    } else if all_real {
        CellType::Real
    } else {
        CellType::Text
    }
}

fn parse_cell(field: &str, ty: CellType, line: u64) -> Result<CellValue> {
    if field.is_empty() {
        return Ok(CellValue::Null);
    }
    let err = |ty: &'static str| Error::CellParse {
        value: field.to_string(),
        ty,
        line,
    };
    match ty {
        CellType::Integer => field
            .parse::<i64>()
            .map(CellValue::Int)
            .map_err(|_| err("integer")),
        CellType::Real => field
            .parse::<f64>()
            .map(CellValue::Real)
            .map_err(|_| err("real")),
        CellType::Boolean => match field {
            "true" | "True" | "TRUE" => Ok(CellValue::Bool(true)),
            "false" | "False" | "FALSE" => Ok(CellValue::Bool(false)),
            _ => Err(err("boolean")),
        },
        CellType::Text => Ok(CellValue::Text(field.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(data: &str, header: bool) -> Result<Dataset> {
        load_csv_reader("t", data.as_bytes(), header, None)
    }

    #[test]
    fn basic_ingestion() {
        let d = load("a,b\n1,x\n2,y\n", true).unwrap();
        assert_eq!(d.row_count(), 2);
        assert_eq!(d.schema().len(), 2);
        assert_eq!(d.schema().attr(0).unwrap().ty, CellType::Integer);
        assert_eq!(d.schema().attr(1).unwrap().ty, CellType::Text);
        assert_eq!(d.cell(0, 0).unwrap(), &CellValue::Int(1));
        assert_eq!(d.cell(1, 1).unwrap(), &CellValue::Text("y".into()));
    }

    #[test]
    fn header_only_gives_empty_dataset() {
        let d = load("a,b\n", true).unwrap();
        assert_eq!(d.row_count(), 0);
        assert_eq!(d.schema().len(), 2);
    }

    #[test]
    fn empty_field_in_integer_column_is_null() {
        let d = load("a,b\n1,2\n,4\n", true).unwrap();
        assert_eq!(d.schema().attr(0).unwrap().ty, CellType::Integer);
        assert_eq!(d.cell(1, 0).unwrap(), &CellValue::Null);
        assert_eq!(d.cell(1, 1).unwrap(), &CellValue::Int(4));
    }

    #[test]
    fn ragged_row_rejected_with_line() {
        let e = load("a,b\n1,2\n3\n", true).unwrap_err();
        match e {
            Error::RaggedRow { line, expected, found } => {
                assert_eq!(line, 3);
                assert_eq!(expected, 2);
                assert_eq!(found, 1);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn inference_widens_int_to_real_then_text() {
        let d = load("a,b,c\n1,1.5,1\n2,2,x\n", true).unwrap();
        assert_eq!(d.schema().attr(0).unwrap().ty, CellType::Integer);
        assert_eq!(d.schema().attr(1).unwrap().ty, CellType::Real);
        assert_eq!(d.schema().attr(2).unwrap().ty, CellType::Text);
    }

    #[test]
    fn headerless_columns_named_positionally() {
        let d = load("1,x\n2,y\n", false).unwrap();
        assert_eq!(d.schema().attr(0).unwrap().name, "c0");
        assert_eq!(d.schema().attr(1).unwrap().name, "c1");
        assert_eq!(d.row_count(), 2);
    }

    #[test]
    fn get_row_bounds() {
        let d = load("a\n1\n2\n", true).unwrap();
        assert!(d.get_row(1).is_ok());
        assert!(d.get_row(2).is_err());
    }

    #[test]
    fn row_equal_with_matching_nulls() {
        let d = load("a,b\n1,\n1,\n2,\n", true).unwrap();
        assert!(d.row_equal(0, 1).unwrap());
        assert!(!d.row_equal(0, 2).unwrap());
    }

    #[test]
    fn row_equal_null_vs_value_differs() {
        let d = load("a,b\n,1\n1,1\n", true).unwrap();
        assert!(!d.row_equal(0, 1).unwrap());
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let src = "a,b,c\n1,x y,2.5\n,\"q,uote\",\n";
        let d = load(src, true).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let d2 = load_csv_reader("t2", &buf[..], true, None).unwrap();
        assert_eq!(d.row_count(), d2.row_count());
        for i in 0..d.row_count() {
            assert_eq!(d.get_row(i).unwrap(), d2.get_row(i).unwrap());
        }
    }
}
