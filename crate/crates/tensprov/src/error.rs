//! Error type shared across the engine.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("ragged row at line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("cannot parse {value:?} as {ty} at line {line}")]
    CellParse {
        value: String,
        ty: &'static str,
        line: u64,
    },

    #[error("row index {index} out of range for dataset '{dataset}' ({rows} rows)")]
    RowOutOfRange {
        dataset: String,
        index: usize,
        rows: usize,
    },

    #[error("attribute position {pos} out of range ({len} attributes)")]
    AttrOutOfRange { pos: usize, len: usize },

    #[error("duplicate attribute name '{0}' in schema")]
    DuplicateAttribute(String),

    #[error("unknown dataset '{0}'")]
    UnknownDataset(String),

    #[error("duplicate dataset id '{0}'")]
    DuplicateDataset(String),

    #[error("unknown operation name '{0}'")]
    UnknownOpName(String),

    #[error("duplicate op id '{0}'")]
    DuplicateOpId(String),

    #[error("no dataflow path from '{src}' to '{dst}'")]
    NoPath { src: String, dst: String },

    #[error("diamond dataflow: op '{op}' would create two paths from '{ancestor}'")]
    DiamondDataflow { op: String, ancestor: String },

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("predicate parse error: {0}")]
    PredicateParse(String),

    #[error("pipeline spec invalid (op '{op}'): {reason}")]
    SpecValidation { op: String, reason: String },

    #[error("materialization policy violated: input '{0}' of contextual op not materialized")]
    PolicyViolation(String),

    #[error("no combining operation links '{d1}' and '{d2}'")]
    NoCombiningOp { d1: String, d2: String },

    #[error("{0}")]
    Query(String),
}

pub type Result<T> = std::result::Result<T, Error>;
