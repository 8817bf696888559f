//! TensProv: in-memory capture and querying of fine-grained provenance for
//! data preparation pipelines.
//!
//! The engine executes data-preparation operations over tabular datasets,
//! records the provenance of every operation as a sparse binary tensor
//! (augmented with bitset attribute metadata), and answers record-level and
//! attribute-level lineage queries by chaining tensor slices and projections
//! along the dataflow, without persistent storage.

pub mod attrmap;
pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod query;
pub mod spec;
pub mod ops;
pub mod predicate;
pub mod tensor;
pub mod value;

pub use dataset::{load_csv, load_csv_reader, Attribute, Dataset, DatasetId, Schema};
pub use error::{Error, Result};
pub use tensor::{compose, project, DimensionRole, Polarity, ProvTensor, RowIdx};
pub use value::{CellType, CellValue};
