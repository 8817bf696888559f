//! Executors for the seven operation categories. Each runs the operation and
//! captures its provenance in the same pass: index observation for
//! index-preserving single-input operations, injected identifier columns for
//! joins, and constructive layout knowledge for append and augmentation.

mod fuse;
mod horizontal;
mod transform;
mod vertical;

pub use fuse::{
    append, append_right_positions, append_right_row, join, join_rest_columns, join_stitch_row,
    JoinKind,
};
pub use horizontal::{filter, oversample, oversampled_row, sample, OversampleStrategy};
pub use transform::{apply_cell, compute_stats, transform, ColStats, TransformFn};
pub use vertical::{
    derive_cell, derive_columns, drop_columns, one_hot_cells, one_hot_encode, string_index_cell,
    string_indexer, DeriveFn,
};

use std::collections::BTreeSet;
use std::fmt;

use crate::attrmap::AttrAnnot;
use crate::dataset::{Dataset, DatasetId};
use crate::predicate::Predicate;
use crate::tensor::ProvTensor;
use crate::value::CellValue;

/// The seven operation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpCategory {
    DataTransformation,
    VerticalReduction,
    VerticalAugmentation,
    HorizontalReduction,
    HorizontalAugmentation,
    Join,
    Append,
}

impl OpCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpCategory::DataTransformation => "data-transformation",
            OpCategory::VerticalReduction => "vertical-reduction",
            OpCategory::VerticalAugmentation => "vertical-augmentation",
            OpCategory::HorizontalReduction => "horizontal-reduction",
            OpCategory::HorizontalAugmentation => "horizontal-augmentation",
            OpCategory::Join => "join",
            OpCategory::Append => "append",
        }
    }

    pub fn parse(s: &str) -> Option<OpCategory> {
        Some(match s {
            "data-transformation" => OpCategory::DataTransformation,
            "vertical-reduction" => OpCategory::VerticalReduction,
            "vertical-augmentation" => OpCategory::VerticalAugmentation,
            "horizontal-reduction" => OpCategory::HorizontalReduction,
            "horizontal-augmentation" => OpCategory::HorizontalAugmentation,
            "join" => OpCategory::Join,
            "append" => OpCategory::Append,
            _ => return None,
        })
    }
}

impl fmt::Display for OpCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Concrete parameters of an executed operation, retained for replay.
#[derive(Debug, Clone, PartialEq)]
pub enum OpParams {
    Transform {
        func: TransformFn,
        columns: Vec<usize>,
    },
    DropColumns {
        dropped: Vec<usize>,
    },
    OneHot {
        column: usize,
        /// Distinct values learned at capture time, in indicator order.
        categories: Vec<CellValue>,
        cap: usize,
    },
    StringIndexer {
        column: usize,
        categories: Vec<CellValue>,
    },
    DeriveColumns {
        sources: Vec<usize>,
        derived: Vec<(String, DeriveFn)>,
    },
    Filter {
        predicate: Predicate,
    },
    Sample {
        fraction: f64,
        seed: u64,
    },
    Oversample {
        target: usize,
        strategy: OversampleStrategy,
        seed: u64,
    },
    Join {
        keys: Vec<(usize, usize)>,
        kind: JoinKind,
    },
    Append,
}

/// Metadata node for one executed operation.
#[derive(Debug, Clone)]
pub struct OpDescriptor {
    pub id: String,
    pub category: OpCategory,
    /// Concrete operation name, e.g. "impute-mean", "filter", "join".
    pub name: String,
    /// Whether the operation needs whole-dataset statistics; inputs of
    /// contextual operations stay materialized.
    pub contextual: bool,
    pub inputs: Vec<DatasetId>,
    pub output: DatasetId,
    /// Attribute annotations, present for vertical reduction, vertical
    /// augmentation, join, and append (one per input side for the latter two).
    pub annots: Vec<AttrAnnot>,
    pub params: OpParams,
}

/// Which columns the capture phase read to derive provenance. For joins this
/// must name only the injected identifier columns.
#[derive(Debug, Clone, Default)]
pub struct CaptureTrace {
    pub columns_read_for_provenance: BTreeSet<String>,
}

/// Output of one executor: the produced dataset plus captured provenance.
///
/// `tensors` holds one tensor for single-input operations, two for append,
/// and for outer joins the order-3 tensor plus one order-2 supplementary
/// tensor per side with unmatched rows.
#[derive(Debug, Clone)]
pub struct CaptureResult {
    pub output: Dataset,
    pub tensors: Vec<ProvTensor>,
    pub descriptor: OpDescriptor,
    pub trace: CaptureTrace,
}
