//! Cell values and type tags.
//!
//! A cell is one of five variants. Null is its own variant rather than a
//! sentinel, and equality is total: `Null == Null` holds, and two NaN reals
//! compare equal. Duplicate detection and set semantics rely on this.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Type tag for a schema attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Integer,
    Real,
    Text,
    Boolean,
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellType::Integer => write!(f, "integer"),
            CellType::Real => write!(f, "real"),
            CellType::Text => write!(f, "text"),
            CellType::Boolean => write!(f, "boolean"),
        }
    }
}

/// A single cell of a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl CellValue {
    pub fn is_null(&self) -> bool {
        matches!(self, CellValue::Null)
    }

    /// Type of the value, or `None` for null (null inhabits every column type).
    pub fn cell_type(&self) -> Option<CellType> {
        match self {
            CellValue::Null => None,
            CellValue::Bool(_) => Some(CellType::Boolean),
            CellValue::Int(_) => Some(CellType::Integer),
            CellValue::Real(_) => Some(CellType::Real),
            CellValue::Text(_) => Some(CellType::Text),
        }
    }

    pub fn fits(&self, ty: CellType) -> bool {
        match self.cell_type() {
            None => true,
            Some(t) => t == ty,
        }
    }

    /// Numeric view, widening integers. `None` for null and non-numerics.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            CellValue::Int(i) => Some(*i as f64),
            CellValue::Real(r) => Some(*r),
            _ => None,
        }
    }

    fn variant_rank(&self) -> u8 {
        match self {
            CellValue::Bool(_) => 0,
            CellValue::Int(_) => 1,
            CellValue::Real(_) => 2,
            CellValue::Text(_) => 3,
            CellValue::Null => 4,
        }
    }
}

impl PartialEq for CellValue {
    fn eq(&self, other: &Self) -> bool {
        use CellValue::*;
        match (self, other) {
            (Null, Null) => true,
            (Bool(a), Bool(b)) => a == b,
            (Int(a), Int(b)) => a == b,
            // NaN == NaN so that equality stays total.
            (Real(a), Real(b)) => a == b || (a.is_nan() && b.is_nan()),
            (Text(a), Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for CellValue {}

impl Hash for CellValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.variant_rank().hash(state);
        match self {
            CellValue::Null => {}
            CellValue::Bool(b) => b.hash(state),
            CellValue::Int(i) => i.hash(state),
            CellValue::Real(r) => {
                // Normalize so hash agrees with eq: -0.0 folds into 0.0,
                // every NaN folds into one bit pattern.
                let bits = if r.is_nan() {
                    f64::NAN.to_bits()
                } else if *r == 0.0 {
                    0u64
                } else {
                    r.to_bits()
                };
                bits.hash(state);
            }
            CellValue::Text(s) => s.hash(state),
        }
    }
}

impl PartialOrd for CellValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Deterministic total order, nulls last.
impl Ord for CellValue {
    fn cmp(&self, other: &Self) -> Ordering {
        use CellValue::*;
        match (self, other) {
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Real(a), Real(b)) => a.total_cmp(b),
            (Int(a), Real(b)) => (*a as f64).total_cmp(b),
            (Real(a), Int(b)) => a.total_cmp(&(*b as f64)),
            (Text(a), Text(b)) => a.cmp(b),
            _ => self.variant_rank().cmp(&other.variant_rank()),
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Null => Ok(()),
            CellValue::Bool(b) => write!(f, "{b}"),
            CellValue::Int(i) => write!(f, "{i}"),
            CellValue::Real(r) => write!(f, "{r}"),
            CellValue::Text(s) => write!(f, "{s}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_equals_null() {
        assert_eq!(CellValue::Null, CellValue::Null);
        assert_ne!(CellValue::Null, CellValue::Int(0));
        assert_ne!(CellValue::Null, CellValue::Text(String::new()));
    }

    #[test]
    fn nan_equality_is_total() {
        assert_eq!(CellValue::Real(f64::NAN), CellValue::Real(f64::NAN));
        assert_eq!(CellValue::Real(0.0), CellValue::Real(-0.0));
    }

    #[test]
    fn hash_agrees_with_eq_for_reals() {
        use std::collections::hash_map::DefaultHasher;
        let h = |v: &CellValue| {
            let mut s = DefaultHasher::new();
            v.hash(&mut s);
            s.finish()
        };
        assert_eq!(h(&CellValue::Real(0.0)), h(&CellValue::Real(-0.0)));
        assert_eq!(h(&CellValue::Real(f64::NAN)), h(&CellValue::Real(-f64::NAN)));
    }

    #[test]
    fn nulls_sort_last() {
        let mut vals = vec![CellValue::Null, CellValue::Int(2), CellValue::Int(1)];
        vals.sort();
        assert_eq!(vals.last(), Some(&CellValue::Null));
        assert_eq!(vals[0], CellValue::Int(1));
    }
}
