//! Declarative pipeline specs: a JSON document naming the CSV sources, the
//! operations to run in order, and run settings. The runner executes the
//! ops through the capture layer and registers everything into a
//! [`Pipeline`], which stays available for querying.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{load_csv, Dataset, Schema};
use crate::error::{Error, Result};
use crate::graph::{MemoryReport, Pipeline};
use crate::ops::{self, CaptureResult, DeriveFn, JoinKind, OpCategory, OversampleStrategy, TransformFn};
use crate::predicate::Predicate;
use crate::value::{CellType, CellValue};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub ops: Vec<OpSpec>,
    #[serde(default)]
    pub settings: Settings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub id: String,
    pub path: String,
    #[serde(default = "default_true")]
    pub header: bool,
    #[serde(default)]
    pub types: Option<HashMap<String, CellType>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpSpec {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub category: Option<String>,
    pub inputs: Vec<String>,
    pub output: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub set_semantics: bool,
    #[serde(default)]
    pub onehot_cap: Option<usize>,
}

fn default_true() -> bool {
    true
}

/// Category each registered operation name belongs to.
pub fn category_of(name: &str) -> Option<OpCategory> {
    Some(match name {
        "impute-mean" | "impute-median" | "impute-mode" | "impute-constant" | "binarize"
        | "normalize-minmax" | "discretize" | "value-map" => OpCategory::DataTransformation,
        "drop-columns" => OpCategory::VerticalReduction,
        "one-hot" | "string-indexer" | "derive-columns" => OpCategory::VerticalAugmentation,
        "filter" | "sample" => OpCategory::HorizontalReduction,
        "oversample" => OpCategory::HorizontalAugmentation,
        "join" => OpCategory::Join,
        "append" => OpCategory::Append,
        _ => return None,
    })
}

impl PipelineSpec {
    pub fn from_json(json: &str) -> Result<PipelineSpec> {
        let spec: PipelineSpec = serde_json::from_str(json).map_err(|e| Error::SpecValidation {
            op: "<document>".to_string(),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    /// Structural validation: unique ids, known op names, matching declared
    /// categories, topological op order, correct input arity.
    pub fn validate(&self) -> Result<()> {
        let mut defined: HashMap<&str, ()> = HashMap::new();
        if self.sources.is_empty() {
            return Err(Error::SpecValidation {
                op: "<document>".to_string(),
                reason: "at least one source is required".to_string(),
            });
        }
        for s in &self.sources {
            if defined.insert(&s.id, ()).is_some() {
                return Err(Error::SpecValidation {
                    op: s.id.clone(),
                    reason: "duplicate dataset id".to_string(),
                });
            }
        }
        let mut op_ids: HashMap<&str, ()> = HashMap::new();
        for op in &self.ops {
            if op_ids.insert(&op.id, ()).is_some() {
                return Err(Error::SpecValidation {
                    op: op.id.clone(),
                    reason: "duplicate op id".to_string(),
                });
            }
            let category = category_of(&op.name).ok_or_else(|| Error::SpecValidation {
                op: op.id.clone(),
                reason: format!("unknown operation name '{}'", op.name),
            })?;
            if let Some(declared) = &op.category {
                if OpCategory::parse(declared) != Some(category) {
                    return Err(Error::SpecValidation {
                        op: op.id.clone(),
                        reason: format!(
                            "declared category '{declared}' does not match '{}' for '{}'",
                            category, op.name
                        ),
                    });
                }
            }
            let arity = match category {
                OpCategory::Join | OpCategory::Append => 2,
                _ => 1,
            };
            if op.inputs.len() != arity {
                return Err(Error::SpecValidation {
                    op: op.id.clone(),
                    reason: format!("'{}' takes {arity} input(s), got {}", op.name, op.inputs.len()),
                });
            }
            for input in &op.inputs {
                if !defined.contains_key(input.as_str()) {
                    return Err(Error::SpecValidation {
                        op: op.id.clone(),
                        reason: format!("input '{input}' is not defined at this point"),
                    });
                }
            }
            if defined.insert(&op.output, ()).is_some() {
                return Err(Error::SpecValidation {
                    op: op.id.clone(),
                    reason: format!("output '{}' already defined", op.output),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct SourceRunInfo {
    pub id: String,
    pub rows: usize,
    pub attrs: usize,
}

#[derive(Debug, Serialize)]
pub struct OpRunInfo {
    pub id: String,
    pub name: String,
    pub category: String,
    pub output: String,
    pub output_rows: usize,
    pub capture_ms: f64,
    pub tensor_bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub pipeline: String,
    pub sources: Vec<SourceRunInfo>,
    pub ops: Vec<OpRunInfo>,
    pub total_capture_ms: f64,
    pub memory: MemoryReport,
}

/// Resolution of a `columns` JSON entry: an index or an attribute name.
fn resolve_col(schema: &Schema, v: &serde_json::Value, op: &str) -> Result<usize> {
    match v {
        serde_json::Value::Number(n) => {
            let idx = n.as_u64().ok_or_else(|| Error::SpecValidation {
                op: op.to_string(),
                reason: format!("bad column index {n}"),
            })? as usize;
            schema.attr(idx)?;
            Ok(idx)
        }
        serde_json::Value::String(name) => schema.position(name).ok_or_else(|| {
            Error::SpecValidation {
                op: op.to_string(),
                reason: format!("unknown column '{name}'"),
            }
        }),
        other => Err(Error::SpecValidation {
            op: op.to_string(),
            reason: format!("column reference must be a name or index, got {other}"),
        }),
    }
}

fn resolve_cols(schema: &Schema, params: &serde_json::Value, key: &str, op: &str) -> Result<Vec<usize>> {
    let arr = params
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::SpecValidation {
            op: op.to_string(),
            reason: format!("missing '{key}' array"),
        })?;
    arr.iter().map(|v| resolve_col(schema, v, op)).collect()
}

fn json_to_cell(v: &serde_json::Value) -> Result<CellValue> {
    Ok(match v {
        serde_json::Value::Null => CellValue::Null,
        serde_json::Value::Bool(b) => CellValue::Bool(*b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                CellValue::Int(i)
            } else {
                CellValue::Real(n.as_f64().unwrap_or(f64::NAN))
            }
        }
        serde_json::Value::String(s) => CellValue::Text(s.clone()),
        other => {
            return Err(Error::InvalidParams(format!(
                "cannot use {other} as a cell value"
            )))
        }
    })
}

fn param_f64(params: &serde_json::Value, key: &str, op: &str) -> Result<f64> {
    params
        .get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::SpecValidation {
            op: op.to_string(),
            reason: format!("missing numeric '{key}'"),
        })
}

/// Execute one op spec against the live datasets.
fn execute_op(
    op: &OpSpec,
    live: &HashMap<String, Dataset>,
    settings: &Settings,
    seed: u64,
    onehot_cap: usize,
) -> Result<CaptureResult> {
    let _ = settings;
    let input = |i: usize| -> Result<&Dataset> {
        live.get(&op.inputs[i])
            .ok_or_else(|| Error::UnknownDataset(op.inputs[i].clone()))
    };
    let d = input(0)?;
    let schema = d.schema();
    let p = &op.params;
    let op_seed = p.get("seed").and_then(|v| v.as_u64()).unwrap_or(seed);

    match op.name.as_str() {
        "impute-mean" => ops::transform(d, &op.output, &op.id, TransformFn::ImputeMean, &resolve_cols(schema, p, "columns", &op.id)?),
        "impute-median" => ops::transform(d, &op.output, &op.id, TransformFn::ImputeMedian, &resolve_cols(schema, p, "columns", &op.id)?),
        "impute-mode" => ops::transform(d, &op.output, &op.id, TransformFn::ImputeMode, &resolve_cols(schema, p, "columns", &op.id)?),
        "impute-constant" => {
            let value = json_to_cell(p.get("value").ok_or_else(|| Error::SpecValidation {
                op: op.id.clone(),
                reason: "missing 'value'".to_string(),
            })?)?;
            ops::transform(d, &op.output, &op.id, TransformFn::ImputeConstant(value), &resolve_cols(schema, p, "columns", &op.id)?)
        }
        "binarize" => {
            let threshold = param_f64(p, "threshold", &op.id)?;
            ops::transform(d, &op.output, &op.id, TransformFn::Binarize { threshold }, &resolve_cols(schema, p, "columns", &op.id)?)
        }
        "normalize-minmax" => ops::transform(d, &op.output, &op.id, TransformFn::NormalizeMinMax, &resolve_cols(schema, p, "columns", &op.id)?),
        "discretize" => {
            let bins = p.get("bins").and_then(|v| v.as_u64()).unwrap_or(4) as usize;
            ops::transform(d, &op.output, &op.id, TransformFn::Discretize { bins }, &resolve_cols(schema, p, "columns", &op.id)?)
        }
        "value-map" => {
            let pairs_json = p.get("map").and_then(|v| v.as_array()).ok_or_else(|| Error::SpecValidation {
                op: op.id.clone(),
                reason: "missing 'map' array of [from, to] pairs".to_string(),
            })?;
            let mut pairs = Vec::with_capacity(pairs_json.len());
            for entry in pairs_json {
                let pair = entry.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                    Error::SpecValidation {
                        op: op.id.clone(),
                        reason: "each map entry must be a [from, to] pair".to_string(),
                    }
                })?;
                pairs.push((json_to_cell(&pair[0])?, json_to_cell(&pair[1])?));
            }
            ops::transform(d, &op.output, &op.id, TransformFn::ValueMap { pairs }, &resolve_cols(schema, p, "columns", &op.id)?)
        }
        "drop-columns" => ops::drop_columns(d, &op.output, &op.id, &resolve_cols(schema, p, "columns", &op.id)?),
        "one-hot" => {
            let col = resolve_col(schema, p.get("column").ok_or_else(|| Error::SpecValidation {
                op: op.id.clone(),
                reason: "missing 'column'".to_string(),
            })?, &op.id)?;
            let cap = p.get("cap").and_then(|v| v.as_u64()).map(|v| v as usize).unwrap_or(onehot_cap);
            ops::one_hot_encode(d, &op.output, &op.id, col, cap)
        }
        "string-indexer" => {
            let col = resolve_col(schema, p.get("column").ok_or_else(|| Error::SpecValidation {
                op: op.id.clone(),
                reason: "missing 'column'".to_string(),
            })?, &op.id)?;
            ops::string_indexer(d, &op.output, &op.id, col)
        }
        "derive-columns" => {
            let sources = resolve_cols(schema, p, "sources", &op.id)?;
            let derived_json = p.get("derived").and_then(|v| v.as_array()).ok_or_else(|| {
                Error::SpecValidation {
                    op: op.id.clone(),
                    reason: "missing 'derived' array".to_string(),
                }
            })?;
            let mut derived = Vec::with_capacity(derived_json.len());
            for entry in derived_json {
                let name = entry.get("name").and_then(|v| v.as_str()).ok_or_else(|| {
                    Error::SpecValidation {
                        op: op.id.clone(),
                        reason: "derived entry needs a 'name'".to_string(),
                    }
                })?;
                let func = entry
                    .get("fn")
                    .and_then(|v| v.as_str())
                    .and_then(DeriveFn::parse)
                    .ok_or_else(|| Error::SpecValidation {
                        op: op.id.clone(),
                        reason: "derived entry needs a known 'fn'".to_string(),
                    })?;
                derived.push((name.to_string(), func));
            }
            ops::derive_columns(d, &op.output, &op.id, &sources, &derived)
        }
        "filter" => {
            let expr = p.get("predicate").and_then(|v| v.as_str()).ok_or_else(|| {
                Error::SpecValidation {
                    op: op.id.clone(),
                    reason: "missing 'predicate'".to_string(),
                }
            })?;
            ops::filter(d, &op.output, &op.id, Predicate::parse(expr)?)
        }
        "sample" => {
            let fraction = param_f64(p, "fraction", &op.id)?;
            ops::sample(d, &op.output, &op.id, fraction, op_seed)
        }
        "oversample" => {
            let target = resolve_col(schema, p.get("target").ok_or_else(|| Error::SpecValidation {
                op: op.id.clone(),
                reason: "missing 'target'".to_string(),
            })?, &op.id)?;
            let strategy = match p.get("strategy").and_then(|v| v.as_str()).unwrap_or("duplicate-minority") {
                "duplicate-minority" => OversampleStrategy::DuplicateMinority,
                "noisy-duplicate" => OversampleStrategy::NoisyDuplicate {
                    sigma: p.get("sigma").and_then(|v| v.as_f64()).unwrap_or(0.1),
                },
                other => {
                    return Err(Error::SpecValidation {
                        op: op.id.clone(),
                        reason: format!("unknown oversample strategy '{other}'"),
                    })
                }
            };
            ops::oversample(d, &op.output, &op.id, target, strategy, op_seed)
        }
        "join" => {
            let r = input(1)?;
            let keys_json = p.get("keys").and_then(|v| v.as_array()).ok_or_else(|| {
                Error::SpecValidation {
                    op: op.id.clone(),
                    reason: "missing 'keys' array of [left, right] pairs".to_string(),
                }
            })?;
            let mut keys = Vec::with_capacity(keys_json.len());
            for entry in keys_json {
                let pair = entry.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                    Error::SpecValidation {
                        op: op.id.clone(),
                        reason: "each key entry must be a [left, right] pair".to_string(),
                    }
                })?;
                keys.push((
                    resolve_col(d.schema(), &pair[0], &op.id)?,
                    resolve_col(r.schema(), &pair[1], &op.id)?,
                ));
            }
            let kind = p
                .get("kind")
                .and_then(|v| v.as_str())
                .map(|s| JoinKind::parse(s).ok_or_else(|| Error::SpecValidation {
                    op: op.id.clone(),
                    reason: format!("unknown join kind '{s}'"),
                }))
                .transpose()?
                .unwrap_or(JoinKind::Inner);
            ops::join(d, r, &op.output, &op.id, &keys, kind)
        }
        "append" => ops::append(d, input(1)?, &op.output, &op.id),
        other => Err(Error::UnknownOpName(other.to_string())),
    }
}

/// Run a validated spec. CSV paths resolve relative to `base_dir`. Returns
/// the frozen pipeline and the run summary.
pub fn run_spec(spec: &PipelineSpec, base_dir: &Path) -> Result<(Pipeline, RunSummary)> {
    spec.validate()?;
    let seed = std::env::var("TENSPROV_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .or(spec.settings.seed)
        .unwrap_or(0);
    let onehot_cap = spec.settings.onehot_cap.unwrap_or(64);
    let pipeline_id = spec.id.clone().unwrap_or_else(|| "pipeline".to_string());

    let mut pipeline = Pipeline::new(&pipeline_id, spec.settings.set_semantics);
    let mut live: HashMap<String, Dataset> = HashMap::new();
    let mut sources_info = Vec::new();
    for s in &spec.sources {
        let path = base_dir.join(&s.path);
        let d = load_csv(&s.id, &path, s.header, s.types.as_ref())?;
        sources_info.push(SourceRunInfo {
            id: s.id.clone(),
            rows: d.row_count(),
            attrs: d.schema().len(),
        });
        pipeline.register_source(d.clone())?;
        live.insert(s.id.clone(), d);
    }

    // Last op index that consumes each dataset, to release runner copies.
    let mut last_use: HashMap<&str, usize> = HashMap::new();
    for (i, op) in spec.ops.iter().enumerate() {
        for input in &op.inputs {
            last_use.insert(input, i);
        }
    }

    let mut ops_info = Vec::new();
    let mut total_ms = 0.0;
    for (i, op) in spec.ops.iter().enumerate() {
        let started = Instant::now();
        let result = execute_op(op, &live, &spec.settings, seed, onehot_cap)?;
        let capture_ms = started.elapsed().as_secs_f64() * 1000.0;
        total_ms += capture_ms;
        let tensor_bytes: u64 = result.tensors.iter().map(|t| t.memory_bytes()).sum();
        ops_info.push(OpRunInfo {
            id: op.id.clone(),
            name: op.name.clone(),
            category: result.descriptor.category.as_str().to_string(),
            output: op.output.clone(),
            output_rows: result.output.row_count(),
            capture_ms,
            tensor_bytes,
        });
        live.insert(op.output.clone(), result.output.clone());
        pipeline.register(result)?;
        for input in &op.inputs {
            if last_use.get(input.as_str()) == Some(&i) {
                live.remove(input);
            }
        }
    }

    let memory = pipeline.memory_report();
    let summary = RunSummary {
        pipeline: pipeline_id,
        sources: sources_info,
        ops: ops_info,
        total_capture_ms: total_ms,
        memory,
    };
    Ok((pipeline, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_parses() {
        let json = r#"{
            "sources": [{"id": "src", "path": "x.csv"}],
            "ops": [{"id": "op1", "name": "drop-columns", "inputs": ["src"],
                     "output": "d1", "params": {"columns": ["a"]}}]
        }"#;
        let spec = PipelineSpec::from_json(json).unwrap();
        assert_eq!(spec.ops.len(), 1);
    }

    #[test]
    fn unknown_name_and_bad_order_rejected() {
        let json = r#"{
            "sources": [{"id": "src", "path": "x.csv"}],
            "ops": [{"id": "op1", "name": "mystery", "inputs": ["src"], "output": "d1"}]
        }"#;
        let e = PipelineSpec::from_json(json).unwrap_err();
        assert!(matches!(e, Error::SpecValidation { ref op, .. } if op == "op1"));

        let json = r#"{
            "sources": [{"id": "src", "path": "x.csv"}],
            "ops": [{"id": "op1", "name": "filter", "inputs": ["missing"],
                     "output": "d1", "params": {"predicate": "a == 1"}}]
        }"#;
        assert!(PipelineSpec::from_json(json).is_err());
    }

    #[test]
    fn category_mismatch_rejected() {
        let json = r#"{
            "sources": [{"id": "src", "path": "x.csv"}],
            "ops": [{"id": "op1", "name": "filter", "category": "join",
                     "inputs": ["src"], "output": "d1", "params": {"predicate": "a == 1"}}]
        }"#;
        assert!(PipelineSpec::from_json(json).is_err());
    }

    #[test]
    fn arity_checked_per_category() {
        let json = r#"{
            "sources": [{"id": "a", "path": "x.csv"}, {"id": "b", "path": "y.csv"}],
            "ops": [{"id": "op1", "name": "append", "inputs": ["a"], "output": "d1"}]
        }"#;
        assert!(PipelineSpec::from_json(json).is_err());
    }
}
