//! Query dispatch and JSON shaping for the command-line front end. Lives in
//! the library so integration tests can drive it directly.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graph::Pipeline;
use crate::ops::OpDescriptor;
use crate::query::{CellRef, Direction, HowStep, QueryEngine, RecordRef};
use crate::tensor::RowIdx;
use crate::value::CellValue;

/// One query, as given by CLI flags or a query-file entry.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(rename = "type")]
    pub query_type: String,
    pub dataset: String,
    #[serde(default)]
    pub row: Option<RowIdx>,
    #[serde(default)]
    pub attr: Option<usize>,
    #[serde(default)]
    pub src: Option<String>,
    #[serde(default)]
    pub dst: Option<String>,
    #[serde(default)]
    pub d1: Option<String>,
    #[serde(default)]
    pub d2: Option<String>,
    #[serde(default)]
    pub d3: Option<String>,
    #[serde(default)]
    pub resolve: bool,
    #[serde(default)]
    pub set_semantics: bool,
}

pub fn cell_to_json(c: &CellValue) -> Value {
    match c {
        CellValue::Null => Value::Null,
        CellValue::Bool(b) => json!(b),
        CellValue::Int(i) => json!(i),
        CellValue::Real(r) if r.is_finite() => json!(r),
        CellValue::Real(r) => json!(r.to_string()),
        CellValue::Text(s) => json!(s),
    }
}

fn record_json(r: &RecordRef) -> Value {
    json!({"dataset": r.dataset, "row": r.row})
}

fn step_json(s: &HowStep) -> Value {
    let mut v = json!({
        "op": s.op_id,
        "name": s.op_name,
        "category": s.category.as_str(),
        "inputs": s.inputs.iter().map(record_json).collect::<Vec<_>>(),
        "outputs": s.outputs.iter().map(record_json).collect::<Vec<_>>(),
    });
    if let Some(a) = &s.input_attrs {
        v["input_attrs"] = json!(a.iter().collect::<Vec<_>>());
    }
    if let Some(a) = &s.output_attrs {
        v["output_attrs"] = json!(a.iter().collect::<Vec<_>>());
    }
    v
}

pub fn descriptor_json(op: &OpDescriptor) -> Value {
    json!({
        "id": op.id,
        "name": op.name,
        "category": op.category.as_str(),
        "contextual": op.contextual,
        "inputs": op.inputs,
        "output": op.output,
        "annotations": op.annots.iter().map(|a| a.render()).collect::<Vec<_>>(),
    })
}

fn require<'a, T>(field: Option<&'a T>, name: &str, qt: &str) -> Result<&'a T> {
    field.ok_or_else(|| Error::Query(format!("query {qt} requires --{name}")))
}

/// Record hits with optionally resolved row values.
fn record_hits(p: &Pipeline, hits: &BTreeSet<RecordRef>, resolve: bool) -> Result<Vec<Value>> {
    let mut out = Vec::with_capacity(hits.len());
    if resolve {
        let mut by_dataset: std::collections::BTreeMap<&str, BTreeSet<RowIdx>> = Default::default();
        for h in hits {
            by_dataset.entry(h.dataset.as_str()).or_default().insert(h.row);
        }
        let mut resolved = std::collections::BTreeMap::new();
        for (ds, rows) in by_dataset {
            resolved.insert(ds.to_string(), p.recompute_records(ds, &rows)?);
        }
        for h in hits {
            let rows = &resolved[&h.dataset];
            let cells: Vec<Value> = rows.rows[&h.row].iter().map(cell_to_json).collect();
            out.push(json!({"dataset": h.dataset, "row": h.row, "record": cells}));
        }
    } else {
        out.extend(hits.iter().map(record_json));
    }
    Ok(out)
}

fn cell_hits(p: &Pipeline, hits: &BTreeSet<CellRef>, resolve: bool) -> Result<Vec<Value>> {
    let mut out = Vec::with_capacity(hits.len());
    if resolve {
        let mut by_dataset: std::collections::BTreeMap<&str, BTreeSet<RowIdx>> = Default::default();
        for h in hits {
            by_dataset
                .entry(h.record.dataset.as_str())
                .or_default()
                .insert(h.record.row);
        }
        let mut resolved = std::collections::BTreeMap::new();
        for (ds, rows) in by_dataset {
            resolved.insert(ds.to_string(), p.recompute_records(ds, &rows)?);
        }
        for h in hits {
            let rows = &resolved[&h.record.dataset];
            let value = cell_to_json(&rows.rows[&h.record.row][h.attr]);
            out.push(json!({
                "dataset": h.record.dataset, "row": h.record.row, "attr": h.attr, "value": value,
            }));
        }
    } else {
        for h in hits {
            out.push(json!({"dataset": h.record.dataset, "row": h.record.row, "attr": h.attr}));
        }
    }
    Ok(out)
}

/// Execute one query against a frozen pipeline, returning the JSON result
/// `{query, hits, [how], timing_ms}`.
pub fn run_query(p: &Pipeline, req: &QueryRequest) -> Result<Value> {
    let engine = QueryEngine::with_set_semantics(p, req.set_semantics);
    let qt = req.query_type.to_uppercase();
    let started = Instant::now();

    let mut how: Option<Vec<HowStep>> = None;
    let mut hits_json: Vec<Value>;
    let mut extra: Option<(String, Value)> = None;

    match qt.as_str() {
        "Q1" | "Q5" => {
            let row = *require(req.row.as_ref(), "row", &qt)?;
            let dst = require(req.dst.as_ref(), "dst", &qt)?;
            let rec = RecordRef::new(req.dataset.clone(), row);
            let hits = if qt == "Q5" {
                let (hits, steps) = engine.how_records(&rec, dst, Direction::Forward, None)?;
                how = Some(steps);
                hits
            } else {
                engine.forward_records(&rec, dst)?
            };
            hits_json = record_hits(p, &hits, req.resolve)?;
        }
        "Q2" | "Q6" => {
            let row = *require(req.row.as_ref(), "row", &qt)?;
            let src = require(req.src.as_ref(), "src", &qt)?;
            let rec = RecordRef::new(req.dataset.clone(), row);
            let hits = if qt == "Q6" {
                let (hits, steps) = engine.how_records(&rec, src, Direction::Backward, None)?;
                how = Some(steps);
                hits
            } else {
                engine.backward_records(&rec, src)?
            };
            hits_json = record_hits(p, &hits, req.resolve)?;
        }
        "Q3" | "Q7" => {
            let row = *require(req.row.as_ref(), "row", &qt)?;
            let attr = *require(req.attr.as_ref(), "attr", &qt)?;
            let dst = require(req.dst.as_ref(), "dst", &qt)?;
            let cell = CellRef::new(req.dataset.clone(), row, attr);
            let hits = if qt == "Q7" {
                let (hits, steps) = engine.how_attr(&cell, dst, Direction::Forward)?;
                how = Some(steps);
                hits
            } else {
                engine.forward_attr(&cell, dst)?
            };
            hits_json = cell_hits(p, &hits, req.resolve)?;
        }
        "Q4" | "Q8" => {
            let row = *require(req.row.as_ref(), "row", &qt)?;
            let attr = *require(req.attr.as_ref(), "attr", &qt)?;
            let src = require(req.src.as_ref(), "src", &qt)?;
            let cell = CellRef::new(req.dataset.clone(), row, attr);
            let hits = if qt == "Q8" {
                let (hits, steps) = engine.how_attr(&cell, src, Direction::Backward)?;
                how = Some(steps);
                hits
            } else {
                engine.backward_attr(&cell, src)?
            };
            hits_json = cell_hits(p, &hits, req.resolve)?;
        }
        "Q9" => {
            let ops = engine.all_transformations(&req.dataset)?;
            hits_json = ops.iter().map(|op| descriptor_json(op)).collect();
        }
        "Q10" => {
            let row = *require(req.row.as_ref(), "row", &qt)?;
            let d2 = require(req.d2.as_ref(), "d2", &qt)?;
            let rec = RecordRef::new(req.dataset.clone(), row);
            let (hits, op, others) = engine.co_contributory(&rec, d2)?;
            hits_json = record_hits(p, &hits, req.resolve)?;
            extra = Some((
                "combining_op".to_string(),
                json!({"chosen": op, "others": others}),
            ));
        }
        "Q11" => {
            let row = *require(req.row.as_ref(), "row", &qt)?;
            let d1 = require(req.d1.as_ref(), "d1", &qt)?;
            let d3 = require(req.d3.as_ref(), "d3", &qt)?;
            let rec = RecordRef::new(req.dataset.clone(), row);
            let hits = engine.co_dependency(&rec, d1, d3)?;
            hits_json = record_hits(p, &hits, req.resolve)?;
        }
        other => {
            return Err(Error::Query(format!(
                "unknown query type '{other}' (expected Q1..Q11)"
            )))
        }
    }
    hits_json.sort_by_key(|v| v.to_string());

    let timing_ms = started.elapsed().as_secs_f64() * 1000.0;
    let mut result = json!({
        "query": qt,
        "hits": hits_json,
        "timing_ms": timing_ms,
    });
    if let Some(steps) = how {
        result["how"] = Value::Array(steps.iter().map(step_json).collect());
    }
    if let Some((k, v)) = extra {
        result[k] = v;
    }
    Ok(result)
}

/// JSON error object for non-zero CLI exits.
pub fn error_json(e: &Error) -> Value {
    json!({"error": {"message": e.to_string()}})
}
