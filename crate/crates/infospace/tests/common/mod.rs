#![allow(dead_code)]

use std::path::Path;

use infospace::fixtures::{fixture, BuiltFixture};
use infospace::session::{DomainSession, SessionOptions};
use infospace_core::post::{ResultTable, Scalar};
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Clone, Deserialize)]
pub struct ManifestEntry {
    pub question_id: Option<String>,
    pub template_id: Option<String>,
    pub question_text: Option<String>,
    pub plan_text: String,
    pub ordered: bool,
    pub rows: Vec<Vec<Value>>,
}

pub fn manifest(name: &str) -> Vec<ManifestEntry> {
    fixture(name)
        .unwrap()
        .manifest
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn build(name: &str, dir: &Path) -> BuiltFixture {
    fixture(name).unwrap().build(dir).unwrap()
}

/// A session over a freshly built fixture, with its corpus generated and
/// kept in memory.
pub fn session(name: &str, dir: &Path) -> DomainSession {
    let built = build(name, dir);
    let options = SessionOptions { persist: false, ..SessionOptions::default() };
    DomainSession::open(&built.labeling, &built.db, &options).unwrap().0
}

fn cell_matches(got: &Scalar, want: &Value, tolerance: f64) -> bool {
    match (got, want) {
        (Scalar::Null, Value::Null) => true,
        (Scalar::Boolean(b), Value::Bool(w)) => b == w,
        (Scalar::Integer(i), Value::Number(n)) => n.as_i64() == Some(*i),
        (Scalar::Decimal(d), Value::Number(n)) if n.is_f64() => {
            let w = n.as_f64().unwrap();
            if tolerance == 0.0 {
                *d == w
            } else {
                (d - w).abs() <= tolerance * w.abs().max(1.0)
            }
        }
        (Scalar::Text(t) | Scalar::Datetime(t), Value::String(w)) => t == w,
        _ => false,
    }
}

fn row_matches(got: &[Scalar], want: &[Value], tolerance: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| cell_matches(g, w, tolerance))
}

/// Compares a result with expected rows. Row order matters only when
/// `ordered` is set; decimals must match within `tolerance` (0 = exactly).
pub fn compare(table: &ResultTable, want: &[Vec<Value>], ordered: bool, tolerance: f64) -> Result<(), String> {
    if table.rows.len() != want.len() {
        return Err(format!("expected {} rows, got {}: {:?}", want.len(), table.rows.len(), table.rows));
    }
    if ordered {
        for (i, (g, w)) in table.rows.iter().zip(want).enumerate() {
            if !row_matches(g, w, tolerance) {
                return Err(format!("row {i}: got {g:?}, expected {w:?}"));
            }
        }
        return Ok(());
    }
    let mut remaining: Vec<&Vec<Value>> = want.iter().collect();
    for row in &table.rows {
        match remaining.iter().position(|w| row_matches(row, w, tolerance)) {
            Some(p) => {
                remaining.remove(p);
            }
            None => return Err(format!("unexpected row {row:?}; expected {want:?}")),
        }
    }
    Ok(())
}

/// Runs one manifest entry through parse, check, compile and execute.
/// Client-side aggregates get the 1e-9 tolerance; everything else must
/// match exactly.
pub fn run_entry(session: &DomainSession, entry: &ManifestEntry) -> Result<(), String> {
    let compiled = session.compile(&entry.plan_text).map_err(|e| e.to_string())?;
    let client_side = compiled.subplans.iter().any(|s| s.query.post.is_some());
    let conn = session.connect().map_err(|e| e.to_string())?;
    let result = session.run(&conn, &entry.plan_text).map_err(|e| e.to_string())?;
    let table = result.primary().ok_or("no output")?;
    compare(table, &entry.rows, entry.ordered, if client_side { 1e-9 } else { 0.0 })
}
