use std::collections::BTreeMap;

use infospace_core::compiler::{compile_plan, CompileError, CompiledQuery, Dialect};
use infospace_core::labeling::DomainLabeling;
use infospace_core::plan::{PlanGraph, StepId, TypeMap};
use infospace_core::post::{Column, ResultTable, Scalar};
use infospace_core::taxonomy::{AttributeType, TypeSet};
use rusqlite::types::ValueRef;
use rusqlite::Connection;

use crate::db::to_sql;

pub const DEFAULT_ROW_CAP: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("query failed: {source}\n  sql: {sql}\n  params: {params}")]
    Sql {
        source: rusqlite::Error,
        sql: String,
        params: String,
    },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("client-side aggregation does not fit the raw query columns")]
    BadPostAggregation,
}

fn scalar(value: ValueRef<'_>, types: TypeSet) -> Scalar {
    match value {
        ValueRef::Null => Scalar::Null,
        ValueRef::Integer(i) if types.contains(AttributeType::Filter) => Scalar::Boolean(i != 0),
        ValueRef::Integer(i) => Scalar::Integer(i),
        ValueRef::Real(r) if r.is_finite() => Scalar::Decimal(r),
        ValueRef::Real(_) => Scalar::Null,
        ValueRef::Text(t) | ValueRef::Blob(t) => {
            let s = String::from_utf8_lossy(t).into_owned();
            if types.contains(AttributeType::Datetime) {
                Scalar::Datetime(s)
            } else {
                Scalar::Text(s)
            }
        }
    }
}

fn run_sql(
    conn: &Connection,
    query: &CompiledQuery,
    column_types: &[TypeSet],
    cap: Option<usize>,
) -> Result<(Vec<Vec<Scalar>>, bool), ExecError> {
    let fail = |source| ExecError::Sql {
        source,
        sql: query.sql.clone(),
        params: serde_json::to_string(&query.params).unwrap_or_default(),
    };
    let mut stmt = conn.prepare(&query.sql).map_err(fail)?;
    if !stmt.readonly() {
        return Err(fail(rusqlite::Error::InvalidQuery));
    }
    let params: Vec<rusqlite::types::Value> = query.params.iter().map(to_sql).collect();
    let width = stmt.column_count();
    let mut rows = stmt.query(rusqlite::params_from_iter(params)).map_err(fail)?;
    let mut out = Vec::new();
    let mut truncated = false;
    while let Some(row) = rows.next().map_err(fail)? {
        if cap.is_some_and(|c| out.len() >= c) {
            truncated = true;
            break;
        }
        let values = (0..width)
            .map(|i| {
                let types = column_types.get(i).copied().unwrap_or(TypeSet::EMPTY);
                row.get_ref(i).map(|v| scalar(v, types))
            })
            .collect::<rusqlite::Result<Vec<_>>>()
            .map_err(fail)?;
        out.push(values);
    }
    Ok((out, truncated))
}

/// Runs one compiled query, applying any client-side aggregation. At most
/// `cap` rows are returned; `truncated` reports whether more existed.
pub fn execute(conn: &Connection, query: &CompiledQuery, cap: usize) -> Result<ResultTable, ExecError> {
    let types: Vec<TypeSet> = query.columns.iter().map(|c| c.types).collect();
    let (rows, truncated) = match &query.post {
        None => run_sql(conn, query, &types, Some(cap))?,
        Some(post) => {
            let (raw, _) = run_sql(conn, query, &[], None)?;
            let width = raw.first().map_or(usize::MAX, Vec::len);
            if !raw.is_empty() && !post.validate(width) {
                return Err(ExecError::BadPostAggregation);
            }
            let mut rows = post.apply(&raw);
            for row in &mut rows {
                for (v, t) in row.iter_mut().zip(&types) {
                    if t.contains(AttributeType::Filter) {
                        if let Scalar::Integer(i) = v {
                            *v = Scalar::Boolean(*i != 0);
                        }
                    }
                }
            }
            let truncated = rows.len() > cap;
            rows.truncate(cap);
            (rows, truncated)
        }
    };
    Ok(ResultTable { columns: query.columns.clone(), rows, truncated })
}

/// Results of every subplan, keyed by return step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub tables: BTreeMap<StepId, ResultTable>,
    /// Returns not consumed by a later subplan, in step order.
    pub outputs: Vec<StepId>,
}

impl PlanResult {
    /// The table of the last output return.
    pub fn primary(&self) -> Option<&ResultTable> {
        self.outputs.last().and_then(|r| self.tables.get(r))
    }
}

pub fn execute_plan(
    conn: &Connection,
    plan: &PlanGraph,
    types: &TypeMap,
    labeling: &DomainLabeling,
    dialect: Dialect,
    cap: usize,
) -> Result<PlanResult, ExecError> {
    let compiled = compile_plan(plan, types, labeling, dialect)?;
    let mut tables = BTreeMap::new();
    for sp in &compiled.subplans {
        tables.insert(sp.return_id, execute(conn, &sp.query, cap)?);
    }
    Ok(PlanResult { tables, outputs: compiled.outputs })
}

/// Column headers of a table, for display.
pub fn headers(columns: &[Column]) -> Vec<String> {
    columns
        .iter()
        .map(|c| match &c.units {
            Some(u) => format!("{} ({u})", c.label),
            None => c.label.clone(),
        })
        .collect()
}
