//! Lowers checked plans to parameterized SQL, resolving joins from the
//! labeling.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Serialize, Serializer};

use crate::labeling::{ColumnRef, DomainLabeling, LabelingError};
use crate::plan::{collect_labels, split_subplans, PlanArg, PlanError, PlanGraph, StepId, Subplan, TypeMap};
use crate::post::{AggKind, Column, PostAggregation, PostColumn};

/// Which functions the target engine can evaluate itself. Anything else is
/// computed on the client from raw rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dialect {
    pub name: &'static str,
    /// Population standard deviation in SQL (via moments and `SQRT`).
    pub stddev: bool,
    pub group_concat: bool,
    pub sqrt: bool,
}

impl Dialect {
    pub const SQLITE: Dialect = Dialect { name: "sqlite", stddev: false, group_concat: true, sqrt: true };
}

impl Default for Dialect {
    fn default() -> Self {
        Dialect::SQLITE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SqlParam {
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Serialize for SqlParam {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SqlParam::Integer(i) => s.serialize_i64(*i),
            SqlParam::Real(r) => s.serialize_f64(*r),
            SqlParam::Text(t) => s.serialize_str(t),
        }
    }
}

impl core::fmt::Display for SqlParam {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SqlParam::Integer(i) => write!(f, "{i}"),
            SqlParam::Real(r) => write!(f, "{r}"),
            SqlParam::Text(t) => write!(f, "{t:?}"),
        }
    }
}

fn number_param(n: f64) -> SqlParam {
    if libm::trunc(n) == n && n.abs() < 9.0e15 {
        SqlParam::Integer(n as i64)
    } else {
        SqlParam::Real(n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error("join `{0}` is not declared")]
    MissingJoin(String),
    #[error("tables {0:?} cannot be reached from the root table")]
    Disconnected(Vec<String>),
    #[error("step |{0}| has no type; check the plan first")]
    Unchecked(StepId),
    #[error("step |{step}|: operation `{op}` has no SQL lowering")]
    NoLowering { step: StepId, op: String },
    #[error("step |{0}|: division by a constant zero")]
    ZeroDivisor(StepId),
    #[error("collected value `{0}` is neither grouped nor aggregated")]
    Ungrouped(String),
    #[error("step |{0}|: filter mixes aggregated and row-level values")]
    MixedFilter(StepId),
    #[error("step |{step}|: {reason}")]
    Unsupported { step: StepId, reason: String },
}

/// One inner join onto `table`; the left column of each pair belongs to an
/// already-joined table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JoinClause {
    pub table: String,
    pub on: Vec<(ColumnRef, ColumnRef)>,
    /// The attribute (`Entity.attr`) or relationship that required the join.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JoinPlan {
    pub root_table: String,
    pub joins: Vec<JoinClause>,
}

impl JoinPlan {
    pub fn tables(&self) -> impl Iterator<Item = &str> {
        core::iter::once(self.root_table.as_str()).chain(self.joins.iter().map(|j| j.table.as_str()))
    }
}

struct Edge {
    from: String,
    to: String,
    on: Vec<(ColumnRef, ColumnRef)>,
    provenance: String,
}

impl Edge {
    fn flipped(self) -> Edge {
        Edge {
            on: self.on.into_iter().map(|(a, b)| (b, a)).collect(),
            from: self.to,
            to: self.from,
            provenance: self.provenance,
        }
    }
}

/// Walks a chain of named joins from `start`, producing oriented edges.
fn chain_edges(
    labeling: &DomainLabeling,
    start: &str,
    chain: &[String],
    provenance: &str,
) -> Result<(Vec<Edge>, String), CompileError> {
    let mut current = start.to_owned();
    let mut edges = Vec::new();
    for name in chain {
        let join = labeling.join(name).ok_or_else(|| CompileError::MissingJoin(name.clone()))?;
        let next = join
            .other_side(&current)
            .ok_or_else(|| CompileError::MissingJoin(name.clone()))?
            .to_owned();
        let forward = join.from_table == current;
        let on = join
            .on
            .iter()
            .map(|(a, b)| {
                let a = ColumnRef { table: join.from_table.clone(), column: a.clone() };
                let b = ColumnRef { table: join.to_table.clone(), column: b.clone() };
                if forward {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        edges.push(Edge { from: current, to: next.clone(), on, provenance: provenance.to_owned() });
        current = next;
    }
    Ok((edges, current))
}

/// Joins needed to read `attributes` of `entities`, rooted at the primary
/// table of the first entity. Intra-entity joins come first, then joins
/// along relationship paths between every pair of entities.
pub fn resolve_joins(
    labeling: &DomainLabeling,
    entities: &[&str],
    attributes: &[(&str, &str)],
) -> Result<JoinPlan, CompileError> {
    let entity = |name: &str| labeling.entity(name).ok_or_else(|| LabelingError::UnknownEntity(name.into()));
    let Some(first) = entities.first() else {
        return Err(LabelingError::Structural("no entity retrieved".into()).into());
    };
    let root_table = entity(first)?.primary_table.clone();

    let mut candidates = Vec::new();
    for (ename, aname) in attributes {
        let e = entity(ename)?;
        let attr = e.attribute(aname).ok_or_else(|| {
            LabelingError::Structural(format!("entity `{ename}` has no attribute `{aname}`"))
        })?;
        if attr.source.table != e.primary_table {
            let chain = attr.via_joins.as_deref().unwrap_or_default();
            let (edges, _) = chain_edges(labeling, &e.primary_table, chain, &format!("{ename}.{aname}"))?;
            candidates.extend(edges);
        }
    }
    for (i, a) in entities.iter().enumerate() {
        for b in &entities[i + 1..] {
            let mut current = *a;
            for rel in labeling.relationship_path(a, b)? {
                let forward = rel.from_entity == current;
                let next = if forward { &rel.to_entity } else { &rel.from_entity };
                let start = &entity(current)?.primary_table;
                let chain: Vec<String> = if forward {
                    rel.join_chain.clone()
                } else {
                    rel.join_chain.iter().rev().cloned().collect()
                };
                let (edges, _) = chain_edges(labeling, start, &chain, &rel.name)?;
                candidates.extend(edges);
                current = next;
            }
        }
    }

    let mut joined: BTreeSet<String> = BTreeSet::new();
    joined.insert(root_table.clone());
    let mut joins = Vec::new();
    let mut pending: Vec<Edge> = candidates;
    loop {
        pending.retain(|e| !(joined.contains(&e.from) && joined.contains(&e.to)));
        let Some(pos) = pending.iter().position(|e| joined.contains(&e.from) || joined.contains(&e.to)) else {
            break;
        };
        let mut edge = pending.remove(pos);
        if !joined.contains(&edge.from) {
            edge = edge.flipped();
        }
        joined.insert(edge.to.clone());
        joins.push(JoinClause { table: edge.to, on: edge.on, provenance: edge.provenance });
    }
    if !pending.is_empty() {
        let tables: BTreeSet<String> = pending.into_iter().flat_map(|e| [e.from, e.to]).collect();
        return Err(CompileError::Disconnected(tables.into_iter().collect()));
    }
    Ok(JoinPlan { root_table, joins })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SqlAgg {
    Count,
    CountDistinct,
    Sum,
    Avg,
    Max,
    Min,
    GroupConcat,
    StdDev,
}

impl SqlAgg {
    fn kind(self) -> AggKind {
        match self {
            SqlAgg::Count => AggKind::Count,
            SqlAgg::CountDistinct => AggKind::CountUnique,
            SqlAgg::Sum => AggKind::Sum,
            SqlAgg::Avg => AggKind::Average,
            SqlAgg::Max => AggKind::Max,
            SqlAgg::Min => AggKind::Min,
            SqlAgg::GroupConcat => AggKind::StringAggregation,
            SqlAgg::StdDev => AggKind::StandardDeviation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Column(ColumnRef),
    Param(SqlParam),
    Agg { func: SqlAgg, arg: Box<Expr>, order: Option<ColumnRef> },
    ClientAgg { kind: AggKind, args: Vec<Expr> },
    Infix { op: &'static str, args: Vec<Expr> },
    Divide(Vec<Expr>),
    PercentChange(Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
    ClientSqrt(Box<Expr>),
    Compare { op: &'static str, lhs: Box<Expr>, rhs: Box<Expr> },
    Contains { target: Box<Expr>, needle: String },
    Logic { op: &'static str, args: Vec<Expr> },
    Not(Box<Expr>),
    IsNotNull(Box<Expr>),
}

fn quote(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

fn column_sql(c: &ColumnRef) -> String {
    format!("{}.{}", quote(&c.table), quote(&c.column))
}

fn escape_like(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('%');
    for ch in s.to_lowercase().chars() {
        if matches!(ch, '%' | '_' | '\\') {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('%');
    out
}

impl Expr {
    fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Column(_) | Expr::Param(_) => false,
            Expr::Agg { arg, .. } => arg.any(pred),
            Expr::ClientAgg { args, .. } | Expr::Infix { args, .. } | Expr::Divide(args) | Expr::Logic { args, .. } => {
                args.iter().any(|a| a.any(pred))
            }
            Expr::PercentChange(a, b) | Expr::Compare { lhs: a, rhs: b, .. } => a.any(pred) || b.any(pred),
            Expr::Sqrt(a) | Expr::ClientSqrt(a) | Expr::Not(a) | Expr::IsNotNull(a) | Expr::Contains { target: a, .. } => {
                a.any(pred)
            }
        }
    }

    fn is_aggregate(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Agg { .. } | Expr::ClientAgg { .. }))
    }

    /// True when a column appears outside every aggregate.
    fn has_bare_column(&self) -> bool {
        match self {
            Expr::Column(_) => true,
            Expr::Param(_) | Expr::Agg { .. } | Expr::ClientAgg { .. } => false,
            Expr::Infix { args, .. } | Expr::Divide(args) | Expr::Logic { args, .. } => {
                args.iter().any(Expr::has_bare_column)
            }
            Expr::PercentChange(a, b) | Expr::Compare { lhs: a, rhs: b, .. } => {
                a.has_bare_column() || b.has_bare_column()
            }
            Expr::Sqrt(a) | Expr::ClientSqrt(a) | Expr::Not(a) | Expr::IsNotNull(a) | Expr::Contains { target: a, .. } => {
                a.has_bare_column()
            }
        }
    }

    fn needs_client(&self) -> bool {
        self.any(&|e| matches!(e, Expr::ClientAgg { .. } | Expr::ClientSqrt(_)))
    }

    fn render(&self, out: &mut String, params: &mut Vec<SqlParam>) {
        match self {
            Expr::Column(c) => out.push_str(&column_sql(c)),
            Expr::Param(p) => {
                out.push('?');
                params.push(p.clone());
            }
            Expr::Agg { func, arg, order } => match func {
                SqlAgg::Count => wrap(out, params, "COUNT(", arg, ")"),
                SqlAgg::CountDistinct => wrap(out, params, "COUNT(DISTINCT ", arg, ")"),
                SqlAgg::Sum => wrap(out, params, "SUM(", arg, ")"),
                SqlAgg::Avg => wrap(out, params, "AVG(", arg, ")"),
                SqlAgg::Max => wrap(out, params, "MAX(", arg, ")"),
                SqlAgg::Min => wrap(out, params, "MIN(", arg, ")"),
                SqlAgg::GroupConcat => {
                    wrap(out, params, "GROUP_CONCAT(CAST(", arg, " AS TEXT), ', '");
                    if let Some(key) = order {
                        out.push_str(" ORDER BY ");
                        out.push_str(&column_sql(key));
                    }
                    out.push(')');
                }
                SqlAgg::StdDev => {
                    out.push_str("SQRT(AVG((");
                    arg.render(out, params);
                    out.push_str(") * (");
                    arg.render(out, params);
                    out.push_str(")) - AVG(");
                    arg.render(out, params);
                    out.push_str(") * AVG(");
                    arg.render(out, params);
                    out.push_str("))");
                }
            },
            Expr::ClientAgg { .. } | Expr::ClientSqrt(_) => {
                unreachable!("client-side values are never rendered as SQL")
            }
            Expr::Infix { op, args } => join_rendered(out, params, args, op),
            Expr::Divide(args) => {
                out.push_str("(CAST(");
                args[0].render(out, params);
                out.push_str(" AS REAL)");
                for a in &args[1..] {
                    out.push_str(" / ");
                    a.render(out, params);
                }
                out.push(')');
            }
            Expr::PercentChange(a, b) => {
                out.push_str("(100.0 * (");
                b.render(out, params);
                out.push_str(" - ");
                a.render(out, params);
                out.push_str(") / ");
                a.render(out, params);
                out.push(')');
            }
            Expr::Sqrt(a) => wrap(out, params, "SQRT(", a, ")"),
            Expr::Compare { op, lhs, rhs } => {
                out.push('(');
                lhs.render(out, params);
                out.push(' ');
                out.push_str(op);
                out.push(' ');
                rhs.render(out, params);
                out.push(')');
            }
            Expr::Contains { target, needle } => {
                wrap(out, params, "(LOWER(CAST(", target, " AS TEXT)) LIKE ? ESCAPE '\\')");
                params.push(SqlParam::Text(escape_like(needle)));
            }
            Expr::Logic { op, args } => join_rendered(out, params, args, op),
            Expr::Not(a) => wrap(out, params, "(NOT ", a, ")"),
            Expr::IsNotNull(a) => wrap(out, params, "(", a, " IS NOT NULL)"),
        }
    }
}

fn wrap(out: &mut String, params: &mut Vec<SqlParam>, open: &str, inner: &Expr, close: &str) {
    out.push_str(open);
    inner.render(out, params);
    out.push_str(close);
}

fn join_rendered(out: &mut String, params: &mut Vec<SqlParam>, args: &[Expr], op: &str) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push(' ');
            out.push_str(op);
            out.push(' ');
        }
        a.render(out, params);
    }
    out.push(')');
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Table(String),
    Derived { query: Box<Query>, alias: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Query {
    distinct: bool,
    select: Vec<(Expr, String)>,
    from: Vec<Source>,
    joins: Vec<JoinClause>,
    filters: Vec<Expr>,
    group_by: Vec<Expr>,
    having: Vec<Expr>,
    order_by: Vec<(Expr, bool)>,
    limit: Option<i64>,
}

impl Query {
    fn render(&self, out: &mut String, params: &mut Vec<SqlParam>) {
        out.push_str(if self.distinct { "SELECT DISTINCT " } else { "SELECT " });
        for (i, (e, label)) in self.select.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            e.render(out, params);
            out.push_str(" AS ");
            out.push_str(&quote(label));
        }
        out.push_str(" FROM ");
        let mut sources = self.from.iter();
        if let Some(first) = sources.next() {
            render_source(first, out, params);
        }
        for j in &self.joins {
            out.push_str(" INNER JOIN ");
            out.push_str(&quote(&j.table));
            out.push_str(" ON ");
            for (i, (a, b)) in j.on.iter().enumerate() {
                if i > 0 {
                    out.push_str(" AND ");
                }
                out.push_str(&column_sql(a));
                out.push_str(" = ");
                out.push_str(&column_sql(b));
            }
        }
        for s in sources {
            out.push_str(" CROSS JOIN ");
            render_source(s, out, params);
        }
        render_conjunction(" WHERE ", &self.filters, out, params);
        if !self.group_by.is_empty() {
            out.push_str(" GROUP BY ");
            for (i, e) in self.group_by.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                e.render(out, params);
            }
        }
        render_conjunction(" HAVING ", &self.having, out, params);
        if !self.order_by.is_empty() {
            out.push_str(" ORDER BY ");
            for (i, (e, desc)) in self.order_by.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                e.render(out, params);
                out.push_str(if *desc { " DESC" } else { " ASC" });
            }
        }
        if let Some(n) = self.limit {
            out.push_str(" LIMIT ?");
            params.push(SqlParam::Integer(n));
        }
    }
}

fn render_source(source: &Source, out: &mut String, params: &mut Vec<SqlParam>) {
    match source {
        Source::Table(t) => out.push_str(&quote(t)),
        Source::Derived { query, alias } => {
            out.push('(');
            query.render(out, params);
            out.push_str(") AS ");
            out.push_str(&quote(alias));
        }
    }
}

fn render_conjunction(keyword: &str, exprs: &[Expr], out: &mut String, params: &mut Vec<SqlParam>) {
    if exprs.is_empty() {
        return;
    }
    out.push_str(keyword);
    for (i, e) in exprs.iter().enumerate() {
        if i > 0 {
            out.push_str(" AND ");
        }
        e.render(out, params);
    }
}

/// SQL text, its positional parameters, the output columns, and any
/// client-side reduction to apply to the raw rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompiledQuery {
    pub sql: String,
    pub params: Vec<SqlParam>,
    pub columns: Vec<Column>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post: Option<PostAggregation>,
}

impl CompiledQuery {
    fn from_query(query: &Query, columns: Vec<Column>, post: Option<PostAggregation>) -> CompiledQuery {
        let mut sql = String::new();
        let mut params = Vec::new();
        query.render(&mut sql, &mut params);
        CompiledQuery { sql, params, columns, post }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompiledSubplan {
    pub return_id: StepId,
    pub query: CompiledQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompiledPlan {
    pub subplans: Vec<CompiledSubplan>,
    /// Returns whose results are not consumed by a later subplan.
    pub outputs: Vec<StepId>,
}

impl CompiledPlan {
    pub fn subplan(&self, return_id: StepId) -> Option<&CompiledSubplan> {
        self.subplans.iter().find(|s| s.return_id == return_id)
    }
}

enum Built {
    Sql(Query, Vec<Column>),
    Client(CompiledQuery),
}

struct Compiler<'a> {
    plan: &'a PlanGraph,
    types: &'a TypeMap,
    labeling: &'a DomainLabeling,
    dialect: Dialect,
    subplans: BTreeMap<StepId, Subplan>,
}

/// Compiles every subplan of a checked plan.
pub fn compile_plan(
    plan: &PlanGraph,
    types: &TypeMap,
    labeling: &DomainLabeling,
    dialect: Dialect,
) -> Result<CompiledPlan, CompileError> {
    let subplans = split_subplans(plan)?;
    let compiler = Compiler {
        plan,
        types,
        labeling,
        dialect,
        subplans: subplans.iter().map(|s| (s.return_id, s.clone())).collect(),
    };
    let mut out = Vec::new();
    for sp in &subplans {
        out.push(CompiledSubplan { return_id: sp.return_id, query: compiler.compile(sp.return_id)? });
    }
    Ok(CompiledPlan { subplans: out, outputs: crate::plan::output_returns(plan) })
}

/// Compiles the subplan ending at one return step.
pub fn compile_subplan(
    plan: &PlanGraph,
    types: &TypeMap,
    labeling: &DomainLabeling,
    dialect: Dialect,
    return_id: StepId,
) -> Result<CompiledQuery, CompileError> {
    let subplans = split_subplans(plan)?;
    let compiler = Compiler {
        plan,
        types,
        labeling,
        dialect,
        subplans: subplans.into_iter().map(|s| (s.return_id, s)).collect(),
    };
    compiler.compile(return_id)
}

struct Scope {
    entities: Vec<String>,
    attributes: Vec<(String, String)>,
    derived: Vec<StepId>,
}

impl<'a> Compiler<'a> {
    fn compile(&self, rid: StepId) -> Result<CompiledQuery, CompileError> {
        match self.build(rid)? {
            Built::Sql(q, cols) => Ok(CompiledQuery::from_query(&q, cols, None)),
            Built::Client(c) => Ok(c),
        }
    }

    fn step(&self, id: StepId) -> &'a crate::plan::PlanStep {
        self.plan.step(id).expect("references are validated at parse time")
    }

    fn unsupported(step: StepId, reason: impl Into<String>) -> CompileError {
        CompileError::Unsupported { step, reason: reason.into() }
    }

    fn root_key(&self, scope: &Scope) -> Option<ColumnRef> {
        let entity = self.labeling.entity(scope.entities.first()?)?;
        let table = self.labeling.table(&entity.primary_table)?;
        Some(ColumnRef { table: table.name.clone(), column: table.primary_key.clone() })
    }

    fn arg_expr(&self, arg: &PlanArg, scope: &mut Scope) -> Result<Expr, CompileError> {
        match arg {
            PlanArg::StepRef(r) => self.expr(*r, scope),
            PlanArg::StringLit(s) => Ok(Expr::Param(SqlParam::Text(s.clone()))),
            PlanArg::NumberLit(n) => Ok(Expr::Param(number_param(*n))),
        }
    }

    fn value_args(&self, id: StepId, scope: &mut Scope) -> Result<Vec<Expr>, CompileError> {
        self.step(id)
            .args
            .iter()
            .filter(|a| a.step_ref().is_none_or(|r| self.step(r).op != "groupby"))
            .map(|a| self.arg_expr(a, scope))
            .collect()
    }

    fn expr(&self, id: StepId, scope: &mut Scope) -> Result<Expr, CompileError> {
        let step = self.step(id);
        if !self.types.contains_key(&id) {
            return Err(CompileError::Unchecked(id));
        }
        let op = step.op.as_str();
        match op {
            "retrieve_attribute" => {
                let source = step.args[0].step_ref().ok_or(CompileError::Unchecked(id))?;
                let name = step.args[1].as_str().unwrap_or_default();
                let source_step = self.step(source);
                if source_step.op == "return" {
                    if !scope.derived.contains(&source) {
                        scope.derived.push(source);
                    }
                    return Ok(Expr::Column(ColumnRef { table: format!("sq{source}"), column: name.to_owned() }));
                }
                let entity_name = source_step.args[0].as_str().unwrap_or_default();
                let entity = self.labeling.entity(entity_name).ok_or(CompileError::Unchecked(source))?;
                let attr = entity.attribute(name).ok_or(CompileError::Unchecked(id))?;
                let key = (entity_name.to_owned(), name.to_owned());
                if !scope.attributes.contains(&key) {
                    scope.attributes.push(key);
                }
                Ok(Expr::Column(attr.source.clone()))
            }
            _ if AggKind::from_op(op).is_some() => {
                let kind = AggKind::from_op(op).expect("guarded");
                let mut args = self.value_args(id, scope)?;
                if args.iter().any(Expr::is_aggregate) {
                    return Err(Self::unsupported(id, "aggregate of an aggregate"));
                }
                let func = match op {
                    "count" => Some(SqlAgg::Count),
                    "count_unique" => Some(SqlAgg::CountDistinct),
                    "sum" => Some(SqlAgg::Sum),
                    "average" => Some(SqlAgg::Avg),
                    "max" => Some(SqlAgg::Max),
                    "min" | "get_one" => Some(SqlAgg::Min),
                    "standard_deviation" if self.dialect.stddev && self.dialect.sqrt => Some(SqlAgg::StdDev),
                    "string_aggregation" if self.dialect.group_concat => Some(SqlAgg::GroupConcat),
                    _ => None,
                };
                Ok(match func {
                    Some(func) => {
                        let order = if func == SqlAgg::GroupConcat { self.root_key(scope) } else { None };
                        Expr::Agg { func, arg: Box::new(args.swap_remove(0)), order }
                    }
                    None => Expr::ClientAgg { kind, args },
                })
            }
            "add" | "subtract" | "multiply" => {
                let sym = match op {
                    "add" => "+",
                    "subtract" => "-",
                    _ => "*",
                };
                Ok(Expr::Infix { op: sym, args: self.value_args(id, scope)? })
            }
            "divide" => {
                if step.args[1..].iter().any(|a| matches!(a, PlanArg::NumberLit(n) if *n == 0.0)) {
                    return Err(CompileError::ZeroDivisor(id));
                }
                Ok(Expr::Divide(self.value_args(id, scope)?))
            }
            "percent_change" => {
                let mut args = self.value_args(id, scope)?;
                let b = args.pop().ok_or(CompileError::Unchecked(id))?;
                let a = args.pop().ok_or(CompileError::Unchecked(id))?;
                Ok(Expr::PercentChange(Box::new(a), Box::new(b)))
            }
            "square_root" => {
                let a = Box::new(self.arg_expr(&step.args[0], scope)?);
                Ok(if self.dialect.sqrt { Expr::Sqrt(a) } else { Expr::ClientSqrt(a) })
            }
            "exact" | "greaterthan" | "greaterthan_eq" | "lessthan" | "lessthan_eq" => {
                let sym = match op {
                    "exact" => "=",
                    "greaterthan" => ">",
                    "greaterthan_eq" => ">=",
                    "lessthan" => "<",
                    _ => "<=",
                };
                let lhs = Box::new(self.arg_expr(&step.args[0], scope)?);
                let rhs = Box::new(self.arg_expr(&step.args[1], scope)?);
                Ok(Expr::Compare { op: sym, lhs, rhs })
            }
            "contains" => {
                let target = Box::new(self.arg_expr(&step.args[0], scope)?);
                let needle = step.args[1].as_str().unwrap_or_default().to_owned();
                Ok(Expr::Contains { target, needle })
            }
            "and" | "or" => {
                let args = self.value_args(id, scope)?;
                Ok(Expr::Logic { op: if op == "and" { "AND" } else { "OR" }, args })
            }
            "not" => Ok(Expr::Not(Box::new(self.arg_expr(&step.args[0], scope)?))),
            "retrieve_entity" | "collect" | "return" | "groupby" | "sort" | "limit" => {
                Err(Self::unsupported(id, format!("`{op}` does not produce a column value")))
            }
            _ => Err(CompileError::NoLowering { step: id, op: op.to_owned() }),
        }
    }

    /// Top-level conjuncts of a filter step, as step ids.
    fn conjuncts(&self, id: StepId, out: &mut Vec<StepId>) {
        let step = self.step(id);
        if step.op == "and" {
            for r in step.refs() {
                self.conjuncts(r, out);
            }
        } else {
            out.push(id);
        }
    }

    fn units_of(&self, id: StepId) -> Option<String> {
        let step = self.step(id);
        match step.op.as_str() {
            "retrieve_attribute" => {
                let source = self.step(step.args[0].step_ref()?);
                let entity = self.labeling.entity(source.args.first()?.as_str()?)?;
                entity.attribute(step.args[1].as_str()?)?.units.clone()
            }
            "average" | "sum" | "max" | "min" | "get_one" | "median" | "standard_deviation" => {
                self.units_of(step.refs().next()?)
            }
            _ => None,
        }
    }

    fn build(&self, rid: StepId) -> Result<Built, CompileError> {
        let subplan = self.subplans.get(&rid).ok_or(CompileError::Unchecked(rid))?;
        let ret = self.step(rid);
        let mut scope = Scope { entities: Vec::new(), attributes: Vec::new(), derived: Vec::new() };
        for &m in &subplan.steps {
            let s = self.step(m);
            if s.op == "retrieve_entity" {
                let name = s.args[0].as_str().unwrap_or_default().to_owned();
                if !scope.entities.contains(&name) {
                    scope.entities.push(name);
                }
            }
        }

        let collect_id = ret.args.first().and_then(PlanArg::step_ref).ok_or(CompileError::Unchecked(rid))?;
        let labels = collect_labels(self.plan, collect_id);
        let mut select = Vec::new();
        let mut columns = Vec::new();
        let mut select_steps = Vec::new();
        for (item, label) in self.step(collect_id).refs().zip(labels) {
            let e = self.expr(item, &mut scope)?;
            let types = self.types.get(&item).ok_or(CompileError::Unchecked(item))?.types;
            columns.push(Column { label: label.clone(), types, units: self.units_of(item) });
            select.push((e, label));
            select_steps.push(item);
        }

        let mut group_by: Vec<Expr> = Vec::new();
        for &m in &subplan.steps {
            if self.step(m).op == "groupby" {
                for r in self.step(m).refs() {
                    let e = self.expr(r, &mut scope)?;
                    if !group_by.contains(&e) {
                        group_by.push(e);
                    }
                }
            }
        }

        let mut filters = Vec::new();
        let mut having = Vec::new();
        let mut order_by = Vec::new();
        let mut limit = None;
        for r in ret.refs().skip(1) {
            let s = self.step(r);
            match s.op.as_str() {
                "sort" => {
                    let desc = s.args.last().and_then(PlanArg::as_str) == Some("desc");
                    for key in s.refs() {
                        order_by.push((key, self.expr(key, &mut scope)?, desc));
                    }
                }
                "limit" => {
                    if let Some(PlanArg::NumberLit(n)) = s.args.first() {
                        limit = Some(*n as i64);
                    }
                }
                _ => {
                    let mut parts = Vec::new();
                    self.conjuncts(r, &mut parts);
                    for p in parts {
                        let e = self.expr(p, &mut scope)?;
                        if e.is_aggregate() {
                            if e.has_bare_column() {
                                return Err(CompileError::MixedFilter(p));
                            }
                            having.push(e);
                        } else {
                            filters.push(e);
                        }
                    }
                }
            }
        }

        let aggregated = !group_by.is_empty() || select.iter().any(|(e, _)| e.is_aggregate());
        if aggregated {
            for (e, label) in &select {
                if !e.is_aggregate() && e.has_bare_column() && !group_by.contains(e) {
                    return Err(CompileError::Ungrouped(label.clone()));
                }
            }
        }

        let mut from = Vec::new();
        let mut joins = Vec::new();
        if !scope.entities.is_empty() {
            let entities: Vec<&str> = scope.entities.iter().map(String::as_str).collect();
            let attributes: Vec<(&str, &str)> =
                scope.attributes.iter().map(|(e, a)| (e.as_str(), a.as_str())).collect();
            let jp = resolve_joins(self.labeling, &entities, &attributes)?;
            from.push(Source::Table(jp.root_table));
            joins = jp.joins;
        }
        for &d in &scope.derived {
            match self.build(d)? {
                Built::Sql(query, _) => from.push(Source::Derived { query: Box::new(query), alias: format!("sq{d}") }),
                Built::Client(_) => {
                    return Err(Self::unsupported(
                        rid,
                        format!("subplan |{d}| needs client-side aggregation and cannot be nested"),
                    ))
                }
            }
        }
        if from.is_empty() {
            return Err(Self::unsupported(rid, "subplan retrieves no entity"));
        }

        let needs_client = select.iter().any(|(e, _)| e.needs_client());
        if !needs_client {
            let order_by = order_by.into_iter().map(|(_, e, d)| (e, d)).collect();
            let query = Query { distinct: false, select, from, joins, filters, group_by, having, order_by, limit };
            return Ok(Built::Sql(query, columns));
        }

        if !having.is_empty() {
            return Err(Self::unsupported(rid, "filters over client-side aggregates are not supported"));
        }
        let mut order = Vec::new();
        for (key, e, desc) in &order_by {
            let pos = select_steps
                .iter()
                .position(|s| s == key)
                .or_else(|| select.iter().position(|(se, _)| se == e))
                .ok_or_else(|| Self::unsupported(*key, "sort key must be collected when aggregating on the client"))?;
            order.push((pos, *desc));
        }

        let mut raw: Vec<Expr> = Vec::new();
        let intern = |raw: &mut Vec<Expr>, e: Expr| match raw.iter().position(|x| *x == e) {
            Some(i) => i,
            None => {
                raw.push(e);
                raw.len() - 1
            }
        };
        let grouped = select.iter().any(|(e, _)| e.is_aggregate());
        let mut post_columns = Vec::new();
        let mut raw_order = Vec::new();
        let group_keys = if grouped {
            let keys: Vec<usize> = group_by.iter().map(|g| intern(&mut raw, g.clone())).collect();
            for (e, label) in &select {
                let col = match e {
                    Expr::Agg { func, arg, .. } if !arg.is_aggregate() => {
                        PostColumn::Agg { kind: func.kind(), inputs: alloc::vec![intern(&mut raw, (**arg).clone())] }
                    }
                    Expr::ClientAgg { kind, args } if !args.iter().any(|a| a.needs_client() || a.is_aggregate()) => {
                        let inputs = args.iter().map(|a| intern(&mut raw, a.clone())).collect();
                        PostColumn::Agg { kind: *kind, inputs }
                    }
                    e if !e.is_aggregate() && !e.needs_client() => PostColumn::Pass(intern(&mut raw, e.clone())),
                    _ => {
                        return Err(Self::unsupported(
                            rid,
                            format!("`{label}` combines client-side aggregates with other operations"),
                        ))
                    }
                };
                post_columns.push(col);
            }
            raw_order.extend(group_by.iter().map(|g| (g.clone(), false)));
            Some(keys)
        } else {
            for (e, label) in &select {
                let col = match e {
                    Expr::ClientSqrt(inner) if !inner.needs_client() => PostColumn::Sqrt(intern(&mut raw, (**inner).clone())),
                    e if !e.needs_client() => PostColumn::Pass(intern(&mut raw, e.clone())),
                    _ => return Err(Self::unsupported(rid, format!("`{label}` cannot be computed on the client"))),
                };
                post_columns.push(col);
            }
            None
        };
        if let Some(pk) = self.root_key(&scope) {
            raw_order.push((Expr::Column(pk), false));
        }
        let raw_select: Vec<(Expr, String)> =
            raw.into_iter().enumerate().map(|(i, e)| (e, format!("c{i}"))).collect();
        let post = PostAggregation { group_keys, columns: post_columns, order, limit: limit.map(|n| n as u64) };
        let query = Query {
            distinct: false,
            select: raw_select,
            from,
            joins,
            filters,
            group_by: Vec::new(),
            having: Vec::new(),
            order_by: raw_order,
            limit: None,
        };
        Ok(Built::Client(CompiledQuery::from_query(&query, columns, Some(post))))
    }
}

/// Distinct non-null values of one attribute, in ascending order.
pub fn instance_query(
    labeling: &DomainLabeling,
    entity: &str,
    attribute: &str,
    cap: usize,
) -> Result<CompiledQuery, CompileError> {
    let e = labeling.entity(entity).ok_or_else(|| LabelingError::UnknownEntity(entity.into()))?;
    let attr = e
        .attribute(attribute)
        .ok_or_else(|| LabelingError::Structural(format!("entity `{entity}` has no attribute `{attribute}`")))?;
    let jp = resolve_joins(labeling, &[entity], &[(entity, attribute)])?;
    let column = Expr::Column(attr.source.clone());
    let query = Query {
        distinct: true,
        select: alloc::vec![(column.clone(), attribute.to_string())],
        from: alloc::vec![Source::Table(jp.root_table)],
        joins: jp.joins,
        filters: alloc::vec![Expr::IsNotNull(Box::new(column.clone()))],
        order_by: alloc::vec![(column, false)],
        limit: Some(cap as i64),
        ..Query::default()
    };
    Ok(CompiledQuery::from_query(
        &query,
        alloc::vec![Column { label: attribute.into(), types: attr.attribute_types, units: attr.units.clone() }],
        None,
    ))
}
