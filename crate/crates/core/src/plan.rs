//! Analytic plans: a DAG of numbered steps, each applying an operation to
//! references to earlier steps and to literals.
//!
//! Textual form, one step per line:
//!
//! ```text
//! # comment
//! |1| retrieve_entity("CarbonEmission")
//! |2| retrieve_attribute(|1|, "amount")
//! |3| average(|2|)
//! |4| collect(|3|)
//! |5| return(|4|)
//! ```

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::labeling::DomainLabeling;
use crate::taxonomy::{AttributeType, Category, OperationRegistry, TaxonomyError, TypeSet};
use crate::util::closest_match;

pub type StepId = u32;

#[derive(Debug, Clone, PartialEq)]
pub enum PlanArg {
    StepRef(StepId),
    StringLit(String),
    NumberLit(f64),
}

impl PlanArg {
    pub fn step_ref(&self) -> Option<StepId> {
        match self {
            PlanArg::StepRef(id) => Some(*id),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PlanArg::StringLit(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for PlanArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanArg::StepRef(id) => write!(f, "|{id}|"),
            PlanArg::StringLit(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            PlanArg::NumberLit(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub id: StepId,
    pub op: String,
    pub args: Vec<PlanArg>,
}

impl PlanStep {
    pub fn refs(&self) -> impl Iterator<Item = StepId> + '_ {
        self.args.iter().filter_map(PlanArg::step_ref)
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}| {}(", self.id, self.op)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanGraph {
    steps: Vec<PlanStep>,
    returns: Vec<StepId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanWarning {
    NoReturn,
    DeadStep(StepId),
}

impl fmt::Display for PlanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanWarning::NoReturn => f.write_str("plan has no return step"),
            PlanWarning::DeadStep(id) => write!(f, "step |{id}| does not feed any return"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}, column {column}: step |{step}| references |{target}|, which is not an earlier step")]
    ForwardReference { line: usize, column: usize, step: StepId, target: StepId },
    #[error("line {line}, column {column}: step |{step}| references undefined step |{target}|")]
    DanglingReference { line: usize, column: usize, step: StepId, target: StepId },
    #[error("line {line}: duplicate step id |{step}|")]
    DuplicateStep { line: usize, step: StepId },
    #[error("line {line}: step id |{step}| does not increase on |{previous}|")]
    NonIncreasing { line: usize, step: StepId, previous: StepId },
    #[error("step |{step}| is reachable from both return |{first}| and return |{second}|")]
    SharedStep { step: StepId, first: StepId, second: StepId },
}

impl PlanError {
    /// 1-based line and column of the error, when it has a source position.
    pub fn position(&self) -> Option<(usize, usize)> {
        match self {
            PlanError::Syntax { line, column, .. }
            | PlanError::ForwardReference { line, column, .. }
            | PlanError::DanglingReference { line, column, .. } => Some((*line, *column)),
            PlanError::DuplicateStep { line, .. } | PlanError::NonIncreasing { line, .. } => Some((*line, 1)),
            PlanError::SharedStep { .. } => None,
        }
    }
}

impl PlanGraph {
    /// Builds a plan from steps, checking id order and reference direction.
    pub fn new(steps: Vec<PlanStep>) -> Result<PlanGraph, PlanError> {
        let mut seen = BTreeSet::new();
        let mut previous: Option<StepId> = None;
        for (i, step) in steps.iter().enumerate() {
            let line = i + 1;
            if !seen.insert(step.id) {
                return Err(PlanError::DuplicateStep { line, step: step.id });
            }
            if let Some(p) = previous {
                if step.id <= p {
                    return Err(PlanError::NonIncreasing { line, step: step.id, previous: p });
                }
            }
            previous = Some(step.id);
            for target in step.refs() {
                if target >= step.id {
                    return Err(PlanError::ForwardReference { line, column: 1, step: step.id, target });
                }
                if !seen.contains(&target) {
                    return Err(PlanError::DanglingReference { line, column: 1, step: step.id, target });
                }
            }
        }
        let returns = steps.iter().filter(|s| s.op == "return").map(|s| s.id).collect();
        Ok(PlanGraph { steps, returns })
    }

    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    pub fn returns(&self) -> &[StepId] {
        &self.returns
    }

    pub fn step(&self, id: StepId) -> Option<&PlanStep> {
        self.steps
            .binary_search_by_key(&id, |s| s.id)
            .ok()
            .map(|i| &self.steps[i])
    }

    /// Text form with step ids as they are.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }

    /// Same plan with ids renumbered 1, 2, 3, ...
    pub fn canonicalize(&self) -> PlanGraph {
        let map: BTreeMap<StepId, StepId> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id, i as StepId + 1))
            .collect();
        let steps = self
            .steps
            .iter()
            .map(|s| PlanStep {
                id: map[&s.id],
                op: s.op.clone(),
                args: s
                    .args
                    .iter()
                    .map(|a| match a {
                        PlanArg::StepRef(r) => PlanArg::StepRef(map[r]),
                        other => other.clone(),
                    })
                    .collect(),
            })
            .collect();
        PlanGraph::new(steps).expect("renumbering preserves validity")
    }

    /// Canonical text: consecutive ids from 1.
    pub fn canonical_text(&self) -> String {
        self.canonicalize().render_text()
    }

    /// Steps backward-reachable from `root`. Traversal stops at other return
    /// steps, which are data sources rather than members.
    pub fn reachable_from(&self, root: StepId) -> BTreeSet<StepId> {
        let mut seen = BTreeSet::new();
        let mut stack = alloc::vec![root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            if let Some(step) = self.step(id) {
                for r in step.refs() {
                    let is_return = self.step(r).is_some_and(|s| s.op == "return");
                    if !is_return {
                        stack.push(r);
                    }
                }
            }
        }
        seen
    }

    pub fn warnings(&self) -> Vec<PlanWarning> {
        if self.returns.is_empty() {
            return alloc::vec![PlanWarning::NoReturn];
        }
        let mut warnings = Vec::new();
        let live: BTreeSet<StepId> = self.returns.iter().flat_map(|r| self.reachable_from(*r)).collect();
        for s in &self.steps {
            if !live.contains(&s.id) {
                warnings.push(PlanWarning::DeadStep(s.id));
            }
        }
        warnings
    }
}

impl fmt::Display for PlanGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_text())
    }
}

struct Cursor<'a> {
    chars: core::iter::Peekable<core::str::CharIndices<'a>>,
    text: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn column(&mut self) -> usize {
        let offset = self.chars.peek().map(|(i, _)| *i).unwrap_or(self.text.len());
        self.text[..offset].chars().count() + 1
    }

    fn error(&mut self, message: impl Into<String>) -> PlanError {
        PlanError::Syntax { line: self.line, column: self.column(), message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn expect(&mut self, want: char) -> Result<(), PlanError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.chars.next();
                Ok(())
            }
            Some(c) => Err(self.error(format!("expected `{want}`, found `{c}`"))),
            None => Err(self.error(format!("expected `{want}`, found end of line"))),
        }
    }

    fn integer(&mut self) -> Result<StepId, PlanError> {
        self.skip_ws();
        let mut digits = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            digits.push(c);
            self.chars.next();
        }
        if digits.is_empty() {
            return Err(self.error("expected a step number"));
        }
        match digits.parse::<StepId>() {
            Ok(0) => Err(self.error("step ids start at 1")),
            Ok(n) => Ok(n),
            Err(_) => Err(self.error("step number too large")),
        }
    }

    fn step_ref(&mut self) -> Result<StepId, PlanError> {
        self.expect('|')?;
        let id = self.integer()?;
        self.expect('|')?;
        Ok(id)
    }

    fn identifier(&mut self) -> Result<String, PlanError> {
        self.skip_ws();
        let mut name = String::new();
        while let Some(c) = self.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
            name.push(c);
            self.chars.next();
        }
        if name.is_empty() {
            return Err(self.error("expected an operation name"));
        }
        Ok(name.to_lowercase())
    }

    fn string(&mut self) -> Result<String, PlanError> {
        self.chars.next();
        let mut out = String::new();
        loop {
            match self.chars.next() {
                None => return Err(self.error("unterminated string")),
                Some((_, '"')) => return Ok(out),
                Some((_, '\\')) => match self.chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    _ => return Err(self.error("invalid escape")),
                },
                Some((_, c)) => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<f64, PlanError> {
        let mut text = String::new();
        while let Some(c) = self
            .peek()
            .filter(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'))
        {
            text.push(c);
            self.chars.next();
        }
        text.parse::<f64>()
            .ok()
            .filter(|n| n.is_finite())
            .ok_or_else(|| self.error(format!("invalid number `{text}`")))
    }

    fn rest_is_blank(&mut self) -> bool {
        self.skip_ws();
        matches!(self.peek(), None | Some('#'))
    }
}

/// Parses plan text.
pub fn parse_plan(text: &str) -> Result<PlanGraph, PlanError> {
    let mut steps: Vec<PlanStep> = Vec::new();
    let mut known = BTreeSet::new();
    for (index, raw) in text.lines().enumerate() {
        let mut cur = Cursor { chars: raw.char_indices().peekable(), text: raw, line: index + 1 };
        if cur.rest_is_blank() {
            continue;
        }
        let id = cur.step_ref()?;
        if known.contains(&id) {
            return Err(PlanError::DuplicateStep { line: cur.line, step: id });
        }
        if let Some(prev) = steps.last() {
            if id <= prev.id {
                return Err(PlanError::NonIncreasing { line: cur.line, step: id, previous: prev.id });
            }
        }
        let op = cur.identifier()?;
        cur.expect('(')?;
        let mut args = Vec::new();
        cur.skip_ws();
        if cur.peek() == Some(')') {
            cur.chars.next();
        } else {
            loop {
                cur.skip_ws();
                let column = cur.column();
                let arg = match cur.peek() {
                    Some('|') => {
                        let target = cur.step_ref()?;
                        if target >= id {
                            return Err(PlanError::ForwardReference { line: cur.line, column, step: id, target });
                        }
                        if !known.contains(&target) {
                            return Err(PlanError::DanglingReference { line: cur.line, column, step: id, target });
                        }
                        PlanArg::StepRef(target)
                    }
                    Some('"') => PlanArg::StringLit(cur.string()?),
                    Some(c) if c.is_ascii_digit() || c == '-' || c == '.' => PlanArg::NumberLit(cur.number()?),
                    Some(c) => return Err(cur.error(format!("unexpected `{c}` in argument list"))),
                    None => return Err(cur.error("unterminated argument list")),
                };
                args.push(arg);
                cur.skip_ws();
                match cur.peek() {
                    Some(',') => {
                        cur.chars.next();
                    }
                    Some(')') => {
                        cur.chars.next();
                        break;
                    }
                    Some(c) => return Err(cur.error(format!("expected `,` or `)`, found `{c}`"))),
                    None => return Err(cur.error("unterminated argument list")),
                }
            }
        }
        if !cur.rest_is_blank() {
            return Err(cur.error("unexpected text after step"));
        }
        known.insert(id);
        steps.push(PlanStep { id, op, args });
    }
    PlanGraph::new(steps)
}

/// Output type and provenance of one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedValue {
    pub types: TypeSet,
    pub origin: StepId,
    pub entity_context: Option<String>,
    /// `(entity, attribute)` for values read straight from the labeling, or
    /// `("|r|", label)` for a column collected by the earlier return `r`.
    pub attribute_ref: Option<(String, String)>,
}

pub type TypeMap = BTreeMap<StepId, TypedValue>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckErrorKind {
    UnknownOperation(TaxonomyError),
    Arity { slot: usize, expected: String, found: usize },
    TypeMismatch { slot: usize, argument: usize, slot_types: TypeSet, value_types: TypeSet },
    ExtraArguments { expected_at_most: usize, found: usize },
    UnknownEntity { name: String, suggestion: Option<String> },
    UnknownAttribute { entity: String, name: String, suggestion: Option<String> },
    NotAnEntity(StepId),
    BadSortDirection(String),
    BadLimit(String),
}

/// A type-check failure at one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckError {
    pub step: StepId,
    pub kind: CheckErrorKind,
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step |{}|: ", self.step)?;
        let hint = |s: &Option<String>| s.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default();
        match &self.kind {
            CheckErrorKind::UnknownOperation(e) => write!(f, "{e}"),
            CheckErrorKind::Arity { slot, expected, found } => {
                write!(f, "argument slot {slot} expects {expected} argument(s), found {found}")
            }
            CheckErrorKind::TypeMismatch { slot, argument, slot_types, value_types } => write!(
                f,
                "type mismatch for argument {argument}: slot {slot} accepts {slot_types}, value has {value_types}"
            ),
            CheckErrorKind::ExtraArguments { expected_at_most, found } => {
                write!(f, "too many arguments: at most {expected_at_most} can be matched, found {found}")
            }
            CheckErrorKind::UnknownEntity { name, suggestion } => {
                write!(f, "unknown entity `{name}`{}", hint(suggestion))
            }
            CheckErrorKind::UnknownAttribute { entity, name, suggestion } => {
                write!(f, "entity `{entity}` has no attribute `{name}`{}", hint(suggestion))
            }
            CheckErrorKind::NotAnEntity(id) => {
                write!(f, "step |{id}| is neither retrieve_entity nor return")
            }
            CheckErrorKind::BadSortDirection(d) => write!(f, "sort direction must be \"asc\" or \"desc\", got {d}"),
            CheckErrorKind::BadLimit(v) => write!(f, "limit must be a positive whole number, got {v}"),
        }
    }
}

/// Types admitted by a slot. A slot declared `Attribute` admits any value
/// with a base type or a boolean (`Filter`) value.
pub fn admitted_types(slot_types: TypeSet) -> TypeSet {
    if slot_types.contains(AttributeType::Attribute) {
        slot_types
            .union(TypeSet::of(&AttributeType::BASE))
            .union(TypeSet::single(AttributeType::Filter))
    } else {
        slot_types
    }
}

fn literal_types(arg: &PlanArg) -> TypeSet {
    match arg {
        PlanArg::StringLit(_) => TypeSet::single(AttributeType::String),
        PlanArg::NumberLit(_) => TypeSet::single(AttributeType::Arithmetic),
        PlanArg::StepRef(_) => TypeSet::EMPTY,
    }
}

/// Assignment of argument positions to signature slots.
pub type SlotBinding = Vec<Vec<usize>>;

/// Greedy argument-to-slot matching in declaration order. Returns, for each
/// slot, the indices of the arguments it consumed.
pub fn bind_arguments(
    slots: &[crate::taxonomy::Slot],
    arg_types: &[TypeSet],
) -> Result<SlotBinding, CheckErrorKind> {
    let mut binding = Vec::with_capacity(slots.len());
    let mut next = 0;
    for (si, slot) in slots.iter().enumerate() {
        let admitted = admitted_types(slot.types);
        let mut taken = Vec::new();
        for _ in 0..slot.arity.min() {
            let Some(types) = arg_types.get(next) else {
                return Err(CheckErrorKind::Arity {
                    slot: si,
                    expected: slot.arity.to_string(),
                    found: taken.len(),
                });
            };
            if !crate::taxonomy::types_accept(admitted, *types) {
                return Err(CheckErrorKind::TypeMismatch {
                    slot: si,
                    argument: next,
                    slot_types: slot.types,
                    value_types: *types,
                });
            }
            taken.push(next);
            next += 1;
        }
        while slot.arity.max().is_none_or(|m| taken.len() < m) {
            match arg_types.get(next) {
                Some(types) if crate::taxonomy::types_accept(admitted, *types) => {
                    taken.push(next);
                    next += 1;
                }
                _ => break,
            }
        }
        binding.push(taken);
    }
    if next < arg_types.len() {
        // Report the first unmatched argument against the slot it most
        // plausibly targeted when the signature is not variadic at the end.
        return Err(CheckErrorKind::ExtraArguments { expected_at_most: next, found: arg_types.len() });
    }
    Ok(binding)
}

/// Label of a step's value when collected: attribute name for retrieved
/// attributes, otherwise the operation name joined with its inputs' labels.
pub fn value_label(plan: &PlanGraph, id: StepId) -> String {
    let Some(step) = plan.step(id) else { return format!("step{id}") };
    match step.op.as_str() {
        "retrieve_attribute" => step.args.get(1).and_then(PlanArg::as_str).unwrap_or("").to_owned(),
        "retrieve_entity" => step.args.first().and_then(PlanArg::as_str).unwrap_or("").to_lowercase(),
        op => {
            let mut label = op.to_owned();
            for r in step.refs() {
                if plan.step(r).is_some_and(|s| s.op == "groupby") {
                    continue;
                }
                label.push('_');
                label.push_str(&value_label(plan, r));
            }
            label
        }
    }
}

/// Output column labels of a collect step, made unique with `_2`, `_3`, ...
pub fn collect_labels(plan: &PlanGraph, collect: StepId) -> Vec<String> {
    let Some(step) = plan.step(collect) else { return Vec::new() };
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    step.refs()
        .map(|r| {
            let base = value_label(plan, r);
            let n = used.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                base
            } else {
                format!("{base}_{n}")
            }
        })
        .collect()
}

/// Type-checks every step. Either every step gets a [`TypedValue`] or at
/// least one error is reported.
pub fn check_plan(
    plan: &PlanGraph,
    registry: &OperationRegistry,
    labeling: &DomainLabeling,
) -> Result<TypeMap, Vec<CheckError>> {
    let mut types = TypeMap::new();
    let mut errors = Vec::new();
    for step in plan.steps() {
        match check_step(plan, step, registry, labeling, &types) {
            Ok(Some(value)) => {
                types.insert(step.id, value);
            }
            Ok(None) => {}
            Err(kind) => errors.push(CheckError { step: step.id, kind }),
        }
    }
    if errors.is_empty() {
        Ok(types)
    } else {
        Err(errors)
    }
}

/// `Ok(None)` means an input was left untyped by an earlier error.
fn check_step(
    plan: &PlanGraph,
    step: &PlanStep,
    registry: &OperationRegistry,
    labeling: &DomainLabeling,
    types: &TypeMap,
) -> Result<Option<TypedValue>, CheckErrorKind> {
    let sig = registry.signature_of(&step.op).map_err(CheckErrorKind::UnknownOperation)?;
    let mut arg_types = Vec::with_capacity(step.args.len());
    for arg in &step.args {
        match arg {
            PlanArg::StepRef(r) => match types.get(r) {
                Some(v) => arg_types.push(v.types),
                None => return Ok(None),
            },
            lit => arg_types.push(literal_types(lit)),
        }
    }
    bind_arguments(&sig.inputs, &arg_types)?;

    let first_context = || {
        step.refs()
            .find_map(|r| types.get(&r).and_then(|v| v.entity_context.clone()))
    };
    let mut value = TypedValue {
        types: sig.output_types(),
        origin: step.id,
        entity_context: None,
        attribute_ref: None,
    };
    match sig.name.as_str() {
        "retrieve_entity" => {
            let name = step.args[0].as_str().unwrap_or_default();
            if labeling.entity(name).is_none() {
                return Err(CheckErrorKind::UnknownEntity {
                    name: name.to_owned(),
                    suggestion: closest_match(name, labeling.entities().iter().map(|e| e.name.as_str()))
                        .map(ToOwned::to_owned),
                });
            }
            value.entity_context = Some(name.to_owned());
        }
        "retrieve_attribute" => {
            let target = step.args[0].step_ref().unwrap_or_default();
            let attr_name = step.args[1].as_str().unwrap_or_default();
            let source = plan.step(target).map(|s| s.op.as_str());
            match source {
                Some("retrieve_entity") => {
                    let entity_name = types[&target].entity_context.clone().unwrap_or_default();
                    let entity = labeling.entity(&entity_name).expect("checked at retrieve_entity");
                    let attr = entity.attribute(attr_name).ok_or_else(|| CheckErrorKind::UnknownAttribute {
                        entity: entity_name.clone(),
                        name: attr_name.to_owned(),
                        suggestion: closest_match(attr_name, entity.attributes.iter().map(|a| a.name.as_str()))
                            .map(ToOwned::to_owned),
                    })?;
                    value.types = attr.attribute_types;
                    value.entity_context = Some(entity_name.clone());
                    value.attribute_ref = Some((entity_name, attr.name.clone()));
                }
                Some("return") => {
                    let pseudo = format!("|{target}|");
                    let collect = plan.step(target).and_then(|s| s.args.first()).and_then(PlanArg::step_ref);
                    let labels = collect.map(|c| collect_labels(plan, c)).unwrap_or_default();
                    let position = labels.iter().position(|l| l == attr_name).ok_or_else(|| {
                        CheckErrorKind::UnknownAttribute {
                            entity: pseudo.clone(),
                            name: attr_name.to_owned(),
                            suggestion: closest_match(attr_name, labels.iter().map(String::as_str))
                                .map(ToOwned::to_owned),
                        }
                    })?;
                    let column_step = plan
                        .step(collect.expect("return has a collect"))
                        .and_then(|c| c.refs().nth(position))
                        .expect("label position maps to a collected step");
                    value.types = types[&column_step].types;
                    value.entity_context = Some(pseudo.clone());
                    value.attribute_ref = Some((pseudo, attr_name.to_owned()));
                }
                _ => return Err(CheckErrorKind::NotAnEntity(target)),
            }
        }
        "sort" => {
            let dir = step.args.iter().rev().find_map(PlanArg::as_str).unwrap_or_default();
            if dir != "asc" && dir != "desc" {
                return Err(CheckErrorKind::BadSortDirection(format!("\"{dir}\"")));
            }
            value.entity_context = first_context();
        }
        "limit" => match &step.args[0] {
            PlanArg::NumberLit(n) if *n >= 1.0 && libm::trunc(*n) == *n => {}
            other => return Err(CheckErrorKind::BadLimit(other.to_string())),
        },
        _ => {
            if sig.category != Category::DataOperation || sig.name == "groupby" {
                value.entity_context = first_context();
            }
        }
    }
    Ok(Some(value))
}

/// One return step together with the steps it reaches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subplan {
    pub return_id: StepId,
    /// Member steps in id order, including the return itself.
    pub steps: Vec<StepId>,
    /// Earlier return steps this subplan reads collected columns from.
    pub depends_on: Vec<StepId>,
}

/// Splits a plan into one subplan per return step, in return-id order.
pub fn split_subplans(plan: &PlanGraph) -> Result<Vec<Subplan>, PlanError> {
    let mut owner: BTreeMap<StepId, StepId> = BTreeMap::new();
    let mut out = Vec::new();
    for &rid in plan.returns() {
        let members = plan.reachable_from(rid);
        for &m in &members {
            if let Some(&first) = owner.get(&m) {
                return Err(PlanError::SharedStep { step: m, first, second: rid });
            }
        }
        for &m in &members {
            owner.insert(m, rid);
        }
        let depends_on: BTreeSet<StepId> = members
            .iter()
            .filter_map(|m| plan.step(*m))
            .flat_map(|s| s.refs())
            .filter(|r| *r != rid && plan.step(*r).is_some_and(|s| s.op == "return"))
            .collect();
        out.push(Subplan {
            return_id: rid,
            steps: members.into_iter().collect(),
            depends_on: depends_on.into_iter().collect(),
        });
    }
    Ok(out)
}

/// Return steps whose results are not consumed by a later subplan.
pub fn output_returns(plan: &PlanGraph) -> Vec<StepId> {
    let consumed: BTreeSet<StepId> = plan
        .steps()
        .iter()
        .flat_map(|s| s.refs())
        .filter(|r| plan.step(*r).is_some_and(|s| s.op == "return"))
        .collect();
    plan.returns().iter().copied().filter(|r| !consumed.contains(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_literals_and_comments() {
        let plan = parse_plan(
            "# header\n\n|1| retrieve_entity(\"A \\\"b\\\"\")  # trailing\n|2| limit(10)\n|3| limit(-2.5e1)\n",
        )
        .unwrap();
        assert_eq!(plan.steps().len(), 3);
        assert_eq!(plan.steps()[0].args[0], PlanArg::StringLit("A \"b\"".into()));
        assert_eq!(plan.steps()[1].args[0], PlanArg::NumberLit(10.0));
        assert_eq!(plan.steps()[2].args[0], PlanArg::NumberLit(-25.0));
        assert_eq!(plan.steps()[1].to_string(), "|2| limit(10)");
    }

    #[test]
    fn op_names_are_lowercased() {
        let plan = parse_plan("|1| Retrieve_Entity(\"X\")").unwrap();
        assert_eq!(plan.steps()[0].op, "retrieve_entity");
    }

    #[test]
    fn forward_reference_reports_position() {
        let err = parse_plan("|1| retrieve_entity(\"A\")\n|2| retrieve_attribute(|3|, \"year\")").unwrap_err();
        assert_eq!(err, PlanError::ForwardReference { line: 2, column: 24, step: 2, target: 3 });
        assert_eq!(err.position(), Some((2, 24)));
    }

    #[test]
    fn dangling_and_duplicate() {
        assert!(matches!(
            parse_plan("|2| limit(1)\n|3| collect(|1|)"),
            Err(PlanError::DanglingReference { target: 1, .. })
        ));
        assert!(matches!(parse_plan("|1| limit(1)\n|1| limit(1)"), Err(PlanError::DuplicateStep { .. })));
        assert!(matches!(parse_plan("|2| limit(1)\n|1| limit(1)"), Err(PlanError::NonIncreasing { .. })));
    }

    #[test]
    fn syntax_errors() {
        for bad in ["1 limit(1)", "|1| limit(1", "|1| limit(1) x", "|1| (1)", "|1| f(\"abc)", "|1| f(@)", "|0| f()"] {
            assert!(matches!(parse_plan(bad), Err(PlanError::Syntax { .. })), "{bad}");
        }
    }

    #[test]
    fn minimal_plan_warns_about_missing_return() {
        let plan = parse_plan("|1| retrieve_entity(\"CarbonEmission\")").unwrap();
        assert!(plan.returns().is_empty());
        assert_eq!(plan.warnings(), [PlanWarning::NoReturn]);
        let plan = parse_plan("|1| retrieve_entity(\"A\")\n|2| retrieve_entity(\"B\")\n|3| return(|1|)").unwrap();
        assert_eq!(plan.warnings(), [PlanWarning::DeadStep(2)]);
    }

    #[test]
    fn canonical_renumbering() {
        let plan = parse_plan("|3| retrieve_entity(\"A\")\n|7| collect(|3|)\n|9| return(|7|)").unwrap();
        assert_eq!(
            plan.canonical_text(),
            "|1| retrieve_entity(\"A\")\n|2| collect(|1|)\n|3| return(|2|)\n"
        );
    }

    #[test]
    fn greedy_binding_skips_absent_optional_slots() {
        use crate::taxonomy::{Arity, Slot};
        use AttributeType::*;
        let slots = [
            Slot::new(Arity::Exactly(1), &[AttributeCollection]),
            Slot::new(Arity::AtMost(1), &[Filter]),
            Slot::new(Arity::AtMost(1), &[Sort]),
        ];
        let b = bind_arguments(&slots, &[TypeSet::single(AttributeCollection), TypeSet::single(Sort)]).unwrap();
        assert_eq!(b, [alloc::vec![0], alloc::vec![], alloc::vec![1]]);
        let err = bind_arguments(&slots, &[TypeSet::single(AttributeCollection), TypeSet::single(Metric)]);
        assert!(matches!(err, Err(CheckErrorKind::ExtraArguments { .. })));
        let err = bind_arguments(&slots, &[]);
        assert!(matches!(err, Err(CheckErrorKind::Arity { slot: 0, .. })));
    }

    #[test]
    fn labels_are_unique_within_collect() {
        let plan = parse_plan(
            "|1| retrieve_entity(\"A\")\n|2| retrieve_attribute(|1|, \"x\")\n|3| groupby(|2|)\n|4| average(|2|, |3|)\n|5| collect(|2|, |4|, |2|)",
        )
        .unwrap();
        assert_eq!(collect_labels(&plan, 5), ["x", "average_x", "x_2"]);
    }
}
