//! Enumerates the question space: every plan obtained by filling template
//! slots with entities, attributes, operations and instance values.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::labeling::DomainLabeling;
use crate::plan::{check_plan, admitted_types, PlanArg, PlanGraph, PlanStep, StepId};
use crate::post::Scalar;
use crate::questions::{render_question, QuestionRecord};
use crate::taxonomy::{types_accept, AttributeType, Category, OperationRegistry, TypeSet};

/// Distinct values of an attribute, ascending, at most `cap` of them.
pub trait InstanceSource {
    fn instances(&mut self, entity: &str, attribute: &str, cap: usize) -> Result<Vec<Scalar>, String>;
}

/// Instance values held in memory, keyed by `(entity, attribute)`.
#[derive(Debug, Clone, Default)]
pub struct StaticInstances(pub BTreeMap<(String, String), Vec<Scalar>>);

impl InstanceSource for StaticInstances {
    fn instances(&mut self, entity: &str, attribute: &str, cap: usize) -> Result<Vec<Scalar>, String> {
        let mut values = self.0.get(&(entity.to_owned(), attribute.to_owned())).cloned().unwrap_or_default();
        values.truncate(cap);
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotKind {
    Entity,
    /// Attribute of the entity bound at `entity` whose types meet `types`.
    Attribute { entity: usize, types: TypeSet, distinct_from: Vec<usize>, after: Option<usize> },
    /// Operation of `category` (restricted to `names` when non-empty) whose
    /// first input slot admits the values of the attribute slots in `inputs`.
    Operation { category: Category, names: Vec<&'static str>, inputs: Vec<usize> },
    /// Attribute used as a filter: on the anchor entity, or on any entity
    /// related to it when `related` is set. Optional slots also yield "none".
    FilterAttribute { anchor: usize, types: TypeSet, related: bool, optional: bool, distinct_from: Vec<usize> },
    /// Distinct value of the attribute bound at `attribute`. `text` turns
    /// values into string literals; `after` keeps only values greater than
    /// those bound at another instance slot.
    Instance { attribute: usize, text: bool, after: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpec {
    pub name: &'static str,
    pub kind: SlotKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkeletonArg {
    Literal(PlanArg),
    Step(StepId),
    /// Entity, attribute, operation name or instance literal bound at a slot.
    Slot(usize),
    /// Entity owning the attribute bound at a filter-attribute slot.
    EntityOf(usize),
    /// Collected-column label for an operation slot applied to an attribute
    /// slot.
    Label { operation: usize, attribute: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkeletonOp {
    Fixed(&'static str),
    Slot(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonStep {
    pub id: StepId,
    pub op: SkeletonOp,
    pub args: Vec<SkeletonArg>,
    /// Dropped, together with references to it, when this slot is unbound.
    pub requires: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanTemplate {
    pub id: &'static str,
    pub slots: Vec<SlotSpec>,
    pub skeleton: Vec<SkeletonStep>,
}

#[derive(Debug, Clone, PartialEq)]
enum Binding {
    Entity(String),
    Attribute { entity: String, name: String },
    Operation(String),
    Instance(PlanArg),
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub per_template: usize,
    pub per_instance_slot: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { per_template: 50_000, per_instance_slot: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedQuestion {
    pub question_id: String,
    pub template_id: String,
    pub question_text: String,
    pub plan: PlanGraph,
}

impl GeneratedQuestion {
    pub fn to_record(&self) -> QuestionRecord {
        QuestionRecord {
            question_id: self.question_id.clone(),
            template_id: self.template_id.clone(),
            question_text: self.question_text.clone(),
            plan_text: self.plan.render_text(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateReport {
    pub template_id: String,
    pub emitted: usize,
    /// Fillings rejected by the type checker or question renderer.
    pub skipped: usize,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("instance lookup for {entity}.{attribute} failed: {message}")]
    Instances { entity: String, attribute: String, message: String },
}

/// Stable id: first 16 hex digits of SHA-256 over the domain id and the
/// canonical plan text.
pub fn question_id(domain_id: &str, canonical_plan: &str) -> String {
    let mut h = Sha256::new();
    h.update(domain_id.as_bytes());
    h.update(b"\n");
    h.update(canonical_plan.as_bytes());
    let digest = h.finalize();
    hex::encode(&digest[..8])
}

fn scalar_literal(value: &Scalar, text: bool) -> Option<PlanArg> {
    if text {
        return match value {
            Scalar::Null => None,
            v => Some(PlanArg::StringLit(v.to_text())),
        };
    }
    match value {
        Scalar::Integer(i) => Some(PlanArg::NumberLit(*i as f64)),
        Scalar::Decimal(d) => Some(PlanArg::NumberLit(*d)),
        Scalar::Boolean(b) => Some(PlanArg::NumberLit(f64::from(u8::from(*b)))),
        Scalar::Text(s) | Scalar::Datetime(s) => Some(PlanArg::StringLit(s.clone())),
        Scalar::Null => None,
    }
}

fn literal_order(a: &PlanArg, b: &PlanArg) -> core::cmp::Ordering {
    match (a, b) {
        (PlanArg::NumberLit(x), PlanArg::NumberLit(y)) => x.total_cmp(y),
        (PlanArg::StringLit(x), PlanArg::StringLit(y)) => x.cmp(y),
        (PlanArg::NumberLit(_), _) => core::cmp::Ordering::Less,
        _ => core::cmp::Ordering::Greater,
    }
}

struct Generator<'a, S: InstanceSource> {
    labeling: &'a DomainLabeling,
    registry: &'a OperationRegistry,
    source: &'a mut S,
    caps: Caps,
    instance_cache: BTreeMap<(String, String, bool), Vec<PlanArg>>,
}

impl<'a, S: InstanceSource> Generator<'a, S> {
    fn attribute_types(&self, entity: &str, name: &str) -> TypeSet {
        self.labeling
            .entity(entity)
            .and_then(|e| e.attribute(name))
            .map_or(TypeSet::EMPTY, |a| a.attribute_types)
    }

    fn domain(&mut self, template: &PlanTemplate, slot: usize, bound: &[Binding]) -> Result<Vec<Binding>, GenerateError> {
        let entity_of = |i: usize| match &bound[i] {
            Binding::Entity(e) => Some(e.clone()),
            _ => None,
        };
        let attr_of = |i: usize| match &bound[i] {
            Binding::Attribute { entity, name } => Some((entity.clone(), name.clone())),
            _ => None,
        };
        Ok(match &template.slots[slot].kind {
            SlotKind::Entity => {
                let mut names: Vec<&str> = self.labeling.entities().iter().map(|e| e.name.as_str()).collect();
                names.sort_unstable();
                names.into_iter().map(|n| Binding::Entity(n.to_owned())).collect()
            }
            SlotKind::Attribute { entity, types, distinct_from, after } => {
                let Some(ename) = entity_of(*entity) else { return Ok(Vec::new()) };
                let e = self.labeling.entity(&ename).expect("bound entity exists");
                let taken: Vec<(String, String)> = distinct_from.iter().filter_map(|i| attr_of(*i)).collect();
                let floor = after.and_then(attr_of).map(|(_, n)| n);
                let mut names: Vec<&str> = e
                    .attributes
                    .iter()
                    .filter(|a| types_accept(*types, a.attribute_types))
                    .map(|a| a.name.as_str())
                    .filter(|n| !taken.iter().any(|(te, tn)| *te == ename && tn == n))
                    .filter(|n| floor.as_deref().is_none_or(|f| *n > f))
                    .collect();
                names.sort_unstable();
                names
                    .into_iter()
                    .map(|n| Binding::Attribute { entity: ename.clone(), name: n.to_owned() })
                    .collect()
            }
            SlotKind::Operation { category, names, inputs } => {
                let input_types: Vec<TypeSet> = inputs
                    .iter()
                    .filter_map(|i| attr_of(*i))
                    .map(|(e, n)| self.attribute_types(&e, &n))
                    .collect();
                self.registry
                    .iter()
                    .filter(|sig| sig.category == *category)
                    .filter(|sig| names.is_empty() || names.contains(&sig.name.as_str()))
                    .filter(|sig| {
                        sig.inputs.first().is_some_and(|first| {
                            let admitted = admitted_types(first.types);
                            let count_ok = first.arity.min() <= input_types.len()
                                && first.arity.max().is_none_or(|m| input_types.len() <= m);
                            count_ok && input_types.iter().all(|t| types_accept(admitted, *t))
                        })
                    })
                    .map(|sig| Binding::Operation(sig.name.clone()))
                    .collect()
            }
            SlotKind::FilterAttribute { anchor, types, related, optional, distinct_from } => {
                let mut out = Vec::new();
                if *optional {
                    out.push(Binding::Absent);
                }
                let Some(anchor_name) = entity_of(*anchor) else { return Ok(out) };
                let taken: Vec<(String, String)> = distinct_from.iter().filter_map(|i| attr_of(*i)).collect();
                let mut candidates: Vec<(String, String)> = Vec::new();
                for e in self.labeling.entities() {
                    let reachable = e.name == anchor_name
                        || (*related && self.labeling.relationship_path(&anchor_name, &e.name).is_ok());
                    if !reachable {
                        continue;
                    }
                    for a in &e.attributes {
                        let key = (e.name.clone(), a.name.clone());
                        if types_accept(*types, a.attribute_types) && !taken.contains(&key) {
                            candidates.push(key);
                        }
                    }
                }
                candidates.sort_by(|a, b| (a.0 != anchor_name, &a.0, &a.1).cmp(&(b.0 != anchor_name, &b.0, &b.1)));
                out.extend(candidates.into_iter().map(|(entity, name)| Binding::Attribute { entity, name }));
                out
            }
            SlotKind::Instance { attribute, text, after } => {
                let Some((entity, name)) = attr_of(*attribute) else { return Ok(alloc::vec![Binding::Absent]) };
                let key = (entity.clone(), name.clone(), *text);
                if !self.instance_cache.contains_key(&key) {
                    let values = self
                        .source
                        .instances(&entity, &name, self.caps.per_instance_slot)
                        .map_err(|message| GenerateError::Instances {
                            entity: entity.clone(),
                            attribute: name.clone(),
                            message,
                        })?;
                    let mut literals: Vec<PlanArg> = values.iter().filter_map(|v| scalar_literal(v, *text)).collect();
                    literals.truncate(self.caps.per_instance_slot);
                    self.instance_cache.insert(key.clone(), literals);
                }
                let floor = after.and_then(|i| match &bound[i] {
                    Binding::Instance(v) => Some(v.clone()),
                    _ => None,
                });
                self.instance_cache[&key]
                    .iter()
                    .filter(|v| floor.as_ref().is_none_or(|f| literal_order(v, f).is_gt()))
                    .map(|v| Binding::Instance(v.clone()))
                    .collect()
            }
        })
    }

    fn run(
        &mut self,
        template: &PlanTemplate,
        emit: &mut dyn FnMut(Vec<Binding>) -> bool,
    ) -> Result<bool, GenerateError> {
        let mut bound: Vec<Binding> = Vec::with_capacity(template.slots.len());
        self.fill(template, &mut bound, emit)
    }

    /// Depth-first over slot domains; returns false once `emit` asks to stop.
    fn fill(
        &mut self,
        template: &PlanTemplate,
        bound: &mut Vec<Binding>,
        emit: &mut dyn FnMut(Vec<Binding>) -> bool,
    ) -> Result<bool, GenerateError> {
        let slot = bound.len();
        if slot == template.slots.len() {
            return Ok(emit(bound.clone()));
        }
        for b in self.domain(template, slot, bound)? {
            bound.push(b);
            let go_on = self.fill(template, bound, emit)?;
            bound.pop();
            if !go_on {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Builds the plan for one complete slot binding.
fn instantiate(template: &PlanTemplate, bound: &[Binding], plan_labels: &dyn Fn(&str, &str) -> String) -> Option<PlanGraph> {
    let absent = |slot: usize| matches!(bound[slot], Binding::Absent);
    let dropped: BTreeSet<StepId> = template
        .skeleton
        .iter()
        .filter(|s| s.requires.is_some_and(absent))
        .map(|s| s.id)
        .collect();
    let mut steps = Vec::new();
    for s in template.skeleton.iter().filter(|s| !dropped.contains(&s.id)) {
        let op = match &s.op {
            SkeletonOp::Fixed(name) => (*name).to_owned(),
            SkeletonOp::Slot(i) => match &bound[*i] {
                Binding::Operation(name) => name.clone(),
                _ => return None,
            },
        };
        let mut args = Vec::new();
        for a in &s.args {
            let arg = match a {
                SkeletonArg::Literal(l) => l.clone(),
                SkeletonArg::Step(r) if dropped.contains(r) => continue,
                SkeletonArg::Step(r) => PlanArg::StepRef(*r),
                SkeletonArg::Slot(i) => match &bound[*i] {
                    Binding::Entity(e) => PlanArg::StringLit(e.clone()),
                    Binding::Attribute { name, .. } => PlanArg::StringLit(name.clone()),
                    Binding::Operation(o) => PlanArg::StringLit(o.clone()),
                    Binding::Instance(v) => v.clone(),
                    Binding::Absent => return None,
                },
                SkeletonArg::EntityOf(i) => match &bound[*i] {
                    Binding::Attribute { entity, .. } => PlanArg::StringLit(entity.clone()),
                    _ => return None,
                },
                SkeletonArg::Label { operation, attribute } => match (&bound[*operation], &bound[*attribute]) {
                    (Binding::Operation(o), Binding::Attribute { name, .. }) => PlanArg::StringLit(plan_labels(o, name)),
                    _ => return None,
                },
            };
            args.push(arg);
        }
        steps.push(PlanStep { id: s.id, op, args });
    }
    let plan = PlanGraph::new(steps).ok()?;
    Some(merge_duplicate_retrievals(&plan).canonicalize())
}

/// Merges identical `retrieve_entity`/`retrieve_attribute` steps that feed
/// the same set of return steps.
pub fn merge_duplicate_retrievals(plan: &PlanGraph) -> PlanGraph {
    let mut reaching: BTreeMap<StepId, BTreeSet<StepId>> = BTreeMap::new();
    for &r in plan.returns() {
        for s in plan.reachable_from(r) {
            reaching.entry(s).or_default().insert(r);
        }
    }
    let mut replace: BTreeMap<StepId, StepId> = BTreeMap::new();
    let mut seen: Vec<(String, Vec<PlanArg>, BTreeSet<StepId>, StepId)> = Vec::new();
    let mut steps = Vec::new();
    for s in plan.steps() {
        let args: Vec<PlanArg> = s
            .args
            .iter()
            .map(|a| match a {
                PlanArg::StepRef(r) => PlanArg::StepRef(*replace.get(r).unwrap_or(r)),
                other => other.clone(),
            })
            .collect();
        if s.op == "retrieve_entity" || s.op == "retrieve_attribute" {
            let feeds = reaching.get(&s.id).cloned().unwrap_or_default();
            if let Some((.., first)) = seen.iter().find(|(op, a, f, _)| *op == s.op && *a == args && *f == feeds) {
                replace.insert(s.id, *first);
                continue;
            }
            seen.push((s.op.clone(), args.clone(), feeds, s.id));
        }
        steps.push(PlanStep { id: s.id, op: s.op.clone(), args });
    }
    PlanGraph::new(steps).expect("merging keeps references backward")
}

/// Emits every well-typed plan of every template, in template order.
pub fn enumerate_plans<S: InstanceSource>(
    labeling: &DomainLabeling,
    registry: &OperationRegistry,
    templates: &[PlanTemplate],
    source: &mut S,
    caps: Caps,
    sink: &mut dyn FnMut(GeneratedQuestion),
) -> Result<Vec<TemplateReport>, GenerateError> {
    let mut generator = Generator { labeling, registry, source, caps, instance_cache: BTreeMap::new() };
    let mut reports = Vec::new();
    for template in templates {
        let mut report = TemplateReport { template_id: template.id.to_owned(), ..TemplateReport::default() };
        let mut seen_ids = BTreeSet::new();
        let label = |op: &str, attr: &str| format!("{op}_{attr}");
        let mut emit = |bound: Vec<Binding>| -> bool {
            if report.emitted >= caps.per_template {
                report.capped = true;
                return false;
            }
            let Some(plan) = instantiate(template, &bound, &label) else {
                report.skipped += 1;
                return true;
            };
            let Ok(types) = check_plan(&plan, registry, labeling) else {
                report.skipped += 1;
                return true;
            };
            let Ok(text) = render_question(&plan, &types, labeling, registry) else {
                report.skipped += 1;
                return true;
            };
            let id = question_id(&labeling.id, &plan.render_text());
            if !seen_ids.insert(id.clone()) {
                return true;
            }
            report.emitted += 1;
            sink(GeneratedQuestion {
                question_id: id,
                template_id: template.id.to_owned(),
                question_text: text,
                plan,
            });
            true
        };
        generator.run(template, &mut emit)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Collects the output of [`enumerate_plans`] into a vector.
pub fn generate_questions<S: InstanceSource>(
    labeling: &DomainLabeling,
    registry: &OperationRegistry,
    templates: &[PlanTemplate],
    source: &mut S,
    caps: Caps,
) -> Result<(Vec<GeneratedQuestion>, Vec<TemplateReport>), GenerateError> {
    let mut out = Vec::new();
    let reports = enumerate_plans(labeling, registry, templates, source, caps, &mut |q| out.push(q))?;
    Ok((out, reports))
}

const GROUPED_AGGREGATES: [&str; 5] = ["average", "max", "median", "min", "sum"];
const SINGLE_AGGREGATES: [&str; 10] = [
    "average",
    "count",
    "count_unique",
    "get_one",
    "max",
    "median",
    "min",
    "standard_deviation",
    "string_aggregation",
    "sum",
];

fn v<T, const N: usize>(items: [T; N]) -> Vec<T> {
    Vec::from(items)
}

fn step(id: StepId, op: &'static str, args: Vec<SkeletonArg>) -> SkeletonStep {
    SkeletonStep { id, op: SkeletonOp::Fixed(op), args, requires: None }
}

fn op_step(id: StepId, slot: usize, args: Vec<SkeletonArg>) -> SkeletonStep {
    SkeletonStep { id, op: SkeletonOp::Slot(slot), args, requires: None }
}

fn lit(s: &str) -> SkeletonArg {
    SkeletonArg::Literal(PlanArg::StringLit(s.to_owned()))
}

fn filter_steps(first: StepId, attribute_slot: usize, value_slot: usize, op: &'static str, optional: bool) -> Vec<SkeletonStep> {
    use SkeletonArg::*;
    let requires = optional.then_some(attribute_slot);
    alloc::vec![
        SkeletonStep { id: first, op: SkeletonOp::Fixed("retrieve_entity"), args: alloc::vec![EntityOf(attribute_slot)], requires },
        SkeletonStep {
            id: first + 1,
            op: SkeletonOp::Fixed("retrieve_attribute"),
            args: alloc::vec![Step(first), Slot(attribute_slot)],
            requires,
        },
        SkeletonStep { id: first + 2, op: SkeletonOp::Fixed(op), args: alloc::vec![Step(first + 1), Slot(value_slot)], requires },
    ]
}

fn slot(name: &'static str, kind: SlotKind) -> SlotSpec {
    SlotSpec { name, kind }
}

/// The seven built-in templates, `t1` to `t7`.
pub fn builtin_templates() -> Vec<PlanTemplate> {
    use AttributeType::*;
    use SkeletonArg::{Slot as S, Step as R};
    let metric = TypeSet::single(Metric);
    let keyish = TypeSet::of(&[Identifier, Categorical]);

    let entity = || slot("entity", SlotKind::Entity);
    let metric_attr = |after: Option<usize>| {
        slot("metric", SlotKind::Attribute { entity: 0, types: metric, distinct_from: Vec::new(), after })
    };
    let filter = |optional: bool, distinct_from: Vec<usize>| {
        slot("filter", SlotKind::FilterAttribute { anchor: 0, types: keyish, related: true, optional, distinct_from })
    };
    let value = |attribute: usize, text: bool, after: Option<usize>| {
        slot("value", SlotKind::Instance { attribute, text, after })
    };
    let aggregate = |names: &[&'static str], inputs: Vec<usize>| {
        slot("operation", SlotKind::Operation { category: Category::Aggregation, names: names.to_vec(), inputs })
    };

    let mut t1 = PlanTemplate {
        id: "t1",
        slots: v([entity(), metric_attr(None), aggregate(&SINGLE_AGGREGATES, v([1])), filter(false, Vec::new()), value(3, false, None)]),
        skeleton: v([
            step(1, "retrieve_entity", v([S(0)])),
            step(2, "retrieve_attribute", v([R(1), S(1)])),
        ]),
    };
    t1.skeleton.extend(filter_steps(3, 3, 4, "exact", false));
    t1.skeleton.extend([
        op_step(6, 2, v([R(2)])),
        step(7, "collect", v([R(6)])),
        step(8, "return", v([R(7), R(5)])),
    ]);

    let group_attr = |types: TypeSet| {
        slot("group", SlotKind::Attribute { entity: 0, types, distinct_from: v([1]), after: None })
    };
    let mut t2 = PlanTemplate {
        id: "t2",
        slots: v([
            entity(),
            metric_attr(None),
            group_attr(TypeSet::single(Categorical)),
            aggregate(&GROUPED_AGGREGATES, v([1])),
            filter(true, v([2])),
            value(4, false, None),
        ]),
        skeleton: v([
            step(1, "retrieve_entity", v([S(0)])),
            step(2, "retrieve_attribute", v([R(1), S(1)])),
            step(3, "retrieve_attribute", v([R(1), S(2)])),
            step(4, "groupby", v([R(3)])),
            op_step(5, 3, v([R(2), R(4)])),
        ]),
    };
    t2.skeleton.extend(filter_steps(6, 4, 5, "exact", true));
    t2.skeleton.extend([step(9, "collect", v([R(3), R(5)])), step(10, "return", v([R(9), R(8)]))]);

    let mut t3 = PlanTemplate {
        id: "t3",
        slots: v([
            entity(),
            slot(
                "identifier",
                SlotKind::FilterAttribute {
                    anchor: 0,
                    types: TypeSet::single(Identifier),
                    related: false,
                    optional: false,
                    distinct_from: Vec::new(),
                },
            ),
            slot(
                "attribute",
                SlotKind::Attribute { entity: 0, types: TypeSet::of(&AttributeType::BASE), distinct_from: v([1]), after: None },
            ),
            value(1, false, None),
        ]),
        skeleton: v([
            step(1, "retrieve_entity", v([S(0)])),
            step(2, "retrieve_attribute", v([R(1), S(2)])),
        ]),
    };
    t3.skeleton.extend(filter_steps(3, 1, 3, "exact", false));
    t3.skeleton.extend([step(6, "collect", v([R(2)])), step(7, "return", v([R(6), R(5)]))]);

    let counted = || {
        slot(
            "counted",
            SlotKind::Attribute { entity: 0, types: TypeSet::single(Identifier), distinct_from: Vec::new(), after: None },
        )
    };
    let counting = || aggregate(&["count", "count_unique"], v([1]));
    let mut t4 = PlanTemplate {
        id: "t4",
        slots: v([entity(), counted(), counting(), filter(false, v([1])), value(3, true, None)]),
        skeleton: v([
            step(1, "retrieve_entity", v([S(0)])),
            step(2, "retrieve_attribute", v([R(1), S(1)])),
        ]),
    };
    t4.skeleton.extend(filter_steps(3, 3, 4, "contains", false));
    t4.skeleton.extend([
        op_step(6, 2, v([R(2)])),
        step(7, "collect", v([R(6)])),
        step(8, "return", v([R(7), R(5)])),
    ]);

    let mut t5 = PlanTemplate {
        id: "t5",
        slots: v([entity(), counted(), counting(), filter(false, v([1])), value(3, true, None), value(3, true, Some(4))]),
        skeleton: Vec::new(),
    };
    for (base, value_slot) in [(0, 4), (8, 5)] {
        t5.skeleton.extend([
            step(base + 1, "retrieve_entity", v([S(0)])),
            step(base + 2, "retrieve_attribute", v([R(base + 1), S(1)])),
        ]);
        t5.skeleton.extend(filter_steps(base + 3, 3, value_slot, "contains", false));
        t5.skeleton.extend([
            op_step(base + 6, 2, v([R(base + 2)])),
            step(base + 7, "collect", v([R(base + 6)])),
            step(base + 8, "return", v([R(base + 7), R(base + 5)])),
        ]);
    }
    let label = || SkeletonArg::Label { operation: 2, attribute: 1 };
    t5.skeleton.extend([
        step(17, "retrieve_attribute", v([R(8), label()])),
        step(18, "retrieve_attribute", v([R(16), label()])),
        step(19, "greaterthan", v([R(17), R(18)])),
        step(20, "collect", v([R(19)])),
        step(21, "return", v([R(20)])),
    ]);

    let mut t6 = PlanTemplate {
        id: "t6",
        slots: v([entity(), metric_attr(None), metric_attr(Some(1)), filter(true, Vec::new()), value(3, false, None)]),
        skeleton: v([
            step(1, "retrieve_entity", v([S(0)])),
            step(2, "retrieve_attribute", v([R(1), S(1)])),
            step(3, "retrieve_attribute", v([R(1), S(2)])),
            step(4, "correlation", v([R(2), R(3)])),
        ]),
    };
    t6.skeleton.extend(filter_steps(5, 3, 4, "exact", true));
    t6.skeleton.extend([step(8, "collect", v([R(4)])), step(9, "return", v([R(8), R(7)]))]);

    let mut t7 = PlanTemplate {
        id: "t7",
        slots: v([
            entity(),
            metric_attr(None),
            group_attr(TypeSet::of(&[Categorical, Datetime])),
            aggregate(&GROUPED_AGGREGATES, v([1])),
            filter(true, v([2])),
            value(4, false, None),
        ]),
        skeleton: v([
            step(1, "retrieve_entity", v([S(0)])),
            step(2, "retrieve_attribute", v([R(1), S(1)])),
            step(3, "retrieve_attribute", v([R(1), S(2)])),
            step(4, "groupby", v([R(3)])),
            op_step(5, 3, v([R(2), R(4)])),
            step(6, "sort", v([R(3), lit("desc")])),
            step(7, "limit", v([SkeletonArg::Literal(PlanArg::NumberLit(5.0))])),
        ]),
    };
    t7.skeleton.extend(filter_steps(8, 4, 5, "exact", true));
    t7.skeleton.extend([step(11, "collect", v([R(3), R(5)])), step(12, "return", v([R(11), R(10), R(6), R(7)]))]);

    v([t1, t2, t3, t4, t5, t6, t7])
}
