//! A two-entity toy labeling with a hand-built template, and an
//! independent count of the plans it should yield.

use std::collections::BTreeMap;

use infospace_core::labeling::{parse_labeling, AttributeDef, DomainLabeling};
use infospace_core::plan::check_plan;
use infospace_core::post::Scalar;
use infospace_core::spacegen::{
    generate_questions, Caps, PlanTemplate, SkeletonArg, SkeletonOp, SkeletonStep, SlotKind, SlotSpec,
    StaticInstances,
};
use infospace_core::taxonomy::{types_accept, AttributeType::*, Category, OperationRegistry, TypeSet};

pub const TOY: &str = r#"{
  "id": "toy", "name": "Toy shops",
  "dataSource": {
    "tables": [
      {"name": "shop", "primaryKey": "id", "columns": [
        {"name": "id", "type": "integer"}, {"name": "city", "type": "text"},
        {"name": "revenue", "type": "float"}, {"name": "rating", "type": "float"}, {"name": "code", "type": "text"}]},
      {"name": "sale", "primaryKey": "id", "columns": [
        {"name": "id", "type": "integer"}, {"name": "shop_id", "type": "integer"},
        {"name": "amount", "type": "float"}, {"name": "kind", "type": "text"}]}
    ],
    "joins": [{"name": "shop_sale", "from": "shop", "to": "sale", "on": [["id", "shop_id"]]}]
  },
  "dataAbstraction": {
    "entities": [
      {"name": "Shop", "primaryTable": "shop", "attributes": [
        {"name": "city", "type": "text", "isa": ["Categorical"], "source": {"table": "shop", "column": "city"}},
        {"name": "revenue", "type": "float", "isa": ["Metric", "Arithmetic"], "source": {"table": "shop", "column": "revenue"}},
        {"name": "rating", "type": "float", "isa": ["Metric"], "source": {"table": "shop", "column": "rating"}},
        {"name": "code", "type": "text", "isa": ["Identifier"], "source": {"table": "shop", "column": "code"}}]},
      {"name": "Sale", "primaryTable": "sale", "attributes": [
        {"name": "amount", "type": "float", "isa": ["Arithmetic", "Metric"], "source": {"table": "sale", "column": "amount"}},
        {"name": "kind", "type": "text", "isa": ["Categorical"], "source": {"table": "sale", "column": "kind"}}]}
    ],
    "relationships": [{"name": "ShopToSale", "from": "Shop", "to": "Sale", "relation": "o2m", "joinChain": ["shop_sale"]}]
  }
}"#;

const OPS: [&str; 3] = ["average", "sum", "median"];

fn numeric() -> TypeSet {
    TypeSet::of(&[Metric, Arithmetic])
}

fn keyish() -> TypeSet {
    TypeSet::of(&[Identifier, Categorical])
}

pub fn instances() -> StaticInstances {
    let text = |v: &[&str]| v.iter().map(|s| Scalar::Text((*s).into())).collect::<Vec<_>>();
    StaticInstances(BTreeMap::from([
        (("Shop".into(), "city".into()), text(&["austin", "boston"])),
        (("Shop".into(), "code".into()), text(&["a1", "b2", "c3"])),
        (("Sale".into(), "kind".into()), text(&["online", "store"])),
    ]))
}

fn step(id: u32, op: SkeletonOp, args: Vec<SkeletonArg>, requires: Option<usize>) -> SkeletonStep {
    SkeletonStep { id, op, args, requires }
}

/// entity, numeric attribute, aggregate; optionally an exact filter with
/// an instance value.
pub fn template(with_filter: bool) -> PlanTemplate {
    use SkeletonArg::{EntityOf, Slot, Step};
    use SkeletonOp::Fixed;
    let mut slots = vec![
        SlotSpec { name: "entity", kind: SlotKind::Entity },
        SlotSpec {
            name: "metric",
            kind: SlotKind::Attribute { entity: 0, types: numeric(), distinct_from: vec![], after: None },
        },
        SlotSpec {
            name: "operation",
            kind: SlotKind::Operation { category: Category::Aggregation, names: OPS.to_vec(), inputs: vec![1] },
        },
    ];
    let mut skeleton = vec![
        step(1, Fixed("retrieve_entity"), vec![Slot(0)], None),
        step(2, Fixed("retrieve_attribute"), vec![Step(1), Slot(1)], None),
        step(3, SkeletonOp::Slot(2), vec![Step(2)], None),
        step(4, Fixed("collect"), vec![Step(3)], None),
    ];
    if with_filter {
        slots.push(SlotSpec {
            name: "filter",
            kind: SlotKind::FilterAttribute { anchor: 0, types: keyish(), related: true, optional: true, distinct_from: vec![] },
        });
        slots.push(SlotSpec { name: "value", kind: SlotKind::Instance { attribute: 3, text: false, after: None } });
        skeleton.extend([
            step(5, Fixed("retrieve_entity"), vec![EntityOf(3)], Some(3)),
            step(6, Fixed("retrieve_attribute"), vec![Step(5), Slot(3)], Some(3)),
            step(7, Fixed("exact"), vec![Step(6), Slot(4)], Some(3)),
            step(8, Fixed("return"), vec![Step(4), Step(7)], None),
        ]);
    } else {
        skeleton.push(step(8, Fixed("return"), vec![Step(4)], None));
    }
    PlanTemplate { id: if with_filter { "filtered" } else { "plain" }, slots, skeleton }
}

/// Cross product of entities, attributes and operations, kept when the
/// operation's first input accepts the attribute.
pub fn brute_force(labeling: &DomainLabeling, registry: &OperationRegistry, with_filter: bool) -> usize {
    let instances = instances();
    let mut total = 0;
    for entity in labeling.entities() {
        let filter_choices: usize = if with_filter {
            let related: Vec<&str> = labeling
                .entities()
                .iter()
                .map(|e| e.name.as_str())
                .filter(|n| *n == entity.name || labeling.relationship_path(&entity.name, n).is_ok())
                .collect();
            1 + related
                .iter()
                .flat_map(|n| labeling.entity(n).unwrap().attributes.iter().map(move |a| (*n, a)))
                .filter(|(_, a): &(&str, &AttributeDef)| types_accept(keyish(), a.attribute_types))
                .map(|(n, a)| instances.0.get(&(n.to_owned(), a.name.clone())).map_or(0, Vec::len))
                .sum::<usize>()
        } else {
            1
        };
        for attr in &entity.attributes {
            if !types_accept(numeric(), attr.attribute_types) {
                continue;
            }
            for op in OPS {
                let sig = registry.get(op).unwrap();
                if types_accept(sig.inputs[0].types, attr.attribute_types) {
                    total += filter_choices;
                }
            }
        }
    }
    total
}

pub fn run(with_filter: bool) -> (usize, usize) {
    let labeling = parse_labeling(TOY).unwrap();
    let registry = OperationRegistry::builtin();
    let (questions, reports) =
        generate_questions(&labeling, &registry, &[template(with_filter)], &mut instances(), Caps::default()).unwrap();
    assert_eq!(reports[0].emitted, questions.len());
    for q in &questions {
        check_plan(&q.plan, &registry, &labeling).unwrap_or_else(|e| panic!("{}: {e:?}", q.plan));
    }
    (questions.len(), brute_force(&labeling, &registry, with_filter))
}
