use std::collections::BTreeSet;

use infospace_core::plan::{parse_plan, split_subplans, PlanArg, PlanGraph, PlanStep};
use infospace_core::taxonomy::{types_accept, AttributeType, TypeSet};
use proptest::prelude::*;

fn arg(earlier: Vec<u32>) -> impl Strategy<Value = PlanArg> {
    let string = any::<String>().prop_map(PlanArg::StringLit);
    let number = any::<f64>().prop_filter("finite", |n| n.is_finite()).prop_map(PlanArg::NumberLit);
    if earlier.is_empty() {
        prop_oneof![string, number].boxed()
    } else {
        prop_oneof![2 => proptest::sample::select(earlier).prop_map(PlanArg::StepRef), 1 => string, 1 => number].boxed()
    }
}

/// Well-formed plans: increasing ids, references only to earlier steps.
fn plan() -> impl Strategy<Value = PlanGraph> {
    (proptest::collection::vec((1u32..5, "[a-z][a-z_]{0,12}", 0usize..4), 1..12)).prop_flat_map(|shape| {
        let mut id = 0;
        let mut ids = Vec::new();
        let steps: Vec<_> = shape
            .into_iter()
            .map(|(gap, op, nargs)| {
                id += gap;
                let earlier = ids.clone();
                ids.push(id);
                (Just(id), Just(op), proptest::collection::vec(arg(earlier), nargs))
            })
            .collect();
        steps.prop_map(|steps| {
            let steps = steps.into_iter().map(|(id, op, args)| PlanStep { id, op, args }).collect();
            PlanGraph::new(steps).expect("generated plan is well formed")
        })
    })
}

fn typeset() -> impl Strategy<Value = TypeSet> {
    proptest::sample::subsequence(AttributeType::ALL.to_vec(), 0..=AttributeType::ALL.len())
        .prop_map(|ts| ts.into_iter().collect())
}

/// Chains ending in a return, each optionally consuming the previous return.
fn multi_return_plan() -> impl Strategy<Value = PlanGraph> {
    proptest::collection::vec((1usize..4, any::<bool>()), 1..5).prop_map(|chains| {
        let mut steps = Vec::new();
        let mut id = 0;
        let mut last_return = None;
        for (len, consume) in chains {
            id += 1;
            steps.push(PlanStep { id, op: "retrieve_entity".into(), args: vec![PlanArg::StringLit("E".into())] });
            for _ in 1..len {
                id += 1;
                steps.push(PlanStep { id, op: "step".into(), args: vec![PlanArg::StepRef(id - 1)] });
            }
            id += 1;
            let mut args = vec![PlanArg::StepRef(id - 1)];
            if let (true, Some(r)) = (consume, last_return) {
                args.push(PlanArg::StepRef(r));
            }
            steps.push(PlanStep { id, op: "return".into(), args });
            last_return = Some(id);
        }
        PlanGraph::new(steps).unwrap()
    })
}

proptest! {
    #[test]
    fn text_round_trip(g in plan()) {
        let text = g.render_text();
        let parsed = parse_plan(&text).unwrap();
        prop_assert_eq!(&parsed, &g);
        prop_assert_eq!(parsed.render_text(), text);
    }

    #[test]
    fn canonical_form_is_idempotent_and_dense(g in plan()) {
        let c = g.canonicalize();
        prop_assert_eq!(c.canonicalize(), c.clone());
        let ids: Vec<u32> = c.steps().iter().map(|s| s.id).collect();
        prop_assert_eq!(ids, (1..=g.steps().len() as u32).collect::<Vec<_>>());
        prop_assert_eq!(parse_plan(&g.canonical_text()).unwrap(), c);
    }

    #[test]
    fn subplans_partition_reachable_steps(g in multi_return_plan()) {
        let subplans = split_subplans(&g).unwrap();
        prop_assert_eq!(subplans.len(), g.returns().len());
        let mut seen = BTreeSet::new();
        for sp in &subplans {
            prop_assert!(sp.steps.contains(&sp.return_id));
            for s in &sp.steps {
                prop_assert!(seen.insert(*s), "step {} in two subplans", s);
            }
        }
        let reachable: BTreeSet<u32> = g.returns().iter().flat_map(|r| g.reachable_from(*r)).collect();
        prop_assert_eq!(seen, reachable);
    }

    #[test]
    fn acceptance_is_symmetric_intersection(a in typeset(), b in typeset()) {
        prop_assert_eq!(types_accept(a, b), types_accept(b, a));
        prop_assert_eq!(types_accept(a, b), a.iter().any(|t| b.contains(t)));
        prop_assert!(!types_accept(a, TypeSet::EMPTY));
    }
}
