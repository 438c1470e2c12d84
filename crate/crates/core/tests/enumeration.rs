mod support;

use infospace_core::labeling::parse_labeling;
use infospace_core::plan::PlanArg;
use infospace_core::spacegen::{generate_questions, Caps};
use infospace_core::taxonomy::OperationRegistry;
use support::enumeration::{instances, run, template, TOY};

#[test]
fn plain_template_matches_cross_product() {
    let (emitted, expected) = run(false);
    // revenue: 3 ops, rating: average and median, amount: 3 ops
    assert_eq!(expected, 8);
    assert_eq!(emitted, expected);
}

#[test]
fn filtered_template_matches_cross_product() {
    let (emitted, expected) = run(true);
    // every (entity, attribute, op) triple times: no filter, 2 cities,
    // 3 codes, 2 kinds
    assert_eq!(expected, 8 * 8);
    assert_eq!(emitted, expected);
}

#[test]
fn instance_values_become_literals() {
    let labeling = parse_labeling(TOY).unwrap();
    let (questions, _) = generate_questions(
        &labeling,
        &OperationRegistry::builtin(),
        &[template(true)],
        &mut instances(),
        Caps::default(),
    )
    .unwrap();
    let literal = PlanArg::StringLit("a1".into());
    assert!(questions.iter().any(|q| q.plan.steps().iter().any(|s| s.op == "exact" && s.args[1] == literal)));
}

#[test]
fn per_template_cap_is_respected() {
    let labeling = parse_labeling(TOY).unwrap();
    let caps = Caps { per_template: 5, ..Caps::default() };
    let (questions, reports) =
        generate_questions(&labeling, &OperationRegistry::builtin(), &[template(true)], &mut instances(), caps).unwrap();
    assert_eq!(questions.len(), 5);
    assert!(reports[0].capped);
}
