use infospace_core::compiler::{compile_plan, resolve_joins, CompileError, Dialect, SqlParam};
use infospace_core::labeling::{parse_labeling, Cardinality, DomainLabeling};
use infospace_core::plan::{check_plan, parse_plan, split_subplans, CheckErrorKind, PlanError, PlanWarning};
use infospace_core::questions::render_question;
use infospace_core::taxonomy::{AttributeType::{Arithmetic, Grouping, Metric}, OperationRegistry, TypeSet};

const EMISSIONS: &str = include_str!("../../infospace/fixtures/emissions/labeling.json");
const LEGAL: &str = include_str!("../../infospace/fixtures/legal/labeling.json");
const INCIDENTS: &str = include_str!("../../infospace/fixtures/incidents/labeling.json");
const HEALTHCARE: &str = include_str!("../../infospace/fixtures/healthcare/labeling.json");
const ALL: [&str; 6] = [
    EMISSIONS,
    LEGAL,
    INCIDENTS,
    include_str!("../../infospace/fixtures/housing/labeling.json"),
    include_str!("../../infospace/fixtures/education/labeling.json"),
    HEALTHCARE,
];
const CARBON: &str = include_str!("../../infospace/fixtures/emissions/carbon.plan");

fn labeling(doc: &str) -> DomainLabeling {
    parse_labeling(doc).unwrap()
}

fn compile(doc: &str, plan: &str) -> Result<infospace_core::compiler::CompiledPlan, CompileError> {
    let l = labeling(doc);
    let plan = parse_plan(plan).unwrap();
    let types = check_plan(&plan, &OperationRegistry::builtin(), &l).unwrap();
    compile_plan(&plan, &types, &l, Dialect::SQLITE)
}

fn only_sql(doc: &str, plan: &str) -> (String, Vec<SqlParam>) {
    let c = compile(doc, plan).unwrap();
    assert_eq!(c.subplans.len(), 1);
    let q = &c.subplans[0].query;
    (q.sql.clone(), q.params.clone())
}

#[test]
fn fixture_labelings_round_trip() {
    for doc in ALL {
        let l = labeling(doc);
        assert_eq!(parse_labeling(&l.to_document()).unwrap(), l, "{}", l.id);
    }
}

#[test]
fn emissions_and_legal_shapes() {
    let e = labeling(EMISSIONS);
    assert_eq!((e.entities().len(), e.relationships().len()), (1, 0));
    let l = labeling(LEGAL);
    assert_eq!(l.entities().len(), 2);
    assert_eq!(l.relationships().len(), 1);
    assert_eq!(l.relationships()[0].cardinality, Cardinality::ManyToMany);
    assert_eq!(l.relationships()[0].join_chain.len(), 2);
}

#[test]
fn relationship_naming_unknown_join_is_located() {
    let mut doc: serde_json::Value = serde_json::from_str(LEGAL).unwrap();
    doc["dataAbstraction"]["relationships"][0]["joinChain"][0] = "judge_to_nowhere".into();
    let err = parse_labeling(&doc.to_string()).unwrap_err();
    let paths: Vec<&str> = err.issues().iter().map(|i| i.path.as_str()).collect();
    assert!(paths.contains(&"dataAbstraction.relationships[0].joinChain[0]"), "{paths:?}");
}

#[test]
fn carbon_plan_parses_checks_and_renders() {
    let l = labeling(EMISSIONS);
    let plan = parse_plan(CARBON).unwrap();
    assert_eq!(plan.returns(), [10]);
    assert!(plan.warnings().is_empty());
    let types = check_plan(&plan, &OperationRegistry::builtin(), &l).unwrap();
    let text = render_question(&plan, &types, &l, &OperationRegistry::builtin()).unwrap();
    assert_eq!(
        text,
        "What is the average amount of carbon emissions grouped by year in ascending order for country of United States of America?"
    );
}

#[test]
fn minimal_and_malformed_plans() {
    let plan = parse_plan("|1| retrieve_entity(\"CarbonEmission\")").unwrap();
    assert!(plan.returns().is_empty());
    assert_eq!(plan.warnings(), [PlanWarning::NoReturn]);
    let err = parse_plan("|1| retrieve_entity(\"CarbonEmission\")\n|2| retrieve_attribute(|3|, \"year\")").unwrap_err();
    assert!(matches!(err, PlanError::ForwardReference { line: 2, step: 2, target: 3, .. }), "{err:?}");
}

#[test]
fn sum_needs_arithmetic_but_average_takes_metric() {
    let l = labeling(HEALTHCARE);
    let registry = OperationRegistry::builtin();
    let plan = |op: &str| {
        format!(
            "|1| retrieve_entity(\"Stay\")\n|2| retrieve_attribute(|1|, \"heart_rate\")\n|3| {op}(|2|)\n|4| collect(|3|)\n|5| return(|4|)"
        )
    };
    let errors = check_plan(&parse_plan(&plan("sum")).unwrap(), &registry, &l).unwrap_err();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0].step, 3);
    assert!(matches!(errors[0].kind, CheckErrorKind::TypeMismatch { .. }), "{:?}", errors[0]);
    let types = check_plan(&parse_plan(&plan("average")).unwrap(), &registry, &l).unwrap();
    assert_eq!(types[&3].types, TypeSet::of(&[Arithmetic, Metric]));
}

#[test]
fn groupby_yields_grouping() {
    let l = labeling(LEGAL);
    let plan = parse_plan(
        "|1| retrieve_entity(\"Case\")\n|2| retrieve_attribute(|1|, \"case_type\")\n|3| groupby(|2|)\n\
         |4| retrieve_attribute(|1|, \"duration\")\n|5| average(|4|, |3|)\n|6| collect(|2|, |5|)\n|7| return(|6|)",
    )
    .unwrap();
    let types = check_plan(&plan, &OperationRegistry::builtin(), &l).unwrap();
    assert_eq!(types[&3].types, TypeSet::single(Grouping));
}

#[test]
fn carbon_sql_filters_groups_and_sorts() {
    let (sql, params) = only_sql(EMISSIONS, CARBON);
    assert_eq!(
        sql,
        "SELECT \"carbon_emission\".\"year\" AS \"year\", AVG(\"carbon_emission\".\"amount\") AS \"average_amount\" \
         FROM \"carbon_emission\" WHERE (\"carbon_emission\".\"country\" = ?) GROUP BY \"carbon_emission\".\"year\" \
         ORDER BY \"carbon_emission\".\"year\" ASC"
    );
    assert_eq!(params, [SqlParam::Text("United States of America".into())]);
}

#[test]
fn pass_through_plan_has_no_aggregates() {
    let (sql, params) = only_sql(
        EMISSIONS,
        "|1| retrieve_entity(\"CarbonEmission\")\n|2| retrieve_attribute(|1|, \"country\")\n|3| collect(|2|)\n|4| return(|3|)",
    );
    assert_eq!(sql, "SELECT \"carbon_emission\".\"country\" AS \"country\" FROM \"carbon_emission\"");
    assert!(params.is_empty());
}

#[test]
fn contains_is_a_case_insensitive_parameterised_match() {
    let (sql, params) = only_sql(
        INCIDENTS,
        "|1| retrieve_entity(\"Incident\")\n|2| retrieve_attribute(|1|, \"incident_id\")\n\
         |3| retrieve_attribute(|1|, \"weapon_type\")\n|4| contains(|3|, \"Hand_gun 100%\")\n\
         |5| count(|2|)\n|6| collect(|5|)\n|7| return(|6|, |4|)",
    );
    assert!(sql.contains("LOWER(CAST(\"incident\".\"weapon_type\" AS TEXT)) LIKE ? ESCAPE '\\'"), "{sql}");
    assert_eq!(params, [SqlParam::Text("%hand\\_gun 100\\%%".into())]);
}

#[test]
fn filter_on_aggregate_goes_to_having() {
    let (sql, params) = only_sql(
        LEGAL,
        "|1| retrieve_entity(\"Case\")\n|2| retrieve_attribute(|1|, \"case_type\")\n|3| groupby(|2|)\n\
         |4| retrieve_attribute(|1|, \"duration\")\n|5| average(|4|, |3|)\n|6| greaterthan(|5|, 5)\n\
         |7| collect(|2|, |5|)\n|8| return(|7|, |6|)",
    );
    assert!(sql.contains(" HAVING (AVG(\"court_case\".\"duration\") > ?)"), "{sql}");
    assert!(!sql.contains("WHERE"), "{sql}");
    assert_eq!(params, [SqlParam::Integer(5)]);
}

#[test]
fn literal_zero_divisor_is_rejected() {
    let err = compile(
        INCIDENTS,
        "|1| retrieve_entity(\"Incident\")\n|2| retrieve_attribute(|1|, \"victims\")\n|3| divide(|2|, 0)\n\
         |4| collect(|3|)\n|5| return(|4|)",
    )
    .unwrap_err();
    assert_eq!(err, CompileError::ZeroDivisor(3));
}

#[test]
fn percent_change_lowering() {
    let (sql, _) = only_sql(
        INCIDENTS,
        "|1| retrieve_entity(\"Incident\")\n|2| retrieve_attribute(|1|, \"victims\")\n\
         |3| retrieve_attribute(|1|, \"injured\")\n|4| percent_change(|2|, |3|)\n|5| collect(|4|)\n|6| return(|5|)",
    );
    assert!(sql.contains("(100.0 * (\"incident\".\"injured\" - \"incident\".\"victims\") / \"incident\".\"victims\")"), "{sql}");
}

#[test]
fn join_resolution() {
    let e = labeling(EMISSIONS);
    let jp = resolve_joins(&e, &["CarbonEmission"], &[("CarbonEmission", "amount")]).unwrap();
    assert!(jp.joins.is_empty());

    let l = labeling(LEGAL);
    let jp = resolve_joins(&l, &["Judge", "Case"], &[("Judge", "name"), ("Case", "duration")]).unwrap();
    assert_eq!(jp.root_table, "judge");
    let tables: Vec<&str> = jp.joins.iter().map(|j| j.table.as_str()).collect();
    assert_eq!(tables, ["judge_on_case", "court_case"]);

    let jp = resolve_joins(&l, &["Case", "Judge"], &[("Case", "case_type"), ("Judge", "name")]).unwrap();
    let tables: Vec<&str> = jp.joins.iter().map(|j| j.table.as_str()).collect();
    assert_eq!(tables, ["case_type", "judge_on_case", "judge"]);
}

#[test]
fn two_return_plan_splits_in_id_order() {
    let plan = parse_plan(
        "|1| retrieve_entity(\"Case\")\n|2| retrieve_attribute(|1|, \"duration\")\n|3| average(|2|)\n\
         |4| collect(|3|)\n|5| return(|4|)\n|6| retrieve_attribute(|5|, \"average_duration\")\n\
         |7| greaterthan(|6|, 100)\n|8| collect(|7|)\n|9| return(|8|)",
    )
    .unwrap();
    let subplans = split_subplans(&plan).unwrap();
    let ids: Vec<u32> = subplans.iter().map(|s| s.return_id).collect();
    assert_eq!(ids, [5, 9]);
    assert_eq!(subplans[1].depends_on, [5]);
}
