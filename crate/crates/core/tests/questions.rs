use std::collections::{BTreeMap, BTreeSet};

use infospace_core::labeling::parse_labeling;
use infospace_core::post::Scalar;
use infospace_core::questions::{tokenize, QuestionIndex, QuestionRecord};
use infospace_core::spacegen::{builtin_templates, generate_questions, Caps, GeneratedQuestion, StaticInstances};
use infospace_core::taxonomy::OperationRegistry;
use proptest::prelude::*;

const INCIDENTS: &str = include_str!("../../infospace/fixtures/incidents/labeling.json");
const HOUSING: &str = include_str!("../../infospace/fixtures/housing/labeling.json");

fn text(values: &[&str]) -> Vec<Scalar> {
    values.iter().map(|s| Scalar::Text((*s).into())).collect()
}

fn incident_instances() -> StaticInstances {
    StaticInstances(BTreeMap::from([
        (("Incident".into(), "incident_id".into()), vec![Scalar::Integer(1001), Scalar::Integer(1004)]),
        (("Incident".into(), "weapon_type".into()), text(&["handgun", "knife", "rifle"])),
        (("Incident".into(), "city".into()), text(&["chicago", "denver"])),
    ]))
}

fn generate(doc: &str, instances: &mut StaticInstances) -> Vec<GeneratedQuestion> {
    let labeling = parse_labeling(doc).unwrap();
    generate_questions(&labeling, &OperationRegistry::builtin(), &builtin_templates(), instances, Caps::default())
        .unwrap()
        .0
}

#[test]
fn counting_and_comparison_questions() {
    let questions = generate(INCIDENTS, &mut incident_instances());
    let texts: BTreeSet<&str> = questions.iter().map(|q| q.question_text.as_str()).collect();
    for want in [
        "What is the count of unique incident id for weapon type containing \"handgun\"?",
        "Is the count of unique incident id for weapon type containing \"handgun\" greater than count of unique incident id for weapon type containing \"rifle\"?",
        "What is the correlation between number of injured and number of victims for city of chicago?",
        "For city sorted in descending order and limited to the top results, what is the sum of number of victims?",
    ] {
        assert!(texts.contains(want), "missing {want}");
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate(INCIDENTS, &mut incident_instances());
    let b = generate(INCIDENTS, &mut incident_instances());
    assert_eq!(a, b);
    let ids: BTreeSet<&str> = a.iter().map(|q| q.question_id.as_str()).collect();
    assert_eq!(ids.len(), a.len());
}

#[test]
fn unrelated_labeling_edit_keeps_question_ids() {
    let before = generate(INCIDENTS, &mut incident_instances());
    let mut doc: serde_json::Value = serde_json::from_str(INCIDENTS).unwrap();
    doc["dataSource"]["tables"].as_array_mut().unwrap().push(serde_json::json!({
        "name": "station", "primaryKey": "id",
        "columns": [{"name": "id", "type": "integer"}, {"name": "staff", "type": "integer"},
                    {"name": "district", "type": "text"}]
    }));
    doc["dataAbstraction"]["entities"].as_array_mut().unwrap().push(serde_json::json!({
        "name": "Station", "primaryTable": "station",
        "attributes": [{"name": "staff", "type": "integer", "isa": ["Metric", "Arithmetic"],
                        "source": {"table": "station", "column": "staff"}},
                       {"name": "district", "type": "text", "isa": ["Categorical"],
                        "source": {"table": "station", "column": "district"}}]
    }));
    let after = generate(&doc.to_string(), &mut incident_instances());
    let after_ids: BTreeSet<&str> = after.iter().map(|q| q.question_id.as_str()).collect();
    assert!(after.len() > before.len());
    for q in &before {
        assert!(after_ids.contains(q.question_id.as_str()), "{} lost", q.question_text);
    }
}

#[test]
fn rent_search_ranks_rent_questions_first() {
    let instances = StaticInstances(BTreeMap::from([(
        ("RentIndex".into(), "region_name".into()),
        text(&["San Francisco, CA", "United States"]),
    )]));
    let records: Vec<QuestionRecord> = generate(HOUSING, &mut instances.clone()).iter().map(|q| q.to_record()).collect();
    let index = QuestionIndex::new(records);
    let hits = index.search("average rent", 5);
    assert_eq!(hits.len(), 5);
    for h in &hits {
        assert!(h.record.question_text.contains("average rent"), "{}", h.record.question_text);
    }
    assert!(index.search("", 5).is_empty());
}

fn record(i: usize, text: String) -> QuestionRecord {
    QuestionRecord { question_id: format!("{i:016x}"), template_id: "t".into(), question_text: text, plan_text: String::new() }
}

proptest! {
    #[test]
    fn search_scores_never_increase(texts in proptest::collection::vec("[a-c ]{0,12}", 0..20), query in "[a-c ]{1,6}") {
        let index = QuestionIndex::new(texts.into_iter().enumerate().map(|(i, t)| record(i, t)).collect());
        let hits = index.search(&query, 100);
        for pair in hits.windows(2) {
            prop_assert!(pair[0].score >= pair[1].score);
        }
        for h in &hits {
            prop_assert!(h.score > 0);
        }
    }

    #[test]
    fn pages_concatenate_to_full_result(texts in proptest::collection::vec("[ab ]{0,8}", 0..15), query in "[ab]{1,3}") {
        let index = QuestionIndex::new(texts.into_iter().enumerate().map(|(i, t)| record(i, t)).collect());
        let all: Vec<&str> = index.search(&query, 100).iter().map(|h| h.record.question_id.as_str()).collect();
        let mut paged = Vec::new();
        for offset in (0..all.len().max(1)).step_by(3) {
            paged.extend(index.search_page(&query, offset, 3).iter().map(|h| h.record.question_id.as_str()));
        }
        prop_assert_eq!(paged, all);
    }

    #[test]
    fn tokens_are_lowercase_alphanumeric(s in any::<String>()) {
        for t in tokenize(&s) {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(char::is_alphanumeric));
            prop_assert_eq!(t.to_lowercase(), t.clone());
        }
    }
}
