mod common;

use infospace::db::open_read_only;
use infospace::executor::{execute, ExecError};
use infospace::harvest::{harvest_instances, HarvestError};
use infospace::validate::validate_against_database;
use infospace_core::compiler::{CompiledQuery, SqlParam};
use infospace_core::labeling::parse_labeling;
use infospace_core::post::{Column, Scalar};
use infospace_core::taxonomy::TypeSet;
use rusqlite::Connection;
use serde_json::json;

fn rows_of(conn: &Connection, sql: &str, params: &[&dyn rusqlite::ToSql]) -> Vec<Vec<serde_json::Value>> {
    let mut stmt = conn.prepare(sql).unwrap();
    let width = stmt.column_count();
    stmt.query_map(params, |r| {
        (0..width)
            .map(|i| {
                Ok(match r.get_ref(i)? {
                    rusqlite::types::ValueRef::Null => json!(null),
                    rusqlite::types::ValueRef::Integer(v) => json!(v),
                    rusqlite::types::ValueRef::Real(v) => json!(v),
                    rusqlite::types::ValueRef::Text(t) => json!(String::from_utf8_lossy(t)),
                    rusqlite::types::ValueRef::Blob(_) => unreachable!(),
                })
            })
            .collect()
    })
    .unwrap()
    .collect::<Result<_, _>>()
    .unwrap()
}

fn run(session: &infospace::session::DomainSession, plan: &str) -> infospace_core::post::ResultTable {
    let conn = session.connect().unwrap();
    session.run(&conn, plan).unwrap().primary().unwrap().clone()
}

#[test]
fn judge_and_case_join_through_resolution_table() {
    let dir = tempfile::tempdir().unwrap();
    let session = common::session("legal", dir.path());
    let table = run(
        &session,
        "|1| retrieve_entity(\"Judge\")\n|2| retrieve_attribute(|1|, \"gender\")\n|3| groupby(|2|)\n\
         |4| retrieve_entity(\"Case\")\n|5| retrieve_attribute(|4|, \"duration\")\n|6| sum(|5|, |3|)\n\
         |7| collect(|2|, |6|)\n|8| return(|7|)",
    );
    let conn = session.connect().unwrap();
    let oracle = rows_of(
        &conn,
        "SELECT j.gender, SUM(c.duration) FROM judge j JOIN judge_on_case l ON l.judge_id = j.id \
         JOIN court_case c ON c.id = l.case_id GROUP BY j.gender",
        &[],
    );
    assert_eq!(oracle.len(), 2);
    common::compare(&table, &oracle, false, 0.0).unwrap();
}

#[test]
fn intra_entity_join_comes_before_relationship_join() {
    let dir = tempfile::tempdir().unwrap();
    let session = common::session("legal", dir.path());
    let plan = "|1| retrieve_entity(\"Case\")\n|2| retrieve_attribute(|1|, \"case_type\")\n\
                |3| retrieve_entity(\"Judge\")\n|4| retrieve_attribute(|3|, \"gender\")\n\
                |5| exact(|4|, \"female\")\n|6| collect(|2|)\n|7| return(|6|, |5|)";
    let sql = &session.compile(plan).unwrap().subplans[0].query.sql;
    let case_type = sql.find("JOIN \"case_type\"").unwrap();
    let link = sql.find("JOIN \"judge_on_case\"").unwrap();
    assert!(case_type < link, "{sql}");
    let table = run(&session, plan);
    let conn = session.connect().unwrap();
    let oracle = rows_of(
        &conn,
        "SELECT t.name FROM court_case c JOIN case_type t ON t.id = c.case_type_id \
         JOIN judge_on_case l ON l.case_id = c.id JOIN judge j ON j.id = l.judge_id WHERE j.gender = 'female'",
        &[],
    );
    common::compare(&table, &oracle, false, 0.0).unwrap();
}

#[test]
fn count_over_empty_selection_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let session = common::session("incidents", dir.path());
    let table = run(
        &session,
        "|1| retrieve_entity(\"Incident\")\n|2| retrieve_attribute(|1|, \"incident_id\")\n\
         |3| retrieve_attribute(|1|, \"weapon_type\")\n|4| exact(|3|, \"crossbow\")\n\
         |5| count(|2|)\n|6| collect(|5|)\n|7| return(|6|, |4|)",
    );
    assert_eq!(table.rows, [[Scalar::Integer(0)]]);
}

#[test]
fn self_correlation_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let session = common::session("incidents", dir.path());
    let table = run(
        &session,
        "|1| retrieve_entity(\"Incident\")\n|2| retrieve_attribute(|1|, \"injured\")\n\
         |3| correlation(|2|, |2|)\n|4| collect(|3|)\n|5| return(|4|)",
    );
    let Scalar::Decimal(r) = table.rows[0][0] else { panic!("{:?}", table.rows) };
    assert!((r - 1.0).abs() < 1e-9);
}

#[test]
fn division_by_zero_yields_null() {
    let dir = tempfile::tempdir().unwrap();
    let session = common::session("incidents", dir.path());
    let table = run(
        &session,
        "|1| retrieve_entity(\"Incident\")\n|2| retrieve_attribute(|1|, \"incident_id\")\n\
         |3| retrieve_attribute(|1|, \"victims\")\n|4| retrieve_attribute(|1|, \"injured\")\n\
         |5| divide(|3|, |4|)\n|6| exact(|2|, 1001)\n|7| collect(|5|)\n|8| return(|7|, |6|)",
    );
    let conn = session.connect().unwrap();
    let injured: i64 = conn.query_row("SELECT injured FROM incident WHERE incident_id = 1001", [], |r| r.get(0)).unwrap();
    assert_eq!(injured, 0);
    assert_eq!(table.rows, [[Scalar::Null]]);
}

#[test]
fn aggregate_filter_matches_having_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let session = common::session("legal", dir.path());
    let table = run(
        &session,
        "|1| retrieve_entity(\"Case\")\n|2| retrieve_attribute(|1|, \"case_type\")\n|3| groupby(|2|)\n\
         |4| retrieve_attribute(|1|, \"duration\")\n|5| average(|4|, |3|)\n|6| greaterthan(|5|, 150)\n\
         |7| collect(|2|, |5|)\n|8| return(|7|, |6|)",
    );
    let conn = session.connect().unwrap();
    let oracle = rows_of(
        &conn,
        "SELECT t.name, AVG(c.duration) FROM court_case c JOIN case_type t ON t.id = c.case_type_id \
         GROUP BY t.name HAVING AVG(c.duration) > 150",
        &[],
    );
    assert_eq!(oracle.len(), 2);
    common::compare(&table, &oracle, false, 0.0).unwrap();
}

#[test]
fn row_cap_sets_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let built = common::build("incidents", dir.path());
    let conn = open_read_only(&built.db).unwrap();
    let query = CompiledQuery {
        sql: "SELECT \"incident_id\" FROM \"incident\"".into(),
        params: vec![],
        columns: vec![Column { label: "incident_id".into(), types: TypeSet::EMPTY, units: None }],
        post: None,
    };
    let table = execute(&conn, &query, 7).unwrap();
    assert_eq!(table.rows.len(), 7);
    assert!(table.truncated);
    assert!(!execute(&conn, &query, 40).unwrap().truncated);
}

#[test]
fn writes_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let built = common::build("incidents", dir.path());
    let conn = open_read_only(&built.db).unwrap();
    let query = CompiledQuery {
        sql: "DELETE FROM \"incident\" WHERE \"incident_id\" = ?".into(),
        params: vec![SqlParam::Integer(1001)],
        columns: vec![],
        post: None,
    };
    let err = execute(&conn, &query, 10).unwrap_err();
    assert!(matches!(err, ExecError::Sql { .. }), "{err}");
    assert!(err.to_string().contains("DELETE FROM"));
    let n: i64 = conn.query_row("SELECT COUNT(*) FROM incident", [], |r| r.get(0)).unwrap();
    assert_eq!(n, 40);
}

#[test]
fn misspelled_column_is_reported_with_both_names() {
    let dir = tempfile::tempdir().unwrap();
    let built = common::build("emissions", dir.path());
    let conn = open_read_only(&built.db).unwrap();
    let doc = infospace::fixtures::fixture("emissions").unwrap().labeling.replace("\"amount\"", "\"amout\"");
    let labeling = parse_labeling(&doc).unwrap();
    let report = validate_against_database(&conn, &labeling);
    assert!(!report.is_ok());
    let issue = report.issues.iter().find(|i| i.message.contains("amout")).unwrap();
    assert!(issue.message.contains("amount"), "{issue}");
    assert_eq!(issue.path, "dataSource.tables[0].columns[3]");
}

#[test]
fn empty_labeling_validates_with_warning() {
    let conn = Connection::open_in_memory().unwrap();
    let labeling = parse_labeling(
        r#"{"id": "empty", "name": "Empty", "dataSource": {"tables": []}, "dataAbstraction": {"entities": []}}"#,
    )
    .unwrap();
    let report = validate_against_database(&conn, &labeling);
    assert!(report.is_ok());
    assert_eq!(report.warnings, ["no entities"]);
}

#[test]
fn harvest_returns_sorted_distinct_values_within_cap() {
    let dir = tempfile::tempdir().unwrap();
    let built = common::build("incidents", dir.path());
    let conn = open_read_only(&built.db).unwrap();
    let labeling = parse_labeling(infospace::fixtures::fixture("incidents").unwrap().labeling).unwrap();
    let all = harvest_instances(&conn, &labeling, "Incident", "weapon_type", 100).unwrap();
    let expected: Vec<String> = rows_of(
        &conn,
        "SELECT DISTINCT weapon_type FROM incident WHERE weapon_type IS NOT NULL ORDER BY weapon_type",
        &[],
    )
    .into_iter()
    .map(|r| r[0].as_str().unwrap().to_owned())
    .collect();
    let got: Vec<String> = all.values.iter().map(Scalar::to_text).collect();
    assert_eq!(got, expected);
    assert!(!all.truncated);
    let capped = harvest_instances(&conn, &labeling, "Incident", "weapon_type", 2).unwrap();
    assert_eq!(capped.values.len(), 2);
    assert!(capped.truncated);
    assert!(matches!(
        harvest_instances(&conn, &labeling, "Incident", "victims", 5),
        Err(HarvestError::DisallowedType(..))
    ));
}
