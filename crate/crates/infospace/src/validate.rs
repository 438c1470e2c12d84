use infospace_core::closest_match;
use infospace_core::labeling::{DomainLabeling, Issue, StorageType};
use rusqlite::Connection;

/// Outcome of checking a labeling against a live database. Only `issues`
/// make it fail.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Declared SQLite column types compatible with a labeling storage type.
fn compatible(storage: StorageType, declared: &str) -> bool {
    let d = declared.to_ascii_uppercase();
    let has = |words: &[&str]| words.iter().any(|w| d.contains(w));
    match storage {
        StorageType::Integer => has(&["INT"]),
        StorageType::Float => has(&["REAL", "FLOA", "DOUB", "NUMERIC", "DECIMAL"]),
        StorageType::Text => has(&["CHAR", "CLOB", "TEXT"]) || d.is_empty(),
        StorageType::Datetime => has(&["DATE", "TIME", "TEXT"]),
        StorageType::Boolean => has(&["BOOL", "INT"]),
    }
}

/// Compares the labeling's data source with the live schema: every table
/// and column must exist, column types must agree, and declared primary
/// keys must be columns.
pub fn validate_against_database(conn: &Connection, labeling: &DomainLabeling) -> ValidationReport {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    if labeling.entities().is_empty() {
        warnings.push("no entities".to_owned());
    }
    if let Err(e) = labeling.validate() {
        issues.extend(e.issues().iter().cloned());
    }
    for (ti, table) in labeling.data_source.tables.iter().enumerate() {
        let path = format!("dataSource.tables[{ti}]");
        let columns = match table_columns(conn, &table.name) {
            Ok(c) if c.is_empty() => {
                issues.push(Issue { path, message: format!("table `{}` does not exist in the database", table.name) });
                continue;
            }
            Ok(c) => c,
            Err(e) => {
                issues.push(Issue { path, message: format!("cannot read schema of `{}`: {e}", table.name) });
                continue;
            }
        };
        if !columns.iter().any(|(n, _)| *n == table.primary_key) {
            issues.push(Issue {
                path: format!("{path}.primaryKey"),
                message: format!("column `{}` is not in table `{}`", table.primary_key, table.name),
            });
        }
        for (ci, col) in table.columns.iter().enumerate() {
            let cpath = format!("{path}.columns[{ci}]");
            match columns.iter().find(|(n, _)| *n == col.name) {
                None => {
                    let hint = closest_match(&col.name, columns.iter().map(|(n, _)| n.as_str()))
                        .map(|n| format!("; the table has `{n}`"))
                        .unwrap_or_default();
                    issues.push(Issue {
                        path: cpath,
                        message: format!("column `{}.{}` does not exist in the database{hint}", table.name, col.name),
                    })
                }
                Some((_, declared)) if !compatible(col.storage, declared) => issues.push(Issue {
                    path: cpath,
                    message: format!(
                        "column `{}.{}` is declared `{declared}` in the database but `{}` in the labeling",
                        table.name,
                        col.name,
                        col.storage.name()
                    ),
                }),
                Some(_) => {}
            }
        }
    }
    ValidationReport { issues, warnings }
}

fn table_columns(conn: &Connection, table: &str) -> rusqlite::Result<Vec<(String, String)>> {
    let mut stmt = conn.prepare("SELECT name, type FROM pragma_table_info(?1)")?;
    let rows = stmt.query_map([table], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?;
    rows.collect()
}
