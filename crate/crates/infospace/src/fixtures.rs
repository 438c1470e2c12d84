//! Small sample domains shipped with the crate: a labeling, the SQL that
//! builds its database, and a manifest of expected answers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rusqlite::Connection;

pub struct Fixture {
    pub name: &'static str,
    pub labeling: &'static str,
    pub seed_sql: &'static str,
    pub manifest: &'static str,
}

macro_rules! fixture {
    ($name:literal) => {
        Fixture {
            name: $name,
            labeling: include_str!(concat!("../fixtures/", $name, "/labeling.json")),
            seed_sql: include_str!(concat!("../fixtures/", $name, "/seed.sql")),
            manifest: include_str!(concat!("../fixtures/", $name, "/manifest.jsonl")),
        }
    };
}

pub static FIXTURES: &[Fixture] = &[
    fixture!("emissions"),
    fixture!("legal"),
    fixture!("incidents"),
    fixture!("housing"),
    fixture!("education"),
    fixture!("healthcare"),
];

pub fn fixture(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}

/// Paths of one fixture written to disk.
#[derive(Debug, Clone)]
pub struct BuiltFixture {
    pub name: String,
    pub labeling: PathBuf,
    pub db: PathBuf,
}

impl Fixture {
    /// Writes `<dir>/<name>.json` and `<dir>/<name>.db`, replacing any
    /// existing database.
    pub fn build(&self, dir: &Path) -> Result<BuiltFixture> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let labeling = dir.join(format!("{}.json", self.name));
        let db = dir.join(format!("{}.db", self.name));
        fs::write(&labeling, self.labeling)
            .with_context(|| format!("writing {}", labeling.display()))?;
        if db.exists() {
            fs::remove_file(&db).with_context(|| format!("removing {}", db.display()))?;
        }
        let conn = Connection::open(&db).with_context(|| format!("creating {}", db.display()))?;
        conn.execute_batch(self.seed_sql)
            .with_context(|| format!("seeding fixture {}", self.name))?;
        Ok(BuiltFixture { name: self.name.to_owned(), labeling, db })
    }

    /// Builds the database in memory.
    pub fn open_in_memory(&self) -> Result<Connection> {
        let conn = Connection::open_in_memory()?;
        conn.execute_batch(self.seed_sql)
            .with_context(|| format!("seeding fixture {}", self.name))?;
        Ok(conn)
    }
}

pub fn build_fixtures(dir: &Path) -> Result<Vec<BuiltFixture>> {
    FIXTURES.iter().map(|f| f.build(dir)).collect()
}
