//! One loaded domain: labeling, database location, operation registry and
//! question corpus. Immutable once built; each request opens its own
//! read-only connection.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use infospace_core::compiler::{compile_plan, CompileError, CompiledPlan, Dialect};
use infospace_core::labeling::{parse_labeling, DomainLabeling};
use infospace_core::plan::{check_plan, parse_plan, CheckError, PlanError, PlanGraph, TypeMap};
use infospace_core::questions::{QuestionIndex, QuestionRecord};
use infospace_core::spacegen::{builtin_templates, generate_questions, Caps, TemplateReport};
use infospace_core::taxonomy::OperationRegistry;
use rusqlite::Connection;

use crate::corpus;
use crate::db::{open_read_only, probe_dialect};
use crate::executor::{execute_plan, ExecError, PlanResult, DEFAULT_ROW_CAP};
use crate::harvest::DbInstances;
use crate::validate::validate_against_database;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("plan does not parse: {0}")]
    Parse(#[from] PlanError),
    #[error("plan does not type-check: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Check(Vec<CheckError>),
    #[error("plan cannot be compiled: {0}")]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("cannot open database: {0}")]
    Database(#[from] rusqlite::Error),
}

/// Where a session's corpus came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusOrigin {
    Loaded(PathBuf),
    Generated { path: Option<PathBuf>, reports: Vec<TemplateReport> },
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    /// Corpus file; defaults to `<labeling>.questions`.
    pub corpus: Option<PathBuf>,
    /// Write a freshly generated corpus to disk.
    pub persist: bool,
    pub caps: Caps,
    pub row_cap: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { corpus: None, persist: true, caps: Caps::default(), row_cap: DEFAULT_ROW_CAP }
    }
}

pub struct DomainSession {
    pub labeling: DomainLabeling,
    pub db_path: PathBuf,
    pub registry: OperationRegistry,
    pub dialect: Dialect,
    pub index: QuestionIndex,
    pub row_cap: usize,
}

/// Generates the full question corpus of a labeling over a database.
pub fn generate_corpus(
    conn: &Connection,
    labeling: &DomainLabeling,
    registry: &OperationRegistry,
    caps: Caps,
) -> Result<(Vec<QuestionRecord>, Vec<TemplateReport>)> {
    let mut source = DbInstances { conn, labeling };
    let (questions, reports) = generate_questions(labeling, registry, &builtin_templates(), &mut source, caps)?;
    Ok((questions.iter().map(|q| q.to_record()).collect(), reports))
}

pub fn load_labeling(path: &Path) -> Result<(DomainLabeling, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading labeling {}", path.display()))?;
    let labeling = parse_labeling(&text).with_context(|| format!("in {}", path.display()))?;
    Ok((labeling, text))
}

impl DomainSession {
    /// Loads a labeling, checks it against the database and loads or
    /// regenerates its corpus.
    pub fn open(labeling_path: &Path, db_path: &Path, options: &SessionOptions) -> Result<(DomainSession, CorpusOrigin)> {
        let (labeling, text) = load_labeling(labeling_path)?;
        let conn = open_read_only(db_path).with_context(|| format!("opening database {}", db_path.display()))?;
        let report = validate_against_database(&conn, &labeling);
        if !report.is_ok() {
            let lines: Vec<String> = report.issues.iter().map(ToString::to_string).collect();
            bail!("labeling {} does not match database {}:\n  {}", labeling_path.display(), db_path.display(), lines.join("\n  "));
        }
        let registry = OperationRegistry::builtin();
        let corpus_path = options.corpus.clone().unwrap_or_else(|| corpus::default_corpus_path(labeling_path));
        let (records, origin) = match corpus::load_if_current(&corpus_path, &text)? {
            Some(records) => (records, CorpusOrigin::Loaded(corpus_path)),
            None => {
                let (records, reports) = generate_corpus(&conn, &labeling, &registry, options.caps)?;
                let path = if options.persist {
                    corpus::store_corpus(&corpus_path, &records, &text)?;
                    Some(corpus_path)
                } else {
                    None
                };
                (records, CorpusOrigin::Generated { path, reports })
            }
        };
        let dialect = probe_dialect(&conn);
        let session = DomainSession {
            labeling,
            db_path: db_path.to_owned(),
            registry,
            dialect,
            index: QuestionIndex::new(records),
            row_cap: options.row_cap,
        };
        Ok((session, origin))
    }

    pub fn connect(&self) -> rusqlite::Result<Connection> {
        open_read_only(&self.db_path)
    }

    pub fn question(&self, question_id: &str) -> Result<&QuestionRecord, SessionError> {
        self.index.get(question_id).ok_or_else(|| SessionError::UnknownQuestion(question_id.to_owned()))
    }

    /// Parses and type-checks plan text against this domain.
    pub fn check(&self, plan_text: &str) -> Result<(PlanGraph, TypeMap), SessionError> {
        let plan = parse_plan(plan_text)?;
        let types = check_plan(&plan, &self.registry, &self.labeling).map_err(SessionError::Check)?;
        Ok((plan, types))
    }

    pub fn compile(&self, plan_text: &str) -> Result<CompiledPlan, SessionError> {
        let (plan, types) = self.check(plan_text)?;
        Ok(compile_plan(&plan, &types, &self.labeling, self.dialect)?)
    }

    pub fn run(&self, conn: &Connection, plan_text: &str) -> Result<PlanResult, SessionError> {
        let (plan, types) = self.check(plan_text)?;
        Ok(execute_plan(conn, &plan, &types, &self.labeling, self.dialect, self.row_cap)?)
    }
}
