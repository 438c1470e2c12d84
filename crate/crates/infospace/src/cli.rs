//! The `infospace` command-line tool.

use std::ffi::OsString;
use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use infospace_core::compiler::{compile_plan, Dialect};
use infospace_core::plan::{check_plan, parse_plan};
use infospace_core::post::{ResultTable, Scalar};
use infospace_core::questions::QuestionIndex;
use infospace_core::spacegen::Caps;
use infospace_core::taxonomy::OperationRegistry;

use crate::corpus::{default_corpus_path, read_corpus, store_corpus};
use crate::db::open_read_only;
use crate::executor::{headers, DEFAULT_ROW_CAP};
use crate::fixtures::build_fixtures;
use crate::harvest::DEFAULT_INSTANCE_CAP;
use crate::session::{generate_corpus, load_labeling, CorpusOrigin, DomainSession, SessionOptions};
use crate::validate::validate_against_database;

#[derive(Debug, Parser)]
#[command(name = "infospace", version, about = "Question spaces over labeled relational databases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a labeling against a database.
    Validate {
        labeling: PathBuf,
        #[arg(long, env = "INFOSPACE_DB")]
        db: PathBuf,
    },
    /// Generate the question corpus of a labeling.
    Generate {
        labeling: PathBuf,
        #[arg(long, env = "INFOSPACE_DB")]
        db: PathBuf,
        /// Corpus file; defaults to `<labeling>.questions`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        caps: CapArgs,
    },
    /// Search a corpus file.
    Search {
        corpus: PathBuf,
        query: String,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Print the SQL and parameters of a plan.
    Compile {
        labeling: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Execute a plan file or a corpus question.
    Run {
        labeling: PathBuf,
        #[arg(long, env = "INFOSPACE_DB")]
        db: PathBuf,
        #[arg(long, conflicts_with_all = ["question_id", "corpus"], required_unless_present = "question_id")]
        plan: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        question_id: Option<String>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long, default_value_t = DEFAULT_ROW_CAP)]
        max_rows: usize,
    },
    /// Serve the HTTP API. Pairs of labeling and database are matched in
    /// order; the corpus is generated on startup when missing or stale.
    Serve {
        labeling: Option<PathBuf>,
        #[arg(long = "labeling", value_name = "LABELING")]
        more_labelings: Vec<PathBuf>,
        #[arg(long, env = "INFOSPACE_DB", value_delimiter = ',')]
        db: Vec<PathBuf>,
        #[arg(long, env = "INFOSPACE_PORT", default_value_t = 8080)]
        port: u16,
        /// Corpus file, only with a single domain.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        caps: CapArgs,
    },
    /// Write the bundled sample domains (labeling and database) to a directory.
    Fixtures { outdir: PathBuf },
}

#[derive(Debug, Args)]
struct CapArgs {
    #[arg(long, default_value_t = DEFAULT_INSTANCE_CAP)]
    max_instances: usize,
    #[arg(long, default_value_t = Caps::default().per_template)]
    max_per_template: usize,
}

impl CapArgs {
    fn caps(&self) -> Caps {
        Caps { per_template: self.max_per_template, per_instance_slot: self.max_instances }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Records,
}

/// Runs the tool and returns the process exit code. Usage errors exit 2,
/// everything else that fails exits 1.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate { labeling, db } => validate(&labeling, &db, out),
        Command::Generate { labeling, db, out: path, caps } => generate(&labeling, &db, path, caps.caps(), out),
        Command::Search { corpus, query, limit } => {
            let index = QuestionIndex::new(read_corpus(&corpus)?);
            for hit in index.search(&query, limit) {
                writeln!(out, "{}  {}", hit.record.question_id, hit.record.question_text)?;
            }
            Ok(0)
        }
        Command::Compile { labeling, plan } => compile(&labeling, &plan, out),
        Command::Run { labeling, db, plan, question_id, corpus, format, max_rows } => {
            let plan_text = match (plan, question_id, corpus) {
                (Some(p), _, _) => read_plan(&p)?,
                (None, Some(id), Some(c)) => read_corpus(&c)?
                    .into_iter()
                    .find(|r| r.question_id == id)
                    .map(|r| r.plan_text)
                    .ok_or_else(|| anyhow!("question `{id}` is not in {}", c.display()))?,
                _ => bail!("either --plan or --question-id with --corpus is required"),
            };
            run_plan(&labeling, &db, &plan_text, format, max_rows, out)
        }
        Command::Serve { labeling, more_labelings, db, port, corpus, caps } => {
            let labelings: Vec<PathBuf> = labeling.into_iter().chain(more_labelings).collect();
            serve(labelings, db, port, corpus, caps.caps(), err)
        }
        Command::Fixtures { outdir } => {
            for f in build_fixtures(&outdir)? {
                writeln!(out, "{}: {} {}", f.name, f.labeling.display(), f.db.display())?;
            }
            Ok(0)
        }
    }
}

fn read_plan(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading plan {}", path.display()))
}

fn validate(labeling: &Path, db: &Path, out: &mut dyn Write) -> Result<i32> {
    let (labeling, _) = load_labeling(labeling)?;
    let conn = open_read_only(db).with_context(|| format!("opening database {}", db.display()))?;
    let report = validate_against_database(&conn, &labeling);
    for w in &report.warnings {
        writeln!(out, "warning: {w}")?;
    }
    for issue in &report.issues {
        writeln!(out, "{issue}")?;
    }
    if report.is_ok() {
        writeln!(out, "ok")?;
        Ok(0)
    } else {
        Ok(1)
    }
}

fn generate(labeling_path: &Path, db: &Path, out_path: Option<PathBuf>, caps: Caps, out: &mut dyn Write) -> Result<i32> {
    let (labeling, text) = load_labeling(labeling_path)?;
    let conn = open_read_only(db).with_context(|| format!("opening database {}", db.display()))?;
    let report = validate_against_database(&conn, &labeling);
    if !report.is_ok() {
        for issue in &report.issues {
            writeln!(out, "{issue}")?;
        }
        bail!("labeling does not match the database");
    }
    let (records, reports) = generate_corpus(&conn, &labeling, &OperationRegistry::builtin(), caps)?;
    let path = out_path.unwrap_or_else(|| default_corpus_path(labeling_path));
    store_corpus(&path, &records, &text)?;
    for r in &reports {
        let capped = if r.capped { " (capped)" } else { "" };
        writeln!(out, "{}: {} questions, {} skipped{capped}", r.template_id, r.emitted, r.skipped)?;
    }
    writeln!(out, "wrote {} questions to {}", records.len(), path.display())?;
    Ok(0)
}

fn compile(labeling: &Path, plan: &Path, out: &mut dyn Write) -> Result<i32> {
    let (labeling, _) = load_labeling(labeling)?;
    let plan = parse_plan(&read_plan(plan)?)?;
    let types = check_plan(&plan, &OperationRegistry::builtin(), &labeling).map_err(|errors| {
        anyhow!("{}", errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))
    })?;
    let compiled = compile_plan(&plan, &types, &labeling, Dialect::SQLITE)?;
    for sp in &compiled.subplans {
        writeln!(out, "-- return |{}|", sp.return_id)?;
        writeln!(out, "{};", sp.query.sql)?;
        let params: Vec<String> = sp.query.params.iter().map(ToString::to_string).collect();
        writeln!(out, "-- params: [{}]", params.join(", "))?;
        if sp.query.post.is_some() {
            writeln!(out, "-- aggregated on the client")?;
        }
    }
    Ok(0)
}

fn run_plan(labeling: &Path, db: &Path, plan_text: &str, format: Format, max_rows: usize, out: &mut dyn Write) -> Result<i32> {
    let options = SessionOptions { persist: false, caps: Caps { per_template: 0, ..Caps::default() }, row_cap: max_rows, corpus: None };
    let (session, _) = DomainSession::open(labeling, db, &options)?;
    let conn = session.connect()?;
    let result = session.run(&conn, plan_text)?;
    let table = result.primary().ok_or_else(|| anyhow!("plan has no output"))?;
    match format {
        Format::Table => write_table(table, out)?,
        Format::Records => write_records(table, out)?,
    }
    Ok(0)
}

pub fn cell(value: &Scalar) -> String {
    match value {
        Scalar::Decimal(d) => format!("{d:?}"),
        Scalar::Boolean(b) => b.to_string(),
        Scalar::Null => "NULL".to_owned(),
        other => other.to_text(),
    }
}

/// Left-aligned text table with a header rule.
pub fn write_table(table: &ResultTable, out: &mut dyn Write) -> std::io::Result<()> {
    let head = headers(&table.columns);
    let body: Vec<Vec<String>> = table.rows.iter().map(|r| r.iter().map(cell).collect()).collect();
    let mut widths: Vec<usize> = head.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_owned()
    };
    writeln!(out, "{}", line(&head))?;
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    writeln!(out, "{}", line(&rule))?;
    for row in &body {
        writeln!(out, "{}", line(row))?;
    }
    if table.truncated {
        writeln!(out, "(truncated)")?;
    }
    Ok(())
}

/// One JSON object per row, keyed by column label.
pub fn write_records(table: &ResultTable, out: &mut dyn Write) -> Result<()> {
    for row in &table.rows {
        let record: serde_json::Map<String, serde_json::Value> = table
            .columns
            .iter()
            .zip(row)
            .map(|(c, v)| Ok((c.label.clone(), serde_json::to_value(v)?)))
            .collect::<Result<_, serde_json::Error>>()?;
        writeln!(out, "{}", serde_json::Value::Object(record))?;
    }
    Ok(())
}

fn serve(
    labelings: Vec<PathBuf>,
    dbs: Vec<PathBuf>,
    port: u16,
    corpus: Option<PathBuf>,
    caps: Caps,
    err: &mut dyn Write,
) -> Result<i32> {
    if labelings.is_empty() {
        bail!("at least one labeling is required");
    }
    if labelings.len() != dbs.len() {
        bail!("{} labelings but {} databases; give one --db per labeling", labelings.len(), dbs.len());
    }
    if corpus.is_some() && labelings.len() > 1 {
        bail!("--corpus applies to a single domain only");
    }
    let mut sessions = Vec::new();
    for (labeling, db) in labelings.iter().zip(&dbs) {
        let options = SessionOptions { corpus: corpus.clone(), caps, ..SessionOptions::default() };
        let (session, origin) = DomainSession::open(labeling, db, &options)?;
        match origin {
            CorpusOrigin::Loaded(p) => {
                writeln!(err, "{}: loaded {} questions from {}", session.labeling.id, session.index.len(), p.display())?
            }
            CorpusOrigin::Generated { .. } => {
                writeln!(err, "{}: generated {} questions", session.labeling.id, session.index.len())?
            }
        }
        sessions.push(session);
    }
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    writeln!(err, "listening on http://{addr}")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::service::serve(sessions, addr))?;
    Ok(0)
}
