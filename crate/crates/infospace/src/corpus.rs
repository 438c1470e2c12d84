//! Question corpora on disk: one JSON record per line, with a sidecar file
//! holding the SHA-256 of the labeling they were generated from.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use infospace_core::questions::QuestionRecord;
use sha2::{Digest, Sha256};

pub fn read_corpus(path: &Path) -> Result<Vec<QuestionRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed question record", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_corpus(path: &Path, records: &[QuestionRecord]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<labeling>.questions`
pub fn default_corpus_path(labeling: &Path) -> PathBuf {
    let mut name = labeling.as_os_str().to_owned();
    name.push(".questions");
    PathBuf::from(name)
}

fn hash_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.as_os_str().to_owned();
    name.push(".sha256");
    PathBuf::from(name)
}

/// Writes the corpus together with the labeling hash it belongs to.
pub fn store_corpus(path: &Path, records: &[QuestionRecord], labeling_text: &str) -> Result<()> {
    write_corpus(path, records)?;
    let hp = hash_path(path);
    fs::write(&hp, sha256_hex(labeling_text.as_bytes())).with_context(|| format!("writing {}", hp.display()))
}

/// The stored corpus, if it exists and was generated from exactly this
/// labeling text.
pub fn load_if_current(path: &Path, labeling_text: &str) -> Result<Option<Vec<QuestionRecord>>> {
    if !path.exists() {
        return Ok(None);
    }
    let stored = match fs::read_to_string(hash_path(path)) {
        Ok(s) => s,
        Err(_) => return Ok(None),
    };
    if stored.trim() != sha256_hex(labeling_text.as_bytes()) {
        return Ok(None);
    }
    let records = read_corpus(path)?;
    let mut seen = std::collections::BTreeSet::new();
    for r in &records {
        if !seen.insert(r.question_id.as_str()) {
            bail!("{}: duplicate question id {}", path.display(), r.question_id);
        }
    }
    Ok(Some(records))
}
