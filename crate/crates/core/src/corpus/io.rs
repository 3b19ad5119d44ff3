use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{build_vocabulary, LabeledCorpus, RawRecord, Vocabulary, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};

/// Sidecar stored next to a corpus file as `<stem>.meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub num_classes: usize,
    /// Vocabulary file, relative to the sidecar's directory.
    pub vocab: String,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

impl CorpusMeta {
    pub fn sidecar_path(corpus_path: &Path) -> PathBuf {
        let stem = corpus_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        corpus_path.with_file_name(format!("{stem}.meta.json"))
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[RawRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocabulary::from_tokens(text.lines().map(str::to_owned).collect())
}

pub fn save_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut out = vocab.tokens().join("\n");
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a JSONL corpus. With a sidecar the declared class count and
/// vocabulary are used; without one, `C = 1 + max label` and the vocabulary
/// is built from the file itself.
pub fn load_corpus(path: &Path) -> Result<LabeledCorpus> {
    let meta_path = CorpusMeta::sidecar_path(path);
    if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: CorpusMeta = serde_json::from_str(&text)?;
        let vocab_path = meta_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&meta.vocab);
        let vocab = Arc::new(load_vocabulary(&vocab_path)?);
        load_corpus_with(path, vocab, Some(meta.num_classes), meta.max_len)
    } else {
        let records = read_records(path)?;
        if records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
        let vocab = Arc::new(build_vocabulary(&texts, 1)?);
        let num_classes = 1 + records.iter().map(|r| r.label).max().unwrap_or(0);
        LabeledCorpus::from_records(&records, num_classes, vocab, DEFAULT_MAX_LEN)
    }
}

/// Loads a JSONL corpus against a known vocabulary.
pub fn load_corpus_with(
    path: &Path,
    vocab: Arc<Vocabulary>,
    num_classes: Option<usize>,
    max_len: usize,
) -> Result<LabeledCorpus> {
    let records = read_records(path)?;
    let num_classes = match num_classes {
        Some(c) => {
            // report the offending line rather than a bare index
            let file = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let lines = file
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, _)| i + 1);
            for (rec, line) in records.iter().zip(lines) {
                if rec.label >= c {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: format!("label {} out of range for {c} classes", rec.label),
                    });
                }
            }
            c
        }
        None => 1 + records.iter().map(|r| r.label).max().unwrap_or(0),
    };
    LabeledCorpus::from_records(&records, num_classes, vocab, max_len)
}

/// Writes `corpus` as JSONL plus its sidecar; `vocab_file` is written
/// relative to the corpus directory.
pub fn save_corpus(path: &Path, corpus: &LabeledCorpus, vocab_file: &str, max_len: usize) -> Result<()> {
    write_records(path, &corpus.to_records())?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let vocab_path = dir.join(vocab_file);
    if !vocab_path.exists() {
        save_vocabulary(&vocab_path, corpus.vocab())?;
    }
    let meta = CorpusMeta {
        num_classes: corpus.num_classes(),
        vocab: vocab_file.to_owned(),
        max_len,
    };
    let meta_path = CorpusMeta::sidecar_path(path);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .map_err(|e| Error::io(&meta_path, e))
}
