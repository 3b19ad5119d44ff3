//! Subcommands. Each reads only the config and files written by earlier
//! commands under `--out`, and writes its own artifacts there.
//!
//! Layout:
//! ```text
//! <out>/config.json
//! <out>/data/{vocab.txt, <split>.jsonl, <split>.meta.json}
//! <out>/seed-<s>/keywords.json
//! <out>/seed-<s>/attacked_test_id.jsonl
//! <out>/seed-<s>/<method>/{model.json, train_log.jsonl, report.json, report.csv}
//! <out>/report.csv, <out>/summary.csv, <out>/report.md
//! ```

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use masker_core::corpus::{build_vocabulary, read_records, save_corpus, save_vocabulary, LabeledCorpus};
use masker_core::eval::ReliabilityReport;
use masker_core::keywords::{load_keyword_set, save_keyword_set, KeywordSet};
use masker_core::masker::{train_masker, train_masker_from, train_vanilla, StepLog, TrainedModel};
use masker_core::model::{load_checkpoint, save_checkpoint, Checkpoint, EncoderModel};

use crate::config::{EvalTarget, ExperimentConfig};
use crate::pipeline::{self, Datasets};
use crate::report;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
pub enum Method {
    Vanilla,
    Masker,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Vanilla, Method::Masker];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Masker => "masker",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A validated config bound to an output directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    hash: String,
}

#[derive(Serialize)]
struct ConfigRecord<'a> {
    config_hash: &'a str,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct LogLine<'a> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    step: &'a StepLog,
}

impl Run {
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Self, CliError> {
        cfg.validate()?;
        let hash = cfg.hash();
        Ok(Self { cfg, out: out.into(), hash })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed-{seed}"))
    }

    pub fn method_dir(&self, seed: u64, method: Method) -> PathBuf {
        self.seed_dir(seed).join(method.as_str())
    }

    pub fn keywords_path(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("keywords.json")
    }

    pub fn attacked_path(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("attacked_test_id.jsonl")
    }

    pub fn checkpoint_path(&self, seed: u64, method: Method) -> PathBuf {
        self.method_dir(seed, method).join("model.json")
    }

    pub fn log_path(&self, seed: u64, method: Method) -> PathBuf {
        self.method_dir(seed, method).join("train_log.jsonl")
    }

    pub fn report_path(&self, seed: u64, method: Method) -> PathBuf {
        self.method_dir(seed, method).join("report.json")
    }

    fn mkdir(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
    }

    /// Writes `<out>/config.json` with the resolved config and its hash.
    pub fn write_config(&self) -> Result<PathBuf, CliError> {
        self.mkdir(&self.out)?;
        let path = self.out.join("config.json");
        let record = ConfigRecord { config_hash: &self.hash, config: &self.cfg };
        write_json(&path, &record)?;
        Ok(path)
    }

    pub fn data(&self) -> Result<Datasets, CliError> {
        if self.cfg.paths.train.is_none() && !pipeline::data_dir(&self.out).join("train.jsonl").exists() {
            return Err(CliError::Data(format!(
                "no training corpus under {}; run gen-synthetic or set paths.train",
                pipeline::data_dir(&self.out).display()
            )));
        }
        pipeline::load_data(&self.cfg, &self.out)
    }

    fn check_hash(&self, what: &Path, found: Option<&String>) -> Result<(), CliError> {
        match found {
            Some(h) if h == &self.hash => Ok(()),
            _ => Err(CliError::Data(format!(
                "{} was produced by a different config; rerun the earlier command",
                what.display()
            ))),
        }
    }

    pub fn load_keywords(&self, seed: u64, train: &LabeledCorpus) -> Result<KeywordSet, CliError> {
        let path = self.keywords_path(seed);
        if !path.exists() {
            return Err(CliError::Data(format!("missing keyword set {}; run select-keywords", path.display())));
        }
        let file = load_keyword_set(&path)?;
        self.check_hash(&path, file.metadata.get("config_hash"))?;
        Ok(KeywordSet::from_file(&file, train.vocab())?)
    }

    pub fn load_model(&self, seed: u64, method: Method) -> Result<EncoderModel, CliError> {
        let path = self.checkpoint_path(seed, method);
        if !path.exists() {
            return Err(CliError::Data(format!("missing checkpoint {}; run train", path.display())));
        }
        let ck = load_checkpoint(&path)?;
        self.check_hash(&path, ck.metadata.get("config_hash"))?;
        Ok(ck.into_model()?)
    }

    /// Methods to evaluate: the requested one, or every trained one.
    pub fn methods(&self, seed: u64, method: Option<Method>) -> Result<Vec<Method>, CliError> {
        if let Some(m) = method {
            return Ok(vec![m]);
        }
        let found: Vec<Method> = Method::ALL
            .into_iter()
            .filter(|&m| self.checkpoint_path(seed, m).exists())
            .collect();
        if found.is_empty() {
            return Err(CliError::Data(format!("no checkpoints under {}; run train", self.seed_dir(seed).display())));
        }
        Ok(found)
    }

    fn save_model(&self, seed: u64, method: Method, trained: &TrainedModel) -> Result<PathBuf, CliError> {
        self.mkdir(&self.method_dir(seed, method))?;
        let mut ck = Checkpoint::from_model(&trained.model);
        ck.metadata.insert("config_hash".into(), self.hash.clone());
        ck.metadata.insert("seed".into(), seed.to_string());
        ck.metadata.insert("method".into(), method.to_string());
        let path = self.checkpoint_path(seed, method);
        save_checkpoint(&path, &ck)?;

        let log_path = self.log_path(seed, method);
        let mut text = Vec::new();
        for step in &trained.log {
            let line = LogLine { config_hash: &self.hash, seed, step };
            serde_json::to_writer(&mut text, &line).map_err(masker_core::Error::from)?;
            text.push(b'\n');
        }
        fs::write(&log_path, text).map_err(|e| CliError::io(&log_path, e))?;
        Ok(path)
    }

    fn save_keywords(&self, seed: u64, keywords: &KeywordSet, train: &LabeledCorpus) -> Result<PathBuf, CliError> {
        self.mkdir(&self.seed_dir(seed))?;
        let mut file = keywords.to_file(train.vocab());
        file.metadata.insert("config_hash".into(), self.hash.clone());
        file.metadata.insert("seed".into(), seed.to_string());
        let path = self.keywords_path(seed);
        save_keyword_set(&path, &file)?;
        Ok(path)
    }

    /// The existing report for this config and seed, or a fresh one.
    fn report_for(&self, seed: u64, method: Method, keywords: Option<&KeywordSet>) -> ReliabilityReport {
        let path = self.report_path(seed, method);
        let existing = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str::<ReliabilityReport>(&t).ok())
            .filter(|r| r.config_hash == self.hash && r.seed == seed && r.method == method.as_str());
        existing.unwrap_or_else(|| pipeline::new_report(&self.cfg, method.as_str(), seed, keywords))
    }

    fn save_report(&self, seed: u64, method: Method, r: &ReliabilityReport) -> Result<PathBuf, CliError> {
        self.mkdir(&self.method_dir(seed, method))?;
        let path = self.report_path(seed, method);
        write_json(&path, r)?;
        let csv_path = path.with_extension("csv");
        report::write_rows(&csv_path, std::slice::from_ref(r))?;
        Ok(path)
    }

    fn keywords_if_any(&self, seed: u64, train: &LabeledCorpus) -> Option<KeywordSet> {
        self.load_keywords(seed, train).ok()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_vec_pretty(value).map_err(masker_core::Error::from)?;
    text.push(b'\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn gen_synthetic(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    run.write_config()?;
    let data = pipeline::generate_data(&run.cfg)?;
    pipeline::write_data(&run.out, &data, run.cfg.model.max_len)
}

/// Builds a vocabulary from the configured training JSONL and rewrites every
/// configured split under `<out>/data` against it.
pub fn build_vocab(run: &Run, min_count: usize) -> Result<Vec<PathBuf>, CliError> {
    let train_path = run
        .cfg
        .paths
        .train
        .as_ref()
        .ok_or_else(|| CliError::Config("build-vocab needs paths.train".into()))?;
    if !train_path.exists() {
        return Err(CliError::Data(format!("training corpus {} not found", train_path.display())));
    }
    run.write_config()?;
    let records = read_records(train_path)?;
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let vocab = std::sync::Arc::new(build_vocabulary(&texts, min_count)?);
    let num_classes = 1 + records.iter().map(|r| r.label).max().unwrap_or(0);
    let max_len = run.cfg.model.max_len;

    let dir = pipeline::data_dir(&run.out);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let vocab_path = dir.join(pipeline::VOCAB_FILE);
    save_vocabulary(&vocab_path, &vocab)?;
    let mut written = vec![vocab_path];
    let p = &run.cfg.paths;
    for (name, src) in pipeline::SPLITS.iter().zip([&p.train, &p.test_id, &p.test_ood, &p.test_crossdomain]) {
        let Some(src) = src else { continue };
        if !src.exists() {
            return Err(CliError::Data(format!("{name} corpus {} not found", src.display())));
        }
        let records = read_records(src)?;
        let corpus = LabeledCorpus::from_records(&records, num_classes, vocab.clone(), max_len)?;
        let dst = dir.join(format!("{name}.jsonl"));
        save_corpus(&dst, &corpus, pipeline::VOCAB_FILE, max_len)?;
        written.push(dst);
    }
    Ok(written)
}

fn train_vanilla_into(run: &Run, data: &Datasets, seed: u64) -> Result<(TrainedModel, PathBuf), CliError> {
    let trained = train_vanilla(
        &data.train,
        &pipeline::model_config(&run.cfg, &data.train, seed),
        &pipeline::train_config(&run.cfg, seed),
    )?;
    let path = run.save_model(seed, Method::Vanilla, &trained)?;
    Ok((trained, path))
}

fn select_into(run: &Run, data: &Datasets, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    use masker_core::keywords::Scheme;
    let mut written = Vec::new();
    let vanilla = match run.cfg.train.keyword_scheme {
        Scheme::Frequency => None,
        Scheme::Attention => {
            if !run.checkpoint_path(seed, Method::Vanilla).exists() {
                written.push(train_vanilla_into(run, data, seed)?.1);
            }
            // always the stored weights, so the result does not depend on
            // whether the vanilla model was trained in this process
            Some(run.load_model(seed, Method::Vanilla)?)
        }
    };
    let keywords = pipeline::select(&run.cfg, &data.train, vanilla.as_ref())?;
    written.push(run.save_keywords(seed, &keywords, &data.train)?);
    Ok(written)
}

fn train_into(run: &Run, data: &Datasets, seed: u64, method: Method) -> Result<PathBuf, CliError> {
    match method {
        Method::Vanilla => Ok(train_vanilla_into(run, data, seed)?.1),
        Method::Masker => {
            let keywords = run.load_keywords(seed, &data.train)?;
            let tc = pipeline::train_config(&run.cfg, seed);
            let trained = if run.cfg.train.share_init {
                train_masker_from(run.load_model(seed, Method::Vanilla)?, &data.train, &keywords, &tc)?
            } else {
                train_masker(&data.train, &keywords, &pipeline::model_config(&run.cfg, &data.train, seed), &tc)?
            };
            run.save_model(seed, method, &trained)
        }
    }
}

fn eval_into(run: &Run, data: &Datasets, seed: u64, method: Method, target: EvalTarget) -> Result<PathBuf, CliError> {
    let model = run.load_model(seed, method)?;
    let keywords = run.keywords_if_any(seed, &data.train);
    let mut r = run.report_for(seed, method, keywords.as_ref());
    match target {
        EvalTarget::Ood => pipeline::eval_ood_into(&mut r, &model, data)?,
        EvalTarget::CrossDomain => pipeline::eval_cross_domain_into(&mut r, &model, data)?,
        EvalTarget::Substitution => {
            let keywords = run.load_keywords(seed, &data.train)?;
            let attacked = attacked_into(run, data, seed, &keywords)?;
            pipeline::eval_substitution_into(&mut r, &model, data, &attacked)?;
        }
    }
    run.save_report(seed, method, &r)
}

fn attacked_into(run: &Run, data: &Datasets, seed: u64, keywords: &KeywordSet) -> Result<LabeledCorpus, CliError> {
    let attacked = pipeline::attacked_test(data, keywords, seed)?;
    run.mkdir(&run.seed_dir(seed))?;
    save_corpus(&run.attacked_path(seed), &attacked, &format!("../data/{}", pipeline::VOCAB_FILE), run.cfg.model.max_len)?;
    Ok(attacked)
}

pub fn select_keywords(run: &Run, seeds: &[u64]) -> Result<Vec<PathBuf>, CliError> {
    let data = run.data()?;
    let mut written = Vec::new();
    for &seed in seeds {
        written.extend(select_into(run, &data, seed)?);
    }
    Ok(written)
}

pub fn train(run: &Run, seeds: &[u64], method: Method) -> Result<Vec<PathBuf>, CliError> {
    let data = run.data()?;
    seeds.iter().map(|&s| train_into(run, &data, s, method)).collect()
}

pub fn evaluate(run: &Run, seeds: &[u64], method: Option<Method>, target: EvalTarget) -> Result<Vec<PathBuf>, CliError> {
    let data = run.data()?;
    let mut written = Vec::new();
    for &seed in seeds {
        for m in run.methods(seed, method)? {
            written.push(eval_into(run, &data, seed, m, target)?);
        }
    }
    Ok(written)
}

/// Aggregates every per-seed report into CSV and markdown tables.
pub fn report(run: &Run, seeds: &[u64]) -> Result<Vec<PathBuf>, CliError> {
    let mut reports = Vec::new();
    for &seed in seeds {
        for m in Method::ALL {
            let path = run.report_path(seed, m);
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let r: ReliabilityReport = serde_json::from_str(&text).map_err(masker_core::Error::from)?;
            run.check_hash(&path, Some(&r.config_hash))?;
            reports.push(r);
        }
    }
    if reports.is_empty() {
        return Err(CliError::Data(format!("no reports under {}; run the eval commands", run.out.display())));
    }
    report::write_all(&run.out, run.hash(), &reports)
}

/// Everything for one seed: vanilla, keywords, MASKER, then each target.
fn pipeline_seed(run: &Run, data: &Datasets, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let mut written = vec![train_into(run, data, seed, Method::Vanilla)?];
    written.extend(select_into(run, data, seed)?);
    written.push(train_into(run, data, seed, Method::Masker)?);
    for m in Method::ALL {
        // a stale report from an older config must not leak sections
        let path = run.report_path(seed, m);
        if path.exists() {
            fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
        }
        for &target in &run.cfg.eval {
            let p = eval_into(run, data, seed, m, target)?;
            if !written.contains(&p) {
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Generates data if needed, runs every seed and aggregates.
pub fn run_pipeline(run: &Run, seeds: &[u64], parallel: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut written = vec![run.write_config()?];
    if run.cfg.paths.train.is_none() && !pipeline::data_dir(&run.out).join("train.jsonl").exists() {
        written.extend(gen_synthetic(run)?);
    }
    let data = run.data()?;
    let per_seed: Vec<Result<Vec<PathBuf>, CliError>> = if parallel {
        seeds.par_iter().map(|&s| pipeline_seed(run, &data, s)).collect()
    } else {
        seeds.iter().map(|&s| pipeline_seed(run, &data, s)).collect()
    };
    for r in per_seed {
        written.extend(r?);
    }
    written.extend(report(run, seeds)?);
    Ok(written)
}

/// Prints one path per line.
pub fn print_paths(paths: &[PathBuf]) {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for p in paths {
        let _ = writeln!(w, "{}", p.display());
    }
}
