//! Data handling, per-seed configs, keyword selection and evaluation steps
//! shared by the subcommands.

use std::path::{Path, PathBuf};

use masker_core::corpus::{
    generate_synthetic, load_corpus, load_corpus_with, save_corpus, save_vocabulary, LabeledCorpus,
    SyntheticCorpora,
};
use masker_core::eval::{
    evaluate_cross_domain, evaluate_ood, evaluate_substitution, keyword_substitution_attack, ReliabilityReport,
};
use masker_core::keywords::{frequency_scores, keywords_by_class, select_keywords, KeywordSet, Scheme};
use masker_core::masker::{attention_keywords, TrainConfig};
use masker_core::model::{EncoderModel, ModelConfig};
use masker_core::rng;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const SPLITS: [&str; 4] = ["train", "test_id", "test_ood", "test_crossdomain"];

/// Corpora of one experiment; test splits share the training vocabulary.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: LabeledCorpus,
    pub test_id: Option<LabeledCorpus>,
    pub test_ood: Option<LabeledCorpus>,
    pub test_crossdomain: Option<LabeledCorpus>,
}

impl From<SyntheticCorpora> for Datasets {
    fn from(c: SyntheticCorpora) -> Self {
        Self {
            train: c.train,
            test_id: Some(c.test_id),
            test_ood: Some(c.test_ood),
            test_crossdomain: Some(c.test_crossdomain),
        }
    }
}

pub fn data_dir(out: &Path) -> PathBuf {
    out.join("data")
}

pub fn generate_data(cfg: &ExperimentConfig) -> Result<Datasets, CliError> {
    Ok(generate_synthetic(&cfg.synthetic)?.into())
}

/// Writes the vocabulary and every split under `<out>/data`.
pub fn write_data(out: &Path, data: &Datasets, max_len: usize) -> Result<Vec<PathBuf>, CliError> {
    let dir = data_dir(out);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let vocab_path = dir.join(VOCAB_FILE);
    save_vocabulary(&vocab_path, data.train.vocab())?;
    let mut written = vec![vocab_path];
    let splits = [Some(&data.train), data.test_id.as_ref(), data.test_ood.as_ref(), data.test_crossdomain.as_ref()];
    for (name, corpus) in SPLITS.iter().zip(splits) {
        if let Some(corpus) = corpus {
            let path = dir.join(format!("{name}.jsonl"));
            save_corpus(&path, corpus, VOCAB_FILE, max_len)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// `<out>/data/<name>.jsonl` when present (written by gen-synthetic or
/// build-vocab), otherwise the configured path.
fn split_path(cfg: &ExperimentConfig, out: &Path, name: &str) -> PathBuf {
    let local = data_dir(out).join(format!("{name}.jsonl"));
    if local.exists() {
        return local;
    }
    let set = match name {
        "train" => &cfg.paths.train,
        "test_id" => &cfg.paths.test_id,
        "test_ood" => &cfg.paths.test_ood,
        _ => &cfg.paths.test_crossdomain,
    };
    set.clone().unwrap_or(local)
}

/// Loads the corpora of the experiment.
/// Missing test splits are `None`; a missing training corpus is an error.
pub fn load_data(cfg: &ExperimentConfig, out: &Path) -> Result<Datasets, CliError> {
    let train_path = split_path(cfg, out, "train");
    if !train_path.exists() {
        return Err(CliError::Data(format!("training corpus {} not found", train_path.display())));
    }
    let train = load_corpus(&train_path)?;
    let max_len = cfg.model.max_len;
    let load = |name: &str| -> Result<Option<LabeledCorpus>, CliError> {
        let path = split_path(cfg, out, name);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(load_corpus_with(&path, train.vocab().clone(), Some(train.num_classes()), max_len)?))
    };
    Ok(Datasets {
        test_id: load("test_id")?,
        test_ood: load("test_ood")?,
        test_crossdomain: load("test_crossdomain")?,
        train,
    })
}

pub fn model_config(cfg: &ExperimentConfig, train: &LabeledCorpus, seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: train.vocab().len(),
        num_classes: train.num_classes(),
        seed,
        ..cfg.model.clone()
    }
}

pub fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.train.clone()
    }
}

/// Frequency keywords come straight from the corpus; attention keywords
/// need the vanilla model.
pub fn select(cfg: &ExperimentConfig, train: &LabeledCorpus, vanilla: Option<&EncoderModel>) -> Result<KeywordSet, CliError> {
    let k = cfg.train.num_keywords(train.num_classes());
    match cfg.train.keyword_scheme {
        Scheme::Frequency => Ok(select_keywords(&frequency_scores(train)?, k, cfg.train.keyword_mode, train)?),
        Scheme::Attention => {
            let model = vanilla.ok_or_else(|| CliError::Config("attention keywords need a vanilla model".into()))?;
            Ok(attention_keywords(model, train, k, cfg.train.keyword_mode)?)
        }
    }
}

fn require<'a>(c: &'a Option<LabeledCorpus>, name: &str) -> Result<&'a LabeledCorpus, CliError> {
    c.as_ref().ok_or_else(|| CliError::Data(format!("{name} corpus not found")))
}

pub fn new_report(cfg: &ExperimentConfig, method: &str, seed: u64, keywords: Option<&KeywordSet>) -> ReliabilityReport {
    let mut r = ReliabilityReport::new(method, seed, cfg.hash());
    r.conventions.insert("attention_excludes_summary_slot".into(), "true".into());
    if let Some(k) = keywords {
        r.conventions.insert("keyword_scheme".into(), k.scheme.to_string());
        r.conventions.insert("keywords".into(), k.len().to_string());
    }
    r
}

pub fn eval_ood_into(r: &mut ReliabilityReport, model: &EncoderModel, data: &Datasets) -> Result<(), CliError> {
    let e = evaluate_ood(model, require(&data.test_id, "test_id")?, require(&data.test_ood, "test_ood")?)?;
    r.detection = Some(e.detection);
    r.classification_accuracy = Some(e.id_accuracy);
    Ok(())
}

pub fn eval_cross_domain_into(r: &mut ReliabilityReport, model: &EncoderModel, data: &Datasets) -> Result<(), CliError> {
    let e = evaluate_cross_domain(
        model,
        require(&data.test_id, "test_id")?,
        require(&data.test_crossdomain, "test_crossdomain")?,
    )?;
    r.classification_accuracy = Some(e.id_accuracy);
    r.cross_domain = Some(e);
    Ok(())
}

/// The keyword-substituted copy of the ID test split for `seed`.
pub fn attacked_test(data: &Datasets, keywords: &KeywordSet, seed: u64) -> Result<LabeledCorpus, CliError> {
    let by_class = keywords_by_class(keywords, &data.train);
    Ok(keyword_substitution_attack(
        require(&data.test_id, "test_id")?,
        &by_class,
        rng::derive_seed(seed, &[rng::tag("attack")]),
    )?)
}

pub fn eval_substitution_into(
    r: &mut ReliabilityReport,
    model: &EncoderModel,
    data: &Datasets,
    attacked: &LabeledCorpus,
) -> Result<(), CliError> {
    let e = evaluate_substitution(model, require(&data.test_id, "test_id")?, attacked)?;
    r.classification_accuracy = Some(e.clean_accuracy);
    r.substitution = Some(e);
    Ok(())
}
