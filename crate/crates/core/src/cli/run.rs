//! The experiment pipeline: one run per (dataset, demo kind, batch size,
//! shot, seed), each in its own directory with a hash-listing manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DatasetConfig, ExperimentConfig};
use crate::corpus::{parse_conll, write_conll, Corpus, LabelSet, LabeledSentence, Repair};
use crate::decode::{predict, predictions_to_sentences, write_span_records, Prediction};
use crate::demos::{select, write_audit, DemoKind, Demonstration, DensityConfig};
use crate::error::{Error, Result};
use crate::eval::{score, EvalReport, GoldStandard};
use crate::fewshot::{draw_sample, write_sample, SamplePlan};
use crate::model::{save_checkpoint, train, write_log, ModelConfig};
use crate::spanconv::{assemble_instance, write_instances, AssembleOptions, MrcInstance};

pub const MANIFEST: &str = "manifest.json";
pub const OPTIMIZER: &str = "adam(beta1=0.9, beta2=0.999, eps=1e-8)";

/// `mrc-<kind>`, suffixed with `-bs<n>` when the batch size is not 1.
pub fn method_label(kind: DemoKind, batch_size: usize) -> String {
    if batch_size == 1 {
        format!("mrc-{kind}")
    } else {
        format!("mrc-{kind}-bs{batch_size}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: String,
    pub entity_types: Vec<String>,
    pub method: String,
    pub demo: DemoKind,
    pub batch_size: usize,
    pub shot: usize,
    pub seed: u64,
    pub k_dev: usize,
    pub status: RunStatus,
    pub error: Option<String>,
    pub report: Option<EvalReport>,
    pub best_epoch: Option<usize>,
    pub model: ModelConfig,
    pub density: DensityConfig,
    pub optimizer: String,
    pub config_hash: String,
    pub version: String,
    /// Relative path → SHA-256 of every other file in the run directory.
    pub files: BTreeMap<String, String>,
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Combination {
    pub dataset: usize,
    pub demo: DemoKind,
    pub batch_size: usize,
    pub shot: usize,
    pub seed: u64,
}

pub fn combinations(cfg: &ExperimentConfig) -> Vec<Combination> {
    let mut out = Vec::new();
    for dataset in 0..cfg.datasets.len() {
        for &demo in &cfg.demos {
            for batch_size in cfg.batch_sizes() {
                for &shot in &cfg.shots {
                    for &seed in &cfg.seeds {
                        out.push(Combination { dataset, demo, batch_size, shot, seed });
                    }
                }
            }
        }
    }
    out
}

/// Parses a dataset's three splits. Repairs are returned for reporting.
pub fn load_dataset(ds: &DatasetConfig) -> Result<(Corpus, Vec<Repair>)> {
    let labels = LabelSet::new(ds.entity_types.iter().map(String::as_str));
    let mut corpus = Corpus::new(ds.name.clone(), labels.clone());
    let mut repairs = Vec::new();
    for (split, path) in ds.files() {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let out = parse_conll(std::io::BufReader::new(file), split, &labels)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        repairs.extend(out.repairs);
        corpus.insert_split(split, out.sentences)?;
    }
    Ok((corpus, repairs))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn hash_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            hash_tree(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST) {
            let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            out.insert(rel, sha256_file(&path)?);
        }
    }
    Ok(())
}

/// Hashes of every file under `dir` except the manifest itself.
pub fn hash_files(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    hash_tree(dir, dir, &mut out)?;
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Instances for every sentence × entity type, each with its type's demonstration.
pub fn build_instances(
    sentences: &[LabeledSentence],
    demos: &BTreeMap<String, Demonstration>,
    opts: AssembleOptions,
) -> Result<Vec<MrcInstance>> {
    let mut out = Vec::with_capacity(sentences.len() * demos.len());
    for s in sentences {
        for (ty, demo) in demos {
            out.push(assemble_instance(s, Some(demo), ty, opts)?);
        }
    }
    Ok(out)
}

pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub corpora: &'a [Corpus],
    pub root: &'a Path,
}

impl RunContext<'_> {
    pub fn run_dir(&self, c: &Combination) -> PathBuf {
        self.root
            .join(&self.cfg.datasets[c.dataset].name)
            .join(method_label(c.demo, c.batch_size))
            .join(c.shot.to_string())
            .join(format!("seed-{}", c.seed))
    }
}

struct Trained {
    report: EvalReport,
    best_epoch: usize,
}

fn execute(ctx: &RunContext<'_>, c: &Combination, dir: &Path) -> Result<Trained> {
    let cfg = ctx.cfg;
    let corpus = &ctx.corpora[c.dataset];
    let types: Vec<String> = corpus.entity_types.iter().map(String::from).collect();

    let plan = SamplePlan::new(c.seed, c.shot, cfg.k_dev);
    let sample = draw_sample(corpus, &plan)?;
    write_sample(&dir.join("sample"), &corpus.name, &plan, &sample)?;

    let demos: BTreeMap<String, Demonstration> =
        types.iter().map(|t| (t.clone(), select(c.demo, &sample.train, t, &cfg.density))).collect();
    let path = dir.join("demos.txt");
    let mut w = create(&path)?;
    write_audit(&mut w, &demos.values().cloned().collect::<Vec<_>>()).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;

    let model_cfg = ModelConfig { batch_size: c.batch_size, ..cfg.model.clone() };
    let opts = AssembleOptions { supervise_demo: model_cfg.supervise_demo, max_len: model_cfg.max_seq_len };
    let train_inst = build_instances(&sample.train, &demos, opts)?;
    let dev_inst = build_instances(&sample.dev, &demos, opts)?;
    let test = corpus.split("test")?;
    let test_inst = build_instances(test, &demos, opts)?;
    let path = dir.join("train_instances.jsonl");
    let mut w = create(&path)?;
    write_instances(&mut w, &train_inst).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;

    let outcome = train(&train_inst, &dev_inst, &model_cfg, c.seed)?;
    let path = dir.join("train_log.jsonl");
    let mut w = create(&path)?;
    write_log(&mut w, &outcome.log).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;
    save_checkpoint(&dir.join("model.ckpt"), &outcome.model)?;

    let preds: Vec<Prediction> = test_inst.par_iter().map(|i| predict(i, &outcome.model)).collect::<Result<_>>()?;
    let report = score(&GoldStandard::from_sentences(test, &types), &preds)?;

    let path = dir.join("predictions.conll");
    let mut w = create(&path)?;
    write_conll(&mut w, &predictions_to_sentences(test, &preds)).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;
    let path = dir.join("predictions.jsonl");
    let mut w = create(&path)?;
    write_span_records(&mut w, test, &preds).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;

    Ok(Trained { report, best_epoch: outcome.best_epoch })
}

/// Runs one combination. Failures are captured in the returned manifest;
/// an `Err` means the manifest itself could not be written.
pub fn run_combination(ctx: &RunContext<'_>, c: &Combination) -> Result<RunManifest> {
    let dir = ctx.run_dir(c);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let ds = &ctx.cfg.datasets[c.dataset];
    let result = execute(ctx, c, &dir);
    let (status, error, report, best_epoch) = match result {
        Ok(t) => (RunStatus::Ok, None, Some(t.report), Some(t.best_epoch)),
        Err(e) => (RunStatus::Failed, Some(e.to_string()), None, None),
    };
    let manifest = RunManifest {
        dataset: ds.name.clone(),
        entity_types: ds.entity_types.clone(),
        method: method_label(c.demo, c.batch_size),
        demo: c.demo,
        batch_size: c.batch_size,
        shot: c.shot,
        seed: c.seed,
        k_dev: ctx.cfg.k_dev,
        status,
        error,
        report,
        best_epoch,
        model: ModelConfig { batch_size: c.batch_size, ..ctx.cfg.model.clone() },
        density: ctx.cfg.density,
        optimizer: OPTIMIZER.into(),
        config_hash: ctx.cfg.content_hash(),
        version: env!("CARGO_PKG_VERSION").into(),
        files: hash_files(&dir)?,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Runs every combination (in parallel) and returns manifests in grid order.
pub fn run_all(ctx: &RunContext<'_>) -> Result<Vec<RunManifest>> {
    combinations(ctx.cfg).par_iter().map(|c| run_combination(ctx, c)).collect()
}
