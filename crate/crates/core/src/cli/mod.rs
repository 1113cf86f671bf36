//! Command-line experiment runner.
//!
//! Subcommands: `prepare`, `sample`, `demo`, `run`, `report`, `verify`.
//! Settings come from a TOML [`ExperimentConfig`]; flags override the file
//! and the output root may also come from `GRAPE_NER_OUT`.
//!
//! Exit codes: 0 success, 1 partial failure (some runs failed, or hashes
//! mismatched), 2 configuration or I/O error.

mod config;
mod report;
mod run;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{resolve_output, DatasetConfig, ExperimentConfig, OUT_ENV};
pub use report::{collect_runs, GroupKey, Report, Skipped};
pub use run::{
    build_instances, combinations, hash_files, load_dataset, method_label, run_all, run_combination, sha256_file,
    Combination, RunContext, RunManifest, RunStatus, MANIFEST, OPTIMIZER,
};

use crate::corpus::{corpus_stats, sentence_stats, Corpus, CorpusStats};
use crate::demos::{select, write_audit, DemoKind};
use crate::error::{Error, Result};
use crate::eval::Averaging;
use crate::fewshot::{draw_sample, write_sample, SamplePlan};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "grape-ner", version, about = "Few-shot NER with entity-dense demonstrations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse every dataset and write corpus statistics.
    Prepare(Common),
    /// Draw one k-shot train/dev sample.
    Sample(Pick),
    /// Show the demonstrations chosen for one sample.
    Demo(Pick),
    /// Run the full grid of datasets × demonstrations × batch sizes × shots × seeds.
    Run(Common),
    /// Aggregate finished runs into tables.
    Report(ReportArgs),
    /// Re-hash every file listed in run manifests.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(short, long, env = OUT_ENV)]
    pub output_dir: Option<PathBuf>,
    /// Restrict to these datasets.
    #[arg(long = "dataset", value_delimiter = ',')]
    pub datasets: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub shots: Option<Vec<usize>>,
    #[arg(long)]
    pub k_dev: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub demos: Option<Vec<DemoKind>>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_parser = parse_averaging)]
    pub averaging: Option<Averaging>,
}

#[derive(Debug, Args)]
pub struct Pick {
    #[command(flatten)]
    pub common: Common,
    /// Shot count (default: first configured).
    #[arg(long)]
    pub shot: Option<usize>,
    /// Seed (default: first configured).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run roots to scan for `seed-*` directories.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Where to write the tables (default: the first root).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_averaging, default_value = "micro")]
    pub averaging: Averaging,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
}

fn parse_averaging(s: &str) -> std::result::Result<Averaging, String> {
    match s {
        "micro" => Ok(Averaging::Micro),
        "macro" => Ok(Averaging::Macro),
        other => Err(format!("expected `micro` or `macro`, got `{other}`")),
    }
}

impl Common {
    /// Loads the file and applies flag overrides (flag > env > file > default).
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.output_dir = resolve_output(self.output_dir.as_deref(), None, &cfg.output_dir);
        if !self.datasets.is_empty() {
            for name in &self.datasets {
                cfg.dataset(name)?;
            }
            cfg.datasets.retain(|d| self.datasets.contains(&d.name));
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.shots {
            cfg.shots = v.clone();
        }
        if let Some(v) = self.k_dev {
            cfg.k_dev = v;
        }
        if let Some(v) = &self.demos {
            cfg.demos = v.clone();
        }
        if let Some(v) = &self.batch_sizes {
            cfg.batch_sizes = v.clone();
        }
        if let Some(v) = self.epochs {
            cfg.model.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.model.learning_rate = v;
        }
        if let Some(v) = self.averaging {
            cfg.averaging = v;
        }
        cfg.validate()?;
        let missing = cfg.missing_files();
        if !missing.is_empty() {
            let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
            return Err(Error::Config(format!("missing corpus file(s): {}", list.join(", "))));
        }
        Ok(cfg)
    }
}

fn load_all(cfg: &ExperimentConfig) -> Result<Vec<Corpus>> {
    cfg.datasets.iter().map(|d| load_dataset(d).map(|(c, _)| c)).collect()
}

fn stats_row(out: &mut String, dataset: &str, s: &CorpusStats) {
    let by_type: Vec<String> = s.entities_by_type.iter().map(|(t, n)| format!("{t}={n}")).collect();
    let _ = writeln!(
        out,
        "{dataset}\t{}\t{}\t{}\t{}\t{:.3}\t{}",
        s.split,
        s.sentences,
        s.tokens,
        s.entities,
        s.mean_entities,
        by_type.join(";")
    );
}

/// Parses every dataset and writes `stats.tsv` (one row per split plus a
/// `train+dev` row) and `repairs.log` under the output root.
pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<String> {
    let mut stats = String::from("dataset\tsplit\tsentences\ttokens\tentities\tmean_entities\tby_type\n");
    let mut repairs = String::new();
    for ds in &cfg.datasets {
        let (corpus, fixed) = load_dataset(ds)?;
        for split in ["train", "dev", "test"] {
            stats_row(&mut stats, &ds.name, &corpus_stats(&corpus, split)?);
        }
        let pooled: Vec<_> = [corpus.split("train")?, corpus.split("dev")?].concat();
        stats_row(&mut stats, &ds.name, &sentence_stats("train+dev", &pooled));
        for r in fixed {
            let _ = writeln!(repairs, "{}\t{r}", ds.name);
        }
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    for (name, body) in [("stats.tsv", &stats), ("repairs.log", &repairs)] {
        let path = cfg.output_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(stats)
}

fn pick_dir(cfg: &ExperimentConfig, kind: &str, dataset: &str, shot: usize, seed: u64) -> PathBuf {
    cfg.output_dir.join(kind).join(dataset).join(shot.to_string()).join(format!("seed-{seed}"))
}

fn pick(p: &Pick) -> Result<(ExperimentConfig, Corpus, usize, u64)> {
    let cfg = p.common.resolve()?;
    let ds = cfg.datasets.first().ok_or_else(|| Error::Config("no datasets configured".into()))?;
    let (corpus, _) = load_dataset(ds)?;
    let shot = p.shot.unwrap_or(cfg.shots[0]);
    let seed = p.seed.unwrap_or(cfg.seeds[0]);
    Ok((cfg, corpus, shot, seed))
}

pub fn cmd_sample(p: &Pick) -> Result<String> {
    let (cfg, corpus, shot, seed) = pick(p)?;
    let plan = SamplePlan::new(seed, shot, cfg.k_dev);
    let sample = draw_sample(&corpus, &plan)?;
    let dir = pick_dir(&cfg, "samples", &corpus.name, shot, seed);
    let manifest = write_sample(&dir, &corpus.name, &plan, &sample)?;
    Ok(format!(
        "{}: {} train + {} dev sentences, content {}\n",
        dir.display(),
        manifest.train_ids.len(),
        manifest.dev_ids.len(),
        manifest.content_hash
    ))
}

pub fn cmd_demo(p: &Pick) -> Result<String> {
    let (cfg, corpus, shot, seed) = pick(p)?;
    let sample = draw_sample(&corpus, &SamplePlan::new(seed, shot, cfg.k_dev))?;
    let dir = pick_dir(&cfg, "demos", &corpus.name, shot, seed);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut shown = Vec::new();
    for &kind in &cfg.demos {
        let demos: Vec<_> = corpus.entity_types.iter().map(|t| select(kind, &sample.train, t, &cfg.density)).collect();
        let mut buf = Vec::new();
        write_audit(&mut buf, &demos).expect("writing to memory");
        let path = dir.join(format!("demos-{kind}.txt"));
        fs::write(&path, &buf).map_err(|e| Error::io(path, e))?;
        shown.extend(buf);
    }
    Ok(String::from_utf8(shown).expect("audit is UTF-8"))
}

/// Outcome of [`cmd_run`]: manifests in grid order plus the run root.
pub struct RunOutcome {
    pub root: PathBuf,
    pub manifests: Vec<RunManifest>,
    pub report: Report,
}

impl RunOutcome {
    pub fn failed(&self) -> usize {
        self.manifests.iter().filter(|m| m.status == RunStatus::Failed).count()
    }
}

/// Runs the grid under `<output_dir>/run-<config hash>/` and writes the
/// aggregate tables there.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let corpora = load_all(cfg)?;
    let root = cfg.output_dir.join(format!("run-{}", cfg.content_hash()));
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let path = root.join("config.toml");
    fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(path, e))?;
    let ctx = RunContext { cfg, corpora: &corpora, root: &root };
    let manifests = run_all(&ctx)?;
    let report = Report::from_manifests(
        combinations(cfg).iter().zip(&manifests).map(|(c, m)| (ctx.run_dir(c), m)),
        cfg.averaging,
    );
    report.write(&root)?;
    Ok(RunOutcome { root, manifests, report })
}

pub fn cmd_report(args: &ReportArgs) -> Result<Report> {
    let report = collect_runs(&args.dirs, args.averaging)?;
    report.write(args.out.as_deref().unwrap_or(&args.dirs[0]))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub manifest: PathBuf,
    pub file: String,
    pub problem: String,
}

/// Re-hashes every file listed by every manifest under `dirs`, and flags
/// files present on disk but absent from the manifest.
pub fn cmd_verify(dirs: &[PathBuf]) -> Result<(usize, Vec<Mismatch>)> {
    let mut manifests = Vec::new();
    for d in dirs {
        find_manifests(d, &mut manifests)?;
    }
    let mut problems = Vec::new();
    for path in &manifests {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        let dir = path.parent().expect("manifest has a parent");
        let actual = hash_files(dir)?;
        for (file, want) in &m.files {
            let problem = match actual.get(file) {
                None => Some("missing".to_string()),
                Some(got) if got != want => Some(format!("hash {got} != recorded {want}")),
                _ => None,
            };
            if let Some(problem) = problem {
                problems.push(Mismatch { manifest: path.clone(), file: file.clone(), problem });
            }
        }
        for file in actual.keys().filter(|f| !m.files.contains_key(*f)) {
            problems.push(Mismatch { manifest: path.clone(), file: file.clone(), problem: "not listed".into() });
        }
    }
    Ok((manifests.len(), problems))
}

fn find_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_manifests(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == MANIFEST) {
            out.push(p);
        }
    }
    Ok(())
}

/// Parses `args` and executes the command, printing to stdout/stderr.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn execute(command: &Command) -> Result<u8> {
    match command {
        Command::Prepare(c) => {
            print!("{}", cmd_prepare(&c.resolve()?)?);
            Ok(EXIT_OK)
        }
        Command::Sample(p) => {
            print!("{}", cmd_sample(p)?);
            Ok(EXIT_OK)
        }
        Command::Demo(p) => {
            print!("{}", cmd_demo(p)?);
            Ok(EXIT_OK)
        }
        Command::Run(c) => {
            let out = cmd_run(&c.resolve()?)?;
            print!("{}", out.report.table());
            println!("runs: {} ({} failed) under {}", out.manifests.len(), out.failed(), out.root.display());
            for m in out.manifests.iter().filter(|m| m.status == RunStatus::Failed) {
                eprintln!(
                    "failed: {}/{}/{}/seed-{}: {}",
                    m.dataset,
                    m.method,
                    m.shot,
                    m.seed,
                    m.error.as_deref().unwrap_or("")
                );
            }
            Ok(if out.failed() == 0 { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Report(args) => {
            print!("{}", cmd_report(args)?.table());
            Ok(EXIT_OK)
        }
        Command::Verify(args) => {
            let (checked, problems) = cmd_verify(&args.dirs)?;
            for p in &problems {
                println!("{}: {}: {}", p.manifest.display(), p.file, p.problem);
            }
            println!("verified {checked} manifest(s), {} problem(s)", problems.len());
            Ok(if problems.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
        }
    }
}
