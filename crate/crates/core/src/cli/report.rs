//! Aggregation of finished runs into CSV, text and plot tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{RunManifest, RunStatus, MANIFEST};
use crate::demos::DemoKind;
use crate::error::{Error, Result};
use crate::eval::{aggregate, Averaging, Prf, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

/// Grouping key; field order fixes the row order of every table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub dataset: String,
    pub demo: DemoKind,
    pub batch_size: usize,
    pub shot: usize,
}

impl GroupKey {
    pub fn method(&self) -> String {
        super::run::method_label(self.demo, self.batch_size)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    /// Per-seed scores, seeds ascending.
    pub runs: BTreeMap<GroupKey, Vec<(u64, Prf)>>,
    pub skipped: Vec<Skipped>,
}

impl Report {
    pub fn from_manifests<'a, I>(manifests: I, averaging: Averaging) -> Self
    where
        I: IntoIterator<Item = (PathBuf, &'a RunManifest)>,
    {
        let mut report = Report::default();
        for (path, m) in manifests {
            report.add(path, m, averaging);
        }
        report.finish();
        report
    }

    fn add(&mut self, path: PathBuf, m: &RunManifest, averaging: Averaging) {
        match (&m.status, &m.report) {
            (RunStatus::Ok, Some(r)) => {
                let key = GroupKey { dataset: m.dataset.clone(), demo: m.demo, batch_size: m.batch_size, shot: m.shot };
                self.runs.entry(key).or_default().push((m.seed, r.prf(averaging)));
            }
            _ => self
                .skipped
                .push(Skipped { path, reason: format!("run failed: {}", m.error.as_deref().unwrap_or("no report")) }),
        }
    }

    fn finish(&mut self) {
        for runs in self.runs.values_mut() {
            runs.sort_by_key(|(seed, _)| *seed);
        }
        self.skipped.sort_by(|a, b| a.path.cmp(&b.path));
    }

    pub fn summaries(&self) -> Vec<(&GroupKey, Summary)> {
        self.runs.iter().map(|(k, runs)| (k, aggregate(&runs.iter().map(|(_, p)| *p).collect::<Vec<_>>()))).collect()
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from("dataset,method,shot,seed,precision,recall,f1\n");
        for (k, runs) in &self.runs {
            for (seed, p) in runs {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.6},{:.6},{:.6}",
                    k.dataset,
                    k.method(),
                    k.shot,
                    seed,
                    p.precision,
                    p.recall,
                    p.f1
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "dataset,method,shot,runs,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,f1\n",
        );
        for (k, s) in self.summaries() {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                k.dataset,
                k.method(),
                k.shot,
                s.runs.len(),
                s.precision.mean,
                s.precision.std,
                s.recall.mean,
                s.recall.std,
                s.f1.mean,
                s.f1.std,
                s.f1.percent()
            );
        }
        out
    }

    /// Rows are (dataset, shot), columns are methods; cells are F1 `mean±std` in percent.
    pub fn table(&self) -> String {
        let summaries = self.summaries();
        let mut methods: Vec<(DemoKind, usize)> = summaries.iter().map(|(k, _)| (k.demo, k.batch_size)).collect();
        methods.sort();
        methods.dedup();
        let mut rows: BTreeMap<(String, usize), BTreeMap<(DemoKind, usize), String>> = BTreeMap::new();
        for (k, s) in &summaries {
            let cell = format!("{} (n={})", s.f1.percent(), s.runs.len());
            rows.entry((k.dataset.clone(), k.shot)).or_default().insert((k.demo, k.batch_size), cell);
        }

        let mut header = vec!["dataset".to_string(), "shot".to_string()];
        header.extend(methods.iter().map(|&(d, b)| super::run::method_label(d, b)));
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|((ds, shot), cells)| {
                let mut row = vec![ds.clone(), shot.to_string()];
                row.extend(methods.iter().map(|m| cells.get(m).cloned().unwrap_or_else(|| "-".into())));
                row
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| body.iter().map(|r| r[i].chars().count()).chain([header[i].chars().count()]).max().unwrap_or(0))
            .collect();
        let fmt_row = |row: &[String]| {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            cells.join("  ").trim_end().to_string()
        };

        let mut out = String::from("# F1 (%), mean±std over runs; std is the population standard deviation\n");
        out.push_str(&fmt_row(&header));
        out.push('\n');
        for row in &body {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        if !self.skipped.is_empty() {
            out.push_str("\nskipped:\n");
            for s in &self.skipped {
                let _ = writeln!(out, "  {}: {}", s.path.display(), s.reason);
            }
        }
        out
    }

    pub fn plot_tsv(&self) -> String {
        let mut out = String::from("dataset\tmethod\tdemo\tbatch_size\tshot\tf1_mean\tf1_std\n");
        for (k, s) in self.summaries() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                k.dataset,
                k.method(),
                k.demo,
                k.batch_size,
                k.shot,
                s.f1.mean,
                s.f1.std
            );
        }
        out
    }

    /// Writes `runs.csv`, `summary.csv`, `table.txt` and `plot_data.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("runs.csv", self.runs_csv()),
            ("summary.csv", self.summary_csv()),
            ("table.txt", self.table()),
            ("plot_data.tsv", self.plot_tsv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn scan(dir: &Path, found: &mut Vec<PathBuf>, skipped: &mut Vec<Skipped>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort();
    let is_run = dir.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed-"));
    if is_run {
        let manifest = dir.join(MANIFEST);
        if manifest.is_file() {
            found.push(manifest);
        } else {
            skipped.push(Skipped { path: dir.to_path_buf(), reason: format!("missing {MANIFEST}") });
        }
        return Ok(());
    }
    for path in entries {
        if path.is_dir() {
            scan(&path, found, skipped)?;
        }
    }
    Ok(())
}

/// Finds run directories (`seed-*`) under each root and reads their
/// manifests; unreadable or incomplete runs are listed as skipped.
pub fn collect_runs(roots: &[PathBuf], averaging: Averaging) -> Result<Report> {
    let mut found = Vec::new();
    let mut skipped = Vec::new();
    for root in roots {
        if !root.is_dir() {
            return Err(Error::io(root, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
        }
        scan(root, &mut found, &mut skipped)?;
    }
    let mut manifests = Vec::new();
    for path in found {
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|text| serde_json::from_str::<RunManifest>(&text).map_err(|e| e.to_string()));
        match parsed {
            Ok(m) => manifests.push((path, m)),
            Err(reason) => skipped.push(Skipped { path, reason: format!("malformed {MANIFEST}: {reason}") }),
        }
    }
    if manifests.is_empty() {
        let listed: Vec<String> = skipped.iter().map(|s| format!("{} ({})", s.path.display(), s.reason)).collect();
        return Err(Error::Config(format!("no readable run manifests found; skipped: [{}]", listed.join(", "))));
    }
    let mut report = Report::from_manifests(manifests.iter().map(|(p, m)| (p.clone(), m)), averaging);
    report.skipped.extend(skipped);
    report.finish();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::DensityConfig;
    use crate::eval::{Counts, EvalReport};
    use crate::model::ModelConfig;

    fn manifest(demo: DemoKind, seed: u64, tp: usize, fp: usize, fn_: usize) -> RunManifest {
        let counts = Counts { tp, fp, fn_ };
        RunManifest {
            dataset: "toy".into(),
            entity_types: vec!["C".into()],
            method: super::super::run::method_label(demo, 1),
            demo,
            batch_size: 1,
            shot: 25,
            seed,
            k_dev: 100,
            status: RunStatus::Ok,
            error: None,
            report: Some(EvalReport { per_type: [("C".to_string(), counts)].into(), micro: counts }),
            best_epoch: Some(1),
            model: ModelConfig::default(),
            density: DensityConfig::default(),
            optimizer: String::new(),
            config_hash: String::new(),
            version: String::new(),
            files: BTreeMap::new(),
        }
    }

    #[test]
    fn single_run_is_one_row() {
        let m = manifest(DemoKind::Grape, 1, 3, 1, 1);
        let r = Report::from_manifests([(PathBuf::from("a"), &m)], Averaging::Micro);
        assert_eq!(r.summary_csv().lines().count(), 2);
        let table = r.table();
        assert!(table.contains("75.0±0.0 (n=1)"), "{table}");
    }

    #[test]
    fn demo_kinds_become_columns() {
        let ms = [manifest(DemoKind::Grape, 1, 3, 1, 1), manifest(DemoKind::None, 1, 1, 1, 3)];
        let r = Report::from_manifests(ms.iter().map(|m| (PathBuf::from("x"), m)), Averaging::Micro);
        let table = r.table();
        let header = table.lines().nth(1).unwrap();
        assert!(header.contains("mrc-grape") && header.contains("mrc-none"), "{table}");
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn failed_runs_are_skipped() {
        let mut m = manifest(DemoKind::Grape, 2, 0, 0, 0);
        m.status = RunStatus::Failed;
        m.report = None;
        m.error = Some("boom".into());
        let ok = manifest(DemoKind::Grape, 1, 1, 0, 0);
        let r = Report::from_manifests([(PathBuf::from("b"), &m), (PathBuf::from("a"), &ok)], Averaging::Micro);
        assert_eq!(r.skipped.len(), 1);
        assert!(r.table().contains("run failed: boom"));
    }

    #[test]
    fn malformed_and_missing_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("toy/mrc-grape/25/seed-1");
        fs::create_dir_all(&good).unwrap();
        fs::write(good.join(MANIFEST), serde_json::to_string(&manifest(DemoKind::Grape, 1, 1, 0, 0)).unwrap()).unwrap();
        let bad = dir.path().join("toy/mrc-grape/25/seed-2");
        fs::create_dir_all(&bad).unwrap();
        fs::write(bad.join(MANIFEST), "{not json").unwrap();
        fs::create_dir_all(dir.path().join("toy/mrc-grape/25/seed-3")).unwrap();
        let r = collect_runs(&[dir.path().to_path_buf()], Averaging::Micro).unwrap();
        assert_eq!(r.runs.values().map(Vec::len).sum::<usize>(), 1);
        assert_eq!(r.skipped.len(), 2);
        assert!(r.skipped.iter().any(|s| s.reason.starts_with("malformed")));
        assert!(r.skipped.iter().any(|s| s.reason.starts_with("missing")));
    }

    #[test]
    fn nothing_found_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(collect_runs(&[dir.path().to_path_buf()], Averaging::Micro).is_err());
    }
}
