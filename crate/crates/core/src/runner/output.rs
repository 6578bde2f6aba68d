use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{Experiment, Outcome, RealizationResult};
use super::{derived_params, DerivedParams, ExperimentConfig, Precision};
use crate::error::{Error, Result};
use crate::qkd::{CrosstalkMatrix, ExperimentRecord};
use crate::scalar::Real;

/// Number of QBER histogram bins over `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; the result is identical for any value.
    pub threads: Option<usize>,
}

/// Mean, standard error and histogram of one set of records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean_q: f64,
    /// Undefined for a single record.
    pub se_q: Option<f64>,
    pub mean_r: f64,
    pub se_r: Option<f64>,
    pub mean_q_oam: f64,
    pub mean_q_ang: f64,
    pub histogram: Vec<usize>,
}

fn mean_se(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, None);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Counts of `values` in `bins` equal bins over `[0, 1]`; 1 falls in the last.
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for &v in values {
        let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

/// Per-point statistics; `se` is the sample standard deviation over `√M`
/// and is NaN for fewer than two records.
pub fn summarize(records: &[ExperimentRecord]) -> Summary {
    let q: Vec<f64> = records.iter().map(|r| r.q).collect();
    let r: Vec<f64> = records.iter().map(|r| r.r_min).collect();
    let (mean_q, se_q) = mean_se(&q);
    let (mean_r, se_r) = mean_se(&r);
    let n = records.len().max(1) as f64;
    Summary {
        n: records.len(),
        mean_q,
        se_q,
        mean_r,
        se_r,
        mean_q_oam: records.iter().map(|r| r.q_oam).sum::<f64>() / n,
        mean_q_ang: records.iter().map(|r| r.q_ang).sum::<f64>() / n,
        histogram: histogram(&q, HISTOGRAM_BINS),
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    i: u64,
    t: f64,
    #[serde(rename = "Q_oam")]
    q_oam: f64,
    #[serde(rename = "Q_ang")]
    q_ang: f64,
    #[serde(rename = "Q")]
    q: f64,
    r_min: f64,
    captured_energy: f64,
    residues: usize,
}

impl From<&ExperimentRecord> for Row {
    fn from(r: &ExperimentRecord) -> Self {
        Row {
            i: r.i,
            t: r.t,
            q_oam: r.q_oam,
            q_ang: r.q_ang,
            q: r.q,
            r_min: r.r_min,
            captured_energy: r.mean_captured(),
            residues: r.residues,
        }
    }
}

/// Reads `records.csv`; the per-state captured energies come back as their
/// single logged mean.
pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize::<Row>()
        .enumerate()
        .map(|(k, row)| {
            let row = row.map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), k + 1)))?;
            Ok(ExperimentRecord {
                i: row.i,
                t: row.t,
                q_oam: row.q_oam,
                q_ang: row.q_ang,
                q: row.q,
                r_min: row.r_min,
                captured_energy: vec![row.captured_energy],
                residues: row.residues,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct DegenerateRow {
    i: u64,
    t: f64,
    reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub summary: Option<Summary>,
    pub degenerate: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointReport {
    pub label: Option<String>,
    pub value: Option<f64>,
    pub derived: DerivedParams,
    pub variants: Vec<VariantReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub master_seed: u64,
    pub status: String,
    pub config: ExperimentConfig,
    pub points: Vec<PointReport>,
}

struct Layout {
    root: PathBuf,
    names: Vec<String>,
    split: bool,
}

impl Layout {
    fn variant_dir(&self, v: usize) -> PathBuf {
        if self.split {
            self.root.join(&self.names[v])
        } else {
            self.root.clone()
        }
    }

    fn point_dir(&self, v: usize, label: &Option<String>) -> PathBuf {
        match label {
            Some(l) => self.variant_dir(v).join(l),
            None => self.variant_dir(v),
        }
    }
}

fn manifest_path(root: &Path) -> PathBuf {
    root.join("run.json")
}

fn write_manifest(root: &Path, report: &RunReport) -> Result<()> {
    let tmp = root.join("run.json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(report).map_err(|e| Error::Parse(e.to_string()))?)?;
    fs::rename(tmp, manifest_path(root))?;
    Ok(())
}

fn read_progress(dir: &Path) -> u64 {
    fs::read_to_string(dir.join("progress"))
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

fn write_progress(dir: &Path, done: u64) -> Result<()> {
    let tmp = dir.join("progress.tmp");
    fs::write(&tmp, format!("{done}\n"))?;
    fs::rename(tmp, dir.join("progress"))?;
    Ok(())
}

/// Keeps only rows of realizations below `keep`, dropping anything a crash
/// left half-written.
fn truncate_csv<R: Serialize + for<'de> Deserialize<'de>>(path: &Path, keep: impl Fn(&R) -> bool) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let rows: Vec<R> = {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
        r.deserialize::<R>().filter_map(|row| row.ok()).filter(|row| keep(row)).collect()
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    for row in &rows {
        w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

struct PointWriter {
    dir: PathBuf,
    records: csv::Writer<BufWriter<File>>,
    degenerate: csv::Writer<BufWriter<File>>,
    matrices: bool,
    frames: u64,
}

impl PointWriter {
    fn open(dir: PathBuf, resume_from: u64, matrices: bool, frames: u64) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        if matrices {
            fs::create_dir_all(dir.join("crosstalk"))?;
        }
        if resume_from > 0 {
            truncate_csv::<Row>(&dir.join("records.csv"), |r| r.i < resume_from)?;
            truncate_csv::<DegenerateRow>(&dir.join("degenerate.csv"), |r| r.i < resume_from)?;
        }
        let open = |name: &str, header: &[&str]| -> Result<csv::Writer<BufWriter<File>>> {
            let path = dir.join(name);
            let append = resume_from > 0 && path.exists();
            let f = fs::OpenOptions::new().create(true).append(append).write(true).truncate(!append).open(&path)?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(f));
            if !append {
                w.write_record(header).map_err(|e| Error::Parse(e.to_string()))?;
            }
            Ok(w)
        };
        let records = open("records.csv", &["i", "t", "Q_oam", "Q_ang", "Q", "r_min", "captured_energy", "residues"])?;
        let degenerate = open("degenerate.csv", &["i", "t", "reason"])?;
        Ok(Self { dir, records, degenerate, matrices, frames })
    }

    fn write_matrix(&self, m: &CrosstalkMatrix, frame: u64) -> Result<()> {
        let stem = if m.basis == crate::qkd::Basis::Oam { "oam" } else { "ang" };
        let name = if self.frames > 1 {
            format!("{stem}_{}_{frame}.csv", m.realization)
        } else {
            format!("{stem}_{}.csv", m.realization)
        };
        m.write_csv(BufWriter::new(File::create(self.dir.join("crosstalk").join(name))?))
    }

    fn write(&mut self, outcomes: &[Outcome]) -> Result<()> {
        for (frame, o) in outcomes.iter().enumerate() {
            match o {
                Outcome::Scored { record, oam, ang } => {
                    self.records.serialize(Row::from(record)).map_err(|e| Error::Parse(e.to_string()))?;
                    if self.matrices {
                        self.write_matrix(oam, frame as u64)?;
                        self.write_matrix(ang, frame as u64)?;
                    }
                }
                Outcome::Degenerate { i, t, reason } => {
                    self.degenerate
                        .serialize(DegenerateRow { i: *i, t: *t, reason: reason.clone() })
                        .map_err(|e| Error::Parse(e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.records.flush()?;
        self.degenerate.flush()?;
        Ok(())
    }
}

fn count_degenerate(dir: &Path) -> usize {
    csv::Reader::from_path(dir.join("degenerate.csv"))
        .map(|mut r| r.records().count())
        .unwrap_or(0)
}

fn run_point<T: Real>(
    cfg: &ExperimentConfig,
    layout: &Layout,
    label: &Option<String>,
    pool: &rayon::ThreadPool,
    batch: usize,
) -> Result<()> {
    let progress_dir = layout.point_dir(0, label);
    fs::create_dir_all(&progress_dir)?;
    let total = cfg.run.realizations;
    let start = read_progress(&progress_dir).min(total);
    if start == total && progress_dir.join("records.csv").exists() {
        return Ok(());
    }
    let exp = Experiment::<T>::new(cfg)?;
    let matrices = cfg.output.wants("matrices");
    let frames = cfg.run.frames();
    let mut writers = (0..layout.names.len())
        .map(|v| PointWriter::open(layout.point_dir(v, label), start, matrices, frames))
        .collect::<Result<Vec<_>>>()?;
    let mut next = start;
    while next < total {
        let end = (next + batch as u64).min(total);
        let results: Vec<Result<RealizationResult>> =
            pool.install(|| (next..end).into_par_iter().map(|i| exp.run_realization(i)).collect());
        for r in results {
            let r = r?;
            for (w, outcomes) in writers.iter_mut().zip(&r.per_variant) {
                w.write(outcomes)?;
            }
        }
        for w in &mut writers {
            w.flush()?;
        }
        next = end;
        write_progress(&progress_dir, next)?;
    }
    Ok(())
}

fn point_report(cfg: &ExperimentConfig, layout: &Layout, label: &Option<String>, value: Option<f64>) -> Result<PointReport> {
    let derived = derived_params(&cfg.turbulence, &cfg.ao)?;
    let mut variants = Vec::new();
    for (v, name) in layout.names.iter().enumerate() {
        let dir = layout.point_dir(v, label);
        let path = dir.join("records.csv");
        let summary = if path.exists() {
            let recs = read_records(&path)?;
            (!recs.is_empty()).then(|| summarize(&recs))
        } else {
            None
        };
        if let Some(s) = &summary {
            let mut w = csv::Writer::from_path(dir.join("histogram.csv")).map_err(|e| Error::Parse(e.to_string()))?;
            w.write_record(["bin_lo", "bin_hi", "count"]).map_err(|e| Error::Parse(e.to_string()))?;
            for (b, c) in s.histogram.iter().enumerate() {
                let lo = b as f64 / HISTOGRAM_BINS as f64;
                let hi = (b + 1) as f64 / HISTOGRAM_BINS as f64;
                w.write_record([lo.to_string(), hi.to_string(), c.to_string()]).map_err(|e| Error::Parse(e.to_string()))?;
            }
            w.flush()?;
        }
        variants.push(VariantReport { name: name.clone(), summary, degenerate: count_degenerate(&dir) });
    }
    Ok(PointReport { label: label.clone(), value, derived, variants })
}

fn write_sweep_tables(cfg: &ExperimentConfig, layout: &Layout, points: &[PointReport]) -> Result<()> {
    if cfg.run.sweep.is_none() {
        return Ok(());
    }
    for v in 0..layout.names.len() {
        let mut w = csv::Writer::from_path(layout.variant_dir(v).join("sweep.csv")).map_err(|e| Error::Parse(e.to_string()))?;
        w.write_record(["axis", "mean_Q", "se_Q", "mean_r", "se_r"]).map_err(|e| Error::Parse(e.to_string()))?;
        for p in points {
            if let Some(s) = &p.variants[v].summary {
                let value = p.value.unwrap_or(f64::NAN);
                let se = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                w.write_record([value.to_string(), s.mean_q.to_string(), se(s.se_q), s.mean_r.to_string(), se(s.se_r)])
                    .map_err(|e| Error::Parse(e.to_string()))?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn layout_for(cfg: &ExperimentConfig, root: &Path) -> Layout {
    let names: Vec<String> = cfg.scoring_variants().into_iter().map(|v| v.name).collect();
    Layout { root: root.to_path_buf(), split: names.len() > 1, names }
}

fn report(cfg: &ExperimentConfig, layout: &Layout, status: &str) -> Result<RunReport> {
    let points = cfg
        .points()?
        .into_iter()
        .map(|(label, value, pc)| point_report(&pc, layout, &label, label.as_ref().map(|_| value)))
        .collect::<Result<Vec<_>>>()?;
    write_sweep_tables(cfg, layout, &points)?;
    Ok(RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        master_seed: cfg.run.master_seed,
        status: status.into(),
        config: cfg.clone(),
        points,
    })
}

/// Runs every sweep point and variant into `root`, streaming records as
/// realizations complete. A directory holding an interrupted run of the
/// same configuration is resumed; one holding a different run is refused.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(root)?;
    if let Ok(text) = fs::read_to_string(manifest_path(root)) {
        let prev: RunReport = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("run.json: {e}")))?;
        if &prev.config != cfg {
            return Err(Error::Config(format!("{} holds a different run; choose another output directory", root.display())));
        }
    }
    let layout = layout_for(cfg, root);
    let json = cfg.output.wants("json");
    let mut pending = RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        master_seed: cfg.run.master_seed,
        status: "running".into(),
        config: cfg.clone(),
        points: Vec::new(),
    };
    // the manifest is what identifies a resumable directory
    write_manifest(root, &pending)?;
    let threads = opts.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let batch = (2 * threads).max(1);
    for (label, _, pc) in cfg.points()? {
        match cfg.grid.precision {
            Precision::F64 => run_point::<f64>(&pc, &layout, &label, &pool, batch)?,
            Precision::F32 => run_point::<f32>(&pc, &layout, &label, &pool, batch)?,
        }
    }
    pending = report(cfg, &layout, "complete")?;
    if json {
        write_manifest(root, &pending)?;
    } else {
        fs::remove_file(manifest_path(root)).ok();
    }
    Ok(pending)
}

/// Recomputes summaries (and `sweep.csv`) from a finished run directory.
pub fn summarize_dir(root: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(manifest_path(root))
        .map_err(|e| Error::Config(format!("{}: no run.json ({e})", root.display())))?;
    let prev: RunReport = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("run.json: {e}")))?;
    let layout = layout_for(&prev.config, root);
    report(&prev.config, &layout, &prev.status)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(q: f64) -> ExperimentRecord {
        ExperimentRecord { i: 0, t: 0.0, q_oam: q, q_ang: q, q, r_min: 1.0 - q, captured_energy: vec![1.0], residues: 0 }
    }

    #[test]
    fn constant_records_have_zero_error() {
        let s = summarize(&vec![rec(0.3); 10]);
        assert!(s.se_q.unwrap().abs() < 1e-15);
        assert!((s.mean_q - 0.3).abs() < 1e-15);
        assert_eq!(s.histogram[6], 10);
    }

    #[test]
    fn standard_error_scales_with_count() {
        let a: Vec<_> = (0..100).map(|k| rec(if k % 2 == 0 { 0.2 } else { 0.4 })).collect();
        let b: Vec<_> = (0..400).map(|k| rec(if k % 2 == 0 { 0.2 } else { 0.4 })).collect();
        let ratio = summarize(&a).se_q.unwrap() / summarize(&b).se_q.unwrap();
        assert!((ratio - 2.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(histogram(&[0.0, 1.0, 0.05, 0.999], 20), {
            let mut h = vec![0; 20];
            h[0] = 1;
            h[1] = 1;
            h[19] = 2;
            h
        });
    }
}
