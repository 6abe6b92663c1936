//! Monte Carlo evaluation: accuracy against SNR, boxplot statistics over
//! runs, confusion matrices and classification timing.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{train_classifier, ClassifierSpec, TrainedClassifier, DEFAULT_SNR_GRID_DB};
use crate::error::{Error, Result};
use crate::noise::{add_noise, NoiseSpec};
use crate::seed;
use crate::signatures::{restrict_azimuth, Dataset, RcsSignature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AzimuthWindow {
    pub center_deg: f64,
    pub half_width_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub classifiers: Vec<ClassifierSpec>,
    pub snr_grid_db: Vec<f64>,
    pub runs: usize,
    pub tests_per_class: usize,
    /// Applied to test signatures only; classifiers always train on full
    /// azimuth.
    pub azimuth_window: Option<AzimuthWindow>,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            classifiers: ClassifierSpec::all_default(),
            snr_grid_db: DEFAULT_SNR_GRID_DB.to_vec(),
            runs: 10,
            tests_per_class: 50,
            azimuth_window: None,
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classifiers.is_empty() {
            return Err(Error::Validation("experiment has no classifiers".into()));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation(
                "SNR grid must be non-empty and finite".into(),
            ));
        }
        if self.runs == 0 || self.tests_per_class == 0 {
            return Err(Error::Validation(
                "runs and tests_per_class must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Classifier names, suffixed with their position when repeated.
    pub fn labels(&self) -> Vec<String> {
        let names: Vec<&str> = self.classifiers.iter().map(|c| c.name()).collect();
        names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if names.iter().filter(|m| *m == n).count() > 1 {
                    format!("{n}#{i}")
                } else {
                    n.to_string()
                }
            })
            .collect()
    }
}

/// Noisy test signatures for one (run, SNR) cell, `tests_per_class` per
/// class in class order. Seeds depend on the run, the SNR value, the class
/// and the test index only, so every classifier sees the same draws.
pub fn test_signatures(
    dataset: &Dataset,
    snr_db: f64,
    run: usize,
    tests_per_class: usize,
    window: Option<AzimuthWindow>,
    seed_: u64,
) -> Result<Vec<(usize, RcsSignature)>> {
    let root = seed::derive_label(seed_, "test-noise");
    let mut out = Vec::with_capacity(dataset.num_classes() * tests_per_class);
    for (ci, class) in dataset.class_names().iter().enumerate() {
        let clean: Vec<RcsSignature> = dataset
            .signatures_of(class)
            .map(|s| match window {
                Some(w) => restrict_azimuth(s, w.center_deg, w.half_width_deg),
                None => Ok(s.clone()),
            })
            .collect::<Result<_>>()?;
        for j in 0..tests_per_class {
            let spec = NoiseSpec::new(
                snr_db,
                seed::derive(root, &[run as u64, snr_db.to_bits(), ci as u64, j as u64]),
            )?;
            out.push((ci, add_noise(&clean[j % clean.len()], &spec)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values inside the 1.5·IQR fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile on sorted data, position (n − 1)·p.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(Error::Validation("boxplot of an empty sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (
        quantile_sorted(&v, 0.25),
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.75),
    );
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v
        .iter()
        .copied()
        .filter(|x| (lo_fence..=hi_fence).contains(x))
        .collect();
    Ok(BoxplotStats {
        min: v[0],
        q1,
        median,
        q3,
        max: v[v.len() - 1],
        whisker_low: inside.first().copied().unwrap_or(median),
        whisker_high: inside.last().copied().unwrap_or(median),
        outliers: v
            .iter()
            .copied()
            .filter(|x| !(lo_fence..=hi_fence).contains(x))
            .collect(),
    })
}

/// One (classifier, SNR, run) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub classifier: String,
    pub snr_db: f64,
    pub run: usize,
    /// `confusion[true][predicted]`; empty when the cell failed.
    pub confusion: Vec<Vec<u64>>,
    pub error: Option<String>,
    pub classifications: u64,
    pub total_ms_sum: f64,
    pub total_ms_sumsq: f64,
    pub extraction_ms_sum: f64,
    pub prediction_ms_sum: f64,
}

impl CellResult {
    pub fn accuracy(&self) -> Option<f64> {
        if self.error.is_some() {
            return None;
        }
        let total: u64 = self.confusion.iter().flatten().sum();
        let diag: u64 = (0..self.confusion.len())
            .map(|i| self.confusion[i][i])
            .sum();
        (total > 0).then(|| diag as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub classifier: String,
    pub snr_db: f64,
    pub mean_accuracy: f64,
    /// Sample standard deviation over successful runs (0 for one run).
    pub std_accuracy: f64,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub boxplot: Option<BoxplotStats>,
    /// Summed over successful runs.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub classifier: String,
    pub mode: String,
    pub extraction_ms: f64,
    pub prediction_ms: f64,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: Option<f64>,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub classifiers: Vec<String>,
    pub snr_grid_db: Vec<f64>,
    pub runs: usize,
    pub tests_per_class: usize,
    pub azimuth_window: Option<AzimuthWindow>,
    pub seed: u64,
    pub training_errors: Vec<(String, String)>,
    pub summaries: Vec<SnrSummary>,
    pub cells: Vec<CellResult>,
    pub timing: Vec<TimingRow>,
}

impl EvalReport {
    pub fn summary(&self, classifier: &str, snr_db: f64) -> Option<&SnrSummary> {
        self.summaries
            .iter()
            .find(|s| s.classifier == classifier && s.snr_db == snr_db)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn run_cell(
    clf: &TrainedClassifier,
    tests: &[(usize, RcsSignature)],
    m: usize,
) -> Result<CellResult> {
    let mut cell = CellResult {
        classifier: String::new(),
        snr_db: 0.0,
        run: 0,
        confusion: vec![vec![0; m]; m],
        error: None,
        classifications: 0,
        total_ms_sum: 0.0,
        total_ms_sumsq: 0.0,
        extraction_ms_sum: 0.0,
        prediction_ms_sum: 0.0,
    };
    for (truth, sig) in tests {
        let (pred, t) = clf.classify_timed(sig)?;
        let p = clf
            .classes
            .iter()
            .position(|c| *c == pred.class)
            .ok_or_else(|| {
                Error::InvalidModel(format!("predicted unknown class `{}`", pred.class))
            })?;
        cell.confusion[*truth][p] += 1;
        let (e, pr) = (
            t.extraction.as_secs_f64() * 1e3,
            t.prediction.as_secs_f64() * 1e3,
        );
        cell.classifications += 1;
        cell.extraction_ms_sum += e;
        cell.prediction_ms_sum += pr;
        cell.total_ms_sum += e + pr;
        cell.total_ms_sumsq += (e + pr) * (e + pr);
    }
    Ok(cell)
}

/// Trains every classifier once, then classifies fresh noisy test sets for
/// each (run, SNR). Failures are recorded per cell; outcomes are a function
/// of the spec and dataset only.
pub fn run_experiment(dataset: &Dataset, spec: &ExperimentSpec) -> Result<EvalReport> {
    spec.validate()?;
    let labels = spec.labels();
    let m = dataset.num_classes();
    let train_seed = seed::derive_label(spec.seed, "train");
    let trained: Vec<std::result::Result<TrainedClassifier, String>> = spec
        .classifiers
        .par_iter()
        .map(|c| train_classifier(dataset, c, train_seed).map_err(|e| e.to_string()))
        .collect();
    let test_seed = seed::derive_label(spec.seed, "test");
    let mut test_sets = Vec::new();
    for &snr in &spec.snr_grid_db {
        for run in 0..spec.runs {
            test_sets.push((
                snr,
                run,
                test_signatures(
                    dataset,
                    snr,
                    run,
                    spec.tests_per_class,
                    spec.azimuth_window,
                    test_seed,
                )?,
            ));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..labels.len())
        .flat_map(|ci| (0..test_sets.len()).map(move |ti| (ci, ti)))
        .collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(ci, ti)| {
            let (snr, run, tests) = &test_sets[ti];
            let outcome = match &trained[ci] {
                Ok(clf) => run_cell(clf, tests, m).map_err(|e| e.to_string()),
                Err(e) => Err(format!("training failed: {e}")),
            };
            let mut cell = outcome.unwrap_or_else(|e| CellResult {
                classifier: String::new(),
                snr_db: 0.0,
                run: 0,
                confusion: Vec::new(),
                error: Some(e),
                classifications: 0,
                total_ms_sum: 0.0,
                total_ms_sumsq: 0.0,
                extraction_ms_sum: 0.0,
                prediction_ms_sum: 0.0,
            });
            cell.classifier = labels[ci].clone();
            cell.snr_db = *snr;
            cell.run = *run;
            cell
        })
        .collect();
    let mut summaries = Vec::new();
    let mut timing = Vec::new();
    for label in &labels {
        let mine: Vec<&CellResult> = cells.iter().filter(|c| &c.classifier == label).collect();
        for &snr in &spec.snr_grid_db {
            let at: Vec<&&CellResult> = mine.iter().filter(|c| c.snr_db == snr).collect();
            let accs: Vec<f64> = at.iter().filter_map(|c| c.accuracy()).collect();
            let n = accs.len() as f64;
            let mean = if accs.is_empty() {
                f64::NAN
            } else {
                accs.iter().sum::<f64>() / n
            };
            let std = if accs.len() > 1 {
                (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let mut confusion = vec![vec![0u64; m]; m];
            for c in at.iter().filter(|c| c.error.is_none()) {
                for (row, crow) in confusion.iter_mut().zip(&c.confusion) {
                    for (x, y) in row.iter_mut().zip(crow) {
                        *x += y;
                    }
                }
            }
            summaries.push(SnrSummary {
                classifier: label.clone(),
                snr_db: snr,
                mean_accuracy: mean,
                std_accuracy: std,
                runs_ok: accs.len(),
                runs_failed: at.len() - accs.len(),
                boxplot: boxplot_stats(&accs).ok(),
                confusion,
            });
        }
        let k: u64 = mine.iter().map(|c| c.classifications).sum();
        if k > 0 {
            let kf = k as f64;
            let mean = mine.iter().map(|c| c.total_ms_sum).sum::<f64>() / kf;
            let sumsq = mine.iter().map(|c| c.total_ms_sumsq).sum::<f64>();
            let var = if k > 1 {
                ((sumsq - kf * mean * mean) / (kf - 1.0)).max(0.0)
            } else {
                0.0
            };
            timing.push(TimingRow {
                classifier: label.clone(),
                mode: "classify".into(),
                extraction_ms: mine.iter().map(|c| c.extraction_ms_sum).sum::<f64>() / kf,
                prediction_ms: mine.iter().map(|c| c.prediction_ms_sum).sum::<f64>() / kf,
                mean_ms: mean,
                std_ms: var.sqrt(),
                median_ms: None,
                samples: k,
            });
        }
    }
    Ok(EvalReport {
        classes: dataset.class_names().to_vec(),
        classifiers: labels.clone(),
        snr_grid_db: spec.snr_grid_db.clone(),
        runs: spec.runs,
        tests_per_class: spec.tests_per_class,
        azimuth_window: spec.azimuth_window,
        seed: spec.seed,
        training_errors: labels
            .iter()
            .zip(&trained)
            .filter_map(|(l, t)| t.as_ref().err().map(|e| (l.clone(), e.clone())))
            .collect(),
        summaries,
        cells,
        timing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    /// Prediction on a trained model (plus feature extraction for ML).
    Classify,
    /// SL classifiers refit their class densities on the training data for
    /// every classified signature; ML classifiers still only predict.
    Refit,
}

/// Per-signature classification time, single threaded. One warm-up pass,
/// then `repetitions` timed passes over `tests`; mean, std and median are
/// over the per-pass averages.
pub fn benchmark_timing(
    classifiers: &[TrainedClassifier],
    tests: &[RcsSignature],
    repetitions: usize,
    mode: TimingMode,
    training: &Dataset,
    seed_: u64,
) -> Result<Vec<TimingRow>> {
    if repetitions < 3 {
        return Err(Error::Validation(format!(
            "timing needs at least 3 repetitions, got {repetitions}"
        )));
    }
    if tests.is_empty() {
        return Err(Error::Validation(
            "timing needs at least one test signature".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    pool.install(|| {
        classifiers
            .iter()
            .map(|clf| {
                let refit = mode == TimingMode::Refit && clf.spec.is_sl();
                let one = |sig: &RcsSignature| -> Result<(f64, f64)> {
                    if refit {
                        let t = Instant::now();
                        let fresh = train_classifier(training, &clf.spec, seed_)?;
                        fresh.classify(sig)?;
                        Ok((0.0, t.elapsed().as_secs_f64() * 1e3))
                    } else {
                        let (_, t) = clf.classify_timed(sig)?;
                        Ok((
                            t.extraction.as_secs_f64() * 1e3,
                            t.prediction.as_secs_f64() * 1e3,
                        ))
                    }
                };
                for sig in tests {
                    one(sig)?;
                }
                let mut per_pass = Vec::with_capacity(repetitions);
                let (mut ext, mut pred) = (0.0, 0.0);
                for _ in 0..repetitions {
                    let mut sum = 0.0;
                    for sig in tests {
                        let (e, p) = one(sig)?;
                        ext += e;
                        pred += p;
                        sum += e + p;
                    }
                    per_pass.push(sum / tests.len() as f64);
                }
                let n = per_pass.len() as f64;
                let mean = per_pass.iter().sum::<f64>() / n;
                let std =
                    (per_pass.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let mut sorted = per_pass.clone();
                sorted.sort_by(f64::total_cmp);
                let k = (repetitions * tests.len()) as f64;
                Ok(TimingRow {
                    classifier: clf.spec.name().to_string(),
                    mode: if refit { "refit" } else { "classify" }.into(),
                    extraction_ms: ext / k,
                    prediction_ms: pred / k,
                    mean_ms: mean,
                    std_ms: std,
                    median_ms: Some(quantile_sorted(&sorted, 0.5)),
                    samples: (repetitions * tests.len()) as u64,
                })
            })
            .collect()
    })
}

fn snr_tag(snr: f64) -> String {
    format!("{snr}")
}

/// `classifier,snr_db,mean_accuracy,std_accuracy,runs_ok,runs_failed`
pub fn write_accuracy_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "classifier",
        "snr_db",
        "mean_accuracy",
        "std_accuracy",
        "runs_ok",
        "runs_failed",
    ])?;
    for s in &report.summaries {
        w.write_record([
            s.classifier.clone(),
            snr_tag(s.snr_db),
            s.mean_accuracy.to_string(),
            s.std_accuracy.to_string(),
            s.runs_ok.to_string(),
            s.runs_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Outliers are `;`-separated in one column.
pub fn write_boxplot_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "classifier",
        "snr_db",
        "min",
        "q1",
        "median",
        "q3",
        "max",
        "whisker_low",
        "whisker_high",
        "outliers",
    ])?;
    for s in &report.summaries {
        let Some(b) = &s.boxplot else { continue };
        let outliers: Vec<String> = b.outliers.iter().map(|o| o.to_string()).collect();
        let mut rec = vec![s.classifier.clone(), snr_tag(s.snr_db)];
        rec.extend(
            [
                b.min,
                b.q1,
                b.median,
                b.q3,
                b.max,
                b.whisker_low,
                b.whisker_high,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        rec.push(outliers.join(";"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn confusion_file_name(classifier: &str, snr_db: f64) -> String {
    format!(
        "confusion_{}_{}.csv",
        classifier.replace(['/', '#'], "_"),
        snr_tag(snr_db)
    )
}

/// One file per (classifier, SNR); rows are true classes.
pub fn write_confusion_csvs(report: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    for s in &report.summaries {
        let mut w = csv::Writer::from_path(
            dir.as_ref()
                .join(confusion_file_name(&s.classifier, s.snr_db)),
        )?;
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(report.classes.iter().cloned());
        w.write_record(&header)?;
        for (class, row) in report.classes.iter().zip(&s.confusion) {
            let mut rec = vec![class.clone()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// `classifier,mode,extraction_ms,prediction_ms,mean_ms,std_ms,median_ms,samples`
pub fn write_timing_csv(rows: &[TimingRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "classifier",
        "mode",
        "extraction_ms",
        "prediction_ms",
        "mean_ms",
        "std_ms",
        "median_ms",
        "samples",
    ])?;
    for r in rows {
        w.write_record([
            r.classifier.clone(),
            r.mode.clone(),
            r.extraction_ms.to_string(),
            r.prediction_ms.to_string(),
            r.mean_ms.to_string(),
            r.std_ms.to_string(),
            r.median_ms.map_or(String::new(), |m| m.to_string()),
            r.samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Every report artifact in `dir`: the accuracy, boxplot, confusion and
/// timing CSVs and `report.json`.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_accuracy_csv(report, dir.join("accuracy_vs_snr.csv"))?;
    write_boxplot_csv(report, dir.join("boxplot.csv"))?;
    write_confusion_csvs(report, dir)?;
    write_timing_csv(&report.timing, dir.join("timing.csv"))?;
    std::fs::write(dir.join("report.json"), report.to_json()?)?;
    Ok(())
}
