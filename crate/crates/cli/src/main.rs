//! `rcsclass`: synthetic fleet generation, training, classification,
//! Monte Carlo sweeps, timing, scalograms and hyperparameter search.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use rcsclass_core::classifier::{
    train_classifier, training_signatures, ClassifierSpec, TrainedClassifier, TrainingData,
};
use rcsclass_core::cwt;
use rcsclass_core::eval::{self, AzimuthWindow, ExperimentSpec, TimingMode};
use rcsclass_core::features::{extract_features, FeatureScale};
use rcsclass_core::gmm::AicPenalty;
use rcsclass_core::hyperopt::{self, OptConfig};
use rcsclass_core::ml_classifiers::{MlFamily, MlHyperparams};
use rcsclass_core::noise::{add_noise, NoiseSpec};
use rcsclass_core::seed;
use rcsclass_core::signatures::{
    generate_fleet, load_csv, load_signatures_csv, m2_to_dbsm_floored, reference_recipes,
    restrict_azimuth, save_csv, Dataset, Polarization, RcsSignature,
};
use rcsclass_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "rcsclass",
    version,
    about = "RCS-based UAV classification toolkit"
)]
struct Cli {
    /// TOML file with top-level `seed`, `out`, `threads` and one table per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic fleet CSV.
    Gen(GenArgs),
    /// Train one classifier and save it as JSON.
    Train(TrainArgs),
    /// Classify every signature of a CSV with a saved model.
    Classify(ClassifyArgs),
    /// Accuracy-vs-SNR Monte Carlo experiment.
    Sweep(SweepArgs),
    /// Per-signature classification time.
    Bench(BenchArgs),
    /// Scalogram PNGs (and optional CSVs) per signature.
    Scalogram(ScalogramArgs),
    /// Hyperparameter search for an ML family.
    Hyperopt(HyperoptArgs),
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenArgs {
    #[arg(long)]
    classes: Option<usize>,
    /// Step between class mean RCS levels, dB.
    #[arg(long)]
    level_step_db: Option<f64>,
    #[arg(long)]
    frequency_ghz: Option<f64>,
    #[arg(long)]
    polarization: Option<String>,
    /// File name inside the output directory.
    #[arg(long)]
    file: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    /// `default`, `clean` or `noisy`.
    #[arg(long)]
    training: Option<String>,
    /// Noisy copies per class when training on noisy data.
    #[arg(long)]
    copies: Option<usize>,
    /// AIC penalty 2K instead of 2(3K − 1).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    paper_aic: Option<bool>,
    /// Model path (default `<out>/model.json`).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Add noise at this SNR before classifying.
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    azimuth_center: Option<f64>,
    #[arg(long)]
    azimuth_halfwidth: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Repeatable; every family when absent.
    #[arg(long)]
    family: Option<Vec<String>>,
    /// Repeatable SNR grid, dB.
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    tests_per_class: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    azimuth_center: Option<f64>,
    #[arg(long)]
    azimuth_halfwidth: Option<f64>,
    #[arg(long)]
    training: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    paper_aic: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    family: Option<Vec<String>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    tests_per_class: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    /// SL classifiers refit their densities for every classification.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    refit_timing: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    paper_aic: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalogramArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// 224 or 227.
    #[arg(long)]
    size: Option<u32>,
    #[arg(long)]
    scales: Option<usize>,
    /// Also write the magnitude matrix as CSV.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    csv: Option<bool>,
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperoptArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    /// Holdout fraction of the stratified split.
    #[arg(long)]
    split: Option<f64>,
    /// Grid search with this many values per real dimension instead of GP/EI.
    #[arg(long)]
    grid: Option<usize>,
    /// Noisy training copies per class the features are drawn from.
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    surrogate: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GlobalArgs {
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numeric() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

/// Prefixes an error with the file it concerns, keeping its exit code.
fn at<T>(path: &Path, r: rcsclass_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let f = Failure::from(e);
        Failure {
            code: f.code,
            message: format!("{}: {}", path.display(), f.message),
        }
    })
}

/// `defaults` < config-file table < command-line values, key by key.
fn layer<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&toml::Value>,
    cli: &T,
    section: &str,
) -> CliResult<T> {
    let to_obj = |v: &T| -> Map<String, Value> {
        match serde_json::to_value(v) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        }
    };
    let mut merged = to_obj(defaults);
    if let Some(table) = file {
        let Value::Object(entries) =
            serde_json::to_value(table).map_err(|e| invalid(format!("config [{section}]: {e}")))?
        else {
            return Err(invalid(format!("config [{section}] must be a table")));
        };
        for (k, v) in entries {
            if !merged.contains_key(&k) {
                return Err(invalid(format!("config [{section}]: unknown key `{k}`")));
            }
            merged.insert(k, v);
        }
    }
    for (k, v) in to_obj(cli) {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| invalid(format!("config [{section}]: {e}")))
}

fn get<T>(v: &Option<T>, name: &str) -> CliResult<T>
where
    T: Clone,
{
    v.clone().ok_or_else(|| {
        invalid(format!(
            "missing required option --{}",
            name.replace('_', "-")
        ))
    })
}

fn write_effective(
    out: &Path,
    global: &GlobalArgs,
    section: &str,
    args: &impl Serialize,
) -> CliResult<()> {
    let mut table = toml::Table::new();
    let g = toml::Value::try_from(global).map_err(|e| invalid(e.to_string()))?;
    if let toml::Value::Table(t) = g {
        table.extend(t);
    }
    table.insert(
        section.to_string(),
        toml::Value::try_from(args).map_err(|e| invalid(e.to_string()))?,
    );
    let text = toml::to_string(&table).map_err(|e| invalid(e.to_string()))?;
    let path = out.join("effective_config.toml");
    std::fs::write(&path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn create_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| invalid(format!("{}: {e}", out.display())))
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    at(path, load_csv(path))
}

fn parse_training(name: &str, copies: usize) -> CliResult<Option<TrainingData>> {
    match name {
        "default" => Ok(None),
        "clean" => Ok(Some(TrainingData::Clean)),
        "noisy" => Ok(Some(TrainingData::Noisy {
            copies_per_class: copies,
            snr_grid_db: rcsclass_core::classifier::DEFAULT_SNR_GRID_DB.to_vec(),
        })),
        other => Err(invalid(format!(
            "unknown training mode `{other}` (default, clean, noisy)"
        ))),
    }
}

fn build_spec(
    family: &str,
    training: Option<&TrainingData>,
    paper_aic: bool,
) -> CliResult<ClassifierSpec> {
    let mut spec = ClassifierSpec::parse(family)?;
    if let Some(t) = training {
        *spec.training_mut() = t.clone();
    }
    if let ClassifierSpec::Sl { options, .. } = &mut spec {
        options.aic_penalty = if paper_aic {
            AicPenalty::ComponentCount
        } else {
            AicPenalty::FreeParameters
        };
    }
    Ok(spec)
}

fn window(center: Option<f64>, half: Option<f64>) -> CliResult<Option<AzimuthWindow>> {
    match (center, half) {
        (None, None) => Ok(None),
        (Some(c), Some(h)) => Ok(Some(AzimuthWindow {
            center_deg: c,
            half_width_deg: h,
        })),
        _ => Err(invalid(
            "--azimuth-center and --azimuth-halfwidth go together",
        )),
    }
}

fn families(list: &[String]) -> Vec<String> {
    if list.is_empty() {
        ClassifierSpec::all_default()
            .iter()
            .map(|s| s.name().to_string())
            .collect()
    } else {
        list.to_vec()
    }
}

fn cmd_gen(g: &GlobalArgs, a: &GenArgs) -> CliResult<()> {
    let out = get(&g.out, "out")?;
    let classes = get(&a.classes, "classes")?;
    if classes < 2 {
        return Err(invalid(format!(
            "--classes must be at least 2, got {classes}"
        )));
    }
    let pol: Polarization = get(&a.polarization, "polarization")?.parse()?;
    let recipes = reference_recipes(classes, get(&a.level_step_db, "level_step_db")?);
    let seed_ = seed::derive_label(get(&g.seed, "seed")?, "gen");
    let dataset = generate_fleet(
        &recipes,
        get(&a.frequency_ghz, "frequency_ghz")?,
        pol,
        seed_,
    )?;
    create_out(&out)?;
    let path = out.join(get(&a.file, "file")?);
    at(&path, save_csv(&dataset, &path))?;
    write_effective(&out, g, "gen", a)?;
    info!(
        "wrote {} signatures to {}",
        dataset.signatures().len(),
        path.display()
    );
    Ok(())
}

fn cmd_train(g: &GlobalArgs, a: &TrainArgs) -> CliResult<()> {
    let out = get(&g.out, "out")?;
    let data = get(&a.data, "data")?;
    let dataset = load_dataset(&data)?;
    let training = parse_training(&get(&a.training, "training")?, get(&a.copies, "copies")?)?;
    let spec = build_spec(
        &get(&a.family, "family")?,
        training.as_ref(),
        get(&a.paper_aic, "paper_aic")?,
    )?;
    let clf = train_classifier(
        &dataset,
        &spec,
        seed::derive_label(get(&g.seed, "seed")?, "train"),
    )
    .map_err(Failure::from)?;
    create_out(&out)?;
    let path = a.model.clone().unwrap_or_else(|| out.join("model.json"));
    at(&path, clf.save(&path))?;
    write_effective(&out, g, "train", a)?;
    info!("saved {} model to {}", spec.name(), path.display());
    Ok(())
}

fn cmd_classify(g: &GlobalArgs, a: &ClassifyArgs) -> CliResult<()> {
    let out = get(&g.out, "out")?;
    let model_path = get(&a.model, "model")?;
    let clf = at(&model_path, TrainedClassifier::load(&model_path))?;
    let data = get(&a.data, "data")?;
    let sigs = at(&data, load_signatures_csv(&data))?;
    let win = window(a.azimuth_center, a.azimuth_halfwidth)?;
    let root = seed::derive_label(get(&g.seed, "seed")?, "classify");
    let mut rows = Vec::new();
    for (i, sig) in sigs.iter().enumerate() {
        let mut s = match win {
            Some(w) => restrict_azimuth(sig, w.center_deg, w.half_width_deg)?,
            None => sig.clone(),
        };
        if let Some(snr) = a.snr {
            s = add_noise(&s, &NoiseSpec::new(snr, seed::derive(root, &[i as u64]))?)?;
        }
        let p = clf.classify(&s)?;
        let scores: Vec<String> = p.scores.iter().map(|(c, v)| format!("{c}={v}")).collect();
        println!(
            "{}\t{}\t{}\t{}",
            i,
            sig.target_id,
            p.class,
            scores.join(" ")
        );
        rows.push((i, sig.target_id.clone(), p));
    }
    create_out(&out)?;
    let path = out.join("predictions.csv");
    let write = || -> rcsclass_core::Result<()> {
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["index".to_string(), "target_id".into(), "predicted".into()];
        header.extend(clf.classes.iter().map(|c| format!("score_{c}")));
        w.write_record(&header)?;
        for (i, t, p) in &rows {
            let mut rec = vec![i.to_string(), t.clone(), p.class.clone()];
            rec.extend(p.scores.iter().map(|(_, v)| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    };
    at(&path, write())?;
    write_effective(&out, g, "classify", a)
}

fn cmd_sweep(g: &GlobalArgs, a: &SweepArgs) -> CliResult<()> {
    let out = get(&g.out, "out")?;
    let data = get(&a.data, "data")?;
    let dataset = load_dataset(&data)?;
    let training = parse_training(&get(&a.training, "training")?, 100)?;
    let paper_aic = get(&a.paper_aic, "paper_aic")?;
    let classifiers = families(&get(&a.family, "family")?)
        .iter()
        .map(|f| build_spec(f, training.as_ref(), paper_aic))
        .collect::<CliResult<Vec<_>>>()?;
    let spec = ExperimentSpec {
        classifiers,
        snr_grid_db: get(&a.snr, "snr")?,
        runs: get(&a.runs, "runs")?,
        tests_per_class: get(&a.tests_per_class, "tests_per_class")?,
        azimuth_window: window(a.azimuth_center, a.azimuth_halfwidth)?,
        seed: seed::derive_label(get(&g.seed, "seed")?, "sweep"),
    };
    let report = eval::run_experiment(&dataset, &spec)?;
    for (c, e) in &report.training_errors {
        log::warn!("{c} failed to train: {e}");
    }
    create_out(&out)?;
    at(&out, eval::write_report(&report, &out))?;
    write_effective(&out, g, "sweep", a)?;
    for s in &report.summaries {
        info!(
            "{:>10} {:>6} dB  {:.4} ± {:.4}",
            s.classifier, s.snr_db, s.mean_accuracy, s.std_accuracy
        );
    }
    Ok(())
}

fn cmd_bench(g: &GlobalArgs, a: &BenchArgs) -> CliResult<()> {
    let out = get(&g.out, "out")?;
    let data = get(&a.data, "data")?;
    let dataset = load_dataset(&data)?;
    let root = get(&g.seed, "seed")?;
    let train_seed = seed::derive_label(root, "train");
    let paper_aic = get(&a.paper_aic, "paper_aic")?;
    let trained = families(&get(&a.family, "family")?)
        .iter()
        .map(|f| {
            let spec = build_spec(f, None, paper_aic)?;
            train_classifier(&dataset, &spec, train_seed).map_err(Failure::from)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let tests: Vec<RcsSignature> = eval::test_signatures(
        &dataset,
        get(&a.snr, "snr")?,
        0,
        get(&a.tests_per_class, "tests_per_class")?,
        None,
        seed::derive_label(root, "bench"),
    )?
    .into_iter()
    .map(|(_, s)| s)
    .collect();
    let mode = if get(&a.refit_timing, "refit_timing")? {
        TimingMode::Refit
    } else {
        TimingMode::Classify
    };
    let rows = eval::benchmark_timing(
        &trained,
        &tests,
        get(&a.repetitions, "repetitions")?,
        mode,
        &dataset,
        train_seed,
    )?;
    create_out(&out)?;
    let csv_path = out.join("timing.csv");
    at(&csv_path, eval::write_timing_csv(&rows, &csv_path))?;
    let json_path = out.join("timing.json");
    let json = serde_json::to_string_pretty(&rows).map_err(|e| invalid(e.to_string()))?;
    std::fs::write(&json_path, json)
        .map_err(|e| invalid(format!("{}: {e}", json_path.display())))?;
    write_effective(&out, g, "bench", a)?;
    for r in &rows {
        println!(
            "{}\t{}\t{:.6} ms\t± {:.6}",
            r.classifier, r.mode, r.mean_ms, r.std_ms
        );
    }
    Ok(())
}

fn cmd_scalogram(g: &GlobalArgs, a: &ScalogramArgs) -> CliResult<()> {
    let out = get(&g.out, "out")?;
    let size = get(&a.size, "size")?;
    if size != 224 && size != 227 {
        return Err(invalid(format!("--size must be 224 or 227, got {size}")));
    }
    let data = get(&a.data, "data")?;
    let sigs = at(&data, load_signatures_csv(&data))?;
    let scales = get(&a.scales, "scales")?;
    let write_csv = get(&a.csv, "csv")?;
    let root = seed::derive_label(get(&g.seed, "seed")?, "scalogram");
    create_out(&out)?;
    let names: Vec<String> = sigs
        .iter()
        .map(|s| format!("{}_{}_{}", s.target_id, s.frequency_ghz, s.polarization))
        .collect();
    let results: Vec<CliResult<bool>> = sigs
        .par_iter()
        .enumerate()
        .map(|(i, sig)| {
            let sig = match a.snr {
                Some(snr) => {
                    add_noise(sig, &NoiseSpec::new(snr, seed::derive(root, &[i as u64]))?)?
                }
                None => sig.clone(),
            };
            let db: Vec<f64> = sig
                .rcs_m2()
                .iter()
                .map(|&v| m2_to_dbsm_floored(v))
                .collect();
            let s = cwt::cwt_transform(&db, scales)?;
            let img = cwt::process_scalogram(&s, size, cwt::DEFAULT_LEVELS)?;
            let stem = if names.iter().filter(|n| **n == names[i]).count() > 1 {
                format!("{}_{i}", names[i])
            } else {
                names[i].clone()
            };
            let png = out.join(format!("{stem}.png"));
            at(&png, cwt::save_png(&img.image, &png))?;
            if write_csv {
                let path = out.join(format!("{stem}.csv"));
                let file = std::fs::File::create(&path)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                at(
                    &path,
                    cwt::write_scalogram_csv(&s, std::io::BufWriter::new(file)),
                )?;
            }
            Ok(img.degenerate)
        })
        .collect();
    for (name, r) in names.iter().zip(results) {
        if r? {
            log::warn!("{name}: constant scalogram, wrote a uniform image");
        }
    }
    write_effective(&out, g, "scalogram", a)
}

#[derive(Serialize)]
struct BestPoint {
    family: String,
    objective: f64,
    point: std::collections::BTreeMap<String, hyperopt::ParamValue>,
    hyperparams: MlHyperparams,
}

fn cmd_hyperopt(g: &GlobalArgs, a: &HyperoptArgs) -> CliResult<()> {
    let out = get(&g.out, "out")?;
    let family: MlFamily = get(&a.family, "family")?.parse()?;
    let data = get(&a.data, "data")?;
    let dataset = load_dataset(&data)?;
    let root = get(&g.seed, "seed")?;
    let training = TrainingData::Noisy {
        copies_per_class: get(&a.copies, "copies")?,
        snr_grid_db: rcsclass_core::classifier::DEFAULT_SNR_GRID_DB.to_vec(),
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (class, sigs) in training_signatures(
        &dataset,
        &training,
        seed::derive_label(root, "hyperopt-data"),
    )? {
        for s in sigs {
            x.push(extract_features(&s, FeatureScale::default())?.to_vec(false));
            y.push(class.clone());
        }
    }
    let space = hyperopt::default_space(family);
    let base = MlHyperparams::default();
    let obj_seed = seed::derive_label(root, "hyperopt");
    let objective = hyperopt::holdout_objective(
        &x,
        &y,
        family,
        base,
        &space,
        get(&a.split, "split")?,
        obj_seed,
    )?;
    let result = match a.grid {
        Some(per_dim) => hyperopt::grid_search(objective, &space, per_dim)?,
        None => hyperopt::optimize(
            objective,
            &space,
            &OptConfig {
                budget: get(&a.budget, "budget")?,
                seed: obj_seed,
                surrogate_grid: get(&a.surrogate, "surrogate")?,
                ..OptConfig::default()
            },
        )?,
    };
    create_out(&out)?;
    let trace_path = out.join("optimization_trace.csv");
    let file = std::fs::File::create(&trace_path)
        .map_err(|e| invalid(format!("{}: {e}", trace_path.display())))?;
    at(
        &trace_path,
        hyperopt::write_trace_csv(&result, &space, std::io::BufWriter::new(file)),
    )?;
    if let Some(grid) = &result.surrogate {
        let path = out.join("surrogate.csv");
        let file = std::fs::File::create(&path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        at(
            &path,
            hyperopt::write_surrogate_csv(grid, std::io::BufWriter::new(file)),
        )?;
    }
    let best = BestPoint {
        family: family.name().to_string(),
        objective: result.best_objective,
        point: space.named(&result.best_point),
        hyperparams: hyperopt::apply_point(family, &base, &space, &result.best_point)?,
    };
    let path = out.join("best_point.json");
    let json = serde_json::to_string_pretty(&best).map_err(|e| invalid(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    write_effective(&out, g, "hyperopt", a)?;
    println!(
        "best holdout loss {} at {:?}",
        result.best_objective, best.point
    );
    Ok(())
}

fn defaults_global() -> GlobalArgs {
    GlobalArgs {
        seed: Some(0),
        out: Some(PathBuf::from("out")),
        threads: None,
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file: toml::Table = match &cli.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            text.parse()
                .map_err(|e| invalid(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    let sections = [
        "gen",
        "train",
        "classify",
        "sweep",
        "bench",
        "scalogram",
        "hyperopt",
    ];
    let global_file: toml::Table = file
        .iter()
        .filter(|(k, _)| !sections.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let global_cli = GlobalArgs {
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
    };
    let g = layer(
        &defaults_global(),
        Some(&toml::Value::Table(global_file)),
        &global_cli,
        "global",
    )?;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| invalid(e.to_string()))?;
    }
    let section = |name: &str| file.get(name);
    match &cli.command {
        Command::Gen(a) => {
            let d = GenArgs {
                classes: Some(4),
                level_step_db: Some(rcsclass_core::signatures::REFERENCE_LEVEL_STEP_DB),
                frequency_ghz: Some(rcsclass_core::signatures::REFERENCE_FREQUENCY_GHZ),
                polarization: Some("VV".into()),
                file: Some("fleet.csv".into()),
            };
            cmd_gen(&g, &layer(&d, section("gen"), a, "gen")?)
        }
        Command::Train(a) => {
            let d = TrainArgs {
                data: None,
                family: Some("gamma".into()),
                training: Some("default".into()),
                copies: Some(100),
                paper_aic: Some(false),
                model: None,
            };
            cmd_train(&g, &layer(&d, section("train"), a, "train")?)
        }
        Command::Classify(a) => {
            let d = ClassifyArgs {
                model: Some(g.out.clone().unwrap_or_default().join("model.json")),
                ..ClassifyArgs::default()
            };
            cmd_classify(&g, &layer(&d, section("classify"), a, "classify")?)
        }
        Command::Sweep(a) => {
            let d = SweepArgs {
                data: None,
                family: Some(Vec::new()),
                snr: Some(rcsclass_core::classifier::DEFAULT_SNR_GRID_DB.to_vec()),
                runs: Some(10),
                tests_per_class: Some(50),
                azimuth_center: None,
                azimuth_halfwidth: None,
                training: Some("default".into()),
                paper_aic: Some(false),
            };
            cmd_sweep(&g, &layer(&d, section("sweep"), a, "sweep")?)
        }
        Command::Bench(a) => {
            let d = BenchArgs {
                data: None,
                family: Some(Vec::new()),
                repetitions: Some(10),
                tests_per_class: Some(5),
                snr: Some(10.0),
                refit_timing: Some(false),
                paper_aic: Some(false),
            };
            cmd_bench(&g, &layer(&d, section("bench"), a, "bench")?)
        }
        Command::Scalogram(a) => {
            let d = ScalogramArgs {
                data: None,
                size: Some(227),
                scales: Some(64),
                csv: Some(false),
                snr: None,
            };
            cmd_scalogram(&g, &layer(&d, section("scalogram"), a, "scalogram")?)
        }
        Command::Hyperopt(a) => {
            let d = HyperoptArgs {
                data: None,
                family: Some("tree".into()),
                budget: Some(30),
                split: Some(0.25),
                grid: None,
                copies: Some(100),
                surrogate: Some(false),
            };
            cmd_hyperopt(&g, &layer(&d, section("hyperopt"), a, "hyperopt")?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
