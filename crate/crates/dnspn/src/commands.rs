use std::path::{Path, PathBuf};

use dnspn_core::data::{generate, split};
use dnspn_core::pruning::{mask_curve, surgery_curve, CurvePoint, LayerStats};
use dnspn_core::{RngState, Targets, Task};
use serde::Serialize;

use crate::artifacts::{self, ModelFile, Report, MODEL_FORMAT, MODEL_VERSION};
use crate::cli::{CompareArgs, EvaluateArgs, GenerateArgs, MaskCurveArgs, Overrides, TrainArgs};
use crate::config::{RunConfig, TaskKind};
use crate::csv_io::{load_csv, write_dataset_csv, Table};
use crate::error::{CliError, Result};
use crate::runner::{self, parse_methods, prepare, DataSource};

fn balance(y: &Targets) -> String {
    match y {
        Targets::Classes(c) => {
            let k = c.iter().max().map_or(0, |m| m + 1);
            let mut counts = vec![0usize; k];
            for &l in c {
                counts[l] += 1;
            }
            counts
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{i}:{n}"))
                .collect::<Vec<_>>()
                .join(" ")
        }
        Targets::Values(_) => "regression".into(),
    }
}

#[derive(Serialize)]
struct DatasetSidecar<'a> {
    spec: &'a dnspn_core::SyntheticSpec,
    truth: &'a dnspn_core::data::GeneratorTruth,
    n_train: usize,
    n_test: usize,
    d: usize,
    train_balance: String,
    test_balance: String,
}

/// Writes `train.csv`, `test.csv` and `dataset.json`; returns the run directory.
pub fn cmd_generate(args: &GenerateArgs) -> Result<PathBuf> {
    let mut o = Overrides::from_common(&args.common)?;
    o.generator(&args.generator).add("data.seed", args.seed);
    let cfg = RunConfig::build(args.common.config.as_deref(), &o.0)?;
    let spec = cfg.synthetic_spec();
    spec.validate()?;
    let data = generate(&spec)?;
    let dir = artifacts::prepare_run_dir(&args.common.out, "generate", "", &cfg, &[], args.common.force)?;
    write_dataset_csv(&dir.join("train.csv"), &data.train)?;
    write_dataset_csv(&dir.join("test.csv"), &data.test)?;
    let sidecar = DatasetSidecar {
        spec: &data.spec,
        truth: &data.truth,
        n_train: data.train.n(),
        n_test: data.test.n(),
        d: data.train.d(),
        train_balance: balance(&data.train.y),
        test_balance: balance(&data.test.y),
    };
    artifacts::write_json(&dir.join("dataset.json"), &sidecar)?;
    println!("{}", dir.display());
    println!("  train: n={} d={} classes {}", sidecar.n_train, sidecar.d, sidecar.train_balance);
    println!("  test:  n={} d={} classes {}", sidecar.n_test, sidecar.d, sidecar.test_balance);
    Ok(dir)
}

fn require_data(path: &Option<PathBuf>) -> Result<&Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage("--data is required".into()))
}

/// Loads the training file and either the test file or a hold-out split.
fn load_train_test(cfg: &RunConfig, data: &Path, test: Option<&Path>) -> Result<(Table, Table)> {
    let train = load_csv(data, &cfg.data.label_col, cfg.data.task, None)?;
    match test {
        Some(t) => {
            let test = load_csv(t, &cfg.data.label_col, cfg.data.task, train.class_names.as_deref())?;
            if test.dataset.d() != train.dataset.d() {
                return Err(CliError::Data(format!(
                    "{} has {} features but {} has {}",
                    t.display(),
                    test.dataset.d(),
                    data.display(),
                    train.dataset.d()
                )));
            }
            Ok((train, test))
        }
        None => {
            let mut rng = RngState::with_stream(cfg.train.seed, 2);
            let (a, b) = split(&train.dataset, 1.0 - cfg.data.test_fraction, &mut rng)?;
            let test = Table {
                dataset: b,
                ..train.clone()
            };
            Ok((Table { dataset: a, ..train }, test))
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let mut o = Overrides::from_common(&args.common)?;
    o.data(&args.data)
        .add("prune.mode", args.prune.as_ref())
        .add("train.epochs", args.epochs)
        .add("train.seed", args.seed);
    let cfg = RunConfig::build(args.common.config.as_deref(), &o.0)?;
    cfg.validate()?;
    let data_path = require_data(&args.data.data)?;
    let (train, test) = load_train_test(&cfg, data_path, args.data.test.as_deref())?;
    let prepared = prepare(&train.dataset, &test.dataset)?;

    let mut inputs = vec![data_path];
    inputs.extend(args.data.test.as_deref());
    let dir = artifacts::prepare_run_dir(&args.common.out, "train", "", &cfg, &inputs, args.common.force)?;

    let out = runner::train_once(&cfg, &prepared, cfg.train.seed)?;
    let echo = cfg.echo();
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: out.model,
        scaler: prepared.scaler,
        class_names: train.class_names,
        feature_names: train.feature_names,
        label_col: cfg.data.label_col.clone(),
        config: echo.clone(),
    };
    artifacts::save_model(&dir.join("model.json"), &file)?;
    artifacts::write_history_csv(&dir.join("history.csv"), &out.history)?;
    let report = Report::new(out.report, &file.model, cfg.train.seed, echo);
    artifacts::write_json(&dir.join("report.json"), &report)?;
    println!("{}", dir.display());
    print_report(&report);
    Ok(dir)
}

fn print_report(r: &Report) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!(
        "  {} n={} accuracy={} auc={} mse={} sparsity={:.4}",
        r.task,
        r.n,
        fmt(r.accuracy),
        fmt(r.auc),
        fmt(r.mse),
        r.sparsity.backbone
    );
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<PathBuf> {
    let file = artifacts::load_model(&args.model)?;
    let task = match file.model.task {
        Task::Classification { .. } => TaskKind::Class,
        Task::Regression => TaskKind::Regress,
    };
    let label_col = args.label_col.as_deref().unwrap_or(&file.label_col);
    let table = load_csv(&args.data, label_col, task, file.class_names.as_deref())?;
    let mut ds = table.dataset;
    if ds.d() != file.model.input_dim() {
        return Err(CliError::Data(format!(
            "{} has {} features but the model expects {}",
            args.data.display(),
            ds.d(),
            file.model.input_dim()
        )));
    }
    ds.x = file.scaler.transform(&ds.x)?;
    let eval = runner::evaluate(&file.model, &ds)?;

    let mut cfg = RunConfig::default();
    for (k, v) in &file.config {
        cfg.set(k, v)?;
    }
    let dir = artifacts::prepare_run_dir(&args.out, "evaluate", "", &cfg, &[&args.model, &args.data], args.force)?;
    let seed = cfg.train.seed;
    let report = Report::new(eval, &file.model, seed, file.config);
    artifacts::write_json(&dir.join("report.json"), &report)?;
    println!("{}", dir.display());
    print_report(&report);
    Ok(dir)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<PathBuf> {
    let methods = parse_methods(&args.methods)?;
    let mut o = Overrides::from_common(&args.common)?;
    o.data(&args.data)
        .generator(&args.generator)
        .add("run.seeds", args.seeds.as_ref())
        .add("train.epochs", args.epochs)
        .add("run.threads", args.threads);
    let cfg = RunConfig::build(args.common.config.as_deref(), &o.0)?;
    cfg.validate()?;

    let mut inputs: Vec<&Path> = Vec::new();
    let source = match &args.data.data {
        Some(path) => {
            let (train, test) = load_train_test(&cfg, path, args.data.test.as_deref())?;
            inputs.push(path);
            inputs.extend(args.data.test.as_deref());
            DataSource::Fixed(prepare(&train.dataset, &test.dataset)?)
        }
        None => {
            if cfg.data.task != TaskKind::Class {
                return Err(CliError::Usage("synthetic data is classification only".into()));
            }
            let spec = cfg.synthetic_spec();
            spec.validate()?;
            DataSource::Synthetic(spec)
        }
    };
    // the thread count does not change results
    let mut hashed = cfg.clone();
    hashed.threads = 0;
    let names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
    let extra = format!("methods={}", names.join(","));
    let dir = artifacts::prepare_run_dir(&args.common.out, "compare", &extra, &hashed, &inputs, args.common.force)?;

    let table = runner::compare(&cfg, &methods, &source)?;
    artifacts::write_text(&dir.join("comparison.csv"), &table.table_csv())?;
    artifacts::write_text(&dir.join("cells.csv"), &table.cells_csv())?;
    println!("{}", dir.display());
    for r in &table.rows {
        println!(
            "  {:<8} {} {:.4} ± {:.4} (population std over {} seeds){}",
            r.method.name(),
            table.metric,
            r.mean,
            r.std,
            r.seeds,
            if r.winner { "  winner" } else { "" }
        );
    }
    Ok(dir)
}

/// Sample grid over `[wmin, wmax]` plus `0` and `±γ·mu` when they fall inside.
pub fn curve_samples(cfg: &RunConfig) -> Result<Vec<f64>> {
    let (lo, hi, n) = (cfg.curve_wmin, cfg.curve_wmax, cfg.curve_samples);
    if !(lo < hi) || n < 2 {
        return Err(CliError::Usage(format!(
            "empty sampling range: need wmin < wmax and samples >= 2 (got [{lo}, {hi}], {n})"
        )));
    }
    let mut w: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let t = cfg.train.prune.gamma * cfg.curve_mu;
    w.extend([0.0, t, -t].into_iter().filter(|v| *v >= lo && *v <= hi));
    w.sort_by(f64::total_cmp);
    w.dedup();
    Ok(w)
}

fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("w,mask,effective\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.w, p.mask, p.effective));
    }
    out
}

pub fn cmd_mask_curve(args: &MaskCurveArgs) -> Result<PathBuf> {
    let mut o = Overrides::from_common(&args.common)?;
    o.add("curve.mu", args.mu)
        .add("curve.std", args.std)
        .add("curve.wmin", args.wmin)
        .add("curve.wmax", args.wmax)
        .add("curve.samples", args.samples);
    let cfg = RunConfig::build(args.common.config.as_deref(), &o.0)?;
    cfg.train.prune.validate()?;
    if !(cfg.curve_mu >= 0.0) || !(cfg.curve_std >= 0.0) {
        return Err(CliError::Usage("curve.mu and curve.std must be >= 0".into()));
    }
    let w = curve_samples(&cfg)?;
    let stats = LayerStats {
        mu: cfg.curve_mu,
        std: cfg.curve_std,
    };
    let dir = artifacts::prepare_run_dir(&args.common.out, "mask-curve", "", &cfg, &[], args.common.force)?;
    let prune = cfg.train.prune;
    artifacts::write_text(&dir.join("mask_curve_dsp.csv"), &curve_csv(&mask_curve(&prune, &stats, &w)))?;
    artifacts::write_text(&dir.join("mask_curve_surgery.csv"), &curve_csv(&surgery_curve(&prune, &stats, &w)))?;
    println!("{}", dir.display());
    println!("  {} samples over [{}, {}]", w.len(), cfg.curve_wmin, cfg.curve_wmax);
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_curve_hits_threshold_and_zero() {
        let w = curve_samples(&RunConfig::default()).unwrap();
        assert!(w.contains(&0.0) && w.contains(&1.0) && w.contains(&-1.0));
        assert!(w.windows(2).all(|p| p[0] < p[1]));
        let mut bad = RunConfig::default();
        bad.curve_wmax = bad.curve_wmin;
        assert!(matches!(curve_samples(&bad), Err(CliError::Usage(_))));
    }
}
