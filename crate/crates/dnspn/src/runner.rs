//! Training runs and method comparisons.

use std::fmt;
use std::str::FromStr;

use dnspn_core::data::{generate, standardize, Scaler};
use dnspn_core::metrics::{evaluate_classification, evaluate_regression};
use dnspn_core::pruning::PruneMode;
use dnspn_core::training::{fit, predict, HeadPlacement};
use dnspn_core::{Dataset, EvalReport, Model, RngState, SyntheticSpec, Targets, Task, TrainHistory};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, TaskKind};
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Backbone with a plain softmax output.
    Fcnn,
    /// Forest heads, no pruning.
    Dndn,
    /// Forest heads with the soft mask.
    Dnspn,
    /// Forest heads with the hard three-band mask.
    Surgery,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fcnn, Method::Dndn, Method::Dnspn, Method::Surgery];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fcnn => "fcnn",
            Method::Dndn => "dndn",
            Method::Dnspn => "dnspn",
            Method::Surgery => "surgery",
        }
    }

    /// `base` with this method's head placement and prune mode.
    pub fn configure(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        let forests = if base.model.placement == HeadPlacement::None {
            HeadPlacement::EveryLayer
        } else {
            base.model.placement
        };
        let (placement, mode) = match self {
            Method::Fcnn => (HeadPlacement::None, PruneMode::None),
            Method::Dndn => (forests, PruneMode::None),
            Method::Dnspn => (forests, PruneMode::Dsp),
            Method::Surgery => (forests, PruneMode::Surgery),
        };
        cfg.model.placement = placement;
        cfg.train.prune.mode = mode;
        cfg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown method {s:?} (fcnn, dndn, dnspn, surgery)")))
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>>>()?;
    if methods.len() < 2 {
        return Err(CliError::Usage("compare needs at least two methods".into()));
    }
    Ok(methods)
}

/// Train and test sets after standardization with train statistics.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: Scaler,
    pub classes: Option<usize>,
}

pub fn prepare(train: &Dataset, test: &Dataset) -> Result<Prepared> {
    if train.d() != test.d() {
        return Err(CliError::Data(format!(
            "train has {} features but test has {}",
            train.d(),
            test.d()
        )));
    }
    let classes = match (train.classes, test.classes) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    let (train, test, scaler) = standardize(train, test)?;
    Ok(Prepared {
        train,
        test,
        scaler,
        classes,
    })
}

pub fn evaluate(model: &Model, ds: &Dataset) -> Result<EvalReport> {
    let out = predict(model, &ds.x)?;
    Ok(match (&ds.y, model.task) {
        (Targets::Classes(labels), Task::Classification { classes }) => evaluate_classification(&out, labels, classes)?,
        (Targets::Values(t), Task::Regression) => evaluate_regression(out.data(), t)?,
        _ => return Err(CliError::Data("dataset targets do not match the model task".into())),
    })
}

pub struct Outcome {
    pub model: Model,
    pub history: TrainHistory,
    pub report: EvalReport,
}

/// Builds a model from `seed` and trains it on `data.train`, tracking `data.test`.
pub fn train_once(cfg: &RunConfig, data: &Prepared, seed: u64) -> Result<Outcome> {
    cfg.validate()?;
    let task = match cfg.data.task {
        TaskKind::Class => {
            let classes = data
                .classes
                .ok_or_else(|| CliError::Data("classification needs class labels".into()))?;
            Task::Classification { classes }
        }
        TaskKind::Regress => Task::Regression,
    };
    let mut rng = RngState::new(seed);
    let mut model = Model::new(data.train.d(), task, &cfg.model, &mut rng)?;
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    let history = fit(&mut model, &data.train, Some(&data.test), &tc)?;
    let report = evaluate(&model, &data.test)?;
    Ok(Outcome {
        model,
        history,
        report,
    })
}

/// Fixed data for every seed, or a fresh synthetic draw per seed.
#[derive(Clone, Debug)]
pub enum DataSource {
    Fixed(Prepared),
    Synthetic(SyntheticSpec),
}

impl DataSource {
    fn for_seed(&self, seed: u64) -> Result<Prepared> {
        match self {
            DataSource::Fixed(p) => Ok(p.clone()),
            DataSource::Synthetic(spec) => {
                let mut spec = spec.clone();
                spec.seed = seed;
                let d = generate(&spec)?;
                prepare(&d.train, &d.test)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub method: Method,
    pub seed: u64,
    pub metric: f64,
    pub auc: Option<f64>,
    pub sparsity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub method: Method,
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub sparsity_mean: f64,
    pub winner: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    /// `accuracy` (higher wins) or `mse` (lower wins).
    pub metric: &'static str,
    pub cells: Vec<Cell>,
    pub rows: Vec<Row>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn run_cell(base: &RunConfig, source: &DataSource, method: Method, seed: u64) -> Result<Cell> {
    let cfg = method.configure(base);
    let data = source.for_seed(seed)?;
    let out = train_once(&cfg, &data, seed)?;
    let metric = match cfg.data.task {
        TaskKind::Class => out.report.accuracy,
        TaskKind::Regress => out.report.mse,
    }
    .ok_or_else(|| CliError::Data("missing evaluation metric".into()))?;
    Ok(Cell {
        method,
        seed,
        metric,
        auc: out.report.auc,
        sparsity: out.model.backbone_sparsity(),
    })
}

/// Trains every (method, seed) cell, in parallel when `cfg.threads != 1`.
/// Cells are independent, so the result does not depend on the thread count.
pub fn compare(cfg: &RunConfig, methods: &[Method], source: &DataSource) -> Result<Comparison> {
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("compare needs at least one seed".into()));
    }
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let cells: Vec<Cell> = if cfg.threads == 1 {
        jobs.iter()
            .map(|&(m, s)| run_cell(cfg, source, m, s))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        pool.install(|| {
            jobs.par_iter()
                .map(|&(m, s)| run_cell(cfg, source, m, s))
                .collect::<Result<_>>()
        })?
    };

    let lower_wins = cfg.data.task == TaskKind::Regress;
    let mut rows: Vec<Row> = methods
        .iter()
        .map(|&m| {
            let mine: Vec<&Cell> = cells.iter().filter(|c| c.method == m).collect();
            let metric: Vec<f64> = mine.iter().map(|c| c.metric).collect();
            let aucs: Option<Vec<f64>> = mine.iter().map(|c| c.auc).collect();
            let (mean, std) = mean_std(&metric);
            let (auc_mean, auc_std) = match aucs {
                Some(a) => {
                    let (m, s) = mean_std(&a);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            let sparsity: Vec<f64> = mine.iter().map(|c| c.sparsity).collect();
            Row {
                method: m,
                seeds: mine.len(),
                mean,
                std,
                auc_mean,
                auc_std,
                sparsity_mean: mean_std(&sparsity).0,
                winner: false,
            }
        })
        .collect();
    let best = rows
        .iter()
        .map(|r| r.mean)
        .fold(None, |acc: Option<f64>, v| match acc {
            None => Some(v),
            Some(a) if (lower_wins && v < a) || (!lower_wins && v > a) => Some(v),
            keep => keep,
        });
    for r in &mut rows {
        r.winner = Some(r.mean) == best;
    }
    Ok(Comparison {
        metric: if lower_wins { "mse" } else { "accuracy" },
        cells,
        rows,
    })
}

impl Comparison {
    pub fn row(&self, method: Method) -> Option<&Row> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `method,seeds,<metric>_mean,<metric>_std,auc_mean,auc_std,sparsity_mean,winner`
    pub fn table_csv(&self) -> String {
        let m = self.metric;
        let mut out = format!("method,seeds,{m}_mean,{m}_std,auc_mean,auc_std,sparsity_mean,winner\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                r.seeds,
                r.mean,
                r.std,
                opt(r.auc_mean),
                opt(r.auc_std),
                r.sparsity_mean,
                if r.winner { "yes" } else { "" }
            ));
        }
        out
    }

    pub fn cells_csv(&self) -> String {
        let mut out = format!("method,seed,{},auc,sparsity\n", self.metric);
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.method,
                c.seed,
                c.metric,
                c.auc.map_or_else(String::new, |x| x.to_string()),
                c.sparsity
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing() {
        assert_eq!(parse_methods("fcnn, dnspn").unwrap(), vec![Method::Fcnn, Method::Dnspn]);
        assert!(matches!(parse_methods("fcnn,forest"), Err(CliError::Usage(_))));
        assert!(matches!(parse_methods("fcnn"), Err(CliError::Usage(_))));
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn method_presets() {
        let base = RunConfig::default();
        assert_eq!(Method::Fcnn.configure(&base).model.placement, HeadPlacement::None);
        assert_eq!(Method::Dnspn.configure(&base).train.prune.mode, PruneMode::Dsp);
        assert_eq!(Method::Surgery.configure(&base).train.prune.mode, PruneMode::Surgery);
        let d = Method::Dndn.configure(&base);
        assert_eq!((d.model.placement, d.train.prune.mode), (HeadPlacement::EveryLayer, PruneMode::None));
    }
}
