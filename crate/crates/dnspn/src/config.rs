//! Flat `key=value` run configuration.
//!
//! Precedence is built-in defaults, then a config file, then command-line
//! flags. Every key is listed in [`KEYS`]; the canonical rendering from
//! [`RunConfig::pairs`] is what gets hashed and echoed into reports.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use dnspn_core::forest::ForestConfig;
use dnspn_core::pruning::{PruneConfig, PruneMode};
use dnspn_core::training::{HeadPlacement, ModelConfig, Optimizer, Task, TrainConfig};
use dnspn_core::{SyntheticKind, SyntheticSpec};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Class,
    Regress,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub kind: SyntheticKind,
    pub k: usize,
    pub sigma: f64,
    pub sigma_per_dim: Option<Vec<f64>>,
    pub ntrain: usize,
    pub ntest: usize,
    pub seed: u64,
    pub task: TaskKind,
    pub label_col: String,
    /// Held-out fraction when no separate test file is given.
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: SyntheticKind::Linear,
            k: 50,
            sigma: 1.0,
            sigma_per_dim: None,
            ntrain: 10_000,
            ntest: 2_000,
            seed: 0,
            task: TaskKind::Class,
            label_col: "label".into(),
            test_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub seeds: Vec<u64>,
    /// Worker threads for `compare`; `0` lets the pool decide.
    pub threads: usize,
    pub curve_mu: f64,
    pub curve_std: f64,
    pub curve_wmin: f64,
    pub curve_wmax: f64,
    pub curve_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            data: DataConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            threads: 0,
            curve_mu: 1.0,
            curve_std: 0.5,
            curve_wmin: -3.0,
            curve_wmax: 3.0,
            curve_samples: 601,
        }
    }
}

pub const KEYS: &[&str] = &[
    "train.lr",
    "train.batch",
    "train.dropout",
    "train.epochs",
    "train.seed",
    "train.optimizer",
    "train.loss_on_fused",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
    "prune.mode",
    "prune.alpha",
    "prune.beta",
    "prune.gamma",
    "prune.r",
    "prune.epsilon",
    "prune.surgery_eta",
    "forest.trees",
    "forest.depth",
    "forest.embed",
    "model.hidden",
    "model.output_dim",
    "model.placement",
    "data.kind",
    "data.k",
    "data.sigma",
    "data.sigma_per_dim",
    "data.ntrain",
    "data.ntest",
    "data.seed",
    "data.task",
    "data.label_col",
    "data.test_fraction",
    "run.seeds",
    "run.threads",
    "curve.mu",
    "curve.std",
    "curve.wmin",
    "curve.wmax",
    "curve.samples",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn parse_prune_mode(value: &str) -> Result<PruneMode> {
    match value {
        "none" => Ok(PruneMode::None),
        "dsp" => Ok(PruneMode::Dsp),
        "surgery" => Ok(PruneMode::Surgery),
        _ => Err(CliError::Usage(format!("unknown prune mode {value:?} (none, dsp, surgery)"))),
    }
}

pub fn prune_mode_name(mode: PruneMode) -> &'static str {
    match mode {
        PruneMode::None => "none",
        PruneMode::Dsp => "dsp",
        PruneMode::Surgery => "surgery",
    }
}

fn placement_name(p: HeadPlacement) -> &'static str {
    match p {
        HeadPlacement::EveryLayer => "every",
        HeadPlacement::LastLayer => "last",
        HeadPlacement::None => "none",
    }
}

fn kind_name(k: SyntheticKind) -> &'static str {
    match k {
        SyntheticKind::Linear => "linear",
        SyntheticKind::Quadratic => "quadratic",
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "train.lr" => self.train.learning_rate = parse(key, v)?,
            "train.batch" => self.train.batch_size = parse(key, v)?,
            "train.dropout" => self.train.dropout = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.optimizer" => {
                self.train.optimizer = match v {
                    "adam" => Optimizer::Adam,
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(CliError::Usage(format!("{key}: expected adam or sgd, got {v:?}"))),
                }
            }
            "train.loss_on_fused" => self.train.loss_on_fused = parse(key, v)?,
            "adam.beta1" => self.train.adam_beta1 = parse(key, v)?,
            "adam.beta2" => self.train.adam_beta2 = parse(key, v)?,
            "adam.eps" => self.train.adam_eps = parse(key, v)?,
            "prune.mode" => self.train.prune.mode = parse_prune_mode(v)?,
            "prune.alpha" => self.train.prune.alpha = parse(key, v)?,
            "prune.beta" => self.train.prune.beta = parse(key, v)?,
            "prune.gamma" => self.train.prune.gamma = parse(key, v)?,
            "prune.r" => self.train.prune.r = parse(key, v)?,
            "prune.epsilon" => self.train.prune.epsilon = parse(key, v)?,
            "prune.surgery_eta" => self.train.prune.surgery_eta = parse(key, v)?,
            "forest.trees" => self.model.forest.trees = parse(key, v)?,
            "forest.depth" => self.model.forest.depth = parse(key, v)?,
            "forest.embed" => self.model.forest.embed_dim = parse(key, v)?,
            "model.hidden" => {
                self.model.hidden = if v == "auto" { None } else { Some(parse_list(key, v)?) }
            }
            "model.output_dim" => {
                self.model.output_dim = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "model.placement" => {
                self.model.placement = match v {
                    "every" => HeadPlacement::EveryLayer,
                    "last" => HeadPlacement::LastLayer,
                    "none" => HeadPlacement::None,
                    _ => return Err(CliError::Usage(format!("{key}: expected every, last or none, got {v:?}"))),
                }
            }
            "data.kind" => {
                self.data.kind = match v {
                    "linear" => SyntheticKind::Linear,
                    "quadratic" => SyntheticKind::Quadratic,
                    _ => return Err(CliError::Usage(format!("{key}: expected linear or quadratic, got {v:?}"))),
                }
            }
            "data.k" => self.data.k = parse(key, v)?,
            "data.sigma" => self.data.sigma = parse(key, v)?,
            "data.sigma_per_dim" => {
                self.data.sigma_per_dim = if v == "none" { None } else { Some(parse_list(key, v)?) }
            }
            "data.ntrain" => self.data.ntrain = parse(key, v)?,
            "data.ntest" => self.data.ntest = parse(key, v)?,
            "data.seed" => self.data.seed = parse(key, v)?,
            "data.task" => {
                self.data.task = match v {
                    "class" => TaskKind::Class,
                    "regress" => TaskKind::Regress,
                    _ => return Err(CliError::Usage(format!("{key}: expected class or regress, got {v:?}"))),
                }
            }
            "data.label_col" => self.data.label_col = v.to_string(),
            "data.test_fraction" => self.data.test_fraction = parse(key, v)?,
            "run.seeds" => self.seeds = parse_list(key, v)?,
            "run.threads" => self.threads = parse(key, v)?,
            "curve.mu" => self.curve_mu = parse(key, v)?,
            "curve.std" => self.curve_std = parse(key, v)?,
            "curve.wmin" => self.curve_wmin = parse(key, v)?,
            "curve.wmax" => self.curve_wmax = parse(key, v)?,
            "curve.samples" => self.curve_samples = parse(key, v)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Canonical rendering, one entry per key in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let p = &t.prune;
        let m = &self.model;
        let d = &self.data;
        let values = [
            t.learning_rate.to_string(),
            t.batch_size.to_string(),
            t.dropout.to_string(),
            t.epochs.to_string(),
            t.seed.to_string(),
            match t.optimizer {
                Optimizer::Adam => "adam".into(),
                Optimizer::Sgd => "sgd".into(),
            },
            t.loss_on_fused.to_string(),
            t.adam_beta1.to_string(),
            t.adam_beta2.to_string(),
            t.adam_eps.to_string(),
            prune_mode_name(p.mode).into(),
            p.alpha.to_string(),
            p.beta.to_string(),
            p.gamma.to_string(),
            p.r.to_string(),
            p.epsilon.to_string(),
            p.surgery_eta.to_string(),
            m.forest.trees.to_string(),
            m.forest.depth.to_string(),
            m.forest.embed_dim.to_string(),
            m.hidden.as_deref().map_or("auto".into(), join),
            m.output_dim.map_or("auto".into(), |o| o.to_string()),
            placement_name(m.placement).into(),
            kind_name(d.kind).into(),
            d.k.to_string(),
            d.sigma.to_string(),
            d.sigma_per_dim.as_deref().map_or("none".into(), join),
            d.ntrain.to_string(),
            d.ntest.to_string(),
            d.seed.to_string(),
            match d.task {
                TaskKind::Class => "class".into(),
                TaskKind::Regress => "regress".into(),
            },
            d.label_col.clone(),
            d.test_fraction.to_string(),
            join(&self.seeds),
            self.threads.to_string(),
            self.curve_mu.to_string(),
            self.curve_std.to_string(),
            self.curve_wmin.to_string(),
            self.curve_wmax.to_string(),
            self.curve_samples.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        self.pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn render(&self) -> String {
        self.pairs().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key=value, got {line:?}", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {}", i + 1, strip_usage(&e))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Defaults, then the optional file, then `overrides` in order.
    pub fn build(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = file {
            cfg.apply_file(p)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let d = &self.data;
        SyntheticSpec {
            kind: d.kind,
            k: d.k,
            sigma: d.sigma,
            sigma_per_dim: d.sigma_per_dim.clone(),
            n_train: d.ntrain,
            n_test: d.ntest,
            seed: d.seed,
        }
    }

    pub fn task(&self, classes: usize) -> Task {
        match self.data.task {
            TaskKind::Class => Task::Classification { classes },
            TaskKind::Regress => Task::Regression,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.forest.validate()?;
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(CliError::Usage(format!(
                "data.test_fraction must lie in (0, 1), got {}",
                self.data.test_fraction
            )));
        }
        Ok(())
    }

    pub fn prune(&self) -> PruneConfig {
        self.train.prune
    }

    pub fn forest(&self) -> ForestConfig {
        self.model.forest
    }
}

fn strip_usage(e: &CliError) -> String {
    match e {
        CliError::Usage(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.train.dropout, 0.5);
        assert_eq!((c.model.forest.trees, c.model.forest.depth, c.model.forest.embed_dim), (10, 4, 8));
        let p = c.train.prune;
        assert_eq!((p.alpha, p.beta, p.gamma, p.r, p.epsilon), (1e-4, 1.0, 1.0, 1.0, 1e-12));
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("model.hidden", "3,4").unwrap();
        c.set("data.sigma_per_dim", "0.5,1").unwrap();
        c.set("prune.mode", "surgery").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.render(), "rendered").unwrap();
        assert_eq!(c, d);
        assert_eq!(c.pairs().len(), KEYS.len());
    }

    #[test]
    fn precedence_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\ntrain.epochs = 7\nprune.alpha=2e-4\n").unwrap();
        let c = RunConfig::build(Some(&path), &[("train.epochs".into(), "3".into())]).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.prune.alpha, 2e-4);
        fs::write(&path, "train.epochs=7\nbogus=1\n").unwrap();
        let err = RunConfig::build(Some(&path), &[]).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(RunConfig::default().set("train.batch", "x").is_err());
    }
}
