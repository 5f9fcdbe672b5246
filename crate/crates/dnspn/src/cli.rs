use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "dnspn", version, about = "Neural decision forests with soft pruning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic Linear-k or Quadratic-k dataset.
    Generate(GenerateArgs),
    /// Train one model and write model, history and report files.
    Train(TrainArgs),
    /// Score a saved model on a CSV file.
    Evaluate(EvaluateArgs),
    /// Train several methods over a seed list and tabulate them.
    Compare(CompareArgs),
    /// Sample the soft and hard mask curves.
    MaskCurve(MaskCurveArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value config file, applied over the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
    /// Extra config override, e.g. `--set forest.trees=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct Generator {
    #[arg(long, value_parser = ["linear", "quadratic"])]
    pub kind: Option<String>,
    /// Number of informative dimensions (1..=100).
    #[arg(long)]
    pub k: Option<usize>,
    /// Feature noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub ntrain: Option<usize>,
    #[arg(long)]
    pub ntest: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub generator: Generator,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Training CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Test CSV; without it a stratified hold-out is split off `--data`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Label column name, or zero-based index.
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, value_parser = ["class", "regress"])]
    pub task: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = ["none", "dsp", "surgery"])]
    pub prune: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the label column the model was trained with.
    #[arg(long)]
    pub label_col: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Used when no `--data` is given: a fresh dataset is drawn per seed.
    #[command(flatten)]
    pub generator: Generator,
    #[arg(long, default_value = "fcnn,dndn,dnspn")]
    pub methods: String,
    /// Comma-separated seed list.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Worker threads; 1 runs cells sequentially.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaskCurveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Layer mean |w|.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Layer std of |w| (hard mask threshold only).
    #[arg(long)]
    pub std: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub wmin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub wmax: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

/// Collects `(key, value)` overrides in flag order.
#[derive(Debug, Default)]
pub struct Overrides(pub Vec<(String, String)>);

impl Overrides {
    pub fn from_common(common: &Common) -> Result<Self> {
        let mut o = Overrides::default();
        for s in &common.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            o.0.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(o)
    }

    pub fn add<T: ToString>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.push((key.to_string(), v.to_string()));
        }
        self
    }

    pub fn generator(&mut self, g: &Generator) -> &mut Self {
        self.add("data.kind", g.kind.as_ref())
            .add("data.k", g.k)
            .add("data.sigma", g.sigma)
            .add("data.ntrain", g.ntrain)
            .add("data.ntest", g.ntest)
    }

    pub fn data(&mut self, d: &DataArgs) -> &mut Self {
        self.add("data.label_col", d.label_col.as_ref())
            .add("data.task", d.task.as_ref())
    }
}
