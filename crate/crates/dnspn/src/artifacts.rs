//! Run directories and the files written into them.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use dnspn_core::data::Scaler;
use dnspn_core::{EvalReport, Model, TrainHistory};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MODEL_FORMAT: &str = "dnspn-model";
pub const MODEL_VERSION: u32 = 1;

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hash of the command, the canonical config, and the contents of every input.
pub fn run_hash(command: &str, extra: &str, cfg: &RunConfig, inputs: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(format!("command={command}\nextra={extra}\n"));
    hasher.update(cfg.render());
    for p in inputs {
        hasher.update(format!("input={}\n", sha256_file(p)?));
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Creates `<out>/<command>-<hash>` and writes `config.txt` into it.
/// `extra` carries command arguments that are not config keys.
/// An existing directory is only replaced with `force`.
pub fn prepare_run_dir(
    out: &Path,
    command: &str,
    extra: &str,
    cfg: &RunConfig,
    inputs: &[&Path],
    force: bool,
) -> Result<PathBuf> {
    let hash = run_hash(command, extra, cfg, inputs)?;
    let dir = out.join(format!("{command}-{}", &hash[..12]));
    if dir.exists() {
        if !force {
            return Err(CliError::Usage(format!(
                "{} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_text(&dir.join("config.txt"), &cfg.render())?;
    Ok(dir)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, e))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::format(path, e))
}

/// Everything needed to evaluate a trained model on raw CSV data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: Model,
    pub scaler: Scaler,
    pub class_names: Option<Vec<String>>,
    pub feature_names: Vec<String>,
    pub label_col: String,
    pub config: BTreeMap<String, String>,
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    write_json(path, file)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let file: ModelFile = read_json(path)?;
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
        return Err(CliError::format(
            path,
            format!("not a {MODEL_FORMAT} v{MODEL_VERSION} file (found {} v{})", file.format, file.version),
        ));
    }
    file.model
        .validate()
        .map_err(|e| CliError::format(path, e))?;
    if file.scaler.mean.len() != file.model.input_dim() || file.scaler.std.len() != file.model.input_dim() {
        return Err(CliError::format(path, "scaler width does not match the model"));
    }
    Ok(file)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    /// Pruned fraction per backbone layer.
    pub layers: Vec<f64>,
    /// Pruned fraction over all backbone weights.
    pub backbone: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: String,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub mse: Option<f64>,
    pub class_counts: Vec<usize>,
    pub sparsity: SparsityReport,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
}

impl Report {
    pub fn new(eval: EvalReport, model: &Model, seed: u64, config: BTreeMap<String, String>) -> Self {
        Report {
            task: eval.task,
            n: eval.n,
            accuracy: eval.accuracy,
            auc: eval.auc,
            mse: eval.mse,
            class_counts: eval.class_counts,
            sparsity: SparsityReport {
                layers: model.sparsity(),
                backbone: model.backbone_sparsity(),
            },
            seed,
            config,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `epoch,train_loss,eval_loss,metric,sparsity_l0,...`
pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let layers = history.records.first().map_or(0, |r| r.sparsity.len());
    let mut out = String::from("epoch,train_loss,eval_loss,metric");
    for l in 0..layers {
        out.push_str(&format!(",sparsity_l{l}"));
    }
    out.push('\n');
    for r in &history.records {
        out.push_str(&format!("{},{},{},{}", r.epoch, r.train_loss, opt(r.eval_loss), opt(r.metric)));
        for s in &r.sparsity {
            out.push_str(&format!(",{s}"));
        }
        out.push('\n');
    }
    write_text(path, &out)
}
