//! Datasets, the Linear-k / Quadratic-k generators, splitting and scaling.
//!
//! Both generators start from 100 independent standard-normal features.
//! `k` of them are selected as the useful ones and a random linear (or
//! quadratic) map of the selection decides the label: `1` if the map is
//! positive, `0` otherwise. Labels are computed on the clean features;
//! Gaussian noise of stddev `σ` is then added to every feature.
//!
//! Random draws happen in a fixed order (selected dims, weights, bias,
//! features, noise), so a `(spec, seed)` pair fully determines the output.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

/// Feature count of the synthetic benchmarks.
pub const BASE_DIMS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(v) => Targets::Classes(idx.iter().map(|&i| v[i]).collect()),
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Targets,
    /// Class count for classification, `None` for regression.
    pub classes: Option<usize>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Targets, classes: Option<usize>) -> Result<Self> {
        let ds = Dataset { x, y, classes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.y.len() {
            return Err(Error::shape("Dataset", self.x.rows(), self.y.len()));
        }
        if !self.x.is_finite() {
            return Err(Error::Data("non-finite feature value".into()));
        }
        match (&self.y, self.classes) {
            (Targets::Classes(labels), Some(k)) => {
                if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
                    return Err(Error::Data(format!("row {i}: label {l} outside [0, {k})")));
                }
            }
            (Targets::Values(v), None) => {
                if v.iter().any(|t| !t.is_finite()) {
                    return Err(Error::Data("non-finite regression target".into()));
                }
            }
            _ => return Err(Error::Data("targets do not match the task kind".into())),
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select(idx),
            classes: self.classes,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.y {
            Targets::Classes(v) => Some(v),
            Targets::Values(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Linear,
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub k: usize,
    pub sigma: f64,
    /// Optional per-feature noise levels; overrides `sigma` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_per_dim: Option<Vec<f64>>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, k: usize, sigma: f64, seed: u64) -> Self {
        SyntheticSpec {
            kind,
            k,
            sigma,
            sigma_per_dim: None,
            n_train: 10_000,
            n_test: 2_000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=BASE_DIMS).contains(&self.k) {
            return Err(Error::Parameter(format!("k must lie in [1, {BASE_DIMS}], got {}", self.k)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if let Some(s) = &self.sigma_per_dim {
            if s.len() != BASE_DIMS || s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "sigma_per_dim needs {BASE_DIMS} non-negative values"
                )));
            }
        }
        if self.n_train == 0 {
            return Err(Error::Parameter("n_train must be >= 1".into()));
        }
        Ok(())
    }

    fn noise_levels(&self) -> Vec<f64> {
        self.sigma_per_dim.clone().unwrap_or_else(|| vec![self.sigma; BASE_DIMS])
    }
}

/// The hidden map behind a generated dataset, kept for auditing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTruth {
    /// Linear-term dims (`x̃` for Linear-k, `x̃₂` for Quadratic-k).
    pub dims: Vec<usize>,
    pub w: Vec<f64>,
    /// Squared-term dims and weights (Quadratic-k only).
    #[serde(default)]
    pub square_dims: Vec<usize>,
    #[serde(default)]
    pub square_w: Vec<f64>,
    pub b: f64,
}

impl GeneratorTruth {
    /// Value of the map on one clean sample.
    pub fn score(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.dims.iter().zip(&self.w).map(|(&d, w)| w * x[d]).sum();
        let sq: f64 = self
            .square_dims
            .iter()
            .zip(&self.square_w)
            .map(|(&d, w)| w * x[d] * x[d])
            .sum();
        sq + lin + self.b
    }

    /// `1` when the map is strictly positive; ties go to `0`.
    pub fn label(&self, x: &[f64]) -> usize {
        usize::from(self.score(x) > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub truth: GeneratorTruth,
    pub train: Dataset,
    pub test: Dataset,
}

/// `n × 100` i.i.d. standard-normal features.
pub fn gen_base(rng: &mut RngState, n: usize) -> Matrix {
    rng.normal_matrix(n, BASE_DIMS, 0.0, 1.0)
}

/// `x + ε`, `ε ~ N(0, σ²)` per entry. `σ = 0` returns `x` unchanged and draws nothing.
pub fn add_noise(x: &Matrix, sigma: f64, rng: &mut RngState) -> Result<Matrix> {
    add_noise_per_dim(x, &vec![sigma; x.cols()], rng)
}

/// Per-column noise levels.
pub fn add_noise_per_dim(x: &Matrix, sigmas: &[f64], rng: &mut RngState) -> Result<Matrix> {
    if sigmas.len() != x.cols() {
        return Err(Error::shape("add_noise", x.cols(), sigmas.len()));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::Parameter("noise stddev must be >= 0".into()));
    }
    if sigmas.iter().all(|&s| s == 0.0) {
        return Ok(x.clone());
    }
    let mut out = x.clone();
    let cols = x.cols();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let s = sigmas[i % cols];
        if s > 0.0 {
            *v += s * rng.standard_normal();
        }
    }
    Ok(out)
}

fn draw_weights(rng: &mut RngState, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.standard_normal()).collect()
}

/// Builds train/test sets from a fixed map: features, clean labels, then noise.
fn materialize(spec: &SyntheticSpec, truth: GeneratorTruth, rng: &mut RngState) -> Result<SyntheticData> {
    let n = spec.n_train + spec.n_test;
    let clean = gen_base(rng, n);
    let labels: Vec<usize> = clean.iter_rows().map(|row| truth.label(row)).collect();
    let noisy = add_noise_per_dim(&clean, &spec.noise_levels(), rng)?;
    let all = Dataset::new(noisy, Targets::Classes(labels), Some(2))?;
    let train_idx: Vec<usize> = (0..spec.n_train).collect();
    let test_idx: Vec<usize> = (spec.n_train..n).collect();
    Ok(SyntheticData {
        spec: spec.clone(),
        truth,
        train: all.subset(&train_idx),
        test: all.subset(&test_idx),
    })
}

/// Linear-k: `y = [wᵀx̃ + b > 0]` over `k` distinct random dims.
pub fn gen_linear_k(spec: &SyntheticSpec, rng: &mut RngState) -> Result<SyntheticData> {
    spec.validate()?;
    if spec.kind != SyntheticKind::Linear {
        return Err(Error::Parameter("gen_linear_k needs a Linear spec".into()));
    }
    let dims = rng.choose_distinct(BASE_DIMS, spec.k);
    let w = draw_weights(rng, spec.k);
    let b = rng.standard_normal();
    let truth = GeneratorTruth {
        dims,
        w,
        square_dims: Vec::new(),
        square_w: Vec::new(),
        b,
    };
    materialize(spec, truth, rng)
}

/// Quadratic-k: `y = [w₁ᵀx̃₁² + w₂ᵀx̃₂ + b > 0]`, the two selections drawn
/// independently (they may overlap).
pub fn gen_quadratic_k(spec: &SyntheticSpec, rng: &mut RngState) -> Result<SyntheticData> {
    spec.validate()?;
    if spec.kind != SyntheticKind::Quadratic {
        return Err(Error::Parameter("gen_quadratic_k needs a Quadratic spec".into()));
    }
    let square_dims = rng.choose_distinct(BASE_DIMS, spec.k);
    let dims = rng.choose_distinct(BASE_DIMS, spec.k);
    let square_w = draw_weights(rng, spec.k);
    let w = draw_weights(rng, spec.k);
    let b = rng.standard_normal();
    let truth = GeneratorTruth {
        dims,
        w,
        square_dims,
        square_w,
        b,
    };
    materialize(spec, truth, rng)
}

/// Generates from `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let mut rng = RngState::new(spec.seed);
    match spec.kind {
        SyntheticKind::Linear => gen_linear_k(spec, &mut rng),
        SyntheticKind::Quadratic => gen_quadratic_k(spec, &mut rng),
    }
}

/// Regenerates a dataset from an explicit map (used to pin weights in tests
/// and to rebuild data from an audit sidecar).
pub fn generate_with_truth(spec: &SyntheticSpec, truth: GeneratorTruth, rng: &mut RngState) -> Result<SyntheticData> {
    spec.validate()?;
    materialize(spec, truth, rng)
}

/// Seeded shuffle and split; classification splits are stratified.
///
/// The train side gets `round(fraction·n)` rows. Per class, the train share is
/// `floor(fraction·n_c)` plus one for the classes with the largest remainders
/// until the total is met.
pub fn split(ds: &Dataset, fraction: f64, rng: &mut RngState) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n = ds.n();
    let n_train = libm::round(fraction * n as f64) as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Parameter(format!(
            "split of {n} rows at {fraction} leaves one side empty"
        )));
    }

    let (mut train_idx, mut test_idx) = match (&ds.y, ds.classes) {
        (Targets::Classes(labels), Some(k)) => {
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &l) in labels.iter().enumerate() {
                groups[l].push(i);
            }
            for g in &mut groups {
                rng.shuffle(g);
            }
            let exact: Vec<f64> = groups.iter().map(|g| fraction * g.len() as f64).collect();
            let mut take: Vec<usize> = exact.iter().map(|&e| libm::floor(e) as usize).collect();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                let ra = exact[a] - take[a] as f64;
                let rb = exact[b] - take[b] as f64;
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            let mut missing = n_train.saturating_sub(take.iter().sum());
            for &c in order.iter().cycle().take(k * 2) {
                if missing == 0 {
                    break;
                }
                if take[c] < groups[c].len() {
                    take[c] += 1;
                    missing -= 1;
                }
            }
            let mut train = Vec::with_capacity(n_train);
            let mut test = Vec::with_capacity(n - n_train);
            for (g, &t) in groups.iter().zip(&take) {
                train.extend_from_slice(&g[..t]);
                test.extend_from_slice(&g[t..]);
            }
            (train, test)
        }
        _ => {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            let test = idx.split_off(n_train);
            (idx, test)
        }
    };
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Parameter("split leaves one side empty".into()));
    }
    rng.shuffle(&mut train_idx);
    rng.shuffle(&mut test_idx);
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Per-feature z-scoring with statistics from the training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Result<Scaler> {
        if x.rows() == 0 {
            return Err(Error::Parameter("cannot fit a scaler on zero rows".into()));
        }
        let n = x.rows() as f64;
        let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((v, &xi), &m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (xi - m) * (xi - m);
            }
        }
        let std = var.into_iter().map(|v| libm::sqrt(v / n)).collect();
        Ok(Scaler { mean, std })
    }

    /// Zero-variance features map to 0.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape("Scaler::transform", self.mean.len(), x.cols()));
        }
        let mut out = x.clone();
        let cols = x.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % cols;
            *v = if self.std[c] > 0.0 {
                (*v - self.mean[c]) / self.std[c]
            } else {
                0.0
            };
        }
        Ok(out)
    }
}

pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Scaler)> {
    let scaler = Scaler::fit(&train.x)?;
    let tr = Dataset {
        x: scaler.transform(&train.x)?,
        ..train.clone()
    };
    let te = Dataset {
        x: scaler.transform(&test.x)?,
        ..test.clone()
    };
    Ok((tr, te, scaler))
}
