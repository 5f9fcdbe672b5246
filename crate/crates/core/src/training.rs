//! End-to-end training.
//!
//! One step of [`train_step`]:
//!
//! 1. forward with effective (masked) weights, producing one prediction per head;
//! 2. loss = unweighted mean of the per-head losses (or the loss of the fused
//!    prediction when `loss_on_fused` is set);
//! 3. backward into leaf logits, routing parameters, projections and, through
//!    the mask derivative, the shadow weights;
//! 4. one optimizer update of every parameter at once;
//! 5. refresh the layer statistics and masks from the new shadow weights.
//!
//! Effective weights are rebuilt from shadow weights and masks on every
//! forward pass, so nothing extra is stored for them.
//!
//! Masks start as all ones and are first refreshed after the first update.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::ensemble::fuse;
use crate::error::{Error, Result};
use crate::forest::{self, ForestConfig, ForestGrads, ForestHead, HeadKind, RoutingProbs};
use crate::matrix::{softmax_rows, softmax_rows_backward, Matrix};
use crate::metrics::{accuracy, argmax_rows, mse_metric};
use crate::network::{self, build_network, DenseLayer, ForwardTrace, NetworkSpec};
use crate::pruning::{self, MaskState, PruneConfig, PruneMode};
use crate::rng::RngState;

/// Probabilities are clamped to this before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Classification { classes: usize },
    Regression,
}

impl Task {
    pub fn output_dim(self) -> usize {
        match self {
            Task::Classification { classes } => classes,
            Task::Regression => 1,
        }
    }

    fn head_kind(self) -> HeadKind {
        match self {
            Task::Classification { classes } => HeadKind::Classification { classes },
            Task::Regression => HeadKind::Regression,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Task::Classification { .. } => "classification",
            Task::Regression => "regression",
        }
    }
}

/// Where forest heads attach.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadPlacement {
    /// One head after every layer, including the last.
    EveryLayer,
    /// A single head after the last layer.
    LastLayer,
    /// No forests: the last layer has the task's output width and is read
    /// directly (softmax for classification).
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden widths; defaults to `[2d, 2d]`.
    pub hidden: Option<Vec<usize>>,
    /// Width of the last backbone layer; defaults to `2d` with forest heads.
    /// Ignored (forced to the task's output width) when there are no heads.
    pub output_dim: Option<usize>,
    pub forest: ForestConfig,
    pub placement: HeadPlacement,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: None,
            output_dim: None,
            forest: ForestConfig::default(),
            placement: HeadPlacement::EveryLayer,
        }
    }
}

impl ModelConfig {
    /// Plain fully-connected classifier with the same backbone layout.
    pub fn fcnn() -> Self {
        ModelConfig {
            placement: HeadPlacement::None,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub task: Task,
    /// Backbone layers; `weights` hold the shadow weights.
    pub layers: Vec<DenseLayer>,
    pub layer_masks: Vec<MaskState>,
    /// Forest heads; `embed_proj` holds the shadow projection.
    pub heads: Vec<ForestHead>,
    /// Backbone layer index each head reads.
    pub head_layers: Vec<usize>,
    pub head_masks: Vec<MaskState>,
}

impl Model {
    pub fn new(input_dim: usize, task: Task, cfg: &ModelConfig, rng: &mut RngState) -> Result<Model> {
        if let Task::Classification { classes } = task {
            if classes < 2 {
                return Err(Error::Parameter(format!("need >= 2 classes, got {classes}")));
            }
        }
        let direct = cfg.placement == HeadPlacement::None;
        let output_dim = if direct {
            task.output_dim()
        } else {
            cfg.output_dim.unwrap_or(2 * input_dim)
        };
        let spec = match &cfg.hidden {
            Some(h) => NetworkSpec::with_hidden(input_dim, output_dim, h.clone()),
            None => NetworkSpec::new(input_dim, output_dim),
        };
        let layers = build_network(&spec, rng)?;
        let head_layers: Vec<usize> = match cfg.placement {
            HeadPlacement::EveryLayer => (0..layers.len()).collect(),
            HeadPlacement::LastLayer => vec![layers.len() - 1],
            HeadPlacement::None => Vec::new(),
        };
        let heads = head_layers
            .iter()
            .map(|&l| ForestHead::new(&cfg.forest, layers[l].output_dim(), task.head_kind(), rng))
            .collect::<Result<Vec<_>>>()?;
        let layer_masks = layers
            .iter()
            .map(|l| MaskState::ones(l.weights.rows(), l.weights.cols()))
            .collect();
        let head_masks = heads
            .iter()
            .map(|h| MaskState::ones(h.embed_proj.rows(), h.embed_proj.cols()))
            .collect();
        Ok(Model {
            task,
            layers,
            layer_masks,
            heads,
            head_layers,
            head_masks,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn is_direct(&self) -> bool {
        self.heads.is_empty()
    }

    /// Checks all structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Data("model has no layers".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape("Model", pair[0].output_dim(), format!("{} at layer {}", pair[1].input_dim(), i + 1)));
            }
        }
        for (l, m) in self.layers.iter().zip(&self.layer_masks) {
            if l.bias.len() != l.output_dim() || m.mask.shape() != l.weights.shape() {
                return Err(Error::Data("layer bias or mask shape does not match weights".into()));
            }
        }
        if self.layer_masks.len() != self.layers.len()
            || self.head_layers.len() != self.heads.len()
            || self.head_masks.len() != self.heads.len()
        {
            return Err(Error::Data("model component counts are inconsistent".into()));
        }
        for ((h, &l), m) in self.heads.iter().zip(&self.head_layers).zip(&self.head_masks) {
            h.validate()?;
            let width = self
                .layers
                .get(l)
                .ok_or_else(|| Error::Data(format!("head attached to missing layer {l}")))?
                .output_dim();
            if h.input_width() != width || m.mask.shape() != h.embed_proj.shape() {
                return Err(Error::Data(format!("head on layer {l} has mismatched projection")));
            }
            if h.kind != self.task.head_kind() {
                return Err(Error::Data("head kind does not match the task".into()));
            }
        }
        if self.is_direct() && self.layers.last().map(DenseLayer::output_dim) != Some(self.task.output_dim()) {
            return Err(Error::Data("direct-output model needs the task's output width".into()));
        }
        Ok(())
    }

    pub fn effective_layers(&self) -> Result<Vec<DenseLayer>> {
        self.layers
            .iter()
            .zip(&self.layer_masks)
            .map(|(l, m)| Ok(l.with_weights(pruning::masked_weights(&l.weights, &m.mask)?)))
            .collect()
    }

    pub fn effective_heads(&self) -> Result<Vec<ForestHead>> {
        self.heads
            .iter()
            .zip(&self.head_masks)
            .map(|(h, m)| {
                let mut eff = h.clone();
                eff.embed_proj = pruning::masked_weights(&h.embed_proj, &m.mask)?;
                Ok(eff)
            })
            .collect()
    }

    /// Recomputes every mask from the current shadow weights.
    pub fn refresh_masks(&mut self, cfg: &PruneConfig) -> Result<()> {
        for (l, m) in self.layers.iter().zip(&mut self.layer_masks) {
            m.refresh(&l.weights, cfg)?;
        }
        for (h, m) in self.heads.iter().zip(&mut self.head_masks) {
            m.refresh(&h.embed_proj, cfg)?;
        }
        Ok(())
    }

    /// Fraction of pruned mask entries in each backbone layer.
    pub fn sparsity(&self) -> Vec<f64> {
        self.layer_masks.iter().map(|m| pruning::sparsity(&m.mask)).collect()
    }

    /// Pruned fraction over all backbone weights.
    pub fn backbone_sparsity(&self) -> f64 {
        let total: usize = self.layer_masks.iter().map(|m| m.mask.len()).sum();
        let pruned: f64 = self
            .layer_masks
            .iter()
            .map(|m| pruning::sparsity(&m.mask) * m.mask.len() as f64)
            .sum();
        if total == 0 {
            0.0
        } else {
            pruned / total as f64
        }
    }

    /// Every trainable parameter, in a fixed order shared with [`ModelGrads::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weights.data_mut());
            out.push(&mut l.bias);
        }
        for h in &mut self.heads {
            out.push(h.embed_proj.data_mut());
            out.push(&mut h.embed_bias);
            out.push(h.routing_weights.data_mut());
            out.push(&mut h.routing_bias);
            out.push(h.leaf_logits.data_mut());
        }
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.param_slices_mut().iter().map(|s| s.len()).sum()
    }

    fn run(&self, x: &Matrix, dropout: f64, training: bool, rng: &mut RngState) -> Result<Pass> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("model forward", self.input_dim(), x.cols()));
        }
        let layers = self.effective_layers()?;
        let heads = self.effective_heads()?;
        let trace = network::forward(&layers, x, dropout, training, rng)?;
        let mut routes = Vec::with_capacity(heads.len());
        let mut outputs = Vec::with_capacity(heads.len().max(1));
        if heads.is_empty() {
            let out = trace.output();
            outputs.push(match self.task {
                Task::Classification { .. } => softmax_rows(out),
                Task::Regression => out.clone(),
            });
        }
        for (h, &l) in heads.iter().zip(&self.head_layers) {
            let r = forest::route(h, &trace.activations[l])?;
            outputs.push(forest::predict(h, &r)?);
            routes.push(r);
        }
        Ok(Pass {
            layers,
            heads,
            trace,
            routes,
            outputs,
        })
    }

    /// Eval-mode prediction of every head (one entry for direct models).
    pub fn predict_heads(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut rng = RngState::new(0);
        Ok(self.run(x, 0.0, false, &mut rng)?.outputs)
    }

    /// Loss and shadow-parameter gradients for one batch.
    pub fn loss_and_grads(
        &self,
        x: &Matrix,
        y: &Targets,
        cfg: &TrainConfig,
        rng: &mut RngState,
    ) -> Result<(f64, ModelGrads)> {
        if y.len() != x.rows() {
            return Err(Error::shape("loss_and_grads", x.rows(), y.len()));
        }
        let pass = self.run(x, cfg.dropout, true, rng)?;
        let k = pass.outputs.len();

        let mut upstream: Vec<Matrix> = Vec::with_capacity(k);
        let loss = if cfg.loss_on_fused && k > 1 {
            let fused = fuse(&pass.outputs)?;
            let (l, g) = task_loss(self.task, &fused, y)?;
            let g = g.scale(1.0 / k as f64);
            upstream.extend(core::iter::repeat(g).take(k));
            l
        } else {
            let mut total = 0.0;
            for out in &pass.outputs {
                let (l, g) = task_loss(self.task, out, y)?;
                total += l;
                upstream.push(g.scale(1.0 / k as f64));
            }
            total / k as f64
        };

        let mut layer_up: Vec<Option<Matrix>> = vec![None; self.layers.len()];
        let mut head_grads = Vec::with_capacity(self.heads.len());
        if self.is_direct() {
            let g = upstream.pop().expect("one output");
            let g = match self.task {
                Task::Classification { .. } => softmax_rows_backward(&pass.outputs[0], &g)?,
                Task::Regression => g,
            };
            layer_up[self.layers.len() - 1] = Some(g);
        } else {
            for (i, (h, &l)) in pass.heads.iter().zip(&self.head_layers).enumerate() {
                let act = &pass.trace.activations[l];
                let fg = forest::forest_backward(h, &pass.routes[i], act, &upstream[i])?;
                match &mut layer_up[l] {
                    Some(acc) => acc.add_assign(&fg.activation)?,
                    slot @ None => *slot = Some(fg.activation.clone()),
                }
                head_grads.push(fg);
            }
        }

        let net = network::backward(&pass.layers, &pass.trace, &layer_up)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for ((l, m), (gw, gb)) in self
            .layers
            .iter()
            .zip(&self.layer_masks)
            .zip(net.weights.into_iter().zip(net.biases))
        {
            layers.push((m.shadow_grad(&l.weights, &gw, &cfg.prune)?, gb));
        }
        for ((h, m), g) in self.heads.iter().zip(&self.head_masks).zip(&mut head_grads) {
            g.embed_proj = m.shadow_grad(&h.embed_proj, &g.embed_proj, &cfg.prune)?;
        }
        Ok((
            loss,
            ModelGrads {
                layers,
                heads: head_grads,
            },
        ))
    }
}

struct Pass {
    layers: Vec<DenseLayer>,
    heads: Vec<ForestHead>,
    trace: ForwardTrace,
    routes: Vec<RoutingProbs>,
    outputs: Vec<Matrix>,
}

/// Gradients mirroring [`Model`]'s trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub heads: Vec<ForestGrads>,
}

impl ModelGrads {
    /// Same order as [`Model::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in &self.layers {
            out.push(w.data());
            out.push(b);
        }
        for h in &self.heads {
            out.push(h.embed_proj.data());
            out.push(&h.embed_bias);
            out.push(h.routing_weights.data());
            out.push(&h.routing_bias);
            out.push(h.leaf_logits.data());
        }
        out
    }
}

fn task_loss(task: Task, pred: &Matrix, y: &Targets) -> Result<(f64, Matrix)> {
    match (task, y) {
        (Task::Classification { .. }, Targets::Classes(labels)) => loss_ce(pred, labels),
        (Task::Regression, Targets::Values(t)) => loss_mse(pred, t),
        _ => Err(Error::Data(format!("targets do not match a {} model", task.name()))),
    }
}

/// Mean cross-entropy `-ln p[label]` and its gradient w.r.t. `pred`.
pub fn loss_ce(pred: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if pred.rows() != labels.len() {
        return Err(Error::shape("loss_ce", pred.rows(), labels.len()));
    }
    let n = labels.len() as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l >= pred.cols() {
            return Err(Error::Data(format!("label {l} out of range for {} classes", pred.cols())));
        }
        let p = pred.get(i, l);
        if p > LOG_CLAMP {
            total -= libm::log(p);
            grad.set(i, l, -1.0 / (n * p));
        } else {
            total -= libm::log(LOG_CLAMP);
        }
    }
    Ok((total / n, grad))
}

/// Mean squared error over an `n × 1` prediction and its gradient `2(p - t)/n`.
pub fn loss_mse(pred: &Matrix, targets: &[f64]) -> Result<(f64, Matrix)> {
    if pred.len() != targets.len() || pred.cols() > 1 {
        return Err(Error::shape("loss_mse", targets.len(), pred.len()));
    }
    let n = targets.len() as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = 0.0;
    for (i, (&p, &t)) in pred.data().iter().zip(targets).enumerate() {
        let diff = p - t;
        total += diff * diff;
        grad.data_mut()[i] = 2.0 * diff / n;
    }
    Ok((total / n, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    /// Plain minibatch SGD.
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
    pub prune: PruneConfig,
    pub optimizer: Optimizer,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Train on the loss of the fused prediction instead of the mean head loss.
    pub loss_on_fused: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            dropout: 0.5,
            epochs: 20,
            seed: 0,
            prune: PruneConfig::default(),
            optimizer: Optimizer::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            loss_on_fused: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Parameter(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Parameter("Adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
        }
        self.prune.validate()
    }
}

/// First and second moment estimates per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        AdamState {
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_model(model: &mut Model) -> Self {
        let shapes: Vec<usize> = model.param_slices_mut().iter().map(|s| s.len()).collect();
        Self::new(&shapes)
    }
}

fn check_mirror(params: &[&mut [f64]], grads: &[&[f64]], state: Option<&AdamState>) -> Result<()> {
    let ok = params.len() == grads.len()
        && params.iter().zip(grads).all(|(p, g)| p.len() == g.len())
        && state.map_or(true, |s| {
            s.m.len() == params.len() && s.m.iter().zip(params).all(|(m, p)| m.len() == p.len())
        });
    if ok {
        Ok(())
    } else {
        Err(Error::shape("optimizer", "gradients mirroring parameters", "mismatched tensors"))
    }
}

/// Bias-corrected Adam step over every tensor.
pub fn adam_update(state: &mut AdamState, params: &mut [&mut [f64]], grads: &[&[f64]], cfg: &TrainConfig) -> Result<()> {
    check_mirror(params, grads, Some(state))?;
    state.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - libm::pow(b1, state.t as f64);
    let c2 = 1.0 - libm::pow(b2, state.t as f64);
    let lr = cfg.learning_rate;
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi -= lr * m_hat / (libm::sqrt(v_hat) + cfg.adam_eps);
        }
    }
    Ok(())
}

pub fn sgd_update(params: &mut [&mut [f64]], grads: &[&[f64]], cfg: &TrainConfig) -> Result<()> {
    check_mirror(params, grads, None)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pi, &gi) in p.iter_mut().zip(g.iter()) {
            *pi -= cfg.learning_rate * gi;
        }
    }
    Ok(())
}

/// One minibatch update; returns the batch loss.
pub fn train_step(
    model: &mut Model,
    x: &Matrix,
    y: &Targets,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    rng: &mut RngState,
) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::Parameter("empty batch".into()));
    }
    let (loss, grads) = model.loss_and_grads(x, y, cfg, rng)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss {loss} at optimizer step {} (batch of {})",
            adam.t + 1,
            x.rows()
        )));
    }
    let g = grads.slices();
    let mut params = model.param_slices_mut();
    match cfg.optimizer {
        Optimizer::Adam => adam_update(adam, &mut params, &g, cfg)?,
        Optimizer::Sgd => sgd_update(&mut params, &g, cfg)?,
    }
    if cfg.prune.mode != PruneMode::None {
        model.refresh_masks(&cfg.prune)?;
    }
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    /// Accuracy for classification, MSE for regression, on the eval set.
    pub metric: Option<f64>,
    /// Pruned fraction per backbone layer.
    pub sparsity: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn check_dataset(model: &Model, ds: &Dataset, name: &str) -> Result<()> {
    if ds.d() != model.input_dim() {
        return Err(Error::shape("fit", format!("{} features", model.input_dim()), format!("{} in {name} set", ds.d())));
    }
    match (model.task, &ds.y) {
        (Task::Classification { classes }, Targets::Classes(labels)) => {
            if let Some(l) = labels.iter().find(|&&l| l >= classes) {
                return Err(Error::Data(format!("{name} label {l} exceeds the model's {classes} classes")));
            }
        }
        (Task::Regression, Targets::Values(_)) => {}
        _ => return Err(Error::Data(format!("{name} targets do not match the model task"))),
    }
    Ok(())
}

/// Loss of the fused prediction plus the task metric.
pub fn evaluate_loss(model: &Model, ds: &Dataset) -> Result<(f64, f64)> {
    let fused = predict(model, &ds.x)?;
    match &ds.y {
        Targets::Classes(labels) => {
            let (l, _) = loss_ce(&fused, labels)?;
            Ok((l, accuracy(&argmax_rows(&fused), labels)?))
        }
        Targets::Values(t) => {
            let (l, _) = loss_mse(&fused, t)?;
            Ok((l, mse_metric(fused.data(), t)?))
        }
    }
}

/// Runs `cfg.epochs` epochs of shuffled minibatch training.
pub fn fit(model: &mut Model, train: &Dataset, eval: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    check_dataset(model, train, "train")?;
    if let Some(e) = eval {
        check_dataset(model, e, "eval")?;
    }
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if train.n() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    let mut rng = RngState::with_stream(cfg.seed, 1);
    let mut adam = AdamState::for_model(model);
    let mut order: Vec<usize> = (0..train.n()).collect();

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = train.x.select_rows(batch);
            let y = train.y.select(batch);
            let loss = train_step(model, &x, &y, cfg, &mut adam, &mut rng)
                .map_err(|e| annotate(e, epoch))?;
            loss_sum += loss * batch.len() as f64;
        }
        let (eval_loss, metric) = match eval {
            Some(ds) if ds.n() > 0 => {
                let (l, m) = evaluate_loss(model, ds)?;
                (Some(l), Some(m))
            }
            _ => (None, None),
        };
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train.n() as f64,
            eval_loss,
            metric,
            sparsity: model.sparsity(),
        });
    }
    Ok(history)
}

fn annotate(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(String::from(msg.as_str()) + &format!(" in epoch {}", epoch + 1)),
        other => other,
    }
}

/// Eval-mode prediction fused over all heads.
pub fn predict(model: &Model, x: &Matrix) -> Result<Matrix> {
    fuse(&model.predict_heads(x)?)
}
