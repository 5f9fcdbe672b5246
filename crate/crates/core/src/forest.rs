//! Differentiable decision-forest heads.
//!
//! A head reads one backbone layer's activation `a` and projects it to a small
//! embedding `z = a·Pᵀ + c`. Each of the `m` trees is a complete binary tree
//! with `2^(h-1) - 1` decision nodes and `2^(h-1)` leaves. Decision node `n`
//! sends a sample left with probability `d_n = σ(w_n·z + b_n)`; the reach
//! probability of a leaf is the product of those branch probabilities along
//! its root-to-leaf path. Stacking all leaves of all trees gives the routing
//! vector `p` of length `m·2^(h-1)`.
//!
//! Leaves carry free logits. For classification each row is softmaxed into a
//! class distribution `Π` and the head predicts `(1/m)·p·Π`; for regression
//! the raw leaf values are used instead.
//!
//! Nodes are stored per tree in heap order: node `i` has children `2i+1`
//! (left) and `2i+2` (right); leaf `l` is heap slot `N + l` with `N` internal
//! nodes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sigmoid, softmax_rows, softmax_rows_backward, Matrix};
use crate::rng::RngState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadKind {
    Classification { classes: usize },
    Regression,
}

impl HeadKind {
    pub fn output_dim(self) -> usize {
        match self {
            HeadKind::Classification { classes } => classes,
            HeadKind::Regression => 1,
        }
    }
}

/// Forest shape shared by every head of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub depth: usize,
    pub embed_dim: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 10,
            depth: 4,
            embed_dim: 8,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.depth == 0 || self.embed_dim == 0 {
            return Err(Error::Parameter(format!(
                "forest needs trees, depth and embed_dim >= 1, got {self:?}"
            )));
        }
        if self.depth > 20 {
            return Err(Error::Parameter(format!("tree depth {} is too large", self.depth)));
        }
        Ok(())
    }

    pub fn leaves_per_tree(&self) -> usize {
        1 << (self.depth - 1)
    }

    pub fn internal_per_tree(&self) -> usize {
        self.leaves_per_tree() - 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestHead {
    pub trees: usize,
    pub depth: usize,
    pub kind: HeadKind,
    /// `e × width` projection of the attached layer's activation.
    pub embed_proj: Matrix,
    pub embed_bias: Vec<f64>,
    /// One row per decision node, `(m·N) × e`, tree-major.
    pub routing_weights: Matrix,
    pub routing_bias: Vec<f64>,
    /// `(m·L) × k` for classification, `(m·L) × 1` for regression.
    pub leaf_logits: Matrix,
}

impl ForestHead {
    /// Random head for a layer of the given width.
    pub fn new(cfg: &ForestConfig, width: usize, kind: HeadKind, rng: &mut RngState) -> Result<Self> {
        cfg.validate()?;
        if width == 0 {
            return Err(Error::Parameter("forest head needs a layer width >= 1".into()));
        }
        if let HeadKind::Classification { classes } = kind {
            if classes < 2 {
                return Err(Error::Parameter(format!(
                    "classification head needs >= 2 classes, got {classes}"
                )));
            }
        }
        let e = cfg.embed_dim;
        let nodes = cfg.trees * cfg.internal_per_tree();
        let leaves = cfg.trees * cfg.leaves_per_tree();
        let embed_proj = rng.normal_matrix(e, width, 0.0, libm::sqrt(1.0 / width as f64));
        let routing_weights = rng.normal_matrix(nodes, e, 0.0, libm::sqrt(1.0 / e as f64));
        let leaf_logits = rng.normal_matrix(leaves, kind.output_dim(), 0.0, 1.0);
        Ok(ForestHead {
            trees: cfg.trees,
            depth: cfg.depth,
            kind,
            embed_proj,
            embed_bias: vec![0.0; e],
            routing_weights,
            routing_bias: vec![0.0; nodes],
            leaf_logits,
        })
    }

    pub fn config(&self) -> ForestConfig {
        ForestConfig {
            trees: self.trees,
            depth: self.depth,
            embed_dim: self.embed_proj.rows(),
        }
    }

    pub fn leaves_per_tree(&self) -> usize {
        1 << (self.depth - 1)
    }

    pub fn internal_per_tree(&self) -> usize {
        self.leaves_per_tree() - 1
    }

    pub fn input_width(&self) -> usize {
        self.embed_proj.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.kind.output_dim()
    }

    /// Checks every shape invariant; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        self.config().validate()?;
        let e = self.embed_proj.rows();
        let nodes = self.trees * self.internal_per_tree();
        let leaves = self.trees * self.leaves_per_tree();
        let ok = self.embed_bias.len() == e
            && self.routing_weights.shape() == (nodes, e)
            && self.routing_bias.len() == nodes
            && self.leaf_logits.shape() == (leaves, self.kind.output_dim());
        if !ok {
            return Err(Error::shape(
                "ForestHead",
                format!("{nodes} decision nodes over {e} dims and {leaves} leaves"),
                format!(
                    "routing {:?}, leaves {:?}",
                    self.routing_weights.shape(),
                    self.leaf_logits.shape()
                ),
            ));
        }
        Ok(())
    }
}

/// Output of [`route`]: leaf reach probabilities plus the intermediate values
/// the backward pass needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingProbs {
    /// `batch × (m·L)` leaf reach probabilities.
    pub p: Matrix,
    /// `batch × (m·N)` left-branch probabilities of every decision node.
    pub decisions: Matrix,
    /// `batch × e` embedding the decisions were computed from.
    pub embedding: Matrix,
}

/// Fills `reach` (length `2N+1`, heap order) from one tree's decisions.
#[inline]
fn reach_probabilities(decisions: &[f64], reach: &mut [f64]) {
    reach[0] = 1.0;
    for (i, &d) in decisions.iter().enumerate() {
        let mu = reach[i];
        reach[2 * i + 1] = mu * d;
        reach[2 * i + 2] = mu * (1.0 - d);
    }
}

/// Routing from already-computed decision-node probabilities.
pub fn route_from_decisions(trees: usize, depth: usize, decisions: &Matrix) -> Result<Matrix> {
    let leaves = 1usize << (depth - 1);
    let internal = leaves - 1;
    if decisions.cols() != trees * internal {
        return Err(Error::shape("route_from_decisions", trees * internal, decisions.cols()));
    }
    let mut p = Matrix::zeros(decisions.rows(), trees * leaves);
    let mut reach = vec![0.0; 2 * internal + 1];
    for s in 0..decisions.rows() {
        let row = decisions.row(s);
        let out = p.row_mut(s);
        for t in 0..trees {
            reach_probabilities(&row[t * internal..(t + 1) * internal], &mut reach);
            out[t * leaves..(t + 1) * leaves].copy_from_slice(&reach[internal..]);
        }
    }
    Ok(p)
}

pub fn route(head: &ForestHead, activation: &Matrix) -> Result<RoutingProbs> {
    if activation.cols() != head.input_width() {
        return Err(Error::shape("route", head.input_width(), activation.cols()));
    }
    let mut embedding = activation.matmul_transb(&head.embed_proj)?;
    embedding.add_row_broadcast(&head.embed_bias)?;
    let mut decisions = embedding.matmul_transb(&head.routing_weights)?;
    decisions.add_row_broadcast(&head.routing_bias)?;
    for v in decisions.data_mut() {
        *v = sigmoid(*v);
    }
    let p = route_from_decisions(head.trees, head.depth, &decisions)?;
    Ok(RoutingProbs {
        p,
        decisions,
        embedding,
    })
}

fn check_routing(head: &ForestHead, probs: &RoutingProbs) -> Result<()> {
    let leaves = head.trees * head.leaves_per_tree();
    if probs.p.cols() != leaves {
        return Err(Error::shape("forest prediction", leaves, probs.p.cols()));
    }
    Ok(())
}

/// `(1/m)·p·softmax_rows(leaf_logits)`.
pub fn predict_class(head: &ForestHead, probs: &RoutingProbs) -> Result<Matrix> {
    if !matches!(head.kind, HeadKind::Classification { .. }) {
        return Err(Error::Usage("predict_class called on a regression head".into()));
    }
    check_routing(head, probs)?;
    let pi = softmax_rows(&head.leaf_logits);
    Ok(probs.p.matmul(&pi)?.scale(1.0 / head.trees as f64))
}

/// `(1/m)·p·leaf_values`.
pub fn predict_regress(head: &ForestHead, probs: &RoutingProbs) -> Result<Matrix> {
    if head.kind != HeadKind::Regression {
        return Err(Error::Usage("predict_regress called on a classification head".into()));
    }
    check_routing(head, probs)?;
    Ok(probs.p.matmul(&head.leaf_logits)?.scale(1.0 / head.trees as f64))
}

/// Dispatches on the head kind.
pub fn predict(head: &ForestHead, probs: &RoutingProbs) -> Result<Matrix> {
    match head.kind {
        HeadKind::Classification { .. } => predict_class(head, probs),
        HeadKind::Regression => predict_regress(head, probs),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestGrads {
    pub embed_proj: Matrix,
    pub embed_bias: Vec<f64>,
    pub routing_weights: Matrix,
    pub routing_bias: Vec<f64>,
    pub leaf_logits: Matrix,
    /// Gradient w.r.t. the attached layer's activation.
    pub activation: Matrix,
}

/// Reverse-mode gradients of the head prediction given `upstream = dL/d(prediction)`.
pub fn forest_backward(
    head: &ForestHead,
    probs: &RoutingProbs,
    activation: &Matrix,
    upstream: &Matrix,
) -> Result<ForestGrads> {
    check_routing(head, probs)?;
    let batch = activation.rows();
    let k = head.output_dim();
    if upstream.shape() != (batch, k) || probs.p.rows() != batch {
        return Err(Error::shape(
            "forest_backward",
            format!("{batch}x{k} upstream"),
            format!("{}x{}", upstream.rows(), upstream.cols()),
        ));
    }
    if activation.cols() != head.input_width() {
        return Err(Error::shape("forest_backward", head.input_width(), activation.cols()));
    }
    let inv_m = 1.0 / head.trees as f64;

    // leaf side: out = inv_m · p · V, with V = softmax(logits) or the raw logits
    let (leaf_values, grad_p, grad_leaf_values) = match head.kind {
        HeadKind::Classification { .. } => {
            let pi = softmax_rows(&head.leaf_logits);
            let gp = upstream.matmul_transb(&pi)?.scale(inv_m);
            let gpi = probs.p.matmul_transa(upstream)?.scale(inv_m);
            (Some(pi), gp, gpi)
        }
        HeadKind::Regression => {
            let gp = upstream.matmul_transb(&head.leaf_logits)?.scale(inv_m);
            let gv = probs.p.matmul_transa(upstream)?.scale(inv_m);
            (None, gp, gv)
        }
    };
    let leaf_logits = match &leaf_values {
        Some(pi) => softmax_rows_backward(pi, &grad_leaf_values)?,
        None => grad_leaf_values,
    };

    // routing side: back through the path products, then the sigmoids
    let leaves = head.leaves_per_tree();
    let internal = head.internal_per_tree();
    let mut grad_pre = Matrix::zeros(batch, head.trees * internal);
    let mut reach = vec![0.0; 2 * internal + 1];
    let mut grad_reach = vec![0.0; 2 * internal + 1];
    for s in 0..batch {
        let d_row = probs.decisions.row(s);
        let gp_row = grad_p.row(s);
        let out = grad_pre.row_mut(s);
        for t in 0..head.trees {
            let d = &d_row[t * internal..(t + 1) * internal];
            reach_probabilities(d, &mut reach);
            grad_reach[internal..].copy_from_slice(&gp_row[t * leaves..(t + 1) * leaves]);
            for i in (0..internal).rev() {
                let (gl, gr) = (grad_reach[2 * i + 1], grad_reach[2 * i + 2]);
                grad_reach[i] = d[i] * gl + (1.0 - d[i]) * gr;
                let grad_d = reach[i] * (gl - gr);
                out[t * internal + i] = grad_d * d[i] * (1.0 - d[i]);
            }
        }
    }

    let routing_weights = grad_pre.matmul_transa(&probs.embedding)?;
    let routing_bias = grad_pre.column_sums();
    let grad_embed = grad_pre.matmul(&head.routing_weights)?;
    let embed_proj = grad_embed.matmul_transa(activation)?;
    let embed_bias = grad_embed.column_sums();
    let activation_grad = grad_embed.matmul(&head.embed_proj)?;

    Ok(ForestGrads {
        embed_proj,
        embed_bias,
        routing_weights,
        routing_bias,
        leaf_logits,
        activation: activation_grad,
    })
}
