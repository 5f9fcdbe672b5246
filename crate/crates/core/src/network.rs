//! Fully-connected backbone.
//!
//! Widths follow `d → 2d → 2d → o`. Hidden layers use ReLU, the last layer is
//! affine. Every layer's output is exposed in the [`ForwardTrace`] because a
//! forest head may read any of them, and [`backward`] accepts an upstream
//! gradient per layer and sums them with the gradient flowing back from above.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative at the pre-activation `x`; ReLU uses 0 at the kink.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer. `weights` is `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Same bias and activation, different weight matrix (used for masked weights).
    pub fn with_weights(&self, weights: Matrix) -> DenseLayer {
        DenseLayer {
            weights,
            bias: self.bias.clone(),
            activation: self.activation,
        }
    }

    fn check(&self) -> Result<()> {
        if self.bias.len() != self.weights.rows() {
            return Err(Error::shape(
                "DenseLayer",
                format!("bias of length {}", self.weights.rows()),
                self.bias.len(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
}

impl NetworkSpec {
    /// The default `d → 2d → 2d → o` layout.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        NetworkSpec {
            input_dim,
            output_dim,
            hidden: vec![2 * input_dim, 2 * input_dim],
        }
    }

    pub fn with_hidden(input_dim: usize, output_dim: usize, hidden: Vec<usize>) -> Self {
        NetworkSpec {
            input_dim,
            output_dim,
            hidden,
        }
    }

    /// All widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths().iter().any(|&w| w == 0) {
            return Err(Error::Parameter(format!(
                "network widths must be >= 1, got {:?}",
                self.widths()
            )));
        }
        Ok(())
    }
}

/// Layers with Gaussian weights of stddev `sqrt(2 / fan_in)` and zero biases.
pub fn build_network(spec: &NetworkSpec, rng: &mut RngState) -> Result<Vec<DenseLayer>> {
    spec.validate()?;
    let widths = spec.widths();
    let last = widths.len() - 2;
    Ok(widths
        .windows(2)
        .enumerate()
        .map(|(i, pair)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = libm::sqrt(2.0 / fan_in as f64);
            DenseLayer {
                weights: rng.normal_matrix(fan_out, fan_in, 0.0, std),
                bias: vec![0.0; fan_out],
                activation: if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            }
        })
        .collect())
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub pre_activations: Vec<Matrix>,
    /// Post-activation (and post-dropout) output of each layer.
    pub activations: Vec<Matrix>,
    /// Per-unit dropout scale (0 or `1/(1-rate)`) for layers where dropout ran.
    pub dropout_masks: Vec<Option<Matrix>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().unwrap_or(&self.input)
    }
}

/// Forward pass. Inverted dropout is applied to hidden-layer outputs only,
/// and only when `training` is set and `dropout_rate > 0`.
pub fn forward(
    layers: &[DenseLayer],
    x: &Matrix,
    dropout_rate: f64,
    training: bool,
    rng: &mut RngState,
) -> Result<ForwardTrace> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Parameter(format!(
            "dropout rate must lie in [0, 1), got {dropout_rate}"
        )));
    }
    let mut pre_activations = Vec::with_capacity(layers.len());
    let mut activations: Vec<Matrix> = Vec::with_capacity(layers.len());
    let mut dropout_masks = Vec::with_capacity(layers.len());
    let keep_scale = 1.0 / (1.0 - dropout_rate);

    for (i, layer) in layers.iter().enumerate() {
        layer.check()?;
        let input = activations.last().unwrap_or(x);
        if input.cols() != layer.input_dim() {
            return Err(Error::shape(
                "forward",
                format!("{} input columns at layer {i}", layer.input_dim()),
                input.cols(),
            ));
        }
        let mut pre = input.matmul_transb(&layer.weights)?;
        pre.add_row_broadcast(&layer.bias)?;
        let mut act = pre.map(|v| layer.activation.apply(v));

        let hidden = i + 1 < layers.len();
        let mask = if training && hidden && dropout_rate > 0.0 {
            let mut mask = Matrix::zeros(act.rows(), act.cols());
            for m in mask.data_mut() {
                *m = if rng.uniform() < dropout_rate { 0.0 } else { keep_scale };
            }
            act = act.hadamard(&mask)?;
            Some(mask)
        } else {
            None
        };

        if !act.is_finite() {
            return Err(Error::Numeric(format!("non-finite activation at layer {i}")));
        }
        pre_activations.push(pre);
        activations.push(act);
        dropout_masks.push(mask);
    }

    Ok(ForwardTrace {
        input: x.clone(),
        pre_activations,
        activations,
        dropout_masks,
    })
}

/// Gradients of the summed losses w.r.t. every layer parameter and the input.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub input: Matrix,
}

/// Reverse-mode pass. `upstream[i]` is the gradient w.r.t. `trace.activations[i]`
/// contributed by consumers of that layer (`None` for no contribution).
pub fn backward(
    layers: &[DenseLayer],
    trace: &ForwardTrace,
    upstream: &[Option<Matrix>],
) -> Result<NetworkGrads> {
    if upstream.len() != layers.len() || trace.activations.len() != layers.len() {
        return Err(Error::shape(
            "backward",
            format!("{} upstream entries and trace layers", layers.len()),
            format!("{} upstream, {} traced", upstream.len(), trace.activations.len()),
        ));
    }
    let n = layers.len();
    let mut weights = vec![Matrix::zeros(0, 0); n];
    let mut biases = vec![Vec::new(); n];
    let batch = trace.input.rows();

    // gradient w.r.t. the output of the layer currently being processed
    let mut carry: Option<Matrix> = None;
    let mut input_grad = Matrix::zeros(batch, trace.input.cols());

    for i in (0..n).rev() {
        let layer = &layers[i];
        let act = &trace.activations[i];
        let mut g = match (carry.take(), &upstream[i]) {
            (Some(mut c), Some(u)) => {
                c.add_assign(u)?;
                c
            }
            (Some(c), None) => c,
            (None, Some(u)) => u.clone(),
            (None, None) => Matrix::zeros(act.rows(), act.cols()),
        };
        if g.shape() != act.shape() {
            return Err(Error::shape(
                "backward",
                format!("{}x{} gradient at layer {i}", act.rows(), act.cols()),
                format!("{}x{}", g.rows(), g.cols()),
            ));
        }
        if let Some(mask) = &trace.dropout_masks[i] {
            g = g.hadamard(mask)?;
        }
        let pre = &trace.pre_activations[i];
        for (gv, &p) in g.data_mut().iter_mut().zip(pre.data()) {
            *gv *= layer.activation.derivative(p);
        }
        let input = if i == 0 { &trace.input } else { &trace.activations[i - 1] };
        weights[i] = g.matmul_transa(input)?;
        biases[i] = g.column_sums();
        let back = g.matmul(&layer.weights)?;
        if i == 0 {
            input_grad = back;
        } else {
            carry = Some(back);
        }
    }

    Ok(NetworkGrads {
        weights,
        biases,
        input: input_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_widths() {
        let mut rng = RngState::new(0);
        let layers = build_network(&NetworkSpec::new(14, 2), &mut rng).unwrap();
        let widths: Vec<usize> = core::iter::once(layers[0].input_dim())
            .chain(layers.iter().map(DenseLayer::output_dim))
            .collect();
        assert_eq!(widths, vec![14, 28, 28, 2]);
        assert_eq!(layers[0].activation, Activation::Relu);
        assert_eq!(layers[2].activation, Activation::Identity);
        assert!(layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));

        let layers = build_network(&NetworkSpec::new(1, 1), &mut rng).unwrap();
        assert_eq!(
            layers.iter().map(|l| l.weights.shape()).collect::<Vec<_>>(),
            vec![(2, 1), (2, 2), (1, 2)]
        );
    }

    #[test]
    fn rejects_zero_dims() {
        let mut rng = RngState::new(0);
        assert!(build_network(&NetworkSpec::new(0, 2), &mut rng).is_err());
        assert!(build_network(&NetworkSpec::new(3, 0), &mut rng).is_err());
    }

    #[test]
    fn deterministic_init() {
        let a = build_network(&NetworkSpec::new(5, 3), &mut RngState::new(11)).unwrap();
        let b = build_network(&NetworkSpec::new(5, 3), &mut RngState::new(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut rng = RngState::new(2);
        let mut layers = build_network(&NetworkSpec::new(3, 2), &mut rng).unwrap();
        for l in &mut layers {
            l.weights = Matrix::zeros(l.weights.rows(), l.weights.cols());
        }
        let x = rng.normal_matrix(4, 3, 0.0, 5.0);
        let trace = forward(&layers, &x, 0.0, false, &mut rng).unwrap();
        for act in &trace.activations {
            assert!(act.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn affine_single_layer() {
        let layers = vec![DenseLayer {
            weights: Matrix::from_rows(&[[2.0]]).unwrap(),
            bias: vec![1.0],
            activation: Activation::Identity,
        }];
        let x = Matrix::from_rows(&[[3.0]]).unwrap();
        let trace = forward(&layers, &x, 0.0, false, &mut RngState::new(0)).unwrap();
        assert_eq!(trace.output().data(), &[7.0]);
    }

    #[test]
    fn dropout_off_matches_eval() {
        let mut rng = RngState::new(5);
        let layers = build_network(&NetworkSpec::new(4, 3), &mut rng).unwrap();
        let x = rng.normal_matrix(6, 4, 0.0, 1.0);
        let a = forward(&layers, &x, 0.0, true, &mut RngState::new(1)).unwrap();
        let b = forward(&layers, &x, 0.0, false, &mut RngState::new(1)).unwrap();
        assert_eq!(a, b);
        // eval mode ignores the rate entirely
        let c = forward(&layers, &x, 0.5, false, &mut RngState::new(1)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn dropout_scales_kept_units() {
        let mut rng = RngState::new(5);
        let layers = build_network(&NetworkSpec::new(4, 3), &mut rng).unwrap();
        let x = rng.normal_matrix(6, 4, 0.0, 1.0);
        let eval = forward(&layers, &x, 0.5, false, &mut rng).unwrap();
        let train = forward(&layers, &x, 0.5, true, &mut rng).unwrap();
        let mask = train.dropout_masks[0].as_ref().unwrap();
        for ((&t, &e), &m) in train.activations[0]
            .data()
            .iter()
            .zip(eval.activations[0].data())
            .zip(mask.data())
        {
            assert!(m == 0.0 || m == 2.0);
            assert_eq!(t, e * m);
        }
        assert!(train.dropout_masks[2].is_none());
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = RngState::new(8);
        let layers = build_network(&NetworkSpec::new(3, 2), &mut rng).unwrap();
        let x = rng.normal_matrix(2, 3, 0.0, 1.0);
        let trace = forward(&layers, &x, 0.0, false, &mut rng).unwrap();
        let grads = backward(&layers, &trace, &[None, None, None]).unwrap();
        assert!(grads.weights.iter().all(|w| w.data().iter().all(|&v| v == 0.0)));
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_affine_gradient_is_input() {
        // loss = sum of outputs: dL/dW[o][i] = sum_b x[b][i]
        let layers = vec![DenseLayer {
            weights: Matrix::from_rows(&[[0.5, -1.0]]).unwrap(),
            bias: vec![0.2],
            activation: Activation::Identity,
        }];
        let x = Matrix::from_rows(&[[3.0, 4.0], [1.0, -2.0]]).unwrap();
        let trace = forward(&layers, &x, 0.0, false, &mut RngState::new(0)).unwrap();
        let up = Matrix::filled(2, 1, 1.0);
        let grads = backward(&layers, &trace, &[Some(up)]).unwrap();
        assert_eq!(grads.weights[0].data(), &[4.0, 2.0]);
        assert_eq!(grads.biases[0], vec![2.0]);
        assert_eq!(grads.input.data(), &[0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn upstream_shape_checked() {
        let mut rng = RngState::new(8);
        let layers = build_network(&NetworkSpec::new(3, 2), &mut rng).unwrap();
        let x = rng.normal_matrix(2, 3, 0.0, 1.0);
        let trace = forward(&layers, &x, 0.0, false, &mut rng).unwrap();
        assert!(backward(&layers, &trace, &[None, None]).is_err());
        let bad = Some(Matrix::zeros(2, 5));
        assert!(backward(&layers, &trace, &[None, None, bad]).is_err());
        assert!(forward(&layers, &Matrix::zeros(2, 4), 0.0, false, &mut rng).is_err());
    }
}
