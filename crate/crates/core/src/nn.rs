//! Feed-forward networks with hand-written backward passes.
//!
//! A [`Network`] is a chain of [`Layer`]s. `forward` returns the output
//! together with a [`ForwardTrace`] holding whatever the backward pass needs;
//! `backward` consumes the trace and accumulates parameter gradients into a
//! [`Gradients`] buffer, returning the gradient with respect to the input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Matrix;

pub const DEFAULT_BN_EPSILON: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    Relu,
    Dropout { rate: f64 },
    BatchNorm { dim: usize },
    Sigmoid,
}

impl LayerSpec {
    /// Trainable parameters. Batchnorm running statistics are not trainable
    /// and are excluded; its scale and shift are included.
    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => in_dim * out_dim + out_dim,
            LayerSpec::BatchNorm { dim } => 2 * dim,
            _ => 0,
        }
    }
}

pub fn parameter_count(specs: &[LayerSpec]) -> usize {
    specs.iter().map(LayerSpec::parameter_count).sum()
}

/// How a forward pass treats dropout and batch normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; batchnorm uses batch statistics and updates its
    /// running averages.
    Train,
    /// Deterministic but differentiable: dropout off, batchnorm uses its
    /// running statistics, nothing is mutated.
    Frozen,
    /// Same arithmetic as `Frozen`; the trace cannot be back-propagated.
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in_dim x out_dim`, so a batch maps as `x · W + b`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            epsilon: DEFAULT_BN_EPSILON,
            momentum: DEFAULT_BN_MOMENTUM,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Relu,
    Dropout(f64),
    BatchNorm(BatchNorm),
    Sigmoid,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                in_dim: d.weight.rows(),
                out_dim: d.weight.cols(),
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Dropout(rate) => LayerSpec::Dropout { rate: *rate },
            Layer::BatchNorm(bn) => LayerSpec::BatchNorm { dim: bn.dim() },
            Layer::Sigmoid => LayerSpec::Sigmoid,
        }
    }
}

#[derive(Clone, Debug)]
enum Cache {
    Dense { input: Matrix },
    Relu { output: Matrix },
    Dropout { mask: Option<Matrix> },
    BatchNorm { normalized: Matrix, inv_std: Vec<f64>, batch_stats: bool },
    Sigmoid { output: Matrix },
}

/// Per-layer activations recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    mode: Mode,
    caches: Vec<Cache>,
}

impl ForwardTrace {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.caches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }
}

/// Gradient buffers mirroring a network's trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
enum LayerGrad {
    Dense { weight: Matrix, bias: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
    None,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => LayerGrad::Dense {
                    weight: Matrix::zeros(d.weight.rows(), d.weight.cols()),
                    bias: vec![0.0; d.bias.len()],
                },
                Layer::BatchNorm(bn) => LayerGrad::BatchNorm {
                    gamma: vec![0.0; bn.dim()],
                    beta: vec![0.0; bn.dim()],
                },
                _ => LayerGrad::None,
            })
            .collect();
        Gradients { layers }
    }

    /// Flat views in the same order as [`Network::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerGrad::Dense { weight, bias } => {
                    out.push(weight.as_slice());
                    out.push(bias.as_slice());
                }
                LayerGrad::BatchNorm { gamma, beta } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                LayerGrad::None => {}
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network from a layer chain with Gaussian weights: std
    /// `sqrt(2/in)` for a dense layer feeding a ReLU, `sqrt(1/in)` otherwise;
    /// zero biases.
    pub fn new(specs: &[LayerSpec], rng: &mut RngState) -> Result<Self> {
        validate_chain(specs)?;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Dense { in_dim, out_dim } => {
                    let feeds_relu = matches!(specs.get(i + 1), Some(LayerSpec::Relu));
                    let gain = if feeds_relu { 2.0 } else { 1.0 };
                    let std = (gain / in_dim as f64).sqrt();
                    Layer::Dense(Dense {
                        weight: rng.gaussian_matrix(in_dim, out_dim, 0.0, std),
                        bias: vec![0.0; out_dim],
                    })
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Dropout { rate } => Layer::Dropout(rate),
                LayerSpec::BatchNorm { dim } => Layer::BatchNorm(BatchNorm::new(dim)),
                LayerSpec::Sigmoid => Layer::Sigmoid,
            };
            layers.push(layer);
        }
        Ok(Network { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        validate_chain(&specs)?;
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn in_dim(&self) -> usize {
        chain_dims(&self.specs()).0
    }

    pub fn out_dim(&self) -> usize {
        chain_dims(&self.specs()).1
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.specs())
    }

    /// Trainable parameters as flat mutable slices: for each dense layer its
    /// weight then bias, for each batchnorm its scale then shift.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense(d) => {
                    out.push(d.weight.as_mut_slice());
                    out.push(d.bias.as_mut_slice());
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_mut_slice());
                    out.push(bn.beta.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice());
                    out.push(d.bias.as_slice());
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_slice());
                    out.push(bn.beta.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    /// Mutable access to the `index`-th trainable scalar in
    /// [`Network::param_slices_mut`] order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for s in self.param_slices_mut() {
            if index < s.len() {
                return &mut s[index];
            }
            index -= s.len();
        }
        panic!("parameter index out of range");
    }

    /// Sets every dropout rate in the chain, e.g. to 0 for gradient checks.
    pub fn set_dropout(&mut self, rate: f64) {
        for l in &mut self.layers {
            if let Layer::Dropout(r) = l {
                *r = rate;
            }
        }
    }

    /// Forward pass. In `Train` mode dropout masks are drawn from `rng` and
    /// batchnorm running statistics are updated.
    pub fn forward(
        &mut self,
        input: &Matrix,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Matrix, ForwardTrace)> {
        let (out, trace, updates) = self.run(input, mode, Some(rng))?;
        for (idx, mean, var) in updates {
            if let Layer::BatchNorm(bn) = &mut self.layers[idx] {
                let m = bn.momentum;
                for j in 0..bn.dim() {
                    bn.running_mean[j] = m * bn.running_mean[j] + (1.0 - m) * mean[j];
                    bn.running_var[j] = m * bn.running_var[j] + (1.0 - m) * var[j];
                }
            }
        }
        Ok((out, trace))
    }

    /// Differentiable forward pass that never mutates the network.
    pub fn forward_frozen(&self, input: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        let (out, trace, _) = self.run(input, Mode::Frozen, None)?;
        Ok((out, trace))
    }

    /// Evaluation-mode output.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.run(input, Mode::Eval, None)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn run(
        &self,
        input: &Matrix,
        mode: Mode,
        mut rng: Option<&mut RngState>,
    ) -> Result<(Matrix, ForwardTrace, Vec<(usize, Vec<f64>, Vec<f64>)>)> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(
                "Network::forward",
                format!("batch has {} columns, network expects {}", input.cols(), self.in_dim()),
            ));
        }
        let keep = mode != Mode::Eval;
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut updates = Vec::new();
        let mut x = input.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            let (next, cache) = match layer {
                Layer::Dense(d) => {
                    let mut out = x.matmul(&d.weight)?;
                    for r in 0..out.rows() {
                        for (o, b) in out.row_mut(r).iter_mut().zip(&d.bias) {
                            *o += b;
                        }
                    }
                    (out, Cache::Dense { input: x })
                }
                Layer::Relu => {
                    let out = x.map(|v| if v > 0.0 { v } else { 0.0 });
                    (out.clone(), Cache::Relu { output: out })
                }
                Layer::Dropout(rate) => {
                    if mode == Mode::Train && *rate > 0.0 {
                        let rng = rng
                            .as_deref_mut()
                            .ok_or(Error::InvalidState("train-mode dropout needs an rng"))?;
                        let scale = 1.0 / (1.0 - rate);
                        let mask_data: Vec<f64> = (0..x.rows() * x.cols())
                            .map(|_| if rng.uniform() >= *rate { scale } else { 0.0 })
                            .collect();
                        let mask = Matrix::from_vec(x.rows(), x.cols(), mask_data)?;
                        (x.hadamard(&mask)?, Cache::Dropout { mask: Some(mask) })
                    } else {
                        (x, Cache::Dropout { mask: None })
                    }
                }
                Layer::BatchNorm(bn) => {
                    let dim = bn.dim();
                    let (mean, var, batch_stats) = if mode == Mode::Train {
                        let n = x.rows() as f64;
                        let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n).collect();
                        let mut var = vec![0.0; dim];
                        for row in x.iter_rows() {
                            for j in 0..dim {
                                var[j] += (row[j] - mean[j]).powi(2);
                            }
                        }
                        var.iter_mut().for_each(|v| *v /= n);
                        (mean, var, true)
                    } else {
                        (bn.running_mean.clone(), bn.running_var.clone(), false)
                    };
                    let inv_std: Vec<f64> =
                        var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
                    let mut normalized = x;
                    let mut out = Matrix::zeros(normalized.rows(), dim);
                    for r in 0..normalized.rows() {
                        let nr = normalized.row_mut(r);
                        for j in 0..dim {
                            nr[j] = (nr[j] - mean[j]) * inv_std[j];
                        }
                        let or = out.row_mut(r);
                        for j in 0..dim {
                            or[j] = bn.gamma[j] * nr[j] + bn.beta[j];
                        }
                    }
                    if batch_stats {
                        updates.push((idx, mean, var));
                    }
                    (
                        out,
                        Cache::BatchNorm {
                            normalized,
                            inv_std,
                            batch_stats,
                        },
                    )
                }
                Layer::Sigmoid => {
                    let out = x.map(sigmoid);
                    (out.clone(), Cache::Sigmoid { output: out })
                }
            };
            if keep {
                caches.push(cache);
            }
            x = next;
        }
        Ok((x, ForwardTrace { mode, caches }, updates))
    }

    /// Back-propagates `upstream` (dLoss/dOutput) through a trace produced by
    /// this network. Parameter gradients are added into `grads` when given.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        upstream: &Matrix,
        mut grads: Option<&mut Gradients>,
    ) -> Result<Matrix> {
        if trace.mode == Mode::Eval {
            return Err(Error::InvalidState("backward on an eval-mode trace"));
        }
        if trace.caches.len() != self.layers.len() {
            return Err(Error::InvalidState("trace does not belong to this network"));
        }
        if let Some(g) = grads.as_deref() {
            if g.layers.len() != self.layers.len() {
                return Err(Error::InvalidState("gradient buffer does not match network"));
            }
        }
        let mut delta = upstream.clone();
        for idx in (0..self.layers.len()).rev() {
            delta = match (&self.layers[idx], &trace.caches[idx]) {
                (Layer::Dense(d), Cache::Dense { input }) => {
                    if delta.shape() != (input.rows(), d.weight.cols()) {
                        return Err(Error::shape(
                            "Network::backward",
                            format!(
                                "upstream {}x{} at dense layer {idx}",
                                delta.rows(),
                                delta.cols()
                            ),
                        ));
                    }
                    if let Some(g) = grads.as_deref_mut() {
                        if let LayerGrad::Dense { weight, bias } = &mut g.layers[idx] {
                            weight.add_assign(&input.t_matmul(&delta)?)?;
                            for (b, s) in bias.iter_mut().zip(delta.column_sums()) {
                                *b += s;
                            }
                        }
                    }
                    delta.matmul_t(&d.weight)?
                }
                (Layer::Relu, Cache::Relu { output }) => {
                    let mut d = delta;
                    for (g, &o) in d.as_mut_slice().iter_mut().zip(output.as_slice()) {
                        if o <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    d
                }
                (Layer::Dropout(_), Cache::Dropout { mask }) => match mask {
                    Some(m) => delta.hadamard(m)?,
                    None => delta,
                },
                (
                    Layer::BatchNorm(bn),
                    Cache::BatchNorm {
                        normalized,
                        inv_std,
                        batch_stats,
                    },
                ) => {
                    let dim = bn.dim();
                    let n = delta.rows();
                    let mut dgamma = vec![0.0; dim];
                    let mut dbeta = vec![0.0; dim];
                    for r in 0..n {
                        let (dr, xr) = (delta.row(r), normalized.row(r));
                        for j in 0..dim {
                            dgamma[j] += dr[j] * xr[j];
                            dbeta[j] += dr[j];
                        }
                    }
                    if let Some(g) = grads.as_deref_mut() {
                        if let LayerGrad::BatchNorm { gamma, beta } = &mut g.layers[idx] {
                            for j in 0..dim {
                                gamma[j] += dgamma[j];
                                beta[j] += dbeta[j];
                            }
                        }
                    }
                    let mut dx = Matrix::zeros(n, dim);
                    if *batch_stats {
                        // dx = γ·inv_std/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
                        let nf = n as f64;
                        for r in 0..n {
                            let (dr, xr) = (delta.row(r), normalized.row(r));
                            let out = dx.row_mut(r);
                            for j in 0..dim {
                                out[j] = bn.gamma[j] * inv_std[j] / nf
                                    * (nf * dr[j] - dbeta[j] - xr[j] * dgamma[j]);
                            }
                        }
                    } else {
                        for r in 0..n {
                            let dr = delta.row(r);
                            let out = dx.row_mut(r);
                            for j in 0..dim {
                                out[j] = dr[j] * bn.gamma[j] * inv_std[j];
                            }
                        }
                    }
                    dx
                }
                (Layer::Sigmoid, Cache::Sigmoid { output }) => {
                    let local = output.map(|s| s * (1.0 - s));
                    delta.hadamard(&local)?
                }
                _ => return Err(Error::InvalidState("trace does not belong to this network")),
            };
        }
        Ok(delta)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(input dim, output dim)` of a chain, ignoring shape-preserving layers.
fn chain_dims(specs: &[LayerSpec]) -> (usize, usize) {
    let mut first = None;
    let mut last = 0;
    for s in specs {
        match *s {
            LayerSpec::Dense { in_dim, out_dim } => {
                first.get_or_insert(in_dim);
                last = out_dim;
            }
            LayerSpec::BatchNorm { dim } => {
                first.get_or_insert(dim);
                last = dim;
            }
            _ => {}
        }
    }
    (first.unwrap_or(0), last)
}

fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    let mut width: Option<usize> = None;
    for (i, s) in specs.iter().enumerate() {
        match *s {
            LayerSpec::Dense { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Error::Config(format!("layer {i}: dense dims must be >= 1")));
                }
                if let Some(w) = width {
                    if w != in_dim {
                        return Err(Error::Config(format!(
                            "layer {i}: dense input {in_dim} does not follow width {w}"
                        )));
                    }
                }
                width = Some(out_dim);
            }
            LayerSpec::BatchNorm { dim } => {
                if let Some(w) = width {
                    if w != dim {
                        return Err(Error::Config(format!(
                            "layer {i}: batchnorm over {dim} features after width {w}"
                        )));
                    }
                }
                width = Some(dim);
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!(
                        "layer {i}: dropout rate {rate} outside [0, 1)"
                    )));
                }
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => {}
        }
    }
    if width.is_none() {
        return Err(Error::Config("network has no dense or batchnorm layer".into()));
    }
    Ok(())
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Fixed pseudo-random weights used to reduce a network output to a scalar
/// for gradient checks; avoids the symmetric cancellations of a plain sum.
pub fn probe_weights(rows: usize, cols: usize) -> Matrix {
    RngState::for_stream(0x6772_6164, 0).gaussian_matrix(rows, cols, 0.0, 1.0)
}

/// Largest relative error between back-propagated parameter gradients and
/// central finite differences of `Σ output ⊙ probe` in `Frozen` mode.
///
/// Dropout plays no part in `Frozen` mode and batchnorm uses its running
/// statistics, so the objective is a deterministic function of the weights.
pub fn gradcheck(net: &Network, batch: &Matrix, epsilon: f64) -> Result<f64> {
    let (out, trace) = net.forward_frozen(batch)?;
    let probe = probe_weights(out.rows(), out.cols());
    let mut grads = Gradients::zeros_like(net);
    net.backward(&trace, &probe, Some(&mut grads))?;
    let analytic = grads.flatten();

    let objective = |n: &Network| -> Result<f64> {
        Ok(n.infer(batch)?.hadamard(&probe)?.sum())
    };
    let mut probe_net = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe_net.param_mut(i);
        *probe_net.param_mut(i) = orig + epsilon;
        let plus = objective(&probe_net)?;
        *probe_net.param_mut(i) = orig - epsilon;
        let minus = objective(&probe_net)?;
        *probe_net.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}
