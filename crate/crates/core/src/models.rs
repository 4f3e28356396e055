//! The six RetroGAN networks: generators `G: X→Y` and `F: Y→X`, plain
//! discriminators `D_X`, `D_Y`, and cycle-conditional discriminators
//! `D_cX`, `D_cY`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dense, ForwardTrace, Layer, LayerSpec, Mode, Network};
use crate::rng::RngState;
use crate::tensor::Matrix;

/// Architecture hyperparameters. Key names follow the tuning search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub dim: usize,
    pub generator_size: usize,
    pub generator_hidden_layers: usize,
    pub discriminator_size: usize,
    pub discriminator_hidden_layers: usize,
    pub generator_dropout: f64,
    pub discriminator_dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            dim: 300,
            generator_size: 2048,
            generator_hidden_layers: 2,
            discriminator_size: 2048,
            discriminator_hidden_layers: 2,
            generator_dropout: 0.2,
            discriminator_dropout: 0.3,
        }
    }
}

impl ArchConfig {
    /// Small architecture for tests and desk-scale runs.
    pub fn toy(dim: usize, hidden: usize) -> Self {
        ArchConfig {
            dim,
            generator_size: hidden,
            discriminator_size: hidden,
            ..ArchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.dim >= 1, "dim must be >= 1"),
            (self.generator_size >= 1, "generator_size must be >= 1"),
            (self.discriminator_size >= 1, "discriminator_size must be >= 1"),
            (
                self.generator_hidden_layers >= 1,
                "generator_hidden_layers must be >= 1",
            ),
            (
                self.discriminator_hidden_layers >= 1,
                "discriminator_hidden_layers must be >= 1",
            ),
            (
                (0.0..1.0).contains(&self.generator_dropout),
                "generator_dropout must be in [0, 1)",
            ),
            (
                (0.0..1.0).contains(&self.discriminator_dropout),
                "discriminator_dropout must be in [0, 1)",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    /// `d → [dense(h), ReLU, dropout] × n → dense(d)`.
    pub fn generator_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut width = self.dim;
        for _ in 0..self.generator_hidden_layers {
            specs.push(LayerSpec::Dense {
                in_dim: width,
                out_dim: self.generator_size,
            });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::Dropout {
                rate: self.generator_dropout,
            });
            width = self.generator_size;
        }
        specs.push(LayerSpec::Dense {
            in_dim: width,
            out_dim: self.dim,
        });
        specs
    }

    /// Hidden blocks are `dense, ReLU, dropout`, except the last, which is
    /// `dense, ReLU, batchnorm, dropout`; the head is `dense(1), sigmoid`.
    pub fn discriminator_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut width = input_dim;
        for i in 0..self.discriminator_hidden_layers {
            specs.push(LayerSpec::Dense {
                in_dim: width,
                out_dim: self.discriminator_size,
            });
            specs.push(LayerSpec::Relu);
            if i + 1 == self.discriminator_hidden_layers {
                specs.push(LayerSpec::BatchNorm {
                    dim: self.discriminator_size,
                });
            }
            specs.push(LayerSpec::Dropout {
                rate: self.discriminator_dropout,
            });
            width = self.discriminator_size;
        }
        specs.push(LayerSpec::Dense {
            in_dim: width,
            out_dim: 1,
        });
        specs.push(LayerSpec::Sigmoid);
        specs
    }

    pub fn conditional_discriminator_specs(&self) -> Vec<LayerSpec> {
        self.discriminator_specs(2 * self.dim)
    }

    /// Trainable parameters over all six networks, computed from the layer shapes.
    pub fn total_parameters(&self) -> usize {
        use crate::nn::parameter_count;
        2 * (parameter_count(&self.generator_specs())
            + parameter_count(&self.discriminator_specs(self.dim))
            + parameter_count(&self.conditional_discriminator_specs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetroGanModel {
    pub arch: ArchConfig,
    /// X → Y
    pub g: Network,
    /// Y → X
    pub f: Network,
    pub d_x: Network,
    pub d_y: Network,
    pub d_cx: Network,
    pub d_cy: Network,
}

/// The four translations of one cycle pass plus their traces.
#[derive(Clone, Debug)]
pub struct CycleOutputs {
    pub g_x: Matrix,
    pub f_y: Matrix,
    pub f_g_x: Matrix,
    pub g_f_y: Matrix,
    pub traces: Option<CycleTraces>,
}

#[derive(Clone, Debug)]
pub struct CycleTraces {
    pub g_x: ForwardTrace,
    pub f_y: ForwardTrace,
    pub f_g_x: ForwardTrace,
    pub g_f_y: ForwardTrace,
}

/// Which network to address when iterating over a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetworkId {
    G,
    F,
    DX,
    DY,
    DcX,
    DcY,
}

impl NetworkId {
    pub const ALL: [NetworkId; 6] = [
        NetworkId::G,
        NetworkId::F,
        NetworkId::DX,
        NetworkId::DY,
        NetworkId::DcX,
        NetworkId::DcY,
    ];
}

/// Builds all six networks. Weights are drawn in the order G, F, D_X, D_Y,
/// D_cX, D_cY from one stream, so a seed fixes the whole model.
pub fn build_model(arch: &ArchConfig, rng: &mut RngState) -> Result<RetroGanModel> {
    arch.validate()?;
    let gen = arch.generator_specs();
    let disc = arch.discriminator_specs(arch.dim);
    let cdisc = arch.conditional_discriminator_specs();
    Ok(RetroGanModel {
        arch: arch.clone(),
        g: Network::new(&gen, rng)?,
        f: Network::new(&gen, rng)?,
        d_x: Network::new(&disc, rng)?,
        d_y: Network::new(&disc, rng)?,
        d_cx: Network::new(&cdisc, rng)?,
        d_cy: Network::new(&cdisc, rng)?,
    })
}

/// A generator that computes the identity exactly, through one hidden block
/// of width `2d` (`[I, -I]` in, `[I; -I]` out) and, for deeper stacks, `I`
/// between hidden blocks. Needs `generator_size == 2 * dim`.
pub fn identity_generator(arch: &ArchConfig) -> Result<Network> {
    let d = arch.dim;
    let h = arch.generator_size;
    if h != 2 * d {
        return Err(Error::Config(format!(
            "identity generator needs generator_size = 2·dim ({}), got {h}",
            2 * d
        )));
    }
    let mut split = Matrix::zeros(d, h);
    let mut merge = Matrix::zeros(h, d);
    for i in 0..d {
        split.set(i, i, 1.0);
        split.set(i, d + i, -1.0);
        merge.set(i, i, 1.0);
        merge.set(d + i, i, -1.0);
    }
    let mut layers = Vec::new();
    for block in 0..arch.generator_hidden_layers {
        let weight = if block == 0 {
            split.clone()
        } else {
            Matrix::identity(h)
        };
        layers.push(Layer::Dense(Dense {
            weight,
            bias: vec![0.0; h],
        }));
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout(arch.generator_dropout));
    }
    layers.push(Layer::Dense(Dense {
        weight: merge,
        bias: vec![0.0; d],
    }));
    Network::from_layers(layers)
}

impl RetroGanModel {
    pub fn dim(&self) -> usize {
        self.arch.dim
    }

    pub fn network(&self, id: NetworkId) -> &Network {
        match id {
            NetworkId::G => &self.g,
            NetworkId::F => &self.f,
            NetworkId::DX => &self.d_x,
            NetworkId::DY => &self.d_y,
            NetworkId::DcX => &self.d_cx,
            NetworkId::DcY => &self.d_cy,
        }
    }

    pub fn network_mut(&mut self, id: NetworkId) -> &mut Network {
        match id {
            NetworkId::G => &mut self.g,
            NetworkId::F => &mut self.f,
            NetworkId::DX => &mut self.d_x,
            NetworkId::DY => &mut self.d_y,
            NetworkId::DcX => &mut self.d_cx,
            NetworkId::DcY => &mut self.d_cy,
        }
    }

    pub fn parameter_count(&self) -> usize {
        NetworkId::ALL
            .iter()
            .map(|&id| self.network(id).parameter_count())
            .sum()
    }

    fn check_width(&self, m: &Matrix, what: &str) -> Result<()> {
        if m.cols() != self.dim() {
            return Err(Error::shape(
                "cycle_forward",
                format!("{what} has width {}, model dim is {}", m.cols(), self.dim()),
            ));
        }
        Ok(())
    }

    /// Runs `G(x)`, `F(y)`, `F(G(x))`, `G(F(y))`. Traces are kept for every
    /// mode except `Eval`.
    pub fn cycle_forward(
        &mut self,
        x: &Matrix,
        y: &Matrix,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<CycleOutputs> {
        self.check_width(x, "x batch")?;
        self.check_width(y, "y batch")?;
        if mode == Mode::Eval {
            let g_x = self.g.infer(x)?;
            let f_y = self.f.infer(y)?;
            let f_g_x = self.f.infer(&g_x)?;
            let g_f_y = self.g.infer(&f_y)?;
            return Ok(CycleOutputs {
                g_x,
                f_y,
                f_g_x,
                g_f_y,
                traces: None,
            });
        }
        let (g_x, tg) = self.g.forward(x, mode, rng)?;
        let (f_y, tf) = self.f.forward(y, mode, rng)?;
        let (f_g_x, tfg) = self.f.forward(&g_x, mode, rng)?;
        let (g_f_y, tgf) = self.g.forward(&f_y, mode, rng)?;
        Ok(CycleOutputs {
            g_x,
            f_y,
            f_g_x,
            g_f_y,
            traces: Some(CycleTraces {
                g_x: tg,
                f_y: tf,
                f_g_x: tfg,
                g_f_y: tgf,
            }),
        })
    }
}

/// Concatenates `[condition ‖ sample]` row-wise, condition first.
pub fn conditional_input(condition: &Matrix, sample: &Matrix) -> Result<Matrix> {
    if condition.shape() != sample.shape() {
        return Err(Error::shape(
            "conditional_score",
            format!(
                "condition {}x{} vs sample {}x{}",
                condition.rows(),
                condition.cols(),
                sample.rows(),
                sample.cols()
            ),
        ));
    }
    condition.hcat(sample)
}

/// Conditional discriminator scores for `(condition, sample)` pairs, as a
/// flat vector with one score per row.
pub fn conditional_score(
    disc: &mut Network,
    condition: &Matrix,
    sample: &Matrix,
    mode: Mode,
    rng: &mut RngState,
) -> Result<(Vec<f64>, Option<ForwardTrace>)> {
    let input = conditional_input(condition, sample)?;
    if input.cols() != disc.in_dim() {
        return Err(Error::shape(
            "conditional_score",
            format!(
                "concatenated width {} vs discriminator input {}",
                input.cols(),
                disc.in_dim()
            ),
        ));
    }
    if mode == Mode::Eval {
        return Ok((disc.infer(&input)?.into_vec(), None));
    }
    let (out, trace) = disc.forward(&input, mode, rng)?;
    Ok((out.into_vec(), Some(trace)))
}
