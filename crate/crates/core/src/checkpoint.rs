//! Binary checkpoints of a training run.
//!
//! All integers and floats are little-endian; `f64` values are stored as
//! their IEEE-754 bit patterns, so a round trip is bit-exact.
//!
//! ```text
//! magic            8 bytes  "RGANCKPT"
//! version          u32      1
//! architecture     u64 dim, generator_size, generator_hidden_layers,
//!                  discriminator_size, discriminator_hidden_layers;
//!                  f64 generator_dropout, discriminator_dropout
//! config           u64 byte length, then the training config as TOML
//! step             u64
//! networks         G, F, D_X, D_Y, D_cX, D_cY, each:
//!                    u32 layer count, then per layer a u8 kind and body:
//!                    0 dense      u64 in, u64 out, in·out weights (row-major), out biases
//!                    1 relu       (empty)
//!                    2 dropout    f64 rate
//!                    3 batchnorm  u64 dim, f64 epsilon, f64 momentum,
//!                                 dim each of scale, shift, running mean, running variance
//!                    4 sigmoid    (empty)
//! optimizers       same network order, each: f64 lr, beta1, beta2, epsilon;
//!                  u64 t; u32 slice count; per slice u64 length, then
//!                  length first moments and length second moments
//! rng              32-byte key, u64 stream, u128 word position
//! ```
//!
//! Nothing may follow the RNG block.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{ArchConfig, NetworkId, RetroGanModel};
use crate::nn::{BatchNorm, Dense, Layer, Network};
use crate::optim::AdamState;
use crate::rng::{RngSnapshot, RngState};
use crate::tensor::Matrix;
use crate::trainer::{Optimizers, TrainConfig, Trainer};

pub const MAGIC: &[u8; 8] = b"RGANCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to resume a run bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: u64,
    pub model: RetroGanModel,
    pub optimizers: Optimizers,
    pub rng: RngSnapshot,
}

impl Checkpoint {
    /// A checkpoint of an untrained model with fresh optimizer states.
    pub fn untrained(model: RetroGanModel, config: TrainConfig) -> Self {
        let optimizers = Optimizers::new(&model, config.g_lr, config.d_lr);
        let rng = RngState::for_stream(config.seed, crate::rng::streams::TRAIN).snapshot();
        Checkpoint {
            config,
            step: 0,
            model,
            optimizers,
            rng,
        }
    }
}

impl Trainer {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            step: self.step,
            model: self.model.clone(),
            optimizers: self.optimizers.clone(),
            rng: self.rng.snapshot(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        Ok(Trainer::from_parts(
            ckpt.config,
            ckpt.model,
            ckpt.optimizers,
            RngState::restore(&ckpt.rng),
            ckpt.step,
        ))
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

fn write_arch(w: &mut Writer, a: &ArchConfig) {
    for v in [
        a.dim,
        a.generator_size,
        a.generator_hidden_layers,
        a.discriminator_size,
        a.discriminator_hidden_layers,
    ] {
        w.usize(v);
    }
    w.f64(a.generator_dropout);
    w.f64(a.discriminator_dropout);
}

fn write_network(w: &mut Writer, net: &Network) {
    w.u32(net.layers().len() as u32);
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                w.u8(0);
                w.usize(d.weight.rows());
                w.usize(d.weight.cols());
                w.f64s(d.weight.as_slice());
                w.f64s(&d.bias);
            }
            Layer::Relu => w.u8(1),
            Layer::Dropout(rate) => {
                w.u8(2);
                w.f64(*rate);
            }
            Layer::BatchNorm(bn) => {
                w.u8(3);
                w.usize(bn.dim());
                w.f64(bn.epsilon);
                w.f64(bn.momentum);
                w.f64s(&bn.gamma);
                w.f64s(&bn.beta);
                w.f64s(&bn.running_mean);
                w.f64s(&bn.running_var);
            }
            Layer::Sigmoid => w.u8(4),
        }
    }
}

fn write_adam(w: &mut Writer, s: &AdamState) {
    w.f64(s.lr);
    w.f64(s.beta1);
    w.f64(s.beta2);
    w.f64(s.epsilon);
    w.u64(s.t);
    w.u32(s.m.len() as u32);
    for (m, v) in s.m.iter().zip(&s.v) {
        w.usize(m.len());
        w.f64s(m);
        w.f64s(v);
    }
}

/// Serializes a checkpoint to bytes.
pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let config = toml::to_string(&ckpt.config)
        .map_err(|e| Error::Checkpoint(format!("cannot serialize config: {e}")))?;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    write_arch(&mut w, &ckpt.model.arch);
    w.usize(config.len());
    w.0.extend_from_slice(config.as_bytes());
    w.u64(ckpt.step);
    for id in NetworkId::ALL {
        write_network(&mut w, ckpt.model.network(id));
    }
    for s in ckpt.optimizers.all() {
        write_adam(&mut w, s);
    }
    w.0.extend_from_slice(&ckpt.rng.key);
    w.u64(ckpt.rng.stream);
    w.0.extend_from_slice(&ckpt.rng.word_pos.to_le_bytes());
    Ok(w.0)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
    /// A length whose payload of `unit`-byte items must fit in the rest of
    /// the buffer, so a corrupt prefix cannot trigger a huge allocation.
    fn len(&mut self, unit: usize, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        let remaining = (self.buf.len() - self.pos) as u64;
        match n.checked_mul(unit as u64) {
            Some(bytes) if bytes <= remaining => Ok(n as usize),
            _ => Err(corrupt(format!("{what} of {n} exceeds the remaining {remaining} bytes"))),
        }
    }
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

fn read_arch(r: &mut Reader) -> Result<ArchConfig> {
    let mut ints = [0usize; 5];
    for v in &mut ints {
        *v = usize::try_from(r.u64("architecture")?)
            .map_err(|_| corrupt("architecture value out of range"))?;
    }
    Ok(ArchConfig {
        dim: ints[0],
        generator_size: ints[1],
        generator_hidden_layers: ints[2],
        discriminator_size: ints[3],
        discriminator_hidden_layers: ints[4],
        generator_dropout: r.f64("architecture")?,
        discriminator_dropout: r.f64("architecture")?,
    })
}

fn read_network(r: &mut Reader, name: &str) -> Result<Network> {
    let count = r.u32(name)? as usize;
    if count > r.buf.len() - r.pos {
        return Err(corrupt(format!("{name}: implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let layer = match r.u8(name)? {
            0 => {
                let rows = r.len(8, name)?;
                let cols = r.len(8, name)?;
                let n = rows
                    .checked_mul(cols)
                    .filter(|&n| n.saturating_mul(8) <= r.buf.len() - r.pos)
                    .ok_or_else(|| corrupt(format!("{name}: dense layer too large")))?;
                let weight = Matrix::from_vec(rows, cols, r.f64s(n, name)?)?;
                let bias = r.f64s(cols, name)?;
                Layer::Dense(Dense { weight, bias })
            }
            1 => Layer::Relu,
            2 => Layer::Dropout(r.f64(name)?),
            3 => {
                let dim = r.len(32, name)?;
                let epsilon = r.f64(name)?;
                let momentum = r.f64(name)?;
                Layer::BatchNorm(BatchNorm {
                    gamma: r.f64s(dim, name)?,
                    beta: r.f64s(dim, name)?,
                    running_mean: r.f64s(dim, name)?,
                    running_var: r.f64s(dim, name)?,
                    epsilon,
                    momentum,
                })
            }
            4 => Layer::Sigmoid,
            k => return Err(corrupt(format!("{name}: unknown layer kind {k}"))),
        };
        layers.push(layer);
    }
    Network::from_layers(layers).map_err(|e| corrupt(format!("{name}: {e}")))
}

fn read_adam(r: &mut Reader, name: &str) -> Result<AdamState> {
    let lr = r.f64(name)?;
    let beta1 = r.f64(name)?;
    let beta2 = r.f64(name)?;
    let epsilon = r.f64(name)?;
    let t = r.u64(name)?;
    let slices = r.u32(name)? as usize;
    if slices > r.buf.len() - r.pos {
        return Err(corrupt(format!("{name}: implausible slice count {slices}")));
    }
    let (mut m, mut v) = (Vec::with_capacity(slices), Vec::with_capacity(slices));
    for _ in 0..slices {
        let n = r.len(16, name)?;
        m.push(r.f64s(n, name)?);
        v.push(r.f64s(n, name)?);
    }
    Ok(AdamState {
        lr,
        beta1,
        beta2,
        epsilon,
        t,
        m,
        v,
    })
}

/// Parses and validates checkpoint bytes.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic").ok() != Some(MAGIC.as_slice()) {
        return Err(corrupt("not a checkpoint file (bad magic bytes)"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let arch = read_arch(&mut r)?;
    let config_len = r.len(1, "config length")?;
    let config_text = std::str::from_utf8(r.take(config_len, "config")?)
        .map_err(|_| corrupt("config block is not UTF-8"))?;
    let config: TrainConfig =
        toml::from_str(config_text).map_err(|e| corrupt(format!("config block: {e}")))?;
    config
        .validate()
        .map_err(|e| corrupt(format!("config block: {e}")))?;
    if config.arch != arch {
        return Err(corrupt("architecture block disagrees with the config block"));
    }
    let step = r.u64("step")?;

    let names = ["G", "F", "D_X", "D_Y", "D_cX", "D_cY"];
    let mut nets = Vec::with_capacity(6);
    for name in names {
        nets.push(read_network(&mut r, name)?);
    }
    let expected = [
        arch.generator_specs(),
        arch.generator_specs(),
        arch.discriminator_specs(arch.dim),
        arch.discriminator_specs(arch.dim),
        arch.conditional_discriminator_specs(),
        arch.conditional_discriminator_specs(),
    ];
    for ((net, specs), name) in nets.iter().zip(&expected).zip(names) {
        if &net.specs() != specs {
            return Err(corrupt(format!("{name}: layers do not match the architecture")));
        }
    }
    let mut it = nets.into_iter();
    let mut next = || it.next().expect("six networks");
    let model = RetroGanModel {
        arch,
        g: next(),
        f: next(),
        d_x: next(),
        d_y: next(),
        d_cx: next(),
        d_cy: next(),
    };

    let mut states = Vec::with_capacity(6);
    for name in names {
        states.push(read_adam(&mut r, name)?);
    }
    for ((s, id), name) in states.iter().zip(NetworkId::ALL).zip(names) {
        let lengths: Vec<usize> = model.network(id).param_slices().iter().map(|p| p.len()).collect();
        if s.lengths() != lengths {
            return Err(corrupt(format!("{name}: optimizer state does not match parameters")));
        }
    }
    let mut it = states.into_iter();
    let mut next = || it.next().expect("six states");
    let optimizers = Optimizers {
        g: next(),
        f: next(),
        d_x: next(),
        d_y: next(),
        d_cx: next(),
        d_cy: next(),
    };

    let rng = RngSnapshot {
        key: r.array("rng key")?,
        stream: r.u64("rng stream")?,
        word_pos: u128::from_le_bytes(r.array("rng position")?),
    };
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        config,
        step,
        model,
        optimizers,
        rng,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(ckpt)?).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint; with `expected` set, its architecture must match.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ArchConfig>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let Some(arch) = expected {
        if &ckpt.model.arch != arch {
            return Err(Error::ConfigMismatch(format!(
                "{} was written for {:?}, expected {:?}",
                path.display(),
                ckpt.model.arch,
                arch
            )));
        }
    }
    Ok(ckpt)
}
