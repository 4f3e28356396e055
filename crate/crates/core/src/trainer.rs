//! The training loop: one generator update on the combined objective per
//! mini-batch, followed by `dis_train_amount` updates of the conditional
//! discriminators.
//!
//! Every source of randomness is a separate ChaCha stream derived from the
//! configured seed: weight initialization, the per-step stream (dropout
//! masks and confounder draws) and one stream per epoch for the data order.
//! The data order therefore depends only on the step index, so a run can be
//! resumed from the step counter and a snapshot of the per-step stream.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embeddings::PairedCorpus;
use crate::error::{Error, Result};
use crate::losses::{
    combined_objective, conditional_cycle_loss, cycle_loss, fake_loss, generator_adversarial,
    identity_loss, max_margin_loss, real_loss, Confounders, GanObjective, LossBreakdown,
    LossParts, LossToggles, LossWeights,
};
use crate::models::{build_model, conditional_input, ArchConfig, CycleOutputs, RetroGanModel};
use crate::nn::{Gradients, Mode, Network};
use crate::optim::{adam_step, AdamState};
use crate::rng::{streams, RngState};
use crate::tensor::Matrix;

/// How the two generators are updated from the combined objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorUpdate {
    /// One objective, one Adam step over the parameters of both generators.
    #[default]
    Joint,
    /// Step `G` first, then recompute the objective and step `F`.
    Alternating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub g_lr: f64,
    pub d_lr: f64,
    pub batch_size: usize,
    pub total_batches: u64,
    pub dis_train_amount: usize,
    /// Also train `D_X` and `D_Y`; by default they keep their initial weights.
    pub train_plain_discriminators: bool,
    pub seed: u64,
    /// Steps between validation snapshots; 0 evaluates only at the end.
    pub eval_every: u64,
    pub gan_objective: GanObjective,
    pub generator_update: GeneratorUpdate,
    pub weights: LossWeights,
    pub toggles: LossToggles,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            g_lr: 5e-5,
            d_lr: 1e-4,
            batch_size: 32,
            total_batches: 312_500,
            dis_train_amount: 1,
            train_plain_discriminators: false,
            seed: 0,
            eval_every: 1000,
            gan_objective: GanObjective::NonSaturating,
            generator_update: GeneratorUpdate::Joint,
            weights: LossWeights::default(),
            toggles: LossToggles::default(),
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Learning rates, batch size and run length of the original setup.
    pub fn paper_default() -> Self {
        Self::default()
    }

    /// Best hyperparameters found by the random search.
    pub fn tuned() -> Self {
        TrainConfig {
            g_lr: 0.00495,
            d_lr: 0.00885,
            dis_train_amount: 1,
            arch: ArchConfig {
                generator_hidden_layers: 1,
                discriminator_hidden_layers: 3,
                ..ArchConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-default" => Ok(Self::paper_default()),
            "tuned" => Ok(Self::tuned()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected paper-default or tuned)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        for (v, name) in [(self.g_lr, "g_lr"), (self.d_lr, "d_lr")] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a positive number")));
            }
        }
        if self.dis_train_amount < 1 {
            return Err(Error::Config("dis_train_amount must be at least 1".into()));
        }
        self.arch.validate()?;
        self.weights.validate(self.batch_size)
    }
}

/// One Adam state per network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub g: AdamState,
    pub f: AdamState,
    pub d_x: AdamState,
    pub d_y: AdamState,
    pub d_cx: AdamState,
    pub d_cy: AdamState,
}

impl Optimizers {
    pub fn new(model: &RetroGanModel, g_lr: f64, d_lr: f64) -> Self {
        let st = |n: &Network, lr| AdamState::for_slices(&n.param_slices(), lr);
        Optimizers {
            g: st(&model.g, g_lr),
            f: st(&model.f, g_lr),
            d_x: st(&model.d_x, d_lr),
            d_y: st(&model.d_y, d_lr),
            d_cx: st(&model.d_cx, d_lr),
            d_cy: st(&model.d_cy, d_lr),
        }
    }

    pub fn all(&self) -> [&AdamState; 6] {
        [&self.g, &self.f, &self.d_x, &self.d_y, &self.d_cx, &self.d_cy]
    }

    pub fn all_mut(&mut self) -> [&mut AdamState; 6] {
        [
            &mut self.g,
            &mut self.f,
            &mut self.d_x,
            &mut self.d_y,
            &mut self.d_cx,
            &mut self.d_cy,
        ]
    }
}

fn apply_adam(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let g = grads.slices();
    adam_step(&mut net.param_slices_mut(), &g, state)
}

/// Result of evaluating the generator objective on one batch.
#[derive(Clone, Debug)]
pub struct GeneratorPass {
    pub parts: LossParts,
    pub breakdown: LossBreakdown,
    pub grad_g: Gradients,
    pub grad_f: Gradients,
    /// `G(x)`, `F(y)`, `F(G(x))`, `G(F(y))` from this pass, without traces.
    pub outputs: CycleOutputs,
}

fn add_scaled(dst: &mut Matrix, c: f64, src: &Matrix) -> Result<()> {
    if c != 0.0 {
        dst.add_assign(&src.scale(c))?;
    }
    Ok(())
}

/// Generator loss through a fixed discriminator and its gradient with
/// respect to the generated batch.
fn adversarial_through(
    disc: &Network,
    fake: &Matrix,
    objective: GanObjective,
) -> Result<(f64, Matrix)> {
    let (out, trace) = disc.forward_frozen(fake)?;
    let l = generator_adversarial(out.as_slice(), objective)?;
    let upstream = Matrix::from_vec(l.grad.len(), 1, l.grad)?;
    Ok((l.value, disc.backward(&trace, &upstream, None)?))
}

/// Evaluates the combined objective and back-propagates it into the
/// parameters of `G` and `F`.
///
/// The generators run in `mode` (`Train` draws dropout masks from `rng`,
/// `Frozen` is deterministic); every discriminator is held fixed with its
/// running batchnorm statistics. `gan_x` is the adversarial term of `G(x)`
/// against `D_Y`, `gan_y` that of `F(y)` against `D_X`. A term whose toggle
/// is off, or whose weight is 0, contributes no gradient; all terms are
/// still evaluated so the random streams advance identically.
#[allow(clippy::too_many_arguments)]
pub fn generator_pass(
    model: &mut RetroGanModel,
    x: &Matrix,
    y: &Matrix,
    weights: &LossWeights,
    toggles: &LossToggles,
    objective: GanObjective,
    confounders: &Confounders,
    mode: Mode,
    rng: &mut RngState,
) -> Result<GeneratorPass> {
    if mode == Mode::Eval {
        return Err(Error::InvalidState("generator_pass needs a differentiable mode"));
    }
    let cyc_out = model.cycle_forward(x, y, mode, rng)?;
    let (g_y, trace_gy) = model.g.forward(y, mode, rng)?;
    let (f_x, trace_fx) = model.f.forward(x, mode, rng)?;
    let traces = cyc_out.traces.as_ref().expect("differentiable mode keeps traces");
    let (g_x, f_y, f_g_x, g_f_y) = (&cyc_out.g_x, &cyc_out.f_y, &cyc_out.f_g_x, &cyc_out.g_f_y);

    let (gan_x, d_gan_gx) = adversarial_through(&model.d_y, g_x, objective)?;
    let (gan_y, d_gan_fy) = adversarial_through(&model.d_x, f_y, objective)?;
    let cyc = cycle_loss(x, f_g_x, y, g_f_y)?;
    let id = identity_loss(&g_y, y, &f_x, x)?;
    let mm = max_margin_loss(g_x, f_y, g_f_y, f_g_x, x, y, confounders, weights.delta_mm)?;
    let cc = conditional_cycle_loss(model, x, y, g_x, f_y, f_g_x, g_f_y, Mode::Frozen, objective)?;

    let parts = LossParts {
        gan_x,
        gan_y,
        cyc: cyc.value,
        id: id.value,
        mm_forward: mm.forward.value,
        mm_backward: mm.backward.value,
        mm_cycle_y: mm.cycle_y.value,
        mm_cycle_x: mm.cycle_x.value,
        ccyc: cc.gen_loss,
    };
    let breakdown = combined_objective(&parts, weights, toggles);

    let on = |flag: bool, w: f64| if flag { w } else { 0.0 };
    let c_gan = on(toggles.gan, 1.0);
    let c_cyc = on(toggles.cycle_loss, weights.lambda_cyc);
    let c_id = on(toggles.id_loss, weights.gamma_id);
    let c_mm1 = on(toggles.one_way_mm, 1.0);
    let c_mm2 = on(toggles.cycle_mm, 1.0);
    let c_cc = on(toggles.cycle_dis, weights.sigma_ccyc);

    let (n, d) = (x.rows(), x.cols());
    let mut d_gx = Matrix::zeros(n, d);
    add_scaled(&mut d_gx, c_gan, &d_gan_gx)?;
    add_scaled(&mut d_gx, c_mm1, &mm.forward.grad)?;
    add_scaled(&mut d_gx, c_cc, &cc.grad_g_x)?;
    let mut d_fy = Matrix::zeros(n, d);
    add_scaled(&mut d_fy, c_gan, &d_gan_fy)?;
    add_scaled(&mut d_fy, c_mm1, &mm.backward.grad)?;
    add_scaled(&mut d_fy, c_cc, &cc.grad_f_y)?;
    let mut d_fgx = Matrix::zeros(n, d);
    add_scaled(&mut d_fgx, c_cyc, &cyc.grad_first)?;
    add_scaled(&mut d_fgx, c_mm2, &mm.cycle_x.grad)?;
    add_scaled(&mut d_fgx, c_cc, &cc.grad_f_g_x)?;
    let mut d_gfy = Matrix::zeros(n, d);
    add_scaled(&mut d_gfy, c_cyc, &cyc.grad_second)?;
    add_scaled(&mut d_gfy, c_mm2, &mm.cycle_y.grad)?;
    add_scaled(&mut d_gfy, c_cc, &cc.grad_g_f_y)?;

    let mut grad_g = Gradients::zeros_like(&model.g);
    let mut grad_f = Gradients::zeros_like(&model.f);
    // reconstructions first: their input gradients flow into G(x) and F(y)
    let through_f = model.f.backward(&traces.f_g_x, &d_fgx, Some(&mut grad_f))?;
    d_gx.add_assign(&through_f)?;
    let through_g = model.g.backward(&traces.g_f_y, &d_gfy, Some(&mut grad_g))?;
    d_fy.add_assign(&through_g)?;
    model.g.backward(&traces.g_x, &d_gx, Some(&mut grad_g))?;
    model.f.backward(&traces.f_y, &d_fy, Some(&mut grad_f))?;
    if c_id != 0.0 {
        model.g.backward(&trace_gy, &id.grad_first.scale(c_id), Some(&mut grad_g))?;
        model.f.backward(&trace_fx, &id.grad_second.scale(c_id), Some(&mut grad_f))?;
    }

    Ok(GeneratorPass {
        parts,
        breakdown,
        grad_g,
        grad_f,
        outputs: CycleOutputs {
            traces: None,
            ..cyc_out
        },
    })
}

/// Discriminator loss `−mean log D(real) − mean log(1 − D(fake))` and its
/// parameter gradient. Real and fake batches go through separate forward
/// passes; in `Train` mode each pass draws dropout masks and updates the
/// batchnorm running statistics.
pub fn discriminator_pass(
    disc: &mut Network,
    real: &Matrix,
    fake: &Matrix,
    mode: Mode,
    rng: &mut RngState,
) -> Result<(f64, Gradients)> {
    if mode == Mode::Eval {
        return Err(Error::InvalidState("discriminator_pass needs a differentiable mode"));
    }
    let mut grads = Gradients::zeros_like(disc);
    let mut value = 0.0;
    for (batch, is_real) in [(real, true), (fake, false)] {
        let (out, trace) = disc.forward(batch, mode, rng)?;
        let l = if is_real {
            real_loss(out.as_slice())?
        } else {
            fake_loss(out.as_slice())?
        };
        value += l.value;
        let upstream = Matrix::from_vec(l.grad.len(), 1, l.grad)?;
        disc.backward(&trace, &upstream, Some(&mut grads))?;
    }
    Ok((value, grads))
}

/// Losses reported for one completed step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Number of completed steps, starting at 1.
    pub step: u64,
    #[serde(flatten)]
    pub losses: LossBreakdown,
    /// Conditional discriminator loss (both networks) at the last update.
    pub disc_ccyc: f64,
    /// Plain discriminator loss, when those are trained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disc_plain: Option<f64>,
}

/// One optimization step on a paired batch.
pub fn train_step(
    model: &mut RetroGanModel,
    x: &Matrix,
    y: &Matrix,
    config: &TrainConfig,
    optimizers: &mut Optimizers,
    rng: &mut RngState,
) -> Result<LossBreakdown> {
    Ok(train_step_record(model, x, y, config, optimizers, rng, 0)?.losses)
}

fn train_step_record(
    model: &mut RetroGanModel,
    x: &Matrix,
    y: &Matrix,
    config: &TrainConfig,
    optimizers: &mut Optimizers,
    rng: &mut RngState,
    step: u64,
) -> Result<StepRecord> {
    let rows = x.rows();
    let k = config.weights.confounders_for(rows);
    let confounders = Confounders::sample(rows, k, rng)?;
    let pass = generator_pass(
        model,
        x,
        y,
        &config.weights,
        &config.toggles,
        config.gan_objective,
        &confounders,
        Mode::Train,
        rng,
    )?;
    match config.generator_update {
        GeneratorUpdate::Joint => {
            apply_adam(&mut model.g, &pass.grad_g, &mut optimizers.g)?;
            apply_adam(&mut model.f, &pass.grad_f, &mut optimizers.f)?;
        }
        GeneratorUpdate::Alternating => {
            apply_adam(&mut model.g, &pass.grad_g, &mut optimizers.g)?;
            let second = generator_pass(
                model,
                x,
                y,
                &config.weights,
                &config.toggles,
                config.gan_objective,
                &confounders,
                Mode::Train,
                rng,
            )?;
            apply_adam(&mut model.f, &second.grad_f, &mut optimizers.f)?;
        }
    }

    // discriminators see the pre-update translations, detached from G and F
    let out = &pass.outputs;
    let real_cx = conditional_input(&out.g_x, x)?;
    let fake_cx = conditional_input(&out.g_x, &out.f_g_x)?;
    let real_cy = conditional_input(&out.f_y, y)?;
    let fake_cy = conditional_input(&out.f_y, &out.g_f_y)?;
    let mut disc_ccyc = 0.0;
    for _ in 0..config.dis_train_amount {
        let (lx, gx) = discriminator_pass(&mut model.d_cx, &real_cx, &fake_cx, Mode::Train, rng)?;
        apply_adam(&mut model.d_cx, &gx, &mut optimizers.d_cx)?;
        let (ly, gy) = discriminator_pass(&mut model.d_cy, &real_cy, &fake_cy, Mode::Train, rng)?;
        apply_adam(&mut model.d_cy, &gy, &mut optimizers.d_cy)?;
        disc_ccyc = lx + ly;
    }
    let disc_plain = if config.train_plain_discriminators {
        let (lx, gx) = discriminator_pass(&mut model.d_x, x, &out.f_y, Mode::Train, rng)?;
        apply_adam(&mut model.d_x, &gx, &mut optimizers.d_x)?;
        let (ly, gy) = discriminator_pass(&mut model.d_y, y, &out.g_x, Mode::Train, rng)?;
        apply_adam(&mut model.d_y, &gy, &mut optimizers.d_y)?;
        Some(lx + ly)
    } else {
        None
    };
    Ok(StepRecord {
        step,
        losses: pass.breakdown,
        disc_ccyc,
        disc_plain,
    })
}

/// Scores from a validation run; higher `score` is better.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub score: f64,
    pub metrics: BTreeMap<String, f64>,
}

/// Periodic evaluation of a model snapshot during training.
pub trait Validator: Sync {
    fn validate(&self, model: &RetroGanModel) -> Result<EvalSnapshot>;
}

impl<F> Validator for F
where
    F: Fn(&RetroGanModel) -> Result<EvalSnapshot> + Sync,
{
    fn validate(&self, model: &RetroGanModel) -> Result<EvalSnapshot> {
        self(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step(StepRecord),
    Eval {
        step: u64,
        #[serde(flatten)]
        snapshot: EvalSnapshot,
    },
}

impl LogRecord {
    pub fn step(&self) -> u64 {
        match self {
            LogRecord::Step(r) => r.step,
            LogRecord::Eval { step, .. } => *step,
        }
    }
}

/// Append-only training log: one record per step plus one per evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            LogRecord::Eval { .. } => None,
        })
    }

    pub fn evals(&self) -> impl Iterator<Item = (u64, &EvalSnapshot)> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Eval { step, snapshot } => Some((*step, snapshot)),
            LogRecord::Step(_) => None,
        })
    }

    /// Highest validation score over all snapshots.
    pub fn best_score(&self) -> Option<f64> {
        self.evals().map(|(_, s)| s.score).reduce(f64::max)
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn read_jsonl(text: &str) -> Result<TrainLog> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?);
        }
        Ok(TrainLog { records })
    }
}

/// The model with the highest validation score seen so far.
#[derive(Clone, Debug)]
pub struct BestModel {
    pub step: u64,
    pub score: f64,
    pub model: RetroGanModel,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RetroGanModel,
    pub best: Option<BestModel>,
    pub log: TrainLog,
}

/// Full mutable training state. Cloning it forks the run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: RetroGanModel,
    pub optimizers: Optimizers,
    pub rng: RngState,
    pub step: u64,
    epoch_order: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    /// Fresh model and optimizer states for `config`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = build_model(&config.arch, &mut RngState::for_stream(config.seed, streams::INIT))?;
        let optimizers = Optimizers::new(&model, config.g_lr, config.d_lr);
        let rng = RngState::for_stream(config.seed, streams::TRAIN);
        Ok(Self::from_parts(config, model, optimizers, rng, 0))
    }

    pub fn from_parts(
        config: TrainConfig,
        model: RetroGanModel,
        optimizers: Optimizers,
        rng: RngState,
        step: u64,
    ) -> Self {
        Trainer {
            config,
            model,
            optimizers,
            rng,
            step,
            epoch_order: None,
        }
    }

    fn check_corpus(&self, corpus: &PairedCorpus) -> Result<()> {
        if corpus.is_empty() {
            return Err(Error::Data("training corpus is empty".into()));
        }
        if corpus.dim() != self.config.arch.dim {
            return Err(Error::Dim {
                expected: self.config.arch.dim,
                found: corpus.dim(),
            });
        }
        Ok(())
    }

    /// Row indices of the batch for the current step. Each epoch is a fresh
    /// permutation; a trailing partial batch is dropped, and a corpus
    /// smaller than one batch is used whole.
    fn batch_rows(&mut self, n: usize) -> Vec<usize> {
        let bs = self.config.batch_size.min(n);
        let per_epoch = (n / bs) as u64;
        let epoch = self.step / per_epoch;
        let slot = (self.step % per_epoch) as usize;
        if self.epoch_order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut order: Vec<usize> = (0..n).collect();
            RngState::for_stream(self.config.seed, streams::SHUFFLE_BASE + epoch).shuffle(&mut order);
            self.epoch_order = Some((epoch, order));
        }
        let order = &self.epoch_order.as_ref().expect("set above").1;
        order[slot * bs..(slot + 1) * bs].to_vec()
    }

    /// Runs one step on the next batch of `corpus`.
    pub fn step(&mut self, corpus: &PairedCorpus) -> Result<StepRecord> {
        self.check_corpus(corpus)?;
        let rows = self.batch_rows(corpus.len());
        let x = corpus.x.select_rows(&rows);
        let y = corpus.y.select_rows(&rows);
        let record = train_step_record(
            &mut self.model,
            &x,
            &y,
            &self.config,
            &mut self.optimizers,
            &mut self.rng,
            self.step + 1,
        )?;
        self.step += 1;
        Ok(record)
    }

    /// Steps until `self.step == until`, logging every step and evaluating
    /// every `eval_every` steps and at `until`.
    pub fn run_until(
        &mut self,
        corpus: &PairedCorpus,
        until: u64,
        validator: Option<&dyn Validator>,
        log: &mut TrainLog,
        best: &mut Option<BestModel>,
    ) -> Result<()> {
        self.check_corpus(corpus)?;
        while self.step < until {
            let record = self.step(corpus)?;
            if !record.losses.total.is_finite() {
                return Err(Error::Data(format!(
                    "objective became non-finite at step {}",
                    record.step
                )));
            }
            log.records.push(LogRecord::Step(record));
            let periodic = self.config.eval_every > 0 && self.step.is_multiple_of(self.config.eval_every);
            if let Some(v) = validator {
                if periodic || self.step == until {
                    self.evaluate(v, log, best)?;
                }
            }
            if self.step.is_multiple_of(1000) {
                log::debug!("step {} total {:.6}", self.step, record.losses.total);
            }
        }
        Ok(())
    }

    fn evaluate(
        &self,
        validator: &dyn Validator,
        log: &mut TrainLog,
        best: &mut Option<BestModel>,
    ) -> Result<()> {
        let snapshot = validator.validate(&self.model)?;
        if best.as_ref().is_none_or(|b| snapshot.score > b.score) {
            *best = Some(BestModel {
                step: self.step,
                score: snapshot.score,
                model: self.model.clone(),
            });
        }
        log.records.push(LogRecord::Eval {
            step: self.step,
            snapshot,
        });
        Ok(())
    }
}

/// Trains a fresh model on `corpus` for `config.total_batches` steps.
pub fn train(
    corpus: &PairedCorpus,
    config: &TrainConfig,
    validator: Option<&dyn Validator>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone())?;
    run_to_completion(&mut trainer, corpus, validator)
}

/// Steps `trainer` until `config.total_batches`. When no step remains, the
/// current model is evaluated once so the outcome still has a snapshot.
pub fn run_to_completion(
    trainer: &mut Trainer,
    corpus: &PairedCorpus,
    validator: Option<&dyn Validator>,
) -> Result<TrainOutcome> {
    trainer.check_corpus(corpus)?;
    let mut log = TrainLog::default();
    let mut best = None;
    let until = trainer.config.total_batches;
    if trainer.step >= until {
        if let Some(v) = validator {
            trainer.evaluate(v, &mut log, &mut best)?;
        }
    }
    trainer.run_until(corpus, until, validator, &mut log, &mut best)?;
    Ok(TrainOutcome {
        model: trainer.model.clone(),
        best,
        log,
    })
}
