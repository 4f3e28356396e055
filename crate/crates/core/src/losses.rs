//! Terms of the RetroGAN objective, each returning its value together with
//! the gradient with respect to its matrix inputs.
//!
//! All terms are means over batch rows (and over confounders for the margin
//! loss), so magnitudes do not depend on the batch size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{conditional_input, RetroGanModel};
use crate::nn::{Mode, Network};
use crate::rng::RngState;
use crate::tensor::{dot, norm, Matrix};

/// Scores are clamped into `[SCORE_FLOOR, 1 - SCORE_FLOOR]` before logs.
pub const SCORE_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanObjective {
    /// Generator minimizes `−log D(fake)`.
    #[default]
    NonSaturating,
    /// Generator minimizes `log(1 − D(fake))`; values are negative.
    Minimax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub gamma_id: f64,
    pub sigma_ccyc: f64,
    pub delta_mm: f64,
    /// Confounders per row; `None` means `min(10, batch − 1)`.
    pub k_confounders: Option<usize>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cyc: 1.0,
            gamma_id: 0.01,
            sigma_ccyc: 1.0,
            delta_mm: 1.0,
            k_confounders: None,
        }
    }
}

impl LossWeights {
    pub fn validate(&self, batch_size: usize) -> Result<()> {
        for (v, name) in [
            (self.lambda_cyc, "lambda_cyc"),
            (self.gamma_id, "gamma_id"),
            (self.sigma_ccyc, "sigma_ccyc"),
            (self.delta_mm, "delta_mm"),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if let Some(k) = self.k_confounders {
            if k == 0 || k + 1 > batch_size {
                return Err(Error::Config(format!(
                    "k_confounders must be in 1..={}",
                    batch_size.saturating_sub(1)
                )));
            }
        }
        Ok(())
    }

    /// Effective confounder count for a batch of `rows`.
    pub fn confounders_for(&self, rows: usize) -> usize {
        let k = self.k_confounders.unwrap_or(10);
        k.min(rows.saturating_sub(1))
    }
}

/// Switches for the ablation study. A disabled term contributes exactly 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossToggles {
    /// Plain adversarial terms against `D_X`, `D_Y`.
    pub gan: bool,
    pub one_way_mm: bool,
    pub cycle_mm: bool,
    pub cycle_dis: bool,
    pub id_loss: bool,
    pub cycle_loss: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles::all(true)
    }
}

impl LossToggles {
    pub fn all(on: bool) -> Self {
        LossToggles {
            gan: on,
            one_way_mm: on,
            cycle_mm: on,
            cycle_dis: on,
            id_loss: on,
            cycle_loss: on,
        }
    }
}

/// Raw (unweighted, untoggled) values of every objective term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub gan_x: f64,
    pub gan_y: f64,
    pub cyc: f64,
    pub id: f64,
    pub mm_forward: f64,
    pub mm_backward: f64,
    pub mm_cycle_y: f64,
    pub mm_cycle_x: f64,
    pub ccyc: f64,
}

/// Per-step loss record: toggled-off terms read 0, `total` is the weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub gan_x: f64,
    pub gan_y: f64,
    pub cyc: f64,
    pub id: f64,
    pub mm_forward: f64,
    pub mm_backward: f64,
    pub mm_cycle_y: f64,
    pub mm_cycle_x: f64,
    pub ccyc: f64,
    pub total: f64,
}

/// `total = gan_x + gan_y + λ·cyc + γ·id + mm + ς·ccyc`.
pub fn combined_objective(
    parts: &LossParts,
    weights: &LossWeights,
    toggles: &LossToggles,
) -> LossBreakdown {
    let on = |flag: bool, v: f64| if flag { v } else { 0.0 };
    let b = LossBreakdown {
        gan_x: on(toggles.gan, parts.gan_x),
        gan_y: on(toggles.gan, parts.gan_y),
        cyc: on(toggles.cycle_loss, parts.cyc),
        id: on(toggles.id_loss, parts.id),
        mm_forward: on(toggles.one_way_mm, parts.mm_forward),
        mm_backward: on(toggles.one_way_mm, parts.mm_backward),
        mm_cycle_y: on(toggles.cycle_mm, parts.mm_cycle_y),
        mm_cycle_x: on(toggles.cycle_mm, parts.mm_cycle_x),
        ccyc: on(toggles.cycle_dis, parts.ccyc),
        total: 0.0,
    };
    let mm = b.mm_forward + b.mm_backward + b.mm_cycle_y + b.mm_cycle_x;
    LossBreakdown {
        total: b.gan_x
            + b.gan_y
            + weights.lambda_cyc * b.cyc
            + weights.gamma_id * b.id
            + mm
            + weights.sigma_ccyc * b.ccyc,
        ..b
    }
}

/// A scalar loss over a vector of discriminator scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreLoss {
    pub value: f64,
    /// d value / d score.
    pub grad: Vec<f64>,
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Domain("no discriminator scores".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Domain(format!("discriminator score {bad} outside [0, 1]")));
    }
    Ok(())
}

/// `−mean log D` for samples labelled real.
pub fn real_loss(scores: &[f64]) -> Result<ScoreLoss> {
    check_scores(scores)?;
    let n = scores.len() as f64;
    let mut value = 0.0;
    let grad = scores
        .iter()
        .map(|&s| {
            let c = s.clamp(SCORE_FLOOR, 1.0 - SCORE_FLOOR);
            value -= c.ln() / n;
            if c == s { -1.0 / (n * s) } else { 0.0 }
        })
        .collect();
    Ok(ScoreLoss { value, grad })
}

/// `−mean log(1 − D)` for samples labelled fake.
pub fn fake_loss(scores: &[f64]) -> Result<ScoreLoss> {
    check_scores(scores)?;
    let n = scores.len() as f64;
    let mut value = 0.0;
    let grad = scores
        .iter()
        .map(|&s| {
            let c = s.clamp(SCORE_FLOOR, 1.0 - SCORE_FLOOR);
            value -= (1.0 - c).ln() / n;
            if c == s { 1.0 / (n * (1.0 - s)) } else { 0.0 }
        })
        .collect();
    Ok(ScoreLoss { value, grad })
}

/// The generator's side of the adversarial game on fake-sample scores.
pub fn generator_adversarial(fake: &[f64], objective: GanObjective) -> Result<ScoreLoss> {
    match objective {
        GanObjective::NonSaturating => real_loss(fake),
        GanObjective::Minimax => {
            let l = fake_loss(fake)?;
            Ok(ScoreLoss {
                value: -l.value,
                grad: l.grad.into_iter().map(|g| -g).collect(),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversarialLoss {
    /// `−mean[log D(real)] − mean[log(1 − D(fake))]`
    pub disc: f64,
    pub gen: f64,
}

pub fn adversarial_loss(
    real: &[f64],
    fake: &[f64],
    objective: GanObjective,
) -> Result<AdversarialLoss> {
    Ok(AdversarialLoss {
        disc: real_loss(real)?.value + fake_loss(fake)?.value,
        gen: generator_adversarial(fake, objective)?.value,
    })
}

/// Mean absolute error and its (sub)gradient with respect to `pred`.
pub fn mae(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    pred.expect_same_shape(target, "mae")?;
    let n = (pred.rows() * pred.cols()).max(1) as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for ((g, &p), &t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let d = p - t;
        value += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((value / n, grad))
}

/// Sum of two MAE terms, with gradients for both predictions.
#[derive(Clone, Debug)]
pub struct PairedMae {
    pub value: f64,
    pub first: f64,
    pub second: f64,
    pub grad_first: Matrix,
    pub grad_second: Matrix,
}

/// `MAE(F(G(x)), x) + MAE(G(F(y)), y)`.
pub fn cycle_loss(x: &Matrix, f_g_x: &Matrix, y: &Matrix, g_f_y: &Matrix) -> Result<PairedMae> {
    let (a, ga) = mae(f_g_x, x)?;
    let (b, gb) = mae(g_f_y, y)?;
    Ok(PairedMae {
        value: a + b,
        first: a,
        second: b,
        grad_first: ga,
        grad_second: gb,
    })
}

/// `MAE(G(y), y) + MAE(F(x), x)`: a generator given an embedding already in
/// its target domain should leave it unchanged.
pub fn identity_loss(g_y: &Matrix, y: &Matrix, f_x: &Matrix, x: &Matrix) -> Result<PairedMae> {
    let (a, ga) = mae(g_y, y)?;
    let (b, gb) = mae(f_x, x)?;
    Ok(PairedMae {
        value: a + b,
        first: a,
        second: b,
        grad_first: ga,
        grad_second: gb,
    })
}

/// For each batch row, the indices of its confounder rows (never itself).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confounders {
    rows: Vec<Vec<usize>>,
}

impl Confounders {
    /// Draws `k` distinct other rows per row, uniformly without replacement.
    pub fn sample(batch: usize, k: usize, rng: &mut RngState) -> Result<Self> {
        if batch < 2 || k == 0 || k >= batch {
            return Err(Error::InsufficientConfounders {
                batch,
                requested: k,
            });
        }
        Ok(Confounders {
            rows: (0..batch).map(|i| rng.sample_excluding(batch, k, i)).collect(),
        })
    }

    pub fn from_sets(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n < 2 || k == 0 {
            return Err(Error::InsufficientConfounders {
                batch: n,
                requested: k,
            });
        }
        for (i, set) in rows.iter().enumerate() {
            if set.len() != k || set.iter().any(|&j| j == i || j >= n) {
                return Err(Error::Config(format!("bad confounder set for row {i}")));
            }
        }
        Ok(Confounders { rows })
    }

    pub fn batch(&self) -> usize {
        self.rows.len()
    }

    pub fn per_row(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }
}

#[derive(Clone, Debug)]
pub struct MarginTerm {
    pub value: f64,
    /// Gradient with respect to the predictions.
    pub grad: Matrix,
}

/// `mean_i mean_{j∈C_i} max(0, δ − cos(p_i, t_i) + cos(p_i, t_j))`.
///
/// A zero prediction row has cosine 0 to every gold row and contributes
/// `δ` per confounder with zero gradient. A zero gold row is an error.
pub fn margin_term(
    pred: &Matrix,
    gold: &Matrix,
    confounders: &Confounders,
    delta: f64,
) -> Result<MarginTerm> {
    pred.expect_same_shape(gold, "max_margin_loss")?;
    if confounders.batch() != pred.rows() {
        return Err(Error::shape(
            "max_margin_loss",
            format!(
                "{} confounder sets for {} rows",
                confounders.batch(),
                pred.rows()
            ),
        ));
    }
    let n = pred.rows();
    let k = confounders.per_row();
    let scale = 1.0 / (n * k) as f64;
    let gold_norms: Vec<f64> = gold.iter_rows().map(norm).collect();
    if let Some(i) = gold_norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateVector(format!("gold row {i}")));
    }
    let mut value = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for i in 0..n {
        let p = pred.row(i);
        let pn = norm(p);
        if pn == 0.0 {
            // a generator with every hidden unit inactive emits the zero
            // vector; its cosines count as 0 and it gets no margin gradient
            value += scale * k as f64 * delta.max(0.0);
            continue;
        }
        let cos_to = |j: usize| dot(p, gold.row(j)) / (pn * gold_norms[j]);
        let pos = cos_to(i);
        // d cos(p, t) / dp = t / (|p||t|) − cos · p / |p|²
        let mut coef_gold = vec![0.0; n];
        let mut coef_self = 0.0;
        for &j in confounders.row(i) {
            let neg = cos_to(j);
            let z = delta - pos + neg;
            if z > 0.0 {
                value += scale * z;
                coef_gold[i] -= scale / (pn * gold_norms[i]);
                coef_self += scale * pos / (pn * pn);
                coef_gold[j] += scale / (pn * gold_norms[j]);
                coef_self -= scale * neg / (pn * pn);
            }
        }
        let g = grad.row_mut(i);
        for (j, &c) in coef_gold.iter().enumerate() {
            if c != 0.0 {
                for (gv, tv) in g.iter_mut().zip(gold.row(j)) {
                    *gv += c * tv;
                }
            }
        }
        if coef_self != 0.0 {
            for (gv, pv) in g.iter_mut().zip(p) {
                *gv += coef_self * pv;
            }
        }
    }
    Ok(MarginTerm { value, grad })
}

/// The four margin terms: `(G(x), y)`, `(F(y), x)`, `(G(F(y)), y)`,
/// `(F(G(x)), x)`, all sharing one confounder draw.
#[derive(Clone, Debug)]
pub struct MaxMarginLoss {
    pub forward: MarginTerm,
    pub backward: MarginTerm,
    pub cycle_y: MarginTerm,
    pub cycle_x: MarginTerm,
}

impl MaxMarginLoss {
    pub fn value(&self) -> f64 {
        self.forward.value + self.backward.value + self.cycle_y.value + self.cycle_x.value
    }
}

#[allow(clippy::too_many_arguments)]
pub fn max_margin_loss(
    g_x: &Matrix,
    f_y: &Matrix,
    g_f_y: &Matrix,
    f_g_x: &Matrix,
    x: &Matrix,
    y: &Matrix,
    confounders: &Confounders,
    delta: f64,
) -> Result<MaxMarginLoss> {
    Ok(MaxMarginLoss {
        forward: margin_term(g_x, y, confounders, delta)?,
        backward: margin_term(f_y, x, confounders, delta)?,
        cycle_y: margin_term(g_f_y, y, confounders, delta)?,
        cycle_x: margin_term(f_g_x, x, confounders, delta)?,
    })
}

/// Both sides of the conditional cycle loss, with the generator-side
/// gradient for each of the four translated batches.
#[derive(Clone, Debug)]
pub struct ConditionalCycle {
    /// `−log D_cX(G(x), x) − log(1 − D_cX(G(x), F(G(x))))` plus the `D_cY`
    /// counterpart, each a batch mean.
    pub disc_loss: f64,
    /// Generator objective on the two reconstruction (fake) terms.
    pub gen_loss: f64,
    pub grad_g_x: Matrix,
    pub grad_f_g_x: Matrix,
    pub grad_f_y: Matrix,
    pub grad_g_f_y: Matrix,
}

struct ConditionalSide {
    disc: f64,
    gen: f64,
    grad_condition: Matrix,
    grad_sample: Matrix,
}

fn conditional_side(
    disc: &Network,
    condition: &Matrix,
    real: &Matrix,
    fake: &Matrix,
    differentiable: bool,
    objective: GanObjective,
) -> Result<ConditionalSide> {
    let real_scores = disc.infer(&conditional_input(condition, real)?)?.into_vec();
    let fake_in = conditional_input(condition, fake)?;
    let d = condition.cols();
    let (fake_scores, grads) = if differentiable {
        let (out, trace) = disc.forward_frozen(&fake_in)?;
        let scores = out.into_vec();
        let g = generator_adversarial(&scores, objective)?;
        let upstream = Matrix::from_vec(g.grad.len(), 1, g.grad)?;
        let dx = disc.backward(&trace, &upstream, None)?;
        (scores, Some(dx.split_cols(d)))
    } else {
        (disc.infer(&fake_in)?.into_vec(), None)
    };
    let (grad_condition, grad_sample) = grads.unwrap_or_else(|| {
        (
            Matrix::zeros(condition.rows(), d),
            Matrix::zeros(condition.rows(), d),
        )
    });
    Ok(ConditionalSide {
        disc: real_loss(&real_scores)?.value + fake_loss(&fake_scores)?.value,
        gen: generator_adversarial(&fake_scores, objective)?.value,
        grad_condition,
        grad_sample,
    })
}

/// Evaluates the conditional cycle loss with the conditional discriminators
/// held fixed (`Frozen` gives gradients, `Eval` only values).
#[allow(clippy::too_many_arguments)]
pub fn conditional_cycle_loss(
    model: &RetroGanModel,
    x: &Matrix,
    y: &Matrix,
    g_x: &Matrix,
    f_y: &Matrix,
    f_g_x: &Matrix,
    g_f_y: &Matrix,
    mode: Mode,
    objective: GanObjective,
) -> Result<ConditionalCycle> {
    if mode == Mode::Train {
        return Err(Error::InvalidState(
            "conditional discriminators are trained by the trainer's discriminator step",
        ));
    }
    let diff = mode == Mode::Frozen;
    let sx = conditional_side(&model.d_cx, g_x, x, f_g_x, diff, objective)?;
    let sy = conditional_side(&model.d_cy, f_y, y, g_f_y, diff, objective)?;
    Ok(ConditionalCycle {
        disc_loss: sx.disc + sy.disc,
        gen_loss: sx.gen + sy.gen,
        grad_g_x: sx.grad_condition,
        grad_f_g_x: sx.grad_sample,
        grad_f_y: sy.grad_condition,
        grad_g_f_y: sy.grad_sample,
    })
}
