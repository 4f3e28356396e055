//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p retrogan-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use retrogan::checkpoint::{decode, encode, load_checkpoint, save_checkpoint};
use retrogan::embeddings::{nearest_neighbors, post_specialize, EmbeddingTable};
use retrogan::evaluation::{evaluate_similarity, spearman_rho, MissingPolicy, SimilarityDataset};
use retrogan::harness::{ablation_plan, cosine_recovery, mean_paired_cosine, ook_harness, AblationMode};
use retrogan::losses::{
    conditional_cycle_loss, cycle_loss, fake_loss, generator_adversarial, identity_loss,
    max_margin_loss, real_loss, Confounders, GanObjective, LossToggles, LossWeights,
};
use retrogan::models::{
    build_model, conditional_score, identity_generator, ArchConfig, NetworkId, RetroGanModel,
};
use retrogan::nn::{gradcheck, parameter_count, relative_error, Mode};
use retrogan::optim::{adam_step, AdamState};
use retrogan::rng::RngState;
use retrogan::synthetic::{synthesize_paired_corpus, SyntheticCorpus, SyntheticSpec};
use retrogan::tensor::cosine_similarity;
use retrogan::trainer::{
    discriminator_pass, generator_pass, run_to_completion, train, TrainConfig, Trainer,
};
use retrogan::Matrix;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: retrogan::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

const GRAD_BOUND: f64 = 1e-4;
const FD_EPS: f64 = 1e-5;

// ---------------------------------------------------------------- 1

fn architecture_fidelity() -> Check {
    let start = Instant::now();
    let arch = ArchConfig::default();
    let g = parameter_count(&arch.generator_specs());
    let d = parameter_count(&arch.discriminator_specs(arch.dim));
    let dc = parameter_count(&arch.conditional_discriminator_specs());
    let total = arch.total_parameters();
    let got = (g, d, dc, total);
    ensure(got == (5_427_500, 4_818_945, 5_433_345, 31_359_580), || {
        format!("counts {got:?}")
    })?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("took {secs:.2}s"))?;
    Ok(format!("G {g}, D {d}, D_c {dc}, total {total}"))
}

// ---------------------------------------------------------------- 2

/// Central finite differences of `f` with respect to every entry of `m`.
fn fd_matrix(m: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    let mut probe = m.clone();
    for i in 0..m.as_slice().len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + FD_EPS;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - FD_EPS;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        out.as_mut_slice()[i] = (plus - minus) / (2.0 * FD_EPS);
    }
    out
}

fn worst_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

struct GradFixture {
    model: RetroGanModel,
    x: Matrix,
    y: Matrix,
    conf: Confounders,
}

fn grad_fixture() -> GradFixture {
    let arch = ArchConfig::toy(8, 16);
    let mut rng = RngState::new(2024);
    let mut model = build_model(&arch, &mut rng).unwrap();
    // non-trivial running statistics so frozen batchnorm is not an identity
    for id in [NetworkId::DX, NetworkId::DY, NetworkId::DcX, NetworkId::DcY] {
        let net = model.network_mut(id);
        for _ in 0..3 {
            let batch = rng.gaussian_matrix(12, net.in_dim(), 0.1, 1.0);
            net.forward(&batch, Mode::Train, &mut rng).unwrap();
        }
    }
    // an odd batch keeps the mean-absolute-error sign sums away from an
    // exact zero, where finite differences only measure round-off
    let x = rng.gaussian_matrix(7, 8, 0.0, 1.0).row_l2_normalize().unwrap();
    let y = rng.gaussian_matrix(7, 8, 0.0, 1.0).row_l2_normalize().unwrap();
    let conf = Confounders::sample(7, 5, &mut rng).unwrap();
    GradFixture { model, x, y, conf }
}

fn single_toggle(name: &str) -> LossToggles {
    let mut t = LossToggles::all(false);
    match name {
        "gan" => t.gan = true,
        "one_way_mm" => t.one_way_mm = true,
        "cycle_mm" => t.cycle_mm = true,
        "cycle_dis" => t.cycle_dis = true,
        "id_loss" => t.id_loss = true,
        "cycle_loss" => t.cycle_loss = true,
        _ => unreachable!(),
    }
    t
}

/// Parameter gradients of the generators under `toggles` against finite
/// differences of the reported total.
fn generator_objective_error(fx: &GradFixture, toggles: &LossToggles) -> Result<f64, String> {
    let w = LossWeights {
        lambda_cyc: 1.3,
        gamma_id: 0.7,
        sigma_ccyc: 0.9,
        delta_mm: 1.0,
        k_confounders: Some(5),
    };
    let obj = GanObjective::NonSaturating;
    let mut rng = RngState::new(0);
    let total = |m: &RetroGanModel| {
        let mut m = m.clone();
        generator_pass(&mut m, &fx.x, &fx.y, &w, toggles, obj, &fx.conf, Mode::Frozen, &mut RngState::new(0))
            .unwrap()
            .breakdown
            .total
    };
    let mut model = fx.model.clone();
    let pass = ok(generator_pass(
        &mut model, &fx.x, &fx.y, &w, toggles, obj, &fx.conf, Mode::Frozen, &mut rng,
    ))?;
    let mut worst: f64 = 0.0;
    for (id, analytic) in [(NetworkId::G, pass.grad_g.flatten()), (NetworkId::F, pass.grad_f.flatten())] {
        let mut probe = fx.model.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = *probe.network_mut(id).param_mut(i);
            *probe.network_mut(id).param_mut(i) = orig + FD_EPS;
            let plus = total(&probe);
            *probe.network_mut(id).param_mut(i) = orig - FD_EPS;
            let minus = total(&probe);
            *probe.network_mut(id).param_mut(i) = orig;
            worst = worst.max(relative_error(a, (plus - minus) / (2.0 * FD_EPS)));
        }
    }
    Ok(worst)
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let fx = grad_fixture();
    let mut rng = RngState::new(5);
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut record = |name: String, err: f64| {
        // NaN errors fail too
        if err.is_nan() || err >= GRAD_BOUND {
            failures.push(format!("{name} {err:.2e}"));
        }
        lines.push((name, err));
    };

    // each network
    for id in NetworkId::ALL {
        let net = fx.model.network(id);
        let batch = rng.gaussian_matrix(7, net.in_dim(), 0.0, 1.0);
        record(format!("net {id:?}"), ok(gradcheck(net, &batch, FD_EPS))?);
    }

    // the combined objective, one term family at a time and all together
    for name in ["gan", "one_way_mm", "cycle_mm", "cycle_dis", "id_loss", "cycle_loss"] {
        record(format!("objective {name}"), generator_objective_error(&fx, &single_toggle(name))?);
    }
    record("objective all".into(), generator_objective_error(&fx, &LossToggles::all(true))?);

    // the four hinge terms with respect to their predictions
    let mut m = fx.model.clone();
    let out = ok(m.cycle_forward(&fx.x, &fx.y, Mode::Eval, &mut rng))?;
    let (x, y, conf) = (&fx.x, &fx.y, &fx.conf);
    let mm = ok(max_margin_loss(&out.g_x, &out.f_y, &out.g_f_y, &out.f_g_x, x, y, conf, 1.0))?;
    let hinge = |which: usize, p: &Matrix| {
        let (a, b, c, d) = match which {
            0 => (p, &out.f_y, &out.g_f_y, &out.f_g_x),
            1 => (&out.g_x, p, &out.g_f_y, &out.f_g_x),
            2 => (&out.g_x, &out.f_y, p, &out.f_g_x),
            _ => (&out.g_x, &out.f_y, &out.g_f_y, p),
        };
        let l = max_margin_loss(a, b, c, d, x, y, conf, 1.0).unwrap();
        [l.forward.value, l.backward.value, l.cycle_y.value, l.cycle_x.value][which]
    };
    let terms = [
        ("hinge G(x)->y", &mm.forward.grad, &out.g_x),
        ("hinge F(y)->x", &mm.backward.grad, &out.f_y),
        ("hinge G(F(y))->y", &mm.cycle_y.grad, &out.g_f_y),
        ("hinge F(G(x))->x", &mm.cycle_x.grad, &out.f_g_x),
    ];
    for (which, (name, grad, pred)) in terms.into_iter().enumerate() {
        let numeric = fd_matrix(pred, |p| hinge(which, p));
        record(name.into(), worst_error(grad.as_slice(), numeric.as_slice()));
    }

    // both sides of the conditional cycle loss
    let obj = GanObjective::NonSaturating;
    let cc = ok(conditional_cycle_loss(
        &fx.model, x, y, &out.g_x, &out.f_y, &out.f_g_x, &out.g_f_y, Mode::Frozen, obj,
    ))?;
    let ccyc = |slot: usize, p: &Matrix| {
        let mut a = [&out.g_x, &out.f_y, &out.f_g_x, &out.g_f_y];
        a[slot] = p;
        conditional_cycle_loss(&fx.model, x, y, a[0], a[1], a[2], a[3], Mode::Eval, obj)
            .unwrap()
            .gen_loss
    };
    let sides = [
        ("D_cX condition G(x)", &cc.grad_g_x, &out.g_x, 0),
        ("D_cY condition F(y)", &cc.grad_f_y, &out.f_y, 1),
        ("D_cX sample F(G(x))", &cc.grad_f_g_x, &out.f_g_x, 2),
        ("D_cY sample G(F(y))", &cc.grad_g_f_y, &out.g_f_y, 3),
    ];
    for (name, grad, at, slot) in sides {
        let numeric = fd_matrix(at, |p| ccyc(slot, p));
        record(name.into(), worst_error(grad.as_slice(), numeric.as_slice()));
    }

    // plain cycle and identity terms with respect to their inputs
    let cyc = ok(cycle_loss(x, &out.f_g_x, y, &out.g_f_y))?;
    let n1 = fd_matrix(&out.f_g_x, |p| cycle_loss(x, p, y, &out.g_f_y).unwrap().value);
    let n2 = fd_matrix(&out.g_f_y, |p| cycle_loss(x, &out.f_g_x, y, p).unwrap().value);
    record("cycle F(G(x))".into(), worst_error(cyc.grad_first.as_slice(), n1.as_slice()));
    record("cycle G(F(y))".into(), worst_error(cyc.grad_second.as_slice(), n2.as_slice()));
    let g_y = ok(fx.model.g.infer(y))?;
    let f_x = ok(fx.model.f.infer(x))?;
    let id = ok(identity_loss(&g_y, y, &f_x, x))?;
    let n1 = fd_matrix(&g_y, |p| identity_loss(p, y, &f_x, x).unwrap().value);
    let n2 = fd_matrix(&f_x, |p| identity_loss(&g_y, y, p, x).unwrap().value);
    record("identity G(y)".into(), worst_error(id.grad_first.as_slice(), n1.as_slice()));
    record("identity F(x)".into(), worst_error(id.grad_second.as_slice(), n2.as_slice()));

    // discriminator objectives with respect to discriminator parameters
    for (id, real, fake) in [
        (NetworkId::DX, x.clone(), out.f_y.clone()),
        (NetworkId::DY, y.clone(), out.g_x.clone()),
        (NetworkId::DcX, ok(out.g_x.hcat(x))?, ok(out.g_x.hcat(&out.f_g_x))?),
        (NetworkId::DcY, ok(out.f_y.hcat(y))?, ok(out.f_y.hcat(&out.g_f_y))?),
    ] {
        let mut net = fx.model.network(id).clone();
        let (_, grads) = ok(discriminator_pass(&mut net, &real, &fake, Mode::Frozen, &mut rng))?;
        let analytic = grads.flatten();
        let value = |n: &retrogan::nn::Network| {
            let r = n.infer(&real).unwrap().into_vec();
            let f = n.infer(&fake).unwrap().into_vec();
            real_loss(&r).unwrap().value + fake_loss(&f).unwrap().value
        };
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = *probe.param_mut(i);
            *probe.param_mut(i) = orig + FD_EPS;
            let plus = value(&probe);
            *probe.param_mut(i) = orig - FD_EPS;
            let minus = value(&probe);
            *probe.param_mut(i) = orig;
            worst = worst.max(relative_error(a, (plus - minus) / (2.0 * FD_EPS)));
        }
        record(format!("disc loss {id:?}"), worst);
    }

    let secs = start.elapsed().as_secs_f64();
    ensure(failures.is_empty(), || format!("above {GRAD_BOUND:e}: {}", failures.join(", ")))?;
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    let worst = lines.iter().map(|l| l.1).fold(0.0, f64::max);
    Ok(format!("{} checks, worst relative error {worst:.2e}", lines.len()))
}

// ---------------------------------------------------------------- 3

fn loss_identities() -> Check {
    let dim = 8;
    let arch = ArchConfig::toy(dim, 2 * dim);
    let mut rng = RngState::new(3);
    let mut model = ok(build_model(&arch, &mut rng))?;
    model.g = ok(identity_generator(&arch))?;
    model.f = ok(identity_generator(&arch))?;
    let x = rng.gaussian_matrix(7, dim, 0.0, 1.0);
    let y = rng.gaussian_matrix(7, dim, 0.0, 1.0);
    let out = ok(model.cycle_forward(&x, &y, Mode::Eval, &mut rng))?;
    let cyc = ok(cycle_loss(&x, &out.f_g_x, &y, &out.g_f_y))?.value;
    let id = ok(identity_loss(&ok(model.g.infer(&y))?, &y, &ok(model.f.infer(&x))?, &x))?.value;
    ensure(cyc == 0.0 && id == 0.0, || format!("identity generators: cycle {cyc}, identity {id}"))?;

    let mut model = ok(build_model(&ArchConfig::toy(dim, 16), &mut rng))?;
    for id in [NetworkId::DX, NetworkId::DY, NetworkId::DcX, NetworkId::DcY] {
        for s in model.network_mut(id).param_slices_mut() {
            s.fill(0.0);
        }
    }
    let ln2 = std::f64::consts::LN_2;
    let close = |v: f64, want: f64| (v - want).abs() <= 1e-15 * want.abs().max(1.0);
    let mut scores = ok(model.d_x.infer(&x))?.into_vec();
    scores.extend(ok(model.d_y.infer(&y))?.into_vec());
    let (s, _) = ok(conditional_score(&mut model.d_cx, &x, &y, Mode::Eval, &mut rng))?;
    scores.extend(s);
    let (s, _) = ok(conditional_score(&mut model.d_cy, &y, &x, Mode::Eval, &mut rng))?;
    scores.extend(s);
    ensure(scores.iter().all(|&s| s == 0.5), || "a zero-weight score differs from 0.5".into())?;
    let per_term = [
        ok(real_loss(&scores))?.value,
        ok(fake_loss(&scores))?.value,
        ok(generator_adversarial(&scores, GanObjective::NonSaturating))?.value,
    ];
    ensure(per_term.iter().all(|&v| close(v, ln2)), || format!("per-term losses {per_term:?}"))?;
    let mut d = model.d_x.clone();
    let (two, _) = ok(discriminator_pass(&mut d, &x, &y, Mode::Frozen, &mut rng))?;
    ensure(close(two, 2.0 * ln2), || format!("real+fake discriminator loss {two}"))?;
    let out = ok(model.cycle_forward(&x, &y, Mode::Eval, &mut rng))?;
    let cc = ok(conditional_cycle_loss(
        &model, &x, &y, &out.g_x, &out.f_y, &out.f_g_x, &out.g_f_y, Mode::Eval,
        GanObjective::NonSaturating,
    ))?;
    ensure(close(cc.disc_loss, 4.0 * ln2) && close(cc.gen_loss, 2.0 * ln2), || {
        format!("conditional losses {} / {}", cc.disc_loss, cc.gen_loss)
    })?;

    let mut model = ok(build_model(&ArchConfig::toy(dim, 16), &mut rng))?;
    let conf = ok(Confounders::sample(7, 4, &mut rng))?;
    let pass = ok(generator_pass(
        &mut model, &x, &y, &LossWeights::default(), &LossToggles::all(false),
        GanObjective::NonSaturating, &conf, Mode::Frozen, &mut rng,
    ))?;
    ensure(pass.breakdown.total == 0.0, || format!("all toggles off: total {}", pass.breakdown.total))?;
    ensure(pass.grad_g.is_zero() && pass.grad_f.is_zero(), || "all toggles off: nonzero gradient".into())?;
    Ok("cycle = identity = 0; scores 0.5, ln 2 per term; toggled-off total 0".into())
}

// ---------------------------------------------------------------- 4

fn oracle_margin(pred: &Matrix, gold: &Matrix, conf: &Confounders, delta: f64) -> f64 {
    let n = pred.rows();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if conf.row(i).contains(&j) {
                let pos = cosine_similarity(pred.row(i), gold.row(i)).unwrap();
                let neg = cosine_similarity(pred.row(i), gold.row(j)).unwrap();
                sum += (delta - pos + neg).max(0.0);
                count += 1;
            }
        }
    }
    sum / count as f64
}

/// Ranks by counting, ties averaged, then Pearson on the ranks.
fn oracle_spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn oracle_equivalence() -> Check {
    let mut rng = RngState::new(44);
    let mut worst_mm: f64 = 0.0;
    for _ in 0..20 {
        let mats: Vec<Matrix> = (0..6).map(|_| rng.gaussian_matrix(8, 16, 0.0, 1.0)).collect();
        let conf = ok(Confounders::sample(8, 7.min(1 + rng.below(7)), &mut rng))?;
        let delta = 0.5 + rng.uniform();
        let (gx, fy, gfy, fgx, x, y) = (&mats[0], &mats[1], &mats[2], &mats[3], &mats[4], &mats[5]);
        let l = ok(max_margin_loss(gx, fy, gfy, fgx, x, y, &conf, delta))?;
        let oracle = [
            oracle_margin(gx, y, &conf, delta),
            oracle_margin(fy, x, &conf, delta),
            oracle_margin(gfy, y, &conf, delta),
            oracle_margin(fgx, x, &conf, delta),
        ];
        let got = [l.forward.value, l.backward.value, l.cycle_y.value, l.cycle_x.value];
        for (g, o) in got.iter().zip(oracle) {
            worst_mm = worst_mm.max((g - o).abs());
        }
    }
    ensure(worst_mm <= 1e-10, || format!("max-margin off by {worst_mm:e}"))?;

    let mut worst_rho: f64 = 0.0;
    for _ in 0..50 {
        let a: Vec<f64> = (0..10).map(|_| rng.below(4) as f64).collect();
        let b: Vec<f64> = (0..10).map(|_| rng.below(5) as f64 * 0.5).collect();
        let oracle = oracle_spearman(&a, &b);
        match spearman_rho(&a, &b) {
            Ok(r) => worst_rho = worst_rho.max((r - oracle).abs()),
            Err(_) => ensure(!oracle.is_finite(), || format!("rho undefined for {a:?} {b:?}"))?,
        }
    }
    ensure(worst_rho <= 1e-12, || format!("spearman off by {worst_rho:e}"))?;

    let (lr, b1, b2, eps) = (0.02, 0.9, 0.999, 1e-8);
    let grads = [[0.3, -1.2, 4.0], [-0.7, 0.0, 2.5], [1.1, 0.4, -3.0]];
    let mut params = vec![0.5, -0.25, 1.0];
    let mut hand = params.clone();
    let mut m = [0.0f64; 3];
    let mut v = [0.0f64; 3];
    for (t, g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        for k in 0..3 {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let mh = m[k] / (1.0 - b1.powi(t));
            let vh = v[k] / (1.0 - b2.powi(t));
            hand[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    let mut st = AdamState::new(&[3], lr);
    for g in &grads {
        ok(adam_step(&mut [&mut params[..]], &[&g[..]], &mut st))?;
    }
    let adam_err = params.iter().zip(&hand).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(adam_err <= 1e-12, || format!("adam off by {adam_err:e}"))?;

    let words: Vec<String> = (0..200).map(|i| format!("v{i}")).collect();
    let mut vectors = rng.gaussian_matrix(200, 12, 0.0, 1.0);
    // duplicated rows produce exact ties
    for r in [10, 50, 90] {
        let src = vectors.row(3).to_vec();
        vectors.row_mut(r).copy_from_slice(&src);
    }
    let table = ok(EmbeddingTable::new(words.clone(), vectors))?;
    for (query, k) in [(3usize, 200usize), (7, 15), (150, 1)] {
        let q = table.vectors().row(query);
        let mut scan: Vec<(String, f64)> = (0..200)
            .map(|i| {
                let c = if i == query { 1.0 } else { cosine_similarity(q, table.vectors().row(i)).unwrap() };
                (words[i].clone(), c)
            })
            .collect();
        scan.sort_by(|a, b| b.1.total_cmp(&a.1));
        scan.truncate(k);
        let got = ok(nearest_neighbors(&table, &words[query], k))?;
        ensure(got == scan, || format!("neighbors of {} differ from the scan", words[query]))?;
    }
    Ok(format!(
        "max-margin {worst_mm:.1e}, spearman {worst_rho:.1e}, adam {adam_err:.1e}, neighbors exact"
    ))
}

// ---------------------------------------------------------------- desk-scale setup

fn desk_spec(seed: u64, dataset_pairs: usize) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        vocab_size: 2000,
        dim: 32,
        n_clusters: 50,
        holdout_fraction: 0.2,
        collapse_strength: 0.8,
        spread: 1.5,
        dataset_pairs,
        ..SyntheticSpec::default()
    }
}

fn desk_config(seed: u64, total_batches: u64) -> TrainConfig {
    TrainConfig {
        g_lr: 1e-3,
        d_lr: 1e-3,
        batch_size: 32,
        total_batches,
        seed,
        eval_every: 0,
        train_plain_discriminators: true,
        weights: LossWeights {
            delta_mm: 1.0,
            k_confounders: Some(10),
            ..LossWeights::default()
        },
        arch: ArchConfig {
            generator_hidden_layers: 1,
            discriminator_hidden_layers: 1,
            ..ArchConfig::toy(32, 128)
        },
        ..TrainConfig::default()
    }
}

fn desk_corpus(seed: u64, dataset_pairs: usize) -> Result<SyntheticCorpus, String> {
    ok(synthesize_paired_corpus(&desk_spec(seed, dataset_pairs)))
}

// ---------------------------------------------------------------- 5

fn determinism() -> Check {
    let corpus = desk_corpus(11, 200)?;
    let pairs = corpus.training_corpus();
    let config = desk_config(11, 2000);
    let run = || -> Result<Vec<u8>, String> {
        let mut t = ok(Trainer::new(config.clone()))?;
        ok(run_to_completion(&mut t, &pairs, None))?;
        ok(encode(&t.checkpoint()))
    };
    let (a, b) = (run()?, run()?);
    ensure(a == b, || "two runs with one seed gave different checkpoints".into())?;

    let mut t = ok(Trainer::new(config.clone()))?;
    let mut log = Default::default();
    let mut best = None;
    ok(t.run_until(&pairs, 1200, None, &mut log, &mut best))?;
    let bytes = ok(encode(&t.checkpoint()))?;
    let mut resumed = ok(Trainer::from_checkpoint(ok(decode(&bytes))?))?;
    ok(run_to_completion(&mut resumed, &pairs, None))?;
    let c = ok(encode(&resumed.checkpoint()))?;
    ensure(c == a, || "resume at 1200 continued to 2000 differs from an uninterrupted run".into())?;
    Ok(format!("2000-step runs bit-identical ({} bytes); resume at 1200 matches", a.len()))
}

// ---------------------------------------------------------------- 6

const GAIN_THRESHOLD: f64 = 0.10;

fn generalization() -> Check {
    let start = Instant::now();
    let corpus = desk_corpus(0, 1000)?;
    let outcome = ok(train(&corpus.training_corpus(), &desk_config(0, 20_000), None))?;
    let held = corpus.held_out_words();
    let raw = ok(mean_paired_cosine(&corpus.x, &corpus.y, &held))?;
    let rec = ok(cosine_recovery(&outcome.model, &corpus.x, &corpus.y, &held))?;
    let gx = ok(post_specialize(&corpus.x, &outcome.model, 512))?;
    let bench = corpus.dataset("all").ok_or("no synthetic benchmark")?;
    let rho_x = ok(evaluate_similarity(&corpus.x, bench, MissingPolicy::Skip))?.rho;
    let rho_gx = ok(evaluate_similarity(&gx, bench, MissingPolicy::Skip))?.rho;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "held-out cosine {raw:.3} -> {rec:.3} (gain {:.3}); rho {rho_x:.3} -> {rho_gx:.3}; {secs:.0}s",
        rec - raw
    );
    ensure(rec - raw >= GAIN_THRESHOLD, || format!("gain below {GAIN_THRESHOLD}: {detail}"))?;
    ensure(rho_gx > rho_x, || format!("rho did not improve: {detail}"))?;
    ensure(secs <= 600.0, || format!("over 10 minutes: {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- 7

const SEEDS: [u64; 3] = [0, 1, 2];
const GRID_STEPS: u64 = 5000;

fn ook_protocol() -> Check {
    let fractions = [0.05, 0.25, 1.0];
    let mut sums = [0.0; 3];
    for seed in SEEDS {
        let corpus = desk_corpus(seed, 400)?;
        let datasets: Vec<SimilarityDataset> = ["heldout", "known"]
            .iter()
            .map(|n| corpus.dataset(n).cloned().ok_or(format!("no {n} dataset")))
            .collect::<Result<_, _>>()?;
        let config = desk_config(seed, GRID_STEPS);
        let rows = ok(ook_harness(
            &corpus.x, &corpus.y, &corpus.constraints, &datasets, &fractions, seed,
            MissingPolicy::Skip, |_, pairs| Ok(train(pairs, &config, None)?.model),
        ))?;
        for (i, f) in fractions.iter().enumerate() {
            let row = rows
                .iter()
                .find(|r| r.fraction == *f && r.report.dataset == "heldout")
                .ok_or("missing grid row")?;
            sums[i] += row.report.rho;
        }
    }
    let means = sums.map(|s| s / SEEDS.len() as f64);
    let detail = format!(
        "mean held-out rho over 3 seeds: f=0.05 {:.4}, f=0.25 {:.4}, f=1.0 {:.4}",
        means[0], means[1], means[2]
    );
    ensure(means[2] >= means[0], || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 8

fn ablation_direction() -> Check {
    let plan = ablation_plan(LossToggles::default(), AblationMode::Toggle);
    let no_mm = plan
        .iter()
        .find(|(label, _)| label == "no_one_way_mm")
        .ok_or("no no_one_way_mm run in the plan")?
        .1;
    let mut diffs = Vec::new();
    for seed in SEEDS {
        let corpus = desk_corpus(seed, 400)?;
        let pairs = corpus.training_corpus();
        let held = corpus.held_out_words();
        let full = desk_config(seed, GRID_STEPS);
        let ablated = TrainConfig { toggles: no_mm, ..full.clone() };
        let base = ok(cosine_recovery(&ok(train(&pairs, &full, None))?.model, &corpus.x, &corpus.y, &held))?;
        let abl = ok(cosine_recovery(&ok(train(&pairs, &ablated, None))?.model, &corpus.x, &corpus.y, &held))?;
        diffs.push((base, abl));
    }
    let mean = diffs.iter().map(|(b, a)| b - a).sum::<f64>() / diffs.len() as f64;
    let detail = diffs
        .iter()
        .map(|(b, a)| format!("{b:.3} vs {a:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(mean > 0.0, || format!("removing one-way max-margin did not hurt: {detail}"))?;
    Ok(format!("held-out recovery full vs no_one_way_mm: {detail}; mean drop {mean:.3}"))
}

// ---------------------------------------------------------------- 9

fn run_cli(args: &[&str]) -> Result<i32, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_retrogan"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    out.status.code().ok_or_else(|| "killed by signal".into())
}

fn expect_code(args: &[&str], want: i32) -> Result<(), String> {
    let got = run_cli(args)?;
    ensure(got == want, || format!("`retrogan {}` exited {got}, expected {want}", args.join(" ")))
}

fn cli_contract(dir: &Path) -> Result<usize, String> {
    let p = |s: &str| dir.join(s).to_string_lossy().into_owned();
    std::fs::write(
        dir.join("run.toml"),
        "[train]\ntotal_batches = 4\nbatch_size = 8\n[train.arch]\ngenerator_size = 8\n\
         discriminator_size = 8\n[synthetic]\nvocab_size = 80\ndim = 6\nn_clusters = 4\ndataset_pairs = 30\n",
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(dir.join("junk.ckpt"), b"junk").map_err(|e| e.to_string())?;
    let (run, out) = (p("run.toml"), p("out"));
    let (ckpt, x) = (p("out/final.ckpt"), p("out/synthetic/x.txt"));
    let bench = p("out/synthetic/all.tsv");
    let (gx, junk, none) = (p("gx.txt"), p("junk.ckpt"), p("none.tsv"));
    let (ook, abl, gen) = (p("ook"), p("abl"), p("gen"));
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["train", "--config", &run, "--synthetic", "-o", &out], 0),
        (vec!["train", "--x", "/nonexistent/x.txt", "--y", "/nonexistent/y.txt", "-o", &out], 2),
        (vec!["train", "--config", &run, "--synthetic", "-o", &out, "--batch-size", "1"], 2),
        (vec!["postspecialize", "--checkpoint", &ckpt, "--input", &x, "-o", &gx], 0),
        (vec!["postspecialize", "--checkpoint", &junk, "--input", &x, "-o", &gx], 2),
        (vec!["evaluate", "--table", &gx, "--dataset", &bench], 0),
        (vec!["evaluate", "--table", &gx, "--dataset", &none], 2),
        (vec!["neighbors", "--table", &x, "--word", "w00000"], 0),
        (vec!["neighbors", "--table", &x, "--word", "absent-word"], 2),
        (vec!["ook", "--config", &run, "--synthetic", "-o", &ook, "--fractions", "0.5,1"], 0),
        (vec!["ook", "--config", &run, "--synthetic", "-o", &ook, "--fractions", "1.5"], 2),
        (vec!["ablate", "--config", &run, "--synthetic", "-o", &abl], 0),
        (vec!["ablate", "--config", &run, "--synthetic", "-o", &abl, "--mode", "sideways"], 2),
        (vec!["gen-synthetic", "-o", &gen, "--vocab-size", "50", "--clusters", "5", "--pairs", "20"], 0),
        (vec!["gen-synthetic", "-o", &gen, "--vocab-size", "5", "--clusters", "50"], 2),
        (vec!["no-such-command"], 2),
        (vec!["--help"], 0),
    ];
    for (args, want) in &cases {
        expect_code(args, *want)?;
    }
    Ok(cases.len())
}

fn file_round_trips() -> Check {
    let mut rng = RngState::new(9);
    let mut vectors = rng.gaussian_matrix(40, 7, 0.0, 1.0);
    vectors.set(0, 0, 1e-300);
    vectors.set(1, 1, -3.5e300);
    vectors.set(2, 2, 0.1 + 0.2);
    vectors.set(3, 3, -0.0);
    let words: Vec<String> = (0..40).map(|i| format!("tok{i}_ü")).collect();
    let table = ok(EmbeddingTable::new(words, vectors))?;
    let mut text = Vec::new();
    table.write(&mut text).map_err(|e| e.to_string())?;
    let (back, _) = ok(EmbeddingTable::parse_bytes(&text, Some(7)))?;
    ensure(back.words() == table.words(), || "table words changed".into())?;
    let same_bits = back
        .vectors()
        .as_slice()
        .iter()
        .zip(table.vectors().as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(same_bits, || "table values changed".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = ok(synthesize_paired_corpus(&SyntheticSpec {
        vocab_size: 60,
        dim: 6,
        n_clusters: 4,
        dataset_pairs: 20,
        ..SyntheticSpec::default()
    }))?;
    let mut config = desk_config(4, 25);
    config.arch = ArchConfig::toy(6, 10);
    let mut t = ok(Trainer::new(config))?;
    ok(run_to_completion(&mut t, &corpus.training_corpus(), None))?;
    let ckpt = t.checkpoint();
    let path = dir.path().join("model.ckpt");
    ok(save_checkpoint(&ckpt, &path))?;
    let loaded = ok(load_checkpoint(&path, None))?;
    let bytes = ok(encode(&ckpt))?;
    ensure(std::fs::read(&path).map_err(|e| e.to_string())? == bytes, || "file differs from encoding".into())?;
    ensure(ok(encode(&loaded))? == bytes, || "checkpoint re-encoding differs".into())?;
    ensure(loaded == ckpt, || "decoded checkpoint differs".into())?;

    let cases = cli_contract(dir.path())?;
    Ok(format!("table and checkpoint bit-identical; {cases} CLI exit-code cases"))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "architecture fidelity", architecture_fidelity),
        (2, "gradient correctness", gradient_correctness),
        (3, "loss identities", loss_identities),
        (4, "oracle equivalence", oracle_equivalence),
        (5, "determinism", determinism),
        (6, "desk-scale generalization", generalization),
        (7, "out-of-knowledge trend", ook_protocol),
        (8, "ablation direction", ablation_direction),
        (9, "file-format round trips", file_round_trips),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
