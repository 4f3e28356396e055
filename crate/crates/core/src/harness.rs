//! Experiment grids: out-of-knowledge scalability and loss ablations.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{align_pairs, post_specialize, EmbeddingTable, PairedCorpus};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_similarity, Constraints, EvalReport, MissingPolicy, SimilarityDataset};
use crate::losses::LossToggles;
use crate::models::RetroGanModel;
use crate::rng::{streams, RngState};
use crate::tensor::cosine_similarity;
use crate::trainer::{train, TrainConfig, TrainOutcome, Validator};

pub const DEFAULT_OOK_FRACTIONS: [f64; 6] = [0.05, 0.10, 0.25, 0.50, 0.75, 1.00];

/// Batch size used when applying a generator to a whole table.
const INFER_BATCH: usize = 512;

/// Benchmark words in sampling order. A fraction `f` uses the first
/// `ceil(f·n)` of them, so smaller fractions sample subsets of larger ones.
pub fn ook_word_order(datasets: &[SimilarityDataset], seed: u64) -> Vec<String> {
    let union: BTreeSet<String> = datasets.iter().flat_map(|d| d.words()).collect();
    let mut order: Vec<String> = union.into_iter().collect();
    RngState::for_stream(seed, streams::OOK_SAMPLE).shuffle(&mut order);
    order
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("OOK fraction {f} must lie in (0, 1]")))
    }
}

/// Training pairs for one OOK fraction: constraints that mention no
/// unsampled benchmark word, reduced to the words present in both tables.
pub fn ook_training_corpus(
    x: &EmbeddingTable,
    y: &EmbeddingTable,
    constraints: &Constraints,
    order: &[String],
    fraction: f64,
) -> Result<PairedCorpus> {
    check_fraction(fraction)?;
    let take = ((fraction * order.len() as f64).ceil() as usize).min(order.len());
    let unsampled: BTreeSet<&str> = order[take..].iter().map(String::as_str).collect();
    let allowed = |w: &str| !unsampled.contains(w);
    let mut words: BTreeSet<&str> = BTreeSet::new();
    for (a, b) in &constraints.pairs {
        if allowed(a) && allowed(b) {
            words.insert(a);
            words.insert(b);
        }
    }
    for w in &constraints.singletons {
        if allowed(w) {
            words.insert(w);
        }
    }
    let words: Vec<&str> = words.into_iter().filter(|w| x.contains(w) && y.contains(w)).collect();
    if words.is_empty() {
        return Err(Error::Data(format!(
            "OOK fraction {fraction} leaves no training pairs"
        )));
    }
    Ok(align_pairs(&x.subset(&words), &y.subset(&words))?.0)
}

/// One cell of the OOK grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OokReport {
    pub fraction: f64,
    pub training_pairs: usize,
    pub report: EvalReport,
}

impl OokReport {
    pub const TSV_HEADER: &'static str = "fraction\ttraining_pairs\tdataset\tmode\trho\tevaluated\tskipped";

    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{}", self.fraction, self.training_pairs, self.report.to_tsv())
    }
}

/// For each fraction, trains a fresh model with `train_fn` on the sampled
/// constraint vocabulary, post-specializes all of `x` and scores every
/// dataset. Fractions run in parallel on the current rayon pool.
#[allow(clippy::too_many_arguments)]
pub fn ook_harness<T>(
    x: &EmbeddingTable,
    y: &EmbeddingTable,
    constraints: &Constraints,
    datasets: &[SimilarityDataset],
    fractions: &[f64],
    seed: u64,
    policy: MissingPolicy,
    train_fn: T,
) -> Result<Vec<OokReport>>
where
    T: Fn(f64, &PairedCorpus) -> Result<RetroGanModel> + Sync,
{
    fractions.iter().try_for_each(|&f| check_fraction(f))?;
    if datasets.is_empty() {
        return Err(Error::Config("OOK harness needs at least one dataset".into()));
    }
    let order = ook_word_order(datasets, seed);
    let grid: Vec<Vec<OokReport>> = fractions
        .par_iter()
        .map(|&f| {
            let corpus = ook_training_corpus(x, y, constraints, &order, f)?;
            let model = train_fn(f, &corpus)?;
            let specialized = post_specialize(x, &model, INFER_BATCH)?;
            datasets
                .iter()
                .map(|ds| {
                    Ok(OokReport {
                        fraction: f,
                        training_pairs: corpus.len(),
                        report: evaluate_similarity(&specialized, ds, policy)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(grid.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Baseline plus one run per loss with only that loss switched off.
    #[default]
    Toggle,
    /// Baseline plus runs that switch losses off cumulatively in
    /// [`ABLATION_ORDER`].
    OneByOne,
}

impl std::str::FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toggle" => Ok(Self::Toggle),
            "one_by_one" | "one-by-one" => Ok(Self::OneByOne),
            other => Err(Error::Config(format!("unknown ablation mode {other:?}"))),
        }
    }
}

/// Losses the ablation grid removes, in removal order.
pub const ABLATION_ORDER: [&str; 5] = ["one_way_mm", "cycle_mm", "cycle_dis", "id_loss", "cycle_loss"];

fn switch_off(t: &mut LossToggles, name: &str) {
    match name {
        "one_way_mm" => t.one_way_mm = false,
        "cycle_mm" => t.cycle_mm = false,
        "cycle_dis" => t.cycle_dis = false,
        "id_loss" => t.id_loss = false,
        "cycle_loss" => t.cycle_loss = false,
        _ => unreachable!("not an ablation term: {name}"),
    }
}

/// Labels and toggle sets of an ablation grid, baseline first.
pub fn ablation_plan(base: LossToggles, mode: AblationMode) -> Vec<(String, LossToggles)> {
    let mut plan = vec![("baseline".to_string(), base)];
    let mut cumulative = base;
    for (i, name) in ABLATION_ORDER.iter().enumerate() {
        match mode {
            AblationMode::Toggle => {
                let mut t = base;
                switch_off(&mut t, name);
                plan.push((format!("no_{name}"), t));
            }
            AblationMode::OneByOne => {
                switch_off(&mut cumulative, name);
                plan.push((format!("no_{}", ABLATION_ORDER[..=i].join("+")), cumulative));
            }
        }
    }
    plan
}

#[derive(Clone, Debug)]
pub struct AblationRun {
    pub label: String,
    pub toggles: LossToggles,
    pub outcome: TrainOutcome,
}

/// Trains every configuration of the ablation grid on `corpus`, in parallel.
pub fn ablation_harness(
    corpus: &PairedCorpus,
    base: &TrainConfig,
    mode: AblationMode,
    validator: Option<&dyn Validator>,
) -> Result<Vec<AblationRun>> {
    base.validate()?;
    ablation_plan(base.toggles, mode)
        .into_par_iter()
        .map(|(label, toggles)| {
            let config = TrainConfig {
                toggles,
                ..base.clone()
            };
            Ok(AblationRun {
                label,
                toggles,
                outcome: train(corpus, &config, validator)?,
            })
        })
        .collect()
}

/// Mean over `words` of the cosine between a word's rows in `a` and `b`.
pub fn mean_paired_cosine<S: AsRef<str>>(
    a: &EmbeddingTable,
    b: &EmbeddingTable,
    words: &[S],
) -> Result<f64> {
    if words.is_empty() {
        return Err(Error::Data("no words to compare".into()));
    }
    let mut sum = 0.0;
    for w in words {
        let w = w.as_ref();
        let (u, v) = a
            .get(w)
            .zip(b.get(w))
            .ok_or_else(|| Error::Vocabulary(w.to_string()))?;
        sum += cosine_similarity(u, v)?;
    }
    Ok(sum / words.len() as f64)
}

/// Mean cosine between `G(x)` and the gold `y` rows of `words`.
pub fn cosine_recovery<S: AsRef<str>>(
    model: &RetroGanModel,
    x: &EmbeddingTable,
    y: &EmbeddingTable,
    words: &[S],
) -> Result<f64> {
    let gx = post_specialize(&x.subset(words), model, INFER_BATCH)?;
    mean_paired_cosine(&gx, y, words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{identity_generator, build_model, ArchConfig};
    use crate::synthetic::{synthesize_paired_corpus, SyntheticSpec};

    fn corpus() -> crate::synthetic::SyntheticCorpus {
        corpus_with_pairs(200)
    }

    fn corpus_with_pairs(dataset_pairs: usize) -> crate::synthetic::SyntheticCorpus {
        synthesize_paired_corpus(&SyntheticSpec {
            vocab_size: 200,
            dim: 8,
            n_clusters: 10,
            dataset_pairs,
            seed: 4,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn identity_model(dim: usize) -> RetroGanModel {
        let arch = ArchConfig::toy(dim, 16);
        let mut m = build_model(&arch, &mut RngState::new(0)).unwrap();
        m.g = identity_generator(&arch).unwrap();
        m
    }

    #[test]
    fn ook_samples_are_nested_and_deterministic() {
        // a small benchmark, so low fractions still leave constraints
        let c = corpus_with_pairs(20);
        let order = ook_word_order(&c.datasets, 9);
        assert_eq!(order, ook_word_order(&c.datasets, 9));
        assert_ne!(order, ook_word_order(&c.datasets, 10));
        let mut prev: Option<PairedCorpus> = None;
        for f in [0.05, 0.25, 0.5, 1.0] {
            let tc = ook_training_corpus(&c.x, &c.y, &c.constraints, &order, f).unwrap();
            if let Some(p) = &prev {
                assert!(p.words.iter().all(|w| tc.words.contains(w)), "fraction {f} not a superset");
            }
            prev = Some(tc);
        }
    }

    #[test]
    fn full_fraction_keeps_every_constraint() {
        let c = corpus();
        let order = ook_word_order(&c.datasets, 1);
        let tc = ook_training_corpus(&c.x, &c.y, &c.constraints, &order, 1.0).unwrap();
        assert_eq!(tc, c.training_corpus());
    }

    #[test]
    fn bad_fractions_and_empty_training_sets() {
        let c = corpus();
        let order = ook_word_order(&c.datasets, 1);
        for f in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                ook_training_corpus(&c.x, &c.y, &c.constraints, &order, f),
                Err(Error::Config(_))
            ));
        }
        let only_benchmark = Constraints {
            pairs: vec![(order[0].clone(), order[1].clone())],
            singletons: vec![],
        };
        assert!(matches!(
            ook_training_corpus(&c.x, &c.y, &only_benchmark, &order, 0.001),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn ook_grid_has_one_row_per_fraction_and_dataset() {
        let c = corpus();
        let fractions = [0.25, 1.0];
        let rows = ook_harness(
            &c.x,
            &c.y,
            &c.constraints,
            &c.datasets,
            &fractions,
            3,
            MissingPolicy::Skip,
            |_, corpus: &PairedCorpus| Ok(identity_model(corpus.dim())),
        )
        .unwrap();
        assert_eq!(rows.len(), fractions.len() * c.datasets.len());
        // the identity generator reproduces the raw table's scores
        for r in &rows {
            let ds = c.dataset(&r.report.dataset).unwrap();
            let raw = evaluate_similarity(&c.x, ds, MissingPolicy::Skip).unwrap();
            assert!((r.report.rho - raw.rho).abs() < 1e-12);
        }
    }

    #[test]
    fn ablation_plans() {
        let toggle = ablation_plan(LossToggles::default(), AblationMode::Toggle);
        assert_eq!(toggle.len(), 6);
        assert_eq!(toggle[1].0, "no_one_way_mm");
        assert!(!toggle[1].1.one_way_mm && toggle[1].1.cycle_mm);
        assert!(toggle[5].1.one_way_mm && !toggle[5].1.cycle_loss);
        let cumulative = ablation_plan(LossToggles::default(), AblationMode::OneByOne);
        assert_eq!(cumulative.len(), 6);
        let last = cumulative[5].1;
        assert!(!last.one_way_mm && !last.cycle_mm && !last.cycle_dis && !last.id_loss && !last.cycle_loss);
        assert!(last.gan);
        assert!(!cumulative[2].1.cycle_mm && cumulative[2].1.cycle_dis);
    }

    #[test]
    fn toggle_runs_match_zero_weight_runs() {
        let c = corpus();
        let tc = c.training_corpus();
        let base = TrainConfig {
            batch_size: 8,
            total_batches: 6,
            g_lr: 1e-3,
            d_lr: 1e-3,
            arch: ArchConfig::toy(8, 16),
            ..TrainConfig::default()
        };
        let runs = ablation_harness(&tc, &base, AblationMode::Toggle, None).unwrap();
        assert_eq!(runs.len(), 6);
        let no_id = runs.iter().find(|r| r.label == "no_id_loss").unwrap();
        let mut zero = base.clone();
        zero.weights.gamma_id = 0.0;
        let reference = train(&tc, &zero, None).unwrap();
        assert_eq!(no_id.outcome.model, reference.model);
    }

    #[test]
    fn identity_recovery_equals_raw_cosine() {
        let c = corpus();
        let held = c.held_out_words();
        let m = identity_model(8);
        let rec = cosine_recovery(&m, &c.x, &c.y, &held).unwrap();
        let raw = mean_paired_cosine(&c.x, &c.y, &held).unwrap();
        assert!((rec - raw).abs() < 1e-12);
    }
}
