//! Desk-scale stand-in for a distributional space and its retrofitted twin.
//!
//! Words are grouped into clusters around random unit centroids. The
//! distributional vector of a word is its centroid plus isotropic noise; the
//! specialized vector pulls that point toward the cluster's target direction
//! by `collapse_strength` and renormalizes. Some clusters are paired as
//! antonyms: their targets are pushed away from each other before the pull.
//! Constraints only mention words outside the held-out set, so held-out words
//! are out of knowledge by construction.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingTable, PairedCorpus};
use crate::error::{Error, Result};
use crate::evaluation::{ConstraintVocab, Constraints, SimilarityDataset, SimilarityPair};
use crate::rng::{streams, RngState};
use crate::tensor::{dot, norm, Matrix};

/// Sizes and strengths of a synthetic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub vocab_size: usize,
    pub dim: usize,
    pub n_clusters: usize,
    /// Weight of the cluster target in the specialized vector, in `[0, 1]`.
    pub collapse_strength: f64,
    /// Fraction of clusters that are paired up as antonyms, in `[0, 1]`.
    pub antonym_fraction: f64,
    /// Fraction of words kept out of every constraint, in `[0, 1)`.
    pub holdout_fraction: f64,
    /// Norm of the noise added to each centroid before normalizing.
    pub spread: f64,
    /// Pairs drawn for each benchmark dataset.
    pub dataset_pairs: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            vocab_size: 2000,
            dim: 32,
            n_clusters: 50,
            collapse_strength: 0.5,
            antonym_fraction: 0.2,
            holdout_fraction: 0.2,
            spread: 1.0,
            dataset_pairs: 1000,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_clusters < 1 || self.dim < 2 {
            return bad("need at least one cluster and dim ≥ 2".into());
        }
        if self.vocab_size < 2 * self.n_clusters {
            return bad(format!(
                "vocab_size {} must be at least twice n_clusters {}",
                self.vocab_size, self.n_clusters
            ));
        }
        if !(0.0..=1.0).contains(&self.collapse_strength) {
            return bad("collapse_strength must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.antonym_fraction) {
            return bad("antonym_fraction must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)".into());
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return bad("spread must be a non-negative number".into());
        }
        if self.dataset_pairs < 2 {
            return bad("dataset_pairs must be at least 2".into());
        }
        Ok(())
    }
}

/// The generating process, kept for oracle checks.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub cluster_of: Vec<usize>,
    /// Unit centroid per cluster (rows).
    pub centroids: Matrix,
    /// Unit direction each cluster collapses toward (rows).
    pub targets: Matrix,
    /// `antonym_of[c]` is the cluster paired with `c`, if any.
    pub antonym_of: Vec<Option<usize>>,
    pub held_out: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub x: EmbeddingTable,
    pub y: EmbeddingTable,
    pub constraints: Constraints,
    /// Benchmarks named `all`, `heldout` (both words held out) and `known`
    /// (both words constrained).
    pub datasets: Vec<SimilarityDataset>,
    pub truth: GroundTruth,
}

impl SyntheticCorpus {
    pub fn vocab(&self) -> ConstraintVocab {
        self.constraints.vocab()
    }

    pub fn dataset(&self, name: &str) -> Option<&SimilarityDataset> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn held_out_words(&self) -> Vec<String> {
        self.words_where(true)
    }

    pub fn known_words(&self) -> Vec<String> {
        self.words_where(false)
    }

    fn words_where(&self, held: bool) -> Vec<String> {
        self.x
            .words()
            .iter()
            .zip(&self.truth.held_out)
            .filter(|(_, &h)| h == held)
            .map(|(w, _)| w.clone())
            .collect()
    }

    /// Paired rows of every word the constraints mention.
    pub fn training_corpus(&self) -> PairedCorpus {
        let vocab = self.vocab();
        PairedCorpus {
            words: self.x.words().to_vec(),
            x: self.x.vectors().clone(),
            y: self.y.vectors().clone(),
        }
        .filter(|w| vocab.contains(w))
    }
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
}

fn random_unit(rng: &mut RngState, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        if norm(&v) > 1e-6 {
            normalize(&mut v);
            return v;
        }
    }
}

pub fn word_name(i: usize) -> String {
    format!("w{i:05}")
}

pub fn synthesize_paired_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let (n, d, k) = (spec.vocab_size, spec.dim, spec.n_clusters);
    let mut rng = RngState::for_stream(spec.seed, streams::SYNTHETIC);

    let centroids: Vec<Vec<f64>> = (0..k).map(|_| random_unit(&mut rng, d)).collect();

    let mut order: Vec<usize> = (0..k).collect();
    rng.shuffle(&mut order);
    let n_antonym_pairs = ((spec.antonym_fraction * k as f64) / 2.0).floor() as usize;
    let mut antonym_of = vec![None; k];
    for p in 0..n_antonym_pairs {
        let (a, b) = (order[2 * p], order[2 * p + 1]);
        antonym_of[a] = Some(b);
        antonym_of[b] = Some(a);
    }
    let targets: Vec<Vec<f64>> = (0..k)
        .map(|c| match antonym_of[c] {
            Some(o) => {
                let mut t: Vec<f64> = centroids[c]
                    .iter()
                    .zip(&centroids[o])
                    .map(|(a, b)| a - b)
                    .collect();
                if norm(&t) < 1e-9 {
                    return centroids[c].clone();
                }
                normalize(&mut t);
                t
            }
            None => centroids[c].clone(),
        })
        .collect();

    // round-robin assignment gives every cluster at least two words
    let cluster_of: Vec<usize> = (0..n).map(|i| i % k).collect();
    let alpha = spec.collapse_strength;
    let noise_scale = spec.spread / (d as f64).sqrt();
    let mut x = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, d);
    for (i, &c) in cluster_of.iter().enumerate() {
        // Pulling toward `t` can only raise within-cluster cosines when every
        // member has a non-negative dot with `t`; resample until it does.
        let xi = loop {
            let mut v: Vec<f64> = centroids[c]
                .iter()
                .map(|a| a + noise_scale * rng.gaussian())
                .collect();
            if norm(&v) < 1e-9 {
                continue;
            }
            normalize(&mut v);
            if dot(&v, &targets[c]) >= 0.0 && dot(&v, &centroids[c]) >= 0.0 {
                break v;
            }
        };
        let mut yi: Vec<f64> = xi
            .iter()
            .zip(&targets[c])
            .map(|(a, t)| (1.0 - alpha) * a + alpha * t)
            .collect();
        if alpha > 0.0 {
            normalize(&mut yi);
        }
        x.row_mut(i).copy_from_slice(&xi);
        y.row_mut(i).copy_from_slice(&yi);
    }

    let mut word_order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut word_order);
    let n_held = (spec.holdout_fraction * n as f64).round() as usize;
    let mut held_out = vec![false; n];
    for &i in &word_order[..n_held] {
        held_out[i] = true;
    }

    let words: Vec<String> = (0..n).map(word_name).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in (0..n).filter(|&i| !held_out[i]) {
        members[cluster_of[i]].push(i);
    }
    let mut constraints = Constraints::default();
    for c in 0..k {
        let m = &members[c];
        // a chain links every known member of the cluster
        for w in m.windows(2) {
            constraints.pairs.push((words[w[0]].clone(), words[w[1]].clone()));
        }
        if m.len() == 1 {
            constraints.singletons.push(words[m[0]].clone());
        }
        if let Some(o) = antonym_of[c] {
            if c < o {
                if let (Some(&a), Some(&b)) = (m.first(), members[o].first()) {
                    constraints.pairs.push((words[a].clone(), words[b].clone()));
                }
            }
        }
    }

    let gold = |a: usize, b: usize| -> f64 {
        let (ca, cb) = (cluster_of[a], cluster_of[b]);
        if ca == cb {
            10.0
        } else if antonym_of[ca] == Some(cb) {
            0.0
        } else {
            5.0 * (1.0 + dot(&centroids[ca], &centroids[cb]))
        }
    };
    let pools: [(&str, Vec<usize>); 3] = [
        ("all", (0..n).collect()),
        ("heldout", (0..n).filter(|&i| held_out[i]).collect()),
        ("known", (0..n).filter(|&i| !held_out[i]).collect()),
    ];
    let mut datasets = Vec::new();
    for (name, pool) in pools {
        if pool.len() < 2 {
            continue;
        }
        let pairs = sample_pairs(&pool, &cluster_of, spec.dataset_pairs, &mut rng)
            .into_iter()
            .map(|(a, b)| SimilarityPair {
                word1: words[a].clone(),
                word2: words[b].clone(),
                gold: gold(a, b),
            })
            .collect();
        datasets.push(SimilarityDataset::new(name, pairs)?.0);
    }

    let to_rows = |v: &[Vec<f64>]| Matrix::from_rows(v);
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        x: EmbeddingTable::new(words.clone(), x)?,
        y: EmbeddingTable::new(words, y)?,
        constraints,
        datasets,
        truth: GroundTruth {
            cluster_of,
            centroids: to_rows(&centroids)?,
            targets: to_rows(&targets)?,
            antonym_of,
            held_out,
        },
    })
}

/// Distinct unordered pairs from `pool`, about half of them within a cluster.
fn sample_pairs(
    pool: &[usize],
    cluster_of: &[usize],
    wanted: usize,
    rng: &mut RngState,
) -> Vec<(usize, usize)> {
    let max_pairs = pool.len() * (pool.len() - 1) / 2;
    let wanted = wanted.min(max_pairs);
    let mut by_cluster: std::collections::HashMap<usize, Vec<usize>> = Default::default();
    for &i in pool {
        by_cluster.entry(cluster_of[i]).or_default().push(i);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(wanted);
    let mut attempts = 0;
    while out.len() < wanted && attempts < 50 * wanted + 1000 {
        attempts += 1;
        let a = pool[rng.below(pool.len())];
        let b = if rng.uniform() < 0.5 {
            let mates = &by_cluster[&cluster_of[a]];
            mates[rng.below(mates.len())]
        } else {
            pool[rng.below(pool.len())]
        };
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        out.push((a, b));
    }
    out
}
