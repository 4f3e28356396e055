//! Word-similarity benchmarks: dataset and constraint loading, Spearman
//! correlation, Disjoint/Full splits and report serialization.
//!
//! The model score for a word pair is the cosine *similarity* of the two
//! vectors, so a positive ρ means the embedding agrees with human judgment.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::tensor::cosine_similarity;

/// Column layout of a tab-separated benchmark file (0-based columns).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFormat {
    pub word1_col: usize,
    pub word2_col: usize,
    pub score_col: usize,
    pub header_lines: usize,
}

impl DatasetFormat {
    /// `word1 word2 POS score ...` with one header line.
    pub const SIMLEX: DatasetFormat = DatasetFormat {
        word1_col: 0,
        word2_col: 1,
        score_col: 3,
        header_lines: 1,
    };
    /// `word1 word2 POS score relation`, no header.
    pub const SIMVERB: DatasetFormat = DatasetFormat {
        word1_col: 0,
        word2_col: 1,
        score_col: 3,
        header_lines: 0,
    };
    /// `word1 word2 score`, no header.
    pub const CARD660: DatasetFormat = DatasetFormat {
        word1_col: 0,
        word2_col: 1,
        score_col: 2,
        header_lines: 0,
    };
    /// Same columns as CARD-660; the layout written by this crate.
    pub const TSV: DatasetFormat = DatasetFormat::CARD660;

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "simlex" | "sl" => Ok(Self::SIMLEX),
            "simverb" | "sv" => Ok(Self::SIMVERB),
            "card660" | "card-660" | "c660" => Ok(Self::CARD660),
            "tsv" => Ok(Self::TSV),
            other => Err(Error::Config(format!(
                "unknown dataset format {other:?} (expected simlex, simverb, card660 or tsv)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub word1: String,
    pub word2: String,
    pub gold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityDataset {
    pub name: String,
    pub pairs: Vec<SimilarityPair>,
}

fn unordered_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl SimilarityDataset {
    /// Builds a dataset, keeping the first occurrence of each unordered pair.
    /// Returns the dataset and the number of duplicates dropped.
    pub fn new(name: impl Into<String>, pairs: Vec<SimilarityPair>) -> Result<(Self, usize)> {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(pairs.len());
        let mut duplicates = 0;
        for p in pairs {
            if !p.gold.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite gold score for ({}, {})",
                    p.word1, p.word2
                )));
            }
            if seen.insert(unordered_key(&p.word1, &p.word2)) {
                kept.push(p);
            } else {
                duplicates += 1;
            }
        }
        Ok((
            SimilarityDataset {
                name: name.into(),
                pairs: kept,
            },
            duplicates,
        ))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Every distinct word, sorted.
    pub fn words(&self) -> BTreeSet<String> {
        self.pairs
            .iter()
            .flat_map(|p| [p.word1.clone(), p.word2.clone()])
            .collect()
    }

    /// Parses a tab-separated benchmark file.
    pub fn parse<R: BufRead>(reader: R, format: DatasetFormat, name: &str) -> Result<Self> {
        let needed = format.word1_col.max(format.word2_col).max(format.score_col) + 1;
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            if i < format.header_lines || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
            if cols.len() < needed {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected at least {needed} tab-separated columns, found {}", cols.len()),
                });
            }
            let word = |c: usize| -> Result<String> {
                let w = cols[c].trim();
                if w.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("empty word in column {c}"),
                    });
                }
                Ok(w.to_string())
            };
            let gold = cols[format.score_col]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: format!("bad score {:?}", cols[format.score_col]),
                })?;
            pairs.push(SimilarityPair {
                word1: word(format.word1_col)?,
                word2: word(format.word2_col)?,
                gold,
            });
        }
        if pairs.is_empty() {
            return Err(Error::EmptyDataset(format!("{name} has no rows")));
        }
        let (ds, duplicates) = Self::new(name, pairs)?;
        if duplicates > 0 {
            log::warn!("{name}: {duplicates} duplicate pairs ignored");
        }
        Ok(ds)
    }

    /// Writes the three-column layout read by [`DatasetFormat::TSV`].
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.pairs {
            writeln!(out, "{}\t{}\t{}", p.word1, p.word2, p.gold)?;
        }
        out.flush()
    }
}

pub fn load_similarity_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<SimilarityDataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    load_named_dataset(path, format, &name)
}

pub fn load_named_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    name: &str,
) -> Result<SimilarityDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    SimilarityDataset::parse(BufReader::new(file), format, name)
}

/// Ranks starting at 1, ties receiving the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::shape(
            "spearman_rho",
            format!("{} vs {} values", xs.len(), ys.len()),
        ));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 pairs, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in correlation input".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a list has constant ranks".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// What to do with a pair whose words are not both in the table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop the pair and count it as skipped.
    #[default]
    Skip,
    /// Score the pair 0 and count it as evaluated.
    Zero,
}

impl FromStr for MissingPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(Self::Skip),
            "zero" => Ok(Self::Zero),
            other => Err(Error::Config(format!("unknown missing policy {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Pairs whose words are both absent from the constraints.
    Disjoint,
    /// Pairs whose words both appear in the constraints.
    Full,
    #[default]
    All,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Disjoint => "disjoint",
            EvalMode::Full => "full",
            EvalMode::All => "all",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disjoint" => Ok(Self::Disjoint),
            "full" => Ok(Self::Full),
            "all" => Ok(Self::All),
            other => Err(Error::Config(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

/// Result of scoring one dataset (or one split of it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub mode: EvalMode,
    pub rho: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

impl EvalReport {
    pub const TSV_HEADER: &'static str = "dataset\tmode\trho\tevaluated\tskipped";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{}\t{}",
            self.dataset, self.mode, self.rho, self.evaluated, self.skipped
        )
    }

    /// Parses one line produced by [`EvalReport::to_tsv`].
    pub fn from_tsv(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| Error::Parse {
            line: 1,
            msg: format!("report line {line:?}: {msg}"),
        };
        if cols.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        Ok(EvalReport {
            dataset: cols[0].to_string(),
            mode: cols[1].parse().map_err(|_| bad("bad mode"))?,
            rho: cols[2].parse().map_err(|_| bad("bad rho"))?,
            evaluated: cols[3].parse().map_err(|_| bad("bad evaluated count"))?,
            skipped: cols[4].parse().map_err(|_| bad("bad skipped count"))?,
        })
    }
}

/// Writes a header line followed by one line per report.
pub fn write_reports<W: Write>(reports: &[EvalReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", EvalReport::TSV_HEADER)?;
    for r in reports {
        writeln!(out, "{}", r.to_tsv())?;
    }
    out.flush()
}

/// Model scores and gold scores of the pairs that could be scored.
fn scored_pairs(
    table: &EmbeddingTable,
    dataset: &SimilarityDataset,
    policy: MissingPolicy,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let mut model = Vec::with_capacity(dataset.len());
    let mut gold = Vec::with_capacity(dataset.len());
    let mut skipped = 0;
    for p in &dataset.pairs {
        match (table.get(&p.word1), table.get(&p.word2)) {
            (Some(a), Some(b)) => {
                model.push(cosine_similarity(a, b)?);
                gold.push(p.gold);
            }
            _ => match policy {
                MissingPolicy::Skip => skipped += 1,
                MissingPolicy::Zero => {
                    model.push(0.0);
                    gold.push(p.gold);
                }
            },
        }
    }
    Ok((model, gold, skipped))
}

/// Spearman ρ between cosine similarities in `table` and gold scores.
pub fn evaluate_similarity(
    table: &EmbeddingTable,
    dataset: &SimilarityDataset,
    policy: MissingPolicy,
) -> Result<EvalReport> {
    if table.is_empty() {
        return Err(Error::EmptyTable("cannot evaluate an empty table".into()));
    }
    let (model, gold, skipped) = scored_pairs(table, dataset, policy)?;
    if model.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "{}: only {} scorable pairs",
            dataset.name,
            model.len()
        )));
    }
    Ok(EvalReport {
        dataset: dataset.name.clone(),
        mode: EvalMode::All,
        rho: spearman_rho(&model, &gold)?,
        evaluated: model.len(),
        skipped,
    })
}

/// Retrofitting constraints: word pairs plus the vocabulary they mention.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Constraints {
    pub pairs: Vec<(String, String)>,
    /// Words listed alone on a line; they count as constrained.
    pub singletons: Vec<String>,
}

/// The set of words mentioned by any constraint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintVocab {
    pub words: BTreeSet<String>,
}

impl ConstraintVocab {
    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl FromIterator<String> for ConstraintVocab {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        ConstraintVocab {
            words: iter.into_iter().collect(),
        }
    }
}

impl Constraints {
    pub fn vocab(&self) -> ConstraintVocab {
        self.pairs
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .chain(self.singletons.iter().cloned())
            .collect()
    }

    /// One constraint per line: two whitespace-separated words, or a single
    /// word. Blank lines and lines starting with `#` are ignored.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut out = Constraints::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let words: Vec<&str> = t.split_whitespace().collect();
            match words.as_slice() {
                [w] => out.singletons.push(w.to_string()),
                [a, b] => out.pairs.push((a.to_string(), b.to_string())),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected one or two words, found {}", words.len()),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (a, b) in &self.pairs {
            writeln!(out, "{a} {b}")?;
        }
        for w in &self.singletons {
            writeln!(out, "{w}")?;
        }
        out.flush()
    }
}

pub fn load_constraints(path: impl AsRef<Path>) -> Result<Constraints> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Constraints::parse(BufReader::new(file))
}

/// The Disjoint and Full parts of a dataset, plus the count of mixed pairs
/// (exactly one word constrained) that belong to neither.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub disjoint: SimilarityDataset,
    pub full: SimilarityDataset,
    pub mixed: usize,
}

pub fn split_disjoint_full(dataset: &SimilarityDataset, vocab: &ConstraintVocab) -> Split {
    let mut disjoint = Vec::new();
    let mut full = Vec::new();
    let mut mixed = 0;
    for p in &dataset.pairs {
        match (vocab.contains(&p.word1), vocab.contains(&p.word2)) {
            (true, true) => full.push(p.clone()),
            (false, false) => disjoint.push(p.clone()),
            _ => mixed += 1,
        }
    }
    Split {
        disjoint: SimilarityDataset {
            name: dataset.name.clone(),
            pairs: disjoint,
        },
        full: SimilarityDataset {
            name: dataset.name.clone(),
            pairs: full,
        },
        mixed,
    }
}

/// Evaluates one split of `dataset`; `All` ignores the constraints.
pub fn evaluate_split(
    table: &EmbeddingTable,
    dataset: &SimilarityDataset,
    vocab: &ConstraintVocab,
    mode: EvalMode,
    policy: MissingPolicy,
) -> Result<EvalReport> {
    let part = match mode {
        EvalMode::All => dataset.clone(),
        EvalMode::Disjoint => split_disjoint_full(dataset, vocab).disjoint,
        EvalMode::Full => split_disjoint_full(dataset, vocab).full,
    };
    Ok(EvalReport {
        mode,
        ..evaluate_similarity(table, &part, policy)?
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use crate::tensor::Matrix;
    use proptest::prelude::*;

    fn pair(a: &str, b: &str, g: f64) -> SimilarityPair {
        SimilarityPair {
            word1: a.into(),
            word2: b.into(),
            gold: g,
        }
    }

    #[test]
    fn parses_toy_file() {
        let text = "a\tb\t5.0\nc\td\t1.5\ne\tf\t0\n";
        let ds = SimilarityDataset::parse(text.as_bytes(), DatasetFormat::TSV, "toy").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.pairs[1], pair("c", "d", 1.5));
    }

    #[test]
    fn presets_read_published_layouts() {
        let simlex = "word1\tword2\tPOS\tSimLex999\tconc(w1)\nold\tnew\tA\t1.58\t2.72\n";
        let ds = SimilarityDataset::parse(simlex.as_bytes(), DatasetFormat::SIMLEX, "SL").unwrap();
        assert_eq!(ds.pairs, vec![pair("old", "new", 1.58)]);
        let simverb = "take\tremove\tV\t6.81\tSYNONYMS\nwalk\trun\tV\t4.0\tCOHYPONYMS\n";
        let ds = SimilarityDataset::parse(simverb.as_bytes(), DatasetFormat::SIMVERB, "SV").unwrap();
        assert_eq!(ds.pairs[0], pair("take", "remove", 6.81));
        assert!(DatasetFormat::preset("card660").is_ok());
        assert!(DatasetFormat::preset("nope").is_err());
    }

    #[test]
    fn header_only_and_short_rows() {
        let r = SimilarityDataset::parse("w1\tw2\tpos\tscore\n".as_bytes(), DatasetFormat::SIMLEX, "x");
        assert!(matches!(r, Err(Error::EmptyDataset(_))));
        match SimilarityDataset::parse("a\tb\t1\nc\td\n".as_bytes(), DatasetFormat::TSV, "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            SimilarityDataset::parse("a\tb\tNaN\n".as_bytes(), DatasetFormat::TSV, "x"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn duplicate_unordered_pairs_dropped() {
        let text = "a\tb\t1\nb\ta\t2\na\tc\t3\n";
        let ds = SimilarityDataset::parse(text.as_bytes(), DatasetFormat::TSV, "d").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.pairs[0].gold, 1.0);
    }

    #[test]
    fn spearman_basic_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman_rho(&xs, &xs).unwrap() - 1.0).abs() < 1e-15);
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman_rho(&xs, &rev).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(spearman_rho(&[1.0], &[1.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(
            spearman_rho(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(spearman_rho(&[1.0, 2.0], &[1.0]).is_err());
    }

    /// Brute-force oracle: each value's rank is 1 + (#smaller) + (#equal − 1)/2,
    /// then the textbook Pearson formula.
    fn oracle_rho(xs: &[f64], ys: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|&a| {
                    let less = v.iter().filter(|&&b| b < a).count() as f64;
                    let eq = v.iter().filter(|&&b| b == a).count() as f64;
                    1.0 + less + (eq - 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(xs), rank(ys));
        let n = rx.len() as f64;
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
        let sxx: f64 = rx.iter().map(|a| a * a).sum();
        let syy: f64 = ry.iter().map(|a| a * a).sum();
        let num = n * sxy - sum(&rx) * sum(&ry);
        let den = ((n * sxx - sum(&rx).powi(2)) * (n * syy - sum(&ry).powi(2))).sqrt();
        num / den
    }

    #[test]
    fn spearman_matches_oracle_with_ties() {
        let xs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0];
        let ys = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0, 2.0, 8.0];
        let got = spearman_rho(&xs, &ys).unwrap();
        assert!((got - oracle_rho(&xs, &ys)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn spearman_oracle_random(v in prop::collection::vec((0u8..6, 0u8..6), 10)) {
            let xs: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let ys: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            if let Ok(r) = spearman_rho(&xs, &ys) {
                prop_assert!((r - oracle_rho(&xs, &ys)).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn spearman_monotone_invariance(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30)) {
            let xs: Vec<f64> = v.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = v.iter().map(|p| p.1).collect();
            if let Ok(r) = spearman_rho(&xs, &ys) {
                let tx: Vec<f64> = xs.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
                let ty: Vec<f64> = ys.iter().map(|y| y * y * y - 2.0).collect();
                prop_assert!((spearman_rho(&tx, &ty).unwrap() - r).abs() < 1e-12);
            }
        }
    }

    fn table(words: &[&str], rows: Vec<Vec<f64>>) -> EmbeddingTable {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        EmbeddingTable::new(
            words.iter().map(|s| s.to_string()).collect(),
            Matrix::from_rows(&refs).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_ordering_gives_one() {
        let t = table(
            &["a", "b", "c", "d"],
            vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![1.0, 1.0], vec![0.0, 1.0]],
        );
        let (ds, _) = SimilarityDataset::new(
            "p",
            vec![pair("a", "b", 9.0), pair("a", "c", 5.0), pair("a", "d", 1.0)],
        )
        .unwrap();
        let r = evaluate_similarity(&t, &ds, MissingPolicy::Skip).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-15);
        assert_eq!((r.evaluated, r.skipped), (3, 0));
    }

    #[test]
    fn missing_words_policies() {
        let t = table(&["a", "b"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (ds, _) = SimilarityDataset::new("m", vec![pair("x", "y", 1.0), pair("a", "z", 2.0)]).unwrap();
        assert!(matches!(
            evaluate_similarity(&t, &ds, MissingPolicy::Skip),
            Err(Error::UndefinedCorrelation(_))
        ));
        let (ds, _) = SimilarityDataset::new(
            "m",
            vec![pair("a", "b", 1.0), pair("a", "a", 3.0), pair("a", "q", 2.0)],
        )
        .unwrap();
        let skip = evaluate_similarity(&t, &ds, MissingPolicy::Skip).unwrap();
        assert_eq!((skip.evaluated, skip.skipped), (2, 1));
        let zero = evaluate_similarity(&t, &ds, MissingPolicy::Zero).unwrap();
        assert_eq!((zero.evaluated, zero.skipped), (3, 0));
    }

    #[test]
    fn pipeline_matches_composed_oracle() {
        let mut rng = RngState::new(50);
        let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let t = EmbeddingTable::new(words.clone(), rng.gaussian_matrix(30, 6, 0.0, 1.0)).unwrap();
        let mut pairs = Vec::new();
        while pairs.len() < 50 {
            let (a, b) = (rng.below(30), rng.below(30));
            if a != b {
                pairs.push(pair(&words[a], &words[b], rng.uniform() * 10.0));
            }
        }
        let (ds, _) = SimilarityDataset::new("syn", pairs).unwrap();
        let report = evaluate_similarity(&t, &ds, MissingPolicy::Skip).unwrap();
        let model: Vec<f64> = ds
            .pairs
            .iter()
            .map(|p| {
                let (u, v) = (t.get(&p.word1).unwrap(), t.get(&p.word2).unwrap());
                let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                let n = |w: &[f64]| w.iter().map(|a| a * a).sum::<f64>().sqrt();
                dot / (n(u) * n(v))
            })
            .collect();
        let gold: Vec<f64> = ds.pairs.iter().map(|p| p.gold).collect();
        assert!((report.rho - oracle_rho(&model, &gold)).abs() < 1e-12);
    }

    #[test]
    fn restricting_table_to_dataset_words_changes_nothing() {
        let mut rng = RngState::new(3);
        let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let t = EmbeddingTable::new(words.clone(), rng.gaussian_matrix(40, 5, 0.0, 1.0)).unwrap();
        let pairs: Vec<SimilarityPair> = (0..20)
            .map(|i| pair(&words[i], &format!("oov{i}"), i as f64))
            .chain((0..20).map(|i| pair(&words[i], &words[i + 20], (i * 7 % 11) as f64)))
            .collect();
        let (ds, _) = SimilarityDataset::new("r", pairs).unwrap();
        let dw: Vec<String> = ds.words().into_iter().collect();
        let sub = t.subset(&dw);
        assert_eq!(
            evaluate_similarity(&t, &ds, MissingPolicy::Skip).unwrap(),
            evaluate_similarity(&sub, &ds, MissingPolicy::Skip).unwrap()
        );
    }

    #[test]
    fn split_cases() {
        let (ds, _) = SimilarityDataset::new(
            "s",
            vec![pair("a", "b", 1.0), pair("c", "d", 2.0), pair("a", "c", 3.0), pair("x", "y", 4.0)],
        )
        .unwrap();
        let none = split_disjoint_full(&ds, &ConstraintVocab::default());
        assert_eq!(none.disjoint.len(), 4);
        assert_eq!((none.full.len(), none.mixed), (0, 0));
        let all: ConstraintVocab = ds.words().into_iter().collect();
        let s = split_disjoint_full(&ds, &all);
        assert_eq!((s.full.len(), s.disjoint.len(), s.mixed), (4, 0, 0));
        let some: ConstraintVocab = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let s = split_disjoint_full(&ds, &some);
        assert_eq!(s.full.pairs.iter().map(|p| p.gold).collect::<Vec<_>>(), vec![1.0, 3.0]);
        assert_eq!(s.disjoint.pairs.iter().map(|p| p.gold).collect::<Vec<_>>(), vec![4.0]);
        assert_eq!(s.mixed, 1);
    }

    proptest! {
        #[test]
        fn split_partitions_dataset(
            raw in prop::collection::vec((0usize..12, 0usize..12), 1..40),
            mask in prop::collection::vec(any::<bool>(), 12),
        ) {
            let pairs: Vec<SimilarityPair> =
                raw.iter().map(|&(a, b)| pair(&format!("w{a}"), &format!("w{b}"), 1.0)).collect();
            let (ds, _) = SimilarityDataset::new("p", pairs).unwrap();
            let vocab: ConstraintVocab = (0..12).filter(|&i| mask[i]).map(|i| format!("w{i}")).collect();
            let s = split_disjoint_full(&ds, &vocab);
            prop_assert_eq!(s.full.len() + s.disjoint.len() + s.mixed, ds.len());
            for p in &s.full.pairs {
                prop_assert!(vocab.contains(&p.word1) && vocab.contains(&p.word2));
            }
            for p in &s.disjoint.pairs {
                prop_assert!(!vocab.contains(&p.word1) && !vocab.contains(&p.word2));
            }
        }
    }

    #[test]
    fn report_tsv_round_trip() {
        let r = EvalReport {
            dataset: "SL".into(),
            mode: EvalMode::Disjoint,
            rho: 0.5,
            evaluated: 10,
            skipped: 2,
        };
        let line = r.to_tsv();
        assert_eq!(line, "SL\tdisjoint\t0.500000\t10\t2");
        assert_eq!(EvalReport::from_tsv(&line).unwrap(), r);
        let mut buf = Vec::new();
        write_reports(&[r.clone(), r], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn constraints_parse() {
        let c = Constraints::parse("# syn\nhappy glad\n\nlonely\nfast quick\n".as_bytes()).unwrap();
        assert_eq!(c.pairs.len(), 2);
        assert_eq!(c.singletons, vec!["lonely".to_string()]);
        assert_eq!(c.vocab().len(), 5);
        assert!(matches!(Constraints::parse("a b c\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
