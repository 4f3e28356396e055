//! Word-embedding tables: the text format, normalization, pairing of the
//! distributional (X) and retrofitted (Y) spaces, post-specialization and
//! neighbor queries.
//!
//! # Text format
//!
//! An optional header line `"<count> <dim>"`, then one line per word: the
//! token, then `dim` decimal numbers, separated by ASCII whitespace. The
//! token ends at the first whitespace byte and may otherwise contain any
//! bytes that form valid UTF-8. A first line made of exactly two unsigned
//! integers is always read as a header. Blank lines are ignored.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::RetroGanModel;
use crate::tensor::{cosine_similarity, dot, norm, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
    normalized: bool,
}

/// Non-fatal observations made while reading a table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Rows dropped because their word had already appeared.
    pub duplicates: usize,
    /// Word count announced by the header, if there was one.
    pub header_count: Option<usize>,
}

impl EmbeddingTable {
    pub fn new(words: Vec<String>, vectors: Matrix) -> Result<Self> {
        if words.len() != vectors.rows() {
            return Err(Error::shape(
                "EmbeddingTable::new",
                format!("{} words, {} vectors", words.len(), vectors.rows()),
            ));
        }
        if !vectors.is_finite() {
            return Err(Error::Data("embedding contains a non-finite value".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate word {w:?}")));
            }
        }
        Ok(EmbeddingTable {
            words,
            index,
            vectors,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.position(word).map(|i| self.vectors.row(i))
    }

    /// The rows for `words`, in the given order; words not in the table are
    /// skipped.
    pub fn subset<S: AsRef<str>>(&self, words: &[S]) -> EmbeddingTable {
        let mut kept = Vec::new();
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for w in words {
            let w = w.as_ref();
            if let Some(i) = self.position(w) {
                if seen.insert(i) {
                    kept.push(w.to_string());
                    rows.push(i);
                }
            }
        }
        let mut out = EmbeddingTable::new(kept, self.vectors.select_rows(&rows))
            .expect("subset of a valid table is valid");
        out.normalized = self.normalized;
        out
    }

    /// Parses the text format from any reader.
    pub fn parse<R: BufRead>(
        mut reader: R,
        expected_dim: Option<usize>,
    ) -> Result<(EmbeddingTable, LoadReport)> {
        let mut report = LoadReport::default();
        let mut words: Vec<String> = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        let mut dim = expected_dim;
        let mut line = Vec::new();
        let mut line_no = 0usize;
        let mut first_content = true;
        loop {
            line.clear();
            let n = reader
                .read_until(b'\n', &mut line)
                .map_err(|e| Error::Parse {
                    line: line_no + 1,
                    msg: e.to_string(),
                })?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let fields: Vec<&[u8]> = line
                .split(|b| b.is_ascii_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.is_empty() {
                continue;
            }
            if first_content {
                first_content = false;
                if let Some((count, header_dim)) = parse_header(&fields) {
                    if let Some(d) = dim {
                        if d != header_dim {
                            return Err(Error::Dim {
                                expected: d,
                                found: header_dim,
                            });
                        }
                    }
                    if header_dim == 0 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "header declares dimension 0".into(),
                        });
                    }
                    dim = Some(header_dim);
                    report.header_count = Some(count);
                    continue;
                }
            }
            let token = std::str::from_utf8(fields[0]).map_err(|_| Error::Parse {
                line: line_no,
                msg: "token is not valid UTF-8".into(),
            })?;
            let found = fields.len() - 1;
            let d = *dim.get_or_insert(found);
            if found != d {
                return Err(if d == 0 || found == 0 {
                    Error::Parse {
                        line: line_no,
                        msg: format!("token {token:?} has no vector"),
                    }
                } else {
                    Error::Dim { expected: d, found }
                });
            }
            if d == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("token {token:?} has no vector"),
                });
            }
            if seen.contains(token) {
                report.duplicates += 1;
                continue;
            }
            let start = data.len();
            for f in &fields[1..] {
                let v = std::str::from_utf8(f)
                    .ok()
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite());
                match v {
                    Some(v) => data.push(v),
                    None => {
                        data.truncate(start);
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!(
                                "bad number {:?} for token {token:?}",
                                String::from_utf8_lossy(f)
                            ),
                        });
                    }
                }
            }
            seen.insert(token.to_string());
            words.push(token.to_string());
        }
        if words.is_empty() {
            return Err(Error::EmptyTable("no embedding rows".into()));
        }
        let d = dim.unwrap_or(0);
        let vectors = Matrix::from_vec(words.len(), d, data)?;
        Ok((EmbeddingTable::new(words, vectors)?, report))
    }

    pub fn parse_bytes(bytes: &[u8], expected_dim: Option<usize>) -> Result<(EmbeddingTable, LoadReport)> {
        Self::parse(bytes, expected_dim)
    }

    /// Writes the text format: header, then one row per word with every
    /// value printed to 17 significant digits.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim())?;
        for (w, row) in self.words.iter().zip(self.vectors.iter_rows()) {
            out.write_all(w.as_bytes())?;
            for v in row {
                write!(out, " {v:.16e}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

fn parse_header(fields: &[&[u8]]) -> Option<(usize, usize)> {
    if fields.len() != 2 {
        return None;
    }
    let num = |f: &[u8]| -> Option<usize> {
        if f.iter().all(u8::is_ascii_digit) {
            std::str::from_utf8(f).ok()?.parse().ok()
        } else {
            None
        }
    };
    Some((num(fields[0])?, num(fields[1])?))
}

pub fn load_table(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<(EmbeddingTable, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (table, report) = EmbeddingTable::parse(BufReader::new(file), expected_dim)?;
    if report.duplicates > 0 {
        log::warn!("{}: {} duplicate words ignored", path.display(), report.duplicates);
    }
    Ok((table, report))
}

pub fn save_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    table
        .write(BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

/// Row-L2-normalized copy of the table. No other transformation is applied.
pub fn preprocess(table: &EmbeddingTable) -> Result<EmbeddingTable> {
    let vectors = table.vectors.row_l2_normalize().map_err(|e| match e {
        Error::DegenerateVector(row) => {
            let idx: usize = row.trim_start_matches("row ").parse().unwrap_or(0);
            Error::DegenerateVector(format!("word {:?}", table.words[idx]))
        }
        other => other,
    })?;
    Ok(EmbeddingTable {
        vectors,
        normalized: true,
        ..table.clone()
    })
}

/// Row-aligned `(x_i, y_i)` pairs over a shared, sorted vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedCorpus {
    pub words: Vec<String>,
    pub x: Matrix,
    pub y: Matrix,
}

impl PairedCorpus {
    pub fn new(words: Vec<String>, x: Matrix, y: Matrix) -> Result<Self> {
        if x.shape() != y.shape() || x.rows() != words.len() {
            return Err(Error::shape(
                "PairedCorpus::new",
                format!(
                    "{} words, x {}x{}, y {}x{}",
                    words.len(),
                    x.rows(),
                    x.cols(),
                    y.rows(),
                    y.cols()
                ),
            ));
        }
        Ok(PairedCorpus { words, x, y })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// The pairs whose word satisfies `keep`, preserving order.
    pub fn filter(&self, keep: impl Fn(&str) -> bool) -> PairedCorpus {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.words[i])).collect();
        PairedCorpus {
            words: idx.iter().map(|&i| self.words[i].clone()).collect(),
            x: self.x.select_rows(&idx),
            y: self.y.select_rows(&idx),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AlignReport {
    pub paired: usize,
    pub dropped_x: usize,
    pub dropped_y: usize,
}

/// Pairs the two tables over their vocabulary intersection, sorted
/// lexicographically.
pub fn align_pairs(x: &EmbeddingTable, y: &EmbeddingTable) -> Result<(PairedCorpus, AlignReport)> {
    if x.dim() != y.dim() {
        return Err(Error::Dim {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let mut shared: Vec<&String> = x.words.iter().filter(|w| y.contains(w)).collect();
    if shared.is_empty() {
        return Err(Error::Alignment("the two vocabularies do not intersect".into()));
    }
    shared.sort_unstable();
    let xi: Vec<usize> = shared.iter().map(|w| x.index[*w]).collect();
    let yi: Vec<usize> = shared.iter().map(|w| y.index[*w]).collect();
    let report = AlignReport {
        paired: shared.len(),
        dropped_x: x.len() - shared.len(),
        dropped_y: y.len() - shared.len(),
    };
    let corpus = PairedCorpus {
        words: shared.into_iter().cloned().collect(),
        x: x.vectors.select_rows(&xi),
        y: y.vectors.select_rows(&yi),
    };
    Ok((corpus, report))
}

/// Applies the trained `G: X → Y` to every vector, in evaluation mode.
pub fn post_specialize(
    table: &EmbeddingTable,
    model: &RetroGanModel,
    batch_size: usize,
) -> Result<EmbeddingTable> {
    if table.dim() != model.dim() {
        return Err(Error::Dim {
            expected: model.dim(),
            found: table.dim(),
        });
    }
    let batch_size = batch_size.max(1);
    let n = table.len();
    let starts: Vec<usize> = (0..n).step_by(batch_size).collect();
    let parts: Vec<Matrix> = starts
        .par_iter()
        .map(|&s| {
            let chunk = table.vectors.slice_rows(s, (s + batch_size).min(n));
            model.g.infer(&chunk)
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(n * table.dim());
    for p in parts {
        data.extend_from_slice(p.as_slice());
    }
    let vectors = Matrix::from_vec(n, table.dim(), data)?;
    if !vectors.is_finite() {
        return Err(Error::Data("generator produced non-finite values".into()));
    }
    EmbeddingTable::new(table.words.clone(), vectors)
}

/// The `k` most cosine-similar words to `word`, the word itself included.
/// Ties keep vocabulary order; `k` is capped at the vocabulary size.
pub fn nearest_neighbors(table: &EmbeddingTable, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let qi = table
        .position(word)
        .ok_or_else(|| Error::Vocabulary(word.to_string()))?;
    let q = table.vectors.row(qi);
    let qn = norm(q);
    if qn == 0.0 {
        return Err(Error::DegenerateVector(format!("word {word:?}")));
    }
    let mut scored: Vec<(usize, f64)> = table
        .vectors
        .iter_rows()
        .enumerate()
        .map(|(i, r)| {
            let rn = norm(r);
            let c = if i == qi {
                1.0
            } else if rn == 0.0 {
                0.0
            } else {
                (dot(q, r) / (qn * rn)).clamp(-1.0, 1.0)
            };
            (i, c)
        })
        .collect();
    // stable sort keeps vocabulary order among equal scores
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, c)| (table.words[i].clone(), c))
        .collect())
}

/// Cosine between the rows of two words, if both are present.
pub fn word_cosine(table: &EmbeddingTable, a: &str, b: &str) -> Option<Result<f64>> {
    Some(cosine_similarity(table.get(a)?, table.get(b)?))
}
