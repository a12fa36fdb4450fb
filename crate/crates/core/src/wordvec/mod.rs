//! Label embedding tables.
//!
//! Tables are read from (and written to) the whitespace-delimited word-vector
//! text format used by word2vec and GloVe:
//!
//! ```text
//! 3 4          <- optional header: entry count, dimension
//! cat 0.1 0.2 0.3 0.4
//! dog ...
//! ```
//!
//! Lookup is case-insensitive. Multi-word labels are resolved as an
//! underscore-joined phrase first and fall back to the mean of their token
//! vectors.

mod fixture;

pub use fixture::{semantic_fixture_table, FIXTURE_VOCABULARY};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{IoContext, Result, S2sError};

/// Immutable label → vector table. All vectors share one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    labels: Vec<String>,
    data: Vec<f64>,
    /// lowercased label → row; the first case variant wins.
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(S2sError::Dimension(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(EmbeddingTable {
            dim,
            labels: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    /// Build a table from `(label, vector)` pairs, validating every entry.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = EmbeddingTable::new(dim)?;
        for (label, vector) in entries {
            table.insert(label.into(), &vector)?;
        }
        Ok(table)
    }

    fn insert(&mut self, label: String, vector: &[f64]) -> Result<()> {
        if label.is_empty() || label.chars().any(char::is_whitespace) {
            return Err(S2sError::Format(format!("invalid table label {label:?}")));
        }
        if vector.len() != self.dim {
            return Err(S2sError::Dimension(format!(
                "vector for `{label}` has {} components, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if let Some(bad) = vector.iter().find(|c| !c.is_finite()) {
            return Err(S2sError::Numeric(format!(
                "non-finite component {bad} in `{label}`"
            )));
        }
        if self.labels.contains(&label) {
            return Err(S2sError::DuplicateKey(label));
        }
        let row = self.labels.len();
        self.index.entry(label.to_lowercase()).or_insert(row);
        self.labels.push(label);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Labels in insertion order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Case-insensitive lookup of a single table key.
    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index
            .get(&key.to_lowercase())
            .map(|&row| self.row(row))
    }

    fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.labels
            .iter()
            .enumerate()
            .map(move |(i, l)| (l.as_str(), self.row(i)))
    }

    /// Embed a (possibly multi-word) label.
    pub fn embed_label(&self, label: &str) -> Result<Vec<f64>> {
        embed_label(self, label)
    }

    /// Write in the text interchange format, with a `count dim` header when
    /// `header` is set.
    pub fn write_text<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "{} {}", self.len(), self.dim)?;
        }
        for (label, vector) in self.iter() {
            write!(out, "{label}")?;
            for c in vector {
                write!(out, " {c}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, header: bool) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).at(path)?);
        self.write_text(&mut out, header).at(path)?;
        out.flush().at(path)
    }

    /// Parse the text interchange format from a reader.
    pub fn read_text<R: BufRead>(reader: R, expected_dim: Option<usize>) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        let mut declared_count = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| S2sError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();

            if lineno == 1 && rest.len() == 1 {
                if let (Ok(count), Ok(dim)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                    check_expected_dim(dim, expected_dim)?;
                    table = Some(EmbeddingTable::new(dim)?);
                    declared_count = Some(count);
                    continue;
                }
            }

            let mut vector = Vec::with_capacity(rest.len());
            for field in &rest {
                let value = field.parse::<f64>().map_err(|_| S2sError::Parse {
                    line: lineno,
                    msg: format!("non-numeric component `{field}`"),
                })?;
                vector.push(value);
            }
            let table = match table.as_mut() {
                Some(t) => t,
                None => {
                    if vector.is_empty() {
                        return Err(S2sError::Parse {
                            line: lineno,
                            msg: "token without components".into(),
                        });
                    }
                    check_expected_dim(vector.len(), expected_dim)?;
                    table.insert(EmbeddingTable::new(vector.len())?)
                }
            };
            if vector.len() != table.dim {
                return Err(S2sError::Parse {
                    line: lineno,
                    msg: format!("expected {} components, found {}", table.dim, vector.len()),
                });
            }
            match table.insert(token.to_string(), &vector) {
                Err(S2sError::Numeric(msg)) => return Err(S2sError::Parse { line: lineno, msg }),
                other => other?,
            }
        }
        let table = match table {
            Some(t) => t,
            None => EmbeddingTable::new(expected_dim.unwrap_or(1))?,
        };
        if let Some(count) = declared_count {
            if count != table.len() {
                return Err(S2sError::Format(format!(
                    "header declares {count} entries, found {}",
                    table.len()
                )));
            }
        }
        Ok(table)
    }
}

fn check_expected_dim(found: usize, expected: Option<usize>) -> Result<()> {
    match expected {
        Some(e) if e != found => Err(S2sError::Dimension(format!(
            "file has dimension {found}, expected {e}"
        ))),
        _ => Ok(()),
    }
}

/// Load a word-vector text file.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).at(path)?;
    EmbeddingTable::read_text(BufReader::new(file), expected_dim)
}

/// Resolve `label` to a vector: the underscore-joined lowercase phrase if
/// present, otherwise the mean of its whitespace-separated token vectors.
pub fn embed_label(table: &EmbeddingTable, label: &str) -> Result<Vec<f64>> {
    let tokens: Vec<String> = label.split_whitespace().map(str::to_lowercase).collect();
    if tokens.is_empty() {
        return Err(S2sError::UnknownLabel {
            label: label.to_string(),
            token: String::new(),
        });
    }
    if let Some(v) = table.get(&tokens.join("_")) {
        return Ok(v.to_vec());
    }
    let mut mean = vec![0.0; table.dim()];
    for token in &tokens {
        let v = table.get(token).ok_or_else(|| S2sError::UnknownLabel {
            label: label.to_string(),
            token: token.clone(),
        })?;
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = tokens.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Orthonormal control table: label `k` receives the `k`-th Gram–Schmidt
/// vector of a seeded Gaussian matrix.
pub fn make_orthonormal_table<S: AsRef<str>>(
    labels: &[S],
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(S2sError::Dimension(
            "embedding dimension must be positive".into(),
        ));
    }
    if labels.len() > dim {
        return Err(S2sError::Capacity {
            labels: labels.len(),
            dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(labels.len());
    while basis.len() < labels.len() {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            // numerically dependent draw; resample
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut table = EmbeddingTable::new(dim)?;
    for (label, v) in labels.iter().zip(basis) {
        let label = label
            .as_ref()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join("_");
        table.insert(label, &v)?;
    }
    Ok(table)
}
