//! Word-vector table loaded from the common whitespace-separated text layout.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Default word-vector width.
pub const DEFAULT_EMBED_DIM: usize = 300;

/// Lowercases, trims and collapses inner whitespace.
pub fn normalize_token(token: &str) -> String {
    token
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token to vector map with a fixed width.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    // row-major, tokens.len() x dim
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    /// Adds `token`; returns `false` (and keeps the existing vector) when the
    /// normalized token is already present.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::dim("embedding insert", &[self.dim], &[vector.len()]));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding insert", format!("non-finite value for {token}")));
        }
        let key = normalize_token(token);
        if key.is_empty() {
            return Err(Error::domain("embedding insert", "empty token"));
        }
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key.clone(), self.tokens.len());
        self.tokens.push(key);
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Row index of a single token, after normalization.
    pub fn row_of(&self, token: &str) -> Option<usize> {
        self.index.get(&normalize_token(token)).copied()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.row_of(token).map(|r| self.row(r))
    }

    /// The whole table as a `[len x dim]` matrix.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.len(), self.dim, self.vectors.clone()).expect("consistent table")
    }

    /// Rows of the words of `phrase` found in the table, in ascending row
    /// order. Words are split on whitespace and underscores.
    pub fn phrase_rows(&self, phrase: &str) -> Vec<usize> {
        let mut rows: Vec<usize> = phrase
            .split(|c: char| c.is_whitespace() || c == '_')
            .filter(|w| !w.is_empty())
            .filter_map(|w| self.index.get(&w.to_lowercase()).copied())
            .collect();
        rows.sort_unstable();
        rows
    }

    /// Mean of the vectors of the phrase's known words; the zero vector when
    /// no word is known.
    pub fn embed_phrase(&self, phrase: &str) -> Vec<f64> {
        let rows = self.phrase_rows(phrase);
        let mut out = vec![0.0; self.dim];
        if rows.is_empty() {
            return out;
        }
        for &r in &rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        if rows.len() > 1 {
            let n = rows.len() as f64;
            for o in &mut out {
                *o /= n;
            }
        }
        out
    }

    /// Row weights such that `sum(w * row)` equals [`Self::embed_phrase`].
    pub fn phrase_weights(&self, phrase: &str) -> Vec<(usize, f64)> {
        let rows = self.phrase_rows(phrase);
        let w = 1.0 / rows.len().max(1) as f64;
        rows.into_iter().map(|r| (r, w)).collect()
    }

    /// Parses the text layout: one token followed by `dim` floats per line.
    pub fn parse(text: &str, dim: usize, source_name: &str) -> Result<Self> {
        let mut table = EmbeddingTable::new(dim);
        let mut saw_line = false;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            saw_line = true;
            let parse_err = |reason: String| Error::Parse {
                source_name: source_name.to_string(),
                line: line_no,
                reason,
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(format!("invalid float {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(parse_err(format!(
                    "expected {dim} values for {token:?}, found {}",
                    values.len()
                )));
            }
            table.insert(token, &values)?;
        }
        if !saw_line {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: 0,
                reason: "no embedding lines".into(),
            });
        }
        Ok(table)
    }

    /// Writes the table in the same text layout it is parsed from.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (r, token) in self.tokens.iter().enumerate() {
            out.push_str(token);
            for v in self.row(r) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Loads a word-vector text file of width `dim`.
pub fn load_embeddings(path: &Path, dim: usize) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(&text, dim, &path.display().to_string())
}
