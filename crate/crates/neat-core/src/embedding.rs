//! Item Gaussian embeddings and user preference vectors.
//!
//! Each item is a Gaussian with a mean vector and a spherical covariance
//! `variance * I` held as a single positive scalar. The log expected
//! likelihood between two items integrates the product of their densities; in
//! the spherical case it reduces to
//!
//! ```text
//! log E(a, b) = -(d/2) * ln(2*pi*s) - ||mu_a - mu_b||^2 / (2 s),
//! s = var_a + var_b
//! ```
//!
//! Ranking at inference time uses plain cosine similarity between mean
//! vectors.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One item's Gaussian embedding: mean vector plus spherical variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmbedding {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl GaussianEmbedding {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// log of the expected likelihood (integral of the density product) of two
/// spherical Gaussian embeddings.
pub fn log_expected_likelihood(a: &GaussianEmbedding, b: &GaussianEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let s = a.variance + b.variance;
    if s <= 0.0 {
        return Err(Error::NonPositiveVariance(s));
    }
    Ok(log_el_raw(&a.mean, a.variance, &b.mean, b.variance))
}

/// Unchecked kernel shared with the trainer.
pub(crate) fn log_el_raw(mean_a: &[f64], var_a: f64, mean_b: &[f64], var_b: f64) -> f64 {
    log_el_parts(mean_a, var_a, mean_b, var_b).0
}

/// (log E, combined variance s, squared mean distance) for one pair; the
/// trainer derives its gradient coefficients from the same pieces.
pub(crate) fn log_el_parts(
    mean_a: &[f64],
    var_a: f64,
    mean_b: &[f64],
    var_b: f64,
) -> (f64, f64, f64) {
    let d = mean_a.len() as f64;
    let s = var_a + var_b;
    let dist_sq: f64 = mean_a
        .iter()
        .zip(mean_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let le = -0.5 * d * (2.0 * std::f64::consts::PI * s).ln() - dist_sq / (2.0 * s);
    (le, s, dist_sq)
}

/// Cosine similarity between the two mean vectors.
pub fn cosine_score(a: &GaussianEmbedding, b: &GaussianEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    cosine_raw(&a.mean, &b.mean).ok_or(Error::ZeroNormMean)
}

pub(crate) fn cosine_raw(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na.sqrt() * nb.sqrt()))
}

/// Item Gaussian embeddings plus user vectors, indexed by identifier.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    item_names: Vec<String>,
    item_index: HashMap<String, usize>,
    pub(crate) means: Vec<f64>,     // n_items x dim, row-major
    pub(crate) variances: Vec<f64>, // n_items
    user_names: Vec<String>,
    user_index: HashMap<String, usize>,
    pub(crate) thetas: Vec<f64>, // n_users x dim, row-major
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_names.len()
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn user_names(&self) -> &[String] {
        &self.user_names
    }

    pub fn contains_item(&self, name: &str) -> bool {
        self.item_index.contains_key(name)
    }

    pub(crate) fn item_pos(&self, name: &str) -> Result<usize> {
        self.item_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownItem(name.to_string()))
    }

    pub(crate) fn user_pos(&self, name: &str) -> Result<usize> {
        self.user_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownUser(name.to_string()))
    }

    pub fn item(&self, name: &str) -> Result<GaussianEmbedding> {
        let pos = self.item_pos(name)?;
        Ok(GaussianEmbedding {
            mean: self.mean_at(pos).to_vec(),
            variance: self.variances[pos],
        })
    }

    pub fn item_mean(&self, name: &str) -> Result<&[f64]> {
        Ok(self.mean_at(self.item_pos(name)?))
    }

    pub fn item_variance(&self, name: &str) -> Result<f64> {
        Ok(self.variances[self.item_pos(name)?])
    }

    pub fn user_vector(&self, name: &str) -> Result<&[f64]> {
        let pos = self.user_pos(name)?;
        Ok(&self.thetas[pos * self.dim..(pos + 1) * self.dim])
    }

    pub(crate) fn mean_at(&self, pos: usize) -> &[f64] {
        &self.means[pos * self.dim..(pos + 1) * self.dim]
    }

    pub(crate) fn from_parts(
        dim: usize,
        item_names: Vec<String>,
        means: Vec<f64>,
        variances: Vec<f64>,
        user_names: Vec<String>,
        thetas: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(means.len(), item_names.len() * dim);
        debug_assert_eq!(variances.len(), item_names.len());
        debug_assert_eq!(thetas.len(), user_names.len() * dim);
        let item_index = item_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let user_index = user_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self {
            dim,
            item_names,
            item_index,
            means,
            variances,
            user_names,
            user_index,
            thetas,
        }
    }

    /// Mutable access to an item's mean, used by tests to probe the loss
    /// surface with finite differences.
    pub fn item_mean_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let pos = self.item_pos(name)?;
        Ok(&mut self.means[pos * self.dim..(pos + 1) * self.dim])
    }

    pub fn item_variance_mut(&mut self, name: &str) -> Result<&mut f64> {
        let pos = self.item_pos(name)?;
        Ok(&mut self.variances[pos])
    }

    pub fn user_vector_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let pos = self.user_pos(name)?;
        Ok(&mut self.thetas[pos * self.dim..(pos + 1) * self.dim])
    }

    /// Serialize items as `item_id<TAB>variance<TAB>m_1 m_2 ... m_d` under a
    /// `#dim=<d>` header. Values round-trip exactly (shortest f64 form).
    pub fn save_items<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "#dim={}", self.dim)?;
        for (pos, name) in self.item_names.iter().enumerate() {
            write!(w, "{name}\t{}\t", self.variances[pos])?;
            let mean = self.mean_at(pos);
            for (i, value) in mean.iter().enumerate() {
                if i > 0 {
                    write!(w, " ")?;
                }
                write!(w, "{value}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Serialize users as `user_id<TAB>t_1 ... t_d` under a `#dim=<d>` header.
    pub fn save_users<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "#dim={}", self.dim)?;
        for (pos, name) in self.user_names.iter().enumerate() {
            write!(w, "{name}\t")?;
            let theta = &self.thetas[pos * self.dim..(pos + 1) * self.dim];
            for (i, value) in theta.iter().enumerate() {
                if i > 0 {
                    write!(w, " ")?;
                }
                write!(w, "{value}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn load_items<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = EmbeddingTable::default();
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::EmptyInput("embedding file"))?;
        let header = header.map_err(|source| Error::Io {
            path: "<embeddings>".into(),
            source,
        })?;
        table.dim = parse_dim_header(&header)?;
        for (idx, line) in lines {
            let line = line.map_err(|source| Error::Io {
                path: "<embeddings>".into(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let mut fields = line.split('\t');
            let (name, variance, means) =
                match (fields.next(), fields.next(), fields.next(), fields.next()) {
                    (Some(n), Some(v), Some(m), None) => (n, v, m),
                    _ => return Err(parse_err("expected 3 tab-separated fields".to_string())),
                };
            let variance: f64 = variance
                .parse()
                .map_err(|_| parse_err(format!("bad variance `{variance}`")))?;
            let mean = parse_vector(means, table.dim, idx + 1)?;
            table.item_index.insert(name.to_string(), table.item_names.len());
            table.item_names.push(name.to_string());
            table.variances.push(variance);
            table.means.extend_from_slice(&mean);
        }
        Ok(table)
    }

    /// Load the parallel user file into an existing table.
    pub fn load_users<R: BufRead>(&mut self, reader: R) -> Result<()> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::EmptyInput("user vector file"))?;
        let header = header.map_err(|source| Error::Io {
            path: "<users>".into(),
            source,
        })?;
        let dim = parse_dim_header(&header)?;
        if dim != self.dim {
            return Err(Error::DimMismatch {
                left: self.dim,
                right: dim,
            });
        }
        for (idx, line) in lines {
            let line = line.map_err(|source| Error::Io {
                path: "<users>".into(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let mut fields = line.split('\t');
            let (name, values) = match (fields.next(), fields.next(), fields.next()) {
                (Some(n), Some(v), None) => (n, v),
                _ => return Err(parse_err("expected 2 tab-separated fields".to_string())),
            };
            let theta = parse_vector(values, self.dim, idx + 1)?;
            self.user_index.insert(name.to_string(), self.user_names.len());
            self.user_names.push(name.to_string());
            self.thetas.extend_from_slice(&theta);
        }
        Ok(())
    }
}

fn parse_dim_header(header: &str) -> Result<usize> {
    header
        .strip_prefix("#dim=")
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("expected `#dim=<d>` header, got `{header}`"),
        })
}

fn parse_vector(text: &str, dim: usize, line: usize) -> Result<Vec<f64>> {
    let values: std::result::Result<Vec<f64>, _> =
        text.split(' ').map(str::parse::<f64>).collect();
    let values = values.map_err(|e| Error::Parse {
        line,
        message: format!("bad vector component: {e}"),
    })?;
    if values.len() != dim {
        return Err(Error::Parse {
            line,
            message: format!("expected {dim} components, found {}", values.len()),
        });
    }
    Ok(values)
}

/// Fresh table: means uniform in [-init_scale, init_scale]^d, variances 1.0,
/// user vectors drawn like means. Deterministic under `seed`.
pub fn init_table(
    items: &[String],
    users: &[String],
    dim: usize,
    seed: u64,
    init_scale: f64,
) -> EmbeddingTable {
    assert!(dim >= 1, "dim must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable {
        dim,
        ..Default::default()
    };
    for name in items {
        table.item_index.insert(name.clone(), table.item_names.len());
        table.item_names.push(name.clone());
        table.variances.push(1.0);
        for _ in 0..dim {
            table.means.push(rng.gen_range(-init_scale..=init_scale));
        }
    }
    for name in users {
        table.user_index.insert(name.clone(), table.user_names.len());
        table.user_names.push(name.clone());
        for _ in 0..dim {
            table.thetas.push(rng.gen_range(-init_scale..=init_scale));
        }
    }
    table
}
