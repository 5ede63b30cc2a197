//! NT-Xent contrastive loss over paired view embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::{rng_from_seed, standard_normal};

/// `2N` embeddings of dimension `D`, stored row-major. Rows `2k` and
/// `2k + 1` (0-based) are the two views of pair `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> EmbeddingBatch<T> {
    pub fn new(data: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidBatch(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        let rows = data.len() / dim;
        if rows < 2 || !rows.is_multiple_of(2) {
            return Err(Error::InvalidBatch(format!(
                "row count must be even and >= 2, got {rows}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        let batch = Self { dim, data };
        for i in 0..rows {
            if norm(batch.row(i)) == T::zero() {
                return Err(Error::ZeroVector(i));
            }
        }
        Ok(batch)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidBatch("rows differ in length".into()));
        }
        Self::new(rows.concat(), dim)
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn pairs(&self) -> usize {
        self.rows() / 2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

/// Random batch with standard normal entries.
pub fn random_batch(pairs: usize, dim: usize, seed: u64) -> Result<EmbeddingBatch<f64>> {
    let mut rng = rng_from_seed(seed);
    let data = (0..2 * pairs * dim).map(|_| standard_normal(&mut rng)).collect();
    EmbeddingBatch::new(data, dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub temperature: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { temperature: 0.5 }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Partner row of `i` under the pairing convention.
#[inline]
pub fn partner(i: usize) -> usize {
    i ^ 1
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn cosine_similarity<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() {
        return Err(Error::ZeroVector(0));
    }
    if nb == T::zero() {
        return Err(Error::ZeroVector(1));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Rows scaled to unit length.
fn unit_rows<T: Real>(data: &[T], dim: usize) -> Vec<T> {
    let mut u = data.to_vec();
    for row in u.chunks_mut(dim) {
        let n = norm(row);
        row.iter_mut().for_each(|x| *x = *x / n);
    }
    u
}

/// Full cosine similarity matrix of the rows, `rows * rows` entries.
fn similarity_matrix<T: Real>(unit: &[T], dim: usize) -> Vec<T> {
    let n = unit.len() / dim;
    let mut s = vec![T::zero(); n * n];
    for i in 0..n {
        for k in i..n {
            let v = dot(&unit[i * dim..(i + 1) * dim], &unit[k * dim..(k + 1) * dim]);
            s[i * n + k] = v;
            s[k * n + i] = v;
        }
    }
    s
}

/// `-sim[i][j]/τ + log Σ_{k≠i} exp(sim[i][k]/τ)`, stabilised by subtracting
/// the largest logit.
fn pair_term<T: Real>(sim_row: &[T], i: usize, j: usize, tau: T) -> T {
    let max = sim_row
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .fold(T::neg_infinity(), |m, (_, &s)| m.max(s / tau));
    let sum = sim_row
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .fold(T::zero(), |acc, (_, &s)| acc + (s / tau - max).exp());
    let loss = max + sum.ln() - sim_row[j] / tau;
    // the positive term is part of the denominator, so the true value is >= 0
    loss.max(T::zero())
}

fn check_tau<T: Real>(tau: T) -> Result<()> {
    if !(tau.is_finite() && tau > T::zero()) {
        return Err(Error::InvalidConfig(format!("temperature must be > 0, got {tau}")));
    }
    Ok(())
}

/// Pairwise NT-Xent term for anchor row `i` and positive row `j` (0-based).
pub fn nt_xent_pair<T: Real>(batch: &EmbeddingBatch<T>, i: usize, j: usize, tau: T) -> Result<T> {
    check_tau(tau)?;
    let rows = batch.rows();
    for index in [i, j] {
        if index >= rows {
            return Err(Error::IndexOutOfRange { index, rows });
        }
    }
    if i == j {
        return Err(Error::InvalidBatch("anchor and positive must be different rows".into()));
    }
    let unit = unit_rows(batch.as_slice(), batch.dim());
    let anchor = &unit[i * batch.dim()..(i + 1) * batch.dim()];
    let sim_row: Vec<T> = unit.chunks(batch.dim()).map(|r| dot(anchor, r)).collect();
    Ok(pair_term(&sim_row, i, j, tau))
}

pub(crate) fn loss_unchecked<T: Real>(data: &[T], dim: usize, tau: T) -> T {
    let n = data.len() / dim;
    let unit = unit_rows(data, dim);
    let sim = similarity_matrix(&unit, dim);
    let total = (0..n).fold(T::zero(), |acc, i| {
        acc + pair_term(&sim[i * n..(i + 1) * n], i, partner(i), tau)
    });
    total / T::from_usize(n).unwrap()
}

/// Mean of the pairwise terms over both orderings of every positive pair.
pub fn contrastive_loss<T: Real>(batch: &EmbeddingBatch<T>, tau: T) -> Result<T> {
    check_tau(tau)?;
    Ok(loss_unchecked(batch.as_slice(), batch.dim(), tau))
}

pub(crate) fn grad_unchecked<T: Real>(data: &[T], dim: usize, tau: T) -> Vec<T> {
    let n = data.len() / dim;
    let unit = unit_rows(data, dim);
    let sim = similarity_matrix(&unit, dim);
    let scale = T::from_usize(n).unwrap() * tau;
    // w[i][k] = dL/dsim[i][k] taken through anchor i only
    let mut w = vec![T::zero(); n * n];
    for i in 0..n {
        let row = &sim[i * n..(i + 1) * n];
        let max = (0..n)
            .filter(|&k| k != i)
            .fold(T::neg_infinity(), |m, k| m.max(row[k] / tau));
        let exps: Vec<T> = (0..n)
            .map(|k| if k == i { T::zero() } else { (row[k] / tau - max).exp() })
            .collect();
        let z = exps.iter().fold(T::zero(), |a, &e| a + e);
        for k in 0..n {
            if k == i {
                continue;
            }
            let target = if k == partner(i) { T::one() } else { T::zero() };
            w[i * n + k] = (exps[k] / z - target) / scale;
        }
    }
    let mut grad = vec![T::zero(); data.len()];
    for i in 0..n {
        // dL/du_i
        let mut g = vec![T::zero(); dim];
        for k in 0..n {
            let c = w[i * n + k] + w[k * n + i];
            if c != T::zero() {
                for (gd, &uk) in g.iter_mut().zip(&unit[k * dim..(k + 1) * dim]) {
                    *gd = *gd + c * uk;
                }
            }
        }
        // project out the radial direction and undo the normalisation
        let ui = &unit[i * dim..(i + 1) * dim];
        let radial = dot(&g, ui);
        let len = norm(&data[i * dim..(i + 1) * dim]);
        for d in 0..dim {
            grad[i * dim + d] = (g[d] - radial * ui[d]) / len;
        }
    }
    grad
}

/// Exact gradient of [`contrastive_loss`] with respect to every entry,
/// laid out like the batch.
pub fn contrastive_loss_grad<T: Real>(batch: &EmbeddingBatch<T>, tau: T) -> Result<Vec<T>> {
    check_tau(tau)?;
    if batch.rows() == 2 {
        return Ok(vec![T::zero(); batch.as_slice().len()]);
    }
    Ok(grad_unchecked(batch.as_slice(), batch.dim(), tau))
}

/// Mean cosine similarity of positive pairs and of all other distinct
/// row pairs; the second is `None` for a single pair.
pub fn pair_similarities<T: Real>(batch: &EmbeddingBatch<T>) -> (T, Option<T>) {
    let n = batch.rows();
    let unit = unit_rows(batch.as_slice(), batch.dim());
    let sim = similarity_matrix(&unit, batch.dim());
    let (mut pos, mut neg, mut negs) = (T::zero(), T::zero(), 0usize);
    for i in 0..n {
        for k in 0..n {
            if k == i {
                continue;
            }
            if k == partner(i) {
                pos = pos + sim[i * n + k];
            } else {
                neg = neg + sim[i * n + k];
                negs += 1;
            }
        }
    }
    let pos = pos / T::from_usize(n).unwrap();
    let neg = (negs > 0).then(|| neg / T::from_usize(negs).unwrap());
    (pos, neg)
}
