//! Points of the probability simplex, score vectors and permutations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// A point of the probability simplex. Zero entries are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("probability vector is empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Validation(format!("probability weights must be >= 0, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Validation(format!("probability weights sum to {total}, not 1")));
        }
        Ok(ProbVector(weights))
    }

    /// Rescales nonnegative weights with a positive total onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Validation(format!("weights must be finite and >= 0, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Validation("weights sum to zero".into()));
        }
        Ok(ProbVector(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(k: usize) -> Self {
        ProbVector(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest index attaining the maximum.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// True when some class has exactly zero mass.
    pub fn on_boundary(&self) -> bool {
        self.0.contains(&0.0)
    }

    /// Indices sorted by decreasing weight; ties keep index order.
    pub fn descending_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A finite score vector `v ∈ ℝ^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("scores must be finite, got {s}")));
        }
        Ok(ScoreVector(scores))
    }

    pub fn zeros(k: usize) -> Self {
        ScoreVector(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScoreVector::new(v)
    }
}

impl From<ScoreVector> for Vec<f64> {
    fn from(v: ScoreVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for ScoreVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Lowest index of the maximum entry.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// A bijection of `{0, …, k−1}` acting on vectors by `[σ(v)]_j = v_{σ(j)}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || seen[m] {
                return Err(Error::Validation(format!("{map:?} is not a permutation")));
            }
            seen[m] = true;
        }
        Ok(Permutation(map))
    }

    pub fn identity(k: usize) -> Self {
        Permutation((0..k).collect())
    }

    pub fn transposition(k: usize, a: usize, b: usize) -> Result<Self> {
        if a >= k || b >= k {
            return Err(Error::Validation(format!("transposition ({a} {b}) out of range for k = {k}")));
        }
        let mut map: Vec<usize> = (0..k).collect();
        map.swap(a, b);
        Ok(Permutation(map))
    }

    /// The permutation that sorts `v` in decreasing order: `σ(v)` is descending.
    pub fn sorting_descending(v: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        Permutation(idx)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn image(&self, j: usize) -> usize {
        self.0[j]
    }

    /// The product `σσ'` for which `S_{σσ'} = S_σ S_{σ'}`, i.e. `j ↦ σ'(σ(j))`.
    pub fn product(&self, other: &Permutation) -> Result<Permutation> {
        if self.len() != other.len() {
            return Err(Error::Dimension { expected: self.len(), got: other.len() });
        }
        Ok(Permutation(self.0.iter().map(|&j| other.0[j]).collect()))
    }

    pub fn apply_slice(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: v.len() });
        }
        Ok(self.0.iter().map(|&j| v[j]).collect())
    }

    pub fn apply<T: Permutable>(&self, v: &T) -> Result<T> {
        v.permuted(self)
    }
}

/// Vectors that permutations act on coordinate-wise.
pub trait Permutable: Sized {
    fn permuted(&self, sigma: &Permutation) -> Result<Self>;
}

impl Permutable for ScoreVector {
    fn permuted(&self, sigma: &Permutation) -> Result<Self> {
        Ok(ScoreVector(sigma.apply_slice(&self.0)?))
    }
}

impl Permutable for ProbVector {
    fn permuted(&self, sigma: &Permutation) -> Result<Self> {
        Ok(ProbVector(sigma.apply_slice(&self.0)?))
    }
}

impl Permutable for Vec<f64> {
    fn permuted(&self, sigma: &Permutation) -> Result<Self> {
        sigma.apply_slice(self)
    }
}
