use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A flat parameter delta. Every update exchanged between clients, attacks
/// and aggregators has this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UpdateVector(Vec<f64>);

impl UpdateVector {
    /// Wraps `data`, rejecting NaN and infinite entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(coordinate) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { coordinate });
        }
        Ok(Self(data))
    }

    /// Wraps `data` without the finiteness scan. Internal arithmetic on
    /// finite inputs stays finite, so this is used on hot paths.
    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        Self(data)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for UpdateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for UpdateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<UpdateVector> for Vec<f64> {
    fn from(v: UpdateVector) -> Self {
        v.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Checks that every vector has the same dimension as the first, returning it.
pub fn common_dim<V: AsRef<[f64]>>(vectors: &[V]) -> Result<usize> {
    let first = vectors
        .first()
        .ok_or(Error::Empty("no vectors supplied"))?
        .as_ref()
        .len();
    for (index, v) in vectors.iter().enumerate() {
        let found = v.as_ref().len();
        if found != first {
            return Err(Error::DimensionMismatch {
                index,
                expected: first,
                found,
            });
        }
    }
    Ok(first)
}

/// Arithmetic mean of the vectors at `indices`, accumulated as offsets from
/// the first listed vector so that equal inputs average to themselves exactly.
pub fn mean_of<V: AsRef<[f64]>>(vectors: &[V], indices: &[usize]) -> Vec<f64> {
    let anchor = vectors[indices[0]].as_ref();
    let mut acc = vec![0.0; anchor.len()];
    for &i in &indices[1..] {
        for ((a, x), o) in acc.iter_mut().zip(vectors[i].as_ref()).zip(anchor) {
            *a += x - o;
        }
    }
    let count = indices.len() as f64;
    anchor.iter().zip(acc).map(|(o, a)| o + a / count).collect()
}

pub fn mean<V: AsRef<[f64]>>(vectors: &[V]) -> Vec<f64> {
    let all: Vec<usize> = (0..vectors.len()).collect();
    mean_of(vectors, &all)
}

/// Population (divide-by-count) standard deviation per coordinate.
pub fn coordinate_std<V: AsRef<[f64]>>(vectors: &[V], mean: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; mean.len()];
    for v in vectors {
        for ((a, x), m) in acc.iter_mut().zip(v.as_ref()).zip(mean) {
            let d = x - m;
            *a += d * d;
        }
    }
    let scale = 1.0 / vectors.len() as f64;
    acc.into_iter().map(|s| (s * scale).sqrt()).collect()
}

/// Squared Euclidean distance matrix, row-major `n x n`.
pub fn pairwise_sq_distances<V: AsRef<[f64]> + Sync>(vectors: &[V]) -> Result<Vec<Vec<f64>>> {
    if vectors.len() < 2 {
        return Err(Error::invalid(format!(
            "pairwise distances need at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    common_dim(vectors)?;
    Ok(pairwise_unchecked(vectors))
}

/// Same as [`pairwise_sq_distances`] but accepts any count and skips validation.
pub(crate) fn pairwise_unchecked<V: AsRef<[f64]> + Sync>(vectors: &[V]) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let upper: Vec<Vec<f64>> = crate::par::map_range(n, |i| {
        (i + 1..n)
            .map(|j| sq_distance(vectors[i].as_ref(), vectors[j].as_ref()))
            .collect()
    });
    let mut out = vec![vec![0.0; n]; n];
    for (i, row) in upper.into_iter().enumerate() {
        for (k, d) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            UpdateVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { coordinate: 1 })
        ));
        assert!(UpdateVector::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn three_four_five() {
        let d = pairwise_sq_distances(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(d, vec![vec![0.0, 25.0], vec![25.0, 0.0]]);
    }

    #[test]
    fn identical_vectors_have_zero_distances() {
        let v = vec![vec![1.5, -2.0, 3.0]; 4];
        let d = pairwise_sq_distances(&v).unwrap();
        assert!(d.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_double_loop() {
        use rand::Rng as _;
        let mut rng = crate::tensor::Rng::new(3);
        let v: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let d = pairwise_sq_distances(&v).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += (v[i][k] - v[j][k]) * (v[i][k] - v[j][k]);
                }
                assert_eq!(d[i][j], s);
            }
        }
    }

    #[test]
    fn mismatch_names_offender() {
        let err = pairwise_sq_distances(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0]]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                index: 2,
                expected: 2,
                found: 1
            }
        ));
    }
}
