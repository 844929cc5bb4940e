use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::eigen::symmetric_eigen;
use super::vector::{common_dim, dot, UpdateVector};

/// Eigenvalues below this fraction of the leading one are treated as zero.
const RANK_TOLERANCE: f64 = 1e-12;

/// An orthonormal basis for the leading principal subspace of a row set.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalBasis {
    /// `columns[j]` has length `d`; columns are orthonormal.
    pub columns: Vec<Vec<f64>>,
    /// Gram eigenvalues of the retained directions (= squared singular values).
    pub eigenvalues: Vec<f64>,
    pub requested_rank: usize,
}

impl PrincipalBasis {
    pub fn rank(&self) -> usize {
        self.columns.len()
    }
}

/// Top-`r` principal directions of already-centered `rows`.
///
/// Works through the `m x m` Gram matrix, which is cheap while `m` stays far
/// below the row dimension. The rank is clamped to `min(m - 1, d)` and then to
/// the numerical rank of the rows. Each column is signed so that its
/// largest-magnitude entry is positive.
pub fn pca_topk<V: AsRef<[f64]> + Sync>(rows: &[V], r: usize) -> Result<PrincipalBasis> {
    let m = rows.len();
    if m < 2 {
        return Err(Error::InsufficientBuffer { rows: m });
    }
    if r == 0 {
        return Err(Error::invalid("PCA rank must be positive"));
    }
    let d = common_dim(rows)?;
    let target = r.min(m - 1).min(d);

    let gram: Vec<Vec<f64>> = crate::par::map_range(m, |i| {
        (0..m)
            .map(|j| {
                if j < i {
                    0.0
                } else {
                    dot(rows[i].as_ref(), rows[j].as_ref())
                }
            })
            .collect()
    });
    let eig = symmetric_eigen(&gram);
    let lead = eig.values.first().copied().unwrap_or(0.0);
    if !(lead > 0.0) {
        return Err(Error::InsufficientBuffer { rows: 0 });
    }

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(target);
    let mut eigenvalues = Vec::with_capacity(target);
    for (lambda, coeffs) in eig.values.iter().zip(&eig.vectors).take(target) {
        if *lambda <= lead * RANK_TOLERANCE {
            break;
        }
        let mut u = vec![0.0; d];
        for (c, row) in coeffs.iter().zip(rows) {
            super::vector::axpy(*c, row.as_ref(), &mut u);
        }
        // Re-orthogonalize against earlier columns; exact arithmetic would
        // make this a no-op.
        for prev in &columns {
            let proj = dot(prev, &u);
            super::vector::axpy(-proj, prev, &mut u);
        }
        let len = super::vector::norm(&u);
        if len == 0.0 {
            break;
        }
        u.iter_mut().for_each(|x| *x /= len);
        fix_sign(&mut u);
        columns.push(u);
        eigenvalues.push(*lambda);
    }

    Ok(PrincipalBasis {
        columns,
        eigenvalues,
        requested_rank: r,
    })
}

fn fix_sign(u: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
}

/// The learned benign geometry: an orthonormal basis, the centering vector the
/// basis was fitted with, and the orthogonal-energy threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    pub basis: Vec<Vec<f64>>,
    pub center: UpdateVector,
    pub tau: f64,
}

impl SubspaceModel {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Spectral coordinates `U^T d`.
    pub fn project(&self, d: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|u| dot(u, d)).collect()
    }

    /// `U z`
    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (coef, u) in z.iter().zip(&self.basis) {
            super::vector::axpy(*coef, u, &mut out);
        }
        out
    }

    /// `d - U U^T d`
    pub fn residual_vector(&self, d: &[f64]) -> Vec<f64> {
        let lifted = self.lift(&self.project(d));
        d.iter().zip(lifted).map(|(a, b)| a - b).collect()
    }
}

/// Orthogonal energy `||d - U U^T d||_2` of a raw update.
pub fn orthogonal_energy(d: &[f64], model: &SubspaceModel) -> Result<f64> {
    if d.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: model.dim(),
            found: d.len(),
        });
    }
    Ok(super::vector::norm(&model.residual_vector(d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn model(basis: Vec<Vec<f64>>) -> SubspaceModel {
        let d = basis[0].len();
        SubspaceModel {
            basis,
            center: UpdateVector::zeros(d),
            tau: 0.0,
        }
    }

    fn random_rows(rng: &mut crate::tensor::Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn center(rows: &mut [Vec<f64>]) {
        let mu = crate::tensor::mean(rows);
        for r in rows.iter_mut() {
            r.iter_mut().zip(&mu).for_each(|(x, m)| *x -= m);
        }
    }

    #[test]
    fn axis_aligned_data() {
        let mut rows = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]];
        center(&mut rows);
        let b = pca_topk(&rows, 1).unwrap();
        assert_eq!(b.rank(), 1);
        assert!((b.columns[0][0] - 1.0).abs() < 1e-12);
        assert!(b.columns[0][1].abs() < 1e-12);
    }

    #[test]
    fn exact_span_reconstructs() {
        let mut rng = crate::tensor::Rng::new(2);
        let a = random_rows(&mut rng, 1, 6).remove(0);
        let c = random_rows(&mut rng, 1, 6).remove(0);
        let mut rows: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let (s, t) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                a.iter().zip(&c).map(|(x, y)| s * x + t * y).collect()
            })
            .collect();
        center(&mut rows);
        let b = pca_topk(&rows, 2).unwrap();
        let m = model(b.columns);
        for r in &rows {
            assert!(orthogonal_energy(r, &m).unwrap() < 1e-9 * (1.0 + crate::tensor::norm(r)));
        }
    }

    #[test]
    fn captured_variance_matches_dense_eigensolve() {
        let mut rng = crate::tensor::Rng::new(9);
        let mut rows = random_rows(&mut rng, 6, 4);
        center(&mut rows);
        let b = pca_topk(&rows, 2).unwrap();
        let x = nalgebra::DMatrix::from_fn(6, 4, |i, j| rows[i][j]);
        let cov = x.transpose() * &x;
        let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|p, q| q.partial_cmp(p).unwrap());
        let oracle: f64 = ev[..2].iter().sum();
        let captured: f64 = b
            .columns
            .iter()
            .map(|u| rows.iter().map(|r| dot(u, r).powi(2)).sum::<f64>())
            .sum();
        assert!((captured - oracle).abs() <= 1e-8 * oracle);
    }

    #[test]
    fn columns_are_orthonormal_and_signed() {
        let mut rng = crate::tensor::Rng::new(4);
        let mut rows = random_rows(&mut rng, 12, 40);
        center(&mut rows);
        let b = pca_topk(&rows, 50).unwrap();
        assert_eq!(b.rank(), 11);
        for (i, u) in b.columns.iter().enumerate() {
            for (j, w) in b.columns.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(u, w) - expect).abs() < 1e-8);
            }
            let big = u
                .iter()
                .copied()
                .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn insufficient_rows() {
        assert!(matches!(
            pca_topk(&[vec![1.0, 2.0]], 1),
            Err(Error::InsufficientBuffer { rows: 1 })
        ));
    }

    #[test]
    fn orthogonal_energy_examples() {
        let m = model(vec![vec![1.0, 0.0]]);
        assert!((orthogonal_energy(&[3.0, 4.0], &m).unwrap() - 4.0).abs() < 1e-15);
        assert!(orthogonal_energy(&[3.0, 0.0], &m).unwrap() < 1e-12);
        assert!(orthogonal_energy(&[3.0, 0.0, 1.0], &m).is_err());
    }

    #[test]
    fn orthogonal_energy_matches_dense_projector() {
        let mut rng = crate::tensor::Rng::new(21);
        let d = 7;
        let mut raw = random_rows(&mut rng, 5, d);
        center(&mut raw);
        let basis = pca_topk(&raw, 3).unwrap().columns;
        let m = model(basis.clone());
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        // explicit (I - U U^T)
        let mut proj = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let uu: f64 = basis.iter().map(|u| u[i] * u[j]).sum();
                proj[i][j] = if i == j { 1.0 } else { 0.0 } - uu;
            }
        }
        let r: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| proj[i][j] * x[j]).sum())
            .collect();
        let oracle = crate::tensor::norm(&r);
        assert!((orthogonal_energy(&x, &m).unwrap() - oracle).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn pythagorean_identity(seed in 0u64..500, d in 2usize..12, m in 3usize..10) {
            let mut rng = crate::tensor::Rng::new(seed);
            let mut rows = random_rows(&mut rng, m, d);
            center(&mut rows);
            let basis = pca_topk(&rows, (m / 2).max(1)).unwrap().columns;
            let sm = model(basis);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let z = sm.project(&x);
            let rho = orthogonal_energy(&x, &sm).unwrap();
            let lhs = dot(&z, &z) + rho * rho;
            let rhs = dot(&x, &x);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-6 * rhs);
        }
    }
}
