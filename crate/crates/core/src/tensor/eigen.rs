//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Matrices here are small (Gram matrices of at most a few dozen rows), where
//! Jacobi is accurate to working precision and simple to make deterministic.

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// `vectors[j]` is the unit eigenvector for `values[j]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Decomposes the symmetric matrix `a` (row-major, `m x m`). Only symmetry of
/// the input is assumed; the strictly lower triangle is ignored.
pub fn symmetric_eigen(a: &[Vec<f64>]) -> SymmetricEigen {
    let m = a.len();
    let mut s: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| if j >= i { a[i][j] } else { a[j][i] })
                .collect()
        })
        .collect();
    // v[i][j]: component i of eigenvector j
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let scale: f64 = s.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..m)
                .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
                .map(|(i, j)| s[i][j] * s[i][j])
                .sum::<f64>()
                .sqrt();
            if off <= f64::EPSILON * 1e-2 * scale {
                break;
            }
            for p in 0..m {
                for q in p + 1..m {
                    rotate(&mut s, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| s[y][y].total_cmp(&s[x][x]).then(x.cmp(&y)));
    let values = order.iter().map(|&j| s[j][j]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..m).map(|i| v[i][j]).collect())
        .collect();
    SymmetricEigen { values, vectors }
}

fn rotate(s: &mut [Vec<f64>], v: &mut [Vec<f64>], p: usize, q: usize) {
    let apq = s[p][q];
    if apq == 0.0 {
        return;
    }
    let app = s[p][p];
    let aqq = s[q][q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let sn = t * c;
    let m = s.len();

    for k in 0..m {
        let skp = s[k][p];
        let skq = s[k][q];
        s[k][p] = c * skp - sn * skq;
        s[k][q] = sn * skp + c * skq;
    }
    for k in 0..m {
        let spk = s[p][k];
        let sqk = s[q][k];
        s[p][k] = c * spk - sn * sqk;
        s[q][k] = sn * spk + c * sqk;
    }
    s[p][q] = 0.0;
    s[q][p] = 0.0;

    for row in v.iter_mut() {
        let vp = row[p];
        let vq = row[q];
        row[p] = c * vp - sn * vq;
        row[q] = sn * vp + c * vq;
    }
}
