//! Eigenvalues of small dense symmetric matrices.
//!
//! Householder reduction to tridiagonal form followed by the implicit QL
//! iteration with Wilkinson-style shifts. Only eigenvalues are produced;
//! mixing-matrix analysis never needs the vectors.

use crate::error::{Error, Result};

const MAX_QL_SWEEPS: usize = 64;

/// Eigenvalues of the symmetric matrix `a` (row-major rows), sorted descending.
///
/// Only the lower triangle is read. Callers are expected to have checked symmetry.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (mut diag, mut off) = tridiagonalize(a);
    tridiagonal_ql(&mut diag, &mut off)?;
    diag.sort_by(|x, y| y.total_cmp(x));
    Ok(diag)
}

/// Returns (diagonal, off-diagonal) where `off[i]` couples rows `i` and `i + 1`
/// and `off[n - 1] == 0`.
fn tridiagonalize(a: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    // Work on a full symmetric copy built from the lower triangle.
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            m[i][j] = a[i][j];
            m[j][i] = a[i][j];
        }
    }
    let mut off = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<f64> = (0..len).map(|r| m[k + 1 + r][k]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            off[k] = m[k + 1][k];
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }

        // p = A_sub v, K = v'p, q = p - K v; A_sub -= 2 (v q' + q v')
        let mut p = vec![0.0; len];
        for r in 0..len {
            let row = &m[k + 1 + r];
            p[r] = (0..len).map(|c| row[k + 1 + c] * v[c]).sum();
        }
        let kk: f64 = v.iter().zip(&p).map(|(a, b)| a * b).sum();
        let q: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kk * vi).collect();
        for r in 0..len {
            for c in 0..len {
                m[k + 1 + r][k + 1 + c] -= 2.0 * (v[r] * q[c] + q[r] * v[c]);
            }
        }
        off[k] = alpha;
        for r in 1..len {
            m[k + 1 + r][k] = 0.0;
            m[k][k + 1 + r] = 0.0;
        }
        m[k + 1][k] = alpha;
        m[k][k + 1] = alpha;
    }
    if n >= 2 {
        off[n - 2] = m[n - 1][n - 2];
    }
    let diag = (0..n).map(|i| m[i][i]).collect();
    (diag, off)
}

fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() + dd == dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_QL_SWEEPS {
                return Err(Error::invalid("symmetric eigensolver failed to converge"));
            }

            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let a = vec![vec![3.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, 2.0]];
        let ev = symmetric_eigenvalues(&a).unwrap();
        assert_eq!(ev, vec![3.0, 2.0, -1.0]);
    }

    #[test]
    fn two_by_two() {
        // [[2,1],[1,2]] -> {3, 1}
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let ev = symmetric_eigenvalues(&a).unwrap();
        assert!((ev[0] - 3.0).abs() < 1e-14);
        assert!((ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn circulant_ring_of_four() {
        let t = 1.0 / 3.0;
        let a = vec![vec![t, t, 0.0, t], vec![t, t, t, 0.0], vec![0.0, t, t, t], vec![t, 0.0, t, t]];
        let ev = symmetric_eigenvalues(&a).unwrap();
        let expect = [1.0, t, t, -t];
        for (got, want) in ev.iter().zip(expect) {
            assert!((got - want).abs() < 1e-14, "{ev:?}");
        }
    }

    #[test]
    fn agrees_with_nalgebra_on_random_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 3, 5, 9, 17, 40] {
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    a[i][j] = x;
                    a[j][i] = x;
                }
            }
            let ours = symmetric_eigenvalues(&a).unwrap();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
            let mut theirs: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in ours.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-11, "n={n}: {ours:?} vs {theirs:?}");
            }
        }
    }
}
