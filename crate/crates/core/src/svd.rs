//! Singular value decomposition by one-sided Jacobi rotations.
//!
//! All arithmetic runs in `f64` internally; results are rounded to `f32` at
//! the public boundary. Matrices at play here stay below 1024×1024, where
//! cyclic one-sided Jacobi is both accurate and fast enough.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Sweep limit and relative off-diagonal threshold for Jacobi convergence.
const MAX_SWEEPS: usize = 60;
const JACOBI_TOL: f64 = 1e-10;

/// Thin SVD: `u` is rows×k, `s` has k non-increasing non-negative entries,
/// `v` is cols×k, with k = min(rows, cols) and `m ≈ u · diag(s) · vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f32>,
    pub v: Matrix,
}

/// Column-major working matrix for the rotation kernels.
struct ColMat {
    m: usize,
    n: usize,
    a: Vec<f64>,
}

impl ColMat {
    fn zeros(m: usize, n: usize) -> Self {
        ColMat {
            m,
            n,
            a: vec![0.0; m * n],
        }
    }

    fn identity(n: usize) -> Self {
        let mut e = ColMat::zeros(n, n);
        for i in 0..n {
            e.a[i * n + i] = 1.0;
        }
        e
    }

    fn from_row_major(data: &[f64], m: usize, n: usize) -> Self {
        let mut c = ColMat::zeros(m, n);
        for r in 0..m {
            for j in 0..n {
                c.a[j * m + r] = data[r * n + j];
            }
        }
        c
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.a[j * self.m..(j + 1) * self.m]
    }

    fn dot(&self, i: usize, j: usize) -> f64 {
        let (ci, cj) = (self.col(i), self.col(j));
        ci.iter().zip(cj).map(|(&x, &y)| x * y).sum()
    }

    fn rotate(&mut self, i: usize, j: usize, c: f64, s: f64) {
        debug_assert!(i < j);
        let m = self.m;
        let (head, tail) = self.a.split_at_mut(j * m);
        let ci = &mut head[i * m..(i + 1) * m];
        let cj = &mut tail[..m];
        for k in 0..m {
            let x = ci[k];
            let y = cj[k];
            ci[k] = c * x - s * y;
            cj[k] = s * x + c * y;
        }
    }
}

/// Orthogonalizes the columns of `a`; accumulates right rotations into `v`
/// when given. On exit the columns of `a` are mutually orthogonal, with
/// norms equal to the singular values.
fn jacobi_orthogonalize(a: &mut ColMat, mut v: Option<&mut ColMat>) {
    let n = a.n;
    if n < 2 {
        return;
    }
    for _ in 0..MAX_SWEEPS {
        let mut max_off = 0.0f64;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let app = a.dot(i, i);
                let aqq = a.dot(j, j);
                if app == 0.0 || aqq == 0.0 {
                    continue;
                }
                let apq = a.dot(i, j);
                let off = apq.abs() / (app * aqq).sqrt();
                if off > max_off {
                    max_off = off;
                }
                if off <= JACOBI_TOL {
                    continue;
                }
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                a.rotate(i, j, c, s);
                if let Some(vm) = v.as_deref_mut() {
                    vm.rotate(i, j, c, s);
                }
            }
        }
        if max_off <= JACOBI_TOL {
            break;
        }
    }
}

/// Extracts (U, s, V) from an orthogonalized working matrix, sorted by
/// non-increasing singular value. Zero columns of U are replaced by an
/// orthonormal completion so U always has orthonormal columns.
fn extract(a: ColMat, v: ColMat) -> (ColMat, Vec<f64>, ColMat) {
    let (m, n) = (a.m, a.n);
    let norms: Vec<f64> = (0..n).map(|j| a.dot(j, j).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());

    let mut u = ColMat::zeros(m, n);
    let mut vs = ColMat::zeros(v.m, n);
    let mut s = vec![0.0f64; n];
    for (out_j, &in_j) in order.iter().enumerate() {
        s[out_j] = norms[in_j];
        let src = a.col(in_j);
        let dst = &mut u.a[out_j * m..(out_j + 1) * m];
        if norms[in_j] > 0.0 {
            for k in 0..m {
                dst[k] = src[k] / norms[in_j];
            }
        }
        let srcv = v.col(in_j);
        vs.a[out_j * vs.m..(out_j + 1) * vs.m].copy_from_slice(srcv);
    }

    // Orthonormal completion for exactly-zero singular directions.
    for (j, &sj) in s.iter().enumerate() {
        if sj > 0.0 {
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..m {
            let mut cand = vec![0.0f64; m];
            cand[e] = 1.0;
            for l in 0..n {
                if l == j {
                    continue;
                }
                let ul = u.col(l);
                let proj: f64 = ul.iter().zip(&cand).map(|(&x, &y)| x * y).sum();
                for k in 0..m {
                    cand[k] -= proj * ul[k];
                }
            }
            let nrm: f64 = cand.iter().map(|&x| x * x).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, cand));
            }
            if nrm > 0.9 {
                break;
            }
        }
        if let Some((nrm, cand)) = best {
            if nrm > 0.0 {
                let dst = &mut u.a[j * m..(j + 1) * m];
                for k in 0..m {
                    dst[k] = cand[k] / nrm;
                }
            }
        }
    }
    (u, s, vs)
}

fn svd_f64_tall(data: &[f64], rows: usize, cols: usize) -> (ColMat, Vec<f64>, ColMat) {
    debug_assert!(rows >= cols);
    let mut a = ColMat::from_row_major(data, rows, cols);
    let mut v = ColMat::identity(cols);
    jacobi_orthogonalize(&mut a, Some(&mut v));
    extract(a, v)
}

/// Full one-sided Jacobi SVD in `f64`. Returns row-major thin factors.
pub(crate) fn svd_f64(data: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (u, s, v) = if rows >= cols {
        svd_f64_tall(data, rows, cols)
    } else {
        // Work on the transpose and swap factors.
        let mut t = vec![0.0f64; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = data[r * cols + c];
            }
        }
        let (u_t, s, v_t) = svd_f64_tall(&t, cols, rows);
        (v_t, s, u_t)
    };
    let k = s.len();
    let mut u_rm = vec![0.0f64; rows * k];
    for j in 0..k {
        for r in 0..rows {
            u_rm[r * k + j] = u.col(j)[r];
        }
    }
    let mut v_rm = vec![0.0f64; cols * k];
    for j in 0..k {
        for r in 0..cols {
            v_rm[r * k + j] = v.col(j)[r];
        }
    }
    (u_rm, s, v_rm)
}

/// Singular values only, via the eigenvalues of the short-side Gram matrix.
/// Squaring halves the usable precision of the smallest values, which is
/// irrelevant for rank thresholding but rules this path out for
/// reconstruction-grade factors. Values below the route's resolution are
/// clipped to exact zero so rank-deficient inputs keep their zero tail.
pub(crate) fn singular_values_f64(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let short = rows.min(cols);
    let g = gram_short_side(data, rows, cols);
    let (eig, _) = psd_eigen(&g, short);
    let mut s: Vec<f64> = eig.into_iter().map(|e| e.max(0.0).sqrt()).collect();
    let cutoff = s.first().copied().unwrap_or(0.0) * 1e-7;
    for v in &mut s {
        if *v <= cutoff {
            *v = 0.0;
        }
    }
    s
}

/// Gram matrix of the shorter side: W·Wᵀ if rows ≤ cols, else Wᵀ·W.
fn gram_short_side(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    if rows <= cols {
        let mut g = vec![0.0f64; rows * rows];
        for i in 0..rows {
            for j in i..rows {
                let (ri, rj) = (
                    &data[i * cols..(i + 1) * cols],
                    &data[j * cols..(j + 1) * cols],
                );
                let d: f64 = ri.iter().zip(rj).map(|(&x, &y)| x * y).sum();
                g[i * rows + j] = d;
                g[j * rows + i] = d;
            }
        }
        g
    } else {
        let mut g = vec![0.0f64; cols * cols];
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            for i in 0..cols {
                let x = row[i];
                if x == 0.0 {
                    continue;
                }
                for j in i..cols {
                    g[i * cols + j] += x * row[j];
                }
            }
        }
        for i in 0..cols {
            for j in 0..i {
                g[i * cols + j] = g[j * cols + i];
            }
        }
        g
    }
}

/// Eigendecomposition of a symmetric PSD matrix via one-sided Jacobi (for a
/// PSD matrix the left singular vectors are the eigenvectors). Returns
/// eigenvalues in non-increasing order and eigenvectors as row-major n×n.
pub(crate) fn psd_eigen(g: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let (u, s, _) = svd_f64(g, n, n);
    (s, u)
}

/// Leading `r` left singular vectors of a row-major rows×cols matrix,
/// computed from the rows-side Gram matrix. Returned row-major rows×r.
pub(crate) fn leading_left_vectors(data: &[f64], rows: usize, cols: usize, r: usize) -> Vec<f64> {
    debug_assert!(r <= rows);
    let mut g = vec![0.0f64; rows * rows];
    for i in 0..rows {
        for j in i..rows {
            let (ri, rj) = (
                &data[i * cols..(i + 1) * cols],
                &data[j * cols..(j + 1) * cols],
            );
            let d: f64 = ri.iter().zip(rj).map(|(&x, &y)| x * y).sum();
            g[i * rows + j] = d;
            g[j * rows + i] = d;
        }
    }
    let (_, vecs) = psd_eigen(&g, rows);
    let mut out = vec![0.0f64; rows * r];
    for row in 0..rows {
        out[row * r..(row + 1) * r].copy_from_slice(&vecs[row * rows..row * rows + r]);
    }
    out
}

/// Thin SVD of a matrix. Singular values are non-negative and non-increasing;
/// both factor matrices have orthonormal columns.
pub fn svd(m: &Matrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    let data: Vec<f64> = m.data().iter().map(|&v| v as f64).collect();
    let (u, s, v) = svd_f64(&data, m.rows(), m.cols());
    let k = s.len();
    Ok(Svd {
        u: Matrix::new(m.rows(), k, u.into_iter().map(|x| x as f32).collect())?,
        s: s.into_iter().map(|x| x as f32).collect(),
        v: Matrix::new(m.cols(), k, v.into_iter().map(|x| x as f32).collect())?,
    })
}
