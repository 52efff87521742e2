//! Factorization algorithms that produce compressed weights from standard
//! weights.
//!
//! - [`hooi_tucker2`]: Tucker-2 factorization of a 4-way kernel across its
//!   channel modes by higher-order orthogonal iteration, initialized from
//!   truncated SVDs of the unfoldings. Spatial modes are never decomposed.
//! - [`evbmf_rank`]: global analytic rank estimation from the singular
//!   spectrum, with the noise variance found by one-dimensional minimization
//!   of the empirical variational objective.
//! - [`merge_depthsep`]: contraction of depthwise and pointwise filters into
//!   an equivalent single convolution kernel.
//! - [`select_bottleneck_rank`]: bottleneck depth for replacing a pointwise
//!   stage, the larger of the two channel-mode rank estimates.

use crate::error::{Error, Result};
use crate::layers::{LayerSpec, LayerWeights, WeightRole};
use crate::svd;
use crate::tensor::{mode_multiply, Matrix, Tensor};

/// Iteration limits for the orthogonal iteration.
const HOOI_MAX_ITERS: usize = 100;
const HOOI_TOL: f64 = 1e-6;

/// Scaled threshold ratio for the analytic rank solution.
const EVBMF_TAU_COEFF: f64 = 2.5129;

/// Result of a Tucker-2 factorization of a K×K×C×N kernel.
///
/// `proj_in` (C×R1) has orthonormal columns; `proj_out` (R2×N) is stored in
/// forward orientation, so orthonormality holds for its rows. The kernel is
/// approximated by `core ×_2 proj_in ×_3 proj_outᵀ`.
#[derive(Debug, Clone)]
pub struct TuckerFactors {
    pub proj_in: Matrix,
    pub core: Tensor,
    pub proj_out: Matrix,
    /// Relative Frobenius error of the reconstruction from the stored
    /// (rounded) factors.
    pub reconstruction_error: f64,
    /// Relative reconstruction error after each completed iteration.
    pub error_history: Vec<f64>,
}

impl TuckerFactors {
    pub fn ranks(&self) -> (usize, usize) {
        (self.proj_in.cols(), self.proj_out.rows())
    }

    /// Expands the factors back into a full K×K×C×N kernel.
    pub fn reconstruct(&self) -> Result<Tensor> {
        let up = mode_multiply(&self.core, &self.proj_in, 2)?;
        mode_multiply(&up, &self.proj_out.transpose(), 3)
    }
}

/// Internal f64 tensor for the iteration loop.
struct T64 {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl T64 {
    fn from_tensor(t: &Tensor) -> T64 {
        T64 {
            dims: t.dims().to_vec(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    fn norm(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum::<f64>().sqrt()
    }

    /// Mode-n matricization with the same cyclic column convention as
    /// [`crate::tensor::unfold`]. Returns (row-major data, rows, cols).
    fn unfold(&self, mode: usize) -> (Vec<f64>, usize, usize) {
        let d = self.dims.len();
        let rows = self.dims[mode];
        let cols = self.data.len() / rows;
        let order: Vec<usize> = (1..d).map(|k| (mode + k) % d).collect();
        let mut out = vec![0.0f64; self.data.len()];
        let mut idx = vec![0usize; d];
        for &v in &self.data {
            let mut col = 0;
            for &ax in &order {
                col = col * self.dims[ax] + idx[ax];
            }
            out[idx[mode] * cols + col] = v;
            for ax in (0..d).rev() {
                idx[ax] += 1;
                if idx[ax] < self.dims[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        (out, rows, cols)
    }

    /// Contracts a row-major `r × dims[mode]` matrix against `mode`.
    fn mode_mul(&self, m: &[f64], r: usize, mode: usize) -> T64 {
        let d = self.dims.len();
        let extent = self.dims[mode];
        debug_assert_eq!(m.len(), r * extent);
        let mut new_dims = self.dims.clone();
        new_dims[mode] = r;
        let total: usize = new_dims.iter().product();
        let mut out = vec![0.0f64; total];

        let dst_stride: Vec<usize> = {
            let mut s = vec![1usize; d];
            for ax in (0..d - 1).rev() {
                s[ax] = s[ax + 1] * new_dims[ax + 1];
            }
            s
        };

        let mut idx = vec![0usize; d];
        for flat in 0..self.data.len() {
            let v = self.data[flat];
            if v != 0.0 {
                let i = idx[mode];
                let mut base = 0usize;
                for ax in 0..d {
                    if ax != mode {
                        base += idx[ax] * dst_stride[ax];
                    }
                }
                for out_r in 0..r {
                    out[base + out_r * dst_stride[mode]] += m[out_r * extent + i] * v;
                }
            }
            for ax in (0..d).rev() {
                idx[ax] += 1;
                if idx[ax] < self.dims[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        T64 {
            dims: new_dims,
            data: out,
        }
    }

    fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(
            self.dims.clone(),
            self.data.iter().map(|&v| v as f32).collect(),
        )
    }
}

/// Transposes a row-major rows×cols matrix held as a flat slice.
fn transpose_flat(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Tucker-2 factorization of a K×K×C×N kernel at ranks (R1, R2) by
/// higher-order orthogonal iteration. Factors are initialized from the
/// truncated SVDs of the channel-mode unfoldings; each iteration refreshes
/// both factors and stops when the relative change of the core norm drops
/// below 1e-6, or after 100 iterations. The reconstruction error is
/// non-increasing over iterations.
pub fn hooi_tucker2(kernel: &Tensor, r1: usize, r2: usize) -> Result<TuckerFactors> {
    if kernel.rank() != 4 {
        return Err(Error::shape(format!(
            "expected a 4-way kernel, got {} modes",
            kernel.rank()
        )));
    }
    let c = kernel.dims()[2];
    let n = kernel.dims()[3];
    if r1 == 0 || r1 > c {
        return Err(Error::invalid(format!("rank R1={r1} outside 1..={c}")));
    }
    if r2 == 0 || r2 > n {
        return Err(Error::invalid(format!("rank R2={r2} outside 1..={n}")));
    }
    if !kernel.is_finite() {
        return Err(Error::NonFinite("kernel".into()));
    }

    let t = T64::from_tensor(kernel);
    let norm_t = t.norm();

    // Truncated-SVD start on the output-channel unfolding; the first
    // iteration derives the input-side factor from it, so only one side
    // needs initializing.
    let (u3, rows3, cols3) = t.unfold(3);
    let mut b = svd::leading_left_vectors(&u3, rows3, cols3, r2); // N×R2
    let mut a: Vec<f64> = Vec::new(); // C×R1, set in the first iteration

    let mut history = Vec::new();
    let mut prev_core_norm = f64::NAN;
    let mut core64 = None;
    for _ in 0..HOOI_MAX_ITERS {
        // Refresh the input-side factor with the output side projected away.
        let bt = transpose_flat(&b, n, r2);
        let proj_b = t.mode_mul(&bt, r2, 3); // K,K,C,R2
        let (w, rows, cols) = proj_b.unfold(2);
        a = svd::leading_left_vectors(&w, rows, cols, r1);

        // Refresh the output-side factor with the new input side applied.
        let at = transpose_flat(&a, c, r1);
        let proj_a = t.mode_mul(&at, r1, 2); // K,K,R1,N
        let (w, rows, cols) = proj_a.unfold(3);
        b = svd::leading_left_vectors(&w, rows, cols, r2);

        let bt = transpose_flat(&b, n, r2);
        let core = proj_a.mode_mul(&bt, r2, 3); // K,K,R1,R2
        let core_norm = core.norm();
        let err = if norm_t == 0.0 {
            0.0
        } else {
            ((norm_t * norm_t - core_norm * core_norm).max(0.0)).sqrt() / norm_t
        };
        history.push(err);
        core64 = Some(core);

        if prev_core_norm.is_finite() {
            let change = (core_norm - prev_core_norm).abs();
            if change < HOOI_TOL * prev_core_norm.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev_core_norm = core_norm;
    }

    let core = core64.expect("at least one iteration ran").to_tensor()?;
    let proj_in = Matrix::new(c, r1, a.iter().map(|&v| v as f32).collect())?;
    let proj_out_t = transpose_flat(&b, n, r2);
    let proj_out = Matrix::new(r2, n, proj_out_t.iter().map(|&v| v as f32).collect())?;

    let factors = TuckerFactors {
        proj_in,
        core,
        proj_out,
        reconstruction_error: 0.0,
        error_history: history,
    };
    let rec = factors.reconstruct()?;
    let err = rec_error(kernel, &rec);
    Ok(TuckerFactors {
        reconstruction_error: err,
        ..factors
    })
}

fn rec_error(original: &Tensor, reconstructed: &Tensor) -> f64 {
    let norm = original.frobenius_norm();
    let diff: f64 = original
        .data()
        .iter()
        .zip(reconstructed.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Analytic rank estimate of a matrix.
#[derive(Debug, Clone)]
pub struct RankEstimate {
    pub rank: usize,
    /// Estimated noise variance (0 for an all-zero input).
    pub noise_variance: f64,
    /// Singular values surviving the analytic threshold, non-increasing.
    pub retained_singular_values: Vec<f64>,
}

/// Variational objective for a candidate noise variance, over the non-zero
/// part of the spectrum. Exactly-zero singular values act as a truncated
/// tail: each contributes `ln σ²` (up to a constant), pulling the estimate
/// toward the lower bracket for rank-deficient inputs.
fn evbmf_objective(sigma2: f64, l: usize, m: usize, s: &[f64], xubar: f64) -> f64 {
    let alpha = l as f64 / m as f64;
    let mut obj = 0.0f64;
    let mut dropped = 0usize;
    for &sv in s {
        if sv == 0.0 {
            dropped += 1;
            continue;
        }
        let x = sv * sv / (m as f64 * sigma2);
        if x > xubar {
            let tau =
                0.5 * (x - (1.0 + alpha) + ((x - (1.0 + alpha)).powi(2) - 4.0 * alpha).sqrt());
            obj += x - tau + ((tau + 1.0) / x).ln() + alpha * (tau / alpha + 1.0).ln();
        } else {
            obj += x - x.ln();
        }
    }
    obj + dropped as f64 * sigma2.ln()
}

/// Golden-section minimization after a coarse log-spaced scan that brackets
/// the global minimum on [lo, hi].
fn minimize_scalar(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo > 0.0 && hi > lo);
    const SCAN: usize = 64;
    let ratio = (hi / lo).powf(1.0 / SCAN as f64);
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..=SCAN {
        let x = lo * ratio.powi(i as i32);
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = lo * ratio.powi(best_i.saturating_sub(1) as i32);
    let mut b = (lo * ratio.powi((best_i + 1).min(SCAN) as i32)).min(hi);
    if a >= b {
        return a;
    }
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a) > 1e-8 * b {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Estimates the rank of a matrix from its singular spectrum: the noise
/// variance minimizing the variational objective fixes an analytic threshold
/// and the count of singular values above it is the rank. An all-zero matrix
/// yields rank 0.
pub fn evbmf_rank(mat: &Matrix) -> Result<RankEstimate> {
    if !mat.is_finite() {
        return Err(Error::NonFinite("rank estimation input".into()));
    }
    // Work with L <= M.
    let (l, m) = if mat.rows() <= mat.cols() {
        (mat.rows(), mat.cols())
    } else {
        (mat.cols(), mat.rows())
    };
    let data: Vec<f64> = mat.data().iter().map(|&v| v as f64).collect();
    let mut s = svd::singular_values_f64(&data, mat.rows(), mat.cols());
    s.truncate(l);

    let total_sq: f64 = s.iter().map(|&v| v * v).sum();
    if total_sq == 0.0 {
        return Ok(RankEstimate {
            rank: 0,
            noise_variance: 0.0,
            retained_singular_values: Vec::new(),
        });
    }

    let alpha = l as f64 / m as f64;
    let tau_ubar = EVBMF_TAU_COEFF * alpha.sqrt();
    let xubar = (1.0 + tau_ubar) * (1.0 + alpha / tau_ubar);

    let upper = total_sq / (l as f64 * m as f64);
    let eh_ub = ((l as f64 / (1.0 + alpha)).ceil() as isize - 1).min(l as isize) - 1;
    let idx = (eh_ub + 1).max(0) as usize;
    let tail_mean = s[idx..].iter().map(|&v| v * v).sum::<f64>() / (l - idx) as f64 / m as f64;
    let mut lower = (s[idx] * s[idx] / (m as f64 * xubar)).max(tail_mean);
    if lower <= 0.0 {
        lower = upper * 1e-12;
    }

    let sigma2 = if lower >= upper {
        upper
    } else {
        minimize_scalar(|x| evbmf_objective(x, l, m, &s, xubar), lower, upper)
    };

    let threshold = (m as f64 * sigma2 * xubar).sqrt();
    let rank = s.iter().take_while(|&&v| v > threshold).count();
    Ok(RankEstimate {
        rank,
        noise_variance: sigma2,
        retained_singular_values: s[..rank].to_vec(),
    })
}

/// A factorization of one standard layer, with the rank estimates recorded
/// when rank selection was automatic.
#[derive(Debug, Clone)]
pub struct LayerDecomposition {
    pub factors: TuckerFactors,
    /// (input-channel estimate, output-channel estimate), when automatic.
    pub rank_estimates: Option<(RankEstimate, RankEstimate)>,
}

/// Factorizes a standard K×K×C×N kernel. With explicit ranks this is
/// [`hooi_tucker2`] directly; otherwise R1 and R2 come from the rank
/// estimates of the input-channel and output-channel unfoldings, each
/// clamped to at least 1.
pub fn decompose_layer(
    kernel: &Tensor,
    ranks: Option<(usize, usize)>,
) -> Result<LayerDecomposition> {
    if kernel.rank() != 4 {
        return Err(Error::shape(format!(
            "expected a 4-way kernel, got {} modes",
            kernel.rank()
        )));
    }
    match ranks {
        Some((r1, r2)) => Ok(LayerDecomposition {
            factors: hooi_tucker2(kernel, r1, r2)?,
            rank_estimates: None,
        }),
        None => {
            let est_in = evbmf_rank(&crate::tensor::unfold(kernel, 2)?)?;
            let est_out = evbmf_rank(&crate::tensor::unfold(kernel, 3)?)?;
            let r1 = est_in.rank.max(1);
            let r2 = est_out.rank.max(1);
            Ok(LayerDecomposition {
                factors: hooi_tucker2(kernel, r1, r2)?,
                rank_estimates: Some((est_in, est_out)),
            })
        }
    }
}

/// Contracts depthwise filters (K×K×C) and a pointwise map (C×N) into the
/// equivalent single convolution kernel: `merged[k1,k2,i,n] = d[k1,k2,i] ·
/// p[i,n]`. Only unit width multipliers contract this way.
pub fn merge_depthsep(depthwise: &Tensor, pointwise: &Matrix) -> Result<Tensor> {
    if depthwise.rank() != 3 {
        return Err(Error::shape(format!(
            "depthwise filters must be 3-way, got {} modes",
            depthwise.rank()
        )));
    }
    let k = depthwise.dims()[0];
    let c = depthwise.dims()[2];
    if depthwise.dims()[1] != k {
        return Err(Error::shape("depthwise filters must be square"));
    }
    if pointwise.rows() != c {
        return Err(Error::shape(format!(
            "pointwise has {} rows, depthwise has {c} channels",
            pointwise.rows()
        )));
    }
    let n = pointwise.cols();
    Tensor::from_fn(vec![k, k, c, n], |idx| {
        depthwise.get(&[idx[0], idx[1], idx[2]]) * pointwise.get(idx[2], idx[3])
    })
}

/// Spec-aware variant of [`merge_depthsep`] for a depthwise-separable layer.
pub fn merge_depthsep_layer(spec: &LayerSpec, weights: &LayerWeights) -> Result<Tensor> {
    if spec.width_multiplier != 1 {
        return Err(Error::UnsupportedConfig(format!(
            "cannot contract a width multiplier of {}",
            spec.width_multiplier
        )));
    }
    let depthwise = weights
        .get(WeightRole::Depthwise)
        .ok_or_else(|| Error::shape("missing depthwise weights"))?;
    let pointwise = weights
        .get(WeightRole::Pointwise)
        .ok_or_else(|| Error::shape("missing pointwise weights"))?;
    merge_depthsep(depthwise, &Matrix::from_tensor(pointwise)?)
}

/// Whether a rank-R bottleneck of a C×N pointwise stage reduces parameters:
/// `C·N > C·R + R·N`.
pub fn bottleneck_compresses(c: usize, n: usize, r: usize) -> bool {
    (c as u64) * (n as u64) > (c as u64) * (r as u64) + (r as u64) * (n as u64)
}

/// Selected bottleneck depth for a pointwise stage.
#[derive(Debug, Clone)]
pub struct BottleneckChoice {
    /// max of the two channel-mode rank estimates, clamped to at least 1.
    pub rank: usize,
    /// Whether the bottleneck at this rank reduces parameters.
    pub compresses: bool,
    pub rank_in: RankEstimate,
    pub rank_out: RankEstimate,
}

/// Picks the bottleneck depth for a C×N pointwise map: the larger of the
/// rank estimates of the matrix and its transpose, clamped to at least 1,
/// together with the parameter-compression condition at that depth.
pub fn select_bottleneck_rank(pointwise: &Matrix) -> Result<BottleneckChoice> {
    let rank_in = evbmf_rank(pointwise)?;
    let rank_out = evbmf_rank(&pointwise.transpose())?;
    let rank = rank_in.rank.max(rank_out.rank).max(1);
    Ok(BottleneckChoice {
        rank,
        compresses: bottleneck_compresses(pointwise.rows(), pointwise.cols(), rank),
        rank_in,
        rank_out,
    })
}

/// Splits a pointwise map (M×N) into bottleneck factors (M×R, R×N) by
/// truncated SVD; at full rank the product reproduces the input.
pub fn split_pointwise(pointwise: &Matrix, rank: usize) -> Result<(Matrix, Matrix)> {
    let k = pointwise.rows().min(pointwise.cols());
    if rank == 0 || rank > k {
        return Err(Error::invalid(format!("split rank {rank} outside 1..={k}")));
    }
    let dec = svd::svd(pointwise)?;
    let b_in = Matrix::from_fn(pointwise.rows(), rank, |r, j| dec.u.get(r, j) * dec.s[j])?;
    let b_out = Matrix::from_fn(rank, pointwise.cols(), |j, c| dec.v.get(c, j))?;
    Ok((b_in, b_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{conv2d_forward, depthsep_forward, FeatureMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Orthonormal C×R factor from the SVD of a random matrix.
    fn random_orthonormal(rows: usize, cols: usize, seed: u64) -> Matrix {
        let m = Matrix::random(rows, rows.max(cols), &mut rng(seed)).unwrap();
        let dec = svd::svd(&m).unwrap();
        Matrix::from_fn(rows, cols, |r, c| dec.u.get(r, c)).unwrap()
    }

    fn exact_rank_kernel(k: usize, c: usize, n: usize, r1: usize, r2: usize, seed: u64) -> Tensor {
        let core = Tensor::random(vec![k, k, r1, r2], &mut rng(seed)).unwrap();
        let a = random_orthonormal(c, r1, seed + 1); // C×R1
        let b = random_orthonormal(n, r2, seed + 2); // N×R2
        let up = mode_multiply(&core, &a, 2).unwrap();
        mode_multiply(&up, &b, 3).unwrap()
    }

    #[test]
    fn hooi_recovers_exact_rank_kernel() {
        let kernel = exact_rank_kernel(3, 12, 10, 4, 5, 30);
        let f = hooi_tucker2(&kernel, 4, 5).unwrap();
        assert!(
            f.reconstruction_error <= 1e-5,
            "err {}",
            f.reconstruction_error
        );
        assert_eq!(f.ranks(), (4, 5));
    }

    #[test]
    fn hooi_full_rank_is_exact() {
        let kernel = Tensor::random(vec![3, 3, 6, 5], &mut rng(31)).unwrap();
        let f = hooi_tucker2(&kernel, 6, 5).unwrap();
        assert!(
            f.reconstruction_error <= 1e-5,
            "err {}",
            f.reconstruction_error
        );
    }

    #[test]
    fn hooi_zero_kernel() {
        let kernel = Tensor::zeros(vec![3, 3, 4, 4]).unwrap();
        let f = hooi_tucker2(&kernel, 2, 2).unwrap();
        assert!(f.core.data().iter().all(|&v| v == 0.0));
        assert_eq!(f.reconstruction_error, 0.0);
    }

    #[test]
    fn hooi_error_history_non_increasing() {
        let kernel = Tensor::random(vec![3, 3, 10, 8], &mut rng(32)).unwrap();
        let f = hooi_tucker2(&kernel, 4, 3).unwrap();
        // Squared error is what the iteration maximizes; slack covers the
        // f64 rounding floor of the norm bookkeeping.
        for w in f.error_history.windows(2) {
            assert!(
                w[1] * w[1] <= w[0] * w[0] + 1e-12,
                "history increased: {:?}",
                w
            );
        }
    }

    #[test]
    fn hooi_error_decreases_with_rank() {
        let kernel = Tensor::random(vec![3, 3, 10, 8], &mut rng(33)).unwrap();
        let lo = hooi_tucker2(&kernel, 4, 3).unwrap().reconstruction_error;
        let hi = hooi_tucker2(&kernel, 5, 3).unwrap().reconstruction_error;
        assert!(hi <= lo + 1e-6, "rank 5 err {hi} vs rank 4 err {lo}");
    }

    #[test]
    fn hooi_rejects_bad_ranks() {
        let kernel = Tensor::zeros(vec![3, 3, 4, 4]).unwrap();
        assert!(hooi_tucker2(&kernel, 0, 2).is_err());
        assert!(hooi_tucker2(&kernel, 2, 5).is_err());
    }

    #[test]
    fn hooi_factor_orthonormality() {
        let kernel = Tensor::random(vec![3, 3, 8, 6], &mut rng(34)).unwrap();
        let f = hooi_tucker2(&kernel, 3, 2).unwrap();
        // Columns of proj_in.
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0f64;
                for r in 0..8 {
                    acc += f.proj_in.get(r, i) as f64 * f.proj_in.get(r, j) as f64;
                }
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((acc - target).abs() <= 1e-4);
            }
        }
        // Rows of proj_out (forward orientation).
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0f64;
                for c in 0..6 {
                    acc += f.proj_out.get(i, c) as f64 * f.proj_out.get(j, c) as f64;
                }
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((acc - target).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn evbmf_zero_matrix_rank_zero() {
        let m = Matrix::zeros(10, 20).unwrap();
        let est = evbmf_rank(&m).unwrap();
        assert_eq!(est.rank, 0);
        assert!(est.retained_singular_values.is_empty());
    }

    #[test]
    fn evbmf_recovers_planted_rank() {
        let mut g = rng(40);
        let a = Matrix::random(100, 5, &mut g).unwrap();
        let b = Matrix::random(200, 5, &mut g).unwrap();
        let noise = Matrix::random(100, 200, &mut g).unwrap();
        let y = Matrix::from_fn(100, 200, |r, c| {
            let mut acc = 0.0f32;
            for k in 0..5 {
                acc += a.get(r, k) * b.get(c, k);
            }
            acc + 0.01 * noise.get(r, c)
        })
        .unwrap();
        let est = evbmf_rank(&y).unwrap();
        assert_eq!(est.rank, 5);
        assert_eq!(est.retained_singular_values.len(), 5);
        assert!(est.noise_variance > 0.0);
    }

    #[test]
    fn evbmf_identity_characterization() {
        // All-equal singular values carry no separable signal; the analytic
        // solution assigns everything to noise. Frozen against an
        // independent implementation of the same estimator.
        let m = Matrix::identity(50).unwrap();
        let est = evbmf_rank(&m).unwrap();
        assert_eq!(est.rank, 0);
        assert!((est.noise_variance - 0.02).abs() <= 1e-9);
    }

    #[test]
    fn evbmf_exact_rank_no_noise() {
        // Rank-deficient with a numerically zero tail.
        let mut g = rng(52);
        let a = Matrix::random(128, 16, &mut g).unwrap();
        let b = Matrix::random(256, 16, &mut g).unwrap();
        let y = Matrix::from_fn(128, 256, |r, c| {
            let mut acc = 0.0f32;
            for k in 0..16 {
                acc += a.get(r, k) * b.get(c, k);
            }
            acc
        })
        .unwrap();
        assert_eq!(evbmf_rank(&y).unwrap().rank, 16);
    }

    #[test]
    fn evbmf_transpose_invariant() {
        let mut g = rng(41);
        let a = Matrix::random(30, 3, &mut g).unwrap();
        let b = Matrix::random(50, 3, &mut g).unwrap();
        let y = Matrix::from_fn(30, 50, |r, c| {
            let mut acc = 0.0f32;
            for k in 0..3 {
                acc += a.get(r, k) * b.get(c, k);
            }
            acc + 0.02 * ((r * 53 + c * 7) as f32).sin()
        })
        .unwrap();
        let e1 = evbmf_rank(&y).unwrap();
        let e2 = evbmf_rank(&y.transpose()).unwrap();
        assert_eq!(e1.rank.max(e2.rank), e2.rank.max(e1.rank));
        assert_eq!(e1.rank, e2.rank);
    }

    #[test]
    fn decompose_explicit_full_rank_exact() {
        let kernel = Tensor::random(vec![3, 3, 5, 4], &mut rng(42)).unwrap();
        let d = decompose_layer(&kernel, Some((5, 4))).unwrap();
        assert!(d.factors.reconstruction_error <= 1e-5);
        assert!(d.rank_estimates.is_none());
    }

    #[test]
    fn decompose_estimates_planted_ranks() {
        let clean = exact_rank_kernel(3, 20, 24, 4, 6, 43);
        let mut noisy = clean.clone();
        let mut g = rng(44);
        let noise = Tensor::random(clean.dims().to_vec(), &mut g).unwrap();
        let scale = 1e-3 * clean.frobenius_norm() as f32 / noise.frobenius_norm() as f32;
        for (v, n) in noisy.data_mut().iter_mut().zip(noise.data()) {
            *v += scale * n;
        }
        let d = decompose_layer(&noisy, None).unwrap();
        assert_eq!(d.factors.ranks(), (4, 6));
        assert!(d.factors.reconstruction_error <= 1e-2);
        let (est_in, est_out) = d.rank_estimates.unwrap();
        assert_eq!(est_in.rank, 4);
        assert_eq!(est_out.rank, 6);
    }

    #[test]
    fn merge_single_channel_scales_filter() {
        let depthwise = Tensor::random(vec![3, 3, 1], &mut rng(45)).unwrap();
        let pointwise = Matrix::new(1, 4, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let merged = merge_depthsep(&depthwise, &pointwise).unwrap();
        for n in 0..4 {
            for kh in 0..3 {
                for kw in 0..3 {
                    let expect = depthwise.get(&[kh, kw, 0]) * pointwise.get(0, n);
                    assert_eq!(merged.get(&[kh, kw, 0, n]), expect);
                }
            }
        }
    }

    #[test]
    fn merge_identity_pointwise_is_diagonal_embedding() {
        let c = 3;
        let depthwise = Tensor::random(vec![3, 3, c], &mut rng(46)).unwrap();
        let eye = Matrix::identity(c).unwrap();
        let merged = merge_depthsep(&depthwise, &eye).unwrap();
        for i in 0..c {
            for n in 0..c {
                for kh in 0..3 {
                    for kw in 0..3 {
                        let expect = if i == n {
                            depthwise.get(&[kh, kw, i])
                        } else {
                            0.0
                        };
                        assert_eq!(merged.get(&[kh, kw, i, n]), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn merge_forward_equivalence() {
        let (c, n) = (8, 16);
        let spec = LayerSpec::depthsep(3, c, n, 1, 1, 1).unwrap();
        let w = LayerWeights::random(&spec, &mut rng(47)).unwrap();
        let x = FeatureMap::random(10, 10, c, &mut rng(48)).unwrap();
        let got = depthsep_forward(&x, &spec, &w).unwrap();

        let merged = merge_depthsep_layer(&spec, &w).unwrap();
        let std_spec = LayerSpec::standard(3, c, n, 1, 1).unwrap();
        let std_w =
            LayerWeights::from_pairs(&std_spec, vec![(WeightRole::Kernel, merged)]).unwrap();
        let expect = conv2d_forward(&x, &std_spec, &std_w).unwrap();
        assert!(got.relative_error(&expect) <= 1e-4);
    }

    #[test]
    fn merge_rejects_width_multiplier() {
        let spec = LayerSpec::depthsep(3, 4, 8, 1, 1, 2).unwrap();
        let w = LayerWeights::zeros(&spec).unwrap();
        assert!(matches!(
            merge_depthsep_layer(&spec, &w),
            Err(Error::UnsupportedConfig(_))
        ));
    }

    #[test]
    fn bottleneck_rank_one_outer_product() {
        let mut g = rng(49);
        let u = Matrix::random(24, 1, &mut g).unwrap();
        let v = Matrix::random(32, 1, &mut g).unwrap();
        let noise = Matrix::random(24, 32, &mut g).unwrap();
        let p = Matrix::from_fn(24, 32, |r, c| {
            u.get(r, 0) * v.get(c, 0) + 1e-3 * noise.get(r, c)
        })
        .unwrap();
        let choice = select_bottleneck_rank(&p).unwrap();
        assert_eq!(choice.rank, 1);
        assert!(choice.compresses);
    }

    #[test]
    fn bottleneck_zero_matrix_clamps_to_one() {
        let p = Matrix::zeros(8, 8).unwrap();
        let choice = select_bottleneck_rank(&p).unwrap();
        assert_eq!(choice.rank, 1);
        assert_eq!(choice.compresses, bottleneck_compresses(8, 8, 1));
        assert!(choice.compresses);
    }

    #[test]
    fn bottleneck_condition_for_layer5_embedding() {
        // 64·128 = 8192 against 64·33 + 33·128 = 6336.
        assert!(bottleneck_compresses(64, 128, 33));
        assert!(!bottleneck_compresses(64, 128, 64));
    }

    #[test]
    fn tdw_with_split_pointwise_matches_depthsep() {
        // Full-rank SVD truncation of the pointwise stage leaves the layer
        // equivalent to the depthwise-separable original.
        use crate::layers::tdw_forward;

        let (c, n) = (6usize, 9usize);
        let pointwise = Matrix::random(c, n, &mut rng(53)).unwrap();
        let (b_in, b_out) = split_pointwise(&pointwise, c).unwrap();

        let ds_spec = LayerSpec::depthsep(3, c, n, 1, 1, 1).unwrap();
        let depthwise = Tensor::random(vec![3, 3, c], &mut rng(54)).unwrap();
        let ds_w = LayerWeights::from_pairs(
            &ds_spec,
            vec![
                (WeightRole::Depthwise, depthwise.clone()),
                (WeightRole::Pointwise, pointwise.to_tensor()),
            ],
        )
        .unwrap();

        let tdw_spec = LayerSpec::tdw(3, c, n, 1, 1, 1, c).unwrap();
        let tdw_w = LayerWeights::from_pairs(
            &tdw_spec,
            vec![
                (WeightRole::Depthwise, depthwise),
                (WeightRole::BottleneckIn, b_in.to_tensor()),
                (WeightRole::BottleneckOut, b_out.to_tensor()),
            ],
        )
        .unwrap();

        let x = FeatureMap::random(7, 7, c, &mut rng(55)).unwrap();
        let got = tdw_forward(&x, &tdw_spec, &tdw_w).unwrap();
        let expect = depthsep_forward(&x, &ds_spec, &ds_w).unwrap();
        assert!(got.relative_error(&expect) <= 1e-5);
    }

    #[test]
    fn split_pointwise_full_rank_reproduces() {
        let p = Matrix::random(6, 9, &mut rng(50)).unwrap();
        let (b_in, b_out) = split_pointwise(&p, 6).unwrap();
        let back = b_in.matmul(&b_out).unwrap();
        let diff: f64 = p
            .data()
            .iter()
            .zip(back.data())
            .map(|(&x, &y)| ((x - y) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff / p.frobenius_norm() <= 1e-5);
    }
}
