//! Dense tensors and matrices with mode-n matricization and mode products.
//!
//! Storage is always row-major `f32` (last index fastest). Tensors carry one
//! to four modes; matrices are a separate two-index type used for factor
//! matrices and matricized views.
//!
//! Unfolding convention: `unfold(t, m)` maps element `t[i_0, …, i_{D-1}]` to
//! row `i_m` and column given by the row-major offset of the remaining
//! indices taken in cyclic order starting after the unfolded mode, i.e.
//! `(i_{m+1}, …, i_{D-1}, i_0, …, i_{m-1})`. `fold` inverts this exactly, so
//! `fold(unfold(t, m), m, dims)` is bit-identical to `t` for every mode.

use crate::error::{Error, Result};
use rand::Rng;

/// Dense N-way array, 1 to 4 modes, row-major `f32` storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor from explicit dims and row-major data.
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::invalid(format!(
                "tensor must have 1..=4 modes, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("zero-sized mode in dims {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} require {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        Tensor::new(dims, vec![0.0; n])
    }

    /// Fills a tensor from a generator over multi-indices.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f32) -> Result<Self> {
        let mut t = Tensor::zeros(dims)?;
        let mut idx = vec![0usize; t.rank()];
        for i in 0..t.data.len() {
            t.data[i] = f(&idx);
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < t.dims[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Ok(t)
    }

    /// Standard-normal entries from the supplied generator.
    pub fn random(dims: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| {
                // Box-Muller keeps us off rand_distr for one distribution.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
            })
            .collect();
        Tensor::new(dims, data)
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        for (ax, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.dims[ax]);
            off = off * self.dims[ax] + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f32 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f32) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Relative Frobenius distance to another tensor of the same dims.
    pub fn relative_error(&self, other: &Tensor) -> f64 {
        assert_eq!(self.dims, other.dims);
        let diff = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }
}

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("empty matrix {rows}x{cols}")));
        }
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "{rows}x{cols} requires {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Matrix::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::new(rows, cols, data)
    }

    pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Self> {
        let t = Tensor::random(vec![rows, cols], rng)?;
        Matrix::new(rows, cols, t.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0f32; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    /// Matrix product with `f64` accumulation.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = vec![0.0f32; self.rows * rhs.cols];
        for r in 0..self.rows {
            let mut acc = vec![0.0f64; rhs.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k] as f64;
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (c, &b) in row.iter().enumerate() {
                    acc[c] += a * b as f64;
                }
            }
            for c in 0..rhs.cols {
                out[r * rhs.cols + c] = acc[c] as f32;
            }
        }
        Matrix::new(self.rows, rhs.cols, out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// View as a 2-way tensor (copies).
    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.rows, self.cols],
            data: self.data.clone(),
        }
    }

    /// Interprets a 2-way tensor as a matrix.
    pub fn from_tensor(t: &Tensor) -> Result<Matrix> {
        if t.rank() != 2 {
            return Err(Error::shape(format!(
                "expected a 2-way tensor, got {} modes",
                t.rank()
            )));
        }
        Matrix::new(t.dims[0], t.dims[1], t.data.clone())
    }
}

/// Mode-n matricization. Rows index the unfolded mode; columns run over the
/// remaining modes in cyclic order starting at `mode + 1` (see module docs).
pub fn unfold(t: &Tensor, mode: usize) -> Result<Matrix> {
    if mode >= t.rank() {
        return Err(Error::invalid(format!(
            "mode {mode} out of range for a {}-way tensor",
            t.rank()
        )));
    }
    let d = t.rank();
    let rows = t.dims[mode];
    let cols = t.len() / rows;
    let order: Vec<usize> = (1..d).map(|k| (mode + k) % d).collect();

    let mut out = vec![0.0f32; t.len()];
    let mut idx = vec![0usize; d];
    for &v in &t.data {
        let mut col = 0;
        for &ax in &order {
            col = col * t.dims[ax] + idx[ax];
        }
        out[idx[mode] * cols + col] = v;
        for ax in (0..d).rev() {
            idx[ax] += 1;
            if idx[ax] < t.dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    Matrix::new(rows, cols, out)
}

/// Inverse of [`unfold`]: rebuilds the tensor of shape `dims` from its mode-n
/// matricization. Round trip is bit-exact.
pub fn fold(m: &Matrix, mode: usize, dims: &[usize]) -> Result<Tensor> {
    if mode >= dims.len() {
        return Err(Error::invalid(format!(
            "mode {mode} out of range for dims {dims:?}"
        )));
    }
    let total: usize = dims.iter().product();
    if dims[mode] != m.rows() || total != m.rows() * m.cols() {
        return Err(Error::shape(format!(
            "matrix {}x{} does not fold into dims {dims:?} along mode {mode}",
            m.rows(),
            m.cols()
        )));
    }
    let d = dims.len();
    let order: Vec<usize> = (1..d).map(|k| (mode + k) % d).collect();

    let mut t = Tensor::zeros(dims.to_vec())?;
    let mut idx = vec![0usize; d];
    for flat in 0..total {
        let mut col = 0;
        for &ax in &order {
            col = col * dims[ax] + idx[ax];
        }
        t.data[flat] = m.get(idx[mode], col);
        for ax in (0..d).rev() {
            idx[ax] += 1;
            if idx[ax] < dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    Ok(t)
}

/// Mode-n product: contracts `m` (shape `r × dims[mode]`) against the given
/// mode, replacing `dims[mode]` with `r`. Equals `fold(m × unfold(t, mode))`.
pub fn mode_multiply(t: &Tensor, m: &Matrix, mode: usize) -> Result<Tensor> {
    if mode >= t.rank() {
        return Err(Error::invalid(format!(
            "mode {mode} out of range for a {}-way tensor",
            t.rank()
        )));
    }
    if m.cols() != t.dims[mode] {
        return Err(Error::shape(format!(
            "matrix has {} columns, mode {mode} has extent {}",
            m.cols(),
            t.dims[mode]
        )));
    }
    let unfolded = unfold(t, mode)?;
    let product = m.matmul(&unfolded)?;
    let mut new_dims = t.dims.clone();
    new_dims[mode] = m.rows();
    fold(&product, mode, &new_dims)
}
