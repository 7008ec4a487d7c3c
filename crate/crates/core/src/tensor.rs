//! Dense row-major `f64` arrays of rank 1 to 3 and the math kernels the
//! layers are built from.
//!
//! Every 2-D routine treats a rank-1 tensor of length `n` as a `1×n` row.

use std::fmt;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {shape:?} for {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("bad range: lo={lo} must be below hi={hi}")]
    BadRange { lo: f64, hi: f64 },
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn shape_ok(shape: &[usize]) -> bool {
    (1..=3).contains(&shape.len()) && shape.iter().all(|&e| e > 0)
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        if !shape_ok(shape) || shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::BadShape {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// # Panics
    /// If `shape` has rank outside 1..=3 or a zero extent.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(shape_ok(shape), "invalid tensor shape {shape:?}");
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(&[n], data).expect("vector must be nonempty")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(&[rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::BadShape {
                shape: vec![rows.len(), cols],
                len: data.len(),
            });
        }
        Self::new(&[rows.len(), cols], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Uniform draws in `[lo, hi)`.
    pub fn rand_uniform(
        rng: &mut Rng,
        shape: &[usize],
        lo: f64,
        hi: f64,
    ) -> Result<Self, TensorError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(TensorError::BadRange { lo, hi });
        }
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Self::new(shape, data)
    }

    pub fn rand_normal(rng: &mut Rng, shape: &[usize], std: f64) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| std * rng.normal()).collect();
        Self::new(shape, data).expect("valid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Leading extent when viewed as a matrix.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    /// Trailing extent.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self, TensorError> {
        Self::new(shape, self.data)
    }

    /// Row `i` of a rank-3 tensor (or of a matrix) as its own tensor.
    pub fn slice_outer(&self, i: usize) -> Tensor {
        let inner = &self.shape[1..];
        if inner.is_empty() {
            return Tensor::vector(vec![self.data[i]]);
        }
        let n: usize = inner.iter().product();
        Tensor::new(inner, self.data[i * n..(i + 1) * n].to_vec()).expect("valid slice")
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        if self.shape != other.shape {
            return Err(self.mismatch(op, other));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    fn mismatch(&self, op: &'static str, other: &Tensor) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            left: self.shape.clone(),
            right: other.shape.clone(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|x| x * k)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(self.mismatch("add_assign", other));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Same as [`Tensor::add_assign`] but only requires equal element counts,
    /// so a `[n]` vector can accumulate into a `[1, n]` row and vice versa.
    pub fn add_assign_flat(&mut self, other: &Tensor) -> Result<(), TensorError> {
        if self.data.len() != other.data.len() {
            return Err(self.mismatch("add_assign_flat", other));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64, TensorError> {
        if self.data.len() != other.data.len() {
            return Err(self.mismatch("dot", other));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(
            self.data.len(),
            other.data.len(),
            "max_abs_diff length mismatch"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn as_matrix_dims(&self, op: &'static str, other: &Tensor) -> Result<(), TensorError> {
        if self.rank() > 2 || other.rank() > 2 {
            return Err(self.mismatch(op, other));
        }
        Ok(())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.as_matrix_dims("matmul", other)?;
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(self.mismatch("matmul", other));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.as_matrix_dims("matmul_nt", other)?;
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        if k != k2 {
            return Err(self.mismatch("matmul_nt", other));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Tensor::new(&[m, n], out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.as_matrix_dims("matmul_tn", other)?;
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(self.mismatch("matmul_tn", other));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(&[c, r], out).expect("valid transpose")
    }

    /// Adds `bias` (length `cols`) to every row.
    pub fn add_row_vector(&self, bias: &Tensor) -> Result<Tensor, TensorError> {
        let c = self.cols();
        if bias.len() != c {
            return Err(self.mismatch("add_row_vector", bias));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            row.iter_mut().zip(&bias.data).for_each(|(x, b)| *x += b);
        }
        Ok(out)
    }

    /// Column sums as a vector of length `cols`.
    pub fn sum_rows(&self) -> Tensor {
        let c = self.cols();
        let mut out = vec![0.0; c];
        for row in self.data.chunks(c) {
            out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
        }
        Tensor::vector(out)
    }

    /// Row-wise softmax with the row maximum subtracted first.
    pub fn softmax_rows(&self) -> Tensor {
        let c = self.cols();
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            softmax_in_place(row);
        }
        out
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| x.max(0.0))
    }

    /// Per-row mean and population variance.
    pub fn row_stats(&self) -> (Tensor, Tensor) {
        let c = self.cols();
        let mut means = Vec::with_capacity(self.rows());
        let mut vars = Vec::with_capacity(self.rows());
        for row in self.data.chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            means.push(mean);
            vars.push(var);
        }
        (Tensor::vector(means), Tensor::vector(vars))
    }

    /// Joins matrices with equal row counts along the feature axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
        let first = parts.first().expect("concat_cols needs at least one part");
        let r = first.rows();
        if let Some(bad) = parts.iter().find(|p| p.rows() != r) {
            return Err(first.mismatch("concat_cols", bad));
        }
        let total: usize = parts.iter().map(|p| p.cols()).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                out.extend_from_slice(p.row(i));
            }
        }
        Tensor::new(&[r, total], out)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Tensor {
        assert!(
            start < end && end <= self.cols(),
            "bad column range {start}..{end}"
        );
        let r = self.rows();
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&self.row(i)[start..end]);
        }
        Tensor::new(&[r, end - start], out).expect("valid slice")
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        assert!(
            start < end && end <= self.rows(),
            "bad row range {start}..{end}"
        );
        let c = self.cols();
        Tensor::new(&[end - start, c], self.data[start * c..end * c].to_vec())
            .expect("valid row range")
    }

    /// Writes `part` into columns starting at `start`.
    pub fn set_cols(&mut self, start: usize, part: &Tensor) {
        let w = part.cols();
        assert!(start + w <= self.cols() && part.rows() == self.rows());
        for i in 0..self.rows() {
            self.row_mut(i)[start..start + w].copy_from_slice(part.row(i));
        }
    }

    /// Rows reordered so output row `i` is input row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Tensor {
        assert_eq!(perm.len(), self.rows());
        let mut out = Vec::with_capacity(self.len());
        for &p in perm {
            out.extend_from_slice(self.row(p));
        }
        Tensor::new(&[self.rows(), self.cols()], out).expect("valid permutation")
    }
}

/// Max-shifted softmax over a slice. At least one entry must be finite;
/// `-inf` entries receive weight zero.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
