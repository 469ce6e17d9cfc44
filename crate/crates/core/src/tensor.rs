//! Row-major dense matrices.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: alloc::vec![T::default(); rows * cols] }
    }

    /// Wraps row-major `data`; `None` if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Matrix { rows, cols, data })
    }

    pub fn from_rows(cols: usize, rows: &[Vec<T>]) -> Option<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return None;
            }
            data.extend_from_slice(r);
        }
        Some(Matrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

impl Matrix<f64> {
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

/// `out += scale * (x · w)` for a row vector `x` of length `w.rows()`.
#[inline]
pub fn axpy_vec_mat<W: Copy + Into<f64>>(x: &[f64], w: &[W], cols: usize, scale: f64, out: &mut [f64]) {
    debug_assert_eq!(w.len(), x.len() * cols);
    debug_assert_eq!(out.len(), cols);
    for (k, &xk) in x.iter().enumerate() {
        let a = scale * xk;
        if a == 0.0 {
            continue;
        }
        let wrow = &w[k * cols..(k + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(wrow) {
            *o += a * wv.into();
        }
    }
}

/// `out += scale * (w · y)` for a column vector `y` of length `cols`; `out` has `w.rows()` entries.
#[inline]
pub fn axpy_mat_vec<W: Copy + Into<f64>>(w: &[W], cols: usize, y: &[f64], scale: f64, out: &mut [f64]) {
    debug_assert_eq!(y.len(), cols);
    for (k, o) in out.iter_mut().enumerate() {
        let wrow = &w[k * cols..(k + 1) * cols];
        let mut acc = 0.0;
        for (&wv, &yv) in wrow.iter().zip(y) {
            acc += wv.into() * yv;
        }
        *o += scale * acc;
    }
}

/// `out += scale * (x ⊗ y)`; `out` is row-major `x.len() × y.len()`.
#[inline]
pub fn axpy_outer(x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), x.len() * y.len());
    let cols = y.len();
    for (k, &xk) in x.iter().enumerate() {
        let a = scale * xk;
        if a == 0.0 {
            continue;
        }
        for (o, &yv) in out[k * cols..(k + 1) * cols].iter_mut().zip(y) {
            *o += a * yv;
        }
    }
}
