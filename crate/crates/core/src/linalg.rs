//! Minimal dense row-major matrix used for weight blocks and the RLS
//! inverse-correlation matrix.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::neuron::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity_scaled(n: usize, diag: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = diag;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("Matrix::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    /// `out = self · x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Matrix::mul_vec", self.cols, x.len())?;
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        Ok(out)
    }

    /// `out += scale · self · x`.
    pub fn mul_vec_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += scale * dot(row, x);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

/// Column-compressed sparse matrix for the fixed FORCE reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns {
    rows: usize,
    col_start: Vec<usize>,
    row_index: Vec<u32>,
    values: Vec<f64>,
}

impl SparseColumns {
    pub fn from_dense(m: &Matrix) -> Self {
        let mut col_start = Vec::with_capacity(m.cols() + 1);
        let mut row_index = Vec::new();
        let mut values = Vec::new();
        col_start.push(0);
        for j in 0..m.cols() {
            for i in 0..m.rows() {
                let v = m.get(i, j);
                if v != 0.0 {
                    row_index.push(i as u32);
                    values.push(v);
                }
            }
            col_start.push(values.len());
        }
        Self { rows: m.rows(), col_start, row_index, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.col_start.len() - 1
    }

    pub fn nonzeros(&self) -> usize {
        self.values.len()
    }

    /// `out += scale · column j`.
    pub fn add_column(&self, j: usize, scale: f64, out: &mut [f64]) {
        let range = self.col_start[j]..self.col_start[j + 1];
        for (&i, &v) in self.row_index[range.clone()].iter().zip(&self.values[range]) {
            out[i as usize] += scale * v;
        }
    }

    /// `out = self · x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                self.add_column(j, xj, out);
            }
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols());
        for j in 0..self.cols() {
            for k in self.col_start[j]..self.col_start[j + 1] {
                m.set(self.row_index[k] as usize, j, self.values[k]);
            }
        }
        m
    }
}

/// `y += a · x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
