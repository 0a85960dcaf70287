//! Compressed sparse row matrices: assembly, products, transposes, and
//! conversion into banded storage for the direct solver.

use crate::eigen::banded::BandedMatrix;
use crate::error::{CoreError, Result};
use num_complex::Complex64;

/// CSR matrix with sorted column indices in every row.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Csr {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Csr {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from triplets, summing duplicates and dropping zeros.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &mut Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in triplets.iter() {
            debug_assert!(i < n_rows && j < n_cols);
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                s += v * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// y = A^T x without forming the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push((j, i, v));
            }
        }
        Csr::from_triplets(self.n_cols, self.n_rows, &mut trips)
    }

    /// Sparse product with a dense accumulator per row.
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.n_cols, other.n_rows);
        let mut acc = vec![0.0f64; other.n_cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (kcols, kvals) = other.row(k);
                for (&j, &b) in kcols.iter().zip(kvals) {
                    if acc[j] == 0.0 && !touched.contains(&j) {
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                values.push(acc[j]);
                acc[j] = 0.0;
            }
            row_ptr[i + 1] = col_idx.len();
            touched.clear();
        }
        Csr { n_rows: self.n_rows, n_cols: other.n_cols, row_ptr, col_idx, values }
    }

    pub fn add_scaled(&self, other: &Csr, s: f64) -> Csr {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut trips: Vec<(usize, usize, f64)> =
            Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                trips.push((i, j, x));
            }
            let (c, v) = other.row(i);
            for (&j, &x) in c.iter().zip(v) {
                trips.push((i, j, s * x));
            }
        }
        Csr::from_triplets(self.n_rows, self.n_cols, &mut trips)
    }

    pub fn scale(&self, s: f64) -> Csr {
        let mut m = self.clone();
        for v in &mut m.values {
            *v *= s;
        }
        m
    }

    /// Max-magnitude entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Induced 1-norm (max absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0f64; self.n_cols];
        for (j, v) in self.col_idx.iter().zip(&self.values) {
            col[*j] += v.abs();
        }
        col.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// A - sigma I (square only).
    pub fn shift_diag(&self, sigma: f64) -> Csr {
        assert_eq!(self.n_rows, self.n_cols);
        self.add_scaled(&Csr::identity(self.n_rows), -sigma)
    }

    /// Real 2n x 2n representation of A - sigma I for complex sigma,
    /// with interleaved (re, im) unknowns so the bandwidth only doubles.
    pub fn embed_complex_shift(&self, sigma: Complex64) -> Csr {
        assert_eq!(self.n_rows, self.n_cols);
        let n = self.n_rows;
        let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * self.nnz() + 4 * n);
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push((2 * i, 2 * j, v));
                trips.push((2 * i + 1, 2 * j + 1, v));
            }
            trips.push((2 * i, 2 * i, -sigma.re));
            trips.push((2 * i + 1, 2 * i + 1, -sigma.re));
            trips.push((2 * i, 2 * i + 1, sigma.im));
            trips.push((2 * i + 1, 2 * i, -sigma.im));
        }
        Csr::from_triplets(2 * n, 2 * n, &mut trips)
    }

    /// Applies a symmetric permutation: out[p(i)][p(j)] = in[i][j].
    pub fn permute_symmetric(&self, perm: &[usize]) -> Csr {
        assert_eq!(self.n_rows, self.n_cols);
        assert_eq!(perm.len(), self.n_rows);
        let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push((perm[i], perm[j], v));
            }
        }
        Csr::from_triplets(self.n_rows, self.n_cols, &mut trips)
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            for &j in cols {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_banded(&self) -> BandedMatrix {
        assert_eq!(self.n_rows, self.n_cols);
        let (kl, ku) = self.bandwidths();
        let mut b = BandedMatrix::zeros(self.n_rows, kl, ku);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                b.set(i, j, v);
            }
        }
        b
    }

    /// Plain-text triplet form: header "rows cols nnz", then one
    /// "i j value" line per entry with 17 significant digits.
    pub fn to_triplet_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n_rows, self.n_cols, self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                s.push_str(&format!("{} {} {:.16e}\n", i, j, v));
            }
        }
        s
    }

    pub fn from_triplet_text(text: &str) -> Result<Csr> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::InvalidModel("empty triplet text".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CoreError::InvalidModel(format!("triplet header: {e}")))?;
        if dims.len() != 3 {
            return Err(CoreError::InvalidModel("triplet header needs rows cols nnz".into()));
        }
        let mut trips = Vec::with_capacity(dims[2]);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let i: usize = it.next().unwrap_or("").parse().map_err(|e| {
                CoreError::InvalidModel(format!("triplet row index: {e}"))
            })?;
            let j: usize = it.next().unwrap_or("").parse().map_err(|e| {
                CoreError::InvalidModel(format!("triplet col index: {e}"))
            })?;
            let v: f64 = it.next().unwrap_or("").parse().map_err(|e| {
                CoreError::InvalidModel(format!("triplet value: {e}"))
            })?;
            trips.push((i, j, v));
        }
        Ok(Csr::from_triplets(dims[0], dims[1], &mut trips))
    }
}
