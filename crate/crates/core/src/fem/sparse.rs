//! Compressed sparse rows and an envelope (skyline) Cholesky factorization.
//!
//! The ring-ordered disk meshes keep every node's neighbours within a band
//! about one ring wide, so a profile factorization without reordering stays
//! small.

use crate::error::{EitError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix, summing duplicate entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            values,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Lower-triangular envelope Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors the lower triangle of `a`, which must be symmetric positive
    /// definite. Rows listed in `identity_rows` are replaced by identity rows
    /// and columns.
    pub fn factor(a: &CsrMatrix, identity_rows: &[usize]) -> Result<Self> {
        let n = a.n;
        let mut pinned = vec![false; n];
        for &r in identity_rows {
            pinned[r] = true;
        }
        let mut first: Vec<usize> = (0..n).collect();
        if n > 0 {
            for i in 0..n {
                if pinned[i] {
                    continue;
                }
                for (j, _) in a.row(i) {
                    if j < first[i] && !pinned[j] {
                        first[i] = j;
                    }
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut data = vec![0.0; total];
        for i in 0..n {
            if pinned[i] {
                data[start[i] + (i - first[i])] = 1.0;
                continue;
            }
            for (j, v) in a.row(i) {
                if j <= i && !pinned[j] {
                    data[start[i] + (j - first[i])] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = start[j];
                let mut s = data[row_i + (j - fi)];
                let li = &data[row_i + (k0 - fi)..row_i + (j - fi)];
                let lj = &data[row_j + (k0 - fj)..row_j + (j - fj)];
                s -= li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
                data[row_i + (j - fi)] = s / data[row_j + (j - fj)];
            }
            let row = &data[row_i..row_i + (i - fi)];
            let d = data[row_i + (i - fi)] - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) {
                return Err(EitError::Factorization { pivot: i });
            }
            data[row_i + (i - fi)] = d.sqrt();
        }
        Ok(SkylineCholesky { first, start, data })
    }

    pub fn n(&self) -> usize {
        self.first.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&b[fi..i]).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            b[i] /= row[i - fi];
            let xi = b[i];
            for (l, x) in row[..i - fi].iter().zip(&mut b[fi..i]) {
                *x -= l * xi;
            }
        }
    }
}
