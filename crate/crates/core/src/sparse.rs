//! Minimal compressed-sparse-row matrix for small explicit chains.

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Duplicate columns
    /// within a row are summed and explicit zeros dropped.
    pub fn from_rows(n_cols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            let mut sorted = row.clone();
            sorted.sort_by_key(|&(c, _)| c);
            let start = cols.len();
            for (c, v) in sorted {
                assert!(c < n_cols, "column {c} out of range");
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            // drop entries that cancelled or were zero
            let mut w = start;
            for r in start..cols.len() {
                if vals[r] != 0.0 {
                    cols[w] = cols[r];
                    vals[w] = vals[r];
                    w += 1;
                }
            }
            cols.truncate(w);
            vals.truncate(w);
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n_cols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_cols: n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_rows() * self.n_cols;
        if cells == 0 {
            0.0
        } else {
            self.nnz() as f64 / cells as f64
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    /// `out = x · self` (row vector times matrix).
    pub fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows());
        debug_assert_eq!(out.len(), self.n_cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            for k in a..b {
                out[self.cols[k]] += xr * self.vals[k];
            }
        }
    }

    /// `out = self · x` (matrix times column vector).
    pub fn right_mul(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n_cols, other.n_rows());
        let mut acc = vec![0.0; other.n_cols];
        let mut touched = vec![false; other.n_cols];
        let mut rows = Vec::with_capacity(self.n_rows());
        for r in 0..self.n_rows() {
            let mut idx = Vec::new();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        idx.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            let row: Vec<(usize, f64)> = idx
                .iter()
                .map(|&c| {
                    let v = acc[c];
                    acc[c] = 0.0;
                    touched[c] = false;
                    (c, v)
                })
                .collect();
            rows.push(row);
        }
        CsrMatrix::from_rows(other.n_cols, &rows)
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, factor: f64) -> CsrMatrix {
        assert_eq!(self.n_rows(), other.n_rows());
        let rows: Vec<Vec<(usize, f64)>> = (0..self.n_rows())
            .map(|r| {
                self.row(r)
                    .chain(other.row(r).map(|(c, v)| (c, v * factor)))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(self.n_cols, &rows)
    }

    pub fn scaled(&self, factor: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= factor);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_dense() {
        let a = CsrMatrix::from_rows(2, &[vec![(0, 1.0), (1, 2.0)], vec![(1, 3.0)]]);
        let mut y = vec![0.0; 2];
        a.left_mul(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![1.0, 5.0]);
        a.right_mul(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 3.0]);
        let sq = a.matmul(&a);
        assert_eq!(sq.row(0).collect::<Vec<_>>(), vec![(0, 1.0), (1, 8.0)]);
        assert_eq!(sq.row(1).collect::<Vec<_>>(), vec![(1, 9.0)]);
    }

    #[test]
    fn duplicates_merge_and_zeros_drop() {
        let a = CsrMatrix::from_rows(3, &[vec![(2, 1.0), (0, 0.0), (2, 1.0)]]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.row_sum(0), 2.0);
        let z = a.add_scaled(&a, -1.0);
        assert_eq!(z.nnz(), 0);
    }
}
