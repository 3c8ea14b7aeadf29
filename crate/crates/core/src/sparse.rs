//! Compressed sparse row matrices with the handful of products the model needs.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets. Duplicates are summed and
    /// column indices sorted within each row. Explicit zeros are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Build directly from per-row sorted `(col, value)` lists.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0), "row not sorted");
            for (c, v) in row {
                debug_assert!(c < ncols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Sparse view of a dense matrix, skipping exact zeros.
    pub fn from_dense(m: ArrayView2<'_, f64>) -> Self {
        let rows = m
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(m.ncols(), rows)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Entry lookup; absent entries are exactly zero.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            out[c] += v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    /// Apply `f` to every stored value.
    pub fn map_values(&mut self, mut f: impl FnMut(usize, usize, f64) -> f64) {
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                self.values[k] = f(r, self.indices[k], self.values[k]);
            }
        }
    }

    /// `self · dense`, rows computed in parallel.
    pub fn mul_dense(&self, dense: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(self.ncols, dense.nrows(), "inner dimension mismatch");
        let mut out = Array2::<f64>::zeros((self.nrows, dense.ncols()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(r, mut out_row)| {
                let (cols, vals) = self.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    out_row.scaled_add(v, &dense.row(c));
                }
            });
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.triplets() {
            out[[r, c]] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_merge_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 0.5)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(1).0, &[0, 2]);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn products_match_dense() {
        let d = array![[1.0, 0.0, 2.0], [0.0, 0.0, -1.0]];
        let m = CsrMatrix::from_dense(d.view());
        let b = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(m.mul_dense(b.view()), d.dot(&b));
        assert_eq!(m.transpose().to_dense(), d.t().to_owned());
        assert_eq!(m.row_sums(), vec![3.0, -1.0]);
        assert_eq!(m.col_sums(), vec![1.0, 0.0, 1.0]);
    }
}
