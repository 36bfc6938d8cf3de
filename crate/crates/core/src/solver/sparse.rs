//! Compressed sparse column storage.

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CscMatrix<T> {
    /// Builds a matrix from triplets, summing duplicates. Explicit zeros
    /// are kept so the pattern does not depend on the values.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; ncols + 1];
        for &(_, c, _) in triplets {
            counts[c + 1] += 1;
        }
        for c in 0..ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            rows[next[c]] = r;
            vals[next[c]] = v;
            next[c] += 1;
        }
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowind = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for c in 0..ncols {
            let mut col: Vec<(usize, T)> = (counts[c]..counts[c + 1]).map(|p| (rows[p], vals[p])).collect();
            col.sort_by_key(|e| e.0);
            for (r, v) in col {
                if rowind.len() > colptr[c] && *rowind.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    rowind.push(r);
                    values.push(v);
                }
            }
            colptr[c + 1] = rowind.len();
        }
        CscMatrix { nrows, ncols, colptr, rowind, values }
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    /// `y += alpha·A·x`
    pub fn gemv(&self, alpha: T, x: &[T], y: &mut [T]) {
        for c in 0..self.ncols {
            let xc = alpha * x[c];
            if xc == T::zero() {
                continue;
            }
            for p in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowind[p]] += self.values[p] * xc;
            }
        }
    }

    /// `y += alpha·Aᵀ·x`
    pub fn gemv_t(&self, alpha: T, x: &[T], y: &mut [T]) {
        for c in 0..self.ncols {
            let mut acc = T::zero();
            for p in self.colptr[c]..self.colptr[c + 1] {
                acc += self.values[p] * x[self.rowind[p]];
            }
            y[c] += alpha * acc;
        }
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.gemv(T::one(), x, &mut y);
        y
    }

    pub fn mul_t(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.ncols];
        self.gemv_t(T::one(), x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                d[self.rowind[p]][c] += self.values[p];
            }
        }
        d
    }

    /// Scales rows by `e` and columns by `d` in place.
    pub fn scale(&mut self, e: &[T], d: &[T]) {
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                self.values[p] = self.values[p] * e[self.rowind[p]] * d[c];
            }
        }
    }

    pub fn col_inf_norms(&self) -> Vec<T> {
        (0..self.ncols)
            .map(|c| (self.colptr[c]..self.colptr[c + 1]).fold(T::zero(), |m, p| m.max(self.values[p].abs())))
            .collect()
    }

    pub fn row_inf_norms(&self) -> Vec<T> {
        let mut r = vec![T::zero(); self.nrows];
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                let i = self.rowind[p];
                r[i] = r[i].max(self.values[p].abs());
            }
        }
        r
    }
}

pub fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CscMatrix::from_triplets(3, 2, &[(2, 0, 1.0), (0, 0, 2.0), (2, 0, 3.0), (1, 1, -1.0)]);
        assert_eq!(m.colptr, vec![0, 2, 3]);
        assert_eq!(m.rowind, vec![0, 2, 1]);
        assert_eq!(m.values, vec![2.0, 4.0, -1.0]);
        assert_eq!(m.mul(&[1.0, 2.0]), vec![2.0, -2.0, 4.0]);
        assert_eq!(m.mul_t(&[1.0, 1.0, 1.0]), vec![6.0, -1.0]);
    }
}
