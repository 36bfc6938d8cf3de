//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices.
//!
//! The matrix is supplied as upper-triangular triplets with a fixed
//! pattern. [`LdlSymbolic::analyze`] computes a minimum-degree ordering,
//! the elimination tree and column counts once; [`LdlFactor::factor`]
//! then runs an up-looking numeric factorization for any values on that
//! pattern. Pivots whose sign disagrees with the expected inertia are
//! replaced by a small regularization of the right sign.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::scalar::Real;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct LdlSymbolic {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// Permuted upper triangle in CSC.
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    /// Position in the permuted storage of each input triplet.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

impl LdlSymbolic {
    /// `entries` are `(row, col)` pairs with `row <= col`. Every diagonal
    /// entry must be present.
    pub fn analyze(n: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
        let mut has_diag = vec![false; n];
        for &(r, c) in entries {
            if r > c || c >= n {
                return Err(Error::Solver(format!("entry ({r},{c}) is not in the upper triangle")));
            }
            if r == c {
                has_diag[r] = true;
            } else {
                adj[r].insert(c);
                adj[c].insert(r);
            }
        }
        if let Some(k) = has_diag.iter().position(|d| !d) {
            return Err(Error::Solver(format!("missing diagonal entry {k}")));
        }
        let perm = minimum_degree(adj);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let mut counts = vec![0usize; n + 1];
        let permuted: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(r, c)| {
                let (a, b) = (iperm[r], iperm[c]);
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        for &(_, c) in &permuted {
            counts[c + 1] += 1;
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        // Deduplicate by (row, col) within each column.
        let mut order: Vec<usize> = (0..permuted.len()).collect();
        order.sort_by_key(|&k| (permuted[k].1, permuted[k].0));
        let mut colptr = vec![0usize; n + 1];
        let mut rowind = Vec::new();
        let mut map = vec![0usize; permuted.len()];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let e = permuted[k];
            if last != Some(e) {
                rowind.push(e.0);
                colptr[e.1 + 1] = rowind.len();
                last = Some(e);
            }
            map[k] = rowind.len() - 1;
        }
        for c in 0..n {
            colptr[c + 1] = colptr[c + 1].max(colptr[c]);
        }

        // Elimination tree and column counts.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in colptr[j]..colptr[j + 1] {
                let mut i = rowind[p];
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Ok(LdlSymbolic { n, perm, colptr, rowind, map, etree, lp })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }
}

/// Greedy minimum-degree ordering on an explicit elimination graph.
pub fn minimum_degree(mut adj: Vec<HashSet<usize>>) -> Vec<usize> {
    let n = adj.len();
    let mut done = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = NONE;
        for v in 0..n {
            if !done[v] && (best == NONE || adj[v].len() < adj[best].len()) {
                best = v;
            }
        }
        let v = best;
        done[v] = true;
        perm.push(v);
        let nbrs: Vec<usize> = adj[v].drain().collect();
        for &u in &nbrs {
            adj[u].remove(&v);
        }
        for (a, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[a + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
    }
    perm
}

#[derive(Clone, Debug)]
pub struct LdlFactor<T> {
    li: Vec<usize>,
    lx: Vec<T>,
    d: Vec<T>,
    dinv: Vec<T>,
    /// Number of pivots that were regularized.
    pub bumped: usize,
}

impl<T: Real> LdlFactor<T> {
    /// `values[k]` belongs to input triplet `k`; duplicates are summed.
    /// `signs[i]` is the expected sign of pivot `i` (original order).
    pub fn factor(sym: &LdlSymbolic, values: &[T], signs: &[i8], eps: T, delta: T) -> Result<Self> {
        let n = sym.n;
        let mut ax = vec![T::zero(); sym.rowind.len()];
        for (k, &v) in values.iter().enumerate() {
            ax[sym.map[k]] += v;
        }
        let mut li = vec![0usize; sym.lp[n]];
        let mut lx = vec![T::zero(); sym.lp[n]];
        let mut d = vec![T::zero(); n];
        let mut dinv = vec![T::zero(); n];
        let mut y_vals = vec![T::zero(); n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = sym.lp[..n].to_vec();
        let mut bumped = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            d[k] = T::zero();
            for p in sym.colptr[k]..sym.colptr[k + 1] {
                let b = sym.rowind[p];
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y_vals[b] = ax[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = sym.etree[b];
                    while nx != NONE && nx < k {
                        if y_used[nx] {
                            break;
                        }
                        y_used[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = sym.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in sym.lp[c]..tmp {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                li[tmp] = k;
                lx[tmp] = yc * dinv[c];
                d[k] -= yc * lx[tmp];
                next_space[c] += 1;
                y_vals[c] = T::zero();
                y_used[c] = false;
            }
            let sign = if signs[sym.perm[k]] >= 0 { T::one() } else { -T::one() };
            if !(d[k] * sign > eps) {
                d[k] = sign * delta;
                bumped += 1;
            }
            if !d[k].is_finite() {
                return Err(Error::Solver("non-finite pivot in LDL factorization".into()));
            }
            dinv[k] = T::one() / d[k];
        }
        Ok(LdlFactor { li, lx, d, dinv, bumped })
    }

    /// Solves in place; `b` is in the original ordering.
    pub fn solve(&self, sym: &LdlSymbolic, b: &mut [T]) {
        let n = sym.n;
        let mut x: Vec<T> = (0..n).map(|i| b[sym.perm[i]]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in sym.lp[i]..sym.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in sym.lp[i]..sym.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for i in 0..n {
            b[sym.perm[i]] = x[i];
        }
    }

    pub fn diagonal(&self) -> &[T] {
        &self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn solves_random_quasi_definite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (n1, n2) = (rng.gen_range(1..12), rng.gen_range(1..12));
            let n = n1 + n2;
            let mut trip = Vec::new();
            let mut signs = vec![1i8; n];
            for i in 0..n {
                let v = if i < n1 { rng.gen_range(0.5..2.0) } else { -rng.gen_range(0.5..2.0) };
                signs[i] = if i < n1 { 1 } else { -1 };
                trip.push((i, i, v));
            }
            for i in 0..n1 {
                for j in n1..n {
                    if rng.gen_bool(0.3) {
                        trip.push((i, j, rng.gen_range(-3.0..3.0)));
                    }
                }
            }
            // duplicate an entry to exercise summation
            trip.push((0, 0, 0.25));
            let entries: Vec<(usize, usize)> = trip.iter().map(|t| (t.0, t.1)).collect();
            let vals: Vec<f64> = trip.iter().map(|t| t.2).collect();
            let sym = LdlSymbolic::analyze(n, &entries).unwrap();
            let f = LdlFactor::factor(&sym, &vals, &signs, 1e-14, 1e-8).unwrap();
            assert_eq!(f.bumped, 0);
            let mut dense = vec![vec![0.0; n]; n];
            for &(i, j, v) in &trip {
                dense[i][j] += v;
                if i != j {
                    dense[j][i] += v;
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expect = dense_solve(dense, b.clone());
            let mut x = b;
            f.solve(&sym, &mut x);
            for (a, e) in x.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-9, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn arrow_matrix_ordering_avoids_fill() {
        // Hub connected to every other node: eliminating it first would
        // fill the whole matrix.
        let n = 30;
        let mut entries: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        entries.extend((1..n).map(|j| (0, j)));
        let sym = LdlSymbolic::analyze(n, &entries).unwrap();
        assert_eq!(sym.factor_nnz(), n - 1);
    }

    #[test]
    fn rejects_missing_diagonal() {
        assert!(LdlSymbolic::analyze(2, &[(0, 0), (0, 1)]).is_err());
        assert!(LdlSymbolic::analyze(2, &[(1, 0), (0, 0), (1, 1)]).is_err());
    }

    #[test]
    fn wrong_sign_pivots_are_regularized() {
        let sym = LdlSymbolic::analyze(2, &[(0, 0), (1, 1)]).unwrap();
        let f = LdlFactor::factor(&sym, &[0.0, 1.0], &[-1, 1], 1e-12, 1e-6).unwrap();
        assert_eq!(f.bumped, 1);
        assert!(f.diagonal().contains(&-1e-6));
    }
}
