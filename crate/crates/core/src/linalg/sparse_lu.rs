use std::collections::BTreeSet;

use num_complex::Complex64;

use crate::error::{Error, Result};

const PIVOT_RTOL: f64 = 1e-14;

/// LU factorization of a complex matrix with a structurally symmetric
/// pattern. The ordering is minimum degree on the elimination graph, ties
/// broken by the lower index, so a radial network factors with no fill.
/// No numerical pivoting is done: admittance matrices of connected networks
/// with a grounded slack are diagonally dominant enough in practice, and a
/// tiny pivot is reported as [`Error::Singular`].
#[derive(Clone, Debug)]
pub struct SparseLu {
    n: usize,
    /// `order[k]` is the original index eliminated at step `k`.
    order: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<Complex64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<Complex64>,
    diag: Vec<Complex64>,
}

impl SparseLu {
    /// Factors the `n x n` matrix given as (row, col, value) triplets.
    /// Duplicate triplets are summed.
    pub fn factor(n: usize, entries: &[(usize, usize, Complex64)]) -> Result<Self> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut scale = 0.0f64;
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::BusOutOfRange {
                    index: i.max(j),
                    n_buses: n,
                });
            }
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
            scale = scale.max(v.norm());
        }

        let (order, upper) = minimum_degree(adj);
        let mut pinv = vec![0usize; n];
        for (k, &orig) in order.iter().enumerate() {
            pinv[orig] = k;
        }
        let upper: Vec<Vec<usize>> = upper
            .into_iter()
            .map(|row| {
                let mut r: Vec<usize> = row.into_iter().map(|j| pinv[j]).collect();
                r.sort_unstable();
                r
            })
            .collect();

        let mut lower: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, row) in upper.iter().enumerate() {
            for &j in row {
                lower[j].push(k);
            }
        }

        // Permuted input rows.
        let mut a_rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        for &(i, j, v) in entries {
            a_rows[pinv[i]].push((pinv[j], v));
        }

        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut u_idx = Vec::new();
        let mut u_val = Vec::new();
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx = Vec::new();
        let mut l_val = Vec::new();
        let mut diag = Vec::with_capacity(n);
        u_ptr.push(0);
        l_ptr.push(0);

        let zero = Complex64::new(0.0, 0.0);
        let mut work = vec![zero; n];
        for i in 0..n {
            for &(j, v) in &a_rows[i] {
                work[j] += v;
            }
            // lower[i] is ascending because rows are pushed in k order.
            for &k in &lower[i] {
                let lik = work[k] / diag[k];
                work[k] = zero;
                l_idx.push(k);
                l_val.push(lik);
                for p in u_ptr[k]..u_ptr[k + 1] {
                    work[u_idx[p]] -= lik * u_val[p];
                }
            }
            let piv = work[i];
            work[i] = zero;
            if !(piv.norm() > PIVOT_RTOL * scale) {
                return Err(Error::Singular {
                    step: i,
                    pivot: piv.norm(),
                });
            }
            diag.push(piv);
            for &j in &upper[i] {
                u_idx.push(j);
                u_val.push(work[j]);
                work[j] = zero;
            }
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
        }

        Ok(Self {
            n,
            order,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored off-diagonal entries of L and U combined.
    pub fn factor_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len()
    }

    /// Elimination order as original indices.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(rhs.len(), self.n, "right-hand side length");
        let mut y: Vec<Complex64> = self.order.iter().map(|&o| rhs[o]).collect();
        for i in 0..self.n {
            let mut acc = y[i];
            for p in self.l_ptr[i]..self.l_ptr[i + 1] {
                acc -= self.l_val[p] * y[self.l_idx[p]];
            }
            y[i] = acc;
        }
        for i in (0..self.n).rev() {
            let mut acc = y[i];
            for p in self.u_ptr[i]..self.u_ptr[i + 1] {
                acc -= self.u_val[p] * y[self.u_idx[p]];
            }
            y[i] = acc / self.diag[i];
        }
        let mut x = vec![Complex64::new(0.0, 0.0); self.n];
        for (k, &o) in self.order.iter().enumerate() {
            x[o] = y[k];
        }
        x
    }
}

/// Returns the elimination order and, for each step, the original indices
/// adjacent to the eliminated node at that moment (its filled U row).
fn minimum_degree(mut adj: Vec<BTreeSet<usize>>) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = adj.len();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &a in &nbrs {
            queue.remove(&(adj[a].len(), a));
            adj[a].remove(&v);
        }
        for (x, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[x + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            queue.insert((adj[a].len(), a));
        }
        order.push(v);
        upper.push(nbrs);
    }
    (order, upper)
}
