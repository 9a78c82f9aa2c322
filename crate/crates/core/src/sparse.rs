//! Compressed sparse rows and a direct LU solver for real or complex systems.
//!
//! Pivots are chosen by a Markowitz search with threshold partial pivoting.
//! The resulting pivot order fixes the fill pattern, so later matrices with
//! the same sparsity pattern are refactored along the stored pattern without
//! searching again; a pivot that turns out too small triggers a fresh search.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// Scalar field the solver works over.
pub trait Field:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Send
    + Sync
{
    fn zero() -> Self;
    fn from_f64(v: f64) -> Self;
    fn modulus(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

/// Sparse matrix in compressed-row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Field> Csr<T> {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    /// Explicit zeros are kept as structural entries.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; n_rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(rows.len(), n_cols, &triplets)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n_rows)
            .map(|r| self.row(r).fold(T::zero(), |acc, (c, v)| acc + v * x[c]))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out[r][c] = v;
            }
        }
        out
    }

    pub fn same_pattern(&self, other: &Csr<T>) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.indptr == other.indptr
            && self.indices == other.indices
    }

    /// Coordinate listing `row col value`, one entry per line.
    pub fn to_coordinate_text(&self) -> String
    where
        T: std::fmt::Display,
    {
        let mut out = String::from("# row, col, value\n");
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.push_str(&format!("{r} {c} {v}\n"));
            }
        }
        out
    }
}

/// Why a factorisation failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LuError {
    NotSquare,
    Singular,
}

/// Threshold for accepting a pivot relative to the largest entry in its column.
const MARKOWITZ_THRESHOLD: f64 = 0.1;
/// Number of lowest-count columns examined per pivot search.
const SEARCH_COLUMNS: usize = 4;
/// A refactored pivot smaller than this fraction of its row forces a new search.
const PIVOT_CHECK: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Symbolic {
    /// Original row placed at pivot position k.
    row_perm: Vec<usize>,
    /// Original column placed at pivot position k.
    col_perm: Vec<usize>,
    col_pos: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    u_ptr: Vec<usize>,
    /// Column positions of row k of U; the first entry is the diagonal.
    u_idx: Vec<usize>,
}

/// LU factors of a square sparse matrix, `A[P, Q] = L U`.
#[derive(Debug, Clone)]
pub struct SparseLu<T> {
    n: usize,
    sym: Symbolic,
    l_val: Vec<T>,
    u_val: Vec<T>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    work: Vec<T>,
    searches: usize,
}

impl<T: Field> SparseLu<T> {
    pub fn factor(a: &Csr<T>) -> Result<Self, LuError> {
        if a.n_rows != a.n_cols {
            return Err(LuError::NotSquare);
        }
        let sym = markowitz_order(a)?;
        let n = a.n_rows;
        let mut lu = Self {
            n,
            l_val: vec![T::zero(); sym.l_idx.len()],
            u_val: vec![T::zero(); sym.u_idx.len()],
            sym,
            indptr: a.indptr.clone(),
            indices: a.indices.clone(),
            work: vec![T::zero(); n],
            searches: 1,
        };
        if lu.numeric(a) {
            Ok(lu)
        } else {
            Err(LuError::Singular)
        }
    }

    /// Refactors a matrix with the same pattern, reusing the pivot order when
    /// it stays numerically acceptable.
    pub fn refactor(&mut self, a: &Csr<T>) -> Result<(), LuError> {
        if a.n_rows != self.n || a.indptr != self.indptr || a.indices != self.indices {
            *self = Self::factor(a)?;
            return Ok(());
        }
        if self.numeric(a) {
            return Ok(());
        }
        let searches = self.searches;
        *self = Self::factor(a)?;
        self.searches += searches;
        Ok(())
    }

    /// Number of pivot searches performed over the lifetime of the factors.
    pub fn pivot_searches(&self) -> usize {
        self.searches
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Up-looking row elimination along the stored pattern. Returns false on
    /// a rejected pivot.
    fn numeric(&mut self, a: &Csr<T>) -> bool {
        let sym = &self.sym;
        let w = &mut self.work;
        for k in 0..self.n {
            let src = sym.row_perm[k];
            for p in a.indptr[src]..a.indptr[src + 1] {
                w[sym.col_pos[a.indices[p]]] = a.values[p];
            }
            for p in sym.l_ptr[k]..sym.l_ptr[k + 1] {
                let j = sym.l_idx[p];
                let l = w[j] / self.u_val[sym.u_ptr[j]];
                w[j] = T::zero();
                self.l_val[p] = l;
                for q in sym.u_ptr[j] + 1..sym.u_ptr[j + 1] {
                    let c = sym.u_idx[q];
                    w[c] -= l * self.u_val[q];
                }
            }
            let mut row_max: f64 = 0.0;
            for q in sym.u_ptr[k]..sym.u_ptr[k + 1] {
                let c = sym.u_idx[q];
                self.u_val[q] = w[c];
                row_max = row_max.max(w[c].modulus());
                w[c] = T::zero();
            }
            let pivot = self.u_val[sym.u_ptr[k]];
            if !pivot.is_finite() || !(pivot.modulus() > PIVOT_CHECK * row_max) {
                w.iter_mut().for_each(|v| *v = T::zero());
                return false;
            }
        }
        true
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&mut self, b: &mut [T]) {
        let sym = &self.sym;
        let n = self.n;
        let y = &mut self.work;
        for k in 0..n {
            let mut acc = b[sym.row_perm[k]];
            for p in sym.l_ptr[k]..sym.l_ptr[k + 1] {
                acc -= self.l_val[p] * y[sym.l_idx[p]];
            }
            y[k] = acc;
        }
        for k in (0..n).rev() {
            let start = sym.u_ptr[k];
            let mut acc = y[k];
            for q in start + 1..sym.u_ptr[k + 1] {
                acc -= self.u_val[q] * y[sym.u_idx[q]];
            }
            y[k] = acc / self.u_val[start];
        }
        for k in 0..n {
            b[sym.col_perm[k]] = y[k];
            y[k] = T::zero();
        }
    }

    pub fn solve(&mut self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Fill of the factors, `nnz(L) + nnz(U)`.
    pub fn factor_nnz(&self) -> usize {
        self.sym.l_idx.len() + self.sym.u_idx.len()
    }
}

fn markowitz_order<T: Field>(a: &Csr<T>) -> Result<Symbolic, LuError> {
    let n = a.n_rows;
    let mut rows: Vec<Vec<(usize, T)>> = (0..n).map(|r| a.row(r).collect()).collect();
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, row) in rows.iter().enumerate() {
        for &(c, _) in row {
            col_rows[c].push(r);
        }
    }
    let mut row_active = vec![true; n];
    let mut col_active = vec![true; n];
    let mut col_count: Vec<usize> = col_rows.iter().map(Vec::len).collect();
    let mut marker = vec![usize::MAX; n];
    let mut slot = vec![0usize; n];
    let mut row_perm = Vec::with_capacity(n);
    let mut col_perm = Vec::with_capacity(n);

    for step in 0..n {
        // candidate columns with the fewest active entries
        let mut cands: Vec<(usize, usize)> = Vec::with_capacity(SEARCH_COLUMNS + 1);
        for c in (0..n).filter(|&c| col_active[c]) {
            let key = (col_count[c], c);
            if cands.len() < SEARCH_COLUMNS || key < cands[cands.len() - 1] {
                let at = cands.partition_point(|x| *x < key);
                cands.insert(at, key);
                cands.truncate(SEARCH_COLUMNS);
            }
        }
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for &(count, c) in &cands {
            col_rows[c].retain(|&r| row_active[r]);
            let entries: Vec<(usize, f64)> = col_rows[c]
                .iter()
                .filter_map(|&r| {
                    rows[r]
                        .iter()
                        .find(|e| e.0 == c)
                        .map(|e| (r, e.1.modulus()))
                })
                .collect();
            let col_max = entries.iter().fold(0.0f64, |m, e| m.max(e.1));
            if !(col_max > 0.0) || !col_max.is_finite() {
                continue;
            }
            for (r, mag) in entries {
                if mag < MARKOWITZ_THRESHOLD * col_max {
                    continue;
                }
                let cost = (rows[r].len() - 1) * (count.max(1) - 1);
                let better = match best {
                    None => true,
                    Some((_, _, bc, bm)) => cost < bc || (cost == bc && mag > bm),
                };
                if better {
                    best = Some((r, c, cost, mag));
                }
            }
        }
        let Some((pr, pc, _, _)) = best else {
            return Err(LuError::Singular);
        };
        row_perm.push(pr);
        col_perm.push(pc);
        row_active[pr] = false;
        col_active[pc] = false;

        let prow = std::mem::take(&mut rows[pr]);
        let pivot = prow.iter().find(|e| e.0 == pc).map(|e| e.1).unwrap();
        for &(c, _) in &prow {
            col_count[c] -= 1;
        }
        let targets: Vec<usize> = col_rows[pc]
            .iter()
            .copied()
            .filter(|&r| row_active[r])
            .collect();
        for r in targets {
            let row = &mut rows[r];
            let Some(at) = row.iter().position(|e| e.0 == pc) else {
                continue;
            };
            let l = row[at].1 / pivot;
            row.swap_remove(at);
            col_count[pc] -= 1;
            for (k, &(c, _)) in row.iter().enumerate() {
                marker[c] = r + step * n;
                slot[c] = k;
            }
            for &(c, v) in &prow {
                if c == pc {
                    continue;
                }
                if marker[c] == r + step * n {
                    row[slot[c]].1 -= l * v;
                } else {
                    row.push((c, -(l * v)));
                    col_rows[c].push(r);
                    col_count[c] += 1;
                }
            }
        }
        rows[pr] = prow;
    }

    Ok(symbolic_from_order(a, row_perm, col_perm))
}

/// Computes the L and U patterns of `A[P, Q]` factored without pivoting.
fn symbolic_from_order<T: Field>(
    a: &Csr<T>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
) -> Symbolic {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = a.n_rows;
    let mut col_pos = vec![0; n];
    for (k, &c) in col_perm.iter().enumerate() {
        col_pos[c] = k;
    }
    let mut l_ptr = vec![0];
    let mut l_idx = Vec::new();
    let mut u_ptr = vec![0];
    let mut u_idx: Vec<usize> = Vec::new();
    let mut mark = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    let mut upper = Vec::new();
    for k in 0..n {
        upper.clear();
        mark[k] = k;
        for (c, _) in a.row(row_perm[k]) {
            let j = col_pos[c];
            if mark[j] != k {
                mark[j] = k;
                if j < k {
                    heap.push(Reverse(j));
                } else {
                    upper.push(j);
                }
            }
        }
        while let Some(Reverse(j)) = heap.pop() {
            l_idx.push(j);
            for &c in &u_idx[u_ptr[j] + 1..u_ptr[j + 1]] {
                if mark[c] != k {
                    mark[c] = k;
                    if c < k {
                        heap.push(Reverse(c));
                    } else {
                        upper.push(c);
                    }
                }
            }
        }
        l_ptr.push(l_idx.len());
        upper.retain(|&c| c != k);
        upper.sort_unstable();
        u_idx.push(k);
        u_idx.extend_from_slice(&upper);
        u_ptr.push(u_idx.len());
    }
    Symbolic {
        row_perm,
        col_perm,
        col_pos,
        l_ptr,
        l_idx,
        u_ptr,
        u_idx,
    }
}

/// Dense LU with partial pivoting; used as a reference solver.
pub fn dense_solve<T: Field>(a: &[Vec<T>], b: &[T]) -> Result<Vec<T>, LuError> {
    let n = a.len();
    let mut m: Vec<Vec<T>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].modulus().total_cmp(&m[j][k].modulus()))
            .unwrap();
        if !(m[p][k].modulus() > 0.0) {
            return Err(LuError::Singular);
        }
        m.swap(k, p);
        x.swap(k, p);
        for i in k + 1..n {
            let l = m[i][k] / m[k][k];
            if l == T::zero() {
                continue;
            }
            for j in k..n {
                let v = m[k][j];
                m[i][j] -= l * v;
            }
            let v = x[k];
            x[i] -= l * v;
        }
    }
    for k in (0..n).rev() {
        let mut acc = x[k];
        for j in k + 1..n {
            acc -= m[k][j] * x[j];
        }
        x[k] = acc / m[k][k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, density: f64, seed: u64) -> Csr<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for r in 0..n {
            t.push((r, r, rng.gen_range(0.5..2.0)));
            for c in 0..n {
                if c != r && rng.gen::<f64>() < density {
                    t.push((r, c, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        Csr::from_triplets(n, n, &t)
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_dense_solver() {
        for seed in 0..20 {
            let a = random_sparse(40, 0.08, seed);
            let b: Vec<f64> = (0..40).map(|k| (k as f64).sin()).collect();
            let x = SparseLu::factor(&a).unwrap().solve(&b);
            let xd = dense_solve(&a.to_dense(), &b).unwrap();
            assert!(max_err(&x, &xd) < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn needs_pivoting() {
        // zero diagonal, solvable only with row exchanges
        let a = Csr::from_dense(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 2.0],
            vec![0.0, 3.0, 1.0],
        ]);
        let b = vec![1.0, 2.0, 3.0];
        let x = SparseLu::factor(&a).unwrap().solve(&b);
        let ax = a.matvec(&x);
        assert!(max_err(&ax, &b) < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = Csr::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(SparseLu::factor(&a).unwrap_err(), LuError::Singular);
    }

    #[test]
    fn refactor_reuses_and_recovers() {
        let a = random_sparse(30, 0.1, 7);
        let mut lu = SparseLu::factor(&a).unwrap();
        let mut a2 = a.clone();
        for v in &mut a2.values {
            *v *= 1.3;
        }
        lu.refactor(&a2).unwrap();
        assert_eq!(lu.pivot_searches(), 1);
        let b = vec![1.0; 30];
        let x = lu.solve(&b);
        assert!(max_err(&a2.matvec(&x), &b) < 1e-11);

        // zero out a used pivot: reuse must fail over to a fresh search
        let mut a3 = a.clone();
        let first = lu.sym.row_perm[0];
        let col = lu.sym.col_perm[0];
        let span = a3.indptr[first]..a3.indptr[first + 1];
        let k = a3.indices[span.clone()].binary_search(&col).unwrap();
        a3.values[span.start + k] = 0.0;
        if let Ok(()) = lu.refactor(&a3) {
            let x = lu.solve(&b);
            assert!(max_err(&a3.matvec(&x), &b) < 1e-10);
        }
    }

    #[test]
    fn complex_system() {
        let n = 25;
        let re = random_sparse(n, 0.1, 3);
        let im = random_sparse(n, 0.1, 4);
        let mut t = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = Complex64::new(re.get(r, c), 0.5 * im.get(r, c));
                if v != Complex64::zero() {
                    t.push((r, c, v));
                }
            }
        }
        let a = Csr::from_triplets(n, n, &t);
        let b: Vec<Complex64> = (0..n).map(|k| Complex64::new(1.0, k as f64)).collect();
        let x = SparseLu::factor(&a).unwrap().solve(&b);
        let xd = dense_solve(&a.to_dense(), &b).unwrap();
        for (u, v) in x.iter().zip(&xd) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn triplets_are_summed() {
        let a = Csr::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 0.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 2);
    }
}
