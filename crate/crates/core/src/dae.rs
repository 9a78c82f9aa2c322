//! Semi-explicit DAE systems `M x' = F(x) + B i(t)` and their linearisation.
//!
//! A model supplies its residual as `f(x, a)` where `a = g(x)` is a short
//! vector of auxiliary quantities (electrode averages, for instance) that
//! would otherwise couple many states densely. The full residual is
//! `F(x) = f(x, g(x))` and its Jacobian `J = f_x + f_a g_x`; linear solves
//! with `alpha M - beta J` are done on the sparse bordered system
//!
//! ```text
//! [ alpha M - beta f_x   -beta f_a ] [k]   [b]
//! [      -g_x                I     ] [a] = [0]
//! ```
//!
//! instead of forming `J` explicitly.

use std::sync::OnceLock;

use crate::dual::{Dual, Scalar};
use crate::error::Result;
use crate::sparse::{Csr, Field};

/// Lanes per dual-number pass.
pub const LANES: usize = 8;

pub trait DaeModel: Send + Sync {
    fn n_states(&self) -> usize;

    fn n_aux(&self) -> usize {
        0
    }

    /// Diagonal of the mass matrix; zero entries mark algebraic rows.
    fn mass(&self) -> &[f64];

    /// Residual `f(x, a)` without the input term.
    fn residual<S: Scalar>(&self, x: &[S], aux: &[S], out: &mut [S]);

    /// Auxiliary quantities `a = g(x)`.
    fn aux<S: Scalar>(&self, _x: &[S], _out: &mut [S]) {}

    fn voltage_index(&self) -> usize {
        self.n_states() - 2
    }

    /// Index of the current state; the input vector B is the unit vector here.
    fn current_index(&self) -> usize {
        self.n_states() - 1
    }

    /// Rejects states outside the model's admissible region.
    fn check_state(&self, _time: f64, _x: &[f64]) -> Result<()> {
        Ok(())
    }

    /// A state at which every structurally present derivative is nonzero.
    /// Used to detect sparsity patterns.
    fn generic_state(&self) -> Vec<f64>;
}

/// Sparsity information computed once per model.
#[derive(Debug, Clone)]
pub struct Structure {
    pub fx: Csr<f64>,
    /// Column groups of `f_x` that share no row.
    pub colors: Vec<Vec<usize>>,
    pub fa: Csr<f64>,
    pub gx: Csr<f64>,
    /// Columns of `g_x` that hold any entry.
    pub gx_cols: Vec<usize>,
}

/// A model together with its cached sparsity structure.
#[derive(Debug)]
pub struct DaeSystem<M> {
    model: M,
    structure: OnceLock<Structure>,
}

impl<M: Clone> Clone for DaeSystem<M> {
    fn clone(&self) -> Self {
        Self {
            model: self.model.clone(),
            structure: self.structure.clone(),
        }
    }
}

impl<M: DaeModel> DaeSystem<M> {
    pub fn new(model: M) -> Self {
        Self {
            model,
            structure: OnceLock::new(),
        }
    }

    /// Reuses a structure detected for another model with the same mesh and mode.
    pub fn with_structure(model: M, structure: Structure) -> Self {
        debug_assert_eq!(structure.fx.n_rows, model.n_states());
        let cell = OnceLock::new();
        let _ = cell.set(structure);
        Self {
            model,
            structure: cell,
        }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }

    pub fn structure(&self) -> &Structure {
        self.structure.get_or_init(|| detect_structure(&self.model))
    }

    pub fn aux(&self, x: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.model.n_aux()];
        self.model.aux(x, &mut a);
        a
    }

    /// Full residual `F(x)`, excluding the input term.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let a = self.aux(x);
        let mut out = vec![0.0; x.len()];
        self.model.residual(x, &a, &mut out);
        out
    }

    /// Exact derivatives of the residual at `x`.
    pub fn linearize(&self, x: &[f64]) -> Linearization {
        let s = self.structure();
        let m = &self.model;
        let n = m.n_states();
        let na = m.n_aux();
        let a = self.aux(x);

        let mut fx = s.fx.clone();
        let mut fa = s.fa.clone();
        let mut gx = s.gx.clone();

        // f_x by colour groups, f_a by direct seeding of the auxiliaries
        enum Seed<'a> {
            Group(&'a [usize]),
            Aux(usize),
        }
        let seeds: Vec<Seed> = s
            .colors
            .iter()
            .map(|g| Seed::Group(g))
            .chain((0..na).map(Seed::Aux))
            .collect();
        let mut xd = vec![Dual::<LANES>::constant(0.0); n];
        let mut ad = vec![Dual::<LANES>::constant(0.0); na];
        let mut out = vec![Dual::<LANES>::constant(0.0); n];
        let mut col_lane = vec![usize::MAX; n];
        for chunk in seeds.chunks(LANES) {
            for (d, &v) in xd.iter_mut().zip(x) {
                *d = Dual::constant(v);
            }
            for (d, &v) in ad.iter_mut().zip(&a) {
                *d = Dual::constant(v);
            }
            col_lane.iter_mut().for_each(|l| *l = usize::MAX);
            let mut aux_lane = vec![usize::MAX; na];
            for (lane, seed) in chunk.iter().enumerate() {
                match seed {
                    Seed::Group(cols) => {
                        for &c in *cols {
                            xd[c].eps[lane] = 1.0;
                            col_lane[c] = lane;
                        }
                    }
                    Seed::Aux(k) => {
                        ad[*k].eps[lane] = 1.0;
                        aux_lane[*k] = lane;
                    }
                }
            }
            m.residual(&xd, &ad, &mut out);
            for r in 0..n {
                for p in fx.indptr[r]..fx.indptr[r + 1] {
                    let lane = col_lane[fx.indices[p]];
                    if lane != usize::MAX {
                        fx.values[p] = out[r].eps[lane];
                    }
                }
                for p in fa.indptr[r]..fa.indptr[r + 1] {
                    let lane = aux_lane[fa.indices[p]];
                    if lane != usize::MAX {
                        fa.values[p] = out[r].eps[lane];
                    }
                }
            }
        }

        if na > 0 {
            let mut gout = vec![Dual::<LANES>::constant(0.0); na];
            for chunk in s.gx_cols.chunks(LANES) {
                for (d, &v) in xd.iter_mut().zip(x) {
                    *d = Dual::constant(v);
                }
                col_lane.iter_mut().for_each(|l| *l = usize::MAX);
                for (lane, &c) in chunk.iter().enumerate() {
                    xd[c].eps[lane] = 1.0;
                    col_lane[c] = lane;
                }
                m.aux(&xd, &mut gout);
                for r in 0..na {
                    for p in gx.indptr[r]..gx.indptr[r + 1] {
                        let lane = col_lane[gx.indices[p]];
                        if lane != usize::MAX {
                            gx.values[p] = gout[r].eps[lane];
                        }
                    }
                }
            }
        }

        Linearization {
            mass: m.mass().to_vec(),
            fx,
            fa,
            gx,
        }
    }

    /// Central finite-difference Jacobian of the full residual, column by
    /// column, with relative step `h` and absolute floor 1e-8.
    pub fn fd_jacobian(&self, x: &[f64], h: f64) -> Vec<Vec<f64>> {
        let n = x.len();
        let mut jac = vec![vec![0.0; n]; n];
        let mut xp = x.to_vec();
        for c in 0..n {
            let step = (h * x[c].abs()).max(1e-8);
            xp[c] = x[c] + step;
            let fp = self.residual(&xp);
            xp[c] = x[c] - step;
            let fm = self.residual(&xp);
            xp[c] = x[c];
            for r in 0..n {
                jac[r][c] = (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        jac
    }
}

/// Largest entrywise relative difference between two dense Jacobians on
/// the union of their patterns.
///
/// Entries are compared relative to `max(|a|, |b|, row_floor * row_max)`,
/// where `row_max` is the largest magnitude in that row of `a`. The row
/// floor keeps finite-difference round-off on structurally zero entries from
/// dominating; pass 0 for a plain entrywise comparison.
pub fn jacobian_discrepancy(a: &[Vec<f64>], b: &[Vec<f64>], row_floor: f64) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for (r, (ra, rb)) in a.iter().zip(b).enumerate() {
        let row_max = ra.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (c, (&x, &y)) in ra.iter().zip(rb).enumerate() {
            if x == 0.0 && y == 0.0 {
                continue;
            }
            let scale = x.abs().max(y.abs()).max(row_floor * row_max);
            let e = (x - y).abs() / scale;
            if e > worst.0 {
                worst = (e, r, c);
            }
        }
    }
    worst
}

/// Derivatives of a model at one state.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub mass: Vec<f64>,
    pub fx: Csr<f64>,
    pub fa: Csr<f64>,
    pub gx: Csr<f64>,
}

impl Linearization {
    pub fn n_states(&self) -> usize {
        self.mass.len()
    }

    pub fn n_aux(&self) -> usize {
        self.gx.n_rows
    }

    /// The Jacobian `J = f_x + f_a g_x` as an explicit sparse matrix.
    pub fn jacobian(&self) -> Csr<f64> {
        let n = self.n_states();
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.fx.nnz());
        for r in 0..n {
            for (c, v) in self.fx.row(r) {
                t.push((r, c, v));
            }
            for (k, fak) in self.fa.row(r) {
                for (c, g) in self.gx.row(k) {
                    t.push((r, c, fak * g));
                }
            }
        }
        Csr::from_triplets(n, n, &t)
    }

    /// Pattern and value builder for `alpha M - beta J` in bordered form.
    pub fn bordered_pattern(&self) -> BorderedPattern {
        BorderedPattern::new(self)
    }
}

/// Fixed sparsity layout of the bordered matrix, reused across shifts.
#[derive(Debug, Clone)]
pub struct BorderedPattern {
    n: usize,
    na: usize,
    /// For every stored entry: where its value comes from.
    sources: Vec<Source>,
    template: Csr<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Source {
    /// Mass diagonal and/or `f_x` entry of row r.
    Main {
        mass: f64,
        fx: Option<usize>,
    },
    Fa(usize),
    Gx(usize),
    Identity,
}

impl BorderedPattern {
    fn new(lin: &Linearization) -> Self {
        let n = lin.n_states();
        let na = lin.n_aux();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut sources = Vec::new();
        for r in 0..n {
            let mut row: Vec<(usize, Source)> = Vec::new();
            let mut has_diag = false;
            for p in lin.fx.indptr[r]..lin.fx.indptr[r + 1] {
                let c = lin.fx.indices[p];
                let mass = if c == r { lin.mass[r] } else { 0.0 };
                has_diag |= c == r;
                row.push((c, Source::Main { mass, fx: Some(p) }));
            }
            if !has_diag && lin.mass[r] != 0.0 {
                row.push((
                    r,
                    Source::Main {
                        mass: lin.mass[r],
                        fx: None,
                    },
                ));
            }
            for p in lin.fa.indptr[r]..lin.fa.indptr[r + 1] {
                row.push((n + lin.fa.indices[p], Source::Fa(p)));
            }
            row.sort_by_key(|e| e.0);
            for (c, s) in row {
                indices.push(c);
                sources.push(s);
            }
            indptr.push(indices.len());
        }
        for k in 0..na {
            let mut row: Vec<(usize, Source)> = Vec::new();
            for p in lin.gx.indptr[k]..lin.gx.indptr[k + 1] {
                row.push((lin.gx.indices[p], Source::Gx(p)));
            }
            row.push((n + k, Source::Identity));
            row.sort_by_key(|e| e.0);
            for (c, s) in row {
                indices.push(c);
                sources.push(s);
            }
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        Self {
            n,
            na,
            sources,
            template: Csr {
                n_rows: n + na,
                n_cols: n + na,
                indptr,
                indices,
                values: vec![0.0; nnz],
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.na
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    /// Values of `alpha M - beta J` in bordered form for the given derivatives.
    pub fn assemble<T: Field>(&self, lin: &Linearization, alpha: T, beta: T) -> Csr<T> {
        let mut out = Csr {
            n_rows: self.template.n_rows,
            n_cols: self.template.n_cols,
            indptr: self.template.indptr.clone(),
            indices: self.template.indices.clone(),
            values: vec![T::zero(); self.sources.len()],
        };
        self.assemble_into(lin, alpha, beta, &mut out);
        out
    }

    /// Writes the values into an existing matrix with this pattern.
    pub fn assemble_into<T: Field>(
        &self,
        lin: &Linearization,
        alpha: T,
        beta: T,
        out: &mut Csr<T>,
    ) {
        debug_assert_eq!(out.values.len(), self.sources.len());
        for (v, s) in out.values.iter_mut().zip(&self.sources) {
            *v = match *s {
                Source::Main { mass, fx } => {
                    let mut v = alpha * T::from_f64(mass);
                    if let Some(p) = fx {
                        v -= beta * T::from_f64(lin.fx.values[p]);
                    }
                    v
                }
                Source::Fa(p) => -(beta * T::from_f64(lin.fa.values[p])),
                Source::Gx(p) => T::from_f64(-lin.gx.values[p]),
                Source::Identity => T::from_f64(1.0),
            };
        }
    }

    /// Extends a state-sized right-hand side with zeros for the border.
    pub fn extend_rhs<T: Field>(&self, b: &[T]) -> Vec<T> {
        let mut out = b.to_vec();
        out.resize(self.dim(), T::zero());
        out
    }
}

fn detect_structure<M: DaeModel>(m: &M) -> Structure {
    let n = m.n_states();
    let na = m.n_aux();
    let x = m.generic_state();
    let mut a = vec![0.0; na];
    m.aux(&x, &mut a);

    let mut fx_t = Vec::new();
    let mut fa_t = Vec::new();
    let mut gx_t = Vec::new();
    let mut out = vec![Dual::<LANES>::constant(0.0); n];
    let mut gout = vec![Dual::<LANES>::constant(0.0); na];
    let cols: Vec<usize> = (0..n).collect();
    for chunk in cols.chunks(LANES) {
        let mut xd: Vec<Dual<LANES>> = x.iter().map(|&v| Dual::constant(v)).collect();
        for (lane, &c) in chunk.iter().enumerate() {
            xd[c].eps[lane] = 1.0;
        }
        let ad: Vec<Dual<LANES>> = a.iter().map(|&v| Dual::constant(v)).collect();
        m.residual(&xd, &ad, &mut out);
        for (r, o) in out.iter().enumerate() {
            for (lane, &c) in chunk.iter().enumerate() {
                if o.eps[lane] != 0.0 {
                    fx_t.push((r, c, 0.0));
                }
            }
        }
        if na > 0 {
            m.aux(&xd, &mut gout);
            for (r, o) in gout.iter().enumerate() {
                for (lane, &c) in chunk.iter().enumerate() {
                    if o.eps[lane] != 0.0 {
                        gx_t.push((r, c, 0.0));
                    }
                }
            }
        }
    }
    let aux_idx: Vec<usize> = (0..na).collect();
    for chunk in aux_idx.chunks(LANES) {
        let xd: Vec<Dual<LANES>> = x.iter().map(|&v| Dual::constant(v)).collect();
        let mut ad: Vec<Dual<LANES>> = a.iter().map(|&v| Dual::constant(v)).collect();
        for (lane, &k) in chunk.iter().enumerate() {
            ad[k].eps[lane] = 1.0;
        }
        m.residual(&xd, &ad, &mut out);
        for (r, o) in out.iter().enumerate() {
            for (lane, &k) in chunk.iter().enumerate() {
                if o.eps[lane] != 0.0 {
                    fa_t.push((r, k, 0.0));
                }
            }
        }
    }
    let fx = Csr::from_triplets(n, n, &fx_t);
    let fa = Csr::from_triplets(n, na, &fa_t);
    let gx = Csr::from_triplets(na, n, &gx_t);
    let colors = color_columns(&fx);
    let mut gx_cols: Vec<usize> = gx.indices.clone();
    gx_cols.sort_unstable();
    gx_cols.dedup();
    Structure {
        fx,
        colors,
        fa,
        gx,
        gx_cols,
    }
}

/// Greedy distance-2 colouring: columns in one group never share a row.
fn color_columns(a: &Csr<f64>) -> Vec<Vec<usize>> {
    let n = a.n_cols;
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..a.n_rows {
        for (c, _) in a.row(r) {
            col_rows[c].push(r);
        }
    }
    let mut row_colors: Vec<Vec<usize>> = vec![Vec::new(); a.n_rows];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut forbidden = Vec::new();
    for c in 0..n {
        forbidden.clear();
        for &r in &col_rows[c] {
            forbidden.extend_from_slice(&row_colors[r]);
        }
        forbidden.sort_unstable();
        forbidden.dedup();
        let color = (0..).find(|k| forbidden.binary_search(k).is_err()).unwrap();
        if color == groups.len() {
            groups.push(Vec::new());
        }
        groups[color].push(c);
        for &r in &col_rows[c] {
            row_colors[r].push(color);
        }
    }
    groups
}
