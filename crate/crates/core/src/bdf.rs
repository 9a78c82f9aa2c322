//! Variable-order BDF for semi-explicit DAEs with a diagonal mass matrix.
//!
//! Quasi-constant step size in Nordsieck-like backward-difference form
//! (orders 1 to 5), Newton iterations on `M - c J` with the Jacobian reused
//! until convergence slows, and local error control in the RMS norm.

use crate::dae::{BorderedPattern, DaeModel, DaeSystem, Linearization};
use crate::error::{Error, Result};
use crate::sparse::{Csr, SparseLu};

const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Integrator tolerances and limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdfOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Initial step; chosen automatically when `None`.
    pub first_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for BdfOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-9,
            max_step: f64::INFINITY,
            first_step: None,
            max_steps: 1_000_000,
        }
    }
}

/// Solver counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub residual_evals: usize,
    pub jacobians: usize,
    pub factorizations: usize,
}

impl std::ops::AddAssign for SolverStats {
    fn add_assign(&mut self, o: Self) {
        self.steps += o.steps;
        self.rejected += o.rejected;
        self.residual_evals += o.residual_evals;
        self.jacobians += o.jacobians;
        self.factorizations += o.factorizations;
    }
}

fn rms(v: &[f64], scale: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scale).map(|(a, b)| (a / b) * (a / b)).sum();
    (s / v.len() as f64).sqrt()
}

fn compute_r(order: usize, factor: f64) -> Vec<Vec<f64>> {
    let n = order + 1;
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        m[0][j] = 1.0;
    }
    for i in 1..n {
        for j in 1..n {
            m[i][j] = (i as f64 - 1.0 - factor * j as f64) / i as f64;
        }
    }
    // cumulative product down the columns
    for i in 1..n {
        for j in 0..n {
            m[i][j] *= m[i - 1][j];
        }
    }
    m
}

fn change_d(d: &mut [Vec<f64>], order: usize, factor: f64) {
    let r = compute_r(order, factor);
    let u = compute_r(order, 1.0);
    let n = order + 1;
    let mut ru = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            ru[i][j] = (0..n).map(|k| r[i][k] * u[k][j]).sum();
        }
    }
    let dim = d[0].len();
    let mut out = vec![vec![0.0; dim]; n];
    for (j, row) in out.iter_mut().enumerate() {
        for (i, di) in d.iter().enumerate().take(n) {
            let w = ru[i][j];
            if w != 0.0 {
                for (o, v) in row.iter_mut().zip(di) {
                    *o += w * v;
                }
            }
        }
    }
    for (dst, src) in d.iter_mut().zip(out) {
        *dst = src;
    }
}

/// Interpolant over the last accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t_old: f64,
    pub t: f64,
    h: f64,
    d: Vec<Vec<f64>>,
}

impl DenseStep {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut y = self.d[0].clone();
        let mut p = 1.0;
        for k in 0..self.d.len() - 1 {
            let shift = self.t - self.h * k as f64;
            p *= (t - shift) / (self.h * (k + 1) as f64);
            for (yi, di) in y.iter_mut().zip(&self.d[k + 1]) {
                *yi += di * p;
            }
        }
        y
    }
}

/// One integration run over `[t0, t_end]` with a smooth input.
pub struct Bdf<'a, M: DaeModel, I: Fn(f64) -> f64> {
    dae: &'a DaeSystem<M>,
    input: I,
    opts: BdfOptions,
    pub t: f64,
    t_end: f64,
    pub y: Vec<f64>,
    d: Vec<Vec<f64>>,
    h_abs: f64,
    order: usize,
    n_equal_steps: usize,
    gamma: [f64; MAX_ORDER + 1],
    alpha: [f64; MAX_ORDER + 1],
    error_const: [f64; MAX_ORDER + 2],
    lin: Linearization,
    jac_current: bool,
    pattern: BorderedPattern,
    matrix: Csr<f64>,
    lu: Option<SparseLu<f64>>,
    lu_c: f64,
    pub stats: SolverStats,
}

impl<'a, M: DaeModel, I: Fn(f64) -> f64> Bdf<'a, M, I> {
    /// Starts at a consistent state `y0` at time `t0`.
    pub fn new(
        dae: &'a DaeSystem<M>,
        input: I,
        t0: f64,
        y0: Vec<f64>,
        t_end: f64,
        opts: BdfOptions,
    ) -> Result<Self> {
        let n = y0.len();
        let mut stats = SolverStats::default();
        let lin = dae.linearize(&y0);
        stats.jacobians += 1;
        let pattern = lin.bordered_pattern();
        let matrix = pattern.assemble(&lin, 1.0, 0.0);

        let mut gamma = [0.0; MAX_ORDER + 1];
        let mut alpha = [0.0; MAX_ORDER + 1];
        let mut error_const = [0.0; MAX_ORDER + 2];
        for k in 1..=MAX_ORDER {
            gamma[k] = gamma[k - 1] + 1.0 / k as f64;
            alpha[k] = gamma[k];
        }
        for (k, e) in error_const.iter_mut().enumerate() {
            *e = 1.0 / (k + 1) as f64;
        }

        let f0 = Self::rhs_of(dae, &input, t0, &y0);
        stats.residual_evals += 1;
        let mass = dae.model().mass();
        let ydot: Vec<f64> = f0
            .iter()
            .zip(mass)
            .map(|(f, &m)| if m != 0.0 { f / m } else { 0.0 })
            .collect();
        let span = t_end - t0;
        if !(span > 0.0) {
            return Err(Error::domain(
                "t_end",
                "integration interval must be positive",
            ));
        }
        let h0 = match opts.first_step {
            Some(h) => h,
            None => {
                let scale: Vec<f64> = y0.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
                let d0 = rms(&y0, &scale);
                let d1 = rms(&ydot, &scale);
                if d0 < 1e-5 || d1 < 1e-5 {
                    1e-6 * span
                } else {
                    0.01 * d0 / d1
                }
            }
        }
        .min(span)
        .min(opts.max_step)
        .max(1e-12 * span.max(1.0));

        let mut d = vec![vec![0.0; n]; MAX_ORDER + 3];
        d[0] = y0.clone();
        d[1] = ydot.iter().map(|v| v * h0).collect();

        Ok(Self {
            dae,
            input,
            opts,
            t: t0,
            t_end,
            y: y0,
            d,
            h_abs: h0,
            order: 1,
            n_equal_steps: 0,
            gamma,
            alpha,
            error_const,
            lin,
            jac_current: true,
            pattern,
            matrix,
            lu: None,
            lu_c: f64::NAN,
            stats,
        })
    }

    fn rhs_of(dae: &DaeSystem<M>, input: &I, t: f64, y: &[f64]) -> Vec<f64> {
        let mut f = dae.residual(y);
        f[dae.model().current_index()] += input(t);
        f
    }

    pub fn finished(&self) -> bool {
        self.t >= self.t_end
    }

    /// Last step size taken.
    pub fn step_size(&self) -> f64 {
        self.h_abs
    }

    fn factor(&mut self, c: f64) -> Result<()> {
        if self.lu.is_some() && self.lu_c == c {
            return Ok(());
        }
        self.pattern
            .assemble_into(&self.lin, 1.0, c, &mut self.matrix);
        let res = match &mut self.lu {
            Some(lu) => lu.refactor(&self.matrix),
            None => SparseLu::factor(&self.matrix).map(|lu| {
                self.lu = Some(lu);
            }),
        };
        self.stats.factorizations += 1;
        res.map_err(|_| Error::Integration {
            time: self.t,
            reason: "singular iteration matrix".into(),
        })?;
        self.lu_c = c;
        Ok(())
    }

    fn newton(
        &mut self,
        t_new: f64,
        y_predict: &[f64],
        c: f64,
        psi: &[f64],
        scale: &[f64],
        tol: f64,
    ) -> Result<(bool, usize, Vec<f64>, Vec<f64>)> {
        let n = y_predict.len();
        let mass = self.dae.model().mass();
        let mut d = vec![0.0; n];
        let mut y = y_predict.to_vec();
        let mut dy_norm_old: Option<f64> = None;
        let mut rhs = vec![0.0; self.pattern.dim()];
        for k in 0..NEWTON_MAXITER {
            let f = Self::rhs_of(self.dae, &self.input, t_new, &y);
            self.stats.residual_evals += 1;
            if f.iter().any(|v| !v.is_finite()) {
                return Ok((false, k + 1, y, d));
            }
            for i in 0..n {
                rhs[i] = c * f[i] - mass[i] * (psi[i] + d[i]);
            }
            for r in rhs.iter_mut().skip(n) {
                *r = 0.0;
            }
            self.lu.as_mut().unwrap().solve_in_place(&mut rhs);
            let dy = &rhs[..n];
            let dy_norm = rms(dy, scale);
            let rate = dy_norm_old.map(|old| dy_norm / old);
            // corrections at round-off level say nothing about the rate
            if dy_norm < 1e-3 * tol {
                for i in 0..n {
                    y[i] += dy[i];
                    d[i] += dy[i];
                }
                return Ok((true, k + 1, y, d));
            }
            if let Some(rate) = rate {
                if rate >= 1.0
                    || rate.powi((NEWTON_MAXITER - k) as i32) / (1.0 - rate) * dy_norm > tol
                {
                    return Ok((false, k + 1, y, d));
                }
            }
            for i in 0..n {
                y[i] += dy[i];
                d[i] += dy[i];
            }
            if dy_norm == 0.0 || rate.is_some_and(|r| r / (1.0 - r) * dy_norm < tol) {
                return Ok((true, k + 1, y, d));
            }
            if !dy_norm.is_finite() {
                return Ok((false, k + 1, y, d));
            }
            dy_norm_old = Some(dy_norm);
        }
        Ok((false, NEWTON_MAXITER, y, d))
    }

    /// Advances one accepted step and returns its interpolant.
    pub fn step(&mut self) -> Result<DenseStep> {
        if self.stats.steps >= self.opts.max_steps {
            return Err(Error::Integration {
                time: self.t,
                reason: format!("step limit {} reached", self.opts.max_steps),
            });
        }
        let t = self.t;
        let eps = f64::EPSILON;
        let min_step = 10.0 * eps * t.abs().max(self.t_end.abs()).max(1.0);
        let rtol = self.opts.rtol;
        let newton_tol = (10.0 * eps / rtol).max(0.03f64.min(rtol.sqrt()));

        if self.h_abs > self.opts.max_step {
            let factor = self.opts.max_step / self.h_abs;
            change_d(&mut self.d, self.order, factor);
            self.h_abs = self.opts.max_step;
            self.n_equal_steps = 0;
        }

        let order = self.order;
        let (y_new, d, safety) = loop {
            if self.h_abs < min_step {
                return Err(Error::Integration {
                    time: t,
                    reason: "step size below minimum".into(),
                });
            }
            let mut h = self.h_abs;
            let mut t_new = t + h;
            if t_new >= self.t_end || self.t_end - t_new < min_step {
                t_new = self.t_end;
                let factor = (t_new - t) / self.h_abs;
                change_d(&mut self.d, order, factor);
                self.n_equal_steps = 0;
                h = t_new - t;
                self.h_abs = h;
            }

            let n = self.y.len();
            let mut y_predict = vec![0.0; n];
            for dk in self.d.iter().take(order + 1) {
                for (p, v) in y_predict.iter_mut().zip(dk) {
                    *p += v;
                }
            }
            let scale: Vec<f64> = y_predict
                .iter()
                .map(|v| self.opts.atol + rtol * v.abs())
                .collect();
            let mut psi = vec![0.0; n];
            for k in 1..=order {
                let g = self.gamma[k] / self.alpha[order];
                for (p, v) in psi.iter_mut().zip(&self.d[k]) {
                    *p += g * v;
                }
            }
            let c = h / self.alpha[order];

            let mut result = None;
            loop {
                self.factor(c)?;
                let (conv, it, y, d) =
                    self.newton(t_new, &y_predict, c, &psi, &scale, newton_tol)?;
                if conv {
                    result = Some((y, d, it));
                    break;
                }
                if self.jac_current {
                    break;
                }
                self.lin = self.dae.linearize(&y_predict);
                self.stats.jacobians += 1;
                self.jac_current = true;
                self.lu_c = f64::NAN;
            }
            let Some((y_new, d, n_iter)) = result else {
                self.stats.rejected += 1;
                self.h_abs *= 0.5;
                change_d(&mut self.d, order, 0.5);
                self.n_equal_steps = 0;
                continue;
            };

            let safety =
                0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
            let scale: Vec<f64> = y_new
                .iter()
                .map(|v| self.opts.atol + rtol * v.abs())
                .collect();
            let err: Vec<f64> = d.iter().map(|v| self.error_const[order] * v).collect();
            let error_norm = rms(&err, &scale);
            if error_norm > 1.0 || !error_norm.is_finite() {
                self.stats.rejected += 1;
                let factor = if error_norm.is_finite() {
                    MIN_FACTOR.max(safety * error_norm.powf(-1.0 / (order as f64 + 1.0)))
                } else {
                    MIN_FACTOR
                };
                self.h_abs *= factor;
                change_d(&mut self.d, order, factor);
                self.n_equal_steps = 0;
                continue;
            }
            self.dae.model().check_state(t_new, &y_new)?;
            self.t = t_new;
            break (y_new, d, safety);
        };
        self.stats.steps += 1;
        self.n_equal_steps += 1;
        self.jac_current = false;
        self.y = y_new;

        let h_used = self.h_abs;
        {
            let dd = &mut self.d;
            dd[order + 2] = d.iter().zip(&dd[order + 1]).map(|(a, b)| a - b).collect();
            dd[order + 1] = d.clone();
            for i in (0..=order).rev() {
                let next = dd[i + 1].clone();
                for (a, b) in dd[i].iter_mut().zip(next) {
                    *a += b;
                }
            }
        }
        let dense = DenseStep {
            t_old: t,
            t: self.t,
            h: h_used,
            d: self.d[..=order].to_vec(),
        };

        if self.n_equal_steps < order + 1 {
            return Ok(dense);
        }

        let scale: Vec<f64> = self
            .y
            .iter()
            .map(|v| self.opts.atol + rtol * v.abs())
            .collect();
        let error_norm = rms(
            &d.iter()
                .map(|v| self.error_const[order] * v)
                .collect::<Vec<_>>(),
            &scale,
        );
        let error_m_norm = if order > 1 {
            rms(
                &self.d[order]
                    .iter()
                    .map(|v| self.error_const[order - 1] * v)
                    .collect::<Vec<_>>(),
                &scale,
            )
        } else {
            f64::INFINITY
        };
        let error_p_norm = if order < MAX_ORDER {
            rms(
                &self.d[order + 2]
                    .iter()
                    .map(|v| self.error_const[order + 1] * v)
                    .collect::<Vec<_>>(),
                &scale,
            )
        } else {
            f64::INFINITY
        };
        let norms = [error_m_norm, error_norm, error_p_norm];
        let mut best = (0.0f64, 1usize);
        for (k, &e) in norms.iter().enumerate() {
            let ord = order as f64 + k as f64 - 1.0;
            let f = if e == 0.0 {
                f64::INFINITY
            } else if e.is_finite() {
                e.powf(-1.0 / (ord + 1.0))
            } else {
                0.0
            };
            if f > best.0 {
                best = (f, k);
            }
        }
        self.order = (order + best.1) - 1;
        let factor = MAX_FACTOR.min(safety * best.0);
        self.h_abs *= factor;
        change_d(&mut self.d, self.order, factor);
        self.n_equal_steps = 0;
        Ok(dense)
    }
}
