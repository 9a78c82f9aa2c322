//! Time-domain simulation under piecewise current profiles, and impedance by
//! sinusoidal excitation with single-bin Fourier projection.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::bdf::{Bdf, BdfOptions, SolverStats};
use crate::dae::{DaeModel, DaeSystem};
use crate::error::{Error, Result};
use crate::model::Spme;
use crate::sparse::dense_solve;

/// Current over one profile segment. Positive current charges the cell.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentKind {
    Constant(f64),
    /// `I sin(2 pi f (t - t_start))`.
    Sinusoid {
        amplitude: f64,
        freq_hz: f64,
    },
    /// Zero-order hold of `values[k]` from `times[k]` (relative to the
    /// segment start) until the next sample.
    Sampled {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub kind: SegmentKind,
}

/// Piecewise current signal starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurrentProfile {
    segments: Vec<Segment>,
}

impl CurrentProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(self, current: f64, duration: f64) -> Result<Self> {
        self.push(Segment {
            duration,
            kind: SegmentKind::Constant(current),
        })
    }

    pub fn rest(self, duration: f64) -> Result<Self> {
        self.constant(0.0, duration)
    }

    pub fn sinusoid(self, amplitude: f64, freq_hz: f64, duration: f64) -> Result<Self> {
        if !(freq_hz > 0.0 && freq_hz.is_finite()) {
            return Err(Error::domain("freq_hz", "must be positive"));
        }
        self.push(Segment {
            duration,
            kind: SegmentKind::Sinusoid { amplitude, freq_hz },
        })
    }

    /// Zero-order-hold table. The segment lasts until one sample interval
    /// past the last sample when `duration` is `None`.
    pub fn sampled(self, times: Vec<f64>, values: Vec<f64>, duration: Option<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::domain(
                "sampled profile",
                "times and values must be non-empty and equal length",
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::domain(
                "sampled profile",
                "first sample time must be 0",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain(
                "sampled profile",
                "times must be strictly increasing",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("sampled profile", "values must be finite"));
        }
        let last = *times.last().unwrap();
        let duration = match duration {
            Some(d) => d,
            None if times.len() > 1 => last + (last - times[times.len() - 2]),
            None => {
                return Err(Error::domain(
                    "sampled profile",
                    "a single sample needs a duration",
                ))
            }
        };
        if duration <= last {
            return Err(Error::domain(
                "sampled profile",
                "duration must extend past the last sample",
            ));
        }
        self.push(Segment {
            duration,
            kind: SegmentKind::Sampled { times, values },
        })
    }

    pub fn push(mut self, seg: Segment) -> Result<Self> {
        if !(seg.duration > 0.0 && seg.duration.is_finite()) {
            return Err(Error::domain(
                "duration",
                "segment durations must be positive",
            ));
        }
        if let SegmentKind::Constant(i) | SegmentKind::Sinusoid { amplitude: i, .. } = seg.kind {
            if !i.is_finite() {
                return Err(Error::domain("current", "must be finite"));
            }
        }
        self.segments.push(seg);
        Ok(self)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Current at `t`, right-continuous at segment and sample boundaries.
    pub fn current_at(&self, t: f64) -> f64 {
        let mut start = 0.0;
        for (k, seg) in self.segments.iter().enumerate() {
            let end = start + seg.duration;
            if t < end || k + 1 == self.segments.len() {
                return seg.kind.eval(t - start);
            }
            start = end;
        }
        0.0
    }

    /// Smooth pieces `(t_start, t_end, input)` between discontinuities.
    fn pieces(&self) -> Vec<(f64, f64, Piece)> {
        let mut out = Vec::new();
        let mut start = 0.0;
        for seg in &self.segments {
            let end = start + seg.duration;
            match &seg.kind {
                SegmentKind::Constant(i) => out.push((start, end, Piece::Constant(*i))),
                SegmentKind::Sinusoid { amplitude, freq_hz } => out.push((
                    start,
                    end,
                    Piece::Sine {
                        amplitude: *amplitude,
                        omega: 2.0 * PI * freq_hz,
                        t0: start,
                    },
                )),
                SegmentKind::Sampled { times, values } => {
                    // runs of equal samples form one piece
                    let mut k = 0;
                    while k < times.len() {
                        let mut m = k + 1;
                        while m < times.len() && values[m] == values[k] {
                            m += 1;
                        }
                        let a = start + times[k];
                        let b = if m < times.len() {
                            start + times[m]
                        } else {
                            end
                        };
                        out.push((a, b, Piece::Constant(values[k])));
                        k = m;
                    }
                }
            }
            start = end;
        }
        out
    }
}

impl SegmentKind {
    fn eval(&self, tau: f64) -> f64 {
        match self {
            SegmentKind::Constant(i) => *i,
            SegmentKind::Sinusoid { amplitude, freq_hz } => {
                amplitude * (2.0 * PI * freq_hz * tau).sin()
            }
            SegmentKind::Sampled { times, values } => {
                let k = times.partition_point(|&s| s <= tau);
                values[k.saturating_sub(1)]
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Constant(f64),
    Sine { amplitude: f64, omega: f64, t0: f64 },
}

impl Piece {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            Piece::Constant(i) => i,
            Piece::Sine {
                amplitude,
                omega,
                t0,
            } => amplitude * (omega * (t - t0)).sin(),
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Keep full state snapshots at every output time.
    pub store_states: bool,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-9,
            max_step: f64::INFINITY,
            store_states: false,
            max_steps: 2_000_000,
        }
    }
}

impl SimOptions {
    /// Same relative and absolute tolerance.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

/// Sampled simulation output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub states: Option<Vec<Vec<f64>>>,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// `n` equally spaced stamps `0, dt, ..., (n-1) dt`.
pub fn uniform_times(dt: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * dt).collect()
}

/// Solves the algebraic rows for their own unknowns with differential
/// states held fixed, for input `i`.
pub fn reinitialize<M: DaeModel>(
    dae: &DaeSystem<M>,
    x: &mut [f64],
    i: f64,
    tol: f64,
) -> Result<()> {
    let model = dae.model();
    let alg: Vec<usize> = model
        .mass()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m == 0.0)
        .map(|(k, _)| k)
        .collect();
    if alg.is_empty() {
        return Ok(());
    }
    let ci = model.current_index();
    let res = |x: &[f64]| {
        let mut f = dae.residual(x);
        f[ci] += i;
        alg.iter().map(|&k| f[k]).collect::<Vec<f64>>()
    };
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..50 {
        let r = res(x);
        let scale = 1.0 + alg.iter().map(|&k| x[k].abs()).fold(0.0, f64::max);
        if r.iter().all(|v| v.abs() <= tol * scale) {
            return Ok(());
        }
        let j = dae.linearize(x).jacobian();
        let sub: Vec<Vec<f64>> = alg
            .iter()
            .map(|&r| alg.iter().map(|&c| j.get(r, c)).collect())
            .collect();
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = dense_solve(&sub, &neg).map_err(|_| Error::Integration {
            time: f64::NAN,
            reason: "singular algebraic subsystem during reinitialization".into(),
        })?;
        // backtracking on the residual norm
        let r0 = norm(&r);
        let base: Vec<f64> = alg.iter().map(|&k| x[k]).collect();
        let mut lambda = 1.0;
        loop {
            for ((&k, d), b) in alg.iter().zip(&dx).zip(&base) {
                x[k] = b + lambda * d;
            }
            let r1 = norm(&res(x));
            if r1.is_finite() && (r1 < r0 || lambda < 1e-10) {
                break;
            }
            lambda *= 0.5;
        }
    }
    let r = res(x);
    if r.iter().all(|v| v.is_finite() && v.abs() <= tol.max(1e-8)) {
        return Ok(());
    }
    Err(Error::Integration {
        time: f64::NAN,
        reason: "consistent reinitialization did not converge".into(),
    })
}

/// Integrates `M x' = F(x) + B i(t)` from `x0` at `t = 0` over the profile,
/// sampling at `out_times`.
///
/// At interior discontinuities the reported state is the right limit, after
/// reinitialization of the algebraic rows. This includes `t = 0`, where the
/// algebraic rows of `x0` are made consistent with the initial current.
pub fn integrate<M: DaeModel>(
    dae: &DaeSystem<M>,
    x0: &[f64],
    profile: &CurrentProfile,
    out_times: &[f64],
    opts: &SimOptions,
) -> Result<Trajectory> {
    let n = dae.n_states();
    if x0.len() != n {
        return Err(Error::domain(
            "x0",
            format!("expected {n} states, got {}", x0.len()),
        ));
    }
    if profile.segments().is_empty() {
        return Err(Error::domain("profile", "no segments"));
    }
    let total = profile.duration();
    if out_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("out_times", "must be strictly increasing"));
    }
    if let (Some(&a), Some(&b)) = (out_times.first(), out_times.last()) {
        if a < 0.0 || b > total * (1.0 + 1e-12) {
            return Err(Error::domain(
                "out_times",
                format!("must lie in [0, {total}]"),
            ));
        }
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::domain("tol", "tolerances must be positive"));
    }

    let model = dae.model();
    let (vi, ci) = (model.voltage_index(), model.current_index());
    let mut traj = Trajectory {
        states: opts.store_states.then(Vec::new),
        ..Trajectory::default()
    };
    let record = |traj: &mut Trajectory, t: f64, x: &[f64]| {
        traj.t.push(t);
        traj.current.push(x[ci]);
        traj.voltage.push(x[vi]);
        if let Some(s) = traj.states.as_mut() {
            s.push(x.to_vec());
        }
    };

    let mut next = 0;

    let bdf_opts = BdfOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        max_step: opts.max_step,
        first_step: None,
        max_steps: opts.max_steps,
    };
    let pieces = profile.pieces();
    let mut x = x0.to_vec();
    let reinit_tol = opts.atol.min(1e-10);
    for (p, &(a, b, piece)) in pieces.iter().enumerate() {
        let last = p + 1 == pieces.len();
        let b = if last { total } else { b };
        reinitialize(dae, &mut x, piece.eval(a), reinit_tol).map_err(|e| with_time(e, a))?;
        while next < out_times.len() && out_times[next] <= a {
            record(&mut traj, out_times[next], &x);
            next += 1;
        }
        let input = move |t: f64| piece.eval(t);
        let mut bdf = Bdf::new(dae, input, a, x.clone(), b, bdf_opts)?;
        while !bdf.finished() {
            let step = bdf.step()?;
            while next < out_times.len() {
                let t = out_times[next];
                let inside = t <= step.t || (last && bdf.finished());
                if !inside || (!last && t >= b) {
                    break;
                }
                let y = if t >= step.t {
                    bdf.y.clone()
                } else {
                    step.eval(t)
                };
                record(&mut traj, t, &y);
                next += 1;
            }
        }
        traj.stats += bdf.stats;
        x = bdf.y;
    }
    Ok(traj)
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::Integration { time, reason } if time.is_nan() => {
            Error::Integration { time: t, reason }
        }
        other => other,
    }
}

/// Single-bin Fourier coefficient of uniformly sampled data at `omega`.
///
/// For `v(t) = V sin(w t + phi)` sampled at `t_n = t0 + n dt` over an integer
/// number of periods, returns `V e^{j phi}`.
pub fn dft_bin(samples: &[f64], omega: f64, sample_period: f64, t0: f64) -> Result<Complex64> {
    if samples.is_empty() || !(sample_period > 0.0) || !(omega > 0.0) {
        return Err(Error::domain(
            "dft_bin",
            "need samples, a positive period and a positive frequency",
        ));
    }
    let window = samples.len() as f64 * sample_period;
    let periods = window * omega / (2.0 * PI);
    if (periods - periods.round()).abs() > 1e-6 * periods.max(1.0) || periods.round() < 1.0 {
        return Err(Error::Leakage { periods });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &s) in samples.iter().enumerate() {
        let t = t0 + k as f64 * sample_period;
        acc += s * Complex64::from_polar(1.0, -omega * t);
    }
    Ok(Complex64::new(0.0, 2.0 / samples.len() as f64) * acc)
}

/// Brute-force excitation protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceOptions {
    pub amplitude: f64,
    pub n_periods: usize,
    pub n_discard: usize,
    pub tol: f64,
    pub samples_per_period: usize,
    /// Largest step as a fraction of the period.
    pub max_step_periods: f64,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            n_periods: 10,
            n_discard: 5,
            tol: 1e-9,
            samples_per_period: 64,
            max_step_periods: 0.05,
        }
    }
}

/// Impedance at `omega` from a time-domain run excited by
/// `amplitude sin(omega t)` starting at the consistent state `x0`.
pub fn brute_force_impedance<M: DaeModel>(
    dae: &DaeSystem<M>,
    x0: &[f64],
    omega: f64,
    opts: &BruteForceOptions,
) -> Result<Complex64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::domain("omega", "must be positive"));
    }
    if opts.n_discard >= opts.n_periods {
        return Err(Error::domain("n_discard", "must be smaller than n_periods"));
    }
    if opts.samples_per_period < 64 {
        return Err(Error::domain(
            "samples_per_period",
            "at least 64 samples per period are required",
        ));
    }
    let period = 2.0 * PI / omega;
    let profile = CurrentProfile::new().sinusoid(
        opts.amplitude,
        omega / (2.0 * PI),
        opts.n_periods as f64 * period,
    )?;
    let kept = opts.n_periods - opts.n_discard;
    let m = kept * opts.samples_per_period;
    let dt = period / opts.samples_per_period as f64;
    let t_start = opts.n_discard as f64 * period;
    let times: Vec<f64> = (0..m).map(|k| t_start + k as f64 * dt).collect();
    let sim = SimOptions {
        max_step: opts.max_step_periods * period,
        ..SimOptions::with_tol(opts.tol)
    };
    let traj = integrate(dae, x0, &profile, &times, &sim)?;
    let v = dft_bin(&traj.voltage, omega, dt, t_start)?;
    let i = dft_bin(&traj.current, omega, dt, t_start)?;
    Ok(v / i)
}

/// Brute-force impedance at equilibrium for a given state of charge.
pub fn brute_force_at_soc(
    dae: &DaeSystem<Spme>,
    soc: f64,
    omega: f64,
    opts: &BruteForceOptions,
) -> Result<Complex64> {
    let x0 = dae.model().equilibrium_state(soc)?;
    brute_force_impedance(dae, &x0, omega, opts)
}

/// Brute-force impedance at several frequencies, run concurrently.
pub fn brute_force_spectrum<M: DaeModel>(
    dae: &DaeSystem<M>,
    x0: &[f64],
    omegas: &[f64],
    opts: &BruteForceOptions,
) -> Result<Vec<Complex64>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        omegas
            .par_iter()
            .map(|&w| brute_force_impedance(dae, x0, w, opts))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        omegas
            .iter()
            .map(|&w| brute_force_impedance(dae, x0, w, opts))
            .collect()
    }
}
