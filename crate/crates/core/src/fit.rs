//! Parameter estimation from impedance spectra or voltage records.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::dae::{DaeSystem, Structure};
use crate::error::{Error, Result};
use crate::impedance::{FrequencySolver, ImpedanceDataset, ModelSetup, Spectrum};
use crate::model::Spme;
use crate::params::{GroupedParameters, Param};
use crate::pso::{pso_minimize, PsoOptions, PsoResult, FAILED_COST};
use crate::simulate::{integrate, CurrentProfile, SimOptions};

/// Data a fit is matched against.
#[derive(Debug, Clone)]
pub enum FitTarget {
    Impedance(ImpedanceDataset),
    Voltage {
        profile: CurrentProfile,
        times: Vec<f64>,
        voltage: Vec<f64>,
        /// Initial state of charge [%], at rest.
        soc0: f64,
        sim: SimOptions,
    },
}

/// Search interval for one free parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub param: Param,
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub fn new(param: Param, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::domain(
                param.name(),
                format!("invalid bounds [{lower}, {upper}]"),
            ));
        }
        Ok(Self {
            param,
            lower,
            upper,
        })
    }

    /// Searched on a log scale when the interval is positive and spans a
    /// decade or more.
    pub fn is_log(&self) -> bool {
        self.lower > 0.0 && self.upper / self.lower >= 10.0
    }

    fn from_unit(&self, u: f64) -> f64 {
        let v = if self.is_log() {
            (self.lower.ln() + u * (self.upper / self.lower).ln()).exp()
        } else {
            self.lower + u * (self.upper - self.lower)
        };
        v.clamp(self.lower, self.upper)
    }

    fn to_unit(&self, v: f64) -> f64 {
        if self.is_log() {
            (v / self.lower).ln() / (self.upper / self.lower).ln()
        } else {
            (v - self.lower) / (self.upper - self.lower)
        }
    }
}

/// Default free set and bounds for a target kind. Voltage fits hold the
/// stoichiometry windows fixed.
pub fn default_bounds(voltage: bool) -> Vec<Bound> {
    Param::FIT_DEFAULT
        .iter()
        .filter(|p| !(voltage && p.is_stoichiometry()))
        .map(|&p| {
            let (lo, hi) = p.default_bounds().expect("fit parameters have bounds");
            Bound {
                param: p,
                lower: lo,
                upper: hi,
            }
        })
        .collect()
}

/// A fit: target data, free parameters with bounds, and the fixed rest.
pub struct FitProblem {
    pub target: FitTarget,
    pub bounds: Vec<Bound>,
    pub base: GroupedParameters,
    pub setup: ModelSetup,
    structure: Structure,
}

impl FitProblem {
    pub fn new(
        target: FitTarget,
        bounds: Vec<Bound>,
        base: GroupedParameters,
        setup: ModelSetup,
    ) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::domain("free", "no free parameters"));
        }
        for (k, b) in bounds.iter().enumerate() {
            Bound::new(b.param, b.lower, b.upper)?;
            if bounds[..k].iter().any(|o| o.param == b.param) {
                return Err(Error::domain(b.param.name(), "listed twice"));
            }
            if matches!(
                b.param,
                Param::QThPos | Param::QThNeg | Param::QMeas | Param::EllPos | Param::EllNeg
            ) {
                return Err(Error::domain(b.param.name(), "is held fixed in fits"));
            }
        }
        match &target {
            FitTarget::Impedance(ds) => {
                if ds.spectra.is_empty() {
                    return Err(Error::domain("target", "empty impedance dataset"));
                }
            }
            FitTarget::Voltage {
                profile,
                times,
                voltage,
                ..
            } => {
                if times.len() != voltage.len() || times.is_empty() {
                    return Err(Error::GridMismatch(format!(
                        "{} sample times against {} voltages",
                        times.len(),
                        voltage.len()
                    )));
                }
                if *times.last().unwrap() > profile.duration() * (1.0 + 1e-12) {
                    return Err(Error::GridMismatch(
                        "samples extend past the current profile".into(),
                    ));
                }
            }
        }
        // Detect the sparsity pattern at interior values so that no entry
        // vanishes by accident.
        let mut probe = base.clone();
        for b in &bounds {
            probe.set(b.param, b.from_unit(0.5));
        }
        probe.sync_capacities()?;
        let structure = setup.build(&probe)?.structure().clone();
        Ok(Self {
            target,
            bounds,
            base,
            setup,
            structure,
        })
    }

    /// Impedance fit with the default 18 free parameters and bounds.
    pub fn impedance(
        data: ImpedanceDataset,
        base: GroupedParameters,
        setup: ModelSetup,
    ) -> Result<Self> {
        Self::new(
            FitTarget::Impedance(data),
            default_bounds(false),
            base,
            setup,
        )
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn free(&self) -> Vec<Param> {
        self.bounds.iter().map(|b| b.param).collect()
    }

    /// Maps a point of the unit cube to parameter values.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(u)
            .map(|(b, &u)| b.from_unit(u))
            .collect()
    }

    pub fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(theta)
            .map(|(b, &v)| b.to_unit(v))
            .collect()
    }

    /// Full parameter set for free values `theta`.
    pub fn params(&self, theta: &[f64]) -> Result<GroupedParameters> {
        if theta.len() != self.bounds.len() {
            return Err(Error::domain(
                "theta",
                format!("expected {} values", self.bounds.len()),
            ));
        }
        let mut g = self.base.clone();
        for (b, &v) in self.bounds.iter().zip(theta) {
            g.set(b.param, v);
        }
        g.sync_capacities()?;
        g.validate()?;
        Ok(g)
    }

    pub fn build(&self, g: &GroupedParameters) -> Result<DaeSystem<Spme>> {
        Ok(DaeSystem::with_structure(
            self.setup.build(g)?.into_model(),
            self.structure.clone(),
        ))
    }

    /// Model spectra on the target's grids.
    pub fn model_spectra(&self, theta: &[f64]) -> Result<ImpedanceDataset> {
        let FitTarget::Impedance(data) = &self.target else {
            return Err(Error::domain("target", "not an impedance fit"));
        };
        let g = self.params(theta)?;
        let dae = self.build(&g)?;
        let mut factors = None;
        let mut spectra = Vec::with_capacity(data.spectra.len());
        for s in &data.spectra {
            let x = dae.model().equilibrium_state(s.soc)?;
            let mut solver = FrequencySolver::new(&dae, &x).with_factors(factors.take());
            let z = s
                .omegas()
                .iter()
                .map(|&w| {
                    solver.impedance(w).map_err(|_| Error::SingularSystem {
                        omega: w,
                        soc: Some(s.soc),
                    })
                })
                .collect::<Result<Vec<Complex64>>>()?;
            factors = solver.take_factors();
            spectra.push(Spectrum {
                soc: s.soc,
                temperature: g.temperature,
                f_hz: s.f_hz.clone(),
                z,
            });
        }
        Ok(ImpedanceDataset { spectra })
    }

    /// Simulated voltages at the target's sample times.
    pub fn model_voltage(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let FitTarget::Voltage {
            profile,
            times,
            soc0,
            sim,
            ..
        } = &self.target
        else {
            return Err(Error::domain("target", "not a voltage fit"));
        };
        let g = self.params(theta)?;
        let dae = self.build(&g)?;
        let x0 = dae.model().equilibrium_state(*soc0)?;
        Ok(integrate(&dae, &x0, profile, times, sim)?.voltage)
    }

    /// Sum of squared residuals over the target.
    pub fn cost(&self, theta: &[f64]) -> Result<f64> {
        match &self.target {
            FitTarget::Impedance(data) => impedance_cost(data, &self.model_spectra(theta)?),
            FitTarget::Voltage { voltage, .. } => {
                voltage_cost(voltage, &self.model_voltage(theta)?)
            }
        }
    }
}

/// `sum_m sum_k |Z_data - Z_model|^2` [Ohm^2].
pub fn impedance_cost(data: &ImpedanceDataset, model: &ImpedanceDataset) -> Result<f64> {
    check_grids(data, model)?;
    Ok(data
        .spectra
        .iter()
        .zip(&model.spectra)
        .flat_map(|(a, b)| a.z.iter().zip(&b.z).map(|(x, y)| (x - y).norm_sqr()))
        .sum())
}

/// `sum_n (v_data - v_model)^2` [V^2].
pub fn voltage_cost(data: &[f64], model: &[f64]) -> Result<f64> {
    if data.len() != model.len() {
        return Err(Error::GridMismatch(format!(
            "{} samples against {}",
            data.len(),
            model.len()
        )));
    }
    Ok(data.iter().zip(model).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn check_grids(data: &ImpedanceDataset, model: &ImpedanceDataset) -> Result<()> {
    if data.spectra.len() != model.spectra.len() {
        return Err(Error::GridMismatch(format!(
            "{} spectra against {}",
            data.spectra.len(),
            model.spectra.len()
        )));
    }
    for (a, b) in data.spectra.iter().zip(&model.spectra) {
        if a.soc != b.soc || a.f_hz != b.f_hz || a.z.len() != b.z.len() {
            return Err(Error::GridMismatch(format!(
                "spectra at soc {} and {} differ in grid",
                a.soc, b.soc
            )));
        }
    }
    Ok(())
}

/// Mean relative fitting error per spectrum [%].
pub fn fitting_error(data: &ImpedanceDataset, model: &ImpedanceDataset) -> Result<Vec<f64>> {
    check_grids(data, model)?;
    Ok(data
        .spectra
        .iter()
        .zip(&model.spectra)
        .map(|(a, b)| {
            let s: f64 =
                a.z.iter()
                    .zip(&b.z)
                    .map(|(x, y)| (x - y).norm() / x.norm())
                    .sum();
            100.0 * s / a.z.len() as f64
        })
        .collect())
}

/// Outcome of one optimisation run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRun {
    pub seed: u64,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub failures: usize,
    pub trace: Vec<f64>,
}

/// Aggregate of several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<Param>,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub runs: Vec<FitRun>,
    /// Sample standard deviation over runs relative to the best estimate [%].
    pub rel_std: Vec<f64>,
    /// Per-spectrum fitting error at the best estimate [%]; empty for
    /// voltage fits.
    pub fitting_error: Vec<f64>,
    pub socs: Vec<f64>,
    pub wall_time: Duration,
}

impl FitResult {
    pub fn best_run(&self) -> &FitRun {
        self.runs
            .iter()
            .find(|r| r.cost == self.cost)
            .unwrap_or(&self.runs[0])
    }
}

/// One PSO run on the problem, seeded by `opts.seed`.
pub fn fit_once(problem: &FitProblem, opts: &PsoOptions) -> Result<FitRun> {
    let unit = vec![(0.0, 1.0); problem.dim()];
    let cost = |u: &[f64]| problem.cost(&problem.from_unit(u)).unwrap_or(FAILED_COST);
    let PsoResult {
        x,
        cost,
        iterations,
        failures,
        trace,
        ..
    } = pso_minimize(cost, &unit, opts)?;
    Ok(FitRun {
        seed: opts.seed,
        theta: problem.from_unit(&x),
        cost,
        iterations,
        failures,
        trace,
    })
}

/// Independent runs with the given seeds, aggregated.
pub fn multistart(problem: &FitProblem, opts: &PsoOptions, seeds: &[u64]) -> Result<FitResult> {
    if seeds.len() < 2 {
        return Err(Error::domain("runs", "multistart needs at least two runs"));
    }
    let start = Instant::now();
    let one = |&seed: &u64| fit_once(problem, &PsoOptions { seed, ..*opts });
    #[cfg(feature = "parallel")]
    let runs = {
        use rayon::prelude::*;
        seeds.par_iter().map(one).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let runs = seeds.iter().map(one).collect::<Result<Vec<_>>>()?;
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (k, r)| if r.cost < runs[b].cost { k } else { b });
    let theta = runs[best].theta.clone();
    let rel_std = relative_std(
        &runs.iter().map(|r| r.theta.clone()).collect::<Vec<_>>(),
        &theta,
    );
    let (fitting_error, socs) = match &problem.target {
        FitTarget::Impedance(data) => match problem.model_spectra(&theta) {
            Ok(model) => (crate::fit::fitting_error(data, &model)?, data.socs()),
            Err(_) => (vec![f64::INFINITY; data.spectra.len()], data.socs()),
        },
        FitTarget::Voltage { .. } => (Vec::new(), Vec::new()),
    };
    Ok(FitResult {
        params: problem.free(),
        cost: runs[best].cost,
        theta,
        runs,
        rel_std,
        fitting_error,
        socs,
        wall_time: start.elapsed(),
    })
}

/// Per-component sample standard deviation of `samples` divided by
/// `|reference|`, in percent.
pub fn relative_std(samples: &[Vec<f64>], reference: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    reference
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            100.0 * var.sqrt() / r.abs()
        })
        .collect()
}
