//! Impedance by linearisation: `Z(w) = [(j w M - J)^-1 B]_v` at an equilibrium.

use num_complex::Complex64;

use crate::dae::{BorderedPattern, DaeModel, DaeSystem, Linearization};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{assemble_dae, ModelMode, Spme};
use crate::ocp::OcpCurve;
use crate::params::{GroupedParameters, Param};
use crate::sparse::{Csr, SparseLu};

/// Strictly increasing positive angular frequencies [rad/s].
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    omega: Vec<f64>,
    hz: Vec<f64>,
}

impl FrequencyGrid {
    pub fn from_omegas(omega: Vec<f64>) -> Result<Self> {
        let hz = omega
            .iter()
            .map(|w| w / (2.0 * std::f64::consts::PI))
            .collect();
        Self::checked(omega, hz)
    }

    fn checked(omega: Vec<f64>, hz: Vec<f64>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = omega.into_iter().zip(hz).collect();
        if pairs.is_empty() {
            return Err(Error::domain("frequencies", "grid is empty"));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.iter().any(|&(w, _)| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::domain("frequencies", "must be positive and finite"));
        }
        if pairs.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::domain("frequencies", "duplicate frequency"));
        }
        let (omega, hz) = pairs.into_iter().unzip();
        Ok(Self { omega, hz })
    }

    /// Grid from frequencies in Hz, kept exactly as given.
    pub fn from_hz(f: &[f64]) -> Result<Self> {
        Self::checked(
            f.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect(),
            f.to_vec(),
        )
    }

    /// `n` log-spaced frequencies from `f_min` to `f_max` [Hz], both included.
    pub fn log_spaced(f_min: f64, f_max: f64, n: usize) -> Result<Self> {
        if !(f_min > 0.0 && f_max > f_min) {
            return Err(Error::domain("fmin", "need 0 < fmin < fmax"));
        }
        if n < 2 {
            return Err(Error::domain("points", "at least two frequencies"));
        }
        let (a, b) = (f_min.log10(), f_max.log10());
        let hz: Vec<f64> = (0..n)
            .map(|k| {
                if k == 0 {
                    f_min
                } else if k == n - 1 {
                    f_max
                } else {
                    10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)
                }
            })
            .collect();
        Self::from_hz(&hz)
    }

    /// Log-spaced grid with `per_decade` points per decade.
    pub fn per_decade(f_min: f64, f_max: f64, per_decade: f64) -> Result<Self> {
        if !(per_decade > 0.0) || !(f_min > 0.0 && f_max > f_min) {
            return Err(Error::domain("ppd", "need ppd > 0 and 0 < fmin < fmax"));
        }
        let decades = (f_max / f_min).log10();
        let n = (decades * per_decade).round() as usize + 1;
        Self::log_spaced(f_min, f_max, n.max(2))
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omega
    }

    pub fn hz(&self) -> Vec<f64> {
        self.hz.clone()
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

/// Impedance at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub soc: f64,
    pub temperature: f64,
    /// Frequencies in Hz, increasing.
    pub f_hz: Vec<f64>,
    pub z: Vec<Complex64>,
}

impl Spectrum {
    pub fn omegas(&self) -> Vec<f64> {
        self.f_hz
            .iter()
            .map(|f| 2.0 * std::f64::consts::PI * f)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Spectra over several operating points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImpedanceDataset {
    pub spectra: Vec<Spectrum>,
}

impl ImpedanceDataset {
    pub fn socs(&self) -> Vec<f64> {
        self.spectra.iter().map(|s| s.soc).collect()
    }

    pub fn n_points(&self) -> usize {
        self.spectra.iter().map(Spectrum::len).sum()
    }

    pub fn find(&self, soc: f64) -> Option<&Spectrum> {
        self.spectra.iter().find(|s| s.soc == soc)
    }
}

/// Reusable complex solver for `(j w M - J) K = B` at one operating point.
pub struct FrequencySolver {
    lin: Linearization,
    pattern: BorderedPattern,
    matrix: Csr<Complex64>,
    lu: Option<SparseLu<Complex64>>,
    v_idx: usize,
    i_idx: usize,
}

impl FrequencySolver {
    pub fn new<M: DaeModel>(dae: &DaeSystem<M>, x: &[f64]) -> Self {
        let lin = dae.linearize(x);
        Self::from_linearization(
            lin,
            dae.model().voltage_index(),
            dae.model().current_index(),
        )
    }

    pub fn from_linearization(lin: Linearization, v_idx: usize, i_idx: usize) -> Self {
        let pattern = lin.bordered_pattern();
        let matrix = pattern.assemble(&lin, Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0));
        Self {
            lin,
            pattern,
            matrix,
            lu: None,
            v_idx,
            i_idx,
        }
    }

    /// Hands over factors from a previous solver with the same pattern.
    pub fn with_factors(mut self, lu: Option<SparseLu<Complex64>>) -> Self {
        self.lu = lu;
        self
    }

    pub fn take_factors(&mut self) -> Option<SparseLu<Complex64>> {
        self.lu.take()
    }

    pub fn linearization(&self) -> &Linearization {
        &self.lin
    }

    /// Full response vector K at angular frequency `omega`.
    pub fn response(&mut self, omega: f64) -> std::result::Result<Vec<Complex64>, ()> {
        self.pattern.assemble_into(
            &self.lin,
            Complex64::new(0.0, omega),
            Complex64::new(1.0, 0.0),
            &mut self.matrix,
        );
        let lu = match &mut self.lu {
            Some(lu) => {
                lu.refactor(&self.matrix).map_err(|_| ())?;
                lu
            }
            slot => slot.insert(SparseLu::factor(&self.matrix).map_err(|_| ())?),
        };
        let mut rhs = vec![Complex64::new(0.0, 0.0); self.pattern.dim()];
        rhs[self.i_idx] = Complex64::new(1.0, 0.0);
        lu.solve_in_place(&mut rhs);
        rhs.truncate(self.pattern.n_states());
        if rhs.iter().any(|z| !z.is_finite()) {
            return Err(());
        }
        Ok(rhs)
    }

    pub fn impedance(&mut self, omega: f64) -> std::result::Result<Complex64, ()> {
        Ok(self.response(omega)?[self.v_idx])
    }
}

/// Impedance at one angular frequency (any nonzero sign) at state `x`.
pub fn impedance_at<M: DaeModel>(dae: &DaeSystem<M>, x: &[f64], omega: f64) -> Result<Complex64> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::domain("omega", "must be nonzero and finite"));
    }
    FrequencySolver::new(dae, x)
        .impedance(omega)
        .map_err(|_| Error::SingularSystem { omega, soc: None })
}

/// Impedance spectrum of a model at state `x`.
pub fn spectrum_at_state<M: DaeModel>(
    dae: &DaeSystem<M>,
    x: &[f64],
    grid: &FrequencyGrid,
    soc: f64,
    temperature: f64,
) -> Result<Spectrum> {
    let mut solver = FrequencySolver::new(dae, x);
    let z = grid
        .omegas()
        .iter()
        .map(|&w| {
            solver.impedance(w).map_err(|_| Error::SingularSystem {
                omega: w,
                soc: Some(soc),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectrum {
        soc,
        temperature,
        f_hz: grid.hz(),
        z,
    })
}

/// Impedance spectra at equilibrium for each state of charge.
pub fn spectrum(
    dae: &DaeSystem<Spme>,
    socs: &[f64],
    grid: &FrequencyGrid,
) -> Result<ImpedanceDataset> {
    for (k, s) in socs.iter().enumerate() {
        if socs[..k].contains(s) {
            return Err(Error::domain(
                "soc",
                format!("duplicate state of charge {s}"),
            ));
        }
    }
    dae.structure();
    let one = |&soc: &f64| -> Result<Spectrum> {
        let x = dae.model().equilibrium_state(soc)?;
        spectrum_at_state(dae, &x, grid, soc, dae.model().params().temperature)
    };
    #[cfg(feature = "parallel")]
    let spectra = {
        use rayon::prelude::*;
        socs.par_iter().map(one).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let spectra = socs.iter().map(one).collect::<Result<Vec<_>>>()?;
    Ok(ImpedanceDataset { spectra })
}

/// One spectrum of a sensitivity sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub nominal: bool,
    pub spectrum: Spectrum,
}

/// Settings shared by sweeps and fits: OCPs, mesh and model mode.
#[derive(Debug, Clone)]
pub struct ModelSetup {
    pub pos: OcpCurve,
    pub neg: OcpCurve,
    pub mesh: Mesh,
    pub mode: ModelMode,
}

impl ModelSetup {
    pub fn build(&self, g: &GroupedParameters) -> Result<DaeSystem<Spme>> {
        assemble_dae(g, (&self.pos, &self.neg), self.mesh, self.mode)
    }
}

/// Spectra with one parameter varied log-uniformly over [0.5, 2] times its
/// nominal value, `n_steps` values inclusive of both ends. With an odd step
/// count the nominal value is hit exactly; the point closest to nominal is
/// flagged.
pub fn sensitivity_sweep(
    g: &GroupedParameters,
    setup: &ModelSetup,
    param: Param,
    n_steps: usize,
    soc: f64,
    grid: &FrequencyGrid,
) -> Result<Vec<SweepPoint>> {
    if !(Param::FIT_DEFAULT.contains(&param) || param == Param::QMeas) {
        return Err(Error::UnknownParameter(format!(
            "{param} is not a sweepable parameter"
        )));
    }
    if n_steps < 2 {
        return Err(Error::domain("steps", "at least two sweep steps"));
    }
    let nominal = g.get(param);
    let mut best = (f64::INFINITY, 0);
    let values: Vec<f64> = (0..n_steps)
        .map(|k| {
            let e = -1.0 + 2.0 * k as f64 / (n_steps - 1) as f64;
            if e.abs() < best.0 {
                best = (e.abs(), k);
            }
            if e == 0.0 {
                nominal
            } else {
                nominal * 2f64.powf(e)
            }
        })
        .collect();
    let structure = setup.build(g)?.structure().clone();
    let mut out = Vec::with_capacity(n_steps);
    for (k, &value) in values.iter().enumerate() {
        let mut gk = g.clone();
        gk.set_coupled(param, value)?;
        let dae = DaeSystem::with_structure(setup.build(&gk)?.into_model(), structure.clone());
        let x = dae.model().equilibrium_state(soc)?;
        let spectrum = spectrum_at_state(&dae, &x, grid, soc, gk.temperature)?;
        out.push(SweepPoint {
            value,
            nominal: k == best.1,
            spectrum,
        });
    }
    Ok(out)
}

/// Real-axis span of the charge-transfer arc [Ohm].
///
/// Rule: the high-frequency intercept is Re Z at the highest frequency.
/// Scanning towards lower frequency, the first interior local maximum of
/// -Im Z marks the arc apex; the first local minimum of -Im Z below the apex
/// (or the lowest frequency, if none) closes the arc. The diameter is the
/// difference of the real parts at the closing point and the intercept.
pub fn semicircle_diameter(s: &Spectrum) -> Result<f64> {
    let n = s.z.len();
    if n < 3 {
        return Err(Error::ArcNotResolved("fewer than three frequencies".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.f_hz[b].total_cmp(&s.f_hz[a]));
    let nim: Vec<f64> = order.iter().map(|&k| -s.z[k].im).collect();
    let re: Vec<f64> = order.iter().map(|&k| s.z[k].re).collect();
    let apex = (1..n - 1)
        .find(|&k| nim[k] > 0.0 && nim[k] > nim[k - 1] && nim[k] >= nim[k + 1])
        .ok_or_else(|| Error::ArcNotResolved("no interior maximum of -Im Z".into()))?;
    let close = (apex + 1..n - 1)
        .find(|&k| nim[k] <= nim[k - 1] && nim[k] < nim[k + 1])
        .unwrap_or(n - 1);
    Ok(re[close] - re[0])
}
