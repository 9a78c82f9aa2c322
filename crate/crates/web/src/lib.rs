//! Browser bindings: Nyquist spectra with adjustable parameters, one-parameter
//! sensitivity sweeps and constant-current simulations.
//!
//! Results cross the boundary as flat `f64` arrays.

use spmeis_core::impedance::{self, FrequencyGrid, ModelSetup};
use spmeis_core::ocp::synthetic_curves;
use spmeis_core::simulate::{self, CurrentProfile, SimOptions};
use spmeis_core::{GroupedParameters, Mesh, ModelMode, Param};
use wasm_bindgen::prelude::*;

fn js(e: spmeis_core::Error) -> JsError {
    JsError::new(&format!("{} error: {e}", e.category().as_str()))
}

/// Cell model held by the page.
#[wasm_bindgen]
pub struct Cell {
    params: GroupedParameters,
    setup: ModelSetup,
}

#[wasm_bindgen]
impl Cell {
    /// Reference parameters on a light mesh suited to interactive use.
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Cell, JsError> {
        let (pos, neg) = synthetic_curves();
        Ok(Cell {
            params: GroupedParameters::reference(),
            setup: ModelSetup {
                pos,
                neg,
                mesh: Mesh::new(20, 10, 5, 10).map_err(js)?,
                mode: ModelMode::Spme,
            },
        })
    }

    pub fn set_mode(&mut self, spm: bool) {
        self.setup.mode = if spm { ModelMode::Spm } else { ModelMode::Spme };
    }

    pub fn get(&self, name: &str) -> Result<f64, JsError> {
        let p: Param = name.parse().map_err(js)?;
        Ok(self.params.get(p))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), JsError> {
        let p: Param = name.parse().map_err(js)?;
        let mut g = self.params.clone();
        g.set_coupled(p, value).map_err(js)?;
        g.validate().map_err(js)?;
        self.params = g;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.params = GroupedParameters::reference();
    }

    /// `[f, re, im]` triples at equilibrium.
    pub fn spectrum(
        &self,
        soc: f64,
        f_min: f64,
        f_max: f64,
        n: usize,
    ) -> Result<Vec<f64>, JsError> {
        let grid = FrequencyGrid::log_spaced(f_min, f_max, n).map_err(js)?;
        let dae = self.setup.build(&self.params).map_err(js)?;
        let x = dae.model().equilibrium_state(soc).map_err(js)?;
        let s = impedance::spectrum_at_state(&dae, &x, &grid, soc, self.params.temperature)
            .map_err(js)?;
        Ok(s.f_hz
            .iter()
            .zip(&s.z)
            .flat_map(|(f, z)| [*f, z.re, z.im])
            .collect())
    }

    /// Sweep of one parameter over [0.5, 2] times nominal: for each step
    /// the value followed by `n` `[f, re, im]` triples.
    pub fn sweep(
        &self,
        name: &str,
        steps: usize,
        soc: f64,
        f_min: f64,
        f_max: f64,
        n: usize,
    ) -> Result<Vec<f64>, JsError> {
        let p: Param = name.parse().map_err(js)?;
        let grid = FrequencyGrid::log_spaced(f_min, f_max, n).map_err(js)?;
        let pts = impedance::sensitivity_sweep(&self.params, &self.setup, p, steps, soc, &grid)
            .map_err(js)?;
        let mut out = Vec::with_capacity(pts.len() * (1 + 3 * n));
        for pt in pts {
            out.push(pt.value);
            for (f, z) in pt.spectrum.f_hz.iter().zip(&pt.spectrum.z) {
                out.extend([*f, z.re, z.im]);
            }
        }
        Ok(out)
    }

    /// Constant-current steps from rest at `soc0`. `currents` and
    /// `durations` pair up; returns `[t, i, v]` triples every `dt` seconds.
    pub fn simulate(
        &self,
        soc0: f64,
        currents: Vec<f64>,
        durations: Vec<f64>,
        dt: f64,
    ) -> Result<Vec<f64>, JsError> {
        if currents.len() != durations.len() || currents.is_empty() {
            return Err(JsError::new(
                "usage error: currents and durations must pair up",
            ));
        }
        if !(dt > 0.0) {
            return Err(JsError::new("usage error: dt must be positive"));
        }
        let mut profile = CurrentProfile::new();
        for (i, d) in currents.iter().zip(&durations) {
            profile = profile.constant(*i, *d).map_err(js)?;
        }
        let n = (profile.duration() / dt * (1.0 + 1e-12)).floor() as usize + 1;
        let times = simulate::uniform_times(dt, n);
        let dae = self.setup.build(&self.params).map_err(js)?;
        let x0 = dae.model().equilibrium_state(soc0).map_err(js)?;
        let tr =
            simulate::integrate(&dae, &x0, &profile, &times, &SimOptions::default()).map_err(js)?;
        Ok((0..tr.len())
            .flat_map(|k| [tr.t[k], tr.current[k], tr.voltage[k]])
            .collect())
    }
}
