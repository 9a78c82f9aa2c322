//! Finite-volume assembly of the grouped single particle model with electrolyte.
//!
//! State layout: `[c_neg(r), c_pos(r), c_e(x), vbar_neg, vbar_pos, v, i]`.
//! Particle and electrolyte concentrations are dimensionless, potentials in
//! V, current in A with charging positive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dae::{DaeModel, DaeSystem};
use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::mesh::{LineGrid, Mesh, RadialGrid, Region};
use crate::ocp::OcpCurve;
use crate::params::{stoichiometry_at_soc, GroupedParameters};

/// Surface stoichiometries must stay strictly inside this interval.
pub const STOICHIOMETRY_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelMode {
    /// Particles, double layers and electrolyte diffusion.
    Spme,
    /// Electrolyte frozen at its initial concentration.
    Spm,
}

impl std::str::FromStr for ModelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spme" => Ok(ModelMode::Spme),
            "spm" => Ok(ModelMode::Spm),
            other => Err(Error::domain(
                "mode",
                format!("expected spme or spm, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelMode::Spme => "spme",
            ModelMode::Spm => "spm",
        })
    }
}

/// Index map of the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_r: usize,
    pub n_neg: usize,
    pub n_sep: usize,
    pub n_pos: usize,
    /// Electrolyte cells actually present (zero in SPM mode).
    pub n_e: usize,
}

impl Layout {
    pub fn new(mesh: &Mesh, mode: ModelMode) -> Self {
        Self {
            n_r: mesh.n_r,
            n_neg: mesh.n_neg,
            n_sep: mesh.n_sep,
            n_pos: mesh.n_pos,
            n_e: match mode {
                ModelMode::Spme => mesh.n_electrolyte(),
                ModelMode::Spm => 0,
            },
        }
    }

    pub fn c_neg(&self, k: usize) -> usize {
        k
    }

    pub fn c_pos(&self, k: usize) -> usize {
        self.n_r + k
    }

    pub fn ce(&self, k: usize) -> usize {
        2 * self.n_r + k
    }

    pub fn vbar_neg(&self) -> usize {
        2 * self.n_r + self.n_e
    }

    pub fn vbar_pos(&self) -> usize {
        self.vbar_neg() + 1
    }

    pub fn voltage(&self) -> usize {
        self.vbar_neg() + 2
    }

    pub fn current(&self) -> usize {
        self.vbar_neg() + 3
    }

    pub fn n_states(&self) -> usize {
        2 * self.n_r + self.n_e + 4
    }
}

// auxiliary slots
const LAMBDA_NEG: usize = 0;
const LAMBDA_POS: usize = 1;
const JBAR_NEG: usize = 2;
const JBAR_POS: usize = 3;

/// The discretised grouped SPMe (or SPM) as a DAE model.
#[derive(Debug, Clone)]
pub struct Spme {
    params: GroupedParameters,
    pos: OcpCurve,
    neg: OcpCurve,
    mesh: Mesh,
    mode: ModelMode,
    layout: Layout,
    radial: RadialGrid,
    line: LineGrid,
    mass: Vec<f64>,
    /// (2 R T / F)(1 - t+)
    kappa: f64,
    /// F / (2 R T)
    half_inv_thermal: f64,
    /// Conductances of the interior electrolyte faces.
    face_cond: Vec<f64>,
    /// Migration shape function at the interior faces.
    face_shape: Vec<f64>,
    /// Electrode-average weights of the electrolyte cells.
    avg_weight: Vec<f64>,
    /// Reaction source scaling 3 Q_th / (Q_e ell) per electrolyte cell.
    source_scale: Vec<f64>,
}

impl Spme {
    pub fn new(
        params: GroupedParameters,
        pos: OcpCurve,
        neg: OcpCurve,
        mesh: Mesh,
        mode: ModelMode,
    ) -> Result<Self> {
        params.validate()?;
        mesh.validate()?;
        let layout = Layout::new(&mesh, mode);
        let radial = RadialGrid::uniform(mesh.n_r);
        let line = LineGrid::three_region(&mesh, params.ell_neg, params.ell_pos);
        let c = params.constants();
        let kappa = 2.0 * c.gas_constant * c.temperature / c.faraday * (1.0 - params.t_plus);
        let half_inv_thermal = c.faraday / (2.0 * c.gas_constant * c.temperature);

        let tau = |r: Region| match r {
            Region::Negative => params.tau_e_neg,
            Region::Separator => params.tau_e_sep,
            Region::Positive => params.tau_e_pos,
        };
        let n_x = mesh.n_electrolyte();
        let face_cond = (0..n_x - 1)
            .map(|k| {
                let res = 0.5
                    * (line.widths[k] * tau(line.regions[k])
                        + line.widths[k + 1] * tau(line.regions[k + 1]));
                1.0 / res
            })
            .collect();
        let (ln, lp) = (params.ell_neg, params.ell_pos);
        let face_shape = line
            .faces
            .iter()
            .map(|&x| {
                if x <= ln {
                    x / ln
                } else if x >= 1.0 - lp {
                    (1.0 - x) / lp
                } else {
                    1.0
                }
            })
            .collect();
        let avg_weight = (0..n_x)
            .map(|k| match line.regions[k] {
                Region::Negative => line.widths[k] / ln,
                Region::Positive => line.widths[k] / lp,
                Region::Separator => 0.0,
            })
            .collect();
        let source_scale = (0..n_x)
            .map(|k| match line.regions[k] {
                Region::Negative => 3.0 * params.q_th_neg / (params.q_e * ln),
                Region::Positive => 3.0 * params.q_th_pos / (params.q_e * lp),
                Region::Separator => 0.0,
            })
            .collect();

        let mut mass = vec![1.0; layout.n_states()];
        for k in 0..layout.n_e {
            mass[layout.ce(k)] = match line.regions[k] {
                Region::Negative => params.zeta_neg,
                Region::Separator => 1.0,
                Region::Positive => params.zeta_pos,
            };
        }
        mass[layout.vbar_neg()] = params.cdl_neg;
        mass[layout.vbar_pos()] = params.cdl_pos;
        mass[layout.voltage()] = 0.0;
        mass[layout.current()] = 0.0;

        Ok(Self {
            params,
            pos,
            neg,
            mesh,
            mode,
            layout,
            radial,
            line,
            mass,
            kappa,
            half_inv_thermal,
            face_cond,
            face_shape,
            avg_weight,
            source_scale,
        })
    }

    pub fn params(&self) -> &GroupedParameters {
        &self.params
    }

    pub fn curves(&self) -> (&OcpCurve, &OcpCurve) {
        (&self.pos, &self.neg)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mode(&self) -> ModelMode {
        self.mode
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Surface value of a particle by linear extrapolation of the two outer cells.
    fn surface<S: Scalar>(&self, c: &[S]) -> S {
        let n = c.len();
        c[n - 1] * 1.5 - c[n - 2] * 0.5
    }

    /// Local reaction flux density j = 2 i0 sinh(F eta / 2RT).
    #[allow(clippy::too_many_arguments)]
    fn reaction<S: Scalar>(
        &self,
        curve: &OcpCurve,
        tau_ct: f64,
        cs: S,
        vbar: S,
        ce: S,
        lambda: S,
    ) -> S {
        let i0 = (cs * ce * (S::constant(1.0) - cs)).sqrt() / tau_ct;
        let v = match self.mode {
            ModelMode::Spme => vbar + (lambda - ce.ln()) * self.kappa,
            ModelMode::Spm => vbar,
        };
        let eta = v - curve.apply(cs);
        i0 * (eta * self.half_inv_thermal).sinh() * 2.0
    }

    fn particle_rows<S: Scalar>(&self, c: &[S], tau_d: f64, jbar: S, out: &mut [S]) {
        let n = c.len();
        let g = &self.radial;
        let k_face = |k: usize| g.faces[k] * g.faces[k] / (tau_d * g.h);
        let mut inflow = S::constant(0.0);
        for k in 0..n {
            let outflow = if k + 1 < n {
                (c[k + 1] - c[k]) * k_face(k)
            } else {
                -jbar
            };
            out[k] = (outflow - inflow) * (3.0 / g.volumes[k]);
            inflow = outflow;
        }
    }

    /// Electrode means of ln c_e.
    fn log_means<S: Scalar>(&self, ce: &[S]) -> (S, S) {
        let mut neg = S::constant(0.0);
        let mut pos = S::constant(0.0);
        for (k, &c) in ce.iter().enumerate() {
            match self.line.regions[k] {
                Region::Negative => neg += c.ln() * self.avg_weight[k],
                Region::Positive => pos += c.ln() * self.avg_weight[k],
                Region::Separator => {}
            }
        }
        (neg, pos)
    }

    fn surfaces<S: Scalar>(&self, x: &[S]) -> (S, S) {
        let l = &self.layout;
        (
            self.surface(&x[l.c_neg(0)..l.c_neg(0) + l.n_r]),
            self.surface(&x[l.c_pos(0)..l.c_pos(0) + l.n_r]),
        )
    }

    /// Equilibrium state at a state of charge in percent.
    pub fn equilibrium_state(&self, soc: f64) -> Result<Vec<f64>> {
        let (cp, cn) = stoichiometry_at_soc(soc, &self.params)?;
        let (up, _) = self.pos.eval(cp)?;
        let (un, _) = self.neg.eval(cn)?;
        let l = &self.layout;
        let mut x = vec![0.0; l.n_states()];
        for k in 0..l.n_r {
            x[l.c_neg(k)] = cn;
            x[l.c_pos(k)] = cp;
        }
        for k in 0..l.n_e {
            x[l.ce(k)] = 1.0;
        }
        x[l.vbar_neg()] = un;
        x[l.vbar_pos()] = up;
        x[l.voltage()] = up - un;
        x[l.current()] = 0.0;
        Ok(x)
    }

    /// Volume-averaged particle stoichiometries `(positive, negative)`.
    pub fn mean_stoichiometry(&self, x: &[f64]) -> (f64, f64) {
        let l = &self.layout;
        let mean = |start: usize| -> f64 {
            (0..l.n_r)
                .map(|k| self.radial.volumes[k] * x[start + k])
                .sum()
        };
        (mean(l.c_pos(0)), mean(l.c_neg(0)))
    }

    /// Surface stoichiometries `(positive, negative)`.
    pub fn surface_stoichiometry(&self, x: &[f64]) -> (f64, f64) {
        let (n, p) = self.surfaces(x);
        (p, n)
    }

    /// Cyclable lithium Q_th+ cbar+ + Q_th- cbar- [A s].
    pub fn lithium_inventory(&self, x: &[f64]) -> f64 {
        let (p, n) = self.mean_stoichiometry(x);
        self.params.q_th_pos * p + self.params.q_th_neg * n
    }

    /// Integral of zeta(x) c_e over the cell.
    pub fn electrolyte_content(&self, x: &[f64]) -> f64 {
        let l = &self.layout;
        (0..l.n_e)
            .map(|k| self.mass[l.ce(k)] * self.line.widths[k] * x[l.ce(k)])
            .sum()
    }

    /// Open-circuit voltage at the mean stoichiometries of `x`.
    pub fn ocv(&self, x: &[f64]) -> Result<f64> {
        let (p, n) = self.mean_stoichiometry(x);
        Ok(self.pos.eval(p)?.0 - self.neg.eval(n)?.0)
    }

    /// Cell-centre coordinates of the electrolyte cells.
    pub fn electrolyte_centres(&self) -> Vec<f64> {
        let mut x = 0.0;
        self.line
            .widths
            .iter()
            .map(|w| {
                let c = x + 0.5 * w;
                x += w;
                c
            })
            .collect()
    }

    /// Derived internal quantities at a state.
    pub fn diagnostics(&self, x: &[f64]) -> Diagnostics {
        let l = &self.layout;
        let (cs_neg, cs_pos) = self.surfaces(x);
        let (lam_neg, lam_pos) = match self.mode {
            ModelMode::Spme => self.log_means(&x[l.ce(0)..l.ce(0) + l.n_e]),
            ModelMode::Spm => (0.0, 0.0),
        };
        let vbar_neg = x[l.vbar_neg()];
        let vbar_pos = x[l.vbar_pos()];
        let mut d = Diagnostics {
            surface_pos: cs_pos,
            surface_neg: cs_neg,
            electrolyte_overpotential: self.kappa * (lam_pos - lam_neg),
            ..Diagnostics::default()
        };
        let cells: Vec<(Region, f64)> = match self.mode {
            ModelMode::Spme => (0..l.n_e)
                .map(|k| (self.line.regions[k], x[l.ce(k)]))
                .filter(|(r, _)| *r != Region::Separator)
                .collect(),
            ModelMode::Spm => vec![(Region::Negative, 1.0), (Region::Positive, 1.0)],
        };
        for (region, ce) in cells {
            let (curve, tau, cs, vbar, lam) = match region {
                Region::Negative => (&self.neg, self.params.tau_ct_neg, cs_neg, vbar_neg, lam_neg),
                _ => (&self.pos, self.params.tau_ct_pos, cs_pos, vbar_pos, lam_pos),
            };
            let j = self.reaction(curve, tau, cs, vbar, ce, lam);
            let i0 = (cs * ce * (1.0 - cs)).sqrt() / tau;
            let v = match self.mode {
                ModelMode::Spme => vbar + self.kappa * (lam - ce.ln()),
                ModelMode::Spm => vbar,
            };
            let eta = v - curve.eval_extended(cs).0;
            let (js, i0s, etas) = match region {
                Region::Negative => (&mut d.j_neg, &mut d.i0_neg, &mut d.eta_neg),
                _ => (&mut d.j_pos, &mut d.i0_pos, &mut d.eta_pos),
            };
            js.push(j);
            i0s.push(i0);
            etas.push(eta);
        }
        d
    }
}

/// Internal quantities derived from a state; vectors run over electrode cells.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub surface_pos: f64,
    pub surface_neg: f64,
    pub j_pos: Vec<f64>,
    pub j_neg: Vec<f64>,
    pub i0_pos: Vec<f64>,
    pub i0_neg: Vec<f64>,
    pub eta_pos: Vec<f64>,
    pub eta_neg: Vec<f64>,
    /// eta_e [V].
    pub electrolyte_overpotential: f64,
}

impl DaeModel for Spme {
    fn n_states(&self) -> usize {
        self.layout.n_states()
    }

    fn n_aux(&self) -> usize {
        match self.mode {
            ModelMode::Spme => 4,
            ModelMode::Spm => 0,
        }
    }

    fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn aux<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        if self.mode == ModelMode::Spm {
            return;
        }
        let l = &self.layout;
        let p = &self.params;
        let ce = &x[l.ce(0)..l.ce(0) + l.n_e];
        let (lam_neg, lam_pos) = self.log_means(ce);
        let (cs_neg, cs_pos) = self.surfaces(x);
        let (vn, vp) = (x[l.vbar_neg()], x[l.vbar_pos()]);
        let mut jn = S::constant(0.0);
        let mut jp = S::constant(0.0);
        for (k, &c) in ce.iter().enumerate() {
            match self.line.regions[k] {
                Region::Negative => {
                    jn += self.reaction(&self.neg, p.tau_ct_neg, cs_neg, vn, c, lam_neg)
                        * self.avg_weight[k]
                }
                Region::Positive => {
                    jp += self.reaction(&self.pos, p.tau_ct_pos, cs_pos, vp, c, lam_pos)
                        * self.avg_weight[k]
                }
                Region::Separator => {}
            }
        }
        out[LAMBDA_NEG] = lam_neg;
        out[LAMBDA_POS] = lam_pos;
        out[JBAR_NEG] = jn;
        out[JBAR_POS] = jp;
    }

    fn residual<S: Scalar>(&self, x: &[S], aux: &[S], out: &mut [S]) {
        let l = &self.layout;
        let p = &self.params;
        let i = x[l.current()];
        let (vn, vp) = (x[l.vbar_neg()], x[l.vbar_pos()]);
        let (cs_neg, cs_pos) = self.surfaces(x);
        let one = S::constant(1.0);
        let zero = S::constant(0.0);

        let (lam_neg, lam_pos, jbar_neg, jbar_pos) = match self.mode {
            ModelMode::Spme => (
                aux[LAMBDA_NEG],
                aux[LAMBDA_POS],
                aux[JBAR_NEG],
                aux[JBAR_POS],
            ),
            ModelMode::Spm => (
                zero,
                zero,
                self.reaction(&self.neg, p.tau_ct_neg, cs_neg, vn, one, zero),
                self.reaction(&self.pos, p.tau_ct_pos, cs_pos, vp, one, zero),
            ),
        };

        let nr = l.n_r;
        self.particle_rows(
            &x[l.c_neg(0)..l.c_neg(0) + nr],
            p.tau_d_neg,
            jbar_neg,
            &mut out[l.c_neg(0)..l.c_neg(0) + nr],
        );
        self.particle_rows(
            &x[l.c_pos(0)..l.c_pos(0) + nr],
            p.tau_d_pos,
            jbar_pos,
            &mut out[l.c_pos(0)..l.c_pos(0) + nr],
        );

        if l.n_e > 0 {
            let ce = &x[l.ce(0)..l.ce(0) + l.n_e];
            let migration = i * (p.t_plus / p.q_e);
            // flux through the face to the right of cell k
            let mut left = zero;
            for k in 0..l.n_e {
                let right = if k + 1 < l.n_e {
                    -(ce[k + 1] - ce[k]) * self.face_cond[k] - migration * self.face_shape[k]
                } else {
                    zero
                };
                let mut row = -(right - left) / self.line.widths[k];
                match self.line.regions[k] {
                    Region::Negative => {
                        let j = self.reaction(&self.neg, p.tau_ct_neg, cs_neg, vn, ce[k], lam_neg);
                        row += j * self.source_scale[k];
                    }
                    Region::Positive => {
                        let j = self.reaction(&self.pos, p.tau_ct_pos, cs_pos, vp, ce[k], lam_pos);
                        row += j * self.source_scale[k];
                    }
                    Region::Separator => {}
                }
                out[l.ce(k)] = row;
                left = right;
            }
        }

        out[l.vbar_neg()] = -i - jbar_neg * (3.0 * p.q_th_neg);
        out[l.vbar_pos()] = i - jbar_pos * (3.0 * p.q_th_pos);
        out[l.voltage()] = vp - vn + (lam_pos - lam_neg) * self.kappa + i * p.r0 - x[l.voltage()];
        out[l.current()] = -i;
    }

    fn check_state(&self, time: f64, x: &[f64]) -> Result<()> {
        let l = &self.layout;
        let lo = STOICHIOMETRY_GUARD;
        let hi = 1.0 - STOICHIOMETRY_GUARD;
        for (name, start) in [("negative", l.c_neg(0)), ("positive", l.c_pos(0))] {
            let c = &x[start..start + l.n_r];
            for (k, &v) in c.iter().enumerate() {
                if !(v > lo && v < hi) {
                    return Err(Error::StoichiometryGuard {
                        time,
                        location: format!("{name} particle cell {k}"),
                        value: v,
                    });
                }
            }
            let s = self.surface(c);
            if !(s > lo && s < hi) {
                return Err(Error::StoichiometryGuard {
                    time,
                    location: format!("{name} particle surface"),
                    value: s,
                });
            }
        }
        for k in 0..l.n_e {
            let v = x[l.ce(k)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::StoichiometryGuard {
                    time,
                    location: format!("electrolyte cell {k}"),
                    value: v,
                });
            }
        }
        Ok(())
    }

    fn generic_state(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let l = &self.layout;
        let mut x = vec![0.0; l.n_states()];
        for k in 0..l.n_r {
            x[l.c_neg(k)] = rng.gen_range(0.3..0.7);
            x[l.c_pos(k)] = rng.gen_range(0.3..0.7);
        }
        for k in 0..l.n_e {
            x[l.ce(k)] = rng.gen_range(0.8..1.2);
        }
        let (cs_neg, cs_pos) = self.surfaces(&x);
        x[l.vbar_neg()] = self.neg.eval_extended(cs_neg).0 + rng.gen_range(-0.02..0.02);
        x[l.vbar_pos()] = self.pos.eval_extended(cs_pos).0 + rng.gen_range(-0.02..0.02);
        x[l.voltage()] = rng.gen_range(3.0..4.0);
        x[l.current()] = rng.gen_range(-1.0..1.0);
        x
    }
}

/// Builds the discretised model.
pub fn assemble_dae(
    params: &GroupedParameters,
    curves: (&OcpCurve, &OcpCurve),
    mesh: Mesh,
    mode: ModelMode,
) -> Result<DaeSystem<Spme>> {
    Ok(DaeSystem::new(Spme::new(
        params.clone(),
        curves.0.clone(),
        curves.1.clone(),
        mesh,
        mode,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::synthetic_curves;

    fn system(mode: ModelMode) -> DaeSystem<Spme> {
        let (pos, neg) = synthetic_curves();
        assemble_dae(
            &GroupedParameters::reference(),
            (&pos, &neg),
            Mesh::default(),
            mode,
        )
        .unwrap()
    }

    #[test]
    fn state_counts() {
        assert_eq!(system(ModelMode::Spme).n_states(), 424);
        assert_eq!(system(ModelMode::Spm).n_states(), 204);
    }

    #[test]
    fn equilibrium_residual_vanishes() {
        for mode in [ModelMode::Spme, ModelMode::Spm] {
            let dae = system(mode);
            for soc in (0..=100).step_by(10) {
                let x = dae.model().equilibrium_state(soc as f64).unwrap();
                let r = dae.residual(&x);
                let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(norm <= 1e-10, "{mode} soc {soc}: {norm}");
            }
        }
    }

    #[test]
    fn equilibrium_voltage_is_ocv() {
        let dae = system(ModelMode::Spme);
        let m = dae.model();
        let x = m.equilibrium_state(50.0).unwrap();
        let (cp, cn) = stoichiometry_at_soc(50.0, m.params()).unwrap();
        let (pos, neg) = m.curves();
        let ocv = pos.eval(cp).unwrap().0 - neg.eval(cn).unwrap().0;
        assert_eq!(x[m.layout().voltage()], ocv);
    }

    #[test]
    fn mass_matrix_has_two_algebraic_rows() {
        let dae = system(ModelMode::Spme);
        let zeros: Vec<usize> = dae
            .model()
            .mass()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 0.0)
            .map(|(k, _)| k)
            .collect();
        assert_eq!(zeros, vec![422, 423]);
    }

    #[test]
    fn guard_reports_cell() {
        let dae = system(ModelMode::Spme);
        let m = dae.model();
        let mut x = m.equilibrium_state(50.0).unwrap();
        x[m.layout().c_pos(99)] = 1.0;
        match m.check_state(3.0, &x).unwrap_err() {
            Error::StoichiometryGuard { time, location, .. } => {
                assert_eq!(time, 3.0);
                assert!(location.contains("positive"), "{location}");
            }
            e => panic!("{e}"),
        }
    }
}
