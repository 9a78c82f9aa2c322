#![allow(dead_code)]

use rand::Rng;
use spmeis_core::impedance::ModelSetup;
use spmeis_core::model::{ModelMode, Spme};
use spmeis_core::ocp::synthetic_curves;
use spmeis_core::{DaeModel, DaeSystem, Mesh};

pub fn setup(mesh: Mesh, mode: ModelMode) -> ModelSetup {
    let (pos, neg) = synthetic_curves();
    ModelSetup {
        pos,
        neg,
        mesh,
        mode,
    }
}

pub fn coarse() -> Mesh {
    Mesh::new(10, 6, 3, 6).unwrap()
}

/// Smooth off-equilibrium state: equilibrium at a random state of charge
/// with parabolic particle profiles, a linear electrolyte profile, shifted
/// double-layer potentials and a nonzero current.
pub fn random_valid_state(m: &Spme, rng: &mut impl Rng) -> Vec<f64> {
    let mut x = m.equilibrium_state(rng.gen_range(15.0..85.0)).unwrap();
    let l = *m.layout();
    let (a_neg, a_pos) = (rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
    for k in 0..l.n_r {
        let r = (k as f64 + 0.5) / l.n_r as f64;
        x[l.c_neg(k)] += a_neg * (r * r - 0.6);
        x[l.c_pos(k)] += a_pos * (r * r - 0.6);
    }
    let slope = rng.gen_range(-0.2..0.2);
    let centres = m.electrolyte_centres();
    for k in 0..l.n_e {
        x[l.ce(k)] = 1.0 + slope * (centres[k] - 0.5);
    }
    x[l.vbar_neg()] += rng.gen_range(-0.01..0.01);
    x[l.vbar_pos()] += rng.gen_range(-0.01..0.01);
    x[l.voltage()] += rng.gen_range(-0.05..0.05);
    x[l.current()] = rng.gen_range(-5.0..5.0);
    x
}

/// Fourth-order central differences of the full residual.
pub fn fd5_jacobian<M: DaeModel>(dae: &DaeSystem<M>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut jac = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    for c in 0..n {
        let s = (h * x[c].abs()).max(h);
        let mut eval = |d: f64| {
            xp[c] = x[c] + d;
            let f = dae.residual(&xp);
            xp[c] = x[c];
            f
        };
        let (f2, f1, m1, m2) = (eval(2.0 * s), eval(s), eval(-s), eval(-2.0 * s));
        for r in 0..n {
            jac[r][c] = (8.0 * (f1[r] - m1[r]) - (f2[r] - m2[r])) / (12.0 * s);
        }
    }
    jac
}

/// Random valid state whose surface stoichiometries keep `margin` away
/// from OCP table knots, so finite differences never straddle a knot.
pub fn random_smooth_state(m: &Spme, rng: &mut impl Rng, margin: f64) -> Vec<f64> {
    let (pos, neg) = m.curves();
    loop {
        let x = random_valid_state(m, rng);
        let (sp, sn) = m.surface_stoichiometry(&x);
        let near = |c: f64, knots: &[f64]| knots.iter().any(|k| (k - c).abs() < margin);
        if !near(sp, pos.stoichiometries()) && !near(sn, neg.stoichiometries()) {
            return x;
        }
    }
}
