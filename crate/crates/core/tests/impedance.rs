mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use spmeis_core::impedance::{
    impedance_at, semicircle_diameter, sensitivity_sweep, spectrum, FrequencyGrid, FrequencySolver,
};
use spmeis_core::model::ModelMode;
use spmeis_core::params::{stoichiometry_at_soc, typical_ct_resistance};
use spmeis_core::toy::{ParallelRc, SeriesResistor};
use spmeis_core::{DaeSystem, GroupedParameters, Param};

#[test]
fn parallel_rc_matches_closed_form() {
    let (r, c) = (0.02, 3.0);
    let dae = DaeSystem::new(ParallelRc::new(r, c));
    let x = [0.0; 3];
    for w in [1e-3, 0.3, 16.0, 1e4] {
        let z = impedance_at(&dae, &x, w).unwrap();
        let want = r / Complex64::new(1.0, w * r * c);
        assert!(
            (z - want).norm() <= 1e-12 * want.norm().max(1e-3),
            "{w}: {z} vs {want}"
        );
    }
}

#[test]
fn series_resistor_is_flat() {
    let dae = DaeSystem::new(SeriesResistor::new(0.05));
    let mut solver = FrequencySolver::new(&dae, &[0.0, 0.0]);
    for w in [1e-4, 1.0, 1e5] {
        let z = solver.impedance(w).unwrap();
        assert!((z - 0.05).norm() < 1e-15);
    }
}

#[test]
fn negative_frequency_gives_conjugate() {
    let dae = common::setup(common::coarse(), ModelMode::Spme)
        .build(&GroupedParameters::reference())
        .unwrap();
    let x = dae.model().equilibrium_state(40.0).unwrap();
    let a = impedance_at(&dae, &x, 0.7).unwrap();
    let b = impedance_at(&dae, &x, -0.7).unwrap();
    assert!((a - b.conj()).norm() < 1e-12 * a.norm());
}

#[test]
fn high_frequency_limit_is_series_resistance() {
    let g = GroupedParameters::reference();
    let dae = common::setup(common::coarse(), ModelMode::Spme)
        .build(&g)
        .unwrap();
    let x = dae.model().equilibrium_state(50.0).unwrap();
    let z = impedance_at(&dae, &x, 2.0 * std::f64::consts::PI * 1e8).unwrap();
    assert!((z.re - g.r0).abs() < 1e-5, "{z}");
    assert!(z.im.abs() < 1e-5);
}

#[test]
fn series_resistance_shifts_real_part() {
    let g = GroupedParameters::reference();
    let setup = common::setup(common::coarse(), ModelMode::Spme);
    let grid = FrequencyGrid::log_spaced(1e-3, 1e3, 13).unwrap();
    let a = spectrum(&setup.build(&g).unwrap(), &[30.0], &grid).unwrap();
    let mut g2 = g.clone();
    g2.r0 += 0.0042;
    let b = spectrum(&setup.build(&g2).unwrap(), &[30.0], &grid).unwrap();
    for (za, zb) in a.spectra[0].z.iter().zip(&b.spectra[0].z) {
        assert!((zb - za - 0.0042).norm() < 1e-12);
    }
}

#[test]
fn spm_and_spme_agree_without_electrolyte_effects() {
    // Above the electrolyte bandwidth only the particles and interfaces respond.
    let g = GroupedParameters::reference();
    let grid = FrequencyGrid::log_spaced(1e2, 1e3, 3).unwrap();
    let spme = spectrum(
        &common::setup(common::coarse(), ModelMode::Spme)
            .build(&g)
            .unwrap(),
        &[50.0],
        &grid,
    )
    .unwrap();
    let spm = spectrum(
        &common::setup(common::coarse(), ModelMode::Spm)
            .build(&g)
            .unwrap(),
        &[50.0],
        &grid,
    )
    .unwrap();
    for (a, b) in spme.spectra[0].z.iter().zip(&spm.spectra[0].z) {
        assert!((a - b).norm() / a.norm() < 2e-2, "{a} vs {b}");
    }
}

#[test]
fn arc_diameter_follows_kinetic_law() {
    let g = GroupedParameters::reference();
    let dae = common::setup(common::coarse(), ModelMode::Spme)
        .build(&g)
        .unwrap();
    let (rp, rn) = typical_ct_resistance(&g, &g.constants());
    let grid = FrequencyGrid::per_decade(1e-1, 1e5, 20.0).unwrap();
    let ds = spectrum(&dae, &[20.0, 50.0, 80.0], &grid).unwrap();
    for s in &ds.spectra {
        let (cp, cn) = stoichiometry_at_soc(s.soc, &g).unwrap();
        let law = rp / (2.0 * (cp * (1.0 - cp)).sqrt()) + rn / (2.0 * (cn * (1.0 - cn)).sqrt());
        let d = semicircle_diameter(s).unwrap();
        assert!((d - law).abs() / law < 0.15, "{}: {d} vs {law}", s.soc);
    }
}

#[test]
fn sweep_hits_nominal_in_the_middle() {
    let g = GroupedParameters::reference();
    let setup = common::setup(common::coarse(), ModelMode::Spme);
    let grid = FrequencyGrid::log_spaced(1e-2, 1e2, 5).unwrap();
    let pts = sensitivity_sweep(&g, &setup, Param::TauCtPos, 5, 50.0, &grid).unwrap();
    assert_eq!(pts.len(), 5);
    assert!(pts[2].nominal && pts[2].value == g.tau_ct_pos);
    assert!((pts[0].value / g.tau_ct_pos - 0.5).abs() < 1e-12);
    assert!((pts[4].value / g.tau_ct_pos - 2.0).abs() < 1e-12);
    let reference = spectrum(&setup.build(&g).unwrap(), &[50.0], &grid).unwrap();
    assert_eq!(pts[2].spectrum.z, reference.spectra[0].z);
    assert!(sensitivity_sweep(&g, &setup, Param::Temperature, 5, 50.0, &grid).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn series_resistance_is_a_pure_shift(r0 in 0.0..0.05f64, soc in 10.0..90.0f64, f in -3.0..3.0f64) {
        let setup = common::setup(common::coarse(), ModelMode::Spme);
        let mut g = GroupedParameters::reference();
        g.r0 = 0.0;
        let w = 2.0 * std::f64::consts::PI * 10f64.powf(f);
        let base = setup.build(&g).unwrap();
        let z0 = impedance_at(&base, &base.model().equilibrium_state(soc).unwrap(), w).unwrap();
        g.r0 = r0;
        let dae = setup.build(&g).unwrap();
        let z = impedance_at(&dae, &dae.model().equilibrium_state(soc).unwrap(), w).unwrap();
        prop_assert!((z - z0 - r0).norm() < 1e-12);
    }

    #[test]
    fn impedance_is_passive(soc in 5.0..95.0f64, f in -4.0..3.0f64) {
        let dae = common::setup(common::coarse(), ModelMode::Spme)
            .build(&GroupedParameters::reference())
            .unwrap();
        let x = dae.model().equilibrium_state(soc).unwrap();
        let z = impedance_at(&dae, &x, 2.0 * std::f64::consts::PI * 10f64.powf(f)).unwrap();
        prop_assert!(z.re > 0.0 && z.im < 0.0, "{}", z);
    }
}
