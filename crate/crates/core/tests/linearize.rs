mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spmeis_core::dae::jacobian_discrepancy;
use spmeis_core::model::ModelMode;
use spmeis_core::sparse::{dense_solve, SparseLu};
use spmeis_core::{DaeSystem, GroupedParameters, Mesh};

#[test]
fn exact_jacobian_matches_finite_differences() {
    for (mode, seed) in [(ModelMode::Spme, 11), (ModelMode::Spm, 12)] {
        let dae = common::setup(Mesh::default(), mode)
            .build(&GroupedParameters::reference())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..2 {
            let x = common::random_smooth_state(dae.model(), &mut rng, 1e-3);
            let j = dae.linearize(&x).jacobian().to_dense();
            let fd = common::fd5_jacobian(&dae, &x, 1e-4);
            let (err, r, c) = jacobian_discrepancy(&j, &fd, 1e-6);
            assert!(err <= 1e-6, "{mode}: error {err:e} at ({r}, {c})");
        }
    }
}

#[test]
fn detected_pattern_covers_every_dependency() {
    let dae = common::setup(common::coarse(), ModelMode::Spme)
        .build(&GroupedParameters::reference())
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = common::random_valid_state(dae.model(), &mut rng);
    let j = dae.linearize(&x).jacobian();
    let fd = common::fd5_jacobian(&dae, &x, 1e-4);
    for (r, row) in fd.iter().enumerate() {
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (c, v) in row.iter().enumerate() {
            if v.abs() > 1e-8 * scale {
                assert!(j.get(r, c) != 0.0, "dependency ({r}, {c}) = {v:e} missing");
            }
        }
    }
}

#[test]
fn bordered_solve_equals_dense_solve() {
    let dae = common::setup(Mesh::new(6, 4, 3, 4).unwrap(), ModelMode::Spme)
        .build(&GroupedParameters::reference())
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = common::random_valid_state(dae.model(), &mut rng);
    let lin = dae.linearize(&x);
    let n = lin.n_states();
    let (alpha, beta) = (1.0, 0.37);
    let jd = lin.jacobian().to_dense();
    let dense: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| if r == c { alpha * lin.mass[r] } else { 0.0 } - beta * jd[r][c])
                .collect()
        })
        .collect();
    let b: Vec<f64> = (0..n).map(|k| ((k * 7 % 11) as f64 - 5.0) * 0.1).collect();
    let want = dense_solve(&dense, &b).unwrap();

    let pattern = lin.bordered_pattern();
    let m = pattern.assemble(&lin, alpha, beta);
    let mut lu = SparseLu::factor(&m).unwrap();
    let got = lu.solve(&pattern.extend_rhs(&b));
    for k in 0..n {
        assert!(
            (got[k] - want[k]).abs() <= 1e-9 * (1.0 + want[k].abs()),
            "{k}: {} vs {}",
            got[k],
            want[k]
        );
    }
}

#[test]
fn reused_structure_gives_identical_derivatives() {
    let setup = common::setup(common::coarse(), ModelMode::Spme);
    let base = GroupedParameters::reference();
    let structure = setup.build(&base).unwrap().structure().clone();
    let mut g = base.clone();
    g.tau_ct_pos *= 1.7;
    g.zeta_neg = 0.9;
    let fresh = setup.build(&g).unwrap();
    let reused = DaeSystem::with_structure(setup.build(&g).unwrap().into_model(), structure);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = common::random_valid_state(fresh.model(), &mut rng);
    let a = fresh.linearize(&x).jacobian().to_dense();
    let b = reused.linearize(&x).jacobian().to_dense();
    assert_eq!(a, b);
}

#[test]
fn colouring_groups_share_no_row() {
    let dae = common::setup(Mesh::default(), ModelMode::Spme)
        .build(&GroupedParameters::reference())
        .unwrap();
    let s = dae.structure();
    for (k, group) in s.colors.iter().enumerate() {
        for r in 0..s.fx.n_rows {
            let hits = s.fx.row(r).filter(|(c, _)| group.contains(c)).count();
            assert!(hits <= 1, "row {r} hit twice by colour {k}");
        }
    }
    assert!(s.colors.len() <= 10, "{} colours", s.colors.len());
}
