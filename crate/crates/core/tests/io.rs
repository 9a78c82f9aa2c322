mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use spmeis_core::impedance::{spectrum, FrequencyGrid, ImpedanceDataset, Spectrum};
use spmeis_core::io::{
    fmt_num, format_dataset, format_ocp, format_operating_points, format_params, format_trajectory,
    parse_dataset, parse_ocp, parse_operating_points, parse_params, parse_trajectory, read_dataset,
    snldr, write_atomic, OperatingPoint,
};
use spmeis_core::model::ModelMode;
use spmeis_core::ocp::synthetic_curves;
use spmeis_core::{Error, GroupedParameters, Param, Trajectory};

#[test]
fn nine_by_sixty_dataset_round_trips_bit_exactly() {
    let dae = common::setup(common::coarse(), ModelMode::Spme)
        .build(&GroupedParameters::reference())
        .unwrap();
    let socs: Vec<f64> = (1..=9).map(|k| 10.0 * k as f64).collect();
    let grid = FrequencyGrid::log_spaced(2e-4, 1e3, 60).unwrap();
    let ds = spectrum(&dae, &socs, &grid).unwrap();
    for bode in [false, true] {
        let back = parse_dataset(&format_dataset(&ds, bode), "mem").unwrap();
        assert_eq!(back.spectra.len(), 9);
        assert_eq!(back.n_points(), 540);
        for (a, b) in ds.spectra.iter().zip(&back.spectra) {
            assert_eq!(a.soc, b.soc);
            assert_eq!(a.temperature, b.temperature);
            assert_eq!(a.f_hz, b.f_hz);
            assert_eq!(a.z, b.z);
        }
    }
}

#[test]
fn ten_per_decade_grid_reads_as_nine_by_sixty_five() {
    let grid = FrequencyGrid::per_decade(4e-4, 1e3, 10.0).unwrap();
    assert_eq!(grid.len(), 65);
    let mut text = String::from("# soc_percent, f_hz, re_ohm, im_ohm\n");
    for soc in (1..=9).map(|k| 10 * k) {
        for f in grid.hz() {
            text.push_str(&format!("{soc}, {}, 0.02, -0.001\n", fmt_num(f)));
        }
    }
    let ds = parse_dataset(&text, "measured.csv").unwrap();
    assert_eq!(ds.spectra.len(), 9);
    assert!(ds.spectra.iter().all(|s| s.len() == 65));
}

#[test]
fn rows_for_one_soc_may_be_interleaved() {
    let text = "50, 1, 0.01, 0\n20, 1, 0.02, 0\n50, 2, 0.03, 0\n";
    let ds = parse_dataset(text, "mem").unwrap();
    assert_eq!(ds.socs(), vec![50.0, 20.0]);
    assert_eq!(ds.find(50.0).unwrap().f_hz, vec![1.0, 2.0]);
}

#[test]
fn malformed_datasets_report_the_line() {
    let cases = [
        ("50, 1, 0.01, 0\n50, 1, 0.02, 0\n", 2),
        ("# c\n120, 1, 0.01, 0\n", 2),
        ("50, 1, 0.01\n", 1),
        ("50, 1, abc, 0\n", 1),
        ("50, 0, 0.01, 0\n", 1),
    ];
    for (text, want) in cases {
        match parse_dataset(text, "bad.csv") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!((line, path.as_str()), (want, "bad.csv"), "{text}");
            }
            other => panic!("{text}: {other:?}"),
        }
    }
    assert!(parse_dataset("# only comments\n", "empty.csv").is_err());
}

#[test]
fn atomic_write_replaces_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.csv");
    std::fs::write(&path, "old").unwrap();
    let ds = ImpedanceDataset {
        spectra: vec![Spectrum {
            soc: 50.0,
            temperature: 298.15,
            f_hz: vec![1.0],
            z: vec![Complex64::new(0.01, -0.002)],
        }],
    };
    write_atomic(&path, &format_dataset(&ds, false)).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), ds);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    assert!(matches!(
        read_dataset(&dir.path().join("missing.csv")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn parameter_file_round_trips_and_resyncs_capacities() {
    let g = GroupedParameters::reference();
    let back = parse_params(&format_params(&g), "p.txt", &GroupedParameters::reference()).unwrap();
    assert_eq!(back, g);
    let edited = parse_params("sto0_pos = 0.88  # wider window\n", "p.txt", &g).unwrap();
    assert!((edited.q_th_pos - g.q_meas / (0.88 - g.sto100_pos)).abs() < 1e-9 * edited.q_th_pos);
    assert!(matches!(
        parse_params("nope = 1\n", "p.txt", &g),
        Err(Error::Parse { line: 1, .. })
    ));
    assert!(parse_params("r0 = -1\n", "p.txt", &g).is_err());
}

#[test]
fn ocp_table_round_trips() {
    let (pos, _) = synthetic_curves();
    let back = parse_ocp(&format_ocp(&pos), "ocp.csv").unwrap();
    assert_eq!(back.stoichiometries(), pos.stoichiometries());
    assert_eq!(back.potentials(), pos.potentials());
    assert!(parse_ocp("0.5, 3.8\n0.4, 3.9\n", "ocp.csv").is_err());
}

#[test]
fn trajectory_voltage_column_is_optional() {
    let tr = parse_trajectory("0, 0\n10, -5\n20, -5\n", "drive.csv").unwrap();
    assert!(tr.voltage.is_empty());
    assert!(parse_trajectory("0, 0, 3.9\n10, -5\n", "drive.csv").is_err());
    assert!(parse_trajectory("0, 0\n0, -5\n", "drive.csv").is_err());
}

#[test]
fn operating_points_and_snldr() {
    let ops = vec![
        OperatingPoint {
            soc: 90.0,
            ocv: 4.05,
            v_fund: 4.2e-3,
            v_2nd: 1.1e-5,
        },
        OperatingPoint {
            soc: 10.0,
            ocv: 3.45,
            v_fund: 4.2e-3,
            v_2nd: 0.0,
        },
    ];
    let back = parse_operating_points(&format_operating_points(&ops), "ops.csv").unwrap();
    assert_eq!(back, ops);
    assert!((back[0].snldr().unwrap() - 4.2e-3 / 1.1e-5).abs() < 1e-9);
    assert_eq!(back[1].snldr().unwrap(), f64::INFINITY);
    assert!(snldr(0.0, 1.0).is_err());
}

proptest! {
    #[test]
    fn numbers_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(fmt_num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn datasets_round_trip(
        rows in proptest::collection::vec((0u8..=100, 1e-5..1e5f64, -1.0..1.0f64, -1.0..1.0f64), 1..40)
    ) {
        let mut ds = ImpedanceDataset { spectra: Vec::new() };
        for (soc, f, re, im) in rows {
            let soc = soc as f64;
            let s = match ds.spectra.iter_mut().position(|s| s.soc == soc) {
                Some(k) => &mut ds.spectra[k],
                None => {
                    ds.spectra.push(Spectrum { soc, temperature: 298.15, f_hz: vec![], z: vec![] });
                    ds.spectra.last_mut().unwrap()
                }
            };
            if !s.f_hz.contains(&f) {
                s.f_hz.push(f);
                s.z.push(Complex64::new(re, im));
            }
        }
        prop_assert_eq!(parse_dataset(&format_dataset(&ds, true), "mem").unwrap(), ds);
    }

    #[test]
    fn trajectories_round_trip(v in proptest::collection::vec((-10.0..10.0f64, 2.5..4.3f64), 1..50)) {
        let tr = Trajectory {
            t: (0..v.len()).map(|k| 0.1 * k as f64).collect(),
            current: v.iter().map(|p| p.0).collect(),
            voltage: v.iter().map(|p| p.1).collect(),
            ..Trajectory::default()
        };
        let back = parse_trajectory(&format_trajectory(&tr), "mem").unwrap();
        prop_assert_eq!(back.t, tr.t);
        prop_assert_eq!(back.current, tr.current);
        prop_assert_eq!(back.voltage, tr.voltage);
    }

    #[test]
    fn parameter_values_round_trip(r0 in 0.0..0.05f64, tau in 1e3..5e4f64) {
        let mut g = GroupedParameters::reference();
        g.set(Param::R0, r0);
        g.set(Param::TauCtNeg, tau);
        prop_assert_eq!(parse_params(&format_params(&g), "p", &g).unwrap(), g);
    }
}
