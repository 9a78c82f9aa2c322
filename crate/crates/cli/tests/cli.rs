use std::path::Path;
use std::process::{Command, Output};

use spmeis_core::io::{read_dataset, read_params, read_trajectory};
use spmeis_core::GroupedParameters;

const MESH: &str = "--mesh=6,4,3,4";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spmeis"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn impedance_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "impedance",
            MESH,
            "--soc",
            "20,50",
            "--n-freq",
            "7",
            "--out",
            "z.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ds = read_dataset(&dir.path().join("z.csv")).unwrap();
    assert_eq!(ds.socs(), vec![20.0, 50.0]);
    assert!(ds.spectra.iter().all(|s| s.len() == 7));
    assert_eq!(ds.spectra[0].f_hz[0], 2e-4);
    assert_eq!(*ds.spectra[0].f_hz.last().unwrap(), 1e3);
    let manifest = std::fs::read_to_string(dir.path().join("z.csv.manifest")).unwrap();
    assert!(manifest.contains("config_sha256 = "));
    assert!(manifest.contains("--soc=20,50"));
}

#[test]
fn manifest_hash_ignores_option_order() {
    let dir = tempfile::tempdir().unwrap();
    let hash = || {
        let text = std::fs::read_to_string(dir.path().join("a.csv.manifest")).unwrap();
        text.lines()
            .find(|l| l.starts_with("config_sha256"))
            .unwrap()
            .to_string()
    };
    let a = run(
        dir.path(),
        &[
            "impedance",
            MESH,
            "--soc",
            "50",
            "--n-freq",
            "3",
            "--out",
            "a.csv",
        ],
    );
    assert_eq!(code(&a), 0);
    let ha = hash();
    let b = run(
        dir.path(),
        &["impedance", "--n-freq=3", "--out=a.csv", "--soc=50", MESH],
    );
    assert_eq!(code(&b), 0);
    assert_eq!(hash(), ha);
    let c = run(
        dir.path(),
        &[
            "impedance",
            MESH,
            "--soc",
            "50",
            "--n-freq",
            "4",
            "--out",
            "a.csv",
        ],
    );
    assert_eq!(code(&c), 0);
    assert_ne!(hash(), ha);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "mesh = 6,4,3,4\nn_freq = 4\nsoc = 30\nbode = true\n",
    )
    .unwrap();
    let o = run(
        dir.path(),
        &[
            "impedance",
            "--config",
            "run.cfg",
            "--out",
            "z.csv",
            "--n-freq",
            "6",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("z.csv")).unwrap();
    assert!(text.contains("mag_ohm, phase_deg"));
    assert_eq!(
        read_dataset(&dir.path().join("z.csv")).unwrap().spectra[0].len(),
        6
    );
}

#[test]
fn simulate_steps_produces_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "simulate",
            MESH,
            "--soc0",
            "80",
            "--steps",
            "0:60,-5:120,0:60",
            "--dt",
            "10",
            "--out",
            "tr.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tr = read_trajectory(&dir.path().join("tr.csv")).unwrap();
    assert_eq!(tr.len(), 25);
    assert_eq!(tr.current[7], -5.0);
    assert!(tr.voltage[18] < tr.voltage[5]);
}

#[test]
fn simulate_then_fit_voltage_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["simulate", MESH, "--steps=-5:300,0:300", "--out", "tr.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(
        dir.path(),
        &[
            "fit",
            MESH,
            "--mode",
            "voltage",
            "--data",
            "tr.csv",
            "--free",
            "r0",
            "--runs",
            "2",
            "--swarm",
            "10",
            "--max-iter",
            "20",
            "--out",
            "rep.txt",
            "--out-params",
            "est.txt",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("rep.txt")).unwrap();
    for section in ["[estimates]", "[runs]", "[trace]"] {
        assert!(report.contains(section), "{report}");
    }
    let est = read_params(&dir.path().join("est.txt"), &GroupedParameters::reference()).unwrap();
    assert!((est.r0 - 0.01).abs() < 1e-3, "{}", est.r0);
}

#[test]
fn fit_impedance_reports_fitting_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "impedance",
            MESH,
            "--soc",
            "30,70",
            "--n-freq",
            "8",
            "--out",
            "z.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let o = run(
        dir.path(),
        &[
            "fit",
            MESH,
            "--data",
            "z.csv",
            "--free",
            "r0,tau_ct_neg",
            "--bounds",
            "tau_ct_neg:1e4:5e4",
            "--runs",
            "2",
            "--swarm",
            "10",
            "--max-iter",
            "30",
            "--seed",
            "5",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("fit_report.txt")).unwrap();
    assert!(report.contains("[fitting_error]"));
    assert!(report.contains("tau_ct_neg"));
}

#[test]
fn bruteforce_and_sweep_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "bruteforce",
            MESH,
            "--soc",
            "50",
            "--freq",
            "1,10",
            "--out",
            "bf.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("bf.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
    let o = run(
        dir.path(),
        &[
            "sweep", MESH, "--param", "r0", "--steps", "3", "--n-freq", "5", "--out", "sw.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn validate_without_operating_points_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    run(
        dir.path(),
        &[
            "impedance",
            MESH,
            "--soc",
            "50",
            "--n-freq",
            "4",
            "--out",
            "z.csv",
        ],
    );
    let o = run(dir.path(), &["validate", "--data", "z.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("validate.txt")).unwrap();
    assert!(text.contains("status = unavailable"), "{text}");
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let bad_soc = run(dir.path(), &["impedance", MESH, "--soc", "150"]);
    assert_eq!(code(&bad_soc), 2);
    assert!(stderr(&bad_soc).starts_with("error["));
    assert_eq!(code(&run(dir.path(), &["impedance", "--no-such-flag"])), 2);
    assert_eq!(code(&run(dir.path(), &["fit", "--data", "missing.csv"])), 3);
    std::fs::write(dir.path().join("broken.csv"), "50, 1, x, 0\n").unwrap();
    let o = run(dir.path(), &["fit", MESH, "--data", "broken.csv"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("broken.csv:1"), "{}", stderr(&o));
}
