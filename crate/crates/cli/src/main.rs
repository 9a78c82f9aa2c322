use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use spmeis_core::error::{Error, ErrorCategory, Result};
use spmeis_core::fit::{default_bounds, multistart, Bound, FitProblem, FitTarget};
use spmeis_core::impedance::{self, FrequencyGrid, ImpedanceDataset, ModelSetup};
use spmeis_core::io;
use spmeis_core::ocp::synthetic_curves;
use spmeis_core::pso::PsoOptions;
use spmeis_core::simulate::{self, BruteForceOptions, CurrentProfile, SimOptions};
use spmeis_core::{GroupedParameters, Mesh, ModelMode, Param};

mod config;

#[derive(Parser, Debug)]
#[command(
    name = "spmeis",
    version,
    about = "SPMe impedance, simulation and parameter estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Impedance spectra at equilibrium for a list of states of charge.
    Impedance(ImpedanceArgs),
    /// Impedance from time-domain sinusoidal excitation.
    Bruteforce(BruteforceArgs),
    /// Voltage response to a current profile.
    Simulate(SimulateArgs),
    /// Estimate parameters from impedance or voltage data.
    Fit(FitArgs),
    /// Spectra with one parameter scaled over [0.5, 2] times nominal.
    Sweep(SweepArgs),
    /// Parse a dataset and report signal-to-nonlinear-distortion ratios.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Model variant: spme or spm.
    #[arg(long, default_value = "spme")]
    model: ModelMode,
    /// Mesh as n_r,n_neg,n_sep,n_pos.
    #[arg(long, default_value = "100,100,20,100")]
    mesh: String,
    /// Parameter file (key = value); unset keys keep reference values.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Positive electrode OCP table; synthetic curve if absent.
    #[arg(long)]
    ocp_pos: Option<PathBuf>,
    /// Negative electrode OCP table; synthetic curve if absent.
    #[arg(long)]
    ocp_neg: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Lowest frequency [Hz].
    #[arg(long, default_value_t = 2e-4)]
    fmin: f64,
    /// Highest frequency [Hz].
    #[arg(long, default_value_t = 1e3)]
    fmax: f64,
    /// Points per decade; overrides --n-freq.
    #[arg(long)]
    ppd: Option<f64>,
    /// Number of log-spaced frequencies.
    #[arg(long, default_value_t = 60)]
    n_freq: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<FrequencyGrid> {
        match self.ppd {
            Some(p) => FrequencyGrid::per_decade(self.fmin, self.fmax, p),
            None => FrequencyGrid::log_spaced(self.fmin, self.fmax, self.n_freq),
        }
    }
}

#[derive(Args, Debug)]
struct ImpedanceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// States of charge [%], comma separated.
    #[arg(long, default_value = "50")]
    soc: String,
    /// Append magnitude and phase columns.
    #[arg(long)]
    bode: bool,
    /// Write the Jacobian at the first state of charge as coordinate text.
    #[arg(long)]
    dump_jacobian: Option<PathBuf>,
    #[arg(long, default_value = "impedance.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BruteforceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 50.0)]
    soc: f64,
    /// Frequencies [Hz], comma separated.
    #[arg(long, default_value = "1")]
    freq: String,
    /// Current amplitude [A].
    #[arg(long, default_value_t = 0.1)]
    amplitude: f64,
    #[arg(long, default_value_t = 10)]
    periods: usize,
    /// Leading periods dropped before the Fourier projection.
    #[arg(long, default_value_t = 5)]
    discard: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 64)]
    samples_per_period: usize,
    #[arg(long, default_value = "bruteforce.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Initial state of charge [%], at rest.
    #[arg(long, default_value_t = 90.0)]
    soc0: f64,
    /// Current record (t_s, i_a[, v_v]) applied with zero-order hold.
    #[arg(long, conflicts_with = "steps")]
    profile: Option<PathBuf>,
    /// Constant-current steps `I:duration,...` [A:s], e.g. `0:420,-5:3180`.
    #[arg(long)]
    steps: Option<String>,
    /// Output sampling period [s].
    #[arg(long, default_value_t = 10.0)]
    dt: f64,
    #[arg(long, default_value_t = 1e-6)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-9)]
    atol: f64,
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Target kind: impedance or voltage.
    #[arg(long, default_value = "impedance")]
    mode: String,
    /// Impedance dataset, or trajectory file for voltage fits.
    #[arg(long)]
    data: PathBuf,
    /// Initial state of charge for voltage fits [%].
    #[arg(long, default_value_t = 90.0)]
    soc0: f64,
    /// Free parameters, comma separated; default set if absent.
    #[arg(long)]
    free: Option<String>,
    /// Bound overrides `name:lo:hi,...`.
    #[arg(long)]
    bounds: Option<String>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 50)]
    swarm: usize,
    /// Seed of the first run; run k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop a run when the best cost improved less than --stall-tol over
    /// this many iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    stall_iters: usize,
    #[arg(long, default_value_t = 0.0)]
    stall_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-9)]
    atol: f64,
    #[arg(long, default_value = "fit_report.txt")]
    out: PathBuf,
    /// Also write the full estimated parameter set.
    #[arg(long)]
    out_params: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    param: Param,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long, default_value_t = 50.0)]
    soc: f64,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Operating-point file with raw voltage spectrum magnitudes.
    #[arg(long)]
    ops: Option<PathBuf>,
    /// Flag operating points with SNLDR below this value.
    #[arg(long, default_value_t = 100.0)]
    snldr_threshold: f64,
    #[arg(long, default_value = "validate.txt")]
    out: PathBuf,
}

fn fmt_complex(re: f64, im: f64) -> String {
    format!("{}, {}", io::fmt_num(re), io::fmt_num(im))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| Error::Domain {
                field: what.into(),
                reason: format!("`{t}` is not a number"),
            })
        })
        .collect()
}

fn parse_mesh(s: &str) -> Result<Mesh> {
    let v = parse_list(s, "mesh")?;
    if v.len() != 4 || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
        return Err(Error::Domain {
            field: "mesh".into(),
            reason: "expected four integers n_r,n_neg,n_sep,n_pos".into(),
        });
    }
    Mesh::new(v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize)
}

fn load_model(a: &ModelArgs) -> Result<(GroupedParameters, ModelSetup)> {
    let base = GroupedParameters::reference();
    let g = match &a.params {
        Some(p) => io::read_params(p, &base)?,
        None => base,
    };
    let (syn_pos, syn_neg) = synthetic_curves();
    let pos = match &a.ocp_pos {
        Some(p) => io::read_ocp(p)?,
        None => syn_pos,
    };
    let neg = match &a.ocp_neg {
        Some(p) => io::read_ocp(p)?,
        None => syn_neg,
    };
    Ok((
        g,
        ModelSetup {
            pos,
            neg,
            mesh: parse_mesh(&a.mesh)?,
            mode: a.model,
        },
    ))
}

/// Writes `contents` and a manifest next to it.
fn emit(out: &Path, contents: &str, manifest: &Manifest) -> Result<()> {
    io::write_atomic(out, contents)?;
    let mpath = PathBuf::from(format!("{}.manifest", out.display()));
    io::write_atomic(&mpath, &manifest.render())?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

struct Manifest {
    command: String,
    settings: Vec<String>,
    seed: Option<u64>,
}

impl Manifest {
    fn render(&self) -> String {
        let canonical = self.settings.join("\n");
        let hash = Sha256::digest(canonical.as_bytes());
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        let mut s = String::from("# run manifest\n");
        s.push_str(&format!("tool = spmeis {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("command = {}\n", self.command));
        s.push_str(&format!("config_sha256 = {hex}\n"));
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed = {seed}\n"));
        }
        s.push_str("\n[settings]\n");
        s.push_str(&canonical);
        s.push('\n');
        s
    }
}

/// Subcommand followed by `--key=value` pairs in sorted order.
fn canonical_settings(argv: &[String]) -> Vec<String> {
    let mut head = Vec::new();
    let mut pairs = Vec::new();
    let mut it = argv.iter().skip(1).peekable();
    while let Some(a) = it.next() {
        if let Some(flag) = a.strip_prefix("--") {
            if flag.contains('=') {
                pairs.push(a.clone());
            } else {
                match it.peek() {
                    Some(v) if !v.starts_with("--") => {
                        pairs.push(format!("{a}={}", it.next().unwrap()))
                    }
                    _ => pairs.push(format!("{a}=true")),
                }
            }
        } else {
            head.push(a.clone());
        }
    }
    pairs.sort();
    head.extend(pairs);
    head
}

fn run(cli: Cli, argv: &[String]) -> Result<()> {
    let settings = canonical_settings(argv);
    let manifest = |seed| Manifest {
        command: argv.iter().skip(1).cloned().collect::<Vec<_>>().join(" "),
        settings: settings.clone(),
        seed,
    };
    match cli.command {
        Command::Impedance(a) => {
            let (g, setup) = load_model(&a.model)?;
            let socs = parse_list(&a.soc, "soc")?;
            let grid = a.grid.grid()?;
            let dae = setup.build(&g)?;
            let ds = impedance::spectrum(&dae, &socs, &grid)?;
            if let Some(p) = &a.dump_jacobian {
                let x = dae.model().equilibrium_state(socs[0])?;
                io::write_atomic(p, &dae.linearize(&x).jacobian().to_coordinate_text())?;
            }
            emit(&a.out, &io::format_dataset(&ds, a.bode), &manifest(None))
        }
        Command::Bruteforce(a) => {
            let (g, setup) = load_model(&a.model)?;
            let dae = setup.build(&g)?;
            let freqs = parse_list(&a.freq, "freq")?;
            let opts = BruteForceOptions {
                amplitude: a.amplitude,
                n_periods: a.periods,
                n_discard: a.discard,
                tol: a.tol,
                samples_per_period: a.samples_per_period,
                ..BruteForceOptions::default()
            };
            let x0 = dae.model().equilibrium_state(a.soc)?;
            let omegas: Vec<f64> = freqs
                .iter()
                .map(|f| 2.0 * std::f64::consts::PI * f)
                .collect();
            let zb = simulate::brute_force_spectrum(&dae, &x0, &omegas, &opts)?;
            let mut s = String::from(
                "# soc_percent, f_hz, re_ohm, im_ohm, re_freq_ohm, im_freq_ohm, rel_diff\n",
            );
            for ((f, w), z) in freqs.iter().zip(&omegas).zip(&zb) {
                let zf = impedance::impedance_at(&dae, &x0, *w)?;
                s.push_str(&format!(
                    "{}, {}, {}, {}, {}\n",
                    io::fmt_num(a.soc),
                    io::fmt_num(*f),
                    fmt_complex(z.re, z.im),
                    fmt_complex(zf.re, zf.im),
                    io::fmt_num((z - zf).norm() / zf.norm())
                ));
            }
            emit(&a.out, &s, &manifest(None))
        }
        Command::Simulate(a) => {
            let (g, setup) = load_model(&a.model)?;
            let dae = setup.build(&g)?;
            let profile = match (&a.profile, &a.steps) {
                (Some(p), _) => {
                    let tr = io::read_trajectory(p)?;
                    io::profile_from_samples(&tr.t, &tr.current)?
                }
                (None, Some(s)) => parse_steps(s)?,
                (None, None) => {
                    return Err(Error::Domain {
                        field: "profile".into(),
                        reason: "give --profile or --steps".into(),
                    })
                }
            };
            if !(a.dt > 0.0) {
                return Err(Error::Domain {
                    field: "dt".into(),
                    reason: "must be positive".into(),
                });
            }
            let total = profile.duration();
            let n = (total / a.dt * (1.0 + 1e-12)).floor() as usize + 1;
            let times = simulate::uniform_times(a.dt, n);
            let x0 = dae.model().equilibrium_state(a.soc0)?;
            let opts = SimOptions {
                rtol: a.rtol,
                atol: a.atol,
                ..SimOptions::default()
            };
            let tr = simulate::integrate(&dae, &x0, &profile, &times, &opts)?;
            eprintln!(
                "steps {} rejected {} factorizations {}",
                tr.stats.steps, tr.stats.rejected, tr.stats.factorizations
            );
            emit(&a.out, &io::format_trajectory(&tr), &manifest(None))
        }
        Command::Fit(a) => run_fit(a, manifest(None).settings),
        Command::Sweep(a) => {
            let (g, setup) = load_model(&a.model)?;
            let grid = a.grid.grid()?;
            let pts = impedance::sensitivity_sweep(&g, &setup, a.param, a.steps, a.soc, &grid)?;
            let mut s = format!(
                "# {}_value, nominal, soc_percent, f_hz, re_ohm, im_ohm\n",
                a.param.name()
            );
            for p in &pts {
                for (f, z) in p.spectrum.f_hz.iter().zip(&p.spectrum.z) {
                    s.push_str(&format!(
                        "{}, {}, {}, {}, {}\n",
                        io::fmt_num(p.value),
                        u8::from(p.nominal),
                        io::fmt_num(a.soc),
                        io::fmt_num(*f),
                        fmt_complex(z.re, z.im)
                    ));
                }
            }
            emit(&a.out, &s, &manifest(None))
        }
        Command::Validate(a) => {
            let ds = io::read_dataset(&a.data)?;
            let report = validate_report(&ds, a.ops.as_deref(), a.snldr_threshold)?;
            print!("{report}");
            emit(&a.out, &report, &manifest(None))
        }
    }
}

fn parse_steps(s: &str) -> Result<CurrentProfile> {
    let mut p = CurrentProfile::new();
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (i, d) = item.split_once(':').ok_or_else(|| Error::Domain {
            field: "steps".into(),
            reason: format!("`{item}` is not I:duration"),
        })?;
        let v = parse_list(&format!("{i},{d}"), "steps")?;
        p = p.constant(v[0], v[1])?;
    }
    if p.segments().is_empty() {
        return Err(Error::Domain {
            field: "steps".into(),
            reason: "no steps".into(),
        });
    }
    Ok(p)
}

fn validate_report(ds: &ImpedanceDataset, ops: Option<&Path>, threshold: f64) -> Result<String> {
    let mut s = String::from("# dataset summary\n");
    s.push_str(&format!(
        "spectra = {}\npoints = {}\n",
        ds.spectra.len(),
        ds.n_points()
    ));
    s.push_str("\n[spectra]\n# soc_percent, n_freq, f_min_hz, f_max_hz\n");
    for sp in &ds.spectra {
        let lo = sp.f_hz.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sp.f_hz.iter().cloned().fold(0.0, f64::max);
        s.push_str(&format!(
            "{}, {}, {}, {}\n",
            io::fmt_num(sp.soc),
            sp.f_hz.len(),
            io::fmt_num(lo),
            io::fmt_num(hi)
        ));
    }
    s.push_str("\n[snldr]\n");
    match ops {
        None => s.push_str("status = unavailable (no raw voltage spectra)\n"),
        Some(p) => {
            let points = io::read_operating_points(p)?;
            s.push_str(&format!(
                "threshold = {}\n# soc_percent, ocv_v, snldr, flag\n",
                io::fmt_num(threshold)
            ));
            for op in &points {
                let r = op.snldr()?;
                let flag = if r < threshold { "low" } else { "ok" };
                s.push_str(&format!(
                    "{}, {}, {}, {flag}\n",
                    io::fmt_num(op.soc),
                    io::fmt_num(op.ocv),
                    io::fmt_num(r)
                ));
            }
        }
    }
    Ok(s)
}

fn run_fit(a: FitArgs, settings: Vec<String>) -> Result<()> {
    let (g, setup) = load_model(&a.model)?;
    let voltage = match a.mode.as_str() {
        "impedance" => false,
        "voltage" => true,
        other => {
            return Err(Error::Domain {
                field: "mode".into(),
                reason: format!("`{other}` is not impedance or voltage"),
            })
        }
    };
    let mut bounds = match &a.free {
        None => default_bounds(voltage),
        Some(list) => list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|n| {
                let p: Param = n.parse()?;
                let (lo, hi) = p.default_bounds().ok_or_else(|| Error::Domain {
                    field: p.name().into(),
                    reason: "no default bounds; give them with --bounds".into(),
                })?;
                Bound::new(p, lo, hi)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if let Some(spec) = &a.bounds {
        for item in spec.split(',').filter(|t| !t.trim().is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Domain {
                    field: "bounds".into(),
                    reason: format!("`{item}` is not name:lo:hi"),
                });
            }
            let p: Param = parts[0].parse()?;
            let lim = parse_list(&format!("{},{}", parts[1], parts[2]), "bounds")?;
            let b = Bound::new(p, lim[0], lim[1])?;
            match bounds.iter_mut().find(|x| x.param == p) {
                Some(slot) => *slot = b,
                None => bounds.push(b),
            }
        }
    }
    let target = if voltage {
        let tr = io::read_trajectory(&a.data)?;
        if tr.voltage.is_empty() {
            return Err(Error::Parse {
                path: a.data.display().to_string(),
                line: 0,
                reason: "voltage fits need a v_v column".into(),
            });
        }
        let profile = io::profile_from_samples(&tr.t, &tr.current)?;
        let t0 = tr.t[0];
        FitTarget::Voltage {
            profile,
            times: tr.t.iter().map(|t| t - t0).collect(),
            voltage: tr.voltage,
            soc0: a.soc0,
            sim: SimOptions {
                rtol: a.rtol,
                atol: a.atol,
                ..SimOptions::default()
            },
        }
    } else {
        FitTarget::Impedance(io::read_dataset(&a.data)?)
    };
    let problem = FitProblem::new(target, bounds, g, setup)?;
    let opts = PsoOptions {
        swarm_size: a.swarm,
        max_iter: a.max_iter,
        stall_iters: a.stall_iters,
        stall_tol: a.stall_tol,
        ..PsoOptions::default()
    };
    let seeds: Vec<u64> = (0..a.runs as u64).map(|k| a.seed + k).collect();
    let result = multistart(&problem, &opts, &seeds)?;
    for (p, v) in result.params.iter().zip(&result.theta) {
        eprintln!("{:>12} = {}", p.name(), io::fmt_num(*v));
    }
    if let Some(p) = &a.out_params {
        io::write_atomic(p, &io::format_params(&problem.params(&result.theta)?))?;
    }
    let manifest = Manifest {
        command: format!("fit --mode {}", a.mode),
        settings,
        seed: Some(a.seed),
    };
    emit(&a.out, &io::format_fit_result(&result), &manifest)
}

fn exit_for(category: ErrorCategory) -> ExitCode {
    ExitCode::from(category.exit_code() as u8)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::expand(argv) {
        Ok((a, _)) => a,
        Err(e) => {
            let cat = if e.io {
                ErrorCategory::Io
            } else {
                ErrorCategory::Usage
            };
            eprintln!("error[{}]: {}", cat.as_str(), e.message);
            return exit_for(cat);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            eprintln!(
                "error[{}]: invalid arguments",
                ErrorCategory::Usage.as_str()
            );
            return exit_for(ErrorCategory::Usage);
        }
    };
    match run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{}]: {e}", cat.as_str());
            exit_for(cat)
        }
    }
}
