//! Text file formats: impedance datasets, trajectories, OCP tables,
//! parameter sets, operating-point records and fit reports.
//!
//! Numbers are written in shortest round-trip form, so every file produced
//! here parses back to bit-identical values.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::impedance::{ImpedanceDataset, Spectrum};
use crate::ocp::OcpCurve;
use crate::params::{GroupedParameters, Param};
use crate::simulate::{CurrentProfile, Trajectory};

pub const DATASET_HEADER: &str = "# soc_percent, f_hz, re_ohm, im_ohm";
pub const BODE_HEADER: &str = "# soc_percent, f_hz, re_ohm, im_ohm, mag_ohm, phase_deg";
pub const TRAJECTORY_HEADER: &str = "# t_s, i_a, v_v";
pub const OCP_HEADER: &str = "# stoichiometry, potential_V";
pub const OPS_HEADER: &str = "# soc_percent, ocv_v, v_fund, v_2nd";

/// Shortest decimal that parses back to `x` exactly.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| Error::Io {
        path: path.display().to_string(),
        reason: "not a file path".into(),
    })?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn parse_err(path: &str, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        reason: reason.into(),
    }
}

/// Numeric rows of a comma-separated table. Blank lines and `#` comments
/// are skipped; `# key = value` comments are returned as metadata.
struct Table {
    rows: Vec<(usize, Vec<f64>)>,
    meta: Vec<(usize, String, String)>,
}

fn parse_table(text: &str, origin: &str, min_cols: usize) -> Result<Table> {
    let mut rows = Vec::new();
    let mut meta = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let n = k + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((key, value)) = c.split_once('=') {
                meta.push((n, key.trim().to_string(), value.trim().to_string()));
            }
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() < min_cols {
            return Err(parse_err(
                origin,
                n,
                format!(
                    "expected at least {min_cols} columns, found {}",
                    fields.len()
                ),
            ));
        }
        let vals = fields
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(origin, n, format!("`{s}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(origin, n, "non-finite value"));
        }
        rows.push((n, vals));
    }
    Ok(Table { rows, meta })
}

/// Impedance dataset text. Rows are grouped by state of charge in order
/// of first appearance. With `bode` the magnitude and phase columns are
/// appended.
pub fn format_dataset(ds: &ImpedanceDataset, bode: bool) -> String {
    let mut s = String::new();
    if let Some(t) = ds.spectra.first().map(|s| s.temperature) {
        let _ = writeln!(s, "# temperature_k = {}", fmt_num(t));
    }
    s.push_str(if bode { BODE_HEADER } else { DATASET_HEADER });
    s.push('\n');
    for sp in &ds.spectra {
        for (f, z) in sp.f_hz.iter().zip(&sp.z) {
            let _ = write!(
                s,
                "{}, {}, {}, {}",
                fmt_num(sp.soc),
                fmt_num(*f),
                fmt_num(z.re),
                fmt_num(z.im)
            );
            if bode {
                let _ = write!(
                    s,
                    ", {}, {}",
                    fmt_num(z.norm()),
                    fmt_num(z.arg().to_degrees())
                );
            }
            s.push('\n');
        }
    }
    s
}

pub fn parse_dataset(text: &str, origin: &str) -> Result<ImpedanceDataset> {
    let table = parse_table(text, origin, 4)?;
    let mut temperature = 298.15;
    for (n, key, value) in &table.meta {
        if key == "temperature_k" {
            temperature = value
                .parse()
                .map_err(|_| parse_err(origin, *n, format!("bad temperature `{value}`")))?;
        }
    }
    let mut spectra: Vec<Spectrum> = Vec::new();
    for (n, row) in &table.rows {
        let (soc, f) = (row[0], row[1]);
        if !(0.0..=100.0).contains(&soc) {
            return Err(parse_err(
                origin,
                *n,
                format!("state of charge {soc} outside [0, 100]"),
            ));
        }
        if !(f > 0.0) {
            return Err(parse_err(
                origin,
                *n,
                format!("frequency {f} must be positive"),
            ));
        }
        let z = Complex64::new(row[2], row[3]);
        match spectra.iter_mut().find(|s| s.soc == soc) {
            Some(sp) => {
                if sp.f_hz.contains(&f) {
                    return Err(parse_err(
                        origin,
                        *n,
                        format!("duplicate point (soc {soc}, f {f})"),
                    ));
                }
                sp.f_hz.push(f);
                sp.z.push(z);
            }
            None => spectra.push(Spectrum {
                soc,
                temperature,
                f_hz: vec![f],
                z: vec![z],
            }),
        }
    }
    if spectra.is_empty() {
        return Err(parse_err(origin, 0, "no data rows"));
    }
    Ok(ImpedanceDataset { spectra })
}

pub fn read_dataset(path: &Path) -> Result<ImpedanceDataset> {
    parse_dataset(&read(path)?, &path.display().to_string())
}

pub fn format_trajectory(tr: &Trajectory) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for k in 0..tr.len() {
        let _ = writeln!(
            s,
            "{}, {}, {}",
            fmt_num(tr.t[k]),
            fmt_num(tr.current[k]),
            fmt_num(tr.voltage[k])
        );
    }
    s
}

/// Trajectory columns. The voltage column may be absent for current-only
/// drive cycles, in which case it is empty.
pub fn parse_trajectory(text: &str, origin: &str) -> Result<Trajectory> {
    let table = parse_table(text, origin, 2)?;
    let mut tr = Trajectory::default();
    let with_v = table.rows.first().is_some_and(|(_, r)| r.len() >= 3);
    for (n, row) in &table.rows {
        if tr.t.last().is_some_and(|&t| row[0] <= t) {
            return Err(parse_err(
                origin,
                *n,
                "time stamps must be strictly increasing",
            ));
        }
        if with_v && row.len() < 3 {
            return Err(parse_err(origin, *n, "missing voltage column"));
        }
        tr.t.push(row[0]);
        tr.current.push(row[1]);
        if with_v {
            tr.voltage.push(row[2]);
        }
    }
    if tr.t.is_empty() {
        return Err(parse_err(origin, 0, "no data rows"));
    }
    Ok(tr)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory(&read(path)?, &path.display().to_string())
}

/// Zero-order-hold profile from a sampled current record. Times are taken
/// relative to the first sample; the last sample is held for one more
/// sample interval.
pub fn profile_from_samples(t: &[f64], i: &[f64]) -> Result<CurrentProfile> {
    let t0 = *t
        .first()
        .ok_or_else(|| Error::domain("samples", "empty record"))?;
    let times: Vec<f64> = t.iter().map(|s| s - t0).collect();
    CurrentProfile::new().sampled(times, i.to_vec(), None)
}

pub fn format_ocp(curve: &OcpCurve) -> String {
    let mut s = String::from(OCP_HEADER);
    s.push('\n');
    for (c, u) in curve.stoichiometries().iter().zip(curve.potentials()) {
        let _ = writeln!(s, "{}, {}", fmt_num(*c), fmt_num(*u));
    }
    s
}

pub fn parse_ocp(text: &str, origin: &str) -> Result<OcpCurve> {
    let table = parse_table(text, origin, 2)?;
    let (c, u): (Vec<f64>, Vec<f64>) = table.rows.iter().map(|(_, r)| (r[0], r[1])).unzip();
    OcpCurve::new(c, u).map_err(|e| parse_err(origin, 0, e.to_string()))
}

pub fn read_ocp(path: &Path) -> Result<OcpCurve> {
    parse_ocp(&read(path)?, &path.display().to_string())
}

/// `key = value` parameter file with every grouped parameter.
pub fn format_params(g: &GroupedParameters) -> String {
    let mut s = String::from("# grouped parameters\n");
    for p in Param::ALL {
        let _ = writeln!(s, "{} = {}  # {}", p.name(), fmt_num(g.get(p)), p.unit());
    }
    s
}

/// Parameter file on top of `base`. Theoretical capacities are recomputed
/// from the stoichiometry windows unless the file sets them.
pub fn parse_params(
    text: &str,
    origin: &str,
    base: &GroupedParameters,
) -> Result<GroupedParameters> {
    let mut g = base.clone();
    let mut explicit_capacity = false;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(origin, k + 1, "expected `name = value`"))?;
        let p: Param = key
            .trim()
            .parse()
            .map_err(|e: Error| parse_err(origin, k + 1, e.to_string()))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(origin, k + 1, format!("`{}` is not a number", value.trim())))?;
        explicit_capacity |= matches!(p, Param::QThPos | Param::QThNeg);
        g.set(p, v);
    }
    if !explicit_capacity {
        g.sync_capacities()?;
    }
    g.validate()?;
    Ok(g)
}

pub fn read_params(path: &Path, base: &GroupedParameters) -> Result<GroupedParameters> {
    parse_params(&read(path)?, &path.display().to_string(), base)
}

/// Per-operating-point record of a measurement campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub soc: f64,
    pub ocv: f64,
    /// Voltage spectrum magnitude at the excitation frequency.
    pub v_fund: f64,
    /// Voltage spectrum magnitude at twice the excitation frequency.
    pub v_2nd: f64,
}

impl OperatingPoint {
    /// Signal-to-nonlinear-distortion ratio `|V(w) / V(2w)|`.
    pub fn snldr(&self) -> Result<f64> {
        snldr(self.v_fund, self.v_2nd)
    }
}

/// `|V(w)| / |V(2w)|`; `+inf` without a second harmonic.
pub fn snldr(v_fund: f64, v_2nd: f64) -> Result<f64> {
    if !(v_fund > 0.0) {
        return Err(Error::domain(
            "v_fund",
            "fundamental magnitude must be positive",
        ));
    }
    if v_2nd == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((v_fund / v_2nd).abs())
}

pub fn format_operating_points(ops: &[OperatingPoint]) -> String {
    let mut s = String::from(OPS_HEADER);
    s.push('\n');
    for op in ops {
        let _ = writeln!(
            s,
            "{}, {}, {}, {}",
            fmt_num(op.soc),
            fmt_num(op.ocv),
            fmt_num(op.v_fund),
            fmt_num(op.v_2nd)
        );
    }
    s
}

pub fn parse_operating_points(text: &str, origin: &str) -> Result<Vec<OperatingPoint>> {
    let table = parse_table(text, origin, 4)?;
    table
        .rows
        .iter()
        .map(|(n, r)| {
            if !(0.0..=100.0).contains(&r[0]) {
                return Err(parse_err(
                    origin,
                    *n,
                    format!("state of charge {} outside [0, 100]", r[0]),
                ));
            }
            if r[2] < 0.0 || r[3] < 0.0 {
                return Err(parse_err(
                    origin,
                    *n,
                    "spectrum magnitudes must be nonnegative",
                ));
            }
            Ok(OperatingPoint {
                soc: r[0],
                ocv: r[1],
                v_fund: r[2],
                v_2nd: r[3],
            })
        })
        .collect()
}

pub fn read_operating_points(path: &Path) -> Result<Vec<OperatingPoint>> {
    parse_operating_points(&read(path)?, &path.display().to_string())
}

/// Sectioned text report of a fit.
pub fn format_fit_result(r: &FitResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# fit report");
    let _ = writeln!(s, "cost = {}", fmt_num(r.cost));
    let _ = writeln!(s, "runs = {}", r.runs.len());
    let _ = writeln!(s, "wall_time_s = {}", fmt_num(r.wall_time.as_secs_f64()));
    let _ = writeln!(
        s,
        "\n[estimates]\n# parameter, estimate, rel_std_percent, unit"
    );
    for ((p, v), sd) in r.params.iter().zip(&r.theta).zip(&r.rel_std) {
        let _ = writeln!(
            s,
            "{}, {}, {}, {}",
            p.name(),
            fmt_num(*v),
            fmt_num(*sd),
            p.unit()
        );
    }
    if !r.fitting_error.is_empty() {
        let _ = writeln!(s, "\n[fitting_error]\n# soc_percent, fe_percent");
        for (soc, fe) in r.socs.iter().zip(&r.fitting_error) {
            let _ = writeln!(s, "{}, {}", fmt_num(*soc), fmt_num(*fe));
        }
    }
    let _ = writeln!(s, "\n[runs]\n# seed, cost, iterations, failed_evaluations");
    for run in &r.runs {
        let _ = writeln!(
            s,
            "{}, {}, {}, {}",
            run.seed,
            fmt_num(run.cost),
            run.iterations,
            run.failures
        );
    }
    let _ = writeln!(s, "\n[trace]\n# iteration, best_cost (best run)");
    for (k, c) in r.best_run().trace.iter().enumerate() {
        let _ = writeln!(s, "{k}, {}", fmt_num(*c));
    }
    s
}
