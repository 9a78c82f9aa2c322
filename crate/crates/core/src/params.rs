//! Physical constants, dimensional parameters and the grouped parameter set.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// CODATA 2018 Faraday constant [C/mol].
pub const FARADAY: f64 = 96485.33212;
/// CODATA 2018 molar gas constant [J/(mol K)].
pub const GAS_CONSTANT: f64 = 8.314462618;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub faraday: f64,
    pub gas_constant: f64,
    /// Ambient temperature [K].
    pub temperature: f64,
}

impl PhysicalConstants {
    pub fn at_temperature(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::domain("temperature", "must be positive and finite"));
        }
        Ok(Self {
            faraday: FARADAY,
            gas_constant: GAS_CONSTANT,
            temperature,
        })
    }

    /// Thermal voltage R_g T / F [V].
    pub fn thermal_voltage(&self) -> f64 {
        self.gas_constant * self.temperature / self.faraday
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            faraday: FARADAY,
            gas_constant: GAS_CONSTANT,
            temperature: 298.15,
        }
    }
}

/// Dimensional SPMe parameters. Lengths in m, concentrations in mol/m^3.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionalParameters {
    pub alpha_pos: f64,
    pub alpha_neg: f64,
    pub eps_pos: f64,
    pub eps_neg: f64,
    pub eps_sep: f64,
    pub c_max_pos: f64,
    pub c_max_neg: f64,
    pub l_pos: f64,
    pub l_neg: f64,
    /// Total cell thickness (electrodes and separator).
    pub l_total: f64,
    pub area: f64,
    pub r_pos: f64,
    pub r_neg: f64,
    pub d_pos: f64,
    pub d_neg: f64,
    /// Reference electrolyte diffusivity.
    pub d_e: f64,
    /// Double-layer capacity [F/m^2].
    pub cdl_pos: f64,
    pub cdl_neg: f64,
    /// Exchange-current coefficient [(A/m^2)(m^3/mol)^1.5].
    pub m_pos: f64,
    pub m_neg: f64,
    pub t_plus: f64,
    pub b_pos: f64,
    pub b_neg: f64,
    pub b_sep: f64,
    pub c0_pos: f64,
    pub c100_pos: f64,
    pub c0_neg: f64,
    pub c100_neg: f64,
    pub c_e0: f64,
    pub r0: f64,
}

impl DimensionalParameters {
    /// LG M50 parameter set with a 0.2 F/m^2 double layer
    /// and 10 mOhm series resistance. Stoichiometric windows are those of the
    /// grouped reference set.
    pub fn lg_m50() -> Self {
        let c_max_pos = 63104.0;
        let c_max_neg = 33133.0;
        let c_e = 1.0; // mol/L
        Self {
            alpha_pos: 0.665,
            alpha_neg: 0.75,
            eps_pos: 0.335,
            eps_neg: 0.25,
            eps_sep: 0.47,
            c_max_pos,
            c_max_neg,
            l_pos: 75.6e-6,
            l_neg: 85.2e-6,
            l_total: 75.6e-6 + 12e-6 + 85.2e-6,
            area: 0.065 * 1.58,
            r_pos: 5.22e-6,
            r_neg: 5.86e-6,
            d_pos: 4e-15,
            d_neg: 3.3e-14,
            d_e: 8.794e-11 * c_e * c_e - 3.972e-10 * c_e + 4.862e-10,
            cdl_pos: 0.2,
            cdl_neg: 0.2,
            m_pos: 3.42e-6,
            m_neg: 6.48e-7,
            t_plus: 0.2594,
            b_pos: 1.5,
            b_neg: 1.5,
            b_sep: 1.5,
            c0_pos: 0.8540 * c_max_pos,
            c100_pos: 0.2638 * c_max_pos,
            c0_neg: 0.02635 * c_max_neg,
            c100_neg: 0.9106 * c_max_neg,
            c_e0: 1000.0,
            r0: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_pos", self.alpha_pos),
            ("alpha_neg", self.alpha_neg),
            ("c_max_pos", self.c_max_pos),
            ("c_max_neg", self.c_max_neg),
            ("l_pos", self.l_pos),
            ("l_neg", self.l_neg),
            ("l_total", self.l_total),
            ("area", self.area),
            ("r_pos", self.r_pos),
            ("r_neg", self.r_neg),
            ("d_pos", self.d_pos),
            ("d_neg", self.d_neg),
            ("d_e", self.d_e),
            ("cdl_pos", self.cdl_pos),
            ("cdl_neg", self.cdl_neg),
            ("m_pos", self.m_pos),
            ("m_neg", self.m_neg),
            ("b_pos", self.b_pos),
            ("b_neg", self.b_neg),
            ("b_sep", self.b_sep),
            ("c0_pos", self.c0_pos),
            ("c100_pos", self.c100_pos),
            ("c0_neg", self.c0_neg),
            ("c100_neg", self.c100_neg),
            ("c_e0", self.c_e0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("eps_pos", self.eps_pos),
            ("eps_neg", self.eps_neg),
            ("eps_sep", self.eps_sep),
            ("t_plus", self.t_plus),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::domain(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        if !(self.r0 >= 0.0) {
            return Err(Error::domain("r0", "must be non-negative"));
        }
        if self.l_pos + self.l_neg >= self.l_total {
            return Err(Error::domain(
                "l_total",
                "must exceed the electrode thicknesses",
            ));
        }
        Ok(())
    }
}

/// Grouped SPMe parameters, plus measured capacity and temperature.
///
/// Capacities are in A s, timescales in s, capacitances in F, resistance in
/// Ohm. Stoichiometries are dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedParameters {
    pub q_th_pos: f64,
    pub q_th_neg: f64,
    pub q_e: f64,
    pub tau_d_pos: f64,
    pub tau_d_neg: f64,
    pub tau_e_pos: f64,
    pub tau_e_neg: f64,
    pub tau_e_sep: f64,
    pub tau_ct_pos: f64,
    pub tau_ct_neg: f64,
    pub cdl_pos: f64,
    pub cdl_neg: f64,
    pub zeta_pos: f64,
    pub zeta_neg: f64,
    pub ell_pos: f64,
    pub ell_neg: f64,
    pub sto0_pos: f64,
    pub sto100_pos: f64,
    pub sto0_neg: f64,
    pub sto100_neg: f64,
    pub t_plus: f64,
    pub r0: f64,
    pub q_meas: f64,
    pub temperature: f64,
}

impl GroupedParameters {
    /// Grouped reference set derived from the published LG M50 parameters,
    /// with electrode capacities tied to the measured capacity.
    pub fn reference() -> Self {
        let mut g = Self {
            q_th_pos: 0.0,
            q_th_neg: 0.0,
            q_e: 804.8,
            tau_d_pos: 6812.0,
            tau_d_neg: 1041.0,
            tau_e_pos: 409.2,
            tau_e_neg: 634.7,
            tau_e_sep: 246.2,
            tau_ct_pos: 4657.0,
            tau_ct_neg: 27592.0,
            cdl_pos: 0.5935,
            cdl_neg: 0.6719,
            zeta_pos: 0.7128,
            zeta_neg: 0.5319,
            ell_pos: 0.4375,
            ell_neg: 0.4930,
            sto0_pos: 0.8540,
            sto100_pos: 0.2638,
            sto0_neg: 0.02635,
            sto100_neg: 0.9106,
            t_plus: 0.2594,
            r0: 0.01,
            q_meas: 18551.0,
            temperature: 298.15,
        };
        g.sync_capacities()
            .expect("reference windows are nondegenerate");
        g
    }

    pub fn constants(&self) -> PhysicalConstants {
        PhysicalConstants {
            temperature: self.temperature,
            ..PhysicalConstants::default()
        }
    }

    /// Recomputes both theoretical capacities from `q_meas` and the
    /// stoichiometry windows.
    pub fn sync_capacities(&mut self) -> Result<()> {
        let (pos, neg) = theoretical_capacities(
            self.q_meas,
            (self.sto0_pos, self.sto100_pos),
            (self.sto0_neg, self.sto100_neg),
        )?;
        self.q_th_pos = pos;
        self.q_th_neg = neg;
        Ok(())
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::QThPos => self.q_th_pos,
            Param::QThNeg => self.q_th_neg,
            Param::QE => self.q_e,
            Param::TauDPos => self.tau_d_pos,
            Param::TauDNeg => self.tau_d_neg,
            Param::TauEPos => self.tau_e_pos,
            Param::TauENeg => self.tau_e_neg,
            Param::TauESep => self.tau_e_sep,
            Param::TauCtPos => self.tau_ct_pos,
            Param::TauCtNeg => self.tau_ct_neg,
            Param::CdlPos => self.cdl_pos,
            Param::CdlNeg => self.cdl_neg,
            Param::ZetaPos => self.zeta_pos,
            Param::ZetaNeg => self.zeta_neg,
            Param::EllPos => self.ell_pos,
            Param::EllNeg => self.ell_neg,
            Param::Sto0Pos => self.sto0_pos,
            Param::Sto100Pos => self.sto100_pos,
            Param::Sto0Neg => self.sto0_neg,
            Param::Sto100Neg => self.sto100_neg,
            Param::TPlus => self.t_plus,
            Param::R0 => self.r0,
            Param::QMeas => self.q_meas,
            Param::Temperature => self.temperature,
        }
    }

    /// Sets one field. Capacities are not resynchronised; see
    /// [`GroupedParameters::sync_capacities`].
    pub fn set(&mut self, p: Param, value: f64) {
        let slot = match p {
            Param::QThPos => &mut self.q_th_pos,
            Param::QThNeg => &mut self.q_th_neg,
            Param::QE => &mut self.q_e,
            Param::TauDPos => &mut self.tau_d_pos,
            Param::TauDNeg => &mut self.tau_d_neg,
            Param::TauEPos => &mut self.tau_e_pos,
            Param::TauENeg => &mut self.tau_e_neg,
            Param::TauESep => &mut self.tau_e_sep,
            Param::TauCtPos => &mut self.tau_ct_pos,
            Param::TauCtNeg => &mut self.tau_ct_neg,
            Param::CdlPos => &mut self.cdl_pos,
            Param::CdlNeg => &mut self.cdl_neg,
            Param::ZetaPos => &mut self.zeta_pos,
            Param::ZetaNeg => &mut self.zeta_neg,
            Param::EllPos => &mut self.ell_pos,
            Param::EllNeg => &mut self.ell_neg,
            Param::Sto0Pos => &mut self.sto0_pos,
            Param::Sto100Pos => &mut self.sto100_pos,
            Param::Sto0Neg => &mut self.sto0_neg,
            Param::Sto100Neg => &mut self.sto100_neg,
            Param::TPlus => &mut self.t_plus,
            Param::R0 => &mut self.r0,
            Param::QMeas => &mut self.q_meas,
            Param::Temperature => &mut self.temperature,
        };
        *slot = value;
    }

    /// Sets a parameter and, when it feeds the capacity relation, keeps the
    /// theoretical capacities consistent with it.
    pub fn set_coupled(&mut self, p: Param, value: f64) -> Result<()> {
        self.set(p, value);
        if p.drives_capacities() {
            self.sync_capacities()?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let v = self.get(p);
            if !v.is_finite() {
                return Err(Error::domain(p.name(), "must be finite"));
            }
        }
        for p in [
            Param::QThPos,
            Param::QThNeg,
            Param::QE,
            Param::TauDPos,
            Param::TauDNeg,
            Param::TauEPos,
            Param::TauENeg,
            Param::TauESep,
            Param::TauCtPos,
            Param::TauCtNeg,
            Param::ZetaPos,
            Param::ZetaNeg,
            Param::EllPos,
            Param::EllNeg,
            Param::QMeas,
            Param::Temperature,
        ] {
            if !(self.get(p) > 0.0) {
                return Err(Error::domain(
                    p.name(),
                    format!("must be positive, got {}", self.get(p)),
                ));
            }
        }
        // zero double-layer capacitance turns the surface-voltage rows algebraic
        for p in [Param::CdlPos, Param::CdlNeg, Param::R0] {
            if !(self.get(p) >= 0.0) {
                return Err(Error::domain(p.name(), "must be non-negative"));
            }
        }
        for p in [
            Param::Sto0Pos,
            Param::Sto100Pos,
            Param::Sto0Neg,
            Param::Sto100Neg,
        ] {
            let v = self.get(p);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(
                    p.name(),
                    format!("must lie in [0, 1], got {v}"),
                ));
            }
        }
        if !(self.sto100_pos < self.sto0_pos) {
            return Err(Error::domain(
                "sto100_pos",
                "positive electrode must empty on charge (sto100_pos < sto0_pos)",
            ));
        }
        if !(self.sto0_neg < self.sto100_neg) {
            return Err(Error::domain(
                "sto100_neg",
                "negative electrode must fill on charge (sto0_neg < sto100_neg)",
            ));
        }
        if !(self.ell_pos + self.ell_neg < 1.0) {
            return Err(Error::domain(
                "ell_pos",
                "ell_pos + ell_neg must be below 1",
            ));
        }
        if !(self.t_plus > 0.0 && self.t_plus < 1.0) {
            return Err(Error::domain("t_plus", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Applies the grouping formulas to a dimensional set.
///
/// The measured capacity is taken as the capacity of the positive electrode
/// over its stoichiometric window.
pub fn group_parameters(
    dim: &DimensionalParameters,
    constants: &PhysicalConstants,
) -> Result<GroupedParameters> {
    dim.validate()?;
    let f = constants.faraday;
    let l = dim.l_total;
    let q_th_pos = f * dim.alpha_pos * dim.c_max_pos * dim.l_pos * dim.area;
    let q_th_neg = f * dim.alpha_neg * dim.c_max_neg * dim.l_neg * dim.area;
    let sto0_pos = dim.c0_pos / dim.c_max_pos;
    let sto100_pos = dim.c100_pos / dim.c_max_pos;
    let g = GroupedParameters {
        q_th_pos,
        q_th_neg,
        q_e: f * dim.eps_sep * dim.c_e0 * l * dim.area,
        tau_d_pos: dim.r_pos * dim.r_pos / dim.d_pos,
        tau_d_neg: dim.r_neg * dim.r_neg / dim.d_neg,
        tau_e_pos: dim.eps_sep * l * l / (dim.eps_pos.powf(dim.b_pos) * dim.d_e),
        tau_e_neg: dim.eps_sep * l * l / (dim.eps_neg.powf(dim.b_neg) * dim.d_e),
        tau_e_sep: l * l / (dim.eps_sep.powf(dim.b_sep - 1.0) * dim.d_e),
        tau_ct_pos: f * dim.r_pos / (dim.m_pos * dim.c_e0.sqrt()),
        tau_ct_neg: f * dim.r_neg / (dim.m_neg * dim.c_e0.sqrt()),
        cdl_pos: 3.0 * dim.alpha_pos * dim.cdl_pos * dim.l_pos * dim.area / dim.r_pos,
        cdl_neg: 3.0 * dim.alpha_neg * dim.cdl_neg * dim.l_neg * dim.area / dim.r_neg,
        zeta_pos: dim.eps_pos / dim.eps_sep,
        zeta_neg: dim.eps_neg / dim.eps_sep,
        ell_pos: dim.l_pos / l,
        ell_neg: dim.l_neg / l,
        sto0_pos,
        sto100_pos,
        sto0_neg: dim.c0_neg / dim.c_max_neg,
        sto100_neg: dim.c100_neg / dim.c_max_neg,
        t_plus: dim.t_plus,
        r0: dim.r0,
        q_meas: q_th_pos * (sto0_pos - sto100_pos).abs(),
        temperature: constants.temperature,
    };
    Ok(g)
}

/// Electrode capacities implied by the measured capacity and the
/// stoichiometry windows `(at 0 %, at 100 %)`. Returns `(positive, negative)`.
pub fn theoretical_capacities(
    q_meas: f64,
    pos_window: (f64, f64),
    neg_window: (f64, f64),
) -> Result<(f64, f64)> {
    let dpos = pos_window.1 - pos_window.0;
    let dneg = neg_window.1 - neg_window.0;
    if dpos == 0.0 {
        return Err(Error::domain(
            "sto100_pos",
            "zero-width stoichiometry window",
        ));
    }
    if dneg == 0.0 {
        return Err(Error::domain(
            "sto100_neg",
            "zero-width stoichiometry window",
        ));
    }
    let pos = -q_meas / dpos;
    let neg = q_meas / dneg;
    if !(pos > 0.0) {
        return Err(Error::domain(
            "sto100_pos",
            "window yields a non-positive capacity",
        ));
    }
    if !(neg > 0.0) {
        return Err(Error::domain(
            "sto100_neg",
            "window yields a non-positive capacity",
        ));
    }
    Ok((pos, neg))
}

/// Typical charge-transfer resistances `(positive, negative)` [Ohm].
pub fn typical_ct_resistance(g: &GroupedParameters, constants: &PhysicalConstants) -> (f64, f64) {
    let k = 2.0 * constants.gas_constant * constants.temperature / constants.faraday;
    (
        k * g.tau_ct_pos / (3.0 * g.q_th_pos),
        k * g.tau_ct_neg / (3.0 * g.q_th_neg),
    )
}

/// Particle stoichiometries `(positive, negative)` at a state of charge in percent.
pub fn stoichiometry_at_soc(soc: f64, g: &GroupedParameters) -> Result<(f64, f64)> {
    if !(0.0..=100.0).contains(&soc) {
        return Err(Error::Range {
            what: "soc".into(),
            value: soc,
            min: 0.0,
            max: 100.0,
        });
    }
    let s = soc / 100.0;
    Ok((
        (1.0 - s) * g.sto0_pos + s * g.sto100_pos,
        (1.0 - s) * g.sto0_neg + s * g.sto100_neg,
    ))
}

/// Names of grouped parameters, as used in parameter and configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    QThPos,
    QThNeg,
    QE,
    TauDPos,
    TauDNeg,
    TauEPos,
    TauENeg,
    TauESep,
    TauCtPos,
    TauCtNeg,
    CdlPos,
    CdlNeg,
    ZetaPos,
    ZetaNeg,
    EllPos,
    EllNeg,
    Sto0Pos,
    Sto100Pos,
    Sto0Neg,
    Sto100Neg,
    TPlus,
    R0,
    QMeas,
    Temperature,
}

impl Param {
    pub const ALL: [Param; 24] = [
        Param::QThPos,
        Param::QThNeg,
        Param::QE,
        Param::TauDPos,
        Param::TauDNeg,
        Param::TauEPos,
        Param::TauENeg,
        Param::TauESep,
        Param::TauCtPos,
        Param::TauCtNeg,
        Param::CdlPos,
        Param::CdlNeg,
        Param::ZetaPos,
        Param::ZetaNeg,
        Param::EllPos,
        Param::EllNeg,
        Param::Sto0Pos,
        Param::Sto100Pos,
        Param::Sto0Neg,
        Param::Sto100Neg,
        Param::TPlus,
        Param::R0,
        Param::QMeas,
        Param::Temperature,
    ];

    /// The 18 parameters estimated from impedance data, in canonical order.
    pub const FIT_DEFAULT: [Param; 18] = [
        Param::TauDPos,
        Param::TauEPos,
        Param::TauCtPos,
        Param::CdlPos,
        Param::ZetaPos,
        Param::Sto0Pos,
        Param::Sto100Pos,
        Param::TauDNeg,
        Param::TauENeg,
        Param::TauCtNeg,
        Param::CdlNeg,
        Param::ZetaNeg,
        Param::Sto0Neg,
        Param::Sto100Neg,
        Param::TauESep,
        Param::QE,
        Param::TPlus,
        Param::R0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::QThPos => "q_th_pos",
            Param::QThNeg => "q_th_neg",
            Param::QE => "q_e",
            Param::TauDPos => "tau_d_pos",
            Param::TauDNeg => "tau_d_neg",
            Param::TauEPos => "tau_e_pos",
            Param::TauENeg => "tau_e_neg",
            Param::TauESep => "tau_e_sep",
            Param::TauCtPos => "tau_ct_pos",
            Param::TauCtNeg => "tau_ct_neg",
            Param::CdlPos => "cdl_pos",
            Param::CdlNeg => "cdl_neg",
            Param::ZetaPos => "zeta_pos",
            Param::ZetaNeg => "zeta_neg",
            Param::EllPos => "ell_pos",
            Param::EllNeg => "ell_neg",
            Param::Sto0Pos => "sto0_pos",
            Param::Sto100Pos => "sto100_pos",
            Param::Sto0Neg => "sto0_neg",
            Param::Sto100Neg => "sto100_neg",
            Param::TPlus => "t_plus",
            Param::R0 => "r0",
            Param::QMeas => "q_meas",
            Param::Temperature => "temperature_k",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Param::QThPos | Param::QThNeg | Param::QE | Param::QMeas => "A s",
            Param::TauDPos
            | Param::TauDNeg
            | Param::TauEPos
            | Param::TauENeg
            | Param::TauESep
            | Param::TauCtPos
            | Param::TauCtNeg => "s",
            Param::CdlPos | Param::CdlNeg => "F",
            Param::R0 => "Ohm",
            Param::Temperature => "K",
            _ => "-",
        }
    }

    /// Whether the parameter enters the capacity relation.
    pub fn drives_capacities(self) -> bool {
        matches!(
            self,
            Param::Sto0Pos | Param::Sto100Pos | Param::Sto0Neg | Param::Sto100Neg | Param::QMeas
        )
    }

    pub fn is_stoichiometry(self) -> bool {
        matches!(
            self,
            Param::Sto0Pos | Param::Sto100Pos | Param::Sto0Neg | Param::Sto100Neg
        )
    }

    /// Default optimisation bounds `(lower, upper)` of the reference study.
    pub fn default_bounds(self) -> Option<(f64, f64)> {
        Some(match self {
            Param::TauDPos | Param::TauDNeg => (5e2, 1e4),
            Param::TauEPos | Param::TauENeg | Param::TauESep => (2e2, 1e3),
            Param::ZetaPos | Param::ZetaNeg => (0.5, 1.5),
            Param::QE => (5e2, 1e3),
            Param::TauCtPos | Param::TauCtNeg => (1e3, 5e4),
            Param::CdlPos | Param::CdlNeg => (0.0, 1.0),
            Param::Sto0Pos => (0.8, 0.9),
            Param::Sto0Neg => (0.0, 0.1),
            Param::Sto100Pos => (0.2, 0.3),
            Param::Sto100Neg => (0.85, 0.95),
            Param::TPlus => (0.2, 0.5),
            Param::R0 => (0.0, 0.05),
            _ => return None,
        })
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim();
        Param::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::UnknownParameter(key.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn particle_timescale_direct_substitution() {
        let mut dim = DimensionalParameters::lg_m50();
        dim.r_pos = 1e-5;
        dim.d_pos = 1e-14;
        let g = group_parameters(&dim, &PhysicalConstants::default()).unwrap();
        assert!(rel(g.tau_d_pos, 1e4) < 1e-12);
    }

    #[test]
    fn equal_porosity_gives_unit_zeta() {
        let mut dim = DimensionalParameters::lg_m50();
        dim.eps_pos = dim.eps_sep;
        let g = group_parameters(&dim, &PhysicalConstants::default()).unwrap();
        assert_eq!(g.zeta_pos, 1.0);
    }

    #[test]
    fn lg_m50_grouping_matches_reference_set() {
        // hand arithmetic, e.g. tau_e_sep = (172.8e-6)^2 / (0.47^0.5 * 1.7694e-10) = 246.16 s
        let g = group_parameters(
            &DimensionalParameters::lg_m50(),
            &PhysicalConstants::default(),
        )
        .unwrap();
        let r = GroupedParameters::reference();
        let checks = [
            (g.tau_d_pos, 6812.0, 1e-3),
            (g.tau_d_neg, 1041.0, 1e-3),
            (g.tau_e_pos, 409.2, 1e-3),
            (g.tau_e_neg, 634.7, 1e-3),
            (g.tau_e_sep, 246.2, 1e-3),
            (g.tau_ct_pos, 4657.0, 1e-3),
            (g.tau_ct_neg, 27592.0, 1e-3),
            (g.cdl_pos, 0.5935, 1e-3),
            (g.cdl_neg, 0.6719, 1e-3),
            (g.zeta_pos, 0.7128, 1e-3),
            (g.zeta_neg, 0.5319, 1e-3),
            (g.q_e, 804.8, 1e-3),
            (g.ell_pos, 0.4375, 1e-3),
            (g.ell_neg, 0.4930, 1e-3),
            (g.q_th_pos, r.q_th_pos, 1e-3),
            (g.q_th_neg, r.q_th_neg, 1e-3),
            (g.q_meas, 18551.0, 1e-3),
        ];
        for (i, (got, want, tol)) in checks.into_iter().enumerate() {
            assert!(rel(got, want) < tol, "entry {i}: {got} vs {want}");
        }
        assert!((g.tau_e_sep - 246.16).abs() < 0.01);
    }

    #[test]
    fn grouping_rejects_nonpositive_field() {
        let mut dim = DimensionalParameters::lg_m50();
        dim.d_neg = 0.0;
        let err = group_parameters(&dim, &PhysicalConstants::default()).unwrap_err();
        assert!(matches!(err, Error::Domain { ref field, .. } if field == "d_neg"));
    }

    #[test]
    fn capacities_from_measured_capacity() {
        let (pos, neg) =
            theoretical_capacities(18551.0, (0.8540, 0.2638), (0.02635, 0.9106)).unwrap();
        assert!((pos - 31432.0).abs() < 1.0, "{pos}");
        assert!((neg - 20980.0).abs() < 1.0, "{neg}");
        let (_, unit) = theoretical_capacities(18551.0, (0.9, 0.1), (0.0, 1.0)).unwrap();
        assert_eq!(unit, 18551.0);
        assert!(theoretical_capacities(1.0, (0.5, 0.5), (0.0, 1.0)).is_err());
        assert!(theoretical_capacities(1.0, (0.9, 0.1), (0.3, 0.3)).is_err());
    }

    #[test]
    fn typical_resistances_and_corner_timescales() {
        let g = GroupedParameters::reference();
        let (rp, rn) = typical_ct_resistance(&g, &g.constants());
        assert!((rp - 2.54e-3).abs() < 0.01e-3, "{rp}");
        assert!((rn - 22.5e-3).abs() < 0.1e-3, "{rn}");
        assert!((rp * g.cdl_pos - 1.5e-3).abs() < 0.05e-3);
        assert!((rn * g.cdl_neg - 15e-3).abs() < 0.5e-3);
        let mut g2 = g.clone();
        g2.tau_ct_pos *= 2.0;
        let (rp2, _) = typical_ct_resistance(&g2, &g2.constants());
        assert!(rel(rp2, 2.0 * rp) < 1e-14);
    }

    #[test]
    fn stoichiometry_interpolation() {
        let g = GroupedParameters::reference();
        assert_eq!(
            stoichiometry_at_soc(0.0, &g).unwrap(),
            (g.sto0_pos, g.sto0_neg)
        );
        assert_eq!(
            stoichiometry_at_soc(100.0, &g).unwrap(),
            (g.sto100_pos, g.sto100_neg)
        );
        let (cp, cn) = stoichiometry_at_soc(50.0, &g).unwrap();
        assert!((cp - 0.5589).abs() < 1e-12);
        assert!((cn - 0.468475).abs() < 1e-12);
        assert!(stoichiometry_at_soc(100.5, &g).is_err());
        assert!(stoichiometry_at_soc(-1.0, &g).is_err());
    }

    #[test]
    fn parameter_names_round_trip() {
        for p in Param::ALL {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
        assert!("tau_x".parse::<Param>().is_err());
    }

    #[test]
    fn reference_set_is_valid() {
        GroupedParameters::reference().validate().unwrap();
        let mut g = GroupedParameters::reference();
        g.sto100_pos = 0.95;
        assert!(g.validate().is_err());
    }
}
