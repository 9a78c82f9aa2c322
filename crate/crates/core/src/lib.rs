//! Grouped-parameter single particle model with electrolyte for lithium-ion
//! cells: time-domain simulation, impedance by linearisation, and parameter
//! estimation from impedance or voltage data.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bdf;
pub mod dae;
pub mod dual;
pub mod error;
pub mod fit;
pub mod impedance;
pub mod io;
pub mod mesh;
pub mod model;
pub mod ocp;
pub mod params;
pub mod pso;
pub mod simulate;
pub mod sparse;
pub mod toy;

pub use dae::{DaeModel, DaeSystem, Linearization};
pub use error::{Error, ErrorCategory, Result};
pub use mesh::Mesh;
pub use model::{assemble_dae, ModelMode, Spme};
pub use ocp::OcpCurve;
pub use params::{GroupedParameters, Param};
pub use simulate::{integrate, CurrentProfile, SimOptions, Trajectory};
