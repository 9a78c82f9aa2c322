//! Cell-centred finite-volume meshes for the particles and the electrolyte.

use crate::error::{Error, Result};

/// Cell counts of the discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mesh {
    /// Radial cells per particle.
    pub n_r: usize,
    pub n_neg: usize,
    pub n_sep: usize,
    pub n_pos: usize,
}

impl Default for Mesh {
    fn default() -> Self {
        Self {
            n_r: 100,
            n_neg: 100,
            n_sep: 20,
            n_pos: 100,
        }
    }
}

impl Mesh {
    pub fn new(n_r: usize, n_neg: usize, n_sep: usize, n_pos: usize) -> Result<Self> {
        let mesh = Self {
            n_r,
            n_neg,
            n_sep,
            n_pos,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_r", self.n_r),
            ("n_neg", self.n_neg),
            ("n_sep", self.n_sep),
            ("n_pos", self.n_pos),
        ] {
            if n < 2 {
                return Err(Error::domain(
                    name,
                    format!("at least 2 cells required, got {n}"),
                ));
            }
        }
        Ok(())
    }

    pub fn n_electrolyte(&self) -> usize {
        self.n_neg + self.n_sep + self.n_pos
    }
}

/// Radial geometry of the unit sphere split into equal-width shells.
#[derive(Debug, Clone)]
pub(crate) struct RadialGrid {
    pub h: f64,
    /// Outer face radius of each shell.
    pub faces: Vec<f64>,
    /// Shell volume fractions r_out^3 - r_in^3; sums to one.
    pub volumes: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(n: usize) -> Self {
        let h = 1.0 / n as f64;
        let faces: Vec<f64> = (1..=n).map(|k| k as f64 * h).collect();
        let volumes = (0..n)
            .map(|k| {
                let outer = faces[k];
                let inner = k as f64 * h;
                outer.powi(3) - inner.powi(3)
            })
            .collect();
        Self { h, faces, volumes }
    }
}

/// Region a through-cell coordinate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Region {
    Negative,
    Separator,
    Positive,
}

/// Through-cell geometry on x in [0, 1], uniform within each region.
#[derive(Debug, Clone)]
pub(crate) struct LineGrid {
    pub widths: Vec<f64>,
    /// Interior face positions, `widths.len() - 1` of them.
    pub faces: Vec<f64>,
    pub regions: Vec<Region>,
}

impl LineGrid {
    pub fn three_region(mesh: &Mesh, ell_neg: f64, ell_pos: f64) -> Self {
        let ell_sep = 1.0 - ell_neg - ell_pos;
        let mut widths = Vec::with_capacity(mesh.n_electrolyte());
        let mut regions = Vec::with_capacity(mesh.n_electrolyte());
        for (n, len, region) in [
            (mesh.n_neg, ell_neg, Region::Negative),
            (mesh.n_sep, ell_sep, Region::Separator),
            (mesh.n_pos, ell_pos, Region::Positive),
        ] {
            for _ in 0..n {
                widths.push(len / n as f64);
                regions.push(region);
            }
        }
        let mut faces = Vec::with_capacity(widths.len() - 1);
        let mut x = 0.0;
        for (k, w) in widths.iter().enumerate().take(widths.len() - 1) {
            x += w;
            // snap region interfaces to their exact positions
            let x_face = if regions[k] != regions[k + 1] {
                match regions[k] {
                    Region::Negative => ell_neg,
                    _ => 1.0 - ell_pos,
                }
            } else {
                x
            };
            x = x_face;
            faces.push(x_face);
        }
        Self {
            widths,
            faces,
            regions,
        }
    }
}
