//! Functional microstructure descriptors: the two-point correlation of a
//! binarized micrograph and the radial distribution function of a particle
//! pattern.

mod io;
mod particles;
mod rdf;
mod tpc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_particles, load_pgm, write_curves_csv, write_particles};
pub use particles::extract_particles;
pub use rdf::compute_rdf;
pub use tpc::compute_tpc;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Grayscale micrograph, row-major, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MicrostructureImage {
    pub width: usize,
    pub height: usize,
    pub intensities: Vec<f64>,
    /// `true` marks the phase of interest.
    pub phase_mask: Option<Vec<bool>>,
}

impl MicrostructureImage {
    pub fn new(width: usize, height: usize, intensities: Vec<f64>) -> Result<Self> {
        if intensities.len() != width * height {
            return Err(Error::invalid(format!(
                "image has {} pixels, expected {width}x{height}",
                intensities.len()
            )));
        }
        if intensities.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("intensities must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            intensities,
            phase_mask: None,
        })
    }

    /// Image whose intensities are the mask itself (1 for phase, 0 otherwise).
    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::invalid(format!(
                "mask has {} pixels, expected {width}x{height}",
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            intensities: mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            phase_mask: Some(mask),
        })
    }

    pub(crate) fn mask(&self) -> Result<&[bool]> {
        self.phase_mask
            .as_deref()
            .ok_or_else(|| Error::invalid("image has no phase mask; binarize it first"))
    }

    /// Phase volume fraction of the mask.
    pub fn phase_fraction(&self) -> Result<f64> {
        let m = self.mask()?;
        Ok(m.iter().filter(|&&b| b).count() as f64 / m.len() as f64)
    }

    pub fn transpose(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut intensities = vec![0.0; w * h];
        let mut mask = self.phase_mask.as_ref().map(|_| vec![false; w * h]);
        for y in 0..h {
            for x in 0..w {
                intensities[x * h + y] = self.intensities[y * w + x];
                if let (Some(dst), Some(src)) = (mask.as_mut(), self.phase_mask.as_ref()) {
                    dst[x * h + y] = src[y * w + x];
                }
            }
        }
        Self {
            width: h,
            height: w,
            intensities,
            phase_mask: mask,
        }
    }
}

/// Sets the phase mask to `intensity >= threshold`.
pub fn binarize_image(img: &MicrostructureImage, threshold: f64) -> Result<MicrostructureImage> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} not in (0, 1)")));
    }
    let mut out = img.clone();
    out.phase_mask = Some(img.intensities.iter().map(|&v| v >= threshold).collect());
    Ok(out)
}

/// Point pattern in a `[0, width] x [0, height]` window.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub points: Vec<(f64, f64)>,
    pub window: (f64, f64),
}

impl ParticleSet {
    pub fn new(points: Vec<(f64, f64)>, window: (f64, f64)) -> Result<Self> {
        if !(window.0 > 0.0 && window.1 > 0.0) {
            return Err(Error::invalid("window dimensions must be positive"));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p.0 >= 0.0 && p.0 <= window.0 && p.1 >= 0.0 && p.1 <= window.1))
        {
            return Err(Error::invalid(format!(
                "particle ({}, {}) lies outside the window",
                p.0, p.1
            )));
        }
        Ok(Self { points, window })
    }

    pub fn area(&self) -> f64 {
        self.window.0 * self.window.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Tpc,
    Rdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorCurve {
    pub kind: DescriptorKind,
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Set when the estimator had nothing to average over.
    pub degenerate: bool,
}
