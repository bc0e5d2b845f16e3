use std::f64::consts::PI;

use super::{DescriptorCurve, DescriptorKind, ParticleSet};
use crate::error::{Error, Result};

/// Number of whole `dr` bins that fit in `r_max`.
pub(crate) fn bin_count(r_max: f64, dr: f64) -> usize {
    ((r_max / dr) + 1e-9).floor() as usize
}

/// Binned radial distribution function with a guard region.
///
/// Reference particles are those at least `r_max` from every window edge,
/// so every annulus around a reference lies inside the window. Bin `b`
/// covers `[b*dr, (b+1)*dr)`; `r_grid` holds the left edges.
pub fn compute_rdf(ps: &ParticleSet, r_max: f64, dr: f64) -> Result<DescriptorCurve> {
    if !(dr > 0.0) || !(r_max > dr) {
        return Err(Error::invalid(format!(
            "need 0 < dr < r_max, got dr={dr}, r_max={r_max}"
        )));
    }
    let (w, h) = ps.window;
    if 2.0 * r_max > w.min(h) {
        return Err(Error::invalid(format!(
            "r_max {r_max} exceeds half the shorter window side ({w}x{h})"
        )));
    }
    let n_bins = bin_count(r_max, dr);
    let r_grid: Vec<f64> = (0..n_bins).map(|b| b as f64 * dr).collect();

    let m = ps.points.len();
    let interior: Vec<usize> = (0..m)
        .filter(|&i| {
            let (x, y) = ps.points[i];
            x >= r_max && x <= w - r_max && y >= r_max && y <= h - r_max
        })
        .collect();
    if m <= 1 || interior.is_empty() {
        return Ok(DescriptorCurve {
            kind: DescriptorKind::Rdf,
            r_grid,
            values: vec![0.0; n_bins],
            degenerate: true,
        });
    }

    let mut counts = vec![0u64; n_bins];
    for &i in &interior {
        let (xi, yi) = ps.points[i];
        for (j, &(xj, yj)) in ps.points.iter().enumerate() {
            if j == i {
                continue;
            }
            let b = ((xj - xi).hypot(yj - yi) / dr).floor();
            if b < n_bins as f64 {
                counts[b as usize] += 1;
            }
        }
    }

    let density = m as f64 / ps.area();
    let refs = interior.len() as f64;
    let values = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let annulus = PI * dr * dr * (2 * b + 1) as f64;
            c as f64 / (refs * density * annulus)
        })
        .collect();
    Ok(DescriptorCurve {
        kind: DescriptorKind::Rdf,
        r_grid,
        values,
        degenerate: false,
    })
}
