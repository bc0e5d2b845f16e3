//! Functional principal components on a shared grid.
//!
//! Inner products are `<f, g> = (1/R) * integral(f g)` with trapezoid
//! quadrature, so eigenfunctions satisfy `<psi_j, psi_k> = delta_jk` and a
//! truncated expansion `Z ~ mean + sum_k c_k psi_k` gives
//! `integral(alpha Z) = R * sum_k b_k c_k` when `alpha = sum_k b_k psi_k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::trapezoid_weights;

pub const DEFAULT_FVE: f64 = 0.95;

const EIGEN_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    pub r_grid: Vec<f64>,
    pub mean_curve: Vec<f64>,
    /// `K_full` eigenfunctions sampled on `r_grid`, ordered by eigenvalue.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Descending, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// Selected truncation.
    pub k: usize,
    /// Cumulative fraction of variance explained by the first `k+1` components.
    pub fve_trace: Vec<f64>,
    pub support_length: f64,
}

/// FPCA scores `c_isk`, indexed `[unit][covariate][component]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub scores: Vec<Vec<Vec<f64>>>,
}

impl ScoreSet {
    /// Assembles per-covariate score tables (`[s][unit][k]`) into one set.
    pub fn from_covariates(per_covariate: Vec<Vec<Vec<f64>>>, n_units: usize) -> Result<Self> {
        let mut scores = vec![Vec::with_capacity(per_covariate.len()); n_units];
        for table in per_covariate {
            if table.len() != n_units {
                return Err(Error::invalid(format!(
                    "score table has {} units, expected {n_units}",
                    table.len()
                )));
            }
            for (unit, row) in scores.iter_mut().zip(table) {
                unit.push(row);
            }
        }
        Ok(Self { scores })
    }

    pub fn unit(&self, i: usize) -> &[Vec<f64>] {
        &self.scores[i]
    }
}

impl FpcaModel {
    pub fn k_full(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Quadrature weights of the `(1/R)` inner product.
    pub fn weights(&self) -> Vec<f64> {
        normalized_weights(&self.r_grid)
    }

    pub fn with_k(mut self, k: usize) -> Result<Self> {
        if k > self.k_full() {
            return Err(Error::invalid(format!(
                "truncation {k} exceeds the {} available components",
                self.k_full()
            )));
        }
        self.k = k;
        Ok(self)
    }
}

fn normalized_weights(grid: &[f64]) -> Vec<f64> {
    let r = grid[grid.len() - 1] - grid[0];
    trapezoid_weights(grid).into_iter().map(|w| w / r).collect()
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.len() < 2 || r_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "FPCA needs a strictly increasing grid with at least two points",
        ));
    }
    Ok(())
}

fn check_curves(curves: &[Vec<f64>], g: usize) -> Result<()> {
    if let Some(c) = curves.iter().find(|c| c.len() != g) {
        return Err(Error::invalid(format!(
            "curve has {} grid values, expected {g}",
            c.len()
        )));
    }
    Ok(())
}

/// Fits mean curve and eigen-system of the sample covariance (divisor `N`).
/// The truncation is preselected at [`DEFAULT_FVE`].
pub fn fit_fpca(curves: &[Vec<f64>], r_grid: &[f64]) -> Result<FpcaModel> {
    check_grid(r_grid)?;
    let n = curves.len();
    if n < 2 {
        return Err(Error::invalid(format!("FPCA needs at least 2 curves, got {n}")));
    }
    let g = r_grid.len();
    check_curves(curves, g)?;

    let mut mean = vec![0.0; g];
    for c in curves {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let w = normalized_weights(r_grid);
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    // rows: units, columns: grid points, weighted by sqrt(w)
    let x = DMatrix::from_fn(n, g, |i, j| (curves[i][j] - mean[j]) * sw[j]);
    let cov = (x.transpose() * &x) / n as f64;

    let total: f64 = cov.trace();
    let scale = curves.iter().flatten().map(|v| v * v).sum::<f64>() / (n * g) as f64;
    if !(total > 1e-24 * (1.0 + scale)) {
        return Err(Error::DegenerateCovariance(
            "degenerate covariance: all curves identical".into(),
        ));
    }

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let k_full = n.min(g);
    let lead = eig.eigenvalues[order[0]];

    let mut eigenvalues = Vec::with_capacity(k_full);
    let mut eigenfunctions = Vec::with_capacity(k_full);
    for &idx in order.iter().take(k_full) {
        let lam = eig.eigenvalues[idx];
        eigenvalues.push(if lam <= EIGEN_CLAMP * lead { 0.0 } else { lam });
        let mut psi: Vec<f64> = (0..g).map(|j| eig.eigenvectors[(j, idx)] / sw[j]).collect();
        let norm = psi.iter().zip(&w).map(|(p, wj)| p * p * wj).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|p| *p /= norm);
        let peak = psi
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if peak < 0.0 {
            psi.iter_mut().for_each(|p| *p = -*p);
        }
        eigenfunctions.push(psi);
    }

    let sum: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    let fve_trace = eigenvalues
        .iter()
        .map(|l| {
            acc += l;
            acc / sum
        })
        .collect();

    let mut model = FpcaModel {
        r_grid: r_grid.to_vec(),
        mean_curve: mean,
        eigenfunctions,
        eigenvalues,
        k: 0,
        fve_trace,
        support_length: r_grid[g - 1] - r_grid[0],
    };
    model.k = select_k_by_fve(&model, DEFAULT_FVE);
    Ok(model)
}

/// Smallest `K` whose cumulative variance fraction reaches `threshold`.
pub fn select_k_by_fve(model: &FpcaModel, threshold: f64) -> usize {
    model
        .fve_trace
        .iter()
        .position(|&f| f >= threshold - 1e-12)
        .map_or(model.k_full(), |i| i + 1)
}

/// Scores of the first `model.k` components for each curve.
pub fn project_scores(model: &FpcaModel, curves: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_curves(curves, model.r_grid.len())?;
    let w = model.weights();
    Ok(curves
        .iter()
        .map(|c| {
            model.eigenfunctions[..model.k]
                .iter()
                .map(|psi| {
                    c.iter()
                        .zip(&model.mean_curve)
                        .zip(psi)
                        .zip(&w)
                        .map(|(((z, m), p), wj)| (z - m) * p * wj)
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// `mean + sum_{k < K} c_k psi_k` for each score row (rows may be longer than `K`).
pub fn reconstruct(model: &FpcaModel, scores: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    if k > model.k_full() {
        return Err(Error::invalid(format!("truncation {k} exceeds {}", model.k_full())));
    }
    if let Some(row) = scores.iter().find(|r| r.len() < k) {
        return Err(Error::invalid(format!("score row has {} entries, need {k}", row.len())));
    }
    Ok(scores
        .iter()
        .map(|c| {
            let mut curve = model.mean_curve.clone();
            for (ck, psi) in c.iter().zip(&model.eigenfunctions).take(k) {
                for (v, p) in curve.iter_mut().zip(psi) {
                    *v += ck * p;
                }
            }
            curve
        })
        .collect())
}
