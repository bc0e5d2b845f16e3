//! Synthetic data drawn from the full model with known parameters.
//!
//! All randomness derives from one seed; each purpose (curves, scalars,
//! latent effects, noise) uses its own ChaCha8 stream so changing one part of
//! the synthetic spec leaves the other draws intact.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::{write_file, BasisFamily, DegradationDataset, ModelConfig, UnitRecord};
use crate::design::{basis_rows, observed_from_basis, ZetaLayout};
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, trapezoid_weights};

pub const MICRO_COLUMN: &str = "micro";

const STREAM_FUNCTIONAL: u64 = 1;
const STREAM_SCALARS: u64 = 2;
const STREAM_LATENT: u64 = 3;
const STREAM_NOISE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_units: usize,
    /// Observations per unit.
    pub n_obs: usize,
    pub time_start: f64,
    pub time_step: f64,
    /// Polynomial basis order `L`.
    pub order: usize,
    /// Baseline centered (`eta_0 = 0`, first observation at `t = 0` is exactly 0).
    pub center: bool,
    /// Uniform sampling range of each load covariate.
    pub scalar_ranges: Vec<(f64, f64)>,
    pub n_functional: usize,
    pub k_true: usize,
    pub grid_points: usize,
    /// Support length `R` of the functional covariates.
    pub support: f64,
    /// Variances of the true component scores, length `k_true`.
    pub score_variances: Vec<f64>,
    /// Mean curve `offset + amplitude * exp(-r / length)`.
    pub mean_offset: f64,
    pub mean_amplitude: f64,
    pub mean_length: f64,
    /// Replace the score draws by an exactly orthogonal set with sample
    /// variances equal to `score_variances`.
    pub orthogonalize_scores: bool,
    /// Standard deviation of iid noise added to each curve grid value.
    pub curve_noise_sd: f64,
    /// True coefficients in layout order (full model).
    pub zeta: Vec<f64>,
    pub sigma_eps: f64,
    pub sigma_gamma: Vec<Vec<f64>>,
    /// Append the curve mean `(1/R) integral(Z)` as a scalar column named `micro`.
    pub micro_column: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_units: 60,
            n_obs: 30,
            time_start: 0.0,
            time_step: 0.1,
            order: 1,
            center: true,
            scalar_ranges: vec![(1.0, 3.0)],
            n_functional: 1,
            k_true: 2,
            grid_points: 51,
            support: 10.0,
            score_variances: vec![0.04, 0.01],
            mean_offset: 0.3,
            mean_amplitude: 0.5,
            mean_length: 2.0,
            orthogonalize_scores: false,
            curve_noise_sd: 0.0,
            zeta: vec![1.0, 0.5, 0.4, -0.3, 0.2, 0.1],
            sigma_eps: 0.1,
            sigma_gamma: vec![vec![0.0025]],
            micro_column: true,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn levels(&self) -> Vec<usize> {
        (usize::from(self.center)..=self.order).collect()
    }

    pub fn scalar_names(&self) -> Vec<String> {
        (1..=self.scalar_ranges.len()).map(|p| format!("x{p}")).collect()
    }

    pub fn functional_names(&self) -> Vec<String> {
        (1..=self.n_functional).map(|s| format!("s{s}")).collect()
    }

    /// Layout of the true coefficient vector (all blocks present).
    pub fn layout(&self) -> ZetaLayout {
        ZetaLayout::new(
            self.levels(),
            self.scalar_names(),
            self.functional_names(),
            self.k_true,
            true,
            self.n_functional > 0,
            true,
        )
    }

    pub fn r_grid(&self) -> Vec<f64> {
        let g = self.grid_points;
        (0..g).map(|j| self.support * j as f64 / (g - 1) as f64).collect()
    }

    /// Model configuration matching the generating model.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            basis: BasisFamily::polynomial(self.order),
            center_baseline: self.center,
            include_functional: self.n_functional > 0,
            include_interaction: self.n_functional > 0,
            microstructure_column: self.micro_column.then(|| MICRO_COLUMN.to_string()),
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.n_units == 0 || self.n_obs == 0 {
            return bad("spec needs at least one unit and one observation".into());
        }
        if !(self.time_step > 0.0) {
            return bad("time_step must be positive".into());
        }
        if self.center && (self.order == 0 || self.time_start != 0.0) {
            return bad("a centered spec needs order >= 1 and time_start = 0".into());
        }
        if self.n_functional > 0 {
            if self.grid_points < 3 || !(self.support > 0.0) {
                return bad("functional covariates need at least 3 grid points and positive support".into());
            }
            if self.k_true == 0 || self.k_true >= self.grid_points - 1 {
                return bad(format!("k_true must be in 1..{}", self.grid_points - 1));
            }
            if self.score_variances.len() != self.k_true || self.score_variances.iter().any(|v| !(*v >= 0.0)) {
                return bad("score_variances must hold k_true nonnegative values".into());
            }
            if self.orthogonalize_scores && self.n_units <= self.k_true {
                return bad("orthogonalized scores need more units than components".into());
            }
        }
        if self.scalar_ranges.iter().any(|(a, b)| !(b >= a)) {
            return bad("scalar ranges must satisfy low <= high".into());
        }
        let width = self.layout().width();
        if self.zeta.len() != width {
            return bad(format!(
                "zeta has {} entries, the layout needs {width}",
                self.zeta.len()
            ));
        }
        if !(self.sigma_eps >= 0.0) {
            return bad("sigma_eps must be nonnegative".into());
        }
        let q = self.levels().len();
        if self.sigma_gamma.len() != q || self.sigma_gamma.iter().any(|r| r.len() != q) {
            return bad(format!("sigma_gamma must be {q}x{q}"));
        }
        let sg = self.sigma_gamma_matrix();
        if (&sg - sg.transpose()).amax() > 1e-12 {
            return bad("sigma_gamma must be symmetric".into());
        }
        if sg.symmetric_eigenvalues().iter().any(|&v| v < -1e-12) {
            return bad("sigma_gamma must be positive semidefinite".into());
        }
        Ok(())
    }

    pub fn sigma_gamma_matrix(&self) -> DMatrix<f64> {
        let q = self.sigma_gamma.len();
        DMatrix::from_fn(q, q, |i, j| self.sigma_gamma[i][j])
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Curves on the shared grid together with the quantities that generated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDraw {
    pub r_grid: Vec<f64>,
    pub mean_curve: Vec<f64>,
    /// True eigenfunctions `sqrt(2) sin(k pi r / R)`.
    pub modes: Vec<Vec<f64>>,
    /// `[unit][s][grid]`
    pub curves: Vec<Vec<Vec<f64>>>,
    /// `[unit][s][k]`
    pub scores: Vec<Vec<Vec<f64>>>,
}

/// Ground truth accompanying a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub column_names: Vec<String>,
    pub zeta: Vec<f64>,
    pub sigma_eps2: f64,
    pub sigma_gamma: Vec<Vec<f64>>,
    /// Per-unit latent effects `gamma_i`, in unit order.
    pub gamma: Vec<Vec<f64>>,
    /// Per-unit coefficient-level values `eta_li` including `gamma_i`.
    pub eta: Vec<Vec<f64>>,
    pub scores: Vec<Vec<Vec<f64>>>,
    pub modes: Vec<Vec<f64>>,
    pub mean_curve: Vec<f64>,
    pub support: f64,
}

fn sine_modes(k: usize, grid: &[f64], support: f64) -> Vec<Vec<f64>> {
    (1..=k)
        .map(|m| {
            grid.iter()
                .map(|r| 2f64.sqrt() * (m as f64 * std::f64::consts::PI * r / support).sin())
                .collect()
        })
        .collect()
}

fn check_orthonormal(modes: &[Vec<f64>], grid: &[f64], support: f64) -> Result<()> {
    let w = trapezoid_weights(grid);
    for (a, ma) in modes.iter().enumerate() {
        for (b, mb) in modes.iter().enumerate() {
            let ip: f64 = ma.iter().zip(mb).zip(&w).map(|((x, y), w)| x * y * w).sum::<f64>() / support;
            let target = if a == b { 1.0 } else { 0.0 };
            if (ip - target).abs() > 1e-8 {
                return Err(Error::invalid(format!("modes {a} and {b} are not orthonormal ({ip})")));
            }
        }
    }
    Ok(())
}

/// Centers each score column; optionally makes the columns exactly
/// orthogonal with sample variance (divisor N) equal to `variances`.
fn condition_scores(cols: &mut [Vec<f64>], variances: &[f64], orthogonalize: bool) {
    let n = cols.first().map_or(0, Vec::len) as f64;
    for col in cols.iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    if !orthogonalize {
        return;
    }
    for k in 0..cols.len() {
        for j in 0..k {
            let (done, rest) = cols.split_at_mut(k);
            let q = &done[j];
            let proj = q.iter().zip(&rest[0]).map(|(a, b)| a * b).sum::<f64>();
            rest[0].iter_mut().zip(q).for_each(|(v, qv)| *v -= proj * qv);
        }
        let norm = cols[k].iter().map(|v| v * v).sum::<f64>().sqrt();
        cols[k].iter_mut().for_each(|v| *v /= norm);
    }
    for (col, var) in cols.iter_mut().zip(variances) {
        let scale = (var * n).sqrt();
        col.iter_mut().for_each(|v| *v *= scale);
    }
}

pub fn generate_functional_covariates(spec: &SyntheticSpec) -> Result<FunctionalDraw> {
    spec.validate()?;
    let grid = spec.r_grid();
    let n = spec.n_units;
    if spec.n_functional == 0 {
        return Ok(FunctionalDraw {
            r_grid: Vec::new(),
            mean_curve: Vec::new(),
            modes: Vec::new(),
            curves: vec![Vec::new(); n],
            scores: vec![Vec::new(); n],
        });
    }
    let modes = sine_modes(spec.k_true, &grid, spec.support);
    check_orthonormal(&modes, &grid, spec.support)?;
    let mean: Vec<f64> = grid
        .iter()
        .map(|r| spec.mean_offset + spec.mean_amplitude * (-r / spec.mean_length).exp())
        .collect();
    let mut rng = spec.rng(STREAM_FUNCTIONAL);
    let mut curves = vec![Vec::with_capacity(spec.n_functional); n];
    let mut scores = vec![Vec::with_capacity(spec.n_functional); n];
    for _ in 0..spec.n_functional {
        let mut cols: Vec<Vec<f64>> = spec
            .score_variances
            .iter()
            .map(|var| {
                (0..n)
                    .map(|_| var.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        condition_scores(&mut cols, &spec.score_variances, spec.orthogonalize_scores);
        for i in 0..n {
            let c: Vec<f64> = cols.iter().map(|col| col[i]).collect();
            let mut z = mean.clone();
            for (ck, psi) in c.iter().zip(&modes) {
                z.iter_mut().zip(psi).for_each(|(v, p)| *v += ck * p);
            }
            if spec.curve_noise_sd > 0.0 {
                for v in &mut z {
                    *v += spec.curve_noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            curves[i].push(z);
            scores[i].push(c);
        }
    }
    Ok(FunctionalDraw {
        r_grid: grid,
        mean_curve: mean,
        modes,
        curves,
        scores,
    })
}

/// Draws a dataset from the full model: `y_ij = sum_l eta_li phi_l(t_ij) + eps_ij`
/// with the coefficient-level values built from the true scores.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<(DegradationDataset, TruthRecord)> {
    let functional = generate_functional_covariates(spec)?;
    let layout = spec.layout();
    let basis = BasisFamily::polynomial(spec.order);
    let levels = spec.levels();
    let q = levels.len();
    let zeta = DVector::from_column_slice(&spec.zeta);
    let sg = spec.sigma_gamma_matrix();
    let sg_root = psd_sqrt(&sg);
    let times: Vec<f64> = (0..spec.n_obs)
        .map(|j| spec.time_start + j as f64 * spec.time_step)
        .collect();
    let weights = trapezoid_weights(&functional.r_grid);

    let mut scalar_rng = spec.rng(STREAM_SCALARS);
    let mut latent_rng = spec.rng(STREAM_LATENT);
    let mut noise_rng = spec.rng(STREAM_NOISE);
    let identity = DMatrix::identity(q, q);

    let mut units = Vec::with_capacity(spec.n_units);
    let mut gammas = Vec::with_capacity(spec.n_units);
    let mut etas = Vec::with_capacity(spec.n_units);
    for i in 0..spec.n_units {
        let x: Vec<f64> = spec
            .scalar_ranges
            .iter()
            .map(|&(a, b)| if b > a { scalar_rng.random_range(a..b) } else { a })
            .collect();
        let gamma = &sg_root * DVector::from_fn(q, |_, _| latent_rng.sample::<f64, _>(StandardNormal));
        let scores = &functional.scores[i];

        let eta_rows = observed_from_basis(&identity, &x, scores, spec.support, &layout)?;
        let eta = &eta_rows * &zeta + &gamma;
        let phi = basis_rows(&times, &basis, &levels);
        let mean_path = &phi * &eta;
        let responses: Vec<f64> = mean_path
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let e = spec.sigma_eps * noise_rng.sample::<f64, _>(StandardNormal);
                if spec.center && j == 0 {
                    *m
                } else {
                    m + e
                }
            })
            .collect();

        let mut scalars = x;
        if spec.micro_column && spec.n_functional > 0 {
            let z = &functional.curves[i][0];
            scalars.push(z.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / spec.support);
        }
        units.push(UnitRecord {
            unit_id: format!("{}", i + 1),
            times: times.clone(),
            responses,
            scalars,
            curves: functional.curves[i].clone(),
        });
        gammas.push(gamma.iter().copied().collect());
        etas.push(eta.iter().copied().collect());
    }

    let mut scalar_names = spec.scalar_names();
    if spec.micro_column && spec.n_functional > 0 {
        scalar_names.push(MICRO_COLUMN.into());
    }
    let ds = DegradationDataset::new(units, scalar_names, spec.functional_names(), functional.r_grid.clone())?;
    let truth = TruthRecord {
        column_names: layout.column_names(),
        zeta: spec.zeta.clone(),
        sigma_eps2: spec.sigma_eps * spec.sigma_eps,
        sigma_gamma: spec.sigma_gamma.clone(),
        gamma: gammas,
        eta: etas,
        scores: functional.scores,
        modes: functional.modes,
        mean_curve: functional.mean_curve,
        support: spec.support,
    };
    Ok((ds, truth))
}

/// Writes the three dataset CSVs, `truth.json`, and `config.json` holding the
/// matching model configuration.
pub fn write_synthetic(dir: &Path, spec: &SyntheticSpec, ds: &DegradationDataset, truth: &TruthRecord) -> Result<()> {
    crate::datamodel::save_dataset_dir(ds, dir)?;
    write_file(&dir.join("truth.json"), &(serde_json::to_string_pretty(truth)? + "\n"))?;
    write_file(
        &dir.join("config.json"),
        &(serde_json::to_string_pretty(&spec.model_config())? + "\n"),
    )
}
