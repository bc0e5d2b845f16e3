//! EM estimation of `zeta`, `sigma_eps^2` and `Sigma_gamma` for
//! `y_i = Omega_i zeta + Lambda_i gamma_i + eps_i`,
//! `gamma_i ~ N(0, Sigma_gamma)`, `eps_i ~ N(0, sigma_eps^2 I)`.

mod model;
mod serde_na;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datamodel::{ModelConfig, TraceStaging};
use crate::design::{DesignMatrices, ZetaSolver};
use crate::error::{Error, Result};
use crate::linalg::{floored_inverse, gaussian_logpdf, spd_inverse, symmetrize};

pub use model::{fit_dataset, FittedModel, ParameterCount};

pub const SIGMA_GAMMA_FLOOR: f64 = 1e-12;
pub const SIGMA_EPS_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    #[serde(with = "serde_na::vector")]
    pub zeta: DVector<f64>,
    pub sigma_eps2: f64,
    #[serde(with = "serde_na::matrix")]
    pub sigma_gamma: DMatrix<f64>,
}

/// Posterior moments of each unit's latent effects: mean `mu_i`, covariance `V_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPosterior {
    #[serde(with = "serde_na::vectors")]
    pub mu: Vec<DVector<f64>>,
    #[serde(with = "serde_na::matrices")]
    pub v: Vec<DMatrix<f64>>,
}

impl LatentPosterior {
    /// All-zero moments (no latent component).
    pub fn zeros(n_units: usize, dim: usize) -> Self {
        Self {
            mu: vec![DVector::zeros(dim); n_units],
            v: vec![DMatrix::zeros(dim, dim); n_units],
        }
    }

    /// `E[gamma_i gamma_i^T] = V_i + mu_i mu_i^T`.
    pub fn second_moment(&self, i: usize) -> DMatrix<f64> {
        &self.v[i] + &self.mu[i] * self.mu[i].transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change below which iteration stops.
    pub tol: f64,
    pub include_latent: bool,
    pub constrain_diagonal: bool,
    pub ridge: bool,
    pub trace_staging: TraceStaging,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            include_latent: true,
            constrain_diagonal: false,
            ridge: false,
            trace_staging: TraceStaging::Posterior,
        }
    }
}

impl EmOptions {
    pub fn from_config(config: &ModelConfig) -> Self {
        Self {
            include_latent: config.include_latent,
            constrain_diagonal: config.constrain_sigma_gamma_diagonal,
            ridge: config.ridge,
            trace_staging: config.trace_staging,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Parameters,
    pub posterior: LatentPosterior,
    /// Marginal log-likelihood at the initial values, then after each iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds the initial value")
    }
}

/// Solver for the population design, honoring the ridge option.
pub fn zeta_solver(design: &DesignMatrices, ridge: bool) -> Result<ZetaSolver> {
    let st = design.stacked()?;
    ZetaSolver::new(&st.omega, &design.layout.column_names(), ridge)
}

fn stack_vectors(parts: impl Iterator<Item = DVector<f64>>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    let mut row = 0;
    for p in parts {
        out.rows_mut(row, p.len()).copy_from(&p);
        row += p.len();
    }
    out
}

/// OLS start: `zeta = argmin |y - Omega zeta|`, `sigma_eps^2 = RSS / n`,
/// `Sigma_gamma = 0.1 sigma_eps^2 I` (zero without a latent component).
pub fn init_params(design: &DesignMatrices, solver: &ZetaSolver, include_latent: bool) -> Parameters {
    let n = design.n_obs();
    let y = stack_vectors(design.units.iter().map(|u| u.y.clone()), n);
    let zeta = solver.solve(&y);
    let rss: f64 = design
        .units
        .iter()
        .map(|u| (&u.y - &u.omega * &zeta).norm_squared())
        .sum();
    let sigma_eps2 = (rss / n as f64).max(SIGMA_EPS_FLOOR);
    let q = design.n_latent();
    let sigma_gamma = if include_latent {
        DMatrix::identity(q, q) * (0.1 * sigma_eps2)
    } else {
        DMatrix::zeros(q, q)
    };
    Parameters {
        zeta,
        sigma_eps2,
        sigma_gamma,
    }
}

/// Posterior of the latent effects given the data and `params`:
/// `V_i = (Sigma_gamma^-1 + Lambda_i^T Lambda_i / sigma^2)^-1`,
/// `mu_i = V_i Lambda_i^T (y_i - Omega_i zeta) / sigma^2`.
/// `Sigma_gamma`'s eigenvalues are floored at `1e-12 * trace` before inversion.
pub fn e_step(params: &Parameters, design: &DesignMatrices) -> Result<LatentPosterior> {
    let prior_precision = floored_inverse(&params.sigma_gamma, SIGMA_GAMMA_FLOOR)?;
    let s2 = params.sigma_eps2;
    let mut mu = Vec::with_capacity(design.n_units());
    let mut v = Vec::with_capacity(design.n_units());
    for u in &design.units {
        let lt = u.lambda.transpose();
        let precision = &prior_precision + (&lt * &u.lambda) / s2;
        let vi = spd_inverse(&precision).ok_or_else(|| {
            Error::SingularCovariance(format!(
                "posterior precision of unit {} not positive definite",
                u.unit_id
            ))
        })?;
        let resid = &u.y - &u.omega * &params.zeta;
        mu.push(&vi * (&lt * resid) / s2);
        v.push(vi);
    }
    Ok(LatentPosterior { mu, v })
}

/// `zeta = argmin |y - Lambda mu - Omega zeta|`.
pub fn update_zeta(solver: &ZetaSolver, design: &DesignMatrices, posterior: &LatentPosterior) -> DVector<f64> {
    let adjusted = design
        .units
        .iter()
        .zip(&posterior.mu)
        .map(|(u, mu)| &u.y - &u.lambda * mu);
    solver.solve(&stack_vectors(adjusted, design.n_obs()))
}

/// `(1/N) sum_i (V_i + mu_i mu_i^T)`, off-diagonals zeroed when `constrain_diagonal`.
pub fn update_sigma_gamma(posterior: &LatentPosterior, constrain_diagonal: bool) -> DMatrix<f64> {
    let n = posterior.mu.len();
    let q = posterior.mu.first().map_or(0, |m| m.len());
    let mut acc = DMatrix::zeros(q, q);
    for i in 0..n {
        acc += posterior.second_moment(i);
    }
    let mut out = symmetrize(&(acc / n as f64));
    if constrain_diagonal {
        out = DMatrix::from_diagonal(&out.diagonal());
    }
    out
}

/// `(1/n) (|y - Omega zeta|^2 - 2 sum_i r_i^T Lambda_i mu_i
///  + sum_i tr(Lambda_i^T Lambda_i (V_i + mu_i mu_i^T)))`, floored at 1e-16.
pub fn update_sigma_eps(posterior: &LatentPosterior, zeta: &DVector<f64>, design: &DesignMatrices) -> f64 {
    (expected_sq_residual(posterior, zeta, design) / design.n_obs() as f64).max(SIGMA_EPS_FLOOR)
}

/// `E[|y - Omega zeta - Lambda gamma|^2]` under the posterior.
fn expected_sq_residual(posterior: &LatentPosterior, zeta: &DVector<f64>, design: &DesignMatrices) -> f64 {
    let mut total = 0.0;
    for (i, u) in design.units.iter().enumerate() {
        let r = &u.y - &u.omega * zeta;
        let lam_mu = &u.lambda * &posterior.mu[i];
        let gram = u.lambda.transpose() * &u.lambda;
        total += r.norm_squared() - 2.0 * r.dot(&lam_mu) + (gram * posterior.second_moment(i)).trace();
    }
    total
}

/// Posterior covariances recomputed with a new prior and an older noise
/// variance, for the literal staging of the noise update.
fn restaged_posterior(
    posterior: &LatentPosterior,
    sigma_gamma: &DMatrix<f64>,
    sigma_eps2: f64,
    design: &DesignMatrices,
) -> Result<LatentPosterior> {
    let prior_precision = floored_inverse(sigma_gamma, SIGMA_GAMMA_FLOOR)?;
    let v = design
        .units
        .iter()
        .map(|u| {
            let precision = &prior_precision + (u.lambda.transpose() * &u.lambda) / sigma_eps2;
            spd_inverse(&precision).ok_or_else(|| Error::SingularCovariance("restaged posterior precision".into()))
        })
        .collect::<Result<_>>()?;
    Ok(LatentPosterior {
        mu: posterior.mu.clone(),
        v,
    })
}

/// `sum_i log N(y_i; Omega_i zeta, Lambda_i Sigma_gamma Lambda_i^T + sigma^2 I)`.
pub fn marginal_loglik(params: &Parameters, design: &DesignMatrices) -> Result<f64> {
    let mut total = 0.0;
    for u in &design.units {
        let mut cov = &u.lambda * &params.sigma_gamma * u.lambda.transpose();
        for d in 0..cov.nrows() {
            cov[(d, d)] += params.sigma_eps2;
        }
        let mean = &u.omega * &params.zeta;
        total += gaussian_logpdf(&u.y, &mean, &symmetrize(&cov)).ok_or_else(|| {
            Error::Numerical(format!(
                "marginal covariance of unit {} is not positive definite",
                u.unit_id
            ))
        })?;
    }
    Ok(total)
}

/// Expected complete-data log-likelihood (without `2 pi` constants) at
/// `params`, with expectations taken under `posterior` (computed from the
/// previous parameters). The latent term is omitted when `include_latent`
/// is false.
pub fn q_value(params: &Parameters, posterior: &LatentPosterior, design: &DesignMatrices, include_latent: bool) -> f64 {
    let n = design.n_obs() as f64;
    let s2 = params.sigma_eps2;
    let l1 = -0.5 * n * s2.ln() - expected_sq_residual(posterior, &params.zeta, design) / (2.0 * s2);
    if !include_latent {
        return l1;
    }
    let sg = symmetrize(&params.sigma_gamma);
    let nu = design.n_units() as f64;
    let l2 = match sg.clone().cholesky() {
        Some(chol) => {
            let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let inv = chol.inverse();
            let trace: f64 = (0..design.n_units())
                .map(|i| (&inv * posterior.second_moment(i)).trace())
                .sum();
            -0.5 * nu * logdet - 0.5 * trace
        }
        None => f64::NEG_INFINITY,
    };
    l1 + l2
}

/// Runs EM from the OLS start.
pub fn fit_em(design: &DesignMatrices, opts: &EmOptions) -> Result<FitResult> {
    let solver = zeta_solver(design, opts.ridge)?;
    let init = init_params(design, &solver, opts.include_latent);
    fit_em_with(design, &solver, opts, init)
}

/// Runs EM from a given start. Each iteration computes the posterior, then
/// updates `zeta`, `Sigma_gamma` and `sigma_eps^2` in that order.
pub fn fit_em_with(
    design: &DesignMatrices,
    solver: &ZetaSolver,
    opts: &EmOptions,
    init: Parameters,
) -> Result<FitResult> {
    let q = design.n_latent();
    let mut params = init;
    let mut ll = marginal_loglik(&params, design)?;
    if !ll.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut trace = vec![ll];
    let mut posterior = LatentPosterior::zeros(design.n_units(), q);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        posterior = if opts.include_latent {
            e_step(&params, design)?
        } else {
            LatentPosterior::zeros(design.n_units(), q)
        };
        let zeta = update_zeta(solver, design, &posterior);
        let sigma_gamma = if opts.include_latent {
            update_sigma_gamma(&posterior, opts.constrain_diagonal)
        } else {
            DMatrix::zeros(q, q)
        };
        let sigma_eps2 = match opts.trace_staging {
            TraceStaging::UpdatedPrior if opts.include_latent => {
                let staged = restaged_posterior(&posterior, &sigma_gamma, params.sigma_eps2, design)?;
                update_sigma_eps(&staged, &zeta, design)
            }
            _ => update_sigma_eps(&posterior, &zeta, design),
        };
        params = Parameters {
            zeta,
            sigma_eps2,
            sigma_gamma,
        };
        let next = marginal_loglik(&params, design).map_err(|_| Error::NonFinite { iteration: iterations })?;
        if !next.is_finite() {
            return Err(Error::NonFinite { iteration: iterations });
        }
        trace.push(next);
        let change = (next - ll).abs() / next.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if opts.include_latent {
        posterior = e_step(&params, design)?;
    }
    debug!("EM stopped after {iterations} iterations (converged: {converged}), loglik {ll}");
    Ok(FitResult {
        params,
        posterior,
        loglik_trace: trace,
        iterations,
        converged,
    })
}
