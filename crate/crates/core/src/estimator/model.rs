use log::info;
use serde::{Deserialize, Serialize};

use super::{fit_em, EmOptions, FitResult};
use crate::datamodel::{center_baseline, DegradationDataset, ModelConfig};
use crate::design::{prepare_design, CovariateModel, DesignMatrices, ZetaLayout};
use crate::error::Result;

/// Number of estimated parameters used by the information criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub zeta: usize,
    pub sigma_eps2: usize,
    pub sigma_gamma: usize,
    pub total: usize,
    /// Sample size used for the BIC penalty.
    pub n_obs: usize,
    pub convention: String,
}

impl ParameterCount {
    pub fn new(layout: &ZetaLayout, config: &ModelConfig, n_obs: usize) -> Self {
        let q = layout.levels.len();
        let sigma_gamma = match (config.include_latent, config.constrain_sigma_gamma_diagonal) {
            (false, _) => 0,
            (true, true) => q,
            (true, false) => q * (q + 1) / 2,
        };
        let zeta = layout.width();
        Self {
            zeta,
            sigma_eps2: 1,
            sigma_gamma,
            total: zeta + 1 + sigma_gamma,
            n_obs,
            convention: "p = coefficients + 1 (noise variance) + free entries of the latent covariance; \
                         BIC uses N = number of fitted observations"
                .into(),
        }
    }
}

/// A fitted model together with everything needed to rebuild designs for
/// new data: the configuration, the covariate reduction and the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub config: ModelConfig,
    pub covariates: CovariateModel,
    pub layout: ZetaLayout,
    pub column_names: Vec<String>,
    /// Training units, in the order of the latent posterior.
    pub unit_ids: Vec<String>,
    pub fit: FitResult,
    pub parameter_count: ParameterCount,
}

impl FittedModel {
    /// Designs for `ds` (centered first when the model is) under this model's
    /// covariate reduction.
    pub fn design_for(&self, ds: &DegradationDataset) -> Result<DesignMatrices> {
        let ds = self.prepare(ds);
        prepare_design(&ds, &self.config, &self.covariates)
    }

    pub fn prepare(&self, ds: &DegradationDataset) -> DegradationDataset {
        if self.config.center_baseline {
            center_baseline(ds)
        } else {
            ds.clone()
        }
    }

    pub fn unit_index(&self, unit_id: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == unit_id)
    }

    pub fn loglik(&self) -> f64 {
        self.fit.loglik()
    }
}

/// Centers (when configured), reduces the covariates, builds the designs and
/// runs EM.
pub fn fit_dataset(ds: &DegradationDataset, config: &ModelConfig, max_iter: usize, tol: f64) -> Result<FittedModel> {
    config.validate()?;
    let ds = if config.center_baseline {
        center_baseline(ds)
    } else {
        ds.clone()
    };
    let covariates = CovariateModel::fit(&ds, config)?;
    let design = prepare_design(&ds, config, &covariates)?;
    let opts = EmOptions {
        max_iter,
        tol,
        ..EmOptions::from_config(config)
    };
    info!(
        "fitting {} units, {} observations, {} coefficients",
        design.n_units(),
        design.n_obs(),
        design.layout.width()
    );
    let fit = fit_em(&design, &opts)?;
    Ok(FittedModel {
        config: config.clone(),
        covariates,
        column_names: design.layout.column_names(),
        parameter_count: ParameterCount::new(&design.layout, config, design.n_obs()),
        layout: design.layout,
        unit_ids: ds.units.iter().map(|u| u.unit_id.clone()).collect(),
        fit,
    })
}
