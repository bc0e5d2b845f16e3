use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{build_latent_design, build_observed_design, DesignMatrices, UnitDesign, ZetaLayout};
use crate::datamodel::{DegradationDataset, MicrostructureSource, ModelConfig, UnitRecord};
use crate::error::{Error, Result};
use crate::fpca::{fit_fpca, project_scores, select_k_by_fve, FpcaModel};

/// Everything needed to turn a unit's raw covariates into design inputs:
/// which scalar columns are loads, and how microstructure becomes scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    pub load_columns: Vec<usize>,
    pub load_names: Vec<String>,
    pub source: Option<MicrostructureSource>,
    /// One model per functional covariate (functional source only).
    pub fpca: Vec<FpcaModel>,
    /// Scalar microstructure column (scalar source only).
    pub micro_column: Option<usize>,
    pub micro_names: Vec<String>,
    /// Common truncation across microstructure covariates.
    pub k: usize,
    /// Factor multiplying the scores in the design (`R`; 1 for a scalar summary).
    pub support: f64,
}

impl CovariateModel {
    /// Fits the reduction on `ds` (FPCA per functional covariate when the
    /// functional source is used). With FVE selection, `K` is the largest
    /// per-covariate choice so all covariates share one truncation.
    pub fn fit(ds: &DegradationDataset, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let micro_idx = match &config.microstructure_column {
            Some(name) => ds.scalar_index(name),
            None => None,
        };
        let load_columns: Vec<usize> = (0..ds.n_scalars()).filter(|&j| Some(j) != micro_idx).collect();
        let load_names = load_columns.iter().map(|&j| ds.scalar_names[j].clone()).collect();
        let mut out = Self {
            load_columns,
            load_names,
            source: None,
            fpca: Vec::new(),
            micro_column: None,
            micro_names: Vec::new(),
            k: 0,
            support: 1.0,
        };
        if !config.include_functional {
            return Ok(out);
        }
        out.source = Some(config.microstructure);
        match config.microstructure {
            MicrostructureSource::Scalar => {
                let name = config.microstructure_column.clone().unwrap_or_default();
                out.micro_column = Some(
                    micro_idx
                        .ok_or_else(|| Error::invalid(format!("scalar microstructure column {name:?} not found")))?,
                );
                out.micro_names = vec![name];
                out.k = 1;
            }
            MicrostructureSource::Functional => {
                if ds.n_functional() == 0 {
                    return Err(Error::invalid(
                        "functional covariates requested but the dataset has none",
                    ));
                }
                let mut models = Vec::with_capacity(ds.n_functional());
                for s in 0..ds.n_functional() {
                    let curves: Vec<Vec<f64>> = ds.units.iter().map(|u| u.curves[s].clone()).collect();
                    models.push(fit_fpca(&curves, &ds.r_grid)?);
                }
                let k = match config.k {
                    Some(k) => k,
                    None => models.iter().map(|m| select_k_by_fve(m, config.fve)).max().unwrap_or(1),
                };
                out.fpca = models.into_iter().map(|m| m.with_k(k)).collect::<Result<_>>()?;
                out.micro_names = ds.functional_ids.clone();
                out.k = k;
                out.support = ds.support_length();
            }
        }
        Ok(out)
    }

    pub fn layout(&self, config: &ModelConfig) -> ZetaLayout {
        ZetaLayout::new(
            config.levels(),
            self.load_names.clone(),
            self.micro_names.clone(),
            self.k,
            config.include_scalar,
            self.source.is_some(),
            config.include_interaction,
        )
    }

    /// Load covariates `x_i` and microstructure scores `c_i[s][k]` of a unit.
    pub fn unit_inputs(&self, unit: &UnitRecord) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let x = self.load_columns.iter().map(|&j| unit.scalars[j]).collect();
        let scores = match self.source {
            None => Vec::new(),
            Some(MicrostructureSource::Scalar) => vec![vec![unit.scalars[self.micro_column.unwrap()]]],
            Some(MicrostructureSource::Functional) => {
                if unit.curves.len() != self.fpca.len() {
                    return Err(Error::invalid(format!(
                        "unit {} lacks functional covariates",
                        unit.unit_id
                    )));
                }
                self.fpca
                    .iter()
                    .zip(&unit.curves)
                    .map(|(m, c)| project_scores(m, std::slice::from_ref(c)).map(|mut v| v.remove(0)))
                    .collect::<Result<_>>()?
            }
        };
        Ok((x, scores))
    }
}

/// Builds every unit's design for `ds` under a fitted covariate reduction.
pub fn prepare_design(ds: &DegradationDataset, config: &ModelConfig, cov: &CovariateModel) -> Result<DesignMatrices> {
    let layout = cov.layout(config);
    let units = ds
        .units
        .iter()
        .map(|u| {
            let (x, scores) = cov.unit_inputs(u)?;
            Ok(UnitDesign {
                unit_id: u.unit_id.clone(),
                times: u.times.clone(),
                lambda: build_latent_design(&u.times, &config.basis, &layout.levels),
                omega: build_observed_design(&u.times, &config.basis, &x, &scores, cov.support, &layout)?,
                y: DVector::from_column_slice(&u.responses),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DesignMatrices { layout, units })
}
