//! Prediction, goodness of fit, information criteria, splitting, unit-level
//! cross-validation, the seven-variant model family and per-unit effect
//! decompositions.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    center_baseline, write_file, BasisFamily, DegradationDataset, MicrostructureSource, ModelConfig, UnitRecord,
};
use crate::design::{basis_rows, build_observed_design, observed_from_basis, SegmentKind, ZetaLayout};
use crate::error::{Error, Result};
use crate::estimator::{fit_dataset, FittedModel};


#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Scalar covariates only.
    Model1,
    /// Functional covariates only.
    Model2,
    /// Scalar and functional covariates.
    Model3,
    /// Model 3 with load x microstructure interactions.
    Model4,
    /// Model 4 with a second-order time basis.
    Model5,
    /// Model 4 with a scalar microstructure summary in place of the curves.
    Model6,
    /// Model 4 with unit-level latent effects: the full model.
    Model7,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::Model1,
        ModelVariant::Model2,
        ModelVariant::Model3,
        ModelVariant::Model4,
        ModelVariant::Model5,
        ModelVariant::Model6,
        ModelVariant::Model7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Model1 => "Model1",
            ModelVariant::Model2 => "Model2",
            ModelVariant::Model3 => "Model3",
            ModelVariant::Model4 => "Model4",
            ModelVariant::Model5 => "Model5",
            ModelVariant::Model6 => "Model6",
            ModelVariant::Model7 => "Model7",
        }
    }

    /// Switch settings of the variant on top of `base`, which supplies the
    /// basis order, FPCA truncation, centering and the microstructure column.
    pub fn config(self, base: &ModelConfig) -> Result<ModelConfig> {
        let mut c = ModelConfig {
            include_scalar: true,
            include_functional: true,
            include_interaction: false,
            include_latent: false,
            microstructure: MicrostructureSource::Functional,
            ..base.clone()
        };
        match self {
            ModelVariant::Model1 => c.include_functional = false,
            ModelVariant::Model2 => c.include_scalar = false,
            ModelVariant::Model3 => {}
            ModelVariant::Model4 => c.include_interaction = true,
            ModelVariant::Model5 => {
                c.include_interaction = true;
                c.basis = BasisFamily::polynomial(2);
            }
            ModelVariant::Model6 => {
                if c.microstructure_column.is_none() {
                    return Err(Error::invalid("Model6 needs a scalar microstructure column"));
                }
                c.include_interaction = true;
                c.microstructure = MicrostructureSource::Scalar;
                c.k = None;
            }
            ModelVariant::Model7 => {
                c.include_interaction = true;
                c.include_latent = true;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?} (expected Model1..Model7)")))
    }
}

/// One row of the comparison table. Numeric fields are `None` when the
/// variant could not be fitted; `error` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub model: String,
    pub r2: Option<f64>,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub mse_train: Option<f64>,
    pub mse_test: Option<f64>,
    pub cv_error: Option<f64>,
    pub n_params: Option<usize>,
    pub n_obs: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

impl Metrics {
    fn failed(model: &str, err: &Error) -> Self {
        Self {
            model: model.into(),
            r2: None,
            loglik: None,
            aic: None,
            bic: None,
            mse_train: None,
            mse_test: None,
            cv_error: None,
            n_params: None,
            n_obs: None,
            converged: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<Metrics>,
    /// How `p` and `N` enter the information criteria.
    pub convention: String,
}

impl ComparisonTable {
    pub fn get(&self, variant: ModelVariant) -> Option<&Metrics> {
        self.rows.iter().find(|m| m.model == variant.name())
    }
}

/// Response path `Omega(t) zeta + Lambda(t) mu` for explicit inputs.
#[allow(clippy::too_many_arguments)]
pub fn predict_from_inputs(
    layout: &ZetaLayout,
    basis: &BasisFamily,
    x: &[f64],
    scores: &[Vec<f64>],
    support: f64,
    zeta: &DVector<f64>,
    latent: Option<&DVector<f64>>,
    times: &[f64],
) -> Result<Vec<f64>> {
    let omega = build_observed_design(times, basis, x, scores, support, layout)?;
    let mut y = omega * zeta;
    if let Some(mu) = latent {
        y += basis_rows(times, basis, &layout.levels) * mu;
    }
    Ok(y.iter().copied().collect())
}

/// Predicted responses of `unit` at `times`. With `use_latent`, the unit's
/// posterior mean latent effect is added; the unit must then be a training
/// unit of a model with latent effects.
pub fn predict_unit(fitted: &FittedModel, unit: &UnitRecord, times: &[f64], use_latent: bool) -> Result<Vec<f64>> {
    let (x, scores) = fitted.covariates.unit_inputs(unit)?;
    let mu = if use_latent && fitted.config.include_latent {
        let i = fitted
            .unit_index(&unit.unit_id)
            .ok_or_else(|| Error::invalid(format!("unit {} has no latent posterior", unit.unit_id)))?;
        Some(&fitted.fit.posterior.mu[i])
    } else {
        None
    };
    predict_from_inputs(
        &fitted.layout,
        &fitted.config.basis,
        &x,
        &scores,
        fitted.covariates.support,
        &fitted.fit.params.zeta,
        mu,
        times,
    )
}

/// `(r2, mse)` with `r2 = 1 - SSE/SST` about the pooled mean of `y`.
pub fn residual_metrics(y: &[f64], yhat: &[f64]) -> Result<(f64, f64)> {
    if y.len() != yhat.len() {
        return Err(Error::invalid(format!(
            "{} responses but {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::invalid("goodness of fit needs at least two points"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if sst == 0.0 {
        return Err(Error::invalid("responses have zero total variation"));
    }
    Ok((1.0 - sse / sst, sse / n))
}

/// `(aic, bic)` with `C = -2 loglik + p k`, `k = 2` and `k = ln N`.
pub fn information_criteria(loglik: f64, p: usize, n: f64) -> (f64, f64) {
    let p = p as f64;
    (-2.0 * loglik + 2.0 * p, -2.0 * loglik + p * n.ln())
}

/// Number of leading observations kept for training out of `m`.
pub fn train_count(m: usize, fraction: f64) -> usize {
    (fraction * m as f64 + 1e-9).floor() as usize
}

/// First `floor(fraction * m_i)` observations of each unit to train, the rest
/// to test.
pub fn temporal_split(ds: &DegradationDataset, fraction: f64) -> Result<(DegradationDataset, DegradationDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    let mut train = Vec::with_capacity(ds.n_units());
    let mut test = Vec::with_capacity(ds.n_units());
    for u in &ds.units {
        let m = u.n_obs();
        let k = train_count(m, fraction).min(m);
        if k == 0 {
            return Err(Error::invalid(format!(
                "unit {} has an empty training split ({m} observations)",
                u.unit_id
            )));
        }
        if k == m {
            return Err(Error::invalid(format!("unit {} has an empty test split", u.unit_id)));
        }
        train.push(u.slice_obs(0..k));
        test.push(u.slice_obs(k..m));
    }
    Ok((ds.with_units(train)?, ds.with_units(test)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Fold index of every unit, in dataset order.
    pub assignment: Vec<usize>,
    /// Summed squared prediction error of each fold.
    pub fold_errors: Vec<f64>,
    /// Total squared prediction error over all held-out units.
    pub cv_error: f64,
}

/// Unit-level k-fold cross-validation. Units are shuffled by `seed` and dealt
/// round-robin into folds; held-out units are predicted without latent
/// effects.
pub fn kfold_cv(
    ds: &DegradationDataset,
    config: &ModelConfig,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<CvResult> {
    let n = ds.n_units();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("fold count {k} must be in 2..={n}")));
    }
    let ds = if config.center_baseline {
        center_baseline(ds)
    } else {
        ds.clone()
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    let mut fold_errors = Vec::with_capacity(k);
    for fold in 0..k {
        let (held, kept): (Vec<_>, Vec<_>) = ds.units.iter().zip(&assignment).partition(|(_, &a)| a == fold);
        if held.is_empty() || kept.is_empty() {
            return Err(Error::invalid(format!("fold {fold} is empty")));
        }
        let train = ds.with_units(kept.into_iter().map(|(u, _)| u.clone()).collect())?;
        let fitted = fit_dataset(&train, config, max_iter, tol)?;
        let mut sse = 0.0;
        for (u, _) in held {
            let yhat = predict_unit(&fitted, u, &u.times, false)?;
            sse += u
                .responses
                .iter()
                .zip(&yhat)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        fold_errors.push(sse);
    }
    Ok(CvResult {
        assignment,
        cv_error: fold_errors.iter().sum(),
        fold_errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub split_fraction: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Unit-level CV with `(folds, seed)` when set.
    pub cv: Option<(usize, u64)>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            split_fraction: 0.8,
            max_iter: 500,
            tol: 1e-8,
            cv: None,
        }
    }
}

fn pooled_predictions(fitted: &FittedModel, ds: &DegradationDataset, use_latent: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut y = Vec::with_capacity(ds.n_obs());
    let mut yhat = Vec::with_capacity(ds.n_obs());
    for u in &ds.units {
        y.extend_from_slice(&u.responses);
        yhat.extend(predict_unit(fitted, u, &u.times, use_latent)?);
    }
    Ok((y, yhat))
}

/// Fits `config` on `train` and scores it on `train` and `test`. `full` is
/// the (centered) dataset used for cross-validation when requested.
pub fn evaluate_config(
    name: &str,
    config: &ModelConfig,
    train: &DegradationDataset,
    test: &DegradationDataset,
    full: &DegradationDataset,
    opts: &CompareOptions,
) -> Result<(Metrics, FittedModel)> {
    let fitted = fit_dataset(train, config, opts.max_iter, opts.tol)?;
    let (y, yhat) = pooled_predictions(&fitted, train, true)?;
    let (r2, mse_train) = residual_metrics(&y, &yhat)?;
    let (y, yhat) = pooled_predictions(&fitted, test, true)?;
    let mse_test = y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    let loglik = fitted.loglik();
    let pc = &fitted.parameter_count;
    let (aic, bic) = information_criteria(loglik, pc.total, pc.n_obs as f64);
    let cv_error = match opts.cv {
        Some((k, seed)) => Some(kfold_cv(full, config, k, seed, opts.max_iter, opts.tol)?.cv_error),
        None => None,
    };
    let metrics = Metrics {
        model: name.into(),
        r2: Some(r2),
        loglik: Some(loglik),
        aic: Some(aic),
        bic: Some(bic),
        mse_train: Some(mse_train),
        mse_test: Some(mse_test),
        cv_error,
        n_params: Some(pc.total),
        n_obs: Some(pc.n_obs),
        converged: Some(fitted.fit.converged),
        error: None,
    };
    Ok((metrics, fitted))
}

/// Centered (when configured) copy of `ds` and its temporal split.
pub fn prepare_split(
    ds: &DegradationDataset,
    config: &ModelConfig,
    fraction: f64,
) -> Result<(DegradationDataset, DegradationDataset, DegradationDataset)> {
    let full = if config.center_baseline {
        center_baseline(ds)
    } else {
        ds.clone()
    };
    let (train, test) = temporal_split(&full, fraction)?;
    Ok((full, train, test))
}

/// Fits every requested variant on the leading `split_fraction` of each
/// unit's (centered) observations and scores it on both parts. A variant that
/// fails is reported in its row and does not stop the others.
pub fn compare_models(
    ds: &DegradationDataset,
    variants: &[ModelVariant],
    base: &ModelConfig,
    opts: &CompareOptions,
) -> Result<ComparisonTable> {
    let (full, train, test) = prepare_split(ds, base, opts.split_fraction)?;
    let mut variants = variants.to_vec();
    variants.sort();
    variants.dedup();
    let rows = variants
        .into_iter()
        .map(|v| {
            v.config(base)
                .and_then(|c| evaluate_config(v.name(), &c, &train, &test, &full, opts))
                .map(|(m, _)| m)
                .unwrap_or_else(|e| {
                    warn!("{v} failed: {e}");
                    Metrics::failed(v.name(), &e)
                })
        })
        .collect();
    Ok(ComparisonTable {
        rows,
        convention: "p = coefficients + 1 (noise variance) + free entries of the latent covariance; \
                     N = number of training observations; r2 and mse_train use the latent posterior; \
                     mse values are per observation"
            .into(),
    })
}

/// Per-unit, per-level split of the fitted coefficient `eta_li`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub unit_id: String,
    pub level: usize,
    /// `nu_l`
    pub population: f64,
    /// `beta_l . x_i`
    pub scalar: f64,
    /// `R sum_s sum_k b_lsk c_isk`
    pub marginal: f64,
    /// `R sum_p x_ip sum_s sum_k b'_lpsk c_isk`
    pub interaction: f64,
    /// `mu_li`
    pub latent: f64,
    /// Coefficient computed in one pass from the identity-basis design row.
    pub eta: f64,
}

impl EffectRow {
    pub fn reconstructed(&self) -> f64 {
        self.population + self.scalar + self.marginal + self.interaction + self.latent
    }
}

/// Effect components from explicit inputs.
pub fn effect_components(
    layout: &ZetaLayout,
    zeta: &DVector<f64>,
    x: &[f64],
    scores: &[Vec<f64>],
    support: f64,
    latent: Option<&DVector<f64>>,
) -> Result<Vec<(usize, [f64; 5], f64)>> {
    let q = layout.levels.len();
    let rows = observed_from_basis(&DMatrix::identity(q, q), x, scores, support, layout)?;
    let eta_fixed = rows * zeta;
    let mut out = Vec::with_capacity(q);
    for (li, &level) in layout.levels.iter().enumerate() {
        let mut parts = [0.0; 5];
        for seg in layout.find(SegmentKind::Nu, level) {
            parts[0] += layout.slice(zeta, seg)[li];
        }
        for seg in layout.find(SegmentKind::Beta, level) {
            parts[1] += layout.slice(zeta, seg).iter().zip(x).map(|(b, x)| b * x).sum::<f64>();
        }
        for seg in layout.find(SegmentKind::Micro, level) {
            let c = &scores[seg.micro.unwrap()];
            parts[2] += support * layout.slice(zeta, seg).iter().zip(c).map(|(b, c)| b * c).sum::<f64>();
        }
        for seg in layout.find(SegmentKind::Interaction, level) {
            let c = &scores[seg.micro.unwrap()];
            let xp = x[seg.scalar.unwrap()];
            parts[3] += support * xp * layout.slice(zeta, seg).iter().zip(c).map(|(b, c)| b * c).sum::<f64>();
        }
        let mu = latent.map_or(0.0, |m| m[li]);
        parts[4] = mu;
        out.push((level, parts, eta_fixed[li] + mu));
    }
    Ok(out)
}

/// Effect decomposition of every unit of `ds` under a fitted model. Units
/// not seen in training get a zero latent effect.
pub fn effect_decomposition(fitted: &FittedModel, ds: &DegradationDataset) -> Result<Vec<EffectRow>> {
    let mut rows = Vec::new();
    for u in &ds.units {
        let (x, scores) = fitted.covariates.unit_inputs(u)?;
        let mu = if fitted.config.include_latent {
            fitted.unit_index(&u.unit_id).map(|i| &fitted.fit.posterior.mu[i])
        } else {
            None
        };
        for (level, p, eta) in effect_components(
            &fitted.layout,
            &fitted.fit.params.zeta,
            &x,
            &scores,
            fitted.covariates.support,
            mu,
        )? {
            rows.push(EffectRow {
                unit_id: u.unit_id.clone(),
                level,
                population: p[0],
                scalar: p[1],
                marginal: p[2],
                interaction: p[3],
                latent: p[4],
                eta,
            });
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_comparison_csv(path: &Path, table: &ComparisonTable) -> Result<()> {
    let mut out = String::from("model,r2,loglik,aic,bic,mse_train,mse_test\n");
    for m in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.model,
            opt(m.r2),
            opt(m.loglik),
            opt(m.aic),
            opt(m.bic),
            opt(m.mse_train),
            opt(m.mse_test)
        );
    }
    write_file(path, &out)
}

pub fn write_effects_csv(path: &Path, rows: &[EffectRow]) -> Result<()> {
    let mut out = String::from("unit_id,level,marginal_effect,interaction_effect,latent_effect\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.unit_id, r.level, r.marginal, r.interaction, r.latent
        );
    }
    write_file(path, &out)
}
