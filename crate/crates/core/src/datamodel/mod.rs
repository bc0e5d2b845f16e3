//! Domain records for degradation data: units with time-stamped responses,
//! scalar covariates and functional covariates sampled on a shared grid.

mod io;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use io::write_file;
pub use io::{
    load_dataset, load_dataset_dir, save_dataset, save_dataset_dir, CURVES_FILE, RESPONSES_FILE, SCALARS_FILE,
};

/// One tested unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub unit_id: String,
    /// Measurement times, strictly increasing.
    pub times: Vec<f64>,
    pub responses: Vec<f64>,
    /// Scalar covariates, one per dataset scalar column.
    pub scalars: Vec<f64>,
    /// One curve per functional covariate, sampled on the dataset grid.
    pub curves: Vec<Vec<f64>>,
}

impl UnitRecord {
    pub fn n_obs(&self) -> usize {
        self.times.len()
    }

    /// Copy of this unit restricted to the observations in `range`.
    pub fn slice_obs(&self, range: std::ops::Range<usize>) -> UnitRecord {
        UnitRecord {
            unit_id: self.unit_id.clone(),
            times: self.times[range.clone()].to_vec(),
            responses: self.responses[range].to_vec(),
            scalars: self.scalars.clone(),
            curves: self.curves.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationDataset {
    pub units: Vec<UnitRecord>,
    /// Header names of the scalar covariate columns (length P).
    pub scalar_names: Vec<String>,
    /// Labels of the functional covariates as they appear in the curves file (length S).
    pub functional_ids: Vec<String>,
    pub r_grid: Vec<f64>,
}

impl DegradationDataset {
    /// Validates and sorts the units. This is the only constructor that
    /// guarantees the invariants below hold:
    /// every unit has `m_i >= 1` strictly increasing times, `P` scalars and
    /// `S` curves of grid length.
    pub fn new(
        mut units: Vec<UnitRecord>,
        scalar_names: Vec<String>,
        functional_ids: Vec<String>,
        r_grid: Vec<f64>,
    ) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::invalid("dataset has no units"));
        }
        if r_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("descriptor grid must be strictly increasing"));
        }
        let p = scalar_names.len();
        let s = functional_ids.len();
        for u in &units {
            if u.times.is_empty() {
                return Err(Error::invalid(format!("unit {} has no observations", u.unit_id)));
            }
            if u.times.len() != u.responses.len() {
                return Err(Error::invalid(format!(
                    "unit {}: {} times but {} responses",
                    u.unit_id,
                    u.times.len(),
                    u.responses.len()
                )));
            }
            if u.times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(format!("non-increasing times for unit {}", u.unit_id)));
            }
            if u.scalars.len() != p {
                return Err(Error::invalid(format!(
                    "unit {} has {} scalar covariates, expected {p}",
                    u.unit_id,
                    u.scalars.len()
                )));
            }
            if u.curves.len() != s || u.curves.iter().any(|c| c.len() != r_grid.len()) {
                return Err(Error::invalid(format!(
                    "unit {} has curves inconsistent with the shared grid",
                    u.unit_id
                )));
            }
            let finite = u
                .times
                .iter()
                .chain(&u.responses)
                .chain(&u.scalars)
                .all(|v| v.is_finite())
                && u.curves.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(Error::invalid(format!("unit {} has non-finite values", u.unit_id)));
            }
        }
        units.sort_by(|a, b| compare_ids(&a.unit_id, &b.unit_id));
        if let Some(w) = units.windows(2).find(|w| w[0].unit_id == w[1].unit_id) {
            return Err(Error::invalid(format!("duplicate unit {}", w[0].unit_id)));
        }
        Ok(Self {
            units,
            scalar_names,
            functional_ids,
            r_grid,
        })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_scalars(&self) -> usize {
        self.scalar_names.len()
    }

    pub fn n_functional(&self) -> usize {
        self.functional_ids.len()
    }

    pub fn n_obs(&self) -> usize {
        self.units.iter().map(UnitRecord::n_obs).sum()
    }

    /// Support length `R` of the functional covariates.
    pub fn support_length(&self) -> f64 {
        match (self.r_grid.first(), self.r_grid.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn scalar_index(&self, name: &str) -> Option<usize> {
        self.scalar_names.iter().position(|n| n == name)
    }

    /// Same metadata, different units (already validated by the caller's source).
    pub fn with_units(&self, units: Vec<UnitRecord>) -> Result<Self> {
        Self::new(
            units,
            self.scalar_names.clone(),
            self.functional_ids.clone(),
            self.r_grid.clone(),
        )
    }
}

/// Orders identifiers numerically when both parse as integers, otherwise
/// lexically; numeric ids sort before non-numeric ones.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    #[default]
    Polynomial,
}

/// Temporal basis `phi_0..phi_L` with `phi_0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisFamily {
    pub kind: BasisKind,
    pub order: usize,
}

impl Default for BasisFamily {
    fn default() -> Self {
        Self::polynomial(1)
    }
}

impl BasisFamily {
    pub fn polynomial(order: usize) -> Self {
        Self {
            kind: BasisKind::Polynomial,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        match self.kind {
            BasisKind::Polynomial => {
                let mut out = Vec::with_capacity(self.order + 1);
                let mut v = 1.0;
                for _ in 0..=self.order {
                    out.push(v);
                    v *= t;
                }
                out
            }
        }
    }
}

pub fn evaluate_basis(basis: &BasisFamily, t: f64) -> Vec<f64> {
    basis.evaluate(t)
}

/// How the microstructure enters the coefficient level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MicrostructureSource {
    /// FPCA scores of the functional covariates.
    #[default]
    Functional,
    /// A user-supplied scalar summary column, used as a single unit-support score.
    Scalar,
}

/// Which second moment the noise-variance update uses in its trace term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceStaging {
    /// `V_i` from the E-step of the same iteration (the Q-maximizer).
    #[default]
    Posterior,
    /// `V_i` recomputed with the freshly updated `Sigma_gamma`.
    UpdatedPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub basis: BasisFamily,
    /// Fixed truncation per functional covariate; `None` selects by FVE.
    pub k: Option<usize>,
    pub fve: f64,
    pub include_scalar: bool,
    pub include_functional: bool,
    pub include_interaction: bool,
    pub include_latent: bool,
    pub center_baseline: bool,
    pub constrain_sigma_gamma_diagonal: bool,
    pub microstructure: MicrostructureSource,
    /// Scalar column holding a microstructure summary. It is never part of
    /// the load covariates `x_i`.
    pub microstructure_column: Option<String>,
    /// Adds `1e-8 * trace / U` to the normal equations instead of failing on
    /// rank deficiency.
    pub ridge: bool,
    pub trace_staging: TraceStaging,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            basis: BasisFamily::default(),
            k: None,
            fve: 0.95,
            include_scalar: true,
            include_functional: true,
            include_interaction: true,
            include_latent: true,
            center_baseline: true,
            constrain_sigma_gamma_diagonal: false,
            microstructure: MicrostructureSource::Functional,
            microstructure_column: None,
            ridge: false,
            trace_staging: TraceStaging::Posterior,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.include_scalar || self.include_functional || self.include_interaction || self.include_latent) {
            return Err(Error::invalid("at least one model component must be enabled"));
        }
        if self.include_functional && self.k == Some(0) {
            return Err(Error::invalid(
                "k must be at least 1 when functional covariates are used",
            ));
        }
        if !(self.fve > 0.0 && self.fve <= 1.0) {
            return Err(Error::invalid(format!("fve threshold {} not in (0, 1]", self.fve)));
        }
        if self.include_interaction && !self.include_functional {
            return Err(Error::invalid("interaction requires the microstructure block"));
        }
        if self.center_baseline && self.basis.order == 0 {
            return Err(Error::invalid(
                "centered baseline with order-0 basis leaves no coefficient level",
            ));
        }
        if self.microstructure == MicrostructureSource::Scalar && self.microstructure_column.is_none() {
            return Err(Error::invalid("scalar microstructure requires microstructure_column"));
        }
        Ok(())
    }

    /// Basis levels carried by the model: `1..=L` when the baseline is
    /// centered (`eta_0i = 0`), `0..=L` otherwise.
    pub fn levels(&self) -> Vec<usize> {
        let start = usize::from(self.center_baseline);
        (start..=self.basis.order).collect()
    }
}

/// Subtracts each unit's first response from all of its responses.
pub fn center_baseline(ds: &DegradationDataset) -> DegradationDataset {
    let mut out = ds.clone();
    for u in &mut out.units {
        let base = u.responses[0];
        for y in &mut u.responses {
            *y -= base;
        }
    }
    out
}
