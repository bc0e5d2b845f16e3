//! Design matrices of the coefficient-level model.
//!
//! Per unit, `Lambda_i[u][v] = phi_v(t_iu)` over the carried basis levels and
//! `Omega_i = (Lambda_i | A2_i | A3_i | A4_i)` with
//! `A2 = x_iv phi_l`, `A3 = R c_isk phi_l`, `A4 = R x_ip c_isk phi_l`.

mod covariates;
mod layout;

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::datamodel::{write_file, BasisFamily};
use crate::error::{Error, Result};

pub use covariates::{prepare_design, CovariateModel};
pub use layout::{Segment, SegmentKind, ZetaLayout};

/// Design of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDesign {
    pub unit_id: String,
    pub times: Vec<f64>,
    pub lambda: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl UnitDesign {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }
}

/// Per-unit designs sharing one coefficient layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub layout: ZetaLayout,
    pub units: Vec<UnitDesign>,
}

/// Population matrices: `Omega` row-stacked, `Lambda` block-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDesign {
    pub omega: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl DesignMatrices {
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_obs(&self) -> usize {
        self.units.iter().map(UnitDesign::n_obs).sum()
    }

    pub fn n_latent(&self) -> usize {
        self.layout.levels.len()
    }

    pub fn stacked(&self) -> Result<StackedDesign> {
        stack_population(&self.units)
    }
}

/// `phi_l(t)` for each time (rows) and carried level `l` (columns).
pub fn basis_rows(times: &[f64], basis: &BasisFamily, levels: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(times.len(), levels.len());
    for (u, &t) in times.iter().enumerate() {
        let phi = basis.evaluate(t);
        for (c, &l) in levels.iter().enumerate() {
            out[(u, c)] = phi[l];
        }
    }
    out
}

pub fn build_latent_design(times: &[f64], basis: &BasisFamily, levels: &[usize]) -> DMatrix<f64> {
    basis_rows(times, basis, levels)
}

/// Observed design `Omega_i` for the given per-unit inputs.
///
/// `x` are the load covariates and `scores[s][k]` the microstructure scores
/// scaled by `support` (the length `R` of the functional support).
pub fn build_observed_design(
    times: &[f64],
    basis: &BasisFamily,
    x: &[f64],
    scores: &[Vec<f64>],
    support: f64,
    layout: &ZetaLayout,
) -> Result<DMatrix<f64>> {
    let phi = basis_rows(times, basis, &layout.levels);
    observed_from_basis(&phi, x, scores, support, layout)
}

/// Same as [`build_observed_design`] with the basis values supplied directly
/// (`phi` is rows x levels). With `phi = I` the row `l` of `Omega` holds the
/// coefficient-level regressors of `eta_l`.
pub fn observed_from_basis(
    phi: &DMatrix<f64>,
    x: &[f64],
    scores: &[Vec<f64>],
    support: f64,
    layout: &ZetaLayout,
) -> Result<DMatrix<f64>> {
    if phi.ncols() != layout.levels.len() {
        return Err(Error::invalid(format!(
            "basis has {} levels, layout expects {}",
            phi.ncols(),
            layout.levels.len()
        )));
    }
    if x.len() != layout.n_scalars {
        return Err(Error::invalid(format!(
            "unit has {} load covariates, layout expects {}",
            x.len(),
            layout.n_scalars
        )));
    }
    if layout.has_micro() && (scores.len() != layout.n_micro || scores.iter().any(|s| s.len() != layout.k)) {
        return Err(Error::invalid(format!(
            "score dimensions do not match the layout ({} covariates x {} components)",
            layout.n_micro, layout.k
        )));
    }
    let m = phi.nrows();
    let mut omega = DMatrix::zeros(m, layout.width());
    for seg in &layout.segments {
        for j in 0..seg.len {
            let col = seg.offset + j;
            let level = seg.level;
            let factor = match seg.kind {
                SegmentKind::Nu => {
                    // one column per level
                    omega.set_column(col, &phi.column(j));
                    continue;
                }
                SegmentKind::Beta => x[seg.scalar.unwrap_or(j)],
                SegmentKind::Micro => support * scores[seg.micro.unwrap()][j],
                SegmentKind::Interaction => support * x[seg.scalar.unwrap()] * scores[seg.micro.unwrap()][j],
            };
            let lc = layout.level_index(level);
            for u in 0..m {
                omega[(u, col)] = factor * phi[(u, lc)];
            }
        }
    }
    Ok(omega)
}

pub fn stack_population(units: &[UnitDesign]) -> Result<StackedDesign> {
    let first = units.first().ok_or_else(|| Error::invalid("no units to stack"))?;
    let (cols, lat) = (first.omega.ncols(), first.lambda.ncols());
    if let Some(u) = units
        .iter()
        .find(|u| u.omega.ncols() != cols || u.lambda.ncols() != lat)
    {
        return Err(Error::invalid(format!(
            "unit {} has inconsistent design columns",
            u.unit_id
        )));
    }
    let n: usize = units.iter().map(UnitDesign::n_obs).sum();
    let mut omega = DMatrix::zeros(n, cols);
    let mut lambda = DMatrix::zeros(n, lat * units.len());
    let mut y = DVector::zeros(n);
    let mut row = 0;
    for (i, u) in units.iter().enumerate() {
        let m = u.n_obs();
        omega.view_mut((row, 0), (m, cols)).copy_from(&u.omega);
        lambda.view_mut((row, i * lat), (m, lat)).copy_from(&u.lambda);
        y.rows_mut(row, m).copy_from(&u.y);
        row += m;
    }
    Ok(StackedDesign { omega, lambda, y })
}

/// Names of columns that are (numerically) linear combinations of the
/// preceding columns, found by modified Gram-Schmidt.
pub fn dependent_columns(omega: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..omega.ncols() {
        let original = omega.column(j).into_owned();
        let norm0 = original.norm();
        let mut v = original;
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            dependent.push(names[j].clone());
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Least-squares solver for `min |Omega z - b|` on a fixed population design.
#[derive(Debug, Clone)]
pub struct ZetaSolver {
    kind: SolverKind,
}

#[derive(Debug, Clone)]
enum SolverKind {
    Qr {
        q_t: DMatrix<f64>,
        r: DMatrix<f64>,
    },
    Ridge {
        omega_t: DMatrix<f64>,
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
}

impl ZetaSolver {
    /// Fails with the dependent column names when `Omega` lacks full column
    /// rank, unless `ridge` is set, in which case `1e-8 * trace / U` is added
    /// to the normal equations.
    pub fn new(omega: &DMatrix<f64>, names: &[String], ridge: bool) -> Result<Self> {
        let u = omega.ncols();
        if ridge {
            let omega_t = omega.transpose();
            let mut gram = &omega_t * omega;
            let jitter = 1e-8 * gram.trace().max(f64::MIN_POSITIVE) / u as f64;
            for i in 0..u {
                gram[(i, i)] += jitter;
            }
            let chol = gram
                .cholesky()
                .ok_or_else(|| Error::Numerical("ridge-regularized normal equations not positive definite".into()))?;
            return Ok(Self {
                kind: SolverKind::Ridge { omega_t, chol },
            });
        }
        if omega.nrows() < u {
            return Err(Error::RankDeficient {
                columns: names[omega.nrows()..].to_vec(),
            });
        }
        let dependent = dependent_columns(omega, names);
        if !dependent.is_empty() {
            return Err(Error::RankDeficient { columns: dependent });
        }
        let qr = omega.clone().qr();
        Ok(Self {
            kind: SolverKind::Qr {
                q_t: qr.q().transpose(),
                r: qr.r(),
            },
        })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            SolverKind::Qr { q_t, r } => {
                let rhs = q_t * b;
                r.solve_upper_triangular(&rhs)
                    .expect("triangular factor checked for full rank")
            }
            SolverKind::Ridge { omega_t, chol } => chol.solve(&(omega_t * b)),
        }
    }
}

/// Writes every unit's `Lambda_i` and `Omega_i` rows (`design.csv`) and the
/// coefficient layout (`layout.csv`) into `dir`.
pub fn dump_design(design: &DesignMatrices, dir: &Path) -> Result<()> {
    let layout = &design.layout;
    let mut out = String::from("unit_id,time");
    for l in &layout.levels {
        let _ = write!(out, ",lambda[{l}]");
    }
    for name in layout.column_names() {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for u in &design.units {
        for row in 0..u.n_obs() {
            let _ = write!(out, "{},{}", u.unit_id, u.times[row]);
            for v in u.lambda.row(row).iter().chain(u.omega.row(row).iter()) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    write_file(&dir.join("design.csv"), &out)?;

    let mut out = String::from("segment,offset,len\n");
    for seg in &layout.segments {
        let _ = writeln!(out, "{},{},{}", seg.name, seg.offset, seg.len);
    }
    write_file(&dir.join("layout.csv"), &out)
}
