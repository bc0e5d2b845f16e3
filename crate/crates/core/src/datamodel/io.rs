//! CSV ingestion and export.
//!
//! responses: `unit_id,time,y`; scalars: `unit_id,x1,...,xP`;
//! curves: `unit_id,s,r,z` on a grid shared by every (unit, s).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{compare_ids, DegradationDataset, UnitRecord};
use crate::error::{Error, Result};

pub const RESPONSES_FILE: &str = "responses.csv";
pub const SCALARS_FILE: &str = "scalars.csv";
pub const CURVES_FILE: &str = "curves.csv";

struct Table {
    path: PathBuf,
    header: Vec<String>,
    /// (line number, fields)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

impl Table {
    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header.iter().map(String::as_str).ne(expected.iter().copied()) {
            return Err(Error::Parse {
                path: self.path.clone(),
                line: 1,
                msg: format!(
                    "expected header {}, found {}",
                    expected.join(","),
                    self.header.join(",")
                ),
            });
        }
        Ok(())
    }

    fn number(&self, line: usize, field: &str) -> Result<f64> {
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse {
                path: self.path.clone(),
                line,
                msg: format!("not a finite number: {field:?}"),
            }),
        }
    }
}

pub fn load_dataset_dir(dir: &Path) -> Result<DegradationDataset> {
    load_dataset(
        &dir.join(RESPONSES_FILE),
        &dir.join(SCALARS_FILE),
        &dir.join(CURVES_FILE),
    )
}

pub fn load_dataset(responses_file: &Path, scalars_file: &Path, curves_file: &Path) -> Result<DegradationDataset> {
    let responses = read_table(responses_file)?;
    responses.expect_header(&["unit_id", "time", "y"])?;
    let mut obs: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (line, row) in &responses.rows {
        let t = responses.number(*line, &row[1])?;
        let y = responses.number(*line, &row[2])?;
        obs.entry(row[0].clone()).or_default().push((t, y));
    }

    let scalars = read_table(scalars_file)?;
    if scalars.header.first().map(String::as_str) != Some("unit_id") {
        return Err(Error::Parse {
            path: scalars.path.clone(),
            line: 1,
            msg: "first column must be unit_id".into(),
        });
    }
    let scalar_names: Vec<String> = scalars.header[1..].to_vec();
    let mut xs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (line, row) in &scalars.rows {
        let vals = row[1..]
            .iter()
            .map(|f| scalars.number(*line, f))
            .collect::<Result<Vec<_>>>()?;
        if xs.insert(row[0].clone(), vals).is_some() {
            return Err(Error::invalid(format!("duplicate covariates for unit {}", row[0])));
        }
    }

    let curves = read_table(curves_file)?;
    curves.expect_header(&["unit_id", "s", "r", "z"])?;
    // unit -> s -> [(r, z)]
    let mut zs: BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for (line, row) in &curves.rows {
        let r = curves.number(*line, &row[2])?;
        let z = curves.number(*line, &row[3])?;
        zs.entry(row[0].clone())
            .or_default()
            .entry(row[1].clone())
            .or_default()
            .push((r, z));
    }
    let mut functional_ids: Vec<String> = zs
        .values()
        .flat_map(|m| m.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    functional_ids.sort_by(|a, b| compare_ids(a, b));

    for id in xs.keys() {
        if !obs.contains_key(id) {
            return Err(Error::invalid(format!(
                "covariates given for unit {id} without responses"
            )));
        }
    }
    for id in zs.keys() {
        if !obs.contains_key(id) {
            return Err(Error::invalid(format!("curves given for unit {id} without responses")));
        }
    }

    let mut r_grid: Option<Vec<f64>> = None;
    let mut units = Vec::with_capacity(obs.len());
    for (id, mut rows) in obs {
        let scalars = xs
            .remove(&id)
            .ok_or_else(|| Error::invalid(format!("missing covariates for unit {id}")))?;
        let mut unit_curves = Vec::with_capacity(functional_ids.len());
        if !functional_ids.is_empty() {
            let per_s = zs
                .get(&id)
                .ok_or_else(|| Error::invalid(format!("missing curves for unit {id}")))?;
            for s in &functional_ids {
                let pts = per_s
                    .get(s)
                    .ok_or_else(|| Error::invalid(format!("missing curve {s} for unit {id}")))?;
                let grid: Vec<f64> = pts.iter().map(|p| p.0).collect();
                match &r_grid {
                    None => r_grid = Some(grid),
                    Some(g) if *g == grid => {}
                    Some(_) => {
                        return Err(Error::invalid(format!(
                            "ragged functional grid for unit {id}, covariate {s}"
                        )))
                    }
                }
                unit_curves.push(pts.iter().map(|p| p.1).collect());
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        units.push(UnitRecord {
            unit_id: id,
            times: rows.iter().map(|r| r.0).collect(),
            responses: rows.iter().map(|r| r.1).collect(),
            scalars,
            curves: unit_curves,
        });
    }
    DegradationDataset::new(units, scalar_names, functional_ids, r_grid.unwrap_or_default())
}

pub fn save_dataset_dir(ds: &DegradationDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_dataset(
        ds,
        &dir.join(RESPONSES_FILE),
        &dir.join(SCALARS_FILE),
        &dir.join(CURVES_FILE),
    )
}

pub fn save_dataset(
    ds: &DegradationDataset,
    responses_file: &Path,
    scalars_file: &Path,
    curves_file: &Path,
) -> Result<()> {
    let mut out = String::from("unit_id,time,y\n");
    for u in &ds.units {
        for (t, y) in u.times.iter().zip(&u.responses) {
            let _ = writeln!(out, "{},{t},{y}", u.unit_id);
        }
    }
    write_file(responses_file, &out)?;

    let mut out = String::from("unit_id");
    for name in &ds.scalar_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for u in &ds.units {
        out.push_str(&u.unit_id);
        for x in &u.scalars {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    write_file(scalars_file, &out)?;

    let mut out = String::from("unit_id,s,r,z\n");
    for u in &ds.units {
        for (s, curve) in ds.functional_ids.iter().zip(&u.curves) {
            for (r, z) in ds.r_grid.iter().zip(curve) {
                let _ = writeln!(out, "{},{s},{r},{z}", u.unit_id);
            }
        }
    }
    write_file(curves_file, &out)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
