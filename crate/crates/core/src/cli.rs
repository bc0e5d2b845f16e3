//! Batch command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use serde::Serialize;

use crate::datamodel::{load_dataset_dir, write_file, DegradationDataset, ModelConfig};
use crate::descriptors::{
    binarize_image, compute_rdf, compute_tpc, extract_particles, load_particles, load_pgm, write_curves_csv,
    DescriptorCurve, ParticleSet,
};
use crate::design::{dump_design, prepare_design, CovariateModel};
use crate::error::{Error, Result};
use crate::estimator::{fit_dataset, FittedModel, ParameterCount};
use crate::evaluation::{
    compare_models, effect_decomposition, evaluate_config, information_criteria, predict_unit, prepare_split,
    write_comparison_csv, write_effects_csv, CompareOptions, Metrics, ModelVariant,
};
use crate::fpca::{fit_fpca, project_scores, select_k_by_fve, FpcaModel};
use crate::simulate::{generate_dataset, write_synthetic, SyntheticSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mixdeg",
    version,
    about = "Degradation modeling with scalar and functional covariates"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Microstructure descriptor curves from images or particle files.
    #[command(subcommand)]
    Descriptor(DescriptorCommand),
    /// Functional principal components of the dataset's curves.
    Fpca(FpcaArgs),
    /// Fit a model by EM.
    Fit(FitArgs),
    /// Predict responses with a fitted model.
    Predict(PredictArgs),
    /// Fit on a temporal split and report goodness of fit and effects.
    Evaluate(EvaluateArgs),
    /// Compare the model variants.
    Compare(CompareArgs),
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
}

#[derive(Debug, Subcommand)]
enum DescriptorCommand {
    /// Two-point correlation of thresholded images.
    Tpc(TpcArgs),
    /// Radial distribution function of particle centroids.
    Rdf(RdfArgs),
}

#[derive(Debug, Args)]
struct TpcArgs {
    /// Grayscale PGM images, one unit each (unit id = file stem).
    #[arg(long = "image", required = true, num_args = 1..)]
    images: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Largest radius in pixels; the grid is 0..=r_max.
    #[arg(long)]
    r_max: usize,
    /// Wrap displacements around the image edges.
    #[arg(long)]
    periodic: bool,
    #[arg(long, default_value = "tpc")]
    label: String,
    #[arg(long, default_value = "curves.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RdfArgs {
    /// Particle files (`# window w h` header then `x,y` rows).
    #[arg(long = "particles", num_args = 1.., conflicts_with = "images")]
    particles: Vec<PathBuf>,
    /// Grayscale PGM images; particles are the centroids of thresholded components.
    #[arg(long = "image", num_args = 1..)]
    images: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    r_max: f64,
    #[arg(long)]
    dr: f64,
    #[arg(long, default_value = "rdf")]
    label: String,
    #[arg(long, default_value = "curves.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model configuration JSON; unspecified fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// FVE threshold for selecting the truncation.
    #[arg(long)]
    fve: Option<f64>,
    /// Fixed truncation (overrides FVE selection).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

impl ModelArgs {
    fn load(&self) -> Result<ModelConfig> {
        let mut config: ModelConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => ModelConfig::default(),
        };
        if let Some(f) = self.fve {
            config.fve = f;
        }
        if self.k.is_some() {
            config.k = self.k;
        }
        config.validate()?;
        info!("config: {}", serde_json::to_string(&config)?);
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct FpcaArgs {
    /// Directory holding responses.csv, scalars.csv and curves.csv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = crate::fpca::DEFAULT_FVE)]
    fve: f64,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Also write the stacked design and its column layout.
    #[arg(long)]
    dump_design: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// model.json written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Prediction times for every unit (default: the observed times).
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    /// Leave out the latent effects.
    #[arg(long)]
    no_latent: bool,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Apply a model variant's switches on top of the configuration.
    #[arg(long)]
    variant: Option<ModelVariant>,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Unit-level cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Variants to compare (default: all seven).
    #[arg(long = "variant", num_args = 1..)]
    variants: Vec<ModelVariant>,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Synthetic spec JSON; unspecified fields take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the seed in the synthetic spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    info!("command: {:?}", cli.command);
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INVALID
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Descriptor(DescriptorCommand::Tpc(a)) => cmd_tpc(&a),
        Command::Descriptor(DescriptorCommand::Rdf(a)) => cmd_rdf(&a),
        Command::Fpca(a) => cmd_fpca(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        msg: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn unit_label(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_tpc(a: &TpcArgs) -> Result<()> {
    let mut curves = Vec::with_capacity(a.images.len());
    for path in &a.images {
        let img = binarize_image(&load_pgm(path)?, a.threshold)?;
        curves.push((
            unit_label(path),
            a.label.clone(),
            compute_tpc(&img, a.r_max, a.periodic)?,
        ));
    }
    write_curves_csv(&a.out, &curves)
}

fn cmd_rdf(a: &RdfArgs) -> Result<()> {
    let mut sets: Vec<(String, ParticleSet)> = Vec::new();
    for path in &a.particles {
        sets.push((unit_label(path), load_particles(path)?));
    }
    for path in &a.images {
        let img = binarize_image(&load_pgm(path)?, a.threshold)?;
        sets.push((unit_label(path), extract_particles(&img)?));
    }
    if sets.is_empty() {
        return Err(Error::invalid("descriptor rdf needs --particles or --image"));
    }
    let mut curves: Vec<(String, String, DescriptorCurve)> = Vec::with_capacity(sets.len());
    for (unit, ps) in sets {
        let curve = compute_rdf(&ps, a.r_max, a.dr)?;
        if curve.degenerate {
            log::warn!("{unit}: no reference particles inside the guard region");
        }
        curves.push((unit, a.label.clone(), curve));
    }
    write_curves_csv(&a.out, &curves)
}

#[derive(Serialize)]
struct FpcaReport<'a> {
    covariate: &'a str,
    k: usize,
    model: &'a FpcaModel,
}

fn cmd_fpca(a: &FpcaArgs) -> Result<()> {
    let ds = load_dataset_dir(&a.data)?;
    if ds.n_functional() == 0 {
        return Err(Error::invalid("dataset has no functional covariates"));
    }
    let mut models = Vec::with_capacity(ds.n_functional());
    for s in 0..ds.n_functional() {
        let curves: Vec<Vec<f64>> = ds.units.iter().map(|u| u.curves[s].clone()).collect();
        let model = fit_fpca(&curves, &ds.r_grid)?;
        let k = a.k.unwrap_or_else(|| select_k_by_fve(&model, a.fve));
        models.push(model.with_k(k)?);
    }
    let mut eig = String::from("s,k,eigenvalue,fve,r,psi\n");
    let mut scores = String::from("unit_id,s,k,score\n");
    for (sid, m) in ds.functional_ids.iter().zip(&models) {
        for k in 0..m.k {
            for (r, psi) in m.r_grid.iter().zip(&m.eigenfunctions[k]) {
                let _ = writeln!(eig, "{sid},{},{},{},{r},{psi}", k + 1, m.eigenvalues[k], m.fve_trace[k]);
            }
        }
    }
    for (s, m) in models.iter().enumerate() {
        let curves: Vec<Vec<f64>> = ds.units.iter().map(|u| u.curves[s].clone()).collect();
        for (u, c) in ds.units.iter().zip(project_scores(m, &curves)?) {
            for (k, v) in c.iter().enumerate() {
                let _ = writeln!(scores, "{},{},{},{v}", u.unit_id, ds.functional_ids[s], k + 1);
            }
        }
    }
    let reports: Vec<FpcaReport> = ds
        .functional_ids
        .iter()
        .zip(&models)
        .map(|(s, m)| FpcaReport {
            covariate: s,
            k: m.k,
            model: m,
        })
        .collect();
    write_json(&a.out.join("fpca.json"), &reports)?;
    write_file(&a.out.join("eigenfunctions.csv"), &eig)?;
    write_file(&a.out.join("scores.csv"), &scores)
}

#[derive(Serialize)]
struct FitReport<'a> {
    converged: bool,
    iterations: usize,
    loglik: f64,
    aic: f64,
    bic: f64,
    parameter_count: &'a ParameterCount,
    k: usize,
    column_names: &'a [String],
    zeta: &'a [f64],
    sigma_eps2: f64,
    sigma_gamma: Vec<Vec<f64>>,
    loglik_trace: &'a [f64],
    config: &'a ModelConfig,
}

fn fit_report(fitted: &FittedModel) -> FitReport<'_> {
    let pc = &fitted.parameter_count;
    let (aic, bic) = information_criteria(fitted.loglik(), pc.total, pc.n_obs as f64);
    let sg = &fitted.fit.params.sigma_gamma;
    FitReport {
        converged: fitted.fit.converged,
        iterations: fitted.fit.iterations,
        loglik: fitted.loglik(),
        aic,
        bic,
        parameter_count: pc,
        k: fitted.covariates.k,
        column_names: &fitted.column_names,
        zeta: fitted.fit.params.zeta.as_slice(),
        sigma_eps2: fitted.fit.params.sigma_eps2,
        sigma_gamma: sg.row_iter().map(|r| r.iter().copied().collect()).collect(),
        loglik_trace: &fitted.fit.loglik_trace,
        config: &fitted.config,
    }
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let config = a.model.load()?;
    let ds = load_dataset_dir(&a.data)?;
    if a.dump_design {
        let centered = if config.center_baseline {
            crate::datamodel::center_baseline(&ds)
        } else {
            ds.clone()
        };
        let cov = CovariateModel::fit(&centered, &config)?;
        dump_design(&prepare_design(&centered, &config, &cov)?, &a.out)?;
    }
    let fitted = fit_dataset(&ds, &config, a.model.max_iter, a.model.tol)?;
    if !fitted.fit.converged {
        log::warn!(
            "EM stopped after {} iterations without meeting the tolerance",
            fitted.fit.iterations
        );
    }
    write_json(&a.out.join("fit_report.json"), &fit_report(&fitted))?;
    write_json(&a.out.join("model.json"), &fitted)
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let fitted: FittedModel = read_json(&a.model)?;
    let ds = fitted.prepare(&load_dataset_dir(&a.data)?);
    let mut out = String::new();
    if a.times.is_empty() {
        out.push_str("unit_id,time,y,y_hat\n");
        for u in &ds.units {
            let yhat = predict_unit(&fitted, u, &u.times, !a.no_latent)?;
            for ((t, y), p) in u.times.iter().zip(&u.responses).zip(&yhat) {
                let _ = writeln!(out, "{},{t},{y},{p}", u.unit_id);
            }
        }
    } else {
        out.push_str("unit_id,time,y_hat\n");
        for u in &ds.units {
            let yhat = predict_unit(&fitted, u, &a.times, !a.no_latent)?;
            for (t, p) in a.times.iter().zip(&yhat) {
                let _ = writeln!(out, "{},{t},{p}", u.unit_id);
            }
        }
    }
    write_file(&a.out, &out)
}

fn predictions_csv(fitted: &FittedModel, parts: [(&str, &DegradationDataset); 2]) -> Result<String> {
    let mut out = String::from("unit_id,time,y,y_hat,split\n");
    for (label, ds) in parts {
        for u in &ds.units {
            let yhat = predict_unit(fitted, u, &u.times, true)?;
            for ((t, y), p) in u.times.iter().zip(&u.responses).zip(&yhat) {
                let _ = writeln!(out, "{},{t},{y},{p},{label}", u.unit_id);
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    metrics: &'a Metrics,
    split_fraction: f64,
    folds: Option<usize>,
    seed: u64,
    fit: FitReport<'a>,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut config = a.model.load()?;
    if let Some(v) = a.variant {
        config = v.config(&config)?;
    }
    let name = a.variant.map_or("custom", ModelVariant::name);
    let ds = load_dataset_dir(&a.data)?;
    let (full, train, test) = prepare_split(&ds, &config, a.split)?;
    let opts = CompareOptions {
        split_fraction: a.split,
        max_iter: a.model.max_iter,
        tol: a.model.tol,
        cv: a.folds.map(|k| (k, a.seed)),
    };
    let (metrics, fitted) = evaluate_config(name, &config, &train, &test, &full, &opts)?;
    write_effects_csv(&a.out.join("effects.csv"), &effect_decomposition(&fitted, &train)?)?;
    write_file(
        &a.out.join("predictions.csv"),
        &predictions_csv(&fitted, [("train", &train), ("test", &test)])?,
    )?;
    let report = EvaluationReport {
        metrics: &metrics,
        split_fraction: a.split,
        folds: a.folds,
        seed: a.seed,
        fit: fit_report(&fitted),
    };
    write_json(&a.out.join("evaluation.json"), &report)
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let config = a.model.load()?;
    let ds = load_dataset_dir(&a.data)?;
    let variants = if a.variants.is_empty() {
        ModelVariant::ALL.to_vec()
    } else {
        a.variants.clone()
    };
    let opts = CompareOptions {
        split_fraction: a.split,
        max_iter: a.model.max_iter,
        tol: a.model.tol,
        cv: a.folds.map(|k| (k, a.seed)),
    };
    let table = compare_models(&ds, &variants, &config, &opts)?;
    write_comparison_csv(&a.out.join("comparison.csv"), &table)?;
    write_json(&a.out.join("comparison.json"), &table)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut spec: SyntheticSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    info!("spec: {}", serde_json::to_string(&spec)?);
    let (ds, truth) = generate_dataset(&spec)?;
    write_synthetic(&a.out, &spec, &ds, &truth)
}
