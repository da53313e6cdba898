//! Command implementations. Each returns what it read and wrote so the
//! caller can record a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use lrfmp::evaluation::{abs_error_field, evaluate_approx, evaluate_model, rrmse_with, Weighting};
use lrfmp::forward::{generate_dataset, synthetic_orbit, CoefficientModel, NoiseSpec, DEFAULT_MIN_DEGREE};
use lrfmp::io::{
    read_coefficients, read_dataset, read_expansion, read_orbit, write_coefficients, write_dataset, write_expansion,
    write_grid_csv, write_history_csv, write_orbit, CoefficientFormat, EARTH_RADIUS_M,
};
use lrfmp::optimize::Budget;
use lrfmp::solver::{solve, DictionarySpec, SolveOutput, SolverConfig, Status};
use lrfmp::sphere::driscoll_healy;

use crate::manifest::{sibling, CommandSpec, FileDigest, RunManifest};

fn parse_format(s: &str) -> Result<CoefficientFormat, String> {
    s.parse().map_err(|e: lrfmp::Error| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Coefficient model file.
    #[arg(long)]
    pub model: PathBuf,
    /// `simple` (n j value) or `gfc`.
    #[arg(long, default_value = "simple", value_parser = parse_format)]
    pub model_format: CoefficientFormat,
    /// Orbit CSV (`x,y,z`, `r,lon,t` or `sigma,lon,t`).
    #[arg(long)]
    pub orbit: PathBuf,
    /// Radius that maps to the unit sphere, in the orbit's length unit.
    #[arg(long, default_value_t = EARTH_RADIUS_M)]
    pub reference_radius: f64,
    /// Relative noise amplitude.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lowest degree kept in the synthesis.
    #[arg(long, default_value_t = DEFAULT_MIN_DEGREE)]
    pub min_degree: usize,
    /// Dataset CSV to write (`sigma,lon,t,y`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolverOpts {
    #[arg(long, default_value_t = 1600)]
    pub iterations: usize,
    /// Stop once the relative data error is at or below this value.
    #[arg(long, default_value_t = 0.05)]
    pub rde: f64,
    #[arg(long, default_value_t = 96)]
    pub sh_degree: usize,
    /// Use only the seed grid for kernels and wavelets.
    #[arg(long)]
    pub no_learning: bool,
    /// Reuter grid parameter of the kernel seeds (10 gives 123 points).
    #[arg(long, default_value_t = 10)]
    pub seed_grid_gamma: usize,
    #[arg(long, default_value_t = 0.94)]
    pub seed_radius: f64,
    /// Objective evaluations per global center search.
    #[arg(long, default_value_t = 10_000)]
    pub global_evals: usize,
    /// Objective evaluations per local refinement.
    #[arg(long, default_value_t = 10_000)]
    pub local_evals: usize,
    /// Wall-clock limit per optimizer stage, in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub max_seconds: f64,
}

impl SolverOpts {
    fn config(&self, lambda: f64) -> SolverConfig {
        let budget = |max_evals| Budget {
            max_evals,
            max_seconds: self.max_seconds,
            ..Budget::default()
        };
        SolverConfig {
            lambda,
            max_iterations: self.iterations,
            rde_threshold: self.rde,
            dictionary: DictionarySpec {
                sh_max_degree: self.sh_degree,
                learning: !self.no_learning,
                seed_gamma: self.seed_grid_gamma,
                seed_radius: self.seed_radius,
            },
            global_budget: budget(self.global_evals),
            local_budget: budget(self.local_evals),
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Dataset CSV (`sigma,lon,t,y`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub lambda: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverOpts,
    /// Expansion JSON to write; the history goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub expansion: PathBuf,
    #[arg(long)]
    pub reference_model: PathBuf,
    #[arg(long, default_value = "simple", value_parser = parse_format)]
    pub model_format: CoefficientFormat,
    /// Lowest reference degree, matching the synthesis cutoff.
    #[arg(long, default_value_t = DEFAULT_MIN_DEGREE)]
    pub min_degree: usize,
    #[arg(long, default_value_t = 181)]
    pub grid_lat: usize,
    #[arg(long, default_value_t = 361)]
    pub grid_lon: usize,
    /// Weight grid points by sin θ in the RRMSE.
    #[arg(long)]
    pub area_weighted: bool,
    /// Prefix of the three grid CSVs.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated regularization parameters.
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    /// Reference model for the RRMSE column.
    #[arg(long)]
    pub reference_model: Option<PathBuf>,
    #[arg(long, default_value = "simple", value_parser = parse_format)]
    pub model_format: CoefficientFormat,
    #[arg(long, default_value_t = DEFAULT_MIN_DEGREE)]
    pub min_degree: usize,
    #[arg(long, default_value_t = 181)]
    pub grid_lat: usize,
    #[arg(long, default_value_t = 361)]
    pub grid_lon: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverOpts,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MakeModelArgs {
    #[arg(long, default_value_t = DEFAULT_MIN_DEGREE)]
    pub min_degree: usize,
    #[arg(long, default_value_t = 36)]
    pub max_degree: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MakeOrbitArgs {
    #[arg(long, default_value_t = 20_000)]
    pub count: usize,
    #[arg(long, default_value_t = 160.0)]
    pub revolutions: f64,
    /// Inclination in degrees.
    #[arg(long, default_value_t = 89.0)]
    pub inclination: f64,
    #[arg(long, default_value_t = 1.075)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 1.082)]
    pub sigma_max: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// What a command touched.
struct Outcome {
    manifest: PathBuf,
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
    seed: Option<u64>,
    status: String,
    details: serde_json::Value,
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    Ok(())
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Converged => "converged",
        Status::MaxIterations => "max_iterations",
        Status::Stalled => "stalled",
    }
}

fn reference_model(path: &Path, format: CoefficientFormat, min_degree: usize) -> Result<CoefficientModel> {
    let mut m = read_coefficients(path, format)?;
    m.min_degree = m.min_degree.max(min_degree);
    Ok(m)
}

fn synth(a: &SynthArgs) -> Result<Outcome> {
    let mut model = read_coefficients(&a.model, a.model_format)?;
    model.min_degree = a.min_degree;
    let track = read_orbit(&a.orbit, a.reference_radius)?;
    if track.rejected > 0 {
        warn!("{} orbit rows with sigma <= 1 were rejected", track.rejected);
    }
    let ds = generate_dataset(&model, &track.points, NoiseSpec { level: a.noise, seed: a.seed })?;
    ensure_parent(&a.out)?;
    write_dataset(&ds, &a.out)?;
    info!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(Outcome {
        manifest: sibling(&a.out, ".manifest.json"),
        inputs: vec![a.model.clone(), a.orbit.clone()],
        artifacts: vec![a.out.clone()],
        seed: Some(a.seed),
        status: "ok".into(),
        details: json!({ "samples": ds.len(), "rejected_rows": track.rejected }),
    })
}

fn write_solution(out: &SolveOutput, path: &Path) -> Result<Vec<PathBuf>> {
    ensure_parent(path)?;
    write_expansion(&out.approximation, &out.history, path)?;
    let history = path.with_extension("history.csv");
    write_history_csv(&out.history, &history)?;
    Ok(vec![path.to_path_buf(), history])
}

fn solve_cmd(a: &SolveArgs) -> Result<Outcome> {
    let ds = read_dataset(&a.data)?;
    let config = a.solver.config(a.lambda);
    let out = solve(&config, &ds)?;
    let artifacts = write_solution(&out, &a.out)?;
    println!(
        "status {} after {} iterations, RDE {:.6e}",
        status_name(out.status),
        out.history.len(),
        out.final_rde
    );
    Ok(Outcome {
        manifest: a.out.with_extension("manifest.json"),
        inputs: vec![a.data.clone()],
        artifacts,
        seed: None,
        status: status_name(out.status).into(),
        details: json!({
            "config": config,
            "iterations": out.history.len(),
            "final_rde": out.final_rde,
            "warnings": out.warnings,
        }),
    })
}

fn eval_cmd(a: &EvalArgs) -> Result<Outcome> {
    let (approx, _) = read_expansion(&a.expansion)?;
    let model = reference_model(&a.reference_model, a.model_format, a.min_degree)?;
    let grid = driscoll_healy(a.grid_lat, a.grid_lon)?;
    let fa = evaluate_approx(&approx, &grid);
    let fr = evaluate_model(&model, &grid);
    let err = abs_error_field(&fa, &fr)?;
    let weighting = if a.area_weighted { Weighting::Area } else { Weighting::Unweighted };
    let value = rrmse_with(&fa, &fr, weighting)?;
    println!("RRMSE {value:.6e}");
    ensure_parent(&a.out_prefix)?;
    let paths = [".approx.csv", ".reference.csv", ".abs_error.csv"].map(|s| sibling(&a.out_prefix, s));
    write_grid_csv(&fa, &paths[0])?;
    write_grid_csv(&fr, &paths[1])?;
    write_grid_csv(&err, &paths[2])?;
    Ok(Outcome {
        manifest: sibling(&a.out_prefix, ".manifest.json"),
        inputs: vec![a.expansion.clone(), a.reference_model.clone()],
        artifacts: paths.to_vec(),
        seed: None,
        status: "ok".into(),
        details: json!({ "rrmse": value, "grid_points": grid.len() }),
    })
}

fn sweep_cmd(a: &SweepArgs) -> Result<Outcome> {
    let ds = read_dataset(&a.data)?;
    let reference = match &a.reference_model {
        Some(p) => {
            let model = reference_model(p, a.model_format, a.min_degree)?;
            let grid = driscoll_healy(a.grid_lat, a.grid_lon)?;
            Some((evaluate_model(&model, &grid), grid))
        }
        None => None,
    };
    fs::create_dir_all(&a.out_dir)?;
    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    let mut table = String::from("lambda,iterations,rde,rrmse,status\n");
    for (i, &lambda) in a.lambdas.iter().enumerate() {
        let config = a.solver.config(lambda);
        let out = solve(&config, &ds).with_context(|| format!("solve for lambda = {lambda:e}"))?;
        artifacts.extend(write_solution(&out, &a.out_dir.join(format!("lambda_{i}.json")))?);
        let rrmse = match &reference {
            Some((fr, grid)) => Some(rrmse_with(&evaluate_approx(&out.approximation, grid), fr, Weighting::Unweighted)?),
            None => None,
        };
        let rrmse_text = rrmse.map(|v| format!("{v:.16e}")).unwrap_or_default();
        table.push_str(&format!(
            "{lambda:.16e},{},{:.16e},{rrmse_text},{}\n",
            out.history.len(),
            out.final_rde,
            status_name(out.status)
        ));
        println!(
            "lambda {lambda:e}: {} iterations, RDE {:.4e}, RRMSE {}",
            out.history.len(),
            out.final_rde,
            rrmse.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into())
        );
        rows.push(json!({ "lambda": lambda, "iterations": out.history.len(), "rde": out.final_rde, "rrmse": rrmse, "status": status_name(out.status) }));
    }
    let table_path = a.out_dir.join("sweep.csv");
    fs::write(&table_path, table)?;
    artifacts.push(table_path);
    let mut inputs = vec![a.data.clone()];
    inputs.extend(a.reference_model.clone());
    Ok(Outcome {
        manifest: a.out_dir.join("sweep.manifest.json"),
        inputs,
        artifacts,
        seed: None,
        status: "ok".into(),
        details: json!({ "rows": rows }),
    })
}

fn make_model(a: &MakeModelArgs) -> Result<Outcome> {
    if a.min_degree > a.max_degree {
        bail!("min degree {} exceeds max degree {}", a.min_degree, a.max_degree);
    }
    let model = CoefficientModel::random_kaula(a.min_degree, a.max_degree, a.seed);
    ensure_parent(&a.out)?;
    write_coefficients(&model, &a.out)?;
    Ok(Outcome {
        manifest: sibling(&a.out, ".manifest.json"),
        inputs: vec![],
        artifacts: vec![a.out.clone()],
        seed: Some(a.seed),
        status: "ok".into(),
        details: json!({ "coefficients": model.coeffs.len() }),
    })
}

fn make_orbit(a: &MakeOrbitArgs) -> Result<Outcome> {
    if a.count == 0 || !(a.sigma_min > 1.0 && a.sigma_max >= a.sigma_min) {
        bail!("need count >= 1 and 1 < sigma_min <= sigma_max");
    }
    let points = synthetic_orbit(a.count, a.revolutions, a.inclination, a.sigma_min, a.sigma_max);
    ensure_parent(&a.out)?;
    write_orbit(&points, &a.out)?;
    Ok(Outcome {
        manifest: sibling(&a.out, ".manifest.json"),
        inputs: vec![],
        artifacts: vec![a.out.clone()],
        seed: None,
        status: "ok".into(),
        details: json!({ "points": points.len() }),
    })
}

fn execute(spec: &CommandSpec) -> Result<Outcome> {
    match spec {
        CommandSpec::Synth(a) => synth(a),
        CommandSpec::Solve(a) => solve_cmd(a),
        CommandSpec::Eval(a) => eval_cmd(a),
        CommandSpec::Sweep(a) => sweep_cmd(a),
        CommandSpec::MakeModel(a) => make_model(a),
        CommandSpec::MakeOrbit(a) => make_orbit(a),
    }
}

/// Runs a command and records its manifest.
pub fn run(spec: CommandSpec, threads: Option<usize>) -> Result<()> {
    run_recorded(spec, threads).map(|_| ())
}

fn run_recorded(spec: CommandSpec, threads: Option<usize>) -> Result<RunManifest> {
    let start = Instant::now();
    let outcome = execute(&spec)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        run: spec,
        threads,
        seed: outcome.seed,
        inputs: outcome.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        artifacts: outcome.artifacts.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        status: outcome.status,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        details: outcome.details,
    };
    manifest.write(&outcome.manifest)?;
    info!("manifest written to {}", outcome.manifest.display());
    Ok(manifest)
}

/// Repeats a recorded run and fails unless every artifact is reproduced
/// byte for byte.
pub fn rerun(path: &Path, threads: Option<usize>) -> Result<()> {
    let old = RunManifest::read(path)?;
    for input in &old.inputs {
        let now = FileDigest::of(&input.path)?;
        if now.sha256 != input.sha256 {
            bail!("input {} changed since the recorded run", input.path.display());
        }
    }
    let new = run_recorded(old.run.clone(), threads.or(old.threads))?;
    let mut mismatched = Vec::new();
    for (a, b) in old.artifacts.iter().zip(&new.artifacts) {
        if a != b {
            mismatched.push(a.path.display().to_string());
        }
    }
    if old.artifacts.len() != new.artifacts.len() {
        bail!("artifact count changed: {} recorded, {} produced", old.artifacts.len(), new.artifacts.len());
    }
    if !mismatched.is_empty() {
        bail!("artifacts differ from the recorded run: {}", mismatched.join(", "));
    }
    println!("reproduced {} artifacts bit-identically", new.artifacts.len());
    Ok(())
}
