//! Command-line front end. Exit codes: 0 success, 1 usage or input error,
//! 2 numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use disclab::energy::{self, EnergyProblem, Kl3dQuadrature};
use disclab::harness::{self, ExperimentConfig};
use disclab::optimize::{self, gradient_check};
use disclab::radial;
use disclab::{Error, Model, Params, PolarGrid, Result};

#[derive(Parser, Debug)]
#[command(name = "disclab", version, about = "Energy scaling experiments for thin conical sheets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Energy of the ansatz on the grid and by continuum quadrature.
    EvalAnsatz(Common),
    /// Minimize at one thickness and write report, profile and fields.
    Minimize(Common),
    /// Continuation sweep over the configured thicknesses plus the scaling fit.
    Sweep(Common),
    /// Curvature diagnostics of a stored fields file.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Fields CSV written by `minimize` or `sweep`.
        #[arg(long)]
        fields: PathBuf,
    },
    /// Finite-difference check of the energy gradient at a perturbed ansatz.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        directions: usize,
        /// Exit with status 2 if the error exceeds this.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Radially symmetric FvK minimization.
    Radial(Common),
    /// Three-dimensional energy of the Kirchhoff–Love extension of the ansatz.
    Kl3d {
        #[command(flatten)]
        common: Common,
        /// Gauss points across the thickness.
        #[arg(long, default_value_t = 4)]
        nx3: usize,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Thickness; for `sweep` a comma-separated decreasing list.
    #[arg(long, value_delimiter = ',')]
    h: Vec<f64>,
    /// Cone deficit Δ.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    /// Radial node count (overrides the grid policy).
    #[arg(long)]
    nr: Option<usize>,
    /// Angular node count.
    #[arg(long)]
    nphi: Option<usize>,
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    s.parse::<Model>().map_err(|e| e.to_string())
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.h.is_empty() {
            config.h_list = self.h.clone();
        }
        if let Some(d) = self.delta {
            config.delta = d;
        }
        if let Some(m) = self.model {
            config.model = m;
        }
        if let Some(n) = self.nr {
            config.grid.n_r = Some(n);
        }
        if let Some(n) = self.nphi {
            config.grid.n_phi = n;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    /// Configuration plus the single thickness of a one-shot command.
    fn single(&self) -> Result<(ExperimentConfig, Params, PolarGrid)> {
        let config = self.experiment()?;
        if config.h_list.len() != 1 && !self.h.is_empty() {
            return Err(Error::InvalidParams("this command takes a single --h".into()));
        }
        let h = config.h_list[0];
        let params = Params::new(h, config.delta, config.model)?;
        let grid = config.grid.grid(h)?;
        Ok((config, params, grid))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e.to_string()))
}

/// Writes `value` to stdout; a closed reader is not an error.
fn print(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).unwrap_or_default();
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::EvalAnsatz(common) => {
            let (_, params, grid) = common.single()?;
            let problem = EnergyProblem::new(params, grid.clone())?;
            let discrete = problem.energy(&problem.ansatz()?);
            let exact = energy::ansatz_energy_exact(&params, grid.r_min())?;
            let log_h = params.h.ln().abs();
            print(&json!({
                "version": disclab::VERSION_STAMP,
                "params": params,
                "grid": grid.shape(),
                "discrete": discrete,
                "quadrature": exact,
                "normalized": discrete.normalized(&params),
                "constant": discrete.normalized(&params) - log_h,
                "quadrature_constant": exact.normalized(&params) - log_h,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Minimize(common) => {
            let (config, params, grid) = common.single()?;
            ensure_dir(&config.out_dir)?;
            let opt = disclab::optimize::OptimizerConfig {
                seed: config.seed,
                ..config.optimizer.clone()
            };
            let solution = optimize::solve(params, grid, None, &opt)?;
            let (diag, row) = harness::persist(&solution, &config)?;
            print(&json!({
                "row": row,
                "normalized_energy": solution.report.energy / params.energy_unit(),
                "termination": solution.report.termination,
                "isoper": diag.isoper,
                "out_dir": config.out_dir,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(common) => {
            let config = common.experiment()?;
            let result = harness::run_sweep(&config)?;
            let fit = harness::fit_scaling(&result.rows);
            let fit_json = match &fit {
                Ok(f) => json!(f),
                Err(e) => json!({ "error": e.to_string() }),
            };
            harness::write_json(&config.out_dir.join("fit.json"), &json!({ "version": disclab::VERSION_STAMP, "fit": fit_json }))?;
            for row in &result.rows {
                if row.is_ok() {
                    println!("h={} E/(2πΔ²h²)={:.6} iterations={} certificate_ok={}", row.h, row.e_total / Params::new(row.h, row.delta, row.model)?.energy_unit(), row.iterations, row.certificate_ok);
                } else {
                    println!("h={} failed: {}", row.h, row.error);
                }
            }
            print(&json!({ "fit": fit_json, "out_dir": config.out_dir }));
            Ok(if result.rows.iter().all(|r| r.is_ok()) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Diagnose { common, fields } => {
            let (config, params, _) = common.single()?;
            let report = harness::diagnose(&fields, &params, &config.diagnostics, &config.out_dir)?;
            print(&json!({
                "normalized_energy": report.normalized_energy,
                "kappa_l1_dev": report.diagnostics.kappa_l1_dev,
                "certificate": report.diagnostics.certificate,
                "certificate_ok": report.diagnostics.certificate_ok,
                "isoper": report.diagnostics.isoper,
                "out_dir": config.out_dir,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { common, directions, tolerance } => {
            let (config, params, grid) = common.single()?;
            let problem = EnergyProblem::new(params, grid)?;
            let x: Vec<f64> = problem
                .ansatz()?
                .iter()
                .zip(problem.perturbation(config.seed, 0.05 * params.delta))
                .map(|(a, b)| a + b)
                .collect();
            let err = gradient_check(&problem, &x, directions, config.seed);
            let ok = err < tolerance;
            print(&json!({ "params": params, "max_relative_error": err, "tolerance": tolerance, "ok": ok }));
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Radial(common) => {
            let (config, params, grid) = common.single()?;
            if params.model != Model::Fvk {
                return Err(Error::InvalidParams("the radial reduction is implemented for the fvk model".into()));
            }
            ensure_dir(&config.out_dir)?;
            let (fields, breakdown, report) = radial::radial_minimize(&params, &grid, &config.optimizer)?;
            let path = config.out_dir.join(format!("radial_{}.csv", params.h));
            fields.write_csv(&path, &format!("h={} delta={}", params.h, params.delta))?;
            print(&json!({
                "params": params,
                "energy": breakdown,
                "normalized": breakdown.normalized(&params),
                "constant": breakdown.normalized(&params) - params.h.ln().abs(),
                "iterations": report.iterations,
                "termination": report.termination,
                "profile": path,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Kl3d { common, nx3 } => {
            let (_, params, _) = common.single()?;
            let quad = Kl3dQuadrature {
                thickness: nx3,
                ..Kl3dQuadrature::default()
            };
            let e = energy::kl3d_energy(&params, &quad)?;
            print(&json!({
                "params": params,
                "energy": e,
                "per_h2_log_h": e / (params.h * params.h * params.h.ln().abs()),
            }));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
