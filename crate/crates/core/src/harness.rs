//! Experiment driver: thickness sweeps with continuation, per-thickness
//! diagnostics, persisted artifacts and the scaling fit.
//!
//! Every artifact is written to a temporary name and renamed on completion.
//! CSV files start with a `#` line carrying [`VERSION_STAMP`]; JSON reports
//! carry it in a `version` field.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::curvature::{self, CurvatureProfile, InterpolationRecord, DEFAULT_SLACK, PLATE_CERTIFICATE_FACTOR};
use crate::energy::EnergyBreakdown;
use crate::error::{Error, Result};
use crate::geometry::{Model, Params};
use crate::grid::{self, Field, GridPolicy, GridShape, PolarGrid};
use crate::optimize::{self, OptimizeReport, OptimizerConfig, Solution, StartKind};
use crate::VERSION_STAMP;

/// Where diagnostics are evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// The deviation window starts at `lower_factor · h`.
    pub lower_factor: f64,
    /// The deviation window ends at `1 − upper_margin · h`.
    pub upper_margin: f64,
    /// Base `h₀` of the dyadic radii `2ʲh₀`, in units of `h`.
    pub dyadic_base: f64,
    /// Relative slack of the isoperimetric and certificate checks.
    pub slack: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            lower_factor: 6.0,
            upper_margin: 5.0,
            dyadic_base: 1.0,
            slack: DEFAULT_SLACK,
        }
    }
}

impl DiagnosticsConfig {
    /// The deviation window `[6h, 1 − 5h]` clipped to the grid.
    pub fn window(&self, h: f64, grid: &PolarGrid) -> Result<(f64, f64)> {
        let radii = grid.radii();
        let mut a = (self.lower_factor * h).max(radii[0]);
        let b = (1.0 - self.upper_margin * h).min(radii[radii.len() - 1]);
        if a >= b {
            // The core margin reaches past the edge margin: use [b/2, b].
            a = (0.5 * b).max(radii[0]);
        }
        if !(a < b) {
            return Err(Error::domain(format!("diagnostic window [{a}, {b}] is empty at h = {h}")));
        }
        Ok((a, b))
    }
}

/// A complete sweep description; its JSON form is the CLI config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub delta: f64,
    /// Strictly decreasing thicknesses in `(0, 1)`.
    pub h_list: Vec<f64>,
    pub grid: GridPolicy,
    pub optimizer: OptimizerConfig,
    pub diagnostics: DiagnosticsConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Warm-start each thickness from the previous minimizer.
    pub continuation: bool,
    /// Persist `fields_<h>.csv` for every thickness.
    pub write_fields: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: Model::Fvk,
            delta: 0.5,
            h_list: vec![0.05, 0.02, 0.01, 0.005],
            grid: GridPolicy::default(),
            optimizer: OptimizerConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            continuation: true,
            write_fields: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e.to_string()))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::file(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_list.is_empty() {
            return Err(Error::InvalidParams("h_list is empty".into()));
        }
        for &h in &self.h_list {
            Params::new(h, self.delta, self.model)?;
        }
        if self.h_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParams("h_list must be strictly decreasing".into()));
        }
        let d = &self.diagnostics;
        if !(d.lower_factor > 0.0 && d.upper_margin >= 0.0 && d.dyadic_base > 0.0 && (0.0..1.0).contains(&d.slack)) {
            return Err(Error::InvalidParams("diagnostics: factors must be positive and slack in [0, 1)".into()));
        }
        self.optimizer.validate()
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            ..self.optimizer.clone()
        }
    }
}

/// One line of `sweep.csv`. Energies of a failed thickness are NaN and
/// `error` holds the message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h: f64,
    pub delta: f64,
    pub model: Model,
    pub n_r: usize,
    pub n_phi: usize,
    pub e_total: f64,
    pub e_membrane: f64,
    pub e_bending: f64,
    pub e_ansatz: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub kappa_l1_dev: f64,
    pub certificate: f64,
    pub certificate_ok: bool,
    pub error: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }

    fn failed(config: &ExperimentConfig, h: f64, shape: GridShape, e_ansatz: f64, err: &Error) -> Self {
        SweepRow {
            h,
            delta: config.delta,
            model: config.model,
            n_r: shape.n_r,
            n_phi: shape.n_phi,
            e_total: f64::NAN,
            e_membrane: f64::NAN,
            e_bending: f64::NAN,
            e_ansatz,
            iterations: 0,
            grad_norm: f64::NAN,
            kappa_l1_dev: f64::NAN,
            certificate: f64::NAN,
            certificate_ok: false,
            error: err.to_string(),
        }
    }
}

/// Isoperimetric checks over the rings of the diagnostic window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoperSummary {
    pub rings: usize,
    pub satisfied: usize,
    /// Smallest `lhs / rhs` over rings with `rhs > 0`.
    pub min_ratio: f64,
    pub slack: f64,
}

/// Curvature diagnostics of one field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub window: (f64, f64),
    /// `κ` on the dyadic radii inside the grid.
    pub dyadic: CurvatureProfile,
    /// `κ` on every ring inside the window.
    pub rings: CurvatureProfile,
    pub kappa_l1_dev: f64,
    /// `2∫|κ|dr/r` over the window, times 1/3 for the plate.
    pub certificate: f64,
    /// `∫|D²v|²` (or `Σᵢ∫|D²yᵢ|²`) over the window.
    pub bending_window: f64,
    pub certificate_ok: bool,
    pub isoper: IsoperSummary,
    /// Degree of the gradient curve on the ring nearest `r = 1/2` about the origin.
    pub degree: Option<i64>,
    pub interpolation: Option<InterpolationRecord>,
}

/// Computes all diagnostics of the three planes `x` of a `params.model` state.
pub fn diagnostics(params: &Params, grid: &PolarGrid, x: &Field<3>, config: &DiagnosticsConfig) -> Result<Diagnostics> {
    x.check(grid)?;
    let (a, b) = config.window(params.h, grid)?;
    let ring_radii = curvature::ring_radii(grid, a, b);
    let radii = grid.radii();
    let dyadic_radii = curvature::dyadic_radii(config.dyadic_base * params.h, radii[0], radii[radii.len() - 1]);
    let target = params.kappa_target();
    let (u, v) = curvature::split_fvk(x, grid)?;
    let (dyadic, rings, planes): (_, _, Vec<&[f64]>) = match params.model {
        Model::Fvk => (
            curvature::kappa_fvk(&v, grid, &dyadic_radii, target)?,
            curvature::kappa_fvk(&v, grid, &ring_radii, target)?,
            vec![x.component(2)],
        ),
        Model::Plate => (
            curvature::kappa_plate(x, grid, &dyadic_radii, target)?,
            curvature::kappa_plate(x, grid, &ring_radii, target)?,
            vec![x.component(0), x.component(1), x.component(2)],
        ),
    };
    let (a, b) = (rings.radii[0], rings.radii[rings.radii.len() - 1]);
    let kappa_l1_dev = curvature::l1_deviation(&rings, a, b)?;
    let factor = match params.model {
        Model::Fvk => 1.0,
        Model::Plate => PLATE_CERTIFICATE_FACTOR,
    };
    let certificate = factor * curvature::lower_bound_certificate(&rings, a, b)?;
    let mut bending_window = 0.0;
    for p in &planes {
        bending_window += curvature::bending_integral(grid, p, a, b)?;
    }

    let (k0, k1) = (grid.nearest_ring(a), grid.nearest_ring(b));
    let mut isoper = IsoperSummary {
        rings: 0,
        satisfied: 0,
        min_ratio: f64::INFINITY,
        slack: config.slack,
    };
    for p in &planes {
        for rec in &curvature::isoper_rings(grid, p, config.slack)[k0..=k1] {
            isoper.rings += 1;
            isoper.satisfied += usize::from(rec.satisfied);
            if rec.rhs > 0.0 {
                isoper.min_ratio = isoper.min_ratio.min(rec.lhs / rec.rhs);
            }
        }
    }

    let scalar = grid::ScalarField::from_components(grid, [planes[planes.len() - 1].to_vec()])?;
    let curve = curvature::gradient_curve(&scalar, grid, grid.nearest_ring(0.5))?;
    let degree = curvature::brouwer_degree(&curve, Vector2::zeros()).ok();
    let interpolation = match params.model {
        Model::Fvk => Some(curvature::interpolation_diagnostic(&u, &v, params, grid, b)?),
        Model::Plate => None,
    };
    Ok(Diagnostics {
        window: (a, b),
        dyadic,
        rings,
        kappa_l1_dev,
        certificate,
        bending_window,
        certificate_ok: certificate <= bending_window * (1.0 + config.slack),
        isoper,
        degree,
        interpolation,
    })
}

/// Contents of `report_<h>.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HReport {
    pub version: String,
    pub params: Params,
    pub grid: GridShape,
    pub start: StartKind,
    pub ansatz: EnergyBreakdown,
    pub optimizer: OptimizeReport,
    pub normalized_energy: f64,
    pub diagnostics: Diagnostics,
}

fn h_tag(h: f64) -> String {
    format!("{h}")
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::file(&tmp, e.to_string()))?;
        f.write_all(bytes)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::file(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut bytes = format!("# {VERSION_STAMP}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        for row in rows {
            w.serialize(row)?;
        }
        if rows.is_empty() {
            w.write_record(SWEEP_HEADER)?;
        }
        w.flush()?;
    }
    write_atomic(path, &bytes)
}

/// Column names of `sweep.csv`.
pub const SWEEP_HEADER: [&str; 15] = [
    "h",
    "delta",
    "model",
    "n_r",
    "n_phi",
    "e_total",
    "e_membrane",
    "e_bending",
    "e_ansatz",
    "iterations",
    "grad_norm",
    "kappa_l1_dev",
    "certificate",
    "certificate_ok",
    "error",
];

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    rdr.deserialize().map(|r| r.map_err(|e| Error::file(path, e.to_string()))).collect()
}

fn plane_names(model: Model) -> [&'static str; 3] {
    match model {
        Model::Fvk => ["u1", "u2", "v"],
        Model::Plate => ["y1", "y2", "y3"],
    }
}

/// Runs the diagnostics of a solution and writes `kappa_<h>.csv`,
/// `report_<h>.json` and optionally `fields_<h>.csv`.
pub fn persist(solution: &Solution, config: &ExperimentConfig) -> Result<(Diagnostics, SweepRow)> {
    let params = solution.params;
    let grid = &solution.grid;
    let fields = solution.fields()?;
    let diag = diagnostics(&params, grid, &fields, &config.diagnostics)?;
    let dir = &config.out_dir;
    let tag = h_tag(params.h);
    let meta = format!("model={} h={} delta={}", params.model, params.h, params.delta);
    let all_rings = curvature::ring_radii(grid, 0.0, f64::INFINITY);
    let profile = match params.model {
        Model::Fvk => curvature::kappa_fvk(&curvature::split_fvk(&fields, grid)?.1, grid, &all_rings, params.kappa_target())?,
        Model::Plate => curvature::kappa_plate(&fields, grid, &all_rings, params.kappa_target())?,
    };
    profile.write_csv(&dir.join(format!("kappa_{tag}.csv")), &meta)?;
    if config.write_fields {
        grid::write_field_csv(&dir.join(format!("fields_{tag}.csv")), &fields, grid, plane_names(params.model), &meta)?;
    }
    let report = &solution.report;
    let breakdown = report.breakdown.unwrap_or(EnergyBreakdown::new(f64::NAN, f64::NAN));
    let h_report = HReport {
        version: VERSION_STAMP.to_string(),
        params,
        grid: grid.shape(),
        start: solution.start_kind,
        ansatz: solution.ansatz_energy,
        optimizer: report.clone(),
        normalized_energy: breakdown.normalized(&params),
        diagnostics: diag.clone(),
    };
    write_json(&dir.join(format!("report_{tag}.json")), &h_report)?;
    let row = SweepRow {
        h: params.h,
        delta: params.delta,
        model: params.model,
        n_r: grid.n_r(),
        n_phi: grid.n_phi(),
        e_total: breakdown.total,
        e_membrane: breakdown.membrane,
        e_bending: breakdown.bending,
        e_ansatz: solution.ansatz_energy.total,
        iterations: report.iterations,
        grad_norm: report.grad_norm,
        kappa_l1_dev: diag.kappa_l1_dev,
        certificate: diag.certificate,
        certificate_ok: diag.certificate_ok,
        error: String::new(),
    };
    Ok((diag, row))
}

/// Output of a sweep: one row per thickness and the solutions that succeeded.
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub solutions: Vec<Solution>,
    pub diagnostics: Vec<Diagnostics>,
}

/// [`run_sweep_with`] without fault injection.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep_with(config, |_| Ok(()))
}

/// Runs the sweep, calling `inject(h)` before each thickness; an error from it
/// is recorded in that row like any other per-thickness failure. Only an
/// invalid configuration or an unwritable output directory aborts the sweep.
pub fn run_sweep_with(config: &ExperimentConfig, inject: impl Fn(f64) -> Result<()>) -> Result<SweepResult> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::file(&config.out_dir, e.to_string()))?;
    let sweep_path = config.out_dir.join("sweep.csv");
    write_sweep_csv(&sweep_path, &[])?;
    let opt = config.optimizer_config();
    let mut rows = Vec::with_capacity(config.h_list.len());
    let mut solutions: Vec<Solution> = Vec::new();
    let mut diags = Vec::new();
    let mut previous: Option<Solution> = None;
    for &h in &config.h_list {
        let params = Params::new(h, config.delta, config.model)?;
        let grid = config.grid.grid(h)?;
        let shape = grid.shape();
        let solved = (|| -> Result<Solution> {
            inject(h)?;
            let start = match (&previous, config.continuation) {
                (Some(prev), true) => Some(optimize::warm_start(prev, &grid)?),
                _ => None,
            };
            optimize::solve(params, grid.clone(), start, &opt)
        })();
        // A solve whose diagnostics fail still seeds the next thickness.
        if let Ok(solution) = &solved {
            previous = Some(solution.clone());
        }
        let step = solved.and_then(|solution| persist(&solution, config).map(|(diag, row)| (solution, diag, row)));
        match step {
            Ok((solution, diag, row)) => {
                rows.push(row);
                diags.push(diag);
                solutions.push(solution);
            }
            Err(err) => {
                let e_ansatz = crate::energy::EnergyProblem::new(params, grid.clone())
                    .and_then(|p| p.ansatz().map(|x| p.energy(&x).total))
                    .unwrap_or(f64::NAN);
                rows.push(SweepRow::failed(config, h, shape, e_ansatz, &err));
            }
        }
        write_sweep_csv(&sweep_path, &rows)?;
    }
    Ok(SweepResult {
        rows,
        solutions,
        diagnostics: diags,
    })
}

/// Least-squares fit of `E/(2πΔ²h²) = slope·|log h| + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_abs_residual: f64,
}

/// Fits the successful rows; needs at least three distinct thicknesses.
pub fn fit_scaling(rows: &[SweepRow]) -> Result<ScalingFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.is_ok() && r.e_total.is_finite())
        .map(|r| (r.h.ln().abs(), r.e_total / (2.0 * PI * r.delta * r.delta * r.h * r.h)))
        .collect();
    let mut hs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    if hs.len() < 3 {
        return Err(Error::InvalidParams(format!("scaling fit needs 3 distinct thicknesses, got {}", hs.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_abs_residual = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).abs()).fold(0.0, f64::max);
    Ok(ScalingFit {
        slope,
        intercept,
        max_abs_residual,
    })
}

/// Contents of `diagnose_<h>.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub version: String,
    pub source: PathBuf,
    pub params: Params,
    pub grid: GridShape,
    pub energy: EnergyBreakdown,
    pub normalized_energy: f64,
    pub diagnostics: Diagnostics,
}

/// Reads a fields CSV and writes `kappa_<h>.csv`, `isoper_<h>.csv` and
/// `diagnose_<h>.json` into `out_dir`. Errors name the offending path.
pub fn diagnose(fields_path: &Path, params: &Params, config: &DiagnosticsConfig, out_dir: &Path) -> Result<DiagnoseReport> {
    let (grid, fields, _) = grid::read_field_csv::<3>(fields_path)?;
    if !fields.is_finite() {
        return Err(Error::file(fields_path, "field values are not finite"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e.to_string()))?;
    let diag = diagnostics(params, &grid, &fields, config).map_err(|e| Error::file(fields_path, e.to_string()))?;
    let problem = crate::energy::EnergyProblem::new(*params, grid.clone())?;
    let energy = problem.energy(&fields.to_flat());
    let tag = h_tag(params.h);
    let meta = format!("model={} h={} delta={} source={}", params.model, params.h, params.delta, fields_path.display());
    diag.rings.write_csv(&out_dir.join(format!("kappa_{tag}.csv")), &meta)?;

    let mut bytes = format!("# {VERSION_STAMP} {meta}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        w.write_record(["plane", "r", "lhs", "rhs", "satisfied"])?;
        let planes: Vec<usize> = match params.model {
            Model::Fvk => vec![2],
            Model::Plate => vec![0, 1, 2],
        };
        let (k0, k1) = (grid.nearest_ring(diag.window.0), grid.nearest_ring(diag.window.1));
        for c in planes {
            for rec in &curvature::isoper_rings(&grid, fields.component(c), config.slack)[k0..=k1] {
                w.write_record([c.to_string(), format!("{:e}", rec.r), format!("{:e}", rec.lhs), format!("{:e}", rec.rhs), rec.satisfied.to_string()])?;
            }
        }
        w.flush()?;
    }
    write_atomic(&out_dir.join(format!("isoper_{tag}.csv")), &bytes)?;
    let report = DiagnoseReport {
        version: VERSION_STAMP.to_string(),
        source: fields_path.to_path_buf(),
        params: *params,
        grid: grid.shape(),
        energy,
        normalized_energy: energy.normalized(params),
        diagnostics: diag,
    };
    write_json(&out_dir.join(format!("diagnose_{tag}.json")), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(h: f64, e_unit: f64) -> SweepRow {
        let delta: f64 = 0.5;
        SweepRow {
            h,
            delta,
            model: Model::Fvk,
            n_r: 8,
            n_phi: 8,
            e_total: e_unit * 2.0 * PI * delta * delta * h * h,
            e_membrane: 0.0,
            e_bending: 0.0,
            e_ansatz: 0.0,
            iterations: 0,
            grad_norm: 0.0,
            kappa_l1_dev: 0.0,
            certificate: 0.0,
            certificate_ok: true,
            error: String::new(),
        }
    }

    #[test]
    fn exact_log_law_is_fitted_exactly() {
        let rows: Vec<SweepRow> = [0.1, 0.03, 0.01, 0.003].iter().map(|&h| row(h, h.ln().abs() + 2.0)).collect();
        let fit = fit_scaling(&rows).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-10 && (fit.intercept - 2.0).abs() < 1e-10, "{fit:?}");
        assert!(fit.max_abs_residual < 1e-10);
        let flat: Vec<SweepRow> = [0.1, 0.03, 0.01].iter().map(|&h| row(h, 7.0)).collect();
        assert!(fit_scaling(&flat).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn fit_needs_three_thicknesses() {
        let rows = vec![row(0.1, 3.0), row(0.01, 5.0)];
        assert!(fit_scaling(&rows).is_err());
        let mut rows = vec![row(0.1, 3.0), row(0.01, 5.0), row(0.01, 5.0)];
        assert!(fit_scaling(&rows).is_err());
        rows.push(row(0.001, 7.0));
        rows[1].error = "failed".into();
        assert!(fit_scaling(&rows).is_ok());
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let config = ExperimentConfig::default();
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), config);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"model":"plate","h_list":[0.1,0.05],"grid":{"n_phi":32}}"#).unwrap();
        assert_eq!(partial.model, Model::Plate);
        assert_eq!(partial.grid.n_phi, 32);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"thickness":[0.1]}"#).is_err());
        let bad = ExperimentConfig {
            h_list: vec![0.01, 0.05],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            h_list: vec![1.5],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let mut rows = vec![row(0.1, 3.0), row(0.05, 4.0)];
        rows[1].error = "non-finite energy at iteration 3".into();
        rows[1].e_total = f64::NAN;
        write_sweep_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# disclab "));
        assert_eq!(text.lines().nth(1).unwrap(), SWEEP_HEADER.join(","));
        let back = read_sweep_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], rows[0]);
        assert!(back[1].e_total.is_nan() && !back[1].is_ok());
    }

    #[test]
    fn window_is_clipped_to_grid() {
        let grid = PolarGrid::new(0.01, 32, 16).unwrap();
        let d = DiagnosticsConfig::default();
        let (a, b) = d.window(0.001, &grid).unwrap();
        assert_eq!(a, 0.01);
        assert!((b - 0.995).abs() < 1e-12);
        let (a, b) = d.window(0.1, &grid).unwrap();
        assert!((a - 0.25).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
        assert!(d.window(0.3, &PolarGrid::new(0.9, 8, 16).unwrap()).is_err());
    }

    #[test]
    fn cone_diagnostics() {
        let delta = 0.5;
        let params = Params::new(0.02, delta, Model::Fvk).unwrap();
        let grid = PolarGrid::new(0.002, 97, 128).unwrap();
        let cone = grid.sample(|x| [0.0, 0.0, delta * x.norm()]);
        let d = diagnostics(&params, &grid, &cone, &DiagnosticsConfig::default()).unwrap();
        assert!(d.kappa_l1_dev < 0.01 * PI * delta * delta * (d.window.1 - d.window.0));
        assert!(d.certificate_ok);
        assert!((d.certificate - d.bending_window).abs() < 0.01 * d.bending_window);
        assert_eq!(d.isoper.satisfied, d.isoper.rings);
        assert_eq!(d.degree, Some(1));
        assert!(d.dyadic.radii.iter().all(|r| *r >= params.h));
        let interp = d.interpolation.unwrap();
        assert!(interp.identity_residual < 1e-2);
    }
}
