//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Built with `harness = false` so the report is always visible in the test
//! output. The FvK continuation sweep is shared by criteria 4 to 8.

use std::f64::consts::PI;
use std::process::ExitCode;

use disclab::curvature::{self, DEFAULT_SLACK};
use disclab::energy::{self, EnergyProblem, Kl3dQuadrature};
use disclab::grid::GridPolicy;
use disclab::harness::{self, Diagnostics, DiagnosticsConfig, ExperimentConfig, SweepResult};
use disclab::optimize::{gradient_check, OptimizerConfig};
use disclab::radial;
use disclab::{Map3, Model, Params, PolarGrid, ScalarField};

const DELTA: f64 = 0.5;
const SWEEP_H: [f64; 4] = [0.05, 0.02, 0.01, 0.005];
const PLATE_H: [f64; 2] = [0.05, 0.01];
const ANSATZ_H: [f64; 4] = [0.1, 0.03, 0.01, 0.003];
const KL3D_H: [f64; 3] = [0.1, 0.03, 0.01];

const GRADIENT_TOL: f64 = 1e-6;
const CONE_KAPPA_TOL: f64 = 0.01;
const CONSTANT_BAND: f64 = 5.0;
const REFINEMENT_TOL: f64 = 0.02;
const SLOPE_BAND: (f64, f64) = (0.7, 1.1);
const EQUALITY_TOL: f64 = 0.01;
const IDENTITY_ORDER: f64 = 1.9;
const DEVIATION_RATIO: f64 = 2.0;
const RADIAL_BELOW_TOL: f64 = 0.02;
const LIFT_TOL: f64 = 0.01;
const KL3D_BAND: f64 = 2.0;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("criterion {id:<3} {}  {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn note(&self, text: String) {
        println!("              {text}");
    }
}

fn unit(p: &Params) -> f64 {
    p.energy_unit()
}

fn cone_field(grid: &PolarGrid, delta: f64) -> ScalarField {
    grid.sample(|x| [delta * x.norm()])
}

fn sweep_config(model: Model, h_list: &[f64], out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        model,
        delta: DELTA,
        h_list: h_list.to_vec(),
        // One unperturbed start per thickness, warm-started from the previous one.
        optimizer: OptimizerConfig {
            restarts: 0,
            ..OptimizerConfig::default()
        },
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn two_point_slope(h: [f64; 2], e: [f64; 2]) -> f64 {
    (e[1] - e[0]) / (h[1].ln().abs() - h[0].ln().abs())
}

/// Ansatz energy sampled on `grid`, without building a minimization problem.
fn ansatz_energy(params: &Params, grid: &PolarGrid) -> f64 {
    match params.model {
        Model::Fvk => {
            let (u, v) = energy::sample_fvk_ansatz(params, grid).expect("fvk ansatz");
            energy::fvk_energy(&u, &v, params, grid).expect("fvk energy").total
        }
        Model::Plate => {
            let y = energy::sample_plate_ansatz(params, grid).expect("plate ansatz");
            energy::plate_energy(&y, params, grid).expect("plate energy").total
        }
    }
}

fn refined(policy: &GridPolicy, factor: f64) -> GridPolicy {
    GridPolicy {
        nodes_per_decade: policy.nodes_per_decade * factor,
        max_n_r: (policy.max_n_r as f64 * factor) as usize,
        n_phi: (policy.n_phi as f64 * factor) as usize,
        ..policy.clone()
    }
}

fn gradient(report: &mut Report) {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for model in [Model::Fvk, Model::Plate] {
        let params = Params::new(0.05, DELTA, model).unwrap();
        let grid = PolarGrid::new(0.005, 64, 64).unwrap();
        let problem = EnergyProblem::new(params, grid).unwrap();
        let x: Vec<f64> = problem
            .ansatz()
            .unwrap()
            .iter()
            .zip(problem.perturbation(7, 0.05 * DELTA))
            .map(|(a, b)| a + b)
            .collect();
        let err = gradient_check(&problem, &x, 8, 11);
        worst = worst.max(err);
        parts.push(format!("{}={err:.1e}", model.as_str()));
    }
    report.line("1", worst < GRADIENT_TOL, format!("gradient check 64x64: {} (tol {GRADIENT_TOL:.0e})", parts.join(" ")));
}

/// Cone fields of criterion 2 with their diagnostics, for criteria 5 and 6.
fn cone_curvature(report: &mut Report) -> Vec<(ScalarField, PolarGrid, f64)> {
    let grid = PolarGrid::new(0.005, 160, 256).unwrap();
    let radii = curvature::dyadic_radii(0.05, 0.05, 0.8);
    let mut worst = 0.0f64;
    let mut fields = Vec::new();
    for delta in [0.3, 0.6] {
        let v = cone_field(&grid, delta);
        let target = PI * delta * delta;
        let profile = curvature::kappa_fvk(&v, &grid, &radii, target).unwrap();
        for k in &profile.kappa {
            worst = worst.max((k / target - 1.0).abs());
        }
        fields.push((v, grid.clone(), delta));
    }
    report.line(
        "2",
        worst < CONE_KAPPA_TOL && radii.len() == 5,
        format!("cone kappa at {} dyadic radii, delta 0.3 and 0.6: max rel error {worst:.2e} (tol {CONE_KAPPA_TOL})", radii.len()),
    );
    fields
}

/// Ansatz states of criterion 3, for criteria 5 and 6.
fn ansatz_constants(report: &mut Report) -> Vec<(Params, PolarGrid, Map3)> {
    let policy = GridPolicy::default();
    let mut states = Vec::new();
    let mut in_band = true;
    let mut max_spread = 0.0f64;
    let mut quad_ok = true;
    let mut worst_refine = 0.0f64;
    for model in [Model::Fvk, Model::Plate] {
        let mut constants = Vec::new();
        for h in ANSATZ_H {
            let params = Params::new(h, DELTA, model).unwrap();
            let grid = policy.grid(h).unwrap();
            let e = ansatz_energy(&params, &grid);
            let e2 = ansatz_energy(&params, &refined(&policy, 2.0).grid(h).unwrap());
            let e4 = ansatz_energy(&params, &refined(&policy, 4.0).grid(h).unwrap());
            let exact = energy::ansatz_energy_exact(&params, grid.r_min()).unwrap().total;
            let c = e / unit(&params) - h.ln().abs();
            let c4 = e4 / unit(&params) - h.ln().abs();
            worst_refine = worst_refine.max(((e4 - e2) / e4).abs());
            quad_ok &= ((e4 - exact) / exact).abs() < REFINEMENT_TOL;
            in_band &= c.abs() <= CONSTANT_BAND;
            constants.push(c4);
            let y = match model {
                Model::Fvk => {
                    let (u, v) = energy::sample_fvk_ansatz(&params, &grid).unwrap();
                    Map3::from_components(&grid, [u.component(0).to_vec(), u.component(1).to_vec(), v.values().to_vec()]).unwrap()
                }
                Model::Plate => energy::sample_plate_ansatz(&params, &grid).unwrap(),
            };
            states.push((params, grid, y));
        }
        let (lo, hi) = constants.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
        max_spread = max_spread.max(hi - lo);
        report.note(format!(
            "{} ansatz constant E/(2 pi delta^2 h^2) - |log h| over h = {ANSATZ_H:?}: {}",
            model.as_str(),
            constants.iter().map(|c| format!("{c:.2}")).collect::<Vec<_>>().join(", ")
        ));
    }
    report.note(format!(
        "constants drift with h by at most {:.2} per model (quadrature agreement within {REFINEMENT_TOL}: {quad_ok})",
        max_spread
    ));
    report.line(
        "3",
        in_band && worst_refine < REFINEMENT_TOL,
        format!(
            "ansatz constant within [-{CONSTANT_BAND}, {CONSTANT_BAND}]: {in_band}; refinement change 2x -> 4x {worst_refine:.2e} (tol {REFINEMENT_TOL})"
        ),
    );
    states
}

fn isoper_ok(d: &Diagnostics) -> bool {
    d.isoper.satisfied == d.isoper.rings
}

fn cone_diagnostics(fields: &[(ScalarField, PolarGrid, f64)]) -> Vec<(Diagnostics, f64)> {
    fields
        .iter()
        .map(|(v, grid, delta)| {
            let params = Params::new(0.01, *delta, Model::Fvk).unwrap();
            let x = Map3::from_components(grid, [vec![0.0; grid.len()], vec![0.0; grid.len()], v.values().to_vec()]).unwrap();
            (harness::diagnostics(&params, grid, &x, &DiagnosticsConfig::default()).unwrap(), *delta)
        })
        .collect()
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    let out = tempfile::tempdir().expect("temporary directory");

    gradient(&mut report);
    let cones = cone_curvature(&mut report);
    let ansatz_states = ansatz_constants(&mut report);

    // Criterion 4: continuation sweep and plate spot check.
    let fvk: SweepResult = harness::run_sweep(&sweep_config(Model::Fvk, &SWEEP_H, &out.path().join("fvk"))).expect("fvk sweep");
    let plate: SweepResult = harness::run_sweep(&sweep_config(Model::Plate, &PLATE_H, &out.path().join("plate"))).expect("plate sweep");
    let all_ok = fvk.rows.iter().chain(&plate.rows).all(|r| r.is_ok());
    for row in fvk.rows.iter().chain(&plate.rows) {
        let p = Params::new(row.h, row.delta, row.model).unwrap();
        report.note(format!(
            "{} h={}: E/unit {:.5}, ansatz/unit {:.3}, iterations {} {}",
            row.model.as_str(),
            row.h,
            row.e_total / unit(&p),
            row.e_ansatz / unit(&p),
            row.iterations,
            row.error
        ));
    }
    let descent = fvk.rows.iter().chain(&plate.rows).all(|r| r.e_total <= r.e_ansatz);
    let fit = harness::fit_scaling(&fvk.rows);
    let slope = fit.as_ref().map(|f| f.slope).unwrap_or(f64::NAN);
    let plate_slope = if plate.rows.iter().all(|r| r.is_ok()) {
        let e: Vec<f64> = plate.rows.iter().map(|r| r.e_total / unit(&Params::new(r.h, r.delta, r.model).unwrap())).collect();
        two_point_slope(PLATE_H, [e[0], e[1]])
    } else {
        f64::NAN
    };
    let band = |s: f64| s >= SLOPE_BAND.0 && s <= SLOPE_BAND.1;
    report.line(
        "4",
        all_ok && descent && band(slope) && band(plate_slope),
        format!(
            "fvk slope {slope:.3}, plate slope {plate_slope:.3} (band {SLOPE_BAND:?}), every E_min <= E_ansatz: {descent}"
        ),
    );
    if let Ok(f) = &fit {
        report.note(format!("fvk intercept {:.3}, max residual {:.2e}", f.intercept, f.max_abs_residual));
    }

    // Criteria 5 and 6 over every field produced above.
    let cone_diag = cone_diagnostics(&cones);
    let ansatz_diag: Vec<Diagnostics> = ansatz_states
        .iter()
        .map(|(p, g, y)| harness::diagnostics(p, g, y, &DiagnosticsConfig::default()).unwrap())
        .collect();
    let minimizer_diag: Vec<&Diagnostics> = fvk.diagnostics.iter().chain(&plate.diagnostics).collect();
    let every: Vec<&Diagnostics> = cone_diag.iter().map(|(d, _)| d).chain(&ansatz_diag).chain(minimizer_diag.iter().copied()).collect();
    let iso_all = every.iter().all(|d| isoper_ok(d));
    let rings: usize = every.iter().map(|d| d.isoper.rings).sum();

    let grid = PolarGrid::new(0.005, 160, 256).unwrap();
    let r_test = 0.4;
    let paraboloid = grid.sample(|x| [0.7 * x.norm_squared()]);
    let p_rec = curvature::isoper_check(&paraboloid, &grid, r_test, DEFAULT_SLACK).unwrap();
    let c_rec = curvature::isoper_check(&cone_field(&grid, DELTA), &grid, r_test, DEFAULT_SLACK).unwrap();
    let eq = |lhs: f64, rhs: f64| (lhs / rhs - 1.0).abs();
    let (p_eq, c_eq) = (eq(p_rec.lhs, p_rec.rhs), eq(c_rec.lhs, c_rec.rhs));
    report.line(
        "5",
        iso_all && p_eq < EQUALITY_TOL && c_eq < EQUALITY_TOL,
        format!(
            "isoperimetric check on {rings} rings of {} fields: all satisfied {iso_all}; equality paraboloid {p_eq:.1e}, cone {c_eq:.1e} (tol {EQUALITY_TOL})",
            every.len()
        ),
    );

    let cert_all = every.iter().all(|d| d.certificate_ok);
    let saturation = cone_diag
        .iter()
        .map(|(d, _)| (d.certificate / d.bending_window - 1.0).abs())
        .fold(0.0f64, f64::max);
    report.line(
        "6",
        cert_all && saturation < EQUALITY_TOL,
        format!("certificate <= bending (slack {DEFAULT_SLACK}) on {} fields: {cert_all}; cone saturation {saturation:.1e} (tol {EQUALITY_TOL})", every.len()),
    );

    // Criterion 7: identity residual order and the deviation trend h -> h/4.
    let order = identity_order();
    let dev = |i: usize| -> f64 {
        let sol = &fvk.solutions[i];
        let (a, b) = (6.0 * sol.params.h, 0.5);
        let radii: Vec<f64> = (0..=200).map(|k| a * (b / a).powf(k as f64 / 200.0)).collect();
        let (_, v) = curvature::split_fvk(&sol.fields().unwrap(), &sol.grid).unwrap();
        let profile = curvature::kappa_fvk(&v, &sol.grid, &radii, sol.params.kappa_target()).unwrap();
        curvature::l1_deviation(&profile, a, b).unwrap()
    };
    let (dev_coarse, dev_fine) = if fvk.solutions.len() == SWEEP_H.len() { (dev(1), dev(3)) } else { (f64::NAN, f64::NAN) };
    let ratio = dev_coarse / dev_fine;
    report.line(
        "7",
        order >= IDENTITY_ORDER && ratio >= DEVIATION_RATIO / 2.0 && ratio <= DEVIATION_RATIO * 2.0,
        format!(
            "identity residual order {order:.2} (min {IDENTITY_ORDER}); kappa L1 deviation on (6h, 0.5) h=0.02 -> 0.005: {dev_coarse:.3e} -> {dev_fine:.3e}, ratio {ratio:.2} (target 2 within factor 2)"
        ),
    );

    // Criterion 8: radial reduction against the 2D minimizer at h = 0.02.
    let (radial_ok, radial_detail) = radial_consistency(&fvk);
    report.line("8", radial_ok, radial_detail);

    // Criterion 9: three-dimensional energy of the Kirchhoff-Love extension.
    let ratios: Vec<f64> = KL3D_H
        .iter()
        .map(|&h| {
            let p = Params::new(h, DELTA, Model::Plate).unwrap();
            energy::kl3d_energy(&p, &Kl3dQuadrature::default()).unwrap() / (h * h * h.ln().abs())
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
    report.line(
        "9",
        lo > 0.0 && hi / lo <= KL3D_BAND,
        format!("kl3d/(h^2 |log h|) over h = {KL3D_H:?}: {ratios:.3?}, max/min {:.3} (band {KL3D_BAND})", hi / lo),
    );

    // Criterion 10: constants are reported, never asserted.
    let intercept = fit.as_ref().map(|f| f.intercept).unwrap_or(f64::NAN);
    report.line(
        "10",
        intercept.is_finite(),
        format!("additive constants reported only: fvk intercept {intercept:.3}; bounds covered by criteria 4 and 7"),
    );

    println!("acceptance: {} failing criteria", report.failures);
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Convergence order of the interpolation identity residual for a smooth pair
/// `(u, v)` under doubling of both grid directions.
fn identity_order() -> f64 {
    let residual = |n_r: usize, n_phi: usize| {
        let grid = PolarGrid::new(0.05, n_r, n_phi).unwrap();
        let u = grid.sample(|x| [0.1 * x.x * x.y + 0.05 * x.x.powi(3), -0.08 * x.x * x.x + 0.03 * x.y.powi(3)]);
        let v = grid.sample(|x| [0.3 * x.x * x.x - 0.2 * x.x * x.y + 0.1 * x.y.powi(3) + 0.05 * (2.0 * x.x).sin()]);
        curvature::interpolation_on(&u, &v, DELTA, &grid, 0.1, 0.8).unwrap().identity_residual
    };
    let coarse = residual(81, 128);
    let fine = residual(161, 256);
    (coarse / fine).log2()
}

fn radial_consistency(fvk: &SweepResult) -> (bool, String) {
    let h = SWEEP_H[1];
    let Some(sol) = fvk.solutions.iter().find(|s| s.params.h == h) else {
        return (false, format!("no 2D minimizer at h = {h}"));
    };
    let params = sol.params;
    let (fields, radial_e, _) = radial::radial_minimize(&params, &sol.grid, &OptimizerConfig::default()).unwrap();
    let two_d = sol.report.energy;
    let (u, v) = radial::lift_to_2d(&fields, &sol.grid).unwrap();
    let lifted = energy::fvk_energy(&u, &v, &params, &sol.grid).unwrap().total;
    let below = (two_d - radial_e.total) / two_d;
    let lift = ((lifted - radial_e.total) / radial_e.total).abs();
    (
        below <= RADIAL_BELOW_TOL && lift < LIFT_TOL,
        format!(
            "h={h}: radial E/unit {:.5} vs 2D {:.5} (radial may undercut by at most {RADIAL_BELOW_TOL}); lifted energy mismatch {lift:.2e} (tol {LIFT_TOL})",
            radial_e.total / unit(&params),
            two_d / unit(&params)
        ),
    )
}
