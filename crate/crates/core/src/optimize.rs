//! Limited-memory quasi-Newton minimization with Armijo backtracking.

use std::collections::VecDeque;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyBreakdown, EnergyProblem};
use crate::error::{Error, Result};
use crate::geometry::{Model, Params};
use crate::grid::{Field, GridPolicy, PolarGrid};

/// A smooth function with gradient over `ℝⁿ`.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the value.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Index ranges whose constant shifts leave the objective unchanged; search
    /// directions are kept mean-free on each.
    fn gauge_blocks(&self) -> Vec<Range<usize>> {
        Vec::new()
    }

    /// Applies an estimate of the inverse Hessian in place, used to seed each
    /// quasi-Newton step. Returns `false` if the objective has none.
    fn precondition(&self, _v: &mut [f64]) -> bool {
        false
    }

    fn breakdown(&self, _x: &[f64]) -> Option<EnergyBreakdown> {
        None
    }
}

/// Adapter turning a closure into an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnObjective { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Sup-norm gradient tolerance.
    pub grad_tol: f64,
    /// Stop when the energy drops by less than this fraction over 50 iterations.
    pub energy_rel_tol: f64,
    pub lbfgs_memory: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Extra perturbed starts besides the unperturbed one.
    pub restarts: usize,
    pub perturbation_amplitude: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 5000,
            grad_tol: 1e-12,
            energy_rel_tol: 1e-8,
            lbfgs_memory: 12,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            restarts: 3,
            perturbation_amplitude: 0.01,
            seed: 0,
        }
    }
}

/// Number of iterations over which stagnation is measured.
const STAGNATION_WINDOW: usize = 50;

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(format!("optimizer: {m}")));
        if self.max_iters == 0 || self.lbfgs_memory == 0 || self.max_backtracks == 0 {
            return bad("max_iters, lbfgs_memory and max_backtracks must be positive");
        }
        if !(self.grad_tol > 0.0 && self.energy_rel_tol > 0.0 && self.perturbation_amplitude > 0.0) {
            return bad("tolerances and perturbation amplitude must be positive");
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 0.5) {
            return bad("armijo_c1 must lie in (0, 0.5)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        Ok(())
    }

    /// Gradient tolerance scaled with `h²`, matching the energy scale `h²|log h|`.
    pub fn scaled_for(&self, h: f64) -> Self {
        OptimizerConfig {
            grad_tol: self.grad_tol * h * h,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    EnergyStagnation,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub energy: f64,
    pub breakdown: Option<EnergyBreakdown>,
    pub grad_norm: f64,
    pub termination: Termination,
    pub energy_history: Vec<f64>,
    /// Which start produced this result: 0 is unperturbed, `i > 0` the i-th restart.
    pub start: usize,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_means(v: &mut [f64], blocks: &[Range<usize>]) {
    for b in blocks {
        let m = v[b.clone()].iter().sum::<f64>() / b.len() as f64;
        v[b.clone()].iter_mut().for_each(|x| *x -= m);
    }
}

/// Minimizes `obj` from `x0` with preconditioned L-BFGS.
pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], config: &OptimizerConfig) -> Result<(Vec<f64>, OptimizeReport)> {
    config.validate()?;
    let n = obj.dim();
    if x0.len() != n {
        return Err(Error::InvalidParams(format!("start has length {}, objective dimension {n}", x0.len())));
    }
    if x0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParams("start point is not finite".into()));
    }
    let blocks = obj.gauge_blocks();
    let precond = obj.precondition(&mut vec![0.0; n]);
    let mut x = x0.to_vec();
    remove_means(&mut x, &blocks);
    let mut g = vec![0.0; n];
    let mut f = obj.evaluate(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() {
        return Err(Error::NonFinite { what: "energy", iteration: 0 });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "gradient", iteration: 0 });
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut energies = vec![f];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; config.lbfgs_memory];
    let mut iter = 0;
    let termination = loop {
        if sup_norm(&g) <= config.grad_tol {
            break Termination::GradientTolerance;
        }
        if iter >= config.max_iters {
            break Termination::MaxIterations;
        }
        if energies.len() > STAGNATION_WINDOW {
            let old = energies[energies.len() - 1 - STAGNATION_WINDOW];
            if old - f <= config.energy_rel_tol * f.abs() {
                break Termination::EnergyStagnation;
            }
        }

        let mut d = two_loop(obj, &g, &history, &mut alpha);
        remove_means(&mut d, &blocks);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = two_loop(obj, &g, &history, &mut alpha);
            remove_means(&mut d, &blocks);
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                break Termination::LineSearchFailure;
            }
        }

        let mut t = if history.is_empty() && !precond {
            1.0 / dot(&g, &g).sqrt()
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + t * d[i];
            }
            let f_try = obj.evaluate(&x_new, &mut g_new);
            evaluations += 1;
            if f_try.is_finite() && f_try <= f + config.armijo_c1 * t * slope {
                accepted = Some(f_try);
                break;
            }
            t *= config.backtrack;
        }
        let Some(f_next) = accepted else {
            break Termination::LineSearchFailure;
        };
        iter += 1;
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "gradient", iteration: iter });
        }
        assert!(f_next <= f, "accepted step increased the energy");

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == config.lbfgs_memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_next;
        energies.push(f);
    };

    let report = OptimizeReport {
        iterations: iter,
        evaluations,
        energy: f,
        breakdown: obj.breakdown(&x),
        grad_norm: sup_norm(&g),
        termination,
        energy_history: energies,
        start: 0,
    };
    Ok((x, report))
}

/// L-BFGS two-loop recursion returning the search direction `−H g`.
fn two_loop<O: Objective + ?Sized>(obj: &O, g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, alpha: &mut [f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    for (i, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alpha[i] = a;
        q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
    }
    let apply_p = |v: &mut [f64]| {
        obj.precondition(v);
    };
    if let Some((s, y, _)) = history.back() {
        let mut py = y.clone();
        apply_p(&mut py);
        let gamma = dot(s, y) / dot(y, &py);
        apply_p(&mut q);
        q.iter_mut().for_each(|v| *v *= gamma);
    } else {
        apply_p(&mut q);
    }
    for (i, (s, y, rho)) in history.iter().enumerate() {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(q, s)| *q += (alpha[i] - b) * s);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Runs [`minimize`] from `x0` and from `config.restarts` perturbed copies of it,
/// keeping the lowest final energy. `perturb(i)` returns the additive perturbation
/// for restart `i ≥ 1`.
pub fn minimize_with_restarts<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    config: &OptimizerConfig,
    perturb: impl Fn(usize) -> Vec<f64>,
) -> Result<(Vec<f64>, OptimizeReport)> {
    let mut best = minimize(obj, x0, config)?;
    for i in 1..=config.restarts {
        let dx = perturb(i);
        let start: Vec<f64> = x0.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let (x, mut report) = minimize(obj, &start, config)?;
        if report.energy < best.1.energy {
            report.start = i;
            best = (x, report);
        }
    }
    Ok(best)
}

/// Central-difference check of `obj`'s gradient along random unit directions.
/// Returns, over steps `{1e-4, 1e-5, 1e-6}`, the smallest of the per-step
/// maximal relative errors.
pub fn gradient_check<O: Objective + ?Sized>(obj: &O, x: &[f64], n_directions: usize, seed: u64) -> f64 {
    let n = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grad = vec![0.0; n];
    obj.evaluate(x, &mut grad);
    let dirs: Vec<Vec<f64>> = (0..n_directions)
        .map(|_| {
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dot(&d, &d).sqrt();
            d.into_iter().map(|v| v / norm).collect()
        })
        .collect();
    let mut scratch = vec![0.0; n];
    let mut xs = vec![0.0; n];
    let mut best = f64::INFINITY;
    for step in [1e-4, 1e-5, 1e-6] {
        let mut worst = 0.0f64;
        for d in &dirs {
            let an = dot(&grad, d);
            xs.iter_mut().zip(x).zip(d).for_each(|((o, x), d)| *o = x + step * d);
            let fp = obj.evaluate(&xs, &mut scratch);
            xs.iter_mut().zip(x).zip(d).for_each(|((o, x), d)| *o = x - step * d);
            let fm = obj.evaluate(&xs, &mut scratch);
            let fd = (fp - fm) / (2.0 * step);
            let scale = an.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((fd - an).abs() / scale);
        }
        best = best.min(worst);
    }
    best
}

/// How the minimization at one thickness was started.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Ansatz,
    /// The previous minimizer resampled onto this grid.
    WarmStart,
}

/// Result of minimizing at one thickness.
#[derive(Clone, Debug)]
pub struct Solution {
    pub params: Params,
    pub grid: PolarGrid,
    pub x: Vec<f64>,
    pub ansatz_energy: EnergyBreakdown,
    pub start_kind: StartKind,
    pub report: OptimizeReport,
}

impl Solution {
    pub fn problem(&self) -> Result<EnergyProblem> {
        EnergyProblem::new(self.params, self.grid.clone())
    }

    /// The unknowns as three planes (`u₁, u₂, v` or `y₁, y₂, y₃`).
    pub fn fields(&self) -> Result<Field<3>> {
        Field::from_flat(&self.grid, &self.x)
    }
}

/// Minimizes at a single thickness from `start` (ansatz if `None`), with restarts.
pub fn solve(params: Params, grid: PolarGrid, start: Option<Vec<f64>>, config: &OptimizerConfig) -> Result<Solution> {
    let problem = EnergyProblem::new(params, grid.clone())?;
    let ansatz = problem.ansatz()?;
    let ansatz_energy = problem.energy(&ansatz);
    let (x0, start_kind) = match start {
        Some(s) if problem.energy(&s).total < ansatz_energy.total => (s, StartKind::WarmStart),
        _ => (ansatz, StartKind::Ansatz),
    };
    let problem = match start_kind {
        StartKind::WarmStart => problem.with_reference(&x0),
        StartKind::Ansatz => problem,
    };
    let config = config.scaled_for(params.h);
    let amp = config.perturbation_amplitude * params.delta;
    let (mut x, mut report) = minimize_refreshing(&problem, &x0, &config)?;
    let restart = |i: usize| {
        let dx = problem.perturbation(config.seed.wrapping_mul(1000).wrapping_add(i as u64), amp);
        let start: Vec<f64> = x0.iter().zip(&dx).map(|(a, b)| a + b).collect();
        minimize_refreshing(&problem, &start, &config)
    };
    let restarts = run_independent(config.restarts, restart);
    for (i, restart) in restarts.into_iter().enumerate() {
        let (xi, mut ri) = restart?;
        if ri.energy < report.energy {
            ri.start = i + 1;
            (x, report) = (xi, ri);
        }
    }
    Ok(Solution {
        params,
        grid,
        x,
        ansatz_energy,
        start_kind,
        report,
    })
}

/// Evaluates `job(1..=count)`, concurrently where threads are available. The
/// results come back in job order, so the outcome does not depend on scheduling.
fn run_independent<T: Send>(count: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if cfg!(target_arch = "wasm32") || count < 2 {
        return (1..=count).map(job).collect();
    }
    std::thread::scope(|scope| {
        let job = &job;
        let handles: Vec<_> = (1..=count).map(|i| scope.spawn(move || job(i))).collect();
        handles.into_iter().map(|h| h.join().expect("restart thread panicked")).collect()
    })
}

/// Iterations between rebuilds of the preconditioner about the current iterate.
const REFERENCE_REFRESH: usize = 200;

/// [`minimize`] in stages of [`REFERENCE_REFRESH`] iterations, rebuilding the
/// preconditioner about the current iterate between stages. The minimizer can
/// move far from the start near the core, where a fixed linearization degrades.
fn minimize_refreshing(problem: &EnergyProblem, x0: &[f64], config: &OptimizerConfig) -> Result<(Vec<f64>, OptimizeReport)> {
    let mut current = problem.clone().with_reference(x0);
    let (mut x, mut total) = minimize(&current, x0, &OptimizerConfig { max_iters: REFERENCE_REFRESH.min(config.max_iters), ..config.clone() })?;
    while total.termination == Termination::MaxIterations && total.iterations < config.max_iters {
        current = current.with_reference(&x);
        let stage = OptimizerConfig {
            max_iters: REFERENCE_REFRESH.min(config.max_iters - total.iterations),
            ..config.clone()
        };
        let (next, report) = minimize(&current, &x, &stage)?;
        x = next;
        total.iterations += report.iterations;
        total.evaluations += report.evaluations;
        total.energy = report.energy;
        total.breakdown = report.breakdown;
        total.grad_norm = report.grad_norm;
        total.termination = report.termination;
        total.energy_history.extend_from_slice(&report.energy_history[1..]);
    }
    Ok((x, total))
}

/// Warm start for `to`: the minimizer of `from` resampled onto the new grid.
pub fn warm_start(from: &Solution, grid: &PolarGrid) -> Result<Vec<f64>> {
    Ok(from.fields()?.resample(&from.grid, grid)?.to_flat())
}

/// Minimizes along a strictly decreasing list of thicknesses, warm-starting each
/// from the previous minimizer. Failures at one thickness are returned in place
/// and do not stop the sweep.
pub fn continuation(
    h_list: &[f64],
    delta: f64,
    model: Model,
    policy: &GridPolicy,
    config: &OptimizerConfig,
) -> Result<Vec<(f64, Result<Solution>)>> {
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParams("h_list must be strictly decreasing".into()));
    }
    let mut out: Vec<(f64, Result<Solution>)> = Vec::with_capacity(h_list.len());
    let mut previous: Option<Solution> = None;
    for &h in h_list {
        let step = (|| {
            let params = Params::new(h, delta, model)?;
            let grid = policy.grid(h)?;
            let start = match &previous {
                Some(prev) => Some(warm_start(prev, &grid)?),
                None => None,
            };
            solve(params, grid, start, config)
        })();
        if let Ok(sol) = &step {
            previous = Some(sol.clone());
        }
        out.push((h, step));
    }
    Ok(out)
}
