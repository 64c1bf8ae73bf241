//! Radially symmetric reduction of the FvK energy.
//!
//! With `u = u_r(r) x̂` and `v = v(r)` the shear strain vanishes and
//!
//! ```text
//! I = 2π∫ r dr [(2u_r′ + v′²)² + (2u_r/r + Δ²)²] + 2πh²∫ r dr [v″² + (v′/r)²].
//! ```
//!
//! The 1D grid reuses the radial nodes and stencils of the 2D grid so the two
//! discretizations differ only in the angular direction.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyBreakdown;
use crate::error::{Error, Result};
use crate::geometry::{cutoff, Params};
use crate::grid::{PolarGrid, RadialStencil, ScalarField, VectorField2};
use crate::optimize::{self, Objective, OptimizeReport, OptimizerConfig};

/// Radial displacement and deflection on the radial nodes of a polar grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialFields {
    pub r: Vec<f64>,
    pub u_r: Vec<f64>,
    pub v: Vec<f64>,
}

impl RadialFields {
    pub fn check(&self) -> Result<()> {
        let n = self.r.len();
        if self.u_r.len() != n || self.v.len() != n {
            return Err(Error::GridMismatch(format!(
                "radial fields with {} nodes, {} u_r samples, {} v samples",
                n,
                self.u_r.len(),
                self.v.len()
            )));
        }
        if n < 8 || self.r.windows(2).any(|w| !(w[1] > w[0])) || self.r[0] <= 0.0 {
            return Err(Error::InvalidParams("radial nodes must be ≥ 8, positive and increasing".into()));
        }
        if self.u_r.iter().chain(&self.v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("radial fields are not finite".into()));
        }
        Ok(())
    }

    /// The radial ansatz `u_r = −Δ²ηr/2`, `v = Δηr` with `η = η(r/h)`.
    pub fn ansatz(params: &Params, r: &[f64]) -> Self {
        let d2 = params.delta * params.delta;
        let eta: Vec<f64> = r.iter().map(|&r| cutoff(r / params.h).0).collect();
        RadialFields {
            r: r.to_vec(),
            u_r: r.iter().zip(&eta).map(|(r, e)| -0.5 * d2 * e * r).collect(),
            v: r.iter().zip(&eta).map(|(r, e)| params.delta * e * r).collect(),
        }
    }

    /// The uncut cone `u_r = −Δ²r/2`, `v = Δr`.
    pub fn cone(delta: f64, r: &[f64]) -> Self {
        RadialFields {
            r: r.to_vec(),
            u_r: r.iter().map(|r| -0.5 * delta * delta * r).collect(),
            v: r.iter().map(|r| delta * r).collect(),
        }
    }

    /// Writes `r,u_r,v` rows preceded by a version comment.
    pub fn write_csv(&self, path: &Path, meta: &str) -> Result<()> {
        use std::io::Write;
        let tmp = path.with_extension("csv.tmp");
        {
            let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            writeln!(file, "# {} {}", crate::VERSION_STAMP, meta)?;
            let mut w = csv::Writer::from_writer(file);
            w.write_record(["r", "u_r", "v"])?;
            for i in 0..self.r.len() {
                w.write_record([self.r[i], self.u_r[i], self.v[i]].map(|x| format!("{x:e}")))?;
            }
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// The 1D discrete energy as an [`Objective`] over `[u_r, v]`.
#[derive(Clone, Debug)]
pub struct RadialProblem {
    params: Params,
    r: Vec<f64>,
    /// `2π r_k w_k`.
    weights: Vec<f64>,
    d1: RadialStencil,
    d2: RadialStencil,
    precond: Vec<f64>,
}

impl RadialProblem {
    /// Shares the radial nodes of `grid`.
    pub fn new(params: Params, grid: &PolarGrid) -> Result<Self> {
        let params = Params::new(params.h, params.delta, params.model)?;
        let r = grid.radii().to_vec();
        let weights: Vec<f64> = (0..r.len()).map(|k| grid.node_weight(k) * 2.0 * PI / grid.dphi()).collect();
        let ds = grid.ds();
        let h2 = params.h * params.h;
        let per_ring: Vec<f64> = r
            .iter()
            .zip(&weights)
            .map(|(&r, &w)| 1.0 / (2.0 * w / (r * r * ds * ds) + 12.0 * h2 * w / (r.powi(4) * ds.powi(4))))
            .collect();
        let precond = per_ring.iter().chain(&per_ring).copied().collect();
        Ok(RadialProblem {
            params,
            r,
            weights,
            d1: grid.radial_first().clone(),
            d2: grid.radial_second().clone(),
            precond,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> EnergyBreakdown {
        let n = self.r.len();
        let (u, v) = x.split_at(n);
        let us = self.d1.apply_column(u);
        let vs = self.d1.apply_column(v);
        let vss = self.d2.apply_column(v);
        let d2 = self.params.delta * self.params.delta;
        let h2 = self.params.h * self.params.h;
        let (mut membrane, mut bending) = (0.0, 0.0);
        let want = grad.is_some();
        let mut sens_us = vec![0.0; if want { n } else { 0 }];
        let mut sens_u = sens_us.clone();
        let mut sens_vs = sens_us.clone();
        let mut sens_vss = sens_us.clone();
        for k in 0..n {
            let (r, w) = (self.r[k], self.weights[k]);
            let vr = vs[k] / r;
            let a = 2.0 * us[k] / r + vr * vr;
            let b = 2.0 * u[k] / r + d2;
            let vrr = (vss[k] - vs[k]) / (r * r);
            let c = vr / r;
            membrane += w * (a * a + b * b);
            bending += h2 * w * (vrr * vrr + c * c);
            if want {
                let (ga, gb) = (2.0 * w * a, 2.0 * w * b);
                let (gvrr, gc) = (2.0 * h2 * w * vrr, 2.0 * h2 * w * c);
                sens_us[k] = 2.0 * ga / r;
                sens_u[k] = 2.0 * gb / r;
                sens_vss[k] = gvrr / (r * r);
                sens_vs[k] = 2.0 * vr * ga / r - gvrr / (r * r) + gc / (r * r);
            }
        }
        if let Some(grad) = grad {
            let (gu, gv) = grad.split_at_mut(n);
            gu.copy_from_slice(&sens_u);
            gv.iter_mut().for_each(|x| *x = 0.0);
            self.d1.apply_transpose_add(&sens_us, 1, gu);
            self.d1.apply_transpose_add(&sens_vs, 1, gv);
            self.d2.apply_transpose_add(&sens_vss, 1, gv);
        }
        EnergyBreakdown::new(membrane, bending)
    }

    pub fn energy(&self, fields: &RadialFields) -> Result<EnergyBreakdown> {
        fields.check()?;
        if fields.r.len() != self.r.len() || fields.r.iter().zip(&self.r).any(|(a, b)| (a - b).abs() > 1e-12 * b) {
            return Err(Error::GridMismatch("radial fields live on different nodes".into()));
        }
        Ok(self.eval(&[fields.u_r.as_slice(), fields.v.as_slice()].concat(), None))
    }
}

impl Objective for RadialProblem {
    fn dim(&self) -> usize {
        2 * self.r.len()
    }
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad)).total
    }
    fn gauge_blocks(&self) -> Vec<Range<usize>> {
        let n = self.r.len();
        vec![n..2 * n]
    }
    fn precondition(&self, v: &mut [f64]) -> bool {
        v.iter_mut().zip(&self.precond).for_each(|(v, p)| *v *= p);
        true
    }
    fn breakdown(&self, x: &[f64]) -> Option<EnergyBreakdown> {
        Some(self.eval(x, None))
    }
}

/// Radial FvK energy of `fields` on the nodes of a log-radial grid.
pub fn radial_fvk_energy(fields: &RadialFields, params: &Params) -> Result<EnergyBreakdown> {
    fields.check()?;
    let n = fields.r.len();
    let grid = PolarGrid::new(fields.r[0], n, 8)?;
    let problem = RadialProblem::new(*params, &grid)?;
    problem.energy(fields)
}

/// Upper bound on the stagnation tolerance and lower bound on the iteration
/// budget of the radial solve; both are stricter than the 2D defaults.
const RADIAL_ENERGY_REL_TOL: f64 = 1e-13;
const RADIAL_MIN_ITERS: usize = 50_000;

/// Minimizes the radial energy from the radial ansatz on the radial nodes of `grid`.
pub fn radial_minimize(
    params: &Params,
    grid: &PolarGrid,
    config: &OptimizerConfig,
) -> Result<(RadialFields, EnergyBreakdown, OptimizeReport)> {
    let problem = RadialProblem::new(*params, grid)?;
    let start = RadialFields::ansatz(params, problem.radii());
    let x0 = [start.u_r.as_slice(), start.v.as_slice()].concat();
    let config = OptimizerConfig {
        energy_rel_tol: config.energy_rel_tol.min(RADIAL_ENERGY_REL_TOL),
        max_iters: config.max_iters.max(RADIAL_MIN_ITERS),
        ..config.scaled_for(params.h)
    };
    let n = problem.radii().len();
    let s: Vec<f64> = problem.radii().iter().map(|r| r.ln()).collect();
    let amp = config.perturbation_amplitude * params.delta;
    let (x, report) = optimize::minimize_with_restarts(&problem, &x0, &config, |i| {
        // smooth bumps in log r
        let f = i as f64;
        (0..2 * n)
            .map(|m| amp * (f * 0.7 * s[m % n] + f).sin() * if m < n { params.delta } else { 1.0 })
            .collect()
    })?;
    let fields = RadialFields {
        r: problem.radii().to_vec(),
        u_r: x[..n].to_vec(),
        v: x[n..].to_vec(),
    };
    let energy = problem.eval(&x, None);
    Ok((fields, energy, report))
}

/// Local cubic interpolation in `log r` through the four nearest nodes.
fn cubic_in_log(s_nodes: &[f64], values: &[f64], s: f64) -> f64 {
    let n = s_nodes.len();
    let ds = (s_nodes[n - 1] - s_nodes[0]) / (n - 1) as f64;
    let pos = ((s - s_nodes[0]) / ds).clamp(0.0, (n - 1) as f64);
    let k = pos.round() as usize;
    if (pos - k as f64).abs() < 1e-12 {
        return values[k];
    }
    let start = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut total = 0.0;
    for i in start..start + 4 {
        let mut l = 1.0;
        for m in start..start + 4 {
            if m != i {
                l *= (s - s_nodes[m]) / (s_nodes[i] - s_nodes[m]);
            }
        }
        total += l * values[i];
    }
    total
}

/// Lifts radial fields to `u = u_r(|x|) x̂`, `v = v(|x|)` on a 2D grid.
pub fn lift_to_2d(fields: &RadialFields, grid: &PolarGrid) -> Result<(VectorField2, ScalarField)> {
    fields.check()?;
    let (lo, hi) = (fields.r[0], fields.r[fields.r.len() - 1]);
    let (glo, ghi) = (grid.radii()[0], grid.radii()[grid.n_r() - 1]);
    if glo < lo * (1.0 - 1e-12) || ghi > hi * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "2D grid spans [{glo}, {ghi}], radial fields only [{lo}, {hi}]"
        )));
    }
    let s: Vec<f64> = fields.r.iter().map(|r| r.ln()).collect();
    let mut u = VectorField2::zeros(grid);
    let mut v = ScalarField::zeros(grid);
    for k in 0..grid.n_r() {
        let sk = grid.radii()[k].ln();
        let ur = cubic_in_log(&s, &fields.u_r, sk);
        let vk = cubic_in_log(&s, &fields.v, sk);
        for j in 0..grid.n_phi() {
            let n = grid.index(k, j);
            u.component_mut(0)[n] = ur * grid.cos(j);
            u.component_mut(1)[n] = ur * grid.sin(j);
            v.component_mut(0)[n] = vk;
        }
    }
    Ok((u, v))
}
