//! Discrete plate, Föppl–von Kármán and three-dimensional energies.
//!
//! The 2D energies are quadrature sums `Σ w_n f(derivatives at n)` on a
//! [`PolarGrid`]; their gradients are the exact gradients of those sums,
//! assembled by pushing `w ∂f/∂d` back through the transposed stencils.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{Matrix3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, FvkJet, Params, PlateJet};
use crate::grid::{derivatives_transpose_add, polar_hessian, Field, Map3, PlaneDerivatives, PolarGrid, ScalarField, VectorField2};
use crate::optimize::Objective;
use crate::precond::SpectralPreconditioner;

/// Membrane and bending parts of an energy evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub membrane: f64,
    pub bending: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(membrane: f64, bending: f64) -> Self {
        EnergyBreakdown {
            membrane,
            bending,
            total: membrane + bending,
        }
    }

    /// `total / (2πΔ²h²)`, the quantity compared against `|log h|`.
    pub fn normalized(&self, params: &Params) -> f64 {
        self.total / params.energy_unit()
    }
}

/// Pointwise FvK densities `(|2 sym Du + Dv⊗Dv + Δ² x̂⊥⊗x̂⊥|², |D²v|²)` from exact derivatives.
pub fn fvk_density(jet: &FvkJet, x: Vector2<f64>, delta: f64) -> (f64, f64) {
    (jet.strain(x, delta).norm_squared(), jet.d2v.norm_squared())
}

/// Pointwise plate densities `(|DyᵀDy − g_Δ|², |D²y|²)` from exact derivatives.
pub fn plate_density(jet: &PlateJet, x: Vector2<f64>, delta: f64) -> Result<(f64, f64)> {
    let g = geometry::reference_metric(x, delta)?;
    Ok(((jet.metric() - g).norm_squared(), jet.hessian_norm_squared()))
}

/// `|D²f|²` at every node of a scalar plane.
pub fn hessian_norm_density(grid: &PolarGrid, f: &[f64]) -> Vec<f64> {
    let d = PlaneDerivatives::full(grid, f);
    let mut out = vec![0.0; grid.len()];
    for k in 0..grid.n_r() {
        let r = grid.radii()[k];
        for j in 0..grid.n_phi() {
            let n = grid.index(k, j);
            let (a, b, c) = polar_hessian(&d, n, r);
            out[n] = a * a + 2.0 * b * b + c * c;
        }
    }
    out
}

/// Adds the bending term `scale Σ w |D²f|²` of one plane; returns its value and
/// accumulates the gradient into `grad` if given.
fn bending_plane(grid: &PolarGrid, f: &[f64], scale: f64, grad: Option<&mut [f64]>) -> f64 {
    let d = PlaneDerivatives::full(grid, f);
    let n_tot = grid.len();
    let mut sens = grad.as_ref().map(|_| PlaneDerivatives {
        s: vec![0.0; n_tot],
        p: vec![0.0; n_tot],
        ss: vec![0.0; n_tot],
        sp: vec![0.0; n_tot],
        pp: vec![0.0; n_tot],
    });
    let mut total = 0.0;
    for k in 0..grid.n_r() {
        let r = grid.radii()[k];
        let w = scale * grid.node_weight(k);
        let inv_r2 = 1.0 / (r * r);
        let mut ring = 0.0;
        for j in 0..grid.n_phi() {
            let n = grid.index(k, j);
            let (hrr, hrp, hpp) = polar_hessian(&d, n, r);
            ring += hrr * hrr + 2.0 * hrp * hrp + hpp * hpp;
            if let Some(sens) = sens.as_mut() {
                let (a, b, c) = (2.0 * w * hrr * inv_r2, 4.0 * w * hrp * inv_r2, 2.0 * w * hpp * inv_r2);
                sens.ss[n] = a;
                sens.s[n] = c - a;
                sens.sp[n] = b;
                sens.p[n] = -b;
                sens.pp[n] = c;
            }
        }
        total += w * ring;
    }
    if let (Some(sens), Some(grad)) = (sens, grad) {
        derivatives_transpose_add(grid, &sens, grad);
    }
    total
}

fn check_params(params: &Params) -> Result<()> {
    Params::new(params.h, params.delta, params.model).map(|_| ())
}

/// Evaluates the FvK sum for flat unknowns `[u₁, u₂, v]`, optionally with its gradient.
fn fvk_eval(grid: &PolarGrid, params: &Params, x: &[f64], grad: Option<&mut [f64]>) -> EnergyBreakdown {
    let n_tot = grid.len();
    let (u1, rest) = x.split_at(n_tot);
    let (u2, v) = rest.split_at(n_tot);
    let d1 = PlaneDerivatives::first(grid, u1);
    let d2 = PlaneDerivatives::first(grid, u2);
    let dv = PlaneDerivatives::first(grid, v);
    let delta2 = params.delta * params.delta;
    let want = grad.is_some();
    let mk = || if want { vec![0.0; n_tot] } else { Vec::new() };
    let (mut s1s, mut s1p, mut s2s, mut s2p, mut svs, mut svp) = (mk(), mk(), mk(), mk(), mk(), mk());

    let mut membrane = 0.0;
    for k in 0..grid.n_r() {
        let inv_r = 1.0 / grid.radii()[k];
        let w = grid.node_weight(k);
        let mut ring = 0.0;
        for j in 0..grid.n_phi() {
            let n = grid.index(k, j);
            let (c, sn) = (grid.cos(j), grid.sin(j));
            // Du in the polar frame: rows (x̂, x̂⊥) components, columns ∂_r, r⁻¹∂_φ
            let (m00, m01) = (d1.s[n] * inv_r, d1.p[n] * inv_r);
            let (m10, m11) = (d2.s[n] * inv_r, d2.p[n] * inv_r);
            let prr = c * m00 + sn * m10;
            let prp = c * m01 + sn * m11;
            let ppr = -sn * m00 + c * m10;
            let ppp = -sn * m01 + c * m11;
            let (gr, gp) = (dv.s[n] * inv_r, dv.p[n] * inv_r);
            let srr = 2.0 * prr + gr * gr;
            let spp = 2.0 * ppp + gp * gp + delta2;
            let srp = prp + ppr + gr * gp;
            ring += srr * srr + spp * spp + 2.0 * srp * srp;
            if want {
                let a = 2.0 * w * srr;
                let b = 2.0 * w * spp;
                let e = 4.0 * w * srp;
                let (dprr, dppp, dprp, dppr) = (2.0 * a, 2.0 * b, e, e);
                let dgr = 2.0 * gr * a + gp * e;
                let dgp = 2.0 * gp * b + gr * e;
                s1s[n] = (c * dprr - sn * dppr) * inv_r;
                s2s[n] = (sn * dprr + c * dppr) * inv_r;
                s1p[n] = (c * dprp - sn * dppp) * inv_r;
                s2p[n] = (sn * dprp + c * dppp) * inv_r;
                svs[n] = dgr * inv_r;
                svp[n] = dgp * inv_r;
            }
        }
        membrane += w * ring;
    }

    let h2 = params.h * params.h;
    match grad {
        None => {
            let bending = bending_plane(grid, v, h2, None);
            EnergyBreakdown::new(membrane, bending)
        }
        Some(grad) => {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let (g1, rest) = grad.split_at_mut(n_tot);
            let (g2, gv) = rest.split_at_mut(n_tot);
            let first = |s: Vec<f64>, p: Vec<f64>| PlaneDerivatives {
                s,
                p,
                ss: Vec::new(),
                sp: Vec::new(),
                pp: Vec::new(),
            };
            derivatives_transpose_add(grid, &first(s1s, s1p), g1);
            derivatives_transpose_add(grid, &first(s2s, s2p), g2);
            derivatives_transpose_add(grid, &first(svs, svp), gv);
            let bending = bending_plane(grid, v, h2, Some(gv));
            EnergyBreakdown::new(membrane, bending)
        }
    }
}

/// Evaluates the plate sum for flat unknowns `[y₁, y₂, y₃]`, optionally with its gradient.
fn plate_eval(grid: &PolarGrid, params: &Params, x: &[f64], mut grad: Option<&mut [f64]>) -> EnergyBreakdown {
    let n_tot = grid.len();
    let planes: Vec<&[f64]> = x.chunks_exact(n_tot).collect();
    let d: Vec<PlaneDerivatives> = planes.iter().map(|p| PlaneDerivatives::first(grid, p)).collect();
    let c2 = 1.0 - params.delta * params.delta;
    let want = grad.is_some();
    let mut sens: Vec<PlaneDerivatives> = (0..3)
        .map(|_| {
            let mk = || if want { vec![0.0; n_tot] } else { Vec::new() };
            PlaneDerivatives {
                s: mk(),
                p: mk(),
                ss: Vec::new(),
                sp: Vec::new(),
                pp: Vec::new(),
            }
        })
        .collect();

    let mut membrane = 0.0;
    for k in 0..grid.n_r() {
        let inv_r = 1.0 / grid.radii()[k];
        let w = grid.node_weight(k);
        let mut ring = 0.0;
        for j in 0..grid.n_phi() {
            let n = grid.index(k, j);
            let a = [d[0].s[n] * inv_r, d[1].s[n] * inv_r, d[2].s[n] * inv_r];
            let b = [d[0].p[n] * inv_r, d[1].p[n] * inv_r, d[2].p[n] * inv_r];
            let gaa = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
            let gab = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let gbb = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
            let (e11, e12, e22) = (gaa - 1.0, gab, gbb - c2);
            ring += e11 * e11 + 2.0 * e12 * e12 + e22 * e22;
            if want {
                let (d11, d12, d22) = (2.0 * w * e11, 4.0 * w * e12, 2.0 * w * e22);
                for i in 0..3 {
                    sens[i].s[n] = (2.0 * d11 * a[i] + d12 * b[i]) * inv_r;
                    sens[i].p[n] = (2.0 * d22 * b[i] + d12 * a[i]) * inv_r;
                }
            }
        }
        membrane += w * ring;
    }

    let h2 = params.h * params.h;
    let mut bending = 0.0;
    if let Some(grad) = grad.as_deref_mut() {
        grad.iter_mut().for_each(|g| *g = 0.0);
    }
    for i in 0..3 {
        match grad.as_deref_mut() {
            None => bending += bending_plane(grid, planes[i], h2, None),
            Some(grad) => {
                let gi = &mut grad[i * n_tot..(i + 1) * n_tot];
                derivatives_transpose_add(grid, &sens[i], gi);
                bending += bending_plane(grid, planes[i], h2, Some(gi));
            }
        }
    }
    EnergyBreakdown::new(membrane, bending)
}

fn fvk_flat(u: &VectorField2, v: &ScalarField, grid: &PolarGrid) -> Result<Vec<f64>> {
    u.check(grid)?;
    v.check(grid)?;
    let mut x = u.to_flat();
    x.extend_from_slice(v.values());
    Ok(x)
}

/// `∫|2 sym Du + Dv⊗Dv + Δ² x̂⊥⊗x̂⊥|² + h²∫|D²v|²` over the grid annulus.
pub fn fvk_energy(u: &VectorField2, v: &ScalarField, params: &Params, grid: &PolarGrid) -> Result<EnergyBreakdown> {
    check_params(params)?;
    let x = fvk_flat(u, v, grid)?;
    Ok(fvk_eval(grid, params, &x, None))
}

/// Exact gradient of [`fvk_energy`] with respect to every nodal unknown.
pub fn fvk_gradient(
    u: &VectorField2,
    v: &ScalarField,
    params: &Params,
    grid: &PolarGrid,
) -> Result<(VectorField2, ScalarField)> {
    check_params(params)?;
    let x = fvk_flat(u, v, grid)?;
    let mut g = vec![0.0; x.len()];
    fvk_eval(grid, params, &x, Some(&mut g));
    let n = grid.len();
    Ok((
        Field::from_flat(grid, &g[..2 * n])?,
        Field::from_flat(grid, &g[2 * n..])?,
    ))
}

/// `∫|DyᵀDy − g_Δ|² + h²∫|D²y|²` over the grid annulus.
pub fn plate_energy(y: &Map3, params: &Params, grid: &PolarGrid) -> Result<EnergyBreakdown> {
    check_params(params)?;
    y.check(grid)?;
    Ok(plate_eval(grid, params, &y.to_flat(), None))
}

/// Exact gradient of [`plate_energy`].
pub fn plate_gradient(y: &Map3, params: &Params, grid: &PolarGrid) -> Result<Map3> {
    check_params(params)?;
    y.check(grid)?;
    let x = y.to_flat();
    let mut g = vec![0.0; x.len()];
    plate_eval(grid, params, &x, Some(&mut g));
    Field::from_flat(grid, &g)
}

/// Discrete energy of either model as an [`Objective`] over flat nodal unknowns.
#[derive(Clone, Debug)]
pub struct EnergyProblem {
    params: Params,
    grid: PolarGrid,
    precond: Preconditioner,
}

#[derive(Clone, Debug)]
enum Preconditioner {
    Diagonal(Vec<f64>),
    Spectral(Box<SpectralPreconditioner>),
}

impl EnergyProblem {
    pub fn new(params: Params, grid: PolarGrid) -> Result<Self> {
        check_params(&params)?;
        let precond = Preconditioner::Diagonal(diagonal_scale(&params, &grid));
        let problem = EnergyProblem { params, grid, precond };
        let x0 = problem.ansatz()?;
        Ok(problem.with_reference(&x0))
    }

    /// Rebuilds the preconditioner about the ring averages of the state `x`.
    /// Keeps the diagonal scaling if `x` is not finite or the angular node
    /// count is odd.
    pub fn with_reference(mut self, x: &[f64]) -> Self {
        if x.iter().all(|v| v.is_finite()) {
            if let Some(p) = SpectralPreconditioner::new(&self.params, &self.grid, x) {
                self.precond = Preconditioner::Spectral(Box::new(p));
            }
        }
        self
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    /// Flat unknowns of the model's ansatz sampled on the grid.
    pub fn ansatz(&self) -> Result<Vec<f64>> {
        match self.params.model {
            geometry::Model::Fvk => {
                let (u, v) = sample_fvk_ansatz(&self.params, &self.grid)?;
                fvk_flat(&u, &v, &self.grid)
            }
            geometry::Model::Plate => Ok(sample_plate_ansatz(&self.params, &self.grid)?.to_flat()),
        }
    }

    pub fn energy(&self, x: &[f64]) -> EnergyBreakdown {
        match self.params.model {
            geometry::Model::Fvk => fvk_eval(&self.grid, &self.params, x, None),
            geometry::Model::Plate => plate_eval(&self.grid, &self.params, x, None),
        }
    }

    /// Smooth random perturbation of the unknowns with the given amplitude.
    pub fn perturbation(&self, seed: u64, amplitude: f64) -> Vec<f64> {
        let f: Field<3> = random_smooth_field(&self.grid, seed, amplitude);
        f.to_flat()
    }
}

impl Objective for EnergyProblem {
    fn dim(&self) -> usize {
        3 * self.grid.len()
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self.params.model {
            geometry::Model::Fvk => fvk_eval(&self.grid, &self.params, x, Some(grad)).total,
            geometry::Model::Plate => plate_eval(&self.grid, &self.params, x, Some(grad)).total,
        }
    }

    fn gauge_blocks(&self) -> Vec<Range<usize>> {
        // constant shifts of u and v are exact symmetries of the FvK energy
        match self.params.model {
            geometry::Model::Fvk => {
                let n = self.grid.len();
                vec![0..n, n..2 * n, 2 * n..3 * n]
            }
            geometry::Model::Plate => Vec::new(),
        }
    }

    fn precondition(&self, v: &mut [f64]) -> bool {
        match &self.precond {
            Preconditioner::Diagonal(p) => v.iter_mut().zip(p).for_each(|(v, p)| *v *= p),
            Preconditioner::Spectral(p) => p.apply(v),
        }
        true
    }

    fn breakdown(&self, x: &[f64]) -> Option<EnergyBreakdown> {
        Some(self.energy(x))
    }
}

/// Rough inverse of the Hessian diagonal, per ring and shared by all planes.
///
/// Membrane terms contribute about `ds dφ (1/ds² + 1/dφ²)` per node on the log
/// grid while bending contributes `h² ds dφ / r² (1/ds⁴ + 1/dφ⁴)`; the latter
/// dominates near the core and makes the problem badly conditioned without
/// this scaling.
fn diagonal_scale(params: &Params, grid: &PolarGrid) -> Vec<f64> {
    let (ds, dp) = (grid.ds(), grid.dphi());
    let h2 = params.h * params.h;
    let mut out = Vec::with_capacity(3 * grid.len());
    let per_ring: Vec<f64> = grid
        .radii()
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let w = grid.node_weight(k);
            let membrane = 2.0 * w / (r * r) * (1.0 / (ds * ds) + 1.0 / (dp * dp));
            let bending = 12.0 * h2 * w / r.powi(4) * (1.0 / ds.powi(4) + 1.0 / dp.powi(4));
            1.0 / (membrane + bending)
        })
        .collect();
    for _ in 0..3 {
        for &p in &per_ring {
            out.extend(std::iter::repeat_n(p, grid.n_phi()));
        }
    }
    out
}

/// FvK ansatz `(u^h, v^h)` sampled on the grid.
pub fn sample_fvk_ansatz(params: &Params, grid: &PolarGrid) -> Result<(VectorField2, ScalarField)> {
    let f = grid.try_sample(|x| {
        let jet = geometry::ansatz_fvk(x, params)?;
        Ok([jet.u.x, jet.u.y, jet.v])
    })?;
    let n = grid.len();
    let flat = f.to_flat();
    Ok((Field::from_flat(grid, &flat[..2 * n])?, Field::from_flat(grid, &flat[2 * n..])?))
}

/// Plate ansatz `η(|x|/h) y^Δ` sampled on the grid.
pub fn sample_plate_ansatz(params: &Params, grid: &PolarGrid) -> Result<Map3> {
    grid.try_sample(|x| {
        let jet = geometry::ansatz_plate(x, params)?;
        Ok([jet.value.x, jet.value.y, jet.value.z])
    })
}

/// Continuum energy of the model's ansatz on the annulus `r_min ≤ |x| ≤ 1`.
///
/// Both ansatz densities depend on `|x|` only, so the area integral reduces to
/// `2π∫ f(r) r dr`, evaluated with Gauss–Legendre panels in `log r` that are
/// split at the cutoff kinks `h/2` and `h`.
pub fn ansatz_energy_exact(params: &Params, r_min: f64) -> Result<EnergyBreakdown> {
    check_params(params)?;
    if !(r_min > 0.0 && r_min < 1.0) {
        return Err(Error::InvalidParams(format!("r_min = {r_min} not in (0, 1)")));
    }
    let h = params.h;
    let (nodes, weights) = gauss_legendre(10);
    let mut cuts: Vec<f64> = [r_min, 0.5 * h, h, 1.0]
        .into_iter()
        .filter(|&r| r >= r_min && r <= 1.0)
        .map(f64::ln)
        .collect();
    cuts.dedup();
    let (mut membrane, mut bending) = (0.0, 0.0);
    for w in cuts.windows(2) {
        let panels = ((w[1] - w[0]) * 20.0).ceil().max(1.0) as usize;
        let width = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let a = w[0] + p as f64 * width;
            for (t, wt) in nodes.iter().zip(&weights) {
                let r = (a + 0.5 * width * (1.0 + t)).exp();
                let x = Vector2::new(r, 0.0);
                let (m, b) = match params.model {
                    geometry::Model::Fvk => fvk_density(&geometry::ansatz_fvk(x, params)?, x, params.delta),
                    geometry::Model::Plate => plate_density(&geometry::ansatz_plate(x, params)?, x, params.delta)?,
                };
                let jac = 0.5 * width * wt * 2.0 * PI * r * r;
                membrane += jac * m;
                bending += jac * h * h * b;
            }
        }
    }
    Ok(EnergyBreakdown::new(membrane, bending))
}

/// Smooth random field: each component a sum of a few plane waves with
/// wave numbers `|k| ≤ 4`, scaled so the largest coefficient is `amplitude`.
pub fn random_smooth_field<const C: usize>(grid: &PolarGrid, seed: u64, amplitude: f64) -> Field<C> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..C)
        .map(|_| {
            (0..6)
                .map(|_| {
                    (
                        rng.gen_range(-4.0..4.0),
                        rng.gen_range(-4.0..4.0),
                        rng.gen_range(0.0..2.0 * PI),
                        amplitude * rng.gen_range(-1.0..1.0),
                    )
                })
                .collect()
        })
        .collect();
    grid.sample(|p| {
        std::array::from_fn(|c| {
            waves[c]
                .iter()
                .map(|&(kx, ky, ph, a)| a * (kx * p.x + ky * p.y + ph).sin())
                .sum()
        })
    })
}

/// Distance from `F` to `SO(3)`; for `det F < 0` the smallest singular value
/// enters with flipped sign.
pub fn dist_so3(f: &Matrix3<f64>) -> f64 {
    let mut sigma: Vec<f64> = f.singular_values().iter().copied().collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    if f.determinant() < 0.0 {
        sigma[2] = -sigma[2];
    }
    sigma.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>().sqrt()
}

/// Stored-energy density `W(F) = dist²(F, SO(3))`.
pub fn stored_energy(f: &Matrix3<f64>) -> f64 {
    dist_so3(f).powi(2)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Quadrature settings for [`kl3d_energy`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Kl3dQuadrature {
    /// Gauss points across the thickness.
    pub thickness: usize,
    /// Gauss points per radial panel.
    pub radial: usize,
    /// Radial panels per decade of `|x|`.
    pub panels_per_decade: usize,
    /// Angular sample count (periodic trapezoid).
    pub angular: usize,
}

impl Default for Kl3dQuadrature {
    fn default() -> Self {
        Kl3dQuadrature {
            thickness: 4,
            radial: 8,
            panels_per_decade: 8,
            angular: 16,
        }
    }
}

/// `h⁻¹∫ W(DY)` for the Kirchhoff–Love deformation `Y = y^h + x₃ ν` built on
/// the sector ansatz, over the annulus `h/10 ≤ |ι(x)| ≤ 1` of the sector and
/// `|x₃| < h/2`.
///
/// The sector integral is pulled back to the disc by `x = j(z)`, whose Jacobian
/// is the constant `√(1−Δ²)`.
pub fn kl3d_energy(params: &Params, quad: &Kl3dQuadrature) -> Result<f64> {
    check_params(params)?;
    if quad.thickness < 2 || quad.radial < 1 || quad.panels_per_decade < 1 || quad.angular < 1 {
        return Err(Error::InvalidParams(format!(
            "kl3d quadrature needs at least 2 thickness points, got {quad:?}"
        )));
    }
    let h = params.h;
    let c = (1.0 - params.delta * params.delta).sqrt();
    let (tn, tw) = gauss_legendre(quad.thickness);
    let (rn, rw) = gauss_legendre(quad.radial);

    // panel breakpoints in s = log|z|, including the cutoff kinks
    let (s_lo, s_hi) = ((0.1 * h).ln(), 0.0);
    let mut breaks = vec![s_lo, (0.5 * h).ln(), h.ln(), s_hi];
    let per_unit = quad.panels_per_decade as f64 / 10f64.ln();
    let mut edges = Vec::new();
    for w in breaks.windows(2) {
        let m = ((w[1] - w[0]) * per_unit).ceil().max(1.0) as usize;
        for i in 0..m {
            edges.push(w[0] + (w[1] - w[0]) * i as f64 / m as f64);
        }
    }
    edges.push(s_hi);
    breaks.clear();

    let dpsi = 2.0 * PI / quad.angular as f64;
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        for (t, wt) in rn.iter().zip(&rw) {
            let s = a + half * (1.0 + t);
            let r = s.exp();
            let mut ring = 0.0;
            for m in 0..quad.angular {
                // offset by half a cell so no sample lands on the cut at ψ = π
                let psi = -PI + (m as f64 + 0.5) * dpsi;
                let z = Vector2::new(r * psi.cos(), r * psi.sin());
                let sa = geometry::sector_ansatz(z, params)?;
                let mut across = 0.0;
                for (x3, w3) in tn.iter().zip(&tw) {
                    let x3 = 0.5 * h * x3;
                    let top = sa.jacobian + sa.normal_jacobian * x3;
                    let f = Matrix3::from_columns(&[top.column(0).into(), top.column(1).into(), sa.normal]);
                    across += w3 * stored_energy(&f);
                }
                // ∫ dx₃ over (−h/2, h/2) is (h/2) Σ wᵢ
                ring += 0.5 * h * across * dpsi;
            }
            // dz = r² ds dψ in log-polar coordinates
            total += wt * half * r * r * ring;
        }
    }
    Ok(c * total / h)
}
