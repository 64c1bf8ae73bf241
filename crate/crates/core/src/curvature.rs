//! Curvature diagnostics: boundary-integral Gauss curvature of balls, winding
//! numbers, the isoperimetric inequality for the gradient curve, the
//! interpolation quantities behind the L¹ estimate, and a certified lower bound
//! on the bending energy.
//!
//! For a scalar `v`, `κ(r) = ∫_{B_r} det D²v` is evaluated on each ring as
//!
//! ```text
//! κ(r) = ½ ∮ ( v_{,r}² − (v_{,φ}²/r)_{,r} ) dφ,
//! ```
//!
//! the polar form of `½∮ v_{,1} dv_{,2} − v_{,2} dv_{,1}` after dropping the
//! exact `φ`-derivative.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Params;
use crate::grid::{self, Field, Map3, PlaneDerivatives, PolarGrid, RingLookup, ScalarField, VectorField2};

/// `κ` sampled at a list of radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProfile {
    pub radii: Vec<f64>,
    pub kappa: Vec<f64>,
    pub target: f64,
    /// Radii that fell between rings and were interpolated.
    pub interpolated: Vec<bool>,
}

impl CurvatureProfile {
    pub fn new(radii: Vec<f64>, kappa: Vec<f64>, target: f64) -> Result<Self> {
        if radii.len() != kappa.len() {
            return Err(Error::InvalidParams("radii and kappa differ in length".into()));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("profile radii must be strictly increasing".into()));
        }
        let n = radii.len();
        Ok(CurvatureProfile {
            radii,
            kappa,
            target,
            interpolated: vec![false; n],
        })
    }

    pub fn abs_deviation(&self) -> Vec<f64> {
        self.kappa.iter().map(|k| (k - self.target).abs()).collect()
    }

    pub fn write_csv(&self, path: &Path, meta: &str) -> Result<()> {
        let tmp = path.with_extension("csv.tmp");
        {
            let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            writeln!(file, "# {} {}", crate::VERSION_STAMP, meta)?;
            let mut w = csv::Writer::from_writer(file);
            w.write_record(["r", "kappa", "target", "abs_dev"])?;
            for (r, k) in self.radii.iter().zip(&self.kappa) {
                w.write_record([*r, *k, self.target, (k - self.target).abs()].map(|x| format!("{x:e}")))?;
            }
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Trapezoid integral of `f(r, κ(r))` over `[a, b]`, with `κ` interpolated
    /// linearly at the endpoints.
    fn integrate(&self, a: f64, b: f64, f: impl Fn(f64, f64) -> f64) -> Result<f64> {
        let (lo, hi) = (self.radii[0], *self.radii.last().unwrap_or(&0.0));
        let tol = 1e-12 * hi.abs().max(1.0);
        if self.radii.len() < 2 || !(a < b) || a < lo - tol || b > hi + tol {
            return Err(Error::domain(format!("interval [{a}, {b}] not within profile range [{lo}, {hi}]")));
        }
        let at = |r: f64| -> f64 {
            let i = self.radii.partition_point(|&x| x < r).clamp(1, self.radii.len() - 1);
            let (r0, r1) = (self.radii[i - 1], self.radii[i]);
            let t = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
            self.kappa[i - 1] * (1.0 - t) + self.kappa[i] * t
        };
        let mut pts = vec![(a, at(a))];
        pts.extend(self.radii.iter().zip(&self.kappa).filter(|(r, _)| **r > a && **r < b).map(|(r, k)| (*r, *k)));
        pts.push((b, at(b)));
        Ok(pts
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (f(w[0].0, w[0].1) + f(w[1].0, w[1].1)))
            .sum())
    }
}

/// Cartesian gradient `(v_{,1}, v_{,2})` at every node from the grid stencils.
fn cartesian_gradient(grid: &PolarGrid, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = PlaneDerivatives::first(grid, f);
    let r = grid.radii();
    let mut g1 = vec![0.0; grid.len()];
    let mut g2 = vec![0.0; grid.len()];
    for k in 0..grid.n_r() {
        for j in 0..grid.n_phi() {
            let n = grid.index(k, j);
            let (vr, vp) = (d.s[n] / r[k], d.p[n] / r[k]);
            g1[n] = grid.cos(j) * vr - grid.sin(j) * vp;
            g2[n] = grid.sin(j) * vr + grid.cos(j) * vp;
        }
    }
    (g1, g2)
}

/// `κ` on every ring of `grid` for one scalar plane, as `½∮ Dv × ∂_φ Dv dφ`.
///
/// With the central angular difference this is exactly the signed area of the
/// closed polygon traced by the nodal gradients on the ring, so it vanishes on
/// affine fields up to a fourth-order error and obeys the polygon
/// isoperimetric inequality without discretization slack.
pub fn ring_kappa(grid: &PolarGrid, f: &[f64]) -> Vec<f64> {
    let (g1, g2) = cartesian_gradient(grid, f);
    let np = grid.n_phi();
    (0..grid.n_r())
        .map(|k| {
            let sum: f64 = (0..np)
                .map(|j| {
                    let (a, b) = (grid.index(k, j), grid.index(k, (j + 1) % np));
                    g1[a] * g2[b] - g2[a] * g1[b]
                })
                .sum();
            0.5 * sum
        })
        .collect()
}

/// Length of the gradient polygon on every ring.
fn ring_gradient_length(grid: &PolarGrid, f: &[f64]) -> Vec<f64> {
    let (g1, g2) = cartesian_gradient(grid, f);
    let np = grid.n_phi();
    (0..grid.n_r())
        .map(|k| {
            (0..np)
                .map(|j| {
                    let (a, b) = (grid.index(k, j), grid.index(k, (j + 1) % np));
                    (g1[b] - g1[a]).hypot(g2[b] - g2[a])
                })
                .sum()
        })
        .collect()
}

fn profile_at(per_ring: &[f64], grid: &PolarGrid, radii: &[f64], target: f64) -> Result<CurvatureProfile> {
    let mut kappa = Vec::with_capacity(radii.len());
    let mut interpolated = Vec::with_capacity(radii.len());
    for &r in radii {
        let v = grid::ring_value(per_ring, grid, r)?;
        kappa.push(v.value);
        interpolated.push(v.interpolated);
    }
    let mut p = CurvatureProfile::new(radii.to_vec(), kappa, target)?;
    p.interpolated = interpolated;
    Ok(p)
}

/// `κ^vK_v(r)` for each of `radii`; `target` is the reference value `πΔ²`.
pub fn kappa_fvk(v: &ScalarField, grid: &PolarGrid, radii: &[f64], target: f64) -> Result<CurvatureProfile> {
    v.check(grid)?;
    profile_at(&ring_kappa(grid, v.values()), grid, radii, target)
}

/// `κ_y(r) = Σᵢ ∫_{B_r} det D²yᵢ` for each of `radii`.
pub fn kappa_plate(y: &Map3, grid: &PolarGrid, radii: &[f64], target: f64) -> Result<CurvatureProfile> {
    y.check(grid)?;
    let mut total = vec![0.0; grid.n_r()];
    for c in 0..3 {
        for (t, k) in total.iter_mut().zip(ring_kappa(grid, y.component(c))) {
            *t += k;
        }
    }
    profile_at(&total, grid, radii, target)
}

/// `∫_{B_r} det D²v` by area quadrature of the discrete Hessian determinant
/// over the annulus `[r_min, r]`, closed with the boundary value at `r_min`.
pub fn kappa_interior(v: &ScalarField, grid: &PolarGrid, r: f64) -> Result<f64> {
    v.check(grid)?;
    let hess = grid::hessian(v, grid)?;
    let det: Vec<f64> = hess.iter().map(|m| m.determinant()).collect();
    let inner = ring_kappa(grid, v.values())[0];
    let upto = |k: usize| if k == 0 { inner } else { inner + grid::integrate_rings(&det, grid, 0, k) };
    Ok(match grid.ring_lookup(r)? {
        RingLookup::Exact(k) => upto(k),
        RingLookup::Between(k, t) => upto(k) * (1.0 - t) + upto(k + 1) * t,
    })
}

/// Winding number of the closed polygon `curve` around `target`.
///
/// The target must be farther from the curve than ten times the largest gap
/// between consecutive samples, and the summed angle must be within 0.1 of an
/// integer.
pub fn brouwer_degree(curve: &[Vector2<f64>], target: Vector2<f64>) -> Result<i64> {
    if curve.len() < 3 {
        return Err(Error::InvalidParams("curve needs at least 3 samples".into()));
    }
    let n = curve.len();
    let gap = (0..n).map(|i| (curve[(i + 1) % n] - curve[i]).norm()).fold(0.0, f64::max);
    let distance = (0..n)
        .map(|i| point_segment_distance(target, curve[i], curve[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min);
    let required = 10.0 * gap;
    if !(distance > required) {
        return Err(Error::OnBoundary { distance, required });
    }
    let total: f64 = (0..n)
        .map(|i| {
            let a = curve[i] - target;
            let b = curve[(i + 1) % n] - target;
            (a.x * b.y - a.y * b.x).atan2(a.dot(&b))
        })
        .sum();
    let w = total / (2.0 * PI);
    let rounded = w.round();
    let residual = (w - rounded).abs();
    if residual >= 0.1 {
        return Err(Error::UnderResolved { residual });
    }
    Ok(rounded as i64)
}

fn point_segment_distance(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm()
}

/// The gradient curve `Dv(∂B_r)` on ring `k`.
pub fn gradient_curve(v: &ScalarField, grid: &PolarGrid, k: usize) -> Result<Vec<Vector2<f64>>> {
    let g = grid::gradient(v, grid)?;
    Ok(g[k * grid.n_phi()..(k + 1) * grid.n_phi()].to_vec())
}

/// Isoperimetric comparison on one circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoperRecord {
    pub r: f64,
    /// `∮ |∂_t Dv| dH¹`, the length of the gradient curve.
    pub lhs: f64,
    /// `√(4π|κ(r)|)`.
    pub rhs: f64,
    pub slack: f64,
    pub satisfied: bool,
}

/// Default relative slack of discrete inequality checks.
pub const DEFAULT_SLACK: f64 = 0.05;

/// Per-ring isoperimetric records for a scalar plane. The length is that of
/// the polygon through the nodal gradients, whose signed area is `κ`.
pub fn isoper_rings(grid: &PolarGrid, f: &[f64], slack: f64) -> Vec<IsoperRecord> {
    let kappa = ring_kappa(grid, f);
    let length = ring_gradient_length(grid, f);
    (0..grid.n_r())
        .map(|k| {
            let rhs = (4.0 * PI * kappa[k].abs()).sqrt();
            IsoperRecord {
                r: grid.radii()[k],
                lhs: length[k],
                rhs,
                slack,
                satisfied: length[k] >= rhs * (1.0 - slack),
            }
        })
        .collect()
}

/// Isoperimetric check on the ring nearest to `r`.
pub fn isoper_check(v: &ScalarField, grid: &PolarGrid, r: f64, slack: f64) -> Result<IsoperRecord> {
    v.check(grid)?;
    grid.ring_lookup(r)?;
    Ok(isoper_rings(grid, v.values(), slack)[grid.nearest_ring(r)])
}

/// `∫_a^b |κ(r) − κ_target| dr`.
pub fn l1_deviation(profile: &CurvatureProfile, a: f64, b: f64) -> Result<f64> {
    profile.integrate(a, b, |_, k| (k - profile.target).abs())
}

/// `2∫_a^b |κ(r)| dr/r`, a lower bound for `∫_{B_b∖B_a}|D²v|²` when `κ` comes
/// from a single scalar field.
pub fn lower_bound_certificate(profile: &CurvatureProfile, a: f64, b: f64) -> Result<f64> {
    profile.integrate(a, b, |r, k| 2.0 * k.abs() / r)
}

/// Certified fraction of the bound for maps with three components: summing the
/// per-component isoperimetric inequality and applying Jensen loses a factor 3.
pub const PLATE_CERTIFICATE_FACTOR: f64 = 1.0 / 3.0;

/// Profile on every grid ring within `[a, b]`.
pub fn ring_radii(grid: &PolarGrid, a: f64, b: f64) -> Vec<f64> {
    grid.radii().iter().copied().filter(|&r| r >= a * (1.0 - 1e-12) && r <= b * (1.0 + 1e-12)).collect()
}

/// Dyadic radii `2ʲ h₀` inside `[lo, hi]`.
pub fn dyadic_radii(h0: f64, lo: f64, hi: f64) -> Vec<f64> {
    (0..64)
        .map(|j| h0 * 2f64.powi(j))
        .filter(|&r| r >= lo && r <= hi)
        .collect()
}

/// Quantities of the interpolation argument between metric defect and curvature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationRecord {
    pub lower: f64,
    pub upper: f64,
    pub f_l1: f64,
    pub f_prime_l1: f64,
    pub f_second_l1: f64,
    /// `‖F′_fd − (−πΔ² + κ)‖_{L¹}`.
    pub identity_residual: f64,
    /// `‖F′‖ / (‖F‖ ‖F″‖)^{1/2}`.
    pub interpolation_ratio: f64,
    pub interpolation_constant: f64,
    /// Whether the ratio is at most [`INTERPOLATION_CONSTANT`].
    pub interpolation_holds: bool,
    pub radii: Vec<f64>,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
}

/// Builds `a(s) = ∫_lower^s dr ∮(2u_{r,r} + v_{,r}²)`, `b(r) = ∮(2u_r + v_{,φ}²/r + Δ²r)`,
/// `F = ½(a − b)` on the rings in `[lower, upper]`, differentiates `F` with the
/// radial stencil and compares with `−πΔ² + κ(r)`.
pub fn interpolation_diagnostic(u: &VectorField2, v: &ScalarField, params: &Params, grid: &PolarGrid, upper: f64) -> Result<InterpolationRecord> {
    interpolation_on(u, v, params.delta, grid, params.h.max(grid.r_min()), upper)
}

/// Constant `c` of the reported interpolation check `‖F′‖ ≤ c (‖F‖ ‖F″‖)^{1/2}`.
pub const INTERPOLATION_CONSTANT: f64 = 1.0;

/// [`interpolation_diagnostic`] on an explicit interval `[lower, upper]`.
pub fn interpolation_on(u: &VectorField2, v: &ScalarField, delta: f64, grid: &PolarGrid, lower: f64, upper: f64) -> Result<InterpolationRecord> {
    u.check(grid)?;
    v.check(grid)?;
    let k0 = match grid.ring_lookup(lower)? {
        RingLookup::Exact(k) => k,
        RingLookup::Between(k, _) => k + 1,
    };
    let k1 = match grid.ring_lookup(upper)? {
        RingLookup::Exact(k) | RingLookup::Between(k, _) => k,
    };
    if k1 < k0 + 4 {
        return Err(Error::domain(format!("[{lower}, {upper}] holds fewer than 5 rings")));
    }
    let np = grid.n_phi();
    let r = grid.radii();
    let d2 = delta * delta;
    // radial displacement u·x̂ on every node
    let ur: Vec<f64> = (0..grid.len())
        .map(|n| {
            let j = n % np;
            u.component(0)[n] * grid.cos(j) + u.component(1)[n] * grid.sin(j)
        })
        .collect();
    let dur = PlaneDerivatives::first(grid, &ur);
    let dv = PlaneDerivatives::first(grid, v.values());
    let ring_sum = |k: usize, f: &dyn Fn(usize) -> f64| -> f64 { grid.dphi() * (0..np).map(|j| f(grid.index(k, j))).sum::<f64>() };

    let integrand: Vec<f64> = (0..grid.n_r())
        .map(|k| ring_sum(k, &|n| 2.0 * dur.s[n] / r[k] + (dv.s[n] / r[k]).powi(2)))
        .collect();
    let b: Vec<f64> = (0..grid.n_r())
        .map(|k| ring_sum(k, &|n| 2.0 * ur[n] + dv.p[n] * dv.p[n] / r[k]) + 2.0 * PI * d2 * r[k])
        .collect();
    let mut a = vec![0.0; grid.n_r()];
    for k in k0 + 1..grid.n_r() {
        a[k] = a[k - 1] + 0.5 * (r[k] - r[k - 1]) * (integrand[k] + integrand[k - 1]);
    }
    let f: Vec<f64> = (0..grid.n_r()).map(|k| 0.5 * (a[k] - b[k])).collect();
    let fs = grid.radial_first().apply_column(&f);
    let f_prime_fd: Vec<f64> = (0..grid.n_r()).map(|k| fs[k] / r[k]).collect();
    let kappa = ring_kappa(grid, v.values());
    let f_prime: Vec<f64> = kappa.iter().map(|k| k - PI * d2).collect();
    let fps = grid.radial_first().apply_column(&f_prime);
    let f_second: Vec<f64> = (0..grid.n_r()).map(|k| fps[k] / r[k]).collect();

    let l1 = |vals: &dyn Fn(usize) -> f64| -> f64 { (k0..k1).map(|k| 0.5 * (r[k + 1] - r[k]) * (vals(k).abs() + vals(k + 1).abs())).sum() };
    // a is anchored at the first ring ≥ lower; residual skips the two rings whose
    // one-sided stencil reaches below the anchor
    let residual: f64 = (k0 + 1..k1).map(|k| 0.5 * (r[k + 1] - r[k]) * ((f_prime_fd[k] - f_prime[k]).abs() + (f_prime_fd[k + 1] - f_prime[k + 1]).abs())).sum();
    let f_l1 = l1(&|k| f[k]);
    let f_prime_l1 = l1(&|k| f_prime[k]);
    let f_second_l1 = l1(&|k| f_second[k]);
    let ratio = f_prime_l1 / (f_l1 * f_second_l1).sqrt();
    Ok(InterpolationRecord {
        lower: r[k0],
        upper: r[k1],
        f_l1,
        f_prime_l1,
        f_second_l1,
        identity_residual: residual,
        interpolation_ratio: ratio,
        interpolation_constant: INTERPOLATION_CONSTANT,
        interpolation_holds: ratio <= INTERPOLATION_CONSTANT,
        radii: r[k0..=k1].to_vec(),
        f: f[k0..=k1].to_vec(),
        f_prime: f_prime[k0..=k1].to_vec(),
    })
}

/// `∫_{B_b∖B_a} |D²f|²` over the rings in `[a, b]`.
pub fn bending_integral(grid: &PolarGrid, f: &[f64], a: f64, b: f64) -> Result<f64> {
    let k0 = grid.nearest_ring(a);
    let k1 = grid.nearest_ring(b);
    if k1 <= k0 {
        return Err(Error::domain(format!("[{a}, {b}] holds fewer than 2 rings")));
    }
    Ok(grid::integrate_rings(&crate::energy::hessian_norm_density(grid, f), grid, k0, k1))
}

/// Splits three planes into `(u, v)`.
pub fn split_fvk(f: &Field<3>, grid: &PolarGrid) -> Result<(VectorField2, ScalarField)> {
    let flat = f.to_flat();
    let n = grid.len();
    Ok((Field::from_flat(grid, &flat[..2 * n])?, Field::from_flat(grid, &flat[2 * n..])?))
}
