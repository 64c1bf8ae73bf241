//! Polar discretization of the annulus `r_min ≤ |x| ≤ 1`.
//!
//! Radial nodes are uniform in `s = log r`; angular nodes are uniform and periodic.
//! Nodes are stored ring-major: index `k * n_phi + j` for ring `k`, angle `j`.
//! All differential operators work in `(s, φ)` with second-order stencils
//! (one-sided at both radial boundaries, periodic in angle) and are converted to
//! Cartesian components afterwards.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity of a grid as seen by fields sampled on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub n_r: usize,
    pub n_phi: usize,
    pub r_min: f64,
}

/// Resolution as a function of thickness: `N_r = ⌈a·log₁₀(1/h)⌉` (capped),
/// fixed `N_φ`, inner radius `r_min = factor·h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPolicy {
    pub nodes_per_decade: f64,
    pub max_n_r: usize,
    pub n_phi: usize,
    pub r_min_factor: f64,
    /// Fixed radial count overriding the formula.
    pub n_r: Option<usize>,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            nodes_per_decade: 64.0,
            max_n_r: 512,
            n_phi: 256,
            r_min_factor: 0.1,
            n_r: None,
        }
    }
}

impl GridPolicy {
    pub fn n_r(&self, h: f64) -> usize {
        self.n_r.unwrap_or_else(|| {
            ((self.nodes_per_decade * (1.0 / h).log10()).ceil() as usize).clamp(8, self.max_n_r)
        })
    }

    pub fn grid(&self, h: f64) -> Result<PolarGrid> {
        PolarGrid::new(self.r_min_factor * h, self.n_r(h), self.n_phi)
    }
}

/// Log-radial × uniform-angular grid on `[r_min, 1] × [0, 2π)`.
#[derive(Clone, Debug)]
pub struct PolarGrid {
    shape: GridShape,
    r: Vec<f64>,
    phi: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    ds: f64,
    dphi: f64,
    /// Trapezoidal weights in `r` per ring.
    radial_weights: Vec<f64>,
    d1: RadialStencil,
    d2: RadialStencil,
}

/// Location of a radius relative to the rings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RingLookup {
    Exact(usize),
    /// Between ring `k` and `k + 1`, at fraction `t` in `log r`.
    Between(usize, f64),
}

impl PolarGrid {
    pub fn new(r_min: f64, n_r: usize, n_phi: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < 1.0) {
            return Err(Error::InvalidParams(format!("r_min = {r_min} not in (0, 1)")));
        }
        if n_r < 8 || n_phi < 8 {
            return Err(Error::InvalidParams(format!(
                "grid {n_r}×{n_phi} too coarse (need at least 8×8)"
            )));
        }
        let s0 = r_min.ln();
        let ds = -s0 / (n_r - 1) as f64;
        let mut r: Vec<f64> = (0..n_r).map(|k| (s0 + ds * k as f64).exp()).collect();
        r[0] = r_min;
        r[n_r - 1] = 1.0;
        let dphi = 2.0 * PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|j| dphi * j as f64).collect();
        let cos = phi.iter().map(|p| p.cos()).collect();
        let sin = phi.iter().map(|p| p.sin()).collect();
        let radial_weights = (0..n_r)
            .map(|k| {
                let lo = if k == 0 { r[0] } else { r[k - 1] };
                let hi = if k + 1 == n_r { r[n_r - 1] } else { r[k + 1] };
                0.5 * (hi - lo)
            })
            .collect();
        Ok(PolarGrid {
            shape: GridShape { n_r, n_phi, r_min },
            r,
            phi,
            cos,
            sin,
            ds,
            dphi,
            radial_weights,
            d1: RadialStencil::first(n_r, ds),
            d2: RadialStencil::second(n_r, ds),
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }
    pub fn n_r(&self) -> usize {
        self.shape.n_r
    }
    pub fn n_phi(&self) -> usize {
        self.shape.n_phi
    }
    pub fn len(&self) -> usize {
        self.shape.n_r * self.shape.n_phi
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn r_min(&self) -> f64 {
        self.shape.r_min
    }
    pub fn radii(&self) -> &[f64] {
        &self.r
    }
    pub fn angles(&self) -> &[f64] {
        &self.phi
    }
    pub fn ds(&self) -> f64 {
        self.ds
    }
    pub fn dphi(&self) -> f64 {
        self.dphi
    }
    pub fn cos(&self, j: usize) -> f64 {
        self.cos[j]
    }
    pub fn sin(&self, j: usize) -> f64 {
        self.sin[j]
    }

    #[inline]
    pub fn index(&self, k: usize, j: usize) -> usize {
        k * self.shape.n_phi + j
    }

    pub fn point(&self, k: usize, j: usize) -> Vector2<f64> {
        Vector2::new(self.r[k] * self.cos[j], self.r[k] * self.sin[j])
    }

    /// Area weight of node `(k, j)`: `r_k w_k Δφ`.
    #[inline]
    pub fn node_weight(&self, k: usize) -> f64 {
        self.r[k] * self.radial_weights[k] * self.dphi
    }

    pub(crate) fn radial_first(&self) -> &RadialStencil {
        &self.d1
    }
    pub(crate) fn radial_second(&self) -> &RadialStencil {
        &self.d2
    }

    pub fn ring_lookup(&self, r: f64) -> Result<RingLookup> {
        let (lo, hi) = (self.r[0], self.r[self.n_r() - 1]);
        if !(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)) {
            return Err(Error::domain(format!("radius {r} outside grid range [{lo}, {hi}]")));
        }
        let pos = (r.max(lo).ln() - lo.ln()) / self.ds;
        let k = pos.round() as usize;
        if (pos - k as f64).abs() < 1e-9 {
            return Ok(RingLookup::Exact(k.min(self.n_r() - 1)));
        }
        let k = (pos.floor() as usize).min(self.n_r() - 2);
        Ok(RingLookup::Between(k, pos - k as f64))
    }

    /// Index of the ring closest to `r` in `log r`.
    pub fn nearest_ring(&self, r: f64) -> usize {
        let pos = (r.max(self.r[0]).ln() - self.r[0].ln()) / self.ds;
        (pos.round().max(0.0) as usize).min(self.n_r() - 1)
    }

    /// Samples a closed form at every node.
    pub fn sample<const C: usize>(&self, f: impl Fn(Vector2<f64>) -> [f64; C]) -> Field<C> {
        let mut field = Field::zeros(self);
        for k in 0..self.n_r() {
            for j in 0..self.n_phi() {
                let vals = f(self.point(k, j));
                let n = self.index(k, j);
                for (c, v) in vals.into_iter().enumerate() {
                    field.comps[c][n] = v;
                }
            }
        }
        field
    }

    /// Samples a fallible closed form at every node.
    pub fn try_sample<const C: usize>(
        &self,
        f: impl Fn(Vector2<f64>) -> Result<[f64; C]>,
    ) -> Result<Field<C>> {
        let mut field = Field::zeros(self);
        for k in 0..self.n_r() {
            for j in 0..self.n_phi() {
                let vals = f(self.point(k, j))?;
                let n = self.index(k, j);
                for (c, v) in vals.into_iter().enumerate() {
                    field.comps[c][n] = v;
                }
            }
        }
        Ok(field)
    }
}

/// Banded first/second derivative in `s` with one-sided second-order rows at the ends.
#[derive(Clone, Debug)]
pub(crate) struct RadialStencil {
    rows: Vec<(usize, Vec<f64>)>,
}

impl RadialStencil {
    fn first(n: usize, ds: f64) -> Self {
        let h = 1.0 / ds;
        let mut rows = Vec::with_capacity(n);
        rows.push((0, vec![-1.5 * h, 2.0 * h, -0.5 * h]));
        for k in 1..n - 1 {
            rows.push((k - 1, vec![-0.5 * h, 0.0, 0.5 * h]));
        }
        rows.push((n - 3, vec![0.5 * h, -2.0 * h, 1.5 * h]));
        RadialStencil { rows }
    }

    fn second(n: usize, ds: f64) -> Self {
        let h = 1.0 / (ds * ds);
        let mut rows = Vec::with_capacity(n);
        rows.push((0, vec![2.0 * h, -5.0 * h, 4.0 * h, -h]));
        for k in 1..n - 1 {
            rows.push((k - 1, vec![h, -2.0 * h, h]));
        }
        rows.push((n - 4, vec![-h, 4.0 * h, -5.0 * h, 2.0 * h]));
        RadialStencil { rows }
    }

    /// Row `k` as `(first column, coefficients)`.
    pub(crate) fn row(&self, k: usize) -> (usize, &[f64]) {
        (self.rows[k].0, &self.rows[k].1)
    }

    /// Applies the stencil along the radial direction of a ring-major plane.
    pub(crate) fn apply(&self, input: &[f64], n_phi: usize, out: &mut [f64]) {
        for (k, (start, coeffs)) in self.rows.iter().enumerate() {
            let dst = &mut out[k * n_phi..(k + 1) * n_phi];
            dst.iter_mut().for_each(|x| *x = 0.0);
            for (m, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let src = &input[(start + m) * n_phi..(start + m + 1) * n_phi];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }

    /// Adds `Sᵀ input` into `out`.
    pub(crate) fn apply_transpose_add(&self, input: &[f64], n_phi: usize, out: &mut [f64]) {
        for (k, (start, coeffs)) in self.rows.iter().enumerate() {
            let src = &input[k * n_phi..(k + 1) * n_phi];
            for (m, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let dst = &mut out[(start + m) * n_phi..(start + m + 1) * n_phi];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }

    /// Applies the stencil to a single column of ring values.
    pub(crate) fn apply_column(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; input.len()];
        self.apply(input, 1, &mut out);
        out
    }
}

/// Periodic central first derivative in angle.
pub(crate) fn angular_first(input: &[f64], n_phi: usize, dphi: f64, out: &mut [f64]) {
    let c = 0.5 / dphi;
    for (src, dst) in input.chunks_exact(n_phi).zip(out.chunks_exact_mut(n_phi)) {
        for j in 0..n_phi {
            let jp = if j + 1 == n_phi { 0 } else { j + 1 };
            let jm = if j == 0 { n_phi - 1 } else { j - 1 };
            dst[j] = c * (src[jp] - src[jm]);
        }
    }
}

/// Adds `Aᵀ input` for the periodic central first derivative `A` (antisymmetric).
pub(crate) fn angular_first_transpose_add(input: &[f64], n_phi: usize, dphi: f64, out: &mut [f64]) {
    let c = 0.5 / dphi;
    for (src, dst) in input.chunks_exact(n_phi).zip(out.chunks_exact_mut(n_phi)) {
        for j in 0..n_phi {
            let jp = if j + 1 == n_phi { 0 } else { j + 1 };
            let jm = if j == 0 { n_phi - 1 } else { j - 1 };
            dst[j] -= c * (src[jp] - src[jm]);
        }
    }
}

/// Periodic second difference in angle (symmetric).
pub(crate) fn angular_second(input: &[f64], n_phi: usize, dphi: f64, out: &mut [f64]) {
    let c = 1.0 / (dphi * dphi);
    for (src, dst) in input.chunks_exact(n_phi).zip(out.chunks_exact_mut(n_phi)) {
        for j in 0..n_phi {
            let jp = if j + 1 == n_phi { 0 } else { j + 1 };
            let jm = if j == 0 { n_phi - 1 } else { j - 1 };
            dst[j] = c * (src[jp] - 2.0 * src[j] + src[jm]);
        }
    }
}

pub(crate) fn angular_second_transpose_add(input: &[f64], n_phi: usize, dphi: f64, out: &mut [f64]) {
    let c = 1.0 / (dphi * dphi);
    for (src, dst) in input.chunks_exact(n_phi).zip(out.chunks_exact_mut(n_phi)) {
        for j in 0..n_phi {
            let jp = if j + 1 == n_phi { 0 } else { j + 1 };
            let jm = if j == 0 { n_phi - 1 } else { j - 1 };
            dst[j] += c * (src[jp] - 2.0 * src[j] + src[jm]);
        }
    }
}

/// Derivatives of one scalar plane in `(s, φ)`.
#[derive(Clone, Debug)]
pub(crate) struct PlaneDerivatives {
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub ss: Vec<f64>,
    pub sp: Vec<f64>,
    pub pp: Vec<f64>,
}

impl PlaneDerivatives {
    pub(crate) fn first(grid: &PolarGrid, f: &[f64]) -> Self {
        let n = grid.len();
        let np = grid.n_phi();
        let mut s = vec![0.0; n];
        let mut p = vec![0.0; n];
        grid.d1.apply(f, np, &mut s);
        angular_first(f, np, grid.dphi, &mut p);
        PlaneDerivatives {
            s,
            p,
            ss: Vec::new(),
            sp: Vec::new(),
            pp: Vec::new(),
        }
    }

    pub(crate) fn full(grid: &PolarGrid, f: &[f64]) -> Self {
        let mut d = Self::first(grid, f);
        let n = grid.len();
        let np = grid.n_phi();
        d.ss = vec![0.0; n];
        d.sp = vec![0.0; n];
        d.pp = vec![0.0; n];
        grid.d2.apply(f, np, &mut d.ss);
        grid.d1.apply(&d.p, np, &mut d.sp);
        angular_second(f, np, grid.dphi, &mut d.pp);
        d
    }
}

/// Adjoint of [`PlaneDerivatives`]: given sensitivities with respect to each
/// derivative sample, accumulates the sensitivity with respect to the plane.
pub(crate) fn derivatives_transpose_add(
    grid: &PolarGrid,
    sens: &PlaneDerivatives,
    out: &mut [f64],
) {
    let np = grid.n_phi();
    let dphi = grid.dphi;
    if !sens.s.is_empty() {
        grid.d1.apply_transpose_add(&sens.s, np, out);
    }
    if !sens.p.is_empty() {
        angular_first_transpose_add(&sens.p, np, dphi, out);
    }
    if !sens.ss.is_empty() {
        grid.d2.apply_transpose_add(&sens.ss, np, out);
    }
    if !sens.sp.is_empty() {
        let mut tmp = vec![0.0; grid.len()];
        grid.d1.apply_transpose_add(&sens.sp, np, &mut tmp);
        angular_first_transpose_add(&tmp, np, dphi, out);
    }
    if !sens.pp.is_empty() {
        angular_second_transpose_add(&sens.pp, np, dphi, out);
    }
}

/// Grid-sampled field with `C` components (`u`: 2, `v`: 1, `y`: 3).
#[derive(Clone, Debug, PartialEq)]
pub struct Field<const C: usize> {
    shape: GridShape,
    comps: [Vec<f64>; C],
}

pub type ScalarField = Field<1>;
pub type VectorField2 = Field<2>;
pub type Map3 = Field<3>;

impl<const C: usize> Field<C> {
    pub fn zeros(grid: &PolarGrid) -> Self {
        Field {
            shape: grid.shape(),
            comps: std::array::from_fn(|_| vec![0.0; grid.len()]),
        }
    }

    pub fn from_components(grid: &PolarGrid, comps: [Vec<f64>; C]) -> Result<Self> {
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "component has {} samples, grid has {}",
                    c.len(),
                    grid.len()
                )));
            }
        }
        Ok(Field {
            shape: grid.shape(),
            comps,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>; C] {
        &self.comps
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|x| x.is_finite()))
    }

    /// Fails unless the field was sampled on `grid`.
    pub fn check(&self, grid: &PolarGrid) -> Result<()> {
        if self.shape != grid.shape() {
            return Err(Error::GridMismatch(format!(
                "field on {:?}, grid is {:?}",
                self.shape,
                grid.shape()
            )));
        }
        Ok(())
    }

    /// Components concatenated in order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.comps.concat()
    }

    pub fn from_flat(grid: &PolarGrid, flat: &[f64]) -> Result<Self> {
        if flat.len() != C * grid.len() {
            return Err(Error::GridMismatch(format!(
                "flat vector of length {} for {} components on {} nodes",
                flat.len(),
                C,
                grid.len()
            )));
        }
        let n = grid.len();
        Ok(Field {
            shape: grid.shape(),
            comps: std::array::from_fn(|c| flat[c * n..(c + 1) * n].to_vec()),
        })
    }

    /// Values of component `c` on ring `k`.
    pub fn ring(&self, c: usize, k: usize) -> &[f64] {
        let np = self.shape.n_phi;
        &self.comps[c][k * np..(k + 1) * np]
    }

    /// Bilinear resampling in `(log r, φ)`; radii outside the source range take
    /// the value of the nearest ring.
    pub fn resample(&self, from: &PolarGrid, to: &PolarGrid) -> Result<Self> {
        self.check(from)?;
        let mut out = Field::zeros(to);
        let s0 = from.r_min().ln();
        let np_from = from.n_phi();
        for k in 0..to.n_r() {
            let pos = ((to.radii()[k].ln() - s0) / from.ds()).clamp(0.0, (from.n_r() - 1) as f64);
            let k0 = (pos.floor() as usize).min(from.n_r() - 2);
            let tr = pos - k0 as f64;
            for j in 0..to.n_phi() {
                let q = to.angles()[j] / from.dphi();
                let j0 = q.floor() as usize % np_from;
                let j1 = (j0 + 1) % np_from;
                let tp = q - q.floor();
                let n = to.index(k, j);
                for c in 0..C {
                    let f = &self.comps[c];
                    let a = f[from.index(k0, j0)] * (1.0 - tp) + f[from.index(k0, j1)] * tp;
                    let b = f[from.index(k0 + 1, j0)] * (1.0 - tp) + f[from.index(k0 + 1, j1)] * tp;
                    out.comps[c][n] = a * (1.0 - tr) + b * tr;
                }
            }
        }
        Ok(out)
    }
}

impl ScalarField {
    pub fn values(&self) -> &[f64] {
        &self.comps[0]
    }
}

/// Cartesian gradient at every node: `Dv = v_r x̂ + r⁻¹ v_φ x̂⊥`.
pub fn gradient(f: &ScalarField, grid: &PolarGrid) -> Result<Vec<Vector2<f64>>> {
    f.check(grid)?;
    let d = PlaneDerivatives::first(grid, f.values());
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..grid.n_r() {
        let inv_r = 1.0 / grid.radii()[k];
        for j in 0..grid.n_phi() {
            let n = grid.index(k, j);
            let (c, s) = (grid.cos(j), grid.sin(j));
            let gr = d.s[n] * inv_r;
            let gp = d.p[n] * inv_r;
            out.push(Vector2::new(c * gr - s * gp, s * gr + c * gp));
        }
    }
    Ok(out)
}

/// Hessian components in the polar frame `(x̂, x̂⊥)`: `(H_rr, H_rφ, H_φφ)`.
#[inline]
pub(crate) fn polar_hessian(d: &PlaneDerivatives, n: usize, r: f64) -> (f64, f64, f64) {
    let inv_r2 = 1.0 / (r * r);
    (
        (d.ss[n] - d.s[n]) * inv_r2,
        (d.sp[n] - d.p[n]) * inv_r2,
        (d.pp[n] + d.s[n]) * inv_r2,
    )
}

/// Cartesian Hessian at every node, symmetric by construction.
pub fn hessian(f: &ScalarField, grid: &PolarGrid) -> Result<Vec<Matrix2<f64>>> {
    f.check(grid)?;
    let d = PlaneDerivatives::full(grid, f.values());
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..grid.n_r() {
        let r = grid.radii()[k];
        for j in 0..grid.n_phi() {
            let n = grid.index(k, j);
            let (hrr, hrp, hpp) = polar_hessian(&d, n, r);
            let q = Matrix2::new(grid.cos(j), -grid.sin(j), grid.sin(j), grid.cos(j));
            let polar = Matrix2::new(hrr, hrp, hrp, hpp);
            let m = q * polar * q.transpose();
            // exact symmetry
            let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
            out.push(Matrix2::new(m[(0, 0)], off, off, m[(1, 1)]));
        }
    }
    Ok(out)
}

/// Area quadrature `Σ f(r_k, φ_j) r_k w_k Δφ` over the annulus.
pub fn integrate(density: &ScalarField, grid: &PolarGrid) -> Result<f64> {
    density.check(grid)?;
    Ok(integrate_values(density.values(), grid))
}

pub fn integrate_values(density: &[f64], grid: &PolarGrid) -> f64 {
    integrate_rings(density, grid, 0, grid.n_r() - 1)
}

/// Area quadrature restricted to rings `k_lo..=k_hi` (trapezoid in `r` on that range).
pub fn integrate_rings(density: &[f64], grid: &PolarGrid, k_lo: usize, k_hi: usize) -> f64 {
    let r = grid.radii();
    let np = grid.n_phi();
    let mut total = 0.0;
    for k in k_lo..=k_hi {
        let lo = if k == k_lo { r[k] } else { r[k - 1] };
        let hi = if k == k_hi { r[k] } else { r[k + 1] };
        let w = 0.5 * (hi - lo) * r[k] * grid.dphi();
        let ring: f64 = density[k * np..(k + 1) * np].iter().sum();
        total += w * ring;
    }
    total
}

/// Periodic trapezoid rule `∮_{∂B_r} f dH¹` for uniformly spaced samples on a circle.
pub fn circle_integral(values: &[f64], r: f64) -> f64 {
    let n = values.len() as f64;
    r * 2.0 * PI / n * values.iter().sum::<f64>()
}

/// Circle integral of a per-ring quantity at an arbitrary radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingValue {
    pub value: f64,
    /// True if the radius was not a grid ring and the result was interpolated
    /// between the two neighbouring rings.
    pub interpolated: bool,
}

/// Interpolates per-ring values (linear in `log r`) at radius `r`.
pub fn ring_value(per_ring: &[f64], grid: &PolarGrid, r: f64) -> Result<RingValue> {
    Ok(match grid.ring_lookup(r)? {
        RingLookup::Exact(k) => RingValue {
            value: per_ring[k],
            interpolated: false,
        },
        RingLookup::Between(k, t) => RingValue {
            value: per_ring[k] * (1.0 - t) + per_ring[k + 1] * t,
            interpolated: true,
        },
    })
}

/// `∮_{∂B_r} f dH¹` for a scalar field, interpolating between rings if needed.
pub fn field_circle_integral(f: &ScalarField, grid: &PolarGrid, r: f64) -> Result<RingValue> {
    f.check(grid)?;
    let per_ring: Vec<f64> = (0..grid.n_r())
        .map(|k| circle_integral(f.ring(0, k), grid.radii()[k]))
        .collect();
    ring_value(&per_ring, grid, r)
}

/// Writes a field as CSV rows `r,phi,<names...>` in ring-major node order,
/// preceded by a `#` comment line carrying the version stamp and metadata.
pub fn write_field_csv<const C: usize>(
    path: &Path,
    field: &Field<C>,
    grid: &PolarGrid,
    names: [&str; C],
    meta: &str,
) -> Result<()> {
    field.check(grid)?;
    let tmp = path.with_extension("csv.tmp");
    {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        writeln!(file, "# {} {}", crate::VERSION_STAMP, meta)?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = vec!["r", "phi"];
        header.extend_from_slice(&names);
        w.write_record(&header)?;
        for k in 0..grid.n_r() {
            for j in 0..grid.n_phi() {
                let n = grid.index(k, j);
                let mut rec = vec![format!("{:e}", grid.radii()[k]), format!("{:e}", grid.angles()[j])];
                rec.extend((0..C).map(|c| format!("{:e}", field.comps[c][n])));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`], reconstructing its grid.
/// Returns the grid, the field and the column names after `r,phi`.
pub fn read_field_csv<const C: usize>(path: &Path) -> Result<(PolarGrid, Field<C>, Vec<String>)> {
    let bad = |msg: String| Error::file(path, msg);
    let file = std::fs::File::open(path).map_err(|e| bad(e.to_string()))?;
    let mut reader = std::io::BufReader::new(file);
    // skip comment lines manually so the csv reader sees the header first
    let mut body = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| bad(e.to_string()))? == 0 {
            break;
        }
        if !line.starts_with('#') {
            body.push_str(&line);
        }
    }
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() != C + 2 || &headers[0] != "r" || &headers[1] != "phi" {
        return Err(bad(format!(
            "expected columns r,phi plus {C} value columns, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let names = headers.iter().skip(2).map(str::to_string).collect();
    let mut rs = Vec::new();
    let mut phis = Vec::new();
    let mut vals: [Vec<f64>; C] = std::array::from_fn(|_| Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parse = |c: usize| -> Result<f64> {
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: column {c}: {e}", i + 1)))
        };
        rs.push(parse(0)?);
        phis.push(parse(1)?);
        for (c, v) in vals.iter_mut().enumerate() {
            v.push(parse(c + 2)?);
        }
    }
    let n_phi = phis.iter().take_while(|&&p| p != phis[0] || false).count();
    let n_phi = if n_phi == 0 {
        rs.iter().take_while(|&&r| r == rs[0]).count()
    } else {
        n_phi
    };
    if n_phi == 0 || rs.len() % n_phi != 0 {
        return Err(bad(format!("{} rows do not form complete rings", rs.len())));
    }
    let n_r = rs.len() / n_phi;
    let grid = PolarGrid::new(rs[0], n_r, n_phi).map_err(|e| bad(e.to_string()))?;
    for k in 0..n_r {
        for j in 0..n_phi {
            let n = grid.index(k, j);
            let dr = (rs[n] - grid.radii()[k]).abs() / grid.radii()[k];
            let dp = (phis[n] - grid.angles()[j]).abs();
            if dr > 1e-9 || dp > 1e-9 {
                return Err(bad(format!(
                    "node ({k}, {j}) at (r={}, phi={}) is not on a log-radial polar grid",
                    rs[n], phis[n]
                )));
            }
        }
    }
    let field = Field::from_components(&grid, vals).map_err(|e| bad(e.to_string()))?;
    if !field.is_finite() {
        return Err(bad("non-finite field values".into()));
    }
    Ok((grid, field, names))
}
