//! Closed-form reference objects: the singular cone `y(x) = sqrt(1 - Δ²) x + Δ|x| e₃`,
//! its metric, the smooth radial cutoff and the explicit low-energy deformations
//! (plate, Föppl–von Kármán and sector-glued) built from them.
//!
//! Everything here is a pure function of its inputs. Derivative requests at the
//! origin are domain errors: the cone is singular there and grids never sample it.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plate model selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Fvk,
    Plate,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Fvk => "fvk",
            Model::Plate => "plate",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvk" => Ok(Model::Fvk),
            "plate" => Ok(Model::Plate),
            other => Err(Error::InvalidParams(format!("unknown model `{other}`"))),
        }
    }
}

/// Physical configuration: thickness `h`, cone deficit `delta`, model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub h: f64,
    pub delta: f64,
    pub model: Model,
}

impl Params {
    pub fn new(h: f64, delta: f64, model: Model) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidParams(format!("thickness h = {h} not in (0, 1)")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("deficit delta = {delta} not in (0, 1)")));
        }
        Ok(Params { h, delta, model })
    }

    /// `2πΔ²h²`, the prefactor of the logarithmic energy law.
    pub fn energy_unit(&self) -> f64 {
        2.0 * PI * self.delta * self.delta * self.h * self.h
    }

    /// `πΔ²`, the curvature carried by the cone tip.
    pub fn kappa_target(&self) -> f64 {
        PI * self.delta * self.delta
    }
}

/// Value and first two derivatives of a deformation `B₁ → ℝ³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateJet {
    pub value: Vector3<f64>,
    /// Row `i` is the gradient of component `i`.
    pub jacobian: Matrix3x2<f64>,
    /// Hessian of each component.
    pub hessian: [Matrix2<f64>; 3],
}

impl PlateJet {
    /// Induced metric `DyᵀDy`.
    pub fn metric(&self) -> Matrix2<f64> {
        self.jacobian.transpose() * self.jacobian
    }

    /// Squared Frobenius norm of the 3×2×2 second-derivative tensor.
    pub fn hessian_norm_squared(&self) -> f64 {
        self.hessian.iter().map(|m| m.norm_squared()).sum()
    }
}

/// In-plane displacement `u`, deflection `v` and their derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FvkJet {
    pub u: Vector2<f64>,
    /// Row `i` is the gradient of `u_i`.
    pub du: Matrix2<f64>,
    pub v: f64,
    pub dv: Vector2<f64>,
    pub d2v: Matrix2<f64>,
}

impl FvkJet {
    /// Pointwise FvK membrane strain `2 sym Du + Dv⊗Dv + Δ² x̂⊥⊗x̂⊥`.
    pub fn strain(&self, x: Vector2<f64>, delta: f64) -> Matrix2<f64> {
        let perp = unit_perp(x);
        self.du + self.du.transpose()
            + self.dv * self.dv.transpose()
            + delta * delta * perp * perp.transpose()
    }
}

/// Image under the angular stretch `ι_Δ` and its Jacobian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorJet {
    pub point: Vector2<f64>,
    pub jacobian: Matrix2<f64>,
}

fn unit(x: Vector2<f64>) -> Vector2<f64> {
    x / x.norm()
}

fn unit_perp(x: Vector2<f64>) -> Vector2<f64> {
    let n = x.norm();
    Vector2::new(-x.y / n, x.x / n)
}

fn nonzero(x: Vector2<f64>, what: &str) -> Result<f64> {
    let r = x.norm();
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::domain(format!("{what} is undefined at x = ({}, {})", x.x, x.y)))
    }
}

/// `y^Δ(x) = sqrt(1 - Δ²) x + Δ|x| e₃`. Defined everywhere, including the tip.
pub fn cone_point(x: Vector2<f64>, delta: f64) -> Vector3<f64> {
    let c = (1.0 - delta * delta).sqrt();
    Vector3::new(c * x.x, c * x.y, delta * x.norm())
}

/// Cone map with derivatives; `D²y^Δ = Δ|x|⁻¹ e₃⊗x̂⊥⊗x̂⊥`.
pub fn cone_map(x: Vector2<f64>, delta: f64) -> Result<PlateJet> {
    let r = nonzero(x, "cone derivative")?;
    let c = (1.0 - delta * delta).sqrt();
    let xh = unit(x);
    let perp = unit_perp(x);
    let mut jacobian = Matrix3x2::zeros();
    jacobian[(0, 0)] = c;
    jacobian[(1, 1)] = c;
    jacobian.set_row(2, &(delta * xh).transpose());
    let tip = perp * perp.transpose() * (delta / r);
    Ok(PlateJet {
        value: cone_point(x, delta),
        jacobian,
        hessian: [Matrix2::zeros(), Matrix2::zeros(), tip],
    })
}

/// `g_Δ(x) = Id − Δ² x̂⊥⊗x̂⊥`.
pub fn reference_metric(x: Vector2<f64>, delta: f64) -> Result<Matrix2<f64>> {
    nonzero(x, "reference metric")?;
    let perp = unit_perp(x);
    Ok(Matrix2::identity() - delta * delta * perp * perp.transpose())
}

/// Quintic C² ramp: 0 below 1/2, 1 above 1. Returns `(η, η′, η″)`.
///
/// `sup|η′| = 3.75` and `sup|η″| ≈ 23.09`.
pub fn cutoff(t: f64) -> (f64, f64, f64) {
    if t <= 0.5 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let s = 2.0 * t - 1.0;
        let eta = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        let d1 = 30.0 * s * s * (1.0 - s) * (1.0 - s);
        let d2 = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        (eta, 2.0 * d1, 4.0 * d2)
    }
}

/// `e(x) = η(|x|/h)` with its gradient and Hessian.
fn radial_cutoff(x: Vector2<f64>, r: f64, h: f64) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let (eta, d1, d2) = cutoff(r / h);
    let xh = unit(x);
    let perp = unit_perp(x);
    let grad = xh * (d1 / h);
    let hess = xh * xh.transpose() * (d2 / (h * h)) + perp * perp.transpose() * (d1 / (h * r));
    (eta, grad, hess)
}

/// Plate ansatz `y₀(x) = η(|x|/h) y^Δ(x)`.
pub fn ansatz_plate(x: Vector2<f64>, params: &Params) -> Result<PlateJet> {
    let r = nonzero(x, "plate ansatz")?;
    let cone = cone_map(x, params.delta)?;
    let (e, de, d2e) = radial_cutoff(x, r, params.h);
    let mut jacobian = cone.jacobian * e;
    let mut hessian = [Matrix2::zeros(); 3];
    for i in 0..3 {
        let yi = cone.value[i];
        let dyi: Vector2<f64> = cone.jacobian.row(i).transpose();
        jacobian.set_row(i, &(jacobian.row(i) + (de * yi).transpose()));
        hessian[i] = d2e * yi
            + de * dyi.transpose()
            + dyi * de.transpose()
            + cone.hessian[i] * e;
    }
    Ok(PlateJet {
        value: cone.value * e,
        jacobian,
        hessian,
    })
}

/// FvK ansatz `u = −(Δ²/2) η(|x|/h) x`, `v = Δ η(|x|/h) |x|`.
pub fn ansatz_fvk(x: Vector2<f64>, params: &Params) -> Result<FvkJet> {
    let r = nonzero(x, "FvK ansatz")?;
    let d = params.delta;
    let (e, de, d2e) = radial_cutoff(x, r, params.h);
    let xh = unit(x);
    let perp = unit_perp(x);
    let k = -0.5 * d * d;
    let u = x * (k * e);
    let du = (x * de.transpose() + Matrix2::identity() * e) * k;
    let v = d * e * r;
    let dv = (de * r + xh * e) * d;
    let d2v = (d2e * r + de * xh.transpose() + xh * de.transpose() + perp * perp.transpose() * (e / r)) * d;
    Ok(FvkJet { u, du, v, dv, d2v })
}

fn check_deficit(delta: f64) -> Result<f64> {
    if (0.0..1.0).contains(&delta) {
        Ok((1.0 - delta * delta).sqrt())
    } else {
        Err(Error::InvalidParams(format!("deficit delta = {delta} not in [0, 1)")))
    }
}

/// Angular stretch `ι_Δ` from the sector `|arg x| < sqrt(1 − Δ²) π` onto the disc.
///
/// `Dι = ẑ⊗x̂ + (1 − Δ²)^{-1/2} ẑ⊥⊗x̂⊥` where `z = ι_Δ(x)`.
pub fn sector_map(x: Vector2<f64>, delta: f64) -> Result<SectorJet> {
    let c = check_deficit(delta)?;
    let r = nonzero(x, "sector map")?;
    if r > 1.0 + 1e-12 {
        return Err(Error::domain(format!("|x| = {r} outside the unit disc")));
    }
    let phi = x.y.atan2(x.x);
    if phi.abs() >= c * PI {
        return Err(Error::domain(format!(
            "angle {phi} outside the sector (|angle| < {})",
            c * PI
        )));
    }
    let psi = phi / c;
    let zh = Vector2::new(psi.cos(), psi.sin());
    let zp = Vector2::new(-zh.y, zh.x);
    let jacobian = zh * unit(x).transpose() + zp * unit_perp(x).transpose() / c;
    Ok(SectorJet {
        point: zh * r,
        jacobian,
    })
}

/// Inverse of [`sector_map`], defined on the disc minus the cut along the negative axis.
pub fn sector_inverse(z: Vector2<f64>, delta: f64) -> Result<Vector2<f64>> {
    let c = check_deficit(delta)?;
    let r = nonzero(z, "inverse sector map")?;
    let psi = z.y.atan2(z.x);
    if psi.abs() >= PI {
        return Err(Error::domain("point lies on the cut of the sector map"));
    }
    let phi = psi * c;
    Ok(Vector2::new(r * phi.cos(), r * phi.sin()))
}

/// Sector-glued plate ansatz `y^h = y₀ ∘ ι_Δ` with its unit normal, evaluated at a
/// point `z = ι_Δ(x)` of the disc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorAnsatz {
    /// `D y^h` at `x = j(z)`.
    pub jacobian: Matrix3x2<f64>,
    /// Unit normal `ν`.
    pub normal: Vector3<f64>,
    /// `Dν` at `x = j(z)`.
    pub normal_jacobian: Matrix3x2<f64>,
}

/// Evaluates the sector ansatz at the disc point `z`.
///
/// The normal of `y₀` away from the collapsed core is the cone normal
/// `(−Δ ẑ, sqrt(1 − Δ²))`, constant along rays; it is used for every `z ≠ 0`,
/// including the core `|z| ≤ h/2` where `y₀` vanishes identically.
pub fn sector_ansatz(z: Vector2<f64>, params: &Params) -> Result<SectorAnsatz> {
    let r = nonzero(z, "sector ansatz")?;
    let d = params.delta;
    let c = (1.0 - d * d).sqrt();
    let x = sector_inverse(z, d)?;
    let iota = sector_map(x, d)?;
    let flat = ansatz_plate(z, params)?;
    let zh = unit(z);
    let zp = unit_perp(z);
    let normal = Vector3::new(-d * zh.x, -d * zh.y, c);
    // ∂_ψ ν / r along ẑ⊥ in the disc.
    let dnu_tan = Vector3::new(-d * zp.x, -d * zp.y, 0.0) / r;
    let dnu_disc = dnu_tan * zp.transpose();
    Ok(SectorAnsatz {
        jacobian: flat.jacobian * iota.jacobian,
        normal,
        normal_jacobian: dnu_disc * iota.jacobian,
    })
}
