//! Spectral preconditioner for the discrete energies.
//!
//! The Gauss–Newton Hessian of either model, linearized about a radially
//! symmetric reference state, commutes with rotations. After rotating the
//! horizontal unknowns into the polar frame each angular Fourier mode decouples into a banded
//! system in the ring index. Applying the inverse costs a few FFTs per ring
//! and one banded solve per mode, and removes both the scale disparity
//! between membrane and bending stiffness and the near-isometric coupling of
//! in-plane and out-of-plane motion that make plain L-BFGS crawl.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::geometry::{Model, Params};
use crate::grid::PolarGrid;

/// Half bandwidth in interleaved unknowns: stencils reach three rings away.
const BAND: usize = 11;

/// Lower band of a symmetric matrix, factored in place by Cholesky.
#[derive(Clone)]
struct BandCholesky {
    n: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    fn zeros(n: usize) -> Self {
        BandCholesky {
            n,
            data: vec![0.0; n * (BAND + 1)],
        }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * (BAND + 1) + (i - j)]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (BAND + 1) + (i - j)]
    }

    /// Adds `weight · row rowᵀ` for a sparse row.
    fn add_outer(&mut self, row: &[(usize, f64)], weight: f64) {
        for &(i, a) in row {
            for &(j, b) in row {
                if j <= i {
                    *self.at(i, j) += weight * a * b;
                }
            }
        }
    }

    fn factor(&mut self) {
        for i in 0..self.n {
            // relative floor keeps exact symmetries (rigid motions) invertible
            let d = self.get(i, i);
            *self.at(i, i) = if d > 0.0 { d * (1.0 + 1e-9) } else { 1.0 };
        }
        for i in 0..self.n {
            let lo = i.saturating_sub(BAND);
            for j in lo..=i {
                let mut sum = self.get(i, j);
                for k in lo.max(j.saturating_sub(BAND))..j {
                    sum -= self.get(i, k) * self.get(j, k);
                }
                if i == j {
                    *self.at(i, i) = sum.max(1e-300).sqrt();
                } else {
                    *self.at(i, j) = sum / self.get(j, j);
                }
            }
        }
    }

    fn solve(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let mut sum = x[i];
            for k in i.saturating_sub(BAND)..i {
                sum -= self.get(i, k) * x[k];
            }
            x[i] = sum / self.get(i, i);
        }
        for i in (0..self.n).rev() {
            let mut sum = x[i];
            for k in i + 1..(i + BAND + 1).min(self.n) {
                sum -= self.get(k, i) * x[k];
            }
            x[i] = sum / self.get(i, i);
        }
    }
}

/// Inverse of the mode-decoupled Gauss–Newton Hessian about a radial reference.
#[derive(Clone)]
pub(crate) struct SpectralPreconditioner {
    n_r: usize,
    n_phi: usize,
    cos_phi: Vec<f64>,
    sin_phi: Vec<f64>,
    plate: bool,
    modes: Vec<BandCholesky>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralPreconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralPreconditioner")
            .field("n_r", &self.n_r)
            .field("n_phi", &self.n_phi)
            .field("plate", &self.plate)
            .finish()
    }
}

/// Coefficients of one linearized strain component on a ring: for each local
/// unknown, the multipliers of the value, its first and its second `s`-derivative.
type Row = [[f64; 3]; 3];

impl SpectralPreconditioner {
    /// Builds the preconditioner about the ring averages of the flat state `x`.
    /// Returns `None` for an odd number of angular nodes.
    pub(crate) fn new(params: &Params, grid: &PolarGrid, x: &[f64]) -> Option<Self> {
        let (n_r, n_phi) = (grid.n_r(), grid.n_phi());
        if n_phi % 2 != 0 || x.len() != 3 * grid.len() {
            return None;
        }
        let radii = grid.radii();
        let dphi = grid.dphi();
        let plate = params.model == Model::Plate;
        let ring_mean = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            (0..n_r).map(|k| (0..n_phi).map(|j| f(k, j)).sum::<f64>() / n_phi as f64).collect()
        };
        let n = grid.len();
        let radial_part = ring_mean(&|k, j| grid.cos(j) * x[grid.index(k, j)] + grid.sin(j) * x[n + grid.index(k, j)]);
        let vertical = ring_mean(&|k, j| x[2 * n + grid.index(k, j)]);
        let d1 = grid.radial_first();
        let d2 = grid.radial_second();
        let slope_rho = d1.apply_column(&radial_part);
        let slope_z = d1.apply_column(&vertical);

        // FvK displaces the flat disk; the plate reference is the map itself
        let mut slope = vec![1.0; n_r];
        let mut hoop = vec![1.0; n_r];
        let mut tilt = vec![0.0; n_r];
        for k in 0..n_r {
            let r = radii[k];
            tilt[k] = slope_z[k] / r;
            if plate {
                slope[k] = slope_rho[k] / r;
                hoop[k] = radial_part[k] / r;
            }
        }

        let h2 = params.h * params.h;
        let mut modes = Vec::with_capacity(n_phi / 2 + 1);
        for m in 0..=n_phi / 2 {
            let md = m as f64 * dphi;
            let sigma = md.sin() / dphi;
            let lambda = (2.0 - 2.0 * md.cos()) / (dphi * dphi);
            let mut band = BandCholesky::zeros(3 * n_r);
            for k in 0..n_r {
                let ir = 1.0 / radii[k];
                let ir2 = ir * ir;
                let w = 2.0 * grid.node_weight(k);
                let mut rows: Vec<(f64, Row)> = Vec::with_capacity(12);
                // linearized metric defect in the cylindrical frame (radial,
                // angular, vertical) about a radially symmetric reference
                let (p, q, g) = (slope[k], hoop[k], tilt[k]);
                rows.push((w, [[0.0, 2.0 * p * ir, 0.0], [0.0; 3], [0.0, 2.0 * g * ir, 0.0]]));
                rows.push((w, [[2.0 * q * ir, 0.0, 0.0], [2.0 * q * sigma * ir, 0.0, 0.0], [0.0; 3]]));
                rows.push((2.0 * w, [[-sigma * p * ir, 0.0, 0.0], [-p * ir, q * ir, 0.0], [-g * sigma * ir, 0.0, 0.0]]));
                let bent: &[usize] = if plate { &[0, 1, 2] } else { &[2] };
                for &c in bent {
                    let mut put = |wt: f64, coeffs: [f64; 3]| {
                        let mut row = [[0.0; 3]; 3];
                        row[c] = coeffs;
                        rows.push((wt, row));
                    };
                    put(h2 * w, [0.0, -ir2, ir2]);
                    put(2.0 * h2 * w, [sigma * ir2, -sigma * ir2, 0.0]);
                    put(h2 * w, [-lambda * ir2, ir2, 0.0]);
                }
                for (wt, row) in rows {
                    let mut sparse = Vec::with_capacity(24);
                    for (c, ops) in row.iter().enumerate() {
                        if ops[0] != 0.0 {
                            sparse.push((3 * k + c, ops[0]));
                        }
                        for (op, stencil) in [(ops[1], d1), (ops[2], d2)] {
                            if op != 0.0 {
                                let (start, coeffs) = stencil.row(k);
                                for (i, &a) in coeffs.iter().enumerate() {
                                    sparse.push((3 * (start + i) + c, op * a));
                                }
                            }
                        }
                    }
                    band.add_outer(&sparse, wt);
                }
            }
            band.factor();
            modes.push(band);
        }

        let mut planner = FftPlanner::new();
        Some(SpectralPreconditioner {
            n_r,
            n_phi,
            cos_phi: (0..n_phi).map(|j| grid.cos(j)).collect(),
            sin_phi: (0..n_phi).map(|j| grid.sin(j)).collect(),
            plate,
            modes,
            forward: planner.plan_fft_forward(n_phi),
            inverse: planner.plan_fft_inverse(n_phi),
        })
    }

    /// Applies the inverse in place to a flat vector of three planes.
    pub(crate) fn apply(&self, v: &mut [f64]) {
        let (n_r, n_phi) = (self.n_r, self.n_phi);
        let n = n_r * n_phi;
        let half = n_phi / 2;
        // rotate the horizontal components into the polar frame
        for k in 0..n_r {
            for j in 0..n_phi {
                let i = k * n_phi + j;
                let (c, s) = (self.cos_phi[j], self.sin_phi[j]);
                let (x, y) = (v[i], v[n + i]);
                v[i] = c * x + s * y;
                v[n + i] = -s * x + c * y;
            }
        }
        // orthonormal real Fourier coefficients: cos for m = 0..=N/2, sin for 1..N/2
        let scale0 = 1.0 / (n_phi as f64).sqrt();
        let scale = (2.0 / n_phi as f64).sqrt();
        let mut a = vec![0.0; 3 * n_r * (half + 1)];
        let mut b = vec![0.0; 3 * n_r * (half + 1)];
        let at = |c: usize, k: usize, m: usize| (m * n_r + k) * 3 + c;
        let mut buf = vec![Complex::new(0.0, 0.0); n_phi];
        for c in 0..3 {
            for k in 0..n_r {
                let src = &v[c * n + k * n_phi..c * n + (k + 1) * n_phi];
                buf.iter_mut().zip(src).for_each(|(z, &x)| *z = Complex::new(x, 0.0));
                self.forward.process(&mut buf);
                a[at(c, k, 0)] = buf[0].re * scale0;
                a[at(c, k, half)] = buf[half].re * scale0;
                for m in 1..half {
                    a[at(c, k, m)] = buf[m].re * scale;
                    b[at(c, k, m)] = -buf[m].im * scale;
                }
            }
        }
        // per-mode solves; the angular component pairs with the opposite parity
        let len = 3 * n_r;
        let mut rhs = vec![0.0; len];
        for m in 0..=half {
            let band = &self.modes[m];
            let base = m * len;
            for k in 0..n_r {
                rhs[3 * k] = a[base + 3 * k];
                rhs[3 * k + 1] = if m == 0 || m == half { a[base + 3 * k + 1] } else { b[base + 3 * k + 1] };
                rhs[3 * k + 2] = a[base + 3 * k + 2];
            }
            band.solve(&mut rhs);
            for k in 0..n_r {
                a[base + 3 * k] = rhs[3 * k];
                a[base + 3 * k + 2] = rhs[3 * k + 2];
                if m == 0 || m == half {
                    a[base + 3 * k + 1] = rhs[3 * k + 1];
                } else {
                    b[base + 3 * k + 1] = rhs[3 * k + 1];
                }
            }
            if m == 0 || m == half {
                continue;
            }
            for k in 0..n_r {
                rhs[3 * k] = b[base + 3 * k];
                rhs[3 * k + 1] = -a[base + 3 * k + 1];
                rhs[3 * k + 2] = b[base + 3 * k + 2];
            }
            // the cosine slot of the angular component still holds its input
            band.solve(&mut rhs);
            for k in 0..n_r {
                b[base + 3 * k] = rhs[3 * k];
                a[base + 3 * k + 1] = -rhs[3 * k + 1];
                b[base + 3 * k + 2] = rhs[3 * k + 2];
            }
        }
        let inv0 = (n_phi as f64).sqrt();
        let inv = (n_phi as f64 / 2.0).sqrt();
        for c in 0..3 {
            for k in 0..n_r {
                buf[0] = Complex::new(a[at(c, k, 0)] * inv0, 0.0);
                buf[half] = Complex::new(a[at(c, k, half)] * inv0, 0.0);
                for m in 1..half {
                    let z = Complex::new(a[at(c, k, m)] * inv, -b[at(c, k, m)] * inv);
                    buf[m] = z;
                    buf[n_phi - m] = z.conj();
                }
                self.inverse.process(&mut buf);
                let dst = &mut v[c * n + k * n_phi..c * n + (k + 1) * n_phi];
                dst.iter_mut().zip(&buf).for_each(|(x, z)| *x = z.re / n_phi as f64);
            }
        }
        // rotate back
        for k in 0..n_r {
            for j in 0..n_phi {
                let i = k * n_phi + j;
                let (c, s) = (self.cos_phi[j], self.sin_phi[j]);
                let (radial, angular) = (v[i], v[n + i]);
                v[i] = c * radial - s * angular;
                v[n + i] = s * radial + c * angular;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::random_smooth_field;
    use crate::grid::Field;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn band_cholesky_solves_spd_system() {
        let n = 30;
        let mut m = BandCholesky::zeros(n);
        for i in 0..n {
            let row: Vec<(usize, f64)> = (i..(i + 4).min(n)).map(|j| (j, 1.0 + (i + j) as f64 * 0.1)).collect();
            m.add_outer(&row, 1.0);
            m.add_outer(&[(i, 1.0)], 0.5);
        }
        let dense: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i.abs_diff(j) <= BAND { m.get(i.max(j), i.min(j)) } else { 0.0 }).collect())
            .collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b: Vec<f64> = dense.iter().map(|row| dot(row, &x)).collect();
        m.factor();
        m.solve(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-7, "{a} {e}");
        }
    }

    #[test]
    fn preconditioner_is_symmetric_positive_definite() {
        let grid = PolarGrid::new(0.005, 40, 32).unwrap();
        for model in [Model::Fvk, Model::Plate] {
            let params = Params::new(0.05, 0.5, model).unwrap();
            let problem = crate::energy::EnergyProblem::new(params, grid.clone()).unwrap();
            let x0 = problem.ansatz().unwrap();
            let p = SpectralPreconditioner::new(&params, &grid, &x0).unwrap();
            let a: Field<3> = random_smooth_field(&grid, 1, 1.0);
            let b: Field<3> = random_smooth_field(&grid, 2, 1.0);
            let (a, b) = (a.to_flat(), b.to_flat());
            let (mut pa, mut pb) = (a.clone(), b.clone());
            p.apply(&mut pa);
            p.apply(&mut pb);
            let (ab, ba) = (dot(&a, &pb), dot(&b, &pa));
            assert!((ab - ba).abs() < 1e-8 * ab.abs().max(ba.abs()), "{ab} {ba}");
            assert!(dot(&a, &pa) > 0.0 && dot(&b, &pb) > 0.0);
        }
    }

    #[test]
    fn odd_angular_count_falls_back() {
        let grid = PolarGrid::new(0.01, 16, 15).unwrap();
        let params = Params::new(0.1, 0.5, Model::Fvk).unwrap();
        assert!(SpectralPreconditioner::new(&params, &grid, &vec![0.0; 3 * grid.len()]).is_none());
    }
}
