//! Displacement, squeezing and Kerr gates, plus the GKP stabilizer translations.
//!
//! Displacement uses alpha a^dag - alpha* a = -i sqrt2 |alpha| x_theta with
//! theta = arg(alpha) + pi/2, so D(alpha) is diagonal in the rotated-quadrature
//! eigenbasis of the truncated x. This is the exact exponential of the
//! truncated generator.

use std::f64::consts::{FRAC_PI_2, LN_10, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    annihilation, CMat, CVec, FockDim, OpKind, OperatorMatrix, StateVector, C64, LEAKAGE_LIMIT,
};
use crate::linalg;
use crate::spectrum::{quadrature_spectrum, rotate, QuadSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub alpha: C64,
    pub r: f64,
    pub chi_t: f64,
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        if !self.r.is_finite() || self.r < 0.0 {
            return Err(Error::InvalidArgument(format!("squeezing r={} must be finite and >= 0", self.r)));
        }
        if !self.alpha.norm().is_finite() || !self.chi_t.is_finite() {
            return Err(Error::InvalidArgument("gate parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Squeezing in dB to natural units, r = r_db ln10 / 20.
pub fn db_to_natural(r_db: f64) -> f64 {
    r_db * LN_10 / 20.0
}

pub fn natural_to_db(r: f64) -> f64 {
    20.0 * r / LN_10
}

fn spectrum(dim: FockDim) -> std::sync::Arc<QuadSpectrum> {
    quadrature_spectrum(dim.size())
}

/// Dense R(theta) V diag(f(lambda)) V^T R(theta)^dag.
pub(crate) fn quadrature_function(dim: FockDim, theta: f64, f: impl Fn(f64) -> C64) -> CMat {
    let s = spectrum(dim);
    let n = dim.size();
    let vc = s.v.map(C64::from);
    let mut w = vc.clone();
    for k in 0..n {
        let fk = f(s.lambda[k]);
        for z in w.column_mut(k).iter_mut() {
            *z *= fk;
        }
    }
    let mut m = w * vc.transpose();
    if theta != 0.0 {
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= C64::from_polar(1.0, theta * (i as f64 - j as f64));
            }
        }
    }
    m
}

fn displacement_angle(alpha: C64) -> (f64, f64) {
    (alpha.norm(), alpha.arg() + FRAC_PI_2)
}

pub fn displacement(alpha: C64, dim: FockDim) -> Result<OperatorMatrix> {
    let (mag, theta) = displacement_angle(alpha);
    if !mag.is_finite() {
        return Err(Error::NonFinite);
    }
    let mat = quadrature_function(dim, theta, |l| C64::from_polar(1.0, -SQRT_2 * mag * l));
    let op = OperatorMatrix::new(dim, mat, OpKind::Unitary)?;
    let col = StateVector { dim, amps: op.mat.column(0).into_owned() };
    col.check_leakage(LEAKAGE_LIMIT)?;
    Ok(op)
}

/// D(alpha) psi without forming the matrix.
pub fn apply_displacement(psi: &StateVector, alpha: C64) -> StateVector {
    if alpha.norm() == 0.0 {
        return psi.clone();
    }
    let (mag, theta) = displacement_angle(alpha);
    let s = spectrum(psi.dim);
    let amps = s.apply_fn(&psi.amps, theta, |l| C64::from_polar(1.0, -SQRT_2 * mag * l));
    StateVector { dim: psi.dim, amps }
}

/// exp(i f(x)) psi for a real phase function f.
pub fn apply_x_phase(psi: &StateVector, f: impl Fn(f64) -> f64) -> StateVector {
    let s = spectrum(psi.dim);
    StateVector { dim: psi.dim, amps: s.apply_fn(&psi.amps, 0.0, |l| C64::from_polar(1.0, f(l))) }
}

/// exp(i f(p)) psi for a real phase function f.
pub fn apply_p_phase(psi: &StateVector, f: impl Fn(f64) -> f64) -> StateVector {
    let s = spectrum(psi.dim);
    StateVector { dim: psi.dim, amps: s.apply_fn(&psi.amps, FRAC_PI_2, |l| C64::from_polar(1.0, f(l))) }
}

fn squeeze_generator_apply(r: f64, psi: &CVec, out: &mut CVec) {
    let n = psi.len();
    for m in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        if m + 2 < n {
            acc += psi[m + 2] * (((m + 1) * (m + 2)) as f64).sqrt();
        }
        if m >= 2 {
            acc -= psi[m - 2] * ((m * (m - 1)) as f64).sqrt();
        }
        out[m] = acc * (0.5 * r);
    }
}

/// S(r) psi by truncated Taylor steps on the sparse generator, each step with
/// 1-norm at most 1/2.
pub fn apply_squeezing(psi: &StateVector, r: f64) -> StateVector {
    if r == 0.0 {
        return psi.clone();
    }
    let n = psi.dim.size();
    let norm1 = r.abs() * n as f64;
    let steps = (2.0 * norm1).ceil().max(1.0) as usize;
    let h = r / steps as f64;
    let mut y = psi.amps.clone();
    let mut term = CVec::zeros(n);
    let mut next = CVec::zeros(n);
    for _ in 0..steps {
        term.copy_from(&y);
        let mut acc = y.clone();
        for k in 1..80 {
            squeeze_generator_apply(h, &term, &mut next);
            next.unscale_mut(k as f64);
            std::mem::swap(&mut term, &mut next);
            acc += &term;
            if term.norm() <= 1e-18 * acc.norm() {
                break;
            }
        }
        y = acc;
    }
    StateVector { dim: psi.dim, amps: y }
}

/// S(r)|0>, checked against the guard band.
pub fn squeezed_vacuum(r: f64, dim: FockDim) -> Result<StateVector> {
    let s = apply_squeezing(&StateVector::vacuum(dim), r);
    s.check_leakage(LEAKAGE_LIMIT)?;
    Ok(s)
}

pub fn squeezing(r: f64, dim: FockDim) -> Result<OperatorMatrix> {
    if !r.is_finite() {
        return Err(Error::NonFinite);
    }
    let a = annihilation(dim).mat;
    let a2 = &a * &a;
    let gen = (&a2 - a2.adjoint()) * C64::from(0.5 * r);
    let g = OperatorMatrix::new(dim, gen, OpKind::AntiHermitian)?;
    let u = linalg::expm_op(&g)?;
    let col = StateVector { dim, amps: u.mat.column(0).into_owned() };
    col.check_leakage(LEAKAGE_LIMIT)?;
    Ok(u)
}

pub fn kerr_phase(chi_t: f64, n: usize) -> C64 {
    let n2 = (n * n) as f64;
    C64::from_polar(1.0, -(chi_t * n2).rem_euclid(2.0 * PI))
}

pub fn kerr(chi_t: f64, dim: FockDim) -> OperatorMatrix {
    let d = CVec::from_fn(dim.size(), |n, _| kerr_phase(chi_t, n));
    OperatorMatrix { dim, mat: CMat::from_diagonal(&d), kind: OpKind::Unitary }
}

pub fn apply_kerr(psi: &StateVector, chi_t: f64) -> StateVector {
    let amps = CVec::from_fn(psi.dim.size(), |n, _| psi.amps[n] * kerr_phase(chi_t, n));
    StateVector { dim: psi.dim, amps }
}

#[derive(Debug, Clone)]
pub struct Stabilizers {
    pub s_x: OperatorMatrix,
    pub s_p: OperatorMatrix,
    pub sqrt_s_p: OperatorMatrix,
}

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// S_x = exp(-2i sqrt(pi) p), S_p = exp(-2i sqrt(pi) x), sqrt(S_p) = exp(-i sqrt(pi) x).
pub fn stabilizer_ops(dim: FockDim) -> Stabilizers {
    let mk = |theta: f64, c: f64| OperatorMatrix {
        dim,
        mat: quadrature_function(dim, theta, |l| C64::from_polar(1.0, -c * SQRT_PI * l)),
        kind: OpKind::Unitary,
    };
    Stabilizers { s_x: mk(FRAC_PI_2, 2.0), s_p: mk(0.0, 2.0), sqrt_s_p: mk(0.0, 1.0) }
}

/// Rotation exp(i theta n).
pub fn rotation(psi: &StateVector, theta: f64) -> StateVector {
    StateVector { dim: psi.dim, amps: rotate(&psi.amps, theta) }
}
