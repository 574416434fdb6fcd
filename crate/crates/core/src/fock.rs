//! Truncated Fock space objects: states, density matrices, operators and the
//! mode-qubit composite used by the teleportation circuit.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const LEAKAGE_LIMIT: f64 = 1e-6;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Basis {|0>, ..., |n_max>}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockDim {
    n_max: usize,
}

impl FockDim {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return invalid("n_max must be at least 1");
        }
        Ok(Self { n_max })
    }

    pub fn n_max(self) -> usize {
        self.n_max
    }

    /// Number of basis states, n_max + 1.
    pub fn size(self) -> usize {
        self.n_max + 1
    }

    /// Width of the guard band at the top of the basis, ceil(0.1 n_max).
    pub fn guard(self) -> usize {
        (self.n_max as f64 * 0.1).ceil() as usize
    }

    /// Number of levels below the guard band.
    pub fn interior(self) -> usize {
        self.size() - self.guard()
    }

    pub(crate) fn check(self, other: FockDim) -> Result<()> {
        if self != other {
            return Err(Error::DimMismatch { left: self.size(), right: other.size() });
        }
        Ok(())
    }
}

/// Weight in the guard band.
pub fn leakage(dim: FockDim, amps: &CVec) -> f64 {
    amps.iter().skip(dim.interior()).map(|a| a.norm_sqr()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub dim: FockDim,
    pub amps: CVec,
}

impl StateVector {
    pub fn new(dim: FockDim, amps: CVec) -> Result<Self> {
        if amps.len() != dim.size() {
            return Err(Error::DimMismatch { left: dim.size(), right: amps.len() });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        if amps.norm() == 0.0 {
            return invalid("state vector has zero norm");
        }
        Ok(Self { dim, amps })
    }

    pub fn vacuum(dim: FockDim) -> Self {
        Self::number(dim, 0).expect("vacuum is always in range")
    }

    pub fn number(dim: FockDim, n: usize) -> Result<Self> {
        if n > dim.n_max() {
            return invalid(format!("|{n}> outside basis of n_max={}", dim.n_max()));
        }
        let mut amps = CVec::zeros(dim.size());
        amps[n] = ONE;
        Ok(Self { dim, amps })
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        self.amps.unscale_mut(n);
        self
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.dim.check(other.dim)?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<C64> {
        self.dim.check(op.dim)?;
        Ok(self.amps.dotc(&(&op.mat * &self.amps)))
    }

    pub fn leakage(&self) -> f64 {
        leakage(self.dim, &self.amps)
    }

    /// Fails with a truncation error if the guard-band weight exceeds `limit`.
    pub fn check_leakage(&self, limit: f64) -> Result<f64> {
        let l = self.leakage();
        if l > limit {
            return Err(Error::Leakage { leakage: l, limit, n_max: self.dim.n_max() });
        }
        Ok(l)
    }

    pub fn mean_photon(&self) -> f64 {
        self.amps.iter().enumerate().map(|(n, a)| n as f64 * a.norm_sqr()).sum()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { dim: self.dim, mat: &self.amps * self.amps.adjoint() }
    }

    /// Multiplies every amplitude by `phase`.
    pub fn with_global_phase(mut self, phase: C64) -> Self {
        self.amps *= phase;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dim: FockDim,
    pub mat: CMat,
}

impl DensityMatrix {
    pub fn new(dim: FockDim, mat: CMat) -> Result<Self> {
        if mat.nrows() != dim.size() || mat.ncols() != dim.size() {
            return Err(Error::DimMismatch { left: dim.size(), right: mat.nrows() });
        }
        Ok(Self { dim, mat })
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (w, _) = linalg::hermitian_eigen(&self.mat);
        w.first().copied().unwrap_or(0.0)
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<C64> {
        self.dim.check(op.dim)?;
        Ok((&self.mat * &op.mat).trace())
    }

    /// <psi|rho|psi>.
    pub fn overlap_pure(&self, psi: &StateVector) -> Result<f64> {
        self.dim.check(psi.dim)?;
        Ok(psi.amps.dotc(&(&self.mat * &psi.amps)).re)
    }

    pub fn mean_photon(&self) -> f64 {
        (0..self.dim.size()).map(|n| n as f64 * self.mat[(n, n)].re).sum()
    }

    pub fn leakage(&self) -> f64 {
        (self.dim.interior()..self.dim.size()).map(|n| self.mat[(n, n)].re).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Unitary,
    Hermitian,
    AntiHermitian,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub dim: FockDim,
    pub mat: CMat,
    pub kind: OpKind,
}

impl OperatorMatrix {
    pub fn new(dim: FockDim, mat: CMat, kind: OpKind) -> Result<Self> {
        if mat.nrows() != dim.size() || mat.ncols() != dim.size() {
            return Err(Error::DimMismatch { left: dim.size(), right: mat.nrows() });
        }
        Ok(Self { dim, mat, kind })
    }

    pub fn identity(dim: FockDim) -> Self {
        Self { dim, mat: CMat::identity(dim.size(), dim.size()), kind: OpKind::Unitary }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.dim.check(psi.dim)?;
        Ok(StateVector { dim: self.dim, amps: &self.mat * &psi.amps })
    }

    pub fn compose(&self, rhs: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.dim.check(rhs.dim)?;
        let kind = match (self.kind, rhs.kind) {
            (OpKind::Unitary, OpKind::Unitary) => OpKind::Unitary,
            _ => OpKind::General,
        };
        Ok(OperatorMatrix { dim: self.dim, mat: &self.mat * &rhs.mat, kind })
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix { dim: self.dim, mat: self.mat.adjoint(), kind: self.kind }
    }

    pub fn scaled(&self, s: C64) -> OperatorMatrix {
        let kind = match self.kind {
            OpKind::Hermitian if s.im == 0.0 => OpKind::Hermitian,
            OpKind::Hermitian if s.re == 0.0 => OpKind::AntiHermitian,
            OpKind::AntiHermitian if s.im == 0.0 => OpKind::AntiHermitian,
            OpKind::AntiHermitian if s.re == 0.0 => OpKind::Hermitian,
            _ => OpKind::General,
        };
        OperatorMatrix { dim: self.dim, mat: &self.mat * s, kind }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    /// max |(U^dag U - I)_{ij}| over the interior block i, j < dim.interior().
    pub fn interior_unitarity_defect(&self) -> f64 {
        let k = self.dim.interior();
        let cols = self.mat.columns(0, k);
        let g = cols.adjoint() * cols;
        max_abs(&(g - CMat::identity(k, k)))
    }

    pub fn exp(&self) -> Result<OperatorMatrix> {
        linalg::expm_op(self)
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn annihilation(dim: FockDim) -> OperatorMatrix {
    let n = dim.size();
    let mut m = CMat::zeros(n, n);
    for k in 1..n {
        m[(k - 1, k)] = C64::from((k as f64).sqrt());
    }
    OperatorMatrix { dim, mat: m, kind: OpKind::General }
}

pub fn creation(dim: FockDim) -> OperatorMatrix {
    annihilation(dim).adjoint()
}

pub fn number_op(dim: FockDim) -> OperatorMatrix {
    let d = CVec::from_fn(dim.size(), |n, _| C64::from(n as f64));
    OperatorMatrix { dim, mat: CMat::from_diagonal(&d), kind: OpKind::Hermitian }
}

/// Position and momentum, x = (a + a^dag)/sqrt2 and p = i(a^dag - a)/sqrt2.
pub fn quadratures(dim: FockDim) -> (OperatorMatrix, OperatorMatrix) {
    let a = annihilation(dim).mat;
    let ad = a.adjoint();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&a + &ad) * C64::from(s);
    let p = (&ad - &a) * (I * s);
    (
        OperatorMatrix { dim, mat: x, kind: OpKind::Hermitian },
        OperatorMatrix { dim, mat: p, kind: OpKind::Hermitian },
    )
}

pub fn parity(dim: FockDim) -> OperatorMatrix {
    let d = CVec::from_fn(dim.size(), |n, _| C64::from(if n % 2 == 0 { 1.0 } else { -1.0 }));
    OperatorMatrix { dim, mat: CMat::from_diagonal(&d), kind: OpKind::Unitary }
}

/// |<a|b>|^2.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

// Mode (x) qubit composite. The mode index is slow and the qubit index fast:
// composite index = 2 n + q.

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    pub dim: FockDim,
    pub amps: CVec,
}

impl CompositeState {
    /// Mode amplitudes of the qubit-q slice.
    pub fn qubit_slice(&self, q: usize) -> CVec {
        CVec::from_fn(self.dim.size(), |n, _| self.amps[2 * n + q])
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn density(&self) -> CMat {
        &self.amps * self.amps.adjoint()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeOperator {
    pub dim: FockDim,
    pub mat: CMat,
}

impl CompositeOperator {
    pub fn apply(&self, s: &CompositeState) -> Result<CompositeState> {
        self.dim.check(s.dim)?;
        Ok(CompositeState { dim: self.dim, amps: &self.mat * &s.amps })
    }
}

fn checked_composite(dim: FockDim) -> Result<usize> {
    dim.size()
        .checked_mul(2)
        .filter(|&n| n.checked_mul(n).is_some())
        .ok_or_else(|| Error::InvalidArgument("composite dimension overflow".into()))
}

pub fn tensor_op(a: &OperatorMatrix, q: &Matrix2<C64>) -> Result<CompositeOperator> {
    let n = checked_composite(a.dim)?;
    let mut m = CMat::zeros(n, n);
    for i in 0..a.dim.size() {
        for j in 0..a.dim.size() {
            let aij = a.mat[(i, j)];
            if aij == ZERO {
                continue;
            }
            for s in 0..2 {
                for t in 0..2 {
                    m[(2 * i + s, 2 * j + t)] = aij * q[(s, t)];
                }
            }
        }
    }
    Ok(CompositeOperator { dim: a.dim, mat: m })
}

pub fn tensor_state(psi: &StateVector, q: [C64; 2]) -> Result<CompositeState> {
    let n = checked_composite(psi.dim)?;
    let amps = CVec::from_fn(n, |k, _| psi.amps[k / 2] * q[k % 2]);
    Ok(CompositeState { dim: psi.dim, amps })
}

/// Traces out the qubit of a composite density matrix of size 2(n_max+1).
pub fn partial_trace_qubit(rho: &CMat) -> Result<DensityMatrix> {
    let n = rho.nrows();
    if n != rho.ncols() {
        return invalid("composite density matrix must be square");
    }
    if n % 2 != 0 {
        return invalid(format!("odd composite dimension {n}"));
    }
    let dim = FockDim::new(n / 2 - 1)?;
    let m = CMat::from_fn(n / 2, n / 2, |i, j| rho[(2 * i, 2 * j)] + rho[(2 * i + 1, 2 * j + 1)]);
    Ok(DensityMatrix { dim, mat: m })
}

pub fn pauli_z() -> Matrix2<C64> {
    Matrix2::new(ONE, ZERO, ZERO, -ONE)
}

pub fn qubit_projector(q: usize) -> Matrix2<C64> {
    let mut m = Matrix2::zeros();
    m[(q, q)] = ONE;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dim(n: usize) -> FockDim {
        FockDim::new(n).unwrap()
    }

    #[test]
    fn ladder_entries() {
        let a = annihilation(dim(2));
        assert_eq!(a.mat[(0, 1)], ONE);
        assert!((a.mat[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
        let v = a.apply(&StateVector::vacuum(dim(2))).unwrap();
        assert_eq!(v.amps.norm(), 0.0);
    }

    #[test]
    fn number_eigenstate() {
        let d = dim(10);
        let a = annihilation(d);
        let n = a.adjoint().compose(&a).unwrap();
        let s = StateVector::number(d, 3).unwrap();
        assert!((s.expectation(&n).unwrap().re - 3.0).abs() < 1e-14);
    }

    #[test]
    fn vacuum_variance_and_commutator() {
        let d = dim(30);
        let (x, p) = quadratures(d);
        let x2 = x.compose(&x).unwrap();
        let v = StateVector::vacuum(d);
        assert!((v.expectation(&x2).unwrap().re - 0.5).abs() < 1e-15);
        let c = &x.mat * &p.mat - &p.mat * &x.mat;
        for i in 0..d.n_max() {
            for j in 0..d.n_max() {
                let want = if i == j { I } else { ZERO };
                assert!((c[(i, j)] - want).norm() < 1e-13);
            }
        }
        assert!(x.hermiticity_defect() < 1e-15 && p.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn dims_rejected() {
        assert!(FockDim::new(0).is_err());
        let a = StateVector::vacuum(dim(3));
        let b = StateVector::vacuum(dim(4));
        assert!(matches!(fidelity(&a, &b), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn fidelity_basics() {
        let d = dim(5);
        let z = StateVector::vacuum(d);
        let o = StateVector::number(d, 1).unwrap();
        assert_eq!(fidelity(&z, &z).unwrap(), 1.0);
        assert_eq!(fidelity(&z, &o).unwrap(), 0.0);
    }

    #[test]
    fn tensor_with_sigma_z() {
        let d = dim(3);
        let t = tensor_op(&OperatorMatrix::identity(d), &pauli_z()).unwrap();
        for k in 0..8 {
            let want = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(t.mat[(k, k)].re, want);
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = tensor_state(&StateVector::vacuum(d), [C64::from(h), C64::from(h)]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
        let r = partial_trace_qubit(&s.density()).unwrap();
        assert!((r.mat[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((r.mat.iter().map(|z| z.norm()).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partial_trace_entangled() {
        let d = dim(1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = CVec::zeros(4);
        amps[0] = C64::from(h);
        amps[3] = C64::from(h);
        let s = CompositeState { dim: d, amps };
        let r = partial_trace_qubit(&s.density()).unwrap();
        let want = CMat::identity(2, 2) * C64::from(0.5);
        assert!(max_abs(&(r.mat - want)) < 1e-15);
        assert!(partial_trace_qubit(&CMat::zeros(5, 5)).is_err());
    }

    #[test]
    fn guard_band() {
        let d = dim(100);
        assert_eq!(d.guard(), 10);
        assert_eq!(d.interior(), 91);
        let s = StateVector::number(d, 95).unwrap();
        assert_eq!(s.leakage(), 1.0);
        assert!(matches!(s.check_leakage(LEAKAGE_LIMIT), Err(Error::Leakage { .. })));
    }
}
