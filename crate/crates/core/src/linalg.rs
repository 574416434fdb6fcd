//! Dense matrix functions: exponential, principal square root, Hermitian
//! eigendecomposition helpers.

use nalgebra::{Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fock::{CMat, OpKind, OperatorMatrix, C64, I, ZERO};

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(a: &CMat) -> f64 {
    a.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn check_finite(a: &CMat) -> Result<()> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn solve_pade(u: CMat, v: CMat) -> Result<CMat> {
    let p = &v + &u;
    let q = v - u;
    q.lu().solve(&p).ok_or_else(|| Error::Numerical("singular Pade denominator".into()))
}

fn pade_low(a: &CMat, b: &[f64]) -> Result<CMat> {
    let n = a.nrows();
    let a2 = a * a;
    let mut pow = CMat::identity(n, n);
    let mut u = CMat::zeros(n, n);
    let mut v = CMat::zeros(n, n);
    for k in 0..b.len() / 2 {
        v += &pow * C64::from(b[2 * k]);
        u += &pow * C64::from(b[2 * k + 1]);
        pow = &pow * &a2;
    }
    solve_pade(a * u, v)
}

fn pade13(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let b = |k: usize| C64::from(B13[k]);
    let id = CMat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = a * (&a6 * inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + id * b(0);
    solve_pade(u, v)
}

/// Matrix exponential by scaling and squaring with diagonal Pade approximants
/// of degree 3 to 13 chosen from the 1-norm.
pub fn expm(a: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument("expm needs a square matrix".into()));
    }
    check_finite(a)?;
    let norm = one_norm(a);
    for (m, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, b);
        }
    }
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    let scaled = a * C64::from(2f64.powi(-s));
    let mut x = pade13(&scaled)?;
    for _ in 0..s {
        x = &x * &x;
    }
    check_finite(&x)?;
    Ok(x)
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let h = (a + a.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(a.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// f(A) for Hermitian A through its eigendecomposition.
pub fn funm_hermitian(a: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (w, v) = hermitian_eigen(a);
    let mut fv = v.clone();
    for (j, &l) in w.iter().enumerate() {
        let s = f(l);
        fv.column_mut(j).scale_mut_c(s);
    }
    fv * v.adjoint()
}

trait ScaleC {
    fn scale_mut_c(&mut self, s: C64);
}

impl<S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>> ScaleC
    for nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>
{
    fn scale_mut_c(&mut self, s: C64) {
        for z in self.iter_mut() {
            *z *= s;
        }
    }
}

/// Exponential of a tagged operator. Hermitian and anti-Hermitian inputs go
/// through the eigendecomposition, everything else through Pade.
pub fn expm_op(a: &OperatorMatrix) -> Result<OperatorMatrix> {
    check_finite(&a.mat)?;
    let (mat, kind) = match a.kind {
        OpKind::Hermitian => (funm_hermitian(&a.mat, |l| C64::from(l.exp())), OpKind::Hermitian),
        OpKind::AntiHermitian => {
            let h = &a.mat * (-I);
            (funm_hermitian(&h, |l| (I * l).exp()), OpKind::Unitary)
        }
        _ => (expm(&a.mat)?, OpKind::General),
    };
    OperatorMatrix::new(a.dim, mat, kind)
}

/// Principal square root through the complex Schur form and the triangular
/// recurrence. Eigenvalues with modulus below `1e-14 * max|eig|` are treated as
/// exact zeros, which is what rank-deficient error-correction matrices need.
pub fn sqrtm_principal(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidArgument("sqrtm needs a square matrix".into()));
    }
    check_finite(a)?;
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let schur = Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = (0..n).map(|i| t[(i, i)].norm()).fold(0.0, f64::max);
    let zero_tol = 1e-14 * scale;
    let mut r = CMat::zeros(n, n);
    for i in 0..n {
        let l = t[(i, i)];
        if l.norm() <= zero_tol {
            continue;
        }
        if l.re < 0.0 && l.im.abs() <= 1e-10 * scale {
            return Err(Error::BranchAmbiguity(l));
        }
        r[(i, i)] = l.sqrt();
    }
    let tol = 1e-7 * scale.sqrt().max(f64::MIN_POSITIVE);
    for j in 0..n {
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            let d = r[(i, i)] + r[(j, j)];
            r[(i, j)] = if d == ZERO {
                if s.norm() > tol {
                    return Err(Error::Numerical("square root of a defective null block".into()));
                }
                ZERO
            } else {
                s / d
            };
        }
    }
    let out = &q * r * q.adjoint();
    check_finite(&out)?;
    Ok(out)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
