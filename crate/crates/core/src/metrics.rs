//! GKP squeezing operators, Wigner functions and quadrature marginals.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::fock::{CVec, DensityMatrix, FockDim, OpKind, OperatorMatrix, StateVector, C64};
use crate::gates::{apply_displacement, quadrature_function, SQRT_PI};
use crate::linalg::hermitian_eigen;
use crate::spectrum::quadrature_spectrum;

/// Q_1 (mu=1) takes +sqrt(S_p) terms, Q_0 takes -:
/// Q = (4 +- sqrt(S_p) +- sqrt(S_p)^dag - S_x - S_x^dag) / 2.
pub fn q_operator(mu: u8, dim: FockDim) -> Result<OperatorMatrix> {
    let sign = q_sign(mu)?;
    let n = dim.size();
    let sqrt_sp = quadrature_function(dim, 0.0, |l| C64::from_polar(1.0, -SQRT_PI * l));
    let sx = quadrature_function(dim, FRAC_PI_2, |l| C64::from_polar(1.0, -2.0 * SQRT_PI * l));
    let id = DMatrix::<C64>::identity(n, n);
    let m = (id * C64::from(4.0) + (&sqrt_sp + sqrt_sp.adjoint()) * C64::from(sign) - &sx - sx.adjoint())
        * C64::from(0.5);
    let m = (&m + m.adjoint()) * C64::from(0.5);
    OperatorMatrix::new(dim, m, OpKind::Hermitian)
}

fn q_sign(mu: u8) -> Result<f64> {
    match mu {
        0 => Ok(-1.0),
        1 => Ok(1.0),
        _ => invalid(format!("mu must be 0 or 1, got {mu}")),
    }
}

/// <sqrt(S_p)> and <S_x> from the x- and p-basis coefficients.
pub fn stabilizer_expectations(psi: &StateVector) -> (C64, C64) {
    let spec = quadrature_spectrum(psi.dim.size());
    let cx = spec.coefficients(&psi.amps, 0.0);
    let cp = spec.coefficients(&psi.amps, FRAC_PI_2);
    let mut sp = C64::new(0.0, 0.0);
    let mut sx = C64::new(0.0, 0.0);
    for k in 0..spec.size() {
        let l = spec.lambda[k];
        sp += C64::from_polar(cx[k].norm_sqr(), -SQRT_PI * l);
        sx += C64::from_polar(cp[k].norm_sqr(), -2.0 * SQRT_PI * l);
    }
    (sp, sx)
}

/// <Q_mu> = 2 +- Re<sqrt(S_p)> - Re<S_x>.
pub fn q_expectation(psi: &StateVector, mu: u8) -> Result<f64> {
    let sign = q_sign(mu)?;
    let (sp, sx) = stabilizer_expectations(psi);
    Ok(2.0 + sign * sp.re - sx.re)
}

pub fn q_db(value: f64) -> Result<f64> {
    if !(value > 0.0) {
        return invalid(format!("dB needs a positive value, got {value}"));
    }
    Ok(10.0 * value.log10())
}

#[derive(Debug, Clone, Serialize)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    /// Row i is x_axis[i], column j is p_axis[j].
    #[serde(skip)]
    pub values: DMatrix<f64>,
    /// Trapezoid integral over the grid.
    pub grid_integral: f64,
    pub warning: Option<String>,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// 301 points on [-6 sqrt(pi), 6 sqrt(pi)].
pub fn default_axis() -> Vec<f64> {
    linspace(-6.0 * SQRT_PI, 6.0 * SQRT_PI, 301)
}

fn check_axis(a: &[f64]) -> Result<()> {
    if a.is_empty() || a.iter().any(|v| !v.is_finite()) || a.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("axis must be finite and strictly increasing");
    }
    Ok(())
}

fn trapz_weights(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = a[i + 1] - a[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// One x row of W for a pure state: chi = D(-x0/sqrt2) psi in the x basis,
/// W(x0, p0) = (1/pi) Re sum_k conj(c_{N-1-k}) exp(-2i p0 lambda_k) c_k.
fn wigner_row(psi: &StateVector, x0: f64, p_axis: &[f64]) -> Vec<f64> {
    let spec = quadrature_spectrum(psi.dim.size());
    let chi = apply_displacement(psi, C64::from(-x0 / std::f64::consts::SQRT_2));
    let c = spec.to_x(&chi.amps);
    let n = c.len();
    let prod: Vec<C64> = (0..n).map(|k| c[n - 1 - k].conj() * c[k]).collect();
    p_axis
        .iter()
        .map(|&p0| {
            let mut acc = 0.0;
            for k in 0..n {
                acc += (prod[k] * C64::from_polar(1.0, -2.0 * p0 * spec.lambda[k])).re;
            }
            acc / PI
        })
        .collect()
}

fn finish(x_axis: &[f64], p_axis: &[f64], values: DMatrix<f64>) -> WignerGrid {
    let wx = trapz_weights(x_axis);
    let wp = trapz_weights(p_axis);
    let mut integral = 0.0;
    for i in 0..x_axis.len() {
        for j in 0..p_axis.len() {
            integral += wx[i] * wp[j] * values[(i, j)];
        }
    }
    let warning = ((integral - 1.0).abs() > 1e-3)
        .then(|| format!("grid integral {integral:.6} differs from 1; state support exceeds the grid"));
    WignerGrid { x_axis: x_axis.to_vec(), p_axis: p_axis.to_vec(), values, grid_integral: integral, warning }
}

/// Displaced-parity Wigner function, rows evaluated in parallel.
pub fn wigner(psi: &StateVector, x_axis: &[f64], p_axis: &[f64]) -> Result<WignerGrid> {
    check_axis(x_axis)?;
    check_axis(p_axis)?;
    let rows: Vec<Vec<f64>> = x_axis.par_iter().map(|&x0| wigner_row(psi, x0, p_axis)).collect();
    let values = DMatrix::from_fn(x_axis.len(), p_axis.len(), |i, j| rows[i][j]);
    Ok(finish(x_axis, p_axis, values))
}

/// Mixed-state Wigner function through the eigendecomposition of rho.
pub fn wigner_density(rho: &DensityMatrix, x_axis: &[f64], p_axis: &[f64]) -> Result<WignerGrid> {
    check_axis(x_axis)?;
    check_axis(p_axis)?;
    let (w, v) = hermitian_eigen(&rho.mat);
    let mut values = DMatrix::<f64>::zeros(x_axis.len(), p_axis.len());
    for (k, &wk) in w.iter().enumerate() {
        if wk.abs() < 1e-14 {
            continue;
        }
        let psi = StateVector { dim: rho.dim, amps: v.column(k).into_owned() };
        let rows: Vec<Vec<f64>> = x_axis.par_iter().map(|&x0| wigner_row(&psi, x0, p_axis)).collect();
        for (i, row) in rows.iter().enumerate() {
            for (j, val) in row.iter().enumerate() {
                values[(i, j)] += wk * val;
            }
        }
    }
    Ok(finish(x_axis, p_axis, values))
}

/// sum_n c_n phi_n(x) with the Hermite functions phi_n, using a log-scaled
/// upward recurrence so large n and large |x| neither overflow nor underflow.
pub fn hermite_expansion(coeffs: &CVec, x: f64) -> C64 {
    let n = coeffs.len();
    // Values are kept as value * exp(log_scale).
    let mut log_scale = -0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    let mut acc = coeffs[0] * cur;
    for m in 0..n - 1 {
        let next = (2.0 / (m + 1) as f64).sqrt() * x * cur - (m as f64 / (m + 1) as f64).sqrt() * prev;
        prev = cur;
        cur = next;
        acc += coeffs[m + 1] * cur;
        if cur.abs() > 1e150 {
            prev *= 1e-150;
            cur *= 1e-150;
            acc *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    acc * log_scale.exp()
}

/// <x|psi>.
pub fn x_wavefunction(psi: &StateVector, x_axis: &[f64]) -> Vec<C64> {
    x_axis.par_iter().map(|&x| hermite_expansion(&psi.amps, x)).collect()
}

/// <p|psi> = sum_n c_n (-i)^n phi_n(p).
pub fn p_wavefunction(psi: &StateVector, p_axis: &[f64]) -> Vec<C64> {
    let rot = crate::spectrum::rotate(&psi.amps, -FRAC_PI_2);
    p_axis.par_iter().map(|&p| hermite_expansion(&rot, p)).collect()
}

pub fn x_marginal(psi: &StateVector, x_axis: &[f64]) -> Vec<f64> {
    x_wavefunction(psi, x_axis).into_iter().map(|z| z.norm_sqr()).collect()
}

pub fn p_marginal(psi: &StateVector, p_axis: &[f64]) -> Vec<f64> {
    p_wavefunction(psi, p_axis).into_iter().map(|z| z.norm_sqr()).collect()
}

/// Positions of local maxima above `rel` times the global maximum.
pub fn peaks(axis: &[f64], values: &[f64], rel: f64) -> Vec<f64> {
    let top = values.iter().cloned().fold(0.0, f64::max);
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1] && values[i] > rel * top)
        .map(|i| axis[i])
        .collect()
}

pub fn trapz(axis: &[f64], values: &[f64]) -> f64 {
    trapz_weights(axis).iter().zip(values).map(|(w, v)| w * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::parity;
    use crate::gates::{apply_kerr, db_to_natural, squeezed_vacuum};
    use crate::grid::comb_state;

    fn dim(n: usize) -> FockDim {
        FockDim::new(n).unwrap()
    }

    #[test]
    fn q_operator_hermitian_and_consistent() {
        let d = dim(120);
        for mu in 0..=1 {
            let q = q_operator(mu, d).unwrap();
            assert!(q.hermiticity_defect() < 1e-10);
            let s = comb_state(mu, 1, 0.9, d).unwrap();
            let dense = s.expectation(&q).unwrap().re;
            assert!((dense - q_expectation(&s, mu).unwrap()).abs() < 1e-12);
        }
        assert!(q_operator(2, d).is_err());
    }

    #[test]
    fn q_on_vacuum() {
        // Direct matrix element at n_max=200, frozen after first evaluation.
        let d = dim(200);
        let v = StateVector::vacuum(d);
        let q0 = v.expectation(&q_operator(0, d).unwrap()).unwrap().re;
        let q1 = v.expectation(&q_operator(1, d).unwrap()).unwrap().re;
        // Gaussian moments: <e^{-i sqrt(pi) x}> = e^{-pi/4}, <e^{-2i sqrt(pi) p}> = e^{-pi}.
        let want0 = 2.0 - (-PI / 4.0).exp() - (-PI).exp();
        let want1 = 2.0 + (-PI / 4.0).exp() - (-PI).exp();
        assert!((q0 - want0).abs() < 1e-12, "{q0}");
        assert!((q1 - want1).abs() < 1e-12, "{q1}");
    }

    #[test]
    fn q_decreases_with_legs_at_high_squeezing() {
        let r = db_to_natural(15.0);
        let d = dim(700);
        let vals: Vec<f64> = (0..4).map(|s| q_expectation(&comb_state(0, s, r, d).unwrap(), 0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
        assert!(vals[3] > 0.0 && vals[3] < 0.25 * vals[0], "{vals:?}");
    }

    #[test]
    fn db_values() {
        assert_eq!(q_db(1.0).unwrap(), 0.0);
        assert!((q_db(0.1).unwrap() + 10.0).abs() < 1e-12);
        assert!((q_db(2.0).unwrap() - 3.0103).abs() < 1e-4);
        assert!(q_db(0.0).is_err() && q_db(-1.0).is_err());
    }

    #[test]
    fn vacuum_wigner_origin_and_parity_identity() {
        let d = dim(40);
        let v = StateVector::vacuum(d);
        let w = wigner(&v, &[0.0], &[0.0]).unwrap();
        assert!((w.values[(0, 0)] - 1.0 / PI).abs() < 1e-6);
        let s = comb_state(1, 0, 0.7, dim(120)).unwrap();
        let w = wigner(&s, &[0.0], &[0.0]).unwrap();
        let p = s.expectation(&parity(s.dim)).unwrap().re;
        assert!((w.values[(0, 0)] * PI - p).abs() < 1e-8);
    }

    #[test]
    fn squeezed_wigner_variance_ratio() {
        let d = dim(120);
        let r = 0.5;
        let s = squeezed_vacuum(r, d).unwrap();
        let ax = linspace(-6.0, 6.0, 241);
        let w = wigner(&s, &ax, &ax).unwrap();
        let mid = 120;
        let second = |vals: Vec<f64>| {
            let z = trapz(&ax, &vals);
            trapz(&ax, &ax.iter().zip(&vals).map(|(a, v)| a * a * v).collect::<Vec<_>>()) / z
        };
        let vx = second((0..241).map(|i| w.values[(i, mid)]).collect());
        let vp = second((0..241).map(|j| w.values[(mid, j)]).collect());
        assert!((vx / vp - (-4.0 * r).exp()).abs() < 1e-6);
    }

    #[test]
    fn wigner_marginal_consistency() {
        let d = dim(150);
        let s = comb_state(0, 1, db_to_natural(6.0), d).unwrap();
        let xs = linspace(-7.0, 7.0, 57);
        let ps = linspace(-9.0, 9.0, 361);
        let w = wigner(&s, &xs, &ps).unwrap();
        let m = x_marginal(&s, &xs);
        for i in 0..xs.len() {
            let row: Vec<f64> = (0..ps.len()).map(|j| w.values[(i, j)]).collect();
            assert!((trapz(&ps, &row) - m[i]).abs() < 1e-4, "x={}", xs[i]);
        }
    }

    #[test]
    fn kerr_split_wigner_has_two_lobes_and_fringes() {
        let d = dim(200);
        let r = db_to_natural(6.0);
        let a = (PI / 2.0).sqrt();
        let s = apply_kerr(&apply_displacement(&squeezed_vacuum(r, d).unwrap(), C64::from(a)), FRAC_PI_2);
        let xs = linspace(-4.0, 4.0, 161);
        let w = wigner(&s, &xs, &[0.0]).unwrap();
        let col: Vec<f64> = (0..xs.len()).map(|i| w.values[(i, 0)]).collect();
        let pk = peaks(&xs, &col, 0.5);
        assert_eq!(pk.len(), 2);
        assert!(pk.iter().all(|x| (x.abs() - SQRT_PI).abs() < 0.06));
        // Interference fringes along p at x=0 change sign.
        let ps = linspace(-3.0, 3.0, 121);
        let f = wigner(&s, &[0.0], &ps).unwrap();
        let row: Vec<f64> = (0..ps.len()).map(|j| f.values[(0, j)]).collect();
        assert!(row.iter().any(|&v| v > 1e-3) && row.iter().any(|&v| v < -1e-3));
    }

    #[test]
    fn marginals_vacuum_and_comb() {
        let d = dim(300);
        let ax = linspace(-12.0, 12.0, 2401);
        let v = x_marginal(&StateVector::vacuum(d), &ax);
        assert!((trapz(&ax, &v) - 1.0).abs() < 1e-6);
        let var = trapz(&ax, &ax.iter().zip(&v).map(|(a, m)| a * a * m).collect::<Vec<_>>());
        assert!((var - 0.5).abs() < 1e-6);
        let s = comb_state(1, 1, db_to_natural(10.0), d).unwrap();
        let m = x_marginal(&s, &ax);
        assert!((trapz(&ax, &m) - 1.0).abs() < 1e-6);
        let pk = peaks(&ax, &m, 0.2);
        let want = [-3.0, -1.0, 1.0, 3.0].map(|k| k * SQRT_PI);
        assert_eq!(pk.len(), 4);
        for (p, w) in pk.iter().zip(want) {
            assert!((p - w).abs() < 0.02);
        }
    }

    #[test]
    fn hermite_expansion_far_tail_is_finite() {
        let d = dim(1200);
        let s = StateVector::number(d, 1200).unwrap();
        let v = hermite_expansion(&s.amps, 45.0);
        assert!(v.re.is_finite());
        let v = hermite_expansion(&StateVector::vacuum(d).amps, 40.0);
        assert!(v.norm() < 1e-300);
    }

    #[test]
    fn p_marginal_of_squeezed_vacuum() {
        let d = dim(150);
        let r = 0.6;
        let s = squeezed_vacuum(r, d).unwrap();
        let ax = linspace(-12.0, 12.0, 2401);
        let pm = p_marginal(&s, &ax);
        assert!((trapz(&ax, &pm) - 1.0).abs() < 1e-8);
        let var = trapz(&ax, &ax.iter().zip(&pm).map(|(a, m)| a * a * m).collect::<Vec<_>>());
        assert!((var / (0.5 * (2.0 * r).exp()) - 1.0).abs() < 1e-6);
    }
}
