//! Grid-state families and the leg-tracking oracle.
//!
//! Legs are stored in x units. A leg at x is D(x/sqrt2) S(r)|0>.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{CVec, FockDim, StateVector, C64, LEAKAGE_LIMIT};
use crate::gates::{apply_squeezing, db_to_natural, natural_to_db, SQRT_PI};
use crate::spectrum::{quadrature_spectrum, rotate};

pub const MERGE_TOL: f64 = 1e-9 * SQRT_PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub x: f64,
    pub coeff: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombDescription {
    pub legs: Vec<Leg>,
    /// Per-leg squeezing in natural units.
    pub r: f64,
    pub mu: u8,
}

#[derive(Serialize, Deserialize)]
struct LegJson {
    x: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct CombJson {
    mu: u8,
    r_db: f64,
    legs: Vec<LegJson>,
}

/// <leg at x1 | leg at x2> for x-squeezed legs, exp(-(x1-x2)^2 e^{2r} / 4).
pub fn leg_overlap(dx: f64, r: f64) -> f64 {
    (-dx * dx * (2.0 * r).exp() / 4.0).exp()
}

impl CombDescription {
    pub fn with_squeezing(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn len(&self) -> usize {
        self.legs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.legs.is_empty()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.legs.iter().map(|l| l.x).collect()
    }

    /// Squared norm of the realized superposition from the analytic Gram matrix.
    pub fn gram_norm_sqr(&self) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for a in &self.legs {
            for b in &self.legs {
                acc += a.coeff.conj() * b.coeff * leg_overlap(a.x - b.x, self.r);
            }
        }
        acc.re
    }

    /// Rescales coefficients to unit l2 norm (not the realized-state norm).
    pub fn normalized(mut self) -> Self {
        let n = self.legs.iter().map(|l| l.coeff.norm_sqr()).sum::<f64>().sqrt();
        for l in &mut self.legs {
            l.coeff /= n;
        }
        self
    }

    pub fn shifted(mut self, dx: f64) -> Self {
        for l in &mut self.legs {
            l.x += dx;
        }
        self
    }

    /// Multiplies each coefficient by exp(i f(x)).
    pub fn with_phase(mut self, f: impl Fn(f64) -> f64) -> Self {
        for l in &mut self.legs {
            l.coeff *= C64::from_polar(1.0, f(l.x));
        }
        self
    }

    /// Replaces each coefficient by its modulus.
    pub fn strip_phases(mut self) -> Self {
        for l in &mut self.legs {
            l.coeff = C64::from(l.coeff.norm());
        }
        self
    }

    /// Sorts by center and adds coincident legs.
    pub fn merged(self) -> Self {
        let mut legs = self.legs;
        legs.sort_by(|a, b| a.x.total_cmp(&b.x));
        let mut out: Vec<Leg> = Vec::with_capacity(legs.len());
        for l in legs {
            match out.last_mut() {
                Some(last) if (last.x - l.x).abs() <= MERGE_TOL => last.coeff += l.coeff,
                _ => out.push(l),
            }
        }
        out.retain(|l| l.coeff.norm() > 1e-14);
        Self { legs: out, r: self.r, mu: self.mu }
    }

    /// Superposition with another description of the same squeezing.
    pub fn superpose(&self, a: C64, other: &CombDescription, b: C64) -> CombDescription {
        let mut legs: Vec<Leg> = self.legs.iter().map(|l| Leg { x: l.x, coeff: a * l.coeff }).collect();
        legs.extend(other.legs.iter().map(|l| Leg { x: l.x, coeff: b * l.coeff }));
        CombDescription { legs, r: self.r, mu: self.mu }.merged()
    }

    pub fn to_json(&self) -> String {
        let j = CombJson {
            mu: self.mu,
            r_db: natural_to_db(self.r),
            legs: self.legs.iter().map(|l| LegJson { x: l.x, re: l.coeff.re, im: l.coeff.im }).collect(),
        };
        serde_json::to_string_pretty(&j).expect("comb serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: CombJson = serde_json::from_str(s).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self {
            mu: j.mu,
            r: db_to_natural(j.r_db),
            legs: j.legs.into_iter().map(|l| Leg { x: l.x, coeff: C64::new(l.re, l.im) }).collect(),
        })
    }
}

fn check_mu(mu: u8) -> Result<()> {
    if mu > 1 {
        return invalid(format!("mu must be 0 or 1, got {mu}"));
    }
    Ok(())
}

/// Grid indices s for a window: s in [-s_max, s_max] for mu=0 and
/// [-s_max-1, s_max] for mu=1, so both windows are mirror symmetric in x.
pub fn grid_window(mu: u8, s_max: usize) -> std::ops::RangeInclusive<i64> {
    let s = s_max as i64;
    if mu == 0 {
        -s..=s
    } else {
        -s - 1..=s
    }
}

pub fn grid_x(mu: u8, s: i64) -> f64 {
    (2 * s + mu as i64) as f64 * SQRT_PI
}

/// Uniform legs on (2s+mu) sqrt(pi).
pub fn ideal_gkp_comb(mu: u8, s_max: usize) -> Result<CombDescription> {
    check_mu(mu)?;
    let legs: Vec<Leg> = grid_window(mu, s_max).map(|s| Leg { x: grid_x(mu, s), coeff: C64::from(1.0) }).collect();
    Ok(CombDescription { legs, r: 0.0, mu }.normalized())
}

/// s_max giving `legs` legs, if the count is realizable for this mu.
pub fn s_max_for_legs(mu: u8, legs: usize) -> Result<usize> {
    match mu {
        0 if legs % 2 == 1 => Ok(legs / 2),
        1 if legs % 2 == 0 && legs >= 2 => Ok(legs / 2 - 1),
        _ => invalid(format!("{legs} legs cannot form a symmetric mu={mu} window")),
    }
}

/// Realizes sum_j c_j D(x_j/sqrt2) S(r)|0>, normalized with the analytic Gram
/// matrix. All legs share one rotated-basis transform of the squeezed vacuum.
pub fn realize(comb: &CombDescription, dim: FockDim) -> Result<StateVector> {
    if comb.legs.is_empty() {
        return invalid("comb has no legs");
    }
    let sv = apply_squeezing(&StateVector::vacuum(dim), comb.r);
    let spec = quadrature_spectrum(dim.size());
    let base = spec.to_x(&rotate(&sv.amps, -FRAC_PI_2));
    let mut c = CVec::zeros(dim.size());
    for (k, ck) in c.iter_mut().enumerate() {
        let l = spec.lambda[k];
        let mut acc = C64::new(0.0, 0.0);
        for leg in &comb.legs {
            acc += leg.coeff * C64::from_polar(1.0, -leg.x * l);
        }
        *ck = acc * base[k];
    }
    let amps = rotate(&spec.from_x(&c), FRAC_PI_2);
    let norm = comb.gram_norm_sqr().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Numerical("comb superposition has zero norm".into()));
    }
    let s = StateVector { dim, amps: amps / C64::from(norm) };
    s.check_leakage(LEAKAGE_LIMIT)?;
    Ok(s)
}

/// Uniform comb of 2 s_max + 1 (mu=0) or 2 s_max + 2 (mu=1) legs.
pub fn comb_state(mu: u8, s_max: usize, r: f64, dim: FockDim) -> Result<StateVector> {
    realize(&ideal_gkp_comb(mu, s_max)?.with_squeezing(r), dim)
}

/// Legs weighted by exp(-2 pi Delta^2 (s + mu/2)^2), windowed so the discarded
/// weight is below 1e-12.
pub fn gaussian_gkp_comb(mu: u8, delta: f64, r: f64) -> Result<CombDescription> {
    check_mu(mu)?;
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid("Delta must be positive and finite");
    }
    let w = |s: i64| (-2.0 * PI * delta * delta * (s as f64 + mu as f64 / 2.0).powi(2)).exp();
    let total: f64 = {
        // Sum of squared weights until terms vanish.
        let mut t = 0.0;
        let mut s = 0i64;
        loop {
            let a = w(s).powi(2) + if mu == 0 && s == 0 { 0.0 } else { w(-s - mu as i64).powi(2) };
            t += a;
            if a < 1e-30 * t || s > 10_000_000 {
                break;
            }
            s += 1;
        }
        t
    };
    let mut s_max = 0usize;
    loop {
        let kept: f64 = grid_window(mu, s_max).map(|s| w(s).powi(2)).sum();
        if (total - kept) / total < 1e-12 {
            break;
        }
        s_max += 1;
        if s_max > 100_000 {
            return invalid("Gaussian envelope window does not close");
        }
    }
    let legs = grid_window(mu, s_max).map(|s| Leg { x: grid_x(mu, s), coeff: C64::from(w(s)) }).collect();
    Ok(CombDescription { legs, r, mu }.normalized())
}

pub fn gaussian_gkp_state(mu: u8, delta: f64, r: f64, dim: FockDim) -> Result<StateVector> {
    realize(&gaussian_gkp_comb(mu, delta, r)?, dim)
}

/// exp(-Delta n) psi, renormalized.
pub fn fock_envelope(psi: &StateVector, delta: f64) -> StateVector {
    let amps = CVec::from_fn(psi.dim.size(), |n, _| psi.amps[n] * (-delta * n as f64).exp());
    StateVector { dim: psi.dim, amps }.normalized()
}

fn kerr_split(legs: Vec<Leg>) -> Vec<Leg> {
    let a = C64::from_polar(FRAC_1_SQRT_2, -FRAC_PI_4);
    let b = C64::from_polar(FRAC_1_SQRT_2, FRAC_PI_4);
    let mut out = Vec::with_capacity(2 * legs.len());
    for l in legs {
        if l.x.abs() <= MERGE_TOL {
            out.push(l);
        } else {
            out.push(Leg { x: l.x, coeff: a * l.coeff });
            out.push(Leg { x: -l.x, coeff: b * l.coeff });
        }
    }
    out
}

/// x shifts of the protocol displacements: sqrt(pi), then 2^{j-1+mu} sqrt(pi).
pub fn protocol_shifts(mu: u8, n_cycles: usize) -> Vec<f64> {
    let mut v = vec![SQRT_PI];
    v.extend((1..=n_cycles).map(|j| 2f64.powi(j as i32 - 1 + mu as i32) * SQRT_PI));
    v
}

/// Leg list produced by the correction-free protocol.
pub fn phased_comb_oracle(mu: u8, n_cycles: usize) -> Result<CombDescription> {
    check_mu(mu)?;
    let mut comb = CombDescription { legs: vec![Leg { x: 0.0, coeff: C64::from(1.0) }], r: 0.0, mu };
    for dx in protocol_shifts(mu, n_cycles) {
        comb = comb.shifted(dx);
        comb.legs = kerr_split(comb.legs);
        comb = comb.merged();
    }
    Ok(comb)
}

/// Piecewise-constant phase. Interval i is (b_{i-1}, b_i], so `values` has one
/// more entry than `breakpoints`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl PhaseProfile {
    pub fn constant(v: f64) -> Self {
        Self { breakpoints: vec![], values: vec![v] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b < x);
        self.values[i]
    }

    /// x -> phi(x - s).
    pub fn shifted(&self, s: f64) -> Self {
        Self { breakpoints: self.breakpoints.iter().map(|b| b + s).collect(), values: self.values.clone() }
    }

    /// Samples arg(c) of each leg as a profile with breakpoints midway between legs.
    pub fn from_comb(comb: &CombDescription) -> Self {
        let c = comb.clone().merged();
        let breakpoints = c.legs.windows(2).map(|w| 0.5 * (w[0].x + w[1].x)).collect();
        let values = c.legs.iter().map(|l| l.coeff.arg()).collect();
        Self { breakpoints, values }
    }
}

/// prod_k exp(i pi Theta(2^{k-(1-mu)} - u) / 2) with u = x / (2 sqrt(pi)) and
/// Theta(0) = 1.
pub fn closed_form_phase(mu: u8, n_cycles: usize) -> Result<PhaseProfile> {
    check_mu(mu)?;
    let mut b: Vec<f64> = (1..=n_cycles)
        .map(|k| 2f64.powi(k as i32 - (1 - mu as i32)) * 2.0 * SQRT_PI)
        .collect();
    b.sort_by(f64::total_cmp);
    let values = (0..=b.len()).map(|i| FRAC_PI_2 * (b.len() - i) as f64).collect();
    Ok(PhaseProfile { breakpoints: b, values })
}

/// Boundary amplitude factor: mu=0 interior legs carry (1+i) relative to the
/// two outermost legs; mu=1 legs carry 1.
pub fn delta_s(mu: u8, x: f64, x_outer: f64) -> C64 {
    if mu == 1 || (x.abs() - x_outer).abs() <= MERGE_TOL {
        C64::from(1.0)
    } else {
        C64::new(1.0, 1.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRow {
    pub x: f64,
    pub oracle: f64,
    pub closed_form: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseComparison {
    pub mu: u8,
    pub n_cycles: usize,
    pub rows: Vec<PhaseRow>,
    pub max_residual: f64,
    pub matches: bool,
}

fn wrap(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Oracle leg phases (with delta_s removed) against a closed-form profile, both
/// referenced to the first leg.
pub fn compare_phases(oracle: &CombDescription, profile: &PhaseProfile) -> PhaseComparison {
    let outer = oracle.legs.iter().map(|l| l.x.abs()).fold(0.0, f64::max);
    let raw: Vec<(f64, f64, f64)> = oracle
        .legs
        .iter()
        .map(|l| (l.x, (l.coeff / delta_s(oracle.mu, l.x, outer)).arg(), profile.eval(l.x)))
        .collect();
    let (o0, c0) = raw.first().map(|&(_, o, c)| (o, c)).unwrap_or((0.0, 0.0));
    let rows: Vec<PhaseRow> = raw
        .into_iter()
        .map(|(x, o, c)| {
            let oracle = wrap(o - o0);
            let closed_form = wrap(c - c0);
            PhaseRow { x, oracle, closed_form, residual: wrap(oracle - closed_form) }
        })
        .collect();
    let max_residual = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    PhaseComparison { mu: oracle.mu, n_cycles: 0, rows, max_residual, matches: max_residual < 1e-9 }
}

/// Fock size that keeps the outermost leg of a comb at squeezing r inside the
/// guard band, with margin.
pub fn suggest_n_max(x_outer: f64, r: f64) -> usize {
    let sx = (-r).exp() * FRAC_1_SQRT_2;
    let sp = r.exp() * FRAC_1_SQRT_2;
    let reach = ((x_outer + 8.0 * sx).powi(2) + (8.0 * sp).powi(2)) / 2.0;
    let n = reach + 6.0 * reach.sqrt() + 30.0;
    ((n / 0.9).ceil() as usize).max(20)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fidelity;
    use crate::gates::{apply_displacement, squeezed_vacuum};
    use std::f64::consts::SQRT_2;

    fn dim(n: usize) -> FockDim {
        FockDim::new(n).unwrap()
    }

    #[test]
    fn ideal_windows() {
        let c = ideal_gkp_comb(0, 0).unwrap();
        assert_eq!(c.centers(), vec![0.0]);
        let c = ideal_gkp_comb(1, 0).unwrap();
        assert_eq!(c.centers(), vec![-SQRT_PI, SQRT_PI]);
        assert_eq!(ideal_gkp_comb(0, 2).unwrap().len(), 5);
        assert!(ideal_gkp_comb(2, 0).is_err());
    }

    #[test]
    fn single_leg_realization_is_displaced_squeezed_state() {
        let d = dim(150);
        let r = db_to_natural(8.0);
        let comb = CombDescription { legs: vec![Leg { x: 1.3, coeff: C64::from(1.0) }], r, mu: 0 };
        let s = realize(&comb, d).unwrap();
        let want = apply_displacement(&squeezed_vacuum(r, d).unwrap(), C64::from(1.3 / SQRT_2));
        assert!((s.amps - want.amps).norm() < 1e-12);
        let c0 = comb_state(0, 0, r, d).unwrap();
        assert!((c0.amps - squeezed_vacuum(r, d).unwrap().amps).norm() < 1e-12);
    }

    #[test]
    fn comb_equals_explicit_sum() {
        let d = dim(260);
        let r = db_to_natural(6.0);
        let s = comb_state(1, 1, r, d).unwrap();
        let sv = squeezed_vacuum(r, d).unwrap();
        let mut acc = CVec::zeros(d.size());
        for sidx in grid_window(1, 1) {
            acc += apply_displacement(&sv, C64::from(grid_x(1, sidx) / SQRT_2)).amps;
        }
        let explicit = StateVector { dim: d, amps: acc }.normalized();
        assert!(1.0 - fidelity(&s, &explicit).unwrap() < 1e-10);
        assert!((s.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gram_normalization_at_low_squeezing() {
        // Overlapping legs: the analytic Gram norm must match the numerical one.
        let d = dim(120);
        let s = comb_state(0, 2, 0.2, d).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_envelope_limits() {
        let c = gaussian_gkp_comb(0, 10.0, 0.5).unwrap();
        let w: Vec<f64> = c.legs.iter().map(|l| l.coeff.norm()).collect();
        let center = c.legs.iter().position(|l| l.x == 0.0).unwrap();
        assert!(w[center] > 0.999999);
        let c = gaussian_gkp_comb(0, 0.3, 0.5).unwrap();
        let k = c.legs.iter().position(|l| l.x == 0.0).unwrap();
        let ratio = c.legs[k + 1].coeff.re / c.legs[k].coeff.re;
        assert!((ratio - (-2.0 * PI * 0.09f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn oracle_leg_counts() {
        for n in 0..=5 {
            let c0 = phased_comb_oracle(0, n).unwrap();
            let c1 = phased_comb_oracle(1, n).unwrap();
            assert_eq!(c0.len(), if n == 0 { 2 } else { (1 << n) + 1 }, "mu=0 n={n}");
            assert_eq!(c1.len(), 1 << (n + 1), "mu=1 n={n}");
        }
        // One Kerr step on a single leg.
        let c = phased_comb_oracle(1, 0).unwrap();
        assert!((c.legs[0].coeff.arg() - FRAC_PI_4).abs() < 1e-15);
        assert!((c.legs[1].coeff.arg() + FRAC_PI_4).abs() < 1e-15);
        assert_eq!(c.centers(), vec![-SQRT_PI, SQRT_PI]);
    }

    #[test]
    fn oracle_central_leg_is_larger() {
        let c = phased_comb_oracle(0, 1).unwrap();
        let mid = c.legs.iter().find(|l| l.x.abs() < 1e-12).unwrap();
        let outer = c.legs.iter().find(|l| l.x > 1.0).unwrap();
        assert!((mid.coeff.norm() / outer.coeff.norm() - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn oracle_grid_and_phase_quantization() {
        for mu in 0..=1u8 {
            for n in 0..=4 {
                let c = phased_comb_oracle(mu, n).unwrap();
                let outer = c.legs.iter().map(|l| l.x.abs()).fold(0.0, f64::max);
                let ref_phase = (c.legs[0].coeff / delta_s(mu, c.legs[0].x, outer)).arg();
                // Before the first cycle both protocols sit on the odd grid.
                let parity = if n == 0 { 1 } else { mu as i64 };
                for l in &c.legs {
                    let u = l.x / SQRT_PI;
                    assert!((u - u.round()).abs() < 1e-9 && (u.round() as i64 - parity) % 2 == 0);
                    let ph = (l.coeff / delta_s(mu, l.x, outer)).arg() - ref_phase;
                    let q = ph / FRAC_PI_2;
                    assert!((q - q.round()).abs() < 1e-9, "mu={mu} n={n} x={u}");
                }
            }
        }
    }

    #[test]
    fn mu1_oracle_without_phases_is_uniform_comb() {
        for n in 0..=3 {
            let c = phased_comb_oracle(1, n).unwrap();
            let m = c.legs[0].coeff.norm();
            assert!(c.legs.iter().all(|l| (l.coeff.norm() - m).abs() < 1e-12));
            let d = dim(suggest_n_max(c.legs.last().unwrap().x, db_to_natural(6.0)));
            let r = db_to_natural(6.0);
            let stripped = realize(&c.clone().strip_phases().with_squeezing(r), d).unwrap();
            let comb = comb_state(1, (1 << n) - 1, r, d).unwrap();
            assert!(1.0 - fidelity(&stripped, &comb).unwrap() < 1e-10);
        }
    }

    #[test]
    fn closed_form_basics() {
        let p = closed_form_phase(0, 0).unwrap();
        assert_eq!(p.values.len(), 1);
        let p = closed_form_phase(1, 3).unwrap();
        for x in [-20.0, -1.0, 0.0, 3.0, 9.0, 40.0] {
            let q = p.eval(x) / FRAC_PI_2;
            assert!((q - q.round()).abs() < 1e-15);
        }
        let c = phased_comb_oracle(0, 0).unwrap();
        let cmp = compare_phases(&c, &closed_form_phase(0, 0).unwrap());
        assert_eq!(cmp.rows.len(), 2);
    }

    #[test]
    fn comb_json_round_trip() {
        let c = phased_comb_oracle(1, 2).unwrap().with_squeezing(db_to_natural(7.8));
        let back = CombDescription::from_json(&c.to_json()).unwrap();
        assert_eq!(back.legs, c.legs);
        assert!((back.r - c.r).abs() < 1e-15);
    }

    #[test]
    fn phase_profile_shift_additivity() {
        let p = closed_form_phase(1, 2).unwrap();
        let a = p.shifted(0.7).shifted(1.1);
        let b = p.shifted(1.8);
        for x in [-5.0, 0.0, 2.5, 7.0, 12.0] {
            assert_eq!(a.eval(x), b.eval(x));
        }
    }
}
