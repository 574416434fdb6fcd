//! The displacement/Kerr generation loop, with and without the symmetry
//! correction.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{fidelity, FockDim, StateVector, C64, LEAKAGE_LIMIT};
use crate::grid::{phased_comb_oracle, realize, CombDescription};
use crate::gates::{apply_displacement, apply_kerr, apply_squeezing, db_to_natural, SQRT_PI};
use crate::metrics::{q_db, stabilizer_expectations};
use crate::optimize::brent_bounded;
use crate::spectrum::{quadrature_spectrum, rotate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub mu: u8,
    pub n_cycles: usize,
    pub r_db: f64,
    pub dim: FockDim,
    pub correction: bool,
    pub beta_bracket: (f64, f64),
    pub beta_tol: f64,
}

impl ProtocolConfig {
    pub fn new(mu: u8, n_cycles: usize, r_db: f64, dim: FockDim, correction: bool) -> Self {
        Self { mu, n_cycles, r_db, dim, correction, beta_bracket: (-0.1, 1.0), beta_tol: 1e-6 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu > 1 {
            return invalid(format!("mu must be 0 or 1, got {}", self.mu));
        }
        if !self.r_db.is_finite() || self.r_db < 0.0 {
            return invalid(format!("r_db must be finite and non-negative, got {}", self.r_db));
        }
        let (lo, hi) = self.beta_bracket;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return invalid("beta bracket must be finite and ordered");
        }
        if !(self.beta_tol > 0.0) {
            return invalid("beta tolerance must be positive");
        }
        Ok(())
    }

    pub fn r(&self) -> f64 {
        db_to_natural(self.r_db)
    }

    /// Kerr angle of every gate in the nominal schedule.
    pub fn nominal_kerr(&self) -> Vec<f64> {
        vec![FRAC_PI_2; self.n_cycles + 1]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolTrace {
    pub mu: u8,
    pub n_cycles: usize,
    pub r_db: f64,
    pub n_max: usize,
    pub correction: bool,
    /// Correction per cycle (empty without correction).
    pub beta: Vec<f64>,
    /// <Q_1> at cycle 0, <Q_mu> afterwards.
    pub q: Vec<f64>,
    pub q_db: Vec<Option<f64>>,
    /// Guard-band weight after every gate.
    pub leakage: Vec<f64>,
    pub kerr_chi_t: Vec<f64>,
    pub failed: bool,
    #[serde(skip)]
    pub states: Option<Vec<StateVector>>,
}

/// Displacement amplitudes: sqrt(pi/2), then 2^{j-1+mu} sqrt(pi/2).
pub fn displacement_schedule(mu: u8, n_cycles: usize) -> Vec<f64> {
    let base = (PI / 2.0).sqrt();
    let mut v = vec![base];
    v.extend((1..=n_cycles).map(|j| 2f64.powi(j as i32 - 1 + mu as i32) * base));
    v
}

/// beta minimizing <Q_mu> of D(i beta)|state>. Only <S_x> depends on beta
/// because D(i beta) = exp(i sqrt2 beta x) is diagonal in the x basis.
pub fn optimize_beta(state: &StateVector, mu: u8, bracket: (f64, f64), tol: f64) -> Result<(f64, f64)> {
    let sign = match mu {
        0 => -1.0,
        1 => 1.0,
        _ => return invalid(format!("mu must be 0 or 1, got {mu}")),
    };
    let spec = quadrature_spectrum(state.dim.size());
    let cx = spec.to_x(&state.amps);
    let (sp, _) = stabilizer_expectations(state);
    let q = |beta: f64| -> f64 {
        let mut c = cx.clone();
        for (ck, &l) in c.iter_mut().zip(&spec.lambda) {
            *ck *= C64::from_polar(1.0, SQRT_2 * beta * l);
        }
        let psi = spec.from_x(&c);
        let cp = spec.to_x(&rotate(&psi, -FRAC_PI_2));
        let sx: f64 = cp
            .iter()
            .zip(&spec.lambda)
            .map(|(z, &l)| z.norm_sqr() * (2.0 * SQRT_PI * l).cos())
            .sum();
        2.0 + sign * sp.re - sx
    };
    let (lo, hi) = bracket;
    let m = brent_bounded(q, lo, hi, tol, 500);
    let edge = 10.0 * tol;
    if m.x - lo < edge || hi - m.x < edge {
        return Err(Error::NoBracket { lo, hi, at: m.x });
    }
    Ok((m.x, m.fx))
}

/// Protocol loop with an explicit Kerr angle per gate (`chi_t.len()` must be
/// n_cycles + 1). The correction, when enabled, is re-optimized every cycle.
pub fn run_protocol(cfg: &ProtocolConfig, chi_t: &[f64], keep_states: bool) -> Result<(StateVector, ProtocolTrace)> {
    cfg.validate()?;
    if chi_t.len() != cfg.n_cycles + 1 {
        return invalid(format!("expected {} Kerr angles, got {}", cfg.n_cycles + 1, chi_t.len()));
    }
    let dim = cfg.dim;
    let mut trace = ProtocolTrace {
        mu: cfg.mu,
        n_cycles: cfg.n_cycles,
        r_db: cfg.r_db,
        n_max: dim.n_max(),
        correction: cfg.correction,
        beta: vec![],
        q: vec![],
        q_db: vec![],
        leakage: vec![],
        kerr_chi_t: chi_t.to_vec(),
        failed: false,
        states: keep_states.then(Vec::new),
    };
    let record = |trace: &mut ProtocolTrace, s: &StateVector| -> Result<()> {
        let l = s.leakage();
        trace.leakage.push(l);
        if let Some(v) = trace.states.as_mut() {
            v.push(s.clone());
        }
        if l > LEAKAGE_LIMIT {
            trace.failed = true;
            return Err(Error::Leakage { leakage: l, limit: LEAKAGE_LIMIT, n_max: dim.n_max() });
        }
        Ok(())
    };

    let mut psi = apply_squeezing(&StateVector::vacuum(dim), cfg.r());
    record(&mut trace, &psi)?;
    for (j, &alpha) in displacement_schedule(cfg.mu, cfg.n_cycles).iter().enumerate() {
        psi = apply_displacement(&psi, C64::from(alpha));
        record(&mut trace, &psi)?;
        psi = apply_kerr(&psi, chi_t[j]);
        let target_mu = if j == 0 { 1 } else { cfg.mu };
        if cfg.correction {
            let (beta, _) = optimize_beta(&psi, target_mu, cfg.beta_bracket, cfg.beta_tol)?;
            psi = apply_displacement(&psi, C64::new(0.0, beta));
            trace.beta.push(beta);
        }
        record(&mut trace, &psi)?;
        let q = crate::metrics::q_expectation(&psi, target_mu)?;
        trace.q.push(q);
        trace.q_db.push(q_db(q).ok());
    }
    Ok((psi, trace))
}

/// Symmetry-enforced generation (correction after every Kerr gate).
pub fn run_symmetry_enforced(cfg: &ProtocolConfig) -> Result<(StateVector, ProtocolTrace)> {
    if !cfg.correction {
        return invalid("symmetry-enforced protocol needs correction = true");
    }
    run_protocol(cfg, &cfg.nominal_kerr(), false)
}

/// Correction-free generation of phased-comb states.
pub fn run_phased_comb(cfg: &ProtocolConfig) -> Result<(StateVector, ProtocolTrace)> {
    if cfg.correction {
        return invalid("phased-comb protocol needs correction = false");
    }
    run_protocol(cfg, &cfg.nominal_kerr(), false)
}

/// Correction-free state with perturbed Kerr angles.
pub fn phased_comb_with_kerr(cfg: &ProtocolConfig, chi_t: &[f64]) -> Result<StateVector> {
    let mut c = *cfg;
    c.correction = false;
    Ok(run_protocol(&c, chi_t, false)?.0)
}

/// Fock size for a protocol configuration, from its outermost leg.
pub fn suggest_dim(mu: u8, n_cycles: usize, r_db: f64) -> FockDim {
    let outer: f64 = crate::grid::protocol_shifts(mu, n_cycles).iter().sum();
    FockDim::new(crate::grid::suggest_n_max(outer, db_to_natural(r_db))).expect("n_max >= 20")
}

/// Uniform-coefficient comb on the leg positions the protocol reaches after
/// `n_cycles` cycles.
pub fn equal_leg_comb(mu: u8, n_cycles: usize, r_db: f64) -> Result<CombDescription> {
    let mut comb = phased_comb_oracle(mu, n_cycles)?;
    for leg in comb.legs.iter_mut() {
        leg.coeff = C64::from(1.0);
    }
    Ok(comb.normalized().with_squeezing(db_to_natural(r_db)))
}

/// Fidelity of a generated state to its equal-leg comb.
pub fn comb_fidelity(psi: &StateVector, mu: u8, n_cycles: usize, r_db: f64) -> Result<f64> {
    let comb = realize(&equal_leg_comb(mu, n_cycles, r_db)?, psi.dim)?;
    fidelity(psi, &comb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::q_expectation;

    #[test]
    fn schedule_values() {
        let s = displacement_schedule(1, 2);
        let b = (PI / 2.0).sqrt();
        assert_eq!(s, vec![b, 2.0 * b, 4.0 * b]);
    }

    #[test]
    fn beta_of_symmetric_state_is_zero() {
        let d = FockDim::new(200).unwrap();
        let s = crate::grid::comb_state(0, 2, db_to_natural(8.0), d).unwrap();
        let (b, _) = optimize_beta(&s, 0, (-0.5, 0.5), 1e-6).unwrap();
        assert!(b.abs() < 1e-5);
    }

    #[test]
    fn beta_matches_brute_force_scan() {
        let d = FockDim::new(160).unwrap();
        let cfg = ProtocolConfig::new(1, 0, 6.0, d, false);
        let (psi, _) = run_phased_comb(&cfg).unwrap();
        let (b, qb) = optimize_beta(&psi, 1, (-0.1, 1.0), 1e-6).unwrap();
        let mut best = (0.0, f64::INFINITY);
        let mut beta = -0.1;
        while beta <= 1.0 {
            let q = q_expectation(&apply_displacement(&psi, C64::new(0.0, beta)), 1).unwrap();
            if q < best.1 {
                best = (beta, q);
            }
            beta += 1e-4;
        }
        assert!((b - best.0).abs() <= 2e-4, "{b} vs {}", best.0);
        assert!(qb <= best.1 + 1e-12);
    }

    #[test]
    fn edge_minimum_is_reported() {
        let d = FockDim::new(160).unwrap();
        let cfg = ProtocolConfig::new(1, 0, 6.0, d, false);
        let (psi, _) = run_phased_comb(&cfg).unwrap();
        assert!(matches!(optimize_beta(&psi, 1, (0.5, 1.0), 1e-6), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn phased_comb_matches_oracle_small() {
        for mu in 0..=1 {
            for n in 0..=2 {
                let d = suggest_dim(mu, n, 8.0);
                let cfg = ProtocolConfig::new(mu, n, 8.0, d, false);
                let (psi, tr) = run_phased_comb(&cfg).unwrap();
                let o = realize(&phased_comb_oracle(mu, n).unwrap().with_squeezing(cfg.r()), d).unwrap();
                assert!(fidelity(&psi, &o).unwrap() >= 1.0 - 1e-8);
                assert_eq!(tr.q.len(), n + 1);
                assert!(tr.leakage.iter().all(|&l| l <= LEAKAGE_LIMIT));
            }
        }
    }

    #[test]
    fn deterministic_trace() {
        let d = FockDim::new(180).unwrap();
        let cfg = ProtocolConfig::new(0, 1, 7.0, d, true);
        let (a, ta) = run_symmetry_enforced(&cfg).unwrap();
        let (b, tb) = run_symmetry_enforced(&cfg).unwrap();
        assert_eq!(a.amps, b.amps);
        assert_eq!(ta.beta, tb.beta);
        assert_eq!(ta.q, tb.q);
    }

    #[test]
    fn leakage_aborts_run() {
        let d = FockDim::new(40).unwrap();
        let cfg = ProtocolConfig::new(0, 3, 8.0, d, false);
        assert!(matches!(run_phased_comb(&cfg), Err(Error::Leakage { .. })));
    }

    #[test]
    fn config_validation() {
        let d = FockDim::new(40).unwrap();
        let mut cfg = ProtocolConfig::new(0, 1, 8.0, d, true);
        cfg.beta_bracket = (1.0, 0.0);
        assert!(cfg.validate().is_err());
        assert!(run_phased_comb(&ProtocolConfig::new(0, 1, 8.0, d, true)).is_err());
        assert!(run_symmetry_enforced(&ProtocolConfig::new(2, 1, 8.0, d, true)).is_err());
    }
}
