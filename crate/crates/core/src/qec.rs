//! Near-optimal channel fidelity of two-codeword codes under boson loss.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{CMat, CVec, FockDim, OperatorMatrix, StateVector, C64};
use crate::gates::db_to_natural;
use crate::grid::{fock_envelope, ideal_gkp_comb, phased_comb_oracle, realize, s_max_for_legs};
use crate::linalg::{frobenius, sqrtm_principal};
use crate::noise::LossChannel;
use crate::protocol::{run_phased_comb, ProtocolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeFamily {
    PhasedComb,
    Comb,
    GaussianGkp,
    Trivial,
}

impl CodeFamily {
    pub const ALL: [CodeFamily; 4] = [Self::PhasedComb, Self::Comb, Self::GaussianGkp, Self::Trivial];

    pub fn name(self) -> &'static str {
        match self {
            Self::PhasedComb => "phased_comb",
            Self::Comb => "comb",
            Self::GaussianGkp => "gaussian_gkp",
            Self::Trivial => "trivial",
        }
    }
}

impl std::str::FromStr for CodeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown code family {s:?}")))
    }
}

/// How r enters Delta = exp(-5 r) for the Gaussian envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeUnits {
    #[default]
    Natural,
    Decibel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodePair {
    pub zero: StateVector,
    pub one: StateVector,
    pub family: CodeFamily,
    pub legs: usize,
    pub r_db: f64,
    /// |<zero|one>|.
    pub overlap: f64,
}

impl CodePair {
    pub fn new(zero: StateVector, one: StateVector, family: CodeFamily, legs: usize, r_db: f64) -> Result<Self> {
        zero.dim.check(one.dim)?;
        let zero = zero.normalized();
        let one = one.normalized();
        let overlap = zero.inner(&one)?.norm();
        Ok(Self { zero, one, family, legs, r_db, overlap })
    }

    pub fn dim(&self) -> FockDim {
        self.zero.dim
    }

    fn words(&self) -> [&StateVector; 2] {
        [&self.zero, &self.one]
    }

    pub fn gram(&self) -> Matrix2<C64> {
        let w = self.words();
        Matrix2::from_fn(|i, j| w[i].amps.dotc(&w[j].amps))
    }

    /// Same code with Gram-Schmidt orthonormalized codewords.
    pub fn orthonormalized(&self) -> Result<Self> {
        let proj = self.zero.amps.dotc(&self.one.amps);
        let one = StateVector { dim: self.dim(), amps: &self.one.amps - &self.zero.amps * proj };
        if one.norm() < 1e-12 {
            return Err(Error::IllConditioned(one.norm()));
        }
        Self::new(self.zero.clone(), one, self.family, self.legs, self.r_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    pub f_e: f64,
    pub gamma: f64,
    pub ell: usize,
    /// Smallest |eigenvalue| of the codeword Gram matrix.
    pub conditioning: f64,
}

impl FidelityResult {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.f_e
    }
}

/// A finite Kraus family acting on Fock vectors.
pub trait KrausSet {
    fn count(&self) -> usize;
    fn dim(&self) -> FockDim;
    fn apply(&self, k: usize, psi: &CVec) -> CVec;
}

impl KrausSet for LossChannel {
    fn count(&self) -> usize {
        self.ell
    }
    fn dim(&self) -> FockDim {
        self.dim
    }
    fn apply(&self, k: usize, psi: &CVec) -> CVec {
        self.apply_kraus(k, psi)
    }
}

impl KrausSet for [OperatorMatrix] {
    fn count(&self) -> usize {
        self.len()
    }
    fn dim(&self) -> FockDim {
        self[0].dim
    }
    fn apply(&self, k: usize, psi: &CVec) -> CVec {
        &self[k].mat * psi
    }
}

/// M_{mu l, nu k} = <mu| N_l^dag N_k |nu>, rows and columns laid out as
/// mu * ell + l.
pub fn qec_matrix<K: KrausSet + ?Sized>(code: &CodePair, kraus: &K) -> Result<CMat> {
    let ell = kraus.count();
    if ell == 0 {
        return invalid("empty Kraus set");
    }
    code.dim().check(kraus.dim())?;
    let images: Vec<CVec> = code
        .words()
        .iter()
        .flat_map(|w| (0..ell).map(|l| kraus.apply(l, &w.amps)).collect::<Vec<_>>())
        .collect();
    let n = 2 * ell;
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = images[i].dotc(&images[j]);
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    Ok(m)
}

fn gram_conditioning(g: &Matrix2<C64>) -> f64 {
    // Eigenvalues of a 2x2 Hermitian matrix.
    let a = g[(0, 0)].re;
    let d = g[(1, 1)].re;
    let b = g[(0, 1)].norm();
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d).powi(2) + b * b).sqrt();
    (mid - rad).abs().min((mid + rad).abs())
}

/// F = ||Tr_L sqrt((G^-1 (x) I_ell) M)||_F^2 / 4, with Tr_L[X]_{lk} =
/// sum_mu X_{mu l, mu k}. Kraus indices that annihilate both codewords are
/// dropped before the square root.
pub fn fidelity_from_qec_matrix(code: &CodePair, m: &CMat, ell: usize) -> Result<(f64, f64)> {
    let g = code.gram();
    let cond = gram_conditioning(&g);
    if cond < 1e-10 {
        return Err(Error::IllConditioned(cond));
    }
    let ginv = g.try_inverse().ok_or(Error::IllConditioned(cond))?;
    let scale = m.diagonal().iter().map(|z| z.re).sum::<f64>().max(f64::MIN_POSITIVE);
    let kept: Vec<usize> = (0..ell).filter(|&l| (0..2).any(|mu| m[(mu * ell + l, mu * ell + l)].re > 1e-28 * scale)).collect();
    let e = kept.len();
    let idx = |mu: usize, j: usize| mu * ell + kept[j];
    let mut a = CMat::zeros(2 * e, 2 * e);
    for mu in 0..2 {
        for l in 0..e {
            for nu in 0..2 {
                for k in 0..e {
                    let mut acc = C64::from(0.0);
                    for s in 0..2 {
                        acc += ginv[(mu, s)] * m[(idx(s, l), idx(nu, k))];
                    }
                    a[(mu * e + l, nu * e + k)] = acc;
                }
            }
        }
    }
    let x = sqrtm_principal(&a)?;
    let mut tr = CMat::zeros(e, e);
    for l in 0..e {
        for k in 0..e {
            tr[(l, k)] = x[(l, k)] + x[(e + l, e + k)];
        }
    }
    let f = frobenius(&tr).powi(2) / 4.0;
    if !f.is_finite() {
        return Err(Error::NonFinite);
    }
    if f > 1.0 + 1e-9 {
        return Err(Error::Numerical(format!("channel fidelity {f} exceeds 1")));
    }
    Ok((f, cond))
}

/// Kraus cap for codewords; grid codes at gamma ~ 0.1 lose ~5 bosons on
/// average and need more than the generic cap.
pub const QEC_MAX_ELL: usize = 60;

/// Channel fidelity under loss gamma; `ell = None` picks the smallest Kraus
/// count whose defect on the codewords is below the tail tolerance.
pub fn channel_fidelity(code: &CodePair, gamma: f64, ell: Option<usize>) -> Result<FidelityResult> {
    let ch = match ell {
        Some(l) => LossChannel::new(gamma, l, code.dim())?,
        None => LossChannel::auto_for_states(gamma, &[&code.zero, &code.one], QEC_MAX_ELL)?,
    };
    let m = qec_matrix(code, &ch)?;
    let (f_e, conditioning) = fidelity_from_qec_matrix(code, &m, ch.ell)?;
    Ok(FidelityResult { f_e, gamma, ell: ch.ell, conditioning })
}

/// Delta = exp(-5 r) with r read in natural units or in dB.
pub fn envelope_delta(r_db: f64, units: EnvelopeUnits) -> f64 {
    match units {
        EnvelopeUnits::Natural => (-5.0 * db_to_natural(r_db)).exp(),
        EnvelopeUnits::Decibel => (-5.0 * r_db).exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub family: CodeFamily,
    /// mu=0 uses `cycles` protocol cycles, mu=1 uses `cycles - 1`.
    pub cycles: usize,
    pub r_db: f64,
    pub envelope: EnvelopeUnits,
}

impl CodeSpec {
    pub fn new(family: CodeFamily, cycles: usize, r_db: f64) -> Self {
        Self { family, cycles, r_db, envelope: EnvelopeUnits::Natural }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 && self.family != CodeFamily::Trivial {
            return invalid("grid codes need at least one cycle");
        }
        if !self.r_db.is_finite() || self.r_db < 0.0 {
            return invalid(format!("r_db must be finite and non-negative, got {}", self.r_db));
        }
        Ok(())
    }

    fn cycles_for(&self, mu: u8) -> usize {
        if mu == 0 {
            self.cycles
        } else {
            self.cycles.saturating_sub(1)
        }
    }

    /// Leg count of the mu=0 codeword.
    pub fn legs(&self) -> usize {
        match self.family {
            CodeFamily::Trivial => 1,
            _ => (1usize << self.cycles) + 1,
        }
    }

    pub fn build(&self, dim: FockDim) -> Result<CodePair> {
        self.validate()?;
        let r = db_to_natural(self.r_db);
        let word = |mu: u8| -> Result<StateVector> {
            let n = self.cycles_for(mu);
            match self.family {
                CodeFamily::PhasedComb => {
                    Ok(run_phased_comb(&ProtocolConfig::new(mu, n, self.r_db, dim, false))?.0)
                }
                CodeFamily::Comb | CodeFamily::GaussianGkp => {
                    let legs = phased_comb_oracle(mu, n)?.len();
                    let comb = realize(&ideal_gkp_comb(mu, s_max_for_legs(mu, legs)?)?.with_squeezing(r), dim)?;
                    if self.family == CodeFamily::Comb {
                        Ok(comb)
                    } else {
                        Ok(fock_envelope(&comb, envelope_delta(self.r_db, self.envelope)))
                    }
                }
                CodeFamily::Trivial => StateVector::number(dim, mu as usize),
            }
        };
        CodePair::new(word(0)?, word(1)?, self.family, self.legs(), self.r_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QecRow {
    pub family: CodeFamily,
    pub gamma: f64,
    pub legs: usize,
    pub cycles: usize,
    pub r_db: f64,
    pub n_r: usize,
    pub ell: usize,
    pub f_e: f64,
    pub i_e: f64,
    pub conditioning: f64,
}

pub const N_R_START: usize = 500;
pub const N_R_CAP: usize = 4000;
pub const N_R_TOL: f64 = 1e-6;

/// Evaluates one point, doubling N_R from `n_r_start` until two successive
/// values agree to N_R_TOL. Truncation leakage at a given N_R also triggers a
/// doubling.
pub fn converged_point(spec: &CodeSpec, gamma: f64, n_r_start: usize) -> Result<QecRow> {
    let mut n_r = n_r_start;
    let mut prev: Option<FidelityResult> = None;
    loop {
        if n_r > N_R_CAP {
            return Err(Error::NotConverged(format!(
                "{} cycles={} gamma={gamma}: no agreement below N_R={N_R_CAP}",
                spec.family.name(),
                spec.cycles
            )));
        }
        let dim = FockDim::new(n_r)?;
        let res = match spec.build(dim) {
            Ok(code) => Some(channel_fidelity(&code, gamma, None)?),
            Err(Error::Leakage { .. }) => None,
            Err(e) => return Err(e),
        };
        if let (Some(p), Some(r)) = (prev, res) {
            if (p.f_e - r.f_e).abs() < N_R_TOL {
                return Ok(QecRow {
                    family: spec.family,
                    gamma,
                    legs: spec.legs(),
                    cycles: spec.cycles,
                    r_db: spec.r_db,
                    n_r,
                    ell: r.ell,
                    f_e: r.f_e,
                    i_e: 1.0 - r.f_e,
                    conditioning: r.conditioning,
                });
            }
        }
        prev = res;
        n_r *= 2;
    }
}

/// All (family, gamma, cycles) points, ordered by family, cycles, gamma.
pub fn fig3_sweep(families: &[CodeFamily], gammas: &[f64], cycles: &[usize], r_db: f64, envelope: EnvelopeUnits) -> Result<Vec<QecRow>> {
    use rayon::prelude::*;
    let mut points = vec![];
    for &family in families {
        for &c in cycles {
            for &g in gammas {
                points.push((family, c, g));
            }
        }
    }
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    points
        .into_par_iter()
        .map(|(family, c, g)| {
            let spec = CodeSpec { family, cycles: c, r_db, envelope };
            let start = if family == CodeFamily::Trivial { 40 } else { N_R_START };
            converged_point(&spec, g, start)
        })
        .collect()
}

/// Closed form for {|0>, |1>}: [(1/sqrt(1+g) + sqrt(1-g))^2 + g^2/(1+g)] / 4.
pub fn trivial_code_fidelity(gamma: f64) -> f64 {
    let a = 1.0 / (1.0 + gamma).sqrt() + (1.0 - gamma).sqrt();
    (a * a + gamma * gamma / (1.0 + gamma)) / 4.0
}
