//! Logical operations in the phase frame, momentum-space leg profiles, and the
//! ancilla-assisted Hadamard.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{
    fidelity, quadratures, tensor_op, tensor_state, CompositeOperator, CompositeState, FockDim, OperatorMatrix,
    StateVector, C64, LEAKAGE_LIMIT,
};
use crate::gates::{apply_p_phase, apply_x_phase, SQRT_PI};
use crate::grid::{realize, CombDescription, Leg, PhaseProfile};
use crate::linalg::funm_hermitian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalOp {
    Z,
    SpStab,
    X,
    SxStab,
}

impl LogicalOp {
    /// x shift applied by the operation (zero for x-diagonal ones).
    pub fn shift(self) -> f64 {
        match self {
            Self::Z | Self::SpStab => 0.0,
            Self::X => SQRT_PI,
            Self::SxStab => 2.0 * SQRT_PI,
        }
    }
}

/// Operations available on leg lists. S and T exist only here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolicOp {
    Logical(LogicalOp),
    /// exp(i x^2 / 2).
    S,
    /// exp(i pi/4) on odd grid sites.
    T,
}

/// The frame exp(i Phi(x)) relating a phased state to its stripped comb,
/// together with every x shift it has absorbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFrame {
    pub phi: PhaseProfile,
    pub shift_history: Vec<f64>,
}

impl PhaseFrame {
    pub fn new(phi: PhaseProfile) -> Self {
        Self { phi, shift_history: vec![] }
    }

    pub fn trivial() -> Self {
        Self::new(PhaseProfile::constant(0.0))
    }

    /// Phi(x) -> Phi(x - s).
    pub fn record_shift(&mut self, s: f64) {
        if s != 0.0 {
            self.phi = self.phi.shifted(s);
            self.shift_history.push(s);
        }
    }

    pub fn total_shift(&self) -> f64 {
        self.shift_history.iter().sum()
    }

    pub fn phase(&self, x: f64) -> C64 {
        C64::from_polar(1.0, self.phi.eval(x))
    }

    /// Multiplies each leg by exp(i Phi(x)).
    pub fn dress(&self, comb: &CombDescription) -> CombDescription {
        let mut c = comb.clone();
        for l in &mut c.legs {
            l.coeff *= self.phase(l.x);
        }
        c
    }

    /// Multiplies each leg by exp(-i Phi(x)).
    pub fn strip(&self, comb: &CombDescription) -> CombDescription {
        let mut c = comb.clone();
        for l in &mut c.legs {
            l.coeff *= self.phase(l.x).conj();
        }
        c
    }
}

fn x_phase_of(op: LogicalOp) -> Option<f64> {
    match op {
        LogicalOp::Z => Some(SQRT_PI),
        LogicalOp::SpStab => Some(-2.0 * SQRT_PI),
        _ => None,
    }
}

/// Applies a logical operation to a finite-energy state. x-diagonal operations
/// leave the frame alone; shifts are recorded in it.
pub fn apply_logical(op: LogicalOp, state: &StateVector, frame: &PhaseFrame) -> Result<(StateVector, PhaseFrame)> {
    let mut frame = frame.clone();
    let out = match x_phase_of(op) {
        Some(k) => apply_x_phase(state, |x| k * x),
        None => {
            let s = op.shift();
            frame.record_shift(s);
            apply_p_phase(state, |p| -s * p)
        }
    };
    out.check_leakage(LEAKAGE_LIMIT)?;
    Ok((out, frame))
}

/// Exact action on leg centers.
pub fn apply_symbolic(op: SymbolicOp, comb: &CombDescription) -> CombDescription {
    let phase = |c: &CombDescription, f: &dyn Fn(f64) -> f64| {
        let mut c = c.clone();
        for l in &mut c.legs {
            l.coeff *= C64::from_polar(1.0, f(l.x));
        }
        c
    };
    match op {
        SymbolicOp::Logical(o) => match x_phase_of(o) {
            Some(k) => phase(comb, &|x| k * x),
            None => comb.clone().shifted(o.shift()),
        },
        SymbolicOp::S => phase(comb, &|x| 0.5 * x * x),
        SymbolicOp::T => phase(comb, &|x| {
            let site = (x / SQRT_PI).round() as i64;
            if site.rem_euclid(2) == 1 {
                PI / 4.0
            } else {
                0.0
            }
        }),
    }
}

/// Symbolic operation on a framed state: the leg list is updated and the frame
/// absorbs any shift.
pub fn apply_symbolic_framed(op: SymbolicOp, comb: &CombDescription, frame: &PhaseFrame) -> (CombDescription, PhaseFrame) {
    let mut frame = frame.clone();
    if let SymbolicOp::Logical(o) = op {
        frame.record_shift(o.shift());
    }
    (apply_symbolic(op, comb), frame)
}

/// (1/sqrt(4 pi)) sum_j exp(i Phi(x_j)) exp(-i x_j p) over the given leg
/// positions.
pub fn momentum_profile(phi: &PhaseProfile, xs: &[f64], p_axis: &[f64]) -> Vec<C64> {
    let legs: Vec<Leg> = xs.iter().map(|&x| Leg { x, coeff: C64::from_polar(1.0, phi.eval(x)) }).collect();
    leg_fourier(&legs, p_axis)
}

/// Same sum with the full leg coefficients of a comb.
pub fn comb_momentum_profile(comb: &CombDescription, p_axis: &[f64]) -> Vec<C64> {
    leg_fourier(&comb.legs, p_axis)
}

fn leg_fourier(legs: &[Leg], p_axis: &[f64]) -> Vec<C64> {
    let norm = 1.0 / (4.0 * PI).sqrt();
    p_axis
        .iter()
        .map(|&p| legs.iter().map(|l| l.coeff * C64::from_polar(norm, -l.x * p)).sum())
        .collect()
}

/// x and p times |1><1| on the ancilla, exponentiated on the composite space.
fn controlled_quadrature(dim: FockDim, use_p: bool, angle: f64) -> Result<CompositeOperator> {
    let (x, p) = quadratures(dim);
    let q: &OperatorMatrix = if use_p { &p } else { &x };
    let gen = tensor_op(q, &crate::fock::qubit_projector(1))?;
    let mat = funm_hermitian(&gen.mat, |l| C64::from_polar(1.0, angle * l));
    Ok(CompositeOperator { dim, mat })
}

fn hadamard_on_ancilla(dim: FockDim) -> Result<CompositeOperator> {
    let h = Matrix2::new(C64::from(FRAC_1_SQRT_2), C64::from(FRAC_1_SQRT_2), C64::from(FRAC_1_SQRT_2), C64::from(-FRAC_1_SQRT_2));
    tensor_op(&OperatorMatrix::identity(dim), &h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeSelect {
    Fixed(u8),
    Sample(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AncillaOutcome {
    pub bit: u8,
    pub probability: f64,
    /// Both branch probabilities.
    pub probabilities: [f64; 2],
    pub post_state: StateVector,
}

/// Mode (x) ancilla state after both entangling gates and the ancilla
/// Hadamard, before measurement.
pub fn hadamard_circuit(state: &StateVector) -> Result<CompositeState> {
    let dim = state.dim;
    let h = C64::from(FRAC_1_SQRT_2);
    let mut s = tensor_state(state, [h, h])?;
    // CZ: exp(i sqrt(pi) x) on the |1> branch, then CNOT: exp(-i sqrt(pi) p).
    s = controlled_quadrature(dim, false, SQRT_PI)?.apply(&s)?;
    s = controlled_quadrature(dim, true, -SQRT_PI)?.apply(&s)?;
    hadamard_on_ancilla(dim)?.apply(&s)
}

/// Ancilla-assisted Hadamard. The mode is corrected with X (outcome 0) or Z
/// (outcome 1) and renormalized.
pub fn teleported_hadamard(state: &StateVector, select: OutcomeSelect) -> Result<AncillaOutcome> {
    let s = hadamard_circuit(state)?;
    let slices = [s.qubit_slice(0), s.qubit_slice(1)];
    let probabilities = [slices[0].norm_squared(), slices[1].norm_squared()];
    let total = probabilities[0] + probabilities[1];
    if (total - state.norm().powi(2)).abs() > 1e-8 {
        return Err(Error::Numerical(format!("branch probabilities sum to {total}")));
    }
    let bit = match select {
        OutcomeSelect::Fixed(b) if b <= 1 => b,
        OutcomeSelect::Fixed(b) => return invalid(format!("outcome must be 0 or 1, got {b}")),
        OutcomeSelect::Sample(seed) => {
            let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
            u8::from(u >= probabilities[0] / total)
        }
    };
    let p = probabilities[bit as usize];
    if p < 1e-14 {
        return Err(Error::ZeroProbability(bit));
    }
    let v = StateVector { dim: state.dim, amps: &slices[bit as usize] / C64::from(p.sqrt()) };
    let corrected = if bit == 0 {
        apply_logical(LogicalOp::X, &v, &PhaseFrame::trivial())?.0
    } else {
        apply_logical(LogicalOp::Z, &v, &PhaseFrame::trivial())?.0
    };
    Ok(AncillaOutcome { bit, probability: p / total, probabilities, post_state: corrected.normalized() })
}

/// The same circuit carried out on leg lists: per branch, (unnormalized) leg
/// list after correction.
pub fn hadamard_target_legs(input: &CombDescription, bit: u8) -> Result<CombDescription> {
    if bit > 1 {
        return invalid(format!("outcome must be 0 or 1, got {bit}"));
    }
    let z = SymbolicOp::Logical(LogicalOp::Z);
    let x = SymbolicOp::Logical(LogicalOp::X);
    let b0 = input.clone();
    let b1 = apply_symbolic(x, &apply_symbolic(z, input));
    let h = C64::from(FRAC_1_SQRT_2);
    let sign = if bit == 0 { h } else { -h };
    let branch = b0.superpose(h, &b1, sign);
    Ok(if bit == 0 { apply_symbolic(x, &branch) } else { apply_symbolic(z, &branch) })
}

/// Realized leg-level image of the circuit for outcome `bit`.
pub fn hadamard_target(input: &CombDescription, bit: u8, dim: FockDim) -> Result<StateVector> {
    realize(&hadamard_target_legs(input, bit)?.normalized(), dim)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HadamardRecord {
    pub label: String,
    pub bit: u8,
    pub probability: f64,
    pub fidelity: f64,
}

/// Circuit output against the leg-level image for both outcomes.
pub fn hadamard_fidelities(label: &str, input: &CombDescription, dim: FockDim) -> Result<Vec<HadamardRecord>> {
    let psi = realize(&input.clone().normalized(), dim)?;
    (0..2u8)
        .map(|bit| {
            let out = teleported_hadamard(&psi, OutcomeSelect::Fixed(bit))?;
            let target = hadamard_target(input, bit, dim)?;
            Ok(HadamardRecord {
                label: label.to_string(),
                bit,
                probability: out.probability,
                fidelity: fidelity(&out.post_state, &target)?,
            })
        })
        .collect()
}
