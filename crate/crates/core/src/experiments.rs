//! Drivers behind the CLI subcommands: resolve defaults, validate, compute,
//! and write the output files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Format};
use crate::error::{invalid, Result};
use crate::fock::{FockDim, StateVector, C64};
use crate::gates::db_to_natural;
use crate::grid::{phased_comb_oracle, realize, CombDescription};
use crate::io::{self, fmt_f64, CsvRow, Metadata};
use crate::logical::{hadamard_fidelities, teleported_hadamard, HadamardRecord, OutcomeSelect};
use crate::metrics::{default_axis, linspace, p_marginal, q_db, q_expectation, wigner, x_marginal, WignerGrid};
use crate::noise::{infidelity_sweep_chi, infidelity_sweep_loss, NoiseKnob, NoiseSweepConfig, SweepPoint};
use crate::protocol::{comb_fidelity, equal_leg_comb, run_phased_comb, run_symmetry_enforced, suggest_dim, ProtocolConfig, ProtocolTrace};
use crate::qec::{fig3_sweep, CodeFamily, EnvelopeUnits, QecRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    SweepQ,
    Noise,
    Qec,
    Hadamard,
    Wigner,
}

impl Command {
    pub const ALL: [Command; 6] = [Self::Generate, Self::SweepQ, Self::Noise, Self::Qec, Self::Hadamard, Self::Wigner];

    pub fn name(self) -> &'static str {
        match self {
            Self::Generate => "generate",
            Self::SweepQ => "sweep-q",
            Self::Noise => "noise",
            Self::Qec => "qec",
            Self::Hadamard => "hadamard",
            Self::Wigner => "wigner",
        }
    }

    /// Values used for keys the user left unset.
    pub fn defaults(self) -> ExperimentConfig {
        let base = ExperimentConfig {
            seed: Some(0),
            output_dir: Some(".".into()),
            format: Some(Format::Csv),
            ..Default::default()
        };
        let own = match self {
            Self::Generate | Self::Wigner => ExperimentConfig {
                mu: Some(0),
                cycles: Some(vec![3]),
                r_db: Some(vec![7.8]),
                correction: Some(true),
                beta_tol: Some(1e-6),
                wigner: Some(self == Self::Wigner),
                ..Default::default()
            },
            Self::SweepQ => ExperimentConfig {
                mu: Some(0),
                cycles: Some((0..=4).collect()),
                r_db: Some(vec![6.0, 10.0, 15.0]),
                beta_tol: Some(1e-6),
                families: Some(vec!["symmetry_enforced".into(), "comb".into()]),
                ..Default::default()
            },
            Self::Noise => ExperimentConfig {
                mu: Some(0),
                cycles: Some(vec![3]),
                r_db: Some(vec![7.8]),
                knob: Some("chi".into()),
                values: Some(vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2]),
                realizations: Some(100),
                correlated: Some(false),
                ..Default::default()
            },
            Self::Qec => ExperimentConfig {
                families: Some(CodeFamily::ALL.iter().map(|f| f.name().to_string()).collect()),
                gammas: Some(vec![1e-3, 1e-2, 1e-1]),
                cycles: Some(vec![3]),
                r_db: Some(vec![7.8]),
                envelope: Some("natural".into()),
                ..Default::default()
            },
            Self::Hadamard => ExperimentConfig {
                cycles: Some(vec![2]),
                r_db: Some(vec![10.0]),
                inputs: Some(vec!["zero".into(), "one".into(), "plus".into()]),
                ..Default::default()
            },
        };
        base.overlay(&own)
    }

    /// Defaults overlaid with `cfg`, validated.
    pub fn resolve(self, cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
        let r = self.defaults().overlay(cfg);
        r.validate()?;
        Ok(r)
    }
}

impl std::str::FromStr for Command {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("unknown command {s:?}")))
    }
}

fn single<T: Copy>(v: &Option<Vec<T>>, name: &str) -> Result<T> {
    match v.as_deref() {
        Some([x]) => Ok(*x),
        Some(list) => invalid(format!("{name} takes a single value here, got {}", list.len())),
        None => invalid(format!("{name} is required")),
    }
}

fn dim_or(cfg: &ExperimentConfig, auto: impl FnOnce() -> FockDim) -> Result<FockDim> {
    match cfg.n_max {
        Some(n) => FockDim::new(n),
        None => Ok(auto()),
    }
}

fn protocol_config(cfg: &ExperimentConfig) -> Result<ProtocolConfig> {
    let mu = cfg.mu.unwrap_or(0);
    let cycles = single(&cfg.cycles, "cycles")?;
    let r_db = single(&cfg.r_db, "r_db")?;
    let dim = dim_or(cfg, || suggest_dim(mu, cycles, r_db))?;
    let mut p = ProtocolConfig::new(mu, cycles, r_db, dim, cfg.correction.unwrap_or(true));
    if let Some(t) = cfg.beta_tol {
        p.beta_tol = t;
    }
    p.validate()?;
    Ok(p)
}

fn run_config(p: &ProtocolConfig) -> Result<(StateVector, ProtocolTrace)> {
    if p.correction {
        run_symmetry_enforced(p)
    } else {
        run_phased_comb(p)
    }
}

fn axes(cfg: &ExperimentConfig) -> (Vec<f64>, Vec<f64>) {
    let axis = |range: &Option<Vec<f64>>| match range {
        Some(r) => linspace(r[0], r[1], cfg.points.unwrap_or(default_axis().len())),
        None => match cfg.points {
            Some(n) => {
                let d = default_axis();
                linspace(d[0], d[d.len() - 1], n)
            }
            None => default_axis(),
        },
    };
    (axis(&cfg.x_range), axis(&cfg.p_range))
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateOutput {
    #[serde(skip)]
    pub state: StateVector,
    pub trace: ProtocolTrace,
    /// Fidelity to the equal-leg comb on the same legs.
    #[serde(rename = "F_comb")]
    pub f_comb: f64,
    #[serde(skip)]
    pub wigner: Option<WignerGrid>,
}

/// `cfg` must already be resolved.
pub fn generate(cfg: &ExperimentConfig) -> Result<GenerateOutput> {
    let p = protocol_config(cfg)?;
    let (state, trace) = run_config(&p)?;
    let f_comb = comb_fidelity(&state, p.mu, p.n_cycles, p.r_db)?;
    let wigner = if cfg.wigner.unwrap_or(false) {
        let (xs, ps) = axes(cfg);
        Some(wigner(&state, &xs, &ps)?)
    } else {
        None
    };
    Ok(GenerateOutput { state, trace, f_comb, wigner })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QCurve {
    SymmetryEnforced,
    PhasedComb,
    Comb,
}

impl QCurve {
    pub fn name(self) -> &'static str {
        match self {
            Self::SymmetryEnforced => "symmetry_enforced",
            Self::PhasedComb => "phased_comb",
            Self::Comb => "comb",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        [Self::SymmetryEnforced, Self::PhasedComb, Self::Comb]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("sweep-q family must be symmetry_enforced, phased_comb or comb, got {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QRow {
    pub n_cycles: usize,
    pub r_db: f64,
    pub family: QCurve,
    /// NaN when <Q> is not positive.
    #[serde(rename = "Q_db")]
    pub q_db: f64,
}

impl CsvRow for QRow {
    fn columns() -> &'static [&'static str] {
        &["n_cycles", "r_db", "family", "Q_db"]
    }
    fn cells(&self) -> Vec<String> {
        vec![self.n_cycles.to_string(), fmt_f64(self.r_db), self.family.name().into(), fmt_f64(self.q_db)]
    }
}

/// <Q> in dB per cycle. Cycle 0 reports <Q_1>, later cycles <Q_mu>; the comb
/// curve uses the equal-leg comb on the protocol's legs.
pub fn sweep_q(cfg: &ExperimentConfig) -> Result<Vec<QRow>> {
    let mu = cfg.mu.unwrap_or(0);
    let cycles = cfg.cycles.clone().unwrap_or_default();
    let curves: Vec<QCurve> = cfg.families.iter().flatten().map(|s| QCurve::parse(s)).collect::<Result<_>>()?;
    let max_c = *cycles.iter().max().ok_or_else(|| crate::Error::InvalidArgument("cycles is empty".into()))?;
    let mut jobs = vec![];
    for &c in &curves {
        for &r in cfg.r_db.iter().flatten() {
            jobs.push((c, r));
        }
    }
    let per_job: Vec<Result<Vec<QRow>>> = jobs
        .into_par_iter()
        .map(|(curve, r_db)| {
            let dim = dim_or(cfg, || suggest_dim(mu, max_c, r_db))?;
            let q: Vec<f64> = match curve {
                QCurve::SymmetryEnforced | QCurve::PhasedComb => {
                    let mut p = ProtocolConfig::new(mu, max_c, r_db, dim, curve == QCurve::SymmetryEnforced);
                    if let Some(t) = cfg.beta_tol {
                        p.beta_tol = t;
                    }
                    let (_, tr) = run_config(&p)?;
                    tr.q_db.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
                }
                QCurve::Comb => (0..=max_c)
                    .map(|n| {
                        let psi = realize(&equal_leg_comb(mu, n, r_db)?, dim)?;
                        let q = q_expectation(&psi, if n == 0 { 1 } else { mu })?;
                        Ok(q_db(q).unwrap_or(f64::NAN))
                    })
                    .collect::<Result<_>>()?,
            };
            Ok(cycles.iter().map(|&n| QRow { n_cycles: n, r_db, family: curve, q_db: q[n] }).collect())
        })
        .collect();
    let mut rows: Vec<QRow> = per_job.into_iter().collect::<Result<Vec<_>>>()?.concat();
    rows.sort_by(|a, b| a.family.cmp(&b.family).then(a.r_db.total_cmp(&b.r_db)).then(a.n_cycles.cmp(&b.n_cycles)));
    Ok(rows)
}

impl CsvRow for SweepPoint {
    fn columns() -> &'static [&'static str] {
        &["knob", "mean_infidelity", "std", "n_realizations", "seed"]
    }
    fn cells(&self) -> Vec<String> {
        vec![fmt_f64(self.knob), fmt_f64(self.mean), fmt_f64(self.std), self.n_realizations.to_string(), self.seed.to_string()]
    }
}

/// One sweep point per knob value, sorted by value.
pub fn noise(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let p = protocol_config(&ExperimentConfig { correction: Some(false), ..cfg.clone() })?;
    let loss = cfg.knob.as_deref() == Some("loss");
    let mut values = cfg.values.clone().unwrap_or_default();
    values.sort_by(f64::total_cmp);
    let points: Vec<Result<SweepPoint>> = values
        .par_iter()
        .map(|&v| {
            let sc = NoiseSweepConfig {
                knob: if loss { NoiseKnob::KappaOverChi(v) } else { NoiseKnob::DeltaChiMax(v) },
                n_realizations: cfg.realizations.unwrap_or(100),
                seed: cfg.seed.unwrap_or(0),
                correlated: cfg.correlated.unwrap_or(false),
            };
            if loss {
                infidelity_sweep_loss(&sc, &p)
            } else {
                infidelity_sweep_chi(&sc, &p)
            }
        })
        .collect();
    points.into_iter().collect()
}

impl CsvRow for QecRow {
    fn columns() -> &'static [&'static str] {
        &["family", "gamma", "legs", "r_db", "N_R", "ell", "F_e", "I_e", "conditioning"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.family.name().into(),
            fmt_f64(self.gamma),
            self.legs.to_string(),
            fmt_f64(self.r_db),
            self.n_r.to_string(),
            self.ell.to_string(),
            fmt_f64(self.f_e),
            fmt_f64(self.i_e),
            fmt_f64(self.conditioning),
        ]
    }
}

pub fn qec(cfg: &ExperimentConfig) -> Result<Vec<QecRow>> {
    let families = cfg.code_families()?.unwrap_or_default();
    let envelope = match cfg.envelope.as_deref() {
        Some("db") => EnvelopeUnits::Decibel,
        _ => EnvelopeUnits::Natural,
    };
    let r_db = single(&cfg.r_db, "r_db")?;
    fig3_sweep(&families, cfg.gammas.as_deref().unwrap_or_default(), cfg.cycles.as_deref().unwrap_or_default(), r_db, envelope)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampledOutcome {
    pub label: String,
    pub bit: u8,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HadamardOutput {
    pub records: Vec<HadamardRecord>,
    /// One measurement per input, fixed by `outcome` or drawn from `seed`.
    pub sampled: Vec<SampledOutcome>,
}

/// Phased-comb codewords: mu=0 after `cycles` cycles, mu=1 after one fewer.
pub fn hadamard_input(label: &str, cycles: usize, r_db: f64) -> Result<CombDescription> {
    let r = db_to_natural(r_db);
    let word = |mu: u8, n: usize| -> Result<CombDescription> { Ok(phased_comb_oracle(mu, n)?.with_squeezing(r).normalized()) };
    let zero = word(0, cycles)?;
    let one = word(1, cycles.saturating_sub(1))?;
    match label {
        "zero" => Ok(zero),
        "one" => Ok(one),
        "plus" => Ok(zero.superpose(C64::from(1.0), &one, C64::from(1.0)).normalized()),
        other => invalid(format!("unknown hadamard input {other:?}")),
    }
}

pub fn hadamard(cfg: &ExperimentConfig) -> Result<HadamardOutput> {
    let cycles = single(&cfg.cycles, "cycles")?;
    let r_db = single(&cfg.r_db, "r_db")?;
    let dim = dim_or(cfg, || suggest_dim(0, cycles + 1, r_db))?;
    let select = match cfg.outcome {
        Some(b) => OutcomeSelect::Fixed(b),
        None => OutcomeSelect::Sample(cfg.seed.unwrap_or(0)),
    };
    let mut records = vec![];
    let mut sampled = vec![];
    for label in cfg.inputs.iter().flatten() {
        let input = hadamard_input(label, cycles, r_db)?;
        records.extend(hadamard_fidelities(label, &input, dim)?);
        let out = teleported_hadamard(&realize(&input, dim)?, select)?;
        sampled.push(SampledOutcome { label: label.clone(), bit: out.bit, probability: out.probability });
    }
    Ok(HadamardOutput { records, sampled })
}

fn table<R: CsvRow + Serialize>(dir: &Path, stem: &str, meta: &Metadata, fmt: Format, rows: &[R]) -> Result<PathBuf> {
    match fmt {
        Format::Csv => io::write_file(dir, &format!("{stem}.csv"), &io::csv_table(meta, rows)),
        Format::Json => io::write_file(dir, &format!("{stem}.json"), &io::json_table(meta, rows)?),
    }
}

fn write_wigner(dir: &Path, meta: &Metadata, state: &StateVector, grid: &WignerGrid) -> Result<Vec<PathBuf>> {
    Ok(vec![
        io::write_file(dir, "wigner.csv", &io::wigner_csv(meta, grid))?,
        io::write_file(dir, "wigner_axes.json", &io::wigner_axes_json(meta, grid)?)?,
        io::write_file(dir, "x_marginal.csv", &io::marginal_csv(meta, "x", &grid.x_axis, &x_marginal(state, &grid.x_axis)))?,
        io::write_file(dir, "p_marginal.csv", &io::marginal_csv(meta, "p", &grid.p_axis, &p_marginal(state, &grid.p_axis)))?,
    ])
}

/// Resolves, validates, runs and writes; returns the files written.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let cfg = command.resolve(cfg)?;
    let meta = Metadata::new(command.name(), &cfg, cfg.seed.unwrap_or(0))?;
    let dir = PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| ".".into()));
    let fmt = cfg.format.unwrap_or_default();
    match command {
        Command::Generate | Command::Wigner => {
            let out = generate(&cfg)?;
            let r_db = single(&cfg.r_db, "r_db")?;
            let mut files = vec![];
            if command == Command::Generate {
                files.push(io::write_file(&dir, "state.csv", &io::state_csv(&meta, &out.state, r_db))?);
                let body = serde_json::to_value(&out).map_err(|e| crate::Error::Numerical(e.to_string()))?;
                files.push(io::write_file(&dir, "trace.json", &io::json_document(&meta, body)?)?);
            }
            if let Some(grid) = &out.wigner {
                files.extend(write_wigner(&dir, &meta, &out.state, grid)?);
            }
            Ok(files)
        }
        Command::SweepQ => Ok(vec![table(&dir, "sweep_q", &meta, fmt, &sweep_q(&cfg)?)?]),
        Command::Noise => {
            let stem = format!("noise_{}", cfg.knob.as_deref().unwrap_or("chi"));
            Ok(vec![table(&dir, &stem, &meta, fmt, &noise(&cfg)?)?])
        }
        Command::Qec => Ok(vec![table(&dir, "qec", &meta, fmt, &qec(&cfg)?)?]),
        Command::Hadamard => {
            let out = hadamard(&cfg)?;
            let body = serde_json::to_value(&out).map_err(|e| crate::Error::Numerical(e.to_string()))?;
            Ok(vec![io::write_file(&dir, "hadamard.json", &io::json_document(&meta, body)?)?])
        }
    }
}
