use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridforge::config::{ExperimentConfig, Format};
use gridforge::experiments::{run, Command};
use gridforge::{Error, Result};

#[derive(Parser)]
#[command(name = "gridforge", version, about = "Bosonic grid-state generation and loss benchmarks")]
struct Cli {
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "GRIDFORGE_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the generation protocol; writes state.csv and trace.json.
    Generate(Flags),
    /// <Q> in dB against cycle count.
    SweepQ(Flags),
    /// Kerr-angle or loss infidelity sweep.
    Noise(Flags),
    /// Near-optimal channel fidelity under boson loss.
    Qec(Flags),
    /// Teleported Hadamard on grid codewords.
    Hadamard(Flags),
    /// Wigner grid and quadrature marginals of a generated state.
    Wigner(Flags),
}

/// Every config key as a flag. Flags win over `--config`.
#[derive(Args, Clone)]
struct Flags {
    /// Key-value or JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved config as key-value text and exit.
    #[arg(long)]
    print_config: bool,

    #[arg(long)]
    mu: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    cycles: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    r_db: Option<Vec<f64>>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, overrides_with = "no_correction")]
    correction: bool,
    #[arg(long, overrides_with = "correction")]
    no_correction: bool,
    #[arg(long)]
    beta_tol: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    /// chi or loss.
    #[arg(long)]
    knob: Option<String>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    values: Option<Vec<f64>>,
    #[arg(long)]
    realizations: Option<usize>,
    /// One Kerr-angle error per run instead of per gate.
    #[arg(long)]
    correlated: bool,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gammas: Option<Vec<f64>>,
    /// natural or db.
    #[arg(long)]
    envelope: Option<String>,
    /// zero, one, plus.
    #[arg(long, value_delimiter = ',')]
    inputs: Option<Vec<String>>,
    #[arg(long)]
    outcome: Option<u8>,
    /// Also write the Wigner grid (generate).
    #[arg(long)]
    wigner: bool,
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    x_range: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    p_range: Option<Vec<f64>>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short = 'o')]
    output_dir: Option<String>,
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("format must be csv or json, got {s:?}")),
    }
}

impl Flags {
    fn to_config(&self) -> ExperimentConfig {
        let flag = |on: bool| on.then_some(true);
        ExperimentConfig {
            mu: self.mu,
            cycles: self.cycles.clone(),
            r_db: self.r_db.clone(),
            n_max: self.n_max,
            correction: if self.correction {
                Some(true)
            } else if self.no_correction {
                Some(false)
            } else {
                None
            },
            beta_tol: self.beta_tol,
            families: self.families.clone(),
            knob: self.knob.clone(),
            values: self.values.clone(),
            realizations: self.realizations,
            correlated: flag(self.correlated),
            gammas: self.gammas.clone(),
            envelope: self.envelope.clone(),
            inputs: self.inputs.clone(),
            outcome: self.outcome,
            wigner: flag(self.wigner),
            x_range: self.x_range.clone(),
            p_range: self.p_range.clone(),
            points: self.points,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            format: self.format,
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidArgument("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let (command, flags) = match cli.command {
        Sub::Generate(f) => (Command::Generate, f),
        Sub::SweepQ(f) => (Command::SweepQ, f),
        Sub::Noise(f) => (Command::Noise, f),
        Sub::Qec(f) => (Command::Qec, f),
        Sub::Hadamard(f) => (Command::Hadamard, f),
        Sub::Wigner(f) => (Command::Wigner, f),
    };
    let base = match &flags.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.overlay(&flags.to_config());
    if flags.print_config {
        print!("{}", command.resolve(&cfg)?.to_kv());
        return Ok(());
    }
    for path in run(command, &cfg)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gridforge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
