use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hyperstab::cli::{cache_dir, cmd_simulate, cmd_sweep, cmd_synthesize, cmd_validate, Outcome, Scenario, EXIT_CONFIG};
use hyperstab::sim::Mode;
use hyperstab::Error;

#[derive(Parser)]
#[command(name = "hyperstab", version, about = "Observer and output-feedback synthesis for boundary-coupled hyperbolic PDE-ODE systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the scenario's `outputs`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the three assumptions and report margins.
    Validate(Common),
    /// Solve kernels, derive the delay forms and write the synthesis record.
    Synthesize(Common),
    /// Simulate one closed loop and write the trajectory, decay fit and plots.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "output_feedback")]
        mode: String,
        /// Simulate even when an assumption fails.
        #[arg(long)]
        force: bool,
    },
    /// Repeat validate + simulate over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "output_feedback")]
        mode: String,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
}

fn load(c: &Common) -> Result<Scenario, Error> {
    let mut s = Scenario::load(&c.config)?;
    if let Some(o) = &c.out {
        s.outputs = o.clone();
    }
    Ok(s)
}

fn mode(s: &str) -> Result<Mode, Error> {
    s.parse()
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    Ok(match cli.command {
        Command::Validate(c) => {
            let s = load(&c)?;
            cmd_validate(&s, Some(&cache_dir(&s)))
        }
        Command::Synthesize(c) => {
            let s = load(&c)?;
            cmd_synthesize(&s, Some(&cache_dir(&s)))
        }
        Command::Simulate { common, mode: m, force } => {
            let m = mode(&m)?;
            let s = load(&common)?;
            cmd_simulate(&s, m, Some(&cache_dir(&s)), force)
        }
        Command::Sweep { common, mode: m, param, values } => {
            let m = mode(&m)?;
            let s = load(&common)?;
            let values = values
                .iter()
                .filter(|v| !v.trim().is_empty())
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad sweep value {v:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            cmd_sweep(&s, &param, &values, m, Some(&cache_dir(&s)))
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let outcome = run(cli).unwrap_or_else(|e| Outcome::from_error(&e));
    let _ = writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(&outcome.report).unwrap_or_default()
    );
    if let Some(e) = outcome.report.get("error") {
        eprintln!("hyperstab: {}", e.as_str().unwrap_or_default());
    }
    ExitCode::from(outcome.code as u8)
}
