use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ueslab::Lemma1Params64;
use ueslab_cli::config::ExperimentConfig;
use ueslab_cli::{lemma_check, run, sweep, CliError, LEMMA_TOLERANCE};

#[derive(Parser)]
#[command(name = "ueslab", version, about = "Unbiased extremum-seeking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed loop and write trajectory, fit and plot files.
    Run { config: PathBuf },
    /// Sweep dither frequencies with the practical-stability probe.
    Sweep { config: PathBuf },
    /// Compare RK4 against the closed form of the comparison ODE.
    #[command(allow_negative_numbers = true)]
    LemmaCheck {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        eps1: f64,
        #[arg(long)]
        eps2: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        v0: f64,
        #[arg(long, default_value_t = 100.0)]
        t1: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = std::env::var_os("UESLAB_OUT").map(PathBuf::from);
    let result = match cli.command {
        Command::Run { config } => ExperimentConfig::load(&config).and_then(|cfg| {
            let report = run(&cfg, out.as_deref())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", report.summary);
            Ok(())
        }),
        Command::Sweep { config } => ExperimentConfig::load(&config).and_then(|cfg| {
            let report = sweep(&cfg, out.as_deref())?;
            println!("{}", report.summary);
            Ok(())
        }),
        Command::LemmaCheck { beta, eps1, eps2, p, q, v0, t1, dt } => {
            Lemma1Params64::new(beta, eps1, eps2, p, q, v0, 0.0)
                .map_err(|e| CliError::Config(e.to_string()))
                .and_then(|params| lemma_check(&params, t1, dt))
                .and_then(|(err, report)| {
                    println!("{report}");
                    if err < LEMMA_TOLERANCE {
                        Ok(())
                    } else {
                        Err(CliError::Numeric(format!("error {err:.3e} is not below {LEMMA_TOLERANCE:e}")))
                    }
                })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ueslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
