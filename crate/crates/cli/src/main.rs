use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use jumpctl_cli::commands::{self, SimOverrides};
use jumpctl_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "jumpctl",
    version,
    about = "Optimal control and filtering over Markov packet-loss channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the control and filtering Riccati equations and write gains plus a report.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify supplied gains: radii, separation verdict, costs and LMI check.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo simulation of the closed loop.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        noise: Option<Switch>,
        /// Trials written to the trace file (default: first 100).
        #[arg(long)]
        record_trials: Option<usize>,
    },
    /// Bundled examples.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Inverted pendulum on a cart over 12-mode channels.
    Pendulum {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = commands::threads_from_env()?;
    match cli.command {
        Command::Synthesize { config, out } => {
            let o = commands::cmd_synthesize(&config, &out)?;
            if let Some(s) = &o.report.separation {
                println!(
                    "{} (rho_control {:.6}, rho_filter {:.6})",
                    s.verdict, s.rho_control, s.rho_filter
                );
            }
        }
        Command::Analyze { config, gains, out } => {
            let r = commands::cmd_analyze(&config, &gains, &out)?;
            if let Some(s) = &r.separation {
                println!(
                    "{} (rho_control {:.6}, rho_filter {:.6})",
                    s.verdict, s.rho_control, s.rho_filter
                );
            }
        }
        Command::Simulate {
            config,
            gains,
            traces,
            summary,
            trials,
            steps,
            seed,
            noise,
            record_trials,
        } => {
            let ov = SimOverrides {
                trials,
                steps,
                seed,
                noise_on: noise.map(|s| matches!(s, Switch::On)),
                record_trials,
                threads,
            };
            let r = commands::cmd_simulate(&config, &gains, &traces, &summary, &ov)?;
            if let Some(check) = r.simulation.as_ref().and_then(|s| s.moment_check.as_ref()) {
                println!("moment check: {}", check.status);
            }
        }
        Command::Demo {
            which: Demo::Pendulum { out },
        } => {
            let ov = SimOverrides {
                threads,
                ..SimOverrides::default()
            };
            let d = commands::demo_pendulum(&out, &ov)?;
            println!("max |eig(A)| = {:.4}", d.max_abs_eig);
            println!("measurement matrix L = I4 and a surrogate 12-mode TPM are used");
            if let Some(s) = &d.synthesis.report.separation {
                println!(
                    "{} (rho_control {:.6}, rho_filter {:.6})",
                    s.verdict, s.rho_control, s.rho_filter
                );
            }
            println!("outputs written to {}", d.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
