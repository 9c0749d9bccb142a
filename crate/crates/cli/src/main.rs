use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gyrotrack_cli::{
    check, compare, parse_entries, plot, simulate, tune_gains, Baseline, CliError, TuneOptions,
};

#[derive(Parser)]
#[command(
    name = "gyrotrack",
    version,
    about = "Attitude tracking with internal rotors on SO(3)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Pd,
    #[value(name = "self")]
    SameLaw,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write CSV telemetry plus a JSON sidecar.
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check gain inequalities, or synthesize gains that satisfy them.
    TuneGains {
        config: PathBuf,
        #[arg(long)]
        synthesize: bool,
        /// Also report sampled Hessian and gradient-ratio bounds.
        #[arg(long)]
        estimate_bounds: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the config back with the resulting gains.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare control effort against a baseline law.
    Compare {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "pd")]
        baseline: BaselineArg,
    },
    /// Render SVG plots from a telemetry CSV.
    Plot {
        csv: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Matrix entries to overlay, e.g. 11,12,21,22.
        #[arg(long, default_value = "11,12,21,22")]
        entries: String,
    },
    /// Validate a config without running it.
    Check { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Simulate { config, output } => {
            let s = simulate(&config, &output)?;
            let _ = writeln!(
                stdout,
                "wrote {} rows to {} ({})",
                s.rows,
                s.csv.display(),
                s.sidecar.display()
            );
            if !s.feasibility.feasible {
                eprintln!("warning: gains do not satisfy the certificate inequalities");
            }
        }
        Command::TuneGains {
            config,
            synthesize,
            estimate_bounds,
            seed,
            output,
        } => {
            let opts = TuneOptions {
                synthesize,
                estimate_bounds,
                seed,
            };
            let report = tune_gains(&config, opts, &mut stdout)?;
            if let Some(path) = output {
                std::fs::write(&path, report.config.to_text()).map_err(|e| CliError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            }
        }
        Command::Compare {
            config,
            output,
            baseline,
        } => {
            let baseline = match baseline {
                BaselineArg::Pd => Baseline::Pd,
                BaselineArg::SameLaw => Baseline::SameLaw,
            };
            let i = compare(&config, &output, baseline)?;
            let _ = writeln!(
                stdout,
                "integral |I u_ext|: primary {:.6e}, baseline {:.6e} (ratio {:.6})",
                i.primary_ext,
                i.alternate_ext,
                i.ratio_ext()
            );
        }
        Command::Plot {
            csv,
            output,
            entries,
        } => {
            for path in plot(&csv, &output, &parse_entries(&entries)?)? {
                let _ = writeln!(stdout, "wrote {}", path.display());
            }
        }
        Command::Check { config } => check(&config, &mut stdout)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
