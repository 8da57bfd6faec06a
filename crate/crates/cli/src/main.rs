use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use coherence_cli::commands::{self, FitArgs, FitKind, SimulateArgs, TransportArgs};
use coherence_cli::scenario::Qty;
use coherence_cli::CliError;
use coherence_core::dephasing::LineshapeForm;

#[derive(Parser)]
#[command(name = "coherence", version, about = "Hyperfine-qubit coherence simulator and analysis tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or preset and write CSV, fits and plots.
    Simulate {
        #[arg(long, conflicts_with = "preset")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "COHERENCE_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Worker threads; changes speed only, never results.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit a data CSV and write the result as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "unchirped")]
        form: FormArg,
        /// Echo π-pulse time, e.g. "15 ms".
        #[arg(long)]
        tau_pi: Option<Qty>,
        /// P3 floor of atoms outside the superposition (echo visibility).
        #[arg(long, default_value_t = 0.0)]
        background: f64,
        #[arg(long)]
        t2_star: Option<Qty>,
        #[arg(long)]
        fringe_frequency: Option<Qty>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Allan deviation of a `time_s,amplitude` record.
    Allan {
        #[arg(long)]
        record: PathBuf,
        /// Averaging times, e.g. "10 ms"; octave spacing when omitted.
        #[arg(long = "tau")]
        taus: Vec<Qty>,
        #[arg(long, default_value = "allan.csv")]
        out: PathBuf,
    },
    /// Heating of a round-trip bang-bang transport.
    Transport {
        #[arg(long, default_value = "1 mm")]
        distance: Qty,
        #[arg(long, default_value = "2 ms")]
        move_time: Qty,
        #[arg(long, default_value = "3 ms")]
        hold: Qty,
        #[arg(long, default_value = "0.1 mK")]
        depth: Qty,
        /// Initial energy in units of the trap depth.
        #[arg(long, default_value_t = 0.3)]
        energy: f64,
        #[arg(long, default_value_t = 64)]
        phases: usize,
        #[arg(long)]
        dt: Option<Qty>,
        #[arg(long, env = "COHERENCE_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Render a data CSV (and optional fit and band) as SVG.
    Plot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        band: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset's scenario file.
    Show {
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ramsey,
    Echo,
    Visibility,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    #[value(alias = "paper")]
    Unchirped,
    Exact,
}

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, preset, seed, out, threads } => {
            let report = commands::simulate(&SimulateArgs { scenario, preset, seed, out: out.clone(), threads })?;
            for line in commands::report_lines(&report) {
                say!("{line}");
            }
            say!("outputs written to {}", out.display());
        }
        Command::Fit { data, model, form, tau_pi, background, t2_star, fringe_frequency, out } => {
            let args = FitArgs {
                data,
                model: match model {
                    ModelArg::Ramsey => FitKind::Ramsey,
                    ModelArg::Echo => FitKind::Echo,
                    ModelArg::Visibility => FitKind::Visibility,
                },
                form: match form {
                    FormArg::Unchirped => LineshapeForm::Unchirped,
                    FormArg::Exact => LineshapeForm::Exact,
                },
                tau_pi,
                background,
                t2_star,
                fringe_frequency,
                out,
            };
            let (r, path) = commands::fit(&args)?;
            say!("{}", r.summary());
            eprintln!("fit written to {}", path.display());
        }
        Command::Allan { record, taus, out } => {
            let c = commands::allan(&record, &taus, &out)?;
            for (t, s) in c.taus.iter().zip(&c.sigma_a) {
                say!("tau = {t:.4e} s  sigma_A = {s:.4e}");
            }
        }
        Command::Transport { distance, move_time, hold, depth, energy, phases, dt, out } => {
            let r = commands::transport(&TransportArgs { distance, move_time, hold, depth, energy, phases, dt, out })?;
            say!(
                "max dE/U0 = {:.4}, mean dE/U0 = {:.4}, escaped {}/{} (a = {:.1} m/s^2)",
                r.max_gain_over_u0,
                r.mean_gain_over_u0,
                r.escaped,
                r.phases,
                r.acceleration_mps2
            );
        }
        Command::Plot { data, fit, band, out } => {
            let p = commands::plot(&data, fit.as_deref(), band.as_deref(), out.as_deref())?;
            say!("{}", p.display());
        }
        Command::Presets { action: PresetAction::List } => {
            let _ = commands::presets_list(std::io::stdout().lock());
        }
        Command::Presets { action: PresetAction::Show { name } } => {
            let _ = write!(std::io::stdout(), "{}", coherence_cli::presets::find(&name)?.source);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
