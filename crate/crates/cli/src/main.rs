mod report;
mod suite;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use report::{Collector, ConfigEcho, Report, SCHEMA_VERSION};
use suite::{default_tolerances, Settings};

#[derive(Parser, Debug)]
#[command(name = "qbayes", version, about = "Seeded numerical checks of quantum-Bayesian state updating")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Hilbert-space dimension for dimension-dependent checks.
    #[arg(long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..=16))]
    dim: u64,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Random trials per sweep.
    #[arg(long, global = true, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a named tolerance, e.g. `--tol reconstruction=1e-7`.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE", value_parser = parse_tolerance)]
    tol: Vec<(String, f64)>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Build the standard minimal informationally complete measurement.
    SqmBuild,
    /// Reconstruct random states from their frame functions.
    GleasonRoundtrip,
    /// Largest probability any state assigns to a standard-measurement outcome.
    CertaintyBound,
    /// Teleport a random qubit and report the post-correction fidelity.
    Teleport,
    /// Split random updates into refinement and readjustment; check channels.
    UpdateFactor,
    /// Subentropy, mean entropy and refinement inequalities.
    EntropySweep,
    /// Joint-state reconstruction from local product data.
    LocalityReconstruct,
    /// The swap frame: normalised on trees but not a state.
    SwapCounterexample,
    /// Two agents' priors merging under shared data.
    DefinettiMerge,
    /// Exchangeable real state that is no mixture of real powers.
    RealCounterexample,
    /// Every check above.
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
    Text,
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad value for `{name}`: {e}"))?;
    if !value.is_finite() {
        return Err(format!("tolerance `{name}` must be finite"));
    }
    Ok((name.trim().to_string(), value))
}

type Step = fn(&Settings, &mut Collector) -> qbayes::Result<()>;

fn steps(command: Command) -> Vec<(&'static str, Step)> {
    let every: Vec<(&'static str, Step)> = vec![
        ("sqm", suite::sqm_build),
        ("gleason", suite::gleason_roundtrip),
        ("certainty", suite::certainty),
        ("teleport", suite::teleportation),
        ("update", suite::update_factor),
        ("channels", suite::channels),
        ("entropy", suite::entropy_sweep),
        ("locality", suite::locality),
        ("swap", suite::swap),
        ("definetti", suite::definetti_merge),
        ("real", suite::real_counterexamples),
    ];
    let pick = |names: &[&str]| every.iter().filter(|(n, _)| names.contains(n)).cloned().collect();
    match command {
        Command::SqmBuild => pick(&["sqm"]),
        Command::GleasonRoundtrip => pick(&["gleason"]),
        Command::CertaintyBound => pick(&["certainty"]),
        Command::Teleport => pick(&["teleport"]),
        Command::UpdateFactor => pick(&["update", "channels"]),
        Command::EntropySweep => pick(&["entropy"]),
        Command::LocalityReconstruct => pick(&["locality"]),
        Command::SwapCounterexample => pick(&["swap"]),
        Command::DefinettiMerge => pick(&["definetti"]),
        Command::RealCounterexample => pick(&["real"]),
        Command::All => every,
    }
}

fn command_name(command: Command) -> String {
    let debug = format!("{command:?}");
    let mut name = String::new();
    for (i, ch) in debug.chars().enumerate() {
        if ch.is_uppercase() && i > 0 {
            name.push('-');
        }
        name.push(ch.to_ascii_lowercase());
    }
    name
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };

    let mut tolerances = default_tolerances();
    for (name, value) in &cli.tol {
        match tolerances.get_mut(name) {
            Some(slot) => *slot = *value,
            None => {
                let known: Vec<_> = tolerances.keys().map(String::as_str).collect();
                eprintln!("error: unknown tolerance `{name}`; known names: {}", known.join(", "));
                return ExitCode::from(2);
            }
        }
    }

    let settings = Settings { dim: cli.dim as usize, seed: cli.seed, trials: cli.trials as usize, tol: tolerances };
    let started = Instant::now();
    let mut collector = Collector::default();
    for (group, step) in steps(cli.command) {
        // single-purpose commands keep bare check names
        let label = match cli.command {
            Command::All => group,
            Command::UpdateFactor if group == "channels" => group,
            _ => "",
        };
        collector.group(label);
        if let Err(e) = step(&settings, &mut collector) {
            eprintln!("error in {group}: {e}");
            return ExitCode::from(1);
        }
    }

    let pass = collector.checks.iter().all(|c| c.pass);
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: command_name(cli.command),
        config: ConfigEcho {
            dim: settings.dim,
            seed: settings.seed,
            trials: settings.trials,
            format: format!("{:?}", cli.format).to_lowercase(),
            rng: qbayes::rng::ALGORITHM,
            tolerances: settings.tol,
        },
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        checks: collector.checks,
        values: collector.values,
        pass,
        wall_time_s: started.elapsed().as_secs_f64(),
    };

    let mut sink: Box<dyn Write> = match &cli.out {
        Some(path) => match File::create(path) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => Box::new(io::stdout().lock()),
    };
    let written = match cli.format {
        Format::Json => report.write_json(&mut sink),
        Format::Csv => report.write_csv(&mut sink),
        Format::Text => report.write_text(&mut sink),
    }
    .and_then(|_| sink.flush());
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
