//! Command-line front end for the scenario harness.

use crate::harness::{
    preset_scenarios, run_scenario_with_mode, write_outcome, ExecMode, LinkScenario,
    OutputFormat, ScenarioConfig, ScenarioKind, Scheme, TranscriptVerbosity, PRESET_NAMES,
};
use clap::Parser;
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "hybridsim",
    about = "Monte Carlo sweeps for subspace estimation and hybrid precoding over mmWave links",
    disable_version_flag = true
)]
struct Cli {
    /// Scenario preset: fig3, fig4, fig5, fig6 or fig7.
    #[arg(long)]
    preset: Option<String>,

    /// BS antenna count (explicit scenario, overrides presets).
    #[arg(long = "M")]
    bs_antennas: Option<usize>,

    /// MS antenna count.
    #[arg(long = "N")]
    ms_antennas: Option<usize>,

    /// RF chains; defaults to M/8.
    #[arg(long = "r")]
    rf_chains: Option<usize>,

    /// Data streams.
    #[arg(long = "d")]
    streams: Option<usize>,

    /// Scatterer paths.
    #[arg(long = "L")]
    paths: Option<usize>,

    /// Krylov depth.
    #[arg(long = "m")]
    depth: Option<usize>,

    /// Iterations for the two-way scheme (default: overhead-matched).
    #[arg(long = "I")]
    mtqr_iterations: Option<usize>,

    /// SNR sweep in dB: "lo:hi:step" or a single value.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,

    /// Monte Carlo trials per SNR point.
    #[arg(long)]
    trials: Option<usize>,

    /// Master seed; falls back to HYBRIDSIM_SEED, then 1.
    #[arg(long)]
    seed: Option<u64>,

    /// Output path (default results.csv / results.json).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format.
    #[arg(long, default_value = "csv")]
    format: String,

    /// Comma-separated scheme list (e.g. "SED,MTQR,OPT").
    #[arg(long)]
    schemes: Option<String>,

    /// Write per-trial transcript JSON (channel + rows) next to the output.
    #[arg(long)]
    emit_transcripts: bool,

    /// Transcripts additionally carry the full estimation run (basis,
    /// projections, echo records). Implies --emit-transcripts.
    #[arg(long)]
    emit_full_transcripts: bool,

    /// Append the waterfilled-rate column.
    #[arg(long)]
    emit_waterfill: bool,

    /// Force sequential trial execution.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

fn parse_snr(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("cannot parse SNR spec '{spec}' (want lo:hi:step)"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [single] => Ok(vec![single.trim().parse::<f64>().map_err(|_| bad())?]),
        [lo, hi, step] => {
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let step: f64 = step.trim().parse().map_err(|_| bad())?;
            if step <= 0.0 || hi < lo {
                return Err(bad());
            }
            let mut out = Vec::new();
            let mut v = lo;
            while v <= hi + 1e-9 {
                out.push(v);
                v += step;
            }
            Ok(out)
        }
        _ => Err(bad()),
    }
}

fn parse_schemes(spec: &str) -> Result<Vec<Scheme>, CliError> {
    spec.split(',')
        .map(|token| {
            token
                .trim()
                .parse::<Scheme>()
                .map_err(|e| CliError::Config(e.to_string()))
        })
        .collect()
}

fn resolve_seed(cli: &Cli) -> u64 {
    cli.seed
        .or_else(|| {
            std::env::var("HYBRIDSIM_SEED")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
}

fn explicit_scenario(cli: &Cli, seed: u64) -> Result<ScenarioConfig, CliError> {
    let need = |name: &str, v: Option<usize>| {
        v.ok_or_else(|| {
            CliError::Config(format!(
                "explicit scenarios need --{name} (or use --preset, one of: {})",
                PRESET_NAMES.join(", ")
            ))
        })
    };
    let bs = need("M", cli.bs_antennas)?;
    let ms = need("N", cli.ms_antennas)?;
    let streams = need("d", cli.streams)?;
    let paths = need("L", cli.paths)?;
    let depth = need("m", cli.depth)?;
    let rf = cli.rf_chains.unwrap_or_else(|| (bs / 8).max(1));
    Ok(ScenarioConfig {
        label: format!("M{bs}_N{ms}_d{streams}"),
        kind: ScenarioKind::Link(LinkScenario {
            bs_antennas: bs,
            ms_antennas: ms,
            rf_chains: rf,
            streams,
            paths,
            depth,
            mtqr_iterations: cli.mtqr_iterations,
        }),
        schemes: vec![Scheme::Sed, Scheme::Mtqr, Scheme::Opt],
        snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
        trials: 100,
        seed,
        emit_waterfill: false,
        transcripts: TranscriptVerbosity::Off,
    })
}

fn apply_overrides(cfg: &mut ScenarioConfig, cli: &Cli) -> Result<(), CliError> {
    if let ScenarioKind::Link(link) = &mut cfg.kind {
        if let Some(v) = cli.bs_antennas {
            link.bs_antennas = v;
        }
        if let Some(v) = cli.ms_antennas {
            link.ms_antennas = v;
        }
        if let Some(v) = cli.rf_chains {
            link.rf_chains = v;
        }
        if let Some(v) = cli.streams {
            link.streams = v;
        }
        if let Some(v) = cli.paths {
            link.paths = v;
        }
        if let Some(v) = cli.depth {
            link.depth = v;
        }
        if let Some(v) = cli.mtqr_iterations {
            link.mtqr_iterations = Some(v);
        }
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(spec) = &cli.snr {
        cfg.snr_db = parse_snr(spec)?;
    }
    if let Some(spec) = &cli.schemes {
        cfg.schemes = parse_schemes(spec)?;
    }
    cfg.emit_waterfill = cli.emit_waterfill;
    cfg.transcripts = if cli.emit_full_transcripts {
        TranscriptVerbosity::Full
    } else if cli.emit_transcripts {
        TranscriptVerbosity::Summary
    } else {
        TranscriptVerbosity::Off
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))
}

fn summary_line(cfg: &ScenarioConfig, label: &str, snr_db: f64, outcome: &crate::harness::ScenarioOutcome) -> String {
    let mut parts = Vec::new();
    for s in outcome.summary.iter().filter(|s| s.snr_db == snr_db) {
        let part = match cfg.kind {
            ScenarioKind::Decomposition(_) => {
                format!("{} dist {:.4}", s.scheme, s.mean_decomp_dist)
            }
            ScenarioKind::Link(_) => format!(
                "{} {:.3}±{:.3}",
                s.scheme, s.mean_rate_bits, s.stderr_rate_bits
            ),
        };
        parts.push(part);
    }
    format!("[{label}] snr {snr_db:+.1} dB | {}", parts.join(" | "))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = resolve_seed(&cli);
    let mut scenarios = match &cli.preset {
        Some(name) => preset_scenarios(name, seed).map_err(|e| CliError::Config(e.to_string()))?,
        None => vec![explicit_scenario(&cli, seed)?],
    };
    for cfg in &mut scenarios {
        apply_overrides(cfg, &cli)?;
    }

    let format = match cli.format.as_str() {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => return Err(CliError::Config(format!("unknown format '{other}'"))),
    };
    let default_name = match format {
        OutputFormat::Csv => "results.csv",
        OutputFormat::Json => "results.json",
    };
    let out_base = cli.out.clone().unwrap_or_else(|| PathBuf::from(default_name));
    let mode = if cli.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    };

    let multi = scenarios.len() > 1;
    for cfg in &scenarios {
        let outcome =
            run_scenario_with_mode(cfg, mode).map_err(|e| CliError::Runtime(e.to_string()))?;
        let out_path = if multi {
            let stem = out_base
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "results".into());
            let ext = out_base
                .extension()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into());
            // "fig5.csv" + label "fig5_L2" -> "fig5_L2.csv", not "fig5_fig5_L2.csv"
            let name = if cfg.label.starts_with(&format!("{stem}_")) {
                format!("{}.{ext}", cfg.label)
            } else {
                format!("{stem}_{}.{ext}", cfg.label)
            };
            out_base.with_file_name(name)
        } else {
            out_base.clone()
        };
        write_outcome(cfg, &outcome, &out_path, format)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for &snr_db in &cfg.snr_db {
            println!("{}", summary_line(cfg, &cfg.label, snr_db, &outcome));
        }
        println!("[{}] wrote {}", cfg.label, out_path.display());
    }
    Ok(())
}

/// Parse arguments and run; returns the process exit code (0 success,
/// 2 configuration error, 1 runtime failure).
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
