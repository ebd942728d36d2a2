use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use infonet_core::pipeline::{
    self, analysed_windows, IngestIndex, Layout, Overrides, RunConfig, SynthRequest, WindowAnalysis, EXIT_CONFIG, EXIT_OK,
    EXIT_PARTIAL,
};
use infonet_core::synth::CouplingSpec;
use infonet_core::{Error, MultipletKind};

/// Information-theoretic networks of traded assets.
#[derive(Parser, Debug)]
#[command(name = "infonet", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory of trade files.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Quote currency selecting the trade files (USD, EUR, XBT, ...).
    #[arg(long, global = true)]
    fiat: Option<String>,
    /// Significance level of the Granger test.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Largest autoregressive order tried by BIC.
    #[arg(long, global = true)]
    pmax: Option<usize>,
    /// Lag order of the dynamic O-information.
    #[arg(long, global = true)]
    lag: Option<usize>,
    /// Largest multiplet size.
    #[arg(long, global = true)]
    nmax: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Abort the summaries when any window fails.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read trade files and write one return panel per window.
    Ingest,
    /// Granger-causality network of each ingested window.
    GcNetwork {
        #[arg(long)]
        window: Option<usize>,
    },
    /// Best redundant and synergistic multiplets of each ingested window.
    OinfoScan {
        #[arg(long)]
        window: Option<usize>,
    },
    /// Average network and age-strength correlation.
    NetStats,
    /// Correlation between the networks of every pair of windows.
    WindowCorr,
    /// Weekly indicators, multiplet membership and class fractions.
    Indicators,
    /// Write a synthetic panel.
    Synth {
        #[command(subcommand)]
        kind: SynthCommand,
    },
    /// Every stage, resuming from earlier output.
    Run,
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Gaussian VAR with the given couplings.
    Var {
        #[arg(long)]
        vars: usize,
        #[arg(long, default_value_t = 10_080)]
        length: usize,
        /// SOURCE:TARGET:LAG:COEF, repeatable.
        #[arg(long = "coupling")]
        couplings: Vec<String>,
        /// Noise variance of every variable.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Minute trade tapes of a Gaussian VAR, ready for `ingest`.
    Tapes {
        #[arg(long)]
        vars: usize,
        /// First window's Monday; trading starts the day before.
        #[arg(long, default_value = "2024-01-01")]
        monday: NaiveDate,
        #[arg(long, default_value_t = 4)]
        weeks: usize,
        /// SOURCE:TARGET:LAG:COEF, repeatable.
        #[arg(long = "coupling")]
        couplings: Vec<String>,
        /// Standard deviation of the minute log returns.
        #[arg(long, default_value_t = 1e-3)]
        scale: f64,
    },
    /// Target driven by a planted redundant or synergistic pair.
    Planted {
        #[arg(long)]
        kind: MultipletKind,
        /// Independent distractor columns.
        #[arg(long, default_value_t = 4)]
        extra: usize,
        #[arg(long, default_value_t = 100_000)]
        length: usize,
    },
}

fn parse_coupling(s: &str) -> Result<(usize, usize, usize, f64), Error> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Config(format!("coupling '{s}' is not SOURCE:TARGET:LAG:COEF"));
    if parts.len() != 4 {
        return Err(bad());
    }
    Ok((
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
        parts[3].parse().map_err(|_| bad())?,
    ))
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig, Error> {
    let mut config = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        input: g.input.clone(),
        fiat: g.fiat.clone(),
        alpha: g.alpha,
        p_max: g.pmax,
        lag: g.lag,
        n_max: g.nmax,
        jobs: g.jobs,
        seed: g.seed,
        strict: g.strict,
        out: g.out.clone(),
    });
    Ok(config)
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_PARTIAL,
    }
}

fn report_failures(failures: &[(usize, String)], strict: bool) -> i32 {
    for (w, e) in failures {
        warn!("window {w} failed: {e}");
    }
    if failures.is_empty() {
        EXIT_OK
    } else {
        if strict {
            error!("strict mode: {} window(s) failed", failures.len());
        }
        EXIT_PARTIAL
    }
}

fn execute(command: Command, config: RunConfig) -> Result<i32, Error> {
    let layout = Layout::new(&config.run.out);
    let summary_inputs = || -> Result<(IngestIndex, Vec<usize>), Error> {
        let index = IngestIndex::load(&layout.ingest_index())?;
        let complete = analysed_windows(&layout, &index);
        Ok((index, complete))
    };
    let log_diagnostics = |d: Vec<String>| {
        for line in d {
            warn!("{line}");
        }
    };
    match command {
        Command::Run => return Ok(pipeline::run_pipeline(&config).exit_code),
        Command::Ingest => {
            config.validate(true)?;
            let index = pipeline::ingest_stage(&config)?;
            log_diagnostics(index.diagnostics);
        }
        Command::GcNetwork { window } => {
            config.validate(false)?;
            let failures = pipeline::per_window_stage(&config, WindowAnalysis::Granger, window)?;
            return Ok(report_failures(&failures, config.run.strict));
        }
        Command::OinfoScan { window } => {
            config.validate(false)?;
            let failures = pipeline::per_window_stage(&config, WindowAnalysis::Multiplets, window)?;
            return Ok(report_failures(&failures, config.run.strict));
        }
        Command::NetStats => {
            config.validate(false)?;
            let (_, complete) = summary_inputs()?;
            log_diagnostics(pipeline::net_stats_stage(&config, &layout, &complete)?);
        }
        Command::WindowCorr => {
            config.validate(false)?;
            let (_, complete) = summary_inputs()?;
            log_diagnostics(pipeline::window_corr_stage(&config, &layout, &complete)?);
        }
        Command::Indicators => {
            config.validate(false)?;
            let (index, complete) = summary_inputs()?;
            log_diagnostics(pipeline::indicators_stage(&config, &layout, &index, &complete)?);
        }
        Command::Synth { kind } => {
            let seed = config.run.seed;
            let request = match kind {
                SynthCommand::Var {
                    vars,
                    length,
                    couplings,
                    noise,
                } => {
                    let couplings = couplings.iter().map(|c| parse_coupling(c)).collect::<Result<Vec<_>, _>>()?;
                    let spec = CouplingSpec::new(vars, couplings, vec![noise; vars], seed)
                        .map_err(|e| Error::Config(e.to_string()))?;
                    SynthRequest::Var { spec, length }
                }
                SynthCommand::Tapes {
                    vars,
                    monday,
                    weeks,
                    couplings,
                    scale,
                } => {
                    let couplings = couplings.iter().map(|c| parse_coupling(c)).collect::<Result<Vec<_>, _>>()?;
                    let spec = CouplingSpec::new(vars, couplings, vec![1.0; vars], seed)
                        .map_err(|e| Error::Config(e.to_string()))?;
                    SynthRequest::Tapes {
                        spec,
                        monday,
                        weeks,
                        scale,
                        quote: config.input.fiat.clone(),
                    }
                }
                SynthCommand::Planted { kind, extra, length } => SynthRequest::Planted {
                    kind,
                    extra,
                    length,
                    seed,
                },
            };
            let tapes = matches!(request, SynthRequest::Tapes { .. });
            std::fs::create_dir_all(&config.run.out).map_err(|e| Error::Io {
                path: config.run.out.clone(),
                source: e,
            })?;
            pipeline::write_synth(&config.run.out, &request)?;
            info!("synthetic data written to {}", config.run.out.display());
            if !tapes {
                println!("{}", config.run.out.join("panel_0.csv").display());
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let config = match load_config(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let code = match execute(cli.command, config) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            code_of(&e)
        }
    };
    ExitCode::from(code as u8)
}
