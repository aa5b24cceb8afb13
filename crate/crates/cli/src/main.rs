//! `tfqkd` command-line front end.
//!
//! Exit codes: 0 success (zero-key runs included), 1 identity-suite failure, 2 configuration
//! or input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tfqkd::experiment::{
    simulation_set_template, load_config_over, optimize, sweep, sweep_text, verify, ExperimentConfig, FreeParam, Preset,
    OUTPUT_DIR_ENV,
};
use tfqkd::ratecore::Mode;
use tfqkd::report::{write_file, Report};
use tfqkd::servo::Stages;

#[derive(Parser)]
#[command(name = "tfqkd", version, about = "Twin-field QKD link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file layered over the preset (or the default set).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base preset: sym546, sym603 or asym452.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Output file (default: run.output_path, else $TFQKD_OUTPUT_DIR/<command>.<ext>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the built-in identity suite.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic key rate from expected counts.
    Keyrate {
        #[command(flatten)]
        common: Common,
        /// Total windows N of the analysis.
        #[arg(long)]
        windows: Option<f64>,
    },
    /// Monte Carlo session followed by sifting, decoy analysis and AOPP.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulated windows (default run.mc_windows).
        #[arg(long)]
        windows: Option<f64>,
        #[arg(long)]
        chunks: Option<usize>,
    },
    /// Phase-stabilization servo run.
    Stabilize {
        #[command(flatten)]
        common: Common,
        /// Seconds of simulated time (default run.stabilize_s).
        #[arg(long)]
        duration: Option<f64>,
        /// none, fast-only or full (default run.stages).
        #[arg(long)]
        stages: Option<Stages>,
        /// Also write the 1 ms time series as delimited text.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Key rate against total distance (even split between the arms).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated distances in km.
        #[arg(long, value_delimiter = ',', conflicts_with = "range")]
        distances: Option<Vec<f64>>,
        /// start:stop:step in km.
        #[arg(long)]
        range: Option<String>,
        /// Apply the detector efficiency and attenuation of simulation set 1 or 2.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        set: Option<u8>,
    },
    /// Coordinate-descent search over source parameters.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Free parameters (mu_z, mu2, mu1, epsilon_send, p_signal_window, p_mu1).
        #[arg(long, value_delimiter = ',')]
        params: Option<Vec<FreeParam>>,
        /// Maximum objective evaluations.
        #[arg(long, default_value_t = 200)]
        budget: usize,
    },
    /// Built-in presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn resolve(common: &Common) -> tfqkd::Result<ExperimentConfig> {
    let base = match &common.preset {
        Some(name) => name.parse::<Preset>()?.config(),
        None => ExperimentConfig::default(),
    };
    let mut cfg = match &common.config {
        Some(path) => load_config_over(path, &base)?,
        None => base,
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(mode) = common.mode {
        cfg.security.mode = mode;
    }
    Ok(cfg)
}

/// Prints `text` and writes it to the resolved output path, if any.
fn emit(text: &str, out: Option<&Path>, cfg: Option<&ExperimentConfig>, default_name: &str) -> tfqkd::Result<()> {
    print!("{text}");
    let path = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.and_then(|c| c.run.output_path.as_ref()).map(PathBuf::from))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(|d| PathBuf::from(d).join(default_name)));
    if let Some(p) = path {
        write_file(&p, text)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn windows_arg(v: f64, field: &str) -> tfqkd::Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(tfqkd::Error::InvalidConfig { field: field.into(), reason: format!("must be finite and nonnegative, got {v}") })
    }
}

fn run(command: Command) -> tfqkd::Result<ExitCode> {
    match command {
        Command::Verify { out } => {
            let r = verify();
            emit(&r.text(), out.as_deref(), None, "verify.txt")?;
            Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Keyrate { common, windows } => {
            let mut cfg = resolve(&common)?;
            if let Some(n) = windows {
                cfg.run.windows = windows_arg(n, "windows")?;
            }
            emit(&cfg.key_rate_report()?, common.out.as_deref(), Some(&cfg), "keyrate.toml")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { common, windows, chunks } => {
            let mut cfg = resolve(&common)?;
            if let Some(n) = windows {
                cfg.run.mc_windows = windows_arg(n, "windows")? as u64;
            }
            if let Some(c) = chunks {
                cfg.run.chunks = c;
            }
            emit(&cfg.simulate_report()?, common.out.as_deref(), Some(&cfg), "simulate.toml")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Stabilize { common, duration, stages, series } => {
            let mut cfg = resolve(&common)?;
            if let Some(d) = duration {
                cfg.run.stabilize_s = d;
            }
            if let Some(s) = stages {
                cfg.run.stages = s;
            }
            let decimation = if series.is_some() { (1e-3 / cfg.servo.fast_dt()).round() as usize } else { 0 };
            let (text, run) = cfg.stabilize_report(decimation)?;
            emit(&text, common.out.as_deref(), Some(&cfg), "stabilize.toml")?;
            if let Some(path) = series {
                write_file(&path, &run.series_text())?;
                eprintln!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common, distances, range, set } => {
            let cfg = resolve(&common)?;
            let template = match set {
                Some(s) => simulation_set_template(&cfg, s),
                None => cfg.clone(),
            };
            let distances = match (distances, range) {
                (Some(d), _) => d,
                (None, Some(r)) => parse_range(&r)?,
                (None, None) => parse_range("50:700:10")?,
            };
            let rows = sweep(&template, &distances, template.security.mode)?;
            emit(&sweep_text(&rows), common.out.as_deref(), Some(&cfg), "sweep.csv")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Optimize { common, params, budget } => {
            let cfg = resolve(&common)?;
            let free = params.unwrap_or_else(|| FreeParam::ALL.to_vec());
            let o = optimize(&cfg, &free, budget, cfg.run.seed)?;
            let mut r = Report::new();
            r.raw(&o.config.to_toml());
            o.write(&mut r);
            emit(r.as_str(), common.out.as_deref(), Some(&cfg), "optimize.toml")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { action: PresetAction::List } => {
            for p in Preset::ALL {
                println!("{:<8} {}", p.name(), p.description());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { action: PresetAction::Show { name } } => {
            print!("{}", name.parse::<Preset>()?.config().to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_range(s: &str) -> tfqkd::Result<Vec<f64>> {
    let bad = || tfqkd::Error::InvalidConfig { field: "range".into(), reason: format!("expected start:stop:step, got `{s}`") };
    let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if step.is_nan() || step <= 0.0 || stop < start {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}
