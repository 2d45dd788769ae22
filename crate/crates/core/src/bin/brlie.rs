use std::path::PathBuf;
use std::process::ExitCode;

use brlie::cli::{self, RunConfig};
use brlie::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "brlie",
    version,
    about = "Bochner-Riesz kernels and divergence experiments on compact Lie groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Root datum summary of a group such as A1, A2, A1xA1, B2, C2 or G2.
    GroupInfo { spec: String },
    /// Kernel values as CSV.
    Kernel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        multiplier: Option<String>,
        #[arg(long)]
        scale: Option<f64>,
        /// exact, tilde, poisson or compare
        #[arg(long)]
        mode: Option<String>,
        /// Evaluation point, comma separated simple-root coordinates (repeatable).
        #[arg(long = "point", value_delimiter = ';')]
        points: Vec<String>,
        /// Size of the seeded wall-avoiding grid when no point is given.
        #[arg(long)]
        grid: Option<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical-measure divergence certificates and construction stages.
    Diverge {
        #[command(flatten)]
        common: Common,
        /// Level L (repeatable).
        #[arg(long = "level")]
        levels: Vec<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Annulus blow-up scan and a.e. localization check.
    Localize {
        #[command(flatten)]
        common: Common,
        /// scan, ae or both
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn base_config(common: &Common, experiment: &str) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.experiment = experiment.into();
    if let Some(g) = &common.group {
        cfg.group = g.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad coordinate {x:?} in point {s:?}")))
        })
        .collect()
}

/// Returns true when the configuration was only printed.
fn maybe_print(common: &Common, cfg: &RunConfig) -> Result<bool> {
    if common.print_config {
        print!("{}", cfg.to_toml_string()?);
    }
    Ok(common.print_config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GroupInfo { spec } => print!("{}", cli::group_info(&spec)?),
        Command::Kernel {
            common,
            multiplier,
            scale,
            mode,
            points,
            grid,
            out,
        } => {
            let mut cfg = base_config(&common, "kernel")?;
            let k = &mut cfg.kernel;
            if let Some(m) = multiplier {
                k.multiplier = m;
            }
            if let Some(s) = scale {
                k.scale = s;
            }
            if let Some(m) = mode {
                k.mode = m;
            }
            if !points.is_empty() {
                k.points = points
                    .iter()
                    .map(|p| parse_point(p))
                    .collect::<Result<_>>()?;
            }
            if let Some(g) = grid {
                k.grid_count = g;
            }
            if maybe_print(&common, &cfg)? {
                return Ok(());
            }
            let csv = cli::kernel_csv(&cfg)?;
            match out {
                Some(p) => std::fs::write(p, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Diverge {
            common,
            levels,
            epsilon,
            stages,
            out_dir,
        } => {
            let mut cfg = base_config(&common, "diverge")?;
            if !levels.is_empty() {
                cfg.diverge.levels = levels;
            }
            if let Some(e) = epsilon {
                cfg.diverge.epsilon = e;
            }
            if let Some(s) = stages {
                cfg.diverge.stages = s;
            }
            if let Some(d) = out_dir {
                cfg.output_dir = d.to_string_lossy().into_owned();
            }
            if maybe_print(&common, &cfg)? {
                return Ok(());
            }
            let out = cli::cmd_diverge(&cfg)?;
            print!("{}", out.summary());
            if !out.certified() {
                return Err(Error::Certification(format!(
                    "divergence not certified; reports are in {}",
                    cfg.output_dir
                )));
            }
        }
        Command::Localize {
            common,
            mode,
            out_dir,
        } => {
            let mut cfg = base_config(&common, "localize")?;
            if let Some(m) = mode {
                cfg.localize.mode = m;
            }
            if let Some(d) = out_dir {
                cfg.output_dir = d.to_string_lossy().into_owned();
            }
            if maybe_print(&common, &cfg)? {
                return Ok(());
            }
            let out = cli::cmd_localize(&cfg)?;
            for s in &out.scans {
                println!(
                    "eps {:.4e}: annulus sup {:.4e}, shifted sup {:.4e}, rank correlation {:.4}",
                    s.epsilon, s.annulus_sup, s.shifted_annulus_sup, s.rank_correlation
                );
            }
            if let Some(l) = &out.localization {
                println!(
                    "localization at |x| = {:.4}: admissible {}, first-half max {:.4e}, second-half max {:.4e}",
                    cfg.localize.probe_fraction * cfg.root_system()?.r0,
                    l.admissible,
                    l.first_half_max,
                    l.second_half_max
                );
            }
            if !out.verdict() {
                return Err(Error::Certification(format!(
                    "localization contrast not observed; reports are in {}",
                    cfg.output_dir
                )));
            }
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
