use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phenoimmune::cli::{self, Overrides};
use phenoimmune::config::{load_config_with_base, preset, ScenarioConfig};
use phenoimmune::Result;

#[derive(Parser)]
#[command(
    name = "phenoimmune",
    version,
    about = "Phenotype-structured tumour-immune simulations"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// JSON config layered on top of the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named starting scenario (see `--preset list`).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of phenotype grid points.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Time step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long = "T", global = true)]
    t_end: Option<f64>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the integro-differential system.
    Simulate {
        /// Constant checkpoint-inhibitor dose.
        #[arg(long)]
        ici: Option<f64>,
        #[arg(long)]
        tumour_alone: bool,
    },
    /// Parameter sweep producing heatmap.csv.
    Sweep {
        /// NAME=v1,v2,... or NAME=start:end:count; at most two.
        #[arg(long = "axis")]
        axes: Vec<String>,
    },
    /// Solve the long-time limit system.
    Fixedpoint,
    /// Integrate the three-variable ODE reduction.
    Ode {
        #[arg(long)]
        k2: Option<f64>,
    },
    /// Constant-coefficient IDE run with a small phenotype tilt.
    Periodic {
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// A-priori bounds and the non-extinction check.
    Bounds,
    /// Classify an existing timeseries.csv.
    Classify {
        #[arg(long)]
        timeseries: PathBuf,
    },
}

fn load(args: &Args, name: &str, default_preset: &str) -> Result<ScenarioConfig> {
    let base = preset(args.preset.as_deref().unwrap_or(default_preset))?;
    let mut cfg = match &args.config {
        Some(path) => load_config_with_base(path, &base)?,
        None => base,
    };
    let mut o = Overrides {
        grid: args.grid,
        dt: args.dt,
        t_end: args.t_end,
        jobs: args.jobs,
        ..Overrides::default()
    };
    match &args.command {
        Command::Simulate { ici, tumour_alone } => {
            o.ici = *ici;
            o.tumour_alone = *tumour_alone;
        }
        Command::Sweep { axes } => {
            o.axes = axes
                .iter()
                .map(|a| cli::parse_axis(a))
                .collect::<Result<_>>()?;
        }
        Command::Ode { k2 } => o.k2 = *k2,
        _ => {}
    }
    cli::apply_overrides(&mut cfg, &o, name)?;
    Ok(cfg)
}

fn execute(args: &Args) -> Result<u8> {
    if args.preset.as_deref() == Some("list") {
        for name in phenoimmune::config::PRESETS {
            println!("{name}");
        }
        return Ok(0);
    }
    let default_out = PathBuf::from("out");
    let out_for = |cfg: &ScenarioConfig| -> PathBuf {
        args.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| default_out.clone())
    };
    let done = |out: &Path| println!("wrote {}", out.display());
    match &args.command {
        Command::Simulate { .. } => {
            let cfg = load(args, "simulate", "baseline")?;
            let out = out_for(&cfg);
            let r = cli::cmd_simulate(&cfg, &out)?;
            println!(
                "outcome {} rho(T) = {:.6} rho* = {:.6} ratio = {:.4}",
                r.outcome.label, r.outcome.rho_final, r.rho_star, r.outcome.rho_ratio
            );
            if let Some(c) = &r.concentration {
                println!("peak at x = {:.4}", c.peak_location);
            }
            done(&out);
            Ok(0)
        }
        Command::Sweep { .. } => {
            let cfg = load(args, "sweep", "heatmap")?;
            let out = out_for(&cfg);
            let r = cli::cmd_sweep(&cfg, &out)?;
            println!("{} cells, {} failed", r.cells.len(), r.failures);
            done(&out);
            Ok(if r.failures > 0 { 4 } else { 0 })
        }
        Command::Fixedpoint => {
            let cfg = load(args, "fixedpoint", "baseline")?;
            let out = out_for(&cfg);
            let r = cli::cmd_fixedpoint(&cfg, &out)?;
            if let Some(b) = r.adaptive.best() {
                println!(
                    "rho_inf = {:.8} x_inf = {:.4} phi_inf = {:.8}",
                    b.rho_inf, b.x_inf, b.phi_inf
                );
            }
            done(&out);
            if r.converged() {
                Ok(0)
            } else {
                eprintln!("fixed-point iteration did not converge");
                Ok(3)
            }
        }
        Command::Ode { .. } => {
            let cfg = load(args, "ode", "ode-stable")?;
            let out = out_for(&cfg);
            let r = cli::cmd_ode(&cfg, &out)?;
            let s = r.final_state;
            println!(
                "final (rho, sigma, gamma) = ({:.5}, {:.5}, {:.5}) oscillatory = {}",
                s.rho, s.sigma, s.gamma, r.rho_cycle.oscillatory
            );
            done(&out);
            Ok(0)
        }
        Command::Periodic { delta } => {
            let cfg = load(args, "periodic", "periodic-ide")?;
            let out = out_for(&cfg);
            let r = cli::cmd_periodic(&cfg, *delta, &out)?;
            println!(
                "delta = {} oscillatory = {} rho in [{:.4}, {:.4}]",
                r.delta,
                r.oscillatory(),
                r.rho_min,
                r.rho_max
            );
            done(&out);
            Ok(0)
        }
        Command::Bounds => {
            let cfg = load(args, "bounds", "baseline")?;
            let out = out_for(&cfg);
            let r = cli::cmd_bounds(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(0)
        }
        Command::Classify { timeseries } => {
            let cfg = load(args, "classify", "baseline")?;
            let out = out_for(&cfg);
            let o = cli::cmd_classify(&cfg, timeseries, &out)?;
            println!("{} (rho(T)/rho* = {:.4})", o.label, o.rho_ratio);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
