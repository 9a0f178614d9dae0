use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holder_lab::budget::budget;
use holder_lab::config::ExperimentConfig;
use holder_lab::domain::GridFn;
use holder_lab::error::{LabError, Result};
use holder_lab::holder::{fit_exponent, modulus_with, verify_lemma21, ModulusOptions};
use holder_lab::kernel::Kernel;
use holder_lab::mollify::subharmonic_gap;
use holder_lab::pipeline::{
    ball_barrier, is_usage_error, lemma_kernel, run_pipeline, solve_instance, write_gap_csv,
    write_modulus_csv,
};

#[derive(Parser)]
#[command(
    name = "holder-lab",
    version,
    about = "Hoelder regularity experiments for complex Monge-Ampere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// INI experiment file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct Input {
    /// Grid function CSV written by `solve`; the config instance is solved
    /// when absent.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured instance and write solution.csv.
    Solve(Common),
    /// Ball-average gap table for the configured kernel and eps ladder.
    Mollify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Modulus of continuity and its power-law fit.
    EstimateExponent {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Dyadic-iteration certificate with the plateau-bump kernel.
    VerifyLemma21 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Exponent budget for the configured alpha, p, n and gammas.
    Budget(Common),
    /// Barrier certificate at a boundary point of the unit ball.
    Barrier(Common),
    /// Full run with report bundle.
    Pipeline(Common),
}

enum Outcome {
    Pass,
    Fail,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    fs::create_dir_all(&cfg.out).map_err(|e| LabError::io(&cfg.out, e))?;
    Ok(cfg)
}

fn grid_input(cfg: &ExperimentConfig, input: &Input) -> Result<GridFn> {
    match &input.input {
        Some(p) => GridFn::read_csv(p),
        None => Ok(solve_instance(cfg)?.u),
    }
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(&path, text).map_err(|e| LabError::io(&path, e))
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Solve(common) => {
            let cfg = load(&common)?;
            let s = solve_instance(&cfg)?;
            s.u.write_csv(&cfg.out.join("solution.csv"))?;
            write_json(&cfg.out, "solve.json", &s.summary)?;
            println!("{}", serde_json::to_string_pretty(&s.summary)?);
            Ok(Outcome::Pass)
        }
        Command::Mollify { common, input } => {
            let cfg = load(&common)?;
            let u = grid_input(&cfg, &input)?;
            let kernel = Kernel::from_spec(&cfg.kernel, u.grid().dim())?;
            let table = subharmonic_gap(&u, &kernel, &cfg.eps)?;
            write_gap_csv(&table, &cfg.out.join("gap_table.csv"))?;
            write_json(&cfg.out, "gaps.json", &table)?;
            for r in &table.rows {
                println!(
                    "eps {:<10} sup {:.6e}  l1 {:.6e}",
                    r.eps, r.sup_gap, r.l1_gap
                );
            }
            if let (Some(s), Some(l)) = (table.sup_fit, table.l1_fit) {
                println!("slopes: sup {:.4}  l1 {:.4}", s.slope, l.slope);
            }
            Ok(Outcome::Pass)
        }
        Command::EstimateExponent { common, input } => {
            let cfg = load(&common)?;
            let u = grid_input(&cfg, &input)?;
            let opts = ModulusOptions {
                seed: cfg.seed,
                offsets_per_shell: cfg.modulus.offsets_per_shell,
                ..Default::default()
            };
            let curve = modulus_with(&u, cfg.modulus.eps0, cfg.modulus.depth, opts)?;
            write_modulus_csv(&curve, &cfg.out.join("modulus.csv"))?;
            let fit = fit_exponent(&curve, 0..curve.radii.len())?;
            write_json(&cfg.out, "exponent.json", &fit)?;
            println!("alpha_hat {:.4}  c_hat {:.4}", fit.alpha_hat, fit.c_hat);
            Ok(Outcome::Pass)
        }
        Command::VerifyLemma21 { common, input } => {
            let cfg = load(&common)?;
            let u = grid_input(&cfg, &input)?;
            let kernel = lemma_kernel(&cfg)?;
            let cert = verify_lemma21(&u, &kernel, cfg.lemma.alpha, cfg.lemma.eps0)?;
            write_json(&cfg.out, "lemma21.json", &cert)?;
            println!(
                "C1 {:.4}  C2 {:.4}  kappa {:.4}  C {:.4}  verdict {}",
                cert.c1, cert.c2, cert.kappa, cert.c, cert.verdict
            );
            Ok(if cert.verdict {
                Outcome::Pass
            } else {
                Outcome::Fail
            })
        }
        Command::Budget(common) => {
            let cfg = load(&common)?;
            let (g, gp, gpp) = cfg.budget.resolved(cfg.instance.n);
            let b = budget(cfg.budget.alpha, cfg.budget.p, cfg.instance.n, g, gp, gpp)?;
            write_json(&cfg.out, "budget.json", &b)?;
            print!("{}", b.table());
            Ok(Outcome::Pass)
        }
        Command::Barrier(common) => {
            let cfg = load(&common)?;
            let cert = ball_barrier(cfg.instance.n, cfg.seed)?;
            write_json(&cfg.out, "barrier.json", &cert)?;
            println!(
                "eps_bar {:.4}  C {}  r0 {}  margin {:.4}",
                cert.eps_bar, cert.c_bar, cert.r0, cert.margin
            );
            Ok(if cert.margin > 0.0 {
                Outcome::Pass
            } else {
                Outcome::Fail
            })
        }
        Command::Pipeline(common) => {
            let cfg = load(&common)?;
            let bundle = run_pipeline(&cfg);
            bundle.write(&cfg.out)?;
            print!("{}", bundle.summary());
            if let Some(f) = &bundle.failure {
                if f.usage {
                    return Err(LabError::Config(format!("stage {}: {}", f.stage, f.error)));
                }
            }
            Ok(if bundle.passed() {
                Outcome::Pass
            } else {
                Outcome::Fail
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
