use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use primal_decomp_cli::{
    cmd_generate, cmd_montecarlo, cmd_run, cmd_validate, load_config, write_montecarlo_csv,
};

#[derive(Parser)]
#[command(
    name = "primal-decomp",
    about = "Distributed primal decomposition for constraint-coupled MILPs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance file (full-scale recipe by default).
    Generate {
        /// JSON run configuration; its `generator` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output instance path.
        #[arg(long, default_value = "instance.json")]
        out: PathBuf,
    },
    /// Parse an instance file and report invariant violations.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Restriction, feasibility precheck, distributed run, recovery, bounds.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Monte Carlo comparison of the tightening against the baseline.
    Montecarlo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Output CSV path.
        #[arg(long, default_value = "montecarlo.csv")]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = load_config(config.as_deref())?;
            cmd_generate(&cfg, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Validate { instance } => {
            let violations = cmd_validate(&instance)?;
            if violations.is_empty() {
                println!("{}: ok", instance.display());
            } else {
                for v in &violations {
                    println!("{v}");
                }
                std::process::exit(1);
            }
        }
        Command::Run { config, out_dir } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(dir) = out_dir {
                cfg.output_dir = dir;
            }
            let summary = cmd_run(&cfg)?;
            if !summary.restricted_lp_feasible {
                println!(
                    "restricted LP infeasible (violation {:.6}); no run performed",
                    summary.restricted_lp_violation.unwrap_or(f64::NAN)
                );
            } else {
                let run = summary.run.as_ref().expect("run stats present");
                let rec = summary.recovered.as_ref().expect("recovery present");
                println!("master cost (final round): {:.6}", run.master_cost_final);
                println!(
                    "feasibility first recorded at round: {}",
                    run.feasibility_first_round
                        .map(|t| t.to_string())
                        .unwrap_or_else(|| "never".into())
                );
                println!(
                    "recovered cost: {:.6} (feasible for b: {})",
                    rec.cost, rec.feasible_for_b
                );
                if let Some(b) = &summary.bounds {
                    println!(
                        "bounds: B = {:?}, B' = {:?}, B^t = {:?}",
                        b.apriori, b.aposteriori, b.finite_time
                    );
                }
            }
            println!("outputs in {}", cfg.output_dir.display());
        }
        Command::Montecarlo {
            config,
            trials,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let result = cmd_montecarlo(&cfg, trials)?;
            let file = std::fs::File::create(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            write_montecarlo_csv(&result, file)?;
            let a = &result.aggregate;
            println!("trials: {}", a.trials);
            println!(
                "solvable: tightened {} / baseline {}",
                a.solvable_inf, a.solvable_dd
            );
            println!(
                "mean restriction ratio: tightened {:.4} / baseline {:.4}",
                a.mean_ratio_inf, a.mean_ratio_dd
            );
            println!(
                "mean suboptimality (own solvable set): tightened {:?} / baseline {:?}",
                a.mean_subopt_inf, a.mean_subopt_dd
            );
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
