mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Kind, Overrides};
use output::{Manifest, Output};

/// Experiments on catalytic branching random walks.
#[derive(Parser)]
#[command(name = "cbrw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrated constants and their structural checks.
    Params(Common),
    /// Speed of the rightmost particle and the fundamental martingale.
    Lln(Common),
    /// Tail of the centred maximum against the limit law.
    Fluctuation(Common),
    /// Many-to-one, many-to-two and spine checks.
    Verify(Common),
    /// Malthusian rate, Perron data and speed for a catalyst set.
    Multicat(Common),
    /// Exact first moments and occupation asymptotics.
    Expectation(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Base seed; overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `run.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(kind: Kind, args: &Common) -> Result<bool> {
    let started = Instant::now();
    let ov = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        threads: args.threads,
    };
    let ctx = config::load(&args.config, kind, &ov)?;
    let out = Output::create(&ctx.out)?;
    let mut man = Manifest::default();
    man.info("tool", concat!("cbrw ", env!("CARGO_PKG_VERSION")));
    man.info("command", kind.name());
    man.info("config", args.config.display());
    man.info("config_sha256", &ctx.hash);
    man.info("seed", ctx.seed);
    man.info("threads", ctx.threads);
    man.info("replicas", ctx.cfg.run.replicas);
    man.info("n_max", ctx.cfg.run.n_max);
    man.info("population_cap", ctx.caps.population);

    let rows = commands::run(&ctx, &out, &mut man)?;
    out.verify(&rows)?;
    let passed = rows.iter().filter(|r| r.pass).count();
    for r in &rows {
        if !r.pass {
            println!(
                "FAIL {} (n={}): lhs={} rhs={} diff={} tolerance={}",
                r.name, r.n, r.lhs, r.rhs, r.diff, r.tolerance
            );
        }
    }
    man.info("checks_passed", format!("{passed}/{}", rows.len()));
    man.info(
        "wall_time_s",
        format!("{:.3}", started.elapsed().as_secs_f64()),
    );
    out.text("manifest.txt", &man.render())?;
    print!("{}", man.render());
    println!(
        "{passed}/{} checks passed; output in {}",
        rows.len(),
        ctx.out.display()
    );
    Ok(passed == rows.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Params(a) => (Kind::Params, a),
        Command::Lln(a) => (Kind::Lln, a),
        Command::Fluctuation(a) => (Kind::Fluctuation, a),
        Command::Verify(a) => (Kind::Verify, a),
        Command::Multicat(a) => (Kind::Multicat, a),
        Command::Expectation(a) => (Kind::Expectation, a),
    };
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
