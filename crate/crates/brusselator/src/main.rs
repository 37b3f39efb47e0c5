use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sunbeam::nvector::Backend;
use sunbeam_brusselator::{
    bench_vectors, run, run_batch, BatchConfig, BenchConfig, PolicyKind, ProblemConfig, SolverKind,
};

/// 1D advection-reaction brusselator with IMEX time stepping.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Total mesh points.
    #[arg(long, default_value_t = 256)]
    nx: usize,
    /// Simulated ranks; must divide nx.
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    /// Domain length.
    #[arg(long, default_value_t = 1.0)]
    domain: f64,
    #[arg(long, default_value_t = 1.0)]
    tf: f64,
    #[arg(long, default_value_t = 1e-6)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-9)]
    atol: f64,
    /// task-local or global.
    #[arg(long, default_value = "task-local")]
    solver: SolverKind,
    /// serial, pooled or devsim.
    #[arg(long, default_value = "serial")]
    backend: Backend,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// thread-direct or grid-stride.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Run the grouped-cell reaction demo with G cells per system.
    #[arg(long, value_name = "G")]
    batch: Option<usize>,
    /// Concurrent integrator instances in batch mode.
    #[arg(long, value_name = "K", default_value_t = 1)]
    instances: usize,
    /// Run the vector benchmark instead of the simulation.
    #[arg(long)]
    bench: bool,
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    dump_solution: Option<PathBuf>,
}

fn emit(csv: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match csv {
        Some(p) => std::fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    if cli.bench {
        let cfg = BenchConfig {
            workers: cli.workers.max(1),
            ..Default::default()
        };
        let report = bench_vectors(&cfg)?;
        emit(&cli.csv, &report.to_csv())?;
        eprint!("{}", report.crossover_csv());
        return Ok(());
    }

    let cfg = ProblemConfig {
        nx: cli.nx,
        ranks: cli.ranks,
        domain: cli.domain,
        tf: cli.tf,
        rtol: cli.rtol,
        atol: cli.atol,
        solver: cli.solver,
        backend: cli.backend,
        workers: cli.workers,
        policy: cli.policy,
        ..Default::default()
    };

    if let Some(group) = cli.batch {
        let report = run_batch(&BatchConfig {
            problem: cfg,
            group,
            instances: cli.instances,
        })?;
        let mut out = String::from("cell,u,v,w\n");
        for (i, c) in report.cells.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", c[0], c[1], c[2]));
        }
        emit(&cli.csv, &out)?;
        let steps: usize = report.group_stats.iter().map(|s| s.steps).sum();
        eprintln!(
            "{} groups of up to {} cells on {} instances, {} steps in total, {:.3} s",
            report.group_stats.len(),
            group,
            cli.instances,
            steps,
            report.timing.total.as_secs_f64()
        );
        return Ok(());
    }

    let report = run(&cfg)?;
    emit(&cli.csv, &report.to_csv())?;
    if let Some(p) = &cli.dump_solution {
        report.write_solution(&cfg, p)?;
    }
    eprintln!(
        "{} solver, {} backend, {} ranks: {} steps ({} attempts), {:.3} s",
        report.solver,
        report.backend,
        report.ranks,
        report.stats.steps,
        report.stats.attempts,
        report.timing.total.as_secs_f64()
    );
    Ok(())
}
