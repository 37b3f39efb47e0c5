//! Per-operation mean wall time across backends and vector lengths, with a
//! serial/parallel crossover report.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sunbeam::nvector::{Backend, ExecContext, NodeVector, VResult, Vector};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub lengths: Vec<usize>,
    pub backends: Vec<Backend>,
    pub reps: usize,
    pub workers: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            lengths: vec![1_000, 10_000, 100_000, 1_000_000],
            backends: Backend::ALL.to_vec(),
            reps: 50,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub op: &'static str,
    pub backend: Backend,
    pub length: usize,
    pub mean_seconds: f64,
}

/// Smallest length from which `backend` beats serial at every larger length.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossover {
    pub op: &'static str,
    pub backend: Backend,
    pub length: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub crossovers: Vec<Crossover>,
    pub cores: usize,
}

pub const CSV_HEADER: &str = "op,backend,length,mean_seconds";
pub const CROSSOVER_HEADER: &str = "op,backend,crossover_length";

type Op = fn(&mut NodeVector, &NodeVector, &NodeVector) -> VResult<f64>;

/// The timed operations: `z` is the output, `x` and `y` are random inputs.
pub const OPS: [(&str, Op); 8] = [
    ("linear_sum", |z, x, y| z.linear_sum(0.5, x, -1.5, y).map(|_| 0.0)),
    ("scale", |z, x, _| z.scale(2.0, x).map(|_| 0.0)),
    ("const_fill", |z, _, _| z.const_fill(1.0).map(|_| 0.0)),
    ("prod", |z, x, y| z.prod(x, y).map(|_| 0.0)),
    ("dot", |_, x, y| x.dot(y)),
    ("max_norm", |_, x, _| x.max_norm()),
    ("wrms_norm", |_, x, y| x.wrms_norm(y)),
    ("min_quotient", |_, x, y| x.min_quotient(y)),
];

pub fn bench_vectors(cfg: &BenchConfig) -> VResult<BenchReport> {
    let ctx = ExecContext::new(cfg.workers.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for &n in &cfg.lengths {
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        for &backend in &cfg.backends {
            let x = NodeVector::from_host(backend, &ctx, &xs);
            let y = NodeVector::from_host(backend, &ctx, &ys);
            let mut z = x.duplicate();
            for (name, op) in OPS {
                // One untimed warm-up call.
                let mut sink = op(&mut z, &x, &y)?;
                let start = Instant::now();
                for _ in 0..cfg.reps {
                    sink += op(&mut z, &x, &y)?;
                }
                let mean = start.elapsed().as_secs_f64() / cfg.reps.max(1) as f64;
                std::hint::black_box(sink);
                rows.push(BenchRow {
                    op: name,
                    backend,
                    length: n,
                    mean_seconds: mean,
                });
            }
        }
    }
    let crossovers = crossovers(&rows, cfg);
    Ok(BenchReport {
        rows,
        crossovers,
        cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
    })
}

fn crossovers(rows: &[BenchRow], cfg: &BenchConfig) -> Vec<Crossover> {
    let mean = |op: &str, b: Backend, n: usize| {
        rows.iter()
            .find(|r| r.op == op && r.backend == b && r.length == n)
            .map(|r| r.mean_seconds)
    };
    let mut lengths = cfg.lengths.clone();
    lengths.sort_unstable();
    let mut out = Vec::new();
    if !cfg.backends.contains(&Backend::Serial) {
        return out;
    }
    for (op, _) in OPS {
        for &b in cfg.backends.iter().filter(|&&b| b != Backend::Serial) {
            let wins: Vec<bool> = lengths
                .iter()
                .map(|&n| match (mean(op, b, n), mean(op, Backend::Serial, n)) {
                    (Some(p), Some(s)) => p < s,
                    _ => false,
                })
                .collect();
            let length = (0..lengths.len())
                .find(|&i| wins[i..].iter().all(|&w| w))
                .map(|i| lengths[i]);
            out.push(Crossover { op, backend: b, length });
        }
    }
    out
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.6e}", r.op, r.backend, r.length, r.mean_seconds);
        }
        out
    }

    pub fn crossover_csv(&self) -> String {
        let mut out = format!("{CROSSOVER_HEADER}\n");
        for c in &self.crossovers {
            let len = c.length.map_or("none".to_string(), |n| n.to_string());
            let _ = writeln!(out, "{},{},{}", c.op, c.backend, len);
        }
        out
    }

    pub fn detected(&self) -> usize {
        self.crossovers.iter().filter(|c| c.length.is_some()).count()
    }
}
