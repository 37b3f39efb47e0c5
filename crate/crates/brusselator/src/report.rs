use std::fmt::Write as _;
use std::path::Path;

use sunbeam::integrator::{RunStats, StepRecord};
use sunbeam::memory::{MemorySpace, TransferStats};

use crate::config::ProblemConfig;
use crate::timing::{Breakdown, Category};

/// Outcome of one full run. Per-rank quantities are taken from rank 0.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub solver: String,
    pub backend: String,
    pub ranks: usize,
    pub nx: usize,
    pub stats: RunStats,
    pub timing: Breakdown,
    pub transfers: TransferStats,
    /// Node-local reductions issued on rank 0.
    pub reductions: u64,
    /// Rank-local norms on rank 0 that were not combined across ranks.
    pub local_norms: u64,
    /// Success votes of the task-local solver on rank 0.
    pub flag_reductions: u64,
    /// Collectives performed by the communicator.
    pub allreduces: u64,
    pub messages: u64,
    pub halo_exchanges: u64,
    pub history: Vec<StepRecord>,
    /// Interleaved `(u, v, w)` over the global mesh.
    pub solution: Vec<f64>,
}

impl RunReport {
    pub const CSV_HEADER_PREFIX: &'static str = "category,seconds,solver,backend,ranks,nx";

    pub fn csv_header() -> String {
        format!(
            "{},{},htod_copies,dtoh_copies,scalar_transfers,reductions,allreduces,messages,checksum",
            Self::CSV_HEADER_PREFIX,
            RunStats::CSV_HEADER
        )
    }

    /// FNV-1a over the bit patterns of the solution.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.solution {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    pub fn htod_copies(&self) -> u64 {
        self.transfers.array_copies(MemorySpace::Host, MemorySpace::Device)
    }

    pub fn dtoh_copies(&self) -> u64 {
        self.transfers.array_copies(MemorySpace::Device, MemorySpace::Host)
    }

    /// One row per timing category plus a `total` row, each carrying the
    /// run's statistics.
    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        let tail = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:016x}",
            self.solver,
            self.backend,
            self.ranks,
            self.nx,
            self.stats.csv_row(),
            self.htod_copies(),
            self.dtoh_copies(),
            self.transfers.scalar_transfer_count,
            self.reductions,
            self.allreduces,
            self.messages,
            self.checksum()
        );
        let rows = Category::ALL
            .iter()
            .map(|c| (c.name(), self.timing.get(*c)))
            .chain([("total", self.timing.total)]);
        for (name, d) in rows {
            let _ = writeln!(out, "{name},{:.6e},{tail}", d.as_secs_f64());
        }
        out
    }

    /// `x,u,v,w` rows, one per mesh point.
    pub fn solution_dump(&self, cfg: &ProblemConfig) -> String {
        let mut out = String::from("x,u,v,w\n");
        for (i, c) in self.solution.chunks_exact(3).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", cfg.x(i), c[0], c[1], c[2]);
        }
        out
    }

    pub fn write_solution(&self, cfg: &ProblemConfig, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.solution_dump(cfg))
    }

    /// Step sizes of the accepted steps, when history was recorded.
    pub fn accepted_steps(&self) -> Vec<f64> {
        self.history.iter().filter(|r| r.accepted).map(|r| r.h).collect()
    }
}
