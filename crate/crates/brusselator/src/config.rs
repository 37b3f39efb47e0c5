use std::fmt;
use std::str::FromStr;

use sunbeam::nvector::{Backend, ExecPolicy};

use crate::physics::{Bump, Reaction};
use crate::BrusselatorError;

/// Which nonlinear solver handles the implicit reaction stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Per-rank Newton on every cell at once with direct 3×3 solves.
    TaskLocal,
    /// Library Newton over the whole system with block-preconditioned GMRES.
    Global,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::TaskLocal => "task-local",
            SolverKind::Global => "global",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "task-local" | "task_local" => Ok(SolverKind::TaskLocal),
            "global" => Ok(SolverKind::Global),
            _ => Err(format!("unknown solver '{s}' (expected task-local or global)")),
        }
    }
}

/// Worker mapping for the parallel backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    ThreadDirect,
    GridStride,
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "thread-direct" => Ok(PolicyKind::ThreadDirect),
            "grid-stride" => Ok(PolicyKind::GridStride),
            _ => Err(format!("unknown policy '{s}' (expected thread-direct or grid-stride)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub nx: usize,
    pub ranks: usize,
    /// Domain length `b`.
    pub domain: f64,
    /// Advection speed. Must be positive: the stencil is upwind for `c > 0`.
    pub speed: f64,
    pub reaction: Reaction,
    pub alpha: f64,
    pub tf: f64,
    pub rtol: f64,
    pub atol: f64,
    pub solver: SolverKind,
    pub backend: Backend,
    pub workers: usize,
    pub policy: Option<PolicyKind>,
    pub advection: bool,
    pub reactions: bool,
    pub record_history: bool,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            nx: 256,
            ranks: 1,
            domain: 1.0,
            speed: 0.01,
            reaction: Reaction::default(),
            alpha: 0.1,
            tf: 1.0,
            rtol: 1e-6,
            atol: 1e-9,
            solver: SolverKind::TaskLocal,
            backend: Backend::Serial,
            workers: 1,
            policy: None,
            advection: true,
            reactions: true,
            record_history: false,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<(), BrusselatorError> {
        let bad = |m: String| Err(BrusselatorError::Config(m));
        if self.ranks == 0 || self.nx == 0 {
            return bad("nx and ranks must be positive".into());
        }
        if self.nx % self.ranks != 0 {
            return bad(format!("nx = {} is not divisible by {} ranks", self.nx, self.ranks));
        }
        if !(self.domain > 0.0) {
            return bad("domain length must be positive".into());
        }
        if !(self.speed > 0.0) {
            return bad("advection speed must be positive (upwind stencil assumes c > 0)".into());
        }
        if !(self.tf >= 0.0) {
            return bad("final time must be nonnegative".into());
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        Ok(())
    }

    pub fn local_cells(&self) -> usize {
        self.nx / self.ranks
    }

    pub fn dx(&self) -> f64 {
        self.domain / self.nx as f64
    }

    pub fn bump(&self) -> Bump {
        Bump::centered(self.alpha, self.domain)
    }

    /// Cell-center coordinate of global cell `i`.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Interleaved `(u, v, w)` initial values of one rank's cells.
    pub fn initial_values(&self, rank: usize) -> Vec<f64> {
        let nl = self.local_cells();
        let bump = self.bump();
        (rank * nl..(rank + 1) * nl)
            .flat_map(|i| crate::physics::initial_state(&self.reaction, &bump, self.x(i)))
            .collect()
    }

    /// Streaming and reduction policies, if an override was requested.
    pub(crate) fn exec_policies(&self) -> Option<(ExecPolicy, ExecPolicy)> {
        let workers = self.workers;
        let streaming = match self.policy? {
            PolicyKind::ThreadDirect => ExecPolicy::ThreadDirect { workers },
            PolicyKind::GridStride => ExecPolicy::GridStride { workers },
        };
        Some((streaming, ExecPolicy::BlockReduce { block_size: 256 }))
    }
}
