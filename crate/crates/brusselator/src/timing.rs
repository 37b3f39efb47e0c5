//! Exclusive wall-clock categories attributed at callback boundaries.

use std::cell::Cell;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Upwind stencil plus the halo exchange feeding it.
    Advection,
    Reaction,
    /// Jacobian evaluation, factorization or preconditioner setup, and solves.
    LinearSolve,
    Other,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Advection,
        Category::Reaction,
        Category::LinearSolve,
        Category::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Advection => "advection",
            Category::Reaction => "reaction",
            Category::LinearSolve => "linear_solve",
            Category::Other => "other",
        }
    }
}

/// Per-thread accumulators. Shared between the right-hand side and the
/// nonlinear solver of one integrator through `Rc`.
#[derive(Debug, Default)]
pub struct Timers {
    advection: Cell<Duration>,
    reaction: Cell<Duration>,
    linear: Cell<Duration>,
}

impl Timers {
    pub fn time<T>(&self, c: Category, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let cell = match c {
            Category::Advection => &self.advection,
            Category::Reaction => &self.reaction,
            Category::LinearSolve => &self.linear,
            Category::Other => return out,
        };
        cell.set(cell.get() + start.elapsed());
        out
    }

    /// Category totals, with `Other` taken as the remainder of `total`.
    pub fn breakdown(&self, total: Duration) -> Breakdown {
        let (a, r, l) = (self.advection.get(), self.reaction.get(), self.linear.get());
        Breakdown {
            advection: a,
            reaction: r,
            linear_solve: l,
            other: total.saturating_sub(a + r + l),
            total,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Breakdown {
    pub advection: Duration,
    pub reaction: Duration,
    pub linear_solve: Duration,
    pub other: Duration,
    pub total: Duration,
}

impl Breakdown {
    pub fn get(&self, c: Category) -> Duration {
        match c {
            Category::Advection => self.advection,
            Category::Reaction => self.reaction,
            Category::LinearSolve => self.linear_solve,
            Category::Other => self.other,
        }
    }

    pub fn categorized(&self) -> Duration {
        self.advection + self.reaction + self.linear_solve + self.other
    }
}
