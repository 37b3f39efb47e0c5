use std::cell::Cell;
use std::rc::Rc;

use sunbeam::integrator::{Parts, Rhs};
use sunbeam::solvers::{CallbackError, CbResult};

use crate::config::ProblemConfig;
use crate::field::Field;
use crate::physics::{reaction, Reaction};
use crate::timing::{Category, Timers};

/// Explicit upwind advection and implicit pointwise reactions.
pub struct BrusselatorRhs {
    pub speed: f64,
    pub dx: f64,
    pub reaction: Reaction,
    pub parts: Parts,
    pub timers: Rc<Timers>,
    exchanges: Cell<usize>,
}

impl BrusselatorRhs {
    pub fn new(cfg: &ProblemConfig, timers: Rc<Timers>) -> Self {
        let parts = match (cfg.advection, cfg.reactions) {
            (true, false) => Parts::ExplicitOnly,
            (false, true) => Parts::ImplicitOnly,
            _ => Parts::Both,
        };
        BrusselatorRhs {
            speed: cfg.speed,
            dx: cfg.dx(),
            reaction: cfg.reaction,
            parts,
            timers,
            exchanges: Cell::new(0),
        }
    }

    /// Halo exchanges performed so far.
    pub fn exchanges(&self) -> usize {
        self.exchanges.get()
    }

    /// `f_q = −c (q_i − q_{i−1}) / Δx` for each species.
    pub fn advection<V: Field>(&self, y: &V, f: &mut V) -> CbResult<()> {
        let q = y.cells()?;
        let n = q.len();
        let halo = y
            .exchange(&q[n - 3..], &[])
            .map_err(|e| CallbackError::fatal(e.to_string()))?;
        self.exchanges.set(self.exchanges.get() + 1);
        let left = &halo.from_left;
        let k = self.speed / self.dx;
        let out = f.cells_mut()?;
        for s in 0..3 {
            out[s] = -k * (q[s] - left[s]);
        }
        for i in 3..n {
            out[i] = -k * (q[i] - q[i - 3]);
        }
        Ok(())
    }

    pub fn reactions<V: Field>(&self, y: &V, f: &mut V) -> CbResult<()> {
        let q = y.cells()?;
        let out = f.cells_mut()?;
        for (o, c) in out.chunks_exact_mut(3).zip(q.chunks_exact(3)) {
            o.copy_from_slice(&reaction(&self.reaction, [c[0], c[1], c[2]]));
        }
        Ok(())
    }
}

impl<V: Field> Rhs<V> for BrusselatorRhs {
    fn explicit(&mut self, _t: f64, y: &V, f: &mut V) -> CbResult<()> {
        let timers = Rc::clone(&self.timers);
        timers.time(Category::Advection, || self.advection(y, f))
    }

    fn implicit(&mut self, _t: f64, y: &V, f: &mut V) -> CbResult<()> {
        let timers = Rc::clone(&self.timers);
        timers.time(Category::Reaction, || self.reactions(y, f))
    }

    fn parts(&self) -> Parts {
        self.parts
    }
}
