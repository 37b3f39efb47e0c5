use super::comm::{CommHandle, ReduceOp};
use super::many::ManyVector;
use crate::nvector::{BinaryOp, LocalVector, UnaryOp, VResult, Vector};

/// A rank-local vector plus the communicator that joins it to its peers.
/// Streaming ops touch only the local part; every reduction computes a local
/// contribution and combines it with one allreduce.
#[derive(Debug)]
pub struct DistVector<V> {
    inner: ManyVector<V>,
    comm: CommHandle,
    global_len: usize,
}

/// Collective: every rank must call this with its own local vector.
pub fn make_dist<V: LocalVector>(comm: CommHandle, local: V) -> VResult<DistVector<V>> {
    DistVector::new(comm, local)
}

impl<V: LocalVector> DistVector<V> {
    pub fn new(comm: CommHandle, local: V) -> VResult<Self> {
        let n = comm.allreduce(local.len() as f64, ReduceOp::Sum)? as usize;
        Ok(DistVector {
            inner: ManyVector::new(vec![local]),
            comm,
            global_len: n,
        })
    }

    pub fn local(&self) -> &V {
        self.inner.part(0)
    }

    pub fn local_mut(&mut self) -> &mut V {
        self.inner.part_mut(0)
    }

    pub fn into_local(self) -> V {
        self.inner.into_parts().pop().expect("one local part")
    }

    pub fn comm(&self) -> &CommHandle {
        &self.comm
    }

    pub fn rank(&self) -> usize {
        self.comm.rank()
    }

    pub fn local_len(&self) -> usize {
        self.local().len()
    }

    pub fn global_len(&self) -> usize {
        self.global_len
    }

    fn reduce(&self, local: f64, op: ReduceOp) -> VResult<f64> {
        Ok(self.comm.allreduce(local, op)?)
    }
}

impl<V: LocalVector> Vector for DistVector<V> {
    /// Global length across all ranks.
    fn len(&self) -> usize {
        self.global_len
    }

    fn duplicate(&self) -> Self {
        DistVector {
            inner: self.inner.duplicate(),
            comm: self.comm.clone(),
            global_len: self.global_len,
        }
    }

    fn const_fill(&mut self, c: f64) -> VResult<()> {
        self.inner.const_fill(c)
    }

    fn copy_from(&mut self, x: &Self) -> VResult<()> {
        self.inner.copy_from(&x.inner)
    }

    fn linear_sum(&mut self, a: f64, x: &Self, b: f64, y: &Self) -> VResult<()> {
        self.inner.linear_sum(a, &x.inner, b, &y.inner)
    }

    fn scale_add(&mut self, a: f64, b: f64, y: &Self) -> VResult<()> {
        self.inner.scale_add(a, b, &y.inner)
    }

    fn unary(&mut self, op: UnaryOp, x: &Self) -> VResult<()> {
        self.inner.unary(op, &x.inner)
    }

    fn binary(&mut self, op: BinaryOp, x: &Self, y: &Self) -> VResult<()> {
        self.inner.binary(op, &x.inner, &y.inner)
    }

    fn dot(&self, y: &Self) -> VResult<f64> {
        let local = self.inner.dot(&y.inner)?;
        self.reduce(local, ReduceOp::Sum)
    }

    fn max_norm(&self) -> VResult<f64> {
        let local = self.inner.max_norm()?;
        self.reduce(local, ReduceOp::Max)
    }

    fn min_val(&self) -> VResult<f64> {
        let local = self.inner.min_val()?;
        self.reduce(local, ReduceOp::Min)
    }

    fn l1_norm(&self) -> VResult<f64> {
        let local = self.inner.l1_norm()?;
        self.reduce(local, ReduceOp::Sum)
    }

    fn weighted_sq_sum(&self, w: &Self, mask: Option<&Self>) -> VResult<f64> {
        let local = self.inner.weighted_sq_sum(&w.inner, mask.map(|m| &m.inner))?;
        self.reduce(local, ReduceOp::Sum)
    }

    fn min_quotient(&self, den: &Self) -> VResult<f64> {
        let local = self.inner.min_quotient(&den.inner)?;
        self.reduce(local, ReduceOp::Min)
    }

    fn inv_test(&mut self, x: &Self) -> VResult<bool> {
        let local = self.inner.inv_test(&x.inner)?;
        Ok(self.comm.allreduce_and(local)?)
    }

    fn constr_mask(&mut self, c: &Self, x: &Self) -> VResult<bool> {
        let local = self.inner.constr_mask(&c.inner, &x.inner)?;
        Ok(self.comm.allreduce_and(local)?)
    }

    fn unary_in_place(&mut self, op: UnaryOp) -> VResult<()> {
        self.inner.unary_in_place(op)
    }
}
