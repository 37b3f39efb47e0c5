//! The state vector seen by the problem code: cell-local data plus the two
//! pieces of communication the model needs.

use sunbeam::distvec::{CommError, DistVector, Halo};
use sunbeam::nvector::{LocalVector, NodeVector, VResult, Vector};

pub trait Field: Vector {
    /// This rank's interleaved `(u, v, w)` values, in kernel-side memory.
    fn cells(&self) -> VResult<&[f64]>;
    fn cells_mut(&mut self) -> VResult<&mut [f64]>;

    /// Sends this rank's boundary cells to its neighbours; a single rank
    /// wraps onto itself.
    fn exchange(&self, to_right: &[f64], to_left: &[f64]) -> Result<Halo, CommError>;

    /// Logical AND of `flag` over all ranks.
    fn all_ranks(&self, flag: bool) -> Result<bool, CommError>;

    /// WRMS norm over this rank's entries only.
    fn local_wrms(&self, w: &Self) -> VResult<f64>;

    fn node(&self) -> &NodeVector;
    fn node_mut(&mut self) -> &mut NodeVector;
}

impl Field for NodeVector {
    fn cells(&self) -> VResult<&[f64]> {
        self.data()
    }
    fn cells_mut(&mut self) -> VResult<&mut [f64]> {
        self.data_mut()
    }
    fn exchange(&self, to_right: &[f64], to_left: &[f64]) -> Result<Halo, CommError> {
        Ok(Halo {
            from_left: to_right.to_vec(),
            from_right: to_left.to_vec(),
        })
    }
    fn all_ranks(&self, flag: bool) -> Result<bool, CommError> {
        Ok(flag)
    }
    fn local_wrms(&self, w: &Self) -> VResult<f64> {
        self.wrms_norm(w)
    }
    fn node(&self) -> &NodeVector {
        self
    }
    fn node_mut(&mut self) -> &mut NodeVector {
        self
    }
}

impl Field for DistVector<NodeVector> {
    fn cells(&self) -> VResult<&[f64]> {
        self.local().data()
    }
    fn cells_mut(&mut self) -> VResult<&mut [f64]> {
        self.local_mut().data_mut()
    }
    fn exchange(&self, to_right: &[f64], to_left: &[f64]) -> Result<Halo, CommError> {
        self.comm().halo_exchange(to_right, to_left)
    }
    fn all_ranks(&self, flag: bool) -> Result<bool, CommError> {
        self.comm().allreduce_and(flag)
    }
    fn local_wrms(&self, w: &Self) -> VResult<f64> {
        self.local().wrms_norm(w.local())
    }
    fn node(&self) -> &NodeVector {
        self.local()
    }
    fn node_mut(&mut self) -> &mut NodeVector {
        self.local_mut()
    }
}
