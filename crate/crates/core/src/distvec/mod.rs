//! Composite vectors: an ordered collection of subvectors, and a distributed
//! vector that pairs a rank-local vector with an in-process communicator.

mod comm;
mod dist;
mod many;

pub use comm::{run_ranks, CommCounters, CommError, CommHandle, Communicator, Halo, ReduceOp};
pub use dist::{make_dist, DistVector};
pub use many::{make_many, ManyVector};
