use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommError {
    #[error("rank {rank} timed out after {waited:?} waiting for a collective")]
    Timeout { rank: usize, waited: Duration },
    #[error("rank {rank} called {found:?} while the collective in flight is {expected:?}")]
    CollectiveMismatch {
        rank: usize,
        expected: ReduceOp,
        found: ReduceOp,
    },
    #[error("peer of rank {0} disconnected")]
    Disconnected(usize),
}

pub type CResult<T> = Result<T, CommError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Min,
    Max,
    LogicalAnd,
}

impl ReduceOp {
    fn fold(self, acc: f64, x: f64) -> f64 {
        match self {
            ReduceOp::Sum => acc + x,
            ReduceOp::Min => acc.min(x),
            ReduceOp::Max => acc.max(x),
            ReduceOp::LogicalAnd => {
                if acc != 0.0 && x != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Point-to-point and collective traffic seen by one communicator.
#[derive(Debug, Default)]
pub struct CommCounters {
    messages: AtomicU64,
    bytes: AtomicU64,
    allreduces: AtomicU64,
}

impl CommCounters {
    pub fn messages(&self) -> u64 {
        self.messages.load(Ordering::Relaxed)
    }
    pub fn bytes(&self) -> u64 {
        self.bytes.load(Ordering::Relaxed)
    }
    /// Completed collectives (counted once per collective, not per rank).
    pub fn allreduces(&self) -> u64 {
        self.allreduces.load(Ordering::Relaxed)
    }
    pub fn reset(&self) {
        self.messages.store(0, Ordering::Relaxed);
        self.bytes.store(0, Ordering::Relaxed);
        self.allreduces.store(0, Ordering::Relaxed);
    }
    fn add_message(&self, bytes: usize) {
        self.messages.fetch_add(1, Ordering::Relaxed);
        self.bytes.fetch_add(bytes as u64, Ordering::Relaxed);
    }
}

#[derive(Debug)]
struct Rendezvous {
    generation: u64,
    op: Option<ReduceOp>,
    values: Vec<Option<f64>>,
    arrived: usize,
    result: f64,
}

#[derive(Debug)]
struct Shared {
    size: usize,
    timeout: Duration,
    state: Mutex<Rendezvous>,
    ready: Condvar,
    counters: CommCounters,
    // rightward[r] delivers to rank r from its left neighbour; leftward[r]
    // from its right neighbour.
    rightward: Vec<Sender<Vec<f64>>>,
    leftward: Vec<Sender<Vec<f64>>>,
}

/// In-process communicator over `size` ranks on a periodic ring.
#[derive(Debug)]
pub struct Communicator {
    shared: Arc<Shared>,
    receivers: Vec<(Receiver<Vec<f64>>, Receiver<Vec<f64>>)>,
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

impl Communicator {
    pub fn new(size: usize) -> Self {
        Self::with_timeout(size, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(size: usize, timeout: Duration) -> Self {
        assert!(size >= 1, "communicator needs at least one rank");
        let mut rightward = Vec::with_capacity(size);
        let mut leftward = Vec::with_capacity(size);
        let mut receivers = Vec::with_capacity(size);
        for _ in 0..size {
            let (rt, rr) = unbounded();
            let (lt, lr) = unbounded();
            rightward.push(rt);
            leftward.push(lt);
            receivers.push((rr, lr));
        }
        let shared = Arc::new(Shared {
            size,
            timeout,
            state: Mutex::new(Rendezvous {
                generation: 0,
                op: None,
                values: vec![None; size],
                arrived: 0,
                result: 0.0,
            }),
            ready: Condvar::new(),
            counters: CommCounters::default(),
            rightward,
            leftward,
        });
        Communicator { shared, receivers }
    }

    pub fn size(&self) -> usize {
        self.shared.size
    }

    pub fn counters(&self) -> &CommCounters {
        &self.shared.counters
    }

    /// One handle per rank, in rank order.
    pub fn handles(&self) -> Vec<CommHandle> {
        self.receivers
            .iter()
            .enumerate()
            .map(|(rank, (from_left, from_right))| CommHandle {
                shared: Arc::clone(&self.shared),
                rank,
                from_left: from_left.clone(),
                from_right: from_right.clone(),
            })
            .collect()
    }

    pub fn handle(&self, rank: usize) -> CommHandle {
        let (from_left, from_right) = &self.receivers[rank];
        CommHandle {
            shared: Arc::clone(&self.shared),
            rank,
            from_left: from_left.clone(),
            from_right: from_right.clone(),
        }
    }
}

/// Values received by one rank in a halo exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Halo {
    pub from_left: Vec<f64>,
    pub from_right: Vec<f64>,
}

/// A rank's endpoint on a [`Communicator`].
#[derive(Debug, Clone)]
pub struct CommHandle {
    shared: Arc<Shared>,
    rank: usize,
    from_left: Receiver<Vec<f64>>,
    from_right: Receiver<Vec<f64>>,
}

impl CommHandle {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.shared.size
    }

    pub fn counters(&self) -> &CommCounters {
        &self.shared.counters
    }

    pub fn left(&self) -> usize {
        (self.rank + self.shared.size - 1) % self.shared.size
    }

    pub fn right(&self) -> usize {
        (self.rank + 1) % self.shared.size
    }

    /// Combines one value from every rank. The fold runs in ascending rank
    /// order, starting from rank 0's value, so all ranks see the same bits.
    pub fn allreduce(&self, value: f64, op: ReduceOp) -> CResult<f64> {
        let sh = &*self.shared;
        let mut st = sh.state.lock().expect("communicator state poisoned");
        match st.op {
            Some(expected) if expected != op => {
                return Err(CommError::CollectiveMismatch {
                    rank: self.rank,
                    expected,
                    found: op,
                })
            }
            _ => st.op = Some(op),
        }
        sh.counters.add_message(std::mem::size_of::<f64>());
        st.values[self.rank] = Some(value);
        st.arrived += 1;
        let generation = st.generation;
        if st.arrived == sh.size {
            let mut acc = st.values[0].take().expect("rank 0 contribution");
            for slot in st.values.iter_mut().skip(1) {
                acc = op.fold(acc, slot.take().expect("rank contribution"));
            }
            st.result = acc;
            st.arrived = 0;
            st.op = None;
            st.generation += 1;
            sh.counters.allreduces.fetch_add(1, Ordering::Relaxed);
            sh.ready.notify_all();
            return Ok(acc);
        }
        let (st, res) = sh
            .ready
            .wait_timeout_while(st, sh.timeout, |s| s.generation == generation)
            .expect("communicator state poisoned");
        if res.timed_out() {
            return Err(CommError::Timeout {
                rank: self.rank,
                waited: sh.timeout,
            });
        }
        Ok(st.result)
    }

    pub fn allreduce_and(&self, flag: bool) -> CResult<bool> {
        let v = self.allreduce(if flag { 1.0 } else { 0.0 }, ReduceOp::LogicalAnd)?;
        Ok(v != 0.0)
    }

    /// Sends `to_right` to the right neighbour and `to_left` to the left one
    /// (periodic), then receives the mirrored payloads.
    pub fn halo_exchange(&self, to_right: &[f64], to_left: &[f64]) -> CResult<Halo> {
        let sh = &*self.shared;
        let bytes = std::mem::size_of::<f64>();
        sh.rightward[self.right()]
            .send(to_right.to_vec())
            .map_err(|_| CommError::Disconnected(self.rank))?;
        sh.counters.add_message(to_right.len() * bytes);
        sh.leftward[self.left()]
            .send(to_left.to_vec())
            .map_err(|_| CommError::Disconnected(self.rank))?;
        sh.counters.add_message(to_left.len() * bytes);
        let from_left = self.recv(&self.from_left)?;
        let from_right = self.recv(&self.from_right)?;
        Ok(Halo {
            from_left,
            from_right,
        })
    }

    fn recv(&self, rx: &Receiver<Vec<f64>>) -> CResult<Vec<f64>> {
        rx.recv_timeout(self.shared.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => CommError::Timeout {
                rank: self.rank,
                waited: self.shared.timeout,
            },
            RecvTimeoutError::Disconnected => CommError::Disconnected(self.rank),
        })
    }
}

/// Runs `body` once per rank, each on its own thread, and returns the results
/// in rank order.
pub fn run_ranks<T, F>(comm: &Communicator, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(CommHandle) -> T + Sync,
{
    let handles = comm.handles();
    if handles.len() == 1 {
        return handles.into_iter().map(&body).collect();
    }
    std::thread::scope(|s| {
        let joins: Vec<_> = handles
            .into_iter()
            .map(|h| {
                let body = &body;
                s.spawn(move || body(h))
            })
            .collect();
        joins
            .into_iter()
            .map(|j| j.join().expect("rank thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_on_three_ranks() {
        let comm = Communicator::new(3);
        let out = run_ranks(&comm, |h| h.allreduce((h.rank() + 1) as f64, ReduceOp::Sum).unwrap());
        assert_eq!(out, vec![6.0; 3]);
        assert_eq!(comm.counters().allreduces(), 1);
    }

    #[test]
    fn logical_and() {
        let comm = Communicator::new(2);
        let out = run_ranks(&comm, |h| h.allreduce_and(h.rank() == 0).unwrap());
        assert_eq!(out, vec![false, false]);
    }

    #[test]
    fn halo_ring() {
        let comm = Communicator::new(3);
        let out = run_ranks(&comm, |h| {
            let r = h.rank() as f64;
            h.halo_exchange(&[r], &[r]).unwrap()
        });
        for (r, halo) in out.iter().enumerate() {
            assert_eq!(halo.from_left, vec![((r + 2) % 3) as f64]);
            assert_eq!(halo.from_right, vec![((r + 1) % 3) as f64]);
        }
    }

    #[test]
    fn single_rank_self_wrap() {
        let comm = Communicator::new(1);
        let h = comm.handle(0);
        let halo = h.halo_exchange(&[7.0, 8.0, 9.0], &[1.0]).unwrap();
        assert_eq!(halo.from_left, vec![7.0, 8.0, 9.0]);
        assert_eq!(halo.from_right, vec![1.0]);
    }

    #[test]
    fn missing_participant_times_out() {
        let comm = Communicator::with_timeout(2, Duration::from_millis(50));
        let h = comm.handle(0);
        assert!(matches!(
            h.allreduce(1.0, ReduceOp::Sum),
            Err(CommError::Timeout { rank: 0, .. })
        ));
    }

    #[test]
    fn repeated_collectives_stay_in_step() {
        let comm = Communicator::new(4);
        let out = run_ranks(&comm, |h| {
            (0..200)
                .map(|k| h.allreduce((h.rank() * k) as f64, ReduceOp::Max).unwrap())
                .collect::<Vec<_>>()
        });
        for per_rank in &out {
            for (k, v) in per_rank.iter().enumerate() {
                assert_eq!(*v, (3 * k) as f64);
            }
        }
    }
}
