use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sunbeam::memory::MemorySpace;
use sunbeam::nvector::{
    Backend, DeviceSimVector, ExecContext, ExecPolicy, LocalVector, NodeVector, PooledVector,
    SerialVector, UnaryOp, Vector, VectorError,
};

fn ctx() -> ExecContext {
    ExecContext::new(4)
}

fn host(v: &mut NodeVector) -> Vec<f64> {
    v.to_host_vec().unwrap()
}

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn positive(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.1..2.0)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn every_backend() -> [Backend; 4] {
    [Backend::Serial, Backend::Pooled, Backend::DeviceSim, Backend::DeviceSimUnified]
}

#[test]
fn const_fill_examples() {
    let c = ctx();
    for b in every_backend() {
        let mut v = NodeVector::new(b, &c, 10);
        v.const_fill(0.0).unwrap();
        assert_eq!(host(&mut v), vec![0.0; 10]);
        let mut w = NodeVector::new(b, &c, 1);
        w.const_fill(3.5).unwrap();
        assert_eq!(host(&mut w), vec![3.5]);
    }
}

#[test]
fn device_fill_then_host_view_is_denied() {
    let c = ctx();
    let mut v = DeviceSimVector::new(&c, 4);
    v.const_fill(1.0).unwrap();
    assert!(matches!(v.view(MemorySpace::Host), Err(VectorError::AccessViolation(_))));
    v.copy_from_space().unwrap();
    assert_eq!(v.view(MemorySpace::Host).unwrap(), &[1.0; 4]);
}

#[test]
fn unified_view_needs_no_copy() {
    let c = ctx();
    let mut v = DeviceSimVector::new_unified(&c, 3);
    v.const_fill(2.0).unwrap();
    assert_eq!(v.view(MemorySpace::Host).unwrap(), &[2.0; 3]);
}

#[test]
fn host_write_requires_copy_back_before_kernels() {
    let c = ctx();
    let mut v = DeviceSimVector::from_host(&c, &[1.0, 2.0]);
    v.host_view_mut().unwrap()[0] = 5.0;
    assert!(matches!(v.max_norm(), Err(VectorError::AccessViolation(_))));
    v.copy_to_space(MemorySpace::Device).unwrap();
    assert_eq!(v.max_norm().unwrap(), 5.0);
}

#[test]
fn linear_sum_examples() {
    let c = ctx();
    for b in every_backend() {
        let x = NodeVector::from_host(b, &c, &[1.0, 2.0]);
        let y = NodeVector::from_host(b, &c, &[3.0, 4.0]);
        let mut z = x.duplicate();
        z.linear_sum(1.0, &x, 1.0, &y).unwrap();
        assert_eq!(host(&mut z), vec![4.0, 6.0]);
        z.linear_sum(1.0, &x, 0.0, &y).unwrap();
        assert_eq!(host(&mut z), vec![1.0, 2.0]);
    }
}

#[test]
fn linear_sum_matches_serial_bits() {
    let c = ctx();
    let (xs, ys) = (random(1000, 1), random(1000, 2));
    let mut out = Vec::new();
    for b in every_backend() {
        let x = NodeVector::from_host(b, &c, &xs);
        let y = NodeVector::from_host(b, &c, &ys);
        let mut z = x.duplicate();
        z.linear_sum(0.3, &x, -1.7, &y).unwrap();
        out.push(host(&mut z));
    }
    for o in &out[1..] {
        assert!(o.iter().zip(&out[0]).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn length_mismatch() {
    let c = ctx();
    let x = SerialVector::new(&c, 3);
    let y = SerialVector::new(&c, 4);
    let mut z = SerialVector::new(&c, 3);
    assert_eq!(
        z.linear_sum(1.0, &x, 1.0, &y),
        Err(VectorError::LengthMismatch { expected: 3, found: 4 })
    );
    assert!(matches!(x.dot(&y), Err(VectorError::LengthMismatch { .. })));
}

#[test]
fn mixed_backends_rejected() {
    let c = ctx();
    let x = NodeVector::new(Backend::Serial, &c, 2);
    let y = NodeVector::new(Backend::Pooled, &c, 2);
    assert!(matches!(x.dot(&y), Err(VectorError::BackendMismatch(..))));
}

#[test]
fn elementwise_examples() {
    let c = ctx();
    for b in every_backend() {
        let x = NodeVector::from_host(b, &c, &[2.0, 3.0]);
        let y = NodeVector::from_host(b, &c, &[4.0, 5.0]);
        let mut z = x.duplicate();
        z.prod(&x, &y).unwrap();
        assert_eq!(host(&mut z), vec![8.0, 15.0]);
        z.div(&y, &x).unwrap();
        assert_eq!(host(&mut z), vec![2.0, 5.0 / 3.0]);

        let w = NodeVector::from_host(b, &c, &[0.5, -2.0]);
        z.compare(1.0, &w).unwrap();
        assert_eq!(host(&mut z), vec![0.0, 1.0]);
        z.abs_val(&w).unwrap();
        assert_eq!(host(&mut z), vec![0.5, 2.0]);
        z.inv(&w).unwrap();
        assert_eq!(host(&mut z), vec![2.0, -0.5]);
        z.add_const(&w, 1.0).unwrap();
        assert_eq!(host(&mut z), vec![1.5, -1.0]);

        let mut t = x.duplicate();
        t.scale(-1.0, &x).unwrap();
        let mut u = x.duplicate();
        u.scale(-1.0, &t).unwrap();
        assert_eq!(host(&mut u), vec![2.0, 3.0]);
    }
}

#[test]
fn dot_examples() {
    let c = ctx();
    for b in every_backend() {
        let e1 = NodeVector::from_host(b, &c, &[1.0, 0.0, 0.0]);
        let e2 = NodeVector::from_host(b, &c, &[0.0, 1.0, 0.0]);
        assert_eq!(e1.dot(&e2).unwrap(), 0.0);
        let x = NodeVector::from_host(b, &c, &[3.0, 4.0]);
        assert_eq!(x.dot(&x).unwrap(), 25.0);
    }
}

#[test]
fn large_dot_agrees_with_left_fold() {
    let c = ctx();
    let (xs, ys) = (random(100_000, 3), random(100_000, 4));
    let oracle = xs.iter().zip(&ys).fold(0.0, |s, (a, b)| s + a * b);
    for b in every_backend() {
        let x = NodeVector::from_host(b, &c, &xs);
        let y = NodeVector::from_host(b, &c, &ys);
        let d = x.dot(&y).unwrap();
        assert!(rel(d, oracle) <= 1e-13, "{b}: {d} vs {oracle}");
    }
}

#[test]
fn max_norm_examples() {
    let c = ctx();
    let xs = random(5000, 5);
    let oracle = xs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    for b in every_backend() {
        assert_eq!(NodeVector::from_host(b, &c, &[-5.0, 2.0]).max_norm().unwrap(), 5.0);
        assert_eq!(NodeVector::new(b, &c, 4).max_norm().unwrap(), 0.0);
        assert_eq!(NodeVector::from_host(b, &c, &xs).max_norm().unwrap(), oracle);
        assert_eq!(NodeVector::new(b, &c, 0).max_norm(), Err(VectorError::EmptyVector));
    }
}

#[test]
fn wrms_examples() {
    let c = ctx();
    for b in every_backend() {
        let x = NodeVector::from_host(b, &c, &[2.0, -2.0]);
        let w = NodeVector::from_host(b, &c, &[0.5, 0.5]);
        assert_eq!(x.wrms_norm(&w).unwrap(), 1.0);
        assert_eq!(NodeVector::new(b, &c, 2).wrms_norm(&w).unwrap(), 0.0);

        let x = NodeVector::from_host(b, &c, &[2.0, 9.0]);
        let w = NodeVector::from_host(b, &c, &[0.5, 1.0]);
        let m = NodeVector::from_host(b, &c, &[1.0, 0.0]);
        assert_eq!(x.wrms_norm_mask(&w, &m).unwrap(), 0.5f64.sqrt());
    }
}

#[test]
fn misc_reductions() {
    let c = ctx();
    for b in every_backend() {
        let num = NodeVector::from_host(b, &c, &[2.0, 6.0]);
        let den = NodeVector::from_host(b, &c, &[1.0, 2.0]);
        assert_eq!(num.min_quotient(&den).unwrap(), 2.0);
        let zeros = NodeVector::new(b, &c, 2);
        assert_eq!(num.min_quotient(&zeros).unwrap(), f64::INFINITY);

        let x = NodeVector::from_host(b, &c, &[2.0, 0.0]);
        let mut z = x.duplicate();
        assert!(!z.inv_test(&x).unwrap());
        assert_eq!(host(&mut z)[0], 0.5);
        let y = NodeVector::from_host(b, &c, &[2.0, -4.0]);
        assert!(z.inv_test(&y).unwrap());

        let cons = NodeVector::from_host(b, &c, &[2.0, 0.0]);
        let x = NodeVector::from_host(b, &c, &[1.0, -9.0]);
        let mut m = x.duplicate();
        assert!(m.constr_mask(&cons, &x).unwrap());
        assert_eq!(host(&mut m), vec![0.0, 0.0]);

        let cons = NodeVector::from_host(b, &c, &[1.0, -2.0, 2.0, -1.0]);
        let x = NodeVector::from_host(b, &c, &[0.0, 0.0, -1.0, 3.0]);
        let mut m = x.duplicate();
        assert!(!m.constr_mask(&cons, &x).unwrap());
        assert_eq!(host(&mut m), vec![0.0, 1.0, 1.0, 1.0]);

        let v = NodeVector::from_host(b, &c, &[-3.0, 1.0, 4.0]);
        assert_eq!(v.min_val().unwrap(), -3.0);
        assert_eq!(v.l1_norm().unwrap(), 8.0);
        let w = NodeVector::from_host(b, &c, &[1.0, 2.0, 0.5]);
        assert_eq!(v.wl2_norm(&w).unwrap(), 17.0f64.sqrt());
    }
}

#[test]
fn streaming_policy_rejects_block_reduce() {
    let c = ctx();
    let mut v = PooledVector::new(&c, 10);
    let r = v.set_exec_policy(
        ExecPolicy::BlockReduce { block_size: 4 },
        ExecPolicy::BlockReduce { block_size: 4 },
    );
    assert!(matches!(r, Err(VectorError::InvalidPolicy(_))));
    let r = v.set_exec_policy(
        ExecPolicy::ThreadDirect { workers: 0 },
        ExecPolicy::BlockReduce { block_size: 4 },
    );
    assert!(matches!(r, Err(VectorError::InvalidPolicy(_))));
}

#[test]
fn thread_direct_chunk_sizes() {
    let chunks = ExecPolicy::ThreadDirect { workers: 4 }.chunks(10).unwrap();
    let sizes: Vec<usize> = chunks.iter().map(|r| r.len()).collect();
    assert_eq!(sizes, vec![3, 3, 3, 1]);
}

fn with_policy(c: &ExecContext, b: Backend, xs: &[f64], s: ExecPolicy, r: ExecPolicy) -> NodeVector {
    let mut v = NodeVector::from_host(b, c, xs);
    v.set_exec_policy(s, r).unwrap();
    v
}

#[test]
fn streaming_results_independent_of_policy() {
    let c = ctx();
    let (xs, ys) = (random(20_000, 6), random(20_000, 7));
    let red = ExecPolicy::BlockReduce { block_size: 256 };
    for b in [Backend::Pooled, Backend::DeviceSim] {
        let mut results = Vec::new();
        for s in [
            ExecPolicy::ThreadDirect { workers: 4 },
            ExecPolicy::GridStride { workers: 2 },
            ExecPolicy::GridStride { workers: 7 },
            ExecPolicy::ThreadDirect { workers: 1 },
        ] {
            let x = with_policy(&c, b, &xs, s, red);
            let y = with_policy(&c, b, &ys, s, red);
            let mut z = x.duplicate();
            z.linear_sum(1.25, &x, -0.5, &y).unwrap();
            z.prod(&z.duplicate_from(), &y).unwrap();
            results.push(host(&mut z));
        }
        for r in &results[1..] {
            assert!(r.iter().zip(&results[0]).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

trait DuplicateFrom {
    fn duplicate_from(&self) -> Self;
}

impl DuplicateFrom for NodeVector {
    fn duplicate_from(&self) -> Self {
        let mut d = self.duplicate();
        d.copy_from(self).unwrap();
        d
    }
}

#[test]
fn reductions_nearly_independent_of_block_size() {
    let c = ctx();
    let (xs, ys) = (random(50_000, 8), random(50_000, 9));
    let oracle = xs.iter().zip(&ys).fold(0.0, |s, (a, b)| s + a * b);
    let st = ExecPolicy::ThreadDirect { workers: 4 };
    for b in [Backend::Pooled, Backend::DeviceSim] {
        let mut dots = Vec::new();
        for beta in [2, 8, 256, 4096] {
            let red = ExecPolicy::BlockReduce { block_size: beta };
            let x = with_policy(&c, b, &xs, st, red);
            let y = with_policy(&c, b, &ys, st, red);
            dots.push(x.dot(&y).unwrap());
        }
        for d in &dots {
            assert!(rel(*d, dots[0]) <= 1e-13);
            assert!(rel(*d, oracle) <= 1e-13);
        }
    }
}

#[test]
fn device_reduction_counts_one_scalar_transfer() {
    let c = ctx();
    let x = DeviceSimVector::from_host(&c, &random(100, 10));
    let w = DeviceSimVector::from_host(&c, &positive(100, 11));
    let arb = c.arbiter();
    arb.reset_stats();
    let before = arb.stats().scalar_transfer_count;
    x.dot(&w).unwrap();
    assert_eq!(arb.stats().scalar_transfer_count, before + 1);
    x.wrms_norm(&w).unwrap();
    x.max_norm().unwrap();
    assert_eq!(arb.stats().scalar_transfer_count, before + 3);
    assert_eq!(arb.stats().array_copies(MemorySpace::Device, MemorySpace::Host), 0);
}

#[test]
fn devsim_copy_workflow_is_ledgered() {
    let c = ctx();
    let arb = c.arbiter();
    let mut v = DeviceSimVector::from_host(&c, &[1.0, 2.0, 3.0]);
    assert_eq!(arb.stats().pair(MemorySpace::Host, MemorySpace::Device).bytes, 24);
    v.scale_in_place(2.0).unwrap();
    v.copy_from_space().unwrap();
    assert_eq!(v.view(MemorySpace::Host).unwrap(), &[2.0, 4.0, 6.0]);
    assert_eq!(arb.stats().array_copies(MemorySpace::Device, MemorySpace::Host), 1);
    // Already coherent: no second copy.
    v.copy_from_space().unwrap();
    assert_eq!(arb.stats().array_copies(MemorySpace::Device, MemorySpace::Host), 1);
}

#[test]
fn queue_ids_carry_over_to_duplicates() {
    let c = ctx();
    let mut v = PooledVector::new(&c, 3);
    v.set_queue_id(7);
    assert_eq!(v.duplicate().queue_id(), 7);
}

#[derive(Debug, Clone)]
enum Op {
    Fill(f64),
    LinearSum(f64, f64),
    ScaleAdd(f64, f64),
    Prod,
    Abs,
    Compare(f64),
    AddConst(f64),
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(Op::Fill),
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| Op::LinearSum(a, b)),
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| Op::ScaleAdd(a, b)),
        Just(Op::Prod),
        Just(Op::Abs),
        (0.0..1.0f64).prop_map(Op::Compare),
        (-1.0..1.0f64).prop_map(Op::AddConst),
    ]
}

fn apply(op: &Op, z: &mut NodeVector, x: &NodeVector, y: &NodeVector) {
    match *op {
        Op::Fill(c) => z.const_fill(c).unwrap(),
        Op::LinearSum(a, b) => z.linear_sum(a, x, b, y).unwrap(),
        Op::ScaleAdd(a, b) => z.scale_add(a, b, y).unwrap(),
        Op::Prod => z.prod(x, y).unwrap(),
        Op::Abs => z.abs_val(x).unwrap(),
        Op::Compare(c) => z.compare(c, x).unwrap(),
        Op::AddConst(b) => z.add_const(x, b).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn streaming_backends_bit_identical(
        xs in prop::collection::vec(-10.0..10.0f64, 1..300),
        seed in any::<u64>(),
        ops in prop::collection::vec(op_strategy(), 1..8),
    ) {
        let c = ctx();
        let ys = random(xs.len(), seed);
        let mut outs = Vec::new();
        for b in every_backend() {
            let x = NodeVector::from_host(b, &c, &xs);
            let y = NodeVector::from_host(b, &c, &ys);
            let mut z = x.duplicate();
            z.copy_from(&x).unwrap();
            for op in &ops {
                apply(op, &mut z, &x, &y);
            }
            outs.push(host(&mut z));
        }
        for o in &outs[1..] {
            prop_assert!(o.iter().zip(&outs[0]).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn reductions_agree_with_serial(
        n in 1usize..12_000,
        seed in any::<u64>(),
    ) {
        let c = ctx();
        // Non-negative data keeps every sum well conditioned, so a plain
        // relative bound is meaningful.
        let (xs, ws) = (positive(n, seed), positive(n, seed ^ 0x55));
        let serial_x = SerialVector::from_slice(&c, &xs);
        let serial_w = SerialVector::from_slice(&c, &ws);
        let want = [
            serial_x.dot(&serial_w).unwrap(),
            serial_x.l1_norm().unwrap(),
            serial_x.wrms_norm(&serial_w).unwrap(),
        ];
        let exact = [serial_x.max_norm().unwrap(), serial_x.min_val().unwrap(), serial_x.min_quotient(&serial_w).unwrap()];
        for b in [Backend::Pooled, Backend::DeviceSim] {
            let x = NodeVector::from_host(b, &c, &xs);
            let w = NodeVector::from_host(b, &c, &ws);
            let got = [x.dot(&w).unwrap(), x.l1_norm().unwrap(), x.wrms_norm(&w).unwrap()];
            for (g, e) in got.iter().zip(&want) {
                prop_assert!(rel(*g, *e) <= 1e-13, "{} vs {}", g, e);
            }
            prop_assert_eq!(x.max_norm().unwrap(), exact[0]);
            prop_assert_eq!(x.min_val().unwrap(), exact[1]);
            prop_assert_eq!(x.min_quotient(&w).unwrap(), exact[2]);
        }
    }

    #[test]
    fn signed_dot_within_conditioned_bound(
        n in 1usize..12_000,
        seed in any::<u64>(),
    ) {
        let c = ctx();
        let (xs, ys) = (random(n, seed), random(n, seed ^ 0xaa));
        let magnitude: f64 = xs.iter().zip(&ys).map(|(a, b)| (a * b).abs()).sum();
        let serial = SerialVector::from_slice(&c, &xs).dot(&SerialVector::from_slice(&c, &ys)).unwrap();
        for b in [Backend::Pooled, Backend::DeviceSim] {
            let d = NodeVector::from_host(b, &c, &xs).dot(&NodeVector::from_host(b, &c, &ys)).unwrap();
            prop_assert!((d - serial).abs() <= 1e-13 * magnitude.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn runs_are_deterministic(n in 1usize..9000, seed in any::<u64>()) {
        let c = ctx();
        let xs = random(n, seed);
        for b in [Backend::Pooled, Backend::DeviceSim] {
            let a = NodeVector::from_host(b, &c, &xs);
            let first = a.dot(&a).unwrap();
            for _ in 0..3 {
                prop_assert_eq!(a.dot(&a).unwrap().to_bits(), first.to_bits());
            }
        }
    }

    #[test]
    fn host_access_guarded(seq in prop::collection::vec(0u8..5, 1..40)) {
        let c = ctx();
        let mut v = DeviceSimVector::from_host(&c, &[1.0, 2.0, 3.0]);
        // Mirrors the expected coherence state: host readable?
        let mut host_ok = true;
        for step in seq {
            match step {
                0 => { v.scale_in_place(1.5).unwrap(); host_ok = false; }
                1 => { v.copy_from_space().unwrap(); host_ok = true; }
                2 => { v.max_norm().unwrap(); }
                3 => {
                    let r = v.view(MemorySpace::Host);
                    prop_assert_eq!(r.is_ok(), host_ok);
                    if !host_ok {
                        prop_assert!(matches!(r, Err(VectorError::AccessViolation(_))), "expected an access violation");
                    }
                }
                _ => {
                    let r = v.host_view_mut().map(|h| h[0] += 1.0);
                    prop_assert_eq!(r.is_ok(), host_ok);
                    if host_ok {
                        v.copy_to_space(MemorySpace::Device).unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn every_device_reduction_is_one_scalar(k in 1usize..30) {
        let c = ctx();
        let x = DeviceSimVector::from_host(&c, &random(64, k as u64));
        let w = DeviceSimVector::from_host(&c, &positive(64, 3));
        c.counters().reset();
        c.arbiter().reset_stats();
        for i in 0..k {
            match i % 4 {
                0 => { x.dot(&w).unwrap(); }
                1 => { x.max_norm().unwrap(); }
                2 => { x.wrms_norm(&w).unwrap(); }
                _ => { x.min_quotient(&w).unwrap(); }
            }
        }
        prop_assert_eq!(c.arbiter().stats().scalar_transfer_count, k as u64);
        prop_assert_eq!(c.counters().reductions(), k as u64);
    }
}

#[test]
fn unary_in_place_matches_out_of_place() {
    let c = ctx();
    let xs = random(50, 12);
    let x = SerialVector::from_slice(&c, &xs);
    let mut a = SerialVector::from_slice(&c, &xs);
    a.unary_in_place(UnaryOp::AddConst(2.0)).unwrap();
    let mut b = x.duplicate();
    b.add_const(&x, 2.0).unwrap();
    assert_eq!(a.view(MemorySpace::Host).unwrap(), b.view(MemorySpace::Host).unwrap());
}
