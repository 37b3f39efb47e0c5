use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sunbeam::memory::{MemoryArbiter, MemorySpace};
use sunbeam::sunmatrix::{BlockCsrMatrix, CsrMatrix, MatrixError};

fn dense_matvec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|r| (0..x.len()).map(|c| a[r * x.len() + c] * x[c]).sum())
        .collect()
}

fn max_rel(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    got.iter().zip(want).fold(0.0, |m, (g, w)| f64::max(m, (g - w).abs() / scale))
}

/// Random pattern for `m × m` containing the diagonal, ascending per row.
fn random_pattern(rng: &mut ChaCha8Rng, m: usize) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0];
    let mut indices = Vec::new();
    for r in 0..m {
        for c in 0..m {
            if c == r || rng.gen_bool(0.5) {
                indices.push(c);
            }
        }
        offsets.push(indices.len());
    }
    (offsets, indices)
}

fn random_block(
    arb: &MemoryArbiter,
    rng: &mut ChaCha8Rng,
    g: usize,
    m: usize,
) -> BlockCsrMatrix {
    let (offsets, indices) = random_pattern(rng, m);
    let mut a = BlockCsrMatrix::new(arb, MemorySpace::Host, g, m, offsets, indices).unwrap();
    for v in a.values_mut().unwrap() {
        *v = rng.gen_range(-1.0..1.0);
    }
    a
}

/// Dense `G·m` square assembly built entry by entry from the block views.
fn dense_block_diag(a: &BlockCsrMatrix) -> Vec<f64> {
    let (g, m) = (a.nblocks(), a.block_dim());
    let n = g * m;
    let mut d = vec![0.0; n * n];
    for j in 0..g {
        let vals = a.block_values(j).unwrap();
        for r in 0..m {
            for k in a.row_offsets()[r]..a.row_offsets()[r + 1] {
                d[(j * m + r) * n + j * m + a.col_indices()[k]] = vals[k];
            }
        }
    }
    d
}

#[test]
fn csr_trivial_products() {
    let arb = MemoryArbiter::new();
    let id = CsrMatrix::identity(&arb, 3);
    let mut y = [0.0; 3];
    id.spmv(&[1.5, -2.0, 7.0], &mut y).unwrap();
    assert_eq!(y, [1.5, -2.0, 7.0]);

    let empty = CsrMatrix::new(&arb, MemorySpace::Host, 3, 3, vec![0; 4], vec![], &[]).unwrap();
    let mut y = [9.0; 3];
    empty.spmv(&[1.0, 2.0, 3.0], &mut y).unwrap();
    assert_eq!(y, [0.0; 3]);

    assert!(matches!(
        id.spmv(&[1.0, 2.0], &mut [0.0; 3]),
        Err(MatrixError::DimensionMismatch { expected: 3, found: 2 })
    ));
}

#[test]
fn csr_random_against_dense() {
    let arb = MemoryArbiter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 20;
    let dense: Vec<f64> = (0..n * n)
        .map(|_| if rng.gen_bool(0.3) { rng.gen_range(-1.0..1.0) } else { 0.0 })
        .collect();
    let a = CsrMatrix::from_dense(&arb, n, n, &dense);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; n];
    a.spmv(&x, &mut y).unwrap();
    assert!(max_rel(&y, &dense_matvec(&dense, n, &x)) <= 1e-13);
    assert_eq!(a.to_dense().unwrap(), dense);
}

#[test]
fn block_trivial_products() {
    let arb = MemoryArbiter::new();
    let mut a = BlockCsrMatrix::new(&arb, MemorySpace::Host, 2, 2, vec![0, 1, 2], vec![0, 1]).unwrap();
    a.scale_add_identity(0.0).unwrap();
    let mut y = [0.0; 4];
    a.spmv(&[1.0, 2.0, 3.0, 4.0], &mut y).unwrap();
    assert_eq!(y, [1.0, 2.0, 3.0, 4.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let one = random_block(&arb, &mut rng, 1, 4);
    let csr = CsrMatrix::new(
        &arb,
        MemorySpace::Host,
        4,
        4,
        one.row_offsets().to_vec(),
        one.col_indices().to_vec(),
        one.values().unwrap(),
    )
    .unwrap();
    let x = [0.3, -1.0, 2.0, 0.7];
    let (mut yb, mut yc) = ([0.0; 4], [0.0; 4]);
    one.spmv(&x, &mut yb).unwrap();
    csr.spmv(&x, &mut yc).unwrap();
    assert_eq!(yb, yc);
}

#[test]
fn block_random_against_dense() {
    let arb = MemoryArbiter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (g, m) = (50, 3);
    let mut a = BlockCsrMatrix::dense_blocks(&arb, MemorySpace::Host, g, m);
    for v in a.values_mut().unwrap() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let x: Vec<f64> = (0..g * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; g * m];
    a.spmv(&x, &mut y).unwrap();
    assert!(max_rel(&y, &dense_matvec(&dense_block_diag(&a), g * m, &x)) <= 1e-13);
}

#[test]
fn block_equals_assembled_csr_exactly() {
    let arb = MemoryArbiter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let g = rng.gen_range(1..=64);
        let m = rng.gen_range(1..=6);
        let a = random_block(&arb, &mut rng, g, m);
        // Hand assembly, independent of the library's conversion.
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for j in 0..g {
            let vals = a.block_values(j).unwrap();
            for r in 0..m {
                for k in a.row_offsets()[r]..a.row_offsets()[r + 1] {
                    indices.push(j * m + a.col_indices()[k]);
                    values.push(vals[k]);
                }
                offsets.push(indices.len());
            }
        }
        let n = g * m;
        let csr = CsrMatrix::new(&arb, MemorySpace::Host, n, n, offsets, indices, &values).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (mut yb, mut yc) = (vec![0.0; n], vec![0.0; n]);
        a.spmv(&x, &mut yb).unwrap();
        csr.spmv(&x, &mut yc).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&yb), bits(&yc));
        let lib = a.to_csr(&arb).unwrap();
        assert_eq!(lib.values().unwrap(), csr.values().unwrap());
        assert_eq!(lib.col_indices(), csr.col_indices());
    }
}

#[test]
fn storage_economy() {
    let arb = MemoryArbiter::new();
    let (offsets, indices) = (vec![0, 2, 3, 5], vec![0, 2, 1, 0, 2]);
    let mut index_lens = Vec::new();
    for g in [1, 10, 1000] {
        let a = BlockCsrMatrix::new(&arb, MemorySpace::Device, g, 3, offsets.clone(), indices.clone())
            .unwrap();
        assert_eq!(a.value_storage_len(), g * 5);
        assert_eq!(a.block_nnz(), 5);
        assert_eq!(a.dim(), 3 * g);
        index_lens.push(a.index_storage_len());
    }
    assert!(index_lens.iter().all(|&l| l == index_lens[0]));
    assert_eq!(index_lens[0], offsets.len() + indices.len());
}

#[test]
fn scale_add_identity_examples() {
    let arb = MemoryArbiter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut a = random_block(&arb, &mut rng, 5, 4);
    let mut c0 = a.try_clone().unwrap();
    c0.scale_add_identity(0.0).unwrap();
    let n = 20;
    let d = dense_block_diag(&c0);
    for r in 0..n {
        for c in 0..n {
            assert_eq!(d[r * n + c], if r == c { 1.0 } else { 0.0 });
        }
    }

    let before = dense_block_diag(&a);
    a.scale_add_identity(-0.5).unwrap();
    let after = dense_block_diag(&a);
    for r in 0..n {
        for c in 0..n {
            let want = -0.5 * before[r * n + c] + if r == c { 1.0 } else { 0.0 };
            let got = after[r * n + c];
            assert!((got - want).abs() <= 1e-14 * want.abs().max(1e-300) || got == want);
        }
    }

    let mut z = CsrMatrix::identity(&arb, 4);
    z.zero().unwrap();
    z.scale_add_identity(1.0).unwrap();
    assert_eq!(z.to_dense().unwrap(), CsrMatrix::identity(&arb, 4).to_dense().unwrap());

    let mut csr = CsrMatrix::from_dense(&arb, 2, 2, &[2.0, 4.0, 0.0, -6.0]);
    csr.scale_add_identity(-0.5).unwrap();
    assert_eq!(csr.to_dense().unwrap(), vec![0.0, -2.0, 0.0, 4.0]);
}

#[test]
fn missing_diagonal_rejected() {
    let arb = MemoryArbiter::new();
    let mut a = BlockCsrMatrix::new(&arb, MemorySpace::Host, 3, 2, vec![0, 1, 2], vec![1, 0]).unwrap();
    assert!(matches!(a.scale_add_identity(2.0), Err(MatrixError::MissingDiagonal(0))));
    let mut c = CsrMatrix::new(&arb, MemorySpace::Host, 2, 2, vec![0, 1, 1], vec![0], &[1.0]).unwrap();
    assert!(matches!(c.scale_add_identity(2.0), Err(MatrixError::MissingDiagonal(1))));
}

#[test]
fn zero_copy_and_views() {
    let arb = MemoryArbiter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut a = random_block(&arb, &mut rng, 6, 3);
    let original = a.values().unwrap().to_vec();
    let mut clone = a.clone();
    clone.values_mut().unwrap().fill(42.0);
    assert_eq!(a.values().unwrap(), &original[..]);

    assert_eq!(a.block_values(5).unwrap().len(), a.block_nnz());
    assert!(matches!(
        a.block_values(6),
        Err(MatrixError::IndexOutOfRange { index: 6, len: 6 })
    ));

    a.zero().unwrap();
    let mut y = vec![1.0; 18];
    a.spmv(&vec![3.0; 18], &mut y).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn dense_dump_small() {
    let arb = MemoryArbiter::new();
    let text = CsrMatrix::identity(&arb, 2).dense_dump().unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains('1'));
}
