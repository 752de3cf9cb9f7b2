//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use hybrid_qcnn::qcnn::{conv_unitary, QcnnParams, CONV1_PAIRS, CONV2_PAIRS, POOL1, POOL2, READOUT_QUBIT};
use hybrid_qcnn::qsim::{rotation, Axis, Gate2, Gate4, C64};

pub const N: usize = 4;
pub const DIM: usize = 16;

pub type Dense = Vec<Vec<C64>>;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bit(index: usize, qubit: usize) -> usize {
    (index >> (N - 1 - qubit)) & 1
}

pub fn identity() -> Dense {
    (0..DIM).map(|r| (0..DIM).map(|c| C64::new(f64::from(u8::from(r == c)), 0.0)).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    (0..DIM)
        .map(|r| (0..DIM).map(|c| (0..DIM).map(|k| a[r][k] * b[k][c]).sum()).collect())
        .collect()
}

/// A 4x4 gate on qubits `(a, b)` written out as a full 16x16 matrix.
pub fn embed_pair(g: &Gate4, a: usize, b: usize) -> Dense {
    let mut m = vec![vec![C64::new(0.0, 0.0); DIM]; DIM];
    let others = |i: usize| (0..N).filter(|&q| q != a && q != b).map(|q| bit(i, q)).collect::<Vec<_>>();
    for r in 0..DIM {
        for c in 0..DIM {
            if others(r) == others(c) {
                m[r][c] = g.0[2 * bit(r, a) + bit(r, b)][2 * bit(c, a) + bit(c, b)];
            }
        }
    }
    m
}

pub fn embed_single(g: &Gate2, q: usize) -> Dense {
    let mut m = vec![vec![C64::new(0.0, 0.0); DIM]; DIM];
    for r in 0..DIM {
        for c in 0..DIM {
            if (r ^ c) & !(1 << (N - 1 - q)) == 0 {
                m[r][c] = g.0[bit(r, q)][bit(c, q)];
            }
        }
    }
    m
}

/// `|0><0| ⊗ I + |1><1| ⊗ G` on (control, target).
pub fn controlled(g: &Gate2) -> Gate4 {
    let mut m = Gate4::identity();
    for r in 0..2 {
        for c in 0..2 {
            m.0[2 + r][2 + c] = g.0[r][c];
        }
    }
    m
}

fn pool_matrix(p: [f64; 2], c: usize, t: usize) -> Dense {
    let x = embed_single(&Gate2::pauli(Axis::X), c);
    let crz = embed_pair(&controlled(&rotation(Axis::Z, p[0])), c, t);
    let crx = embed_pair(&controlled(&rotation(Axis::X, p[1])), c, t);
    // Application order crz, x, crx, x; matrices compose right to left.
    matmul(&x, &matmul(&crx, &matmul(&x, &crz)))
}

/// The whole QCNN block as a single 16x16 unitary.
pub fn whole_circuit(params: &QcnnParams) -> Dense {
    let mut u = identity();
    let c1 = conv_unitary(&params.conv1);
    for &(a, b) in &CONV1_PAIRS {
        u = matmul(&embed_pair(&c1, a, b), &u);
    }
    for &(c, t) in &POOL1 {
        u = matmul(&pool_matrix(params.pool1.0, c, t), &u);
    }
    let c2 = conv_unitary(&params.conv2);
    for &(a, b) in &CONV2_PAIRS {
        u = matmul(&embed_pair(&c2, a, b), &u);
    }
    for &(c, t) in &POOL2 {
        u = matmul(&pool_matrix(params.pool2.0, c, t), &u);
    }
    u
}

/// Readout marginals from the dense circuit applied to the normalized input.
pub fn oracle_forward(x: &[f64], params: &QcnnParams) -> (f64, f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u = whole_circuit(params);
    let out: Vec<C64> = (0..DIM).map(|r| (0..DIM).map(|c| u[r][c] * (x[c] / norm)).sum()).collect();
    let p1: f64 = (0..DIM).filter(|&i| bit(i, READOUT_QUBIT) == 1).map(|i| out[i].norm_sqr()).sum();
    let p0: f64 = (0..DIM).filter(|&i| bit(i, READOUT_QUBIT) == 0).map(|i| out[i].norm_sqr()).sum();
    (p0, p1)
}

pub fn dense_unitarity_error(u: &Dense) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..DIM {
        for c in 0..DIM {
            let v: C64 = (0..DIM).map(|k| u[k][r].conj() * u[k][c]).sum();
            let want = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((v - C64::new(want, 0.0)).norm());
        }
    }
    worst
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` over whole vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Expected `(input, output)` dimensions of every dimensioned row in the
/// architecture tables, in row order. QCNN rows carry the block input and
/// output. Four-QCNN values use classical input 76.
pub fn expected_shapes(qcnn_count: usize) -> Vec<(Option<Vec<usize>>, Option<Vec<usize>>)> {
    let v = |d: &[usize]| Some(d.to_vec());
    let mut rows = vec![(v(&[1, 1, 140]), None)];
    for _ in 0..qcnn_count {
        rows.push((v(&[1, 1, 16]), None));
        rows.push((v(&[1, 1, 16]), v(&[1, 1, 2])));
    }
    let convs: Vec<(Vec<usize>, Vec<usize>)> = match qcnn_count {
        0 => vec![(vec![1, 1, 140], vec![1, 8, 56]), (vec![1, 8, 56], vec![1, 16, 19]), (vec![1, 16, 19], vec![1, 32, 5])],
        1 => vec![(vec![1, 1, 124], vec![1, 8, 48]), (vec![1, 8, 48], vec![1, 16, 15]), (vec![1, 16, 15], vec![1, 32, 3])],
        2 => vec![(vec![1, 1, 108], vec![1, 8, 40]), (vec![1, 8, 40], vec![1, 16, 11]), (vec![1, 16, 11], vec![1, 32, 1])],
        4 => vec![(vec![1, 1, 76], vec![1, 8, 24]), (vec![1, 8, 24], vec![1, 16, 3])],
        _ => unreachable!(),
    };
    if qcnn_count > 0 {
        rows.push((Some(convs[0].0.clone()), None));
    }
    for (i, o) in convs {
        rows.push((Some(i), Some(o)));
    }
    let concat = match qcnn_count {
        0 => 160,
        1 => 98,
        2 => 36,
        _ => 56,
    };
    if qcnn_count > 0 {
        rows.push((v(&[1, 1, concat]), None));
    }
    rows.push((v(&[1, 1, concat]), v(&[1, 1, 18])));
    rows.push((v(&[1, 1, 18]), v(&[1, 1, 9])));
    rows.push((v(&[1, 1, 9]), v(&[1, 1, 2])));
    rows.push((None, v(&[1, 2])));
    rows
}

/// Top nine ROIs and their printed averages.
pub const TOP9: [(usize, f64); 9] = [
    (1, 0.965),
    (84, 0.906),
    (18, 0.868),
    (17, 0.866),
    (39, 0.862),
    (38, 0.836),
    (23, 0.823),
    (92, 0.814),
    (110, 0.810),
];

/// Reported paired t statistics and Pearson correlations, in the order
/// baseline/h1, baseline/h2, baseline/h4, h1/h2, h1/h4, h2/h4.
pub const REPORTED_T: [f64; 6] =
    [-15.64308714, -18.6588469, -21.21479802, -3.962273896, -6.341725888, -3.085865669];
pub const REPORTED_R: [f64; 6] =
    [0.313536158, -0.084718363, 0.029713522, 0.163658677, 0.302224092, 0.638690571];
