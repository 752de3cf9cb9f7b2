//! Four-qubit quantum convolutional block.
//!
//! Layout of one block (qubit 0 is the register MSB, see [`crate::qsim`]):
//!
//! ```text
//! encode 16 values -> conv(0,1) conv(2,3) conv(1,2) conv(3,0)   shared 15 angles
//!                  -> pool(0->1) pool(2->3)                    shared 2 angles
//!                  -> conv(1,3)                                15 angles
//!                  -> pool(1->3)                               2 angles
//!                  -> (P(q3 = 0), P(q3 = 1))
//! ```
//!
//! Pooled control qubits stay in the register but are never touched again;
//! reading out a single marginal sums over them.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{shape, Error, Result};
use crate::qsim::{rotation, rotation_derivative, u3, Axis, Gate2, Gate4, StateVector, C64};

pub const NUM_QUBITS: usize = 4;
pub const INPUT_LEN: usize = 1 << NUM_QUBITS;
pub const CONV_PARAMS: usize = 15;
pub const POOL_PARAMS: usize = 2;
/// Trainable angles in one block.
pub const BLOCK_PARAMS: usize = 2 * CONV_PARAMS + 2 * POOL_PARAMS;

pub const CONV1_PAIRS: [(usize, usize); 4] = [(0, 1), (2, 3), (1, 2), (3, 0)];
pub const POOL1: [(usize, usize); 2] = [(0, 1), (2, 3)];
pub const CONV2_PAIRS: [(usize, usize); 1] = [(1, 3)];
pub const POOL2: [(usize, usize); 1] = [(1, 3)];
pub const READOUT_QUBIT: usize = 3;

const CONV1_OFFSET: usize = 0;
const POOL1_OFFSET: usize = CONV_PARAMS;
const CONV2_OFFSET: usize = CONV_PARAMS + POOL_PARAMS;
const POOL2_OFFSET: usize = 2 * CONV_PARAMS + POOL_PARAMS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvGateParams(pub [f64; CONV_PARAMS]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolGateParams(pub [f64; POOL_PARAMS]);

/// Angles of one QCNN block. Flattened order: conv1, pool1, conv2, pool2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcnnParams {
    pub conv1: ConvGateParams,
    pub pool1: PoolGateParams,
    pub conv2: ConvGateParams,
    pub pool2: PoolGateParams,
}

impl QcnnParams {
    pub fn zeros() -> Self {
        QcnnParams {
            conv1: ConvGateParams([0.0; CONV_PARAMS]),
            pool1: PoolGateParams([0.0; POOL_PARAMS]),
            conv2: ConvGateParams([0.0; CONV_PARAMS]),
            pool2: PoolGateParams([0.0; POOL_PARAMS]),
        }
    }

    /// i.i.d. N(0, std^2) angles.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, std: f64) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let v: Vec<f64> = (0..BLOCK_PARAMS).map(|_| normal.sample(rng)).collect();
        Self::from_slice(&v).expect("length matches")
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != BLOCK_PARAMS {
            return Err(shape(format!("QCNN block needs {BLOCK_PARAMS} angles, got {}", v.len())));
        }
        let mut p = Self::zeros();
        p.conv1.0.copy_from_slice(&v[CONV1_OFFSET..POOL1_OFFSET]);
        p.pool1.0.copy_from_slice(&v[POOL1_OFFSET..CONV2_OFFSET]);
        p.conv2.0.copy_from_slice(&v[CONV2_OFFSET..POOL2_OFFSET]);
        p.pool2.0.copy_from_slice(&v[POOL2_OFFSET..]);
        Ok(p)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(BLOCK_PARAMS);
        v.extend_from_slice(&self.conv1.0);
        v.extend_from_slice(&self.pool1.0);
        v.extend_from_slice(&self.conv2.0);
        v.extend_from_slice(&self.pool2.0);
        v
    }
}

/// Three-CNOT entangling core `CNOT(b->a) [Rz(alpha) ⊗ Ry(beta)] CNOT(a->b) [I ⊗ Ry(gamma)] CNOT(b->a)`.
pub fn entangler(alpha: f64, beta: f64, gamma: f64) -> Gate4 {
    let cnot_ba = Gate4::cnot_second_controls();
    let cnot_ab = Gate4::cnot_first_controls();
    cnot_ba
        * Gate4::kron(&rotation(Axis::Z, alpha), &rotation(Axis::Y, beta))
        * cnot_ab
        * Gate4::kron(&Gate2::identity(), &rotation(Axis::Y, gamma))
        * cnot_ba
}

/// Fifteen-angle two-qubit convolution unitary:
/// `(U3(p0..p2) ⊗ U3(p3..p5)) · entangler(p6, p7, p8) · (U3(p9..p11) ⊗ U3(p12..p14))`.
pub fn conv_unitary(p: &ConvGateParams) -> Gate4 {
    let p = &p.0;
    Gate4::kron(&u3(p[0], p[1], p[2]), &u3(p[3], p[4], p[5]))
        * entangler(p[6], p[7], p[8])
        * Gate4::kron(&u3(p[9], p[10], p[11]), &u3(p[12], p[13], p[14]))
}

/// Applies the same convolution gate to every pair, in order.
pub fn apply_conv_layer(
    state: &mut StateVector,
    p: &ConvGateParams,
    pairs: &[(usize, usize)],
) -> Result<()> {
    let gate = conv_unitary(p);
    for &(a, b) in pairs {
        state.apply_2q(&gate, a, b)?;
    }
    Ok(())
}

/// Applies `CRz(p0); X(c); CRx(p1); X(c)` for every `(control, target)` pool and
/// returns the qubits from `active` that survive (controls removed).
pub fn apply_pool_layer(
    state: &mut StateVector,
    p: &PoolGateParams,
    pools: &[(usize, usize)],
    active: &[usize],
) -> Result<Vec<usize>> {
    for (i, &(c, t)) in pools.iter().enumerate() {
        if c == t {
            return Err(shape(format!("pool control and target coincide at qubit {c}")));
        }
        for &(c2, t2) in &pools[i + 1..] {
            if c2 == c || c2 == t || t2 == c {
                return Err(shape(format!("overlapping pools ({c},{t}) and ({c2},{t2})")));
            }
        }
        if !active.contains(&c) || !active.contains(&t) {
            return Err(shape(format!("pool ({c},{t}) touches an inactive qubit")));
        }
    }
    let x = Gate2::pauli(Axis::X);
    for &(c, t) in pools {
        state.apply_controlled_rotation(Axis::Z, p.0[0], c, t)?;
        state.apply_1q(&x, c)?;
        state.apply_controlled_rotation(Axis::X, p.0[1], c, t)?;
        state.apply_1q(&x, c)?;
    }
    Ok(active
        .iter()
        .copied()
        .filter(|q| !pools.iter().any(|&(c, _)| c == *q))
        .collect())
}

/// Block output `(p0, p1)` for a 16-value input segment.
pub fn qcnn_forward(x: &[f64], params: &QcnnParams) -> Result<(f64, f64)> {
    if x.len() != INPUT_LEN {
        return Err(shape(format!("QCNN input must have {INPUT_LEN} values, got {}", x.len())));
    }
    let mut state = StateVector::amplitude_encode(x)?;
    let active: Vec<usize> = (0..NUM_QUBITS).collect();
    apply_conv_layer(&mut state, &params.conv1, &CONV1_PAIRS)?;
    let active = apply_pool_layer(&mut state, &params.pool1, &POOL1, &active)?;
    apply_conv_layer(&mut state, &params.conv2, &CONV2_PAIRS)?;
    let active = apply_pool_layer(&mut state, &params.pool2, &POOL2, &active)?;
    debug_assert_eq!(active, vec![READOUT_QUBIT]);
    state.marginal_probabilities(READOUT_QUBIT)
}

/// Rotation angle source in the elementary gate list.
#[derive(Debug, Clone, Copy)]
enum Angle {
    Param(usize),
    Fixed(f64),
}

/// Elementary gates of the block, in application order.
#[derive(Debug, Clone, Copy)]
enum Op {
    Rot { axis: Axis, qubit: usize, angle: Angle },
    CRot { axis: Axis, control: usize, target: usize, param: usize },
    Cnot { control: usize, target: usize },
    X { qubit: usize },
}

fn push_u3(ops: &mut Vec<Op>, qubit: usize, theta: usize, phi: usize, lambda: usize) {
    let rz = |p| Op::Rot { axis: Axis::Z, qubit, angle: Angle::Param(p) };
    ops.push(rz(lambda));
    ops.push(Op::Rot { axis: Axis::X, qubit, angle: Angle::Fixed(FRAC_PI_2) });
    ops.push(rz(theta));
    ops.push(Op::Rot { axis: Axis::X, qubit, angle: Angle::Fixed(-FRAC_PI_2) });
    ops.push(rz(phi));
}

fn push_conv(ops: &mut Vec<Op>, a: usize, b: usize, o: usize) {
    push_u3(ops, a, o + 9, o + 10, o + 11);
    push_u3(ops, b, o + 12, o + 13, o + 14);
    ops.push(Op::Cnot { control: b, target: a });
    ops.push(Op::Rot { axis: Axis::Y, qubit: b, angle: Angle::Param(o + 8) });
    ops.push(Op::Cnot { control: a, target: b });
    ops.push(Op::Rot { axis: Axis::Z, qubit: a, angle: Angle::Param(o + 6) });
    ops.push(Op::Rot { axis: Axis::Y, qubit: b, angle: Angle::Param(o + 7) });
    ops.push(Op::Cnot { control: b, target: a });
    push_u3(ops, a, o, o + 1, o + 2);
    push_u3(ops, b, o + 3, o + 4, o + 5);
}

fn push_pool(ops: &mut Vec<Op>, c: usize, t: usize, o: usize) {
    ops.push(Op::CRot { axis: Axis::Z, control: c, target: t, param: o });
    ops.push(Op::X { qubit: c });
    ops.push(Op::CRot { axis: Axis::X, control: c, target: t, param: o + 1 });
    ops.push(Op::X { qubit: c });
}

fn block_ops() -> &'static [Op] {
    static OPS: OnceLock<Vec<Op>> = OnceLock::new();
    OPS.get_or_init(|| {
        let mut ops = Vec::new();
        for &(a, b) in &CONV1_PAIRS {
            push_conv(&mut ops, a, b, CONV1_OFFSET);
        }
        for &(c, t) in &POOL1 {
            push_pool(&mut ops, c, t, POOL1_OFFSET);
        }
        for &(a, b) in &CONV2_PAIRS {
            push_conv(&mut ops, a, b, CONV2_OFFSET);
        }
        for &(c, t) in &POOL2 {
            push_pool(&mut ops, c, t, POOL2_OFFSET);
        }
        ops
    })
}

fn op_angle(op: &Op, params: &[f64]) -> Option<f64> {
    match *op {
        Op::Rot { angle: Angle::Param(i), .. } | Op::CRot { param: i, .. } => Some(params[i]),
        Op::Rot { angle: Angle::Fixed(v), .. } => Some(v),
        _ => None,
    }
}

/// Applies `op` with rotation angle `theta` (ignored for fixed gates).
fn apply_op(state: &mut StateVector, op: &Op, theta: f64) {
    match *op {
        Op::Rot { axis, qubit, .. } => state.apply_matrix_1q(&rotation(axis, theta), qubit),
        Op::CRot { axis, control, target, .. } => {
            state.apply_matrix_controlled(&rotation(axis, theta), control, target)
        }
        Op::Cnot { control, target } => {
            state.apply_matrix_controlled(&Gate2::pauli(Axis::X), control, target)
        }
        Op::X { qubit } => state.apply_matrix_1q(&Gate2::pauli(Axis::X), qubit),
    }
}

fn apply_op_inverse(state: &mut StateVector, op: &Op, theta: f64) {
    apply_op(state, op, -theta);
}

/// Runs the elementary gate list, optionally shifting the angle of one gate occurrence.
fn run_ops(x: &[f64], params: &[f64], shift: Option<(usize, f64)>) -> Result<StateVector> {
    let mut state = StateVector::amplitude_encode(x)?;
    for (k, op) in block_ops().iter().enumerate() {
        let mut theta = op_angle(op, params).unwrap_or(0.0);
        if let Some((j, delta)) = shift {
            if j == k {
                theta += delta;
            }
        }
        apply_op(&mut state, op, theta);
    }
    Ok(state)
}

fn check_inputs(x: &[f64], upstream: [f64; 2]) -> Result<()> {
    if x.len() != INPUT_LEN {
        return Err(shape(format!("QCNN input must have {INPUT_LEN} values, got {}", x.len())));
    }
    if upstream.iter().any(|u| !u.is_finite()) {
        return Err(Error::Numerics("non-finite upstream gradient".into()));
    }
    Ok(())
}

fn weighted_readout(state: &StateVector, upstream: [f64; 2]) -> f64 {
    let (p0, p1) = state.marginal_probabilities(READOUT_QUBIT).expect("readout qubit in range");
    upstream[0] * p0 + upstream[1] * p1
}

/// Block output computed from the elementary gate list instead of the 4x4 layer unitaries.
pub fn qcnn_forward_elementary(x: &[f64], params: &QcnnParams) -> Result<(f64, f64)> {
    if x.len() != INPUT_LEN {
        return Err(shape(format!("QCNN input must have {INPUT_LEN} values, got {}", x.len())));
    }
    run_ops(x, &params.to_vec(), None)?.marginal_probabilities(READOUT_QUBIT)
}

/// Gradient of `upstream[0] * p0 + upstream[1] * p1` with respect to all 34 angles,
/// by adjoint (reverse-mode) propagation through the statevector.
pub fn qcnn_gradient(x: &[f64], params: &QcnnParams, upstream: [f64; 2]) -> Result<Vec<f64>> {
    check_inputs(x, upstream)?;
    let angles = params.to_vec();
    let mut grad = vec![0.0; BLOCK_PARAMS];
    if upstream == [0.0, 0.0] {
        return Ok(grad);
    }
    let mut psi = run_ops(x, &angles, None)?;

    // lambda = O psi, with O = diag(upstream[bit of readout qubit]).
    let mask = 1usize << (NUM_QUBITS - 1 - READOUT_QUBIT);
    let lam_amps: Vec<C64> = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| a * if i & mask == 0 { upstream[0] } else { upstream[1] })
        .collect();
    let mut lam = StateVector::from_amplitudes(lam_amps)?;

    for op in block_ops().iter().rev() {
        let theta = op_angle(op, &angles).unwrap_or(0.0);
        apply_op_inverse(&mut psi, op, theta);
        match *op {
            Op::Rot { axis, qubit, angle: Angle::Param(i) } => {
                let mut d = psi.clone();
                d.apply_matrix_1q(&rotation_derivative(axis, theta), qubit);
                grad[i] += 2.0 * lam.inner(&d).re;
            }
            Op::CRot { axis, control, target, param } => {
                let mut d = psi.clone();
                d.project_control_one(control);
                d.apply_matrix_controlled(&rotation_derivative(axis, theta), control, target);
                grad[param] += 2.0 * lam.inner(&d).re;
            }
            _ => {}
        }
        apply_op_inverse(&mut lam, op, theta);
    }
    Ok(grad)
}

/// Same gradient by parameter shifts, one occurrence of each shared angle at a time.
///
/// Plain rotations use the two-term rule at `±pi/2`. Controlled rotations have a
/// generator with eigenvalues `{-1/2, 0, 1/2}` and need the four-term rule at
/// `±pi/2` and `±3pi/2`.
pub fn qcnn_gradient_parameter_shift(
    x: &[f64],
    params: &QcnnParams,
    upstream: [f64; 2],
) -> Result<Vec<f64>> {
    check_inputs(x, upstream)?;
    let angles = params.to_vec();
    let f = |k: usize, delta: f64| -> Result<f64> {
        Ok(weighted_readout(&run_ops(x, &angles, Some((k, delta)))?, upstream))
    };
    let d_plus = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
    let d_minus = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
    let mut grad = vec![0.0; BLOCK_PARAMS];
    for (k, op) in block_ops().iter().enumerate() {
        match *op {
            Op::Rot { angle: Angle::Param(i), .. } => {
                grad[i] += (f(k, FRAC_PI_2)? - f(k, -FRAC_PI_2)?) / 2.0;
            }
            Op::CRot { param, .. } => {
                let near = f(k, FRAC_PI_2)? - f(k, -FRAC_PI_2)?;
                let far = f(k, 3.0 * FRAC_PI_2)? - f(k, -3.0 * FRAC_PI_2)?;
                grad[param] += d_plus * near - d_minus * far;
            }
            _ => {}
        }
    }
    Ok(grad)
}
