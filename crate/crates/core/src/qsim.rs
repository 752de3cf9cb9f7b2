//! Dense statevector simulation for small registers.
//!
//! Basis ordering: qubit 0 is the most significant bit of the amplitude
//! index. For an `n`-qubit register, qubit `q` corresponds to bit `n - 1 - q`,
//! so `|q0 q1 ... q(n-1)>` lives at index `q0 * 2^(n-1) + ... + q(n-1)`.
//! Two-qubit gates use the same rule inside the pair: for `apply_2q(g, a, b)`
//! the 4x4 matrix is indexed by `2 * bit(a) + bit(b)`.

use std::f64::consts::FRAC_PI_2;
use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{shape, Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Largest register accepted by [`StateVector`].
pub const MAX_QUBITS: usize = 10;

/// Bloch-sphere rotation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Single-qubit operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate2(pub [[C64; 2]; 2]);

/// Two-qubit operator, indexed by `2 * bit(first) + bit(second)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate4(pub [[C64; 4]; 4]);

impl Gate2 {
    pub fn identity() -> Self {
        Gate2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn pauli(axis: Axis) -> Self {
        let i = C64::i();
        match axis {
            Axis::X => Gate2([[ZERO, ONE], [ONE, ZERO]]),
            Axis::Y => Gate2([[ZERO, -i], [i, ZERO]]),
            Axis::Z => Gate2([[ONE, ZERO], [ZERO, -ONE]]),
        }
    }

    pub fn dagger(&self) -> Self {
        let m = &self.0;
        Gate2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.0;
        out.iter_mut().flatten().for_each(|v| *v *= s);
        Gate2(out)
    }

    /// `max |G^dagger G - I|` over all entries.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.dagger() * *self;
        max_identity_deviation(p.0.iter().map(|r| r.as_slice()))
    }
}

impl Mul for Gate2 {
    type Output = Gate2;

    fn mul(self, rhs: Gate2) -> Gate2 {
        let mut out = [[ZERO; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.0[r][0] * rhs.0[0][c] + self.0[r][1] * rhs.0[1][c];
            }
        }
        Gate2(out)
    }
}

impl Gate4 {
    pub fn identity() -> Self {
        let mut m = [[ZERO; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = ONE;
        }
        Gate4(m)
    }

    /// `first ⊗ second`, with `first` acting on the more significant qubit of the pair.
    pub fn kron(first: &Gate2, second: &Gate2) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                m[r][c] = first.0[r >> 1][c >> 1] * second.0[r & 1][c & 1];
            }
        }
        Gate4(m)
    }

    /// CNOT with the first qubit of the pair as control.
    pub fn cnot_first_controls() -> Self {
        Self::permutation([0, 1, 3, 2])
    }

    /// CNOT with the second qubit of the pair as control.
    pub fn cnot_second_controls() -> Self {
        Self::permutation([0, 3, 2, 1])
    }

    pub fn swap() -> Self {
        Self::permutation([0, 2, 1, 3])
    }

    /// Matrix sending basis state `c` to `perm[c]`.
    fn permutation(perm: [usize; 4]) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for (c, &r) in perm.iter().enumerate() {
            m[r][c] = ONE;
        }
        Gate4(m)
    }

    pub fn dagger(&self) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                m[r][c] = self.0[c][r].conj();
            }
        }
        Gate4(m)
    }

    pub fn unitarity_error(&self) -> f64 {
        let p = self.dagger() * *self;
        max_identity_deviation(p.0.iter().map(|r| r.as_slice()))
    }

    /// Largest entrywise distance to `other`.
    pub fn max_abs_diff(&self, other: &Gate4) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Mul for Gate4 {
    type Output = Gate4;

    fn mul(self, rhs: Gate4) -> Gate4 {
        let mut out = [[ZERO; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..4).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        Gate4(out)
    }
}

fn max_identity_deviation<'a>(rows: impl Iterator<Item = &'a [C64]>) -> f64 {
    rows.enumerate()
        .flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .map(move |(c, v)| (v - if r == c { ONE } else { ZERO }).norm())
        })
        .fold(0.0, f64::max)
}

/// `exp(-i theta sigma_axis / 2)`.
pub fn rotation(axis: Axis, theta: f64) -> Gate2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let cc = C64::new(c, 0.0);
    match axis {
        Axis::X => Gate2([[cc, C64::new(0.0, -s)], [C64::new(0.0, -s), cc]]),
        Axis::Y => Gate2([[cc, C64::new(-s, 0.0)], [C64::new(s, 0.0), cc]]),
        Axis::Z => Gate2([[C64::new(c, -s), ZERO], [ZERO, C64::new(c, s)]]),
    }
}

/// `d/dtheta exp(-i theta sigma / 2) = -i/2 sigma exp(-i theta sigma / 2)`.
pub(crate) fn rotation_derivative(axis: Axis, theta: f64) -> Gate2 {
    Gate2::pauli(axis).scale(C64::new(0.0, -0.5)) * rotation(axis, theta)
}

/// General single-qubit gate `Rz(phi) Rx(-pi/2) Rz(theta) Rx(pi/2) Rz(lambda)`,
/// built as the literal product of its five factors.
pub fn u3(theta: f64, phi: f64, lambda: f64) -> Gate2 {
    rotation(Axis::Z, phi)
        * rotation(Axis::X, -FRAC_PI_2)
        * rotation(Axis::Z, theta)
        * rotation(Axis::X, FRAC_PI_2)
        * rotation(Axis::Z, lambda)
}

/// Pure state of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_register(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(shape(format!("basis index {index} out of range for {num_qubits} qubits")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(StateVector { num_qubits, amps })
    }

    /// Wraps raw amplitudes without renormalizing them.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let num_qubits = register_size(amps.len())?;
        Ok(StateVector { num_qubits, amps })
    }

    /// Loads `x / ||x||` into the amplitudes; `x[i]` becomes the amplitude of `|i>`.
    pub fn amplitude_encode(x: &[f64]) -> Result<Self> {
        let num_qubits = register_size(x.len())?;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Numerics("non-finite value in encoded segment".into()));
        }
        if norm == 0.0 {
            return Err(Error::Encoding(format!(
                "segment of {} points has zero norm",
                x.len()
            )));
        }
        let amps = x.iter().map(|v| C64::new(v / norm, 0.0)).collect();
        Ok(StateVector { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Complex inner product `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(shape(format!(
                "qubit {qubit} out of range for {}-qubit register",
                self.num_qubits
            )));
        }
        Ok(())
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Err(shape(format!("two-qubit operation needs distinct qubits, got {a} twice")));
        }
        Ok(())
    }

    pub fn apply_1q(&mut self, gate: &Gate2, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_matrix_1q(gate, qubit);
        Ok(())
    }

    /// Applies any 2x2 matrix; no unitarity requirement. Indices must be valid.
    pub(crate) fn apply_matrix_1q(&mut self, m: &Gate2, qubit: usize) {
        let mask = self.mask(qubit);
        let g = &m.0;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | mask]);
                self.amps[i] = g[0][0] * a0 + g[0][1] * a1;
                self.amps[i | mask] = g[1][0] * a0 + g[1][1] * a1;
            }
        }
    }

    pub fn apply_2q(&mut self, gate: &Gate4, qubit_a: usize, qubit_b: usize) -> Result<()> {
        self.check_pair(qubit_a, qubit_b)?;
        let (ma, mb) = (self.mask(qubit_a), self.mask(qubit_b));
        let g = &gate.0;
        for i in 0..self.amps.len() {
            if i & (ma | mb) == 0 {
                let idx = [i, i | mb, i | ma, i | ma | mb];
                let v = idx.map(|k| self.amps[k]);
                for (r, &k) in idx.iter().enumerate() {
                    self.amps[k] = g[r][0] * v[0] + g[r][1] * v[1] + g[r][2] * v[2] + g[r][3] * v[3];
                }
            }
        }
        Ok(())
    }

    /// Applies `m` to `target` on the branch where `control` is 1.
    pub(crate) fn apply_matrix_controlled(&mut self, m: &Gate2, control: usize, target: usize) {
        let (mc, mt) = (self.mask(control), self.mask(target));
        let g = &m.0;
        for i in 0..self.amps.len() {
            if i & mc != 0 && i & mt == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | mt]);
                self.amps[i] = g[0][0] * a0 + g[0][1] * a1;
                self.amps[i | mt] = g[1][0] * a0 + g[1][1] * a1;
            }
        }
    }

    /// Zeroes every amplitude where `control` is 0. Used for derivatives of
    /// controlled gates, whose control-0 block is constant.
    pub(crate) fn project_control_one(&mut self, control: usize) {
        let mc = self.mask(control);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mc == 0 {
                *a = ZERO;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_pair(control, target)?;
        self.apply_matrix_controlled(&Gate2::pauli(Axis::X), control, target);
        Ok(())
    }

    pub fn apply_controlled_rotation(
        &mut self,
        axis: Axis,
        theta: f64,
        control: usize,
        target: usize,
    ) -> Result<()> {
        self.check_pair(control, target)?;
        self.apply_matrix_controlled(&rotation(axis, theta), control, target);
        Ok(())
    }

    /// `(P(qubit = 0), P(qubit = 1))`.
    pub fn marginal_probabilities(&self, qubit: usize) -> Result<(f64, f64)> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        let (mut p0, mut p1) = (0.0, 0.0);
        for (i, a) in self.amps.iter().enumerate() {
            if i & mask == 0 {
                p0 += a.norm_sqr();
            } else {
                p1 += a.norm_sqr();
            }
        }
        Ok((p0, p1))
    }

    /// Probability of every computational basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn check_register(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        return Err(shape(format!("register of {num_qubits} qubits not supported (1..={MAX_QUBITS})")));
    }
    Ok(())
}

fn register_size(len: usize) -> Result<usize> {
    if !len.is_power_of_two() {
        return Err(shape(format!("length {len} is not a power of two")));
    }
    let n = len.trailing_zeros() as usize;
    check_register(n)?;
    Ok(n)
}
