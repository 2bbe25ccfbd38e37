//! Benchmark circuits: Toffoli, small QFTs and a planted controlled-phase
//! ladder for the partitioned flow.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::circuit::{Circuit, ParamVector};
use crate::matrix::{Matrix, UnitaryMatrix, ONE};

/// Appends a controlled phase `diag(1, 1, 1, e^{iλ})` on `(a, b)` as three
/// rotations and two CX; returns the three angles in slot order.
pub fn push_cphase(c: &mut Circuit, params: &mut ParamVector, a: usize, b: usize, lambda: f64) {
    c.rz(a);
    params.push(lambda / 2.0);
    c.cx(a, b);
    c.rz(b);
    params.push(-lambda / 2.0);
    c.cx(a, b);
    c.rz(b);
    params.push(lambda / 2.0);
}

/// Seven-rotation Toffoli on controls 0, 1 and target 2, with every T/T†
/// replaced by `Rz(±π/4)`.
pub fn toffoli_ansatz() -> (Circuit, ParamVector) {
    let q = PI / 4.0;
    let mut c = Circuit::new(3);
    let mut p = Vec::new();
    let mut rz = |c: &mut Circuit, qubit: usize, angle: f64| {
        c.rz(qubit);
        p.push(angle);
    };
    c.h(2);
    c.cx(1, 2);
    rz(&mut c, 2, -q);
    c.cx(0, 2);
    rz(&mut c, 2, q);
    c.cx(1, 2);
    rz(&mut c, 2, -q);
    c.cx(0, 2);
    rz(&mut c, 1, q);
    rz(&mut c, 2, q);
    c.h(2);
    c.cx(0, 1);
    rz(&mut c, 0, q);
    rz(&mut c, 1, -q);
    c.cx(0, 1);
    (c, p)
}

pub fn toffoli_unitary() -> UnitaryMatrix {
    let mut m = Matrix::identity(8);
    m[(6, 6)] = Complex64::new(0.0, 0.0);
    m[(7, 7)] = Complex64::new(0.0, 0.0);
    m[(6, 7)] = ONE;
    m[(7, 6)] = ONE;
    m
}

/// Textbook QFT on `n` qubits: Hadamard and controlled-phase ladder per
/// qubit, then the reversing swaps as three CX each.
pub fn qft(n: usize) -> (Circuit, ParamVector) {
    let mut c = Circuit::new(n);
    let mut p = Vec::new();
    for j in 0..n {
        c.h(j);
        for k in j + 1..n {
            let lambda = PI / f64::from(1u32 << (k - j));
            push_cphase(&mut c, &mut p, k, j, lambda);
        }
    }
    for j in 0..n / 2 {
        let (a, b) = (j, n - 1 - j);
        c.cx(a, b);
        c.cx(b, a);
        c.cx(a, b);
    }
    (c, p)
}

/// Exact QFT matrix in the big-endian basis.
pub fn qft_unitary(n: usize) -> UnitaryMatrix {
    let dim = 1usize << n;
    let norm = 1.0 / (dim as f64).sqrt();
    let mut m = Matrix::zeros(dim);
    for r in 0..dim {
        for col in 0..dim {
            let angle = 2.0 * PI * ((r * col) % dim) as f64 / dim as f64;
            m[(r, col)] = Complex64::from_polar(norm, angle);
        }
    }
    m
}

/// A generated ladder instance with knowledge of which rotations were planted
/// near multiples of π/4.
#[derive(Debug, Clone)]
pub struct PlantedLadder {
    pub circuit: Circuit,
    pub params: ParamVector,
    pub planted: Vec<bool>,
}

impl PlantedLadder {
    pub fn planted_count(&self) -> usize {
        self.planted.iter().filter(|&&p| p).count()
    }
}

/// Controlled-phase units on neighbouring qubits, each followed by Hadamards
/// on both qubits, for `layers` sweeps over `n` qubits. Each rotation is
/// independently planted at `kπ/4 ± offset` or drawn at least 0.1 away from
/// every multiple of π/4.
pub fn planted_ladder<R: Rng>(rng: &mut R, n: usize, layers: usize, offset: f64) -> PlantedLadder {
    assert!(n >= 2, "ladder needs two qubits");
    let mut c = Circuit::new(n);
    let mut params = Vec::new();
    let mut planted = Vec::new();
    for _ in 0..layers {
        for a in 0..n - 1 {
            let b = a + 1;
            let mut angles = [0.0; 3];
            for angle in &mut angles {
                let plant = rng.gen_bool(0.5);
                *angle = if plant {
                    let k = rng.gen_range(0..8) as f64;
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    k * PI / 4.0 + sign * offset
                } else {
                    let k = rng.gen_range(0..8) as f64;
                    k * PI / 4.0 + rng.gen_range(0.1..PI / 4.0 - 0.1)
                };
                planted.push(plant);
            }
            c.rz(a);
            c.cx(a, b);
            c.rz(b);
            c.cx(a, b);
            c.rz(b);
            params.extend_from_slice(&angles);
            c.h(a);
            c.h(b);
        }
    }
    PlantedLadder { circuit: c, params, planted }
}
