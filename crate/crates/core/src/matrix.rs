//! Dense square complex matrices sized for small qubit counts.
//!
//! Qubit `q` of an `n`-qubit register maps to bit `n - 1 - q` of the basis
//! index, so qubit 0 is the most significant and `U ⊗ I` acts on the leading
//! qubits.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use rand::Rng;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major square complex matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<Complex64>,
}

/// Unitaries share the dense representation; unitarity is checked, not typed.
pub type UnitaryMatrix = Matrix;

/// 2x2 block used when applying single-qubit gates.
pub type Gate2 = [[Complex64; 2]; 2];

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries. Panics if `data` is not square.
    pub fn from_rows(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim, "matrix data must be dim*dim");
        Matrix { dim, data }
    }

    pub fn from_gate2(g: &Gate2) -> Self {
        Matrix::from_rows(2, vec![g[0][0], g[0][1], g[1][0], g[1][1]])
    }

    pub fn diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn num_qubits(&self) -> Option<usize> {
        if self.dim.is_power_of_two() {
            Some(self.dim.trailing_zeros() as usize)
        } else {
            None
        }
    }

    pub fn adjoint(&self) -> Matrix {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out.data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// `Tr(self† · other)` without forming the product.
    pub fn inner(&self, other: &Matrix) -> Complex64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, s: Complex64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn kron(&self, other: &Matrix) -> Matrix {
        let (a, b) = (self.dim, other.dim);
        let n = a * b;
        let mut out = Self::zeros(n);
        for r1 in 0..a {
            for c1 in 0..a {
                let s = self.data[r1 * a + c1];
                if s == ZERO {
                    continue;
                }
                for r2 in 0..b {
                    for c2 in 0..b {
                        out.data[(r1 * b + r2) * n + c1 * b + c2] = s * other.data[r2 * b + c2];
                    }
                }
            }
        }
        out
    }

    /// Largest entry magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Squared Frobenius norm of `self - other`.
    pub fn frobenius_diff_sq(&self, other: &Matrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    }

    /// `‖U†U − I‖_max`.
    pub fn unitarity_error(&self) -> f64 {
        let prod = &self.adjoint() * self;
        prod.max_abs_diff(&Matrix::identity(self.dim))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    /// Left-multiplies by a single-qubit gate embedded on `qubit` of `n` qubits.
    pub fn apply_1q_left(&mut self, g: &Gate2, qubit: usize, num_qubits: usize) {
        let n = self.dim;
        let mask = 1usize << (num_qubits - 1 - qubit);
        for i in 0..n {
            if i & mask != 0 {
                continue;
            }
            let j = i | mask;
            for c in 0..n {
                let a = self.data[i * n + c];
                let b = self.data[j * n + c];
                self.data[i * n + c] = g[0][0] * a + g[0][1] * b;
                self.data[j * n + c] = g[1][0] * a + g[1][1] * b;
            }
        }
    }

    /// Right-multiplies by a single-qubit gate embedded on `qubit`.
    pub fn apply_1q_right(&mut self, g: &Gate2, qubit: usize, num_qubits: usize) {
        let n = self.dim;
        let mask = 1usize << (num_qubits - 1 - qubit);
        for r in 0..n {
            let row = &mut self.data[r * n..(r + 1) * n];
            for i in 0..n {
                if i & mask != 0 {
                    continue;
                }
                let j = i | mask;
                let a = row[i];
                let b = row[j];
                row[i] = a * g[0][0] + b * g[1][0];
                row[j] = a * g[0][1] + b * g[1][1];
            }
        }
    }

    /// Left-multiplies by CX(control, target): a row permutation.
    pub fn apply_cx_left(&mut self, control: usize, target: usize, num_qubits: usize) {
        let n = self.dim;
        let cm = 1usize << (num_qubits - 1 - control);
        let tm = 1usize << (num_qubits - 1 - target);
        for i in 0..n {
            if i & cm != 0 && i & tm == 0 {
                let j = i | tm;
                for c in 0..n {
                    self.data.swap(i * n + c, j * n + c);
                }
            }
        }
    }

    /// Right-multiplies by CX(control, target): a column permutation.
    pub fn apply_cx_right(&mut self, control: usize, target: usize, num_qubits: usize) {
        let n = self.dim;
        let cm = 1usize << (num_qubits - 1 - control);
        let tm = 1usize << (num_qubits - 1 - target);
        for r in 0..n {
            let row = &mut self.data[r * n..(r + 1) * n];
            for i in 0..n {
                if i & cm != 0 && i & tm == 0 {
                    row.swap(i, i | tm);
                }
            }
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * rhs.data[k * n + c];
                }
            }
        }
        out
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let v = self[(r, c)];
                    format!("{:+.4}{:+.4}i", v.re, v.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Haar-random unitary from Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Matrix {
    let gauss = |rng: &mut R| {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut cols: Vec<Vec<Complex64>> = (0..dim)
        .map(|_| (0..dim).map(|_| Complex64::new(gauss(rng), gauss(rng))).collect())
        .collect();
    for k in 0..dim {
        for j in 0..k {
            let proj: Complex64 = (0..dim).map(|i| cols[j][i].conj() * cols[k][i]).sum();
            let (done, rest) = cols.split_at_mut(k);
            for (x, b) in rest[0].iter_mut().zip(&done[j]) {
                *x -= proj * b;
            }
        }
        let norm = cols[k].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for v in cols[k].iter_mut() {
            *v /= norm;
        }
    }
    let mut m = Matrix::zeros(dim);
    for (c, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

/// Random unitary within roughly `scale` of the identity: `V diag(e^{iφ}) V†`.
pub fn random_near_identity<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> Matrix {
    let v = random_unitary(rng, dim);
    let phases: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::from_polar(1.0, rng.gen_range(-scale..=scale)))
        .collect();
    &(&v * &Matrix::diagonal(&phases)) * &v.adjoint()
}
