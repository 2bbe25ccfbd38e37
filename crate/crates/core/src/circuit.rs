//! Circuit IR over {Clifford, T, Rz} with parameterized unitary construction
//! and analytic parameter gradients.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{Gate2, Matrix, UnitaryMatrix, ONE, ZERO};

/// Rz angles, one per parameter slot, in radians.
pub type ParamVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    CX,
    /// Parameterized rotation reading slot `param_index` of the parameter vector.
    Rz(usize),
    /// Rotation frozen at a fixed angle, e.g. a snapped angle with no
    /// Clifford+T word (odd multiples of π/8). Emitted as `u1`.
    FixedRz(f64),
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::CX => 2,
            _ => 1,
        }
    }

    pub fn is_t(&self) -> bool {
        matches!(self, GateKind::T | GateKind::Tdg)
    }

    /// Fixed 2x2 matrix of a single-qubit gate; `theta` is used by `Rz`.
    pub fn matrix2(&self, theta: f64) -> Option<Gate2> {
        let i = Complex64::i();
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let m = match self {
            GateKind::H => [[h, h], [h, -h]],
            GateKind::X => [[ZERO, ONE], [ONE, ZERO]],
            GateKind::Y => [[ZERO, -i], [i, ZERO]],
            GateKind::Z => [[ONE, ZERO], [ZERO, -ONE]],
            GateKind::S => [[ONE, ZERO], [ZERO, i]],
            GateKind::Sdg => [[ONE, ZERO], [ZERO, -i]],
            GateKind::T => [[ONE, ZERO], [ZERO, Complex64::from_polar(1.0, FRAC_PI_4)]],
            GateKind::Tdg => [[ONE, ZERO], [ZERO, Complex64::from_polar(1.0, -FRAC_PI_4)]],
            GateKind::Rz(_) => rz2(theta),
            GateKind::FixedRz(a) => rz2(*a),
            GateKind::CX => return None,
        };
        Some(m)
    }
}

fn rz2(theta: f64) -> Gate2 {
    [
        [Complex64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

/// `∂Rz/∂θ` as a 2x2 block.
fn rz2_derivative(theta: f64) -> Gate2 {
    let half_i = Complex64::new(0.0, 0.5);
    [
        [-half_i * Complex64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, half_i * Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

/// `diag(e^{−iθ/2}, e^{+iθ/2})`.
pub fn rz_matrix(theta: f64) -> Result<UnitaryMatrix> {
    if !theta.is_finite() {
        return Err(Error::input(format!("non-finite rotation angle {theta}")));
    }
    Ok(Matrix::from_gate2(&rz2(theta)))
}

/// A gate placed on specific qubits. For CX, `qubits = [control, target]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[usize]) -> Self {
        Gate { kind, qubits: qubits.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
    num_params: usize,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        assert!(num_qubits >= 1, "a circuit needs at least one qubit");
        Circuit { num_qubits, gates: Vec::new(), num_params: 0 }
    }

    /// Validates a gate list. Rz slots must be exactly `0..M`, each used once.
    pub fn from_gates(num_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::input("circuit must have at least one qubit"));
        }
        let mut seen = Vec::new();
        for (idx, g) in gates.iter().enumerate() {
            check_placement(num_qubits, g).map_err(|e| Error::input(format!("gate {idx}: {e}")))?;
            if let GateKind::Rz(p) = g.kind {
                if p >= seen.len() {
                    seen.resize(p + 1, false);
                }
                if seen[p] {
                    return Err(Error::input(format!("parameter slot {p} used twice")));
                }
                seen[p] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::input(format!("parameter slot {missing} unused")));
        }
        Ok(Circuit { num_qubits, num_params: seen.len(), gates })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    /// Appends a fixed gate. Panics on invalid placement or on `Rz`; use
    /// [`Circuit::rz`] for parameterized rotations.
    pub fn push(&mut self, kind: GateKind, qubits: &[usize]) -> &mut Self {
        assert!(!matches!(kind, GateKind::Rz(_)), "use Circuit::rz for parameterized gates");
        let g = Gate::new(kind, qubits);
        if let Err(e) = check_placement(self.num_qubits, &g) {
            panic!("{e}");
        }
        self.gates.push(g);
        self
    }

    /// Appends an Rz on `qubit` reading the next free parameter slot; returns the slot.
    pub fn rz(&mut self, qubit: usize) -> usize {
        let p = self.num_params;
        let g = Gate::new(GateKind::Rz(p), &[qubit]);
        if let Err(e) = check_placement(self.num_qubits, &g) {
            panic!("{e}");
        }
        self.gates.push(g);
        self.num_params += 1;
        p
    }

    pub fn h(&mut self, q: usize) -> &mut Self {
        self.push(GateKind::H, &[q])
    }

    pub fn cx(&mut self, c: usize, t: usize) -> &mut Self {
        self.push(GateKind::CX, &[c, t])
    }

    /// Qubit of each parameter slot, indexed by slot.
    pub fn param_qubits(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_params];
        for g in &self.gates {
            if let GateKind::Rz(p) = g.kind {
                out[p] = g.qubits[0];
            }
        }
        out
    }

    pub fn t_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind.is_t()).count()
    }

    pub fn rz_count(&self) -> usize {
        self.num_params
    }

    pub fn fixed_rz_count(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(g.kind, GateKind::FixedRz(_)))
            .count()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::DimensionMismatch { expected: self.num_params, found: params.len() });
        }
        if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::input(format!("non-finite parameter {bad}")));
        }
        Ok(())
    }

    fn apply_left(&self, m: &mut Matrix, g: &Gate, params: &[f64]) {
        match g.kind {
            GateKind::CX => m.apply_cx_left(g.qubits[0], g.qubits[1], self.num_qubits),
            GateKind::Rz(p) => m.apply_1q_left(&rz2(params[p]), g.qubits[0], self.num_qubits),
            k => m.apply_1q_left(&k.matrix2(0.0).unwrap(), g.qubits[0], self.num_qubits),
        }
    }

    fn apply_right(&self, m: &mut Matrix, g: &Gate, params: &[f64]) {
        match g.kind {
            GateKind::CX => m.apply_cx_right(g.qubits[0], g.qubits[1], self.num_qubits),
            GateKind::Rz(p) => m.apply_1q_right(&rz2(params[p]), g.qubits[0], self.num_qubits),
            k => m.apply_1q_right(&k.matrix2(0.0).unwrap(), g.qubits[0], self.num_qubits),
        }
    }

    /// `U(θ) = G_{L−1} ⋯ G_1 G_0`; gate 0 acts first.
    pub fn build_unitary(&self, params: &[f64]) -> Result<UnitaryMatrix> {
        self.check_params(params)?;
        Ok(self.unitary_unchecked(params))
    }

    pub(crate) fn unitary_unchecked(&self, params: &[f64]) -> UnitaryMatrix {
        let mut u = Matrix::identity(self.dim());
        for g in &self.gates {
            self.apply_left(&mut u, g, params);
        }
        u
    }

    /// `∂U/∂θ_i` for every parameter slot.
    pub fn build_gradient(&self, params: &[f64]) -> Result<Vec<Matrix>> {
        self.check_params(params)?;
        let mut grads = vec![Matrix::zeros(0); self.num_params];
        let mut prefix = Matrix::identity(self.dim());
        for (k, g) in self.gates.iter().enumerate() {
            if let GateKind::Rz(p) = g.kind {
                let mut d = prefix.clone();
                d.apply_1q_left(&rz2_derivative(params[p]), g.qubits[0], self.num_qubits);
                for rest in &self.gates[k + 1..] {
                    self.apply_left(&mut d, rest, params);
                }
                grads[p] = d;
            }
            self.apply_left(&mut prefix, g, params);
        }
        Ok(grads)
    }

    /// Returns `U(θ)` together with `Tr(V†U)` and `Tr(V† ∂U/∂θ_i)` for each
    /// slot, using one forward and one backward sweep.
    pub fn overlap_gradient(
        &self,
        target: &Matrix,
        params: &[f64],
    ) -> Result<(UnitaryMatrix, Complex64, Vec<Complex64>)> {
        self.check_params(params)?;
        if target.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: target.dim() });
        }
        Ok(self.overlap_gradient_unchecked(target, params))
    }

    pub(crate) fn overlap_gradient_unchecked(
        &self,
        target: &Matrix,
        params: &[f64],
    ) -> (UnitaryMatrix, Complex64, Vec<Complex64>) {
        let dim = self.dim();
        let mut prefixes: Vec<Matrix> = Vec::with_capacity(self.num_params);
        let mut slot_of_prefix = Vec::with_capacity(self.num_params);
        let mut u = Matrix::identity(dim);
        for g in &self.gates {
            if let GateKind::Rz(p) = g.kind {
                prefixes.push(u.clone());
                slot_of_prefix.push(p);
            }
            self.apply_left(&mut u, g, params);
        }
        let overlap = target.inner(&u);

        let mut grads = vec![ZERO; self.num_params];
        let mut w = target.adjoint();
        let mut next_prefix = prefixes.len();
        for g in self.gates.iter().rev() {
            self.apply_right(&mut w, g, params);
            if let GateKind::Rz(_) = g.kind {
                next_prefix -= 1;
                let p = slot_of_prefix[next_prefix];
                let prefix = &prefixes[next_prefix];
                let mask = 1usize << (self.num_qubits - 1 - g.qubits[0]);
                let (pd, wd) = (prefix.as_slice(), w.as_slice());
                let mut acc = ZERO;
                for s in 0..dim {
                    let mut diag = ZERO;
                    for r in 0..dim {
                        diag += pd[s * dim + r] * wd[r * dim + s];
                    }
                    if s & mask == 0 {
                        acc -= diag;
                    } else {
                        acc += diag;
                    }
                }
                grads[p] = acc * Complex64::new(0.0, 0.5);
            }
        }
        (u, overlap, grads)
    }
}

fn check_placement(num_qubits: usize, g: &Gate) -> std::result::Result<(), String> {
    if g.qubits.len() != g.kind.arity() {
        return Err(format!(
            "{:?} expects {} qubit(s), got {}",
            g.kind,
            g.kind.arity(),
            g.qubits.len()
        ));
    }
    if let Some(q) = g.qubits.iter().find(|&&q| q >= num_qubits) {
        return Err(format!("qubit {q} out of range for {num_qubits} qubit(s)"));
    }
    if g.qubits.len() == 2 && g.qubits[0] == g.qubits[1] {
        return Err("two-qubit gate needs distinct qubits".to_string());
    }
    if let GateKind::FixedRz(a) = g.kind {
        if !a.is_finite() {
            return Err(format!("non-finite fixed angle {a}"));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cost::distance;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn fixed(kind: GateKind) -> Matrix {
        Matrix::from_gate2(&kind.matrix2(0.0).unwrap())
    }

    #[test]
    fn rz_zero_is_identity() {
        assert_eq!(rz_matrix(0.0).unwrap(), Matrix::identity(2));
        assert!(rz_matrix(f64::NAN).is_err());
        assert!(rz_matrix(f64::INFINITY).is_err());
    }

    #[test]
    fn rz_quarter_turn_is_t_up_to_phase() {
        assert!(distance(&rz_matrix(PI / 4.0).unwrap(), &fixed(GateKind::T)).unwrap() < 1e-15);
        assert!(distance(&rz_matrix(PI / 2.0).unwrap(), &fixed(GateKind::S)).unwrap() < 1e-15);
        assert!(distance(&rz_matrix(PI).unwrap(), &fixed(GateKind::Z)).unwrap() < 1e-15);
    }

    #[test]
    fn rz_full_turn_is_minus_identity() {
        let m = rz_matrix(2.0 * PI).unwrap();
        assert!(m.max_abs_diff(&Matrix::identity(2).scale(-ONE)) < 1e-15);
        assert!(distance(&m, &Matrix::identity(2)).unwrap() < 1e-15);
    }

    #[test]
    fn empty_circuit_builds_identity() {
        let c = Circuit::new(2);
        assert_eq!(c.build_unitary(&[]).unwrap(), Matrix::identity(4));
        assert!(c.build_gradient(&[]).unwrap().is_empty());
    }

    #[test]
    fn cx_is_the_textbook_permutation() {
        let mut c = Circuit::new(2);
        c.cx(0, 1);
        let u = c.build_unitary(&[]).unwrap();
        let mut expected = Matrix::zeros(4);
        for (r, col) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            expected[(r, col)] = ONE;
        }
        assert_eq!(u, expected);
    }

    #[test]
    fn consecutive_rz_compose() {
        let mut two = Circuit::new(1);
        two.rz(0);
        two.rz(0);
        let mut one = Circuit::new(1);
        one.rz(0);
        let (a, b) = (0.37, -1.91);
        let u2 = two.build_unitary(&[a, b]).unwrap();
        let u1 = one.build_unitary(&[a + b]).unwrap();
        assert!(distance(&u1, &u2).unwrap() < 1e-15);
    }

    #[test]
    fn single_rz_derivative_at_zero() {
        let mut c = Circuit::new(1);
        c.rz(0);
        let g = c.build_gradient(&[0.0]).unwrap();
        let half_i = Complex64::new(0.0, 0.5);
        let expected = Matrix::diagonal(&[-half_i, half_i]);
        assert!(g[0].max_abs_diff(&expected) < 1e-16);
    }

    #[test]
    fn param_length_mismatch_is_rejected() {
        let mut c = Circuit::new(1);
        c.rz(0);
        assert!(matches!(c.build_unitary(&[]), Err(Error::DimensionMismatch { .. })));
        assert!(c.build_gradient(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn from_gates_validates_slots_and_qubits() {
        let ok = vec![Gate::new(GateKind::Rz(1), &[0]), Gate::new(GateKind::Rz(0), &[1])];
        assert_eq!(Circuit::from_gates(2, ok).unwrap().num_params(), 2);
        let dup = vec![Gate::new(GateKind::Rz(0), &[0]), Gate::new(GateKind::Rz(0), &[1])];
        assert!(Circuit::from_gates(2, dup).is_err());
        let gap = vec![Gate::new(GateKind::Rz(1), &[0])];
        assert!(Circuit::from_gates(2, gap).is_err());
        assert!(Circuit::from_gates(2, vec![Gate::new(GateKind::CX, &[1, 1])]).is_err());
        assert!(Circuit::from_gates(2, vec![Gate::new(GateKind::H, &[2])]).is_err());
        assert!(Circuit::from_gates(2, vec![Gate::new(GateKind::CX, &[0])]).is_err());
    }

    pub(crate) fn random_circuit(rng: &mut ChaCha8Rng, n: usize, len: usize) -> (Circuit, Vec<f64>) {
        let kinds = [
            GateKind::H,
            GateKind::X,
            GateKind::Y,
            GateKind::Z,
            GateKind::S,
            GateKind::Sdg,
            GateKind::T,
            GateKind::Tdg,
        ];
        let mut c = Circuit::new(n);
        for _ in 0..len {
            let roll = rng.gen_range(0..10);
            if roll < 4 {
                c.rz(rng.gen_range(0..n));
            } else if roll < 6 && n > 1 {
                let a = rng.gen_range(0..n);
                let mut b = rng.gen_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                c.cx(a, b);
            } else {
                c.push(kinds[rng.gen_range(0..kinds.len())], &[rng.gen_range(0..n)]);
            }
        }
        let params = (0..c.num_params()).map(|_| rng.gen_range(-PI..PI)).collect();
        (c, params)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for trial in 0..60 {
            let n = 1 + trial % 4;
            let (c, params) = random_circuit(&mut rng, n, 20);
            let grads = c.build_gradient(&params).unwrap();
            for i in 0..c.num_params() {
                let mut up = params.clone();
                let mut dn = params.clone();
                up[i] += h;
                dn[i] -= h;
                let fu = c.build_unitary(&up).unwrap();
                let fd = c.build_unitary(&dn).unwrap();
                let scale = grads[i].as_slice().iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
                let mut err: f64 = 0.0;
                for ((a, b), g) in fu.as_slice().iter().zip(fd.as_slice()).zip(grads[i].as_slice()) {
                    err = err.max(((a - b) / (2.0 * h) - g).norm());
                }
                assert!(err <= 1e-6 && err / scale <= 1e-6, "trial {trial} param {i}: err {err}");
            }
        }
    }

    #[test]
    fn sweep_gradient_agrees_with_full_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let (c, params) = random_circuit(&mut rng, 3, 25);
            let target = crate::matrix::random_unitary(&mut rng, 8);
            let (u, overlap, tr_grads) = c.overlap_gradient(&target, &params).unwrap();
            assert!(u.max_abs_diff(&c.build_unitary(&params).unwrap()) < 1e-14);
            assert!((overlap - target.inner(&u)).norm() < 1e-13);
            for (g, tg) in c.build_gradient(&params).unwrap().iter().zip(&tr_grads) {
                assert!((target.inner(g) - tg).norm() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn unitary_and_periodic(seed in any::<u64>(), n in 1usize..=4, len in 0usize..=20, slot in 0usize..32) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, params) = random_circuit(&mut rng, n, len);
            let u = c.build_unitary(&params).unwrap();
            prop_assert!(u.unitarity_error() <= 1e-10);
            if c.num_params() > 0 {
                let mut shifted = params.clone();
                shifted[slot % c.num_params()] += 2.0 * PI;
                let v = c.build_unitary(&shifted).unwrap();
                prop_assert!(distance(&u, &v).unwrap() <= 1e-12);
            }
        }
    }
}
