//! Synthesis-error metric, rounding penalties and the composite rounding
//! objective with its analytic gradient.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI, TAU};

use num_complex::Complex64;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, UnitaryMatrix};

/// Floor applied to the distance in the gradient denominator.
pub const DISTANCE_FLOOR: f64 = 1e-12;

/// Process infidelity `sqrt(1 − |Tr(u1†u2)|² / dim²)`.
///
/// `1 − |c|` is evaluated as `‖u2 − e^{iφ}u1‖²_F / (2·dim)` with `e^{iφ}` the
/// phase of the overlap. For unitaries this is algebraically identical to the
/// trace form but keeps full relative precision near zero, where the trace
/// form loses everything below ~1e−8.
pub fn distance(u1: &UnitaryMatrix, u2: &UnitaryMatrix) -> Result<f64> {
    if u1.dim() != u2.dim() {
        return Err(Error::DimensionMismatch { expected: u1.dim(), found: u2.dim() });
    }
    let overlap = u1.inner(u2);
    Ok(distance_from_overlap(u1, u2, overlap))
}

pub(crate) fn one_minus_abs_overlap(target: &Matrix, u: &Matrix, overlap: Complex64) -> f64 {
    let n = target.dim() as f64;
    let norm = overlap.norm();
    let phase = if norm > 0.0 { overlap / norm } else { Complex64::new(1.0, 0.0) };
    let diff: f64 = target
        .as_slice()
        .iter()
        .zip(u.as_slice())
        .map(|(v, w)| (w - phase * v).norm_sqr())
        .sum();
    (diff / (2.0 * n)).clamp(0.0, 1.0)
}

pub(crate) fn distance_from_overlap(target: &Matrix, u: &Matrix, overlap: Complex64) -> f64 {
    let n = target.dim() as f64;
    let abs_c = (overlap.norm() / n).min(1.0);
    let one_minus = one_minus_abs_overlap(target, u, overlap);
    (one_minus * (1.0 + abs_c)).clamp(0.0, 1.0).sqrt()
}

/// Error of replacing `Rz(θ)` with `Rz(θ + δ)`: `sqrt(½(1 − cos δ)) = |sin(δ/2)|`.
pub fn substitution_error(delta: f64) -> f64 {
    (delta / 2.0).sin().abs()
}

#[derive(Debug, Clone, PartialEq)]
enum AngleRule {
    Lattice { step: f64, offset: f64 },
    Explicit(Vec<f64>),
}

/// A discrete set of desired Rz angles, interpreted modulo 2π.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    tag: String,
    rule: AngleRule,
}

impl AngleSet {
    /// `{kπ/2}`: the Clifford phase gates.
    pub fn clifford() -> Self {
        AngleSet { tag: "clifford".into(), rule: AngleRule::Lattice { step: FRAC_PI_2, offset: 0.0 } }
    }

    /// `{kπ/4}`: phases reachable with at most one T gate.
    pub fn clifford_t() -> Self {
        AngleSet { tag: "clifford_t".into(), rule: AngleRule::Lattice { step: FRAC_PI_4, offset: 0.0 } }
    }

    /// `{kπ/8}`: adds the √T phases.
    pub fn eighth() -> Self {
        AngleSet { tag: "eighth".into(), rule: AngleRule::Lattice { step: FRAC_PI_8, offset: 0.0 } }
    }

    /// `{offset + k·step}`. `step` must divide 2π so the set is periodic.
    pub fn lattice(tag: impl Into<String>, step: f64, offset: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0 && offset.is_finite()) {
            return Err(Error::input("lattice step must be positive and finite"));
        }
        let turns = TAU / step;
        if (turns - turns.round()).abs() > 1e-9 {
            return Err(Error::input(format!("lattice step {step} does not divide 2π")));
        }
        Ok(AngleSet { tag: tag.into(), rule: AngleRule::Lattice { step, offset } })
    }

    /// Finite list of angles taken modulo 2π.
    pub fn explicit(tag: impl Into<String>, angles: &[f64]) -> Result<Self> {
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::input("explicit angle set contains a non-finite angle"));
        }
        let mut reduced: Vec<f64> = angles.iter().map(|a| a.rem_euclid(TAU)).collect();
        reduced.sort_by(f64::total_cmp);
        reduced.dedup();
        Ok(AngleSet { tag: tag.into(), rule: AngleRule::Explicit(reduced) })
    }

    /// Looks up one of the named sets used on the command line.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "clifford" => Some(Self::clifford()),
            "clifford_t" => Some(Self::clifford_t()),
            "eighth" => Some(Self::eighth()),
            _ => None,
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Member of the set (as a real-line lift) closest to `theta`; ties go to
    /// the smaller lift.
    pub fn nearest(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::input(format!("non-finite angle {theta}")));
        }
        match &self.rule {
            AngleRule::Lattice { step, offset } => {
                let k = ((theta - offset) / step).floor();
                let lo = offset + k * step;
                let hi = offset + (k + 1.0) * step;
                Ok(if (theta - lo).abs() <= (hi - theta).abs() { lo } else { hi })
            }
            AngleRule::Explicit(members) => {
                let mut best: Option<f64> = None;
                for &phi in members {
                    let j = ((theta - phi) / TAU).round();
                    for shift in [j - 1.0, j, j + 1.0] {
                        let lift = phi + shift * TAU;
                        best = Some(match best {
                            None => lift,
                            Some(b) => {
                                let (db, dl) = ((theta - b).abs(), (theta - lift).abs());
                                if dl < db || (dl == db && lift < b) {
                                    lift
                                } else {
                                    b
                                }
                            }
                        });
                    }
                }
                best.ok_or_else(|| Error::input("angle set is empty"))
            }
        }
    }

    /// Whether `theta` lies within `tol` (angular) of a member.
    pub fn contains(&self, theta: f64, tol: f64) -> bool {
        self.nearest(theta).map(|n| (theta - n).abs() <= tol).unwrap_or(false)
    }
}

/// `ε(θ) = min_{φ∈D} |θ − φ| / 2` with angular distance, and the argmin lift.
pub fn rounding_cost(theta: f64, set: &AngleSet) -> Result<(f64, f64)> {
    let nearest = set.nearest(theta)?;
    Ok(((theta - nearest).abs() / 2.0, nearest))
}

/// Per-parameter penalties and their ascending order (ties by index).
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonVector {
    pub values: Vec<f64>,
    pub nearest: Vec<f64>,
    pub order: Vec<usize>,
}

impl EpsilonVector {
    pub fn compute(params: &[f64], set: &AngleSet) -> Result<Self> {
        let mut values = Vec::with_capacity(params.len());
        let mut nearest = Vec::with_capacity(params.len());
        for &t in params {
            let (e, n) = rounding_cost(t, set)?;
            values.push(e);
            nearest.push(n);
        }
        let mut order: Vec<usize> = (0..params.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        Ok(EpsilonVector { values, nearest, order })
    }

    /// Indices of the `n` cheapest parameters.
    pub fn cheapest(&self, n: usize) -> &[usize] {
        &self.order[..n.min(self.order.len())]
    }

    pub fn sum_cheapest(&self, n: usize) -> f64 {
        self.cheapest(n).iter().map(|&i| self.values[i]).sum()
    }
}

/// Target, desired angles and rounding count for one instance of the
/// composite objective.
#[derive(Debug, Clone)]
pub struct ObjectiveConfig {
    pub target: UnitaryMatrix,
    pub angle_set: AngleSet,
    pub n_round: usize,
    pub penalty_factor: f64,
}

impl ObjectiveConfig {
    pub fn new(target: UnitaryMatrix, angle_set: AngleSet, n_round: usize) -> Self {
        ObjectiveConfig { target, angle_set, n_round, penalty_factor: 1.0 }
    }

    pub fn with_penalty_factor(mut self, factor: f64) -> Self {
        self.penalty_factor = factor;
        self
    }

    pub fn with_n_round(&self, n_round: usize) -> Self {
        ObjectiveConfig { n_round, ..self.clone() }
    }

    pub(crate) fn validate(&self, circuit: &Circuit, params: &[f64]) -> Result<()> {
        if self.target.dim() != circuit.dim() {
            return Err(Error::DimensionMismatch { expected: circuit.dim(), found: self.target.dim() });
        }
        if params.len() != circuit.num_params() {
            return Err(Error::DimensionMismatch { expected: circuit.num_params(), found: params.len() });
        }
        if self.n_round > circuit.num_params() {
            return Err(Error::input(format!(
                "cannot round {} of {} parameters",
                self.n_round,
                circuit.num_params()
            )));
        }
        if !(self.penalty_factor > 0.0 && self.penalty_factor.is_finite()) {
            return Err(Error::input("penalty factor must be positive"));
        }
        Ok(())
    }
}

/// Value of the composite objective split into its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub distance_part: f64,
    pub epsilon: EpsilonVector,
}

/// `d(target, U(θ)) + penalty_factor · Σ_{i<N} ε_sorted_i`.
pub fn objective(circuit: &Circuit, params: &[f64], config: &ObjectiveConfig) -> Result<ObjectiveValue> {
    config.validate(circuit, params)?;
    let u = circuit.unitary_unchecked(params);
    let overlap = config.target.inner(&u);
    let d = distance_from_overlap(&config.target, &u, overlap);
    let epsilon = EpsilonVector::compute(params, &config.angle_set)?;
    let value = d + config.penalty_factor * epsilon.sum_cheapest(config.n_round);
    Ok(ObjectiveValue { value, distance_part: d, epsilon })
}

/// Objective value and gradient in one sweep.
pub fn objective_with_gradient(
    circuit: &Circuit,
    params: &[f64],
    config: &ObjectiveConfig,
) -> Result<(ObjectiveValue, Vec<f64>)> {
    config.validate(circuit, params)?;
    let (u, overlap, dtr) = circuit.overlap_gradient_unchecked(&config.target, params);
    let n = config.target.dim() as f64;
    let d = distance_from_overlap(&config.target, &u, overlap);
    let c = overlap / n;
    let denom = d.max(DISTANCE_FLOOR);
    let mut grad: Vec<f64> = dtr.iter().map(|g| -(c.conj() * g / n).re / denom).collect();

    let epsilon = EpsilonVector::compute(params, &config.angle_set)?;
    let half = config.penalty_factor / 2.0;
    for &i in epsilon.cheapest(config.n_round) {
        let delta = params[i] - epsilon.nearest[i];
        if delta > 0.0 {
            grad[i] += half;
        } else if delta < 0.0 {
            grad[i] -= half;
        }
    }
    let value = d + config.penalty_factor * epsilon.sum_cheapest(config.n_round);
    Ok((ObjectiveValue { value, distance_part: d, epsilon }, grad))
}

pub fn objective_gradient(circuit: &Circuit, params: &[f64], config: &ObjectiveConfig) -> Result<Vec<f64>> {
    objective_with_gradient(circuit, params, config).map(|(_, g)| g)
}

/// `1 − |Tr(V†U)|/dim` and its gradient: smooth near the optimum, monotone in
/// the distance, so minimizing it minimizes the distance.
pub(crate) fn infidelity_surrogate(circuit: &Circuit, target: &Matrix, params: &[f64]) -> (f64, Vec<f64>) {
    let (u, overlap, dtr) = circuit.overlap_gradient_unchecked(target, params);
    let n = target.dim() as f64;
    let value = one_minus_abs_overlap(target, &u, overlap);
    let c = overlap / n;
    let abs_c = c.norm().max(1e-300);
    let grad = dtr.iter().map(|g| -(c.conj() * g / n).re / abs_c).collect();
    (value, grad)
}

pub(crate) fn infidelity_surrogate_value(circuit: &Circuit, target: &Matrix, params: &[f64]) -> f64 {
    let u = circuit.unitary_unchecked(params);
    let overlap = target.inner(&u);
    one_minus_abs_overlap(target, &u, overlap)
}

/// Multiple of π/4 (mod 8) that `angle` sits on, if within `tol`.
pub fn quarter_turns(angle: f64, tol: f64) -> Option<u8> {
    let k = (angle / FRAC_PI_4).round();
    if (angle - k * FRAC_PI_4).abs() <= tol {
        Some(k.rem_euclid(8.0) as u8)
    } else {
        None
    }
}

/// Reduce to `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{rz_matrix, GateKind};
    use crate::matrix::{random_near_identity, random_unitary};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distance_basic_cases() {
        let i2 = Matrix::identity(2);
        assert_eq!(distance(&i2, &i2).unwrap(), 0.0);
        let z = Matrix::from_gate2(&GateKind::Z.matrix2(0.0).unwrap());
        assert!((distance(&i2, &z).unwrap() - 1.0).abs() < 1e-15);
        assert!(distance(&i2, &Matrix::identity(4)).is_err());
    }

    #[test]
    fn distance_between_rotations_is_half_angle_sine() {
        for &(theta, delta) in &[(0.3, PI / 2.0), (-1.0, 0.01), (2.0, 3.0), (0.0, 1e-7)] {
            let d = distance(&rz_matrix(theta).unwrap(), &rz_matrix(theta + delta).unwrap()).unwrap();
            let expected = (delta / 2.0).sin().abs();
            assert!((d - expected).abs() < 1e-14 * expected.max(1e-2), "{d} vs {expected}");
        }
        let d = distance(&rz_matrix(0.0).unwrap(), &rz_matrix(PI / 2.0).unwrap()).unwrap();
        assert!((d - 0.707_106_781_186_547_5).abs() < 1e-12);
    }

    #[test]
    fn kronecker_extension_preserves_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(&mut rng, 4);
        let v = random_near_identity(&mut rng, 4, 0.2);
        let i2 = Matrix::identity(2);
        let a = distance(&u, &v).unwrap();
        let b = distance(&u.kron(&i2), &v.kron(&i2)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn substitution_error_values() {
        assert_eq!(substitution_error(0.0), 0.0);
        assert!((substitution_error(PI) - 1.0).abs() < 1e-15);
        for &delta in &[1e-6, 1e-3, 0.05, 0.2, -0.3] {
            let r: f64 = substitution_error(delta);
            assert!((r - delta.abs() / 2.0).abs() <= delta.abs().powi(3) / 48.0 + 1e-18);
        }
    }

    #[test]
    fn rounding_cost_examples() {
        let d = AngleSet::clifford_t();
        assert_eq!(rounding_cost(PI / 4.0, &d).unwrap(), (0.0, PI / 4.0));
        let (e, n) = rounding_cost(PI / 8.0, &d).unwrap();
        assert!((e - PI / 16.0).abs() < 1e-15);
        assert_eq!(n, 0.0);
        let (e, n) = rounding_cost(TAU - 0.01, &d).unwrap();
        assert!((e - 0.005).abs() < 1e-12);
        assert!(wrap_angle(n).abs() < 1e-12);
    }

    /// Brute-force scan of `{kπ/4}` over `[−4π, 4π]`.
    fn brute_force_eps(theta: f64, step: f64) -> f64 {
        let mut best = f64::INFINITY;
        let mut k = -((4.0 * PI / step).round() as i64) - 2;
        while (k as f64) * step <= 4.0 * PI + step {
            let phi = k as f64 * step;
            for w in -2..=2 {
                best = best.min((theta - phi - w as f64 * TAU).abs() / 2.0);
            }
            k += 1;
        }
        best
    }

    #[test]
    fn rounding_cost_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for set in [AngleSet::clifford(), AngleSet::clifford_t(), AngleSet::eighth()] {
            let step = match set.rule {
                AngleRule::Lattice { step, .. } => step,
                _ => unreachable!(),
            };
            for _ in 0..500 {
                let theta = rng.gen_range(-3.0 * PI..3.0 * PI);
                let (e, _) = rounding_cost(theta, &set).unwrap();
                assert!((e - brute_force_eps(theta, step)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn explicit_set_matches_equivalent_lattice() {
        let members: Vec<f64> = (0..8).map(|k| k as f64 * FRAC_PI_4).collect();
        let explicit = AngleSet::explicit("q", &members).unwrap();
        let lattice = AngleSet::clifford_t();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let theta = rng.gen_range(-10.0..10.0);
            let (a, _) = rounding_cost(theta, &explicit).unwrap();
            let (b, _) = rounding_cost(theta, &lattice).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        let empty = AngleSet::explicit("none", &[]).unwrap();
        assert!(rounding_cost(0.1, &empty).is_err());
        assert!(AngleSet::lattice("bad", 1.0, 0.0).is_err());
        assert!(AngleSet::lattice("ok", TAU / 3.0, 0.1).is_ok());
    }

    #[test]
    fn epsilon_order_breaks_ties_by_index() {
        let params = [PI / 4.0, 0.1, 0.0, PI / 2.0, 0.1];
        let eps = EpsilonVector::compute(&params, &AngleSet::clifford_t()).unwrap();
        assert_eq!(eps.order, vec![0, 2, 3, 1, 4]);
    }

    fn single_rz() -> Circuit {
        let mut c = Circuit::new(1);
        c.rz(0);
        c
    }

    #[test]
    fn objective_examples() {
        let c = single_rz();
        let target = rz_matrix(PI / 4.0).unwrap();
        let cfg = ObjectiveConfig::new(target.clone(), AngleSet::clifford_t(), 1);
        let v = objective(&c, &[PI / 4.0], &cfg).unwrap();
        assert!(v.value.abs() < 1e-15);

        let cfg0 = ObjectiveConfig::new(target, AngleSet::clifford_t(), 0);
        let v0 = objective(&c, &[0.7], &cfg0).unwrap();
        assert_eq!(v0.value, v0.distance_part);

        let bad = ObjectiveConfig::new(Matrix::identity(4), AngleSet::clifford_t(), 0);
        assert!(objective(&c, &[0.1], &bad).is_err());
        let too_many = ObjectiveConfig::new(Matrix::identity(2), AngleSet::clifford_t(), 2);
        assert!(objective(&c, &[0.1], &too_many).is_err());
    }

    #[test]
    fn zero_round_gradient_is_distance_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (c, params) = crate::circuit::tests::random_circuit(&mut rng, 2, 12);
        let target = random_unitary(&mut rng, 4);
        let cfg = ObjectiveConfig::new(target, AngleSet::clifford_t(), 0);
        let g = objective_gradient(&c, &params, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (objective(&c, &up, &cfg).unwrap().distance_part
                - objective(&c, &dn, &cfg).unwrap().distance_part)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn surrogate_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (c, params) = crate::circuit::tests::random_circuit(&mut rng, 3, 18);
        let target = random_unitary(&mut rng, 8);
        let (_, g) = infidelity_surrogate(&c, &target, &params);
        let h = 1e-5;
        for i in 0..params.len() {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (infidelity_surrogate_value(&c, &target, &up)
                - infidelity_surrogate_value(&c, &target, &dn))
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn quarter_turn_classification() {
        assert_eq!(quarter_turns(0.0, 1e-9), Some(0));
        assert_eq!(quarter_turns(-PI / 4.0, 1e-9), Some(7));
        assert_eq!(quarter_turns(3.0 * PI, 1e-9), Some(4));
        assert_eq!(quarter_turns(PI / 8.0, 1e-9), None);
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_phase_invariant(seed in any::<u64>(), alpha in -10.0f64..10.0, k in 1u32..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 1usize << k;
            let u = random_unitary(&mut rng, dim);
            let v = random_near_identity(&mut rng, dim, 0.5);
            let w = &u * &v;
            let a = distance(&u, &w).unwrap();
            let b = distance(&w, &u).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            let phased = u.scale(Complex64::from_polar(1.0, alpha));
            prop_assert!(distance(&u, &phased).unwrap() <= 1e-12);
        }

        #[test]
        fn rounding_cost_periodic_and_zero_on_members(theta in -20.0f64..20.0, k in -16i32..16) {
            for set in [AngleSet::clifford(), AngleSet::clifford_t(), AngleSet::eighth()] {
                let (a, _) = rounding_cost(theta, &set).unwrap();
                let (b, _) = rounding_cost(theta + TAU, &set).unwrap();
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let member = k as f64 * FRAC_PI_4;
            prop_assert_eq!(rounding_cost(member, &AngleSet::clifford_t()).unwrap().0, 0.0);
        }
    }
}
