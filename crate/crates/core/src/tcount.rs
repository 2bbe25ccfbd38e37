//! Maximum-roundable search, Clifford-first two-phase rounding, snapping and
//! T-count accounting.

use rand::Rng;

use crate::circuit::{Circuit, Gate, GateKind, ParamVector};
use crate::cost::{distance, quarter_turns, wrap_angle, AngleSet, EpsilonVector, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::matrix::UnitaryMatrix;
use crate::optimize::{minimize, polish, two_step_all, OptResult, PoolEntry, SeedPool, SolverSettings};

/// Default synthesis-error threshold.
pub const DEFAULT_THRESHOLD: f64 = 1e-8;

/// Candidates per probe that get a snap-and-verify attempt.
const CANDIDATES_PER_PROBE: usize = 3;

/// Tolerance for recognizing a snapped angle as a multiple of π/4.
const WORD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptanceMode {
    /// Snap, re-optimize the free rotations and measure the distance.
    Direct,
    /// Accept when `distance + penalty_factor·Σε ≤ T`, then still verify.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConfig {
    pub threshold: f64,
    pub mode: AcceptanceMode,
}

impl ThresholdConfig {
    pub fn new(threshold: f64, mode: AcceptanceMode) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::input(format!("threshold {threshold} is outside (0, 1]")));
        }
        Ok(ThresholdConfig { threshold, mode })
    }

    pub fn direct(threshold: f64) -> Result<Self> {
        Self::new(threshold, AcceptanceMode::Direct)
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { threshold: DEFAULT_THRESHOLD, mode: AcceptanceMode::Direct }
    }
}

/// Settings for one rounding run.
#[derive(Debug, Clone)]
pub struct RoundingConfig {
    pub threshold: ThresholdConfig,
    /// Desired angles for the first phase (Clifford plus T by default).
    pub angle_set: AngleSet,
    /// Angles preferred in the second phase.
    pub clifford_set: AngleSet,
    pub penalty_factor: f64,
    pub solver: SolverSettings,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        RoundingConfig {
            threshold: ThresholdConfig::default(),
            angle_set: AngleSet::clifford_t(),
            clifford_set: AngleSet::clifford(),
            penalty_factor: 1.0,
            solver: SolverSettings::default(),
        }
    }
}

impl RoundingConfig {
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.threshold = ThresholdConfig::new(threshold, self.threshold.mode)?;
        self.solver.pool_accept = threshold;
        Ok(self)
    }

    pub fn with_angle_set(mut self, set: AngleSet) -> Self {
        self.angle_set = set;
        self
    }

    fn objective(&self, target: &UnitaryMatrix, set: &AngleSet, n: usize) -> ObjectiveConfig {
        ObjectiveConfig::new(target.clone(), set.clone(), n).with_penalty_factor(self.penalty_factor)
    }
}

/// Fixed gates realizing `Rz(k·π/4)` up to global phase.
pub fn quarter_turn_word(k: u8) -> &'static [GateKind] {
    match k % 8 {
        0 => &[],
        1 => &[GateKind::T],
        2 => &[GateKind::S],
        3 => &[GateKind::S, GateKind::T],
        4 => &[GateKind::Z],
        5 => &[GateKind::Z, GateKind::T],
        6 => &[GateKind::Sdg],
        _ => &[GateKind::Tdg],
    }
}

/// Replaces the selected rotations by fixed gates at their nearest desired
/// angle. Unselected rotations keep their values and are renumbered in slot
/// order. Angles off the π/4 grid become [`GateKind::FixedRz`].
pub fn snap(circuit: &Circuit, params: &[f64], selection: &[usize], set: &AngleSet) -> Result<(Circuit, ParamVector)> {
    let m = circuit.num_params();
    if params.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: params.len() });
    }
    let mut selected = vec![false; m];
    for &i in selection {
        if i >= m {
            return Err(Error::input(format!("selection index {i} out of range for {m} parameters")));
        }
        selected[i] = true;
    }
    let mut new_slot = vec![usize::MAX; m];
    let mut residual = Vec::new();
    for p in (0..m).filter(|&p| !selected[p]) {
        new_slot[p] = residual.len();
        residual.push(params[p]);
    }
    let mut gates = Vec::with_capacity(circuit.len());
    for g in circuit.gates() {
        match g.kind {
            GateKind::Rz(p) if selected[p] => {
                let nearest = set.nearest(params[p])?;
                match quarter_turns(nearest, WORD_TOL) {
                    Some(k) => {
                        gates.extend(quarter_turn_word(k).iter().map(|&kind| Gate::new(kind, &g.qubits)));
                    }
                    None => gates.push(Gate::new(GateKind::FixedRz(wrap_angle(nearest)), &g.qubits)),
                }
            }
            GateKind::Rz(p) => gates.push(Gate::new(GateKind::Rz(new_slot[p]), &g.qubits)),
            _ => gates.push(g.clone()),
        }
    }
    let snapped = Circuit::from_gates(circuit.num_qubits(), gates)
        .map_err(|e| Error::Internal(format!("snap produced an invalid circuit: {e}")))?;
    Ok((snapped, residual))
}

/// Number of T and T† gates.
pub fn t_count(circuit: &Circuit) -> usize {
    circuit.t_count()
}

/// A snapped circuit that passed verification, with how it was obtained.
#[derive(Debug, Clone)]
pub struct Feasible {
    pub n: usize,
    pub circuit: Circuit,
    pub residual: ParamVector,
    pub verified_distance: f64,
    /// Distance before snapping plus the rounding penalties of the snapped set.
    pub bound_distance: f64,
    /// Full-length parameters: snapped slots at their snapped angle, free
    /// slots at their re-optimized values. Snapping its `n' ≤ n` cheapest
    /// entries reproduces at most this circuit's distance.
    pub witness: ParamVector,
    pub solution: OptResult,
}

/// Snaps the `n` cheapest parameters of `candidate` and verifies the result.
pub fn check_candidate(
    circuit: &Circuit,
    target: &UnitaryMatrix,
    candidate: &OptResult,
    n: usize,
    set: &AngleSet,
    cfg: &RoundingConfig,
) -> Result<Option<Feasible>> {
    let eps = EpsilonVector::compute(&candidate.params, set)?;
    let selection: Vec<usize> = eps.cheapest(n).to_vec();
    let penalty: f64 = selection.iter().map(|&i| eps.values[i]).sum();
    let bound_distance = candidate.distance_part + penalty;
    let (snapped, residual) = snap(circuit, &candidate.params, &selection, set)?;
    let threshold = cfg.threshold.threshold;
    let residual = match cfg.threshold.mode {
        AcceptanceMode::Direct => polish(&snapped, target, &residual, cfg.solver.max_iters)?.0,
        AcceptanceMode::Bound => {
            if candidate.distance_part + cfg.penalty_factor * penalty > threshold {
                return Ok(None);
            }
            residual
        }
    };
    let verified = distance(target, &snapped.build_unitary(&residual)?)?;
    if verified > threshold {
        return Ok(None);
    }
    let mut witness = candidate.params.clone();
    for &i in &selection {
        witness[i] = eps.nearest[i];
    }
    let free: Vec<usize> = (0..witness.len()).filter(|i| !selection.contains(i)).collect();
    for (slot, value) in free.iter().zip(&residual) {
        witness[*slot] = *value;
    }
    Ok(Some(Feasible {
        n,
        circuit: snapped,
        residual,
        verified_distance: verified,
        bound_distance,
        witness,
        solution: candidate.clone(),
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub phase: &'static str,
    pub n: usize,
    pub feasible: bool,
    pub best_objective: f64,
}

/// Result of the binary search over the number of rounded rotations.
#[derive(Debug, Clone)]
pub struct RoundingSearch {
    /// Largest feasible count, `None` when even zero rounding misses the threshold.
    pub best: Option<Feasible>,
    /// Smallest count probed and found infeasible, if any.
    pub first_infeasible: Option<usize>,
    pub probes: Vec<ProbeRecord>,
    pub diagnostics: Option<String>,
}

impl RoundingSearch {
    pub fn n(&self) -> usize {
        self.best.as_ref().map_or(0, |f| f.n)
    }
}

fn witness_entry(f: &Feasible, set: &AngleSet, cfg: &RoundingConfig) -> PoolEntry {
    PoolEntry {
        params: f.witness.clone(),
        objective_value: f.verified_distance,
        n_round: f.n,
        angle_set: set.clone(),
        penalty_factor: cfg.penalty_factor,
    }
}

struct Prober<'a, R: Rng> {
    circuit: &'a Circuit,
    target: &'a UnitaryMatrix,
    set: &'a AngleSet,
    cfg: &'a RoundingConfig,
    pool: &'a mut SeedPool,
    rng: &'a mut R,
    probes: Vec<ProbeRecord>,
    phase: &'static str,
}

impl<R: Rng> Prober<'_, R> {
    fn probe(&mut self, n: usize, warm: Option<&[f64]>) -> Result<Option<Feasible>> {
        let config = self.cfg.objective(self.target, self.set, n);
        let results = two_step_all(self.circuit, &config, self.pool, &self.cfg.solver, self.rng)?;
        let best_objective = results.first().map_or(f64::INFINITY, |r| r.objective_value);
        let mut found = None;
        for r in results.iter().take(CANDIDATES_PER_PROBE) {
            if let Some(f) = check_candidate(self.circuit, self.target, r, n, self.set, self.cfg)? {
                found = Some(f);
                break;
            }
        }
        if found.is_none() {
            if let Some(w) = warm {
                let mut r = minimize(self.circuit, &config, w, self.cfg.solver.max_iters)?;
                r.start_label = "witness".into();
                found = check_candidate(self.circuit, self.target, &r, n, self.set, self.cfg)?;
            }
        }
        if let Some(f) = &found {
            self.pool.insert(witness_entry(f, self.set, self.cfg));
        }
        self.probes.push(ProbeRecord { phase: self.phase, n, feasible: found.is_some(), best_objective });
        Ok(found)
    }
}

/// Binary search for the largest `N` whose rounding problem has a verified
/// solution under the threshold.
#[allow(clippy::too_many_arguments)]
pub fn max_roundable<R: Rng>(
    circuit: &Circuit,
    target: &UnitaryMatrix,
    initial: Option<&[f64]>,
    set: &AngleSet,
    cfg: &RoundingConfig,
    pool: &mut SeedPool,
    rng: &mut R,
) -> Result<RoundingSearch> {
    if target.dim() != circuit.dim() {
        return Err(Error::DimensionMismatch { expected: circuit.dim(), found: target.dim() });
    }
    let m = circuit.num_params();
    let mut prober = Prober { circuit, target, set, cfg, pool, rng, probes: Vec::new(), phase: "search" };

    let mut lo_witness: Option<Feasible> = None;
    if let Some(init) = initial {
        if init.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: init.len() });
        }
        let config = cfg.objective(target, set, 0);
        let at_init = minimize(circuit, &config, init, 0)?;
        prober.pool.insert(PoolEntry {
            params: init.to_vec(),
            objective_value: at_init.objective_value,
            n_round: 0,
            angle_set: set.clone(),
            penalty_factor: cfg.penalty_factor,
        });
        lo_witness = check_candidate(circuit, target, &at_init, 0, set, cfg)?;
    }
    if lo_witness.is_none() {
        lo_witness = prober.probe(0, None)?;
    }
    let Some(mut best) = lo_witness else {
        return Ok(RoundingSearch {
            best: None,
            first_infeasible: Some(0),
            probes: prober.probes,
            diagnostics: Some(format!(
                "no solution within threshold {:e} even without rounding",
                cfg.threshold.threshold
            )),
        });
    };

    let (mut lo, mut hi) = (0usize, m + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match prober.probe(mid, Some(&best.witness))? {
            Some(f) => {
                lo = mid;
                best = f;
            }
            None => hi = mid,
        }
    }
    Ok(RoundingSearch {
        best: Some(best),
        first_infeasible: (hi <= m).then_some(hi),
        probes: prober.probes,
        diagnostics: None,
    })
}

/// Final rounded circuit and its accounting.
#[derive(Debug, Clone)]
pub struct RoundingOutcome {
    pub final_circuit: Circuit,
    pub residual_params: ParamVector,
    /// Rotations rounded in total (`N_{Cliff+T}`).
    pub n_rounded: usize,
    /// Rotations rounded to Clifford angles in the second phase (`N_Cliff`).
    pub n_clifford: usize,
    pub n_t_gates: usize,
    /// Snapped rotations with no Clifford+T word (frozen `FixedRz`).
    pub n_fixed_rz: usize,
    pub leftover_rz: usize,
    pub verified_distance: f64,
    pub bound_distance: f64,
    /// `n_clifford + 1` when that count was probed and failed.
    pub clifford_certificate: Option<usize>,
    pub witness: ParamVector,
    pub probes: Vec<ProbeRecord>,
}

impl RoundingOutcome {
    fn from_feasible(f: &Feasible, n_rounded: usize, n_clifford: usize) -> Self {
        RoundingOutcome {
            n_t_gates: f.circuit.t_count(),
            n_fixed_rz: f.circuit.fixed_rz_count(),
            leftover_rz: f.circuit.num_params(),
            final_circuit: f.circuit.clone(),
            residual_params: f.residual.clone(),
            n_rounded,
            n_clifford,
            verified_distance: f.verified_distance,
            bound_distance: f.bound_distance,
            clifford_certificate: None,
            witness: f.witness.clone(),
            probes: Vec::new(),
        }
    }
}

/// Clifford-first attempt for a given `N_Cliff`: round that many to the
/// Clifford set, re-optimize, then round the remaining `N_T` to the full set.
struct CliffordPhase<'a, R: Rng> {
    circuit: &'a Circuit,
    target: &'a UnitaryMatrix,
    cfg: &'a RoundingConfig,
    n_total: usize,
    pool: &'a mut SeedPool,
    rng: &'a mut R,
    probes: Vec<ProbeRecord>,
}

impl<R: Rng> CliffordPhase<'_, R> {
    fn attempt(&mut self, candidate: &OptResult, n_cliff: usize) -> Result<Option<(Feasible, ParamVector)>> {
        let cliff_set = &self.cfg.clifford_set;
        let eps = EpsilonVector::compute(&candidate.params, cliff_set)?;
        let selection: Vec<usize> = eps.cheapest(n_cliff).to_vec();
        let (stage1, residual) = snap(self.circuit, &candidate.params, &selection, cliff_set)?;
        let (residual, d1) = polish(&stage1, self.target, &residual, self.cfg.solver.max_iters)?;
        if d1 > self.cfg.threshold.threshold {
            return Ok(None);
        }
        let free: Vec<usize> = (0..self.circuit.num_params()).filter(|i| !selection.contains(i)).collect();
        let n_t = self.n_total - n_cliff;
        let mut local_pool = SeedPool::default();
        let stage1_config = self.cfg.objective(self.target, &self.cfg.angle_set, 0);
        let seed = minimize(&stage1, &stage1_config, &residual, 0)?;
        local_pool.insert_result(&seed, &stage1_config);

        let config = self.cfg.objective(self.target, &self.cfg.angle_set, n_t);
        let results = two_step_all(&stage1, &config, &mut local_pool, &self.cfg.solver, self.rng)?;
        for r in results.iter().take(CANDIDATES_PER_PROBE) {
            if let Some(f) = check_candidate(&stage1, self.target, r, n_t, &self.cfg.angle_set, self.cfg)? {
                let mut witness = candidate.params.clone();
                for &i in &selection {
                    witness[i] = eps.nearest[i];
                }
                for (slot, value) in free.iter().zip(&f.witness) {
                    witness[*slot] = *value;
                }
                return Ok(Some((f, witness)));
            }
        }
        Ok(None)
    }

    fn probe(&mut self, n_cliff: usize, warm: &[f64]) -> Result<Option<(Feasible, ParamVector)>> {
        let config = self.cfg.objective(self.target, &self.cfg.clifford_set, n_cliff);
        let results = two_step_all(self.circuit, &config, self.pool, &self.cfg.solver, self.rng)?;
        let best_objective = results.first().map_or(f64::INFINITY, |r| r.objective_value);
        let mut found = None;
        for r in results.iter().take(CANDIDATES_PER_PROBE) {
            if let Some(hit) = self.attempt(r, n_cliff)? {
                found = Some(hit);
                break;
            }
        }
        if found.is_none() {
            let mut r = minimize(self.circuit, &config, warm, self.cfg.solver.max_iters)?;
            r.start_label = "witness".into();
            found = self.attempt(&r, n_cliff)?;
        }
        if let Some((f, w)) = &found {
            self.pool.insert(PoolEntry {
                params: w.clone(),
                objective_value: f.verified_distance,
                n_round: n_cliff,
                angle_set: self.cfg.clifford_set.clone(),
                penalty_factor: self.cfg.penalty_factor,
            });
        }
        self.probes.push(ProbeRecord { phase: "clifford", n: n_cliff, feasible: found.is_some(), best_objective });
        Ok(found)
    }
}

/// Rounds as many rotations as possible to the configured angle set, then
/// prefers Clifford angles among them.
///
/// `target` defaults to the circuit's own unitary at `initial`.
pub fn two_phase_round<R: Rng>(
    circuit: &Circuit,
    initial: &[f64],
    target: Option<&UnitaryMatrix>,
    cfg: &RoundingConfig,
    pool: &mut SeedPool,
    rng: &mut R,
) -> Result<RoundingOutcome> {
    let own;
    let target = match target {
        Some(t) => t,
        None => {
            own = circuit.build_unitary(initial)?;
            &own
        }
    };
    let search = max_roundable(circuit, target, Some(initial), &cfg.angle_set, cfg, pool, rng)?;
    let mut probes = search.probes.clone();
    let Some(phase_a) = search.best else {
        return Err(Error::Infeasible(search.diagnostics.unwrap_or_default()));
    };
    let n_total = phase_a.n;

    let clifford_only = cfg.clifford_set == cfg.angle_set;
    if clifford_only || n_total == 0 {
        let mut out = RoundingOutcome::from_feasible(&phase_a, n_total, if clifford_only { n_total } else { 0 });
        out.probes = probes;
        return Ok(out);
    }

    let mut phase = CliffordPhase { circuit, target, cfg, n_total, pool, rng, probes: Vec::new() };
    let mut best = (phase_a.clone(), phase_a.witness.clone());
    let (mut lo, mut hi) = (0usize, n_total + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let warm = best.1.clone();
        match phase.probe(mid, &warm)? {
            Some(hit) => {
                lo = mid;
                best = hit;
            }
            None => hi = mid,
        }
    }
    probes.extend(phase.probes);
    let mut out = RoundingOutcome::from_feasible(&best.0, n_total, lo);
    out.witness = best.1;
    out.clifford_certificate = (hi <= n_total).then_some(hi);
    out.probes = probes;
    Ok(out)
}
