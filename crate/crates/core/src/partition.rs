//! Splitting wide circuits into small blocks, rounding each block on its own
//! unitary, and stitching the results back together.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{Circuit, Gate, GateKind, ParamVector};
use crate::error::{Error, Result};
use crate::optimize::SeedPool;
use crate::tcount::{two_phase_round, RoundingConfig, RoundingOutcome};

pub const DEFAULT_BLOCK_SIZE: usize = 3;

/// Widest block whose dense unitary we are willing to build.
pub const MAX_BLOCK_QUBITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetPolicy {
    /// The global threshold split evenly over the blocks that carry rotations.
    Uniform,
    /// The same threshold for every block.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct PartitionPlan {
    pub block_size: usize,
    pub policy: BudgetPolicy,
}

impl Default for PartitionPlan {
    fn default() -> Self {
        PartitionPlan { block_size: DEFAULT_BLOCK_SIZE, policy: BudgetPolicy::Uniform }
    }
}

impl PartitionPlan {
    pub fn new(block_size: usize, policy: BudgetPolicy) -> Result<Self> {
        if !(2..=MAX_BLOCK_QUBITS).contains(&block_size) {
            return Err(Error::input(format!("block size {block_size} outside 2..={MAX_BLOCK_QUBITS}")));
        }
        if let BudgetPolicy::Fixed(t) = policy {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::input(format!("per-block threshold {t} is outside (0, 1]")));
            }
        }
        Ok(PartitionPlan { block_size, policy })
    }

    /// Threshold handed to each block for a given global threshold.
    pub fn block_threshold(&self, global: f64, blocks: &[PartitionBlock]) -> f64 {
        match self.policy {
            BudgetPolicy::Fixed(t) => t,
            BudgetPolicy::Uniform => {
                let active = blocks.iter().filter(|b| b.circuit.num_params() > 0).count().max(1);
                global / active as f64
            }
        }
    }
}

/// A run of consecutive parent gates acting on at most `block_size` qubits.
#[derive(Debug, Clone)]
pub struct PartitionBlock {
    /// Parent qubits, ascending; local qubit `i` is `qubits[i]`.
    pub qubits: Vec<usize>,
    /// Parent gate indices, in parent order.
    pub gate_indices: Vec<usize>,
    /// Parent parameter slot of each local slot.
    pub param_slots: Vec<usize>,
    pub circuit: Circuit,
}

impl PartitionBlock {
    pub fn local_params(&self, parent: &[f64]) -> ParamVector {
        self.param_slots.iter().map(|&s| parent[s]).collect()
    }
}

fn build_block(parent: &Circuit, qubits: BTreeSet<usize>, gate_indices: Vec<usize>) -> Result<PartitionBlock> {
    let qubits: Vec<usize> = qubits.into_iter().collect();
    let local = |q: usize| qubits.binary_search(&q).expect("qubit belongs to block");
    let mut gates = Vec::with_capacity(gate_indices.len());
    let mut param_slots = Vec::new();
    for &gi in &gate_indices {
        let g = &parent.gates()[gi];
        let kind = match g.kind {
            GateKind::Rz(p) => {
                param_slots.push(p);
                GateKind::Rz(param_slots.len() - 1)
            }
            k => k,
        };
        let qs: Vec<usize> = g.qubits.iter().map(|&q| local(q)).collect();
        gates.push(Gate { kind, qubits: qs });
    }
    let circuit = Circuit::from_gates(qubits.len(), gates)?;
    Ok(PartitionBlock { qubits, gate_indices, param_slots, circuit })
}

/// Greedy left-to-right scan: a gate joins the open block while the union of
/// qubits stays within the block size, otherwise the block is closed.
pub fn partition(circuit: &Circuit, plan: &PartitionPlan) -> Result<Vec<PartitionBlock>> {
    let k = plan.block_size;
    let mut blocks = Vec::new();
    let mut open_qubits = BTreeSet::new();
    let mut open_gates = Vec::new();
    for (i, g) in circuit.gates().iter().enumerate() {
        if g.qubits.len() > k {
            return Err(Error::input(format!("gate {i} acts on {} qubits, block size is {k}", g.qubits.len())));
        }
        let fits = open_qubits.iter().chain(g.qubits.iter()).collect::<BTreeSet<_>>().len() <= k;
        if !fits {
            blocks.push(build_block(circuit, std::mem::take(&mut open_qubits), std::mem::take(&mut open_gates))?);
        }
        open_qubits.extend(g.qubits.iter().copied());
        open_gates.push(i);
    }
    if !open_gates.is_empty() {
        blocks.push(build_block(circuit, open_qubits, open_gates)?);
    }
    Ok(blocks)
}

/// Maps local circuits back onto parent qubits, renumbering rotation slots in
/// order of appearance.
fn concat_mapped<'a>(
    num_qubits: usize,
    parts: impl Iterator<Item = (&'a [usize], &'a Circuit, Option<&'a [usize]>)>,
) -> Result<Circuit> {
    let mut gates = Vec::new();
    let mut next_slot = 0;
    for (qubits, local, slots) in parts {
        for g in local.gates() {
            let kind = match g.kind {
                GateKind::Rz(p) => {
                    let slot = match slots {
                        Some(s) => s[p],
                        None => next_slot + p,
                    };
                    GateKind::Rz(slot)
                }
                k => k,
            };
            let mut mapped = Vec::with_capacity(g.qubits.len());
            for &q in &g.qubits {
                let parent_q =
                    *qubits.get(q).ok_or_else(|| Error::Internal(format!("local qubit {q} has no parent qubit")))?;
                mapped.push(parent_q);
            }
            gates.push(Gate { kind, qubits: mapped });
        }
        if slots.is_none() {
            next_slot += local.num_params();
        }
    }
    Circuit::from_gates(num_qubits, gates).map_err(|e| Error::Internal(format!("remap failed: {e}")))
}

/// Rebuilds the parent circuit from its blocks.
pub fn flatten(blocks: &[PartitionBlock], num_qubits: usize) -> Result<Circuit> {
    concat_mapped(
        num_qubits,
        blocks.iter().map(|b| (b.qubits.as_slice(), &b.circuit, Some(b.param_slots.as_slice()))),
    )
}

/// Per-block result; failed blocks keep their input circuit.
#[derive(Debug, Clone)]
pub struct BlockResult {
    pub circuit: Circuit,
    pub params: ParamVector,
    pub threshold: f64,
    pub verified_distance: f64,
    pub outcome: Option<RoundingOutcome>,
    pub failure: Option<String>,
}

impl BlockResult {
    fn passthrough(block: &PartitionBlock, params: ParamVector, threshold: f64, failure: Option<String>) -> Self {
        BlockResult {
            circuit: block.circuit.clone(),
            params,
            threshold,
            verified_distance: 0.0,
            outcome: None,
            failure,
        }
    }

    pub fn flagged(&self) -> bool {
        self.failure.is_some()
    }
}

fn optimize_one(block: &PartitionBlock, index: usize, parent: &[f64], cfg: &RoundingConfig, seed: u64) -> BlockResult {
    let params = block.local_params(parent);
    let threshold = cfg.threshold.threshold;
    if block.circuit.num_params() == 0 {
        return BlockResult::passthrough(block, params, threshold, None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut pool = SeedPool::default();
    match two_phase_round(&block.circuit, &params, None, cfg, &mut pool, &mut rng) {
        Ok(out) => BlockResult {
            circuit: out.final_circuit.clone(),
            params: out.residual_params.clone(),
            threshold,
            verified_distance: out.verified_distance,
            outcome: Some(out),
            failure: None,
        },
        Err(e) => BlockResult::passthrough(block, params, threshold, Some(e.to_string())),
    }
}

/// Rounds every block against its own unitary. Blocks run in parallel on at
/// most `workers` threads (0 picks the rayon default); each block draws from
/// its own RNG stream, so results do not depend on scheduling.
pub fn optimize_blocks(
    blocks: &[PartitionBlock],
    parent_params: &[f64],
    plan: &PartitionPlan,
    cfg: &RoundingConfig,
    seed: u64,
    workers: usize,
) -> Result<Vec<BlockResult>> {
    let global = cfg.threshold.threshold;
    let mut block_cfg = cfg.clone();
    let t = plan.block_threshold(global, blocks);
    block_cfg = block_cfg.with_threshold(t)?;
    let run = || -> Vec<BlockResult> {
        blocks
            .par_iter()
            .enumerate()
            .map(|(i, b)| optimize_one(b, i, parent_params, &block_cfg, seed))
            .collect()
    };
    if workers == 0 {
        return Ok(run());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(run))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSummary {
    pub num_blocks: usize,
    pub flagged_blocks: Vec<usize>,
    pub rz_before: usize,
    pub rz_after: usize,
    pub t_before: usize,
    pub t_after: usize,
    /// Sum of the per-block verified distances.
    pub global_bound: f64,
    pub n_rounded: usize,
    pub n_clifford: usize,
}

#[derive(Debug, Clone)]
pub struct Reassembled {
    pub circuit: Circuit,
    pub params: ParamVector,
    pub summary: PartitionSummary,
}

/// Stitches optimized blocks back in order.
pub fn reassemble(parent: &Circuit, blocks: &[PartitionBlock], results: &[BlockResult]) -> Result<Reassembled> {
    if blocks.len() != results.len() {
        return Err(Error::Internal(format!("{} blocks but {} results", blocks.len(), results.len())));
    }
    for (i, (b, r)) in blocks.iter().zip(results).enumerate() {
        if r.circuit.num_qubits() != b.qubits.len() || r.circuit.num_params() != r.params.len() {
            return Err(Error::Internal(format!("block {i} result does not match its block")));
        }
    }
    let circuit = concat_mapped(
        parent.num_qubits(),
        blocks.iter().zip(results).map(|(b, r)| (b.qubits.as_slice(), &r.circuit, None)),
    )?;
    let params: ParamVector = results.iter().flat_map(|r| r.params.iter().copied()).collect();
    let outcomes = results.iter().filter_map(|r| r.outcome.as_ref());
    let (n_rounded, n_clifford) = outcomes.fold((0, 0), |(a, b), o| (a + o.n_rounded, b + o.n_clifford));
    let summary = PartitionSummary {
        num_blocks: blocks.len(),
        flagged_blocks: results.iter().enumerate().filter(|(_, r)| r.flagged()).map(|(i, _)| i).collect(),
        rz_before: parent.num_params(),
        rz_after: circuit.num_params(),
        t_before: parent.t_count(),
        t_after: circuit.t_count(),
        global_bound: results.iter().map(|r| r.verified_distance).sum(),
        n_rounded,
        n_clifford,
    };
    Ok(Reassembled { circuit, params, summary })
}
