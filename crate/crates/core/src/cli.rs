//! Command-line front end: `round`, `optimize` and `verify`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::{Circuit, GateKind, ParamVector};
use crate::cost::{distance, AngleSet};
use crate::error::{Error, Result};
use crate::matrix::UnitaryMatrix;
use crate::optimize::SeedPool;
use crate::partition::{optimize_blocks, partition, reassemble, BudgetPolicy, PartitionPlan, DEFAULT_BLOCK_SIZE};
use crate::qasm;
use crate::tcount::{two_phase_round, RoundingConfig, DEFAULT_THRESHOLD};

pub const EXIT_OK: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Largest register for which `optimize` also measures the end-to-end distance.
const DIRECT_CHECK_QUBITS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "tcount-opt", version, about = "Reduce T-count by rounding Rz angles to Clifford+T")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Round a single circuit.
    Round(RunArgs),
    /// Partition into blocks and round each block.
    Optimize(RunArgs),
    /// Print the distance between two circuits.
    Verify {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AngleSetArg {
    #[value(name = "clifford_t", alias = "clifford-t")]
    CliffordT,
    #[value(name = "clifford")]
    Clifford,
    #[value(name = "eighth")]
    Eighth,
}

impl AngleSetArg {
    fn set(self) -> AngleSet {
        match self {
            AngleSetArg::CliffordT => AngleSet::clifford_t(),
            AngleSetArg::Clifford => AngleSet::clifford(),
            AngleSetArg::Eighth => AngleSet::eighth(),
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: usize,
    #[arg(long, value_enum, default_value = "clifford_t")]
    angle_set: AngleSetArg,
    #[arg(long, default_value_t = 1.0)]
    penalty_factor: f64,
    /// Where to write the result (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Circuit whose unitary is the target (`round` only; defaults to the input's own).
    #[arg(long)]
    target: Option<PathBuf>,
}

/// Machine-readable summary of a run. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub input: String,
    pub mode: String,
    pub threshold: f64,
    pub angle_set: String,
    pub penalty_factor: f64,
    pub starts: usize,
    pub seed: u64,
    pub qubits: usize,
    pub block_size: Option<usize>,
    pub num_blocks: Option<usize>,
    pub flagged_blocks: Vec<usize>,
    /// Rotations rounded to the full angle set.
    pub n_rounded: usize,
    /// Of those, rounded to Clifford angles.
    pub n_clifford: usize,
    /// `n_rounded − n_clifford`.
    pub n_t: usize,
    pub t_before: usize,
    pub t_after: usize,
    pub rz_before: usize,
    pub rz_after: usize,
    pub angle_classes: BTreeMap<String, usize>,
    pub leftover_angles: Vec<f64>,
    pub verified_distance: f64,
    /// `direct` for a full-circuit measurement, `block_sum` for the summed bound.
    pub distance_kind: String,
    pub direct_distance: Option<f64>,
    pub clifford_certificate: Option<usize>,
    pub wall_time_s: f64,
}

pub fn report_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

fn angle_class(angle: f64) -> &'static str {
    let k = (angle / (PI / 8.0)).round();
    if (angle - k * PI / 8.0).abs() > 1e-9 {
        return "fixed_rz";
    }
    match (k as i64).rem_euclid(16) {
        0 => "identity",
        k if k % 2 == 1 => "sqrt_t",
        k if k % 4 == 2 => "t",
        8 => "z",
        _ => "s",
    }
}

/// Gate counts by phase class: `t`, `s` (S and S†), `z`, `sqrt_t` (odd
/// multiples of π/8), `fixed_rz` (other frozen angles) and `rz` (free).
pub fn angle_class_histogram(circuit: &Circuit) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for g in circuit.gates() {
        let class = match g.kind {
            GateKind::T | GateKind::Tdg => "t",
            GateKind::S | GateKind::Sdg => "s",
            GateKind::Z => "z",
            GateKind::Rz(_) => "rz",
            GateKind::FixedRz(a) => angle_class(a),
            _ => continue,
        };
        *h.entry(class.to_string()).or_insert(0) += 1;
    }
    h
}

fn read_circuit(path: &Path) -> Result<(Circuit, ParamVector)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    qasm::parse(&text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

enum Outcome {
    Ok,
    ThresholdMissed(String),
}

fn validate_args(args: &RunArgs) -> Result<RoundingConfig> {
    if args.starts == 0 {
        return Err(Error::input("--starts must be at least 1"));
    }
    if !(args.penalty_factor.is_finite() && args.penalty_factor >= 0.0) {
        return Err(Error::input("--penalty-factor must be a finite non-negative number"));
    }
    let mut cfg = RoundingConfig::default().with_threshold(args.threshold)?.with_angle_set(args.angle_set.set());
    cfg.penalty_factor = args.penalty_factor;
    cfg.solver = cfg.solver.with_starts(args.starts);
    Ok(cfg)
}

fn base_report(args: &RunArgs, mode: &str, circuit: &Circuit) -> RunReport {
    RunReport {
        input: args.input.display().to_string(),
        mode: mode.into(),
        threshold: args.threshold,
        angle_set: args.angle_set.set().tag().to_string(),
        penalty_factor: args.penalty_factor,
        starts: args.starts,
        seed: args.seed,
        qubits: circuit.num_qubits(),
        block_size: None,
        num_blocks: None,
        flagged_blocks: Vec::new(),
        n_rounded: 0,
        n_clifford: 0,
        n_t: 0,
        t_before: circuit.t_count(),
        t_after: 0,
        rz_before: circuit.num_params(),
        rz_after: 0,
        angle_classes: BTreeMap::new(),
        leftover_angles: Vec::new(),
        verified_distance: 0.0,
        distance_kind: "direct".into(),
        direct_distance: None,
        clifford_certificate: None,
        wall_time_s: 0.0,
    }
}

fn finish_run(args: &RunArgs, mut report: RunReport, circuit: &Circuit, params: &[f64], started: Instant) -> Result<()> {
    report.t_after = circuit.t_count();
    report.rz_after = circuit.num_params();
    report.angle_classes = angle_class_histogram(circuit);
    report.leftover_angles = params.to_vec();
    report.wall_time_s = started.elapsed().as_secs_f64();
    let text = qasm::emit(circuit, params);
    match &args.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &args.report {
        write_text(p, &(report_json(&report) + "\n"))?;
    }
    eprintln!(
        "T {} -> {}, Rz {} -> {}, distance {:e} ({})",
        report.t_before, report.t_after, report.rz_before, report.rz_after, report.verified_distance, report.distance_kind
    );
    Ok(())
}

fn run_round(args: &RunArgs) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = validate_args(args)?;
    let (circuit, params) = read_circuit(&args.input)?;
    let target: UnitaryMatrix = match &args.target {
        Some(path) => {
            let (tc, tp) = read_circuit(path)?;
            if tc.num_qubits() != circuit.num_qubits() {
                return Err(Error::input(format!(
                    "target has {} qubits, input has {}",
                    tc.num_qubits(),
                    circuit.num_qubits()
                )));
            }
            tc.build_unitary(&tp)?
        }
        None => circuit.build_unitary(&params)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut pool = SeedPool::default();
    let out = match two_phase_round(&circuit, &params, Some(&target), &cfg, &mut pool, &mut rng) {
        Ok(out) => out,
        Err(Error::Infeasible(msg)) => return Ok(Outcome::ThresholdMissed(msg)),
        Err(e) => return Err(e),
    };
    let verified = distance(&target, &out.final_circuit.build_unitary(&out.residual_params)?)?;
    let mut report = base_report(args, "round", &circuit);
    report.n_rounded = out.n_rounded;
    report.n_clifford = out.n_clifford;
    report.n_t = out.n_rounded - out.n_clifford;
    report.verified_distance = verified;
    report.direct_distance = Some(verified);
    report.clifford_certificate = out.clifford_certificate;
    if verified > args.threshold {
        return Ok(Outcome::ThresholdMissed(format!("verified distance {verified:e} exceeds {:e}", args.threshold)));
    }
    finish_run(args, report, &out.final_circuit, &out.residual_params, started)?;
    Ok(Outcome::Ok)
}

fn run_optimize(args: &RunArgs) -> Result<Outcome> {
    let started = Instant::now();
    if args.target.is_some() {
        return Err(Error::input("--target is only supported by `round`"));
    }
    let cfg = validate_args(args)?;
    let plan = PartitionPlan::new(args.block_size, BudgetPolicy::Uniform)?;
    let (circuit, params) = read_circuit(&args.input)?;
    let blocks = partition(&circuit, &plan)?;
    let results = optimize_blocks(&blocks, &params, &plan, &cfg, args.seed, 0)?;
    let out = reassemble(&circuit, &blocks, &results)?;
    for (i, r) in results.iter().enumerate() {
        if let Some(msg) = &r.failure {
            eprintln!("block {i} left unchanged: {msg}");
        }
    }
    let s = &out.summary;
    let mut report = base_report(args, "optimize", &circuit);
    report.block_size = Some(args.block_size);
    report.num_blocks = Some(s.num_blocks);
    report.flagged_blocks = s.flagged_blocks.clone();
    report.n_rounded = s.n_rounded;
    report.n_clifford = s.n_clifford;
    report.n_t = s.n_rounded - s.n_clifford;
    report.verified_distance = s.global_bound;
    report.distance_kind = "block_sum".into();
    if circuit.num_qubits() <= DIRECT_CHECK_QUBITS {
        let d = distance(&circuit.build_unitary(&params)?, &out.circuit.build_unitary(&out.params)?)?;
        report.direct_distance = Some(d);
        if d > args.threshold {
            return Ok(Outcome::ThresholdMissed(format!("distance {d:e} exceeds {:e}", args.threshold)));
        }
    }
    if s.global_bound > args.threshold {
        return Ok(Outcome::ThresholdMissed(format!("block bound {:e} exceeds {:e}", s.global_bound, args.threshold)));
    }
    finish_run(args, report, &out.circuit, &out.params, started)?;
    Ok(Outcome::Ok)
}

fn run_verify(a: &Path, b: &Path, threshold: f64) -> Result<Outcome> {
    let (ca, pa) = read_circuit(a)?;
    let (cb, pb) = read_circuit(b)?;
    if ca.num_qubits() != cb.num_qubits() {
        return Err(Error::input(format!("{} qubits vs {} qubits", ca.num_qubits(), cb.num_qubits())));
    }
    let d = distance(&ca.build_unitary(&pa)?, &cb.build_unitary(&pb)?)?;
    println!("{d}");
    if d > threshold {
        return Ok(Outcome::ThresholdMissed(format!("distance {d:e} exceeds {threshold:e}")));
    }
    Ok(Outcome::Ok)
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Round(args) => run_round(args),
        Command::Optimize(args) => run_optimize(args),
        Command::Verify { a, b, threshold } => run_verify(a, b, *threshold),
    };
    match result {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::ThresholdMissed(msg)) => {
            eprintln!("threshold not met: {msg}");
            EXIT_THRESHOLD
        }
        Err(Error::Parse(diags)) => {
            for d in diags {
                eprintln!("{d}");
            }
            EXIT_INPUT
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_classes() {
        assert_eq!(angle_class(PI / 8.0), "sqrt_t");
        assert_eq!(angle_class(-3.0 * PI / 8.0), "sqrt_t");
        assert_eq!(angle_class(PI / 4.0), "t");
        assert_eq!(angle_class(-PI / 2.0), "s");
        assert_eq!(angle_class(PI), "z");
        assert_eq!(angle_class(2.0 * PI), "identity");
        assert_eq!(angle_class(0.3), "fixed_rz");
    }

    #[test]
    fn histogram_counts_phase_gates() {
        let mut c = Circuit::new(2);
        c.push(GateKind::T, &[0]).push(GateKind::Tdg, &[1]).push(GateKind::Sdg, &[0]).h(1);
        c.push(GateKind::FixedRz(PI / 8.0), &[0]);
        c.rz(1);
        let h = angle_class_histogram(&c);
        assert_eq!(h["t"], 2);
        assert_eq!(h["s"], 1);
        assert_eq!(h["sqrt_t"], 1);
        assert_eq!(h["rz"], 1);
        assert!(!h.contains_key("z"));
    }

    #[test]
    fn bad_flags_are_input_errors() {
        assert_eq!(run(["tcount-opt", "round"]), EXIT_INPUT);
        assert_eq!(run(["tcount-opt", "round", "x.qasm", "--angle-set", "tenth"]), EXIT_INPUT);
        assert_eq!(run(["tcount-opt", "round", "/nonexistent/x.qasm"]), EXIT_INPUT);
        assert_eq!(run(["tcount-opt", "--help"]), EXIT_OK);
    }
}
