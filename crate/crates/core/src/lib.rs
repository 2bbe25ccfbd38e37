//! T-count reduction for Clifford+Rz circuits.
//!
//! Rotation angles are re-optimized so that as many as possible land on
//! multiples of π/4 (preferring multiples of π/2), while the circuit stays
//! within a process-distance threshold of its target unitary. Snapped
//! rotations become fixed Clifford and T gates.
//!
//! ```
//! use tcount_opt::{qasm, tcount::{two_phase_round, RoundingConfig}, optimize::SeedPool};
//! use rand::SeedableRng;
//!
//! let (c, p) = qasm::parse("qreg q[1]; rz(pi/2 + 1e-12) q[0]; h q[0];").unwrap();
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let out = two_phase_round(&c, &p, None, &RoundingConfig::default(), &mut SeedPool::default(), &mut rng).unwrap();
//! assert_eq!(out.leftover_rz, 0);
//! assert_eq!(out.n_t_gates, 0);
//! ```

pub mod circuit;
pub mod cli;
pub mod cost;
pub mod error;
pub mod families;
pub mod matrix;
pub mod optimize;
pub mod partition;
pub mod qasm;
pub mod tcount;

pub use circuit::{Circuit, Gate, GateKind, ParamVector};
pub use cost::{distance, AngleSet};
pub use error::{Error, Result};
pub use matrix::{Matrix, UnitaryMatrix};
