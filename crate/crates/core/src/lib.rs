//! Simulation and verification laboratory for batched, weighted balls-into-bins.
//!
//! Balls arrive in batches of `b`; every ball of a batch is placed using the bin
//! loads frozen at the start of the batch. Allocation processes are described by
//! a probability vector over load ranks (rank 1 = most loaded bin).
//!
//! Module map:
//! - [`loads`], [`weights`], [`seed`]: load vectors, ball-weight laws, RNG derivation.
//! - [`processes`]: probability vectors, random tie-breaking and the vector conditions.
//! - [`graphs`]: regular graphs, exact conductance and the graphical vector.
//! - [`sim`]: the batched allocation engine and run traces.
//! - [`potentials`]: hyperbolic cosine and threshold potentials, drift checks.
//! - [`experiments`]: campaigns, lower-bound experiments, calibration and CSV output.

pub mod error;
pub mod experiments;
pub mod graphs;
pub mod loads;
pub mod potentials;
pub mod processes;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use loads::{LoadState, NormalizedLoads};
pub use processes::{ProbabilityVector, ProcessKind, ProcessSpec, TieBreaking};
pub use seed::RngSeedPlan;
pub use weights::{WeightDistribution, WeightKind};
