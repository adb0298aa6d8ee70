//! A simulated massively-parallel (MPC) join engine.
//!
//! The crate models a cluster of `p` servers that communicate in synchronized
//! rounds, and implements skew-aware join algorithms for acyclic queries on
//! top of it: the classical Yannakakis pipeline, an instance-optimal algorithm
//! for r-hierarchical joins, an output-optimal algorithm for general acyclic
//! joins, and a linear-load join-aggregate evaluator over annotated relations.
//! Every algorithm is metered by a load ledger that records the maximum number
//! of message units (tuples and integers) received by any server in any round,
//! which is the cost measure everything here is optimized for.
//!
//! The crate also ships the structural analyses the algorithms rely on (GYO
//! reduction, join trees, hierarchical/tall-flat classification, minimal
//! length-3 paths, integral edge covers), sequential oracles for verifying
//! results and load predictions, and seeded generators for the instance
//! families used as benchmarks and stress workloads.

pub mod aggregates;
pub mod algorithms;
pub mod analysis;
pub mod data;
pub mod generators;
pub mod primitives;
pub mod query;
pub mod runtime;

pub use data::{Instance, Relation, Semiring, Tuple, Value};
pub use query::{QueryClass, QueryHypergraph};
pub use runtime::{Cluster, LoadReport};
