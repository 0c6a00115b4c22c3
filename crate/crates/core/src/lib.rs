//! Maximum cardinality bipartite matching.
//!
//! The centerpiece is [`gpu`]: BFS-kernel matching algorithms written as
//! data-parallel kernels over an emulated thread grid ([`grid`]), with
//! speculative lock-free path alternation followed by a repair pass. The
//! sequential [`baselines`], the brute-force oracle in [`matching`], and the
//! [`bench`] harness surround it.

pub mod algo;
pub mod baselines;
pub mod bench;
pub mod cli;
pub mod gpu;
pub mod graph;
pub mod grid;
pub mod matching;

pub use algo::Algorithm;
pub use gpu::{apfb, apsb, BfsKernel, Driver, MatchRun, PhaseConfig, PhaseCounters};
pub use graph::BipartiteGraph;
pub use grid::{GridConfig, GridMode, Launcher, Schedule};
pub use matching::MatchingState;
