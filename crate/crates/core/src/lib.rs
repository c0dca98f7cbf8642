//! Active learning on graphs with noisy structure.
//!
//! The crate alternates three stages until a labeling budget is spent:
//! representation learning on the current graph, cluster-based node
//! selection that prefers clean neighborhoods, and pseudo-label driven edge
//! reweighting. A downstream two-layer GCN scores the result.
//!
//! [`pipeline::run_cell`] runs one complete experiment; the individual
//! stages live in [`representation`], [`selection`], [`cleaning`],
//! [`driver`] and [`eval`].

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cleaning;
pub mod driver;
pub mod error;
pub mod eval;
pub mod graph;
pub mod nn;
pub mod pipeline;
pub mod representation;
pub mod selection;

pub use driver::{GalcleanConfig, LabelOracle, RunTrace, Scenario};
pub use error::{Error, OracleError, Result};
pub use graph::{Dataset, FeatureMatrix, LabelStore, NodeId, SplitSet, WeightedGraph};
pub use pipeline::{run_cell, CellInputs, CellOutcome, Method};
