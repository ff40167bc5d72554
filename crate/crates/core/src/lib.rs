//! Decision core for an LSM-tree whose compactions may merge any
//! timestamp-valid set of sorted runs at any time.
//!
//! The crate is `no_std` (with `alloc`) and holds only pure computation:
//!
//! - [`types`]: unit conventions and the tree-state value types.
//! - [`cost`]: the windowed-state cost model and elapsed-window estimation.
//! - [`candidates`]: enumeration of valid compaction candidates.
//! - [`scorer`]: short/long-term effects, effectiveness scores and selection.
//! - [`search`]: grid search over decision parameters by simulation.
//! - [`oracle`]: exhaustive optimum on tiny instances.
//! - [`baseline`]: classical Leveling / Tiering / LazyLeveling triggers.
//!
//! The `std` feature (on by default) lets the parameter search fan out over
//! worker threads. Results are identical with or without it.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baseline;
pub mod candidates;
pub mod cost;
pub mod error;
pub mod oracle;
pub mod scorer;
pub mod search;
pub mod types;

pub use baseline::{baseline_trigger, BaselineAction, BaselineKind, BaselinePolicy, BASELINE_STALL_RUNS, BASELINE_STALL_US};
pub use candidates::{all_candidates, CandidateSet, CompactionCandidate, EnumConfig, Pattern, Shape};
pub use cost::{
    amdahl_adjusted_windows, elapsed_windows, evolve_state, point_cost, range_cost, update_cost,
    window_cost, window_cost_f,
    WindowCostBreakdown, WindowModel,
};
pub use error::{Error, Result};
pub use oracle::{optimal_sequence, OracleAction, Plan, TinyInstance};
pub use scorer::{pick_best, Amdahl, ScoredCandidate, ScoringOptions};
pub use search::{
    find_best_params, should_recompute, simulate_policy, SearchConfig, SearchResult,
    SearchSnapshot, TraceRecord,
};
pub use types::{
    bloom_fpr, ActionOutcome, CostConstants, DecisionParams, RunId, SortedRun, TreeState,
    TreeViolation, WorkloadMix,
};
