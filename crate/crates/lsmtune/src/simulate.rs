//! Analytical run of a compound workload on the cost model alone.
//!
//! The tree starts as the preload in one run on the deepest level. Each
//! phase is cut into whole count windows of its rescaled mix. At every
//! window boundary with no compaction in flight the policy decides; a
//! started compaction occupies its estimated window count, during which one
//! flush lands per window with updates, and is installed at the end.

use lsmtune_core::{
    baseline_trigger, find_best_params, pick_best, should_recompute, window_cost, BaselineAction,
    CompactionCandidate, CostConstants, DecisionParams, SearchSnapshot, SortedRun, TreeState, WindowModel,
    WorkloadMix,
};

use crate::config::EngineConfig;
use crate::error::Result;
use crate::workload::{CompoundWorkload, SCAN_LEN};

#[derive(Debug, Clone, PartialEq)]
pub struct SimPhase {
    pub mix: char,
    pub windows: u64,
    pub ops: f64,
    pub cost_us: f64,
    pub mean_runs: f64,
    pub end_runs: usize,
    pub compactions: u64,
}

impl SimPhase {
    pub fn avg_cost_us(&self) -> f64 {
        if self.ops > 0.0 { self.cost_us / self.ops } else { 0.0 }
    }

    /// Operations per second of modelled device time.
    pub fn throughput(&self) -> f64 {
        if self.cost_us > 0.0 { self.ops / (self.cost_us / 1e6) } else { 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub policy: String,
    pub phases: Vec<SimPhase>,
    pub searches: u64,
    pub final_params: Option<DecisionParams>,
}

impl SimReport {
    pub fn ops(&self) -> f64 {
        self.phases.iter().map(|p| p.ops).sum()
    }

    pub fn cost_us(&self) -> f64 {
        self.phases.iter().map(|p| p.cost_us).sum()
    }

    pub fn throughput(&self) -> f64 {
        let cost = self.cost_us();
        if cost > 0.0 { self.ops() / (cost / 1e6) } else { 0.0 }
    }

    pub fn table(&self) -> String {
        let mut out = format!("policy {}\nphase,windows,ops,avg_cost_us,throughput_ops_s,mean_runs,end_runs,compactions\n", self.policy);
        for p in &self.phases {
            out.push_str(&format!(
                "{},{},{:.0},{:.3},{:.0},{:.2},{},{}\n",
                p.mix,
                p.windows,
                p.ops,
                p.avg_cost_us(),
                p.throughput(),
                p.mean_runs,
                p.end_runs,
                p.compactions
            ));
        }
        out.push_str(&format!("total throughput {:.0} ops/s, {} searches\n", self.throughput(), self.searches));
        out
    }
}

/// Cost constants used by the simulation: the engine's, with range lookups
/// reading `SCAN_LEN` entries.
pub fn sim_constants(config: &EngineConfig) -> CostConstants {
    let mut c = config.constants();
    c.scan_blocks = (SCAN_LEN as u64 * c.entry_size) as f64 / c.block_size as f64;
    c
}

struct Pending {
    candidate: CompactionCandidate,
    left: u64,
}

enum Decider {
    Arce { params: DecisionParams, last: Option<SearchSnapshot>, searches: u64 },
    Baseline(lsmtune_core::BaselinePolicy),
}

const NO_STALL: DecisionParams = DecisionParams { long_term_weight: 0.0, stall_threshold: u64::MAX, stall_rate_us: 0.0 };

pub fn simulate_workload(config: &EngineConfig, workload: &CompoundWorkload) -> Result<SimReport> {
    config.validate()?;
    let constants = sim_constants(config);
    let u = constants.window_update_count()? as f64;
    let mut state = TreeState::new(config.max_levels);
    if workload.preload_bytes > 0 {
        state.insert(SortedRun::new(0, config.max_levels - 1, workload.preload_bytes, 0, 0))?;
    }
    let mut decider = match config.policy.baseline(config.memtable_size)? {
        Some(b) => Decider::Baseline(b),
        None => Decider::Arce { params: config.initial_params()?, last: None, searches: 0 },
    };
    let search = config.search_config();
    let scoring = config.scoring(1, 0);
    let mut pending: Option<Pending> = None;
    let mut phases = Vec::with_capacity(workload.phases.len());

    for phase in &workload.phases {
        let m = phase.mix;
        let raw = WorkloadMix::new(f64::from(m.range_pct), f64::from(m.update_pct), f64::from(m.point_pct))?;
        let mix = raw.rescaled_to_window(u);
        let windows = if mix.is_idle() { 0 } else { (phase.ops as f64 / mix.total()).round().max(1.0) as u64 };
        let model = WindowModel::new(&constants, &mix);
        let mut cost_us = 0.0;
        let mut run_sum = 0u64;
        let mut compactions = 0;
        for _ in 0..windows {
            if pending.is_none() {
                pending = decide(&mut decider, &mut state, &mix, &constants, &model, &search, &scoring)?;
            }
            let s = state.run_count() as u64;
            let params = match &decider {
                Decider::Arce { params, .. } => *params,
                Decider::Baseline(_) => NO_STALL,
            };
            cost_us += window_cost(s, &constants, &mix, &params).total;
            run_sum += s;
            if mix.update > 0.0 {
                state.push_flush(constants.memtable_size);
            }
            if let Some(p) = &mut pending {
                p.left = p.left.saturating_sub(1);
                if p.left == 0 {
                    let done = pending.take().expect("pending compaction");
                    let id = state.next_id();
                    done.candidate.apply(&mut state, id)?;
                    compactions += 1;
                }
            }
        }
        phases.push(SimPhase {
            mix: m.name,
            windows,
            ops: windows as f64 * mix.total(),
            cost_us,
            mean_runs: if windows > 0 { run_sum as f64 / windows as f64 } else { state.run_count() as f64 },
            end_runs: state.run_count(),
            compactions,
        });
    }
    let (searches, final_params) = match decider {
        Decider::Arce { searches, params, .. } => (searches, Some(params)),
        Decider::Baseline(_) => (0, None),
    };
    Ok(SimReport { policy: config.policy.name().to_string(), phases, searches, final_params })
}

fn decide(
    decider: &mut Decider,
    state: &mut TreeState,
    mix: &WorkloadMix,
    constants: &CostConstants,
    model: &WindowModel,
    search: &lsmtune_core::SearchConfig,
    scoring: &lsmtune_core::ScoringOptions,
) -> Result<Option<Pending>> {
    match decider {
        Decider::Arce { params, last, searches } => {
            let snapshot =
                SearchSnapshot { mix: *mix, total_bytes: state.total_bytes(), run_count: state.run_count() as u64 };
            let stale = last.as_ref().is_none_or(|prev| should_recompute(prev, &snapshot, search.recompute_threshold));
            if stale && state.run_count() > 1 {
                match find_best_params(state, mix, constants, search) {
                    Ok(found) => *params = found.best_params,
                    Err(lsmtune_core::Error::NeverCompletes | lsmtune_core::Error::EmptySimulation) => {}
                    Err(e) => return Err(e.into()),
                }
                *searches += 1;
                *last = Some(snapshot);
            }
            Ok(pick_best(state, mix, constants, params, scoring)
                .map(|best| Pending { left: best.windows.max(1), candidate: best.candidate }))
        }
        Decider::Baseline(policy) => loop {
            match baseline_trigger(policy, state) {
                None => return Ok(None),
                Some(action @ BaselineAction::Move { .. }) => {
                    let id = state.next_id();
                    action.apply(state, id)?;
                }
                Some(BaselineAction::Compact(candidate)) => {
                    let s = state.run_count() as u64;
                    let left = match model.elapsed_windows(candidate.bytes, s, &NO_STALL) {
                        Ok(t) => t.max(1),
                        Err(lsmtune_core::Error::NeverCompletes) => u64::MAX,
                        Err(e) => return Err(e.into()),
                    };
                    return Ok(Some(Pending { candidate, left }));
                }
            }
        },
    }
}
