//! Exhaustive optimum over action sequences on tiny instances.
//!
//! An instance fixes a starting tree, a per-window workload schedule of `W`
//! windows and the stall parameters. A sequence is a list of actions chosen
//! at window boundaries: idle for one window, or start a candidate that runs
//! until its I/O is covered by foreground time. Every sequence spans exactly
//! `W` windows, so the operation count is shared and minimizing the average
//! cost is minimizing the total. Compactions that would not finish by the
//! horizon are not admitted.
//!
//! Costs are accumulated window by window with that window's mix, which is
//! also how the adaptive policy's trace is charged.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::candidates::{for_each_shape, Shape};
use crate::cost::{window_cost, window_growth};
use crate::error::{Error, Result};
use crate::scorer::{select_shape, ScoreContext, Scratch};
use crate::search::{search_tree, SearchConfig, SimTree};
use crate::types::{CostConstants, DecisionParams, WorkloadMix};

pub const MAX_RUNS: usize = 6;
pub const MAX_WINDOWS: usize = 5;
const MAX_MEMO_STATES: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub max_levels: usize,
    /// `(level, size_bytes)` of each starting run.
    pub runs: Vec<(usize, u64)>,
    pub schedule: Vec<WorkloadMix>,
    pub constants: CostConstants,
    pub stall_threshold: u64,
    pub stall_rate_us: f64,
}

impl TinyInstance {
    pub fn validate(&self) -> Result<()> {
        if self.runs.len() > MAX_RUNS {
            return Err(Error::TooLarge("more than 6 starting runs"));
        }
        if self.schedule.len() > MAX_WINDOWS {
            return Err(Error::TooLarge("more than 5 windows"));
        }
        if self.schedule.is_empty() {
            return Err(Error::EmptySimulation);
        }
        if self.max_levels == 0 || self.max_levels > crate::candidates::LEVEL_CAP {
            return Err(Error::Config("level count must be within 1..=8"));
        }
        if self.runs.iter().any(|&(l, size)| l >= self.max_levels || size == 0) {
            return Err(Error::Config("run outside the level cap or empty"));
        }
        if self.schedule.iter().any(|m| !(m.total() > 0.0)) {
            return Err(Error::Config("every scheduled window needs operations"));
        }
        if self.stall_threshold == 0 || !(self.stall_rate_us >= 0.0) {
            return Err(Error::Config("stall threshold must be positive and rate non-negative"));
        }
        self.constants.validate()
    }

    pub fn windows(&self) -> usize {
        self.schedule.len()
    }

    fn params(&self) -> DecisionParams {
        DecisionParams {
            long_term_weight: 0.0,
            stall_threshold: self.stall_threshold,
            stall_rate_us: self.stall_rate_us,
        }
    }

    fn start(&self) -> SimTree {
        let mut levels = alloc::vec![Vec::new(); self.max_levels];
        for &(l, size) in &self.runs {
            levels[l].push(size);
        }
        for l in &mut levels {
            l.sort_unstable();
        }
        SimTree {
            levels,
            runs: self.runs.len() as u64,
            bottom: self.max_levels - 1,
            flush_bytes: self.constants.memtable_size,
        }
    }

    pub fn total_ops(&self) -> f64 {
        self.schedule.iter().map(WorkloadMix::total).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleAction {
    Idle,
    /// Positional candidate against the size-sorted tree at that point.
    Compact(Shape),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub actions: Vec<OracleAction>,
    pub total_cost: f64,
    pub total_ops: f64,
    pub avg_cost: f64,
}

struct Step {
    tree: SimTree,
    window: usize,
    cost: f64,
}

/// Carries out `action` at window `w`; `None` when a compaction would not
/// finish by the horizon.
fn step(inst: &TinyInstance, tree: &SimTree, w: usize, action: &OracleAction) -> Option<Step> {
    let params = inst.params();
    match action {
        OracleAction::Idle => {
            let mix = &inst.schedule[w];
            let cost = window_cost(tree.runs, &inst.constants, mix, &params).total;
            let mut next = tree.clone();
            next.idle(window_growth(mix));
            Some(Step { tree: next, window: w + 1, cost })
        }
        OracleAction::Compact(shape) => {
            let target = inst.constants.compaction_io_us(shape.bytes);
            let mut cost = 0.0;
            let mut s = tree.runs;
            let mut flushes = 0;
            let mut i = w;
            while i < inst.windows() {
                let mix = &inst.schedule[i];
                cost += window_cost(s, &inst.constants, mix, &params).total;
                let g = window_growth(mix);
                s += g;
                flushes += g;
                i += 1;
                if cost >= target {
                    let mut next = tree.clone();
                    next.compact(shape, flushes);
                    return Some(Step { tree: next, window: i, cost });
                }
            }
            None
        }
    }
}

fn shapes_of(tree: &SimTree) -> Vec<Shape> {
    let mut out = Vec::new();
    for_each_shape(&tree.levels, tree.bottom, usize::MAX, |s| out.push(s));
    out
}

/// Forward replay of `actions`; the reference evaluation of any sequence.
pub fn evaluate_sequence(inst: &TinyInstance, actions: &[OracleAction]) -> Result<Plan> {
    inst.validate()?;
    let mut tree = inst.start();
    let mut w = 0;
    let mut total_cost = 0.0;
    for action in actions {
        if w >= inst.windows() {
            return Err(Error::Config("sequence runs past the horizon"));
        }
        if let OracleAction::Compact(shape) = action {
            if !shapes_of(&tree).contains(shape) {
                return Err(Error::Config("compaction is not a candidate of the current tree"));
            }
        }
        let next = step(inst, &tree, w, action)
            .ok_or(Error::Config("compaction does not finish by the horizon"))?;
        total_cost += next.cost;
        tree = next.tree;
        w = next.window;
    }
    if w != inst.windows() {
        return Err(Error::Config("sequence does not cover every window"));
    }
    let total_ops = inst.total_ops();
    Ok(Plan { actions: actions.to_vec(), total_cost, total_ops, avg_cost: total_cost / total_ops })
}

type MemoKey = (usize, Vec<Vec<u64>>);

struct Solver<'a> {
    inst: &'a TinyInstance,
    memo: BTreeMap<MemoKey, (f64, OracleAction)>,
}

impl Solver<'_> {
    fn solve(&mut self, tree: &SimTree, w: usize) -> Result<f64> {
        if w == self.inst.windows() {
            return Ok(0.0);
        }
        let key = (w, tree.levels.clone());
        if let Some((cost, _)) = self.memo.get(&key) {
            return Ok(*cost);
        }
        if self.memo.len() >= MAX_MEMO_STATES {
            return Err(Error::TooLarge("state space exceeds the memo budget"));
        }
        let idle = step(self.inst, tree, w, &OracleAction::Idle).expect("idle always fits");
        let mut best = (idle.cost + self.solve(&idle.tree, idle.window)?, OracleAction::Idle);
        for shape in shapes_of(tree) {
            let action = OracleAction::Compact(shape);
            if let Some(next) = step(self.inst, tree, w, &action) {
                let total = next.cost + self.solve(&next.tree, next.window)?;
                if total < best.0 {
                    best = (total, action);
                }
            }
        }
        self.memo.insert(key, best);
        Ok(best.0)
    }
}

/// Cheapest sequence over every admissible action sequence.
///
/// The returned cost comes from replaying the chosen sequence, so
/// [`evaluate_sequence`] on `plan.actions` reproduces it exactly.
pub fn optimal_sequence(inst: &TinyInstance) -> Result<Plan> {
    inst.validate()?;
    let mut solver = Solver { inst, memo: BTreeMap::new() };
    let start = inst.start();
    solver.solve(&start, 0)?;
    let mut actions = Vec::new();
    let mut tree = start;
    let mut w = 0;
    while w < inst.windows() {
        let (_, action) = solver.memo[&(w, tree.levels.clone())];
        let next = step(inst, &tree, w, &action).expect("memoized action is admissible");
        actions.push(action);
        tree = next.tree;
        w = next.window;
    }
    evaluate_sequence(inst, &actions)
}

/// Minimum total cost by enumerating every sequence without memoization,
/// together with the number of complete sequences seen.
pub fn brute_force_minimum(inst: &TinyInstance) -> Result<(f64, u64)> {
    inst.validate()?;
    fn walk(inst: &TinyInstance, tree: &SimTree, w: usize, acc: f64, best: &mut f64, n: &mut u64) {
        if w == inst.windows() {
            *n += 1;
            if acc < *best {
                *best = acc;
            }
            return;
        }
        let mut actions = alloc::vec![OracleAction::Idle];
        actions.extend(shapes_of(tree).into_iter().map(OracleAction::Compact));
        for action in actions {
            if let Some(next) = step(inst, tree, w, &action) {
                walk(inst, &next.tree, next.window, acc + next.cost, best, n);
            }
        }
    }
    let mut best = f64::INFINITY;
    let mut n = 0;
    walk(inst, &inst.start(), 0, 0.0, &mut best, &mut n);
    Ok((best, n))
}

/// Decisions of the adaptive policy on the instance: at every boundary the
/// parameters are searched under the current window's mix (with the
/// instance's stall threshold and rate held fixed), then the best candidate
/// is started. A compaction that cannot finish by the horizon leaves the
/// remaining windows idle.
pub fn adaptive_sequence(inst: &TinyInstance, config: &SearchConfig) -> Result<Plan> {
    inst.validate()?;
    let config = SearchConfig {
        fixed_stall: Some((inst.stall_threshold, inst.stall_rate_us)),
        ..config.clone()
    };
    let mut tree = inst.start();
    let mut w = 0;
    let mut actions = Vec::new();
    let mut scratch = Scratch::default();
    while w < inst.windows() {
        let mix = inst.schedule[w];
        let found = search_tree(&tree, &mix, &inst.constants, &config)?;
        let ctx = ScoreContext::new(&inst.constants, &mix, &config.scoring);
        let pick = select_shape(&tree.levels, tree.bottom, tree.runs, &ctx, &found.best_params, &mut scratch)?;
        let action = pick.map_or(OracleAction::Idle, |p| OracleAction::Compact(p.shape));
        match step(inst, &tree, w, &action) {
            Some(next) => {
                actions.push(action);
                tree = next.tree;
                w = next.window;
            }
            None => {
                actions.extend(core::iter::repeat(OracleAction::Idle).take(inst.windows() - w));
                break;
            }
        }
    }
    evaluate_sequence(inst, &actions)
}

/// Adaptive average cost over the optimum (1 when both are zero).
pub fn approximation_ratio(adaptive: &Plan, optimal: &Plan) -> f64 {
    if optimal.avg_cost == 0.0 {
        return if adaptive.avg_cost == 0.0 { 1.0 } else { f64::INFINITY };
    }
    adaptive.avg_cost / optimal.avg_cost
}
