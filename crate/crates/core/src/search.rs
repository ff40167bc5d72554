//! Grid search over `(M, c, k)` by simulating greedy decisions.
//!
//! Each grid tuple drives a private copy of the tree for `max_iter`
//! decisions. A decision either compacts the best candidate, letting `t`
//! windows (and `t` flushes) pass, or idles for one window. The tuple with the
//! lowest simulated cost per operation wins.
//!
//! Pruning: `c` runs from 1 in steps of `c_step` while below four times the
//! run count; `k` takes the configured values; `M` runs from 0 in steps of
//! `m_step` up to the first value that makes the largest-`y` candidate win.
//!
//! All tuples are simulated together and share a trajectory until their
//! decisions differ, so the staircase of each distinct tree state is built
//! once.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use crate::candidates::{bottom_level, Shape};
use crate::error::{Error, Result};
use core::cmp::Ordering;

use crate::cost::amdahl_adjusted_windows;
use crate::scorer::{
    long_term_effect, prefer, select_shape, short_term_effect, staircase, staircase_shapes, ScoreContext,
    ScoringOptions, Scratch, ShapeScore,
};
use crate::types::{CostConstants, DecisionParams, TreeState, WorkloadMix};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub m_step: f64,
    pub c_step: u64,
    pub k_candidates: Vec<f64>,
    pub max_iter: usize,
    /// Relative drift (`d`) that triggers a new search.
    pub recompute_threshold: f64,
    pub workers: usize,
    /// Upper bound on `M` grid points per `(c, k)`.
    pub max_m_steps: usize,
    /// Searches `M` only, with the stall threshold and rate held here.
    pub fixed_stall: Option<(u64, f64)>,
    pub scoring: ScoringOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            m_step: 5.0,
            c_step: 2,
            k_candidates: vec![6.0, 12.0, 24.0],
            max_iter: 400,
            recompute_threshold: 0.1,
            workers: 16,
            max_m_steps: 64,
            fixed_stall: None,
            scoring: ScoringOptions::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_step > 0.0) || self.c_step == 0 || self.max_iter == 0 || self.workers == 0 {
            return Err(Error::Config("search steps, iterations and workers must be positive"));
        }
        if self.k_candidates.is_empty() || self.k_candidates.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::Config("stall rates must be non-negative and non-empty"));
        }
        if self.fixed_stall.is_some_and(|(c, k)| c == 0 || !(k >= 0.0)) {
            return Err(Error::Config("fixed stall needs c >= 1 and k >= 0"));
        }
        if !(self.recompute_threshold > 0.0 && self.recompute_threshold < 1.0) {
            return Err(Error::Config("recompute threshold must lie in (0, 1)"));
        }
        if self.max_m_steps == 0 {
            return Err(Error::Config("at least one long-term weight step is required"));
        }
        self.scoring.enumeration.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_params: DecisionParams,
    /// Simulated microseconds per operation under `best_params`.
    pub best_avg_cost: f64,
    pub tuples_evaluated: usize,
    /// Zero when built without `std`.
    pub wall_time: Duration,
}

impl SearchResult {
    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &SearchResult) -> bool {
        self.best_params == other.best_params
            && self.best_avg_cost.to_bits() == other.best_avg_cost.to_bits()
            && self.tuples_evaluated == other.tuples_evaluated
    }
}

/// One simulated decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `None` for an idle window.
    pub shape: Option<Shape>,
    pub windows: u64,
    pub runs_before: u64,
    pub cost: f64,
    pub ops: f64,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iter={} s={} ", self.iteration, self.runs_before)?;
        match &self.shape {
            None => write!(f, "action=idle")?,
            Some(sh) => write!(
                f,
                "action=compact full={}..{} partial={}:{} out={} bytes={} y={}",
                sh.full_from,
                sh.full_to,
                sh.partial_level,
                sh.partial_len,
                sh.output_level,
                sh.bytes,
                sh.runs_reduced
            )?,
        }
        write!(f, " t={} cost={:.6} ops={:.6}", self.windows, self.cost, self.ops)
    }
}

/// Size-only tree copy used inside simulations.
#[derive(Debug, Clone)]
pub(crate) struct SimTree {
    pub levels: Vec<Vec<u64>>,
    pub runs: u64,
    pub bottom: usize,
    pub flush_bytes: u64,
}

impl SimTree {
    pub fn new(state: &TreeState, bottom: usize, flush_bytes: u64) -> Self {
        let levels: Vec<Vec<u64>> = state
            .levels()
            .iter()
            .map(|l| {
                let mut v: Vec<u64> = l.iter().map(|r| r.size_bytes).collect();
                v.sort_unstable();
                v
            })
            .collect();
        Self { levels, runs: state.run_count() as u64, bottom, flush_bytes }
    }

    pub fn runs(&self) -> u64 {
        self.runs
    }

    fn insert(&mut self, level: usize, size: u64) {
        let l = &mut self.levels[level];
        let at = l.partition_point(|&x| x <= size);
        l.insert(at, size);
    }

    fn flushes(&mut self, n: u64) {
        let size = self.flush_bytes;
        let l = &mut self.levels[0];
        let at = l.partition_point(|&x| x <= size);
        l.splice(at..at, core::iter::repeat(size).take(n as usize));
        self.runs += n;
    }

    /// Installs `shape`, with `flushes` runs having arrived meanwhile.
    pub fn compact(&mut self, shape: &Shape, flushes: u64) {
        for level in shape.full_from..shape.full_to {
            self.levels[level as usize].clear();
        }
        if shape.partial_len > 0 {
            self.levels[shape.partial_level as usize].drain(..shape.partial_len as usize);
        }
        self.runs -= shape.runs_reduced + 1;
        self.insert(shape.output_level as usize, shape.bytes);
        self.runs += 1;
        self.flushes(flushes);
    }

    pub fn idle(&mut self, flushes: u64) {
        self.flushes(flushes);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SimOutcome {
    pub total_cost: f64,
    pub total_ops: f64,
}

impl SimOutcome {
    pub fn average(&self) -> f64 {
        self.total_cost / self.total_ops
    }
}

pub(crate) fn run_simulation(
    start: &SimTree,
    ctx: &ScoreContext<'_>,
    params: &DecisionParams,
    max_iter: usize,
    scratch: &mut Scratch,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<SimOutcome> {
    if max_iter == 0 {
        return Err(Error::EmptySimulation);
    }
    let window_ops = ctx.mix.total();
    if !(window_ops > 0.0) {
        return Err(Error::Config("workload mix is idle"));
    }
    let growth = ctx.model.growth();
    let mut tree = start.clone();
    let mut total_cost = 0.0;
    let mut total_ops = 0.0;
    for iteration in 0..max_iter {
        let s = tree.runs();
        let pick = select_shape(&tree.levels, tree.bottom, s, ctx, params, scratch)?;
        let (shape, windows) = match pick {
            Some(ShapeScore { shape, windows, .. }) => (Some(shape), windows),
            None => (None, 1),
        };
        let cost = ctx.model.cost(s, windows, params);
        let ops = windows as f64 * window_ops;
        total_cost += cost;
        total_ops += ops;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRecord { iteration, shape, windows, runs_before: s, cost, ops });
        }
        match shape {
            Some(sh) => tree.compact(&sh, windows * growth),
            None => tree.idle(growth),
        }
    }
    Ok(SimOutcome { total_cost, total_ops })
}

/// Average simulated cost per operation of greedy decisions under `params`.
pub fn simulate_policy(
    state: &TreeState,
    mix: &WorkloadMix,
    constants: &CostConstants,
    params: &DecisionParams,
    max_iter: usize,
    options: &ScoringOptions,
) -> Result<f64> {
    simulate_trace(state, mix, constants, params, max_iter, options).map(|(avg, _)| avg)
}

/// [`simulate_policy`] plus one record per decision.
pub fn simulate_trace(
    state: &TreeState,
    mix: &WorkloadMix,
    constants: &CostConstants,
    params: &DecisionParams,
    max_iter: usize,
    options: &ScoringOptions,
) -> Result<(f64, Vec<TraceRecord>)> {
    let ctx = ScoreContext::new(constants, mix, options);
    let tree = SimTree::new(state, bottom_level(state, &options.enumeration), constants.memtable_size);
    let mut trace = Vec::with_capacity(max_iter);
    let out = run_simulation(&tree, &ctx, params, max_iter, &mut Scratch::default(), Some(&mut trace))?;
    Ok((out.average(), trace))
}

/// `M` steps to try for one `(c, k)`: 0, 1, ... up to the first step at
/// which the largest-`y` staircase candidate is selected.
fn m_grid(
    tree: &SimTree,
    ctx: &ScoreContext<'_>,
    config: &SearchConfig,
    c: u64,
    k: f64,
    scratch: &mut Scratch,
) -> Result<usize> {
    let s = tree.runs();
    if !(ctx.mix.read_weight(ctx.constants.bloom_fpr) > 0.0) || s < 2 {
        return Ok(0);
    }
    let probe_params = DecisionParams { long_term_weight: 0.0, stall_threshold: c, stall_rate_us: k };
    let mut stairs = Vec::new();
    staircase(&tree.levels, tree.bottom, s, ctx, &probe_params, scratch, &mut stairs)?;
    let Some(top) = stairs.first().copied() else { return Ok(0) };
    let mut need = top.short_term / top.long_term;
    for other in &stairs[1..] {
        let gain = top.long_term - other.long_term;
        if gain > 0.0 {
            need = need.max((top.short_term - other.short_term) / gain);
        }
    }
    let max_steps = config.max_m_steps - 1;
    let mut steps = libm::ceil(need.max(0.0) / config.m_step).min(max_steps as f64) as usize;
    while steps < max_steps {
        let params = DecisionParams { long_term_weight: steps as f64 * config.m_step, ..probe_params };
        let pick = select_shape(&tree.levels, tree.bottom, s, ctx, &params, scratch)?;
        if pick.is_some_and(|p| p.shape == top.shape) {
            break;
        }
        steps += 1;
    }
    Ok(steps)
}

/// Every grid tuple, grouped by `(c, k)` with `M` ascending inside a group.
fn grid(
    tree: &SimTree,
    ctx: &ScoreContext<'_>,
    config: &SearchConfig,
    scratch: &mut Scratch,
) -> Result<Vec<Vec<DecisionParams>>> {
    let (c_values, k_values): (Vec<u64>, Vec<f64>) = match config.fixed_stall {
        Some((c, k)) => (vec![c], vec![k]),
        None => {
            let bound = 4 * tree.runs().max(1);
            ((1..bound).step_by(config.c_step as usize).collect(), config.k_candidates.clone())
        }
    };
    let mut cells = Vec::new();
    for &c in &c_values {
        for &k in &k_values {
            let steps = m_grid(tree, ctx, config, c, k, scratch)?;
            cells.push(
                (0..=steps)
                    .map(|i| DecisionParams { long_term_weight: i as f64 * config.m_step, stall_threshold: c, stall_rate_us: k })
                    .collect(),
            );
        }
    }
    Ok(cells)
}

/// Staircase of one tree state, shared by every member simulated on it.
#[derive(Default)]
struct Stairs {
    shapes: Vec<Shape>,
    long_term: Vec<f64>,
    /// Stall-free `t` per shape; `None` when it never completes without stalls.
    free: Vec<Option<u64>>,
    /// Adjusted window counts per `(effective c, k bits)`; `None` keys the
    /// stall-free class.
    classes: Vec<(Option<(u64, u64)>, Vec<u64>)>,
}

impl Stairs {
    fn build(&mut self, tree: &SimTree, s: u64, ctx: &ScoreContext<'_>, scratch: &mut Scratch) {
        staircase_shapes(&tree.levels, tree.bottom, s, ctx.options, scratch, &mut self.shapes);
        let free = DecisionParams { long_term_weight: 0.0, stall_threshold: u64::MAX - 1, stall_rate_us: 0.0 };
        self.free.clear();
        self.long_term.clear();
        for sh in &self.shapes {
            self.free.push(ctx.model.elapsed_windows(sh.bytes, s, &free).ok());
            self.long_term.push(long_term_effect(sh.runs_reduced, ctx.mix, ctx.constants));
        }
        self.classes.clear();
    }

    /// Adjusted windows of every shape under `params`.
    ///
    /// A shape whose stall-free run never exceeds `c` has its stall-free `t`.
    /// Every `c` below `s` stalls in each window, so they share one class.
    fn windows(&mut self, s: u64, ctx: &ScoreContext<'_>, params: &DecisionParams) -> Result<usize> {
        let stalls = ctx.model.updates() * params.stall_rate_us != 0.0;
        let key = stalls.then(|| (params.stall_threshold.max(s - 1), params.stall_rate_us.to_bits()));
        if let Some(i) = self.classes.iter().position(|(k, _)| *k == key) {
            return Ok(i);
        }
        let growth = ctx.model.growth();
        let class = DecisionParams { stall_threshold: params.stall_threshold.max(s - 1), ..*params };
        let mut out = Vec::with_capacity(self.shapes.len());
        for (sh, free) in self.shapes.iter().zip(&self.free) {
            let raw = match *free {
                Some(t) if !stalls || s + growth * (t - 1) <= class.stall_threshold => t,
                _ => ctx.model.elapsed_windows(sh.bytes, s, &class)?,
            };
            out.push(match ctx.options.amdahl {
                Some(a) => amdahl_adjusted_windows(raw, a.parallel_fraction, a.threads),
                None => raw,
            });
        }
        self.classes.push((key, out));
        Ok(self.classes.len() - 1)
    }

    /// Index of the shape chosen under `params`, if it scores at least zero.
    fn choose(&self, class: usize, s: u64, ctx: &ScoreContext<'_>, params: &DecisionParams) -> Option<usize> {
        let windows = &self.classes[class].1;
        let stall = if ctx.options.include_stall { *params } else { DecisionParams { stall_rate_us: 0.0, ..*params } };
        let mut best: Option<(usize, f64)> = None;
        for (i, sh) in self.shapes.iter().enumerate() {
            let short = short_term_effect(s, windows[i], ctx.mix, ctx.constants, &stall);
            let score = params.long_term_weight * self.long_term[i] - short;
            let better = best.map_or(true, |(j, bs)| {
                prefer((score, windows[i], sh), (bs, windows[j], &self.shapes[j])) == Ordering::Less
            });
            if better {
                best = Some((i, score));
            }
        }
        best.filter(|(_, score)| *score >= 0.0).map(|(i, _)| i)
    }
}

struct Branch {
    tree: SimTree,
    members: Vec<u32>,
    ops: f64,
}

/// Simulates every parameter tuple in `members` at once.
///
/// Tuples whose decisions agree share one tree; a branch splits when they
/// first disagree. The staircase of a tree is the same for every tuple, and
/// `t` is shared by all tuples whose stalls cannot affect it. Each outcome
/// equals a separate [`run_simulation`] with the same parameters.
pub(crate) fn simulate_members(
    start: &SimTree,
    ctx: &ScoreContext<'_>,
    members: &[DecisionParams],
    max_iter: usize,
    scratch: &mut Scratch,
) -> Result<Vec<SimOutcome>> {
    if max_iter == 0 {
        return Err(Error::EmptySimulation);
    }
    let window_ops = ctx.mix.total();
    if !(window_ops > 0.0) {
        return Err(Error::Config("workload mix is idle"));
    }
    let growth = ctx.model.growth();
    let mut cost = vec![0.0; members.len()];
    let mut ops = vec![0.0; members.len()];
    let mut branches = vec![Branch { tree: start.clone(), members: (0..members.len() as u32).collect(), ops: 0.0 }];
    let mut next = Vec::new();
    let mut stairs = Stairs::default();
    let mut groups: Vec<((Option<usize>, u64), Vec<u32>)> = Vec::new();
    for _ in 0..max_iter {
        for b in branches.drain(..) {
            let s = b.tree.runs();
            let live = |p: &DecisionParams| s >= 2 && !ctx.hopeless(s, p);
            let built = b.members.iter().any(|&i| live(&members[i as usize]));
            if built {
                stairs.build(&b.tree, s, ctx, scratch);
            }
            groups.clear();
            for &i in &b.members {
                let p = &members[i as usize];
                let mut pick = (None, 1);
                if built && live(p) {
                    let class = stairs.windows(s, ctx, p)?;
                    if let Some(j) = stairs.choose(class, s, ctx, p) {
                        pick = (Some(j), stairs.classes[class].1[j]);
                    }
                }
                cost[i as usize] += ctx.model.cost(s, pick.1, p);
                match groups.iter_mut().find(|(k, _)| *k == pick) {
                    Some((_, g)) => g.push(i),
                    None => groups.push((pick, vec![i])),
                }
            }
            let last = groups.len() - 1;
            let mut own = Some(b.tree);
            for (gi, ((shape, windows), members)) in groups.drain(..).enumerate() {
                let mut tree = if gi == last {
                    own.take().expect("tree moved once")
                } else {
                    own.as_ref().expect("tree still owned").clone()
                };
                match shape {
                    Some(j) => tree.compact(&stairs.shapes[j], windows * growth),
                    None => tree.idle(growth),
                }
                next.push(Branch { tree, members, ops: b.ops + windows as f64 * window_ops });
            }
        }
        core::mem::swap(&mut branches, &mut next);
    }
    for b in &branches {
        for &i in &b.members {
            ops[i as usize] = b.ops;
        }
    }
    Ok(cost.into_iter().zip(ops).map(|(total_cost, total_ops)| SimOutcome { total_cost, total_ops }).collect())
}

/// Simulates `cells` in `parts` contiguous groups; the outcome of each tuple
/// does not depend on how they are grouped.
fn evaluate(
    tree: &SimTree,
    ctx: &ScoreContext<'_>,
    cells: &[Vec<DecisionParams>],
    config: &SearchConfig,
) -> Result<Vec<(DecisionParams, f64)>> {
    let run = |part: &[Vec<DecisionParams>]| -> Result<Vec<(DecisionParams, f64)>> {
        let members: Vec<DecisionParams> = part.iter().flatten().copied().collect();
        let out = simulate_members(tree, ctx, &members, config.max_iter, &mut Scratch::default())?;
        Ok(members.into_iter().zip(out.iter().map(SimOutcome::average)).collect())
    };
    #[cfg(feature = "std")]
    {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let parts = config.workers.min(cores).min(cells.len());
        if parts > 1 {
            let per = cells.len().div_ceil(parts);
            let results: Vec<Result<Vec<_>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = cells.chunks(per).map(|part| scope.spawn(move || run(part))).collect();
                handles.into_iter().map(|h| h.join().expect("search worker panicked")).collect()
            });
            let mut all = Vec::new();
            for r in results {
                all.extend(r?);
            }
            return Ok(all);
        }
    }
    run(cells)
}

/// Best `(M, c, k)` for the current tree and mix.
///
/// Ties on cost go to the smaller `M`, then `c`, then `k`. The result does not
/// depend on the worker count.
pub fn find_best_params(
    state: &TreeState,
    mix: &WorkloadMix,
    constants: &CostConstants,
    config: &SearchConfig,
) -> Result<SearchResult> {
    let tree = SimTree::new(state, bottom_level(state, &config.scoring.enumeration), constants.memtable_size);
    search_tree(&tree, mix, constants, config)
}

pub(crate) fn search_tree(
    tree: &SimTree,
    mix: &WorkloadMix,
    constants: &CostConstants,
    config: &SearchConfig,
) -> Result<SearchResult> {
    config.validate()?;
    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    let ctx = ScoreContext::new(constants, mix, &config.scoring);
    let cells = grid(tree, &ctx, config, &mut Scratch::default())?;
    let results = evaluate(tree, &ctx, &cells, config)?;
    let mut best: Option<(f64, DecisionParams)> = None;
    for (p, cost) in &results {
        let better = best.map_or(true, |(bc, bp)| {
            cost.total_cmp(&bc)
                .then(p.long_term_weight.total_cmp(&bp.long_term_weight))
                .then(p.stall_threshold.cmp(&bp.stall_threshold))
                .then(p.stall_rate_us.total_cmp(&bp.stall_rate_us))
                .is_lt()
        });
        if better {
            best = Some((*cost, *p));
        }
    }
    let (best_avg_cost, best_params) = best.ok_or(Error::EmptySimulation)?;

    #[cfg(feature = "std")]
    let wall_time = started.elapsed();
    #[cfg(not(feature = "std"))]
    let wall_time = Duration::ZERO;

    Ok(SearchResult { best_params, best_avg_cost, tuples_evaluated: results.len(), wall_time })
}

/// Quantities tracked between searches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SearchSnapshot {
    pub mix: WorkloadMix,
    pub total_bytes: u64,
    pub run_count: u64,
}

/// Floor on the baseline of a relative change in an operation-type ratio.
const RATIO_FLOOR: f64 = 0.01;
/// Floor on the baseline of a relative change in a count.
const COUNT_FLOOR: f64 = 1.0;

fn relative_change(old: f64, new: f64, floor: f64) -> f64 {
    (new - old).abs() / old.max(floor)
}

/// True when any tracked quantity moved by more than `d` relative to `prev`.
pub fn should_recompute(prev: &SearchSnapshot, current: &SearchSnapshot, d: f64) -> bool {
    let a = prev.mix.ratios();
    let b = current.mix.ratios();
    a.iter().zip(b.iter()).any(|(x, y)| relative_change(*x, *y, RATIO_FLOOR) > d)
        || relative_change(prev.total_bytes as f64, current.total_bytes as f64, COUNT_FLOOR) > d
        || relative_change(prev.run_count as f64, current.run_count as f64, COUNT_FLOOR) > d
}
