//! Effectiveness scoring and selection.
//!
//! For a candidate reducing `y` runs over `t` windows from run count `s`,
//! with `a = r + alpha p`:
//!
//! ```text
//! E_s = Ir t a + u k max(0, s + t - c)      short-term slowdown and stall
//! E_l = a Ir y                              per-window long-term saving
//! E   = M E_l - E_s
//! ```
//!
//! Selection takes the highest score, breaking ties by smaller `t`, smaller
//! `X`, lower output level, then larger `y`. No candidate is returned when
//! the best score is negative.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::candidates::{
    bottom_level, for_each_shape, CompactionCandidate, EnumConfig, Shape, SortedView,
};
use crate::cost::{amdahl_adjusted_windows, WindowModel};
use crate::error::{Error, Result};
use crate::types::{CostConstants, DecisionParams, TreeState, WorkloadMix};

/// Multi-threaded foreground speedup applied to window counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amdahl {
    pub parallel_fraction: f64,
    pub threads: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringOptions {
    pub enumeration: EnumConfig,
    /// Charge the stall term in `E_s`. Dropped when spare compaction workers
    /// exist, since a second compaction can start immediately.
    pub include_stall: bool,
    pub amdahl: Option<Amdahl>,
    /// Levels touched by in-flight compactions; candidates overlapping them
    /// are skipped.
    pub busy_levels: u16,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self { enumeration: EnumConfig::default(), include_stall: true, amdahl: None, busy_levels: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: CompactionCandidate,
    pub windows: u64,
    pub score: f64,
    pub short_term: f64,
    pub long_term: f64,
}

pub fn short_term_effect(
    s: u64,
    t: u64,
    mix: &WorkloadMix,
    constants: &CostConstants,
    params: &DecisionParams,
) -> f64 {
    let read = constants.read_io_us * t as f64 * mix.read_weight(constants.bloom_fpr);
    let over = (s + t).saturating_sub(params.stall_threshold);
    read + mix.update * params.stall_rate_us * over as f64
}

pub fn long_term_effect(y: u64, mix: &WorkloadMix, constants: &CostConstants) -> f64 {
    mix.read_weight(constants.bloom_fpr) * constants.read_io_us * y as f64
}

/// Everything needed to score candidates for one (state, mix, params).
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScoreContext<'a> {
    pub model: WindowModel,
    pub mix: &'a WorkloadMix,
    pub constants: &'a CostConstants,
    pub options: &'a ScoringOptions,
}

/// Score of one shape plus what the search needs to know about it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ShapeScore {
    pub shape: Shape,
    pub windows: u64,
    pub score: f64,
    pub short_term: f64,
    pub long_term: f64,
}

impl<'a> ScoreContext<'a> {
    pub fn new(
        constants: &'a CostConstants,
        mix: &'a WorkloadMix,
        options: &'a ScoringOptions,
    ) -> Self {
        Self { model: WindowModel::new(constants, mix), mix, constants, options }
    }

    pub fn windows(&self, bytes: u64, s: u64, params: &DecisionParams) -> Result<u64> {
        let t = self.model.elapsed_windows(bytes, s, params)?;
        Ok(match self.options.amdahl {
            Some(a) => amdahl_adjusted_windows(t, a.parallel_fraction, a.threads),
            None => t,
        })
    }

    pub fn score(&self, shape: Shape, s: u64, params: &DecisionParams) -> Result<ShapeScore> {
        let raw = self.model.elapsed_windows(shape.bytes, s, params)?;
        let windows = match self.options.amdahl {
            Some(a) => amdahl_adjusted_windows(raw, a.parallel_fraction, a.threads),
            None => raw,
        };
        let long_term = long_term_effect(shape.runs_reduced, self.mix, self.constants);
        let short_term = if self.options.include_stall {
            short_term_effect(s, windows, self.mix, self.constants, params)
        } else {
            short_term_effect(s, windows, self.mix, self.constants, &DecisionParams {
                stall_rate_us: 0.0,
                ..*params
            })
        };
        let score = params.long_term_weight * long_term - short_term;
        Ok(ShapeScore { shape, windows, score, short_term, long_term })
    }

    /// True when every candidate is certain to score below zero.
    pub fn hopeless(&self, s: u64, params: &DecisionParams) -> bool {
        let a = self.mix.read_weight(self.constants.bloom_fpr);
        let y_max = s.saturating_sub(1) as f64;
        a > 0.0 && params.long_term_weight * y_max < 1.0 - 1e-9
    }
}

/// Total order used for selection: `Less` means `x` is preferred.
fn preference(x: &ShapeScore, y: &ShapeScore) -> Ordering {
    prefer((x.score, x.windows, &x.shape), (y.score, y.windows, &y.shape))
}

/// [`preference`] on `(score, windows, shape)` triples.
pub(crate) fn prefer(x: (f64, u64, &Shape), y: (f64, u64, &Shape)) -> Ordering {
    y.0.total_cmp(&x.0)
        .then(x.1.cmp(&y.1))
        .then(x.2.bytes.cmp(&y.2.bytes))
        .then(x.2.output_level.cmp(&y.2.output_level))
        .then(y.2.runs_reduced.cmp(&x.2.runs_reduced))
}

/// Reusable buffers for [`select_shape`].
#[derive(Debug, Default, Clone)]
pub(crate) struct Scratch {
    best_per_y: Vec<Option<Shape>>,
    shapes: Vec<Shape>,
    stairs: Vec<ShapeScore>,
}

/// The shapes that can win for any parameters, in descending `y`.
///
/// Only the cheapest shape per `y` can win: `t` is monotone in `X` and the
/// score is monotone in both `y` and `t`. Among those, a `y` beaten in
/// `(X, level)` by some larger `y` can be skipped as well.
pub(crate) fn staircase_shapes<L: AsRef<[u64]>>(
    sizes: &[L],
    bottom: usize,
    s: u64,
    options: &ScoringOptions,
    scratch: &mut Scratch,
    out: &mut Vec<Shape>,
) {
    out.clear();
    let best = &mut scratch.best_per_y;
    best.clear();
    best.resize(s.max(1) as usize, None);
    let busy = options.busy_levels;
    for_each_shape(sizes, bottom, options.enumeration.max_candidates, |shape| {
        if busy & shape.level_mask() != 0 {
            return;
        }
        let y = shape.runs_reduced as usize;
        if y >= best.len() {
            best.resize(y + 1, None);
        }
        let slot = &mut best[y];
        let better = match slot {
            None => true,
            Some(cur) => (shape.bytes, shape.output_level) < (cur.bytes, cur.output_level),
        };
        if better {
            *slot = Some(shape);
        }
    });
    let mut floor: Option<(u64, u8)> = None;
    for slot in best.iter().rev() {
        let Some(shape) = *slot else { continue };
        let key = (shape.bytes, shape.output_level);
        if floor.is_some_and(|f| f <= key) {
            continue;
        }
        floor = Some(key);
        out.push(shape);
    }
}

/// [`staircase_shapes`] scored under `params`.
pub(crate) fn staircase<L: AsRef<[u64]>>(
    sizes: &[L],
    bottom: usize,
    s: u64,
    ctx: &ScoreContext<'_>,
    params: &DecisionParams,
    scratch: &mut Scratch,
    out: &mut Vec<ShapeScore>,
) -> Result<()> {
    out.clear();
    let mut shapes = core::mem::take(&mut scratch.shapes);
    staircase_shapes(sizes, bottom, s, ctx.options, scratch, &mut shapes);
    let res = shapes.iter().try_for_each(|shape| {
        out.push(ctx.score(*shape, s, params)?);
        Ok(())
    });
    scratch.shapes = shapes;
    res
}

/// Best shape over `sizes` (each level ascending), or `None` when nothing
/// scores at least zero.
pub(crate) fn select_shape<L: AsRef<[u64]>>(
    sizes: &[L],
    bottom: usize,
    s: u64,
    ctx: &ScoreContext<'_>,
    params: &DecisionParams,
    scratch: &mut Scratch,
) -> Result<Option<ShapeScore>> {
    if s < 2 || ctx.hopeless(s, params) {
        return Ok(None);
    }
    let mut stairs = core::mem::take(&mut scratch.stairs);
    let res = staircase(sizes, bottom, s, ctx, params, scratch, &mut stairs);
    let mut chosen: Option<ShapeScore> = None;
    if res.is_ok() {
        for scored in &stairs {
            if chosen.as_ref().map_or(true, |c| preference(scored, c) == Ordering::Less) {
                chosen = Some(*scored);
            }
        }
    }
    scratch.stairs = stairs;
    res?;
    Ok(chosen.filter(|c| c.score >= 0.0))
}

fn to_scored(view: &SortedView, s: &ShapeScore) -> ScoredCandidate {
    ScoredCandidate {
        candidate: view.materialize(&s.shape),
        windows: s.windows,
        score: s.score,
        short_term: s.short_term,
        long_term: s.long_term,
    }
}

/// Scores one candidate against run count `s`.
pub fn effectiveness(
    candidate: &CompactionCandidate,
    s: u64,
    mix: &WorkloadMix,
    constants: &CostConstants,
    params: &DecisionParams,
    options: &ScoringOptions,
) -> Result<ScoredCandidate> {
    let ctx = ScoreContext::new(constants, mix, options);
    let windows = ctx.windows(candidate.bytes, s, params)?;
    let long_term = long_term_effect(candidate.runs_reduced, mix, constants);
    let stall = if options.include_stall { *params } else { DecisionParams { stall_rate_us: 0.0, ..*params } };
    let short_term = short_term_effect(s, windows, mix, constants, &stall);
    Ok(ScoredCandidate {
        candidate: candidate.clone(),
        windows,
        score: params.long_term_weight * long_term - short_term,
        short_term,
        long_term,
    })
}

/// Every enumerated candidate of `state` with its score, in enumeration order.
pub fn score_all(
    state: &TreeState,
    mix: &WorkloadMix,
    constants: &CostConstants,
    params: &DecisionParams,
    options: &ScoringOptions,
) -> Result<Vec<ScoredCandidate>> {
    let view = SortedView::new(state);
    let ctx = ScoreContext::new(constants, mix, options);
    let s = state.run_count() as u64;
    let mut shapes = Vec::new();
    for_each_shape(
        view.sizes(),
        bottom_level(state, &options.enumeration),
        options.enumeration.max_candidates,
        |shape| {
            if options.busy_levels & shape.level_mask() == 0 {
                shapes.push(shape);
            }
        },
    );
    shapes
        .into_iter()
        .map(|shape| ctx.score(shape, s, params).map(|sc| to_scored(&view, &sc)))
        .collect()
}

/// Argmax over every candidate without pruning; the reference for
/// [`pick_best`].
pub fn pick_best_exhaustive(
    state: &TreeState,
    mix: &WorkloadMix,
    constants: &CostConstants,
    params: &DecisionParams,
    options: &ScoringOptions,
) -> Option<ScoredCandidate> {
    let all = score_all(state, mix, constants, params, options).ok()?;
    let mut best: Option<&ScoredCandidate> = None;
    for c in &all {
        let better = match best {
            None => true,
            Some(b) => {
                let ord = b
                    .score
                    .total_cmp(&c.score)
                    .then(c.windows.cmp(&b.windows))
                    .then(c.candidate.bytes.cmp(&b.candidate.bytes))
                    .then(c.candidate.output_level.cmp(&b.candidate.output_level))
                    .then(b.candidate.runs_reduced.cmp(&c.candidate.runs_reduced));
                ord == Ordering::Less
            }
        };
        if better {
            best = Some(c);
        }
    }
    best.filter(|b| b.score >= 0.0).cloned()
}

/// Highest-scoring candidate, or `None` when no candidate scores at least zero
/// (leaving the tree alone is always available) or the mix never lets a
/// compaction finish.
pub fn pick_best(
    state: &TreeState,
    mix: &WorkloadMix,
    constants: &CostConstants,
    params: &DecisionParams,
    options: &ScoringOptions,
) -> Option<ScoredCandidate> {
    let view = SortedView::new(state);
    let ctx = ScoreContext::new(constants, mix, options);
    let mut scratch = Scratch::default();
    let best = select_shape(
        view.sizes(),
        bottom_level(state, &options.enumeration),
        state.run_count() as u64,
        &ctx,
        params,
        &mut scratch,
    )
    .ok()??;
    Some(to_scored(&view, &best))
}

/// Drops every candidate for which another reduces at least as many runs in
/// strictly fewer windows.
pub fn dominating_filter(scored: Vec<ScoredCandidate>) -> Vec<ScoredCandidate> {
    let keep: Vec<bool> = scored
        .iter()
        .map(|b| {
            !scored.iter().any(|a| {
                a.candidate.runs_reduced >= b.candidate.runs_reduced && a.windows < b.windows
            })
        })
        .collect();
    scored.into_iter().zip(keep).filter_map(|(c, k)| k.then_some(c)).collect()
}

fn claim2_check(s: u64, y: u64, t: u64, mix: &WorkloadMix, constants: &CostConstants) -> Result<f64> {
    if s < y + 2 {
        return Err(Error::Inapplicable("requires s - y - 1 > 0"));
    }
    if t == 0 {
        return Err(Error::Inapplicable("requires t >= 1"));
    }
    let a = mix.read_weight(constants.bloom_fpr);
    if !(a > 0.0) {
        return Err(Error::Inapplicable("requires a positive read weight"));
    }
    if !(mix.update > 0.0) && t > 1 {
        return Err(Error::Inapplicable("requires updates when t > 1"));
    }
    Ok(a)
}

/// Parameters under which a candidate `(t, y)` at run count `s` scores
/// highest: `c = s + t`, `M = t - 1`, `u k = a Ir (s - y - 1)(t - 1)`.
///
/// At the boundary this form ties with a one-window candidate reducing
/// `y - 1` runs; [`claim2_params_strict`] breaks that tie.
pub fn claim2_params(
    s: u64,
    y: u64,
    t: u64,
    mix: &WorkloadMix,
    constants: &CostConstants,
) -> Result<DecisionParams> {
    let a = claim2_check(s, y, t, mix, constants)?;
    Ok(DecisionParams {
        long_term_weight: (t - 1) as f64,
        stall_threshold: s + t,
        stall_rate_us: claim2_rate(s, y, t, a, mix, constants),
    })
}

/// [`claim2_params`] with `M` raised by `1 / (2 (s - y - 1))`, which makes the
/// target the strict argmax over every candidate not matching its `(t, y)`
/// and not reducing as many runs in as few windows.
pub fn claim2_params_strict(
    s: u64,
    y: u64,
    t: u64,
    mix: &WorkloadMix,
    constants: &CostConstants,
) -> Result<DecisionParams> {
    let a = claim2_check(s, y, t, mix, constants)?;
    let slack = (s - y - 1) as f64;
    Ok(DecisionParams {
        long_term_weight: (t - 1) as f64 + 0.5 / slack,
        stall_threshold: s + t,
        stall_rate_us: claim2_rate(s, y, t, a, mix, constants),
    })
}

fn claim2_rate(s: u64, y: u64, t: u64, a: f64, mix: &WorkloadMix, c: &CostConstants) -> f64 {
    if t == 1 {
        return 0.0;
    }
    a * c.read_io_us * ((s - y - 1) * (t - 1)) as f64 / mix.update
}
