//! Windowed-state cost model.
//!
//! Time is measured in count windows of `u = F/E` updates. One flush of `F`
//! bytes lands per window (when updates are present) and adds one sorted run.
//! Within a window the run count is held constant, so the per-window cost is
//! a function of the run count `s` alone:
//!
//! ```text
//! P(s) = p (alpha s + 1) Ir
//! R(s) = r s Ir                      (plus r * scan_blocks * Ir when configured)
//! U(s) = u (E/B) Iw + u k [s > c]    ((F/B) Iw when u = F/E)
//! f(s, t) = sum_{i < t} P(s + i) + R(s + i) + U(s + i)
//! ```
//!
//! A compaction of `X` bytes needs `(X/B)(Ir + Iw)` of device time and is
//! taken to finish at the first window boundary where the foreground has
//! spent at least that much time.

use crate::error::{Error, Result};
use crate::types::{CostConstants, DecisionParams, WorkloadMix};

/// Per-window cost split by operation type, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowCostBreakdown {
    pub point_cost: f64,
    pub range_cost: f64,
    pub update_cost: f64,
    pub total: f64,
}

pub fn point_cost(s: u64, constants: &CostConstants, mix: &WorkloadMix) -> f64 {
    mix.point * (constants.bloom_fpr * s as f64 + 1.0) * constants.read_io_us
}

pub fn range_cost(s: u64, constants: &CostConstants, mix: &WorkloadMix) -> f64 {
    mix.range * (s as f64 + constants.scan_blocks) * constants.read_io_us
}

/// Window update cost: flush write-out plus the stall surcharge.
pub fn update_cost(
    s: u64,
    constants: &CostConstants,
    mix: &WorkloadMix,
    params: &DecisionParams,
) -> f64 {
    let flush = mix.update * constants.blocks(constants.entry_size) * constants.write_io_us;
    if params.stalls(s) {
        flush + mix.update * params.stall_rate_us
    } else {
        flush
    }
}

pub fn window_cost(
    s: u64,
    constants: &CostConstants,
    mix: &WorkloadMix,
    params: &DecisionParams,
) -> WindowCostBreakdown {
    let point_cost = point_cost(s, constants, mix);
    let range_cost = range_cost(s, constants, mix);
    let update_cost = update_cost(s, constants, mix, params);
    WindowCostBreakdown { point_cost, range_cost, update_cost, total: point_cost + range_cost + update_cost }
}

/// Run-count growth per window: one flush per window with updates, none without.
#[inline]
pub fn window_growth(mix: &WorkloadMix) -> u64 {
    u64::from(mix.update > 0.0)
}

/// `s_{i+1}` after one window, with an optional compaction of `y` runs completing.
pub fn evolve_state(s: u64, completed: Option<u64>) -> Result<u64> {
    let y = completed.unwrap_or(0);
    let grown = s + 1;
    if y >= grown {
        return Err(Error::InvalidEvolution { runs: s, reduced: y });
    }
    Ok(grown - y)
}

/// Closed form of `f(s, t)` for a fixed mix.
///
/// Every per-window term is affine in the run count apart from the stall
/// indicator, so the sum over `t` windows is evaluated in O(1). The form is
/// monotone non-decreasing in `t` under floating-point rounding, which lets
/// [`WindowModel::elapsed_windows`] bisect while agreeing with a linear scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowModel {
    /// Cost of one window at `s = 0`, stall excluded.
    base: f64,
    /// Added cost per run in the tree.
    per_run: f64,
    /// Updates per window.
    updates: f64,
    growth: u64,
    io_per_byte: f64,
}

impl WindowModel {
    pub fn new(constants: &CostConstants, mix: &WorkloadMix) -> Self {
        let ir = constants.read_io_us;
        let base = mix.point * ir
            + mix.range * constants.scan_blocks * ir
            + mix.update * constants.blocks(constants.entry_size) * constants.write_io_us;
        let per_run = (mix.range + mix.point * constants.bloom_fpr) * ir;
        Self {
            base,
            per_run,
            updates: mix.update,
            growth: window_growth(mix),
            io_per_byte: (constants.read_io_us + constants.write_io_us) / constants.block_size as f64,
        }
    }

    pub fn growth(&self) -> u64 {
        self.growth
    }

    pub fn updates(&self) -> f64 {
        self.updates
    }

    /// `(X/B)(Ir + Iw)`.
    #[inline]
    pub fn compaction_io_us(&self, bytes: u64) -> f64 {
        bytes as f64 * self.io_per_byte
    }

    /// Number of windows `i < t` with `s + growth*i > c`.
    #[inline]
    fn stalled_windows(&self, s: u64, t: u64, c: u64) -> u64 {
        if self.growth == 0 {
            return if s > c { t } else { 0 };
        }
        let first = c.saturating_add(1).saturating_sub(s);
        t.saturating_sub(first)
    }

    /// Approximate first `t` with `f(s, t) >= target`, from the closed form.
    fn estimate(&self, target: f64, s: u64, params: &DecisionParams) -> Option<u64> {
        let a = self.per_run * self.growth as f64 * 0.5;
        let b = self.base + self.per_run * s as f64 - a;
        let root = |a: f64, b: f64, c: f64| -> f64 {
            if a > 0.0 {
                (-b + libm::sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
            } else {
                -c / b
            }
        };
        let mut t = root(a, b, -target);
        let stall = self.updates * params.stall_rate_us;
        if stall > 0.0 {
            let first = if self.growth == 0 {
                if s > params.stall_threshold { 0 } else { u64::MAX }
            } else {
                params.stall_threshold.saturating_add(1).saturating_sub(s)
            };
            if t > first as f64 {
                t = root(a, b + stall, -target - stall * first as f64);
            }
        }
        (t.is_finite() && t >= 0.0 && t < 4.5e15).then(|| libm::ceil(t) as u64)
    }

    /// `f(s, t)`.
    #[inline]
    pub fn cost(&self, s: u64, t: u64, params: &DecisionParams) -> f64 {
        let tf = t as f64;
        let run_windows = tf * s as f64 + self.growth as f64 * (tf * (tf - 1.0) * 0.5);
        let stalled = self.stalled_windows(s, t, params.stall_threshold) as f64;
        tf * self.base + self.per_run * run_windows + self.updates * params.stall_rate_us * stalled
    }

    /// Smallest `t >= 1` with `f(s, t) >= (X/B)(Ir + Iw)`.
    pub fn elapsed_windows(&self, bytes: u64, s: u64, params: &DecisionParams) -> Result<u64> {
        let target = self.compaction_io_us(bytes);
        self.windows_to_reach(target, s, params)
    }

    pub fn windows_to_reach(&self, target: f64, s: u64, params: &DecisionParams) -> Result<u64> {
        if self.cost(s, 1, params) >= target {
            return Ok(1);
        }
        if self.growth == 0 && !(self.cost(s, 1, params) > 0.0) {
            return Err(Error::NeverCompletes);
        }
        // Solve the quadratic pieces directly, keeping the answer only when
        // the predicate confirms it is the first crossing.
        if let Some(t) = self.estimate(target, s, params) {
            if t > 1 && t <= 1 << 52 && self.cost(s, t, params) >= target && self.cost(s, t - 1, params) < target {
                return Ok(t);
            }
        }
        // Gallop to a bracket, then bisect on the monotone closed form.
        let mut lo = 1u64;
        let mut hi = 2u64;
        while self.cost(s, hi, params) < target {
            lo = hi;
            hi = hi.checked_mul(2).filter(|h| *h <= 1 << 52).ok_or(Error::NeverCompletes)?;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.cost(s, mid, params) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// `f(s, t)`: foreground time over `t` windows starting at run count `s`.
pub fn window_cost_f(
    s: u64,
    t: u64,
    constants: &CostConstants,
    mix: &WorkloadMix,
    params: &DecisionParams,
) -> f64 {
    WindowModel::new(constants, mix).cost(s, t, params)
}

/// Windows a compaction of `bytes` spans when started at run count `s`.
pub fn elapsed_windows(
    bytes: u64,
    s: u64,
    constants: &CostConstants,
    mix: &WorkloadMix,
    params: &DecisionParams,
) -> Result<u64> {
    WindowModel::new(constants, mix).elapsed_windows(bytes, s, params)
}

/// Speedup-adjusted window count `ceil(t / g)` with `g = 1 / (1 - phi (1 - 1/eta))`.
///
/// `phi` is clamped to `[0, 1]` and `eta` to at least one core. The result is
/// never below one window.
pub fn amdahl_adjusted_windows(t: u64, phi: f64, eta: u32) -> u64 {
    let phi = if phi.is_nan() { 0.0 } else { phi.clamp(0.0, 1.0) };
    let eta = f64::from(eta.max(1));
    let g = 1.0 / (1.0 - phi * (1.0 - 1.0 / eta));
    let scaled = t as f64 / g;
    // Absorb representation error so exact quotients do not round up.
    let adjusted = libm::ceil(scaled - 1e-9 * scaled.max(1.0)) as u64;
    adjusted.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constants() -> CostConstants {
        CostConstants::default()
    }

    fn params(c: u64, k: f64) -> DecisionParams {
        DecisionParams { long_term_weight: 1.0, stall_threshold: c, stall_rate_us: k }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn point_cost_examples() {
        let c = constants();
        let one = WorkloadMix { point: 1.0, ..Default::default() };
        assert_eq!(point_cost(0, &c, &one), 12.0);
        assert!(close(point_cost(10, &c, &one), 12.98, 0.01));
        assert_eq!(point_cost(17, &c, &WorkloadMix::IDLE), 0.0);
    }

    #[test]
    fn range_cost_examples() {
        let c = constants();
        let one = WorkloadMix { range: 1.0, ..Default::default() };
        let two = WorkloadMix { range: 2.0, ..Default::default() };
        assert_eq!(range_cost(5, &c, &one), 60.0);
        assert_eq!(range_cost(0, &c, &one), 0.0);
        assert_eq!(range_cost(3, &c, &two), 72.0);
    }

    #[test]
    fn update_cost_examples() {
        let c = constants();
        let w = WorkloadMix { update: 2048.0, ..Default::default() };
        let p = params(10, 6.0);
        assert_eq!(update_cost(10, &c, &w, &p), 7680.0);
        assert_eq!(update_cost(11, &c, &w, &p), 19968.0);
        assert_eq!(update_cost(11, &c, &WorkloadMix::IDLE, &p), 0.0);
    }

    #[test]
    fn window_cost_f_examples() {
        let c = constants();
        let p = params(100, 6.0);
        let mix = WorkloadMix { range: 3.0, update: 2048.0, point: 7.0 };
        assert!(close(window_cost_f(4, 1, &c, &mix, &p), window_cost(4, &c, &mix, &p).total, 1e-9));
        let w = WorkloadMix { update: 2048.0, ..Default::default() };
        assert_eq!(window_cost_f(3, 3, &c, &w, &p), 23040.0);
        assert_eq!(window_cost_f(3, 3, &c, &WorkloadMix::IDLE, &p), 0.0);
    }

    #[test]
    fn elapsed_windows_examples() {
        let c = constants();
        let p = params(100, 6.0);
        let w = WorkloadMix { update: 2048.0, ..Default::default() };
        // (X/B)(Ir+Iw) = 20000 us.
        let x = (20000.0 / 27.0 * 4096.0) as u64;
        assert_eq!(elapsed_windows(x, 0, &c, &w, &p).unwrap(), 3);
        assert_eq!(elapsed_windows(4096, 0, &c, &w, &p).unwrap(), 1);
        assert_eq!(elapsed_windows(4096, 0, &c, &WorkloadMix::IDLE, &p), Err(Error::NeverCompletes));
    }

    #[test]
    fn evolve_examples() {
        assert_eq!(evolve_state(6, None).unwrap(), 7);
        assert_eq!(evolve_state(6, Some(2)).unwrap(), 5);
        assert_eq!(evolve_state(1, Some(1)).unwrap(), 1);
        assert!(evolve_state(1, Some(2)).is_err());
    }

    #[test]
    fn amdahl_examples() {
        assert_eq!(amdahl_adjusted_windows(7, 0.5, 1), 7);
        assert_eq!(amdahl_adjusted_windows(8, 0.5, 4), 5);
        assert_eq!(amdahl_adjusted_windows(9, 0.0, 16), 9);
        assert_eq!(amdahl_adjusted_windows(1, 1.0, 16), 1);
        // g = 1.6 divides 16 exactly.
        assert_eq!(amdahl_adjusted_windows(16, 0.5, 4), 10);
    }

    #[test]
    fn stall_on_read_only_window() {
        let c = constants();
        let mix = WorkloadMix { range: 10.0, ..Default::default() };
        let m = WindowModel::new(&c, &mix);
        assert_eq!(m.growth(), 0);
        let p = params(3, 6.0);
        // No updates, so no stall surcharge and no growth.
        assert_eq!(m.cost(5, 4, &p), 4.0 * 10.0 * 5.0 * 12.0);
    }
}
