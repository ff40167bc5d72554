//! Operation counters reported to the decision loop.

use lsmtune_core::WorkloadMix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Range,
    Update,
    Point,
}

/// Counts of each operation type since the last report.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsWindow {
    range: u64,
    update: u64,
    point: u64,
    period: u64,
}

impl StatsWindow {
    pub fn new(period: u64) -> Self {
        Self { range: 0, update: 0, point: 0, period: period.max(1) }
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn ops(&self) -> u64 {
        self.range + self.update + self.point
    }

    /// Counts one operation; returns the raw counts and resets when the
    /// period is complete.
    pub fn record(&mut self, kind: OpKind) -> Option<WorkloadMix> {
        match kind {
            OpKind::Range => self.range += 1,
            OpKind::Update => self.update += 1,
            OpKind::Point => self.point += 1,
        }
        (self.ops() >= self.period).then(|| self.take())
    }

    /// Raw counts so far, resetting all counters together.
    pub fn take(&mut self) -> WorkloadMix {
        let mix = WorkloadMix { range: self.range as f64, update: self.update as f64, point: self.point as f64 };
        self.range = 0;
        self.update = 0;
        self.point = 0;
        mix
    }
}

/// Mix in count-window units: observed counts rescaled so updates equal
/// `F/E`, or a balanced mix before any observation.
pub fn window_mix(observed: Option<&WorkloadMix>, updates_per_window: f64) -> WorkloadMix {
    match observed {
        Some(m) if !m.is_idle() => m.rescaled_to_window(updates_per_window),
        _ => WorkloadMix::balanced(updates_per_window),
    }
}

/// Latency samples between two trace rows.
#[derive(Debug, Default, Clone)]
pub struct LatencySamples {
    samples: Vec<f64>,
}

impl LatencySamples {
    pub fn push(&mut self, us: f64) {
        self.samples.push(us);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Nearest-rank quantile, `0` when empty.
    pub fn quantile(&mut self, q: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let n = self.samples.len();
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
        let (_, v, _) = self.samples.select_nth_unstable_by(rank, f64::total_cmp);
        *v
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}
