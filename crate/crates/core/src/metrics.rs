//! Target/prediction periods and the R accuracy score.
//!
//! Periods are half-open step intervals. A target period covers the `t_p`
//! steps before each target event. A prediction period opens at a detector
//! spike and lasts `t_p` steps or until the next target event, whichever comes
//! first. `R = 1 - |targets Δ predictions| / |targets|`.

use crate::error::{Error, Result};

/// Sorted, disjoint, non-adjacent half-open intervals `[start, end)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalSet {
    spans: Vec<(u64, u64)>,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Normalizes arbitrary intervals: drops empty ones, sorts, and merges
    /// overlapping or touching neighbours.
    pub fn from_intervals<I: IntoIterator<Item = (u64, u64)>>(intervals: I) -> Self {
        let mut v: Vec<(u64, u64)> = intervals.into_iter().filter(|(s, e)| s < e).collect();
        v.sort_unstable();
        let mut spans: Vec<(u64, u64)> = Vec::with_capacity(v.len());
        for (s, e) in v {
            match spans.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => spans.push((s, e)),
            }
        }
        Self { spans }
    }

    pub fn spans(&self) -> &[(u64, u64)] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn measure(&self) -> u64 {
        self.spans.iter().map(|(s, e)| e - s).sum()
    }

    pub fn contains(&self, step: u64) -> bool {
        let i = self.spans.partition_point(|&(_, e)| e <= step);
        self.spans.get(i).is_some_and(|&(s, _)| s <= step)
    }

    /// Restriction to `[start, end)`.
    pub fn clip(&self, start: u64, end: u64) -> Self {
        Self {
            spans: self
                .spans
                .iter()
                .map(|&(s, e)| (s.max(start), e.min(end)))
                .filter(|(s, e)| s < e)
                .collect(),
        }
    }

    /// Measure of the intersection with `other`.
    pub fn intersection_measure(&self, other: &IntervalSet) -> u64 {
        let (a, b) = (&self.spans, &other.spans);
        let (mut i, mut j, mut total) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if lo < hi {
                total += hi - lo;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    /// Measure of the symmetric difference with `other`.
    pub fn symmetric_difference_measure(&self, other: &IntervalSet) -> u64 {
        self.measure() + other.measure() - 2 * self.intersection_measure(other)
    }
}

/// Union of `[T - t_p, T)` over the target events, clipped at step 0.
pub fn target_periods(reward_steps: &[u64], t_p: u64) -> IntervalSet {
    IntervalSet::from_intervals(reward_steps.iter().map(|&t| (t.saturating_sub(t_p), t)))
}

/// Union over detector spikes `F` of `[F, min(F + t_p, R))`, where `R` is the
/// first target event at or after `F`.
pub fn prediction_periods(fire_steps: &[u64], reward_steps: &[u64], t_p: u64) -> IntervalSet {
    debug_assert!(reward_steps.windows(2).all(|w| w[0] <= w[1]));
    IntervalSet::from_intervals(fire_steps.iter().map(|&f| {
        let i = reward_steps.partition_point(|&r| r < f);
        let end = match reward_steps.get(i) {
            Some(&r) => r.min(f + t_p),
            None => f + t_p,
        };
        (f, end)
    }))
}

/// `1 - |targets Δ predictions| / |targets|`.
pub fn r_metric(targets: &IntervalSet, predictions: &IntervalSet) -> Result<f64> {
    let t_tar = targets.measure();
    if t_tar == 0 {
        return Err(Error::EmptyTargets);
    }
    let t_err = targets.symmetric_difference_measure(predictions);
    Ok(1.0 - t_err as f64 / t_tar as f64)
}

/// R restricted to the step window `[start, end)`. Only events and detector
/// spikes that fall inside the window are considered, and both period sets
/// are clipped to it.
pub fn windowed_r(fire_steps: &[u64], reward_steps: &[u64], t_p: u64, start: u64, end: u64) -> Result<f64> {
    let in_window = |v: &[u64]| -> Vec<u64> { v.iter().copied().filter(|&t| t >= start && t < end).collect() };
    let rewards = in_window(reward_steps);
    let fires = in_window(fire_steps);
    let targets = target_periods(&rewards, t_p).clip(start, end);
    let predictions = prediction_periods(&fires, &rewards, t_p).clip(start, end);
    r_metric(&targets, &predictions)
}
