//! Release cadence rules, shared by the archive (which enforces them) and
//! monitors (which alert on releases that break them).

use serde::{Deserialize, Serialize};

use crate::model::Millis;

pub const HOUR_MS: Millis = 3600 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IntervalPolicy {
    /// At least `gap_ms` between consecutive releases.
    MinimumGap { gap_ms: Millis },
    /// Releases only on ticks `offset_ms + k * period_ms`, give or take
    /// `tolerance_ms`, at most one per tick.
    Fixed { period_ms: Millis, offset_ms: Millis, tolerance_ms: Millis },
}

impl Default for IntervalPolicy {
    fn default() -> Self {
        IntervalPolicy::MinimumGap { gap_ms: 6 * HOUR_MS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum IntervalDecision {
    Allowed,
    Deferred { until: Millis },
}

impl IntervalPolicy {
    /// Shortest gap between two releases that both follow the policy.
    pub fn min_gap(&self) -> Millis {
        match *self {
            IntervalPolicy::MinimumGap { gap_ms } => gap_ms,
            IntervalPolicy::Fixed { period_ms, tolerance_ms, .. } => period_ms.saturating_sub(2 * tolerance_ms),
        }
    }
}

fn tick_of(at: Millis, period: Millis, offset: Millis, tolerance: Millis) -> Option<u64> {
    let shifted = (at + tolerance).checked_sub(offset)?;
    let tick = shifted / period;
    (shifted - tick * period <= 2 * tolerance).then_some(tick)
}

pub fn enforce_release_interval(previous: Option<Millis>, now: Millis, policy: &IntervalPolicy) -> IntervalDecision {
    match *policy {
        IntervalPolicy::MinimumGap { gap_ms } => match previous {
            Some(prev) if now < prev.saturating_add(gap_ms) => IntervalDecision::Deferred { until: prev + gap_ms },
            _ => IntervalDecision::Allowed,
        },
        IntervalPolicy::Fixed { period_ms, offset_ms, tolerance_ms } => {
            let period = period_ms.max(1);
            let next_tick = |after: Millis| {
                let k = after.saturating_sub(offset_ms) / period + 1;
                offset_ms + k * period
            };
            match tick_of(now, period, offset_ms, tolerance_ms) {
                None => IntervalDecision::Deferred { until: next_tick(now).saturating_sub(tolerance_ms) },
                Some(tick) => {
                    let prev_tick = previous.and_then(|p| tick_of(p, period, offset_ms, tolerance_ms));
                    if prev_tick == Some(tick) {
                        IntervalDecision::Deferred { until: offset_ms + (tick + 1) * period - tolerance_ms }
                    } else {
                        IntervalDecision::Allowed
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: Millis = 60 * 1000;

    #[test]
    fn minimum_gap() {
        let p = IntervalPolicy::default();
        let t0 = 100 * HOUR_MS;
        assert_eq!(enforce_release_interval(None, t0, &p), IntervalDecision::Allowed);
        assert_eq!(
            enforce_release_interval(Some(t0), t0 + 2 * HOUR_MS, &p),
            IntervalDecision::Deferred { until: t0 + 6 * HOUR_MS }
        );
        assert_eq!(enforce_release_interval(Some(t0), t0 + MIN, &p), IntervalDecision::Deferred { until: t0 + 6 * HOUR_MS });
        assert_eq!(enforce_release_interval(Some(t0), t0 + 6 * HOUR_MS, &p), IntervalDecision::Allowed);
    }

    #[test]
    fn fixed_schedule() {
        let day = 24 * HOUR_MS;
        let p = IntervalPolicy::Fixed { period_ms: day, offset_ms: 2 * HOUR_MS, tolerance_ms: 5 * MIN };
        let tick = 10 * day + 2 * HOUR_MS;
        assert_eq!(enforce_release_interval(Some(tick - day), tick, &p), IntervalDecision::Allowed);
        assert_eq!(enforce_release_interval(Some(tick - day), tick + 4 * MIN, &p), IntervalDecision::Allowed);
        assert_eq!(enforce_release_interval(Some(tick - day), tick - 4 * MIN, &p), IntervalDecision::Allowed);
        assert_eq!(
            enforce_release_interval(Some(tick - day), tick + HOUR_MS, &p),
            IntervalDecision::Deferred { until: tick + day - 5 * MIN }
        );
        // A second release within the same tick waits for the next one.
        assert_eq!(enforce_release_interval(Some(tick), tick + MIN, &p), IntervalDecision::Deferred { until: tick + day - 5 * MIN });
        assert_eq!(p.min_gap(), day - 10 * MIN);
    }
}
