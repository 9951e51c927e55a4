use serde::{Deserialize, Serialize};

/// How the admission threshold reacts to a cache miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// Raise on a miss when the moving average is below the last latency.
    Pseudocode,
    /// Raise on a miss when the last latency is below the moving average.
    Prose,
    /// Never move the threshold; the moving average is still tracked.
    Fixed,
}

/// Adaptive minimum generation latency for cache admission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinLatencyThreshold {
    pub value: f64,
    pub mov_avg_latency: f64,
    pub alpha: f64,
    pub step: f64,
    pub rule: ThresholdRule,
}

impl MinLatencyThreshold {
    pub fn new(alpha: f64, step: f64, rule: ThresholdRule) -> Self {
        MinLatencyThreshold { value: 0.0, mov_avg_latency: 0.0, alpha, step, rule }
    }

    /// Per-query update. On a miss the threshold may rise by one step; on a
    /// query without misses it falls by one step, never below zero. The moving
    /// average is then smoothed toward `last_latency`.
    pub fn update(&mut self, was_miss: bool, last_latency: f64) {
        debug_assert!(last_latency >= 0.0);
        if self.rule != ThresholdRule::Fixed {
            if was_miss {
                let raise = match self.rule {
                    ThresholdRule::Pseudocode => self.mov_avg_latency < last_latency,
                    ThresholdRule::Prose => last_latency < self.mov_avg_latency,
                    ThresholdRule::Fixed => false,
                };
                if raise {
                    self.value += self.step;
                }
            } else {
                self.value = (self.value - self.step).max(0.0);
            }
        }
        self.mov_avg_latency = (1.0 - self.alpha) * self.mov_avg_latency + self.alpha * last_latency;
    }

    pub fn admits(&self, gen_latency: f64) -> bool {
        gen_latency >= self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_zero_and_clamps() {
        let mut th = MinLatencyThreshold::new(0.1, 0.01, ThresholdRule::Pseudocode);
        assert!(th.admits(0.0));
        th.update(false, 0.5);
        assert_eq!(th.value, 0.0);
        assert_eq!(th.mov_avg_latency, 0.1 * 0.5);
    }

    #[test]
    fn miss_above_average_raises_one_step() {
        let mut th = MinLatencyThreshold::new(0.1, 0.01, ThresholdRule::Pseudocode);
        th.update(true, 2.0);
        assert_eq!(th.value, 0.01);
        assert!(!th.admits(0.005));
        assert!(th.admits(0.01));
    }

    #[test]
    fn miss_below_average_holds() {
        let mut th = MinLatencyThreshold::new(0.5, 0.01, ThresholdRule::Pseudocode);
        th.mov_avg_latency = 3.0;
        th.update(true, 1.0);
        assert_eq!(th.value, 0.0);
        assert_eq!(th.mov_avg_latency, 2.0);
    }

    #[test]
    fn prose_rule_inverts_the_comparison() {
        let mut th = MinLatencyThreshold::new(0.5, 0.01, ThresholdRule::Prose);
        th.mov_avg_latency = 3.0;
        th.update(true, 1.0);
        assert_eq!(th.value, 0.01);
        th.update(true, 9.0);
        assert_eq!(th.value, 0.01);
    }

    #[test]
    fn fixed_rule_never_moves() {
        let mut th = MinLatencyThreshold::new(0.1, 0.01, ThresholdRule::Fixed);
        for i in 0..10 {
            th.update(i % 2 == 0, i as f64);
        }
        assert_eq!(th.value, 0.0);
        assert!(th.mov_avg_latency > 0.0);
    }

    /// Straight-line replay of the update rule used as the oracle.
    fn replay(script: &[(bool, f64)], alpha: f64, step: f64) -> Vec<(f64, f64)> {
        let (mut value, mut avg) = (0.0f64, 0.0f64);
        let mut out = Vec::new();
        for &(miss, last) in script {
            if miss {
                if avg < last {
                    value += step;
                }
            } else {
                value -= step;
                if value < 0.0 {
                    value = 0.0;
                }
            }
            avg = (1.0 - alpha) * avg + alpha * last;
            out.push((value, avg));
        }
        out
    }

    #[test]
    fn scripted_twenty_rounds_match_replay() {
        let script: Vec<(bool, f64)> = (0..20)
            .map(|i| {
                let miss = matches!(i % 5, 0 | 1 | 3);
                let last = if miss { 1.0 + (i % 7) as f64 * 0.25 } else { 0.05 * i as f64 };
                (miss, last)
            })
            .collect();
        let oracle = replay(&script, 0.1, 0.01);
        let mut th = MinLatencyThreshold::new(0.1, 0.01, ThresholdRule::Pseudocode);
        for (round, (&(miss, last), &(value, avg))) in script.iter().zip(&oracle).enumerate() {
            th.update(miss, last);
            assert_eq!(th.value.to_bits(), value.to_bits(), "round {round}");
            assert_eq!(th.mov_avg_latency.to_bits(), avg.to_bits(), "round {round}");
        }
        // the script is built to move the threshold both ways
        assert!(oracle.iter().any(|(v, _)| *v > 0.015));
    }
}
