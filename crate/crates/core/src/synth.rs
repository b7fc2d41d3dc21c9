//! Synthetic invocation traces with documented generative processes, so the
//! pipeline can run end to end without the external dataset.

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::trace::{Granularity, InvocationSeries};

/// Generative process for one synthetic trace.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "pattern", rename_all = "lowercase", rename_all_fields = "camelCase")]
pub enum SynthPattern {
    /// One invocation every `period` minutes, starting at minute 0.
    Periodic { period: u64 },
    /// Inter-arrival gaps drawn uniformly from `[min_gap, max_gap]` minutes.
    Sporadic { min_gap: u64, max_gap: u64 },
    /// Burst starts separated by `Exp(mean_inter_burst)` minutes; each burst
    /// spans `1 + Poisson(mean_burst_len - 1)` consecutive minutes with
    /// `1 + Poisson(rate - 1)` invocations per minute.
    Bursty {
        mean_inter_burst: f64,
        mean_burst_len: f64,
        rate: f64,
    },
}

/// Generate a minute-granularity series of `length` minutes. Deterministic for
/// a given (pattern, seed).
pub fn generate(
    pattern: &SynthPattern,
    length: usize,
    seed: u64,
    function_id: &str,
    start_time: DateTime<Utc>,
) -> InvocationSeries {
    let mut values = vec![0u64; length];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *pattern {
        SynthPattern::Periodic { period } => {
            assert!(period >= 1, "period must be at least 1 minute");
            let mut t = 0usize;
            while t < length {
                values[t] = 1;
                t += period as usize;
            }
        }
        SynthPattern::Sporadic { min_gap, max_gap } => {
            assert!(
                1 <= min_gap && min_gap <= max_gap,
                "need 1 <= min_gap <= max_gap"
            );
            let mut t = 0usize;
            while t < length {
                values[t] = 1;
                t += rng.random_range(min_gap..=max_gap) as usize;
            }
        }
        SynthPattern::Bursty {
            mean_inter_burst,
            mean_burst_len,
            rate,
        } => {
            assert!(mean_inter_burst > 0.0 && mean_burst_len >= 1.0 && rate >= 1.0);
            let burst_len = Poisson::new((mean_burst_len - 1.0).max(1e-9)).unwrap();
            let per_minute = Poisson::new((rate - 1.0).max(1e-9)).unwrap();
            let mut t = 0usize;
            loop {
                let gap: f64 = rng.random::<f64>();
                let wait = (-gap.ln() * mean_inter_burst).ceil().max(1.0) as usize;
                t += wait;
                if t >= length {
                    break;
                }
                let span = 1 + burst_len.sample(&mut rng) as usize;
                for minute in t..(t + span).min(length) {
                    values[minute] = 1 + per_minute.sample(&mut rng) as u64;
                }
                t += span;
            }
        }
    }
    InvocationSeries {
        function_id: function_id.to_string(),
        granularity: Granularity::Minute,
        start_time,
        values,
    }
}

/// An hourly series repeating the same 24-value daily profile; used for
/// noiseless seasonality fixtures.
pub fn daily_profile_hourly(
    profile: &[u64; 24],
    days: usize,
    function_id: &str,
    start_time: DateTime<Utc>,
) -> InvocationSeries {
    let values = (0..days * 24).map(|i| profile[i % 24]).collect();
    InvocationSeries {
        function_id: function_id.to_string(),
        granularity: Granularity::Hour,
        start_time,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::to_gap_series;

    fn start() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2019-07-15T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    #[test]
    fn periodic_pattern_has_constant_gaps() {
        let s = generate(&SynthPattern::Periodic { period: 7 }, 500, 0, "p", start());
        let gaps = to_gap_series(&s).unwrap();
        assert!(gaps.gaps.iter().all(|&g| g == 7));
    }

    #[test]
    fn same_seed_is_identical() {
        let p = SynthPattern::Sporadic {
            min_gap: 3,
            max_gap: 9,
        };
        let a = generate(&p, 2000, 42, "s", start());
        let b = generate(&p, 2000, 42, "s", start());
        assert_eq!(a, b);
        let c = generate(&p, 2000, 43, "s", start());
        assert_ne!(a, c);
    }

    #[test]
    fn sporadic_gaps_stay_in_range() {
        let s = generate(
            &SynthPattern::Sporadic {
                min_gap: 11,
                max_gap: 20,
            },
            20000,
            7,
            "s",
            start(),
        );
        let gaps = to_gap_series(&s).unwrap();
        assert!(!gaps.gaps.is_empty());
        assert!(gaps.gaps.iter().all(|&g| (11..=20).contains(&g)));
    }

    #[test]
    fn bursty_produces_multi_invocation_minutes() {
        let s = generate(
            &SynthPattern::Bursty {
                mean_inter_burst: 30.0,
                mean_burst_len: 4.0,
                rate: 3.0,
            },
            10000,
            11,
            "b",
            start(),
        );
        assert!(s.total() > 0);
        assert!(s.values.iter().any(|&v| v > 1));
    }

    #[test]
    fn daily_profile_repeats() {
        let mut profile = [0u64; 24];
        for (h, p) in profile.iter_mut().enumerate() {
            *p = (h as u64 % 6) + 1;
        }
        let s = daily_profile_hourly(&profile, 3, "d", start());
        assert_eq!(s.len(), 72);
        assert_eq!(s.values[5], s.values[29]);
        assert_eq!(s.granularity, Granularity::Hour);
    }
}
