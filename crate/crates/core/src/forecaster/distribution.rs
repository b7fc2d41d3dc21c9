//! Sampled predictive distributions over a forecast horizon.

use serde::Serialize;

/// `num_samples` sampled trajectories over the horizon. `samples` holds the
/// de-standardized values clamped at zero (counts and gaps are non-negative);
/// `raw_samples` keeps the unclamped reals. Rounding to integers happens only
/// in the count-domain view.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDistribution {
    pub samples: Vec<Vec<f64>>,
    pub raw_samples: Vec<Vec<f64>>,
    pub num_samples: usize,
    pub seed: u64,
}

impl ForecastDistribution {
    pub fn from_raw_samples(raw_samples: Vec<Vec<f64>>, seed: u64) -> ForecastDistribution {
        let samples = raw_samples
            .iter()
            .map(|path| path.iter().map(|&v| v.max(0.0)).collect())
            .collect();
        ForecastDistribution {
            num_samples: raw_samples.len(),
            samples,
            raw_samples,
            seed,
        }
    }

    pub fn horizon(&self) -> usize {
        self.samples.first().map_or(0, |p| p.len())
    }

    /// Empirical quantile of the step-`step` marginal, linear interpolation
    /// between order statistics. Monotone in `q`.
    pub fn quantile(&self, q: f64, step: usize) -> f64 {
        assert!((0.0..=1.0).contains(&q), "quantile level {q} outside [0, 1]");
        let mut column: Vec<f64> = self.samples.iter().map(|p| p[step]).collect();
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        let n = column.len();
        if n == 1 {
            return column[0];
        }
        let position = q * (n - 1) as f64;
        let lo = position.floor() as usize;
        let hi = position.ceil() as usize;
        let frac = position - lo as f64;
        column[lo] + (column[hi] - column[lo]) * frac
    }

    /// Per-step empirical median.
    pub fn point_forecast(&self) -> Vec<f64> {
        (0..self.horizon()).map(|t| self.quantile(0.5, t)).collect()
    }

    /// Count-domain view: non-negative integers.
    pub fn count_point_forecast(&self) -> Vec<u64> {
        self.point_forecast()
            .iter()
            .map(|&v| v.round().max(0.0) as u64)
            .collect()
    }
}

/// The JSON shape of one emitted forecast.
#[derive(Debug, Serialize)]
pub struct ForecastOutput {
    #[serde(rename = "functionId")]
    pub function_id: String,
    pub t0: usize,
    pub granularity: String,
    #[serde(rename = "pointForecast")]
    pub point_forecast: Vec<f64>,
    pub quantiles: std::collections::BTreeMap<String, Vec<f64>>,
    #[serde(rename = "numSamples")]
    pub num_samples: usize,
    pub seed: u64,
}

impl ForecastOutput {
    pub fn new(
        function_id: &str,
        t0: usize,
        granularity: &str,
        dist: &ForecastDistribution,
        quantile_levels: &[f64],
    ) -> ForecastOutput {
        let mut quantiles = std::collections::BTreeMap::new();
        for &q in quantile_levels {
            let values = (0..dist.horizon()).map(|t| dist.quantile(q, t)).collect();
            quantiles.insert(format!("{q}"), values);
        }
        ForecastOutput {
            function_id: function_id.to_string(),
            t0,
            granularity: granularity.to_string(),
            point_forecast: dist.point_forecast(),
            quantiles,
            num_samples: dist.num_samples,
            seed: dist.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist() -> ForecastDistribution {
        ForecastDistribution::from_raw_samples(
            vec![
                vec![1.0, -2.0],
                vec![3.0, 4.0],
                vec![2.0, 0.5],
                vec![5.0, 1.5],
            ],
            7,
        )
    }

    #[test]
    fn clamps_into_samples_but_keeps_raw() {
        let d = dist();
        assert_eq!(d.samples[0][1], 0.0);
        assert_eq!(d.raw_samples[0][1], -2.0);
    }

    #[test]
    fn point_forecast_is_per_step_median() {
        let d = dist();
        // step 0 sorted: 1,2,3,5 -> median 2.5
        assert_eq!(d.point_forecast()[0], 2.5);
        assert_eq!(d.quantile(0.5, 0), 2.5);
    }

    #[test]
    fn quantiles_are_monotone_in_q() {
        let d = dist();
        for step in 0..d.horizon() {
            let mut prev = f64::NEG_INFINITY;
            for q in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
                let v = d.quantile(q, step);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn count_view_rounds() {
        let d = dist();
        assert_eq!(d.count_point_forecast()[0], 3); // 2.5 rounds away from zero
    }

    #[test]
    fn output_json_shape() {
        let d = dist();
        let out = ForecastOutput::new("f", 100, "minute", &d, &[0.5, 0.9]);
        let json = serde_json::to_value(&out).unwrap();
        assert_eq!(json["functionId"], "f");
        assert!(json["quantiles"]["0.5"].is_array());
        assert!(json["quantiles"]["0.9"].is_array());
        assert_eq!(json["numSamples"], 4);
    }
}
