//! Seasonal-naive point forecaster.

use super::ForecastError;

/// `forecast[t] = value at t - period`, reading observed history first and
/// wrapping onto prior forecasts once the horizon outruns it.
pub fn seasonal_naive(
    values: &[f64],
    period: usize,
    horizon: usize,
) -> Result<Vec<f64>, ForecastError> {
    assert!(period >= 1, "period must be at least 1");
    if values.len() < period {
        return Err(ForecastError::SeriesTooShort {
            len: values.len(),
            required: period,
        });
    }
    let mut out: Vec<f64> = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let index = values.len() + t - period;
        let v = if index < values.len() {
            values[index]
        } else {
            out[index - values.len()]
        };
        out.push(v);
    }
    Ok(out)
}
