//! Recursive multi-step forecasting and forecast error metrics.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::dataset::{LoadSeries, NormParams, WindowSpec, HOURS_PER_WEEK, TIMESTAMP_FORMAT};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::{step, NetworkState};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T> {
    pub mse: T,
    /// Mean absolute percentage error, in percent.
    pub mape: T,
    pub max_abs_error: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult<T> {
    /// Timestamp of the first predicted hour.
    pub start: NaiveDateTime,
    pub horizon_hours: usize,
    /// Predictions in kW.
    pub predicted: Vec<T>,
    pub actual: Option<Vec<T>>,
    pub metrics: Option<MetricSet<T>>,
}

impl<T: Scalar> ForecastResult<T> {
    /// Attaches observed values and computes metrics against them.
    pub fn with_actual(mut self, actual: &[T]) -> Result<Self> {
        if actual.len() != self.predicted.len() {
            return Err(Error::invalid(format!(
                "{} actual values for a {}-hour forecast",
                actual.len(),
                self.predicted.len()
            )));
        }
        self.metrics = Some(evaluate(&self.predicted, actual)?);
        self.actual = Some(actual.to_vec());
        Ok(self)
    }

    /// `timestamp,predicted_kw[,actual_kw]` rows.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("timestamp,predicted_kw");
        if self.actual.is_some() {
            out.push_str(",actual_kw");
        }
        out.push('\n');
        for (i, p) in self.predicted.iter().enumerate() {
            let ts = self.start + Duration::hours(i as i64);
            let _ = write!(out, "{},{}", ts.format(TIMESTAMP_FORMAT), p);
            if let Some(a) = &self.actual {
                let _ = write!(out, ",{}", a[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }
}

/// Forecasts `horizon_hours` values after the end of `history`, feeding each
/// prediction back as an input for later steps.
///
/// Elman networks start from a zero context, step once through every window of
/// the true history and carry the context on through the recursion. Results
/// are denormalized to kW.
pub fn forecast_recursive<T: Scalar>(
    net: &NetworkState<T>,
    norm: &NormParams<T>,
    history: &LoadSeries<T>,
    spec: WindowSpec,
    horizon_hours: usize,
) -> Result<ForecastResult<T>> {
    if horizon_hours == 0 {
        return Err(Error::invalid("forecast horizon must be at least one hour"));
    }
    if net.input_count != spec.input_count {
        return Err(Error::invalid(format!(
            "window has {} inputs, network expects {}",
            spec.input_count, net.input_count
        )));
    }
    let span = spec.span();
    if history.len() < span {
        return Err(Error::invalid(format!(
            "insufficient history: {} samples, {spec} needs at least {span}",
            history.len()
        )));
    }
    let mut net = net.clone();
    net.reset_context();
    let n = history.len();
    let mut working: Vec<T> = history.values.iter().map(|&v| norm.normalize(v)).collect();
    working.reserve(horizon_hours);

    if net.family == crate::nn::Family::Elman {
        for k in span..n {
            step(&mut net, &working[spec.input_indices(k)])?;
        }
    }
    for k in n..n + horizon_hours {
        let y = step(&mut net, &working[spec.input_indices(k)])?;
        working.push(y);
    }
    let predicted = working[n..].iter().map(|&y| norm.denormalize(y)).collect();
    Ok(ForecastResult {
        start: history.end(),
        horizon_hours,
        predicted,
        actual: None,
        metrics: None,
    })
}

pub fn evaluate<T: Scalar>(predicted: &[T], actual: &[T]) -> Result<MetricSet<T>> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::invalid(format!(
            "evaluate needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    if let Some(a) = actual.iter().find(|&&a| !(a > T::zero())) {
        return Err(Error::invalid(format!(
            "MAPE is undefined for non-positive actual value {a}"
        )));
    }
    let n = T::of(predicted.len() as f64);
    let mut sq = T::zero();
    let mut pct = T::zero();
    let mut worst = T::zero();
    for (&p, &a) in predicted.iter().zip(actual) {
        let d = p - a;
        sq += d * d;
        pct += d.abs() / a;
        worst = worst.max(d.abs());
    }
    Ok(MetricSet {
        mse: sq / n,
        mape: pct / n * T::of(100.0),
        max_abs_error: worst,
    })
}

/// Weekly persistence: each forecast hour repeats the value observed 168 hours earlier.
pub fn persistence_baseline<T: Scalar>(history: &LoadSeries<T>, horizon_hours: usize) -> Result<Vec<T>> {
    if horizon_hours == 0 {
        return Err(Error::invalid("forecast horizon must be at least one hour"));
    }
    let n = history.len();
    if n < HOURS_PER_WEEK {
        return Err(Error::invalid(format!(
            "insufficient history: weekly persistence needs {HOURS_PER_WEEK} samples, got {n}"
        )));
    }
    let last_week = &history.values[n - HOURS_PER_WEEK..];
    Ok((0..horizon_hours)
        .map(|h| last_week[h % HOURS_PER_WEEK])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, SynthParams};
    use crate::nn::{catalog_structure, forward_elman, forward_feedforward, initialize, Family};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hist(values: Vec<f64>) -> LoadSeries<f64> {
        LoadSeries::new(SynthParams::default().start, values).unwrap()
    }

    #[test]
    fn metrics() {
        let a = [100.0, 200.0, 50.0];
        let m = evaluate(&a, &a).unwrap();
        assert_eq!((m.mse, m.mape, m.max_abs_error), (0.0, 0.0, 0.0));
        let p: Vec<f64> = a.iter().map(|x| 1.1 * x).collect();
        assert!((evaluate(&p, &a).unwrap().mape - 10.0).abs() < 1e-12);
        assert!(evaluate(&p[..2], &a).is_err());
        assert!(evaluate(&[1.0], &[0.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p: Vec<f64> = (0..100).map(|_| rng.random_range(1.0..100.0)).collect();
        let a: Vec<f64> = (0..100).map(|_| rng.random_range(1.0..100.0)).collect();
        let (mut sq, mut pct, mut mx) = (0.0_f64, 0.0_f64, 0.0_f64);
        for i in 0..100 {
            let d = p[i] - a[i];
            sq += d * d;
            pct += d.abs() / a[i];
            if d.abs() > mx {
                mx = d.abs();
            }
        }
        let m = evaluate(&p, &a).unwrap();
        assert!((m.mse - sq / 100.0).abs() < 1e-12);
        assert!((m.mape - pct).abs() < 1e-12);
        assert_eq!(m.max_abs_error, mx);
    }

    #[test]
    fn persistence() {
        let quiet = SynthParams {
            noise_fraction: 0.0,
            ..SynthParams::default()
        };
        let s = synthesize::<f64>(21, 1, &quiet).unwrap();
        let (h, future) = (s.slice(0..14 * 24).unwrap(), &s.values[14 * 24..]);
        let p = persistence_baseline(&h, 7 * 24).unwrap();
        assert_eq!(evaluate(&p, future).unwrap().max_abs_error, 0.0);
        assert_eq!(persistence_baseline(&h, 1).unwrap()[0], h.values[h.len() - 168]);
        assert!(persistence_baseline(&h.slice(0..100).unwrap(), 1).is_err());
    }

    #[test]
    fn horizon_one_is_single_forward() {
        let spec = WindowSpec::new(2, 3).unwrap();
        let net = initialize::<f64>(Family::Feedforward, catalog_structure(2).unwrap(), 3, 4).unwrap();
        let norm = NormParams::new(0.0, 10.0).unwrap();
        let h = hist(vec![1.0, 4.0, 2.0, 8.0, 5.0, 3.0]);
        let f = forecast_recursive(&net, &norm, &h, spec, 1).unwrap();
        // Target index 6 with delay 2 and 3 inputs reads indices 2..=4.
        let x: Vec<f64> = [2.0, 8.0, 5.0].iter().map(|&v| norm.normalize(v)).collect();
        let expected = norm.denormalize(forward_feedforward(&net, &x).unwrap());
        assert_eq!(f.predicted, vec![expected]);
        assert_eq!(f.start, h.end());
    }

    #[test]
    fn first_step_uses_oldest_lags() {
        // Net whose output is exactly the first input.
        let s = crate::nn::StructureSpec::custom(1, 1)
            .unwrap()
            .with_activations([crate::nn::Activation::Purelin; 3]);
        let mut net = NetworkState::<f64>::zeros(Family::Feedforward, s, 8);
        net.w1.set(0, 0, 1.0);
        net.w2.set(0, 0, 1.0);
        net.w3.set(0, 0, 1.0);
        let norm = NormParams::new(-1.0, 1.0).unwrap();
        let h = hist((0..11).map(|i| i as f64 / 10.0).collect());
        let f = forecast_recursive(&net, &norm, &h, WindowSpec::new(4, 8).unwrap(), 1).unwrap();
        // Target index 11: oldest lag 11 -> index 0.
        assert!((f.predicted[0] - h.values[0]).abs() < 1e-15);
        assert!(forecast_recursive(&net, &norm, &h.slice(0..10).unwrap(), WindowSpec::new(4, 8).unwrap(), 1).is_err());
    }

    #[test]
    fn elman_warmup_matches_manual_stepping() {
        let spec = WindowSpec::new(1, 3).unwrap();
        let net = initialize::<f64>(Family::Elman, catalog_structure(1).unwrap(), 3, 9).unwrap();
        let norm = NormParams::new(0.0, 10.0).unwrap();
        let h = hist(vec![3.0, 5.0, 2.0, 7.0, 6.0, 1.0, 4.0]);
        let f = forecast_recursive(&net, &norm, &h, spec, 1).unwrap();

        let z: Vec<f64> = h.values.iter().map(|&v| norm.normalize(v)).collect();
        let mut manual = net.clone();
        let mut out = 0.0;
        for k in 3..=7 {
            let (y, ctx) = forward_elman(&manual, &z[k - 3..k]).unwrap();
            manual.context = ctx;
            out = y;
        }
        assert!((f.predicted[0] - norm.denormalize(out)).abs() < 1e-12);
    }

    #[test]
    fn prefix_property() {
        let s = synthesize::<f64>(10, 2, &SynthParams::default()).unwrap();
        let norm = NormParams::fit(&s.values).unwrap();
        let spec = WindowSpec::new(1, 7).unwrap();
        for fam in Family::ALL {
            let net = initialize::<f64>(fam, catalog_structure(4).unwrap(), 7, 3).unwrap();
            let a = forecast_recursive(&net, &norm, &s, spec, 30).unwrap();
            let b = forecast_recursive(&net, &norm, &s, spec, 31).unwrap();
            assert_eq!(a.predicted[..], b.predicted[..30]);
        }
    }

    #[test]
    fn csv_output() {
        let f = ForecastResult {
            start: SynthParams::default().start,
            horizon_hours: 2,
            predicted: vec![1.5, 2.25],
            actual: None,
            metrics: None,
        };
        assert_eq!(
            f.to_csv_string(),
            "timestamp,predicted_kw\n2024-01-05T00:00:00,1.5\n2024-01-05T01:00:00,2.25\n"
        );
        let f = f.with_actual(&[1.0, 2.0]).unwrap();
        assert!(f.to_csv_string().starts_with("timestamp,predicted_kw,actual_kw\n2024-01-05T00:00:00,1.5,1\n"));
    }
}
