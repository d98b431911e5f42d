//! Hourly load series, lag windows, min/max scaling and the synthetic generator.

use std::fmt;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::Scalar;

pub const HOURS_PER_DAY: usize = 24;
pub const HOURS_PER_WEEK: usize = 168;
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const CSV_HEADER: &str = "timestamp,load_kw";

pub const DELAYS: std::ops::RangeInclusive<usize> = 1..=4;
pub const INPUT_COUNTS: std::ops::RangeInclusive<usize> = 2..=8;

/// Hourly load measurements in kW starting at `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadSeries<T> {
    pub start: NaiveDateTime,
    pub values: Vec<T>,
}

impl<T: Scalar> LoadSeries<T> {
    pub fn new(start: NaiveDateTime, values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("load series is empty".into()));
        }
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::Validation(format!(
                "series start {start} is not on an hour boundary"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < T::zero())
        {
            return Err(Error::Validation(format!(
                "sample {i} has value {v}; loads must be finite and non-negative"
            )));
        }
        Ok(LoadSeries { start, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    /// End timestamp (exclusive).
    pub fn end(&self) -> NaiveDateTime {
        self.timestamp(self.len())
    }

    /// Samples `range`, keeping timestamps aligned.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "range {range:?} does not fit a series of {} samples",
                self.len()
            )));
        }
        Ok(LoadSeries {
            start: self.timestamp(range.start),
            values: self.values[range].to_vec(),
        })
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::of(self.len() as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * 32);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!(
                "{},{}\n",
                self.timestamp(i).format(TIMESTAMP_FORMAT),
                v
            ));
        }
        out
    }
}

/// Parses a `timestamp,load_kw` CSV file into a gap-free hourly series.
pub fn load_csv<T: Scalar>(path: &Path) -> Result<LoadSeries<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(std::io::BufReader::new(file), path)
}

pub fn parse_csv<T: Scalar, R: std::io::Read>(reader: R, path: &Path) -> Result<LoadSeries<T>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut timestamps: Vec<(usize, NaiveDateTime)> = Vec::new();
    let mut values = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| {
            let line = e.position().map_or(line, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        if idx == 0 {
            let header: Vec<&str> = record.iter().collect();
            if header != ["timestamp", "load_kw"] {
                return Err(parse_err(
                    line,
                    format!("expected header `{CSV_HEADER}`, found `{}`", header.join(",")),
                ));
            }
            continue;
        }
        if record.len() != 2 {
            return Err(parse_err(
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let ts = NaiveDateTime::parse_from_str(&record[0], TIMESTAMP_FORMAT)
            .map_err(|e| parse_err(line, format!("bad timestamp `{}`: {e}", &record[0])))?;
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(parse_err(line, format!("timestamp {ts} is not on the hour")));
        }
        let v: T = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad load value `{}`", &record[1])))?;
        if !v.is_finite() || v < T::zero() {
            return Err(parse_err(
                line,
                format!("load value {v} must be finite and non-negative"),
            ));
        }
        timestamps.push((line, ts));
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Validation(format!("{}: no data rows", path.display())));
    }

    let mut missing = Vec::new();
    for pair in timestamps.windows(2) {
        let ((_, prev), (line, cur)) = (pair[0], pair[1]);
        if cur <= prev {
            return Err(Error::Validation(format!(
                "{}:{line}: timestamp {cur} does not follow {prev}",
                path.display()
            )));
        }
        let mut t = prev + Duration::hours(1);
        while t < cur {
            missing.push(t);
            t += Duration::hours(1);
        }
    }
    if !missing.is_empty() {
        let shown: Vec<String> = missing
            .iter()
            .take(10)
            .map(|t| t.format(TIMESTAMP_FORMAT).to_string())
            .collect();
        let more = if missing.len() > shown.len() {
            format!(" (and {} more)", missing.len() - shown.len())
        } else {
            String::new()
        };
        return Err(Error::Validation(format!(
            "{}: {} missing hour(s): {}{more}",
            path.display(),
            missing.len(),
            shown.join(", ")
        )));
    }
    LoadSeries::new(timestamps[0].1, values)
}

/// Chronological split into the first `train_days` and the following `test_days`.
pub fn split<T: Scalar>(
    series: &LoadSeries<T>,
    train_days: usize,
    test_days: usize,
) -> Result<(LoadSeries<T>, LoadSeries<T>)> {
    if train_days == 0 || test_days == 0 {
        return Err(Error::invalid("train_days and test_days must both be positive"));
    }
    let train_len = train_days * HOURS_PER_DAY;
    let test_len = test_days * HOURS_PER_DAY;
    if series.len() < train_len + test_len {
        return Err(Error::invalid(format!(
            "insufficient data: {} samples, need {} for {train_days}+{test_days} days",
            series.len(),
            train_len + test_len
        )));
    }
    Ok((
        series.slice(0..train_len)?,
        series.slice(train_len..train_len + test_len)?,
    ))
}

/// Delay (hours between the most recent input and the target) and number of lagged inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowSpec {
    pub delay: usize,
    pub input_count: usize,
}

impl WindowSpec {
    /// A window from the standard grid: delay 1..=4, 2..=8 inputs.
    pub fn new(delay: usize, input_count: usize) -> Result<Self> {
        if !DELAYS.contains(&delay) || !INPUT_COUNTS.contains(&input_count) {
            return Err(Error::invalid(format!(
                "window (delay {delay}, inputs {input_count}) is outside delays 1..=4 x inputs 2..=8"
            )));
        }
        Ok(WindowSpec { delay, input_count })
    }

    /// A window outside the standard grid, e.g. the 10-input complexity sweep.
    pub fn extended(delay: usize, input_count: usize) -> Result<Self> {
        if delay == 0 || input_count == 0 {
            return Err(Error::invalid("delay and input_count must be positive"));
        }
        Ok(WindowSpec { delay, input_count })
    }

    /// Distance from the target back to the oldest input.
    pub fn span(&self) -> usize {
        self.delay + self.input_count - 1
    }

    /// Minimum series length yielding one row.
    pub fn min_series_len(&self) -> usize {
        self.span() + 1
    }

    /// Source indices feeding target `k`, oldest first.
    pub fn input_indices(&self, k: usize) -> std::ops::RangeInclusive<usize> {
        (k - self.span())..=(k - self.delay)
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "delay {} / {} inputs", self.delay, self.input_count)
    }
}

/// All 28 standard windows, delay-major.
pub fn enumerate_specs() -> Vec<WindowSpec> {
    DELAYS
        .flat_map(|delay| INPUT_COUNTS.map(move |input_count| WindowSpec { delay, input_count }))
        .collect()
}

/// Linear map of `[min, max]` onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> NormParams<T> {
    pub fn new(min: T, max: T) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::invalid(format!(
                "normalization needs max > min, got [{min}, {max}]"
            )));
        }
        Ok(NormParams { min, max })
    }

    pub fn fit(values: &[T]) -> Result<Self> {
        let min = values.iter().copied().fold(T::infinity(), T::min);
        let max = values.iter().copied().fold(T::neg_infinity(), T::max);
        Self::new(min, max)
    }

    #[inline]
    pub fn normalize(&self, x: T) -> T {
        let two = T::of(2.0);
        two * (x - self.min) / (self.max - self.min) - T::one()
    }

    #[inline]
    pub fn denormalize(&self, y: T) -> T {
        (y + T::one()) * (self.max - self.min) / T::of(2.0) + self.min
    }
}

pub fn normalize<T: Scalar>(value: T, norm: &NormParams<T>) -> T {
    norm.normalize(value)
}

pub fn denormalize<T: Scalar>(value: T, norm: &NormParams<T>) -> T {
    norm.denormalize(value)
}

/// Raw `(inputs, target)` rows for every valid target index, in chronological order.
pub fn raw_windows<T: Scalar>(values: &[T], spec: WindowSpec) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    if values.len() < spec.min_series_len() {
        return Err(Error::invalid(format!(
            "series of {} samples is too short for {spec}: need at least {}",
            values.len(),
            spec.min_series_len()
        )));
    }
    let rows = spec.span()..values.len();
    let inputs = rows
        .clone()
        .map(|k| values[spec.input_indices(k)].to_vec())
        .collect();
    let targets = rows.map(|k| values[k]).collect();
    Ok((inputs, targets))
}

/// Normalized lag windows over a series.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset<T> {
    pub spec: WindowSpec,
    /// One row per target; each row holds `input_count` values, oldest lag first.
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<T>,
    pub norm: NormParams<T>,
}

impl<T: Scalar> WindowedDataset<T> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Builds a dataset directly from normalized rows.
    pub fn from_rows(
        spec: WindowSpec,
        inputs: Vec<Vec<T>>,
        targets: Vec<T>,
        norm: NormParams<T>,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} input rows vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(bad) = inputs.iter().find(|r| r.len() != spec.input_count) {
            return Err(Error::invalid(format!(
                "row of length {} in a dataset with {} inputs",
                bad.len(),
                spec.input_count
            )));
        }
        Ok(WindowedDataset {
            spec,
            inputs,
            targets,
            norm,
        })
    }

    /// Same rows in a different order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        WindowedDataset {
            spec: self.spec,
            inputs: order.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: order.iter().map(|&i| self.targets[i]).collect(),
            norm: self.norm,
        }
    }
}

/// Lag windows of `series`, scaled with `norm` (normally fitted on the training span).
pub fn build_windows<T: Scalar>(
    series: &LoadSeries<T>,
    spec: WindowSpec,
    norm: NormParams<T>,
) -> Result<WindowedDataset<T>> {
    let scaled: Vec<T> = series.values.iter().map(|&v| norm.normalize(v)).collect();
    let (inputs, targets) = raw_windows(&scaled, spec)?;
    Ok(WindowedDataset {
        spec,
        inputs,
        targets,
        norm,
    })
}

/// [`build_windows`] with normalization fitted on `series` itself.
pub fn build_training_windows<T: Scalar>(
    series: &LoadSeries<T>,
    spec: WindowSpec,
) -> Result<WindowedDataset<T>> {
    build_windows(series, spec, NormParams::fit(&series.values)?)
}

/// Shape of the synthetic load generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub start: NaiveDateTime,
    pub base_kw: f64,
    /// Daily sinusoid amplitude as a fraction of `base_kw`.
    pub daily_amplitude: f64,
    /// Hour of day at which the daily sinusoid peaks.
    pub peak_hour: f64,
    /// Multiplier applied on Saturdays and Sundays.
    pub weekend_factor: f64,
    /// Standard deviation of additive Gaussian noise as a fraction of `base_kw`.
    pub noise_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            start: NaiveDate::from_ymd_opt(2024, 1, 5)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            base_kw: 1000.0,
            daily_amplitude: 0.25,
            peak_hour: 14.0,
            weekend_factor: 0.7,
            noise_fraction: 0.02,
        }
    }
}

impl SynthParams {
    /// Noise-free load at `t`.
    pub fn deterministic_load(&self, t: NaiveDateTime) -> f64 {
        let hour = t.hour() as f64;
        let phase = 2.0 * std::f64::consts::PI * (hour - self.peak_hour) / HOURS_PER_DAY as f64;
        let daily = self.base_kw * (1.0 + self.daily_amplitude * phase.cos());
        match t.weekday() {
            Weekday::Sat | Weekday::Sun => daily * self.weekend_factor,
            _ => daily,
        }
    }
}

/// Seeded synthetic hourly series: base load, daily sinusoid, weekend dip and Gaussian noise.
pub fn synthesize<T: Scalar>(days: usize, seed: u64, params: &SynthParams) -> Result<LoadSeries<T>> {
    if days == 0 {
        return Err(Error::invalid("days must be at least 1"));
    }
    let sigma = params.noise_fraction * params.base_kw;
    let noise = Normal::new(0.0, sigma.max(0.0))
        .map_err(|e| Error::invalid(format!("noise level: {e}")))?;
    let floor = 1e-3 * params.base_kw.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..days * HOURS_PER_DAY)
        .map(|h| {
            let t = params.start + Duration::hours(h as i64);
            let mut v = params.deterministic_load(t);
            if sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            T::of(v.max(floor))
        })
        .collect();
    LoadSeries::new(params.start, values)
}
