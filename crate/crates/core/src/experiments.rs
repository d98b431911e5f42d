//! Structure × window grid and the one-dimensional sweeps over input count,
//! structure, delay and Elman complexity.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{build_training_windows, split, LoadSeries, WindowSpec, DELAYS, HOURS_PER_DAY, INPUT_COUNTS};
use crate::error::{Error, Result};
use crate::forecast::{evaluate, forecast_recursive};
use crate::io::write_atomic;
use crate::nn::{catalog_structure, Family, CATALOG};
use crate::training::{train_multi_restart, TrainConfig, TrainResult};
use crate::Scalar;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Horizon of the forecast used to rank grid cells.
pub const RANKING_HORIZON_HOURS: usize = 48;

/// `(input_count, catalog network number)` pairs of the Elman complexity
/// sweep, from the least to the most complex network.
pub const ELMAN_COMPLEXITY_PAIRINGS: [(usize, u8); 4] = [(4, 2), (6, 3), (8, 4), (10, 5)];

/// Reference configuration per family that grid winners are compared against.
pub const REFERENCE_PICKS: [CellKey; 2] = [
    CellKey {
        family: Family::Feedforward,
        network_number: 4,
        delay: 1,
        input_count: 7,
    },
    CellKey {
        family: Family::Elman,
        network_number: 5,
        delay: 1,
        input_count: 8,
    },
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub family: Family,
    pub network_number: u8,
    pub delay: usize,
    pub input_count: usize,
}

impl CellKey {
    pub fn spec(&self) -> WindowSpec {
        WindowSpec {
            delay: self.delay,
            input_count: self.input_count,
        }
    }

    /// File stem for per-configuration outputs, e.g. `ff_n4_d1_i7`.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_n{}_d{}_i{}",
            self.family.short_name(),
            self.network_number,
            self.delay,
            self.input_count
        )
    }
}

/// Restricts a grid run to a subset of networks, delays and input counts.
///
/// Parsed from `network=4|5,delay=1,inputs=7`; omitted keys select everything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFilter {
    pub networks: Option<BTreeSet<u8>>,
    pub delays: Option<BTreeSet<usize>>,
    pub inputs: Option<BTreeSet<usize>>,
}

impl CellFilter {
    pub fn matches(&self, key: &CellKey) -> bool {
        self.networks.as_ref().is_none_or(|s| s.contains(&key.network_number))
            && self.delays.as_ref().is_none_or(|s| s.contains(&key.delay))
            && self.inputs.as_ref().is_none_or(|s| s.contains(&key.input_count))
    }
}

impl FromStr for CellFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        fn values<V: FromStr + Ord>(key: &str, raw: &str) -> Result<BTreeSet<V>> {
            raw.split('|')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad value `{v}` for filter key `{key}`")))
                })
                .collect()
        }
        let mut f = CellFilter::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("filter term `{part}` is not key=value")))?;
            match k.trim() {
                "network" | "networks" => f.networks = Some(values(k, v)?),
                "delay" | "delays" => f.delays = Some(values(k, v)?),
                "inputs" | "input" => f.inputs = Some(values(k, v)?),
                other => return Err(Error::invalid(format!("unknown filter key `{other}`"))),
            }
        }
        Ok(f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub train: TrainConfig,
    pub train_days: usize,
    pub test_days: usize,
    pub families: Vec<Family>,
    pub filter: CellFilter,
    /// Record wall-clock fields; off by default so reports are reproducible byte for byte.
    #[serde(skip)]
    pub record_timings: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            train: TrainConfig {
                epochs: 300,
                ..TrainConfig::default()
            },
            train_days: 40,
            test_days: 21,
            families: Family::ALL.to_vec(),
            filter: CellFilter::default(),
            record_timings: false,
        }
    }
}

impl GridConfig {
    pub fn keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        let families: BTreeSet<Family> = self.families.iter().copied().collect();
        for family in families {
            for net in 1..=CATALOG.len() as u8 {
                for delay in DELAYS {
                    for input_count in INPUT_COUNTS {
                        let key = CellKey {
                            family,
                            network_number: net,
                            delay,
                            input_count,
                        };
                        if self.filter.matches(&key) {
                            keys.push(key);
                        }
                    }
                }
            }
        }
        keys
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub family: Family,
    pub network_number: u8,
    pub spec: WindowSpec,
    pub final_train_mse: Option<f64>,
    /// MAPE (percent) of the recursive 48-hour forecast over the start of the test split.
    pub test_mape: Option<f64>,
    pub epochs_to_goal: Option<usize>,
    pub best_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub error_curve: Vec<f64>,
}

impl GridCell {
    pub fn key(&self) -> CellKey {
        CellKey {
            family: self.family,
            network_number: self.network_number,
            delay: self.spec.delay,
            input_count: self.spec.input_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub reference: CellKey,
    pub winner: CellKey,
    pub matches: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub config_digest: String,
    pub config: GridConfig,
    pub error_metric: String,
    pub ranking: String,
    pub cells: Vec<GridCell>,
    pub best_feedforward: Option<GridCell>,
    pub best_elman: Option<GridCell>,
    pub reference_comparison: Vec<ReferenceComparison>,
}

/// SHA-256 over the configuration and the series.
pub fn config_digest<T: Scalar, C: Serialize>(series: &LoadSeries<T>, config: &C) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(series.start.to_string().as_bytes());
    for v in &series.values {
        h.update(v.to_string().as_bytes());
        h.update(b",");
    }
    hex::encode(h.finalize())
}

/// Lowest test MAPE within `family`; ties go to the smallest key.
pub fn pick_winner(cells: &[GridCell], family: Family) -> Option<&GridCell> {
    cells
        .iter()
        .filter(|c| c.family == family)
        .filter_map(|c| c.test_mape.filter(|m| m.is_finite()).map(|m| (m, c)))
        .min_by(|(a, ca), (b, cb)| a.total_cmp(b).then_with(|| ca.key().cmp(&cb.key())))
        .map(|(_, c)| c)
}

/// Trains and evaluates one grid cell. Errors are recorded in the cell.
pub fn run_cell<T: Scalar>(
    train_series: &LoadSeries<T>,
    test_series: &LoadSeries<T>,
    key: CellKey,
    cfg: &GridConfig,
) -> GridCell {
    let started = Instant::now();
    let mut cell = GridCell {
        family: key.family,
        network_number: key.network_number,
        spec: key.spec(),
        final_train_mse: None,
        test_mape: None,
        epochs_to_goal: None,
        best_seed: None,
        wall_time_ms: None,
        error: None,
        error_curve: Vec::new(),
    };
    let outcome = (|| -> Result<()> {
        let structure = catalog_structure(key.network_number)?;
        let ds = build_training_windows(train_series, key.spec())?;
        let r: TrainResult<T> = train_multi_restart(key.family, structure, &ds, &cfg.train)?;
        cell.final_train_mse = Some(r.final_error().to_f64_lossy());
        cell.epochs_to_goal = r.goal_reached.then_some(r.stopped_at_epoch);
        cell.best_seed = r.seed;
        cell.error_curve = r.error_curve.iter().map(|e| e.to_f64_lossy()).collect();
        let horizon = RANKING_HORIZON_HOURS.min(test_series.len());
        let f = forecast_recursive(&r.best, &ds.norm, train_series, key.spec(), horizon)?;
        let m = evaluate(&f.predicted, &test_series.values[..horizon])?;
        cell.test_mape = Some(m.mape.to_f64_lossy());
        Ok(())
    })();
    if let Err(e) = outcome {
        cell.error = Some(e.to_string());
    }
    if cfg.record_timings {
        cell.wall_time_ms = Some(started.elapsed().as_millis() as u64);
    }
    cell
}

/// Runs every selected `(family, network, delay, inputs)` configuration.
///
/// Cells run concurrently and are reported in key order. A cell that fails
/// keeps its error message; the call fails only if every cell failed.
pub fn run_grid<T: Scalar>(series: &LoadSeries<T>, cfg: &GridConfig) -> Result<GridReport> {
    cfg.train.validate()?;
    let (train_series, test_series) = split(series, cfg.train_days, cfg.test_days)?;
    let keys = cfg.keys();
    if keys.is_empty() {
        return Err(Error::invalid("the filter selects no grid cells"));
    }
    let mut cells: Vec<GridCell> = keys
        .par_iter()
        .map(|&key| run_cell(&train_series, &test_series, key, cfg))
        .collect();
    cells.sort_by_key(GridCell::key);

    if cells.iter().all(|c| c.error.is_some()) {
        return Err(Error::invalid(format!(
            "every grid cell failed; first error: {}",
            cells[0].error.as_deref().unwrap_or("")
        )));
    }
    let best_feedforward = pick_winner(&cells, Family::Feedforward).cloned();
    let best_elman = pick_winner(&cells, Family::Elman).cloned();
    let reference_comparison = REFERENCE_PICKS
        .iter()
        .filter_map(|r| {
            let winner = match r.family {
                Family::Feedforward => best_feedforward.as_ref(),
                Family::Elman => best_elman.as_ref(),
            }?
            .key();
            Some(ReferenceComparison {
                reference: *r,
                winner,
                matches: winner == *r,
            })
        })
        .collect();

    Ok(GridReport {
        schema_version: REPORT_SCHEMA_VERSION,
        generated_at: cfg
            .record_timings
            .then(|| chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()),
        config_digest: config_digest(series, cfg),
        config: cfg.clone(),
        error_metric: "training error is mean squared error on [-1, 1]-scaled load".into(),
        ranking: format!("winner per family = lowest MAPE of the {RANKING_HORIZON_HOURS} h recursive test forecast"),
        cells,
        best_feedforward,
        best_elman,
        reference_comparison,
    })
}

/// Checks key uniqueness and that the recorded winners follow from the cells.
pub fn verify_report(report: &GridReport) -> Result<()> {
    let mut seen = BTreeSet::new();
    for c in &report.cells {
        if !seen.insert(c.key()) {
            return Err(Error::Validation(format!("duplicate cell {:?}", c.key())));
        }
    }
    let expected = report.config.keys();
    if expected.len() != report.cells.len() {
        return Err(Error::Validation(format!(
            "report has {} cells, config selects {}",
            report.cells.len(),
            expected.len()
        )));
    }
    for (family, recorded) in [
        (Family::Feedforward, &report.best_feedforward),
        (Family::Elman, &report.best_elman),
    ] {
        let derived = pick_winner(&report.cells, family).map(GridCell::key);
        if derived != recorded.as_ref().map(GridCell::key) {
            return Err(Error::Validation(format!(
                "{family} winner {:?} does not match re-derived {derived:?}",
                recorded.as_ref().map(GridCell::key)
            )));
        }
    }
    Ok(())
}

impl GridReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    /// Writes one `epoch,mse` file per successful cell into `dir`.
    pub fn write_curves(&self, dir: &Path) -> Result<()> {
        for c in self.cells.iter().filter(|c| !c.error_curve.is_empty()) {
            write_curve_csv(&dir.join(format!("{}.csv", c.key().file_stem())), &c.error_curve)?;
        }
        Ok(())
    }
}

pub fn curve_csv_string(curve: &[f64]) -> String {
    let mut out = String::from("epoch,mse\n");
    for (i, e) in curve.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, e);
    }
    out
}

pub fn write_curve_csv(path: &Path, curve: &[f64]) -> Result<()> {
    write_atomic(path, curve_csv_string(curve).as_bytes())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Inputs,
    Structures,
    Delays,
    ElmanComplexity,
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inputs" => Ok(SweepKind::Inputs),
            "structures" => Ok(SweepKind::Structures),
            "delays" => Ok(SweepKind::Delays),
            "elman-complexity" => Ok(SweepKind::ElmanComplexity),
            other => Err(Error::invalid(format!("unknown sweep kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub label: String,
    pub key: CellKey,
    pub final_error: f64,
    pub epochs_to_goal: Option<usize>,
    pub error_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub kind: SweepKind,
    pub config_digest: String,
    pub train: TrainConfig,
    pub train_days: usize,
    pub curves: Vec<SweepCurve>,
    /// Label of the curve that reached the goal in the fewest epochs, or else
    /// the one with the lowest final error.
    pub winner: String,
}

impl SweepReport {
    /// Summary without the per-epoch curves, which go to separate CSV files.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Light<'a> {
            schema_version: u32,
            kind: SweepKind,
            config_digest: &'a str,
            train: &'a TrainConfig,
            train_days: usize,
            curves: Vec<serde_json::Value>,
            winner: &'a str,
        }
        let curves = self
            .curves
            .iter()
            .map(|c| {
                serde_json::json!({
                    "label": c.label,
                    "key": c.key,
                    "final_error": c.final_error,
                    "epochs_recorded": c.error_curve.len(),
                    "epochs_to_goal": c.epochs_to_goal,
                })
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&Light {
            schema_version: self.schema_version,
            kind: self.kind,
            config_digest: &self.config_digest,
            train: &self.train,
            train_days: self.train_days,
            curves,
            winner: &self.winner,
        })
        .expect("sweep serializes");
        s.push('\n');
        s
    }

    pub fn write_curves(&self, dir: &Path) -> Result<()> {
        for c in &self.curves {
            write_curve_csv(&dir.join(format!("{}.csv", c.key.file_stem())), &c.error_curve)?;
        }
        Ok(())
    }

    pub fn final_error(&self, label: &str) -> Option<f64> {
        self.curves.iter().find(|c| c.label == label).map(|c| c.final_error)
    }
}

/// Training span shared by all sweeps: the first `train_days` of `series`.
fn sweep_train_span<T: Scalar>(series: &LoadSeries<T>, train_days: usize) -> Result<LoadSeries<T>> {
    let n = train_days * HOURS_PER_DAY;
    if train_days == 0 || series.len() < n {
        return Err(Error::invalid(format!(
            "insufficient data: sweeps train on {train_days} days but the series has {} samples",
            series.len()
        )));
    }
    series.slice(0..n)
}

fn run_sweep<T: Scalar>(
    series: &LoadSeries<T>,
    kind: SweepKind,
    points: Vec<(String, CellKey)>,
    cfg: &TrainConfig,
    train_days: usize,
) -> Result<SweepReport> {
    cfg.validate()?;
    let train_series = sweep_train_span(series, train_days)?;
    let curves: Vec<SweepCurve> = points
        .par_iter()
        .map(|(label, key)| -> Result<SweepCurve> {
            let spec = WindowSpec::extended(key.delay, key.input_count)?;
            let ds = build_training_windows(&train_series, spec)?;
            let structure = catalog_structure(key.network_number)?;
            let r: TrainResult<T> = train_multi_restart(key.family, structure, &ds, cfg)?;
            Ok(SweepCurve {
                label: label.clone(),
                key: *key,
                final_error: r.final_error().to_f64_lossy(),
                epochs_to_goal: r.goal_reached.then_some(r.stopped_at_epoch),
                error_curve: r.error_curve.iter().map(|e| e.to_f64_lossy()).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let winner = curves
        .iter()
        .filter_map(|c| c.epochs_to_goal.map(|e| (e, c)))
        .min_by_key(|(e, _)| *e)
        .map(|(_, c)| c)
        .or_else(|| curves.iter().min_by(|a, b| a.final_error.total_cmp(&b.final_error)))
        .map(|c| c.label.clone())
        .unwrap_or_default();
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind,
        config_digest: config_digest(series, &(kind, cfg, train_days)),
        train: cfg.clone(),
        train_days,
        curves,
        winner,
    })
}

/// Fixed structure and delay, input counts 2..=8.
pub fn sweep_inputs<T: Scalar>(
    series: &LoadSeries<T>,
    family: Family,
    network_number: u8,
    delay: usize,
    cfg: &TrainConfig,
    train_days: usize,
) -> Result<SweepReport> {
    catalog_structure(network_number)?;
    WindowSpec::new(delay, 2)?;
    let points = INPUT_COUNTS
        .map(|input_count| {
            (
                format!("{input_count} inputs"),
                CellKey { family, network_number, delay, input_count },
            )
        })
        .collect();
    run_sweep(series, SweepKind::Inputs, points, cfg, train_days)
}

/// Fixed window, catalog structures 1..=5.
pub fn sweep_structures<T: Scalar>(
    series: &LoadSeries<T>,
    family: Family,
    input_count: usize,
    delay: usize,
    cfg: &TrainConfig,
    train_days: usize,
) -> Result<SweepReport> {
    WindowSpec::new(delay, input_count)?;
    let points = (1..=CATALOG.len() as u8)
        .map(|network_number| {
            let s = catalog_structure(network_number).expect("catalog index");
            (
                format!("structure {s}"),
                CellKey { family, network_number, delay, input_count },
            )
        })
        .collect();
    run_sweep(series, SweepKind::Structures, points, cfg, train_days)
}

/// Fixed structure and input count, delays 1..=4.
pub fn sweep_delays<T: Scalar>(
    series: &LoadSeries<T>,
    family: Family,
    network_number: u8,
    input_count: usize,
    cfg: &TrainConfig,
    train_days: usize,
) -> Result<SweepReport> {
    catalog_structure(network_number)?;
    WindowSpec::new(1, input_count)?;
    let points = DELAYS
        .map(|delay| {
            (
                format!("delay {delay}"),
                CellKey { family, network_number, delay, input_count },
            )
        })
        .collect();
    run_sweep(series, SweepKind::Delays, points, cfg, train_days)
}

/// Elman networks of growing size and input count, delay 1.
pub fn sweep_complexity_elman<T: Scalar>(
    series: &LoadSeries<T>,
    cfg: &TrainConfig,
    train_days: usize,
) -> Result<SweepReport> {
    let points = ELMAN_COMPLEXITY_PAIRINGS
        .iter()
        .map(|&(input_count, network_number)| {
            let s = catalog_structure(network_number).expect("catalog index");
            (
                format!("{input_count} inputs, structure {s}"),
                CellKey {
                    family: Family::Elman,
                    network_number,
                    delay: 1,
                    input_count,
                },
            )
        })
        .collect();
    run_sweep(series, SweepKind::ElmanComplexity, points, cfg, train_days)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_parsing() {
        let f: CellFilter = "network=4|5, delay=1,inputs=7".parse().unwrap();
        assert_eq!(f.networks, Some([4, 5].into_iter().collect()));
        assert_eq!(f.delays, Some([1].into_iter().collect()));
        assert!("colour=red".parse::<CellFilter>().is_err());
        assert!("network".parse::<CellFilter>().is_err());
        assert!("network=x".parse::<CellFilter>().is_err());
        assert_eq!("".parse::<CellFilter>().unwrap(), CellFilter::default());
    }

    #[test]
    fn key_counts() {
        let mut cfg = GridConfig::default();
        assert_eq!(cfg.keys().len(), 280);
        cfg.families = vec![Family::Feedforward];
        assert_eq!(cfg.keys().len(), 140);
        cfg.filter = "network=4,delay=1,inputs=7".parse().unwrap();
        assert_eq!(cfg.keys().len(), 1);
        let keys = GridConfig::default().keys();
        let unique: BTreeSet<_> = keys.iter().collect();
        assert_eq!(unique.len(), keys.len());
    }

    #[test]
    fn complexity_pairings_use_catalog_numbering() {
        let sizes: Vec<_> = ELMAN_COMPLEXITY_PAIRINGS
            .iter()
            .map(|&(i, n)| (i, catalog_structure(n).unwrap().neurons()))
            .collect();
        assert_eq!(
            sizes,
            vec![(4, (3, 5, 1)), (6, (5, 7, 1)), (8, (9, 5, 1)), (10, (12, 10, 1))]
        );
    }

    #[test]
    fn winner_ties_go_to_smallest_key() {
        let cell = |net: u8, mape: Option<f64>| GridCell {
            family: Family::Elman,
            network_number: net,
            spec: WindowSpec::new(1, 2).unwrap(),
            final_train_mse: Some(0.1),
            test_mape: mape,
            epochs_to_goal: None,
            best_seed: Some(0),
            wall_time_ms: None,
            error: None,
            error_curve: vec![],
        };
        let cells = vec![cell(3, Some(2.0)), cell(2, Some(2.0)), cell(1, None), cell(5, Some(9.0))];
        assert_eq!(pick_winner(&cells, Family::Elman).unwrap().network_number, 2);
        assert!(pick_winner(&cells, Family::Feedforward).is_none());
    }

    #[test]
    fn curve_csv_format() {
        assert_eq!(curve_csv_string(&[0.5, 0.25]), "epoch,mse\n1,0.5\n2,0.25\n");
    }
}
