//! JSON model persistence.
//!
//! Floats are written in shortest round-trip decimal form and parsed back
//! exactly, so save → load reproduces every weight bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{NormParams, WindowSpec};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::NetworkState;
use crate::Scalar;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub learning_rate: f64,
    pub restarts: usize,
    /// Epoch budget of the most recent training or continuation run.
    pub epochs: usize,
    /// Epochs actually run across the initial training and all continuations.
    pub epochs_run: usize,
    pub final_error: f64,
    pub goal_reached: bool,
    /// Leading samples of the data file used for training.
    pub train_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct ModelFile<T> {
    pub schema_version: u32,
    pub scalar: String,
    pub window: WindowSpec,
    pub norm: NormParams<T>,
    pub network: NetworkState<T>,
    pub provenance: Provenance,
}

impl<T: Scalar> ModelFile<T> {
    pub fn new(
        network: NetworkState<T>,
        window: WindowSpec,
        norm: NormParams<T>,
        provenance: Provenance,
    ) -> Result<Self> {
        let m = ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            scalar: T::NAME.to_string(),
            window,
            norm,
            network,
            provenance,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported schema version {} (expected {MODEL_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.scalar != T::NAME {
            return Err(Error::ModelFormat(format!(
                "model stores {} values, loader expects {}",
                self.scalar,
                T::NAME
            )));
        }
        if self.window.input_count != self.network.input_count {
            return Err(Error::ModelFormat(format!(
                "window has {} inputs, network has {}",
                self.window.input_count, self.network.input_count
            )));
        }
        NormParams::new(self.norm.min, self.norm.max)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        self.network
            .validate()
            .map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelFile<T> =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{catalog_structure, initialize, Family};

    fn provenance() -> Provenance {
        Provenance {
            seed: 3,
            learning_rate: 0.01,
            restarts: 1,
            epochs: 10,
            epochs_run: 10,
            final_error: 0.123_456_789_012_345_67,
            goal_reached: false,
            train_samples: 960,
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        for fam in Family::ALL {
            let mut net = initialize::<f64>(fam, catalog_structure(5).unwrap(), 8, 17).unwrap();
            if fam == Family::Elman {
                net.context = vec![0.1 + 1e-17; 12];
            }
            let m = ModelFile::new(
                net,
                WindowSpec::new(2, 8).unwrap(),
                NormParams::new(512.123_456_789, 1_299.987_654_321).unwrap(),
                provenance(),
            )
            .unwrap();
            let back = ModelFile::<f64>::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
        let net = initialize::<f32>(Family::Elman, catalog_structure(2).unwrap(), 3, 1).unwrap();
        let m = ModelFile::new(net, WindowSpec::new(1, 3).unwrap(), NormParams::new(1.0f32, 3.0).unwrap(), provenance()).unwrap();
        assert_eq!(ModelFile::<f32>::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_mismatched_files() {
        let net = initialize::<f64>(Family::Feedforward, catalog_structure(1).unwrap(), 3, 1).unwrap();
        let m = ModelFile::new(net.clone(), WindowSpec::new(1, 3).unwrap(), NormParams::new(0.0, 1.0).unwrap(), provenance()).unwrap();
        assert!(matches!(ModelFile::<f32>::from_json(&m.to_json()), Err(Error::ModelFormat(_))));
        assert!(ModelFile::new(net, WindowSpec::new(1, 4).unwrap(), NormParams::new(0.0, 1.0).unwrap(), provenance()).is_err());
        let broken = m.to_json().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(ModelFile::<f64>::from_json(&broken), Err(Error::ModelFormat(_))));
        assert!(ModelFile::<f64>::from_json("{").is_err());
    }
}
