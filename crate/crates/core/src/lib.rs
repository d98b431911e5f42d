//! Short-term electric load forecasting with three-layer feedforward and Elman
//! recurrent networks trained by backpropagation on lagged hourly load.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision to `f64`, which the command-line tool uses.

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod forecast;
pub mod io;
pub mod model_file;
pub mod nn;
mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use dataset::{
    build_training_windows, build_windows, enumerate_specs, load_csv, split, synthesize,
    NormParams, SynthParams, WindowSpec,
};
pub use forecast::{evaluate, forecast_recursive, persistence_baseline};
pub use nn::{
    activate, catalog_structure, forward_elman, forward_feedforward, initialize, Activation,
    Family, StructureSpec,
};
pub use training::{
    backprop_elman, backprop_feedforward, gradient_check, mse, train_multi_restart, TrainConfig,
};

pub type LoadSeries = dataset::LoadSeries<f64>;
pub type WindowedDataset = dataset::WindowedDataset<f64>;
pub type Norm = dataset::NormParams<f64>;
pub type NetworkState = nn::NetworkState<f64>;
pub type Matrix = nn::Matrix<f64>;
pub type TrainResult = training::TrainResult<f64>;
pub type ForecastResult = forecast::ForecastResult<f64>;
pub type MetricSet = forecast::MetricSet<f64>;
pub type ModelFile = model_file::ModelFile<f64>;

pub type LoadSeries32 = dataset::LoadSeries<f32>;
pub type NetworkState32 = nn::NetworkState<f32>;
pub type TrainResult32 = training::TrainResult<f32>;
