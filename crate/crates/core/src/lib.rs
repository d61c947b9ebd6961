//! Simulation and calibration workbench for drifting sensors.
//!
//! A measurement is modelled as `y = f(h * e) + n`: a white event `e`, a
//! causal FIR environment `h`, a cubic observation process `f` and additive
//! noise. Two recalibration strategies are provided once `f` drifts:
//!
//! * semi-blind ([`sysid`]): a known event identifies `h` while the sensor is
//!   trusted, and later re-fits `f` with `h` held fixed;
//! * blind ([`neural`]): a two-stage dense autoencoder is trained on `(x, y)`
//!   while the sensor is trusted, then retrained on `y` alone with its
//!   environment layers frozen; its first stage becomes the new restitution.
//!
//! [`calibration`] runs both lifecycles end to end and writes reports.

pub mod calibration;
pub mod config;
pub mod error;
mod linalg;
pub mod neural;
pub mod signal;
pub mod sysid;

pub use calibration::{rmse, CalibrationReport, ExperimentConfig, Flavour};
pub use error::{Error, Result};
pub use neural::{MlpNetwork, TrainConfig, TrainTrace};
pub use signal::{ChainConfig, FirFilter, NoiseModel, SensorModel, SignalSeries};
