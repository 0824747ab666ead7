//! Photon statistics of single emitters: three-level emitter model,
//! Hanbury-Brown–Twiss stream simulation, delay-histogram correlation and
//! nonlinear model fitting.

pub mod correlator;
pub mod emitter;
pub mod fit;
pub mod io;
pub mod selftest;
pub mod sim;
pub mod special;
pub mod validation;

pub use correlator::{CorrelationConfig, CorrelationHistogram, Stage};
pub use emitter::{
    DetectionChain, DeviceResponse, G2Coefficients, PolarizationModel, SaturationModel, TransitionRates,
};
pub use fit::FitResult;
pub use sim::{DetectorConfig, SimulationPlan, TimestampStream};
