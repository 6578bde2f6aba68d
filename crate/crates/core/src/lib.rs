//! Monte-Carlo simulation of OAM-encoded QKD through wind-driven turbulence,
//! with adaptive-optics correction of the received modes.
//!
//! Every numerical type is generic over [`Real`]; the `*64` / `*32`
//! aliases below pin the scalar for callers that do not care.

pub mod ao;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod modes;
pub mod propagation;
pub mod qkd;
pub mod runner;
pub mod scalar;
pub mod special;
pub mod turbulence;

pub use ao::{AoConfig, AoMode, AoSystem};
pub use error::{Error, Result};
pub use field::{ComplexField, PhaseMap};
pub use grid::Grid;
pub use propagation::{Propagator, ScreenStack};
pub use qkd::{CrosstalkMatrix, ExperimentRecord, ProtocolConfig};
pub use runner::{run_experiment, summarize_dir, Experiment, ExperimentConfig, RunOptions, RunReport};
pub use scalar::Real;
pub use turbulence::{PhaseScreen, ScreenDump, ScreenParams, TurbulenceParams};

pub type Grid64 = Grid<f64>;
pub type ComplexField64 = ComplexField<f64>;
pub type PhaseMap64 = PhaseMap<f64>;
pub type PhaseScreen64 = PhaseScreen<f64>;
pub type ScreenStack64 = ScreenStack<f64>;
pub type Propagator64 = Propagator<f64>;
pub type AoSystem64 = AoSystem<f64>;
pub type Experiment64 = Experiment<f64>;

pub type Grid32 = Grid<f32>;
pub type ComplexField32 = ComplexField<f32>;
pub type Experiment32 = Experiment<f32>;
