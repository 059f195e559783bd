//! Simulation and verification toolkit for space-time Lévy white noise,
//! spectrally colored Lévy noise, and the linear stochastic heat and wave
//! equations they drive.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod colored;
pub mod dft;
pub mod error;
pub mod grid;
pub mod levy;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod suites;
pub mod verify;
pub mod white_noise;

pub use colored::{ColoredKernel, ColoredPath, TestFunction};
pub use dft::DftPlan;
pub use error::{Error, Result};
pub use grid::{Axis, GridSpec};
pub use levy::{JumpLaw, JumpMeasure, JumpMeasureKind, LayerScheme, LayerStats, SmallJumpPolicy};
pub use rng::StreamSeed;
pub use solver::{GreenFunction, OperatorKind, SolutionField, SolverOptions, SolverPlan};
pub use spectral::{Condition, SpectralDensity, TabulatedDensity, TemperedMeasureMu};
pub use verify::{EcfReport, McReport};
pub use white_noise::NoiseGrid;
