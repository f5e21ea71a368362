//! Forward model of a one-bit threshold sensor.

mod frames;
mod operator;
mod pattern;

pub use frames::{sample_binary_frames, stack_exposures, BinaryFrameStack};
pub use operator::{apply_sensing_adjoint, apply_sensing_operator, BoundaryMode, SensingOperator};
pub use pattern::{covering_thresholds, make_hdr_pattern, make_uniform_pattern, ThresholdPattern};
