//! File formats.

pub mod container;
pub mod manifest;
pub mod pgm;

pub use container::{read_tensor, write_tensor, Tensor, TensorData};
pub use manifest::Manifest;
pub use pgm::{read_pgm, write_pgm, Pgm};
