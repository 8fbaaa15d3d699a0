//! Three-dimensional complex field reconstruction from a single off-axis
//! hologram.
//!
//! The detector field is modeled as the sum of band-limited angular
//! spectrum propagations of every slice of a volume. The volume is recovered
//! by mean gradient descent between the data misfit and total variation,
//! optionally confined axially by inverse amplitude-contrast weights.

pub mod cli;
pub mod error;
pub mod fft;
pub mod field;
pub mod holo;
pub mod io;
pub mod mgd;
pub mod phantom;
pub mod pipeline;
pub mod propagation;
pub mod tv;
pub mod unwrap;

pub use error::{Error, Result};
pub use field::{AxialBox, Field2D, FieldVolume, GridSpec};
