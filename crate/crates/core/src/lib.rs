//! Cocycles over ergodic transformations.
//!
//! The crate builds explicit skew-product cocycles over odometers and circle
//! rotations and checks their essential-value certificates on finite
//! truncations of the underlying systems:
//!
//! * [`blocks`]: canonical and balanced difference blocks.
//! * [`odometer`]: mixed-radix odometers, product-type cocycles and the
//!   squashable odometer construction.
//! * [`rotation`]: continued fractions, Rokhlin towers and smooth
//!   squashable cocycles over rotations.
//! * [`evc`]: essential value condition certificates on cyclic systems.
//! * [`maharam`]: Maharam skew products and their dilation flow.
//! * [`cli`]: the command-line front end.

pub mod blocks;
pub mod cli;
pub mod error;
pub mod evc;
pub mod maharam;
pub mod measure;
pub mod odometer;
pub mod report;
pub mod rotation;

pub use error::{Error, Result};
