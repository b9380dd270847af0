//! Circle rotations: continued fractions, Rokhlin towers and smooth cocycles.

pub mod bump;
pub mod cf;
pub mod level;
pub mod params;
pub mod piecewise;
pub mod squash;
pub mod towers;

pub use cf::{expand_rational, ContinuedFraction};
pub use piecewise::{Piece, PiecewisePoly};
pub use towers::{build_towers, TowerDecomposition};
pub use params::{Profile, Section7Params};
pub use bump::{BumpProfile, CpNorm};
pub use level::{build_level, check_level, rigid_time_report, LevelReport, RigidReport, RotationLevel};
pub use squash::{squash_rotation_search, SquashReport};
