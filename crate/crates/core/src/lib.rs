//! Process parameter tuning for fused filament fabrication.
//!
//! The crate closes the loop between surface metrology and printer settings:
//! [`profile`] turns line-scan data into roughness numbers, [`gp`] models log
//! roughness over the parameter space, [`optimizer`] picks the next setting
//! under a roughness constraint with a confidence-switched acquisition rule,
//! and [`simulator`] stands in for the printer and scanner when running
//! without hardware.

pub mod gp;
pub mod optimizer;
pub mod params;
pub mod profile;
pub mod simulator;

mod fmt;

pub use fmt::format_float;
pub use params::{ParameterBounds, PrintParameters};
