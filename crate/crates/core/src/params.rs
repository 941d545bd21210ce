//! Print parameter domain types shared by the model, the optimizer, and the
//! virtual printer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("bounds field {0} must be finite")]
    NonFiniteBound(&'static str),
    #[error("bounds must satisfy {0}_min < {0}_max")]
    EmptyRange(&'static str),
}

/// One candidate printer setting: travel speed of the deposition head and the
/// flow multiplier applied to the slicer's baseline extrusion rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintParameters {
    /// Print speed in mm/s.
    #[serde(rename = "vp")]
    pub speed: f64,
    /// Extrusion multiplier, dimensionless.
    #[serde(rename = "em")]
    pub extrusion: f64,
}

impl PrintParameters {
    pub fn new(speed: f64, extrusion: f64) -> Self {
        Self { speed, extrusion }
    }
}

/// Axis-aligned search box for print parameters. Both edges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    #[serde(rename = "vp_min")]
    pub speed_min: f64,
    #[serde(rename = "vp_max")]
    pub speed_max: f64,
    #[serde(rename = "em_min")]
    pub extrusion_min: f64,
    #[serde(rename = "em_max")]
    pub extrusion_max: f64,
}

impl Default for ParameterBounds {
    /// Equipment envelope used throughout: 10 to 500 mm/s and flow scale
    /// 0.5 to 1.5.
    fn default() -> Self {
        Self {
            speed_min: 10.0,
            speed_max: 500.0,
            extrusion_min: 0.5,
            extrusion_max: 1.5,
        }
    }
}

impl ParameterBounds {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let axes = [
            ("vp", self.speed_min, self.speed_max),
            ("em", self.extrusion_min, self.extrusion_max),
        ];
        for (name, lo, hi) in axes {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(ParamsError::NonFiniteBound(name));
            }
            if lo >= hi {
                return Err(ParamsError::EmptyRange(name));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &PrintParameters) -> bool {
        p.speed >= self.speed_min
            && p.speed <= self.speed_max
            && p.extrusion >= self.extrusion_min
            && p.extrusion <= self.extrusion_max
    }

    /// Min-max normalization onto the unit square, speed first.
    pub fn normalize(&self, p: &PrintParameters) -> [f64; 2] {
        [
            (p.speed - self.speed_min) / (self.speed_max - self.speed_min),
            (p.extrusion - self.extrusion_min) / (self.extrusion_max - self.extrusion_min),
        ]
    }
}
