//! Virtual printer used for closed-loop runs without hardware.
//!
//! The printer has a closed-form roughness response over speed and extrusion,
//! heteroscedastic measurement noise, a synthetic line-scan generator whose
//! ridge pattern reproduces a requested Ra, and a stiffness surrogate that
//! degrades with roughness. All randomness flows through a caller-supplied
//! RNG so that runs replay exactly.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{Measurement, Observation};
use crate::params::PrintParameters;
use crate::profile::{PartScan, ScanProfile};

#[derive(Debug, Error, PartialEq)]
pub enum SimulatorError {
    #[error("config field {0} must be finite and non-negative")]
    Negative(&'static str),
    #[error("config field {0} must be finite and strictly positive")]
    NonPositive(&'static str),
    #[error("layers must be at least 1")]
    NoLayers,
    #[error("samples_per_pass must be at least 2")]
    TooFewSamples,
    #[error("modulus_floor must not exceed modulus_base")]
    ModulusFloorAboveBase,
}

/// Virtual printer parameters. Defaults describe the reference machine all
/// examples and acceptance checks use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    /// Best-surface roughness offset in µm.
    pub r_floor: f64,
    /// Weight of the speed term in µm.
    pub speed_gain: f64,
    /// Speed that normalizes the speed term, mm/s.
    pub speed_ref: f64,
    /// Exponent of the speed term.
    pub speed_exp: f64,
    /// Weight of the under-extrusion penalty in µm.
    pub under_gain: f64,
    /// Exponent of the under-extrusion penalty.
    pub under_exp: f64,
    /// Weight of the over-extrusion penalty in µm.
    pub over_gain: f64,
    /// Exponent of the over-extrusion penalty.
    pub over_exp: f64,
    /// Extrusion optimum at zero speed.
    pub e_star_base: f64,
    /// Drop of the extrusion optimum per speed scale.
    pub e_star_slope: f64,
    /// Measurement noise floor in µm.
    pub noise_floor: f64,
    /// Measurement noise as a fraction of the true roughness.
    pub noise_frac: f64,
    /// Per-sample height noise of the line sensor in µm.
    pub sensor_noise: f64,
    /// Spatial period of deposited lines in mm.
    pub line_period: f64,
    /// Layers printed per part.
    pub layers: u32,
    /// Samples one scan pass records.
    pub samples_per_pass: u32,
    /// Distance between consecutive samples in µm.
    pub sample_spacing: f64,
    /// Modulus at zero roughness in GPa.
    pub modulus_base: f64,
    /// Modulus loss per µm below the knee, GPa/µm.
    pub modulus_slope1: f64,
    /// Roughness where the loss rate changes, µm.
    pub modulus_knee: f64,
    /// Modulus loss per µm above the knee, GPa/µm.
    pub modulus_slope2: f64,
    /// Lowest modulus the material reaches, GPa.
    pub modulus_floor: f64,
    /// Noise on modulus readings in GPa.
    pub modulus_noise: f64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            r_floor: 4.0,
            speed_gain: 7.0,
            speed_ref: 150.0,
            speed_exp: 1.5,
            under_gain: 120.0,
            under_exp: 1.5,
            over_gain: 260.0,
            over_exp: 2.0,
            e_star_base: 0.95,
            e_star_slope: 0.07,
            noise_floor: 0.3,
            noise_frac: 0.03,
            sensor_noise: 1.0,
            line_period: 0.4,
            layers: 40,
            samples_per_pass: 576,
            sample_spacing: 8.33,
            modulus_base: 20.9,
            modulus_slope1: 0.04,
            modulus_knee: 20.0,
            modulus_slope2: 0.18,
            modulus_floor: 8.0,
            modulus_noise: 0.15,
        }
    }
}

/// Speed scale over which the extrusion optimum drifts, mm/s.
const E_STAR_SPEED_SCALE: f64 = 500.0;

/// Lowest value the roughness sensor can report, µm.
const MIN_MEASURED_RA: f64 = 0.1;

impl SimulatorConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        let strictly_positive = [
            ("speed_ref", self.speed_ref),
            ("speed_exp", self.speed_exp),
            ("under_exp", self.under_exp),
            ("over_exp", self.over_exp),
            ("e_star_base", self.e_star_base),
            ("line_period", self.line_period),
            ("sample_spacing", self.sample_spacing),
            ("modulus_base", self.modulus_base),
        ];
        for (name, v) in strictly_positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(SimulatorError::NonPositive(name));
            }
        }
        let non_negative = [
            ("r_floor", self.r_floor),
            ("speed_gain", self.speed_gain),
            ("under_gain", self.under_gain),
            ("over_gain", self.over_gain),
            ("e_star_slope", self.e_star_slope),
            ("noise_floor", self.noise_floor),
            ("noise_frac", self.noise_frac),
            ("sensor_noise", self.sensor_noise),
            ("modulus_slope1", self.modulus_slope1),
            ("modulus_knee", self.modulus_knee),
            ("modulus_slope2", self.modulus_slope2),
            ("modulus_floor", self.modulus_floor),
            ("modulus_noise", self.modulus_noise),
        ];
        for (name, v) in non_negative {
            if !v.is_finite() || v < 0.0 {
                return Err(SimulatorError::Negative(name));
            }
        }
        if self.layers < 1 {
            return Err(SimulatorError::NoLayers);
        }
        if self.samples_per_pass < 2 {
            return Err(SimulatorError::TooFewSamples);
        }
        if self.modulus_floor > self.modulus_base {
            return Err(SimulatorError::ModulusFloorAboveBase);
        }
        Ok(())
    }

    /// Extrusion multiplier that minimizes roughness at the given speed. The
    /// optimum drifts down as speed rises: faster deposition needs less flow.
    pub fn optimal_extrusion(&self, speed: f64) -> f64 {
        self.e_star_base - self.e_star_slope * (speed / E_STAR_SPEED_SCALE)
    }
}

/// RNG for the printer's noise draws under one master seed. A dedicated
/// stream keeps the draws stable if other consumers of the seed appear.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    const SIMULATOR_STREAM: u64 = 0x51;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SIMULATOR_STREAM);
    rng
}

/// Noise-free roughness response in µm. A speed power law plus one-sided
/// penalties for deviating from the speed-dependent extrusion optimum;
/// over-extrusion is punished harder than under-extrusion away from the
/// optimum.
pub fn true_roughness(params: &PrintParameters, config: &SimulatorConfig) -> f64 {
    let e_star = config.optimal_extrusion(params.speed);
    let under = (e_star - params.extrusion).max(0.0);
    let over = (params.extrusion - e_star).max(0.0);
    config.r_floor
        + config.speed_gain * (params.speed / config.speed_ref).powf(config.speed_exp)
        + config.under_gain * under.powf(config.under_exp)
        + config.over_gain * over.powf(config.over_exp)
}

/// One roughness measurement: the true response plus heteroscedastic noise,
/// clamped to the sensor's minimum reading. Exactly one normal draw is taken
/// even when the noise scale is zero, keeping replay alignment independent of
/// the config.
pub fn measure_roughness<R: Rng>(
    params: &PrintParameters,
    config: &SimulatorConfig,
    rng: &mut R,
) -> f64 {
    let truth = true_roughness(params, config);
    let sigma = config.noise_floor.max(config.noise_frac * truth);
    let z: f64 = rng.sample(StandardNormal);
    (truth + sigma * z).max(MIN_MEASURED_RA)
}

/// Synthesize one scan pass over a layer whose deposited ridges have the
/// given target Ra. The surface is a sine at the line period; a sine of
/// amplitude A has Ra = 2A/pi, so the amplitude is pi/2 times the target.
/// Sensor noise is added per sample, one draw each, even at zero noise.
pub fn synthesize_layer_scan<R: Rng>(
    target_ra: f64,
    layer_index: u32,
    config: &SimulatorConfig,
    rng: &mut R,
) -> ScanProfile {
    let amplitude = std::f64::consts::FRAC_PI_2 * target_ra;
    let spacing_mm = config.sample_spacing / 1000.0;
    let n = config.samples_per_pass as usize;
    let mut positions = Vec::with_capacity(n);
    let mut heights = Vec::with_capacity(n);
    for i in 0..n {
        let x = i as f64 * spacing_mm;
        let z: f64 = rng.sample(StandardNormal);
        positions.push(x);
        heights.push(
            amplitude * (2.0 * std::f64::consts::PI * x / config.line_period).sin()
                + config.sensor_noise * z,
        );
    }
    ScanProfile::new(layer_index, positions, heights)
        .expect("synthetic pass positions are strictly increasing")
}

/// Scan a whole virtual part: every layer gets its own measured roughness
/// level (one noise draw) and its own synthetic pass, in layer order.
pub fn synthesize_part_scan<R: Rng>(
    params: &PrintParameters,
    config: &SimulatorConfig,
    rng: &mut R,
) -> PartScan {
    let profiles = (1..=config.layers)
        .map(|layer| {
            let target = measure_roughness(params, config, rng);
            synthesize_layer_scan(target, layer, config, rng)
        })
        .collect();
    PartScan::new(profiles).expect("layer indices are contiguous by construction")
}

/// Elastic modulus in GPa for a part of the given roughness: a piecewise
/// linear decline that steepens past the knee, floored, plus one noise draw.
pub fn surrogate_modulus<R: Rng>(roughness: f64, config: &SimulatorConfig, rng: &mut R) -> f64 {
    let drop = config.modulus_slope1 * roughness.min(config.modulus_knee)
        + config.modulus_slope2 * (roughness - config.modulus_knee).max(0.0);
    let z: f64 = rng.sample(StandardNormal);
    (config.modulus_base - drop).max(config.modulus_floor) + config.modulus_noise * z
}

/// Print one virtual sample: a roughness measurement followed by a stiffness
/// reading on that measurement, in that draw order.
pub fn virtual_print<R: Rng>(
    params: &PrintParameters,
    config: &SimulatorConfig,
    rng: &mut R,
) -> Measurement {
    let roughness = measure_roughness(params, config, rng);
    let modulus = surrogate_modulus(roughness, config, rng);
    Measurement {
        roughness,
        modulus: Some(modulus),
    }
}

/// Mean stiffness split at the roughness limit. Observations without a
/// modulus reading are skipped; an empty group reports `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalSummary {
    pub mean_modulus_feasible: Option<f64>,
    pub mean_modulus_infeasible: Option<f64>,
}

pub fn summarize_mechanical(trace: &[Observation], roughness_limit: f64) -> MechanicalSummary {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for o in trace {
        let Some(e) = o.modulus else { continue };
        let group = usize::from(o.roughness > roughness_limit);
        sums[group] += e;
        counts[group] += 1;
    }
    let mean = |g: usize| (counts[g] > 0).then(|| sums[g] / counts[g] as f64);
    MechanicalSummary {
        mean_modulus_feasible: mean(0),
        mean_modulus_infeasible: mean(1),
    }
}
