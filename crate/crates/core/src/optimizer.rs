//! Constraint-aware search for the fastest acceptable print settings.
//!
//! The optimizer keeps every completed print-and-measure cycle, fits the
//! roughness model on demand, and proposes the next setting by scoring a
//! dense parameter grid under one of two branches. When the model is
//! confident that faster feasible settings exist it jumps to the fastest
//! candidate whose feasibility probability clears the confidence threshold;
//! otherwise it hunts for feasibility just above the incumbent speed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rayon::prelude::*;

use crate::gp::{self, GpModel, Hyperparameters};
use crate::params::{ParameterBounds, ParamsError, PrintParameters};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("no observations recorded; run or load an initialization sweep first")]
    NeedsInitialization,
    #[error("invalid {field}: {message}")]
    InvalidState {
        field: &'static str,
        message: String,
    },
    #[error("parameters outside the search bounds: speed {speed} mm/s, extrusion {extrusion}")]
    OutOfBounds { speed: f64, extrusion: f64 },
    #[error("roughness must be positive and finite, got {0}")]
    InvalidRoughness(f64),
    #[error("schedule must contain at least one phase")]
    EmptySchedule,
    #[error("no observations match the requested phase")]
    EmptyPhase,
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Model(#[from] gp::GpError),
    #[error(transparent)]
    Bounds(#[from] ParamsError),
}

/// One completed print-and-measure cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub params: PrintParameters,
    /// Measured global roughness in µm.
    pub roughness: f64,
    /// Whether the measurement met the roughness limit. Recomputed from the
    /// limit whenever state is loaded, never trusted from input.
    pub feasible: bool,
    /// Elastic modulus reading in GPa, when one was taken.
    pub modulus: Option<f64>,
    /// 1-based position in the observation history.
    pub iteration: u32,
    /// Confidence threshold that was active when this sample was taken.
    pub phase_confidence: f64,
}

/// Roughness measurement returned by an evaluator, with an optional
/// stiffness reading taken alongside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub roughness: f64,
    pub modulus: Option<f64>,
}

/// One phase of a closed-loop schedule: a number of cycles to run at a fixed
/// confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpec {
    pub iterations: u32,
    pub confidence_threshold: f64,
}

/// Which acquisition branch produced a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquisitionBranch {
    /// Enough confidence in faster feasible settings: take the fastest
    /// candidate that still clears the threshold.
    Aggressive,
    /// Confidence short of the threshold: maximize the chance of a feasible
    /// result at least one speed increment above the incumbent.
    Cautious,
}

/// A proposed next setting together with the evidence behind the branch
/// choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub params: PrintParameters,
    pub branch: AcquisitionBranch,
    /// Highest feasibility probability among candidates strictly faster than
    /// the incumbent, over the whole grid when nothing is feasible yet, and
    /// negative infinity when no candidate is faster.
    pub confidence: f64,
}

pub const DEFAULT_GRID_RESOLUTION: usize = 101;
/// Default speed increment as a fraction of the speed range.
pub const DEFAULT_SPEED_INCREMENT_FRACTION: f64 = 0.02;

/// Full optimization session state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    observations: Vec<Observation>,
    bounds: ParameterBounds,
    roughness_limit: f64,
    confidence_threshold: f64,
    grid_resolution: usize,
    speed_increment: f64,
    seed: u64,
    hyper_cache: Option<Hyperparameters>,
}

impl OptimizerState {
    pub fn new(
        bounds: ParameterBounds,
        roughness_limit: f64,
        confidence_threshold: f64,
        grid_resolution: usize,
        speed_increment: f64,
        seed: u64,
    ) -> Result<Self, OptimizeError> {
        bounds.validate()?;
        if !roughness_limit.is_finite() || roughness_limit <= 0.0 {
            return Err(OptimizeError::InvalidState {
                field: "lambda_um",
                message: format!("must be positive and finite, got {roughness_limit}"),
            });
        }
        check_confidence(confidence_threshold)?;
        if grid_resolution < 2 {
            return Err(OptimizeError::InvalidState {
                field: "grid_resolution",
                message: format!("must be at least 2, got {grid_resolution}"),
            });
        }
        if !speed_increment.is_finite() || speed_increment <= 0.0 {
            return Err(OptimizeError::InvalidState {
                field: "epsilon_speed",
                message: format!("must be positive and finite, got {speed_increment}"),
            });
        }
        Ok(Self {
            observations: Vec::new(),
            bounds,
            roughness_limit,
            confidence_threshold,
            grid_resolution,
            speed_increment,
            seed,
        hyper_cache: None,
        })
    }

    /// Standard session: 101 grid points per axis and a speed increment of
    /// 2% of the speed range (9.8 mm/s on the default bounds).
    pub fn with_defaults(
        bounds: ParameterBounds,
        roughness_limit: f64,
        confidence_threshold: f64,
        seed: u64,
    ) -> Result<Self, OptimizeError> {
        let increment = DEFAULT_SPEED_INCREMENT_FRACTION * (bounds.speed_max - bounds.speed_min);
        Self::new(
            bounds,
            roughness_limit,
            confidence_threshold,
            DEFAULT_GRID_RESOLUTION,
            increment,
            seed,
        )
    }

    pub fn bounds(&self) -> &ParameterBounds {
        &self.bounds
    }

    pub fn roughness_limit(&self) -> f64 {
        self.roughness_limit
    }

    pub fn confidence_threshold(&self) -> f64 {
        self.confidence_threshold
    }

    pub fn set_confidence_threshold(&mut self, value: f64) -> Result<(), OptimizeError> {
        check_confidence(value)?;
        self.confidence_threshold = value;
        Ok(())
    }

    pub fn grid_resolution(&self) -> usize {
        self.grid_resolution
    }

    pub fn speed_increment(&self) -> f64 {
        self.speed_increment
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Hyperparameters currently in use for the constraint model, refreshed
    /// after every recorded observation.
    pub fn hyper_cache(&self) -> Option<&Hyperparameters> {
        self.hyper_cache.as_ref()
    }

    fn grid_len(&self) -> usize {
        self.grid_resolution * self.grid_resolution
    }

    /// Candidate at flat `index`, speed-major: index = i * resolution + j
    /// with i the speed step and j the extrusion step.
    fn grid_point(&self, index: usize) -> PrintParameters {
        let res = self.grid_resolution;
        let i = index / res;
        let j = index % res;
        let den = (res - 1) as f64;
        PrintParameters {
            speed: self.bounds.speed_min
                + (self.bounds.speed_max - self.bounds.speed_min) * i as f64 / den,
            extrusion: self.bounds.extrusion_min
                + (self.bounds.extrusion_max - self.bounds.extrusion_min) * j as f64 / den,
        }
    }

    /// Fit the roughness model on everything recorded so far, using the
    /// cached hyperparameters (the defaults before any selection ran).
    pub fn fit_constraint_model(&self) -> Result<GpModel, OptimizeError> {
        if self.observations.is_empty() {
            return Err(OptimizeError::NeedsInitialization);
        }
        let data: Vec<(PrintParameters, f64)> = self
            .observations
            .iter()
            .map(|o| (o.params, o.roughness))
            .collect();
        let hyper = self.hyper_cache.unwrap_or_default();
        Ok(gp::fit(&data, &hyper, &self.bounds)?)
    }

    /// Fastest feasible observation; equal speeds resolve to the lower
    /// roughness, then to the earlier record.
    pub fn best_feasible(&self) -> Option<&Observation> {
        let mut best: Option<&Observation> = None;
        for o in self.observations.iter().filter(|o| o.feasible) {
            best = match best {
                None => Some(o),
                Some(b)
                    if o.params.speed > b.params.speed
                        || (o.params.speed == b.params.speed && o.roughness < b.roughness) =>
                {
                    Some(o)
                }
                Some(b) => Some(b),
            };
        }
        best
    }

    /// Fraction of observations meeting the roughness limit, optionally
    /// restricted to the cycles taken at one confidence threshold.
    pub fn feasible_fraction(&self, phase: Option<f64>) -> Result<f64, OptimizeError> {
        let mut total = 0usize;
        let mut feasible = 0usize;
        for o in &self.observations {
            if let Some(p) = phase {
                if o.phase_confidence != p {
                    continue;
                }
            }
            total += 1;
            if o.feasible {
                feasible += 1;
            }
        }
        if total == 0 {
            return Err(OptimizeError::EmptyPhase);
        }
        Ok(feasible as f64 / total as f64)
    }

    /// Record one measured cycle. Feasibility is derived from the roughness
    /// limit and the hyperparameters are reselected on the grown history.
    pub fn update(
        &mut self,
        params: PrintParameters,
        roughness: f64,
        modulus: Option<f64>,
    ) -> Result<&Observation, OptimizeError> {
        if !self.bounds.contains(&params) {
            return Err(OptimizeError::OutOfBounds {
                speed: params.speed,
                extrusion: params.extrusion,
            });
        }
        if !roughness.is_finite() || roughness <= 0.0 {
            return Err(OptimizeError::InvalidRoughness(roughness));
        }
        let obs = Observation {
            params,
            roughness,
            feasible: roughness <= self.roughness_limit,
            modulus,
            iteration: self.observations.len() as u32 + 1,
            phase_confidence: self.confidence_threshold,
        };
        self.observations.push(obs);
        let data: Vec<(PrintParameters, f64)> = self
            .observations
            .iter()
            .map(|o| (o.params, o.roughness))
            .collect();
        self.hyper_cache = Some(gp::select_hyperparameters(
            &data,
            &self.bounds,
            self.hyper_cache,
        ));
        Ok(self.observations.last().unwrap())
    }

    /// Next setting to print. Pure with respect to the state: repeated calls
    /// without an intervening update return the same proposal.
    pub fn suggest(&self) -> Result<PrintParameters, OptimizeError> {
        Ok(self.propose()?.params)
    }

    /// Full acquisition decision behind [`suggest`](Self::suggest).
    pub fn propose(&self) -> Result<Proposal, OptimizeError> {
        let model = self.fit_constraint_model()?;
        let limit = self.roughness_limit;
        let m = self.grid_len();
        // Feasibility probability and posterior log-space std per candidate,
        // in grid index order.
        let scores: Vec<(f64, f64)> = (0..m)
            .into_par_iter()
            .map(|idx| {
                let p = self.grid_point(idx);
                let (mean, std) = model.predict(&p);
                (gp::feasibility_probability(mean, std, limit), std)
            })
            .collect();

        let best_speed = self.best_feasible().map(|o| o.params.speed);
        let mut confidence = f64::NEG_INFINITY;
        for (idx, &(pf, _)) in scores.iter().enumerate() {
            let faster = match best_speed {
                Some(v) => self.grid_point(idx).speed > v,
                None => true,
            };
            if faster && pf > confidence {
                confidence = pf;
            }
        }

        if confidence >= self.confidence_threshold {
            // Fastest candidate clearing the threshold; ties prefer the
            // higher feasibility probability, then the lower grid index.
            let mut best: Option<(usize, f64, f64)> = None;
            for (idx, &(pf, _)) in scores.iter().enumerate() {
                if pf < self.confidence_threshold {
                    continue;
                }
                let speed = self.grid_point(idx).speed;
                let better = match best {
                    None => true,
                    Some((_, bs, bp)) => speed > bs || (speed == bs && pf > bp),
                };
                if better {
                    best = Some((idx, speed, pf));
                }
            }
            let (idx, _, _) = best.expect("confidence implies a qualifying candidate");
            Ok(Proposal {
                params: self.grid_point(idx),
                branch: AcquisitionBranch::Aggressive,
                confidence,
            })
        } else {
            // Most likely feasible candidate at least one increment above the
            // incumbent; with no candidate there, over the whole grid. Ties
            // prefer the larger posterior spread, then the lower grid index.
            let floor = best_speed.map(|v| v + self.speed_increment);
            let pick = |restricted: bool| -> Option<usize> {
                let mut best: Option<(usize, f64, f64)> = None;
                for (idx, &(pf, std)) in scores.iter().enumerate() {
                    if restricted {
                        if let Some(f) = floor {
                            if self.grid_point(idx).speed < f {
                                continue;
                            }
                        }
                    }
                    let better = match best {
                        None => true,
                        Some((_, bp, bstd)) => pf > bp || (pf == bp && std > bstd),
                    };
                    if better {
                        best = Some((idx, pf, std));
                    }
                }
                best.map(|(idx, _, _)| idx)
            };
            let idx = pick(true).or_else(|| pick(false)).expect("grid is non-empty");
            Ok(Proposal {
                params: self.grid_point(idx),
                branch: AcquisitionBranch::Cautious,
                confidence,
            })
        }
    }

    /// Run `schedule` phases of suggest, evaluate, record. Returns the
    /// observations added, in order. The confidence threshold is left at the
    /// last phase's value.
    pub fn run_closed_loop<F>(
        &mut self,
        mut evaluate: F,
        schedule: &[PhaseSpec],
    ) -> Result<Vec<Observation>, OptimizeError>
    where
        F: FnMut(&PrintParameters) -> Result<Measurement, OptimizeError>,
    {
        if schedule.is_empty() {
            return Err(OptimizeError::EmptySchedule);
        }
        let mut added = Vec::new();
        for phase in schedule {
            self.set_confidence_threshold(phase.confidence_threshold)?;
            for _ in 0..phase.iterations {
                let params = self.suggest()?;
                let m = evaluate(&params)?;
                let obs = self.update(params, m.roughness, m.modulus)?;
                added.push(obs.clone());
            }
        }
        Ok(added)
    }
}

fn check_confidence(value: f64) -> Result<(), OptimizeError> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(OptimizeError::InvalidState {
            field: "pi",
            message: format!("must lie in [0, 1], got {value}"),
        });
    }
    Ok(())
}

/// Serialized form of an optimization session, stable across versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDoc {
    pub bounds: ParameterBounds,
    pub lambda_um: f64,
    pub pi: f64,
    pub grid_resolution: usize,
    pub epsilon_speed: f64,
    pub seed: u64,
    pub observations: Vec<ObservationDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper: Option<HyperDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationDoc {
    pub vp: f64,
    pub em: f64,
    pub roughness_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus_gpa: Option<f64>,
    pub iteration: u32,
    pub phase_pi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperDoc {
    pub l_vp: f64,
    pub l_em: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl StateDoc {
    pub fn from_state(state: &OptimizerState) -> Self {
        Self {
            bounds: state.bounds,
            lambda_um: state.roughness_limit,
            pi: state.confidence_threshold,
            grid_resolution: state.grid_resolution,
            epsilon_speed: state.speed_increment,
            seed: state.seed,
            observations: state
                .observations
                .iter()
                .map(|o| ObservationDoc {
                    vp: o.params.speed,
                    em: o.params.extrusion,
                    roughness_um: o.roughness,
                    modulus_gpa: o.modulus,
                    iteration: o.iteration,
                    phase_pi: o.phase_confidence,
                })
                .collect(),
            hyper: state.hyper_cache.map(|h| HyperDoc {
                l_vp: h.length_scales()[0],
                l_em: h.length_scales()[1],
                signal_var: h.signal_variance(),
                noise_var: h.noise_variance(),
            }),
        }
    }

    pub fn into_state(self) -> Result<OptimizerState, OptimizeError> {
        let mut state = OptimizerState::new(
            self.bounds,
            self.lambda_um,
            self.pi,
            self.grid_resolution,
            self.epsilon_speed,
            self.seed,
        )?;
        for (k, o) in self.observations.iter().enumerate() {
            let params = PrintParameters::new(o.vp, o.em);
            if !state.bounds.contains(&params) {
                return Err(OptimizeError::InvalidState {
                    field: "observations",
                    message: format!(
                        "entry {k}: vp {} / em {} outside the bounds",
                        o.vp, o.em
                    ),
                });
            }
            if !o.roughness_um.is_finite() || o.roughness_um <= 0.0 {
                return Err(OptimizeError::InvalidState {
                    field: "observations",
                    message: format!("entry {k}: roughness_um {} not positive", o.roughness_um),
                });
            }
            if !o.phase_pi.is_finite() || !(0.0..=1.0).contains(&o.phase_pi) {
                return Err(OptimizeError::InvalidState {
                    field: "observations",
                    message: format!("entry {k}: phase_pi {} outside [0, 1]", o.phase_pi),
                });
            }
            state.observations.push(Observation {
                params,
                roughness: o.roughness_um,
                feasible: o.roughness_um <= state.roughness_limit,
                modulus: o.modulus_gpa,
                iteration: o.iteration,
                phase_confidence: o.phase_pi,
            });
        }
        state.hyper_cache = match self.hyper {
            Some(h) => Some(
                Hyperparameters::new([h.l_vp, h.l_em], h.signal_var, h.noise_var).map_err(
                    |e| OptimizeError::InvalidState {
                        field: "hyper",
                        message: e.to_string(),
                    },
                )?,
            ),
            None => None,
        };
        Ok(state)
    }
}
