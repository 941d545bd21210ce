//! Gaussian process regression of log roughness over normalized print
//! parameters.
//!
//! Roughness is strictly positive with noise that grows with the signal, so
//! the model works on the natural log of measured Ra. Inputs are min-max
//! normalized to the unit square and targets standardized before fitting;
//! predictions are mapped back to log-space units.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::params::{ParameterBounds, ParamsError, PrintParameters};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("no observations to fit")]
    NoObservations,
    #[error("roughness must be positive and finite, got {0}")]
    NonPositiveRoughness(f64),
    #[error("observation outside the search bounds: speed {speed}, extrusion {extrusion}")]
    OutOfBounds { speed: f64, extrusion: f64 },
    #[error("{name} must be strictly positive and finite, got {value}")]
    InvalidHyperparameter { name: &'static str, value: f64 },
    #[error("covariance factorization failed at every jitter level")]
    Factorization,
    #[error(transparent)]
    Bounds(#[from] ParamsError),
}

/// Kernel and noise settings.
///
/// Any strictly positive finite values are accepted here; the narrower
/// `SEARCH_*` boxes only constrain [`select_hyperparameters`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    length_scales: [f64; 2],
    signal_variance: f64,
    noise_variance: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            length_scales: [0.3, 0.3],
            signal_variance: 1.0,
            noise_variance: 0.01,
        }
    }
}

impl Hyperparameters {
    /// Search range for each length scale, in normalized input units.
    pub const SEARCH_LENGTH_SCALE: (f64, f64) = (0.05, 2.0);
    /// Search range for the signal variance.
    pub const SEARCH_SIGNAL_VARIANCE: (f64, f64) = (0.1, 10.0);
    /// Search range for the noise variance.
    pub const SEARCH_NOISE_VARIANCE: (f64, f64) = (1e-4, 1.0);

    pub fn new(
        length_scales: [f64; 2],
        signal_variance: f64,
        noise_variance: f64,
    ) -> Result<Self, GpError> {
        let checks = [
            ("length scale (speed)", length_scales[0]),
            ("length scale (extrusion)", length_scales[1]),
            ("signal variance", signal_variance),
            ("noise variance", noise_variance),
        ];
        for (name, value) in checks {
            if !value.is_finite() || value <= 0.0 {
                return Err(GpError::InvalidHyperparameter { name, value });
            }
        }
        Ok(Self {
            length_scales,
            signal_variance,
            noise_variance,
        })
    }

    pub fn length_scales(&self) -> [f64; 2] {
        self.length_scales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }
}

/// Squared exponential covariance with one length scale per input dimension,
/// evaluated on normalized inputs.
pub fn kernel(a: [f64; 2], b: [f64; 2], hyper: &Hyperparameters) -> f64 {
    let ls = hyper.length_scales;
    let mut q = 0.0;
    for d in 0..2 {
        let r = (a[d] - b[d]) / ls[d];
        q += r * r;
    }
    hyper.signal_variance * (-0.5 * q).exp()
}

/// Fitted posterior over log roughness.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<[f64; 2]>,
    targets: Vec<f64>,
    hyper: Hyperparameters,
    bounds: ParameterBounds,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    target_mean: f64,
    target_std: f64,
}

/// Progressively larger diagonal boosts tried when the factorization of a
/// near-singular covariance fails.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Fit the model to (parameters, measured roughness in µm) pairs.
///
/// Targets are log transformed, then centered and scaled by their population
/// standard deviation; with fewer than two observations or zero spread the
/// scale stays 1.
pub fn fit(
    observations: &[(PrintParameters, f64)],
    hyper: &Hyperparameters,
    bounds: &ParameterBounds,
) -> Result<GpModel, GpError> {
    bounds.validate()?;
    if observations.is_empty() {
        return Err(GpError::NoObservations);
    }
    for (p, r) in observations {
        if !r.is_finite() || *r <= 0.0 {
            return Err(GpError::NonPositiveRoughness(*r));
        }
        if !bounds.contains(p) {
            return Err(GpError::OutOfBounds {
                speed: p.speed,
                extrusion: p.extrusion,
            });
        }
    }
    let n = observations.len();
    let inputs: Vec<[f64; 2]> = observations.iter().map(|(p, _)| bounds.normalize(p)).collect();
    let logs: Vec<f64> = observations.iter().map(|(_, r)| r.ln()).collect();
    let target_mean = logs.iter().sum::<f64>() / n as f64;
    let spread = (logs.iter().map(|y| (y - target_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let target_std = if n < 2 || spread == 0.0 { 1.0 } else { spread };
    let targets: Vec<f64> = logs.iter().map(|y| (y - target_mean) / target_std).collect();

    let base = DMatrix::from_fn(n, n, |i, j| {
        let mut v = kernel(inputs[i], inputs[j], hyper);
        if i == j {
            v += hyper.noise_variance;
        }
        v
    });
    let y = DVector::from_column_slice(&targets);
    for jitter in JITTER_LADDER {
        let mut gram = base.clone();
        if jitter > 0.0 {
            for i in 0..n {
                gram[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(gram) {
            let alpha = chol.solve(&y);
            return Ok(GpModel {
                inputs,
                targets,
                hyper: *hyper,
                bounds: *bounds,
                chol,
                alpha,
                target_mean,
                target_std,
            });
        }
    }
    Err(GpError::Factorization)
}

impl GpModel {
    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn bounds(&self) -> &ParameterBounds {
        &self.bounds
    }

    pub fn num_observations(&self) -> usize {
        self.targets.len()
    }

    /// Mean of the log targets removed during standardization.
    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    /// Scale of the log targets removed during standardization.
    pub fn target_std(&self) -> f64 {
        self.target_std
    }

    /// Posterior mean and standard deviation of log roughness at `x`.
    /// The variance is of the latent function, without observation noise.
    pub fn predict(&self, x: &PrintParameters) -> (f64, f64) {
        let q = self.bounds.normalize(x);
        let n = self.inputs.len();
        let k_star = DVector::from_fn(n, |i, _| kernel(self.inputs[i], q, &self.hyper));
        let mean_std = k_star.dot(&self.alpha);
        let explained = k_star.dot(&self.chol.solve(&k_star));
        let var_std = (self.hyper.signal_variance - explained).max(0.0);
        let mean = self.target_mean + self.target_std * mean_std;
        let std = self.target_std * var_std.sqrt();
        (mean, std)
    }
}

/// Log marginal likelihood of the standardized targets under the model.
pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    let n = model.targets.len() as f64;
    let quad: f64 = model
        .targets
        .iter()
        .zip(model.alpha.iter())
        .map(|(y, a)| y * a)
        .sum();
    let log_det_half: f64 = model.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    -0.5 * quad - log_det_half - 0.5 * n * ln_2pi
}

fn standard_normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Probability that a log-normal posterior with the given log-space moments
/// falls at or below `roughness_limit`. A zero standard deviation collapses
/// to a hard 0 or 1.
pub fn feasibility_probability(mean_log: f64, std_log: f64, roughness_limit: f64) -> f64 {
    assert!(
        roughness_limit > 0.0,
        "roughness limit must be positive, got {roughness_limit}"
    );
    let log_limit = roughness_limit.ln();
    if std_log == 0.0 {
        return if mean_log <= log_limit { 1.0 } else { 0.0 };
    }
    standard_normal_cdf((log_limit - mean_log) / std_log)
}

/// Posterior probability that roughness at `x` is within `roughness_limit`.
pub fn probability_of_feasibility(
    model: &GpModel,
    x: &PrintParameters,
    roughness_limit: f64,
) -> f64 {
    let (mean, std) = model.predict(x);
    feasibility_probability(mean, std, roughness_limit)
}

/// Search state for one hyperparameter candidate in log space:
/// [ln l_vp, ln l_em, ln signal_var, ln noise_var].
type LogPoint = [f64; 4];

fn log_box() -> [(f64, f64); 4] {
    let (l_lo, l_hi) = Hyperparameters::SEARCH_LENGTH_SCALE;
    let (s_lo, s_hi) = Hyperparameters::SEARCH_SIGNAL_VARIANCE;
    let (n_lo, n_hi) = Hyperparameters::SEARCH_NOISE_VARIANCE;
    [
        (l_lo.ln(), l_hi.ln()),
        (l_lo.ln(), l_hi.ln()),
        (s_lo.ln(), s_hi.ln()),
        (n_lo.ln(), n_hi.ln()),
    ]
}

fn to_hyper(p: LogPoint) -> Hyperparameters {
    Hyperparameters {
        length_scales: [p[0].exp(), p[1].exp()],
        signal_variance: p[2].exp(),
        noise_variance: p[3].exp(),
    }
}

/// Total number of marginal-likelihood evaluations one selection may spend.
const SELECT_BUDGET: usize = 200;
const SELECT_STARTS: usize = 8;
const SELECT_INITIAL_STEP: f64 = 0.7;
const SELECT_MIN_STEP: f64 = 0.04;
/// Evaluations held back from the descent for the final flat-ridge pass.
const SELECT_FLAT_RESERVE: usize = 24;
/// Likelihood slack under which two models count as equally good.
const SELECT_FLAT_TOL: f64 = 1e-9;

/// Deterministic start points: the defaults plus a low-discrepancy fill of
/// the log-space search box, from the additive recurrence with weights
/// 1/phi^d for the quartic plastic ratio phi (x^5 = x + 1).
fn start_points() -> [LogPoint; SELECT_STARTS] {
    const WEIGHTS: [f64; 4] = [
        0.8566748838545029,
        0.7338918566271259,
        0.6287067210378086,
        0.5385972572236101,
    ];
    let boxes = log_box();
    let mut starts = [[0.0; 4]; SELECT_STARTS];
    let defaults = Hyperparameters::default();
    starts[0] = [
        defaults.length_scales[0].ln(),
        defaults.length_scales[1].ln(),
        defaults.signal_variance.ln(),
        defaults.noise_variance.ln(),
    ];
    for (k, start) in starts.iter_mut().enumerate().skip(1) {
        for d in 0..4 {
            let u = (0.5 + k as f64 * WEIGHTS[d]).fract();
            let (lo, hi) = boxes[d];
            start[d] = lo + u * (hi - lo);
        }
    }
    starts
}

/// Pick hyperparameters by maximizing the log marginal likelihood with a
/// budgeted multi-start coordinate descent over the log-space search box.
///
/// Fully deterministic: fixed starts, fixed sweep order, no randomness.
/// With fewer than two observations there is nothing to select and the
/// defaults are returned; if every candidate fails to factorize the previous
/// hyperparameters (or the defaults) are kept.
///
/// Degenerate designs leave the likelihood exactly flat along a length
/// scale (every sample at one speed says nothing about the speed scale), so
/// the winning point gets a final pass that shortens each length scale while
/// the likelihood does not drop: among equally likely models the one that
/// extrapolates least is kept.
pub fn select_hyperparameters(
    observations: &[(PrintParameters, f64)],
    bounds: &ParameterBounds,
    previous: Option<Hyperparameters>,
) -> Hyperparameters {
    if observations.len() < 2 {
        return Hyperparameters::default();
    }
    let boxes = log_box();
    let clamp = |p: LogPoint| {
        let mut q = p;
        for d in 0..4 {
            q[d] = q[d].clamp(boxes[d].0, boxes[d].1);
        }
        q
    };
    let mut evals = 0usize;
    let evaluate = |p: LogPoint| -> f64 {
        match fit(observations, &to_hyper(p), bounds) {
            Ok(model) => {
                let lml = log_marginal_likelihood(&model);
                if lml.is_finite() {
                    lml
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let mut best: Option<(LogPoint, f64)> = None;
    let per_start = (SELECT_BUDGET - SELECT_FLAT_RESERVE) / SELECT_STARTS;
    for start in start_points() {
        if evals >= SELECT_BUDGET {
            break;
        }
        let budget_end = (evals + per_start).min(SELECT_BUDGET);
        let mut cur = clamp(start);
        evals += 1;
        let mut cur_score = evaluate(cur);
        let mut step = SELECT_INITIAL_STEP;
        while evals < budget_end && step >= SELECT_MIN_STEP {
            let mut improved = false;
            'dims: for d in 0..4 {
                for sign in [1.0, -1.0] {
                    if evals >= budget_end {
                        break 'dims;
                    }
                    let mut cand = cur;
                    cand[d] = (cur[d] + sign * step).clamp(boxes[d].0, boxes[d].1);
                    if cand[d] == cur[d] {
                        continue;
                    }
                    evals += 1;
                    let score = evaluate(cand);
                    if score > cur_score {
                        cur = cand;
                        cur_score = score;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        match best {
            Some((_, s)) if s >= cur_score => {}
            _ => {
                if cur_score > f64::NEG_INFINITY {
                    best = Some((cur, cur_score));
                }
            }
        }
    }
    let (mut point, reference) = match best {
        Some(b) => b,
        None => return previous.unwrap_or_default(),
    };
    for d in 0..2 {
        while evals < SELECT_BUDGET && point[d] > boxes[d].0 {
            let mut cand = point;
            cand[d] = (cand[d] - std::f64::consts::LN_2).max(boxes[d].0);
            evals += 1;
            if evaluate(cand) >= reference - SELECT_FLAT_TOL {
                point = cand;
            } else {
                break;
            }
        }
    }
    to_hyper(point)
}
