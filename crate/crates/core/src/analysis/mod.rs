//! Linear stability of the equilibrium: Hopf point and critical delay,
//! transversality, characteristic-root continuation, the stability chart,
//! non-oscillation, string stability and the robust-stability bound.
//!
//! Every follower linearises to the scalar neutral equation
//! `x' - gamma x'(t - tau) = -beta x(t - tau)`, whose characteristic function
//! is `lambda - gamma lambda e^{-lambda tau} + beta e^{-lambda tau}`.

mod roots;
mod string;

pub use roots::{
    characteristic, hopf_seed, imaginary_axis_crossing, root_near, root_slope, track_root, CharacteristicRoot,
    RootBranch,
};
pub use string::{
    numeric_sup_gain, string_gain_squared, string_stability_report, FrequencyGrid, PairReport, StringGain,
    StringStabilityReport, SupGain,
};

use crate::model::{equilibrium_coefficients, validate_config, ModelError, PlatoonConfig, ValidationReport};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("gamma = {gamma} violates the neutral condition γ < 1")]
    NeutralCondition { gamma: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("root continuation failed after tau = {last_tau}: {detail}")]
    Continuation { last_tau: f64, detail: String },
    #[error("invalid configuration: {0}")]
    Config(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("vehicle {vehicle}: {source}")]
    Vehicle {
        vehicle: usize,
        #[source]
        source: Box<AnalysisError>,
    },
}

impl AnalysisError {
    /// Attaches the 1-based index of the vehicle that failed.
    pub fn at(self, vehicle: usize) -> Self {
        AnalysisError::Vehicle {
            vehicle,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_scalars(beta_star: f64, gamma: f64) -> Result<(), AnalysisError> {
    if !(beta_star > 0.0 && beta_star.is_finite()) {
        return Err(AnalysisError::Domain(format!("beta* = {beta_star} must be positive and finite")));
    }
    if !(gamma >= 0.0) {
        return Err(AnalysisError::Domain(format!("gamma = {gamma} must be non-negative")));
    }
    if gamma >= 1.0 {
        return Err(AnalysisError::NeutralCondition { gamma });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    /// Angular frequency at the crossing (rad/s).
    pub omega0: f64,
    /// Critical delay (s).
    pub tau_cr: f64,
    /// Cycle frequency `omega0 / 2 pi` (Hz).
    pub f0: f64,
}

/// `gamma`-dependent factor `beta* tau_cr`; equals `pi/2` at `gamma = 0`.
pub fn normalized_critical_delay(gamma: f64) -> f64 {
    if gamma == 0.0 {
        FRAC_PI_2
    } else {
        let s = (1.0 - gamma * gamma).sqrt();
        s * (s / gamma).atan()
    }
}

/// Frequency and delay at which the characteristic roots of one follower
/// reach the imaginary axis.
pub fn hopf_point(beta_star: f64, gamma: f64) -> Result<HopfPoint, AnalysisError> {
    check_scalars(beta_star, gamma)?;
    let omega0 = beta_star / (1.0 - gamma * gamma).sqrt();
    let tau_cr = if gamma == 0.0 {
        PI / (2.0 * beta_star)
    } else {
        normalized_critical_delay(gamma) / beta_star
    };
    Ok(HopfPoint {
        omega0,
        tau_cr,
        f0: omega0 / (2.0 * PI),
    })
}

/// `d Re(lambda) / d tau` at the crossing, `omega0^2 (1 - gamma^2) / theta`.
pub fn transversality_slope(beta_star: f64, gamma: f64) -> Result<f64, AnalysisError> {
    let HopfPoint { omega0, tau_cr, .. } = hopf_point(beta_star, gamma)?;
    let x = omega0 * tau_cr;
    let theta = (1.0 - gamma * x.cos()).powi(2) + (x + gamma * x.sin()).powi(2);
    Ok(omega0 * omega0 * (1.0 - gamma * gamma) / theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyComparison {
    /// Onset frequency with feedback (Hz).
    pub f0: f64,
    /// Onset frequency of the classical model at the same `beta*` (Hz).
    pub f0_ccfm: f64,
}

pub fn frequency_comparison(beta_star: f64, gamma: f64) -> Result<FrequencyComparison, AnalysisError> {
    let hp = hopf_point(beta_star, gamma)?;
    Ok(FrequencyComparison {
        f0: hp.f0,
        f0_ccfm: beta_star / (2.0 * PI),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    /// Delay equal to the critical delay (to round-off); counted as unstable.
    HopfBoundary,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        self == Stability::Stable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalVerdict {
    /// 1-based follower index.
    pub vehicle: usize,
    pub beta_star: f64,
    pub hopf: HopfPoint,
    /// `tau_cr - tau` (s).
    pub margin: f64,
    pub verdict: Stability,
}

/// Relative width of the band around `tau_cr` classified as the boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

pub fn classify_delay(tau: f64, tau_cr: f64) -> Stability {
    let margin = tau_cr - tau;
    if margin.abs() <= BOUNDARY_TOLERANCE * tau_cr {
        Stability::HopfBoundary
    } else if margin > 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

fn valid(config: &PlatoonConfig) -> Result<(), AnalysisError> {
    let report = validate_config(config);
    if report.is_valid() {
        Ok(())
    } else {
        Err(AnalysisError::Config(report))
    }
}

/// Per-follower local stability of the equilibrium.
pub fn is_locally_stable(config: &PlatoonConfig) -> Result<Vec<LocalVerdict>, AnalysisError> {
    valid(config)?;
    let eq = equilibrium_coefficients(config)?;
    config
        .vehicles
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            let beta_star = eq.beta_star[idx];
            let hopf = hopf_point(beta_star, p.gamma).map_err(|e| e.at(idx + 1))?;
            Ok(LocalVerdict {
                vehicle: idx + 1,
                beta_star,
                hopf,
                margin: hopf.tau_cr - p.tau,
                verdict: classify_delay(p.tau, hopf.tau_cr),
            })
        })
        .collect()
}

/// Distance kept from the singular endpoints `gamma = 0` and `gamma = 1`.
pub const CHART_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub gamma: f64,
    pub tau_cr: f64,
    /// `beta* tau_cr`, to be compared against `pi/2`.
    pub normalized: f64,
}

/// `n` evenly spaced values on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Critical delay over a grid of feedback gains, clipped to
/// `[CHART_EPSILON, 1 - CHART_EPSILON]`.
pub fn stability_chart(gamma_grid: &[f64], beta_star: f64) -> Result<Vec<ChartPoint>, AnalysisError> {
    gamma_grid
        .iter()
        .map(|&g| {
            let gamma = g.clamp(CHART_EPSILON, 1.0 - CHART_EPSILON);
            let hp = hopf_point(beta_star, gamma)?;
            Ok(ChartPoint {
                gamma,
                tau_cr: hp.tau_cr,
                normalized: beta_star * hp.tau_cr,
            })
        })
        .collect()
}

/// Estimate of `beta* tau_cr` as `gamma -> 0+`, by linear extrapolation
/// through the first two chart points.
pub fn chart_limit_at_zero(points: &[ChartPoint]) -> Option<f64> {
    let [p, q, ..] = points else { return None };
    let slope = (q.normalized - p.normalized) / (q.gamma - p.gamma);
    Some(p.normalized - slope * p.gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oscillation {
    /// Solutions settle without changing sign.
    NonOscillatory,
    /// Some solutions oscillate.
    Oscillatory,
    /// Feedback present: every solution oscillates.
    AllSolutionsOscillate,
}

pub fn non_oscillation_check(beta_star: f64, tau: f64, gamma: f64) -> Oscillation {
    if gamma > 0.0 {
        Oscillation::AllSolutionsOscillate
    } else if beta_star * tau <= (-1.0f64).exp() {
        Oscillation::NonOscillatory
    } else {
        Oscillation::Oscillatory
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertainBeta {
    pub lower: f64,
    pub upper: f64,
}

impl UncertainBeta {
    pub fn new(lower: f64, upper: f64) -> Result<Self, AnalysisError> {
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(AnalysisError::Domain(format!("uncertainty interval [{lower}, {upper}] must satisfy 0 < lower ≤ upper")));
        }
        Ok(Self { lower, upper })
    }

    pub fn exact(beta: f64) -> Self {
        Self { lower: beta, upper: beta }
    }
}

/// Largest delay allowed by the necessary condition for robust stability,
/// `pi sqrt(1 - gamma^2) / (2 upper)`. Not sufficient.
pub fn robust_stability_bound(gamma: f64, uncertain: UncertainBeta) -> Result<f64, AnalysisError> {
    check_scalars(uncertain.upper, gamma)?;
    if !(uncertain.lower > 0.0 && uncertain.lower <= uncertain.upper) {
        return Err(AnalysisError::Domain(format!(
            "uncertainty interval [{}, {}] must satisfy 0 < lower ≤ upper",
            uncertain.lower, uncertain.upper
        )));
    }
    Ok(PI * (1.0 - gamma * gamma).sqrt() / (2.0 * uncertain.upper))
}
