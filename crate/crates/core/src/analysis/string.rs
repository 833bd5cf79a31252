use super::{check_scalars, hopf_point, valid, AnalysisError};
use crate::model::{equilibrium_coefficients, PlatoonConfig};
use serde::{Deserialize, Serialize};

/// Value of `|H_i(j omega)|^2`, or a resonance when the denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum StringGain {
    Finite(f64),
    Resonance,
}

/// `beta_prev^2 / (omega^2 (1 + gamma^2 + 2 gamma cos(omega tau))
///  - 2 beta omega sin(omega tau) + beta^2)`.
pub fn string_gain_squared(beta_prev: f64, beta: f64, gamma: f64, tau: f64, omega: f64) -> StringGain {
    let (s, c) = (omega * tau).sin_cos();
    let den = omega * omega * (1.0 + gamma * gamma + 2.0 * gamma * c) - 2.0 * beta * omega * s + beta * beta;
    if den > 0.0 {
        StringGain::Finite(beta_prev * beta_prev / den)
    } else {
        StringGain::Resonance
    }
}

/// Frequency window and sampling for the numeric supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub points: usize,
    /// The window is `[0, multiplier * max(omega0, beta / tau)]`.
    pub window_multiplier: f64,
    /// Log-spaced offsets per side around each local maximum.
    pub refine_points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            points: 2000,
            window_multiplier: 4.0,
            refine_points: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupGain {
    Finite { gain: f64, omega: f64 },
    Resonance { omega: f64 },
}

impl SupGain {
    pub fn within(&self, bound: f64) -> bool {
        matches!(*self, SupGain::Finite { gain, .. } if gain <= bound)
    }
}

/// Supremum of `|H|^2` over a linear frequency grid, refined with
/// log-spaced samples on both sides of every local maximum.
pub fn numeric_sup_gain(
    beta_prev: f64,
    beta: f64,
    gamma: f64,
    tau: f64,
    grid: &FrequencyGrid,
) -> Result<SupGain, AnalysisError> {
    check_scalars(beta, gamma)?;
    if !(tau > 0.0 && beta_prev >= 0.0 && grid.points >= 3) {
        return Err(AnalysisError::Domain(format!(
            "string gain needs tau > 0, beta_prev ≥ 0 and at least 3 grid points (tau = {tau}, beta_prev = {beta_prev})"
        )));
    }
    let omega0 = hopf_point(beta, gamma)?.omega0;
    let top = grid.window_multiplier * omega0.max(beta / tau);
    let dw = top / (grid.points - 1) as f64;
    let mut gains = Vec::with_capacity(grid.points);
    for k in 0..grid.points {
        let omega = k as f64 * dw;
        match string_gain_squared(beta_prev, beta, gamma, tau, omega) {
            StringGain::Finite(g) => gains.push(g),
            StringGain::Resonance => return Ok(SupGain::Resonance { omega }),
        }
    }
    let mut best = (gains[0], 0.0);
    for k in 0..grid.points {
        let left = if k == 0 { f64::NEG_INFINITY } else { gains[k - 1] };
        let right = gains.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if gains[k] < left || gains[k] < right {
            continue;
        }
        let centre = k as f64 * dw;
        if gains[k] > best.0 {
            best = (gains[k], centre);
        }
        for j in 0..grid.refine_points {
            let offset = dw * 10f64.powf(-8.0 * j as f64 / grid.refine_points as f64);
            for omega in [centre - offset, centre + offset] {
                if omega < 0.0 {
                    continue;
                }
                match string_gain_squared(beta_prev, beta, gamma, tau, omega) {
                    StringGain::Finite(g) if g > best.0 => best = (g, omega),
                    StringGain::Finite(_) => {}
                    StringGain::Resonance => return Ok(SupGain::Resonance { omega }),
                }
            }
        }
    }
    Ok(SupGain::Finite {
        gain: best.0,
        omega: best.1,
    })
}

/// String-stability verdicts for one follower and the vehicle ahead of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    /// 1-based follower index.
    pub vehicle: usize,
    /// `beta*` of the vehicle ahead; zero for the first follower.
    pub beta_prev: f64,
    pub beta: f64,
    pub necessary_ok: bool,
    pub sufficient_ok: bool,
    pub numeric_sup_gain: SupGain,
    pub numeric_ok: bool,
    /// The closed-form conditions and the numeric sweep disagree.
    pub disagreement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringStabilityReport {
    pub pairs: Vec<PairReport>,
    pub necessary_ok: bool,
    pub sufficient_ok: bool,
    pub numeric_ok: bool,
    pub messages: Vec<String>,
}

/// Slack on the unit gain bound used by the numeric verdict.
const GAIN_SLACK: f64 = 1e-9;

pub fn string_stability_report(config: &PlatoonConfig, grid: &FrequencyGrid) -> Result<StringStabilityReport, AnalysisError> {
    valid(config)?;
    let eq = equilibrium_coefficients(config)?;
    let mut pairs = Vec::with_capacity(config.n());
    let mut messages = Vec::new();
    for (idx, p) in config.vehicles.iter().enumerate() {
        let vehicle = idx + 1;
        let beta = eq.beta_star[idx];
        let beta_prev = if idx == 0 { 0.0 } else { eq.beta_star[idx - 1] };
        let necessary_ok = beta_prev <= beta;
        let sufficient_ok = necessary_ok && beta * p.tau <= (1.0 - p.gamma).powi(2) / 2.0;
        let sup = numeric_sup_gain(beta_prev, beta, p.gamma, p.tau, grid).map_err(|e| e.at(vehicle))?;
        let numeric_ok = sup.within(1.0 + GAIN_SLACK);
        let disagreement = (sufficient_ok && !numeric_ok) || (!necessary_ok && numeric_ok);
        if !necessary_ok {
            messages.push(format!(
                "vehicle {vehicle}: beta* of the vehicle ahead ({beta_prev}) exceeds its own ({beta}); the platoon cannot be string stable"
            ));
        }
        if disagreement {
            messages.push(format!(
                "vehicle {vehicle}: closed-form conditions and the numeric frequency sweep disagree"
            ));
        }
        pairs.push(PairReport {
            vehicle,
            beta_prev,
            beta,
            necessary_ok,
            sufficient_ok,
            numeric_sup_gain: sup,
            numeric_ok,
            disagreement,
        });
    }
    Ok(StringStabilityReport {
        necessary_ok: pairs.iter().all(|p| p.necessary_ok),
        sufficient_ok: pairs.iter().all(|p| p.sufficient_ok),
        numeric_ok: pairs.iter().all(|p| p.numeric_ok),
        pairs,
        messages,
    })
}
