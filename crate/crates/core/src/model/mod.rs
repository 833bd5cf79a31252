//! Platoon domain types and the nonlinear right-hand sides of the classical
//! car-following model and its delayed-acceleration-feedback variant.
//!
//! State is kept in transformed coordinates: `y[i]` is the deviation of the
//! headway in front of follower `i + 1` from its desired separation `b`, and
//! `v[i]` is that follower's velocity relative to the vehicle ahead. Vehicle
//! numbering in messages and public index arguments is 1-based (the leader is
//! vehicle 0 and is never part of the state).

mod leader;
mod rhs;
mod validate;

pub use leader::{AccelSegment, LeaderProfile};
pub use rhs::{
    beta_coefficient, ccfm_daf_rhs, ccfm_rhs, equilibrium_coefficients, follower_velocity,
    DelayedSnapshot, PlatoonDerivative,
};
pub(crate) use rhs::{assemble, pair_flux};
pub use validate::{validate_config, ValidationReport, Violation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-driver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Sensitivity coefficient.
    pub alpha: f64,
    /// Reaction delay (s).
    pub tau: f64,
    /// Delayed-acceleration-feedback gain; zero gives the classical model.
    pub gamma: f64,
    /// Desired equilibrium separation (m).
    pub b: f64,
}

impl VehicleParams {
    pub fn new(alpha: f64, tau: f64, gamma: f64, b: f64) -> Self {
        Self {
            alpha,
            tau,
            gamma,
            b,
        }
    }
}

/// Velocity exponent `m` and headway exponent `l` of the power law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelExponents {
    pub m: f64,
    pub l: f64,
}

impl ModelExponents {
    pub fn new(m: f64, l: f64) -> Self {
        Self { m, l }
    }
}

/// Leader profile plus the ordered followers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonConfig {
    pub vehicles: Vec<VehicleParams>,
    pub exponents: ModelExponents,
    pub leader: LeaderProfile,
}

impl PlatoonConfig {
    pub fn new(vehicles: Vec<VehicleParams>, exponents: ModelExponents, leader: LeaderProfile) -> Self {
        Self {
            vehicles,
            exponents,
            leader,
        }
    }

    /// Number of followers.
    pub fn n(&self) -> usize {
        self.vehicles.len()
    }

    /// Parameters of 1-based follower `i`.
    pub fn vehicle(&self, i: usize) -> &VehicleParams {
        assert!(i >= 1 && i <= self.n(), "vehicle index {i} outside 1..={}", self.n());
        &self.vehicles[i - 1]
    }

    pub fn vehicle_mut(&mut self, i: usize) -> &mut VehicleParams {
        assert!(i >= 1 && i <= self.n(), "vehicle index {i} outside 1..={}", self.n());
        &mut self.vehicles[i - 1]
    }

    pub fn max_delay(&self) -> f64 {
        self.vehicles.iter().map(|v| v.tau).fold(0.0, f64::max)
    }

    pub fn min_delay(&self) -> f64 {
        self.vehicles.iter().map(|v| v.tau).fold(f64::INFINITY, f64::min)
    }

    /// True when every follower has `gamma == 0`.
    pub fn is_retarded(&self) -> bool {
        self.vehicles.iter().all(|v| v.gamma == 0.0)
    }

    /// Copy with every feedback gain set to zero.
    pub fn without_feedback(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.vehicles {
            v.gamma = 0.0;
        }
        out
    }
}

/// Headway deviations and relative velocities of every follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

impl PlatoonState {
    pub fn new(y: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(y.len(), v.len(), "headway and velocity vectors differ in length");
        Self { y, v }
    }

    pub fn equilibrium(n: usize) -> Self {
        Self {
            y: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }
}

/// Linearisation gains `beta*` of every follower at the settled equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCoefficients {
    pub beta_star: Vec<f64>,
}

impl EquilibriumCoefficients {
    /// `beta*` of 1-based follower `i`.
    pub fn get(&self, i: usize) -> f64 {
        self.beta_star[i - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("vehicle {vehicle}: separation {separation} m at t = {time} s is not positive")]
    Separation {
        vehicle: usize,
        time: f64,
        separation: f64,
    },
    #[error(
        "vehicle {vehicle}: velocity {velocity} m/s at t = {time} s is outside the domain of the power law with m = {exponent}"
    )]
    Velocity {
        vehicle: usize,
        time: f64,
        velocity: f64,
        exponent: f64,
    },
    #[error("expected {expected} delayed snapshots, got {got}")]
    Snapshots { expected: usize, got: usize },
    #[error("{0}")]
    Domain(String),
}

impl ModelError {
    /// 1-based vehicle index for errors that are tied to one follower.
    pub fn vehicle(&self) -> Option<usize> {
        match self {
            ModelError::Separation { vehicle, .. } | ModelError::Velocity { vehicle, .. } => Some(*vehicle),
            _ => None,
        }
    }
}
