//! Fixed-step method-of-steps integration of delay equations.
//!
//! The solver advances with the classical four-stage Runge–Kutta scheme and
//! stores value and derivative at every grid node, so delayed arguments are
//! read back through cubic Hermite interpolation. Step sizes are restricted
//! to at most a tenth of the smallest delay, which keeps every delayed
//! argument of every stage inside the already computed history.
//!
//! Neutral equations of the form `u' - g u'(t - s) = f(...)` are handled by
//! integrating `z = u - g u(t - s)`, whose right-hand side is of retarded
//! type, and recovering `u(t) = z(t) + g u(t - s)` pointwise.

mod history;
mod platoon;
mod solver;

pub use history::{AtZero, ConstantHistory, Cursor, FnHistory, HistoryBuffer, Prehistory};
pub use platoon::{
    headway_component, integrate_neutral, integrate_retarded, velocity_component, PlatoonHistory,
};
pub use solver::{solve, DelaySystem, LinearDelay, NeutralTerms};

use crate::model::{ModelError, ValidationReport};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    /// Step size (s).
    pub h: f64,
    /// Final time (s).
    pub horizon: f64,
    /// Start of the window used for steady-state statistics (s).
    pub transient_cut: f64,
    /// Smallest admissible separation between consecutive vehicles (m).
    pub separation_floor: f64,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self::new(2e-3, 300.0)
    }
}

impl IntegrationSettings {
    /// Settings with the transient cut at half the horizon and the default
    /// separation floor of 1e-6 m.
    pub fn new(h: f64, horizon: f64) -> Self {
        Self {
            h,
            horizon,
            transient_cut: horizon / 2.0,
            separation_floor: 1e-6,
        }
    }

    pub fn with_transient_cut(mut self, transient_cut: f64) -> Self {
        self.transient_cut = transient_cut;
        self
    }

    /// Checks the step against the smallest delay and the window bounds.
    pub fn check(&self, min_delay: f64) -> Result<(), DdeError> {
        let bad = |msg: String| Err(DdeError::Settings(msg));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("step h = {} must be positive", self.h));
        }
        if self.h > min_delay / 10.0 * (1.0 + 1e-12) {
            return bad(format!(
                "step h = {} exceeds a tenth of the smallest delay ({min_delay} s)",
                self.h
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        if !(self.transient_cut >= 0.0 && self.transient_cut < self.horizon) {
            return bad(format!(
                "transient cut {} must lie in [0, horizon = {})",
                self.transient_cut, self.horizon
            ));
        }
        if !(self.separation_floor >= 0.0) {
            return bad(format!("separation floor {} must be non-negative", self.separation_floor));
        }
        Ok(())
    }

    /// Number of steps needed to cover the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.h - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DdeError {
    #[error("invalid integration settings: {0}")]
    Settings(String),
    #[error("invalid configuration: {0}")]
    Config(ValidationReport),
    #[error("time {time} outside the solution domain [{min}, {max}]")]
    Range { time: f64, min: f64, max: f64 },
    #[error("singularity at t = {time} s, vehicle {vehicle}: {detail}")]
    Singularity { time: f64, vehicle: usize, detail: String },
    #[error("right-hand side failed at t = {time} s: {source}")]
    Model { time: f64, source: ModelError },
}

impl DdeError {
    pub(crate) fn from_model(time: f64, err: ModelError) -> Self {
        match &err {
            ModelError::Separation { vehicle, time, .. } | ModelError::Velocity { vehicle, time, .. } => {
                DdeError::Singularity {
                    time: *time,
                    vehicle: *vehicle,
                    detail: err.to_string(),
                }
            }
            _ => DdeError::Model { time, source: err },
        }
    }
}

/// Failed integration together with whatever was computed before the fault.
#[derive(Debug, Error)]
#[error("{cause}")]
pub struct IntegrationFailure {
    pub cause: DdeError,
    pub partial: Option<Box<Trajectory>>,
}

impl From<DdeError> for IntegrationFailure {
    fn from(cause: DdeError) -> Self {
        Self { cause, partial: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    /// Fingerprint of the configuration that produced the run.
    pub config_hash: Option<String>,
    /// True when the run integrated the feedback (neutral) form.
    pub neutral: bool,
}

/// Completed solution on `[0, horizon]` plus the initial function.
#[derive(Clone)]
pub struct Trajectory {
    pub buffer: HistoryBuffer,
    pub settings: IntegrationSettings,
    pub meta: TrajectoryMeta,
}

impl fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trajectory")
            .field("buffer", &self.buffer)
            .field("settings", &self.settings)
            .field("meta", &self.meta)
            .finish()
    }
}

/// Which stored signal to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Value(usize),
    Derivative(usize),
    /// Integrated coordinate (the auxiliary variable for neutral runs).
    Integrated(usize),
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.buffer.time(k)
    }

    pub fn end_time(&self) -> f64 {
        self.buffer.last_time()
    }

    /// Node indices with `t >= from`.
    pub fn indices_from(&self, from: f64) -> std::ops::Range<usize> {
        let first = ((from / self.buffer.step()) - 1e-9).ceil().max(0.0) as usize;
        first.min(self.len())..self.len()
    }

    /// Grid samples of one quantity over nodes with `t >= from`.
    pub fn series(&self, quantity: Quantity, from: f64) -> Vec<f64> {
        self.indices_from(from)
            .map(|k| match quantity {
                Quantity::Value(c) => self.buffer.node_value(k, c),
                Quantity::Derivative(c) => self.buffer.node_derivative(k, c),
                Quantity::Integrated(c) => self.buffer.node_integrated(k, c),
            })
            .collect()
    }
}

/// Dense-output read of a trajectory at any `t` in `[-max_delay, horizon]`;
/// exact at grid nodes.
pub fn sample(trajectory: &Trajectory, t: f64, quantity: Quantity) -> Result<f64, DdeError> {
    let buf = &trajectory.buffer;
    let cursor = buf.locate(t, AtZero::Stored)?;
    match quantity {
        Quantity::Value(c) => Ok(buf.value(cursor, c)),
        Quantity::Derivative(c) => Ok(buf.derivative(cursor, c)),
        Quantity::Integrated(c) => buf.integrated(cursor, c).ok_or(DdeError::Range {
            time: t,
            min: 0.0,
            max: buf.last_time(),
        }),
    }
}
