//! Numerical bifurcation diagrams: steady-state envelopes and periods of the
//! oscillations that appear once a follower's delay passes its critical
//! value.

mod metrics;

pub use metrics::{
    classify_bifurcation, estimate_period, upward_crossings, BifurcationKind, Classification, Envelope,
    LimitCycleMetrics, PeriodReport,
};

use crate::analysis::{hopf_point, normalized_critical_delay, AnalysisError, HopfPoint};
use crate::dde::{integrate_neutral, velocity_component, IntegrationSettings, PlatoonHistory, Quantity, Trajectory};
use crate::model::{equilibrium_coefficients, validate_config, PlatoonConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("calibration infeasible for gamma = {gamma}: {detail}")]
    Calibration { gamma: f64, detail: String },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Leader terminal velocity that puts the critical delay of `vehicle` at
/// `desired_tau_cr`, by inverting `beta* = alpha v0^m / b^l`.
pub fn calibrate_leader_velocity(config: &PlatoonConfig, vehicle: usize, desired_tau_cr: f64) -> Result<f64, SweepError> {
    if vehicle < 1 || vehicle > config.n() {
        return Err(SweepError::Spec(format!("vehicle {vehicle} outside 1..={}", config.n())));
    }
    let p = config.vehicle(vehicle);
    let infeasible = |detail: String| SweepError::Calibration { gamma: p.gamma, detail };
    let (m, l) = (config.exponents.m, config.exponents.l);
    if m == 0.0 {
        return Err(infeasible("m = 0: beta* does not depend on the leader velocity".into()));
    }
    if !(desired_tau_cr > 0.0 && desired_tau_cr.is_finite()) {
        return Err(infeasible(format!("desired critical delay {desired_tau_cr} must be positive")));
    }
    if !(0.0..1.0).contains(&p.gamma) {
        return Err(AnalysisError::NeutralCondition { gamma: p.gamma }.into());
    }
    if !(p.alpha > 0.0 && p.b > 0.0) {
        return Err(infeasible(format!("alpha = {} and b = {} must be positive", p.alpha, p.b)));
    }
    let beta_needed = normalized_critical_delay(p.gamma) / desired_tau_cr;
    let v0 = (beta_needed * p.b.powf(l) / p.alpha).powf(1.0 / m);
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(infeasible(format!("no positive terminal velocity (got {v0})")));
    }
    Ok(v0)
}

/// Scalar varied along the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Reaction delay of the swept vehicle.
    Delay,
    /// Feedback gain of the swept vehicle.
    Gamma,
    /// Dimensionless factor multiplying every `alpha`.
    GainScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: PlatoonConfig,
    /// 1-based follower that is swept, calibrated and observed.
    pub vehicle: usize,
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    /// One curve per value, applied as the swept vehicle's `gamma`.
    #[serde(default)]
    pub gamma_family: Vec<f64>,
    /// Critical delay imposed on the swept vehicle for every curve.
    #[serde(default)]
    pub calibrate_tau_cr: Option<f64>,
    /// Initial relative-velocity offset of the swept vehicle (m/s).
    pub perturbation: f64,
    /// Oscillation threshold in units of `perturbation`.
    #[serde(default = "default_threshold_factor")]
    pub threshold_factor: f64,
}

fn default_threshold_factor() -> f64 {
    10.0
}

impl SweepSpec {
    pub fn threshold(&self) -> f64 {
        self.threshold_factor * self.perturbation.abs()
    }

    pub fn check(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::Spec(m));
        if self.vehicle < 1 || self.vehicle > self.base.n() {
            return bad(format!("vehicle {} outside 1..={}", self.vehicle, self.base.n()));
        }
        if self.grid.is_empty() {
            return bad("empty grid".into());
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("grid must be strictly increasing".into());
        }
        if self.parameter == SweepParameter::Gamma && !self.gamma_family.is_empty() {
            return bad("a gamma family cannot be combined with a gamma sweep".into());
        }
        if !(self.perturbation.is_finite() && self.threshold_factor > 0.0) {
            return bad("perturbation must be finite and the threshold factor positive".into());
        }
        Ok(())
    }

    fn curve_gammas(&self) -> Vec<f64> {
        if self.gamma_family.is_empty() {
            vec![self.base.vehicle(self.vehicle).gamma]
        } else {
            self.gamma_family.clone()
        }
    }

    fn apply(&self, config: &PlatoonConfig, value: f64) -> PlatoonConfig {
        let mut c = config.clone();
        match self.parameter {
            SweepParameter::Delay => c.vehicle_mut(self.vehicle).tau = value,
            SweepParameter::Gamma => c.vehicle_mut(self.vehicle).gamma = value,
            SweepParameter::GainScale => c.vehicles.iter_mut().for_each(|p| p.alpha *= value),
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub status: PointStatus,
    pub envelope: Option<Envelope>,
    pub metrics: Option<LimitCycleMetrics>,
    pub period_check: Option<PeriodReport>,
    /// Amplitude over the second half of the window divided by the first;
    /// above 1 the envelope is still growing.
    pub envelope_growth: Option<f64>,
}

impl SweepPoint {
    pub fn amplitude(&self) -> Option<f64> {
        self.metrics.map(|m| m.amplitude)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub gamma: f64,
    pub leader_velocity: f64,
    /// Equilibrium coefficient of the swept vehicle on the base grid value.
    pub beta_star: f64,
    pub hopf: HopfPoint,
    pub points: Vec<SweepPoint>,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub vehicle: usize,
    pub threshold: f64,
    pub curves: Vec<SweepCurve>,
}

/// Envelope, period and auxiliary-period check of the swept vehicle over
/// the post-transient window of a finished run.
pub fn observe(trajectory: &Trajectory, vehicle: usize, threshold: f64) -> (Envelope, LimitCycleMetrics, PeriodReport, f64) {
    let cut = trajectory.settings.transient_cut;
    let c = velocity_component(vehicle);
    let v = trajectory.series(Quantity::Value(c), cut);
    let l = trajectory.series(Quantity::Integrated(c), cut);
    let dt = trajectory.buffer.step();
    let envelope = Envelope::of(&v).unwrap_or(Envelope { v_max: 0.0, v_min: 0.0 });
    let metrics = LimitCycleMetrics::from_series(&v, dt, threshold).expect("non-empty window");
    let half = v.len() / 2;
    let early = Envelope::of(&v[..half.max(1)]).map_or(0.0, |e| e.amplitude());
    let late = Envelope::of(&v[half..]).map_or(0.0, |e| e.amplitude());
    let growth = if early > 0.0 { late / early } else { 1.0 };
    (envelope, metrics, PeriodReport::from_series(&l, &v, dt, threshold), growth)
}

/// Checks that the auxiliary variable and the velocity of `vehicle` share
/// their period over the post-transient window.
pub fn period_equivalence_check(trajectory: &Trajectory, vehicle: usize, threshold: f64) -> PeriodReport {
    observe(trajectory, vehicle, threshold).2
}

fn run_point(spec: &SweepSpec, config: &PlatoonConfig, gamma: f64, value: f64, settings: &IntegrationSettings) -> SweepPoint {
    let cfg = spec.apply(config, value);
    let history = Arc::new(PlatoonHistory::perturbed(cfg.n(), spec.vehicle, spec.perturbation));
    match integrate_neutral(&cfg, history, settings) {
        Ok(traj) => {
            let (envelope, metrics, period, growth) = observe(&traj, spec.vehicle, spec.threshold());
            SweepPoint {
                value,
                status: PointStatus::Ok,
                envelope: Some(envelope),
                metrics: Some(metrics),
                period_check: Some(period),
                envelope_growth: Some(growth),
            }
        }
        Err(e) => SweepPoint {
            value,
            status: PointStatus::Failed {
                message: format!("gamma = {gamma}, value = {value}: {}", e.cause),
            },
            envelope: None,
            metrics: None,
            period_check: None,
            envelope_growth: None,
        },
    }
}

/// Runs every curve of `spec` over its grid on `workers` threads (0 picks
/// the rayon default). Results are ordered by curve and grid index and do
/// not depend on the worker count. Points whose integration fails are
/// recorded with a failed status; the rest of the sweep continues.
pub fn bifurcation_diagram(spec: &SweepSpec, settings: &IntegrationSettings, workers: usize) -> Result<SweepResult, SweepError> {
    spec.check()?;
    let report = validate_config(&spec.base);
    if !report.is_valid() {
        return Err(SweepError::Spec(report.to_string()));
    }
    let mut configs = Vec::new();
    for gamma in spec.curve_gammas() {
        let mut cfg = spec.base.clone();
        cfg.vehicle_mut(spec.vehicle).gamma = gamma;
        if let Some(tau_cr) = spec.calibrate_tau_cr {
            let v0 = calibrate_leader_velocity(&cfg, spec.vehicle, tau_cr).map_err(|e| match e {
                SweepError::Calibration { detail, .. } => SweepError::Calibration { gamma, detail },
                other => other,
            })?;
            cfg.leader = cfg.leader.with_terminal_velocity(v0);
        }
        configs.push((gamma, cfg));
    }
    let jobs: Vec<(usize, f64)> = (0..configs.len())
        .flat_map(|c| spec.grid.iter().map(move |&v| (c, v)))
        .collect();
    let run = || -> Vec<SweepPoint> {
        jobs.par_iter()
            .map(|&(c, value)| run_point(spec, &configs[c].1, configs[c].0, value, settings))
            .collect()
    };
    let points = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SweepError::Spec(format!("thread pool: {e}")))?
        .install(run);

    let threshold = spec.threshold();
    let mut chunks = points.chunks(spec.grid.len());
    let mut curves = Vec::with_capacity(configs.len());
    for (gamma, cfg) in configs {
        let points = chunks.next().expect("one chunk per curve").to_vec();
        let beta_star = equilibrium_coefficients(&cfg)
            .map_err(AnalysisError::from)?
            .get(spec.vehicle);
        let hopf = hopf_point(beta_star, gamma)?;
        let classification = if points.iter().all(|p| p.status == PointStatus::Ok) {
            let amps: Vec<f64> = points.iter().map(|p| p.amplitude().unwrap_or(0.0)).collect();
            classify_bifurcation(&spec.grid, &amps, threshold)
        } else {
            Classification {
                kind: BifurcationKind::Inconclusive,
                onset_estimate: None,
                r_squared: None,
            }
        };
        curves.push(SweepCurve {
            gamma,
            leader_velocity: cfg.leader.terminal_velocity(),
            beta_star,
            hopf,
            points,
            classification,
        });
    }
    Ok(SweepResult {
        parameter: spec.parameter,
        vehicle: spec.vehicle,
        threshold,
        curves,
    })
}
