use super::solver::{solve, DelaySystem, NeutralTerms};
use super::{AtZero, DdeError, HistoryBuffer, IntegrationFailure, IntegrationSettings, Prehistory, Trajectory, TrajectoryMeta};
use crate::model::{self, PlatoonConfig};
use sha2::{Digest, Sha256};
use std::sync::Arc;

/// Index of the relative velocity of 1-based follower `i` in the state vector.
pub fn velocity_component(i: usize) -> usize {
    i - 1
}

/// Index of the headway deviation of 1-based follower `i` in a platoon of `n`.
pub fn headway_component(n: usize, i: usize) -> usize {
    n + i - 1
}

/// Constant initial function: the equilibrium plus fixed offsets.
///
/// Layout is `[v_1 .. v_n, y_1 .. y_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonHistory {
    n: usize,
    values: Vec<f64>,
}

impl PlatoonHistory {
    pub fn equilibrium(n: usize) -> Self {
        Self { n, values: vec![0.0; 2 * n] }
    }

    /// Equilibrium with relative velocity `delta` (m/s) on follower `vehicle`.
    pub fn perturbed(n: usize, vehicle: usize, delta: f64) -> Self {
        Self::equilibrium(n).with_velocity(vehicle, delta)
    }

    pub fn with_velocity(mut self, vehicle: usize, delta: f64) -> Self {
        assert!(vehicle >= 1 && vehicle <= self.n, "vehicle index {vehicle} outside 1..={}", self.n);
        self.values[velocity_component(vehicle)] = delta;
        self
    }

    pub fn with_headway(mut self, vehicle: usize, deviation: f64) -> Self {
        assert!(vehicle >= 1 && vehicle <= self.n, "vehicle index {vehicle} outside 1..={}", self.n);
        self.values[headway_component(self.n, vehicle)] = deviation;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Prehistory for PlatoonHistory {
    fn value(&self, _t: f64, component: usize) -> f64 {
        self.values[component]
    }

    fn derivative(&self, _t: f64, _component: usize) -> f64 {
        0.0
    }
}

struct PlatoonSystem<'a> {
    config: &'a PlatoonConfig,
    neutral: bool,
    floor: f64,
}

impl DelaySystem for PlatoonSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.config.n()
    }

    fn max_delay(&self) -> f64 {
        self.config.max_delay()
    }

    fn min_delay(&self) -> f64 {
        self.config.min_delay()
    }

    fn rhs(&self, t: f64, _z: &[f64], u: &[f64], past: &HistoryBuffer, dz: &mut [f64]) -> Result<(), DdeError> {
        let config = self.config;
        let n = config.n();
        let mut lookup_error = None;
        let flux = |j: usize| {
            let s = t - config.vehicles[j].tau;
            let cursor = match past.locate(s, AtZero::Prehistory) {
                Ok(c) => c,
                Err(e) => {
                    lookup_error = Some(e);
                    return Err(model::ModelError::Domain(String::new()));
                }
            };
            model::pair_flux(
                config,
                j,
                s,
                config.leader.velocity(s),
                |k| past.value(cursor, k),
                past.value(cursor, n + j),
            )
        };
        let (v_dot, y_dot) = dz.split_at_mut(n);
        if let Err(e) = model::assemble(config, t, self.neutral, flux, v_dot) {
            return Err(lookup_error.unwrap_or_else(|| DdeError::from_model(t, e)));
        }
        y_dot.copy_from_slice(&u[..n]);
        Ok(())
    }

    fn check_state(&self, t: f64, u: &[f64]) -> Result<(), DdeError> {
        let n = self.config.n();
        for (j, p) in self.config.vehicles.iter().enumerate() {
            let separation = u[n + j] + p.b;
            if !(separation >= self.floor) {
                return Err(DdeError::Singularity {
                    time: t,
                    vehicle: j + 1,
                    detail: format!("separation {separation} m fell below the floor of {} m", self.floor),
                });
            }
        }
        Ok(())
    }
}

/// Hex SHA-256 over the bit patterns of every numeric configuration field.
pub(crate) fn config_hash(config: &PlatoonConfig) -> String {
    let mut hasher = Sha256::new();
    let mut put = |x: f64| hasher.update(x.to_bits().to_le_bytes());
    put(config.n() as f64);
    for p in &config.vehicles {
        put(p.alpha);
        put(p.tau);
        put(p.gamma);
        put(p.b);
    }
    put(config.exponents.m);
    put(config.exponents.l);
    put(config.leader.initial_velocity);
    for s in &config.leader.segments {
        put(s.start);
        put(s.end);
        put(s.accel_start);
        put(s.accel_end);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn checked(config: &PlatoonConfig) -> Result<(), IntegrationFailure> {
    let report = model::validate_config(config);
    if !report.is_valid() {
        return Err(DdeError::Config(report).into());
    }
    Ok(())
}

/// Integrates the classical model. Every feedback gain must be zero.
pub fn integrate_retarded(
    config: &PlatoonConfig,
    history: Arc<dyn Prehistory>,
    settings: &IntegrationSettings,
) -> Result<Trajectory, IntegrationFailure> {
    checked(config)?;
    if !config.is_retarded() {
        return Err(DdeError::Settings("the classical integrator needs every gamma = 0".into()).into());
    }
    let system = PlatoonSystem {
        config,
        neutral: false,
        floor: settings.separation_floor,
    };
    let meta = TrajectoryMeta {
        config_hash: Some(config_hash(config)),
        neutral: false,
    };
    solve(&system, None, history, None, settings, meta)
}

/// Integrates the feedback model through `l_i = v_i - gamma_i v_i(t - tau_i)`.
///
/// The integrated coordinates of the returned trajectory hold `l` in the
/// velocity slots; recorded values hold the recovered `v`.
pub fn integrate_neutral(
    config: &PlatoonConfig,
    history: Arc<dyn Prehistory>,
    settings: &IntegrationSettings,
) -> Result<Trajectory, IntegrationFailure> {
    checked(config)?;
    let n = config.n();
    let mut terms = NeutralTerms::retarded(2 * n);
    for (j, p) in config.vehicles.iter().enumerate() {
        terms.set(j, p.gamma, p.tau);
    }
    let system = PlatoonSystem {
        config,
        neutral: true,
        floor: settings.separation_floor,
    };
    let meta = TrajectoryMeta {
        config_hash: Some(config_hash(config)),
        neutral: true,
    };
    solve(&system, Some(&terms), history, None, settings, meta)
}
