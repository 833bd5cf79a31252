use super::{EquilibriumCoefficients, ModelError, ModelExponents, PlatoonConfig, PlatoonState};
use serde::{Deserialize, Serialize};

/// State of the platoon sampled at `t - tau_j` for follower `j`, together with
/// the leader velocity at that same instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedSnapshot {
    pub state: PlatoonState,
    pub leader_velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonDerivative {
    pub v_dot: Vec<f64>,
    pub y_dot: Vec<f64>,
}

enum Fault {
    Velocity,
    Separation,
}

fn velocity_power(w: f64, m: f64) -> Option<f64> {
    if m == 0.0 {
        Some(1.0)
    } else if w > 0.0 {
        Some(w.powf(m))
    } else if w == 0.0 {
        (m > 0.0).then_some(0.0)
    } else if m.fract() == 0.0 {
        Some(w.powf(m))
    } else {
        None
    }
}

#[inline]
fn beta_raw(alpha: f64, m: f64, l: f64, velocity: f64, separation: f64) -> Result<f64, Fault> {
    if !(separation > 0.0) {
        return Err(Fault::Separation);
    }
    let num = velocity_power(velocity, m).ok_or(Fault::Velocity)?;
    let den = if l == 0.0 { 1.0 } else { separation.powf(l) };
    Ok(alpha * num / den)
}

fn fault_to_error(fault: Fault, config: &PlatoonConfig, vehicle: usize, time: f64, velocity: f64, separation: f64) -> ModelError {
    match fault {
        Fault::Separation => ModelError::Separation {
            vehicle,
            time,
            separation,
        },
        Fault::Velocity => ModelError::Velocity {
            vehicle,
            time,
            velocity,
            exponent: config.exponents.m,
        },
    }
}

/// `beta_i = alpha_i * velocity^m / separation^l` for 1-based follower `i`,
/// where `velocity` is the follower's absolute velocity and `separation` the
/// gap to the vehicle ahead. `time` only labels errors.
pub fn beta_coefficient(config: &PlatoonConfig, i: usize, time: f64, velocity: f64, separation: f64) -> Result<f64, ModelError> {
    let p = config.vehicle(i);
    let ModelExponents { m, l } = config.exponents;
    beta_raw(p.alpha, m, l, velocity, separation).map_err(|f| fault_to_error(f, config, i, time, velocity, separation))
}

/// Absolute velocity of 1-based follower `i`: the leader velocity minus the
/// partial sum of relative velocities `v_1 .. v_i`.
pub fn follower_velocity(state: &PlatoonState, leader_velocity: f64, i: usize) -> f64 {
    assert!(i >= 1 && i <= state.n(), "follower index {i} outside 1..={}", state.n());
    let mut w = leader_velocity;
    for v in &state.v[..i] {
        w -= v;
    }
    w
}

/// `beta_j(s) * v_j(s)` for 0-based follower `j`, where every argument is
/// sampled at the same (delayed) instant `s`.
#[inline]
pub(crate) fn pair_flux(
    config: &PlatoonConfig,
    j: usize,
    time: f64,
    leader_velocity: f64,
    velocity_of: impl Fn(usize) -> f64,
    headway_deviation: f64,
) -> Result<f64, ModelError> {
    let p = &config.vehicles[j];
    let mut w = leader_velocity;
    for k in 0..=j {
        w -= velocity_of(k);
    }
    let separation = headway_deviation + p.b;
    let ModelExponents { m, l } = config.exponents;
    let beta = beta_raw(p.alpha, m, l, w, separation).map_err(|f| fault_to_error(f, config, j + 1, time, w, separation))?;
    Ok(beta * velocity_of(j))
}

/// Forcing of the first follower: `a0(t)` for the classical model and
/// `a0(t) - gamma_1 a0(t - tau_1)` with feedback.
#[inline]
pub(crate) fn leader_drive(config: &PlatoonConfig, t: f64, neutral: bool) -> f64 {
    let a = config.leader.accel(t);
    if neutral {
        let first = &config.vehicles[0];
        a - first.gamma * config.leader.accel(t - first.tau)
    } else {
        a
    }
}

/// Velocity-equation right-hand sides from precomputed pair fluxes.
#[inline]
pub(crate) fn assemble(config: &PlatoonConfig, t: f64, neutral: bool, mut flux: impl FnMut(usize) -> Result<f64, ModelError>, out: &mut [f64]) -> Result<(), ModelError> {
    let mut prev = 0.0;
    for j in 0..config.n() {
        let f = flux(j)?;
        out[j] = if j == 0 { leader_drive(config, t, neutral) - f } else { prev - f };
        prev = f;
    }
    Ok(())
}

fn check_snapshots(config: &PlatoonConfig, delayed: &[DelayedSnapshot]) -> Result<(), ModelError> {
    if delayed.len() != config.n() || delayed.iter().any(|s| s.state.n() != config.n()) {
        return Err(ModelError::Snapshots {
            expected: config.n(),
            got: delayed.len(),
        });
    }
    Ok(())
}

fn snapshot_flux(config: &PlatoonConfig, t: f64, delayed: &[DelayedSnapshot], j: usize) -> Result<f64, ModelError> {
    let snap = &delayed[j];
    let time = t - config.vehicles[j].tau;
    pair_flux(config, j, time, snap.leader_velocity, |k| snap.state.v[k], snap.state.y[j])
}

/// Classical model: `v_i' = beta_{i-1} v_{i-1} (t - tau_{i-1}) - beta_i v_i (t - tau_i)`
/// and `y_i' = v_i(t)`, with the first follower forced by the leader
/// acceleration `a0(t)`. `delayed[j]` must hold the platoon at `t - tau_{j+1}`.
pub fn ccfm_rhs(config: &PlatoonConfig, t: f64, now: &PlatoonState, delayed: &[DelayedSnapshot]) -> Result<PlatoonDerivative, ModelError> {
    check_snapshots(config, delayed)?;
    let mut v_dot = vec![0.0; config.n()];
    assemble(config, t, false, |j| snapshot_flux(config, t, delayed, j), &mut v_dot)?;
    Ok(PlatoonDerivative {
        v_dot,
        y_dot: now.v.clone(),
    })
}

/// Feedback model, written for the auxiliary variables
/// `l_i(t) = v_i(t) - gamma_i v_i(t - tau_i)`. The flux is the classical one;
/// only the first follower's forcing gains the `-gamma_1 a0(t - tau_1)` term.
pub fn ccfm_daf_rhs(config: &PlatoonConfig, t: f64, delayed: &[DelayedSnapshot]) -> Result<Vec<f64>, ModelError> {
    check_snapshots(config, delayed)?;
    let mut l_dot = vec![0.0; config.n()];
    assemble(config, t, true, |j| snapshot_flux(config, t, delayed, j), &mut l_dot)?;
    Ok(l_dot)
}

/// `beta*_i = alpha_i (v0)^m / b_i^l` with `v0` the settled leader velocity.
pub fn equilibrium_coefficients(config: &PlatoonConfig) -> Result<EquilibriumCoefficients, ModelError> {
    let v0 = config.leader.terminal_velocity();
    let ModelExponents { m, l } = config.exponents;
    if !(v0 > 0.0) && m != 0.0 {
        return Err(ModelError::Domain(format!(
            "terminal leader velocity {v0} m/s must be positive when m = {m}"
        )));
    }
    let mut beta_star = Vec::with_capacity(config.n());
    for (idx, p) in config.vehicles.iter().enumerate() {
        let i = idx + 1;
        if !(p.b > 0.0) {
            return Err(ModelError::Domain(format!("vehicle {i}: separation b = {} must be positive", p.b)));
        }
        let beta = beta_raw(p.alpha, m, l, v0, p.b)
            .map_err(|_| ModelError::Domain(format!("vehicle {i}: equilibrium coefficient undefined")))?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ModelError::Domain(format!(
                "vehicle {i}: equilibrium coefficient {beta} is not positive and finite"
            )));
        }
        beta_star.push(beta);
    }
    Ok(EquilibriumCoefficients { beta_star })
}
