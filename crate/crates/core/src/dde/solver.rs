use super::{DdeError, HistoryBuffer, IntegrationFailure, IntegrationSettings, Prehistory, Trajectory, TrajectoryMeta};
use std::sync::Arc;

/// A delay system in integrated coordinates `z` with recorded state `u`.
///
/// For retarded problems `z` and `u` coincide. For neutral problems the
/// solver recovers `u` from `z` through [`NeutralTerms`] before calling
/// [`DelaySystem::rhs`].
pub trait DelaySystem {
    fn dim(&self) -> usize;
    fn max_delay(&self) -> f64;
    fn min_delay(&self) -> f64;

    /// Writes `dz/dt` at time `t`. Delayed arguments are read from `past`,
    /// which holds the recorded state up to the start of the current step.
    fn rhs(&self, t: f64, z: &[f64], u: &[f64], past: &HistoryBuffer, dz: &mut [f64]) -> Result<(), DdeError>;

    /// Rejects an accepted state (e.g. a collision).
    fn check_state(&self, _t: f64, _u: &[f64]) -> Result<(), DdeError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutralTerm {
    pub gain: f64,
    pub lag: f64,
}

/// Per-component neutral coupling `z_c = u_c - gain * u_c(t - lag)`;
/// components without a term are retarded.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeutralTerms {
    terms: Vec<Option<NeutralTerm>>,
}

impl NeutralTerms {
    pub fn new(terms: Vec<Option<NeutralTerm>>) -> Self {
        Self { terms }
    }

    pub fn retarded(dim: usize) -> Self {
        Self { terms: vec![None; dim] }
    }

    pub fn set(&mut self, component: usize, gain: f64, lag: f64) {
        self.terms[component] = Some(NeutralTerm { gain, lag });
    }

    pub fn get(&self, component: usize) -> Option<NeutralTerm> {
        self.terms[component]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn lags(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().flatten().map(|t| t.lag)
    }
}

struct Stepper<'a, S: ?Sized> {
    system: &'a S,
    neutral: Option<&'a NeutralTerms>,
}

impl<S: DelaySystem + ?Sized> Stepper<'_, S> {
    #[inline]
    fn recover(&self, buf: &HistoryBuffer, t: f64, z: &[f64], u: &mut [f64]) -> Result<(), DdeError> {
        match self.neutral {
            None => u.copy_from_slice(z),
            Some(nt) => {
                for c in 0..z.len() {
                    u[c] = match nt.terms[c] {
                        Some(term) => z[c] + term.gain * buf.past_value(t - term.lag, c)?,
                        None => z[c],
                    };
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn recover_derivative(&self, buf: &HistoryBuffer, t: f64, dz: &[f64], du: &mut [f64]) -> Result<(), DdeError> {
        match self.neutral {
            None => du.copy_from_slice(dz),
            Some(nt) => {
                for c in 0..dz.len() {
                    du[c] = match nt.terms[c] {
                        Some(term) => dz[c] + term.gain * buf.past_derivative(t - term.lag, c)?,
                        None => dz[c],
                    };
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, buf: &HistoryBuffer, t: f64, z: &[f64], u: &mut [f64], dz: &mut [f64]) -> Result<(), DdeError> {
        self.recover(buf, t, z, u)?;
        self.system.rhs(t, z, u, buf, dz)
    }
}

/// Integrates `system` over `[0, settings.horizon]` from the initial function
/// `prehistory`.
///
/// The integrated coordinates at `t = 0` default to the values implied by
/// the initial function; `initial_integrated` overrides them.
pub fn solve<S: DelaySystem + ?Sized>(
    system: &S,
    neutral: Option<&NeutralTerms>,
    prehistory: Arc<dyn Prehistory>,
    initial_integrated: Option<&[f64]>,
    settings: &IntegrationSettings,
    meta: TrajectoryMeta,
) -> Result<Trajectory, IntegrationFailure> {
    let dim = system.dim();
    let mut min_delay = system.min_delay();
    let mut max_delay = system.max_delay();
    if let Some(nt) = neutral {
        if nt.len() != dim {
            return Err(DdeError::Settings(format!("{} neutral terms for a system of dimension {dim}", nt.len())).into());
        }
        for lag in nt.lags() {
            min_delay = min_delay.min(lag);
            max_delay = max_delay.max(lag);
        }
    }
    settings.check(min_delay)?;
    if let Some(z0) = initial_integrated {
        if z0.len() != dim {
            return Err(DdeError::Settings(format!("initial state has {} components, expected {dim}", z0.len())).into());
        }
    }

    let h = settings.h;
    let steps = settings.steps();
    let mut buf = HistoryBuffer::new(h, dim, -max_delay, prehistory);
    buf.reserve(steps + 1);
    let stepper = Stepper { system, neutral };

    let fail = |cause: DdeError, buf: HistoryBuffer| IntegrationFailure {
        cause,
        partial: (!buf.is_empty()).then(|| {
            Box::new(Trajectory {
                buffer: buf,
                settings: *settings,
                meta: meta.clone(),
            })
        }),
    };

    let mut z = vec![0.0; dim];
    let mut u = vec![0.0; dim];
    let mut dz = vec![0.0; dim];
    let mut du = vec![0.0; dim];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut zs = vec![0.0; dim];
    let mut us = vec![0.0; dim];

    let start = (|| -> Result<(), DdeError> {
        match initial_integrated {
            Some(z0) => z.copy_from_slice(z0),
            None => {
                for c in 0..dim {
                    let now = buf.past_value(0.0, c)?;
                    z[c] = match neutral.and_then(|nt| nt.terms[c]) {
                        Some(term) => now - term.gain * buf.past_value(-term.lag, c)?,
                        None => now,
                    };
                }
            }
        }
        stepper.eval(&buf, 0.0, &z, &mut u, &mut dz)?;
        stepper.recover_derivative(&buf, 0.0, &dz, &mut du)?;
        system.check_state(0.0, &u)
    })();
    if let Err(e) = start {
        return Err(fail(e, buf));
    }
    buf.push(&u, &du, &z, &dz);

    for n in 0..steps {
        let t_half = (n as f64 + 0.5) * h;
        let t_next = (n + 1) as f64 * h;
        let step = (|| -> Result<(), DdeError> {
            k1.copy_from_slice(&dz);
            for c in 0..dim {
                zs[c] = z[c] + 0.5 * h * k1[c];
            }
            stepper.eval(&buf, t_half, &zs, &mut us, &mut k2)?;
            for c in 0..dim {
                zs[c] = z[c] + 0.5 * h * k2[c];
            }
            stepper.eval(&buf, t_half, &zs, &mut us, &mut k3)?;
            for c in 0..dim {
                zs[c] = z[c] + h * k3[c];
            }
            stepper.eval(&buf, t_next, &zs, &mut us, &mut k4)?;
            for c in 0..dim {
                z[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            stepper.eval(&buf, t_next, &z, &mut u, &mut dz)?;
            stepper.recover_derivative(&buf, t_next, &dz, &mut du)?;
            system.check_state(t_next, &u)
        })();
        if let Err(e) = step {
            return Err(fail(e, buf));
        }
        buf.push(&u, &du, &z, &dz);
    }

    Ok(Trajectory {
        buffer: buf,
        settings: *settings,
        meta,
    })
}

/// `x'(t) = a x(t - tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDelay {
    pub a: f64,
    pub tau: f64,
}

impl DelaySystem for LinearDelay {
    fn dim(&self) -> usize {
        1
    }
    fn max_delay(&self) -> f64 {
        self.tau
    }
    fn min_delay(&self) -> f64 {
        self.tau
    }
    fn rhs(&self, t: f64, _z: &[f64], _u: &[f64], past: &HistoryBuffer, dz: &mut [f64]) -> Result<(), DdeError> {
        dz[0] = self.a * past.past_value(t - self.tau, 0)?;
        Ok(())
    }
}
