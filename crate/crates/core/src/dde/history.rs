use super::DdeError;
use std::fmt;
use std::sync::Arc;

/// Initial function on `[-max_delay, 0]`.
pub trait Prehistory: Send + Sync {
    fn value(&self, t: f64, component: usize) -> f64;
    fn derivative(&self, t: f64, component: usize) -> f64;
}

/// Constant initial function.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantHistory(pub Vec<f64>);

impl Prehistory for ConstantHistory {
    fn value(&self, _t: f64, component: usize) -> f64 {
        self.0[component]
    }

    fn derivative(&self, _t: f64, _component: usize) -> f64 {
        0.0
    }
}

/// Initial function given by a value closure and its time derivative.
pub struct FnHistory<V, D> {
    value: V,
    derivative: D,
}

impl<V, D> FnHistory<V, D>
where
    V: Fn(f64, usize) -> f64 + Send + Sync,
    D: Fn(f64, usize) -> f64 + Send + Sync,
{
    pub fn new(value: V, derivative: D) -> Self {
        Self { value, derivative }
    }
}

impl<V, D> Prehistory for FnHistory<V, D>
where
    V: Fn(f64, usize) -> f64 + Send + Sync,
    D: Fn(f64, usize) -> f64 + Send + Sync,
{
    fn value(&self, t: f64, component: usize) -> f64 {
        (self.value)(t, component)
    }

    fn derivative(&self, t: f64, component: usize) -> f64 {
        (self.derivative)(t, component)
    }
}

/// Grid times that differ from a node by less than this fraction of a step
/// are treated as the node itself.
const SNAP: f64 = 1e-9;

/// Resolved position of a lookup time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cursor {
    Prehistory(f64),
    Node(usize),
    Between { k: usize, theta: f64 },
}

/// Whether a lookup at exactly `t = 0` reads the initial function or the
/// first stored node. Delayed arguments use the former, so a jump between
/// the initial function and the recovered state at `t = 0` is seen from the
/// left, as the delayed equation prescribes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtZero {
    Prehistory,
    Stored,
}

/// Uniform-grid solution store: recorded state, its derivative and the
/// integrated coordinates (with derivative) at every node `t_k = k h`.
#[derive(Clone)]
pub struct HistoryBuffer {
    step: f64,
    dim: usize,
    min_time: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
    integrated: Vec<f64>,
    integrated_derivs: Vec<f64>,
    prehistory: Arc<dyn Prehistory>,
}

impl fmt::Debug for HistoryBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HistoryBuffer")
            .field("step", &self.step)
            .field("dim", &self.dim)
            .field("min_time", &self.min_time)
            .field("nodes", &self.len())
            .finish()
    }
}

fn hermite(theta: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

fn hermite_slope(theta: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let t2 = theta * theta;
    let dh00 = 6.0 * t2 - 6.0 * theta;
    let dh10 = 3.0 * t2 - 4.0 * theta + 1.0;
    let dh11 = 3.0 * t2 - 2.0 * theta;
    dh00 * (y0 - y1) / h + dh10 * d0 + dh11 * d1
}

impl HistoryBuffer {
    pub fn new(step: f64, dim: usize, min_time: f64, prehistory: Arc<dyn Prehistory>) -> Self {
        Self {
            step,
            dim,
            min_time,
            values: Vec::new(),
            derivs: Vec::new(),
            integrated: Vec::new(),
            integrated_derivs: Vec::new(),
            prehistory,
        }
    }

    pub(crate) fn reserve(&mut self, nodes: usize) {
        let n = nodes * self.dim;
        self.values.reserve(n);
        self.derivs.reserve(n);
        self.integrated.reserve(n);
        self.integrated_derivs.reserve(n);
    }

    pub(crate) fn push(&mut self, u: &[f64], du: &[f64], z: &[f64], dz: &[f64]) {
        debug_assert!(u.len() == self.dim && du.len() == self.dim && z.len() == self.dim && dz.len() == self.dim);
        self.values.extend_from_slice(u);
        self.derivs.extend_from_slice(du);
        self.integrated.extend_from_slice(z);
        self.integrated_derivs.extend_from_slice(dz);
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Earliest admissible lookup time (minus the largest delay).
    pub fn min_time(&self) -> f64 {
        self.min_time
    }

    /// Number of stored nodes.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn last_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn node_value(&self, k: usize, component: usize) -> f64 {
        self.values[k * self.dim + component]
    }

    pub fn node_derivative(&self, k: usize, component: usize) -> f64 {
        self.derivs[k * self.dim + component]
    }

    pub fn node_integrated(&self, k: usize, component: usize) -> f64 {
        self.integrated[k * self.dim + component]
    }

    pub fn node_integrated_derivative(&self, k: usize, component: usize) -> f64 {
        self.integrated_derivs[k * self.dim + component]
    }

    /// Recorded state at node `k`.
    pub fn node_state(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn prehistory(&self) -> &dyn Prehistory {
        self.prehistory.as_ref()
    }

    pub fn locate(&self, t: f64, at_zero: AtZero) -> Result<Cursor, DdeError> {
        let out_of_range = || DdeError::Range {
            time: t,
            min: self.min_time,
            max: self.last_time(),
        };
        if !t.is_finite() || t < self.min_time - SNAP * self.step {
            return Err(out_of_range());
        }
        let s = t / self.step;
        let k = s.round();
        if (s - k).abs() <= SNAP {
            if k < 0.0 || (k == 0.0 && (at_zero == AtZero::Prehistory || self.is_empty())) {
                return Ok(Cursor::Prehistory(k * self.step));
            }
            let k = k as usize;
            return if k < self.len() { Ok(Cursor::Node(k)) } else { Err(out_of_range()) };
        }
        if s < 0.0 {
            return Ok(Cursor::Prehistory(t));
        }
        let k = s.floor();
        let ku = k as usize;
        if ku + 1 >= self.len() {
            return Err(out_of_range());
        }
        Ok(Cursor::Between { k: ku, theta: s - k })
    }

    #[inline]
    pub fn value(&self, cursor: Cursor, component: usize) -> f64 {
        match cursor {
            Cursor::Prehistory(t) => self.prehistory.value(t, component),
            Cursor::Node(k) => self.node_value(k, component),
            Cursor::Between { k, theta } => hermite(
                theta,
                self.step,
                self.node_value(k, component),
                self.node_derivative(k, component),
                self.node_value(k + 1, component),
                self.node_derivative(k + 1, component),
            ),
        }
    }

    #[inline]
    pub fn derivative(&self, cursor: Cursor, component: usize) -> f64 {
        match cursor {
            Cursor::Prehistory(t) => self.prehistory.derivative(t, component),
            Cursor::Node(k) => self.node_derivative(k, component),
            Cursor::Between { k, theta } => hermite_slope(
                theta,
                self.step,
                self.node_value(k, component),
                self.node_derivative(k, component),
                self.node_value(k + 1, component),
                self.node_derivative(k + 1, component),
            ),
        }
    }

    /// Integrated coordinate; only defined on the stored grid range.
    pub fn integrated(&self, cursor: Cursor, component: usize) -> Option<f64> {
        match cursor {
            Cursor::Prehistory(_) => None,
            Cursor::Node(k) => Some(self.node_integrated(k, component)),
            Cursor::Between { k, theta } => Some(hermite(
                theta,
                self.step,
                self.node_integrated(k, component),
                self.node_integrated_derivative(k, component),
                self.node_integrated(k + 1, component),
                self.node_integrated_derivative(k + 1, component),
            )),
        }
    }

    /// Delayed-argument lookup used while integrating.
    #[inline]
    pub fn past_value(&self, t: f64, component: usize) -> Result<f64, DdeError> {
        Ok(self.value(self.locate(t, AtZero::Prehistory)?, component))
    }

    #[inline]
    pub fn past_derivative(&self, t: f64, component: usize) -> Result<f64, DdeError> {
        Ok(self.derivative(self.locate(t, AtZero::Prehistory)?, component))
    }
}
