use serde::{Deserialize, Serialize};

/// Upward crossings of `x - mean(x)` for uniformly sampled `x`, located by
/// linear interpolation; returned as offsets from the first sample (s).
pub fn upward_crossings(x: &[f64], dt: f64) -> Vec<f64> {
    if x.len() < 2 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut out = Vec::new();
    for k in 1..x.len() {
        let a = x[k - 1] - mean;
        let b = x[k] - mean;
        if a < 0.0 && b >= 0.0 {
            out.push((k as f64 - 1.0 + a / (a - b)) * dt);
        }
    }
    out
}

/// Mean spacing of upward mean crossings; `None` with fewer than two.
pub fn estimate_period(x: &[f64], dt: f64) -> Option<f64> {
    let c = upward_crossings(x, dt);
    match c.as_slice() {
        [first, .., last] => Some((last - first) / (c.len() - 1) as f64),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v_max: f64,
    pub v_min: f64,
}

impl Envelope {
    pub fn of(x: &[f64]) -> Option<Self> {
        if x.is_empty() {
            return None;
        }
        let (v_min, v_max) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Some(Self { v_max, v_min })
    }

    pub fn amplitude(&self) -> f64 {
        (self.v_max - self.v_min) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleMetrics {
    /// Half the peak-to-peak excursion (m/s).
    pub amplitude: f64,
    /// Mean cycle length (s); `None` below the oscillation threshold.
    pub period: Option<f64>,
    /// `1 / period` (Hz).
    pub frequency: Option<f64>,
    pub oscillating: bool,
}

impl LimitCycleMetrics {
    pub fn from_series(x: &[f64], dt: f64, threshold: f64) -> Option<Self> {
        let amplitude = Envelope::of(x)?.amplitude();
        let oscillating = amplitude > threshold;
        let period = if oscillating { estimate_period(x, dt) } else { None };
        Some(Self {
            amplitude,
            period,
            frequency: period.map(|p| 1.0 / p),
            oscillating: oscillating && period.is_some(),
        })
    }
}

/// Periods of the auxiliary and the recorded velocity of one follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PeriodReport {
    NotApplicable,
    Compared {
        period_l: f64,
        period_v: f64,
        /// `period_l / period_v`.
        ratio: f64,
        relative_mismatch: f64,
    },
}

impl PeriodReport {
    pub fn from_series(l: &[f64], v: &[f64], dt: f64, threshold: f64) -> Self {
        let osc = |x: &[f64]| Envelope::of(x).is_some_and(|e| e.amplitude() > threshold);
        if !osc(l) && !osc(v) {
            return PeriodReport::NotApplicable;
        }
        match (estimate_period(l, dt), estimate_period(v, dt)) {
            (Some(period_l), Some(period_v)) => PeriodReport::Compared {
                period_l,
                period_v,
                ratio: period_l / period_v,
                relative_mismatch: (period_l - period_v).abs() / period_v,
            },
            _ => PeriodReport::NotApplicable,
        }
    }

    pub fn ratio(&self) -> Option<f64> {
        match self {
            PeriodReport::Compared { ratio, .. } => Some(*ratio),
            PeriodReport::NotApplicable => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BifurcationKind {
    Supercritical,
    Subcritical,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: BifurcationKind,
    /// Parameter value where the fitted squared amplitude vanishes.
    pub onset_estimate: Option<f64>,
    pub r_squared: Option<f64>,
}

impl Classification {
    fn inconclusive() -> Self {
        Self {
            kind: BifurcationKind::Inconclusive,
            onset_estimate: None,
            r_squared: None,
        }
    }
}

/// Number of oscillating points, starting at the onset, used in the fit.
const FIT_POINTS: usize = 4;
const MIN_R_SQUARED: f64 = 0.9;

/// Reads the branch shape off an amplitude curve over an increasing grid.
///
/// The squared amplitude of a supercritical branch grows linearly from the
/// onset, so a line is fitted through `amplitude^2` at the first oscillating
/// points. The branch is supercritical when the fitted onset lies between
/// one step before the last quiet point and the first oscillating point,
/// and subcritical when it lies further left (the amplitude jumped).
pub fn classify_bifurcation(params: &[f64], amplitudes: &[f64], threshold: f64) -> Classification {
    assert_eq!(params.len(), amplitudes.len(), "parameter and amplitude lists differ in length");
    let Some(first) = amplitudes.iter().position(|&a| a > threshold) else {
        return Classification::inconclusive();
    };
    if first == 0 || amplitudes[first..].iter().any(|&a| !(a > threshold)) {
        return Classification::inconclusive();
    }
    let end = (first + FIT_POINTS).min(params.len());
    if end - first < 2 {
        return Classification::inconclusive();
    }
    let xs = &params[first..end];
    let ys: Vec<f64> = amplitudes[first..end].iter().map(|a| a * a).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Classification::inconclusive();
    }
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let onset = mx - my / slope;
    let last_quiet = params[first - 1];
    let step = params[first] - last_quiet;
    let kind = if r_squared < MIN_R_SQUARED {
        BifurcationKind::Inconclusive
    } else if onset < last_quiet - step {
        BifurcationKind::Subcritical
    } else if onset <= params[first] {
        BifurcationKind::Supercritical
    } else {
        BifurcationKind::Inconclusive
    };
    Classification {
        kind,
        onset_estimate: Some(onset),
        r_squared: Some(r_squared),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn period_of_a_sampled_sine() {
        let dt = 1e-3;
        let x: Vec<f64> = (0..20_000).map(|k| (2.0 * PI * k as f64 * dt / 1.7 + 0.3).sin()).collect();
        assert!((estimate_period(&x, dt).unwrap() - 1.7).abs() < 1e-6);
        assert_eq!(estimate_period(&[1.0, 2.0, 3.0], dt), None);
    }

    #[test]
    fn auxiliary_signal_shares_the_period() {
        let (dt, period, gamma, tau) = (1e-3, 2.3, 0.5, 0.77);
        let v = |t: f64| (2.0 * PI * t / period).sin();
        let vs: Vec<f64> = (0..30_000).map(|k| v(k as f64 * dt)).collect();
        let ls: Vec<f64> = (0..30_000)
            .map(|k| {
                let t = k as f64 * dt;
                v(t) - gamma * v(t - tau)
            })
            .collect();
        match PeriodReport::from_series(&ls, &vs, dt, 0.1) {
            PeriodReport::Compared { period_l, ratio, .. } => {
                assert!((period_l - period).abs() < 1e-6);
                assert!((ratio - 1.0).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
        let quiet = vec![0.0; 100];
        assert_eq!(PeriodReport::from_series(&quiet, &quiet, dt, 0.1), PeriodReport::NotApplicable);
    }

    #[test]
    fn metrics_below_threshold_have_no_period() {
        let x: Vec<f64> = (0..5000).map(|k| 1e-3 * (k as f64 * 0.01).sin()).collect();
        let m = LimitCycleMetrics::from_series(&x, 0.01, 0.1).unwrap();
        assert!(!m.oscillating);
        assert_eq!(m.period, None);
        assert!((m.amplitude - 1e-3).abs() < 1e-6);
    }

    fn grid() -> Vec<f64> {
        vec![0.98, 0.99, 1.00, 1.01, 1.02]
    }

    #[test]
    fn square_root_growth_is_supercritical() {
        let c = classify_bifurcation(&grid(), &[0.0, 0.0, 0.01, 0.014, 0.017], 1e-3);
        assert_eq!(c.kind, BifurcationKind::Supercritical);
        assert!(c.r_squared.unwrap() >= 0.9);
    }

    #[test]
    fn jump_is_subcritical() {
        let c = classify_bifurcation(&grid()[..4], &[0.0, 0.0, 0.5, 0.51], 1e-3);
        assert_eq!(c.kind, BifurcationKind::Subcritical);
    }

    #[test]
    fn irregular_curves_are_inconclusive() {
        let c = classify_bifurcation(&grid(), &[0.0, 0.3, 0.0, 0.2, 0.05], 1e-3);
        assert_eq!(c.kind, BifurcationKind::Inconclusive);
        let c = classify_bifurcation(&grid(), &[0.0; 5], 1e-3);
        assert_eq!(c.kind, BifurcationKind::Inconclusive);
        let c = classify_bifurcation(&grid(), &[0.0, 0.0, 0.02, 0.01, 0.03], 1e-3);
        assert_eq!(c.kind, BifurcationKind::Inconclusive);
    }
}
