use super::PlatoonConfig;
use serde::Serialize;
use std::fmt;

/// One violated parameter constraint. Vehicle indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoFollowers,
    NeutralCondition { vehicle: usize, gamma: f64 },
    NegativeGamma { vehicle: usize, gamma: f64 },
    NonPositiveAlpha { vehicle: usize, alpha: f64 },
    NonPositiveTau { vehicle: usize, tau: f64 },
    NonPositiveSeparation { vehicle: usize, b: f64 },
    VelocityExponent { m: f64 },
    HeadwayExponent { l: f64 },
    Leader { message: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoFollowers => write!(f, "platoon needs at least one follower"),
            Violation::NeutralCondition { vehicle, gamma } => {
                write!(f, "vehicle {vehicle}: gamma = {gamma} violates the neutral condition γ < 1")
            }
            Violation::NegativeGamma { vehicle, gamma } => {
                write!(f, "vehicle {vehicle}: gamma = {gamma} must be non-negative")
            }
            Violation::NonPositiveAlpha { vehicle, alpha } => {
                write!(f, "vehicle {vehicle}: alpha = {alpha} must be positive")
            }
            Violation::NonPositiveTau { vehicle, tau } => {
                write!(f, "vehicle {vehicle}: reaction delay tau = {tau} s must be positive")
            }
            Violation::NonPositiveSeparation { vehicle, b } => {
                write!(f, "vehicle {vehicle}: desired separation b = {b} m must be positive")
            }
            Violation::VelocityExponent { m } => write!(f, "m = {m} outside m ∈ [−2,2]"),
            Violation::HeadwayExponent { l } => write!(f, "l = {l} must satisfy l ≥ 0"),
            Violation::Leader { message } => write!(f, "{message}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "configuration is valid");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Collects every violated parameter constraint of `config`.
pub fn validate_config(config: &PlatoonConfig) -> ValidationReport {
    let mut violations = Vec::new();
    if config.vehicles.is_empty() {
        violations.push(Violation::NoFollowers);
    }
    for (idx, p) in config.vehicles.iter().enumerate() {
        let vehicle = idx + 1;
        if !positive(p.alpha) {
            violations.push(Violation::NonPositiveAlpha { vehicle, alpha: p.alpha });
        }
        if !positive(p.tau) {
            violations.push(Violation::NonPositiveTau { vehicle, tau: p.tau });
        }
        if !positive(p.b) {
            violations.push(Violation::NonPositiveSeparation { vehicle, b: p.b });
        }
        if !(p.gamma >= 0.0) {
            violations.push(Violation::NegativeGamma { vehicle, gamma: p.gamma });
        } else if p.gamma >= 1.0 {
            violations.push(Violation::NeutralCondition { vehicle, gamma: p.gamma });
        }
    }
    let m = config.exponents.m;
    if !(-2.0..=2.0).contains(&m) {
        violations.push(Violation::VelocityExponent { m });
    }
    let l = config.exponents.l;
    if !(l >= 0.0 && l.is_finite()) {
        violations.push(Violation::HeadwayExponent { l });
    }
    violations.extend(
        config
            .leader
            .problems()
            .into_iter()
            .map(|message| Violation::Leader { message }),
    );
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LeaderProfile, ModelExponents, VehicleParams};

    fn base() -> PlatoonConfig {
        PlatoonConfig::new(
            vec![VehicleParams::new(0.1, 0.6, 0.0, 1.0), VehicleParams::new(0.5, 1.0, 0.5, 1.0)],
            ModelExponents::new(1.5, 1.0),
            LeaderProfile::constant(2.0),
        )
    }

    #[test]
    fn valid_config_has_no_violations() {
        let r = validate_config(&base());
        assert!(r.is_valid(), "{r}");
        assert_eq!(r.to_string(), "configuration is valid");
    }

    #[test]
    fn gamma_of_one_breaks_neutral_condition() {
        let mut c = base();
        c.vehicles[1].gamma = 1.0;
        let r = validate_config(&c);
        assert_eq!(r.violations, vec![Violation::NeutralCondition { vehicle: 2, gamma: 1.0 }]);
        assert!(r.to_string().contains("neutral condition γ < 1"));
    }

    #[test]
    fn exponent_outside_range_is_flagged() {
        let mut c = base();
        c.exponents.m = 3.0;
        let r = validate_config(&c);
        assert_eq!(r.violations, vec![Violation::VelocityExponent { m: 3.0 }]);
        assert!(r.to_string().contains("m ∈ [−2,2]"));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut c = base();
        c.vehicles[0] = VehicleParams::new(-1.0, 0.0, -0.1, 0.0);
        c.exponents.l = -1.0;
        c.leader = LeaderProfile::constant(-3.0);
        let r = validate_config(&c);
        assert_eq!(r.violations.len(), 6, "{r}");

        let empty = PlatoonConfig::new(vec![], ModelExponents::new(0.0, 0.0), LeaderProfile::constant(1.0));
        assert_eq!(validate_config(&empty).violations, vec![Violation::NoFollowers]);
    }
}
