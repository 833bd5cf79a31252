//! Versioned TOML scenario files.

use crate::error::CliError;
use ccfm_core::analysis::{linspace, FrequencyGrid, UncertainBeta, CHART_EPSILON};
use ccfm_core::dde::{IntegrationSettings, PlatoonHistory};
use ccfm_core::model::{validate_config, AccelSegment, LeaderProfile, ModelExponents, PlatoonConfig, VehicleParams};
use ccfm_core::sweep::{calibrate_leader_velocity, SweepParameter, SweepSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub platoon: PlatoonSection,
    pub leader: LeaderSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration: Option<IntegrationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<HistorySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonSection {
    /// Velocity exponent.
    pub m: f64,
    /// Headway exponent.
    pub l: f64,
    pub vehicles: Vec<VehicleEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleEntry {
    pub alpha: f64,
    pub tau: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub b: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSection {
    /// Leader velocity at t = 0 (m/s).
    pub velocity: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentEntry>,
    /// Shift the profile so this follower's critical delay takes the given value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrationEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub start: f64,
    pub end: f64,
    pub accel: f64,
    /// Acceleration at `end` for a linear ramp; defaults to `accel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel_end: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationEntry {
    pub vehicle: usize,
    pub tau_cr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub h: f64,
    pub horizon: f64,
    /// Defaults to half the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient_cut: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySection {
    #[serde(default)]
    pub perturbations: Vec<PerturbationEntry>,
}

/// Constant offset of one follower on the initial interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationEntry {
    pub vehicle: usize,
    #[serde(default)]
    pub velocity: f64,
    #[serde(default)]
    pub headway: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub vehicle: usize,
    pub parameter: SweepParameter,
    pub grid: GridEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_family: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate_tau_cr: Option<f64>,
    pub perturbation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_factor: Option<f64>,
}

/// Either explicit values or `points` evenly spaced values on `[start, stop]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridEntry {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl GridEntry {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridEntry::Values(v) => v.clone(),
            GridEntry::Range { start, stop, points } => linspace(*start, *stop, *points),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// `[lower, upper]` per follower, or a single interval for all of them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta_uncertainty: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_grid: Option<FrequencyGridEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSection {
    #[serde(default = "one")]
    pub beta_star: f64,
    pub gamma_start: f64,
    pub gamma_stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyGridEntry {
    pub points: usize,
    pub window_multiplier: f64,
    pub refine_points: usize,
}

/// Default chart grid when neither the scenario nor the flags give one.
pub const DEFAULT_CHART_POINTS: usize = 1001;

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            CliError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// SHA-256 of the canonical JSON form; insensitive to formatting and
    /// comments in the source file.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes to JSON");
        let mut out = String::with_capacity(64);
        for byte in Sha256::digest(canonical.as_bytes()) {
            write!(out, "{byte:02x}").unwrap();
        }
        out
    }

    /// Platoon as written, before any leader calibration.
    pub fn raw_config(&self) -> PlatoonConfig {
        let vehicles = self
            .platoon
            .vehicles
            .iter()
            .map(|v| VehicleParams::new(v.alpha, v.tau, v.gamma, v.b))
            .collect();
        let segments = self
            .leader
            .segments
            .iter()
            .map(|s| AccelSegment::linear(s.start, s.end, s.accel, s.accel_end.unwrap_or(s.accel)))
            .collect();
        PlatoonConfig::new(
            vehicles,
            ModelExponents::new(self.platoon.m, self.platoon.l),
            LeaderProfile::with_segments(self.leader.velocity, segments),
        )
    }

    /// Platoon with the leader calibration applied.
    pub fn config(&self) -> Result<PlatoonConfig, CliError> {
        let mut config = self.raw_config();
        if let Some(cal) = self.leader.calibrate {
            let v0 = calibrate_leader_velocity(&config, cal.vehicle, cal.tau_cr).map_err(|e| CliError::Invalid(vec![e.to_string()]))?;
            config.leader = config.leader.with_terminal_velocity(v0);
        }
        Ok(config)
    }

    /// Every problem found in the document, empty when it is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let raw = self.raw_config();
        let report = validate_config(&raw);
        out.extend(report.violations.iter().map(|v| v.to_string()));
        if !report.is_valid() {
            return out;
        }
        let n = raw.n();
        let in_range = |v: usize| (1..=n).contains(&v);
        if let Some(cal) = self.leader.calibrate {
            if !in_range(cal.vehicle) {
                out.push(format!("leader.calibrate.vehicle {} outside 1..={n}", cal.vehicle));
            } else if let Err(e) = self.config() {
                out.push(e.to_string());
            }
        }
        if let Some(integration) = &self.integration {
            if let Err(e) = self.settings_from(integration).check(raw.min_delay()) {
                out.push(e.to_string());
            }
        }
        if let Some(history) = &self.history {
            for p in &history.perturbations {
                if !in_range(p.vehicle) {
                    out.push(format!("history perturbation vehicle {} outside 1..={n}", p.vehicle));
                }
                if !(p.velocity.is_finite() && p.headway.is_finite()) {
                    out.push(format!("history perturbation of vehicle {} must be finite", p.vehicle));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if let Err(e) = self.sweep_spec_unchecked(sweep).check() {
                out.push(e.to_string());
            }
            if sweep.gamma_family.iter().any(|g| !(0.0..1.0).contains(g)) {
                out.push("sweep.gamma_family values must lie in [0, 1) (neutral condition γ < 1)".into());
            }
            if self.integration.is_none() {
                out.push("a sweep needs an [integration] section".into());
            }
        }
        if let Some(analysis) = &self.analysis {
            let k = analysis.beta_uncertainty.len();
            if k > 1 && k != n {
                out.push(format!("analysis.beta_uncertainty lists {k} intervals for {n} followers"));
            }
            for [lo, hi] in &analysis.beta_uncertainty {
                if let Err(e) = UncertainBeta::new(*lo, *hi) {
                    out.push(e.to_string());
                }
            }
            if let Some(chart) = &analysis.chart {
                if let Err(e) = check_chart_grid(chart.gamma_start, chart.gamma_stop, chart.points) {
                    out.push(e);
                }
                if !(chart.beta_star > 0.0 && chart.beta_star.is_finite()) {
                    out.push(format!("analysis.chart.beta_star = {} must be positive", chart.beta_star));
                }
            }
            if let Some(f) = analysis.frequency_grid {
                if f.points < 3 || !(f.window_multiplier > 0.0) {
                    out.push("analysis.frequency_grid needs at least 3 points and a positive window".into());
                }
            }
        }
        out
    }

    /// Fails with every problem when the scenario is unusable.
    pub fn ensure_valid(&self) -> Result<(), CliError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(problems))
        }
    }

    fn settings_from(&self, s: &IntegrationSection) -> IntegrationSettings {
        let mut out = IntegrationSettings::new(s.h, s.horizon);
        if let Some(cut) = s.transient_cut {
            out.transient_cut = cut;
        }
        if let Some(floor) = s.separation_floor {
            out.separation_floor = floor;
        }
        out
    }

    pub fn settings(&self) -> Result<IntegrationSettings, CliError> {
        self.integration
            .as_ref()
            .map(|s| self.settings_from(s))
            .ok_or_else(|| CliError::Invalid(vec!["scenario has no [integration] section".into()]))
    }

    pub fn initial_history(&self) -> PlatoonHistory {
        let n = self.platoon.vehicles.len();
        let mut h = PlatoonHistory::equilibrium(n);
        for p in self.history.iter().flat_map(|h| &h.perturbations) {
            h = h.with_velocity(p.vehicle, p.velocity).with_headway(p.vehicle, p.headway);
        }
        h
    }

    fn sweep_spec_unchecked(&self, s: &SweepSection) -> SweepSpec {
        SweepSpec {
            base: self.raw_config(),
            vehicle: s.vehicle,
            parameter: s.parameter,
            grid: s.grid.values(),
            gamma_family: s.gamma_family.clone(),
            calibrate_tau_cr: s.calibrate_tau_cr,
            perturbation: s.perturbation,
            threshold_factor: s.threshold_factor.unwrap_or(10.0),
        }
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| CliError::Invalid(vec!["scenario has no [sweep] section".into()]))?;
        let mut spec = self.sweep_spec_unchecked(s);
        spec.base = self.config()?;
        Ok(spec)
    }

    pub fn frequency_grid(&self) -> FrequencyGrid {
        match self.analysis.as_ref().and_then(|a| a.frequency_grid) {
            Some(f) => FrequencyGrid {
                points: f.points,
                window_multiplier: f.window_multiplier,
                refine_points: f.refine_points,
            },
            None => FrequencyGrid::default(),
        }
    }

    /// Uncertainty interval for a 1-based follower, if any were given.
    pub fn uncertainty(&self, vehicle: usize) -> Option<[f64; 2]> {
        let list = &self.analysis.as_ref()?.beta_uncertainty;
        match list.len() {
            0 => None,
            1 => Some(list[0]),
            _ => list.get(vehicle - 1).copied(),
        }
    }

    /// Chart grid and `beta*`: flags first, then the scenario, then
    /// `[eps, 1 - eps]` with `DEFAULT_CHART_POINTS` points at `beta* = 1`.
    pub fn chart_grid(&self, flag: Option<ChartGridFlag>) -> (Vec<f64>, f64) {
        let chart = self.analysis.as_ref().and_then(|a| a.chart);
        let beta = chart.map_or(1.0, |c| c.beta_star);
        let grid = match (flag, chart) {
            (Some(f), _) => linspace(f.start, f.stop, f.points),
            (None, Some(c)) => linspace(c.gamma_start, c.gamma_stop, c.points),
            (None, None) => linspace(CHART_EPSILON, 1.0 - CHART_EPSILON, DEFAULT_CHART_POINTS),
        };
        (grid, beta)
    }
}

/// `--gamma-grid a:b:n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartGridFlag {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl std::str::FromStr for ChartGridFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("expected a:b:n, got {s:?}"));
        };
        let start: f64 = a.trim().parse().map_err(|e| format!("start {a:?}: {e}"))?;
        let stop: f64 = b.trim().parse().map_err(|e| format!("stop {b:?}: {e}"))?;
        let points: usize = n.trim().parse().map_err(|e| format!("count {n:?}: {e}"))?;
        check_chart_grid(start, stop, points)?;
        Ok(Self { start, stop, points })
    }
}

fn check_chart_grid(start: f64, stop: f64, points: usize) -> Result<(), String> {
    if !(0.0 <= start && start < stop && stop < 1.0) {
        return Err(format!("gamma grid needs 0 ≤ a < b < 1, got a = {start}, b = {stop}"));
    }
    if points < 2 {
        return Err(format!("gamma grid needs at least 2 points, got {points}"));
    }
    Ok(())
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}
