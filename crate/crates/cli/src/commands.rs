use crate::error::CliError;
use crate::output::{full, optional, sig15, OutputSet, RunManifest};
use crate::scenario::{ChartGridFlag, Scenario};
use ccfm_core::analysis::{
    frequency_comparison, is_locally_stable, non_oscillation_check, robust_stability_bound, stability_chart,
    string_stability_report, AnalysisError, FrequencyComparison, LocalVerdict, Oscillation, StringStabilityReport,
    UncertainBeta,
};
use ccfm_core::dde::{
    headway_component, integrate_neutral, solve, velocity_component, FnHistory, IntegrationSettings, LinearDelay,
    Trajectory, TrajectoryMeta,
};
use ccfm_core::sweep::{bifurcation_diagram, PointStatus, SweepParameter, SweepResult};
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::sync::Arc;

/// Outcome of a subcommand: the human summary printed on stdout.
pub type CmdResult = Result<String, CliError>;

fn finish(mut out: OutputSet, subcommand: &str, scenario_hash: String, summary: String) -> CmdResult {
    let manifest = RunManifest::new(subcommand, scenario_hash, out.files());
    out.json(&RunManifest::file_name(subcommand), &manifest)?;
    Ok(summary)
}

fn analysis_error(err: AnalysisError) -> CliError {
    fn numerical(e: &AnalysisError) -> bool {
        match e {
            AnalysisError::Continuation { .. } => true,
            AnalysisError::Vehicle { source, .. } => numerical(source),
            _ => false,
        }
    }
    if numerical(&err) {
        CliError::Numerical(err.to_string())
    } else {
        CliError::Domain(err.to_string())
    }
}

#[derive(Debug, Serialize)]
struct ValidationOutput {
    valid: bool,
    problems: Vec<String>,
}

/// Parses and validates; an invalid scenario is reported and returned as an error.
pub fn validate(scenario_path: &Path, out_dir: Option<&Path>) -> CmdResult {
    let scenario = Scenario::load(scenario_path)?;
    let problems = scenario.problems();
    if let Some(dir) = out_dir {
        let mut out = OutputSet::create(dir)?;
        out.json(
            "validation.json",
            &ValidationOutput {
                valid: problems.is_empty(),
                problems: problems.clone(),
            },
        )?;
        finish(out, "validate", scenario.hash(), String::new())?;
    }
    if problems.is_empty() {
        Ok(format!("{}: valid (hash {})", scenario_path.display(), scenario.hash()))
    } else {
        Err(CliError::Invalid(problems))
    }
}

#[derive(Debug, Serialize)]
pub struct VehicleStability {
    #[serde(flatten)]
    pub local: LocalVerdict,
    pub tau: f64,
    pub gamma: f64,
    pub non_oscillation: Oscillation,
    pub frequency: FrequencyComparison,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust: Option<RobustEntry>,
}

#[derive(Debug, Serialize)]
pub struct RobustEntry {
    pub lower: f64,
    pub upper: f64,
    /// Necessary delay bound for every `beta*` in the interval.
    pub tau_bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Serialize)]
pub struct StabilityOutput {
    pub leader_terminal_velocity: f64,
    pub all_locally_stable: bool,
    pub vehicles: Vec<VehicleStability>,
    pub string_stability: StringStabilityReport,
}

pub fn stability_report(scenario: &Scenario) -> Result<StabilityOutput, CliError> {
    scenario.ensure_valid()?;
    let config = scenario.config()?;
    let local = is_locally_stable(&config).map_err(analysis_error)?;
    let mut vehicles = Vec::with_capacity(local.len());
    for (verdict, p) in local.into_iter().zip(&config.vehicles) {
        let vehicle = verdict.vehicle;
        let at = |e: AnalysisError| analysis_error(e.at(vehicle));
        let frequency = frequency_comparison(verdict.beta_star, p.gamma).map_err(at)?;
        let robust = match scenario.uncertainty(vehicle) {
            Some([lower, upper]) => {
                let interval = UncertainBeta::new(lower, upper).map_err(at)?;
                let tau_bound = robust_stability_bound(p.gamma, interval).map_err(at)?;
                Some(RobustEntry {
                    lower,
                    upper,
                    tau_bound,
                    satisfied: p.tau < tau_bound,
                })
            }
            None => None,
        };
        vehicles.push(VehicleStability {
            non_oscillation: non_oscillation_check(verdict.beta_star, p.tau, p.gamma),
            local: verdict,
            tau: p.tau,
            gamma: p.gamma,
            frequency,
            robust,
        });
    }
    let string_stability = string_stability_report(&config, &scenario.frequency_grid()).map_err(analysis_error)?;
    Ok(StabilityOutput {
        leader_terminal_velocity: config.leader.terminal_velocity(),
        all_locally_stable: vehicles.iter().all(|v| v.local.verdict.is_stable()),
        vehicles,
        string_stability,
    })
}

pub fn stability(scenario_path: &Path, out_dir: &Path) -> CmdResult {
    let scenario = Scenario::load(scenario_path)?;
    let report = stability_report(&scenario)?;
    let mut out = OutputSet::create(out_dir)?;
    out.json("stability.json", &report)?;
    let summary = format!(
        "locally stable: {}, string stable (numeric): {}",
        report.all_locally_stable, report.string_stability.numeric_ok
    );
    finish(out, "stability", scenario.hash(), summary)
}

pub const CHART_HEADER: [&str; 3] = ["gamma", "tau_cr", "beta_tau_cr"];

/// Chart rows at 15 significant digits.
pub fn chart_rows(grid: &[f64], beta_star: f64) -> Result<Vec<Vec<String>>, CliError> {
    let points = stability_chart(grid, beta_star).map_err(analysis_error)?;
    Ok(points
        .iter()
        .map(|p| vec![sig15(p.gamma), sig15(p.tau_cr), sig15(p.normalized)])
        .collect())
}

pub fn chart(scenario_path: &Path, out_dir: &Path, flag: Option<ChartGridFlag>) -> CmdResult {
    let scenario = Scenario::load(scenario_path)?;
    scenario.ensure_valid()?;
    let (grid, beta) = scenario.chart_grid(flag);
    let rows = chart_rows(&grid, beta)?;
    let mut out = OutputSet::create(out_dir)?;
    let header: Vec<String> = CHART_HEADER.iter().map(|s| s.to_string()).collect();
    let n = out.csv("chart.csv", &header, rows)?;
    finish(out, "chart", scenario.hash(), format!("{n} chart rows at beta* = {beta}"))
}

fn trajectory_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("v_{i}")))
        .chain((1..=n).map(|i| format!("y_{i}")))
        .collect()
}

fn trajectory_rows(traj: &Trajectory, n: usize, stride: usize) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..traj.len()).step_by(stride.max(1)).map(move |k| {
        let buf = &traj.buffer;
        std::iter::once(full(buf.time(k)))
            .chain((1..=n).map(|i| full(buf.node_value(k, velocity_component(i)))))
            .chain((1..=n).map(|i| full(buf.node_value(k, headway_component(n, i)))))
            .collect()
    })
}

pub fn simulate(scenario_path: &Path, out_dir: &Path, stride: usize) -> CmdResult {
    let scenario = Scenario::load(scenario_path)?;
    scenario.ensure_valid()?;
    let config = scenario.config()?;
    let settings = scenario.settings()?;
    let n = config.n();
    let mut out = OutputSet::create(out_dir)?;
    let header = trajectory_header(n);
    match integrate_neutral(&config, Arc::new(scenario.initial_history()), &settings) {
        Ok(traj) => {
            let rows = out.csv("trajectory.csv", &header, trajectory_rows(&traj, n, stride))?;
            finish(out, "simulate", scenario.hash(), format!("{rows} rows to t = {}", traj.end_time()))
        }
        Err(failure) => {
            let rows = match &failure.partial {
                Some(partial) => out.csv("trajectory.csv", &header, trajectory_rows(partial, n, stride))?,
                None => 0,
            };
            finish(out, "simulate", scenario.hash(), String::new())?;
            Err(CliError::Numerical(format!(
                "{}; wrote {rows} rows of partial output",
                failure.cause
            )))
        }
    }
}

/// Test hook: integrates `x'(t) = -(pi/2) x(t - 1)` from the history
/// `cos(pi t / 2)` and writes `t, x` through the trajectory writer.
/// The exact solution is `cos(pi t / 2)`.
pub fn simulate_scalar_oracle(settings: &IntegrationSettings, out_dir: &Path, stride: usize) -> CmdResult {
    let system = LinearDelay { a: -FRAC_PI_2, tau: 1.0 };
    let history = Arc::new(FnHistory::new(
        |t: f64, _| (FRAC_PI_2 * t).cos(),
        |t: f64, _| -FRAC_PI_2 * (FRAC_PI_2 * t).sin(),
    ));
    let traj = solve(&system, None, history, None, settings, TrajectoryMeta::default())
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut out = OutputSet::create(out_dir)?;
    let header = vec!["t".to_string(), "x".to_string()];
    let rows = (0..traj.len())
        .step_by(stride.max(1))
        .map(|k| vec![full(traj.time(k)), full(traj.buffer.node_value(k, 0))]);
    let n = out.csv("oracle.csv", &header, rows)?;
    finish(out, "simulate", "scalar-oracle".into(), format!("{n} rows"))
}

pub fn parameter_column(parameter: SweepParameter, vehicle: usize) -> String {
    match parameter {
        SweepParameter::Delay => format!("tau_{vehicle}"),
        SweepParameter::Gamma => format!("gamma_{vehicle}"),
        SweepParameter::GainScale => "gain_scale".into(),
    }
}

pub fn sweep_header(result: &SweepResult) -> Vec<String> {
    [
        "gamma",
        &parameter_column(result.parameter, result.vehicle),
        "status",
        "v_min",
        "v_max",
        "amplitude",
        "period",
        "oscillating",
        "period_ratio",
        "envelope_growth",
        "message",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

pub fn sweep_rows(result: &SweepResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for curve in &result.curves {
        for p in &curve.points {
            let (status, message) = match &p.status {
                PointStatus::Ok => ("ok", String::new()),
                PointStatus::Failed { message } => ("failed", message.clone()),
            };
            rows.push(vec![
                full(curve.gamma),
                full(p.value),
                status.into(),
                optional(p.envelope.map(|e| e.v_min)),
                optional(p.envelope.map(|e| e.v_max)),
                optional(p.amplitude()),
                optional(p.metrics.and_then(|m| m.period)),
                p.metrics.map(|m| m.oscillating.to_string()).unwrap_or_default(),
                optional(p.period_check.and_then(|c| c.ratio())),
                optional(p.envelope_growth),
                message,
            ]);
        }
    }
    rows
}

#[derive(Debug, Serialize)]
struct CurveSummary<'a> {
    gamma: f64,
    leader_velocity: f64,
    beta_star: f64,
    hopf: &'a ccfm_core::analysis::HopfPoint,
    classification: &'a ccfm_core::sweep::Classification,
    failed_points: usize,
}

pub fn sweep(scenario_path: &Path, out_dir: &Path, workers: usize) -> CmdResult {
    let scenario = Scenario::load(scenario_path)?;
    scenario.ensure_valid()?;
    let spec = scenario.sweep_spec()?;
    let settings = scenario.settings()?;
    let result = bifurcation_diagram(&spec, &settings, workers).map_err(|e| CliError::Domain(e.to_string()))?;
    let mut out = OutputSet::create(out_dir)?;
    let rows = out.csv("sweep.csv", &sweep_header(&result), sweep_rows(&result))?;
    let summaries: Vec<CurveSummary> = result
        .curves
        .iter()
        .map(|c| CurveSummary {
            gamma: c.gamma,
            leader_velocity: c.leader_velocity,
            beta_star: c.beta_star,
            hopf: &c.hopf,
            classification: &c.classification,
            failed_points: c.points.iter().filter(|p| p.status != PointStatus::Ok).count(),
        })
        .collect();
    out.json("classification.json", &summaries)?;
    let failed: usize = summaries.iter().map(|s| s.failed_points).sum();
    let summary = format!("{rows} sweep rows, {failed} failed points");
    finish(out, "sweep", scenario.hash(), summary)
}
