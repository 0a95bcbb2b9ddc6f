use super::config::ScenarioConfig;
use crate::drm::{self, ProblemInstance, Solution};
use crate::error::{Error, Result};
use crate::geometry::{coverage_probability, solve_transmit_power};
use crate::power::{operator_demand, OperatorDemand};
use crate::spatial::{empirical_coverage, CoverageEstimate};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointStatus {
    Solved,
    /// A QoS target is above its ceiling or the allocation program has no
    /// feasible point.
    Infeasible,
    /// A numerical or solver failure.
    Failed,
}

impl std::fmt::Display for PointStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PointStatus::Solved => "solved",
            PointStatus::Infeasible => "infeasible",
            PointStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorResult {
    /// Per-user transmit power meeting the coverage target, watts.
    pub transmit_power: f64,
    /// Analytic coverage at that power.
    pub coverage: f64,
    pub mc: Option<CoverageEstimate>,
    pub demand: OperatorDemand,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// `None` for a run without a sweep.
    pub axis_value: Option<f64>,
    pub status: PointStatus,
    pub reason: Option<String>,
    /// Filled for every operator whose power solve succeeded.
    pub operators: Vec<Option<OperatorResult>>,
    pub instance: Option<ProblemInstance>,
    pub solution: Option<Solution>,
}

impl SweepResult {
    pub fn feasible(&self) -> bool {
        self.status == PointStatus::Solved
    }
}

/// Runs every sweep point (or the single configured point), in parallel.
/// Results come back in ascending axis order and depend only on the
/// configuration and its seeds.
pub fn run_pipeline(cfg: &ScenarioConfig) -> Vec<SweepResult> {
    if cfg.sweep.is_none() {
        return vec![run_point(cfg, None)];
    }
    cfg.sweep_values()
        .into_par_iter()
        .map(|v| match cfg.at(v) {
            Ok(point) => run_point(&point, Some(v)),
            Err(e) => failed(cfg, Some(v), PointStatus::Failed, e.to_string()),
        })
        .collect()
}

fn failed(cfg: &ScenarioConfig, axis_value: Option<f64>, status: PointStatus, reason: String) -> SweepResult {
    SweepResult {
        axis_value,
        status,
        reason: Some(reason),
        operators: vec![None; cfg.operators.len()],
        instance: None,
        solution: None,
    }
}

fn classify(e: &Error) -> PointStatus {
    match e {
        Error::InfeasibleQos { .. } | Error::Infeasible(_) => PointStatus::Infeasible,
        _ => PointStatus::Failed,
    }
}

fn run_point(cfg: &ScenarioConfig, axis_value: Option<f64>) -> SweepResult {
    let per_op: Vec<Result<OperatorResult>> = cfg
        .operators
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let p = solve_transmit_power(op, &cfg.physics)?;
            let coverage = coverage_probability(op, &cfg.physics, p)?;
            let demand = operator_demand(op, &cfg.physics, &cfg.power_model, p)?;
            let mc = match cfg.mc {
                Some(mc) => Some(empirical_coverage(op, &cfg.physics, p, mc.trials, mc.seed.wrapping_add(i as u64))?),
                None => None,
            };
            Ok(OperatorResult { transmit_power: p, coverage, mc, demand })
        })
        .collect();

    let first_err = per_op
        .iter()
        .zip(&cfg.operators)
        .find_map(|(r, op)| r.as_ref().err().map(|e| (classify(e), format!("{}: {e}", op.id))));
    let operators: Vec<Option<OperatorResult>> = per_op.into_iter().map(Result::ok).collect();
    if let Some((status, reason)) = first_err {
        return SweepResult { operators, ..failed(cfg, axis_value, status, reason) };
    }

    let demands = operators.iter().map(|o| o.as_ref().unwrap().demand.clone()).collect();
    let outcome = cfg
        .instance(demands)
        .and_then(|inst| drm::solve(&inst, &cfg.solver.options()).map(|sol| (inst, sol)));
    match outcome {
        Ok((inst, sol)) => SweepResult {
            axis_value,
            status: PointStatus::Solved,
            reason: None,
            operators,
            instance: Some(inst),
            solution: Some(sol),
        },
        Err(e) => SweepResult { operators, ..failed(cfg, axis_value, classify(&e), e.to_string()) },
    }
}
