//! Emissions-constrained α-fair allocation of supplier energy to operators.
//!
//! The program chooses `Q ≥ 0` to maximize `U(Π(Q))` subject to
//!
//! * capacity: `Σ_l κ_l q(n,l) ≤ Q̄_n` per supplier,
//! * balance: `Σ_n q(n,l) = D_l` per operator,
//! * emissions: `Σ_n Σ_l ε_l (ψ_n q² + φ_n q) ≤ C_th`.
//!
//! The Lagrangian is written `L = U − Σ δ_n·cap_n − ζ·em + Σ ξ_l·(Σ_n q − D_l)`,
//! so `δ, ζ ≥ 0` and `ξ` is free. For max-min fairness the objective is the
//! epigraph form `max t s.t. t ≤ Π_n`, whose multipliers `θ` lie on the simplex.
//!
//! Solvers: [`solve_closed_form`] (stationarity formulas for α ∈ {0, 1, ∞}),
//! [`solve_dual_subgradient`] (general α, optionally polished by an
//! interior-point method), and [`brute_force_oracle`] (exhaustive grid).
//! [`solve`] dispatches between them.

mod closed_form;
mod inner;
mod instance;
mod ipm;
mod kkt;
mod multistart;
mod oracle;
mod scaled;
mod subgradient;

pub use closed_form::{solve_closed_form, solve_closed_form_with, ClosedFormOptions};
pub use instance::{
    CapacityConvention, ProblemInstance, Violations, BALANCE_REL_TOL, CAPACITY_TOL, EMISSIONS_TOL,
};
pub use kkt::kkt_residual;
pub use oracle::brute_force_oracle;
pub use subgradient::{solve_dual_subgradient, solve_dual_subgradient_with, SubgradientOptions};

use crate::error::{Error, Result};
use crate::market::AllocationMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// Profit floor (MU) applied inside log/power utilities while iterating, so
/// a supplier momentarily earning nothing does not leave the domain.
pub const PROFIT_FLOOR: f64 = 1e-6;

/// The α of α-fairness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fairness {
    /// Finite `α ≥ 0`.
    Alpha(f64),
    /// `α = ∞`: maximize the minimum profit.
    MaxMin,
}

impl Fairness {
    /// Builds from a numeric α; `f64::INFINITY` selects max-min.
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha == f64::INFINITY {
            Ok(Fairness::MaxMin)
        } else if alpha.is_finite() && alpha >= 0.0 {
            Ok(Fairness::Alpha(alpha))
        } else {
            Err(Error::InvalidArgument(format!("fairness α must be >= 0 or ∞, got {alpha}")))
        }
    }

    pub fn alpha(self) -> f64 {
        match self {
            Fairness::Alpha(a) => a,
            Fairness::MaxMin => f64::INFINITY,
        }
    }

    /// True when the utility needs strictly positive profits.
    pub fn needs_positive_profit(self) -> bool {
        self.alpha() > 0.0
    }
}

impl fmt::Display for Fairness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fairness::Alpha(a) => write!(f, "{a}"),
            Fairness::MaxMin => f.write_str("inf"),
        }
    }
}

impl Serialize for Fairness {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Fairness::Alpha(a) => s.serialize_f64(*a),
            Fairness::MaxMin => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Fairness {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let alpha = match Raw::deserialize(d)? {
            Raw::Num(a) => a,
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "max-min") => f64::INFINITY,
            Raw::Text(t) => {
                return Err(serde::de::Error::custom(format!(
                    "expected a number >= 0 or \"inf\", got \"{t}\""
                )))
            }
        };
        Fairness::new(alpha).map_err(serde::de::Error::custom)
    }
}

/// α-fair utility of a profit vector.
pub fn utility(profits: &[f64], fairness: Fairness) -> Result<f64> {
    if profits.is_empty() {
        return Err(Error::InvalidArgument("utility of an empty profit vector".into()));
    }
    if let Some(p) = profits.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite profit {p}")));
    }
    if fairness.needs_positive_profit() {
        if let Some((n, p)) = profits.iter().enumerate().find(|(_, p)| **p <= 0.0) {
            return Err(Error::Domain(format!(
                "supplier {n} has profit {p}; α = {fairness} needs strictly positive profits"
            )));
        }
    }
    Ok(utility_unchecked(profits, fairness))
}

pub(crate) fn utility_unchecked(profits: &[f64], fairness: Fairness) -> f64 {
    match fairness {
        Fairness::MaxMin => profits.iter().copied().fold(f64::INFINITY, f64::min),
        Fairness::Alpha(a) => profits.iter().map(|&p| alpha_term(p, a)).sum(),
    }
}

fn alpha_term(p: f64, a: f64) -> f64 {
    if a == 0.0 {
        p
    } else if a == 1.0 {
        p.ln()
    } else {
        p.powf(1.0 - a) / (1.0 - a)
    }
}

/// Lagrange multipliers in the units of the original problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Capacity multipliers, one per supplier, `≥ 0`.
    pub delta: Vec<f64>,
    /// Balance multipliers, one per operator, free sign.
    pub xi: Vec<f64>,
    /// Emissions multiplier, `≥ 0`.
    pub zeta: f64,
    /// Max-min weights on the simplex; empty unless the fairness is max-min.
    pub theta: Vec<f64>,
}

impl DualState {
    /// All-zero multipliers with uniform `θ` where applicable.
    pub fn zeros(inst: &ProblemInstance) -> Self {
        let n_r = inst.n_suppliers();
        Self {
            delta: vec![0.0; n_r],
            xi: vec![0.0; inst.n_operators()],
            zeta: 0.0,
            theta: match inst.fairness {
                Fairness::MaxMin => vec![1.0 / n_r as f64; n_r],
                Fairness::Alpha(_) => Vec::new(),
            },
        }
    }

    pub fn validate(&self, inst: &ProblemInstance) -> Result<()> {
        let (n_r, n_op) = (inst.n_suppliers(), inst.n_operators());
        if self.delta.len() != n_r || self.xi.len() != n_op {
            return Err(Error::DimensionMismatch(format!(
                "duals sized ({}, {}) for a {n_r}×{n_op} instance",
                self.delta.len(),
                self.xi.len()
            )));
        }
        let expected_theta = if inst.fairness == Fairness::MaxMin { n_r } else { 0 };
        if self.theta.len() != expected_theta {
            return Err(Error::DimensionMismatch(format!(
                "θ has {} entries, expected {expected_theta}",
                self.theta.len()
            )));
        }
        let bad = |v: &f64| !(v.is_finite() && *v >= 0.0);
        if self.delta.iter().any(bad) || bad(&self.zeta) || self.theta.iter().any(bad) {
            return Err(Error::InvalidArgument("δ, ζ and θ must be finite and >= 0".into()));
        }
        if self.xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("ξ must be finite".into()));
        }
        if !self.theta.is_empty() {
            let s: f64 = self.theta.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("θ sums to {s}, expected 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ClosedForm,
    Subgradient,
    /// Subgradient warm start followed by the interior-point polish.
    InteriorPoint,
    Oracle,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::ClosedForm => "closed-form",
            SolveMethod::Subgradient => "subgradient",
            SolveMethod::InteriorPoint => "interior-point",
            SolveMethod::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: SolveMethod,
    /// Iterations of the method that produced the allocation (subgradient
    /// plus polish iterations, or grid evaluations for the oracle).
    pub iterations: usize,
    pub converged: bool,
    /// Largest constraint violation, each relative to its right-hand side.
    pub max_violation: f64,
    /// KKT residual of the returned allocation and duals.
    pub kkt_residual: f64,
    /// Best Lagrangian dual value seen, when available.
    pub dual_bound: Option<f64>,
    /// Oracle grid-resolution bound on the utility, oracle only.
    pub grid_bound: Option<f64>,
    /// `Σ_l q(n,l)` per supplier, joules of network energy.
    pub supply_per_network: Vec<f64>,
    /// `Σ_l N_BS·q(n,l)` per supplier, the per-BS reading of capacity.
    pub supply_per_bs: Vec<f64>,
    /// Weighted emissions `Σ ε_l(ψ q² + φ q)`, kg/h.
    pub emissions: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub allocation: AllocationMatrix,
    pub profits: Vec<f64>,
    pub utility: f64,
    pub duals: DualState,
    pub diagnostics: Diagnostics,
}

impl Solution {
    /// Assembles a solution, recomputing profits, utility and aggregates from
    /// the allocation so every reported number is consistent with it.
    pub(crate) fn assemble(
        inst: &ProblemInstance,
        allocation: AllocationMatrix,
        duals: DualState,
        method: SolveMethod,
        iterations: usize,
        converged: bool,
    ) -> Result<Self> {
        let profits = crate::market::profits(&inst.suppliers, &allocation)?;
        let utility = if inst.fairness.needs_positive_profit() && profits.iter().any(|p| *p <= 0.0) {
            f64::NEG_INFINITY
        } else {
            utility_unchecked(&profits, inst.fairness)
        };
        let v = inst.violations(&allocation);
        let mut sol = Solution {
            profits,
            utility,
            duals,
            diagnostics: Diagnostics {
                method,
                iterations,
                converged,
                max_violation: v.max_relative(inst),
                kkt_residual: f64::NAN,
                dual_bound: None,
                grid_bound: None,
                supply_per_network: (0..inst.n_suppliers())
                    .map(|n| allocation.row(n).iter().sum())
                    .collect(),
                supply_per_bs: (0..inst.n_suppliers())
                    .map(|n| {
                        allocation
                            .row(n)
                            .iter()
                            .zip(&inst.operators)
                            .map(|(q, op)| op.n_bs * q)
                            .sum()
                    })
                    .collect(),
                emissions: inst.emissions(&allocation),
                notes: Vec::new(),
            },
            allocation,
        };
        sol.diagnostics.kkt_residual = kkt_residual(inst, &sol);
        Ok(sol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Closed form where it applies and reproduces the optimum, otherwise
    /// the dual method.
    #[default]
    Auto,
    /// Closed form only; fails where it does not apply.
    Closed,
    Subgradient,
    Oracle,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SolverKind::Auto),
            "closed" | "closed-form" => Ok(SolverKind::Closed),
            "subgradient" => Ok(SolverKind::Subgradient),
            "oracle" => Ok(SolverKind::Oracle),
            _ => Err(Error::InvalidArgument(format!(
                "unknown solver `{s}` (expected auto, closed, subgradient or oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub kind: SolverKind,
    pub subgradient: SubgradientOptions,
    pub oracle_grid_points: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Auto,
            subgradient: SubgradientOptions::default(),
            oracle_grid_points: 60,
        }
    }
}

/// Solves an instance with the requested method after the feasibility
/// precheck.
pub fn solve(inst: &ProblemInstance, opts: &SolveOptions) -> Result<Solution> {
    inst.check_feasible()?;
    match opts.kind {
        SolverKind::Oracle => brute_force_oracle(inst, opts.oracle_grid_points),
        SolverKind::Subgradient => {
            solve_dual_subgradient_with(inst, &DualState::zeros(inst), &opts.subgradient)
        }
        SolverKind::Closed => closed_form_via_duals(inst, &opts.subgradient),
        SolverKind::Auto => {
            if !multistart::is_concave(inst) {
                return multistart::solve_multistart(inst, opts);
            }
            if closed_form::applicable(inst).is_ok() {
                if let Ok(sol) = closed_form_via_duals(inst, &opts.subgradient) {
                    return Ok(sol);
                }
            }
            solve_dual_subgradient_with(inst, &DualState::zeros(inst), &opts.subgradient)
        }
    }
}

/// Obtains optimal multipliers from the dual method and evaluates the closed
/// form at them; accepted only if the resulting allocation is feasible and
/// no worse than the dual method's own.
fn closed_form_via_duals(inst: &ProblemInstance, sg: &SubgradientOptions) -> Result<Solution> {
    closed_form::applicable(inst)?;
    let dual_sol = solve_dual_subgradient_with(inst, &DualState::zeros(inst), sg)?;
    let mut duals = dual_sol.duals.clone();
    if inst.fairness == Fairness::Alpha(1.0) {
        // Log-sum multipliers to product-form multipliers.
        let prod: f64 = dual_sol.profits.iter().product();
        duals.delta.iter_mut().for_each(|d| *d *= prod);
        duals.xi.iter_mut().for_each(|d| *d *= prod);
        duals.zeta *= prod;
    }
    let q = solve_closed_form_with(
        inst,
        &duals,
        &ClosedFormOptions {
            initial_profits: Some(dual_sol.profits.clone()),
            ..ClosedFormOptions::default()
        },
    )?;
    let q = inst.restore_feasibility(&q).ok_or_else(|| {
        Error::Infeasible("closed-form allocation violates the constraints".into())
    })?;
    let mut sol = Solution::assemble(
        inst,
        q,
        dual_sol.duals.clone(),
        SolveMethod::ClosedForm,
        dual_sol.diagnostics.iterations,
        dual_sol.diagnostics.converged,
    )?;
    let slack = 1e-7 * dual_sol.utility.abs().max(1e-12);
    if !(sol.utility >= dual_sol.utility - slack) {
        return Err(Error::Numerical {
            what: "closed form at optimal multipliers",
            achieved: dual_sol.utility - sol.utility,
        });
    }
    sol.diagnostics.dual_bound = dual_sol.diagnostics.dual_bound;
    Ok(sol)
}
