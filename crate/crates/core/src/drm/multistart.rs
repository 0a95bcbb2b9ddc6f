//! Instances with dynamic pricing (`γ ≥ 1`) have supplier profits convex in
//! the delivered energy, so the utility is not concave and the dual method
//! can stall at a point that is not even a local optimum. These are solved by
//! local barrier maximization from several feasible starts:
//!
//! * the best iterate of the dual method,
//! * greedy fills for each cyclic priority order of the suppliers, with
//!   operators served largest first,
//! * the best point of a coarse oracle grid, when the instance is small
//!   enough for one.
//!
//! The local solutions and the raw starts compete on utility, candidates
//! meeting the constraints to rounding first; near-ties go to the smallest
//! KKT residual, then to the earliest candidate.

use super::ipm::{polish_local, strictly_feasible_point};
use super::oracle::{brute_force_oracle, MAX_DIMS};
use super::scaled::Scaled;
use super::{solve_dual_subgradient_with, DualState, ProblemInstance, Solution, SolveMethod, SolveOptions, SubgradientOptions};
use crate::error::{Error, Result};
use crate::market::AllocationMatrix;

/// Coarse-grid evaluations spent on the oracle start.
const ORACLE_START_BUDGET: f64 = 1e6;
/// Relative utility difference below which candidates tie.
const TIE_REL: f64 = 1e-8;
/// Relative constraint violation below which a candidate counts as exact.
const TIGHT_VIOLATION: f64 = 1e-9;

pub(crate) fn is_concave(inst: &ProblemInstance) -> bool {
    inst.suppliers
        .iter()
        .all(|s| s.price_sensitivity == 0 || s.benchmark_price == 0.0)
}

fn greedy_starts(inst: &ProblemInstance) -> Vec<AllocationMatrix> {
    let (n_r, n_op) = (inst.n_suppliers(), inst.n_operators());
    let mut ops: Vec<usize> = (0..n_op).collect();
    ops.sort_by(|&a, &b| inst.demand(b).total_cmp(&inst.demand(a)).then(a.cmp(&b)));
    (0..n_r)
        .filter_map(|rot| {
            let mut q = AllocationMatrix::zeros(n_r, n_op);
            let mut room: Vec<f64> = inst.suppliers.iter().map(|s| s.capacity).collect();
            for &l in &ops {
                let mut need = inst.demand(l);
                for k in 0..n_r {
                    let n = (rot + k) % n_r;
                    let take = need.min(room[n] / inst.capacity_weight[l]).max(0.0);
                    q.set(n, l, take);
                    room[n] -= take * inst.capacity_weight[l];
                    need -= take;
                }
            }
            inst.restore_feasibility(&q)
        })
        .collect()
}

pub(crate) fn solve_multistart(inst: &ProblemInstance, opts: &SolveOptions) -> Result<Solution> {
    let sc = Scaled::new(inst);
    let mut candidates: Vec<Solution> = Vec::new();
    let mut warm: Vec<AllocationMatrix> = Vec::new();
    let mut notes = Vec::new();

    let sg = SubgradientOptions { polish: false, ..opts.subgradient.clone() };
    match solve_dual_subgradient_with(inst, &DualState::zeros(inst), &sg) {
        Ok(s) => {
            warm.push(s.allocation.clone());
            candidates.push(s);
        }
        Err(e) => notes.push(format!("dual start unavailable: {e}")),
    }
    warm.extend(greedy_starts(inst));
    let dims = (inst.n_suppliers() - 1) * inst.n_operators();
    if dims <= MAX_DIMS {
        let points = (ORACLE_START_BUDGET.powf(1.0 / dims as f64) as usize).clamp(2, opts.oracle_grid_points.max(2));
        match brute_force_oracle(inst, points) {
            Ok(s) => {
                warm.push(s.allocation.clone());
                candidates.push(s);
            }
            Err(e) => notes.push(format!("oracle start unavailable: {e}")),
        }
    }

    let (green, _) = inst.greenest_allocation()?;
    let center = strictly_feasible_point(&sc, &sc.from_allocation(&green));
    let mut local = 0;
    if let Some(center) = center {
        for q in &warm {
            let pr = polish_local(&sc, &sc.from_allocation(q), &center);
            let Ok(p) = pr else {
                continue;
            };
            if !p.converged {
                continue;
            }
            if let Some(q) = inst.restore_feasibility(&sc.allocation(&p.x)) {
                let sol = Solution::assemble(inst, q, sc.to_original(&p.duals), SolveMethod::InteriorPoint, p.iterations, true)?;
                candidates.push(sol);
                local += 1;
            }
        }
    } else {
        notes.push("no strictly feasible point: local refinement skipped".into());
    }

    // Raw starts may use the whole constraint tolerance, which buys utility
    // the true optimum does not have; they only compete if nothing tight does.
    // Utilities equal up to rounding count as ties, won by the candidate with
    // the better optimality certificate.
    let n_cand = candidates.len();
    if candidates.iter().any(|s| s.diagnostics.max_violation <= TIGHT_VIOLATION) {
        candidates.retain(|s| s.diagnostics.max_violation <= TIGHT_VIOLATION);
    }
    let top = candidates.iter().map(|s| s.utility).fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_REL * top.abs();
    let mut best = candidates
        .into_iter()
        .filter(|s| s.utility >= top - slack)
        .reduce(|a, b| if b.diagnostics.kkt_residual < a.diagnostics.kkt_residual { b } else { a })
        .ok_or_else(|| {
            Error::Infeasible(if inst.fairness.needs_positive_profit() {
                format!("profit: no allocation found with every profit positive, needed for α = {}", inst.fairness)
            } else {
                "no feasible start for the nonconcave instance".into()
            })
        })?;
    best.diagnostics.notes.extend(notes);
    best.diagnostics.notes.push(format!(
        "nonconcave utility: best of {n_cand} candidates ({local} local optima from {} starts)",
        warm.len()
    ));
    Ok(best)
}
