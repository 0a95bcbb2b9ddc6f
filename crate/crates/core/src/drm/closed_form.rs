//! Stationarity closed forms for α ∈ {0, 1, ∞} with γ ∈ {0, 1}.
//!
//! Setting `∂L/∂q(n,l) = 0` with the profit term weighted by `W_n` gives
//!
//! * γ = 0: `q = (W(w − c) − δκ − ζφε + ξ) / (2ζψε)`
//! * γ = 1: `q = (W c + δκ + ζφε − ξ) / (2(W w/Q̄ − ζψε))`
//!
//! where `W_n = 1` for α = 0, `∏_{m≠n} Π_m` for α = 1 (multipliers of the
//! product form `∏Π`, equal to the log-sum multipliers times `∏Π`), and `θ_n`
//! for α = ∞. Results are clamped at zero.

use super::{DualState, Fairness, ProblemInstance, PROFIT_FLOOR};
use crate::error::{Error, Result};
use crate::market::AllocationMatrix;

/// Denominators closer to zero than this are treated as singular.
const SINGULAR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormOptions {
    /// Starting profits for the α = 1 fixed point; defaults to the profits of
    /// an even split of demand.
    pub initial_profits: Option<Vec<f64>>,
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ClosedFormOptions {
    fn default() -> Self {
        Self {
            initial_profits: None,
            damping: 0.5,
            tol: 1e-8,
            max_iters: 10_000,
        }
    }
}

pub(crate) fn applicable(inst: &ProblemInstance) -> Result<()> {
    match inst.fairness {
        Fairness::Alpha(a) if a != 0.0 && a != 1.0 => {
            return Err(Error::InvalidArgument(format!("no closed form for α = {a}")))
        }
        _ => {}
    }
    if let Some((n, s)) = inst.suppliers.iter().enumerate().find(|(_, s)| s.price_sensitivity > 1) {
        return Err(Error::InvalidArgument(format!(
            "no closed form for supplier {n} with γ = {}",
            s.price_sensitivity
        )));
    }
    Ok(())
}

pub fn solve_closed_form(inst: &ProblemInstance, duals: &DualState) -> Result<AllocationMatrix> {
    solve_closed_form_with(inst, duals, &ClosedFormOptions::default())
}

pub fn solve_closed_form_with(
    inst: &ProblemInstance,
    duals: &DualState,
    opts: &ClosedFormOptions,
) -> Result<AllocationMatrix> {
    inst.validate()?;
    applicable(inst)?;
    duals.validate(inst)?;
    let n_r = inst.n_suppliers();
    match inst.fairness {
        Fairness::MaxMin => evaluate(inst, duals, &duals.theta),
        Fairness::Alpha(a) if a == 0.0 => evaluate(inst, duals, &vec![1.0; n_r]),
        Fairness::Alpha(_) => {
            let p0 = match &opts.initial_profits {
                Some(p) if p.len() == n_r => p.clone(),
                Some(p) => {
                    return Err(Error::DimensionMismatch(format!(
                        "{} initial profits for {n_r} suppliers",
                        p.len()
                    )))
                }
                None => even_split_profits(inst)?,
            };
            let map = |p: &[f64]| -> Option<(AllocationMatrix, Vec<f64>)> {
                let w: Vec<f64> = (0..n_r)
                    .map(|n| (0..n_r).filter(|&m| m != n).map(|m| p[m].max(PROFIT_FLOOR)).product())
                    .collect();
                let q = evaluate(inst, duals, &w).ok()?;
                if q.as_slice().iter().any(|v| !v.is_finite()) {
                    return None;
                }
                let next = crate::market::profits(&inst.suppliers, &q).ok()?;
                Some((q, next))
            };
            let gap = |p: &[f64], next: &[f64]| {
                p.iter()
                    .zip(next)
                    .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(PROFIT_FLOOR))
                    .fold(0.0, f64::max)
            };
            // Check the arguments fail loudly rather than as divergence.
            evaluate(inst, duals, &vec![1.0; n_r])?;

            let mut p = p0.clone();
            let mut prev_gap = f64::INFINITY;
            let mut growing = 0;
            for _ in 0..opts.max_iters {
                let Some((q, next)) = map(&p) else { break };
                let g = gap(&p, &next);
                if g < opts.tol {
                    return Ok(q);
                }
                growing = if g >= prev_gap { growing + 1 } else { 0 };
                if growing >= 3 {
                    break;
                }
                prev_gap = g;
                for (a, b) in p.iter_mut().zip(&next) {
                    *a = opts.damping * *a + (1.0 - opts.damping) * b;
                }
            }
            // The product-form map expands by about N_R − 1 around its fixed
            // point, so plain damping can diverge; fall back to damped Newton
            // on Π − f(Π).
            newton_fixed_point(&map, &gap, p0, opts)
        }
    }
}

type ProfitMap<'a> = dyn Fn(&[f64]) -> Option<(AllocationMatrix, Vec<f64>)> + 'a;

fn newton_fixed_point(
    map: &ProfitMap<'_>,
    gap: &dyn Fn(&[f64], &[f64]) -> f64,
    mut p: Vec<f64>,
    opts: &ClosedFormOptions,
) -> Result<AllocationMatrix> {
    use nalgebra::{DMatrix, DVector};
    let n = p.len();
    let diverged = || Error::Numerical {
        what: "proportional-fair closed-form fixed point (diverged)",
        achieved: f64::NAN,
    };
    let resid = |p: &[f64]| -> Option<(AllocationMatrix, DVector<f64>, f64)> {
        let (q, next) = map(p)?;
        let g = gap(p, &next);
        Some((q, DVector::from_iterator(n, p.iter().zip(&next).map(|(a, b)| a - b)), g))
    };
    for _ in 0..100 {
        let (q, r, g) = resid(&p).ok_or_else(diverged)?;
        if g < opts.tol {
            return Ok(q);
        }
        let mut jac = DMatrix::identity(n, n);
        for k in 0..n {
            let h = 1e-7 * p[k].abs().max(1.0);
            let mut pk = p.clone();
            pk[k] += h;
            let (_, rk, _) = resid(&pk).ok_or_else(diverged)?;
            jac.set_column(k, &((rk - &r) / h));
        }
        let step = jac.lu().solve(&(-&r)).ok_or_else(diverged)?;
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = p.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            if let Some((_, rc, _)) = resid(&cand) {
                if rc.norm() < r.norm() {
                    p = cand;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(diverged());
            }
        }
    }
    Err(diverged())
}

fn even_split_profits(inst: &ProblemInstance) -> Result<Vec<f64>> {
    let n_r = inst.n_suppliers();
    let rows: Vec<Vec<f64>> = (0..n_r)
        .map(|_| (0..inst.n_operators()).map(|l| inst.demand(l) / n_r as f64).collect())
        .collect();
    crate::market::profits(&inst.suppliers, &AllocationMatrix::from_rows(&rows)?)
}

fn evaluate(inst: &ProblemInstance, d: &DualState, weight: &[f64]) -> Result<AllocationMatrix> {
    let (n_r, n_op) = (inst.n_suppliers(), inst.n_operators());
    let mut q = AllocationMatrix::zeros(n_r, n_op);
    for (n, s) in inst.suppliers.iter().enumerate() {
        for l in 0..n_op {
            let (kappa, eps) = (inst.capacity_weight[l], inst.emission_weight[l]);
            let (num, den) = if s.price_sensitivity == 0 {
                if s.emis_quad == 0.0 && d.zeta > 0.0 {
                    return Err(Error::UnboundedStationarity(n));
                }
                (
                    weight[n] * s.base_margin() - d.delta[n] * kappa - d.zeta * s.emis_lin * eps + d.xi[l],
                    2.0 * d.zeta * s.emis_quad * eps,
                )
            } else {
                (
                    weight[n] * s.unit_cost + d.delta[n] * kappa + d.zeta * s.emis_lin * eps - d.xi[l],
                    2.0 * (weight[n] * s.benchmark_price / s.capacity - d.zeta * s.emis_quad * eps),
                )
            };
            if den.abs() < SINGULAR {
                return Err(Error::SingularBranch { supplier: n, operator: l });
            }
            q.set(n, l, (num / den).max(0.0));
        }
    }
    Ok(q)
}
