use super::scaled::Scaled;
use super::{Fairness, ProblemInstance, Solution};

/// Entries above this (as a fraction of the largest demand) count as support.
const SUPPORT: f64 = 1e-9;

/// Largest KKT violation of a solution and its multipliers, measured on the
/// normalized problem (variables relative to the largest demand, constraints
/// relative to their right-hand sides).
///
/// Terms: stationarity `|∂L/∂q|` on the support, dual feasibility
/// `max(0, ∂L/∂q)` off it, complementary slackness `|δ_n·cap_n|`,
/// `|ζ·em|` and `|θ_n(Π_n − min Π)|`, multiplier signs, and primal
/// violations. Returns `∞` when profits leave the utility's domain.
pub fn kkt_residual(inst: &ProblemInstance, sol: &Solution) -> f64 {
    let theta_len = if inst.fairness == Fairness::MaxMin { inst.n_suppliers() } else { 0 };
    if sol.duals.delta.len() != inst.n_suppliers()
        || sol.duals.xi.len() != inst.n_operators()
        || sol.duals.theta.len() != theta_len
        || sol.allocation.n_suppliers() != inst.n_suppliers()
        || sol.allocation.n_operators() != inst.n_operators()
    {
        return f64::INFINITY;
    }
    let sc = Scaled::new(inst);
    let x = sc.from_allocation(&sol.allocation);
    let d = sc.from_original(&sol.duals);
    let p = sc.profits(&x);
    let Some(u) = sc.supplier_weights(&p, &d.theta) else {
        return f64::INFINITY;
    };

    let mut r: f64 = sc.max_violation(&x);
    for n in 0..sc.n_r {
        for l in 0..sc.n_op {
            let i = sc.idx(n, l);
            let g = u[n] * sc.entry_dprofit(n, x[i]) - d.delta[n] * sc.kappa[l] / sc.qcap[n]
                - d.zeta * sc.entry_demissions(n, l, x[i])
                + d.xi[l] / sc.demand[l];
            r = r.max(if x[i] > SUPPORT { g.abs() } else { g.max(0.0) });
        }
        r = r.max((d.delta[n] * sc.cap(n, &x)).abs()).max(-d.delta[n]);
    }
    r = r.max((d.zeta * sc.em(&x)).abs()).max(-d.zeta);
    if !d.theta.is_empty() {
        let pmin = p.iter().copied().fold(f64::INFINITY, f64::min);
        for (t, pn) in d.theta.iter().zip(&p) {
            r = r.max((t * (pn - pmin)).abs()).max(-t);
        }
        r = r.max((d.theta.iter().sum::<f64>() - 1.0).abs());
    }
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}
