//! Maximization of the normalized Lagrangian over the box
//! `0 ≤ x(n,l) ≤ min(D̂_l, Q̂_n/κ_l)` for fixed multipliers.
//!
//! The Lagrangian separates by supplier. Within a supplier the entries couple
//! only through the supplier weight `u_n = U'(Π̃_n)`; for fixed `u` each entry
//! is a one-dimensional problem
//! `max u·x(w(x/Q̂)^γ − c) − a x − b x²`, solved exactly. For α ∈ {0, ∞} the
//! weight is known (1 or θ_n) and this is the closed-form stationarity rule
//! clamped to the box; otherwise `u` solves `u = U'(Π̃(x(u)))`, found by
//! bisection since `Π̃(x(u))` is nondecreasing in `u`.

use super::scaled::{Scaled, ScaledDuals};
use super::Fairness;

pub(crate) fn maximize_lagrangian(sc: &Scaled, d: &ScaledDuals) -> Vec<f64> {
    let mut x = vec![0.0; sc.dim()];
    for n in 0..sc.n_r {
        let row = supplier_row(sc, d, n);
        for (l, v) in row.into_iter().enumerate() {
            x[sc.idx(n, l)] = v;
        }
    }
    x
}

/// Per-entry linear and quadratic penalty coefficients `(a, b)`.
fn penalties(sc: &Scaled, d: &ScaledDuals, n: usize, l: usize) -> (f64, f64) {
    let a = d.delta[n] * sc.kappa[l] / sc.qcap[n] + d.zeta * sc.eps[l] * sc.phi[n] - d.xi[l] / sc.demand[l];
    let b = d.zeta * sc.eps[l] * sc.psi[n];
    (a, b)
}

fn supplier_row(sc: &Scaled, d: &ScaledDuals, n: usize) -> Vec<f64> {
    let coef: Vec<(f64, f64)> = (0..sc.n_op).map(|l| penalties(sc, d, n, l)).collect();
    let row_at = |u: f64| -> Vec<f64> {
        (0..sc.n_op)
            .map(|l| entry_argmax(sc, n, u, coef[l].0, coef[l].1, sc.upper(n, l)))
            .collect()
    };
    let profit = |r: &[f64]| r.iter().map(|&v| sc.entry_profit(n, v)).sum::<f64>();
    match sc.fairness {
        Fairness::Alpha(a) if a == 0.0 => row_at(1.0),
        Fairness::MaxMin => row_at(d.theta[n]),
        Fairness::Alpha(alpha) => {
            // g(u) = u − max(Π̃(u), floor)^(−α) is increasing; bracket its root.
            let g = |u: f64| u - profit(&row_at(u)).max(sc.profit_floor).powf(-alpha);
            let pmax: f64 = (0..sc.n_op)
                .map(|l| {
                    let ub = sc.upper(n, l);
                    ub * sc.w[n] * (ub / sc.qcap[n]).powi(sc.gamma[n] as i32).max(1.0)
                })
                .sum();
            let mut lo = 0.5 * pmax.max(sc.profit_floor).powf(-alpha);
            let mut hi = sc.profit_floor.powf(-alpha) * 2.0;
            debug_assert!(g(lo) <= 0.0 && g(hi) >= 0.0);
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi / lo - 1.0 < 1e-14 {
                    break;
                }
            }
            row_at((lo * hi).sqrt())
        }
    }
}

/// `argmax_{0 ≤ x ≤ ub} h(x) = u·x(w(x/Q̂)^γ − c) − a x − b x²`.
pub(crate) fn entry_argmax(sc: &Scaled, n: usize, u: f64, a: f64, b: f64, ub: f64) -> f64 {
    let gamma = sc.gamma[n];
    let h = |x: f64| u * sc.entry_profit(n, x) - a * x - b * x * x;
    if gamma == 0 || u * sc.w[n] == 0.0 {
        // Concave quadratic (or linear) in x.
        let lin = u * if gamma == 0 { sc.w[n] - sc.c[n] } else { -sc.c[n] } - a;
        return if b > 0.0 {
            (lin / (2.0 * b)).clamp(0.0, ub)
        } else if lin > 0.0 {
            ub
        } else {
            0.0
        };
    }
    // h' is convex on [0, ∞) for γ ≥ 1, so it has at most two roots,
    // separated by the minimizer of h'.
    let dh = |x: f64| u * sc.entry_dprofit(n, x) - a - 2.0 * b * x;
    let g = f64::from(gamma);
    let xm = if gamma == 1 {
        if 2.0 * u * sc.w[n] / sc.qcap[n] > 2.0 * b {
            0.0
        } else {
            ub
        }
    } else {
        (2.0 * b * sc.qcap[n].powi(gamma as i32) / (u * sc.w[n] * g * (g + 1.0)))
            .powf(1.0 / (g - 1.0))
            .min(ub)
    };
    let mut cands = vec![0.0, ub];
    for (lo, hi) in [(0.0, xm), (xm, ub)] {
        if hi > lo {
            if let Some(r) = bisect_root(&dh, lo, hi) {
                cands.push(r);
            }
        }
    }
    let mut best = 0.0;
    let mut best_h = h(0.0);
    for &c in &cands[1..] {
        let hv = h(c);
        if hv > best_h {
            best = c;
            best_h = hv;
        }
    }
    best
}

fn bisect_root(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    let rising = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
