use super::inner::maximize_lagrangian;
use super::ipm::polish;
use super::scaled::{Scaled, ScaledDuals};
use super::{DualState, ProblemInstance, Solution, SolveMethod};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientOptions {
    pub max_iters: usize,
    /// `s_k = step0 / √k`, applied to the normalized multipliers.
    pub step0: f64,
    /// Stop once the averaged primal violation is below this...
    pub primal_tol: f64,
    /// ...and the largest multiplier change is below this.
    pub dual_tol: f64,
    /// Finish with the interior-point polish for exact optimality and duals.
    pub polish: bool,
    /// Randomize the starting multipliers instead of the zero start.
    pub seed: Option<u64>,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step0: 0.5,
            primal_tol: 1e-4,
            dual_tol: 1e-6,
            polish: true,
            seed: None,
        }
    }
}

/// Dual subgradient method with the default options and the given budget.
pub fn solve_dual_subgradient(
    inst: &ProblemInstance,
    init: &DualState,
    max_iters: usize,
    step0: f64,
) -> Result<Solution> {
    solve_dual_subgradient_with(
        inst,
        init,
        &SubgradientOptions {
            max_iters,
            step0,
            ..SubgradientOptions::default()
        },
    )
}

/// Projects onto the probability simplex (sort-based).
fn project_simplex(v: &mut [f64]) {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - tau).max(0.0));
}

pub fn solve_dual_subgradient_with(
    inst: &ProblemInstance,
    init: &DualState,
    opts: &SubgradientOptions,
) -> Result<Solution> {
    inst.check_feasible()?;
    init.validate(inst)?;
    if !(opts.step0 > 0.0 && opts.step0.is_finite()) {
        return Err(Error::InvalidArgument(format!("step0 must be > 0, got {}", opts.step0)));
    }
    let sc = Scaled::new(inst);
    let mut d = sc.from_original(init);
    if let Some(seed) = opts.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        d.delta.iter_mut().for_each(|v| *v = rng.random::<f64>());
        d.xi.iter_mut().for_each(|v| *v = rng.random::<f64>() * 2.0 - 1.0);
        if sc.emissions_active {
            d.zeta = rng.random::<f64>();
        }
        if !d.theta.is_empty() {
            d.theta.iter_mut().for_each(|v| *v = rng.random::<f64>());
            project_simplex(&mut d.theta);
        }
    }

    let dim = sc.dim();
    let mut avg = vec![0.0; dim];
    let mut weight_sum = 0.0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut dual_bound = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for k in 1..=opts.max_iters {
        iterations = k;
        let x = maximize_lagrangian(&sc, &d);
        dual_bound = dual_bound.min(sc.lagrangian(&x, &d));
        let s = opts.step0 / (k as f64).sqrt();
        weight_sum += s;
        for (a, v) in avg.iter_mut().zip(&x) {
            *a += s / weight_sum * (v - *a);
        }
        for cand in [&x, &avg] {
            if let Some(q) = inst.restore_feasibility(&sc.allocation(cand)) {
                let xr = sc.from_allocation(&q);
                let u = sc.floored_utility(&sc.profits(&xr));
                if best.as_ref().is_none_or(|(bu, _)| u > *bu) {
                    best = Some((u, xr));
                }
            }
        }

        let prev = d.clone();
        for n in 0..sc.n_r {
            d.delta[n] = (d.delta[n] + s * sc.cap(n, &x)).max(0.0);
        }
        for l in 0..sc.n_op {
            d.xi[l] -= s * sc.bal(l, &x);
        }
        if sc.emissions_active {
            d.zeta = (d.zeta + s * sc.em(&x)).max(0.0);
        }
        if !d.theta.is_empty() {
            let p = sc.profits(&x);
            d.theta.iter_mut().zip(&p).for_each(|(t, p)| *t -= s * p);
            project_simplex(&mut d.theta);
        }
        let change = max_change(&prev, &d);
        if sc.max_violation(&avg) < opts.primal_tol && change < opts.dual_tol {
            converged = true;
            break;
        }
    }

    let mut notes = Vec::new();
    if opts.polish {
        let warm = best.as_ref().map(|(_, x)| x.as_slice());
        match polish(&sc, warm) {
            Ok(p) if p.converged => {
                if let Some(q) = inst.restore_feasibility(&sc.allocation(&p.x)) {
                    let mut sol = Solution::assemble(
                        inst,
                        q,
                        sc.to_original(&p.duals),
                        SolveMethod::InteriorPoint,
                        iterations + p.iterations,
                        true,
                    )?;
                    sol.diagnostics.dual_bound = Some(dual_bound * sc.dual_scale);
                    sol.diagnostics.notes.push(format!(
                        "subgradient {iterations} iterations ({}), polish {} iterations",
                        if converged { "converged" } else { "budget exhausted" },
                        p.iterations
                    ));
                    return Ok(sol);
                }
                notes.push("polish result failed the feasibility tolerances".to_string());
            }
            Ok(p) => notes.push(format!("polish did not converge in {} iterations", p.iterations)),
            Err(e) => notes.push(format!("polish failed: {e}")),
        }
    }

    let x = match best {
        Some((_, x)) => x,
        None => {
            return Err(Error::Infeasible(format!(
                "no feasible iterate after {iterations} subgradient iterations (averaged violation {:e})",
                sc.max_violation(&avg)
            )))
        }
    };
    let mut sol = Solution::assemble(
        inst,
        sc.allocation(&x),
        sc.to_original(&d),
        SolveMethod::Subgradient,
        iterations,
        converged,
    )?;
    sol.diagnostics.dual_bound = Some(dual_bound * sc.dual_scale);
    sol.diagnostics.notes = notes;
    Ok(sol)
}

fn max_change(a: &ScaledDuals, b: &ScaledDuals) -> f64 {
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    diff(&a.delta, &b.delta)
        .max(diff(&a.xi, &b.xi))
        .max((a.zeta - b.zeta).abs())
        .max(diff(&a.theta, &b.theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drm::{kkt_residual, utility, Fairness};
    use crate::market::tests::baseline_suppliers;
    use crate::market::SupplierSpec;
    use approx::assert_relative_eq;

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.5, 0.5, 0.5];
        project_simplex(&mut v);
        for x in &v {
            assert_relative_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let mut v = vec![2.0, 0.0, -1.0];
        project_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn single_pair_is_pinned_by_balance() {
        let sup = vec![baseline_suppliers()[0].clone()];
        for f in [Fairness::Alpha(0.0), Fairness::Alpha(1.0), Fairness::Alpha(2.5), Fairness::MaxMin] {
            for polish in [false, true] {
                let inst = ProblemInstance::from_demands(&[40e3], sup.clone(), 1e8, f).unwrap();
                let opts = SubgradientOptions { polish, ..Default::default() };
                let sol = solve_dual_subgradient_with(&inst, &DualState::zeros(&inst), &opts).unwrap();
                assert_relative_eq!(sol.allocation.get(0, 0), 40e3, max_relative = 1e-12);
            }
        }
    }

    fn two_by_two(alpha: Fairness) -> ProblemInstance {
        let sup = baseline_suppliers()[..2].to_vec();
        ProblemInstance::from_demands(&[60e3, 50e3], sup, 1e7, alpha).unwrap()
    }

    #[test]
    fn raw_subgradient_approaches_polished_optimum() {
        let inst = two_by_two(Fairness::Alpha(0.0));
        let raw = solve_dual_subgradient_with(
            &inst,
            &DualState::zeros(&inst),
            &SubgradientOptions { polish: false, max_iters: 20_000, ..Default::default() },
        )
        .unwrap();
        let pol = solve_dual_subgradient(&inst, &DualState::zeros(&inst), 2000, 0.5).unwrap();
        assert_eq!(pol.diagnostics.method, SolveMethod::InteriorPoint);
        assert!(raw.diagnostics.max_violation < 1e-4);
        assert!(raw.utility <= pol.utility + 1e-6 * pol.utility.abs());
        assert!((raw.utility - pol.utility).abs() < 1e-3 * pol.utility.abs(), "{} vs {}", raw.utility, pol.utility);
        assert!(pol.diagnostics.kkt_residual < 1e-6, "{}", pol.diagnostics.kkt_residual);
        let bound = pol.diagnostics.dual_bound.unwrap();
        assert!(bound >= pol.utility - 1e-6 * pol.utility.abs());
    }

    #[test]
    fn random_start_reaches_same_optimum() {
        let inst = two_by_two(Fairness::Alpha(1.0));
        let a = solve_dual_subgradient(&inst, &DualState::zeros(&inst), 500, 0.5).unwrap();
        let b = solve_dual_subgradient_with(
            &inst,
            &DualState::zeros(&inst),
            &SubgradientOptions { seed: Some(7), max_iters: 500, ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(a.utility, b.utility, max_relative = 1e-9);
    }

    #[test]
    fn reported_numbers_recompute_from_allocation() {
        let inst = two_by_two(Fairness::Alpha(2.0));
        let sol = solve_dual_subgradient(&inst, &DualState::zeros(&inst), 500, 0.5).unwrap();
        let p = crate::market::profits(&inst.suppliers, &sol.allocation).unwrap();
        assert_eq!(p, sol.profits);
        assert_eq!(utility(&p, inst.fairness).unwrap(), sol.utility);
        assert_eq!(kkt_residual(&inst, &sol), sol.diagnostics.kkt_residual);
    }

    #[test]
    fn max_min_balances_profits_when_possible() {
        // Identical suppliers: the max-min optimum splits evenly.
        let s = SupplierSpec {
            id: "s".into(),
            benchmark_price: 1.0,
            unit_cost: 0.2,
            capacity: 100e3,
            emis_quad: 1e-3,
            emis_lin: 1e-3,
            price_sensitivity: 0,
        };
        let inst = ProblemInstance::from_demands(&[50e3, 30e3], vec![s.clone(), s], 1e7, Fairness::MaxMin).unwrap();
        let sol = solve_dual_subgradient(&inst, &DualState::zeros(&inst), 500, 0.5).unwrap();
        assert_relative_eq!(sol.profits[0], sol.profits[1], max_relative = 1e-8);
        assert_relative_eq!(sol.duals.theta.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
