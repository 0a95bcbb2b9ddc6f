//! Exhaustive grid search, the independent check on the other solvers.
//!
//! The last supplier's delivery to each operator is eliminated through the
//! balance constraint, leaving `(N_R − 1)·N_op` free coordinates, each gridded
//! over `[0, min(D_l, Q̄_n/κ_l)]`. Points violating capacity, emissions or
//! nonnegativity of the eliminated entry are rejected. The best point is then
//! refined on a grid ten times finer around it. The parallel reduction keeps
//! the smallest grid index among equal utilities, so the result does not
//! depend on scheduling.

use super::scaled::Scaled;
use super::{DualState, Fairness, ProblemInstance, Solution, SolveMethod};
use crate::error::{Error, Result};
use rayon::prelude::*;

pub const MAX_DIMS: usize = 6;
pub const MAX_GRID_POINTS: usize = 200;
/// Upper limit on evaluations of the coarse grid.
const COARSE_BUDGET: f64 = 2e9;
/// Upper limit on evaluations of the refinement grid; the refinement radius
/// shrinks below ten fine steps when needed to stay within it.
const REFINE_BUDGET: f64 = 2e7;
/// Relative slack when testing feasibility, covering rounding only.
const FEAS_EPS: f64 = 1e-12;

struct Grid<'a> {
    sc: &'a Scaled,
    /// Free coordinate `d` is `x(n, l)` for `(n, l) = free[d]`.
    free: Vec<(usize, usize)>,
}

impl Grid<'_> {
    /// Normalized allocation for a choice of free coordinates, if feasible.
    fn point(&self, vals: &[f64]) -> Option<Vec<f64>> {
        let sc = self.sc;
        let mut x = vec![0.0; sc.dim()];
        for (&(n, l), &v) in self.free.iter().zip(vals) {
            x[sc.idx(n, l)] = v;
        }
        let last = sc.n_r - 1;
        for l in 0..sc.n_op {
            let used: f64 = (0..last).map(|n| x[sc.idx(n, l)]).sum();
            let rest = sc.demand[l] - used;
            if rest < -FEAS_EPS * sc.demand[l] {
                return None;
            }
            x[sc.idx(last, l)] = rest.max(0.0);
        }
        if (0..sc.n_r).any(|n| sc.cap(n, &x) > FEAS_EPS) || sc.em(&x) > FEAS_EPS {
            return None;
        }
        Some(x)
    }

    fn utility(&self, x: &[f64]) -> Option<f64> {
        let p = self.sc.profits(x);
        if self.sc.fairness.needs_positive_profit() && p.iter().any(|v| *v <= 0.0) {
            return None;
        }
        Some(super::utility_unchecked(&p, self.sc.fairness))
    }

    /// Best `(utility, index)` over a tensor grid with per-dimension values.
    fn search(&self, axes: &[Vec<f64>]) -> Option<(f64, u64)> {
        let total: u64 = axes.iter().map(|a| a.len() as u64).product();
        (0..total)
            .into_par_iter()
            .filter_map(|idx| {
                let mut rem = idx;
                let vals: Vec<f64> = axes
                    .iter()
                    .map(|a| {
                        let k = (rem % a.len() as u64) as usize;
                        rem /= a.len() as u64;
                        a[k]
                    })
                    .collect();
                let x = self.point(&vals)?;
                Some((self.utility(&x)?, idx))
            })
            .reduce_with(|a, b| match a.0.total_cmp(&b.0) {
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Equal => if a.1 <= b.1 { a } else { b },
            })
    }

    fn decode(axes: &[Vec<f64>], mut idx: u64) -> Vec<f64> {
        axes.iter()
            .map(|a| {
                let k = (idx % a.len() as u64) as usize;
                idx /= a.len() as u64;
                a[k]
            })
            .collect()
    }
}

pub fn brute_force_oracle(inst: &ProblemInstance, grid_points: usize) -> Result<Solution> {
    inst.validate()?;
    let dims = (inst.n_suppliers() - 1) * inst.n_operators();
    if dims > MAX_DIMS || grid_points > MAX_GRID_POINTS || (grid_points as f64).powi(dims as i32) > COARSE_BUDGET {
        return Err(Error::OracleScale { dims, grid_points });
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument(format!("oracle needs at least 2 grid points, got {grid_points}")));
    }
    let sc = Scaled::new(inst);
    let free: Vec<(usize, usize)> = (0..inst.n_operators())
        .flat_map(|l| (0..inst.n_suppliers() - 1).map(move |n| (n, l)))
        .collect();
    let grid = Grid { sc: &sc, free };
    let ub: Vec<f64> = grid.free.iter().map(|&(n, l)| sc.upper(n, l)).collect();
    let h: Vec<f64> = ub.iter().map(|u| u / (grid_points - 1) as f64).collect();

    let coarse: Vec<Vec<f64>> = ub
        .iter()
        .map(|u| (0..grid_points).map(|i| u * i as f64 / (grid_points - 1) as f64).collect())
        .collect();
    let (_, idx) = grid.search(&coarse).ok_or_else(|| {
        Error::Infeasible(format!("no feasible point on a {grid_points}-point grid over {dims} dimensions"))
    })?;
    let incumbent = Grid::decode(&coarse, idx);

    let mut radius = 10usize;
    while radius > 1 && ((2 * radius + 1) as f64).powi(dims as i32) > REFINE_BUDGET {
        radius -= 1;
    }
    let fine: Vec<Vec<f64>> = incumbent
        .iter()
        .zip(&h)
        .zip(&ub)
        .map(|((&c, &hd), &u)| {
            (-(radius as i64)..=radius as i64)
                .map(|j| c + j as f64 * hd / 10.0)
                .filter(|v| *v >= 0.0 && *v <= u)
                .collect()
        })
        .collect();
    let (_, fidx) = grid.search(&fine).expect("incumbent lies on the fine grid");
    let best = Grid::decode(&fine, fidx);
    let x = grid.point(&best).expect("feasible by construction");

    // First-order bound on the utility lost to the fine grid spacing.
    let p = sc.profits(&x);
    let u: Vec<f64> = match sc.fairness {
        Fairness::MaxMin => vec![1.0; sc.n_r],
        _ => p.iter().map(|&v| sc.marginal(v).unwrap_or(0.0)).collect(),
    };
    let last = sc.n_r - 1;
    let bound: f64 = grid
        .free
        .iter()
        .zip(&h)
        .map(|(&(n, l), hd)| {
            let gn = u[n] * sc.entry_dprofit(n, x[sc.idx(n, l)]).abs();
            let gl = u[last] * sc.entry_dprofit(last, x[sc.idx(last, l)]).abs();
            hd / 10.0 * (gn + gl)
        })
        .sum::<f64>()
        * sc.dual_scale;

    let evaluations = (grid_points as u64).pow(dims as u32) as usize + fine.iter().map(Vec::len).product::<usize>();
    let mut sol = Solution::assemble(inst, sc.allocation(&x), DualState::zeros(inst), SolveMethod::Oracle, evaluations, true)?;
    sol.diagnostics.grid_bound = Some(bound);
    Ok(sol)
}
