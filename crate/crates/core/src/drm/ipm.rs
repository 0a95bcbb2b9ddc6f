//! Primal-dual interior-point method (infeasible start) for small smooth
//! programs, and the allocation problem cast into that form.
//!
//! Used to polish the subgradient iterate to high accuracy and to recover
//! exact multipliers, and to compute the greenest allocation.

use super::scaled::{Scaled, ScaledDuals};
use super::{Fairness, ProblemInstance};
use crate::error::{Error, Result};
use crate::market::AllocationMatrix;
use nalgebra::{Cholesky, DMatrix, DVector};

pub(crate) struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub(crate) struct Constraint {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
}

/// `minimize F(z) s.t. g_i(z) ≤ 0, A z = b`.
pub(crate) trait Program {
    fn dim(&self) -> usize;
    /// `None` when `z` lies outside the objective's domain.
    fn objective(&self, z: &DVector<f64>) -> Option<Eval>;
    fn constraints(&self, z: &DVector<f64>) -> Vec<Constraint>;
    fn equalities(&self) -> (DMatrix<f64>, DVector<f64>);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmOptions {
    pub max_iters: usize,
    pub tol_pri: f64,
    pub tol_dual: f64,
    pub tol_gap: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol_pri: 1e-11,
            tol_dual: 1e-10,
            tol_gap: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MU: f64 = 10.0;
const LS_ALPHA: f64 = 0.01;
const LS_BETA: f64 = 0.5;
const STALL_FACTOR: f64 = 100.0;

struct Residual {
    dual: DVector<f64>,
    cent: DVector<f64>,
    pri: DVector<f64>,
}

impl Residual {
    fn norm(&self) -> f64 {
        (self.dual.norm_squared() + self.cent.norm_squared() + self.pri.norm_squared()).sqrt()
    }
}

fn residual(
    prog: &impl Program,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    t: f64,
) -> Option<(Residual, Eval, Vec<Constraint>)> {
    let obj = prog.objective(z)?;
    let cons = prog.constraints(z);
    if cons.iter().any(|c| !(c.value < 0.0)) {
        return None;
    }
    let mut dual = obj.grad.clone() + a.transpose() * nu;
    for (c, l) in cons.iter().zip(lam.iter()) {
        dual.axpy(*l, &c.grad, 1.0);
    }
    let cent = DVector::from_iterator(cons.len(), cons.iter().zip(lam.iter()).map(|(c, l)| -l * c.value - 1.0 / t));
    let pri = a * z - b;
    Some((Residual { dual, cent, pri }, obj, cons))
}

pub(crate) fn minimize(prog: &impl Program, z0: DVector<f64>, opts: &IpmOptions) -> Result<IpmResult> {
    let n = prog.dim();
    let (a, b) = prog.equalities();
    let p = a.nrows();
    let mut z = z0;
    let cons0 = prog.constraints(&z);
    if prog.objective(&z).is_none() || cons0.iter().any(|c| !(c.value < 0.0)) {
        return Err(Error::Numerical {
            what: "interior-point start",
            achieved: cons0.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let m = cons0.len();
    let mut lam = DVector::from_iterator(m, cons0.iter().map(|c| (0.1 / -c.value).clamp(1e-6, 1e6)));
    let mut nu = DVector::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_norm = f64::INFINITY;
    let mut stalled = 0;

    for it in 0..opts.max_iters {
        iterations = it;
        let cons = prog.constraints(&z);
        let eta: f64 = -cons.iter().zip(lam.iter()).map(|(c, l)| c.value * l).sum::<f64>();
        let t = MU * m as f64 / eta;
        let (r, obj, cons) = residual(prog, &a, &b, &z, &lam, &nu, t).expect("iterate stays interior");
        let (pri, dual) = (r.pri.amax(), r.dual.amax());
        if pri <= opts.tol_pri && dual <= opts.tol_dual && eta <= opts.tol_gap {
            converged = true;
            break;
        }
        // Residuals at the rounding floor stop improving; accept them if
        // within the loose tolerances.
        let loose = pri <= STALL_FACTOR * opts.tol_pri
            && dual <= STALL_FACTOR * opts.tol_dual
            && eta <= STALL_FACTOR * opts.tol_gap;
        if r.norm() > (1.0 - 1e-3) * last_norm {
            stalled += 1;
        } else {
            stalled = 0;
        }
        last_norm = r.norm();
        if stalled >= 5 {
            converged = loose;
            break;
        }

        let mut h = obj.hess.clone();
        let mut rhs = -&r.dual;
        for (i, c) in cons.iter().enumerate() {
            if let Some(hc) = &c.hess {
                h += hc * lam[i];
            }
            let s = -c.value;
            h.ger(lam[i] / s, &c.grad, &c.grad, 1.0);
            rhs.axpy(r.cent[i] / s, &c.grad, 1.0);
        }
        make_positive_definite(&mut h);

        let mut kkt = DMatrix::zeros(n + p, n + p);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        kkt.view_mut((0, n), (n, p)).copy_from(&a.transpose());
        kkt.view_mut((n, 0), (p, n)).copy_from(&a);
        let mut full_rhs = DVector::zeros(n + p);
        full_rhs.rows_mut(0, n).copy_from(&rhs);
        full_rhs.rows_mut(n, p).copy_from(&(-&r.pri));
        let Some(step) = kkt.lu().solve(&full_rhs) else {
            break;
        };
        let dz = step.rows(0, n).into_owned();
        let dnu = step.rows(n, p).into_owned();
        let dlam = DVector::from_iterator(
            m,
            cons.iter()
                .enumerate()
                .map(|(i, c)| (-r.cent[i] + lam[i] * c.grad.dot(&dz)) / -c.value),
        );

        let mut s: f64 = 1.0;
        for i in 0..m {
            if dlam[i] < 0.0 {
                s = s.min(-lam[i] / dlam[i]);
            }
        }
        s *= 0.99;
        let r0 = r.norm();
        let mut accepted = false;
        while s > 1e-16 {
            let zn = &z + &dz * s;
            let ln = &lam + &dlam * s;
            let nn = &nu + &dnu * s;
            if let Some((rn, _, _)) = residual(prog, &a, &b, &zn, &ln, &nn, t) {
                if rn.norm() <= (1.0 - LS_ALPHA * s) * r0 {
                    z = zn;
                    lam = ln;
                    nu = nn;
                    accepted = true;
                    break;
                }
            }
            s *= LS_BETA;
        }
        if !accepted {
            converged = loose;
            break;
        }
        iterations = it + 1;
    }
    Ok(IpmResult {
        z,
        lambda: lam,
        nu,
        iterations,
        converged,
    })
}

/// Adds the smallest tried multiple of the identity that makes `h`
/// positive definite; only needed for nonconcave pricing.
fn make_positive_definite(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    let diag_scale = (0..n).map(|i| h[(i, i)].abs()).fold(1e-12, f64::max);
    let mut shift = 0.0;
    while Cholesky::new(&*h + DMatrix::identity(n, n) * shift).is_none() {
        shift = if shift == 0.0 { 1e-10 * diag_scale } else { shift * 10.0 };
        if shift > 1e8 * diag_scale {
            break;
        }
    }
    if shift > 0.0 {
        for i in 0..n {
            h[(i, i)] += shift;
        }
    }
}

/// Barrier objective `t·F(z) − Σ log(−g_i(z))`, `None` outside the domain.
fn barrier_value(prog: &impl Program, z: &DVector<f64>, t: f64) -> Option<f64> {
    let f = prog.objective(z)?.value;
    let cons = prog.constraints(z);
    if cons.iter().any(|c| !(c.value < 0.0)) {
        return None;
    }
    Some(t * f - cons.iter().map(|c| (-c.value).ln()).sum::<f64>())
}

/// Primal log-barrier method with modified-Newton centering.
///
/// Unlike [`minimize`], each centering step decreases the barrier objective,
/// so on a nonconvex objective it settles in a local minimum rather than at
/// an arbitrary stationary point. `z0` must be strictly feasible and satisfy
/// the equalities. Multipliers are read off the final central point.
///
/// `initial_gap` sets the first barrier weight `t = m / initial_gap`; a small
/// gap keeps a good warm start from being pulled towards the analytic center.
pub(crate) fn minimize_barrier(
    prog: &impl Program,
    z0: DVector<f64>,
    initial_gap: f64,
    opts: &IpmOptions,
) -> Result<IpmResult> {
    let n = prog.dim();
    let (a, b) = prog.equalities();
    let p = a.nrows();
    let mut z = z0;
    let m = prog.constraints(&z).len();
    let mut t = m as f64 / initial_gap;
    let Some(mut phi) = barrier_value(prog, &z, t) else {
        return Err(Error::Numerical { what: "barrier start", achieved: f64::NAN });
    };
    let mut w = DVector::zeros(p);
    let mut iterations = 0;
    let mut centered = false;

    while iterations < opts.max_iters {
        centered = false;
        for _ in 0..100 {
            if iterations >= opts.max_iters {
                break;
            }
            iterations += 1;
            let obj = prog.objective(&z).expect("iterate stays in the domain");
            let cons = prog.constraints(&z);
            let mut grad = obj.grad * t;
            let mut h = obj.hess * t;
            for c in &cons {
                let s = -c.value;
                grad.axpy(1.0 / s, &c.grad, 1.0);
                if let Some(hc) = &c.hess {
                    h += hc / s;
                }
                h.ger(1.0 / (s * s), &c.grad, &c.grad, 1.0);
            }
            make_positive_definite(&mut h);
            let mut kkt = DMatrix::zeros(n + p, n + p);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            kkt.view_mut((0, n), (n, p)).copy_from(&a.transpose());
            kkt.view_mut((n, 0), (p, n)).copy_from(&a);
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            rhs.rows_mut(n, p).copy_from(&(b.clone() - &a * &z));
            let Some(step) = kkt.lu().solve(&rhs) else {
                break;
            };
            let dz = step.rows(0, n).into_owned();
            w = step.rows(n, p).into_owned();
            let decrement = -grad.dot(&dz);
            if decrement / 2.0 <= 1e-10 {
                centered = true;
                break;
            }
            let mut s = 1.0;
            let mut moved = false;
            while s > 1e-14 {
                let zn = &z + &dz * s;
                if let Some(v) = barrier_value(prog, &zn, t) {
                    if v <= phi - LS_ALPHA * s * decrement {
                        z = zn;
                        phi = v;
                        moved = true;
                        break;
                    }
                }
                s *= LS_BETA;
            }
            if !moved {
                // Rounding floor of the barrier value: as centered as it gets.
                centered = decrement <= 1e-6 * phi.abs().max(1.0);
                break;
            }
        }
        if m as f64 / t <= opts.tol_gap {
            break;
        }
        t *= MU;
        phi = barrier_value(prog, &z, t).expect("iterate stays in the domain");
    }

    let cons = prog.constraints(&z);
    let lambda = DVector::from_iterator(m, cons.iter().map(|c| 1.0 / (-t * c.value)));
    let pri = (&a * &z - &b).amax();
    Ok(IpmResult {
        z,
        lambda,
        nu: w / t,
        iterations,
        converged: centered && m as f64 / t <= opts.tol_gap && pri <= opts.tol_pri.max(1e-9),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    Utility,
    Emissions,
}

/// The allocation problem over `z = [x, t]`, `t` present for max-min only.
struct DrmProgram<'a> {
    sc: &'a Scaled,
    goal: Goal,
    epigraph: bool,
    with_emissions: bool,
}

impl DrmProgram<'_> {
    fn nx(&self) -> usize {
        self.sc.dim()
    }
}

fn alpha_fns(a: f64, p: f64) -> (f64, f64, f64) {
    let f = if a == 0.0 {
        p
    } else if a == 1.0 {
        p.ln()
    } else {
        p.powf(1.0 - a) / (1.0 - a)
    };
    let d1 = if a == 0.0 { 1.0 } else { p.powf(-a) };
    let d2 = if a == 0.0 { 0.0 } else { -a * p.powf(-a - 1.0) };
    (f, d1, d2)
}

impl Program for DrmProgram<'_> {
    fn dim(&self) -> usize {
        self.nx() + usize::from(self.epigraph)
    }

    fn objective(&self, z: &DVector<f64>) -> Option<Eval> {
        let sc = self.sc;
        let dim = self.dim();
        let x = &z.as_slice()[..self.nx()];
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        let value = match (self.goal, sc.fairness) {
            (Goal::Emissions, _) => {
                for n in 0..sc.n_r {
                    for l in 0..sc.n_op {
                        let i = sc.idx(n, l);
                        grad[i] = sc.entry_demissions(n, l, x[i]);
                        hess[(i, i)] = 2.0 * sc.eps[l] * sc.psi[n];
                    }
                }
                sc.emissions(x)
            }
            (Goal::Utility, Fairness::MaxMin) => {
                grad[self.nx()] = -1.0;
                -z[self.nx()]
            }
            (Goal::Utility, Fairness::Alpha(a)) => {
                let mut total = 0.0;
                for n in 0..sc.n_r {
                    let p = sc.profit(n, x);
                    if a > 0.0 && !(p > 0.0) {
                        return None;
                    }
                    let (f, d1, d2) = alpha_fns(a, p);
                    total -= f;
                    let g: Vec<f64> = (0..sc.n_op).map(|l| sc.entry_dprofit(n, x[sc.idx(n, l)])).collect();
                    for l in 0..sc.n_op {
                        let i = sc.idx(n, l);
                        grad[i] = -d1 * g[l];
                        hess[(i, i)] -= d1 * sc.entry_d2profit(n, x[i]);
                        for k in 0..sc.n_op {
                            hess[(i, sc.idx(n, k))] -= d2 * g[l] * g[k];
                        }
                    }
                }
                total
            }
        };
        value.is_finite().then_some(Eval { value, grad, hess })
    }

    fn constraints(&self, z: &DVector<f64>) -> Vec<Constraint> {
        let sc = self.sc;
        let dim = self.dim();
        let nx = self.nx();
        let x = &z.as_slice()[..nx];
        let mut out = Vec::with_capacity(nx + 2 * sc.n_r + 1);
        for i in 0..nx {
            let mut grad = DVector::zeros(dim);
            grad[i] = -1.0;
            out.push(Constraint { value: -x[i], grad, hess: None });
        }
        for n in 0..sc.n_r {
            let mut grad = DVector::zeros(dim);
            for l in 0..sc.n_op {
                grad[sc.idx(n, l)] = sc.kappa[l] / sc.qcap[n];
            }
            out.push(Constraint { value: sc.cap(n, x), grad, hess: None });
        }
        if self.with_emissions && sc.emissions_active {
            let mut grad = DVector::zeros(dim);
            let mut hess = DMatrix::zeros(dim, dim);
            for n in 0..sc.n_r {
                for l in 0..sc.n_op {
                    let i = sc.idx(n, l);
                    grad[i] = sc.entry_demissions(n, l, x[i]);
                    hess[(i, i)] = 2.0 * sc.eps[l] * sc.psi[n];
                }
            }
            out.push(Constraint { value: sc.em(x), grad, hess: Some(hess) });
        }
        if self.epigraph {
            let t = z[nx];
            for n in 0..sc.n_r {
                let mut grad = DVector::zeros(dim);
                grad[nx] = 1.0;
                let mut hess = None;
                if sc.gamma[n] > 0 {
                    hess = Some(DMatrix::zeros(dim, dim));
                }
                for l in 0..sc.n_op {
                    let i = sc.idx(n, l);
                    grad[i] = -sc.entry_dprofit(n, x[i]);
                    if let Some(h) = hess.as_mut() {
                        h[(i, i)] = -sc.entry_d2profit(n, x[i]);
                    }
                }
                out.push(Constraint { value: t - sc.profit(n, x), grad, hess });
            }
        }
        out
    }

    fn equalities(&self) -> (DMatrix<f64>, DVector<f64>) {
        let sc = self.sc;
        let mut a = DMatrix::zeros(sc.n_op, self.dim());
        for l in 0..sc.n_op {
            for n in 0..sc.n_r {
                a[(l, sc.idx(n, l))] = 1.0 / sc.demand[l];
            }
        }
        (a, DVector::from_element(sc.n_op, 1.0))
    }
}

impl DrmProgram<'_> {
    /// Appends `t` below the smallest profit for the epigraph form.
    fn lift(&self, x: &[f64]) -> DVector<f64> {
        let mut z: Vec<f64> = x.to_vec();
        if self.epigraph {
            let pmin = self.sc.profits(x).into_iter().fold(f64::INFINITY, f64::min);
            z.push(pmin - pmin.abs().max(1.0) * 0.1);
        }
        DVector::from_vec(z)
    }

    fn strictly_interior(&self, z: &DVector<f64>) -> bool {
        self.objective(z).is_some() && self.constraints(z).iter().all(|c| c.value < 0.0)
    }

    /// First strictly interior point among blends of the warm start with a
    /// uniform split of demand shrunk towards the origin.
    fn start(&self, warm: Option<&[f64]>) -> Option<DVector<f64>> {
        let sc = self.sc;
        let uniform = |rho: f64| -> Vec<f64> {
            let mut x = vec![0.0; sc.dim()];
            for n in 0..sc.n_r {
                for l in 0..sc.n_op {
                    x[sc.idx(n, l)] = rho * sc.demand[l] / sc.n_r as f64;
                }
            }
            x
        };
        let rhos: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        if let Some(w) = warm {
            for tau in [0.05, 0.2, 0.5] {
                for &rho in &rhos {
                    let u = uniform(rho);
                    let x: Vec<f64> = w.iter().zip(&u).map(|(a, b)| (1.0 - tau) * a + tau * b).collect();
                    let z = self.lift(&x);
                    if self.strictly_interior(&z) {
                        return Some(z);
                    }
                }
            }
        }
        rhos.iter().map(|&rho| self.lift(&uniform(rho))).find(|z| self.strictly_interior(z))
    }
}

pub(crate) struct Polished {
    pub x: Vec<f64>,
    pub duals: ScaledDuals,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the normalized utility problem to high accuracy.
pub(crate) fn polish(sc: &Scaled, warm: Option<&[f64]>) -> Result<Polished> {
    let prog = DrmProgram {
        sc,
        goal: Goal::Utility,
        epigraph: sc.fairness == Fairness::MaxMin,
        with_emissions: true,
    };
    let z0 = prog.start(warm).ok_or(Error::Numerical {
        what: "interior-point start",
        achieved: f64::NAN,
    })?;
    let res = minimize(&prog, z0, &IpmOptions::default())?;
    Ok(prog.polished(res))
}

/// Local maximization from a feasible warm start by the barrier method,
/// for nonconcave instances. `center` is a strictly feasible allocation
/// satisfying the balance equalities; the start is the nearest blend of the
/// warm point towards it that is strictly feasible.
pub(crate) fn polish_local(sc: &Scaled, warm: &[f64], center: &[f64]) -> Result<Polished> {
    let prog = DrmProgram {
        sc,
        goal: Goal::Utility,
        epigraph: sc.fairness == Fairness::MaxMin,
        with_emissions: true,
    };
    let z0 = [1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0]
        .into_iter()
        .map(|tau| {
            let x: Vec<f64> = warm.iter().zip(center).map(|(w, c)| (1.0 - tau) * w + tau * c).collect();
            prog.lift(&x)
        })
        .find(|z| prog.strictly_interior(z))
        .ok_or(Error::Numerical { what: "barrier start", achieved: f64::NAN })?;
    // Multipliers come from `1/(t·s_i)`; below this gap the slack of active
    // constraints nears rounding level and they lose accuracy.
    let opts = IpmOptions { tol_gap: 1e-9, ..IpmOptions::default() };
    let mut res = minimize_barrier(&prog, z0, 1e-3, &opts)?;
    refit_multipliers(&prog, &mut res);
    Ok(prog.polished(res))
}

/// Slack (normalized) below which a constraint counts as active.
const ACTIVE_SLACK: f64 = 1e-7;

/// Re-solves stationarity `∇F + Σ_active λ_i ∇g_i + Aᵀν = 0` in the least
/// squares sense at the final point, keeping the result when it is
/// sign-feasible and has the smaller residual. Inactive multipliers are set
/// to zero.
fn refit_multipliers(prog: &impl Program, res: &mut IpmResult) {
    let Some(obj) = prog.objective(&res.z) else {
        return;
    };
    let cons = prog.constraints(&res.z);
    let (a, _) = prog.equalities();
    let active: Vec<usize> = (0..cons.len()).filter(|&i| -cons[i].value <= ACTIVE_SLACK).collect();
    let (n, k, p) = (prog.dim(), active.len(), a.nrows());
    let mut m = DMatrix::zeros(n, k + p);
    for (j, &i) in active.iter().enumerate() {
        m.set_column(j, &cons[i].grad);
    }
    m.view_mut((0, k), (n, p)).copy_from(&a.transpose());
    let Ok(y) = m.clone().svd(true, true).solve(&(-&obj.grad), 1e-12) else {
        return;
    };
    if y.rows(0, k).iter().any(|v| *v < 0.0) {
        return;
    }
    let stationarity = |lam: &DVector<f64>, nu: &DVector<f64>| {
        let mut r = obj.grad.clone() + a.transpose() * nu;
        for (c, l) in cons.iter().zip(lam.iter()) {
            r.axpy(*l, &c.grad, 1.0);
        }
        r.amax()
    };
    let mut lam = DVector::zeros(cons.len());
    for (j, &i) in active.iter().enumerate() {
        lam[i] = y[j];
    }
    let nu = y.rows(k, p).into_owned();
    if stationarity(&lam, &nu) <= stationarity(&res.lambda, &res.nu) {
        res.lambda = lam;
        res.nu = nu;
    }
}

/// A strictly feasible allocation meeting demand exactly: the
/// capacity-proportional split, moved towards the greenest allocation as far
/// as needed to satisfy the emissions cap strictly.
pub(crate) fn strictly_feasible_point(sc: &Scaled, greenest: &[f64]) -> Option<Vec<f64>> {
    let prog = DrmProgram {
        sc,
        goal: Goal::Utility,
        epigraph: false,
        with_emissions: true,
    };
    let total: f64 = sc.qcap.iter().sum();
    let mut prop = vec![0.0; sc.dim()];
    for n in 0..sc.n_r {
        for l in 0..sc.n_op {
            prop[sc.idx(n, l)] = sc.demand[l] * sc.qcap[n] / total;
        }
    }
    [0.0, 0.5, 0.9, 0.99, 0.999, 0.9999].into_iter().find_map(|s| {
        let x: Vec<f64> = prop.iter().zip(greenest).map(|(p, g)| (1.0 - s) * p + s * g).collect();
        let z = DVector::from_vec(x.clone());
        let interior = prog.constraints(&z).iter().all(|c| c.value < 0.0);
        interior.then_some(x)
    })
}

impl DrmProgram<'_> {
    fn polished(&self, res: IpmResult) -> Polished {
        let sc = self.sc;
        let nx = sc.dim();
        let lam = res.lambda.as_slice();
        let mut k = nx;
        let delta = lam[k..k + sc.n_r].to_vec();
        k += sc.n_r;
        let zeta = if sc.emissions_active {
            k += 1;
            lam[k - 1]
        } else {
            0.0
        };
        let theta = if self.epigraph {
            let th = &lam[k..k + sc.n_r];
            let s: f64 = th.iter().sum();
            th.iter().map(|v| v / s).collect()
        } else {
            Vec::new()
        };
        Polished {
            x: res.z.as_slice()[..nx].to_vec(),
            duals: ScaledDuals {
                delta,
                xi: res.nu.iter().map(|v| -v).collect(),
                zeta,
                theta,
            },
            iterations: res.iterations,
            converged: res.converged,
        }
    }
}

/// Emissions-minimizing allocation under capacity and balance.
pub(crate) fn greenest(inst: &ProblemInstance) -> Result<AllocationMatrix> {
    // Normalize emissions by their own magnitude rather than by the cap,
    // which may be arbitrarily small here.
    let sc = Scaled::new(&inst.with_emissions_cap(f64::INFINITY));
    let prog = DrmProgram {
        sc: &sc,
        goal: Goal::Emissions,
        epigraph: false,
        with_emissions: false,
    };
    let z0 = prog.start(None).ok_or_else(|| {
        Error::Infeasible("capacity: no strictly feasible allocation meets demand".into())
    })?;
    let res = minimize(&prog, z0, &IpmOptions::default())?;
    let x = &res.z.as_slice()[..sc.dim()];
    if sc.max_violation(x) > 1e-8 {
        return Err(Error::Infeasible(format!(
            "capacity: demand cannot be met within supplier capacities (residual {:e})",
            sc.max_violation(x)
        )));
    }
    Ok(sc.allocation(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// min (x-2)² + (y+1)² s.t. x + y = 1, x ≥ 0, y ≥ 0 → (1, 0), ν = 2, λ_y = 4.
    struct Toy;
    impl Program for Toy {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, z: &DVector<f64>) -> Option<Eval> {
            Some(Eval {
                value: (z[0] - 2.0).powi(2) + (z[1] + 1.0).powi(2),
                grad: DVector::from_vec(vec![2.0 * (z[0] - 2.0), 2.0 * (z[1] + 1.0)]),
                hess: DMatrix::identity(2, 2) * 2.0,
            })
        }
        fn constraints(&self, z: &DVector<f64>) -> Vec<Constraint> {
            (0..2)
                .map(|i| {
                    let mut g = DVector::zeros(2);
                    g[i] = -1.0;
                    Constraint { value: -z[i], grad: g, hess: None }
                })
                .collect()
        }
        fn equalities(&self) -> (DMatrix<f64>, DVector<f64>) {
            (DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 1.0))
        }
    }

    #[test]
    fn toy_qp_with_active_bound() {
        let r = minimize(&Toy, DVector::from_vec(vec![0.3, 0.3]), &IpmOptions::default()).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.z[0], 1.0, epsilon = 1e-9);
        assert!(r.z[1].abs() < 1e-9);
        assert_relative_eq!(r.nu[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(r.lambda[1], 4.0, epsilon = 1e-8);
    }
}
