//! The allocation problem in normalized units, shared by the numerical
//! solvers.
//!
//! With `S = max_l D_l`, the variables are `x = q / S` and every constraint is
//! divided by its right-hand side, so all quantities are O(1) regardless of
//! whether demand is measured in joules or kilojoules. Profits scale as
//! `Π̃ = Π / S`, and the utility changes by the positive factor
//! `K = S^(1−α)` (`K = S` for max-min) plus a constant, so multipliers map back
//! as `δ = K δ̃ / Q̄`, `ξ = K ξ̃ / D`, `ζ = K ζ̃ / C_th`, `θ` unchanged.

use super::{DualState, Fairness, ProblemInstance, PROFIT_FLOOR};
use crate::market::AllocationMatrix;

#[derive(Debug, Clone)]
pub(crate) struct Scaled {
    pub n_r: usize,
    pub n_op: usize,
    pub scale: f64,
    pub dual_scale: f64,
    pub fairness: Fairness,
    pub w: Vec<f64>,
    pub c: Vec<f64>,
    pub gamma: Vec<u32>,
    /// `Q̄ / S`.
    pub qcap: Vec<f64>,
    /// `ψ S² / C_ref` and `φ S / C_ref`; `C_ref` is the cap when finite.
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub emissions_active: bool,
    pub emissions_ref: f64,
    pub kappa: Vec<f64>,
    pub eps: Vec<f64>,
    /// `D / S`.
    pub demand: Vec<f64>,
    pub profit_floor: f64,
}

/// Multipliers of the normalized problem.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ScaledDuals {
    pub delta: Vec<f64>,
    pub xi: Vec<f64>,
    pub zeta: f64,
    pub theta: Vec<f64>,
}

impl Scaled {
    pub fn new(inst: &ProblemInstance) -> Self {
        let scale = inst.operators.iter().map(|o| o.total_energy).fold(0.0, f64::max);
        let emissions_active = inst.emissions_cap.is_finite();
        let emissions_ref = if emissions_active {
            inst.emissions_cap
        } else {
            // Only the greenest-allocation objective reads the coefficients
            // when the cap is absent; any positive reference will do.
            inst.suppliers
                .iter()
                .map(|s| s.emis_quad * scale * scale + s.emis_lin * scale)
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE)
        };
        let dual_scale = match inst.fairness {
            Fairness::MaxMin => scale,
            Fairness::Alpha(a) => scale.powf(1.0 - a),
        };
        Self {
            n_r: inst.n_suppliers(),
            n_op: inst.n_operators(),
            scale,
            dual_scale,
            fairness: inst.fairness,
            w: inst.suppliers.iter().map(|s| s.benchmark_price).collect(),
            c: inst.suppliers.iter().map(|s| s.unit_cost).collect(),
            gamma: inst.suppliers.iter().map(|s| s.price_sensitivity).collect(),
            qcap: inst.suppliers.iter().map(|s| s.capacity / scale).collect(),
            psi: inst.suppliers.iter().map(|s| s.emis_quad * scale * scale / emissions_ref).collect(),
            phi: inst.suppliers.iter().map(|s| s.emis_lin * scale / emissions_ref).collect(),
            emissions_active,
            emissions_ref,
            kappa: inst.capacity_weight.clone(),
            eps: inst.emission_weight.clone(),
            demand: inst.operators.iter().map(|o| o.total_energy / scale).collect(),
            profit_floor: PROFIT_FLOOR / scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_r * self.n_op
    }

    pub fn idx(&self, n: usize, l: usize) -> usize {
        n * self.n_op + l
    }

    /// Box implied by balance and capacity: `x(n,l) ≤ min(D̂_l, Q̂_n/κ_l)`.
    pub fn upper(&self, n: usize, l: usize) -> f64 {
        self.demand[l].min(self.qcap[n] / self.kappa[l])
    }

    /// `x (w (x/Q̂)^γ − c)`.
    pub fn entry_profit(&self, n: usize, x: f64) -> f64 {
        x * (self.w[n] * (x / self.qcap[n]).powi(self.gamma[n] as i32) - self.c[n])
    }

    pub fn entry_dprofit(&self, n: usize, x: f64) -> f64 {
        let g = self.gamma[n] as i32;
        self.w[n] * f64::from(g + 1) * (x / self.qcap[n]).powi(g) - self.c[n]
    }

    pub fn entry_d2profit(&self, n: usize, x: f64) -> f64 {
        let g = self.gamma[n] as i32;
        if g == 0 {
            0.0
        } else {
            self.w[n] * f64::from(g * (g + 1)) * x.powi(g - 1) / self.qcap[n].powi(g)
        }
    }

    pub fn profit(&self, n: usize, x: &[f64]) -> f64 {
        (0..self.n_op).map(|l| self.entry_profit(n, x[self.idx(n, l)])).sum()
    }

    pub fn profits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_r).map(|n| self.profit(n, x)).collect()
    }

    /// `Σ_l κ_l x / Q̂_n − 1`.
    pub fn cap(&self, n: usize, x: &[f64]) -> f64 {
        (0..self.n_op).map(|l| self.kappa[l] * x[self.idx(n, l)]).sum::<f64>() / self.qcap[n] - 1.0
    }

    /// `Σ_n x / D̂_l − 1`.
    pub fn bal(&self, l: usize, x: &[f64]) -> f64 {
        (0..self.n_r).map(|n| x[self.idx(n, l)]).sum::<f64>() / self.demand[l] - 1.0
    }

    /// Normalized weighted emissions `Σ ε (ψ̂ x² + φ̂ x)` (not minus one).
    pub fn emissions(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for n in 0..self.n_r {
            for l in 0..self.n_op {
                let v = x[self.idx(n, l)];
                total += self.eps[l] * (self.psi[n] * v * v + self.phi[n] * v);
            }
        }
        total
    }

    /// `∂/∂x (ε(ψ̂x² + φ̂x))`.
    pub fn entry_demissions(&self, n: usize, l: usize, x: f64) -> f64 {
        self.eps[l] * (2.0 * self.psi[n] * x + self.phi[n])
    }

    /// Emissions constraint value, `≤ 0` when satisfied; zero when inactive.
    pub fn em(&self, x: &[f64]) -> f64 {
        if self.emissions_active {
            self.emissions(x) - 1.0
        } else {
            0.0
        }
    }

    /// Utility of normalized profits with each profit floored for α > 0.
    pub fn floored_utility(&self, p: &[f64]) -> f64 {
        match self.fairness {
            Fairness::Alpha(a) if a > 0.0 => {
                let fl: Vec<f64> = p.iter().map(|v| v.max(self.profit_floor)).collect();
                super::utility_unchecked(&fl, self.fairness)
            }
            _ => super::utility_unchecked(p, self.fairness),
        }
    }

    /// Marginal utility `U'(Π̃_n)` for finite α; `None` outside the domain.
    pub fn marginal(&self, p: f64) -> Option<f64> {
        match self.fairness {
            Fairness::Alpha(a) if a == 0.0 => Some(1.0),
            Fairness::Alpha(a) => (p > 0.0).then(|| p.powf(-a)),
            Fairness::MaxMin => None,
        }
    }

    /// Largest normalized constraint violation.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for n in 0..self.n_r {
            v = v.max(self.cap(n, x));
        }
        for l in 0..self.n_op {
            v = v.max(self.bal(l, x).abs());
        }
        v = v.max(self.em(x));
        for &xi in x {
            v = v.max(-xi);
        }
        v
    }

    pub fn allocation(&self, x: &[f64]) -> AllocationMatrix {
        AllocationMatrix::from_vec(self.n_r, self.n_op, x.iter().map(|v| v * self.scale).collect())
    }

    pub fn from_allocation(&self, q: &AllocationMatrix) -> Vec<f64> {
        q.as_slice().iter().map(|v| v / self.scale).collect()
    }

    pub fn to_original(&self, d: &ScaledDuals) -> DualState {
        let k = self.dual_scale;
        DualState {
            delta: d
                .delta
                .iter()
                .zip(&self.qcap)
                .map(|(v, q)| k * v / (q * self.scale))
                .collect(),
            xi: d
                .xi
                .iter()
                .zip(&self.demand)
                .map(|(v, dm)| k * v / (dm * self.scale))
                .collect(),
            zeta: if self.emissions_active {
                k * d.zeta / self.emissions_ref
            } else {
                0.0
            },
            theta: d.theta.clone(),
        }
    }

    pub fn from_original(&self, d: &DualState) -> ScaledDuals {
        let k = self.dual_scale;
        ScaledDuals {
            delta: d
                .delta
                .iter()
                .zip(&self.qcap)
                .map(|(v, q)| v * q * self.scale / k)
                .collect(),
            xi: d
                .xi
                .iter()
                .zip(&self.demand)
                .map(|(v, dm)| v * dm * self.scale / k)
                .collect(),
            zeta: if self.emissions_active {
                d.zeta * self.emissions_ref / k
            } else {
                0.0
            },
            theta: d.theta.clone(),
        }
    }

    /// Supplier weights `u_n` multiplying `∂Π̃_n` in stationarity.
    pub fn supplier_weights(&self, p: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        match self.fairness {
            Fairness::MaxMin => Some(theta.to_vec()),
            Fairness::Alpha(_) => p.iter().map(|&v| self.marginal(v)).collect(),
        }
    }

    /// Normalized Lagrangian value with floored utility.
    pub fn lagrangian(&self, x: &[f64], d: &ScaledDuals) -> f64 {
        let p = self.profits(x);
        let u = match self.fairness {
            Fairness::MaxMin => p.iter().zip(&d.theta).map(|(p, t)| p * t).sum(),
            _ => self.floored_utility(&p),
        };
        let cap: f64 = (0..self.n_r).map(|n| d.delta[n] * self.cap(n, x)).sum();
        let bal: f64 = (0..self.n_op).map(|l| d.xi[l] * self.bal(l, x)).sum();
        u - cap - d.zeta * self.em(x) + bal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::tests::baseline_suppliers;
    use approx::assert_relative_eq;

    #[test]
    fn dual_mapping_round_trips() {
        for f in [Fairness::Alpha(0.0), Fairness::Alpha(2.0), Fairness::MaxMin] {
            let inst = ProblemInstance::from_demands(&[80e3, 120e3], baseline_suppliers(), 1e7, f).unwrap();
            let sc = Scaled::new(&inst);
            let d = DualState {
                delta: vec![0.1, 0.2, 0.3],
                xi: vec![-1.0, 2.0],
                zeta: 0.5,
                theta: if f == Fairness::MaxMin { vec![0.2, 0.3, 0.5] } else { vec![] },
            };
            let back = sc.to_original(&sc.from_original(&d));
            for (a, b) in back.delta.iter().zip(&d.delta).chain(back.xi.iter().zip(&d.xi)) {
                assert_relative_eq!(a, b, max_relative = 1e-14);
            }
            assert_relative_eq!(back.zeta, d.zeta, max_relative = 1e-14);
        }
    }

    #[test]
    fn normalized_profit_is_profit_over_scale() {
        let mut sup = baseline_suppliers();
        sup[1].price_sensitivity = 1;
        let inst = ProblemInstance::from_demands(&[80e3, 120e3], sup.clone(), 1e7, Fairness::Alpha(0.0)).unwrap();
        let sc = Scaled::new(&inst);
        let q = AllocationMatrix::from_rows(&[vec![1e4, 2e4], vec![3e4, 4e4], vec![4e4, 6e4]]).unwrap();
        let x = sc.from_allocation(&q);
        let p = crate::market::profits(&sup, &q).unwrap();
        for n in 0..3 {
            assert_relative_eq!(sc.profit(n, &x) * sc.scale, p[n], max_relative = 1e-12);
        }
        assert_relative_eq!((sc.em(&x) + 1.0) * 1e7, inst.emissions(&q), max_relative = 1e-12);
    }
}
