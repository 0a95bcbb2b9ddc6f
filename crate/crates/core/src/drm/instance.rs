use super::Fairness;
use crate::error::{Error, Result};
use crate::market::{AllocationMatrix, SupplierSpec};
use crate::power::OperatorDemand;
use serde::{Deserialize, Serialize};

/// Absolute capacity tolerance, joules.
pub const CAPACITY_TOL: f64 = 1e-6;
/// Relative balance tolerance.
pub const BALANCE_REL_TOL: f64 = 1e-4;
/// Absolute emissions tolerance, kg/h.
pub const EMISSIONS_TOL: f64 = 1e-6;

/// How an operator's deliveries count against supplier capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityConvention {
    /// `q` is network energy and counts once: `Σ_l q ≤ Q̄`.
    #[default]
    PerNetwork,
    /// `q` is weighted by the operator's BS count: `Σ_l N_BS·q ≤ Q̄`.
    Verbatim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub operators: Vec<OperatorDemand>,
    pub suppliers: Vec<SupplierSpec>,
    /// `C_th`, kg/h; `f64::INFINITY` drops the constraint.
    pub emissions_cap: f64,
    pub fairness: Fairness,
    /// `κ_l`, weight of operator `l`'s deliveries in every capacity row.
    pub capacity_weight: Vec<f64>,
    /// `ε_l`, weight of operator `l`'s deliveries in the emissions sum.
    pub emission_weight: Vec<f64>,
}

impl ProblemInstance {
    pub fn new(
        operators: Vec<OperatorDemand>,
        suppliers: Vec<SupplierSpec>,
        emissions_cap: f64,
        fairness: Fairness,
        convention: CapacityConvention,
    ) -> Result<Self> {
        let capacity_weight = match convention {
            CapacityConvention::PerNetwork => vec![1.0; operators.len()],
            CapacityConvention::Verbatim => operators.iter().map(|o| o.n_bs).collect(),
        };
        let emission_weight = vec![1.0; operators.len()];
        Self::with_weights(operators, suppliers, emissions_cap, fairness, capacity_weight, emission_weight)
    }

    pub fn with_weights(
        operators: Vec<OperatorDemand>,
        suppliers: Vec<SupplierSpec>,
        emissions_cap: f64,
        fairness: Fairness,
        capacity_weight: Vec<f64>,
        emission_weight: Vec<f64>,
    ) -> Result<Self> {
        let inst = Self {
            operators,
            suppliers,
            emissions_cap,
            fairness,
            capacity_weight,
            emission_weight,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Instance from bare per-operator energies; each operator is a single
    /// synthetic BS whose power breakdown is unknown.
    pub fn from_demands(
        demands: &[f64],
        suppliers: Vec<SupplierSpec>,
        emissions_cap: f64,
        fairness: Fairness,
    ) -> Result<Self> {
        let operators = demands
            .iter()
            .enumerate()
            .map(|(l, &d)| OperatorDemand {
                operator_id: format!("op{}", l + 1),
                n_bs: 1.0,
                users_per_bs: 0.0,
                per_bs_radiated: 0.0,
                per_bs_consumed: 0.0,
                total_energy: d,
            })
            .collect();
        Self::new(operators, suppliers, emissions_cap, fairness, CapacityConvention::PerNetwork)
    }

    pub fn validate(&self) -> Result<()> {
        let n_op = self.operators.len();
        if self.suppliers.is_empty() || n_op == 0 {
            return Err(Error::InvalidArgument("need at least one supplier and one operator".into()));
        }
        for s in &self.suppliers {
            s.validate()?;
        }
        for op in &self.operators {
            if !(op.total_energy.is_finite() && op.total_energy > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "operator {}: demand must be finite and > 0, got {}",
                    op.operator_id, op.total_energy
                )));
            }
        }
        if self.capacity_weight.len() != n_op || self.emission_weight.len() != n_op {
            return Err(Error::DimensionMismatch(format!(
                "{n_op} operators but {} capacity and {} emission weights",
                self.capacity_weight.len(),
                self.emission_weight.len()
            )));
        }
        let positive = |v: &f64| v.is_finite() && *v > 0.0;
        if !self.capacity_weight.iter().all(positive) || !self.emission_weight.iter().all(positive) {
            return Err(Error::InvalidArgument("operator weights must be finite and > 0".into()));
        }
        if !(self.emissions_cap > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "emissions cap must be > 0, got {}",
                self.emissions_cap
            )));
        }
        Ok(())
    }

    pub fn with_emissions_cap(&self, cap: f64) -> Self {
        Self {
            emissions_cap: cap,
            ..self.clone()
        }
    }

    pub fn with_fairness(&self, fairness: Fairness) -> Self {
        Self {
            fairness,
            ..self.clone()
        }
    }

    pub fn n_suppliers(&self) -> usize {
        self.suppliers.len()
    }

    pub fn n_operators(&self) -> usize {
        self.operators.len()
    }

    pub fn demand(&self, operator: usize) -> f64 {
        self.operators[operator].total_energy
    }

    /// `Σ_l κ_l q(n,l)`.
    pub fn capacity_use(&self, q: &AllocationMatrix, supplier: usize) -> f64 {
        q.row(supplier).iter().zip(&self.capacity_weight).map(|(q, k)| k * q).sum()
    }

    /// Weighted emissions `Σ_n Σ_l ε_l (ψ_n q² + φ_n q)`.
    pub fn emissions(&self, q: &AllocationMatrix) -> f64 {
        self.suppliers
            .iter()
            .enumerate()
            .map(|(n, s)| {
                q.row(n)
                    .iter()
                    .zip(&self.emission_weight)
                    .map(|(&x, e)| e * (s.emis_quad * x * x + s.emis_lin * x))
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn violations(&self, q: &AllocationMatrix) -> Violations {
        Violations {
            capacity_excess: (0..self.n_suppliers())
                .map(|n| self.capacity_use(q, n) - self.suppliers[n].capacity)
                .collect(),
            balance_rel: (0..self.n_operators())
                .map(|l| (q.column_sum(l) - self.demand(l)).abs() / self.demand(l))
                .collect(),
            emissions_excess: if self.emissions_cap.is_finite() {
                self.emissions(q) - self.emissions_cap
            } else {
                f64::NEG_INFINITY
            },
            min_entry: q.as_slice().iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Nudges a nearly feasible allocation onto the feasible set: clamps
    /// negatives, rescales columns to meet demand, then shrinks rows over
    /// capacity and the whole matrix if over the emissions cap. Returns `None`
    /// if the result still violates the tolerances.
    pub fn restore_feasibility(&self, q: &AllocationMatrix) -> Option<AllocationMatrix> {
        let (n_r, n_op) = (self.n_suppliers(), self.n_operators());
        if q.n_suppliers() != n_r || q.n_operators() != n_op {
            return None;
        }
        if q.as_slice().iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut out = AllocationMatrix::from_vec(n_r, n_op, q.as_slice().iter().map(|v| v.max(0.0)).collect());
        for l in 0..n_op {
            let s = out.column_sum(l);
            let d = self.demand(l);
            for n in 0..n_r {
                let v = if s > 0.0 { out.get(n, l) * d / s } else { d / n_r as f64 };
                out.set(n, l, v);
            }
        }
        const SHRINK: f64 = 1.0 - 4.0 * f64::EPSILON;
        for n in 0..n_r {
            let used = self.capacity_use(&out, n);
            let cap = self.suppliers[n].capacity;
            if used > cap {
                let r = cap / used * SHRINK;
                for l in 0..n_op {
                    out.set(n, l, out.get(n, l) * r);
                }
            }
        }
        if self.emissions_cap.is_finite() {
            let c = self.emissions(&out);
            if c > self.emissions_cap {
                let (mut a, mut b) = (0.0, 0.0);
                for (n, s) in self.suppliers.iter().enumerate() {
                    for l in 0..n_op {
                        let x = out.get(n, l);
                        a += self.emission_weight[l] * s.emis_quad * x * x;
                        b += self.emission_weight[l] * s.emis_lin * x;
                    }
                }
                let cap = self.emissions_cap;
                let r = if a > 0.0 {
                    2.0 * cap / (b + (b * b + 4.0 * a * cap).sqrt())
                } else {
                    cap / b
                } * SHRINK;
                out = AllocationMatrix::from_vec(n_r, n_op, out.as_slice().iter().map(|v| v * r).collect());
            }
        }
        self.violations(&out).within_tolerance().then_some(out)
    }

    /// Checks aggregate capacity, attainability of the emissions cap and,
    /// for α > 0, that each supplier can earn a positive profit.
    pub fn check_feasible(&self) -> Result<()> {
        self.validate()?;
        let capacity: f64 = self.suppliers.iter().map(|s| s.capacity).sum();
        let weighted_demand: f64 = (0..self.n_operators())
            .map(|l| self.capacity_weight[l] * self.demand(l))
            .sum();
        if capacity < weighted_demand {
            return Err(Error::Infeasible(format!(
                "capacity: total supplier capacity {capacity:e} J is below the weighted demand {weighted_demand:e} J"
            )));
        }
        if self.emissions_cap.is_finite() {
            let (_, greenest) = self.greenest_allocation()?;
            if greenest > self.emissions_cap {
                return Err(Error::Infeasible(format!(
                    "emissions: cap {:e} kg/h is below the greenest feasible allocation's {greenest:e} kg/h",
                    self.emissions_cap
                )));
            }
        }
        if self.fairness.needs_positive_profit() {
            for (n, s) in self.suppliers.iter().enumerate() {
                let break_even = s.capacity * (s.unit_cost / s.benchmark_price).powf(1.0 / f64::from(s.price_sensitivity.max(1)));
                let reachable = (0..self.n_operators())
                    .map(|l| self.demand(l).min(s.capacity / self.capacity_weight[l]))
                    .fold(0.0, f64::max);
                if s.price_sensitivity > 0 && reachable <= break_even {
                    return Err(Error::Infeasible(format!(
                        "profit: supplier {n} cannot deliver enough to price above cost, needed for α = {}",
                        self.fairness
                    )));
                }
            }
        }
        Ok(())
    }

    /// Allocation minimizing weighted emissions subject to capacity and
    /// balance, with its emissions.
    pub fn greenest_allocation(&self) -> Result<(AllocationMatrix, f64)> {
        let q = super::ipm::greenest(self)?;
        let c = self.emissions(&q);
        Ok((q, c))
    }
}

/// Constraint residuals of an allocation; positive excess means violated.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations {
    /// `Σ_l κ_l q − Q̄` per supplier, joules.
    pub capacity_excess: Vec<f64>,
    /// `|Σ_n q − D| / D` per operator.
    pub balance_rel: Vec<f64>,
    /// `C(Q) − C_th`, kg/h.
    pub emissions_excess: f64,
    pub min_entry: f64,
}

impl Violations {
    pub fn within_tolerance(&self) -> bool {
        self.capacity_excess.iter().all(|v| *v <= CAPACITY_TOL)
            && self.balance_rel.iter().all(|v| *v <= BALANCE_REL_TOL)
            && self.emissions_excess <= EMISSIONS_TOL
            && self.min_entry >= 0.0
    }

    /// Largest violation with each term relative to its right-hand side.
    pub fn max_relative(&self, inst: &ProblemInstance) -> f64 {
        let scale = inst.operators.iter().map(|o| o.total_energy).fold(0.0, f64::max);
        let cap = self
            .capacity_excess
            .iter()
            .zip(&inst.suppliers)
            .map(|(e, s)| e / s.capacity)
            .fold(0.0, f64::max);
        let bal = self.balance_rel.iter().copied().fold(0.0, f64::max);
        let em = if inst.emissions_cap.is_finite() {
            (self.emissions_excess / inst.emissions_cap).max(0.0)
        } else {
            0.0
        };
        cap.max(bal).max(em).max(-self.min_entry / scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::tests::baseline_suppliers;

    #[test]
    fn aggregate_capacity_precheck_names_constraint() {
        let inst = ProblemInstance::from_demands(&[200e3, 200e3, 200e3], baseline_suppliers(), f64::INFINITY, Fairness::Alpha(0.0)).unwrap();
        let err = inst.check_feasible().unwrap_err();
        assert!(matches!(&err, Error::Infeasible(m) if m.starts_with("capacity")), "{err}");
    }

    #[test]
    fn emissions_precheck_names_constraint() {
        let inst = ProblemInstance::from_demands(&[100e3, 100e3, 100e3], baseline_suppliers(), 10.0, Fairness::Alpha(0.0)).unwrap();
        let err = inst.check_feasible().unwrap_err();
        assert!(matches!(&err, Error::Infeasible(m) if m.starts_with("emissions")), "{err}");
    }

    #[test]
    fn restore_rescales_columns() {
        let inst = ProblemInstance::from_demands(&[10.0, 20.0], baseline_suppliers(), f64::INFINITY, Fairness::Alpha(0.0)).unwrap();
        let q = AllocationMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![-0.5, 0.0]]).unwrap_err();
        assert!(matches!(q, Error::InvalidArgument(_)));
        let q = AllocationMatrix::from_vec(3, 2, vec![1.0, 0.0, 1.0, 0.0, -0.5, 0.0]);
        let r = inst.restore_feasibility(&q).unwrap();
        assert_eq!(r.column_sum(0), 10.0);
        assert_eq!(r.get(2, 0), 0.0);
        assert!((r.get(0, 1) - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn verbatim_convention_weights_by_bs_count() {
        let mut inst = ProblemInstance::from_demands(&[10.0], baseline_suppliers(), 1e9, Fairness::Alpha(0.0)).unwrap();
        inst.operators[0].n_bs = 796.0;
        let v = ProblemInstance::new(inst.operators.clone(), inst.suppliers.clone(), 1e9, inst.fairness, CapacityConvention::Verbatim).unwrap();
        assert_eq!(v.capacity_weight, vec![796.0]);
        assert_eq!(v.emission_weight, vec![1.0]);
    }
}
