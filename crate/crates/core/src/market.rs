//! Supplier economics: dynamic unit pricing, pollutant emissions and profit
//! over an allocation matrix.

use crate::error::{require, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplierSpec {
    pub id: String,
    /// Benchmark price `w` per joule, MU.
    pub benchmark_price: f64,
    /// Generation cost `c` per joule, MU.
    pub unit_cost: f64,
    /// Production capacity `Q̄`, joules.
    pub capacity: f64,
    /// Quadratic emissions coefficient `ψ`.
    pub emis_quad: f64,
    /// Linear emissions coefficient `φ`.
    pub emis_lin: f64,
    /// Price sensitivity `γ`; 0 means a fixed price.
    pub price_sensitivity: u32,
}

impl SupplierSpec {
    pub fn validate(&self) -> Result<()> {
        let id = &self.id;
        require(self.unit_cost.is_finite() && self.unit_cost >= 0.0, || {
            format!("supplier {id}: unit_cost must be >= 0, got {}", self.unit_cost)
        })?;
        require(
            self.benchmark_price.is_finite() && self.benchmark_price > self.unit_cost,
            || {
                format!(
                    "supplier {id}: benchmark_price {} must exceed unit_cost {}",
                    self.benchmark_price, self.unit_cost
                )
            },
        )?;
        require(self.capacity.is_finite() && self.capacity > 0.0, || {
            format!("supplier {id}: capacity must be > 0, got {}", self.capacity)
        })?;
        require(self.emis_quad.is_finite() && self.emis_quad >= 0.0, || {
            format!("supplier {id}: emis_quad must be >= 0, got {}", self.emis_quad)
        })?;
        require(self.emis_lin.is_finite() && self.emis_lin >= 0.0, || {
            format!("supplier {id}: emis_lin must be >= 0, got {}", self.emis_lin)
        })
    }

    /// `w - c`, the profit per joule at the benchmark price.
    pub fn base_margin(&self) -> f64 {
        self.benchmark_price - self.unit_cost
    }
}

/// Dense `N_R × N_op` matrix of supplied energies, row per supplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationMatrix {
    n_suppliers: usize,
    n_operators: usize,
    data: Vec<f64>,
}

impl AllocationMatrix {
    pub fn zeros(n_suppliers: usize, n_operators: usize) -> Self {
        Self {
            n_suppliers,
            n_operators,
            data: vec![0.0; n_suppliers * n_operators],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_operators = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_operators) {
            return Err(Error::DimensionMismatch("ragged allocation rows".into()));
        }
        let m = Self {
            n_suppliers: rows.len(),
            n_operators,
            data: rows.concat(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Row-major construction without the nonnegativity check.
    pub(crate) fn from_vec(n_suppliers: usize, n_operators: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n_suppliers * n_operators);
        Self {
            n_suppliers,
            n_operators,
            data,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            None => Ok(()),
            Some(i) => Err(Error::InvalidArgument(format!(
                "allocation entry ({}, {}) = {} is not a finite nonnegative energy",
                i / self.n_operators,
                i % self.n_operators,
                self.data[i]
            ))),
        }
    }

    pub fn n_suppliers(&self) -> usize {
        self.n_suppliers
    }

    pub fn n_operators(&self) -> usize {
        self.n_operators
    }

    pub fn get(&self, supplier: usize, operator: usize) -> f64 {
        self.data[supplier * self.n_operators + operator]
    }

    pub fn set(&mut self, supplier: usize, operator: usize, value: f64) {
        self.data[supplier * self.n_operators + operator] = value;
    }

    pub fn row(&self, supplier: usize) -> &[f64] {
        &self.data[supplier * self.n_operators..(supplier + 1) * self.n_operators]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_operators.max(1)).take(self.n_suppliers)
    }

    pub fn column_sum(&self, operator: usize) -> f64 {
        (0..self.n_suppliers).map(|n| self.get(n, operator)).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn check_row(row: &[f64]) -> Result<()> {
    match row.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
        None => Ok(()),
        Some(q) => Err(Error::InvalidArgument(format!("energy must be finite and >= 0, got {q}"))),
    }
}

/// Per-joule price `w (q / Q̄)^γ` charged for a delivery of `q` joules.
pub fn unit_price(sup: &SupplierSpec, q: f64) -> Result<f64> {
    check_row(&[q])?;
    Ok(price_unchecked(sup, q))
}

pub(crate) fn price_unchecked(sup: &SupplierSpec, q: f64) -> f64 {
    sup.benchmark_price * (q / sup.capacity).powi(sup.price_sensitivity as i32)
}

/// `ψ Σ q² + φ Σ q` over one supplier's deliveries.
pub fn supplier_emissions(sup: &SupplierSpec, row: &[f64]) -> Result<f64> {
    check_row(row)?;
    Ok(row.iter().map(|q| sup.emis_quad * q * q + sup.emis_lin * q).sum())
}

pub fn total_emissions(suppliers: &[SupplierSpec], q: &AllocationMatrix) -> Result<f64> {
    check_dims(suppliers, q)?;
    suppliers
        .iter()
        .zip(q.rows())
        .map(|(s, row)| supplier_emissions(s, row))
        .sum()
}

/// `Σ_l q (π(q) - c)`; negative when the dynamic price falls below cost.
pub fn supplier_profit(sup: &SupplierSpec, row: &[f64]) -> Result<f64> {
    check_row(row)?;
    Ok(row.iter().map(|&q| q * (price_unchecked(sup, q) - sup.unit_cost)).sum())
}

pub fn profits(suppliers: &[SupplierSpec], q: &AllocationMatrix) -> Result<Vec<f64>> {
    check_dims(suppliers, q)?;
    suppliers
        .iter()
        .zip(q.rows())
        .map(|(s, row)| supplier_profit(s, row))
        .collect()
}

fn check_dims(suppliers: &[SupplierSpec], q: &AllocationMatrix) -> Result<()> {
    if suppliers.len() != q.n_suppliers() {
        return Err(Error::DimensionMismatch(format!(
            "{} suppliers but allocation has {} rows",
            suppliers.len(),
            q.n_suppliers()
        )));
    }
    Ok(())
}
