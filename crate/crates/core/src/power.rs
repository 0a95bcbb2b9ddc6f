//! Per-operator energy demand from the linear BS power model
//! `P_BS = a·P_tx + b`.

use crate::error::{require, Result};
use crate::geometry::{OperatorSpec, PhysicsParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModelParams {
    /// Amplifier and feeder slope `a` (dimensionless).
    pub amp_slope: f64,
    /// Site offset `b`, watts.
    pub site_offset: f64,
    /// Operation time `τ`, seconds.
    pub duration: f64,
}

impl PowerModelParams {
    pub fn validate(&self) -> Result<()> {
        require(self.amp_slope.is_finite() && self.amp_slope > 0.0, || {
            format!("amp_slope must be > 0, got {}", self.amp_slope)
        })?;
        require(self.site_offset.is_finite() && self.site_offset >= 0.0, || {
            format!("site_offset must be >= 0, got {}", self.site_offset)
        })?;
        require(self.duration.is_finite() && self.duration > 0.0, || {
            format!("duration must be > 0, got {}", self.duration)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDemand {
    pub operator_id: String,
    /// Expected number of base stations, `λ_BS·𝒜` (not rounded).
    pub n_bs: f64,
    pub users_per_bs: f64,
    /// Radiated power per BS, watts.
    pub per_bs_radiated: f64,
    /// Consumed power per BS, watts.
    pub per_bs_consumed: f64,
    /// Energy over the operation time for the whole network, joules.
    pub total_energy: f64,
}

/// Mean users served per BS, `λ_u𝒜 / (λ_BS𝒜)`.
pub fn users_per_bs(op: &OperatorSpec, area: f64) -> Result<f64> {
    require(area.is_finite() && area > 0.0, || format!("area must be > 0, got {area}"))?;
    require(op.bs_density > 0.0, || format!("operator {}: zero BS density", op.id))?;
    let n_bs = op.bs_density * area;
    Ok(op.user_density * area / n_bs)
}

/// Energy demand of one operator given the per-user transmit power that meets
/// its coverage target.
pub fn operator_demand(
    op: &OperatorSpec,
    phys: &PhysicsParams,
    pm: &PowerModelParams,
    per_user_power: f64,
) -> Result<OperatorDemand> {
    op.validate()?;
    phys.validate()?;
    pm.validate()?;
    require(per_user_power.is_finite() && per_user_power >= 0.0, || {
        format!("per_user_power must be >= 0, got {per_user_power}")
    })?;
    let n_bs = op.bs_density * phys.area;
    let users = users_per_bs(op, phys.area)?;
    let radiated = per_user_power * users;
    let consumed = pm.amp_slope * radiated + pm.site_offset;
    Ok(OperatorDemand {
        operator_id: op.id.clone(),
        n_bs,
        users_per_bs: users,
        per_bs_radiated: radiated,
        per_bs_consumed: consumed,
        total_energy: n_bs * consumed * pm.duration,
    })
}
