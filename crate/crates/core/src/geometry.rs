//! Analytic coverage of a Poisson cellular network whose co-channel
//! interferers form a Matérn hard-core process, approximated by a Poisson
//! process of the thinned intensity.
//!
//! The typical user is served by its nearest base station. With exponential
//! fading of rate `mu`, coverage at SINR threshold `T` is
//!
//! ```text
//! P(T, Pt) = ∫_0^∞ 2πλr exp(-λπr²) exp(-μTσ²r^η / Pt) exp(-Λπ r² I(T, η)) dr
//! ```
//!
//! where `Λ` is the hard-core intensity and `I(T, η)` the interference factor.
//! Everything here works in linear units.

use crate::error::{require, Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Transmit power used as a stand-in for `Pt → ∞` when probing whether a
/// coverage target is attainable.
pub const CEILING_PROBE_POWER: f64 = 1e9;

/// Absolute tolerance of the inner (interference) integral.
pub const INTERFERENCE_TOL: f64 = 1e-10;

/// Absolute tolerance of the outer (radial) integral.
pub const COVERAGE_TOL: f64 = 1e-11;

/// Required agreement between coverage at the solved power and the target.
pub const POWER_SOLVE_TOL: f64 = 1e-6;

/// Integrand cut-off, relative to its peak value at the origin.
const TRUNCATION: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub id: String,
    /// Base stations per m².
    pub bs_density: f64,
    /// Users per m².
    pub user_density: f64,
    /// Linear SINR threshold.
    pub sinr_threshold: f64,
    /// Required coverage probability, strictly inside (0, 1).
    pub coverage_target: f64,
}

impl OperatorSpec {
    pub fn new(
        id: impl Into<String>,
        bs_density: f64,
        user_density: f64,
        sinr_threshold: f64,
        coverage_target: f64,
    ) -> Result<Self> {
        let op = Self {
            id: id.into(),
            bs_density,
            user_density,
            sinr_threshold,
            coverage_target,
        };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.bs_density.is_finite() && self.bs_density > 0.0, || {
            format!("operator {}: bs_density must be > 0, got {}", self.id, self.bs_density)
        })?;
        require(self.user_density.is_finite() && self.user_density >= 0.0, || {
            format!("operator {}: user_density must be >= 0, got {}", self.id, self.user_density)
        })?;
        require(self.sinr_threshold.is_finite() && self.sinr_threshold > 0.0, || {
            format!("operator {}: sinr_threshold must be > 0, got {}", self.id, self.sinr_threshold)
        })?;
        require(self.coverage_target > 0.0 && self.coverage_target < 1.0, || {
            format!(
                "operator {}: coverage_target must lie in (0, 1), got {}",
                self.id, self.coverage_target
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// Path-loss exponent, must exceed 2.
    pub path_loss_exp: f64,
    /// Noise power in watts. Zero gives the interference-limited network.
    pub noise_power: f64,
    /// Rate of the exponential fading (mean gain is `1 / fading_rate`).
    pub fading_rate: f64,
    /// Hard-core exclusion distance between co-channel BSs, metres.
    pub exclusion_distance: f64,
    /// Deployment area, m².
    pub area: f64,
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exp > 2.0) || !self.path_loss_exp.is_finite() {
            return Err(Error::DivergentIntegral(self.path_loss_exp));
        }
        require(self.noise_power.is_finite() && self.noise_power >= 0.0, || {
            format!("noise_power must be >= 0, got {}", self.noise_power)
        })?;
        require(self.fading_rate.is_finite() && self.fading_rate > 0.0, || {
            format!("fading_rate must be > 0, got {}", self.fading_rate)
        })?;
        require(
            self.exclusion_distance.is_finite() && self.exclusion_distance > 0.0,
            || format!("exclusion_distance must be > 0, got {}", self.exclusion_distance),
        )?;
        require(self.area.is_finite() && self.area > 0.0, || {
            format!("area must be > 0, got {}", self.area)
        })
    }
}

/// Intensity of the Matérn hard-core process obtained by thinning a PPP of
/// intensity `bs_density` with exclusion radius `exclusion_distance`.
pub fn mhcpp_intensity(bs_density: f64, exclusion_distance: f64) -> Result<f64> {
    require(bs_density.is_finite() && bs_density > 0.0, || {
        format!("bs_density must be finite and > 0, got {bs_density}")
    })?;
    require(
        exclusion_distance.is_finite() && exclusion_distance > 0.0,
        || format!("exclusion_distance must be finite and > 0, got {exclusion_distance}"),
    )?;
    let disk = PI * exclusion_distance * exclusion_distance;
    // -expm1 keeps full precision when bs_density * disk is tiny.
    Ok(-(-bs_density * disk).exp_m1() / disk)
}

/// The factor `T^(2/η) ∫_{T^(-2/η)}^∞ du / (1 + u^(η/2))`.
///
/// Substituting `u = T^(-2/η) s^(-2/(η-2))` maps the tail onto `(0, 1]` and
/// leaves the smooth integrand `k T / (1 + T s^p)` with `k = 2/(η-2)` and
/// `p = η/(η-2)`.
pub fn interference_factor(sinr_threshold: f64, path_loss_exp: f64) -> Result<f64> {
    if !(path_loss_exp > 2.0) || !path_loss_exp.is_finite() {
        return Err(Error::DivergentIntegral(path_loss_exp));
    }
    require(sinr_threshold.is_finite() && sinr_threshold > 0.0, || {
        format!("sinr_threshold must be finite and > 0, got {sinr_threshold}")
    })?;
    let k = 2.0 / (path_loss_exp - 2.0);
    let p = path_loss_exp / (path_loss_exp - 2.0);
    let t = sinr_threshold;
    let q = integrate(
        |s: f64| k * t / (1.0 + t * s.powf(p)),
        0.0,
        1.0,
        QuadOptions {
            abs_tol: INTERFERENCE_TOL,
            max_subintervals: 4000,
        },
    )?;
    Ok(q.value)
}

/// `Λ·I(T, η) / λ`: interference strength relative to the serving density.
fn interference_ratio(op: &OperatorSpec, phys: &PhysicsParams) -> Result<f64> {
    let thinned = mhcpp_intensity(op.bs_density, phys.exclusion_distance)?;
    let factor = interference_factor(op.sinr_threshold, phys.path_loss_exp)?;
    Ok(thinned * factor / op.bs_density)
}

/// Coverage probability of a typical user at the given per-user transmit
/// power (watts).
pub fn coverage_probability(op: &OperatorSpec, phys: &PhysicsParams, transmit_power: f64) -> Result<f64> {
    op.validate()?;
    phys.validate()?;
    require(transmit_power > 0.0 && !transmit_power.is_nan(), || {
        format!("transmit_power must be > 0, got {transmit_power}")
    })?;
    let rho = interference_ratio(op, phys)?;
    let decay = 1.0 + rho;
    let half_eta = 0.5 * phys.path_loss_exp;
    // With v = λπr² the radial integral becomes
    //   ∫_0^∞ exp(-v(1+ρ)) exp(-β v^(η/2)) dv.
    let beta = phys.fading_rate * op.sinr_threshold * phys.noise_power
        / (transmit_power * (op.bs_density * PI).powf(half_eta));
    let v_max = -TRUNCATION.ln() / decay;
    let q = integrate(
        |v: f64| (-v * decay - beta * v.powf(half_eta)).exp(),
        0.0,
        v_max,
        QuadOptions {
            abs_tol: COVERAGE_TOL,
            max_subintervals: 4000,
        },
    )?;
    Ok(q.value.clamp(0.0, 1.0))
}

/// Closed-form coverage as `Pt → ∞` (noise-free network): `1 / (1 + ρ)`.
pub fn interference_limited_coverage(op: &OperatorSpec, phys: &PhysicsParams) -> Result<f64> {
    op.validate()?;
    phys.validate()?;
    Ok(1.0 / (1.0 + interference_ratio(op, phys)?))
}

/// Coverage at [`CEILING_PROBE_POWER`], the attainability bound used by
/// [`solve_transmit_power`].
pub fn coverage_ceiling(op: &OperatorSpec, phys: &PhysicsParams) -> Result<f64> {
    coverage_probability(op, phys, CEILING_PROBE_POWER)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootMethod {
    /// Newton steps in log-power with a bisection safeguard.
    NewtonBisection,
    /// Pure bisection in log-power; slower, used for cross-checks.
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSolution {
    pub transmit_power: f64,
    pub coverage: f64,
    pub ceiling: f64,
    pub newton_steps: usize,
    pub bisection_steps: usize,
}

/// Transmit power (watts per user) at which coverage equals the operator's
/// target.
pub fn solve_transmit_power(op: &OperatorSpec, phys: &PhysicsParams) -> Result<f64> {
    solve_transmit_power_with(op, phys, RootMethod::NewtonBisection).map(|s| s.transmit_power)
}

pub fn solve_transmit_power_with(
    op: &OperatorSpec,
    phys: &PhysicsParams,
    method: RootMethod,
) -> Result<PowerSolution> {
    let target = op.coverage_target;
    let ceiling = coverage_ceiling(op, phys)?;
    if target >= ceiling {
        return Err(Error::InfeasibleQos { target, ceiling });
    }
    // Coverage is increasing in y = ln Pt, so solve g(y) = cov(e^y) - target.
    let g = |y: f64| coverage_probability(op, phys, y.exp()).map(|c| c - target);

    let mut lo = 0.0;
    let mut g_lo = g(lo)?;
    let mut hi = CEILING_PROBE_POWER.ln();
    let mut g_hi = ceiling - target;
    if g_lo >= 0.0 {
        hi = lo;
        g_hi = g_lo;
        let mut found = false;
        for _ in 0..200 {
            lo -= 5.0;
            g_lo = g(lo)?;
            if g_lo < 0.0 {
                found = true;
                break;
            }
            hi = lo;
            g_hi = g_lo;
        }
        if !found {
            return Err(Error::Numerical {
                what: "transmit power bracketing",
                achieved: g_lo,
            });
        }
    }
    if g_hi.abs() <= 1e-12 {
        return finish(op, phys, hi, ceiling, 0, 0);
    }

    let inner_tol = 1e-9;
    let mut y = 0.5 * (lo + hi);
    let mut newton_steps = 0;
    let mut bisection_steps = 0;
    for _ in 0..300 {
        let gy = g(y)?;
        if gy.abs() <= inner_tol {
            return finish(op, phys, y, ceiling, newton_steps, bisection_steps);
        }
        if gy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        if hi - lo < 1e-13 * (1.0 + y.abs()) {
            break;
        }
        let next = match method {
            RootMethod::NewtonBisection => {
                let h = 1e-4;
                let slope = (g(y + h)? - g(y - h)?) / (2.0 * h);
                let candidate = y - gy / slope;
                if slope > 0.0 && candidate > lo && candidate < hi {
                    newton_steps += 1;
                    Some(candidate)
                } else {
                    None
                }
            }
            RootMethod::Bisection => None,
        };
        y = next.unwrap_or_else(|| {
            bisection_steps += 1;
            0.5 * (lo + hi)
        });
    }
    let achieved = g(y)?;
    if achieved.abs() <= POWER_SOLVE_TOL {
        finish(op, phys, y, ceiling, newton_steps, bisection_steps)
    } else {
        Err(Error::Numerical {
            what: "transmit power inversion",
            achieved: achieved.abs(),
        })
    }
}

fn finish(
    op: &OperatorSpec,
    phys: &PhysicsParams,
    y: f64,
    ceiling: f64,
    newton_steps: usize,
    bisection_steps: usize,
) -> Result<PowerSolution> {
    let transmit_power = y.exp();
    Ok(PowerSolution {
        transmit_power,
        coverage: coverage_probability(op, phys, transmit_power)?,
        ceiling,
        newton_steps,
        bisection_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::db_to_linear;

    fn lambda_bs() -> f64 {
        1.0 / (PI * 200.0 * 200.0)
    }

    pub(crate) fn phys() -> PhysicsParams {
        PhysicsParams {
            path_loss_exp: 4.0,
            noise_power: db_to_linear(-115.0),
            fading_rate: 1.0,
            exclusion_distance: 1000.0,
            area: 1e8,
        }
    }

    fn op(t_db: f64, target: f64) -> OperatorSpec {
        OperatorSpec::new("op", lambda_bs(), 15e-6, db_to_linear(t_db), target).unwrap()
    }

    fn arctan_form(t: f64) -> f64 {
        t.sqrt() * (PI / 2.0 - (1.0 / t.sqrt()).atan())
    }

    #[test]
    fn mhcpp_small_density_limit() {
        let lam = 1e-9;
        let ratio = mhcpp_intensity(lam, 100.0).unwrap() / lam;
        assert!((ratio - 1.0).abs() < 1e-3);
    }

    #[test]
    fn mhcpp_saturates() {
        let v = mhcpp_intensity(1e6, 100.0).unwrap();
        let cap = 1.0 / (PI * 100.0 * 100.0);
        assert!((v - cap).abs() / cap < 1e-12);
    }

    #[test]
    fn mhcpp_reference_value() {
        // (1 - e^-4) / (π·400²), evaluated independently at high precision.
        let expected = 1.952_998_982_835_839_3e-6;
        let v = mhcpp_intensity(lambda_bs(), 400.0).unwrap();
        assert!((v - expected).abs() / expected < 1e-12, "{v}");
    }

    #[test]
    fn mhcpp_rejects_bad_input() {
        assert!(mhcpp_intensity(0.0, 1.0).is_err());
        assert!(mhcpp_intensity(1.0, -1.0).is_err());
        assert!(mhcpp_intensity(f64::NAN, 1.0).is_err());
        assert!(mhcpp_intensity(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn interference_factor_matches_arctan_at_one() {
        let v = interference_factor(1.0, 4.0).unwrap();
        assert!((v - PI / 4.0).abs() < 1e-10);
    }

    #[test]
    fn interference_factor_matches_arctan_on_log_grid() {
        for i in 0..50 {
            let t = 10f64.powf(-2.0 + 5.0 * i as f64 / 49.0);
            let v = interference_factor(t, 4.0).unwrap();
            assert!((v - arctan_form(t)).abs() < 1e-8, "T={t}: {v}");
        }
    }

    #[test]
    fn interference_factor_vanishes_with_threshold() {
        assert!(interference_factor(1e-12, 4.0).unwrap() < 1e-11);
    }

    #[test]
    fn interference_factor_divergent_exponent() {
        assert!(matches!(interference_factor(1.0, 2.0), Err(Error::DivergentIntegral(_))));
        assert!(matches!(interference_factor(1.0, 1.5), Err(Error::DivergentIntegral(_))));
    }

    #[test]
    fn interference_factor_other_exponents_match_direct_quadrature() {
        // Direct evaluation on the untransformed integral, truncated far out.
        for &eta in &[3.0f64, 3.5, 5.0] {
            for &t in &[0.5f64, 3.0, 30.0] {
                let a = t.powf(-2.0 / eta);
                let upper = 1e7;
                let direct = integrate(
                    |u: f64| 1.0 / (1.0 + u.powf(eta / 2.0)),
                    a,
                    upper,
                    QuadOptions {
                        abs_tol: 1e-12,
                        max_subintervals: 20000,
                    },
                )
                .unwrap()
                .value;
                // analytic tail beyond `upper`: ∫ u^(-η/2) du
                let tail = upper.powf(1.0 - eta / 2.0) / (eta / 2.0 - 1.0);
                let expected = t.powf(2.0 / eta) * (direct + tail);
                let got = interference_factor(t, eta).unwrap();
                assert!((got - expected).abs() < 1e-6 * expected.max(1.0), "eta {eta} t {t}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn coverage_approaches_zero_for_huge_threshold() {
        let c = coverage_probability(&op(100.0, 0.5), &phys(), 10.0).unwrap();
        assert!(c < 1e-3, "{c}");
    }

    #[test]
    fn coverage_noise_free_limit() {
        let mut quiet = phys();
        quiet.noise_power = 0.0;
        let o = op(5.0, 0.9);
        let closed = interference_limited_coverage(&o, &phys()).unwrap();
        let noiseless = coverage_probability(&o, &quiet, 1.0).unwrap();
        assert!((closed - noiseless).abs() < 1e-9);
        let mut last_gap = f64::INFINITY;
        for p in [1e-2, 1.0, 1e2, 1e4, 1e6] {
            let gap = noiseless - coverage_probability(&o, &phys(), p).unwrap();
            assert!(gap >= -1e-10 && gap <= last_gap + 1e-12);
            last_gap = gap;
        }
        assert!(last_gap < 1e-6);
    }

    #[test]
    fn coverage_monotone_in_power_and_threshold() {
        let o = op(10.0, 0.8);
        let mut prev = 0.0;
        for i in 0..25 {
            let p = 10f64.powf(-3.0 + 0.3 * i as f64);
            let c = coverage_probability(&o, &phys(), p).unwrap();
            assert!(c >= prev - 1e-12);
            prev = c;
        }
        let mut prev = 1.0;
        for i in 0..25 {
            let t = -5.0 + i as f64;
            let c = coverage_probability(&op(t, 0.5), &phys(), 1.0).unwrap();
            assert!(c <= prev + 1e-12);
            prev = c;
        }
    }

    #[test]
    fn solve_round_trip_and_cross_check() {
        let o = op(5.0, 0.9);
        let newton = solve_transmit_power_with(&o, &phys(), RootMethod::NewtonBisection).unwrap();
        assert!((newton.coverage - 0.9).abs() <= 1e-6);
        let bisect = solve_transmit_power_with(&o, &phys(), RootMethod::Bisection).unwrap();
        assert!((bisect.coverage - 0.9).abs() <= 1e-6);
        assert!((newton.transmit_power - bisect.transmit_power).abs() / bisect.transmit_power < 1e-4);
    }

    #[test]
    fn solve_is_monotone_in_target() {
        let a = solve_transmit_power(&op(10.0, 0.6), &phys()).unwrap();
        let b = solve_transmit_power(&op(10.0, 0.8), &phys()).unwrap();
        assert!(a < b);
    }

    #[test]
    fn solve_rejects_targets_above_ceiling() {
        let mut o = op(15.0, 0.5);
        let ceiling = coverage_ceiling(&o, &phys()).unwrap();
        o.coverage_target = (ceiling + 0.01).min(0.999);
        match solve_transmit_power(&o, &phys()) {
            Err(Error::InfeasibleQos { ceiling: c, .. }) => assert!((c - ceiling).abs() < 1e-12),
            other => panic!("expected infeasible QoS, got {other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        assert!(OperatorSpec::new("x", 1e-5, 1e-5, 1.0, 1.2).is_err());
        assert!(OperatorSpec::new("x", 0.0, 1e-5, 1.0, 0.5).is_err());
        assert!(OperatorSpec::new("x", 1e-5, -1.0, 1.0, 0.5).is_err());
        let mut p = phys();
        p.path_loss_exp = 2.0;
        assert!(matches!(p.validate(), Err(Error::DivergentIntegral(_))));
        assert!(coverage_probability(&op(5.0, 0.5), &phys(), 0.0).is_err());
    }
}
