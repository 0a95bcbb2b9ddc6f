//! Monte Carlo SINR simulator used to validate the analytic coverage.
//!
//! Each trial draws a Poisson pattern of base stations around a test user at
//! the origin, thins it with a Matérn type-II rule to obtain the co-channel
//! interferers, draws exponential fades and checks the SINR threshold. The
//! user is served by the nearest station of the unthinned pattern.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`): trial `k` of a run with
//! seed `s` uses stream `k` of the generator seeded with `s`, so results do
//! not depend on thread scheduling.

use crate::error::{require, Error, Result};
use crate::geometry::{OperatorSpec, PhysicsParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Name of the generator recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), one stream per trial";

/// Largest expected point count accepted for a single pattern.
const MAX_EXPECTED_POINTS: f64 = 5e7;

/// Axis-aligned rectangle, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn centered_square(half_side: f64) -> Self {
        Self {
            x_min: -half_side,
            x_max: half_side,
            y_min: -half_side,
            y_max: half_side,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    fn validate(&self) -> Result<()> {
        require(
            [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
                && self.x_max > self.x_min
                && self.y_max > self.y_min,
            || format!("degenerate window {self:?}"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub points: Vec<[f64; 2]>,
    pub window: Window,
    pub seed: u64,
}

impl PointPattern {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with columns `x,y,retained`. Without flags every point is marked
    /// retained.
    pub fn to_csv(&self, retained: Option<&[bool]>) -> String {
        let mut out = String::from("x,y,retained\n");
        for (i, p) in self.points.iter().enumerate() {
            let keep = retained.map_or(true, |r| r[i]);
            let _ = writeln!(out, "{:e},{:e},{}", p[0], p[1], u8::from(keep));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n_trials: usize,
    /// Trials whose first pattern was empty and had to be redrawn.
    pub resampled: usize,
}

impl CoverageEstimate {
    fn from_hits(hits: usize, n_trials: usize, resampled: usize) -> Self {
        let mean = hits as f64 / n_trials as f64;
        Self {
            mean,
            half_width_95: 1.96 * (mean * (1.0 - mean) / n_trials as f64).sqrt(),
            n_trials,
            resampled,
        }
    }
}

fn check_density(density: f64, window: &Window) -> Result<f64> {
    require(density.is_finite() && density > 0.0, || {
        format!("density must be finite and > 0, got {density}")
    })?;
    window.validate()?;
    let mean = density * window.area();
    require(mean.is_finite() && mean <= MAX_EXPECTED_POINTS, || {
        format!("expected point count {mean:e} exceeds {MAX_EXPECTED_POINTS:e}")
    })?;
    Ok(mean)
}

fn draw_ppp<R: Rng>(rng: &mut R, mean: f64, window: &Window) -> Vec<[f64; 2]> {
    let count = Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0);
    (0..count)
        .map(|_| {
            [
                rng.random_range(window.x_min..window.x_max),
                rng.random_range(window.y_min..window.y_max),
            ]
        })
        .collect()
}

/// Homogeneous Poisson pattern of `density` points per m² on `window`.
pub fn sample_ppp(density: f64, window: Window, seed: u64) -> Result<PointPattern> {
    let mean = check_density(density, &window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(PointPattern {
        points: draw_ppp(&mut rng, mean, &window),
        window,
        seed,
    })
}

/// Matérn type-II retention flags: a point survives iff no other point within
/// `radius` carries a smaller mark. Equal marks fall back to index order.
pub fn matern_retained(points: &[[f64; 2]], marks: &[f64], radius: f64) -> Vec<bool> {
    assert_eq!(points.len(), marks.len());
    let r2 = radius * radius;
    let cell = |p: [f64; 2]| ((p[0] / radius).floor() as i64, (p[1] / radius).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (cx, cy) = cell(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                        continue;
                    };
                    for &j in bucket {
                        if j == i {
                            continue;
                        }
                        let q = points[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 < r2 && (marks[j], j) < (marks[i], i) {
                            return false;
                        }
                    }
                }
            }
            true
        })
        .collect()
}

/// Thins `pattern` with uniform marks drawn from `seed`.
pub fn matern_thin(pattern: &PointPattern, exclusion_distance: f64, seed: u64) -> Result<PointPattern> {
    let (thinned, _) = matern_thin_with_flags(pattern, exclusion_distance, seed)?;
    Ok(thinned)
}

/// As [`matern_thin`], also returning per-point retention flags of the input.
pub fn matern_thin_with_flags(
    pattern: &PointPattern,
    exclusion_distance: f64,
    seed: u64,
) -> Result<(PointPattern, Vec<bool>)> {
    require(
        exclusion_distance.is_finite() && exclusion_distance > 0.0,
        || format!("exclusion_distance must be > 0, got {exclusion_distance}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let marks: Vec<f64> = (0..pattern.len()).map(|_| rng.random::<f64>()).collect();
    let flags = matern_retained(&pattern.points, &marks, exclusion_distance);
    let points = pattern
        .points
        .iter()
        .zip(&flags)
        .filter_map(|(&p, &keep)| keep.then_some(p))
        .collect();
    Ok((
        PointPattern {
            points,
            window: pattern.window,
            seed,
        },
        flags,
    ))
}

/// Half side of the simulation square: at least ten mean nearest-neighbour
/// distances of the serving process and five exclusion radii.
pub fn simulation_half_side(op: &OperatorSpec, phys: &PhysicsParams) -> f64 {
    let mean_nn = 0.5 / op.bs_density.sqrt();
    (10.0 * mean_nn).max(5.0 * phys.exclusion_distance)
}

struct Trial {
    covered: bool,
    resampled: bool,
}

fn run_trial(
    op: &OperatorSpec,
    phys: &PhysicsParams,
    transmit_power: f64,
    window: &Window,
    mean: f64,
    fading: &Exp<f64>,
    rng: &mut ChaCha8Rng,
) -> Trial {
    let mut resampled = false;
    let points = loop {
        let pts = draw_ppp(rng, mean, window);
        if !pts.is_empty() {
            break pts;
        }
        resampled = true;
    };
    let dist2: Vec<f64> = points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
    let serving = dist2
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("pattern is non-empty");
    let marks: Vec<f64> = (0..points.len()).map(|_| rng.random::<f64>()).collect();
    let retained = matern_retained(&points, &marks, phys.exclusion_distance);

    let half_eta = 0.5 * phys.path_loss_exp;
    let signal = transmit_power * fading.sample(rng) * dist2[serving].powf(-half_eta);
    let interference: f64 = (0..points.len())
        .filter(|&j| j != serving && retained[j])
        .map(|j| transmit_power * fading.sample(rng) * dist2[j].powf(-half_eta))
        .sum();
    Trial {
        covered: signal > op.sinr_threshold * (phys.noise_power + interference),
        resampled,
    }
}

/// Fraction of `n_trials` independent snapshots in which the test user's
/// SINR exceeds the operator threshold.
pub fn empirical_coverage(
    op: &OperatorSpec,
    phys: &PhysicsParams,
    transmit_power: f64,
    n_trials: usize,
    seed: u64,
) -> Result<CoverageEstimate> {
    op.validate()?;
    phys.validate()?;
    require(n_trials >= 1, || "n_trials must be >= 1".to_string())?;
    require(transmit_power > 0.0 && transmit_power.is_finite(), || {
        format!("transmit_power must be finite and > 0, got {transmit_power}")
    })?;
    let window = Window::centered_square(simulation_half_side(op, phys));
    let mean = check_density(op.bs_density, &window)?;
    let fading = Exp::new(phys.fading_rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let (hits, resampled) = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let t = run_trial(op, phys, transmit_power, &window, mean, &fading, &mut rng);
            (usize::from(t.covered), usize::from(t.resampled))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(CoverageEstimate::from_hits(hits, n_trials, resampled))
}

/// Point pattern and retention flags of a single trial, for inspection.
pub fn trial_snapshot(
    op: &OperatorSpec,
    phys: &PhysicsParams,
    seed: u64,
    trial: u64,
) -> Result<(PointPattern, Vec<bool>)> {
    let window = Window::centered_square(simulation_half_side(op, phys));
    let mean = check_density(op.bs_density, &window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let points = draw_ppp(&mut rng, mean, &window);
    let marks: Vec<f64> = (0..points.len()).map(|_| rng.random::<f64>()).collect();
    let flags = matern_retained(&points, &marks, phys.exclusion_distance);
    Ok((PointPattern { points, window, seed }, flags))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_pair_distance(points: &[[f64; 2]]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
                best = best.min(d);
            }
        }
        best
    }

    #[test]
    fn vanishing_density_gives_empty_pattern() {
        let p = sample_ppp(1e-30, Window::centered_square(100.0), 3).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn same_seed_same_pattern() {
        let w = Window::centered_square(500.0);
        assert_eq!(sample_ppp(1e-4, w, 9).unwrap(), sample_ppp(1e-4, w, 9).unwrap());
        assert_ne!(sample_ppp(1e-4, w, 9).unwrap(), sample_ppp(1e-4, w, 10).unwrap());
    }

    #[test]
    fn points_stay_inside_window() {
        let w = Window {
            x_min: 10.0,
            x_max: 60.0,
            y_min: -5.0,
            y_max: 5.0,
        };
        let p = sample_ppp(0.5, w, 1).unwrap();
        assert!(!p.is_empty());
        assert!(p.points.iter().all(|&q| w.contains(q)));
    }

    #[test]
    fn ppp_count_mean() {
        let w = Window::centered_square(500.0);
        let trials = 10_000;
        let total: usize = (0..trials).map(|s| sample_ppp(1e-4, w, s).unwrap().len()).sum();
        let mean = total as f64 / trials as f64;
        // 3σ of the sample mean of Poisson(100) over 10⁴ draws is 0.3
        assert!((mean - 100.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn ppp_rejects_overflowing_density() {
        assert!(sample_ppp(1e3, Window::centered_square(1e6), 0).is_err());
        assert!(sample_ppp(-1.0, Window::centered_square(1.0), 0).is_err());
        let degenerate = Window {
            x_min: 0.0,
            x_max: 0.0,
            y_min: 0.0,
            y_max: 1.0,
        };
        assert!(sample_ppp(1.0, degenerate, 0).is_err());
    }

    #[test]
    fn well_separated_pattern_is_untouched() {
        let pattern = PointPattern {
            points: vec![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]],
            window: Window::centered_square(20.0),
            seed: 0,
        };
        let thinned = matern_thin(&pattern, 5.0, 1).unwrap();
        assert_eq!(thinned.points, pattern.points);
    }

    #[test]
    fn conflicting_pair_keeps_exactly_one() {
        let pattern = PointPattern {
            points: vec![[0.0, 0.0], [1.0, 0.0]],
            window: Window::centered_square(5.0),
            seed: 0,
        };
        for seed in 0..20 {
            assert_eq!(matern_thin(&pattern, 2.0, seed).unwrap().len(), 1);
        }
    }

    #[test]
    fn thinned_patterns_respect_hard_core() {
        for seed in 0..30 {
            let pattern = sample_ppp(2e-3, Window::centered_square(200.0), seed).unwrap();
            let thinned = matern_thin(&pattern, 25.0, seed + 100).unwrap();
            assert!(min_pair_distance(&thinned.points) >= 25.0);
        }
    }

    #[test]
    fn csv_dump_has_flags() {
        let pattern = PointPattern {
            points: vec![[0.0, 0.0], [1.0, 2.0]],
            window: Window::centered_square(5.0),
            seed: 0,
        };
        let csv = pattern.to_csv(Some(&[true, false]));
        assert_eq!(csv, "x,y,retained\n0e0,0e0,1\n1e0,2e0,0\n");
    }

    #[test]
    fn half_width_matches_binomial_formula() {
        let e = CoverageEstimate::from_hits(700, 1000, 0);
        assert!((e.half_width_95 - 1.96 * (0.7f64 * 0.3 / 1000.0).sqrt()).abs() < 1e-15);
    }
}
