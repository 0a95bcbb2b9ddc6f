//! Output files of a run.
//!
//! * `results.csv`: one row per sweep point. Columns are `axis_value`,
//!   `feasible`, then per operator `{id}_power_w` (consumed power per BS),
//!   `{id}_energy_j` (network energy demand), `{id}_unit_price`
//!   (energy-weighted mean price paid), then per supplier
//!   `{id}_production_j`, `{id}_profit`, `{id}_emissions`. Numeric cells are
//!   empty unless the point was solved.
//! * `allocations.csv`: the allocation in long form, solved points only.
//! * `diagnostics.csv`: status, reason, solver statistics, transmit powers,
//!   analytic and Monte Carlo coverage.
//! * `run_meta.json`: configuration echo, versions, seeds.
//! * `*-vs-axis.svg`: one plot per result group, one series per column.
//!
//! Floats are written in Rust's shortest round-trip form, so every number
//! read back is bit-identical to the one computed.

use super::config::ScenarioConfig;
use super::pipeline::{PointStatus, SweepResult};
use crate::error::{Error, Result};
use crate::market;
use crate::spatial::RNG_ALGORITHM;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub files: Vec<PathBuf>,
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn results_header(cfg: &ScenarioConfig) -> Vec<String> {
    let mut h = vec!["axis_value".to_string(), "feasible".to_string()];
    for op in &cfg.operators {
        h.extend(["power_w", "energy_j", "unit_price"].map(|s| format!("{}_{s}", op.id)));
    }
    for s in &cfg.suppliers {
        h.extend(["production_j", "profit", "emissions"].map(|c| format!("{}_{c}", s.id)));
    }
    h
}

/// Numeric values of one results row, in header order after the first two
/// columns; `None` unless the point was solved.
pub fn results_values(r: &SweepResult) -> Option<Vec<f64>> {
    let (inst, sol) = (r.instance.as_ref()?, r.solution.as_ref()?);
    if r.status != PointStatus::Solved {
        return None;
    }
    let q = &sol.allocation;
    let mut v = Vec::new();
    for (l, op) in r.operators.iter().enumerate() {
        let op = op.as_ref()?;
        let paid: f64 = inst
            .suppliers
            .iter()
            .enumerate()
            .map(|(n, s)| q.get(n, l) * market::price_unchecked(s, q.get(n, l)))
            .sum();
        let received = q.column_sum(l);
        v.extend([
            op.demand.per_bs_consumed,
            op.demand.total_energy,
            if received > 0.0 { paid / received } else { 0.0 },
        ]);
    }
    for (n, s) in inst.suppliers.iter().enumerate() {
        v.extend([
            q.row(n).iter().sum(),
            sol.profits[n],
            market::supplier_emissions(s, q.row(n)).ok()?,
        ]);
    }
    Some(v)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn emit_outputs(cfg: &ScenarioConfig, results: &[SweepResult], out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let path = dir.join("results.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(results_header(cfg)).map_err(|e| csv_err(&path, e))?;
    let width = 3 * (cfg.operators.len() + cfg.suppliers.len());
    for r in results {
        let mut row = vec![opt(r.axis_value), r.feasible().to_string()];
        match results_values(r) {
            Some(v) => row.extend(v.into_iter().map(num)),
            None => row.extend(std::iter::repeat_n(String::new(), width)),
        }
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    files.push(path);

    let path = dir.join("allocations.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["axis_value", "supplier", "operator", "energy_j"]).map_err(|e| csv_err(&path, e))?;
    for r in results.iter().filter(|r| r.feasible()) {
        let q = &r.solution.as_ref().expect("solved").allocation;
        for (n, s) in cfg.suppliers.iter().enumerate() {
            for (l, op) in cfg.operators.iter().enumerate() {
                w.write_record([opt(r.axis_value), s.id.clone(), op.id.clone(), num(q.get(n, l))])
                    .map_err(|e| csv_err(&path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    files.push(path);

    let path = dir.join("diagnostics.csv");
    let mut w = csv_writer(&path)?;
    let mut header: Vec<String> = [
        "axis_value",
        "status",
        "reason",
        "solver",
        "iterations",
        "converged",
        "max_violation",
        "kkt_residual",
        "utility",
        "dual_bound",
        "grid_bound",
        "emissions_weighted",
        "notes",
    ]
    .map(String::from)
    .to_vec();
    for op in &cfg.operators {
        header.extend(
            ["tx_power_w", "n_bs", "coverage", "mc_coverage", "mc_half_width"].map(|c| format!("{}_{c}", op.id)),
        );
    }
    for s in &cfg.suppliers {
        header.push(format!("{}_supply_per_bs_j", s.id));
    }
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for r in results {
        let d = r.solution.as_ref().map(|s| &s.diagnostics);
        let mut row = vec![
            opt(r.axis_value),
            r.status.to_string(),
            r.reason.clone().unwrap_or_default(),
            d.map(|d| d.method.to_string()).unwrap_or_default(),
            d.map(|d| d.iterations.to_string()).unwrap_or_default(),
            d.map(|d| d.converged.to_string()).unwrap_or_default(),
            opt(d.map(|d| d.max_violation)),
            opt(d.map(|d| d.kkt_residual)),
            opt(r.solution.as_ref().map(|s| s.utility)),
            opt(d.and_then(|d| d.dual_bound)),
            opt(d.and_then(|d| d.grid_bound)),
            opt(d.map(|d| d.emissions)),
            d.map(|d| d.notes.join("; ")).unwrap_or_default(),
        ];
        for op in &r.operators {
            let o = op.as_ref();
            row.extend([
                opt(o.map(|o| o.transmit_power)),
                opt(o.map(|o| o.demand.n_bs)),
                opt(o.map(|o| o.coverage)),
                opt(o.and_then(|o| o.mc.as_ref()).map(|m| m.mean)),
                opt(o.and_then(|o| o.mc.as_ref()).map(|m| m.half_width_95)),
            ]);
        }
        for n in 0..cfg.suppliers.len() {
            row.push(opt(d.map(|d| d.supply_per_bs[n])));
        }
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    files.push(path);

    let path = dir.join("run_meta.json");
    let count = |s: PointStatus| results.iter().filter(|r| r.status == s).count();
    let meta = json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "profile": cfg.profile.map(|p| p.name()),
        "config": cfg.document(),
        "sweep": cfg.sweep.as_ref().map(|s| json!({ "axis": s.axis, "values": cfg.sweep_values() })),
        "mc": cfg.mc.map(|m| json!({ "trials": m.trials, "seed": m.seed, "rng": RNG_ALGORITHM })),
        "solver": cfg.solver.kind,
        "points": {
            "total": results.len(),
            "solved": count(PointStatus::Solved),
            "infeasible": count(PointStatus::Infeasible),
            "failed": count(PointStatus::Failed),
        },
        "files": ["results.csv", "allocations.csv", "diagnostics.csv"],
    });
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    files.push(path);

    if !results.is_empty() {
        files.extend(super::plot::write_plots(cfg, results, dir)?);
    }
    Ok(Manifest { files })
}
