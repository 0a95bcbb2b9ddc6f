//! Scenario files: strict TOML with units in key names.
//!
//! A file may name a built-in `profile`; the file is then layered on top of
//! it. Tables merge key by key, and the `operators` / `suppliers` arrays merge
//! element-wise by `id` (unknown ids are appended). All dB, kJ and km² inputs
//! are converted to linear SI units here and nowhere else.

use crate::drm::{CapacityConvention, Fairness, ProblemInstance, SolveOptions, SolverKind, SubgradientOptions};
use crate::error::{Error, Result};
use crate::geometry::{OperatorSpec, PhysicsParams};
use crate::market::SupplierSpec;
use crate::power::{OperatorDemand, PowerModelParams};
use crate::units::{db_to_linear, kj_to_j, km2_to_m2, per_km2_to_per_m2};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use toml::{Table, Value};

const PAPER_BASELINE: &str = include_str!("profiles/paper-baseline.toml");
const FIG1: &str = include_str!("profiles/fig1.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    PaperBaseline,
    Fig1,
}

impl Profile {
    pub const ALL: [Profile; 2] = [Profile::PaperBaseline, Profile::Fig1];

    pub fn name(self) -> &'static str {
        match self {
            Profile::PaperBaseline => "paper-baseline",
            Profile::Fig1 => "fig1",
        }
    }

    /// The profile's TOML source.
    pub fn source(self) -> &'static str {
        match self {
            Profile::PaperBaseline => PAPER_BASELINE,
            Profile::Fig1 => FIG1,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Profile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("profile", format!("unknown profile `{s}` (expected paper-baseline or fig1)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Dotted path into the document, e.g. `operators.op1.sinr_threshold_db`;
    /// array elements are addressed by `id`.
    pub axis: String,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = Error;
    /// Parses `AXIS=v1,v2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (axis, vals) = s
            .split_once('=')
            .ok_or_else(|| Error::config("sweep", format!("expected AXIS=v1,v2,..., got `{s}`")))?;
        let values = vals
            .split(',')
            .map(|v| {
                let v = v.trim();
                match v {
                    "inf" | "infinity" => Ok(f64::INFINITY),
                    _ => v.parse::<f64>().map_err(|e| Error::config("sweep", format!("bad value `{v}`: {e}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sweep { axis: axis.trim().to_string(), values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default)]
    pub kind: SolverKind,
    pub max_iters: Option<usize>,
    pub step0: Option<f64>,
    pub polish: Option<bool>,
    pub oracle_grid_points: Option<usize>,
}

impl SolverSettings {
    pub fn options(&self) -> SolveOptions {
        let d = SubgradientOptions::default();
        SolveOptions {
            kind: self.kind,
            subgradient: SubgradientOptions {
                max_iters: self.max_iters.unwrap_or(d.max_iters),
                step0: self.step0.unwrap_or(d.step0),
                polish: self.polish.unwrap_or(d.polish),
                ..d
            },
            oracle_grid_points: self.oracle_grid_points.unwrap_or(SolveOptions::default().oracle_grid_points),
        }
    }
}

// Raw document shape, units as written.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    #[allow(dead_code)]
    profile: Option<String>,
    fairness: Fairness,
    emissions_cap_kg_per_h: f64,
    #[serde(default)]
    capacity_convention: CapacityConvention,
    physics: RawPhysics,
    power_model: RawPower,
    operators: Vec<RawOperator>,
    suppliers: Vec<RawSupplier>,
    sweep: Option<Sweep>,
    mc: Option<McSettings>,
    #[serde(default)]
    solver: SolverSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    path_loss_exp: f64,
    noise_power_db: f64,
    fading_rate: f64,
    exclusion_distance_m: f64,
    area_km2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    amp_slope: f64,
    site_offset_w: f64,
    duration_s: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    id: String,
    bs_density_per_km2: f64,
    user_density_per_km2: f64,
    sinr_threshold_db: f64,
    coverage_target: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSupplier {
    id: String,
    benchmark_price: f64,
    unit_cost: f64,
    capacity_kj: f64,
    emis_quad: f64,
    emis_lin: f64,
    price_sensitivity: u32,
}

/// Command-line style overrides applied after profile merging.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub sweep: Option<Sweep>,
    pub mc: Option<McSettings>,
    pub solver: Option<SolverKind>,
}

/// A fully validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub profile: Option<Profile>,
    pub physics: PhysicsParams,
    pub power_model: PowerModelParams,
    pub operators: Vec<OperatorSpec>,
    pub suppliers: Vec<SupplierSpec>,
    /// kg/h; `f64::INFINITY` disables the constraint.
    pub emissions_cap: f64,
    pub fairness: Fairness,
    pub capacity_convention: CapacityConvention,
    pub sweep: Option<Sweep>,
    pub mc: Option<McSettings>,
    pub solver: SolverSettings,
    /// Merged document as written (original units), kept for sweeps and
    /// the run metadata echo.
    document: Table,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: impl AsRef<Path>, overrides: &Overrides) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, overrides)
}

/// A built-in profile on its own.
pub fn profile_config(profile: Profile) -> ScenarioConfig {
    parse_config("", &Overrides { profile: Some(profile), ..Overrides::default() })
        .expect("built-in profiles are valid")
}

pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ScenarioConfig> {
    let doc: Table = toml::from_str(text).map_err(toml_error)?;
    let profile = match (overrides.profile, doc.get("profile")) {
        (Some(p), _) => Some(p),
        (None, Some(Value::String(s))) => Some(s.parse()?),
        (None, Some(_)) => return Err(Error::config("profile", "must be a string")),
        (None, None) => None,
    };
    let mut merged = match profile {
        Some(p) => {
            let mut base: Table = toml::from_str(p.source()).expect("built-in profile parses");
            merge(&mut base, doc, "")?;
            base
        }
        None => doc,
    };
    if let Some(p) = profile {
        merged.insert("profile".into(), Value::String(p.name().into()));
    }
    if let Some(sweep) = &overrides.sweep {
        let mut t = Table::new();
        t.insert("axis".into(), Value::String(sweep.axis.clone()));
        t.insert("values".into(), Value::Array(sweep.values.iter().map(|v| Value::Float(*v)).collect()));
        merged.insert("sweep".into(), Value::Table(t));
    }
    if let Some(mc) = overrides.mc {
        let mut t = Table::new();
        t.insert("trials".into(), Value::Integer(mc.trials as i64));
        t.insert("seed".into(), Value::Integer(mc.seed as i64));
        merged.insert("mc".into(), Value::Table(t));
    }
    if let Some(kind) = overrides.solver {
        let solver = merged.entry("solver").or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(s) = solver else {
            return Err(Error::config("solver", "must be a table"));
        };
        let name = toml::Value::try_from(kind).expect("solver kind serializes");
        s.insert("kind".into(), name);
    }
    let mut cfg = build(merged)?;
    cfg.profile = profile;
    if let Some(sweep) = cfg.sweep.clone() {
        if sweep.values.is_empty() {
            return Err(Error::config("sweep.values", "must not be empty"));
        }
        if let Some(v) = sweep.values.iter().find(|v| v.is_nan()) {
            return Err(Error::config("sweep.values", format!("bad value {v}")));
        }
        // Every value must yield a valid configuration.
        for &v in &sweep.values {
            cfg.at(v)?;
        }
    }
    Ok(cfg)
}

impl ScenarioConfig {
    /// The merged document in the units it was written in.
    pub fn document(&self) -> &Table {
        &self.document
    }

    /// Sweep values in ascending order (the order of the output rows).
    pub fn sweep_values(&self) -> Vec<f64> {
        let mut v = self.sweep.as_ref().map(|s| s.values.clone()).unwrap_or_default();
        v.sort_by(f64::total_cmp);
        v
    }

    /// The configuration with the sweep axis set to `value` and no sweep.
    pub fn at(&self, value: f64) -> Result<ScenarioConfig> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::config("sweep", "configuration has no sweep"))?;
        let mut doc = self.document.clone();
        doc.remove("sweep");
        set_path(&mut doc, &sweep.axis, value)?;
        let mut cfg = build(doc)?;
        cfg.profile = self.profile;
        Ok(cfg)
    }

    /// Optimization instance for the given operator demands.
    pub fn instance(&self, demands: Vec<OperatorDemand>) -> Result<ProblemInstance> {
        ProblemInstance::new(
            demands,
            self.suppliers.clone(),
            self.emissions_cap,
            self.fairness,
            self.capacity_convention,
        )
    }
}

fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    // serde reports missing and unknown fields as "... field `name` ...".
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .unwrap_or("<document>")
        .to_string();
    Error::config(field, msg)
}

fn merge(base: &mut Table, over: Table, prefix: &str) -> Result<()> {
    for (k, v) in over {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o, &path)?,
            (Some(Value::Array(b)), Value::Array(o)) if k == "operators" || k == "suppliers" => {
                for item in o {
                    let Value::Table(t) = item else {
                        return Err(Error::config(path, "entries must be tables"));
                    };
                    let id = t.get("id").and_then(Value::as_str).map(str::to_string);
                    let existing = id.as_ref().and_then(|id| {
                        b.iter_mut().find(|e| e.get("id").and_then(Value::as_str) == Some(id.as_str()))
                    });
                    match existing {
                        Some(Value::Table(e)) => merge(e, t, &format!("{path}.{}", id.unwrap()))?,
                        _ => b.push(Value::Table(t)),
                    }
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    Ok(())
}

fn set_path(doc: &mut Table, axis: &str, value: f64) -> Result<()> {
    let bad = |msg: &str| Error::config("sweep.axis", format!("`{axis}` {msg}"));
    let parts: Vec<&str> = axis.split('.').collect();
    let (last, parents) = parts.split_last().ok_or_else(|| bad("is empty"))?;
    let mut cur = doc;
    for p in parents {
        let next = cur.get_mut(*p).ok_or_else(|| bad("does not name an existing parameter"))?;
        cur = match next {
            Value::Table(t) => t,
            Value::Array(items) => {
                // Path continues with an element id.
                return set_in_array(items, &parts[parts.iter().position(|x| x == p).unwrap() + 1..], value, axis);
            }
            _ => return Err(bad("does not name an existing parameter")),
        };
    }
    set_leaf(cur, last, value, axis)
}

fn set_in_array(items: &mut [Value], rest: &[&str], value: f64, axis: &str) -> Result<()> {
    let bad = |msg: &str| Error::config("sweep.axis", format!("`{axis}` {msg}"));
    let [id, key] = rest else {
        return Err(bad("must have the form <list>.<id>.<key>"));
    };
    let item = items
        .iter_mut()
        .find(|e| e.get("id").and_then(Value::as_str) == Some(*id))
        .ok_or_else(|| bad("names an unknown id"))?;
    let Value::Table(t) = item else {
        return Err(bad("does not name an existing parameter"));
    };
    set_leaf(t, key, value, axis)
}

fn set_leaf(t: &mut Table, key: &str, value: f64, axis: &str) -> Result<()> {
    let bad = |msg: String| Error::config("sweep.axis", format!("`{axis}` {msg}"));
    let new = match t.get(key) {
        Some(Value::Float(_)) => Value::Float(value),
        Some(Value::Integer(_)) if value.fract() == 0.0 && value.abs() < 9e15 => Value::Integer(value as i64),
        Some(Value::Integer(_)) => return Err(bad(format!("is an integer parameter; {value} is not an integer"))),
        Some(Value::String(_)) if key == "fairness" => Value::Float(value),
        Some(_) => return Err(bad("is not a numeric parameter".into())),
        None => return Err(bad("does not name an existing parameter".into())),
    };
    t.insert(key.to_string(), new);
    Ok(())
}

fn build(doc: Table) -> Result<ScenarioConfig> {
    let raw: RawConfig = Value::Table(doc.clone()).try_into().map_err(toml_error)?;

    let physics = PhysicsParams {
        path_loss_exp: raw.physics.path_loss_exp,
        noise_power: db_to_linear(raw.physics.noise_power_db),
        fading_rate: raw.physics.fading_rate,
        exclusion_distance: raw.physics.exclusion_distance_m,
        area: km2_to_m2(raw.physics.area_km2),
    };
    physics.validate().map_err(|e| Error::config("physics", e.to_string()))?;
    let power_model = PowerModelParams {
        amp_slope: raw.power_model.amp_slope,
        site_offset: raw.power_model.site_offset_w,
        duration: raw.power_model.duration_s,
    };
    power_model.validate().map_err(|e| Error::config("power_model", e.to_string()))?;

    if raw.operators.is_empty() {
        return Err(Error::config("operators", "at least one operator is required"));
    }
    if raw.suppliers.is_empty() {
        return Err(Error::config("suppliers", "at least one supplier is required"));
    }
    check_unique("operators", raw.operators.iter().map(|o| o.id.as_str()))?;
    check_unique("suppliers", raw.suppliers.iter().map(|s| s.id.as_str()))?;

    let operators = raw
        .operators
        .into_iter()
        .map(|o| {
            OperatorSpec::new(
                o.id.clone(),
                per_km2_to_per_m2(o.bs_density_per_km2),
                per_km2_to_per_m2(o.user_density_per_km2),
                db_to_linear(o.sinr_threshold_db),
                o.coverage_target,
            )
            .map_err(|e| Error::config(format!("operators.{}", o.id), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let suppliers = raw
        .suppliers
        .into_iter()
        .map(|s| {
            let spec = SupplierSpec {
                id: s.id.clone(),
                benchmark_price: s.benchmark_price,
                unit_cost: s.unit_cost,
                capacity: kj_to_j(s.capacity_kj),
                emis_quad: s.emis_quad,
                emis_lin: s.emis_lin,
                price_sensitivity: s.price_sensitivity,
            };
            spec.validate().map_err(|e| Error::config(format!("suppliers.{}", s.id), e.to_string()))?;
            Ok(spec)
        })
        .collect::<Result<Vec<_>>>()?;

    let cap = raw.emissions_cap_kg_per_h;
    if !(cap > 0.0) {
        return Err(Error::config("emissions_cap_kg_per_h", format!("must be > 0, got {cap}")));
    }
    if let Some(mc) = raw.mc {
        if mc.trials == 0 {
            return Err(Error::config("mc.trials", "must be >= 1"));
        }
    }
    let s = &raw.solver;
    if s.step0.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::config("solver.step0", "must be > 0"));
    }
    if s.max_iters == Some(0) {
        return Err(Error::config("solver.max_iters", "must be >= 1"));
    }

    Ok(ScenarioConfig {
        profile: None,
        physics,
        power_model,
        operators,
        suppliers,
        emissions_cap: cap,
        fairness: raw.fairness,
        capacity_convention: raw.capacity_convention,
        sweep: raw.sweep,
        mc: raw.mc,
        solver: raw.solver,
        document: doc,
    })
}

fn check_unique<'a>(field: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::config(field, format!("duplicate id `{id}`")));
        }
    }
    Ok(())
}
