//! Scenario files.
//!
//! A scenario is a TOML document read as a flat map of dotted keys. Every key
//! must be known; anything else is rejected with the key in the error.
//!
//! ```toml
//! name = "fig6a"
//! architectures = ["passive", "star", "active", "mf-ideal"]
//! n_trials = 50
//! base_seed = 1
//! cfg.n_antennas = 8
//! cfg.p_total_dbm = 20
//! cfg.noise_dbm = -80
//! cfg.beta_max = 10
//! scene.user_pos = [[47, 11, 1], [53, 9, 1]]
//! options.restarts = 3
//! sweep.variable = "p_total_dbm"
//! sweep.values = [10, 15, 20, 25, 30]
//! ```
//!
//! Powers may be given in dBm (`*_dbm`) or watts (`*_w`); they are stored in
//! watts. Sweep values keep their file units (dBm or element count).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use toml::Value;

use crate::channels::{GeometryScene, LinkParams, Point};
use crate::error::{Error, Result};
use crate::model::{dbm_to_watts, Architecture, Strategy, SystemConfig};
use crate::optimizer::{ProfileMethod, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    PTotalDbm,
    NElements,
}

impl SweepVar {
    pub fn key(self) -> &'static str {
        match self {
            SweepVar::PTotalDbm => "p_total_dbm",
            SweepVar::NElements => "n_elements",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        match key {
            "p_total_dbm" => Some(SweepVar::PTotalDbm),
            "n_elements" => Some(SweepVar::NElements),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub variable: SweepVar,
    pub values: Vec<f64>,
}

/// Lattice used by `oracle-check`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSpec {
    /// Absolute amplitude levels; three even levels on `[0, beta_max]` when unset.
    pub amp_levels: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub cfg: SystemConfig,
    pub scene: GeometryScene,
    pub options: SolverOptions,
    pub sweep: Sweep,
    pub architectures: Vec<Architecture>,
    pub n_trials: usize,
    pub base_seed: u64,
    pub oracle: OracleSpec,
}

fn bad<T>(key: &str, msg: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    })
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

/// Consumes keys from the flattened document.
struct Keys(BTreeMap<String, Value>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => as_f64(key, &v).map(Some),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(_) => bad(key, "expected a nonnegative integer"),
        }
    }

    fn str(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => bad(key, "expected a string"),
        }
    }

    fn f64s(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a.iter().map(|v| as_f64(key, v)).collect::<Result<_>>().map(Some),
            Some(_) => bad(key, "expected a list of numbers"),
        }
    }

    fn point(&mut self, key: &str) -> Result<Option<Point>> {
        match self.f64s(key)? {
            None => Ok(None),
            Some(v) => to_point(key, &v).map(Some),
        }
    }

    /// Power given either in dBm or in watts, never both.
    fn power(&mut self, stem: &str) -> Result<Option<f64>> {
        let dbm = self.f64(&format!("{stem}_dbm"))?;
        let w = self.f64(&format!("{stem}_w"))?;
        match (dbm, w) {
            (Some(_), Some(_)) => bad(&format!("{stem}_w"), format!("conflicts with {stem}_dbm")),
            (Some(d), None) => Ok(Some(dbm_to_watts(d))),
            (None, w) => Ok(w),
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => bad(key, "expected a number"),
    }
}

fn to_point(key: &str, v: &[f64]) -> Result<Point> {
    match v {
        [x, y, z] => Ok([*x, *y, *z]),
        _ => bad(key, "expected three coordinates"),
    }
}

fn link_params(keys: &mut Keys, stem: &str, base: LinkParams) -> Result<LinkParams> {
    Ok(LinkParams {
        direct: keys.f64(&format!("{stem}.direct"))?.unwrap_or(base.direct),
        bs_ris: keys.f64(&format!("{stem}.bs_ris"))?.unwrap_or(base.bs_ris),
        ris_user: keys.f64(&format!("{stem}.ris_user"))?.unwrap_or(base.ris_user),
    })
}

impl Scenario {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Scenario> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Scenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            key: "<document>".into(),
            msg: e.message().to_string(),
        })?;
        let mut flat = BTreeMap::new();
        flatten("", table, &mut flat);
        let mut keys = Keys(flat);

        let name = keys.str("name")?.unwrap_or_else(|| "scenario".into());

        let mut cfg = SystemConfig::default();
        if let Some(v) = keys.usize("cfg.n_antennas")? {
            cfg.n_antennas = v;
        }
        if let Some(v) = keys.usize("cfg.n_elements")? {
            cfg.n_elements = v;
        }
        if let Some(v) = keys.power("cfg.p_total")? {
            cfg.p_total = v;
        }
        if let Some(v) = keys.power("cfg.noise")? {
            cfg.noise_rx = v;
            cfg.noise_ris = v;
        }
        if let Some(v) = keys.power("cfg.noise_rx")? {
            cfg.noise_rx = v;
        }
        if let Some(v) = keys.power("cfg.noise_ris")? {
            cfg.noise_ris = v;
        }
        if let Some(v) = keys.f64("cfg.beta_max")? {
            cfg.beta_max = v;
        }
        if let Some(s) = keys.str("cfg.strategy")? {
            cfg.strategy = match Strategy::from_key(&s) {
                Some(st) => st,
                None => return bad("cfg.strategy", format!("unknown strategy `{s}` (es, ms, ts)")),
            };
        }
        if let Some(v) = keys.usize("cfg.phase_bits")? {
            cfg.phase_bits = v as u32;
        }
        let n_users = keys.usize("cfg.n_users")?;

        let mut scene = GeometryScene::default();
        if let Some(p) = keys.point("scene.bs_pos")? {
            scene.bs_pos = p;
        }
        if let Some(p) = keys.point("scene.ris_pos")? {
            scene.ris_pos = p;
        }
        if let Some(v) = keys.take("scene.user_pos") {
            let Value::Array(rows) = v else {
                return bad("scene.user_pos", "expected a list of points");
            };
            scene.user_pos = rows
                .iter()
                .map(|r| match r {
                    Value::Array(c) => {
                        let c = c.iter().map(|x| as_f64("scene.user_pos", x)).collect::<Result<Vec<_>>>()?;
                        to_point("scene.user_pos", &c)
                    }
                    _ => bad("scene.user_pos", "expected a list of points"),
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = keys.f64("scene.ris_rotation")? {
            scene.ris_rotation = v;
        }
        if let Some(v) = keys.f64("scene.pathloss_ref_db")? {
            scene.pathloss_ref_db = v;
        }
        scene.pathloss_exponents = link_params(&mut keys, "scene.pathloss_exponent", scene.pathloss_exponents)?;
        scene.rician_k = link_params(&mut keys, "scene.rician_k", scene.rician_k)?;
        cfg.n_users = scene.user_pos.len();
        if let Some(k) = n_users {
            if k != cfg.n_users {
                return bad("cfg.n_users", format!("{k} users but scene.user_pos lists {}", cfg.n_users));
            }
        }

        let mut options = SolverOptions::default();
        if let Some(v) = keys.usize("options.max_outer_iters")? {
            options.max_outer_iters = v;
        }
        if let Some(v) = keys.f64("options.tol")? {
            options.tol = v;
        }
        if let Some(v) = keys.usize("options.inner_precoder_iters")? {
            options.inner_precoder_iters = v;
        }
        if let Some(v) = keys.usize("options.inner_profile_iters")? {
            options.inner_profile_iters = v;
        }
        if let Some(v) = keys.f64("options.profile_step_init")? {
            options.profile_step_init = v;
        }
        if let Some(v) = keys.f64("options.backtrack_factor")? {
            options.backtrack_factor = v;
        }
        if let Some(v) = keys.usize("options.max_backtracks")? {
            options.max_backtracks = v;
        }
        if let Some(v) = keys.f64s("options.power_split_grid")? {
            options.power_split_grid = v;
        }
        if let Some(v) = keys.usize("options.restarts")? {
            options.restarts = v;
        }
        if let Some(s) = keys.str("options.profile_method")? {
            options.profile_method = match ProfileMethod::from_key(&s) {
                Some(m) => m,
                None => {
                    return bad(
                        "options.profile_method",
                        format!("unknown method `{s}` (auto, gradient, element-wise)"),
                    )
                }
            };
        }
        if let Some(v) = keys.usize("options.ts_lambda_grid")? {
            options.ts_lambda_grid = v;
        }

        let variable = match keys.str("sweep.variable")? {
            None => SweepVar::PTotalDbm,
            Some(s) => match SweepVar::from_key(&s) {
                Some(v) => v,
                None => return bad("sweep.variable", format!("unknown variable `{s}` (p_total_dbm, n_elements)")),
            },
        };
        let values = match keys.f64s("sweep.values")? {
            Some(v) => v,
            None => match variable {
                SweepVar::PTotalDbm => vec![10.0 * cfg.p_total.log10() + 30.0],
                SweepVar::NElements => vec![cfg.n_elements as f64],
            },
        };

        let architectures = match keys.take("architectures") {
            None => Architecture::ALL.to_vec(),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::String(s) => Architecture::from_key(s).ok_or_else(|| Error::Config {
                        key: "architectures".into(),
                        msg: format!("unknown architecture `{s}`"),
                    }),
                    _ => bad("architectures", "expected architecture names"),
                })
                .collect::<Result<_>>()?,
            Some(_) => return bad("architectures", "expected a list"),
        };
        let n_trials = keys.usize("n_trials")?.unwrap_or(1);
        let base_seed = match keys.take("base_seed") {
            None => 0,
            Some(Value::Integer(i)) if i >= 0 => i as u64,
            Some(_) => return bad("base_seed", "expected a nonnegative integer"),
        };
        let oracle = OracleSpec {
            amp_levels: keys.f64s("oracle.amp_levels")?,
        };

        if let Some(key) = keys.0.keys().next() {
            return bad(key, "unknown key");
        }

        let sc = Scenario {
            name,
            cfg,
            scene,
            options,
            sweep: Sweep { variable, values },
            architectures,
            n_trials,
            base_seed,
            oracle,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name", "must be a nonempty file stem");
        }
        if self.n_trials == 0 {
            return bad("n_trials", "must be at least 1");
        }
        if self.architectures.is_empty() {
            return bad("architectures", "must not be empty");
        }
        let v = &self.sweep.values;
        if v.is_empty() {
            return bad("sweep.values", "must not be empty");
        }
        if v.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("sweep.values", "must be strictly increasing");
        }
        if self.sweep.variable == SweepVar::NElements
            && v.iter().any(|x| !(*x >= 1.0 && x.fract() == 0.0))
        {
            return bad("sweep.values", "element counts must be positive integers");
        }
        if let Some(levels) = &self.oracle.amp_levels {
            if levels.is_empty() || levels.iter().any(|x| !(*x >= 0.0)) {
                return bad("oracle.amp_levels", "must be a nonempty list of nonnegative levels");
            }
        }
        self.options.validate()?;
        self.scene.validate()?;
        for &arch in &self.architectures {
            for &x in v {
                self.point_config(arch, x).validate()?;
            }
        }
        Ok(())
    }

    /// Configuration of one sweep point for one architecture, before any
    /// power split.
    pub fn point_config(&self, arch: Architecture, value: f64) -> SystemConfig {
        let mut cfg = self.cfg.clone();
        match self.sweep.variable {
            SweepVar::PTotalDbm => cfg.p_total = dbm_to_watts(value),
            SweepVar::NElements => cfg.n_elements = value as usize,
        }
        cfg.for_architecture(arch)
    }

    pub fn seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    /// Fully resolved scenario as a flat key document. Parsing the output
    /// gives back an equal scenario.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: Value| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let list = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
        let point = |p: &Point| list(p);
        let c = &self.cfg;
        kv("name", Value::String(self.name.clone()));
        kv(
            "architectures",
            Value::Array(self.architectures.iter().map(|a| Value::String(a.key().into())).collect()),
        );
        kv("n_trials", Value::Integer(self.n_trials as i64));
        kv("base_seed", Value::Integer(self.base_seed as i64));
        kv("cfg.n_antennas", Value::Integer(c.n_antennas as i64));
        kv("cfg.n_users", Value::Integer(c.n_users as i64));
        kv("cfg.n_elements", Value::Integer(c.n_elements as i64));
        kv("cfg.p_total_w", Value::Float(c.p_total));
        kv("cfg.noise_rx_w", Value::Float(c.noise_rx));
        kv("cfg.noise_ris_w", Value::Float(c.noise_ris));
        kv("cfg.beta_max", Value::Float(c.beta_max));
        kv("cfg.strategy", Value::String(c.strategy.key().into()));
        kv("cfg.phase_bits", Value::Integer(c.phase_bits as i64));
        let sc = &self.scene;
        kv("scene.bs_pos", point(&sc.bs_pos));
        kv("scene.ris_pos", point(&sc.ris_pos));
        kv("scene.user_pos", Value::Array(sc.user_pos.iter().map(point).collect()));
        kv("scene.ris_rotation", Value::Float(sc.ris_rotation));
        kv("scene.pathloss_ref_db", Value::Float(sc.pathloss_ref_db));
        for (stem, p) in [
            ("scene.pathloss_exponent", sc.pathloss_exponents),
            ("scene.rician_k", sc.rician_k),
        ] {
            kv(&format!("{stem}.direct"), Value::Float(p.direct));
            kv(&format!("{stem}.bs_ris"), Value::Float(p.bs_ris));
            kv(&format!("{stem}.ris_user"), Value::Float(p.ris_user));
        }
        let o = &self.options;
        kv("options.max_outer_iters", Value::Integer(o.max_outer_iters as i64));
        kv("options.tol", Value::Float(o.tol));
        kv("options.inner_precoder_iters", Value::Integer(o.inner_precoder_iters as i64));
        kv("options.inner_profile_iters", Value::Integer(o.inner_profile_iters as i64));
        kv("options.profile_step_init", Value::Float(o.profile_step_init));
        kv("options.backtrack_factor", Value::Float(o.backtrack_factor));
        kv("options.max_backtracks", Value::Integer(o.max_backtracks as i64));
        kv("options.power_split_grid", list(&o.power_split_grid));
        kv("options.restarts", Value::Integer(o.restarts as i64));
        kv("options.profile_method", Value::String(o.profile_method.key().into()));
        kv("options.ts_lambda_grid", Value::Integer(o.ts_lambda_grid as i64));
        kv("sweep.variable", Value::String(self.sweep.variable.key().into()));
        kv("sweep.values", list(&self.sweep.values));
        if let Some(levels) = &self.oracle.amp_levels {
            kv("oracle.amp_levels", list(levels));
        }
        s
    }
}
