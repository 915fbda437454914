//! Monte Carlo sweeps and the result table.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::architectures::FeasibleSet;
use crate::channels::generate_channels;
use crate::error::{Error, Result};
use crate::model::{Architecture, Strategy};
use crate::optimizer::alternating_optimize;

use super::scenario::Scenario;

/// One solved (architecture, sweep value, trial) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub scenario: String,
    pub architecture: Architecture,
    pub strategy: Strategy,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    /// Empty when the solve failed.
    pub rates: Vec<f64>,
    pub sum_rate: Option<f64>,
    pub p_bs: Option<f64>,
    pub p_ris: Option<f64>,
    pub iterations: usize,
    /// Objective per outer iteration; not part of the table.
    pub trace: Vec<f64>,
    /// `ok`, or `error: ...`.
    pub status: String,
    pub wall_time: f64,
}

impl Row {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn csv_header(n_users: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "scenario",
        "architecture",
        "strategy",
        "sweep_var",
        "sweep_value",
        "trial",
        "seed",
        "sum_rate_bps_hz",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=n_users).map(|k| format!("rate_user_{k}")));
    h.extend(
        ["p_bs_w", "p_ris_w", "iterations", "status", "wall_time_s"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl Row {
    fn record(&self, n_users: usize) -> Vec<String> {
        let mut r = vec![
            self.scenario.clone(),
            self.architecture.key().to_string(),
            self.strategy.key().to_string(),
            self.sweep_var.clone(),
            self.sweep_value.to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            opt(self.sum_rate),
        ];
        for k in 0..n_users {
            r.push(opt(self.rates.get(k).copied()));
        }
        r.push(opt(self.p_bs));
        r.push(opt(self.p_ris));
        r.push(self.iterations.to_string());
        r.push(self.status.clone());
        r.push(self.wall_time.to_string());
        r
    }
}

/// Solve one cell. Everything but the wall time is a pure function of the
/// scenario and the indices.
pub fn run_row(sc: &Scenario, arch: Architecture, value: f64, trial: usize) -> Row {
    let start = Instant::now();
    let cfg = sc.point_config(arch, value);
    let seed = sc.seed(trial);
    let set = FeasibleSet::from_config(&cfg);
    let result = generate_channels(&cfg, &sc.scene, seed)
        .and_then(|ch| alternating_optimize(&ch, &cfg, &set, &sc.options, seed));
    let mut row = Row {
        scenario: sc.name.clone(),
        architecture: arch,
        strategy: cfg.strategy,
        sweep_var: sc.sweep.variable.key().to_string(),
        sweep_value: value,
        trial,
        seed,
        rates: Vec::new(),
        sum_rate: None,
        p_bs: None,
        p_ris: None,
        iterations: 0,
        trace: Vec::new(),
        status: "ok".into(),
        wall_time: 0.0,
    };
    match result {
        Ok((_, _, rep)) => {
            row.sum_rate = Some(rep.final_rates.iter().sum());
            row.rates = rep.final_rates;
            row.p_bs = Some(rep.p_bs);
            row.p_ris = Some(rep.p_ris);
            row.iterations = rep.iterations;
            row.trace = rep.objective_trace;
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row.wall_time = start.elapsed().as_secs_f64();
    row
}

/// Every cell of the scenario in (architecture, sweep value, trial) order.
/// Cells run concurrently on the current rayon pool.
pub fn run_scenario(sc: &Scenario) -> Vec<Row> {
    let cells: Vec<(Architecture, f64, usize)> = sc
        .architectures
        .iter()
        .flat_map(|&a| {
            sc.sweep
                .values
                .iter()
                .flat_map(move |&v| (0..sc.n_trials).map(move |t| (a, v, t)))
        })
        .collect();
    cells
        .par_iter()
        .map(|&(a, v, t)| run_row(sc, a, v, t))
        .collect()
}

pub fn write_csv<W: Write>(rows: &[Row], n_users: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(n_users))?;
    for r in rows {
        w.write_record(r.record(n_users))?;
    }
    w.flush()?;
    Ok(())
}

/// Resolved scenario plus one entry per row.
pub fn manifest(sc: &Scenario, rows: &[Row]) -> String {
    let mut s = format!(
        "# mfris {} run manifest\n[scenario]\n",
        env!("CARGO_PKG_VERSION")
    );
    s.push_str(&sc.to_toml());
    for r in rows {
        s.push_str(&format!(
            "\n[[rows]]\narchitecture = \"{}\"\nsweep_value = {}\ntrial = {}\nseed = {}\nstatus = {}\n",
            r.architecture.key(),
            toml::Value::Float(r.sweep_value),
            r.trial,
            r.seed,
            toml::Value::String(r.status.clone()),
        ));
    }
    s
}

/// Scenario section of a manifest written by [`manifest`].
pub fn scenario_from_manifest(text: &str) -> Result<Scenario> {
    let body: String = text
        .lines()
        .skip_while(|l| l.trim() != "[scenario]")
        .skip(1)
        .take_while(|l| l.trim() != "[[rows]]")
        .map(|l| format!("{l}\n"))
        .collect();
    if body.trim().is_empty() {
        return Err(Error::Config {
            key: "[scenario]".into(),
            msg: "manifest has no scenario section".into(),
        });
    }
    Scenario::parse(&body)
}

/// Run the scenario and write `<name>.csv` and `<name>.manifest.toml` into
/// `dir`. Returns the rows and the CSV path.
pub fn run_to_dir(sc: &Scenario, dir: &Path) -> Result<(Vec<Row>, PathBuf)> {
    let rows = run_scenario(sc);
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", sc.name));
    write_csv(&rows, sc.cfg.n_users, std::fs::File::create(&csv_path)?)?;
    std::fs::write(
        dir.join(format!("{}.manifest.toml", sc.name)),
        manifest(sc, &rows),
    )?;
    Ok((rows, csv_path))
}
