//! Alternating optimization against exhaustive search on small discrete
//! instances.

use rayon::prelude::*;

use crate::architectures::FeasibleSet;
use crate::channels::generate_channels;
use crate::error::{Error, Result};
use crate::model::{Architecture, SystemConfig};
use crate::optimizer::{alternating_optimize, exhaustive_oracle};

use super::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleRow {
    pub architecture: Architecture,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub ao_rate: f64,
    pub oracle_rate: f64,
}

impl OracleRow {
    pub fn ratio(&self) -> f64 {
        self.ao_rate / self.oracle_rate
    }
}

/// Amplitude lattice for `cfg`: the scenario's levels, or `{0, b/2, b}`.
pub fn amp_levels(sc: &Scenario, cfg: &SystemConfig) -> Vec<f64> {
    match &sc.oracle.amp_levels {
        Some(l) => l.clone(),
        None => vec![0.0, cfg.beta_max / 2.0, cfg.beta_max],
    }
}

/// Discrete feasible set shared by both solvers.
pub fn discrete_set(cfg: &SystemConfig, levels: &[f64]) -> FeasibleSet {
    let set = FeasibleSet::from_config(cfg);
    if set.fixed_amplitude() {
        set
    } else {
        set.with_amp_levels(levels.to_vec())
    }
}

/// Best oracle rate over the same BS/RIS splits the optimizer searches.
pub fn oracle_over_splits(
    ch: &crate::model::ChannelSet,
    cfg: &SystemConfig,
    set: &FeasibleSet,
    levels: &[f64],
    grid: &[f64],
) -> Result<f64> {
    let phase_levels = 1usize << cfg.phase_bits;
    let oracle_levels: Vec<f64> = if set.fixed_amplitude() { vec![1.0] } else { levels.to_vec() };
    let splits: Vec<f64> = if cfg.amplifies() { grid.to_vec() } else { vec![1.0] };
    let mut best: Option<f64> = None;
    for f in splits {
        let c = cfg.with_split(f);
        let mut s = set.clone();
        s.global_power_cap = c.amplifies().then_some(c.p_ris);
        let (_, _, r) = exhaustive_oracle(ch, &c, &s, phase_levels, &oracle_levels)?;
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    best.ok_or_else(|| Error::Empty("power split grid".into()))
}

pub fn oracle_check(sc: &Scenario) -> Result<Vec<OracleRow>> {
    if sc.cfg.phase_bits == 0 {
        return Err(Error::Config {
            key: "cfg.phase_bits".into(),
            msg: "oracle-check needs discrete phases".into(),
        });
    }
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
        .map(|&(arch, value, trial)| {
            let cfg = sc.point_config(arch, value);
            let seed = sc.seed(trial);
            let levels = amp_levels(sc, &cfg);
            let set = discrete_set(&cfg, &levels);
            let ch = generate_channels(&cfg, &sc.scene, seed)?;
            let (_, _, rep) = alternating_optimize(&ch, &cfg, &set, &sc.options, seed)?;
            let ao_rate = rep.final_rates.iter().sum();
            let oracle_rate = oracle_over_splits(&ch, &cfg, &set, &levels, &sc.options.power_split_grid)?;
            Ok(OracleRow {
                architecture: arch,
                sweep_value: value,
                trial,
                seed,
                ao_rate,
                oracle_rate,
            })
        })
        .collect()
}
