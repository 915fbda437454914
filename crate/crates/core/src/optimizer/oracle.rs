//! Exhaustive search over discrete profiles for small instances.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::architectures::FeasibleSet;
use crate::error::{Error, Result};
use crate::model::{ChannelSet, Precoder, RisProfile, SystemConfig, C64};

use super::objective::Links;
use super::precoder::{wmmse, PrecoderProblem};

/// Largest enumeration `(phase_levels * amp_levels)^(2M)` the oracle accepts.
pub const ORACLE_BUDGET: f64 = 1e7;

/// Best profile, its precoder and its sum-rate.
pub type OracleResult = (RisProfile, Precoder, f64);

type ElementState = (f64, f64, f64, f64);

/// All per-element states `(beta_r, theta_r, beta_t, theta_t)` that the
/// feasible set admits on the given lattices.
pub(crate) fn element_states(set: &FeasibleSet, phases: &[f64], amps: &[f64]) -> Vec<ElementState> {
    let mut out = Vec::new();
    let refracts = set.refracts();
    let amps_r: Vec<f64> = if set.fixed_amplitude() { vec![1.0] } else { amps.to_vec() };
    let amps_t: Vec<f64> = if refracts && !set.fixed_amplitude() { amps.to_vec() } else { vec![0.0] };
    for &br in &amps_r {
        for &bt in &amps_t {
            if br + bt > set.beta_max {
                continue;
            }
            let trs: &[f64] = if br > 0.0 { phases } else { &[0.0] };
            for &tr in trs {
                if set.coupled(br, bt) {
                    let c = set.coupling.as_ref().expect("coupled");
                    let mut seen: Vec<f64> = Vec::new();
                    for &x in phases {
                        let tt = c.project(tr, x);
                        if !seen.iter().any(|s| (s - tt).abs() < 1e-12) {
                            seen.push(tt);
                            out.push((br, tr, bt, tt));
                        }
                    }
                } else {
                    let tts: &[f64] = if bt > 0.0 { phases } else { &[0.0] };
                    for &tt in tts {
                        out.push((br, tr, bt, tt));
                    }
                }
            }
        }
    }
    out
}

/// Zero-forcing direction `H^H (H H^H)^-1`, when the Gram matrix inverts.
fn zero_forcing(prob: &PrecoderProblem) -> Option<DMatrix<C64>> {
    let k = prob.h.len();
    let n = prob.h[0].len();
    let h = DMatrix::from_fn(k, n, |i, j| prob.h[i][j]);
    let gram = &h * h.adjoint();
    let inv = gram.try_inverse()?;
    let w = h.adjoint() * inv;
    w.iter().all(|x| x.is_finite()).then_some(w)
}

/// WMMSE from several starts: MRT, zero-forcing, and full-power MRT to each
/// single user.
fn strong_precoder(prob: &PrecoderProblem) -> Result<(DMatrix<C64>, f64)> {
    let mrt = prob.mrt();
    let mut starts = vec![mrt.clone()];
    starts.extend(zero_forcing(prob));
    for j in 0..mrt.ncols() {
        let mut w = DMatrix::zeros(mrt.nrows(), mrt.ncols());
        w.set_column(j, &mrt.column(j));
        prob.make_feasible(&mut w);
        let p = w.norm_squared();
        if p > 0.0 {
            w *= C64::new((prob.p_bs / p).sqrt(), 0.0);
            prob.make_feasible(&mut w);
            starts.push(w);
        }
    }
    let mut best: Option<(DMatrix<C64>, f64)> = None;
    for s in &starts {
        let w = wmmse(prob, s, 300, 1e-12)?;
        let r = prob.rate(&w);
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((w, r));
        }
    }
    Ok(best.expect("at least the MRT start"))
}

/// Enumerate every discrete profile built from `phase_levels` uniform phases
/// `2*pi*i/phase_levels` and the amplitude levels `amp_levels`, optimize the
/// precoder for each, and return the best. Refuses with
/// [`Error::BudgetExceeded`] when `(phase_levels * |amp_levels|)^(2M)`
/// exceeds [`ORACLE_BUDGET`]. Combinations that cannot be fed within the
/// amplifier budget are skipped.
pub fn exhaustive_oracle(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    set: &FeasibleSet,
    phase_levels: usize,
    amp_levels: &[f64],
) -> Result<OracleResult> {
    let m = channels.n_elements();
    let count = ((phase_levels * amp_levels.len()) as f64).powi(2 * m as i32);
    if count > ORACLE_BUDGET {
        return Err(Error::BudgetExceeded {
            count,
            limit: ORACLE_BUDGET,
        });
    }
    if phase_levels == 0 || amp_levels.is_empty() {
        return Err(Error::Empty("oracle lattice".into()));
    }
    channels.check_shapes(cfg)?;
    let phases: Vec<f64> = (0..phase_levels)
        .map(|i| TAU * i as f64 / phase_levels as f64)
        .collect();
    let states = element_states(set, &phases, amp_levels);
    if states.is_empty() {
        return Err(Error::Empty("no feasible element state".into()));
    }
    let total = states.len().pow(m as u32);
    let links = Links::new(channels);
    let best = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let mut p = RisProfile::zeros(m);
            let mut rest = idx;
            for i in 0..m {
                let (br, tr, bt, tt) = states[rest % states.len()];
                rest /= states.len();
                p.beta_r[i] = br;
                p.theta_r[i] = tr;
                p.beta_t[i] = bt;
                p.theta_t[i] = tt;
            }
            let prob = PrecoderProblem::new(&links, &p, cfg);
            if matches!(prob.ris, Some((_, q)) if q <= 0.0) {
                return None;
            }
            let (w, r) = strong_precoder(&prob).ok()?;
            Some((idx, p, w, r))
        })
        .reduce_with(|a, b| {
            if b.3 > a.3 || (b.3 == a.3 && b.0 < a.0) {
                b
            } else {
                a
            }
        });
    let Some((_, p, w, r)) = best else {
        return Err(Error::AllFailed("no enumerated profile was evaluable".into()));
    };
    Ok((p, Precoder::new(w), r))
}
