//! Alternating optimization driver, shared by the per-draw solver and the
//! static profile over a channel ensemble.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::architectures::{
    assign_ms_groups, feasible, output_power, project_profile, scale_to_cap, side_mask, FeasibleSet,
};
use crate::error::{Error, Result};
use crate::model::{
    user_rates, ChannelSet, Precoder, RisProfile, Side, SolveReport, Strategy, SystemConfig,
    TimeSwitching, C64,
};

use super::objective::{FixedPrecoder, Links};
use super::oracle::element_states;
use super::precoder::{wmmse, PrecoderProblem};
use super::profile::{profile_block, Objective};
use super::SolverOptions;

/// Result summary of a static-profile solve over an ensemble.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnsembleReport {
    /// Sample-average sum-rate of the returned profile and precoders.
    pub average_rate: f64,
    pub per_draw_rates: Vec<f64>,
    pub solve: SolveReport,
}

struct Outcome {
    w: Vec<DMatrix<C64>>,
    profile: RisProfile,
    trace: Vec<f64>,
    iterations: usize,
}

impl Outcome {
    fn value(&self) -> f64 {
        *self.trace.last().expect("trace has the initial point")
    }
}

fn random_profile(m: usize, set: &FeasibleSet, rng: &mut ChaCha8Rng) -> RisProfile {
    let mut p = RisProfile::zeros(m);
    let refracts = set.refracts();
    for i in 0..m {
        let b = rng.random::<f64>() * set.beta_max / 2.0;
        if refracts {
            p.beta_r[i] = b / 2.0;
            p.beta_t[i] = b / 2.0;
        } else {
            p.beta_r[i] = b;
        }
        p.theta_r[i] = rng.random::<f64>() * TAU;
        p.theta_t[i] = rng.random::<f64>() * TAU;
    }
    p
}

fn precoder_step(
    links: &[Links],
    profile: &RisProfile,
    cfg: &SystemConfig,
    w: &[DMatrix<C64>],
    options: &SolverOptions,
) -> Result<(Vec<DMatrix<C64>>, f64)> {
    let mut out = Vec::with_capacity(links.len());
    let mut total = 0.0;
    for (l, w0) in links.iter().zip(w) {
        let prob = PrecoderProblem::new(l, profile, cfg);
        let w = wmmse(&prob, w0, options.inner_precoder_iters, options.tol)?;
        total += prob.rate(&w);
        out.push(w);
    }
    Ok((out, total / links.len() as f64))
}

/// One alternating run on a flat (non time-switching) set.
fn run_flat(
    links: &[Links],
    channels0: &ChannelSet,
    cfg: &SystemConfig,
    set: &FeasibleSet,
    options: &SolverOptions,
    init: RisProfile,
) -> Result<Outcome> {
    let m = init.len();
    let mut profile = project_profile(&init, set);
    if let Some(cap) = set.global_power_cap {
        // Leave room for the amplified thermal noise alone.
        scale_to_cap(&mut profile, &vec![cfg.ris_noise(); m], cap / 2.0, set);
    }
    let zeros = vec![DMatrix::zeros(cfg.n_antennas, cfg.n_users); links.len()];
    let (mut w, _) = precoder_step(links, &profile, cfg, &zeros, options)?;
    if set.strategy == Strategy::Ms && set.refracts() {
        let groups = assign_ms_groups(channels0, cfg, set, &Precoder::new(w[0].clone()));
        profile.ms_group = Some(groups);
    }
    let draws: Vec<FixedPrecoder> = links.iter().zip(&w).map(|(l, w)| FixedPrecoder::new(l, w, cfg)).collect();
    let obj = Objective { draws: &draws, set };
    profile = obj.feasible_point(&profile);
    let mut trace = vec![obj.rate(&profile)];
    let mut iterations = 0;
    while iterations < options.max_outer_iters {
        iterations += 1;
        let draws: Vec<FixedPrecoder> =
            links.iter().zip(&w).map(|(l, w)| FixedPrecoder::new(l, w, cfg)).collect();
        let obj = Objective { draws: &draws, set };
        let (next, _) = profile_block(&obj, &profile, options);
        let before = std::mem::replace(&mut profile, next);
        let (w_next, mut f) = precoder_step(links, &profile, cfg, &w, options)?;
        w = w_next;
        // Alternating steps zig-zag; extrapolate along the last profile move
        // while the re-optimized rate keeps improving.
        let mut gamma = 1.0;
        for _ in 0..6 {
            let (pr, pt) = (profile.coefficients(Side::Reflect), profile.coefficients(Side::Refract));
            let (br, bt) = (before.coefficients(Side::Reflect), before.coefficients(Side::Refract));
            let er: Vec<C64> = pr.iter().zip(&br).map(|(a, b)| a + (a - b) * gamma).collect();
            let et: Vec<C64> = pt.iter().zip(&bt).map(|(a, b)| a + (a - b) * gamma).collect();
            let mut cand = RisProfile::from_coefficients(&er, &et);
            cand.ms_group = profile.ms_group.clone();
            let draws: Vec<FixedPrecoder> =
                links.iter().zip(&w).map(|(l, w)| FixedPrecoder::new(l, w, cfg)).collect();
            let cand = Objective { draws: &draws, set }.feasible_point(&cand);
            let (w_c, f_c) = precoder_step(links, &cand, cfg, &w, options)?;
            if f_c > f {
                profile = cand;
                w = w_c;
                f = f_c;
                gamma *= 2.0;
            } else {
                break;
            }
        }
        let prev = *trace.last().expect("nonempty");
        trace.push(f);
        if (f - prev) < options.tol * prev.abs() {
            break;
        }
    }
    if let Some(states) = lattice_states(set) {
        while iterations < options.max_outer_iters {
            let Some((p, w_p, f)) = joint_sweep(links, cfg, set, options, &states, &profile, &w)? else {
                break;
            };
            iterations += 1;
            profile = p;
            w = w_p;
            trace.push(f);
        }
    }
    Ok(Outcome {
        w,
        profile,
        trace,
        iterations,
    })
}

/// Every element state of a fully discrete set, or `None` when some
/// coordinate is continuous.
fn lattice_states(set: &FeasibleSet) -> Option<Vec<(f64, f64, f64, f64)>> {
    let phases = set.phase_lattice()?;
    let amps: Vec<f64> = if set.fixed_amplitude() {
        vec![1.0]
    } else {
        set.amp_levels.clone()?
    };
    Some(element_states(set, &phases, &amps))
}

/// One pass over the elements trying every lattice state with the precoder
/// re-solved. Returns the improved point, or `None` if nothing improved.
fn joint_sweep(
    links: &[Links],
    cfg: &SystemConfig,
    set: &FeasibleSet,
    options: &SolverOptions,
    states: &[(f64, f64, f64, f64)],
    profile: &RisProfile,
    w: &[DMatrix<C64>],
) -> Result<Option<(RisProfile, Vec<DMatrix<C64>>, f64)>> {
    let (_, f0) = precoder_step(links, profile, cfg, w, options)?;
    let mut best = (profile.clone(), w.to_vec(), f0);
    let mut improved = false;
    for i in 0..profile.len() {
        let (use_r, use_t) = side_mask(&best.0, set, i);
        for &(br, tr, bt, tt) in states {
            if (br > 0.0 && !use_r) || (bt > 0.0 && !use_t) {
                continue;
            }
            let p = &best.0;
            if (p.beta_r[i], p.theta_r[i], p.beta_t[i], p.theta_t[i]) == (br, tr, bt, tt) {
                continue;
            }
            let mut cand = p.clone();
            cand.beta_r[i] = br;
            cand.theta_r[i] = tr;
            cand.beta_t[i] = bt;
            cand.theta_t[i] = tt;
            let Ok((w_c, f_c)) = precoder_step(links, &cand, cfg, &best.1, options) else {
                continue;
            };
            let within = links.iter().zip(&w_c).all(|(l, w)| {
                feasible_ris_power(l, &cand, cfg, set, w)
            });
            if within && f_c > best.2 * (1.0 + 1e-12) {
                best = (cand, w_c, f_c);
                improved = true;
            }
        }
    }
    Ok(improved.then_some(best))
}

fn feasible_ris_power(
    links: &Links,
    profile: &RisProfile,
    cfg: &SystemConfig,
    set: &FeasibleSet,
    w: &DMatrix<C64>,
) -> bool {
    match set.global_power_cap {
        None => true,
        Some(cap) => {
            let q = links.incident(w, cfg.ris_noise());
            output_power(&profile.beta_r, &profile.beta_t, &q) <= cap * (1.0 + 1e-9)
        }
    }
}

/// One task: a given power split and initial profile, time switching
/// handled as two slot problems.
fn run_task(
    links: &[Links],
    channels0: &ChannelSet,
    cfg: &SystemConfig,
    set: &FeasibleSet,
    options: &SolverOptions,
    init: RisProfile,
) -> Result<Outcome> {
    if set.strategy != Strategy::Ts || !set.refracts() {
        return run_flat(links, channels0, cfg, set, options, init);
    }
    let r = run_flat(links, channels0, cfg, &set.slot(Side::Reflect), options, init.clone())?;
    let t = run_flat(links, channels0, cfg, &set.slot(Side::Refract), options, init)?;
    let grid = options.ts_lambda_grid.max(2);
    let (rv, tv) = (r.value(), t.value());
    let mut lambda = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..grid {
        let l = i as f64 / (grid - 1) as f64;
        let v = l * rv + (1.0 - l) * tv;
        if v > best {
            best = v;
            lambda = l;
        }
    }
    let n = r.trace.len().max(t.trace.len());
    let at = |tr: &[f64], i: usize| tr[i.min(tr.len() - 1)];
    let trace = (0..n)
        .map(|i| lambda * at(&r.trace, i) + (1.0 - lambda) * at(&t.trace, i))
        .collect();
    let mut profile = RisProfile::zeros(r.profile.len());
    profile.ts = Some(Box::new(TimeSwitching {
        lambda_r: lambda,
        lambda_t: 1.0 - lambda,
        reflect_slot: r.profile,
        refract_slot: t.profile,
    }));
    // Slot precoders ride along as [reflect, refract] pairs per draw.
    let w = r.w.into_iter().zip(t.w).flat_map(|(a, b)| [a, b]).collect();
    Ok(Outcome {
        w,
        profile,
        trace,
        iterations: r.iterations + t.iterations,
    })
}

fn precoders(outcome_w: Vec<DMatrix<C64>>, ts: bool) -> Vec<Precoder> {
    if ts {
        let mut it = outcome_w.into_iter();
        let mut out = Vec::new();
        while let (Some(a), Some(b)) = (it.next(), it.next()) {
            out.push(Precoder {
                w: a.clone(),
                slots: Some(Box::new([a, b])),
            });
        }
        out
    } else {
        outcome_w.into_iter().map(Precoder::new).collect()
    }
}

/// Shared driver: power-split grid times seeded restarts, best by final
/// objective with ties to the lowest task index.
fn solve(
    ensemble: &[ChannelSet],
    cfg: &SystemConfig,
    set: &FeasibleSet,
    options: &SolverOptions,
    seed: u64,
) -> Result<(RisProfile, Vec<Precoder>, EnsembleReport)> {
    let start = Instant::now();
    if ensemble.is_empty() {
        return Err(Error::Empty("channel ensemble".into()));
    }
    cfg.validate()?;
    options.validate()?;
    for ch in ensemble {
        ch.check_shapes(cfg)?;
    }
    let links: Vec<Links> = ensemble.iter().map(Links::new).collect();
    let splits: Vec<(SystemConfig, FeasibleSet)> = if cfg.amplifies() {
        options
            .power_split_grid
            .iter()
            .map(|&f| {
                let c = cfg.with_split(f);
                let mut s = set.clone();
                s.global_power_cap = Some(c.p_ris);
                (c, s)
            })
            .collect()
    } else {
        let c = cfg.with_split(1.0);
        let mut s = set.clone();
        s.global_power_cap = None;
        vec![(c, s)]
    };
    let m = cfg.n_elements;
    let inits: Vec<RisProfile> = (0..options.restarts)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            random_profile(m, set, &mut rng)
        })
        .collect();
    let tasks: Vec<(usize, usize)> = (0..splits.len())
        .flat_map(|s| (0..inits.len()).map(move |r| (s, r)))
        .collect();
    let results: Vec<Result<Outcome>> = tasks
        .par_iter()
        .map(|&(s, r)| {
            let (c, fs) = &splits[s];
            run_task(&links, &ensemble[0], c, fs, options, inits[r].clone())
        })
        .collect();
    let mut best: Option<(usize, Outcome)> = None;
    let mut first_err = None;
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => {
                if best.as_ref().is_none_or(|(_, b)| o.value() > b.value()) {
                    best = Some((i, o));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((task, out)) = best else {
        return Err(first_err.unwrap_or_else(|| Error::AllFailed("no task ran".into())));
    };
    let (c, fs) = &splits[tasks[task].0];
    let ts = fs.strategy == Strategy::Ts && fs.refracts();
    let profile = out.profile;
    let w = precoders(out.w, ts);

    let mut per_draw = Vec::with_capacity(ensemble.len());
    let mut user_sum = vec![0.0; cfg.n_users];
    let mut residuals: BTreeMap<String, f64> = BTreeMap::new();
    for (ch, w) in ensemble.iter().zip(&w) {
        let rates = user_rates(w, ch, &profile, c)?;
        per_draw.push(rates.iter().sum());
        for (u, r) in user_sum.iter_mut().zip(&rates) {
            *u += r / ensemble.len() as f64;
        }
        let (_, res) = feasible(&profile, fs, w, ch, c);
        for (k, v) in res {
            let e = residuals.entry(k).or_insert(0.0);
            *e = e.max(v);
        }
    }
    let average_rate = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
    let solve = SolveReport {
        objective_trace: out.trace,
        final_rates: user_sum,
        constraint_residuals: residuals,
        iterations: out.iterations,
        wall_time: start.elapsed().as_secs_f64(),
        seed,
        p_bs: c.p_bs,
        p_ris: c.p_ris,
    };
    Ok((
        profile,
        w,
        EnsembleReport {
            average_rate,
            per_draw_rates: per_draw,
            solve,
        },
    ))
}

/// Jointly optimize the BS precoder and the surface profile by alternating
/// between the two blocks until the relative gain drops below `options.tol`.
/// Amplifying surfaces additionally search the BS/RIS power split; every
/// split is started from `options.restarts` seeded random profiles.
pub fn alternating_optimize(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    set: &FeasibleSet,
    options: &SolverOptions,
    seed: u64,
) -> Result<(Precoder, RisProfile, SolveReport)> {
    let (profile, mut w, report) = solve(std::slice::from_ref(channels), cfg, set, options, seed)?;
    Ok((w.remove(0), profile, report.solve))
}

/// One static profile for a whole channel ensemble, maximizing the
/// sample-average sum-rate, with a precoder per draw.
pub fn two_timescale_optimize(
    ensemble: &[ChannelSet],
    cfg: &SystemConfig,
    set: &FeasibleSet,
    options: &SolverOptions,
    seed: u64,
) -> Result<(RisProfile, Vec<Precoder>, EnsembleReport)> {
    solve(ensemble, cfg, set, options, seed)
}
