//! Surface-profile block: projected gradient ascent with backtracking, and
//! an element-wise lattice search for discrete sets.

use std::f64::consts::{PI, TAU};

use crate::architectures::{output_power, project_profile, scale_to_cap, side_mask, FeasibleSet};
use crate::model::{ChannelSet, Precoder, RisProfile, Side, Strategy, SystemConfig, C64};

use super::objective::{FixedPrecoder, Links};
use super::{ProfileMethod, SolverOptions};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Sample-average sum-rate over draws, each with its own frozen precoder.
pub(crate) struct Objective<'a> {
    pub draws: &'a [FixedPrecoder],
    pub set: &'a FeasibleSet,
}

impl Objective<'_> {
    pub fn rate(&self, p: &RisProfile) -> f64 {
        let phi_r = p.coefficients(Side::Reflect);
        let phi_t = p.coefficients(Side::Refract);
        let total: f64 = self.draws.iter().map(|d| d.rate(&phi_r, &phi_t)).sum();
        total / self.draws.len() as f64
    }

    fn grad(&self, p: &RisProfile, g_r: &mut [C64], g_t: &mut [C64]) -> f64 {
        g_r.fill(ZERO);
        g_t.fill(ZERO);
        let phi_r = p.coefficients(Side::Reflect);
        let phi_t = p.coefficients(Side::Refract);
        let wgt = 1.0 / self.draws.len() as f64;
        let total: f64 = self
            .draws
            .iter()
            .map(|d| d.rate_grad(&phi_r, &phi_t, g_r, g_t, wgt))
            .sum();
        total * wgt
    }

    /// Draw with the largest amplifier output and that output.
    fn worst_draw(&self, p: &RisProfile) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (e, d) in self.draws.iter().enumerate() {
            let pw = output_power(&p.beta_r, &p.beta_t, &d.q);
            if pw > best.1 {
                best = (e, pw);
            }
        }
        best
    }

    /// Per-element projection followed by uniform scaling onto the
    /// amplifier budget of every draw.
    pub fn feasible_point(&self, p: &RisProfile) -> RisProfile {
        let mut out = project_profile(p, self.set);
        if let Some(cap) = self.set.global_power_cap {
            for _ in 0..8 {
                let (e, pw) = self.worst_draw(&out);
                if pw <= cap {
                    break;
                }
                scale_to_cap(&mut out, &self.draws[e].q, cap, self.set);
            }
        }
        out
    }

    /// Ascent direction: the coordinate gradient restricted to the tangent
    /// space of the active constraints.
    fn direction(&self, p: &RisProfile, g_r: &[C64], g_t: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let set = self.set;
        let m = p.len();
        let mut dr: Vec<C64> = g_r.iter().map(|g| g * 2.0).collect();
        let mut dt: Vec<C64> = g_t.iter().map(|g| g * 2.0).collect();
        let fixed = set.fixed_amplitude();
        for i in 0..m {
            let (use_r, use_t) = side_mask(p, set, i);
            if !use_r {
                dr[i] = ZERO;
            }
            if !use_t || fixed {
                dt[i] = ZERO;
            }
            let (br, bt) = (p.beta_r[i], p.beta_t[i]);
            let er = C64::from_polar(1.0, p.theta_r[i]);
            let et = C64::from_polar(1.0, p.theta_t[i]);
            if fixed {
                dr[i] = er * C64::new(0.0, (er.conj() * dr[i]).im);
                continue;
            }
            let (ar, at) = (br.sqrt(), bt.sqrt());
            if set.coupled(br, bt) {
                let (pr, pt) = (er.conj() * dr[i], et.conj() * dt[i]);
                let rot = (pr.im * ar + pt.im * at) / (br + bt);
                dr[i] = er * C64::new(pr.re, rot * ar);
                dt[i] = et * C64::new(pt.re, rot * at);
            }
            if br + bt >= set.beta_max * (1.0 - 1e-9) && br + bt > 0.0 {
                let (vr, vt) = (er * ar, et * at);
                let out = (vr.conj() * dr[i]).re + (vt.conj() * dt[i]).re;
                if out > 0.0 {
                    let s = out / (br + bt);
                    dr[i] -= vr * s;
                    dt[i] -= vt * s;
                }
            }
        }
        if let Some(cap) = set.global_power_cap {
            let (e, pw) = self.worst_draw(p);
            if pw >= cap * (1.0 - 1e-6) {
                let q = &self.draws[e].q;
                let (mut dot, mut nrm) = (0.0, 0.0);
                let v: Vec<(C64, C64)> = (0..m)
                    .map(|i| {
                        let vr = C64::from_polar(p.beta_r[i].sqrt() * q[i], p.theta_r[i]);
                        let vt = C64::from_polar(p.beta_t[i].sqrt() * q[i], p.theta_t[i]);
                        dot += (vr.conj() * dr[i]).re + (vt.conj() * dt[i]).re;
                        nrm += vr.norm_sqr() + vt.norm_sqr();
                        (vr, vt)
                    })
                    .collect();
                if dot > 0.0 && nrm > 0.0 {
                    let s = dot / nrm;
                    for i in 0..m {
                        dr[i] -= v[i].0 * s;
                        dt[i] -= v[i].1 * s;
                    }
                }
            }
        }
        (dr, dt)
    }
}

fn gradient_block(
    obj: &Objective,
    init: RisProfile,
    f_init: f64,
    options: &SolverOptions,
) -> (RisProfile, f64) {
    let (mut p, mut f) = (init, f_init);
    let m = p.len();
    if m == 0 {
        return (p, f);
    }
    let scale = (m as f64 * obj.set.beta_max.max(1.0)).sqrt();
    let mut tau = options.profile_step_init;
    let mut g_r = vec![ZERO; m];
    let mut g_t = vec![ZERO; m];
    for _ in 0..options.inner_profile_iters {
        obj.grad(&p, &mut g_r, &mut g_t);
        let (dr, dt) = obj.direction(&p, &g_r, &g_t);
        let norm = dr
            .iter()
            .chain(&dt)
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            break;
        }
        let phi_r = p.coefficients(Side::Reflect);
        let phi_t = p.coefficients(Side::Refract);
        let mut gain = None;
        for _ in 0..options.max_backtracks {
            let t = tau * scale / norm;
            let cr: Vec<C64> = phi_r.iter().zip(&dr).map(|(x, d)| x + d * t).collect();
            let ct: Vec<C64> = phi_t.iter().zip(&dt).map(|(x, d)| x + d * t).collect();
            let mut cand = RisProfile::from_coefficients(&cr, &ct);
            cand.ms_group = p.ms_group.clone();
            let cand = obj.feasible_point(&cand);
            let fc = obj.rate(&cand);
            // Gains at rounding level are not improvements.
            if fc > f + 1e-12 * f.abs() {
                gain = Some(fc - f);
                p = cand;
                f = fc;
                tau = (tau / options.backtrack_factor).min(1.0);
                break;
            }
            tau *= options.backtrack_factor;
        }
        if gain.is_none() {
            break;
        }
    }
    (p, f)
}

/// Running received amplitudes per draw for cheap single-element moves.
struct Incremental<'a> {
    obj: &'a Objective<'a>,
    phi_r: Vec<C64>,
    phi_t: Vec<C64>,
    a: Vec<Vec<C64>>,
    noise: Vec<Vec<f64>>,
    power: Vec<f64>,
    f: f64,
}

impl<'a> Incremental<'a> {
    fn new(obj: &'a Objective<'a>, p: &RisProfile) -> Self {
        let phi_r = p.coefficients(Side::Reflect);
        let phi_t = p.coefficients(Side::Refract);
        let mut a = Vec::new();
        let mut noise = Vec::new();
        let mut power = Vec::new();
        for d in obj.draws {
            let k = d.users();
            let mut ad = vec![ZERO; k * k];
            let mut nd = vec![0.0; k];
            d.amplitudes(&phi_r, &phi_t, &mut ad, &mut nd);
            a.push(ad);
            noise.push(nd);
            power.push(output_power(&p.beta_r, &p.beta_t, &d.q));
        }
        let f = obj.rate(p);
        Incremental {
            obj,
            phi_r,
            phi_t,
            a,
            noise,
            power,
            f,
        }
    }

    /// Rate after replacing element `i`, or `None` if that breaks the
    /// amplifier budget.
    fn trial(&self, p: &RisProfile, i: usize, c: (f64, f64, f64, f64)) -> Option<f64> {
        let (br, _, bt, _) = c;
        let d_beta = br + bt - p.beta_r[i] - p.beta_t[i];
        if let Some(cap) = self.obj.set.global_power_cap {
            for (e, d) in self.obj.draws.iter().enumerate() {
                if self.power[e] + d_beta * d.q[i] > cap {
                    return None;
                }
            }
        }
        let (dr, dt) = self.deltas(p, i, c);
        let (dbr, dbt) = (br - p.beta_r[i], bt - p.beta_t[i]);
        let mut total = 0.0;
        for (e, d) in self.obj.draws.iter().enumerate() {
            total += d.rate_moved(&self.a[e], &self.noise[e], i, dr, dt, dbr, dbt);
        }
        Some(total / self.obj.draws.len() as f64)
    }

    /// Coefficient changes of element `i`, recomputing only a side that moved.
    fn deltas(&self, p: &RisProfile, i: usize, c: (f64, f64, f64, f64)) -> (C64, C64) {
        let (br, tr, bt, tt) = c;
        let dr = if br == p.beta_r[i] && tr == p.theta_r[i] {
            ZERO
        } else {
            C64::from_polar(br.sqrt(), tr) - self.phi_r[i]
        };
        let dt = if bt == p.beta_t[i] && tt == p.theta_t[i] {
            ZERO
        } else {
            C64::from_polar(bt.sqrt(), tt) - self.phi_t[i]
        };
        (dr, dt)
    }

    fn commit(&mut self, p: &mut RisProfile, i: usize, c: (f64, f64, f64, f64), f: f64) {
        let (br, tr, bt, tt) = c;
        let (dr, dt) = self.deltas(p, i, c);
        self.phi_r[i] += dr;
        self.phi_t[i] += dt;
        for (e, d) in self.obj.draws.iter().enumerate() {
            d.apply_delta(Side::Reflect, i, dr, &mut self.a[e]);
            d.apply_delta(Side::Refract, i, dt, &mut self.a[e]);
            d.noise_delta(Side::Reflect, i, br - p.beta_r[i], &mut self.noise[e]);
            d.noise_delta(Side::Refract, i, bt - p.beta_t[i], &mut self.noise[e]);
            self.power[e] += (br + bt - p.beta_r[i] - p.beta_t[i]) * d.q[i];
        }
        p.beta_r[i] = br;
        p.theta_r[i] = tr;
        p.beta_t[i] = bt;
        p.theta_t[i] = tt;
        self.f = f;
    }
}

/// Best candidate for element `i` among `cands`; commits it when it beats
/// the current rate.
fn try_candidates(
    inc: &mut Incremental,
    p: &mut RisProfile,
    i: usize,
    cands: impl IntoIterator<Item = (f64, f64, f64, f64)>,
) -> bool {
    let cur = inc.f;
    let mut best: Option<((f64, f64, f64, f64), f64)> = None;
    for c in cands {
        if let Some(r) = inc.trial(p, i, c) {
            if r > best.map_or(f64::NEG_INFINITY, |b| b.1) {
                best = Some((c, r));
            }
        }
    }
    match best {
        Some((c, r)) if r > cur + 1e-12 * cur.abs() => {
            inc.commit(p, i, c, r);
            true
        }
        _ => false,
    }
}

fn element_sweeps(
    obj: &Objective,
    init: RisProfile,
    f_init: f64,
    options: &SolverOptions,
) -> (RisProfile, f64) {
    let set = obj.set;
    let phases: Vec<f64> = set
        .phase_lattice()
        .unwrap_or_else(|| (0..16).map(|i| TAU * i as f64 / 16.0).collect());
    let mut p = init.clone();
    let m = p.len();
    let mut inc = Incremental::new(obj, &p);
    for _ in 0..options.inner_profile_iters {
        let mut changed = false;
        for i in 0..m {
            let (use_r, use_t) = side_mask(&p, set, i);
            let pairs: Vec<(f64, f64)> = match &set.amp_levels {
                Some(levels) if !set.fixed_amplitude() => {
                    let lr: &[f64] = if use_r { levels } else { &[0.0] };
                    let lt: &[f64] = if use_t { levels } else { &[0.0] };
                    let mut v = Vec::new();
                    for &a in lr {
                        for &b in lt {
                            if a + b <= set.beta_max {
                                v.push((a, b));
                            }
                        }
                    }
                    v
                }
                _ => vec![(p.beta_r[i], p.beta_t[i])],
            };
            for (br, bt) in pairs {
                if set.coupled(br, bt) {
                    let c = set.coupling.as_ref().expect("coupled");
                    let mut cands = Vec::new();
                    for &tr in &phases {
                        let mut seen: Vec<f64> = Vec::new();
                        for &x in &phases {
                            let tt = c.project(tr, x);
                            if !seen.iter().any(|s| (s - tt).abs() < 1e-12) {
                                seen.push(tt);
                                cands.push((br, tr, bt, tt));
                            }
                        }
                    }
                    changed |= try_candidates(&mut inc, &mut p, i, cands);
                } else {
                    // Each side only reaches its own users, so the two phases
                    // are searched one after the other.
                    let tt0 = if bt > 0.0 { p.theta_t[i] } else { 0.0 };
                    let trs: Vec<f64> = if br > 0.0 { phases.clone() } else { vec![0.0] };
                    changed |= try_candidates(
                        &mut inc,
                        &mut p,
                        i,
                        trs.iter().map(|&tr| (br, tr, bt, tt0)),
                    );
                    if bt > 0.0 && p.beta_r[i] == br && p.beta_t[i] == bt {
                        let tr = p.theta_r[i];
                        changed |= try_candidates(
                            &mut inc,
                            &mut p,
                            i,
                            phases.iter().map(|&tt| (br, tr, bt, tt)),
                        );
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let p = obj.feasible_point(&p);
    let f = obj.rate(&p);
    if f >= f_init {
        (p, f)
    } else {
        (init, f_init)
    }
}

/// Maximize `eval` over an angle: an 8-point grid anchored at `start`, then
/// golden-section refinement around the best grid point.
fn best_angle(start: f64, eval: impl Fn(f64) -> Option<f64>) -> Option<(f64, f64)> {
    let h = TAU / 8.0;
    let mut best: Option<(f64, f64)> = None;
    for j in 0..8 {
        let t = start + h * j as f64;
        if let Some(v) = eval(t) {
            if best.is_none_or(|b| v > b.1) {
                best = Some((t, v));
            }
        }
    }
    let (mut t_best, mut v_best) = best?;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (t_best - h, t_best + h);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = eval(x1).unwrap_or(f64::NEG_INFINITY);
    let mut f2 = eval(x2).unwrap_or(f64::NEG_INFINITY);
    for _ in 0..16 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = eval(x1).unwrap_or(f64::NEG_INFINITY);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = eval(x2).unwrap_or(f64::NEG_INFINITY);
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > v_best {
            t_best = x;
            v_best = f;
        }
    }
    Some((crate::model::wrap_phase(t_best), v_best))
}

/// Coordinate ascent over continuous phases with amplitudes held.
fn phase_sweeps(obj: &Objective, init: RisProfile, f_init: f64, sweeps: usize) -> (RisProfile, f64) {
    let set = obj.set;
    let mut p = init.clone();
    let mut inc = Incremental::new(obj, &p);
    for _ in 0..sweeps {
        let before = inc.f;
        for i in 0..p.len() {
            let (br, bt) = (p.beta_r[i], p.beta_t[i]);
            if set.coupled(br, bt) {
                let c = set.coupling.clone().expect("coupled");
                for flip in [0.0, PI] {
                    let tt0 = c.project(p.theta_r[i], p.theta_t[i] + flip);
                    let delta = p.theta_r[i] - tt0;
                    let found = best_angle(p.theta_r[i], |tr| {
                        inc.trial(&p, i, (br, tr, bt, c.project(tr, tr - delta)))
                    });
                    if let Some((tr, _)) = found {
                        let tt = c.project(tr, tr - delta);
                        try_candidates(&mut inc, &mut p, i, [(br, tr, bt, tt)]);
                    }
                }
                continue;
            }
            if br > 0.0 {
                let tt = p.theta_t[i];
                if let Some((tr, _)) = best_angle(p.theta_r[i], |tr| inc.trial(&p, i, (br, tr, bt, tt))) {
                    try_candidates(&mut inc, &mut p, i, [(br, tr, bt, tt)]);
                }
            }
            if bt > 0.0 {
                let tr = p.theta_r[i];
                if let Some((tt, _)) = best_angle(p.theta_t[i], |tt| inc.trial(&p, i, (br, tr, bt, tt))) {
                    try_candidates(&mut inc, &mut p, i, [(br, tr, bt, tt)]);
                }
            }
        }
        if inc.f - before <= 1e-9 * before.abs() {
            break;
        }
    }
    let p = obj.feasible_point(&p);
    let f = obj.rate(&p);
    if f >= f_init {
        (p, f)
    } else {
        (init, f_init)
    }
}

/// Flip the sign offset of every doubly-active coupled element when that
/// helps; gradient steps cannot move between the two offsets.
fn flip_sweep(obj: &Objective, init: RisProfile, f_init: f64) -> (RisProfile, f64) {
    let set = obj.set;
    let Some(c) = set.coupling.clone() else {
        return (init, f_init);
    };
    let mut p = init.clone();
    let mut inc = Incremental::new(obj, &p);
    for i in 0..p.len() {
        let (br, bt) = (p.beta_r[i], p.beta_t[i]);
        if set.coupled(br, bt) {
            let tr = p.theta_r[i];
            let tt = c.project(tr, p.theta_t[i] + PI);
            try_candidates(&mut inc, &mut p, i, [(br, tr, bt, tt)]);
        }
    }
    let p = obj.feasible_point(&p);
    let f = obj.rate(&p);
    if f >= f_init {
        (p, f)
    } else {
        (init, f_init)
    }
}

/// One profile block on a sample-average objective. Returns a feasible
/// profile whose objective is at least that of the projected `init`.
pub(crate) fn profile_block(
    obj: &Objective,
    init: &RisProfile,
    options: &SolverOptions,
) -> (RisProfile, f64) {
    let p = obj.feasible_point(init);
    let f = obj.rate(&p);
    let method = options.profile_method;
    let (mut p, mut f) = (p, f);
    if method == ProfileMethod::ElementWise || (method == ProfileMethod::Auto && obj.set.is_discrete())
    {
        (p, f) = element_sweeps(obj, p, f, options);
    }
    if method == ProfileMethod::Auto && obj.set.phase_bits == 0 {
        (p, f) = phase_sweeps(obj, p, f, 1);
    }
    if method != ProfileMethod::ElementWise {
        (p, f) = gradient_block(obj, p, f, options);
        if obj.set.coupling.is_some() {
            (p, f) = flip_sweep(obj, p, f);
        }
    }
    (p, f)
}

fn slot_precoder(w: &Precoder, side: Side) -> &nalgebra::DMatrix<C64> {
    match (&w.slots, side) {
        (Some(s), Side::Reflect) => &s[0],
        (Some(s), Side::Refract) => &s[1],
        (None, _) => &w.w,
    }
}

/// Profile block with the precoder frozen: projected ascent on the sum-rate
/// with backtracking. A step is kept only if the projected, budget-scaled
/// iterate improves the objective. Time-switching profiles optimize each
/// slot on its own.
pub fn optimize_profile(
    channels: &ChannelSet,
    w: &Precoder,
    cfg: &SystemConfig,
    set: &FeasibleSet,
    profile_init: &RisProfile,
    options: &SolverOptions,
) -> RisProfile {
    let links = Links::new(channels);
    if let (Strategy::Ts, Some(ts)) = (set.strategy, &profile_init.ts) {
        let mut out = profile_init.clone();
        let mut ts = ts.clone();
        for side in [Side::Reflect, Side::Refract] {
            let slot_set = set.slot(side);
            let draws = [FixedPrecoder::new(&links, slot_precoder(w, side), cfg)];
            let obj = Objective {
                draws: &draws,
                set: &slot_set,
            };
            let slot = match side {
                Side::Reflect => &mut ts.reflect_slot,
                Side::Refract => &mut ts.refract_slot,
            };
            *slot = profile_block(&obj, slot, options).0;
        }
        out.ts = Some(ts);
        return project_profile(&out, set);
    }
    let draws = [FixedPrecoder::new(&links, &w.w, cfg)];
    let obj = Objective { draws: &draws, set };
    profile_block(&obj, profile_init, options).0
}

/// Wirtinger gradient `dR/d conj(phi)` of the sum-rate with respect to the
/// reflective and refractive coefficients, with `w` fixed. The real
/// gradient with respect to `(Re phi, Im phi)` is `(2 Re g, 2 Im g)`.
pub fn rate_gradient(
    channels: &ChannelSet,
    w: &Precoder,
    profile: &RisProfile,
    cfg: &SystemConfig,
) -> (Vec<C64>, Vec<C64>) {
    let links = Links::new(channels);
    let d = FixedPrecoder::new(&links, &w.w, cfg);
    let m = profile.len();
    let mut g_r = vec![ZERO; m];
    let mut g_t = vec![ZERO; m];
    d.rate_grad(
        &profile.coefficients(Side::Reflect),
        &profile.coefficients(Side::Refract),
        &mut g_r,
        &mut g_t,
        1.0,
    );
    (g_r, g_t)
}
