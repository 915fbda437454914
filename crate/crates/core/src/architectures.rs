//! Feasible sets of the five surface architectures and the projections the
//! optimizer uses to stay inside them.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Debug;
use std::sync::Arc;

use crate::model::{
    incident_power, wrap_phase, Architecture, ChannelSet, Precoder, RisProfile, Side, Strategy,
    SystemConfig, C64,
};

/// Relative tolerance used by [`feasible`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Constraint tying the refractive phase of a doubly-active element to its
/// reflective phase.
pub trait CouplingConstraint: Debug + Send + Sync {
    /// Refractive phase after enforcing the constraint for the given pair.
    fn project(&self, theta_r: f64, theta_t: f64) -> f64;
    /// Angular distance of the pair from the constraint set.
    fn residual(&self, theta_r: f64, theta_t: f64) -> f64;
}

/// `theta_r - theta_t` restricted to a finite set of offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDifferenceSet {
    pub offsets: Vec<f64>,
}

impl Default for PhaseDifferenceSet {
    /// `cos(theta_r - theta_t) = 0`.
    fn default() -> Self {
        PhaseDifferenceSet {
            offsets: vec![FRAC_PI_2, -FRAC_PI_2],
        }
    }
}

/// Signed angle in `(-pi, pi]`.
fn principal(x: f64) -> f64 {
    let w = wrap_phase(x);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

impl PhaseDifferenceSet {
    fn nearest(&self, diff: f64) -> (f64, f64) {
        let mut best = (self.offsets[0], f64::INFINITY);
        for &o in &self.offsets {
            let d = principal(diff - o).abs();
            if d < best.1 {
                best = (o, d);
            }
        }
        best
    }
}

impl CouplingConstraint for PhaseDifferenceSet {
    fn project(&self, theta_r: f64, theta_t: f64) -> f64 {
        let (o, _) = self.nearest(theta_r - theta_t);
        wrap_phase(theta_r - o)
    }

    fn residual(&self, theta_r: f64, theta_t: f64) -> f64 {
        self.nearest(theta_r - theta_t).1
    }
}

#[derive(Clone, Debug)]
pub struct FeasibleSet {
    pub architecture: Architecture,
    pub strategy: Strategy,
    pub beta_max: f64,
    /// 0 means continuous phases.
    pub phase_bits: u32,
    /// Optional amplitude lattice; must contain 0.
    pub amp_levels: Option<Vec<f64>>,
    /// Budget for [`crate::model::ris_output_power`], watts.
    pub global_power_cap: Option<f64>,
    pub coupling: Option<Arc<dyn CouplingConstraint>>,
    /// Time-switching slot: only this side may be active.
    pub restrict_side: Option<Side>,
}

impl FeasibleSet {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        let coupling: Option<Arc<dyn CouplingConstraint>> =
            if cfg.architecture == Architecture::MfRisCoupled {
                Some(Arc::new(PhaseDifferenceSet::default()))
            } else {
                None
            };
        FeasibleSet {
            architecture: cfg.architecture,
            strategy: cfg.strategy,
            beta_max: if cfg.architecture.is_amplifying() {
                cfg.beta_max
            } else {
                1.0
            },
            phase_bits: cfg.phase_bits,
            amp_levels: None,
            global_power_cap: cfg.amplifies().then_some(cfg.p_ris),
            coupling,
            restrict_side: None,
        }
    }

    pub fn with_amp_levels(mut self, levels: Vec<f64>) -> Self {
        let mut levels = levels;
        levels.sort_by(f64::total_cmp);
        if levels.first() != Some(&0.0) {
            levels.insert(0, 0.0);
        }
        self.amp_levels = Some(levels);
        self
    }

    pub fn is_discrete(&self) -> bool {
        self.phase_bits > 0 || self.amp_levels.is_some()
    }

    /// Fixed unit-modulus reflection with no amplitude freedom.
    pub fn fixed_amplitude(&self) -> bool {
        self.architecture == Architecture::PassiveReflect
    }

    pub fn refracts(&self) -> bool {
        self.architecture.refracts()
    }

    /// Copy restricted to one side, as used for a time-switching slot.
    pub fn slot(&self, side: Side) -> FeasibleSet {
        let mut s = self.clone();
        s.strategy = Strategy::Es;
        s.restrict_side = Some(side);
        s
    }

    pub fn phase_lattice(&self) -> Option<Vec<f64>> {
        (self.phase_bits > 0).then(|| {
            let l = 1usize << self.phase_bits;
            (0..l).map(|i| lattice_point(i, l)).collect()
        })
    }

    pub(crate) fn coupled(&self, beta_r: f64, beta_t: f64) -> bool {
        self.coupling.is_some() && beta_r > 0.0 && beta_t > 0.0
    }
}

fn lattice_point(i: usize, levels: usize) -> f64 {
    TAU * i as f64 / levels as f64
}

/// Nearest point of `{2*pi*i / 2^bits}`; exact ties go to the lower level.
pub fn quantize_phase(theta: f64, bits: u32) -> f64 {
    if bits == 0 {
        return wrap_phase(theta);
    }
    let levels = 1usize << bits;
    let x = wrap_phase(theta) * levels as f64 / TAU;
    let lo = x.floor();
    let i = if x - lo > 0.5 { lo + 1.0 } else { lo } as usize % levels;
    lattice_point(i, levels)
}

fn floor_level(beta: f64, levels: &[f64]) -> f64 {
    levels
        .iter()
        .rev()
        .find(|&&l| l <= beta)
        .copied()
        .unwrap_or(0.0)
}

/// Scale `(br, bt)` onto the cap if it is exceeded, never ending above it.
fn radial(br: f64, bt: f64, cap: f64) -> (f64, f64) {
    let s = br + bt;
    if s <= cap {
        return (br, bt);
    }
    let mut f = cap / s;
    let (mut r, mut t) = (br * f, bt * f);
    while r + t > cap {
        f *= 1.0 - f64::EPSILON;
        r = br * f;
        t = bt * f;
    }
    (r, t)
}

/// Which sides each element may use under the set and the profile's
/// strategy metadata.
pub(crate) fn side_mask(profile: &RisProfile, set: &FeasibleSet, m: usize) -> (bool, bool) {
    let refract = set.refracts();
    let (r, t) = match &profile.ms_group {
        Some(g) if set.strategy == Strategy::Ms && refract => (g[m], !g[m]),
        _ => (true, refract),
    };
    match set.restrict_side {
        Some(Side::Reflect) => (r, false),
        Some(Side::Refract) => (false, t),
        None => (r, t),
    }
}

fn project_flat(profile: &RisProfile, set: &FeasibleSet) -> RisProfile {
    let mut p = profile.clone();
    let m = p.len();
    for i in 0..m {
        let (use_r, use_t) = side_mask(profile, set, i);

        let clean = |b: f64| if b.is_finite() && b > 0.0 { b } else { 0.0 };
        let (mut br, mut bt) = (clean(p.beta_r[i]), clean(p.beta_t[i]));
        if set.fixed_amplitude() {
            br = if use_r { 1.0 } else { 0.0 };
            bt = 0.0;
        }
        if !use_r {
            br = 0.0;
        }
        if !use_t {
            bt = 0.0;
        }
        let (mut br, mut bt) = radial(br, bt, set.beta_max);
        if let (Some(levels), false) = (&set.amp_levels, set.fixed_amplitude()) {
            br = floor_level(br, levels);
            bt = floor_level(bt, levels);
            if br + bt > set.beta_max {
                // Lattice sums can still overshoot; drop the smaller side a level.
                if br >= bt {
                    bt = floor_level(set.beta_max - br, levels);
                } else {
                    br = floor_level(set.beta_max - bt, levels);
                }
            }
        }
        p.beta_r[i] = br;
        p.beta_t[i] = bt;

        let tr = if p.theta_r[i].is_finite() { p.theta_r[i] } else { 0.0 };
        let tt = if p.theta_t[i].is_finite() { p.theta_t[i] } else { 0.0 };
        p.theta_r[i] = quantize_phase(tr, set.phase_bits);
        if !set.refracts() {
            p.theta_t[i] = 0.0;
        } else if set.coupled(br, bt) {
            let c = set.coupling.as_ref().expect("coupled");
            p.theta_t[i] = c.project(p.theta_r[i], tt);
        } else {
            p.theta_t[i] = quantize_phase(tt, set.phase_bits);
        }
    }
    p
}

/// Map a finite profile onto the per-element constraints of `set`:
/// radial amplitude scaling, phase quantization, then coupling (which moves
/// the refractive phase). Idempotent.
pub fn project_profile(profile: &RisProfile, set: &FeasibleSet) -> RisProfile {
    if let (Some(ts), Strategy::Ts) = (&profile.ts, set.strategy) {
        let mut ts = ts.clone();
        ts.reflect_slot = project_flat(&ts.reflect_slot, &set.slot(Side::Reflect));
        ts.refract_slot = project_flat(&ts.refract_slot, &set.slot(Side::Refract));
        let l = ts.lambda_r.clamp(0.0, 1.0);
        ts.lambda_r = if l.is_finite() { l } else { 0.5 };
        ts.lambda_t = 1.0 - ts.lambda_r;
        let mut p = project_flat(profile, set);
        p.ts = Some(ts);
        return p;
    }
    project_flat(profile, set)
}

pub(crate) fn output_power(beta_r: &[f64], beta_t: &[f64], q: &[f64]) -> f64 {
    beta_r
        .iter()
        .zip(beta_t)
        .zip(q)
        .map(|((r, t), q)| (r + t) * q)
        .sum()
}

/// Scale all amplitudes of a flat profile by one factor so that
/// `sum_m beta_m q_m <= cap`. Output power is linear in the amplitudes, so
/// the factor is `cap / P_out`; the loop only absorbs rounding.
pub(crate) fn scale_to_cap(profile: &mut RisProfile, q: &[f64], cap: f64, set: &FeasibleSet) {
    let p_out = output_power(&profile.beta_r, &profile.beta_t, q);
    if p_out <= cap {
        return;
    }
    let mut f = if cap > 0.0 { cap / p_out } else { 0.0 };
    let (br0, bt0) = (profile.beta_r.clone(), profile.beta_t.clone());
    loop {
        for i in 0..br0.len() {
            profile.beta_r[i] = br0[i] * f;
            profile.beta_t[i] = bt0[i] * f;
            if let Some(levels) = &set.amp_levels {
                profile.beta_r[i] = floor_level(profile.beta_r[i], levels);
                profile.beta_t[i] = floor_level(profile.beta_t[i], levels);
            }
        }
        if output_power(&profile.beta_r, &profile.beta_t, q) <= cap || f == 0.0 {
            break;
        }
        f *= 1.0 - 4.0 * f64::EPSILON;
    }
}

/// Restore the global amplifier budget by uniform amplitude scaling.
/// Non-amplifying sets and profiles already within budget are returned as is.
pub fn enforce_global_power(
    profile: &RisProfile,
    w: &Precoder,
    channels: &ChannelSet,
    set: &FeasibleSet,
    cfg: &SystemConfig,
) -> RisProfile {
    let Some(cap) = set.global_power_cap else {
        return profile.clone();
    };
    let mut out = profile.clone();
    match (&w.slots, &mut out.ts) {
        (_, Some(ts)) => {
            let (w_r, w_t) = match &w.slots {
                Some(s) => (&s[0], &s[1]),
                None => (&w.w, &w.w),
            };
            let q = incident_power(w_r, channels, cfg);
            scale_to_cap(&mut ts.reflect_slot, &q, cap, set);
            let q = incident_power(w_t, channels, cfg);
            scale_to_cap(&mut ts.refract_slot, &q, cap, set);
        }
        _ => {
            let q = incident_power(&w.w, channels, cfg);
            scale_to_cap(&mut out, &q, cap, set);
        }
    }
    out
}

/// Phase-aligned profile serving each side's users, used to score a group
/// assignment.
fn aligned_profile(
    groups: &[bool],
    channels: &ChannelSet,
    w: &Precoder,
    set: &FeasibleSet,
    cfg: &SystemConfig,
) -> RisProfile {
    let m = channels.n_elements();
    let gw = &channels.bs_ris * &w.w;
    let mut p = RisProfile::zeros(m);
    p.ms_group = Some(groups.to_vec());
    let direct_phase: Vec<C64> = (0..channels.n_users())
        .map(|k| {
            let dw: C64 = channels.direct[k]
                .iter()
                .zip(w.w.column(k).iter())
                .map(|(h, x)| h.conj() * x)
                .sum();
            if dw.norm() > 0.0 {
                dw / dw.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect();
    for i in 0..m {
        let side = if groups[i] { Side::Reflect } else { Side::Refract };
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..channels.n_users() {
            if channels.side[k] == side {
                let c = channels.ris_user[k][i].conj() * gw[(i, k)];
                acc += c.conj() * direct_phase[k];
            }
        }
        match side {
            Side::Reflect => {
                p.beta_r[i] = set.beta_max;
                p.theta_r[i] = wrap_phase(acc.arg());
            }
            Side::Refract => {
                p.beta_t[i] = set.beta_max;
                p.theta_t[i] = wrap_phase(acc.arg());
            }
        }
    }
    let p = project_profile(&p, set);
    enforce_global_power(&p, w, channels, set, cfg)
}

/// Score of a mode-switching group assignment under precoder `w`.
pub fn ms_assignment_rate(
    groups: &[bool],
    channels: &ChannelSet,
    w: &Precoder,
    set: &FeasibleSet,
    cfg: &SystemConfig,
) -> f64 {
    let p = aligned_profile(groups, channels, w, set, cfg);
    crate::model::sum_rate(w, channels, &p, cfg).unwrap_or(0.0)
}

/// Greedy mode-switching partition. Three starts (each element's stronger
/// side by aggregate cascade gain, all reflect, all refract); from each,
/// single elements are flipped while the sum-rate strictly improves, for at
/// most `5 * M` attempted flips. The best final partition wins, ties to the
/// earlier start.
pub fn assign_ms_groups(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    set: &FeasibleSet,
    w: &Precoder,
) -> Vec<bool> {
    let m = channels.n_elements();
    if !set.refracts() {
        return vec![true; m];
    }
    let gw = &channels.bs_ris * &w.w;
    let by_gain: Vec<bool> = (0..m)
        .map(|i| {
            let (mut r, mut t) = (0.0, 0.0);
            for k in 0..channels.n_users() {
                let c = (channels.ris_user[k][i].conj() * gw[(i, k)]).norm_sqr();
                match channels.side[k] {
                    Side::Reflect => r += c,
                    Side::Refract => t += c,
                }
            }
            r >= t
        })
        .collect();
    let mut best: Option<(Vec<bool>, f64)> = None;
    for start in [by_gain, vec![true; m], vec![false; m]] {
        let (groups, rate) = ms_greedy(start, channels, w, set, cfg);
        if best.as_ref().is_none_or(|b| rate > b.1) {
            best = Some((groups, rate));
        }
    }
    best.expect("three starts").0
}

fn ms_greedy(
    mut groups: Vec<bool>,
    channels: &ChannelSet,
    w: &Precoder,
    set: &FeasibleSet,
    cfg: &SystemConfig,
) -> (Vec<bool>, f64) {
    let m = groups.len();
    let mut best = ms_assignment_rate(&groups, channels, w, set, cfg);
    let mut attempts = 0;
    let mut since_improvement = 0;
    let mut i = 0;
    while attempts < 5 * m && since_improvement < m {
        groups[i] = !groups[i];
        let r = ms_assignment_rate(&groups, channels, w, set, cfg);
        attempts += 1;
        if r > best {
            best = r;
            since_improvement = 0;
        } else {
            groups[i] = !groups[i];
            since_improvement += 1;
        }
        i = (i + 1) % m;
    }
    (groups, best)
}

/// Constraint check with a residual per constraint family. All residuals
/// are violation magnitudes (0 when satisfied).
pub fn feasible(
    profile: &RisProfile,
    set: &FeasibleSet,
    w: &Precoder,
    channels: &ChannelSet,
    cfg: &SystemConfig,
) -> (bool, BTreeMap<String, f64>) {
    let mut res = BTreeMap::new();
    let flat = |p: &RisProfile, set: &FeasibleSet, res: &mut BTreeMap<String, f64>| {
        let mut energy: f64 = 0.0;
        let mut quant: f64 = 0.0;
        let mut coupling: f64 = 0.0;
        let mut mode: f64 = 0.0;
        let mut levels: f64 = 0.0;
        for i in 0..p.len() {
            let (br, bt) = (p.beta_r[i], p.beta_t[i]);
            energy = energy.max(br + bt - set.beta_max).max(-br).max(-bt);
            let (use_r, use_t) = side_mask(p, set, i);
            if !use_r {
                mode = mode.max(br);
            }
            if !use_t {
                mode = mode.max(bt);
            }
            if set.fixed_amplitude() && use_r {
                mode = mode.max((br - 1.0).abs());
            }
            if let (Some(l), false) = (&set.amp_levels, set.fixed_amplitude()) {
                for b in [br, bt] {
                    let d = l.iter().map(|x| (x - b).abs()).fold(f64::INFINITY, f64::min);
                    levels = levels.max(d);
                }
            }
            if set.phase_bits > 0 {
                let d = |t: f64| principal(t - quantize_phase(t, set.phase_bits)).abs();
                quant = quant.max(d(p.theta_r[i]));
                if !set.coupled(br, bt) {
                    quant = quant.max(d(p.theta_t[i]));
                }
            }
            if let (true, Some(c)) = (set.coupled(br, bt), &set.coupling) {
                coupling = coupling.max(c.residual(p.theta_r[i], p.theta_t[i]));
            }
        }
        let merge = |res: &mut BTreeMap<String, f64>, k: &str, v: f64| {
            let e = res.entry(k.to_string()).or_insert(0.0);
            *e = e.max(v.max(0.0));
        };
        merge(res, "per_element_energy", energy);
        merge(res, "quantization", quant);
        merge(res, "coupling", coupling);
        merge(res, "mode", mode);
        merge(res, "amplitude_levels", levels);
    };

    let mut ts_ok = true;
    match (&profile.ts, set.strategy) {
        (Some(ts), Strategy::Ts) => {
            flat(&ts.reflect_slot, &set.slot(Side::Reflect), &mut res);
            flat(&ts.refract_slot, &set.slot(Side::Refract), &mut res);
            ts_ok = ts.lambda_r >= 0.0
                && ts.lambda_t >= 0.0
                && (ts.lambda_r + ts.lambda_t - 1.0).abs() <= FEASIBILITY_TOL;
        }
        _ => flat(profile, set, &mut res),
    }
    res.insert(
        "time_fractions".into(),
        if ts_ok { 0.0 } else { 1.0 },
    );

    let bs = (w.power() - cfg.p_bs).max(0.0);
    res.insert("bs_power".into(), bs);
    let ris = match set.global_power_cap {
        Some(cap) => {
            let p = crate::model::ris_output_power(w, channels, profile, cfg).unwrap_or(0.0);
            (p - cap).max(0.0)
        }
        None => 0.0,
    };
    res.insert("ris_power".into(), ris);

    let tol = FEASIBILITY_TOL;
    let scale = |k: &str| match k {
        "per_element_energy" | "amplitude_levels" | "mode" => set.beta_max.max(1.0),
        "bs_power" => cfg.p_bs.max(f64::MIN_POSITIVE),
        "ris_power" => set.global_power_cap.unwrap_or(1.0).max(f64::MIN_POSITIVE),
        _ => 1.0,
    };
    let ok = res.iter().all(|(k, v)| *v <= tol * scale(k));
    (ok, res)
}
