//! Signal model for a multi-user downlink assisted by a reflecting,
//! refracting and (optionally) amplifying surface.
//!
//! The surface applies a reflective and a refractive diagonal response
//! `diag(sqrt(beta) * exp(j*theta))`. A user on the reflect side sees the
//! reflective response, a user on the refract side the refractive one, and
//! amplifying surfaces inject thermal noise `noise_ris` per element before
//! the response is applied.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    PassiveReflect,
    StarRis,
    ActiveRis,
    MfRisIdeal,
    MfRisCoupled,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::PassiveReflect,
        Architecture::StarRis,
        Architecture::ActiveRis,
        Architecture::MfRisIdeal,
        Architecture::MfRisCoupled,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Architecture::PassiveReflect => "passive",
            Architecture::StarRis => "star",
            Architecture::ActiveRis => "active",
            Architecture::MfRisIdeal => "mf-ideal",
            Architecture::MfRisCoupled => "mf-coupled",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.key() == key)
    }

    /// Has an amplifier behind the elements (global power budget, thermal noise).
    pub fn is_amplifying(self) -> bool {
        matches!(
            self,
            Architecture::ActiveRis | Architecture::MfRisIdeal | Architecture::MfRisCoupled
        )
    }

    /// Can serve the half-space behind the surface.
    pub fn refracts(self) -> bool {
        matches!(
            self,
            Architecture::StarRis | Architecture::MfRisIdeal | Architecture::MfRisCoupled
        )
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// Operating strategy: energy splitting, mode switching, time switching.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Es,
    Ms,
    Ts,
}

impl Strategy {
    pub fn key(self) -> &'static str {
        match self {
            Strategy::Es => "es",
            Strategy::Ms => "ms",
            Strategy::Ts => "ts",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        match key {
            "es" => Some(Strategy::Es),
            "ms" => Some(Strategy::Ms),
            "ts" => Some(Strategy::Ts),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Reflect,
    Refract,
}

/// Scenario scalars. All powers are in watts.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    pub n_elements: usize,
    pub p_total: f64,
    pub p_bs: f64,
    pub p_ris: f64,
    pub noise_rx: f64,
    pub noise_ris: f64,
    pub beta_max: f64,
    pub architecture: Architecture,
    pub strategy: Strategy,
    pub phase_bits: u32,
    pub rng_seed: u64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Default for SystemConfig {
    fn default() -> Self {
        let noise = dbm_to_watts(-80.0);
        let p_total = dbm_to_watts(20.0);
        SystemConfig {
            n_antennas: 8,
            n_users: 2,
            n_elements: 64,
            p_total,
            p_bs: p_total,
            p_ris: 0.0,
            noise_rx: noise,
            noise_ris: noise,
            beta_max: 10.0,
            architecture: Architecture::MfRisIdeal,
            strategy: Strategy::Es,
            phase_bits: 0,
            rng_seed: 0,
        }
    }
}

impl SystemConfig {
    /// True when the amplifier budget is in force: amplifying hardware with
    /// an amplification cap above unity.
    pub fn amplifies(&self) -> bool {
        self.architecture.is_amplifying() && self.beta_max > 1.0
    }

    /// RIS thermal noise actually injected (zero for non-amplifying hardware).
    pub fn ris_noise(&self) -> f64 {
        if self.architecture.is_amplifying() {
            self.noise_ris
        } else {
            0.0
        }
    }

    /// Copy of `self` retargeted to `arch` with the per-architecture
    /// invariants applied. The whole budget goes to the BS until a split is set.
    pub fn for_architecture(&self, arch: Architecture) -> SystemConfig {
        let mut cfg = self.clone();
        cfg.architecture = arch;
        if !arch.is_amplifying() {
            cfg.beta_max = 1.0;
            cfg.noise_ris = 0.0;
        }
        if arch == Architecture::PassiveReflect || arch == Architecture::ActiveRis {
            cfg.strategy = Strategy::Es;
        }
        cfg.p_bs = cfg.p_total;
        cfg.p_ris = 0.0;
        cfg
    }

    /// Divide `p_total` so that `p_bs = fraction * p_total`. Only amplifying
    /// configurations receive a RIS share.
    pub fn with_split(&self, bs_fraction: f64) -> SystemConfig {
        let mut cfg = self.clone();
        if cfg.amplifies() {
            cfg.p_bs = bs_fraction * cfg.p_total;
            cfg.p_ris = cfg.p_total - cfg.p_bs;
        } else {
            cfg.p_bs = cfg.p_total;
            cfg.p_ris = 0.0;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        if self.n_antennas == 0 {
            return bad("cfg.n_antennas", "must be positive");
        }
        if self.n_users == 0 {
            return bad("cfg.n_users", "must be positive");
        }
        if self.n_elements == 0 {
            return bad("cfg.n_elements", "must be positive");
        }
        if !(self.p_total > 0.0 && self.p_total.is_finite()) {
            return bad("cfg.p_total_dbm", "must be finite");
        }
        if !(self.noise_rx >= 0.0) || !(self.noise_ris >= 0.0) {
            return bad("cfg.noise_dbm", "noise powers must be nonnegative");
        }
        if !(self.beta_max >= 0.0 && self.beta_max.is_finite()) {
            return bad("cfg.beta_max", "must be finite and nonnegative");
        }
        if self.architecture.is_amplifying() && self.beta_max < 1.0 {
            return bad("cfg.beta_max", "amplifying architectures need beta_max >= 1");
        }
        if !self.architecture.is_amplifying() && self.beta_max != 1.0 {
            return bad("cfg.beta_max", "non-amplifying architectures fix beta_max = 1");
        }
        let slack = 1e-12 * self.p_total;
        if self.amplifies() {
            if self.p_bs + self.p_ris > self.p_total + slack {
                return bad("cfg.p_bs", "p_bs + p_ris exceeds p_total");
            }
        } else if self.p_bs > self.p_total + slack || self.p_ris != 0.0 {
            return bad("cfg.p_bs", "non-amplifying: p_bs <= p_total and p_ris = 0");
        }
        if self.phase_bits > 16 {
            return bad("cfg.phase_bits", "at most 16 bits");
        }
        Ok(())
    }
}

/// One realization of every link.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// BS -> RIS, `M x N`.
    pub bs_ris: DMatrix<C64>,
    /// RIS -> user k, length `M`; the link enters the model as `g_k^H`.
    pub ris_user: Vec<DVector<C64>>,
    /// BS -> user k, length `N`; the link enters the model as `h_k^H`.
    pub direct: Vec<DVector<C64>>,
    pub side: Vec<Side>,
}

impl ChannelSet {
    pub fn n_users(&self) -> usize {
        self.side.len()
    }

    pub fn n_elements(&self) -> usize {
        self.bs_ris.nrows()
    }

    pub fn n_antennas(&self) -> usize {
        self.bs_ris.ncols()
    }

    pub fn check_shapes(&self, cfg: &SystemConfig) -> Result<()> {
        let (m, n, k) = (cfg.n_elements, cfg.n_antennas, cfg.n_users);
        if self.bs_ris.shape() != (m, n)
            || self.ris_user.len() != k
            || self.direct.len() != k
            || self.side.len() != k
            || self.ris_user.iter().any(|g| g.len() != m)
            || self.direct.iter().any(|h| h.len() != n)
        {
            return Err(Error::Shape(format!(
                "channel set does not match N={n}, K={k}, M={m}"
            )));
        }
        Ok(())
    }
}

/// Time-switching metadata: fractions and the two slot profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSwitching {
    pub lambda_r: f64,
    pub lambda_t: f64,
    pub reflect_slot: RisProfile,
    pub refract_slot: RisProfile,
}

/// Per-element amplitudes (power gains) and phases for both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct RisProfile {
    pub beta_r: Vec<f64>,
    pub theta_r: Vec<f64>,
    pub beta_t: Vec<f64>,
    pub theta_t: Vec<f64>,
    /// Mode switching: `true` marks the reflective group.
    pub ms_group: Option<Vec<bool>>,
    pub ts: Option<Box<TimeSwitching>>,
}

impl RisProfile {
    pub fn zeros(m: usize) -> Self {
        RisProfile {
            beta_r: vec![0.0; m],
            theta_r: vec![0.0; m],
            beta_t: vec![0.0; m],
            theta_t: vec![0.0; m],
            ms_group: None,
            ts: None,
        }
    }

    pub fn len(&self) -> usize {
        self.beta_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_r.is_empty()
    }

    pub fn beta(&self, side: Side) -> &[f64] {
        match side {
            Side::Reflect => &self.beta_r,
            Side::Refract => &self.beta_t,
        }
    }

    pub fn theta(&self, side: Side) -> &[f64] {
        match side {
            Side::Reflect => &self.theta_r,
            Side::Refract => &self.theta_t,
        }
    }

    /// Diagonal of the response for one side: `sqrt(beta_m) * exp(j theta_m)`.
    pub fn coefficients(&self, side: Side) -> Vec<C64> {
        self.beta(side)
            .iter()
            .zip(self.theta(side))
            .map(|(&b, &t)| C64::from_polar(b.sqrt(), t))
            .collect()
    }

    /// Rebuild a profile from complex coefficients of both sides.
    pub fn from_coefficients(phi_r: &[C64], phi_t: &[C64]) -> Self {
        let m = phi_r.len();
        let mut p = RisProfile::zeros(m);
        for i in 0..m {
            p.beta_r[i] = phi_r[i].norm_sqr();
            p.theta_r[i] = wrap_phase(phi_r[i].arg());
            p.beta_t[i] = phi_t[i].norm_sqr();
            p.theta_t[i] = wrap_phase(phi_t[i].arg());
        }
        p
    }
}

/// Canonical phase in `[0, 2*pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// BS precoder: column `k` of `w` serves user `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Precoder {
    pub w: DMatrix<C64>,
    /// Per-slot precoders for time switching (reflect slot, refract slot).
    pub slots: Option<Box<[DMatrix<C64>; 2]>>,
}

impl Precoder {
    pub fn new(w: DMatrix<C64>) -> Self {
        Precoder { w, slots: None }
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Precoder::new(DMatrix::zeros(n, k))
    }

    pub fn power(&self) -> f64 {
        match &self.slots {
            Some(s) => s[0].norm_squared().max(s[1].norm_squared()),
            None => self.w.norm_squared(),
        }
    }

    fn slot(&self, i: usize) -> &DMatrix<C64> {
        match &self.slots {
            Some(s) => &s[i],
            None => &self.w,
        }
    }
}

/// Objective history and diagnostics of one solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub objective_trace: Vec<f64>,
    pub final_rates: Vec<f64>,
    pub constraint_residuals: std::collections::BTreeMap<String, f64>,
    pub iterations: usize,
    pub wall_time: f64,
    pub seed: u64,
    pub p_bs: f64,
    pub p_ris: f64,
}

/// `Theta_side` as a dense diagonal matrix.
pub fn ris_matrix(profile: &RisProfile, side: Side) -> DMatrix<C64> {
    DMatrix::from_diagonal(&DVector::from_vec(profile.coefficients(side)))
}

/// Reflected and refracted outputs of element `m` for incident signal `s_m`.
pub fn element_response(profile: &RisProfile, m: usize, s_m: C64) -> (C64, C64) {
    let r = C64::from_polar(profile.beta_r[m].sqrt(), profile.theta_r[m]);
    let t = C64::from_polar(profile.beta_t[m].sqrt(), profile.theta_t[m]);
    (r * s_m, t * s_m)
}

/// Row channel `h_k^H + g_k^H Theta G` seen by user `k`, returned as the
/// length-`N` vector of its entries.
pub fn effective_channel(channels: &ChannelSet, profile: &RisProfile, k: usize) -> DVector<C64> {
    let side = channels.side[k];
    let phi = profile.coefficients(side);
    let g = &channels.ris_user[k];
    let weights: Vec<C64> = phi
        .iter()
        .zip(g.iter())
        .map(|(p, gm)| gm.conj() * p)
        .collect();
    let weights = DVector::from_vec(weights);
    let cascade = channels.bs_ris.tr_mul(&weights);
    channels.direct[k].map(|h| h.conj()) + cascade
}

fn sinr_with(
    k: usize,
    w: &DMatrix<C64>,
    channels: &ChannelSet,
    profile: &RisProfile,
    cfg: &SystemConfig,
) -> Result<f64> {
    let h = effective_channel(channels, profile, k);
    let gains: Vec<f64> = (0..w.ncols())
        .map(|j| h.iter().zip(w.column(j).iter()).map(|(a, b)| a * b).sum::<C64>().norm_sqr())
        .collect();
    let side = channels.side[k];
    let ris_noise = cfg.ris_noise()
        * channels.ris_user[k]
            .iter()
            .zip(profile.beta(side))
            .map(|(g, b)| g.norm_sqr() * b)
            .sum::<f64>();
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, g)| g)
        .sum();
    let denom = interference + ris_noise + cfg.noise_rx;
    if denom <= 0.0 {
        return Err(Error::Degenerate(
            "zero receiver noise with no interference or RIS noise".into(),
        ));
    }
    Ok(gains[k] / denom)
}

/// SINR of user `k` under precoder `w` (the shared precoder; time switching
/// is handled by [`sum_rate`]).
pub fn sinr(
    k: usize,
    w: &Precoder,
    channels: &ChannelSet,
    profile: &RisProfile,
    cfg: &SystemConfig,
) -> Result<f64> {
    sinr_with(k, &w.w, channels, profile, cfg)
}

/// Per-user rates in bits/s/Hz. Time-switching profiles return the
/// fraction-weighted rate of each user.
pub fn user_rates(
    w: &Precoder,
    channels: &ChannelSet,
    profile: &RisProfile,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    let k_users = channels.n_users();
    if let Some(ts) = &profile.ts {
        let r = slot_rates(w.slot(0), channels, &ts.reflect_slot, cfg)?;
        let t = slot_rates(w.slot(1), channels, &ts.refract_slot, cfg)?;
        return Ok((0..k_users)
            .map(|k| ts.lambda_r * r[k] + ts.lambda_t * t[k])
            .collect());
    }
    slot_rates(&w.w, channels, profile, cfg)
}

fn slot_rates(
    w: &DMatrix<C64>,
    channels: &ChannelSet,
    profile: &RisProfile,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    (0..channels.n_users())
        .map(|k| sinr_with(k, w, channels, profile, cfg).map(|s| (1.0 + s).log2()))
        .collect()
}

/// Sum of `log2(1 + SINR_k)`.
pub fn sum_rate(
    w: &Precoder,
    channels: &ChannelSet,
    profile: &RisProfile,
    cfg: &SystemConfig,
) -> Result<f64> {
    Ok(user_rates(w, channels, profile, cfg)?.iter().sum())
}

/// Power radiated by the surface: amplified signal plus amplified thermal
/// noise. For time switching the larger of the two slots is reported.
pub fn ris_output_power(
    w: &Precoder,
    channels: &ChannelSet,
    profile: &RisProfile,
    cfg: &SystemConfig,
) -> Result<f64> {
    if !cfg.architecture.is_amplifying() {
        return Err(Error::NotApplicable(format!(
            "{} has no amplifier power budget",
            cfg.architecture
        )));
    }
    if let Some(ts) = &profile.ts {
        let a = output_power_with(w.slot(0), channels, &ts.reflect_slot, cfg);
        let b = output_power_with(w.slot(1), channels, &ts.refract_slot, cfg);
        return Ok(a.max(b));
    }
    Ok(output_power_with(&w.w, channels, profile, cfg))
}

pub(crate) fn output_power_with(
    w: &DMatrix<C64>,
    channels: &ChannelSet,
    profile: &RisProfile,
    cfg: &SystemConfig,
) -> f64 {
    incident_power(w, channels, cfg)
        .iter()
        .enumerate()
        .map(|(m, q)| (profile.beta_r[m] + profile.beta_t[m]) * q)
        .sum()
}

/// Per-element incident power including thermal noise:
/// `q_m = sum_k |[G w_k]_m|^2 + noise_ris`. Output power is `sum_m beta_m q_m`.
pub(crate) fn incident_power(w: &DMatrix<C64>, channels: &ChannelSet, cfg: &SystemConfig) -> Vec<f64> {
    let gw = &channels.bs_ris * w;
    let noise = cfg.ris_noise();
    (0..gw.nrows())
        .map(|m| gw.row(m).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise)
        .collect()
}
