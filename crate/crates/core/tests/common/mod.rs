#![allow(dead_code)]

use std::f64::consts::TAU;

use mfris_core::*;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Default scene with `k` users alternating in front of and behind the surface.
pub fn scene(k: usize) -> GeometryScene {
    let mut s = GeometryScene::default();
    s.user_pos = (0..k)
        .map(|i| {
            let off = (i / 2) as f64 * 0.7;
            if i % 2 == 0 {
                [47.0 - off, 11.0 + off, 1.0]
            } else {
                [53.0 + off, 9.0 - off, 1.0]
            }
        })
        .collect();
    s
}

pub fn cfg(n: usize, k: usize, m: usize, arch: Architecture) -> SystemConfig {
    SystemConfig {
        n_antennas: n,
        n_users: k,
        n_elements: m,
        ..SystemConfig::default()
    }
    .for_architecture(arch)
}

pub fn channels(cfg: &SystemConfig, seed: u64) -> ChannelSet {
    generate_channels(cfg, &scene(cfg.n_users), seed).expect("channels")
}

pub fn cn(rng: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(rng.random::<f64>().sqrt(), rng.random::<f64>() * TAU)
}

/// Random precoder spending exactly `p` watts.
pub fn random_precoder(n: usize, k: usize, p: f64, rng: &mut ChaCha8Rng) -> Precoder {
    let w = DMatrix::from_fn(n, k, |_, _| cn(rng));
    let s = (p / w.norm_squared()).sqrt();
    Precoder::new(w * C64::new(s, 0.0))
}

/// Arbitrary (usually infeasible) profile.
pub fn wild_profile(m: usize, beta_scale: f64, rng: &mut ChaCha8Rng) -> RisProfile {
    let mut p = RisProfile::zeros(m);
    for i in 0..m {
        p.beta_r[i] = rng.random::<f64>() * beta_scale;
        p.beta_t[i] = rng.random::<f64>() * beta_scale;
        p.theta_r[i] = (rng.random::<f64>() - 0.5) * 8.0 * TAU;
        p.theta_t[i] = (rng.random::<f64>() - 0.5) * 8.0 * TAU;
    }
    p
}
