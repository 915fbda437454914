//! Seeded channel generation from geometry.
//!
//! Every link is Rician: a deterministic line-of-sight term built from array
//! steering vectors plus i.i.d. unit-variance circular Gaussian scattering,
//! scaled by a log-distance path loss. The BS carries a uniform linear array
//! along the y axis; the surface is a uniform planar array whose front
//! normal lies in the horizontal plane at azimuth `ris_rotation`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{db_to_linear, ChannelSet, Side, SystemConfig, C64};

pub type Point = [f64; 3];

/// A value per link class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkParams {
    pub direct: f64,
    pub bs_ris: f64,
    pub ris_user: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryScene {
    pub bs_pos: Point,
    pub ris_pos: Point,
    pub user_pos: Vec<Point>,
    /// Azimuth of the surface's front normal, radians in `[0, 2*pi)`.
    pub ris_rotation: f64,
    pub pathloss_exponents: LinkParams,
    /// Path loss at 1 m, dB (negative).
    pub pathloss_ref_db: f64,
    /// Linear Rician K-factors; `f64::INFINITY` gives pure line of sight.
    pub rician_k: LinkParams,
}

impl Default for GeometryScene {
    /// BS at the origin, surface at (50, 10, 2) facing the BS, one user about
    /// 3 m in front of the surface and one about 3 m behind it.
    fn default() -> Self {
        let ris_pos = [50.0, 10.0, 2.0];
        GeometryScene {
            bs_pos: [0.0, 0.0, 0.0],
            ris_pos,
            user_pos: vec![[47.0, 11.0, 1.0], [53.0, 9.0, 1.0]],
            ris_rotation: PI,
            pathloss_exponents: LinkParams {
                direct: 3.5,
                bs_ris: 2.2,
                ris_user: 2.2,
            },
            pathloss_ref_db: -30.0,
            rician_k: LinkParams {
                direct: 0.0,
                bs_ris: db_to_linear(3.0),
                ris_user: db_to_linear(3.0),
            },
        }
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

impl GeometryScene {
    /// Front normal of the surface.
    pub fn normal(&self) -> Point {
        [self.ris_rotation.cos(), self.ris_rotation.sin(), 0.0]
    }

    /// Horizontal in-plane axis of the surface.
    fn tangent(&self) -> Point {
        [-self.ris_rotation.sin(), self.ris_rotation.cos(), 0.0]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..TAU).contains(&self.ris_rotation) {
            return Err(Error::Config {
                key: "scene.ris_rotation".into(),
                msg: "must lie in [0, 2*pi)".into(),
            });
        }
        if norm(sub(self.bs_pos, self.ris_pos)) <= 0.0 {
            return Err(Error::Geometry("BS and RIS coincide".into()));
        }
        for (k, &u) in self.user_pos.iter().enumerate() {
            if norm(sub(u, self.ris_pos)) <= 0.0 || norm(sub(u, self.bs_pos)) <= 0.0 {
                return Err(Error::Geometry(format!("user {k} coincides with a node")));
            }
        }
        Ok(())
    }
}

/// Path loss in dB at distance `d` metres.
pub fn pathloss_db(pathloss_ref_db: f64, exponent: f64, d: f64) -> f64 {
    pathloss_ref_db - 10.0 * exponent * d.log10()
}

/// Reflect iff the user lies on the front side of the surface.
pub fn classify_side(scene: &GeometryScene, user_pos: Point) -> Result<Side> {
    let v = sub(user_pos, scene.ris_pos);
    let s = dot(v, scene.normal());
    // The normal is built from trig functions; treat rounding-level offsets
    // as lying on the plane.
    if s.abs() <= 1e-12 * norm(v) {
        Err(Error::Geometry(format!(
            "user at {user_pos:?} lies on the RIS plane"
        )))
    } else if s > 0.0 {
        Ok(Side::Reflect)
    } else {
        Ok(Side::Refract)
    }
}

fn unit(v: Point) -> Point {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Half-wavelength ULA along y.
fn bs_steering(n: usize, dir: Point) -> Vec<C64> {
    let s = dir[1];
    (0..n)
        .map(|i| C64::from_polar(1.0, PI * i as f64 * s))
        .collect()
}

/// Half-wavelength UPA in the surface plane, filled row by row.
fn ris_steering(scene: &GeometryScene, m: usize, dir: Point) -> Vec<C64> {
    let cols = (m as f64).sqrt().ceil() as usize;
    let (sh, sv) = (dot(dir, scene.tangent()), dir[2]);
    (0..m)
        .map(|i| {
            let (ix, iz) = ((i % cols) as f64, (i / cols) as f64);
            C64::from_polar(1.0, PI * (ix * sh + iz * sv))
        })
        .collect()
}

fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    }
}

fn cn(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw one channel realization. Same `(cfg, scene, seed)` gives a
/// bit-identical result.
pub fn generate_channels(cfg: &SystemConfig, scene: &GeometryScene, seed: u64) -> Result<ChannelSet> {
    scene.validate()?;
    if scene.user_pos.len() != cfg.n_users {
        return Err(Error::Shape(format!(
            "scene has {} users, config expects {}",
            scene.user_pos.len(),
            cfg.n_users
        )));
    }
    let side = scene
        .user_pos
        .iter()
        .map(|&u| classify_side(scene, u))
        .collect::<Result<Vec<_>>>()?;

    let (n, m) = (cfg.n_antennas, cfg.n_elements);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pl = |exp: f64, d: f64| db_to_linear(pathloss_db(scene.pathloss_ref_db, exp, d)).sqrt();

    let to_ris = sub(scene.ris_pos, scene.bs_pos);
    let amp = pl(scene.pathloss_exponents.bs_ris, norm(to_ris));
    let (los_w, nlos_w) = rician_weights(scene.rician_k.bs_ris);
    let a_bs = bs_steering(n, unit(to_ris));
    let b_in = ris_steering(scene, m, unit(sub(scene.bs_pos, scene.ris_pos)));
    let mut bs_ris = DMatrix::<C64>::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let los = b_in[i] * a_bs[j].conj();
            bs_ris[(i, j)] = (los * los_w + cn(&mut rng) * nlos_w) * amp;
        }
    }

    let (los_w, nlos_w) = rician_weights(scene.rician_k.ris_user);
    let ris_user = scene
        .user_pos
        .iter()
        .map(|&u| {
            let v = sub(u, scene.ris_pos);
            let amp = pl(scene.pathloss_exponents.ris_user, norm(v));
            let b = ris_steering(scene, m, unit(v));
            DVector::from_iterator(
                m,
                b.iter().map(|&s| (s * los_w + cn(&mut rng) * nlos_w) * amp),
            )
        })
        .collect();

    let (los_w, nlos_w) = rician_weights(scene.rician_k.direct);
    let direct = scene
        .user_pos
        .iter()
        .map(|&u| {
            let v = sub(u, scene.bs_pos);
            let amp = pl(scene.pathloss_exponents.direct, norm(v));
            let a = bs_steering(n, unit(v));
            DVector::from_iterator(
                n,
                a.iter().map(|&s| (s * los_w + cn(&mut rng) * nlos_w) * amp),
            )
        })
        .collect();

    Ok(ChannelSet {
        bs_ris,
        ris_user,
        direct,
        side,
    })
}

/// A surface placement: position and rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub position: Point,
    pub rotation: f64,
}

#[derive(Clone, Debug)]
pub struct PlacementResult {
    pub best_index: usize,
    pub best: Placement,
    pub best_score: f64,
    /// One entry per candidate, in candidate order.
    pub scores: Vec<Result<f64>>,
}

/// Score every candidate placement and return the argmax. Ties go to the
/// lowest index; failed candidates are excluded.
pub fn placement_search<F>(
    base_scene: &GeometryScene,
    candidates: &[Placement],
    evaluator: F,
) -> Result<PlacementResult>
where
    F: Fn(&GeometryScene) -> Result<f64> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::Empty("no placement candidates".into()));
    }
    let scores: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|c| {
            let mut scene = base_scene.clone();
            scene.ris_pos = c.position;
            scene.ris_rotation = c.rotation;
            scene.validate()?;
            evaluator(&scene)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Ok(v) = s {
            if v.is_finite() && best.is_none_or(|(_, b)| *v > b) {
                best = Some((i, *v));
            }
        }
    }
    let (best_index, best_score) =
        best.ok_or_else(|| Error::AllFailed(format!("{} placement candidates", candidates.len())))?;
    Ok(PlacementResult {
        best_index,
        best: candidates[best_index],
        best_score,
        scores,
    })
}
