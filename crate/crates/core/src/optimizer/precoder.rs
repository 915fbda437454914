//! Weighted-MMSE precoder block.
//!
//! The transmit update solves
//! `min sum_k w_k^H A w_k - 2 Re(b_k^H w_k)` subject to the BS budget and, for
//! amplifying surfaces, the amplifier budget `sum_k w_k^H B w_k <= Q`. The two
//! multipliers are found by nested bisection on an eigendecomposition of
//! `A + nu B`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{ChannelSet, Precoder, RisProfile, Side, SystemConfig, C64};

use super::objective::Links;
use super::SolverOptions;

/// Effective channels and budgets for one draw with the profile frozen.
#[derive(Clone, Debug)]
pub(crate) struct PrecoderProblem {
    pub h: Vec<DVector<C64>>,
    pub noise: Vec<f64>,
    pub p_bs: f64,
    /// `(B, Q)`: `B = G^H diag(beta_r + beta_t) G`, `Q = P_RIS - noise_ris * sum(beta)`.
    pub ris: Option<(DMatrix<C64>, f64)>,
}

impl PrecoderProblem {
    pub fn new(links: &Links, profile: &RisProfile, cfg: &SystemConfig) -> Self {
        let phi_r = profile.coefficients(Side::Reflect);
        let phi_t = profile.coefficients(Side::Refract);
        let noise_ris = cfg.ris_noise();
        let mut h = Vec::with_capacity(links.k);
        let mut noise = Vec::with_capacity(links.k);
        for k in 0..links.k {
            let phi = match links.side[k] {
                Side::Reflect => &phi_r,
                Side::Refract => &phi_t,
            };
            h.push(links.effective(k, phi));
            noise.push(links.noise(k, phi, cfg.noise_rx, noise_ris));
        }
        let ris = cfg.amplifies().then(|| {
            let beta: Vec<f64> = profile
                .beta_r
                .iter()
                .zip(&profile.beta_t)
                .map(|(r, t)| r + t)
                .collect();
            let mut dg = links.bs_ris.clone();
            for i in 0..links.m {
                let s = beta[i];
                for j in 0..links.n {
                    dg[(i, j)] *= s;
                }
            }
            let b = links.bs_ris.adjoint() * dg;
            let q = cfg.p_ris - noise_ris * beta.iter().sum::<f64>();
            (b, q)
        });
        PrecoderProblem {
            h,
            noise,
            p_bs: cfg.p_bs,
            ris,
        }
    }

    fn k(&self) -> usize {
        self.h.len()
    }

    fn n(&self) -> usize {
        self.h[0].len()
    }

    fn gain(&self, k: usize, w: &DMatrix<C64>, j: usize) -> C64 {
        self.h[k].iter().zip(w.column(j).iter()).map(|(a, b)| a * b).sum()
    }

    pub fn rate(&self, w: &DMatrix<C64>) -> f64 {
        (0..self.k())
            .map(|k| {
                let mut total = self.noise[k];
                let mut sig = 0.0;
                for j in 0..self.k() {
                    let g = self.gain(k, w, j).norm_sqr();
                    total += g;
                    if j == k {
                        sig = g;
                    }
                }
                (total / (total - sig)).log2()
            })
            .sum()
    }

    /// Uniformly shrink `w` until both budgets hold.
    pub fn make_feasible(&self, w: &mut DMatrix<C64>) {
        let mut f: f64 = 1.0;
        let p = w.norm_squared();
        if p > self.p_bs {
            f = f.min(self.p_bs / p);
        }
        if let Some((b, q)) = &self.ris {
            let r = quad(b, w);
            if r > *q {
                f = f.min(if *q > 0.0 { q / r } else { 0.0 });
            }
        }
        if f < 1.0 {
            let mut s = f.sqrt();
            loop {
                let cand = &*w * C64::new(s, 0.0);
                if self.within(&cand) || s == 0.0 {
                    *w = cand;
                    break;
                }
                s *= 1.0 - 4.0 * f64::EPSILON;
            }
        }
    }

    pub fn within(&self, w: &DMatrix<C64>) -> bool {
        w.norm_squared() <= self.p_bs
            && self.ris.as_ref().is_none_or(|(b, q)| quad(b, w) <= *q)
    }

    /// Matched filter on each effective channel, equal power split.
    pub fn mrt(&self) -> DMatrix<C64> {
        let (n, k) = (self.n(), self.k());
        let mut w = DMatrix::zeros(n, k);
        for j in 0..k {
            let nrm = self.h[j].norm();
            if nrm > 0.0 {
                let s = (self.p_bs / k as f64).sqrt() / nrm;
                for i in 0..n {
                    w[(i, j)] = self.h[j][i].conj() * s;
                }
            }
        }
        self.make_feasible(&mut w);
        w
    }

    /// One transmit update for weights `omega`, receivers `u`.
    fn update(&self, omega: &[f64], u: &[C64], nu_hint: &mut f64) -> DMatrix<C64> {
        let (n, k) = (self.n(), self.k());
        let mut a = DMatrix::<C64>::zeros(n, n);
        let mut rhs = DMatrix::<C64>::zeros(n, k);
        for j in 0..k {
            let c = omega[j] * u[j].norm_sqr();
            let hc = self.h[j].map(|x| x.conj());
            for r in 0..n {
                for s in 0..n {
                    a[(r, s)] += hc[r] * self.h[j][s] * c;
                }
                rhs[(r, j)] = hc[r] * (u[j] * omega[j]);
            }
        }
        let solve = |nu: f64| -> DMatrix<C64> {
            let m = match &self.ris {
                Some((b, _)) if nu > 0.0 => &a + b * C64::new(nu, 0.0),
                _ => a.clone(),
            };
            solve_bs_budget(m, &rhs, self.p_bs)
        };
        let w0 = solve(0.0);
        let Some((b, q)) = &self.ris else {
            return w0;
        };
        if quad(b, &w0) <= *q {
            return w0;
        }
        if *q <= 0.0 {
            return DMatrix::zeros(n, k);
        }
        // Bracket nu, then bisect on a log scale keeping the feasible end.
        let scale = (a.trace().re / b.trace().re.max(f64::MIN_POSITIVE)).max(f64::MIN_POSITIVE);
        let mut hi = if *nu_hint > 0.0 { *nu_hint } else { scale };
        let mut w_hi = solve(hi);
        let mut lo = 0.0;
        let mut guard = 0;
        while quad(b, &w_hi) > *q {
            lo = hi;
            hi *= 4.0;
            w_hi = solve(hi);
            guard += 1;
            if guard > 200 {
                return DMatrix::zeros(n, k);
            }
        }
        if lo == 0.0 {
            // hint was feasible; look for a smaller feasible nu
            let mut probe = hi / 4.0;
            for _ in 0..60 {
                let w = solve(probe);
                if quad(b, &w) > *q {
                    lo = probe;
                    break;
                }
                hi = probe;
                w_hi = w;
                probe /= 4.0;
            }
        }
        for _ in 0..40 {
            if lo <= 0.0 || hi / lo < 1.0 + 1e-4 {
                break;
            }
            let mid = (lo * hi).sqrt();
            let w = solve(mid);
            let r = quad(b, &w);
            if r > *q {
                lo = mid;
            } else {
                hi = mid;
                w_hi = w;
                if r >= q * (1.0 - 1e-6) {
                    break;
                }
            }
        }
        *nu_hint = hi;
        w_hi
    }
}

fn quad(b: &DMatrix<C64>, w: &DMatrix<C64>) -> f64 {
    let bw = b * w;
    w.iter().zip(bw.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `W = (M + mu I)^{-1} rhs` with the smallest `mu >= 0` meeting
/// `||W||_F^2 <= p`.
fn solve_bs_budget(m: DMatrix<C64>, rhs: &DMatrix<C64>, p: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(m);
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let lam: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l > 1e-13 * lam_max { l } else { 0.0 })
        .collect();
    let z = eig.eigenvectors.adjoint() * rhs;
    let z2: Vec<f64> = (0..z.nrows())
        .map(|i| z.row(i).iter().map(|c| c.norm_sqr()).sum())
        .collect();
    let power = |mu: f64| -> f64 {
        lam.iter()
            .zip(&z2)
            .map(|(&l, &s)| {
                if s == 0.0 {
                    0.0
                } else {
                    s / ((l + mu) * (l + mu))
                }
            })
            .sum()
    };
    let total: f64 = z2.iter().sum();
    let mu = if total == 0.0 || power(0.0) <= p {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, (total / p).sqrt());
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if power(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        hi
    };
    let mut scaled = z;
    for i in 0..scaled.nrows() {
        let d = lam[i] + mu;
        let f = if d > 0.0 { 1.0 / d } else { 0.0 };
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= f;
        }
    }
    &eig.eigenvectors * scaled
}

/// Weighted-MMSE iterations from `w_init`. The returned precoder is within
/// both budgets and never has a lower sum-rate than the (feasible-scaled)
/// initial point.
pub(crate) fn wmmse(
    prob: &PrecoderProblem,
    w_init: &DMatrix<C64>,
    iters: usize,
    tol: f64,
) -> Result<DMatrix<C64>> {
    if prob.h.iter().all(|h| h.iter().all(|x| x.norm_sqr() == 0.0)) {
        return Err(Error::Degenerate("all effective channels are zero".into()));
    }
    let k = prob.k();
    let mut w = w_init.clone();
    if w.iter().all(|x| x.norm_sqr() == 0.0) {
        w = prob.mrt();
    } else {
        prob.make_feasible(&mut w);
    }
    let mut best = w.clone();
    let mut best_rate = prob.rate(&w);
    let mut nu_hint = 0.0;
    for _ in 0..iters {
        let mut omega = vec![0.0; k];
        let mut u = vec![C64::new(0.0, 0.0); k];
        for i in 0..k {
            let mut total = prob.noise[i];
            let mut sig = C64::new(0.0, 0.0);
            for j in 0..k {
                let g = prob.gain(i, &w, j);
                total += g.norm_sqr();
                if j == i {
                    sig = g;
                }
            }
            let interf = total - sig.norm_sqr();
            u[i] = sig / total;
            omega[i] = if interf > 0.0 { (total / interf).min(1e12) } else { 1e12 };
        }
        let mut next = prob.update(&omega, &u, &mut nu_hint);
        prob.make_feasible(&mut next);
        let r = prob.rate(&next);
        let improved = r > best_rate;
        let rel = (r - best_rate) / best_rate.abs().max(1e-12);
        if improved {
            best_rate = r;
            best = next.clone();
        }
        w = next;
        if rel < tol {
            break;
        }
    }
    Ok(best)
}

/// Precoder block for one draw: weighted MMSE on the effective channels,
/// `inner_precoder_iters` sweeps or until the relative gain drops below `tol`.
pub fn optimize_precoder(
    channels: &ChannelSet,
    profile: &RisProfile,
    cfg: &SystemConfig,
    w_init: &Precoder,
    options: &SolverOptions,
) -> Result<Precoder> {
    let links = Links::new(channels);
    let prob = PrecoderProblem::new(&links, profile, cfg);
    let w = wmmse(&prob, &w_init.w, options.inner_precoder_iters, options.tol)?;
    Ok(Precoder::new(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{generate_channels, GeometryScene};
    use crate::model::{sum_rate, Architecture};

    fn setup(k_users: usize) -> (SystemConfig, ChannelSet, RisProfile) {
        let mut scene = GeometryScene::default();
        scene.user_pos.truncate(k_users);
        let cfg = SystemConfig {
            n_antennas: 4,
            n_users: k_users,
            n_elements: 8,
            ..SystemConfig::default()
        }
        .for_architecture(Architecture::StarRis);
        let ch = generate_channels(&cfg, &scene, 11).unwrap();
        let mut p = RisProfile::zeros(8);
        for i in 0..8 {
            p.beta_r[i] = 0.5;
            p.beta_t[i] = 0.5;
            p.theta_r[i] = i as f64;
            p.theta_t[i] = 2.0 * i as f64;
        }
        (cfg, ch, p)
    }

    #[test]
    fn single_user_matches_matched_filter_closed_form() {
        let (cfg, ch, p) = setup(1);
        let opts = SolverOptions::default();
        let w = optimize_precoder(&ch, &p, &cfg, &Precoder::zeros(4, 1), &opts).unwrap();
        let h = crate::model::effective_channel(&ch, &p, 0);
        let expect = (1.0 + cfg.p_bs * h.norm_squared() / cfg.noise_rx).log2();
        let got = sum_rate(&w, &ch, &p, &cfg).unwrap();
        assert!((got - expect).abs() < 1e-9 * expect, "{got} vs {expect}");
        assert!((w.power() - cfg.p_bs).abs() < 1e-9 * cfg.p_bs);
        // direction is conj(h)
        let wc = w.w.column(0);
        let corr: C64 = h.iter().zip(wc.iter()).map(|(a, b)| a * b).sum();
        assert!((corr.norm() - h.norm() * wc.norm()).abs() < 1e-9 * corr.norm());

        // already optimal init is a fixed point
        let again = optimize_precoder(&ch, &p, &cfg, &w, &opts).unwrap();
        let r2 = sum_rate(&again, &ch, &p, &cfg).unwrap();
        assert!((r2 - got).abs() < 1e-9);
    }

    #[test]
    fn zero_channels_rejected() {
        let (cfg, mut ch, p) = setup(2);
        ch.bs_ris.fill(C64::new(0.0, 0.0));
        for h in &mut ch.direct {
            h.fill(C64::new(0.0, 0.0));
        }
        let r = optimize_precoder(&ch, &p, &cfg, &Precoder::zeros(4, 2), &SolverOptions::default());
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn never_worse_than_init_and_within_budget() {
        let (cfg, ch, p) = setup(2);
        let opts = SolverOptions::default();
        let links = Links::new(&ch);
        let prob = PrecoderProblem::new(&links, &p, &cfg);
        let init = prob.mrt();
        let r0 = prob.rate(&init);
        let w = optimize_precoder(&ch, &p, &cfg, &Precoder::new(init), &opts).unwrap();
        let r1 = sum_rate(&w, &ch, &p, &cfg).unwrap();
        assert!(r1 >= r0 - 1e-9);
        assert!(w.power() <= cfg.p_bs);
    }

    #[test]
    fn amplifier_budget_respected() {
        let (base, ch, mut p) = setup(2);
        let mut cfg = base.for_architecture(Architecture::MfRisIdeal);
        cfg.beta_max = 1000.0;
        let cfg = cfg.with_split(0.9);
        for b in p.beta_r.iter_mut().chain(p.beta_t.iter_mut()) {
            *b = 400.0;
        }
        let links = Links::new(&ch);
        let prob = PrecoderProblem::new(&links, &p, &cfg);
        let (bmat, q) = prob.ris.clone().unwrap();
        assert!(q > 0.0);
        let w = wmmse(&prob, &DMatrix::zeros(4, 2), 30, 1e-6).unwrap();
        assert!(quad(&bmat, &w) <= q);
        assert!(w.norm_squared() <= cfg.p_bs);
        let out = crate::model::ris_output_power(&Precoder::new(w), &ch, &p, &cfg).unwrap();
        assert!(out <= cfg.p_ris * (1.0 + 1e-12));
    }
}
