//! Cached evaluation of the sum-rate as a function of the surface
//! coefficients with the precoder held fixed.
//!
//! With `w` fixed every received amplitude is affine in the coefficients:
//! `a_kj = d_k w_j + sum_m phi_m c_kjm`, so rates and gradients cost
//! `O(K^2 M)` per evaluation.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::model::{ChannelSet, Side, SystemConfig, C64};

/// Per-draw link data that does not depend on the precoder or profile.
#[derive(Clone, Debug)]
pub(crate) struct Links {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// `conj(h_k)` as a row, one per user.
    pub d: Vec<DVector<C64>>,
    /// `diag(conj(g_k)) G`, one `M x N` matrix per user.
    pub cascade: Vec<DMatrix<C64>>,
    /// `|g_km|^2`.
    pub g2: Vec<Vec<f64>>,
    pub side: Vec<Side>,
    pub bs_ris: DMatrix<C64>,
}

impl Links {
    pub fn new(ch: &ChannelSet) -> Self {
        let (m, n, k) = (ch.n_elements(), ch.n_antennas(), ch.n_users());
        let cascade = ch
            .ris_user
            .iter()
            .map(|g| {
                let mut c = ch.bs_ris.clone();
                for i in 0..m {
                    let s = g[i].conj();
                    for j in 0..n {
                        c[(i, j)] *= s;
                    }
                }
                c
            })
            .collect();
        Links {
            n,
            m,
            k,
            d: ch.direct.iter().map(|h| h.map(|x| x.conj())).collect(),
            cascade,
            g2: ch
                .ris_user
                .iter()
                .map(|g| g.iter().map(|x| x.norm_sqr()).collect())
                .collect(),
            side: ch.side.clone(),
            bs_ris: ch.bs_ris.clone(),
        }
    }

    /// Effective row channel of user `k` given that side's coefficients.
    pub fn effective(&self, k: usize, phi: &[C64]) -> DVector<C64> {
        let mut h = self.d[k].clone();
        let c = &self.cascade[k];
        for i in 0..self.m {
            let p = phi[i];
            if p.re == 0.0 && p.im == 0.0 {
                continue;
            }
            for j in 0..self.n {
                h[j] += p * c[(i, j)];
            }
        }
        h
    }

    /// Total noise at user `k`: receiver noise plus amplified RIS noise.
    pub fn noise(&self, k: usize, phi: &[C64], noise_rx: f64, noise_ris: f64) -> f64 {
        if noise_ris == 0.0 {
            return noise_rx;
        }
        noise_rx
            + noise_ris
                * self.g2[k]
                    .iter()
                    .zip(phi)
                    .map(|(g, p)| g * p.norm_sqr())
                    .sum::<f64>()
    }

    /// Per-element incident power `sum_k |[G w_k]_m|^2 + noise_ris`.
    pub fn incident(&self, w: &DMatrix<C64>, noise_ris: f64) -> Vec<f64> {
        let gw = &self.bs_ris * w;
        (0..self.m)
            .map(|i| gw.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise_ris)
            .collect()
    }
}

/// Sum-rate as a function of `(phi_r, phi_t)` for one draw and fixed `w`.
#[derive(Clone, Debug)]
pub(crate) struct FixedPrecoder {
    k: usize,
    m: usize,
    /// `d_k w_j` at `[k*K + j]`.
    base: Vec<C64>,
    /// `(C_k w_j)_m` at `[(k*K + j)*M + m]`.
    coef: Vec<C64>,
    g2: Vec<Vec<f64>>,
    side: Vec<Side>,
    noise_rx: f64,
    noise_ris: f64,
    /// Incident power per element, for the amplifier budget.
    pub q: Vec<f64>,
}

impl FixedPrecoder {
    pub fn new(links: &Links, w: &DMatrix<C64>, cfg: &SystemConfig) -> Self {
        let (k_n, m) = (links.k, links.m);
        let mut base = vec![C64::new(0.0, 0.0); k_n * k_n];
        let mut coef = vec![C64::new(0.0, 0.0); k_n * k_n * m];
        for k in 0..k_n {
            for j in 0..k_n {
                let wj = w.column(j);
                base[k * k_n + j] = links.d[k].iter().zip(wj.iter()).map(|(a, b)| a * b).sum();
                let cw = &links.cascade[k] * wj;
                coef[(k * k_n + j) * m..(k * k_n + j + 1) * m].copy_from_slice(cw.as_slice());
            }
        }
        let noise_ris = cfg.ris_noise();
        FixedPrecoder {
            k: k_n,
            m,
            base,
            coef,
            g2: links.g2.clone(),
            side: links.side.clone(),
            noise_rx: cfg.noise_rx,
            noise_ris,
            q: links.incident(w, noise_ris),
        }
    }

    pub fn users(&self) -> usize {
        self.k
    }

    fn phi<'a>(&self, k: usize, phi_r: &'a [C64], phi_t: &'a [C64]) -> &'a [C64] {
        match self.side[k] {
            Side::Reflect => phi_r,
            Side::Refract => phi_t,
        }
    }

    /// Received amplitudes `a_kj` and noise `n_k`.
    pub fn amplitudes(&self, phi_r: &[C64], phi_t: &[C64], a: &mut [C64], noise: &mut [f64]) {
        let (kn, m) = (self.k, self.m);
        for k in 0..kn {
            let phi = self.phi(k, phi_r, phi_t);
            for j in 0..kn {
                let c = &self.coef[(k * kn + j) * m..(k * kn + j + 1) * m];
                let mut acc = self.base[k * kn + j];
                for i in 0..m {
                    acc += phi[i] * c[i];
                }
                a[k * kn + j] = acc;
            }
            noise[k] = if self.noise_ris == 0.0 {
                self.noise_rx
            } else {
                self.noise_rx
                    + self.noise_ris
                        * self.g2[k]
                            .iter()
                            .zip(phi)
                            .map(|(g, p)| g * p.norm_sqr())
                            .sum::<f64>()
            };
        }
    }

    pub fn rate_from(&self, a: &[C64], noise: &[f64]) -> f64 {
        let kn = self.k;
        let mut r = 0.0;
        for k in 0..kn {
            let mut total = noise[k];
            for j in 0..kn {
                total += a[k * kn + j].norm_sqr();
            }
            let interf = total - a[k * kn + k].norm_sqr();
            r += (total / interf).log2();
        }
        r
    }

    pub fn rate(&self, phi_r: &[C64], phi_t: &[C64]) -> f64 {
        let mut a = vec![C64::new(0.0, 0.0); self.k * self.k];
        let mut noise = vec![0.0; self.k];
        self.amplitudes(phi_r, phi_t, &mut a, &mut noise);
        self.rate_from(&a, &noise)
    }

    /// Rate and the Wirtinger gradient `dR/d conj(phi)` accumulated into
    /// `grad_r`, `grad_t` (added, not overwritten).
    pub fn rate_grad(
        &self,
        phi_r: &[C64],
        phi_t: &[C64],
        grad_r: &mut [C64],
        grad_t: &mut [C64],
        weight: f64,
    ) -> f64 {
        let (kn, m) = (self.k, self.m);
        let mut a = vec![C64::new(0.0, 0.0); kn * kn];
        let mut noise = vec![0.0; kn];
        self.amplitudes(phi_r, phi_t, &mut a, &mut noise);
        let mut r = 0.0;
        for k in 0..kn {
            let mut total = noise[k];
            for j in 0..kn {
                total += a[k * kn + j].norm_sqr();
            }
            let interf = total - a[k * kn + k].norm_sqr();
            r += (total / interf).log2();

            let scale = weight / LN_2;
            let (inv_t, inv_i) = (1.0 / total, 1.0 / interf);
            let phi = self.phi(k, phi_r, phi_t);
            let grad = match self.side[k] {
                Side::Reflect => &mut *grad_r,
                Side::Refract => &mut *grad_t,
            };
            for j in 0..kn {
                let alpha = a[k * kn + j] * (if j == k { inv_t } else { inv_t - inv_i }) * scale;
                let c = &self.coef[(k * kn + j) * m..(k * kn + j + 1) * m];
                for i in 0..m {
                    grad[i] += alpha * c[i].conj();
                }
            }
            if self.noise_ris != 0.0 {
                let eta = self.noise_ris * (inv_t - inv_i) * scale;
                for i in 0..m {
                    grad[i] += phi[i] * (eta * self.g2[k][i]);
                }
            }
        }
        r
    }

    /// Rate after moving element `i` by `(dr, dt)` in the coefficients and
    /// `(dbr, dbt)` in the energies, from cached amplitudes and noise.
    #[allow(clippy::too_many_arguments)]
    pub fn rate_moved(
        &self,
        a: &[C64],
        noise: &[f64],
        i: usize,
        dr: C64,
        dt: C64,
        dbr: f64,
        dbt: f64,
    ) -> f64 {
        let (kn, m) = (self.k, self.m);
        let mut r = 0.0;
        for k in 0..kn {
            let (d, db) = match self.side[k] {
                Side::Reflect => (dr, dbr),
                Side::Refract => (dt, dbt),
            };
            let mut total = noise[k] + self.noise_ris * self.g2[k][i] * db;
            let mut own = 0.0;
            for j in 0..kn {
                let x = (a[k * kn + j] + d * self.coef[(k * kn + j) * m + i]).norm_sqr();
                total += x;
                if j == k {
                    own = x;
                }
            }
            r += (total / (total - own)).log2();
        }
        r
    }

    /// Change in `a_kj` when element `i` of `side` moves by `delta`.
    pub fn apply_delta(&self, side: Side, i: usize, delta: C64, a: &mut [C64]) {
        let (kn, m) = (self.k, self.m);
        for k in 0..kn {
            if self.side[k] != side {
                continue;
            }
            for j in 0..kn {
                a[k * kn + j] += delta * self.coef[(k * kn + j) * m + i];
            }
        }
    }

    pub fn noise_delta(&self, side: Side, i: usize, d_beta: f64, noise: &mut [f64]) {
        if self.noise_ris == 0.0 {
            return;
        }
        for k in 0..self.k {
            if self.side[k] == side {
                noise[k] += self.noise_ris * self.g2[k][i] * d_beta;
            }
        }
    }
}
