mod common;

use common::*;
use mfris_core::*;
use mfris_core::Strategy;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_sets() -> Vec<FeasibleSet> {
    let mut out = Vec::new();
    for arch in Architecture::ALL {
        for strategy in [Strategy::Es, Strategy::Ms] {
            for bits in [0, 1, 2, 3] {
                for levels in [None, Some(vec![0.0, 0.5, 2.0, 4.0])] {
                    let mut c = cfg(2, 2, 6, arch);
                    c.beta_max = if arch.is_amplifying() { 4.0 } else { 1.0 };
                    c.strategy = strategy;
                    c.phase_bits = bits;
                    let mut set = FeasibleSet::from_config(&c);
                    set.global_power_cap = None;
                    if let Some(l) = &levels {
                        set = set.with_amp_levels(l.clone());
                    }
                    out.push(set);
                }
            }
        }
    }
    out
}

#[test]
fn projection_idempotent_and_feasible_on_random_profiles() {
    let sets = all_sets();
    let c = cfg(2, 2, 6, Architecture::MfRisIdeal);
    let ch = channels(&c, 0);
    let w = Precoder::zeros(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..10_000 {
        let set = &sets[trial % sets.len()];
        let mut p = wild_profile(6, 3.0 * set.beta_max, &mut rng);
        if set.strategy == Strategy::Ms {
            p.ms_group = Some((0..6).map(|_| rng.random::<bool>()).collect());
        }
        let once = project_profile(&p, set);
        let twice = project_profile(&once, set);
        assert_eq!(once, twice, "trial {trial}: not idempotent");
        let (ok, res) = feasible(&once, set, &w, &ch, &c);
        assert!(ok, "trial {trial}: infeasible {res:?}");
    }
}

#[test]
fn star_profiles_are_mf_ideal_profiles_and_passive_are_star() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ch = channels(&cfg(2, 2, 5, Architecture::MfRisIdeal), 0);
    let w = Precoder::zeros(2, 2);
    let star = cfg(2, 2, 5, Architecture::StarRis);
    let passive = cfg(2, 2, 5, Architecture::PassiveReflect);
    let mut mf = cfg(2, 2, 5, Architecture::MfRisIdeal);
    mf.beta_max = 1.0;
    let (s_star, s_pass, s_mf) = (
        FeasibleSet::from_config(&star),
        FeasibleSet::from_config(&passive),
        FeasibleSet::from_config(&mf),
    );
    for _ in 0..500 {
        let p = wild_profile(5, 2.0, &mut rng);
        let ps = project_profile(&p, &s_star);
        assert!(feasible(&ps, &s_mf, &w, &ch, &mf).0);
        let pp = project_profile(&p, &s_pass);
        assert!(feasible(&pp, &s_star, &w, &ch, &star).0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn element_output_energy_bounded(
        br in 0.0f64..20.0, bt in 0.0f64..20.0,
        tr in -10.0f64..10.0, tt in -10.0f64..10.0,
        re in -3.0f64..3.0, im in -3.0f64..3.0,
        beta_max in 1.0f64..8.0,
    ) {
        let mut c = cfg(1, 1, 1, Architecture::MfRisIdeal);
        c.beta_max = beta_max;
        let set = FeasibleSet::from_config(&c);
        let mut p = RisProfile::zeros(1);
        p.beta_r[0] = br;
        p.beta_t[0] = bt;
        p.theta_r[0] = tr;
        p.theta_t[0] = tt;
        let p = project_profile(&p, &set);
        let s = C64::new(re, im);
        let (yr, yt) = element_response(&p, 0, s);
        let out = yr.norm_sqr() + yt.norm_sqr();
        let expect = (p.beta_r[0] + p.beta_t[0]) * s.norm_sqr();
        prop_assert!((out - expect).abs() <= 1e-12 * (1.0 + expect));
        prop_assert!(out <= beta_max * s.norm_sqr() * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn common_precoder_phase_leaves_rates_unchanged(seed in 0u64..1000, alpha in 0.0f64..6.3) {
        let c = cfg(3, 2, 4, Architecture::MfRisIdeal);
        let ch = channels(&c, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = FeasibleSet::from_config(&c);
        let p = project_profile(&wild_profile(4, 10.0, &mut rng), &set);
        let w = random_precoder(3, 2, c.p_bs, &mut rng);
        let rotated = Precoder::new(&w.w * C64::from_polar(1.0, alpha));
        let a = user_rates(&w, &ch, &p, &c).unwrap();
        let b = user_rates(&rotated, &ch, &p, &c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn projection_idempotent_proptest(seed in any::<u64>(), bits in 0u32..4) {
        let mut c = cfg(1, 2, 5, Architecture::MfRisCoupled);
        c.phase_bits = bits;
        let set = FeasibleSet::from_config(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let once = project_profile(&wild_profile(5, 30.0, &mut rng), &set);
        prop_assert_eq!(project_profile(&once, &set), once);
    }
}
