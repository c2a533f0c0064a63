use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twrn_crb::fim::{crb, exact_fim, mcrb, mfim, GammaQuadrature};
use twrn_crb::likelihood::{log_likelihood, LikelihoodMethod};
use twrn_crb::quadrature::hermite_rule;
use twrn_crb::signal_model::{draw_symbols, make_pilots, simulate_observation, snr_to_sigma2};
use twrn_crb::{CoeffTable, Constellation, ScenarioParams, Theta};

fn cplx(mag: f64, phase: f64) -> Complex64 {
    Complex64::from_polar(mag, phase)
}

fn theta_strategy() -> impl Strategy<Value = Theta> {
    (0.1..2.0f64, -3.2..3.2f64, 0.1..2.0f64, -3.2..3.2f64, 0.05..3.0f64)
        .prop_map(|(am, ap, bm, bp, tau)| Theta::new(cplx(am, ap), cplx(bm, bp), tau).unwrap())
}

#[derive(Debug, Clone)]
struct Case {
    theta: Theta,
    p: u32,
    snr: f64,
    l: usize,
    n: usize,
    amp: f64,
    seed: u64,
}

impl Case {
    fn scenario(&self) -> ScenarioParams {
        self.scenario_with(self.n, Complex64::new(1.0, 0.0))
    }

    /// Same draws, `n` data symbols and `t2` multiplied by `rot`.
    fn scenario_with(&self, n: usize, rot: Complex64) -> ScenarioParams {
        let (t1, t2) = make_pilots(self.l, 1.0, 1.0).unwrap();
        let t2 = t2.into_iter().map(|t| t * rot).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let s1 = draw_symbols(&mut rng, &Constellation::new(1, 1.0).unwrap(), 96);
        let con = Constellation::new(self.p, 1.0).unwrap();
        ScenarioParams::new(self.amp, snr_to_sigma2(self.snr, 1.0), 1.0, con, t1, t2, s1[..n].to_vec()).unwrap()
    }
}

fn case_strategy() -> impl Strategy<Value = Case> {
    (theta_strategy(), 1..=4u32, -5.0..30.0f64, 1..=6usize, 1..=48usize, 0.5..2.0f64, any::<u64>()).prop_map(
        |(theta, p, snr, half_l, n, amp, seed)| Case { theta, p, snr, l: 2 * half_l, n, amp, seed },
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn constellation_has_requested_power_and_symmetry(p in 1..=5u32, power in 0.01..10.0f64) {
        let c = Constellation::new(p, power).unwrap();
        let pts = c.points();
        prop_assert_eq!(pts.len(), 1usize << (2 * p));
        let mean: f64 = pts.iter().map(|s| s.norm_sqr()).sum::<f64>() / pts.len() as f64;
        prop_assert!(rel(mean, power) < 1e-12);
        let sum: Complex64 = pts.iter().sum();
        prop_assert!(sum.norm() < 1e-9 * power.sqrt() * pts.len() as f64);
        for s in pts {
            for t in [s.conj(), -s, Complex64::new(-s.im, s.re)] {
                prop_assert!(pts.iter().any(|q| (q - t).norm() < 1e-12 * power.sqrt().max(1.0)));
            }
        }
    }

    #[test]
    fn f_is_even_and_bounded_below(p in 1..=4u32, amp in 0.2..3.0f64, c in 0.01..5.0f64, b2 in 0.0..4.0f64, t in -1e4..1e4f64) {
        let ct = CoeffTable::new(&Constellation::new(p, 1.0).unwrap(), amp, c, b2);
        let (lp, lm) = (ct.log_f(t), ct.log_f(-t));
        prop_assert!(lp.is_finite());
        prop_assert!((lp - lm).abs() <= 1e-12 * lp.abs().max(1.0));
        let floor = ct.gamma.iter().map(|g| (-g * b2).exp()).sum::<f64>().ln();
        prop_assert!(lp >= floor - 1e-12 * floor.abs().max(1.0));
    }

    #[test]
    fn hermite_rule_is_exact_for_low_degree(n in 2..=40usize, k in 0..20usize) {
        let rule = hermite_rule(n).unwrap();
        let deg = (2 * k).min(2 * n - 2);
        let got: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
        // ∫ x^{2j} e^{-x²} dx = Γ(j + 1/2)
        let j = deg / 2;
        let want = std::f64::consts::PI.sqrt() * (1..=j).map(|i| (2 * i - 1) as f64 / 2.0).product::<f64>();
        prop_assert!(rel(got, want) < 1e-11, "n={} deg={} got {} want {}", n, deg, got, want);
        let odd: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(deg as i32 + 1)).sum();
        prop_assert!(odd.abs() < 1e-11 * want.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn factorized_likelihood_matches_direct(case in case_strategy()) {
        let sc = case.scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(case.seed ^ 0x5a5a);
        let s2 = draw_symbols(&mut rng, &sc.constellation, sc.data_len());
        let obs = simulate_observation(&mut rng, &case.theta, &sc, &s2).unwrap();
        let d = log_likelihood(&obs, &case.theta, &sc, LikelihoodMethod::Direct).unwrap();
        let f = log_likelihood(&obs, &case.theta, &sc, LikelihoodMethod::Factorized).unwrap();
        prop_assert!((d - f).abs() <= 1e-9 * d.abs().max(1.0), "{} vs {}", d, f);
    }

    #[test]
    fn exact_fim_is_symmetric_psd_and_dominated_by_mfim(case in case_strategy()) {
        let sc = case.scenario();
        let quad = GammaQuadrature::default();
        let e = exact_fim(&case.theta, &sc, &quad).unwrap();
        prop_assert!(e.is_psd());
        prop_assert_eq!(e.m, e.m.transpose());
        let m = mfim(&case.theta, &sc).unwrap();
        let diff = twrn_crb::fim::FisherMatrix { m: m.m - e.m, ..m.clone() };
        let (lo, _) = diff.eigen_range();
        prop_assert!(lo >= -1e-8 * m.m.abs().max(), "MFIM - FIM has eigenvalue {}", lo);

        let (ca, cb) = crb(&e).unwrap();
        let (ma, mb) = mcrb(&case.theta, &sc).unwrap();
        prop_assert!(ca > 0.0 && cb > 0.0);
        prop_assert!(ma <= ca * (1.0 + 1e-9) && mb <= cb * (1.0 + 1e-9), "mcrb ({}, {}) crb ({}, {})", ma, mb, ca, cb);
        let (ia, ib) = crb(&m).unwrap();
        prop_assert!(rel(ia, ma) < 1e-10 && rel(ib, mb) < 1e-10);
    }

    #[test]
    fn more_data_never_loosens_the_bound(case in case_strategy(), extra in 1..=48usize) {
        let quad = GammaQuadrature::default();
        let short = case.scenario();
        let long = case.scenario_with(case.n + extra, Complex64::new(1.0, 0.0));
        let (a0, b0) = crb(&exact_fim(&case.theta, &short, &quad).unwrap()).unwrap();
        let (a1, b1) = crb(&exact_fim(&case.theta, &long, &quad).unwrap()).unwrap();
        prop_assert!(a1 <= a0 * (1.0 + 1e-9) && b1 <= b0 * (1.0 + 1e-9));
        let (m0a, m0b) = mcrb(&case.theta, &short).unwrap();
        let (m1a, m1b) = mcrb(&case.theta, &long).unwrap();
        prop_assert!(m1a <= m0a * (1.0 + 1e-12) && m1b <= m0b * (1.0 + 1e-12));
    }

    #[test]
    fn rotating_b_with_its_pilots_preserves_the_bounds(case in case_strategy(), phi in -3.2..3.2f64) {
        let quad = GammaQuadrature::default();
        let rot = cplx(1.0, phi);
        let sc = case.scenario();
        // T2's pilots and gain turn together, so the product seen at T1 is unchanged
        let sc_rot = case.scenario_with(case.n, rot.conj());
        let th_rot = Theta { b: case.theta.b * rot, ..case.theta };
        let (a0, b0) = crb(&exact_fim(&case.theta, &sc, &quad).unwrap()).unwrap();
        let (a1, b1) = crb(&exact_fim(&th_rot, &sc_rot, &quad).unwrap()).unwrap();
        prop_assert!(rel(a0, a1) < 1e-8 && rel(b0, b1) < 1e-8, "({}, {}) vs ({}, {})", a0, b0, a1, b1);
    }
}
