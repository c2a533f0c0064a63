//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any FAIL.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twrn_crb::fim::{crb, exact_fim, exact_fim_with, mcrb, mfim, EstimationMode, FisherMatrix, GammaQuadrature, GammaTerm};
use twrn_crb::oracle::{check_identities, mc_fim};
use twrn_crb::signal_model::{draw_symbols, snr_to_sigma2};
use twrn_crb::sweep::{
    canonical_scenario, canonical_theta, doubling_error, fim_failures, identity_points, likelihood_gap,
    moment_grid_error, run_sweep, ResultRow, SweepConfig,
};
use twrn_crb::{Constellation, ScenarioParams, Theta};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: &str, title: &str, started: Instant, limit: Option<Duration>, out: Outcome) -> bool {
    let elapsed = started.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = out.pass && in_time;
    let budget = match limit {
        Some(l) => format!(" [{:.1}s of {}s]", elapsed.as_secs_f64(), l.as_secs()),
        None => format!(" [{:.1}s]", elapsed.as_secs_f64()),
    };
    println!(
        "criterion {id} {}: {title}: {}{budget}",
        if pass { "PASS" } else { "FAIL" },
        out.detail
    );
    pass
}

fn c1_likelihood() -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, m) in [4, 16, 64, 256].into_iter().enumerate() {
        match likelihood_gap(m, 500, SEED + i as u64) {
            Ok(g) => worst = worst.max(g),
            Err(e) => return Outcome { pass: false, detail: format!("error at M={m}: {e}") },
        }
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("max |L_direct - L_factorized| = {worst:.2e} over 4x500 tuples (tol 1e-9)"),
    }
}

/// MC matrices are shared with criterion 7.
fn c2_oracle(mcs: &[(usize, FisherMatrix)]) -> Outcome {
    let theta = canonical_theta();
    let quad = GammaQuadrature::default();
    let mut notes = Vec::new();
    let mut pass = true;
    for (m, mc) in mcs {
        let sc = canonical_scenario(*m).expect("canonical scenario");
        let an = exact_fim(&theta, &sc, &quad).expect("analytic FIM");
        let exact_zeros = an.m[(0, 1)] == 0.0 && an.m[(0, 4)] == 0.0 && an.m[(1, 4)] == 0.0;
        let (bad, worst) = fim_failures(&an, mc);
        pass &= bad.is_empty() && exact_zeros;
        notes.push(if bad.is_empty() {
            format!("M={m}: 15/15 within 5 SE (max |z| {worst:.2}), zeros exact and within 3 SE")
        } else {
            format!("M={m}: {}", bad.join(", "))
        });
    }
    Outcome { pass, detail: notes.join("; ") }
}

fn c3_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut count = 0;
    for (k, (th, sc)) in identity_points().expect("identity points").into_iter().enumerate() {
        match check_identities(&th, &sc, 200_000, SEED + 100 + k as u64) {
            Ok(reps) => {
                for r in reps {
                    count += 1;
                    worst = worst.max(r.z_score.abs());
                    if !r.pass {
                        bad.push(format!("{}@M={} (z {:.2})", r.name, sc.constellation.order(), r.z_score));
                    }
                }
            }
            Err(e) => return Outcome { pass: false, detail: format!("error: {e}") },
        }
    }
    Outcome {
        pass: bad.is_empty() && count == 16,
        detail: if bad.is_empty() {
            format!("8 identities x 2 points, max |z| = {worst:.2} (limit 4)")
        } else {
            format!("failed: {}", bad.join(", "))
        },
    }
}

fn c4_quadrature() -> Outcome {
    let moments = moment_grid_error(64);
    let doubling = doubling_error(64);
    match (moments, doubling) {
        (Ok(m), Ok(d)) => Outcome {
            pass: m <= 1e-10 && d <= 1e-8,
            detail: format!("moment grid max rel err {m:.2e} (tol 1e-10); Gamma 64->128 max rel change {d:.2e} (tol 1e-8)"),
        },
        (m, d) => Outcome { pass: false, detail: format!("error: {m:?} {d:?}") },
    }
}

fn random_scenario(rng: &mut ChaCha8Rng, force_pilot_only: bool) -> (Theta, ScenarioParams) {
    let p = rng.random_range(1..=4u32);
    let p1: f64 = rng.random_range(0.3..3.0);
    let p2: f64 = rng.random_range(0.3..3.0);
    let amp: f64 = rng.random_range(0.3..3.0);
    let constellation = Constellation::new(p, p2).unwrap();
    let n = if force_pilot_only { 0 } else { rng.random_range(0..48usize) };
    let l = if force_pilot_only || n == 0 || rng.random_bool(0.8) { 2 * rng.random_range(1..8usize) } else { 0 };
    // random constant-modulus pilots, so t1ᴴt2 is generally non-zero
    let phase = |rng: &mut ChaCha8Rng| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
    let t1: Vec<Complex64> = (0..l).map(|_| phase(rng) * p1.sqrt()).collect();
    let t2: Vec<Complex64> = (0..l).map(|_| phase(rng) * p2.sqrt()).collect();
    let own = Constellation::new(1, p1).unwrap();
    let s1 = draw_symbols(rng, &own, n);
    let sigma2 = snr_to_sigma2(rng.random_range(-5.0..30.0), p2);
    let sc = ScenarioParams::new(amp, sigma2, p1, constellation, t1, t2, s1).unwrap();
    let theta = Theta {
        a: Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        b: Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        tau: rng.random_range(0.0..3.0),
    };
    (theta, sc)
}

fn c5_mcrb() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut worst_rel: f64 = 0.0;
    let mut skipped = 0;
    for _ in 0..100 {
        let (theta, sc) = random_scenario(&mut rng, false);
        let (ma, mb) = match mcrb(&theta, &sc) {
            Ok(v) => v,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let (ca, cb) = crb(&mfim(&theta, &sc).unwrap()).unwrap();
        worst_rel = worst_rel.max(((ma - ca) / ma).abs()).max(((mb - cb) / mb).abs());
    }
    let quad = GammaQuadrature::default();
    let mut worst_entry: f64 = 0.0;
    for _ in 0..100 {
        let (theta, sc) = random_scenario(&mut rng, true);
        let e = exact_fim(&theta, &sc, &quad).unwrap();
        let m = mfim(&theta, &sc).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let scale = e.m[(i, j)].abs().max(m.m[(i, j)].abs()).max(1.0);
                worst_entry = worst_entry.max((e.m[(i, j)] - m.m[(i, j)]).abs() / scale);
            }
        }
    }
    Outcome {
        pass: worst_rel <= 1e-10 && worst_entry <= 1e-12 && skipped == 0,
        detail: format!(
            "closed form vs inverse MFIM max rel diff {worst_rel:.2e} over 100 scenarios (tol 1e-10, {skipped} skipped); N=0 exact vs MFIM max entry diff {worst_entry:.2e} over 100 (tol 1e-12)"
        ),
    }
}

fn find(rows: &[ResultRow], mode: EstimationMode, m: usize, snr: f64, n: usize) -> &ResultRow {
    rows.iter()
        .find(|r| r.mode == mode && r.m == m && r.snr_db == snr && r.n == n)
        .unwrap_or_else(|| panic!("missing row {mode} M={m} snr={snr} N={n}"))
}

fn c6_trends() -> Outcome {
    let snrs = [0.0, 10.0, 20.0, 30.0];
    let ms = [4, 16, 64, 256];
    let cfg: SweepConfig = serde_json::from_value(serde_json::json!({
        "modes": ["semi_blind", "pilot_only", "blind"],
        "M_list": ms,
        "snr_db": snrs,
        "N": 32,
        "L": 8,
        "realizations": 20,
        "rho": 0.3,
        "seed": SEED,
    }))
    .unwrap();
    let rows = match run_sweep(&cfg) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: format!("sweep error: {e}") },
    };
    let n_cfg: SweepConfig = serde_json::from_value(serde_json::json!({
        "modes": ["semi_blind"],
        "M_list": [4],
        "snr_db": [10.0],
        "N": [8, 16, 32, 64],
        "L": 8,
        "realizations": 20,
        "seed": SEED,
    }))
    .unwrap();
    let n_rows = match run_sweep(&n_cfg) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: format!("sweep error: {e}") },
    };
    let failures: usize = rows.iter().chain(&n_rows).map(|r| r.failures).sum();

    let (semi, pilot, blind) = (EstimationMode::SemiBlind, EstimationMode::PilotOnly, EstimationMode::Blind);
    let mut bad = Vec::new();

    // (a)
    for &m in &ms {
        for &s in &snrs {
            let (x, p) = (find(&rows, semi, m, s, 32), find(&rows, pilot, m, s, 0));
            if !(x.crb_a < p.crb_a && x.crb_b < p.crb_b) {
                bad.push(format!("(a) M={m} {s}dB"));
            }
        }
    }
    // (b)
    for &s in &snrs {
        for w in ms.windows(2) {
            let (lo, hi) = (find(&rows, semi, w[0], s, 32), find(&rows, semi, w[1], s, 32));
            if !(hi.crb_a >= lo.crb_a && hi.crb_b >= lo.crb_b) {
                bad.push(format!("(b) {s}dB M={}->{}", w[0], w[1]));
            }
        }
    }
    // (c)
    for w in [8, 16, 32, 64].windows(2) {
        let (a, b) = (find(&n_rows, semi, 4, 10.0, w[0]), find(&n_rows, semi, 4, 10.0, w[1]));
        if !(b.crb_a <= a.crb_a && b.crb_b <= a.crb_b) {
            bad.push(format!("(c) N={}->{}", w[0], w[1]));
        }
    }
    // (d)
    let gap = |s: f64| {
        let r = find(&rows, semi, 4, s, 32);
        (r.crb_a - r.mcrb_a) / r.mcrb_a
    };
    let (g10, g30) = (gap(10.0), gap(30.0));
    if !(g30 < g10 && g30 <= 0.1) {
        bad.push(format!("(d) gap10={g10:.3} gap30={g30:.3}"));
    }
    // (e)
    for &m in &ms {
        let ratios: Vec<f64> = snrs
            .iter()
            .map(|&s| find(&rows, blind, m, s, 40).crb_b / find(&rows, semi, m, s, 32).crb_b)
            .collect();
        if !ratios.iter().all(|r| *r >= 1.0) || !ratios.windows(2).all(|w| w[0] > w[1]) {
            bad.push(format!("(e) M={m} ratios {ratios:?}"));
        }
    }
    let r4: Vec<String> = snrs
        .iter()
        .map(|&s| format!("{:.2e}", find(&rows, blind, 4, s, 40).crb_b / find(&rows, semi, 4, s, 32).crb_b))
        .collect();
    Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() {
            format!(
                "(a)-(e) hold over {} rows; M=4 gap 10dB {g10:.3} -> 30dB {g30:.4}; M=4 blind/semi crb_b at 0/10/20/30 dB = {}; {failures} failed realizations",
                rows.len() + n_rows.len(),
                r4.join("/")
            )
        } else {
            format!("violations: {}", bad.join(", "))
        },
    }
}

fn c7_mutations(mcs: &[(usize, FisherMatrix)]) -> Outcome {
    let theta = canonical_theta();
    let quad = GammaQuadrature::default();
    let mut missed = Vec::new();
    let mut weakest = f64::INFINITY;
    for t in GammaTerm::ALL {
        for (m, mc) in mcs {
            let sc = canonical_scenario(*m).unwrap();
            let f = exact_fim_with(&theta, &sc, &quad, Some(t)).unwrap();
            let (bad, worst) = fim_failures(&f, mc);
            weakest = weakest.min(worst);
            if bad.is_empty() {
                missed.push(format!("{t}@M={m}"));
            }
        }
    }
    Outcome {
        pass: missed.is_empty(),
        detail: if missed.is_empty() {
            format!("all 7 single-term sign flips rejected at M=4 and M=16 (smallest max |z| {weakest:.0})")
        } else {
            format!("undetected: {}", missed.join(", "))
        },
    }
}

fn main() -> ExitCode {
    let mut ok = true;

    let t = Instant::now();
    ok &= report("1", "likelihood factorization", t, Some(Duration::from_secs(30)), c1_likelihood());

    let t = Instant::now();
    let theta = canonical_theta();
    let mcs: Vec<(usize, FisherMatrix)> = [(4usize, 200_000usize), (16, 100_000)]
        .into_iter()
        .map(|(m, n)| (m, mc_fim(&theta, &canonical_scenario(m).unwrap(), n, SEED + m as u64).expect("MC FIM")))
        .collect();
    ok &= report("2", "FIM vs Monte-Carlo score oracle", t, Some(Duration::from_secs(300)), c2_oracle(&mcs));

    let t = Instant::now();
    ok &= report("3", "expectation identities", t, Some(Duration::from_secs(120)), c3_identities());

    let t = Instant::now();
    ok &= report("4", "quadrature accuracy and node doubling", t, None, c4_quadrature());

    let t = Instant::now();
    ok &= report("5", "MCRB consistency", t, None, c5_mcrb());

    let t = Instant::now();
    ok &= report("6", "trend reproduction at reduced scale", t, Some(Duration::from_secs(900)), c6_trends());

    let t = Instant::now();
    ok &= report("7", "mutation sensitivity of the oracle", t, None, c7_mutations(&mcs));

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

