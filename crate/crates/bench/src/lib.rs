//! Deterministic fixtures shared by the benchmarks.

use twrn_crb::sweep::{build_scenario, canonical_theta};
use twrn_crb::{Complex64, Observation, ScenarioParams, Theta};

/// QPSK data for T1, cycling through the four points.
pub fn own_symbols(n: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let pts = [(s, s), (-s, s), (-s, -s), (s, -s)];
    (0..n).map(|k| Complex64::new(pts[k % 4].0, pts[k % 4].1)).collect()
}

/// Canonical gains, L = 8 pilots, `n` data symbols.
pub fn scenario(m: usize, snr_db: f64, n: usize) -> (Theta, ScenarioParams) {
    let sc = build_scenario(m, snr_db, n, 8, 1.0, 1.0, 1.0, &own_symbols(n)).expect("valid fixture");
    (canonical_theta(), sc)
}

/// Noise-free block with T2 walking its constellation, nudged off the lattice.
pub fn observation(theta: &Theta, sc: &ScenarioParams) -> Observation {
    let pts = sc.constellation.points();
    let jitter = |k: usize| Complex64::new(0.05 * ((k * 7) % 5) as f64, -0.03 * ((k * 3) % 4) as f64);
    let z_t = sc
        .t1
        .iter()
        .zip(&sc.t2)
        .enumerate()
        .map(|(k, (t1, t2))| (theta.a * t1 + theta.b * t2) * sc.amp + jitter(k))
        .collect();
    let z = sc
        .s1
        .iter()
        .enumerate()
        .map(|(k, s1)| (theta.a * s1 + theta.b * pts[(k * 11) % pts.len()]) * sc.amp + jitter(k))
        .collect();
    Observation { z_t, z }
}
