//! Monte-Carlo estimators that validate the analytic FIM.
//!
//! Nothing here calls the analytic score or the `Γ` integrals: the FIM is
//! the sample mean of outer products of finite-difference scores of the
//! direct-sum log-likelihood, and the expectation identities are checked
//! against sample means of the raw integrands.

use nalgebra::Matrix5;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrbError, Result};
use crate::fim::{EstimationMode, FisherMatrix, Provenance};
use crate::likelihood::{log_likelihood, CoeffTable, LikelihoodMethod};
use crate::signal_model::{complex_gaussian, draw_symbols, simulate_observation, ScenarioParams, Theta};
use crate::stats::{split_seed, Moments};

pub const MIN_FIM_SAMPLES: usize = 10_000;
pub const MIN_IDENTITY_SAMPLES: usize = 100_000;
/// Largest tolerated fraction of rejected samples.
pub const MAX_REJECT_FRACTION: f64 = 1e-3;
pub const IDENTITY_Z: f64 = 4.0;
const BATCH: usize = 4096;
/// Relative accuracy of the second-difference curvature ratios.
const CURVATURE_RESOLUTION: f64 = 1e-6;

/// Indices of the 15 distinct entries of a symmetric 5×5 matrix.
pub fn upper_entries() -> impl Iterator<Item = (usize, usize)> {
    (0..5).flat_map(|i| (i..5).map(move |j| (i, j)))
}

fn batches(n: usize) -> Vec<(u64, usize)> {
    (0..n.div_ceil(BATCH))
        .map(|b| (b as u64, BATCH.min(n - b * BATCH)))
        .collect()
}

/// Finite-difference score, `h_i = 1e-5 max(|θ_i|, 1)`.
fn fd_score(obs: &crate::signal_model::Observation, theta: &Theta, sc: &ScenarioParams, method: LikelihoodMethod) -> Result<[f64; 5]> {
    let base = theta.to_array();
    let mut g = [0.0; 5];
    for i in 0..5 {
        let h = 1e-5 * base[i].abs().max(1.0);
        let mut up = base;
        let mut dn = base;
        up[i] += h;
        dn[i] -= h;
        // keep τ admissible
        if dn[4] < 0.0 {
            dn[4] = 0.0;
        }
        let step = up[i] - dn[i];
        let lu = log_likelihood(obs, &Theta::from_array(up), sc, method)?;
        let ld = log_likelihood(obs, &Theta::from_array(dn), sc, method)?;
        g[i] = (lu - ld) / step;
    }
    Ok(g)
}

#[derive(Default, Clone)]
struct OuterAcc {
    entries: [Moments; 15],
    rejected: usize,
}

impl OuterAcc {
    fn merge(mut self, other: &OuterAcc) -> Self {
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.merge(b);
        }
        self.rejected += other.rejected;
        self
    }
}

/// Monte-Carlo FIM `E[s sᵀ]` with entrywise standard errors.
pub fn mc_fim(theta: &Theta, sc: &ScenarioParams, n_samples: usize, seed: u64) -> Result<FisherMatrix> {
    mc_fim_with(theta, sc, n_samples, seed, LikelihoodMethod::Direct)
}

pub fn mc_fim_with(
    theta: &Theta,
    sc: &ScenarioParams,
    n_samples: usize,
    seed: u64,
    method: LikelihoodMethod,
) -> Result<FisherMatrix> {
    if n_samples < MIN_FIM_SAMPLES {
        return Err(CrbError::domain(
            "n_samples",
            format!("need at least {MIN_FIM_SAMPLES} samples, got {n_samples}"),
        ));
    }
    theta.validate()?;
    sc.validate()?;
    let parts: Vec<Result<OuterAcc>> = batches(n_samples)
        .into_par_iter()
        .map(|(idx, count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, idx));
            let mut acc = OuterAcc::default();
            for _ in 0..count {
                let s2 = draw_symbols(&mut rng, &sc.constellation, sc.data_len());
                let obs = simulate_observation(&mut rng, theta, sc, &s2)?;
                let g = fd_score(&obs, theta, sc, method)?;
                if g.iter().any(|v| !v.is_finite()) {
                    acc.rejected += 1;
                    continue;
                }
                for (k, (i, j)) in upper_entries().enumerate() {
                    acc.entries[k].push(g[i] * g[j]);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = OuterAcc::default();
    for p in parts {
        total = total.merge(&p?);
    }
    if total.rejected as f64 > MAX_REJECT_FRACTION * n_samples as f64 {
        return Err(CrbError::TooManyRejections {
            rejected: total.rejected,
            total: n_samples,
        });
    }
    let mut m = Matrix5::<f64>::zeros();
    let mut se = Matrix5::<f64>::zeros();
    for (k, (i, j)) in upper_entries().enumerate() {
        m[(i, j)] = total.entries[k].mean();
        m[(j, i)] = m[(i, j)];
        se[(i, j)] = total.entries[k].std_error();
        se[(j, i)] = se[(i, j)];
    }
    Ok(FisherMatrix {
        m,
        provenance: Provenance::MonteCarlo,
        mode: EstimationMode::of(sc),
        se: Some(se),
    })
}

/// One entry of an analytic-vs-Monte-Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub mc: f64,
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

pub const PARAM_NAMES: [&str; 5] = ["a_R", "a_I", "b_R", "b_I", "tau"];

impl EntryCheck {
    pub fn label(&self) -> String {
        format!("I[{},{}]", PARAM_NAMES[self.row], PARAM_NAMES[self.col])
    }
}

/// Compare the 15 distinct entries; `z_limit` applies to all of them.
pub fn compare_fim(analytic: &FisherMatrix, mc: &FisherMatrix, z_limit: f64) -> Vec<EntryCheck> {
    let se = mc.se.unwrap_or_else(Matrix5::zeros);
    upper_entries()
        .map(|(i, j)| {
            let (a, m, s) = (analytic.m[(i, j)], mc.m[(i, j)], se[(i, j)]);
            let z = if s > 0.0 { (a - m) / s } else if a == m { 0.0 } else { f64::INFINITY };
            EntryCheck {
                row: i,
                col: j,
                analytic: a,
                mc: m,
                se: s,
                z,
                pass: z.abs() <= z_limit,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub analytic: f64,
    pub mc_estimate: f64,
    pub mc_se: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// Names of the expectation identities, in report order.
pub const IDENTITY_NAMES: [&str; 8] = [
    "cosh_ratio_mean",
    "a_curvature_mean",
    "b_curvature_mean",
    "x_sinh_ratio_mean",
    "x2_cosh_ratio_mean",
    "u_sinh_ratio_mean",
    "u2_cosh_ratio_mean",
    "tau_curvature_mean",
];

fn log_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn log_abs_sinh(z: f64) -> f64 {
    let a = z.abs();
    a + (-(-2.0 * a).exp_m1()).ln() - std::f64::consts::LN_2
}

/// `F''/F` along one parameter by a second difference of `log F`.
fn curvature_ratio(log_f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let l0 = log_f(0.0);
    ((log_f(h) - l0).exp() - 2.0 + (log_f(-h) - l0).exp()) / (h * h)
}

/// Check the closed-form expectations of the `F` ratios by simulation.
///
/// Uses the smallest level `i = 1` for the per-level identities and the
/// first entry of `s1` (or a unit 4-QAM point if there is none).
pub fn check_identities(theta: &Theta, sc: &ScenarioParams, n_samples: usize, seed: u64) -> Result<Vec<IdentityReport>> {
    if n_samples < MIN_IDENTITY_SAMPLES {
        return Err(CrbError::domain(
            "n_samples",
            format!("need at least {MIN_IDENTITY_SAMPLES} samples, got {n_samples}"),
        ));
    }
    theta.validate()?;
    sc.validate()?;
    let b2 = theta.b_abs2();
    if !(b2.sqrt() > 1e-6) {
        return Err(CrbError::SingularParameter { b_abs2: b2, threshold: 1e-12 });
    }
    let amp = sc.amp;
    let c = sc.effective_noise(theta)?;
    let ct = CoeffTable::new(&sc.constellation, amp, c, b2);
    let dc = amp * amp * sc.sigma2;
    let sqrt_m = sc.constellation.sqrt_order();
    let m = sc.constellation.order() as f64;
    let s1 = sc
        .s1
        .first()
        .copied()
        .unwrap_or(Complex64::new(1.0, 1.0) * std::f64::consts::FRAC_1_SQRT_2);
    let (br, bi) = (theta.b.re, theta.b.im);
    let (beta, gamma) = (ct.beta[0], ct.gamma[0]);
    let e_i = (gamma * b2).exp();
    let s_beta2: f64 = ct.beta.iter().map(|b| b * b).sum();
    let s_gamma: f64 = ct.gamma.iter().sum();
    let sb = s1.conj() * theta.b;

    let analytic = [
        2.0 / sqrt_m * e_i,
        8.0 * amp * amp / sqrt_m * s_beta2 * sb.re * sb.re,
        16.0 / m * s_gamma * s_gamma * bi * bi,
        2.0 * c / sqrt_m * e_i * beta * br,
        e_i * (c / sqrt_m + 2.0 * c / sqrt_m * gamma * br * br + 4.0 * c / m * s_gamma * bi * bi),
        2.0 / sqrt_m * c * b2 * e_i * beta,
        e_i / sqrt_m * (2.0 * c * c * b2 * b2 * beta * beta + c * b2),
        ct.beta
            .iter()
            .map(|b| 2.0 * dc * dc / sqrt_m * (b.powi(4) * b2 * b2 + 4.0 * b * b * b2 / c))
            .sum(),
    ];

    let constellation = &sc.constellation;
    let sigma2 = sc.sigma2;
    let tau = theta.tau;
    let parts: Vec<[Moments; 8]> = batches(n_samples)
        .into_par_iter()
        .map(|(idx, count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, idx));
            let mut acc: [Moments; 8] = Default::default();
            for _ in 0..count {
                let s2 = draw_symbols(&mut rng, constellation, 1)[0];
                let w = theta.b * s2 * amp + complex_gaussian(&mut rng, c);
                let (x, y) = (w.re, w.im);
                let u = br * x + bi * y;
                let log_f_u = ct.log_f(u);
                let arg = 2.0 * beta * u;
                let cosh_r = (log_cosh(arg) - log_f_u).exp();
                let sinh_r = arg.signum() * (log_abs_sinh(arg) - log_f_u).exp();

                // a_R moves w by -A s1 h
                let h_a = 1e-4;
                let d_a = curvature_ratio(
                    |h| {
                        let wh = w - s1 * (amp * h);
                        ct.log_f(br * wh.re + bi * wh.im)
                    },
                    h_a,
                );
                // b_R at fixed (x, y): both u and the level prefactors move
                let h_b = 1e-4 * br.abs().max(1.0);
                let d_b = curvature_ratio(
                    |h| {
                        let ctb = CoeffTable::new(constellation, amp, c, (br + h).powi(2) + bi * bi);
                        ctb.log_f((br + h) * x + bi * y)
                    },
                    h_b,
                );
                // τ at fixed (x, y) through C
                let h_t = 1e-4 * tau.abs().max(1.0);
                let d_t = curvature_ratio(
                    |h| {
                        let cc = sigma2 * (amp * amp * (tau + h) + 1.0);
                        CoeffTable::new(constellation, amp, cc, b2).log_f(u)
                    },
                    h_t,
                );

                let vals = [
                    cosh_r,
                    d_a,
                    d_b,
                    x * sinh_r,
                    x * x * cosh_r,
                    u * sinh_r,
                    u * u * cosh_r,
                    d_t,
                ];
                for (a, v) in acc.iter_mut().zip(vals) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total: [Moments; 8] = Default::default();
    for p in &parts {
        for (a, b) in total.iter_mut().zip(p) {
            a.merge(b);
        }
    }
    Ok(IDENTITY_NAMES
        .iter()
        .zip(analytic)
        .zip(total)
        .map(|((name, an), mom)| {
            let (mean, se) = (mom.mean(), mom.std_error());
            // Some integrands are constant (e.g. every ratio at M = 4); then the
            // second-difference error, not sampling noise, sets the resolution.
            let floor = CURVATURE_RESOLUTION * an.abs().max(mean.abs());
            let se_eff = se.hypot(floor);
            let z = if se_eff > 0.0 { (mean - an) / se_eff } else if mean == an { 0.0 } else { f64::INFINITY };
            IdentityReport {
                name: name.to_string(),
                analytic: an,
                mc_estimate: mean,
                mc_se: se_eff,
                z_score: z,
                pass: z.abs() <= IDENTITY_Z,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::Constellation;
    use crate::signal_model::make_pilots;

    #[test]
    fn sample_count_floor() {
        let k = Constellation::new(1, 1.0).unwrap();
        let (t1, t2) = make_pilots(2, 1.0, 1.0).unwrap();
        let sc = ScenarioParams::new(1.0, 0.5, 1.0, k, t1, t2, vec![]).unwrap();
        let th = Theta { a: Complex64::new(1.0, 0.0), b: Complex64::new(1.0, 0.0), tau: 1.0 };
        assert!(mc_fim(&th, &sc, 100, 1).is_err());
        assert!(check_identities(&th, &sc, 100, 1).is_err());
    }

    #[test]
    fn batching_covers_all_samples() {
        let b = batches(10_001);
        assert_eq!(b.iter().map(|(_, n)| n).sum::<usize>(), 10_001);
        assert_eq!(upper_entries().count(), 15);
    }
}
