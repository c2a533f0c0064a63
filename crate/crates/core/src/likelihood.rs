//! Factorised square-QAM likelihood at terminal T1.
//!
//! With `w_k = z_k - A a s1_k`, the per-symbol mixture over T2's alphabet
//! factorises into `D_k = 4 F(u_k) F(v_k)` where `u_k = Re{w_k* b}`,
//! `v_k = Im{w_k* b}` and
//!
//! ```text
//! F(t) = Σ_i exp(-γ_i |b|²) cosh(2 β_i t),   β_i = A d_p (2i-1) / C,  γ_i = β_i² C.
//! ```
//!
//! `cosh(2βt)` overflows long before the likelihood does, so every sum over
//! `i` is carried with a shared subtracted exponent (see [`AxisSums`]) and
//! only ratios or logs are ever formed.

use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::{CrbError, Result};
use crate::signal_model::{Observation, ScenarioParams, Theta};

/// Per-level coefficients `β_i`, `γ_i` for one `(A, C, |b|²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `-γ_i |b|²`, the log of each level's Gaussian prefactor.
    log_prefactor: Vec<f64>,
    pub c: f64,
    pub amp: f64,
    pub b_abs2: f64,
}

impl CoeffTable {
    pub fn new(constellation: &Constellation, amp: f64, c: f64, b_abs2: f64) -> Self {
        let beta: Vec<f64> = constellation
            .quadrant_levels()
            .iter()
            .map(|lv| amp * lv / c)
            .collect();
        let gamma: Vec<f64> = constellation
            .quadrant_levels()
            .iter()
            .map(|lv| amp * amp * lv * lv / c)
            .collect();
        let log_prefactor = gamma.iter().map(|g| -g * b_abs2).collect();
        Self {
            beta,
            gamma,
            log_prefactor,
            c,
            amp,
            b_abs2,
        }
    }

    pub fn for_theta(constellation: &Constellation, theta: &Theta, amp: f64, sigma2: f64) -> Result<Self> {
        let c = theta.effective_noise(amp, sigma2)?;
        Ok(Self::new(constellation, amp, c, theta.b_abs2()))
    }

    /// Number of levels per axis, `2^(p-1)`.
    pub fn levels(&self) -> usize {
        self.beta.len()
    }

    /// `log F(t)`; finite for any finite `t`.
    pub fn log_f(&self, t: f64) -> f64 {
        self.axis(t).log_f()
    }

    /// Scaled level sums at `t`.
    pub fn axis(&self, t: f64) -> AxisSums {
        let at = t.abs();
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        let scale = self
            .beta
            .iter()
            .zip(&self.log_prefactor)
            .map(|(b, lg)| lg + 2.0 * b * at)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut out = AxisSums {
            log_scale: scale,
            f: 0.0,
            beta_sinh: 0.0,
            gamma_cosh: 0.0,
            beta2_cosh: 0.0,
        };
        for ((b, g), lg) in self.beta.iter().zip(&self.gamma).zip(&self.log_prefactor) {
            let lead = (lg + 2.0 * b * at - scale).exp() / 2.0;
            let damp = -4.0 * b * at;
            let ch = lead * (1.0 + damp.exp());
            let sh = sign * lead * -damp.exp_m1();
            out.f += ch;
            out.beta_sinh += b * sh;
            out.gamma_cosh += g * ch;
            out.beta2_cosh += b * b * ch;
        }
        out
    }
}

/// Level sums at one point, all multiplied by `exp(-log_scale)`:
///
/// * `f`          = Σ e^{-γ|b|²} cosh(2βt)      (this is `F(t)`)
/// * `beta_sinh`  = Σ β e^{-γ|b|²} sinh(2βt)    (the small `f(t)`)
/// * `gamma_cosh` = Σ γ e^{-γ|b|²} cosh(2βt)
/// * `beta2_cosh` = Σ β² e^{-γ|b|²} cosh(2βt)
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSums {
    pub log_scale: f64,
    pub f: f64,
    pub beta_sinh: f64,
    pub gamma_cosh: f64,
    pub beta2_cosh: f64,
}

impl AxisSums {
    pub fn log_f(&self) -> f64 {
        self.log_scale + self.f.ln()
    }

    /// `f(t) / F(t)`.
    pub fn beta_sinh_ratio(&self) -> f64 {
        self.beta_sinh / self.f
    }

    /// `Σγ e cosh / F`.
    pub fn gamma_cosh_ratio(&self) -> f64 {
        self.gamma_cosh / self.f
    }

    /// `Σβ² e cosh / F`.
    pub fn beta2_cosh_ratio(&self) -> f64 {
        self.beta2_cosh / self.f
    }
}

/// Derivatives of `F(b_R x + b_I y)` and the small `f(u)`, sharing `log_scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FDerivs {
    /// `∂F(u)/∂b_R`
    pub q1: f64,
    /// `∂F(u)/∂b_I`
    pub q2: f64,
    /// `∂F(u)/∂τ`
    pub q3: f64,
    /// `f(u) = Σ β e^{-γ|b|²} sinh(2βu)`
    pub f_small: f64,
    /// `F(u)`
    pub f: f64,
    pub log_scale: f64,
}

/// `A²σ² = dC/dτ`, recovered from `C` and `τ`.
pub(crate) fn dc_dtau(ct: &CoeffTable, theta: &Theta) -> f64 {
    let a2 = ct.amp * ct.amp;
    a2 * ct.c / (a2 * theta.tau + 1.0)
}

/// `q1`, `q2`, `q3` and `f` at `u = b_R x + b_I y`.
pub fn f_derivs(x: f64, y: f64, theta: &Theta, ct: &CoeffTable) -> FDerivs {
    let (br, bi) = (theta.b.re, theta.b.im);
    let u = br * x + bi * y;
    let s = ct.axis(u);
    let dc = dc_dtau(ct, theta);
    FDerivs {
        q1: -2.0 * br * s.gamma_cosh + 2.0 * x * s.beta_sinh,
        q2: -2.0 * bi * s.gamma_cosh + 2.0 * y * s.beta_sinh,
        q3: dc * ct.b_abs2 * s.beta2_cosh - 2.0 * dc / ct.c * u * s.beta_sinh,
        f_small: s.beta_sinh,
        f: s.f,
        log_scale: s.log_scale,
    }
}

/// `w = z - A a s1` in components together with `u`, `v` and `log F` at both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEval {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub log_f_u: f64,
    pub log_f_v: f64,
}

pub fn uv_from_observation(z_k: Complex64, s1k: Complex64, theta: &Theta, ct: &CoeffTable) -> PointEval {
    let w = z_k - theta.a * s1k * ct.amp;
    let (x, y) = (w.re, w.im);
    let (br, bi) = (theta.b.re, theta.b.im);
    let u = br * x + bi * y;
    let v = bi * x - br * y;
    PointEval {
        x,
        y,
        u,
        v,
        log_f_u: ct.log_f(u),
        log_f_v: ct.log_f(v),
    }
}

/// Which form of the per-symbol mixture to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LikelihoodMethod {
    /// Brute-force sum over all `M` symbols.
    Direct,
    /// `4 F(u) F(v)`.
    #[default]
    Factorized,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log D_k` for one data sample.
pub fn log_dk(
    z_k: Complex64,
    s1k: Complex64,
    theta: &Theta,
    constellation: &Constellation,
    ct: &CoeffTable,
    method: LikelihoodMethod,
) -> f64 {
    match method {
        LikelihoodMethod::Direct => {
            let w = z_k - theta.a * s1k * ct.amp;
            let coupling = w.conj() * theta.b;
            let k2 = ct.amp * ct.amp * ct.b_abs2 / ct.c;
            let k1 = 2.0 * ct.amp / ct.c;
            log_sum_exp(
                constellation
                    .points()
                    .iter()
                    .map(move |s| -k2 * s.norm_sqr() + k1 * (coupling * s).re),
            )
        }
        LikelihoodMethod::Factorized => {
            let pe = uv_from_observation(z_k, s1k, theta, ct);
            4f64.ln() + pe.log_f_u + pe.log_f_v
        }
    }
}

/// `log D_k` with the scenario supplying `A`, `σ²` and the constellation.
pub fn dk(z_k: Complex64, s1k: Complex64, theta: &Theta, sc: &ScenarioParams, method: LikelihoodMethod) -> Result<f64> {
    let ct = CoeffTable::for_theta(&sc.constellation, theta, sc.amp, sc.sigma2)?;
    Ok(log_dk(z_k, s1k, theta, &sc.constellation, &ct, method))
}

fn check_lengths(obs: &Observation, sc: &ScenarioParams) -> Result<()> {
    if obs.z_t.len() != sc.pilot_len() {
        return Err(CrbError::LengthMismatch {
            what: "z_t",
            expected: sc.pilot_len(),
            got: obs.z_t.len(),
        });
    }
    if obs.z.len() != sc.data_len() {
        return Err(CrbError::LengthMismatch {
            what: "z",
            expected: sc.data_len(),
            got: obs.z.len(),
        });
    }
    Ok(())
}

/// Joint log-likelihood of the pilot and data blocks, constants included.
pub fn log_likelihood(obs: &Observation, theta: &Theta, sc: &ScenarioParams, method: LikelihoodMethod) -> Result<f64> {
    check_lengths(obs, sc)?;
    let c = sc.effective_noise(theta)?;
    let ct = CoeffTable::new(&sc.constellation, sc.amp, c, theta.b_abs2());
    let (l, n) = (sc.pilot_len() as f64, sc.data_len() as f64);
    let m = sc.constellation.order() as f64;
    let aa = theta.a * sc.amp;
    let ab = theta.b * sc.amp;

    let pilot_resid: f64 = obs
        .z_t
        .iter()
        .zip(sc.t1.iter().zip(&sc.t2))
        .map(|(z, (t1, t2))| (z - aa * t1 - ab * t2).norm_sqr())
        .sum();
    let mut ll = -(n + l) * (std::f64::consts::PI * c).ln() - pilot_resid / c - n * m.ln();
    for (z, s1) in obs.z.iter().zip(&sc.s1) {
        let w = z - aa * s1;
        ll += -w.norm_sqr() / c + log_dk(*z, *s1, theta, &sc.constellation, &ct, method);
    }
    Ok(ll)
}

/// Analytic score `∂L/∂θ` for `θ = [a_R, a_I, b_R, b_I, τ]`.
pub fn score(obs: &Observation, theta: &Theta, sc: &ScenarioParams) -> Result<[f64; 5]> {
    check_lengths(obs, sc)?;
    let c = sc.effective_noise(theta)?;
    let ct = CoeffTable::new(&sc.constellation, sc.amp, c, theta.b_abs2());
    let amp = sc.amp;
    let dc = dc_dtau(&ct, theta);
    let (l, n) = (sc.pilot_len() as f64, sc.data_len() as f64);
    let (br, bi) = (theta.b.re, theta.b.im);
    let aa = theta.a * amp;
    let ab = theta.b * amp;
    let mut g = [0.0; 5];
    let mut resid2 = 0.0;

    for (z, (t1, t2)) in obs.z_t.iter().zip(sc.t1.iter().zip(&sc.t2)) {
        let r = z - aa * t1 - ab * t2;
        resid2 += r.norm_sqr();
        let p1 = t1.conj() * r;
        let p2 = t2.conj() * r;
        g[0] += 2.0 * amp / c * p1.re;
        g[1] += 2.0 * amp / c * p1.im;
        g[2] += 2.0 * amp / c * p2.re;
        g[3] += 2.0 * amp / c * p2.im;
    }

    for (z, s1) in obs.z.iter().zip(&sc.s1) {
        let w = z - aa * s1;
        resid2 += w.norm_sqr();
        let p = s1.conj() * w;
        g[0] += 2.0 * amp / c * p.re;
        g[1] += 2.0 * amp / c * p.im;

        let (x, y) = (w.re, w.im);
        let u = br * x + bi * y;
        let v = bi * x - br * y;
        let su = ct.axis(u);
        let sv = ct.axis(v);
        let sb = s1.conj() * theta.b;

        // log F(u): u moves with a through w
        let fu = su.beta_sinh_ratio();
        let fv = sv.beta_sinh_ratio();
        g[0] += -2.0 * amp * sb.re * fu - 2.0 * amp * sb.im * fv;
        g[1] += -2.0 * amp * sb.im * fu + 2.0 * amp * sb.re * fv;

        g[2] += -2.0 * br * su.gamma_cosh_ratio() + 2.0 * x * fu;
        g[3] += -2.0 * bi * su.gamma_cosh_ratio() + 2.0 * y * fu;
        // v = b_I x - b_R y
        g[2] += -2.0 * br * sv.gamma_cosh_ratio() - 2.0 * y * fv;
        g[3] += -2.0 * bi * sv.gamma_cosh_ratio() + 2.0 * x * fv;

        g[4] += dc * ct.b_abs2 * su.beta2_cosh_ratio() - 2.0 * dc / c * u * fu;
        g[4] += dc * ct.b_abs2 * sv.beta2_cosh_ratio() - 2.0 * dc / c * v * fv;
    }

    g[4] += -(n + l) * dc / c + resid2 * dc / (c * c);
    Ok(g)
}
