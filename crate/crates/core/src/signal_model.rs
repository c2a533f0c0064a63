//! Channel and scenario parameters, pilot design and received-signal simulation.
//!
//! At terminal T1 the pilot and data blocks arrive as
//!
//! ```text
//! z_t = A a t1 + A b t2 + A h2 w  + w1
//! z   = A a s1 + A b s2 + A h2 n  + n1
//! ```
//!
//! with `a = h1 h2`, `b = g1 h2` and all noises `CN(0, σ²)`. The compound
//! noise is `CN(0, C)` with `C = σ²(A²|h2|² + 1)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{CrbError, Result};

/// Tolerance on pilot mean power relative to the nominal terminal power.
const PILOT_POWER_TOL: f64 = 1e-9;

/// Flat-fading coefficients of the four links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h1: Complex64,
    pub h2: Complex64,
    pub g1: Complex64,
    /// Not used by the bounds at T1; carried so realisations match the network model.
    pub g2: Complex64,
}

impl ChannelRealization {
    /// Composite parameters seen by T1: `a = h1 h2`, `b = g1 h2`, `τ = |h2|²`.
    pub fn theta(&self) -> Theta {
        Theta {
            a: self.h1 * self.h2,
            b: self.g1 * self.h2,
            tau: self.h2.norm_sqr(),
        }
    }

    /// Draw `(h1, h2)` and `(g1, g2)` as independent correlated pairs.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, rho: f64) -> Result<Self> {
        let (h1, h2) = sample_channel_pair(rng, rho)?;
        let (g1, g2) = sample_channel_pair(rng, rho)?;
        Ok(Self { h1, h2, g1, g2 })
    }
}

/// The real parameter vector `[Re a, Im a, Re b, Im b, τ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub a: Complex64,
    pub b: Complex64,
    pub tau: f64,
}

impl Theta {
    pub fn new(a: Complex64, b: Complex64, tau: f64) -> Result<Self> {
        let t = Self { a, b, tau };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        if !finite {
            return Err(CrbError::domain("theta", "all components must be finite"));
        }
        if self.tau < 0.0 {
            return Err(CrbError::domain("tau", format!("|h2|² must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.a.re, self.a.im, self.b.re, self.b.im, self.tau]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            a: Complex64::new(v[0], v[1]),
            b: Complex64::new(v[2], v[3]),
            tau: v[4],
        }
    }

    pub fn b_abs2(&self) -> f64 {
        self.b.norm_sqr()
    }

    /// Effective noise variance `C = σ²(A²τ + 1)`.
    pub fn effective_noise(&self, amp: f64, sigma2: f64) -> Result<f64> {
        effective_noise(self, amp, sigma2)
    }
}

/// `C = σ²(A²τ + 1)`.
pub fn effective_noise(theta: &Theta, amp: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(CrbError::domain("sigma2", format!("must be positive, got {sigma2}")));
    }
    if !(amp.is_finite() && amp > 0.0) {
        return Err(CrbError::domain("A", format!("must be positive, got {amp}")));
    }
    if !(theta.tau >= 0.0) {
        return Err(CrbError::domain("tau", "must be >= 0"));
    }
    Ok(sigma2 * (amp * amp * theta.tau + 1.0))
}

/// A circular `CN(0, var)` draw.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Two unit-variance circular complex Gaussians with `E[c1 c2*] = rho`.
pub fn sample_channel_pair<R: Rng + ?Sized>(rng: &mut R, rho: f64) -> Result<(Complex64, Complex64)> {
    if !(0.0..1.0).contains(&rho) {
        return Err(CrbError::domain("rho", format!("must lie in [0, 1), got {rho}")));
    }
    let c1 = complex_gaussian(rng, 1.0);
    let w = complex_gaussian(rng, 1.0);
    let c2 = c1 * rho + w * (1.0 - rho * rho).sqrt();
    Ok((c1, c2))
}

/// Orthogonal QPSK pilot pair of even length `len`.
///
/// Both sequences ride on the common carrier `(1+j)/√2`; `t1` uses the
/// all-ones Walsh row and `t2` the alternating row, so `t1ᴴ t2 = 0` exactly.
pub fn make_pilots(len: usize, p1: f64, p2: f64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if len < 2 || !len.is_multiple_of(2) {
        return Err(CrbError::domain(
            "L",
            format!("orthogonal equal-modulus pilots need an even length >= 2, got {len}"),
        ));
    }
    for (name, p) in [("P1", p1), ("P2", p2)] {
        if !(p.is_finite() && p > 0.0) {
            return Err(CrbError::domain(name, format!("must be positive, got {p}")));
        }
    }
    let carrier = Complex64::new(1.0, 1.0) * std::f64::consts::FRAC_1_SQRT_2;
    let t1 = vec![carrier * p1.sqrt(); len];
    let t2 = (0..len)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            carrier * (sign * p2.sqrt())
        })
        .collect();
    Ok((t1, t2))
}

/// `n` i.i.d. uniform draws from the constellation.
pub fn draw_symbols<R: Rng + ?Sized>(rng: &mut R, constellation: &Constellation, n: usize) -> Vec<Complex64> {
    let pts = constellation.points();
    (0..n).map(|_| pts[rng.random_range(0..pts.len())]).collect()
}

/// `σ² = P2 · 10^(-snr/10)` for `SNR = 10 log10(P2/σ²)`.
pub fn snr_to_sigma2(snr_db: f64, p2: f64) -> f64 {
    p2 * 10f64.powf(-snr_db / 10.0)
}

/// Everything but the channel that the likelihood at T1 depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    /// Relay amplification factor `A`.
    pub amp: f64,
    /// Per-hop noise variance `σ²`.
    pub sigma2: f64,
    /// Nominal power of T1.
    pub p1: f64,
    /// T2's data constellation; its power is `P2`.
    pub constellation: Constellation,
    pub t1: Vec<Complex64>,
    pub t2: Vec<Complex64>,
    /// T1's own (known) data symbols.
    pub s1: Vec<Complex64>,
}

impl ScenarioParams {
    pub fn new(
        amp: f64,
        sigma2: f64,
        p1: f64,
        constellation: Constellation,
        t1: Vec<Complex64>,
        t2: Vec<Complex64>,
        s1: Vec<Complex64>,
    ) -> Result<Self> {
        let sc = Self {
            amp,
            sigma2,
            p1,
            constellation,
            t1,
            t2,
            s1,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("A", self.amp), ("sigma2", self.sigma2), ("P1", self.p1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CrbError::domain(name, format!("must be finite and positive, got {v}")));
            }
        }
        if self.t1.len() != self.t2.len() {
            return Err(CrbError::LengthMismatch {
                what: "pilot vectors t1/t2",
                expected: self.t1.len(),
                got: self.t2.len(),
            });
        }
        if self.pilot_len() + self.data_len() == 0 {
            return Err(CrbError::domain("L+N", "at least one pilot or data symbol is required"));
        }
        let finite = |v: &[Complex64]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !(finite(&self.t1) && finite(&self.t2) && finite(&self.s1)) {
            return Err(CrbError::domain("symbols", "pilot and data symbols must be finite"));
        }
        if self.pilot_len() > 0 {
            let l = self.pilot_len() as f64;
            let pw1 = energy(&self.t1) / l;
            let pw2 = energy(&self.t2) / l;
            if (pw1 - self.p1).abs() > PILOT_POWER_TOL * self.p1 {
                return Err(CrbError::domain("t1", format!("mean power {pw1} differs from P1 = {}", self.p1)));
            }
            let p2 = self.p2();
            if (pw2 - p2).abs() > PILOT_POWER_TOL * p2 {
                return Err(CrbError::domain("t2", format!("mean power {pw2} differs from P2 = {p2}")));
            }
        }
        Ok(())
    }

    /// Number of pilots `L`.
    pub fn pilot_len(&self) -> usize {
        self.t1.len()
    }

    /// Number of data symbols `N`.
    pub fn data_len(&self) -> usize {
        self.s1.len()
    }

    /// T2's average power `P2`.
    pub fn p2(&self) -> f64 {
        self.constellation.power()
    }

    pub fn effective_noise(&self, theta: &Theta) -> Result<f64> {
        effective_noise(theta, self.amp, self.sigma2)
    }

    /// `t1ᴴ t1`.
    pub fn pilot_energy_1(&self) -> f64 {
        energy(&self.t1)
    }

    /// `t2ᴴ t2`.
    pub fn pilot_energy_2(&self) -> f64 {
        energy(&self.t2)
    }

    /// `s1ᴴ s1`.
    pub fn data_energy_1(&self) -> f64 {
        energy(&self.s1)
    }

    /// `t1ᴴ t2`.
    pub fn pilot_cross(&self) -> Complex64 {
        self.t1.iter().zip(&self.t2).map(|(a, b)| a.conj() * b).sum()
    }
}

pub(crate) fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Received pilot block `z_t` and data block `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub z_t: Vec<Complex64>,
    pub z: Vec<Complex64>,
}

/// How the compound relay-plus-terminal noise is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// A single `CN(0, C)` term per sample.
    #[default]
    Compound,
    /// `A h2 ω + ω1` with `h2 = √τ`, two `CN(0, σ²)` draws per sample.
    TwoStage,
}

/// Simulate one received block for the given T2 data `s2`.
pub fn simulate_observation<R: Rng + ?Sized>(
    rng: &mut R,
    theta: &Theta,
    sc: &ScenarioParams,
    s2: &[Complex64],
) -> Result<Observation> {
    simulate_observation_with(rng, theta, sc, s2, NoiseModel::Compound)
}

pub fn simulate_observation_with<R: Rng + ?Sized>(
    rng: &mut R,
    theta: &Theta,
    sc: &ScenarioParams,
    s2: &[Complex64],
    noise: NoiseModel,
) -> Result<Observation> {
    if s2.len() != sc.data_len() {
        return Err(CrbError::LengthMismatch {
            what: "s2",
            expected: sc.data_len(),
            got: s2.len(),
        });
    }
    let c = sc.effective_noise(theta)?;
    let aa = theta.a * sc.amp;
    let ab = theta.b * sc.amp;
    let h2 = theta.tau.sqrt();
    let draw = |rng: &mut R| match noise {
        NoiseModel::Compound => complex_gaussian(rng, c),
        NoiseModel::TwoStage => {
            complex_gaussian(rng, sc.sigma2) * (sc.amp * h2) + complex_gaussian(rng, sc.sigma2)
        }
    };
    let z_t = sc
        .t1
        .iter()
        .zip(&sc.t2)
        .map(|(t1, t2)| aa * t1 + ab * t2 + draw(rng))
        .collect();
    let z = sc
        .s1
        .iter()
        .zip(s2)
        .map(|(s1, s2)| aa * s1 + ab * s2 + draw(rng))
        .collect();
    Ok(Observation { z_t, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn theta_from_channels() {
        let one = c(1.0, 0.0);
        let j = c(0.0, 1.0);
        let cases = [
            ((one, one, one), (one, one, 1.0)),
            ((j, j, one), (c(-1.0, 0.0), j, 1.0)),
            ((c(0.3, 0.4), c(2.0, 0.0), c(-1.0, 0.0)), (c(0.6, 0.8), c(-2.0, 0.0), 4.0)),
        ];
        for ((h1, h2, g1), (a, b, tau)) in cases {
            let th = ChannelRealization { h1, h2, g1, g2: one }.theta();
            assert!((th.a - a).norm() < 1e-15);
            assert!((th.b - b).norm() < 1e-15);
            assert!((th.tau - tau).abs() < 1e-15);
        }
    }

    #[test]
    fn effective_noise_values() {
        let th = |tau| Theta { a: c(0.0, 0.0), b: c(0.0, 0.0), tau };
        assert_eq!(effective_noise(&th(0.0), 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(effective_noise(&th(1.0), 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(effective_noise(&th(4.0), 2.0, 0.5).unwrap(), 8.5);
        assert!(effective_noise(&th(1.0), 1.0, 0.0).is_err());
        assert!(effective_noise(&th(1.0), 1.0, -1.0).is_err());
        // strictly increasing in τ and σ²
        let base = effective_noise(&th(1.0), 1.5, 0.3).unwrap();
        assert!(effective_noise(&th(1.1), 1.5, 0.3).unwrap() > base);
        assert!(effective_noise(&th(1.0), 1.5, 0.31).unwrap() > base);
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_sigma2(0.0, 1.0), 1.0);
        assert!((snr_to_sigma2(10.0, 1.0) - 0.1).abs() < 1e-16);
        assert!((snr_to_sigma2(20.0, 2.0) - 0.02).abs() < 1e-16);
    }

    #[test]
    fn pilot_examples() {
        let (t1, t2) = make_pilots(2, 1.0, 1.0).unwrap();
        let q = c(1.0, 1.0) / 2f64.sqrt();
        let close = |u: &[Complex64], v: &[Complex64]| u.iter().zip(v).all(|(x, y)| (x - y).norm() < 1e-15);
        assert!(close(&t1, &[q, q]));
        assert!(close(&t2, &[q, -q]));
        let (t1, t2) = make_pilots(8, 2.0, 1.0).unwrap();
        assert!((energy(&t1) - 16.0).abs() < 1e-12);
        assert!((energy(&t2) - 8.0).abs() < 1e-12);
        let cross: Complex64 = t1.iter().zip(&t2).map(|(a, b)| a.conj() * b).sum();
        assert_eq!(cross, c(0.0, 0.0));
        let (t1, _) = make_pilots(8, 1.0, 1.0).unwrap();
        assert!((energy(&t1) - 8.0).abs() < 1e-12);
        assert!(make_pilots(3, 1.0, 1.0).is_err());
        assert!(make_pilots(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn rho_out_of_range_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_channel_pair(&mut rng, 1.0).is_err());
        assert!(sample_channel_pair(&mut rng, -0.1).is_err());
    }

    #[test]
    fn draw_zero_symbols() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cst = Constellation::new(1, 1.0).unwrap();
        assert!(draw_symbols(&mut rng, &cst, 0).is_empty());
    }

    fn scenario(l: usize, n: usize, sigma2: f64) -> ScenarioParams {
        let cst = Constellation::new(1, 1.0).unwrap();
        let (t1, t2) = if l > 0 { make_pilots(l, 1.0, 1.0).unwrap() } else { (vec![], vec![]) };
        let s1 = vec![c(1.0, 1.0) / 2f64.sqrt(); n];
        ScenarioParams::new(1.0, sigma2, 1.0, cst, t1, t2, s1).unwrap()
    }

    #[test]
    fn scenario_validation() {
        let cst = Constellation::new(1, 1.0).unwrap();
        let err = ScenarioParams::new(1.0, 1.0, 1.0, cst.clone(), vec![], vec![], vec![]);
        assert!(err.is_err());
        let (t1, t2) = make_pilots(4, 1.0, 1.0).unwrap();
        let bad = ScenarioParams::new(1.0, 1.0, 2.0, cst.clone(), t1.clone(), t2.clone(), vec![]);
        assert!(bad.is_err(), "pilot power must match P1");
        let mismatch = ScenarioParams::new(1.0, 1.0, 1.0, cst, t1, t2[..2].to_vec(), vec![]);
        assert!(matches!(mismatch, Err(CrbError::LengthMismatch { .. })));
    }

    #[test]
    fn noise_free_limit() {
        let cst = Constellation::new(1, 1.0).unwrap();
        let sc = ScenarioParams {
            amp: 1.0,
            sigma2: 1e-12,
            p1: 1.0,
            constellation: cst,
            t1: vec![c(1.0, 0.0)],
            t2: vec![c(1.0, 0.0)],
            s1: vec![],
        };
        let th = Theta { a: c(1.0, 0.0), b: c(1.0, 0.0), tau: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs = simulate_observation(&mut rng, &th, &sc, &[]).unwrap();
        assert!((obs.z_t[0] - c(2.0, 0.0)).norm() < 1e-5);
    }

    #[test]
    fn length_mismatch_rejected() {
        let sc = scenario(2, 3, 1.0);
        let th = Theta { a: c(1.0, 0.0), b: c(1.0, 0.0), tau: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(simulate_observation(&mut rng, &th, &sc, &[c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn simulation_is_reproducible() {
        let sc = scenario(4, 6, 0.3);
        let th = Theta { a: c(0.3, -0.2), b: c(1.0, 0.5), tau: 0.7 };
        let s2 = draw_symbols(&mut ChaCha8Rng::seed_from_u64(9), &sc.constellation, 6);
        let a = simulate_observation(&mut ChaCha8Rng::seed_from_u64(42), &th, &sc, &s2).unwrap();
        let b = simulate_observation(&mut ChaCha8Rng::seed_from_u64(42), &th, &sc, &s2).unwrap();
        assert_eq!(a, b);
    }
}
