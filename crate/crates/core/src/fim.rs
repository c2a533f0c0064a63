//! Exact and modified Fisher information for `θ = [a_R, a_I, b_R, b_I, τ]`.
//!
//! The pilot block is Gaussian and closed-form. The data block adds closed
//! terms plus seven expectations `Γ1..Γ7` of ratios of derivatives of `F`.
//! Those are reduced to one-dimensional integrals over the density of
//! `u = Re{w* b}`, a √M-component Gaussian mixture with centres
//! `±A|b|²(2i-1)d_p` and variance `C|b|²/2`, and integrated with composite
//! Gauss-Legendre panels one standard deviation wide.
//!
//! With `x = (b_R u + b_I v)/|b|²`, `y = (b_I u - b_R v)/|b|²` and `u, v`
//! independent, every `Γ` splits into moments of
//!
//! ```text
//! P(u)  = u Φβ(u)/|b|² - Φγ(u)
//! Q3(u) = c'|b|² Φβ²(u) - (2c'/C) u Φβ(u)
//! ```
//!
//! where `Φβ = Σβ e cosh/F`-style ratios come from [`AxisSums`] and
//! `c' = dC/dτ = A²σ²`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Matrix5, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CrbError, Result};
use crate::likelihood::{dc_dtau, f_derivs, AxisSums, CoeffTable};
use crate::quadrature::{composite_legendre_many, hermite_rule, legendre_rule, QuadRule};
use crate::signal_model::{ScenarioParams, Theta};

/// Below this `|b|²` the `u`/`v` substitution is abandoned for the `(x, y)` form.
pub const B_ABS2_THRESHOLD: f64 = 1e-12;
/// Largest equilibrated condition number [`crb`] accepts.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative slack on negative eigenvalues before a matrix counts as indefinite.
pub const PSD_TOL: f64 = 1e-8;
/// Integration reach beyond the outermost mixture centre, in standard deviations.
const REACH_SIGMAS: f64 = 12.0;
pub const DEFAULT_QUAD_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    SemiBlind,
    PilotOnly,
    Blind,
}

impl EstimationMode {
    pub fn of(sc: &ScenarioParams) -> Self {
        match (sc.pilot_len(), sc.data_len()) {
            (0, _) => EstimationMode::Blind,
            (_, 0) => EstimationMode::PilotOnly,
            _ => EstimationMode::SemiBlind,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EstimationMode::SemiBlind => "semi_blind",
            EstimationMode::PilotOnly => "pilot_only",
            EstimationMode::Blind => "blind",
        }
    }
}

impl fmt::Display for EstimationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimationMode {
    type Err = CrbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi_blind" => Ok(EstimationMode::SemiBlind),
            "pilot_only" => Ok(EstimationMode::PilotOnly),
            "blind" => Ok(EstimationMode::Blind),
            _ => Err(CrbError::domain("mode", format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GammaSet {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub g5: f64,
    pub g6: f64,
    pub g7: f64,
}

impl GammaSet {
    pub fn to_array(&self) -> [f64; 7] {
        [self.g1, self.g2, self.g3, self.g4, self.g5, self.g6, self.g7]
    }

    pub fn get(&self, term: GammaTerm) -> f64 {
        self.to_array()[term as usize]
    }

    /// Largest `|Γ_k - other_k| / max(|Γ_k|, 1e-30)`.
    pub fn max_rel_diff(&self, other: &GammaSet) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs() / a.abs().max(1e-30))
            .fold(0.0, f64::max)
    }
}

/// One of the seven `Γ` terms; used to switch the sign of its FIM contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaTerm {
    Gamma1 = 0,
    Gamma2,
    Gamma3,
    Gamma4,
    Gamma5,
    Gamma6,
    Gamma7,
}

impl GammaTerm {
    pub const ALL: [GammaTerm; 7] = [
        GammaTerm::Gamma1,
        GammaTerm::Gamma2,
        GammaTerm::Gamma3,
        GammaTerm::Gamma4,
        GammaTerm::Gamma5,
        GammaTerm::Gamma6,
        GammaTerm::Gamma7,
    ];

    /// FIM entries (row, column, upper triangle) this term enters.
    pub fn entries(self) -> &'static [(usize, usize)] {
        match self {
            GammaTerm::Gamma1 => &[(0, 0), (1, 1)],
            GammaTerm::Gamma2 => &[(2, 2)],
            GammaTerm::Gamma3 => &[(3, 3)],
            GammaTerm::Gamma4 => &[(4, 4)],
            GammaTerm::Gamma5 => &[(2, 3)],
            GammaTerm::Gamma6 => &[(2, 4)],
            GammaTerm::Gamma7 => &[(3, 4)],
        }
    }
}

impl fmt::Display for GammaTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gamma{}", *self as usize + 1)
    }
}

impl FromStr for GammaTerm {
    type Err = CrbError;

    fn from_str(s: &str) -> Result<Self> {
        let idx = s
            .strip_prefix("gamma")
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|d| (1..=7).contains(d))
            .ok_or_else(|| CrbError::domain("gamma term", format!("expected gamma1..gamma7, got `{s}`")))?;
        Ok(GammaTerm::ALL[idx - 1])
    }
}

/// Rules used for the `Γ` integrals.
#[derive(Debug, Clone)]
pub struct GammaQuadrature {
    pub nodes: usize,
    legendre: Arc<QuadRule>,
    hermite: Arc<QuadRule>,
}

impl GammaQuadrature {
    pub fn new(nodes: usize) -> Result<Self> {
        Ok(Self {
            nodes,
            legendre: legendre_rule(nodes)?,
            hermite: hermite_rule(nodes)?,
        })
    }
}

impl Default for GammaQuadrature {
    fn default() -> Self {
        Self::new(DEFAULT_QUAD_NODES).expect("default node count is in range")
    }
}

/// `Γ1..Γ7` by the one-dimensional reduction.
pub fn gammas(theta: &Theta, sc: &ScenarioParams, quad: &GammaQuadrature) -> Result<GammaSet> {
    let b2 = theta.b_abs2();
    if !(b2 >= B_ABS2_THRESHOLD) {
        return Err(CrbError::SingularParameter {
            b_abs2: b2,
            threshold: B_ABS2_THRESHOLD,
        });
    }
    let c = sc.effective_noise(theta)?;
    let amp = sc.amp;
    let ct = CoeffTable::new(&sc.constellation, amp, c, b2);
    let dc = dc_dtau(&ct, theta);
    let m = sc.constellation.order() as f64;

    let var_u = c * b2 / 2.0;
    let sd_u = var_u.sqrt();
    let outer = amp * b2 * sc.constellation.quadrant_levels().last().copied().unwrap_or(0.0);
    let hi = outer + REACH_SIGMAS * sd_u;
    let norm = 2.0 / (std::f64::consts::PI * m * c * b2).sqrt();

    // f_U is even, as are all four integrands, so integrate the half line and double.
    let [mass, j1, j2, j3, j4] = composite_legendre_many(
        |u| {
            let s: AxisSums = ct.axis(u);
            let dens = norm * (s.log_scale - u * u / (c * b2)).exp() * s.f;
            let phi_b = s.beta_sinh_ratio();
            let p = u * phi_b / b2 - s.gamma_cosh_ratio();
            let q3 = dc * b2 * s.beta2_cosh_ratio() - 2.0 * dc / c * u * phi_b;
            [dens, dens * p * p, dens * phi_b * phi_b, dens * q3 * p, dens * q3 * q3]
        },
        0.0,
        hi,
        sd_u,
        &quad.legendre,
    )?;
    debug_assert!((2.0 * mass - 1.0).abs() < 1e-9, "mixture mass {}", 2.0 * mass);
    let (j1, j2, j3, j4) = (2.0 * j1, 2.0 * j2, 2.0 * j3, 2.0 * j4);

    let m2 = b2 * (amp * amp * b2 * sc.p2() + c) / 2.0;
    let cross = m2 * j2 / (b2 * b2);
    let (br, bi) = (theta.b.re, theta.b.im);
    Ok(GammaSet {
        g1: 4.0 * amp * amp * j2,
        g2: 4.0 * br * br * j1 + 4.0 * bi * bi * cross,
        g3: 4.0 * bi * bi * j1 + 4.0 * br * br * cross,
        g4: j4,
        g5: 4.0 * br * bi * (j1 - cross),
        g6: 2.0 * br * j3,
        g7: 2.0 * bi * j3,
    })
}

/// `Γ1..Γ7` as expectations over `(x, y)`, one tensor Hermite grid per symbol.
///
/// Much slower than [`gammas`] but regular at `b = 0`.
pub fn gammas_xy(theta: &Theta, sc: &ScenarioParams, quad: &GammaQuadrature) -> Result<GammaSet> {
    let c = sc.effective_noise(theta)?;
    let amp = sc.amp;
    let ct = CoeffTable::new(&sc.constellation, amp, c, theta.b_abs2());
    let rule = &quad.hermite;
    let sc_c = c.sqrt();
    let mut acc = [0.0; 7];
    for s in sc.constellation.points() {
        let centre = theta.b * s * amp;
        for (xi, wi) in rule.nodes.iter().zip(&rule.weights) {
            for (yj, wj) in rule.nodes.iter().zip(&rule.weights) {
                let x = centre.re + sc_c * xi;
                let y = centre.im + sc_c * yj;
                let d = f_derivs(x, y, theta, &ct);
                let (r1, r2, r3, rf) = (d.q1 / d.f, d.q2 / d.f, d.q3 / d.f, d.f_small / d.f);
                let vals = [rf * rf, r1 * r1, r2 * r2, r3 * r3, r1 * r2, r3 * r1, r3 * r2];
                let w = wi * wj;
                for (a, v) in acc.iter_mut().zip(vals) {
                    if !v.is_finite() {
                        return Err(CrbError::NonFiniteIntegrand { context: "gammas_xy", node: x.hypot(y) });
                    }
                    *a += w * v;
                }
            }
        }
    }
    let scale = 1.0 / (std::f64::consts::PI * sc.constellation.order() as f64);
    let g = acc.map(|v| v * scale);
    Ok(GammaSet {
        g1: 4.0 * amp * amp * g[0],
        g2: g[1],
        g3: g[2],
        g4: g[3],
        g5: g[4],
        g6: g[5],
        g7: g[6],
    })
}

/// [`gammas`], falling back to [`gammas_xy`] for `|b|²` under the threshold.
pub fn gammas_any(theta: &Theta, sc: &ScenarioParams, quad: &GammaQuadrature) -> Result<GammaSet> {
    if theta.b_abs2() >= B_ABS2_THRESHOLD {
        gammas(theta, sc, quad)
    } else {
        gammas_xy(theta, sc, quad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo,
    /// The modified FIM, data symbols treated as known.
    Modified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub m: Matrix5<f64>,
    pub provenance: Provenance,
    pub mode: EstimationMode,
    /// Entrywise standard errors, Monte-Carlo estimates only.
    pub se: Option<Matrix5<f64>>,
}

impl FisherMatrix {
    /// Extreme eigenvalues `(min, max)`.
    pub fn eigen_range(&self) -> (f64, f64) {
        let ev = SymmetricEigen::new(self.m).eigenvalues;
        (ev.min(), ev.max())
    }

    pub fn is_psd(&self) -> bool {
        let (lo, hi) = self.eigen_range();
        lo >= -PSD_TOL * hi.abs()
    }

    /// Condition number after symmetric diagonal scaling to a unit diagonal.
    pub fn equilibrated_condition(&self) -> f64 {
        match equilibrate(&self.m) {
            Some((_, scaled)) => {
                let ev = SymmetricEigen::new(scaled).eigenvalues;
                let (lo, hi) = (ev.min(), ev.max());
                if lo <= 0.0 {
                    f64::INFINITY
                } else {
                    hi / lo
                }
            }
            None => f64::INFINITY,
        }
    }
}

fn equilibrate(m: &Matrix5<f64>) -> Option<(Matrix5<f64>, Matrix5<f64>)> {
    let mut d = Matrix5::<f64>::zeros();
    for i in 0..5 {
        let v = m[(i, i)];
        if !(v > 0.0 && v.is_finite()) {
            return None;
        }
        d[(i, i)] = 1.0 / v.sqrt();
    }
    Some((d, d * m * d))
}

struct Energies {
    e1p: f64,
    e2p: f64,
    e1d: f64,
    cross: num_complex::Complex64,
    l: f64,
    n: f64,
}

fn energies(sc: &ScenarioParams) -> Energies {
    Energies {
        e1p: sc.pilot_energy_1(),
        e2p: sc.pilot_energy_2(),
        e1d: sc.data_energy_1(),
        cross: sc.pilot_cross(),
        l: sc.pilot_len() as f64,
        n: sc.data_len() as f64,
    }
}

fn mirror(m: &mut Matrix5<f64>) {
    for i in 0..5 {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// Pilot-block Gaussian information shared by the exact and modified FIMs.
fn pilot_block(m: &mut Matrix5<f64>, amp: f64, c: f64, e: &Energies) {
    let k = 2.0 * amp * amp / c;
    m[(0, 0)] += k * e.e1p;
    m[(1, 1)] += k * e.e1p;
    m[(2, 2)] += k * e.e2p;
    m[(3, 3)] += k * e.e2p;
    m[(0, 2)] += k * e.cross.re;
    m[(0, 3)] -= k * e.cross.im;
    m[(1, 2)] += k * e.cross.im;
    m[(1, 3)] += k * e.cross.re;
}

/// Exact FIM.
pub fn exact_fim(theta: &Theta, sc: &ScenarioParams, quad: &GammaQuadrature) -> Result<FisherMatrix> {
    exact_fim_with(theta, sc, quad, None)
}

/// Exact FIM with the sign of one `Γ` contribution optionally reversed.
///
/// With a flip the positive-semidefiniteness check is skipped, since the
/// perturbed matrix is only meant for comparison against an oracle.
pub fn exact_fim_with(
    theta: &Theta,
    sc: &ScenarioParams,
    quad: &GammaQuadrature,
    flip: Option<GammaTerm>,
) -> Result<FisherMatrix> {
    theta.validate()?;
    sc.validate()?;
    let amp = sc.amp;
    let c = sc.effective_noise(theta)?;
    let e = energies(sc);
    let b2 = theta.b_abs2();
    let (br, bi) = (theta.b.re, theta.b.im);
    let a2 = amp * amp;
    let dc = a2 * sc.sigma2;
    let mut m = Matrix5::<f64>::zeros();

    pilot_block(&mut m, amp, c, &e);
    // τ enters the pilot and data blocks alike through C
    let resid = (e.n + e.l) * c + e.n * a2 * b2 * sc.p2();
    m[(4, 4)] = -(e.n + e.l) * dc * dc / (c * c) + 2.0 * dc * dc / (c * c * c) * resid;

    if e.n > 0.0 {
        let g = gammas_any(theta, sc, quad)?;
        let sign = |t: GammaTerm| if flip == Some(t) { -1.0 } else { 1.0 };
        let ct = CoeffTable::new(&sc.constellation, amp, c, b2);
        let sqrt_m = sc.constellation.sqrt_order();
        let order = sc.constellation.order() as f64;
        let s_beta2: f64 = ct.beta.iter().map(|b| b * b).sum();
        let s_gamma: f64 = ct.gamma.iter().sum();
        let n = e.n;

        let k = 2.0 * a2 / c;
        let aa = k * e.e1d - b2 * e.e1d * (8.0 * a2 * s_beta2 / sqrt_m - sign(GammaTerm::Gamma1) * g.g1);
        m[(0, 0)] += aa;
        m[(1, 1)] += aa;

        let sg2 = 32.0 * n / order * s_gamma * s_gamma;
        m[(2, 2)] += -sg2 * bi * bi + 2.0 * n * sign(GammaTerm::Gamma2) * g.g2;
        m[(3, 3)] += -sg2 * br * br + 2.0 * n * sign(GammaTerm::Gamma3) * g.g3;
        m[(2, 3)] += sg2 * br * bi + 2.0 * n * sign(GammaTerm::Gamma5) * g.g5;

        let bt = 8.0 * n * dc / sqrt_m * s_beta2;
        m[(2, 4)] += bt * br + 2.0 * n * sign(GammaTerm::Gamma6) * g.g6;
        m[(3, 4)] += bt * bi + 2.0 * n * sign(GammaTerm::Gamma7) * g.g7;

        let b55: f64 = ct
            .beta
            .iter()
            .map(|b| 2.0 * dc * dc / sqrt_m * (b.powi(4) * b2 * b2 + 4.0 * b * b * b2 / c))
            .sum();
        m[(4, 4)] += -2.0 * n * b55 + 2.0 * n * sign(GammaTerm::Gamma4) * g.g4;
    }
    mirror(&mut m);

    let fim = FisherMatrix {
        m,
        provenance: Provenance::Analytic,
        mode: EstimationMode::of(sc),
        se: None,
    };
    if flip.is_none() {
        let (lo, hi) = fim.eigen_range();
        if lo < -PSD_TOL * hi.abs() {
            return Err(CrbError::NotPositiveSemidefinite { min_eig: lo, max_eig: hi });
        }
    }
    Ok(fim)
}

/// Modified FIM: data symbols treated as known, then averaged.
pub fn mfim(theta: &Theta, sc: &ScenarioParams) -> Result<FisherMatrix> {
    theta.validate()?;
    sc.validate()?;
    let amp = sc.amp;
    let c = sc.effective_noise(theta)?;
    let e = energies(sc);
    let dc = amp * amp * sc.sigma2;
    let mut m = Matrix5::<f64>::zeros();
    pilot_block(&mut m, amp, c, &e);
    let k = 2.0 * amp * amp / c;
    m[(0, 0)] += k * e.e1d;
    m[(1, 1)] += k * e.e1d;
    m[(2, 2)] += k * e.n * sc.p2();
    m[(3, 3)] += k * e.n * sc.p2();
    m[(4, 4)] = (e.n + e.l) * dc * dc / (c * c);
    mirror(&mut m);
    Ok(FisherMatrix {
        m,
        provenance: Provenance::Modified,
        mode: EstimationMode::of(sc),
        se: None,
    })
}

/// Closed-form `(MCRB_a, MCRB_b)`.
pub fn mcrb(theta: &Theta, sc: &ScenarioParams) -> Result<(f64, f64)> {
    theta.validate()?;
    sc.validate()?;
    let amp = sc.amp;
    let c = sc.effective_noise(theta)?;
    let e = energies(sc);
    let ea = e.e1p + e.e1d;
    let eb = e.e2p + e.n * sc.p2();
    let x2 = e.cross.norm_sqr();
    let den = ea * eb - x2;
    if !(den > 0.0) || !(den > 1e-14 * ea * eb) {
        return Err(CrbError::DegenerateDenominator { value: den });
    }
    let a2 = amp * amp;
    Ok((c * eb / (a2 * den), c / (a2 * eb) * (1.0 + x2 / den)))
}

/// `(CRB_a, CRB_b)`: traces of the `a` and `b` blocks of `I⁻¹`.
pub fn crb(fim: &FisherMatrix) -> Result<(f64, f64)> {
    let ill = |condition| CrbError::IllConditioned {
        mode: fim.mode,
        condition,
    };
    let (d, scaled) = equilibrate(&fim.m).ok_or(ill(f64::INFINITY))?;
    let eig = SymmetricEigen::new(scaled);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 0.0) {
        return Err(ill(f64::INFINITY));
    }
    let cond = hi / lo;
    if !(cond < MAX_CONDITION) {
        return Err(ill(cond));
    }
    let inv_ev = eig.eigenvalues.map(|v| 1.0 / v);
    let inv_scaled = eig.eigenvectors * Matrix5::from_diagonal(&inv_ev) * eig.eigenvectors.transpose();
    let inv = d * inv_scaled * d;
    Ok((inv[(0, 0)] + inv[(1, 1)], inv[(2, 2)] + inv[(3, 3)]))
}

/// Everything one scenario evaluation reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub mode: EstimationMode,
    pub crb_a: f64,
    pub crb_b: f64,
    pub mcrb_a: f64,
    pub mcrb_b: f64,
    /// Equilibrated condition number of the exact FIM.
    pub condition: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<GammaSet>,
}

pub fn evaluate(theta: &Theta, sc: &ScenarioParams, quad: &GammaQuadrature) -> Result<CrbReport> {
    let fim = exact_fim(theta, sc, quad)?;
    let (crb_a, crb_b) = crb(&fim)?;
    let (mcrb_a, mcrb_b) = mcrb(theta, sc)?;
    let gammas = if sc.data_len() > 0 {
        Some(gammas_any(theta, sc, quad)?)
    } else {
        None
    };
    Ok(CrbReport {
        mode: fim.mode,
        crb_a,
        crb_b,
        mcrb_a,
        mcrb_b,
        condition: fim.equilibrated_condition(),
        gammas,
    })
}
