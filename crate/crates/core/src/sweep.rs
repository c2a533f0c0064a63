//! Configuration-driven evaluation, averaged sweeps and the validation suite.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{half_log_order_of, Constellation};
use crate::error::{CrbError, Result};
use crate::fim::{
    crb, evaluate, exact_fim_with, gammas, mcrb, CrbReport, EstimationMode, GammaQuadrature, GammaTerm,
    DEFAULT_QUAD_NODES,
};
use crate::likelihood::{log_likelihood, LikelihoodMethod};
use crate::oracle::{check_identities, compare_fim, mc_fim, upper_entries};
use crate::quadrature::{gaussian_moment_integral, hermite_rule, MAX_NODES, MIN_NODES};
use crate::signal_model::{
    draw_symbols, make_pilots, simulate_observation, snr_to_sigma2, ChannelRealization, Observation, ScenarioParams,
    Theta,
};
use crate::stats::{split_seed, KahanSum};

fn default_modes() -> Vec<EstimationMode> {
    vec![EstimationMode::SemiBlind, EstimationMode::PilotOnly]
}
fn default_m_list() -> Vec<usize> {
    vec![4, 16, 64, 256]
}
fn default_n() -> NSpec {
    NSpec::One(32)
}
fn default_l() -> usize {
    8
}
fn default_realizations() -> usize {
    100
}
fn default_rho() -> f64 {
    0.3
}
fn default_seed() -> u64 {
    1
}
fn one() -> f64 {
    1.0
}
fn default_m1() -> usize {
    4
}
fn default_quad_nodes() -> usize {
    DEFAULT_QUAD_NODES
}
fn default_m() -> usize {
    4
}
fn default_snr() -> f64 {
    10.0
}

/// SNR grid in dB: an explicit list or an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Default for SnrSpec {
    fn default() -> Self {
        SnrSpec::Range { start: 0.0, stop: 30.0, step: 5.0 }
    }
}

impl SnrSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            SnrSpec::List(v) => {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(CrbError::domain("snr_db", "list must be non-empty and finite"));
                }
                Ok(v.clone())
            }
            SnrSpec::Range { start, stop, step } => {
                if !(step.is_finite() && *step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
                    return Err(CrbError::domain("snr_db", "range needs finite start <= stop and step > 0"));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..count).map(|k| start + k as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NSpec {
    One(usize),
    List(Vec<usize>),
}

impl NSpec {
    pub fn values(&self) -> Vec<usize> {
        match self {
            NSpec::One(n) => vec![*n],
            NSpec::List(v) => v.clone(),
        }
    }
}

/// Sweep over modes, orders, SNRs and data lengths, averaged over channel draws.
/// `(mode, M, snr_db, N, L)` with the lengths actually used.
pub type Cell = (EstimationMode, usize, f64, usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_modes")]
    pub modes: Vec<EstimationMode>,
    #[serde(default = "default_m_list", alias = "M_list")]
    pub m_list: Vec<usize>,
    #[serde(default)]
    pub snr_db: SnrSpec,
    #[serde(default = "default_n", alias = "N")]
    pub n: NSpec,
    #[serde(default = "default_l", alias = "L")]
    pub l: usize,
    /// Data length in blind mode; `N + L` when absent.
    #[serde(default)]
    pub blind_n: Option<usize>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "one", alias = "A")]
    pub amp: f64,
    /// Power of T1; equal to `p2` when absent.
    #[serde(default, alias = "P1")]
    pub p1: Option<f64>,
    #[serde(default = "one", alias = "P2")]
    pub p2: f64,
    /// Order of T1's own data constellation.
    #[serde(default = "default_m1", alias = "M1")]
    pub m1: usize,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    #[serde(default)]
    pub output_path: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn check_common(rho: f64, amp: f64, p1: f64, p2: f64, m1: usize, quad_nodes: usize) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(CrbError::domain("rho", format!("must lie in [0, 1), got {rho}")));
    }
    for (name, v) in [("A", amp), ("P1", p1), ("P2", p2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CrbError::domain(name, format!("must be finite and positive, got {v}")));
        }
    }
    half_log_order_of(m1)?;
    if !(MIN_NODES..=MAX_NODES).contains(&quad_nodes) {
        return Err(CrbError::domain("quad_nodes", format!("must be in {MIN_NODES}..={MAX_NODES}")));
    }
    Ok(())
}

fn check_pilot_len(l: usize) -> Result<()> {
    if l < 2 || !l.is_multiple_of(2) {
        return Err(CrbError::domain("L", format!("pilot modes need an even L >= 2, got {l}")));
    }
    Ok(())
}

impl SweepConfig {
    pub fn p1(&self) -> f64 {
        self.p1.unwrap_or(self.p2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(CrbError::domain("modes", "at least one mode is required"));
        }
        if self.m_list.is_empty() {
            return Err(CrbError::domain("M_list", "at least one order is required"));
        }
        for &m in &self.m_list {
            half_log_order_of(m)?;
        }
        self.snr_db.values()?;
        if self.n.values().is_empty() {
            return Err(CrbError::domain("N", "at least one data length is required"));
        }
        if self.realizations == 0 {
            return Err(CrbError::domain("realizations", "must be at least 1"));
        }
        check_common(self.rho, self.amp, self.p1(), self.p2, self.m1, self.quad_nodes)?;
        if self.modes.iter().any(|m| *m != EstimationMode::Blind) {
            check_pilot_len(self.l)?;
        }
        for (mode, _, _, n, l) in self.cells()? {
            if n + l == 0 {
                return Err(CrbError::domain("N", format!("{mode} cell has no symbols")));
            }
        }
        Ok(())
    }

    /// `(mode, N, L)` actually used for a requested data length.
    pub fn lengths(&self, mode: EstimationMode, n: usize) -> (usize, usize) {
        match mode {
            EstimationMode::SemiBlind => (n, self.l),
            EstimationMode::PilotOnly => (0, self.l),
            EstimationMode::Blind => (self.blind_n.unwrap_or(n + self.l), 0),
        }
    }

    /// Cells in output order, with repeated cells (e.g. pilot-only over several N) removed.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let snrs = self.snr_db.values()?;
        let mut out: Vec<Cell> = Vec::new();
        for &mode in &self.modes {
            for &m in &self.m_list {
                for &snr in &snrs {
                    for n in self.n.values() {
                        let (ne, le) = self.lengths(mode, n);
                        let cell = (mode, m, snr, ne, le);
                        if !out.contains(&cell) {
                            out.push(cell);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One averaged sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: EstimationMode,
    #[serde(rename = "M")]
    pub m: usize,
    pub snr_db: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub crb_a: f64,
    pub crb_b: f64,
    pub mcrb_a: f64,
    pub mcrb_b: f64,
    pub realizations_used: usize,
    pub failures: usize,
}

/// Errors that mark a single realisation as numerically failed rather than the whole run.
pub fn is_numerical_failure(e: &CrbError) -> bool {
    matches!(
        e,
        CrbError::SingularParameter { .. }
            | CrbError::NonFiniteIntegrand { .. }
            | CrbError::NotPositiveSemidefinite { .. }
            | CrbError::IllConditioned { .. }
            | CrbError::DegenerateDenominator { .. }
    )
}

/// Scenario for one cell and one realisation.
#[allow(clippy::too_many_arguments)]
pub fn build_scenario(
    m: usize,
    snr_db: f64,
    n: usize,
    l: usize,
    amp: f64,
    p1: f64,
    p2: f64,
    s1: &[Complex64],
) -> Result<ScenarioParams> {
    let constellation = Constellation::with_order(m, p2)?;
    let (t1, t2) = if l > 0 { make_pilots(l, p1, p2)? } else { (vec![], vec![]) };
    if s1.len() < n {
        return Err(CrbError::LengthMismatch { what: "s1", expected: n, got: s1.len() });
    }
    ScenarioParams::new(amp, snr_to_sigma2(snr_db, p2), p1, constellation, t1, t2, s1[..n].to_vec())
}

struct Realization {
    theta: Theta,
    s1: Vec<Complex64>,
}

type Bounds = (f64, f64, f64, f64);

fn bounds_for(theta: &Theta, sc: &ScenarioParams, quad: &GammaQuadrature) -> Result<Bounds> {
    let fim = exact_fim_with(theta, sc, quad, None)?;
    let (ca, cb) = crb(&fim)?;
    let (ma, mb) = mcrb(theta, sc)?;
    let all = [ca, cb, ma, mb];
    if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CrbError::IllConditioned { mode: fim.mode, condition: f64::INFINITY });
    }
    Ok((ca, cb, ma, mb))
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    let quad = GammaQuadrature::new(cfg.quad_nodes)?;
    let p1 = cfg.p1();
    let own = Constellation::with_order(cfg.m1, p1)?;
    let max_n = cells.iter().map(|c| c.3).max().unwrap_or(0);

    let draws: Vec<Realization> = (0..cfg.realizations)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, r as u64));
            let ch = ChannelRealization::sample(&mut rng, cfg.rho)?;
            let s1 = draw_symbols(&mut rng, &own, max_n);
            Ok(Realization { theta: ch.theta(), s1 })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.realizations).map(move |r| (c, r)))
        .collect();
    let results: Vec<Result<Option<Bounds>>> = jobs
        .par_iter()
        .map(|&(ci, r)| {
            let (_, m, snr, n, l) = cells[ci];
            let sc = build_scenario(m, snr, n, l, cfg.amp, p1, cfg.p2, &draws[r].s1)?;
            match bounds_for(&draws[r].theta, &sc, &quad) {
                Ok(b) => Ok(Some(b)),
                Err(e) if is_numerical_failure(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len());
    let mut it = results.into_iter();
    for &(mode, m, snr, n, l) in &cells {
        let mut sums = [KahanSum::default(); 4];
        let (mut used, mut failures) = (0, 0);
        for _ in 0..cfg.realizations {
            match it.next().expect("one result per job")? {
                Some((a, b, c, d)) => {
                    for (s, v) in sums.iter_mut().zip([a, b, c, d]) {
                        s.add(v);
                    }
                    used += 1;
                }
                None => failures += 1,
            }
        }
        let mean = |s: &KahanSum| if used > 0 { s.value() / used as f64 } else { f64::NAN };
        rows.push(ResultRow {
            mode,
            m,
            snr_db: snr,
            n,
            l,
            crb_a: mean(&sums[0]),
            crb_b: mean(&sums[1]),
            mcrb_a: mean(&sums[2]),
            mcrb_b: mean(&sums[3]),
            realizations_used: used,
            failures,
        });
    }
    Ok(rows)
}

/// A single scenario: explicit `theta` or a channel, or a draw from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_mode")]
    pub mode: EstimationMode,
    #[serde(default = "default_m", alias = "M")]
    pub m: usize,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Overrides `snr_db` when present.
    #[serde(default)]
    pub sigma2: Option<f64>,
    #[serde(default = "default_n_one", alias = "N")]
    pub n: usize,
    #[serde(default = "default_l", alias = "L")]
    pub l: usize,
    #[serde(default)]
    pub blind_n: Option<usize>,
    #[serde(default = "one", alias = "A")]
    pub amp: f64,
    #[serde(default, alias = "P1")]
    pub p1: Option<f64>,
    #[serde(default = "one", alias = "P2")]
    pub p2: f64,
    #[serde(default = "default_m1", alias = "M1")]
    pub m1: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub theta: Option<Theta>,
    #[serde(default)]
    pub channel: Option<ChannelRealization>,
    /// T1's data symbols; drawn from `seed` when absent.
    #[serde(default)]
    pub s1: Option<Vec<Complex64>>,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
}

fn default_mode() -> EstimationMode {
    EstimationMode::SemiBlind
}
fn default_n_one() -> usize {
    32
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ScenarioConfig {
    pub fn lengths(&self) -> (usize, usize) {
        match self.mode {
            EstimationMode::SemiBlind => (self.n, self.l),
            EstimationMode::PilotOnly => (0, self.l),
            EstimationMode::Blind => (self.blind_n.unwrap_or(self.n + self.l), 0),
        }
    }

    /// Resolve into a parameter vector and a scenario.
    pub fn resolve(&self) -> Result<(Theta, ScenarioParams)> {
        let p1 = self.p1.unwrap_or(self.p2);
        check_common(self.rho, self.amp, p1, self.p2, self.m1, self.quad_nodes)?;
        half_log_order_of(self.m)?;
        let (n, l) = self.lengths();
        if l > 0 {
            check_pilot_len(l)?;
        }
        if self.theta.is_some() && self.channel.is_some() {
            return Err(CrbError::domain("theta", "give either `theta` or `channel`, not both"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let theta = match (self.theta, self.channel) {
            (Some(t), _) => t,
            (None, Some(c)) => c.theta(),
            (None, None) => ChannelRealization::sample(&mut rng, self.rho)?.theta(),
        };
        theta.validate()?;
        let s1 = match &self.s1 {
            Some(v) => v.clone(),
            None => draw_symbols(&mut rng, &Constellation::with_order(self.m1, p1)?, n),
        };
        let mut sc = build_scenario(self.m, self.snr_db, n, l, self.amp, p1, self.p2, &s1)?;
        if let Some(s2) = self.sigma2 {
            if !(s2.is_finite() && s2 > 0.0) {
                return Err(CrbError::domain("sigma2", format!("must be positive, got {s2}")));
            }
            sc.sigma2 = s2;
        }
        Ok((theta, sc))
    }
}

pub fn eval_scenario(cfg: &ScenarioConfig) -> Result<CrbReport> {
    let (theta, sc) = cfg.resolve()?;
    evaluate(&theta, &sc, &GammaQuadrature::new(cfg.quad_nodes)?)
}

/// Fixed parameter point used by the validation suite.
pub fn canonical_theta() -> Theta {
    Theta {
        a: Complex64::new(0.6, 0.8),
        b: Complex64::new(1.2, -0.5),
        tau: 1.0,
    }
}

/// `L = 4`, `N = 8`, 10 dB, `A = P1 = P2 = 1`, 4-QAM `s1` from a fixed seed.
pub fn canonical_scenario(m: usize) -> Result<ScenarioParams> {
    let own = Constellation::new(1, 1.0)?;
    let s1 = draw_symbols(&mut ChaCha8Rng::seed_from_u64(2024), &own, 8);
    build_scenario(m, 10.0, 8, 4, 1.0, 1.0, 1.0, &s1)
}

/// Two parameter points for the expectation identities: 16-QAM at the
/// canonical point and 64-QAM at 5 dB with a different channel.
pub fn identity_points() -> Result<Vec<(Theta, ScenarioParams)>> {
    let own = Constellation::new(1, 1.0)?;
    let s1 = draw_symbols(&mut ChaCha8Rng::seed_from_u64(31), &own, 8);
    Ok(vec![
        (canonical_theta(), canonical_scenario(16)?),
        (
            Theta { a: Complex64::new(-0.3, 0.2), b: Complex64::new(0.4, 0.9), tau: 0.5 },
            build_scenario(64, 5.0, 8, 4, 1.0, 1.0, 1.0, &s1)?,
        ),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub quad_nodes: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub inject_flip: Option<GammaTerm>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            quad_nodes: DEFAULT_QUAD_NODES,
            mc_samples: 200_000,
            seed: 1,
            inject_flip: None,
        }
    }
}

pub const FIM_Z: f64 = 5.0;
pub const ZERO_Z: f64 = 3.0;
pub const DOUBLING_TOL: f64 = 1e-8;

/// Largest `|log L_direct - log L_factorized|` over random draws at order `m`.
pub fn likelihood_gap(m: usize, tuples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let own = Constellation::new(1, 1.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..tuples {
        let snr = rng.random_range(-5.0..30.0);
        let amp = rng.random_range(0.5..2.0);
        let l = 2 * rng.random_range(0..3usize);
        let n = rng.random_range(1..6usize);
        let s1 = draw_symbols(&mut rng, &own, n);
        let sc = build_scenario(m, snr, n, l, amp, 1.0, 1.0, &s1)?;
        let theta = Theta {
            a: Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            b: Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            tau: rng.random_range(0.0..3.0),
        };
        let s2 = draw_symbols(&mut rng, &sc.constellation, n);
        let obs: Observation = simulate_observation(&mut rng, &theta, &sc, &s2)?;
        let d = log_likelihood(&obs, &theta, &sc, LikelihoodMethod::Direct)?;
        let f = log_likelihood(&obs, &theta, &sc, LikelihoodMethod::Factorized)?;
        worst = worst.max((d - f).abs());
    }
    Ok(worst)
}

/// Largest relative error of the Hermite evaluation of `∫ t^k e^{-αt²-2δt}`.
pub fn moment_grid_error(nodes: usize) -> Result<f64> {
    let rule = hermite_rule(nodes)?;
    let mut worst: f64 = 0.0;
    for order in 0..=2u32 {
        for alpha in [0.5, 1.0, 2.0] {
            for delta in [0.0, 0.3, 1.0] {
                let exact = gaussian_moment_integral(order, alpha, delta)?;
                let sa = alpha.sqrt();
                let num: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * (x / sa).powi(order as i32) * (-2.0 * delta * x / sa).exp())
                    .sum::<f64>()
                    / sa;
                let err = if exact == 0.0 { num.abs() } else { ((num - exact) / exact).abs() };
                worst = worst.max(err);
            }
        }
    }
    Ok(worst)
}

/// Scenario points for the node-doubling check.
pub fn doubling_points() -> Result<Vec<(Theta, ScenarioParams)>> {
    let mut out = Vec::new();
    let own = Constellation::new(1, 1.0)?;
    let s1 = draw_symbols(&mut ChaCha8Rng::seed_from_u64(7), &own, 8);
    let thetas = [
        canonical_theta(),
        Theta { a: Complex64::new(-0.3, 0.2), b: Complex64::new(0.4, 0.9), tau: 0.5 },
        Theta { a: Complex64::new(0.1, -1.1), b: Complex64::new(-1.5, -0.2), tau: 2.2 },
    ];
    for m in [4, 16, 64, 256] {
        for snr in [0.0, 10.0, 20.0, 30.0] {
            for th in thetas {
                out.push((th, build_scenario(m, snr, 8, 4, 1.0, 1.0, 1.0, &s1)?));
            }
        }
    }
    Ok(out)
}

/// Worst relative `Γ` change from `nodes` to `2·nodes` (capped at the rule limit).
pub fn doubling_error(nodes: usize) -> Result<f64> {
    let q1 = GammaQuadrature::new(nodes)?;
    let q2 = GammaQuadrature::new((2 * nodes).min(MAX_NODES))?;
    let pts = doubling_points()?;
    let errs: Vec<Result<f64>> = pts
        .par_iter()
        .map(|(th, sc)| Ok(gammas(th, sc, &q2)?.max_rel_diff(&gammas(th, sc, &q1)?)))
        .collect();
    let mut worst: f64 = 0.0;
    for e in errs {
        worst = worst.max(e?);
    }
    Ok(worst)
}

/// Run every check; a check that cannot run is reported as failed.
pub fn validate(opts: &ValidateOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |name: &str, r: Result<(bool, String)>| {
        let (pass, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        out.push(CheckResult { name: name.to_string(), pass, detail });
    };

    push(
        "likelihood_equivalence",
        (|| {
            let mut worst: f64 = 0.0;
            for (i, m) in [4, 16, 64, 256].into_iter().enumerate() {
                worst = worst.max(likelihood_gap(m, 100, split_seed(opts.seed, i as u64))?);
            }
            Ok((worst <= 1e-9, format!("max |direct - factorized| = {worst:.3e}")))
        })(),
    );

    push(
        "quadrature_moments",
        (|| {
            // generator self-test at the default order; quad_nodes only drives the Γ integrals
            let e = moment_grid_error(DEFAULT_QUAD_NODES)?;
            Ok((e <= 1e-10, format!("n={DEFAULT_QUAD_NODES}: max relative error = {e:.3e}")))
        })(),
    );

    push(
        "gamma_node_doubling",
        (|| {
            let e = doubling_error(opts.quad_nodes)?;
            let hi = (2 * opts.quad_nodes).min(MAX_NODES);
            Ok((e <= DOUBLING_TOL, format!("n={} vs n={hi}: max relative change = {e:.3e}", opts.quad_nodes)))
        })(),
    );

    let theta = canonical_theta();
    push(
        "expectation_identities",
        (|| {
            let n = opts.mc_samples.max(crate::oracle::MIN_IDENTITY_SAMPLES);
            let mut reps = Vec::new();
            for (k, (th, sc)) in identity_points()?.into_iter().enumerate() {
                reps.extend(check_identities(&th, &sc, n, split_seed(opts.seed, 100 + k as u64))?);
            }
            let bad: Vec<String> = reps
                .iter()
                .filter(|r| !r.pass)
                .map(|r| format!("{} (z = {:.2})", r.name, r.z_score))
                .collect();
            let worst = reps.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max);
            Ok(if bad.is_empty() {
                (true, format!("{} identities, max |z| = {worst:.2}", reps.len()))
            } else {
                (false, format!("failed: {}", bad.join(", ")))
            })
        })(),
    );

    push(
        "mc_fim",
        (|| {
            let sc = canonical_scenario(4)?;
            let quad = GammaQuadrature::new(opts.quad_nodes)?;
            let analytic = exact_fim_with(&theta, &sc, &quad, opts.inject_flip)?;
            let n = opts.mc_samples.max(crate::oracle::MIN_FIM_SAMPLES);
            let mc = mc_fim(&theta, &sc, n, opts.seed)?;
            let (bad, worst) = fim_failures(&analytic, &mc);
            Ok(if bad.is_empty() {
                (true, format!("15 entries, max |z| = {worst:.2}"))
            } else {
                (false, format!("failed: {}", bad.join(", ")))
            })
        })(),
    );
    out
}

/// Entries outside `5 SE`, plus the structural zeros outside `3 SE`; also the largest `|z|`.
pub fn fim_failures(analytic: &crate::fim::FisherMatrix, mc: &crate::fim::FisherMatrix) -> (Vec<String>, f64) {
    let checks = compare_fim(analytic, mc, FIM_Z);
    let mut bad: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} (z = {:.2})", c.label(), c.z))
        .collect();
    let se = mc.se.unwrap_or_default();
    for (i, j) in [(0, 1), (0, 4), (1, 4)] {
        let z = mc.m[(i, j)] / se[(i, j)];
        if analytic.m[(i, j)] != 0.0 || !(z.abs() <= ZERO_Z) {
            bad.push(format!("zero {} (z = {z:.2})", crate::oracle::PARAM_NAMES[i].to_owned() + "/" + crate::oracle::PARAM_NAMES[j]));
        }
    }
    let worst = checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    debug_assert_eq!(checks.len(), upper_entries().count());
    (bad, worst)
}
