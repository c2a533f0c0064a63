//! Gaussian quadrature rules and Gaussian-weighted expectations.
//!
//! Rules come from the symmetric Jacobi matrix of the three-term recurrence
//! (Golub-Welsch). The eigenvalues are polished with a few Newton steps on
//! the orthonormal polynomial and the weights are taken from the Christoffel
//! function, which is accurate for the tiny outer Hermite weights where
//! eigenvector components lose all relative precision.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{CrbError, Result};

pub const MIN_NODES: usize = 2;
pub const MAX_NODES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// Weight `e^{-x²}` on the real line.
    Hermite,
    /// Weight `1` on `[-1, 1]`.
    Legendre,
}

impl RuleKind {
    fn mu0(self) -> f64 {
        match self {
            RuleKind::Hermite => std::f64::consts::PI.sqrt(),
            RuleKind::Legendre => 2.0,
        }
    }

    /// Off-diagonal `b_k` of the Jacobi matrix (`x p_{k-1} = b_k p_k + ...`).
    fn off_diag(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            RuleKind::Hermite => (k / 2.0).sqrt(),
            RuleKind::Legendre => k / (4.0 * k * k - 1.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub kind: RuleKind,
    pub n: usize,
    /// Ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Orthonormal `p_n(x)`, `p_n'(x)` and `Σ_{k<n} p_k(x)²`.
fn orthonormal_eval(kind: RuleKind, n: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0 / kind.mu0().sqrt();
    let mut d_prev = 0.0;
    let mut d = 0.0;
    let mut christoffel = 0.0;
    for k in 0..n {
        christoffel += p * p;
        let b_next = kind.off_diag(k + 1);
        let b_k = if k == 0 { 0.0 } else { kind.off_diag(k) };
        let p_next = (x * p - b_k * p_prev) / b_next;
        let d_next = (p + x * d - b_k * d_prev) / b_next;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d, christoffel)
}

fn build_rule(kind: RuleKind, n: usize) -> QuadRule {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = kind.off_diag(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d, _) = orthonormal_eval(kind, n, *x);
            if d == 0.0 || !d.is_finite() {
                break;
            }
            let step = p / d;
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, _, christoffel) = orthonormal_eval(kind, n, *x);
        weights.push(1.0 / christoffel);
    }

    // enforce exact mirror symmetry
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadRule { kind, n, nodes, weights }
}

type RuleCache = Mutex<HashMap<(RuleKind, usize), Arc<QuadRule>>>;

fn cached_rule(kind: RuleKind, n: usize) -> Result<Arc<QuadRule>> {
    if !(MIN_NODES..=MAX_NODES).contains(&n) {
        return Err(CrbError::domain(
            "n",
            format!("quadrature size must be in {MIN_NODES}..={MAX_NODES}, got {n}"),
        ));
    }
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    Ok(guard
        .entry((kind, n))
        .or_insert_with(|| Arc::new(build_rule(kind, n)))
        .clone())
}

/// `n`-point Gauss-Hermite rule for `∫ g(x) e^{-x²} dx`.
pub fn hermite_rule(n: usize) -> Result<Arc<QuadRule>> {
    cached_rule(RuleKind::Hermite, n)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn legendre_rule(n: usize) -> Result<Arc<QuadRule>> {
    cached_rule(RuleKind::Legendre, n)
}

fn finite_or(context: &'static str, node: f64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CrbError::NonFiniteIntegrand { context, node })
    }
}

/// `E[g(t)]` for the density `e^{-t²/s²} / (s√π)`, with a Hermite rule.
pub fn expect_1d(mut g: impl FnMut(f64) -> f64, s2: f64, rule: &QuadRule) -> Result<f64> {
    if !(s2.is_finite() && s2 > 0.0) {
        return Err(CrbError::domain("s2", format!("must be positive, got {s2}")));
    }
    let s = s2.sqrt();
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let t = s * x;
        acc += w * finite_or("expect_1d", t, g(t))?;
    }
    Ok(acc / std::f64::consts::PI.sqrt())
}

/// `E[g(x, y)]` for the density `e^{-(x²+y²)/s²} / (π s²)`, tensor Hermite rule.
pub fn expect_2d(mut g: impl FnMut(f64, f64) -> f64, s2: f64, rule: &QuadRule) -> Result<f64> {
    if !(s2.is_finite() && s2 > 0.0) {
        return Err(CrbError::domain("s2", format!("must be positive, got {s2}")));
    }
    let s = s2.sqrt();
    let mut acc = 0.0;
    for (xi, wi) in rule.nodes.iter().zip(&rule.weights) {
        let mut row = 0.0;
        for (yj, wj) in rule.nodes.iter().zip(&rule.weights) {
            let (x, y) = (s * xi, s * yj);
            let v = g(x, y);
            if !v.is_finite() {
                return Err(CrbError::NonFiniteIntegrand { context: "expect_2d", node: x.hypot(y) });
            }
            row += wj * v;
        }
        acc += wi * row;
    }
    Ok(acc / std::f64::consts::PI)
}

/// `∫_lo^hi g(t) dt` with a Legendre rule on consecutive panels no wider than `panel`.
pub fn composite_legendre(mut g: impl FnMut(f64) -> f64, lo: f64, hi: f64, panel: f64, rule: &QuadRule) -> Result<f64> {
    composite_legendre_many(|t| [g(t)], lo, hi, panel, rule).map(|[v]| v)
}

/// Several integrals sharing the nodes of [`composite_legendre`].
pub fn composite_legendre_many<const K: usize>(
    mut g: impl FnMut(f64) -> [f64; K],
    lo: f64,
    hi: f64,
    panel: f64,
    rule: &QuadRule,
) -> Result<[f64; K]> {
    if !(panel > 0.0 && hi >= lo && hi.is_finite() && lo.is_finite()) {
        return Err(CrbError::domain("panel", "need panel > 0 and finite hi >= lo"));
    }
    let count = ((hi - lo) / panel).ceil().max(1.0) as usize;
    let width = (hi - lo) / count as f64;
    let half = width / 2.0;
    let mut total = [0.0; K];
    for k in 0..count {
        let mid = lo + (k as f64 + 0.5) * width;
        let mut part = [0.0; K];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let t = mid + half * x;
            let vals = g(t);
            for (acc, v) in part.iter_mut().zip(vals) {
                *acc += w * finite_or("composite_legendre", t, v)?;
            }
        }
        for (acc, p) in total.iter_mut().zip(part) {
            *acc += half * p;
        }
    }
    Ok(total)
}

/// Closed forms of `∫ t^k e^{-α t² - 2δ t} dt` for `k = 0, 1, 2`.
pub fn gaussian_moment_integral(order: u32, alpha: f64, delta: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(CrbError::domain("alpha", format!("must be positive, got {alpha}")));
    }
    let sp = std::f64::consts::PI.sqrt();
    let e = (delta * delta / alpha).exp();
    match order {
        0 => Ok(sp / alpha.sqrt() * e),
        1 => Ok(-sp / alpha.powf(1.5) * delta * e),
        2 => Ok(sp / alpha.powf(2.5) * delta * delta * e + 0.5 * sp / alpha.powf(1.5) * e),
        _ => Err(CrbError::domain("order", format!("only orders 0, 1, 2 are available, got {order}"))),
    }
}
