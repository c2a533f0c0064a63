//! Square QAM alphabets.
//!
//! A square constellation of order `M = 2^(2p)` is the grid
//! `{±d_p(2i-1) ± j d_p(2l-1)}`, `i, l = 1..2^(p-1)`, where `d_p` is half the
//! distance between neighbouring points. Fixing the average power `P` fixes
//! the spacing through `P = (M-1) d² / 6`.

use num_complex::Complex64;

use crate::error::{CrbError, Result};

/// Largest supported half-log-order (`M = 2^30`); far beyond any practical use.
const MAX_HALF_LOG_ORDER: u32 = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    half_log_order: u32,
    order: usize,
    spacing: f64,
    power: f64,
    points: Vec<Complex64>,
    levels: Vec<f64>,
}

impl Constellation {
    /// Build the `M = 2^(2p)` square QAM constellation with average power `power`.
    pub fn new(half_log_order: u32, power: f64) -> Result<Self> {
        check_half_log_order(half_log_order)?;
        if !(power.is_finite() && power > 0.0) {
            return Err(CrbError::domain(
                "P2",
                format!("average power must be finite and positive, got {power}"),
            ));
        }
        let order = 1usize << (2 * half_log_order);
        let spacing = (6.0 * power / (order - 1) as f64).sqrt();
        Ok(Self::assemble(half_log_order, spacing / 2.0, power))
    }

    /// Build from the order `M` (must be a power of four, at least 4).
    pub fn with_order(order: usize, power: f64) -> Result<Self> {
        Self::new(half_log_order_of(order)?, power)
    }

    /// Build from a given half-distance `d_p` rather than a power.
    pub fn with_half_spacing(half_log_order: u32, half_spacing: f64) -> Result<Self> {
        check_half_log_order(half_log_order)?;
        if !(half_spacing.is_finite() && half_spacing > 0.0) {
            return Err(CrbError::domain("d_p", "half spacing must be finite and positive"));
        }
        let order = (1usize << (2 * half_log_order)) as f64;
        let d = 2.0 * half_spacing;
        Ok(Self::assemble(half_log_order, half_spacing, (order - 1.0) * d * d / 6.0))
    }

    fn assemble(half_log_order: u32, half_spacing: f64, power: f64) -> Self {
        let order = 1usize << (2 * half_log_order);
        let per_axis = 1usize << (half_log_order - 1);
        let levels: Vec<f64> = (1..=per_axis)
            .map(|i| (2 * i - 1) as f64 * half_spacing)
            .collect();
        let mut points = Vec::with_capacity(order);
        for &re in &levels {
            for &im in &levels {
                for (sr, si) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                    points.push(Complex64::new(sr * re, si * im));
                }
            }
        }
        Self {
            half_log_order,
            order,
            spacing: 2.0 * half_spacing,
            power,
            points,
            levels,
        }
    }

    pub fn half_log_order(&self) -> u32 {
        self.half_log_order
    }

    /// Constellation size `M`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Intersymbol distance `d`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `d_p = d / 2`.
    pub fn half_spacing(&self) -> f64 {
        self.spacing / 2.0
    }

    /// Average symbol power `(M-1) d² / 6`.
    pub fn power(&self) -> f64 {
        self.power
    }

    /// All `M` points in canonical order: level index `i` (real part), then
    /// `l` (imaginary part), then the sign quadrant `(+,+), (-,+), (+,-), (-,-)`.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// First-quadrant amplitude levels `(2i-1) d_p`, ascending.
    pub fn quadrant_levels(&self) -> &[f64] {
        &self.levels
    }

    /// First-quadrant points `Q1`.
    pub fn first_quadrant(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.points.iter().copied().step_by(4)
    }

    /// `sqrt(M)`, which the bound expressions use repeatedly.
    pub fn sqrt_order(&self) -> f64 {
        (1u64 << self.half_log_order) as f64
    }
}

fn check_half_log_order(p: u32) -> Result<()> {
    if p == 0 || p > MAX_HALF_LOG_ORDER {
        return Err(CrbError::domain(
            "p",
            format!("half-log-order must be in 1..={MAX_HALF_LOG_ORDER}, got {p}"),
        ));
    }
    Ok(())
}

/// Recover `p` from a square QAM order `M = 2^(2p)`.
pub fn half_log_order_of(order: usize) -> Result<u32> {
    if order < 4 || !order.is_power_of_two() || !order.trailing_zeros().is_multiple_of(2) {
        return Err(CrbError::domain(
            "M",
            format!("{order} is not a square QAM order 2^(2p) with p >= 1"),
        ));
    }
    Ok(order.trailing_zeros() / 2)
}
