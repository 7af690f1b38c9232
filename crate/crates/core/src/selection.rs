//! Data-driven choice of the regularization parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::PenaltyTable;
use crate::smoothers::one_minus_h_norm2;
use crate::spectral::SpectralData;

/// How the noise level enters the contrast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SigmaMode {
    Known { sigma2: f64 },
    /// Plug in `σ̂²_α` at every grid point.
    Unknown,
}

/// Which penalty column drives the contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    /// `Pen_u + (1 + γ) Q⁺`.
    #[default]
    Adaptive,
    /// Unbiased risk estimation, `Pen_u` alone.
    Unbiased,
    /// Prediction-residual contrast with `Pen_CV`.
    CrossValidation,
}

impl PenaltyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Adaptive => "adaptive",
            PenaltyKind::Unbiased => "unbiased",
            PenaltyKind::CrossValidation => "cross_validation",
        }
    }
}

/// Options for the residual variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VarianceOptions {
    /// Add the residual orthogonal to the design's column space (raw-matrix
    /// input only) as extra pure-noise degrees of freedom.
    #[serde(default)]
    pub include_orthogonal: bool,
}

/// `‖β̂_0 − β̂_α‖² = Σ (1 − h(k))² y(k)²`.
pub fn smoothing_residual(data: &SpectralData, h: &[f64]) -> f64 {
    h.iter()
        .zip(&data.y)
        .map(|(h, y)| ((1.0 - h) * y).powi(2))
        .sum()
}

/// `‖Y − Xβ̂_α‖²` restricted to the column space: `Σ λ (1 − h)² y²`.
pub fn prediction_residual(data: &SpectralData, h: &[f64]) -> f64 {
    h.iter()
        .zip(&data.y)
        .zip(data.spectrum.eigenvalues())
        .map(|((h, y), l)| l * ((1.0 - h) * y).powi(2))
        .sum()
}

fn check_len(data: &SpectralData, h: &[f64]) -> Result<()> {
    if h.len() != data.y.len() {
        return Err(Error::Dimension {
            expected: data.y.len(),
            actual: h.len(),
        });
    }
    Ok(())
}

/// `Σ (1 − h)² y² + σ² Pen`.
pub fn contrast_known_sigma(data: &SpectralData, h: &[f64], pen: f64, sigma2: f64) -> Result<f64> {
    check_len(data, h)?;
    if !(sigma2 >= 0.0) {
        return Err(Error::Precondition(format!(
            "sigma^2 must be nonnegative, got {sigma2}"
        )));
    }
    Ok(smoothing_residual(data, h) + sigma2 * pen)
}

/// `σ̂²_α = Σ λ (1 − h)² y² / Σ (1 − h)²`.
pub fn sigma_hat2(data: &SpectralData, h: &[f64]) -> Result<f64> {
    sigma_hat2_with(data, h, VarianceOptions::default())
}

pub fn sigma_hat2_with(data: &SpectralData, h: &[f64], opts: VarianceOptions) -> Result<f64> {
    check_len(data, h)?;
    let mut num = prediction_residual(data, h);
    let mut den = one_minus_h_norm2(h);
    if opts.include_orthogonal {
        if let Some(o) = data.orthogonal {
            num += o.sum_sq;
            den += o.dof as f64;
        }
    }
    if den <= 0.0 {
        return Err(Error::VarianceEstimationImpossible);
    }
    Ok(num / den)
}

/// `Σ (1 − h)² y² + σ̂²_α Pen`.
pub fn contrast_unknown_sigma(data: &SpectralData, h: &[f64], pen: f64) -> Result<f64> {
    Ok(smoothing_residual(data, h) + sigma_hat2(data, h)? * pen)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub alpha_hat: f64,
    pub alpha_hat_index: usize,
    /// `σ̂²_{α̂}`, reported in unknown-σ mode only.
    pub sigma_hat2: Option<f64>,
    pub contrasts: Vec<f64>,
    /// Spectral coefficients `h_{α̂}(k) y(k)`.
    pub estimate: Vec<f64>,
}

/// Minimizes the contrast over the grid of `table`. Ties go to the largest
/// `α`.
pub fn select_alpha(
    data: &SpectralData,
    table: &PenaltyTable,
    mode: SigmaMode,
    kind: PenaltyKind,
) -> Result<SelectionResult> {
    select_alpha_with(data, table, mode, kind, VarianceOptions::default())
}

pub fn select_alpha_with(
    data: &SpectralData,
    table: &PenaltyTable,
    mode: SigmaMode,
    kind: PenaltyKind,
    opts: VarianceOptions,
) -> Result<SelectionResult> {
    if table.rows.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut contrasts = Vec::with_capacity(table.rows.len());
    let mut variances = Vec::with_capacity(table.rows.len());
    for (row, h) in table.rows.iter().zip(&table.profiles) {
        check_len(data, h)?;
        let (fit, pen) = match kind {
            PenaltyKind::Adaptive => (smoothing_residual(data, h), row.pen_total),
            PenaltyKind::Unbiased => (smoothing_residual(data, h), row.pen_u),
            PenaltyKind::CrossValidation => (prediction_residual(data, h), row.pen_cv),
        };
        let s2 = match mode {
            SigmaMode::Known { sigma2 } => {
                if !(sigma2 >= 0.0) {
                    return Err(Error::Precondition(format!(
                        "sigma^2 must be nonnegative, got {sigma2}"
                    )));
                }
                sigma2
            }
            SigmaMode::Unknown => {
                let s2 = sigma_hat2_with(data, h, opts)?;
                variances.push(s2);
                s2
            }
        };
        contrasts.push(fit + s2 * pen);
    }

    let mut best = 0;
    for (i, &c) in contrasts.iter().enumerate() {
        if c <= contrasts[best] {
            best = i;
        }
    }
    let h = &table.profiles[best];
    Ok(SelectionResult {
        alpha_hat: table.rows[best].alpha,
        alpha_hat_index: best,
        sigma_hat2: variances.get(best).copied(),
        estimate: h.iter().zip(&data.y).map(|(h, y)| h * y).collect(),
        contrasts,
    })
}
