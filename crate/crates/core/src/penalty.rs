//! Penalty quantities for spectral regularization.
//!
//! Besides the classical unbiased-risk penalty `Pen_u(α) = 2 Σ h/λ` this
//! module computes the adaptive term `Q⁺(α)`. It is obtained from the
//! exponential Chebyshev bound on the quadratic noise functional
//!
//! ```text
//! η_α = Σ λ⁻¹(k) [2h_α(k) − h_α²(k)] (ξ²(k) − 1),   D(α)² = E η_α²,
//! ```
//!
//! through the root `μ_α` of `Σ F(μ ρ_α(k)) = log(D(α)/D(α°))` where
//! `ρ_α(k) = √2 λ⁻¹(k) [2h − h²] / D(α)` and
//! `F(x) = ½ log(1 − 2x) + x + 2x²/(1 − 2x)`. Then
//! `Q⁺(α) = 2 D(α) μ_α Σ ρ²/(1 − 2μ_α ρ)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::smoothers::{AlphaGrid, SmootherFamily};
use crate::spectral::Spectrum;

/// Maximum number of bisection steps in [`solve_mu`].
pub const MU_MAX_ITER: usize = 60;

/// Relative residual tolerance accepted from [`solve_mu`].
pub const MU_RESIDUAL_TOL: f64 = 1e-10;

/// Relative slack used by the penalty inequality checks.
pub const PROP_SLACK: f64 = 1e-9;

/// Default inflation `γ` of the adaptive term.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// `‖v‖₂` with scaling, safe when entries are near the overflow limit.
fn scaled_norm(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let scale = v.clone().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    v.map(|x| (x / scale).powi(2)).sum::<f64>().sqrt() * scale
}

/// `λ⁻¹(k) [2h(k) − h(k)²]`.
fn tilde_weights<'a>(
    h: &'a [f64],
    spectrum: &'a Spectrum,
) -> impl Iterator<Item = f64> + Clone + 'a {
    h.iter()
        .zip(spectrum.eigenvalues())
        .map(|(&h, &l)| (2.0 * h - h * h) / l)
}

/// `2 Σ λ⁻¹(k) h(k)`.
pub fn pen_u(h: &[f64], spectrum: &Spectrum) -> f64 {
    2.0 * h
        .iter()
        .zip(spectrum.eigenvalues())
        .map(|(h, l)| h / l)
        .sum::<f64>()
}

/// `2 Σ h(k)`.
pub fn pen_cv(h: &[f64]) -> f64 {
    2.0 * h.iter().sum::<f64>()
}

/// `D(α) = {2 Σ λ⁻²(k) [2h(k) − h(k)²]²}^{1/2}`.
pub fn d_of_alpha(h: &[f64], spectrum: &Spectrum) -> f64 {
    std::f64::consts::SQRT_2 * scaled_norm(tilde_weights(h, spectrum))
}

/// `ρ(k) = √2 λ⁻¹(k) [2h − h²] / D`, normalized so that `Σ ρ² = 1`.
pub fn rho(h: &[f64], spectrum: &Spectrum) -> Vec<f64> {
    let w = tilde_weights(h, spectrum);
    let norm = scaled_norm(w.clone());
    if norm == 0.0 {
        return vec![0.0; h.len()];
    }
    w.map(|x| x / norm).collect()
}

/// `½ log(1 − 2x) + x` for `0 ≤ x < ½`, with a series near zero where the
/// two terms cancel.
fn half_log_plus_x(x: f64) -> f64 {
    let t = 2.0 * x;
    if t < 0.05 {
        // −Σ_{n≥2} tⁿ / (2n)
        let mut term = t * t;
        let mut sum = 0.0;
        for n in 2..40 {
            let add = term / (2 * n) as f64;
            sum += add;
            if add < sum * 1e-18 {
                break;
            }
            term *= t;
        }
        -sum
    } else {
        0.5 * (-t).ln_1p() + x
    }
}

fn big_f_unchecked(x: f64) -> f64 {
    half_log_plus_x(x) + 2.0 * x * x / (1.0 - 2.0 * x)
}

/// `F(x) = ½ log(1 − 2x) + x + 2x²/(1 − 2x)` on `[0, ½)`.
pub fn big_f(x: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&x) {
        return Err(Error::Domain(format!("F(x) requires 0 <= x < 1/2, got {x}")));
    }
    Ok(big_f_unchecked(x))
}

/// Outcome of the root search for `μ_α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuSolution {
    pub mu: f64,
    /// `|Σ F(μρ) − log_ratio|` at the returned `μ`.
    pub residual: f64,
    /// The supplied log-ratio was negative and has been clamped to zero.
    pub clamped: bool,
    /// Log-ratio actually solved for.
    pub log_ratio: f64,
}

/// Objective `Σ F(μ ρ(k))`.
pub fn mu_objective(mu: f64, rho: &[f64]) -> f64 {
    rho.iter().map(|&r| big_f_unchecked(mu * r)).sum()
}

/// Upper end of the bisection bracket: `F` diverges at `μ max ρ = ½`.
pub fn mu_bracket(rho: &[f64]) -> f64 {
    let rmax = rho.iter().fold(0.0f64, |m, &r| m.max(r));
    (1.0 - 1e-12) / (2.0 * rmax)
}

/// Finds `μ ≥ 0` with `Σ F(μ ρ(k)) = log_ratio` by bisection.
pub fn solve_mu(h: &[f64], spectrum: &Spectrum, log_ratio: f64) -> Result<MuSolution> {
    if h.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSmoother);
    }
    solve_mu_rho(&rho(h, spectrum), log_ratio)
}

fn solve_mu_rho(rho: &[f64], log_ratio: f64) -> Result<MuSolution> {
    if log_ratio.is_nan() {
        return Err(Error::InvalidInput("log ratio is NaN".into()));
    }
    let clamped = log_ratio < 0.0;
    let target = log_ratio.max(0.0);
    if target == 0.0 {
        return Ok(MuSolution {
            mu: 0.0,
            residual: 0.0,
            clamped,
            log_ratio: 0.0,
        });
    }

    let (mut lo, mut hi) = (0.0, mu_bracket(rho));
    let (mut g_lo, mut g_hi) = (0.0, mu_objective(hi, rho));
    for _ in 0..MU_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = mu_objective(mid, rho);
        if g < target {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
            g_hi = g;
        }
    }
    let (mu, residual) = if (g_lo - target).abs() <= (g_hi - target).abs() {
        (lo, (g_lo - target).abs())
    } else {
        (hi, (g_hi - target).abs())
    };
    let tolerance = MU_RESIDUAL_TOL * target.max(1.0);
    if residual > tolerance {
        return Err(Error::RootNotConverged {
            residual,
            tolerance,
        });
    }
    Ok(MuSolution {
        mu,
        residual,
        clamped,
        log_ratio: target,
    })
}

/// Full breakdown of the adaptive penalty at one `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptivePenalty {
    pub d: f64,
    pub mu: MuSolution,
    pub q_plus: f64,
}

/// Computes `D(α)`, `μ_α` and `Q⁺(α)` against the reference `D(α°) = d_ref`.
pub fn adaptive_penalty(h: &[f64], spectrum: &Spectrum, d_ref: f64) -> Result<AdaptivePenalty> {
    if !(d_ref > 0.0 && d_ref.is_finite()) {
        return Err(Error::Precondition(format!(
            "reference D(alpha°) must be positive, got {d_ref}"
        )));
    }
    if h.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSmoother);
    }
    let d = d_of_alpha(h, spectrum);
    let rho = rho(h, spectrum);
    let mu = solve_mu_rho(&rho, (d / d_ref).ln())?;
    let q_plus = if mu.mu == 0.0 {
        0.0
    } else {
        let m = mu.mu;
        2.0 * d * m * rho.iter().map(|&r| r * r / (1.0 - 2.0 * m * r)).sum::<f64>()
    };
    Ok(AdaptivePenalty { d, mu, q_plus })
}

/// `Q⁺(α)`.
pub fn q_plus(h: &[f64], spectrum: &Spectrum, d_ref: f64) -> Result<f64> {
    adaptive_penalty(h, spectrum, d_ref).map(|a| a.q_plus)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 0.25 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "gamma must lie in (0, 1/4), got {gamma}"
        )))
    }
}

/// `Pen(α) = Pen_u(α) + (1 + γ) Q⁺(α)`.
pub fn total_pen(h: &[f64], spectrum: &Spectrum, gamma: f64, d_ref: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(pen_u(h, spectrum) + (1.0 + gamma) * q_plus(h, spectrum, d_ref)?)
}

/// Penalty quantities at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyRow {
    pub alpha: f64,
    pub pen_u: f64,
    pub pen_cv: f64,
    pub d: f64,
    pub mu: f64,
    pub q_plus: f64,
    pub pen_total: f64,
    /// `‖h‖²_λ = Σ λ⁻¹ h²`.
    pub h_lambda_norm2: f64,
    /// `‖1 − h‖² = Σ (1 − h)²`.
    pub one_minus_h_norm2: f64,
    /// `Σ (1 − h)⁴`.
    pub one_minus_h_sq_norm2: f64,
    pub max_h_over_lambda: f64,
    /// `log(D(α)/D(α°))` after clamping.
    pub log_ratio: f64,
    pub mu_residual: f64,
    pub log_ratio_clamped: bool,
}

/// Penalty quantities for every grid point, plus the damping profiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyTable {
    pub gamma: f64,
    pub rows: Vec<PenaltyRow>,
    /// `Ψ(α_∘, α°)`; absent when `‖1 − h_{α_∘}‖ = 0`.
    pub psi: Option<f64>,
    #[serde(skip)]
    pub profiles: Vec<Vec<f64>>,
}

impl PenaltyTable {
    /// Evaluates the family on every grid point. The reference `D(α°)` is the
    /// value at the last grid row.
    pub fn build(
        family: &SmootherFamily,
        grid: &AlphaGrid,
        spectrum: &Spectrum,
        gamma: f64,
    ) -> Result<Self> {
        let profiles = grid
            .values()
            .iter()
            .map(|&a| family.h_values(a, spectrum))
            .collect::<Result<Vec<_>>>()?;
        Self::from_profiles(grid.values(), profiles, spectrum, gamma)
    }

    pub fn from_profiles(
        alphas: &[f64],
        profiles: Vec<Vec<f64>>,
        spectrum: &Spectrum,
        gamma: f64,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        if alphas.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let last = profiles.last().expect("nonempty");
        if last.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateSmoother);
        }
        let d_ref = d_of_alpha(last, spectrum);

        let rows = alphas
            .par_iter()
            .zip(profiles.par_iter())
            .map(|(&alpha, h)| {
                let ap = adaptive_penalty(h, spectrum, d_ref)?;
                let pu = pen_u(h, spectrum);
                let lambda = spectrum.eigenvalues();
                Ok(PenaltyRow {
                    alpha,
                    pen_u: pu,
                    pen_cv: pen_cv(h),
                    d: ap.d,
                    mu: ap.mu.mu,
                    q_plus: ap.q_plus,
                    pen_total: pu + (1.0 + gamma) * ap.q_plus,
                    h_lambda_norm2: h.iter().zip(lambda).map(|(h, l)| h * h / l).sum(),
                    one_minus_h_norm2: h.iter().map(|v| (1.0 - v).powi(2)).sum(),
                    one_minus_h_sq_norm2: h.iter().map(|v| (1.0 - v).powi(4)).sum(),
                    max_h_over_lambda: h
                        .iter()
                        .zip(lambda)
                        .map(|(h, l)| h / l)
                        .fold(0.0, f64::max),
                    log_ratio: ap.mu.log_ratio,
                    mu_residual: ap.mu.residual,
                    log_ratio_clamped: ap.mu.clamped,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut table = Self {
            gamma,
            rows,
            psi: None,
            profiles,
        };
        table.psi = psi(&table).ok();
        Ok(table)
    }

    pub fn d_ref(&self) -> f64 {
        self.rows.last().expect("nonempty table").d
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `Ψ(α_∘, α°)`.
///
/// The iterated-log term is taken as `[log log(1 + ‖1−h_∘‖²/‖1−h°‖²)]₊^{1/2}`:
/// the ratio never exceeds one on an ordered grid, so the bare double log is
/// negative and only its positive part contributes.
pub fn psi(table: &PenaltyTable) -> Result<f64> {
    let first = table.rows.first().ok_or(Error::EmptyGrid)?;
    let last = table.rows.last().expect("nonempty");
    if first.one_minus_h_norm2 <= 0.0 {
        return Err(Error::VarianceEstimationImpossible);
    }
    let norm = first.one_minus_h_norm2.sqrt();
    let ratio = first.one_minus_h_norm2 / last.one_minus_h_norm2;
    let loglog = ratio.ln_1p().ln().max(0.0);
    let pen_ratio = first.pen_total / last.pen_total;
    Ok((loglog.sqrt() + pen_ratio.ln_1p()) / norm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionsReport {
    /// Estimated constant: the minimum of both ratios over the grid.
    pub c2_hat: f64,
    /// `min_α ‖h‖²_λ / Σ λ⁻¹ h`.
    pub c2_trace: f64,
    /// `min_α [‖h‖²_λ / log(D/D°) + max h/λ] / D`.
    pub c2_spread: f64,
    pub passed: bool,
}

/// Estimates the constant in the two structural conditions on the family.
pub fn check_conditions(table: &PenaltyTable) -> ConditionsReport {
    let mut c2_trace = f64::INFINITY;
    let mut c2_spread = f64::INFINITY;
    for row in &table.rows {
        let half_pen = 0.5 * row.pen_u;
        if half_pen > 0.0 {
            c2_trace = c2_trace.min(row.h_lambda_norm2 / half_pen);
        }
        if row.log_ratio > 0.0 && row.d > 0.0 {
            let spread = row.h_lambda_norm2 / row.log_ratio + row.max_h_over_lambda;
            c2_spread = c2_spread.min(spread / row.d);
        }
    }
    let c2_hat = c2_trace.min(c2_spread);
    ConditionsReport {
        c2_hat,
        c2_trace,
        c2_spread,
        passed: c2_hat > 0.0,
    }
}

/// Which of the penalty inequalities failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum PenaltyViolation {
    /// `Q⁺ ≥ D max{√log r, log r / μ}`.
    LowerBound { row: usize, lhs: f64, rhs: f64 },
    /// `μ ≥ min{½ √log r, ¼}`.
    MuLowerBound { row: usize, lhs: f64, rhs: f64 },
    /// `D ≥ μQ⁺ / log(μQ⁺/D°)` when `D ≥ e² D°`.
    LogControl { row: usize, lhs: f64, rhs: f64 },
    /// `D(α₁)/D(α₂) ≤ Q⁺(α₁)/Q⁺(α₂)` for `α₁ ≤ α₂`.
    RatioMonotone { row1: usize, row2: usize, lhs: f64, rhs: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyInequalityReport {
    pub passed: bool,
    pub rows_checked: usize,
    pub pairs_checked: usize,
    pub violations: Vec<PenaltyViolation>,
}

fn at_least(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - PROP_SLACK * lhs.abs().max(rhs.abs())
}

/// Verifies the structural inequalities of the adaptive penalty on every row
/// and every ordered pair of rows.
pub fn verify_penalty_inequalities(table: &PenaltyTable) -> PenaltyInequalityReport {
    let d_ref = table.d_ref();
    let mut violations = Vec::new();

    for (i, row) in table.rows.iter().enumerate() {
        let l = row.log_ratio;
        let by_mu = if row.mu > 0.0 { l / row.mu } else { 0.0 };
        let rhs = row.d * l.sqrt().max(by_mu);
        if !at_least(row.q_plus, rhs) {
            violations.push(PenaltyViolation::LowerBound {
                row: i,
                lhs: row.q_plus,
                rhs,
            });
        }

        let rhs = (0.5 * l.sqrt()).min(0.25);
        if !at_least(row.mu, rhs) {
            violations.push(PenaltyViolation::MuLowerBound {
                row: i,
                lhs: row.mu,
                rhs,
            });
        }

        if l >= 2.0 {
            let mq = row.mu * row.q_plus;
            let log_term = (mq / d_ref).ln();
            // A nonpositive logarithm makes the right side nonpositive.
            if log_term > 0.0 {
                let rhs = mq / log_term;
                if !at_least(row.d, rhs) {
                    violations.push(PenaltyViolation::LogControl {
                        row: i,
                        lhs: row.d,
                        rhs,
                    });
                }
            }
        }
    }

    let mut pairs = 0;
    for (j, r2) in table.rows.iter().enumerate() {
        if r2.q_plus <= 0.0 {
            continue;
        }
        for (i, r1) in table.rows[..j].iter().enumerate() {
            pairs += 1;
            // Ratios rather than cross products: D·Q⁺ overflows on severely
            // ill-posed spectra.
            let lhs = r1.d / r2.d;
            let rhs = r1.q_plus / r2.q_plus;
            if !at_least(rhs, lhs) {
                violations.push(PenaltyViolation::RatioMonotone {
                    row1: i,
                    row2: j,
                    lhs,
                    rhs,
                });
            }
        }
    }

    PenaltyInequalityReport {
        passed: violations.is_empty(),
        rows_checked: table.rows.len(),
        pairs_checked: pairs,
        violations,
    }
}
