//! Exact risk functionals and the Monte Carlo harness.
//!
//! Everything is evaluated in spectral coordinates; `ψ` is orthonormal so
//! coefficient-space norms coincide with spectral ones.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::{pen_u, PenaltyTable};
use crate::selection::{select_alpha, sigma_hat2, PenaltyKind, SigmaMode};
use crate::smoothers::{one_minus_h_norm2, AlphaGrid, SmootherFamily};
use crate::spectral::{draw_noise, observe_with_noise, SpectralModel, Spectrum};
use crate::stream::replication_stream;

/// `L_α(β) = Σ (1 − h)² β² + σ² Σ λ⁻¹ h²`.
pub fn exact_risk(model: &SpectralModel, h: &[f64]) -> f64 {
    let s2 = model.sigma2();
    h.iter()
        .zip(&model.coefficients)
        .zip(model.spectrum.eigenvalues())
        .map(|((h, b), l)| ((1.0 - h) * b).powi(2) + s2 * h * h / l)
        .sum()
}

/// `Σ (1 − h)² λ β² / Σ (1 − h)²`: the bias carried by `σ̂²_α`.
pub fn variance_bias(model: &SpectralModel, h: &[f64]) -> Result<f64> {
    let den = one_minus_h_norm2(h);
    if den <= 0.0 {
        return Err(Error::VarianceEstimationImpossible);
    }
    let num: f64 = h
        .iter()
        .zip(&model.coefficients)
        .zip(model.spectrum.eigenvalues())
        .map(|((h, b), l)| l * ((1.0 - h) * b).powi(2))
        .sum();
    Ok(num / den)
}

/// `E Σ (1 − h)² y² + σ² Pen`: the expected known-σ contrast.
pub fn expected_contrast(model: &SpectralModel, h: &[f64], pen: f64) -> f64 {
    let s2 = model.sigma2();
    let fit: f64 = h
        .iter()
        .zip(&model.coefficients)
        .zip(model.spectrum.eigenvalues())
        .map(|((h, b), l)| (1.0 - h).powi(2) * (b * b + s2 / l))
        .sum();
    fit + s2 * pen
}

/// Relative gap in `L_α(β) = E{contrast with Pen_u} − σ² Σ λ⁻¹`. Zero up to
/// rounding for any `h`; the harness refuses to run when it is not.
pub fn unbiasedness_gap(model: &SpectralModel, h: &[f64]) -> f64 {
    let shift: f64 = model.spectrum.eigenvalues().iter().map(|l| model.sigma2() / l).sum();
    let lhs = exact_risk(model, h);
    let rhs = expected_contrast(model, h, pen_u(h, &model.spectrum)) - shift;
    (lhs - rhs).abs() / lhs.abs().max(shift).max(f64::MIN_POSITIVE)
}

/// Penalized mean risk
/// `R̄_α(β) = L_α(β) + (1 + γ) σ² Q⁺(α) + Pen(α) Σ(1 − h)² λ β² / Σ(1 − h)²`.
pub fn rbar(model: &SpectralModel, h: &[f64], pen_total: f64, q_plus: f64, gamma: f64) -> Result<f64> {
    Ok(exact_risk(model, h)
        + (1.0 + gamma) * model.sigma2() * q_plus
        + pen_total * variance_bias(model, h)?)
}

/// Exact and penalized risks along the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskProfile {
    pub exact_risk: Vec<f64>,
    /// `None` where `‖1 − h‖² = 0` and the penalized risk is undefined.
    pub rbar: Vec<Option<f64>>,
    pub oracle_risk: f64,
    pub oracle_alpha_index: usize,
}

impl RiskProfile {
    pub fn build(model: &SpectralModel, table: &PenaltyTable) -> Result<Self> {
        let exact: Vec<f64> = table.profiles.iter().map(|h| exact_risk(model, h)).collect();
        let rb: Vec<Option<f64>> = table
            .rows
            .iter()
            .zip(&table.profiles)
            .map(|(row, h)| rbar(model, h, row.pen_total, row.q_plus, table.gamma).ok())
            .collect();
        let (oracle_risk, oracle_alpha_index) = oracle_of(&rb).ok_or_else(|| {
            Error::Precondition("penalized risk undefined on every grid point".into())
        })?;
        Ok(Self {
            exact_risk: exact,
            rbar: rb,
            oracle_risk,
            oracle_alpha_index,
        })
    }
}

fn oracle_of(rbar: &[Option<f64>]) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, v) in rbar.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, i));
            }
        }
    }
    best
}

/// `r(β) = min_α R̄_α(β)` and its grid index.
pub fn oracle_risk(profile: &RiskProfile) -> (f64, usize) {
    (profile.oracle_risk, profile.oracle_alpha_index)
}

/// `𝓡(x) = x / log x`.
pub fn r_function(x: f64) -> f64 {
    x / x.ln()
}

/// Right-hand side of the oracle inequality with a user-chosen constant `c`.
/// Reporting only.
pub fn theorem_bound(r: f64, sigma2: f64, d_ref: f64, psi: f64, gamma: f64, c: f64) -> Result<f64> {
    let not_evaluable = |why: &str| Err(Error::Precondition(format!("bound not evaluable: {why}")));
    if !(sigma2 > 0.0 && d_ref > 0.0 && gamma > 0.0 && r > 0.0) {
        return not_evaluable("needs r, sigma^2, D(alpha°), gamma > 0");
    }
    let shrink = 1.0 - c * psi / gamma;
    if !(shrink > 0.0) {
        return not_evaluable("1 - C psi / gamma <= 0");
    }
    let arg = r / (sigma2 * gamma * d_ref) + gamma.powi(-4);
    if !(arg > std::f64::consts::E) {
        return not_evaluable("argument of x/log x is below e");
    }
    let signal = r / (sigma2 * d_ref);
    let log_term = if c == 0.0 {
        0.0
    } else if signal > 1.0 {
        c / signal.ln().sqrt()
    } else {
        return not_evaluable("r / (sigma^2 D(alpha°)) <= 1");
    };
    Ok((1.0 + c * psi + log_term) * r
        + c * sigma2 * d_ref / (shrink + gamma.sqrt()) * r_function(arg))
}

/// `η_α = Σ λ⁻¹ (2h − h²)(g² − 1)` for a standard normal vector `g`.
pub fn eta(h: &[f64], spectrum: &Spectrum, noise: &[f64]) -> f64 {
    h.iter()
        .zip(spectrum.eigenvalues())
        .zip(noise)
        .map(|((h, l), g)| (2.0 * h - h * h) / l * (g * g - 1.0))
        .sum()
}

/// `sup_α [η_α − (1 + γ) Q⁺(α)]₊` for a given noise draw.
pub fn excess_sup_from_noise(table: &PenaltyTable, spectrum: &Spectrum, noise: &[f64]) -> f64 {
    table
        .rows
        .iter()
        .zip(&table.profiles)
        .map(|(row, h)| eta(h, spectrum, noise) - (1.0 + table.gamma) * row.q_plus)
        .fold(0.0, f64::max)
}

/// One replication of the excess statistic with fresh noise from `rng`.
pub fn excess_sup_stat<R: Rng + ?Sized>(table: &PenaltyTable, spectrum: &Spectrum, rng: &mut R) -> f64 {
    let noise = draw_noise(rng, spectrum.effective_rank());
    excess_sup_from_noise(table, spectrum, &noise)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Use the model's true `σ²`.
    Known,
    #[default]
    Unknown,
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct BenchSetup {
    pub model: SpectralModel,
    pub family: SmootherFamily,
    pub grid: AlphaGrid,
    pub gamma: f64,
    pub mode: NoiseMode,
    pub penalty: PenaltyKind,
    pub replications: usize,
    pub seed: u64,
    /// Constant plugged into the reported oracle bound.
    pub bound_constant: f64,
}

/// Per-replication output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub alpha_hat_index: usize,
    pub loss: f64,
    pub sigma_hat2: Option<f64>,
    /// Excess statistic normalized by `D(α°)`.
    pub excess_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanWithError {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub median: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessStats {
    pub mean: f64,
    pub std_error: f64,
    pub quantiles: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub replications: usize,
    pub seed: u64,
    pub family: String,
    pub penalty: String,
    pub mode: NoiseMode,
    pub gamma: f64,
    pub empirical_risk: MeanWithError,
    pub loss_quantiles: Quantiles,
    pub oracle_risk: f64,
    pub oracle_alpha_index: usize,
    pub oracle_alpha: f64,
    pub oracle_ratio: f64,
    pub oracle_ratio_std_error: f64,
    pub alpha_hat_histogram: Vec<u64>,
    pub sigma_hat2_stats: Option<MeanVariance>,
    pub excess_sup_stats: ExcessStats,
    pub d_ref: f64,
    pub psi: Option<f64>,
    pub bound_constant: f64,
    pub theorem_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: BenchReport,
    pub records: Vec<ReplicationRecord>,
    pub table: PenaltyTable,
    pub profile: RiskProfile,
}

/// Sample mean and standard error `s / √N`.
pub fn mean_with_error(values: &[f64]) -> MeanWithError {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanWithError {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(values: &[f64]) -> Quantiles {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Quantiles {
        median: quantile_sorted(&sorted, 0.5),
        p90: quantile_sorted(&sorted, 0.9),
        p95: quantile_sorted(&sorted, 0.95),
        p99: quantile_sorted(&sorted, 0.99),
    }
}

/// Runs the experiment. Replications run in parallel, each on its own
/// stream; the aggregation is a fold in replication order, so the result
/// depends only on the setup.
pub fn mc_run(setup: &BenchSetup) -> Result<BenchOutcome> {
    if setup.replications == 0 {
        return Err(Error::Precondition("replications must be >= 1".into()));
    }
    let model = &setup.model;
    let spectrum = &model.spectrum;
    let table = PenaltyTable::build(&setup.family, &setup.grid, spectrum, setup.gamma)?;
    for h in &table.profiles {
        let gap = unbiasedness_gap(model, h);
        if gap > 1e-10 {
            return Err(Error::Precondition(format!(
                "unbiased-risk identity off by {gap:e}"
            )));
        }
    }
    let profile = RiskProfile::build(model, &table)?;
    let d_ref = table.d_ref();
    let mode = match setup.mode {
        NoiseMode::Known => SigmaMode::Known {
            sigma2: model.sigma2(),
        },
        NoiseMode::Unknown => SigmaMode::Unknown,
    };

    let records = (0..setup.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_stream(setup.seed, rep as u64);
            let noise = draw_noise(&mut rng, spectrum.effective_rank());
            let data = observe_with_noise(model, &noise);
            let sel = select_alpha(&data, &table, mode, setup.penalty)?;
            let loss = model
                .coefficients
                .iter()
                .zip(&sel.estimate)
                .map(|(b, e)| (b - e).powi(2))
                .sum();
            let s2 = sel
                .sigma_hat2
                .or_else(|| sigma_hat2(&data, &table.profiles[sel.alpha_hat_index]).ok());
            Ok(ReplicationRecord {
                rep,
                alpha_hat_index: sel.alpha_hat_index,
                loss,
                sigma_hat2: s2,
                excess_sup: excess_sup_from_noise(&table, spectrum, &noise) / d_ref,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let losses: Vec<f64> = records.iter().map(|r| r.loss).collect();
    let empirical_risk = mean_with_error(&losses);
    let mut histogram = vec![0u64; table.len()];
    for r in &records {
        histogram[r.alpha_hat_index] += 1;
    }
    let variances: Vec<f64> = records.iter().filter_map(|r| r.sigma_hat2).collect();
    let sigma_hat2_stats = (!variances.is_empty()).then(|| {
        let m = mean_with_error(&variances);
        MeanVariance {
            mean: m.mean,
            variance: m.std_error.powi(2) * variances.len() as f64,
        }
    });
    let excess: Vec<f64> = records.iter().map(|r| r.excess_sup).collect();
    let excess_mean = mean_with_error(&excess);

    let r = profile.oracle_risk;
    let theorem = table.psi.and_then(|psi| {
        theorem_bound(r, model.sigma2(), d_ref, psi, setup.gamma, setup.bound_constant).ok()
    });

    let report = BenchReport {
        replications: setup.replications,
        seed: setup.seed,
        family: setup.family.name().to_string(),
        penalty: setup.penalty.name().to_string(),
        mode: setup.mode,
        gamma: setup.gamma,
        empirical_risk,
        loss_quantiles: quantiles(&losses),
        oracle_risk: r,
        oracle_alpha_index: profile.oracle_alpha_index,
        oracle_alpha: table.rows[profile.oracle_alpha_index].alpha,
        oracle_ratio: empirical_risk.mean / r,
        oracle_ratio_std_error: empirical_risk.std_error / r,
        alpha_hat_histogram: histogram,
        sigma_hat2_stats,
        excess_sup_stats: ExcessStats {
            mean: excess_mean.mean,
            std_error: excess_mean.std_error,
            quantiles: quantiles(&excess),
        },
        d_ref,
        psi: table.psi,
        bound_constant: setup.bound_constant,
        theorem_bound: theorem,
    };
    Ok(BenchOutcome {
        report,
        records,
        table,
        profile,
    })
}
