//! Problems in spectral coordinates.
//!
//! Every quantity downstream depends only on the eigenvalues `λ(k)` of
//! `XᵀX` and the spectral observations `y(k) = ⟨XᵀY, ψ_k⟩ / λ(k)`. This
//! module builds those from a raw design matrix, or simulates them directly
//! from a ground-truth [`SpectralModel`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative threshold below which eigenvalues are discarded.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Eigenvalues of `XᵀX`, positive and nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    dimension: usize,
}

impl Spectrum {
    /// Builds a full-rank spectrum. Fails unless the values are finite,
    /// strictly positive and nonincreasing.
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        let dimension = eigenvalues.len();
        Self::truncated(eigenvalues, dimension)
    }

    /// Spectrum of a `dimension`-parameter problem of which only the leading
    /// `eigenvalues.len()` components were retained.
    pub fn truncated(eigenvalues: Vec<f64>, dimension: usize) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidInput("spectrum is empty".into()));
        }
        if eigenvalues.len() > dimension {
            return Err(Error::Dimension {
                expected: dimension,
                actual: eigenvalues.len(),
            });
        }
        for (k, &l) in eigenvalues.iter().enumerate() {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "eigenvalue {} = {l} is not finite and positive",
                    k + 1
                )));
            }
            if k > 0 && l > eigenvalues[k - 1] {
                return Err(Error::InvalidInput(format!(
                    "eigenvalues must be nonincreasing (position {})",
                    k + 1
                )));
            }
        }
        Ok(Self {
            eigenvalues,
            dimension,
        })
    }

    /// `λ(k) = k^(-exponent)`, k = 1..p.
    pub fn polynomial(p: usize, exponent: f64) -> Result<Self> {
        Self::new((1..=p).map(|k| (k as f64).powf(-exponent)).collect())
    }

    /// `λ(k) = exp(-kappa k)`, k = 1..p.
    pub fn exponential(p: usize, kappa: f64) -> Result<Self> {
        Self::new((1..=p).map(|k| (-kappa * k as f64).exp()).collect())
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of retained components.
    pub fn effective_rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of parameters of the underlying problem.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn smallest(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Built-in spectrum generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumKind {
    /// `λ(k) = k^(-exponent)`: mildly ill-posed.
    Polynomial { p: usize, exponent: f64 },
    /// `λ(k) = exp(-kappa k)`: severely ill-posed.
    Exponential { p: usize, kappa: f64 },
}

impl SpectrumKind {
    pub fn build(&self) -> Result<Spectrum> {
        match *self {
            SpectrumKind::Polynomial { p, exponent } => Spectrum::polynomial(p, exponent),
            SpectrumKind::Exponential { p, kappa } => Spectrum::exponential(p, kappa),
        }
    }
}

/// Built-in generators for the true spectral coefficients `β(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    /// `β(k) = scale · k^(-exponent)`.
    Polynomial {
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `β(k) = scale · exp(-rate k)`.
    Exponential {
        rate: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Zero,
    Explicit { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl SignalKind {
    pub fn coefficients(&self, p: usize) -> Result<Vec<f64>> {
        let k = |i: usize| (i + 1) as f64;
        Ok(match self {
            SignalKind::Polynomial { exponent, scale } => {
                (0..p).map(|i| scale * k(i).powf(-exponent)).collect()
            }
            SignalKind::Exponential { rate, scale } => {
                (0..p).map(|i| scale * (-rate * k(i)).exp()).collect()
            }
            SignalKind::Zero => vec![0.0; p],
            SignalKind::Explicit { values } => {
                if values.len() != p {
                    return Err(Error::Dimension {
                        expected: p,
                        actual: values.len(),
                    });
                }
                values.clone()
            }
        })
    }
}

/// Simulation ground truth: spectrum, true coefficients and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub spectrum: Spectrum,
    pub coefficients: Vec<f64>,
    pub sigma: f64,
}

impl SpectralModel {
    pub fn new(spectrum: Spectrum, coefficients: Vec<f64>, sigma: f64) -> Result<Self> {
        if coefficients.len() != spectrum.effective_rank() {
            return Err(Error::Dimension {
                expected: spectrum.effective_rank(),
                actual: coefficients.len(),
            });
        }
        if coefficients.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise level must be finite and nonnegative, got {sigma}"
            )));
        }
        Ok(Self {
            spectrum,
            coefficients,
            sigma,
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Residual of `Y` orthogonal to the column space of `X`, available only when
/// the observation came from a raw design with `n > rank`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthogonalResidual {
    pub sum_sq: f64,
    pub dof: usize,
}

/// An observation in spectral coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub spectrum: Spectrum,
    pub y: Vec<f64>,
    pub orthogonal: Option<OrthogonalResidual>,
}

impl SpectralData {
    pub fn new(spectrum: Spectrum, y: Vec<f64>) -> Result<Self> {
        if y.len() != spectrum.effective_rank() {
            return Err(Error::Dimension {
                expected: spectrum.effective_rank(),
                actual: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observations must be finite".into()));
        }
        Ok(Self {
            spectrum,
            y,
            orthogonal: None,
        })
    }
}

/// Eigen-decomposition of `XᵀX` obtained from the singular value
/// decomposition of `X`.
#[derive(Debug, Clone)]
pub struct DecomposedDesign {
    pub spectrum: Spectrum,
    /// Right singular vectors `ψ_k` as columns, `p × effective_rank`.
    pub basis: DMatrix<f64>,
    /// Left singular vectors, `n × effective_rank`.
    left: DMatrix<f64>,
    singular_values: Vec<f64>,
    pub n: usize,
}

/// Decomposes `X` without forming `XᵀX`; `λ(k)` are the squared singular
/// values. Components with `λ(k) < rank_tol · λ(1)` are dropped.
pub fn decompose_design(x: &DMatrix<f64>, rank_tol: f64) -> Result<DecomposedDesign> {
    let (n, p) = x.shape();
    if p == 0 || n < p {
        return Err(Error::InvalidInput(format!(
            "design must satisfy n >= p >= 1, got {n} x {p}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("design has non-finite entries".into()));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateDesign("all entries are zero".into()));
    }
    if !(rank_tol >= 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidInput(format!(
            "rank tolerance must lie in [0, 1), got {rank_tol}"
        )));
    }

    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let lambda_max = svd.singular_values[order[0]].powi(2);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| {
            let l = svd.singular_values[i].powi(2);
            l > 0.0 && l >= rank_tol * lambda_max
        })
        .collect();

    let r = kept.len();
    let mut basis = DMatrix::zeros(p, r);
    let mut left = DMatrix::zeros(n, r);
    let mut singular_values = Vec::with_capacity(r);
    for (j, &i) in kept.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
        left.set_column(j, &u.column(i));
        singular_values.push(svd.singular_values[i]);
    }
    let spectrum = Spectrum::truncated(singular_values.iter().map(|s| s * s).collect(), p)?;

    Ok(DecomposedDesign {
        spectrum,
        basis,
        left,
        singular_values,
        n,
    })
}

impl DecomposedDesign {
    /// `y(k) = ⟨XᵀY, ψ_k⟩ / λ(k)`, evaluated as `⟨u_k, Y⟩ / s_k`.
    ///
    /// Also records the residual orthogonal to the retained column space.
    pub fn to_spectral(&self, y_raw: &[f64]) -> Result<SpectralData> {
        if y_raw.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                actual: y_raw.len(),
            });
        }
        if y_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("response has non-finite entries".into()));
        }
        let yv = DVector::from_column_slice(y_raw);
        let proj = self.left.transpose() * &yv;
        let y: Vec<f64> = proj
            .iter()
            .zip(&self.singular_values)
            .map(|(c, s)| c / s)
            .collect();

        let residual = &yv - &self.left * &proj;
        let orthogonal = OrthogonalResidual {
            sum_sq: residual.norm_squared(),
            dof: self.n - self.spectrum.effective_rank(),
        };

        let mut data = SpectralData::new(self.spectrum.clone(), y)?;
        data.orthogonal = Some(orthogonal);
        Ok(data)
    }

    /// `Σ_k filtered(k) ψ_k` in coefficient space.
    pub fn reconstruct_estimate(&self, filtered: &[f64]) -> Result<Vec<f64>> {
        let r = self.spectrum.effective_rank();
        if filtered.len() != r {
            return Err(Error::Dimension {
                expected: r,
                actual: filtered.len(),
            });
        }
        let coef = &self.basis * DVector::from_column_slice(filtered);
        Ok(coef.iter().copied().collect())
    }

    /// Spectral coordinates `⟨β, ψ_k⟩` of a coefficient vector.
    pub fn project(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let p = self.basis.nrows();
        if beta.len() != p {
            return Err(Error::Dimension {
                expected: p,
                actual: beta.len(),
            });
        }
        let c = self.basis.transpose() * DVector::from_column_slice(beta);
        Ok(c.iter().copied().collect())
    }
}

/// Draws `r` independent standard normal variates.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, r: usize) -> Vec<f64> {
    (0..r).map(|_| rng.sample(StandardNormal)).collect()
}

/// `y(k) = β(k) + σ g(k) / √λ(k)` for a given standard normal vector `g`.
pub fn observe_with_noise(model: &SpectralModel, noise: &[f64]) -> SpectralData {
    debug_assert_eq!(noise.len(), model.coefficients.len());
    let y = model
        .coefficients
        .iter()
        .zip(model.spectrum.eigenvalues())
        .zip(noise)
        .map(|((b, l), g)| b + model.sigma * g / l.sqrt())
        .collect();
    SpectralData {
        spectrum: model.spectrum.clone(),
        y,
        orthogonal: None,
    }
}

/// Simulates one observation directly in spectral coordinates.
pub fn simulate_observation<R: Rng + ?Sized>(model: &SpectralModel, rng: &mut R) -> SpectralData {
    let noise = draw_noise(rng, model.coefficients.len());
    observe_with_noise(model, &noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::replication_stream;

    #[test]
    fn identity_design_has_unit_spectrum() {
        let d = decompose_design(&DMatrix::identity(3, 3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.spectrum.effective_rank(), 3);
        for &l in d.spectrum.eigenvalues() {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn embedded_diagonal_design() {
        let x = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let d = decompose_design(&x, DEFAULT_RANK_TOL).unwrap();
        let l = d.spectrum.eigenvalues();
        assert!((l[0] - 4.0).abs() < 1e-12);
        assert!((l[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(matches!(
            decompose_design(&DMatrix::zeros(3, 2), DEFAULT_RANK_TOL),
            Err(Error::DegenerateDesign(_))
        ));
        let mut x = DMatrix::identity(3, 3);
        x[(1, 2)] = f64::NAN;
        assert!(matches!(
            decompose_design(&x, DEFAULT_RANK_TOL),
            Err(Error::InvalidInput(_))
        ));
        assert!(decompose_design(&DMatrix::identity(2, 3), DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn rank_truncation_drops_tiny_components() {
        // Column 3 duplicates column 1, so one singular value vanishes.
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 2.0],
        );
        let d = decompose_design(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.spectrum.effective_rank(), 2);
        assert_eq!(d.spectrum.dimension(), 3);
        let l = d.spectrum.eigenvalues();
        assert!(l.iter().all(|&v| v >= DEFAULT_RANK_TOL * l[0]));
        assert_eq!(d.to_spectral(&[1.0, 2.0, 3.0, 4.0]).unwrap().y.len(), 2);
    }

    #[test]
    fn identity_design_passes_observations_through() {
        let d = decompose_design(&DMatrix::identity(3, 3), DEFAULT_RANK_TOL).unwrap();
        let data = d.to_spectral(&[3.0, -1.0, 2.0]).unwrap();
        // Basis vectors may come back as any signed permutation of e_k.
        let est = d.reconstruct_estimate(&data.y).unwrap();
        for (a, b) in est.iter().zip([3.0, -1.0, 2.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut sorted: Vec<f64> = data.y.iter().map(|v| v.abs()).collect();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn length_mismatch_is_a_dimension_error() {
        let d = decompose_design(&DMatrix::identity(3, 3), DEFAULT_RANK_TOL).unwrap();
        assert!(matches!(d.to_spectral(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(
            d.reconstruct_estimate(&[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_filter_reconstructs_zero() {
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 + (i == j) as u8 as f64);
        let d = decompose_design(&x, DEFAULT_RANK_TOL).unwrap();
        let est = d.reconstruct_estimate(&[0.0; 3]).unwrap();
        assert!(est.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_noise_simulation_returns_truth() {
        let s = Spectrum::polynomial(5, 2.0).unwrap();
        let beta = vec![1.0, -0.5, 0.25, 0.0, 3.0];
        let m = SpectralModel::new(s, beta.clone(), 0.0).unwrap();
        let data = simulate_observation(&m, &mut replication_stream(7, 0));
        assert_eq!(data.y, beta);
    }

    #[test]
    fn simulation_is_deterministic() {
        let s = Spectrum::exponential(8, 0.5).unwrap();
        let m = SpectralModel::new(s, vec![1.0; 8], 0.3).unwrap();
        let a = simulate_observation(&m, &mut replication_stream(11, 4));
        let b = simulate_observation(&m, &mut replication_stream(11, 4));
        let bits = |d: &SpectralData| d.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = simulate_observation(&m, &mut replication_stream(11, 5));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 0.0]).is_err());
        assert!(Spectrum::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(Spectrum::new(vec![2.0, 2.0, 1.0]).is_ok());
        let m = SpectralModel::new(Spectrum::new(vec![1.0]).unwrap(), vec![1.0, 2.0], 1.0);
        assert!(matches!(m, Err(Error::Dimension { .. })));
    }

    #[test]
    fn signal_generators() {
        let b = SignalKind::Polynomial {
            exponent: 1.0,
            scale: 1.0,
        }
        .coefficients(4)
        .unwrap();
        assert_eq!(b, vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
        let e = SignalKind::Exponential {
            rate: 0.25,
            scale: 2.0,
        }
        .coefficients(2)
        .unwrap();
        assert!((e[1] - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert!(SignalKind::Explicit { values: vec![1.0] }
            .coefficients(2)
            .is_err());
    }
}
