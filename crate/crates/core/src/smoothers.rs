//! Ordered smoother families and regularization-parameter grids.
//!
//! A family maps `(α, λ)` to a damping factor in `[0, 1]`. Larger `α` means
//! more smoothing, so `h_α(k)` is pointwise no larger.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::Spectrum;

/// Slack for floating-point comparisons in ordering checks.
pub const ORDER_SLACK: f64 = 1e-14;

/// An explicit, user-supplied table of damping profiles keyed by `α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HTable {
    alphas: Vec<f64>,
    profiles: Vec<Vec<f64>>,
}

impl HTable {
    pub fn new(alphas: Vec<f64>, profiles: Vec<Vec<f64>>) -> Result<Self> {
        if alphas.len() != profiles.len() {
            return Err(Error::Dimension {
                expected: alphas.len(),
                actual: profiles.len(),
            });
        }
        AlphaGrid::new(alphas.clone())?;
        for row in &profiles {
            if row.iter().any(|h| !h.is_finite()) {
                return Err(Error::InvalidInput("h table has non-finite values".into()));
            }
        }
        Ok(Self { alphas, profiles })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    fn lookup(&self, alpha: f64) -> Result<&[f64]> {
        self.alphas
            .iter()
            .position(|&a| a == alpha)
            .map(|i| self.profiles[i].as_slice())
            .ok_or_else(|| Error::InvalidInput(format!("alpha {alpha} is not in the h table")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmootherFamily {
    /// Spectral cut-off keeping the leading `ceil(1/α)` components.
    Cutoff,
    /// `λ / (λ + α)`.
    Tikhonov,
    /// `ceil(1/α)` Landweber iterations with relaxation step `tau`
    /// (`1/λ(1)` when unset).
    Landweber { tau: Option<f64> },
    /// Arbitrary tabulated profiles; only meaningful after [`check_ordered`].
    Table(HTable),
}

/// `ceil(1/α)`, snapping to the nearest integer when `1/α` is within
/// rounding distance of it so that `α = 1/m` maps back to `m`.
pub fn index_count(alpha: f64) -> f64 {
    let t = 1.0 / alpha;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        t.ceil()
    }
}

impl SmootherFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SmootherFamily::Cutoff => "cutoff",
            SmootherFamily::Tikhonov => "tikhonov",
            SmootherFamily::Landweber { .. } => "landweber",
            SmootherFamily::Table(_) => "table",
        }
    }

    fn landweber_step(tau: Option<f64>, spectrum: &Spectrum) -> Result<f64> {
        let tau = tau.unwrap_or(1.0 / spectrum.largest());
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "landweber step must be positive, got {tau}"
            )));
        }
        let stretch = tau * spectrum.largest();
        if stretch > 1.0 + 1e-12 {
            return Err(Error::UnstableStep(stretch));
        }
        Ok(tau)
    }

    /// Damping factors `h_α(k) = 𝓗_α(λ(k))` for every retained component.
    pub fn h_values(&self, alpha: f64, spectrum: &Spectrum) -> Result<Vec<f64>> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Precondition(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        let lambda = spectrum.eigenvalues();
        let h: Vec<f64> = match self {
            SmootherFamily::Cutoff => {
                let m = index_count(alpha);
                (1..=lambda.len())
                    .map(|k| if (k as f64) <= m { 1.0 } else { 0.0 })
                    .collect()
            }
            SmootherFamily::Tikhonov => lambda.iter().map(|&l| l / (l + alpha)).collect(),
            SmootherFamily::Landweber { tau } => {
                let tau = Self::landweber_step(*tau, spectrum)?;
                let m = index_count(alpha);
                // 1 - (1 - τλ)^m, evaluated without cancellation.
                lambda
                    .iter()
                    .map(|&l| {
                        let base = (-(tau * l).min(1.0)).ln_1p();
                        -(m * base).exp_m1()
                    })
                    .collect()
            }
            SmootherFamily::Table(table) => {
                let row = table.lookup(alpha)?;
                if row.len() != lambda.len() {
                    return Err(Error::Dimension {
                        expected: lambda.len(),
                        actual: row.len(),
                    });
                }
                row.to_vec()
            }
        };
        Ok(h.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }
}

/// Strictly increasing grid `α_∘ = a₁ < … < a_M = α°`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaGrid {
    values: Vec<f64>,
}

impl AlphaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if values.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidInput(
                "grid values must be finite and positive".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "grid values must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Smallest admissible `α` (least smoothing).
    pub fn alpha_floor(&self) -> f64 {
        self.values[0]
    }

    /// Largest `α`, the reference point of the adaptive penalty.
    pub fn alpha_ceiling(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Rule used to raise `α_∘` until the residual variance is estimable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AlphaFloorRule {
    /// `‖1 − h_{α_∘}‖² ≥ max(10, p/10)`.
    #[default]
    Default,
    /// `‖1 − h_{α_∘}‖² ≥ threshold`.
    MinResidual(f64),
    None,
}

impl AlphaFloorRule {
    pub fn threshold(&self, p: usize) -> Option<f64> {
        match *self {
            AlphaFloorRule::Default => Some(f64::max(10.0, p as f64 / 10.0)),
            AlphaFloorRule::MinResidual(t) => Some(t),
            AlphaFloorRule::None => None,
        }
    }
}

pub fn one_minus_h_norm2(h: &[f64]) -> f64 {
    h.iter().map(|v| (1.0 - v).powi(2)).sum()
}

/// Builds the default grid for a family and trims it from below with the
/// floor rule.
pub fn default_grid(
    family: &SmootherFamily,
    spectrum: &Spectrum,
    points: usize,
    floor: AlphaFloorRule,
) -> Result<AlphaGrid> {
    let p = spectrum.effective_rank();
    let mut values: Vec<f64> = match family {
        SmootherFamily::Cutoff => (1..=p).rev().map(|m| 1.0 / m as f64).collect(),
        SmootherFamily::Tikhonov | SmootherFamily::Landweber { .. } => {
            if points < 2 {
                return Err(Error::Precondition(format!(
                    "grid needs at least 2 points, got {points}"
                )));
            }
            let lo = spectrum.smallest() / 10.0;
            let hi = 10.0 * spectrum.largest();
            let ratio = (hi / lo).ln();
            let mut v: Vec<f64> = (0..points)
                .map(|i| lo * (ratio * i as f64 / (points - 1) as f64).exp())
                .collect();
            v[0] = lo;
            v[points - 1] = hi;
            v
        }
        SmootherFamily::Table(t) => t.alphas().to_vec(),
    };

    if let SmootherFamily::Landweber { .. } = family {
        // Distinct α can share an iteration count; keep the largest of each.
        let mut dedup: Vec<f64> = Vec::with_capacity(values.len());
        for a in values {
            match dedup.last() {
                Some(&prev) if index_count(prev) == index_count(a) => {
                    *dedup.last_mut().unwrap() = a;
                }
                _ => dedup.push(a),
            }
        }
        values = dedup;
    }

    if let Some(threshold) = floor.threshold(p) {
        let mut start = None;
        for (i, &a) in values.iter().enumerate() {
            if one_minus_h_norm2(&family.h_values(a, spectrum)?) >= threshold {
                start = Some(i);
                break;
            }
        }
        match start {
            Some(i) => values.drain(..i).for_each(drop),
            None => return Err(Error::AlphaFloorInfeasible(threshold)),
        }
    }
    AlphaGrid::new(values)
}

/// First witness against the ordering property.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderingViolation {
    /// Bound `0 ≤ h ≤ 1` broken.
    OutOfRange { alpha_index: usize, k: usize },
    /// `h_α(k) < h_α(k+1)` although `λ(k) ≥ λ(k+1)`.
    NotMonotoneInLambda { alpha_index: usize, k: usize },
    /// `h_{α₁}(k′) < h_{α₂}(k′)` but `h_{α₁}(k) > h_{α₂}(k)`.
    Crossing {
        alpha1_index: usize,
        alpha2_index: usize,
        k_prime: usize,
        k: usize,
    },
    /// A later (larger) grid point smooths less than an earlier one.
    WrongDirection { alpha_index: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    pub passed: bool,
    pub violation: Option<OrderingViolation>,
}

/// Checks that the family is ordered on the grid: each profile is monotone
/// in `λ`, no two profiles cross, and smoothing grows with `α`.
pub fn check_ordered(
    family: &SmootherFamily,
    grid: &AlphaGrid,
    spectrum: &Spectrum,
) -> Result<OrderingReport> {
    let profiles = grid
        .values()
        .iter()
        .map(|&a| family.h_values(a, spectrum))
        .collect::<Result<Vec<_>>>()?;
    Ok(check_profiles(&profiles, spectrum))
}

/// Ordering check on precomputed profiles, aligned with the grid.
pub fn check_profiles(profiles: &[Vec<f64>], spectrum: &Spectrum) -> OrderingReport {
    let fail = |v| OrderingReport {
        passed: false,
        violation: Some(v),
    };
    let lambda = spectrum.eigenvalues();

    for (i, h) in profiles.iter().enumerate() {
        if let Some(k) = h.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return fail(OrderingViolation::OutOfRange { alpha_index: i, k });
        }
        for k in 0..h.len().saturating_sub(1) {
            if lambda[k] >= lambda[k + 1] && h[k] < h[k + 1] - ORDER_SLACK {
                return fail(OrderingViolation::NotMonotoneInLambda { alpha_index: i, k });
            }
        }
    }

    for i in 0..profiles.len() {
        for j in (i + 1)..profiles.len() {
            let (a, b) = (&profiles[i], &profiles[j]);
            let below = a.iter().zip(b).position(|(x, y)| *x < y - ORDER_SLACK);
            let above = a.iter().zip(b).position(|(x, y)| *x > y + ORDER_SLACK);
            if let (Some(kp), Some(k)) = (below, above) {
                return fail(OrderingViolation::Crossing {
                    alpha1_index: i,
                    alpha2_index: j,
                    k_prime: kp,
                    k,
                });
            }
            if let Some(k) = below {
                return fail(OrderingViolation::WrongDirection { alpha_index: j, k });
            }
        }
    }

    OrderingReport {
        passed: true,
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn tikhonov_limits() {
        let s = spec(&[4.0, 1.0, 0.25]);
        let h = SmootherFamily::Tikhonov.h_values(1e-14, &s).unwrap();
        assert!(h.iter().all(|v| (1.0 - v).abs() < 1e-12));
        let h = SmootherFamily::Tikhonov.h_values(1.0, &s).unwrap();
        assert_eq!(h[1], 0.5);
    }

    #[test]
    fn landweber_single_full_step() {
        let s = spec(&[1.0]);
        let fam = SmootherFamily::Landweber { tau: Some(1.0) };
        for alpha in [0.01, 0.3, 1.0, 7.0] {
            assert_eq!(fam.h_values(alpha, &s).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn landweber_matches_power_form() {
        let s = spec(&[2.0, 0.5, 0.1]);
        let fam = SmootherFamily::Landweber { tau: None };
        let h = fam.h_values(0.25, &s).unwrap();
        for (hv, l) in h.iter().zip(s.eigenvalues()) {
            let direct = 1.0 - (1.0 - l / 2.0f64).powi(4);
            assert!((hv - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn landweber_rejects_large_step() {
        let s = spec(&[2.0, 1.0]);
        let fam = SmootherFamily::Landweber { tau: Some(1.0) };
        assert!(matches!(fam.h_values(0.5, &s), Err(Error::UnstableStep(_))));
    }

    #[test]
    fn cutoff_index_rule() {
        let s = spec(&[1.0, 0.5, 0.25, 0.125, 0.0625]);
        let h = SmootherFamily::Cutoff.h_values(1.0 / 3.0, &s).unwrap();
        assert_eq!(h, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        // 1/(1/m) may round above m; the snap keeps the count exact.
        for m in 1..=200 {
            assert_eq!(index_count(1.0 / m as f64), m as f64);
        }
        assert_eq!(index_count(0.3), 4.0);
    }

    #[test]
    fn cutoff_grid_is_the_index_set() {
        let s = spec(&[1.0, 0.5, 0.25, 0.125]);
        let g = default_grid(&SmootherFamily::Cutoff, &s, 2, AlphaFloorRule::None).unwrap();
        assert_eq!(g.values(), &[0.25, 1.0 / 3.0, 0.5, 1.0]);
    }

    #[test]
    fn two_point_tikhonov_grid_is_endpoints() {
        let s = Spectrum::polynomial(200, 1.0).unwrap();
        let g = default_grid(&SmootherFamily::Tikhonov, &s, 2, AlphaFloorRule::None).unwrap();
        assert_eq!(g.values(), &[s.smallest() / 10.0, 10.0 * s.largest()]);
    }

    #[test]
    fn default_floor_keeps_at_most_ninety_of_one_hundred() {
        let s = Spectrum::polynomial(100, 1.0).unwrap();
        let g = default_grid(&SmootherFamily::Cutoff, &s, 2, AlphaFloorRule::Default).unwrap();
        // ||1 - h||^2 = p - m >= 10 first holds at m = 90.
        assert_eq!(index_count(g.alpha_floor()), 90.0);
        assert_eq!(g.alpha_ceiling(), 1.0);
        assert_eq!(g.len(), 90);
    }

    #[test]
    fn infeasible_floor() {
        let s = spec(&[1.0, 0.5]);
        let r = default_grid(&SmootherFamily::Cutoff, &s, 2, AlphaFloorRule::Default);
        assert!(matches!(r, Err(Error::AlphaFloorInfeasible(_))));
    }

    #[test]
    fn landweber_grid_has_distinct_counts() {
        let s = Spectrum::polynomial(60, 1.0).unwrap();
        let fam = SmootherFamily::Landweber { tau: None };
        let g = default_grid(&fam, &s, 80, AlphaFloorRule::Default).unwrap();
        let counts: Vec<f64> = g.values().iter().map(|&a| index_count(a)).collect();
        assert!(counts.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(g.alpha_ceiling(), 10.0);
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(AlphaGrid::new(vec![]), Err(Error::EmptyGrid)));
        assert!(AlphaGrid::new(vec![0.1, 0.1]).is_err());
        assert!(AlphaGrid::new(vec![-1.0, 0.1]).is_err());
        assert!(AlphaGrid::new(vec![0.1]).is_ok());
    }

    #[test]
    fn builtin_families_are_ordered() {
        let s = Spectrum::polynomial(40, 1.5).unwrap();
        for fam in [
            SmootherFamily::Cutoff,
            SmootherFamily::Tikhonov,
            SmootherFamily::Landweber { tau: None },
        ] {
            let g = default_grid(&fam, &s, 30, AlphaFloorRule::None).unwrap();
            let rep = check_ordered(&fam, &g, &s).unwrap();
            assert!(rep.passed, "{}: {:?}", fam.name(), rep.violation);
        }
    }

    #[test]
    fn crossing_profiles_are_reported() {
        // Two profiles on p = 2 that cross: (1, 0.2) versus (0.5, 0.5).
        let s = spec(&[1.0, 0.5]);
        let table = HTable::new(vec![0.5, 1.0], vec![vec![1.0, 0.2], vec![0.5, 0.5]]).unwrap();
        let fam = SmootherFamily::Table(table);
        let g = AlphaGrid::new(vec![0.5, 1.0]).unwrap();
        let rep = check_ordered(&fam, &g, &s).unwrap();
        assert!(!rep.passed);
        assert_eq!(
            rep.violation,
            Some(OrderingViolation::Crossing {
                alpha1_index: 0,
                alpha2_index: 1,
                k_prime: 1,
                k: 0
            })
        );
    }

    #[test]
    fn reversed_direction_is_reported() {
        let s = spec(&[1.0, 0.5]);
        let table = HTable::new(vec![0.5, 1.0], vec![vec![0.5, 0.2], vec![1.0, 0.5]]).unwrap();
        let g = AlphaGrid::new(vec![0.5, 1.0]).unwrap();
        let rep = check_ordered(&SmootherFamily::Table(table), &g, &s).unwrap();
        assert!(matches!(
            rep.violation,
            Some(OrderingViolation::WrongDirection { .. })
        ));
    }
}
