//! Values checked against independent oracles: high-precision evaluations
//! (mpmath, 50 digits) frozen as literals, and from-scratch
//! reimplementations inside the test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specreg::penalty::{
    adaptive_penalty, big_f, check_conditions, d_of_alpha, pen_u, psi, solve_mu, PenaltyTable,
};
use specreg::smoothers::{default_grid, AlphaFloorRule, AlphaGrid, SmootherFamily};
use specreg::Spectrum;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn f_at_quarter() {
    // ½ log ½ + ¼ + ¼
    let want = 0.153_426_409_720_027_35;
    assert!(rel(big_f(0.25).unwrap(), want) < 1e-15);
}

#[test]
fn f_lower_bound_at_listed_points() {
    for x in [0.01, 0.1, 0.25, 0.4, 0.49] {
        let f = big_f(x).unwrap();
        assert!(f >= x * x / (1.0 - 2.0 * x) - 1e-14, "x = {x}");
    }
}

#[test]
fn mu_single_component() {
    // ρ = (1): μ solves F(μ) = L.
    let s = Spectrum::new(vec![2.5]).unwrap();
    for (l, want) in [
        (0.5, 0.341_077_783_550_313_66),
        (2.0, 0.427_921_147_655_695_16),
        (7.0, 0.472_041_893_863_665_76),
    ] {
        let sol = solve_mu(&[0.7], &s, l).unwrap();
        assert!(rel(sol.mu, want) < 1e-9, "L = {l}: {} vs {want}", sol.mu);
    }
}

/// Scalar bisection on the closed form of `F`, written independently of the
/// library.
fn bisect_f(target: f64) -> f64 {
    let f = |x: f64| 0.5 * (1.0 - 2.0 * x).ln() + x + 2.0 * x * x / (1.0 - 2.0 * x);
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn mu_single_component_matches_bisection() {
    let s = Spectrum::new(vec![1.0]).unwrap();
    for l in [0.05, 0.3, 1.0, 3.0, 12.0] {
        let got = solve_mu(&[1.0], &s, l).unwrap().mu;
        assert!(rel(got, bisect_f(l)) < 1e-9, "L = {l}");
    }
}

#[test]
fn q_plus_two_components() {
    let s = Spectrum::new(vec![1.0, 0.1]).unwrap();
    let tik = |a: f64| -> Vec<f64> { s.eigenvalues().iter().map(|l| l / (l + a)).collect() };
    let d_ref = d_of_alpha(&tik(10.0), &s);
    let ap = adaptive_penalty(&tik(0.05), &s, d_ref).unwrap();
    assert!(rel(ap.d, 12.649_728_508_826_624) < 1e-12);
    assert!(rel(ap.mu.mu, 0.454_722_091_147_389_3) < 1e-9);
    assert!(rel(ap.q_plus, 118.219_537_054_773_27) < 1e-9);
}

/// Neumaier-compensated `2 Σ h/λ`.
fn pen_u_compensated(h: &[f64], l: &[f64]) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for (h, l) in h.iter().zip(l) {
        let x = h / l;
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    2.0 * (sum + c)
}

#[test]
fn pen_u_against_compensated_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let p = rng.random_range(1..300);
        let mut l: Vec<f64> = (0..p).map(|_| 10f64.powf(rng.random_range(-6.0..2.0))).collect();
        l.sort_by(|a, b| b.total_cmp(a));
        let h: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
        let s = Spectrum::new(l.clone()).unwrap();
        assert!(rel(pen_u(&h, &s), pen_u_compensated(&h, &l)) < 1e-14);
    }
}

#[test]
fn log_d_grows_linearly_for_exponential_cutoff() {
    let s = Spectrum::exponential(40, 1.0).unwrap();
    let pts: Vec<(f64, f64)> = (5..=25)
        .map(|m| {
            let h: Vec<f64> = (1..=40).map(|k| if k <= m { 1.0 } else { 0.0 }).collect();
            (m as f64, d_of_alpha(&h, &s).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope - 1.0).abs() < 0.02, "slope {slope}");
}

#[test]
fn d_survives_extreme_spectrum() {
    let s = Spectrum::exponential(500, 1.0).unwrap();
    let d = d_of_alpha(&vec![1.0; 500], &s);
    assert!(d.is_finite() && d > 1e200);
}

#[test]
fn psi_half_kept_versus_one() {
    let s = Spectrum::polynomial(100, 2.0).unwrap();
    let grid = AlphaGrid::new(vec![1.0 / 50.0, 1.0]).unwrap();
    let table = PenaltyTable::build(&SmootherFamily::Cutoff, &grid, &s, 0.1).unwrap();
    assert_eq!(table.rows[0].one_minus_h_norm2, 50.0);
    assert_eq!(table.rows[1].one_minus_h_norm2, 99.0);
    let got = psi(&table).unwrap();
    assert!(rel(got, 1.629_877_258_051_000_2) < 1e-9, "{got}");
}

#[test]
fn psi_single_point() {
    let s = Spectrum::polynomial(30, 1.0).unwrap();
    let grid = AlphaGrid::new(vec![0.5]).unwrap();
    let table = PenaltyTable::build(&SmootherFamily::Cutoff, &grid, &s, 0.1).unwrap();
    let want = std::f64::consts::LN_2 / 28f64.sqrt();
    assert!(rel(table.psi.unwrap(), want) < 1e-14);
}

#[test]
fn psi_shrinks_with_dimension() {
    let mut last = f64::INFINITY;
    for p in [100, 1000, 10_000] {
        let s = Spectrum::polynomial(p, 1.0).unwrap();
        // Keep half the components at α_∘, one at α°.
        let grid = AlphaGrid::new(vec![2.0 / p as f64, 1.0]).unwrap();
        let table = PenaltyTable::build(&SmootherFamily::Cutoff, &grid, &s, 0.1).unwrap();
        let v = psi(&table).unwrap();
        assert!(v < last, "p = {p}: {v} >= {last}");
        last = v;
    }
}

#[test]
fn conditions_cutoff_polynomial() {
    let s = Spectrum::polynomial(50, 2.0).unwrap();
    let grid = default_grid(&SmootherFamily::Cutoff, &s, 0, AlphaFloorRule::Default).unwrap();
    let table = PenaltyTable::build(&SmootherFamily::Cutoff, &grid, &s, 0.1).unwrap();
    let rep = check_conditions(&table);
    assert!(rep.passed && rep.c2_hat > 0.0);
}

#[test]
fn conditions_cutoff_exponential() {
    let s = Spectrum::exponential(30, 1.0).unwrap();
    let grid = default_grid(&SmootherFamily::Cutoff, &s, 0, AlphaFloorRule::Default).unwrap();
    let table = PenaltyTable::build(&SmootherFamily::Cutoff, &grid, &s, 0.1).unwrap();
    let rep = check_conditions(&table);
    assert!(rep.passed);
    assert!(rel(rep.c2_trace, 1.0) < 1e-12);
    assert!(rel(rep.c2_hat, 0.712_057_529_518_122_9) < 1e-9, "{}", rep.c2_hat);
    // Same order as κ^{-1/2} = 1.
    assert!(rep.c2_hat > 0.5 && rep.c2_hat < 2.0);
}
