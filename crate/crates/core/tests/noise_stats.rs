//! Distributional checks on the noise generators against independent oracles.

use regcalc::noise::{sample_q_wiener, sample_real_bm, SeedSpec, StreamPurpose, TimeGrid};
use regcalc::spaces::TruncatedSpace;
use statrs::distribution::{ContinuousCDF, Normal};

const PATHS: u64 = 4000;

/// Kolmogorov–Smirnov statistic of `sample` against the standard normal.
fn ks_statistic(mut sample: Vec<f64>) -> f64 {
    let normal = Normal::standard();
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal.cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the one-sample KS test at level `alpha`.
fn ks_critical_at(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

fn ks_critical(n: usize) -> f64 {
    ks_critical_at(n, 0.01)
}

fn seed(path: u64, purpose: StreamPurpose) -> SeedSpec {
    SeedSpec::new(77, path, purpose)
}

#[test]
fn q_wiener_terminal_values_are_gaussian_with_variance_q_t() {
    let space = TruncatedSpace::dirichlet_laplacian(4).unwrap();
    let grid = TimeGrid::new(0.0, 2.0, 64).unwrap();
    let paths: Vec<_> = (0..PATHS)
        .map(|p| sample_q_wiener(&space, &grid, seed(p, StreamPurpose::QWiener)))
        .collect();
    for k in 0..4 {
        let sd = (space.q_eigenvalues()[k] * 2.0).sqrt();
        let z: Vec<f64> = paths.iter().map(|w| w.last()[k] / sd).collect();
        let d = ks_statistic(z);
        // Bonferroni over the four modes
        assert!(
            d < ks_critical_at(PATHS as usize, 0.01 / 4.0),
            "mode {k}: KS {d}"
        );
    }
}

#[test]
fn q_wiener_increments_have_variance_q_dt_and_independent_modes() {
    let space = TruncatedSpace::dirichlet_laplacian(3).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
    let dt = grid.dt();
    let (mut sq, mut cross, mut count) = ([0.0; 3], 0.0, 0.0);
    let mut cross_sq = 0.0;
    for p in 0..PATHS {
        let w = sample_q_wiener(&space, &grid, seed(p, StreamPurpose::QWiener));
        for i in 0..grid.n_steps() {
            let z: Vec<f64> = (0..3)
                .map(|k| (w.at(i + 1)[k] - w.at(i)[k]) / (space.q_eigenvalues()[k] * dt).sqrt())
                .collect();
            for k in 0..3 {
                sq[k] += z[k] * z[k];
            }
            cross += z[0] * z[1];
            cross_sq += (z[0] * z[1]).powi(2);
            count += 1.0;
        }
    }
    // E z² = 1 with Var z² = 2
    for (k, s) in sq.iter().enumerate() {
        let m = s / count;
        assert!(
            (m - 1.0).abs() < 4.0 * (2.0 / count).sqrt(),
            "mode {k}: {m}"
        );
    }
    let c = cross / count;
    let se = (cross_sq / count / count).sqrt();
    assert!(c.abs() < 4.0 * se, "cross moment {c}");
}

#[test]
fn real_brownian_motion_has_linear_variance() {
    let grid = TimeGrid::new(0.5, 1.5, 50).unwrap();
    let ends: Vec<f64> = (0..PATHS)
        .map(|p| sample_real_bm(&grid, seed(p, StreamPurpose::RealBrownian)).last()[0])
        .collect();
    assert!(ks_statistic(ends.clone()) < ks_critical(ends.len()));
    let mid: Vec<f64> = (0..PATHS)
        .map(|p| {
            sample_real_bm(&grid, seed(p, StreamPurpose::RealBrownian)).at(25)[0] / 0.5f64.sqrt()
        })
        .collect();
    assert!(ks_statistic(mid) < ks_critical(PATHS as usize));
}

#[test]
fn q_wiener_paths_are_nested_in_the_number_of_modes() {
    let small = TruncatedSpace::dirichlet_laplacian(4).unwrap();
    let large = TruncatedSpace::dirichlet_laplacian(16).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
    let a = sample_q_wiener(&small, &grid, seed(3, StreamPurpose::QWiener));
    let b = sample_q_wiener(&large, &grid, seed(3, StreamPurpose::QWiener));
    assert_eq!(b.truncate_modes(4).unwrap(), a);
}

#[test]
fn coarsened_paths_have_coarse_increment_variance() {
    let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
    let inc: Vec<f64> = (0..PATHS)
        .map(|p| {
            let w = sample_real_bm(&grid, seed(p, StreamPurpose::RealBrownian))
                .coarsen(8)
                .unwrap();
            assert_eq!(w.grid().n_steps(), 8);
            (w.at(3)[0] - w.at(2)[0]) / w.grid().dt().sqrt()
        })
        .collect();
    assert!(ks_statistic(inc) < ks_critical(PATHS as usize));
}

#[test]
fn purposes_and_paths_draw_distinct_streams() {
    let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
    let a = sample_real_bm(&grid, seed(0, StreamPurpose::RealBrownian));
    let b = sample_real_bm(&grid, seed(1, StreamPurpose::RealBrownian));
    let c = sample_real_bm(&grid, seed(0, StreamPurpose::Auxiliary(1)));
    assert_ne!(a, b);
    assert_ne!(a, c);
    assert_eq!(
        a,
        sample_real_bm(&grid, seed(0, StreamPurpose::RealBrownian))
    );
}
