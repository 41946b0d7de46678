use fsvol_core::asymptotics::{theoretical_kappa, KappaOptions};
use fsvol_core::grid::TimeGrid;
use fsvol_core::model::{Innovation, ModelParams};
use fsvol_core::sigma::{CumulativeVolatility, SigmaShape};
use fsvol_core::sim::{simulate_latent, simulate_panel};
use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided Kolmogorov–Smirnov statistic against the standard normal.
fn ks_normal(mut xs: Vec<f64>) -> f64 {
    let z = Normal::new(0.0, 1.0).unwrap();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = z.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn standardized_increments_are_standard_normal() {
    let params: ModelParams<f64> = ModelParams::ar1(SigmaShape::UShape.spec(), 0.55, 0.25).unwrap();
    let grid = TimeGrid::new(13).unwrap();
    let n = 10_000;
    let (panel, latent) = simulate_panel(&params, n, grid, 100, 4242u64).unwrap();
    let cv = CumulativeVolatility::on_grid(&params.sigma, grid);
    let cells = cv.increments();
    let g = latent.g();
    // 1% critical value of the one-sample KS statistic
    let crit = 1.63 / (n as f64).sqrt();
    for k in [1, 7, 13] {
        let z: Vec<f64> =
            (0..n).map(|i| (panel.row(i)[k] - panel.row(i)[k - 1]) / (g[i] * cells[k - 1].sqrt())).collect();
        let d = ks_normal(z);
        assert!(d < crit, "cell {k}: KS {d} >= {crit}");
    }
    let end: Vec<f64> = (0..n).map(|i| panel.row(i)[13] / (g[i] * cv.g()[13].sqrt())).collect();
    assert!(ks_normal(end) < crit);
}

#[test]
fn brownian_streams_are_uncorrelated_with_latent_innovations() {
    let params: ModelParams<f64> = ModelParams::ar1(SigmaShape::Flat.spec(), 0.55, 0.25).unwrap();
    let grid = TimeGrid::new(4).unwrap();
    let n = 20_000;
    let (panel, latent) = simulate_panel(&params, n, grid, 100, 99u64).unwrap();
    let eps: Vec<f64> = (1..n).map(|i| latent.log_g[i] - 0.55 * latent.log_g[i - 1]).collect();
    let w: Vec<f64> = (1..n).map(|i| (panel.row(i)[1] - panel.row(i)[0]) / latent.g()[i]).collect();
    let corr = |a: &[f64], b: &[f64]| {
        let (ma, mb) = (a.iter().sum::<f64>() / a.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    let bound = 4.0 / (n as f64).sqrt();
    assert!(corr(&eps, &w).abs() < bound);
    let w_next: Vec<f64> = (1..n).map(|i| (panel.row(i)[2] - panel.row(i)[1]) / latent.g()[i]).collect();
    assert!(corr(&w, &w_next).abs() < bound);
}

#[test]
fn latent_autocovariances_match_theory() {
    let params: ModelParams<f64> =
        ModelParams::new(SigmaShape::Flat.spec(), vec![0.5, 0.3], 1.0, Innovation::Gaussian).unwrap();
    let x = simulate_latent(&params, 200_000, 1000, 7u64).unwrap().log_g;
    let kappa = theoretical_kappa(&params, KappaOptions::default()).unwrap();
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    for h in 0..4 {
        let g = (0..n - h).map(|i| (x[i] - mean) * (x[i + h] - mean)).sum::<f64>() / n as f64;
        assert!((g / kappa.get(h as i64) - 1.0).abs() < 0.05, "lag {h}: {g} vs {}", kappa.get(h as i64));
    }
}

#[test]
fn student_t_innovations_have_target_variance_and_kurtosis() {
    let inn: Innovation<f64> = Innovation::StudentT { df: 12.0 };
    let params: ModelParams<f64> = ModelParams::new(SigmaShape::Flat.spec(), vec![1e-9], 0.5, inn).unwrap();
    let x = simulate_latent(&params, 400_000, 0, 3u64).unwrap().log_g;
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
    let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    assert!((m2 / 0.5 - 1.0).abs() < 0.01);
    assert!((m4 / (m2 * m2) - inn.eta()).abs() < 0.25, "kurtosis {} vs {}", m4 / (m2 * m2), inn.eta());
}

#[test]
fn single_precision_tracks_double_precision() {
    let p64 = ModelParams::ar1(SigmaShape::Sine.spec::<f64>(), 0.55, 0.25).unwrap();
    let p32 = ModelParams::ar1(SigmaShape::Sine.spec::<f32>(), 0.55, 0.25).unwrap();
    let grid = TimeGrid::new(78).unwrap();
    let (a, _) = simulate_panel(&p64, 50, grid, 100, 5u64).unwrap();
    let (b, _) = simulate_panel(&p32, 50, grid, 100, 5u64).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - *y as f64).abs() < 1e-4 * (1.0 + x.abs()));
    }
}
