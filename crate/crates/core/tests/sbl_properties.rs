use lwa_sbl::offgrid::{run_offgrid, OffGridConfig};
use lwa_sbl::presets::AntennaPreset;
use lwa_sbl::sbl::{
    gamma_update_em, gamma_update_regularized, log_evidence, noise_update, posterior_c_form, posterior_information_form, row_norms_sq,
    run_ongrid, GammaUpdate, SblConfig,
};
use lwa_sbl::signal::steering_matrix_at;
use lwa_sbl::Antenna;
use nalgebra::DMatrix;
use num_complex::Complex;
use proptest::prelude::*;
use rand::Rng;

mod common;
use common::{complex_gaussian, positive, rel_diff};

fn evidence_only_config() -> SblConfig<f64> {
    SblConfig {
        max_iter: 200,
        tol: 1e-15,
        prior_c: 1.0,
        prior_d: 0.0,
        prune_threshold: 1e-14,
        gamma_update: GammaUpdate::Em,
        ..SblConfig::default()
    }
}

#[test]
fn information_and_covariance_forms_agree() {
    let mut rng = common::rng(11);
    for i in 0..50 {
        let n = 4 + i % 9;
        let p = 3 + (i * 7) % 20;
        let t = 1 + i % 5;
        let a = complex_gaussian(&mut rng, n, p);
        let y = complex_gaussian(&mut rng, n, t);
        let gamma = positive(&mut rng, p, 0.05, 3.0);
        let sigma2 = rng.random_range(0.01..1.0);
        let (m1, c1) = posterior_information_form(&a, &y, &gamma, sigma2).unwrap();
        let (m2, c2) = posterior_c_form(&a, &y, &gamma, sigma2).unwrap();
        assert!(rel_diff(&c1, &c2) < 1e-8, "instance {i}: covariance {:e}", rel_diff(&c1, &c2));
        assert!(rel_diff(&m1, &m2) < 1e-8, "instance {i}: mean {:e}", rel_diff(&m1, &m2));
    }
}

#[test]
fn hand_rolled_em_never_decreases_evidence() {
    let mut rng = common::rng(5);
    for inst in 0..20 {
        let a = complex_gaussian(&mut rng, 8, 16);
        let x = DMatrix::from_fn(
            16,
            4,
            |p, _| if p % 5 == 0 { Complex::new(rng.random_range(-2.0..2.0), 1.0) } else { Complex::new(0.0, 0.0) },
        );
        let y = &a * x + complex_gaussian(&mut rng, 8, 4).map(|z| z * 0.3);
        let mut gamma = vec![1.0; 16];
        let mut sigma2 = 0.5;
        let mut prev = log_evidence(&a, &y, &gamma, sigma2).unwrap();
        for it in 0..200 {
            let (u, cov) = posterior_c_form(&a, &y, &gamma, sigma2).unwrap();
            let sd: Vec<f64> = (0..16).map(|p| cov[(p, p)].re).collect();
            let next_sigma2 = noise_update(&y, &a, &u, &gamma, &sd, sigma2, 1.0, 0.0);
            gamma = gamma_update_em(&u, &sd, 4);
            sigma2 = next_sigma2;
            let cur = log_evidence(&a, &y, &gamma, sigma2).unwrap();
            assert!(cur - prev >= -1e-10, "instance {inst} step {it}: {prev} -> {cur}");
            prev = cur;
        }
    }
}

#[test]
fn engine_trace_never_decreases_evidence() {
    let mut rng = common::rng(6);
    let config = SblConfig { trace: true, ..evidence_only_config() };
    for inst in 0..20 {
        let a = complex_gaussian(&mut rng, 8, 16);
        let y = complex_gaussian(&mut rng, 8, 4);
        let state = run_ongrid(&a, &y, &config).unwrap();
        assert!(state.trace.len() > 50);
        for w in state.trace.windows(2) {
            assert!(w[1].log_evidence - w[0].log_evidence >= -1e-10, "instance {inst} at {}", w[1].iteration);
        }
    }
}

#[test]
fn regularized_rule_tends_to_em() {
    let mut rng = common::rng(8);
    for _ in 0..20 {
        let t = rng.random_range(1..50);
        let u = complex_gaussian(&mut rng, 12, t);
        let sd = positive(&mut rng, 12, 1e-3, 2.0);
        let em = gamma_update_em(&u, &sd, t);
        let reg = gamma_update_regularized(&row_norms_sq(&u), &sd, t, 1e-8);
        for (e, r) in em.iter().zip(&reg) {
            assert!((e - r).abs() <= 1e-6 * e.abs(), "{e} vs {r}");
        }
    }
}

#[test]
fn data_scaling_scales_variances() {
    let mut rng = common::rng(9);
    let config = SblConfig { max_iter: 300, tol: 1e-10, ..evidence_only_config() };
    let a = complex_gaussian(&mut rng, 10, 20);
    let y = complex_gaussian(&mut rng, 10, 6);
    let s = 37.0;
    let base = run_ongrid(&a, &y, &config).unwrap();
    let scaled = run_ongrid(&a, &y.map(|z| z * s), &config).unwrap();
    assert_eq!(base.support(), scaled.support());
    for (g0, g1) in base.gamma.iter().zip(&scaled.gamma) {
        assert!((g1 - s * s * g0).abs() <= 1e-6 * s * s * base.max_gamma());
    }
    assert!((scaled.sigma2 / base.sigma2 - s * s).abs() < 1e-6 * s * s);
}

#[test]
fn snapshot_rotation_leaves_variances_unchanged() {
    let mut rng = common::rng(10);
    let a = complex_gaussian(&mut rng, 6, 12);
    let y = complex_gaussian(&mut rng, 6, 40);
    let q = complex_gaussian(&mut rng, 40, 40).qr().q();
    let config = SblConfig::default();
    let s1 = run_ongrid(&a, &y, &config).unwrap();
    let s2 = run_ongrid(&a, &(&y * &q), &config).unwrap();
    assert_eq!(s1.mean.ncols(), 40);
    assert_eq!(s1.iterations, s2.iterations);
    for (g1, g2) in s1.gamma.iter().zip(&s2.gamma) {
        assert!((g1 - g2).abs() <= 1e-8 * s1.max_gamma());
    }
    assert!(rel_diff(&(&s1.mean * &q), &s2.mean) < 1e-7);
}

fn sector_dictionary(angles: &[f64]) -> (DMatrix<Complex<f64>>, DMatrix<Complex<f64>>, Vec<f64>) {
    let params = Antenna::paper();
    let grid = AntennaPreset::PaperAntenna.grid::<f64>().unwrap();
    let freqs: Vec<f64> = (34..=62).map(|i| grid.freq(i)).collect();
    let a = steering_matrix_at(&params, &freqs, angles).unwrap();
    let b = lwa_sbl::signal::derivative_matrix_at(&params, &freqs, angles).unwrap().map(|z| z * 1f64.to_radians());
    (a, b, freqs)
}

#[test]
fn on_grid_truth_gives_near_zero_offset() {
    let grid: Vec<f64> = (0..=30).map(|i| i as f64).collect();
    let (a, b, freqs) = sector_dictionary(&grid);
    let truth = steering_matrix_at(&Antenna::paper(), &freqs, &[12.0]).unwrap();
    let mut rng = common::rng(12);
    let s = DMatrix::from_fn(1, 50, |_, _| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let y = truth * s + complex_gaussian(&mut rng, freqs.len(), 50).map(|z| z * 1e-3);
    let out = run_offgrid(&a, &b, &y, &SblConfig::default(), &OffGridConfig::new(1.0)).unwrap();
    let peak = out.sbl.gamma.iter().enumerate().fold(0, |m, (i, &g)| if g > out.sbl.gamma[m] { i } else { m });
    assert_eq!(peak, 12);
    assert!(out.beta[peak].abs() < 0.05, "beta {}", out.beta[peak]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn offsets_stay_within_half_step(seed in 0u64..1000, truth in 0.0f64..30.0) {
        let grid: Vec<f64> = (0..=30).map(|i| i as f64).collect();
        let (a, b, freqs) = sector_dictionary(&grid);
        let mut rng = common::rng(seed);
        let at = steering_matrix_at(&Antenna::paper(), &freqs, &[truth]).unwrap();
        let y = at * complex_gaussian(&mut rng, 1, 20) + complex_gaussian(&mut rng, freqs.len(), 20).map(|z| z * 0.1);
        let out = run_offgrid(&a, &b, &y, &SblConfig::default(), &OffGridConfig::new(1.0)).unwrap();
        prop_assert!(out.beta.iter().all(|b| b.abs() <= 0.5 + 1e-12));
        prop_assert!(out.sbl.gamma.iter().all(|g| *g >= 0.0 && g.is_finite()));
        prop_assert!(out.sbl.sigma2 > 0.0);
    }

    #[test]
    fn regularized_update_is_below_em(un in 0.0f64..1e3, sd in 0.0f64..10.0, t in 1usize..200, vs in 1e-6f64..10.0) {
        let reg = gamma_update_regularized(&[un], &[sd], t, vs)[0];
        let em = (un + t as f64 * sd) / t as f64;
        prop_assert!(reg >= 0.0 && reg <= em * (1.0 + 1e-12));
    }
}
