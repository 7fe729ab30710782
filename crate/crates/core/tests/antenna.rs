use lwa_sbl::lwa::{sinc, sinc_prime};
use lwa_sbl::presets::{AntennaPreset, BAND_THETA_HI, BAND_THETA_LO};
use lwa_sbl::Antenna;
use num_complex::Complex;
use proptest::prelude::*;
use rand::Rng;

mod common;

fn band() -> (f64, f64) {
    AntennaPreset::PaperAntenna.band().unwrap()
}

#[test]
fn derivative_matches_central_difference() {
    let params = Antenna::paper();
    let (f_lo, f_hi) = band();
    let mut rng = common::rng(7);
    let h_deg: f64 = 1e-4;
    let h_rad = h_deg.to_radians();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = rng.random_range(f_lo..f_hi);
        let th = rng.random_range(-85.0..85.0);
        let fd = (params.steering_response(f, th + h_deg).unwrap() - params.steering_response(f, th - h_deg).unwrap()) / (2.0 * h_rad);
        let an = params.steering_derivative(f, th).unwrap();
        worst = worst.max((fd - an).norm() / an.norm());
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn taylor_error_is_quadratic_in_offset() {
    let params = Antenna::paper();
    let (f_lo, f_hi) = band();
    let freqs: Vec<f64> = (0..100).map(|i| f_lo + (f_hi - f_lo) * i as f64 / 99.0).collect();
    let col_err = |th: f64, beta_deg: f64| -> f64 {
        freqs
            .iter()
            .map(|&f| {
                let a0 = params.steering_response(f, th).unwrap();
                let a1 = params.steering_response(f, th + beta_deg).unwrap();
                let d = params.steering_derivative(f, th).unwrap();
                (a1 - a0 - d * beta_deg.to_radians()).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    };
    for th in [-60.0, -20.0, 0.0, 12.0, 40.0] {
        let ratio = col_err(th, 0.1) / col_err(th, 0.05);
        assert!((3.5..=4.5).contains(&ratio), "theta {th}: ratio {ratio}");
    }
}

#[test]
fn band_endpoints_map_to_target_angles() {
    let params = Antenna::paper();
    let (f_lo, f_hi) = band();
    assert!((params.radiating_angle(f_lo).unwrap() - BAND_THETA_LO).abs() < 1e-6);
    assert!((params.radiating_angle(f_hi).unwrap() - BAND_THETA_HI).abs() < 1e-6);
    assert!(f_lo > params.cutoff_frequency());
}

#[test]
fn sinc_series_joins_closed_form() {
    for r in [9e-3, 1.1e-2] {
        for phase in [0.0, 0.7, 2.0] {
            let u = Complex::from_polar(r, phase);
            let exact = u.sin() / u;
            assert!((sinc(u) - exact).norm() < 1e-13);
            let exact_d = (u.cos() * u - u.sin()) / (u * u);
            assert!((sinc_prime(u) - exact_d).norm() < 1e-9);
        }
    }
    assert_eq!(sinc(Complex::new(0.0f64, 0.0)), Complex::new(1.0, 0.0));
}

proptest! {
    #[test]
    fn beam_angle_increases_with_frequency(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let params = Antenna::paper();
        let (f_lo, f_hi) = band();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let t1 = params.radiating_angle(f_lo + lo * (f_hi - f_lo)).unwrap();
        let t2 = params.radiating_angle(f_lo + hi * (f_hi - f_lo)).unwrap();
        prop_assert!(t2 > t1);
    }

    #[test]
    fn beam_angle_inverts(theta in BAND_THETA_LO..BAND_THETA_HI) {
        let params = Antenna::paper();
        let (f_lo, f_hi) = band();
        let f = params.invert_beam_angle(theta, f_lo, f_hi).unwrap();
        prop_assert!((params.radiating_angle(f).unwrap() - theta).abs() < 1e-6);
    }

    #[test]
    fn beamwidth_is_positive_in_band(x in 0.0f64..1.0) {
        let params = Antenna::paper();
        let (f_lo, f_hi) = band();
        let b = params.beamwidth_3db(f_lo + x * (f_hi - f_lo)).unwrap();
        prop_assert!(b > 0.0 && b.is_finite());
    }
}
