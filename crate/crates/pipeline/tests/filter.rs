use causalnet_pipeline::filter::BandPass;
use causalnet_pipeline::PipelineError;
use ndarray::Array1;
use proptest::prelude::*;

const FS: f64 = 250.0;

fn sine(freq: f64, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |t| (2.0 * std::f64::consts::PI * freq * t as f64 / FS).sin())
}

/// Peak absolute value over the middle 80% of a series.
fn steady_peak(y: &[f64]) -> f64 {
    let n = y.len();
    y[n / 10..9 * n / 10].iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Squared magnitude of a second-order Butterworth band-pass prototype after
/// prewarping, evaluated at `freq`; forward-backward filtering squares it again.
fn analog_power(freq: f64, low: f64, high: f64) -> f64 {
    let warp = |f: f64| 2.0 * FS * (std::f64::consts::PI * f / FS).tan();
    let (w1, w2, w) = (warp(low), warp(high), warp(freq));
    let omega = (w * w - w1 * w2) / (w * (w2 - w1));
    1.0 / (1.0 + omega.powi(4))
}

#[test]
fn passband_sinusoid_keeps_its_amplitude() {
    let bp = BandPass::design(6.0, 15.0, FS).unwrap();
    let y = bp.filtfilt(sine(10.0, 1000).view());
    let peak = steady_peak(&y);
    assert!((peak - 1.0).abs() < 0.02, "peak {peak}");
}

#[test]
fn stopband_sinusoid_is_attenuated() {
    let bp = BandPass::design(6.0, 15.0, FS).unwrap();
    let y = bp.filtfilt(sine(2.0, 1000).view());
    let peak = steady_peak(&y);
    assert!(peak < 0.1, "peak {peak}");
}

#[test]
fn response_matches_warped_prototype() {
    let bp = BandPass::design(6.0, 15.0, FS).unwrap();
    // The prototype gain is 1 at the analog centre; the design is normalised
    // there too, so the two agree everywhere.
    for f in [1.0, 3.0, 6.0, 9.0, 12.0, 15.0, 30.0, 80.0] {
        let expected = analog_power(f, 6.0, 15.0).sqrt();
        let got = bp.magnitude(f);
        assert!((got - expected).abs() < 1e-9, "{f} Hz: {got} vs {expected}");
    }
    assert!((bp.magnitude(6.0) - 0.5f64.sqrt()).abs() < 1e-9);
}

#[test]
fn symmetric_impulse_stays_symmetric() {
    let bp = BandPass::design(6.0, 15.0, FS).unwrap();
    let n = 801;
    let mut x = Array1::zeros(n);
    x[n / 2] = 1.0;
    let y = bp.filtfilt(x.view());
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 1..n / 2 {
        assert!((y[n / 2 - k] - y[n / 2 + k]).abs() < 1e-9 * peak, "lag {k}");
    }
}

#[test]
fn invalid_bands_are_configuration_errors() {
    for (lo, hi) in [(0.0, 15.0), (15.0, 6.0), (6.0, 125.0), (-1.0, 5.0)] {
        assert!(matches!(BandPass::design(lo, hi, FS), Err(PipelineError::Config(_))));
    }
}

#[test]
fn short_and_empty_series() {
    let bp = BandPass::design(6.0, 15.0, FS).unwrap();
    assert!(bp.filtfilt(Array1::<f64>::zeros(0).view()).is_empty());
    let y = bp.filtfilt(Array1::from(vec![1.0, 2.0, 3.0]).view());
    assert_eq!(y.len(), 3);
    assert!(y.iter().all(|v| v.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filtering_is_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
        let bp = BandPass::design(6.0, 15.0, FS).unwrap();
        let x = Array1::from_shape_fn(300, |t| ((t as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0);
        let z = sine(7.0, 300);
        let combined = bp.filtfilt((&x * a + &z).view());
        let (fx, fz) = (bp.filtfilt(x.view()), bp.filtfilt(z.view()));
        for i in 0..300 {
            prop_assert!((combined[i] - (a * fx[i] + fz[i])).abs() < 1e-9);
        }
    }
}
