use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::gradcheck::{check, Probe, DEFAULT_STEP};
use crate::nn::{param_grads, ParamSet, Tensor};

const RATE: f64 = 336.0;

fn tone(n: usize, f_ghz: f64) -> Vec<f64> {
    (0..n)
        .map(|k| (2.0 * PI * f_ghz * k as f64 / RATE).cos())
        .collect()
}

fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64))
                .sum()
        })
        .collect()
}

fn random_signal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..FRAC_PI_4)).collect()
}

fn random_field(n: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::complex(
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
        RATE,
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_complex_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn lpf_passes_in_band_tone() {
    let x = tone(336, 10.0);
    let y = brickwall_lpf(&Waveform::real(x.clone(), RATE), 32.0).unwrap();
    assert!(max_abs_diff(&x, y.as_real().unwrap()) < 1e-12);
}

#[test]
fn lpf_removes_out_of_band_tone() {
    let x = tone(336, 40.0);
    let y = brickwall_lpf(&Waveform::real(x, RATE), 32.0).unwrap();
    assert!(y.as_real().unwrap().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn lpf_spectrum_is_masked_input_spectrum() {
    let n = 200;
    let x = random_signal(n, 3);
    let y = brickwall_lpf(&Waveform::real(x.clone(), RATE), 32.0).unwrap();
    let sx = naive_dft(&x);
    let sy = naive_dft(y.as_real().unwrap());
    for k in 0..n {
        let f = crate::dsp::bin_frequency(k, n, RATE);
        let want = if f.abs() <= 32.0 { sx[k] } else { Complex64::new(0.0, 0.0) };
        assert!((sy[k] - want).norm() < 1e-10, "bin {k}");
    }
}

#[test]
fn lpf_is_idempotent() {
    let w = Waveform::real(random_signal(480, 4), RATE);
    let once = brickwall_lpf(&w, 32.0).unwrap();
    let twice = brickwall_lpf(&once, 32.0).unwrap();
    let s1 = naive_dft(once.as_real().unwrap());
    let s2 = naive_dft(twice.as_real().unwrap());
    assert!(max_complex_diff(&s1, &s2) < 1e-12);
}

#[test]
fn lpf_rejects_cutoff_at_or_above_nyquist() {
    let w = Waveform::real(vec![0.0; 16], RATE);
    assert!(brickwall_lpf(&w, 168.0).is_err());
    assert!(brickwall_lpf(&w, 200.0).is_err());
    assert!(brickwall_lpf(&w, 167.9).is_ok());
}

#[test]
fn quantization_noise_variance_matches_closed_form() {
    let n = 10_000_000;
    let w = Waveform::real(vec![0.0; n], RATE);
    let y = add_quantization_noise(&w, 6.0, NoiseDraw::new(11, 0), NoiseStage::Dac).unwrap();
    let y = y.as_real().unwrap();
    let step = FRAC_PI_4 / 64.0;
    assert!((step * step / 12.0 - 1.255e-5).abs() < 1e-8);
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    assert!((var / (step * step / 12.0) - 1.0).abs() < 0.01, "variance {var}");
    assert!(y.iter().all(|v| v.abs() <= step / 2.0));
}

#[test]
fn noise_is_reproducible_per_draw() {
    let w = Waveform::real(random_signal(100, 5), RATE);
    let draw = NoiseDraw::new(7, 3);
    let a = add_quantization_noise(&w, 6.0, draw, NoiseStage::Adc).unwrap();
    let b = add_quantization_noise(&w, 6.0, draw, NoiseStage::Adc).unwrap();
    assert_eq!(a, b);
    let c = add_receiver_noise(&w, 2.455e-4, draw).unwrap();
    let d = add_receiver_noise(&w, 2.455e-4, draw).unwrap();
    assert_eq!(c, d);
    let other = add_receiver_noise(&w, 2.455e-4, NoiseDraw::new(7, 4)).unwrap();
    assert_ne!(c, other);
}

#[test]
fn disabled_noise_is_identity() {
    let cfg = ChannelConfig::noiseless().with_length(0.0);
    let plan = ChannelPlan::new(&cfg, 64).unwrap();
    assert_eq!(plan.sample_noise(NoiseDraw::new(1, 1)), NoiseSample::none());
    let w = Waveform::real(random_signal(64, 6), RATE);
    assert_eq!(add_receiver_noise(&w, 0.0, NoiseDraw::new(1, 1)).unwrap(), w);
}

#[test]
fn receiver_noise_variance_matches_setting() {
    let n = 10_000_000;
    let w = Waveform::real(vec![0.0; n], RATE);
    let y = add_receiver_noise(&w, 2.455e-4, NoiseDraw::new(12, 0)).unwrap();
    let y = y.as_real().unwrap();
    let var = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    assert!((var / 2.455e-4 - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn negative_receiver_variance_is_an_error() {
    let w = Waveform::real(vec![0.0; 4], RATE);
    assert!(add_receiver_noise(&w, -1e-6, NoiseDraw::new(0, 0)).is_err());
}

#[test]
fn mzm_is_sinusoidal() {
    let w = Waveform::real(vec![0.0, FRAC_PI_4], RATE);
    let e = mzm(&w).unwrap();
    let e = e.as_complex().unwrap();
    assert_eq!(e[0], Complex64::new(0.0, 0.0));
    assert!((e[1].re - 2f64.sqrt() / 2.0).abs() < 1e-15);
    assert_eq!(e[1].im, 0.0);

    // dE/dx = cos(x)
    for x in [0.1, 0.4, 0.7] {
        let h = 1e-6;
        let plus = mzm(&Waveform::real(vec![x + h], RATE)).unwrap().as_complex().unwrap()[0].re;
        let minus = mzm(&Waveform::real(vec![x - h], RATE)).unwrap().as_complex().unwrap()[0].re;
        assert!(((plus - minus) / (2.0 * h) - x.cos()).abs() < 1e-9);
    }
}

#[test]
fn beta2_conversion() {
    // -D lambda^2 / (2 pi c): 17 ps/(nm km) * (1550 nm)^2 / (2 pi * 2.99792458e5 nm/ps)
    let independent = -(17.0 * 1550.0f64.powi(2)) / (2.0 * PI * 299_792_458.0 * 1e9 / 1e12);
    let b2 = beta2_ps2_per_km(17.0, 1550.0);
    assert!((b2 - independent).abs() / independent.abs() < 1e-12);
    assert!((b2 - (-21.68)).abs() < 0.005, "beta2 = {b2}");
    assert_eq!(format!("{:.6e}", b2), format!("{:.6e}", independent));
}

#[test]
fn zero_length_fiber_is_identity() {
    let cfg = ChannelConfig::default().with_length(0.0);
    let e = random_field(300, 8);
    let out = fiber_propagate(&e, &cfg).unwrap();
    assert_eq!(e.as_complex().unwrap(), out.as_complex().unwrap());
}

#[test]
fn lossless_fiber_conserves_energy() {
    let mut cfg = ChannelConfig::default().with_length(80.0);
    cfg.attenuation_db_km = 0.0;
    let e = random_field(1000, 9);
    let out = fiber_propagate(&e, &cfg).unwrap();
    assert!((out.energy() / e.energy() - 1.0).abs() < 1e-9);
}

#[test]
fn fiber_response_magnitude_is_attenuation() {
    let cfg = ChannelConfig::default().with_length(37.0);
    let f = fiber_filter(512, RATE, &cfg);
    let want = field_attenuation(0.2, 37.0);
    for h in f.response() {
        assert!((h.norm() - want).abs() < 1e-15);
    }
}

#[test]
fn fiber_lengths_add() {
    let cfg = ChannelConfig::default();
    let e = random_field(640, 10);
    let a = fiber_propagate(&fiber_propagate(&e, &cfg.clone().with_length(12.5)).unwrap(), &cfg.clone().with_length(30.0)).unwrap();
    let b = fiber_propagate(&e, &cfg.with_length(42.5)).unwrap();
    let scale = b.as_complex().unwrap().iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(max_complex_diff(a.as_complex().unwrap(), b.as_complex().unwrap()) / scale < 1e-9);
}

#[test]
fn photodiode_is_square_law() {
    let e = Waveform::complex(vec![Complex64::new(0.0, 0.0), Complex64::new(0.3, -0.4)], RATE);
    let y = photodiode(&e).unwrap();
    assert_eq!(y.as_real().unwrap()[0], 0.0);
    assert!((y.as_real().unwrap()[1] - 0.25).abs() < 1e-15);

    let e = random_field(50, 13);
    let y = photodiode(&e).unwrap();
    for (c, p) in e.as_complex().unwrap().iter().zip(y.as_real().unwrap()) {
        assert_eq!(*p, c.re * c.re + c.im * c.im);
        assert!(*p >= 0.0);
    }
    let constant = Waveform::complex(vec![Complex64::from_polar(0.6, 1.1); 8], RATE);
    for p in photodiode(&constant).unwrap().as_real().unwrap() {
        assert!((p - 0.36).abs() < 1e-15);
    }
}

#[test]
fn noiseless_back_to_back_constant_input() {
    let cfg = ChannelConfig::noiseless().with_length(0.0);
    let x0 = 0.5;
    let y = channel_forward(&Waveform::real(vec![x0; 480], RATE), &cfg, NoiseDraw::new(0, 0)).unwrap();
    for v in y.as_real().unwrap() {
        assert!((v - x0.sin().powi(2)).abs() < 1e-12);
    }
}

#[test]
fn dispersion_changes_waveform_but_field_energy_only_scales() {
    let n = 960;
    let mut x = vec![0.0; n];
    for v in x.iter_mut().skip(470).take(20) {
        *v = FRAC_PI_4;
    }
    let tx = Waveform::real(x, RATE);
    let back_to_back = ChannelConfig::noiseless().with_length(0.0);
    let long = ChannelConfig::noiseless().with_length(20.0);

    let drive = brickwall_lpf(&tx, 32.0).unwrap();
    let field = mzm(&drive).unwrap();
    let propagated = fiber_propagate(&field, &long).unwrap();
    let ratio = propagated.energy() / field.energy();
    assert!((ratio - 10f64.powf(-2.0 * 0.2 * 20.0 / 20.0)).abs() < 1e-12);

    let y0 = channel_forward(&tx, &back_to_back, NoiseDraw::new(0, 0)).unwrap();
    let y20 = channel_forward(&tx, &long, NoiseDraw::new(0, 0)).unwrap();
    let y0 = y0.as_real().unwrap();
    let y20 = y20.as_real().unwrap();
    let loss = 10f64.powf(-0.2 * 20.0 / 10.0);
    // power shape changes beyond the pure attenuation
    let scaled: Vec<f64> = y0.iter().map(|v| v * loss).collect();
    assert!(max_abs_diff(&scaled, y20) > 1e-3);
    // pulse broadens: more samples above 10% of the peak
    let width = |y: &[f64]| {
        let peak = y.iter().cloned().fold(0.0, f64::max);
        y.iter().filter(|&&v| v > 0.1 * peak).count()
    };
    assert!(width(y20) > width(y0));
}

#[test]
fn plan_matches_stagewise_functions() {
    let cfg = ChannelConfig::default().with_length(30.0);
    let n = 480;
    let x = random_signal(n, 14);
    let draw = NoiseDraw::new(5, 9);
    let plan = ChannelPlan::new(&cfg, n).unwrap();
    let via_plan = plan.run(&x, &plan.sample_noise(draw)).unwrap();
    let via_stages = channel_forward(&Waveform::real(x, RATE), &cfg, draw).unwrap();
    assert!(max_abs_diff(&via_plan, via_stages.as_real().unwrap()) < 1e-13);
}

#[test]
fn graph_record_matches_plan() {
    let cfg = ChannelConfig::default().with_length(50.0);
    let n = 240;
    let x = random_signal(n, 15);
    let plan = ChannelPlan::new(&cfg, n).unwrap();
    let noise = plan.sample_noise(NoiseDraw::new(2, 2));
    let direct = plan.run(&x, &noise).unwrap();
    let mut g = Graph::new();
    let tx = g.leaf(ndarray::Array2::from_shape_vec((1, n), x).unwrap());
    let y = plan.record(&mut g, tx, &noise);
    let recorded = g.value(y).as_slice().unwrap().to_vec();
    assert!(max_abs_diff(&direct, &recorded) < 1e-15);
}

#[test]
fn channel_gradient_matches_finite_differences() {
    let cfg = ChannelConfig::default().with_length(40.0);
    let n = 96;
    let plan = ChannelPlan::new(&cfg, n).unwrap();
    let noise = plan.sample_noise(NoiseDraw::new(3, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let weights = ndarray::Array2::from_shape_fn((1, n), |_| rng.random_range(-1.0..1.0));
    let mut params = ParamSet::new();
    params.push("tx", Tensor::from_vector(random_signal(n, 17)));

    let objective = |p: &ParamSet| {
        let mut g = Graph::new();
        let vars = g.bind(p);
        let y = plan.record(&mut g, vars[0], &noise);
        let w = g.leaf(weights.clone());
        let prod = g.mul(y, w);
        let out = g.sum(prod);
        (g, vars, out)
    };
    let (g, vars, out) = objective(&params);
    let analytic = param_grads(&g.backward(out), &vars);
    let report = check(&params, &analytic, DEFAULT_STEP, |p| {
        let (g, _, out) = objective(p);
        Probe {
            value: g.scalar(out),
            signature: 0,
        }
    });
    assert!(report.passes(1e-4), "{report:?}");
}

/// Back-to-back PAM2 waveform: measured SNR versus the sum of the
/// receiver noise and the converter contributions, each shaped by the
/// fraction of DFT bins the receiver filter passes.
#[test]
fn back_to_back_snr_matches_noise_budget() {
    let cfg = ChannelConfig::default().with_length(0.0);
    let g = 8;
    let symbols = 6000;
    let n = symbols * g;
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let bits: Vec<u8> = (0..symbols).map(|_| rng.random_range(0..2u8)).collect();
    let tx = crate::baselines::pam2::pam2_modulate(&bits, g, 0.25);
    let plan = ChannelPlan::new(&cfg, n).unwrap();
    let clean = plan.run(&tx, &NoiseSample::none()).unwrap();
    let noisy = plan.run(&tx, &plan.sample_noise(NoiseDraw::new(21, 0))).unwrap();

    let signal_power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let noise_power = clean
        .iter()
        .zip(&noisy)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        / n as f64;

    let passband = (0..n)
        .filter(|&k| crate::dsp::bin_frequency(k, n, cfg.simulation_rate_gsa()).abs() <= cfg.lpf_cutoff_ghz)
        .count() as f64
        / n as f64;
    let q = quantization_step(cfg.enob).powi(2) / 12.0;
    // small-signal gain of sin^2 at the filtered drive is sin(2x)
    let drive = brickwall_lpf(&Waveform::real(tx, RATE), cfg.lpf_cutoff_ghz).unwrap();
    let gain = drive
        .as_real()
        .unwrap()
        .iter()
        .map(|x| (2.0 * x).sin().powi(2))
        .sum::<f64>()
        / n as f64;
    let predicted = cfg.receiver_noise_variance * passband + gain * q * passband + q;

    let measured_db = 10.0 * (signal_power / noise_power).log10();
    let predicted_db = 10.0 * (signal_power / predicted).log10();
    assert!(
        (measured_db - predicted_db).abs() < 0.5,
        "measured {measured_db:.3} dB, predicted {predicted_db:.3} dB"
    );
}

#[test]
fn config_validation() {
    assert!(ChannelConfig::default().validate().is_ok());
    let mut c = ChannelConfig::default();
    c.oversampling = 0;
    assert!(c.validate().is_err());
    let c = ChannelConfig::default().with_length(-1.0);
    assert!(c.validate().is_err());
    let mut c = ChannelConfig::default();
    c.receiver_noise_variance = -1.0;
    assert!(c.validate().is_err());
    let mut c = ChannelConfig::default();
    c.lpf_cutoff_ghz = 200.0;
    assert!(c.validate().is_err());
    assert_eq!(ChannelConfig::default().simulation_rate_gsa(), 336.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn photodiode_output_is_nonnegative(seed in any::<u64>(), len in 1usize..64) {
        let y = photodiode(&random_field(len, seed)).unwrap();
        prop_assert!(y.as_real().unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn fiber_energy_scales_by_attenuation(seed in any::<u64>(), km in 0.0f64..120.0) {
        let cfg = ChannelConfig::default().with_length(km);
        let e = random_field(128, seed);
        let out = fiber_propagate(&e, &cfg).unwrap();
        let want = field_attenuation(0.2, km).powi(2);
        prop_assert!((out.energy() / e.energy() / want - 1.0).abs() < 1e-9);
    }
}
