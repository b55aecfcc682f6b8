#![allow(clippy::needless_range_loop)]

mod common;

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use phaseline::metrics::{awe_summary, lsc_of_magnitude, recompute_differences, Histogram, MagnitudeMask};
use phaseline::nn::{build_feature, Architecture, ConvNetModel, DnnEstimator, Head, Layer, LayerKind};
use phaseline::pghi::{pghi_reconstruct, HeapIntegrationParams, RtpghiReconstructor, RtpghiState};
use phaseline::phasediff::{awe, magnitude_floor, oracle_differences, to_complex_ratios, wrap, PhaseDifferenceFrame};
use phaseline::pipeline::{integrate_time, integrate_wls};
use phaseline::wls::{
    griffin_lim_refine_traced, initialize_first_frame, objective, solve_frame, ReconstructionState,
    TridiagonalHermitianSystem, WlsConfig, WlsReconstructor,
};
use phaseline::{istft, stft, Spectrogram, StftConfig, TfGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn cfg_strategy() -> impl Strategy<Value = StftConfig> {
    prop_oneof![
        Just((256usize, 64usize)),
        Just((512, 128)),
        Just((1024, 256)),
        Just((400, 100))
    ]
    .prop_map(|(l, h)| hann(l, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_round_trip(cfg in cfg_strategy(), len in 1usize..12_000, seed: u64) {
        let x = noise(len, seed);
        let y = istft(&stft(&x, &cfg, SR).unwrap()).unwrap();
        prop_assert_eq!(y.len(), x.len());
        prop_assert!(rel(&y, &x) <= 1e-6);
    }

    #[test]
    fn stft_is_linear(len in 300usize..6000, a in -3.0f64..3.0, b in -3.0f64..3.0, seed: u64) {
        let cfg = hann(256, 64);
        let (x, y) = (noise(len, seed), noise(len, seed ^ 0xabc));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (sx, sy, sm) = (stft(&x, &cfg, SR).unwrap(), stft(&y, &cfg, SR).unwrap(), stft(&mix, &cfg, SR).unwrap());
        let mut num = 0.0;
        let mut den = 0.0;
        for ((p, q), m) in sx.coefficients().as_slice().iter().zip(sy.coefficients().as_slice()).zip(sm.coefficients().as_slice()) {
            num += (a * p + b * q - m).norm_sqr();
            den += m.norm_sqr();
        }
        prop_assert!(num.sqrt() <= 1e-9 * den.sqrt().max(1e-300));
    }

    #[test]
    fn wrap_is_idempotent(x in -1e4f64..1e4) {
        let w = wrap(x);
        prop_assert_eq!(wrap(w), w);
        prop_assert!(w > -PI && w <= PI);
    }

    #[test]
    fn awe_ignores_multiples_of_two_pi(a in -10.0f64..10.0, b in -10.0f64..10.0, k in -20i32..20, j in -20i32..20) {
        let shifted = awe(a + TAU * k as f64, b + TAU * j as f64);
        prop_assert!((awe(a, b) - shifted).abs() < 1e-9);
    }

    #[test]
    fn ratios_ignore_two_pi_shifts(bins in 2usize..40, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prev: Vec<f64> = (0..bins).map(|_| rng.gen_range(0.0..2.0)).collect();
        let cur: Vec<f64> = (0..bins).map(|_| rng.gen_range(0.0..2.0)).collect();
        let tpd: Vec<f64> = (0..bins).map(|_| rng.gen_range(-PI..PI)).collect();
        let fpd: Vec<f64> = (0..bins - 1).map(|_| rng.gen_range(-PI..PI)).collect();
        let shift = |v: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
            v.iter().map(|x| x + TAU * rng.gen_range(-50i32..50) as f64).collect()
        };
        let (tpd2, fpd2) = (shift(&tpd, &mut rng), shift(&fpd, &mut rng));
        let a = to_complex_ratios(&prev, &cur, &tpd, &fpd, 1e-10).unwrap();
        let b = to_complex_ratios(&prev, &cur, &tpd2, &fpd2, 1e-10).unwrap();
        for (x, y) in a.v.iter().chain(&a.u).zip(b.v.iter().chain(&b.u)) {
            prop_assert!((x - y).norm() <= 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn oracle_ratio_angles_match_differences(len in 2000usize..6000, seed: u64) {
        let cfg = hann(256, 64);
        let spec = stft(&noise(len, seed), &cfg, SR).unwrap();
        let mag = spec.magnitude();
        let diffs = oracle_differences(&spec).unwrap();
        let floor = magnitude_floor(mag.max_value());
        for n in 1..mag.frames() {
            let d = &diffs[n];
            let r = to_complex_ratios(mag.frame(n - 1), mag.frame(n), d.tpd.as_ref().unwrap(), &d.fpd, floor).unwrap();
            for (v, t) in r.v.iter().zip(d.tpd.as_ref().unwrap()) {
                prop_assert!(awe(v.arg(), *t) <= 1e-12);
            }
            for (u, f) in r.u.iter().zip(&d.fpd) {
                prop_assert!(awe(u.arg(), *f) <= 1e-12);
            }
        }
    }

    #[test]
    fn solver_matches_dense_lu(m in 2usize..80, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let upper: Vec<Complex64> = (0..m - 1).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let diag: Vec<f64> = (0..m)
            .map(|i| {
                let l = if i > 0 { upper[i - 1].norm() } else { 0.0 };
                let r = if i + 1 < m { upper[i].norm() } else { 0.0 };
                l + r + rng.gen_range(1e-3..1.0)
            })
            .collect();
        let rhs: Vec<Complex64> = (0..m).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let mut a = DMatrix::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = Complex64::new(diag[i], 0.0);
            if i + 1 < m {
                a[(i, i + 1)] = upper[i];
                a[(i + 1, i)] = upper[i].conj();
            }
        }
        let reference = a.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let x = TridiagonalHermitianSystem { diag, upper, rhs }.solve().unwrap();
        let num: f64 = x.iter().zip(reference.iter()).map(|(p, q)| (p - q).norm_sqr()).sum();
        let den: f64 = reference.iter().map(|q| q.norm_sqr()).sum();
        prop_assert!((num / den).sqrt() <= 1e-10);
    }

    #[test]
    fn gamma0_zero_is_time_integration(bins in 2usize..64, frames in 2usize..12, seed: u64) {
        let (mag, diffs) = random_frames(bins, frames, seed);
        let cfg = WlsConfig { gamma0: 0.0, ..WlsConfig::default() };
        let a = integrate_wls(&mag, &diffs, cfg).unwrap();
        let b = integrate_time(&mag, &diffs).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!(awe(*x, *y) <= 1e-9);
        }
    }

    #[test]
    fn wls_solution_is_optimal(bins in 2usize..40, seed: u64, p in 0.1f64..1.0, gamma0 in 0.0f64..20.0) {
        let (mag, diffs) = random_frames(bins, 2, seed);
        let cfg = WlsConfig { p, gamma0 };
        let state = initialize_first_frame(mag.frame(0), &diffs[0].fpd).unwrap();
        let floor = magnitude_floor(mag.max_value());
        let s = solve_frame(&state, mag.frame(0), mag.frame(1), diffs[1].tpd.as_ref().unwrap(), &diffs[1].fpd, cfg, floor).unwrap();
        let ax = s.system.apply(&s.solution);
        let res: f64 = ax.iter().zip(&s.system.rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let rhs: f64 = s.system.rhs.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(res <= 1e-10 * rhs);
        let best = objective(&s.solution, &s.ratios, &s.weights, &state);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..50 {
            let z: Vec<Complex64> = s.solution.iter().map(|x| x + Complex64::new(rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3))).collect();
            prop_assert!(objective(&z, &s.ratios, &s.weights, &state) >= best);
        }
    }

    #[test]
    fn wls_phase_is_scale_equivariant(bins in 2usize..40, frames in 2usize..8, seed: u64, s in 1e-3f64..1e3) {
        let (mag, diffs) = random_frames(bins, frames, seed);
        let scaled = mag.map(|a| a * s);
        let a = integrate_wls(&mag, &diffs, WlsConfig::default()).unwrap();
        let b = integrate_wls(&scaled, &diffs, WlsConfig::default()).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!(awe(*x, *y) <= 1e-8);
        }
    }

    #[test]
    fn wls_streaming_is_causal(bins in 2usize..24, frames in 3usize..10, cut in 1usize..9, seed: u64) {
        let cut = cut.min(frames - 1);
        let (mag, diffs) = random_frames(bins, frames, seed);
        let (other, other_diffs) = random_frames(bins, frames, seed ^ 77);
        let mut a = WlsReconstructor::new(WlsConfig::default()).unwrap();
        let mut b = WlsReconstructor::new(WlsConfig::default()).unwrap();
        for n in 0..frames {
            let pa = a.push(mag.frame(n), diffs[n].tpd.as_deref(), &diffs[n].fpd).unwrap();
            let (m, d) = if n < cut { (mag.frame(n), &diffs[n]) } else { (other.frame(n), &other_diffs[n]) };
            let pb = b.push(m, d.tpd.as_deref(), &d.fpd).unwrap();
            if n < cut {
                prop_assert_eq!(pa, pb);
            }
        }
    }
}

#[test]
fn stft_energy_within_frame_bounds() {
    let cfg = hann(1024, 256);
    let x = noise(SR as usize * 2, 4);
    let spec = stft(&x, &cfg, SR).unwrap();
    let coeff = spec.coefficients();
    let mut energy = 0.0;
    for n in 0..coeff.frames() {
        let f = coeff.frame(n);
        let last = f.len() - 1;
        for (m, c) in f.iter().enumerate() {
            let w = if m == 0 || m == last { 1.0 } else { 2.0 };
            energy += w * c.norm_sqr();
        }
    }
    let window: Vec<f64> = (0..1024).map(|j| 0.5 - 0.5 * (TAU * j as f64 / 1024.0).cos()).collect();
    let expected = 1024.0 * window.iter().map(|w| w * w).sum::<f64>() / 256.0;
    let signal: f64 = x.iter().map(|v| v * v).sum();
    assert!((energy / signal / expected - 1.0).abs() < 0.01);
}

#[test]
fn stft_shift_by_one_hop_shifts_frames() {
    let cfg = hann(512, 128);
    let x = noise(8000, 8);
    let mut shifted = vec![0.0; 128];
    shifted.extend(&x);
    let a = stft(&x, &cfg, SR).unwrap();
    let b = stft(&shifted, &cfg, SR).unwrap();
    for n in 3..a.frames() - 3 {
        for (p, q) in a.coefficients().frame(n).iter().zip(b.coefficients().frame(n + 1)) {
            assert!((p - q).norm() <= 1e-9 * p.norm().max(1.0));
        }
    }
}

#[test]
fn differences_survive_a_small_shift_better_than_phase() {
    let cfg = hann(1024, 256);
    let x = chirp(SR as usize);
    let shift = (SR as f64 * 0.0005).round() as usize;
    let mut y = vec![0.0; shift];
    y.extend(&x[..x.len() - shift]);
    let (a, b) = (analyze(&x, &cfg), analyze(&y, &cfg));
    let mask = MagnitudeMask::above_quantile(&a.magnitude(), 0.8).unwrap();
    let (pa, pb) = (a.phase(), b.phase());
    let mut raw = Vec::new();
    for n in 0..pa.frames() {
        for m in 0..pa.bins() {
            if mask.keeps(m, n) {
                raw.push(awe(pa.get(m, n), pb.get(m, n)));
            }
        }
    }
    let raw = phaseline::metrics::median(&raw).unwrap();
    let s = awe_summary(&differences_of(&pa, &cfg), &differences_of(&pb, &cfg), Some(&mask)).unwrap();
    assert!(s.bpd_median < raw, "BPD {} vs phase {raw}", s.bpd_median);
    assert!(s.fpd_median < raw, "FPD {} vs phase {raw}", s.fpd_median);
}

#[test]
fn wls_oracle_is_exact_up_to_constant() {
    let cfg = hann(512, 128);
    let spec = analyze(&filtered_noise(9000, 2), &cfg);
    let diffs = oracle_differences(&spec).unwrap();
    let phase = integrate_wls(&spec.magnitude(), &diffs, WlsConfig::default()).unwrap();
    assert!(max_awe(&spec.phase(), &phase, &cfg) < 1e-9);
}

fn rtpghi_phase(mag: &TfGrid, diffs: &[PhaseDifferenceFrame]) -> TfGrid {
    let mut st = RtpghiState::new(HeapIntegrationParams {
        relative_tolerance: 0.0,
        rng_seed: 0,
    })
    .unwrap();
    let frames: Vec<Vec<f64>> = diffs
        .iter()
        .enumerate()
        .map(|(n, d)| st.step(mag.frame(n), d.tpd.as_deref(), &d.fpd).unwrap())
        .collect();
    TfGrid::from_frames(frames).unwrap()
}

#[test]
fn heap_integrators_are_exact_on_the_sinusoid() {
    let cfg = hann(1024, 256);
    let x = sine(SR as usize);
    let spec = analyze(&x, &cfg);
    let mag = spec.magnitude();
    let diffs = oracle_differences(&spec).unwrap();
    let heap = HeapIntegrationParams {
        relative_tolerance: 0.0,
        rng_seed: 0,
    };
    for phase in [
        pghi_reconstruct(&mag, &diffs, &heap).unwrap(),
        rtpghi_phase(&mag, &diffs),
    ] {
        let est = Spectrogram::from_polar(&mag, &phase, cfg.clone(), SR, x.len()).unwrap();
        assert!(phaseline::metrics::lsc(&est, &mag).unwrap() <= -40.0);
    }
}

#[test]
fn rtpghi_is_causal_and_deterministic() {
    let cfg = hann(512, 128);
    let a = analyze(&chirp(12_000), &cfg).magnitude();
    let b = analyze(&filtered_noise(12_000, 1), &cfg).magnitude();
    let run = |switch: usize| {
        let mut r = RtpghiReconstructor::new(
            phaseline::pghi::GradientParams::from_config(&cfg),
            HeapIntegrationParams {
                relative_tolerance: 1e-3,
                rng_seed: 5,
            },
        )
        .unwrap();
        (0..a.frames())
            .map(|n| r.push(if n < switch { a.frame(n) } else { b.frame(n) }).unwrap().0)
            .collect::<Vec<_>>()
    };
    let full = run(usize::MAX);
    assert_eq!(full, run(usize::MAX));
    let cut = a.frames() / 2;
    assert_eq!(full[..cut], run(cut)[..cut]);
}

fn naive_layer(layer: &Layer, input: &[f32], bins: usize) -> Vec<f64> {
    let conv = |w: &[f32], b: &[f32]| -> Vec<f64> {
        let (cin, k) = (layer.in_channels, layer.kernel);
        let mut out = vec![0.0f64; layer.out_channels * bins];
        for o in 0..layer.out_channels {
            for m in 0..bins {
                let mut acc = b[o] as f64;
                for i in 0..cin {
                    for t in 0..k {
                        let src = m as isize + t as isize - (k / 2) as isize;
                        if src >= 0 && (src as usize) < bins {
                            acc += w[(o * cin + i) * k + t] as f64 * input[i * bins + src as usize] as f64;
                        }
                    }
                }
                out[o * bins + m] = acc;
            }
        }
        out
    };
    let lin = conv(&layer.weight, &layer.bias);
    match (&layer.gate_weight, &layer.gate_bias) {
        (Some(gw), Some(gb)) => {
            let g = conv(gw, gb);
            lin.iter().zip(&g).map(|(l, g)| l / (1.0 + (-g).exp())).collect()
        }
        _ => lin,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn layers_match_naive_convolution(
        gated: bool, cin in 1usize..6, cout in 1usize..6, k in prop_oneof![Just(1usize), Just(3), Just(5)],
        bins in 1usize..40, seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = if gated { LayerKind::FreqGatedConv } else { LayerKind::FreqConv };
        let layer = Layer::random(kind, cin, cout, k, &mut rng);
        let input: Vec<f32> = (0..cin * bins).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fast = layer.forward(&input, bins);
        let slow = naive_layer(&layer, &input, bins);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((*a as f64 - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn gates_never_amplify(cin in 1usize..4, bins in 1usize..30, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = Layer::random(LayerKind::FreqGatedConv, cin, 3, 3, &mut rng);
        let ungated = Layer { kind: LayerKind::FreqConv, gate_weight: None, gate_bias: None, ..layer.clone() };
        let input: Vec<f32> = (0..cin * bins).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for (g, l) in layer.forward(&input, bins).iter().zip(ungated.forward(&input, bins)) {
            prop_assert!(g.abs() <= l.abs());
        }
    }

    #[test]
    fn features_are_zero_mean_and_gain_invariant(bins in 1usize..64, frames in 1usize..5, gain in 1e-3f64..1e3, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logs: Vec<Vec<f64>> = (0..frames).map(|_| (0..bins).map(|_| rng.gen_range(-8.0..3.0)).collect()).collect();
        let shifted: Vec<Vec<f64>> = logs.iter().map(|f| f.iter().map(|v| v + gain.ln()).collect()).collect();
        let refs: Vec<&[f64]> = logs.iter().map(Vec::as_slice).collect();
        let a = build_feature(&refs).unwrap();
        let refs: Vec<&[f64]> = shifted.iter().map(Vec::as_slice).collect();
        let b = build_feature(&refs).unwrap();
        prop_assert!(a.data.iter().sum::<f64>().abs() <= 1e-6);
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn lsc_is_scale_invariant(bins in 1usize..20, frames in 1usize..10, s in 1e-3f64..1e3, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..bins * frames).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
        let ga = TfGrid::from_vec(bins, frames, a).unwrap();
        let gb = TfGrid::from_vec(bins, frames, b).unwrap();
        let l1 = lsc_of_magnitude(&gb, &ga).unwrap();
        let l2 = lsc_of_magnitude(&gb.map(|v| v * s), &ga.map(|v| v * s)).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-9);
    }

    #[test]
    fn awe_summary_ignores_global_phase(bins in 2usize..20, frames in 2usize..10, c in -10.0f64..10.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..bins * frames).map(|_| rng.gen_range(-PI..PI)).collect();
        let q: Vec<f64> = (0..bins * frames).map(|_| rng.gen_range(-PI..PI)).collect();
        let reference = recompute_differences(&TfGrid::from_vec(bins, frames, p).unwrap(), 4, 16).unwrap();
        let est = TfGrid::from_vec(bins, frames, q).unwrap();
        let a = awe_summary(&reference, &recompute_differences(&est, 4, 16).unwrap(), None).unwrap();
        let b = awe_summary(&reference, &recompute_differences(&est.map(|v| v + c), 4, 16).unwrap(), None).unwrap();
        prop_assert!((a.bpd_median - b.bpd_median).abs() <= 1e-9);
        prop_assert!((a.fpd_median - b.fpd_median).abs() <= 1e-9);
        prop_assert_eq!(a.bpd_histogram.total() as usize, bins * (frames - 1));
        prop_assert_eq!(a.fpd_histogram.total() as usize, (bins - 1) * frames);
    }

    #[test]
    fn histogram_counts_every_value(values in prop::collection::vec(0.0f64..PI, 0..200)) {
        let h = Histogram::from_values(&values, 64);
        prop_assert_eq!(h.total() as usize, values.len());
    }
}

#[test]
fn dnn_output_depends_only_on_recent_frames() {
    let arch = Architecture {
        look_back: 2,
        channels: 6,
        kernel: 3,
        gated_layers: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let bpd = ConvNetModel::random(Head::Bpd, arch, &mut rng).unwrap();
    let fpd = ConvNetModel::random(Head::Fpd, arch, &mut rng).unwrap();
    let cfg = hann(256, 64);
    let a = analyze(&chirp(6000), &cfg).magnitude();
    let b = analyze(&filtered_noise(6000, 3), &cfg).magnitude();
    let run = |pick: &dyn Fn(usize) -> bool| {
        let mut est = DnnEstimator::new(&bpd, &fpd, 64, 256).unwrap();
        (0..a.frames())
            .map(|n| est.push(if pick(n) { a.frame(n) } else { b.frame(n) }).unwrap())
            .collect::<Vec<_>>()
    };
    let reference = run(&|_| true);
    let cut = 20;
    // later frames never influence earlier outputs
    let late = run(&|n| n < cut);
    assert_eq!(reference[..cut], late[..cut]);
    // outputs at n depend only on frames n-2..=n, up to the shared running floor
    let early = run(&|n| n >= cut);
    let floor_free = (cut + 2..a.frames()).filter(|&n| {
        let max_a = (0..=n)
            .map(|k| a.frame(k).iter().copied().fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let max_mixed = (0..=n)
            .map(|k| {
                (if k >= cut { a.frame(k) } else { b.frame(k) })
                    .iter()
                    .copied()
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        max_a == max_mixed
    });
    let mut compared = 0;
    for n in floor_free {
        assert_eq!(reference[n].fpd, early[n].fpd, "frame {n}");
        compared += 1;
    }
    assert!(compared > 0);
}

#[test]
fn dnn_is_gain_invariant() {
    let arch = Architecture {
        look_back: 3,
        channels: 8,
        kernel: 3,
        gated_layers: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bpd = ConvNetModel::random(Head::Bpd, arch, &mut rng).unwrap();
    let fpd = ConvNetModel::random(Head::Fpd, arch, &mut rng).unwrap();
    let cfg = hann(256, 64);
    let x = chirp(5000);
    let loud: Vec<f64> = x.iter().map(|v| v * 8.0).collect();
    let run = |x: &[f64]| {
        let mag = analyze(x, &cfg).magnitude();
        phaseline::nn::estimate_differences_dnn(&mag, &bpd, &fpd, 64, 256).unwrap()
    };
    for (a, b) in run(&x).iter().zip(run(&loud)) {
        for (p, q) in a.fpd.iter().zip(&b.fpd) {
            assert!((p - q).abs() <= 1e-4, "{p} vs {q}");
        }
    }
}

#[test]
fn griffin_lim_never_increases_inconsistency() {
    let cfg = hann(512, 128);
    let x = filtered_noise(10_000, 6);
    let spec = analyze(&x, &cfg);
    let mag = spec.magnitude();
    let random = phaseline::pipeline::random_phase(mag.bins(), mag.frames(), 3);
    let start = Spectrogram::from_polar(&mag, &random, cfg.clone(), SR, x.len()).unwrap();
    let mut residuals = Vec::new();
    griffin_lim_refine_traced(&start, 30, &mut residuals).unwrap();
    assert_eq!(residuals.len(), 30);
    for w in residuals.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} then {}", w[0], w[1]);
    }
    assert!(residuals.last().unwrap() < &residuals[0]);
}

#[test]
fn first_frame_phase_integrates_fpd_from_dc() {
    let state: ReconstructionState = initialize_first_frame(&[1.0, 1.0, 1.0], &[0.5, -0.25]).unwrap();
    assert_eq!(state.prev_phase, vec![0.0, 0.5, 0.25]);
}
