#![allow(dead_code)]

use std::f64::consts::PI;

use phaseline::metrics::{recompute_differences, DifferenceGrids};
use phaseline::phasediff::{awe, PhaseDifferenceFrame};
use phaseline::{Spectrogram, StftConfig, StftProcessor, TfGrid, WindowKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SR: u32 = 22050;

pub fn hann(l: usize, hop: usize) -> StftConfig {
    StftConfig::new(WindowKind::Hann, l, hop, l).unwrap()
}

pub fn sine(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.8 * (2.0 * PI * 440.0 * i as f64 / SR as f64).sin())
        .collect()
}

/// Linear chirp from 200 Hz to 4 kHz over one second.
pub fn chirp(len: usize) -> Vec<f64> {
    let (f0, f1) = (200.0, 4000.0);
    (0..len)
        .map(|i| {
            let t = i as f64 / SR as f64;
            0.8 * (2.0 * PI * (f0 * t + 0.5 * (f1 - f0) * t * t)).sin()
        })
        .collect()
}

/// White noise through a two-pole resonator.
pub fn filtered_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, theta) = (0.95, 2.0 * PI * 1000.0 / SR as f64);
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let (mut y1, mut y2) = (0.0, 0.0);
    (0..len)
        .map(|_| {
            let y = rng.gen_range(-1.0..1.0) + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            0.05 * y
        })
        .collect()
}

fn fade(t: f64, dur: f64, ramp: f64) -> f64 {
    let a = (t / ramp).min((dur - t) / ramp).clamp(0.0, 1.0);
    0.5 - 0.5 * (PI * a).cos()
}

/// Ten-harmonic exponential chirp (one octave per second) with raised-cosine
/// fades at both ends.
pub fn harmonic_glide(len: usize) -> Vec<f64> {
    let dur = len as f64 / SR as f64;
    let k: f64 = 2.0;
    (0..len)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let phase = 2.0 * PI * 150.0 * (k.powf(t) - 1.0) / k.ln();
            fade(t, dur, 0.2) * (1..=10).map(|h| (h as f64 * phase).sin() / h as f64).sum::<f64>()
        })
        .collect()
}

pub fn analyze(x: &[f64], cfg: &StftConfig) -> Spectrogram {
    StftProcessor::new(cfg.clone()).analyze(x, SR).unwrap()
}

pub fn differences_of(phase: &TfGrid, cfg: &StftConfig) -> DifferenceGrids {
    recompute_differences(phase, cfg.hop(), cfg.fft_size()).unwrap()
}

/// Largest AWE between the differences of two phase grids over all entries.
pub fn max_awe(reference: &TfGrid, estimate: &TfGrid, cfg: &StftConfig) -> f64 {
    let a = differences_of(reference, cfg);
    let b = differences_of(estimate, cfg);
    let bpd = a.bpd.as_slice().iter().zip(b.bpd.as_slice()).map(|(x, y)| awe(*x, *y));
    let fpd = a.fpd.as_slice().iter().zip(b.fpd.as_slice()).map(|(x, y)| awe(*x, *y));
    bpd.chain(fpd).fold(0.0, f64::max)
}

pub fn random_frames(bins: usize, frames: usize, seed: u64) -> (TfGrid, Vec<PhaseDifferenceFrame>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mag: Vec<f64> = (0..bins * frames).map(|_| rng.gen_range(0.01..2.0)).collect();
    let diffs = (0..frames)
        .map(|n| PhaseDifferenceFrame {
            frame_index: n,
            tpd: (n > 0).then(|| (0..bins).map(|_| rng.gen_range(-10.0..10.0)).collect()),
            fpd: (0..bins - 1).map(|_| rng.gen_range(-PI..PI)).collect(),
            wrapped: false,
        })
        .collect();
    (TfGrid::from_vec(bins, frames, mag).unwrap(), diffs)
}
