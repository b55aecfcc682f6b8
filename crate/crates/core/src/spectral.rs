//! Discrete STFT with frame-centered phase, least-squares inverse, and the
//! causal frame stream consumed by the online reconstructors.
//!
//! Frame `n` is centered on sample `hop * n`; window tap `j` sits at offset
//! `l = j - floor(L/2)` from the center, and the DFT kernel is evaluated at `l`
//! (not at the absolute sample index). The signal is implicitly zero-padded
//! by `floor(L/2)` on both ends, so frame 0 is centered on sample 0.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::TfGrid;

/// Ratio `beta / L^2` for a Hann window of length `L`.
pub const HANN_BETA_RATIO: f64 = 0.25645;

/// Analysis window shape.
#[derive(Debug, Clone, PartialEq)]
pub enum WindowKind {
    Hann,
    Gaussian {
        sigma: f64,
    },
    /// Explicit taps, centered at index `len / 2`.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    window: WindowKind,
    window_length: usize,
    hop: usize,
    fft_size: usize,
    one_sided: bool,
    beta: f64,
    taps: Arc<[f64]>,
}

impl StftConfig {
    pub fn new(window: WindowKind, window_length: usize, hop: usize, fft_size: usize) -> Result<Self> {
        if window_length == 0 {
            return Err(Error::InvalidConfig("window length must be positive".into()));
        }
        if hop == 0 {
            return Err(Error::InvalidConfig("hop must be positive".into()));
        }
        if hop > window_length {
            return Err(Error::InvalidConfig(format!(
                "hop {hop} exceeds window length {window_length}"
            )));
        }
        if window_length > fft_size {
            return Err(Error::InvalidConfig(format!(
                "window length {window_length} exceeds FFT size {fft_size}"
            )));
        }
        let taps: Vec<f64> = match &window {
            WindowKind::Hann => hann_window(window_length),
            WindowKind::Gaussian { sigma } => gaussian_window(window_length, *sigma)?,
            WindowKind::Custom(taps) => {
                if taps.len() != window_length {
                    return Err(Error::DimensionMismatch {
                        what: "custom window taps",
                        expected: window_length,
                        actual: taps.len(),
                    });
                }
                if !is_symmetric(taps, 1e-12) {
                    return Err(Error::InvalidConfig("custom window is not symmetric".into()));
                }
                taps.clone()
            }
        };
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("window taps"));
        }
        let beta = match &window {
            WindowKind::Hann => HANN_BETA_RATIO * (window_length as f64).powi(2),
            WindowKind::Gaussian { sigma } => sigma * sigma,
            WindowKind::Custom(_) => equivalent_gaussian_beta(&taps),
        };
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::InvalidConfig("beta must be positive".into()));
        }
        Ok(Self {
            window,
            window_length,
            hop,
            fft_size,
            one_sided: true,
            beta,
            taps: taps.into(),
        })
    }

    /// Hann window with FFT size equal to the window length.
    pub fn hann(window_length: usize, hop: usize) -> Result<Self> {
        Self::new(WindowKind::Hann, window_length, hop, window_length)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn with_one_sided(mut self, one_sided: bool) -> Self {
        self.one_sided = one_sided;
        self
    }

    pub fn window(&self) -> &WindowKind {
        &self.window
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn one_sided(&self) -> bool {
        self.one_sided
    }

    /// Window constant relating log-magnitude gradients to phase gradients (samples^2).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Index of the tap sitting on the frame center.
    pub fn center(&self) -> usize {
        self.window_length / 2
    }

    /// Number of frequency bins of the working representation.
    pub fn bins(&self) -> usize {
        if self.one_sided {
            self.fft_size / 2 + 1
        } else {
            self.fft_size
        }
    }

    /// Number of frames covering `signal_len` samples: centers at `0, hop, ...`
    /// up to the first center at or past the last sample.
    pub fn frame_count(&self, signal_len: usize) -> usize {
        signal_len.div_ceil(self.hop) + 1
    }

    /// Checks that the summed squared window never vanishes for any hop
    /// residue, which is what the least-squares inverse divides by.
    pub fn check_invertible(&self) -> Result<()> {
        let hop = self.hop as isize;
        let c = self.center() as isize;
        let mut sums = vec![0.0; self.hop];
        for (j, g) in self.taps.iter().enumerate() {
            let l = j as isize - c;
            sums[l.rem_euclid(hop) as usize] += g * g;
        }
        let max = sums.iter().copied().fold(0.0, f64::max);
        let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
        if max.is_nan() || max <= 0.0 || min <= 1e-10 * max {
            return Err(Error::NotInvertible(format!(
                "squared-window overlap sum ranges over [{min:e}, {max:e}] for hop {}",
                self.hop
            )));
        }
        Ok(())
    }

    /// The `(2 pi hop m / fft_size) mod 2 pi` phase advance of bin `m`,
    /// computed from the exact integer residue.
    pub fn bin_advance(&self, bin: usize) -> f64 {
        bin_advance(bin, self.hop, self.fft_size)
    }
}

/// `2 pi hop m / fft_size` reduced modulo `2 pi` using integer arithmetic.
pub fn bin_advance(bin: usize, hop: usize, fft_size: usize) -> f64 {
    let residue = ((hop as u128 * bin as u128) % fft_size as u128) as f64;
    2.0 * PI * residue / fft_size as f64
}

/// Periodic Hann window centered at tap `L/2`: `0.5 + 0.5 cos(2 pi l / L)`.
pub fn hann_window(window_length: usize) -> Vec<f64> {
    let c = (window_length / 2) as f64;
    let len = window_length as f64;
    (0..window_length)
        .map(|j| 0.5 + 0.5 * (2.0 * PI * (j as f64 - c) / len).cos())
        .collect()
}

/// Samples `h(t) = (2/sigma^2)^(1/4) exp(-pi t^2 / sigma^2)` at integer
/// offsets from the center tap `L/2`.
pub fn gaussian_window(window_length: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let c = (window_length / 2) as f64;
    let s2 = sigma * sigma;
    let scale = (2.0 / s2).powf(0.25);
    Ok((0..window_length)
        .map(|j| {
            let t = j as f64 - c;
            scale * (-PI * t * t / s2).exp()
        })
        .collect())
}

/// `4 pi` times the time variance of `|g|^2`, which equals `sigma^2` for a
/// Gaussian window.
fn equivalent_gaussian_beta(taps: &[f64]) -> f64 {
    let c = (taps.len() / 2) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (j, g) in taps.iter().enumerate() {
        let t = j as f64 - c;
        num += t * t * g * g;
        den += g * g;
    }
    if den > 0.0 {
        4.0 * PI * num / den
    } else {
        0.0
    }
}

fn is_symmetric(taps: &[f64], tol: f64) -> bool {
    let c = taps.len() / 2;
    let scale = taps.iter().fold(0.0_f64, |a, t| a.max(t.abs())).max(f64::MIN_POSITIVE);
    (1..=c)
        .filter(|k| c + k < taps.len())
        .all(|k| (taps[c + k] - taps[c - k]).abs() <= tol * scale)
}

/// Complex STFT coefficients plus the analysis parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    coefficients: TfGrid<Complex64>,
    config: StftConfig,
    sample_rate: u32,
    signal_len: usize,
}

impl Spectrogram {
    pub fn new(
        coefficients: TfGrid<Complex64>,
        config: StftConfig,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        if coefficients.bins() != config.bins() {
            return Err(Error::DimensionMismatch {
                what: "spectrogram bins",
                expected: config.bins(),
                actual: coefficients.bins(),
            });
        }
        if coefficients.frames() != config.frame_count(signal_len) {
            return Err(Error::DimensionMismatch {
                what: "spectrogram frames",
                expected: config.frame_count(signal_len),
                actual: coefficients.frames(),
            });
        }
        Ok(Self {
            coefficients,
            config,
            sample_rate,
            signal_len,
        })
    }

    /// Combines a magnitude grid with a phase grid of the same shape.
    pub fn from_polar(
        magnitude: &TfGrid,
        phase: &TfGrid,
        config: StftConfig,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        if magnitude.bins() != phase.bins() || magnitude.frames() != phase.frames() {
            return Err(Error::DimensionMismatch {
                what: "phase grid size",
                expected: magnitude.as_slice().len(),
                actual: phase.as_slice().len(),
            });
        }
        let data = magnitude
            .as_slice()
            .iter()
            .zip(phase.as_slice())
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        let coefficients = TfGrid::from_vec(magnitude.bins(), magnitude.frames(), data)?;
        Self::new(coefficients, config, sample_rate, signal_len)
    }

    pub fn coefficients(&self) -> &TfGrid<Complex64> {
        &self.coefficients
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn bins(&self) -> usize {
        self.coefficients.bins()
    }

    pub fn frames(&self) -> usize {
        self.coefficients.frames()
    }

    pub fn magnitude(&self) -> TfGrid {
        self.coefficients.map(|x| x.norm())
    }

    /// Principal argument in `(-pi, pi]`.
    pub fn phase(&self) -> TfGrid {
        self.coefficients.map(|x| principal_arg(*x))
    }
}

/// `arg(z)` mapped into `(-pi, pi]`; `atan2` already returns `pi` for the
/// negative real axis except for `-0.0` imaginary parts, which are folded here.
#[inline]
pub fn principal_arg(z: Complex64) -> f64 {
    let a = z.im.atan2(z.re);
    if a == -PI {
        PI
    } else {
        a
    }
}

/// Reusable forward/inverse transform with planned FFTs.
pub struct StftProcessor {
    config: StftConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftProcessor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftProcessor").field("config", &self.config).finish()
    }
}

impl StftProcessor {
    pub fn new(config: StftConfig) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(config.fft_size);
        let inverse = planner.plan_fft_inverse(config.fft_size);
        Self {
            config,
            forward,
            inverse,
        }
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn analyze(&self, signal: &[f64], sample_rate: u32) -> Result<Spectrogram> {
        if signal.is_empty() {
            return Err(Error::EmptyInput("signal"));
        }
        let cfg = &self.config;
        let frames = cfg.frame_count(signal.len());
        let bins = cfg.bins();
        let m_fft = cfg.fft_size as isize;
        let c = cfg.center() as isize;
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        let mut data = Vec::with_capacity(frames * bins);
        for n in 0..frames {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            let center = (n * cfg.hop) as isize;
            for (j, g) in cfg.taps.iter().enumerate() {
                let l = j as isize - c;
                let t = center + l;
                if t >= 0 && (t as usize) < signal.len() {
                    buf[l.rem_euclid(m_fft) as usize] = Complex64::new(signal[t as usize] * g, 0.0);
                }
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
        let coefficients = TfGrid::from_vec(bins, frames, data)?;
        Spectrogram::new(coefficients, cfg.clone(), sample_rate, signal.len())
    }

    /// Least-squares synthesis: the signal whose STFT is closest (Frobenius,
    /// over the full Hermitian spectrum) to `spec`.
    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Vec<f64>> {
        let cfg = &self.config;
        if spec.config().hop != cfg.hop
            || spec.config().fft_size != cfg.fft_size
            || spec.config().window_length != cfg.window_length
        {
            return Err(Error::InvalidConfig(
                "spectrogram was produced with a different configuration".into(),
            ));
        }
        cfg.check_invertible()?;
        let len = spec.signal_len();
        let bins = spec.bins();
        let m_fft = cfg.fft_size;
        let c = cfg.center() as isize;
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); m_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / m_fft as f64;
        for (n, frame) in spec.coefficients().iter_frames().enumerate() {
            if cfg.one_sided {
                buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                buf[..bins].copy_from_slice(frame);
                for k in 1..bins {
                    let mirror = m_fft - k;
                    if mirror >= bins {
                        buf[mirror] = frame[k].conj();
                    }
                }
            } else {
                buf.copy_from_slice(frame);
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let center = (n * cfg.hop) as isize;
            for (j, g) in cfg.taps.iter().enumerate() {
                let l = j as isize - c;
                let t = center + l;
                if t >= 0 && (t as usize) < len {
                    let y = buf[l.rem_euclid(m_fft as isize) as usize].re * scale;
                    out[t as usize] += g * y;
                    norm[t as usize] += g * g;
                }
            }
        }
        let max_norm = norm.iter().copied().fold(0.0, f64::max);
        for (x, w) in out.iter_mut().zip(&norm) {
            if *w <= 1e-10 * max_norm {
                return Err(Error::NotInvertible("a sample is not covered by any window".into()));
            }
            *x /= w;
        }
        Ok(out)
    }
}

pub fn stft(signal: &[f64], config: &StftConfig, sample_rate: u32) -> Result<Spectrogram> {
    StftProcessor::new(config.clone()).analyze(signal, sample_rate)
}

pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    StftProcessor::new(spec.config().clone()).synthesize(spec)
}

/// Delivers magnitude frames one at a time and refuses reads beyond the
/// current frame plus the configured look-ahead.
#[derive(Debug)]
pub struct FrameStream<'a> {
    grid: &'a TfGrid,
    current: Option<usize>,
    look_ahead: usize,
}

impl<'a> FrameStream<'a> {
    pub fn new(grid: &'a TfGrid) -> Self {
        Self {
            grid,
            current: None,
            look_ahead: 0,
        }
    }

    pub fn with_look_ahead(grid: &'a TfGrid, look_ahead: usize) -> Self {
        Self {
            grid,
            current: None,
            look_ahead,
        }
    }

    pub fn look_ahead(&self) -> usize {
        self.look_ahead
    }

    pub fn len(&self) -> usize {
        self.grid.frames()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.frames() == 0
    }

    /// Moves to the next frame, returning its index and data.
    pub fn advance(&mut self) -> Option<(usize, &'a [f64])> {
        let next = self.current.map_or(0, |c| c + 1);
        if next >= self.grid.frames() {
            return None;
        }
        self.current = Some(next);
        Some((next, self.grid.frame(next)))
    }

    /// Reads an already-released frame.
    pub fn frame(&self, n: usize) -> Result<&'a [f64]> {
        let horizon = self.current.map(|c| c + self.look_ahead);
        match horizon {
            Some(h) if n <= h && n < self.grid.frames() => Ok(self.grid.frame(n)),
            _ => Err(Error::InvalidParameter(format!(
                "causality violation: frame {n} requested at position {:?} with look-ahead {}",
                self.current, self.look_ahead
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(StftConfig::new(WindowKind::Hann, 0, 1, 16).is_err());
        assert!(StftConfig::new(WindowKind::Hann, 16, 32, 16).is_err());
        assert!(StftConfig::new(WindowKind::Hann, 32, 8, 16).is_err());
        assert!(StftConfig::hann(16, 4).unwrap().with_beta(-1.0).is_err());
    }

    #[test]
    fn impulse_gives_flat_frame_zero() {
        let cfg = StftConfig::hann(1024, 256).unwrap();
        let mut x = vec![0.0; 4096];
        x[0] = 1.0;
        let spec = stft(&x, &cfg, 22050).unwrap();
        let g0 = cfg.taps()[cfg.center()];
        for m in 0..spec.bins() {
            assert!((spec.coefficients().get(m, 0).norm() - g0).abs() < 1e-12);
        }
    }

    #[test]
    fn bin_centered_cosine_peaks_at_its_bin() {
        let cfg = StftConfig::hann(1024, 256).unwrap();
        let k = 37;
        let x: Vec<f64> = (0..8192)
            .map(|t| (2.0 * PI * k as f64 * t as f64 / 1024.0).cos())
            .collect();
        let mag = stft(&x, &cfg, 22050).unwrap().magnitude();
        for n in 4..mag.frames() - 4 {
            let frame = mag.frame(n);
            let peak = (0..frame.len()).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
            assert_eq!(peak, k, "frame {n}");
        }
    }

    #[test]
    fn round_trip_hann_1024_256() {
        let cfg = StftConfig::hann(1024, 256).unwrap();
        let x = noise(24064, 1);
        let spec = stft(&x, &cfg, 22050).unwrap();
        assert_eq!(spec.frames(), 95);
        let y = istft(&spec).unwrap();
        assert!(rel_err(&y, &x) < 1e-6);
    }

    #[test]
    fn round_trip_full_spectrum_and_odd_sizes() {
        let cfg = StftConfig::new(WindowKind::Hann, 63, 15, 64)
            .unwrap()
            .with_one_sided(false);
        let x = noise(1000, 2);
        let y = istft(&stft(&x, &cfg, 8000).unwrap()).unwrap();
        assert!(rel_err(&y, &x) < 1e-10);
        let cfg = StftConfig::new(WindowKind::Hann, 63, 15, 65).unwrap();
        let y = istft(&stft(&x, &cfg, 8000).unwrap()).unwrap();
        assert!(rel_err(&y, &x) < 1e-10);
    }

    #[test]
    fn zero_spectrogram_synthesizes_silence() {
        let cfg = StftConfig::hann(64, 16).unwrap();
        let frames = cfg.frame_count(500);
        let grid = TfGrid::filled(cfg.bins(), frames, Complex64::new(0.0, 0.0));
        let spec = Spectrogram::new(grid, cfg, 8000, 500).unwrap();
        assert!(istft(&spec).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hop_equal_to_hann_length_is_not_invertible() {
        let cfg = StftConfig::hann(64, 64).unwrap();
        assert!(matches!(cfg.check_invertible(), Err(Error::NotInvertible(_))));
        let spec = stft(&noise(300, 3), &cfg, 8000).unwrap();
        assert!(istft(&spec).is_err());
    }

    #[test]
    fn random_phase_is_inconsistent() {
        let cfg = StftConfig::hann(256, 64).unwrap();
        let x = noise(4000, 4);
        let spec = stft(&x, &cfg, 8000).unwrap();
        let mag = spec.magnitude();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phase = mag.map(|_| rng.gen_range(-PI..PI));
        let random = Spectrogram::from_polar(&mag, &phase, cfg.clone(), 8000, x.len()).unwrap();
        let re = stft(&istft(&random).unwrap(), &cfg, 8000).unwrap().magnitude();
        let err: f64 = re
            .as_slice()
            .iter()
            .zip(mag.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!(err.sqrt() > 1e-3 * mag.as_slice().iter().map(|a| a * a).sum::<f64>().sqrt());
    }

    #[test]
    fn gaussian_window_shape() {
        let sigma = 128.0;
        let w = gaussian_window(1024, sigma).unwrap();
        let c = 512;
        assert!((w[c] - (2.0 / (sigma * sigma)).powf(0.25)).abs() < 1e-15);
        for k in 1..512 {
            assert_eq!(w[c + k], w[c - k]);
        }
        assert!(w[0] / w[c] < 1e-10);
        assert!(gaussian_window(16, 0.0).is_err());
        assert!(gaussian_window(16, -1.0).is_err());
    }

    #[test]
    fn default_betas() {
        let hann = StftConfig::hann(1024, 256).unwrap();
        assert!((hann.beta() - 0.25645 * 1024.0 * 1024.0).abs() < 1e-6);
        let gauss = StftConfig::new(WindowKind::Gaussian { sigma: 100.0 }, 1024, 64, 1024).unwrap();
        assert!((gauss.beta() - 1e4).abs() < 1e-9);
        let taps = gaussian_window(1024, 100.0).unwrap();
        let custom = StftConfig::new(WindowKind::Custom(taps), 1024, 64, 1024).unwrap();
        assert!((custom.beta() / 1e4 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bin_advance_is_reduced_exactly() {
        assert_eq!(bin_advance(512, 256, 1024), 0.0);
        assert!((bin_advance(1, 256, 1024) - PI / 2.0).abs() < 1e-15);
        assert!((bin_advance(3, 256, 1024) - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn frame_stream_enforces_causality() {
        let grid = TfGrid::from_frames(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let mut stream = FrameStream::new(&grid);
        assert!(stream.frame(0).is_err());
        let (n, f) = stream.advance().unwrap();
        assert_eq!((n, f), (0, &[1.0, 2.0][..]));
        assert!(stream.frame(1).is_err());
        stream.advance();
        assert_eq!(stream.frame(0).unwrap(), &[1.0, 2.0]);
        assert!(stream.frame(2).is_err());
        let ahead = {
            let mut s = FrameStream::with_look_ahead(&grid, 1);
            s.advance();
            s.frame(1).map(|f| f.to_vec())
        };
        assert_eq!(ahead.unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn principal_arg_maps_negative_axis_to_pi() {
        assert_eq!(principal_arg(Complex64::new(-1.0, -0.0)), PI);
        assert_eq!(principal_arg(Complex64::new(-1.0, 0.0)), PI);
    }
}
