//! Phase-difference algebra: wrapping, oracle extraction, the baseband
//! conversion, complex-ratio conversion, and periodic error measures.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{bin_advance, Spectrogram};

const TAU: f64 = 2.0 * PI;

/// Relative magnitude floor applied before division or weighting.
pub const FLOOR_RELATIVE: f64 = 1e-10;

/// Absolute lower bound for the floor, used when the reference maximum is zero.
pub const FLOOR_ABSOLUTE_MIN: f64 = 1e-30;

/// Maps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

pub fn try_wrap(phi: f64) -> Result<f64> {
    if !phi.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(phi))
}

/// Absolute wrapped error `|wrap(phi - phi_hat)|`, in `[0, pi]`.
#[inline]
pub fn awe(phi: f64, phi_hat: f64) -> f64 {
    wrap(phi - phi_hat).abs()
}

pub fn try_awe(phi: f64, phi_hat: f64) -> Result<f64> {
    if !phi.is_finite() || !phi_hat.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(awe(phi, phi_hat))
}

/// Periodic training loss `-cos(phi - phi_hat)`.
#[inline]
pub fn cosine_loss(phi: f64, phi_hat: f64) -> f64 {
    -(phi - phi_hat).cos()
}

/// Magnitude floor `1e-10 * reference_max`, bounded away from zero.
#[inline]
pub fn magnitude_floor(reference_max: f64) -> f64 {
    (FLOOR_RELATIVE * reference_max).max(FLOOR_ABSOLUTE_MIN)
}

/// Streaming magnitude floor that tracks the running maximum of every frame
/// seen so far.
#[derive(Debug, Clone, Default)]
pub struct RunningFloor {
    max: f64,
}

impl RunningFloor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from a known maximum (offline use: the utterance maximum).
    pub fn with_max(max: f64) -> Self {
        Self { max }
    }

    pub fn observe(&mut self, frame: &[f64]) -> f64 {
        self.max = frame.iter().copied().fold(self.max, f64::max);
        self.floor()
    }

    pub fn floor(&self) -> f64 {
        magnitude_floor(self.max)
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

pub fn floored(frame: &[f64], floor: f64) -> Vec<f64> {
    frame.iter().map(|&a| a.max(floor)).collect()
}

/// Backward phase differences of one frame.
///
/// `fpd[r]` is the difference between bins `r + 1` and `r`, so the vector has
/// `M - 1` entries. `tpd` is absent at frame 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDifferenceFrame {
    pub frame_index: usize,
    pub tpd: Option<Vec<f64>>,
    pub fpd: Vec<f64>,
    pub wrapped: bool,
}

impl PhaseDifferenceFrame {
    pub fn bins(&self) -> usize {
        self.fpd.len() + 1
    }
}

/// Baseband phase delay of one frame: TPD minus the bin's hop advance, wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct BpdFrame {
    pub bpd: Vec<f64>,
}

/// Ratios of adjacent STFT coefficients: `v[m] = X[m,n]/X[m,n-1]` and
/// `u[r] = X[r+1,n]/X[r,n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexRatioFrame {
    pub v: Vec<Complex64>,
    pub u: Vec<Complex64>,
}

/// Wrapped TPD/FPD taken directly from the spectrogram's phase.
pub fn oracle_differences(spec: &Spectrogram) -> Result<Vec<PhaseDifferenceFrame>> {
    if spec.frames() < 2 {
        return Err(Error::EmptyInput("oracle differences need at least two frames"));
    }
    let phase = spec.phase();
    let bins = phase.bins();
    Ok((0..phase.frames())
        .map(|n| {
            let cur = phase.frame(n);
            let tpd = (n > 0).then(|| {
                let prev = phase.frame(n - 1);
                cur.iter().zip(prev).map(|(c, p)| wrap(c - p)).collect()
            });
            let fpd = (1..bins).map(|m| wrap(cur[m] - cur[m - 1])).collect();
            PhaseDifferenceFrame {
                frame_index: n,
                tpd,
                fpd,
                wrapped: true,
            }
        })
        .collect())
}

/// `W[m] = wrap(V[m] - 2 pi hop m / fft_size)`.
pub fn tpd_to_bpd(tpd: &[f64], hop: usize, fft_size: usize) -> BpdFrame {
    BpdFrame {
        bpd: tpd
            .iter()
            .enumerate()
            .map(|(m, v)| wrap(v - bin_advance(m, hop, fft_size)))
            .collect(),
    }
}

/// Inverse of [`tpd_to_bpd`], returning wrapped TPD.
pub fn bpd_to_tpd(bpd: &BpdFrame, hop: usize, fft_size: usize) -> Vec<f64> {
    bpd.bpd
        .iter()
        .enumerate()
        .map(|(m, w)| wrap(w + bin_advance(m, hop, fft_size)))
        .collect()
}

/// `2 pi hop m / fft` for every bin of a frame.
pub fn bin_advance_frame(bins: usize, hop: usize, fft_size: usize) -> Vec<f64> {
    (0..bins).map(|m| bin_advance(m, hop, fft_size)).collect()
}

/// Adds the hop advance back without wrapping, for unbounded estimates.
pub fn baseband_to_tpd_unwrapped(bpd: &[f64], hop: usize, fft_size: usize) -> Vec<f64> {
    bpd.iter()
        .enumerate()
        .map(|(m, w)| w + bin_advance(m, hop, fft_size))
        .collect()
}

/// Converts estimated phase differences into complex ratios using floored
/// magnitudes. Any `2 pi` offset in the estimates disappears here.
pub fn to_complex_ratios(
    mag_prev: &[f64],
    mag_cur: &[f64],
    tpd: &[f64],
    fpd: &[f64],
    floor: f64,
) -> Result<ComplexRatioFrame> {
    let bins = mag_cur.len();
    check_len("previous magnitude", bins, mag_prev.len())?;
    check_len("tpd", bins, tpd.len())?;
    check_len("fpd", bins.saturating_sub(1), fpd.len())?;
    check_finite("magnitude", mag_prev)?;
    check_finite("magnitude", mag_cur)?;
    check_finite("tpd", tpd)?;
    check_finite("fpd", fpd)?;
    let prev = floored(mag_prev, floor);
    let cur = floored(mag_cur, floor);
    let v = (0..bins)
        .map(|m| Complex64::from_polar(cur[m] / prev[m], tpd[m]))
        .collect();
    let u = (1..bins)
        .map(|m| Complex64::from_polar(cur[m] / cur[m - 1], fpd[m - 1]))
        .collect();
    Ok(ComplexRatioFrame { v, u })
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { what, expected, actual });
    }
    Ok(())
}
