//! Objective evaluation: log-spectral convergence and absolute wrapped error
//! of phase differences recomputed from a reconstructed phase.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::TfGrid;
use crate::phasediff::{awe, check_len, wrap};
use crate::spectral::{bin_advance, Spectrogram, StftConfig, StftProcessor};

/// Lower clamp for LSC, reached by (numerically) consistent estimates.
pub const LSC_FLOOR_DB: f64 = -120.0;
/// Upper clamp, only reachable when the reference is silent.
pub const LSC_CEIL_DB: f64 = 120.0;
pub const HISTOGRAM_BINS: usize = 64;

fn ratio_db(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        return LSC_FLOOR_DB;
    }
    if den == 0.0 {
        return LSC_CEIL_DB;
    }
    (20.0 * (num / den).log10()).clamp(LSC_FLOOR_DB, LSC_CEIL_DB)
}

fn frobenius_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn same_shape(what: &'static str, a: &TfGrid, b: &TfGrid) -> Result<()> {
    check_len(what, a.bins(), b.bins())?;
    check_len(what, a.frames(), b.frames())
}

/// `20 log10(||A - |STFT(iSTFT(X))||| / ||A||)`, clamped to [-120, 120] dB.
pub fn lsc(estimate: &Spectrogram, reference_mag: &TfGrid) -> Result<f64> {
    let proc = StftProcessor::new(estimate.config().clone());
    let signal = proc.synthesize(estimate)?;
    let reanalyzed = proc.analyze(&signal, estimate.sample_rate())?.magnitude();
    lsc_of_magnitude(&reanalyzed, reference_mag)
}

/// LSC given an already re-analyzed magnitude.
pub fn lsc_of_magnitude(reanalyzed: &TfGrid, reference_mag: &TfGrid) -> Result<f64> {
    same_shape("LSC grid", reference_mag, reanalyzed)?;
    Ok(ratio_db(
        frobenius_distance(reference_mag.as_slice(), reanalyzed.as_slice()),
        frobenius(reference_mag.as_slice()),
    ))
}

/// Frobenius distance between two one-sided magnitude grids measured over the
/// full two-sided spectrum, i.e. interior bins counted twice.
pub fn hermitian_magnitude_distance(a: &TfGrid, b: &TfGrid, fft_size: usize) -> f64 {
    let bins = a.bins();
    let one_sided = bins == fft_size / 2 + 1;
    let mut acc = 0.0;
    for (fa, fb) in a.iter_frames().zip(b.iter_frames()) {
        for m in 0..bins {
            let w = if one_sided && m != 0 && !(fft_size.is_multiple_of(2) && m == fft_size / 2) {
                2.0
            } else {
                1.0
            };
            let d = fa[m] - fb[m];
            acc += w * d * d;
        }
    }
    acc.sqrt()
}

/// Differences recomputed from a phase grid: wrapped BPD for frames `1..N`
/// (`bins x (N-1)`) and wrapped FPD for pairs `(r, r+1)` (`(M-1) x N`).
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceGrids {
    pub bpd: TfGrid,
    pub fpd: TfGrid,
}

/// `W[m,n] = wrap(phi[m,n] - phi[m,n-1] - 2 pi hop m / fft)` and
/// `U[m,n] = wrap(phi[m,n] - phi[m-1,n])`.
pub fn recompute_differences(phase: &TfGrid, hop: usize, fft_size: usize) -> Result<DifferenceGrids> {
    if phase.frames() < 2 {
        return Err(Error::EmptyInput("difference recomputation needs at least two frames"));
    }
    if phase.bins() < 2 {
        return Err(Error::EmptyInput("difference recomputation needs at least two bins"));
    }
    let bins = phase.bins();
    let bpd = TfGrid::from_frames((1..phase.frames()).map(|n| {
        let (cur, prev) = (phase.frame(n), phase.frame(n - 1));
        (0..bins)
            .map(|m| wrap(cur[m] - prev[m] - bin_advance(m, hop, fft_size)))
            .collect::<Vec<_>>()
    }))?;
    let fpd = TfGrid::from_frames(
        phase
            .iter_frames()
            .map(|f| f.windows(2).map(|w| wrap(w[1] - w[0])).collect::<Vec<_>>()),
    )?;
    Ok(DifferenceGrids { bpd, fpd })
}

/// Bins kept in AWE statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeMask {
    keep: TfGrid<bool>,
}

impl MagnitudeMask {
    /// Keeps bins whose magnitude is at or above the `q`-quantile of `mag`.
    /// `q = 0.8` keeps the top 20%.
    pub fn above_quantile(mag: &TfGrid, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!("quantile must lie in [0, 1], got {q}")));
        }
        if mag.is_empty() {
            return Err(Error::EmptyInput("magnitude grid"));
        }
        let mut sorted = mag.as_slice().to_vec();
        sorted.sort_by(f64::total_cmp);
        let idx = ((q * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
        let threshold = sorted[idx];
        Ok(Self {
            keep: mag.map(|&a| a >= threshold),
        })
    }

    pub fn all(bins: usize, frames: usize) -> Self {
        Self {
            keep: TfGrid::filled(bins, frames, true),
        }
    }

    pub fn keeps(&self, bin: usize, frame: usize) -> bool {
        self.keep.get(bin, frame)
    }

    pub fn count(&self) -> usize {
        self.keep.as_slice().iter().filter(|k| **k).count()
    }
}

/// Counts of AWE values over `[0, pi]` in equal-width bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bins: usize) -> Self {
        Self { counts: vec![0; bins] }
    }

    pub fn from_values(values: &[f64], bins: usize) -> Self {
        let mut h = Self::new(bins);
        for v in values {
            h.add(*v);
        }
        h
    }

    pub fn add(&mut self, value: f64) {
        let bins = self.counts.len();
        if bins == 0 {
            return;
        }
        let idx = ((value / PI) * bins as f64).floor();
        let idx = (idx.max(0.0) as usize).min(bins - 1);
        self.counts[idx] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        check_len("histogram bins", self.counts.len(), other.counts.len())?;
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Median of a non-empty sample; the mean of the two middle values for even
/// counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("median of empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AweSummary {
    pub bpd_median: f64,
    pub fpd_median: f64,
    pub bpd_histogram: Histogram,
    pub fpd_histogram: Histogram,
    pub bpd_values: Vec<f64>,
    pub fpd_values: Vec<f64>,
}

/// Collects AWE between two sets of difference grids. With a mask, a BPD
/// entry `(m, n)` counts when bin `m` of frame `n` is kept; an FPD entry
/// counts when both bins of its pair are kept.
pub fn awe_summary(
    reference: &DifferenceGrids,
    estimate: &DifferenceGrids,
    mask: Option<&MagnitudeMask>,
) -> Result<AweSummary> {
    same_shape("BPD grid", &reference.bpd, &estimate.bpd)?;
    same_shape("FPD grid", &reference.fpd, &estimate.fpd)?;
    let bins = reference.bpd.bins();
    let frames = reference.fpd.frames();
    if let Some(mask) = mask {
        check_len("mask bins", bins, mask.keep.bins())?;
        check_len("mask frames", frames, mask.keep.frames())?;
    }
    let keep = |m: usize, n: usize| mask.is_none_or(|k| k.keeps(m, n));
    let mut bpd_values = Vec::new();
    for n in 1..frames {
        for m in 0..bins {
            if keep(m, n) {
                bpd_values.push(awe(reference.bpd.get(m, n - 1), estimate.bpd.get(m, n - 1)));
            }
        }
    }
    let mut fpd_values = Vec::new();
    for n in 0..frames {
        for r in 0..bins - 1 {
            if keep(r, n) && keep(r + 1, n) {
                fpd_values.push(awe(reference.fpd.get(r, n), estimate.fpd.get(r, n)));
            }
        }
    }
    if bpd_values.is_empty() || fpd_values.is_empty() {
        return Err(Error::EmptyInput("no bins selected for AWE"));
    }
    Ok(AweSummary {
        bpd_median: median(&bpd_values)?,
        fpd_median: median(&fpd_values)?,
        bpd_histogram: Histogram::from_values(&bpd_values, HISTOGRAM_BINS),
        fpd_histogram: Histogram::from_values(&fpd_values, HISTOGRAM_BINS),
        bpd_values,
        fpd_values,
    })
}

/// One utterance's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub path: String,
    pub lsc_db: f64,
    pub awe_bpd_median: f64,
    pub awe_fpd_median: f64,
    pub bpd_histogram: Histogram,
    pub fpd_histogram: Histogram,
}

pub const REPORT_HEADER: &str = "#path\tlsc_db\tawe_bpd_median\tawe_fpd_median\tpesq\testoi";

impl EvaluationReport {
    /// Tab-separated record; the perceptual-score columns are left as `-`
    /// for external scorers to fill.
    pub fn to_record(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t-\t-",
            self.path, self.lsc_db, self.awe_bpd_median, self.awe_fpd_median
        )
    }
}

/// Scores `estimate` against `reference`. Signals of different length are
/// trimmed to the shorter one.
pub fn evaluate_signals(
    path: &str,
    reference: &[f64],
    estimate: &[f64],
    config: &StftConfig,
    sample_rate: u32,
    mask_quantile: Option<f64>,
) -> Result<EvaluationReport> {
    let len = reference.len().min(estimate.len());
    if len == 0 {
        return Err(Error::EmptyInput("evaluation signal"));
    }
    let proc = StftProcessor::new(config.clone());
    let ref_spec = proc.analyze(&reference[..len], sample_rate)?;
    let est_spec = proc.analyze(&estimate[..len], sample_rate)?;
    let ref_mag = ref_spec.magnitude();
    let lsc_db = lsc_of_magnitude(&est_spec.magnitude(), &ref_mag)?;
    let (hop, fft) = (config.hop(), config.fft_size());
    let ref_diffs = recompute_differences(&ref_spec.phase(), hop, fft)?;
    let est_diffs = recompute_differences(&est_spec.phase(), hop, fft)?;
    let mask = mask_quantile
        .map(|q| MagnitudeMask::above_quantile(&ref_mag, q))
        .transpose()?;
    let summary = awe_summary(&ref_diffs, &est_diffs, mask.as_ref())?;
    Ok(EvaluationReport {
        path: path.to_string(),
        lsc_db,
        awe_bpd_median: summary.bpd_median,
        awe_fpd_median: summary.fpd_median,
        bpd_histogram: summary.bpd_histogram,
        fpd_histogram: summary.fpd_histogram,
    })
}
