//! Phase-gradient estimation from log-magnitude and heap integration.
//!
//! Derivative samples use the hop advance convention of the STFT in
//! [`crate::spectral`]: the time derivative is expressed in radians per hop
//! and the frequency derivative in radians per bin.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::TfGrid;
use crate::phasediff::{check_len, magnitude_floor, wrap, PhaseDifferenceFrame};
use crate::spectral::bin_advance;

/// Hop, FFT size and window constant needed to scale log-magnitude gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientParams {
    pub hop: usize,
    pub fft_size: usize,
    pub beta: f64,
}

impl GradientParams {
    pub fn from_config(cfg: &crate::spectral::StftConfig) -> Self {
        Self {
            hop: cfg.hop(),
            fft_size: cfg.fft_size(),
            beta: cfg.beta(),
        }
    }

    /// `hop * fft_size / (2 beta)`: scale on a two-bin log-magnitude difference.
    fn time_scale(&self) -> f64 {
        (self.hop * self.fft_size) as f64 / (2.0 * self.beta)
    }

    /// `-beta / (2 hop fft_size)`: scale on a two-frame log-magnitude difference.
    fn freq_scale(&self) -> f64 {
        -self.beta / (2.0 * (self.hop * self.fft_size) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeScheme {
    /// Centered differences in frequency and in time (one frame look-ahead).
    Centered,
    /// Centered in frequency, second-order backward in time (causal).
    BackwardTime2nd,
}

/// Phase derivative samples on the magnitude grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimates {
    /// Time derivative, radians per hop, including the bin advance.
    pub time: TfGrid,
    /// Frequency derivative, radians per bin.
    pub freq: TfGrid,
    pub scheme: DerivativeScheme,
}

/// Natural log of the magnitude floored at `1e-10 * max`.
pub fn log_magnitude(mag: &TfGrid) -> TfGrid {
    let floor = magnitude_floor(mag.max_value());
    mag.map(|&a| a.max(floor).ln())
}

/// Time derivative of one frame from the centered frequency difference;
/// the edge bins use one-sided first-order differences.
pub fn time_derivative_frame(log_mag: &[f64], params: &GradientParams) -> Vec<f64> {
    let bins = log_mag.len();
    let scale = params.time_scale();
    (0..bins)
        .map(|m| {
            let diff = if bins < 2 {
                0.0
            } else if m == 0 {
                2.0 * (log_mag[1] - log_mag[0])
            } else if m == bins - 1 {
                2.0 * (log_mag[m] - log_mag[m - 1])
            } else {
                log_mag[m + 1] - log_mag[m - 1]
            };
            scale * diff + bin_advance(m, params.hop, params.fft_size)
        })
        .collect()
}

/// Centered estimates over the whole grid. The first and last frames use
/// one-sided first-order time differences.
pub fn estimate_derivatives_centered(log_mag: &TfGrid, params: &GradientParams) -> Result<DerivativeEstimates> {
    check_grid(log_mag)?;
    let (bins, frames) = (log_mag.bins(), log_mag.frames());
    let time = TfGrid::from_frames(log_mag.iter_frames().map(|f| time_derivative_frame(f, params)))?;
    let scale = params.freq_scale();
    let mut freq = TfGrid::filled(bins, frames, 0.0);
    for n in 0..frames {
        for m in 0..bins {
            let diff = if n == 0 {
                2.0 * (log_mag.get(m, 1) - log_mag.get(m, 0))
            } else if n == frames - 1 {
                2.0 * (log_mag.get(m, n) - log_mag.get(m, n - 1))
            } else {
                log_mag.get(m, n + 1) - log_mag.get(m, n - 1)
            };
            freq.set(m, n, scale * diff);
        }
    }
    Ok(DerivativeEstimates {
        time,
        freq,
        scheme: DerivativeScheme::Centered,
    })
}

/// Frame-by-frame derivative estimator that only ever sees the current and
/// two previous log-magnitude frames.
#[derive(Debug, Clone)]
pub struct CausalDerivativeEstimator {
    params: GradientParams,
    history: Vec<Vec<f64>>,
}

impl CausalDerivativeEstimator {
    pub fn new(params: GradientParams) -> Self {
        Self {
            params,
            history: Vec::with_capacity(2),
        }
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Returns `(time, freq)` derivative samples for the pushed frame. Frame 0
    /// has zero frequency derivative, frame 1 a first-order backward
    /// difference, later frames the second-order backward difference.
    pub fn push(&mut self, log_mag: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let time = time_derivative_frame(log_mag, &self.params);
        let scale = self.params.freq_scale();
        let freq = match self.history.as_slice() {
            [] => vec![0.0; log_mag.len()],
            [prev] => log_mag.iter().zip(prev).map(|(c, p)| scale * 2.0 * (c - p)).collect(),
            [older, prev] => log_mag
                .iter()
                .zip(prev)
                .zip(older)
                .map(|((c, p), o)| scale * (3.0 * c - 4.0 * p + o))
                .collect(),
            _ => unreachable!("history holds at most two frames"),
        };
        if self.history.len() == 2 {
            self.history.remove(0);
        }
        self.history.push(log_mag.to_vec());
        (time, freq)
    }
}

/// Runs [`CausalDerivativeEstimator`] over a whole grid.
pub fn estimate_derivatives_causal(log_mag: &TfGrid, params: &GradientParams) -> Result<DerivativeEstimates> {
    check_grid(log_mag)?;
    let mut est = CausalDerivativeEstimator::new(*params);
    let (mut time, mut freq) = (Vec::new(), Vec::new());
    for frame in log_mag.iter_frames() {
        let (t, f) = est.push(frame);
        time.push(t);
        freq.push(f);
    }
    Ok(DerivativeEstimates {
        time: TfGrid::from_frames(time)?,
        freq: TfGrid::from_frames(freq)?,
        scheme: DerivativeScheme::BackwardTime2nd,
    })
}

fn check_grid(grid: &TfGrid) -> Result<()> {
    if grid.bins() < 3 || grid.frames() < 3 {
        return Err(Error::InvalidParameter(format!(
            "derivative estimation needs at least 3x3 samples, got {}x{}",
            grid.bins(),
            grid.frames()
        )));
    }
    Ok(())
}

/// Trapezoidal average of derivative samples onto backward differences.
/// Frame 0 carries FPD only.
pub fn average_to_backward_differences(est: &DerivativeEstimates) -> Vec<PhaseDifferenceFrame> {
    (0..est.time.frames())
        .map(|n| {
            let prev = (n > 0).then(|| est.time.frame(n - 1));
            average_frame(n, est.time.frame(n), prev, est.freq.frame(n))
        })
        .collect()
}

/// Single-frame version of [`average_to_backward_differences`].
pub fn average_frame(
    frame_index: usize,
    time_cur: &[f64],
    time_prev: Option<&[f64]>,
    freq_cur: &[f64],
) -> PhaseDifferenceFrame {
    let tpd = time_prev.map(|p| time_cur.iter().zip(p).map(|(a, b)| 0.5 * (a + b)).collect());
    let fpd = freq_cur.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    PhaseDifferenceFrame {
        frame_index,
        tpd,
        fpd,
        wrapped: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeapIntegrationParams {
    /// Bins with magnitude below `relative_tolerance * max` get random phase.
    pub relative_tolerance: f64,
    pub rng_seed: u64,
}

impl Default for HeapIntegrationParams {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-6,
            rng_seed: 0,
        }
    }
}

impl HeapIntegrationParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.relative_tolerance) {
            return Err(Error::InvalidParameter(format!(
                "relative tolerance must lie in [0, 1), got {}",
                self.relative_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    magnitude: f64,
    bin: usize,
    frame: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Larger magnitude first; ties resolved towards lower frame, then lower bin.
    fn cmp(&self, other: &Self) -> Ordering {
        self.magnitude
            .total_cmp(&other.magnitude)
            .then_with(|| other.frame.cmp(&self.frame))
            .then_with(|| other.bin.cmp(&self.bin))
    }
}

/// Max-heap that checks the pop order in debug builds.
#[derive(Default)]
struct MagnitudeHeap {
    heap: BinaryHeap<HeapEntry>,
}

impl MagnitudeHeap {
    fn push(&mut self, e: HeapEntry) {
        self.heap.push(e);
    }

    fn pop(&mut self) -> Option<HeapEntry> {
        let e = self.heap.pop()?;
        debug_assert!(
            self.heap.peek().is_none_or(|top| top.magnitude <= e.magnitude),
            "heap order violated"
        );
        Some(e)
    }
}

/// Bins at or above the threshold are integrated; exact zeros carry no phase
/// information and are always treated as below tolerance.
#[inline]
fn is_active(magnitude: f64, threshold: f64) -> bool {
    magnitude > 0.0 && magnitude >= threshold
}

fn random_phase(rng: &mut ChaCha8Rng) -> f64 {
    // uniform on (-pi, pi]
    PI - rng.gen::<f64>() * 2.0 * PI
}

fn diff_dims(diffs: &[PhaseDifferenceFrame], bins: usize, frames: usize) -> Result<()> {
    check_len("difference frames", frames, diffs.len())?;
    for (n, d) in diffs.iter().enumerate() {
        check_len("fpd", bins - 1, d.fpd.len())?;
        match (&d.tpd, n) {
            (Some(v), _) => check_len("tpd", bins, v.len())?,
            (None, 0) => {}
            (None, _) => return Err(Error::InvalidParameter(format!("frame {n} lacks TPD"))),
        }
    }
    Ok(())
}

/// Offline heap integration over the whole grid.
///
/// Each connected region of above-tolerance bins is seeded at its largest
/// bin with phase 0 and grown in decreasing magnitude order along the four
/// integration paths. The region holding the DC bin of frame 0 is then
/// rotated so that bin has phase 0, which keeps an exact integration
/// consistent with a real signal. Remaining bins receive uniform random
/// phase, drawn in frame-major order after integration.
pub fn pghi_reconstruct(
    mag: &TfGrid,
    diffs: &[PhaseDifferenceFrame],
    params: &HeapIntegrationParams,
) -> Result<TfGrid> {
    params.validate()?;
    if mag.is_empty() {
        return Err(Error::EmptyInput("magnitude grid"));
    }
    let (bins, frames) = (mag.bins(), mag.frames());
    diff_dims(diffs, bins, frames)?;
    let threshold = params.relative_tolerance * mag.max_value();
    let active = |m: usize, n: usize| is_active(mag.get(m, n), threshold);

    let mut phase = TfGrid::filled(bins, frames, 0.0);
    let mut done = vec![false; bins * frames];
    let mut region = vec![usize::MAX; bins * frames];
    let mut order: Vec<(usize, usize)> = (0..frames)
        .flat_map(|n| (0..bins).map(move |m| (m, n)))
        .filter(|&(m, n)| active(m, n))
        .collect();
    order.sort_by(|a, b| {
        mag.get(b.0, b.1)
            .total_cmp(&mag.get(a.0, a.1))
            .then_with(|| (a.1, a.0).cmp(&(b.1, b.0)))
    });

    let mut heap = MagnitudeHeap::default();
    for (r, &(m0, n0)) in order.iter().enumerate() {
        if done[n0 * bins + m0] {
            continue;
        }
        phase.set(m0, n0, 0.0);
        done[n0 * bins + m0] = true;
        region[n0 * bins + m0] = r;
        heap.push(HeapEntry {
            magnitude: mag.get(m0, n0),
            bin: m0,
            frame: n0,
        });
        while let Some(HeapEntry { bin: m, frame: n, .. }) = heap.pop() {
            let here = phase.get(m, n);
            let mut visit = |mm: usize, nn: usize, value: f64| {
                let idx = nn * bins + mm;
                if !done[idx] && active(mm, nn) {
                    done[idx] = true;
                    region[idx] = r;
                    phase.set(mm, nn, value);
                    heap.push(HeapEntry {
                        magnitude: mag.get(mm, nn),
                        bin: mm,
                        frame: nn,
                    });
                }
            };
            if n + 1 < frames {
                let v = diffs[n + 1].tpd.as_ref().expect("checked")[m];
                visit(m, n + 1, here + v);
            }
            if n > 0 {
                let v = diffs[n].tpd.as_ref().expect("checked")[m];
                visit(m, n - 1, here - v);
            }
            if m + 1 < bins {
                visit(m + 1, n, here + diffs[n].fpd[m]);
            }
            if m > 0 {
                visit(m - 1, n, here - diffs[n].fpd[m - 1]);
            }
        }
    }

    if done[0] {
        let (anchor, offset) = (region[0], phase.get(0, 0));
        for (p, r) in phase.as_mut_slice().iter_mut().zip(&region) {
            if *r == anchor {
                *p -= offset;
            }
        }
    }
    let mut rng = rng_from_seed(params.rng_seed);
    for (p, d) in phase.as_mut_slice().iter_mut().zip(&done) {
        *p = if *d { wrap(*p) } else { random_phase(&mut rng) };
    }
    Ok(phase)
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Streaming heap integration: one call per frame, never looking ahead.
#[derive(Debug, Clone)]
pub struct RtpghiState {
    params: HeapIntegrationParams,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    running_max: f64,
    rng: ChaCha8Rng,
    frame_index: usize,
}

impl RtpghiState {
    pub fn new(params: HeapIntegrationParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            prev: None,
            running_max: 0.0,
            rng: rng_from_seed(params.rng_seed),
            frame_index: 0,
        })
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Integrates one frame. `tpd` is ignored (and may be `None`) for the
    /// first frame. The tolerance is relative to the running maximum.
    pub fn step(&mut self, mag: &[f64], tpd: Option<&[f64]>, fpd: &[f64]) -> Result<Vec<f64>> {
        let bins = mag.len();
        if bins == 0 {
            return Err(Error::EmptyInput("magnitude frame"));
        }
        check_len("fpd", bins - 1, fpd.len())?;
        self.running_max = mag.iter().copied().fold(self.running_max, f64::max);
        let threshold = self.params.relative_tolerance * self.running_max;
        let active: Vec<bool> = mag.iter().map(|&a| is_active(a, threshold)).collect();

        let mut phase = vec![0.0; bins];
        let mut done = vec![false; bins];
        let mut heap = MagnitudeHeap::default();
        // frame 0 marks the previous frame, frame 1 the current one
        if let Some((prev_mag, prev_phase)) = &self.prev {
            let tpd = tpd.ok_or_else(|| Error::InvalidParameter("TPD required after the first frame".into()))?;
            check_len("tpd", bins, tpd.len())?;
            check_len("previous frame", bins, prev_mag.len())?;
            for m in 0..bins {
                if is_active(prev_mag[m], threshold) {
                    heap.push(HeapEntry {
                        magnitude: prev_mag[m],
                        bin: m,
                        frame: 0,
                    });
                }
            }
            self.grow(
                &mut heap,
                &mut phase,
                &mut done,
                &active,
                mag,
                Some((prev_phase, tpd)),
                fpd,
            );
        }
        loop {
            let seed = (0..bins)
                .filter(|&m| active[m] && !done[m])
                .max_by(|&a, &b| mag[a].total_cmp(&mag[b]).then_with(|| b.cmp(&a)));
            let Some(m0) = seed else { break };
            phase[m0] = 0.0;
            done[m0] = true;
            heap.push(HeapEntry {
                magnitude: mag[m0],
                bin: m0,
                frame: 1,
            });
            self.grow(&mut heap, &mut phase, &mut done, &active, mag, None, fpd);
        }
        if self.prev.is_none() && active[0] {
            // anchor the DC run of the first frame like the offline variant
            let run = active.iter().take_while(|a| **a).count();
            let offset = phase[0];
            phase[..run].iter_mut().for_each(|p| *p -= offset);
        }
        for (p, d) in phase.iter_mut().zip(&done) {
            *p = if *d { wrap(*p) } else { random_phase(&mut self.rng) };
        }
        self.prev = Some((mag.to_vec(), phase.clone()));
        self.frame_index += 1;
        Ok(phase)
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &self,
        heap: &mut MagnitudeHeap,
        phase: &mut [f64],
        done: &mut [bool],
        active: &[bool],
        mag: &[f64],
        prev: Option<(&Vec<f64>, &[f64])>,
        fpd: &[f64],
    ) {
        let bins = mag.len();
        while let Some(e) = heap.pop() {
            let m = e.bin;
            let mut candidates: [Option<(usize, f64)>; 2] = [None, None];
            if e.frame == 0 {
                let (prev_phase, tpd) = prev.expect("previous-frame entries need history");
                candidates[0] = Some((m, prev_phase[m] + tpd[m]));
            } else {
                if m + 1 < bins {
                    candidates[0] = Some((m + 1, phase[m] + fpd[m]));
                }
                if m > 0 {
                    candidates[1] = Some((m - 1, phase[m] - fpd[m - 1]));
                }
            }
            for (mm, value) in candidates.into_iter().flatten() {
                if !done[mm] && active[mm] {
                    done[mm] = true;
                    phase[mm] = value;
                    heap.push(HeapEntry {
                        magnitude: mag[mm],
                        bin: mm,
                        frame: 1,
                    });
                }
            }
        }
    }
}

/// Causal analytic estimation feeding [`RtpghiState`]: each pushed
/// magnitude frame yields its phase and the differences that were used.
#[derive(Debug, Clone)]
pub struct RtpghiReconstructor {
    estimator: CausalDerivativeEstimator,
    state: RtpghiState,
    floor: crate::phasediff::RunningFloor,
    prev_time: Option<Vec<f64>>,
}

impl RtpghiReconstructor {
    pub fn new(gradient: GradientParams, heap: HeapIntegrationParams) -> Result<Self> {
        Ok(Self {
            estimator: CausalDerivativeEstimator::new(gradient),
            state: RtpghiState::new(heap)?,
            floor: crate::phasediff::RunningFloor::new(),
            prev_time: None,
        })
    }

    pub fn frame_index(&self) -> usize {
        self.state.frame_index()
    }

    pub fn push(&mut self, mag: &[f64]) -> Result<(Vec<f64>, PhaseDifferenceFrame)> {
        if mag.len() < 2 {
            return Err(Error::EmptyInput("magnitude frame needs at least two bins"));
        }
        let floor = self.floor.observe(mag);
        let log: Vec<f64> = mag.iter().map(|a| a.max(floor).ln()).collect();
        let (time, freq) = self.estimator.push(&log);
        let diffs = average_frame(self.state.frame_index(), &time, self.prev_time.as_deref(), &freq);
        let phase = self.state.step(mag, diffs.tpd.as_deref(), &diffs.fpd)?;
        self.prev_time = Some(time);
        Ok((phase, diffs))
    }
}
