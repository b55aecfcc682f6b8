//! Forward pass of the causal convolutional phase-difference estimators.
//!
//! A network sees the mean-normalized log-magnitudes of the current frame and
//! `look_back` previous frames as input channels and convolves along
//! frequency only, so its output for frame `n` never depends on later frames.

use std::borrow::Borrow;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::TfGrid;
use crate::phasediff::{baseband_to_tpd_unwrapped, floored, PhaseDifferenceFrame, RunningFloor};

pub const DEFAULT_LOOK_BACK: usize = 3;
pub const DEFAULT_CHANNELS: usize = 64;
pub const DEFAULT_KERNEL: usize = 3;
pub const DEFAULT_GATED_LAYERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    /// Baseband phase delay, `M` outputs.
    Bpd,
    /// Frequency phase difference, `M - 1` outputs.
    Fpd,
}

impl Head {
    pub fn code(self) -> u8 {
        match self {
            Head::Bpd => 0,
            Head::Fpd => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Head::Bpd),
            1 => Some(Head::Fpd),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Bpd => "BPD",
            Head::Fpd => "FPD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    FreqConv,
    FreqGatedConv,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::FreqConv => 0,
            LayerKind::FreqGatedConv => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LayerKind::FreqConv),
            1 => Some(LayerKind::FreqGatedConv),
            _ => None,
        }
    }
}

/// Weights of one convolution along frequency. Tensors are `[out][in][k]`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    /// Present iff `kind` is `FreqGatedConv`.
    pub gate_weight: Option<Vec<f32>>,
    pub gate_bias: Option<Vec<f32>>,
}

impl Layer {
    pub fn zeros(kind: LayerKind, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        let n = out_channels * in_channels * kernel;
        let gated = kind == LayerKind::FreqGatedConv;
        Self {
            kind,
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; n],
            bias: vec![0.0; out_channels],
            gate_weight: gated.then(|| vec![0.0; n]),
            gate_bias: gated.then(|| vec![0.0; out_channels]),
        }
    }

    /// Uniform initialization in `+-1/sqrt(in * k)`.
    pub fn random<R: Rng>(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(kind, in_channels, out_channels, kernel);
        let bound = 1.0 / ((in_channels * kernel) as f32).sqrt();
        let mut fill = |v: &mut Vec<f32>| v.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
        fill(&mut layer.weight);
        fill(&mut layer.bias);
        if let Some(g) = layer.gate_weight.as_mut() {
            fill(g);
        }
        if let Some(g) = layer.gate_bias.as_mut() {
            fill(g);
        }
        layer
    }

    pub fn param_count(&self) -> usize {
        let base = self.weight.len() + self.bias.len();
        match self.kind {
            LayerKind::FreqConv => base,
            LayerKind::FreqGatedConv => 2 * base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Model(msg));
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return fail(format!("kernel size must be odd, got {}", self.kernel));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return fail("layer channels must be positive".into());
        }
        let n = self.out_channels * self.in_channels * self.kernel;
        if self.weight.len() != n || self.bias.len() != self.out_channels {
            return fail(format!(
                "weights {}x{}x{} do not match tensor sizes {} / {}",
                self.out_channels,
                self.in_channels,
                self.kernel,
                self.weight.len(),
                self.bias.len()
            ));
        }
        let gated = self.kind == LayerKind::FreqGatedConv;
        match (&self.gate_weight, &self.gate_bias) {
            (Some(w), Some(b)) if gated && w.len() == n && b.len() == self.out_channels => Ok(()),
            (None, None) if !gated => Ok(()),
            _ => fail("gate tensors do not match layer kind".into()),
        }
    }

    /// Same-padded cross-correlation along bins for channel-major input
    /// `[in][bins]`.
    fn conv(&self, weight: &[f32], bias: &[f32], input: &[f32], bins: usize) -> Vec<f32> {
        let (cin, k) = (self.in_channels, self.kernel);
        let half = k / 2;
        let mut out = vec![0.0f32; self.out_channels * bins];
        for (o, row) in out.chunks_exact_mut(bins).enumerate() {
            row.fill(bias[o]);
            for i in 0..cin {
                let x = &input[i * bins..(i + 1) * bins];
                for t in 0..k {
                    let w = weight[(o * cin + i) * k + t];
                    if w == 0.0 {
                        continue;
                    }
                    // out[m] += w * x[m + t - half], skipping padded positions
                    let (lo, hi) = if t < half {
                        (half - t, bins)
                    } else {
                        (0, bins.saturating_sub(t - half))
                    };
                    if lo >= hi {
                        continue;
                    }
                    let shift = t as isize - half as isize;
                    let src = &x[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                    for (y, v) in row[lo..hi].iter_mut().zip(src) {
                        *y += w * v;
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, input: &[f32], bins: usize) -> Vec<f32> {
        let linear = self.conv(&self.weight, &self.bias, input, bins);
        match (self.kind, &self.gate_weight, &self.gate_bias) {
            (LayerKind::FreqGatedConv, Some(gw), Some(gb)) => {
                let gate = self.conv(gw, gb, input, bins);
                linear.iter().zip(&gate).map(|(l, g)| l * sigmoid(*g)).collect()
            }
            _ => linear,
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Shape of the default stack, with every knob exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub look_back: usize,
    pub channels: usize,
    pub kernel: usize,
    pub gated_layers: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            look_back: DEFAULT_LOOK_BACK,
            channels: DEFAULT_CHANNELS,
            kernel: DEFAULT_KERNEL,
            gated_layers: DEFAULT_GATED_LAYERS,
        }
    }
}

impl Architecture {
    pub fn param_count(&self) -> usize {
        let c = self.channels;
        let first = (self.look_back + 1) * c + c;
        let gated = 2 * (c * c * self.kernel + c);
        let last = c + 1;
        first + self.gated_layers * gated + last
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetModel {
    pub head: Head,
    pub layers: Vec<Layer>,
}

impl ConvNetModel {
    pub fn new(head: Head, layers: Vec<Layer>) -> Result<Self> {
        let model = Self { head, layers };
        model.validate()?;
        Ok(model)
    }

    /// Randomly initialized network with the given architecture.
    pub fn random<R: Rng>(head: Head, arch: Architecture, rng: &mut R) -> Result<Self> {
        let c = arch.channels;
        let mut layers = vec![Layer::random(LayerKind::FreqConv, arch.look_back + 1, c, 1, rng)];
        for _ in 0..arch.gated_layers {
            layers.push(Layer::random(LayerKind::FreqGatedConv, c, c, arch.kernel, rng));
        }
        layers.push(Layer::random(LayerKind::FreqConv, c, 1, 1, rng));
        Self::new(head, layers)
    }

    /// All-zero network with the given architecture.
    pub fn zeros(head: Head, arch: Architecture) -> Result<Self> {
        let c = arch.channels;
        let mut layers = vec![Layer::zeros(LayerKind::FreqConv, arch.look_back + 1, c, 1)];
        for _ in 0..arch.gated_layers {
            layers.push(Layer::zeros(LayerKind::FreqGatedConv, c, c, arch.kernel));
        }
        layers.push(Layer::zeros(LayerKind::FreqConv, c, 1, 1));
        Self::new(head, layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Model("model has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate().map_err(|e| Error::Model(format!("layer {i}: {e}")))?;
            if i > 0 && self.layers[i - 1].out_channels != layer.in_channels {
                return Err(Error::Model(format!(
                    "layer {i} expects {} input channels but layer {} produces {}",
                    layer.in_channels,
                    i - 1,
                    self.layers[i - 1].out_channels
                )));
            }
        }
        let last = self.layers.last().map_or(0, |l| l.out_channels);
        if last != 1 {
            return Err(Error::Model(format!(
                "final layer must have one output channel, got {last}"
            )));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn look_back(&self) -> usize {
        self.input_channels() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Raw network output, one value per bin.
    pub fn forward_raw(&self, feature: &FeatureFrame) -> Result<Vec<f32>> {
        if feature.channels != self.input_channels() {
            return Err(Error::DimensionMismatch {
                what: "feature channels",
                expected: self.input_channels(),
                actual: feature.channels,
            });
        }
        let bins = feature.bins;
        let mut x: Vec<f32> = feature.data.iter().map(|&v| v as f32).collect();
        for layer in &self.layers {
            x = layer.forward(&x, bins);
        }
        Ok(x)
    }

    fn forward_head(&self, head: Head, feature: &FeatureFrame) -> Result<Vec<f32>> {
        if self.head != head {
            return Err(Error::Format(crate::error::FormatError::HeadMismatch {
                expected: head.name(),
                found: self.head.name(),
            }));
        }
        let mut out = self.forward_raw(feature)?;
        if head == Head::Fpd {
            out.remove(0);
        }
        Ok(out)
    }

    /// BPD estimate, `M` values in radians (unwrapped).
    pub fn forward_bpd(&self, feature: &FeatureFrame) -> Result<Vec<f32>> {
        self.forward_head(Head::Bpd, feature)
    }

    /// FPD estimate, `M - 1` values; the output at bin 0 is dropped.
    pub fn forward_fpd(&self, feature: &FeatureFrame) -> Result<Vec<f32>> {
        self.forward_head(Head::Fpd, feature)
    }
}

/// Network input: channel-major `[channels][bins]`, channel 0 the oldest
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub channels: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl FeatureFrame {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.bins..(c + 1) * self.bins]
    }
}

/// Stacks log-magnitude frames (oldest first) and subtracts the mean of the
/// whole block.
pub fn build_feature(frames: &[&[f64]]) -> Result<FeatureFrame> {
    let first = frames.first().ok_or(Error::EmptyInput("feature frames"))?;
    let bins = first.len();
    if bins == 0 {
        return Err(Error::EmptyInput("feature frame bins"));
    }
    for f in frames {
        crate::phasediff::check_len("feature frame", bins, f.len())?;
    }
    let mut data: Vec<f64> = frames.iter().flat_map(|f| f.iter().copied()).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log-magnitude feature"));
    }
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    data.iter_mut().for_each(|v| *v -= mean);
    Ok(FeatureFrame {
        channels: frames.len(),
        bins,
        data,
    })
}

/// Streaming estimator running both networks frame by frame. `M` is anything
/// that borrows a model, such as `&ConvNetModel` or `Arc<ConvNetModel>`.
#[derive(Debug, Clone)]
pub struct DnnEstimator<M> {
    bpd: M,
    fpd: M,
    hop: usize,
    fft_size: usize,
    floor: RunningFloor,
    history: Vec<Vec<f64>>,
    frame_index: usize,
}

impl<M: Borrow<ConvNetModel>> DnnEstimator<M> {
    pub fn new(bpd: M, fpd: M, hop: usize, fft_size: usize) -> Result<Self> {
        let (b, f) = (bpd.borrow(), fpd.borrow());
        if b.head != Head::Bpd {
            return Err(crate::error::FormatError::HeadMismatch {
                expected: "BPD",
                found: b.head.name(),
            }
            .into());
        }
        if f.head != Head::Fpd {
            return Err(crate::error::FormatError::HeadMismatch {
                expected: "FPD",
                found: f.head.name(),
            }
            .into());
        }
        if b.look_back() != f.look_back() {
            return Err(Error::Model(format!(
                "look-back mismatch: BPD model uses {}, FPD model uses {}",
                b.look_back(),
                f.look_back()
            )));
        }
        Ok(Self {
            bpd,
            fpd,
            hop,
            fft_size,
            floor: RunningFloor::new(),
            history: Vec::new(),
            frame_index: 0,
        })
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Estimates differences for the next magnitude frame. Missing history at
    /// the start of the stream repeats frame 0.
    pub fn push(&mut self, mag: &[f64]) -> Result<PhaseDifferenceFrame> {
        let floor = self.floor.observe(mag);
        let log: Vec<f64> = floored(mag, floor).iter().map(|a| a.ln()).collect();
        let need = self.bpd.borrow().look_back() + 1;
        if self.history.is_empty() {
            self.history = vec![log; need];
        } else {
            self.history.remove(0);
            self.history.push(log);
        }
        let refs: Vec<&[f64]> = self.history.iter().map(Vec::as_slice).collect();
        let feature = build_feature(&refs)?;
        let w: Vec<f64> = self
            .bpd
            .borrow()
            .forward_bpd(&feature)?
            .iter()
            .map(|&v| v as f64)
            .collect();
        let fpd: Vec<f64> = self
            .fpd
            .borrow()
            .forward_fpd(&feature)?
            .iter()
            .map(|&v| v as f64)
            .collect();
        let n = self.frame_index;
        self.frame_index += 1;
        Ok(PhaseDifferenceFrame {
            frame_index: n,
            tpd: (n > 0).then(|| baseband_to_tpd_unwrapped(&w, self.hop, self.fft_size)),
            fpd,
            wrapped: false,
        })
    }
}

/// Runs [`DnnEstimator`] over a whole magnitude grid.
pub fn estimate_differences_dnn(
    mag: &TfGrid,
    bpd: &ConvNetModel,
    fpd: &ConvNetModel,
    hop: usize,
    fft_size: usize,
) -> Result<Vec<PhaseDifferenceFrame>> {
    let mut est = DnnEstimator::new(bpd, fpd, hop, fft_size)?;
    mag.iter_frames().map(|f| est.push(f)).collect()
}
