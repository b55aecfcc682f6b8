//! Little-endian binary containers: spectrograms (PSPC), phase differences
//! (PPDF), network weights (PDNW) and AWE histograms (PPDH).

use std::io::Write;
use std::path::Path;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, FormatError, Result};
use crate::grid::TfGrid;
use crate::metrics::Histogram;
use crate::nn::{ConvNetModel, Head, Layer, LayerKind};
use crate::phasediff::{baseband_to_tpd_unwrapped, bin_advance_frame, wrap, PhaseDifferenceFrame};
use crate::spectral::{Spectrogram, StftConfig};

pub const PSPC_MAGIC: [u8; 4] = *b"PSPC";
pub const PPDF_MAGIC: [u8; 4] = *b"PPDF";
pub const PDNW_MAGIC: [u8; 4] = *b"PDNW";
pub const PPDH_MAGIC: [u8; 4] = *b"PPDH";
pub const FORMAT_VERSION: u16 = 1;

type FResult<T> = std::result::Result<T, FormatError>;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> FResult<&'a [u8]> {
        let left = self.buf.len() - self.pos;
        if left < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n - left,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: [u8; 4]) -> FResult<()> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if found != expected {
            return Err(FormatError::BadMagic { expected, found });
        }
        Ok(())
    }

    fn version(&mut self) -> FResult<()> {
        match self.u16()? {
            FORMAT_VERSION => Ok(()),
            v => Err(FormatError::UnsupportedVersion(v)),
        }
    }

    fn u8(&mut self) -> FResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> FResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> FResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> FResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> FResult<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::Truncated {
            offset: self.pos,
            needed: usize::MAX,
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> FResult<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn header(magic: [u8; 4]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out
}

fn field_u32(field: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| {
        FormatError::InvalidField {
            field,
            reason: format!("{v} does not fit in u32"),
        }
        .into()
    })
}

fn field_u16(field: &'static str, v: usize) -> Result<u16> {
    u16::try_from(v).map_err(|_| {
        FormatError::InvalidField {
            field,
            reason: format!("{v} does not fit in u16"),
        }
        .into()
    })
}

fn nonzero(field: &'static str, v: u32) -> FResult<usize> {
    if v == 0 {
        return Err(FormatError::InvalidField {
            field,
            reason: "must be positive".into(),
        });
    }
    Ok(v as usize)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so a failed write never leaves a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrogramPayload {
    Magnitude(TfGrid<f32>),
    Complex(TfGrid<Complex32>),
}

/// Contents of a PSPC file.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramFile {
    pub sample_rate: u32,
    pub hop: u32,
    pub window_length: u32,
    pub payload: SpectrogramPayload,
}

impl SpectrogramFile {
    pub fn bins(&self) -> usize {
        match &self.payload {
            SpectrogramPayload::Magnitude(g) => g.bins(),
            SpectrogramPayload::Complex(g) => g.bins(),
        }
    }

    pub fn frames(&self) -> usize {
        match &self.payload {
            SpectrogramPayload::Magnitude(g) => g.frames(),
            SpectrogramPayload::Complex(g) => g.frames(),
        }
    }

    pub fn from_magnitude(spec: &Spectrogram) -> Result<Self> {
        Self::build(spec, SpectrogramPayload::Magnitude(spec.magnitude().map(|&a| a as f32)))
    }

    pub fn from_complex(spec: &Spectrogram) -> Result<Self> {
        let grid = spec.coefficients().map(|c| Complex32::new(c.re as f32, c.im as f32));
        Self::build(spec, SpectrogramPayload::Complex(grid))
    }

    fn build(spec: &Spectrogram, payload: SpectrogramPayload) -> Result<Self> {
        let cfg = spec.config();
        Ok(Self {
            sample_rate: spec.sample_rate(),
            hop: field_u32("hop", cfg.hop())?,
            window_length: field_u32("window length", cfg.window_length())?,
            payload,
        })
    }

    /// STFT configuration implied by the header: Hann window of the stored
    /// length, FFT size `2 (M - 1)`.
    pub fn config(&self) -> Result<StftConfig> {
        let fft = 2 * (self.bins().saturating_sub(1));
        StftConfig::new(
            crate::spectral::WindowKind::Hann,
            self.window_length as usize,
            self.hop as usize,
            fft,
        )
    }

    /// Signal length implied by the frame count.
    pub fn signal_len(&self) -> usize {
        self.frames().saturating_sub(1) * self.hop as usize
    }

    pub fn magnitude(&self) -> TfGrid {
        match &self.payload {
            SpectrogramPayload::Magnitude(g) => g.map(|&a| a as f64),
            SpectrogramPayload::Complex(g) => g.map(|c| (c.re as f64).hypot(c.im as f64)),
        }
    }

    /// Complex spectrogram; `None` for magnitude-only files.
    pub fn to_spectrogram(&self) -> Result<Option<Spectrogram>> {
        match &self.payload {
            SpectrogramPayload::Magnitude(_) => Ok(None),
            SpectrogramPayload::Complex(g) => {
                let coeffs = g.map(|c| Complex64::new(c.re as f64, c.im as f64));
                Spectrogram::new(coeffs, self.config()?, self.sample_rate, self.signal_len()).map(Some)
            }
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = header(PSPC_MAGIC);
        for (field, v) in [("bins", self.bins()), ("frames", self.frames())] {
            out.extend_from_slice(&field_u32(field, v)?.to_le_bytes());
        }
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&self.hop.to_le_bytes());
        out.extend_from_slice(&self.window_length.to_le_bytes());
        match &self.payload {
            SpectrogramPayload::Magnitude(g) => {
                out.push(0);
                put_f32s(&mut out, g.as_slice());
            }
            SpectrogramPayload::Complex(g) => {
                out.push(1);
                for c in g.as_slice() {
                    out.extend_from_slice(&c.re.to_le_bytes());
                    out.extend_from_slice(&c.im.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(PSPC_MAGIC)?;
        r.version()?;
        let bins = nonzero("bins", r.u32()?)?;
        let frames = nonzero("frames", r.u32()?)?;
        let sample_rate = r.u32()?;
        let hop = r.u32()?;
        let window_length = r.u32()?;
        let count = bins.checked_mul(frames).ok_or(FormatError::InvalidField {
            field: "frames",
            reason: "grid size overflows".into(),
        })?;
        let payload = match r.u8()? {
            0 => SpectrogramPayload::Magnitude(TfGrid::from_vec(bins, frames, r.f32s(count)?)?),
            1 => {
                let raw = r.f32s(count.checked_mul(2).ok_or(FormatError::InvalidField {
                    field: "frames",
                    reason: "grid size overflows".into(),
                })?)?;
                let data = raw.chunks_exact(2).map(|c| Complex32::new(c[0], c[1])).collect();
                SpectrogramPayload::Complex(TfGrid::from_vec(bins, frames, data)?)
            }
            k => {
                return Err(FormatError::InvalidField {
                    field: "kind",
                    reason: format!("unknown payload kind {k}"),
                }
                .into())
            }
        };
        r.finish()?;
        Ok(Self {
            sample_rate,
            hop,
            window_length,
            payload,
        })
    }
}

/// Contents of a PPDF file: per frame `M` BPD values (zero at frame 0) and
/// `M - 1` FPD values.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiffFile {
    pub bpd: TfGrid<f32>,
    pub fpd: TfGrid<f32>,
}

impl PhaseDiffFile {
    pub fn bins(&self) -> usize {
        self.bpd.bins()
    }

    pub fn frames(&self) -> usize {
        self.bpd.frames()
    }

    /// Wrapped estimates are stored as wrapped BPD, unbounded ones as
    /// `TPD - advance` without wrapping.
    pub fn from_frames(frames: &[PhaseDifferenceFrame], hop: usize, fft_size: usize) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyInput("phase-difference frames"))?;
        let bins = first.bins();
        let mut bpd = Vec::with_capacity(bins * frames.len());
        let mut fpd = Vec::with_capacity((bins - 1) * frames.len());
        for f in frames {
            crate::phasediff::check_len("phase-difference frame bins", bins, f.bins())?;
            match &f.tpd {
                None => bpd.extend(std::iter::repeat_n(0.0f32, bins)),
                Some(tpd) => {
                    crate::phasediff::check_len("tpd", bins, tpd.len())?;
                    let adv = bin_advance_frame(bins, hop, fft_size);
                    bpd.extend(tpd.iter().zip(&adv).map(|(v, a)| {
                        let w = v - a;
                        (if f.wrapped { wrap(w) } else { w }) as f32
                    }));
                }
            }
            fpd.extend(f.fpd.iter().map(|&u| u as f32));
        }
        Ok(Self {
            bpd: TfGrid::from_vec(bins, frames.len(), bpd)?,
            fpd: TfGrid::from_vec(bins - 1, frames.len(), fpd)?,
        })
    }

    /// Frames with `TPD = BPD + advance`; frame 0 carries no TPD.
    pub fn to_frames(&self, hop: usize, fft_size: usize) -> Vec<PhaseDifferenceFrame> {
        (0..self.frames())
            .map(|n| {
                let w: Vec<f64> = self.bpd.frame(n).iter().map(|&v| v as f64).collect();
                PhaseDifferenceFrame {
                    frame_index: n,
                    tpd: (n > 0).then(|| baseband_to_tpd_unwrapped(&w, hop, fft_size)),
                    fpd: self.fpd.frame(n).iter().map(|&v| v as f64).collect(),
                    wrapped: false,
                }
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = header(PPDF_MAGIC);
        out.extend_from_slice(&field_u32("bins", self.bins())?.to_le_bytes());
        out.extend_from_slice(&field_u32("frames", self.frames())?.to_le_bytes());
        for n in 0..self.frames() {
            put_f32s(&mut out, self.bpd.frame(n));
            put_f32s(&mut out, self.fpd.frame(n));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(PPDF_MAGIC)?;
        r.version()?;
        let bins = r.u32()? as usize;
        if bins < 2 {
            return Err(FormatError::InvalidField {
                field: "bins",
                reason: format!("need at least 2 bins, got {bins}"),
            }
            .into());
        }
        let frames = nonzero("frames", r.u32()?)?;
        let (mut bpd, mut fpd) = (Vec::new(), Vec::new());
        for _ in 0..frames {
            bpd.extend(r.f32s(bins)?);
            fpd.extend(r.f32s(bins - 1)?);
        }
        r.finish()?;
        Ok(Self {
            bpd: TfGrid::from_vec(bins, frames, bpd)?,
            fpd: TfGrid::from_vec(bins - 1, frames, fpd)?,
        })
    }
}

/// PDNW encoding; the trailing CRC32 covers every preceding byte.
pub fn model_to_bytes(model: &ConvNetModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut out = header(PDNW_MAGIC);
    out.push(model.head.code());
    out.extend_from_slice(&field_u16("layer count", model.layers.len())?.to_le_bytes());
    for l in &model.layers {
        out.push(l.kind.code());
        for (field, v) in [
            ("in channels", l.in_channels),
            ("out channels", l.out_channels),
            ("kernel", l.kernel),
        ] {
            out.extend_from_slice(&field_u16(field, v)?.to_le_bytes());
        }
        put_f32s(&mut out, &l.weight);
        put_f32s(&mut out, &l.bias);
        if let (Some(w), Some(b)) = (&l.gate_weight, &l.gate_bias) {
            put_f32s(&mut out, w);
            put_f32s(&mut out, b);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ConvNetModel> {
    let mut r = Reader::new(bytes);
    r.magic(PDNW_MAGIC)?;
    r.version()?;
    let head_code = r.u8()?;
    let head = Head::from_code(head_code).ok_or_else(|| FormatError::InvalidField {
        field: "head",
        reason: format!("unknown head {head_code}"),
    })?;
    let count = r.u16()? as usize;
    if count == 0 {
        return Err(FormatError::InvalidField {
            field: "layer count",
            reason: "must be positive".into(),
        }
        .into());
    }
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let kind_code = r.u8()?;
        let kind = LayerKind::from_code(kind_code).ok_or_else(|| FormatError::InvalidField {
            field: "layer kind",
            reason: format!("layer {i}: unknown kind {kind_code}"),
        })?;
        let cin = r.u16()? as usize;
        let cout = r.u16()? as usize;
        let k = r.u16()? as usize;
        if cin == 0 || cout == 0 || k.is_multiple_of(2) {
            return Err(FormatError::DimensionMismatch(format!(
                "layer {i}: {cout}x{cin}x{k} is not a valid odd-kernel shape"
            ))
            .into());
        }
        if let Some(prev) = layers.last().map(|l: &Layer| l.out_channels) {
            if prev != cin {
                return Err(FormatError::DimensionMismatch(format!(
                    "layer {i} takes {cin} channels, previous layer gives {prev}"
                ))
                .into());
            }
        }
        let n = cout * cin * k;
        let weight = r.f32s(n)?;
        let bias = r.f32s(cout)?;
        let (gate_weight, gate_bias) = match kind {
            LayerKind::FreqGatedConv => (Some(r.f32s(n)?), Some(r.f32s(cout)?)),
            LayerKind::FreqConv => (None, None),
        };
        layers.push(Layer {
            kind,
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            weight,
            bias,
            gate_weight,
            gate_bias,
        });
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    r.finish()?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(FormatError::CrcMismatch { stored, computed }.into());
    }
    if layers.last().map(|l| l.out_channels) != Some(1) {
        return Err(FormatError::DimensionMismatch("final layer must have one output channel".into()).into());
    }
    ConvNetModel::new(head, layers)
}

/// Loads a model and checks that it carries the expected head.
pub fn load_model_expecting(bytes: &[u8], head: Head) -> Result<ConvNetModel> {
    let model = model_from_bytes(bytes)?;
    if model.head != head {
        return Err(FormatError::HeadMismatch {
            expected: head.name(),
            found: model.head.name(),
        }
        .into());
    }
    Ok(model)
}

pub fn histogram_to_bytes(h: &Histogram) -> Result<Vec<u8>> {
    let mut out = PPDH_MAGIC.to_vec();
    out.extend_from_slice(&field_u32("bins", h.counts.len())?.to_le_bytes());
    for c in &h.counts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

pub fn histogram_from_bytes(bytes: &[u8]) -> Result<Histogram> {
    let mut r = Reader::new(bytes);
    r.magic(PPDH_MAGIC)?;
    let bins = r.u32()? as usize;
    let counts = (0..bins).map(|_| r.u64()).collect::<FResult<Vec<_>>>()?;
    r.finish()?;
    Ok(Histogram { counts })
}
