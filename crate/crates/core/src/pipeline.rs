//! End-to-end reconstruction: choose where phase differences come from,
//! integrate them into phase, and synthesize a waveform.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::TfGrid;
use crate::nn::{estimate_differences_dnn, ConvNetModel};
use crate::pghi::{
    average_to_backward_differences, estimate_derivatives_centered, log_magnitude, pghi_reconstruct, rng_from_seed,
    GradientParams, HeapIntegrationParams, RtpghiReconstructor,
};
use crate::phasediff::{check_len, oracle_differences, PhaseDifferenceFrame};
use crate::spectral::{Spectrogram, StftConfig, StftProcessor};
use crate::wls::{griffin_lim_refine, TimeIntegrator, WlsConfig, WlsReconstructor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Reference differences integrated by weighted least squares.
    Oracle,
    /// Causal analytic differences with streaming heap integration.
    Rtpghi,
    /// Centered analytic differences with offline heap integration.
    Pghi,
    /// Network-estimated differences integrated by weighted least squares.
    Dnn,
    /// Differences integrated along time only.
    TimeInt,
    /// A base method followed by Griffin-Lim iterations.
    GlaRefine,
    /// Uniform random phase.
    Random,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Oracle,
        Method::Rtpghi,
        Method::Pghi,
        Method::Dnn,
        Method::TimeInt,
        Method::GlaRefine,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Rtpghi => "rtpghi",
            Method::Pghi => "pghi",
            Method::Dnn => "dnn",
            Method::TimeInt => "timeint",
            Method::GlaRefine => "gla-refine",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Both estimator networks.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub bpd: ConvNetModel,
    pub fpd: ConvNetModel,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub base_method: Option<Method>,
    pub wls: WlsConfig,
    pub tolerance: f64,
    pub seed: u64,
    pub gla_iterations: usize,
    pub models: Option<ModelPair>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Oracle,
            base_method: None,
            wls: WlsConfig::default(),
            tolerance: 1e-6,
            seed: 0,
            gla_iterations: 100,
            models: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.wls.validate()?;
        HeapIntegrationParams {
            relative_tolerance: self.tolerance,
            rng_seed: self.seed,
        }
        .validate()?;
        match (self.method, self.base_method) {
            (Method::GlaRefine, None) => {
                return Err(Error::InvalidParameter("gla-refine requires a base method".into()));
            }
            (Method::GlaRefine, Some(Method::GlaRefine)) => {
                return Err(Error::InvalidParameter("gla-refine cannot refine itself".into()));
            }
            (Method::GlaRefine, Some(_)) | (_, None) => {}
            (m, Some(_)) => {
                return Err(Error::InvalidParameter(format!(
                    "a base method only applies to gla-refine, not {m}"
                )));
            }
        }
        if self.integration_method() == Method::Dnn && self.models.is_none() {
            return Err(Error::InvalidParameter("dnn requires both BPD and FPD models".into()));
        }
        Ok(())
    }

    fn integration_method(&self) -> Method {
        match self.method {
            Method::GlaRefine => self.base_method.unwrap_or(Method::Oracle),
            m => m,
        }
    }
}

/// Magnitude to reconstruct plus whatever side information is available.
#[derive(Debug, Clone)]
pub struct ReconstructInput {
    pub magnitude: TfGrid,
    pub config: StftConfig,
    pub sample_rate: u32,
    pub signal_len: usize,
    /// True complex spectrogram, when known; source of oracle differences.
    pub reference: Option<Spectrogram>,
    /// Externally supplied differences; take precedence over any estimator
    /// for the least-squares and time-integration methods.
    pub differences: Option<Vec<PhaseDifferenceFrame>>,
}

impl ReconstructInput {
    pub fn from_spectrogram(spec: Spectrogram) -> Self {
        Self {
            magnitude: spec.magnitude(),
            config: spec.config().clone(),
            sample_rate: spec.sample_rate(),
            signal_len: spec.signal_len(),
            reference: Some(spec),
            differences: None,
        }
    }

    pub fn from_signal(signal: &[f64], config: &StftConfig, sample_rate: u32) -> Result<Self> {
        Ok(Self::from_spectrogram(
            StftProcessor::new(config.clone()).analyze(signal, sample_rate)?,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructOutput {
    pub phase: TfGrid,
    pub spectrogram: Spectrogram,
    pub signal: Vec<f64>,
    /// Differences the integrator consumed, if the method uses any.
    pub differences: Option<Vec<PhaseDifferenceFrame>>,
}

fn check_differences(diffs: &[PhaseDifferenceFrame], mag: &TfGrid) -> Result<()> {
    check_len("difference frames", mag.frames(), diffs.len())?;
    for d in diffs {
        check_len("difference bins", mag.bins(), d.bins())?;
    }
    Ok(())
}

fn supplied_or_oracle(input: &ReconstructInput) -> Result<Vec<PhaseDifferenceFrame>> {
    if let Some(d) = &input.differences {
        return Ok(d.clone());
    }
    match &input.reference {
        Some(spec) => oracle_differences(spec),
        None => Err(Error::InvalidParameter(
            "oracle differences need a complex spectrogram or a differences file".into(),
        )),
    }
}

fn dnn_differences(input: &ReconstructInput, models: Option<&ModelPair>) -> Result<Vec<PhaseDifferenceFrame>> {
    if let Some(d) = &input.differences {
        return Ok(d.clone());
    }
    let models = models.ok_or_else(|| Error::InvalidParameter("dnn requires both BPD and FPD models".into()))?;
    estimate_differences_dnn(
        &input.magnitude,
        &models.bpd,
        &models.fpd,
        input.config.hop(),
        input.config.fft_size(),
    )
}

/// Runs the least-squares integrator over a whole utterance with the floor
/// referenced to the utterance maximum.
pub fn integrate_wls(mag: &TfGrid, diffs: &[PhaseDifferenceFrame], cfg: WlsConfig) -> Result<TfGrid> {
    check_differences(diffs, mag)?;
    let mut rec = WlsReconstructor::with_floor_reference(cfg, mag.max_value())?;
    let mut out = Vec::with_capacity(mag.as_slice().len());
    for (n, d) in diffs.iter().enumerate() {
        out.extend(rec.push(mag.frame(n), d.tpd.as_deref(), &d.fpd)?);
    }
    TfGrid::from_vec(mag.bins(), mag.frames(), out)
}

pub fn integrate_time(mag: &TfGrid, diffs: &[PhaseDifferenceFrame]) -> Result<TfGrid> {
    check_differences(diffs, mag)?;
    let mut ti = TimeIntegrator::new();
    let mut out = Vec::with_capacity(mag.as_slice().len());
    for (n, d) in diffs.iter().enumerate() {
        out.extend(ti.push(mag.frame(n), d.tpd.as_deref(), &d.fpd)?);
    }
    TfGrid::from_vec(mag.bins(), mag.frames(), out)
}

/// Causal analytic estimation and streaming heap integration.
pub fn reconstruct_rtpghi(
    mag: &TfGrid,
    config: &StftConfig,
    heap: HeapIntegrationParams,
) -> Result<(TfGrid, Vec<PhaseDifferenceFrame>)> {
    let mut rec = RtpghiReconstructor::new(GradientParams::from_config(config), heap)?;
    let mut phase = Vec::with_capacity(mag.as_slice().len());
    let mut diffs = Vec::with_capacity(mag.frames());
    for frame in mag.iter_frames() {
        let (p, d) = rec.push(frame)?;
        phase.extend(p);
        diffs.push(d);
    }
    Ok((TfGrid::from_vec(mag.bins(), mag.frames(), phase)?, diffs))
}

/// Centered analytic estimation and offline heap integration.
pub fn reconstruct_pghi(
    mag: &TfGrid,
    config: &StftConfig,
    heap: HeapIntegrationParams,
) -> Result<(TfGrid, Vec<PhaseDifferenceFrame>)> {
    let est = estimate_derivatives_centered(&log_magnitude(mag), &GradientParams::from_config(config))?;
    let diffs = average_to_backward_differences(&est);
    Ok((pghi_reconstruct(mag, &diffs, &heap)?, diffs))
}

pub fn random_phase(bins: usize, frames: usize, seed: u64) -> TfGrid {
    let mut rng = rng_from_seed(seed);
    let mut grid = TfGrid::filled(bins, frames, 0.0);
    for p in grid.as_mut_slice() {
        *p = crate::phasediff::wrap(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
    }
    grid
}

fn phase_for(
    method: Method,
    input: &ReconstructInput,
    run: &RunConfig,
) -> Result<(TfGrid, Option<Vec<PhaseDifferenceFrame>>)> {
    let mag = &input.magnitude;
    let heap = HeapIntegrationParams {
        relative_tolerance: run.tolerance,
        rng_seed: run.seed,
    };
    Ok(match method {
        Method::Oracle => {
            let d = supplied_or_oracle(input)?;
            (integrate_wls(mag, &d, run.wls)?, Some(d))
        }
        Method::Dnn => {
            let d = dnn_differences(input, run.models.as_ref())?;
            (integrate_wls(mag, &d, run.wls)?, Some(d))
        }
        Method::TimeInt => {
            let d = match (&input.differences, &run.models) {
                (None, Some(models)) => dnn_differences(input, Some(models))?,
                _ => supplied_or_oracle(input)?,
            };
            (integrate_time(mag, &d)?, Some(d))
        }
        Method::Rtpghi => {
            let (p, d) = reconstruct_rtpghi(mag, &input.config, heap)?;
            (p, Some(d))
        }
        Method::Pghi => {
            let (p, d) = reconstruct_pghi(mag, &input.config, heap)?;
            (p, Some(d))
        }
        Method::Random => (random_phase(mag.bins(), mag.frames(), run.seed), None),
        Method::GlaRefine => unreachable!("refinement is applied by the caller"),
    })
}

/// Reconstructs phase and waveform from the magnitude in `input`.
pub fn reconstruct(input: &ReconstructInput, run: &RunConfig) -> Result<ReconstructOutput> {
    run.validate()?;
    if input.magnitude.is_empty() {
        return Err(Error::EmptyInput("magnitude"));
    }
    let method = run.integration_method();
    let (mut phase, differences) = phase_for(method, input, run)?;
    let mut spec = Spectrogram::from_polar(
        &input.magnitude,
        &phase,
        input.config.clone(),
        input.sample_rate,
        input.signal_len,
    )?;
    if run.method == Method::GlaRefine {
        phase = griffin_lim_refine(&spec, run.gla_iterations)?;
        spec = Spectrogram::from_polar(
            &input.magnitude,
            &phase,
            input.config.clone(),
            input.sample_rate,
            input.signal_len,
        )?;
    }
    let signal = StftProcessor::new(input.config.clone()).synthesize(&spec)?;
    Ok(ReconstructOutput {
        phase,
        spectrogram: spec,
        signal,
        differences,
    })
}
