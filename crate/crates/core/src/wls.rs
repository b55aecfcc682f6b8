//! Frame-by-frame phase reconstruction by weighted least squares over complex
//! STFT coefficients.
//!
//! For frame `n` the solver minimizes
//!
//! ```text
//! sum_m Lambda[m] |z[m] - v[m] X[m,n-1]|^2 + sum_r Gamma[r] |z[r+1] - u[r] z[r]|^2
//! ```
//!
//! whose normal equations `(Lambda + D^H Gamma D) z = Lambda y` form a
//! Hermitian positive-definite tridiagonal system. The phase of the minimizer
//! is kept and the known magnitude is re-imposed before the next frame.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phasediff::{check_finite, check_len, floored, to_complex_ratios, wrap, ComplexRatioFrame, RunningFloor};
use crate::spectral::{principal_arg, Spectrogram, StftProcessor};

/// Default magnitude compression exponent, `10^-0.4`.
pub const DEFAULT_P: f64 = 0.398_107_170_553_497_25;
/// Default balance between time and frequency terms.
pub const DEFAULT_GAMMA0: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsConfig {
    pub p: f64,
    pub gamma0: f64,
}

impl Default for WlsConfig {
    fn default() -> Self {
        Self {
            p: DEFAULT_P,
            gamma0: DEFAULT_GAMMA0,
        }
    }
}

impl WlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!("p must be finite, got {}", self.p)));
        }
        if !(self.gamma0.is_finite() && self.gamma0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma0 must be >= 0, got {}",
                self.gamma0
            )));
        }
        Ok(())
    }
}

/// Diagonal weights of the time (`lambda`, length M) and frequency (`gamma`,
/// length M-1) terms.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsWeights {
    pub p: f64,
    pub gamma0: f64,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl WlsWeights {
    /// `lambda[m] = (a_n[m] a_{n-1}[m])^p`, `gamma[r] = gamma0 (a_n[r+1] a_n[r])^p`.
    /// Magnitudes are expected to be floored already.
    pub fn build(mag_prev: &[f64], mag_cur: &[f64], cfg: WlsConfig) -> Result<Self> {
        cfg.validate()?;
        check_len("previous magnitude", mag_cur.len(), mag_prev.len())?;
        let lambda = mag_cur.iter().zip(mag_prev).map(|(c, p)| (c * p).powf(cfg.p)).collect();
        let gamma = mag_cur
            .windows(2)
            .map(|w| cfg.gamma0 * (w[1] * w[0]).powf(cfg.p))
            .collect();
        Ok(Self {
            p: cfg.p,
            gamma0: cfg.gamma0,
            lambda,
            gamma,
        })
    }
}

/// Hermitian tridiagonal system `A x = b` with real diagonal `diag` and
/// strictly upper band `upper` (`A[m, m+1] = upper[m]`, `A[m+1, m] = conj(upper[m])`).
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalHermitianSystem {
    pub diag: Vec<f64>,
    pub upper: Vec<Complex64>,
    pub rhs: Vec<Complex64>,
}

impl TridiagonalHermitianSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.diag.len();
        if n == 0 {
            return Err(Error::EmptyInput("tridiagonal system"));
        }
        check_len("upper band", n - 1, self.upper.len())?;
        check_len("right-hand side", n, self.rhs.len())
    }

    /// `A x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.diag.len();
        (0..n)
            .map(|m| {
                let mut acc = x[m] * self.diag[m];
                if m + 1 < n {
                    acc += self.upper[m] * x[m + 1];
                }
                if m > 0 {
                    acc += self.upper[m - 1].conj() * x[m - 1];
                }
                acc
            })
            .collect()
    }

    /// Solves by `L D L^H` factorization without pivoting, in O(M).
    pub fn solve(&self) -> Result<Vec<Complex64>> {
        self.check()?;
        let n = self.diag.len();
        let mut pivots = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n.saturating_sub(1));
        let mut y = Vec::with_capacity(n);
        for m in 0..n {
            let (pivot, rhs) = if m == 0 {
                (self.diag[0], self.rhs[0])
            } else {
                let e = self.upper[m - 1];
                let prev = pivots[m - 1];
                let l = e.conj() / prev;
                lower.push(l);
                (self.diag[m] - e.norm_sqr() / prev, self.rhs[m] - l * y[m - 1])
            };
            if !(pivot.is_finite() && pivot > 0.0) {
                return Err(Error::NotPositiveDefinite { row: m });
            }
            pivots.push(pivot);
            y.push(rhs);
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[n - 1] = y[n - 1] / pivots[n - 1];
        for m in (0..n - 1).rev() {
            x[m] = y[m] / pivots[m] - lower[m].conj() * x[m + 1];
        }
        Ok(x)
    }
}

/// Solves a tridiagonal Hermitian positive-definite system.
pub fn solve_tridiagonal(sys: &TridiagonalHermitianSystem) -> Result<Vec<Complex64>> {
    sys.solve()
}

/// Previous frame's magnitude-corrected coefficients and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionState {
    pub prev_coefficients: Vec<Complex64>,
    pub prev_phase: Vec<f64>,
    pub frame_index: usize,
}

impl ReconstructionState {
    /// State after frame `frame_index` with the given magnitude and phase.
    pub fn from_polar(mag: &[f64], phase: &[f64], frame_index: usize) -> Self {
        Self {
            prev_coefficients: mag
                .iter()
                .zip(phase)
                .map(|(&a, &p)| Complex64::from_polar(a, p))
                .collect(),
            prev_phase: phase.to_vec(),
            frame_index,
        }
    }

    pub fn bins(&self) -> usize {
        self.prev_phase.len()
    }
}

/// Builds `Lambda + D^H Gamma D` and `Lambda y` with `y[m] = v[m] X[m,n-1]`.
pub fn assemble_system(
    ratios: &ComplexRatioFrame,
    weights: &WlsWeights,
    prev: &ReconstructionState,
) -> Result<TridiagonalHermitianSystem> {
    let bins = ratios.v.len();
    if bins == 0 {
        return Err(Error::EmptyInput("ratio frame"));
    }
    check_len("u ratios", bins - 1, ratios.u.len())?;
    check_len("lambda", bins, weights.lambda.len())?;
    check_len("gamma", bins - 1, weights.gamma.len())?;
    check_len("previous coefficients", bins, prev.prev_coefficients.len())?;
    let (lambda, gamma, u) = (&weights.lambda, &weights.gamma, &ratios.u);
    let diag = (0..bins)
        .map(|m| {
            let mut d = lambda[m];
            if m + 1 < bins {
                d += gamma[m] * u[m].norm_sqr();
            }
            if m > 0 {
                d += gamma[m - 1];
            }
            d
        })
        .collect();
    let upper = (0..bins - 1).map(|r| -u[r].conj() * gamma[r]).collect();
    let rhs = (0..bins)
        .map(|m| ratios.v[m] * prev.prev_coefficients[m] * lambda[m])
        .collect();
    Ok(TridiagonalHermitianSystem { diag, upper, rhs })
}

/// Value of the weighted objective at `z`.
pub fn objective(z: &[Complex64], ratios: &ComplexRatioFrame, weights: &WlsWeights, prev: &ReconstructionState) -> f64 {
    let time: f64 = (0..z.len())
        .map(|m| weights.lambda[m] * (z[m] - ratios.v[m] * prev.prev_coefficients[m]).norm_sqr())
        .sum();
    let freq: f64 = (0..z.len().saturating_sub(1))
        .map(|r| weights.gamma[r] * (z[r + 1] - ratios.u[r] * z[r]).norm_sqr())
        .sum();
    time + freq
}

/// Everything computed while reconstructing one frame.
#[derive(Debug, Clone)]
pub struct FrameSolve {
    pub ratios: ComplexRatioFrame,
    pub weights: WlsWeights,
    pub system: TridiagonalHermitianSystem,
    pub solution: Vec<Complex64>,
}

/// Solves the least-squares problem for one frame. `floor` is the magnitude
/// floor applied to ratios and weights.
pub fn solve_frame(
    state: &ReconstructionState,
    mag_prev: &[f64],
    mag_cur: &[f64],
    tpd: &[f64],
    fpd: &[f64],
    cfg: WlsConfig,
    floor: f64,
) -> Result<FrameSolve> {
    check_len("state bins", mag_cur.len(), state.bins())?;
    let ratios = to_complex_ratios(mag_prev, mag_cur, tpd, fpd, floor)?;
    let weights = WlsWeights::build(&floored(mag_prev, floor), &floored(mag_cur, floor), cfg)?;
    let system = assemble_system(&ratios, &weights, state)?;
    let solution = system.solve()?;
    Ok(FrameSolve {
        ratios,
        weights,
        system,
        solution,
    })
}

/// One recursion step: returns the phase of the minimizer and the state
/// carrying `A[m,n] exp(i phase)`.
pub fn reconstruct_frame(
    state: &ReconstructionState,
    mag_prev: &[f64],
    mag_cur: &[f64],
    tpd: &[f64],
    fpd: &[f64],
    cfg: WlsConfig,
    floor: f64,
) -> Result<(Vec<f64>, ReconstructionState)> {
    let solve = solve_frame(state, mag_prev, mag_cur, tpd, fpd, cfg, floor)?;
    let phase: Vec<f64> = solve.solution.iter().map(|x| principal_arg(*x)).collect();
    let next = ReconstructionState::from_polar(mag_cur, &phase, state.frame_index + 1);
    Ok((phase, next))
}

/// First frame: phase 0 at DC, then accumulated FPD along frequency.
pub fn initialize_first_frame(mag: &[f64], fpd: &[f64]) -> Result<ReconstructionState> {
    if mag.is_empty() {
        return Err(Error::EmptyInput("magnitude frame"));
    }
    check_len("fpd", mag.len() - 1, fpd.len())?;
    check_finite("magnitude", mag)?;
    check_finite("fpd", fpd)?;
    let mut phase = Vec::with_capacity(mag.len());
    let mut acc = 0.0;
    phase.push(0.0);
    for u in fpd {
        acc += u;
        phase.push(acc);
    }
    phase.iter_mut().for_each(|p| *p = wrap(*p));
    Ok(ReconstructionState::from_polar(mag, &phase, 0))
}

/// Baseline that integrates TPD along time only.
pub fn time_integration_step(state: &ReconstructionState, tpd: &[f64]) -> Result<Vec<f64>> {
    check_len("tpd", state.bins(), tpd.len())?;
    check_finite("tpd", tpd)?;
    Ok(state.prev_phase.iter().zip(tpd).map(|(p, v)| wrap(p + v)).collect())
}

/// Streaming reconstructor that owns the recursion state and the running
/// magnitude floor.
#[derive(Debug, Clone)]
pub struct WlsReconstructor {
    cfg: WlsConfig,
    floor: RunningFloor,
    state: Option<ReconstructionState>,
    prev_mag: Vec<f64>,
}

impl WlsReconstructor {
    pub fn new(cfg: WlsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            floor: RunningFloor::new(),
            state: None,
            prev_mag: Vec::new(),
        })
    }

    /// Uses a fixed floor reference (e.g. the utterance maximum) instead of
    /// the running maximum.
    pub fn with_floor_reference(cfg: WlsConfig, max: f64) -> Result<Self> {
        let mut r = Self::new(cfg)?;
        r.floor = RunningFloor::with_max(max);
        Ok(r)
    }

    pub fn config(&self) -> WlsConfig {
        self.cfg
    }

    pub fn state(&self) -> Option<&ReconstructionState> {
        self.state.as_ref()
    }

    /// Processes one frame. `tpd` may be `None` only for the first frame.
    pub fn push(&mut self, mag: &[f64], tpd: Option<&[f64]>, fpd: &[f64]) -> Result<Vec<f64>> {
        let floor = self.floor.observe(mag);
        let next = match (&self.state, tpd) {
            (None, _) => initialize_first_frame(mag, fpd)?,
            (Some(state), Some(tpd)) => reconstruct_frame(state, &self.prev_mag, mag, tpd, fpd, self.cfg, floor)?.1,
            (Some(_), None) => return Err(Error::InvalidParameter("TPD required after the first frame".into())),
        };
        let phase = next.prev_phase.clone();
        self.prev_mag = mag.to_vec();
        self.state = Some(next);
        Ok(phase)
    }
}

/// Streaming time-integration baseline with the same frame-0 handling.
#[derive(Debug, Clone, Default)]
pub struct TimeIntegrator {
    state: Option<ReconstructionState>,
}

impl TimeIntegrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mag: &[f64], tpd: Option<&[f64]>, fpd: &[f64]) -> Result<Vec<f64>> {
        let next = match (&self.state, tpd) {
            (None, _) => initialize_first_frame(mag, fpd)?,
            (Some(state), Some(tpd)) => {
                let phase = time_integration_step(state, tpd)?;
                ReconstructionState::from_polar(mag, &phase, state.frame_index + 1)
            }
            (Some(_), None) => return Err(Error::InvalidParameter("TPD required after the first frame".into())),
        };
        let phase = next.prev_phase.clone();
        self.state = Some(next);
        Ok(phase)
    }
}

/// Griffin-Lim refinement: alternately projects onto consistent spectrograms
/// and re-imposes the magnitude of `spec`. Returns the final phase grid.
pub fn griffin_lim_refine(spec: &Spectrogram, iterations: usize) -> Result<crate::grid::TfGrid> {
    let mut history = Vec::new();
    griffin_lim_refine_traced(spec, iterations, &mut history)
}

/// As [`griffin_lim_refine`], also recording the consistency residual
/// before the first and after every iteration.
pub fn griffin_lim_refine_traced(
    spec: &Spectrogram,
    iterations: usize,
    residuals: &mut Vec<f64>,
) -> Result<crate::grid::TfGrid> {
    spec.config().check_invertible()?;
    let mag = spec.magnitude();
    if iterations == 0 {
        return Ok(spec.phase());
    }
    let proc = StftProcessor::new(spec.config().clone());
    let mut current = spec.clone();
    for _ in 0..iterations {
        let signal = proc.synthesize(&current)?;
        let projected = proc.analyze(&signal, spec.sample_rate())?;
        residuals.push(crate::metrics::hermitian_magnitude_distance(
            &projected.magnitude(),
            &mag,
            spec.config().fft_size(),
        ));
        current = Spectrogram::from_polar(
            &mag,
            &projected.phase(),
            spec.config().clone(),
            spec.sample_rate(),
            spec.signal_len(),
        )?;
    }
    Ok(current.phase())
}
