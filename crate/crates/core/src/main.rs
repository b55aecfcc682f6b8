use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rayon::prelude::*;

use phaseline::formats::{
    histogram_to_bytes, load_model_expecting, model_from_bytes, model_to_bytes, write_atomic, PhaseDiffFile,
    SpectrogramFile,
};
use phaseline::metrics::{evaluate_signals, Histogram, HISTOGRAM_BINS, REPORT_HEADER};
use phaseline::nn::{Architecture, ConvNetModel, Head, LayerKind};
use phaseline::pipeline::{reconstruct, Method, ModelPair, ReconstructInput, RunConfig};
use phaseline::wav::{read_wav, write_wav, WavFormat};
use phaseline::wls::{WlsConfig, DEFAULT_GAMMA0, DEFAULT_P};
use phaseline::{StftConfig, StftProcessor, WindowKind};

#[derive(Parser)]
#[command(
    name = "phaseline",
    version,
    about = "Streaming STFT phase reconstruction from magnitude"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a waveform from the magnitude of a WAV or PSPC file.
    Reconstruct(ReconstructArgs),
    /// Dump magnitude (PSPC) and reference phase differences (PPDF) of a WAV file.
    Oracle(OracleArgs),
    /// Score an estimate against a reference recording.
    Evaluate(EvaluateArgs),
    /// Print the structure of a PDNW model file.
    InspectModel(InspectArgs),
    /// Write a randomly initialized PDNW model.
    InitModel(InitModelArgs),
    /// Write the STFT of a WAV file as PSPC.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone)]
struct StftArgs {
    /// Analysis window length in samples.
    #[arg(long, default_value_t = 1024)]
    window_length: usize,
    /// Hop size in samples.
    #[arg(long, default_value_t = 256)]
    hop: usize,
    /// FFT size; defaults to the window length.
    #[arg(long)]
    fft_size: Option<usize>,
    /// Expected sample rate of every input; a mismatch is an error.
    #[arg(long)]
    sample_rate: Option<u32>,
}

impl StftArgs {
    fn config(&self) -> Result<StftConfig> {
        Ok(StftConfig::new(
            WindowKind::Hann,
            self.window_length,
            self.hop,
            self.fft_size.unwrap_or(self.window_length),
        )?)
    }

    fn check_rate(&self, path: &Path, rate: u32) -> Result<()> {
        match self.sample_rate {
            Some(expected) if expected != rate => {
                bail!(
                    "{}: sample rate {rate} Hz does not match expected {expected} Hz",
                    path.display()
                )
            }
            _ => Ok(()),
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum MethodArg {
    Oracle,
    Rtpghi,
    Pghi,
    Dnn,
    Timeint,
    GlaRefine,
    Random,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Oracle => Method::Oracle,
            MethodArg::Rtpghi => Method::Rtpghi,
            MethodArg::Pghi => Method::Pghi,
            MethodArg::Dnn => Method::Dnn,
            MethodArg::Timeint => Method::TimeInt,
            MethodArg::GlaRefine => Method::GlaRefine,
            MethodArg::Random => Method::Random,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum FormatArg {
    Pcm16,
    F32,
}

impl From<FormatArg> for WavFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Pcm16 => WavFormat::Pcm16,
            FormatArg::F32 => WavFormat::Float32,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum HeadArg {
    Bpd,
    Fpd,
}

impl From<HeadArg> for Head {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Bpd => Head::Bpd,
            HeadArg::Fpd => Head::Fpd,
        }
    }
}

#[derive(Args)]
struct ReconstructArgs {
    /// Input WAV or PSPC file.
    #[arg(required_unless_present = "batch")]
    input: Option<PathBuf>,
    /// Output WAV file.
    #[arg(required_unless_present = "batch")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oracle")]
    method: MethodArg,
    /// Method run before Griffin-Lim refinement.
    #[arg(long, value_enum)]
    base_method: Option<MethodArg>,
    /// PPDF file with the phase differences to integrate.
    #[arg(long)]
    diffs: Option<PathBuf>,
    #[arg(long)]
    bpd_model: Option<PathBuf>,
    #[arg(long)]
    fpd_model: Option<PathBuf>,
    /// Magnitude compression exponent of the least-squares weights.
    #[arg(long, default_value_t = DEFAULT_P)]
    p: f64,
    /// Weight of the frequency-direction term.
    #[arg(long, default_value_t = DEFAULT_GAMMA0)]
    gamma0: f64,
    /// Relative magnitude below which heap integration assigns random phase.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, env = "PHASELINE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    gla_iters: usize,
    /// Write the phase differences actually integrated as PPDF.
    #[arg(long)]
    emit_diffs: Option<PathBuf>,
    /// Write the reconstructed complex spectrogram as PSPC.
    #[arg(long)]
    emit_spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pcm16")]
    format: FormatArg,
    /// Manifest of `input<TAB>output` lines; file `i` uses seed `seed + i`.
    #[arg(long, conflicts_with_all = ["input", "output", "emit_diffs", "emit_spec", "diffs"])]
    batch: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct OracleArgs {
    input: PathBuf,
    /// Output PSPC file.
    spectrogram: PathBuf,
    /// Output PPDF file.
    differences: PathBuf,
    /// Store complex coefficients instead of magnitude only.
    #[arg(long)]
    complex: bool,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(required_unless_present = "batch")]
    reference: Option<PathBuf>,
    #[arg(required_unless_present = "batch")]
    estimate: Option<PathBuf>,
    /// Manifest of `reference<TAB>estimate` lines.
    #[arg(long, conflicts_with_all = ["reference", "estimate"])]
    batch: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Append records to this file instead of printing them.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Only score bins at or above this magnitude quantile.
    #[arg(long)]
    mask_quantile: Option<f64>,
    #[arg(long)]
    bpd_histogram: Option<PathBuf>,
    #[arg(long)]
    fpd_histogram: Option<PathBuf>,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct InspectArgs {
    path: PathBuf,
    #[arg(long, value_enum)]
    expect_head: Option<HeadArg>,
}

#[derive(Args)]
struct InitModelArgs {
    output: PathBuf,
    #[arg(long, value_enum)]
    head: HeadArg,
    #[arg(long, env = "PHASELINE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = phaseline::nn::DEFAULT_LOOK_BACK)]
    look_back: usize,
    #[arg(long, default_value_t = phaseline::nn::DEFAULT_CHANNELS)]
    channels: usize,
    #[arg(long, default_value_t = phaseline::nn::DEFAULT_KERNEL)]
    kernel: usize,
    #[arg(long, default_value_t = phaseline::nn::DEFAULT_GATED_LAYERS)]
    gated_layers: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    complex: bool,
    #[command(flatten)]
    stft: StftArgs,
}

/// Removes every output written so far unless disarmed.
#[derive(Default)]
struct OutputGuard {
    written: Mutex<Vec<PathBuf>>,
    armed: bool,
}

impl OutputGuard {
    fn new() -> Self {
        Self {
            written: Mutex::new(Vec::new()),
            armed: true,
        }
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.lock().unwrap().push(path.to_path_buf());
        Ok(())
    }

    fn write_wav(&self, path: &Path, samples: &[f64], rate: u32, format: WavFormat) -> Result<()> {
        write_wav(path, samples, rate, format).with_context(|| format!("writing {}", path.display()))?;
        self.written.lock().unwrap().push(path.to_path_buf());
        Ok(())
    }

    fn commit(mut self) {
        self.armed = false;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.armed {
            for p in self.written.lock().unwrap().drain(..) {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |s: &str| {
        let p = PathBuf::from(s);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let mut parts = l.split('\t').map(str::trim);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok((resolve(a), resolve(b))),
                _ => bail!("{}:{}: expected two tab-separated paths", path.display(), i + 1),
            }
        })
        .collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

fn is_pspc(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    use std::io::Read;
    Ok(f.read_exact(&mut magic).is_ok() && &magic == b"PSPC")
}

fn load_input(path: &Path, stft: &StftArgs) -> Result<ReconstructInput> {
    if is_pspc(path)? {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let file = SpectrogramFile::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        stft.check_rate(path, file.sample_rate)?;
        let config = file.config()?;
        let reference = file.to_spectrogram()?;
        return Ok(ReconstructInput {
            magnitude: file.magnitude(),
            config,
            sample_rate: file.sample_rate,
            signal_len: file.signal_len(),
            reference,
            differences: None,
        });
    }
    let audio = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
    stft.check_rate(path, audio.sample_rate)?;
    if audio.samples.is_empty() {
        bail!("{}: no samples", path.display());
    }
    Ok(ReconstructInput::from_signal(
        &audio.samples,
        &stft.config()?,
        audio.sample_rate,
    )?)
}

fn load_model(path: &Path, head: Head) -> Result<ConvNetModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_model_expecting(&bytes, head).with_context(|| format!("loading {}", path.display()))
}

fn run_config(args: &ReconstructArgs) -> Result<RunConfig> {
    let models = match (&args.bpd_model, &args.fpd_model) {
        (Some(b), Some(f)) => Some(ModelPair {
            bpd: load_model(b, Head::Bpd)?,
            fpd: load_model(f, Head::Fpd)?,
        }),
        (None, None) => None,
        _ => bail!("--bpd-model and --fpd-model must be given together"),
    };
    let run = RunConfig {
        method: args.method.into(),
        base_method: args.base_method.map(Into::into),
        wls: WlsConfig {
            p: args.p,
            gamma0: args.gamma0,
        },
        tolerance: args.tolerance,
        seed: args.seed,
        gla_iterations: args.gla_iters,
        models,
    };
    run.validate()?;
    Ok(run)
}

fn reconstruct_one(
    input_path: &Path,
    output: &Path,
    args: &ReconstructArgs,
    run: &RunConfig,
    guard: &OutputGuard,
) -> Result<()> {
    let mut input = load_input(input_path, &args.stft)?;
    if let Some(diffs) = &args.diffs {
        let bytes = fs::read(diffs).with_context(|| format!("reading {}", diffs.display()))?;
        let file = PhaseDiffFile::from_bytes(&bytes).with_context(|| format!("decoding {}", diffs.display()))?;
        if file.bins() != input.magnitude.bins() || file.frames() != input.magnitude.frames() {
            bail!(
                "{}: {}x{} differences do not match the {}x{} spectrogram",
                diffs.display(),
                file.bins(),
                file.frames(),
                input.magnitude.bins(),
                input.magnitude.frames()
            );
        }
        input.differences = Some(file.to_frames(input.config.hop(), input.config.fft_size()));
    }
    let out = reconstruct(&input, run).with_context(|| format!("reconstructing {}", input_path.display()))?;
    if let Some(path) = &args.emit_diffs {
        let Some(diffs) = &out.differences else {
            bail!("method {} does not use phase differences", run.method);
        };
        let file = PhaseDiffFile::from_frames(diffs, input.config.hop(), input.config.fft_size())?;
        guard.write(path, &file.to_bytes()?)?;
    }
    if let Some(path) = &args.emit_spec {
        guard.write(path, &SpectrogramFile::from_complex(&out.spectrogram)?.to_bytes()?)?;
    }
    guard.write_wav(output, &out.signal, input.sample_rate, args.format.into())
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<()> {
    let run = run_config(&args)?;
    let guard = OutputGuard::new();
    match &args.batch {
        None => {
            let (input, output) = (args.input.as_ref().unwrap(), args.output.as_ref().unwrap());
            reconstruct_one(input, output, &args, &run, &guard)?;
        }
        Some(manifest) => {
            let items = read_manifest(manifest)?;
            pool(args.jobs)?.install(|| {
                items
                    .par_iter()
                    .enumerate()
                    .map(|(i, (input, output))| {
                        let run = RunConfig {
                            seed: run.seed.wrapping_add(i as u64),
                            ..run.clone()
                        };
                        reconstruct_one(input, output, &args, &run, &guard)
                    })
                    .collect::<Result<Vec<()>>>()
            })?;
        }
    }
    guard.commit();
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let input = load_input(&args.input, &args.stft)?;
    let spec = input
        .reference
        .as_ref()
        .expect("WAV input always carries the complex spectrogram");
    let diffs = phaseline::phasediff::oracle_differences(spec)?;
    let pspc = if args.complex {
        SpectrogramFile::from_complex(spec)?
    } else {
        SpectrogramFile::from_magnitude(spec)?
    };
    let ppdf = PhaseDiffFile::from_frames(&diffs, spec.config().hop(), spec.config().fft_size())?;
    let guard = OutputGuard::new();
    guard.write(&args.spectrogram, &pspc.to_bytes()?)?;
    guard.write(&args.differences, &ppdf.to_bytes()?)?;
    guard.commit();
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let pairs = match &args.batch {
        Some(m) => read_manifest(m)?,
        None => vec![(args.reference.clone().unwrap(), args.estimate.clone().unwrap())],
    };
    let config = args.stft.config()?;
    let reports = pool(args.jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|(reference, estimate)| {
                let r = read_wav(reference).with_context(|| format!("reading {}", reference.display()))?;
                let e = read_wav(estimate).with_context(|| format!("reading {}", estimate.display()))?;
                args.stft.check_rate(reference, r.sample_rate)?;
                args.stft.check_rate(estimate, e.sample_rate)?;
                if r.sample_rate != e.sample_rate {
                    bail!("sample rates differ: {} vs {}", r.sample_rate, e.sample_rate);
                }
                if r.samples.len() != e.samples.len() {
                    log::warn!(
                        "{}: lengths differ ({} vs {}), trimming to the shorter",
                        estimate.display(),
                        r.samples.len(),
                        e.samples.len()
                    );
                }
                Ok(evaluate_signals(
                    &estimate.display().to_string(),
                    &r.samples,
                    &e.samples,
                    &config,
                    r.sample_rate,
                    args.mask_quantile,
                )?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut text = String::new();
    let new_report = args.report.as_ref().is_none_or(|p| !p.exists());
    if new_report {
        text.push_str(REPORT_HEADER);
        text.push('\n');
    }
    for r in &reports {
        text.push_str(&r.to_record());
        text.push('\n');
    }
    let guard = OutputGuard::new();
    for (path, pick) in [
        (
            &args.bpd_histogram,
            (|r: &phaseline::metrics::EvaluationReport| &r.bpd_histogram) as fn(&_) -> &Histogram,
        ),
        (&args.fpd_histogram, |r| &r.fpd_histogram),
    ] {
        if let Some(path) = path {
            let mut total = Histogram::new(HISTOGRAM_BINS);
            for r in &reports {
                total.merge(pick(r))?;
            }
            guard.write(path, &histogram_to_bytes(&total)?)?;
        }
    }
    match &args.report {
        Some(path) => {
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            f.write_all(text.as_bytes())?;
        }
        None => print!("{text}"),
    }
    guard.commit();
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let bytes = fs::read(&args.path).with_context(|| format!("reading {}", args.path.display()))?;
    let model = match args.expect_head {
        Some(h) => load_model_expecting(&bytes, h.into()),
        None => model_from_bytes(&bytes),
    }
    .with_context(|| format!("loading {}", args.path.display()))?;
    println!("head: {}", model.head.name());
    println!("layers: {}", model.layers.len());
    for (i, l) in model.layers.iter().enumerate() {
        let kind = match l.kind {
            LayerKind::FreqConv => "FreqConv",
            LayerKind::FreqGatedConv => "FreqGatedConv",
        };
        println!(
            "  {i}: {kind} in={} out={} kernel={} params={}",
            l.in_channels,
            l.out_channels,
            l.kernel,
            l.param_count()
        );
    }
    println!("look-back frames: {}", model.look_back());
    let params = model.param_count();
    println!("params: {params} ({:.1}k)", params as f64 / 1000.0);
    println!("crc: ok");
    Ok(())
}

fn cmd_init_model(args: InitModelArgs) -> Result<()> {
    let arch = Architecture {
        look_back: args.look_back,
        channels: args.channels,
        kernel: args.kernel,
        gated_layers: args.gated_layers,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let model = ConvNetModel::random(args.head.into(), arch, &mut rng)?;
    let guard = OutputGuard::new();
    guard.write(&args.output, &model_to_bytes(&model)?)?;
    guard.commit();
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let audio = read_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    args.stft.check_rate(&args.input, audio.sample_rate)?;
    if audio.samples.is_empty() {
        bail!("{}: no samples", args.input.display());
    }
    let spec = StftProcessor::new(args.stft.config()?).analyze(&audio.samples, audio.sample_rate)?;
    let file = if args.complex {
        SpectrogramFile::from_complex(&spec)?
    } else {
        SpectrogramFile::from_magnitude(&spec)?
    };
    let guard = OutputGuard::new();
    guard.write(&args.output, &file.to_bytes()?)?;
    guard.commit();
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::InspectModel(a) => cmd_inspect(a),
        Command::InitModel(a) => cmd_init_model(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
