//! The `richspace` command line.
//!
//! Exit codes: 0 success, 1 witness search failed, 2 invalid input,
//! 3 numeric degeneracy. Summary lines go to stdout, diagnostics to stderr.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use richspace_core::rng::GaussianStream;
use richspace_core::theory::{self, BiLipschitzSetup, ContinuousMap};
use richspace_core::{
    find_optimal, lerp, mix3, BoundKind, DiscreteVideoMap, FinderOptions, OptimalSelection,
    OutputRule, PromptEmbedding, ToyModel, ToyModelConfig, WitnessReport, DEFAULT_STEPS,
};
use sha2::{Digest, Sha256};

use crate::formats::{self, CurveFormat, FormatError, MapFile};
use crate::npy::{self, Tensor};

pub const THREADS_ENV: &str = "RICHSPACE_THREADS";

/// Range used for random integer maps.
const INTEGER_SPREAD: u32 = 3;
/// Annulus radii used for random covering maps.
const RANDOM_ANNULUS: (f64, f64) = (1.0, 2.0);

#[derive(Debug, Parser)]
#[command(
    name = "richspace",
    version,
    about = "Optimal prompt-embedding interpolation and witness search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pick the interpolation step between A and B that best matches C.
    FindOptimal(FindOptimalArgs),
    /// Write every interpolation step between A and B.
    Sweep(SweepArgs),
    /// Blend A and B under C, then blend the result with D under E.
    Mix3(Mix3Args),
    /// Denoise a video from one embedding with the seeded toy model.
    ToyGenerate(ToyGenerateArgs),
    /// Construct or search for a video no prompt reaches within epsilon.
    VerifyTheorem(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct FindOptimalArgs {
    /// Manifest (.json) or bare tensor (.npy) for prompt A.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Guidance prompt.
    #[arg(long)]
    pub c: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    /// `.npy`, or `.json` to also write a manifest next to the tensor.
    #[arg(long)]
    pub out_embedding: Option<PathBuf>,
    #[arg(long)]
    pub out_curve: Option<PathBuf>,
    /// Curve format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<CurveFormat>,
    /// Return lerp(C, B, i_opt, k) instead of lerp(A, B, i_opt, k).
    #[arg(long)]
    pub guidance_output: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct Mix3Args {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Guidance for the first stage.
    #[arg(long)]
    pub c: PathBuf,
    #[arg(long)]
    pub d: PathBuf,
    /// Guidance for the second stage.
    #[arg(long)]
    pub e: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long)]
    pub out_embedding: Option<PathBuf>,
    #[arg(long)]
    pub out_curve_stage1: Option<PathBuf>,
    #[arg(long)]
    pub out_curve_stage2: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<CurveFormat>,
    #[arg(long)]
    pub guidance_output: bool,
}

#[derive(Debug, Args)]
pub struct ToyGenerateArgs {
    /// Text embedding, manifest (.json) or tensor (.npy).
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub denoise_steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["map", "random"]))]
pub struct VerifyArgs {
    #[arg(long, value_parser = parse_bound)]
    pub bound: BoundKind,
    /// Map file `{V, n, d, outputs}`; bilipschitz also reads `words` and `lipschitz`.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Random map: vocabulary size, sentence length, output dimension, seed.
    #[arg(long, num_args = 4, value_names = ["V", "N", "D", "SEED"])]
    pub random: Option<Vec<u64>>,
    /// Candidates for the covering search.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Grid points for the one-dimensional sweep.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Seed for the covering search.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the map file's Lipschitz constant.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_bound(s: &str) -> Result<BoundKind, String> {
    s.parse().map_err(|_| {
        "expected one of integer_1d, integer_dd, any_1d, covering_dd, bilipschitz".to_string()
    })
}

/// A failed command: message for stderr plus its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const SEARCH_FAILED: u8 = 1;
    pub const INVALID_INPUT: u8 = 2;
    pub const DEGENERATE: u8 = 3;

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: Self::INVALID_INPUT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<richspace_core::Error> for CliError {
    fn from(e: richspace_core::Error) -> Self {
        let code = if e.is_degenerate() {
            Self::DEGENERATE
        } else {
            Self::INVALID_INPUT
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        Self::input(e.to_string())
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                CliError::INVALID_INPUT
            } else {
                0
            });
        }
    };
    let result = configure_threads().and_then(|()| run(&cli.command));
    match result {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        CliError::input(format!(
            "{THREADS_ENV} must be a non-negative integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::input(format!("cannot configure thread pool: {e}")))
}

/// Run one subcommand and return its summary lines.
///
/// A witness search that finds nothing still writes its report and prints
/// its summary line before failing with [`CliError::SEARCH_FAILED`].
pub fn run(command: &Command) -> Result<Vec<String>, CliError> {
    match command {
        Command::FindOptimal(args) => cmd_find_optimal(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Mix3(args) => cmd_mix3(args),
        Command::ToyGenerate(args) => cmd_toy_generate(args),
        Command::VerifyTheorem(args) => cmd_verify(args),
    }
}

fn load_embedding(path: &Path) -> Result<PromptEmbedding, CliError> {
    if !path.is_file() {
        return Err(CliError::input(format!("{}: no such file", path.display())));
    }
    if has_extension(path, "npy") {
        let matrix = npy::read_matrix(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok(PromptEmbedding::unpadded(matrix).with_source(path.display().to_string()))
    } else {
        Ok(formats::load_prompt(path)?)
    }
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// The parent directory of an output path must already exist.
fn check_output(path: &Path) -> Result<(), CliError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    match parent {
        Some(dir) if !dir.is_dir() => Err(CliError::input(format!(
            "{}: output directory does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn check_outputs<'a>(paths: impl IntoIterator<Item = &'a Option<PathBuf>>) -> Result<(), CliError> {
    paths
        .into_iter()
        .flatten()
        .try_for_each(|p| check_output(p))
}

fn finder_options(steps: usize, guidance_output: bool) -> FinderOptions {
    FinderOptions {
        steps,
        output: if guidance_output {
            OutputRule::GuidanceLiteral
        } else {
            OutputRule::ScoredSegment
        },
    }
}

fn write_selection(
    path: &Path,
    selection: &OptimalSelection,
    prompt: &str,
) -> Result<(), CliError> {
    if has_extension(path, "json") {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::input(format!("{}: bad file name", path.display())))?;
        formats::save_prompt(
            dir,
            stem,
            &selection.embedding,
            selection.ids_length,
            prompt,
            None,
        )?;
    } else {
        formats::write_npy(path, &Tensor::Embedding(selection.embedding.clone()))?;
    }
    Ok(())
}

fn write_curve(
    path: &Path,
    selection: &OptimalSelection,
    format: Option<CurveFormat>,
) -> Result<(), CliError> {
    let format = format.unwrap_or_else(|| CurveFormat::from_path(path));
    Ok(formats::write_curve(path, &selection.curve, format)?)
}

fn mixed_prompt(parts: &[&PromptEmbedding]) -> String {
    parts
        .iter()
        .map(|p| p.prompt_text.as_deref().unwrap_or("?"))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn cmd_find_optimal(args: &FindOptimalArgs) -> Result<Vec<String>, CliError> {
    check_outputs([&args.out_embedding, &args.out_curve])?;
    let a = load_embedding(&args.a)?;
    let b = load_embedding(&args.b)?;
    let c = load_embedding(&args.c)?;
    let selection = find_optimal(&a, &b, &c, finder_options(args.steps, args.guidance_output))?;
    if let Some(path) = &args.out_embedding {
        write_selection(path, &selection, &mixed_prompt(&[&a, &b]))?;
    }
    if let Some(path) = &args.out_curve {
        write_curve(path, &selection, args.format)?;
    }
    Ok(vec![format!(
        "i_opt={} k={} cos_sum={}",
        selection.i_opt,
        args.steps,
        selection.best_score()
    )])
}

fn cmd_sweep(args: &SweepArgs) -> Result<Vec<String>, CliError> {
    if args.steps == 0 {
        return Err(richspace_core::Error::ZeroSteps.into());
    }
    let a = load_embedding(&args.a)?;
    let b = load_embedding(&args.b)?;
    lerp(a.matrix(), b.matrix(), 0, args.steps)?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::input(format!("{}: {e}", args.out_dir.display())))?;
    for i in 1..=args.steps {
        let z = lerp(a.matrix(), b.matrix(), i, args.steps)?;
        formats::write_npy(
            args.out_dir.join(format!("interp_{i}.npy")),
            &Tensor::Embedding(z),
        )?;
    }
    Ok(vec![format!(
        "k={} out_dir={}",
        args.steps,
        args.out_dir.display()
    )])
}

fn cmd_mix3(args: &Mix3Args) -> Result<Vec<String>, CliError> {
    check_outputs([
        &args.out_embedding,
        &args.out_curve_stage1,
        &args.out_curve_stage2,
    ])?;
    let a = load_embedding(&args.a)?;
    let b = load_embedding(&args.b)?;
    let c = load_embedding(&args.c)?;
    let d = load_embedding(&args.d)?;
    let e = load_embedding(&args.e)?;
    let mix = mix3(
        &a,
        &b,
        &c,
        &d,
        &e,
        finder_options(args.steps, args.guidance_output),
    )?;
    if let Some(path) = &args.out_embedding {
        write_selection(path, mix.final_selection(), &mixed_prompt(&[&a, &b, &d]))?;
    }
    if let Some(path) = &args.out_curve_stage1 {
        write_curve(path, &mix.stage1, args.format)?;
    }
    if let Some(path) = &args.out_curve_stage2 {
        write_curve(path, &mix.stage2, args.format)?;
    }
    Ok(vec![format!(
        "i_opt_stage1={} i_opt_stage2={} k={} cos_sum={}",
        mix.stage1.i_opt,
        mix.stage2.i_opt,
        args.steps,
        mix.stage2.best_score()
    )])
}

/// Hex SHA-256 of the little-endian `f32` payload.
pub fn payload_checksum(values: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for &v in values {
        hasher.update((v as f32).to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn cmd_toy_generate(args: &ToyGenerateArgs) -> Result<Vec<String>, CliError> {
    check_outputs([&args.out])?;
    let text = load_embedding(&args.embedding)?;
    let hidden = text.matrix().cols();
    let config = ToyModelConfig {
        layers: args.layers,
        hidden,
        channels: args.channels,
        patch_channels: hidden,
        frames: args.frames,
        height: args.height,
        width: args.width,
        seed: args.seed,
        denoise_steps: args.denoise_steps,
    };
    let model = ToyModel::new(config)?;
    let video = model.denoise(text.matrix())?;
    let checksum = payload_checksum(video.as_slice());
    if let Some(path) = &args.out {
        formats::write_npy(path, &Tensor::Video(video.clone()))?;
    }
    let [f, h, w, c] = video.shape();
    Ok(vec![format!("shape={f}x{h}x{w}x{c} sha256={checksum}")])
}

/// Word embeddings, one vector per vocabulary entry.
type Words = Vec<Vec<f64>>;

fn random_map(
    bound: BoundKind,
    dims: &[u64],
) -> Result<(DiscreteVideoMap, Option<Words>), CliError> {
    let to_usize =
        |v: u64| usize::try_from(v).map_err(|_| CliError::input("random map size too large"));
    let (vocab, len, dim, seed) = (
        to_usize(dims[0])?,
        to_usize(dims[1])?,
        to_usize(dims[2])?,
        dims[3],
    );
    let map = match bound {
        BoundKind::Integer1d | BoundKind::IntegerDd => {
            DiscreteVideoMap::random_integer(vocab, len, dim, INTEGER_SPREAD, seed)?
        }
        BoundKind::Any1d => DiscreteVideoMap::random_gaussian(vocab, len, dim, seed)?,
        BoundKind::CoveringDd => {
            let (inner, outer) = RANDOM_ANNULUS;
            DiscreteVideoMap::random_annulus(vocab, len, dim, inner, outer, seed)?
        }
        BoundKind::Bilipschitz => {
            let words = jittered_words(vocab, seed);
            let map = isometric_map(&words, len, dim)?;
            return Ok((map, Some(words)));
        }
    };
    Ok((map, None))
}

/// Scalar word embeddings `v + U[0, 1/2)`, pairwise at least 1/2 apart.
fn jittered_words(vocab: usize, seed: u64) -> Words {
    let mut stream = GaussianStream::new(seed, 0);
    (0..vocab)
        .map(|v| vec![v as f64 + 0.5 * stream.uniform()])
        .collect()
}

/// Zero-pad `x` to `dim` coordinates: an isometry, so 1-bi-Lipschitz.
fn pad_to(x: &[f64], dim: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    y.resize(dim, 0.0);
    y
}

fn isometric_map(words: &[Vec<f64>], len: usize, dim: usize) -> Result<DiscreteVideoMap, CliError> {
    if dim < len {
        return Err(CliError::input(format!(
            "random bilipschitz maps embed R^n isometrically and need d >= n (n = {len}, d = {dim})"
        )));
    }
    let count = theory::sentence_count(words.len(), len)?;
    let mut outputs = Vec::with_capacity(count * dim);
    for index in 0..count {
        let mut rest = index;
        let mut sentence = vec![0.0; len];
        for slot in sentence.iter_mut().rev() {
            *slot = words[rest % words.len()][0];
            rest /= words.len();
        }
        outputs.extend(pad_to(&sentence, dim));
    }
    Ok(DiscreteVideoMap::new(words.len(), len, dim, outputs)?)
}

fn check_bound_dimension(bound: BoundKind, map: &DiscreteVideoMap) -> Result<(), CliError> {
    let ok = match bound {
        BoundKind::Integer1d | BoundKind::Any1d => map.dim() == 1,
        BoundKind::IntegerDd => map.dim() >= 2,
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::input(format!(
            "bound {} does not apply to d = {}",
            bound.as_str(),
            map.dim()
        )))
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<Vec<String>, CliError> {
    check_outputs([&args.out])?;
    let (map, words, file_lipschitz, isometric) = match (&args.map, &args.random) {
        (Some(path), _) => {
            if !path.is_file() {
                return Err(CliError::input(format!("{}: no such file", path.display())));
            }
            let file = MapFile::read(path)?;
            (file.to_map()?, file.words, file.lipschitz, false)
        }
        (None, Some(dims)) => {
            let (map, words) = random_map(args.bound, dims)?;
            (map, words, Some(1.0), true)
        }
        (None, None) => return Err(CliError::input("either --map or --random is required")),
    };
    check_bound_dimension(args.bound, &map)?;

    let report = match args.bound {
        BoundKind::Integer1d | BoundKind::IntegerDd => theory::integer_witness(&map)?,
        BoundKind::Any1d => {
            let grid = args
                .grid
                .unwrap_or_else(|| theory::default_grid_resolution(map.len()));
            theory::any_function_witness_1d(&map, grid)?
        }
        BoundKind::CoveringDd => theory::covering_witness(&map, args.samples, args.seed)?,
        BoundKind::Bilipschitz => {
            let words = words.ok_or_else(|| {
                CliError::input("bilipschitz needs word embeddings (`words` in the map file)")
            })?;
            let lipschitz = args
                .lipschitz
                .or(file_lipschitz)
                .ok_or_else(|| CliError::input("bilipschitz needs a Lipschitz constant"))?;
            let dim = map.dim();
            let pad = move |x: &[f64]| pad_to(x, dim);
            let continuous: Option<ContinuousMap<'_>> =
                isometric.then_some(&pad as ContinuousMap<'_>);
            let setup = BiLipschitzSetup {
                words: &words,
                lipschitz,
                continuous,
                samples: args.samples,
                seed: args.seed,
            };
            theory::bilipschitz_witness(&map, setup)?
        }
    };
    if let Some(path) = &args.out {
        formats::write_report(path, &report)?;
    }
    let line = summary(&report);
    if report.satisfied {
        Ok(vec![line])
    } else {
        println!("{line}");
        Err(CliError {
            code: CliError::SEARCH_FAILED,
            message: format!("no witness found at epsilon {}", report.epsilon),
        })
    }
}

fn summary(report: &WitnessReport) -> String {
    format!(
        "bound={} satisfied={} epsilon={} min_dist={} search_effort={}",
        report.bound_kind.as_str(),
        report.satisfied,
        report.epsilon,
        report.min_dist,
        report.search_effort
    )
}
