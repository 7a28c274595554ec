//! The `captor` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::attention::{export_attention, grid_shape_for};
use crate::encoder::{load_features, EncoderKind, FeatureGrid};
use crate::error::Error;
use crate::fixture;
use crate::inference::{caption_batch, DecodeConfig, DecodedCaption};
use crate::metrics::{pairs_from_records, score_files, score_pairs, ScoreReport};
use crate::text::{load_captions, normalize, CaptionRecord};
use crate::trainer::{load_checkpoint, save_checkpoint, train_with_progress, Checkpoint, TrainConfig, FORMAT_VERSION};
use crate::word2vec::{load_corpus, train_word2vec, Word2VecConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "captor", version, about = "Attentive image captioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a caption model on feature grids and captions.
    Train(TrainArgs),
    /// Caption feature grids with a trained model.
    Caption(CaptionArgs),
    /// Caption feature grids and score them against references.
    Eval(EvalArgs),
    /// Score a hypothesis captions file against references.
    Score(ScoreArgs),
    /// Train skip-gram word vectors on a text corpus.
    Word2vec(Word2VecArgs),
    /// Summarize a checkpoint.
    Inspect(InspectArgs),
    /// Write a synthetic feature/caption dataset.
    GenFixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of .saf feature files (or a single file).
    #[arg(long)]
    pub features: PathBuf,
    /// Captions file, one `image_id<TAB>caption` per line.
    #[arg(long)]
    pub captions: PathBuf,
    /// `key = value` training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Encoder that produced the features.
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub out: PathBuf,
    /// Do not print per-epoch losses.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Beam width; 1 decodes greedily.
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    /// Length-normalization exponent for beam scores.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
}

impl DecodeArgs {
    fn config(&self) -> Result<DecodeConfig, Failure> {
        let cfg = DecodeConfig {
            beam_width: self.beam,
            max_len: self.max_len,
            alpha: self.alpha,
        };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// A .saf file or a directory of them.
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Write per-image attention maps (JSON and PGM) here.
    #[arg(long)]
    pub attention_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub refs: PathBuf,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct Word2VecArgs {
    /// One sentence per line; `id<TAB>caption` lines are accepted too.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

enum Failure {
    Usage(String),
    Run(Error),
    /// Already reported; carries the exit code.
    Reported(i32),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(Error::Format(format!("write failed: {e}")))
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
        Err(Failure::Reported(code)) => code,
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Train(a) => train(a, out, err),
        Command::Caption(a) => caption(a, out, err),
        Command::Eval(a) => eval(a, out, err),
        Command::Score(a) => score(a, out, err),
        Command::Word2vec(a) => word2vec(a, out),
        Command::Inspect(a) => inspect(a, out),
        Command::GenFixture(a) => gen_fixture(a, out),
    }
}

fn train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.epochs = epochs;
    }
    if let Some(kind) = a.encoder {
        cfg.encoder = kind;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let grids = load_features(&a.features)?;
    let captions = load_captions(&a.captions)?;
    let quiet = a.quiet;
    let outcome = train_with_progress(&grids, &captions, &cfg, |epoch, loss| {
        if !quiet {
            let _ = writeln!(err, "epoch {:>4}  loss {loss:.6}", epoch + 1);
        }
    })?;
    save_checkpoint(&outcome.model, &a.out)?;
    let last = outcome.history.last().copied().unwrap_or(f64::NAN);
    writeln!(out, "final loss {last:.6}")?;
    writeln!(out, "vocabulary {}", outcome.model.vocab.len())?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}

fn decode_all(
    model_path: &PathBuf,
    features: &PathBuf,
    decode: &DecodeArgs,
    err: &mut dyn Write,
) -> Result<(Vec<FeatureGrid>, Vec<Option<DecodedCaption>>, bool), Failure> {
    let cfg = decode.config()?;
    let model = load_checkpoint(model_path)?;
    let grids = load_features(features)?;
    let mut failed = false;
    let results = caption_batch(&model, &grids, &cfg)
        .into_iter()
        .zip(&grids)
        .map(|(r, g)| match r {
            Ok(c) => Some(c),
            Err(e) => {
                failed = true;
                let _ = writeln!(err, "error: {}: {e}", g.image_id);
                None
            }
        })
        .collect();
    Ok((grids, results, failed))
}

fn caption(a: CaptionArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let (grids, results, failed) = decode_all(&a.model, &a.features, &a.decode, err)?;
    for (g, c) in grids.iter().zip(&results) {
        let Some(c) = c else { continue };
        writeln!(out, "{}\t{}", g.image_id, c.text())?;
        if let Some(dir) = &a.attention_out {
            let map = export_attention(&g.image_id, &c.tokens, &c.attention_trace, grid_shape_for(g.locations()))?;
            map.write_to_dir(dir, true)?;
        }
    }
    if failed {
        return Err(Failure::Reported(EXIT_DATA));
    }
    Ok(())
}

fn print_report(report: &ScoreReport, json: bool, out: &mut dyn Write) -> std::io::Result<()> {
    if json {
        writeln!(out, "{}", report.to_json())
    } else {
        write!(out, "{report}")
    }
}

fn eval(a: EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let (grids, results, failed) = decode_all(&a.model, &a.features, &a.decode, err)?;
    if failed {
        return Err(Failure::Reported(EXIT_DATA));
    }
    let hyps: Vec<CaptionRecord> = grids
        .iter()
        .zip(results)
        .map(|(g, c)| {
            let text = c.map(|c| c.text()).unwrap_or_default();
            CaptionRecord {
                image_id: g.image_id.clone(),
                tokens: normalize(&text),
                raw: text,
            }
        })
        .collect();
    let refs = load_captions(&a.refs)?;
    let pairs = pairs_from_records(&hyps, &refs)?;
    if pairs.len() < 2 {
        writeln!(err, "warning: CIDEr document frequencies need at least two images")?;
    }
    print_report(&score_pairs(&pairs), a.json, out)?;
    Ok(())
}

fn score(a: ScoreArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let report = score_files(&a.hyp, &a.refs)?;
    if load_captions(&a.hyp)?.len() < 2 {
        writeln!(err, "warning: CIDEr document frequencies need at least two images")?;
    }
    print_report(&report, a.json, out)?;
    Ok(())
}

fn word2vec(a: Word2VecArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = Word2VecConfig {
        dim: a.dim,
        window: a.window,
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
    };
    if cfg.dim == 0 || cfg.window == 0 {
        return Err(Failure::Usage("--dim and --window must be positive".into()));
    }
    let corpus = load_corpus(&a.corpus)?;
    let outcome = train_word2vec(&corpus, &cfg)?;
    outcome.to_checkpoint(&cfg).save(&a.out)?;
    let last = outcome.history.last().copied().unwrap_or(f64::NAN);
    writeln!(out, "final loss {last:.6}")?;
    writeln!(out, "vocabulary {}", outcome.vocab.len())?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}

fn inspect(a: InspectArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    writeln!(out, "format version  {FORMAT_VERSION}")?;
    match &ckpt.encoder {
        Some(spec) => writeln!(out, "encoder         {} ({}x{})", spec.kind, spec.locations, spec.channels)?,
        None => writeln!(out, "encoder         none (word vectors)")?,
    }
    writeln!(out, "vocabulary      {}", ckpt.vocab.len())?;
    let count: usize = ckpt.tensors.values().map(|t| t.len()).sum();
    writeln!(out, "parameters      {count}")?;
    for (name, t) in &ckpt.tensors {
        writeln!(out, "  {name:<12} {:?}", t.shape())?;
    }
    writeln!(out, "config")?;
    for (k, v) in &ckpt.config {
        writeln!(out, "  {k} = {v}")?;
    }
    Ok(())
}

fn gen_fixture(a: FixtureArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.count == 0 || a.count > fixture::MAX_IMAGES {
        return Err(Failure::Usage(format!("--count must be in 1..={}", fixture::MAX_IMAGES)));
    }
    let fx = fixture::generate(a.count, a.seed)?;
    fixture::write(&a.out, &fx, &fixture::suggested_config(a.seed))?;
    writeln!(out, "wrote {} images to {}", fx.grids.len(), a.out.display())?;
    Ok(())
}
