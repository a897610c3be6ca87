//! Command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pgtk_core::data::{generate_piece, map_to_time, InkImage, Piece};
use pgtk_core::dsp::{FrontEnd, NormStats};
use pgtk_core::eval::{self, Aggregation, EvalMode, EvalOptions};
use pgtk_core::model::{EncoderKind, Model};
use pgtk_core::selfcheck::{self, GraphKind};
use pgtk_core::track::{CenterMode, Tracker};
use pgtk_core::train::{self, EpochRecord, TrainObserver};
use rand::RngCore;
use rayon::prelude::*;

use crate::bench::{bench_piece, run_bench, BenchStats};
use crate::config::{parse_override, RunConfig};
use crate::container::{load_model, save_model};
use crate::dataset::{
    load_dataset, load_piece, save_dataset, Manifest, ManifestEntry, FORMAT_VERSION,
};
use crate::pgm::write_pgm;

#[derive(Debug, Parser)]
#[command(
    name = "pgtk",
    version,
    about = "Audio-conditioned score following on full sheet-music pages"
)]
pub struct Cli {
    /// Flat `key = value` configuration file (overridden by flags).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.lr=1e-3`.
    #[arg(long = "set", global = true, value_parser = parse_override)]
    pub set: Vec<(String, String)>,
    /// Worker threads (0 = one per core); 1 gives fully deterministic runs.
    #[arg(long, global = true, env = "PGTK_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Track one piece and write per-frame positions.
    Track(TrackArgs),
    /// Evaluate a model (or the ground truth) on a dataset.
    Eval(EvalArgs),
    /// Run gradient checks, metric oracles and shape contracts.
    Verify(VerifyArgs),
    /// Measure per-step tracking latency.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub pieces: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Duplicate one bar per piece at a second page location.
    #[arg(long)]
    pub ambiguity: bool,
    /// Store filterbank features instead of audio.
    #[arg(long)]
    pub features: bool,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncoderArg {
    Cb,
    Fb,
    Ntc,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Cb => EncoderKind::Cb,
            EncoderArg::Fb => EncoderKind::Fb,
            EncoderArg::Ntc => EncoderKind::Ntc,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Separate validation dataset; otherwise a fraction of `--data` is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    #[arg(long)]
    pub tempo_aug: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Piece directory (`pieces/<id>` of a dataset).
    #[arg(long)]
    pub piece: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every predicted mask as a PGM.
    #[arg(long)]
    pub mask_dump: bool,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Pixel,
    Geometric,
    Temporal,
    All,
}

impl ModeArg {
    fn as_str(self) -> &'static str {
        match self {
            ModeArg::Pixel => "pixel",
            ModeArg::Geometric => "geometric",
            ModeArg::Temporal => "temporal",
            ModeArg::All => "all",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "oracle")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Score ground-truth masks instead of model predictions.
    #[arg(long)]
    pub oracle: bool,
    /// Average per-piece means and medians instead of pooling all frames.
    #[arg(long)]
    pub per_piece: bool,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Debug hook: corrupt the ELU derivative so the gradient checks must fail.
    #[arg(long, hide = true)]
    pub inject_broken_gradient: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model to benchmark; a freshly initialized one otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn path_str(p: &Path) -> Option<String> {
    Some(p.to_string_lossy().into_owned())
}

/// Defaults, then the config file, then `--set` overrides, then flags.
fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    cfg.set_all(&cli.set)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::GenData(a) => {
            cfg.paths.out = path_str(&a.out);
            if let Some(n) = a.pieces {
                cfg.data.pieces = n as usize;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            cfg.gen.ambiguity |= a.ambiguity;
            cfg.gen.features |= a.features;
        }
        Command::Train(a) => {
            cfg.paths.data = path_str(&a.data);
            cfg.paths.val = a.val.as_deref().and_then(path_str);
            cfg.paths.out = path_str(&a.out);
            if let Some(e) = a.encoder {
                cfg.model.encoder = e.into();
            }
            cfg.train.tempo_aug |= a.tempo_aug;
            if let Some(n) = a.epochs {
                cfg.train.max_epochs = n;
            }
            if let Some(lr) = a.lr {
                cfg.train.lr = lr;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
        }
        Command::Track(a) => {
            cfg.paths.model = path_str(&a.model);
            cfg.paths.piece = path_str(&a.piece);
            cfg.paths.out = path_str(&a.out);
            if let Some(k) = a.stride {
                cfg.eval.stride = k;
            }
            if let Some(t) = a.threshold {
                cfg.eval.threshold = t;
            }
        }
        Command::Eval(a) => {
            cfg.paths.model = a.model.as_deref().and_then(path_str);
            cfg.paths.data = path_str(&a.data);
            cfg.paths.out = path_str(&a.out);
            if let Some(m) = a.mode {
                cfg.eval.mode = m.as_str().into();
            }
            cfg.eval.oracle |= a.oracle;
            cfg.eval.per_piece |= a.per_piece;
            if let Some(k) = a.stride {
                cfg.eval.stride = k;
            }
        }
        Command::Verify(_) => {}
        Command::Bench(a) => {
            cfg.paths.model = a.model.as_deref().and_then(path_str);
            cfg.paths.out = path_str(&a.out);
            if let Some(n) = a.steps {
                cfg.bench.steps = n;
            }
            if let Some(n) = a.warmup {
                cfg.bench.warmup = n;
            }
            if let Some(n) = a.height {
                cfg.bench.height = n;
            }
            if let Some(n) = a.width {
                cfg.bench.width = n;
            }
            if let Some(e) = a.encoder {
                cfg.model.encoder = e.into();
            }
        }
    }
    cfg.train.seed = cfg.seed;
    if cfg.eval.stride == 0 {
        return Err(CliError::Usage("eval.stride must be at least 1".into()));
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    // a second initialization (e.g. in tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global();
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(&cfg, a.force),
        Command::Train(_) => cmd_train(&cfg),
        Command::Track(a) => cmd_track(&cfg, a.mask_dump),
        Command::Eval(_) => cmd_eval(&cfg),
        Command::Verify(a) => cmd_verify(a.inject_broken_gradient),
        Command::Bench(_) => cmd_bench(&cfg),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = PathBuf::from(
        cfg.paths
            .out
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing --out".into()))?,
    );
    fs::create_dir_all(&out).map_err(runtime("cannot create output directory"))?;
    Ok(out)
}

fn existing(path: Option<&str>, what: &str) -> Result<PathBuf, CliError> {
    let p = PathBuf::from(path.ok_or_else(|| CliError::Usage(format!("missing {what} path")))?);
    if !p.exists() {
        return Err(CliError::Usage(format!(
            "{what} path {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

/// Seeds of `n` generated pieces, derived from the root seed.
pub fn piece_seeds(root: u64, n: usize) -> Vec<u64> {
    let mut r = pgtk_core::rng::split(root, "gen-data");
    (0..n).map(|_| r.next_u64()).collect()
}

fn cmd_gen_data(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    if cfg.data.pieces == 0 {
        return Err(CliError::Usage("--pieces must be at least 1".into()));
    }
    let out = PathBuf::from(
        cfg.paths
            .out
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing --out".into()))?,
    );
    if out.exists() {
        let non_empty = fs::read_dir(&out)
            .map_err(runtime("cannot read output directory"))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::Runtime(format!(
                "{} is not empty (use --force to overwrite)",
                out.display()
            )));
        }
        if non_empty {
            fs::remove_dir_all(&out).map_err(runtime("cannot clear output directory"))?;
        }
    }
    let seeds = piece_seeds(cfg.seed, cfg.data.pieces);
    let pieces: Vec<Piece> = seeds
        .par_iter()
        .map(|&s| generate_piece(s, &cfg.gen))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        root_seed: Some(cfg.seed),
        generator: Some(cfg.gen.clone()),
        pieces: pieces
            .iter()
            .zip(&seeds)
            .map(|(p, &s)| ManifestEntry {
                id: p.id.clone(),
                seed: Some(s),
                ambiguous: p.is_ambiguous(),
            })
            .collect(),
    };
    save_dataset(&out, &pieces, &manifest).map_err(runtime("cannot write dataset"))?;
    cfg.write_to_dir(&out)
        .map_err(runtime("cannot write config"))?;
    eprintln!("wrote {} pieces to {}", pieces.len(), out.display());
    Ok(())
}

struct CliObserver {
    out: PathBuf,
    history: csv::Writer<fs::File>,
    error: Option<String>,
}

impl CliObserver {
    fn fail(&mut self, e: impl std::fmt::Display) -> bool {
        self.error = Some(e.to_string());
        false
    }
}

impl TrainObserver for CliObserver {
    fn epoch_end(&mut self, r: &EpochRecord, model: &Model<f32>, improved: bool) -> bool {
        eprintln!(
            "epoch {:4}  lr {:.2e}  train {:.5}  val {:.5}{}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.val_loss,
            if improved { "  *" } else { "" }
        );
        if let Err(e) = self
            .history
            .serialize(r)
            .and_then(|_| Ok(self.history.flush()?))
        {
            return self.fail(e);
        }
        let ckpt = self
            .out
            .join("checkpoints")
            .join(format!("epoch_{:04}.model", r.epoch));
        if let Err(e) = save_model(model, &ckpt) {
            return self.fail(e);
        }
        if improved {
            if let Err(e) = save_model(model, &self.out.join("best.model")) {
                return self.fail(e);
            }
        }
        true
    }
}

#[derive(serde::Serialize)]
struct TrainSummary {
    encoder: EncoderKind,
    window_len: usize,
    batch_size: usize,
    train_pieces: usize,
    val_pieces: usize,
    epochs: usize,
    best_epoch: usize,
    best_val_loss: f64,
}

/// Last `fraction` of the pieces (at least one) for validation.
pub fn holdout_split(
    mut pieces: Vec<Piece>,
    fraction: f64,
) -> Result<(Vec<Piece>, Vec<Piece>), CliError> {
    if pieces.len() < 2 {
        return Err(CliError::Usage(
            "need at least two pieces to hold out a validation set (or pass --val)".into(),
        ));
    }
    let n_val = ((pieces.len() as f64 * fraction).ceil() as usize).clamp(1, pieces.len() - 1);
    let val = pieces.split_off(pieces.len() - n_val);
    Ok((pieces, val))
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = existing(cfg.paths.data.as_deref(), "dataset")?;
    let train_set = load_dataset(&data)
        .map_err(runtime("invalid training dataset"))?
        .pieces;
    let (train_set, val_set) = match cfg.paths.val.as_deref() {
        Some(v) => {
            let v = existing(Some(v), "validation dataset")?;
            (
                train_set,
                load_dataset(&v)
                    .map_err(runtime("invalid validation dataset"))?
                    .pieces,
            )
        }
        None => holdout_split(train_set, cfg.data.val_fraction)?,
    };
    let out = out_dir(cfg)?;
    fs::create_dir_all(out.join("checkpoints"))
        .map_err(runtime("cannot create checkpoint directory"))?;
    cfg.write_to_dir(&out)
        .map_err(runtime("cannot write config"))?;
    let (window_len, batch_size) = cfg.train.batching(cfg.model.encoder);
    eprintln!(
        "training {} on {} pieces ({} validation), {} windows of {} steps per batch",
        cfg.model.encoder,
        train_set.len(),
        val_set.len(),
        batch_size,
        window_len
    );
    let history = csv::Writer::from_path(out.join("history.csv"))
        .map_err(runtime("cannot create history.csv"))?;
    let mut obs = CliObserver {
        out: out.clone(),
        history,
        error: None,
    };
    let outcome = train::train(&cfg.model, &cfg.train, &train_set, &val_set, &mut obs)
        .map_err(runtime("training failed"))?;
    if let Some(e) = obs.error {
        return Err(CliError::Runtime(format!(
            "cannot write training outputs: {e}"
        )));
    }
    save_model(&outcome.model, &out.join("best.model"))
        .map_err(runtime("cannot write best.model"))?;
    let summary = TrainSummary {
        encoder: cfg.model.encoder,
        window_len,
        batch_size,
        train_pieces: train_set.len(),
        val_pieces: val_set.len(),
        epochs: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
    };
    write_json(&out.join("summary.json"), &summary)?;
    eprintln!(
        "best epoch {} (val loss {:.5}); model written to {}",
        outcome.best_epoch,
        outcome.best_val_loss,
        out.join("best.model").display()
    );
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(runtime("cannot serialize"))?;
    s.push('\n');
    fs::write(path, s).map_err(runtime("cannot write output"))
}

/// Model-resolution coordinate to full-resolution page pixels.
fn to_page(v: f64, downscale: usize) -> f64 {
    (v + 0.5) * downscale as f64 - 0.5
}

fn cmd_track(cfg: &RunConfig, mask_dump: bool) -> Result<(), CliError> {
    let model_path = existing(cfg.paths.model.as_deref(), "model")?;
    let piece_path = existing(cfg.paths.piece.as_deref(), "piece")?;
    let model = load_model(&model_path).map_err(runtime("cannot load model"))?;
    let piece = load_piece(&piece_path).map_err(runtime("cannot load piece"))?;
    let out = out_dir(cfg)?;
    cfg.write_to_dir(&out)
        .map_err(runtime("cannot write config"))?;
    let view = piece.model_view();
    let spec = piece.features(&FrontEnd::default(), &model.norm_stats);
    let mut tracker = Tracker::new(&model, &view.image)
        .map_err(runtime("cannot track this page"))?
        .with_stride(cfg.eval.stride)
        .with_threshold(cfg.eval.threshold, CenterMode::Weighted);
    if mask_dump {
        fs::create_dir_all(out.join("masks")).map_err(runtime("cannot create mask directory"))?;
    }
    let mut w = csv::Writer::from_path(out.join("track.csv"))
        .map_err(runtime("cannot create track.csv"))?;
    w.write_record([
        "step",
        "time_s",
        "x",
        "y",
        "predicted_score_time_s",
        "latency_ms",
    ])
    .map_err(runtime("cannot write track.csv"))?;
    let ds = view.downscale;
    for t in 0..spec.len() {
        let t0 = Instant::now();
        let p = tracker
            .step(spec.frame(t))
            .map_err(runtime("tracking failed"))?;
        let score_time = p
            .held
            .map(|(x, y)| map_to_time(x, y, &view.staves, &view.track));
        let latency = t0.elapsed().as_secs_f64() * 1e3;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        w.write_record([
            t.to_string(),
            format!("{:.4}", t as f64 / spec.fps),
            opt(p.held.map(|(x, _)| to_page(x, ds))),
            opt(p.held.map(|(_, y)| to_page(y, ds))),
            opt(score_time),
            format!("{latency:.3}"),
        ])
        .map_err(runtime("cannot write track.csv"))?;
        if mask_dump {
            let (h, wd) = tracker.page_size();
            let img = InkImage {
                width: wd,
                height: h,
                data: p.mask,
            };
            write_pgm(
                &out.join("masks").join(format!("step_{t:05}.pgm")),
                &img.to_gray(),
            )
            .map_err(runtime("cannot write mask"))?;
        }
    }
    w.flush().map_err(runtime("cannot write track.csv"))?;
    eprintln!("tracked {} frames of {}", spec.len(), piece.id);
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let mode = EvalMode::parse(&cfg.eval.mode)
        .ok_or_else(|| CliError::Usage(format!("unknown eval mode `{}`", cfg.eval.mode)))?;
    let data = existing(cfg.paths.data.as_deref(), "dataset")?;
    let model = if cfg.eval.oracle {
        None
    } else {
        let p = existing(cfg.paths.model.as_deref(), "model")?;
        Some(load_model(&p).map_err(runtime("cannot load model"))?)
    };
    let pieces = load_dataset(&data)
        .map_err(runtime("invalid dataset"))?
        .pieces;
    let out = out_dir(cfg)?;
    cfg.write_to_dir(&out)
        .map_err(runtime("cannot write config"))?;
    let opts = EvalOptions {
        mode,
        threshold: cfg.eval.threshold,
        aggregation: if cfg.eval.per_piece {
            Aggregation::PerPiece
        } else {
            Aggregation::PerFrame
        },
        stride: cfg.eval.stride,
        ..EvalOptions::default()
    };
    let results: Vec<(String, eval::EvalAccumulator)> = pieces
        .par_iter()
        .map(|p| match &model {
            Some(m) => eval::model_accumulator(m, p, &opts).map(|a| (p.id.clone(), a)),
            None => Ok((p.id.clone(), eval::oracle_accumulator(p, &opts))),
        })
        .collect::<Result<_, _>>()
        .map_err(runtime("evaluation failed"))?;
    let outcome = eval::summarize(results, &opts);

    let mut report =
        serde_json::to_value(&outcome.report).map_err(runtime("cannot serialize report"))?;
    if cfg.eval.per_piece {
        let per: serde_json::Map<String, serde_json::Value> = outcome
            .per_piece
            .iter()
            .map(|(id, r)| {
                (
                    id.clone(),
                    serde_json::to_value(r).expect("report serializes"),
                )
            })
            .collect();
        report["per_piece"] = serde_json::Value::Object(per);
    }
    write_json(&out.join("report.json"), &report)?;
    let mut w = csv::Writer::from_path(out.join("onsets.csv"))
        .map_err(runtime("cannot create onsets.csv"))?;
    w.write_record(["piece", "onset_time", "predicted_time", "abs_error"])
        .map_err(runtime("cannot write onsets.csv"))?;
    for o in &outcome.onsets {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        w.write_record([
            o.piece.clone(),
            format!("{:.6}", o.onset_time),
            opt(o.predicted_time),
            opt(o.abs_error()),
        ])
        .map_err(runtime("cannot write onsets.csv"))?;
    }
    w.flush().map_err(runtime("cannot write onsets.csv"))?;

    let r = &outcome.report;
    let mut stdout = std::io::stdout().lock();
    let f = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    let _ = writeln!(
        stdout,
        "frames {}  predicted {}  onsets {}  unpredicted onsets {}",
        r.frames, r.predicted_frames, r.onsets, r.unpredicted_onsets
    );
    if r.f1.is_some() {
        let _ = writeln!(
            stdout,
            "precision {}  recall {}  f1 {}",
            f(r.precision),
            f(r.recall),
            f(r.f1)
        );
    }
    if r.mean_err_cm.is_some() {
        let _ = writeln!(
            stdout,
            "alignment error cm: mean {}  median {}",
            f(r.mean_err_cm),
            f(r.median_err_cm)
        );
    }
    for row in &r.onset_table {
        let _ = writeln!(
            stdout,
            "onsets within {:>5} s: {:6.2} %",
            row.threshold,
            100.0 * row.fraction
        );
    }
    Ok(())
}

fn cmd_verify(broken: bool) -> Result<(), CliError> {
    let checks = selfcheck::all_checks(GraphKind {
        broken_gradient: broken,
    });
    let mut stdout = std::io::stdout().lock();
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let _ = writeln!(
            stdout,
            "{}  {:width$}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(stdout, "{} checks, {} failed", checks.len(), failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{failed} check(s) failed")))
    }
}

fn cmd_bench(cfg: &RunConfig) -> Result<(), CliError> {
    let b = &cfg.bench;
    if b.steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    if b.steps < 100 {
        eprintln!(
            "warning: {} steps are too few for stable statistics (use at least 100)",
            b.steps
        );
    }
    let model = match cfg.paths.model.as_deref() {
        Some(p) => {
            load_model(&existing(Some(p), "model")?).map_err(runtime("cannot load model"))?
        }
        None => Model::init(
            cfg.model.clone(),
            NormStats::identity(cfg.model.n_bins),
            cfg.seed,
        )
        .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let gen = pgtk_core::data::GenConfig {
        height: b.height,
        width: b.width,
        downscale: model.config.input_downscale,
        ..cfg.gen.clone()
    };
    let piece = bench_piece(cfg.seed, &gen).map_err(|e| CliError::Usage(e.to_string()))?;
    let page = piece.model_view().image;
    let spec = piece.features(&FrontEnd::default(), &model.norm_stats);
    let out = out_dir(cfg)?;
    cfg.write_to_dir(&out)
        .map_err(runtime("cannot write config"))?;
    let lat =
        run_bench(&model, &page, &spec, b.steps, b.warmup).map_err(runtime("benchmark failed"))?;
    let mut w = csv::Writer::from_path(out.join("bench.csv"))
        .map_err(runtime("cannot create bench.csv"))?;
    w.write_record(["step", "latency_ms"])
        .map_err(runtime("cannot write bench.csv"))?;
    for (i, l) in lat.iter().enumerate() {
        w.write_record([(b.warmup + i).to_string(), format!("{l:.4}")])
            .map_err(runtime("cannot write bench.csv"))?;
    }
    w.flush().map_err(runtime("cannot write bench.csv"))?;
    let stats = BenchStats::from_latencies(&lat, b.warmup);
    write_json(&out.join("bench.json"), &stats)?;
    println!(
        "{} steps on a {}x{} page after {} warmup: mean {:.2} ms  median {:.2} ms  p95 {:.2} ms  cv {:.1} %  first/last 100 {:.2}/{:.2} ms",
        stats.steps,
        page.height,
        page.width,
        stats.warmup,
        stats.mean_ms,
        stats.median_ms,
        stats.p95_ms,
        100.0 * stats.cv,
        stats.head_mean_ms,
        stats.tail_mean_ms
    );
    Ok(())
}
