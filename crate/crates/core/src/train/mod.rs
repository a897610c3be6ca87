//! Dice loss, Adam, the plateau schedule and the sequence training loop.

mod adam;
mod schedule;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use schedule::{Plateau, ScheduleAction};

use crate::data::{
    augment_shift, augment_tempo, interpolate_position, render_target_mask, tempo_factors,
    InkImage, Mask, ModelPiece, Piece,
};
use crate::dsp::{FrontEnd, NormStats, Spectrogram};
use crate::model::{ConfigError, EncoderKind, Model, ModelConfig, PageInput};
use crate::rng;
use crate::tensor::{Gradients, Graph, GraphError, Tensor};

/// Smoothing term of the Dice loss.
pub const DICE_EPS: f64 = 1.0;

/// `1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps)` on plain slices.
pub fn dice_loss(pred: &[f32], target: &[f32]) -> f64 {
    assert_eq!(pred.len(), target.len(), "dice_loss shape mismatch");
    let (mut pg, mut p, mut g) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in pred.iter().zip(target) {
        pg += a as f64 * b as f64;
        p += a as f64;
        g += b as f64;
    }
    1.0 - (2.0 * pg + DICE_EPS) / (p + g + DICE_EPS)
}

/// Which parameters training returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keep {
    /// Lowest validation loss.
    Best,
    /// Parameters after the final epoch.
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Windows per optimizer step for recurrent encoders.
    pub batch_size: usize,
    /// Frames per optimizer step for the no-context model.
    pub ntc_batch_size: usize,
    pub seq_len: usize,
    pub lr_patience: usize,
    pub stop_patience: usize,
    pub max_epochs: usize,
    /// Minimum decrease of the validation loss that counts as improvement.
    pub min_improvement: f64,
    pub tempo_aug: bool,
    pub tempo_min: f64,
    pub tempo_max: f64,
    pub tempo_steps: usize,
    /// Largest page shift in model pixels (0 disables shifting).
    pub shift_aug_max: usize,
    /// Training windows drawn per piece and epoch; `None` covers each
    /// piece's frames once on average.
    pub windows_per_piece: Option<usize>,
    /// Validation windows per piece, evenly spaced; `None` uses all.
    pub val_windows_per_piece: Option<usize>,
    pub keep: Keep,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-5,
            batch_size: 4,
            ntc_batch_size: 64,
            seq_len: 16,
            lr_patience: 5,
            stop_patience: 10,
            max_epochs: 100,
            min_improvement: 1e-5,
            tempo_aug: false,
            tempo_min: 0.5,
            tempo_max: 1.5,
            tempo_steps: 7,
            shift_aug_max: 10,
            windows_per_piece: None,
            val_windows_per_piece: None,
            keep: Keep::Best,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && self.batch_size > 0
            && self.ntc_batch_size > 0
            && self.seq_len > 0
            && self.lr_patience > 0
            && self.stop_patience > 0
            && self.max_epochs > 0
            && self.min_improvement >= 0.0
            && self.tempo_steps > 0
            && self.tempo_min > 0.0
            && self.tempo_max >= self.tempo_min
            && self.windows_per_piece != Some(0)
            && self.val_windows_per_piece != Some(0);
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(
                "training parameters must be positive".into(),
            ))
        }
    }

    /// Window length and windows per optimizer step for an encoder.
    pub fn batching(&self, encoder: EncoderKind) -> (usize, usize) {
        if encoder.is_recurrent() {
            (self.seq_len, self.batch_size)
        } else {
            (1, self.ntc_batch_size)
        }
    }
}

#[derive(Debug)]
pub enum TrainError {
    Config(String),
    Graph(GraphError),
    /// Non-finite loss or gradient.
    Diverged {
        epoch: usize,
        piece: String,
        start: usize,
        detail: String,
    },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(m) => write!(f, "training configuration: {}", m),
            TrainError::Graph(e) => write!(f, "{}", e),
            TrainError::Diverged {
                epoch,
                piece,
                start,
                detail,
            } => {
                write!(
                    f,
                    "training diverged in epoch {} (piece {}, frame {}): {}",
                    epoch, piece, start, detail
                )
            }
        }
    }
}

impl core::error::Error for TrainError {}

impl From<GraphError> for TrainError {
    fn from(e: GraphError) -> Self {
        TrainError::Graph(e)
    }
}

impl From<ConfigError> for TrainError {
    fn from(e: ConfigError) -> Self {
        TrainError::Config(e.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Hooks into the training loop (progress, checkpoints, time budgets).
pub trait TrainObserver {
    /// Called after every optimizer step.
    fn batch_end(&mut self, _epoch: usize, _batch: usize, _loss: f64) {}
    /// Called after validation; returning `false` stops training.
    fn epoch_end(&mut self, _record: &EpochRecord, _model: &Model<f32>, _improved: bool) -> bool {
        true
    }
}

impl TrainObserver for () {}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// One tempo version of a piece.
struct Variant {
    features: Spectrogram,
    track: crate::data::AlignmentTrack,
}

/// A piece prepared for training: model-resolution page and standardized
/// features for every tempo factor.
struct Prepared {
    id: String,
    view: ModelPiece,
    variants: Vec<Variant>,
}

/// A contiguous run of target frames.
#[derive(Debug, Clone, Copy)]
struct Window {
    piece: usize,
    variant: usize,
    start: usize,
    len: usize,
    dx: i64,
    dy: i64,
}

fn prepare(
    pieces: &[Piece],
    factors: &[f64],
    front: &FrontEnd,
    stats: &NormStats,
) -> Vec<Prepared> {
    pieces
        .iter()
        .map(|p| {
            let variants = factors
                .iter()
                .map(|&f| {
                    let q = augment_tempo(p, f);
                    Variant {
                        features: q.features(front, stats),
                        track: q.model_view().track,
                    }
                })
                .collect();
            Prepared {
                id: p.id.clone(),
                view: p.model_view(),
                variants,
            }
        })
        .collect()
}

/// Target mask of frame `t` (at the feature frame rate).
pub fn target_mask(
    view: &ModelPiece,
    track: &crate::data::AlignmentTrack,
    fps: f64,
    t: usize,
) -> Mask {
    let pos = interpolate_position(track, &view.staves, t as f64 / fps);
    render_target_mask(view.image.width, view.image.height, &view.staves, pos)
}

/// Audio input of step `t`: the window of frames ending at `t` for
/// context encoders, frame `t` otherwise.
pub fn audio_input(config: &ModelConfig, spec: &Spectrogram, t: usize) -> Tensor<f32> {
    if config.encoder.uses_window() {
        let w = spec.window_ending_at(t, config.window_frames);
        Tensor::from_vec(&[1, config.n_bins, config.window_frames], w).expect("window shape")
    } else {
        Tensor::from_vec(&[config.n_bins], spec.frame(t).to_vec()).expect("frame shape")
    }
}

fn page_tensor(model: &Model<f32>, ink: &InkImage) -> Result<PageInput<f32>, GraphError> {
    let t =
        Tensor::from_vec(&[ink.height, ink.width], ink.data.clone()).map_err(GraphError::Shape)?;
    model.prepare_page(&t)
}

/// Summed Dice loss of one window; gradients are accumulated into `grads`
/// when given.
fn run_window(
    model: &Model<f32>,
    p: &Prepared,
    w: &Window,
    grads: Option<&mut Gradients<f32>>,
) -> Result<(f64, usize), GraphError> {
    let variant = &p.variants[w.variant];
    let fps = variant.features.fps;
    let mut masks: Vec<Mask> = (w.start..w.start + w.len)
        .map(|t| target_mask(&p.view, &variant.track, fps, t))
        .collect();
    let page = if w.dx != 0 || w.dy != 0 {
        let (ink, shifted) = augment_shift(&p.view.image, &masks, w.dx, w.dy);
        masks = shifted;
        page_tensor(model, &ink)?
    } else {
        page_tensor(model, &p.view.image)?
    };
    let mut g = Graph::new();
    let page_node = g.input(page.padded.clone());
    let stem = model.unet_stem(&mut g, page_node)?;
    let mut state = model.zero_state(&mut g);
    let mut total = None;
    for (k, mask) in masks.iter().enumerate() {
        let audio = g.input(audio_input(&model.config, &variant.features, w.start + k));
        let e = model.encode(&mut g, audio)?;
        let (z, next) = model.condition_step(&mut g, e, state)?;
        state = next;
        let pred = model.unet_head(&mut g, stem, z, page.height, page.width)?;
        let target = Tensor::from_vec(&[1, page.height, page.width], mask.to_f32())
            .map_err(GraphError::Shape)?;
        let loss = g.dice_loss(pred, &target, DICE_EPS as f32)?;
        total = Some(match total {
            None => loss,
            Some(t) => g.add(t, loss)?,
        });
    }
    let total = total.expect("window has at least one step");
    let value = g.value(total).data()[0] as f64;
    if let Some(grads) = grads {
        if value.is_finite() {
            grads.accumulate(&g.backward(total, &model.params)?);
        }
    }
    Ok((value, masks.len()))
}

fn windows_for_epoch(
    cfg: &TrainConfig,
    data: &[Prepared],
    window_len: usize,
    rng: &mut rng::SeededRng,
) -> Vec<Window> {
    let mut out = Vec::new();
    for (i, p) in data.iter().enumerate() {
        let base_frames = p.variants[0].features.len();
        let count = cfg
            .windows_per_piece
            .unwrap_or_else(|| base_frames.div_ceil(window_len).max(1));
        for _ in 0..count {
            let variant = if p.variants.len() > 1 {
                rng.gen_range(0..p.variants.len())
            } else {
                0
            };
            let n = p.variants[variant].features.len();
            let len = window_len.min(n);
            let start = rng.gen_range(0..=n - len);
            let m = cfg.shift_aug_max as i64;
            let (dx, dy) = if m > 0 {
                (rng.gen_range(-m..=m), rng.gen_range(-m..=m))
            } else {
                (0, 0)
            };
            out.push(Window {
                piece: i,
                variant,
                start,
                len,
                dx,
                dy,
            });
        }
    }
    out.shuffle(rng);
    out
}

/// Deterministic, unaugmented windows tiling each piece.
fn validation_windows(cfg: &TrainConfig, data: &[Prepared], window_len: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for (i, p) in data.iter().enumerate() {
        let n = p.variants[0].features.len();
        let starts: Vec<usize> = (0..n).step_by(window_len).collect();
        let picked: Vec<usize> = match cfg.val_windows_per_piece {
            Some(k) if k < starts.len() => (0..k).map(|j| starts[j * starts.len() / k]).collect(),
            _ => starts,
        };
        for start in picked {
            out.push(Window {
                piece: i,
                variant: 0,
                start,
                len: window_len.min(n - start),
                dx: 0,
                dy: 0,
            });
        }
    }
    out
}

/// Mean per-step Dice loss over validation windows.
fn validation_loss(
    model: &Model<f32>,
    data: &[Prepared],
    windows: &[Window],
) -> Result<f64, GraphError> {
    let (mut sum, mut steps) = (0.0, 0usize);
    for w in windows {
        let (l, n) = run_window(model, &data[w.piece], w, None)?;
        sum += l;
        steps += n;
    }
    Ok(sum / steps.max(1) as f64)
}

/// Normalization statistics of the unaugmented training features.
pub fn fit_norm_stats(pieces: &[Piece], front: &FrontEnd) -> Result<NormStats, TrainError> {
    let raw: Vec<Spectrogram> = pieces.iter().map(|p| p.raw_features(front)).collect();
    NormStats::fit(raw.iter()).map_err(|e| TrainError::Config(e.0))
}

/// Trains a model from scratch. Normalization statistics are fitted on
/// `train_set`; the validation loss drives the learning-rate schedule,
/// early stopping and (with [`Keep::Best`]) the returned parameters.
pub fn train(
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    train_set: &[Piece],
    val_set: &[Piece],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(TrainError::Config("validation set is empty".into()));
    }
    if let Some(p) = train_set
        .iter()
        .find(|p| val_set.iter().any(|v| v.id == p.id))
    {
        return Err(TrainError::Config(format!(
            "piece {} is in both training and validation sets",
            p.id
        )));
    }
    let front = FrontEnd::default();
    let stats = fit_norm_stats(train_set, &front)?;
    let mut model = Model::<f32>::init(model_config.clone(), stats.clone(), cfg.seed)?;
    let factors = if cfg.tempo_aug {
        tempo_factors(cfg.tempo_steps, cfg.tempo_min, cfg.tempo_max)
    } else {
        vec![1.0]
    };
    let train_data = prepare(train_set, &factors, &front, &stats);
    let val_data = prepare(val_set, &[1.0], &front, &stats);
    let (window_len, batch) = cfg.batching(model_config.encoder);
    let val_windows = validation_windows(cfg, &val_data, window_len);

    let mut rng = rng::split(cfg.seed, "train-sampling");
    let mut adam = AdamState::new(&model.params);
    let mut plateau = Plateau::new(
        cfg.lr,
        cfg.lr_patience,
        cfg.stop_patience,
        cfg.min_improvement,
    );
    let mut history = Vec::new();
    let mut best = (model.params.clone(), f64::INFINITY, 0usize);

    for epoch in 1..=cfg.max_epochs {
        let lr = plateau.lr();
        let windows = windows_for_epoch(cfg, &train_data, window_len, &mut rng);
        let (mut loss_sum, mut loss_steps) = (0.0, 0usize);
        for (b, chunk) in windows.chunks(batch).enumerate() {
            let mut grads = Gradients::zeros_like(&model.params);
            let (mut batch_loss, mut batch_steps) = (0.0, 0usize);
            for w in chunk {
                let (l, n) = run_window(&model, &train_data[w.piece], w, Some(&mut grads))?;
                if !l.is_finite() {
                    return Err(TrainError::Diverged {
                        epoch,
                        piece: train_data[w.piece].id.clone(),
                        start: w.start,
                        detail: format!("loss {}", l),
                    });
                }
                batch_loss += l;
                batch_steps += n;
            }
            grads.scale(1.0 / batch_steps as f32);
            if !grads.all_finite() {
                let w = &chunk[0];
                return Err(TrainError::Diverged {
                    epoch,
                    piece: train_data[w.piece].id.clone(),
                    start: w.start,
                    detail: "non-finite gradient".into(),
                });
            }
            adam_step(
                &mut model.params,
                &grads,
                &mut adam,
                lr as f32,
                cfg.weight_decay as f32,
            );
            observer.batch_end(epoch, b, batch_loss / batch_steps as f64);
            loss_sum += batch_loss;
            loss_steps += batch_steps;
        }
        let val_loss = validation_loss(&model, &val_data, &val_windows)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                piece: val_data[0].id.clone(),
                start: 0,
                detail: format!("validation loss {}", val_loss),
            });
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / loss_steps.max(1) as f64,
            val_loss,
        };
        history.push(record);
        let action = plateau.observe(val_loss);
        let improved = plateau.last_improved();
        if improved {
            best = (model.params.clone(), val_loss, epoch);
        }
        if !observer.epoch_end(&record, &model, improved) || action == ScheduleAction::Stop {
            break;
        }
    }
    let (best_params, best_val_loss, best_epoch) = best;
    if cfg.keep == Keep::Best && best_epoch > 0 {
        model.params = best_params;
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_loss,
    })
}
