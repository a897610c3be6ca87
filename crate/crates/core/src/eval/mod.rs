//! Pixel metrics, geometric alignment error and onset-error tables.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{interpolate_position, map_to_time, render_target_mask, ModelPiece, Piece};
use crate::dsp::FrontEnd;
use crate::model::Model;
use crate::tensor::GraphError;
use crate::track::{center_of_mass, CenterMode, Tracker, THRESHOLD};

/// Centimetres per full-resolution pixel at 72 dpi.
pub const CM_PER_PX: f64 = 0.0352;

/// Onset-error thresholds in seconds.
pub const ONSET_THRESHOLDS: [f64; 5] = [0.05, 0.1, 0.5, 1.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PixelCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PixelCounts {
    /// Counts of one predicted probability mask against a binary mask.
    pub fn of(pred: &[f32], gt: &[u8], threshold: f32) -> Self {
        assert_eq!(pred.len(), gt.len(), "mask size mismatch");
        let mut c = Self::default();
        for (&p, &g) in pred.iter().zip(gt) {
            match (p >= threshold, g != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        c
    }

    pub fn add(&mut self, o: &Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    /// `(precision, recall, f1)`, zero where a denominator is zero.
    pub fn metrics(&self) -> (f64, f64, f64) {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        (p, r, f1)
    }
}

/// Micro-averaged precision, recall and F1 over all pixels of all frames.
pub fn pixel_metrics(preds: &[&[f32]], gts: &[&[u8]], threshold: f32) -> (f64, f64, f64) {
    assert_eq!(preds.len(), gts.len(), "mask count mismatch");
    let mut c = PixelCounts::default();
    for (p, g) in preds.iter().zip(gts) {
        c.add(&PixelCounts::of(p, g, threshold));
    }
    c.metrics()
}

/// Distance in cm between the centers of mass of a predicted and a ground
/// truth mask at model resolution; `None` if the thresholded prediction
/// (or the ground truth) is empty.
pub fn alignment_error_cm(
    pred: &[f32],
    gt: &[u8],
    width: usize,
    threshold: f32,
    downscale: usize,
) -> Option<f64> {
    let gt_f: Vec<f32> = gt.iter().map(|&v| v as f32).collect();
    let (gx, gy) = center_of_mass(&gt_f, width, 0.5, CenterMode::Weighted)?;
    let (px, py) = center_of_mass(pred, width, threshold, CenterMode::Weighted)?;
    Some(px_to_cm(libm::hypot(px - gx, py - gy), downscale))
}

/// Model-resolution pixels to centimetres on the full-resolution page.
pub fn px_to_cm(px: f64, downscale: usize) -> f64 {
    px * downscale as f64 * CM_PER_PX
}

/// Fraction of onsets with `|error| <= threshold` for every threshold.
/// `None` errors (no prediction) never count.
pub fn onset_error_table(errors: &[Option<f64>], thresholds: &[f64]) -> Vec<OnsetRow> {
    thresholds
        .iter()
        .map(|&t| {
            let hit = errors
                .iter()
                .filter(|e| e.is_some_and(|e| e.abs() <= t))
                .count();
            OnsetRow {
                threshold: t,
                fraction: if errors.is_empty() {
                    0.0
                } else {
                    hit as f64 / errors.len() as f64
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetRow {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Pixel,
    Geometric,
    Temporal,
    All,
}

impl EvalMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pixel" => Some(Self::Pixel),
            "geometric" => Some(Self::Geometric),
            "temporal" => Some(Self::Temporal),
            "all" => Some(Self::All),
            _ => None,
        }
    }

    fn pixel(self) -> bool {
        matches!(self, Self::Pixel | Self::All)
    }

    fn geometric(self) -> bool {
        matches!(self, Self::Geometric | Self::All)
    }

    fn temporal(self) -> bool {
        matches!(self, Self::Temporal | Self::All)
    }
}

/// How mean and median alignment errors are aggregated over pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    PerFrame,
    /// Average of the per-piece mean and median.
    PerPiece,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub threshold: f32,
    pub thresholds: Vec<f64>,
    pub aggregation: Aggregation,
    /// U-Net stride of the tracker.
    pub stride: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::All,
            threshold: THRESHOLD,
            thresholds: ONSET_THRESHOLDS.to_vec(),
            aggregation: Aggregation::PerFrame,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub mean_err_cm: Option<f64>,
    pub median_err_cm: Option<f64>,
    pub onset_table: Vec<OnsetRow>,
    pub frames: usize,
    pub predicted_frames: usize,
    pub unpredicted_frames: usize,
    pub onsets: usize,
    pub unpredicted_onsets: usize,
}

/// One row of the onset table output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetRecord {
    pub piece: String,
    pub onset_time: f64,
    pub predicted_time: Option<f64>,
}

impl OnsetRecord {
    pub fn abs_error(&self) -> Option<f64> {
        self.predicted_time.map(|p| (p - self.onset_time).abs())
    }
}

/// Raw measurements of one or more pieces; merging is associative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalAccumulator {
    pub pixels: PixelCounts,
    pub errors_cm: Vec<f64>,
    pub frames: usize,
    pub unpredicted_frames: usize,
    pub onsets: Vec<OnsetRecord>,
}

impl EvalAccumulator {
    pub fn merge(&mut self, o: &Self) {
        self.pixels.add(&o.pixels);
        self.errors_cm.extend_from_slice(&o.errors_cm);
        self.frames += o.frames;
        self.unpredicted_frames += o.unpredicted_frames;
        self.onsets.extend(o.onsets.iter().cloned());
    }

    pub fn report(&self, opts: &EvalOptions) -> EvalReport {
        let (p, r, f) = self.pixels.metrics();
        let pix = opts.mode.pixel();
        let geo = opts.mode.geometric();
        let errors: Vec<Option<f64>> = self.onsets.iter().map(|o| o.abs_error()).collect();
        EvalReport {
            precision: pix.then_some(p),
            recall: pix.then_some(r),
            f1: pix.then_some(f),
            mean_err_cm: if geo { mean(&self.errors_cm) } else { None },
            median_err_cm: if geo { median(&self.errors_cm) } else { None },
            onset_table: if opts.mode.temporal() {
                onset_error_table(&errors, &opts.thresholds)
            } else {
                Vec::new()
            },
            frames: self.frames,
            predicted_frames: self.frames - self.unpredicted_frames,
            unpredicted_frames: self.unpredicted_frames,
            onsets: self.onsets.len(),
            unpredicted_onsets: errors.iter().filter(|e| e.is_none()).count(),
        }
    }
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

/// Evaluates one piece from a per-frame mask source (frame index to a
/// row-major probability mask at model resolution).
pub fn evaluate_piece<E>(
    id: &str,
    view: &ModelPiece,
    n_frames: usize,
    fps: f64,
    opts: &EvalOptions,
    mut predict: impl FnMut(usize) -> Result<Vec<f32>, E>,
) -> Result<EvalAccumulator, E> {
    scored_piece(id, view, n_frames, fps, opts, |t| {
        predict(t).map(|m| (m, None))
    })
}

/// Like [`evaluate_piece`], but the predictor may also report the exact
/// position behind its mask, which then replaces the mask center when
/// onsets are mapped back to score time.
fn scored_piece<E>(
    id: &str,
    view: &ModelPiece,
    n_frames: usize,
    fps: f64,
    opts: &EvalOptions,
    mut predict: impl FnMut(usize) -> Result<(Vec<f32>, Option<(f64, f64)>), E>,
) -> Result<EvalAccumulator, E> {
    let (w, h) = (view.image.width, view.image.height);
    let mut acc = EvalAccumulator {
        frames: n_frames,
        ..Default::default()
    };
    // onsets grouped by their nearest frame
    let mut by_frame: Vec<Vec<usize>> = vec![Vec::new(); n_frames];
    if n_frames > 0 {
        for (i, e) in view.track.events.iter().enumerate() {
            let f = (libm::round(e.onset * fps).max(0.0) as usize).min(n_frames - 1);
            by_frame[f].push(i);
        }
    }
    let mut predicted_times: Vec<Option<f64>> = vec![None; view.track.len()];
    for t in 0..n_frames {
        let (pred, exact) = predict(t)?;
        let pos = interpolate_position(&view.track, &view.staves, t as f64 / fps);
        let gt = render_target_mask(w, h, &view.staves, pos);
        acc.pixels
            .add(&PixelCounts::of(&pred, &gt.data, opts.threshold));
        let center = center_of_mass(&pred, w, opts.threshold, CenterMode::Weighted);
        match center {
            None => acc.unpredicted_frames += 1,
            Some(_) => {
                if let Some(e) =
                    alignment_error_cm(&pred, &gt.data, w, opts.threshold, view.downscale)
                {
                    acc.errors_cm.push(e);
                }
            }
        }
        if let Some((x, y)) = center.map(|c| exact.unwrap_or(c)) {
            for &i in &by_frame[t] {
                predicted_times[i] = Some(map_to_time(x, y, &view.staves, &view.track));
            }
        }
    }
    acc.onsets = view
        .track
        .events
        .iter()
        .zip(predicted_times)
        .map(|(e, p)| OnsetRecord {
            piece: String::from(id),
            onset_time: e.onset,
            predicted_time: p,
        })
        .collect();
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub per_piece: Vec<(String, EvalReport)>,
    pub onsets: Vec<OnsetRecord>,
}

/// Merges per-piece measurements into the final report.
pub fn summarize(results: Vec<(String, EvalAccumulator)>, opts: &EvalOptions) -> EvalOutcome {
    let mut total = EvalAccumulator::default();
    for (_, a) in &results {
        total.merge(a);
    }
    let per_piece: Vec<(String, EvalReport)> = results
        .iter()
        .map(|(id, a)| (id.clone(), a.report(opts)))
        .collect();
    let mut report = total.report(opts);
    if opts.aggregation == Aggregation::PerPiece && opts.mode.geometric() {
        let means: Vec<f64> = per_piece
            .iter()
            .filter_map(|(_, r)| r.mean_err_cm)
            .collect();
        let medians: Vec<f64> = per_piece
            .iter()
            .filter_map(|(_, r)| r.median_err_cm)
            .collect();
        report.mean_err_cm = mean(&means);
        report.median_err_cm = mean(&medians);
    }
    EvalOutcome {
        report,
        per_piece,
        onsets: total.onsets,
    }
}

/// Tracks one piece with `model` at the feature frame rate.
pub fn model_accumulator(
    model: &Model<f32>,
    piece: &Piece,
    opts: &EvalOptions,
) -> Result<EvalAccumulator, GraphError> {
    let view = piece.model_view();
    let spec = piece.features(&FrontEnd::default(), &model.norm_stats);
    let mut tracker = Tracker::new(model, &view.image)?
        .with_stride(opts.stride)
        .with_threshold(opts.threshold, CenterMode::Weighted);
    evaluate_piece(&piece.id, &view, spec.len(), spec.fps, opts, |t| {
        tracker.step(spec.frame(t)).map(|pr| pr.mask)
    })
}

/// Ground-truth masks scored as predictions, a self-test of the harness.
pub fn oracle_accumulator(piece: &Piece, opts: &EvalOptions) -> EvalAccumulator {
    let view = piece.model_view();
    let spec = piece.raw_features(&FrontEnd::default());
    // the mask is snapped to whole pixels, so timing uses the position it was drawn from
    let acc = scored_piece::<core::convert::Infallible>(
        &piece.id,
        &view,
        spec.len(),
        spec.fps,
        opts,
        |t| {
            let pos = interpolate_position(&view.track, &view.staves, t as f64 / spec.fps);
            let mask =
                render_target_mask(view.image.width, view.image.height, &view.staves, pos).to_f32();
            Ok((mask, Some((pos.x, pos.y))))
        },
    );
    let Ok(acc) = acc;
    acc
}

/// Tracks every piece with `model` and scores the predictions.
pub fn evaluate(
    model: &Model<f32>,
    pieces: &[Piece],
    opts: &EvalOptions,
) -> Result<EvalOutcome, GraphError> {
    let mut results = Vec::with_capacity(pieces.len());
    for p in pieces {
        results.push((p.id.clone(), model_accumulator(model, p, opts)?));
    }
    Ok(summarize(results, opts))
}

pub fn evaluate_oracle(pieces: &[Piece], opts: &EvalOptions) -> EvalOutcome {
    summarize(
        pieces
            .iter()
            .map(|p| (p.id.clone(), oracle_accumulator(p, opts)))
            .collect(),
        opts,
    )
}
