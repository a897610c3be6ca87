//! Online score following: one audio frame in, one page position out.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::InkImage;
use crate::model::{Model, PageInput};
use crate::tensor::{Graph, GraphError, Tensor};

/// Default probability threshold for thresholded masks.
pub const THRESHOLD: f32 = 0.5;

/// How pixels above the threshold are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CenterMode {
    /// Weighted by probability.
    #[default]
    Weighted,
    Uniform,
}

/// Center of mass `(x, y)` of the pixels with `p >= threshold`, or `None`
/// when no pixel passes.
pub fn center_of_mass(
    mask: &[f32],
    width: usize,
    threshold: f32,
    mode: CenterMode,
) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut sw) = (0.0f64, 0.0f64, 0.0f64);
    for (i, &p) in mask.iter().enumerate() {
        if p >= threshold {
            let w = match mode {
                CenterMode::Weighted => p as f64,
                CenterMode::Uniform => 1.0,
            };
            sx += w * (i % width) as f64;
            sy += w * (i / width) as f64;
            sw += w;
        }
    }
    (sw > 0.0).then(|| (sx / sw, sy / sw))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub step: usize,
    /// Row-major `height x width` probabilities.
    pub mask: Vec<f32>,
    /// Center of mass of the thresholded mask, `None` if empty.
    pub position: Option<(f64, f64)>,
    /// `position`, or the last valid one when the mask is empty.
    pub held: Option<(f64, f64)>,
    /// The U-Net was evaluated for this step (false when reusing a mask in
    /// stride mode).
    pub evaluated: bool,
}

/// Streaming state for one performance of one page.
#[derive(Debug, Clone)]
pub struct Tracker<'m> {
    model: &'m Model<f32>,
    page: PageInput<f32>,
    stem: Tensor<f32>,
    h: Tensor<f32>,
    c: Tensor<f32>,
    ring: VecDeque<Vec<f32>>,
    step: usize,
    stride: usize,
    threshold: f32,
    mode: CenterMode,
    last_mask: Vec<f32>,
    last_valid: Option<(f64, f64)>,
}

impl<'m> Tracker<'m> {
    /// Zero state, zero-filled frame buffer and the page's first U-Net
    /// block precomputed.
    pub fn new(model: &'m Model<f32>, page: &InkImage) -> Result<Self, GraphError> {
        let t = Tensor::from_vec(&[page.height, page.width], page.data.clone())
            .map_err(GraphError::Shape)?;
        let page = model.prepare_page(&t)?;
        let mut g = Graph::new();
        let p = g.input(page.padded.clone());
        let stem = model.unet_stem(&mut g, p)?;
        let stem = g.value(stem).clone();
        let cfg = &model.config;
        let ring = (0..cfg.frames_per_step())
            .map(|_| vec![0.0; cfg.n_bins])
            .collect();
        Ok(Self {
            model,
            stem,
            h: Tensor::zeros(&[cfg.hidden]),
            c: Tensor::zeros(&[cfg.hidden]),
            ring,
            step: 0,
            stride: 1,
            threshold: THRESHOLD,
            mode: CenterMode::Weighted,
            last_mask: Vec::new(),
            last_valid: None,
            page,
        })
    }

    /// Evaluates the U-Net only every `k`-th step, reusing the last mask in
    /// between. The conditioner still sees every frame.
    pub fn with_stride(mut self, k: usize) -> Self {
        self.stride = k.max(1);
        self
    }

    pub fn with_threshold(mut self, threshold: f32, mode: CenterMode) -> Self {
        self.threshold = threshold;
        self.mode = mode;
        self
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn hidden(&self) -> (&Tensor<f32>, &Tensor<f32>) {
        (&self.h, &self.c)
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.ring.iter().map(|f| f.as_slice())
    }

    pub fn page_size(&self) -> (usize, usize) {
        (self.page.height, self.page.width)
    }

    /// Feeds one standardized frame and predicts the current position.
    pub fn step(&mut self, frame: &[f32]) -> Result<Prediction, GraphError> {
        let cfg = &self.model.config;
        if frame.len() != cfg.n_bins {
            return Err(GraphError::Shape(crate::tensor::ShapeError::new(
                "tracker",
                alloc::format!("frame of {} bins, expected {}", frame.len(), cfg.n_bins),
            )));
        }
        let mut oldest = self.ring.pop_front().expect("ring is never empty");
        oldest.copy_from_slice(frame);
        self.ring.push_back(oldest);

        let audio = if cfg.encoder.uses_window() {
            let n = cfg.window_frames;
            let mut w = vec![0.0f32; cfg.n_bins * n];
            for (j, f) in self.ring.iter().enumerate() {
                for (b, &v) in f.iter().enumerate() {
                    w[b * n + j] = v;
                }
            }
            Tensor::from_vec(&[1, cfg.n_bins, n], w).map_err(GraphError::Shape)?
        } else {
            Tensor::from_vec(&[cfg.n_bins], frame.to_vec()).map_err(GraphError::Shape)?
        };

        let mut g = Graph::new();
        let x = g.input(audio);
        let e = self.model.encode(&mut g, x)?;
        let h = g.input(self.h.clone());
        let c = g.input(self.c.clone());
        let (z, (h2, c2)) = self.model.condition_step(&mut g, e, (h, c))?;
        let evaluate = self.step % self.stride == 0 || self.last_mask.is_empty();
        if evaluate {
            let stem = g.input(self.stem.clone());
            let out = self
                .model
                .unet_head(&mut g, stem, z, self.page.height, self.page.width)?;
            self.last_mask = g.value(out).data().to_vec();
        }
        self.h = g.value(h2).clone();
        self.c = g.value(c2).clone();

        let position = center_of_mass(&self.last_mask, self.page.width, self.threshold, self.mode);
        if position.is_some() {
            self.last_valid = position;
        }
        let p = Prediction {
            step: self.step,
            mask: self.last_mask.clone(),
            position,
            held: self.last_valid,
            evaluated: evaluate,
        };
        self.step += 1;
        Ok(p)
    }
}

/// Runs the whole sequence through one graph with a continuous state, the
/// batch counterpart of feeding a [`Tracker`] frame by frame.
pub fn predict_sequence(
    model: &Model<f32>,
    page: &InkImage,
    spec: &crate::dsp::Spectrogram,
) -> Result<Vec<Vec<f32>>, GraphError> {
    let t = Tensor::from_vec(&[page.height, page.width], page.data.clone())
        .map_err(GraphError::Shape)?;
    let page = model.prepare_page(&t)?;
    let mut g = Graph::new();
    let p = g.input(page.padded.clone());
    let stem = model.unet_stem(&mut g, p)?;
    let stem = g.value(stem).clone();
    let mut state = model.zero_state(&mut g);
    let mut out = Vec::with_capacity(spec.len());
    for t in 0..spec.len() {
        let x = g.input(crate::train::audio_input(&model.config, spec, t));
        let e = model.encode(&mut g, x)?;
        let (z, next) = model.condition_step(&mut g, e, state)?;
        state = next;
        let s = g.input(stem.clone());
        let pred = model.unet_head(&mut g, s, z, page.height, page.width)?;
        out.push(g.value(pred).data().to_vec());
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
