use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::image::{GrayImage, InkImage};
use crate::dsp::{AudioSignal, FrontEnd, NormStats, Spectrogram};

/// Staff geometry in page pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Staff {
    pub y_center: f64,
    pub y_top: f64,
    pub y_bottom: f64,
    pub x_start: f64,
    pub x_end: f64,
}

impl Staff {
    pub fn width(&self) -> f64 {
        self.x_end - self.x_start
    }

    /// Distance between adjacent staff lines.
    pub fn space(&self) -> f64 {
        (self.y_bottom - self.y_top) / 4.0
    }

    /// Same staff in a coordinate frame reduced by `factor`, mapping pixel
    /// centers onto pixel centers.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: f64| scale_coord(v, factor);
        Self {
            y_center: s(self.y_center),
            y_top: s(self.y_top),
            y_bottom: s(self.y_bottom),
            x_start: s(self.x_start),
            x_end: s(self.x_end),
        }
    }
}

pub(crate) fn scale_coord(v: f64, factor: f64) -> f64 {
    (v + 0.5) / factor - 0.5
}

/// Full-resolution page with its staff layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePage {
    pub image: GrayImage,
    pub staves: Vec<Staff>,
    pub dpi: u32,
    /// Reduction from this page to the model input.
    pub downscale: usize,
}

impl ScorePage {
    pub fn model_image(&self) -> InkImage {
        self.image.to_ink(self.downscale)
    }

    pub fn model_staves(&self) -> Vec<Staff> {
        self.staves
            .iter()
            .map(|s| s.scaled(self.downscale as f64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignEvent {
    pub onset: f64,
    pub x: f64,
    pub y: f64,
    pub staff: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlignmentTrack {
    pub events: Vec<AlignEvent>,
}

impl AlignmentTrack {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let events = self
            .events
            .iter()
            .map(|e| AlignEvent {
                onset: e.onset,
                x: scale_coord(e.x, factor),
                y: scale_coord(e.y, factor),
                staff: e.staff,
            })
            .collect();
        Self { events }
    }

    /// Onsets divided by `factor`.
    pub fn time_scaled(&self, factor: f64) -> Self {
        Self {
            events: self
                .events
                .iter()
                .map(|e| AlignEvent {
                    onset: e.onset / factor,
                    ..*e
                })
                .collect(),
        }
    }
}

/// A note of the synthetic performance, kept so audio can be re-rendered
/// at another tempo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthNote {
    pub onset: f64,
    pub duration: f64,
    pub midi: u8,
    pub velocity: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PieceAudio {
    Wave(AudioSignal),
    /// Precomputed filterbank frames (possibly already standardized).
    Features(Spectrogram),
}

impl PieceAudio {
    pub fn duration(&self) -> f64 {
        match self {
            PieceAudio::Wave(a) => a.duration(),
            PieceAudio::Features(s) => s.len() as f64 / s.fps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub id: String,
    pub page: ScorePage,
    pub track: AlignmentTrack,
    pub audio: PieceAudio,
    pub synth: Option<Vec<SynthNote>>,
    /// `(staff, bar)` of two bars carrying the same notes, if generated
    /// in ambiguity mode.
    pub duplicated_bars: Option<[(usize, usize); 2]>,
}

impl Piece {
    pub fn is_ambiguous(&self) -> bool {
        self.duplicated_bars.is_some()
    }

    /// Unstandardized filterbank frames.
    pub fn raw_features(&self, front: &FrontEnd) -> Spectrogram {
        match &self.audio {
            PieceAudio::Wave(a) => front.spectrogram(a, None),
            PieceAudio::Features(s) => s.clone(),
        }
    }

    /// Standardized frames ready for the model.
    pub fn features(&self, front: &FrontEnd, stats: &NormStats) -> Spectrogram {
        self.raw_features(front).standardized_with(stats)
    }

    /// Page, staves and alignment at model resolution.
    pub fn model_view(&self) -> ModelPiece {
        let f = self.page.downscale as f64;
        ModelPiece {
            image: self.page.model_image(),
            staves: self.page.model_staves(),
            track: self.track.scaled(f),
            downscale: self.page.downscale,
        }
    }
}

/// A piece's visual side and alignment at model resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPiece {
    pub image: InkImage,
    pub staves: Vec<Staff>,
    pub track: AlignmentTrack,
    pub downscale: usize,
}
