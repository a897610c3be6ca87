use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Audio encoder / conditioner variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Context-based: 40-frame spectrogram window, conv stack, LSTM.
    Cb,
    /// Frame-based: single frame, dense layer, LSTM.
    Fb,
    /// No temporal context: context-based encoder, dense layer instead of the LSTM.
    Ntc,
}

impl EncoderKind {
    pub fn is_recurrent(self) -> bool {
        !matches!(self, EncoderKind::Ntc)
    }

    pub fn uses_window(self) -> bool {
        !matches!(self, EncoderKind::Fb)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cb" => Some(EncoderKind::Cb),
            "fb" => Some(EncoderKind::Fb),
            "ntc" => Some(EncoderKind::Ntc),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Cb => "cb",
            EncoderKind::Fb => "fb",
            EncoderKind::Ntc => "ntc",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    /// Feature maps of the first U-Net block; doubles per level.
    pub base_filters: usize,
    /// Number of encoder levels including the bottleneck.
    pub depth: usize,
    /// Block letters that carry a FiLM layer ("BCDEFGH" by default).
    pub film_blocks: String,
    /// Factor between the full-resolution page and the model input.
    pub input_downscale: usize,
    pub n_bins: usize,
    /// Spectrogram frames seen by the context-based encoder.
    pub window_frames: usize,
    /// Channels of the conv-pool stages of the context-based encoder.
    pub encoder_channels: Vec<usize>,
    /// Channels of the final 1x1 conv of the context-based encoder.
    pub encoder_head: usize,
    pub embed_dim: usize,
    /// Width of the LSTM (or of the dense layer replacing it).
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Cb,
            base_filters: 8,
            depth: 5,
            film_blocks: "BCDEFGH".into(),
            input_downscale: 3,
            n_bins: crate::dsp::N_BINS,
            window_frames: 40,
            encoder_channels: vec![24, 48, 96, 96],
            encoder_head: 96,
            embed_dim: 32,
            hidden: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid model config: {}", self.0)
    }
}

impl core::error::Error for ConfigError {}

impl ModelConfig {
    pub fn with_encoder(encoder: EncoderKind) -> Self {
        Self {
            encoder,
            ..Self::default()
        }
    }

    pub fn n_blocks(&self) -> usize {
        2 * self.depth - 1
    }

    pub fn block_letter(i: usize) -> char {
        (b'A' + i as u8) as char
    }

    /// Feature maps of block `i` (encoder levels mirrored in the decoder).
    pub fn block_channels(&self, i: usize) -> usize {
        let level = if i < self.depth {
            i
        } else {
            2 * (self.depth - 1) - i
        };
        self.base_filters << level
    }

    pub fn has_film(&self, i: usize) -> bool {
        self.film_blocks.contains(Self::block_letter(i))
    }

    /// Page sizes are padded to a multiple of this internally.
    pub fn size_multiple(&self) -> usize {
        1 << (self.depth - 1)
    }

    /// Smallest accepted page height and width.
    pub fn min_page_size(&self) -> usize {
        self.size_multiple().max(16)
    }

    /// Spatial size of the context encoder output `(bins, frames)`.
    pub fn encoder_output_dims(&self) -> (usize, usize) {
        let mut dims = (self.n_bins, self.window_frames);
        for _ in &self.encoder_channels {
            dims = (dims.0 / 2, dims.1 / 2);
        }
        dims
    }

    /// Frames of audio the encoder consumes per step.
    pub fn frames_per_step(&self) -> usize {
        if self.encoder.uses_window() {
            self.window_frames
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError(m.into()));
        if self.depth < 2 || self.depth > 8 {
            return err("depth must be in 2..=8");
        }
        if self.base_filters == 0 || self.embed_dim == 0 || self.hidden == 0 || self.n_bins == 0 {
            return err("layer widths must be positive");
        }
        if self.input_downscale == 0 {
            return err("input_downscale must be positive");
        }
        if let Some(c) = self.film_blocks.chars().find(|&c| {
            let i = (c as u32).wrapping_sub('A' as u32) as usize;
            i >= self.n_blocks()
        }) {
            return Err(ConfigError(alloc::format!(
                "film block {} does not exist",
                c
            )));
        }
        if self.has_film(0) {
            return err("block A is shared across steps and cannot carry FiLM");
        }
        if self.encoder.uses_window() {
            let (mut h, mut w) = (self.n_bins, self.window_frames);
            for _ in &self.encoder_channels {
                if h < 2 || w < 2 {
                    return err("spectrogram window too small for the encoder's pooling stages");
                }
                h /= 2;
                w /= 2;
            }
            if self.encoder_channels.contains(&0) || self.encoder_head == 0 {
                return err("encoder channels must be positive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_block_widths() {
        let c = ModelConfig::default();
        let w: Vec<usize> = (0..c.n_blocks()).map(|i| c.block_channels(i)).collect();
        assert_eq!(w, vec![8, 16, 32, 64, 128, 64, 32, 16, 8]);
        let film: String = (0..c.n_blocks())
            .filter(|&i| c.has_film(i))
            .map(ModelConfig::block_letter)
            .collect();
        assert_eq!(film, "BCDEFGH");
        assert_eq!(c.encoder_output_dims(), (4, 2));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_configs() {
        let c = ModelConfig {
            window_frames: 8,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ModelConfig {
            film_blocks: "BZ".into(),
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
