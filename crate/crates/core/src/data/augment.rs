use alloc::vec::Vec;

use super::generate::synthesize;
use super::image::InkImage;
use super::position::Mask;
use super::types::{Piece, PieceAudio, SynthNote};
use crate::dsp::{FrontEnd, Spectrogram};

/// `n` equally spaced tempo factors from `lo` to `hi`.
pub fn tempo_factors(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![(lo + hi) / 2.0],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Copy of `data` (`width x height`, row-major) moved by `(dx, dy)`, with
/// uncovered pixels set to `fill`.
pub fn shift_image<T: Copy>(
    data: &[T],
    width: usize,
    height: usize,
    dx: i64,
    dy: i64,
    fill: T,
) -> Vec<T> {
    let mut out = alloc::vec![fill; data.len()];
    for y in 0..height as i64 {
        let sy = y - dy;
        if sy < 0 || sy >= height as i64 {
            continue;
        }
        for x in 0..width as i64 {
            let sx = x - dx;
            if sx >= 0 && sx < width as i64 {
                out[(y * width as i64 + x) as usize] = data[(sy * width as i64 + sx) as usize];
            }
        }
    }
    out
}

/// Shifts a model-resolution page and its target masks by the same offset,
/// filling with blank paper.
pub fn augment_shift(page: &InkImage, masks: &[Mask], dx: i64, dy: i64) -> (InkImage, Vec<Mask>) {
    let shifted = InkImage {
        data: shift_image(&page.data, page.width, page.height, dx, dy, 0.0),
        ..page.clone()
    };
    let masks = masks
        .iter()
        .map(|m| Mask {
            data: shift_image(&m.data, m.width, m.height, dx, dy, 0),
            ..m.clone()
        })
        .collect();
    (shifted, masks)
}

/// Frames of `spec` replayed `factor` times faster (nearest-frame lookup).
pub fn stretch_features(spec: &Spectrogram, factor: f64) -> Spectrogram {
    let n = spec.len();
    if n == 0 {
        return spec.clone();
    }
    let m = (libm::round(n as f64 / factor) as usize).max(1);
    let mut out = Spectrogram {
        data: Vec::with_capacity(m * spec.n_bins),
        ..spec.clone()
    };
    for t in 0..m {
        let src = (libm::round(t as f64 * factor) as usize).min(n - 1);
        out.data.extend_from_slice(spec.frame(src));
    }
    out
}

/// The same piece performed `factor` times faster: onsets are divided by
/// `factor` and the audio is re-synthesized from the stored notes, or the
/// feature timeline is stretched when no notes are available.
///
/// # Panics
/// If `factor` is not positive.
pub fn augment_tempo(piece: &Piece, factor: f64) -> Piece {
    assert!(
        factor > 0.0 && factor.is_finite(),
        "tempo factor must be positive, got {}",
        factor
    );
    if factor == 1.0 {
        return piece.clone();
    }
    let track = piece.track.time_scaled(factor);
    let synth: Option<Vec<SynthNote>> = piece.synth.as_ref().map(|notes| {
        notes
            .iter()
            .map(|n| SynthNote {
                onset: n.onset / factor,
                duration: n.duration / factor,
                ..*n
            })
            .collect()
    });
    let front = FrontEnd::default();
    let audio = match (&piece.audio, &synth) {
        (PieceAudio::Wave(a), Some(notes)) => {
            PieceAudio::Wave(synthesize(notes, a.sample_rate, 0.5))
        }
        (PieceAudio::Features(s), Some(notes)) if !s.standardized => PieceAudio::Features(
            front.spectrogram(&synthesize(notes, crate::dsp::SAMPLE_RATE, 0.5), None),
        ),
        (PieceAudio::Features(s), _) => PieceAudio::Features(stretch_features(s, factor)),
        (PieceAudio::Wave(a), None) => {
            PieceAudio::Features(stretch_features(&front.spectrogram(a, None), factor))
        }
    };
    Piece {
        track,
        audio,
        synth,
        ..piece.clone()
    }
}
