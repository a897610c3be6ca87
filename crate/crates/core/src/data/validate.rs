use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::types::{Piece, PieceAudio};

/// A broken invariant found while checking a piece.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub piece: String,
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.piece, self.invariant, self.detail)
    }
}

/// Checks every invariant of a piece and lists all violations.
pub fn validate_piece(p: &Piece) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |invariant: &'static str, detail: String| {
        out.push(Violation {
            piece: p.id.clone(),
            invariant,
            detail,
        })
    };
    let img = &p.page.image;
    if img.pixels.len() != img.width * img.height || img.width == 0 || img.height == 0 {
        bad(
            "page_size",
            format!(
                "{}x{} image with {} pixels",
                img.width,
                img.height,
                img.pixels.len()
            ),
        );
    }
    if p.page.downscale == 0 {
        bad("downscale_positive", "downscale factor is zero".into());
    } else if img.width / p.page.downscale < 16 || img.height / p.page.downscale < 16 {
        bad(
            "page_min_size",
            format!(
                "{}x{} page is below 16x16 after downscaling",
                img.width, img.height
            ),
        );
    }
    if p.page.staves.is_empty() {
        bad("staves_nonempty", "page has no staves".into());
    }
    for (i, s) in p.page.staves.iter().enumerate() {
        let finite = [s.y_center, s.y_top, s.y_bottom, s.x_start, s.x_end]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(s.y_top < s.y_center && s.y_center < s.y_bottom && s.x_start < s.x_end) {
            bad(
                "staff_geometry",
                format!("staff {} has inconsistent extents", i),
            );
        }
        if s.y_top < 0.0
            || s.y_bottom > img.height as f64
            || s.x_start < 0.0
            || s.x_end > img.width as f64
        {
            bad("staff_in_page", format!("staff {} leaves the page", i));
        }
        if i > 0 && p.page.staves[i - 1].y_bottom >= s.y_top {
            bad(
                "staves_ordered",
                format!("staff {} overlaps or precedes staff {}", i, i - 1),
            );
        }
    }
    let ev = &p.track.events;
    if ev.is_empty() {
        bad("track_nonempty", "alignment has no events".into());
    }
    for (i, e) in ev.iter().enumerate() {
        if !(e.onset.is_finite() && e.x.is_finite() && e.y.is_finite()) || e.onset < 0.0 {
            bad("event_finite", format!("event {} has invalid values", i));
            continue;
        }
        if i > 0 && e.onset < ev[i - 1].onset {
            bad(
                "onsets_sorted",
                format!("event {} at {} s precedes event {}", i, e.onset, i - 1),
            );
        }
        let Some(s) = p.page.staves.get(e.staff) else {
            bad(
                "event_staff",
                format!("event {} refers to missing staff {}", i, e.staff),
            );
            continue;
        };
        if (e.y - s.y_center).abs() > 1e-6 {
            bad(
                "event_y_is_staff_center",
                format!(
                    "event {} y {} differs from staff center {}",
                    i, e.y, s.y_center
                ),
            );
        }
        if e.x < s.x_start || e.x > s.x_end {
            bad(
                "event_inside_staff",
                format!("event {} x {} outside staff {}", i, e.x, e.staff),
            );
        }
        if i > 0 && ev[i - 1].staff == e.staff && e.x < ev[i - 1].x {
            bad(
                "x_nondecreasing_within_staff",
                format!("event {} moves left on staff {}", i, e.staff),
            );
        }
        if i > 0 && e.staff < ev[i - 1].staff {
            bad(
                "staves_in_reading_order",
                format!("event {} returns to staff {}", i, e.staff),
            );
        }
    }
    let duration = p.audio.duration();
    if let Some(last) = ev.last() {
        if last.onset > duration {
            bad(
                "track_within_audio",
                format!("last onset {} s beyond {} s of audio", last.onset, duration),
            );
        }
    }
    match &p.audio {
        PieceAudio::Wave(a) => {
            if a.sample_rate != crate::dsp::SAMPLE_RATE {
                bad(
                    "sample_rate",
                    format!(
                        "{} Hz audio, expected {}",
                        a.sample_rate,
                        crate::dsp::SAMPLE_RATE
                    ),
                );
            }
            if a.samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0) {
                bad("samples_in_range", "samples outside [-1, 1]".into());
            }
        }
        PieceAudio::Features(s) => {
            if s.n_bins != crate::dsp::N_BINS {
                bad(
                    "feature_bins",
                    format!(
                        "{} bins per frame, expected {}",
                        s.n_bins,
                        crate::dsp::N_BINS
                    ),
                );
            }
            if s.data.iter().any(|v| !v.is_finite()) {
                bad("features_finite", "non-finite feature values".into());
            }
        }
    }
    out
}
