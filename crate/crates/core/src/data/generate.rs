use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::GrayImage;
use super::types::{AlignEvent, AlignmentTrack, Piece, PieceAudio, ScorePage, Staff, SynthNote};
use crate::dsp::{AudioSignal, FrontEnd, SAMPLE_RATE};
use crate::rng;

/// Lowest and highest notehead position, in half staff spaces above the
/// bottom line (E4 on a treble staff).
pub const PITCH_STEPS: (i32, i32) = (-4, 12);

/// Synthetic piece parameters. Sizes are at model resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub height: usize,
    pub width: usize,
    pub downscale: usize,
    pub staves: usize,
    pub notes_per_staff: usize,
    pub notes_per_bar: usize,
    /// Tempo range in beats per minute.
    pub tempo_min: f64,
    pub tempo_max: f64,
    /// Copy one bar's notes (and rhythm) to a second page location.
    pub ambiguity: bool,
    /// Emit precomputed filterbank frames instead of a waveform.
    pub features: bool,
    pub dpi: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            height: 192,
            width: 256,
            downscale: 3,
            staves: 3,
            notes_per_staff: 12,
            notes_per_bar: 4,
            tempo_min: 100.0,
            tempo_max: 140.0,
            ambiguity: false,
            features: false,
            dpi: 72,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenError(pub String);

impl fmt::Display for GenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot generate piece: {}", self.0)
    }
}

impl core::error::Error for GenError {}

pub fn midi_to_hz(midi: u8) -> f64 {
    440.0 * libm::pow(2.0, (midi as f64 - 69.0) / 12.0)
}

fn step_to_midi(step: i32) -> u8 {
    const SCALE: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
    // step 0 is E4, the third degree of C4's octave
    let d = step + 2;
    (60 + 12 * d.div_euclid(7) + SCALE[d.rem_euclid(7) as usize]) as u8
}

/// Pixel layout shared by every staff, in full-resolution pixels.
struct Layout {
    width: usize,
    height: usize,
    space: i64,
    line: i64,
    x_start: i64,
    x_end: i64,
    first_slot: i64,
    slot: i64,
    centers: Vec<i64>,
}

impl Layout {
    fn new(cfg: &GenConfig) -> Result<Self, GenError> {
        let ds = cfg.downscale as i64;
        if cfg.downscale == 0 || cfg.height < 16 || cfg.width < 16 {
            return Err(GenError(
                "page must be at least 16x16 at model resolution".into(),
            ));
        }
        if cfg.staves == 0 || cfg.notes_per_staff == 0 || cfg.notes_per_bar == 0 {
            return Err(GenError(
                "staves, notes per staff and notes per bar must be positive".into(),
            ));
        }
        if !(cfg.tempo_min > 0.0 && cfg.tempo_max >= cfg.tempo_min) {
            return Err(GenError("invalid tempo range".into()));
        }
        let (width, height) = (cfg.width * cfg.downscale, cfg.height * cfg.downscale);
        let space = 4 * ds;
        let line = (2 * ds / 3).max(1);
        let x_start = libm::round(width as f64 * 0.06) as i64;
        let x_end = width as i64 - x_start;
        let first_slot = x_start + 3 * space;
        let slot = (x_end - first_slot) / cfg.notes_per_staff as i64;
        if slot < 3 * space {
            return Err(GenError(format!(
                "{} notes do not fit on a staff of {} px",
                cfg.notes_per_staff,
                x_end - x_start
            )));
        }
        // staff plus room for ledger-line notes and stems on both sides
        let reach = 2 * space + 4 * space;
        let pitch = height as i64 / cfg.staves as i64;
        if pitch < 2 * reach {
            return Err(GenError(format!(
                "{} staves do not fit in {} px",
                cfg.staves, height
            )));
        }
        let centers = (0..cfg.staves as i64)
            .map(|i| (2 * i + 1) * height as i64 / (2 * cfg.staves as i64))
            .collect();
        Ok(Self {
            width,
            height,
            space,
            line,
            x_start,
            x_end,
            first_slot,
            slot,
            centers,
        })
    }

    fn note_x(&self, j: usize) -> i64 {
        self.first_slot + self.slot * j as i64 + self.slot / 2
    }

    fn bar_x(&self, j: usize) -> i64 {
        self.first_slot + self.slot * j as i64
    }

    fn staff(&self, i: usize) -> Staff {
        let c = self.centers[i];
        Staff {
            y_center: c as f64,
            y_top: (c - 2 * self.space) as f64,
            y_bottom: (c + 2 * self.space) as f64,
            x_start: self.x_start as f64,
            x_end: self.x_end as f64,
        }
    }
}

struct Canvas {
    width: usize,
    height: usize,
    ink: Vec<u8>,
}

impl Canvas {
    fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64) {
        let (x0, x1) = (
            x0.clamp(0, self.width as i64) as usize,
            x1.clamp(0, self.width as i64) as usize,
        );
        let (y0, y1) = (
            y0.clamp(0, self.height as i64) as usize,
            y1.clamp(0, self.height as i64) as usize,
        );
        for y in y0..y1 {
            self.ink[y * self.width + x0..y * self.width + x1.max(x0)].fill(1);
        }
    }

    fn fill_ellipse(&mut self, cx: i64, cy: i64, rx: f64, ry: f64) {
        let (rxi, ryi) = (libm::ceil(rx) as i64, libm::ceil(ry) as i64);
        for y in cy - ryi..=cy + ryi {
            for x in cx - rxi..=cx + rxi {
                let (dx, dy) = ((x - cx) as f64 / rx, (y - cy) as f64 / ry);
                if dx * dx + dy * dy <= 1.0
                    && x >= 0
                    && y >= 0
                    && (x as usize) < self.width
                    && (y as usize) < self.height
                {
                    self.ink[y as usize * self.width + x as usize] = 1;
                }
            }
        }
    }

    fn into_image(self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self
                .ink
                .iter()
                .map(|&v| if v != 0 { 0 } else { 255 })
                .collect(),
        }
    }
}

fn draw_note(c: &mut Canvas, l: &Layout, staff: &Staff, x: i64, step: i32) {
    let sp = l.space;
    let bottom = staff.y_bottom as i64;
    let y = bottom - step as i64 * sp / 2;
    let rx = 0.65 * sp as f64;
    let ry = 0.5 * sp as f64;
    c.fill_ellipse(x, y, rx, ry);
    let half_ledger = libm::ceil(rx) as i64 + sp / 4;
    let mut ledger = |s: i32| {
        let ly = bottom - s as i64 * sp / 2;
        c.fill_rect(
            x - half_ledger,
            ly - l.line / 2,
            x + half_ledger,
            ly - l.line / 2 + l.line,
        );
    };
    for s in (PITCH_STEPS.0..=-2).filter(|s| s % 2 == 0 && *s >= step) {
        ledger(s);
    }
    for s in (10..=PITCH_STEPS.1).filter(|s| s % 2 == 0 && *s <= step) {
        ledger(s);
    }
    let stem = 7 * sp / 2;
    let rxi = libm::floor(rx) as i64;
    if step < 4 {
        c.fill_rect(x + rxi - l.line, y - stem, x + rxi, y);
    } else {
        c.fill_rect(x - rxi, y, x - rxi + l.line, y + stem);
    }
}

/// Additive synthesis: fundamental plus two harmonics with an exponential
/// decay, a short attack and a release after the note's duration.
pub fn synthesize(notes: &[SynthNote], sample_rate: u32, tail: f64) -> AudioSignal {
    let end = notes
        .iter()
        .map(|n| n.onset + n.duration)
        .fold(0.0, f64::max)
        + tail;
    let n = libm::ceil(end * sample_rate as f64) as usize;
    let mut out = vec![0.0f64; n];
    let sr = sample_rate as f64;
    let (attack, release, decay) = (0.005, 0.03, 0.4);
    for note in notes {
        let f0 = midi_to_hz(note.midi);
        let start = libm::round(note.onset * sr) as usize;
        let len = libm::ceil((note.duration + release) * sr) as usize;
        for i in 0..len.min(n.saturating_sub(start)) {
            let t = i as f64 / sr;
            let mut env = libm::exp(-t / decay) * (t / attack).min(1.0);
            if t > note.duration {
                env *= 1.0 - (t - note.duration) / release;
            }
            let mut v = 0.0;
            for (k, amp) in [(1.0, 1.0), (2.0, 0.5), (3.0, 0.25)] {
                if f0 * k < sr / 2.0 {
                    v += amp * libm::sin(2.0 * core::f64::consts::PI * f0 * k * t);
                }
            }
            out[start + i] += 0.15 * note.velocity as f64 * env * v;
        }
    }
    AudioSignal::new(
        out.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect(),
        sample_rate,
    )
}

/// Synthetic one-page piece: staves of noteheads in bars, a matching
/// alignment and a synthesized performance. Deterministic in `seed`.
pub fn generate_piece(seed: u64, cfg: &GenConfig) -> Result<Piece, GenError> {
    let l = Layout::new(cfg)?;
    let mut rng = rng::split(seed, "generate");
    let n_staff = cfg.notes_per_staff;
    let total = cfg.staves * n_staff;
    let bars_per_staff = n_staff.div_ceil(cfg.notes_per_bar);

    let mut steps = Vec::with_capacity(total);
    let mut step = rng.gen_range(0..=8);
    for _ in 0..total {
        step = (step + rng.gen_range(-3..=3)).clamp(PITCH_STEPS.0, PITCH_STEPS.1);
        steps.push(step);
    }
    let tempo = rng.gen_range(cfg.tempo_min..=cfg.tempo_max);
    let beat = 60.0 / tempo;
    let mut iois: Vec<f64> = (0..total)
        .map(|_| if rng.gen_bool(0.3) { 0.5 * beat } else { beat })
        .collect();
    let velocities: Vec<f32> = (0..total).map(|_| rng.gen_range(0.6..1.0)).collect();

    let mut duplicated_bars = None;
    if cfg.ambiguity {
        let full_bars: Vec<(usize, usize)> = (0..cfg.staves)
            .flat_map(|s| (0..bars_per_staff).map(move |b| (s, b)))
            .filter(|&(_, b)| (b + 1) * cfg.notes_per_bar <= n_staff)
            .collect();
        if full_bars.len() < 2 {
            return Err(GenError(
                "ambiguity mode needs at least two complete bars".into(),
            ));
        }
        let a = full_bars[rng.gen_range(0..full_bars.len())];
        let others: Vec<_> = full_bars
            .iter()
            .copied()
            .filter(|&(s, b)| s != a.0 || b.abs_diff(a.1) > 1)
            .collect();
        let others = if others.is_empty() {
            full_bars.iter().copied().filter(|&x| x != a).collect()
        } else {
            others
        };
        let b = others[rng.gen_range(0..others.len())];
        for k in 0..cfg.notes_per_bar {
            let src = a.0 * n_staff + a.1 * cfg.notes_per_bar + k;
            let dst = b.0 * n_staff + b.1 * cfg.notes_per_bar + k;
            steps[dst] = steps[src];
            iois[dst] = iois[src];
        }
        duplicated_bars = Some([a, b]);
    }

    let staves: Vec<Staff> = (0..cfg.staves).map(|i| l.staff(i)).collect();
    let mut canvas = Canvas {
        width: l.width,
        height: l.height,
        ink: vec![0; l.width * l.height],
    };
    for st in &staves {
        for k in 0..5 {
            let y = st.y_top as i64 + k * l.space;
            canvas.fill_rect(l.x_start, y - l.line / 2, l.x_end, y - l.line / 2 + l.line);
        }
        let bar = |x: i64, c: &mut Canvas| {
            c.fill_rect(
                x - l.line / 2,
                st.y_top as i64,
                x - l.line / 2 + l.line,
                st.y_bottom as i64 + 1,
            )
        };
        bar(l.x_start, &mut canvas);
        for b in 1..bars_per_staff {
            bar(l.bar_x(b * cfg.notes_per_bar), &mut canvas);
        }
        bar(l.x_end, &mut canvas);
    }

    let mut events = Vec::with_capacity(total);
    let mut notes = Vec::with_capacity(total);
    let mut t = 0.5;
    for (i, &step) in steps.iter().enumerate() {
        let (s, j) = (i / n_staff, i % n_staff);
        let x = l.note_x(j);
        draw_note(&mut canvas, &l, &staves[s], x, step);
        events.push(AlignEvent {
            onset: t,
            x: x as f64,
            y: staves[s].y_center,
            staff: s,
        });
        notes.push(SynthNote {
            onset: t,
            duration: iois[i],
            midi: step_to_midi(step),
            velocity: velocities[i],
        });
        t += iois[i];
    }

    let wave = synthesize(&notes, SAMPLE_RATE, 0.5);
    let audio = if cfg.features {
        PieceAudio::Features(FrontEnd::default().spectrogram(&wave, None))
    } else {
        PieceAudio::Wave(wave)
    };
    Ok(Piece {
        id: format!("piece_{:016x}", seed),
        page: ScorePage {
            image: canvas.into_image(),
            staves,
            dpi: cfg.dpi,
            downscale: cfg.downscale,
        },
        track: AlignmentTrack { events },
        audio,
        synth: Some(notes),
        duplicated_bars,
    })
}

/// Full-resolution x range `[start, end)` of bar `bar` for a layout
/// generated with `cfg`, used to compare duplicated bars.
pub fn bar_extent(cfg: &GenConfig, bar: usize) -> Option<(usize, usize)> {
    let l = Layout::new(cfg).ok()?;
    let start = l.bar_x(bar * cfg.notes_per_bar);
    let end = l.bar_x(((bar + 1) * cfg.notes_per_bar).min(cfg.notes_per_staff));
    Some((start as usize, end as usize))
}

#[cfg(test)]
pub(crate) fn test_step_to_midi(step: i32) -> u8 {
    step_to_midi(step)
}
