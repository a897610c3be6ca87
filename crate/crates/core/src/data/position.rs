use alloc::vec;
use alloc::vec::Vec;

use super::types::{AlignmentTrack, Staff};

/// Score position in page pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub staff: usize,
}

/// Staves laid end to end on one horizontal axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Unrolled {
    offsets: Vec<f64>,
    staves: Vec<Staff>,
}

impl Unrolled {
    pub fn new(staves: &[Staff]) -> Self {
        let mut offsets = Vec::with_capacity(staves.len());
        let mut acc = 0.0;
        for s in staves {
            offsets.push(acc);
            acc += s.width();
        }
        Self {
            offsets,
            staves: staves.to_vec(),
        }
    }

    pub fn coord(&self, staff: usize, x: f64) -> f64 {
        let s = &self.staves[staff];
        self.offsets[staff] + (x.clamp(s.x_start, s.x_end) - s.x_start)
    }

    /// Page position of unrolled coordinate `u`, searching staves
    /// `lo..=hi`. A coordinate on a staff boundary belongs to the later staff.
    pub fn locate(&self, u: f64, lo: usize, hi: usize) -> Position {
        let mut staff = lo;
        for s in lo + 1..=hi {
            if u >= self.offsets[s] {
                staff = s;
            }
        }
        let st = &self.staves[staff];
        let x = (st.x_start + (u - self.offsets[staff])).clamp(st.x_start, st.x_end);
        Position {
            x,
            y: st.y_center,
            staff,
        }
    }

    /// Index of the staff whose center is closest to `y`; ties go to the
    /// lower index.
    pub fn nearest_staff(&self, y: f64) -> usize {
        let mut best = 0;
        for (i, s) in self.staves.iter().enumerate().skip(1) {
            if (s.y_center - y).abs() < (self.staves[best].y_center - y).abs() {
                best = i;
            }
        }
        best
    }
}

/// Ground-truth position at time `t` (seconds): linear interpolation of
/// the unrolled coordinate between the surrounding onsets, clamped to the
/// first and last event.
///
/// # Panics
/// If the track is empty.
pub fn interpolate_position(track: &AlignmentTrack, staves: &[Staff], t: f64) -> Position {
    let ev = &track.events;
    assert!(!ev.is_empty(), "interpolate_position on an empty track");
    let k = ev.partition_point(|e| e.onset <= t);
    if k == 0 {
        let e = &ev[0];
        return Position {
            x: e.x,
            y: e.y,
            staff: e.staff,
        };
    }
    let a = &ev[k - 1];
    if k == ev.len() || t == a.onset {
        return Position {
            x: a.x,
            y: a.y,
            staff: a.staff,
        };
    }
    let b = &ev[k];
    let frac = (t - a.onset) / (b.onset - a.onset);
    if a.staff == b.staff {
        return Position {
            x: a.x + frac * (b.x - a.x),
            y: a.y,
            staff: a.staff,
        };
    }
    let unrolled = Unrolled::new(staves);
    let (ua, ub) = (unrolled.coord(a.staff, a.x), unrolled.coord(b.staff, b.x));
    unrolled.locate(
        ua + frac * (ub - ua),
        a.staff.min(b.staff),
        a.staff.max(b.staff),
    )
}

/// Score time of a predicted page position: the nearest staff fixes the
/// unrolled coordinate, which is mapped back through the onset/position
/// knots of the track (clamped outside them).
///
/// # Panics
/// If the track is empty.
pub fn map_to_time(x: f64, y: f64, staves: &[Staff], track: &AlignmentTrack) -> f64 {
    let ev = &track.events;
    assert!(!ev.is_empty(), "map_to_time on an empty track");
    let unrolled = Unrolled::new(staves);
    let u = unrolled.coord(unrolled.nearest_staff(y), x);
    let knots: Vec<(f64, f64)> = ev
        .iter()
        .map(|e| (e.onset, unrolled.coord(e.staff, e.x)))
        .collect();
    if u <= knots[0].1 {
        return knots[0].0;
    }
    for w in knots.windows(2) {
        let ((ta, ua), (tb, ub)) = (w[0], w[1]);
        if ub > ua && u >= ua && u <= ub {
            return ta + (u - ua) / (ub - ua) * (tb - ta);
        }
    }
    knots[knots.len() - 1].0
}

/// Binary target mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
    /// The rectangle extended past the page and was cut.
    pub clipped: bool,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// Mask half-width rule: columns `round(x) - 4 ..= round(x) + 5`.
pub const MASK_LEFT: i64 = 4;
pub const MASK_RIGHT: i64 = 5;

/// Ten-pixel-wide rectangle at `pos.x` spanning the staff plus one staff
/// space above and below, clipped to a `width x height` page.
pub fn render_target_mask(width: usize, height: usize, staves: &[Staff], pos: Position) -> Mask {
    let staff = &staves[pos.staff];
    let margin = staff.space();
    let xi = libm::round(pos.x) as i64;
    let (c0, c1) = (xi - MASK_LEFT, xi + MASK_RIGHT + 1);
    let (r0, r1) = (
        libm::round(staff.y_top - margin) as i64,
        libm::round(staff.y_bottom + margin) as i64,
    );
    let clip = |v: i64, n: usize| v.clamp(0, n as i64) as usize;
    let (cx0, cx1, ry0, ry1) = (
        clip(c0, width),
        clip(c1, width),
        clip(r0, height),
        clip(r1, height),
    );
    let clipped = (cx0 as i64, cx1 as i64, ry0 as i64, ry1 as i64) != (c0, c1, r0, r1);
    let mut data = vec![0u8; width * height];
    for y in ry0..ry1 {
        data[y * width + cx0..y * width + cx1.max(cx0)].fill(1);
    }
    Mask {
        width,
        height,
        data,
        clipped,
    }
}
