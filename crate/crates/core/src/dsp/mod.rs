//! Audio front end: framing, STFT magnitudes, a semi-logarithmic
//! triangular filterbank and log compression with standardization.

mod fft;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use fft::Fft;

pub const SAMPLE_RATE: u32 = 22050;
pub const FPS: u32 = 20;
pub const WINDOW: usize = 2048;
pub const N_BINS: usize = 78;
pub const FMIN: f64 = 60.0;
pub const FMAX: f64 = 6000.0;
pub const BANDS_PER_OCTAVE: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DspError(pub String);

impl fmt::Display for DspError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::error::Error for DspError {}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Sample index at the center of frame `t`: `round(t * sr / fps)`,
/// computed exactly in integers (halves round up).
pub fn frame_center(t: usize, sample_rate: u32, fps: u32) -> usize {
    let (sr, fps) = (sample_rate as u128, fps as u128);
    ((2 * t as u128 * sr + fps) / (2 * fps)) as usize
}

/// Number of frames whose center lies inside a signal of `n` samples.
pub fn frame_count(n: usize, sample_rate: u32, fps: u32) -> usize {
    if n == 0 {
        return 0;
    }
    // largest t with center(t) <= n - 1
    let mut t = ((n as u128 - 1) * fps as u128 / sample_rate as u128) as usize;
    while frame_center(t + 1, sample_rate, fps) < n {
        t += 1;
    }
    while t > 0 && frame_center(t, sample_rate, fps) >= n {
        t -= 1;
    }
    t + 1
}

/// Symmetric Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * core::f64::consts::PI * i as f64 / (n - 1) as f64))
        .collect()
}

/// Extracts the window of `len` samples centered at frame `t` (starting
/// `len / 2` samples before the center), zero-padded outside the signal.
pub fn frame_at(
    samples: &[f32],
    t: usize,
    sample_rate: u32,
    fps: u32,
    len: usize,
    out: &mut [f64],
) {
    let center = frame_center(t, sample_rate, fps) as isize;
    let start = center - (len / 2) as isize;
    for (i, o) in out[..len].iter_mut().enumerate() {
        let s = start + i as isize;
        *o = if s >= 0 && (s as usize) < samples.len() {
            samples[s as usize] as f64
        } else {
            0.0
        };
    }
}

/// Splits audio into Hann-windowed frames of `window` samples at `fps`.
pub fn frame_signal(audio: &AudioSignal, fps: u32, window: usize) -> Vec<Vec<f64>> {
    let w = hann(window);
    (0..frame_count(audio.samples.len(), audio.sample_rate, fps))
        .map(|t| {
            let mut buf = vec![0.0; window];
            frame_at(&audio.samples, t, audio.sample_rate, fps, window, &mut buf);
            buf.iter_mut().zip(&w).for_each(|(x, h)| *x *= h);
            buf
        })
        .collect()
}

/// Magnitudes of DFT bins `0..=n/2` of each window.
pub fn stft_magnitude(windows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DspError> {
    let Some(first) = windows.first() else {
        return Ok(Vec::new());
    };
    let fft = Fft::new(first.len())?;
    let mut scratch = fft.scratch();
    windows
        .iter()
        .map(|w| {
            if w.len() != fft.len() {
                return Err(DspError(format!(
                    "window of {} samples, expected {}",
                    w.len(),
                    fft.len()
                )));
            }
            let mut mag = vec![0.0; fft.len() / 2 + 1];
            fft.magnitude(w, &mut scratch, &mut mag);
            Ok(mag)
        })
        .collect()
}

/// Triangular filters over DFT magnitude bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    /// Row-major `[n_filters, n_fft_bins]`.
    pub weights: Vec<f64>,
    pub n_fft_bins: usize,
    /// Center DFT bin of every filter.
    pub center_bins: Vec<usize>,
    pub center_hz: Vec<f64>,
}

impl Filterbank {
    pub fn n_filters(&self) -> usize {
        self.center_bins.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_fft_bins..(i + 1) * self.n_fft_bins]
    }

    pub fn apply(&self, mag: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n_filters()) {
            *o = self.row(i).iter().zip(mag).map(|(w, m)| w * m).sum();
        }
    }

    /// The reference 78-filter bank for 2048-point frames at 22.05 kHz.
    pub fn reference() -> Self {
        build_semilog_filterbank(SAMPLE_RATE, WINDOW, FMIN, FMAX, N_BINS)
            .expect("reference filterbank")
    }
}

/// Log-spaced (12 per octave) target frequencies from `fmin` up to `fmax`
/// snapped to DFT bins, with duplicate bins merged. The count is then
/// fitted to `bins`: surplus filters are dropped from the top, missing
/// ones are added by filling the lowest gaps in the bin sequence (the
/// bin right above a center whose successor is more than one bin away).
/// Each filter is a triangle reaching zero at its neighbours' centers,
/// normalized to unit sum.
pub fn build_semilog_filterbank(
    sample_rate: u32,
    n_fft: usize,
    fmin: f64,
    fmax: f64,
    bins: usize,
) -> Result<Filterbank, DspError> {
    if !(fmin > 0.0 && fmax > fmin && fmax <= sample_rate as f64 / 2.0) || n_fft < 4 || bins < 2 {
        return Err(DspError(format!(
            "invalid filterbank range {}..{} Hz",
            fmin, fmax
        )));
    }
    let hz_per_bin = sample_rate as f64 / n_fft as f64;
    let n_fft_bins = n_fft / 2 + 1;
    let lo = libm::ceil(fmin / hz_per_bin) as usize;
    let hi = libm::floor(fmax / hz_per_bin) as usize;
    let mut centers: Vec<usize> = Vec::new();
    let mut k = 0;
    loop {
        let f = fmin * libm::pow(2.0, k as f64 / BANDS_PER_OCTAVE as f64);
        if f > fmax * (1.0 + 1e-12) {
            break;
        }
        let b = (libm::round(f / hz_per_bin) as usize).clamp(lo, hi);
        if centers.last() != Some(&b) {
            centers.push(b);
        }
        k += 1;
    }
    centers.truncate(bins);
    while centers.len() < bins {
        let Some(gap) = centers.windows(2).position(|w| w[1] - w[0] > 1) else {
            return Err(DspError(format!(
                "{} filters unreachable with {} DFT bins between {} and {} Hz",
                bins, n_fft, fmin, fmax
            )));
        };
        centers.insert(gap + 1, centers[gap] + 1);
    }
    let mut weights = vec![0.0; bins * n_fft_bins];
    for i in 0..bins {
        let c = centers[i];
        let left = if i > 0 {
            centers[i - 1]
        } else {
            c.saturating_sub(centers[1] - c)
        };
        let right = if i + 1 < bins {
            centers[i + 1]
        } else {
            (c + (c - centers[i - 1])).min(n_fft_bins - 1)
        };
        let row = &mut weights[i * n_fft_bins..(i + 1) * n_fft_bins];
        row[c] = 1.0;
        for (b, w) in row.iter_mut().enumerate().take(c).skip(left + 1) {
            *w = (b - left) as f64 / (c - left) as f64;
        }
        for (b, w) in row.iter_mut().enumerate().take(right).skip(c + 1) {
            *w = (right - b) as f64 / (right - c) as f64;
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= s);
    }
    let center_hz = centers.iter().map(|&b| b as f64 * hz_per_bin).collect();
    Ok(Filterbank {
        weights,
        n_fft_bins,
        center_bins: centers,
        center_hz,
    })
}

/// Per-bin standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormStats {
    /// Zero mean, unit std: leaves frames unchanged.
    pub fn identity(n_bins: usize) -> Self {
        Self {
            mean: vec![0.0; n_bins],
            std: vec![1.0; n_bins],
        }
    }

    /// Statistics over all frames of the given (unstandardized) spectrograms.
    /// Bins with zero variance get std 1.
    pub fn fit<'a>(specs: impl IntoIterator<Item = &'a Spectrogram>) -> Result<Self, DspError> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let specs: Vec<&Spectrogram> = specs.into_iter().collect();
        for s in &specs {
            if sum.is_empty() {
                sum = vec![0.0; s.n_bins];
            }
            if s.n_bins != sum.len() {
                return Err(DspError("spectrograms with different bin counts".into()));
            }
            for f in s.frames() {
                for (a, &x) in sum.iter_mut().zip(f) {
                    *a += x as f64;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(DspError(
                "no frames to compute normalization statistics".into(),
            ));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        sq.resize(mean.len(), 0.0);
        for s in &specs {
            for f in s.frames() {
                for ((a, &x), m) in sq.iter_mut().zip(f).zip(&mean) {
                    let d = x as f64 - m;
                    *a += d * d;
                }
            }
        }
        let std = sq
            .iter()
            .map(|v| {
                let s = libm::sqrt(v / n as f64) as f32;
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            mean: mean.iter().map(|&m| m as f32).collect(),
            std,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.mean.len() != self.std.len() {
            return Err(DspError("mean and std lengths differ".into()));
        }
        if self.std.iter().any(|&s| !(s > 0.0 && s.is_finite()))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(DspError("std must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn standardize(&self, frame: &mut [f32]) {
        for ((x, m), s) in frame.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }
}

/// Time-major sequence of filterbank frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// Frame-major `[n_frames, n_bins]`.
    pub data: Vec<f32>,
    pub n_bins: usize,
    pub fps: f64,
    pub standardized: bool,
}

impl Spectrogram {
    pub fn new(
        data: Vec<f32>,
        n_bins: usize,
        fps: f64,
        standardized: bool,
    ) -> Result<Self, DspError> {
        if n_bins == 0 || data.len() % n_bins != 0 {
            return Err(DspError(format!(
                "{} values do not form frames of {} bins",
                data.len(),
                n_bins
            )));
        }
        Ok(Self {
            data,
            n_bins,
            fps,
            standardized,
        })
    }

    pub fn empty(n_bins: usize, fps: f64) -> Self {
        Self {
            data: Vec::new(),
            n_bins,
            fps,
            standardized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_bins
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.n_bins)
    }

    pub fn push(&mut self, frame: &[f32]) {
        assert_eq!(frame.len(), self.n_bins);
        self.data.extend_from_slice(frame);
    }

    /// First `n` frames.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            data: self.data[..n * self.n_bins].to_vec(),
            ..self.clone()
        }
    }

    /// Returns a standardized copy (no-op if already standardized).
    pub fn standardized_with(&self, stats: &NormStats) -> Self {
        let mut out = self.clone();
        if !self.standardized {
            out.data
                .chunks_exact_mut(self.n_bins)
                .for_each(|f| stats.standardize(f));
            out.standardized = true;
        }
        out
    }

    /// `[bins, len]` window (bin-major) of the `len` frames ending at `t`,
    /// zeros before the first frame.
    pub fn window_ending_at(&self, t: usize, len: usize) -> Vec<f32> {
        let mut out = vec![0.0; self.n_bins * len];
        for j in 0..len {
            let Some(src) = (t + j + 1).checked_sub(len) else {
                continue;
            };
            if src >= self.len() {
                continue;
            }
            for (b, &v) in self.frame(src).iter().enumerate() {
                out[b * len + j] = v;
            }
        }
        out
    }
}

/// Reusable front end turning audio into filterbank frames.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub fft: Fft,
    pub window: Vec<f64>,
    pub filterbank: Filterbank,
    pub fps: u32,
}

impl Default for FrontEnd {
    fn default() -> Self {
        Self::new(WINDOW, FPS, Filterbank::reference()).expect("reference front end")
    }
}

impl FrontEnd {
    pub fn new(window: usize, fps: u32, filterbank: Filterbank) -> Result<Self, DspError> {
        if filterbank.n_fft_bins != window / 2 + 1 {
            return Err(DspError("filterbank does not match the window size".into()));
        }
        Ok(Self {
            fft: Fft::new(window)?,
            window: hann(window),
            filterbank,
            fps,
        })
    }

    /// Compressed (`ln(1 + x)`) filterbank frame `t` of `samples`.
    pub fn frame(
        &self,
        samples: &[f32],
        sample_rate: u32,
        t: usize,
        scratch: &mut FrameScratch,
    ) -> Vec<f32> {
        let n = self.window.len();
        scratch.buf.resize(n, 0.0);
        scratch.mag.resize(n / 2 + 1, 0.0);
        scratch.bands.resize(self.filterbank.n_filters(), 0.0);
        frame_at(samples, t, sample_rate, self.fps, n, &mut scratch.buf);
        scratch
            .buf
            .iter_mut()
            .zip(&self.window)
            .for_each(|(x, w)| *x *= w);
        self.fft
            .magnitude(&scratch.buf, &mut scratch.fft, &mut scratch.mag);
        self.filterbank.apply(&scratch.mag, &mut scratch.bands);
        scratch
            .bands
            .iter()
            .map(|&x| libm::log1p(x) as f32)
            .collect()
    }

    pub fn spectrogram(&self, audio: &AudioSignal, stats: Option<&NormStats>) -> Spectrogram {
        let mut scratch = FrameScratch::default();
        let n = frame_count(audio.samples.len(), audio.sample_rate, self.fps);
        let mut spec = Spectrogram::empty(self.filterbank.n_filters(), self.fps as f64);
        spec.data.reserve(n * spec.n_bins);
        for t in 0..n {
            let f = self.frame(&audio.samples, audio.sample_rate, t, &mut scratch);
            spec.push(&f);
        }
        match stats {
            Some(s) => spec.standardized_with(s),
            None => spec,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FrameScratch {
    buf: Vec<f64>,
    mag: Vec<f64>,
    bands: Vec<f64>,
    fft: Vec<(f64, f64)>,
}

/// Filterbank, `ln(1 + x)` and optional standardization with the
/// reference front end.
pub fn spectrogram(audio: &AudioSignal, stats: Option<&NormStats>) -> Spectrogram {
    FrontEnd::default().spectrogram(audio, stats)
}

#[cfg(test)]
mod tests;
