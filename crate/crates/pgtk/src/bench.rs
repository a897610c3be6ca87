//! Per-step latency measurement of the streaming tracker.

use std::time::Instant;

use pgtk_core::data::{generate_piece, GenConfig, GenError, InkImage, Piece};
use pgtk_core::dsp::Spectrogram;
use pgtk_core::model::Model;
use pgtk_core::track::Tracker;
use pgtk_core::GraphError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub steps: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub std_ms: f64,
    /// Coefficient of variation, `std / mean`.
    pub cv: f64,
    /// Mean of the first and last 100 measured steps (or fewer).
    pub head_mean_ms: f64,
    pub tail_mean_ms: f64,
}

impl BenchStats {
    pub fn from_latencies(lat_ms: &[f64], warmup: usize) -> Self {
        let n = lat_ms.len();
        let mean = lat_ms.iter().sum::<f64>() / n.max(1) as f64;
        let var = lat_ms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64;
        let mut sorted = lat_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let pct = |q: f64| {
            if n == 0 {
                0.0
            } else {
                sorted[((q * (n - 1) as f64).round() as usize).min(n - 1)]
            }
        };
        let k = n.min(100);
        let avg = |s: &[f64]| {
            if s.is_empty() {
                0.0
            } else {
                s.iter().sum::<f64>() / s.len() as f64
            }
        };
        Self {
            steps: n,
            warmup,
            mean_ms: mean,
            median_ms: pgtk_core::eval::median(lat_ms).unwrap_or(0.0),
            p95_ms: pct(0.95),
            std_ms: var.sqrt(),
            cv: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
            head_mean_ms: avg(&lat_ms[..k]),
            tail_mean_ms: avg(&lat_ms[n - k..]),
        }
    }

    /// Relative difference between the first and last 100 steps.
    pub fn drift(&self) -> f64 {
        (self.tail_mean_ms - self.head_mean_ms).abs() / self.head_mean_ms.max(f64::MIN_POSITIVE)
    }
}

/// Streams `warmup + steps` frames (cycling through `spec`) and returns
/// the wall-clock latency of the measured steps in milliseconds.
pub fn run_bench(
    model: &Model<f32>,
    page: &InkImage,
    spec: &Spectrogram,
    steps: usize,
    warmup: usize,
) -> Result<Vec<f64>, GraphError> {
    assert!(!spec.is_empty(), "benchmark needs at least one frame");
    let mut tracker = Tracker::new(model, page)?;
    let mut out = Vec::with_capacity(steps);
    for i in 0..warmup + steps {
        let frame = spec.frame(i % spec.len());
        let t0 = Instant::now();
        let p = tracker.step(frame)?;
        let dt = t0.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(&p);
        if i >= warmup {
            out.push(dt);
        }
    }
    Ok(out)
}

/// A synthetic piece on a `gen.height x gen.width` page, with staves and
/// notes per staff reduced until they fit.
pub fn bench_piece(seed: u64, gen: &GenConfig) -> Result<Piece, GenError> {
    let mut cfg = gen.clone();
    loop {
        match generate_piece(seed, &cfg) {
            Ok(p) => return Ok(p),
            Err(e) if cfg.staves > 1 && e.0.contains("staves") => cfg.staves -= 1,
            Err(e) if cfg.notes_per_staff > 1 && e.0.contains("notes") => cfg.notes_per_staff -= 1,
            Err(e) => return Err(e),
        }
    }
}
