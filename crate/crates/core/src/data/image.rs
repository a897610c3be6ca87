use alloc::vec;
use alloc::vec::Vec;

/// 8-bit grayscale image, 255 = white paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![255; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Ink image (`1 - gray / 255`) reduced by `factor` with box averaging;
    /// trailing rows/columns that do not fill a box are dropped.
    pub fn to_ink(&self, factor: usize) -> InkImage {
        let factor = factor.max(1);
        let (h, w) = (self.height / factor, self.width / factor);
        let mut data = vec![0.0f32; h * w];
        let norm = 1.0 / (255.0 * (factor * factor) as f32);
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0u32;
                for dy in 0..factor {
                    let row = &self.pixels[(y * factor + dy) * self.width + x * factor..][..factor];
                    sum += row.iter().map(|&p| 255 - p as u32).sum::<u32>();
                }
                data[y * w + x] = sum as f32 * norm;
            }
        }
        InkImage {
            width: w,
            height: h,
            data,
        }
    }
}

/// Row-major image of ink coverage in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InkImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl InkImage {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn to_gray(&self) -> GrayImage {
        let pixels = self
            .data
            .iter()
            .map(|&v| (255.0 * (1.0 - v.clamp(0.0, 1.0)) + 0.5) as u8)
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}
