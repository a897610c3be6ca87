use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::DspError;

/// Iterative radix-2 complex FFT of a fixed power-of-two length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<(f64, f64)>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self, DspError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(DspError(format!("FFT length {} is not a power of two", n)));
        }
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * core::f64::consts::PI * k as f64 / n as f64;
                (libm::cos(a), libm::sin(a))
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| i.reverse_bits() >> (usize::BITS - bits))
            .collect();
        Ok(Self {
            n,
            twiddles,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scratch(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 0.0); self.n]
    }

    /// In-place forward transform, `X[k] = sum_n x[n] e^{-2 pi i k n / N}`.
    pub fn transform(&self, data: &mut [(f64, f64)]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let (wr, wi) = self.twiddles[k * step];
                    let (ar, ai) = data[start + k];
                    let (br, bi) = data[start + k + len / 2];
                    let (tr, ti) = (br * wr - bi * wi, br * wi + bi * wr);
                    data[start + k] = (ar + tr, ai + ti);
                    data[start + k + len / 2] = (ar - tr, ai - ti);
                }
            }
            len <<= 1;
        }
    }

    /// `|X[k]|` for `k in 0..=N/2` of a real input.
    pub fn magnitude(&self, input: &[f64], scratch: &mut Vec<(f64, f64)>, out: &mut [f64]) {
        scratch.clear();
        scratch.extend(input.iter().map(|&x| (x, 0.0)));
        scratch.resize(self.n, (0.0, 0.0));
        self.transform(scratch);
        for (o, &(re, im)) in out.iter_mut().zip(scratch.iter()).take(self.n / 2 + 1) {
            *o = libm::hypot(re, im);
        }
    }
}
