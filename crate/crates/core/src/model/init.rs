use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{self, SeededRng};

/// Random `rows x cols` matrix with orthonormal rows (when `rows <= cols`)
/// or orthonormal columns (otherwise), row-major.
pub fn orthogonal(rows: usize, cols: usize, rng: &mut SeededRng) -> Vec<f64> {
    let (r, c) = if rows <= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let mut m: Vec<f64> = (0..r * c).map(|_| rng::normal(rng)).collect();
    // modified Gram-Schmidt over the r rows of length c
    for i in 0..r {
        for j in 0..i {
            let dot: f64 = (0..c).map(|k| m[i * c + k] * m[j * c + k]).sum();
            for k in 0..c {
                m[i * c + k] -= dot * m[j * c + k];
            }
        }
        let norm = libm::sqrt((0..c).map(|k| m[i * c + k] * m[i * c + k]).sum::<f64>());
        let norm = if norm > 1e-12 { norm } else { 1.0 };
        for k in 0..c {
            m[i * c + k] /= norm;
        }
    }
    if rows <= cols {
        m
    } else {
        let mut t = vec![0.0; rows * cols];
        for i in 0..r {
            for k in 0..c {
                t[k * cols + i] = m[i * c + k];
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(m: &[f64], rows: usize, cols: usize, by_rows: bool) -> f64 {
        let n = if by_rows { rows } else { cols };
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = if by_rows {
                    (0..cols).map(|k| m[a * cols + k] * m[b * cols + k]).sum()
                } else {
                    (0..rows).map(|k| m[k * cols + a] * m[k * cols + b]).sum()
                };
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }

    #[test]
    fn rows_orthonormal_when_wide() {
        let mut r = rng::from_seed(3);
        let m = orthogonal(8, 72, &mut r);
        assert!(gram(&m, 8, 72, true) < 1e-12);
    }

    #[test]
    fn columns_orthonormal_when_tall() {
        let mut r = rng::from_seed(4);
        let m = orthogonal(512, 32, &mut r);
        assert!(gram(&m, 512, 32, false) < 1e-12);
    }
}
