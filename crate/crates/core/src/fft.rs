//! Radix-2 FFT over `Complex<f64>`.
//!
//! The pipeline only ever transforms power-of-two windows (1024 by
//! default), so a plain iterative radix-2 butterfly is all we need.
//! Accumulation stays in double precision; callers downconvert to f32
//! at storage boundaries.

use num_complex::Complex;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// In-place forward DFT, unnormalized: X[k] = sum_j x[j] e^{-i 2 pi j k / n}.
pub fn fft(buf: &mut [Complex<f64>]) -> Result<()> {
    transform(buf, -1.0)
}

/// In-place inverse DFT with 1/n normalization.
pub fn ifft(buf: &mut [Complex<f64>]) -> Result<()> {
    transform(buf, 1.0)?;
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

fn transform(buf: &mut [Complex<f64>], sign: f64) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::config(format!(
            "fft length must be a nonzero power of two, got {n}"
        )));
    }

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            buf.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let wlen = Complex::new(ang.cos(), ang.sin());
        for chunk in buf.chunks_mut(len) {
            let mut w = Complex::new(1.0, 0.0);
            let (lo, hi) = chunk.split_at_mut(len / 2);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
                w *= wlen;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Reorder FFT bins so the zero-frequency bin lands at index n/2.
///
/// For even n this is a rotation by n/2 and its own inverse.
pub fn fftshift<T: Copy>(v: &mut [T]) {
    let n = v.len();
    v.rotate_left(n / 2);
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct O(n^2) DFT, the independence oracle for the fast transform.
    fn dft(x: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex::new(0.0, 0.0);
                for (j, &xj) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (j as f64) * (k as f64) / n as f64;
                    acc += xj * Complex::new(ang.cos(), ang.sin());
                }
                acc
            })
            .collect()
    }

    fn rand_signal(n: usize, seed: u64) -> Vec<Complex<f64>> {
        // Small LCG keeps the test free of RNG crates.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..n)
            .map(|_| {
                let mut next = || {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                };
                Complex::new(next(), next())
            })
            .collect()
    }

    #[test]
    fn fft_matches_direct_dft() {
        for &n in &[2usize, 8, 64, 1024] {
            let x = rand_signal(n, n as u64);
            let mut y = x.clone();
            fft(&mut y).unwrap();
            let want = dft(&x);
            for (a, b) in y.iter().zip(want.iter()) {
                assert!((a - b).norm() < 1e-9 * (n as f64), "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ifft_inverts_fft() {
        let x = rand_signal(256, 7);
        let mut y = x.clone();
        fft(&mut y).unwrap();
        ifft(&mut y).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let mut x = vec![Complex::new(0.0, 0.0); 100];
        assert!(matches!(fft(&mut x), Err(Error::Config(_))));
    }

    #[test]
    fn fftshift_is_involution_for_even_len() {
        let orig: Vec<u32> = (0..16).collect();
        let mut v = orig.clone();
        fftshift(&mut v);
        assert_eq!(v[0], 8);
        fftshift(&mut v);
        assert_eq!(v, orig);
    }
}
