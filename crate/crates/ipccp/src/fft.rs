//! Iterative radix-2 discrete Fourier transform.
//!
//! Only power-of-two lengths are supported; the sketch output dimension is
//! restricted to powers of two for the same reason. The kernel is generic
//! over the float width so the f32 timing path can reuse it.

use num_complex::Complex;
use num_traits::{Float, FloatConst};

use crate::error::{Error, Result};

/// Forward transform, `out_j = sum_k v_k exp(-2*pi*i*j*k/N)`.
pub fn dft(v: &[Complex<f64>]) -> Result<Vec<Complex<f64>>> {
    let mut buf = v.to_vec();
    transform(&mut buf, false)?;
    Ok(buf)
}

/// Inverse transform with the `1/N` factor; `idft(dft(v)) = v`.
pub fn idft(v: &[Complex<f64>]) -> Result<Vec<Complex<f64>>> {
    let mut buf = v.to_vec();
    transform(&mut buf, true)?;
    Ok(buf)
}

pub fn dft_real(v: &[f64]) -> Result<Vec<Complex<f64>>> {
    let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
    transform(&mut buf, false)?;
    Ok(buf)
}

/// In-place radix-2 Cooley–Tukey transform (decimation in time).
pub(crate) fn transform<T: Float + FloatConst>(
    buf: &mut [Complex<T>],
    inverse: bool,
) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::BadLength { len: n });
    }
    if n == 1 {
        return Ok(());
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { T::one() } else { -T::one() };
    let mut len = 2;
    while len <= n {
        let angle = sign * (T::PI() + T::PI()) / T::from(len).unwrap();
        let w_len = Complex::new(angle.cos(), angle.sin());
        for start in (0..n).step_by(len) {
            let mut w = Complex::new(T::one(), T::zero());
            for k in 0..len / 2 {
                let u = buf[start + k];
                let t = buf[start + k + len / 2] * w;
                buf[start + k] = u + t;
                buf[start + k + len / 2] = u - t;
                w = w * w_len;
            }
        }
        len <<= 1;
    }

    if inverse {
        let scale = T::one() / T::from(n).unwrap();
        for x in buf.iter_mut() {
            *x = x.scale(scale);
        }
    }
    Ok(())
}
