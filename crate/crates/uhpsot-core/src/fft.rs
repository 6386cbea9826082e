//! Thin 2-D FFT layer over rustfft. One engine is reused per tracker so
//! plans are cached.

use ndarray::Array2;
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::num::Real;

pub struct FftEngine<T: Real> {
    planner: FftPlanner<T>,
}

impl<T: Real> Default for FftEngine<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> FftEngine<T> {
    pub fn new() -> Self {
        FftEngine {
            planner: FftPlanner::new(),
        }
    }

    fn transform(&mut self, data: &mut Array2<Complex<T>>, inverse: bool) {
        let (h, w) = (data.shape()[0], data.shape()[1]);
        let row_fft = if inverse {
            self.planner.plan_fft_inverse(w)
        } else {
            self.planner.plan_fft_forward(w)
        };
        for mut row in data.rows_mut() {
            let mut buf: Vec<Complex<T>> = row.iter().copied().collect();
            row_fft.process(&mut buf);
            for (dst, src) in row.iter_mut().zip(buf) {
                *dst = src;
            }
        }
        let col_fft = if inverse {
            self.planner.plan_fft_inverse(h)
        } else {
            self.planner.plan_fft_forward(h)
        };
        let mut buf = vec![Complex::new(T::zero(), T::zero()); h];
        for x in 0..w {
            for y in 0..h {
                buf[y] = data[[y, x]];
            }
            col_fft.process(&mut buf);
            for y in 0..h {
                data[[y, x]] = buf[y];
            }
        }
    }

    pub fn fft2(&mut self, spatial: &Array2<T>) -> Array2<Complex<T>> {
        let mut data = spatial.mapv(|v| Complex::new(v, T::zero()));
        self.transform(&mut data, false);
        data
    }

    pub fn fft2_complex(&mut self, mut data: Array2<Complex<T>>) -> Array2<Complex<T>> {
        self.transform(&mut data, false);
        data
    }

    /// Unscaled inverse; divide by N to invert `fft2`.
    pub fn ifft2_complex(&mut self, mut data: Array2<Complex<T>>) -> Array2<Complex<T>> {
        self.transform(&mut data, true);
        data
    }

    /// Inverse transform returning the real part, scaled by 1/N.
    pub fn ifft2_real(&mut self, data: &Array2<Complex<T>>) -> Array2<T> {
        let mut d = data.clone();
        self.transform(&mut d, true);
        let n = T::from_index(d.len());
        d.mapv(|v| v.re / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_parseval() {
        let mut eng = FftEngine::<f64>::new();
        let a = Array2::from_shape_fn((6, 8), |(y, x)| ((y * 13 + x * 7) % 11) as f64 - 5.0);
        let spec = eng.fft2(&a);
        let back = eng.ifft2_real(&spec);
        for (u, v) in a.iter().zip(back.iter()) {
            assert!((u - v).abs() < 1e-10);
        }
        let e_spatial: f64 = a.iter().map(|v| v * v).sum();
        let e_spec: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
        assert!((e_spatial - e_spec / a.len() as f64).abs() < 1e-6 * e_spec.max(1.0));
    }
}
