//! Frame container and grayscale conversion.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::num::Real;

// Fixed luma weights so the grayscale view is deterministic.
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// One video frame: interleaved 8-bit RGB plus bookkeeping.
#[derive(Debug, Clone)]
pub struct Frame {
    pixels: Vec<u8>,
    width: usize,
    height: usize,
    /// 1-based frame number within its sequence.
    pub index: usize,
    pub path: Option<PathBuf>,
    /// False for sequences known to be grayscale (color-name features and
    /// the color half of occlusion detection are skipped).
    pub is_color: bool,
}

impl Frame {
    pub fn from_rgb(pixels: Vec<u8>, width: usize, height: usize, index: usize) -> Self {
        assert!(width >= 1 && height >= 1, "frame must be non-empty");
        assert_eq!(pixels.len(), width * height * 3);
        Frame {
            pixels,
            width,
            height,
            index,
            path: None,
            is_color: true,
        }
    }

    pub fn load(path: &Path, index: usize, force_gray: bool) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut f = Frame::from_rgb(img.into_raw(), w, h, index);
        f.path = Some(path.to_path_buf());
        if force_gray || f.channels_equal() {
            f.is_color = false;
        }
        Ok(f)
    }

    fn channels_equal(&self) -> bool {
        self.pixels
            .chunks_exact(3)
            .all(|p| p[0] == p[1] && p[1] == p[2])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// RGB at (x, y) with coordinates clamped to the frame (edge replication).
    #[inline]
    pub fn rgb_clamped(&self, x: isize, y: isize) -> [u8; 3] {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Grayscale view in `[0, 255]`, fixed luma weights.
    pub fn gray<T: Real>(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.height, self.width));
        for y in 0..self.height {
            for x in 0..self.width {
                let i = (y * self.width + x) * 3;
                let v = LUMA_R * self.pixels[i] as f64
                    + LUMA_G * self.pixels[i + 1] as f64
                    + LUMA_B * self.pixels[i + 2] as f64;
                out[[y, x]] = T::c(v);
            }
        }
        out
    }

    /// Write the frame as a PNG (used by the fixture generator).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(
            self.width as u32,
            self.height as u32,
            self.pixels.clone(),
        )
        .expect("pixel buffer matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Mean RGB inside a box (clipped to the frame). Used by occlusion
    /// detection; errors on a fully degenerate box.
    pub fn mean_rgb_in_box<T: Real>(&self, bx: T, by: T, bw: T, bh: T) -> Result<[T; 3]> {
        let x0 = bx.to_isize().unwrap_or(0).clamp(0, self.width as isize - 1) as usize;
        let y0 = by.to_isize().unwrap_or(0).clamp(0, self.height as isize - 1) as usize;
        let x1 = (bx + bw)
            .to_isize()
            .unwrap_or(0)
            .clamp(x0 as isize + 1, self.width as isize) as usize;
        let y1 = (by + bh)
            .to_isize()
            .unwrap_or(0)
            .clamp(y0 as isize + 1, self.height as isize) as usize;
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::DegenerateBox);
        }
        let mut acc = [0.0f64; 3];
        for y in y0..y1 {
            for x in x0..x1 {
                let i = (y * self.width + x) * 3;
                acc[0] += self.pixels[i] as f64;
                acc[1] += self.pixels[i + 1] as f64;
                acc[2] += self.pixels[i + 2] as f64;
            }
        }
        let n = ((x1 - x0) * (y1 - y0)) as f64;
        Ok([T::c(acc[0] / n), T::c(acc[1] / n), T::c(acc[2] / n)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_of_white_is_255() {
        let f = Frame::from_rgb(vec![255; 2 * 2 * 3], 2, 2, 1);
        let g: Array2<f64> = f.gray();
        assert!((g[[0, 0]] - 255.0).abs() < 1e-9);
    }

    #[test]
    fn rgb_clamped_replicates_edges() {
        let mut px = vec![0u8; 2 * 2 * 3];
        px[0] = 10; // (0,0) red channel
        let f = Frame::from_rgb(px, 2, 2, 1);
        assert_eq!(f.rgb_clamped(-5, -5), f.rgb_clamped(0, 0));
        assert_eq!(f.rgb_clamped(-1, 0)[0], 10);
    }
}
