//! Hand-crafted feature extraction: patch cropping, gradient histograms,
//! color names and windowing.

mod cn;
mod hog;

pub use cn::{compute_cn, CnTable, CN_DIMS, CN_TABLE_ROWS};
pub use hog::{compute_hog, HOG_DIMS};

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::BoundingBox;
use crate::num::Real;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Resampled image region in `[0, 255]` scale, interleaved as (h, w, 3).
#[derive(Debug, Clone)]
pub struct Patch<T> {
    pub data: Array3<T>,
    /// Center of the sampled region in frame coordinates.
    pub src_center: (T, T),
    /// Source pixels per patch pixel along x and y.
    pub src_step: (T, T),
}

impl<T: Real> Patch<T> {
    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn gray(&self) -> Array2<T> {
        let (h, w) = (self.height(), self.width());
        let mut out = Array2::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let mut v = T::zero();
                for (c, weight) in LUMA.iter().enumerate() {
                    v += self.data[[y, x, c]] * T::c(*weight);
                }
                out[[y, x]] = v;
            }
        }
        out
    }
}

/// D-channel feature grid over cells of `cell_size` pixels.
#[derive(Debug, Clone)]
pub struct FeatureMap<T> {
    /// (ny, nx, d)
    pub data: Array3<T>,
    pub cell_size: usize,
}

impl<T: Real> FeatureMap<T> {
    pub fn nx(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn ny(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn dims(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Crop a patch centered on `bbox`, covering `pad` times its extent per
/// axis, resampled to `out_w` x `out_h`. Out-of-frame area is filled by
/// edge replication; sampling is bilinear.
pub fn extract_patch<T: Real>(
    frame: &Frame,
    bbox: &BoundingBox<T>,
    pad: T,
    out_w: usize,
    out_h: usize,
) -> Result<Patch<T>> {
    if bbox.w < T::one() || bbox.h < T::one() {
        return Err(Error::DegenerateBox);
    }
    assert!(pad >= T::one() && out_w >= 1 && out_h >= 1);
    let (cx, cy) = bbox.center();
    let src_w = bbox.w * pad;
    let src_h = bbox.h * pad;
    let step_x = src_w / T::from_index(out_w);
    let step_y = src_h / T::from_index(out_h);
    let half = T::c(0.5);

    let mut data = Array3::zeros((out_h, out_w, 3));
    for oy in 0..out_h {
        let sy = cy - src_h * half + (T::from_index(oy) + half) * step_y - half;
        for ox in 0..out_w {
            let sx = cx - src_w * half + (T::from_index(ox) + half) * step_x - half;
            let px = bilinear_rgb(frame, sx, sy);
            for c in 0..3 {
                data[[oy, ox, c]] = px[c];
            }
        }
    }
    Ok(Patch {
        data,
        src_center: (cx, cy),
        src_step: (step_x, step_y),
    })
}

fn bilinear_rgb<T: Real>(frame: &Frame, x: T, y: T) -> [T; 3] {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let xi = x0.to_isize().unwrap_or(0);
    let yi = y0.to_isize().unwrap_or(0);
    let p00 = frame.rgb_clamped(xi, yi);
    let p10 = frame.rgb_clamped(xi + 1, yi);
    let p01 = frame.rgb_clamped(xi, yi + 1);
    let p11 = frame.rgb_clamped(xi + 1, yi + 1);
    let one = T::one();
    let mut out = [T::zero(); 3];
    for c in 0..3 {
        let top = T::c(p00[c] as f64) * (one - fx) + T::c(p10[c] as f64) * fx;
        let bot = T::c(p01[c] as f64) * (one - fx) + T::c(p11[c] as f64) * fx;
        out[c] = top * (one - fy) + bot * fy;
    }
    out
}

/// Raised-cosine window, zero at both ends of each axis.
pub fn hann_window<T: Real>(ny: usize, nx: usize) -> Array2<T> {
    let axis = |n: usize, i: usize| -> T {
        if n == 1 {
            T::one()
        } else {
            let t = std::f64::consts::TAU * i as f64 / (n - 1) as f64;
            T::c(0.5 * (1.0 - t.cos()))
        }
    };
    let mut w = Array2::zeros((ny, nx));
    for y in 0..ny {
        for x in 0..nx {
            w[[y, x]] = axis(ny, y) * axis(nx, x);
        }
    }
    w
}

/// Channel-wise elementwise multiply by a spatial window.
pub fn apply_window<T: Real>(fmap: &FeatureMap<T>, window: &Array2<T>) -> Result<FeatureMap<T>> {
    if window.shape() != [fmap.ny(), fmap.nx()] {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", fmap.ny(), fmap.nx()),
            got: format!("{}x{}", window.shape()[0], window.shape()[1]),
        });
    }
    let mut data = fmap.data.clone();
    for mut ch in data.axis_iter_mut(Axis(2)) {
        ch *= window;
    }
    Ok(FeatureMap {
        data,
        cell_size: fmap.cell_size,
    })
}

/// Full feature stack: fHOG, optional color names, and a normalized
/// grayscale-mean channel.
pub fn extract_features<T: Real>(
    patch: &Patch<T>,
    cn_table: Option<&CnTable>,
    cell_size: usize,
) -> Result<FeatureMap<T>> {
    let gray = patch.gray();
    let hog = compute_hog(&gray, cell_size)?;
    let (ny, nx) = (hog.ny(), hog.nx());
    let cn = match cn_table {
        Some(table) => Some(compute_cn(patch, table, cell_size)?),
        None => None,
    };
    let d_total = HOG_DIMS + cn.as_ref().map_or(0, |_| CN_DIMS) + 1;
    let mut data = Array3::zeros((ny, nx, d_total));
    data.slice_mut(ndarray::s![.., .., 0..HOG_DIMS])
        .assign(&hog.data);
    let mut d0 = HOG_DIMS;
    if let Some(cn) = &cn {
        data.slice_mut(ndarray::s![.., .., d0..d0 + CN_DIMS])
            .assign(&cn.data);
        d0 += CN_DIMS;
    }
    // Cell-mean intensity, shifted to be zero-centered.
    let inv255 = T::c(1.0 / 255.0);
    let cell_area = T::from_index(cell_size * cell_size);
    for cy in 0..ny {
        for cx in 0..nx {
            let mut sum = T::zero();
            for y in 0..cell_size {
                for x in 0..cell_size {
                    sum += gray[[cy * cell_size + y, cx * cell_size + x]];
                }
            }
            data[[cy, cx, d0]] = sum / cell_area * inv255 - T::c(0.5);
        }
    }
    Ok(FeatureMap { data, cell_size })
}
