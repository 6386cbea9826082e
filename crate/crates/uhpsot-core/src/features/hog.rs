//! 31-channel Felzenszwalb-style gradient histogram features.
//!
//! Channels 0..18 are contrast-sensitive orientation bins (20 degrees
//! each over the full circle), 18..27 contrast-insensitive bins, 27..31
//! block-energy texture channels. Per-pixel magnitudes are hard-assigned
//! to their cell and to the nearest orientation bin; block normalization
//! clips at 0.2.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::num::Real;

pub const HOG_DIMS: usize = 31;
const SENSITIVE_BINS: usize = 18;
const INSENSITIVE_BINS: usize = 9;
const CLIP: f64 = 0.2;
const TEXTURE_SCALE: f64 = 0.2357;

pub fn compute_hog<T: Real>(gray: &Array2<T>, cell_size: usize) -> Result<FeatureMap<T>> {
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    if h < cell_size || w < cell_size {
        return Err(Error::PatchTooSmall {
            w,
            h,
            cell: cell_size,
        });
    }
    if h % cell_size != 0 || w % cell_size != 0 {
        return Err(Error::CellMisaligned {
            w,
            h,
            cell: cell_size,
        });
    }
    let ny = h / cell_size;
    let nx = w / cell_size;

    // Per-cell contrast-sensitive histograms.
    let mut hist = Array3::<T>::zeros((ny, nx, SENSITIVE_BINS));
    let at = |y: isize, x: isize| -> T {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        gray[[y, x]]
    };
    let bin_width = std::f64::consts::TAU / SENSITIVE_BINS as f64;
    for y in 0..h {
        for x in 0..w {
            let dx = at(y as isize, x as isize + 1) - at(y as isize, x as isize - 1);
            let dy = at(y as isize + 1, x as isize) - at(y as isize - 1, x as isize);
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == T::zero() {
                continue;
            }
            let angle = dy
                .to_f64()
                .unwrap()
                .atan2(dx.to_f64().unwrap())
                .rem_euclid(std::f64::consts::TAU);
            let bin = ((angle / bin_width).round() as usize) % SENSITIVE_BINS;
            hist[[y / cell_size, x / cell_size, bin]] += mag;
        }
    }

    // Cell energies from the insensitive histograms.
    let mut energy = Array2::<T>::zeros((ny, nx));
    for cy in 0..ny {
        for cx in 0..nx {
            let mut e = T::zero();
            for o in 0..INSENSITIVE_BINS {
                let v = hist[[cy, cx, o]] + hist[[cy, cx, o + INSENSITIVE_BINS]];
                e += v * v;
            }
            energy[[cy, cx]] = e;
        }
    }
    let e_at = |cy: isize, cx: isize| -> T {
        let cy = cy.clamp(0, ny as isize - 1) as usize;
        let cx = cx.clamp(0, nx as isize - 1) as usize;
        energy[[cy, cx]]
    };

    let eps = T::c(1e-10);
    let clip = T::c(CLIP);
    let mut out = Array3::<T>::zeros((ny, nx, HOG_DIMS));
    for cy in 0..ny {
        let cyi = cy as isize;
        for cx in 0..nx {
            let cxi = cx as isize;
            // 2x2 block norms toward the four diagonal neighbors.
            let norms: [T; 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)].map(|(dy, dx)| {
                (e_at(cyi, cxi)
                    + e_at(cyi + dy, cxi)
                    + e_at(cyi, cxi + dx)
                    + e_at(cyi + dy, cxi + dx)
                    + eps)
                    .sqrt()
            });
            for o in 0..SENSITIVE_BINS {
                let v = hist[[cy, cx, o]];
                let mut sum = T::zero();
                for n in norms {
                    sum += (v / n).min(clip);
                }
                out[[cy, cx, o]] = T::c(0.5) * sum;
            }
            for o in 0..INSENSITIVE_BINS {
                let v = hist[[cy, cx, o]] + hist[[cy, cx, o + INSENSITIVE_BINS]];
                let mut sum = T::zero();
                for n in norms {
                    sum += (v / n).min(clip);
                }
                out[[cy, cx, SENSITIVE_BINS + o]] = T::c(0.5) * sum;
            }
            for (k, n) in norms.iter().enumerate() {
                let mut sum = T::zero();
                for o in 0..INSENSITIVE_BINS {
                    let v = hist[[cy, cx, o]] + hist[[cy, cx, o + INSENSITIVE_BINS]];
                    sum += (v / *n).min(clip);
                }
                out[[cy, cx, SENSITIVE_BINS + INSENSITIVE_BINS + k]] = T::c(TEXTURE_SCALE) * sum;
            }
        }
    }
    Ok(FeatureMap {
        data: out,
        cell_size,
    })
}
