//! Global background motion: corner correspondences between consecutive
//! frames, a 6-parameter affine fit, the residual (difference) map after
//! background compensation, and the box proposal read off its projections.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::num::Real;

/// Map (x_t, y_t) -> (x_{t+1}, y_{t+1}):
/// `x' = a1·x + a2·y + a0`, `y' = b1·x + b2·y + b0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineModel<T> {
    pub a0: T,
    pub a1: T,
    pub a2: T,
    pub b0: T,
    pub b1: T,
    pub b2: T,
}

impl<T: Real> AffineModel<T> {
    pub fn identity() -> Self {
        AffineModel {
            a0: T::zero(),
            a1: T::one(),
            a2: T::zero(),
            b0: T::zero(),
            b1: T::zero(),
            b2: T::one(),
        }
    }

    pub fn apply(&self, x: T, y: T) -> (T, T) {
        (
            self.a1 * x + self.a2 * y + self.a0,
            self.b1 * x + self.b2 * y + self.b0,
        )
    }

    pub fn is_finite(&self) -> bool {
        [self.a0, self.a1, self.a2, self.b0, self.b1, self.b2]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Inverse map; falls back to identity when the linear part is singular.
    pub fn inverse(&self) -> Self {
        let det = self.a1 * self.b2 - self.a2 * self.b1;
        if det.abs() < T::c(1e-12) {
            return AffineModel::identity();
        }
        let ia1 = self.b2 / det;
        let ia2 = -self.a2 / det;
        let ib1 = -self.b1 / det;
        let ib2 = self.a1 / det;
        AffineModel {
            a1: ia1,
            a2: ia2,
            a0: -(ia1 * self.a0 + ia2 * self.b0),
            b1: ib1,
            b2: ib2,
            b0: -(ib1 * self.a0 + ib2 * self.b0),
        }
    }
}

/// A matched (previous, current) point pair in pixel coordinates.
pub type PointPair<T> = ((T, T), (T, T));

/// Point matches between consecutive frames, pixel coordinates.
#[derive(Debug, Clone, Default)]
pub struct Correspondences<T> {
    pub pairs: Vec<PointPair<T>>,
}

/// Difference map between the motion-compensated previous frame and the
/// current frame. Out-of-frame samples carry zero residual.
#[derive(Debug, Clone)]
pub struct ResidualMap<T> {
    pub values: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct BgParams<T> {
    pub max_points: usize,
    pub harris_k: T,
    /// Half-size of the SAD matching window (full window 2r+1).
    pub match_radius: usize,
    /// Displacement search radius in pixels.
    pub search_radius: usize,
    /// Reject matches whose mean absolute difference exceeds this.
    pub sad_threshold: T,
    /// Outlier rejection distance for the affine refit pass.
    pub outlier_px: T,
    /// Frames are subsampled for motion estimation until the longer side
    /// fits this bound.
    pub downscale_max: usize,
    /// Eq-projection cutting threshold as a fraction of the max projection.
    pub cut: T,
    /// Minimum mean |residual| (gray levels) inside the search window for a
    /// box proposal.
    pub energy_floor: T,
    /// Search window around the previous box, as a multiple of its extent.
    pub window_scale: T,
}

impl<T: Real> Default for BgParams<T> {
    fn default() -> Self {
        BgParams {
            max_points: 50,
            harris_k: T::c(0.04),
            match_radius: 10,
            search_radius: 20,
            sad_threshold: T::c(12.0),
            outlier_px: T::c(3.0),
            downscale_max: 480,
            cut: T::c(0.1),
            energy_floor: T::one(),
            window_scale: T::c(2.0),
        }
    }
}

fn subsample<T: Real>(img: &Array2<T>, factor: usize) -> Array2<T> {
    if factor <= 1 {
        return img.clone();
    }
    let (h, w) = (img.shape()[0] / factor, img.shape()[1] / factor);
    Array2::from_shape_fn((h, w), |(y, x)| img[[y * factor, x * factor]])
}

/// Harris corner response with 3x3 accumulation.
fn harris_response<T: Real>(gray: &Array2<T>, k: T) -> Array2<T> {
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    let mut ixx = Array2::<T>::zeros((h, w));
    let mut iyy = Array2::<T>::zeros((h, w));
    let mut ixy = Array2::<T>::zeros((h, w));
    let half = T::c(0.5);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let dx = (gray[[y, x + 1]] - gray[[y, x - 1]]) * half;
            let dy = (gray[[y + 1, x]] - gray[[y - 1, x]]) * half;
            ixx[[y, x]] = dx * dx;
            iyy[[y, x]] = dy * dy;
            ixy[[y, x]] = dx * dy;
        }
    }
    let mut resp = Array2::<T>::zeros((h, w));
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let mut sxx = T::zero();
            let mut syy = T::zero();
            let mut sxy = T::zero();
            for dy in 0..3 {
                for dx in 0..3 {
                    sxx += ixx[[y + dy - 1, x + dx - 1]];
                    syy += iyy[[y + dy - 1, x + dx - 1]];
                    sxy += ixy[[y + dy - 1, x + dx - 1]];
                }
            }
            let det = sxx * syy - sxy * sxy;
            let tr = sxx + syy;
            resp[[y, x]] = det - k * tr * tr;
        }
    }
    resp
}

fn sad<T: Real>(
    a: &Array2<T>,
    b: &Array2<T>,
    (ay, ax): (usize, usize),
    (by, bx): (usize, usize),
    r: usize,
) -> T {
    let mut acc = T::zero();
    for dy in 0..=2 * r {
        for dx in 0..=2 * r {
            let va = a[[ay + dy - r, ax + dx - r]];
            let vb = b[[by + dy - r, bx + dx - r]];
            acc += (va - vb).abs();
        }
    }
    acc
}

/// Detect corners on the previous frame (outside `exclude`) and match them
/// into the current frame by windowed SAD search.
pub fn build_correspondences<T: Real>(
    prev_gray: &Array2<T>,
    cur_gray: &Array2<T>,
    exclude: Option<&BoundingBox<T>>,
    params: &BgParams<T>,
) -> Result<Correspondences<T>> {
    if prev_gray.shape() != cur_gray.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", prev_gray.shape()),
            got: format!("{:?}", cur_gray.shape()),
        });
    }
    let (full_h, full_w) = (prev_gray.shape()[0], prev_gray.shape()[1]);
    let factor = full_h.max(full_w).div_ceil(params.downscale_max).max(1);
    let prev = subsample(prev_gray, factor);
    let cur = subsample(cur_gray, factor);
    let (h, w) = (prev.shape()[0], prev.shape()[1]);
    let margin = params.match_radius + params.search_radius;
    if h <= 2 * margin || w <= 2 * margin {
        return Err(Error::InsufficientCorrespondences { found: 0, need: 3 });
    }

    let resp = harris_response(&prev, params.harris_k);
    let f_t = T::from_index(factor);
    let mut candidates: Vec<(usize, usize, T)> = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let v = resp[[y, x]];
            if v <= T::zero() {
                continue;
            }
            // 3x3 non-max suppression
            let mut is_max = true;
            'nms: for dy in 0..3 {
                for dx in 0..3 {
                    if (dy, dx) != (1, 1) && resp[[y + dy - 1, x + dx - 1]] > v {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if !is_max {
                continue;
            }
            if let Some(b) = exclude {
                let fx = T::from_index(x) * f_t;
                let fy = T::from_index(y) * f_t;
                if fx >= b.x && fx < b.x + b.w && fy >= b.y && fy < b.y + b.h {
                    continue;
                }
            }
            candidates.push((y, x, v));
        }
    }
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));

    // Greedy spacing keeps the points spread over the frame.
    let min_dist2 = ((h.min(w) / 10).max(4) as i64).pow(2);
    let mut picked: Vec<(usize, usize)> = Vec::new();
    for (y, x, _) in candidates {
        if picked.len() >= params.max_points {
            break;
        }
        let ok = picked.iter().all(|&(py, px)| {
            let dy = py as i64 - y as i64;
            let dx = px as i64 - x as i64;
            dy * dy + dx * dx >= min_dist2
        });
        if ok {
            picked.push((y, x));
        }
    }

    let r = params.match_radius;
    let search = params.search_radius as isize;
    let per_px = T::from_index((2 * r + 1) * (2 * r + 1));
    let mut pairs = Vec::new();
    for (y, x) in picked {
        // coarse search on a stride-2 grid, then refine around the best
        let mut best = (T::infinity(), 0isize, 0isize);
        let consider = |dy: isize, dx: isize, best: &mut (T, isize, isize)| {
            let ty = y as isize + dy;
            let tx = x as isize + dx;
            if ty < r as isize
                || tx < r as isize
                || ty >= (h - r) as isize
                || tx >= (w - r) as isize
            {
                return;
            }
            let cost = sad(&prev, &cur, (y, x), (ty as usize, tx as usize), r);
            if cost < best.0 {
                *best = (cost, dy, dx);
            }
        };
        let mut dy = -search;
        while dy <= search {
            let mut dx = -search;
            while dx <= search {
                consider(dy, dx, &mut best);
                dx += 2;
            }
            dy += 2;
        }
        let (coarse_dy, coarse_dx) = (best.1, best.2);
        for dy in coarse_dy - 1..=coarse_dy + 1 {
            for dx in coarse_dx - 1..=coarse_dx + 1 {
                consider(dy, dx, &mut best);
            }
        }
        if best.0 / per_px <= params.sad_threshold {
            let src = (T::from_index(x) * f_t, T::from_index(y) * f_t);
            let dst = (
                T::c((x as isize + best.2) as f64) * f_t,
                T::c((y as isize + best.1) as f64) * f_t,
            );
            pairs.push((src, dst));
        }
    }
    if pairs.len() < 3 {
        return Err(Error::InsufficientCorrespondences {
            found: pairs.len(),
            need: 3,
        });
    }
    Ok(Correspondences { pairs })
}

// Index loops read clearest for the elimination sweeps.
#[allow(clippy::needless_range_loop)]
fn solve3<T: Real>(mut a: [[T; 3]; 3], mut b: [T; 3]) -> Result<[T; 3]> {
    for col in 0..3 {
        let mut pivot = col;
        for row in col + 1..3 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < T::c(1e-9) {
            return Err(Error::DegenerateGeometry);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

fn fit_once<T: Real>(pairs: &[PointPair<T>]) -> Result<AffineModel<T>> {
    // Two independent 3-unknown normal-equation systems over (1, x, y).
    let mut ata = [[T::zero(); 3]; 3];
    let mut atx = [T::zero(); 3];
    let mut aty = [T::zero(); 3];
    for &((x, y), (xn, yn)) in pairs {
        let row = [T::one(), x, y];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atx[i] += row[i] * xn;
            aty[i] += row[i] * yn;
        }
    }
    let cx = solve3(ata, atx)?;
    let cy = solve3(ata, aty)?;
    Ok(AffineModel {
        a0: cx[0],
        a1: cx[1],
        a2: cx[2],
        b0: cy[0],
        b1: cy[1],
        b2: cy[2],
    })
}

/// Least-squares affine fit with one outlier-rejection pass: pairs farther
/// than `outlier_px` from the first fit are dropped and the model refit.
pub fn fit_affine<T: Real>(c: &Correspondences<T>, outlier_px: T) -> Result<AffineModel<T>> {
    if c.pairs.len() < 3 {
        return Err(Error::InsufficientCorrespondences {
            found: c.pairs.len(),
            need: 3,
        });
    }
    let first = fit_once(&c.pairs)?;
    let inliers: Vec<_> = c
        .pairs
        .iter()
        .copied()
        .filter(|&((x, y), (xn, yn))| {
            let (px, py) = first.apply(x, y);
            ((px - xn).powi(2) + (py - yn).powi(2)).sqrt() <= outlier_px
        })
        .collect();
    if inliers.len() >= 3 && inliers.len() < c.pairs.len() {
        if let Ok(refit) = fit_once(&inliers) {
            return Ok(refit);
        }
    }
    Ok(first)
}

/// Warp the previous frame through the model and subtract the current
/// frame. Pixels whose source falls outside the frame get zero residual.
pub fn residual_map<T: Real>(
    prev_gray: &Array2<T>,
    cur_gray: &Array2<T>,
    model: &AffineModel<T>,
) -> ResidualMap<T> {
    assert!(model.is_finite(), "affine model must be finite");
    let (h, w) = (cur_gray.shape()[0], cur_gray.shape()[1]);
    let inv = model.inverse();
    let mut values = Array2::<T>::zeros((h, w));
    let one = T::one();
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply(T::from_index(x), T::from_index(y));
            if sx < T::zero()
                || sy < T::zero()
                || sx > T::from_index(w - 1)
                || sy > T::from_index(h - 1)
            {
                continue;
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let xi = x0.to_usize().unwrap().min(w - 1);
            let yi = y0.to_usize().unwrap().min(h - 1);
            let x1 = (xi + 1).min(w - 1);
            let y1 = (yi + 1).min(h - 1);
            let top = prev_gray[[yi, xi]] * (one - fx) + prev_gray[[yi, x1]] * fx;
            let bot = prev_gray[[y1, xi]] * (one - fx) + prev_gray[[y1, x1]] * fx;
            let predicted = top * (one - fy) + bot * fy;
            values[[y, x]] = predicted - cur_gray[[y, x]];
        }
    }
    ResidualMap { values }
}

/// Box proposal from residual projections inside a window around the
/// previous box: extents from the threshold crossings of the column/row
/// sums of |residual|, center at the residual centroid. `None` when the
/// windowed residual energy is below the floor.
#[allow(clippy::type_complexity)]
pub fn propose_box_from_residual<T: Real>(
    res: &ResidualMap<T>,
    prev_box: &BoundingBox<T>,
    params: &BgParams<T>,
) -> Option<(BoundingBox<T>, (T, T))> {
    let (h, w) = (res.values.shape()[0], res.values.shape()[1]);
    let (cx, cy) = prev_box.center();
    let half_w = prev_box.w * params.window_scale * T::c(0.5);
    let half_h = prev_box.h * params.window_scale * T::c(0.5);
    let x0 = (cx - half_w).floor().to_isize()?.clamp(0, w as isize - 1) as usize;
    let x1 = (cx + half_w).ceil().to_isize()?.clamp(x0 as isize + 1, w as isize) as usize;
    let y0 = (cy - half_h).floor().to_isize()?.clamp(0, h as isize - 1) as usize;
    let y1 = (cy + half_h).ceil().to_isize()?.clamp(y0 as isize + 1, h as isize) as usize;

    let mut col = vec![T::zero(); x1 - x0];
    let mut row = vec![T::zero(); y1 - y0];
    let mut total = T::zero();
    for y in y0..y1 {
        for x in x0..x1 {
            let v = res.values[[y, x]].abs();
            col[x - x0] += v;
            row[y - y0] += v;
            total += v;
        }
    }
    let area = T::from_index((x1 - x0) * (y1 - y0));
    if total / area < params.energy_floor {
        return None;
    }
    let max_col = col.iter().cloned().fold(T::zero(), T::max);
    let max_row = row.iter().cloned().fold(T::zero(), T::max);
    if max_col <= T::zero() || max_row <= T::zero() {
        return None;
    }
    let col_thresh = params.cut * max_col;
    let row_thresh = params.cut * max_row;
    let x_min = col.iter().position(|v| *v >= col_thresh)?;
    let x_max = col.iter().rposition(|v| *v >= col_thresh)?;
    let y_min = row.iter().position(|v| *v >= row_thresh)?;
    let y_max = row.iter().rposition(|v| *v >= row_thresh)?;
    let est_w = T::from_index(x_max - x_min + 1);
    let est_h = T::from_index(y_max - y_min + 1);

    // Center on the residual-mass centroid.
    let mut cx_acc = T::zero();
    let mut cy_acc = T::zero();
    for (i, v) in col.iter().enumerate() {
        cx_acc += T::from_index(x0 + i) * *v;
    }
    for (i, v) in row.iter().enumerate() {
        cy_acc += T::from_index(y0 + i) * *v;
    }
    let bb = BoundingBox::from_center(cx_acc / total, cy_acc / total, est_w, est_h);
    Some((bb, (est_w, est_h)))
}
