//! Box history and trajectory proposals: PCA-based extrapolation of the
//! recent center displacements and size deltas, plus rejection of size
//! estimates that stray from the size trajectory.

use std::collections::VecDeque;

use crate::geometry::BoundingBox;
use crate::num::Real;

/// Ring buffer of the last N tracked boxes together with the peak scores
/// and mean patch colors used by occlusion detection.
#[derive(Debug, Clone)]
pub struct TrackHistory<T> {
    capacity: usize,
    boxes: VecDeque<BoundingBox<T>>,
    scores: VecDeque<T>,
    color_means: VecDeque<[T; 3]>,
}

impl<T: Real> TrackHistory<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "history needs at least two frames");
        TrackHistory {
            capacity,
            boxes: VecDeque::with_capacity(capacity),
            scores: VecDeque::with_capacity(capacity),
            color_means: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, bb: BoundingBox<T>, score: T, color_mean: [T; 3]) {
        if self.boxes.len() == self.capacity {
            self.boxes.pop_front();
            self.scores.pop_front();
            self.color_means.pop_front();
        }
        self.boxes.push_back(bb);
        self.scores.push_back(score);
        self.color_means.push_back(color_mean);
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn last_box(&self) -> Option<&BoundingBox<T>> {
        self.boxes.back()
    }

    /// Mean of the most recent `n` scores.
    pub fn recent_score_mean(&self, n: usize) -> Option<T> {
        if self.scores.is_empty() {
            return None;
        }
        let take = n.min(self.scores.len());
        let sum: T = self.scores.iter().rev().take(take).cloned().sum();
        Some(sum / T::from_index(take))
    }

    /// Componentwise mean of the most recent `n` color means.
    pub fn recent_color_mean(&self, n: usize) -> Option<[T; 3]> {
        if self.color_means.is_empty() {
            return None;
        }
        let take = n.min(self.color_means.len());
        let mut acc = [T::zero(); 3];
        for c in self.color_means.iter().rev().take(take) {
            for k in 0..3 {
                acc[k] += c[k];
            }
        }
        for a in &mut acc {
            *a /= T::from_index(take);
        }
        Some(acc)
    }

    fn center_displacements(&self) -> Vec<(T, T)> {
        self.boxes
            .iter()
            .zip(self.boxes.iter().skip(1))
            .map(|(a, b)| {
                let (ax, ay) = a.center();
                let (bx, by) = b.center();
                (bx - ax, by - ay)
            })
            .collect()
    }

    fn size_deltas(&self) -> Vec<(T, T)> {
        self.boxes
            .iter()
            .zip(self.boxes.iter().skip(1))
            .map(|(a, b)| (b.w - a.w, b.h - a.h))
            .collect()
    }

    /// Extrapolated next center. `None` only for an empty history.
    pub fn predict_center(&self) -> Option<(T, T)> {
        let last = self.boxes.back()?;
        let (x, y) = last.center();
        let (dx, dy) = extrapolate_next(&self.center_displacements());
        Some((x + dx, y + dy))
    }

    /// Extrapolated next size, clamped to ±20% of the last size per frame.
    pub fn predict_size(&self) -> Option<(T, T)> {
        let last = self.boxes.back()?;
        let (dw, dh) = extrapolate_next(&self.size_deltas());
        let lo = T::c(0.8);
        let hi = T::c(1.2);
        Some((
            (last.w + dw).clamp(last.w * lo, last.w * hi),
            (last.h + dh).clamp(last.h * lo, last.h * hi),
        ))
    }

    /// Gate a raw size estimate against the historical (Δw, Δh) trend:
    /// accept when the implied delta lies within mean ± 3·std (inclusive)
    /// in both components and the aspect ratio moves by at most 25%. The
    /// band never shrinks below a small floor (2 px or 3% of the size) so
    /// gradual scale changes can start from a constant-size history.
    pub fn filter_size_estimate(&self, raw: (T, T)) -> Option<(T, T)> {
        let last = self.boxes.back()?;
        if !(raw.0 > T::zero() && raw.1 > T::zero()) {
            return None;
        }
        let aspect_change = (raw.0 / raw.1) / (last.w / last.h) - T::one();
        if aspect_change.abs() > T::c(0.25) {
            return None;
        }
        let deltas = self.size_deltas();
        let implied = (raw.0 - last.w, raw.1 - last.h);
        for (sel, d, extent) in [(0usize, implied.0, last.w), (1usize, implied.1, last.h)] {
            let comp: Vec<T> = deltas
                .iter()
                .map(|&(w, h)| if sel == 0 { w } else { h })
                .collect();
            // a short history contributes an empty trend: mean 0, std 0
            let (mean, var) = if comp.len() >= 2 {
                let n = T::from_index(comp.len());
                let mean: T = comp.iter().cloned().sum::<T>() / n;
                (mean, comp.iter().map(|v| (*v - mean).powi(2)).sum::<T>() / n)
            } else {
                (T::zero(), T::zero())
            };
            let floor = T::c(2.0).max(T::c(0.03) * extent);
            let band = (T::c(3.0) * var.sqrt()).max(floor);
            // small slack so the documented inclusive bound survives rounding
            if (d - mean).abs() > band + T::c(1e-9) {
                return None;
            }
        }
        Some(raw)
    }
}

/// Predict the next sample of a 2-d sequence: PCA on the mean-centered
/// samples, a least-squares line through the PC1 coefficients, PC2 set to
/// zero. Below 4 samples falls back to the mean; empty input gives zero.
fn extrapolate_next<T: Real>(seq: &[(T, T)]) -> (T, T) {
    if seq.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::from_index(seq.len());
    let mean = (
        seq.iter().map(|p| p.0).sum::<T>() / n,
        seq.iter().map(|p| p.1).sum::<T>() / n,
    );
    if seq.len() < 4 {
        return mean;
    }
    let centered: Vec<(T, T)> = seq.iter().map(|p| (p.0 - mean.0, p.1 - mean.1)).collect();
    let mut cxx = T::zero();
    let mut cxy = T::zero();
    let mut cyy = T::zero();
    for &(u, v) in &centered {
        cxx += u * u;
        cxy += u * v;
        cyy += v * v;
    }
    let pc1 = principal_axis(cxx, cxy, cyy);

    // coefficients along PC1, fitted against the frame index
    let coeffs: Vec<T> = centered.iter().map(|&(u, v)| u * pc1.0 + v * pc1.1).collect();
    let m = coeffs.len();
    let mf = T::from_index(m);
    let idx_mean = (mf - T::one()) * T::c(0.5);
    let c_mean = coeffs.iter().cloned().sum::<T>() / mf;
    let mut num = T::zero();
    let mut den = T::zero();
    for (i, c) in coeffs.iter().enumerate() {
        let di = T::from_index(i) - idx_mean;
        num += di * (*c - c_mean);
        den += di * di;
    }
    let slope = if den > T::zero() { num / den } else { T::zero() };
    let next_coeff = c_mean + slope * (mf - idx_mean);
    (mean.0 + next_coeff * pc1.0, mean.1 + next_coeff * pc1.1)
}

/// Unit eigenvector of the larger eigenvalue of [[cxx, cxy], [cxy, cyy]];
/// a tie between the eigenvalues breaks toward the x-axis.
fn principal_axis<T: Real>(cxx: T, cxy: T, cyy: T) -> (T, T) {
    let half = T::c(0.5);
    let lambda = (cxx + cyy) * half + (((cxx - cyy) * half).powi(2) + cxy * cxy).sqrt();
    if cxy.abs() < T::c(1e-12) {
        return if cxx >= cyy {
            (T::one(), T::zero())
        } else {
            (T::zero(), T::one())
        };
    }
    let v = (cxy, lambda - cxx);
    let norm = (v.0 * v.0 + v.1 * v.1).sqrt();
    (v.0 / norm, v.1 / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn hist_from_centers(centers: &[(f64, f64)], w: f64, h: f64) -> TrackHistory<f64> {
        let mut hist = TrackHistory::new(20);
        for &(cx, cy) in centers {
            hist.push(BoundingBox::from_center(cx, cy, w, h), 0.5, [0.0; 3]);
        }
        hist
    }

    #[test]
    fn push_evicts_beyond_capacity() {
        let mut hist = TrackHistory::new(20);
        for i in 0..21 {
            hist.push(BoundingBox::new(i as f64, 0.0, 5.0, 5.0), 0.1, [0.0; 3]);
        }
        assert_eq!(hist.len(), 20);
        assert_eq!(hist.last_box().unwrap().x, 20.0);
        assert_eq!(hist.boxes.front().unwrap().x, 1.0);
    }

    #[test]
    fn empty_history_predicts_nothing() {
        let hist = TrackHistory::<f64>::new(20);
        assert!(hist.predict_center().is_none());
        assert!(hist.predict_size().is_none());
    }

    #[test]
    fn stationary_object_predicts_last_center() {
        let hist = hist_from_centers(&[(30.0, 40.0); 8], 10.0, 10.0);
        let (x, y) = hist.predict_center().unwrap();
        assert!((x - 30.0).abs() < 1e-9 && (y - 40.0).abs() < 1e-9);
    }

    #[test]
    fn constant_velocity_extends_exactly() {
        let centers: Vec<_> = (0..10).map(|i| (10.0 + 2.0 * i as f64, 5.0 + i as f64)).collect();
        let hist = hist_from_centers(&centers, 12.0, 12.0);
        let (x, y) = hist.predict_center().unwrap();
        assert!((x - 30.0).abs() < 1e-9, "x {x}");
        assert!((y - 15.0).abs() < 1e-9, "y {y}");
    }

    #[test]
    fn accelerating_x_extrapolates_next_displacement() {
        // displacements 1,2,...,9 along x; the line through them gives 10
        let mut cx = 0.0;
        let mut centers = vec![(cx, 7.0)];
        for d in 1..=9 {
            cx += d as f64;
            centers.push((cx, 7.0));
        }
        let hist = hist_from_centers(&centers, 10.0, 10.0);
        let (x, y) = hist.predict_center().unwrap();
        assert!((x - (cx + 10.0)).abs() < 1e-6, "x {x}");
        assert!((y - 7.0).abs() < 1e-6, "y {y}");
    }

    #[test]
    fn linear_trajectories_reproduced_for_all_lengths() {
        let mut r = StdRng::seed_from_u64(3);
        for len in 5..=20 {
            let vx: f64 = r.random_range(-4.0..4.0);
            let vy: f64 = r.random_range(-4.0..4.0);
            let (x0, y0): (f64, f64) = (r.random_range(0.0..50.0), r.random_range(0.0..50.0));
            let centers: Vec<_> = (0..len)
                .map(|i| (x0 + vx * i as f64, y0 + vy * i as f64))
                .collect();
            let hist = hist_from_centers(&centers, 9.0, 9.0);
            let (x, y) = hist.predict_center().unwrap();
            let want = (x0 + vx * len as f64, y0 + vy * len as f64);
            assert!((x - want.0).abs() < 1e-8 && (y - want.1).abs() < 1e-8, "len {len}");
        }
    }

    #[test]
    fn translation_equivariance() {
        let mut r = StdRng::seed_from_u64(11);
        let centers: Vec<(f64, f64)> = (0..12)
            .map(|_| (r.random_range(0.0..100.0), r.random_range(0.0..100.0)))
            .collect();
        let base = hist_from_centers(&centers, 14.0, 8.0).predict_center().unwrap();
        for (a, b) in [(7.0, -3.0), (-120.5, 64.25)] {
            let moved: Vec<_> = centers.iter().map(|&(x, y)| (x + a, y + b)).collect();
            let got = hist_from_centers(&moved, 14.0, 8.0).predict_center().unwrap();
            assert!((got.0 - (base.0 + a)).abs() < 1e-8);
            assert!((got.1 - (base.1 + b)).abs() < 1e-8);
        }
    }

    #[test]
    fn prediction_lies_on_pc1_line() {
        let mut r = StdRng::seed_from_u64(23);
        let centers: Vec<(f64, f64)> = (0..15)
            .map(|i| {
                (
                    3.0 * i as f64 + r.random_range(-0.5..0.5),
                    1.5 * i as f64 + r.random_range(-0.5..0.5),
                )
            })
            .collect();
        let hist = hist_from_centers(&centers, 10.0, 10.0);
        let disp = hist.center_displacements();
        let d_hat = {
            let (px, py) = hist.predict_center().unwrap();
            let (lx, ly) = hist.last_box().unwrap().center();
            (px - lx, py - ly)
        };
        let n = disp.len() as f64;
        let mean = (
            disp.iter().map(|p| p.0).sum::<f64>() / n,
            disp.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
        for &(u, v) in &disp {
            cxx += (u - mean.0).powi(2);
            cxy += (u - mean.0) * (v - mean.1);
            cyy += (v - mean.1).powi(2);
        }
        let pc1 = principal_axis(cxx, cxy, cyy);
        // predicted displacement minus mean must be parallel to PC1
        let cross = (d_hat.0 - mean.0) * pc1.1 - (d_hat.1 - mean.1) * pc1.0;
        assert!(cross.abs() < 1e-9, "cross {cross}");
    }

    fn hist_from_sizes(sizes: &[(f64, f64)]) -> TrackHistory<f64> {
        let mut hist = TrackHistory::new(20);
        for &(w, h) in sizes {
            hist.push(BoundingBox::from_center(50.0, 50.0, w, h), 0.5, [0.0; 3]);
        }
        hist
    }

    #[test]
    fn constant_size_predicts_last_size() {
        let hist = hist_from_sizes(&[(40.0, 30.0); 6]);
        let (w, h) = hist.predict_size().unwrap();
        assert!((w - 40.0).abs() < 1e-9 && (h - 30.0).abs() < 1e-9);
    }

    #[test]
    fn growing_width_extrapolated_within_clamp() {
        let sizes: Vec<_> = (0..8).map(|i| (40.0 + 2.0 * i as f64, 30.0)).collect();
        let hist = hist_from_sizes(&sizes);
        let (w, h) = hist.predict_size().unwrap();
        assert!((w - 56.0).abs() < 1e-6, "w {w}");
        assert!((h - 30.0).abs() < 1e-6);
    }

    #[test]
    fn size_prediction_clamped_to_20_percent() {
        // deltas 0,0,0,30: the fitted line asks for a huge jump
        let hist = hist_from_sizes(&[(40.0, 40.0), (40.0, 40.0), (40.0, 40.0), (40.0, 40.0), (70.0, 40.0)]);
        let (w, _) = hist.predict_size().unwrap();
        assert!(w <= 70.0 * 1.2 + 1e-9);
        assert!(w >= 70.0 * 0.8 - 1e-9);
    }

    #[test]
    fn filter_accepts_last_size_and_rejects_jumps() {
        let hist = hist_from_sizes(&[(40.0, 30.0); 8]);
        assert_eq!(hist.filter_size_estimate((40.0, 30.0)), Some((40.0, 30.0)));
        // constant history: std 0, any real change is out of band
        assert_eq!(hist.filter_size_estimate((50.0, 37.5)), None);
    }

    #[test]
    fn filter_rejects_aspect_ratio_change() {
        let hist = hist_from_sizes(&[(40.0, 40.0); 8]);
        // same area, aspect flips by more than 25%
        assert_eq!(hist.filter_size_estimate((52.0, 31.0)), None);
    }

    #[test]
    fn filter_boundary_at_three_std_is_inclusive() {
        // deltas alternate -1,+1 in both components: mean 0, std 1
        let mut sizes = vec![(100.0, 100.0)];
        for i in 0..8 {
            let last: (f64, f64) = *sizes.last().unwrap();
            let d = if i % 2 == 0 { -1.0 } else { 1.0 };
            sizes.push((last.0 + d, last.1 + d));
        }
        let hist = hist_from_sizes(&sizes);
        let last = *sizes.last().unwrap();
        assert!(hist
            .filter_size_estimate((last.0 + 3.0, last.1 + 3.0))
            .is_some());
        assert!(hist
            .filter_size_estimate((last.0 + 3.2, last.1 + 3.2))
            .is_none());
    }

    #[test]
    fn recent_means_cover_requested_window() {
        let mut hist = TrackHistory::new(20);
        for i in 0..6 {
            hist.push(
                BoundingBox::new(0.0, 0.0, 5.0, 5.0),
                i as f64,
                [i as f64, 0.0, 0.0],
            );
        }
        // last five scores: 1..5
        assert!((hist.recent_score_mean(5).unwrap() - 3.0).abs() < 1e-9);
        assert!((hist.recent_color_mean(5).unwrap()[0] - 3.0).abs() < 1e-9);
        assert!((hist.recent_score_mean(10).unwrap() - 2.5).abs() < 1e-9);
    }
}
