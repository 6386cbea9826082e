//! Axis-aligned bounding boxes, the currency every module trades in.

use crate::num::Real;

/// Axis-aligned box in pixel units, top-left corner plus extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Real> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Self {
        let half = T::c(0.5);
        Self {
            x: cx - w * half,
            y: cy - h * half,
            w,
            h,
        }
    }

    pub fn center(&self) -> (T, T) {
        let half = T::c(0.5);
        (self.x + self.w * half, self.y + self.h * half)
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > T::zero()
            && self.h > T::zero()
    }

    /// Intersection-over-union. Zero for disjoint boxes.
    pub fn iou(&self, other: &Self) -> T {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = (self.x + self.w).min(other.x + other.w);
        let y2 = (self.y + self.h).min(other.y + other.h);
        let iw = (x2 - x1).max(T::zero());
        let ih = (y2 - y1).max(T::zero());
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }

    /// Euclidean distance between box centers.
    pub fn center_error(&self, other: &Self) -> T {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    /// Smallest axis-aligned rectangle covering both boxes.
    pub fn cover(&self, other: &Self) -> Self {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        let x2 = (self.x + self.w).max(other.x + other.w);
        let y2 = (self.y + self.h).max(other.y + other.h);
        Self {
            x,
            y,
            w: x2 - x,
            h: y2 - y,
        }
    }

    /// Clamp the box center into `[0, w) x [0, h)` frame bounds and cap
    /// extents at the frame size. Extents stay positive.
    pub fn clamp_to_frame(&self, frame_w: usize, frame_h: usize) -> Self {
        let fw = T::from_index(frame_w);
        let fh = T::from_index(frame_h);
        let w = self.w.min(fw).max(T::one());
        let h = self.h.min(fh).max(T::one());
        let (cx, cy) = self.center();
        let cx = cx.max(T::zero()).min(fw - T::one());
        let cy = cy.max(T::zero()).min(fh - T::one());
        Self::from_center(cx, cy, w, h)
    }
}

/// Minimum covering rectangle of a non-empty set of boxes.
pub fn min_cover<T: Real>(boxes: &[BoundingBox<T>]) -> BoundingBox<T> {
    assert!(!boxes.is_empty(), "min_cover needs at least one box");
    boxes[1..]
        .iter()
        .fold(boxes[0], |acc, b| acc.cover(b))
}
