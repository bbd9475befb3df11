//! Axis-aligned boxes and the translate-and-scale moves between them.
//!
//! Boxes are real-valued and anchored at their top-left corner. A
//! [`Transformation`] translates that corner and scales width and height
//! isotropically about it.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox { x, y, w, h });
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    /// Same size, shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Moves the box by `y`: the top-left corner shifts by `(dx, dy)` and
    /// both sides are multiplied by `ds`.
    pub fn apply(&self, y: &Transformation) -> Self {
        Self {
            x: self.x + y.dx,
            y: self.y + y.dy,
            w: self.w * y.ds,
            h: self.h * y.ds,
        }
    }

    /// Area of the intersection, zero when disjoint.
    pub fn intersection_area(&self, other: &Self) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn iou(&self, other: &Self) -> f64 {
        iou(self, other)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// A candidate move of the target state: translation plus isotropic scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transformation {
    dx: f64,
    dy: f64,
    ds: f64,
}

impl Transformation {
    pub const IDENTITY: Self = Self {
        dx: 0.0,
        dy: 0.0,
        ds: 1.0,
    };

    pub fn new(dx: f64, dy: f64, ds: f64) -> Result<Self> {
        if !(dx.is_finite() && dy.is_finite() && ds.is_finite()) || ds <= 0.0 {
            return Err(Error::InvalidTransformation { dx, dy, ds });
        }
        Ok(Self { dx, dy, ds })
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self { dx, dy, ds: 1.0 }
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    /// The move that undoes `self` when applied afterwards.
    pub fn inverse(&self) -> Self {
        Self {
            dx: -self.dx,
            dy: -self.dy,
            ds: 1.0 / self.ds,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

impl Default for Transformation {
    fn default() -> Self {
        Self::IDENTITY
    }
}

pub fn apply(p: &BoundingBox, y: &Transformation) -> BoundingBox {
    p.apply(y)
}

/// Intersection over union, computed analytically on real coordinates.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    /// Maps the four corners through an explicit affine matrix
    /// `[ds 0 dx; 0 ds dy]` acting on corner offsets from the anchor.
    fn affine_oracle(p: &BoundingBox, y: &Transformation) -> BoundingBox {
        let m = [[y.ds(), 0.0, p.x() + y.dx()], [0.0, y.ds(), p.y() + y.dy()]];
        let corners = [(0.0, 0.0), (p.w(), 0.0), (0.0, p.h()), (p.w(), p.h())];
        let mapped: Vec<(f64, f64)> = corners
            .iter()
            .map(|&(u, v)| {
                (
                    m[0][0] * u + m[0][1] * v + m[0][2],
                    m[1][0] * u + m[1][1] * v + m[1][2],
                )
            })
            .collect();
        let min_x = mapped.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let max_x = mapped.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = mapped.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let max_y = mapped.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        bb(min_x, min_y, max_x - min_x, max_y - min_y)
    }

    /// Counts unit cells of the integer grid covered by each box.
    fn pixel_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for py in -50..100 {
            for px in -50..100 {
                let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                let inside =
                    |r: &BoundingBox| cx > r.x() && cx < r.right() && cy > r.y() && cy < r.bottom();
                let (ia, ib) = (inside(a), inside(b));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn construction_rejects_degenerate_boxes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(Transformation::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn apply_examples() {
        let p = bb(10.0, 10.0, 20.0, 20.0);
        assert_eq!(p.apply(&Transformation::IDENTITY), p);
        assert_eq!(
            p.apply(&Transformation::translation(5.0, -3.0)),
            bb(15.0, 7.0, 20.0, 20.0)
        );
        let y = Transformation::new(0.0, 0.0, 2.0).unwrap();
        assert_eq!(p.apply(&y), bb(10.0, 10.0, 40.0, 40.0));
        assert_eq!(p.apply(&y), affine_oracle(&p, &y));
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 5.0, 5.0)), 0.0);
        let b = bb(5.0, 0.0, 10.0, 10.0);
        assert_relative_eq!(pixel_iou(&a, &b), 50.0 / 150.0);
        assert_relative_eq!(iou(&a, &b), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn center_distance_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(center_distance(&a, &a), 0.0);
        assert_eq!(center_distance(&a, &bb(3.0, 4.0, 10.0, 10.0)), 5.0);
        assert_relative_eq!(
            center_distance(&a, &bb(0.0, 0.0, 20.0, 20.0)),
            5.0 * 2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &bb(10.0, 0.0, 10.0, 10.0)), 0.0);
    }

    fn any_box() -> impl Strategy<Value = BoundingBox> {
        (
            -100.0..100.0f64,
            -100.0..100.0f64,
            0.5..80.0f64,
            0.5..80.0f64,
        )
            .prop_map(|(x, y, w, h)| bb(x, y, w, h))
    }

    fn integer_box() -> impl Strategy<Value = BoundingBox> {
        (-20i32..40, -20i32..40, 1i32..40, 1i32..40)
            .prop_map(|(x, y, w, h)| bb(x as f64, y as f64, w as f64, h as f64))
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in any_box(), b in any_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn iou_matches_pixel_count_on_integer_boxes(a in integer_box(), b in integer_box()) {
            prop_assert!((iou(&a, &b) - pixel_iou(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn inverse_recovers_box(
            p in any_box(),
            dx in -50.0..50.0f64,
            dy in -50.0..50.0f64,
            ds in 0.2..5.0f64,
        ) {
            let y = Transformation::new(dx, dy, ds).unwrap();
            let back = p.apply(&y).apply(&y.inverse());
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            prop_assert!(rel(back.x(), p.x()) < 1e-9);
            prop_assert!(rel(back.y(), p.y()) < 1e-9);
            prop_assert!(rel(back.w(), p.w()) < 1e-9);
            prop_assert!(rel(back.h(), p.h()) < 1e-9);
        }

        #[test]
        fn center_distance_triangle_inequality(a in any_box(), b in any_box(), c in any_box()) {
            let ab = center_distance(&a, &b);
            let bc = center_distance(&b, &c);
            let ac = center_distance(&a, &c);
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
