//! Points and axis-aligned boxes in normalized `[0, 1]²` screen coordinates.

use crate::{Error, Result, Scalar};

fn check_unit<T: Scalar>(v: T) -> Result<T> {
    if v >= T::zero() && v <= T::one() {
        Ok(v)
    } else {
        Err(Error::Range { value: v.as_f64() })
    }
}

/// A point given as fractions of image width (`x`) and height (`y`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormPoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> NormPoint<T> {
    /// Builds a point, rejecting coordinates outside `[0, 1]` (and NaN).
    pub fn new(x: T, y: T) -> Result<Self> {
        Ok(Self {
            x: check_unit(x)?,
            y: check_unit(y)?,
        })
    }

    /// Builds a point without range checks. Callers guarantee the invariant.
    pub const fn new_unchecked(x: T, y: T) -> Self {
        Self { x, y }
    }
}

/// An axis-aligned box `(x0, y0, x1, y1)` with `x0 <= x1` and `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormBox<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Scalar> NormBox<T> {
    /// Builds a box, checking range and corner ordering.
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        let (x0, y0, x1, y1) = (check_unit(x0)?, check_unit(y0)?, check_unit(x1)?, check_unit(y1)?);
        if x0 > x1 || y0 > y1 {
            return Err(Error::Validation(format!(
                "box corners out of order: ({x0}, {y0}, {x1}, {y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Builds a box from two arbitrary corners, reordering them.
    pub fn from_corners(ax: T, ay: T, bx: T, by: T) -> Result<Self> {
        Self::new(ax.min(bx), ay.min(by), ax.max(bx), ay.max(by))
    }

    pub const fn new_unchecked(x0: T, y0: T, x1: T, y1: T) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn unit() -> Self {
        Self::new_unchecked(T::zero(), T::zero(), T::one(), T::one())
    }

    pub fn width(&self) -> T {
        self.x1 - self.x0
    }

    pub fn height(&self) -> T {
        self.y1 - self.y0
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> NormPoint<T> {
        let two = T::of(2.0);
        NormPoint::new_unchecked((self.x0 + self.x1) / two, (self.y0 + self.y1) / two)
    }

    /// Closed-interval membership on both axes.
    pub fn contains(&self, p: &NormPoint<T>) -> bool {
        self.x0 <= p.x && p.x <= self.x1 && self.y0 <= p.y && p.y <= self.y1
    }

    /// Overlap area with `other`; zero when disjoint or touching.
    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w > T::zero() && h > T::zero() {
            w * h
        } else {
            T::zero()
        }
    }

    /// Intersection box, if it has positive area.
    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x1 > x0 && y1 > y0).then_some(Self::new_unchecked(x0, y0, x1, y1))
    }

    /// Applies `v -> v * scale + offset` on each axis.
    pub fn affine(&self, scale: T, offset_x: T, offset_y: T) -> Self {
        Self::new_unchecked(
            self.x0 * scale + offset_x,
            self.y0 * scale + offset_y,
            self.x1 * scale + offset_x,
            self.y1 * scale + offset_y,
        )
    }
}

/// Area of the union of `rects`, restricted to `clip`.
///
/// Exact for axis-aligned rectangles: coordinates are compressed and every
/// elementary cell is tested once, so the cost is `O(k³)` for `k` rectangles.
pub fn union_area_within<T: Scalar>(clip: &NormBox<T>, rects: &[NormBox<T>]) -> T {
    let clipped: Vec<NormBox<T>> = rects.iter().filter_map(|r| r.intersect(clip)).collect();
    if clipped.is_empty() {
        return T::zero();
    }
    let mut xs: Vec<T> = clipped.iter().flat_map(|r| [r.x0, r.x1]).collect();
    let mut ys: Vec<T> = clipped.iter().flat_map(|r| [r.y0, r.y1]).collect();
    let by_value = |a: &T, b: &T| a.partial_cmp(b).expect("finite coordinates");
    xs.sort_by(by_value);
    xs.dedup();
    ys.sort_by(by_value);
    ys.dedup();

    let mut area = T::zero();
    for xw in xs.windows(2) {
        let mx = (xw[0] + xw[1]) / T::of(2.0);
        for yw in ys.windows(2) {
            let my = (yw[0] + yw[1]) / T::of(2.0);
            let covered = clipped
                .iter()
                .any(|r| r.x0 <= mx && mx <= r.x1 && r.y0 <= my && my <= r.y1);
            if covered {
                area = area + (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    area
}
