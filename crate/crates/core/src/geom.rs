//! Small 2D primitives shared across the pipeline.

use serde::{Deserialize, Serialize};

/// A 2D point, in scene pixels or normalized coordinates depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Axis-aligned rectangle stored as min/max corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Smallest rectangle covering a non-empty point iterator.
    pub fn covering<'a, I: IntoIterator<Item = &'a Point>>(points: I) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect::new(first.x, first.y, first.x, first.y);
        for p in it {
            r.x0 = r.x0.min(p.x);
            r.y0 = r.y0.min(p.y);
            r.x1 = r.x1.max(p.x);
            r.y1 = r.y1.max(p.y);
        }
        Some(r)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.min(other.x0),
            self.y0.min(other.y0),
            self.x1.max(other.x1),
            self.y1.max(other.y1),
        )
    }

    /// Grow by `fx * width` horizontally and `fy * height` vertically on each side.
    pub fn expand_frac(&self, fx: f64, fy: f64) -> Rect {
        let dx = self.width() * fx;
        let dy = self.height() * fy;
        Rect::new(self.x0 - dx, self.y0 - dy, self.x1 + dx, self.y1 + dy)
    }

    pub fn clip_to(&self, bounds: &Rect) -> Rect {
        Rect::new(
            self.x0.max(bounds.x0),
            self.y0.max(bounds.y0),
            self.x1.min(bounds.x1),
            self.y1.min(bounds.y1),
        )
    }

    /// Expand any side shorter than `min_side` to `min_side`, keeping the center fixed.
    pub fn with_min_side(&self, min_side: f64) -> Rect {
        let mut r = *self;
        if r.width() < min_side {
            let c = (r.x0 + r.x1) / 2.0;
            r.x0 = c - min_side / 2.0;
            r.x1 = c + min_side / 2.0;
        }
        if r.height() < min_side {
            let c = (r.y0 + r.y1) / 2.0;
            r.y0 = c - min_side / 2.0;
            r.y1 = c + min_side / 2.0;
        }
        r
    }
}

/// A circular object region: center plus radius, in scene pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    /// Overlap test used for pattern merging: center distance below the radius sum.
    pub fn overlaps(&self, other: &Circle) -> bool {
        self.center().dist(&other.center()) < self.r + other.r
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center().dist(p) <= self.r
    }
}

/// Least-squares translation+uniform-scale alignment of `src` onto `dst`
/// (paired by index). Returns `(scale, translation, rms)` where `rms` is the
/// root-mean-square residual of the aligned points. `None` when the fit is
/// degenerate (fewer than 2 pairs, or a non-positive optimal scale).
pub fn fit_translation_scale(src: &[Point], dst: &[Point]) -> Option<(f64, Point, f64)> {
    assert_eq!(src.len(), dst.len());
    let n = src.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let sc = Point::new(
        src.iter().map(|p| p.x).sum::<f64>() / nf,
        src.iter().map(|p| p.y).sum::<f64>() / nf,
    );
    let dc = Point::new(
        dst.iter().map(|p| p.x).sum::<f64>() / nf,
        dst.iter().map(|p| p.y).sum::<f64>() / nf,
    );
    let mut num = 0.0;
    let mut den = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s.x - sc.x, s.y - sc.y);
        let (dx, dy) = (d.x - dc.x, d.y - dc.y);
        num += sx * dx + sy * dy;
        den += sx * sx + sy * sy;
    }
    let scale = if den > 1e-12 { num / den } else { 1.0 };
    if scale <= 0.0 {
        return None;
    }
    let mut sq = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let rx = scale * (s.x - sc.x) - (d.x - dc.x);
        let ry = scale * (s.y - sc.y) - (d.y - dc.y);
        sq += rx * rx + ry * ry;
    }
    let t = Point::new(dc.x - scale * sc.x, dc.y - scale * sc.y);
    Some((scale, t, (sq / nf).sqrt()))
}

/// Circle summarizing a set of object feature positions: center is the mean
/// position, radius is half the mean of the bounding-box width and height,
/// with degenerate box sides floored at one pixel.
pub fn object_circle(points: &[Point]) -> Circle {
    assert!(!points.is_empty(), "object needs at least one point");
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let bbox = Rect::covering(points.iter()).unwrap();
    let w = bbox.width().max(1.0);
    let h = bbox.height().max(1.0);
    Circle::new(cx, cy, (w + h) / 4.0)
}
