//! Boxes, points, IOU and 2D affine maps.
//!
//! Boxes are stored center/size in absolute pixel units. Every other module
//! works in that single unit, so distances produced by registration and
//! matching are directly comparable with box sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned box. `confidence` is present on detector outputs only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub class_id: u32,
}

impl BBox {
    /// Validated class-0 box without confidence.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self {
            cx,
            cy,
            w,
            h,
            confidence: None,
            class_id: 0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self> {
        self.confidence = Some(confidence);
        self.validate()?;
        Ok(self)
    }

    pub fn with_class(mut self, class_id: u32) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cx.is_finite() && self.cy.is_finite() && self.w.is_finite() && self.h.is_finite()) {
            return Err(Error::invalid(format!("non-finite box field in {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!(
                "box width and height must be positive (w={}, h={})",
                self.w, self.h
            )));
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid(format!("confidence {c} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn x1(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn y1(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn x2(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn y2(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }
}

pub fn bbox_center(b: &BBox) -> Result<Point2> {
    b.validate()?;
    Ok(b.center())
}

/// Intersection over union of two validated boxes. Class is ignored.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

/// IOU without validation; callers guarantee both boxes are valid.
pub(crate) fn iou_unchecked(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x2().min(b.x2()) - a.x1().max(b.x1());
    let ih = a.y2().min(b.y2()) - a.y1().max(b.y1());
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Row-major 2x3 affine map `p -> A p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2D {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for AffineTransform2D {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineTransform2D {
    pub const IDENTITY: Self = Self {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64, tx: f64, ty: f64) -> Self {
        Self {
            a11,
            a12,
            a21,
            a22,
            tx,
            ty,
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0, tx, ty)
    }

    /// Counter-clockwise rotation by `theta` radians about the origin.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, -s, s, c, 0.0, 0.0)
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.a11 * p.x + self.a12 * p.y + self.tx,
            self.a21 * p.x + self.a22 * p.y + self.ty,
        )
    }

    /// Applies only the linear part (no translation).
    pub fn apply_linear(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a11 * x + self.a12 * y, self.a21 * x + self.a22 * y)
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &AffineTransform2D) -> AffineTransform2D {
        AffineTransform2D {
            a11: self.a11 * inner.a11 + self.a12 * inner.a21,
            a12: self.a11 * inner.a12 + self.a12 * inner.a22,
            a21: self.a21 * inner.a11 + self.a22 * inner.a21,
            a22: self.a21 * inner.a12 + self.a22 * inner.a22,
            tx: self.a11 * inner.tx + self.a12 * inner.ty + self.tx,
            ty: self.a21 * inner.tx + self.a22 * inner.ty + self.ty,
        }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn inverse(&self) -> Option<AffineTransform2D> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (i11, i12, i21, i22) = (self.a22 / det, -self.a12 / det, -self.a21 / det, self.a11 / det);
        Some(AffineTransform2D::new(
            i11,
            i12,
            i21,
            i22,
            -(i11 * self.tx + i12 * self.ty),
            -(i21 * self.tx + i22 * self.ty),
        ))
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22, self.tx, self.ty]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Largest absolute difference between corresponding entries.
    pub fn max_abs_diff(&self, other: &AffineTransform2D) -> f64 {
        [
            self.a11 - other.a11,
            self.a12 - other.a12,
            self.a21 - other.a21,
            self.a22 - other.a22,
            self.tx - other.tx,
            self.ty - other.ty,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}

pub fn apply_affine(t: &AffineTransform2D, p: Point2) -> Point2 {
    t.apply(p)
}

/// Relative singularity threshold on the source-triple determinant,
/// scaled by the squared extent of the triple.
pub const SINGULARITY_EPS: f64 = 1e-9;

/// Exact affine map sending `src[i]` to `dst[i]` for i = 0..3.
///
/// Rejects collinear or coincident source triples: the determinant of the
/// source system must exceed `SINGULARITY_EPS * extent^2`, where extent is
/// the larger side of the triple's bounding box.
pub fn fit_affine_3pt(src: &[Point2; 3], dst: &[Point2; 3]) -> Result<AffineTransform2D> {
    if !src.iter().chain(dst.iter()).all(Point2::is_finite) {
        return Err(Error::invalid("non-finite point in affine sample"));
    }
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (src[0].x, src[0].x, src[0].y, src[0].y);
    for p in &src[1..] {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let extent = (max_x - min_x).max(max_y - min_y);

    // Work relative to the first pair; the 6x6 system splits into a 2x2
    // solve for the linear part followed by the translation.
    let (u1x, u1y) = (src[1].x - src[0].x, src[1].y - src[0].y);
    let (u2x, u2y) = (src[2].x - src[0].x, src[2].y - src[0].y);
    let (v1x, v1y) = (dst[1].x - dst[0].x, dst[1].y - dst[0].y);
    let (v2x, v2y) = (dst[2].x - dst[0].x, dst[2].y - dst[0].y);

    let det = u1x * u2y - u2x * u1y;
    if !(det.abs() > SINGULARITY_EPS * extent * extent) {
        return Err(Error::DegenerateSample(format!(
            "source points are collinear or coincident (det={det:e}, extent={extent:e})"
        )));
    }

    // A = V * U^-1 with U = [u1 u2], V = [v1 v2] as columns.
    let inv = 1.0 / det;
    let (i11, i12, i21, i22) = (u2y * inv, -u2x * inv, -u1y * inv, u1x * inv);
    let a11 = v1x * i11 + v2x * i21;
    let a12 = v1x * i12 + v2x * i22;
    let a21 = v1y * i11 + v2y * i21;
    let a22 = v1y * i12 + v2y * i22;
    let tx = dst[0].x - (a11 * src[0].x + a12 * src[0].y);
    let ty = dst[0].y - (a21 * src[0].x + a22 * src[0].y);
    let t = AffineTransform2D::new(a11, a12, a21, a22, tx, ty);
    if !t.is_finite() {
        return Err(Error::DegenerateSample("affine fit produced non-finite entries".into()));
    }
    Ok(t)
}

/// Least-squares affine fit over `n >= 3` correspondences.
///
/// Returns `None` when the source points are (numerically) collinear.
pub fn fit_affine_lstsq(src: &[Point2], dst: &[Point2]) -> Option<AffineTransform2D> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return None;
    }
    let inv_n = 1.0 / n as f64;
    let (sx, sy) = src.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let (dx, dy) = dst.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let (msx, msy, mdx, mdy) = (sx * inv_n, sy * inv_n, dx * inv_n, dy * inv_n);

    // Normal equations on centered coordinates.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut bxx, mut bxy, mut byx, mut byy) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (px, py) = (p.x - msx, p.y - msy);
        let (qx, qy) = (q.x - mdx, q.y - mdy);
        sxx += px * px;
        sxy += px * py;
        syy += py * py;
        bxx += qx * px;
        bxy += qx * py;
        byx += qy * px;
        byy += qy * py;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = sxx + syy;
    if !(det > SINGULARITY_EPS * scale * scale) {
        return None;
    }
    let (i11, i12, i22) = (syy / det, -sxy / det, sxx / det);
    let a11 = bxx * i11 + bxy * i12;
    let a12 = bxx * i12 + bxy * i22;
    let a21 = byx * i11 + byy * i12;
    let a22 = byx * i12 + byy * i22;
    let t = AffineTransform2D::new(
        a11,
        a12,
        a21,
        a22,
        mdx - (a11 * msx + a12 * msy),
        mdy - (a21 * msx + a22 * msy),
    );
    t.is_finite().then_some(t)
}
