//! Oriented 3D boxes, object-frame transforms, rotated IoU and NMS.
//!
//! Boxes are parameterized by center `(cx, cy, cz)`, size `(l, w, h)` and a
//! heading `yaw` about the vertical axis. `l` runs along the heading, `w` is
//! lateral and `h` vertical. Yaw is kept in `(-π, π]`.

mod iou;
mod nms;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::GeomError;

pub use iou::{aligned_iou_3d, iou, iou_3d, iou_bev, polygon_area, IouMode};
pub use nms::{nms, nms_indices, nms_indices_mode};

/// Slack applied to the inclusive containment test.
///
/// Object-frame coordinates of a point built on a box face come back from the
/// world frame with a few ulps of error; the slack absorbs that.
pub const CONTAINS_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl std::ops::Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut a = yaw.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// Smallest absolute angle between two headings, in `[0, π]`.
pub fn yaw_distance(a: f64, b: f64) -> f64 {
    let d = normalize_yaw(a - b).abs();
    d.min(TAU - d)
}

/// Rotation about the vertical axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationZ {
    cos: f64,
    sin: f64,
}

impl RotationZ {
    pub fn new(yaw: f64) -> Self {
        let (sin, cos) = yaw.sin_cos();
        Self { cos, sin }
    }

    pub fn inverse(self) -> Self {
        Self {
            cos: self.cos,
            sin: -self.sin,
        }
    }

    /// Counter-clockwise rotation of `p` by the stored angle.
    pub fn apply(&self, p: Point3) -> Point3 {
        Point3::new(
            p.x * self.cos - p.y * self.sin,
            p.x * self.sin + p.y * self.cos,
            p.z,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl OrientedBox {
    /// Builds a box, normalizing yaw and validating extents.
    pub fn new(center: Point3, size: [f64; 3], yaw: f64) -> Result<Self, GeomError> {
        let b = Self {
            cx: center.x,
            cy: center.y,
            cz: center.z,
            l: size[0],
            w: size[1],
            h: size[2],
            yaw: normalize_yaw(yaw),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let vals = [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if self.l <= 0.0 || self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeomError::NonPositiveSize([self.l, self.w, self.h]));
        }
        if !(self.yaw > -PI && self.yaw <= PI) {
            return Err(GeomError::YawOutOfRange(self.yaw));
        }
        Ok(())
    }

    pub fn center(&self) -> Point3 {
        Point3::new(self.cx, self.cy, self.cz)
    }

    pub fn size(&self) -> [f64; 3] {
        [self.l, self.w, self.h]
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    pub fn bev_area(&self) -> f64 {
        self.l * self.w
    }

    pub fn rotation(&self) -> RotationZ {
        RotationZ::new(self.yaw)
    }

    pub fn with_center(mut self, c: Point3) -> Self {
        self.cx = c.x;
        self.cy = c.y;
        self.cz = c.z;
        self
    }

    pub fn with_yaw(mut self, yaw: f64) -> Self {
        self.yaw = normalize_yaw(yaw);
        self
    }

    pub fn with_size(mut self, size: [f64; 3]) -> Self {
        self.l = size[0];
        self.w = size[1];
        self.h = size[2];
        self
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.cz - self.h / 2.0, self.cz + self.h / 2.0)
    }

    /// BEV footprint corners in counter-clockwise order.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let rot = self.rotation();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(a, b)| {
            let p = rot.apply(Point3::new(a, b, 0.0));
            [p.x + self.cx, p.y + self.cy]
        })
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw]
    }
}

impl TryFrom<[f64; 7]> for OrientedBox {
    type Error = GeomError;

    fn try_from(a: [f64; 7]) -> Result<Self, Self::Error> {
        let b = Self {
            cx: a[0],
            cy: a[1],
            cz: a[2],
            l: a[3],
            w: a[4],
            h: a[5],
            yaw: a[6],
        };
        b.validate()?;
        Ok(b)
    }
}

impl From<OrientedBox> for [f64; 7] {
    fn from(b: OrientedBox) -> Self {
        b.to_array()
    }
}

/// Expresses `p` in the box frame: `(p - center) · R`, with `R` the heading
/// rotation. The result is `(p_l, p_w, p_h)`.
pub fn world_to_object(p: Point3, b: &OrientedBox) -> Point3 {
    b.rotation().inverse().apply(p - b.center())
}

pub fn object_to_world(p_obj: Point3, b: &OrientedBox) -> Point3 {
    b.rotation().apply(p_obj) + b.center()
}

/// Inclusive containment: every object-frame coordinate within its half extent.
pub fn contains(b: &OrientedBox, p: Point3) -> bool {
    let q = world_to_object(p, b);
    q.x.abs() <= b.l / 2.0 + CONTAINS_EPS
        && q.y.abs() <= b.w / 2.0 + CONTAINS_EPS
        && q.z.abs() <= b.h / 2.0 + CONTAINS_EPS
}
