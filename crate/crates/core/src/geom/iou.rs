use serde::{Deserialize, Serialize};

use super::OrientedBox;

/// Vertices closer than this are merged after clipping.
const VERTEX_DEDUP_EPS: f64 = 1e-9;
/// Intersection areas below this are treated as empty.
const AREA_SNAP: f64 = 1e-12;

/// Which overlap measure a matcher uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouMode {
    Bev,
    #[default]
    #[serde(rename = "3d")]
    Iou3d,
}

pub fn iou(a: &OrientedBox, b: &OrientedBox, mode: IouMode) -> f64 {
    match mode {
        IouMode::Bev => iou_bev(a, b),
        IouMode::Iou3d => iou_3d(a, b),
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area of a simple polygon; positive for counter-clockwise order.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - p[1] * q[0]
        })
        .sum();
    twice / 2.0
}

/// Clips a convex polygon against a convex counter-clockwise clip polygon.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let s_cur = cross(a, b, cur);
            let s_prev = cross(a, b, prev);
            let cur_in = s_cur >= 0.0;
            let prev_in = s_prev >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(lerp_at_edge(prev, cur, s_prev, s_cur));
                }
                output.push(cur);
            } else if prev_in {
                output.push(lerp_at_edge(prev, cur, s_prev, s_cur));
            }
        }
    }
    dedup_vertices(output)
}

fn lerp_at_edge(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

fn dedup_vertices(mut poly: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let close = |a: [f64; 2], b: [f64; 2]| {
        (a[0] - b[0]).abs() <= VERTEX_DEDUP_EPS && (a[1] - b[1]).abs() <= VERTEX_DEDUP_EPS
    };
    poly.dedup_by(|a, b| close(*a, *b));
    while poly.len() > 1 && close(poly[0], poly[poly.len() - 1]) {
        poly.pop();
    }
    poly
}

/// Area of the BEV footprint intersection of two boxes.
pub(crate) fn bev_intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    // Cheap reject on circumscribed circles.
    let ra = 0.5 * a.l.hypot(a.w);
    let rb = 0.5 * b.l.hypot(b.w);
    let dc = (a.cx - b.cx).hypot(a.cy - b.cy);
    if dc > ra + rb {
        return 0.0;
    }
    let poly = clip_convex(&a.bev_corners(), &b.bev_corners());
    let area = polygon_area(&poly);
    if area < AREA_SNAP {
        0.0
    } else {
        area
    }
}

fn vertical_overlap(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

fn ratio(inter: f64, union: f64) -> f64 {
    if inter <= 0.0 || union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Bird's-eye-view IoU of the two rotated footprints.
pub fn iou_bev(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = bev_intersection_area(a, b);
    ratio(inter, a.bev_area() + b.bev_area() - inter)
}

/// Volumetric IoU: BEV intersection area times vertical overlap.
pub fn iou_3d(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let dz = vertical_overlap(a, b);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    ratio(inter, a.volume() + b.volume() - inter)
}

/// IoU of two boxes after moving both to a common center and heading.
/// Only the sizes matter.
pub fn aligned_iou_3d(a: [f64; 3], b: [f64; 3]) -> f64 {
    let inter: f64 = a.iter().zip(&b).map(|(x, y)| x.min(*y)).product();
    let va: f64 = a.iter().product();
    let vb: f64 = b.iter().product();
    ratio(inter, va + vb - inter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn bx(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64) -> OrientedBox {
        OrientedBox::new(Point3::new(cx, cy, cz), [l, w, h], yaw).unwrap()
    }

    #[test]
    fn identical_boxes() {
        let a = bx(3.0, 1.0, 0.2, 4.0, 1.8, 1.5, 0.9);
        assert_eq!(iou_bev(&a, &a), 1.0);
        assert_eq!(iou_3d(&a, &a), 1.0);
        // Same box reached through a different yaw representation.
        let b = bx(3.0, 1.0, 0.2, 4.0, 1.8, 1.5, 0.9 + 2.0 * PI);
        assert_abs_diff_eq!(iou_3d(&a, &b), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn offset_squares() {
        let a = bx(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0);
        let b = bx(1.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0);
        assert_abs_diff_eq!(iou_bev(&a, &b), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(iou_3d(&a, &b), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn quarter_turned_square_is_the_same_footprint() {
        let a = bx(0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        let b = bx(0.0, 0.0, 0.0, 2.0, 2.0, 1.0, PI / 2.0);
        assert_abs_diff_eq!(iou_bev(&a, &b), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn diamond_in_square() {
        // A 45° square of side √2 inscribed in a 2×2 square covers area 2.
        let a = bx(0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        let s = 2f64.sqrt();
        let b = bx(0.0, 0.0, 0.0, s, s, 1.0, PI / 4.0);
        assert_abs_diff_eq!(iou_bev(&a, &b), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn disjoint_and_touching() {
        let a = bx(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0);
        let far = bx(10.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.3);
        let touching = bx(2.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0);
        let stacked = bx(0.0, 0.0, 2.0, 2.0, 2.0, 2.0, 0.0);
        assert_eq!(iou_bev(&a, &far), 0.0);
        assert_eq!(iou_bev(&a, &touching), 0.0);
        assert_eq!(iou_3d(&a, &stacked), 0.0);
        assert_eq!(iou_bev(&a, &stacked), 1.0);
    }

    #[test]
    fn aligned_scaled_box() {
        let v = aligned_iou_3d([1.2, 1.2, 1.2], [1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(v, 1.0 / 1.728, epsilon = 1e-12);
    }

    #[test]
    fn vertical_offset_reduces_3d_only() {
        let a = bx(0.0, 0.0, 0.0, 4.0, 2.0, 2.0, 0.3);
        let b = bx(0.0, 0.0, 1.0, 4.0, 2.0, 2.0, 0.3);
        assert_abs_diff_eq!(iou_bev(&a, &b), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(iou_3d(&a, &b), 1.0 / 3.0, epsilon = 1e-9);
    }
}
