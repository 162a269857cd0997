//! Reference implementations used as oracles. Nothing here calls the
//! library's geometry or matching code; boxes are plain `[f64; 7]` arrays
//! `(cx, cy, cz, l, w, h, yaw)`.
#![allow(dead_code)]

use rand::Rng;

pub type Raw = [f64; 7];

pub fn raw(b: &selftrain3d::OrientedBox) -> Raw {
    b.to_array()
}

/// Containment test written directly from the box parameters, boundary
/// inclusive.
pub fn inside(b: &Raw, x: f64, y: f64, z: f64) -> bool {
    Solid::new(b).holds(x, y, z)
}

/// A box with its rotation precomputed, for tight sampling loops.
#[derive(Clone, Copy)]
pub struct Solid {
    c: [f64; 3],
    half: [f64; 3],
    cos: f64,
    sin: f64,
}

impl Solid {
    pub fn new(b: &Raw) -> Self {
        let (sin, cos) = b[6].sin_cos();
        Self {
            c: [b[0], b[1], b[2]],
            half: [b[3] / 2.0, b[4] / 2.0, b[5] / 2.0],
            cos,
            sin,
        }
    }

    #[inline]
    pub fn holds_bev(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.c[0], y - self.c[1]);
        (self.cos * dx + self.sin * dy).abs() <= self.half[0]
            && (-self.sin * dx + self.cos * dy).abs() <= self.half[1]
    }

    #[inline]
    pub fn holds(&self, x: f64, y: f64, z: f64) -> bool {
        (z - self.c[2]).abs() <= self.half[2] && self.holds_bev(x, y)
    }

    /// `[xmin, xmax, ymin, ymax, zmin, zmax]`
    pub fn extent(&self) -> [f64; 6] {
        let hx = (self.cos * self.half[0]).abs() + (self.sin * self.half[1]).abs();
        let hy = (self.sin * self.half[0]).abs() + (self.cos * self.half[1]).abs();
        [
            self.c[0] - hx,
            self.c[0] + hx,
            self.c[1] - hy,
            self.c[1] + hy,
            self.c[2] - self.half[2],
            self.c[2] + self.half[2],
        ]
    }
}

/// Monte-Carlo IoU: uniform samples over the joint bounding box, counting
/// points in both vs. in either. `bev` ignores the vertical axis.
pub fn mc_iou<R: Rng>(a: &Raw, b: &Raw, samples: usize, bev: bool, rng: &mut R) -> f64 {
    let (sa, sb) = (Solid::new(a), Solid::new(b));
    let (ea, eb) = (sa.extent(), sb.extent());
    let lo = [ea[0].min(eb[0]), ea[2].min(eb[2]), ea[4].min(eb[4])];
    let span = [
        ea[1].max(eb[1]) - lo[0],
        ea[3].max(eb[3]) - lo[1],
        ea[5].max(eb[5]) - lo[2],
    ];
    let (mut both, mut either) = (0u64, 0u64);
    for _ in 0..samples {
        let x = lo[0] + span[0] * rng.gen::<f64>();
        let y = lo[1] + span[1] * rng.gen::<f64>();
        let (ia, ib) = if bev {
            (sa.holds_bev(x, y), sb.holds_bev(x, y))
        } else {
            let z = lo[2] + span[2] * rng.gen::<f64>();
            (sa.holds(x, y, z), sb.holds(x, y, z))
        };
        both += u64::from(ia & ib);
        either += u64::from(ia | ib);
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

/// Maps object-frame coordinates to the world, written out by hand.
pub fn to_world(b: &Raw, q: [f64; 3]) -> [f64; 3] {
    let (s, c) = b[6].sin_cos();
    [b[0] + c * q[0] - s * q[1], b[1] + s * q[0] + c * q[1], b[2] + q[2]]
}

/// Inverse of [`to_world`].
pub fn to_object(b: &Raw, p: [f64; 3]) -> [f64; 3] {
    let (s, c) = b[6].sin_cos();
    let (dx, dy) = (p[0] - b[0], p[1] - b[1]);
    [c * dx + s * dy, -s * dx + c * dy, p[2] - b[2]]
}

/// Closed-form IoU of two axis-aligned (yaw 0) boxes.
pub fn axis_aligned_iou(a: &Raw, b: &Raw) -> f64 {
    let overlap = |c1: f64, s1: f64, c2: f64, s2: f64| {
        ((c1 + s1 / 2.0).min(c2 + s2 / 2.0) - (c1 - s1 / 2.0).max(c2 - s2 / 2.0)).max(0.0)
    };
    let inter = overlap(a[0], a[3], b[0], b[3]) * overlap(a[1], a[4], b[1], b[4]) * overlap(a[2], a[5], b[2], b[5]);
    let union = a[3] * a[4] * a[5] + b[3] * b[4] * b[5] - inter;
    inter / union
}

/// Every permutation of `0..n` choosing `k` items in order.
pub fn injections(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(n, k, cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Maximum total weight of a matching between rows and columns of a dense
/// `rows × cols` matrix, by enumeration. Every row is assigned when
/// `rows <= cols`, every column otherwise.
pub fn brute_force_max_assignment(w: &[f64], rows: usize, cols: usize) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    if rows <= cols {
        injections(cols, rows)
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, c)| w[r * cols + c]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        injections(rows, cols)
            .iter()
            .map(|p| p.iter().enumerate().map(|(c, r)| w[r * cols + c]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Textbook greedy NMS: repeatedly take the best remaining box and delete
/// everything overlapping it above the threshold.
pub fn reference_nms(iou: &dyn Fn(usize, usize) -> f64, scores: &[f64], thr: f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut keep = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            if scores[remaining[k]] > scores[remaining[best]] {
                best = k;
            }
        }
        let i = remaining.remove(best);
        keep.push(i);
        remaining.retain(|&j| iou(i, j) <= thr);
    }
    keep
}

/// Interpolated 40-point AP from a ranked TP list, computed the long way:
/// for each recall position scan the whole PR curve.
pub fn reference_ap40(ranked_tp: &[bool], n_gt: usize) -> f64 {
    let mut pr = Vec::new();
    let mut tp = 0;
    for (k, t) in ranked_tp.iter().enumerate() {
        if *t {
            tp += 1;
        }
        pr.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut total = 0.0;
    for i in 1..=40 {
        let r = i as f64 / 40.0;
        let p = pr
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += p;
    }
    total / 40.0
}

pub fn random_raw<R: Rng>(rng: &mut R) -> Raw {
    let l = rng.gen_range(0.5..6.0);
    let aspect: f64 = rng.gen_range(0.2..5.0);
    [
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-0.5..0.5),
        l,
        l / aspect,
        rng.gen_range(0.5..3.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    ]
}

pub fn to_box(r: &Raw) -> selftrain3d::OrientedBox {
    selftrain3d::OrientedBox::new(selftrain3d::Point3::new(r[0], r[1], r[2]), [r[3], r[4], r[5]], r[6])
        .expect("valid random box")
}
