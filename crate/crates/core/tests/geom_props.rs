mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selftrain3d::geom::{
    contains, iou_3d, iou_bev, nms, nms_indices, object_to_world, world_to_object, OrientedBox,
};
use selftrain3d::Point3;

use common::{axis_aligned_iou, mc_iou, raw, reference_nms, to_box};

fn arb_box() -> impl Strategy<Value = OrientedBox> {
    (
        -5.0..5.0f64,
        -5.0..5.0f64,
        -1.0..1.0f64,
        0.3..6.0f64,
        0.2..5.0f64,
        0.3..3.0f64,
        -10.0..10.0f64,
    )
        .prop_map(|(x, y, z, l, aspect, h, yaw)| {
            to_box(&[x, y, z, l, (l / aspect).max(0.05), h, yaw])
        })
}

fn arb_point() -> impl Strategy<Value = Point3> {
    (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        for f in [iou_bev, iou_3d] {
            let ab = f(&a, &b);
            let ba = f(&b, &a);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() <= 1e-9, "{} vs {}", ab, ba);
        }
    }

    #[test]
    fn identical_boxes_have_unit_iou(a in arb_box()) {
        prop_assert!((iou_bev(&a, &a) - 1.0).abs() <= 1e-9);
        prop_assert!((iou_3d(&a, &a) - 1.0).abs() <= 1e-9);
        // A copy with the heading turned by 2π is the same box.
        let b = a.with_yaw(a.yaw + 2.0 * std::f64::consts::PI);
        prop_assert!((iou_3d(&a, &b) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn iou_3d_at_most_bev_for_shared_vertical_extent(a in arb_box(), b in arb_box()) {
        let b = OrientedBox { cz: a.cz, h: a.h, ..b };
        prop_assert!(iou_3d(&a, &b) <= iou_bev(&a, &b) + 1e-12);
    }

    #[test]
    fn iou_3d_at_most_bev_in_general(a in arb_box(), b in arb_box()) {
        prop_assert!(iou_3d(&a, &b) <= iou_bev(&a, &b) + 1e-12);
    }

    #[test]
    fn frame_round_trip(b in arb_box(), p in arb_point()) {
        let q = object_to_world(world_to_object(p, &b), &b);
        prop_assert!(q.dist(&p) <= 1e-9 * (1.0 + p.dist(&Point3::ORIGIN)));
        let r = world_to_object(object_to_world(p, &b), &b);
        prop_assert!(r.dist(&p) <= 1e-9 * (1.0 + p.dist(&Point3::ORIGIN)));
    }

    #[test]
    fn axis_aligned_matches_closed_form(a in arb_box(), b in arb_box()) {
        let (a, b) = (a.with_yaw(0.0), b.with_yaw(0.0));
        let want = axis_aligned_iou(&raw(&a), &raw(&b));
        prop_assert!((iou_3d(&a, &b) - want).abs() <= 1e-12);
    }

    #[test]
    fn iou_invariant_under_rigid_motion(a in arb_box(), b in arb_box(), t in -3.0..3.0f64, dx in -20.0..20.0f64) {
        let (s, c) = t.sin_cos();
        let mv = |o: OrientedBox| OrientedBox {
            cx: c * o.cx - s * o.cy + dx,
            cy: s * o.cx + c * o.cy,
            ..o
        }
        .with_yaw(o.yaw + t);
        prop_assert!((iou_3d(&a, &b) - iou_3d(&mv(a), &mv(b))).abs() <= 1e-7);
    }

    #[test]
    fn interior_points_are_contained(b in arb_box(), u in -0.5..=0.5f64, v in -0.5..=0.5f64, w in -0.5..=0.5f64) {
        let p = object_to_world(Point3::new(u * b.l, v * b.w, w * b.h), &b);
        prop_assert!(contains(&b, p));
        let far = object_to_world(Point3::new(0.51 * b.l + 1e-3, v * b.w, w * b.h), &b);
        prop_assert!(!contains(&b, far));
    }

    #[test]
    fn nms_matches_reference_and_ignores_order(
        boxes in prop::collection::vec(arb_box(), 0..12),
        thr in 0.05..0.9f64,
        seed in any::<u64>(),
    ) {
        // Distinct scores by construction.
        let scores: Vec<f64> = (0..boxes.len()).map(|i| ((i as u64 * 7919 + seed % 1000) % 997) as f64 / 997.0 + i as f64 * 1e-6).collect();
        let iou = |i: usize, j: usize| iou_3d(&boxes[i], &boxes[j]);
        let mut want = reference_nms(&iou, &scores, thr);
        let mut got = nms_indices(&boxes, &scores, thr);
        want.sort_unstable();
        got.sort_unstable();
        prop_assert_eq!(&got, &want);

        let mut perm: Vec<usize> = (0..boxes.len()).collect();
        perm.reverse();
        perm.rotate_left((seed as usize) % boxes.len().max(1));
        let pb: Vec<(OrientedBox, f64)> = perm.iter().map(|&i| (boxes[i], scores[i])).collect();
        let plain: Vec<(OrientedBox, f64)> = boxes.iter().copied().zip(scores.iter().copied()).collect();
        let mut a: Vec<[u64; 8]> = nms(&plain, thr).iter().map(key).collect();
        let mut b: Vec<[u64; 8]> = nms(&pb, thr).iter().map(key).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }
}

fn key(e: &(OrientedBox, f64)) -> [u64; 8] {
    let r = e.0.to_array();
    [
        r[0].to_bits(),
        r[1].to_bits(),
        r[2].to_bits(),
        r[3].to_bits(),
        r[4].to_bits(),
        r[5].to_bits(),
        r[6].to_bits(),
        e.1.to_bits(),
    ]
}

#[test]
fn bev_iou_agrees_with_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pairs = [
        ([0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0], [1.0, 0.5, 0.0, 4.0, 2.0, 1.5, 0.7]),
        ([0.0, 0.0, 0.0, 5.0, 1.0, 1.0, 0.3], [0.0, 0.0, 0.0, 5.0, 1.0, 1.0, 1.8]),
        ([2.0, -1.0, 0.0, 3.0, 3.0, 2.0, 0.785], [2.5, -0.5, 0.3, 2.0, 1.0, 1.0, -0.4]),
    ];
    for (a, b) in pairs {
        let exact = iou_bev(&to_box(&a), &to_box(&b));
        let est = mc_iou(&a, &b, 400_000, true, &mut rng);
        assert!((exact - est).abs() < 0.01, "{exact} vs {est}");
    }
}

#[test]
fn touching_and_disjoint_boxes() {
    let a = to_box(&[0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]);
    let touching = to_box(&[2.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]);
    let far = to_box(&[10.0, 0.0, 0.0, 2.0, 2.0, 2.0, 1.0]);
    let stacked = to_box(&[0.0, 0.0, 3.0, 2.0, 2.0, 2.0, 0.0]);
    assert_eq!(iou_3d(&a, &touching), 0.0);
    assert_eq!(iou_3d(&a, &far), 0.0);
    assert_eq!(iou_3d(&a, &stacked), 0.0);
    assert!((iou_bev(&a, &stacked) - 1.0).abs() < 1e-12);
}

#[test]
fn nested_box_iou_is_volume_ratio() {
    let outer = to_box(&[0.0, 0.0, 0.0, 4.0, 4.0, 4.0, 0.3]);
    let inner = to_box(&[0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.3]);
    assert!((iou_3d(&outer, &inner) - 0.125).abs() < 1e-12);
    assert!((iou_bev(&outer, &inner) - 0.25).abs() < 1e-12);
}
