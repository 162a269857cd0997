//! Random object scaling: resize a rotated object and the points on it about
//! its center, in the object frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selftrain3d::augment::{random_object_scale, sample_ros_factors, ObjectScaleFactors};
use selftrain3d::geom::contains;
use selftrain3d::{OrientedBox, Point3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let car = OrientedBox::new(Point3::new(12.0, -3.0, 0.8), [4.5, 1.9, 1.6], 0.6)?;
    let points = vec![
        Point3::new(12.0, -3.0, 0.8),
        Point3::new(13.5, -2.2, 1.4),
        Point3::new(11.2, -3.4, 0.2),
    ];

    // Shrink a large source-domain car towards a smaller target-domain size.
    let factors = ObjectScaleFactors::new(0.85, 0.9, 0.95)?;
    let (moved, scaled) = random_object_scale(&points, &car, factors)?;
    println!("box {:?} -> {:?}", car.size(), scaled.size());
    for (p, q) in points.iter().zip(&moved) {
        println!("  ({:.3}, {:.3}, {:.3}) -> ({:.3}, {:.3}, {:.3}) inside: {}", p.x, p.y, p.z, q.x, q.y, q.z, contains(&scaled, *q));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..3 {
        let f = sample_ros_factors(&mut rng, 0.75, 1.1)?;
        println!("sampled factors l {:.3} w {:.3} h {:.3}", f.r_l, f.r_w, f.r_h);
    }

    // Points outside the box are rejected rather than silently scaled.
    let stray = [Point3::new(30.0, 0.0, 0.0)];
    println!("stray point: {:?}", random_object_scale(&stray, &car, factors).err());
    Ok(())
}
