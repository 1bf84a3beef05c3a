//! Oriented-box overlap via separating axes, cross-checked against a
//! 100 x 100 grid of points on each box (corners included) tested for
//! containment in the other box.

use mps_sim::scenario_io::OrientedBox;
use mps_sim::seed::rng_from_seed;
use mps_sim::{AgentGeometry, Vec2};
use rand::Rng;

fn grid_hits(from: &OrientedBox, into: &OrientedBox) -> bool {
    let (s, c) = from.heading.sin_cos();
    (0..100).any(|a| {
        (0..100).any(|b| {
            let u = (2.0 * a as f64 / 99.0 - 1.0) * from.half_length;
            let v = (2.0 * b as f64 / 99.0 - 1.0) * from.half_width;
            into.contains(from.center + Vec2::new(c * u - s * v, s * u + c * v))
        })
    })
}

fn main() {
    let geom = AgentGeometry::with_default_extent("car");
    let mut rng = rng_from_seed(3);
    let pairs = 200;
    let mut agree = 0;
    for _ in 0..pairs {
        let a = OrientedBox::new(Vec2::zeros(), rng.random_range(-3.2..3.2), &geom);
        let b = OrientedBox::new(
            Vec2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)),
            rng.random_range(-3.2..3.2),
            &geom,
        );
        let sampled = grid_hits(&a, &b) || grid_hits(&b, &a);
        agree += usize::from(sampled == a.overlaps(&b));
    }
    println!("SAT and point sampling agree on {agree}/{pairs} pairs");
}
