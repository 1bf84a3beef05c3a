//! Oracles and instance generators shared by the integration tests. Nothing
//! here calls the library code it is used to check.

#![allow(dead_code)]

use mps_sim::factors::FactorWeights;
use mps_sim::scenario_io::OrientedBox;
use mps_sim::{AgentGeometry, AgentState, SceneAgent, SceneContext, Trajectory, Vec2};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Minimum smoothing energy, from a dense least-squares solve of the stacked
/// factor rows written out from their definitions.
pub fn dense_ls_energy(anchors: &Trajectory, goal: Vec2, w: &FactorWeights, include_goal: bool) -> f64 {
    let f = anchors.len();
    let dt = anchors.dt;
    let n = 4 * f;
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let col = |t: usize, k: usize| 4 * t + k;
    for t in 0..f - 1 {
        let a = &anchors.states[t];
        let sw = w.motion.sqrt();
        rows.push((vec![(col(t, 0), sw)], sw * a.x));
        rows.push((vec![(col(t, 1), sw)], sw * a.y));
    }
    if include_goal {
        let sw = w.goal.sqrt();
        rows.push((vec![(col(f - 1, 0), sw)], sw * goal.x));
        rows.push((vec![(col(f - 1, 1), sw)], sw * goal.y));
    }
    for t in 0..f - 1 {
        let sw = w.linear.sqrt();
        for k in 0..2 {
            // p_{t+1} - p_t - v_t dt
            rows.push((
                vec![(col(t + 1, k), sw), (col(t, k), -sw), (col(t, k + 2), -sw * dt)],
                0.0,
            ));
        }
        let sw = w.angular.sqrt();
        for k in 2..4 {
            rows.push((vec![(col(t, k), sw), (col(t + 1, k), -sw)], 0.0));
        }
    }
    let mut a = DMatrix::zeros(rows.len(), n);
    let mut b = DVector::zeros(rows.len());
    for (r, (entries, rhs)) in rows.iter().enumerate() {
        for &(c, v) in entries {
            a[(r, c)] += v;
        }
        b[r] = *rhs;
    }
    let x = a.clone().svd(true, true).solve(&b, 1e-14).expect("svd solve");
    (a * x - b).norm_squared()
}

pub fn random_state(rng: &mut ChaCha8Rng, scale: f64) -> AgentState {
    AgentState::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Noisy anchors along a random curve, and an initial guess perturbed away
/// from them.
pub fn random_instance(rng: &mut ChaCha8Rng, f: usize) -> (Trajectory, Vec2, Trajectory) {
    let dt = 0.1;
    let v = Vec2::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0));
    let bend = rng.random_range(-3.0..3.0);
    let anchors: Vec<AgentState> = (1..=f)
        .map(|t| {
            let tt = t as f64 * dt;
            AgentState::new(
                v.x * tt + rng.random_range(-0.5..0.5),
                v.y * tt + bend * tt * tt + rng.random_range(-0.5..0.5),
                v.x + rng.random_range(-2.0..2.0),
                v.y + rng.random_range(-2.0..2.0),
            )
        })
        .collect();
    let goal = anchors.last().unwrap().position() + Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let init: Vec<AgentState> = anchors
        .iter()
        .map(|s| {
            AgentState::new(
                s.x + rng.random_range(-1.0..1.0),
                s.y + rng.random_range(-1.0..1.0),
                s.vx + rng.random_range(-3.0..3.0),
                s.vy + rng.random_range(-3.0..3.0),
            )
        })
        .collect();
    (
        Trajectory::new(anchors, dt).unwrap(),
        goal,
        Trajectory::new(init, dt).unwrap(),
    )
}

/// Central-difference Jacobian of a two-output function of eight inputs.
pub fn central_difference(f: impl Fn(&[f64; 8]) -> Vec2, x: &[f64; 8], h: f64) -> [[f64; 8]; 2] {
    let mut out = [[0.0; 8]; 2];
    for k in 0..8 {
        let (mut up, mut down) = (*x, *x);
        up[k] += h;
        down[k] -= h;
        let d = (f(&up) - f(&down)) / (2.0 * h);
        out[0][k] = d.x;
        out[1][k] = d.y;
    }
    out
}

fn grid_hits(from: &OrientedBox, into: &OrientedBox) -> bool {
    let (s, c) = from.heading.sin_cos();
    (0..100).any(|a| {
        (0..100).any(|b| {
            let u = (2.0 * a as f64 / 99.0 - 1.0) * from.half_length;
            let v = (2.0 * b as f64 / 99.0 - 1.0) * from.half_width;
            let p = from.center + Vec2::new(c * u - s * v, s * u + c * v);
            let local = p - into.center;
            let (si, ci) = into.heading.sin_cos();
            let lu = ci * local.x + si * local.y;
            let lv = -si * local.x + ci * local.y;
            lu.abs() <= into.half_length && lv.abs() <= into.half_width
        })
    })
}

/// Overlap decided by a 100 x 100 grid of points on each box (corners and
/// edges included) tested for containment in the other.
pub fn sampled_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    grid_hits(a, b) || grid_hits(b, a)
}

/// Signed clearance between two boxes along the best separating axis;
/// negative when they interpenetrate.
pub fn separation_margin(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let axes = |o: &OrientedBox| {
        let (s, c) = o.heading.sin_cos();
        [Vec2::new(c, s), Vec2::new(-s, c)]
    };
    let radius = |o: &OrientedBox, axis: &Vec2| {
        let [u, v] = axes(o);
        o.half_length * u.dot(axis).abs() + o.half_width * v.dot(axis).abs()
    };
    let d = b.center - a.center;
    axes(a)
        .iter()
        .chain(axes(b).iter())
        .map(|ax| d.dot(ax).abs() - radius(a, ax) - radius(b, ax))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn random_box(rng: &mut ChaCha8Rng) -> OrientedBox {
    let width = rng.random_range(0.5..2.5);
    let length = width + rng.random_range(0.0..4.0);
    let geom = AgentGeometry::new("b", length, width).unwrap();
    OrientedBox::new(
        Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        &geom,
    )
}

/// One agent with a constant-velocity history on an empty map.
pub fn single_cv_scene(v: Vec2, history_len: usize, dt: f64) -> SceneContext {
    let history = (0..history_len)
        .map(|k| {
            let t = dt * (k as f64 - (history_len - 1) as f64);
            AgentState::new(v.x * t, v.y * t, v.x, v.y)
        })
        .collect();
    let agent = SceneAgent {
        geometry: AgentGeometry::with_default_extent("solo"),
        history,
        intent: None,
    };
    SceneContext::new(dt, vec![agent], vec![], vec![]).unwrap()
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}
