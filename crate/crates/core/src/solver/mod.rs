//! Damped Gauss-Newton smoothing of a single agent's trajectory against its
//! anchors, goal and the linear-motion / velocity-change priors.
//!
//! The state vector stacks `[x, y, vx, vy]` for every step of the horizon.
//! Each residual touches at most two adjacent steps, so `J^T J` is
//! block-tridiagonal and every iteration costs O(F).

mod block_tridiag;

use nalgebra::{Matrix2x4, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

pub use block_tridiag::BlockTridiagonal;

use crate::error::{Error, Result};
use crate::factors::{
    check_lengths, jacobian_angular, jacobian_linear, jacobian_motion, residual_angular, residual_goal,
    residual_linear, residual_motion, smoothing_energy, FactorWeights,
};
use crate::geometry::{AgentState, Trajectory, Vec2};

/// Damping is abandoned once it grows past this.
const MAX_DAMPING: f64 = 1e12;
/// Damping restarts from here after a rejected step at zero damping.
const MIN_DAMPING: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub max_iterations: usize,
    /// Relative energy decrease below which the solve counts as converged.
    pub cost_tolerance: f64,
    /// Update norm below which the solve counts as converged.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            cost_tolerance: 1e-8,
            step_tolerance: 1e-10,
            initial_damping: 1e-4,
            damping_increase: 10.0,
            damping_decrease: 0.5,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations >= 1
            && self.cost_tolerance > 0.0
            && self.step_tolerance > 0.0
            && self.initial_damping >= 0.0
            && self.initial_damping.is_finite()
            && self.damping_increase > 1.0
            && self.damping_increase.is_finite()
            && self.damping_decrease > 0.0
            && self.damping_decrease < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid solver parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CostTolerance,
    StepTolerance,
    MaxIterations,
    /// No decreasing step was found before damping hit its cap, or the normal
    /// equations could not be factored.
    DampingExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Accepted linearizations.
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Energy after each accepted step, starting with the initial energy.
    pub energy_history: Vec<f64>,
}

/// Stacked residual blocks of the smoothing problem. Each block is two rows
/// and touches one or two consecutive steps.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    pub steps: usize,
    pub rows: Vec<RowBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowBlock {
    pub entries: Vec<(usize, Matrix2x4<f64>)>,
}

impl BlockJacobian {
    pub fn residual_dim(&self) -> usize {
        2 * self.rows.len()
    }

    pub fn variable_dim(&self) -> usize {
        4 * self.steps
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.residual_dim(), self.variable_dim());
        for (r, row) in self.rows.iter().enumerate() {
            for (t, block) in &row.entries {
                m.fixed_view_mut::<2, 4>(2 * r, 4 * t).copy_from(block);
            }
        }
        m
    }

    /// `(J^T J, J^T r)` in block form.
    pub fn normal_equations(&self, residual: &[f64]) -> (BlockTridiagonal, Vec<Vector4<f64>>) {
        let mut a = BlockTridiagonal::zeros(self.steps);
        let mut g = vec![Vector4::zeros(); self.steps];
        for (r, row) in self.rows.iter().enumerate() {
            let res = nalgebra::Vector2::new(residual[2 * r], residual[2 * r + 1]);
            for (i, (ti, bi)) in row.entries.iter().enumerate() {
                g[*ti] += bi.transpose() * res;
                a.diag[*ti] += bi.transpose() * bi;
                for (tj, bj) in &row.entries[..i] {
                    let (lo, hi, blo, bhi) = if ti < tj { (ti, tj, bi, bj) } else { (tj, ti, bj, bi) };
                    debug_assert_eq!(*hi, lo + 1);
                    a.sub[*lo] += bhi.transpose() * blo;
                }
            }
        }
        (a, g)
    }
}

/// Residual vector (each block scaled by the square root of its weight) and
/// Jacobian at `traj`.
///
/// Row order: per step, the motion block (or goal block at the final step),
/// then per consecutive pair, the linear-motion and velocity-change blocks.
pub fn assemble_system(
    traj: &Trajectory,
    anchors: &Trajectory,
    goal: Vec2,
    weights: &FactorWeights,
    include_goal: bool,
) -> Result<(Vec<f64>, BlockJacobian)> {
    check_lengths(traj, anchors)?;
    let s = &traj.states;
    let f = s.len();
    let mut residual = Vec::with_capacity(8 * f);
    let mut rows = Vec::with_capacity(4 * f);
    let mut push = |r: Vec2, entries: Vec<(usize, Matrix2x4<f64>)>, sw: f64| {
        residual.push(sw * r.x);
        residual.push(sw * r.y);
        rows.push(RowBlock {
            entries: entries.into_iter().map(|(t, b)| (t, b * sw)).collect(),
        });
    };

    let (sm, sg) = (weights.motion.sqrt(), weights.goal.sqrt());
    for t in 0..f - 1 {
        push(
            residual_motion(&s[t], &anchors.states[t]),
            vec![(t, jacobian_motion())],
            sm,
        );
    }
    if include_goal {
        push(residual_goal(&s[f - 1], goal), vec![(f - 1, jacobian_motion())], sg);
    }
    let (sl, sa) = (weights.linear.sqrt(), weights.angular.sqrt());
    let (jl0, jl1) = jacobian_linear(traj.dt);
    let (ja0, ja1) = jacobian_angular();
    for t in 0..f - 1 {
        push(
            residual_linear(&s[t], &s[t + 1], traj.dt),
            vec![(t, jl0), (t + 1, jl1)],
            sl,
        );
        push(residual_angular(&s[t], &s[t + 1]), vec![(t, ja0), (t + 1, ja1)], sa);
    }
    Ok((residual, BlockJacobian { steps: f, rows }))
}

fn apply_step(traj: &Trajectory, delta: &[Vector4<f64>]) -> Trajectory {
    let states = traj
        .states
        .iter()
        .zip(delta)
        .map(|(s, d)| AgentState::new(s.x + d[0], s.y + d[1], s.vx + d[2], s.vy + d[3]))
        .collect();
    Trajectory { states, dt: traj.dt }
}

/// Solves `(A + damping * diag(A)) x = -g`. Variables with a zero diagonal
/// do not enter the energy and are held fixed.
fn damped_step(a: &BlockTridiagonal, g: &[Vector4<f64>], damping: f64) -> Option<Vec<Vector4<f64>>> {
    let mut m = a.clone();
    for d in &mut m.diag {
        let scale = Matrix4::from_diagonal(&d.diagonal().map(|v| if v > 0.0 { damping * v } else { 1.0 }));
        *d += scale;
    }
    let rhs: Vec<_> = g.iter().map(|v| -v).collect();
    m.solve(&rhs)
}

/// Minimizes the smoothing energy of one agent starting from `init`.
///
/// Steps are accepted only when they lower the energy, so the result never
/// scores worse than `init`.
pub fn smooth_trajectory(
    init: &Trajectory,
    anchors: &Trajectory,
    goal: Vec2,
    weights: &FactorWeights,
    include_goal: bool,
    params: &SolverParams,
) -> Result<(Trajectory, SolveReport)> {
    params.validate()?;
    let energy = |t: &Trajectory| smoothing_energy(t, anchors, goal, weights, include_goal);
    let finite = |t: &Trajectory| t.states.iter().all(AgentState::is_finite);
    if !(finite(init) && finite(anchors) && goal.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidInput("smoothing inputs contain non-finite values".into()));
    }
    let initial_energy = energy(init)?;
    if !initial_energy.is_finite() {
        return Err(Error::Numerical(format!(
            "initial smoothing energy is {initial_energy}"
        )));
    }

    let mut x = init.clone();
    let mut e = initial_energy;
    let mut history = vec![e];
    let mut damping = params.initial_damping;
    let mut iterations = 0;

    let finish = |x: Trajectory, e: f64, iterations, termination, history| {
        let report = SolveReport {
            initial_energy,
            final_energy: e,
            iterations,
            converged: matches!(termination, Termination::CostTolerance | Termination::StepTolerance),
            termination,
            energy_history: history,
        };
        Ok((x, report))
    };

    if e == 0.0 {
        return finish(x, e, 0, Termination::CostTolerance, history);
    }

    while iterations < params.max_iterations {
        let (r, jac) = assemble_system(&x, anchors, goal, weights, include_goal)?;
        let (a, g) = jac.normal_equations(&r);
        loop {
            let Some(delta) = damped_step(&a, &g, damping) else {
                damping = (damping * params.damping_increase).max(MIN_DAMPING);
                if damping > MAX_DAMPING {
                    return finish(x, e, iterations, Termination::DampingExhausted, history);
                }
                continue;
            };
            let step_norm = delta.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
            let candidate = apply_step(&x, &delta);
            let e_new = energy(&candidate)?;
            if e_new.is_finite() && e_new < e {
                iterations += 1;
                let decrease = (e - e_new) / e;
                x = candidate;
                e = e_new;
                history.push(e);
                damping *= params.damping_decrease;
                if e == 0.0 || decrease < params.cost_tolerance {
                    return finish(x, e, iterations, Termination::CostTolerance, history);
                }
                if step_norm < params.step_tolerance {
                    return finish(x, e, iterations, Termination::StepTolerance, history);
                }
                break;
            }
            // Rejected. At the optimum, rounding can make an exact step look
            // like a tiny increase.
            if step_norm < params.step_tolerance {
                return finish(x, e, iterations, Termination::StepTolerance, history);
            }
            if e_new.is_finite() && (e_new - e).abs() <= params.cost_tolerance * e {
                return finish(x, e, iterations, Termination::CostTolerance, history);
            }
            damping = (damping * params.damping_increase).max(MIN_DAMPING);
            if damping > MAX_DAMPING {
                return finish(x, e, iterations, Termination::DampingExhausted, history);
            }
        }
    }
    finish(x, e, iterations, Termination::MaxIterations, history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(x: f64, y: f64, vx: f64, vy: f64) -> AgentState {
        AgentState::new(x, y, vx, vy)
    }

    fn line(n: usize, v: Vec2, dt: f64) -> Trajectory {
        let states = (1..=n)
            .map(|k| {
                let p = v * (k as f64 * dt);
                st(p.x, p.y, v.x, v.y)
            })
            .collect();
        Trajectory::new(states, dt).unwrap()
    }

    #[test]
    fn two_step_dimensions() {
        let a = line(2, Vec2::new(1.0, 0.0), 0.1);
        let (r, j) = assemble_system(&a, &a, a.last().position(), &FactorWeights::default(), true).unwrap();
        assert_eq!(r.len(), 8);
        assert_eq!(j.residual_dim(), 8);
        assert_eq!(j.variable_dim(), 8);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let (_, j) = assemble_system(&a, &a, Vec2::zeros(), &FactorWeights::default(), false).unwrap();
        assert_eq!(j.residual_dim(), 6);
    }

    #[test]
    fn residual_norm_matches_energy() {
        let a = line(6, Vec2::new(1.0, 0.2), 0.1);
        let mut t = a.clone();
        t.states[1].vx += 0.4;
        t.states[3].y -= 0.2;
        let w = FactorWeights::default();
        let goal = Vec2::new(0.7, 0.0);
        let (r, _) = assemble_system(&t, &a, goal, &w, true).unwrap();
        let e = smoothing_energy(&t, &a, goal, &w, true).unwrap();
        let rr: f64 = r.iter().map(|v| v * v).sum();
        assert!((rr - e).abs() < 1e-12);
    }

    #[test]
    fn normal_equations_match_dense() {
        let a = line(5, Vec2::new(1.0, 0.2), 0.1);
        let mut t = a.clone();
        t.states[2].x += 0.5;
        let (r, j) = assemble_system(&t, &a, Vec2::new(1.0, 1.0), &FactorWeights::default(), true).unwrap();
        let (nm, g) = j.normal_equations(&r);
        let jd = j.to_dense();
        let rd = nalgebra::DVector::from_column_slice(&r);
        let dense_a = jd.transpose() * &jd;
        let dense_g = jd.transpose() * rd;
        assert!((nm.to_dense() - dense_a).norm() < 1e-12);
        let gd = nalgebra::DVector::from_iterator(20, g.iter().flat_map(|v| v.iter().copied()));
        assert!((gd - dense_g).norm() < 1e-12);
    }

    #[test]
    fn optimal_init_is_fixed_point() {
        let a = line(8, Vec2::new(2.0, -1.0), 0.1);
        let (out, rep) = smooth_trajectory(
            &a,
            &a,
            a.last().position(),
            &FactorWeights::default(),
            true,
            &SolverParams::default(),
        )
        .unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 1);
        assert!(rep.final_energy <= rep.initial_energy);
        for (p, q) in out.states.iter().zip(&a.states) {
            assert!((p.position() - q.position()).norm() < 1e-12);
        }
    }

    #[test]
    fn pure_motion_problem_solved_in_one_step() {
        let a = line(6, Vec2::new(1.0, 0.0), 0.1);
        let init = Trajectory::new(
            a.states.iter().map(|s| st(s.x + 0.3, s.y - 0.7, 0.0, 0.0)).collect(),
            0.1,
        )
        .unwrap();
        let w = FactorWeights {
            goal: 0.0,
            linear: 0.0,
            angular: 0.0,
            ..FactorWeights::default()
        };
        let params = SolverParams {
            initial_damping: 0.0,
            ..SolverParams::default()
        };
        let (out, rep) = smooth_trajectory(&init, &a, Vec2::zeros(), &w, true, &params).unwrap();
        assert!(rep.converged);
        // The first accepted step already lands on the optimum.
        assert!(rep.energy_history[1] < 1e-24, "{rep:?}");
        for (p, q) in out.states[..5].iter().zip(&a.states) {
            assert!((p.position() - q.position()).norm() < 1e-12);
        }
    }

    #[test]
    fn energy_never_increases() {
        let a = line(10, Vec2::new(1.0, 0.0), 0.1);
        let init = Trajectory::new(
            a.states
                .iter()
                .enumerate()
                .map(|(k, s)| st(s.x, s.y + if k % 2 == 0 { 1.0 } else { -1.0 }, -3.0, 2.0))
                .collect(),
            0.1,
        )
        .unwrap();
        let (_, rep) = smooth_trajectory(
            &init,
            &a,
            Vec2::new(1.5, 0.5),
            &FactorWeights::default(),
            true,
            &SolverParams::default(),
        )
        .unwrap();
        assert!(rep.energy_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.final_energy < rep.initial_energy);
        assert!(rep.converged, "{rep:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = line(4, Vec2::new(1.0, 0.0), 0.1);
        let b = line(3, Vec2::new(1.0, 0.0), 0.1);
        let p = SolverParams::default();
        let w = FactorWeights::default();
        assert!(matches!(
            smooth_trajectory(&a, &b, Vec2::zeros(), &w, true, &p),
            Err(Error::ContractViolation(_))
        ));
        let mut bad = a.clone();
        bad.states[1].x = f64::NAN;
        assert!(matches!(
            smooth_trajectory(&bad, &a, Vec2::zeros(), &w, true, &p),
            Err(Error::InvalidInput(_))
        ));
    }
}
