//! Multiple-shooting solver for the state/co-state boundary value problem
//! `x(0) = x0`, `x(t_final) = x_target` with the input left unconstrained.
//!
//! The horizon is split into segments at grid indices. Unknowns are the
//! co-state at every segment start and the state at every interior segment
//! start; residuals are the continuity gaps between segments plus the
//! terminal state error. A damped Newton iteration with a finite-difference
//! Jacobian drives the residual to zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::integrate::integrate_pmp_ode;
use crate::problem::{Matrix, OcpProblem, Vector};

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1.0 / 1_048_576.0; // 2^-20
const FD_REL_STEP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n_segments: usize,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// RK4 substeps per grid interval.
    pub fine_substeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_segments: 20,
            newton_tol: 1e-8,
            max_newton_iters: 100,
            fine_substeps: 4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(Error::arg("n_segments must be at least 1"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::arg("newton_tol must be positive"));
        }
        if self.fine_substeps == 0 {
            return Err(Error::arg("fine_substeps must be at least 1"));
        }
        Ok(())
    }
}

/// Optimal state and co-state trajectories for one initial state, sampled
/// on the problem grid (row k is time k·δ).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub x0: Vector,
    pub x_traj: Matrix,
    pub lambda_traj: Matrix,
    pub converged: bool,
    pub residual_norm: f64,
}

impl TrajectoryPair {
    pub fn len(&self) -> usize {
        self.x_traj.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x_traj.nrows() == 0
    }

    pub fn state(&self, k: usize) -> Vector {
        self.x_traj.row(k).transpose()
    }

    pub fn costate(&self, k: usize) -> Vector {
        self.lambda_traj.row(k).transpose()
    }

    /// `u = −R⁻¹gᵀλ` at every grid point.
    pub fn control_traj(&self, problem: &OcpProblem) -> Matrix {
        let n = self.len();
        let q = problem.input_dim();
        let mut u = Matrix::zeros(n, q);
        for k in 0..n {
            let uk = problem.unconstrained_control_unchecked(&self.state(k), &self.costate(k));
            u.set_row(k, &uk.transpose());
        }
        u
    }
}

struct Layout {
    p: usize,
    /// Grid index of each segment start, plus the final index.
    bounds: Vec<usize>,
}

impl Layout {
    fn new(p: usize, steps: usize, n_segments: usize) -> Self {
        let intervals = steps - 1;
        let segs = n_segments.min(intervals).max(1);
        let bounds = (0..=segs)
            .map(|i| ((i * intervals) as f64 / segs as f64).round() as usize)
            .collect();
        Layout { p, bounds }
    }

    fn segments(&self) -> usize {
        self.bounds.len() - 1
    }

    fn unknowns(&self) -> usize {
        self.p * (2 * self.segments() - 1)
    }

    /// Column offset of segment i's start state (None for i = 0, which is pinned).
    fn x_col(&self, i: usize) -> Option<usize> {
        (i > 0).then(|| self.p + 2 * self.p * (i - 1))
    }

    fn lambda_col(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.p + 2 * self.p * (i - 1) + self.p
        }
    }

    fn start(&self, v: &Vector, x0: &Vector, i: usize) -> (Vector, Vector) {
        let p = self.p;
        let x = match self.x_col(i) {
            Some(c) => v.rows(c, p).into_owned(),
            None => x0.clone(),
        };
        (x, v.rows(self.lambda_col(i), p).into_owned())
    }
}

struct Shooter<'a> {
    problem: &'a OcpProblem,
    config: &'a SolverConfig,
    layout: Layout,
    x0: Vector,
}

impl Shooter<'_> {
    fn integrate_segment(
        &self,
        i: usize,
        x: &Vector,
        lambda: &Vector,
        mut record: Option<(&mut Matrix, &mut Matrix)>,
    ) -> Result<(Vector, Vector)> {
        let dt = self.problem.delta();
        let (from, to) = (self.layout.bounds[i], self.layout.bounds[i + 1]);
        let (mut x, mut l) = (x.clone(), lambda.clone());
        for k in from..to {
            if let Some((xs, ls)) = record.as_mut() {
                xs.set_row(k, &x.transpose());
                ls.set_row(k, &l.transpose());
            }
            (x, l) = integrate_pmp_ode(self.problem, &x, &l, dt, self.config.fine_substeps)?;
        }
        Ok((x, l))
    }

    fn residual(&self, v: &Vector) -> Result<Vector> {
        let p = self.layout.p;
        let segs = self.layout.segments();
        let mut r = Vector::zeros(self.layout.unknowns());
        for i in 0..segs {
            let (x, l) = self.layout.start(v, &self.x0, i);
            let (xe, le) = self.integrate_segment(i, &x, &l, None)?;
            if i + 1 < segs {
                let (xn, ln) = self.layout.start(v, &self.x0, i + 1);
                r.rows_mut(2 * p * i, p).copy_from(&(xe - xn));
                r.rows_mut(2 * p * i + p, p).copy_from(&(le - ln));
            } else {
                r.rows_mut(2 * p * i, p).copy_from(&(xe - self.problem.x_target()));
            }
        }
        Ok(r)
    }

    fn jacobian(&self, v: &Vector) -> Result<Matrix> {
        let p = self.layout.p;
        let segs = self.layout.segments();
        let m = self.layout.unknowns();
        let mut jac = DMatrix::zeros(m, m);
        for i in 0..segs {
            let (x, l) = self.layout.start(v, &self.x0, i);
            let rows = if i + 1 < segs { 2 * p } else { p };
            let mut cols: Vec<(usize, bool, usize)> = Vec::new();
            if let Some(c) = self.layout.x_col(i) {
                cols.extend((0..p).map(|j| (c + j, true, j)));
            }
            let lc = self.layout.lambda_col(i);
            cols.extend((0..p).map(|j| (lc + j, false, j)));
            for (col, is_state, j) in cols {
                let base = if is_state { x[j] } else { l[j] };
                let h = FD_REL_STEP * base.abs().max(1.0);
                let (mut xp, mut lp, mut xm, mut lm) = (x.clone(), l.clone(), x.clone(), l.clone());
                if is_state {
                    xp[j] += h;
                    xm[j] -= h;
                } else {
                    lp[j] += h;
                    lm[j] -= h;
                }
                let (xe_p, le_p) = self.integrate_segment(i, &xp, &lp, None)?;
                let (xe_m, le_m) = self.integrate_segment(i, &xm, &lm, None)?;
                let dx = (xe_p - xe_m) / (2.0 * h);
                let dl = (le_p - le_m) / (2.0 * h);
                for r in 0..p {
                    jac[(2 * p * i + r, col)] = dx[r];
                    if rows == 2 * p {
                        jac[(2 * p * i + p + r, col)] = dl[r];
                    }
                }
            }
            // the next segment's start variables enter this block with −I
            if i + 1 < segs {
                let xc = self.layout.x_col(i + 1).expect("interior start");
                let lc = self.layout.lambda_col(i + 1);
                for r in 0..p {
                    jac[(2 * p * i + r, xc + r)] = -1.0;
                    jac[(2 * p * i + p + r, lc + r)] = -1.0;
                }
            }
        }
        Ok(jac)
    }

    fn initial_guess(&self, warm: Option<&TrajectoryPair>) -> Vector {
        let p = self.layout.p;
        let mut v = Vector::zeros(self.layout.unknowns());
        let n = self.problem.steps();
        let warm = warm.filter(|w| {
            w.len() == n
                && w.x_traj.ncols() == p
                && w.x_traj.iter().chain(w.lambda_traj.iter()).all(|a| a.is_finite())
        });
        for i in 0..self.layout.segments() {
            let k = self.layout.bounds[i];
            if let Some(c) = self.layout.x_col(i) {
                let x = match warm {
                    Some(w) => w.state(k),
                    None => self.problem.x_target().clone(),
                };
                v.rows_mut(c, p).copy_from(&x);
            }
            if let Some(w) = warm {
                v.rows_mut(self.layout.lambda_col(i), p).copy_from(&w.costate(k));
            }
        }
        v
    }

    fn trajectories(&self, v: &Vector) -> Result<(Matrix, Matrix)> {
        let p = self.layout.p;
        let n = self.problem.steps();
        let mut xs = Matrix::zeros(n, p);
        let mut ls = Matrix::zeros(n, p);
        let segs = self.layout.segments();
        for i in 0..segs {
            let (x, l) = self.layout.start(v, &self.x0, i);
            let (xe, le) = self.integrate_segment(i, &x, &l, Some((&mut xs, &mut ls)))?;
            if i + 1 == segs {
                xs.set_row(n - 1, &xe.transpose());
                ls.set_row(n - 1, &le.transpose());
            }
        }
        Ok((xs, ls))
    }

    fn failed_pair(&self, residual_norm: f64) -> TrajectoryPair {
        let (n, p) = (self.problem.steps(), self.layout.p);
        let mut x_traj = Matrix::from_element(n, p, f64::NAN);
        x_traj.set_row(0, &self.x0.transpose());
        TrajectoryPair {
            x0: self.x0.clone(),
            x_traj,
            lambda_traj: Matrix::from_element(n, p, f64::NAN),
            converged: false,
            residual_norm,
        }
    }

    fn solve(&self, warm: Option<&TrajectoryPair>) -> TrajectoryPair {
        let mut v = self.initial_guess(warm);
        let mut r = match self.residual(&v) {
            Ok(r) if r.iter().all(|a| a.is_finite()) => r,
            _ => return self.failed_pair(f64::INFINITY),
        };
        let mut converged = false;
        for _ in 0..=self.config.max_newton_iters {
            if r.amax() <= self.config.newton_tol {
                converged = true;
                break;
            }
            let Ok(jac) = self.jacobian(&v) else { break };
            let Some(step) = jac.lu().solve(&(-&r)) else { break };
            if step.iter().any(|a| !a.is_finite()) {
                break;
            }
            let merit = r.norm();
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha >= MIN_STEP {
                let trial = &v + &step * alpha;
                if let Ok(rt) = self.residual(&trial) {
                    if rt.iter().all(|a| a.is_finite()) && rt.norm() <= (1.0 - ARMIJO_C * alpha) * merit {
                        accepted = Some((trial, rt));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((vn, rn)) => {
                    v = vn;
                    r = rn;
                }
                None => break,
            }
        }
        let residual_norm = r.amax();
        match self.trajectories(&v) {
            Ok((x_traj, lambda_traj)) => TrajectoryPair {
                x0: self.x0.clone(),
                x_traj,
                lambda_traj,
                converged,
                residual_norm,
            },
            Err(_) => self.failed_pair(residual_norm),
        }
    }
}

fn check_x0(problem: &OcpProblem, x0: &Vector) -> Result<()> {
    if x0.len() != problem.state_dim() {
        return Err(Error::arg(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            problem.state_dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("x0 must be finite"));
    }
    Ok(())
}

/// Solve from a zero initial guess (co-states 0, interior states at the target).
pub fn solve_tpbvp(problem: &OcpProblem, x0: &Vector, config: &SolverConfig) -> Result<TrajectoryPair> {
    solve_tpbvp_warm(problem, x0, config, None)
}

/// Solve, seeding the shooting unknowns from a previous solution on the same
/// grid when one is given.
pub fn solve_tpbvp_warm(
    problem: &OcpProblem,
    x0: &Vector,
    config: &SolverConfig,
    warm: Option<&TrajectoryPair>,
) -> Result<TrajectoryPair> {
    config.validate()?;
    check_x0(problem, x0)?;
    let shooter = Shooter {
        problem,
        config,
        layout: Layout::new(problem.state_dim(), problem.steps(), config.n_segments),
        x0: x0.clone(),
    };
    Ok(shooter.solve(warm))
}

/// Solve a sequence of initial states, each warm-started from the previous
/// converged solution, retrying from zero if the warm start fails.
///
/// `x0_list` must be ordered by non-decreasing distance from the target.
pub fn continuation_solve(
    problem: &OcpProblem,
    x0_list: &[Vector],
    config: &SolverConfig,
) -> Result<Vec<TrajectoryPair>> {
    config.validate()?;
    let target = problem.x_target();
    let mut last_dist = 0.0;
    for x0 in x0_list {
        check_x0(problem, x0)?;
        let d = (x0 - target).norm();
        if d + 1e-12 < last_dist {
            return Err(Error::arg("x0_list must be sorted by distance from x_target"));
        }
        last_dist = d;
    }
    let mut out: Vec<TrajectoryPair> = Vec::with_capacity(x0_list.len());
    let mut warm: Option<TrajectoryPair> = None;
    for x0 in x0_list {
        let mut pair = solve_tpbvp_warm(problem, x0, config, warm.as_ref())?;
        if !pair.converged && warm.is_some() {
            let cold = solve_tpbvp(problem, x0, config)?;
            if cold.converged || cold.residual_norm < pair.residual_norm {
                pair = cold;
            }
        }
        if pair.converged {
            warm = Some(pair.clone());
        }
        out.push(pair);
    }
    Ok(out)
}

/// Reach a far initial state by continuation along the straight line from
/// `start` (or the target) in increments of at most `max_step`. A failed
/// increment is halved, up to six times, before giving up.
pub fn solve_by_homotopy(
    problem: &OcpProblem,
    x0: &Vector,
    config: &SolverConfig,
    start: Option<&TrajectoryPair>,
    max_step: f64,
) -> Result<TrajectoryPair> {
    check_x0(problem, x0)?;
    if !(max_step > 0.0) {
        return Err(Error::arg("max_step must be positive"));
    }
    let mut current = start.map_or_else(|| problem.x_target().clone(), |s| s.x0.clone());
    let mut warm = start.filter(|s| s.converged).cloned();
    let mut step = max_step;
    loop {
        let gap = x0 - &current;
        let dist = gap.amax();
        let next = if dist <= step { x0.clone() } else { &current + gap * (step / dist) };
        let mut pair = solve_tpbvp_warm(problem, &next, config, warm.as_ref())?;
        if !pair.converged && warm.is_some() {
            let cold = solve_tpbvp(problem, &next, config)?;
            if cold.converged {
                pair = cold;
            }
        }
        if pair.converged {
            if next == *x0 {
                return Ok(pair);
            }
            current = next;
            warm = Some(pair);
            step = (step * 2.0).min(max_step);
        } else {
            step *= 0.5;
            if step < max_step / 64.0 {
                return solve_tpbvp_warm(problem, x0, config, warm.as_ref());
            }
        }
    }
}
