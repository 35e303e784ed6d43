//! Control-affine optimal control problems and their Pontryagin conditions.
//!
//! A problem minimizes `½∫ xᵀQx + uᵀRu dt` subject to `ẋ = f(x) + g(x)u`,
//! a box on `u`, and a fixed terminal state. The infinite horizon is replaced
//! by a finite `t_final` with the terminal pin `x(t_final) = x_target`, and
//! time is sampled on a uniform grid of step `delta`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

const HESSIAN_FD_STEP: f64 = 1e-5;

/// Drift `f`, input matrix `g` and their derivatives.
///
/// Second derivatives are only needed for exact gradients through the
/// co-state integrator; the defaults fall back to central differences of the
/// analytic first derivatives.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn drift(&self, x: &Vector) -> Vector;

    /// `∂f/∂x`, p×p.
    fn drift_jacobian(&self, x: &Vector) -> Matrix;

    /// `g(x)`, p×q.
    fn input_matrix(&self, x: &Vector) -> Matrix;

    /// Entry `i` is `∂g/∂x_i` (p×q).
    fn input_matrix_jacobian(&self, x: &Vector) -> Vec<Matrix>;

    /// Entry `k` is `∂(∂f/∂x)/∂x_k` (p×p).
    fn drift_hessian(&self, x: &Vector) -> Vec<Matrix> {
        central_difference(x, |y| vec![self.drift_jacobian(y)])
            .into_iter()
            .map(|mut v| v.remove(0))
            .collect()
    }

    /// Entry `[i][k]` is `∂²g/∂x_i∂x_k` (p×q).
    fn input_matrix_hessian(&self, x: &Vector) -> Vec<Vec<Matrix>> {
        let by_k = central_difference(x, |y| self.input_matrix_jacobian(y));
        let p = x.len();
        (0..p)
            .map(|i| (0..p).map(|k| by_k[k][i].clone()).collect())
            .collect()
    }
}

fn central_difference(x: &Vector, eval: impl Fn(&Vector) -> Vec<Matrix>) -> Vec<Vec<Matrix>> {
    (0..x.len())
        .map(|k| {
            let h = HESSIAN_FD_STEP * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            eval(&xp)
                .into_iter()
                .zip(eval(&xm))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        })
        .collect()
}

type VecFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type MatListFn = Arc<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>;
type MatGridFn = Arc<dyn Fn(&Vector) -> Vec<Vec<Matrix>> + Send + Sync>;

/// Dynamics assembled from closures.
#[derive(Clone)]
pub struct FnDynamics {
    name: String,
    state_dim: usize,
    input_dim: usize,
    f: VecFn,
    df_dx: MatFn,
    g: MatFn,
    dg_dx: MatListFn,
    d2f_dx2: Option<MatListFn>,
    d2g_dx2: Option<MatGridFn>,
}

impl FnDynamics {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        f: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        df_dx: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        g: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        dg_dx: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    ) -> Self {
        FnDynamics {
            name: name.into(),
            state_dim,
            input_dim,
            f: Arc::new(f),
            df_dx: Arc::new(df_dx),
            g: Arc::new(g),
            dg_dx: Arc::new(dg_dx),
            d2f_dx2: None,
            d2g_dx2: None,
        }
    }

    pub fn with_drift_hessian(
        mut self,
        d2f: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    ) -> Self {
        self.d2f_dx2 = Some(Arc::new(d2f));
        self
    }

    pub fn with_input_matrix_hessian(
        mut self,
        d2g: impl Fn(&Vector) -> Vec<Vec<Matrix>> + Send + Sync + 'static,
    ) -> Self {
        self.d2g_dx2 = Some(Arc::new(d2g));
        self
    }
}

impl fmt::Debug for FnDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnDynamics")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .finish_non_exhaustive()
    }
}

impl Dynamics for FnDynamics {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn drift(&self, x: &Vector) -> Vector {
        (self.f)(x)
    }

    fn drift_jacobian(&self, x: &Vector) -> Matrix {
        (self.df_dx)(x)
    }

    fn input_matrix(&self, x: &Vector) -> Matrix {
        (self.g)(x)
    }

    fn input_matrix_jacobian(&self, x: &Vector) -> Vec<Matrix> {
        (self.dg_dx)(x)
    }

    fn drift_hessian(&self, x: &Vector) -> Vec<Matrix> {
        match &self.d2f_dx2 {
            Some(h) => h(x),
            None => central_difference(x, |y| vec![(self.df_dx)(y)])
                .into_iter()
                .map(|mut v| v.remove(0))
                .collect(),
        }
    }

    fn input_matrix_hessian(&self, x: &Vector) -> Vec<Vec<Matrix>> {
        match &self.d2g_dx2 {
            Some(h) => h(x),
            None => {
                let by_k = central_difference(x, |y| (self.dg_dx)(y));
                let p = x.len();
                (0..p)
                    .map(|i| (0..p).map(|k| by_k[k][i].clone()).collect())
                    .collect()
            }
        }
    }
}

/// State, input and co-state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PmpPoint {
    pub x: Vector,
    pub u: Vector,
    pub lambda: Vector,
}

impl PmpPoint {
    pub fn new(x: Vector, u: Vector, lambda: Vector) -> Result<Self> {
        if x.iter().chain(u.iter()).chain(lambda.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("PmpPoint entries must be finite"));
        }
        Ok(PmpPoint { x, u, lambda })
    }
}

/// A control-affine, quadratic-cost, fixed-terminal-state problem on a
/// uniform time grid.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    id: String,
    dynamics: Arc<dyn Dynamics>,
    q_weight: Matrix,
    r_weight: Matrix,
    r_inv: Matrix,
    r_diagonal: bool,
    u_min: Vector,
    u_max: Vector,
    x_target: Vector,
    t_final: f64,
    delta: f64,
    steps: usize,
}

impl OcpProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        dynamics: Arc<dyn Dynamics>,
        q_weight: Matrix,
        r_weight: Matrix,
        u_min: Vector,
        u_max: Vector,
        x_target: Vector,
        t_final: f64,
        delta: f64,
    ) -> Result<Self> {
        let p = dynamics.state_dim();
        let q = dynamics.input_dim();
        if p == 0 || q == 0 {
            return Err(Error::arg("state and input dimensions must be positive"));
        }
        if q_weight.shape() != (p, p) {
            return Err(Error::arg(format!("Q must be {p}x{p}")));
        }
        if r_weight.shape() != (q, q) {
            return Err(Error::arg(format!("R must be {q}x{q}")));
        }
        check_symmetric(&q_weight, "Q")?;
        check_symmetric(&r_weight, "R")?;
        let q_eigs = q_weight.clone().symmetric_eigenvalues();
        let scale = q_weight.amax().max(1.0);
        if q_eigs.iter().any(|&e| e < -1e-12 * scale) {
            return Err(Error::arg("Q must be positive semi-definite"));
        }
        let r_eigs = r_weight.clone().symmetric_eigenvalues();
        if r_eigs.iter().any(|&e| e <= 0.0) {
            return Err(Error::arg("R must be positive definite"));
        }
        let r_inv = r_weight
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::arg("R is singular"))?;
        let mut r_diagonal = true;
        for i in 0..q {
            for j in 0..q {
                if i != j && r_weight[(i, j)] != 0.0 {
                    r_diagonal = false;
                }
            }
        }
        let mut problem = OcpProblem {
            id: id.into(),
            dynamics,
            q_weight,
            r_weight,
            r_inv,
            r_diagonal,
            u_min: Vector::zeros(q),
            u_max: Vector::zeros(q),
            x_target: Vector::zeros(p),
            t_final: 0.0,
            delta: 0.0,
            steps: 0,
        };
        problem.set_bounds(u_min, u_max)?;
        if x_target.len() != p || x_target.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("x_target must be a finite p-vector"));
        }
        problem.x_target = x_target;
        problem.set_grid(t_final, delta)?;
        Ok(problem)
    }

    fn set_bounds(&mut self, u_min: Vector, u_max: Vector) -> Result<()> {
        let q = self.input_dim();
        if u_min.len() != q || u_max.len() != q {
            return Err(Error::arg(format!("input bounds must have length {q}")));
        }
        if u_min.iter().zip(u_max.iter()).any(|(lo, hi)| lo.is_nan() || hi.is_nan() || lo > hi) {
            return Err(Error::arg("u_min must not exceed u_max"));
        }
        self.u_min = u_min;
        self.u_max = u_max;
        Ok(())
    }

    fn set_grid(&mut self, t_final: f64, delta: f64) -> Result<()> {
        if !(delta > 0.0 && delta.is_finite() && t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::arg("t_final and delta must be positive"));
        }
        let ratio = t_final / delta;
        let intervals = ratio.round();
        if (ratio - intervals).abs() > 1e-9 * ratio.max(1.0) || intervals < 1.0 {
            return Err(Error::arg(format!(
                "t_final / delta = {ratio} is not a positive integer"
            )));
        }
        self.t_final = t_final;
        self.delta = delta;
        self.steps = intervals as usize + 1;
        Ok(())
    }

    /// Same problem with a different input box.
    pub fn with_input_bounds(&self, u_min: Vector, u_max: Vector) -> Result<Self> {
        let mut out = self.clone();
        out.set_bounds(u_min, u_max)?;
        Ok(out)
    }

    /// Same problem with the input box removed.
    pub fn unbounded(&self) -> Self {
        let q = self.input_dim();
        let mut out = self.clone();
        out.u_min = Vector::from_element(q, f64::NEG_INFINITY);
        out.u_max = Vector::from_element(q, f64::INFINITY);
        out
    }

    /// Same problem on a different time grid.
    pub fn with_grid(&self, t_final: f64, delta: f64) -> Result<Self> {
        let mut out = self.clone();
        out.set_grid(t_final, delta)?;
        Ok(out)
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }
    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }
    pub fn q_weight(&self) -> &Matrix {
        &self.q_weight
    }
    pub fn r_weight(&self) -> &Matrix {
        &self.r_weight
    }
    pub fn r_inverse(&self) -> &Matrix {
        &self.r_inv
    }
    pub fn r_is_diagonal(&self) -> bool {
        self.r_diagonal
    }
    pub fn u_min(&self) -> &Vector {
        &self.u_min
    }
    pub fn u_max(&self) -> &Vector {
        &self.u_max
    }
    pub fn x_target(&self) -> &Vector {
        &self.x_target
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    /// Number of grid points `N = t_final / delta + 1`.
    pub fn steps(&self) -> usize {
        self.steps
    }
    /// Time of grid point `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.delta
    }

    fn check_state(&self, x: &Vector, what: &str) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::arg(format!(
                "{what} has length {}, expected {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    fn check_input(&self, u: &Vector) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::arg(format!(
                "input has length {}, expected {}",
                u.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// `f(x) + g(x)u`.
    pub fn dynamics_rhs(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        self.check_state(x, "state")?;
        self.check_input(u)?;
        Ok(self.dynamics_rhs_unchecked(x, u))
    }

    pub(crate) fn dynamics_rhs_unchecked(&self, x: &Vector, u: &Vector) -> Vector {
        self.dynamics.drift(x) + self.dynamics.input_matrix(x) * u
    }

    /// `½xᵀQx + ½uᵀRu + λᵀ(f(x) + g(x)u)`.
    pub fn hamiltonian(&self, pt: &PmpPoint) -> Result<f64> {
        self.check_state(&pt.x, "state")?;
        self.check_state(&pt.lambda, "co-state")?;
        self.check_input(&pt.u)?;
        let running = 0.5 * pt.x.dot(&(&self.q_weight * &pt.x))
            + 0.5 * pt.u.dot(&(&self.r_weight * &pt.u));
        Ok(running + pt.lambda.dot(&self.dynamics_rhs_unchecked(&pt.x, &pt.u)))
    }

    /// `λ̇ = −∂H/∂x = −Qx − (∂f/∂x)ᵀλ − (∂g/∂x · u)ᵀλ`.
    ///
    /// The last term is contracted so that its i-th entry is `λᵀ (∂g/∂x_i) u`.
    pub fn costate_rhs(&self, x: &Vector, u: &Vector, lambda: &Vector) -> Result<Vector> {
        self.check_state(x, "state")?;
        self.check_state(lambda, "co-state")?;
        self.check_input(u)?;
        Ok(self.costate_rhs_unchecked(x, u, lambda))
    }

    pub(crate) fn costate_rhs_unchecked(&self, x: &Vector, u: &Vector, lambda: &Vector) -> Vector {
        let df = self.dynamics.drift_jacobian(x);
        let dg = self.dynamics.input_matrix_jacobian(x);
        let mut out = -(&self.q_weight * x) - df.tr_mul(lambda);
        for (i, dgi) in dg.iter().enumerate() {
            out[i] -= lambda.dot(&(dgi * u));
        }
        out
    }

    /// `−R⁻¹ g(x)ᵀ λ`, ignoring the input box.
    pub fn unconstrained_control(&self, x: &Vector, lambda: &Vector) -> Result<Vector> {
        self.check_state(x, "state")?;
        self.check_state(lambda, "co-state")?;
        Ok(self.unconstrained_control_unchecked(x, lambda))
    }

    pub(crate) fn unconstrained_control_unchecked(&self, x: &Vector, lambda: &Vector) -> Vector {
        let gt_lambda = self.dynamics.input_matrix(x).tr_mul(lambda);
        -(&self.r_inv * gt_lambda)
    }

    /// `∂H/∂u = Ru + g(x)ᵀλ`.
    pub fn hamiltonian_input_gradient(&self, x: &Vector, u: &Vector, lambda: &Vector) -> Result<Vector> {
        self.check_state(x, "state")?;
        self.check_state(lambda, "co-state")?;
        self.check_input(u)?;
        Ok(&self.r_weight * u + self.dynamics.input_matrix(x).tr_mul(lambda))
    }

    /// Running cost integrand `½(xᵀQx + uᵀRu)`.
    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> f64 {
        0.5 * (x.dot(&(&self.q_weight * x)) + u.dot(&(&self.r_weight * u)))
    }

    /// Largest violation of the sampled Pontryagin conditions.
    ///
    /// The first part is the worst interior mismatch between a fourth-order
    /// finite-difference derivative of the sampled trajectories and the
    /// analytic state/co-state right-hand sides.
    /// The second part is the worst `‖∂H/∂u‖∞` over grid points whose input
    /// lies strictly inside the box. The two maxima are summed.
    pub fn pmp_residual(&self, x_traj: &Matrix, lambda_traj: &Matrix, u_traj: &Matrix) -> Result<f64> {
        let p = self.state_dim();
        let q = self.input_dim();
        let n = x_traj.nrows();
        if lambda_traj.nrows() != n || u_traj.nrows() != n {
            return Err(Error::arg("trajectories must have equal length"));
        }
        if x_traj.ncols() != p || lambda_traj.ncols() != p || u_traj.ncols() != q {
            return Err(Error::arg("trajectory column counts do not match p, q"));
        }
        if n < 3 {
            return Err(Error::arg("pmp_residual needs at least 3 grid points"));
        }
        let h = self.delta;
        let row = |m: &Matrix, k: usize| -> Vector { m.row(k).transpose() };
        // fourth-order stencils: centred in the interior, shifted by one next
        // to the ends; short trajectories fall back to the 3-point centred one
        let derivative = |m: &Matrix, k: usize| -> Vector {
            let f = |j: usize| row(m, j);
            if n < 5 {
                (f(k + 1) - f(k - 1)) / (2.0 * h)
            } else if k == 1 {
                (f(0) * -3.0 - f(1) * 10.0 + f(2) * 18.0 - f(3) * 6.0 + f(4)) / (12.0 * h)
            } else if k == n - 2 {
                (f(k + 1) * 3.0 + f(k) * 10.0 - f(k - 1) * 18.0 + f(k - 2) * 6.0 - f(k - 3)) / (12.0 * h)
            } else {
                (f(k - 2) - f(k - 1) * 8.0 + f(k + 1) * 8.0 - f(k + 2)) / (12.0 * h)
            }
        };

        let mut ode_residual = 0.0f64;
        let mut stationarity = 0.0f64;
        for k in 1..n - 1 {
            let x = row(x_traj, k);
            let lambda = row(lambda_traj, k);
            let u = row(u_traj, k);
            let x_err = derivative(x_traj, k) - self.dynamics_rhs_unchecked(&x, &u);
            let l_err = derivative(lambda_traj, k) - self.costate_rhs_unchecked(&x, &u, &lambda);
            ode_residual = ode_residual.max(x_err.amax()).max(l_err.amax());
        }
        for k in 0..n {
            let u = row(u_traj, k);
            let inactive = (0..q).all(|j| u[j] > self.u_min[j] && u[j] < self.u_max[j]);
            if inactive {
                let grad = self.hamiltonian_input_gradient(&row(x_traj, k), &u, &row(lambda_traj, k))?;
                stationarity = stationarity.max(grad.amax());
            }
        }
        Ok(ode_residual + stationarity)
    }
}

fn check_symmetric(m: &Matrix, name: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::arg(format!("{name} must be symmetric")));
            }
        }
    }
    Ok(())
}

/// Names accepted by [`builtin`].
pub const BUILTIN_PROBLEMS: &[&str] = &["quad1d", "linear1d", "vdp2d"];

/// Problems registered by name.
///
/// * `quad1d`: `ẋ = −x² + x + u`, `Q = R = 1`, target 0, 10 s horizon, δ = 0.05.
/// * `linear1d`: `ẋ = x + u`, `Q = R = 1`; its infinite-horizon Riccati
///   solution is `P = 1 + √2`.
/// * `vdp2d`: a Van der Pol oscillator with a state-dependent two-column
///   input matrix; exercises the vector code paths.
///
/// All builtins start with an unbounded input box.
pub fn builtin(name: &str) -> Result<OcpProblem> {
    match name {
        "quad1d" => Ok(quad1d()),
        "linear1d" => Ok(linear1d()),
        "vdp2d" => Ok(vdp2d()),
        other => Err(Error::arg(format!(
            "unknown problem '{other}' (known: {})",
            BUILTIN_PROBLEMS.join(", ")
        ))),
    }
}

fn scalar_problem(id: &str, dynamics: FnDynamics) -> OcpProblem {
    OcpProblem::new(
        id,
        Arc::new(dynamics),
        Matrix::identity(1, 1),
        Matrix::identity(1, 1),
        Vector::from_element(1, f64::NEG_INFINITY),
        Vector::from_element(1, f64::INFINITY),
        Vector::zeros(1),
        10.0,
        0.05,
    )
    .expect("builtin problem is valid")
}

pub fn quad1d() -> OcpProblem {
    let dynamics = FnDynamics::new(
        "quad1d",
        1,
        1,
        |x| Vector::from_element(1, -x[0] * x[0] + x[0]),
        |x| Matrix::from_element(1, 1, -2.0 * x[0] + 1.0),
        |_| Matrix::from_element(1, 1, 1.0),
        |_| vec![Matrix::zeros(1, 1)],
    )
    .with_drift_hessian(|_| vec![Matrix::from_element(1, 1, -2.0)])
    .with_input_matrix_hessian(|_| vec![vec![Matrix::zeros(1, 1)]]);
    scalar_problem("quad1d", dynamics)
}

pub fn linear1d() -> OcpProblem {
    let dynamics = FnDynamics::new(
        "linear1d",
        1,
        1,
        |x| x.clone(),
        |_| Matrix::identity(1, 1),
        |_| Matrix::from_element(1, 1, 1.0),
        |_| vec![Matrix::zeros(1, 1)],
    )
    .with_drift_hessian(|_| vec![Matrix::zeros(1, 1)])
    .with_input_matrix_hessian(|_| vec![vec![Matrix::zeros(1, 1)]]);
    scalar_problem("linear1d", dynamics)
}

pub fn vdp2d() -> OcpProblem {
    const MU: f64 = 0.5;
    let dynamics = FnDynamics::new(
        "vdp2d",
        2,
        2,
        |x| Vector::from_vec(vec![x[1], -x[0] + MU * (1.0 - x[0] * x[0]) * x[1]]),
        |x| {
            Matrix::from_row_slice(
                2,
                2,
                &[0.0, 1.0, -1.0 - 2.0 * MU * x[0] * x[1], MU * (1.0 - x[0] * x[0])],
            )
        },
        |x| Matrix::from_row_slice(2, 2, &[1.0 + 0.1 * x[1] * x[1], 0.0, 0.5 * x[0], 1.0]),
        |x| {
            vec![
                Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]),
                Matrix::from_row_slice(2, 2, &[0.2 * x[1], 0.0, 0.0, 0.0]),
            ]
        },
    )
    .with_drift_hessian(|x| {
        vec![
            Matrix::from_row_slice(2, 2, &[0.0, 0.0, -2.0 * MU * x[1], -2.0 * MU * x[0]]),
            Matrix::from_row_slice(2, 2, &[0.0, 0.0, -2.0 * MU * x[0], 0.0]),
        ]
    })
    .with_input_matrix_hessian(|_| {
        vec![
            vec![Matrix::zeros(2, 2), Matrix::zeros(2, 2)],
            vec![Matrix::zeros(2, 2), Matrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.0])],
        ]
    });
    OcpProblem::new(
        "vdp2d",
        Arc::new(dynamics),
        Matrix::identity(2, 2),
        Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0])),
        Vector::from_element(2, f64::NEG_INFINITY),
        Vector::from_element(2, f64::INFINITY),
        Vector::zeros(2),
        5.0,
        0.05,
    )
    .expect("builtin problem is valid")
}
