//! Fixed-step integration of the coupled state/co-state system
//! `ẋ = ∂H/∂λ`, `λ̇ = −∂H/∂x` with `u = −R⁻¹gᵀλ` substituted at every stage.

use crate::error::{Error, Result};
use crate::problem::{Matrix, OcpProblem, Vector};

/// One-step scheme for the co-state system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepScheme {
    #[default]
    Rk4,
    /// Explicit Euler; kept for sensitivity checks of the continuity loss.
    Euler,
}

impl StepScheme {
    pub fn name(self) -> &'static str {
        match self {
            StepScheme::Rk4 => "rk4",
            StepScheme::Euler => "euler",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rk4" => Ok(StepScheme::Rk4),
            "euler" => Ok(StepScheme::Euler),
            other => Err(Error::arg(format!("unknown step scheme '{other}'"))),
        }
    }
}

fn split(z: &Vector, p: usize) -> (Vector, Vector) {
    (z.rows(0, p).into_owned(), z.rows(p, p).into_owned())
}

fn stack(x: &Vector, lambda: &Vector) -> Vector {
    let p = x.len();
    let mut z = Vector::zeros(2 * p);
    z.rows_mut(0, p).copy_from(x);
    z.rows_mut(p, p).copy_from(lambda);
    z
}

/// Right-hand side of the stacked system `z = (x, λ)`.
fn pmp_field(problem: &OcpProblem, z: &Vector) -> Vector {
    let p = problem.state_dim();
    let (x, lambda) = split(z, p);
    let u = problem.unconstrained_control_unchecked(&x, &lambda);
    stack(
        &problem.dynamics_rhs_unchecked(&x, &u),
        &problem.costate_rhs_unchecked(&x, &u, &lambda),
    )
}

/// Jacobian of [`pmp_field`] with respect to `z`, 2p×2p, with the
/// dependence of `u` on `(x, λ)` included.
pub fn pmp_jacobian(problem: &OcpProblem, x: &Vector, lambda: &Vector) -> Matrix {
    let p = problem.state_dim();
    let d = problem.dynamics();
    let r_inv = problem.r_inverse();
    let g = d.input_matrix(x);
    let df = d.drift_jacobian(x);
    let dg = d.input_matrix_jacobian(x);
    let d2f = d.drift_hessian(x);
    let d2g = d.input_matrix_hessian(x);
    let u = -(r_inv * g.tr_mul(lambda));

    // ∂u/∂λ (q×p) and ∂u/∂x (q×p)
    let du_dl = -(r_inv * g.transpose());
    let mut du_dx = Matrix::zeros(u.len(), p);
    for i in 0..p {
        du_dx.set_column(i, &(-(r_inv * dg[i].tr_mul(lambda))));
    }

    let mut jac = Matrix::zeros(2 * p, 2 * p);
    let g_du_dx = &g * &du_dx;
    for i in 0..p {
        let col = df.column(i) + &dg[i] * &u + g_du_dx.column(i);
        jac.view_mut((0, i), (p, 1)).copy_from(&col);
    }
    jac.view_mut((0, p), (p, p)).copy_from(&(&g * &du_dl));

    let q_weight = problem.q_weight();
    for i in 0..p {
        let lt_dgi = dg[i].tr_mul(lambda); // (∂g/∂x_i)ᵀλ, q-vector
        let dgi_u = &dg[i] * &u;
        for k in 0..p {
            let mut v = -q_weight[(i, k)];
            for j in 0..p {
                v -= d2f[k][(j, i)] * lambda[j];
            }
            v -= lambda.dot(&(&d2g[i][k] * &u));
            v -= lt_dgi.dot(&du_dx.column(k));
            jac[(p + i, k)] = v;

            jac[(p + i, p + k)] = -df[(k, i)] - dgi_u[k] - lt_dgi.dot(&du_dl.column(k));
        }
    }
    jac
}

fn check_finite(z: &Vector) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence("non-finite state or co-state".into()))
    }
}

fn check_step(dt: f64, substeps: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::arg("dt must be positive"));
    }
    if substeps == 0 {
        return Err(Error::arg("substeps must be at least 1"));
    }
    Ok(())
}

/// Advance `(x, λ)` by `dt` using `substeps` classical RK4 steps.
pub fn integrate_pmp_ode(
    problem: &OcpProblem,
    x: &Vector,
    lambda: &Vector,
    dt: f64,
    substeps: usize,
) -> Result<(Vector, Vector)> {
    pmp_step(problem, x, lambda, dt, substeps, StepScheme::Rk4)
}

/// Like [`integrate_pmp_ode`] with a selectable scheme.
pub fn pmp_step(
    problem: &OcpProblem,
    x: &Vector,
    lambda: &Vector,
    dt: f64,
    substeps: usize,
    scheme: StepScheme,
) -> Result<(Vector, Vector)> {
    check_step(dt, substeps)?;
    let p = problem.state_dim();
    if x.len() != p || lambda.len() != p {
        return Err(Error::arg("state/co-state dimension mismatch"));
    }
    let h = dt / substeps as f64;
    let mut z = stack(x, lambda);
    check_finite(&z)?;
    for _ in 0..substeps {
        z = match scheme {
            StepScheme::Rk4 => {
                let k1 = pmp_field(problem, &z);
                let k2 = pmp_field(problem, &(&z + &k1 * (0.5 * h)));
                let k3 = pmp_field(problem, &(&z + &k2 * (0.5 * h)));
                let k4 = pmp_field(problem, &(&z + &k3 * h));
                &z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
            StepScheme::Euler => {
                let k1 = pmp_field(problem, &z);
                &z + k1 * h
            }
        };
        check_finite(&z)?;
    }
    Ok(split(&z, p))
}

/// One step together with its exact sensitivity `∂(x', λ')/∂(x, λ)`
/// (2p×2p), obtained by differentiating the discrete scheme stage by stage.
pub fn pmp_step_with_sensitivity(
    problem: &OcpProblem,
    x: &Vector,
    lambda: &Vector,
    dt: f64,
    substeps: usize,
    scheme: StepScheme,
) -> Result<(Vector, Vector, Matrix)> {
    check_step(dt, substeps)?;
    let p = problem.state_dim();
    let h = dt / substeps as f64;
    let mut z = stack(x, lambda);
    check_finite(&z)?;
    let mut s = Matrix::identity(2 * p, 2 * p);
    let jac_at = |z: &Vector| {
        let (xx, ll) = split(z, p);
        pmp_jacobian(problem, &xx, &ll)
    };
    for _ in 0..substeps {
        match scheme {
            StepScheme::Rk4 => {
                let k1 = pmp_field(problem, &z);
                let s1 = jac_at(&z) * &s;
                let z2 = &z + &k1 * (0.5 * h);
                let k2 = pmp_field(problem, &z2);
                let s2 = jac_at(&z2) * (&s + &s1 * (0.5 * h));
                let z3 = &z + &k2 * (0.5 * h);
                let k3 = pmp_field(problem, &z3);
                let s3 = jac_at(&z3) * (&s + &s2 * (0.5 * h));
                let z4 = &z + &k3 * h;
                let k4 = pmp_field(problem, &z4);
                let s4 = jac_at(&z4) * (&s + &s3 * h);
                z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                s += (s1 + s2 * 2.0 + s3 * 2.0 + s4) * (h / 6.0);
            }
            StepScheme::Euler => {
                let k1 = pmp_field(problem, &z);
                let s1 = jac_at(&z) * &s;
                z += k1 * h;
                s += s1 * h;
            }
        }
        check_finite(&z)?;
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite step sensitivity".into()));
    }
    let (xo, lo) = split(&z, p);
    Ok((xo, lo, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{quad1d, vdp2d};

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = quad1d();
        let (x, l) = integrate_pmp_ode(&p, &s(0.0), &s(0.0), 0.05, 4).unwrap();
        assert_eq!((x[0], l[0]), (0.0, 0.0));
    }

    // ẋ = −x² + x − λ, λ̇ = −x + 2λx − λ, one RK4 step from (1, 0.5) with
    // h = 0.05, stage slopes worked by hand:
    //   k1 = (−0.5, −0.5)
    //   k2 = (−0.47515625, −0.5121875)
    //   k3 = (−0.47545751.., −0.51250047..)
    //   k4 = (−0.45116725.., −0.52440666..)
    #[test]
    fn one_rk4_step_by_hand() {
        let p = quad1d();
        let f = |x: f64, l: f64| (-x * x + x - l, -x + 2.0 * l * x - l);
        let h = 0.05;
        let (x0, l0) = (1.0, 0.5);
        let k1 = f(x0, l0);
        let k2 = f(x0 + 0.5 * h * k1.0, l0 + 0.5 * h * k1.1);
        let k3 = f(x0 + 0.5 * h * k2.0, l0 + 0.5 * h * k2.1);
        let k4 = f(x0 + h * k3.0, l0 + h * k3.1);
        let xe = x0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let le = l0 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        assert_eq!(k1, (-0.5, -0.5));
        assert!((k2.0 + 0.47515625).abs() < 1e-15 && (k2.1 + 0.5121875).abs() < 1e-15);
        let (x, l) = integrate_pmp_ode(&p, &s(x0), &s(l0), h, 1).unwrap();
        assert!((x[0] - xe).abs() < 1e-14, "{} vs {xe}", x[0]);
        assert!((l[0] - le).abs() < 1e-14, "{} vs {le}", l[0]);
        // frozen values of the hand computation
        assert!((xe - 0.976_230_043_504_932_7).abs() < 1e-15, "{xe}");
        assert!((le - 0.474_385_144_874_466_4).abs() < 1e-15, "{le}");
    }

    #[test]
    fn fourth_order_convergence() {
        let p = quad1d();
        let (x0, l0) = (s(1.5), s(0.8));
        let (xr, lr) = integrate_pmp_ode(&p, &x0, &l0, 0.2, 64).unwrap();
        let err = |dt: f64| {
            // integrate to t = 0.2 with steps of dt
            let n = (0.2 / dt).round() as usize;
            let (mut x, mut l) = (x0.clone(), l0.clone());
            for _ in 0..n {
                (x, l) = integrate_pmp_ode(&p, &x, &l, dt, 1).unwrap();
            }
            ((x - &xr).amax()).max((l - &lr).amax())
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_steps_and_divergence() {
        let p = quad1d();
        assert!(matches!(integrate_pmp_ode(&p, &s(0.0), &s(0.0), 0.0, 1), Err(Error::Argument(_))));
        assert!(matches!(integrate_pmp_ode(&p, &s(0.0), &s(0.0), 0.1, 0), Err(Error::Argument(_))));
        // ẋ ≈ −x² escapes to −∞ in finite time
        let r = integrate_pmp_ode(&p, &s(-1e100), &s(0.0), 1.0, 1);
        assert!(matches!(r, Err(Error::Divergence(_))));
    }

    fn fd_sensitivity(p: &crate::problem::OcpProblem, x: &Vector, l: &Vector, scheme: StepScheme) -> Matrix {
        let n = x.len();
        let mut out = Matrix::zeros(2 * n, 2 * n);
        let h = 1e-6;
        for c in 0..2 * n {
            let (mut xp, mut lp, mut xm, mut lm) = (x.clone(), l.clone(), x.clone(), l.clone());
            if c < n {
                xp[c] += h;
                xm[c] -= h;
            } else {
                lp[c - n] += h;
                lm[c - n] -= h;
            }
            let (a, b) = pmp_step(p, &xp, &lp, 0.05, 3, scheme).unwrap();
            let (cc, d) = pmp_step(p, &xm, &lm, 0.05, 3, scheme).unwrap();
            for r in 0..n {
                out[(r, c)] = (a[r] - cc[r]) / (2.0 * h);
                out[(n + r, c)] = (b[r] - d[r]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn sensitivity_matches_finite_differences() {
        for (problem, x, l) in [
            (quad1d(), s(-2.3), s(-7.0)),
            (quad1d(), s(1.1), s(0.4)),
            (vdp2d(), Vector::from_vec(vec![0.4, -0.9]), Vector::from_vec(vec![1.2, 0.3])),
        ] {
            for scheme in [StepScheme::Rk4, StepScheme::Euler] {
                let (_, _, sens) = pmp_step_with_sensitivity(&problem, &x, &l, 0.05, 3, scheme).unwrap();
                let fd = fd_sensitivity(&problem, &x, &l, scheme);
                let err = (&sens - &fd).amax();
                assert!(err < 1e-6 * (1.0 + fd.amax()), "{}: err {err}", problem.id());
            }
        }
    }
}
