//! Prediction and continuity losses for a single training window.

use crate::error::{Error, Result};
use crate::integrate::{pmp_step, pmp_step_with_sensitivity, StepScheme};
use crate::problem::{Matrix, OcpProblem, Vector};

/// Contribution of one window pair whose one-step integration blew up.
pub const DIVERGENCE_PENALTY: f64 = 1e6;

/// How the continuity loss advances each (state, co-state) pair by one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContinuityOptions {
    pub scheme: StepScheme,
    pub substeps: usize,
}

impl Default for ContinuityOptions {
    fn default() -> Self {
        ContinuityOptions {
            scheme: StepScheme::Rk4,
            substeps: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityLoss {
    pub value: f64,
    /// Set when at least one step diverged and was replaced by the penalty.
    pub diverged: bool,
}

/// Mean squared difference over all `n·p` entries.
pub fn loss_prediction(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::arg(format!(
            "prediction is {:?} but target is {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::arg("empty trajectories"));
    }
    let sum: f64 = pred.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / pred.len() as f64)
}

pub(crate) fn loss_prediction_grad(pred: &Matrix, target: &Matrix) -> Matrix {
    (pred - target) * (2.0 / pred.len() as f64)
}

fn check_window(problem: &OcpProblem, x_window: &Matrix, lambda_pred: &Matrix, delta: f64) -> Result<()> {
    if x_window.shape() != lambda_pred.shape() {
        return Err(Error::arg(format!(
            "state window is {:?} but prediction is {:?}",
            x_window.shape(),
            lambda_pred.shape()
        )));
    }
    if x_window.ncols() != problem.state_dim() {
        return Err(Error::arg("window width differs from the state dimension"));
    }
    if x_window.nrows() < 2 {
        return Err(Error::arg("continuity needs a window of at least two points"));
    }
    if !(delta > 0.0) {
        return Err(Error::arg("delta must be positive"));
    }
    Ok(())
}

fn row(m: &Matrix, j: usize) -> Vector {
    m.row(j).transpose()
}

/// Advance every `(x_window[j], lambda_pred[j])` by `delta` and compare the
/// result with row `j + 1`, averaging the squared gaps over the `n − 1` pairs.
pub fn loss_continuity(
    problem: &OcpProblem,
    x_window: &Matrix,
    lambda_pred: &Matrix,
    delta: f64,
    opts: ContinuityOptions,
) -> Result<ContinuityLoss> {
    check_window(problem, x_window, lambda_pred, delta)?;
    let n = x_window.nrows();
    let mut total = 0.0;
    let mut diverged = false;
    for j in 0..n - 1 {
        match pmp_step(problem, &row(x_window, j), &row(lambda_pred, j), delta, opts.substeps, opts.scheme) {
            Ok((xi, li)) => {
                total += (row(x_window, j + 1) - xi).norm_squared() + (row(lambda_pred, j + 1) - li).norm_squared();
            }
            Err(Error::Divergence(_)) => {
                total += DIVERGENCE_PENALTY;
                diverged = true;
            }
            Err(e) => return Err(e),
        }
    }
    let value = total / (n - 1) as f64;
    Ok(ContinuityLoss {
        value: if value.is_finite() { value } else { DIVERGENCE_PENALTY },
        diverged: diverged || !value.is_finite(),
    })
}

/// Continuity loss and its gradient with respect to `lambda_pred`. Diverged
/// pairs contribute a constant penalty and therefore no gradient.
pub(crate) fn loss_continuity_grad(
    problem: &OcpProblem,
    x_window: &Matrix,
    lambda_pred: &Matrix,
    delta: f64,
    opts: ContinuityOptions,
) -> Result<(ContinuityLoss, Matrix)> {
    check_window(problem, x_window, lambda_pred, delta)?;
    let (n, p) = x_window.shape();
    let scale = 1.0 / (n - 1) as f64;
    let mut grad = Matrix::zeros(n, p);
    let mut total = 0.0;
    let mut diverged = false;
    for j in 0..n - 1 {
        let step = pmp_step_with_sensitivity(
            problem,
            &row(x_window, j),
            &row(lambda_pred, j),
            delta,
            opts.substeps,
            opts.scheme,
        );
        let (xi, li, s) = match step {
            Ok(v) => v,
            Err(Error::Divergence(_)) => {
                total += DIVERGENCE_PENALTY;
                diverged = true;
                continue;
            }
            Err(e) => return Err(e),
        };
        let rx = row(x_window, j + 1) - xi;
        let rl = row(lambda_pred, j + 1) - li;
        total += rx.norm_squared() + rl.norm_squared();
        for i in 0..p {
            grad[(j + 1, i)] += 2.0 * scale * rl[i];
            // ∂/∂λ_j of the gaps: the co-state columns of the step sensitivity.
            let mut g = 0.0;
            for r in 0..p {
                g += rx[r] * s[(r, p + i)] + rl[r] * s[(p + r, p + i)];
            }
            grad[(j, i)] -= 2.0 * scale * g;
        }
    }
    let value = total * scale;
    let loss = ContinuityLoss {
        value: if value.is_finite() { value } else { DIVERGENCE_PENALTY },
        diverged: diverged || !value.is_finite(),
    };
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{quad1d, vdp2d};
    use crate::tpbvp::{solve_tpbvp, SolverConfig};

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn prediction_loss_basics() {
        assert_eq!(loss_prediction(&col(&[1.0, -2.0]), &col(&[1.0, -2.0])).unwrap(), 0.0);
        assert_eq!(loss_prediction(&col(&[1.0, 1.0]), &col(&[0.0, 0.0])).unwrap(), 1.0);
        assert!(matches!(
            loss_prediction(&col(&[1.0, 1.0]), &col(&[0.0, 0.0, 0.0])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn prediction_loss_matches_plain_loop() {
        let a = Matrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin() * 4.0);
        let b = Matrix::from_fn(7, 3, |i, j| ((i + 5 * j) as f64 * 0.91).cos());
        let mut acc = 0.0;
        for i in 0..7 {
            for j in 0..3 {
                let d = a[(i, j)] - b[(i, j)];
                acc += d * d;
            }
        }
        let expected = acc / 21.0;
        assert!((loss_prediction(&a, &b).unwrap() - expected).abs() <= 1e-14 * expected);
    }

    #[test]
    fn losses_are_non_negative() {
        let p = quad1d();
        for seed in 0..50 {
            let a = Matrix::from_fn(5, 1, |i, _| ((seed * 7 + i) as f64 * 1.3).sin() * 3.0);
            let b = Matrix::from_fn(5, 1, |i, _| ((seed * 11 + i) as f64 * 0.7).cos() * 3.0);
            let lp = loss_prediction(&a, &b).unwrap();
            assert!(lp > 0.0, "seed {seed}");
            let mut c = a.clone();
            c[(seed % 5, 0)] += a[(seed % 5, 0)].abs().max(1.0) * f64::EPSILON;
            assert!(loss_prediction(&a, &c).unwrap() > 0.0);
            let lc = loss_continuity(&p, &a, &b, 0.05, ContinuityOptions::default()).unwrap();
            assert!(lc.value >= 0.0);
        }
    }

    #[test]
    fn continuity_zero_at_equilibrium() {
        let p = quad1d();
        let z = Matrix::zeros(11, 1);
        let l = loss_continuity(&p, &z, &z, 0.05, ContinuityOptions::default()).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(!l.diverged);
    }

    #[test]
    fn continuity_small_on_solver_window() {
        let p = quad1d();
        let pair = solve_tpbvp(&p, &Vector::from_element(1, 2.0), &SolverConfig::default()).unwrap();
        for opts in [
            ContinuityOptions::default(),
            ContinuityOptions {
                scheme: StepScheme::Rk4,
                substeps: 4,
            },
        ] {
            for k in [0usize, 40, 150] {
                let xw = pair.x_traj.rows(k, 11).into_owned();
                let lw = pair.lambda_traj.rows(k, 11).into_owned();
                let l = loss_continuity(&p, &xw, &lw, 0.05, opts).unwrap();
                assert!(l.value <= 1e-4, "k={k} substeps={}: {}", opts.substeps, l.value);
            }
        }
    }

    #[test]
    fn continuity_single_euler_step_by_hand() {
        // x=1, λ=0.5: u=-0.5, ẋ=-1+1-0.5=-0.5, λ̇=-x-(1-2x)λ=-1+0.5=-0.5.
        // One Euler step of 0.1 gives (0.95, 0.45); next row is (0.9, 0.4).
        // Loss = (0.9-0.95)² + (0.4-0.45)² = 0.005.
        let p = quad1d();
        let opts = ContinuityOptions {
            scheme: StepScheme::Euler,
            substeps: 1,
        };
        let l = loss_continuity(&p, &col(&[1.0, 0.9]), &col(&[0.5, 0.4]), 0.1, opts).unwrap();
        assert!((l.value - 0.005).abs() < 1e-15, "{}", l.value);
    }

    #[test]
    fn continuity_divergence_is_flagged_not_fatal() {
        let p = quad1d();
        let xw = col(&[-1e100, 0.0, 0.0]);
        let lw = col(&[0.0, 0.0, 0.0]);
        let l = loss_continuity(&p, &xw, &lw, 0.05, ContinuityOptions::default()).unwrap();
        assert!(l.diverged);
        assert!(l.value.is_finite() && l.value >= DIVERGENCE_PENALTY / 2.0);
        let (lg, g) = loss_continuity_grad(&p, &xw, &lw, 0.05, ContinuityOptions::default()).unwrap();
        assert_eq!(lg, l);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn continuity_shape_mismatch() {
        let p = quad1d();
        let r = loss_continuity(&p, &col(&[0.0, 0.0]), &col(&[0.0, 0.0, 0.0]), 0.05, ContinuityOptions::default());
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn continuity_gradient_matches_finite_differences() {
        for (prob, n) in [(quad1d(), 6usize), (vdp2d(), 4)] {
            let pdim = prob.state_dim();
            let xw = Matrix::from_fn(n, pdim, |i, j| 1.2 - 0.15 * i as f64 + 0.3 * j as f64);
            let lw = Matrix::from_fn(n, pdim, |i, j| 0.8 - 0.1 * i as f64 - 0.2 * j as f64);
            for scheme in [StepScheme::Rk4, StepScheme::Euler] {
                let opts = ContinuityOptions { scheme, substeps: 2 };
                let (base, g) = loss_continuity_grad(&prob, &xw, &lw, 0.05, opts).unwrap();
                let plain = loss_continuity(&prob, &xw, &lw, 0.05, opts).unwrap();
                assert!((base.value - plain.value).abs() <= 1e-14 * plain.value.max(1e-300));
                for i in 0..n {
                    for j in 0..pdim {
                        let h = 1e-6;
                        let mut up = lw.clone();
                        let mut dn = lw.clone();
                        up[(i, j)] += h;
                        dn[(i, j)] -= h;
                        let fd = (loss_continuity(&prob, &xw, &up, 0.05, opts).unwrap().value
                            - loss_continuity(&prob, &xw, &dn, 0.05, opts).unwrap().value)
                            / (2.0 * h);
                        assert!(
                            (fd - g[(i, j)]).abs() <= 1e-6 * fd.abs().max(1e-2),
                            "{} {scheme:?} ({i},{j}): {fd} vs {}",
                            prob.id(),
                            g[(i, j)]
                        );
                    }
                }
            }
        }
    }
}
