//! Closed-loop simulation: predicted co-state, input QP, plant step and
//! scheduled disturbances.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::ConnModel;
use crate::problem::{Matrix, OcpProblem, Vector};
use crate::tpbvp::{solve_by_homotopy, solve_tpbvp_warm, SolverConfig, TrajectoryPair};

const QP_TOL: f64 = 1e-10;
const QP_MAX_SWEEPS: usize = 100_000;

/// Scheduled disturbance events `(time, magnitude)` with strictly
/// increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisturbanceSchedule {
    events: Vec<(f64, Vector)>,
}

impl DisturbanceSchedule {
    pub fn new(events: Vec<(f64, Vector)>) -> Result<Self> {
        let mut last = f64::NEG_INFINITY;
        for (t, d) in &events {
            if !t.is_finite() || *t < 0.0 {
                return Err(Error::arg(format!("disturbance time {t} must be finite and non-negative")));
            }
            if *t <= last {
                return Err(Error::arg("disturbance times must be strictly increasing"));
            }
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("disturbance magnitudes must be finite"));
            }
            last = *t;
        }
        if let Some((_, first)) = events.first() {
            if events.iter().any(|(_, d)| d.len() != first.len()) {
                return Err(Error::arg("disturbance magnitudes must share one dimension"));
            }
        }
        Ok(DisturbanceSchedule { events })
    }

    pub fn empty() -> Self {
        DisturbanceSchedule::default()
    }

    /// +2 at t = 1 and 2, −2 at t = 3 and 4, +1 at t = 5 on a scalar state.
    pub fn standard() -> Self {
        let ev = [(1.0, 2.0), (2.0, 2.0), (3.0, -2.0), (4.0, -2.0), (5.0, 1.0)];
        DisturbanceSchedule {
            events: ev.iter().map(|&(t, d)| (t, Vector::from_element(1, d))).collect(),
        }
    }

    /// Parse `t:mag,t:mag,...`; vector magnitudes separate components
    /// with `;`, as in `1.5:0.5;-1`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Self::empty());
        }
        let mut events = Vec::new();
        for item in text.split(',') {
            let (t, mag) = item
                .split_once(':')
                .ok_or_else(|| Error::arg(format!("disturbance '{item}' is not of the form t:mag")))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::arg(format!("bad disturbance time '{t}'")))?;
            let comps: Vec<f64> = mag
                .split(';')
                .map(|c| c.trim().parse().map_err(|_| Error::arg(format!("bad disturbance magnitude '{c}'"))))
                .collect::<Result<_>>()?;
            events.push((t, Vector::from_vec(comps)));
        }
        Self::new(events)
    }

    pub fn events(&self) -> &[(f64, Vector)] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sum of all event magnitudes (zero vector of length `p` if empty).
    pub fn total(&self, p: usize) -> Vector {
        self.events.iter().fold(Vector::zeros(p), |acc, (_, d)| acc + d)
    }

    fn validate_for(&self, problem: &OcpProblem) -> Result<()> {
        for (t, d) in &self.events {
            if d.len() != problem.state_dim() {
                return Err(Error::arg("disturbance dimension differs from the state dimension"));
            }
            if *t > problem.t_final() + 1e-12 {
                return Err(Error::arg(format!("disturbance at t = {t} lies beyond t_final")));
            }
        }
        Ok(())
    }

    /// Per-grid-point disturbance: an event at time t lands on the first
    /// grid index `k` with `t ≤ k·δ`.
    fn on_grid(&self, problem: &OcpProblem) -> Matrix {
        let n = problem.steps();
        let mut out = Matrix::zeros(n, problem.state_dim());
        for (t, d) in &self.events {
            let k = ((t / problem.delta()) - 1e-9).ceil().max(0.0) as usize;
            let k = k.min(n - 1);
            let mut row = out.row_mut(k);
            row += d.transpose();
        }
        out
    }
}

/// How a disturbance event enters the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DisturbanceMode {
    /// Instantaneous jump `x ← x + d` at the event's grid point.
    #[default]
    StateJump,
    /// Constant additive rate `d/δ` on `ẋ` over the step ending at the
    /// event's grid point; injects the same total displacement.
    InputOffset,
}

impl DisturbanceMode {
    pub fn name(self) -> &'static str {
        match self {
            DisturbanceMode::StateJump => "jump",
            DisturbanceMode::InputOffset => "offset",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "jump" => Ok(DisturbanceMode::StateJump),
            "offset" => Ok(DisturbanceMode::InputOffset),
            other => Err(Error::arg(format!("unknown disturbance mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    /// Respect the problem's input box; otherwise use `−R⁻¹gᵀλ̂` directly.
    pub constrained: bool,
    pub disturbance_mode: DisturbanceMode,
}

/// Time series of one closed-loop run on the problem grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult {
    pub times: Vec<f64>,
    /// N×p (fewer rows if the plant diverged).
    pub x_series: Matrix,
    /// (N−1)×q.
    pub u_series: Matrix,
    /// (N−1)×p, the co-state used to compute each input.
    pub lambda0_series: Matrix,
    /// N×p, disturbance applied on arrival at each grid point.
    pub disturbance_series: Matrix,
    /// Trapezoidal integral of the stage cost.
    pub running_cost: f64,
    pub diverged: bool,
    /// Steps at which the controller failed and the previous input was held.
    pub failed_steps: Vec<usize>,
}

impl ClosedLoopResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Vector {
        self.x_series.row(self.x_series.nrows() - 1).transpose()
    }

    /// Stage cost per grid point; the last point uses zero input.
    pub fn stage_costs(&self, problem: &OcpProblem) -> Vec<f64> {
        let q = self.u_series.ncols();
        (0..self.len())
            .map(|k| {
                let x = self.x_series.row(k).transpose();
                let u = if k < self.u_series.nrows() {
                    self.u_series.row(k).transpose()
                } else {
                    Vector::zeros(q)
                };
                problem.stage_cost(&x, &u)
            })
            .collect()
    }

    /// CSV with columns `t, x…, lambda0…, u…, d…, stage_cost`. The last row
    /// has empty `lambda0` and `u` cells.
    pub fn write_csv<W: Write>(&self, problem: &OcpProblem, out: W) -> Result<()> {
        let p = self.x_series.ncols();
        let q = self.u_series.ncols();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(csv_header(p, q)).map_err(csv_io)?;
        let costs = self.stage_costs(problem);
        for k in 0..self.len() {
            let mut rec = vec![fmt(self.times[k])];
            rec.extend((0..p).map(|i| fmt(self.x_series[(k, i)])));
            let has_input = k < self.u_series.nrows();
            rec.extend((0..p).map(|i| if has_input { fmt(self.lambda0_series[(k, i)]) } else { String::new() }));
            rec.extend((0..q).map(|i| if has_input { fmt(self.u_series[(k, i)]) } else { String::new() }));
            rec.extend((0..p).map(|i| fmt(self.disturbance_series[(k, i)])));
            rec.push(fmt(costs[k]));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, problem: &OcpProblem, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(problem, File::create(path)?)
    }

    /// Read back a CSV written by [`write_csv`](Self::write_csv). The state
    /// and input widths come from the header. `running_cost` is recomputed
    /// from the `stage_cost` column with the trapezoidal rule.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| Error::parse("header", e.to_string()))?.clone();
        let names: Vec<&str> = header.iter().collect();
        let count = |prefix: &str| names.iter().filter(|n| column_matches(n, prefix)).count();
        let (p, q) = (count("x"), count("u"));
        if p == 0 || names.first() != Some(&"t") || names.len() != 2 + 3 * p + q {
            return Err(Error::parse("header", "unexpected closed-loop columns"));
        }
        let mut times = Vec::new();
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        let mut us = Vec::new();
        let mut ds = Vec::new();
        let mut costs = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let record = format!("row {}", row + 1);
            let rec = rec.map_err(|e| Error::parse(&record, e.to_string()))?;
            if rec.len() != names.len() {
                return Err(Error::parse(&record, "wrong number of fields"));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(&record, format!("cannot parse '{}'", &rec[i])))
            };
            times.push(num(0)?);
            for i in 0..p {
                xs.push(num(1 + i)?);
            }
            if !rec[1 + p].is_empty() {
                for i in 0..p {
                    ls.push(num(1 + p + i)?);
                }
                for i in 0..q {
                    us.push(num(1 + 2 * p + i)?);
                }
            }
            for i in 0..p {
                ds.push(num(1 + 2 * p + q + i)?);
            }
            costs.push(num(1 + 3 * p + q)?);
        }
        let n = times.len();
        if n < 2 {
            return Err(Error::parse("rows", "need at least two rows"));
        }
        let m = ls.len() / p;
        let dt_sum: f64 = (1..n).map(|k| 0.5 * (times[k] - times[k - 1]) * (costs[k] + costs[k - 1])).sum();
        Ok(ClosedLoopResult {
            times,
            x_series: Matrix::from_row_slice(n, p, &xs),
            u_series: Matrix::from_row_slice(m, q, &us),
            lambda0_series: Matrix::from_row_slice(m, p, &ls),
            disturbance_series: Matrix::from_row_slice(n, p, &ds),
            running_cost: dt_sum,
            diverged: false,
            failed_steps: Vec::new(),
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }
}

fn column_matches(name: &str, prefix: &str) -> bool {
    name == prefix || name.strip_prefix(prefix).is_some_and(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
}

fn csv_header(p: usize, q: usize) -> Vec<String> {
    let names = |base: &str, sep: &str, count: usize| -> Vec<String> {
        if count == 1 {
            vec![base.to_string()]
        } else {
            (1..=count).map(|i| format!("{base}{sep}{i}")).collect()
        }
    };
    let mut h = vec!["t".to_string()];
    h.extend(names("x", "", p));
    h.extend(names("lambda0", "_", p));
    h.extend(names("u", "", q));
    h.extend(names("d", "", p));
    h.push("stage_cost".into());
    h
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Elementwise clip of `u` into `[u_min, u_max]`.
pub fn saturate(u: &Vector, u_min: &Vector, u_max: &Vector) -> Vector {
    Vector::from_iterator(u.len(), u.iter().zip(u_min.iter().zip(u_max.iter())).map(|(v, (lo, hi))| v.clamp(*lo, *hi)))
}

/// Minimizer of `½uᵀRu + λ₀ᵀg(x)u` over the problem's input box.
///
/// Diagonal `R` separates into clipped scalar minimizations; otherwise
/// projected coordinate descent runs until the projected gradient falls
/// below 1e−10.
pub fn solve_input_qp(problem: &OcpProblem, x: &Vector, lambda0: &Vector) -> Result<Vector> {
    let u_free = problem.unconstrained_control(x, lambda0)?;
    let (lo, hi) = (problem.u_min(), problem.u_max());
    if problem.r_is_diagonal() {
        return Ok(saturate(&u_free, lo, hi));
    }
    let r = problem.r_weight();
    let a = problem.dynamics().input_matrix(x).tr_mul(lambda0);
    let mut u = saturate(&u_free, lo, hi);
    let q = u.len();
    for _ in 0..QP_MAX_SWEEPS {
        for i in 0..q {
            let mut s = a[i];
            for j in 0..q {
                if j != i {
                    s += r[(i, j)] * u[j];
                }
            }
            u[i] = (-s / r[(i, i)]).clamp(lo[i], hi[i]);
        }
        let grad = r * &u + &a;
        let pg = (0..q)
            .map(|i| (u[i] - (u[i] - grad[i]).clamp(lo[i], hi[i])).abs())
            .fold(0.0, f64::max);
        if pg <= QP_TOL {
            break;
        }
    }
    Ok(u)
}

/// One RK4 step of `ẋ = f(x) + g(x)u` with `u` held constant.
pub fn plant_step(problem: &OcpProblem, x: &Vector, u: &Vector, delta: f64) -> Result<Vector> {
    plant_step_forced(problem, x, u, None, delta)
}

fn plant_step_forced(problem: &OcpProblem, x: &Vector, u: &Vector, w: Option<&Vector>, delta: f64) -> Result<Vector> {
    if !(delta > 0.0) {
        return Err(Error::arg("delta must be positive"));
    }
    problem.dynamics_rhs(x, u)?;
    let rhs = |x: &Vector| {
        let v = problem.dynamics_rhs_unchecked(x, u);
        match w {
            Some(w) => v + w,
            None => v,
        }
    };
    let k1 = rhs(x);
    let k2 = rhs(&(x + &k1 * (0.5 * delta)));
    let k3 = rhs(&(x + &k2 * (0.5 * delta)));
    let k4 = rhs(&(x + &k3 * delta));
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (delta / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::Divergence("plant state became non-finite".into()))
    }
}

/// A controller maps the measured state at step `k` to a co-state
/// estimate; `None` means it failed this step.
fn run_loop(
    problem: &OcpProblem,
    x0: &Vector,
    schedule: &DisturbanceSchedule,
    opts: SimOptions,
    mut controller: impl FnMut(usize, &Vector) -> Result<Option<Vector>>,
) -> Result<ClosedLoopResult> {
    let p = problem.state_dim();
    let q = problem.input_dim();
    if x0.len() != p || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("x0 must be a finite state vector"));
    }
    schedule.validate_for(problem)?;
    let n = problem.steps();
    let dist = schedule.on_grid(problem);
    let delta = problem.delta();
    let mut xs = Matrix::zeros(n, p);
    let mut us = Matrix::zeros(n - 1, q);
    let mut ls = Matrix::zeros(n - 1, p);
    let mut failed = Vec::new();
    let mut x = x0.clone();
    if opts.disturbance_mode == DisturbanceMode::StateJump {
        x += dist.row(0).transpose();
    }
    xs.set_row(0, &x.transpose());
    let mut last_u = Vector::zeros(q);
    let mut last_l = Vector::zeros(p);
    let mut reached = n;
    let mut diverged = false;
    for k in 0..n - 1 {
        let (u, l) = match controller(k, &x)? {
            Some(l) => {
                let u = if opts.constrained {
                    solve_input_qp(problem, &x, &l)?
                } else {
                    problem.unconstrained_control(&x, &l)?
                };
                (u, l)
            }
            None => {
                failed.push(k);
                (last_u.clone(), last_l.clone())
            }
        };
        us.set_row(k, &u.transpose());
        ls.set_row(k, &l.transpose());
        let d = dist.row(k + 1).transpose();
        let step = match opts.disturbance_mode {
            DisturbanceMode::StateJump => plant_step(problem, &x, &u, delta).map(|v| v + &d),
            DisturbanceMode::InputOffset => plant_step_forced(problem, &x, &u, Some(&(&d / delta)), delta),
        };
        match step {
            Ok(next) if next.iter().all(|v| v.is_finite()) => x = next,
            Ok(_) | Err(Error::Divergence(_)) => {
                reached = k + 1;
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
        xs.set_row(k + 1, &x.transpose());
        last_u = u;
        last_l = l;
    }
    let mut result = ClosedLoopResult {
        times: (0..reached).map(|k| problem.time(k)).collect(),
        x_series: xs.rows(0, reached).into_owned(),
        u_series: us.rows(0, reached - 1).into_owned(),
        lambda0_series: ls.rows(0, reached - 1).into_owned(),
        disturbance_series: dist.rows(0, reached).into_owned(),
        running_cost: 0.0,
        diverged,
        failed_steps: failed,
    };
    let costs = result.stage_costs(problem);
    result.running_cost = costs.windows(2).map(|c| 0.5 * delta * (c[0] + c[1])).sum();
    Ok(result)
}

/// Drive the plant with the network's first predicted co-state.
pub fn simulate_closed_loop(
    problem: &OcpProblem,
    model: &ConnModel,
    x0: &Vector,
    schedule: &DisturbanceSchedule,
    opts: SimOptions,
) -> Result<ClosedLoopResult> {
    if model.state_dim() != problem.state_dim() {
        return Err(Error::arg("model and problem state dimensions differ"));
    }
    let md = model.metadata.delta;
    if md > 0.0 && (md - problem.delta()).abs() > 1e-12 * md {
        return Err(Error::arg(format!(
            "model was trained with delta {md}, problem uses {}",
            problem.delta()
        )));
    }
    run_loop(problem, x0, schedule, opts, |_, x| {
        let pred = model.forward(x)?;
        Ok(Some(pred.row(0).transpose()))
    })
}

/// Receding-horizon reference: re-solve the boundary value problem from
/// every measured state and use its initial co-state. Each solve is warm
/// started from the previous solution shifted by one step, falling back to
/// continuation from that solution when Newton fails.
pub fn reference_closed_loop(
    problem: &OcpProblem,
    x0: &Vector,
    schedule: &DisturbanceSchedule,
    opts: SimOptions,
    solver: &SolverConfig,
) -> Result<ClosedLoopResult> {
    solver.validate()?;
    let mut prev: Option<TrajectoryPair> = None;
    run_loop(problem, x0, schedule, opts, |_, x| {
        let warm = prev.as_ref().map(shift_one_step);
        let mut pair = solve_tpbvp_warm(problem, x, solver, warm.as_ref())?;
        if !pair.converged {
            pair = solve_by_homotopy(problem, x, solver, prev.as_ref(), 0.5)?;
        }
        if pair.converged {
            let l = pair.costate(0);
            prev = Some(pair);
            Ok(Some(l))
        } else {
            Ok(None)
        }
    })
}

fn shift_one_step(pair: &TrajectoryPair) -> TrajectoryPair {
    let n = pair.len();
    let shift = |m: &Matrix| {
        let mut out = m.clone();
        for k in 0..n - 1 {
            out.set_row(k, &m.row(k + 1));
        }
        out
    };
    let x_traj = shift(&pair.x_traj);
    TrajectoryPair {
        x0: x_traj.row(0).transpose(),
        x_traj,
        lambda_traj: shift(&pair.lambda_traj),
        converged: pair.converged,
        residual_norm: pair.residual_norm,
    }
}
