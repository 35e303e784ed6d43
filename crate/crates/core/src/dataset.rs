//! Training-set generation from boundary-value solutions, sliding-window
//! extraction, and the text file format for datasets.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::{Matrix, OcpProblem, Vector};
use crate::tpbvp::{continuation_solve, SolverConfig, TrajectoryPair};

pub const DATASET_FORMAT: &str = "costate-dataset";
pub const DATASET_VERSION: u32 = 1;

/// Optimal trajectories for a set of initial states, sorted by `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub problem_id: String,
    pub delta: f64,
    /// Points per trajectory (N).
    pub steps: usize,
    pub entries: Vec<TrajectoryPair>,
}

impl Dataset {
    /// Number of trajectories (M).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.x_traj.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if !e.converged {
                return Err(Error::arg(format!("entry {i} is not converged")));
            }
            if e.x_traj.nrows() != self.steps || e.lambda_traj.nrows() != self.steps {
                return Err(Error::arg(format!("entry {i} does not have {} steps", self.steps)));
            }
        }
        for pair in self.entries.windows(2) {
            if lex_cmp(&pair[0].x0, &pair[1].x0) != std::cmp::Ordering::Less {
                return Err(Error::arg("entries must be sorted by x0 with unique values"));
            }
        }
        Ok(())
    }
}

fn lex_cmp(a: &Vector, b: &Vector) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Initial states that failed to converge during generation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationReport {
    pub failures: Vec<(Vector, f64)>,
}

/// Solve the boundary-value problem for `count` evenly spaced initial states
/// on `[x0_min, x0_max]` (endpoints included) and keep the converged ones.
///
/// The grid is split at the target into two continuation chains that walk
/// outward from it; the chains run concurrently. Fails if fewer than 90% of
/// the solves converge.
pub fn generate_dataset(
    problem: &OcpProblem,
    x0_min: f64,
    x0_max: f64,
    count: usize,
    solver: &SolverConfig,
) -> Result<(Dataset, GenerationReport)> {
    if problem.state_dim() != 1 {
        return Err(Error::arg("generate_dataset samples a scalar interval; problem must have p = 1"));
    }
    if count < 2 {
        return Err(Error::arg("count must be at least 2"));
    }
    if !(x0_min < x0_max) || !x0_min.is_finite() || !x0_max.is_finite() {
        return Err(Error::arg("x0_min must be less than x0_max"));
    }
    solver.validate()?;
    let spacing = (x0_max - x0_min) / (count - 1) as f64;
    let grid: Vec<f64> = (0..count)
        .map(|i| if i == count - 1 { x0_max } else { x0_min + spacing * i as f64 })
        .collect();
    let target = problem.x_target()[0];
    let mut upper: Vec<Vector> = grid
        .iter()
        .filter(|&&v| v >= target)
        .map(|&v| Vector::from_element(1, v))
        .collect();
    let mut lower: Vec<Vector> = grid
        .iter()
        .filter(|&&v| v < target)
        .map(|&v| Vector::from_element(1, v))
        .collect();
    upper.sort_by(|a, b| a[0].total_cmp(&b[0]));
    lower.sort_by(|a, b| b[0].total_cmp(&a[0]));

    let (up, down) = std::thread::scope(|scope| {
        let handle = scope.spawn(|| continuation_solve(problem, &lower, solver));
        let up = continuation_solve(problem, &upper, solver);
        (up, handle.join().expect("continuation thread panicked"))
    });
    let mut all = up?;
    all.extend(down?);
    all.sort_by(|a, b| a.x0[0].total_cmp(&b.x0[0]));

    let mut report = GenerationReport::default();
    let mut entries = Vec::with_capacity(all.len());
    for pair in all {
        if pair.converged {
            entries.push(pair);
        } else {
            report.failures.push((pair.x0.clone(), pair.residual_norm));
        }
    }
    if entries.len() * 10 < count * 9 {
        return Err(Error::NonConvergence(format!(
            "only {} of {count} boundary-value problems converged",
            entries.len()
        )));
    }
    let ds = Dataset {
        problem_id: problem.id().to_string(),
        delta: problem.delta(),
        steps: problem.steps(),
        entries,
    };
    Ok((ds, report))
}

/// One sliding-window slice of a trajectory pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub k: usize,
    /// n×p states starting at step k.
    pub x_window: Matrix,
    /// n×p co-states starting at step k.
    pub lambda_window: Matrix,
}

/// The `N − n` windows of length `n` starting at `k = 0, …, N − n − 1`.
pub fn windows(pair: &TrajectoryPair, n: usize) -> Result<Vec<Window>> {
    let total = pair.len();
    if n == 0 || n >= total {
        return Err(Error::arg(format!("horizon {n} must satisfy 0 < n < N = {total}")));
    }
    let p = pair.x_traj.ncols();
    Ok((0..total - n)
        .map(|k| Window {
            k,
            x_window: pair.x_traj.view((k, 0), (n, p)).into_owned(),
            lambda_window: pair.lambda_traj.view((k, 0), (n, p)).into_owned(),
        })
        .collect())
}

/// Write a dataset as self-describing text. Floats use shortest
/// round-trip formatting, so a reload is bit-exact.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_string(ds))?;
    Ok(())
}

pub fn dataset_to_string(ds: &Dataset) -> String {
    let p = ds.state_dim();
    let mut out = String::new();
    let _ = writeln!(out, "{DATASET_FORMAT} {DATASET_VERSION}");
    let _ = writeln!(out, "problem_id {}", ds.problem_id);
    let _ = writeln!(out, "delta {:?}", ds.delta);
    let _ = writeln!(out, "steps {}", ds.steps);
    let _ = writeln!(out, "trajectories {}", ds.entries.len());
    let _ = writeln!(out, "state_dim {p}");
    let mut columns = String::from("k t");
    for i in 0..p {
        let _ = write!(columns, " x{i}");
    }
    for i in 0..p {
        let _ = write!(columns, " lambda{i}");
    }
    let _ = writeln!(out, "columns {columns}");
    for (m, e) in ds.entries.iter().enumerate() {
        let x0: Vec<String> = e.x0.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "trajectory {m} x0 {} residual {:?}", x0.join(" "), e.residual_norm);
        for k in 0..e.len() {
            let _ = write!(out, "{k} {:?}", k as f64 * ds.delta);
            for v in e.x_traj.row(k).iter().chain(e.lambda_traj.row(k).iter()) {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text)
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.iter
            .next()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .ok_or_else(|| Error::parse(what, "unexpected end of file"))
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let (no, line) = self.next(key)?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::parse(format!("line {no}"), format!("expected '{key} <value>'")))
    }
}

fn num<T: std::str::FromStr>(s: &str, record: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(record, format!("cannot parse '{s}' as a number")))
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
    };
    let (_, magic) = lines.next("header")?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(DATASET_FORMAT) {
        return Err(Error::parse("header", format!("not a {DATASET_FORMAT} file")));
    }
    let version = parts.next().unwrap_or("");
    if version != DATASET_VERSION.to_string() {
        return Err(Error::Version {
            found: version.to_string(),
            expected: DATASET_VERSION.to_string(),
        });
    }
    let problem_id = lines.field("problem_id")?.to_string();
    let delta: f64 = num(lines.field("delta")?, "delta")?;
    let steps: usize = num(lines.field("steps")?, "steps")?;
    let count: usize = num(lines.field("trajectories")?, "trajectories")?;
    let p: usize = num(lines.field("state_dim")?, "state_dim")?;
    if p == 0 {
        return Err(Error::parse("state_dim", "must be positive"));
    }
    lines.field("columns")?;

    let mut entries = Vec::with_capacity(count);
    for m in 0..count {
        let record = format!("trajectory {m}");
        let (no, head) = lines.next(&record)?;
        let tokens: Vec<&str> = head.split_whitespace().collect();
        if tokens.len() != 5 + p || tokens[0] != "trajectory" || tokens[2] != "x0" || tokens[3 + p] != "residual" {
            return Err(Error::parse(&record, format!("malformed header on line {no}")));
        }
        if num::<usize>(tokens[1], &record)? != m {
            return Err(Error::parse(&record, "trajectory index out of sequence"));
        }
        let x0 = Vector::from_iterator(
            p,
            tokens[3..3 + p].iter().map(|t| num::<f64>(t, &record)).collect::<Result<Vec<_>>>()?,
        );
        let residual_norm: f64 = num(tokens[4 + p], &record)?;
        let mut x_traj = Matrix::zeros(steps, p);
        let mut lambda_traj = Matrix::zeros(steps, p);
        for k in 0..steps {
            let row_record = format!("trajectory {m}, row {k}");
            let (_, line) = lines.next(&row_record)?;
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != 2 + 2 * p {
                return Err(Error::parse(&row_record, format!("expected {} columns, found {}", 2 + 2 * p, cells.len())));
            }
            if num::<usize>(cells[0], &row_record)? != k {
                return Err(Error::parse(&row_record, "step index out of sequence"));
            }
            for i in 0..p {
                x_traj[(k, i)] = num(cells[2 + i], &row_record)?;
                lambda_traj[(k, i)] = num(cells[2 + p + i], &row_record)?;
            }
        }
        entries.push(TrajectoryPair {
            x0,
            x_traj,
            lambda_traj,
            converged: true,
            residual_norm,
        });
    }
    let (_, end) = lines.next("end marker")?;
    if end != "end" {
        return Err(Error::parse("end marker", "expected 'end' after the last trajectory"));
    }
    let ds = Dataset {
        problem_id,
        delta,
        steps,
        entries,
    };
    ds.validate()
        .map_err(|e| Error::parse("dataset", e.to_string()))?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::quad1d;
    use crate::tpbvp::solve_tpbvp;

    fn toy_pair(n: usize) -> TrajectoryPair {
        TrajectoryPair {
            x0: Vector::from_element(1, 0.0),
            x_traj: Matrix::from_fn(n, 1, |k, _| k as f64),
            lambda_traj: Matrix::from_fn(n, 1, |k, _| -(k as f64)),
            converged: true,
            residual_norm: 0.0,
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(windows(&toy_pair(201), 11).unwrap().len(), 190);
        let w = windows(&toy_pair(3), 2).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].k, 0);
        assert_eq!(w[0].x_window.as_slice(), &[0.0, 1.0]);
        assert!(matches!(windows(&toy_pair(3), 3), Err(Error::Argument(_))));
    }

    #[test]
    fn windows_tile_the_trajectory() {
        let pair = toy_pair(40);
        let n = 7;
        let ws = windows(&pair, n).unwrap();
        let starts: Vec<f64> = ws.iter().map(|w| w.x_window[(0, 0)]).collect();
        let expected: Vec<f64> = pair.x_traj.rows(0, 40 - n).iter().copied().collect();
        assert_eq!(starts, expected);
        for w in &ws {
            assert_eq!(w.x_window, pair.x_traj.rows(w.k, n).into_owned());
            assert_eq!(w.lambda_window, pair.lambda_traj.rows(w.k, n).into_owned());
        }
    }

    #[test]
    fn first_window_starts_at_x0() {
        let p = quad1d();
        let pair = solve_tpbvp(&p, &Vector::from_element(1, 1.5), &SolverConfig::default()).unwrap();
        let ws = windows(&pair, 11).unwrap();
        assert_eq!(ws[0].x_window[(0, 0)], 1.5);
    }

    #[test]
    fn count_must_be_at_least_two() {
        let p = quad1d();
        let r = generate_dataset(&p, -1.0, 1.0, 1, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Argument(_))));
        let r = generate_dataset(&p, 1.0, -1.0, 5, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn small_dataset_near_origin() {
        let p = quad1d();
        let (ds, report) = generate_dataset(&p, -0.1, 0.1, 2, &SolverConfig::default()).unwrap();
        assert!(report.failures.is_empty());
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.entries[0].x0[0], -0.1);
        assert_eq!(ds.entries[1].x0[0], 0.1);
        for e in &ds.entries {
            assert!(e.lambda_traj.amax() < 0.3);
        }
    }

    fn small_dataset() -> Dataset {
        generate_dataset(&quad1d(), -1.0, 1.0, 5, &SolverConfig::default()).unwrap().0
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let ds = small_dataset();
        let back = parse_dataset(&dataset_to_string(&ds)).unwrap();
        assert_eq!(back, ds);
        for (a, b) in ds.entries.iter().zip(&back.entries) {
            for (u, v) in a.lambda_traj.iter().zip(b.lambda_traj.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = dataset_to_string(&small_dataset());
        let cut = &text[..text.len() / 2];
        match parse_dataset(cut) {
            Err(Error::Parse { record, .. }) => assert!(record.starts_with("trajectory"), "{record}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_row_names_the_record() {
        let text = dataset_to_string(&small_dataset());
        let broken = text.replacen("\n3 0.15000000000000002 ", "\n3 0.15 oops ", 1);
        assert_ne!(broken, text);
        match parse_dataset(&broken) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, "trajectory 0, row 3"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_reported() {
        let text = dataset_to_string(&small_dataset()).replacen("costate-dataset 1", "costate-dataset 7", 1);
        assert!(matches!(parse_dataset(&text), Err(Error::Version { .. })));
    }

    #[test]
    fn regeneration_is_bit_identical() {
        assert_eq!(dataset_to_string(&small_dataset()), dataset_to_string(&small_dataset()));
    }
}
