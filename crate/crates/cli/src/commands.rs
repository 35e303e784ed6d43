use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use costate_core::colloc::{compare_trajectories_from, solve_nlp, transcribe, NlpOptions, NlpStatus};
use costate_core::control::{
    reference_closed_loop, simulate_closed_loop, ClosedLoopResult, DisturbanceMode, DisturbanceSchedule, SimOptions,
};
use costate_core::dataset::{generate_dataset, load_dataset, save_dataset, Dataset};
use costate_core::figures::{reproduce_figure, FigureId, FigureInputs};
use costate_core::integrate::StepScheme;
use costate_core::loss::ContinuityOptions;
use costate_core::network::{Activation, ConnModel};
use costate_core::plot::{emit_plot, Figure, Series};
use costate_core::problem::{builtin, quad1d, OcpProblem, Vector};
use costate_core::tpbvp::SolverConfig;
use costate_core::train::{init_model, train_with_progress, EpochLog, TrainConfig, TrainOutcome};

use crate::error::CliError;

pub struct Context {
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl Context {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn warn(&self, msg: impl AsRef<str>) {
        eprintln!("warning: {}", msg.as_ref());
    }

    /// `explicit` if given, otherwise `name` inside the output directory.
    fn path_or_default(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(name))
    }
}

type CmdResult = Result<(), CliError>;

/// Run a core loader, naming the file in I/O and parse failures.
fn load<T>(path: &Path, f: impl FnOnce(&Path) -> costate_core::Result<T>) -> Result<T, CliError> {
    f(path).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn ensure_parent(path: &Path) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
    }
    Ok(())
}

fn problem_on_grid(id: &str, t_final: Option<f64>, delta: Option<f64>) -> Result<OcpProblem, CliError> {
    let base = builtin(id)?;
    if t_final.is_none() && delta.is_none() {
        return Ok(base);
    }
    Ok(base.with_grid(t_final.unwrap_or(base.t_final()), delta.unwrap_or(base.delta()))?)
}

fn vector(values: &[f64], dim: usize, what: &str) -> Result<Vector, CliError> {
    match values.len() {
        1 => Ok(Vector::from_element(dim, values[0])),
        n if n == dim => Ok(Vector::from_column_slice(values)),
        n => Err(CliError::Usage(format!("{what} has {n} components, expected {dim}"))),
    }
}

/// Apply `--u-min/--u-max`; either flag also switches the saturated input on.
fn apply_bounds(
    problem: OcpProblem,
    constrained: bool,
    u_min: &Option<Vec<f64>>,
    u_max: &Option<Vec<f64>>,
) -> Result<(OcpProblem, bool), CliError> {
    let q = problem.input_dim();
    if u_min.is_none() && u_max.is_none() {
        if constrained && problem.u_min().iter().chain(problem.u_max().iter()).all(|v| !v.is_finite()) {
            return Err(CliError::Usage(format!(
                "problem {} has no input bounds; pass --u-min/--u-max with --constrained",
                problem.id()
            )));
        }
        return Ok((problem, constrained));
    }
    let lo = match u_min {
        Some(v) => vector(v, q, "--u-min")?,
        None => problem.u_min().clone(),
    };
    let hi = match u_max {
        Some(v) => vector(v, q, "--u-max")?,
        None => problem.u_max().clone(),
    };
    Ok((problem.with_input_bounds(lo, hi)?, true))
}

fn result_figure(title: &str, runs: &[(&str, &ClosedLoopResult)], p: usize, q: usize) -> Figure {
    let mut fig = Figure::new(title);
    for i in 0..p {
        let label = if p == 1 { "x".to_string() } else { format!("x{}", i + 1) };
        let series = runs
            .iter()
            .map(|(name, r)| Series::new(*name, r.times.clone(), r.x_series.column(i).iter().copied().collect()))
            .collect();
        fig = fig.panel(label, series);
    }
    for i in 0..q {
        let label = if q == 1 { "u".to_string() } else { format!("u{}", i + 1) };
        let series = runs
            .iter()
            .map(|(name, r)| {
                let m = r.u_series.nrows();
                Series::new(*name, r.times[..m].to_vec(), r.u_series.column(i).iter().copied().collect())
            })
            .collect();
        fig = fig.panel(label, series);
    }
    fig
}

fn describe(name: &str, r: &ClosedLoopResult) -> String {
    let xf = r.final_state();
    let xf: Vec<String> = xf.iter().map(|v| format!("{v:.6e}")).collect();
    format!(
        "{name}: x(t_end)=[{}] max|u|={:.6} cost={:.6} diverged={} failed_steps={}",
        xf.join(", "),
        r.u_series.amax(),
        r.running_cost,
        r.diverged,
        r.failed_steps.len()
    )
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GenDataArgs {
    /// Built-in problem name.
    #[arg(long, default_value = "quad1d")]
    pub problem: String,
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    pub x0_min: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub x0_max: f64,
    /// Number of evenly spaced initial states, endpoints included.
    #[arg(long, default_value_t = 101)]
    pub count: usize,
    /// Sampling interval; defaults to the problem's.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Horizon length; defaults to the problem's.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Shooting segments per solve.
    #[arg(long, default_value_t = 20)]
    pub segments: usize,
    /// Output file [default: <out-dir>/dataset.txt].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn gen_data(ctx: &Context, a: GenDataArgs) -> CmdResult {
    let problem = problem_on_grid(&a.problem, a.t_final, a.delta)?;
    let solver = SolverConfig {
        n_segments: a.segments,
        ..SolverConfig::default()
    };
    let out = ctx.path_or_default(&a.out, "dataset.txt");
    ctx.info(format!(
        "solving {} boundary-value problems for {} on [{}, {}]",
        a.count,
        problem.id(),
        a.x0_min,
        a.x0_max
    ));
    let (ds, report) = generate_dataset(&problem, a.x0_min, a.x0_max, a.count, &solver)?;
    for (x0, residual) in &report.failures {
        ctx.warn(format!("x0 = {} did not converge (residual {residual:.3e})", x0[0]));
    }
    ensure_parent(&out)?;
    save_dataset(&ds, &out)?;
    let worst = ds
        .entries
        .iter()
        .map(|e| e.x_traj.row(e.x_traj.nrows() - 1).amax())
        .fold(0.0, f64::max);
    println!(
        "wrote {} trajectories ({} failed) to {}; max |x(t_final)| = {worst:.3e}",
        ds.len(),
        report.failures.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset file [default: <out-dir>/dataset.txt].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub continuity_weight: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// tanh, relu or softplus.
    #[arg(long, default_value = "softplus")]
    pub activation: String,
    /// Co-state points predicted per input state.
    #[arg(long, default_value_t = 11)]
    pub horizon: usize,
    /// One-step integrator inside the continuity loss: rk4 or euler.
    #[arg(long, default_value = "rk4")]
    pub scheme: String,
    #[arg(long, default_value_t = 1)]
    pub substeps: usize,
    /// Visit windows in seeded random order.
    #[arg(long)]
    pub shuffle: bool,
    /// Output model [default: <out-dir>/model.txt].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig, CliError> {
        let config = TrainConfig {
            n_epoch: self.epochs,
            learning_rate: self.lr,
            continuity_weight: self.continuity_weight,
            seed: self.seed,
            hidden: self.hidden.clone(),
            activation: Activation::from_name(&self.activation)?,
            horizon: self.horizon,
            continuity: ContinuityOptions {
                scheme: StepScheme::from_name(&self.scheme)?,
                substeps: self.substeps,
            },
            shuffle: self.shuffle,
            ..TrainConfig::default()
        };
        if config.n_epoch > 0 {
            config.validate()?;
        }
        Ok(config)
    }
}

fn dataset_problem(ds: &Dataset) -> Result<OcpProblem, CliError> {
    if ds.steps < 2 {
        return Err(CliError::Usage("dataset trajectories need at least two points".into()));
    }
    problem_on_grid(&ds.problem_id, Some(ds.delta * (ds.steps - 1) as f64), Some(ds.delta))
}

fn run_training(ctx: &Context, ds: &Dataset, config: &TrainConfig) -> Result<TrainOutcome, CliError> {
    let problem = dataset_problem(ds)?;
    let model = init_model(&problem, ds, config)?;
    let total = config.n_epoch;
    let outcome = train_with_progress(model, ds, &problem, config, |log: &EpochLog| {
        ctx.info(format!(
            "epoch {}/{total}: prediction {:.6e} continuity {:.6e} diverged windows {}",
            log.epoch + 1,
            log.prediction_loss, log.continuity_loss, log.diverged_windows
        ))
    })?;
    Ok(outcome)
}

fn write_loss_log(path: &Path, log: &[EpochLog]) -> CmdResult {
    ensure_parent(path)?;
    let mut text = String::from("epoch,prediction_loss,continuity_loss,continuity_weight,updates,diverged_windows\n");
    for e in log {
        text.push_str(&format!(
            "{},{:?},{:?},{:?},{},{}\n",
            e.epoch, e.prediction_loss, e.continuity_loss, e.continuity_weight, e.updates, e.diverged_windows
        ));
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn train(ctx: &Context, a: TrainArgs) -> CmdResult {
    let config = a.config()?;
    let data = ctx.path_or_default(&a.data, "dataset.txt");
    let ds = load(&data, |p| load_dataset(p))?;
    let out = ctx.path_or_default(&a.out, "model.txt");
    let outcome = run_training(ctx, &ds, &config)?;
    ensure_parent(&out)?;
    outcome.model.save(&out)?;
    if let Some(path) = &a.loss_log {
        write_loss_log(path, &outcome.log)?;
    }
    if let Some(reason) = outcome.aborted {
        return Err(CliError::NonConvergence(format!(
            "training stopped early ({reason}); last finite checkpoint written to {}",
            out.display()
        )));
    }
    println!("wrote model to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    /// Trained model [default: <out-dir>/model.txt].
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Initial state, comma separated for vector states.
    #[arg(long, required = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Vec<f64>,
    /// Saturate the input to the problem's bounds.
    #[arg(long)]
    pub constrained: bool,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub u_min: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub u_max: Option<Vec<f64>>,
    /// Disturbance events as `t:mag,...` (vector magnitudes use `;`).
    #[arg(long, allow_hyphen_values = true)]
    pub disturbance: Option<String>,
    /// How disturbances enter: jump (state) or offset (input).
    #[arg(long, default_value = "jump")]
    pub disturbance_mode: String,
    /// Horizon length; defaults to the problem's.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Result CSV [default: <out-dir>/simulate.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run the solver-per-step reference controller.
    #[arg(long)]
    pub reference: bool,
    /// Shooting segments for the reference controller.
    #[arg(long, default_value_t = 40)]
    pub segments: usize,
    /// SVG plot of the run(s).
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

pub fn simulate(ctx: &Context, a: SimulateArgs) -> CmdResult {
    let model_path = ctx.path_or_default(&a.model, "model.txt");
    let model = load(&model_path, |p| ConnModel::load(p))?;
    let problem = problem_on_grid(&model.metadata.problem_id, a.t_final, Some(model.metadata.delta))?;
    let (problem, constrained) = apply_bounds(problem, a.constrained, &a.u_min, &a.u_max)?;
    let x0 = vector(&a.x0, problem.state_dim(), "--x0")?;
    let schedule = match &a.disturbance {
        Some(text) => DisturbanceSchedule::parse(text)?,
        None => DisturbanceSchedule::empty(),
    };
    let opts = SimOptions {
        constrained,
        disturbance_mode: DisturbanceMode::from_name(&a.disturbance_mode)?,
    };
    let out = ctx.path_or_default(&a.out, "simulate.csv");
    ensure_parent(&out)?;
    let conn = simulate_closed_loop(&problem, &model, &x0, &schedule, opts)?;
    conn.save_csv(&problem, &out)?;
    println!("{}", describe("conn", &conn));
    println!("wrote {}", out.display());
    let mut diverged = conn.diverged;
    let reference = if a.reference {
        let solver = SolverConfig {
            n_segments: a.segments,
            ..SolverConfig::default()
        };
        ctx.info("running reference controller (one boundary-value solve per step)");
        let r = reference_closed_loop(&problem, &x0, &schedule, opts, &solver)?;
        let path = sibling(&out, "reference");
        r.save_csv(&problem, &path)?;
        println!("{}", describe("reference", &r));
        println!("wrote {}", path.display());
        diverged |= r.diverged;
        Some(r)
    } else {
        None
    };
    if let Some(path) = &a.plot {
        let mut runs = vec![("conn", &conn)];
        if let Some(r) = &reference {
            runs.push(("reference", r));
        }
        ensure_parent(path)?;
        emit_plot(&result_figure("closed loop", &runs, problem.state_dim(), problem.input_dim()), path)?;
        println!("wrote {}", path.display());
    }
    if diverged {
        return Err(CliError::NonConvergence("closed-loop simulation diverged".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- baseline

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BaselineArgs {
    #[arg(long, default_value = "quad1d")]
    pub problem: String,
    #[arg(long, required = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Vec<f64>,
    /// Keep the input within the problem's bounds.
    #[arg(long)]
    pub constrained: bool,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub u_min: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub u_max: Option<Vec<f64>>,
    /// Node spacing; defaults to the problem's sampling interval.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Augmented-Lagrangian outer iterations.
    #[arg(long, default_value_t = 60)]
    pub max_outer: usize,
    /// Largest accepted collocation defect.
    #[arg(long, default_value_t = 1e-6)]
    pub defect_tol: f64,
    /// Result CSV [default: <out-dir>/baseline.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

pub fn baseline(ctx: &Context, a: BaselineArgs) -> CmdResult {
    let problem = problem_on_grid(&a.problem, a.t_final, a.delta)?;
    let (problem, constrained) = apply_bounds(problem, a.constrained, &a.u_min, &a.u_max)?;
    let problem = if constrained { problem } else { problem.unbounded() };
    let x0 = vector(&a.x0, problem.state_dim(), "--x0")?;
    let opts = NlpOptions {
        max_outer: a.max_outer,
        defect_tol: a.defect_tol,
        ..NlpOptions::default()
    };
    let nlp = transcribe(&problem, &x0)?;
    ctx.info(format!(
        "collocation: {} decision variables, {} defects",
        nlp.decision_dim(),
        nlp.defect_count()
    ));
    let sol = solve_nlp(&nlp, &nlp.initial_guess(), &opts)?;
    for o in &sol.log {
        ctx.info(format!(
            "outer {}: penalty {:.1e} max defect {:.3e} inner iterations {}",
            o.iteration, o.penalty, o.max_defect, o.inner_iterations
        ));
    }
    let result = sol.to_result(&nlp);
    let out = ctx.path_or_default(&a.out, "baseline.csv");
    ensure_parent(&out)?;
    result.save_csv(&problem, &out)?;
    println!(
        "collocation: objective={:.6} max_defect={:.3e} status={:?}",
        sol.objective, sol.max_defect, sol.status
    );
    println!("wrote {}", out.display());
    if let Some(path) = &a.plot {
        ensure_parent(path)?;
        emit_plot(
            &result_figure("collocation", &[("collocation", &result)], problem.state_dim(), problem.input_dim()),
            path,
        )?;
        println!("wrote {}", path.display());
    }
    if sol.status != NlpStatus::Converged {
        return Err(CliError::NonConvergence(format!(
            "collocation stopped at the iteration limit with max defect {:.3e}",
            sol.max_defect
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CompareArgs {
    /// First result CSV.
    pub a: PathBuf,
    /// Second result CSV, on the same time grid.
    pub b: PathBuf,
    /// Ignore samples before this time.
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    /// Write the metrics as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn compare(_ctx: &Context, a: CompareArgs) -> CmdResult {
    let ra = load(&a.a, |p| ClosedLoopResult::load_csv(p))?;
    let rb = load(&a.b, |p| ClosedLoopResult::load_csv(p))?;
    let report = compare_trajectories_from(&ra, &rb, a.from)?;
    let rows = [
        ("max_state_deviation", report.max_state_deviation),
        ("mean_state_deviation", report.mean_state_deviation),
        ("max_input_deviation", report.max_input_deviation),
        ("cost_gap", report.cost_gap),
    ];
    let mut csv = String::from("metric,value\n");
    for (k, v) in rows {
        println!("{k} = {v:.9e}");
        csv.push_str(&format!("{k},{v:?}\n"));
    }
    if let Some(path) = &a.out {
        ensure_parent(path)?;
        fs::write(path, csv).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- reproduce

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ReproduceArgs {
    /// fig3a, fig3b, fig4, fig5 or all (comma separated).
    #[arg(long, default_value = "all", value_delimiter = ',')]
    pub figure: Vec<String>,
    /// Dataset [default: <out-dir>/dataset.txt, generated if missing].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model trained with the continuity loss [default: <out-dir>/model.txt, trained if missing].
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Model trained without it [default: <out-dir>/model_nocont.txt, trained if missing].
    #[arg(long)]
    pub model_nocont: Option<PathBuf>,
    /// Epochs used when a model has to be trained.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Seed used when a model has to be trained.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shooting segments for the reference controller.
    #[arg(long, default_value_t = 40)]
    pub segments: usize,
}

fn figure_list(names: &[String]) -> Result<Vec<FigureId>, CliError> {
    if names.iter().any(|n| n == "all") {
        return Ok(FigureId::ALL.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let f = FigureId::from_name(n)?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    Ok(out)
}

fn existing(explicit: &Option<PathBuf>, fallback: PathBuf) -> Option<PathBuf> {
    explicit.iter().cloned().chain([fallback]).find(|p| p.is_file())
}

fn obtain_model(
    ctx: &Context,
    explicit: &Option<PathBuf>,
    name: &str,
    ds: &Dataset,
    config: &TrainConfig,
) -> Result<ConnModel, CliError> {
    let fallback = ctx.out_dir.join(name);
    if let Some(path) = existing(explicit, fallback.clone()) {
        return load(&path, |p| ConnModel::load(p));
    }
    ctx.warn(format!(
        "no trained model at {}; training one with default settings (continuity weight {})",
        explicit.as_ref().unwrap_or(&fallback).display(),
        config.continuity_weight
    ));
    let outcome = run_training(ctx, ds, config)?;
    if let Some(reason) = outcome.aborted {
        return Err(CliError::NonConvergence(format!("training stopped early: {reason}")));
    }
    outcome.model.save(&fallback)?;
    ctx.info(format!("saved {}", fallback.display()));
    Ok(outcome.model)
}

pub fn reproduce(ctx: &Context, a: ReproduceArgs) -> CmdResult {
    let figures = figure_list(&a.figure)?;
    fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", ctx.out_dir.display())))?;
    let problem = quad1d();
    let ds_default = ctx.out_dir.join("dataset.txt");
    let ds = match existing(&a.data, ds_default.clone()) {
        Some(path) => load(&path, |p| load_dataset(p))?,
        None => {
            ctx.warn(format!(
                "no dataset at {}; generating the default one",
                a.data.as_ref().unwrap_or(&ds_default).display()
            ));
            let (ds, report) = generate_dataset(&problem, -5.0, 5.0, 101, &SolverConfig::default())?;
            for (x0, residual) in &report.failures {
                ctx.warn(format!("x0 = {} did not converge (residual {residual:.3e})", x0[0]));
            }
            save_dataset(&ds, &ds_default)?;
            ds
        }
    };
    if ds.problem_id != problem.id() {
        return Err(CliError::Usage(format!(
            "figures need a {} dataset, got {}",
            problem.id(),
            ds.problem_id
        )));
    }
    let base = TrainConfig {
        n_epoch: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let model = obtain_model(ctx, &a.model, "model.txt", &ds, &base)?;
    let nocont_config = TrainConfig {
        continuity_weight: 0.0,
        ..base
    };
    let model_nocont = obtain_model(ctx, &a.model_nocont, "model_nocont.txt", &ds, &nocont_config)?;
    for m in [&model, &model_nocont] {
        if m.metadata.problem_id != problem.id() || m.metadata.delta != problem.delta() {
            return Err(CliError::Usage(format!(
                "model was trained for {} with delta {}",
                m.metadata.problem_id, m.metadata.delta
            )));
        }
    }
    let inputs = FigureInputs {
        problem: &problem,
        model: &model,
        model_without_continuity: Some(&model_nocont),
        solver: SolverConfig {
            n_segments: a.segments,
            ..SolverConfig::default()
        },
        nlp: NlpOptions::default(),
    };
    let mut stdout = std::io::stdout().lock();
    for fig in figures {
        ctx.info(format!("reproducing {}", fig.name()));
        let report = reproduce_figure(fig, &inputs, &ctx.out_dir)?;
        let _ = writeln!(stdout, "{}:", fig.name());
        for r in &report.runs {
            let _ = writeln!(
                stdout,
                "  {} {}: x(t_end)={:.6e} max|u|={:.6} cost={:.6} diverged={} -> {}",
                r.scenario,
                r.controller,
                r.final_state,
                r.max_abs_input,
                r.running_cost,
                r.diverged,
                r.csv.display()
            );
        }
        for (scenario, what, c) in &report.comparisons {
            let _ = writeln!(
                stdout,
                "  {scenario} {what}: max_state_dev={:.6e} max_input_dev={:.6e} cost_gap={:.6e}",
                c.max_state_deviation, c.max_input_deviation, c.cost_gap
            );
        }
        if let Some(status) = report.collocation_status {
            let _ = writeln!(stdout, "  collocation status: {status:?}");
        }
        let _ = writeln!(stdout, "  plot: {}", report.svg.display());
    }
    Ok(())
}
