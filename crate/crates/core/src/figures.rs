//! Scenario runners behind the `reproduce` command: each figure runs a fixed
//! set of closed-loop and baseline solves on the quad1d problem and writes
//! one CSV per run plus an overlay SVG.

use std::path::{Path, PathBuf};

use crate::colloc::{compare_trajectories, compare_trajectories_from, solve_nlp, transcribe, ComparisonReport, NlpOptions, NlpStatus};
use crate::control::{reference_closed_loop, simulate_closed_loop, ClosedLoopResult, DisturbanceSchedule, SimOptions};
use crate::error::{Error, Result};
use crate::network::ConnModel;
use crate::plot::{emit_plot, Figure, Series};
use crate::problem::{OcpProblem, Vector};
use crate::tpbvp::SolverConfig;

/// Input bound used for the constrained scenarios.
pub const FIGURE_INPUT_BOUND: f64 = 20.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    Fig3a,
    Fig3b,
    Fig4,
    Fig5,
}

impl FigureId {
    pub const ALL: [FigureId; 4] = [FigureId::Fig3a, FigureId::Fig3b, FigureId::Fig4, FigureId::Fig5];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig3a => "fig3a",
            FigureId::Fig3b => "fig3b",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::arg(format!("unknown figure '{name}' (expected fig3a, fig3b, fig4 or fig5)")))
    }
}

/// Everything a figure run needs besides the output directory.
pub struct FigureInputs<'a> {
    /// The unconstrained quad1d problem.
    pub problem: &'a OcpProblem,
    /// Trained with the continuity loss.
    pub model: &'a ConnModel,
    /// Trained without the continuity loss, if available.
    pub model_without_continuity: Option<&'a ConnModel>,
    pub solver: SolverConfig,
    pub nlp: NlpOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario: String,
    pub controller: String,
    pub final_state: f64,
    pub max_abs_input: f64,
    pub running_cost: f64,
    pub diverged: bool,
    pub failed_steps: usize,
    pub csv: PathBuf,
}

#[derive(Debug, Clone)]
pub struct FigureReport {
    pub figure: FigureId,
    pub runs: Vec<RunSummary>,
    /// `(scenario, description, metrics)`; deviations of the continuity
    /// model against the reference over `t ≥ 1` and against collocation
    /// over the whole horizon.
    pub comparisons: Vec<(String, String, ComparisonReport)>,
    pub svg: PathBuf,
    pub collocation_status: Option<NlpStatus>,
}

impl FigureReport {
    pub fn run(&self, scenario: &str, controller: &str) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.scenario == scenario && r.controller == controller)
    }

    pub fn comparison(&self, scenario: &str, description: &str) -> Option<&ComparisonReport> {
        self.comparisons
            .iter()
            .find(|(s, d, _)| s == scenario && d == description)
            .map(|(_, _, c)| c)
    }
}

struct Scenario {
    name: &'static str,
    x0: f64,
    constrained: bool,
    schedule: DisturbanceSchedule,
    collocation: bool,
}

fn scenarios(fig: FigureId) -> Vec<Scenario> {
    let plain = |name, x0, constrained, collocation| Scenario {
        name,
        x0,
        constrained,
        schedule: DisturbanceSchedule::empty(),
        collocation,
    };
    match fig {
        FigureId::Fig3a => vec![plain("x0_20", 20.0, false, false)],
        FigureId::Fig3b => vec![plain("x0_m10", -10.0, false, false)],
        FigureId::Fig4 => vec![plain("x0_m4_bounded", -4.0, true, true)],
        FigureId::Fig5 => vec![
            Scenario {
                schedule: DisturbanceSchedule::standard(),
                ..plain("x0_m4_bounded_disturbed", -4.0, true, false)
            },
            Scenario {
                schedule: DisturbanceSchedule::standard(),
                ..plain("x0_20_disturbed", 20.0, false, false)
            },
        ],
    }
}

pub fn bounded(problem: &OcpProblem) -> Result<OcpProblem> {
    let q = problem.input_dim();
    problem.with_input_bounds(
        Vector::from_element(q, -FIGURE_INPUT_BOUND),
        Vector::from_element(q, FIGURE_INPUT_BOUND),
    )
}

fn summarize(scenario: &str, controller: &str, r: &ClosedLoopResult, csv: PathBuf) -> RunSummary {
    RunSummary {
        scenario: scenario.to_string(),
        controller: controller.to_string(),
        final_state: r.final_state()[0],
        max_abs_input: r.u_series.amax(),
        running_cost: r.running_cost,
        diverged: r.diverged,
        failed_steps: r.failed_steps.len(),
        csv,
    }
}

/// Run every scenario of `fig`, writing `<fig>_<scenario>_<controller>.csv`
/// files and `<fig>.svg` into `out_dir`.
pub fn reproduce_figure(fig: FigureId, inputs: &FigureInputs, out_dir: &Path) -> Result<FigureReport> {
    if inputs.problem.state_dim() != 1 {
        return Err(Error::arg("figures are defined for the scalar quad1d problem"));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut runs = Vec::new();
    let mut comparisons = Vec::new();
    let mut figure = Figure::new(fig.name());
    let mut collocation_status = None;
    let multi = scenarios(fig).len() > 1;
    for sc in scenarios(fig) {
        let problem = if sc.constrained {
            bounded(inputs.problem)?
        } else {
            inputs.problem.clone()
        };
        let opts = SimOptions {
            constrained: sc.constrained,
            ..SimOptions::default()
        };
        let x0 = Vector::from_element(1, sc.x0);
        let mut results: Vec<(&str, ClosedLoopResult)> = Vec::new();
        results.push(("conn", simulate_closed_loop(&problem, inputs.model, &x0, &sc.schedule, opts)?));
        if let Some(m0) = inputs.model_without_continuity {
            results.push(("conn_nocont", simulate_closed_loop(&problem, m0, &x0, &sc.schedule, opts)?));
        }
        results.push((
            "reference",
            reference_closed_loop(&problem, &x0, &sc.schedule, opts, &inputs.solver)?,
        ));
        if sc.collocation {
            let nlp = transcribe(&problem, &x0)?;
            let sol = solve_nlp(&nlp, &nlp.initial_guess(), &inputs.nlp)?;
            collocation_status = Some(sol.status);
            results.push(("collocation", sol.to_result(&nlp)));
        }
        let conn = &results[0].1;
        for (name, r) in &results[1..] {
            let report = if *name == "collocation" {
                compare_trajectories(conn, r)
            } else {
                compare_trajectories_from(conn, r, 1.0)
            };
            // Diverged runs are shorter than the grid; there is nothing to compare.
            if let Ok(report) = report {
                comparisons.push((sc.name.to_string(), format!("conn_vs_{name}"), report));
            }
        }
        for (name, r) in &results {
            let path = out_dir.join(format!("{}_{}_{}.csv", fig.name(), sc.name, name));
            r.save_csv(&problem, &path)?;
            runs.push(summarize(sc.name, name, r, path));
        }
        let suffix = if multi { format!(" ({})", sc.name) } else { String::new() };
        let x_series = results
            .iter()
            .map(|(name, r)| Series::new(*name, r.times.clone(), r.x_series.column(0).iter().copied().collect()))
            .collect();
        let u_series = results
            .iter()
            .map(|(name, r)| {
                let m = r.u_series.nrows();
                Series::new(*name, r.times[..m].to_vec(), r.u_series.column(0).iter().copied().collect())
            })
            .collect();
        figure = figure.panel(format!("x{suffix}"), x_series).panel(format!("u{suffix}"), u_series);
    }
    let svg = out_dir.join(format!("{}.svg", fig.name()));
    emit_plot(&figure, &svg)?;
    Ok(FigureReport {
        figure: fig,
        runs,
        comparisons,
        svg,
        collocation_status,
    })
}
