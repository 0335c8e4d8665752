//! `simulate`: closed-loop run, trajectory CSV and timing summary.

use std::path::PathBuf;

use qlmpc::closed_loop::{run_closed_loop, simulate, Failure, Trajectory};
use qlmpc::model::Adip;
use serde::Serialize;

use crate::config::Resolved;
use crate::output::{create_dir, csv_writer, file_stem, fmt_f64, path_in, write_json, Spread};
use crate::CliError;

#[derive(Debug, Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    model: &'a str,
    variant: &'static str,
    mode: qlmpc::Mode,
    stop_tol: f64,
    max_iter: usize,
    steps: usize,
    repeat: usize,
    seed: u64,
    /// Total controller solve time of one closed-loop run, over repeats.
    solve_time_s: Spread,
    /// Time spent building and condensing QPs, over repeats.
    prep_time_s: Spread,
    final_rcso: Option<f64>,
    final_dr: Option<f64>,
    reference_final_dr: Option<f64>,
    total_iterations: usize,
    converged_steps: usize,
    terminal_state: Vec<f64>,
    failed: bool,
    failure: Option<&'a Failure>,
    reference_failure: Option<&'a Failure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parameter_note: Option<&'static str>,
}

pub struct Written {
    pub trajectory: PathBuf,
    pub summary: PathBuf,
}

pub fn run(cfg: &Resolved) -> Result<Written, CliError> {
    let scn = &cfg.scenario;
    let result = simulate(scn).map_err(CliError::numerical)?;

    // further controller runs only refine the timing statistics; the
    // trajectory is deterministic
    let mut runs: Vec<Trajectory> = Vec::with_capacity(cfg.repeat);
    runs.push(result.controller.clone());
    for _ in 1..cfg.repeat {
        runs.push(run_closed_loop(scn, &scn.controller).map_err(CliError::numerical)?);
    }
    let totals = |f: fn(&qlmpc::closed_loop::StepStats) -> f64| -> Vec<f64> {
        runs.iter().map(|t| t.per_step.iter().map(f).fold(0.0, |a, b| a + b)).collect()
    };
    let per_step_median = |k: usize, f: fn(&qlmpc::closed_loop::StepStats) -> f64| -> f64 {
        let samples: Vec<f64> = runs.iter().filter_map(|t| t.per_step.get(k)).map(f).collect();
        Spread::of(&samples).median
    };

    create_dir(&cfg.out).map_err(CliError::Config)?;
    let stem = file_stem(&scn.name, scn.controller.variant.as_str());
    let traj_path = path_in(&cfg.out, &format!("{stem}_trajectory"), "csv");
    let summary_path = path_in(&cfg.out, &format!("{stem}_summary"), "json");

    let traj = &result.controller;
    let dims = scn.model().map_err(CliError::config)?.dims();
    let (nx, nu) = (dims.n_x, dims.n_u);
    let mut w = csv_writer(&traj_path).map_err(CliError::Config)?;
    let mut header = vec!["step".to_string()];
    header.extend((1..=nx).map(|i| format!("x_{i}")));
    header.extend((1..=nu).map(|i| format!("u_{i}")));
    header.extend(["dr", "rcso", "iterations", "solve_time_s", "prep_time_s"].map(String::from));
    w.write_record(&header).map_err(|e| CliError::Config(e.into()))?;
    for (k, u) in traj.inputs.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(traj.states[k].iter().map(|v| fmt_f64(*v)));
        row.extend(u.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(traj.dr[k]));
        row.push(result.rcso.get(k).copied().flatten().map(fmt_f64).unwrap_or_default());
        row.push(traj.per_step[k].iterations.to_string());
        row.push(fmt_f64(per_step_median(k, |s| s.solve_time)));
        row.push(fmt_f64(per_step_median(k, |s| s.prep_time)));
        w.write_record(&row).map_err(|e| CliError::Config(e.into()))?;
    }
    w.flush().map_err(|e| CliError::Config(e.into()))?;

    let summary = Summary {
        scenario: &scn.name,
        model: &scn.model,
        variant: scn.controller.variant.as_str(),
        mode: scn.controller.mode,
        stop_tol: scn.controller.stop_tol,
        max_iter: scn.controller.max_iter,
        steps: scn.steps,
        repeat: cfg.repeat,
        seed: cfg.seed,
        solve_time_s: Spread::of(&totals(|s| s.solve_time)),
        prep_time_s: Spread::of(&totals(|s| s.prep_time)),
        final_rcso: result.final_rcso(),
        final_dr: traj.dr.last().copied(),
        reference_final_dr: result.reference.dr.last().copied(),
        total_iterations: traj.per_step.iter().map(|s| s.iterations).sum(),
        converged_steps: traj.per_step.iter().filter(|s| s.converged).count(),
        terminal_state: traj.states.last().map(|x| x.iter().copied().collect()).unwrap_or_default(),
        failed: result.failed(),
        failure: traj.failure.as_ref(),
        reference_failure: result.reference.failure.as_ref(),
        parameter_note: (scn.model == "adip").then_some(Adip::PARAMETER_NOTE),
    };
    write_json(&summary_path, &summary).map_err(CliError::Config)?;

    if result.failed() {
        let f = traj.failure.as_ref().or(result.reference.failure.as_ref()).unwrap();
        return Err(CliError::Numerical(anyhow::anyhow!(
            "closed loop failed at step {}: {} (partial outputs in {})",
            f.step,
            f.message,
            cfg.out.display()
        )));
    }
    Ok(Written {
        trajectory: traj_path,
        summary: summary_path,
    })
}
