//! `diagnose`: perturbed-NLP identity, contraction fit and SQP equivalence
//! at the scenario's first timestep.

use std::path::PathBuf;

use nalgebra::DVector;
use qlmpc::diagnostics::{contraction_fit, sqp_equivalence_deviation, verify_perturbed_nlp};
use qlmpc::model::Adip;
use qlmpc::solver::{initial_guess, solve_ocp};
use qlmpc::{DecisionVector, KktPoint, Mode, SolverOptions, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Resolved;
use crate::output::{create_dir, file_stem, path_in, write_json};
use crate::CliError;

/// Random KKT points probed for the SQP equivalence.
pub const SQP_SAMPLES: usize = 20;
/// Tolerance of the same-variant fixpoint that the contraction errors are measured against.
const FIXPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Serialize)]
struct Report {
    scenario: String,
    model: String,
    seed: u64,
    /// `‖e‖_∞` at the standard-variant fixpoint.
    e_norm: f64,
    identity_error_inf: f64,
    feasibility_residual_inf: f64,
    standard_iterations: usize,
    contraction_variant: &'static str,
    kappa_hat: f64,
    omega_hat: f64,
    radius_bound: Option<f64>,
    fit_residual: f64,
    max_bound_violation: f64,
    contraction_errors: Vec<f64>,
    sqp_samples: usize,
    sqp_equivalence_max_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    parameter_note: Option<&'static str>,
}

pub fn run(cfg: &Resolved) -> Result<PathBuf, CliError> {
    let scn = &cfg.scenario;
    let prob = scn.problem().map_err(CliError::config)?;
    let x0 = scn.x0_vector();
    let y0 = initial_guess(&prob, &x0).map_err(CliError::numerical)?;
    // diagnostics always iterate to convergence; --mode is not used here
    let opts = SolverOptions {
        mode: Mode::Converge,
        ..scn.controller
    };

    let standard = solve_ocp(
        &prob,
        &x0,
        &y0,
        &SolverOptions {
            variant: Variant::Standard,
            ..opts
        },
    )
    .map_err(CliError::numerical)?;
    let nlp = verify_perturbed_nlp(&prob, &standard, &x0).map_err(CliError::numerical)?;

    let trace = solve_ocp(&prob, &x0, &y0, &opts).map_err(CliError::numerical)?;
    let fixpoint = solve_ocp(
        &prob,
        &x0,
        &y0,
        &SolverOptions {
            stop_tol: FIXPOINT_TOL,
            max_iter: opts.max_iter.max(300),
            ..opts
        },
    )
    .map_err(CliError::numerical)?;
    let est = contraction_fit(&trace, fixpoint.solution()).map_err(CliError::numerical)?;

    // random points around the initial guess, plus both solutions
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layout = prob.layout();
    let mut points = vec![standard.solution().clone(), trace.solution().clone()];
    for _ in 0..SQP_SAMPLES {
        let y = DVector::from_fn(layout.len_y(), |i, _| y0.as_vector()[i] + rng.random_range(-0.5..=0.5));
        let lambda = DVector::from_fn(layout.len_lambda(), |_, _| rng.random_range(-1.0..=1.0));
        let y = DecisionVector::new(layout, y).map_err(CliError::numerical)?;
        points.push(KktPoint::new(y, lambda).map_err(CliError::numerical)?);
    }
    let mut sqp_max = 0.0_f64;
    for z in &points {
        sqp_max = sqp_max.max(sqp_equivalence_deviation(&prob, z, &x0).map_err(CliError::numerical)?);
    }

    let report = Report {
        scenario: scn.name.clone(),
        model: scn.model.clone(),
        seed: cfg.seed,
        e_norm: nlp.e_norm_inf,
        identity_error_inf: nlp.identity_error_inf,
        feasibility_residual_inf: nlp.feasibility_residual_inf,
        standard_iterations: standard.iterations,
        contraction_variant: opts.variant.as_str(),
        kappa_hat: est.kappa_hat,
        omega_hat: est.omega_hat,
        radius_bound: est.radius_bound,
        fit_residual: est.fit_residual,
        max_bound_violation: est.max_bound_violation(),
        contraction_errors: est.errors.clone(),
        sqp_samples: points.len(),
        sqp_equivalence_max_deviation: sqp_max,
        parameter_note: (scn.model == "adip").then_some(Adip::PARAMETER_NOTE),
    };
    create_dir(&cfg.out).map_err(CliError::Config)?;
    let path = path_in(&cfg.out, &file_stem(&scn.name, "diagnostics"), "json");
    write_json(&path, &report).map_err(CliError::Config)?;
    Ok(path)
}
