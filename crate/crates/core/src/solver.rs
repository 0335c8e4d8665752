//! The qLMPC iteration engine.
//!
//! Each iteration freezes information taken from the previous primal
//! iterate `y[l]`, solves the resulting equality-constrained QP in condensed
//! form and recovers the multipliers:
//!
//! * standard variant: the parameter trajectory `ρ[l] = ρ(y[l])` is frozen
//!   and the constraint is `G(ρ[l]) y + Cx̂₀ = 0`;
//! * exact variant: the constraint is `G̃(y[l]) y + G̃_d(y[l]) y[l] + Cx̂₀ = 0`,
//!   which makes each iterate a Gauss-Newton SQP step.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::condensed::{adjoint_multipliers, condense, expand, recover_multipliers, solve_condensed, StageDynamics};
use crate::error::{check_len, Error, Result};
use crate::model::LpvModel;
use crate::stacked::{solve_kkt_dense, DecisionVector, KktPoint, StackedProblem};

/// Consecutive iterations without a new smallest residual after which a
/// converge-mode run may be declared stalled.
pub const STALL_WINDOW: usize = 5;

/// Relative step `‖z[l+1] − z[l]‖_∞ / (1 + ‖z[l+1]‖_∞)` that must also be
/// reached for a stall: large non-improving steps are transients, not a floor.
pub const STALL_STEP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Frozen parameter trajectory; converges to a feasible but suboptimal point.
    Standard,
    /// Fictitious disturbance system; equivalent to Gauss-Newton SQP.
    Exact,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Iterate until the stopping residual drops below `stop_tol`.
    #[serde(rename = "converge")]
    Converge,
    /// Exactly one iteration per call.
    #[serde(rename = "rti")]
    RealTimeIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub variant: Variant,
    pub max_iter: usize,
    pub stop_tol: f64,
    pub mode: Mode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Standard,
            max_iter: 30,
            stop_tol: 1e-6,
            mode: Mode::Converge,
        }
    }
}

impl SolverOptions {
    pub fn new(variant: Variant, mode: Mode) -> Self {
        Self {
            variant,
            mode,
            ..Self::default()
        }
    }

    /// Exact variant run to tight convergence; the closed-loop optimal reference.
    pub fn reference() -> Self {
        Self {
            variant: Variant::Exact,
            max_iter: 100,
            stop_tol: 1e-10,
            mode: Mode::Converge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stop_tol must be positive, got {}",
                self.stop_tol
            )));
        }
        Ok(())
    }
}

/// One entry of an [`IterateTrace`].
#[derive(Debug, Clone)]
pub struct IterateRecord {
    pub z: KktPoint,
    /// ∞-norm of the variant's stopping residual at `z`.
    pub fonc_inf: f64,
    /// Wall-clock seconds spent producing this iterate (zero for the initial point).
    pub step_time: f64,
    /// Part of `step_time` spent building and condensing the QP.
    pub prep_time: f64,
    /// Part of `step_time` spent in the factorization, expansion and multiplier recovery.
    pub qp_time: f64,
}

/// Iterates `z[0], z[1], …` of one OCP solve.
#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub iterates: Vec<IterateRecord>,
    pub converged: bool,
    /// The residual stopped improving above `stop_tol` (round-off floor).
    pub stalled: bool,
    pub iterations: usize,
}

impl IterateTrace {
    pub fn last(&self) -> &IterateRecord {
        self.iterates.last().expect("a trace holds at least the initial point")
    }

    pub fn solution(&self) -> &KktPoint {
        &self.last().z
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.iterates.iter().map(|r| r.fonc_inf).collect()
    }

    pub fn solve_time(&self) -> f64 {
        self.iterates.iter().map(|r| r.step_time).sum()
    }

    pub fn prep_time(&self) -> f64 {
        self.iterates.iter().map(|r| r.prep_time).sum()
    }

    pub fn qp_time(&self) -> f64 {
        self.iterates.iter().map(|r| r.qp_time).sum()
    }
}

/// Zero-input rollout from `x̂₀`; feasible for the NLP.
pub fn initial_guess(prob: &StackedProblem, x0hat: &DVector<f64>) -> Result<DecisionVector> {
    let layout = prob.layout();
    check_len("initial state", layout.n_x, x0hat.len())?;
    let model = prob.model();
    let zero_u = DVector::zeros(layout.n_u);
    let mut y = DecisionVector::zeros(layout);
    let mut x = x0hat.clone();
    y.set_state(0, &x);
    for k in 0..layout.horizon {
        x = model.dynamics(&x, &zero_u);
        y.set_state(k + 1, &x);
    }
    Ok(y)
}

fn stages_for(prob: &StackedProblem, y: &DecisionVector, variant: Variant) -> Result<StageDynamics> {
    match variant {
        Variant::Standard => StageDynamics::frozen(prob, &prob.rho_trajectory(y)),
        Variant::Exact => StageDynamics::extended(prob, y),
    }
}

struct TimedIterate {
    z: KktPoint,
    prep_time: f64,
    qp_time: f64,
}

fn iterate_timed(
    prob: &StackedProblem,
    y_l: &DecisionVector,
    x0hat: &DVector<f64>,
    variant: Variant,
) -> Result<TimedIterate> {
    let start = Instant::now();
    let stages = stages_for(prob, y_l, variant)?;
    let qp = condense(prob, &stages, x0hat)?;
    let g_used = stages.constraint_matrix(prob);
    let prep_time = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let u = solve_condensed(&qp)?;
    let y = expand(&qp, &u)?;
    let lambda = adjoint_multipliers(prob, &g_used, &y)?;
    let qp_time = start.elapsed().as_secs_f64();

    Ok(TimedIterate {
        z: KktPoint { y, lambda },
        prep_time,
        qp_time,
    })
}

fn check_point(prob: &StackedProblem, z: &KktPoint, x0hat: &DVector<f64>) -> Result<()> {
    let layout = prob.layout();
    if z.layout() != layout {
        return Err(Error::DimensionMismatch {
            what: "decision vector",
            expected: layout.len_y(),
            found: z.y.as_vector().len(),
        });
    }
    check_len("multiplier vector", layout.len_lambda(), z.lambda.len())?;
    check_len("initial state", layout.n_x, x0hat.len())
}

/// One qLMPC iteration `z[l] ↦ z[l+1]`. Only the primal part of `z_l` is used.
pub fn qlmpc_iterate(
    prob: &StackedProblem,
    z_l: &KktPoint,
    x0hat: &DVector<f64>,
    variant: Variant,
) -> Result<KktPoint> {
    check_point(prob, z_l, x0hat)?;
    Ok(iterate_timed(prob, &z_l.y, x0hat, variant)?.z)
}

/// Gauss-Newton SQP step in the increment `p`, solved through the dense KKT system:
///
/// ```text
/// min_p 2y[l]ᵀ𝓠p + pᵀ𝓠p   s.t.  G(ρ(y[l]))y[l] + G̃(y[l]) p + Cx̂₀ = 0
/// ```
///
/// Returns `(y[l] + p, λ)`.
pub fn sqp_step(prob: &StackedProblem, z_l: &KktPoint, x0hat: &DVector<f64>) -> Result<KktPoint> {
    check_point(prob, z_l, x0hat)?;
    let y_l = &z_l.y;
    let (g_tilde, _) = prob.g_tilde(y_l)?;
    let residual = prob.constraint_residual(y_l, x0hat)?;
    let hess = prob.qcal() * 2.0;
    let grad = prob.cost_gradient(y_l);
    let (p, lambda) = solve_kkt_dense(&hess, &grad, &g_tilde, &residual)?;
    let y = DecisionVector::new(prob.layout(), y_l.as_vector() + p)?;
    KktPoint::new(y, lambda)
}

/// Stopping residual of a variant.
///
/// The standard variant monitors the fixed-parameter conditions with the
/// parameter refreshed from `y` (the root function `F`); the exact variant
/// monitors the optimality conditions of the true NLP.
pub fn stopping_residual(
    prob: &StackedProblem,
    z: &KktPoint,
    x0hat: &DVector<f64>,
    variant: Variant,
) -> Result<DVector<f64>> {
    match variant {
        Variant::Standard => prob.fonc_residual(z, x0hat),
        Variant::Exact => prob.true_fonc_residual(z, x0hat),
    }
}

/// Least-squares multipliers for a primal point, using the constraint
/// matrix the variant would linearize at `y`.
pub fn initial_multipliers(prob: &StackedProblem, y: &DecisionVector, variant: Variant) -> Result<DVector<f64>> {
    let g = match variant {
        Variant::Standard => prob.g_at(y),
        Variant::Exact => prob.g_tilde(y)?.0,
    };
    recover_multipliers(prob, &g, y)
}

/// Runs the iteration from `y_init` until the stopping residual satisfies
/// `stop_tol`, `max_iter` iterations have been spent, or (real-time mode)
/// a single iteration has been performed. At least one iteration is always
/// performed.
///
/// In converge mode the run also ends, with `stalled` set, when the residual
/// has not reached a new minimum for [`STALL_WINDOW`] iterations while the
/// relative step is at most [`STALL_STEP`]: the iterate sits on the
/// floating-point floor of a tolerance that is too tight for the problem's
/// scaling, and further iterations only reshuffle round-off.
pub fn solve_ocp(
    prob: &StackedProblem,
    x0hat: &DVector<f64>,
    y_init: &DecisionVector,
    opts: &SolverOptions,
) -> Result<IterateTrace> {
    opts.validate()?;
    let lambda0 = initial_multipliers(prob, y_init, opts.variant)?;
    let z0 = KktPoint::new(y_init.clone(), lambda0)?;
    check_point(prob, &z0, x0hat)?;
    let r0 = stopping_residual(prob, &z0, x0hat, opts.variant)?.amax();

    let mut iterates = vec![IterateRecord {
        z: z0,
        fonc_inf: r0,
        step_time: 0.0,
        prep_time: 0.0,
        qp_time: 0.0,
    }];
    let budget = match opts.mode {
        Mode::Converge => opts.max_iter,
        Mode::RealTimeIteration => 1,
    };

    let mut converged = false;
    let mut stalled = false;
    let mut best = r0;
    let mut since_best = 0;
    for l in 0..budget {
        let y_l = &iterates.last().expect("non-empty").z.y;
        let next = iterate_timed(prob, y_l, x0hat, opts.variant)?;
        let r = stopping_residual(prob, &next.z, x0hat, opts.variant)?.amax();
        if !r.is_finite() {
            return Err(Error::Diverged { iteration: l + 1 });
        }
        iterates.push(IterateRecord {
            z: next.z,
            fonc_inf: r,
            step_time: next.prep_time + next.qp_time,
            prep_time: next.prep_time,
            qp_time: next.qp_time,
        });
        if r <= opts.stop_tol {
            converged = true;
            if opts.mode == Mode::Converge {
                break;
            }
        }
        if r < best {
            best = r;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if opts.mode == Mode::Converge && since_best >= STALL_WINDOW {
            let prev = iterates[iterates.len() - 2].z.to_vector();
            let curr = iterates[iterates.len() - 1].z.to_vector();
            if (&curr - &prev).amax() <= STALL_STEP * (1.0 + curr.amax()) {
                stalled = true;
                break;
            }
        }
    }

    let iterations = iterates.len() - 1;
    Ok(IterateTrace {
        iterates,
        converged,
        stalled,
        iterations,
    })
}

/// Shifts a previous solution one stage forward for warm starting.
///
/// States and inputs move up one stage, the last input is repeated, the
/// terminal state is propagated with it, and `x₀` is set to `x̂₀_new`.
pub fn warm_shift(
    model: &dyn LpvModel,
    y_prev: &DecisionVector,
    x0hat_new: &DVector<f64>,
) -> Result<DecisionVector> {
    let layout = y_prev.layout();
    check_len("initial state", layout.n_x, x0hat_new.len())?;
    let n = layout.horizon;
    let mut y = y_prev.clone();
    for k in 0..n {
        y.set_state(k, &y_prev.state(k + 1).into_owned());
    }
    for k in 0..n - 1 {
        y.set_input(k, &y_prev.input(k + 1).into_owned());
    }
    let u_last = y_prev.input(n - 1).into_owned();
    let x_term = model.dynamics(&y_prev.state(n).into_owned(), &u_last);
    y.set_state(n, &x_term);
    y.set_state(0, x0hat_new);
    Ok(y)
}
