//! Receding-horizon simulation and closed-loop cost accounting.
//!
//! At every sampling instant the OCP is solved from the current plant
//! state, the first input is applied, and the plant (the same discrete-time
//! model the controller uses) is advanced one step. The previous solution,
//! shifted by one stage, warm-starts the next solve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{builtin, LpvModel};
use crate::solver::{initial_guess, solve_ocp, warm_shift, IterateTrace, Mode, SolverOptions, Variant};
use crate::stacked::{DecisionVector, Horizon, StackedProblem, Weights};

/// A weight matrix given either by its diagonal or in full (row-major rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Diagonal(d) => Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d))),
            MatrixSpec::Full(rows) => {
                let n = rows.len();
                for row in rows {
                    check_len("weight matrix row", n, row.len())?;
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }
}

/// A closed-loop benchmark configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Builtin model identifier.
    pub model: String,
    pub x0: Vec<f64>,
    pub steps: usize,
    pub horizon: usize,
    pub q: MatrixSpec,
    pub r: MatrixSpec,
    pub p: MatrixSpec,
    #[serde(default)]
    pub controller: SolverOptions,
    #[serde(default = "SolverOptions::reference")]
    pub reference_controller: SolverOptions,
}

impl Scenario {
    /// Dynamic unicycle: 10 s at T = 0.1 s, one iteration per step.
    pub fn unicycle() -> Self {
        let w = vec![1.0, 1.0, 0.1, 1.0, 0.1];
        Self {
            name: "unicycle".into(),
            model: "unicycle".into(),
            x0: vec![1.0, 2.0, 0.0, std::f64::consts::PI, 0.0],
            steps: 100,
            horizon: 20,
            q: MatrixSpec::Diagonal(w.clone()),
            r: MatrixSpec::Diagonal(vec![1.0, 1.0]),
            p: MatrixSpec::Diagonal(w),
            controller: SolverOptions::new(Variant::Standard, Mode::RealTimeIteration),
            reference_controller: SolverOptions::reference(),
        }
    }

    /// Arm-driven inverted pendulum: 2 s at T = 0.01 s, iterated to convergence.
    pub fn adip() -> Self {
        let w = vec![200.0, 1000.0, 0.1, 10.0];
        Self {
            name: "adip".into(),
            model: "adip".into(),
            x0: vec![std::f64::consts::FRAC_PI_3, 0.0, 0.0, 0.0],
            steps: 200,
            horizon: 40,
            q: MatrixSpec::Diagonal(w.clone()),
            r: MatrixSpec::Diagonal(vec![2000.0]),
            p: MatrixSpec::Diagonal(w),
            controller: SolverOptions::new(Variant::Standard, Mode::Converge),
            reference_controller: SolverOptions::reference(),
        }
    }

    pub fn tiny_lti() -> Self {
        Self {
            name: "tiny-lti".into(),
            model: "tiny-lti".into(),
            x0: vec![1.0],
            steps: 10,
            horizon: 5,
            q: MatrixSpec::Diagonal(vec![1.0]),
            r: MatrixSpec::Diagonal(vec![1.0]),
            p: MatrixSpec::Diagonal(vec![1.0]),
            controller: SolverOptions::default(),
            reference_controller: SolverOptions::reference(),
        }
    }

    pub fn tiny_qlpv() -> Self {
        Self {
            name: "tiny-qlpv".into(),
            model: "tiny-qlpv".into(),
            x0: vec![0.5],
            ..Self::tiny_lti()
        }
    }

    /// Builtin scenarios by name: `unicycle`, `adip`, `tiny-lti`, `tiny-qlpv`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "unicycle" => Ok(Self::unicycle()),
            "adip" => Ok(Self::adip()),
            "tiny-lti" => Ok(Self::tiny_lti()),
            "tiny-qlpv" => Ok(Self::tiny_qlpv()),
            other => Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        self.controller.validate()?;
        self.reference_controller.validate()?;
        let prob = self.problem()?;
        check_len("initial state", prob.layout().n_x, self.x0.len())
    }

    pub fn model(&self) -> Result<std::sync::Arc<dyn LpvModel>> {
        builtin(&self.model)
    }

    pub fn weights(&self) -> Result<Weights> {
        Weights::new(self.q.to_matrix()?, self.r.to_matrix()?, self.p.to_matrix()?)
    }

    pub fn problem(&self) -> Result<StackedProblem> {
        StackedProblem::new(self.model()?, Horizon::new(self.horizon)?, self.weights()?)
    }

    pub fn x0_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }
}

/// Receding-horizon controller that carries its warm start between calls.
#[derive(Debug)]
pub struct MpcController {
    prob: StackedProblem,
    opts: SolverOptions,
    warm: Option<DecisionVector>,
}

impl MpcController {
    pub fn new(prob: StackedProblem, opts: SolverOptions) -> Result<Self> {
        opts.validate()?;
        Ok(Self {
            prob,
            opts,
            warm: None,
        })
    }

    pub fn problem(&self) -> &StackedProblem {
        &self.prob
    }

    /// Solves the OCP from `x` and returns the first input with the trace.
    pub fn step(&mut self, x: &DVector<f64>) -> Result<(DVector<f64>, IterateTrace)> {
        let y_init = match &self.warm {
            Some(prev) => warm_shift(self.prob.model().as_ref(), prev, x)?,
            None => initial_guess(&self.prob, x)?,
        };
        let trace = solve_ocp(&self.prob, x, &y_init, &self.opts)?;
        let solution = trace.solution().y.clone();
        let u0 = solution.input(0).into_owned();
        self.warm = Some(solution);
        Ok((u0, trace))
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub iterations: usize,
    pub converged: bool,
    /// Seconds for the whole solve call.
    pub solve_time: f64,
    /// Seconds spent building and condensing QPs.
    pub prep_time: f64,
    /// Seconds spent in the factorization, expansion and multiplier recovery.
    pub qp_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub step: usize,
    pub message: String,
}

/// Closed-loop trajectory of one controller.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `steps + 1` states (fewer after a failure).
    pub states: Vec<DVector<f64>>,
    /// `steps` inputs (fewer after a failure).
    pub inputs: Vec<DVector<f64>>,
    /// Cumulative distance to reference `DR_k`, one entry per applied input.
    pub dr: Vec<f64>,
    pub per_step: Vec<StepStats>,
    pub failure: Option<Failure>,
}

/// Outcome of [`simulate`]: the configured controller, the optimal reference
/// and the relative cumulative suboptimality between them.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub controller: Trajectory,
    pub reference: Trajectory,
    /// `RCSO_k`; `None` where the reference cost is zero or missing.
    pub rcso: Vec<Option<f64>>,
}

impl ScenarioResult {
    pub fn final_rcso(&self) -> Option<f64> {
        self.rcso.last().copied().flatten()
    }

    pub fn failed(&self) -> bool {
        self.controller.failure.is_some() || self.reference.failure.is_some()
    }
}

/// Runs one controller in closed loop. A solver failure truncates the
/// trajectory and records the failing step instead of returning an error.
pub fn run_closed_loop(scn: &Scenario, opts: &SolverOptions) -> Result<Trajectory> {
    scn.validate()?;
    opts.validate()?;
    let prob = scn.problem()?;
    let model = prob.model().clone();
    let weights = prob.weights().clone();
    let mut controller = MpcController::new(prob, *opts)?;

    let mut x = scn.x0_vector();
    let mut states = vec![x.clone()];
    let mut inputs = Vec::with_capacity(scn.steps);
    let mut per_step = Vec::with_capacity(scn.steps);
    let mut failure = None;
    for k in 0..scn.steps {
        match controller.step(&x) {
            Ok((u0, trace)) => {
                per_step.push(StepStats {
                    iterations: trace.iterations,
                    converged: trace.converged,
                    solve_time: trace.solve_time(),
                    prep_time: trace.prep_time(),
                    qp_time: trace.qp_time(),
                });
                x = model.dynamics(&x, &u0);
                inputs.push(u0);
                states.push(x.clone());
                if x.iter().any(|v| !v.is_finite()) {
                    failure = Some(Failure {
                        step: k,
                        message: "plant state became non-finite".into(),
                    });
                    break;
                }
            }
            Err(e) => {
                failure = Some(Failure {
                    step: k,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    let dr = dr_series(&states, &inputs, &weights.q, &weights.r);
    Ok(Trajectory {
        states,
        inputs,
        dr,
        per_step,
        failure,
    })
}

/// Runs the configured controller and the reference controller from the
/// same initial state and compares their cumulative costs.
pub fn simulate(scn: &Scenario) -> Result<ScenarioResult> {
    let controller = run_closed_loop(scn, &scn.controller)?;
    let reference = if scn.reference_controller == scn.controller {
        controller.clone()
    } else {
        run_closed_loop(scn, &scn.reference_controller)?
    };
    let len = controller.dr.len().min(reference.dr.len());
    let rcso = (0..len)
        .map(|k| rcso(&controller.dr, &reference.dr, k))
        .collect();
    Ok(ScenarioResult {
        controller,
        reference,
        rcso,
    })
}

fn stage_cost(x: &DVector<f64>, u: &DVector<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    x.dot(&(q * x)) + u.dot(&(r * u))
}

/// `DR_k = Σ_{i=0}^{k} (x_iᵀQx_i + u_iᵀRu_i)`.
pub fn distance_to_reference(
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: usize,
) -> Result<f64> {
    if k >= inputs.len() || k >= states.len() {
        return Err(Error::InvalidArgument(format!(
            "step {k} outside trajectory of {} inputs",
            inputs.len()
        )));
    }
    Ok((0..=k).map(|i| stage_cost(&states[i], &inputs[i], q, r)).sum())
}

/// The whole `DR` series, one entry per input.
pub fn dr_series(states: &[DVector<f64>], inputs: &[DVector<f64>], q: &DMatrix<f64>, r: &DMatrix<f64>) -> Vec<f64> {
    let mut acc = 0.0;
    inputs
        .iter()
        .zip(states)
        .map(|(u, x)| {
            acc += stage_cost(x, u, q, r);
            acc
        })
        .collect()
}

/// `RCSO_k = (DR_k − DR_ref,k) / DR_ref,k`; `None` if the reference cost is
/// zero or `k` is out of range.
pub fn rcso(dr_controller: &[f64], dr_reference: &[f64], k: usize) -> Option<f64> {
    let (dr, dr_ref) = (*dr_controller.get(k)?, *dr_reference.get(k)?);
    (dr_ref > 0.0).then(|| (dr - dr_ref) / dr_ref)
}
