//! Numerical checks of the convergence and suboptimality properties of the
//! qLMPC iterations.
//!
//! * [`fd_jacobian`] is an independent finite-difference oracle for the
//!   Jacobians assembled in [`crate::stacked`].
//! * [`verify_perturbed_nlp`] checks that a converged standard-variant fixpoint
//!   satisfies the optimality conditions of the NLP perturbed by the linear
//!   term `eᵀy`, `e = −ΔGᵀ(ȳ)λ̄`.
//! * [`contraction_fit`] estimates the linear and quadratic contraction
//!   coefficients `(κ, ω)` of `ε_{l+1} ≤ κε_l + ω/2·ε_l²` from a trace.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::{qlmpc_iterate, sqp_step, IterateTrace, Variant};
use crate::stacked::{KktPoint, StackedProblem};

/// Central-difference Jacobian with a fixed step.
pub fn fd_jacobian<F>(f: F, z: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let m = f(z).len();
    let mut jac = DMatrix::zeros(m, z.len());
    for j in 0..z.len() {
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[j] += step;
        minus[j] -= step;
        jac.set_column(j, &((f(&plus) - f(&minus)) / (2.0 * step)));
    }
    Ok(jac)
}

/// Relative deviation `max|J_exact − J_fd| / max(1, max|J_fd|)` between the
/// assembled exact Jacobian and finite differences of the root function.
pub fn jacobian_oracle_error(prob: &StackedProblem, z: &KktPoint, x0hat: &DVector<f64>) -> Result<f64> {
    let layout = prob.layout();
    let exact = prob.exact_jacobian(z)?;
    let fd = fd_jacobian(
        |v| {
            let p = KktPoint::from_vector(layout, v).expect("same layout");
            prob.fonc_residual(&p, x0hat).expect("valid point")
        },
        &z.to_vector(),
        1e-6,
    )?;
    Ok((exact - &fd).amax() / fd.amax().max(1.0))
}

/// Scaled deviation `‖sqp_step − qlmpc_iterate(exact)‖_∞ / (1 + ‖z‖_∞)`.
pub fn sqp_equivalence_deviation(prob: &StackedProblem, z: &KktPoint, x0hat: &DVector<f64>) -> Result<f64> {
    let sqp = sqp_step(prob, z, x0hat)?.to_vector();
    let qlmpc = qlmpc_iterate(prob, z, x0hat, Variant::Exact)?.to_vector();
    Ok((sqp - qlmpc).amax() / (1.0 + z.to_vector().amax()))
}

/// Perturbed-NLP identity at a standard-variant fixpoint.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbedNlpReport {
    /// Linear perturbation `e = −ΔGᵀ(ȳ)λ̄`.
    pub e: Vec<f64>,
    pub e_norm_inf: f64,
    /// `2𝓠ȳ + [∂(G(ρ(y))y)/∂y(ȳ)]ᵀλ̄`.
    pub true_stationarity_residual: Vec<f64>,
    pub feasibility_residual_inf: f64,
    /// `‖true_stationarity_residual + e‖_∞`.
    pub identity_error_inf: f64,
}

pub fn verify_perturbed_nlp(
    prob: &StackedProblem,
    trace: &IterateTrace,
    x0hat: &DVector<f64>,
) -> Result<PerturbedNlpReport> {
    if !trace.converged {
        return Err(Error::NotConverged);
    }
    let z = trace.solution();
    let e = prob.perturbation(&z.y, &z.lambda)?;
    let true_fonc = prob.true_fonc_residual(z, x0hat)?;
    let ny = prob.layout().len_y();
    let stationarity = true_fonc.rows(0, ny).into_owned();
    let feasibility = true_fonc.rows(ny, true_fonc.len() - ny).amax();
    let identity_error_inf = (&stationarity + &e).amax();
    Ok(PerturbedNlpReport {
        e_norm_inf: e.amax(),
        e: e.iter().copied().collect(),
        true_stationarity_residual: stationarity.iter().copied().collect(),
        feasibility_residual_inf: feasibility,
        identity_error_inf,
    })
}

/// Slack allowed when checking `ε_{l+1} ≤ κε_l + ω/2·ε_l²`.
pub const BOUND_SLACK: f64 = 1e-10;

/// Fitted contraction coefficients of an iterate sequence.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionEstimate {
    pub kappa_hat: f64,
    pub omega_hat: f64,
    /// `ε_l = ‖z[l] − z̄‖₂`.
    pub errors: Vec<f64>,
    /// `2(1 − κ̂)/ω̂`; `None` when `ω̂ = 0` (unbounded).
    pub radius_bound: Option<f64>,
    /// `max_l |κ̂ε_l + ω̂/2·ε_l² − ε_{l+1}|`.
    pub fit_residual: f64,
}

impl ContractionEstimate {
    pub fn predicted(&self, eps: f64) -> f64 {
        self.kappa_hat * eps + 0.5 * self.omega_hat * eps * eps
    }

    /// Largest `ε_{l+1} − (κ̂ε_l + ω̂/2·ε_l²)` over consecutive pairs.
    pub fn max_bound_violation(&self) -> f64 {
        self.errors
            .windows(2)
            .map(|w| w[1] - self.predicted(w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Fits `(κ̂, ω̂)` to the errors of `trace` relative to the fixpoint `z_bar`.
pub fn contraction_fit(trace: &IterateTrace, z_bar: &KktPoint) -> Result<ContractionEstimate> {
    let zb = z_bar.to_vector();
    let errors = trace
        .iterates
        .iter()
        .map(|r| {
            let z = r.z.to_vector();
            if z.len() != zb.len() {
                return Err(Error::DimensionMismatch {
                    what: "reference point",
                    expected: z.len(),
                    found: zb.len(),
                });
            }
            Ok((z - &zb).norm())
        })
        .collect::<Result<Vec<_>>>()?;
    fit_errors(errors)
}

/// Least-squares fit of `ε_{l+1} ≈ κε_l + ω/2·ε_l²` over all consecutive
/// pairs, subject to `κ, ω ≥ 0` and to the fitted curve bounding every pair
/// from above (up to half of [`BOUND_SLACK`]).
///
/// The problem is a convex QP in two unknowns; its minimizer lies on the
/// affine set of some subset of active constraints, so all such candidates
/// are enumerated and the best feasible one is kept.
pub fn fit_errors(errors: Vec<f64>) -> Result<ContractionEstimate> {
    if errors.len() < 2 {
        return Err(Error::InvalidArgument(
            "contraction fit needs at least two iterates".into(),
        ));
    }
    if errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::InvalidArgument("errors must be finite and nonnegative".into()));
    }
    // unknowns p = (κ, ω/2); regressors c_l = (ε_l, ε_l²); targets b_l = ε_{l+1}
    let pairs: Vec<(Vector2<f64>, f64)> = errors
        .windows(2)
        .map(|w| (Vector2::new(w[0], w[0] * w[0]), w[1]))
        .collect();
    let objective = |p: &Vector2<f64>| -> f64 {
        pairs.iter().map(|(c, b)| (c.dot(p) - b).powi(2)).sum()
    };

    // constraints n·p ≥ β
    let mut cons: Vec<(Vector2<f64>, f64)> = vec![
        (Vector2::new(1.0, 0.0), 0.0),
        (Vector2::new(0.0, 1.0), 0.0),
    ];
    for (c, b) in &pairs {
        if c.norm() > 0.0 {
            cons.push((*c, b - 0.5 * BOUND_SLACK));
        }
    }
    let feasible = |p: &Vector2<f64>| -> bool {
        cons.iter()
            .all(|(n, beta)| n.dot(p) >= beta - 1e-12 * (beta.abs() + n.norm() * p.norm()))
    };

    let mut candidates: Vec<Vector2<f64>> = Vec::new();
    // unconstrained least squares
    let normal: Matrix2<f64> = pairs.iter().map(|(c, _)| c * c.transpose()).sum();
    let rhs: Vector2<f64> = pairs.iter().map(|(c, b)| c * *b).sum();
    if let Some(p) = normal.try_inverse().map(|inv| inv * rhs) {
        candidates.push(p);
    }
    // one active constraint: minimize along its line
    for (n, beta) in &cons {
        let nn = n.norm_squared();
        let p0 = n * (beta / nn);
        let d = Vector2::new(-n[1], n[0]);
        let (num, den) = pairs.iter().fold((0.0, 0.0), |(num, den), (c, b)| {
            let cd = c.dot(&d);
            (num + (c.dot(&p0) - b) * cd, den + cd * cd)
        });
        let t = if den > 0.0 { -num / den } else { 0.0 };
        candidates.push(p0 + d * t);
    }
    // two active constraints: vertices
    for i in 0..cons.len() {
        for j in i + 1..cons.len() {
            let (n1, b1) = cons[i];
            let (n2, b2) = cons[j];
            let m = Matrix2::new(n1[0], n1[1], n2[0], n2[1]);
            if let Some(inv) = m.try_inverse() {
                let p = inv * Vector2::new(b1, b2);
                if p.iter().all(|v| v.is_finite()) {
                    candidates.push(p);
                }
            }
        }
    }

    let best = candidates
        .into_iter()
        .filter(|p| p.iter().all(|v| v.is_finite()) && feasible(p))
        .map(|p| (objective(&p), p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
        .ok_or_else(|| Error::InvalidArgument("no feasible contraction fit".into()))?;

    let kappa_hat = best[0].max(0.0);
    let omega_hat = (2.0 * best[1]).max(0.0);
    let fit_residual = pairs
        .iter()
        .map(|(c, b)| (c[0] * kappa_hat + c[1] * 0.5 * omega_hat - b).abs())
        .fold(0.0, f64::max);
    let radius_bound = (omega_hat > 0.0).then(|| 2.0 * (1.0 - kappa_hat) / omega_hat);
    Ok(ContractionEstimate {
        kappa_hat,
        omega_hat,
        errors,
        radius_bound,
        fit_residual,
    })
}

/// Ratios `ε_{l+1}/ε_l` over consecutive nonzero errors.
pub fn error_ratios(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect()
}
