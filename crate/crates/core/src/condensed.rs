//! Condensed solution of the equality-constrained QPs solved by each
//! iteration.
//!
//! The constraint of every QP is a linear time-varying recursion
//! `x_{k+1} = A_k x_k + B_k u_k + c_k` with `x₀ = x̂₀`. Eliminating the
//! states gives `x = Φx̂₀ + Γu + Ψ`, and the QP becomes the unconstrained
//! quadratic `½uᵀHu + gᵀu` with `H = 2(ΓᵀQ_xΓ + R̄)` and `g = 2ΓᵀQ_x(Φx̂₀ + Ψ)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::stacked::{DecisionVector, Layout, StackedProblem};

/// Per-stage affine dynamics `x_{k+1} = A_k x_k + B_k u_k + c_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDynamics {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DVector<f64>>,
}

impl StageDynamics {
    /// Standard variant: `A(ρ_k)`, `B(ρ_k)` with a frozen parameter trajectory, `c_k = 0`.
    pub fn frozen(prob: &StackedProblem, rho_traj: &[DVector<f64>]) -> Result<Self> {
        let model = prob.model();
        let n = prob.horizon().len();
        check_len("parameter trajectory", n, rho_traj.len())?;
        let n_rho = model.dims().n_rho;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for rho in rho_traj {
            check_len("parameter", n_rho, rho.len())?;
            a.push(model.a_of_rho(rho));
            b.push(model.b_of_rho(rho));
        }
        Ok(Self {
            a,
            b,
            c: vec![DVector::zeros(model.dims().n_x); n],
        })
    }

    /// Exact variant: the fictitious disturbance system linearized at `y_prev`.
    ///
    /// `A_k, B_k` are the stage Jacobian blocks (the stage blocks of `G̃`)
    /// and `c_k = f(x_k, u_k) − J_k·(x_k, u_k)` is row `k+1` of `−G̃_d y_prev`.
    pub fn extended(prob: &StackedProblem, y_prev: &DecisionVector) -> Result<Self> {
        if y_prev.layout() != prob.layout() {
            return Err(Error::DimensionMismatch {
                what: "decision vector",
                expected: prob.layout().len_y(),
                found: y_prev.as_vector().len(),
            });
        }
        let model = prob.model();
        let nx = prob.layout().n_x;
        let n = prob.horizon().len();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for k in 0..n {
            let x = y_prev.state(k).into_owned();
            let u = y_prev.input(k).into_owned();
            let jac = model.stage_jacobian(&x, &u);
            let ja = jac.columns(0, nx).into_owned();
            let jb = jac.columns(nx, jac.ncols() - nx).into_owned();
            c.push(model.dynamics(&x, &u) - &ja * &x - &jb * &u);
            a.push(ja);
            b.push(jb);
        }
        Ok(Self { a, b, c })
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    /// The stacked constraint matrix these stages represent.
    pub fn constraint_matrix(&self, prob: &StackedProblem) -> DMatrix<f64> {
        prob.assemble(self.a.iter().zip(self.b.iter()))
    }

    /// Stacked offset `o` such that the constraint reads `G y + o + Cx̂₀ = 0`.
    pub fn offset(&self) -> DVector<f64> {
        let nx = self.a.first().map_or(0, |a| a.nrows());
        let mut o = DVector::zeros((self.horizon() + 1) * nx);
        for (k, ck) in self.c.iter().enumerate() {
            o.rows_mut((k + 1) * nx, nx).copy_from(&(-ck));
        }
        o
    }
}

/// Unconstrained quadratic in the stacked inputs.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    layout: Layout,
    x0hat: DVector<f64>,
    /// Free response to `x̂₀`, shape `(N+1)n_x × n_x`.
    pub phi: DMatrix<f64>,
    /// Forced response to the inputs, shape `(N+1)n_x × N·n_u`.
    pub gamma: DMatrix<f64>,
    /// Response to the affine terms `c_k`.
    pub psi: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub grad: DVector<f64>,
}

impl CondensedQp {
    pub fn layout(&self) -> Layout {
        self.layout
    }
}

/// Eliminates the states of the QP `min ‖y‖²_𝓠` subject to the given stage dynamics.
pub fn condense(
    prob: &StackedProblem,
    stages: &StageDynamics,
    x0hat: &DVector<f64>,
) -> Result<CondensedQp> {
    let layout = prob.layout();
    let (nx, nu, n) = (layout.n_x, layout.n_u, layout.horizon);
    check_len("stage dynamics", n, stages.horizon())?;
    check_len("initial state", nx, x0hat.len())?;
    let nu_all = n * nu;

    let mut phi = DMatrix::zeros((n + 1) * nx, nx);
    let mut gamma = DMatrix::zeros((n + 1) * nx, nu_all);
    let mut psi = DVector::zeros((n + 1) * nx);
    phi.view_mut((0, 0), (nx, nx))
        .copy_from(&DMatrix::identity(nx, nx));

    for k in 0..n {
        let (a, b, c) = (&stages.a[k], &stages.b[k], &stages.c[k]);
        check_len("stage matrix A", nx, a.nrows())?;
        check_len("stage matrix B", nu, b.ncols())?;
        let (cur, next) = (k * nx, (k + 1) * nx);

        let phi_next = a * phi.rows(cur, nx);
        phi.rows_mut(next, nx).copy_from(&phi_next);

        let psi_next = a * psi.rows(cur, nx) + c;
        psi.rows_mut(next, nx).copy_from(&psi_next);

        if k > 0 {
            let g_next = a * gamma.view((cur, 0), (nx, k * nu));
            gamma.view_mut((next, 0), (nx, k * nu)).copy_from(&g_next);
        }
        gamma.view_mut((next, k * nu), (nx, nu)).copy_from(b);
    }

    let weights = prob.weights();
    let free = &phi * x0hat + &psi;
    let mut hess = DMatrix::zeros(nu_all, nu_all);
    let mut grad = DVector::zeros(nu_all);
    for k in 0..=n {
        let w = if k < n { &weights.q } else { &weights.p };
        // Γ_k only has nonzero columns for inputs u_0..u_{k-1}
        let width = k * nu;
        if width == 0 {
            continue;
        }
        let gk = gamma.view((k * nx, 0), (nx, width));
        let wg = w * gk;
        let block = gk.transpose() * &wg;
        let mut h = hess.view_mut((0, 0), (width, width));
        h += block;
        let gvec = wg.transpose() * free.rows(k * nx, nx);
        let mut g = grad.rows_mut(0, width);
        g += gvec;
    }
    for k in 0..n {
        let mut h = hess.view_mut((k * nu, k * nu), (nu, nu));
        h += &weights.r;
    }
    hess *= 2.0;
    grad *= 2.0;

    Ok(CondensedQp {
        layout,
        x0hat: x0hat.clone(),
        phi,
        gamma,
        psi,
        hess,
        grad,
    })
}

/// Minimizes the condensed quadratic: `u = −H⁻¹g` via a Cholesky factorization.
pub fn solve_condensed(qp: &CondensedQp) -> Result<DVector<f64>> {
    match qp.hess.clone().cholesky() {
        Some(chol) => Ok(chol.solve(&(-&qp.grad))),
        None => Err(Error::NotPositiveDefinite {
            min_eigenvalue: SymmetricEigen::new(qp.hess.clone()).eigenvalues.min(),
        }),
    }
}

/// Rebuilds the stacked `y = (Φx̂₀ + Γu + Ψ, u)`.
pub fn expand(qp: &CondensedQp, u: &DVector<f64>) -> Result<DecisionVector> {
    let layout = qp.layout;
    let n_inputs = layout.horizon * layout.n_u;
    check_len("input trajectory", n_inputs, u.len())?;
    let x = &qp.phi * &qp.x0hat + &qp.gamma * u + &qp.psi;
    let mut y = DVector::zeros(layout.len_y());
    y.rows_mut(0, x.len()).copy_from(&x);
    y.rows_mut(x.len(), n_inputs).copy_from(u);
    DecisionVector::new(layout, y)
}

/// Multipliers of a solved condensed QP by the adjoint (backward) recursion.
///
/// The state columns of `G` form a square block lower-triangular matrix with
/// identity diagonal blocks, so the state part of stationarity,
/// `G_xᵀλ = −2𝓠_x y`, is solved exactly by back substitution. At a minimizer
/// of the condensed QP the input part then holds automatically. This avoids
/// the squared conditioning of the normal equations; it falls back to
/// [`recover_multipliers`] if `G` does not have that structure.
pub fn adjoint_multipliers(
    prob: &StackedProblem,
    g_used: &DMatrix<f64>,
    y: &DecisionVector,
) -> Result<DVector<f64>> {
    let layout = prob.layout();
    check_len("constraint rows", layout.len_lambda(), g_used.nrows())?;
    check_len("constraint columns", layout.len_y(), g_used.ncols())?;
    let n_states = layout.len_lambda();
    let g_x = g_used.columns(0, n_states);
    let structured = (0..n_states).all(|i| g_x[(i, i)] == 1.0 && (i + 1..n_states).all(|j| g_x[(i, j)] == 0.0));
    if !structured {
        return recover_multipliers(prob, g_used, y);
    }
    let grad = prob.cost_gradient(y);
    let rhs = -grad.rows(0, n_states).into_owned();
    g_x.transpose()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::SingularKkt)
}

/// Multipliers from stationarity `2𝓠y + Gᵀλ = 0`, solved in the
/// least-squares sense: `λ = −(GGᵀ)⁻¹G(2𝓠y)`.
pub fn recover_multipliers(
    prob: &StackedProblem,
    g_used: &DMatrix<f64>,
    y: &DecisionVector,
) -> Result<DVector<f64>> {
    let layout = prob.layout();
    check_len("constraint rows", layout.len_lambda(), g_used.nrows())?;
    check_len("constraint columns", layout.len_y(), g_used.ncols())?;
    let grad = prob.cost_gradient(y);
    let normal = g_used * g_used.transpose();
    match normal.cholesky() {
        Some(chol) => Ok(-chol.solve(&(g_used * grad))),
        None => Err(Error::RankDeficient {
            min_singular_value: g_used.singular_values().min(),
        }),
    }
}
