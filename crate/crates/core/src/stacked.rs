//! The stacked nonlinear program
//!
//! ```text
//! min_y  ‖y‖²_𝓠   s.t.  G(ρ(y)) y + C x̂₀ = 0
//! ```
//!
//! with `y = (x₀, …, x_N, u₀, …, u_{N−1})`, `𝓠 = diag(I_N ⊗ Q, P, I_N ⊗ R)`
//! and `C = [−I, 0, …, 0]ᵀ`. Block row 0 of `G` is the initial condition
//! `x₀ − x̂₀ = 0`; block row `k+1` encodes `x_{k+1} − A(ρ_k) x_k − B(ρ_k) u_k = 0`.
//!
//! Besides assembling `G`, this module evaluates the root function `F(z)`
//! of the fixed-parameter optimality conditions, its approximate and exact
//! Jacobians, and the hidden-coupling matrix `ΔG(y) = ∂[G(ρ(y))y]/∂y − G(ρ(y))`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::model::LpvModel;

/// Prediction horizon length `N ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizon(usize);

impl Horizon {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(Self(n))
    }

    pub fn len(&self) -> usize {
        self.0
    }
}

/// Stage, input and terminal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

/// Eigenvalue floor accepted as positive semidefinite.
pub const PSD_FLOOR: f64 = -1e-10;

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!("{name} must be square")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("{name} must be symmetric")));
    }
    Ok(())
}

impl Weights {
    /// Validates `Q ⪰ 0`, `P ⪰ 0`, `R ≻ 0`.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, p: DMatrix<f64>) -> Result<Self> {
        check_symmetric("Q", &q)?;
        check_symmetric("R", &r)?;
        check_symmetric("P", &p)?;
        check_len("terminal weight", q.nrows(), p.nrows())?;
        for (name, m) in [("Q", &q), ("P", &p)] {
            let min = min_eigenvalue(m);
            if min < PSD_FLOOR {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        let min_r = min_eigenvalue(&r);
        if min_r <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "R must be positive definite (min eigenvalue {min_r:e})"
            )));
        }
        Ok(Self { q, r, p })
    }

    pub fn diagonal(q: &[f64], r: &[f64], p: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
            DMatrix::from_diagonal(&DVector::from_column_slice(p)),
        )
    }
}

/// Index arithmetic for the stacked decision and multiplier vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_x: usize,
    pub n_u: usize,
    pub horizon: usize,
}

impl Layout {
    /// Length of `y`: `(N+1)·n_x + N·n_u`.
    pub fn len_y(&self) -> usize {
        (self.horizon + 1) * self.n_x + self.horizon * self.n_u
    }

    /// Length of `λ`: `(N+1)·n_x`.
    pub fn len_lambda(&self) -> usize {
        (self.horizon + 1) * self.n_x
    }

    pub fn len_z(&self) -> usize {
        self.len_y() + self.len_lambda()
    }

    pub fn state_offset(&self, k: usize) -> usize {
        k * self.n_x
    }

    pub fn input_offset(&self, k: usize) -> usize {
        (self.horizon + 1) * self.n_x + k * self.n_u
    }
}

/// Stacked primal vector `y = (x₀, …, x_N, u₀, …, u_{N−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    layout: Layout,
    data: DVector<f64>,
}

impl DecisionVector {
    pub fn new(layout: Layout, data: DVector<f64>) -> Result<Self> {
        check_len("decision vector", layout.len_y(), data.len())?;
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            data: DVector::zeros(layout.len_y()),
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn state(&self, k: usize) -> DVectorView<'_, f64> {
        self.data.rows(self.layout.state_offset(k), self.layout.n_x)
    }

    pub fn input(&self, k: usize) -> DVectorView<'_, f64> {
        self.data.rows(self.layout.input_offset(k), self.layout.n_u)
    }

    pub fn set_state(&mut self, k: usize, x: &DVector<f64>) {
        let off = self.layout.state_offset(k);
        self.data.rows_mut(off, self.layout.n_x).copy_from(x);
    }

    pub fn set_input(&mut self, k: usize, u: &DVector<f64>) {
        let off = self.layout.input_offset(k);
        self.data.rows_mut(off, self.layout.n_u).copy_from(u);
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }
}

/// Primal-dual pair `z = (y, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub y: DecisionVector,
    pub lambda: DVector<f64>,
}

impl KktPoint {
    pub fn new(y: DecisionVector, lambda: DVector<f64>) -> Result<Self> {
        check_len("multiplier vector", y.layout().len_lambda(), lambda.len())?;
        Ok(Self { y, lambda })
    }

    pub fn layout(&self) -> Layout {
        self.y.layout()
    }

    /// Concatenation `(y, λ)`.
    pub fn to_vector(&self) -> DVector<f64> {
        let ny = self.y.as_vector().len();
        let mut z = DVector::zeros(ny + self.lambda.len());
        z.rows_mut(0, ny).copy_from(self.y.as_vector());
        z.rows_mut(ny, self.lambda.len()).copy_from(&self.lambda);
        z
    }

    pub fn from_vector(layout: Layout, z: &DVector<f64>) -> Result<Self> {
        check_len("KKT point", layout.len_z(), z.len())?;
        let ny = layout.len_y();
        Ok(Self {
            y: DecisionVector::new(layout, z.rows(0, ny).into_owned())?,
            lambda: z.rows(ny, layout.len_lambda()).into_owned(),
        })
    }
}

/// The stacked NLP over a model, horizon and weights.
#[derive(Debug, Clone)]
pub struct StackedProblem {
    model: Arc<dyn LpvModel>,
    horizon: Horizon,
    weights: Weights,
    qcal: DMatrix<f64>,
}

impl StackedProblem {
    pub fn new(model: Arc<dyn LpvModel>, horizon: Horizon, weights: Weights) -> Result<Self> {
        let dims = model.dims();
        check_len("state weight Q", dims.n_x, weights.q.nrows())?;
        check_len("terminal weight P", dims.n_x, weights.p.nrows())?;
        check_len("input weight R", dims.n_u, weights.r.nrows())?;

        let layout = Layout {
            n_x: dims.n_x,
            n_u: dims.n_u,
            horizon: horizon.len(),
        };
        let mut qcal = DMatrix::zeros(layout.len_y(), layout.len_y());
        let n = horizon.len();
        for k in 0..=n {
            let w = if k < n { &weights.q } else { &weights.p };
            let o = layout.state_offset(k);
            qcal.view_mut((o, o), (dims.n_x, dims.n_x)).copy_from(w);
        }
        for k in 0..n {
            let o = layout.input_offset(k);
            qcal.view_mut((o, o), (dims.n_u, dims.n_u))
                .copy_from(&weights.r);
        }
        Ok(Self {
            model,
            horizon,
            weights,
            qcal,
        })
    }

    pub fn model(&self) -> &Arc<dyn LpvModel> {
        &self.model
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn layout(&self) -> Layout {
        let dims = self.model.dims();
        Layout {
            n_x: dims.n_x,
            n_u: dims.n_u,
            horizon: self.horizon.len(),
        }
    }

    /// Block-diagonal weight `𝓠`.
    pub fn qcal(&self) -> &DMatrix<f64> {
        &self.qcal
    }

    fn check_y(&self, y: &DecisionVector) -> Result<()> {
        if y.layout() != self.layout() {
            return Err(Error::DimensionMismatch {
                what: "decision vector",
                expected: self.layout().len_y(),
                found: y.as_vector().len(),
            });
        }
        Ok(())
    }

    fn check_z(&self, z: &KktPoint) -> Result<()> {
        self.check_y(&z.y)?;
        check_len("multiplier vector", self.layout().len_lambda(), z.lambda.len())
    }

    fn check_x0(&self, x0hat: &DVector<f64>) -> Result<()> {
        check_len("initial state", self.layout().n_x, x0hat.len())
    }

    /// `‖y‖²_𝓠`.
    pub fn cost(&self, y: &DecisionVector) -> f64 {
        let v = y.as_vector();
        v.dot(&(&self.qcal * v))
    }

    /// `2𝓠y`.
    pub fn cost_gradient(&self, y: &DecisionVector) -> DVector<f64> {
        &self.qcal * y.as_vector() * 2.0
    }

    /// `C x̂₀ = (−x̂₀, 0, …, 0)`.
    pub fn c_times(&self, x0hat: &DVector<f64>) -> DVector<f64> {
        let mut c = DVector::zeros(self.layout().len_lambda());
        c.rows_mut(0, x0hat.len()).copy_from(&(-x0hat));
        c
    }

    /// Parameter trajectory `(ρ₀, …, ρ_{N−1})` evaluated from `y`.
    pub fn rho_trajectory(&self, y: &DecisionVector) -> Vec<DVector<f64>> {
        (0..self.horizon.len())
            .map(|k| {
                self.model
                    .rho(&y.state(k).into_owned(), &y.input(k).into_owned())
            })
            .collect()
    }

    /// Constraint matrix `G(ρ)` for a fixed parameter trajectory.
    pub fn build_g(&self, rho_traj: &[DVector<f64>]) -> Result<DMatrix<f64>> {
        let layout = self.layout();
        check_len("parameter trajectory", layout.horizon, rho_traj.len())?;
        let n_rho = self.model.dims().n_rho;
        let stages: Vec<(DMatrix<f64>, DMatrix<f64>)> = rho_traj
            .iter()
            .map(|rho| {
                check_len("parameter", n_rho, rho.len())?;
                Ok((self.model.a_of_rho(rho), self.model.b_of_rho(rho)))
            })
            .collect::<Result<_>>()?;
        Ok(self.assemble(stages.iter().map(|(a, b)| (a, b))))
    }

    /// Assembles a constraint matrix from per-stage `(A_k, B_k)` blocks.
    pub(crate) fn assemble<'a, I>(&self, stages: I) -> DMatrix<f64>
    where
        I: Iterator<Item = (&'a DMatrix<f64>, &'a DMatrix<f64>)>,
    {
        let layout = self.layout();
        let (nx, nu) = (layout.n_x, layout.n_u);
        let mut g = DMatrix::zeros(layout.len_lambda(), layout.len_y());
        g.view_mut((0, 0), (nx, nx))
            .copy_from(&DMatrix::identity(nx, nx));
        for (k, (a, b)) in stages.enumerate() {
            let row = (k + 1) * nx;
            g.view_mut((row, layout.state_offset(k)), (nx, nx))
                .copy_from(&(-a));
            g.view_mut((row, layout.state_offset(k + 1)), (nx, nx))
                .copy_from(&DMatrix::identity(nx, nx));
            g.view_mut((row, layout.input_offset(k)), (nx, nu))
                .copy_from(&(-b));
        }
        g
    }

    /// `G(ρ(y))` with the parameter evaluated from `y` itself.
    pub fn g_at(&self, y: &DecisionVector) -> DMatrix<f64> {
        self.build_g(&self.rho_trajectory(y))
            .expect("trajectory built from a valid decision vector")
    }

    /// Stage Jacobians `∂f/∂(x_k, u_k)` for `k = 0..N`.
    pub fn stage_jacobians(&self, y: &DecisionVector) -> Vec<DMatrix<f64>> {
        (0..self.horizon.len())
            .map(|k| {
                self.model
                    .stage_jacobian(&y.state(k).into_owned(), &y.input(k).into_owned())
            })
            .collect()
    }

    /// `G̃(y) = ∂[G(ρ(y))y]/∂y` and `G̃_d(y) = −ΔG(y)`.
    pub fn g_tilde(&self, y: &DecisionVector) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_y(y)?;
        let g = self.g_at(y);
        let gt = self.g_tilde_only(y);
        let gd = &g - &gt;
        Ok((gt, gd))
    }

    pub(crate) fn g_tilde_only(&self, y: &DecisionVector) -> DMatrix<f64> {
        let nx = self.layout().n_x;
        let blocks: Vec<(DMatrix<f64>, DMatrix<f64>)> = self
            .stage_jacobians(y)
            .into_iter()
            .map(|j| {
                let cols = j.ncols();
                (
                    j.columns(0, nx).into_owned(),
                    j.columns(nx, cols - nx).into_owned(),
                )
            })
            .collect();
        self.assemble(blocks.iter().map(|(a, b)| (a, b)))
    }

    /// Hidden coupling `ΔG(y) = ∂[G(ρ(y))y]/∂y − G(ρ(y))`.
    pub fn delta_g(&self, y: &DecisionVector) -> Result<DMatrix<f64>> {
        self.check_y(y)?;
        Ok(self.g_tilde_only(y) - self.g_at(y))
    }

    /// Perturbation `e = −ΔG(y)ᵀλ` of the fixed-parameter fixpoint.
    pub fn perturbation(&self, y: &DecisionVector, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("multiplier vector", self.layout().len_lambda(), lambda.len())?;
        Ok(-(self.delta_g(y)?.transpose() * lambda))
    }

    /// `G(ρ(y))y + Cx̂₀`, evaluated stage by stage.
    pub fn constraint_residual(&self, y: &DecisionVector, x0hat: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_y(y)?;
        self.check_x0(x0hat)?;
        let nx = self.layout().n_x;
        let mut r = DVector::zeros(self.layout().len_lambda());
        r.rows_mut(0, nx).copy_from(&(y.state(0) - x0hat));
        for k in 0..self.horizon.len() {
            let next = self
                .model
                .dynamics(&y.state(k).into_owned(), &y.input(k).into_owned());
            r.rows_mut((k + 1) * nx, nx)
                .copy_from(&(y.state(k + 1) - next));
        }
        Ok(r)
    }

    fn stack(&self, top: DVector<f64>, bottom: DVector<f64>) -> DVector<f64> {
        let (nt, nb) = (top.len(), bottom.len());
        let mut out = DVector::zeros(nt + nb);
        out.rows_mut(0, nt).copy_from(&top);
        out.rows_mut(nt, nb).copy_from(&bottom);
        out
    }

    /// Root function `F(z) = (2𝓠y + Gᵀ(ρ(y))λ, G(ρ(y))y + Cx̂₀)`.
    pub fn fonc_residual(&self, z: &KktPoint, x0hat: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_z(z)?;
        let g = self.g_at(&z.y);
        let stationarity = self.cost_gradient(&z.y) + g.transpose() * &z.lambda;
        let feasibility = self.constraint_residual(&z.y, x0hat)?;
        Ok(self.stack(stationarity, feasibility))
    }

    /// Optimality conditions of the true NLP:
    /// `(2𝓠y + [∂(G(ρ(y))y)/∂y]ᵀλ, G(ρ(y))y + Cx̂₀)`.
    pub fn true_fonc_residual(&self, z: &KktPoint, x0hat: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_z(z)?;
        let gt = self.g_tilde_only(&z.y);
        let stationarity = self.cost_gradient(&z.y) + gt.transpose() * &z.lambda;
        let feasibility = self.constraint_residual(&z.y, x0hat)?;
        Ok(self.stack(stationarity, feasibility))
    }

    fn kkt_matrix(&self, top_left: &DMatrix<f64>, g: &DMatrix<f64>, lower: &DMatrix<f64>) -> DMatrix<f64> {
        let layout = self.layout();
        let (ny, nl) = (layout.len_y(), layout.len_lambda());
        let mut j = DMatrix::zeros(ny + nl, ny + nl);
        j.view_mut((0, 0), (ny, ny)).copy_from(top_left);
        j.view_mut((0, ny), (ny, nl)).copy_from(&g.transpose());
        j.view_mut((ny, 0), (nl, ny)).copy_from(lower);
        j
    }

    /// `J(z) = [[2𝓠, Gᵀ(ρ)], [G(ρ), 0]]` with `ρ = ρ(y)`.
    pub fn approx_jacobian(&self, z: &KktPoint) -> Result<DMatrix<f64>> {
        self.check_z(z)?;
        let g = self.g_at(&z.y);
        Ok(self.kkt_matrix(&(&self.qcal * 2.0), &g, &g))
    }

    /// `F'(z) = [[2𝓠 + ∂(Gᵀλ)/∂y, Gᵀ], [∂(Gy)/∂y, 0]]`.
    ///
    /// The second-order block `∂(Gᵀ(ρ(y))λ)/∂y` comes from central
    /// differences with step `1e-6·max(1, |y_j|)`.
    pub fn exact_jacobian(&self, z: &KktPoint) -> Result<DMatrix<f64>> {
        self.check_z(z)?;
        let layout = self.layout();
        let ny = layout.len_y();
        let gtl = |v: &DVector<f64>| -> DVector<f64> {
            let y = DecisionVector::new(layout, v.clone()).expect("same layout");
            self.g_at(&y).transpose() * &z.lambda
        };
        let base = z.y.as_vector();
        let mut second = DMatrix::zeros(ny, ny);
        for j in 0..ny {
            let h = 1e-6 * base[j].abs().max(1.0);
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[j] += h;
            minus[j] -= h;
            second.set_column(j, &((gtl(&plus) - gtl(&minus)) / (2.0 * h)));
        }
        let g = self.g_at(&z.y);
        let gt = self.g_tilde_only(&z.y);
        Ok(self.kkt_matrix(&(&self.qcal * 2.0 + second), &g, &gt))
    }

    /// Smallest singular value of `G(ρ)`.
    pub fn g_min_singular_value(&self, rho_traj: &[DVector<f64>]) -> Result<f64> {
        let g = self.build_g(rho_traj)?;
        Ok(g.singular_values().min())
    }

    /// Smallest eigenvalue of `𝓠` restricted to the nullspace of `g`.
    pub fn reduced_hessian_min_eigenvalue(&self, g: &DMatrix<f64>) -> f64 {
        // nullspace from the eigenvectors of GᵀG with (numerically) zero eigenvalue
        let eig = SymmetricEigen::new(g.transpose() * g);
        let scale = eig.eigenvalues.amax().max(1.0);
        let cols: Vec<_> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, v)| **v <= 1e-10 * scale)
            .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            return f64::INFINITY;
        }
        let null = DMatrix::from_columns(&cols);
        let reduced = null.transpose() * &self.qcal * &null;
        SymmetricEigen::new(reduced).eigenvalues.min()
    }
}

/// Dense solve of the equality-constrained QP
/// `min ½pᵀHp + gᵀp  s.t.  A p + b = 0` through its full KKT system.
///
/// Returns `(p, λ)` with `H p + g + Aᵀλ = 0`. Used as the reference route
/// against which the condensed solver is checked.
pub fn solve_kkt_dense(
    hess: &DMatrix<f64>,
    grad: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (hess.nrows(), a.nrows());
    check_len("KKT gradient", n, grad.len())?;
    check_len("KKT constraint columns", n, a.ncols())?;
    check_len("KKT constraint offset", m, b.len())?;
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(hess);
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    rhs.rows_mut(n, m).copy_from(&(-b));
    let sol = kkt.lu().solve(&rhs).ok_or(Error::SingularKkt)?;
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, TinyLti, TinyQlpv, Unicycle};

    fn tiny(model: Arc<dyn LpvModel>, n: usize) -> StackedProblem {
        StackedProblem::new(
            model,
            Horizon::new(n).unwrap(),
            Weights::diagonal(&[1.0], &[1.0], &[1.0]).unwrap(),
        )
        .unwrap()
    }

    fn unicycle(n: usize) -> StackedProblem {
        StackedProblem::new(
            Arc::new(Unicycle::default()),
            Horizon::new(n).unwrap(),
            Weights::diagonal(&[1.0, 1.0, 0.1, 1.0, 0.1], &[1.0, 1.0], &[1.0, 1.0, 0.1, 1.0, 0.1])
                .unwrap(),
        )
        .unwrap()
    }

    fn y_of(prob: &StackedProblem, v: &[f64]) -> DecisionVector {
        DecisionVector::new(prob.layout(), DVector::from_column_slice(v)).unwrap()
    }

    #[test]
    fn horizon_and_weights_validation() {
        assert!(Horizon::new(0).is_err());
        assert!(Weights::diagonal(&[1.0], &[0.0], &[1.0]).is_err());
        assert!(Weights::diagonal(&[-1.0], &[1.0], &[1.0]).is_err());
        assert!(Weights::diagonal(&[1.0], &[1.0], &[-0.5]).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Weights::new(asym, DMatrix::identity(1, 1), DMatrix::identity(2, 2)).is_err());
        // a zero Q is admissible
        assert!(Weights::diagonal(&[0.0], &[1.0], &[0.0]).is_ok());
    }

    #[test]
    fn weight_dims_checked_against_model() {
        let w = Weights::diagonal(&[1.0, 1.0], &[1.0], &[1.0, 1.0]).unwrap();
        assert!(StackedProblem::new(Arc::new(TinyLti::default()), Horizon::new(2).unwrap(), w).is_err());
    }

    #[test]
    fn tiny_lti_constraint_matrix() {
        let prob = tiny(Arc::new(TinyLti::default()), 1);
        let g = prob.build_g(&[DVector::zeros(1)]).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, -1.0, 1.0, -1.0]));
        assert!(prob.build_g(&[]).is_err());
        assert!(prob.build_g(&[DVector::zeros(2)]).is_err());
    }

    #[test]
    fn unicycle_constraint_matrix_shape_and_rank() {
        let prob = unicycle(20);
        let rho: Vec<_> = (0..20).map(|k| DVector::from_element(1, 0.3 * k as f64)).collect();
        let g = prob.build_g(&rho).unwrap();
        assert_eq!(g.shape(), (105, 145));
        assert!(prob.g_min_singular_value(&rho).unwrap() > 1e-10);
        assert!(prob.reduced_hessian_min_eigenvalue(&g) > 0.0);
    }

    #[test]
    fn tiny_lti_optimum_is_a_root() {
        let prob = tiny(Arc::new(TinyLti::default()), 1);
        let z = KktPoint::new(
            y_of(&prob, &[1.0, 0.5, -0.5]),
            DVector::from_column_slice(&[-3.0, -1.0]),
        )
        .unwrap();
        let f = prob.fonc_residual(&z, &DVector::from_element(1, 1.0)).unwrap();
        assert!(f.amax() < 1e-15, "{f}");
    }

    #[test]
    fn origin_is_a_root() {
        for id in crate::model::BUILTIN_IDS {
            let model = builtin(id).unwrap();
            let d = model.dims();
            let prob = StackedProblem::new(
                model,
                Horizon::new(3).unwrap(),
                Weights::new(
                    DMatrix::identity(d.n_x, d.n_x),
                    DMatrix::identity(d.n_u, d.n_u),
                    DMatrix::identity(d.n_x, d.n_x),
                )
                .unwrap(),
            )
            .unwrap();
            let z = KktPoint::new(DecisionVector::zeros(prob.layout()), DVector::zeros(prob.layout().len_lambda()))
                .unwrap();
            let f = prob.fonc_residual(&z, &DVector::zeros(d.n_x)).unwrap();
            assert_eq!(f.amax(), 0.0, "{id}");
        }
    }

    #[test]
    fn approx_jacobian_is_symmetric() {
        let prob = unicycle(4);
        let y = DVector::from_fn(prob.layout().len_y(), |i, _| (i as f64 * 0.37).sin());
        let z = KktPoint::new(
            DecisionVector::new(prob.layout(), y).unwrap(),
            DVector::from_fn(prob.layout().len_lambda(), |i, _| (i as f64).cos()),
        )
        .unwrap();
        let j = prob.approx_jacobian(&z).unwrap();
        assert_eq!(j, j.transpose());
    }

    #[test]
    fn lti_exact_and_approx_jacobians_coincide() {
        let prob = tiny(Arc::new(TinyLti { a: 0.9, b: 0.4 }), 3);
        let y = DVector::from_fn(prob.layout().len_y(), |i, _| i as f64 - 2.0);
        let z = KktPoint::new(
            DecisionVector::new(prob.layout(), y).unwrap(),
            DVector::from_fn(prob.layout().len_lambda(), |i, _| 0.5 * i as f64),
        )
        .unwrap();
        let exact = prob.exact_jacobian(&z).unwrap();
        let approx = prob.approx_jacobian(&z).unwrap();
        assert!((exact - approx).amax() < 1e-12);
        assert_eq!(prob.delta_g(&z.y).unwrap().amax(), 0.0);
        assert_eq!(prob.perturbation(&z.y, &z.lambda).unwrap().amax(), 0.0);
    }

    #[test]
    fn tiny_qlpv_hidden_coupling() {
        let prob = tiny(Arc::new(TinyQlpv), 1);
        let y = y_of(&prob, &[0.5, 0.125, -0.125]);
        let dg = prob.delta_g(&y).unwrap();
        let mut expected = DMatrix::zeros(2, 3);
        expected[(1, 0)] = -0.5;
        assert_eq!(dg, expected);

        let (gt, gd) = prob.g_tilde(&y).unwrap();
        assert_eq!(&gt - prob.g_at(&y), dg);
        assert_eq!(gd, -dg);
    }

    #[test]
    fn tiny_qlpv_perturbation_at_fixpoint() {
        let prob = tiny(Arc::new(TinyQlpv), 1);
        let y = y_of(&prob, &[0.5, 0.125, -0.125]);
        let lambda = DVector::from_column_slice(&[-1.125, -0.25]);
        let z = KktPoint::new(y.clone(), lambda.clone()).unwrap();
        // fixed-parameter optimality holds exactly
        assert!(prob.fonc_residual(&z, &DVector::from_element(1, 0.5)).unwrap().amax() < 1e-15);
        let e = prob.perturbation(&y, &lambda).unwrap();
        assert_eq!(e.as_slice(), &[-0.125, 0.0, 0.0]);
        let r = prob.true_fonc_residual(&z, &DVector::from_element(1, 0.5)).unwrap();
        assert!((r.rows(0, 3) + &e).amax() < 1e-15);
    }

    #[test]
    fn unicycle_delta_g_lives_in_heading_columns() {
        let prob = unicycle(3);
        let layout = prob.layout();
        let y = DVector::from_fn(layout.len_y(), |i, _| 0.3 + (i as f64 * 0.71).sin());
        let y = DecisionVector::new(layout, y).unwrap();
        let dg = prob.delta_g(&y).unwrap();
        for k in 0..3 {
            let (v, phi) = (y.state(k)[2], y.state(k)[3]);
            let row = (k + 1) * 5;
            let col = layout.state_offset(k) + 3;
            assert!((dg[(row, col)] - 0.1 * v * phi.sin()).abs() < 1e-15);
            assert!((dg[(row + 1, col)] + 0.1 * v * phi.cos()).abs() < 1e-15);
        }
        let nonzero = dg.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 6);
    }

    #[test]
    fn dense_kkt_solves_tiny_qp() {
        let prob = tiny(Arc::new(TinyLti::default()), 1);
        let g = prob.g_at(&DecisionVector::zeros(prob.layout()));
        let (y, lambda) = solve_kkt_dense(
            &(prob.qcal() * 2.0),
            &DVector::zeros(3),
            &g,
            &prob.c_times(&DVector::from_element(1, 1.0)),
        )
        .unwrap();
        assert!((y - DVector::from_column_slice(&[1.0, 0.5, -0.5])).amax() < 1e-14);
        assert!((lambda - DVector::from_column_slice(&[-3.0, -1.0])).amax() < 1e-14);
    }

    #[test]
    fn kkt_point_round_trip_and_checks() {
        let prob = tiny(Arc::new(TinyLti::default()), 2);
        let v = DVector::from_fn(prob.layout().len_z(), |i, _| i as f64);
        let z = KktPoint::from_vector(prob.layout(), &v).unwrap();
        assert_eq!(z.to_vector(), v);
        assert!(KktPoint::new(z.y.clone(), DVector::zeros(2)).is_err());
        assert!(DecisionVector::new(prob.layout(), DVector::zeros(4)).is_err());
        assert!(prob.fonc_residual(&z, &DVector::zeros(2)).is_err());
    }
}
