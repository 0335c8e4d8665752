//! Quasi-LPV plant models.
//!
//! A quasi-LPV model is a nonlinear discrete-time system written as
//! `x⁺ = A(ρ) x + B(ρ) u` where the scheduling parameter `ρ = ρ(x, u)` is
//! itself a function of the stage variables. The builtin plants are the
//! dynamic unicycle, the arm-driven inverted pendulum (ADIP) and two scalar
//! test instances.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// State, input and parameter dimensions of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_rho: usize,
}

impl ModelDims {
    pub fn new(n_x: usize, n_u: usize, n_rho: usize) -> Result<Self> {
        if n_x == 0 || n_u == 0 || n_rho == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must be positive, got n_x={n_x}, n_u={n_u}, n_rho={n_rho}"
            )));
        }
        Ok(Self { n_x, n_u, n_rho })
    }

    /// Stage width `n_x + n_u`.
    pub fn n_xu(&self) -> usize {
        self.n_x + self.n_u
    }
}

/// A discrete-time quasi-LPV system `x⁺ = A(ρ(x,u)) x + B(ρ(x,u)) u`.
///
/// The unchecked methods (`rho`, `a_of_rho`, `b_of_rho`, `dynamics`,
/// `stage_jacobian`) assume correctly sized arguments; `eval_rho` and
/// `eval_dynamics` validate them first.
pub trait LpvModel: Debug + Send + Sync {
    /// Identifier used in configs and on the command line.
    fn id(&self) -> &str;

    fn dims(&self) -> ModelDims;

    fn rho(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn a_of_rho(&self, rho: &DVector<f64>) -> DMatrix<f64>;

    fn b_of_rho(&self, rho: &DVector<f64>) -> DMatrix<f64>;

    /// Jacobian of `(x, u) ↦ A(ρ(x,u)) x + B(ρ(x,u)) u`, shape `n_x × (n_x + n_u)`.
    ///
    /// Defaults to central finite differences; builtin models override this
    /// with analytic expressions.
    fn stage_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        fd_stage_jacobian(self, x, u)
    }

    /// The fictitious disturbance system used by the exact variant, when the
    /// model provides a closed form for it.
    fn exact_extension(&self) -> Option<&dyn ExactExtension> {
        None
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let rho = self.rho(x, u);
        self.a_of_rho(&rho) * x + self.b_of_rho(&rho) * u
    }

    fn eval_rho(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_stage(x, u)?;
        Ok(self.rho(x, u))
    }

    fn eval_dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_stage(x, u)?;
        Ok(self.dynamics(x, u))
    }

    fn check_stage(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        let dims = self.dims();
        check_len("state", dims.n_x, x.len())?;
        check_len("input", dims.n_u, u.len())
    }
}

/// Closed form of the fictitious LPV system
/// `x⁺ = Ã(ρ̃) x + B̃(ρ̃) u + B̃_d(ρ̃) d` whose disturbance `d` is a projection
/// of the previous iterate.
pub trait ExactExtension: Send + Sync {
    /// Disturbance dimension.
    fn n_d(&self) -> usize;

    fn rho_tilde(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn a_tilde(&self, rho_tilde: &DVector<f64>) -> DMatrix<f64>;

    fn b_tilde(&self, rho_tilde: &DVector<f64>) -> DMatrix<f64>;

    fn b_d_tilde(&self, rho_tilde: &DVector<f64>) -> DMatrix<f64>;

    /// Disturbance value computed from the previous iterate's stage variables.
    fn disturbance(&self, x_prev: &DVector<f64>, u_prev: &DVector<f64>) -> DVector<f64>;
}

/// Relative step used for finite-difference stage Jacobians.
pub const FD_STEP: f64 = 1e-6;

/// Central-difference Jacobian of the stage map, step `1e-6·max(1, |v_j|)`.
pub fn fd_stage_jacobian<M: LpvModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> DMatrix<f64> {
    let dims = model.dims();
    let mut jac = DMatrix::zeros(dims.n_x, dims.n_xu());
    for j in 0..dims.n_xu() {
        let (mut xp, mut up) = (x.clone(), u.clone());
        let (mut xm, mut um) = (x.clone(), u.clone());
        let h;
        if j < dims.n_x {
            h = FD_STEP * x[j].abs().max(1.0);
            xp[j] += h;
            xm[j] -= h;
        } else {
            let i = j - dims.n_x;
            h = FD_STEP * u[i].abs().max(1.0);
            up[i] += h;
            um[i] -= h;
        }
        let col = (model.dynamics(&xp, &up) - model.dynamics(&xm, &um)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Explicit Euler discretization `x ↦ x + T·f(x, u)` of a continuous vector field.
pub fn euler_discretize<F>(
    field: F,
    dt: f64,
) -> Result<impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sampling time must be positive, got {dt}"
        )));
    }
    Ok(move |x: &DVector<f64>, u: &DVector<f64>| x + field(x, u) * dt)
}

/// Euler discretization of continuous LPV matrices: `(I + T·A_c, T·B_c)`.
pub fn euler_lpv_matrices(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a_c.nrows();
    (DMatrix::identity(n, n) + a_c * dt, b_c * dt)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "sampling time must be positive, got {dt}"
        )))
    }
}

/// `sin(θ)/θ` with the removable singularity at zero.
pub fn sinc(theta: f64) -> f64 {
    if theta.abs() < 1e-4 {
        let t2 = theta * theta;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0
    } else {
        theta.sin() / theta
    }
}

// ---------------------------------------------------------------------------
// Dynamic unicycle

/// Dynamic unicycle with state `(s, q, v, φ, ω)`, input `(F, τ)` and `ρ = φ`.
#[derive(Debug, Clone)]
pub struct Unicycle {
    dt: f64,
}

impl Unicycle {
    pub const DEFAULT_DT: f64 = 0.1;

    pub fn new(dt: f64) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self { dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Continuous-time vector field.
    pub fn field(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (v, phi, omega) = (x[2], x[3], x[4]);
        DVector::from_vec(vec![v * phi.cos(), v * phi.sin(), u[0], omega, u[1]])
    }

    fn continuous_a(phi: f64) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(5, 5);
        a[(0, 2)] = phi.cos();
        a[(1, 2)] = phi.sin();
        a[(3, 4)] = 1.0;
        a
    }

    fn continuous_b() -> DMatrix<f64> {
        let mut b = DMatrix::zeros(5, 2);
        b[(2, 0)] = 1.0;
        b[(4, 1)] = 1.0;
        b
    }
}

impl Default for Unicycle {
    fn default() -> Self {
        Self {
            dt: Self::DEFAULT_DT,
        }
    }
}

impl LpvModel for Unicycle {
    fn id(&self) -> &str {
        "unicycle"
    }

    fn dims(&self) -> ModelDims {
        ModelDims {
            n_x: 5,
            n_u: 2,
            n_rho: 1,
        }
    }

    fn rho(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[3])
    }

    fn a_of_rho(&self, rho: &DVector<f64>) -> DMatrix<f64> {
        euler_lpv_matrices(&Self::continuous_a(rho[0]), &Self::continuous_b(), self.dt).0
    }

    fn b_of_rho(&self, _rho: &DVector<f64>) -> DMatrix<f64> {
        Self::continuous_b() * self.dt
    }

    fn stage_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let rt = self.rho_tilde(x, u);
        let mut jac = DMatrix::zeros(5, 7);
        jac.view_mut((0, 0), (5, 5)).copy_from(&self.a_tilde(&rt));
        jac.view_mut((0, 5), (5, 2)).copy_from(&self.b_tilde(&rt));
        jac
    }

    fn exact_extension(&self) -> Option<&dyn ExactExtension> {
        Some(self)
    }
}

impl ExactExtension for Unicycle {
    fn n_d(&self) -> usize {
        1
    }

    /// `ρ̃ = (v, φ)`.
    fn rho_tilde(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[2], x[3]])
    }

    fn a_tilde(&self, rho_tilde: &DVector<f64>) -> DMatrix<f64> {
        let (v, phi) = (rho_tilde[0], rho_tilde[1]);
        let t = self.dt;
        let mut a = self.a_of_rho(&DVector::from_element(1, phi));
        a[(0, 3)] = -t * v * phi.sin();
        a[(1, 3)] = t * v * phi.cos();
        a
    }

    fn b_tilde(&self, _rho_tilde: &DVector<f64>) -> DMatrix<f64> {
        Self::continuous_b() * self.dt
    }

    fn b_d_tilde(&self, rho_tilde: &DVector<f64>) -> DMatrix<f64> {
        let (v, phi) = (rho_tilde[0], rho_tilde[1]);
        let t = self.dt;
        let mut bd = DMatrix::zeros(5, 1);
        bd[(0, 0)] = t * v * phi.sin();
        bd[(1, 0)] = -t * v * phi.cos();
        bd
    }

    /// `d_k = φ_k` of the previous iterate.
    fn disturbance(&self, x_prev: &DVector<f64>, _u_prev: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x_prev[3])
    }
}

// ---------------------------------------------------------------------------
// Arm-driven inverted pendulum

/// Physical parameters of the arm-driven inverted pendulum, both links
/// modelled as uniform rods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdipParams {
    pub arm_mass: f64,
    pub arm_length: f64,
    pub pendulum_mass: f64,
    pub pendulum_length: f64,
    pub gravity: f64,
}

impl Default for AdipParams {
    fn default() -> Self {
        Self {
            arm_mass: 0.3,
            arm_length: 0.15,
            pendulum_mass: 0.1,
            pendulum_length: 0.125,
            gravity: 9.81,
        }
    }
}

/// Lumped inertia and gravity coefficients of the two-link equations of motion.
#[derive(Debug, Clone, Copy)]
struct AdipCoeffs {
    m11: f64,
    m22: f64,
    coupling: f64,
    grav1: f64,
    grav2: f64,
}

impl AdipParams {
    fn coeffs(&self) -> AdipCoeffs {
        let (m1, l1, m2, l2, g) = (
            self.arm_mass,
            self.arm_length,
            self.pendulum_mass,
            self.pendulum_length,
            self.gravity,
        );
        let (lc1, lc2) = (0.5 * l1, 0.5 * l2);
        AdipCoeffs {
            m11: m1 * lc1 * lc1 + m1 * l1 * l1 / 12.0 + m2 * l1 * l1,
            m22: m2 * lc2 * lc2 + m2 * l2 * l2 / 12.0,
            coupling: m2 * l1 * lc2,
            grav1: (m1 * lc1 + m2 * l1) * g,
            grav2: m2 * lc2 * g,
        }
    }
}

/// Arm-driven inverted pendulum with state `(θ₁, θ₂, θ̇₁, θ̇₂)` (absolute
/// angles from the upright vertical) and scalar base torque.
///
/// The scheduling parameter is
/// `ρ = (sinc θ₁, sinc θ₂, cos(θ₁−θ₂), sin(θ₁−θ₂)·θ̇₁, sin(θ₁−θ₂)·θ̇₂)`.
/// The physical parameters are a stand-in; see [`AdipParams`].
#[derive(Debug, Clone)]
pub struct Adip {
    params: AdipParams,
    coeffs: AdipCoeffs,
    dt: f64,
}

impl Adip {
    pub const DEFAULT_DT: f64 = 0.01;

    /// Note attached to every output produced with this model.
    pub const PARAMETER_NOTE: &'static str =
        "ADIP physical parameters are stand-in values (uniform rods: arm 0.3 kg / 0.15 m, pendulum 0.1 kg / 0.125 m, no friction)";

    pub fn new(params: AdipParams, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self {
            params,
            coeffs: params.coeffs(),
            dt,
        })
    }

    pub fn params(&self) -> &AdipParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn mass_matrix(&self, cos_diff: f64) -> nalgebra::Matrix2<f64> {
        let c = self.coeffs;
        nalgebra::Matrix2::new(c.m11, c.coupling * cos_diff, c.coupling * cos_diff, c.m22)
    }

    fn inverse_mass(&self, cos_diff: f64) -> nalgebra::Matrix2<f64> {
        // det = m11·m22 − c²cos² > 0 since the rod inertias make m11·m22 > c².
        self.mass_matrix(cos_diff)
            .try_inverse()
            .expect("ADIP mass matrix is always invertible")
    }

    /// Continuous-time vector field.
    pub fn field(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (th1, th2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let c = self.coeffs;
        let diff = th1 - th2;
        let rhs = nalgebra::Vector2::new(
            u[0] - c.coupling * diff.sin() * w2 * w2 + c.grav1 * th1.sin(),
            c.coupling * diff.sin() * w1 * w1 + c.grav2 * th2.sin(),
        );
        let acc = self.inverse_mass(diff.cos()) * rhs;
        DVector::from_vec(vec![w1, w2, acc[0], acc[1]])
    }
}

impl Default for Adip {
    fn default() -> Self {
        Self::new(AdipParams::default(), Self::DEFAULT_DT).expect("default ADIP is valid")
    }
}

impl LpvModel for Adip {
    fn id(&self) -> &str {
        "adip"
    }

    fn dims(&self) -> ModelDims {
        ModelDims {
            n_x: 4,
            n_u: 1,
            n_rho: 5,
        }
    }

    fn rho(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        let diff = x[0] - x[1];
        DVector::from_vec(vec![
            sinc(x[0]),
            sinc(x[1]),
            diff.cos(),
            diff.sin() * x[2],
            diff.sin() * x[3],
        ])
    }

    fn a_of_rho(&self, rho: &DVector<f64>) -> DMatrix<f64> {
        let c = self.coeffs;
        let minv = self.inverse_mass(rho[2]);
        let k = nalgebra::Matrix2x4::new(
            c.grav1 * rho[0],
            0.0,
            0.0,
            -c.coupling * rho[4],
            0.0,
            c.grav2 * rho[1],
            c.coupling * rho[3],
            0.0,
        );
        let lower = minv * k;
        let mut a_c = DMatrix::zeros(4, 4);
        a_c[(0, 2)] = 1.0;
        a_c[(1, 3)] = 1.0;
        for i in 0..2 {
            for j in 0..4 {
                a_c[(2 + i, j)] = lower[(i, j)];
            }
        }
        DMatrix::identity(4, 4) + a_c * self.dt
    }

    fn b_of_rho(&self, rho: &DVector<f64>) -> DMatrix<f64> {
        let minv = self.inverse_mass(rho[2]);
        let mut b = DMatrix::zeros(4, 1);
        b[(2, 0)] = minv[(0, 0)] * self.dt;
        b[(3, 0)] = minv[(1, 0)] * self.dt;
        b
    }

    fn stage_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let (th1, th2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let c = self.coeffs;
        let diff = th1 - th2;
        let (s, co) = (diff.sin(), diff.cos());
        let minv = self.inverse_mass(co);
        let rhs = nalgebra::Vector2::new(
            u[0] - c.coupling * s * w2 * w2 + c.grav1 * th1.sin(),
            c.coupling * s * w1 * w1 + c.grav2 * th2.sin(),
        );
        let acc = minv * rhs;
        // ∂M/∂θ₁ = −∂M/∂θ₂ = [[0, −c·s], [−c·s, 0]]
        let dm_acc = nalgebra::Vector2::new(-c.coupling * s * acc[1], -c.coupling * s * acc[0]);

        let drhs_dth1 = nalgebra::Vector2::new(
            -c.coupling * co * w2 * w2 + c.grav1 * th1.cos(),
            c.coupling * co * w1 * w1,
        );
        let drhs_dth2 = nalgebra::Vector2::new(
            c.coupling * co * w2 * w2,
            -c.coupling * co * w1 * w1 + c.grav2 * th2.cos(),
        );
        let cols = [
            minv * (drhs_dth1 - dm_acc),
            minv * (drhs_dth2 + dm_acc),
            minv * nalgebra::Vector2::new(0.0, 2.0 * c.coupling * s * w1),
            minv * nalgebra::Vector2::new(-2.0 * c.coupling * s * w2, 0.0),
            minv * nalgebra::Vector2::new(1.0, 0.0),
        ];

        let t = self.dt;
        let mut jac = DMatrix::zeros(4, 5);
        jac[(0, 0)] = 1.0;
        jac[(1, 1)] = 1.0;
        jac[(2, 2)] = 1.0;
        jac[(3, 3)] = 1.0;
        jac[(0, 2)] += t;
        jac[(1, 3)] += t;
        for (j, col) in cols.iter().enumerate() {
            jac[(2, j)] += t * col[0];
            jac[(3, j)] += t * col[1];
        }
        jac
    }
}

// ---------------------------------------------------------------------------
// Scalar test instances

/// Scalar LTI system `x⁺ = a x + b u` with a constant (unused) parameter.
#[derive(Debug, Clone)]
pub struct TinyLti {
    pub a: f64,
    pub b: f64,
}

impl Default for TinyLti {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0 }
    }
}

impl LpvModel for TinyLti {
    fn id(&self) -> &str {
        "tiny-lti"
    }

    fn dims(&self) -> ModelDims {
        ModelDims {
            n_x: 1,
            n_u: 1,
            n_rho: 1,
        }
    }

    fn rho(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }

    fn a_of_rho(&self, _rho: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.a)
    }

    fn b_of_rho(&self, _rho: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.b)
    }

    fn stage_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[self.a, self.b])
    }
}

/// Scalar quasi-LPV system `x⁺ = ρ x + u` with `ρ = x`, i.e. `x⁺ = x² + u`.
#[derive(Debug, Clone, Default)]
pub struct TinyQlpv;

impl LpvModel for TinyQlpv {
    fn id(&self) -> &str {
        "tiny-qlpv"
    }

    fn dims(&self) -> ModelDims {
        ModelDims {
            n_x: 1,
            n_u: 1,
            n_rho: 1,
        }
    }

    fn rho(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn a_of_rho(&self, rho: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, rho[0])
    }

    fn b_of_rho(&self, _rho: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    fn stage_jacobian(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 1.0])
    }
}

/// Identifiers accepted by [`builtin`].
pub const BUILTIN_IDS: [&str; 4] = ["unicycle", "adip", "tiny-lti", "tiny-qlpv"];

/// Looks up a builtin model by identifier.
pub fn builtin(id: &str) -> Result<Arc<dyn LpvModel>> {
    match id {
        "unicycle" => Ok(Arc::new(Unicycle::default())),
        "adip" => Ok(Arc::new(Adip::default())),
        "tiny-lti" => Ok(Arc::new(TinyLti::default())),
        "tiny-qlpv" => Ok(Arc::new(TinyQlpv)),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn unicycle_rho_is_heading() {
        let m = Unicycle::default();
        let rho = m.eval_rho(&dv(&[1.0, 2.0, 0.0, PI, 0.0]), &dv(&[0.0, 0.0])).unwrap();
        assert_eq!(rho.as_slice(), &[PI]);
        let rho0 = m.eval_rho(&DVector::zeros(5), &DVector::zeros(2)).unwrap();
        assert_eq!(rho0[0], 0.0);
    }

    #[test]
    fn tiny_qlpv_rho_is_state() {
        let rho = TinyQlpv.eval_rho(&dv(&[0.5]), &dv(&[0.0])).unwrap();
        assert_eq!(rho[0], 0.5);
    }

    #[test]
    fn unicycle_moves_forward() {
        let m = Unicycle::default();
        let next = m
            .eval_dynamics(&dv(&[0.0, 0.0, 1.0, 0.0, 0.0]), &dv(&[0.0, 0.0]))
            .unwrap();
        let expected = [0.1, 0.0, 1.0, 0.0, 0.0];
        for (a, b) in next.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tiny_lti_step() {
        let next = TinyLti::default()
            .eval_dynamics(&dv(&[1.0]), &dv(&[-0.5]))
            .unwrap();
        assert_eq!(next[0], 0.5);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = Unicycle::default();
        let err = m.eval_rho(&dv(&[1.0, 2.0]), &dv(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 5,
                found: 2,
                ..
            }
        ));
        assert!(m.eval_dynamics(&DVector::zeros(5), &dv(&[1.0])).is_err());
    }

    #[test]
    fn euler_rejects_nonpositive_dt() {
        assert!(euler_discretize(Unicycle::field, 0.0).is_err());
        assert!(euler_discretize(Unicycle::field, -0.1).is_err());
        assert!(Unicycle::new(0.0).is_err());
        assert!(Adip::new(AdipParams::default(), -1.0).is_err());
    }

    #[test]
    fn euler_of_zero_field_is_identity() {
        let step = euler_discretize(|x: &DVector<f64>, _u: &DVector<f64>| x * 0.0, 0.3).unwrap();
        let x = dv(&[1.5, -2.0]);
        assert_eq!(step(&x, &dv(&[4.0])), x);
    }

    #[test]
    fn euler_of_integrator() {
        let step = euler_discretize(|_x: &DVector<f64>, u: &DVector<f64>| u.clone(), 0.01).unwrap();
        let next = step(&dv(&[2.0]), &dv(&[3.0]));
        assert!((next[0] - 2.03).abs() < 1e-15);
    }

    #[test]
    fn unicycle_matrices_match_euler_of_field() {
        let m = Unicycle::default();
        let rho = dv(&[0.7]);
        let a = m.a_of_rho(&rho);
        assert!((a[(0, 2)] - 0.1 * 0.7f64.cos()).abs() < 1e-15);
        assert!((a[(1, 2)] - 0.1 * 0.7f64.sin()).abs() < 1e-15);
        assert_eq!(a[(3, 4)], 0.1);

        let step = euler_discretize(Unicycle::field, 0.1).unwrap();
        let x = dv(&[0.3, -1.0, 0.8, 0.7, -0.2]);
        let u = dv(&[0.1, 0.4]);
        assert!((step(&x, &u) - m.dynamics(&x, &u)).amax() < 1e-15);
    }

    #[test]
    fn adip_matrices_match_euler_of_field() {
        let m = Adip::default();
        let step = euler_discretize(|x: &DVector<f64>, u: &DVector<f64>| m.field(x, u), 0.01).unwrap();
        let x = dv(&[0.9, -0.3, 1.2, -2.5]);
        let u = dv(&[0.4]);
        assert!((step(&x, &u) - m.dynamics(&x, &u)).amax() < 1e-13);
    }

    #[test]
    fn unicycle_disturbance_matrix() {
        let m = Unicycle::default();
        let bd = m.b_d_tilde(&dv(&[1.0, PI / 2.0]));
        assert!((bd[(0, 0)] - 0.1).abs() < 1e-15);
        assert!(bd[(1, 0)].abs() < 1e-15);
        assert_eq!(&bd.as_slice()[2..], &[0.0, 0.0, 0.0]);

        let at = m.a_tilde(&dv(&[1.0, 0.0]));
        assert!((at[(1, 3)] - 0.1).abs() < 1e-15);
        assert_eq!(at[(0, 3)], 0.0);
    }

    #[test]
    fn origin_is_equilibrium() {
        for id in BUILTIN_IDS {
            let m = builtin(id).unwrap();
            let d = m.dims();
            let next = m
                .eval_dynamics(&DVector::zeros(d.n_x), &DVector::zeros(d.n_u))
                .unwrap();
            assert!(next.iter().all(|v| *v == 0.0), "{id}");
        }
    }

    #[test]
    fn sinc_is_smooth_at_zero() {
        assert_eq!(sinc(0.0), 1.0);
        assert!((sinc(1e-5) - (1e-5f64).sin() / 1e-5).abs() < 1e-15);
        assert!((sinc(0.5) - 0.5f64.sin() / 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_model() {
        assert_eq!(
            builtin("cartpole").unwrap_err(),
            Error::UnknownModel("cartpole".into())
        );
    }

    #[test]
    fn model_dims_must_be_positive() {
        assert!(ModelDims::new(0, 1, 1).is_err());
        assert_eq!(ModelDims::new(5, 2, 1).unwrap().n_xu(), 7);
    }
}
