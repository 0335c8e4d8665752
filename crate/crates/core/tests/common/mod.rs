//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DVector;
use qlmpc::model::BUILTIN_IDS;
use qlmpc::{builtin, DecisionVector, Horizon, KktPoint, LpvModel, StackedProblem, Weights};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..=half_width))
}

pub fn all_models() -> Vec<Arc<dyn LpvModel>> {
    BUILTIN_IDS.iter().map(|id| builtin(id).unwrap()).collect()
}

/// A problem on `model` with random diagonal weights in `[0.1, 10]`.
pub fn random_problem(rng: &mut ChaCha8Rng, model: Arc<dyn LpvModel>, horizon: usize) -> StackedProblem {
    let dims = model.dims();
    let mut diag = |n: usize| (0..n).map(|_| rng.random_range(0.1..=10.0)).collect::<Vec<_>>();
    let (q, r, p) = (diag(dims.n_x), diag(dims.n_u), diag(dims.n_x));
    StackedProblem::new(
        model,
        Horizon::new(horizon).unwrap(),
        Weights::diagonal(&q, &r, &p).unwrap(),
    )
    .unwrap()
}

pub fn random_y(rng: &mut ChaCha8Rng, prob: &StackedProblem, half_width: f64) -> DecisionVector {
    let layout = prob.layout();
    DecisionVector::new(layout, uniform_vec(rng, layout.len_y(), half_width)).unwrap()
}

pub fn random_z(rng: &mut ChaCha8Rng, prob: &StackedProblem, half_width: f64) -> KktPoint {
    let y = random_y(rng, prob, half_width);
    let lambda = uniform_vec(rng, prob.layout().len_lambda(), half_width);
    KktPoint::new(y, lambda).unwrap()
}
