use super::rng::SeededRng;
use super::tape::{Tape, Var};
use super::tensor::{DiffTensor, ParamId, ParamStore};
use crate::error::Result;

/// `W·x + b`. `x` may be a vector or a row batch.
pub fn linear_forward<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    x.linear(w, Some(b))
}

pub fn leaky_relu(x: Var<'_>, negative_slope: f64) -> Var<'_> {
    x.leaky_relu(negative_slope)
}

/// Uniform draw in `±1/√fan_in`.
pub fn uniform_init(rng: &mut SeededRng, shape: &[usize], fan_in: usize) -> DiffTensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
    DiffTensor::new(shape.to_vec(), values).expect("valid shape")
}

/// Affine layer stored in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            uniform_init(rng, &[out_dim, in_dim], in_dim),
        );
        let bias = store.add(format!("{name}.bias"), DiffTensor::zeros(&[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        linear_forward(x, w, b)
    }
}
