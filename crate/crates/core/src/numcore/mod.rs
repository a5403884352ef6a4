//! Dense tensors, a reverse-mode tape, Adam, a seeded RNG and a
//! finite-difference gradient checker.

mod gradcheck;
mod layers;
mod optim;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{
    grad_check, grad_check_params, noise_level, relative_error, Coordinate, GradReport,
};
pub use layers::{leaky_relu, linear_forward, uniform_init, Linear};
pub use optim::{clip_grad_norm, AdamConfig, AdamState};
pub use rng::SeededRng;
pub use tape::{Gradients, Real, Tape, Var};
pub use tensor::{DiffTensor, ParamId, ParamStore};
