//! Dense linear algebra, seeded random streams, Adam, and a small
//! reverse-mode tape.

pub mod adam;
pub mod finite_diff;
pub mod matrix;
pub mod rng;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use finite_diff::finite_difference_gradient;
pub use matrix::Matrix;
pub use rng::RngStream;
pub use tape::{ChannelActivation, Gradients, Tape, Var};
