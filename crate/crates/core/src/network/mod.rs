//! Multilayer perceptrons whose hidden units see value, missingness and
//! confidence channels.

pub mod activation;
pub mod channelprop;
pub mod mlp;

pub use activation::{Activation, Baseline};
pub use channelprop::{channelprop, uniform_broadcast, ThreeChannelState};
pub use mlp::{train, ChannelMode, Forward, Horizon, Layer, Mlp, MlpConfig, TrainedModel};
