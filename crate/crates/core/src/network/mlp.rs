use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::channelprop::{channelprop, uniform_broadcast, ThreeChannelState};
use crate::error::{Error, Result};
use crate::numeric::tape::softmax_rows;
use crate::numeric::{adam_step, AdamState, Matrix, RngStream, Tape, Var};

/// Training budget: epoch cap and early-stopping patience.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub max_epochs: usize,
    pub patience: usize,
}

impl Horizon {
    /// Used while scoring candidates during search.
    pub const SHORT: Horizon = Horizon {
        max_epochs: 30,
        patience: 5,
    };
    /// Used for final training and evaluation.
    pub const FULL: Horizon = Horizon {
        max_epochs: 100,
        patience: 10,
    };
}

/// How hidden layers obtain their missingness and confidence inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Route the previous layer's channels through `|W|`.
    #[default]
    Propagate,
    /// Every hidden unit sees the per-sample mean of the input channels.
    UniformBroadcast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub channelprop_epsilon: f64,
    pub short: Horizon,
    pub full: Horizon,
    /// Let gradients flow through the propagated channels into `W`.
    pub differentiate_channels: bool,
    pub channel_mode: ChannelMode,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_widths: vec![64, 64],
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            batch_size: 32,
            channelprop_epsilon: 1e-8,
            short: Horizon::SHORT,
            full: Horizon::FULL,
            differentiate_channels: false,
            channel_mode: ChannelMode::Propagate,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden widths must be non-empty and positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.channelprop_epsilon > 0.0) {
            return Err(Error::Config("channelprop epsilon must be positive".into()));
        }
        for h in [self.short, self.full] {
            if h.max_epochs == 0 || h.patience == 0 {
                return Err(Error::Config("horizon epochs and patience must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Affine map with weights `out × in` and bias `1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Matrix,
}

/// Hidden-layer states and output logits of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub hidden: Vec<ThreeChannelState>,
    pub logits: Matrix,
}

#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    epsilon: f64,
    mode: ChannelMode,
}

fn glorot(rng: &mut RngStream, fan_out: usize, fan_in: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in).map(|_| rng.uniform(-limit, limit)).collect();
    Matrix::from_vec_unchecked(fan_out, fan_in, data)
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(
        input_dim: usize,
        n_classes: usize,
        config: &MlpConfig,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Result<Mlp> {
        config.validate()?;
        if input_dim == 0 || n_classes < 2 {
            return Err(Error::Dimension(format!(
                "network needs inputs and at least two classes, got {input_dim} and {n_classes}"
            )));
        }
        let mut widths = vec![input_dim];
        widths.extend(&config.hidden_widths);
        widths.push(n_classes);
        let layers = widths
            .windows(2)
            .map(|p| Layer {
                weights: glorot(rng, p[1], p[0]),
                bias: Matrix::zeros(1, p[1]),
            })
            .collect();
        Ok(Mlp {
            layers,
            activation,
            epsilon: config.channelprop_epsilon,
            mode: config.channel_mode,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation, epsilon: f64, mode: ChannelMode) -> Result<Mlp> {
        if layers.len() < 2 {
            return Err(Error::Dimension("network needs a hidden and an output layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.weights.rows()) {
                return Err(Error::Dimension(format!("bias of layer {i}")));
            }
            if i > 0 && layers[i - 1].weights.rows() != l.weights.cols() {
                return Err(Error::Dimension(format!("layer {i} input width")));
            }
        }
        Ok(Mlp {
            layers,
            activation,
            epsilon,
            mode,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.rows())
    }

    fn hidden_channels(
        &self,
        layer: usize,
        prev: &ThreeChannelState,
        input: &ThreeChannelState,
    ) -> Result<(Matrix, Matrix)> {
        let w = &self.layers[layer].weights;
        match self.mode {
            ChannelMode::Propagate => channelprop(w, &prev.missingness, &prev.confidence, self.epsilon),
            ChannelMode::UniformBroadcast => Ok(uniform_broadcast(&input.missingness, &input.confidence, w.rows())),
        }
    }

    pub fn forward(&self, input: &ThreeChannelState) -> Result<Forward> {
        self.forward_with(input, None)
    }

    /// Forward pass with the hidden-layer `(m, c)` pairs supplied instead
    /// of derived from the weights.
    pub fn forward_frozen(&self, input: &ThreeChannelState, channels: &[(Matrix, Matrix)]) -> Result<Forward> {
        if channels.len() + 1 != self.layers.len() {
            return Err(Error::Dimension(format!(
                "{} channel pairs for {} hidden layers",
                channels.len(),
                self.layers.len() - 1
            )));
        }
        self.forward_with(input, Some(channels))
    }

    fn forward_with(&self, input: &ThreeChannelState, frozen: Option<&[(Matrix, Matrix)]>) -> Result<Forward> {
        if input.width() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input width {} for network expecting {}",
                input.width(),
                self.input_dim()
            )));
        }
        let hidden_count = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(hidden_count);
        let mut prev = input.clone();
        for l in 0..hidden_count {
            let layer = &self.layers[l];
            let z = prev.values.matmul_transpose_b(&layer.weights)?.add_row(&layer.bias)?;
            let (m, c) = match frozen {
                Some(ch) => ch[l].clone(),
                None => self.hidden_channels(l, &prev, input)?,
            };
            z.same_shape(&m, "hidden missingness")?;
            z.same_shape(&c, "hidden confidence")?;
            let values = self.activation.eval(z.as_slice(), m.as_slice(), c.as_slice())?;
            let values = Matrix::from_vec(z.rows(), z.cols(), values)?;
            let state = ThreeChannelState {
                values,
                missingness: m,
                confidence: c,
            };
            hidden.push(state.clone());
            prev = state;
        }
        let out = &self.layers[hidden_count];
        let logits = prev.values.matmul_transpose_b(&out.weights)?.add_row(&out.bias)?;
        Ok(Forward { hidden, logits })
    }

    pub fn predict_proba(&self, input: &ThreeChannelState) -> Result<Matrix> {
        Ok(softmax_rows(&self.forward(input)?.logits))
    }

    pub fn predict(&self, input: &ThreeChannelState) -> Result<Vec<usize>> {
        Ok(self.forward(input)?.logits.argmax_rows())
    }

    pub fn accuracy(&self, input: &ThreeChannelState, labels: &[usize]) -> Result<f64> {
        if labels.len() != input.rows() {
            return Err(Error::Dimension("labels vs rows".into()));
        }
        if labels.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(input)?;
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Mean cross-entropy, computed without the tape.
    pub fn loss(&self, input: &ThreeChannelState, labels: &[usize]) -> Result<f64> {
        let probs = self.predict_proba(input)?;
        if labels.len() != probs.rows() {
            return Err(Error::Dimension("labels vs rows".into()));
        }
        let total: f64 = labels.iter().enumerate().map(|(i, &y)| -probs.get(i, y).ln()).sum();
        Ok(total / labels.len().max(1) as f64)
    }

    /// Records the batch loss on `tape`; returns the loss node and the
    /// parameter nodes as `(weights, bias)` per layer.
    ///
    /// With `differentiate_channels` off, propagated channels enter the tape
    /// as constants computed from the current weights.
    pub fn record_loss(
        &self,
        tape: &mut Tape,
        input: &ThreeChannelState,
        labels: &[usize],
        differentiate_channels: bool,
    ) -> Result<(Var, Vec<(Var, Var)>)> {
        let params: Vec<(Var, Var)> = self
            .layers
            .iter()
            .map(|l| (tape.parameter(l.weights.clone()), tape.parameter(l.bias.clone())))
            .collect();
        let mut h = tape.constant(input.values.clone());
        let mut m_var = tape.constant(input.missingness.clone());
        let mut c_var = tape.constant(input.confidence.clone());
        let mut prev_m = input.missingness.clone();
        let mut prev_c = input.confidence.clone();
        let hidden_count = self.layers.len() - 1;
        for (l, &(w, b)) in params.iter().take(hidden_count).enumerate() {
            let z = tape.matmul_transpose_b(h, w)?;
            let z = tape.add_bias(z, b)?;
            let (m_out, c_out) = match (self.mode, differentiate_channels) {
                (ChannelMode::Propagate, true) => {
                    let o_in = tape.one_minus(m_var)?;
                    let o_mix = tape.row_mix(w, o_in, self.epsilon)?;
                    let o_out = tape.clip01(o_mix)?;
                    let m_out = tape.one_minus(o_out)?;
                    let c_mix = tape.row_mix(w, c_var, self.epsilon)?;
                    let c_out = tape.clip01(c_mix)?;
                    (m_out, c_out)
                }
                (ChannelMode::Propagate, false) => {
                    let (m, c) = channelprop(&self.layers[l].weights, &prev_m, &prev_c, self.epsilon)?;
                    (tape.constant(m), tape.constant(c))
                }
                (ChannelMode::UniformBroadcast, _) => {
                    let (m, c) =
                        uniform_broadcast(&input.missingness, &input.confidence, self.layers[l].weights.rows());
                    (tape.constant(m), tape.constant(c))
                }
            };
            prev_m = tape.value(m_out).clone();
            prev_c = tape.value(c_out).clone();
            h = tape.activation(&self.activation, z, m_out, c_out)?;
            m_var = m_out;
            c_var = c_out;
        }
        let (w, b) = params[hidden_count];
        let logits = tape.matmul_transpose_b(h, w)?;
        let logits = tape.add_bias(logits, b)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        Ok((loss, params))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.as_slice().len())
            .sum()
    }

    /// Plain-text dump: a header line, then per layer its shape, one line
    /// per weight row and one bias line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "activation {}", self.activation);
        let _ = writeln!(out, "channel_mode {:?}", self.mode);
        let _ = writeln!(out, "channelprop_epsilon {:e}", self.epsilon);
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "layer {i} {}x{}", l.weights.rows(), l.weights.cols());
            for r in 0..l.weights.rows() {
                let row: Vec<String> = l.weights.row(r).iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(out, "w {}", row.join(" "));
            }
            let bias: Vec<String> = l.bias.as_slice().iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "b {}", bias.join(" "));
        }
        out
    }
}

/// Outcome of [`train`]: the network at its best validation epoch.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub mlp: Mlp,
    pub best_val_accuracy: f64,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

fn as_divergence(e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Divergence(what),
        other => other,
    }
}

/// Adam on mini-batches with early stopping on validation accuracy. The
/// weights of the first epoch reaching the best accuracy are restored.
///
/// Numerical blow-up surfaces as [`Error::Divergence`].
#[allow(clippy::too_many_arguments)]
pub fn train(
    config: &MlpConfig,
    activation: Activation,
    train_set: (&ThreeChannelState, &[usize]),
    val_set: (&ThreeChannelState, &[usize]),
    n_classes: usize,
    horizon: Horizon,
    rng: &mut RngStream,
) -> Result<TrainedModel> {
    let (x_train, y_train) = train_set;
    let (x_val, y_val) = val_set;
    if x_train.rows() != y_train.len() || x_val.rows() != y_val.len() {
        return Err(Error::Dimension("labels vs rows".into()));
    }
    if y_train.is_empty() {
        return Err(Error::Dimension("empty training split".into()));
    }
    if horizon.max_epochs == 0 || horizon.patience == 0 {
        return Err(Error::Config("horizon epochs and patience must be positive".into()));
    }
    let mut init_rng = rng.derive("init");
    let mut order_rng = rng.derive("batches");
    let mut mlp = Mlp::init(x_train.width(), n_classes, config, activation, &mut init_rng)?;
    let mut states: Vec<(AdamState, AdamState)> = mlp
        .layers
        .iter()
        .map(|l| (AdamState::for_matrix(&l.weights), AdamState::for_matrix(&l.bias)))
        .collect();

    let mut best = (f64::NEG_INFINITY, 0usize, mlp.layers.clone());
    let mut since_best = 0;
    let mut step: u64 = 0;
    let mut epochs_run = 0;
    let mut order: Vec<usize> = (0..y_train.len()).collect();
    for epoch in 1..=horizon.max_epochs {
        epochs_run = epoch;
        order_rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch = x_train.select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| y_train[i]).collect();
            let mut tape = Tape::new();
            let (loss, params) = mlp
                .record_loss(&mut tape, &batch, &labels, config.differentiate_channels)
                .map_err(as_divergence)?;
            let grads = tape.backward(loss)?;
            step += 1;
            for ((layer, (sw, sb)), (w, b)) in mlp.layers.iter_mut().zip(states.iter_mut()).zip(params) {
                adam_step(&mut layer.weights, &grads.wrt(w), sw, step, config.learning_rate, config.weight_decay)?;
                adam_step(&mut layer.bias, &grads.wrt(b), sb, step, config.learning_rate, config.weight_decay)?;
            }
        }
        let acc = mlp.accuracy(x_val, y_val).map_err(as_divergence)?;
        if acc > best.0 {
            best = (acc, epoch, mlp.layers.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= horizon.patience {
                break;
            }
        }
    }
    let stopped_early = epochs_run < horizon.max_epochs;
    let (best_val_accuracy, best_epoch, layers) = best;
    mlp.layers = layers;
    Ok(TrainedModel {
        mlp,
        best_val_accuracy,
        best_epoch,
        epochs_run,
        stopped_early,
    })
}
