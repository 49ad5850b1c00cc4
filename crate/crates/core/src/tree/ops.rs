//! Operator and terminal sets for activation trees, with their safeguarded
//! elementwise semantics and derivatives.

use std::fmt;

/// Every operator output is clamped to this magnitude, so evaluation at
/// finite inputs always stays finite.
pub const OUTPUT_CLAMP: f64 = 1e12;
/// Input clamp applied before `exp`.
pub const EXP_CLAMP: f64 = 20.0;
/// Guard added to `|u|` inside `log` and to the denominator of division.
pub const GUARD: f64 = 1e-6;
pub const LEAKY_SLOPE: f64 = 0.01;
pub const ELU_ALPHA: f64 = 1.0;

/// The fixed constant terminal pool.
pub const CONSTANTS: [f64; 9] = [0.0, 0.1, -0.1, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    X,
    M,
    C,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::X, Channel::M, Channel::C];

    pub fn token(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::M => "m",
            Channel::C => "c",
        }
    }

    pub fn from_token(s: &str) -> Option<Channel> {
        match s {
            "x" => Some(Channel::X),
            "m" => Some(Channel::M),
            "c" => Some(Channel::C),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Identity,
    Negate,
    Abs,
    Square,
    Cube,
    Sqrt,
    Exp,
    LogAbs,
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu,
    Elu,
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Min,
}

fn clamp_out(raw: f64) -> f64 {
    raw.clamp(-OUTPUT_CLAMP, OUTPUT_CLAMP)
}

fn clamped(raw: f64) -> bool {
    !(raw.abs() <= OUTPUT_CLAMP)
}

fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 16] = [
        UnaryOp::Identity,
        UnaryOp::Negate,
        UnaryOp::Abs,
        UnaryOp::Square,
        UnaryOp::Cube,
        UnaryOp::Sqrt,
        UnaryOp::Exp,
        UnaryOp::LogAbs,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tanh,
        UnaryOp::Sigmoid,
        UnaryOp::Relu,
        UnaryOp::LeakyRelu,
        UnaryOp::Elu,
        UnaryOp::Softplus,
    ];

    pub fn token(self) -> &'static str {
        match self {
            UnaryOp::Identity => "id",
            UnaryOp::Negate => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Square => "square",
            UnaryOp::Cube => "cube",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::LogAbs => "log",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::Relu => "relu",
            UnaryOp::LeakyRelu => "leaky_relu",
            UnaryOp::Elu => "elu",
            UnaryOp::Softplus => "softplus",
        }
    }

    pub fn from_token(s: &str) -> Option<UnaryOp> {
        UnaryOp::ALL.into_iter().find(|op| op.token() == s)
    }

    fn raw(self, u: f64) -> f64 {
        match self {
            UnaryOp::Identity => u,
            UnaryOp::Negate => -u,
            UnaryOp::Abs => u.abs(),
            UnaryOp::Square => u * u,
            UnaryOp::Cube => u * u * u,
            UnaryOp::Sqrt => u.abs().sqrt(),
            UnaryOp::Exp => u.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
            UnaryOp::LogAbs => (u.abs() + GUARD).ln(),
            UnaryOp::Sin => u.sin(),
            UnaryOp::Cos => u.cos(),
            UnaryOp::Tanh => u.tanh(),
            UnaryOp::Sigmoid => sigmoid(u),
            UnaryOp::Relu => u.max(0.0),
            UnaryOp::LeakyRelu => {
                if u > 0.0 {
                    u
                } else {
                    LEAKY_SLOPE * u
                }
            }
            UnaryOp::Elu => {
                if u > 0.0 {
                    u
                } else {
                    ELU_ALPHA * u.exp_m1()
                }
            }
            UnaryOp::Softplus => softplus(u),
        }
    }

    fn raw_derivative(self, u: f64) -> f64 {
        match self {
            UnaryOp::Identity => 1.0,
            UnaryOp::Negate => -1.0,
            UnaryOp::Abs => sign(u),
            UnaryOp::Square => 2.0 * u,
            UnaryOp::Cube => 3.0 * u * u,
            UnaryOp::Sqrt => {
                if u == 0.0 {
                    0.0
                } else {
                    sign(u) * 0.5 / u.abs().sqrt()
                }
            }
            UnaryOp::Exp => {
                if (-EXP_CLAMP..=EXP_CLAMP).contains(&u) {
                    u.exp()
                } else {
                    0.0
                }
            }
            UnaryOp::LogAbs => sign(u) / (u.abs() + GUARD),
            UnaryOp::Sin => u.cos(),
            UnaryOp::Cos => -u.sin(),
            UnaryOp::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            UnaryOp::Sigmoid => {
                let s = sigmoid(u);
                s * (1.0 - s)
            }
            UnaryOp::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryOp::LeakyRelu => {
                if u > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            UnaryOp::Elu => {
                if u > 0.0 {
                    1.0
                } else {
                    ELU_ALPHA * u.exp()
                }
            }
            UnaryOp::Softplus => sigmoid(u),
        }
    }

    pub fn apply(self, u: f64) -> f64 {
        clamp_out(self.raw(u))
    }

    /// Derivative of [`UnaryOp::apply`], zero where the output clamp is active.
    pub fn derivative(self, u: f64) -> f64 {
        if clamped(self.raw(u)) {
            0.0
        } else {
            self.raw_derivative(u)
        }
    }

    /// Value and derivative in one pass.
    pub fn apply_with_derivative(self, u: f64) -> (f64, f64) {
        let raw = self.raw(u);
        if clamped(raw) {
            (clamp_out(raw), 0.0)
        } else {
            (raw, self.raw_derivative(u))
        }
    }

    /// Distance from `u` to the nearest point where this operator is not
    /// smooth.
    pub fn kink_distance(self, u: f64) -> f64 {
        let clamp_margin = (OUTPUT_CLAMP - self.raw(u).abs()).abs();
        let own = match self {
            UnaryOp::Abs
            | UnaryOp::Relu
            | UnaryOp::LeakyRelu
            | UnaryOp::Elu
            | UnaryOp::Sqrt
            | UnaryOp::LogAbs => u.abs(),
            UnaryOp::Exp => (u - EXP_CLAMP).abs().min((u + EXP_CLAMP).abs()),
            _ => f64::INFINITY,
        };
        own.min(clamp_margin)
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 6] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Max,
        BinaryOp::Min,
    ];

    pub fn token(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Max => "max",
            BinaryOp::Min => "min",
        }
    }

    pub fn from_token(s: &str) -> Option<BinaryOp> {
        BinaryOp::ALL.into_iter().find(|op| op.token() == s)
    }

    /// Denominator of protected division: `v + sign(v)·GUARD`, `sign(0) = +1`.
    fn guarded(v: f64) -> f64 {
        if v >= 0.0 {
            v + GUARD
        } else {
            v - GUARD
        }
    }

    fn raw(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / BinaryOp::guarded(b),
            BinaryOp::Max => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
            BinaryOp::Min => {
                if a <= b {
                    a
                } else {
                    b
                }
            }
        }
    }

    fn raw_partials(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            BinaryOp::Add => (1.0, 1.0),
            BinaryOp::Sub => (1.0, -1.0),
            BinaryOp::Mul => (b, a),
            BinaryOp::Div => {
                let d = BinaryOp::guarded(b);
                (1.0 / d, -a / (d * d))
            }
            BinaryOp::Max => {
                if a >= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            BinaryOp::Min => {
                if a <= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        clamp_out(self.raw(a, b))
    }

    /// Partial derivatives of [`BinaryOp::apply`] with respect to both
    /// operands. Ties in `max`/`min` credit the left operand.
    pub fn partials(self, a: f64, b: f64) -> (f64, f64) {
        if clamped(self.raw(a, b)) {
            (0.0, 0.0)
        } else {
            self.raw_partials(a, b)
        }
    }

    pub fn apply_with_partials(self, a: f64, b: f64) -> (f64, f64, f64) {
        let raw = self.raw(a, b);
        if clamped(raw) {
            (clamp_out(raw), 0.0, 0.0)
        } else {
            let (da, db) = self.raw_partials(a, b);
            (raw, da, db)
        }
    }

    pub fn kink_distance(self, a: f64, b: f64) -> f64 {
        let clamp_margin = (OUTPUT_CLAMP - self.raw(a, b).abs()).abs();
        let own = match self {
            BinaryOp::Max | BinaryOp::Min => (a - b).abs(),
            BinaryOp::Div => b.abs(),
            _ => f64::INFINITY,
        };
        own.min(clamp_margin)
    }
}

impl fmt::Display for UnaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for BinaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safeguards() {
        assert_eq!(UnaryOp::Sqrt.apply(-4.0), 2.0);
        assert!((UnaryOp::LogAbs.apply(0.0) - (1e-6f64).ln()).abs() < 1e-12);
        assert_eq!(UnaryOp::Exp.apply(100.0), 20f64.exp());
        assert_eq!(UnaryOp::Cube.apply(1e5), OUTPUT_CLAMP);
        assert_eq!(UnaryOp::Square.apply(-1e7), OUTPUT_CLAMP);
        assert_eq!(BinaryOp::Div.apply(1.0, 0.0), 1.0 / 1e-6);
        assert_eq!(BinaryOp::Div.apply(1.0, -0.0), 1.0 / 1e-6);
        assert_eq!(BinaryOp::Div.apply(3.0, -1.0), 3.0 / (-1.0 - 1e-6));
        assert_eq!(BinaryOp::Mul.apply(1e300, 1e300), OUTPUT_CLAMP);
    }

    #[test]
    fn subgradient_conventions() {
        assert_eq!(UnaryOp::Relu.derivative(0.0), 0.0);
        assert_eq!(UnaryOp::Abs.derivative(0.0), 0.0);
        assert_eq!(UnaryOp::LeakyRelu.derivative(0.0), LEAKY_SLOPE);
        assert_eq!(UnaryOp::Elu.derivative(0.0), 1.0);
        assert_eq!(BinaryOp::Max.partials(1.0, 1.0), (1.0, 0.0));
        assert_eq!(BinaryOp::Min.partials(1.0, 1.0), (1.0, 0.0));
        assert_eq!(UnaryOp::Exp.derivative(30.0), 0.0);
        assert_eq!(UnaryOp::Cube.derivative(1e5), 0.0);
    }

    #[test]
    fn stable_sigmoid_and_softplus() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn tokens_round_trip() {
        for op in UnaryOp::ALL {
            assert_eq!(UnaryOp::from_token(op.token()), Some(op));
        }
        for op in BinaryOp::ALL {
            assert_eq!(BinaryOp::from_token(op.token()), Some(op));
        }
    }
}
