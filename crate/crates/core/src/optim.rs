//! Full-rank update rules: gradient descent, momentum and Adam.
//!
//! Every rule produces an additive update `δ` for one variable; the caller
//! applies `x ← x + δ`. The same rules drive both the weight matrix directly
//! and the low-rank factors in [`crate::lowrank`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Smallest divisor magnitude allowed in [`AdamBiasMode::PaperLiteral`].
pub const LITERAL_DIVISOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "gd", alias = "gradient_descent")]
    GradientDescent,
    #[serde(rename = "momentum")]
    Momentum,
    #[serde(rename = "adam")]
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [Self::GradientDescent, Self::Momentum, Self::Adam];

    /// Accumulators kept per tracked entry.
    pub fn state_multiplier(self) -> usize {
        match self {
            Self::GradientDescent => 0,
            Self::Momentum => 1,
            Self::Adam => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::GradientDescent => "gd",
            Self::Momentum => "momentum",
            Self::Adam => "adam",
        }
    }
}

/// Which Adam step formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdamBiasMode {
    /// `δ = −λ · m̂ ⊘ (√ŝ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `ŝ = s/(1−β₂ᵗ)`.
    #[default]
    Standard,
    /// `δ = −λ · √(1−β₁ᵗ)/(1−β₂ᵗ) · m ⊘ (√s − ε)`, with the divisor pushed
    /// away from zero to at least [`LITERAL_DIVISOR_FLOOR`] in magnitude.
    #[serde(rename = "paper", alias = "paper_literal")]
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum_coeff: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub adam_bias_mode: AdamBiasMode,
}

fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}
fn default_beta1() -> f64 {
    DEFAULT_BETA1
}
fn default_beta2() -> f64 {
    DEFAULT_BETA2
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl OptimizerSpec {
    /// Spec of the given kind with default coefficients.
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            momentum_coeff: DEFAULT_MOMENTUM,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            adam_bias_mode: AdamBiasMode::Standard,
        }
    }

    pub fn gradient_descent(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::GradientDescent, learning_rate)
    }

    pub fn momentum(learning_rate: f64, momentum_coeff: f64) -> Self {
        Self {
            momentum_coeff,
            ..Self::new(OptimizerKind::Momentum, learning_rate)
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn with_bias_mode(mut self, mode: AdamBiasMode) -> Self {
        self.adam_bias_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            learning_rate: lr,
            momentum_coeff: mu,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
            ..
        } = *self;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..=1.0).contains(&mu) {
            return Err(invalid(format!(
                "momentum coefficient must be in [0, 1], got {mu}"
            )));
        }
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(invalid(format!(
                "adam betas must be in [0, 1), got {b1}, {b2}"
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {eps}")));
        }
        Ok(())
    }

    /// Zero state for a `rows×cols` variable.
    pub fn init_state(&self, rows: usize, cols: usize) -> OptimizerState {
        let zeros = || Some(Matrix::zeros(rows, cols));
        let (velocity, first_moment, second_moment) = match self.kind {
            OptimizerKind::GradientDescent => (None, None, None),
            OptimizerKind::Momentum => (zeros(), None, None),
            OptimizerKind::Adam => (None, zeros(), zeros()),
        };
        OptimizerState {
            rows,
            cols,
            velocity,
            first_moment,
            second_moment,
            step: 0,
        }
    }

    /// Update for `grad`, advancing `state` in place.
    ///
    /// Shape and finiteness are checked before `state` is touched, so an
    /// error leaves it unchanged.
    pub fn apply(&self, state: &mut OptimizerState, grad: &Matrix) -> Result<UpdateDirection> {
        if grad.shape() != (state.rows, state.cols) {
            return Err(Error::DimensionMismatch {
                op: "optimizer update",
                left: (state.rows, state.cols),
                right: grad.shape(),
            });
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        state.step += 1;
        let lr = self.learning_rate;
        let delta = match self.kind {
            OptimizerKind::GradientDescent => grad.map(|g| -lr * g),
            OptimizerKind::Momentum => {
                let mu = self.momentum_coeff;
                let velocity = state
                    .velocity
                    .get_or_insert_with(|| Matrix::zeros(grad.rows(), grad.cols()));
                for (v, &g) in velocity.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                    *v = mu * *v - lr * g;
                }
                velocity.clone()
            }
            OptimizerKind::Adam => self.adam_delta(state, grad),
        };
        Ok(UpdateDirection { delta })
    }

    fn adam_delta(&self, state: &mut OptimizerState, grad: &Matrix) -> Matrix {
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let (rows, cols) = grad.shape();
        let m = state
            .first_moment
            .get_or_insert_with(|| Matrix::zeros(rows, cols));
        for (m, &g) in m.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *m = b1 * *m + (1.0 - b1) * g;
        }
        let s = state
            .second_moment
            .get_or_insert_with(|| Matrix::zeros(rows, cols));
        for (s, &g) in s.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *s = b2 * *s + (1.0 - b2) * g * g;
        }
        let m = state.first_moment.as_ref().expect("set above");
        let s = state.second_moment.as_ref().expect("set above");

        let t = state.step as i32;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        let data = m.as_slice().iter().zip(s.as_slice());
        let data: Vec<f64> = match self.adam_bias_mode {
            AdamBiasMode::Standard => data
                .map(|(&m, &s)| -lr * (m / bias1) / ((s / bias2).sqrt() + eps))
                .collect(),
            AdamBiasMode::PaperLiteral => {
                let factor = bias1.sqrt() / bias2;
                data.map(|(&m, &s)| {
                    let mut divisor = s.sqrt() - eps;
                    if divisor.abs() < LITERAL_DIVISOR_FLOOR {
                        divisor = LITERAL_DIVISOR_FLOOR.copysign(divisor);
                    }
                    -lr * factor * m / divisor
                })
                .collect()
            }
        };
        Matrix::from_vec(rows, cols, data).expect("shape preserved")
    }
}

/// Per-variable accumulators. Only the ones the optimizer kind needs are present.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    rows: usize,
    cols: usize,
    /// Momentum's previous update.
    pub velocity: Option<Matrix>,
    /// Adam first moment.
    pub first_moment: Option<Matrix>,
    /// Adam second moment (`s`, to keep it apart from the factor `V`).
    pub second_moment: Option<Matrix>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl OptimizerState {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Scalars held by the accumulators.
    pub fn slot_count(&self) -> usize {
        [&self.velocity, &self.first_moment, &self.second_moment]
            .into_iter()
            .flatten()
            .map(|m| m.rows() * m.cols())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDirection {
    pub delta: Matrix,
}

/// Value-in/value-out form of [`OptimizerSpec::apply`].
pub fn compute_delta(
    spec: &OptimizerSpec,
    state: &OptimizerState,
    grad: &Matrix,
) -> Result<(UpdateDirection, OptimizerState)> {
    let mut next = state.clone();
    let delta = spec.apply(&mut next, grad)?;
    Ok((delta, next))
}

/// Extra scalars an optimizer keeps for a `rows×cols` variable.
pub fn state_slot_count(kind: OptimizerKind, rows: usize, cols: usize) -> usize {
    kind.state_multiplier() * rows * cols
}
