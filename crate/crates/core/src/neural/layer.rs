use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `a = act(z)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

/// Fully connected layer `act(W v + b)` with a row-major `out x in` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) in_width: usize,
    pub(crate) out_width: usize,
    pub activation: Activation,
    pub trainable: bool,
}

impl DenseLayer {
    pub fn new(
        weights: Vec<f64>,
        bias: Vec<f64>,
        in_width: usize,
        activation: Activation,
    ) -> Result<Self> {
        let out_width = bias.len();
        if in_width == 0 || out_width == 0 {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if weights.len() != in_width * out_width {
            return Err(Error::ShapeMismatch {
                expected: in_width * out_width,
                actual: weights.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("layer parameters must be finite".into()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            in_width,
            out_width,
            activation,
            trainable: true,
        })
    }

    pub fn zeros(in_width: usize, out_width: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: vec![0.0; in_width * out_width],
            bias: vec![0.0; out_width],
            in_width,
            out_width,
            activation,
            trainable: true,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.in_width)
                .zip(&self.bias)
                .map(|(row, b)| {
                    let z: f64 = row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + b;
                    self.activation.apply(z)
                }),
        );
    }
}
