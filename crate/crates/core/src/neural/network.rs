use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{Activation, DenseLayer};
use crate::error::{Error, Result};
use crate::signal::SignalSeries;

/// Number of dense layers in the two-stage autoencoder.
pub const NUM_LAYERS: usize = 4;

/// Role of each layer in the autoencoder, numbered 1 to 4 in forward order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    /// `y -> x~`, the learned restitution used for calibration.
    ObservationInverse = 1,
    /// `x~ -> e~`
    EnvironmentInverse = 2,
    /// `e~ -> x^`
    EnvironmentForward = 3,
    /// `x^ -> y~`
    ObservationForward = 4,
}

impl Stage {
    pub const ALL: [Stage; NUM_LAYERS] = [
        Stage::ObservationInverse,
        Stage::EnvironmentInverse,
        Stage::EnvironmentForward,
        Stage::ObservationForward,
    ];

    /// The two layers modelling the environment response.
    pub const ENVIRONMENT: [Stage; 2] = [Stage::EnvironmentInverse, Stage::EnvironmentForward];

    pub fn number(self) -> usize {
        self as usize
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_number(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Stage::ObservationInverse),
            2 => Ok(Stage::EnvironmentInverse),
            3 => Ok(Stage::EnvironmentForward),
            4 => Ok(Stage::ObservationForward),
            _ => Err(Error::InvalidArgument(format!("layer index {n} is not in 1..=4"))),
        }
    }
}

/// Intermediate signals of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutputs {
    pub x_tilde: Vec<f64>,
    pub e_tilde: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub y_tilde: Vec<f64>,
}

impl StageOutputs {
    fn with_width(w: usize) -> Self {
        StageOutputs {
            x_tilde: Vec::with_capacity(w),
            e_tilde: Vec::with_capacity(w),
            x_hat: Vec::with_capacity(w),
            y_tilde: Vec::with_capacity(w),
        }
    }

    pub(crate) fn layer_output(&self, i: usize) -> &[f64] {
        match i {
            0 => &self.x_tilde,
            1 => &self.e_tilde,
            2 => &self.x_hat,
            _ => &self.y_tilde,
        }
    }
}

/// Four equal-width dense layers: `y -> x~ -> e~ -> x^ -> y~`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: [DenseLayer; NUM_LAYERS],
    signal_scale: f64,
}

impl MlpNetwork {
    pub fn from_layers(layers: [DenseLayer; NUM_LAYERS]) -> Result<Self> {
        let w = layers[0].in_width();
        for l in &layers {
            if l.in_width() != w || l.out_width() != w {
                return Err(Error::ShapeMismatch {
                    expected: w,
                    actual: if l.in_width() != w { l.in_width() } else { l.out_width() },
                });
            }
        }
        Ok(MlpNetwork {
            layers,
            signal_scale: 1.0,
        })
    }

    pub fn width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn layer(&self, stage: Stage) -> &DenseLayer {
        &self.layers[stage.index()]
    }

    pub fn layer_mut(&mut self, stage: Stage) -> &mut DenseLayer {
        &mut self.layers[stage.index()]
    }

    pub fn layers(&self) -> &[DenseLayer; NUM_LAYERS] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer; NUM_LAYERS] {
        &mut self.layers
    }

    /// Amplitude that maps physical units to network units (`network = physical / scale`).
    pub fn signal_scale(&self) -> f64 {
        self.signal_scale
    }

    pub fn set_signal_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("signal scale must be > 0, got {scale}")));
        }
        self.signal_scale = scale;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_parameters).sum()
    }

    pub fn set_trainable(&mut self, stage: Stage, trainable: bool) {
        self.layers[stage.index()].trainable = trainable;
    }

    /// Runs all four stages on one window (network units).
    pub fn forward(&self, y_window: &[f64]) -> Result<StageOutputs> {
        let w = self.width();
        if y_window.len() != w {
            return Err(Error::ShapeMismatch {
                expected: w,
                actual: y_window.len(),
            });
        }
        let mut out = StageOutputs::with_width(w);
        self.forward_unchecked(y_window, &mut out);
        Ok(out)
    }

    pub(crate) fn forward_unchecked(&self, y: &[f64], out: &mut StageOutputs) {
        let [l1, l2, l3, l4] = &self.layers;
        l1.forward_into(y, &mut out.x_tilde);
        l2.forward_into(&out.x_tilde, &mut out.e_tilde);
        l3.forward_into(&out.e_tilde, &mut out.x_hat);
        l4.forward_into(&out.x_hat, &mut out.y_tilde);
    }

    /// Stage 1 only: the learned restitution `y -> x~` (network units).
    pub fn restitute(&self, y_window: &[f64]) -> Result<Vec<f64>> {
        let l1 = &self.layers[0];
        if y_window.len() != l1.in_width() {
            return Err(Error::ShapeMismatch {
                expected: l1.in_width(),
                actual: y_window.len(),
            });
        }
        let mut out = Vec::with_capacity(l1.out_width());
        l1.forward_into(y_window, &mut out);
        Ok(out)
    }
}

/// Uniform `(-sqrt(6 / 2W), sqrt(6 / 2W))` weights, zero biases, tanh on
/// layers 1 to 3 and a linear output layer.
pub fn init_network(window_length: usize, seed: u64) -> Result<MlpNetwork> {
    if window_length == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    let w = window_length;
    let bound = init_bound(w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |activation| {
        let weights = (0..w * w).map(|_| rng.random_range(-bound..bound)).collect();
        DenseLayer::new(weights, vec![0.0; w], w, activation)
    };
    let layers = [
        layer(Activation::Tanh)?,
        layer(Activation::Tanh)?,
        layer(Activation::Tanh)?,
        layer(Activation::Linear)?,
    ];
    MlpNetwork::from_layers(layers)
}

pub fn init_bound(window_length: usize) -> f64 {
    (6.0 / (2.0 * window_length as f64)).sqrt()
}

/// Cuts a series into consecutive non-overlapping windows scaled into network
/// units. The tail shorter than a window is zero-padded.
pub fn to_windows(series: &[f64], window_length: usize, scale: f64) -> Vec<Vec<f64>> {
    series
        .chunks(window_length)
        .map(|chunk| {
            let mut w: Vec<f64> = chunk.iter().map(|v| v / scale).collect();
            w.resize(window_length, 0.0);
            w
        })
        .collect()
}

/// Applies stage 1 window by window and stitches the result back to the
/// input length, in physical units.
pub fn calibrate(net: &MlpNetwork, y: &SignalSeries, window_length: usize) -> Result<SignalSeries> {
    if window_length != net.width() {
        return Err(Error::ShapeMismatch {
            expected: net.width(),
            actual: window_length,
        });
    }
    let scale = net.signal_scale();
    let mut out = Vec::with_capacity(y.len());
    for window in to_windows(y, window_length, scale) {
        out.extend(net.restitute(&window)?.into_iter().map(|v| v * scale));
    }
    out.truncate(y.len());
    SignalSeries::new(out)
}
