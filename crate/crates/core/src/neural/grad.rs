//! Composite reconstruction loss and its reverse-mode gradients.

use super::layer::DenseLayer;
use super::network::{MlpNetwork, StageOutputs, NUM_LAYERS};
use super::train::TrainConfig;
use crate::error::{Error, Result};

/// Loss terms for one window or an average over several.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    /// `MSE(x, x~)`, absent when no measurand is supplied.
    pub loss_x: Option<f64>,
    /// `MSE(y, y~)`
    pub loss_y: f64,
    /// `alpha * loss_x + beta * loss_y`
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// False for frozen layers: the values are exact but must not be applied.
    pub applicable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub(crate) fn zeros_like(net: &MlpNetwork) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights().len()],
                    bias: vec![0.0; l.bias().len()],
                    applicable: l.trainable,
                })
                .collect(),
        }
    }

    pub(crate) fn reset(&mut self) {
        for g in &mut self.layers {
            g.weights.iter_mut().for_each(|v| *v = 0.0);
            g.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.iter_mut().for_each(|v| *v *= factor);
            g.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias))
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64
}

/// Reusable buffers for one forward/backward pass.
pub(crate) struct Workspace {
    outputs: StageOutputs,
    upstream: Vec<f64>,
    delta: Vec<f64>,
}

impl Workspace {
    pub fn new(width: usize) -> Self {
        Workspace {
            outputs: StageOutputs {
                x_tilde: Vec::with_capacity(width),
                e_tilde: Vec::with_capacity(width),
                x_hat: Vec::with_capacity(width),
                y_tilde: Vec::with_capacity(width),
            },
            upstream: vec![0.0; width],
            delta: vec![0.0; width],
        }
    }
}

/// Forward pass plus gradient accumulation into `grads`. With `skip_frozen`
/// the parameter gradients of non-trainable layers are not accumulated;
/// the error signal still flows through them.
pub(crate) fn accumulate(
    net: &MlpNetwork,
    y: &[f64],
    x: Option<&[f64]>,
    cfg: &TrainConfig,
    grads: &mut Gradients,
    ws: &mut Workspace,
    skip_frozen: bool,
) -> LossComponents {
    net.forward_unchecked(y, &mut ws.outputs);
    let w = net.width() as f64;
    let out = &ws.outputs;

    let loss_y = mse(&out.y_tilde, y);
    let loss_x = x.map(|x| mse(&out.x_tilde, x));
    let total = cfg.beta * loss_y + loss_x.map_or(0.0, |lx| cfg.alpha * lx);

    // dL/dy~
    for (u, (p, t)) in ws.upstream.iter_mut().zip(out.y_tilde.iter().zip(y)) {
        *u = cfg.beta * 2.0 * (p - t) / w;
    }

    let layers: &[DenseLayer; NUM_LAYERS] = net.layers();
    for i in (0..NUM_LAYERS).rev() {
        let layer = &layers[i];
        if i == 0 {
            if let Some(x) = x {
                for (u, (p, t)) in ws.upstream.iter_mut().zip(out.x_tilde.iter().zip(x)) {
                    *u += cfg.alpha * 2.0 * (p - t) / w;
                }
            }
        }
        let a_out = out.layer_output(i);
        for ((d, u), a) in ws.delta.iter_mut().zip(&ws.upstream).zip(a_out) {
            *d = u * layer.activation.derivative_from_output(*a);
        }
        let a_in: &[f64] = if i == 0 { y } else { out.layer_output(i - 1) };
        if !(skip_frozen && !layer.trainable) {
            let g = &mut grads.layers[i];
            for (r, d) in ws.delta.iter().enumerate() {
                g.bias[r] += d;
                let row = &mut g.weights[r * layer.in_width()..(r + 1) * layer.in_width()];
                for (gw, a) in row.iter_mut().zip(a_in) {
                    *gw += d * a;
                }
            }
        }
        if i > 0 {
            ws.upstream.iter_mut().for_each(|v| *v = 0.0);
            for (r, d) in ws.delta.iter().enumerate() {
                let row = &layer.weights()[r * layer.in_width()..(r + 1) * layer.in_width()];
                for (u, wv) in ws.upstream.iter_mut().zip(row) {
                    *u += d * wv;
                }
            }
        }
    }

    LossComponents {
        loss_x,
        loss_y,
        total,
    }
}

/// Loss `alpha * MSE(x, x~) + beta * MSE(y, y~)` for one window and the exact
/// gradient with respect to every parameter.
pub fn loss_and_gradients(
    net: &MlpNetwork,
    y_window: &[f64],
    x_window: Option<&[f64]>,
    cfg: &TrainConfig,
) -> Result<(LossComponents, Gradients)> {
    let w = net.width();
    if y_window.len() != w {
        return Err(Error::ShapeMismatch {
            expected: w,
            actual: y_window.len(),
        });
    }
    if let Some(x) = x_window {
        if x.len() != w {
            return Err(Error::ShapeMismatch {
                expected: w,
                actual: x.len(),
            });
        }
    }
    let mut grads = Gradients::zeros_like(net);
    let mut ws = Workspace::new(w);
    let loss = accumulate(net, y_window, x_window, cfg, &mut grads, &mut ws, false);
    Ok((loss, grads))
}
