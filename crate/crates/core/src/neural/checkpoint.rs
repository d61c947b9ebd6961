//! Versioned plain-text checkpoint for a trained network.
//!
//! Floats are written in Rust's shortest round-trip exponent form, so a
//! save/load cycle reproduces every parameter bit for bit.
//!
//! ```text
//! driftcal-checkpoint 1
//! width 128
//! signal_scale 1e0
//! train.alpha 1e0
//! ...
//! layer 1 tanh trainable
//! weights <width*width values>
//! bias <width values>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::layer::{Activation, DenseLayer};
use super::network::{MlpNetwork, NUM_LAYERS};
use super::optim::OptimizerKind;
use super::train::TrainConfig;
use crate::error::{Error, Result};

const MAGIC: &str = "driftcal-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: MlpNetwork,
    pub train: TrainConfig,
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:e}").unwrap();
    }
    s
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let net = &self.network;
        let t = &self.train;
        let mut s = String::new();
        writeln!(s, "{MAGIC} {VERSION}").unwrap();
        writeln!(s, "width {}", net.width()).unwrap();
        writeln!(s, "signal_scale {:e}", net.signal_scale()).unwrap();
        writeln!(s, "train.alpha {:e}", t.alpha).unwrap();
        writeln!(s, "train.beta {:e}", t.beta).unwrap();
        writeln!(s, "train.learning_rate {:e}", t.learning_rate).unwrap();
        writeln!(s, "train.epochs {}", t.epochs).unwrap();
        writeln!(s, "train.batch_size {}", t.batch_size).unwrap();
        writeln!(s, "train.window_length {}", t.window_length).unwrap();
        writeln!(s, "train.optimizer {}", t.optimizer).unwrap();
        writeln!(s, "train.signal_scale {:e}", t.signal_scale).unwrap();
        writeln!(s, "train.seed {}", t.seed).unwrap();
        for (i, layer) in net.layers().iter().enumerate() {
            let flag = if layer.trainable { "trainable" } else { "frozen" };
            writeln!(s, "layer {} {} {}", i + 1, layer.activation, flag).unwrap();
            writeln!(s, "weights {}", join(layer.weights())).unwrap();
            writeln!(s, "bias {}", join(layer.bias())).unwrap();
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
        };

        let (ln, header) = next("header")?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| err(ln, "not a driftcal checkpoint".into()))?;
        if version != VERSION.to_string() {
            return Err(err(ln, format!("unsupported checkpoint version {version}")));
        }

        fn field<T: FromStr>(
            entry: (usize, &str),
            key: &str,
            err: &dyn Fn(usize, String) -> Error,
        ) -> Result<T> {
            let (ln, line) = entry;
            let rest = line
                .strip_prefix(key)
                .filter(|r| r.starts_with(' '))
                .ok_or_else(|| err(ln, format!("expected '{key}'")))?;
            rest.trim()
                .parse()
                .map_err(|_| err(ln, format!("bad value for '{key}'")))
        }
        fn floats(entry: (usize, &str), key: &str, n: usize, err: &dyn Fn(usize, String) -> Error) -> Result<Vec<f64>> {
            let (ln, line) = entry;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| err(ln, format!("expected '{key}'")))?;
            let v = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(ln, format!("bad number '{t}'"))))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != n {
                return Err(err(ln, format!("expected {n} values, found {}", v.len())));
            }
            Ok(v)
        }

        let width: usize = field(next("width")?, "width", &err)?;
        let scale: f64 = field(next("signal_scale")?, "signal_scale", &err)?;
        let optimizer_line;
        let train = TrainConfig {
            alpha: field(next("train.alpha")?, "train.alpha", &err)?,
            beta: field(next("train.beta")?, "train.beta", &err)?,
            learning_rate: field(next("train.learning_rate")?, "train.learning_rate", &err)?,
            epochs: field(next("train.epochs")?, "train.epochs", &err)?,
            batch_size: field(next("train.batch_size")?, "train.batch_size", &err)?,
            window_length: field(next("train.window_length")?, "train.window_length", &err)?,
            optimizer: {
                optimizer_line = next("train.optimizer")?;
                field::<String>(optimizer_line, "train.optimizer", &err)?
                    .parse::<OptimizerKind>()
                    .map_err(|e| err(optimizer_line.0, e.to_string()))?
            },
            signal_scale: field(next("train.signal_scale")?, "train.signal_scale", &err)?,
            seed: field(next("train.seed")?, "train.seed", &err)?,
        };

        let mut layers = Vec::with_capacity(NUM_LAYERS);
        for i in 1..=NUM_LAYERS {
            let (ln, head) = next("layer header")?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "layer" || parts[1] != i.to_string() {
                return Err(err(ln, format!("expected 'layer {i} <activation> <trainable|frozen>'")));
            }
            let activation: Activation = parts[2].parse().map_err(|e: Error| err(ln, e.to_string()))?;
            let trainable = match parts[3] {
                "trainable" => true,
                "frozen" => false,
                other => return Err(err(ln, format!("unknown flag '{other}'"))),
            };
            let weights = floats(next("weights")?, "weights", width * width, &err)?;
            let bias = floats(next("bias")?, "bias", width, &err)?;
            let mut layer = DenseLayer::new(weights, bias, width, activation)?;
            layer.trainable = trainable;
            layers.push(layer);
        }
        let layers: [DenseLayer; NUM_LAYERS] = layers
            .try_into()
            .map_err(|_| err(0, "wrong layer count".into()))?;
        let mut network = MlpNetwork::from_layers(layers)?;
        network.set_signal_scale(scale)?;
        Ok(Checkpoint { network, train })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
