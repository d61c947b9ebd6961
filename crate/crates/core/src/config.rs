//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! chain_uc.sensor.k1 = 0.3
//! train.epochs = 200
//! experiment.seed = 42
//! ```
//!
//! Every key is optional; missing keys keep their defaults. Unknown keys are
//! rejected. Overrides given as `key=value` strings are applied after the
//! file, then the whole configuration is validated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::calibration::{ExperimentConfig, Flavour};
use crate::error::{Error, Result};
use crate::neural::OptimizerKind;
use crate::signal::{ChainConfig, FilterSpec, FirFilter};

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "chain_rc.num_samples",
    "chain_rc.event_sigma",
    "chain_rc.filter.num_taps",
    "chain_rc.filter.low_cut",
    "chain_rc.filter.high_cut",
    "chain_rc.filter.taps",
    "chain_rc.sensor.k1",
    "chain_rc.sensor.k2",
    "chain_rc.noise.sigma",
    "chain_uc.num_samples",
    "chain_uc.event_sigma",
    "chain_uc.filter.num_taps",
    "chain_uc.filter.low_cut",
    "chain_uc.filter.high_cut",
    "chain_uc.filter.taps",
    "chain_uc.sensor.k1",
    "chain_uc.sensor.k2",
    "chain_uc.noise.sigma",
    "train.alpha",
    "train.beta",
    "train.learning_rate",
    "train.epochs",
    "train.batch_size",
    "train.window_length",
    "train.optimizer",
    "train.signal_scale",
    "semiblind.fir_order",
    "experiment.flavour",
    "experiment.seed",
    "experiment.output_dir",
    "experiment.allow_environment_change",
];

fn num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse '{value}'"))
}

fn bandpass_mut(filter: &mut FilterSpec) -> (&mut usize, &mut f64, &mut f64) {
    if let FilterSpec::Taps(_) = filter {
        *filter = FilterSpec::default();
    }
    match filter {
        FilterSpec::Bandpass {
            num_taps,
            low_cut,
            high_cut,
        } => (num_taps, low_cut, high_cut),
        FilterSpec::Taps(_) => unreachable!(),
    }
}

fn set_chain(chain: &mut ChainConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    match key {
        "num_samples" => chain.num_samples = num(value)?,
        "event_sigma" => chain.event_sigma = num(value)?,
        "filter.num_taps" => *bandpass_mut(&mut chain.filter).0 = num(value)?,
        "filter.low_cut" => *bandpass_mut(&mut chain.filter).1 = num(value)?,
        "filter.high_cut" => *bandpass_mut(&mut chain.filter).2 = num(value)?,
        "filter.taps" => {
            let taps = value
                .split_whitespace()
                .map(num::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()?;
            chain.filter = FilterSpec::Taps(FirFilter::new(taps).map_err(|e| e.to_string())?);
        }
        "sensor.k1" => chain.sensor.k1 = num(value)?,
        "sensor.k2" => chain.sensor.k2 = num(value)?,
        "noise.sigma" => chain.noise.sigma = num(value)?,
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got '{value}'")),
    }
}

/// Applies one `key = value` assignment.
pub fn set(cfg: &mut ExperimentConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    if let Some(rest) = key.strip_prefix("chain_rc.") {
        return set_chain(&mut cfg.chain_rc, rest, value).map_err(|e| e.replace(rest, key));
    }
    if let Some(rest) = key.strip_prefix("chain_uc.") {
        return set_chain(&mut cfg.chain_uc, rest, value).map_err(|e| e.replace(rest, key));
    }
    let t = &mut cfg.train;
    match key {
        "train.alpha" => t.alpha = num(value)?,
        "train.beta" => t.beta = num(value)?,
        "train.learning_rate" => t.learning_rate = num(value)?,
        "train.epochs" => t.epochs = num(value)?,
        "train.batch_size" => t.batch_size = num(value)?,
        "train.window_length" => t.window_length = num(value)?,
        "train.optimizer" => t.optimizer = value.parse::<OptimizerKind>().map_err(|e| e.to_string())?,
        "train.signal_scale" => t.signal_scale = num(value)?,
        "semiblind.fir_order" => cfg.fir_order = num(value)?,
        "experiment.flavour" => cfg.flavour = value.parse::<Flavour>().map_err(|e| e.to_string())?,
        "experiment.seed" => cfg.seed = num(value)?,
        "experiment.output_dir" => cfg.output_dir = value.into(),
        "experiment.allow_environment_change" => cfg.allow_environment_change = parse_bool(value)?,
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

/// Parses configuration text; `origin` is only used in error messages.
pub fn parse_config_str(text: &str, origin: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err("expected 'key = value'".into()))?;
        set(&mut cfg, key.trim(), value.trim()).map_err(parse_err)?;
    }
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override '{o}' is not key=value")))?;
        set(&mut cfg, key.trim(), value.trim())
            .map_err(|e| Error::InvalidArgument(format!("override '{o}': {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path, overrides)
}

fn render_chain(s: &mut String, prefix: &str, c: &ChainConfig) {
    writeln!(s, "{prefix}.num_samples = {}", c.num_samples).unwrap();
    writeln!(s, "{prefix}.event_sigma = {}", c.event_sigma).unwrap();
    match &c.filter {
        FilterSpec::Bandpass {
            num_taps,
            low_cut,
            high_cut,
        } => {
            writeln!(s, "{prefix}.filter.num_taps = {num_taps}").unwrap();
            writeln!(s, "{prefix}.filter.low_cut = {low_cut}").unwrap();
            writeln!(s, "{prefix}.filter.high_cut = {high_cut}").unwrap();
        }
        FilterSpec::Taps(f) => {
            let taps: Vec<String> = f.taps().iter().map(|v| v.to_string()).collect();
            writeln!(s, "{prefix}.filter.taps = {}", taps.join(" ")).unwrap();
        }
    }
    writeln!(s, "{prefix}.sensor.k1 = {}", c.sensor.k1).unwrap();
    writeln!(s, "{prefix}.sensor.k2 = {}", c.sensor.k2).unwrap();
    writeln!(s, "{prefix}.noise.sigma = {}", c.noise.sigma).unwrap();
}

/// Canonical text form; parsing it yields an equal configuration.
pub fn render(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    render_chain(&mut s, "chain_rc", &cfg.chain_rc);
    render_chain(&mut s, "chain_uc", &cfg.chain_uc);
    let t = &cfg.train;
    writeln!(s, "train.alpha = {}", t.alpha).unwrap();
    writeln!(s, "train.beta = {}", t.beta).unwrap();
    writeln!(s, "train.learning_rate = {}", t.learning_rate).unwrap();
    writeln!(s, "train.epochs = {}", t.epochs).unwrap();
    writeln!(s, "train.batch_size = {}", t.batch_size).unwrap();
    writeln!(s, "train.window_length = {}", t.window_length).unwrap();
    writeln!(s, "train.optimizer = {}", t.optimizer).unwrap();
    writeln!(s, "train.signal_scale = {}", t.signal_scale).unwrap();
    writeln!(s, "semiblind.fir_order = {}", cfg.fir_order).unwrap();
    writeln!(s, "experiment.flavour = {}", cfg.flavour).unwrap();
    writeln!(s, "experiment.seed = {}", cfg.seed).unwrap();
    writeln!(s, "experiment.output_dir = {}", cfg.output_dir.display()).unwrap();
    writeln!(s, "experiment.allow_environment_change = {}", cfg.allow_environment_change).unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SensorModel;

    fn parse(text: &str, overrides: &[&str]) -> Result<ExperimentConfig> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse_config_str(text, Path::new("test.cfg"), &o)
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.chain_rc.sensor, SensorModel { k1: 0.001, k2: 0.0001 });
        assert_eq!(cfg.chain_uc.sensor, SensorModel { k1: 0.3, k2: 0.3 });
        assert_eq!(cfg.chain_rc.filter.len(), 100);
        assert_eq!(cfg.train.window_length, 128);
        assert_eq!((cfg.train.alpha, cfg.train.beta), (1.0, 1.0));
    }

    #[test]
    fn override_changes_only_its_key() {
        let cfg = parse("", &["chain_uc.sensor.k1=0.5"]).unwrap();
        let mut expected = ExperimentConfig::default();
        expected.chain_uc.sensor.k1 = 0.5;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn overrides_win_over_file() {
        let cfg = parse("train.epochs = 3\n", &["train.epochs=9"]).unwrap();
        assert_eq!(cfg.train.epochs, 9);
    }

    #[test]
    fn mismatched_filter_override_fails_validation() {
        let err = parse("", &["chain_uc.filter.num_taps=50"]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("filter mismatch"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse("# header\n\ntrain.epochz = 3\n", &[]).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("train.epochz"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("", &["nope=1"]), Err(Error::InvalidArgument(_))));
        assert!(matches!(parse("", &["chain_rc.sensor.k3=1"]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bad_values_report_line_numbers() {
        let err = parse("train.epochs = 3\ntrain.alpha = lots\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        assert!(matches!(parse("just words\n", &[]), Err(Error::Parse { line: 1, .. })));
        assert!(parse("", &["noequals"]).is_err());
    }

    #[test]
    fn comments_and_whitespace_are_ignored() {
        let cfg = parse("  experiment.seed   =  7   # trailing\n", &[]).unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.chain_uc.sensor.k1 = 0.123_456_789_012_345_67;
        cfg.train.optimizer = OptimizerKind::Sgd;
        cfg.flavour = Flavour::Semiblind;
        cfg.allow_environment_change = true;
        cfg.chain_uc.filter = FilterSpec::Taps(FirFilter::new(vec![0.5, -0.25, 1e-17]).unwrap());
        let back = parse(&render(&cfg), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_key_is_rendered_or_alternative() {
        let text = render(&ExperimentConfig::default());
        for key in KEYS.iter().filter(|k| !k.ends_with("filter.taps")) {
            assert!(text.contains(&format!("{key} = ")), "{key}");
        }
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = parse_config(Path::new("/definitely/not/here.cfg"), &[]).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.cfg"));
    }
}
