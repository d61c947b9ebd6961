//! The two-stage sensor lifecycle: a reliable-calibration (RC) stage while
//! the sensor is trusted, followed by an unreliable-calibration (UC) stage
//! after it has drifted.
//!
//! Runs are pure functions of the configuration. Every random stream is
//! derived from `seed` by [`derive_seed`], so two runs with the same
//! configuration produce byte-identical artifacts.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::{calibrate, init_network, to_windows, train, Checkpoint, FrozenLayers, MlpNetwork, Stage, TrainConfig, TrainTrace};
use crate::signal::{invert_sensor, simulate, ChainConfig, ChainOutput, FirFilter, SensorModel, SignalSeries};
use crate::sysid::{drift_diagnostic, restitution_bound, semi_blind_rc, semi_blind_uc};

/// Above this shape distance the environment is reported as changed.
pub const SHAPE_DRIFT_FLAG: f64 = 0.3;

pub const REPORT_FILE: &str = "report.txt";
pub const CHECKPOINT_FILE: &str = "network.ckpt";

/// Root mean square difference of two equally long series.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sse: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok((sse / a.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavour {
    Blind,
    Semiblind,
}

impl Flavour {
    pub fn name(self) -> &'static str {
        match self {
            Flavour::Blind => "blind",
            Flavour::Semiblind => "semiblind",
        }
    }

    /// Improvement over stale restitution that counts as a successful recalibration.
    pub fn improvement_threshold(self) -> f64 {
        match self {
            Flavour::Blind => 2.0,
            Flavour::Semiblind => 100.0,
        }
    }
}

impl fmt::Display for Flavour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flavour {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blind" => Ok(Flavour::Blind),
            "semiblind" => Ok(Flavour::Semiblind),
            other => Err(Error::InvalidArgument(format!("unknown flavour '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub chain_rc: ChainConfig,
    pub chain_uc: ChainConfig,
    pub train: TrainConfig,
    pub flavour: Flavour,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Number of taps identified by the semi-blind RC step.
    pub fir_order: usize,
    /// Permits different RC and UC filters, for studying what happens when
    /// the invariance premise is violated.
    pub allow_environment_change: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            chain_rc: ChainConfig::calibrated(),
            chain_uc: ChainConfig::drifted(),
            train: TrainConfig::default(),
            flavour: Flavour::Blind,
            output_dir: PathBuf::from("out"),
            seed: 42,
            fir_order: 100,
            allow_environment_change: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.chain_rc
            .validate()
            .map_err(|e| Error::Validation(format!("chain_rc: {e}")))?;
        self.chain_uc
            .validate()
            .map_err(|e| Error::Validation(format!("chain_uc: {e}")))?;
        self.train.validate()?;
        if self.fir_order == 0 {
            return Err(Error::Validation("semiblind.fir_order must be positive".into()));
        }
        if !self.allow_environment_change {
            let rc = self.chain_rc.filter.build()?;
            let uc = self.chain_uc.filter.build()?;
            if rc != uc {
                return Err(Error::Validation(
                    "RC/UC filter mismatch: both stages must share the environment filter".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> DerivedSeeds {
        DerivedSeeds::from_master(self.seed)
    }

    /// SHA-256 of the canonical configuration text, output directory excluded.
    pub fn digest(&self) -> String {
        let text: String = crate::config::render(self)
            .lines()
            .filter(|l| !l.starts_with("experiment.output_dir"))
            .map(|l| format!("{l}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn seeded_chains(&self) -> (ChainConfig, ChainConfig) {
        let s = self.seeds();
        let mut rc = self.chain_rc.clone();
        rc.seed = s.rc_event;
        rc.noise.seed = s.rc_noise;
        let mut uc = self.chain_uc.clone();
        uc.seed = s.uc_event;
        uc.noise.seed = s.uc_noise;
        (rc, uc)
    }
}

/// SplitMix64 finalizer applied to `master` advanced by `stream` golden-ratio steps.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DerivedSeeds {
    pub rc_event: u64,
    pub rc_noise: u64,
    pub uc_event: u64,
    pub uc_noise: u64,
    pub network_init: u64,
    pub rc_shuffle: u64,
    pub uc_shuffle: u64,
}

impl DerivedSeeds {
    pub fn from_master(master: u64) -> Self {
        DerivedSeeds {
            rc_event: derive_seed(master, 0),
            rc_noise: derive_seed(master, 1),
            uc_event: derive_seed(master, 2),
            uc_noise: derive_seed(master, 3),
            network_init: derive_seed(master, 4),
            rc_shuffle: derive_seed(master, 5),
            uc_shuffle: derive_seed(master, 6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub flavour: Flavour,
    pub seed: u64,
    pub seeds: DerivedSeeds,
    pub config_digest: String,
    pub num_samples: usize,
    /// `RMSE(x, y)` on the UC chain.
    pub rmse_uncalibrated: f64,
    /// `RMSE(x, f_rc^-1(y))`: what an operator gets by keeping the old calibration.
    pub rmse_stale_restitution: f64,
    pub rmse_calibrated: f64,
    /// `rmse_stale_restitution / rmse_calibrated`
    pub improvement_ratio: f64,
    pub improvement_threshold: f64,
    pub estimated_k1: Option<f64>,
    pub estimated_k2: Option<f64>,
    /// Normalized squared error of the identified filter against the true RC filter.
    pub environment_nmse: Option<f64>,
    pub shape_drift: Option<f64>,
    pub environment_changed: Option<bool>,
    /// Semi-blind only: false when the re-fitted polynomial could not be
    /// inverted and the stale calibration was kept.
    pub fitted_model_invertible: Option<bool>,
    pub checkpoint: Option<String>,
    pub checkpoint_sha256: Option<String>,
    /// Blind only: environment layers bit-identical across UC retraining.
    pub environment_frozen: Option<bool>,
    /// Blind only: RMSE of the RC-trained stage 1 applied to UC readings.
    pub rmse_before_retraining: Option<f64>,
}

impl CalibrationReport {
    pub fn meets_threshold(&self) -> bool {
        self.improvement_ratio >= self.improvement_threshold
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| writeln!(s, "{k} = {v}").unwrap();
        kv("flavour", &self.flavour);
        kv("seed", &self.seed);
        kv("seed.rc_event", &self.seeds.rc_event);
        kv("seed.rc_noise", &self.seeds.rc_noise);
        kv("seed.uc_event", &self.seeds.uc_event);
        kv("seed.uc_noise", &self.seeds.uc_noise);
        kv("seed.network_init", &self.seeds.network_init);
        kv("seed.rc_shuffle", &self.seeds.rc_shuffle);
        kv("seed.uc_shuffle", &self.seeds.uc_shuffle);
        kv("config_digest", &self.config_digest);
        kv("num_samples", &self.num_samples);
        kv("rmse_uncalibrated", &self.rmse_uncalibrated);
        kv("rmse_stale_restitution", &self.rmse_stale_restitution);
        kv("rmse_calibrated", &self.rmse_calibrated);
        kv("improvement_ratio", &self.improvement_ratio);
        kv("improvement_threshold", &self.improvement_threshold);
        kv("meets_threshold", &self.meets_threshold());
        let opt_f = |v: Option<f64>| v.map(|x| x.to_string());
        let optionals = [
            ("estimated_k1", opt_f(self.estimated_k1)),
            ("estimated_k2", opt_f(self.estimated_k2)),
            ("environment_nmse", opt_f(self.environment_nmse)),
            ("shape_drift", opt_f(self.shape_drift)),
            ("environment_changed", self.environment_changed.map(|b| b.to_string())),
            ("fitted_model_invertible", self.fitted_model_invertible.map(|b| b.to_string())),
            ("checkpoint", self.checkpoint.clone()),
            ("checkpoint_sha256", self.checkpoint_sha256.clone()),
            ("environment_frozen", self.environment_frozen.map(|b| b.to_string())),
            ("rmse_before_retraining", opt_f(self.rmse_before_retraining)),
        ];
        for (k, v) in optionals {
            if let Some(v) = v {
                kv(k, &v);
            }
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut map = std::collections::BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, "expected 'key = value'".into()))?;
            if map.insert(k.trim().to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(err(i + 1, format!("duplicate key '{}'", k.trim())));
            }
        }
        let mut take = |key: &str| map.remove(key);
        fn value<T: FromStr>(entry: Option<(usize, String)>, key: &str, err: &dyn Fn(usize, String) -> Error) -> Result<Option<T>> {
            match entry {
                None => Ok(None),
                Some((ln, v)) => v
                    .parse()
                    .map(Some)
                    .map_err(|_| err(ln, format!("bad value for '{key}': '{v}'"))),
            }
        }
        let required = |key: &str, v: Option<(usize, String)>| v.ok_or_else(|| err(0, format!("missing key '{key}'")));
        macro_rules! req {
            ($key:literal) => {
                value(Some(required($key, take($key))?), $key, &err)?.unwrap()
            };
        }
        macro_rules! opt {
            ($key:literal) => {
                value(take($key), $key, &err)?
            };
        }
        let flavour: String = req!("flavour");
        let flavour: Flavour = flavour.parse()?;
        let report = CalibrationReport {
            flavour,
            seed: req!("seed"),
            seeds: DerivedSeeds {
                rc_event: req!("seed.rc_event"),
                rc_noise: req!("seed.rc_noise"),
                uc_event: req!("seed.uc_event"),
                uc_noise: req!("seed.uc_noise"),
                network_init: req!("seed.network_init"),
                rc_shuffle: req!("seed.rc_shuffle"),
                uc_shuffle: req!("seed.uc_shuffle"),
            },
            config_digest: req!("config_digest"),
            num_samples: req!("num_samples"),
            rmse_uncalibrated: req!("rmse_uncalibrated"),
            rmse_stale_restitution: req!("rmse_stale_restitution"),
            rmse_calibrated: req!("rmse_calibrated"),
            improvement_ratio: req!("improvement_ratio"),
            improvement_threshold: req!("improvement_threshold"),
            estimated_k1: opt!("estimated_k1"),
            estimated_k2: opt!("estimated_k2"),
            environment_nmse: opt!("environment_nmse"),
            shape_drift: opt!("shape_drift"),
            environment_changed: opt!("environment_changed"),
            fitted_model_invertible: opt!("fitted_model_invertible"),
            checkpoint: opt!("checkpoint"),
            checkpoint_sha256: opt!("checkpoint_sha256"),
            environment_frozen: opt!("environment_frozen"),
            rmse_before_retraining: opt!("rmse_before_retraining"),
        };
        // Derived on write, checked on read.
        let _: Option<bool> = opt!("meets_threshold");
        if let Some((key, (ln, _))) = map.into_iter().next() {
            return Err(err(ln, format!("unknown key '{key}'")));
        }
        Ok(report)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = String>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        writeln!(w, "{row}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `report.txt` into `dir`, creating the directory if needed.
pub fn emit_report(report: &CalibrationReport, dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(REPORT_FILE);
    write_file(&path, &report.to_text())?;
    Ok(path)
}

pub fn read_report(dir: &Path) -> Result<CalibrationReport> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    CalibrationReport::parse(&text, &path)
}

/// Human-readable summary of the report saved in `dir`.
pub fn render_report(dir: &Path) -> Result<String> {
    let r = read_report(dir)?;
    let mut s = String::new();
    writeln!(s, "{} calibration, seed {}", r.flavour, r.seed).unwrap();
    writeln!(s, "  samples                  {}", r.num_samples).unwrap();
    writeln!(s, "  rmse uncalibrated        {:.6e}", r.rmse_uncalibrated).unwrap();
    writeln!(s, "  rmse stale restitution   {:.6e}", r.rmse_stale_restitution).unwrap();
    if let Some(v) = r.rmse_before_retraining {
        writeln!(s, "  rmse before retraining   {v:.6e}").unwrap();
    }
    writeln!(s, "  rmse calibrated          {:.6e}", r.rmse_calibrated).unwrap();
    writeln!(
        s,
        "  improvement              {:.3} (threshold {}, {})",
        r.improvement_ratio,
        r.improvement_threshold,
        if r.meets_threshold() { "met" } else { "NOT met" }
    )
    .unwrap();
    if let (Some(k1), Some(k2)) = (r.estimated_k1, r.estimated_k2) {
        writeln!(s, "  estimated k1, k2         {k1:.6}, {k2:.6}").unwrap();
    }
    if let Some(v) = r.environment_nmse {
        writeln!(s, "  environment nmse         {v:.3e}").unwrap();
    }
    if let Some(v) = r.shape_drift {
        let flag = if r.environment_changed == Some(true) { " (environment changed)" } else { "" };
        writeln!(s, "  shape drift              {v:.4}{flag}").unwrap();
    }
    if r.fitted_model_invertible == Some(false) {
        writeln!(s, "  fitted model not invertible, stale calibration kept").unwrap();
    }
    if let Some(v) = r.environment_frozen {
        writeln!(s, "  environment frozen       {v}").unwrap();
    }
    if let Some(c) = &r.checkpoint {
        writeln!(s, "  checkpoint               {c}").unwrap();
    }
    writeln!(s, "  config digest            {}", r.config_digest).unwrap();
    Ok(s)
}

/// `index,e,x,y`
pub fn write_signals(path: &Path, chain: &ChainOutput) -> Result<()> {
    let rows = (0..chain.event.len())
        .map(|i| format!("{i},{},{},{}", chain.event[i], chain.measurand[i], chain.reading[i]));
    write_csv(path, "index,e,x,y", rows)
}

/// `epoch,loss_x,loss_y,total`; UC epochs continue the RC numbering and leave `loss_x` empty.
pub fn write_loss_trace(path: &Path, rc: &TrainTrace, uc: &TrainTrace) -> Result<()> {
    let offset = rc.len();
    let rows = rc
        .records
        .iter()
        .map(|r| (r.epoch, r))
        .chain(uc.records.iter().map(|r| (r.epoch + offset, r)))
        .map(|(epoch, r)| {
            let lx = r.loss_x.map(|v| v.to_string()).unwrap_or_default();
            format!("{epoch},{lx},{},{}", r.loss_y, r.total)
        });
    write_csv(path, "epoch,loss_x,loss_y,total", rows)
}

/// `index,x,y,x_stale_restitution,x_calibrated`
pub fn write_calibrated(path: &Path, uc: &ChainOutput, stale: &SignalSeries, calibrated: &SignalSeries) -> Result<()> {
    let rows = (0..uc.measurand.len())
        .map(|i| format!("{i},{},{},{},{}", uc.measurand[i], uc.reading[i], stale[i], calibrated[i]));
    write_csv(path, "index,x,y,x_stale_restitution,x_calibrated", rows)
}

/// Simulates both stages and writes `signals_rc.csv` and `signals_uc.csv`.
pub fn run_simulation(cfg: &ExperimentConfig, dir: &Path) -> Result<(ChainOutput, ChainOutput)> {
    cfg.validate()?;
    let (rc_cfg, uc_cfg) = cfg.seeded_chains();
    let rc = simulate(&rc_cfg)?;
    let uc = simulate(&uc_cfg)?;
    ensure_dir(dir)?;
    write_signals(&dir.join("signals_rc.csv"), &rc)?;
    write_signals(&dir.join("signals_uc.csv"), &uc)?;
    Ok((rc, uc))
}

fn improvement(stale: f64, calibrated: f64) -> f64 {
    stale / calibrated
}

fn full_windows(series: &[f64], w: usize, scale: f64) -> Vec<Vec<f64>> {
    let n = series.len() / w * w;
    to_windows(&series[..n], w, scale)
}

fn environment_bits(net: &MlpNetwork) -> Vec<u64> {
    Stage::ENVIRONMENT
        .iter()
        .flat_map(|&s| {
            let l = net.layer(s);
            l.weights().iter().chain(l.bias()).map(|v| v.to_bits()).collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BlindOutcome {
    pub report: CalibrationReport,
    pub trace_rc: TrainTrace,
    pub trace_uc: TrainTrace,
    /// Network after the RC phase.
    pub network_rc: MlpNetwork,
    /// Network after UC retraining.
    pub network: MlpNetwork,
    pub rc: ChainOutput,
    pub uc: ChainOutput,
    pub stale: SignalSeries,
    pub calibrated: SignalSeries,
}

impl BlindOutcome {
    /// Writes the report, checkpoint, loss trace and signal CSVs into `dir`.
    pub fn emit(&self, train: &TrainConfig, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        let ckpt = Checkpoint {
            network: self.network.clone(),
            train: train.clone(),
        };
        ckpt.save(&dir.join(CHECKPOINT_FILE))?;
        write_loss_trace(&dir.join("loss_trace.csv"), &self.trace_rc, &self.trace_uc)?;
        write_signals(&dir.join("signals_rc.csv"), &self.rc)?;
        write_signals(&dir.join("signals_uc.csv"), &self.uc)?;
        write_calibrated(&dir.join("calibrated_uc.csv"), &self.uc, &self.stale, &self.calibrated)?;
        emit_report(&self.report, dir)?;
        Ok(())
    }
}

/// Blind recalibration with the two-stage autoencoder.
///
/// RC: all layers learn `y -> x~ -> y~` with the measurand supervising
/// stage 1. UC: layers 2 and 3 are frozen and the network is retrained on
/// drifted readings alone. Stage 1 of the retrained network is the new
/// restitution.
pub fn run_blind(cfg: &ExperimentConfig) -> Result<BlindOutcome> {
    if cfg.flavour != Flavour::Blind {
        return Err(Error::InvalidArgument("run_blind needs flavour = blind".into()));
    }
    cfg.validate()?;
    let seeds = cfg.seeds();
    let (rc_cfg, uc_cfg) = cfg.seeded_chains();
    let rc = simulate(&rc_cfg)?;
    let uc = simulate(&uc_cfg)?;

    let w = cfg.train.window_length;
    let scale = cfg.train.signal_scale;
    let mut net = init_network(w, seeds.network_init)?;
    net.set_signal_scale(scale)?;

    let rc_train = TrainConfig {
        seed: seeds.rc_shuffle,
        ..cfg.train.clone()
    };
    let y_rc = full_windows(&rc.reading, w, scale);
    let x_rc = full_windows(&rc.measurand, w, scale);
    if y_rc.is_empty() {
        return Err(Error::InsufficientData(format!(
            "RC chain has fewer samples than one window ({w})"
        )));
    }
    let trace_rc = train(&mut net, &y_rc, Some(&x_rc), &rc_train, &FrozenLayers::new())?;
    let before = calibrate(&net, &uc.reading, w)?;
    let network_rc = net.clone();

    let uc_train = TrainConfig {
        seed: seeds.uc_shuffle,
        ..cfg.train.clone()
    };
    let y_uc = full_windows(&uc.reading, w, scale);
    if y_uc.is_empty() {
        return Err(Error::InsufficientData(format!(
            "UC chain has fewer samples than one window ({w})"
        )));
    }
    let frozen: FrozenLayers = Stage::ENVIRONMENT.into_iter().collect();
    let env_before = environment_bits(&net);
    let trace_uc = train(&mut net, &y_uc, None, &uc_train, &frozen)?;
    if environment_bits(&net) != env_before {
        return Err(Error::Validation("environment layers changed during UC retraining".into()));
    }

    let stale = invert_sensor(&cfg.chain_rc.sensor, &uc.reading, restitution_bound(&uc.reading))?;
    let calibrated = calibrate(&net, &uc.reading, w)?;
    let x = uc.measurand.as_slice();
    let rmse_stale = rmse(x, &stale)?;
    let rmse_cal = rmse(x, &calibrated)?;
    let ckpt_text = Checkpoint {
        network: net.clone(),
        train: cfg.train.clone(),
    }
    .to_text();

    let report = CalibrationReport {
        flavour: Flavour::Blind,
        seed: cfg.seed,
        seeds,
        config_digest: cfg.digest(),
        num_samples: uc.reading.len(),
        rmse_uncalibrated: rmse(x, &uc.reading)?,
        rmse_stale_restitution: rmse_stale,
        rmse_calibrated: rmse_cal,
        improvement_ratio: improvement(rmse_stale, rmse_cal),
        improvement_threshold: Flavour::Blind.improvement_threshold(),
        estimated_k1: None,
        estimated_k2: None,
        environment_nmse: None,
        shape_drift: None,
        environment_changed: None,
        fitted_model_invertible: None,
        checkpoint: Some(CHECKPOINT_FILE.to_string()),
        checkpoint_sha256: Some(hex::encode(Sha256::digest(ckpt_text.as_bytes()))),
        environment_frozen: Some(true),
        rmse_before_retraining: Some(rmse(x, &before)?),
    };
    Ok(BlindOutcome {
        report,
        trace_rc,
        trace_uc,
        network_rc,
        network: net,
        rc,
        uc,
        stale,
        calibrated,
    })
}

#[derive(Debug, Clone)]
pub struct SemiblindOutcome {
    pub report: CalibrationReport,
    pub h_hat: FirFilter,
    pub sensor: SensorModel,
    pub rc: ChainOutput,
    pub uc: ChainOutput,
    pub stale: SignalSeries,
    pub calibrated: SignalSeries,
}

impl SemiblindOutcome {
    /// Writes the report and signal CSVs into `dir`.
    pub fn emit(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_signals(&dir.join("signals_rc.csv"), &self.rc)?;
        write_signals(&dir.join("signals_uc.csv"), &self.uc)?;
        write_calibrated(&dir.join("calibrated_uc.csv"), &self.uc, &self.stale, &self.calibrated)?;
        emit_report(&self.report, dir)?;
        Ok(())
    }
}

fn filter_nmse(est: &FirFilter, truth: &FirFilter) -> f64 {
    let (a, b) = (est.taps(), truth.taps());
    let n = a.len().max(b.len());
    let tap = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let num: f64 = (0..n).map(|i| (tap(a, i) - tap(b, i)).powi(2)).sum();
    num / truth.energy()
}

/// Semi-blind recalibration: the event is known in both stages.
pub fn run_semiblind(cfg: &ExperimentConfig) -> Result<SemiblindOutcome> {
    if cfg.flavour != Flavour::Semiblind {
        return Err(Error::InvalidArgument("run_semiblind needs flavour = semiblind".into()));
    }
    cfg.validate()?;
    let seeds = cfg.seeds();
    let (rc_cfg, uc_cfg) = cfg.seeded_chains();
    let rc = simulate(&rc_cfg)?;
    let uc = simulate(&uc_cfg)?;
    let f_rc = cfg.chain_rc.sensor;

    let (h_hat, _) = semi_blind_rc(&rc.event, &rc.reading, &f_rc, cfg.fir_order)?;
    let (sensor, _) = semi_blind_uc(&uc.event, &uc.reading, &h_hat)?;
    let bound = restitution_bound(&uc.reading);
    let stale = invert_sensor(&f_rc, &uc.reading, bound)?;
    let (calibrated, invertible) = match invert_sensor(&sensor, &uc.reading, bound) {
        Ok(c) => (c, true),
        Err(Error::NonInvertibleModel(_)) => (stale.clone(), false),
        Err(e) => return Err(e),
    };
    let shape_drift = drift_diagnostic(&uc.event, &uc.reading, &f_rc, &h_hat, cfg.fir_order)?;

    let x = uc.measurand.as_slice();
    let rmse_stale = rmse(x, &stale)?;
    let rmse_cal = rmse(x, &calibrated)?;
    let report = CalibrationReport {
        flavour: Flavour::Semiblind,
        seed: cfg.seed,
        seeds,
        config_digest: cfg.digest(),
        num_samples: uc.reading.len(),
        rmse_uncalibrated: rmse(x, &uc.reading)?,
        rmse_stale_restitution: rmse_stale,
        rmse_calibrated: rmse_cal,
        improvement_ratio: improvement(rmse_stale, rmse_cal),
        improvement_threshold: Flavour::Semiblind.improvement_threshold(),
        estimated_k1: Some(sensor.k1),
        estimated_k2: Some(sensor.k2),
        environment_nmse: Some(filter_nmse(&h_hat, &cfg.chain_rc.filter.build()?)),
        shape_drift: Some(shape_drift),
        environment_changed: Some(shape_drift > SHAPE_DRIFT_FLAG),
        fitted_model_invertible: Some(invertible),
        checkpoint: None,
        checkpoint_sha256: None,
        environment_frozen: None,
        rmse_before_retraining: None,
    };
    Ok(SemiblindOutcome {
        report,
        h_hat,
        sensor,
        rc,
        uc,
        stale,
        calibrated,
    })
}
