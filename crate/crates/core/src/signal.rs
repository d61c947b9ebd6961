//! The simulated measurement chain `y = f(h * e) + n` and its restitution.
//!
//! The event `e` is white Gaussian, the environment `h` is a causal FIR
//! filter, the observation process `f` is the cubic `x + k1 x^2 + k2 x^3`
//! and `n` is additive white Gaussian noise. Every random draw is made from a
//! seeded ChaCha stream so a [`ChainConfig`] fully determines its output.

use std::f64::consts::PI;
use std::ops::Deref;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A finite, non-empty sequence of real samples at unit spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries(Vec<f64>);

impl SignalSeries {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("signal must hold at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(SignalSeries(samples))
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Root mean square amplitude.
    pub fn rms(&self) -> f64 {
        (self.0.iter().map(|v| v * v).sum::<f64>() / self.0.len() as f64).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    // Internal constructor for values that are finite by construction.
    pub(crate) fn from_finite(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples)
    }
}

impl Deref for SignalSeries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SignalSeries {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        SignalSeries::new(v)
    }
}

/// The environment response `h` as a causal tap vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidArgument("filter needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("filter taps must be finite".into()));
        }
        Ok(FirFilter { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Multiplies every tap by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.taps.iter().map(|t| t * gain).collect())
    }

    /// Magnitude of the discrete-time Fourier transform at `freq` cycles/sample.
    pub fn magnitude_response(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, t)| {
                let phase = w * n as f64;
                (re + t * phase.cos(), im - t * phase.sin())
            });
        re.hypot(im)
    }
}

/// Observation process `f(x) = x + k1 x^2 + k2 x^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub k1: f64,
    pub k2: f64,
}

impl SensorModel {
    pub const IDENTITY: SensorModel = SensorModel { k1: 0.0, k2: 0.0 };

    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !k1.is_finite() || !k2.is_finite() {
            return Err(Error::InvalidArgument("sensor coefficients must be finite".into()));
        }
        Ok(SensorModel { k1, k2 })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        x + self.k1 * x * x + self.k2 * x * x * x
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        1.0 + 2.0 * self.k1 * x + 3.0 * self.k2 * x * x
    }

    /// Smallest value of `f'` on `[-bound, bound]`.
    pub fn min_slope(&self, bound: f64) -> f64 {
        let mut lo = self.derivative(-bound).min(self.derivative(bound));
        if self.k2 != 0.0 {
            let vertex = -self.k1 / (3.0 * self.k2);
            if vertex.abs() <= bound {
                lo = lo.min(self.derivative(vertex));
            }
        }
        lo
    }

    pub fn is_monotone_on(&self, bound: f64) -> bool {
        self.min_slope(bound) > 0.0
    }
}

/// Additive white Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel { sigma: 0.0, seed: 0 }
    }
}

/// How the environment filter of a chain is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    Bandpass {
        num_taps: usize,
        low_cut: f64,
        high_cut: f64,
    },
    Taps(FirFilter),
}

impl FilterSpec {
    pub fn build(&self) -> Result<FirFilter> {
        match self {
            FilterSpec::Bandpass {
                num_taps,
                low_cut,
                high_cut,
            } => design_bandpass(*num_taps, *low_cut, *high_cut),
            FilterSpec::Taps(f) => Ok(f.clone()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FilterSpec::Bandpass { num_taps, .. } => *num_taps,
            FilterSpec::Taps(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec::Bandpass {
            num_taps: 100,
            low_cut: 0.05,
            high_cut: 0.25,
        }
    }
}

/// Everything needed to simulate one measurement chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub num_samples: usize,
    pub event_sigma: f64,
    pub filter: FilterSpec,
    pub sensor: SensorModel,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl ChainConfig {
    /// Calibrated sensor: `k1 = 0.001`, `k2 = 0.0001`.
    pub fn calibrated() -> Self {
        ChainConfig {
            num_samples: 16_384,
            event_sigma: 1.0,
            filter: FilterSpec::default(),
            sensor: SensorModel { k1: 0.001, k2: 0.0001 },
            noise: NoiseModel::noiseless(),
            seed: 0,
        }
    }

    /// Aged sensor: `k1 = k2 = 0.3`.
    pub fn drifted() -> Self {
        ChainConfig {
            sensor: SensorModel { k1: 0.3, k2: 0.3 },
            ..Self::calibrated()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Validation("num_samples must be positive".into()));
        }
        if !(self.event_sigma > 0.0 && self.event_sigma.is_finite()) {
            return Err(Error::Validation("event_sigma must be a positive finite number".into()));
        }
        if self.num_samples < self.filter.len() {
            return Err(Error::Validation(format!(
                "num_samples ({}) must be at least the filter length ({})",
                self.num_samples,
                self.filter.len()
            )));
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(Error::Validation("noise sigma must be finite and >= 0".into()));
        }
        if !self.sensor.k1.is_finite() || !self.sensor.k2.is_finite() {
            return Err(Error::Validation("sensor coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// The three traces produced by [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub event: SignalSeries,
    pub measurand: SignalSeries,
    pub reading: SignalSeries,
}

fn gaussian(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect()
}

/// White Gaussian event samples, reproducible from `seed`.
pub fn gen_awgn_event(n: usize, sigma: f64, seed: u64) -> Result<SignalSeries> {
    if n == 0 {
        return Err(Error::InvalidArgument("event length must be positive".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("event sigma must be > 0, got {sigma}")));
    }
    SignalSeries::from_finite(gaussian(n, sigma, seed))
}

/// Hamming-windowed sinc band-pass with unit tap energy.
pub fn design_bandpass(num_taps: usize, low_cut: f64, high_cut: f64) -> Result<FirFilter> {
    if num_taps < 3 {
        return Err(Error::InvalidArgument(format!("band-pass needs >= 3 taps, got {num_taps}")));
    }
    if !(low_cut > 0.0 && low_cut < high_cut && high_cut < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "band edges must satisfy 0 < low ({low_cut}) < high ({high_cut}) < 0.5"
        )));
    }
    let centre = (num_taps - 1) as f64 / 2.0;
    let lowpass = |fc: f64, m: f64| {
        if m == 0.0 {
            2.0 * fc
        } else {
            (2.0 * PI * fc * m).sin() / (PI * m)
        }
    };
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|n| {
            let m = n as f64 - centre;
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (num_taps - 1) as f64).cos();
            (lowpass(high_cut, m) - lowpass(low_cut, m)) * window
        })
        .collect();
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    for t in &mut taps {
        *t /= norm;
    }
    FirFilter::new(taps)
}

/// Causal FIR filtering with zero initial state; output length equals input length.
pub fn convolve(e: &SignalSeries, h: &FirFilter) -> Result<SignalSeries> {
    if e.len() < h.len() {
        return Err(Error::InvalidArgument(format!(
            "signal ({}) is shorter than the filter ({})",
            e.len(),
            h.len()
        )));
    }
    Ok(SignalSeries(convolve_causal(e, h.taps())))
}

pub(crate) fn convolve_causal(e: &[f64], taps: &[f64]) -> Vec<f64> {
    (0..e.len())
        .map(|t| {
            let reach = taps.len().min(t + 1);
            taps[..reach]
                .iter()
                .zip(e[..=t].iter().rev())
                .map(|(h, v)| h * v)
                .sum()
        })
        .collect()
}

pub fn apply_sensor(f: &SensorModel, x: &SignalSeries) -> SignalSeries {
    if f.k1 == 0.0 && f.k2 == 0.0 {
        return x.clone();
    }
    SignalSeries(x.iter().map(|&v| f.eval(v)).collect())
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-12;

/// Per-sample restitution `f^-1(y)` on `[-domain_bound, domain_bound]`.
///
/// Readings whose preimage lies outside the domain are clamped to its edge.
pub fn invert_sensor(f: &SensorModel, y: &SignalSeries, domain_bound: f64) -> Result<SignalSeries> {
    if !(domain_bound > 0.0 && domain_bound.is_finite()) {
        return Err(Error::InvalidArgument("domain bound must be positive and finite".into()));
    }
    if !f.is_monotone_on(domain_bound) {
        return Err(Error::NonInvertibleModel(format!(
            "f' = 1 + 2({})x + 3({})x^2 reaches {} on [-{domain_bound}, {domain_bound}]",
            f.k1,
            f.k2,
            f.min_slope(domain_bound)
        )));
    }
    let out = y
        .iter()
        .map(|&target| invert_one(f, target, domain_bound))
        .collect::<Result<Vec<_>>>()?;
    SignalSeries::from_finite(out)
}

fn invert_one(f: &SensorModel, target: f64, bound: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-bound, bound);
    if target <= f.eval(lo) {
        return Ok(lo);
    }
    if target >= f.eval(hi) {
        return Ok(hi);
    }
    let mut x = target.clamp(lo, hi);
    for _ in 0..NEWTON_MAX_ITER {
        let r = f.eval(x) - target;
        if r.abs() < NEWTON_TOL {
            return Ok(x);
        }
        // Keep a bracket so an overshooting step falls back to bisection.
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = x - r / f.derivative(x);
        let next = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if next == x {
            // Converged to machine precision; the residual floor exceeds the tolerance.
            return Ok(x);
        }
        x = next;
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        target,
    })
}

pub fn add_noise(y: &SignalSeries, noise: &NoiseModel) -> SignalSeries {
    if noise.sigma == 0.0 {
        return y.clone();
    }
    let n = gaussian(y.len(), noise.sigma, noise.seed);
    SignalSeries(y.iter().zip(n).map(|(a, b)| a + b).collect())
}

/// Runs the full chain `e -> x = h * e -> y = f(x) + n`.
pub fn simulate(config: &ChainConfig) -> Result<ChainOutput> {
    config.validate()?;
    let h = config.filter.build()?;
    let event = gen_awgn_event(config.num_samples, config.event_sigma, config.seed)?;
    let measurand = convolve(&event, &h)?;
    let reading = add_noise(&apply_sensor(&config.sensor, &measurand), &config.noise);
    Ok(ChainOutput {
        event,
        measurand,
        reading,
    })
}
