//! Semi-blind calibration numerics.
//!
//! With a known event `e` and a trusted sensor model, the environment `h` is
//! identified by causal least squares. Later, with `h` held fixed, the drifted
//! sensor polynomial is re-fitted directly from `(h * e, y)`. Environment
//! responses are compared by shape: unit energy, canonical sign, and the best
//! normalized cross-correlation over a small lag window.

use crate::error::{Error, Result};
use crate::linalg::{condition_estimate, Cholesky, SquareMatrix};
use crate::signal::{convolve, convolve_causal, invert_sensor, FirFilter, SensorModel, SignalSeries};

/// Normal matrices with a larger condition estimate are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// A filter reduced to its shape: unit energy with the largest-magnitude tap positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDescriptor {
    normalized_taps: Vec<f64>,
}

impl ShapeDescriptor {
    pub fn taps(&self) -> &[f64] {
        &self.normalized_taps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    pub residual_rms: f64,
    pub condition_estimate: f64,
    pub num_samples_used: usize,
}

fn residual_rms(target: &[f64], fitted: &[f64]) -> f64 {
    let sse: f64 = target.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
    (sse / target.len() as f64).sqrt()
}

/// Causal least-squares FIR estimate of `order` taps mapping `e` to `x_est`.
///
/// Row `t` of the design matrix holds `e[t], e[t-1], ..., e[t-order+1]` with
/// zeros before the start. The normal matrix is assembled from lagged
/// products in `O(n * order)` and solved by Cholesky.
pub fn estimate_fir(
    e: &SignalSeries,
    x_est: &SignalSeries,
    order: usize,
) -> Result<(FirFilter, FitDiagnostics)> {
    if order == 0 {
        return Err(Error::InvalidArgument("FIR order must be positive".into()));
    }
    if e.len() != x_est.len() {
        return Err(Error::LengthMismatch {
            left: e.len(),
            right: x_est.len(),
        });
    }
    let n = e.len();
    if n < 4 * order {
        return Err(Error::InsufficientData(format!(
            "{n} samples cannot identify {order} taps (need at least {})",
            4 * order
        )));
    }

    // R[i][j] = sum_{t >= max(i,j)} e[t-i] e[t-j];  R[i+1][j+1] = R[i][j] - e[n-1-i] e[n-1-j].
    let mut normal = SquareMatrix::zeros(order);
    for k in 0..order {
        let r0k: f64 = (k..n).map(|t| e[t] * e[t - k]).sum();
        normal.set(0, k, r0k);
        normal.set(k, 0, r0k);
    }
    for i in 0..order - 1 {
        for j in i..order - 1 {
            let v = normal.get(i, j) - e[n - 1 - i] * e[n - 1 - j];
            normal.set(i + 1, j + 1, v);
            normal.set(j + 1, i + 1, v);
        }
    }
    let rhs: Vec<f64> = (0..order)
        .map(|i| (i..n).map(|t| x_est[t] * e[t - i]).sum())
        .collect();

    let chol = Cholesky::factor(&normal).ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let condition = condition_estimate(&normal, &chol);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned { condition });
    }
    let taps = chol.solve(&rhs);
    let fitted = convolve_causal(e, &taps);
    let diagnostics = FitDiagnostics {
        residual_rms: residual_rms(x_est, &fitted),
        condition_estimate: condition,
        num_samples_used: n,
    };
    Ok((FirFilter::new(taps)?, diagnostics))
}

/// Least-squares fit of `y - x` on `{x^2, x^3}`, i.e. the sensor family with unit linear term.
pub fn fit_sensor_polynomial(
    x: &SignalSeries,
    y: &SignalSeries,
) -> Result<(SensorModel, FitDiagnostics)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "polynomial fit needs at least 10 samples, got {}",
            x.len()
        )));
    }
    let mut distinct: Vec<f64> = Vec::with_capacity(3);
    for &v in x.iter() {
        if !distinct.contains(&v) {
            distinct.push(v);
            if distinct.len() == 3 {
                break;
            }
        }
    }
    if distinct.len() < 3 {
        return Err(Error::DegenerateInput(
            "measurand needs at least 3 distinct values".into(),
        ));
    }

    let (mut g22, mut g23, mut g33, mut b2, mut b3) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xv, &yv) in x.iter().zip(y.iter()) {
        let (p2, p3) = (xv * xv, xv * xv * xv);
        let r = yv - xv;
        g22 += p2 * p2;
        g23 += p2 * p3;
        g33 += p3 * p3;
        b2 += p2 * r;
        b3 += p3 * r;
    }
    let det = g22 * g33 - g23 * g23;
    if !(det > 1e-12 * g22 * g33) {
        return Err(Error::DegenerateInput("basis Gram matrix is singular".into()));
    }
    let k1 = (g33 * b2 - g23 * b3) / det;
    let k2 = (g22 * b3 - g23 * b2) / det;

    let half_trace = 0.5 * (g22 + g33);
    let disc = (0.25 * (g22 - g33).powi(2) + g23 * g23).sqrt();
    let condition = ((half_trace + disc) / (half_trace - disc)).max(1.0);

    let model = SensorModel::new(k1, k2)?;
    let fitted: Vec<f64> = x.iter().map(|&v| model.eval(v)).collect();
    Ok((
        model,
        FitDiagnostics {
            residual_rms: residual_rms(y, &fitted),
            condition_estimate: condition,
            num_samples_used: x.len(),
        },
    ))
}

pub fn shape_of(h: &FirFilter) -> Result<ShapeDescriptor> {
    let energy = h.energy();
    if energy == 0.0 {
        return Err(Error::ZeroFilter);
    }
    let peak = h
        .taps()
        .iter()
        .copied()
        .fold(0.0_f64, |best, t| if t.abs() > best.abs() { t } else { best });
    let scale = peak.signum() / energy.sqrt();
    Ok(ShapeDescriptor {
        normalized_taps: h.taps().iter().map(|t| t * scale).collect(),
    })
}

/// `1 - max_lag |k| <= max_lag` normalized cross-correlation; `0` means same shape.
pub fn shape_distance(a: &ShapeDescriptor, b: &ShapeDescriptor, max_lag: usize) -> f64 {
    let (a, b) = (a.taps(), b.taps());
    let norm = (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let lag = max_lag as isize;
    let best = (-lag..=lag)
        .map(|k| {
            // sum_i a[i] * b[i + k]
            a.iter()
                .enumerate()
                .filter_map(|(i, av)| {
                    let j = i as isize + k;
                    (j >= 0 && (j as usize) < b.len()).then(|| av * b[j as usize])
                })
                .sum::<f64>()
                / norm
        })
        .fold(f64::NEG_INFINITY, f64::max);
    (1.0 - best).clamp(0.0, 2.0)
}

/// A restitution domain wide enough to contain the preimage of every reading.
pub fn restitution_bound(y: &SignalSeries) -> f64 {
    2.0 * y.max_abs() + 1.0
}

/// Reliable-calibration stage: restitute `x` with the trusted model, then identify `h`.
pub fn semi_blind_rc(
    e_known: &SignalSeries,
    y: &SignalSeries,
    f_known: &SensorModel,
    order: usize,
) -> Result<(FirFilter, FitDiagnostics)> {
    let x_est = invert_sensor(f_known, y, restitution_bound(y))?;
    estimate_fir(e_known, &x_est, order)
}

/// Unreliable-calibration stage: predict `x = h * e` and re-fit the sensor polynomial.
pub fn semi_blind_uc(
    e_known: &SignalSeries,
    y: &SignalSeries,
    h_known: &FirFilter,
) -> Result<(SensorModel, FitDiagnostics)> {
    let x_pred = convolve(e_known, h_known)?;
    fit_sensor_polynomial(&x_pred, y)
}

/// Shape distance between `h` re-estimated under a stale sensor model and a reference `h`.
///
/// Small values mean the environment is unchanged, so any mismatch in
/// restitution is attributable to sensor drift.
pub fn drift_diagnostic(
    e_known: &SignalSeries,
    y: &SignalSeries,
    f_stale: &SensorModel,
    h_reference: &FirFilter,
    order: usize,
) -> Result<f64> {
    let (h_hat, _) = semi_blind_rc(e_known, y, f_stale, order)?;
    Ok(shape_distance(
        &shape_of(&h_hat)?,
        &shape_of(h_reference)?,
        order / 10,
    ))
}
