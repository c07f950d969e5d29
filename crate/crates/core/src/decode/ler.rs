use crate::{Error, Result};

const Z95: f64 = 1.959963984540054;

/// Logical error rate from `failures` out of `shots`, with a Wilson 95%
/// interval. Zero failures report `0.5 / shots` so that `−log10` stays finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LerEstimate {
    pub failures: usize,
    pub shots: usize,
    pub ler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl LerEstimate {
    pub fn new(failures: usize, shots: usize) -> Result<Self> {
        if shots == 0 || failures > shots {
            return Err(Error::InvalidArgument(format!("{failures} failures out of {shots} shots")));
        }
        let n = shots as f64;
        let raw = failures as f64 / n;
        let (lo, hi) = wilson(failures, shots, Z95);
        let ler = if failures == 0 { 0.5 / n } else { raw };
        Ok(LerEstimate { failures, shots, ler, ci_low: lo.min(ler), ci_high: hi.max(ler) })
    }

    /// `−log10(ler)`.
    pub fn reward(&self) -> f64 {
        -self.ler.log10()
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Memory experiment result at one duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LerPoint {
    pub rounds: usize,
    pub ler: f64,
    pub shots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub epsilon: f64,
    pub epsilon_stderr: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Fits `ln(1 − 2E_r) = a + b·r` by weighted least squares and returns the
/// per-cycle error `ε = (1 − e^b) / 2`.
///
/// Weights are inverse variances propagated from the binomial variance of
/// each `E_r`; a point with no failures uses the `0.5 / shots` floor for its
/// variance.
pub fn fit_ler_exponential(points: &[LerPoint]) -> Result<ExponentialFit> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("exponential fit needs at least two durations".into()));
    }
    if points.iter().all(|p| p.rounds == points[0].rounds) {
        return Err(Error::InvalidArgument("exponential fit needs two distinct durations".into()));
    }
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for p in points {
        if !(0.0..0.5).contains(&p.ler) || p.shots == 0 {
            return Err(Error::Numerical(format!(
                "logical error {} at r={} is outside [0, 0.5)",
                p.ler, p.rounds
            )));
        }
        let n = p.shots as f64;
        let e = p.ler.max(0.5 / n).min(0.5 - 1e-12);
        let f = 1.0 - 2.0 * p.ler;
        let var = 4.0 * e * (1.0 - e) / n / (f * f);
        let w = 1.0 / var;
        let x = p.rounds as f64;
        let y = f.ln();
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if !(det > 0.0) {
        return Err(Error::InvalidArgument("exponential fit needs two distinct durations".into()));
    }
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swy - slope * swx) / sw;
    let slope_var = sw / det;
    let epsilon = (1.0 - slope.exp()) / 2.0;
    let epsilon_stderr = slope.exp() / 2.0 * slope_var.sqrt();
    if !epsilon.is_finite() {
        return Err(Error::Numerical("exponential fit diverged".into()));
    }
    Ok(ExponentialFit { epsilon, epsilon_stderr, slope, intercept })
}
