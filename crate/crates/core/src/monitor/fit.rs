//! Least-squares fit of `y = a·exp(-k·t) + c` by Levenberg-Marquardt.

use serde::{Deserialize, Serialize};

use super::series::AmplitudeSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    /// V
    pub a: f64,
    /// 1/s
    pub k: f64,
    /// V
    pub c: f64,
    pub r_squared: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ExpFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.a * (-self.k * t).exp() + self.c
    }
}

const MIN_SAMPLES: usize = 4;
const MAX_ITERATIONS: usize = 500;

pub fn fit_exponential(series: &AmplitudeSeries, range: [f64; 2]) -> Result<ExpFit> {
    let window = series.window(range);
    let t: Vec<f64> = window.iter().map(|s| s.irradiation_time).collect();
    let y: Vec<f64> = window.iter().map(|s| s.amplitude).collect();
    fit_points(&t, &y)
}

/// Fits raw `(t, y)` pairs. `t` must be sorted ascending.
pub fn fit_points(t: &[f64], y: &[f64]) -> Result<ExpFit> {
    if t.len() != y.len() {
        return Err(Error::invalid("time and amplitude lengths differ"));
    }
    if t.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES,
            got: t.len(),
        });
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if ss_tot <= n * (1e-12 * scale).powi(2) {
        // Flat data carries no decay information.
        return Ok(ExpFit {
            a: 0.0,
            k: 0.0,
            c: mean,
            r_squared: 0.0,
            converged: false,
            iterations: 0,
        });
    }

    // Work in shifted time so `a` stays well scaled for late windows.
    let t_ref = t[0];
    let tau: Vec<f64> = t.iter().map(|v| v - t_ref).collect();
    let mut p = initial_guess(&tau, y);
    let mut ssr = sum_sq_residuals(&tau, y, &p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&tau, y, &p);
        let mut improved = false;
        while lambda < 1e16 {
            let mut m = jtj;
            for i in 0..3 {
                m[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            let Some(delta) = solve3(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]];
            let trial_ssr = sum_sq_residuals(&tau, y, &trial);
            if trial_ssr.is_finite() && trial_ssr <= ssr {
                let rel_change = (ssr - trial_ssr) / ssr.max(f64::MIN_POSITIVE);
                let step_small = delta
                    .iter()
                    .zip(&trial)
                    .all(|(d, v)| d.abs() <= 1e-12 * v.abs().max(1e-12));
                p = trial;
                ssr = trial_ssr;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel_change < 1e-15 || step_small || ssr <= ss_tot * 1e-30 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: we are at a (numerical) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let [a_shift, k, c] = p;
    let a = a_shift * (k * t_ref).exp();
    let converged = converged && k > 0.0 && a > 0.0 && a.is_finite();
    Ok(ExpFit {
        a,
        k,
        c,
        r_squared: 1.0 - ssr / ss_tot,
        converged,
        iterations,
    })
}

fn initial_guess(tau: &[f64], y: &[f64]) -> [f64; 3] {
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-3 * (max - min).max(f64::MIN_POSITIVE);
    let c0 = min - eps;
    let a0 = y[0] - c0;
    // Log-linear regression of y - c0 against t.
    let pts: Vec<(f64, f64)> = tau
        .iter()
        .zip(y)
        .map(|(&t, &v)| (t, (v - c0).ln()))
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let k0 = if sxx > 0.0 { -sxy / sxx } else { 0.0 };
    let span = tau.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let k0 = if k0.is_finite() && k0 > 0.0 { k0 } else { 1.0 / span };
    [a0, k0, c0]
}

fn sum_sq_residuals(tau: &[f64], y: &[f64], p: &[f64; 3]) -> f64 {
    tau.iter()
        .zip(y)
        .map(|(&t, &v)| (v - (p[0] * (-p[1] * t).exp() + p[2])).powi(2))
        .sum()
}

fn normal_equations(tau: &[f64], y: &[f64], p: &[f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (&t, &v) in tau.iter().zip(y) {
        let e = (-p[1] * t).exp();
        let r = v - (p[0] * e + p[2]);
        let j = [e, -p[0] * t * e, 1.0];
        for a in 0..3 {
            jtr[a] += j[a] * r;
            for b in 0..3 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::AmplitudeSample;

    fn series(f: impl Fn(f64) -> f64, n: usize, dt: f64) -> AmplitudeSeries {
        AmplitudeSeries::from_samples((0..n).map(|i| AmplitudeSample {
            irradiation_time: i as f64 * dt,
            amplitude: f(i as f64 * dt),
            pulse_index: i as u64,
        }))
        .unwrap()
    }

    #[test]
    fn recovers_noiseless_exponential() {
        let s = series(|t| 3.0 * (-0.06 * t).exp() + 0.5, 71, 1.0);
        let fit = fit_exponential(&s, [0.0, 70.0]).unwrap();
        assert!(fit.converged);
        assert!((fit.a - 3.0).abs() < 0.01 * 3.0);
        assert!((fit.k - 0.06).abs() < 0.01 * 0.06);
        assert!((fit.c - 0.5).abs() < 0.01 * 0.5);
        assert!(fit.r_squared > 0.9999);
    }

    #[test]
    fn late_window_reports_absolute_time_amplitude() {
        let s = series(|t| 2.0 * (-0.05 * t).exp() + 0.3, 200, 0.5);
        let fit = fit_exponential(&s, [50.0, 99.5]).unwrap();
        assert!(fit.converged);
        assert!((fit.a - 2.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.eval(60.0) - (2.0 * (-3.0f64).exp() + 0.3)).abs() < 1e-9);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = series(|_| 1.7, 30, 1.0);
        let fit = fit_exponential(&s, [0.0, 30.0]).unwrap();
        assert!(!fit.converged || fit.k < 1e-6);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn too_few_samples() {
        let s = series(|t| (-t).exp(), 3, 1.0);
        assert!(matches!(
            fit_exponential(&s, [0.0, 10.0]),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn rising_data_does_not_claim_convergence() {
        let s = series(|t| 1.0 + 0.1 * t, 20, 1.0);
        let fit = fit_exponential(&s, [0.0, 20.0]).unwrap();
        assert!(!fit.converged);
        assert!(fit.r_squared <= 1.0);
    }

    #[test]
    fn solve3_handles_pivoting() {
        let x = solve3([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 2.0]], [2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x, [3.0, 2.0, 2.0]);
        assert!(solve3([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [1.0, 1.0, 1.0]).is_none());
    }
}
