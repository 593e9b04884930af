//! Selected-peak amplitude extraction and SNR measurement.

use serde::{Deserialize, Serialize};

use super::envelope::envelope;
use super::wavelet::{dwt_decompose, reconstruct_bands, WaveletConfig};
use crate::acoustic::Trace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakMode {
    GlobalMax,
    NthEnvelopePeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSelector {
    pub mode: PeakMode,
    /// 1-based, in arrival order. Used by `NthEnvelopePeak`.
    pub peak_index: usize,
    /// s, relative to the trigger.
    pub search_window: [f64; 2],
    /// Envelope maxima closer than this (s) are treated as one arrival.
    pub min_separation: f64,
    /// Peaks below this fraction of the window maximum are ignored.
    pub min_relative_height: f64,
}

impl PeakSelector {
    pub fn global_max() -> Self {
        Self {
            mode: PeakMode::GlobalMax,
            peak_index: 1,
            search_window: [0.0, 10.0e-6],
            min_separation: 0.4e-6,
            min_relative_height: 0.15,
        }
    }

    pub fn nth(peak_index: usize) -> Self {
        Self {
            mode: PeakMode::NthEnvelopePeak,
            peak_index,
            ..Self::global_max()
        }
    }

    pub fn validate(&self, trace: &Trace) -> Result<()> {
        if self.peak_index < 1 {
            return Err(Error::invalid("peak_index is 1-based"));
        }
        let [lo, hi] = self.search_window;
        if !(lo < hi && lo >= trace.t0 && hi <= trace.t0 + trace.duration() + 1e-15) {
            return Err(Error::invalid(format!(
                "search window [{lo}, {hi}] s is not inside the {} s trace",
                trace.duration()
            )));
        }
        Ok(())
    }
}

impl Default for PeakSelector {
    fn default() -> Self {
        Self::global_max()
    }
}

/// One point of the monitored series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSample {
    /// s
    pub irradiation_time: f64,
    /// V
    pub amplitude: f64,
    pub pulse_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakDetection {
    pub sample: AmplitudeSample,
    /// Sample index of the selected peak within the trace.
    pub index: usize,
    /// Arrival time within the trace, s.
    pub time: f64,
    /// No envelope maximum stood out from the noise floor, or the requested
    /// peak did not exist; the amplitude is then the largest envelope value.
    pub low_confidence: bool,
}

/// Envelope maxima must exceed this multiple of the window's median envelope.
const NOISE_FLOOR_FACTOR: f64 = 4.0;

/// Band-limited analytic envelope of a trace.
pub fn band_envelope(trace: &Trace, wl: &WaveletConfig) -> Result<Vec<f64>> {
    let bands = dwt_decompose(&trace.samples, wl)?;
    let filtered = reconstruct_bands(&bands, &wl.selected_bands)?;
    Ok(envelope(&filtered))
}

pub fn extract_peak(trace: &Trace, wl: &WaveletConfig, sel: &PeakSelector) -> Result<PeakDetection> {
    sel.validate(trace)?;
    let env = band_envelope(trace, wl)?;
    let range = trace.index_range(sel.search_window);
    if range.is_empty() {
        return Err(Error::invalid("search window contains no samples"));
    }
    let offset = range.start;
    let window = &env[range];

    let (max_i, max_v) = window
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let finish = |i: usize, low_confidence: bool| {
        let index = offset + i;
        PeakDetection {
            sample: AmplitudeSample {
                irradiation_time: trace.irradiation_time,
                amplitude: window[i],
                pulse_index: trace.pulse_index,
            },
            index,
            time: trace.time_of(index),
            low_confidence,
        }
    };
    if !(max_v > 0.0) {
        return Ok(finish(max_i, true));
    }

    let mut sorted = window.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let threshold = (NOISE_FLOOR_FACTOR * median).max(sel.min_relative_height * max_v);
    if max_v <= NOISE_FLOOR_FACTOR * median {
        return Ok(finish(max_i, true));
    }

    let peaks = local_peaks(window, threshold, sel.min_separation * trace.sample_rate);
    let chosen = match sel.mode {
        PeakMode::GlobalMax => Some(max_i),
        PeakMode::NthEnvelopePeak => peaks.get(sel.peak_index - 1).copied(),
    };
    Ok(match chosen {
        Some(i) => finish(i, false),
        None => finish(max_i, true),
    })
}

/// Local maxima above `threshold`, thinned by non-maximum suppression over
/// `min_distance` samples, returned in index order.
fn local_peaks(env: &[f64], threshold: f64, min_distance: f64) -> Vec<usize> {
    let n = env.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let v = env[i];
            v >= threshold
                && (i == 0 || env[i - 1] <= v)
                && (i + 1 == n || env[i + 1] < v)
        })
        .collect();
    candidates.sort_by(|&a, &b| env[b].total_cmp(&env[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|&k| (k as f64 - c as f64).abs() >= min_distance)
        {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

/// `20·log10(max |signal window| / std(noise window))`. Returns
/// `f64::INFINITY` when the noise window is exactly flat.
pub fn snr_db(trace: &Trace, noise_window: [f64; 2], signal_window: [f64; 2]) -> Result<f64> {
    for w in [noise_window, signal_window] {
        if !(w[0] < w[1]) {
            return Err(Error::invalid(format!("window [{}, {}] is empty", w[0], w[1])));
        }
    }
    if noise_window[0] < signal_window[1] && signal_window[0] < noise_window[1] {
        return Err(Error::invalid("noise and signal windows overlap"));
    }
    let noise = &trace.samples[trace.index_range(noise_window)];
    let signal = &trace.samples[trace.index_range(signal_window)];
    if noise.len() < 2 || signal.is_empty() {
        return Err(Error::invalid("windows fall outside the trace"));
    }
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let var = noise.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / noise.len() as f64;
    let peak = signal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if var == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / var.sqrt()).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn trace(samples: Vec<f64>) -> Trace {
        Trace {
            samples,
            sample_rate: 100e6,
            t0: 0.0,
            irradiation_time: 1.5,
            pulse_index: 7,
        }
    }

    fn burst(n: usize, center: f64, amp: f64) -> Vec<f64> {
        let s = 12.5;
        (0..n)
            .map(|i| {
                let t = i as f64 - center;
                amp * (-(t * t) / (2.0 * s * s)).exp() * (2.0 * PI * 0.05 * t).cos()
            })
            .collect()
    }

    fn wide_band() -> WaveletConfig {
        WaveletConfig {
            selected_bands: [2, 3, 4, 5].into_iter().collect(),
            ..Default::default()
        }
    }

    #[test]
    fn single_burst_amplitude_and_time() {
        let t = trace(burst(2048, 300.0, 1.7));
        let d = extract_peak(&t, &wide_band(), &PeakSelector::global_max()).unwrap();
        assert!((d.sample.amplitude - 1.7).abs() < 0.02 * 1.7, "{}", d.sample.amplitude);
        assert!((d.index as i64 - 300).abs() <= 1);
        assert!(!d.low_confidence);
        assert_eq!(d.sample.pulse_index, 7);
        assert_eq!(d.sample.irradiation_time, 1.5);
    }

    #[test]
    fn zero_trace_is_low_confidence() {
        let t = trace(vec![0.0; 2048]);
        let d = extract_peak(&t, &WaveletConfig::default(), &PeakSelector::global_max()).unwrap();
        assert_eq!(d.sample.amplitude, 0.0);
        assert!(d.low_confidence);
    }

    #[test]
    fn first_peak_equals_global_max_for_single_arrival() {
        let t = trace(burst(2048, 500.0, 1.0));
        let wl = WaveletConfig::default();
        let g = extract_peak(&t, &wl, &PeakSelector::global_max()).unwrap();
        let n = extract_peak(&t, &wl, &PeakSelector::nth(1)).unwrap();
        assert_eq!(g, n);
    }

    #[test]
    fn second_peak_selects_later_arrival() {
        let mut x = burst(2048, 100.0, 1.0);
        x.iter_mut()
            .zip(burst(2048, 250.0, 2.5))
            .for_each(|(a, b)| *a += b);
        let t = trace(x);
        let d = extract_peak(&t, &wide_band(), &PeakSelector::nth(2)).unwrap();
        assert!((d.index as i64 - 250).abs() <= 1);
        let first = extract_peak(&t, &wide_band(), &PeakSelector::nth(1)).unwrap();
        assert!((first.index as i64 - 100).abs() <= 1);
        let third = extract_peak(&t, &wide_band(), &PeakSelector::nth(3)).unwrap();
        assert!(third.low_confidence);
    }

    #[test]
    fn selector_window_is_validated() {
        let t = trace(vec![0.0; 2048]);
        let mut sel = PeakSelector::global_max();
        sel.search_window = [0.0, 1.0];
        assert!(extract_peak(&t, &WaveletConfig::default(), &sel).is_err());
        let mut sel = PeakSelector::nth(1);
        sel.peak_index = 0;
        assert!(extract_peak(&t, &WaveletConfig::default(), &sel).is_err());
    }

    #[test]
    fn snr_definition() {
        // Noise window alternates ±0.1 (std 0.1), signal peak 1.
        let mut x = vec![0.0; 2000];
        for (i, v) in x.iter_mut().enumerate().skip(1000) {
            *v = if i % 2 == 0 { 0.1 } else { -0.1 };
        }
        x[100] = -1.0;
        let t = trace(x);
        let snr = snr_db(&t, [10e-6, 20e-6], [0.0, 5e-6]).unwrap();
        assert!((snr - 20.0).abs() < 1e-9, "{snr}");
    }

    #[test]
    fn snr_edge_cases() {
        let mut x = vec![0.0; 2000];
        x[10] = 1.0;
        let t = trace(x);
        assert_eq!(snr_db(&t, [10e-6, 19e-6], [0.0, 5e-6]).unwrap(), f64::INFINITY);
        assert!(matches!(
            snr_db(&t, [4e-6, 19e-6], [0.0, 5e-6]),
            Err(Error::InvalidArgument(_))
        ));
    }
}
