//! Acquisition chain: initial pressure to an averaged oscilloscope trace.
//!
//! Each pulse renders N-shaped pressure arrivals at their propagation delays,
//! band-limits them with the transducer response, converts to volts, applies
//! the receiver gain and then averages `num_averages` independently noised
//! copies, as the oscilloscope does.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{self, stream};
use crate::tissue::{initial_pressure, LaserPulseConfig, OpticalProperties, TissueState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransducerModel {
    /// Hz
    pub center_frequency: f64,
    /// -6 dB fractional bandwidth.
    pub fractional_bandwidth: f64,
    /// V/Pa at the center frequency.
    pub sensitivity: f64,
}

impl Default for TransducerModel {
    fn default() -> Self {
        Self {
            center_frequency: 5.0e6,
            fractional_bandwidth: 0.6,
            sensitivity: DEFAULT_SENSITIVITY,
        }
    }
}

/// Puts the default tattoo scenario's selected peak near 3 V at the start of treatment.
pub const DEFAULT_SENSITIVITY: f64 = 1.47e-6;

impl TransducerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_frequency > 0.0) {
            return Err(Error::Config("center_frequency must be positive".into()));
        }
        if !(self.fractional_bandwidth > 0.0 && self.fractional_bandwidth < 2.0) {
            return Err(Error::Config(format!(
                "fractional_bandwidth must lie in (0, 2), got {}",
                self.fractional_bandwidth
            )));
        }
        if !(self.sensitivity.is_finite() && self.sensitivity >= 0.0) {
            return Err(Error::Config("sensitivity must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Std of the gaussian time envelope of the impulse response, in s.
    pub fn envelope_sigma(&self) -> f64 {
        let spectral_sigma =
            self.fractional_bandwidth * self.center_frequency / (2.0 * (2.0 * 2f64.ln()).sqrt());
        1.0 / (2.0 * PI * spectral_sigma)
    }

    /// Gaussian-windowed cosine impulse response, unit gain at the center frequency.
    /// Returns the taps for lags `-m..=m` (index `m` is lag zero).
    pub fn impulse_response(&self, sample_rate: f64) -> Vec<f64> {
        let sigma = self.envelope_sigma();
        let half = (4.0 * sigma * sample_rate).ceil() as i64;
        let w = 2.0 * PI * self.center_frequency / sample_rate;
        let taps: Vec<f64> = (-half..=half)
            .map(|m| {
                let t = m as f64 / sample_rate;
                (-(t * t) / (2.0 * sigma * sigma)).exp() * (w * m as f64).cos()
            })
            .collect();
        let gain: f64 = (-half..=half)
            .zip(&taps)
            .map(|(m, h)| h * (w * m as f64).cos())
            .sum();
        taps.into_iter().map(|h| h / gain).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Hz
    pub sample_rate: f64,
    pub num_samples: usize,
    /// Receiver gain, dB.
    pub gain_db: f64,
    pub num_averages: usize,
    /// Std of the additive noise on each raw (pre-average) trace, V.
    pub noise_sigma: f64,
    /// m/s
    pub speed_of_sound: f64,
    /// Radius of the absorbing region; sets the N-wave duration. m.
    pub absorber_radius: f64,
    /// Pressure transmission factor of the coupling medium.
    pub coupling_efficiency: f64,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            sample_rate: 100.0e6,
            num_samples: 2048,
            gain_db: 46.0,
            num_averages: 60,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            speed_of_sound: 1500.0,
            absorber_radius: 100.0e-6,
            coupling_efficiency: 1.0,
            seed: 0,
        }
    }
}

/// Raw-trace noise giving about 30 dB averaged-trace SNR for the default scenario at t = 0.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.78;

impl AcquisitionConfig {
    pub fn validate(&self, td: &TransducerModel) -> Result<()> {
        td.validate()?;
        if !(self.sample_rate >= 4.0 * td.center_frequency) {
            return Err(Error::Config(format!(
                "sample_rate {} Hz is below 4x the transducer center frequency {} Hz",
                self.sample_rate, td.center_frequency
            )));
        }
        if self.num_averages < 1 {
            return Err(Error::Config("num_averages must be at least 1".into()));
        }
        if self.num_samples < 2 {
            return Err(Error::Config("num_samples must be at least 2".into()));
        }
        if !(self.speed_of_sound > 0.0 && self.absorber_radius > 0.0) {
            return Err(Error::Config(
                "speed_of_sound and absorber_radius must be positive".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.coupling_efficiency >= 0.0) {
            return Err(Error::Config(
                "noise_sigma and coupling_efficiency must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate
    }

    /// Half duration of the N-wave, s.
    pub fn n_wave_half_duration(&self) -> f64 {
        self.absorber_radius / self.speed_of_sound
    }
}

/// One averaged, sampled voltage waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub samples: Vec<f64>,
    /// Hz
    pub sample_rate: f64,
    /// Trigger time of sample 0, s.
    pub t0: f64,
    pub irradiation_time: f64,
    pub pulse_index: u64,
}

impl Trace {
    pub fn time_of(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Sample range covering `[start, end]` seconds, clamped to the trace.
    pub fn index_range(&self, window: [f64; 2]) -> std::ops::Range<usize> {
        let n = self.samples.len();
        // Tolerate rounding in time-to-index conversion.
        const EPS: f64 = 1e-9;
        let lo = ((window[0] - self.t0) * self.sample_rate - EPS).ceil().max(0.0) as usize;
        let hi = (((window[1] - self.t0) * self.sample_rate + EPS).floor() as i64 + 1)
            .clamp(0, n as i64) as usize;
        lo.min(n)..hi.max(lo.min(n))
    }
}

/// A pressure source at a given depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    /// Pa
    pub pressure: f64,
    /// m
    pub depth: f64,
}

#[inline]
fn n_wave(tau: f64, p0: f64, half: f64) -> f64 {
    if tau.abs() <= half {
        -p0 * tau / half
    } else {
        0.0
    }
}

/// Bipolar N-shaped pressure pulse sampled on `-h..=h`, compression first.
pub fn source_wavelet(p0: f64, sample_rate: f64, half_duration: f64) -> Vec<f64> {
    let h = (half_duration * sample_rate).floor() as i64;
    (-h..=h)
        .map(|n| n_wave(n as f64 / sample_rate, p0, half_duration))
        .collect()
}

pub fn propagation_delay(depth: f64, speed_of_sound: f64) -> Result<f64> {
    if !(depth > 0.0 && speed_of_sound > 0.0) {
        return Err(Error::invalid(format!(
            "depth and speed of sound must be positive, got {depth} m, {speed_of_sound} m/s"
        )));
    }
    Ok(depth / speed_of_sound)
}

/// Convolves with the transducer impulse response, keeping the input alignment.
pub fn transducer_filter(
    waveform: &[f64],
    sample_rate: f64,
    model: &TransducerModel,
) -> Result<Vec<f64>> {
    model.validate()?;
    if sample_rate < 4.0 * model.center_frequency {
        return Err(Error::Config(format!(
            "sample_rate {sample_rate} Hz violates the 4x center-frequency margin"
        )));
    }
    let taps = model.impulse_response(sample_rate);
    let half = (taps.len() / 2) as i64;
    let n = waveform.len() as i64;
    let mut out = vec![0.0; waveform.len()];
    for (i, &x) in waveform.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let i = i as i64;
        let lo = (i - half).max(0);
        let hi = (i + half).min(n - 1);
        for j in lo..=hi {
            out[j as usize] += taps[(j - i + half) as usize] * x;
        }
    }
    Ok(out)
}

pub fn apply_gain_db(waveform: &mut [f64], gain_db: f64) {
    let g = 10f64.powf(gain_db / 20.0);
    waveform.iter_mut().for_each(|x| *x *= g);
}

/// Samplewise mean; metadata is taken from the first trace.
pub fn average_traces(traces: &[Trace]) -> Result<Trace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty trace list"))?;
    let len = first.samples.len();
    if let Some(bad) = traces
        .iter()
        .find(|t| t.samples.len() != len || t.sample_rate != first.sample_rate)
    {
        return Err(Error::invalid(format!(
            "trace shape mismatch: {} samples @ {} Hz vs {} @ {} Hz",
            bad.samples.len(),
            bad.sample_rate,
            len,
            first.sample_rate
        )));
    }
    let mut acc = vec![0.0; len];
    for t in traces {
        acc.iter_mut().zip(&t.samples).for_each(|(a, x)| *a += x);
    }
    let inv = 1.0 / traces.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(Trace {
        samples: acc,
        ..first.clone()
    })
}

/// Noise-free voltage trace (after filter, sensitivity and gain) for a set of arrivals.
pub fn clean_waveform(
    arrivals: &[Arrival],
    td: &TransducerModel,
    acq: &AcquisitionConfig,
) -> Result<Vec<f64>> {
    acq.validate(td)?;
    let fs = acq.sample_rate;
    let half = acq.n_wave_half_duration();
    let mut pressure = vec![0.0; acq.num_samples];
    for a in arrivals {
        if !(a.pressure.is_finite() && a.pressure >= 0.0) {
            return Err(Error::invalid(format!("arrival pressure {} is invalid", a.pressure)));
        }
        let p0 = a.pressure * acq.coupling_efficiency;
        if p0 == 0.0 {
            continue;
        }
        let delay = propagation_delay(a.depth, acq.speed_of_sound)?;
        let lo = ((delay - half) * fs).floor().max(0.0) as usize;
        let hi = (((delay + half) * fs).ceil() as usize + 1).min(acq.num_samples);
        for (n, p) in pressure.iter_mut().enumerate().take(hi).skip(lo) {
            *p += n_wave(n as f64 / fs - delay, p0, half);
        }
    }
    let mut v = transducer_filter(&pressure, fs, td)?;
    v.iter_mut().for_each(|x| *x *= td.sensitivity);
    apply_gain_db(&mut v, acq.gain_db);
    Ok(v)
}

/// Averages `num_averages` noisy copies of `clean`. Raw trace `i` of pulse
/// `pulse_index` draws its noise from its own stream, so the result does not
/// depend on `exec`.
pub fn average_noisy(
    clean: &[f64],
    acq: &AcquisitionConfig,
    irradiation_time: f64,
    pulse_index: u64,
    exec: Exec,
) -> Result<Trace> {
    let make = |samples: Vec<f64>| Trace {
        samples,
        sample_rate: acq.sample_rate,
        t0: 0.0,
        irradiation_time,
        pulse_index,
    };
    if acq.noise_sigma == 0.0 {
        return Ok(make(clean.to_vec()));
    }
    let raw = exec.map_indexed(acq.num_averages, |i| {
        let mut rng = rng::stream_rng(acq.seed, &[stream::ACQUISITION, pulse_index, i as u64]);
        let samples = clean
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + acq.noise_sigma * z
            })
            .collect();
        make(samples)
    });
    average_traces(&raw)
}

/// Full chain for a set of arrivals.
pub fn acquire_arrivals(
    arrivals: &[Arrival],
    td: &TransducerModel,
    acq: &AcquisitionConfig,
    irradiation_time: f64,
    pulse_index: u64,
    exec: Exec,
) -> Result<Trace> {
    let clean = clean_waveform(arrivals, td, acq)?;
    average_noisy(&clean, acq, irradiation_time, pulse_index, exec)
}

/// Full chain for the single monitored absorber described by `state`.
pub fn acquire(
    state: &TissueState,
    props: &OpticalProperties,
    laser: &LaserPulseConfig,
    td: &TransducerModel,
    acq: &AcquisitionConfig,
    pulse_index: u64,
) -> Result<Trace> {
    laser.validate()?;
    let p0 = initial_pressure(
        &props.with_absorption(state.effective_absorption()),
        laser.fluence(),
    )?;
    acquire_arrivals(
        &[Arrival {
            pressure: p0,
            depth: state.depth,
        }],
        td,
        acq,
        state.elapsed_irradiation,
        pulse_index,
        Exec::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn trace(samples: Vec<f64>) -> Trace {
        Trace {
            samples,
            sample_rate: 100e6,
            t0: 0.0,
            irradiation_time: 0.0,
            pulse_index: 0,
        }
    }

    #[test]
    fn wavelet_is_linear_zero_mean_and_antisymmetric() {
        assert!(source_wavelet(0.0, 100e6, 66.7e-9).iter().all(|&x| x == 0.0));
        let a = source_wavelet(500.0, 100e6, 66.7e-9);
        let b = source_wavelet(1000.0, 100e6, 66.7e-9);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*y, 2.0 * x);
        }
        let peak = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1e-12 * peak);
        let n = a.len();
        for i in 0..n {
            assert_eq!(a[i], -a[n - 1 - i]);
        }
        assert!(a[0] > 0.0, "compression leads");
    }

    #[test]
    fn propagation_delay_examples() {
        assert_relative_eq!(propagation_delay(2.4e-3, 1500.0).unwrap(), 1.6e-6, max_relative = 1e-12);
        assert_relative_eq!(propagation_delay(0.0015, 1500.0).unwrap(), 1.0e-6, max_relative = 1e-12);
        assert_relative_eq!(
            propagation_delay(4.8e-3, 1500.0).unwrap(),
            2.0 * propagation_delay(2.4e-3, 1500.0).unwrap()
        );
        assert!(propagation_delay(0.0, 1500.0).is_err());
        assert!(propagation_delay(1e-3, -1.0).is_err());
    }

    #[test]
    fn gain_examples() {
        let mut x = vec![1.0, -2.0];
        apply_gain_db(&mut x, 0.0);
        assert_eq!(x, vec![1.0, -2.0]);
        apply_gain_db(&mut x, 20.0);
        assert_relative_eq!(x[0], 10.0, max_relative = 1e-14);
        let mut y = vec![1.0];
        apply_gain_db(&mut y, 46.0);
        // 10^2.3 evaluated independently: e^(2.3 ln 10).
        assert_relative_eq!(y[0], (2.3 * 10f64.ln()).exp(), max_relative = 1e-12);
        assert_relative_eq!(y[0], 199.526, max_relative = 1e-5);
    }

    #[test]
    fn filter_is_linear_and_checks_nyquist() {
        let td = TransducerModel::default();
        let zero = transducer_filter(&[0.0; 64], 100e6, &td).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let x: Vec<f64> = (0..256).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let y = transducer_filter(&x, 100e6, &td).unwrap();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let y3 = transducer_filter(&x3, 100e6, &td).unwrap();
        for (a, b) in y.iter().zip(&y3) {
            assert!((b - 3.0 * a).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!(matches!(
            transducer_filter(&x, 15e6, &td),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn average_examples() {
        let t = trace(vec![1.0, 2.0, 3.0]);
        assert_eq!(average_traces(std::slice::from_ref(&t)).unwrap(), t);
        let neg = trace(vec![-1.0, -2.0, -3.0]);
        let z = average_traces(&[t.clone(), neg]).unwrap();
        assert!(z.samples.iter().all(|&x| x == 0.0));
        assert!(average_traces(&[]).is_err());
        assert!(average_traces(&[t, trace(vec![1.0])]).is_err());
    }

    #[test]
    fn acquire_is_deterministic_and_exec_independent() {
        let k = crate::tissue::TreatmentKinetics::default();
        let s = TissueState::new(&k, 2.4e-3, 1);
        let td = TransducerModel::default();
        let acq = AcquisitionConfig {
            seed: 11,
            ..Default::default()
        };
        let props = OpticalProperties::default();
        let laser = LaserPulseConfig::default();
        let a = acquire(&s, &props, &laser, &td, &acq, 3).unwrap();
        let b = acquire(&s, &props, &laser, &td, &acq, 3).unwrap();
        assert_eq!(a, b);
        let arrivals = [Arrival {
            pressure: initial_pressure(&props, laser.fluence()).unwrap(),
            depth: 2.4e-3,
        }];
        let seq = acquire_arrivals(&arrivals, &td, &acq, 0.0, 3, Exec::Sequential).unwrap();
        assert_eq!(seq.samples, a.samples);
        assert_eq!(a.samples.len(), acq.num_samples);
        assert!(a.samples.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn index_range_clamps() {
        let t = trace(vec![0.0; 100]);
        assert_eq!(t.index_range([0.0, 0.5e-6]), 0..51);
        assert_eq!(t.index_range([-1.0, 10.0]), 0..100);
        assert_eq!(t.index_range([2e-6, 3e-6]), 100..100);
    }
}
