use serde::{Deserialize, Serialize};

use crate::dsp::AmplitudeSample;
use crate::error::{Error, Result};

/// Time-ordered selected-peak amplitudes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSeries {
    samples: Vec<AmplitudeSample>,
}

impl AmplitudeSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: impl IntoIterator<Item = AmplitudeSample>) -> Result<Self> {
        let mut s = Self::new();
        for x in samples {
            s.append(x)?;
        }
        Ok(s)
    }

    /// Appends a sample strictly after the last one.
    pub fn append(&mut self, sample: AmplitudeSample) -> Result<()> {
        if !sample.amplitude.is_finite() || !sample.irradiation_time.is_finite() {
            return Err(Error::invalid("sample contains a non-finite value"));
        }
        if let Some(last) = self.samples.last() {
            if sample.irradiation_time <= last.irradiation_time {
                return Err(Error::Ordering {
                    time: sample.irradiation_time,
                    last: last.irradiation_time,
                });
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[AmplitudeSample] {
        &self.samples
    }

    pub fn last(&self) -> Option<&AmplitudeSample> {
        self.samples.last()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.irradiation_time)
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.amplitude)
    }

    /// Samples with `range[0] <= t <= range[1]`.
    pub fn window(&self, range: [f64; 2]) -> &[AmplitudeSample] {
        let lo = self.samples.partition_point(|s| s.irradiation_time < range[0]);
        let hi = self.samples.partition_point(|s| s.irradiation_time <= range[1]);
        &self.samples[lo..hi.max(lo)]
    }

    /// Trailing moving average over `window` samples; entry `i` is defined
    /// once `i + 1 >= window`.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        moving_average(&self.amplitudes().collect::<Vec<_>>(), window)
    }
}

pub(crate) fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || x.len() < window {
        return Vec::new();
    }
    x.windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}
