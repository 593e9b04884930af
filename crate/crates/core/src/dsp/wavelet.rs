//! Orthogonal wavelet filters and multilevel transforms with periodic boundaries.
//!
//! Two transforms share the same filters:
//! - `Decimated`: the critically sampled DWT; orthonormal, so coefficient
//!   energy equals signal energy.
//! - `MaximalOverlap`: the undecimated (MODWT) variant; every band keeps the
//!   signal length and band reconstructions commute with circular shifts.
//!
//! Band numbering: `1..=levels` are detail bands from finest to coarsest,
//! `levels + 1` is the final approximation.

use std::collections::BTreeSet;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    Haar,
    Db2,
    Db4,
    Db6,
}

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

const DB2: [f64; 4] = [
    0.482_962_913_144_690_25,
    0.836_516_303_737_469,
    0.224_143_868_041_857_35,
    -0.129_409_522_550_921_45,
];

const DB4: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

const DB6: [f64; 12] = [
    0.111_540_743_350_080_17,
    0.494_623_890_398_385_4,
    0.751_133_908_021_577_5,
    0.315_250_351_709_243_2,
    -0.226_264_693_965_169_13,
    -0.129_766_867_567_095_63,
    0.097_501_605_587_079_36,
    0.027_522_865_530_016_29,
    -0.031_582_039_318_031_156,
    0.000_553_842_200_993_801_6,
    0.004_777_257_511_010_651,
    -0.001_077_301_084_995_58,
];

impl WaveletFamily {
    /// Orthonormal scaling (low-pass) filter, `sum = sqrt(2)`.
    pub fn scaling_filter(self) -> &'static [f64] {
        match self {
            WaveletFamily::Haar => &HAAR,
            WaveletFamily::Db2 => &DB2,
            WaveletFamily::Db4 => &DB4,
            WaveletFamily::Db6 => &DB6,
        }
    }

    /// Quadrature-mirror wavelet (high-pass) filter `g[l] = (-1)^l h[L-1-l]`.
    pub fn wavelet_filter(self) -> Vec<f64> {
        let h = self.scaling_filter();
        let n = h.len();
        (0..n)
            .map(|l| if l % 2 == 0 { h[n - 1 - l] } else { -h[n - 1 - l] })
            .collect()
    }

    pub fn vanishing_moments(self) -> usize {
        self.scaling_filter().len() / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Decimated,
    #[default]
    MaximalOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub family: WaveletFamily,
    pub levels: usize,
    pub selected_bands: BTreeSet<usize>,
    #[serde(default)]
    pub transform: TransformKind,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            family: WaveletFamily::Db4,
            levels: 4,
            selected_bands: DEFAULT_BANDS.iter().copied().collect(),
            transform: TransformKind::MaximalOverlap,
        }
    }
}

/// At 100 MHz: band 3 spans 6.25-12.5 MHz, band 4 spans 3.1-6.25 MHz and band 5
/// (the approximation) 0-3.1 MHz. The 5 MHz transducer passband straddles 3 and 4.
pub const DEFAULT_BANDS: [usize; 2] = [3, 4];

impl WaveletConfig {
    pub fn band_count(&self) -> usize {
        self.levels + 1
    }

    pub fn validate(&self, signal_len: usize) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::invalid("wavelet levels must be at least 1"));
        }
        let block = 1usize
            .checked_shl(self.levels as u32)
            .ok_or_else(|| Error::invalid("too many wavelet levels"))?;
        if signal_len < block {
            return Err(Error::invalid(format!(
                "signal of length {signal_len} is shorter than 2^{} = {block}",
                self.levels
            )));
        }
        if self.transform == TransformKind::Decimated && signal_len % block != 0 {
            return Err(Error::invalid(format!(
                "decimated transform needs a length divisible by {block}, got {signal_len}"
            )));
        }
        validate_selection(&self.selected_bands, self.band_count())
    }
}

fn validate_selection(selected: &BTreeSet<usize>, bands: usize) -> Result<()> {
    if selected.is_empty() {
        return Err(Error::invalid("band selection is empty"));
    }
    if let Some(b) = selected.iter().find(|&&b| b == 0 || b > bands) {
        return Err(Error::invalid(format!(
            "band {b} outside the available range 1..={bands}"
        )));
    }
    Ok(())
}

/// Coefficients of a multilevel decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBands {
    pub family: WaveletFamily,
    pub transform: TransformKind,
    pub signal_len: usize,
    /// `details[j - 1]` holds detail band `j`.
    pub details: Vec<Vec<f64>>,
    pub approximation: Vec<f64>,
}

impl WaveletBands {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn band(&self, index: usize) -> Option<&[f64]> {
        match index {
            0 => None,
            i if i <= self.details.len() => Some(&self.details[i - 1]),
            i if i == self.details.len() + 1 => Some(&self.approximation),
            _ => None,
        }
    }

    pub fn energy(&self) -> f64 {
        self.details
            .iter()
            .chain(std::iter::once(&self.approximation))
            .flat_map(|b| b.iter())
            .map(|c| c * c)
            .sum()
    }
}

/// Multilevel decomposition into `levels` detail bands plus one approximation.
pub fn dwt_decompose(signal: &[f64], cfg: &WaveletConfig) -> Result<WaveletBands> {
    cfg.validate(signal.len())?;
    let h = cfg.family.scaling_filter();
    let g = cfg.family.wavelet_filter();
    let mut approx = signal.to_vec();
    let mut details = Vec::with_capacity(cfg.levels);
    for level in 1..=cfg.levels {
        let (a, d) = match cfg.transform {
            TransformKind::Decimated => analysis_step(&approx, h, &g),
            TransformKind::MaximalOverlap => modwt_step(&approx, h, &g, 1 << (level - 1)),
        };
        details.push(d);
        approx = a;
    }
    Ok(WaveletBands {
        family: cfg.family,
        transform: cfg.transform,
        signal_len: signal.len(),
        details,
        approximation: approx,
    })
}

/// Inverse transform with every band outside `selected` zeroed.
pub fn reconstruct_bands(bands: &WaveletBands, selected: &BTreeSet<usize>) -> Result<Vec<f64>> {
    validate_selection(selected, bands.levels() + 1)?;
    let h = bands.family.scaling_filter();
    let g = bands.family.wavelet_filter();
    let levels = bands.levels();
    let mut approx = if selected.contains(&(levels + 1)) {
        bands.approximation.clone()
    } else {
        vec![0.0; bands.approximation.len()]
    };
    for level in (1..=levels).rev() {
        let detail = &bands.details[level - 1];
        let keep = selected.contains(&level);
        approx = match bands.transform {
            TransformKind::Decimated => synthesis_step(&approx, detail, keep, h, &g),
            TransformKind::MaximalOverlap => {
                imodwt_step(&approx, detail, keep, h, &g, 1 << (level - 1))
            }
        };
    }
    Ok(approx)
}

fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (l, (&hl, &gl)) in h.iter().zip(g).enumerate() {
            let v = x[(2 * k + l) % n];
            sa += hl * v;
            sd += gl * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], keep_detail: bool, h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = a.len() * 2;
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for (l, (&hl, &gl)) in h.iter().zip(g).enumerate() {
            let idx = (2 * k + l) % n;
            x[idx] += hl * a[k];
            if keep_detail {
                x[idx] += gl * d[k];
            }
        }
    }
    x
}

fn modwt_step(v: &[f64], h: &[f64], g: &[f64], step: usize) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut a = vec![0.0; n];
    let mut d = vec![0.0; n];
    let offsets = tap_offsets(h.len(), step, n);
    for t in 0..n {
        let (mut sa, mut sd) = (0.0, 0.0);
        for ((&hl, &gl), &off) in h.iter().zip(g).zip(&offsets) {
            let idx = if t >= off { t - off } else { t + n - off };
            sa += hl * v[idx];
            sd += gl * v[idx];
        }
        a[t] = sa / SQRT_2;
        d[t] = sd / SQRT_2;
    }
    (a, d)
}

/// Circular tap offsets `step·l mod n`.
fn tap_offsets(taps: usize, step: usize, n: usize) -> Vec<usize> {
    (0..taps).map(|l| (step * l) % n).collect()
}

fn imodwt_step(
    a: &[f64],
    d: &[f64],
    keep_detail: bool,
    h: &[f64],
    g: &[f64],
    step: usize,
) -> Vec<f64> {
    let n = a.len();
    let mut v = vec![0.0; n];
    let offsets = tap_offsets(h.len(), step, n);
    for (t, out) in v.iter_mut().enumerate() {
        let mut s = 0.0;
        for ((&hl, &gl), &off) in h.iter().zip(g).zip(&offsets) {
            let idx = if t + off >= n { t + off - n } else { t + off };
            s += hl * a[idx];
            if keep_detail {
                s += gl * d[idx];
            }
        }
        *out = s / SQRT_2;
    }
    v
}
