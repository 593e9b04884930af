use std::collections::BTreeSet;

use pamon_core::acoustic::{clean_waveform, AcquisitionConfig, Arrival, Trace, TransducerModel};
use pamon_core::dsp::{
    dwt_decompose, envelope, extract_peak, reconstruct_bands, PeakSelector, TransformKind,
    WaveletConfig,
};
use proptest::prelude::*;

fn clean_trace(depth: f64, scale: f64) -> Trace {
    let acq = AcquisitionConfig::default();
    let samples = clean_waveform(
        &[Arrival {
            pressure: 30_000.0,
            depth,
        }],
        &TransducerModel::default(),
        &acq,
    )
    .unwrap()
    .into_iter()
    .map(|v| v * scale)
    .collect();
    Trace {
        samples,
        sample_rate: acq.sample_rate,
        t0: 0.0,
        irradiation_time: 0.0,
        pulse_index: 0,
    }
}

fn delayed(t: &Trace, m: usize) -> Trace {
    let mut samples = vec![0.0; m];
    samples.extend_from_slice(&t.samples[..t.samples.len() - m]);
    Trace {
        samples,
        ..t.clone()
    }
}

#[test]
fn default_bands_retain_most_of_the_arrival() {
    let t = clean_trace(2.4e-3, 1.0);
    let full = envelope(&t.samples).into_iter().fold(0.0, f64::max);
    let d = extract_peak(&t, &WaveletConfig::default(), &PeakSelector::global_max()).unwrap();
    assert!(d.sample.amplitude / full >= 0.8, "retained {}", d.sample.amplitude / full);
}

#[test]
fn band_sum_equals_full_reconstruction() {
    let t = clean_trace(2.0e-3, 1.0);
    for transform in [TransformKind::Decimated, TransformKind::MaximalOverlap] {
        let cfg = WaveletConfig {
            transform,
            ..WaveletConfig::default()
        };
        let bands = dwt_decompose(&t.samples, &cfg).unwrap();
        let all: BTreeSet<usize> = (1..=cfg.levels + 1).collect();
        let full = reconstruct_bands(&bands, &all).unwrap();
        let mut sum = vec![0.0; full.len()];
        for b in &all {
            let part = reconstruct_bands(&bands, &BTreeSet::from([*b])).unwrap();
            sum.iter_mut().zip(part).for_each(|(s, p)| *s += p);
        }
        let peak = full.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = full.iter().zip(&sum).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-9 * peak);
        assert!(reconstruct_bands(&bands, &BTreeSet::new()).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn delaying_by_m_samples_moves_the_peak_by_m(m in 0usize..400, depth in 1.0e-3..3.0e-3) {
        let base = clean_trace(depth, 1.0);
        let wl = WaveletConfig::default();
        let sel = PeakSelector::global_max();
        let a = extract_peak(&base, &wl, &sel).unwrap();
        let b = extract_peak(&delayed(&base, m), &wl, &sel).unwrap();
        prop_assert_eq!(b.index, a.index + m);
    }

    #[test]
    fn amplitude_is_homogeneous(scale in 1e-3..1e3f64, depth in 1.0e-3..3.0e-3) {
        let wl = WaveletConfig::default();
        let sel = PeakSelector::global_max();
        let a = extract_peak(&clean_trace(depth, 1.0), &wl, &sel).unwrap();
        let b = extract_peak(&clean_trace(depth, scale), &wl, &sel).unwrap();
        prop_assert_eq!(a.index, b.index);
        prop_assert!((b.sample.amplitude / (scale * a.sample.amplitude) - 1.0).abs() < 1e-9);
    }
}
