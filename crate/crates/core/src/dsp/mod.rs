//! Extraction of the monitored scalar from each averaged trace.

mod envelope;
mod peak;
mod wavelet;

pub use envelope::envelope;
pub use peak::{
    band_envelope, extract_peak, snr_db, AmplitudeSample, PeakDetection, PeakMode, PeakSelector,
};
pub use wavelet::{
    dwt_decompose, reconstruct_bands, TransformKind, WaveletBands, WaveletConfig, WaveletFamily,
    DEFAULT_BANDS,
};
