use std::cell::RefCell;

use rustfft::{num_complex::Complex, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Magnitude of the analytic signal, built by zeroing negative frequencies.
pub fn envelope(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let (forward, inverse) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    });
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    forward.process(&mut buf);
    // Keep DC (and Nyquist for even n) once, double positive frequencies.
    let positive_end = n.div_ceil(2);
    for c in buf.iter_mut().take(positive_end).skip(1) {
        *c *= 2.0;
    }
    let negative_start = n / 2 + 1;
    for c in buf.iter_mut().skip(negative_start) {
        *c = Complex::new(0.0, 0.0);
    }
    inverse.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.norm() * scale).collect()
}
