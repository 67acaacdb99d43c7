//! Shared setup for the benchmark targets.

use hisa_core::{PlainTensor, SimBackend, SimConfig};

/// Deterministic nonzero values on the 2^-4 grid.
pub fn grid_tensor(shape: Vec<usize>) -> PlainTensor {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n)
        .map(|i| ((i * 7 % 23) as f64 - 11.0) / 16.0)
        .collect();
    PlainTensor::from_f64(shape, &values).expect("grid tensor")
}

/// Exact-mode simulator at input scale 30, weight scale 16.
pub fn backend(log_n: u32, log_q: u32) -> SimBackend {
    SimBackend::new(SimConfig::exact(log_n, log_q))
        .expect("backend")
        .with_scales(30, 16)
}
