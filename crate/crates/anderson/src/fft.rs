//! Two-dimensional complex FFTs on square arrays with cached plans.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<HashMap<usize, Plans>> = RefCell::new(HashMap::new());
}

fn plans(m: usize) -> Plans {
    PLANS.with(|p| {
        p.borrow_mut()
            .entry(m)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
            })
            .clone()
    })
}

fn transpose(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

fn run(data: &mut [Complex64], m: usize, forward: bool) {
    assert_eq!(data.len(), m * m, "fft2: buffer is not m x m");
    let (f, i) = plans(m);
    let plan = if forward { f } else { i };
    plan.process(data);
    transpose(data, m);
    plan.process(data);
    transpose(data, m);
}

/// Unnormalized forward transform `X_k = sum_j x_j e^{-2 pi i k.j / m}` in place.
pub fn forward(data: &mut [Complex64], m: usize) {
    run(data, m, true);
}

/// Unnormalized inverse transform `x_j = sum_k X_k e^{+2 pi i k.j / m}` in place.
pub fn inverse(data: &mut [Complex64], m: usize) {
    run(data, m, false);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_single_mode() {
        let m = 6;
        let mut data: Vec<Complex64> = (0..m * m)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let orig = data.clone();
        forward(&mut data, m);
        inverse(&mut data, m);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a / (m * m) as f64 - b).norm() < 1e-12);
        }
        let mut delta = vec![Complex64::new(0.0, 0.0); m * m];
        delta[m + 2] = Complex64::new(1.0, 0.0);
        inverse(&mut delta, m);
        let expected = (2.0 * std::f64::consts::PI * (3.0 * 1.0 + 4.0 * 2.0) / m as f64).cos();
        assert!((delta[3 * m + 4].re - expected).abs() < 1e-12);
    }
}
