//! The truncated Fourier world: a flat torus of side `L` with `N` modes per axis.
//!
//! Fields store their coefficients in FFT layout: index `i` along an axis
//! stands for the integer frequency `i` when `i < N/2` and `i - N` otherwise.
//! The Nyquist frequency `-N/2` is part of the index set but carries no
//! degrees of freedom: a real field cannot represent it symmetrically, so the
//! Galerkin space is spanned by the `(N-1)^2` modes with `|k_i| < N/2`.

use crate::error::{invalid, Result};
use std::f64::consts::PI;

/// Side length and per-axis mode count of the torus `[0, L)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    l: f64,
    n: usize,
}

impl TorusGrid {
    /// Build a grid; `N` must be even and at least 4, `L` positive and finite.
    pub fn new(l: f64, n: usize) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) {
            return invalid(format!("L must be positive, got {l}"));
        }
        if !n.is_multiple_of(2) {
            return invalid(format!("N must be even, got {n}"));
        }
        if n < 4 {
            return invalid(format!("N must be at least 4, got {n}"));
        }
        Ok(Self { l, n })
    }

    /// Side length `L`.
    pub fn l(&self) -> f64 {
        self.l
    }

    /// Modes per axis `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of stored coefficients, `N^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    /// Always false: a grid has at least 16 modes.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume `mu(S) = L^2` of the torus.
    pub fn volume(&self) -> f64 {
        self.l * self.l
    }

    /// Dimension `(N-1)^2` of the real Galerkin space.
    pub fn galerkin_dim(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    /// Integer frequency represented by FFT index `i`.
    pub fn freq(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT index of integer frequency `k` (taken modulo `N`).
    pub fn index_of(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Integer wave vector of the flat coefficient index `idx = i1 * N + i2`.
    pub fn wavevector(&self, idx: usize) -> (i64, i64) {
        (self.freq(idx / self.n), self.freq(idx % self.n))
    }

    /// Flat coefficient index of the integer wave vector `(k1, k2)`.
    pub fn flat_index(&self, k1: i64, k2: i64) -> usize {
        self.index_of(k1) * self.n + self.index_of(k2)
    }

    /// Whether `(k1, k2)` lies in the Galerkin space (`|k_i| < N/2`).
    pub fn is_active(&self, k1: i64, k2: i64) -> bool {
        let h = (self.n / 2) as i64;
        k1.abs() < h && k2.abs() < h
    }

    /// Whether flat index `idx` is a Galerkin mode.
    pub fn is_active_index(&self, idx: usize) -> bool {
        let (a, b) = self.wavevector(idx);
        self.is_active(a, b)
    }

    /// Physical frequency `2 pi k / L` of integer frequency `k`.
    pub fn momentum(&self, k: i64) -> f64 {
        2.0 * PI * k as f64 / self.l
    }

    /// Symbol `|2 pi k / L|^2` of `-Delta` at flat index `idx`.
    pub fn laplacian_symbol(&self, idx: usize) -> f64 {
        let (a, b) = self.wavevector(idx);
        let (p, q) = (self.momentum(a), self.momentum(b));
        p * p + q * q
    }

    /// Euclidean frequency magnitude `|2 pi k / L|` at flat index `idx`.
    pub fn frequency_norm(&self, idx: usize) -> f64 {
        self.laplacian_symbol(idx).sqrt()
    }

    /// Largest Laplacian symbol among Galerkin modes (corner of the square).
    pub fn max_symbol(&self) -> f64 {
        let k = (self.n / 2 - 1) as f64;
        2.0 * (2.0 * PI * k / self.l).powi(2)
    }

    /// Grid spacing `L / N` of the collocation lattice.
    pub fn spacing(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Coordinates of lattice point `(i, j)` on the `N x N` collocation grid.
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.spacing(), j as f64 * self.spacing()]
    }

    /// Flat torus distance: componentwise `min(|dx|, L - |dx|)`, Euclidean combine.
    pub fn distance(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for c in 0..2 {
            let d = (x[c] - y[c]).rem_euclid(self.l);
            let d = d.min(self.l - d);
            s += d * d;
        }
        s.sqrt()
    }

    /// Same grid up to identical parameters.
    pub fn same_as(&self, other: &TorusGrid) -> bool {
        self.n == other.n && self.l == other.l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_grid_examples() {
        let g = TorusGrid::new(2.0 * PI, 16).unwrap();
        assert_eq!(g.len(), 256);
        assert!((g.volume() - 4.0 * PI * PI).abs() < 1e-12);
        assert!(TorusGrid::new(1.0, 4).is_ok());
        let err = TorusGrid::new(2.0 * PI, 3).unwrap_err().to_string();
        assert!(err.contains("N must be even"), "{err}");
        assert!(TorusGrid::new(0.0, 8).is_err());
        assert!(TorusGrid::new(-1.0, 8).is_err());
        assert!(TorusGrid::new(1.0, 2).is_err());
    }

    #[test]
    fn frequency_layout_round_trip() {
        let g = TorusGrid::new(1.0, 8).unwrap();
        let freqs: Vec<i64> = (0..8).map(|i| g.freq(i)).collect();
        assert_eq!(freqs, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        for idx in 0..g.len() {
            let (a, b) = g.wavevector(idx);
            assert_eq!(g.flat_index(a, b), idx);
        }
        let active = (0..g.len()).filter(|&i| g.is_active_index(i)).count();
        assert_eq!(active, g.galerkin_dim());
    }

    #[test]
    fn laplacian_symbol_zero_only_at_origin() {
        let g = TorusGrid::new(2.0 * PI, 8).unwrap();
        for idx in 0..g.len() {
            let s = g.laplacian_symbol(idx);
            assert!(s >= 0.0);
            assert_eq!(s == 0.0, idx == 0);
        }
        assert!((g.laplacian_symbol(g.flat_index(1, 0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn torus_distance_wraps() {
        let g = TorusGrid::new(1.0, 8).unwrap();
        assert!((g.distance([0.05, 0.0], [0.95, 0.0]) - 0.1).abs() < 1e-12);
        assert!((g.distance([0.0, 0.0], [0.3, 0.4]) - 0.5).abs() < 1e-12);
    }
}
