//! Real fields on the truncated torus, stored as Fourier amplitudes.
//!
//! The coefficient of mode `k` is `(1/L^2) * int f(x) e^{-i p.x} dx` with
//! `p = 2 pi k / L`, so `f(x) = sum_k f_k e^{i p.x}` and
//! `<f, g> = L^2 sum_k f_k conj(g_k)`.
//! Pointwise products are computed on a zero-padded `2N x 2N` lattice, which
//! is alias-free for two Galerkin fields, and then projected back onto the
//! Galerkin modes.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::TorusGrid;
use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A real-valued field in the Galerkin space of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    /// The zero field.
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            coeffs: vec![ZERO; grid.len()],
            grid,
        }
    }

    /// The constant field `c`.
    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Real plane-wave pair `a e^{i p.x} + conj(a) e^{-i p.x}` for the Galerkin mode `(k1, k2)`.
    ///
    /// For `k = 0` the field is the constant `Re(a)`.
    pub fn plane_wave(grid: TorusGrid, k1: i64, k2: i64, a: Complex64) -> Result<Self> {
        if !grid.is_active(k1, k2) {
            return Err(Error::InvalidArgument(format!(
                "mode ({k1}, {k2}) is outside the Galerkin space of N = {}",
                grid.n()
            )));
        }
        let mut f = Self::zeros(grid);
        if k1 == 0 && k2 == 0 {
            f.coeffs[0] = Complex64::new(a.re, 0.0);
        } else {
            f.coeffs[grid.flat_index(k1, k2)] = a;
            f.coeffs[grid.flat_index(-k1, -k2)] = a.conj();
        }
        Ok(f)
    }

    /// Wrap raw FFT-layout coefficients, projecting onto real Galerkin fields.
    ///
    /// The projection symmetrizes `c_k` and `conj(c_{-k})` and clears the
    /// Nyquist row and column.
    pub fn from_coeffs(grid: TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        let mut f = Self { grid, coeffs };
        f.project();
        Ok(f)
    }

    fn project(&mut self) {
        let g = self.grid;
        let src = self.coeffs.clone();
        for idx in 0..g.len() {
            let (a, b) = g.wavevector(idx);
            self.coeffs[idx] = if g.is_active(a, b) {
                0.5 * (src[idx] + src[g.flat_index(-a, -b)].conj())
            } else {
                ZERO
            };
        }
    }

    /// Interpolate samples on the `N x N` collocation lattice (row-major, first index along x1).
    pub fn from_values(grid: TorusGrid, values: &[f64]) -> Result<Self> {
        let n = grid.n();
        if values.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                n * n,
                values.len()
            )));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::forward(&mut buf, n);
        let s = 1.0 / (n * n) as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        Self::from_coeffs(grid, buf)
    }

    /// Sample a function of position on the collocation lattice and interpolate.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let n = grid.n();
        let mut vals = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                vals.push(f(grid.point(i, j)));
            }
        }
        Self::from_values(grid, &vals).expect("sample count matches grid")
    }

    /// The grid this field lives on.
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// FFT-layout coefficients.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of integer mode `(k1, k2)` (zero outside the Galerkin space).
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        if self.grid.is_active(k1, k2) {
            self.coeffs[self.grid.flat_index(k1, k2)]
        } else {
            ZERO
        }
    }

    /// Spatial mean `(1/L^2) int f`, i.e. the zero-mode coefficient.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Integral `int f dmu`.
    pub fn integral(&self) -> f64 {
        self.mean() * self.grid.volume()
    }

    /// Largest violation of `c_{-k} = conj(c_k)`; zero for every constructed field.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let g = self.grid;
        (0..g.len())
            .map(|idx| {
                let (a, b) = g.wavevector(idx);
                (self.coeffs[idx] - self.coeffs[g.flat_index(-a, -b)].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Values on an `m x m` lattice, `m` even and at least `N`.
    pub fn values_on(&self, m: usize) -> Vec<f64> {
        assert!(m >= self.grid.n() && m.is_multiple_of(2), "lattice too coarse for the field");
        let g = self.grid;
        let mut buf = vec![ZERO; m * m];
        for idx in 0..g.len() {
            let c = self.coeffs[idx];
            if c == ZERO {
                continue;
            }
            let (a, b) = g.wavevector(idx);
            let i = a.rem_euclid(m as i64) as usize;
            let j = b.rem_euclid(m as i64) as usize;
            buf[i * m + j] = c;
        }
        fft::inverse(&mut buf, m);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Values on the `N x N` collocation lattice.
    pub fn values(&self) -> Vec<f64> {
        self.values_on(self.grid.n())
    }

    /// Values on the alias-free `2N x 2N` product lattice.
    pub fn padded_values(&self) -> Vec<f64> {
        self.values_on(2 * self.grid.n())
    }

    /// Project samples on an `m x m` lattice (`m >= N`) onto the Galerkin space.
    pub fn from_lattice(grid: TorusGrid, values: &[f64], m: usize) -> Self {
        assert_eq!(values.len(), m * m, "lattice sample count");
        assert!(m >= grid.n(), "lattice must resolve the grid");
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::forward(&mut buf, m);
        let s = 1.0 / (m * m) as f64;
        let mut coeffs = vec![ZERO; grid.len()];
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let (a, b) = grid.wavevector(idx);
            if grid.is_active(a, b) {
                let i = a.rem_euclid(m as i64) as usize;
                let j = b.rem_euclid(m as i64) as usize;
                *c = buf[i * m + j] * s;
            }
        }
        let mut f = Self { grid, coeffs };
        f.project();
        f
    }

    /// Project samples on the `2N x 2N` lattice onto the Galerkin space.
    pub fn from_padded(grid: TorusGrid, values: &[f64]) -> Self {
        Self::from_lattice(grid, values, 2 * grid.n())
    }

    /// Pointwise value at an arbitrary position (direct trigonometric sum).
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let g = self.grid;
        let mut s = 0.0;
        for idx in 0..g.len() {
            let c = self.coeffs[idx];
            if c == ZERO {
                continue;
            }
            let (a, b) = g.wavevector(idx);
            let phase = g.momentum(a) * x[0] + g.momentum(b) * x[1];
            s += c.re * phase.cos() - c.im * phase.sin();
        }
        s
    }

    /// `L^2` inner product.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert!(self.grid.same_as(&other.grid));
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        s * self.grid.volume()
    }

    /// `L^2` norm from Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `L^2` norm from a spatial quadrature on the alias-free lattice.
    pub fn l2_norm_spatial(&self) -> f64 {
        let m = 2 * self.grid.n();
        let v = self.values_on(m);
        let h = self.grid.l() / m as f64;
        (v.iter().map(|x| x * x).sum::<f64>() * h * h).sqrt()
    }

    /// Sobolev norm `(L^2 sum (1 + |p|^2)^s |f_k|^2)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let g = self.grid;
        let sum: f64 = (0..g.len())
            .map(|idx| (1.0 + g.laplacian_symbol(idx)).powf(s) * self.coeffs[idx].norm_sqr())
            .sum();
        (sum * g.volume()).sqrt()
    }

    /// Supremum of `|f|` over the `2N x 2N` lattice.
    pub fn sup_norm(&self) -> f64 {
        self.padded_values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Multiply every coefficient by a real symbol evaluated at its flat index.
    pub fn map_symbol(&self, symbol: impl Fn(usize) -> f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| if *c == ZERO { ZERO } else { c * symbol(idx) })
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    /// Apply `-Delta`.
    pub fn neg_laplacian(&self) -> Self {
        let g = self.grid;
        self.map_symbol(|idx| g.laplacian_symbol(idx))
    }

    /// Apply `-Delta + z0`.
    pub fn apply_shifted_laplacian(&self, z0: f64) -> Self {
        let g = self.grid;
        self.map_symbol(|idx| g.laplacian_symbol(idx) + z0)
    }

    /// Apply `(-Delta + z0)^{-1}`; requires `z0 > 0`.
    pub fn invert_shifted_laplacian(&self, z0: f64) -> Result<Self> {
        if !(z0 > 0.0) {
            return Err(Error::InvalidArgument(format!("z0 must be positive, got {z0}")));
        }
        let g = self.grid;
        Ok(self.map_symbol(|idx| 1.0 / (g.laplacian_symbol(idx) + z0)))
    }

    /// Heat smoothing `e^{r Delta}`: multiply mode `k` by `e^{-r |p|^2}`; requires `r >= 0`.
    pub fn heat_smooth(&self, r: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(Error::InvalidArgument(format!("r must be non-negative, got {r}")));
        }
        let g = self.grid;
        Ok(self.map_symbol(|idx| (-r * g.laplacian_symbol(idx)).exp()))
    }

    /// Galerkin product: the alias-free pointwise product projected onto the Galerkin modes.
    pub fn product(&self, other: &SpectralField) -> Result<Self> {
        self.check_grid(other)?;
        let a = self.padded_values();
        let b = other.padded_values();
        let p: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Ok(Self::from_padded(self.grid, &p))
    }

    /// Error unless `other` lives on the same grid.
    pub fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(L={}, N={}) vs (L={}, N={})",
                self.grid.l(),
                self.grid.n(),
                other.grid.l(),
                other.grid.n()
            )))
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &SpectralField) -> Self {
        debug_assert!(self.grid.same_as(&other.grid));
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x + y * a)
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    /// `a * self`.
    pub fn scale(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(-1.0, rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn random_field(grid: TorusGrid, seed: u64) -> SpectralField {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let coeffs = (0..grid.len()).map(|_| Complex64::new(next(), next())).collect();
        SpectralField::from_coeffs(grid, coeffs).unwrap()
    }

    #[test]
    fn parseval_matches_spatial_quadrature() {
        for &(l, n) in &[(1.0, 8), (2.0 * PI, 16), (3.5, 12)] {
            let g = TorusGrid::new(l, n).unwrap();
            let f = random_field(g, 7);
            let a = f.l2_norm();
            let b = f.l2_norm_spatial();
            assert!((a - b).abs() / a < 1e-12, "{a} vs {b}");
            assert_eq!(f.conjugate_symmetry_defect(), 0.0);
        }
    }

    #[test]
    fn values_round_trip_and_eval() {
        let g = TorusGrid::new(2.0, 10).unwrap();
        let f = random_field(g, 3);
        let back = SpectralField::from_values(g, &f.values()).unwrap();
        for (a, b) in f.coeffs().iter().zip(back.coeffs()) {
            assert!((a - b).norm() < 1e-13);
        }
        let x = [0.37, 1.21];
        let padded = f.values_on(40);
        let direct = f.eval([0.0, 0.05 * 3.0]);
        assert!((padded[3] - direct).abs() < 1e-12);
        assert!(f.eval(x).is_finite());
    }

    #[test]
    fn invert_shifted_laplacian_examples() {
        let g = TorusGrid::new(2.0 * PI, 8).unwrap();
        let c = SpectralField::constant(g, 2.5);
        let inv = c.invert_shifted_laplacian(1.0).unwrap();
        assert!((inv.mean() - 2.5).abs() < 1e-15);
        let w = SpectralField::plane_wave(g, 1, 0, Complex64::new(1.0, 0.0)).unwrap();
        let inv = w.invert_shifted_laplacian(1.0).unwrap();
        assert!((inv.coeff(1, 0).re - 0.5).abs() < 1e-15);
        let f = random_field(g, 11);
        let back = f.invert_shifted_laplacian(0.7).unwrap().apply_shifted_laplacian(0.7);
        assert!((&back - &f).l2_norm() < 1e-12 * f.l2_norm());
        assert!(f.invert_shifted_laplacian(0.0).is_err());
    }

    #[test]
    fn heat_smoothing_examples() {
        let g = TorusGrid::new(2.0 * PI, 8).unwrap();
        let f = random_field(g, 5);
        assert_eq!(f.heat_smooth(0.0).unwrap(), f);
        let w = SpectralField::plane_wave(g, 1, 0, Complex64::new(1.0, 0.0)).unwrap();
        let s = w.heat_smooth(1.0).unwrap();
        assert!((s.coeff(1, 0).re - (-1.0f64).exp()).abs() < 1e-15);
        let big = f.heat_smooth(1e6).unwrap();
        assert_eq!(big.mean(), f.mean());
        for (idx, c) in big.coeffs().iter().enumerate().skip(1) {
            assert!(c.norm() < 1e-300, "mode {idx}");
        }
        assert!(f.heat_smooth(-1.0).is_err());
    }

    #[test]
    fn product_matches_direct_pointwise_product() {
        let g = TorusGrid::new(1.0, 8).unwrap();
        let a = SpectralField::plane_wave(g, 1, 2, Complex64::new(0.5, 0.25)).unwrap();
        let b = SpectralField::plane_wave(g, 2, -1, Complex64::new(-0.3, 0.1)).unwrap();
        let p = a.product(&b).unwrap();
        for &x in &[[0.1, 0.2], [0.77, 0.4]] {
            assert!((p.eval(x) - a.eval(x) * b.eval(x)).abs() < 1e-12);
        }
        // (4, 1) lies outside the Galerkin space of N = 8 and must be dropped,
        // leaving only the difference modes (2, -1) and (-2, 1).
        let c = SpectralField::plane_wave(g, 3, 0, Complex64::new(1.0, 0.0)).unwrap();
        let d = SpectralField::plane_wave(g, 1, 1, Complex64::new(1.0, 0.0)).unwrap();
        let q = c.product(&d).unwrap();
        assert!((q.coeff(2, -1).re - 1.0).abs() < 1e-12);
        assert!((q.l2_norm().powi(2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = SpectralField::zeros(TorusGrid::new(1.0, 8).unwrap());
        let b = SpectralField::zeros(TorusGrid::new(1.0, 10).unwrap());
        assert!(matches!(a.product(&b), Err(Error::GridMismatch(_))));
    }
}
