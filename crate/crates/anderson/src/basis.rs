//! Orthonormal real trigonometric basis of the Galerkin space.
//!
//! Element 0 is the constant `1/L`; for every representative mode `k`
//! (`k1 > 0`, or `k1 = 0` and `k2 > 0`) the basis holds the pair
//! `sqrt(2) cos(p.x) / L` and `sqrt(2) sin(p.x) / L`.  Representatives are
//! ordered by `|k|^2`, so low-frequency content sits at the start of every
//! coordinate vector.  Real coordinates make every operator matrix real
//! symmetric and every inner product Euclidean.

use crate::field::SpectralField;
use crate::grid::TorusGrid;
use num_complex::Complex64;
use std::f64::consts::SQRT_2;

/// Real orthonormal basis of the Galerkin space of a grid.
#[derive(Debug, Clone)]
pub struct RealBasis {
    grid: TorusGrid,
    reps: Vec<(i64, i64)>,
}

impl RealBasis {
    /// Basis of the Galerkin space of `grid`.
    pub fn new(grid: TorusGrid) -> Self {
        let h = (grid.n() / 2) as i64;
        let mut reps = Vec::new();
        for k1 in 0..h {
            for k2 in (1 - h)..h {
                if k1 > 0 || k2 > 0 {
                    reps.push((k1, k2));
                }
            }
        }
        reps.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
        Self { grid, reps }
    }

    /// Underlying grid.
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Dimension `(N-1)^2`.
    pub fn dim(&self) -> usize {
        1 + 2 * self.reps.len()
    }

    /// Representative modes in basis order.
    pub fn representatives(&self) -> &[(i64, i64)] {
        &self.reps
    }

    /// Laplacian symbol of basis element `b`.
    pub fn symbol(&self, b: usize) -> f64 {
        if b == 0 {
            return 0.0;
        }
        let (k1, k2) = self.reps[(b - 1) / 2];
        let (p, q) = (self.grid.momentum(k1), self.grid.momentum(k2));
        p * p + q * q
    }

    /// Coordinates of a field in this basis.
    pub fn coordinates(&self, f: &SpectralField) -> Vec<f64> {
        let l = self.grid.l();
        let mut x = Vec::with_capacity(self.dim());
        x.push(f.mean() * l);
        for &(k1, k2) in &self.reps {
            let c = f.coeff(k1, k2);
            // f_k = (a - i b) / (sqrt(2) L)
            x.push(c.re * SQRT_2 * l);
            x.push(-c.im * SQRT_2 * l);
        }
        x
    }

    /// Field with the given coordinates.
    pub fn field(&self, x: &[f64]) -> SpectralField {
        assert_eq!(x.len(), self.dim(), "coordinate vector length");
        let g = self.grid;
        let l = g.l();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); g.len()];
        coeffs[0] = Complex64::new(x[0] / l, 0.0);
        for (j, &(k1, k2)) in self.reps.iter().enumerate() {
            let (a, b) = (x[2 * j + 1], x[2 * j + 2]);
            let c = Complex64::new(a, -b) / (SQRT_2 * l);
            coeffs[g.flat_index(k1, k2)] = c;
            coeffs[g.flat_index(-k1, -k2)] = c.conj();
        }
        SpectralField::from_coeffs(g, coeffs).expect("coefficient count matches grid")
    }

    /// Dense real symmetric matrix of `-Delta + V` in this basis (row-major, `dim x dim`).
    ///
    /// Entries follow from `<e_k, V e_k'> = V_{k-k'}` for the complex
    /// exponentials, with `V_q = 0` outside the Galerkin modes, rotated into
    /// the cosine/sine pairs.
    pub fn operator_matrix(&self, potential: &SpectralField) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        let v = |k1: i64, k2: i64| potential.coeff(k1, k2);
        let v0 = potential.mean();
        m[0] = v0;
        for (j, &(a1, a2)) in self.reps.iter().enumerate() {
            let (ic, is) = (2 * j + 1, 2 * j + 2);
            let vk = v(a1, a2);
            m[ic] = SQRT_2 * vk.re;
            m[is] = -SQRT_2 * vk.im;
            m[ic * d] = m[ic];
            m[is * d] = m[is];
            for (jj, &(b1, b2)) in self.reps.iter().enumerate().skip(j) {
                let (jc, js) = (2 * jj + 1, 2 * jj + 2);
                let dm = v(a1 - b1, a2 - b2);
                let sm = v(a1 + b1, a2 + b2);
                let cc = dm.re + sm.re;
                let ss = dm.re - sm.re;
                let cs = dm.im - sm.im;
                // <s_k, V c_m> = -(Im V_{k-m} + Im V_{k+m}) by the same rotation.
                let sc = -(dm.im + sm.im);
                m[ic * d + jc] = cc;
                m[jc * d + ic] = cc;
                m[is * d + js] = ss;
                m[js * d + is] = ss;
                m[ic * d + js] = cs;
                m[js * d + ic] = cs;
                m[is * d + jc] = sc;
                m[jc * d + is] = sc;
            }
        }
        for b in 0..d {
            m[b * d + b] += self.symbol(b);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn test_field(grid: TorusGrid) -> SpectralField {
        SpectralField::from_fn(grid, |x| {
            (2.0 * PI * x[0] / grid.l()).sin() + 0.3 * (2.0 * PI * (x[0] - 2.0 * x[1]) / grid.l()).cos()
                + 0.7
        })
    }

    #[test]
    fn coordinates_round_trip_and_isometry() {
        let g = TorusGrid::new(1.7, 8).unwrap();
        let b = RealBasis::new(g);
        assert_eq!(b.dim(), 49);
        let f = test_field(g);
        let x = b.coordinates(&f);
        let back = b.field(&x);
        assert!((&back - &f).l2_norm() < 1e-13);
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        assert!((norm2.sqrt() - f.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn operator_matrix_matches_galerkin_product() {
        let g = TorusGrid::new(2.3, 8).unwrap();
        let basis = RealBasis::new(g);
        let v = SpectralField::from_fn(g, |x| {
            (2.0 * PI * (x[0] + x[1]) / g.l()).sin() * 0.8 + (2.0 * PI * 3.0 * x[1] / g.l()).cos() + 0.2
        });
        let m = basis.operator_matrix(&v);
        let d = basis.dim();
        for i in 0..d {
            for j in 0..d {
                assert!((m[i * d + j] - m[j * d + i]).abs() < 1e-14);
            }
        }
        let u = test_field(g);
        let hu = &u.neg_laplacian() + &v.product(&u).unwrap();
        let x = basis.coordinates(&u);
        let y: Vec<f64> = (0..d).map(|i| (0..d).map(|j| m[i * d + j] * x[j]).sum()).collect();
        let expected = basis.coordinates(&hu);
        for (a, b) in y.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }
}
