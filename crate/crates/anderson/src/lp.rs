//! Littlewood–Paley blocks as sharp dyadic Fourier annuli, paraproducts,
//! resonant products, correctors and Besov-type norms.
//!
//! Block `j >= 0` holds the modes with `|2 pi k / L|` in `[2^{j-1}, 2^j)`;
//! block `-1` holds `|2 pi k / L| < 1/2`.  With these blocks
//! `fg = P_f g + P_g f + Pi(f, g)` where `P_f g = sum_{i <= j-2} (P_i f)(P_j g)`
//! and `Pi(f, g) = sum_{|i-j| <= 1} (P_i f)(P_j g)`.  All products are
//! alias-free Galerkin products, so the identity holds to rounding error.

use crate::error::Result;
use crate::field::SpectralField;
use crate::grid::TorusGrid;

/// Block index of a mode with frequency magnitude `p`.
pub fn block_of_frequency(p: f64) -> i32 {
    if p < 0.5 {
        return -1;
    }
    let mut j = 0;
    let mut upper = 1.0;
    while p >= upper {
        upper *= 2.0;
        j += 1;
    }
    j
}

/// Block assignment of every mode of a grid.
#[derive(Debug, Clone)]
pub struct LpBlocks {
    grid: TorusGrid,
    block: Vec<i32>,
    jmax: i32,
}

/// Values of every Littlewood–Paley block of a field on the `2N` lattice.
///
/// Reusing these avoids recomputing inverse transforms when one field enters
/// several products.
#[derive(Debug, Clone)]
pub struct BlockValues {
    vals: Vec<Vec<f64>>,
}

impl BlockValues {
    /// Lattice values per block, ordered from block `-1` upwards.
    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.vals
    }
}

impl LpBlocks {
    /// Blocks of `grid`.
    pub fn new(grid: TorusGrid) -> Self {
        let block: Vec<i32> = (0..grid.len())
            .map(|idx| block_of_frequency(grid.frequency_norm(idx)))
            .collect();
        let jmax = (0..grid.len())
            .filter(|&i| grid.is_active_index(i))
            .map(|i| block[i])
            .max()
            .unwrap_or(-1);
        Self { grid, block, jmax }
    }

    /// Grid of the decomposition.
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Largest non-empty block index.
    pub fn jmax(&self) -> i32 {
        self.jmax
    }

    /// Block index of the mode at flat index `idx`.
    pub fn block_index(&self, idx: usize) -> i32 {
        self.block[idx]
    }

    /// `P_j f`: zero every coefficient outside annulus `j` (zero field for out-of-range `j`).
    pub fn project(&self, f: &SpectralField, j: i32) -> SpectralField {
        f.map_symbol(|idx| if self.block[idx] == j { 1.0 } else { 0.0 })
    }

    /// Lattice values of every block of `f`.
    pub fn block_values(&self, f: &SpectralField) -> BlockValues {
        BlockValues {
            vals: (-1..=self.jmax).map(|j| self.project(f, j).padded_values()).collect(),
        }
    }

    /// Paraproduct `P_f g = sum_j (sum_{i <= j-2} P_i f)(P_j g)`.
    pub fn paraproduct(&self, f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
        f.check_grid(g)?;
        Ok(self.paraproduct_values(&self.block_values(f), &self.block_values(g)))
    }

    /// Paraproduct from precomputed block values.
    pub fn paraproduct_values(&self, f: &BlockValues, g: &BlockValues) -> SpectralField {
        let (fb, gb) = (&f.vals, &g.vals);
        let m = fb[0].len();
        let mut low = vec![0.0; m];
        let mut acc = vec![0.0; m];
        // Block j sits at position j + 1, so S_{j-2} f gathers positions <= pos - 2.
        for pos in 2..gb.len() {
            low.iter_mut().zip(&fb[pos - 2]).for_each(|(a, b)| *a += b);
            acc.iter_mut()
                .zip(low.iter().zip(&gb[pos]))
                .for_each(|(a, (x, y))| *a += x * y);
        }
        SpectralField::from_padded(self.grid, &acc)
    }

    /// Resonant product `Pi(f, g) = sum_{|i-j| <= 1} (P_i f)(P_j g)`.
    pub fn resonant(&self, f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
        f.check_grid(g)?;
        Ok(self.resonant_values(&self.block_values(f), &self.block_values(g)))
    }

    /// Resonant product from precomputed block values.
    pub fn resonant_values(&self, f: &BlockValues, g: &BlockValues) -> SpectralField {
        let (fb, gb) = (&f.vals, &g.vals);
        let nb = fb.len();
        let mut acc = vec![0.0; fb[0].len()];
        for i in 0..nb {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(nb - 1);
            for gj in &gb[lo..=hi] {
                acc.iter_mut()
                    .zip(fb[i].iter().zip(gj))
                    .for_each(|(a, (x, y))| *a += x * y);
            }
        }
        SpectralField::from_padded(self.grid, &acc)
    }

    /// Corrector `C(a, b, c) = Pi(P_a b, c) - a Pi(b, c)`.
    pub fn corrector(
        &self,
        a: &SpectralField,
        b: &SpectralField,
        c: &SpectralField,
    ) -> Result<SpectralField> {
        let left = self.resonant(&self.paraproduct(a, b)?, c)?;
        let right = a.product(&self.resonant(b, c)?)?;
        Ok(&left - &right)
    }

    /// Intertwined paraproduct: `(-Delta + z0) Pbar_f g = P_f((-Delta + z0) g)`.
    pub fn modified_paraproduct(
        &self,
        f: &SpectralField,
        g: &SpectralField,
        z0: f64,
    ) -> Result<SpectralField> {
        self.paraproduct(f, &g.apply_shifted_laplacian(z0))?
            .invert_shifted_laplacian(z0)
    }

    /// Modified corrector `Cbar(a, b, c) = Pi(Pbar_a b, c) - a Pi(b, c)`.
    pub fn modified_corrector(
        &self,
        a: &SpectralField,
        b: &SpectralField,
        c: &SpectralField,
        z0: f64,
    ) -> Result<SpectralField> {
        let left = self.resonant(&self.modified_paraproduct(a, b, z0)?, c)?;
        let right = a.product(&self.resonant(b, c)?)?;
        Ok(&left - &right)
    }

    /// Hölder–Besov norm `sup_j 2^{j s} ||P_j f||_inf` (sup over the `2N` lattice).
    pub fn holder_norm(&self, f: &SpectralField, s: f64) -> f64 {
        (-1..=self.jmax)
            .map(|j| 2f64.powf(j as f64 * s) * self.project(f, j).sup_norm())
            .fold(0.0, f64::max)
    }

    /// Besov norm `B^s_{2,2}` computed blockwise, `(sum_j 4^{j s} ||P_j f||_2^2)^{1/2}`.
    pub fn besov_l2_norm(&self, f: &SpectralField, s: f64) -> f64 {
        (-1..=self.jmax)
            .map(|j| 4f64.powf(j as f64 * s) * self.project(f, j).l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn random(grid: TorusGrid, seed: u64) -> SpectralField {
        crate::noise::sample_white_noise(grid, seed).field
    }

    #[test]
    fn block_arithmetic() {
        assert_eq!(block_of_frequency(0.0), -1);
        assert_eq!(block_of_frequency(0.49), -1);
        assert_eq!(block_of_frequency(0.5), 0);
        assert_eq!(block_of_frequency(1.0), 1);
        assert_eq!(block_of_frequency(1.5), 1);
        assert_eq!(block_of_frequency(2.0), 2);
        assert_eq!(block_of_frequency(7.99), 3);
    }

    #[test]
    fn constant_lives_in_block_minus_one_and_blocks_partition() {
        let g = TorusGrid::new(2.0 * PI, 16).unwrap();
        let lp = LpBlocks::new(g);
        let c = SpectralField::constant(g, 3.0);
        assert_eq!(lp.project(&c, -1), c);
        let f = random(g, 2);
        let mut sum = SpectralField::zeros(g);
        for j in -1..=lp.jmax() {
            sum = &sum + &lp.project(&f, j);
        }
        assert!((&sum - &f).l2_norm() < 1e-14);
        assert_eq!(lp.project(&f, lp.jmax() + 5), SpectralField::zeros(g));
    }

    #[test]
    fn decomposition_identity_against_dealiased_product() {
        let g = TorusGrid::new(2.0 * PI, 16).unwrap();
        let lp = LpBlocks::new(g);
        let f = random(g, 3);
        let h = random(g, 4);
        let total = &(&lp.paraproduct(&f, &h).unwrap() + &lp.paraproduct(&h, &f).unwrap())
            + &lp.resonant(&f, &h).unwrap();
        let direct = f.product(&h).unwrap();
        assert!((&total - &direct).l2_norm() < 1e-10 * direct.l2_norm());
    }

    #[test]
    fn single_mode_product_is_resonant() {
        let g = TorusGrid::new(2.0 * PI, 16).unwrap();
        let lp = LpBlocks::new(g);
        let f = SpectralField::plane_wave(g, 3, 1, Complex64::new(1.0, 0.5)).unwrap();
        assert!(lp.paraproduct(&f, &f).unwrap().l2_norm() < 1e-14);
        let res = lp.resonant(&f, &f).unwrap();
        assert!((&res - &f.product(&f).unwrap()).l2_norm() < 1e-13);
    }

    #[test]
    fn resonant_is_symmetric() {
        let g = TorusGrid::new(1.3, 12).unwrap();
        let lp = LpBlocks::new(g);
        let f = random(g, 5);
        let h = random(g, 6);
        let a = lp.resonant(&f, &h).unwrap();
        let b = lp.resonant(&h, &f).unwrap();
        assert!((&a - &b).l2_norm() <= 1e-14 * a.l2_norm());
    }

    #[test]
    fn modified_paraproduct_intertwines() {
        let g = TorusGrid::new(2.0 * PI, 16).unwrap();
        let lp = LpBlocks::new(g);
        let f = random(g, 7);
        let h = random(g, 8);
        let z0 = 1.7;
        let pbar = lp.modified_paraproduct(&f, &h, z0).unwrap();
        let lhs = pbar.apply_shifted_laplacian(z0);
        let rhs = lp.paraproduct(&f, &h.apply_shifted_laplacian(z0)).unwrap();
        assert!((&lhs - &rhs).l2_norm() < 1e-10 * rhs.l2_norm());
        // A constant f commutes with every Fourier multiplier, so Pbar_f = P_f.
        let c = SpectralField::constant(g, 0.8);
        let a = lp.modified_paraproduct(&c, &h, z0).unwrap();
        let b = lp.paraproduct(&c, &h).unwrap();
        assert!((&a - &b).l2_norm() < 1e-12 * b.l2_norm());
        // Large z0: the symbol ratio tends to one.
        let far = lp.modified_paraproduct(&f, &h, 1e9).unwrap();
        let near = lp.paraproduct(&f, &h).unwrap();
        assert!((&far - &near).l2_norm() < 1e-5 * near.l2_norm());
    }

    #[test]
    fn corrector_is_linear_in_first_argument() {
        let g = TorusGrid::new(2.0 * PI, 16).unwrap();
        let lp = LpBlocks::new(g);
        let (a, b, c) = (random(g, 9), random(g, 10), random(g, 11));
        let c1 = lp.corrector(&a.scale(2.5), &b, &c).unwrap();
        let c2 = lp.corrector(&a, &b, &c).unwrap().scale(2.5);
        assert!((&c1 - &c2).l2_norm() < 1e-12 * c2.l2_norm());
    }
}
