//! Assembly and diagonalization of `H_r = -Delta + h xi_r + c_{h,r}` and the
//! spectral statements built on its decomposition.
//!
//! Matrices live in the real orthonormal basis of [`RealBasis`], where they
//! are real symmetric; eigenvectors are stored as coordinate vectors and
//! converted to fields or grid values on demand.

use crate::basis::RealBasis;
use crate::error::{invalid, Error, Result};
use crate::field::SpectralField;
use crate::grid::TorusGrid;
use crate::linalg;
use crate::lp::LpBlocks;
use crate::noise::stream_rng;
use crate::paracontrolled::EnhancedNoise;
use crate::stats;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Provenance of an operator or decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatorMeta {
    /// Regularization time (zero for a deterministic potential).
    pub r: f64,
    /// Reference shift used by the enhancement.
    pub z0: f64,
    /// Noise seed.
    pub seed: u64,
    /// Constant coupling, or NaN when the coupling is a general field.
    pub h: f64,
}

/// Dense symmetric matrix of `-Delta + V` in the real basis.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    basis: RealBasis,
    potential: SpectralField,
    matrix: Vec<f64>,
    /// Provenance.
    pub meta: OperatorMeta,
}

impl OperatorMatrix {
    /// `H_r = -Delta + h xi_r + c_{h,r}` from an enhanced noise.
    pub fn assemble(enhanced: &EnhancedNoise) -> Self {
        let h = enhanced.h.coeffs()[0].re;
        let constant_h = (&enhanced.h - &SpectralField::constant(*enhanced.grid(), h)).l2_norm() == 0.0;
        let meta = OperatorMeta {
            r: enhanced.r,
            z0: enhanced.z0,
            seed: enhanced.xi.seed,
            h: if constant_h { h } else { f64::NAN },
        };
        Self::from_potential(&enhanced.potential(), meta)
    }

    /// `-Delta + V` for an arbitrary real potential.
    pub fn from_potential(potential: &SpectralField, meta: OperatorMeta) -> Self {
        let basis = RealBasis::new(*potential.grid());
        let matrix = basis.operator_matrix(potential);
        Self { basis, potential: potential.clone(), matrix, meta }
    }

    /// Real basis of the matrix.
    pub fn basis(&self) -> &RealBasis {
        &self.basis
    }

    /// Grid.
    pub fn grid(&self) -> &TorusGrid {
        self.basis.grid()
    }

    /// Potential `V`.
    pub fn potential(&self) -> &SpectralField {
        &self.potential
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.matrix
    }

    /// `max |A_ij - A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i + 1..d {
                worst = worst.max((self.matrix[i * d + j] - self.matrix[j * d + i]).abs());
            }
        }
        worst
    }

    /// Matrix-vector product in coordinates.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        linalg::matmul(&self.matrix, x, self.dim(), self.dim(), 1)
    }

    /// Apply `H` to a field.
    pub fn apply_field(&self, u: &SpectralField) -> Result<SpectralField> {
        u.check_grid(&self.potential)?;
        Ok(self.basis.field(&self.apply(&self.basis.coordinates(u))))
    }

    /// Full dense decomposition (`vectors = false` keeps eigenvalues only).
    pub fn eigendecompose(&self, vectors: bool) -> Result<SpectralDecomposition> {
        let (values, vecs) = linalg::sym_eig(self.matrix.clone(), self.dim(), vectors)?;
        SpectralDecomposition::new(self.basis.clone(), self.meta, values, vecs.unwrap_or_default())
    }

    /// Lowest `k` eigenpairs by a dense partial solver.
    pub fn eigendecompose_lowest(&self, k: usize) -> Result<SpectralDecomposition> {
        let (values, vecs) = linalg::sym_eig_lowest(self.matrix.clone(), self.dim(), k)?;
        SpectralDecomposition::new(self.basis.clone(), self.meta, values, vecs)
    }
}

/// Lowest `k` eigenpairs of `-Delta + V` by Lanczos with transform-based
/// matrix-vector products; no matrix is formed.
pub fn lanczos_lowest(potential: &SpectralField, meta: OperatorMeta, k: usize, tol: f64) -> Result<SpectralDecomposition> {
    let basis = RealBasis::new(*potential.grid());
    let apply = |x: &[f64]| {
        let u = basis.field(x);
        let hu = &u.neg_laplacian() + &potential.product(&u).expect("same grid");
        basis.coordinates(&hu)
    };
    let mut rng = stream_rng(0x1a2c_0500, meta.seed);
    let mut start: Vec<f64> = (0..basis.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
    start[0] += 10.0 * (basis.dim() as f64).sqrt();
    let res = linalg::lanczos_lowest(apply, &start, k, tol, basis.dim().min(600))?;
    let dim = basis.dim();
    let mut vecs = Vec::with_capacity(res.values.len() * dim);
    res.vectors.iter().for_each(|v| vecs.extend_from_slice(v));
    SpectralDecomposition::new(basis, meta, res.values, vecs)
}

/// Eigenvalues and orthonormal eigenvectors (possibly only the lowest ones).
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    basis: RealBasis,
    /// Provenance.
    pub meta: OperatorMeta,
    values: Vec<f64>,
    vectors: Vec<f64>,
}

impl SpectralDecomposition {
    /// Build and normalize signs: `u_0` gets a positive mean, every other
    /// vector has its largest-magnitude coordinate positive.
    pub fn new(basis: RealBasis, meta: OperatorMeta, values: Vec<f64>, mut vectors: Vec<f64>) -> Result<Self> {
        let d = basis.dim();
        if !vectors.is_empty() && vectors.len() != values.len() * d {
            return Err(Error::Format(format!(
                "{} eigenvector entries for {} values of dimension {d}",
                vectors.len(),
                values.len()
            )));
        }
        for (n, v) in vectors.chunks_mut(d).enumerate() {
            let flip = if n == 0 && v[0].abs() > 1e-12 {
                v[0] < 0.0
            } else {
                let big = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
                big < 0.0
            };
            if flip {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(Self { basis, meta, values, vectors })
    }

    /// Grid.
    pub fn grid(&self) -> &TorusGrid {
        self.basis.grid()
    }

    /// Real basis.
    pub fn basis(&self) -> &RealBasis {
        &self.basis
    }

    /// Ascending eigenvalues.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of eigenpairs.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when no eigenpairs are stored.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Whether eigenvectors are stored.
    pub fn has_vectors(&self) -> bool {
        !self.vectors.is_empty()
    }

    /// Coordinates of eigenvector `n`.
    pub fn coordinates(&self, n: usize) -> &[f64] {
        let d = self.basis.dim();
        &self.vectors[n * d..(n + 1) * d]
    }

    /// All eigenvector coordinates, vector after vector.
    pub fn all_coordinates(&self) -> &[f64] {
        &self.vectors
    }

    /// Eigenfield `u_n`.
    pub fn eigenfield(&self, n: usize) -> SpectralField {
        self.basis.field(self.coordinates(n))
    }

    /// Values of `u_n` on the `N x N` grid.
    pub fn grid_values(&self, n: usize) -> Vec<f64> {
        self.eigenfield(n).values()
    }

    /// Values of the first `m` eigenfields on the grid, row `n` holding `u_n`.
    pub fn grid_value_matrix(&self, m: usize) -> Vec<f64> {
        let m = m.min(self.len());
        let mut out = Vec::with_capacity(m * self.grid().len());
        for n in 0..m {
            out.extend(self.grid_values(n));
        }
        out
    }

    /// Truncate to the lowest `m` pairs.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.len());
        let d = self.basis.dim();
        Self {
            basis: self.basis.clone(),
            meta: self.meta,
            values: self.values[..m].to_vec(),
            vectors: if self.has_vectors() { self.vectors[..m * d].to_vec() } else { Vec::new() },
        }
    }

    /// Worst relative residual `||H u - lambda u|| / (1 + |lambda|)` and worst
    /// orthonormality defect `max |<u_m, u_n> - delta_mn|`.
    pub fn verify(&self, op: &OperatorMatrix) -> (f64, f64) {
        let d = self.basis.dim();
        let m = self.len();
        let mut res = 0.0f64;
        for n in 0..m {
            let v = self.coordinates(n);
            let hv = op.apply(v);
            let r = hv.iter().zip(v).map(|(a, b)| (a - self.values[n] * b).powi(2)).sum::<f64>().sqrt();
            res = res.max(r / (1.0 + self.values[n].abs()));
        }
        let gram = linalg::matmul_nt(&self.vectors, &self.vectors, m, d, m);
        let mut orth = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                orth = orth.max((gram[i * m + j] - target).abs());
            }
        }
        (res, orth)
    }

    /// Distance from `z` to the nearest stored eigenvalue and that eigenvalue.
    pub fn nearest_eigenvalue(&self, z: f64) -> (f64, f64) {
        self.values
            .iter()
            .map(|&l| ((l - z).abs(), l))
            .fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a })
    }

    /// `(H - z)^{-1} f` by spectral calculus; needs the full decomposition.
    pub fn resolvent(&self, z: f64, f: &SpectralField) -> Result<SpectralField> {
        if self.len() != self.basis.dim() || !self.has_vectors() {
            return invalid("the direct resolvent needs a full decomposition with eigenvectors");
        }
        let tol = 1e-8;
        let (dist, nearest) = self.nearest_eigenvalue(z);
        if dist < tol {
            return Err(Error::NearPole { z, nearest, tol });
        }
        self.apply_function(f, |l| 1.0 / (l - z))
    }

    /// `g(H) f = sum_n g(lambda_n) <u_n, f> u_n` over the stored pairs.
    pub fn apply_function(&self, f: &SpectralField, g: impl Fn(f64) -> f64) -> Result<SpectralField> {
        if f.grid() != self.grid() {
            return Err(Error::GridMismatch("field and decomposition grids differ".into()));
        }
        let d = self.basis.dim();
        let m = self.len();
        let x = self.basis.coordinates(f);
        let proj = linalg::matmul(&self.vectors, &x, m, d, 1);
        let weights: Vec<f64> = proj.iter().zip(&self.values).map(|(p, &l)| p * g(l)).collect();
        let mut y = vec![0.0; d];
        for (n, w) in weights.iter().enumerate() {
            y.iter_mut().zip(self.coordinates(n)).for_each(|(a, b)| *a += w * b);
        }
        Ok(self.basis.field(&y))
    }

    /// Number of eigenvalues `<= lambda`.
    pub fn counting(&self, lambda: f64) -> usize {
        self.values.partition_point(|&l| l <= lambda)
    }

    /// Gap `lambda_1 - lambda_0`.
    pub fn gap(&self) -> f64 {
        self.values[1] - self.values[0]
    }
}

/// Least-squares slope of the counting function on `[lo, hi]`, sampled at `points` levels.
pub fn weyl_slope(values: &[f64], lo: f64, hi: f64, points: usize) -> Result<stats::LinearFit> {
    if !(hi > lo) || points < 2 {
        return invalid(format!("empty Weyl band [{lo}, {hi}]"));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = (0..points)
        .map(|i| {
            let l = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            (l, values.partition_point(|&v| v <= l) as f64)
        })
        .unzip();
    Ok(stats::linear_fit(&x, &y))
}

/// Weyl slope `mu(S) / (4 pi)` of a torus of side `L`.
pub fn weyl_constant(l: f64) -> f64 {
    l * l / (4.0 * PI)
}

/// Trusted Weyl band `[5, 0.3 lambda_max]`, `lambda_max` the largest flat symbol on the grid.
pub fn weyl_band(grid: &TorusGrid) -> (f64, f64) {
    (5.0, 0.3 * grid.max_symbol())
}

/// `max_n |lambda_n(V + v) - lambda_n(V) - v|` from two dense eigenvalue solves.
pub fn spectrum_shift_check(potential: &SpectralField, v: f64) -> Result<f64> {
    let meta = OperatorMeta::default();
    let a = OperatorMatrix::from_potential(potential, meta).eigendecompose(false)?;
    let shifted = potential + &SpectralField::constant(*potential.grid(), v);
    let b = OperatorMatrix::from_potential(&shifted, meta).eigendecompose(false)?;
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (y - x - v).abs()).fold(0.0, f64::max))
}

/// Log-Sobolev constant of the flat torus of side `L` (inverse spectral gap `(2 pi / L)^2`).
pub fn flat_log_sobolev_constant(l: f64) -> f64 {
    l * l / (4.0 * PI * PI)
}

/// Spectral-gap certificate of one decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct GapCertificate {
    /// `lambda_0`.
    pub lambda0: f64,
    /// `lambda_1 - lambda_0`.
    pub gap: f64,
    /// `min u_0` on the grid.
    pub u0_min: f64,
    /// `max u_0` on the grid.
    pub u0_max: f64,
    /// `(min u_0 / max u_0)^4 (2/L)^2 / 4`.
    pub cheeger_bound: f64,
    /// `(min u_0 / max u_0)^2 (max u_0^4 + max u_0^{-4})^{-1} / (2 C_LS)`.
    pub log_sobolev_bound: f64,
}

impl GapCertificate {
    /// Certificates from the two lowest pairs and the grid values of `u_0`.
    pub fn from_decomposition(spec: &SpectralDecomposition) -> Self {
        let u0 = spec.grid_values(0);
        Self::from_parts(spec.values()[0], spec.gap(), &u0, spec.grid().l())
    }

    /// Certificates from explicit ingredients.
    pub fn from_parts(lambda0: f64, gap: f64, u0: &[f64], l: f64) -> Self {
        let u0_min = u0.iter().copied().fold(f64::INFINITY, f64::min);
        let u0_max = u0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ratio = u0_min / u0_max;
        let cheeger_bound = ratio.powi(4) * (2.0 / l).powi(2) / 4.0;
        let log_sobolev_bound = if u0_min > 0.0 {
            ratio.powi(2) / (u0_max.powi(4) + u0_min.powi(-4)) / (2.0 * flat_log_sobolev_constant(l))
        } else {
            0.0
        };
        Self { lambda0, gap, u0_min, u0_max, cheeger_bound, log_sobolev_bound }
    }

    /// Ground state simple (gap above `1e-8`) and pointwise positive.
    pub fn ground_state_ok(&self) -> bool {
        self.gap > 1e-8 && self.u0_min > 0.0
    }

    /// Both lower bounds respected.
    pub fn bounds_ok(&self) -> bool {
        self.gap >= self.cheeger_bound && self.gap >= self.log_sobolev_bound
    }
}

/// `(lambda_n, ||u_n||_{C^a})` for eigenpairs `n` in `range`.
pub fn holder_table(spec: &SpectralDecomposition, a: f64, range: std::ops::Range<usize>) -> Vec<(f64, f64)> {
    let lp = LpBlocks::new(*spec.grid());
    range.map(|n| (spec.values()[n], lp.holder_norm(&spec.eigenfield(n), a))).collect()
}

/// Log-log regression of `||u_n||_{C^a}` against `lambda_n` over pairs with `lambda_n >= lambda_min`.
pub fn holder_scaling_slope(table: &[(f64, f64)], lambda_min: f64) -> stats::LinearFit {
    let (x, y): (Vec<f64>, Vec<f64>) = table
        .iter()
        .filter(|(l, _)| *l >= lambda_min)
        .map(|(l, h)| (l.ln(), h.ln()))
        .unzip();
    stats::linear_fit(&x, &y)
}

/// `||pi_{<= lambda} f||_{H^{1-eps}} / ||f||_{L^2}` from a decomposition with vectors.
pub fn spectral_projector_ratio(spec: &SpectralDecomposition, lambda: f64, eps: f64, f: &SpectralField) -> Result<f64> {
    let p = spec.apply_function(f, |l| if l <= lambda { 1.0 } else { 0.0 })?;
    Ok(p.sobolev_norm(1.0 - eps) / f.l2_norm())
}

/// Random unit-norm field with independent standard normal coordinates.
pub fn random_unit_field(grid: TorusGrid, seed: u64, stream: u64) -> SpectralField {
    let basis = RealBasis::new(grid);
    let mut rng = stream_rng(seed, stream);
    let x: Vec<f64> = (0..basis.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let f = basis.field(&x);
    f.scale(1.0 / f.l2_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_white_noise;

    fn flat(l: f64, n: usize) -> OperatorMatrix {
        let g = TorusGrid::new(l, n).unwrap();
        OperatorMatrix::from_potential(&SpectralField::zeros(g), OperatorMeta::default())
    }

    fn noisy(seed: u64) -> OperatorMatrix {
        let g = TorusGrid::new(2.0 * PI, 12).unwrap();
        let e = EnhancedNoise::new(&sample_white_noise(g, seed), 0.05, 1.0).unwrap();
        OperatorMatrix::assemble(&e)
    }

    #[test]
    fn flat_spectrum_has_lattice_multiplicities() {
        let s = flat(2.0 * PI, 8).eigendecompose(true).unwrap();
        assert!(s.values()[0].abs() < 1e-12);
        let ones = s.values().iter().filter(|&&l| (l - 1.0).abs() < 1e-10).count();
        assert_eq!(ones, 4);
        let twos = s.values().iter().filter(|&&l| (l - 2.0).abs() < 1e-10).count();
        assert_eq!(twos, 4);
        let u0 = s.grid_values(0);
        assert!(u0.iter().all(|&v| (v - 1.0 / (2.0 * PI)).abs() < 1e-12));
    }

    #[test]
    fn assembled_matrix_is_symmetric_and_decomposition_verifies() {
        let op = noisy(1);
        assert!(op.symmetry_defect() < 1e-12);
        let s = op.eigendecompose(true).unwrap();
        let (res, orth) = s.verify(&op);
        assert!(res < 1e-8 && orth < 1e-10, "{res} {orth}");
        assert!(s.eigenfield(0).mean() > 0.0);
        let part = op.eigendecompose_lowest(5).unwrap();
        for i in 0..5 {
            assert!((part.values()[i] - s.values()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let op = noisy(2);
        let dense = op.eigendecompose(false).unwrap();
        let lz = lanczos_lowest(op.potential(), op.meta, 3, 1e-11).unwrap();
        for i in 0..3 {
            assert!((lz.values()[i] - dense.values()[i]).abs() < 1e-8);
        }
        let (res, orth) = lz.verify(&op);
        assert!(res < 1e-8 && orth < 1e-8, "{res} {orth}");
    }

    #[test]
    fn resolvent_identities() {
        let op = noisy(3);
        let s = op.eigendecompose(true).unwrap();
        let f = random_unit_field(*op.grid(), 4, 0);
        let z = s.values()[0] - 1.5;
        let u = s.resolvent(z, &f).unwrap();
        let back = &op.apply_field(&u).unwrap() - &u.scale(z);
        assert!((&back - &f).l2_norm() < 1e-8);
        // R(z) - R(z1) = (z - z1) R(z) R(z1)
        let z1 = s.values()[1] + 0.3;
        let lhs = &u - &s.resolvent(z1, &f).unwrap();
        let rhs = s.resolvent(z, &s.resolvent(z1, &f).unwrap()).unwrap().scale(z - z1);
        assert!((&lhs - &rhs).l2_norm() < 1e-7 * lhs.l2_norm());
        let u3 = s.eigenfield(3);
        let r3 = s.resolvent(z, &u3).unwrap();
        assert!((&r3 - &u3.scale(1.0 / (s.values()[3] - z))).l2_norm() < 1e-10);
        assert!(matches!(s.resolvent(s.values()[2], &f), Err(Error::NearPole { .. })));
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let g = TorusGrid::new(2.0 * PI, 8).unwrap();
        let v = SpectralField::constant(g, 2.5);
        let s = OperatorMatrix::from_potential(&v, OperatorMeta::default()).eigendecompose(false).unwrap();
        assert!((s.values()[0] - 2.5).abs() < 1e-12);
        let op = noisy(5);
        assert!(spectrum_shift_check(op.potential(), 0.0).unwrap() < 1e-12);
        assert!(spectrum_shift_check(op.potential(), 1.0).unwrap() < 1e-9);
    }

    #[test]
    fn flat_weyl_slope_and_gap_certificate() {
        let s = flat(2.0 * PI, 32).eigendecompose(false).unwrap();
        let (lo, hi) = weyl_band(s.grid());
        let fit = weyl_slope(s.values(), lo, hi, 400).unwrap();
        assert!((fit.slope / weyl_constant(2.0 * PI) - 1.0).abs() < 0.1, "slope {}", fit.slope);
        let u0 = vec![1.0 / (2.0 * PI); 64];
        let c = GapCertificate::from_parts(0.0, 1.0, &u0, 2.0 * PI);
        assert!((c.cheeger_bound - 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        assert!(c.bounds_ok() && c.ground_state_ok());
        let scaled: Vec<f64> = u0.iter().map(|v| 3.0 * v).collect();
        let c2 = GapCertificate::from_parts(0.0, 1.0, &scaled, 2.0 * PI);
        assert!((c2.cheeger_bound - c.cheeger_bound).abs() < 1e-15);
    }

    #[test]
    fn projector_ratio_limits() {
        let op = noisy(6);
        let s = op.eigendecompose(true).unwrap();
        let u0 = s.eigenfield(0);
        assert!(spectral_projector_ratio(&s, s.values()[0] - 1.0, 0.1, &u0).unwrap() < 1e-14);
        let f = random_unit_field(*op.grid(), 7, 0);
        let full = spectral_projector_ratio(&s, f64::INFINITY, 0.1, &f).unwrap();
        assert!((full - f.sobolev_norm(0.9)).abs() < 1e-8 * full);
    }
}
