//! Anderson Gaussian free field `phi = sum_n gamma_n (c + lambda_n)^{-1/2} u_n`,
//! its Green function, trace powers `a_n = sum_k (lambda_k + c)^{-n}`, Wick
//! squares and the regularized-determinant partition identity.
//!
//! Normalization: with `mu_k = (lambda_k + c)^{-1}` and `W = :phi^2:(1)`,
//! `E'[e^{-beta lambda W}] = det_2(Id + 2 beta lambda (H + c)^{-1})^{-1/2}`,
//! so the determinant identity `Z(lambda) = det_2(Id + lambda (H + c)^{-1})^{-1/2}`
//! holds for `Z(lambda) = E'[e^{-lambda W / 2}]`, i.e. `beta = 1/2`.

use crate::error::{invalid, Result};
use crate::field::SpectralField;
use crate::grid::TorusGrid;
use crate::linalg;
use crate::noise::stream_rng;
use crate::spectral::SpectralDecomposition;
use crate::stats;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Normalization factor between the Wick square and the determinant identity.
pub const WICK_BETA: f64 = 0.5;

/// Default mass shift `c = 1 - lambda_0`.
pub fn default_mass(spec: &SpectralDecomposition) -> f64 {
    1.0 - spec.values()[0]
}

/// Sampler of the Anderson GFF on the grid points.
#[derive(Debug, Clone)]
pub struct GffSampler {
    grid: TorusGrid,
    noise_seed: u64,
    c: f64,
    mu: Vec<f64>,
    /// Row `n` holds `u_n` on the grid.
    u: Vec<f64>,
}

impl GffSampler {
    /// Sampler for `(H + c)^{-1}`; requires `c > -lambda_0 + 1e-6` and eigenvectors.
    pub fn new(spec: &SpectralDecomposition, c: f64) -> Result<Self> {
        let l0 = spec.values()[0];
        if !(c > -l0 + 1e-6) {
            return invalid(format!("mass shift c = {c} must exceed -lambda_0 = {}", -l0));
        }
        if !spec.has_vectors() {
            return invalid("the GFF sampler needs eigenvectors");
        }
        Ok(Self {
            grid: *spec.grid(),
            noise_seed: spec.meta.seed,
            c,
            mu: spec.values().iter().map(|l| 1.0 / (l + c)).collect(),
            u: spec.grid_value_matrix(spec.len()),
        })
    }

    /// Grid.
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Mass shift.
    pub fn mass(&self) -> f64 {
        self.c
    }

    /// Covariance eigenvalues `mu_k = (lambda_k + c)^{-1}`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Standard normal coefficients `gamma_n` of sample `gff_seed`.
    pub fn coefficients(&self, gff_seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(gff_seed, self.noise_seed);
        (0..self.mu.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Grid values of the sample with seed pair `(noise seed, gff_seed)`.
    pub fn sample(&self, gff_seed: u64) -> Vec<f64> {
        self.sample_batch(&[gff_seed]).pop().expect("one sample")
    }

    /// Grid values of several samples, computed with one matrix product.
    pub fn sample_batch(&self, gff_seeds: &[u64]) -> Vec<Vec<f64>> {
        let m = self.mu.len();
        let p = self.grid.len();
        let b = gff_seeds.len();
        let mut coef = Vec::with_capacity(b * m);
        for &s in gff_seeds {
            coef.extend(self.coefficients(s).iter().zip(&self.mu).map(|(g, mu)| g * mu.sqrt()));
        }
        let vals = linalg::matmul(&coef, &self.u, b, m, p);
        vals.chunks(p).map(|c| c.to_vec()).collect()
    }

    /// Sample as a field.
    pub fn sample_field(&self, gff_seed: u64) -> Result<SpectralField> {
        SpectralField::from_values(self.grid, &self.sample(gff_seed))
    }

    /// Green function `G(x_i, x_j)` at grid indices.
    pub fn green(&self, i: usize, j: usize) -> f64 {
        let p = self.grid.len();
        self.mu.iter().enumerate().map(|(n, mu)| mu * self.u[n * p + i] * self.u[n * p + j]).sum()
    }

    /// Row `G(x_i, .)` on the grid.
    pub fn green_row(&self, i: usize) -> Vec<f64> {
        let p = self.grid.len();
        let m = self.mu.len();
        let w: Vec<f64> = (0..m).map(|n| self.mu[n] * self.u[n * p + i]).collect();
        linalg::matmul(&w, &self.u, 1, m, p)
    }

    /// Full Green matrix on the grid (row-major `N^2 x N^2`).
    pub fn green_matrix(&self) -> Vec<f64> {
        let p = self.grid.len();
        let m = self.mu.len();
        let mut scaled = self.u.clone();
        let mut t = vec![0.0; p * m];
        for n in 0..m {
            let s = self.mu[n].sqrt();
            for i in 0..p {
                scaled[n * p + i] *= s;
                t[i * m + n] = scaled[n * p + i];
            }
        }
        linalg::matmul(&t, &scaled, p, m, p)
    }

    /// Wick square `:phi^2:(1) = int phi^2 - sum_k mu_k` from grid values.
    pub fn wick_total(&self, values: &[f64]) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        values.iter().map(|v| v * v).sum::<f64>() * h2 - self.mu.iter().sum::<f64>()
    }

    /// Weighted Wick square `:phi^2:(f) = int (phi^2 - G(x, x)) f`.
    pub fn wick_weighted(&self, values: &[f64], f: &[f64], diag: &[f64]) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        values.iter().zip(f).zip(diag).map(|((v, w), d)| (v * v - d) * w).sum::<f64>() * h2
    }

    /// Diagonal `G(x, x)` on the grid.
    pub fn green_diagonal(&self) -> Vec<f64> {
        let p = self.grid.len();
        (0..p)
            .map(|i| self.mu.iter().enumerate().map(|(n, mu)| mu * self.u[n * p + i].powi(2)).sum())
            .collect()
    }
}

/// `a_n = sum_k mu_k^n` for `n >= 2`.
pub fn trace_power(mu: &[f64], n: u32) -> Result<f64> {
    if n < 2 {
        return invalid(format!("trace powers need n >= 2, got {n}"));
    }
    let mut s = stats::CompensatedSum::new();
    mu.iter().for_each(|m| s.add(m.powi(n as i32)));
    Ok(s.value())
}

/// Kernel route: `a_n = int prod G(x_i, x_{i+1})` by grid quadrature of the Green matrix (n = 2, 3).
pub fn trace_power_quadrature(green: &[f64], points: usize, h2: f64, n: u32) -> Result<f64> {
    match n {
        2 => Ok(green.iter().map(|g| g * g).sum::<f64>() * h2 * h2),
        3 => {
            let g2 = linalg::matmul(green, green, points, points, points);
            let tr: f64 = (0..points).map(|i| (0..points).map(|j| g2[i * points + j] * green[j * points + i]).sum::<f64>()).sum();
            Ok(tr * h2.powi(3))
        }
        _ => invalid(format!("kernel quadrature implemented for n = 2, 3, got {n}")),
    }
}

/// `det_2(Id + lambda A) = prod (1 + lambda a) e^{-lambda a}` for eigenvalues `a`.
pub fn det2(eigs: &[f64], lambda: f64) -> f64 {
    log_abs_det2(eigs, lambda).exp() * det2_sign(eigs, lambda)
}

fn log_abs_det2(eigs: &[f64], lambda: f64) -> f64 {
    let mut s = stats::CompensatedSum::new();
    for &a in eigs {
        s.add((1.0 + lambda * a).abs().ln() - lambda * a);
    }
    s.value()
}

fn det2_sign(eigs: &[f64], lambda: f64) -> f64 {
    let neg = eigs.iter().filter(|&&a| 1.0 + lambda * a < 0.0).count();
    if neg % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `Z(lambda) = det_2(Id + lambda (H + c)^{-1})^{-1/2}`.
pub fn partition_det2(mu: &[f64], lambda: f64) -> f64 {
    (-0.5 * log_abs_det2(mu, lambda)).exp()
}

/// Series `exp(sum_{n >= 2} (-lambda)^n a_n / (2n))`, truncated once a term is below `1e-12`.
///
/// Refuses `lambda` outside the safety radius `a_2^{-1/2}` or without the
/// geometric-decay certificate `|lambda| max mu < 1/2`.
pub fn partition_series(mu: &[f64], lambda: f64) -> Result<f64> {
    let a2 = trace_power(mu, 2)?;
    let mmax = mu.iter().copied().fold(0.0, f64::max);
    if lambda.abs() >= a2.powf(-0.5) || lambda.abs() * mmax >= 0.5 {
        return invalid(format!(
            "lambda = {lambda} outside the series safety radius (a_2^-1/2 = {}, max mu = {mmax})",
            a2.powf(-0.5)
        ));
    }
    let mut log_z = 0.0;
    for n in 2..10_000u32 {
        let term = (-lambda).powi(n as i32) * trace_power(mu, n)? / (2.0 * n as f64);
        log_z += term;
        if term.abs() < 1e-12 {
            return Ok(log_z.exp());
        }
    }
    invalid("partition series did not converge")
}

/// Monte Carlo `E'[e^{-lambda W / 2}]` and its standard error from Wick samples `W`.
pub fn partition_mc(wick: &[f64], lambda: f64) -> (f64, f64) {
    let v: Vec<f64> = wick.iter().map(|w| (-WICK_BETA * lambda * w).exp()).collect();
    (stats::mean(&v), stats::std_error(&v))
}

/// One row of the partition-function table.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionRow {
    /// Coupling.
    pub lambda: f64,
    /// Monte Carlo estimate.
    pub z_mc: f64,
    /// Its standard error.
    pub z_mc_stderr: f64,
    /// Series value (NaN outside the radius).
    pub z_series: f64,
    /// Determinant value.
    pub z_det2: f64,
}

/// Wick totals `:phi^2:(1)` for `count` GFF samples (seeds `first .. first + count`).
pub fn wick_totals(sampler: &GffSampler, first: u64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let batch = 256;
    let mut s = first;
    while out.len() < count {
        let b = batch.min(count - out.len());
        let seeds: Vec<u64> = (s..s + b as u64).collect();
        for v in sampler.sample_batch(&seeds) {
            out.push(sampler.wick_total(&v));
        }
        s += b as u64;
    }
    out
}

/// The three partition-function routes on a `lambda` grid.
pub fn partition_table(sampler: &GffSampler, lambdas: &[f64], wick: &[f64]) -> Vec<PartitionRow> {
    lambdas
        .iter()
        .map(|&lambda| {
            let (z_mc, z_mc_stderr) = partition_mc(wick, lambda);
            PartitionRow {
                lambda,
                z_mc,
                z_mc_stderr,
                z_series: partition_series(sampler.mu(), lambda).unwrap_or(f64::NAN),
                z_det2: partition_det2(sampler.mu(), lambda),
            }
        })
        .collect()
}

/// Recover the largest `count` covariance eigenvalues from the zeros of
/// `lambda -> det_2(Id + lambda A)` on the negative axis.
///
/// The product changes sign at each simple zero `-1/mu_k`; the scan walks
/// outward in small relative steps and refines each bracket by bisection.
pub fn recover_spectrum_from_zeros(eigs: &[f64], count: usize, lambda_max: f64) -> Vec<f64> {
    let sign = |l: f64| det2_sign(eigs, l);
    let mut found = Vec::new();
    let mut a = -1e-9;
    let mut sa = sign(a);
    while found.len() < count && -a < lambda_max {
        let b = a * (1.0 + 2e-5) - 1e-9;
        let sb = sign(b);
        if sb != sa {
            let (mut lo, mut hi) = (b, a);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sign(mid) == sb {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if (hi - lo).abs() < 1e-15 * hi.abs() {
                    break;
                }
            }
            found.push(-1.0 / (0.5 * (lo + hi)));
        }
        a = b;
        sa = sb;
    }
    found
}

/// `Z(f)` routes for a non-negative weight `f` on the grid: Monte Carlo of
/// `E'[e^{-:phi^2:(f) / 2}]` and `det_2(Id + M_{f^{1/2}} G M_{f^{1/2}})^{-1/2}`.
pub fn weighted_partition(sampler: &GffSampler, f: &[f64], first: u64, count: usize) -> Result<(f64, f64, f64)> {
    let p = sampler.grid().len();
    if f.len() != p || f.iter().any(|&v| v < 0.0) {
        return invalid("weight must be non-negative grid values");
    }
    let h2 = sampler.grid().spacing().powi(2);
    let g = sampler.green_matrix();
    let sq: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
    let mut b = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            b[i * p + j] = sq[i] * g[i * p + j] * sq[j] * h2;
        }
    }
    let (eigs, _) = linalg::sym_eig(b, p, false)?;
    let z_det = partition_det2(&eigs, 1.0);
    let diag = sampler.green_diagonal();
    let seeds: Vec<u64> = (first..first + count as u64).collect();
    let vals: Vec<f64> = seeds
        .chunks(256)
        .flat_map(|c| sampler.sample_batch(c))
        .map(|v| (-WICK_BETA * sampler.wick_weighted(&v, f, &diag)).exp())
        .collect();
    Ok((stats::mean(&vals), stats::std_error(&vals), z_det))
}

/// Exact variance `2 int int G_s(x, y)^2 f(x) f(y)` of the Wick square of
/// `phi_s = e^{s Delta} phi`, and Monte Carlo samples of `:phi_s^2:(f)`.
pub fn smoothed_wick_variance(sampler: &GffSampler, s: f64, f: &[f64], first: u64, count: usize) -> Result<(f64, Vec<f64>)> {
    let grid = *sampler.grid();
    let p = grid.len();
    let m = sampler.mu.len();
    let h2 = grid.spacing().powi(2);
    // Smoothed modes S u_n on the grid.
    let mut su = Vec::with_capacity(m * p);
    for n in 0..m {
        let field = SpectralField::from_values(grid, &sampler.u[n * p..(n + 1) * p])?;
        su.extend(field.heat_smooth(s)?.values());
    }
    let mut scaled = su.clone();
    let mut t = vec![0.0; p * m];
    for n in 0..m {
        let w = sampler.mu[n].sqrt();
        for i in 0..p {
            scaled[n * p + i] *= w;
            t[i * m + n] = scaled[n * p + i];
        }
    }
    let gs = linalg::matmul(&t, &scaled, p, m, p);
    let mut var = 0.0;
    for i in 0..p {
        for j in 0..p {
            var += gs[i * p + j].powi(2) * f[i] * f[j];
        }
    }
    var *= 2.0 * h2 * h2;
    let diag: Vec<f64> = (0..p).map(|i| gs[i * p + i]).collect();
    let mut samples = Vec::with_capacity(count);
    for seed in first..first + count as u64 {
        let coef: Vec<f64> = sampler.coefficients(seed).iter().zip(&sampler.mu).map(|(g, mu)| g * mu.sqrt()).collect();
        let v = linalg::matmul(&coef, &su, 1, m, p);
        samples.push(sampler.wick_weighted(&v, f, &diag));
    }
    Ok((var, samples))
}

/// Slope of `G(x, y)` against `|log d(x, y)|` over pairs with `d` in `[dmin, dmax]`, from grid point `i`.
pub fn green_log_slope(sampler: &GffSampler, i: usize, dmin: f64, dmax: f64) -> stats::LinearFit {
    let g = *sampler.grid();
    let n = g.n();
    let row = sampler.green_row(i);
    let xp = g.point(i / n, i % n);
    let (x, y): (Vec<f64>, Vec<f64>) = (0..g.len())
        .filter_map(|j| {
            let d = g.distance(g.point(j / n, j % n), xp);
            (d >= dmin && d <= dmax).then(|| (d.ln().abs(), row[j]))
        })
        .unzip();
    stats::linear_fit(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_white_noise;
    use crate::paracontrolled::EnhancedNoise;
    use crate::spectral::OperatorMatrix;
    use std::f64::consts::PI;

    fn noisy_spec(n: usize) -> SpectralDecomposition {
        let g = TorusGrid::new(2.0 * PI, n).unwrap();
        let e = EnhancedNoise::new(&sample_white_noise(g, 4), 0.05, 1.0).unwrap();
        OperatorMatrix::assemble(&e).eigendecompose(true).unwrap()
    }

    #[test]
    fn two_layer_determinism_and_mass_contract() {
        let spec = noisy_spec(8);
        let s = GffSampler::new(&spec, default_mass(&spec)).unwrap();
        assert_eq!(s.sample(3), s.sample(3));
        assert_ne!(s.sample(3), s.sample(4));
        assert!(GffSampler::new(&spec, -spec.values()[0]).is_err());
    }

    #[test]
    fn kernel_quadrature_matches_trace_powers() {
        let spec = noisy_spec(8);
        let s = GffSampler::new(&spec, 0.7 - spec.values()[0]).unwrap();
        let g = s.green_matrix();
        let h2 = s.grid().spacing().powi(2);
        for n in [2, 3] {
            let a = trace_power(s.mu(), n).unwrap();
            let q = trace_power_quadrature(&g, s.grid().len(), h2, n).unwrap();
            assert!((a - q).abs() < 1e-10 * a, "{a} vs {q}");
        }
        assert!(trace_power(s.mu(), 1).is_err());
        assert!((s.green(3, 9) - g[3 * 64 + 9]).abs() < 1e-14);
    }

    #[test]
    fn series_and_determinant_agree_inside_radius() {
        let mu: Vec<f64> = (0..50).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let a2 = trace_power(&mu, 2).unwrap();
        for s in [0.1, 0.3, -0.3] {
            let l = s / a2.sqrt();
            let a = partition_series(&mu, l).unwrap();
            let b = partition_det2(&mu, l);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert_eq!(partition_det2(&mu, 0.0), 1.0);
        assert!(partition_series(&mu, 2.0 / a2.sqrt()).is_err());
        // det_2 itself against the trace series of its logarithm.
        let l: f64 = 0.2;
        let series: f64 = (2..200).map(|n| -(-l).powi(n) * trace_power(&mu, n as u32).unwrap() / n as f64).sum();
        assert!((det2(&mu, l).ln() - series).abs() < 1e-12);
    }

    #[test]
    fn zeros_recover_largest_eigenvalues() {
        let mu = vec![1.0, 0.5, 0.4, 0.33, 0.2, 0.1];
        let rec = recover_spectrum_from_zeros(&mu, 5, 100.0);
        for (a, b) in rec.iter().zip(&mu) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn wick_variance_identity_flat_weight() {
        let spec = noisy_spec(8);
        let s = GffSampler::new(&spec, default_mass(&spec)).unwrap();
        let f = vec![1.0; 64];
        let (var, samples) = smoothed_wick_variance(&s, 0.0, &f, 0, 4000).unwrap();
        let a2 = trace_power(s.mu(), 2).unwrap();
        assert!((var - 2.0 * a2).abs() < 1e-9 * var);
        assert!(stats::mean(&samples).abs() < 4.0 * stats::std_error(&samples));
        let v = stats::variance(&samples);
        assert!((v / var - 1.0).abs() < 0.1, "{v} vs {var}");
        let w = wick_totals(&s, 0, 10);
        assert!((w[0] - samples[0]).abs() < 1e-9);
    }
}
