//! Path measures built from exact heat-kernel chains on the grid: polymer
//! paths, ground-state-transformed (Anderson) diffusions, bridges, their
//! quadratic variation, the small-time exponent probe and the singularity
//! statistic along Brownian paths.

use crate::error::{invalid, Result};
use crate::field::SpectralField;
use crate::grid::TorusGrid;
use crate::heat::HeatKernel;
use crate::noise::{stream_rng, NoiseRealization};
use crate::paracontrolled::renormalization_constant;
use crate::spectral::{OperatorMatrix, OperatorMeta};
use crate::stats;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Kind of path sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    /// h-transformed polymer chain.
    Polymer,
    /// Ground-state-transformed diffusion.
    Diffusion,
    /// Diffusion bridge.
    Bridge,
    /// Brownian motion of the flat Laplacian.
    Brownian,
    /// Closed loop of a loop soup (the last position repeats the first).
    Loop,
}

/// One discretized path and its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// `(noise seed, path seed)`.
    pub seeds: [u64; 2],
    /// Sampler kind.
    pub kind: PathKind,
    /// Time step.
    pub delta: f64,
    /// Positions `x_0 .. x_M` on the torus.
    pub positions: Vec<[f64; 2]>,
}

impl Path {
    /// One NDJSON line `{seeds, kind, delta, positions}`.
    pub fn to_ndjson(&self) -> String {
        serde_json::to_string(self).expect("paths serialize")
    }

    /// Parse one NDJSON line.
    pub fn from_ndjson(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| crate::Error::Format(format!("bad path record: {e}")))
    }
}

/// `sum_i d(w_{i+1}, w_i)^2` with torus distance.
pub fn quadratic_variation(grid: &TorusGrid, path: &Path) -> f64 {
    path.positions.windows(2).map(|w| grid.distance(w[0], w[1]).powi(2)).sum()
}

/// `max_{i<j} d(w_j, w_i) / ((j - i) delta)^{gamma}`.
pub fn holder_ratio(grid: &TorusGrid, path: &Path, gamma: f64) -> f64 {
    let p = &path.positions;
    let mut best = 0.0f64;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let dt = (j - i) as f64 * path.delta;
            best = best.max(grid.distance(p[i], p[j]) / dt.powf(gamma));
        }
    }
    best
}

fn sample_index(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64>, scratch: &mut Vec<f64>) -> Option<usize> {
    scratch.clear();
    let mut acc = 0.0;
    for w in weights {
        acc += w.max(0.0);
        scratch.push(acc);
    }
    if !(acc > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * acc;
    Some(scratch.partition_point(|&c| c <= u).min(scratch.len() - 1))
}

/// Sequential sampler over a fixed one-step kernel and per-step target weights.
#[derive(Debug, Clone)]
pub struct KernelChain {
    grid: TorusGrid,
    kind: PathKind,
    noise_seed: u64,
    delta: f64,
    /// One-step kernel `p_delta(x_i, x_j)` (row-major).
    step: Vec<f64>,
    /// Per-step multiplicative weights on the target point (one vector per step).
    weights: Vec<Vec<f64>>,
    /// Per-step survival probability (killing).
    survival: f64,
}

impl KernelChain {
    /// Polymer chain: step `i` draws `z` with weight `p_delta(x_i, z) p_{T - t_{i+1}}(z)`.
    pub fn polymer(hk: &HeatKernel, noise_seed: u64, t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_final > 0.0) {
            return invalid("polymer chain needs T > 0 and at least one step");
        }
        let delta = t_final / steps as f64;
        let ones = vec![1.0; hk.points()];
        let weights = (0..steps)
            .map(|i| {
                let rest = t_final - (i + 1) as f64 * delta;
                if rest <= 1e-12 * t_final {
                    Ok(ones.clone())
                } else {
                    hk.semigroup(rest, &ones)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: *hk.grid(),
            kind: PathKind::Polymer,
            noise_seed,
            delta,
            step: hk.matrix(delta)?,
            weights,
            survival: 1.0,
        })
    }

    /// Diffusion chain `e^{delta lambda_0} p_delta(x, y) u_0(y) / u_0(x)` with killing rate `a`.
    pub fn diffusion(hk: &HeatKernel, noise_seed: u64, delta: f64, steps: usize, killing: f64) -> Result<Self> {
        let u0 = hk.mode_values(0).to_vec();
        if u0.iter().any(|&v| v <= 0.0) {
            return invalid("the ground state is not positive on the grid; diffusion undefined");
        }
        if killing < 0.0 {
            return invalid("killing rate must be non-negative");
        }
        Ok(Self {
            grid: *hk.grid(),
            kind: PathKind::Diffusion,
            noise_seed,
            delta,
            step: hk.matrix(delta)?,
            weights: vec![u0; steps],
            survival: (-killing * delta).exp(),
        })
    }

    /// Time step.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of steps.
    pub fn steps(&self) -> usize {
        self.weights.len()
    }

    /// Normalized transition probabilities out of grid index `x` at step `i`.
    pub fn transition_row(&self, i: usize, x: usize) -> Vec<f64> {
        let p = self.grid.len();
        let w = &self.weights[i];
        let row: Vec<f64> = (0..p).map(|z| self.step[x * p + z].max(0.0) * w[z]).collect();
        let s: f64 = row.iter().sum();
        row.iter().map(|v| v / s).collect()
    }

    /// Quadrature mass `sum_z q(x, z) h^2` of the unnormalized diffusion kernel at `x`.
    pub fn diffusion_mass(&self, hk: &HeatKernel, x: usize) -> f64 {
        let p = self.grid.len();
        let h2 = self.grid.spacing().powi(2);
        let u0 = hk.mode_values(0);
        let l0 = hk.eigenvalues()[0];
        (0..p).map(|z| self.step[x * p + z] * u0[z] / u0[x] * h2).sum::<f64>() * (self.delta * l0).exp()
    }

    /// Sample one path from grid index `start`; a killed path stops early.
    pub fn sample(&self, start: usize, path_seed: u64) -> Path {
        let p = self.grid.len();
        let n = self.grid.n();
        let mut rng = stream_rng(path_seed, self.noise_seed ^ 0x9a7b_0000);
        let mut scratch = Vec::with_capacity(p);
        let mut x = start;
        let mut positions = vec![self.grid.point(x / n, x % n)];
        for i in 0..self.steps() {
            if self.survival < 1.0 && rng.random::<f64>() > self.survival {
                break;
            }
            let w = &self.weights[i];
            let row = &self.step[x * p..(x + 1) * p];
            match sample_index(&mut rng, row.iter().zip(w).map(|(a, b)| a * b), &mut scratch) {
                Some(z) => x = z,
                None => break,
            }
            positions.push(self.grid.point(x / n, x % n));
        }
        Path { seeds: [self.noise_seed, path_seed], kind: self.kind, delta: self.delta, positions }
    }
}

/// Bridge sampler from `x` to `y` over `[0, T]` in `steps` steps.
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    grid: TorusGrid,
    noise_seed: u64,
    delta: f64,
    step: Vec<f64>,
    /// `p_{T - (i+1) delta}(., y)` for each step.
    to_target: Vec<Vec<f64>>,
    target: usize,
}

impl BridgeSampler {
    /// Bridge with step law `p_delta(x_i, z) p_{T-(i+1)delta}(z, y) / p_{T - i delta}(x_i, y)`.
    pub fn new(hk: &HeatKernel, noise_seed: u64, target: usize, t_final: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return invalid("a bridge needs at least two steps");
        }
        let delta = t_final / steps as f64;
        let to_target = (0..steps - 1)
            .map(|i| hk.row(t_final - (i + 1) as f64 * delta, target))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: *hk.grid(), noise_seed, delta, step: hk.matrix(delta)?, to_target, target })
    }

    /// Sample one bridge from `start`.
    pub fn sample(&self, start: usize, path_seed: u64) -> Path {
        let p = self.grid.len();
        let n = self.grid.n();
        let mut rng = stream_rng(path_seed, self.noise_seed ^ 0xb71d_0000);
        let mut scratch = Vec::with_capacity(p);
        let mut x = start;
        let mut positions = vec![self.grid.point(x / n, x % n)];
        for w in &self.to_target {
            let row = &self.step[x * p..(x + 1) * p];
            x = sample_index(&mut rng, row.iter().zip(w).map(|(a, b)| a * b), &mut scratch).unwrap_or(x);
            positions.push(self.grid.point(x / n, x % n));
        }
        positions.push(self.grid.point(self.target / n, self.target % n));
        Path { seeds: [self.noise_seed, path_seed], kind: PathKind::Bridge, delta: self.delta, positions }
    }
}

/// Fit of `t log p_t(x, y) = intercept - kappa d(x, y)^2`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LdpFit {
    /// Fitted exponent constant.
    pub kappa: f64,
    /// Standard error of `kappa`.
    pub kappa_stderr: f64,
    /// Intercept.
    pub intercept: f64,
    /// Number of pairs used.
    pub pairs: usize,
}

/// Regress `t log p_t(x, y)` on `d(x, y)^2` over sources `ys` and all grid
/// targets with `d^2 / (4t) <= max_arg` and positive kernel.
pub fn ldp_probe(hk: &HeatKernel, t: f64, ys: &[usize], max_arg: f64) -> Result<LdpFit> {
    let g = *hk.grid();
    let n = g.n();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &s in ys {
        let row = hk.row(t, s)?;
        let sp = g.point(s / n, s % n);
        for (i, &p) in row.iter().enumerate() {
            let d = g.distance(g.point(i / n, i % n), sp);
            if d * d / (4.0 * t) <= max_arg && p > 0.0 {
                x.push(d * d);
                y.push(t * p.ln());
            }
        }
    }
    if x.len() < 3 {
        return invalid("too few kernel pairs for the exponent fit");
    }
    let fit = stats::linear_fit(&x, &y);
    Ok(LdpFit { kappa: -fit.slope, kappa_stderr: fit.slope_stderr, intercept: fit.intercept, pairs: x.len() })
}

/// Potential `V = (xi_r + c_{1,r}) / 2` whose semigroup gives the statistic.
pub fn singularity_potential(noise: &NoiseRealization, r: f64) -> Result<SpectralField> {
    let grid = *noise.grid();
    let xi = noise.heat_regularize(r)?;
    let c = renormalization_constant(&SpectralField::constant(grid, 1.0), xi.r)?;
    Ok((&xi.field + &c).scale(0.5))
}

/// Semigroup route `(e^{-T(-Delta + V)} 1)(x)` with `V` from [`singularity_potential`].
pub fn singularity_semigroup(noise: &NoiseRealization, r: f64, t_final: f64, x: [f64; 2]) -> Result<f64> {
    let v = singularity_potential(noise, r)?;
    let op = OperatorMatrix::from_potential(&v, OperatorMeta { r, z0: 0.0, seed: noise.seed, h: 1.0 });
    let spec = op.eigendecompose(true)?;
    let one = SpectralField::constant(*noise.grid(), 1.0);
    let u = spec.apply_function(&one, |l| (-t_final * l).exp())?;
    Ok(u.eval(x))
}

/// Periodic bilinear interpolation of a field tabulated on an `m x m` lattice.
#[derive(Debug, Clone)]
pub struct LatticeInterpolator {
    l: f64,
    m: usize,
    values: Vec<f64>,
}

impl LatticeInterpolator {
    /// Tabulate `f` on `m x m` points.
    pub fn new(f: &SpectralField, m: usize) -> Self {
        Self { l: f.grid().l(), m, values: f.values_on(m) }
    }

    /// Interpolated value at `x`.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let m = self.m;
        let s = m as f64 / self.l;
        let (fx, fy) = ((x[0] * s).rem_euclid(m as f64), (x[1] * s).rem_euclid(m as f64));
        let (i, j) = (fx.floor() as usize % m, fy.floor() as usize % m);
        let (a, b) = (fx - fx.floor(), fy - fy.floor());
        let (i1, j1) = ((i + 1) % m, (j + 1) % m);
        let v = |p: usize, q: usize| self.values[p * m + q];
        (1.0 - a) * ((1.0 - b) * v(i, j) + b * v(i, j1)) + a * ((1.0 - b) * v(i1, j) + b * v(i1, j1))
    }
}

/// Monte Carlo route: `E_W[exp(-int_0^T V_r(w_t) dt)]` for each potential in
/// `potentials`, over the same `paths` Brownian paths (generator `Delta`,
/// step `delta`, trapezoidal time integral).  Returns `(mean, stderr)` per potential.
pub fn singularity_mc(
    potentials: &[LatticeInterpolator],
    x: [f64; 2],
    t_final: f64,
    delta: f64,
    paths: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let steps = (t_final / delta).round() as usize;
    let dt = t_final / steps as f64;
    let normal = Normal::new(0.0, (2.0 * dt).sqrt()).expect("positive step");
    let k = potentials.len();
    let mut samples = vec![Vec::with_capacity(paths); k];
    for path in 0..paths {
        let mut rng = stream_rng(seed, path as u64);
        let mut w = x;
        let mut integral = vec![0.0; k];
        let mut prev: Vec<f64> = potentials.iter().map(|p| p.eval(w)).collect();
        for _ in 0..steps {
            w[0] += normal.sample(&mut rng);
            w[1] += normal.sample(&mut rng);
            for (q, p) in potentials.iter().enumerate() {
                let v = p.eval(w);
                integral[q] += 0.5 * (prev[q] + v) * dt;
                prev[q] = v;
            }
        }
        for q in 0..k {
            samples[q].push((-integral[q]).exp());
        }
    }
    samples.iter().map(|s| (stats::mean(s), stats::std_error(s))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_white_noise;
    use crate::paracontrolled::EnhancedNoise;
    use std::f64::consts::PI;

    fn flat_hk(n: usize) -> HeatKernel {
        let g = TorusGrid::new(2.0 * PI, n).unwrap();
        let op = OperatorMatrix::from_potential(&SpectralField::zeros(g), OperatorMeta::default());
        HeatKernel::new(&op.eigendecompose(true).unwrap()).unwrap()
    }

    fn noisy_hk() -> HeatKernel {
        let g = TorusGrid::new(2.0 * PI, 16).unwrap();
        let e = EnhancedNoise::new(&sample_white_noise(g, 3), 0.05, 1.0).unwrap();
        HeatKernel::new(&OperatorMatrix::assemble(&e).eigendecompose(true).unwrap()).unwrap()
    }

    #[test]
    fn flat_polymer_step_variance() {
        let hk = flat_hk(24);
        let chain = KernelChain::polymer(&hk, 0, 0.3, 1).unwrap();
        let g = *hk.grid();
        let msd: Vec<f64> = (0..3000).map(|s| quadratic_variation(&g, &chain.sample(0, s))).collect();
        let m = stats::mean(&msd);
        // 4 delta plus the grid quantization variance 2 h^2 / 12.
        let target = 4.0 * 0.3 + g.spacing().powi(2) / 6.0;
        assert!((m / target - 1.0).abs() < 0.05, "{m} vs {target}");
        assert_eq!(chain.sample(0, 5), chain.sample(0, 5));
    }

    #[test]
    fn diffusion_is_conservative_and_killing_shortens() {
        let hk = noisy_hk();
        let d = KernelChain::diffusion(&hk, 3, 0.2, 20, 0.0).unwrap();
        for x in [0, 17, 200] {
            assert!((d.diffusion_mass(&hk, x) - 1.0).abs() < 1e-6);
        }
        assert_eq!(d.sample(0, 1).positions.len(), 21);
        let k = KernelChain::diffusion(&hk, 3, 0.2, 20, 5.0).unwrap();
        let mean_len: f64 = (0..200).map(|s| k.sample(0, s).positions.len() as f64).sum::<f64>() / 200.0;
        assert!(mean_len < 5.0, "{mean_len}");
    }

    #[test]
    fn bridge_ends_at_target_and_round_trips_ndjson() {
        let hk = noisy_hk();
        let b = BridgeSampler::new(&hk, 3, 40, 1.0, 5).unwrap();
        let p = b.sample(0, 9);
        let g = hk.grid();
        assert_eq!(*p.positions.last().unwrap(), g.point(40 / 16, 40 % 16));
        assert_eq!(p.positions.len(), 6);
        let back = Path::from_ndjson(&p.to_ndjson()).unwrap();
        assert_eq!(back, p);
        assert!(p.to_ndjson().contains("\"kind\":\"bridge\""));
    }

    #[test]
    fn flat_ldp_constant_is_one_quarter() {
        let hk = flat_hk(32);
        let fit = ldp_probe(&hk, 0.1, &[0, 100], 12.5).unwrap();
        assert!((fit.kappa - 0.25).abs() < 0.01, "{}", fit.kappa);
    }

    #[test]
    fn zero_noise_statistic_routes() {
        let g = TorusGrid::new(1.0, 8).unwrap();
        let zero = NoiseRealization { seed: 0, r: 0.0, field: SpectralField::zeros(g), h: SpectralField::constant(g, 1.0) };
        let r: f64 = 0.05;
        let c = r.ln().abs() / (4.0 * PI);
        let s = singularity_semigroup(&zero, r, 1.0, [0.3, 0.3]).unwrap();
        assert!((s - (-0.5 * c).exp()).abs() < 1e-12);
        let v = LatticeInterpolator::new(&singularity_potential(&zero, r).unwrap(), 16);
        let mc = singularity_mc(&[v], [0.3, 0.3], 1.0, 0.01, 20, 1);
        assert!((mc[0].0 - (-0.5 * c).exp()).abs() < 1e-12);
    }
}
