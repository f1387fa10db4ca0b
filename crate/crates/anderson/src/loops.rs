//! Loop soup of the shifted operator `H + c`: exact second moments and
//! Laplace transforms of loop occupation functionals, a Poissonian loop-soup
//! sampler with compensated occupation field, size-biased single-loop Monte
//! Carlo with extrapolation in the lifetime cutoff, and the comparison with
//! the Wick square of the Gaussian free field.

use crate::error::{invalid, Result};
use crate::grid::TorusGrid;
use crate::linalg;
use crate::noise::stream_rng;
use crate::paths::{Path, PathKind};
use crate::spectral::SpectralDecomposition;
use crate::stats;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};
use serde::Serialize;

/// Number of time points on each discretized loop.
pub const LOOP_POINTS: usize = 16;

/// One discretized loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Loop {
    /// Lifetime `zeta`.
    pub lifetime: f64,
    /// Grid indices at times `k zeta / K`, `k = 0..K-1` (the loop closes on the first).
    pub points: Vec<usize>,
}

/// A sampled Poissonian loop soup restricted to lifetimes above `eps`.
#[derive(Debug, Clone, Serialize)]
pub struct LoopEnsemble {
    /// Intensity.
    pub gamma: f64,
    /// Lifetime cutoff.
    pub eps: f64,
    /// Loops.
    pub loops: Vec<Loop>,
}

/// Exact spectral data of the loop measure of `H + c` on the Galerkin space.
#[derive(Debug, Clone)]
pub struct LoopModel {
    grid: TorusGrid,
    noise_seed: u64,
    /// `a_n = lambda_n + c`.
    a: Vec<f64>,
    /// Row `n` holds `u_n` on the grid.
    u: Vec<f64>,
    /// Time points per loop.
    points: usize,
}

/// `int_eps^inf dt int_0^t e^{-u a - (t-u) b} du`.
fn pair_integral(a: f64, b: f64, eps: f64) -> f64 {
    if (a - b).abs() <= 1e-9 * a.max(b) {
        let m = 0.5 * (a + b);
        (-eps * m).exp() * (eps / m + 1.0 / (m * m))
    } else {
        ((-eps * b).exp() / b - (-eps * a).exp() / a) / (a - b)
    }
}

/// Lagrange weights at zero for nodes `xs`.
pub fn extrapolation_weights(xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            xs.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &xj)| xj / (xj - xs[i]))
                .product()
        })
        .collect()
}

impl LoopModel {
    /// Loop measure of `H + c`; needs eigenvectors and `lambda_0 + c > 0`.
    pub fn new(spec: &SpectralDecomposition, c: f64) -> Result<Self> {
        if !spec.has_vectors() {
            return invalid("the loop measure needs eigenvectors");
        }
        let a: Vec<f64> = spec.values().iter().map(|l| l + c).collect();
        if !(a[0] > 0.0) {
            return invalid(format!("lambda_0 + c = {} must be positive", a[0]));
        }
        Ok(Self {
            grid: *spec.grid(),
            noise_seed: spec.meta.seed,
            a,
            u: spec.grid_value_matrix(spec.len()),
            points: LOOP_POINTS,
        })
    }

    /// Use `k >= 1` time points per loop.
    pub fn with_points(mut self, k: usize) -> Self {
        self.points = k.max(1);
        self
    }

    /// Grid.
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Shifted eigenvalues `a_n`.
    pub fn shifted_values(&self) -> &[f64] {
        &self.a
    }

    /// Matrix `F_mn = sum_x u_m(x) f(x) u_n(x) h^2` of multiplication by grid values `f`.
    pub fn multiplication_matrix(&self, f: &[f64]) -> Result<Vec<f64>> {
        let p = self.grid.len();
        if f.len() != p {
            return invalid(format!("expected {p} grid values, got {}", f.len()));
        }
        let m = self.a.len();
        let h2 = self.grid.spacing().powi(2);
        let mut weighted = vec![0.0; p * m];
        for n in 0..m {
            for x in 0..p {
                weighted[x * m + n] = self.u[n * p + x] * f[x] * h2;
            }
        }
        Ok(linalg::matmul(&self.u, &weighted, m, p, m))
    }

    /// `M(zeta > eps) = sum_n E_1(eps a_n)`.
    pub fn loop_mass(&self, eps: f64) -> f64 {
        self.a.iter().map(|a| stats::exp_integral_e1(eps * a)).sum()
    }

    /// `int_eps^inf t tr e^{-t(H+c)} dt`, the normalization of the size-biased lifetime law.
    pub fn size_biased_mass(&self, eps: f64) -> f64 {
        self.a.iter().map(|a| (-eps * a).exp() * (eps / a + 1.0 / (a * a))).sum()
    }

    /// Compensator `E_M[1_{zeta > eps} l(f)] = sum_n F_nn e^{-eps a_n} / a_n`.
    pub fn first_moment(&self, f_matrix: &[f64], eps: f64) -> f64 {
        let m = self.a.len();
        self.a.iter().enumerate().map(|(n, a)| f_matrix[n * m + n] * (-eps * a).exp() / a).sum()
    }

    /// `E_M[1_{zeta > eps} l(f)^2] = sum_mn F_mn^2 J_mn(eps)`; at `eps = 0` this is `int int G^2 f f`.
    pub fn second_moment(&self, f_matrix: &[f64], eps: f64) -> f64 {
        let m = self.a.len();
        let mut s = stats::CompensatedSum::new();
        for i in 0..m {
            for j in 0..m {
                s.add(f_matrix[i * m + j].powi(2) * pair_integral(self.a[i], self.a[j], eps));
            }
        }
        s.value()
    }

    /// Eigenvalues of `G^{1/2} F G^{1/2}`.
    pub fn green_weighted_spectrum(&self, f_matrix: &[f64]) -> Result<Vec<f64>> {
        let m = self.a.len();
        let mut k = f_matrix.to_vec();
        for i in 0..m {
            for j in 0..m {
                k[i * m + j] /= (self.a[i] * self.a[j]).sqrt();
            }
        }
        Ok(linalg::sym_eig(k, m, false)?.0)
    }

    /// `log E[e^{-s O_gamma(f)}] = gamma sum_i (s nu_i - log(1 + s nu_i))` over the
    /// spectrum `nu` of `G^{1/2} F G^{1/2}` (the cutoff-free compensated soup).
    pub fn log_laplace(nu: &[f64], gamma: f64, s: f64) -> Result<f64> {
        let mut acc = 0.0;
        for &v in nu {
            if 1.0 + s * v <= 0.0 {
                return invalid(format!("Laplace transform diverges at s = {s}"));
            }
            acc += s * v - (s * v).ln_1p();
        }
        Ok(gamma * acc)
    }

    fn loop_rng(&self, seed: u64, stream: u64) -> ChaCha8Rng {
        stream_rng(seed ^ 0x100b_5000_0000_0000, self.noise_seed.wrapping_mul(0x9e37_79b9).wrapping_add(stream))
    }

    fn pick_mode(&self, t: f64, rng: &mut ChaCha8Rng) -> usize {
        let w: Vec<f64> = self.a.iter().map(|a| (-t * (a - self.a[0])).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (n, v) in w.iter().enumerate() {
            u -= v;
            if u <= 0.0 {
                return n;
            }
        }
        w.len() - 1
    }

    /// Root `x` drawn with density proportional to `p_t(x, x)`, then a
    /// discretized bridge body from `x` back to `x`.
    pub fn sample_body(&self, t: f64, rng: &mut ChaCha8Rng) -> Loop {
        let p = self.grid.len();
        let m = self.a.len();
        let k = self.points;
        let n = self.pick_mode(t, rng);
        let root = {
            let w = &self.u[n * p..(n + 1) * p];
            let total: f64 = w.iter().map(|v| v * v).sum();
            let mut u = rng.random::<f64>() * total;
            let mut idx = p - 1;
            for (i, v) in w.iter().enumerate() {
                u -= v * v;
                if u <= 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        };
        if k == 1 {
            return Loop { lifetime: t, points: vec![root] };
        }
        let delta = t / k as f64;
        let shifted: Vec<f64> = self.a.iter().map(|a| a - self.a[0]).collect();
        // Rows p_{j delta}(., root) for j = 1..K-1 in one product.
        let mut coef = vec![0.0; (k - 1) * m];
        for j in 1..k {
            for q in 0..m {
                coef[(j - 1) * m + q] = (-(j as f64) * delta * shifted[q]).exp() * self.u[q * p + root];
            }
        }
        let back = linalg::matmul(&coef, &self.u, k - 1, m, p);
        let step_w: Vec<f64> = shifted.iter().map(|a| (-delta * a).exp()).collect();
        let mut points = Vec::with_capacity(k);
        let mut x = root;
        points.push(x);
        let mut cdf = vec![0.0; p];
        for i in 0..k - 1 {
            let w: Vec<f64> = (0..m).map(|q| step_w[q] * self.u[q * p + x]).collect();
            let fwd = linalg::matmul(&w, &self.u, 1, m, p);
            let target = &back[(k - 2 - i) * p..(k - 1 - i) * p];
            let mut acc = 0.0;
            for z in 0..p {
                acc += (fwd[z] * target[z]).max(0.0);
                cdf[z] = acc;
            }
            if acc > 0.0 {
                let u = rng.random::<f64>() * acc;
                x = cdf.partition_point(|&c| c <= u).min(p - 1);
            }
            points.push(x);
        }
        Loop { lifetime: t, points }
    }

    /// Loop occupation `l(f) = int_0^zeta f(w_s) ds` by the periodic trapezoid rule.
    pub fn occupation(lp: &Loop, f: &[f64]) -> f64 {
        lp.lifetime / lp.points.len() as f64 * lp.points.iter().map(|&x| f[x]).sum::<f64>()
    }

    /// A loop as a closed path record (positions at `k zeta / K`, `k = 0..=K`).
    pub fn loop_path(&self, lp: &Loop, soup_seed: u64) -> Path {
        let n = self.grid.n();
        let mut positions: Vec<[f64; 2]> = lp.points.iter().map(|&x| self.grid.point(x / n, x % n)).collect();
        positions.push(positions[0]);
        Path { seeds: [self.noise_seed, soup_seed], kind: PathKind::Loop, delta: lp.lifetime / lp.points.len() as f64, positions }
    }

    /// Poisson loop soup with intensity `gamma` on lifetimes `> eps`; lifetimes
    /// drawn exactly from the density proportional to `(1/t) tr e^{-t(H+c)}`.
    pub fn sample_soup(&self, gamma: f64, eps: f64, seed: u64) -> Result<LoopEnsemble> {
        if !(eps > 0.0) || !(gamma > 0.0) {
            return invalid("the loop soup needs eps > 0 and gamma > 0");
        }
        let mut rng = self.loop_rng(seed, 0);
        let masses: Vec<f64> = self.a.iter().map(|a| stats::exp_integral_e1(eps * a)).collect();
        let total: f64 = masses.iter().sum();
        let count = Poisson::new(gamma * total).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?.sample(&mut rng) as usize;
        let mut loops = Vec::with_capacity(count);
        for _ in 0..count {
            let mut u = rng.random::<f64>() * total;
            let mut n = masses.len() - 1;
            for (i, w) in masses.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    n = i;
                    break;
                }
            }
            // Density e^{-t a}/t on (eps, inf): propose eps + Exp(a), accept with eps/t.
            let exp = Exp::new(self.a[n]).expect("positive rate");
            let t = loop {
                let t = eps + exp.sample(&mut rng);
                if rng.random::<f64>() * t <= eps {
                    break t;
                }
            };
            loops.push(self.sample_body(t, &mut rng));
        }
        Ok(LoopEnsemble { gamma, eps, loops })
    }

    /// Compensated occupation field `O^eps_gamma(f)` of a soup.
    pub fn compensated_occupation(&self, soup: &LoopEnsemble, f: &[f64]) -> Result<f64> {
        let fm = self.multiplication_matrix(f)?;
        let raw: f64 = soup.loops.iter().map(|lp| Self::occupation(lp, f)).sum();
        Ok(raw - soup.gamma * self.first_moment(&fm, soup.eps))
    }

    /// Loops with lifetimes from the size-biased law `t tr e^{-t(H+c)} dt` on `t > eps`.
    pub fn sample_size_biased(&self, eps: f64, count: usize, seed: u64) -> Vec<Loop> {
        let weights: Vec<(f64, f64)> = self
            .a
            .iter()
            .map(|a| {
                let e = (-eps * a).exp();
                (e * eps / a, e / (a * a))
            })
            .collect();
        let total: f64 = weights.iter().map(|(x, y)| x + y).sum();
        (0..count)
            .map(|j| {
                let mut rng = self.loop_rng(seed, j as u64 + 1);
                let mut u = rng.random::<f64>() * total;
                let mut choice = (self.a.len() - 1, false);
                for (n, (w1, w2)) in weights.iter().enumerate() {
                    if u <= *w1 {
                        choice = (n, false);
                        break;
                    }
                    u -= w1;
                    if u <= *w2 {
                        choice = (n, true);
                        break;
                    }
                    u -= w2;
                }
                let a = self.a[choice.0];
                let t = if choice.1 {
                    eps + Gamma::new(2.0, 1.0 / a).expect("valid gamma").sample(&mut rng)
                } else {
                    eps + Exp::new(a).expect("positive rate").sample(&mut rng)
                };
                self.sample_body(t, &mut rng)
            })
            .collect()
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    /// Value.
    pub value: f64,
    /// Standard error.
    pub stderr: f64,
}

/// `E_M[1_{zeta > eps_i} g(loop)]` for each cutoff `eps_i >= eps_0` from loops
/// drawn at the smallest cutoff, then the polynomial extrapolation to `eps = 0`
/// (common loops for all cutoffs).  Returns `(per-cutoff estimates, extrapolated)`.
pub fn extrapolated_functional(
    model: &LoopModel,
    loops: &[Loop],
    eps: &[f64],
    g: impl Fn(&Loop) -> f64,
) -> Result<(Vec<Estimate>, Estimate)> {
    if eps.is_empty() || eps.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("cutoffs must be increasing");
    }
    if loops.len() < 2 {
        return invalid("need at least two loops");
    }
    let z2 = model.size_biased_mass(eps[0]);
    let w = extrapolation_weights(eps);
    let mut per: Vec<Vec<f64>> = vec![Vec::with_capacity(loops.len()); eps.len()];
    let mut combined = Vec::with_capacity(loops.len());
    for lp in loops {
        let v = z2 * g(lp) / lp.lifetime.powi(2);
        let mut c = 0.0;
        for (i, &e) in eps.iter().enumerate() {
            let y = if lp.lifetime > e { v } else { 0.0 };
            per[i].push(y);
            c += w[i] * y;
        }
        combined.push(c);
    }
    let est = |xs: &[f64]| Estimate { value: stats::mean(xs), stderr: stats::std_error(xs) };
    Ok((per.iter().map(|p| est(p)).collect(), est(&combined)))
}

/// Loop-side and GFF-side Laplace transforms and the fitted normalization.
#[derive(Debug, Clone, Serialize)]
pub struct IsomorphismReport {
    /// Laplace variables.
    pub s: Vec<f64>,
    /// Loop-soup Laplace transform at intensity 1/2 (extrapolated), with errors.
    pub loop_side: Vec<Estimate>,
    /// GFF Monte Carlo `E[e^{-s beta :phi^2:(f)}]` at the fitted `beta`.
    pub gff_side: Vec<Estimate>,
    /// Fitted normalization.
    pub beta: f64,
    /// `max_s |loop - gff| / sqrt(se_loop^2 + se_gff^2)` at the fitted `beta`.
    pub residual: f64,
}

/// Fit `beta` so that `E[e^{-s beta W}]` over the Wick-square samples `wick`
/// matches the loop-side values, by golden-section search on `[lo, hi]`.
pub fn calibrate_beta(s: &[f64], loop_side: &[Estimate], wick: &[f64], lo: f64, hi: f64) -> IsomorphismReport {
    let gff = |beta: f64| -> Vec<Estimate> {
        s.iter()
            .map(|&sv| {
                let xs: Vec<f64> = wick.iter().map(|w| (-sv * beta * w).exp()).collect();
                Estimate { value: stats::mean(&xs), stderr: stats::std_error(&xs) }
            })
            .collect()
    };
    let discrepancy = |beta: f64| -> (f64, f64) {
        let g = gff(beta);
        let mut chi2 = 0.0;
        let mut worst = 0.0f64;
        for (l, q) in loop_side.iter().zip(&g) {
            let z = (l.value - q.value) / (l.stderr.powi(2) + q.stderr.powi(2)).sqrt();
            chi2 += z * z;
            worst = worst.max(z.abs());
        }
        (chi2, worst)
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if discrepancy(c).0 < discrepancy(d).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let beta = 0.5 * (a + b);
    IsomorphismReport { s: s.to_vec(), loop_side: loop_side.to_vec(), gff_side: gff(beta), beta, residual: discrepancy(beta).1 }
}

/// Loop-side Laplace transform `exp(gamma E_M[e^{-s l} - 1 + s l])` per `s`,
/// extrapolated in the cutoff, with delta-method errors.
pub fn loop_laplace(model: &LoopModel, loops: &[Loop], eps: &[f64], f: &[f64], gamma: f64, s: &[f64]) -> Result<Vec<Estimate>> {
    s.iter()
        .map(|&sv| {
            let (_, e) = extrapolated_functional(model, loops, eps, |lp| {
                let l = LoopModel::occupation(lp, f);
                (-sv * l).exp_m1() + sv * l
            })?;
            let v = (gamma * e.value).exp();
            Ok(Estimate { value: v, stderr: v * gamma * e.stderr })
        })
        .collect()
}
