//! Enhanced noise, the Wick-renormalized resonant term, Γ-maps and the
//! paracontrolled resolvent.
//!
//! With `L0 = -Delta + z0`, `X = L0^{-1}(h xi_r)` and `K w = Pbar_w X =
//! L0^{-1} P_w(h xi_r)`, the Γ-map is `Gamma^{-1} = Id + K`.  Writing
//! `M^- u = P_u(h xi)` and `M^+ u = P_{h xi} u + Pi(u, h xi)`, the operator
//! `H = -Delta + h xi_r + c_{h,r}` satisfies
//!
//! ```text
//! (H - z)^{-1} = Gamma L0^{-1} B^{-1},
//! B = Id + (M^+ - R Gamma - (z + z0) Gamma) L0^{-1},
//! R(w) = P_{h xi}(K w) + w (Pi(X, h xi) - c_{h,r}) + Cbar(w, X, h xi),
//! ```
//!
//! where `R` is the renormalized form of `M^+ K`.  Only paraproducts, the
//! renormalized resonant field and the modified corrector enter; the
//! potential is never multiplied directly.  All identities used are exact
//! on the Galerkin space, so the construction reproduces the direct
//! resolvent of the assembled matrix up to solver tolerance.

use crate::basis::RealBasis;
use crate::error::{invalid, Error, Result};
use crate::field::SpectralField;
use crate::grid::TorusGrid;
use crate::linalg::{self, SolveReport};
use crate::lp::{BlockValues, LpBlocks};
use crate::noise::{sample_white_noise, stream_rng, NoiseRealization};
use crate::stats;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::f64::consts::PI;

/// Diverging part `c_{h,r} = |log r| h^2 / (4 pi)` of the resonant term.
pub fn renormalization_constant(h: &SpectralField, r: f64) -> Result<SpectralField> {
    check_r(r)?;
    Ok(h.product(h)?.scale(r.ln().abs() / (4.0 * PI)))
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return invalid(format!("regularization r must lie in (0, 1), got {r}"));
    }
    Ok(())
}

/// Noise together with its renormalized resonant term at fixed `(r, z0, h)`.
#[derive(Debug, Clone)]
pub struct EnhancedNoise {
    /// Coupling field.
    pub h: SpectralField,
    /// Shift of the reference operator `-Delta + z0`.
    pub z0: f64,
    /// Regularization time.
    pub r: f64,
    /// Regularized noise `xi_r`.
    pub xi: NoiseRealization,
    /// `h xi_r`.
    pub hxi: SpectralField,
    /// `X = (-Delta + z0)^{-1}(h xi_r)`.
    pub x: SpectralField,
    /// Raw resonant product `Pi(X, h xi_r)`.
    pub resonant: SpectralField,
    /// `c_{h,r}`.
    pub c_hr: SpectralField,
    /// `Pi(X, h xi_r) - c_{h,r}`.
    pub renorm_resonant: SpectralField,
}

impl EnhancedNoise {
    /// Regularize raw noise by `r` and build the enhancement with the noise's coupling field.
    pub fn new(noise: &NoiseRealization, r: f64, z0: f64) -> Result<Self> {
        check_r(r)?;
        if !(z0 > 0.0) {
            return invalid(format!("z0 must be positive, got {z0}"));
        }
        let xi = noise.heat_regularize(r)?;
        let h = noise.h.clone();
        let hxi = h.product(&xi.field)?;
        let x = hxi.invert_shifted_laplacian(z0)?;
        let lp = LpBlocks::new(*noise.grid());
        let resonant = lp.resonant(&x, &hxi)?;
        let c_hr = renormalization_constant(&h, xi.r)?;
        let renorm_resonant = &resonant - &c_hr;
        Ok(Self { h, z0, r: xi.r, xi, hxi, x, resonant, c_hr, renorm_resonant })
    }

    /// Grid of the enhancement.
    pub fn grid(&self) -> &TorusGrid {
        self.hxi.grid()
    }

    /// The potential `h xi_r + c_{h,r}` of the regularized operator.
    pub fn potential(&self) -> SpectralField {
        &self.hxi + &self.c_hr
    }
}

/// `Pi(X, h xi_r) - c_{h,r}` and the raw `Pi(X, h xi_r)` for a constant coupling `h`.
pub fn renormalized_resonant(
    grid: TorusGrid,
    h: f64,
    z0: f64,
    r: f64,
    seed: u64,
) -> Result<(SpectralField, SpectralField)> {
    let noise = sample_white_noise(grid, seed).with_coupling(SpectralField::constant(grid, h))?;
    let e = EnhancedNoise::new(&noise, r, z0)?;
    Ok((e.renorm_resonant, e.resonant))
}

/// Exact expectation of the resonant product at any point, constant coupling `h`.
///
/// Only the pairings `E[xi_k xi_{-k}] = 1/L^2` survive, and modes `k` and
/// `-k` always share a block, so `E[Pi(X, h xi_r)] = h^2 L^{-2} sum_k
/// e^{-2 r |p_k|^2} / (|p_k|^2 + z0)` over the Galerkin modes.
pub fn expected_resonant_mean(grid: &TorusGrid, h: f64, z0: f64, r: f64) -> f64 {
    let mut s = stats::CompensatedSum::new();
    for idx in 0..grid.len() {
        if grid.is_active_index(idx) {
            let p2 = grid.laplacian_symbol(idx);
            s.add((-2.0 * r * p2).exp() / (p2 + z0));
        }
    }
    h * h * s.value() / grid.volume()
}

/// Continuum (`N -> infinity`) value of the same expectation:
/// `h^2 e^{2 r z0} E1(2 r z0) / (4 pi)`.
pub fn continuum_resonant_mean(h: f64, z0: f64, r: f64) -> f64 {
    let a = 2.0 * r * z0;
    h * h * a.exp() * stats::exp_integral_e1(a) / (4.0 * PI)
}

/// The linear map `K w = Pbar_w X` together with `Gamma^{-1} = Id + K` and its inverse.
#[derive(Debug, Clone)]
pub struct GammaMap {
    lp: LpBlocks,
    hxi: SpectralField,
    hxi_blocks: BlockValues,
    z0: f64,
}

impl GammaMap {
    /// Γ-map for the forcing `h xi` and shift `z0`.
    pub fn new(hxi: &SpectralField, z0: f64) -> Result<Self> {
        if !(z0 > 0.0) {
            return invalid(format!("z0 must be positive, got {z0}"));
        }
        let lp = LpBlocks::new(*hxi.grid());
        let hxi_blocks = lp.block_values(hxi);
        Ok(Self { lp, hxi: hxi.clone(), hxi_blocks, z0 })
    }

    /// Shift `z0`.
    pub fn z0(&self) -> f64 {
        self.z0
    }

    /// Littlewood–Paley blocks of the grid.
    pub fn blocks(&self) -> &LpBlocks {
        &self.lp
    }

    /// `K w = (-Delta + z0)^{-1} P_w(h xi)`.
    pub fn k(&self, w: &SpectralField) -> Result<SpectralField> {
        w.check_grid(&self.hxi)?;
        let p = self.lp.paraproduct_values(&self.lp.block_values(w), &self.hxi_blocks);
        p.invert_shifted_laplacian(self.z0)
    }

    /// Adjoint `K^* g = sum_i P_i((sum_{j >= i+2} P_j(h xi)) (-Delta + z0)^{-1} g)`.
    pub fn k_adjoint(&self, g: &SpectralField) -> Result<SpectralField> {
        g.check_grid(&self.hxi)?;
        let lg = g.invert_shifted_laplacian(self.z0)?.padded_values();
        let blocks = self.hxi_blocks.blocks();
        let nb = blocks.len();
        let m = lg.len();
        let mut out = SpectralField::zeros(*g.grid());
        // high[pos] = sum of h xi blocks at positions >= pos.
        let mut high = vec![0.0; m];
        for pos in (0..nb).rev() {
            if pos + 2 < nb {
                high.iter_mut().zip(&blocks[pos + 2]).for_each(|(a, b)| *a += b);
                let prod: Vec<f64> = high.iter().zip(&lg).map(|(a, b)| a * b).collect();
                let f = SpectralField::from_padded(*g.grid(), &prod);
                out = &out + &self.lp.project(&f, pos as i32 - 1);
            }
        }
        Ok(out)
    }

    /// `Gamma^{-1} f = f + Pbar_f X`.
    pub fn gamma_inverse(&self, f: &SpectralField) -> Result<SpectralField> {
        Ok(f + &self.k(f)?)
    }

    /// `Gamma f = sum_k (-K)^k f`, stopped when the increment falls below `1e-12 ||f||`.
    pub fn gamma(&self, f: &SpectralField) -> Result<SpectralField> {
        let fnorm = f.l2_norm();
        if fnorm == 0.0 {
            return Ok(f.clone());
        }
        let mut term = f.clone();
        let mut acc = f.clone();
        let mut prev = fnorm;
        for it in 0..400 {
            term = -&self.k(&term)?;
            let tn = term.l2_norm();
            acc = &acc + &term;
            if tn < 1e-12 * fnorm {
                return Ok(acc);
            }
            if it > 5 && tn > prev {
                return Err(Error::NotContractive { norm: tn / prev, z0: self.z0 });
            }
            prev = tn;
        }
        Err(Error::NotContractive { norm: prev / fnorm, z0: self.z0 })
    }

    /// Operator-norm estimate of `K` by power iteration on `K^* K`.
    pub fn operator_norm(&self, iterations: usize, seed: u64) -> Result<f64> {
        let grid = *self.hxi.grid();
        let basis = RealBasis::new(grid);
        let mut rng = stream_rng(seed, 0x5eed_0b5e);
        let x: Vec<f64> = (0..basis.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut v = basis.field(&x);
        v = v.scale(1.0 / v.l2_norm());
        let mut est = 0.0;
        for _ in 0..iterations {
            let kv = self.k(&v)?;
            est = kv.l2_norm();
            let w = self.k_adjoint(&kv)?;
            let wn = w.l2_norm();
            if wn == 0.0 {
                return Ok(0.0);
            }
            v = w.scale(1.0 / wn);
        }
        Ok(est)
    }
}

/// Choose `z0`: start at `start` and double until the power-iteration norm
/// estimate of `K` (20 iterations) is below `1/2`.  Returns `(z0, norm)`.
pub fn select_z0(hxi: &SpectralField, start: f64) -> Result<(f64, f64)> {
    if !(start > 0.0) {
        return invalid(format!("z0 must be positive, got {start}"));
    }
    let mut z0 = start;
    for _ in 0..60 {
        let norm = GammaMap::new(hxi, z0)?.operator_norm(20, 1)?;
        if norm < 0.5 {
            return Ok((z0, norm));
        }
        z0 *= 2.0;
    }
    Err(Error::NotContractive { norm: f64::NAN, z0 })
}

/// The resolvent of `-Delta + h xi_r + c_{h,r}` built from the fixed-point construction.
#[derive(Debug, Clone)]
pub struct ParacontrolledResolvent {
    enhanced: EnhancedNoise,
    gamma: GammaMap,
    basis: RealBasis,
    k_norm: f64,
}

impl ParacontrolledResolvent {
    /// Build from raw noise; `z0 = None` applies the doubling policy starting at 1.
    pub fn new(noise: &NoiseRealization, r: f64, z0: Option<f64>) -> Result<Self> {
        let probe = noise.heat_regularize(r)?;
        let hxi = noise.h.product(&probe.field)?;
        let (z0, k_norm) = match z0 {
            Some(z) => {
                let n = GammaMap::new(&hxi, z)?.operator_norm(20, 1)?;
                if n >= 1.0 {
                    return Err(Error::NotContractive { norm: n, z0: z });
                }
                (z, n)
            }
            None => select_z0(&hxi, 1.0)?,
        };
        let enhanced = EnhancedNoise::new(noise, r, z0)?;
        let gamma = GammaMap::new(&enhanced.hxi, z0)?;
        let basis = RealBasis::new(*noise.grid());
        Ok(Self { enhanced, gamma, basis, k_norm })
    }

    /// Underlying enhanced noise.
    pub fn enhanced(&self) -> &EnhancedNoise {
        &self.enhanced
    }

    /// Certified norm estimate of `K`.
    pub fn k_norm(&self) -> f64 {
        self.k_norm
    }

    /// Renormalized `R(w) = P_{h xi}(K w) + w (Pi(X, h xi) - c) + Cbar(w, X, h xi)`.
    fn renormalized_term(&self, w: &SpectralField) -> Result<SpectralField> {
        let lp = self.gamma.blocks();
        let e = &self.enhanced;
        let kw = self.gamma.k(w)?;
        let kw_blocks = lp.block_values(&kw);
        let para = lp.paraproduct_values(&self.gamma.hxi_blocks, &kw_blocks);
        // Cbar(w, X, h xi) = Pi(Pbar_w X, h xi) - w Pi(X, h xi).
        let cbar = &lp.resonant_values(&kw_blocks, &self.gamma.hxi_blocks) - &w.product(&e.resonant)?;
        Ok(&(&para + &w.product(&e.renorm_resonant)?) + &cbar)
    }

    /// `B w = w + (M^+ - R Gamma - (z + z0) Gamma) L0^{-1} w`.
    fn apply_b(&self, z: f64, w: &SpectralField) -> Result<SpectralField> {
        let lp = self.gamma.blocks();
        let z0 = self.enhanced.z0;
        let v = w.invert_shifted_laplacian(z0)?;
        let vb = lp.block_values(&v);
        let mplus = &lp.paraproduct_values(&self.gamma.hxi_blocks, &vb)
            + &lp.resonant_values(&vb, &self.gamma.hxi_blocks);
        let g = self.gamma.gamma(&v)?;
        let rg = self.renormalized_term(&g)?;
        Ok(&(&(w + &mplus) - &rg) - &g.scale(z + z0))
    }

    /// `(H - z)^{-1} f` with the inner system solved by GMRES to relative residual `tol`.
    pub fn apply(&self, z: f64, f: &SpectralField, tol: f64) -> Result<(SpectralField, SolveReport)> {
        f.check_grid(&self.enhanced.hxi)?;
        let b = self.basis.coordinates(f);
        let (w, rep) = linalg::gmres(
            |x| Ok(self.basis.coordinates(&self.apply_b(z, &self.basis.field(x))?)),
            &b,
            tol,
            60,
            2000,
        )?;
        let u = self.gamma.gamma(&self.basis.field(&w).invert_shifted_laplacian(self.enhanced.z0)?)?;
        Ok((u, rep))
    }
}

/// One row of the renormalization diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct RenormRecord {
    /// Regularization time.
    pub r: f64,
    /// Noise seed.
    pub seed: u64,
    /// Spatial mean of `Pi(X, h xi_r)`.
    pub mean_resonant: f64,
    /// Spatial mean of `c_{h,r}`.
    pub c_hr: f64,
    /// L2 norm of the renormalized resonant field.
    pub residual_norm: f64,
}

/// Renormalization diagnostics of one seed over an `r`-schedule.
pub fn renorm_records(grid: TorusGrid, h: f64, z0: f64, schedule: &[f64], seed: u64) -> Result<Vec<RenormRecord>> {
    let noise = sample_white_noise(grid, seed).with_coupling(SpectralField::constant(grid, h))?;
    schedule
        .iter()
        .map(|&r| {
            let e = EnhancedNoise::new(&noise, r, z0)?;
            Ok(RenormRecord {
                r,
                seed,
                mean_resonant: e.resonant.mean(),
                c_hr: e.c_hr.mean(),
                residual_norm: e.renorm_resonant.l2_norm(),
            })
        })
        .collect()
}

/// Pairwise `H^{-s}` distances `||R(r_i) - R(r_{i+1})||` of the renormalized
/// resonant field along an `r`-schedule, for one noise realization.
pub fn cauchy_diagnostics(noise: &NoiseRealization, z0: f64, schedule: &[f64], s: f64) -> Result<Vec<f64>> {
    let fields: Vec<SpectralField> = schedule
        .iter()
        .map(|&r| Ok(EnhancedNoise::new(noise, r, z0)?.renorm_resonant))
        .collect::<Result<_>>()?;
    Ok(fields.windows(2).map(|w| (&w[0] - &w[1]).sobolev_norm(-s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TorusGrid {
        TorusGrid::new(2.0 * PI, 16).unwrap()
    }

    #[test]
    fn enhancement_bookkeeping_is_exact() {
        let noise = sample_white_noise(grid(), 3);
        let e = EnhancedNoise::new(&noise, 0.05, 1.0).unwrap();
        assert_eq!(&e.renorm_resonant + &e.c_hr, e.resonant);
        assert!((e.c_hr.mean() - 0.05f64.ln().abs() / (4.0 * PI)).abs() < 1e-15);
        assert!(EnhancedNoise::new(&noise, 1.0, 1.0).is_err());
        assert!(EnhancedNoise::new(&noise, 0.0, 1.0).is_err());
        assert!(EnhancedNoise::new(&noise, 0.1, 0.0).is_err());
    }

    #[test]
    fn zero_noise_gives_minus_constant() {
        let g = grid();
        let zero = NoiseRealization {
            seed: 0,
            r: 0.0,
            field: SpectralField::zeros(g),
            h: SpectralField::constant(g, 0.5),
        };
        let e = EnhancedNoise::new(&zero, 0.01, 1.0).unwrap();
        let expected = -0.25 * 0.01f64.ln().abs() / (4.0 * PI);
        assert!((e.renorm_resonant.mean() - expected).abs() < 1e-15);
        assert!((&e.renorm_resonant - &SpectralField::constant(g, expected)).l2_norm() < 1e-15);
    }

    #[test]
    fn oracle_tracks_continuum_logarithm() {
        let g = TorusGrid::new(2.0 * PI, 64).unwrap();
        let z0 = 0.05;
        let rs: Vec<f64> = (4..10).map(|j| 2f64.powi(-j)).collect();
        let x: Vec<f64> = rs.iter().map(|r| r.ln().abs()).collect();
        let y: Vec<f64> = rs.iter().map(|&r| expected_resonant_mean(&g, 1.0, z0, r)).collect();
        let fit = stats::linear_fit(&x, &y);
        assert!((fit.slope * 4.0 * PI - 1.0).abs() < 0.05, "slope {}", fit.slope);
        let yc: Vec<f64> = rs.iter().map(|&r| continuum_resonant_mean(1.0, z0, r)).collect();
        let fc = stats::linear_fit(&x, &yc);
        assert!((fit.slope / fc.slope - 1.0).abs() < 0.03, "{} vs {}", fit.slope, fc.slope);
    }

    #[test]
    fn gamma_inverts_gamma_inverse_and_adjoint_is_consistent() {
        let g = grid();
        let noise = sample_white_noise(g, 5).heat_regularize(0.05).unwrap();
        let (z0, norm) = select_z0(&noise.field, 1.0).unwrap();
        assert!(norm < 0.5);
        let gm = GammaMap::new(&noise.field, z0).unwrap();
        let f = sample_white_noise(g, 6).field;
        let back = gm.gamma(&gm.gamma_inverse(&f).unwrap()).unwrap();
        assert!((&back - &f).l2_norm() < 1e-8 * f.l2_norm());
        let u = sample_white_noise(g, 7).field;
        let lhs = gm.k(&f).unwrap().inner(&u);
        let rhs = f.inner(&gm.k_adjoint(&u).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        let zero = GammaMap::new(&SpectralField::zeros(g), 1.0).unwrap();
        assert_eq!(zero.gamma_inverse(&f).unwrap(), f);
    }

    #[test]
    fn non_contractive_map_is_reported() {
        let g = grid();
        let noise = sample_white_noise(g, 8)
            .with_coupling(SpectralField::constant(g, 40.0))
            .unwrap();
        let err = ParacontrolledResolvent::new(&noise, 0.01, Some(0.01)).unwrap_err();
        assert!(matches!(err, Error::NotContractive { .. }));
        assert!(err.to_string().contains("increase z0"));
    }
}
