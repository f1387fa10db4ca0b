//! Property tests of the public data structures and numerical invariants.

use anderson::cache::{FieldCache, SpectralCache};
use anderson::config::{ExperimentConfig, GridConfig, MassPolicy, OutputConfig, SeedRange, Z0Policy};
use anderson::loops::extrapolation_weights;
use anderson::paths::{Path, PathKind};
use anderson::spectral::{OperatorMatrix, OperatorMeta};
use anderson::{sample_white_noise, SpectralField, TorusGrid};
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid16() -> TorusGrid {
    TorusGrid::new(2.0 * PI, 16).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn field_cache_round_trips_and_detects_any_flipped_byte(seed in 0u64..1000, r in 0.0f64..0.5, pos in 0usize..10_000, bit in 0u8..8) {
        let noise = sample_white_noise(grid16(), seed).heat_regularize(r).unwrap();
        let entry = FieldCache::from_field(&noise.field, seed, r);
        let bytes = entry.to_bytes();
        let back = FieldCache::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &entry);
        let restored = back.to_field().unwrap();
        prop_assert_eq!(restored.coeffs(), noise.field.coeffs());
        let mut bad = bytes.clone();
        let i = pos % bad.len();
        bad[i] ^= 1 << bit;
        prop_assert!(FieldCache::from_bytes(&bad).is_err());
        prop_assert!(SpectralCache::from_bytes(&bytes).is_err(), "wrong magic must be rejected");
    }

    #[test]
    fn heat_smoothing_is_a_semigroup(seed in 0u64..1000, r1 in 0.0f64..0.2, r2 in 0.0f64..0.2) {
        let f = sample_white_noise(grid16(), seed).field;
        let two = f.heat_smooth(r1).unwrap().heat_smooth(r2).unwrap();
        let one = f.heat_smooth(r1 + r2).unwrap();
        prop_assert!((&two - &one).l2_norm() <= 1e-12 * (1.0 + one.l2_norm()));
        prop_assert!(one.l2_norm() <= f.l2_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn fields_are_real_and_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
        let g = grid16();
        let f = sample_white_noise(g, seed).field;
        let h = sample_white_noise(g, seed + 1).field;
        prop_assert!(f.conjugate_symmetry_defect() < 1e-14);
        let lhs = f.axpy(a, &h).values();
        let (fv, hv) = (f.values(), h.values());
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - fv[i] - a * hv[i]).abs() < 1e-12);
        }
        let back = SpectralField::from_values(g, &fv).unwrap();
        prop_assert!((&back - &f).l2_norm() < 1e-12 * f.l2_norm());
    }

    #[test]
    fn constant_shift_moves_every_eigenvalue(v in -5.0f64..5.0, seed in 0u64..100) {
        let g = TorusGrid::new(2.0 * PI, 8).unwrap();
        let xi = sample_white_noise(g, seed).heat_regularize(0.05).unwrap().field;
        let base = OperatorMatrix::from_potential(&xi, OperatorMeta::default()).eigendecompose(false).unwrap();
        let moved = OperatorMatrix::from_potential(&(&xi + &SpectralField::constant(g, v)), OperatorMeta::default())
            .eigendecompose(false)
            .unwrap();
        for (a, b) in base.values().iter().zip(moved.values()) {
            prop_assert!((b - a - v).abs() < 1e-10);
        }
    }

    #[test]
    fn extrapolation_is_exact_for_low_degree_polynomials(x0 in 0.05f64..1.0, gap in 0.05f64..1.0, c in prop::array::uniform3(-5.0f64..5.0)) {
        let xs = [x0, x0 + gap, x0 + 2.3 * gap];
        let w = extrapolation_weights(&xs);
        let p = |x: f64| c[0] + c[1] * x + c[2] * x * x;
        let at_zero: f64 = xs.iter().zip(&w).map(|(x, w)| w * p(*x)).sum();
        prop_assert!((at_zero - c[0]).abs() < 1e-6 * (1.0 + c.iter().map(|v| v.abs()).sum::<f64>() * (1.0 + x0 / gap).powi(2)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ndjson_paths_round_trip(s0 in any::<u64>(), s1 in any::<u64>(), delta in 1e-6f64..1.0, pts in prop::collection::vec((0.0f64..6.3, 0.0f64..6.3), 1..20)) {
        let path = Path { seeds: [s0, s1], kind: PathKind::Polymer, delta, positions: pts.iter().map(|&(a, b)| [a, b]).collect() };
        let line = path.to_ndjson();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(Path::from_ndjson(&line).unwrap(), path);
    }

    #[test]
    fn configs_round_trip(l in 0.5f64..20.0, half in 2usize..40, first in 0u64..1000, count in 1u64..500, z in prop::option::of(0.01f64..10.0), c in prop::option::of(0.0f64..5.0), samples in 0usize..100_000, rs in prop::collection::vec(1e-4f64..1.0, 0..6)) {
        let cfg = ExperimentConfig {
            experiment: "gap".into(),
            r_schedule: rs,
            samples,
            grid: GridConfig { l, n: 2 * half },
            seeds: SeedRange { first, count },
            z0: z.map_or(Z0Policy::Auto, Z0Policy::Fixed),
            c: c.map_or(MassPolicy::GroundState, MassPolicy::Fixed),
            output: OutputConfig { dir: "runs/out".into() },
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
