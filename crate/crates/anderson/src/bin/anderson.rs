//! Command-line driver: one subcommand per experiment.
//!
//! Every run resolves an [`ExperimentConfig`] (subcommand defaults, then an
//! optional `--config` file, then command-line flags), writes its table to
//! `<out-dir>/<name>.csv` with the version and resolved config embedded as a
//! `#` header, prints one pass/fail line per gate, and exits with status 0
//! only if every gate passed (1 if a gate failed, 2 on error).

use anderson::cache::{write_atomic, FieldCache, SpectralCache};
use anderson::config::{ExperimentConfig, GridConfig, MassPolicy, SeedRange, Z0Policy};
use anderson::experiments::{self as ex, CriterionReport, HeatSetup, Table};
use anderson::gff::{self, GffSampler};
use anderson::heat::{self, HeatKernel};
use anderson::loops::LoopModel;
use anderson::paracontrolled::{self, EnhancedNoise};
use anderson::paths::{self, BridgeSampler, KernelChain};
use anderson::spectral::{self, OperatorMatrix, OperatorMeta, SpectralDecomposition};
use anderson::{sample_white_noise, stats};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "anderson", version, about = "Spectral-Galerkin laboratory for the renormalized Anderson operator on the 2-torus")]
struct Cli {
    /// First noise seed (overrides the config's `seeds.first`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config's `output.dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// TOML experiment configuration; its `experiment` must name the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every experiment; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
struct Common {
    /// Torus side length.
    #[arg(long = "L")]
    l: Option<f64>,
    /// Grid size (even).
    #[arg(long = "N")]
    n: Option<usize>,
    /// Regularization schedule (comma separated).
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<f64>>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
}

/// Flags of the path samplers.
#[derive(Debug, Clone, Args)]
struct PathArgs {
    /// Spectral cache (ANDS) to use instead of a fresh dense decomposition.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Number of time steps.
    #[arg(long, default_value_t = 32)]
    steps: usize,
    /// Time horizon (polymer, bridge) or step count times step (diffusion).
    #[arg(long, default_value_t = 1.0)]
    t_final: f64,
    /// Starting grid index.
    #[arg(long, default_value_t = 0)]
    start: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample white noise, regularize it and store it as an ANDF field cache.
    Noise(Common),
    /// Renormalization slope of the resonant term (per-seed CSV per coupling).
    Renorm {
        #[command(flatten)]
        common: Common,
        /// Resolvent shift (overrides the config's z0 policy).
        #[arg(long)]
        z0: Option<f64>,
    },
    /// Diagonalize one operator (optionally caching it); with several `r`, run the eigenvalue r-convergence sweep.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Resolvent shift recorded in the cache.
        #[arg(long)]
        z0: Option<f64>,
        /// Number of lowest eigenpairs via Lanczos (0 = full dense decomposition).
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Write the decomposition as an ANDS spectral cache.
        #[arg(long)]
        cache_out: Option<PathBuf>,
    },
    /// Paracontrolled resolvent against the direct matrix resolvent.
    ResolventCompare(Common),
    /// Weyl-law counting slope for the flat operator and random seeds.
    Weyl(Common),
    /// Spectral-gap and ground-state certificates.
    Gap(Common),
    /// Heat-kernel table and kernel-difference blow-up exponent.
    Heat {
        #[command(flatten)]
        common: Common,
        /// Spectral cache (ANDS) to use instead of a fresh dense decomposition.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Times for the table (comma separated; default 12 log-spaced in [0.02, 0.5]).
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
    },
    /// Small-time trace asymptotic and eigen-sum vs quadrature trace.
    Trace(Common),
    /// Two-sided Gaussian heat-kernel bounds.
    Gaussian {
        #[command(flatten)]
        common: Common,
        /// Safety factor on the searched `m` for validation.
        #[arg(long, default_value_t = 2.0)]
        margin: f64,
    },
    /// GFF partition function by Monte Carlo, series and determinant.
    Gff {
        #[command(flatten)]
        common: Common,
        /// Spectral cache (ANDS) to use instead of a fresh dense decomposition.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Mass shift (overrides the config's c policy).
        #[arg(long)]
        c: Option<f64>,
        /// Couplings (comma separated; default 0.1..0.45 of the series radius).
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
    },
    /// Partition-function identity and spectrum recovery from zeros.
    Partition(Common),
    /// Polymer paths and their quadratic variation.
    Polymer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        path: PathArgs,
        /// Paths written to NDJSON.
        #[arg(long, default_value_t = 100)]
        write_paths: u64,
    },
    /// Ground-state diffusion paths with a conservativity check.
    Diffusion {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        path: PathArgs,
        /// Killing rate.
        #[arg(long, default_value_t = 0.0)]
        killing: f64,
    },
    /// Diffusion bridges with an endpoint check.
    Bridge {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        path: PathArgs,
        /// Target grid index.
        #[arg(long)]
        target: Option<usize>,
    },
    /// Poissonian loop soup with a count check and compensated occupation.
    Loopsoup {
        #[command(flatten)]
        common: Common,
        /// Spectral cache (ANDS) to use instead of a fresh dense decomposition.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Intensity.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        /// Lifetime cutoff.
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
    },
    /// Loop occupation against the Wick square (second moment and Laplace transform).
    Isomorphism(Common),
    /// Small-time large-deviation exponent of the heat kernel.
    Ldp {
        #[command(flatten)]
        common: Common,
        /// Spectral cache (ANDS) probed in addition to the fresh seeds.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Time of the probe.
        #[arg(long, default_value_t = 0.1)]
        t: f64,
    },
    /// Brownian functional of the renormalized potential: semigroup vs Monte Carlo.
    Singularity {
        #[command(flatten)]
        common: Common,
        /// Spectral cache (ANDS) whose seed selects the noise.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Time horizon.
        #[arg(long, default_value_t = 2.0)]
        t_final: f64,
        /// Brownian time step.
        #[arg(long, default_value_t = 1e-4)]
        delta: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Noise(_) => "noise",
            Command::Renorm { .. } => "renorm",
            Command::Spectrum { .. } => "spectrum",
            Command::ResolventCompare(_) => "resolvent-compare",
            Command::Weyl(_) => "weyl",
            Command::Gap(_) => "gap",
            Command::Heat { .. } => "heat",
            Command::Trace(_) => "trace",
            Command::Gaussian { .. } => "gaussian",
            Command::Gff { .. } => "gff",
            Command::Partition(_) => "partition",
            Command::Polymer { .. } => "polymer",
            Command::Diffusion { .. } => "diffusion",
            Command::Bridge { .. } => "bridge",
            Command::Loopsoup { .. } => "loopsoup",
            Command::Isomorphism(_) => "isomorphism",
            Command::Ldp { .. } => "ldp",
            Command::Singularity { .. } => "singularity",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Noise(c)
            | Command::ResolventCompare(c)
            | Command::Weyl(c)
            | Command::Gap(c)
            | Command::Trace(c)
            | Command::Partition(c)
            | Command::Isomorphism(c) => c,
            Command::Renorm { common, .. }
            | Command::Spectrum { common, .. }
            | Command::Heat { common, .. }
            | Command::Gaussian { common, .. }
            | Command::Gff { common, .. }
            | Command::Polymer { common, .. }
            | Command::Diffusion { common, .. }
            | Command::Bridge { common, .. }
            | Command::Loopsoup { common, .. }
            | Command::Ldp { common, .. }
            | Command::Singularity { common, .. } => common,
        }
    }
}

/// Acceptance-scale defaults of each experiment.
fn defaults(name: &str) -> ExperimentConfig {
    let two_pi = 2.0 * PI;
    let (l, n, r, first, count, samples, z0) = match name {
        "noise" => (two_pi, 32, ex::dyadic(6, 6), 0, 1, 0, Z0Policy::Auto),
        "renorm" => (two_pi, 64, ex::dyadic(4, 10), 0, 200, 0, Z0Policy::Fixed(0.05)),
        "spectrum" => (two_pi, 64, ex::dyadic(8, 8), 0, 1, 0, Z0Policy::Fixed(1.0)),
        "resolvent-compare" => (1.0, 32, ex::dyadic(8, 8), 0, 1, 20, Z0Policy::Auto),
        "weyl" | "gaussian" => (two_pi, 32, ex::dyadic(6, 6), 0, 20, 0, Z0Policy::Fixed(1.0)),
        "gap" => (two_pi, 32, ex::dyadic(6, 6), 0, 100, 0, Z0Policy::Fixed(1.0)),
        "heat" | "trace" => (two_pi, 64, ex::dyadic(8, 8), 0, 1, 0, Z0Policy::Fixed(1.0)),
        "gff" | "partition" => (two_pi, 32, ex::dyadic(6, 6), 0, 1, 10_000, Z0Policy::Fixed(1.0)),
        "polymer" => (two_pi, 48, ex::dyadic(6, 6), 1, 2, 10_000, Z0Policy::Fixed(1.0)),
        "diffusion" | "bridge" => (two_pi, 32, ex::dyadic(6, 6), 1, 1, 1000, Z0Policy::Fixed(1.0)),
        "loopsoup" | "isomorphism" => (two_pi, 16, ex::dyadic(4, 4), 1, 1, 10_000, Z0Policy::Fixed(1.0)),
        "ldp" => (two_pi, 32, ex::dyadic(6, 6), 1, 5, 0, Z0Policy::Fixed(1.0)),
        "singularity" => (2.0, 32, ex::dyadic(4, 8), 1, 1, 10_000, Z0Policy::Fixed(1.0)),
        _ => unreachable!("every subcommand has defaults"),
    };
    ExperimentConfig {
        experiment: name.to_string(),
        r_schedule: r,
        samples,
        grid: GridConfig { l, n },
        seeds: SeedRange { first, count },
        z0,
        c: MassPolicy::GroundState,
        output: Default::default(),
    }
}

/// Defaults, then the config file, then flags.
fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let name = cli.command.name();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            if cfg.experiment != name {
                bail!("config is for experiment '{}' but the subcommand is '{name}'", cfg.experiment);
            }
            cfg
        }
        None => defaults(name),
    };
    if cfg.samples == 0 {
        cfg.samples = defaults(name).samples;
    }
    if cfg.r_schedule.is_empty() {
        cfg.r_schedule = defaults(name).r_schedule;
    }
    let c = cli.command.common();
    if let Some(l) = c.l {
        cfg.grid.l = l;
    }
    if let Some(n) = c.n {
        cfg.grid.n = n;
    }
    if let Some(r) = &c.r {
        cfg.r_schedule = r.clone();
    }
    if let Some(s) = c.seeds {
        cfg.seeds.count = s;
    }
    if let Some(s) = c.samples {
        cfg.samples = s;
    }
    if let Some(s) = cli.seed {
        cfg.seeds.first = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.output.dir = d.to_string_lossy().into_owned();
    }
    match &cli.command {
        Command::Renorm { z0: Some(z), .. } | Command::Spectrum { z0: Some(z), .. } => cfg.z0 = Z0Policy::Fixed(*z),
        Command::Gff { c: Some(c), .. } => cfg.c = MassPolicy::Fixed(*c),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Outputs of one run.
struct Run {
    cfg: ExperimentConfig,
    reports: Vec<CriterionReport>,
}

impl Run {
    fn dir(&self) -> PathBuf {
        PathBuf::from(&self.cfg.output.dir)
    }

    fn first_r(&self) -> f64 {
        self.cfg.r_schedule[0]
    }

    fn seed(&self) -> u64 {
        self.cfg.seeds.first
    }

    fn csv(&self, file: &str, table: &Table) -> Result<()> {
        let text = format!("{}{}", self.cfg.header(), table.to_csv());
        write_atomic(&self.dir().join(file), text.as_bytes())?;
        Ok(())
    }

    fn ndjson(&self, file: &str, lines: impl Iterator<Item = String>) -> Result<()> {
        let mut text = String::new();
        for line in lines {
            text.push_str(&line);
            text.push('\n');
        }
        write_atomic(&self.dir().join(file), text.as_bytes())?;
        Ok(())
    }

    fn report(&mut self, report: CriterionReport) -> Result<()> {
        self.csv(&format!("{}.csv", report.name), &report.table)?;
        self.reports.push(report);
        Ok(())
    }

    /// A gate that is not one of the numbered experiments.
    fn gate(&mut self, name: &'static str, passed: bool, summary: String) {
        self.reports.push(CriterionReport { id: 0, name, passed, summary, table: Table::default() });
    }

    fn z0(&self, noise: &anderson::NoiseRealization, r: f64) -> Result<f64> {
        Ok(match self.cfg.z0 {
            Z0Policy::Fixed(z) => z,
            Z0Policy::Auto => paracontrolled::select_z0(&noise.h.product(&noise.heat_regularize(r)?.field)?, 1.0)?.0,
        })
    }

    fn mass(&self, spec: &SpectralDecomposition) -> f64 {
        match self.cfg.c {
            MassPolicy::GroundState => gff::default_mass(spec),
            MassPolicy::Fixed(c) => c,
        }
    }

    /// The cached decomposition if given, else a fresh dense one; a cache
    /// replaces the grid, regularization and seed of the resolved config.
    fn decomposition(&mut self, cache: Option<&Path>) -> Result<SpectralDecomposition> {
        match cache {
            Some(path) => {
                let entry = SpectralCache::load(path).with_context(|| format!("loading {}", path.display()))?;
                self.cfg.grid = GridConfig { l: entry.l, n: entry.n as usize };
                self.cfg.r_schedule = vec![entry.r];
                self.cfg.seeds = SeedRange { first: entry.seed, count: 1 };
                self.cfg.z0 = Z0Policy::Fixed(entry.z0);
                Ok(entry.to_decomposition()?)
            }
            None => Ok(ex::dense(self.cfg.torus()?, self.seed(), self.first_r(), 1.0)?.1),
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<CriterionReport>> {
    let cfg = resolve(cli)?;
    let mut run = Run { cfg, reports: Vec::new() };
    let grid = run.cfg.torus()?;
    let r = run.first_r();
    let seeds = run.cfg.seeds.count;
    let samples = run.cfg.samples;
    match &cli.command {
        Command::Noise(_) => {
            let noise = sample_white_noise(grid, run.seed()).heat_regularize(r)?;
            let entry = FieldCache::from_field(&noise.field, run.seed(), r);
            let path = run.dir().join(format!("noise_seed{}.andf", run.seed()));
            entry.store(&path)?;
            let back = FieldCache::load(&path)?;
            let v = noise.field.values();
            let mut table = Table::new(&["seed", "r", "mean", "l2_norm"]);
            table.push(vec![run.seed() as f64, r, stats::mean(&v), noise.field.l2_norm()]);
            run.csv("noise.csv", &table)?;
            run.gate("noise-cache", back == entry, format!("stored {} and re-read it bit-identically: {}", path.display(), back == entry));
        }
        Command::Renorm { .. } => {
            let z0 = match run.cfg.z0 {
                Z0Policy::Fixed(z) => z,
                Z0Policy::Auto => 1.0,
            };
            let first = run.seed();
            let p = ex::RenormParams { grid, z0, schedule: run.cfg.r_schedule.clone(), seeds, couplings: vec![1.0, 0.5] };
            for &h in &p.couplings {
                let mut table = Table::new(&["r", "seed", "mean_resonant", "c_hr", "residual_norm"]);
                let rows: Vec<Vec<paracontrolled::RenormRecord>> = (first..first + seeds)
                    .into_par_iter()
                    .map(|s| paracontrolled::renorm_records(grid, h, z0, &p.schedule, s))
                    .collect::<anderson::Result<_>>()?;
                for q in rows.iter().flatten() {
                    table.push(vec![q.r, q.seed as f64, q.mean_resonant, q.c_hr, q.residual_norm]);
                }
                run.csv(&format!("renorm_h{h}.csv"), &table)?;
            }
            run.report(ex::renorm_slope(&p)?)?;
        }
        Command::Spectrum { k, cache_out, .. } => {
            if run.cfg.r_schedule.len() > 1 {
                let z0 = match run.cfg.z0 {
                    Z0Policy::Fixed(z) => z,
                    Z0Policy::Auto => 1.0,
                };
                let p = ex::ConvergenceParams { grid, seeds, schedule: run.cfg.r_schedule.clone(), z0 };
                run.report(ex::eigen_convergence(&p)?.0)?;
            } else {
                let noise = sample_white_noise(grid, run.seed());
                let z0 = run.z0(&noise, r)?;
                let e = EnhancedNoise::new(&noise, r, z0)?;
                let op = OperatorMatrix::assemble(&e);
                let spec = if *k == 0 {
                    op.eigendecompose(true)?
                } else {
                    spectral::lanczos_lowest(&e.potential(), OperatorMeta { r, z0, seed: run.seed(), h: 1.0 }, *k, 1e-11)?
                };
                let (res, orth) = spec.verify(&op);
                let mut table = Table::new(&["n", "lambda"]);
                spec.values().iter().enumerate().for_each(|(i, v)| table.push(vec![i as f64, *v]));
                run.csv("spectrum.csv", &table)?;
                if let Some(path) = cache_out {
                    SpectralCache::from_decomposition(&spec)?.store(path)?;
                }
                run.gate("eigen-residuals", res < 1e-8 && orth < 1e-8, format!("worst residual {res:.2e}, orthonormality defect {orth:.2e} over {} pairs", spec.len()));
                run.report(ex::spectrum_shift(grid, run.seed(), r)?)?;
                if *k == 0 {
                    let setup = HeatSetup::new(grid, run.seed(), r)?;
                    run.report(ex::holder_scaling(&setup)?)?;
                }
            }
        }
        Command::ResolventCompare(_) => run.report(ex::resolvent_equivalence(grid, r, run.seed(), samples as u64)?)?,
        Command::Weyl(_) => run.report(ex::weyl_law(grid, seeds, r)?)?,
        Command::Gap(_) => {
            let (a, b) = ex::gap_certificates(grid, seeds, r)?;
            run.report(a)?;
            run.report(b)?;
        }
        Command::Heat { cache, t_grid, .. } => {
            let spec = run.decomposition(cache.as_deref())?;
            let hk = HeatKernel::new(&spec)?;
            let t_min = heat::trusted_t_min(spec.grid(), 1e-8).max(0.02);
            let ts = t_grid.clone().unwrap_or_else(|| ex::log_grid(t_min, 0.5, 12));
            run.csv("heat.csv", &ex::heat_profile(&hk, &ts)?)?;
            let c = spec.meta.r.ln().abs() / (4.0 * PI);
            let control = HeatKernel::new(&ex::flat_with_constant(*spec.grid(), c)?)?;
            run.report(ex::difference_exponent(&HeatSetup { spec, hk, control })?)?;
        }
        Command::Trace(_) => {
            let setup = HeatSetup::new(grid, run.seed(), r)?;
            run.report(ex::trace_asymptotic(&setup)?)?;
        }
        Command::Gaussian { margin, .. } => run.report(ex::gaussian_bounds(grid, seeds, r, *margin)?)?,
        Command::Gff { cache, lambda_grid, .. } => {
            let spec = run.decomposition(cache.as_deref())?;
            let sampler = GffSampler::new(&spec, run.mass(&spec))?;
            let lambdas = match lambda_grid {
                Some(l) => l.clone(),
                None => {
                    let a2 = gff::trace_power(sampler.mu(), 2)?;
                    [0.1, 0.2, 0.3, 0.4, 0.45].iter().map(|s| s * a2.powf(-0.5)).collect()
                }
            };
            let wick = gff::wick_totals(&sampler, 0, samples);
            let rows = gff::partition_table(&sampler, &lambdas, &wick);
            let mut table = Table::new(&["λ", "Z_mc", "Z_mc_stderr", "Z_series", "Z_det2"]);
            let mut worst = 0.0f64;
            for q in &rows {
                table.push(vec![q.lambda, q.z_mc, q.z_mc_stderr, q.z_series, q.z_det2]);
                let gap = (q.z_mc - q.z_det2).abs() / q.z_mc_stderr;
                worst = worst.max(if gap.is_nan() { f64::INFINITY } else { gap });
            }
            run.csv("gff.csv", &table)?;
            run.gate("gff-partition", worst <= 3.0, format!("worst |Z_mc - Z_det2| = {worst:.2} standard errors over {} couplings", rows.len()));
        }
        Command::Partition(_) => run.report(ex::partition_identity(grid, run.seed(), r, samples)?)?,
        Command::Polymer { path, write_paths, .. } => {
            let spec = run.decomposition(path.cache.as_deref())?;
            let hk = HeatKernel::new(&spec)?;
            let chain = KernelChain::polymer(&hk, spec.meta.seed, path.t_final, path.steps)?;
            let sampled: Vec<paths::Path> = (0..*write_paths).into_par_iter().map(|s| chain.sample(path.start, s)).collect();
            run.ndjson("polymer.ndjson", sampled.iter().map(paths::Path::to_ndjson))?;
            let p = ex::QvParams {
                grid: *spec.grid(),
                r: spec.meta.r,
                seeds: run.cfg.seeds.iter().collect(),
                t_final: ex::QvParams::default().t_final,
                steps: ex::QvParams::default().steps,
                paths: samples as u64,
            };
            run.report(ex::quadratic_variation(&p)?)?;
        }
        Command::Diffusion { path, killing, .. } => {
            let spec = run.decomposition(path.cache.as_deref())?;
            let hk = HeatKernel::new(&spec)?;
            let delta = path.t_final / path.steps as f64;
            let chain = KernelChain::diffusion(&hk, spec.meta.seed, delta, path.steps, *killing)?;
            let sampled: Vec<paths::Path> = (0..samples as u64).into_par_iter().map(|s| chain.sample(path.start, s)).collect();
            run.ndjson("diffusion.ndjson", sampled.iter().map(paths::Path::to_ndjson))?;
            let p = hk.grid().len();
            let worst = (0..p).step_by(p / 16).map(|x| (chain.diffusion_mass(&hk, x) - 1.0).abs()).fold(0.0, f64::max);
            run.gate("diffusion-conservative", worst < 1e-8, format!("max |sum_y q(x, y) - 1| = {worst:.2e} over 16 starting points"));
        }
        Command::Bridge { path, target, .. } => {
            let spec = run.decomposition(path.cache.as_deref())?;
            let hk = HeatKernel::new(&spec)?;
            let g = *hk.grid();
            let target = target.unwrap_or(g.len() / 2 + g.n() / 2);
            let sampler = BridgeSampler::new(&hk, spec.meta.seed, target, path.t_final, path.steps)?;
            let sampled: Vec<paths::Path> = (0..samples as u64).into_par_iter().map(|s| sampler.sample(path.start, s)).collect();
            run.ndjson("bridge.ndjson", sampled.iter().map(paths::Path::to_ndjson))?;
            let end = g.point(target / g.n(), target % g.n());
            let missed = sampled.iter().filter(|p| p.positions.last() != Some(&end)).count();
            run.gate("bridge-endpoint", missed == 0, format!("{missed} of {} bridges miss the target", sampled.len()));
        }
        Command::Loopsoup { cache, gamma, eps, .. } => {
            let spec = run.decomposition(cache.as_deref())?;
            let model = LoopModel::new(&spec, run.mass(&spec))?;
            let soup = model.sample_soup(*gamma, *eps, run.seed())?;
            run.ndjson("loopsoup.ndjson", soup.loops.iter().map(|lp| model.loop_path(lp, run.seed()).to_ndjson()))?;
            let mean = gamma * model.loop_mass(*eps);
            let z = (soup.loops.len() as f64 - mean) / mean.sqrt();
            let ones = vec![1.0; spec.grid().len()];
            let occ = model.compensated_occupation(&soup, &ones)?;
            let mut table = Table::new(&["gamma", "eps", "loops", "expected_loops", "compensated_occupation"]);
            table.push(vec![*gamma, *eps, soup.loops.len() as f64, mean, occ]);
            run.csv("loopsoup.csv", &table)?;
            run.gate("loopsoup-count", z.abs() < 4.0, format!("{} loops against Poisson mean {mean:.1} ({z:+.2}σ); compensated occupation of 1: {occ:.3}", soup.loops.len()));
        }
        Command::Isomorphism(_) => {
            let p = ex::LoopParams { grid, seed: run.seed(), r, loops: samples, gff_samples: samples as u64, ..Default::default() };
            run.report(ex::loop_soup(&p)?.0)?;
        }
        Command::Ldp { cache, t, .. } => {
            if let Some(path) = cache {
                let spec = SpectralCache::load(path)?.to_decomposition()?;
                let g = *spec.grid();
                let p = g.len();
                let fit = paths::ldp_probe(&HeatKernel::new(&spec)?, *t, &[0, p / 3 + 5, 2 * p / 3 + 11], 12.5)?;
                run.gate("ldp-cache", fit.kappa.is_finite(), format!("cached seed {}: κ = {:.4} ± {:.4}", spec.meta.seed, fit.kappa, fit.kappa_stderr));
            }
            run.report(ex::ldp_exponent(grid, seeds, r, *t)?)?;
        }
        Command::Singularity { cache, t_final, delta, .. } => {
            let seed = match cache {
                Some(path) => SpectralCache::load(path)?.seed,
                None => run.seed(),
            };
            let p = ex::SingularityParams {
                grid,
                seed,
                schedule: run.cfg.r_schedule.clone(),
                t_final: *t_final,
                delta: *delta,
                paths: samples,
                ..Default::default()
            };
            run.report(ex::singularity(&p)?)?;
        }
    }
    Ok(run.reports)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(reports) => {
            for r in &reports {
                println!("{}", r.line());
            }
            if reports.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
