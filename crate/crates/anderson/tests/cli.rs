//! End-to-end runs of the `anderson` binary at small sizes.

use anderson::cache::{FieldCache, SpectralCache};
use anderson::paths::{Path, PathKind};
use std::path::Path as FsPath;
use std::process::{Command, Output};

fn anderson(dir: &FsPath, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anderson"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// CSV body (the `#` header stripped) and the header.
fn read_csv(path: &FsPath) -> (String, String) {
    let text = std::fs::read_to_string(path).unwrap();
    let (header, body): (Vec<&str>, Vec<&str>) = text.lines().partition(|l| l.starts_with('#'));
    (header.join("\n"), body.join("\n"))
}

#[test]
fn noise_writes_a_verified_field_cache() {
    let dir = tempfile::tempdir().unwrap();
    let o = anderson(dir.path(), &["--seed", "3", "noise", "--N", "16", "--r", "0.01"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).starts_with("PASS  noise-cache"));
    let cache = FieldCache::load(&dir.path().join("noise_seed3.andf")).unwrap();
    assert_eq!((cache.n, cache.seed, cache.r), (16, 3, 0.01));
}

#[test]
fn spectrum_cache_feeds_heat_and_path_commands() {
    let dir = tempfile::tempdir().unwrap();
    let ands = dir.path().join("s.ands");
    let o = anderson(dir.path(), &["spectrum", "--N", "16", "--r", "0.015625", "--cache-out", ands.to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let cache = SpectralCache::load(&ands).unwrap();
    assert_eq!(cache.values.len(), 15 * 15);

    let o = anderson(dir.path(), &["heat", "--cache", ands.to_str().unwrap(), "--t-grid", "0.3,0.4,0.5"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let (header, body) = read_csv(&dir.path().join("heat.csv"));
    assert!(header.starts_with("# anderson "));
    // The cache's grid replaces the default one in the resolved config.
    assert!(header.contains("# n = 16"), "{header}");
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("t,trace,trace_theta,sup_diff,c_fit,m_fit"));
    assert_eq!(lines.count(), 3);

    let o = anderson(dir.path(), &["bridge", "--cache", ands.to_str().unwrap(), "--samples", "20", "--steps", "8"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("bridge.ndjson")).unwrap();
    let paths: Vec<Path> = text.lines().map(|l| Path::from_ndjson(l).unwrap()).collect();
    assert_eq!(paths.len(), 20);
    assert!(paths.iter().all(|p| p.kind == PathKind::Bridge && p.positions.len() == 9 && p.seeds[0] == 0));

    let o = anderson(dir.path(), &["diffusion", "--cache", ands.to_str().unwrap(), "--samples", "5", "--steps", "4"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS  diffusion-conservative"));

    let o = anderson(dir.path(), &["loopsoup", "--cache", ands.to_str().unwrap(), "--gamma", "20"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("loopsoup.ndjson")).unwrap();
    for line in text.lines() {
        let p = Path::from_ndjson(line).unwrap();
        assert_eq!(p.kind, PathKind::Loop);
        assert_eq!(p.positions.first(), p.positions.last());
    }
}

#[test]
fn renorm_csv_columns_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["renorm", "--N", "16", "--seeds", "2", "--r", "0.0625,0.03125,0.015625"];
    let o = anderson(dir.path(), &args);
    // Two seeds on a tiny grid: the slope gate may or may not pass; the run must not error.
    assert_ne!(o.status.code(), Some(2), "{}", stderr(&o));
    let first = std::fs::read(dir.path().join("renorm_h1.csv")).unwrap();
    let (_, body) = read_csv(&dir.path().join("renorm_h0.5.csv"));
    assert_eq!(body.lines().next(), Some("r,seed,mean_resonant,c_hr,residual_norm"));
    assert_eq!(body.lines().count(), 1 + 2 * 3);
    anderson(dir.path(), &args);
    assert_eq!(std::fs::read(dir.path().join("renorm_h1.csv")).unwrap(), first);
}

#[test]
fn gff_table_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = anderson(dir.path(), &["gff", "--N", "8", "--samples", "2000", "--c", "2.0"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let (header, body) = read_csv(&dir.path().join("gff.csv"));
    assert!(header.contains("policy = \"fixed\"") && header.contains("value = 2.0"), "{header}");
    assert_eq!(body.lines().next(), Some("λ,Z_mc,Z_mc_stderr,Z_series,Z_det2"));
}

#[test]
fn exit_status_reflects_gates() {
    let dir = tempfile::tempdir().unwrap();
    let o = anderson(dir.path(), &["weyl", "--N", "16", "--seeds", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("PASS  C04 weyl-law"));
    // Per-seed monotone r-differences fail on this deterministic small run.
    let o = anderson(dir.path(), &["spectrum", "--N", "16", "--seeds", "3", "--r", "0.0625,0.03125,0.015625"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("FAIL  C02"));
}

#[test]
fn config_files_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"weyl\"\nmystery = 1\n[grid]\nl = 6.0\nn = 16\ncolour = \"red\"\n").unwrap();
    let o = anderson(dir.path(), &["--config", bad.to_str().unwrap(), "weyl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mystery") && stderr(&o).contains("grid.colour"), "{}", stderr(&o));

    let other = dir.path().join("other.toml");
    std::fs::write(&other, "experiment = \"gap\"\n[grid]\nl = 6.0\nn = 16\n").unwrap();
    let o = anderson(dir.path(), &["--config", other.to_str().unwrap(), "weyl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("'gap'"), "{}", stderr(&o));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "experiment = \"weyl\"\nr_schedule = [0.015625]\n[grid]\nl = 6.283185307179586\nn = 16\n[seeds]\nfirst = 0\ncount = 1\n").unwrap();
    let o = anderson(dir.path(), &["--config", good.to_str().unwrap(), "weyl"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let (header, _) = read_csv(&dir.path().join("weyl-law.csv"));
    let toml: String = header.lines().skip(1).map(|l| format!("{}\n", l.trim_start_matches("# "))).collect();
    let resolved = anderson::config::ExperimentConfig::from_toml(&toml).unwrap();
    assert_eq!(resolved.grid.n, 16);
    assert_eq!(resolved.output.dir, dir.path().to_string_lossy());
}
