use std::fs;
use std::path::Path;
use std::process::Command;

use equilab::geom::{Complex64, SingularWeight, SpherePoint, VolumeDensity};
use equilab::l2::{basis_key, GramSpec, SectionSpace};
use equilab_cli::cache::{cache_gc, Cache, CacheEvent};
use equilab_cli::config::{emit, parse, ExperimentConfig, Kind, Model, RegionSpec, SamplingSpec, VolumeSpec, WeightSpec};
use proptest::prelude::*;

fn lab(args: &[&str], cache: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lab")).args(args).env("LAB_CACHE_DIR", cache).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn point() -> impl Strategy<Value = SpherePoint> {
    prop_oneof![
        Just(SpherePoint::Infinity),
        (-1e3f64..1e3).prop_map(|x| SpherePoint::Finite(Complex64::new(x, 0.0))),
        (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| SpherePoint::Finite(Complex64::new(x, y))),
    ]
}

fn weight() -> impl Strategy<Value = WeightSpec> {
    (0.0f64..2.0, prop::collection::vec((point(), 0.0f64..1.0), 0..3), 0.0f64..0.5, prop::collection::vec(point(), 0..3))
        .prop_map(|(fs_scale, atoms, epsilon, punctures)| WeightSpec { fs_scale, atoms, epsilon, punctures })
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    let head = (
        "[a-z][a-z0-9_-]{0,12}",
        prop::sample::select(Kind::ALL.to_vec()),
        prop::sample::select(vec![Model::Sphere, Model::Product]),
        prop::collection::btree_set(0u32..=64, 1..6),
    );
    let body = (
        weight(),
        prop::option::of(weight()),
        prop_oneof![
            Just(VolumeSpec::FubiniStudy),
            (prop::collection::vec(point(), 1..3), 0.01f64..0.5)
                .prop_map(|(punctures, delta)| VolumeSpec::Poincare { punctures, delta }),
        ],
    );
    let tail = (
        (0.01f64..1.0, 1.0f64..5.0, 1usize..40, 1usize..40, 0.0f64..0.5),
        (0.5f64..8.0, 3usize..200),
        (prop::collection::vec(any::<u64>(), 1..5), 2usize..5000, 0usize..100000),
        any::<bool>(),
    );
    (head, body, tail).prop_map(|((name, kind, model, ps), (weight, weight2, volume), (r, grid, s, svg))| ExperimentConfig {
        name,
        kind,
        model,
        p_list: ps.into_iter().collect(),
        weight,
        weight2,
        volume,
        region: RegionSpec { r_min: r.0, r_max: r.1, n_r: r.2, n_theta: r.3, standoff: r.4 },
        grid,
        sampling: SamplingSpec { seeds: s.0, samples: s.1, cd_samples: s.2 },
        svg,
    })
}

proptest! {
    #[test]
    fn config_text_round_trips(cfg in config()) {
        let text = emit(&cfg);
        prop_assert_eq!(parse(&text).unwrap(), cfg.clone());
        prop_assert_eq!(emit(&parse(&text).unwrap()), text);
    }
}

#[test]
fn unknown_key_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ini");
    fs::write(&path, "[experiment]\nname = x\nkind = dim\n\n[weight]\nfs_scal = 1\n").unwrap();
    let (code, _, err) = lab(&["run", path.to_str().unwrap(), "--no-cache"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("line 6") && err.contains("fs_scal"), "{err}");
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(lab(&["frobnicate"], dir.path()).0, 1);
    assert_eq!(lab(&["run", "preset:missing"], dir.path()).0, 1);
    assert_eq!(lab(&["run", "/nonexistent/config.ini"], dir.path()).0, 1);
    let heavy = dir.path().join("heavy.ini");
    fs::write(&heavy, "[experiment]\nname = heavy\nkind = dim\n\n[weight]\natoms = 0:0.9\n").unwrap();
    let (code, _, err) = lab(&["run", heavy.to_str().unwrap(), "--no-cache"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("[weight]"), "{err}");
    assert_eq!(lab(&["run", "preset:nu-one", "--out", out, "--no-cache"], dir.path()).0, 0);
    // a single degree cannot show decay, so the trend check fails
    let one = dir.path().join("one.ini");
    fs::write(&one, "[experiment]\nname = one\nkind = bergman\np_list = 4\n").unwrap();
    let (code, stdout, _) = lab(&["run", one.to_str().unwrap(), "--out", out, "--no-cache"], dir.path());
    assert_eq!(code, 2);
    assert!(stdout.contains("FAIL bergman.decay"), "{stdout}");
}

#[test]
fn presets_are_listed_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    let (code, list, _) = lab(&["preset"], dir.path());
    assert_eq!(code, 0);
    let names: Vec<&str> = list.lines().collect();
    assert_eq!(names.len(), equilab_cli::presets::PRESETS.len());
    for name in names {
        let (code, text, _) = lab(&["preset", name], dir.path());
        assert_eq!(code, 0);
        assert_eq!(parse(&text).unwrap().name, name);
    }
}

fn fill_cache(dir: &Path, degrees: &[u32]) -> Vec<String> {
    let cache = Cache::open(dir.to_path_buf()).unwrap();
    let spec = GramSpec::default();
    degrees
        .iter()
        .map(|&p| {
            let space = SectionSpace::new(&SingularWeight::fubini_study(), &VolumeDensity::FubiniStudy, p).unwrap();
            assert_eq!(cache.basis(&space, &spec).unwrap().1, CacheEvent::Miss);
            basis_key(&space, &spec)
        })
        .collect()
}

fn cache_bytes(dir: &Path) -> u64 {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .map(|p| fs::metadata(p).unwrap().len())
        .sum()
}

#[test]
fn gc_on_empty_cache_evicts_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let r = cache_gc(dir.path(), 0).unwrap();
    assert!(r.evicted.is_empty());
    assert_eq!((r.freed_bytes, r.remaining_bytes), (0, 0));
}

#[test]
fn gc_with_zero_budget_evicts_everything() {
    let dir = tempfile::tempdir().unwrap();
    let keys = fill_cache(dir.path(), &[2, 3, 4]);
    let total = cache_bytes(dir.path());
    let r = cache_gc(dir.path(), 0).unwrap();
    assert_eq!(r.evicted, keys);
    assert_eq!((r.freed_bytes, r.remaining_bytes), (total, 0));
    assert_eq!(cache_bytes(dir.path()), 0);
}

#[test]
fn gc_within_budget_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    fill_cache(dir.path(), &[2, 3, 4]);
    let total = cache_bytes(dir.path());
    let r = cache_gc(dir.path(), total).unwrap();
    assert!(r.evicted.is_empty());
    assert_eq!(r.remaining_bytes, total);
}

#[test]
fn gc_evicts_least_recently_used_first() {
    let dir = tempfile::tempdir().unwrap();
    let keys = fill_cache(dir.path(), &[2, 3, 4]);
    // touch the oldest entry so that p = 3 becomes the eviction candidate
    let cache = Cache::open(dir.path().to_path_buf()).unwrap();
    let space = SectionSpace::new(&SingularWeight::fubini_study(), &VolumeDensity::FubiniStudy, 2).unwrap();
    assert_eq!(cache.basis(&space, &GramSpec::default()).unwrap().1, CacheEvent::Hit);
    let total = cache_bytes(dir.path());
    let r = cache_gc(dir.path(), total - 1).unwrap();
    assert_eq!(r.evicted, vec![keys[1].clone()]);
}

#[test]
fn gc_via_cli_reports_and_missing_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    fill_cache(dir.path(), &[2]);
    let (code, stdout, _) = lab(&["cache-gc", "--max-bytes", "0"], dir.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("evicted 1 entries"), "{stdout}");
    assert_eq!(lab(&["cache-gc", "--max-bytes", "0"], &dir.path().join("absent")).0, 1);
}

#[test]
fn corrupt_cache_entry_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let keys = fill_cache(dir.path(), &[5]);
    let path = dir.path().join(format!("{}.bin", keys[0]));
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&path, &bytes).unwrap();
    let cache = Cache::open(dir.path().to_path_buf()).unwrap();
    let space = SectionSpace::new(&SingularWeight::fubini_study(), &VolumeDensity::FubiniStudy, 5).unwrap();
    let spec = GramSpec::default();
    let (fresh, event) = cache.basis(&space, &spec).unwrap();
    assert_eq!(event, CacheEvent::Repaired);
    let (again, event) = cache.basis(&space, &spec).unwrap();
    assert_eq!(event, CacheEvent::Hit);
    assert_eq!(fresh.coeffs, again.coeffs);
    // truncation is caught as well
    fs::write(&path, &bytes[..10]).unwrap();
    assert_eq!(cache.basis(&space, &spec).unwrap().1, CacheEvent::Repaired);
}

#[test]
fn cached_and_uncached_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cache = dir.path().join("cache");
    assert_eq!(lab(&["run", "preset:fs-baseline", "--out", a.to_str().unwrap()], &cache).0, 0);
    assert_eq!(lab(&["run", "preset:fs-baseline", "--out", b.to_str().unwrap()], &cache).0, 0);
    let manifest = fs::read_to_string(b.join("manifest.txt")).unwrap();
    assert!(manifest.contains("= hit"), "{manifest}");
    for name in ["bergman.csv", "bergman_values.csv", "checks.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}
