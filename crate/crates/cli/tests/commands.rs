use std::fs;

use softcorr::correspondence::VertexMap;
use softcorr::geometry::{euler_counts, Shape, ShapeFormat};
use softcorr_cli::config::{GenKind, RunConfig, GT_FILE, SOURCE_FILE, SUMMARY_FILE, TARGET_FILE};
use softcorr_cli::{cmd_eval, cmd_gen, run, Cli, ErrorKind};
use clap::Parser;

fn config_in(dir: &std::path::Path) -> RunConfig {
    RunConfig { out_dir: dir.to_path_buf(), ..RunConfig::default() }
}

fn load(path: &std::path::Path) -> Shape {
    Shape::load(path, ShapeFormat::Off).unwrap()
}

#[test]
fn icosphere_kind_writes_162_vertices_and_320_faces() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config_in(dir.path());
    c.gen.kind = GenKind::Icosphere;
    cmd_gen(&c).unwrap();
    let s = load(&c.out(SOURCE_FILE));
    assert_eq!((s.len(), s.faces().unwrap().len()), (162, 320));
    let (v, e, f) = euler_counts(&s);
    assert_eq!(v as i64 - e as i64 + f as i64, 2);
}

#[test]
fn still_noisy_copy_and_flat_bend_reproduce_the_source() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config_in(dir.path());
    c.gen.noise.jitter = 0.0;
    c.gen.noise.max_angle = 0.0;
    cmd_gen(&c).unwrap();
    assert_eq!(load(&c.out(SOURCE_FILE)), load(&c.out(TARGET_FILE)));
    assert_eq!(VertexMap::read(&c.out(GT_FILE)).unwrap(), VertexMap::identity(162));

    c.gen.kind = GenKind::BentCylinder;
    c.gen.bend_angle = 0.0;
    cmd_gen(&c).unwrap();
    let (s, t) = (load(&c.out(SOURCE_FILE)), load(&c.out(TARGET_FILE)));
    assert_eq!(s, t);
    assert_eq!(VertexMap::read(&c.out(GT_FILE)).unwrap(), VertexMap::identity(s.len()));
}

#[test]
fn ground_truth_scored_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config_in(dir.path());
    cmd_gen(&c).unwrap();
    c.eval.pred = vec![c.out(GT_FILE)];
    cmd_eval(&c).unwrap();
    let summary = fs::read_to_string(c.out(SUMMARY_FILE)).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("gt,0.0,0.0,"), "{summary}");
}

#[test]
fn zero_iterations_fail_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let code = run(["softcorr", "refine", "--iterations", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    fs::write(&file, "seed = 3\n[refine]\niterations = 4\nlosses = \"L+l1\"\n").unwrap();
    let cli = Cli::parse_from(["softcorr", "--config", file.to_str().unwrap(), "refine", "--iterations", "2", "--seed", "9"]);
    let (c, _) = cli.resolve().unwrap();
    assert_eq!((c.seed, c.refine.iterations, c.refine.losses.as_str()), (9, 2, "L+l1"));
}

#[test]
fn unknown_keys_and_missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, "[initiator]\nepoch = 3\n").unwrap();
    let err = Cli::parse_from(["softcorr", "--config", file.to_str().unwrap(), "init"]).resolve().unwrap_err();
    assert_eq!((err.kind, err.module), (ErrorKind::Config, "config"));

    let c = config_in(&dir.path().join("empty"));
    let err = softcorr_cli::cmd_init(&c).unwrap_err();
    assert_eq!((err.kind, err.module, err.operation), (ErrorKind::Io, "geometry", "load_shape"));
}
