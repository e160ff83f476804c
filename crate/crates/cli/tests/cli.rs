use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use atlas_core::atlas::read_atlas;

const CONFIG: &str = r#"
inputs = ["corpus.jsonl"]
out_dir = "out"
seed = 5
k = 3

[tsne]
perplexity = 3.0
learning_rate = 10.0
n_iter = 400
"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus15.jsonl");
    std::fs::copy(fixture, dir.path().join("corpus.jsonl")).unwrap();
    std::fs::write(dir.path().join("atlas.toml"), CONFIG).unwrap();
    dir
}

fn atlas(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlas"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn atlas_path(dir: &Path) -> PathBuf {
    dir.join("out/atlas.json")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn all_writes_a_fifteen_point_atlas() {
    let dir = workspace();
    let o = atlas(dir.path(), &["all", "--config", "atlas.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = read_atlas(&atlas_path(dir.path())).unwrap();
    assert_eq!(a.points.len(), 15);
    a.validate().unwrap();
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.ends_with("atlas.json")));
}

#[test]
fn cluster_before_reduce_fails_naming_reduce() {
    let dir = workspace();
    for stage in ["ingest", "vectorize"] {
        assert!(atlas(dir.path(), &[stage, "--config", "atlas.toml"]).status.success());
    }
    let o = atlas(dir.path(), &["cluster", "--config", "atlas.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("atlas reduce"), "{}", stderr(&o));
}

#[test]
fn repeated_and_staged_runs_agree_byte_for_byte() {
    let (a, b, c) = (workspace(), workspace(), workspace());
    for dir in [&a, &b] {
        let o = atlas(dir.path(), &["all", "--config", "atlas.toml", "--threads", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for stage in ["ingest", "vectorize", "reduce", "cluster", "embed", "export"] {
        let o = atlas(c.path(), &[stage, "--config", "atlas.toml", "--threads", "2"]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let bytes = |d: &tempfile::TempDir| std::fs::read(atlas_path(d.path())).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(bytes(&a), bytes(&c));
}

#[test]
fn flags_override_the_config() {
    let dir = workspace();
    let o = atlas(dir.path(), &["all", "--config", "atlas.toml", "--k", "2", "--seed", "9", "--out", "elsewhere"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = read_atlas(&dir.path().join("elsewhere/atlas.json")).unwrap();
    assert_eq!(a.clusters.len(), 2);
    assert!(!atlas_path(dir.path()).exists());
}

#[test]
fn config_from_another_directory_resolves_relative_paths() {
    let dir = workspace();
    let elsewhere = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("atlas.toml");
    let o = atlas(elsewhere.path(), &["ingest", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out/corpus.json").exists());
    assert!(dir.path().join("out/corpus_stats.json").exists());
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = workspace();
    // usage
    assert_eq!(atlas(dir.path(), &["plot", "--config", "atlas.toml"]).status.code(), Some(1));
    assert_eq!(atlas(dir.path(), &["all"]).status.code(), Some(1));
    assert_eq!(atlas(dir.path(), &["--help"]).status.code(), Some(0));
    // invalid config
    std::fs::write(dir.path().join("bad.toml"), "inputs = [\"corpus.jsonl\"]\nmax_features = 0\n").unwrap();
    let o = atlas(dir.path(), &["all", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("max_features"));
    assert!(!dir.path().join("out").exists());
    std::fs::write(dir.path().join("typo.toml"), "inputs = [\"corpus.jsonl\"]\nperplexity = 3\n").unwrap();
    assert_eq!(atlas(dir.path(), &["all", "--config", "typo.toml"]).status.code(), Some(1));
    // data
    std::fs::write(dir.path().join("missing.toml"), "inputs = [\"nope.jsonl\"]\n").unwrap();
    assert_eq!(atlas(dir.path(), &["ingest", "--config", "missing.toml"]).status.code(), Some(2));
    // internal: output directory cannot be created
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let o = atlas(dir.path(), &["ingest", "--config", "atlas.toml", "--out", "blocker/sub"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn stale_cache_is_reported() {
    let dir = workspace();
    assert!(atlas(dir.path(), &["all", "--config", "atlas.toml"]).status.success());
    let o = atlas(dir.path(), &["export", "--config", "atlas.toml", "--seed", "6"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stale"), "{}", stderr(&o));
}

#[test]
fn json_config_works_too() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("atlas.json"),
        r#"{"inputs": ["corpus.jsonl"], "k": 3, "out_dir": "out",
            "tsne": {"perplexity": 3.0, "learning_rate": 10.0, "n_iter": 300}}"#,
    )
    .unwrap();
    let o = atlas(dir.path(), &["all", "--config", "atlas.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_atlas(&atlas_path(dir.path())).unwrap().points.len(), 15);
}
