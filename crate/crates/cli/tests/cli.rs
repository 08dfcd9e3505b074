use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoforensics::{command, read_scores, read_splits, run};
use geoforensics_core::corpus::{load_manifest, read_cache};
use geoforensics_core::cues::LINE_FEATURES;
use geoforensics_core::eval::SplitCategory;
use tempfile::TempDir;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoforensics"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GEOFORENSICS_SEED")
        .output()
        .expect("spawn binary")
}

fn ok(args: &[&str]) {
    let mut argv = vec!["geoforensics"];
    argv.extend_from_slice(args);
    assert_eq!(run(&argv), 0, "command failed: {args:?}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn corpus(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("corpus");
    ok(&["synth", "--out", p(&out), "--n-real", &n.to_string(), "--n-gen", &n.to_string()]);
    out.join("manifest.txt")
}

#[test]
fn help_exits_zero() {
    let d = TempDir::new().unwrap();
    let o = bin(&["--help"], d.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("extract"));
}

#[test]
fn eval_without_manifest_is_usage_error() {
    let d = TempDir::new().unwrap();
    let o = bin(&["eval", "--scores", "ls=x.csv", "--out", "r"], d.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--manifest") && err.contains("Usage"), "{err}");
}

#[test]
fn unknown_flag_is_usage_error() {
    let d = TempDir::new().unwrap();
    let o = bin(&["split", "--manifest", "m.txt", "--out", "s.csv", "--bogus"], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn semantic_flag_errors_are_usage_errors() {
    let d = TempDir::new().unwrap();
    let o = bin(&["split", "--manifest", "m.txt", "--out", "s.csv", "--band", "0.7"], d.path());
    assert_eq!(o.status.code(), Some(1));
    let o = bin(&["eval", "--manifest", "m.txt", "--scores", "noequals", "--out", "r"], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_file_is_data_error_naming_path() {
    let d = TempDir::new().unwrap();
    let o = bin(&["split", "--manifest", "no_such_manifest.txt", "--out", "s.csv"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_manifest.txt"));
}

#[test]
fn every_flag_is_listed_in_help_with_its_default() {
    let mut root = command();
    root.build();
    for sub in root.get_subcommands() {
        let help = sub.clone().render_long_help().to_string();
        for arg in sub.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            assert!(help.contains(&format!("--{long}")), "{}: --{long} missing from help", sub.get_name());
            let takes_value = arg.get_num_args().is_some_and(|n| n.takes_values());
            let has_default = !arg.get_default_values().is_empty();
            if takes_value && !arg.is_required_set() && !has_default {
                let text = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
                let is_dump = long.starts_with("dump-");
                assert!(
                    is_dump || text.contains("[default:"),
                    "{}: --{long} has no default in help",
                    sub.get_name()
                );
            }
            if has_default && takes_value {
                let shown = arg.get_default_values()[0].to_string_lossy().into_owned();
                assert!(help.contains(&format!("[default: {shown}]")), "{}: --{long} default not shown", sub.get_name());
            }
        }
    }
}

#[test]
fn extract_lines_gives_one_row_per_image() {
    let d = TempDir::new().unwrap();
    let m = corpus(d.path(), 5);
    let out = d.path().join("feat");
    ok(&["extract", "--manifest", p(&m), "--out", p(&out), "--cue", "lines"]);
    let cache = read_cache(&out.join("features.csv")).unwrap();
    assert_eq!(cache.rows.len(), 10);
    assert_eq!(cache.columns, LINE_FEATURES.map(String::from).to_vec());
    assert!(out.join("segments").join("real_00000.txt").exists());
    assert!(!out.join("fields").exists());
    assert!(out.join("provenance.json").exists());
}

#[test]
fn dumps_have_documented_layout() {
    let d = TempDir::new().unwrap();
    let m = corpus(d.path(), 2);
    let out = d.path().join("feat");
    let dd = |n: &str| d.path().join(n);
    ok(&[
        "extract",
        "--manifest",
        p(&m),
        "--out",
        p(&out),
        "--dump-segments",
        p(&dd("seg")),
        "--dump-vps",
        p(&dd("vps")),
        "--dump-field",
        p(&dd("field")),
        "--dump-shadows",
        p(&dd("sh")),
    ]);
    let seg = fs::read_to_string(dd("seg").join("real_00000.txt")).unwrap();
    assert!(seg.lines().count() > 0);
    assert!(seg.lines().all(|l| l.split_whitespace().count() == 6));
    let vps = fs::read_to_string(dd("vps").join("real_00000.txt")).unwrap();
    assert!(vps.lines().all(|l| l.split_whitespace().count() == 4));
    let field = fs::read_to_string(dd("field").join("real_00000.txt")).unwrap();
    let mut lines = field.lines();
    assert_eq!(lines.next(), Some("8 8"));
    assert_eq!(lines.filter(|l| l.split_whitespace().count() == 3).count(), 64);
    let sh = fs::read_to_string(dd("sh").join("real_00000.txt")).unwrap();
    let rows: Vec<&str> = sh.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[..3].iter().all(|l| l.split_whitespace().count() == 2));
    assert_eq!(rows[3].split_whitespace().count(), 3);
    assert!(rows[3].starts_with('1'));
}

#[test]
fn parallel_extract_matches_serial() {
    let d = TempDir::new().unwrap();
    let m = corpus(d.path(), 4);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["extract", "--manifest", p(&m), "--out", p(&a), "--jobs", "1"]);
    ok(&["extract", "--manifest", p(&m), "--out", p(&b), "--jobs", "4"]);
    for f in ["features.csv", "dims.csv", "segments/gen_00003.txt", "fields/real_00001.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_comes_from_environment() {
    let d = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_geoforensics"))
        .args(["synth", "--out", "c", "--n-real", "1", "--n-gen", "1"])
        .current_dir(d.path())
        .env("GEOFORENSICS_SEED", "977")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("c/provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["seed"], 977);
    assert_eq!(prov["command"], "synth");
}

#[test]
fn split_writes_a_partition() {
    let d = TempDir::new().unwrap();
    let m = corpus(d.path(), 10);
    let s = d.path().join("splits.csv");
    ok(&["split", "--manifest", p(&m), "--out", p(&s), "--band", "0.2"]);
    let a = read_splits(&s).unwrap();
    let manifest = load_manifest(&m).unwrap();
    assert_eq!(a.len(), manifest.entries.len());
    for (x, e) in a.iter().zip(&manifest.entries) {
        assert_eq!(x.id, e.id);
        assert_ne!(x.category, SplitCategory::Unscored);
    }
    assert!(s.with_extension("csv.provenance.json").exists());
}

#[test]
fn end_to_end_pipeline_produces_summary() {
    let d = TempDir::new().unwrap();
    let m = corpus(d.path(), 8);
    let f = d.path().join("feat");
    ok(&["extract", "--manifest", p(&m), "--out", p(&f), "--jobs", "2"]);
    let model = |n: &str| d.path().join(n);
    let common = |learner: &str, out: &Path| -> Vec<String> {
        ["train", "--manifest", p(&m), "--features", p(&f), "--learner", learner, "--out", p(out), "--epochs", "5"]
            .map(String::from)
            .to_vec()
    };
    for (learner, name) in [("set", "ls"), ("grid", "pf")] {
        let argv: Vec<String> = std::iter::once("geoforensics".to_string()).chain(common(learner, &model(name))).collect();
        assert_eq!(run(&argv), 0);
    }
    let mut os = common("lr", &model("os"));
    os.extend(["--columns", "shadow"].map(String::from));
    assert_eq!(run(std::iter::once("geoforensics".to_string()).chain(os)), 0);
    let mut scores = Vec::new();
    for n in ["ls", "pf", "os"] {
        let out = d.path().join(format!("{n}.csv"));
        ok(&["predict", "--manifest", p(&m), "--features", p(&f), "--model", p(&model(n)), "--out", p(&out)]);
        let rows = read_scores(&out).unwrap();
        assert_eq!(rows.len(), 16);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.score)));
        scores.push(format!("{n}={}", p(&out)));
    }
    let r = d.path().join("report");
    let mut argv = vec!["eval", "--manifest", p(&m), "--out", p(&r), "--svg"];
    for s in &scores {
        argv.extend(["--scores", s.as_str()]);
    }
    ok(&argv);
    let summary = fs::read_to_string(r.join("summary.csv")).unwrap();
    assert!(summary.starts_with("cue,split,auc,n_real,n_generated\n"));
    assert!(summary.contains("ls,all,") && summary.contains("pf,all,") && summary.contains("os,all,"));
    assert!(r.join("roc_all_os.csv").exists());
    assert!(r.join("roc_all.svg").exists());
    let agreement = fs::read_to_string(r.join("agreement.txt")).unwrap();
    assert!(agreement.contains("total 8"), "{agreement}");

    let sal = d.path().join("sal.csv");
    ok(&["saliency", "--features", p(&f), "--model", p(&model("ls")), "--id", "gen_00000", "--out", p(&sal)]);
    let text = fs::read_to_string(&sal).unwrap();
    let n_segments = fs::read_to_string(f.join("segments/gen_00000.txt")).unwrap().lines().count();
    assert_eq!(text.lines().count(), n_segments + 1);
    assert!(text.lines().skip(1).any(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() > 0.0));
}

#[test]
fn holdout_selections_are_disjoint_and_cover_the_manifest() {
    let d = TempDir::new().unwrap();
    let m = corpus(d.path(), 10);
    let f = d.path().join("feat");
    ok(&["extract", "--manifest", p(&m), "--out", p(&f), "--cue", "shadow"]);
    let model = d.path().join("os.model");
    ok(&[
        "train", "--manifest", p(&m), "--features", p(&f), "--learner", "lr", "--columns", "shadow", "--out", p(&model),
        "--holdout", "0.3",
    ]);
    let test = d.path().join("test.csv");
    let all = d.path().join("all.csv");
    ok(&["predict", "--manifest", p(&m), "--features", p(&f), "--model", p(&model), "--out", p(&test), "--holdout", "0.3"]);
    ok(&["predict", "--manifest", p(&m), "--features", p(&f), "--model", p(&model), "--out", p(&all)]);
    assert_eq!(read_scores(&test).unwrap().len(), 6);
    assert_eq!(read_scores(&all).unwrap().len(), 20);
}

#[test]
fn wrong_learner_flag_combination_is_usage_error() {
    let d = TempDir::new().unwrap();
    let o = bin(
        &["train", "--manifest", "m", "--features", "f", "--learner", "grid", "--out", "o", "--subset-sampling"],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}
