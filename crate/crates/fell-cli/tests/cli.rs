use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fellbench-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fellbench"));
    cmd.args(args).env_remove("FB_SEED");
    if let Some(s) = seed {
        cmd.env("FB_SEED", s);
    }
    cmd.output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad report ({e}): {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn gen(dir: &Path, preset: &str, params: &[&str]) -> PathBuf {
    let mut args = vec!["gen", preset];
    args.extend_from_slice(params);
    let d = dir.to_str().unwrap();
    args.extend_from_slice(&["--out", d]);
    let out = run(&args, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    dir.join(r["metrics"]["name"].as_str().unwrap())
}

fn file(stem: &Path, kind: &str) -> String {
    format!("{}.{kind}.json", stem.display())
}

fn json(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_then_validate_passes() {
    let dir = scratch("gen");
    let stem = gen(&dir, "symmetric-inverse-monoid", &["2"]);
    let b = json(&file(&stem, "bundle"));
    assert_eq!(b["semigroup"]["size"], 7);
    let out = run(&["validate", &file(&stem, "bundle")], None);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["command"], "validate");
    assert_eq!(r["verdict"], "pass");
    assert_eq!(r["tolerances"]["tol"], 1e-9);
    assert!(r["inputs_digest"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn every_preset_generates_a_valid_bundle() {
    let dir = scratch("presets");
    for (preset, params) in [
        ("trivial-group", vec!["3"]),
        ("pair-groupoid", vec!["3"]),
        ("semilattice-chain", vec!["3"]),
        ("group-zero-line", vec!["2", "2"]),
        ("random", vec!["4"]),
    ] {
        let stem = gen(&dir, preset, &params);
        let out = run(&["validate", &file(&stem, "bundle")], None);
        assert_eq!(out.status.code(), Some(0), "{preset}");
    }
}

#[test]
fn algebras_of_i2() {
    let dir = scratch("i2");
    let stem = gen(&dir, "symmetric-inverse-monoid", &["2"]);
    let out = run(&["algebras", &file(&stem, "bundle"), "--which", "both"], None);
    assert_eq!(out.status.code(), Some(0));
    let s = &report(&out)["metrics"]["summary"];
    assert_eq!(s["env_dim"], 7);
    assert_eq!(s["red_dim"], 7);
    let mut blocks: Vec<u64> = s["env_blocks"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    blocks.sort_unstable_by(|a, b| b.cmp(a));
    assert_eq!(blocks, vec![2, 1, 1, 1]);
    assert_eq!(s["red_blocks"], s["env_blocks"]);
}

#[test]
fn algebras_of_cyclic_group() {
    let dir = scratch("z3");
    let stem = gen(&dir, "trivial-group", &["3"]);
    let out = run(&["algebras", &file(&stem, "bundle")], None);
    assert_eq!(out.status.code(), Some(0));
    let s = &report(&out)["metrics"]["summary"];
    assert_eq!(s["red_dim"], 3);
    assert_eq!(s["env_dim"], 3);
    assert_eq!(s["red_blocks"], serde_json::json!([1, 1, 1]));
}

#[test]
fn corrupted_entry_fails_validation() {
    let dir = scratch("corrupt");
    let stem = gen(&dir, "symmetric-inverse-monoid", &["2"]);
    let mut b = json(&file(&stem, "bundle"));
    b["fibers"][2]["basis"][0][0][0][0] = serde_json::json!(0.5);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, b.to_string()).unwrap();
    let out = run(&["validate", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["verdict"], "fail");
}

#[test]
fn malformed_input_is_an_input_error() {
    let dir = scratch("malformed");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\"name\": ").unwrap();
    let out = run(&["validate", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
    let missing = dir.join("missing.json");
    assert_eq!(run(&["validate", missing.to_str().unwrap()], None).status.code(), Some(2));
    let stem = gen(&dir, "trivial-group", &["2"]);
    let mut b = json(&file(&stem, "bundle"));
    b["semigroup"]["mult"][1][1] = serde_json::json!(7);
    std::fs::write(&bad, b.to_string()).unwrap();
    assert_eq!(run(&["validate", bad.to_str().unwrap()], None).status.code(), Some(2));
    assert_eq!(run(&["gen", "no-such-preset", "1"], None).status.code(), Some(2));
}

#[test]
fn synthesized_witness_round_trips() {
    let dir = scratch("ap");
    let stem = gen(&dir, "pair-groupoid", &["3"]);
    let w = dir.join("w.json");
    let out = run(
        &["ap", &file(&stem, "bundle"), "--synth", &file(&stem, "action"), "--emit", w.to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["metrics"]["bound"].as_f64().unwrap() <= 1.0 + 1e-9);
    assert!(r["metrics"]["defect"].as_f64().unwrap() <= 1e-8);
    let out = run(&["ap", &file(&stem, "bundle"), "--witness", w.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_section_label_is_rejected() {
    let dir = scratch("badsec");
    let stem = gen(&dir, "symmetric-inverse-monoid", &["2"]);
    let w = dir.join("w.json");
    run(&["ap", &file(&stem, "bundle"), "--synth", &file(&stem, "action"), "--emit", w.to_str().unwrap()], None);
    let mut wj = json(w.to_str().unwrap());
    wj["sections"][0][0]["s"] = serde_json::json!(99);
    std::fs::write(&w, wj.to_string()).unwrap();
    let out = run(&["ap", &file(&stem, "bundle"), "--witness", w.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert!(r["error"].as_str().unwrap().contains("99"));
}

#[test]
fn carrier_rep_is_absorbed() {
    let dir = scratch("absorb");
    let stem = gen(&dir, "group-zero-line", &["2", "2"]);
    let out = run(&["absorb", &file(&stem, "bundle"), &file(&stem, "rep")], None);
    assert_eq!(out.status.code(), Some(0));
    let m = &report(&out)["metrics"];
    assert_eq!(m["pi_lambda_dim"], m["reduced_dim"]);
}

#[test]
fn degenerate_rep_fails() {
    let dir = scratch("degenerate");
    let stem = gen(&dir, "symmetric-inverse-monoid", &["2"]);
    let mut rep = json(&file(&stem, "rep"));
    for entry in rep["maps"].as_array_mut().unwrap() {
        for img in entry["images"].as_array_mut().unwrap() {
            for row in img.as_array_mut().unwrap() {
                for x in row.as_array_mut().unwrap() {
                    *x = serde_json::json!([0.0, 0.0]);
                }
            }
        }
    }
    let path = dir.join("zero.rep.json");
    std::fs::write(&path, rep.to_string()).unwrap();
    let out = run(&["absorb", &file(&stem, "bundle"), path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["verdict"], "fail");
}

#[test]
fn reports_are_deterministic_under_fb_seed() {
    let a = scratch("seed-a");
    let b = scratch("seed-b");
    let ra = run(&["gen", "random", "--out", a.to_str().unwrap()], Some("11"));
    let rb = run(&["gen", "random", "--out", b.to_str().unwrap()], Some("11"));
    assert_eq!(report(&ra)["seed"], 11);
    assert_eq!(report(&ra)["verdict"], report(&rb)["verdict"]);
    assert_eq!(report(&ra)["metrics"]["name"], "random-11");
    assert_eq!(
        std::fs::read(a.join("random-11.bundle.json")).unwrap(),
        std::fs::read(b.join("random-11.bundle.json")).unwrap()
    );
    let bundle = a.join("random-11.bundle.json");
    let x = run(&["algebras", bundle.to_str().unwrap()], Some("3"));
    let y = run(&["algebras", bundle.to_str().unwrap()], Some("3"));
    assert_eq!(x.stdout, y.stdout);
    assert_eq!(run(&["validate", bundle.to_str().unwrap()], Some("x")).status.code(), Some(2));
}
