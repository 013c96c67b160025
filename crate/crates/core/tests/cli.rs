//! The `rapnet` binary: exit codes, flag handling and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn rapnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rapnet"))
        .args(args)
        .env_remove("RAPNET_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    synth_sized(dir, "16", extra)
}

fn synth_sized(dir: &Path, size: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(dir), "--count", "3", "--test-count", "1", "--size", size, "--bands", "3", "--ratio", "2"];
    args.extend_from_slice(extra);
    let out = rapnet(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

fn quick_train(manifest: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--manifest",
        p(manifest),
        "--out",
        p(out),
        "--set",
        "network.features=4",
        "--set",
        "train.epochs=2",
        "--set",
        "train.batch_size=2",
    ];
    args.extend_from_slice(extra);
    rapnet(&args)
}

#[test]
fn help_lists_every_flag() {
    let top = String::from_utf8(rapnet(&["--help"]).stdout).unwrap();
    for cmd in ["train", "fuse", "eval-reduced", "eval-full", "ablate", "gradcheck", "simulate", "synth"] {
        assert!(top.contains(cmd), "{cmd} missing from --help");
    }
    for flag in ["--threads", "--seed", "--verbose"] {
        assert!(top.contains(flag), "{flag} missing from --help");
    }
    let cases: &[(&str, &[&str])] = &[
        ("train", &["--config", "--set", "--manifest", "--out", "--threads", "--seed"]),
        ("fuse", &["--checkpoint", "--pan", "--ms", "--out", "--radiometric-max", "--png", "--png-bands"]),
        ("eval-reduced", &["--checkpoint", "--manifest", "--role", "--out", "--fused", "--reference", "--ratio"]),
        ("eval-full", &["--checkpoint", "--manifest", "--fused", "--ms-file", "--pan-file", "--ratio"]),
        ("ablate", &["--config", "--set", "--manifest", "--out"]),
        ("gradcheck", &["--scope", "--seeds"]),
        ("simulate", &["--hrms", "--pan", "--ratio", "--out", "--gnyq", "--pan-gnyq", "--radiometric-max", "--role"]),
    ];
    for (cmd, flags) in cases {
        let out = rapnet(&[cmd, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8(out.stdout).unwrap();
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&rapnet(&[])), 1);
    assert_eq!(code(&rapnet(&["gradcheck", "--frobnicate"])), 1);
    assert_eq!(code(&rapnet(&["fuse", "--pan", "a.npy"])), 1);
    assert_eq!(code(&rapnet(&["gradcheck", "--scope", "everything"])), 1);
    assert_eq!(code(&rapnet(&["--threads", "many", "gradcheck"])), 1);
}

#[test]
fn config_errors_exit_1_and_data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &[]);
    let manifest = data.join("manifest.json");

    let out = quick_train(&manifest, &dir.path().join("a"), &["--set", "train.lr=-1"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = quick_train(&manifest, &dir.path().join("a"), &["--set", "train.no_such_key=1"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    let out = quick_train(&dir.path().join("missing.json"), &dir.path().join("b"), &[]);
    assert_eq!(code(&out), 2);
    std::fs::write(dir.path().join("bad.npy"), b"definitely not numpy").unwrap();
    let out = rapnet(&[
        "eval-reduced",
        "--fused",
        p(&dir.path().join("bad.npy")),
        "--reference",
        p(&data.join("synth_000_ref.npy")),
        "--ratio",
        "2",
        "--out",
        p(&dir.path().join("ev")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("magic"), "{}", stderr(&out));
}

#[test]
fn fuse_rejects_mismatched_inputs_with_both_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &[]);
    let run = dir.path().join("run");
    assert_eq!(code(&quick_train(&data.join("manifest.json"), &run, &[])), 0);

    let other = dir.path().join("other");
    let out = rapnet(&["synth", "--out", p(&other), "--count", "1", "--size", "16", "--bands", "4", "--ratio", "4"]);
    assert_eq!(code(&out), 0);
    let out = rapnet(&[
        "fuse",
        "--checkpoint",
        p(&run.join("final.rapn")),
        "--pan",
        p(&other.join("synth_000_pan.npy")),
        "--ms",
        p(&other.join("synth_000_ms.npy")),
        "--out",
        p(&dir.path().join("f.npy")),
    ]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("3 bands at ratio 2") && msg.contains("4 bands at ratio 4"), "{msg}");
}

#[test]
fn divergent_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &[]);
    let out = quick_train(&data.join("manifest.json"), &dir.path().join("run"), &["--set", "train.lr=1e30", "--set", "train.epochs=20"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("numeric"), "{}", stderr(&out));
}

#[test]
fn gradcheck_passes_for_ops() {
    let out = rapnet(&["gradcheck", "--scope", "ops", "--seeds", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("conv2d") && text.contains("all "), "{text}");
}

#[test]
fn reruns_are_byte_identical_and_threads_come_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--seed", "4"]);
    let again = dir.path().join("again");
    synth(&again, &["--seed", "4"]);
    for f in ["synth_000_pan.npy", "synth_002_ms.npy", "synth_003_ref.npy", "manifest.json"] {
        assert_eq!(std::fs::read(data.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    let manifest = data.join("manifest.json");
    let a = dir.path().join("a");
    assert_eq!(code(&quick_train(&manifest, &a, &["--seed", "5", "--threads", "1"])), 0);
    let b = dir.path().join("b");
    let out = Command::new(env!("CARGO_BIN_EXE_rapnet"))
        .args(["train", "--manifest", p(&manifest), "--out", p(&b), "--seed", "5"])
        .args(["--set", "network.features=4", "--set", "train.epochs=2", "--set", "train.batch_size=2"])
        .env("RAPNET_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["loss.csv", "final.rapn", "config.toml", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let cfg = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(cfg.contains("seed = 5") && cfg.contains("bands = 3"), "{cfg}");

    let out = Command::new(env!("CARGO_BIN_EXE_rapnet"))
        .args(["gradcheck", "--scope", "rapconv", "--seeds", "1"])
        .env("RAPNET_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    // large enough for the default 32-pixel Q2n block
    synth_sized(&data, "32", &[]);
    let sim = dir.path().join("sim");
    let out = rapnet(&[
        "simulate",
        "--hrms",
        p(&data.join("synth_000_ref.npy")),
        "--pan",
        p(&data.join("synth_000_pan.npy")),
        "--ratio",
        "2",
        "--gnyq",
        "0.3,0.28,0.25",
        "--role",
        "test",
        "--out",
        p(&sim),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = std::fs::read_to_string(sim.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"test\"") && manifest.contains("sim_000_ref.npy"), "{manifest}");

    let run = dir.path().join("run");
    assert_eq!(code(&quick_train(&data.join("manifest.json"), &run, &[])), 0);
    let ev = dir.path().join("ev");
    for cmd in ["eval-reduced", "eval-full"] {
        let out = rapnet(&[
            cmd,
            "--checkpoint",
            p(&run.join("final.rapn")),
            "--manifest",
            p(&sim.join("manifest.json")),
            "--out",
            p(&ev),
        ]);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }
    let reduced = std::fs::read_to_string(ev.join("reduced.csv")).unwrap();
    assert!(reduced.starts_with("image,ERGAS,SAM,Q2n,SCC"), "{reduced}");
    assert!(reduced.lines().last().unwrap().starts_with("summary,"));
    let full: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ev.join("full.json")).unwrap()).unwrap();
    assert_eq!(full["metrics"][2], "QNR");

    // reduced-resolution scoring of a pair without reference is a data error
    let noref = dir.path().join("noref.json");
    std::fs::write(
        &noref,
        format!(
            "{{\"ratio\": 2, \"entries\": [{{\"role\": \"test\", \"pan\": \"{}\", \"ms\": \"{}\"}}]}}",
            p(&sim.join("sim_000_pan.npy")),
            p(&sim.join("sim_000_ms.npy"))
        ),
    )
    .unwrap();
    let out = rapnet(&["eval-reduced", "--checkpoint", p(&run.join("final.rapn")), "--manifest", p(&noref), "--out", p(&ev)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("reference"));
}
