//! Acceptance suite: one PASS/FAIL line per criterion, each with its pinned
//! tolerance and runtime budget. Runs without the libtest harness so the
//! lines always reach the console and the memory reading is not shared
//! with concurrently running tests.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rapnet::autodiff::suite::{run_suite, Scope};
use rapnet::autodiff::Eager;
use rapnet::cli::commands::dataset_mse;
use rapnet::data::{synth_dataset, write_dataset, DegradeSpec, Role};
use rapnet::metrics::{ergas, q2n, qnr, sam, scc};
use rapnet::network::{load_checkpoint, save_checkpoint, NetworkConfig, RapNet};
use rapnet::rapconv::{GhbmConfig, RapConv, RapConvMode};
use rapnet::tensor::{avg_pool_same, conv2d, upsample, UpsampleMode};
use rapnet::training::{train, TrainConfig};
use rapnet::{ConvSpec, Tensor};

use common::{max_abs_diff, naive_avg_pool, naive_bilinear, naive_conv, uiqi_tiles};

const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: [u64; 3] = [0, 1, 2];
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const DEGENERATE_TOL: f64 = 1e-12;
const DEGENERATE_CASES: usize = 100;
const IDENTITY_TOL: f64 = 1e-9;
const UIQI_PAIRS: usize = 50;
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const OVERFIT_STEPS: usize = 500;
const OVERFIT_MSE: f64 = 1e-3;
const OVERFIT_BUDGET: Duration = Duration::from_secs(300);
const MEMORY_LIMIT_KB: u64 = 4 * 1024 * 1024;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn lib<T>(r: rapnet::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("criterion {id} {name:<34} PASS  {detail} [{secs:.1}s]"),
        Err(detail) => println!("criterion {id} {name:<34} FAIL  {detail} [{secs:.1}s]"),
    }
    outcome.is_ok()
}

fn gradients() -> Check {
    let t = Instant::now();
    let rows = lib(run_suite(Scope::All, &GRAD_SEEDS))?;
    let elapsed = t.elapsed();
    for required in ["rapconv layer", "network mse"] {
        ensure(rows.iter().any(|r| r.name == required), format!("{required} missing from the battery"))?;
    }
    let worst = rows.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    ensure(
        worst.max_rel_error < GRAD_TOL,
        format!("{} seed {}: {:.3e} ≥ {GRAD_TOL:e}", worst.name, worst.seed, worst.max_rel_error),
    )?;
    ensure(elapsed < GRAD_BUDGET, format!("took {elapsed:?}, budget {GRAD_BUDGET:?}"))?;
    let component = rows.iter().map(|r| r.max_component_error).fold(0.0, f64::max);
    Ok(format!(
        "{} checks, worst {:.2e} ({}) < {GRAD_TOL:e}; worst single component {component:.1e}",
        rows.len(),
        worst.max_rel_error,
        worst.name
    ))
}

fn degeneracy() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..DEGENERATE_CASES {
        let (c, p) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let ghbm = GhbmConfig {
            depth: rng.gen_range(2..4),
            width: Some(rng.gen_range(1..6)),
        };
        let layer = lib(RapConv::<Tensor<f64>>::random(c, p, &ghbm, 1.0, &mut rng))?;
        let x = Tensor::rand_uniform([rng.gen_range(1..3), c, rng.gen_range(1..11), rng.gen_range(1..11)], -2.0, 2.0, &mut rng);
        let out = lib(layer.forward(&Eager, &x, RapConvMode::DegenerateTest))?;
        let spec = ConvSpec::same(c, p, 3);
        let plain = lib(conv2d(&x, &layer.base_kernel, None, &spec))?;
        let naive = naive_conv(&x, &layer.base_kernel, None, &spec);
        worst = worst.max(max_abs_diff(&out, &plain)).max(max_abs_diff(&out, &naive));
    }
    ensure(worst < DEGENERATE_TOL, format!("max |diff| {worst:e} ≥ {DEGENERATE_TOL:e}"))?;
    Ok(format!("{DEGENERATE_CASES} instances, max |diff| {worst:.1e} < {DEGENERATE_TOL:e}"))
}

fn metric_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for bands in [1, 2, 3, 4, 8] {
        let x: Tensor<f64> = Tensor::rand_uniform([1, bands, 32, 32], 0.05, 1.0, &mut rng);
        let e = lib(ergas(&x, &x, 4))?;
        // a spectral angle needs at least two bands
        let a = if bands > 1 { lib(sam(&x, &x))?.value } else { 0.0 };
        let c = lib(scc(&x, &x))?.value;
        let q = lib(q2n(&x, &x, 16, 16))?;
        ensure(e.abs() < IDENTITY_TOL, format!("ergas(x,x) = {e:e} for {bands} bands"))?;
        ensure(a.abs() < IDENTITY_TOL, format!("sam(x,x) = {a:e} for {bands} bands"))?;
        ensure((c - 1.0).abs() < IDENTITY_TOL, format!("scc(x,x) = {c} for {bands} bands"))?;
        ensure((q - 1.0).abs() < IDENTITY_TOL, format!("q2n(x,x) = {q} for {bands} bands"))?;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..UIQI_PAIRS {
        let (h, w) = (rng.gen_range(8..41), rng.gen_range(8..41));
        let block = rng.gen_range(4..=h.min(w));
        let shift = rng.gen_range(1..=block);
        let x: Tensor<f64> = Tensor::rand_uniform([1, 1, h, w], 0.1, 1.0, &mut rng);
        let noise: Tensor<f64> = Tensor::rand_uniform([1, 1, h, w], -0.3, 0.3, &mut rng);
        let gain = rng.gen_range(0.5..1.5);
        let y = lib(x.zip_map(&noise, |a, n| gain * a + n + 0.2))?;
        let ours = lib(q2n(&x, &y, block, shift))?;
        let oracle = uiqi_tiles(x.data(), y.data(), h, w, block, shift);
        worst = worst.max((ours - oracle).abs());
    }
    ensure(worst < IDENTITY_TOL, format!("single-band q2n vs UIQI differs by {worst:e}"))?;
    let q = qnr(0.0, 0.0);
    ensure(q == 1.0, format!("qnr(0, 0) = {q}"))?;
    Ok(format!("identities < {IDENTITY_TOL:e}; {UIQI_PAIRS} UIQI pairs, max |diff| {worst:.1e}; QNR = 1"))
}

fn oracles() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut conv_worst, mut pool_worst, mut up_worst): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut grouped = 0;
    for _ in 0..300 {
        let groups = rng.gen_range(1..4);
        let (cg, pg) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let kernel: (usize, usize) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let padding: (usize, usize) = (rng.gen_range(0..3), rng.gen_range(0..3));
        let stride = rng.gen_range(1..4);
        // border cases: images down to the kernel size minus padding
        let h = rng.gen_range((kernel.0.saturating_sub(2 * padding.0)).max(1)..10);
        let w = rng.gen_range((kernel.1.saturating_sub(2 * padding.1)).max(1)..10);
        let spec = ConvSpec {
            in_channels: groups * cg,
            out_channels: groups * pg,
            kernel,
            stride,
            padding,
            groups,
        };
        let x = Tensor::rand_uniform([rng.gen_range(1..3), groups * cg, h, w], -1.0, 1.0, &mut rng);
        let wt = Tensor::rand_uniform(spec.weight_shape(), -1.0, 1.0, &mut rng);
        let b = Tensor::rand_uniform(spec.bias_shape(), -1.0, 1.0, &mut rng);
        let ours = lib(conv2d(&x, &wt, Some(&b), &spec))?;
        conv_worst = conv_worst.max(max_abs_diff(&ours, &naive_conv(&x, &wt, Some(&b), &spec)));
        grouped += usize::from(groups > 1);
    }
    for _ in 0..200 {
        let k = [1, 3, 5, 7][rng.gen_range(0..4)];
        let x = Tensor::rand_uniform([rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..12), rng.gen_range(1..12)], -1.0, 1.0, &mut rng);
        pool_worst = pool_worst.max(max_abs_diff(&lib(avg_pool_same(&x, k))?, &naive_avg_pool(&x, k)));
        let r = rng.gen_range(1..6);
        up_worst = up_worst.max(max_abs_diff(&lib(upsample(&x, r, UpsampleMode::Bilinear))?, &naive_bilinear(&x, r)));
    }
    let elapsed = t.elapsed();
    ensure(grouped > 0, "no grouped cases drawn")?;
    ensure(conv_worst < ORACLE_TOL, format!("conv2d differs by {conv_worst:e}"))?;
    ensure(pool_worst < ORACLE_TOL, format!("avg_pool_same differs by {pool_worst:e}"))?;
    ensure(up_worst < ORACLE_TOL, format!("bilinear upsample differs by {up_worst:e}"))?;
    ensure(elapsed < ORACLE_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "conv {conv_worst:.1e} ({grouped}/300 grouped), pool {pool_worst:.1e}, upsample {up_worst:.1e} < {ORACLE_TOL:e}"
    ))
}

fn toy_overfit() -> Check {
    let t = Instant::now();
    let data = lib(synth_dataset::<f32>(0, 16, 32, 4, &DegradeSpec::with_ratio(4)))?;
    let net = NetworkConfig {
        bands: 4,
        features: 16,
        ratio: 4,
        ..NetworkConfig::default()
    };
    let cfg = TrainConfig {
        lr: 2.5e-4,
        batch_size: 4,
        epochs: OVERFIT_STEPS.div_ceil(4),
        max_steps: Some(OVERFIT_STEPS),
        seed: 0,
        ..TrainConfig::default()
    };
    let outcome = lib(train(&data, &cfg, lib(cfg.init_network(net))?, None))?;
    let mse = lib(dataset_mse(&outcome.params, &data))?;
    let elapsed = t.elapsed();
    ensure(outcome.steps.len() == OVERFIT_STEPS, format!("ran {} steps", outcome.steps.len()))?;
    ensure(mse < OVERFIT_MSE, format!("training MSE {mse:.3e} ≥ {OVERFIT_MSE:e}"))?;
    ensure(elapsed < OVERFIT_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "training MSE {mse:.3e} < {OVERFIT_MSE:e} after {OVERFIT_STEPS} steps (first step {:.3e})",
        outcome.steps[0].loss
    ))
}

fn rapnet_bin(args: &[&str]) -> std::result::Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rapnet"))
        .args(args)
        .env_remove("RAPNET_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("rapnet {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn toy_dataset(dir: &Path, train_pairs: usize, test_pairs: usize) -> std::result::Result<(), String> {
    let pairs = lib(synth_dataset::<f32>(5, train_pairs + test_pairs, 32, 4, &DegradeSpec::with_ratio(4)))?;
    let tagged: Vec<_> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (if i < train_pairs { Role::Train } else { Role::Test }, p))
        .collect();
    lib(write_dataset(dir, "toy", &tagged))?;
    Ok(())
}

fn ablation() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    toy_dataset(&data, 6, 1)?;
    let out = tmp.path().join("ablate");
    let manifest = data.join("manifest.json");
    rapnet_bin(&[
        "ablate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "17",
        "--set",
        "network.features=8",
        "--set",
        "train.epochs=3",
        "--set",
        "train.batch_size=3",
    ])?;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()));
    let cmp: serde_json::Value = serde_json::from_str(&read(&out.join("comparison.json"))?).map_err(|e| e.to_string())?;
    let full = cmp["full"]["parameters"].as_u64().ok_or("no full parameter count")?;
    let plain = cmp["ablated"]["parameters"].as_u64().ok_or("no ablated parameter count")?;
    ensure(full > plain, format!("parameter counts {full} vs {plain}"))?;
    ensure(cmp["full"]["adaptive"] == true && cmp["ablated"]["adaptive"] == false, "run kinds mislabelled")?;
    for run in ["full", "ablated"] {
        let cfg = read(&out.join(run).join("config.toml"))?;
        ensure(cfg.contains("seed = 17"), format!("{run} run did not use seed 17"))?;
        for f in ["final.rapn", "loss.csv", "test_reduced.json", "test_reduced.csv"] {
            ensure(out.join(run).join(f).is_file(), format!("{run}/{f} missing"))?;
        }
        ensure(cmp[run]["steps"].as_u64() == Some(6), format!("{run} ran {} steps", cmp[run]["steps"]))?;
    }
    let (a, b) = (&cmp["full_test"], &cmp["ablated_test"]);
    ensure(a["metrics"] == b["metrics"], "reports list different metrics")?;
    ensure(a["images"].as_array().map(Vec::len) == Some(1), "held-out report should cover one pair")?;
    ensure(a["images"][0]["name"] == b["images"][0]["name"], "reports cover different pairs")?;
    let q = |r: &serde_json::Value| r["summary"][2]["mean"].as_f64().unwrap_or(f64::NAN);
    Ok(format!("params {full} > {plain}; held-out Q2n {:.4} vs {:.4} (not asserted)", q(a), q(b)))
}

fn determinism() -> Check {
    let data = lib(synth_dataset::<f32>(8, 6, 32, 4, &DegradeSpec::with_ratio(4)))?;
    let net = NetworkConfig {
        bands: 4,
        features: 8,
        ratio: 4,
        ..NetworkConfig::default()
    };
    let cfg = TrainConfig {
        batch_size: 2,
        epochs: 3,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut curves = Vec::new();
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let outcome = pool.install(|| train(&data, &cfg, cfg.init_network(net.clone())?, None));
        let outcome = lib(outcome)?;
        curves.push((outcome.steps.iter().map(|s| s.loss.to_bits()).collect::<Vec<_>>(), outcome.params));
    }
    for (i, (curve, _)) in curves.iter().enumerate().skip(1) {
        ensure(curve == &curves[0].0, format!("loss curve differs between 1 and {} threads", [1, 2, 4][i]))?;
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = tmp.path().join("net.rapn");
    let net = &curves[0].1;
    lib(save_checkpoint(net, &path))?;
    let back = lib(load_checkpoint::<f32>(&path))?;
    let p = &data[0];
    let (a, b) = (lib(net.fuse(&p.pan, &p.ms))?, lib(back.fuse(&p.pan, &p.ms))?);
    ensure(
        a.data().iter().map(|v| v.to_bits()).eq(b.data().iter().map(|v| v.to_bits())),
        "fused output changed after checkpoint round trip",
    )?;

    // the same through the command line, at different --threads
    let ds = tmp.path().join("data");
    toy_dataset(&ds, 4, 0)?;
    let manifest = ds.join("manifest.json");
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("run{threads}"));
        rapnet_bin(&[
            "train",
            "--threads",
            threads,
            "--seed",
            "9",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--set",
            "network.features=8",
            "--set",
            "train.epochs=2",
            "--set",
            "train.batch_size=2",
        ])?;
        let fused = out.join("fused.npy");
        rapnet_bin(&[
            "fuse",
            "--threads",
            threads,
            "--checkpoint",
            out.join("final.rapn").to_str().unwrap(),
            "--pan",
            ds.join("toy_000_pan.npy").to_str().unwrap(),
            "--ms",
            ds.join("toy_000_ms.npy").to_str().unwrap(),
            "--out",
            fused.to_str().unwrap(),
        ])?;
        let bytes = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        files.push((bytes("loss.csv")?, bytes("final.rapn")?, bytes("fused.npy")?));
    }
    ensure(files[0].0 == files[1].0, "CLI loss.csv differs between --threads 1 and 3")?;
    ensure(files[0].1 == files[1].1, "CLI checkpoint differs between --threads 1 and 3")?;
    ensure(files[0].2 == files[1].2, "CLI fused output differs between --threads 1 and 3")?;
    Ok(format!("{} steps bit-identical at 1/2/4 threads; checkpoint→fuse bit-identical; CLI runs match", curves[0].0.len()))
}

fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn paper_scale() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = lib(RapNet::<Tensor<f32>>::init(NetworkConfig::default(), &mut rng))?;
    let pan = Tensor::rand_uniform([1, 1, 256, 256], 0.0, 1.0, &mut rng);
    let ms = Tensor::rand_uniform([1, 8, 64, 64], 0.0, 1.0, &mut rng);
    let out = lib(net.fuse(&pan, &ms))?;
    let s = out.shape();
    ensure((s.n, s.c, s.h, s.w) == (1, 8, 256, 256), format!("output shape {s}"))?;
    ensure(out.all_finite(), "non-finite output")?;
    let peak = peak_rss_kb().ok_or("cannot read VmHWM from /proc/self/status")?;
    ensure(peak < MEMORY_LIMIT_KB, format!("peak resident set {} MiB", peak / 1024))?;
    Ok(format!("output {s}; process peak RSS {} MiB < 4096 MiB", peak / 1024))
}

fn main() {
    // the memory reading is a process high-water mark, so the full-scene
    // forward runs first
    let results = [
        (8, run(8, "shape contract at 256x256x8", paper_scale)),
        (1, run(1, "gradient correctness", gradients)),
        (2, run(2, "degenerate mode equals conv2d", degeneracy)),
        (3, run(3, "metric identities and UIQI oracle", metric_identities)),
        (4, run(4, "conv/pool/upsample oracles", oracles)),
        (5, run(5, "toy overfit", toy_overfit)),
        (6, run(6, "ablation harness", ablation)),
        (7, run(7, "determinism and persistence", determinism)),
    ];
    let failed: Vec<usize> = results.iter().filter(|(_, ok)| !ok).map(|(id, _)| *id).collect();
    if failed.is_empty() {
        println!("acceptance: all 8 criteria pass");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
