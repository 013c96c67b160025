//! Subcommand implementations. Each takes already-parsed arguments and
//! returns a library [`Result`]; the exit code follows from the error kind.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Command, ConfigArgs, EvalInputs, RoleArg};
use crate::autodiff::suite::{run_suite, SuiteRow, GRADCHECK_TOL};
use crate::binio::write_atomic;
use crate::config::RunConfig;
use crate::data::{
    export_png, load_array, save_array, synth_dataset, wald_degrade, write_dataset, DegradeSpec, FusionPair, Manifest, Role,
    Stretch,
};
use crate::error::{Error, Result};
use crate::metrics::{full_res_metrics, reduced_metrics, MetricsConfig, MetricsReport};
use crate::network::{load_checkpoint, save_checkpoint, RapNet};
use crate::params::count;
use crate::tensor::Tensor;
use crate::training::{loss_csv, mse_loss, train};

pub(crate) fn dispatch(cmd: Command, seed: Option<u64>) -> Result<()> {
    match cmd {
        Command::Train { config, manifest, out } => {
            let cfg = load_config(&config, seed)?;
            let s = train_run(&cfg, &manifest, &out)?;
            println!(
                "trained {} parameters for {} steps; final loss {:e}",
                s.parameters, s.steps, s.final_loss
            );
            println!("checkpoint: {}", out.join("final.rapn").display());
            Ok(())
        }
        Command::Fuse {
            checkpoint,
            pan,
            ms,
            out,
            radiometric_max,
            png,
            png_bands,
        } => {
            let net = load_checkpoint::<f32>(&checkpoint)?;
            let fused = fuse_pair(&net, &load_array(&pan)?, &load_array(&ms)?, radiometric_max)?;
            save_array(&out, &fused)?;
            if let Some(p) = png {
                let bands = png_bands.unwrap_or_else(|| default_preview_bands(fused.shape().c));
                export_png(&p, &fused, &bands, Stretch::default())?;
            }
            println!("fused {} -> {}", fused.shape(), out.display());
            Ok(())
        }
        Command::EvalReduced {
            inputs,
            fused,
            reference,
            ratio,
        } => {
            let cfg = load_config(&inputs.config, seed)?;
            let report = if fused.is_empty() {
                let (ckpt, manifest) = manifest_inputs(&inputs)?;
                eval_reduced_manifest(&load_checkpoint(ckpt)?, &Manifest::load(manifest)?, inputs.role, &cfg.metrics)?
            } else {
                let ratio = ratio.ok_or_else(|| Error::Config("--ratio is required with --fused".into()))?;
                eval_reduced_files(&fused, &reference, ratio, &cfg.metrics)?
            };
            print_report(&report, &inputs.out, "reduced")
        }
        Command::EvalFull {
            inputs,
            fused,
            ms,
            pan,
            ratio,
        } => {
            let cfg = load_config(&inputs.config, seed)?;
            let report = if fused.is_empty() {
                let (ckpt, manifest) = manifest_inputs(&inputs)?;
                eval_full_manifest(&load_checkpoint(ckpt)?, &Manifest::load(manifest)?, inputs.role, &cfg.metrics)?
            } else {
                let ratio = ratio.ok_or_else(|| Error::Config("--ratio is required with --fused".into()))?;
                eval_full_files(&fused, &ms, &pan, ratio, &cfg.metrics)?
            };
            print_report(&report, &inputs.out, "full")
        }
        Command::Ablate { config, manifest, out } => {
            let cfg = load_config(&config, seed)?;
            let report = ablate_run(&cfg, &manifest, &out)?;
            for line in report.lines() {
                println!("{line}");
            }
            Ok(())
        }
        Command::Gradcheck { scope, seeds } => {
            let base = seed.unwrap_or(0);
            let seeds: Vec<u64> = (base..base + seeds).collect();
            let rows = run_suite(scope.into(), &seeds)?;
            for r in &rows {
                println!("{}", gradcheck_line(r));
            }
            let failed = rows.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                return Err(Error::Numeric(format!(
                    "{failed} of {} gradient checks exceed {GRADCHECK_TOL:e}",
                    rows.len()
                )));
            }
            println!("all {} gradient checks below {GRADCHECK_TOL:e}", rows.len());
            Ok(())
        }
        Command::Simulate {
            hrms,
            pan,
            ratio,
            out,
            gnyq,
            pan_gnyq,
            radiometric_max,
            role,
        } => {
            let mut spec = DegradeSpec::with_ratio(ratio);
            if let Some(g) = gnyq {
                spec.gnyq = g;
            }
            if let Some(g) = pan_gnyq {
                spec.pan_gnyq = g;
            }
            let pair = wald_degrade::<f32>(&load_array(&hrms)?, &load_array(&pan)?, &spec, radiometric_max)?;
            pair.validate()?;
            let role = role.role().ok_or_else(|| Error::Config("--role must be train or test".into()))?;
            write_dataset(&out, "sim", &[(role, &pair)])?;
            println!("pan {} ms {} -> {}", pair.pan.shape(), pair.ms.shape(), out.join("manifest.json").display());
            Ok(())
        }
        Command::Synth {
            out,
            count,
            test_count,
            size,
            bands,
            ratio,
        } => {
            let pairs = synth_dataset::<f32>(seed.unwrap_or(0), count + test_count, size, bands, &DegradeSpec::with_ratio(ratio))?;
            let tagged: Vec<(Role, &FusionPair<f32>)> = pairs
                .iter()
                .enumerate()
                .map(|(i, p)| (if i < count { Role::Train } else { Role::Test }, p))
                .collect();
            write_dataset(&out, "synth", &tagged)?;
            println!("{} pairs -> {}", pairs.len(), out.join("manifest.json").display());
            Ok(())
        }
    }
}

fn load_config(args: &ConfigArgs, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn manifest_inputs(inputs: &EvalInputs) -> Result<(&Path, &Path)> {
    match (&inputs.checkpoint, &inputs.manifest) {
        (Some(c), Some(m)) => Ok((c, m)),
        _ => Err(Error::Config("give --checkpoint with --manifest, or --fused files".into())),
    }
}

fn default_preview_bands(bands: usize) -> Vec<usize> {
    if bands >= 3 {
        vec![2, 1, 0]
    } else {
        vec![0]
    }
}

pub fn gradcheck_line(r: &SuiteRow) -> String {
    format!(
        "{:<28} seed {:<3} rel err {:.3e} (worst component {:.1e})  {}",
        r.name,
        r.seed,
        r.max_rel_error,
        r.max_component_error,
        if r.passed() { "ok" } else { "FAIL" }
    )
}

/// Fuse raw-radiometry inputs; the output is returned at the input scale.
///
/// Band count and ratio are checked against the checkpoint before any work.
pub fn fuse_pair(net: &RapNet<Tensor<f32>>, pan: &Tensor<f32>, ms: &Tensor<f32>, radiometric_max: f64) -> Result<Tensor<f32>> {
    if !(radiometric_max > 0.0) {
        return Err(Error::Config(format!("radiometric max must be positive, got {radiometric_max}")));
    }
    let (ps, ms_s) = (pan.shape(), ms.shape());
    let ratio = if ms_s.h > 0 && ps.h % ms_s.h == 0 { ps.h / ms_s.h } else { 0 };
    let cfg = &net.config;
    if ms_s.c != cfg.bands || ratio != cfg.ratio {
        return Err(Error::Data(format!(
            "checkpoint expects {} bands at ratio {}, inputs have {} bands at ratio {} (pan {ps}, ms {ms_s})",
            cfg.bands,
            cfg.ratio,
            ms_s.c,
            if ratio == 0 { "non-integer".to_string() } else { ratio.to_string() },
        )));
    }
    for (name, t) in [("pan", pan), ("ms", ms)] {
        if !t.all_finite() {
            return Err(Error::Data(format!("{name} contains non-finite values")));
        }
    }
    let k = (1.0 / radiometric_max) as f32;
    let fused = net.fuse(&pan.scale(k), &ms.scale(k))?;
    if fused.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("fused output contains non-finite values".into()));
    }
    Ok(fused.scale(radiometric_max as f32))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub parameters: usize,
    pub adaptive: bool,
    pub steps: usize,
    pub final_loss: f64,
    /// MSE of the final network over the whole training set.
    pub train_mse: f64,
}

fn train_pairs(manifest: &Path) -> Result<Vec<FusionPair<f32>>> {
    let m = Manifest::load(manifest)?;
    let pairs: Vec<FusionPair<f32>> = m.load_pairs(Some(Role::Train))?.iter().map(FusionPair::normalized).collect();
    if pairs.is_empty() {
        return Err(Error::Data(format!("{}: no train entries", manifest.display())));
    }
    Ok(pairs)
}

/// Bands and ratio always follow the data; the remaining settings come from `cfg`.
fn fit_to_data(cfg: &RunConfig, pairs: &[FusionPair<f32>]) -> RunConfig {
    let mut cfg = cfg.clone();
    let (bands, ratio) = (pairs[0].bands(), pairs[0].ratio);
    if cfg.network.bands != bands || cfg.network.ratio != ratio {
        log::info!("using {bands} bands at ratio {ratio} from the data");
    }
    cfg.network.bands = bands;
    cfg.network.ratio = ratio;
    cfg.degrade.ratio = ratio;
    cfg
}

/// Mean per-pair MSE of `net` over `pairs`.
pub fn dataset_mse(net: &RapNet<Tensor<f32>>, pairs: &[FusionPair<f32>]) -> Result<f64> {
    let mut sum = 0.0;
    for p in pairs {
        let r = p.reference.as_ref().ok_or_else(|| Error::Data("pair has no reference".into()))?;
        sum += mse_loss(&net.fuse(&p.pan, &p.ms)?, r)? as f64;
    }
    Ok(sum / pairs.len() as f64)
}

fn train_on(cfg: &RunConfig, pairs: &[FusionPair<f32>], out: &Path) -> Result<(RapNet<Tensor<f32>>, TrainSummary)> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.echo(out)?;
    let net = cfg.train.init_network::<f32>(cfg.network.clone())?;
    let outcome = train(pairs, &cfg.train, net, Some(out))?;
    write_atomic(&out.join("loss.csv"), loss_csv(&outcome.steps).as_bytes())?;
    save_checkpoint(&outcome.params, &out.join("final.rapn"))?;
    let summary = TrainSummary {
        parameters: count(&outcome.params),
        adaptive: outcome.params.config.adaptive,
        steps: outcome.steps.len(),
        final_loss: outcome.final_loss().unwrap_or(f64::NAN),
        train_mse: dataset_mse(&outcome.params, pairs)?,
    };
    write_atomic(&out.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok((outcome.params, summary))
}

/// Train on the manifest's `train` entries, writing `config.toml`,
/// `loss.csv`, `final.rapn` and `summary.json` into `out`.
pub fn train_run(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<TrainSummary> {
    let pairs = train_pairs(manifest)?;
    let cfg = fit_to_data(cfg, &pairs);
    Ok(train_on(&cfg, &pairs, out)?.1)
}

fn name_of(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn selected<'m>(m: &'m Manifest, role: RoleArg) -> impl Iterator<Item = &'m crate::data::ManifestEntry> {
    let role = role.role();
    m.entries.iter().filter(move |e| role.map_or(true, |r| e.role == r))
}

/// Fuse every selected manifest entry and score it against its reference.
pub fn eval_reduced_manifest(net: &RapNet<Tensor<f32>>, m: &Manifest, role: RoleArg, cfg: &MetricsConfig) -> Result<MetricsReport> {
    let pairs = m.load_pairs::<f32>(role.role())?;
    let names: Vec<String> = selected(m, role).map(|e| name_of(&e.pan)).collect();
    if pairs.is_empty() {
        return Err(Error::Data("no manifest entries for the selected role".into()));
    }
    let mut rows = Vec::new();
    for (name, p) in names.into_iter().zip(&pairs) {
        let reference = p
            .reference
            .as_ref()
            .ok_or_else(|| Error::Data(format!("{name}: reduced-resolution evaluation needs a reference")))?;
        let fused = fuse_pair(net, &p.pan, &p.ms, p.radiometric_max)?;
        rows.push((name, reduced_metrics(&fused, reference, p.ratio, cfg)?));
    }
    Ok(MetricsReport::reduced(rows))
}

fn check_counts(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Config(format!("{a} fused files but {b} {what} files")));
    }
    Ok(())
}

pub fn eval_reduced_files(fused: &[PathBuf], reference: &[PathBuf], ratio: usize, cfg: &MetricsConfig) -> Result<MetricsReport> {
    check_counts("reference", fused.len(), reference.len())?;
    let mut rows = Vec::new();
    for (f, r) in fused.iter().zip(reference) {
        let (f_t, r_t) = (load_array::<f64>(f)?, load_array::<f64>(r)?);
        if f_t.shape() != r_t.shape() {
            return Err(Error::Data(format!("{}: shape {} vs reference {}", f.display(), f_t.shape(), r_t.shape())));
        }
        rows.push((name_of(f), reduced_metrics(&f_t, &r_t, ratio, cfg)?));
    }
    Ok(MetricsReport::reduced(rows))
}

pub fn eval_full_manifest(net: &RapNet<Tensor<f32>>, m: &Manifest, role: RoleArg, cfg: &MetricsConfig) -> Result<MetricsReport> {
    let pairs = m.load_pairs::<f32>(role.role())?;
    if pairs.is_empty() {
        return Err(Error::Data("no manifest entries for the selected role".into()));
    }
    let mut rows = Vec::new();
    for (e, p) in selected(m, role).zip(&pairs) {
        let fused = fuse_pair(net, &p.pan, &p.ms, p.radiometric_max)?;
        rows.push((name_of(&e.pan), full_res_metrics(&fused, &p.ms, &p.pan, p.ratio, cfg)?));
    }
    Ok(MetricsReport::full(rows))
}

pub fn eval_full_files(fused: &[PathBuf], ms: &[PathBuf], pan: &[PathBuf], ratio: usize, cfg: &MetricsConfig) -> Result<MetricsReport> {
    check_counts("ms", fused.len(), ms.len())?;
    check_counts("pan", fused.len(), pan.len())?;
    let mut rows = Vec::new();
    for ((f, m), p) in fused.iter().zip(ms).zip(pan) {
        let metrics = full_res_metrics(&load_array::<f64>(f)?, &load_array(m)?, &load_array(p)?, ratio, cfg)
            .map_err(|e| Error::Data(format!("{}: {e}", f.display())))?;
        rows.push((name_of(f), metrics));
    }
    Ok(MetricsReport::full(rows))
}

/// Write `<stem>.json` and `<stem>.csv` into `dir`.
pub fn write_report(report: &MetricsReport, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(format!("{stem}.json")), report.to_json().as_bytes())?;
    write_atomic(&dir.join(format!("{stem}.csv")), report.to_csv().as_bytes())
}

fn print_report(report: &MetricsReport, dir: &Path, stem: &str) -> Result<()> {
    write_report(report, dir, stem)?;
    for line in report.summary_lines() {
        println!("{line}");
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: TrainSummary,
    pub ablated: TrainSummary,
    /// Reduced metrics on the `test` entries, when the manifest has any.
    pub full_test: Option<MetricsReport>,
    pub ablated_test: Option<MetricsReport>,
}

impl AblationReport {
    /// Side-by-side table.
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("{:<12} {:>12} {:>12}", "", "rapconv", "plain conv"),
            format!("{:<12} {:>12} {:>12}", "parameters", self.full.parameters, self.ablated.parameters),
            format!("{:<12} {:>12} {:>12}", "steps", self.full.steps, self.ablated.steps),
            format!("{:<12} {:>12.4e} {:>12.4e}", "train mse", self.full.train_mse, self.ablated.train_mse),
        ];
        if let (Some(a), Some(b)) = (&self.full_test, &self.ablated_test) {
            for (sa, sb) in a.summary.iter().zip(&b.summary) {
                out.push(format!("{:<12} {:>12.4} {:>12.4}", format!("test {}", sa.metric), sa.mean, sb.mean));
            }
        }
        out
    }
}

/// Train the adaptive network and its plain-convolution twin from the same
/// seed and data order into `out/full` and `out/ablated`, then compare.
pub fn ablate_run(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<AblationReport> {
    let m = Manifest::load(manifest)?;
    let pairs = train_pairs(manifest)?;
    let mut base = fit_to_data(cfg, &pairs);
    base.network.adaptive = true;
    base.train.ablate_rapconv = false;
    let mut plain = base.clone();
    plain.train.ablate_rapconv = true;

    let (full_net, full) = train_on(&base, &pairs, &out.join("full"))?;
    let (plain_net, ablated) = train_on(&plain, &pairs, &out.join("ablated"))?;

    let has_test = m.entries.iter().any(|e| e.role == Role::Test);
    let (full_test, ablated_test) = if has_test {
        let a = eval_reduced_manifest(&full_net, &m, RoleArg::Test, &base.metrics)?;
        let b = eval_reduced_manifest(&plain_net, &m, RoleArg::Test, &base.metrics)?;
        write_report(&a, &out.join("full"), "test_reduced")?;
        write_report(&b, &out.join("ablated"), "test_reduced")?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let report = AblationReport {
        full,
        ablated,
        full_test,
        ablated_test,
    };
    write_atomic(&out.join("comparison.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    let mut table = report.lines().join("\n");
    table.push('\n');
    write_atomic(&out.join("comparison.txt"), table.as_bytes())?;
    Ok(report)
}
