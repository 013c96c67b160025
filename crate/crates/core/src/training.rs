//! MSE training with Adam.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Tape};
use crate::data::FusionPair;
use crate::error::{Error, Result};
use crate::network::{save_checkpoint, NetworkConfig, RapNet};
use crate::params::{flatten, names, ParamTree};
use crate::tensor::{Scalar, Tensor};

/// Mean squared error over all elements.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    crate::autodiff::mse_value(pred, target)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Replace every RAPConv with a plain 3×3 convolution.
    pub ablate_rapconv: bool,
    /// Checkpoint period in epochs; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Global gradient-norm clip.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2.5e-4,
            batch_size: 32,
            epochs: 500,
            max_steps: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            ablate_rapconv: false,
            checkpoint_every: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    /// Network hyperparameters with the ablation switch applied.
    pub fn network_config(&self, net: NetworkConfig) -> NetworkConfig {
        NetworkConfig {
            adaptive: net.adaptive && !self.ablate_rapconv,
            ..net
        }
    }

    /// Seeded parameter initialisation.
    pub fn init_network<T: Scalar>(&self, net: NetworkConfig) -> Result<RapNet<Tensor<T>>> {
        RapNet::init(self.network_config(net), &mut ChaCha8Rng::seed_from_u64(self.seed))
    }
}

/// First and second moments per parameter tensor, in [`ParamTree`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<R: ParamTree<Tensor<T>>>(params: &R) -> Self {
        let zeros: Vec<Tensor<T>> = flatten(params).iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. `grads` must follow the traversal order
/// of `params`. A non-finite gradient aborts before anything is modified.
pub fn adam_step<T: Scalar, R: ParamTree<Tensor<T>>>(
    params: &mut R,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    let shapes: Vec<_> = flatten(params).iter().map(|p| p.shape()).collect();
    if grads.len() != shapes.len() || state.m.len() != shapes.len() {
        return Err(Error::invalid(
            "adam_step",
            format!("{} parameters, {} gradients, {} moments", shapes.len(), grads.len(), state.m.len()),
        ));
    }
    let pnames = names(params);
    for ((g, s), name) in grads.iter().zip(&shapes).zip(&pnames) {
        if g.shape() != *s {
            return Err(Error::invalid("adam_step", format!("{name}: gradient shape {} vs parameter {s}", g.shape())));
        }
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in {name} at element {i}")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (b1t, b2t) = (T::from_f64c(b1), T::from_f64c(b2));
    let (ob1, ob2) = (T::from_f64c(1.0 - b1), T::from_f64c(1.0 - b2));
    let (c1t, c2t) = (T::from_f64c(c1), T::from_f64c(c2));
    let (lr, eps) = (T::from_f64c(cfg.lr), T::from_f64c(cfg.eps));
    let mut k = 0;
    params.visit_mut(&mut |p: &mut Tensor<T>| {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, th) in p.data_mut().iter_mut().enumerate() {
            m[i] = b1t * m[i] + ob1 * g[i];
            v[i] = b2t * v[i] + ob2 * g[i] * g[i];
            let mh = m[i] / c1t;
            let vh = v[i] / c2t;
            *th = *th - lr * mh / (vh.sqrt() + eps);
        }
        k += 1;
    });
    Ok(())
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = T::from_f64c(max_norm / norm);
        for g in grads.iter_mut() {
            *g = g.scale(k);
        }
    }
    norm
}

/// Loss and parameter gradients for one batch.
pub fn loss_and_grads<T: Scalar>(
    net: &RapNet<Tensor<T>>,
    pan: &Tensor<T>,
    ms: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<(T, Vec<Tensor<T>>)> {
    let tape = Tape::new();
    let bound = net.map(&mut |t| tape.leaf(t.clone()));
    let p = tape.constant(pan.clone());
    let m = tape.constant(ms.clone());
    let y = tape.constant(target.clone());
    let out = bound.forward(&tape, &p, &m)?;
    let loss = tape.mse(&out, &y)?;
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let g = tape.backward(loss)?;
    let grads = flatten(&bound)
        .into_iter()
        .zip(flatten(net))
        .map(|(v, t)| g.get_or_zeros(*v, t.shape()))
        .collect();
    Ok((value, grads))
}

/// One optimizer step's loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: RapNet<Tensor<T>>,
    pub steps: Vec<LossRecord>,
    /// Mean step loss per completed epoch.
    pub epoch_means: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
}

impl<T> TrainOutcome<T> {
    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|r| r.loss)
    }
}

/// `epoch,step,loss` with shortest round-trip f32 formatting.
pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut s = String::from("epoch,step,loss\n");
    for r in records {
        let _ = writeln!(s, "{},{},{}", r.epoch, r.step, r.loss as f32);
    }
    s
}

/// Check that every pair can be batched with the first one and has a reference.
pub fn check_dataset<T: Scalar>(data: &[FusionPair<T>]) -> Result<()> {
    let first = data.first().ok_or_else(|| Error::Data("training set is empty".into()))?;
    for (i, p) in data.iter().enumerate() {
        p.validate().map_err(|e| Error::Data(format!("pair {i}: {e}")))?;
        if p.reference.is_none() {
            return Err(Error::Data(format!("pair {i} has no reference")));
        }
        if p.bands() != first.bands() {
            return Err(Error::Data(format!("pair {i} has {} bands, pair 0 has {}", p.bands(), first.bands())));
        }
        if p.ratio != first.ratio {
            return Err(Error::Data(format!("pair {i} has ratio {}, pair 0 has {}", p.ratio, first.ratio)));
        }
        if p.pan.shape() != first.pan.shape() {
            return Err(Error::Data(format!(
                "pair {i} pan is {}, pair 0 is {}; training needs equal patch sizes",
                p.pan.shape(),
                first.pan.shape()
            )));
        }
    }
    Ok(())
}

fn stack_batch<T: Scalar>(data: &[FusionPair<T>], idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let pan: Vec<_> = idx.iter().map(|&i| &data[i].pan).collect();
    let ms: Vec<_> = idx.iter().map(|&i| &data[i].ms).collect();
    let rf: Vec<_> = idx.iter().map(|&i| data[i].reference.as_ref().expect("checked")).collect();
    Ok((Tensor::stack(&pan)?, Tensor::stack(&ms)?, Tensor::stack(&rf)?))
}

/// Train `params` on `data` (already scaled to the training range).
///
/// Each epoch visits the pairs in an order drawn from the seeded RNG; the
/// last short batch is kept. With `checkpoint_dir` set and a non-zero
/// period, `epoch_NNNN.rapn` is written atomically after every period.
pub fn train<T: Scalar>(
    data: &[FusionPair<T>],
    cfg: &TrainConfig,
    mut params: RapNet<Tensor<T>>,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    check_dataset(data)?;
    let first = &data[0];
    if first.bands() != params.config.bands {
        return Err(Error::Data(format!(
            "network expects {} bands, data has {}",
            params.config.bands,
            first.bands()
        )));
    }
    if first.ratio != params.config.ratio {
        return Err(Error::Data(format!(
            "network expects ratio {}, data has {}",
            params.config.ratio, first.ratio
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut steps = Vec::new();
    let mut epoch_means = Vec::new();
    let mut checkpoints = Vec::new();
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut n = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if steps.len() >= max_steps {
                break 'epochs;
            }
            let (pan, ms, target) = stack_batch(data, chunk)?;
            let (loss, mut grads) = loss_and_grads(&params, &pan, &ms, &target)?;
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            adam_step(&mut params, &grads, &mut state, cfg)?;
            let loss = loss.as_f64();
            log::debug!("epoch {epoch} step {} loss {loss:e}", steps.len());
            steps.push(LossRecord {
                epoch,
                step: steps.len(),
                loss,
            });
            sum += loss;
            n += 1;
        }
        epoch_means.push(sum / n as f64);
        log::info!("epoch {epoch}: mean loss {:e}", sum / n as f64);
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                let path = dir.join(format!("epoch_{:04}.rapn", epoch + 1));
                save_checkpoint(&params, &path)?;
                checkpoints.push(path);
            }
        }
    }
    Ok(TrainOutcome {
        params,
        steps,
        epoch_means,
        checkpoints,
    })
}
