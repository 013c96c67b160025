//! Binary checkpoint format.
//!
//! ```text
//! "RAPN"            4 bytes
//! version           u16 (= 1)
//! bands, features, ratio, ghbm_depth, ghbm_width (0 = default rule),
//! blocks, flags     7 × u32 (flags bit 0: adaptive)
//! tensor count      u32
//! per tensor:       n, c, h, w as u32, then n·c·h·w f32
//! ```
//!
//! Everything is little-endian. Tensors follow [`ParamTree`] order:
//! esam, head, blocks.0..3, tail, dff.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NetworkConfig, RapNet, NUM_BLOCKS};
use crate::binio::{read_file, write_atomic, ByteReader};
use crate::error::Result;
use crate::params::{flatten, names, ParamTree};
use crate::tensor::{Scalar, Shape, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RAPN";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<T: Scalar>(net: &RapNet<Tensor<T>>) -> Vec<u8> {
    let cfg = &net.config;
    let tensors = flatten(net);
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let hyper = [
        cfg.bands,
        cfg.features,
        cfg.ratio,
        cfg.ghbm_depth,
        cfg.ghbm_width.unwrap_or(0),
        NUM_BLOCKS,
        cfg.adaptive as usize,
        tensors.len(),
    ];
    for v in hyper {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for t in tensors {
        for d in t.shape().dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

/// Parse a checkpoint; `path` is used only in error messages.
pub fn read_checkpoint<T: Scalar>(bytes: &[u8], path: &Path) -> Result<RapNet<Tensor<T>>> {
    let mut r = ByteReader::new(bytes, path);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.format(format!("unsupported checkpoint version {version}")));
    }
    let mut hyper = [0usize; 8];
    for h in &mut hyper {
        *h = r.u32()? as usize;
    }
    let [bands, features, ratio, ghbm_depth, ghbm_width, blocks, flags, count] = hyper;
    if blocks != NUM_BLOCKS {
        return Err(r.format(format!("expected {NUM_BLOCKS} blocks, header says {blocks}")));
    }
    let config = NetworkConfig {
        bands,
        features,
        ratio,
        ghbm_depth,
        ghbm_width: (ghbm_width != 0).then_some(ghbm_width),
        adaptive: flags & 1 == 1,
    };
    config.validate().map_err(|e| r.format(format!("bad hyperparameters: {e}")))?;
    // Skeleton with the right structure; every value is overwritten below.
    let mut net = RapNet::<Tensor<T>>::init(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let expected_names = names(&net);
    if count != expected_names.len() {
        return Err(r.format(format!("expected {} tensors, header says {count}", expected_names.len())));
    }
    let mut loaded = Vec::with_capacity(count);
    for _ in 0..count {
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
        let shape = Shape::from(dims);
        let data = r.f32s(shape.numel())?;
        loaded.push((shape, data));
    }
    if r.remaining() != 0 {
        return Err(r.format(format!("{} trailing bytes", r.remaining())));
    }
    let mut idx = 0;
    let mut err = None;
    net.visit_mut(&mut |t: &mut Tensor<T>| {
        let (shape, data) = &loaded[idx];
        if *shape != t.shape() && err.is_none() {
            err = Some(format!("{}: expected shape {}, found {}", expected_names[idx], t.shape(), shape));
        } else if err.is_none() {
            *t = Tensor::from_vec(*shape, data.iter().map(|&v| T::from_f64c(v as f64)).collect()).expect("shape checked");
        }
        idx += 1;
    });
    if let Some(msg) = err {
        return Err(r.format(msg));
    }
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(net: &RapNet<Tensor<T>>, path: &Path) -> Result<()> {
    write_atomic(path, &write_checkpoint(net))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<RapNet<Tensor<T>>> {
    read_checkpoint(&read_file(path)?, path)
}
