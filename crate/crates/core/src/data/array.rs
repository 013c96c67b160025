//! Array files: NPY v1.0 and the raw `RAPT` container.
//!
//! Axis convention on load:
//!
//! | stored dims | tensor          |
//! |-------------|-----------------|
//! | `(H, W)`    | `(1, 1, H, W)`  |
//! | `(H, W, C)` | `(1, C, H, W)`, when `C` is strictly the smallest axis |
//! | `(C, H, W)` | `(1, C, H, W)`, otherwise |
//! | `(N, C, H, W)` | as stored    |
//!
//! Saving always writes the 4-D `(N, C, H, W)` form.
//!
//! `RAPT` layout, little-endian: `"RAPT"`, `u32` ndim (2–4), ndim × `u32`
//! dims in channel-first order, then the `f32` payload.

use std::path::Path;

use crate::binio::{read_file, write_atomic, ByteReader};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const NPY_MAGIC: &[u8] = b"\x93NUMPY";
pub const RAPT_MAGIC: &[u8; 4] = b"RAPT";

/// Element types readable from and writable to NPY.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NpyDtype {
    F32,
    F64,
    U16,
    U8,
}

impl NpyDtype {
    fn descr(self) -> &'static str {
        match self {
            NpyDtype::F32 => "<f4",
            NpyDtype::F64 => "<f8",
            NpyDtype::U16 => "<u2",
            NpyDtype::U8 => "|u1",
        }
    }

    fn parse(descr: &str) -> Option<Self> {
        match descr {
            "<f4" => Some(NpyDtype::F32),
            "<f8" => Some(NpyDtype::F64),
            "<u2" => Some(NpyDtype::U16),
            "|u1" | "<u1" => Some(NpyDtype::U8),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            NpyDtype::F32 => 4,
            NpyDtype::F64 => 8,
            NpyDtype::U16 => 2,
            NpyDtype::U8 => 1,
        }
    }
}

fn map_axes<T: Scalar>(dims: &[usize], data: Vec<T>, r: &ByteReader) -> Result<Tensor<T>> {
    if dims.iter().any(|&d| d == 0) {
        return Err(r.format(format!("zero-sized axis in {dims:?}")));
    }
    match *dims {
        [h, w] => Tensor::from_vec([1, 1, h, w], data),
        [a, b, c] if c < a && c < b => {
            let (h, w, ch) = (a, b, c);
            Ok(Tensor::from_fn([1, ch, h, w], |_, k, y, x| data[(y * w + x) * ch + k]))
        }
        [c, h, w] => Tensor::from_vec([1, c, h, w], data),
        [n, c, h, w] => Tensor::from_vec([n, c, h, w], data),
        _ => Err(r.format(format!("expected 2 to 4 axes, found {}", dims.len()))),
    }
}

fn parse_npy_header(header: &str, r: &ByteReader) -> Result<(String, bool, Vec<usize>)> {
    let field = |key: &str| -> Result<&str> {
        let pat = format!("'{key}':");
        let start = header.find(&pat).ok_or_else(|| r.format(format!("header lacks {key}")))? + pat.len();
        Ok(header[start..].trim_start())
    };
    let descr = field("descr")?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|s| s.split('\'').next())
        .ok_or_else(|| r.format("unquoted descr"))?
        .to_string();
    let fortran = field("fortran_order")?.starts_with("True");
    let shape = field("shape")?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| r.format("malformed shape"))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| r.format(format!("bad dimension {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((descr, fortran, dims))
}

fn read_npy<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Tensor<T>> {
    let mut r = ByteReader::new(bytes, path);
    r.magic(NPY_MAGIC)?;
    let version = r.take(2)?;
    if version[0] != 1 {
        return Err(r.format(format!("NPY version {}.{} not supported, need 1.0", version[0], version[1])));
    }
    let hlen = r.u16()? as usize;
    let header = std::str::from_utf8(r.take(hlen)?).map_err(|_| r.format("header is not UTF-8"))?;
    let (descr, fortran, dims) = parse_npy_header(header, &r)?;
    let dtype = NpyDtype::parse(&descr).ok_or_else(|| Error::UnsupportedDtype {
        path: path.to_path_buf(),
        dtype: descr.clone(),
    })?;
    if fortran {
        return Err(r.format("Fortran-ordered arrays are not supported"));
    }
    let numel: usize = dims.iter().product();
    let raw = r.take(numel * dtype.size())?;
    let data: Vec<T> = match dtype {
        NpyDtype::F32 => raw
            .chunks_exact(4)
            .map(|c| T::from_f64c(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect(),
        NpyDtype::F64 => raw
            .chunks_exact(8)
            .map(|c| T::from_f64c(f64::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        NpyDtype::U16 => raw
            .chunks_exact(2)
            .map(|c| T::from_f64c(u16::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect(),
        NpyDtype::U8 => raw.iter().map(|&b| T::from_f64c(b as f64)).collect(),
    };
    map_axes(&dims, data, &r)
}

fn read_rapt<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Tensor<T>> {
    let mut r = ByteReader::new(bytes, path);
    r.magic(RAPT_MAGIC)?;
    let ndim = r.u32()? as usize;
    if !(2..=4).contains(&ndim) {
        return Err(r.format(format!("expected 2 to 4 axes, found {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(r.u32()? as usize);
    }
    let data = r.f32s(dims.iter().product())?;
    let data = data.into_iter().map(|v| T::from_f64c(v as f64)).collect();
    let t: Tensor<T> = match dims[..] {
        [h, w] => Tensor::from_vec([1, 1, h, w], data),
        [c, h, w] => Tensor::from_vec([1, c, h, w], data),
        [n, c, h, w] => Tensor::from_vec([n, c, h, w], data),
        _ => unreachable!(),
    }
    .map_err(|e| r.format(e.to_string()))?;
    Ok(t)
}

/// Load an NPY or RAPT file, chosen by its magic bytes.
pub fn load_array<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = read_file(path)?;
    if bytes.starts_with(NPY_MAGIC) {
        read_npy(&bytes, path)
    } else if bytes.starts_with(RAPT_MAGIC) {
        read_rapt(&bytes, path)
    } else {
        Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "\\x93NUMPY or RAPT".into(),
        })
    }
}

/// Encode as NPY. Integer dtypes require integral values in range.
pub fn encode_npy<T: Scalar>(t: &Tensor<T>, dtype: NpyDtype) -> Result<Vec<u8>> {
    let [n, c, h, w] = t.shape().dims();
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({n}, {c}, {h}, {w}), }}",
        dtype.descr()
    );
    // magic + version + u16 length + dict + newline, padded to 64 bytes
    let unpadded = NPY_MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header = format!("{dict}{}\n", " ".repeat(pad));
    let mut out = Vec::with_capacity(unpadded + pad + t.numel() * dtype.size());
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    let int_range = |v: f64, hi: f64| -> Result<f64> {
        if v.fract() != 0.0 || !(0.0..=hi).contains(&v) {
            return Err(Error::Data(format!("value {v} does not fit {}", dtype.descr())));
        }
        Ok(v)
    };
    for &v in t.data() {
        let v = v.as_f64();
        match dtype {
            NpyDtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            NpyDtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            NpyDtype::U16 => out.extend_from_slice(&(int_range(v, u16::MAX as f64)? as u16).to_le_bytes()),
            NpyDtype::U8 => out.push(int_range(v, u8::MAX as f64)? as u8),
        }
    }
    Ok(out)
}

pub fn encode_rapt<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 4 * t.numel());
    out.extend_from_slice(RAPT_MAGIC);
    out.extend_from_slice(&4u32.to_le_bytes());
    for d in t.shape().dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn save_npy<T: Scalar>(path: &Path, t: &Tensor<T>, dtype: NpyDtype) -> Result<()> {
    write_atomic(path, &encode_npy(t, dtype)?)
}

/// Save by extension: `.npy` (f32) or `.rapt`.
pub fn save_array<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("npy") => save_npy(path, t, NpyDtype::F32),
        Some("rapt") => write_atomic(path, &encode_rapt(t)),
        _ => Err(Error::invalid(
            "save_array",
            format!("{}: unknown extension, use .npy or .rapt", path.display()),
        )),
    }
}
