//! Binary container family and network checkpoints.
//!
//! All containers share a little-endian layout:
//!
//! ```text
//! magic "ORDS" | version u16 | kind u8 | payload
//! ```
//!
//! Kinds: 1 = filter bank, 2 = frequency cube, 3 = network checkpoint.
//!
//! Bank payload:  tag u8 | n u32 | n^2 matrices of n^2 f64, row-major.
//! Cube payload:  dtype u8 | n u32 | stride u32 | t u32 | h u32 | w u32 |
//!                maps in index order, row-major, f32/f64 per dtype.
//! Checkpoint:    dtype u8 | json_len u32 | config JSON | bank values |
//!                per layer: weights then biases, all in the tagged dtype.
//!
//! Writes are atomic (temp file in the target directory, then rename).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cdct::DctCube;
use crate::error::{Error, Result};
use crate::nn::{Activation, ConvLayer, Network, Variant};
use crate::tensor::{Dtype, Tensor};
use crate::transform::{Filter, FilterBank, FilterTag};

const MAGIC: &[u8; 4] = b"ORDS";
const VERSION: u16 = 1;

const KIND_BANK: u8 = 1;
const KIND_CUBE: u8 = 2;
const KIND_CHECKPOINT: u8 = 3;

fn tag_byte(tag: FilterTag) -> u8 {
    match tag {
        FilterTag::DctInitialized => 1,
        FilterTag::Learned => 2,
        FilterTag::Random => 3,
    }
}

fn tag_from_byte(b: u8) -> Result<FilterTag> {
    match b {
        1 => Ok(FilterTag::DctInitialized),
        2 => Ok(FilterTag::Learned),
        3 => Ok(FilterTag::Random),
        other => Err(Error::Format(format!("unknown filter tag {other}"))),
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(kind: u8) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(kind);
        Writer { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn values(&mut self, vals: &[f64], dtype: Dtype) {
        match dtype {
            Dtype::F64 => {
                for v in vals {
                    self.buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            Dtype::F32 => {
                for v in vals {
                    self.buf.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
    }
}

/// Write bytes to a temp file next to the target, then rename into place.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "container".into())
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn open(path: &Path, expect_kind: u8) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = r.u8()?;
        if kind != expect_kind {
            return Err(Error::Format(format!(
                "container kind {kind}, expected {expect_kind}"
            )));
        }
        Ok(r)
    }

    fn take(&mut self, len: usize) -> Result<&[u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::Format("truncated container".into()));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn values(&mut self, count: usize, dtype: Dtype) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        match dtype {
            Dtype::F64 => {
                let raw = self.take(count * 8)?;
                for chunk in raw.chunks_exact(8) {
                    out.push(f64::from_le_bytes(chunk.try_into().unwrap()));
                }
            }
            Dtype::F32 => {
                let raw = self.take(count * 4)?;
                for chunk in raw.chunks_exact(4) {
                    out.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
                }
            }
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format("trailing bytes in container".into()));
        }
        Ok(())
    }
}

// --- filter banks ----------------------------------------------------------

pub fn save_filter_bank(path: &Path, bank: &FilterBank) -> Result<()> {
    let mut w = Writer::new(KIND_BANK);
    let tag = bank
        .filters()
        .first()
        .map(|f| f.tag)
        .unwrap_or(FilterTag::DctInitialized);
    w.u8(tag_byte(tag));
    w.u32(bank.n() as u32);
    for f in bank.filters() {
        w.values(f.values(), Dtype::F64);
    }
    atomic_write(path, &w.buf)
}

pub fn load_filter_bank(path: &Path) -> Result<FilterBank> {
    let mut r = Reader::open(path, KIND_BANK)?;
    let tag = tag_from_byte(r.u8()?)?;
    let n = r.u32()? as usize;
    let mut filters = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        filters.push(Filter::new(n, r.values(n * n, Dtype::F64)?, tag)?);
    }
    r.finish()?;
    FilterBank::new(n, filters)
}

/// JSON form of a bank for debugging and inspection.
pub fn bank_to_json(bank: &FilterBank) -> Result<String> {
    Ok(serde_json::to_string_pretty(bank)?)
}

pub fn bank_from_json(json: &str) -> Result<FilterBank> {
    Ok(serde_json::from_str(json)?)
}

// --- frequency cubes --------------------------------------------------------

pub fn save_cube(path: &Path, cube: &DctCube, dtype: Dtype) -> Result<()> {
    let mut w = Writer::new(KIND_CUBE);
    w.u8(dtype.tag());
    w.u32(cube.n() as u32);
    w.u32(cube.stride() as u32);
    w.u32(cube.threshold() as u32);
    let (h, wd) = cube.src_dims();
    w.u32(h as u32);
    w.u32(wd as u32);
    for m in cube.maps() {
        w.values(m, dtype);
    }
    atomic_write(path, &w.buf)
}

pub fn load_cube(path: &Path) -> Result<DctCube> {
    let mut r = Reader::open(path, KIND_CUBE)?;
    let dtype = Dtype::from_tag(r.u8()?)?;
    let n = r.u32()? as usize;
    let stride = r.u32()? as usize;
    let t = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    if stride == 0 || n == 0 {
        return Err(Error::Format("degenerate cube header".into()));
    }
    let per_map = (h / stride) * (w / stride);
    let mut maps = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        maps.push(r.values(per_map, dtype)?);
    }
    r.finish()?;
    let mut cube = DctCube::new(n, stride, h, w, maps)?;
    cube.set_threshold(t)?;
    Ok(cube)
}

// --- checkpoints ------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerHeader {
    filters: usize,
    channels: usize,
    kernel: usize,
    relu: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    n: usize,
    stride: usize,
    t: usize,
    scale: usize,
    variant: Variant,
    cdct_trainable: bool,
    gamma: f64,
    lambda: f64,
    sigma: f64,
    final_relu: bool,
    bank_tag: u8,
    layers: Vec<LayerHeader>,
    dtype: Dtype,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra: Option<Value>,
}

/// Metadata recovered alongside a checkpointed network.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub scale: usize,
    pub dtype: Dtype,
    pub extra: Option<Value>,
}

/// Serialize a network (config JSON header plus raw tensors in declared
/// order: bank filters, then per-layer weights and biases).
pub fn save_checkpoint(
    path: &Path,
    net: &Network,
    scale: usize,
    dtype: Dtype,
    extra: Option<Value>,
) -> Result<()> {
    let header = CheckpointHeader {
        format_version: 1,
        n: net.n(),
        stride: net.stride,
        t: net.t,
        scale,
        variant: net.variant,
        cdct_trainable: net.cdct_trainable,
        gamma: net.gamma,
        lambda: net.lambda,
        sigma: net.sigma,
        final_relu: net.final_relu,
        bank_tag: tag_byte(
            net.bank
                .filters()
                .first()
                .map(|f| f.tag)
                .unwrap_or(FilterTag::DctInitialized),
        ),
        layers: net
            .layers
            .iter()
            .map(|l| LayerHeader {
                filters: l.out_channels(),
                channels: l.in_channels(),
                kernel: l.kernel(),
                relu: l.activation == Activation::Relu,
            })
            .collect(),
        dtype,
        extra,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = Writer::new(KIND_CHECKPOINT);
    w.u8(dtype.tag());
    w.u32(json.len() as u32);
    w.bytes(&json);
    for f in net.bank.filters() {
        w.values(f.values(), dtype);
    }
    for l in &net.layers {
        w.values(l.weights.values(), dtype);
        w.values(&l.biases, dtype);
    }
    atomic_write(path, &w.buf)
}

/// Load a checkpoint for inference; the returned network is complete and
/// does not need the training machinery.
pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    let mut r = Reader::open(path, KIND_CHECKPOINT)?;
    let dtype = Dtype::from_tag(r.u8()?)?;
    let json_len = r.u32()? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(json_len)?)?;
    if header.dtype != dtype {
        return Err(Error::Format("header dtype disagrees with payload tag".into()));
    }
    let n = header.n;
    let tag = tag_from_byte(header.bank_tag)?;
    let mut filters = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        filters.push(Filter::new(n, r.values(n * n, dtype)?, tag)?);
    }
    let bank = FilterBank::new(n, filters)?;
    let mut layers = Vec::with_capacity(header.layers.len());
    for lh in &header.layers {
        let weights = Tensor::from_values(
            &[lh.filters, lh.channels, lh.kernel, lh.kernel],
            r.values(lh.filters * lh.channels * lh.kernel * lh.kernel, dtype)?,
        )?;
        let biases = r.values(lh.filters, dtype)?;
        layers.push(ConvLayer {
            weights,
            biases,
            activation: if lh.relu { Activation::Relu } else { Activation::None },
        });
    }
    r.finish()?;
    let mut net = Network::new(
        bank,
        layers,
        header.t,
        header.stride,
        header.variant,
        header.gamma,
        header.lambda,
        header.sigma,
        header.final_relu,
    )?;
    net.cdct_trainable = header.cdct_trainable;
    Ok((
        net,
        CheckpointMeta {
            scale: header.scale,
            dtype,
            extra: header.extra,
        },
    ))
}

/// Checkpoint path helper used by the trainer.
pub fn checkpoint_path(dir: &Path, phase: usize, epoch: usize) -> PathBuf {
    dir.join(format!("ckpt_p{phase}_e{epoch:03}.bin"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdct::cdct_forward;
    use crate::imaging::LumaImage;
    use crate::nn::architecture;
    use crate::transform::dct_basis;

    fn sample_net() -> Network {
        let bank = dct_basis(4).unwrap();
        let layers: Vec<ConvLayer> = architecture(4, 2, 3, 4, 3, 3)
            .iter()
            .enumerate()
            .map(|(l, &(m, c, k))| {
                ConvLayer::xavier(m, c, k, Activation::Relu, 100 + l as u64)
            })
            .collect();
        Network::new(bank, layers, 2, 2, Variant::Ordsr, 3.5, 0.75, 1e-4, true).unwrap()
    }

    #[test]
    fn bank_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        let bank = dct_basis(8).unwrap();
        save_filter_bank(&path, &bank).unwrap();
        let back = load_filter_bank(&path).unwrap();
        assert_eq!(bank, back);
    }

    #[test]
    fn bank_json_round_trip() {
        let bank = dct_basis(4).unwrap();
        let json = bank_to_json(&bank).unwrap();
        let back = bank_from_json(&json).unwrap();
        assert_eq!(bank, back);
    }

    #[test]
    fn cube_round_trip_f64_exact_f32_lossy() {
        let dir = tempfile::tempdir().unwrap();
        let bank = dct_basis(4).unwrap();
        let img = LumaImage::from_fn(8, 8, |r, c| ((r * 8 + c) as f64).sin() * 0.5 + 0.5);
        let mut cube = cdct_forward(&img, &bank, 2).unwrap();
        cube.set_threshold(2).unwrap();

        let p64 = dir.path().join("cube64.bin");
        save_cube(&p64, &cube, Dtype::F64).unwrap();
        let back = load_cube(&p64).unwrap();
        assert_eq!(cube, back);
        assert_eq!(back.threshold(), 2);

        let p32 = dir.path().join("cube32.bin");
        save_cube(&p32, &cube, Dtype::F32).unwrap();
        let lossy = load_cube(&p32).unwrap();
        assert!(cube.max_abs_diff(&lossy) < 1e-6);
    }

    #[test]
    fn checkpoint_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let mut net = sample_net();
        net.cdct_trainable = true;
        save_checkpoint(
            &path,
            &net,
            3,
            Dtype::F64,
            Some(serde_json::json!({"note": "test"})),
        )
        .unwrap();
        let (back, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.scale, 3);
        assert_eq!(back.t, net.t);
        assert_eq!(back.stride, net.stride);
        assert_eq!(back.variant, net.variant);
        assert_eq!(back.gamma, net.gamma);
        assert!(back.cdct_trainable);
        assert_eq!(back.bank, net.bank);
        for (a, b) in back.layers.iter().zip(&net.layers) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.biases, b.biases);
            assert_eq!(a.activation, b.activation);
        }
        assert_eq!(meta.extra.unwrap()["note"], "test");
    }

    #[test]
    fn wrong_kind_and_corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        let bank = dct_basis(4).unwrap();
        save_filter_bank(&path, &bank).unwrap();
        assert!(load_cube(&path).is_err(), "kind mismatch must fail");

        let garbage = dir.path().join("garbage.bin");
        std::fs::write(&garbage, b"not a container").unwrap();
        assert!(load_filter_bank(&garbage).is_err());
    }
}
