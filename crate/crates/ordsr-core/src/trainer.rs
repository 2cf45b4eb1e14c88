//! Two-phase training: the CNN is first optimized against a frozen
//! DCT-initialized transform layer, then the transform filters join the
//! trainable set with the orthogonality and complexity-order constraints
//! switched on (per the selected variant). Adam with elementwise gradient
//! clipping and a step learning-rate decay drives both phases.
//!
//! Data preparation follows the degradation protocol: augment, treat each
//! variant as ground truth, crop to scale multiples, bicubic
//! downsample-then-upsample, and cut co-located patch pairs.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container::{checkpoint_path, save_checkpoint};
use crate::error::{Error, Result};
use crate::imaging::{bicubic_resize, sample_bicubic, LumaImage};
use crate::nn::{architecture, Activation, ConvLayer, Network, Variant};
use crate::objective::{batch_loss_and_gradients, clip_in_place, ClipMode, GradientSet, LossBreakdown};
use crate::rng::{derive_seed, seeded, Stream};
use crate::tensor::Dtype;
use crate::transform::{dct_basis, random_bank};

/// Every knob of the training protocol. All fields have defaults matching
/// the standard configuration; presets override the size-related ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Super-resolution factor c.
    pub scale: usize,
    /// Transform block size N.
    pub n: usize,
    /// Cube split threshold; `None` selects the per-scale default (5/4/3).
    pub t: Option<usize>,
    /// CNN depth D.
    pub depth: usize,
    /// Filters per hidden layer.
    pub filters: usize,
    pub kernel_first: usize,
    pub kernel_rest: usize,
    /// Transform stride S.
    pub stride: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip: f64,
    pub clip_mode: ClipMode,
    pub gamma: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub batch: usize,
    pub patch: usize,
    pub overlap: usize,
    pub epochs_per_phase: usize,
    pub seed: u64,
    pub variant: Variant,
    pub final_relu: bool,
    pub augment: bool,
    /// Storage precision of written checkpoints.
    pub dtype: Dtype,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scale: 3,
            n: 8,
            t: None,
            depth: 15,
            filters: 64,
            kernel_first: 5,
            kernel_rest: 3,
            stride: 2,
            lr0: 1e-4,
            lr_decay: 0.75,
            lr_decay_every: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip: 0.5,
            clip_mode: ClipMode::Elementwise,
            gamma: 3.5,
            lambda: 0.75,
            sigma: 1e-4,
            batch: 128,
            patch: 40,
            overlap: 10,
            epochs_per_phase: 80,
            seed: 0,
            variant: Variant::Ordsr,
            final_relu: true,
            augment: true,
            dtype: Dtype::F64,
        }
    }
}

/// Per-scale split threshold: more low maps survive smaller scale factors.
pub fn t_for_scale(scale: usize) -> usize {
    match scale {
        2 => 5,
        3 => 4,
        _ => 3,
    }
}

impl TrainConfig {
    /// Small configuration that trains in minutes on a CPU; the documented
    /// target for the empirical acceptance checks.
    pub fn desk_preset() -> Self {
        TrainConfig {
            depth: 5,
            filters: 16,
            epochs_per_phase: 12,
            batch: 64,
            lr0: 1e-3,
            lr_decay_every: 5,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    pub fn resolved_t(&self) -> usize {
        self.t.unwrap_or_else(|| t_for_scale(self.scale))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::invalid("scale factor must be at least 2"));
        }
        if self.n < 2 {
            return Err(Error::invalid("block size must be at least 2"));
        }
        if self.stride == 0 || self.n % self.stride != 0 {
            return Err(Error::invalid("stride must divide block size"));
        }
        if self.resolved_t() > self.n * self.n {
            return Err(Error::invalid("threshold exceeds map count"));
        }
        if self.depth == 0 || self.filters == 0 || self.batch == 0 {
            return Err(Error::invalid("depth, filters, and batch must be positive"));
        }
        if self.patch < self.n {
            return Err(Error::invalid("patch must be at least the block size"));
        }
        if self.patch % self.stride != 0 {
            return Err(Error::invalid("patch must be a multiple of the stride"));
        }
        if self.overlap >= self.patch {
            return Err(Error::invalid("overlap must be smaller than the patch"));
        }
        if self.epochs_per_phase == 0 {
            return Err(Error::invalid("need at least one epoch per phase"));
        }
        if self.lr0 <= 0.0 || self.clip <= 0.0 {
            return Err(Error::invalid("learning rate and clip must be positive"));
        }
        Ok(())
    }
}

/// Co-located degraded/ground-truth patch pair.
#[derive(Debug, Clone)]
pub struct PatchPair {
    pub lr: LumaImage,
    pub hr: LumaImage,
}

// --- augmentation -----------------------------------------------------------

/// Largest axis-aligned rectangle containing only valid pixels inside a
/// w x h rectangle rotated by `angle`.
fn max_inscribed_rect(w: f64, h: f64, angle: f64) -> (f64, f64) {
    let (sin_a, cos_a) = (angle.sin().abs(), angle.cos().abs());
    let width_longer = w >= h;
    let (long, short) = if width_longer { (w, h) } else { (h, w) };
    if short <= 2.0 * sin_a * cos_a * long || (sin_a - cos_a).abs() < 1e-10 {
        let x = 0.5 * short;
        if width_longer {
            (x / sin_a, x / cos_a)
        } else {
            (x / cos_a, x / sin_a)
        }
    } else {
        let cos_2a = cos_a * cos_a - sin_a * sin_a;
        ((w * cos_a - h * sin_a) / cos_2a, (h * cos_a - w * sin_a) / cos_2a)
    }
}

/// Rotate about the center with bicubic resampling, cropped to the largest
/// axis-aligned rectangle of valid pixels (no fabricated border content).
pub fn rotate_cropped(img: &LumaImage, degrees: f64) -> LumaImage {
    let angle = degrees.to_radians();
    let (h, w) = (img.height() as f64, img.width() as f64);
    let (rw, rh) = max_inscribed_rect(w, h, angle);
    let out_h = (rh.floor() as usize).max(1);
    let out_w = (rw.floor() as usize).max(1);
    let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
    let (ocy, ocx) = ((out_h as f64 - 1.0) / 2.0, (out_w as f64 - 1.0) / 2.0);
    let (sin_a, cos_a) = (angle.sin(), angle.cos());
    LumaImage::from_fn(out_h, out_w, |r, c| {
        let dy = r as f64 - ocy;
        let dx = c as f64 - ocx;
        // Inverse rotation back into source coordinates.
        let sy = cy + (cos_a * dy - sin_a * dx);
        let sx = cx + (sin_a * dy + cos_a * dx);
        sample_bicubic(img, sy, sx)
    })
}

/// Deterministic ordered augmentation family: identity, the seven
/// 45-degree-step rotations, both flips, and three downscales.
/// Right-angle rotations are exact permutations; the 45-degree family is
/// resampled and validity-cropped.
pub fn augment(img: &LumaImage) -> Vec<LumaImage> {
    let mut out = Vec::with_capacity(13);
    out.push(img.clone());
    out.push(rotate_cropped(img, 45.0));
    out.push(img.rot90());
    out.push(rotate_cropped(img, 135.0));
    out.push(img.rot180());
    out.push(rotate_cropped(img, 225.0));
    out.push(img.rot270());
    out.push(rotate_cropped(img, 315.0));
    out.push(img.flip_horizontal());
    out.push(img.flip_vertical());
    for &s in &[0.7, 0.8, 0.9] {
        let oh = ((img.height() as f64 * s).round() as usize).max(1);
        let ow = ((img.width() as f64 * s).round() as usize).max(1);
        out.push(bicubic_resize(img, oh, ow).expect("positive dims"));
    }
    out
}

// --- degradation and patches -------------------------------------------------

/// Crop so height and width are multiples of `c` (top-left anchored).
pub fn crop_to_multiple(img: &LumaImage, c: usize) -> LumaImage {
    let h = (img.height() / c) * c;
    let w = (img.width() / c) * c;
    img.crop(0, 0, h, w).expect("crop within bounds")
}

/// Bicubic degradation: crop to multiples of `c`, downsample by `c`, then
/// enlarge back to the cropped dims. Output dims equal the cropped input's.
pub fn degrade(hr: &LumaImage, c: usize) -> Result<LumaImage> {
    if c == 0 {
        return Err(Error::invalid("scale factor must be positive"));
    }
    let cropped = crop_to_multiple(hr, c);
    if cropped.height() == 0 || cropped.width() == 0 {
        return Err(Error::invalid("image smaller than the scale factor"));
    }
    let small = bicubic_resize(&cropped, cropped.height() / c, cropped.width() / c)?;
    bicubic_resize(&small, cropped.height(), cropped.width())
}

fn anchors(dim: usize, size: usize, step: usize) -> Vec<usize> {
    if dim < size {
        return Vec::new();
    }
    let mut v = Vec::new();
    let mut a = 0;
    while a + size <= dim {
        v.push(a);
        a += step;
    }
    let last = dim - size;
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Cut co-located `size x size` patch pairs on a grid with the given
/// overlap; the last row/column is anchored to the image edge so coverage
/// is complete. Images smaller than the patch yield an empty list.
pub fn extract_patches(
    lr: &LumaImage,
    hr: &LumaImage,
    size: usize,
    overlap: usize,
) -> Vec<PatchPair> {
    assert_eq!(
        (lr.height(), lr.width()),
        (hr.height(), hr.width()),
        "patch extraction needs co-located planes"
    );
    let step = size - overlap;
    let rows = anchors(lr.height(), size, step);
    let cols = anchors(lr.width(), size, step);
    if rows.is_empty() || cols.is_empty() {
        log::warn!(
            "image {}x{} smaller than patch {size}; no patches",
            lr.height(),
            lr.width()
        );
        return Vec::new();
    }
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            out.push(PatchPair {
                lr: lr.crop(r, c, size, size).expect("anchor in bounds"),
                hr: hr.crop(r, c, size, size).expect("anchor in bounds"),
            });
        }
    }
    out
}

// --- Adam ---------------------------------------------------------------------

/// First/second moment estimates mirroring the trainable parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &Network, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            m: GradientSet::zeros_like(net),
            v: GradientSet::zeros_like(net),
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

#[inline]
fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    state: (f64, f64, f64),
    bc: (f64, f64),
    lr: f64,
) {
    let (beta1, beta2, eps) = state;
    let (bc1, bc2) = bc;
    for i in 0..theta.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One bias-corrected Adam step over every trainable parameter group.
/// The transform bank moves only when the gradient set carries bank terms.
pub fn adam_step(
    net: &mut Network,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.d_weights.len() != net.layers.len() {
        return Err(Error::mismatch("gradient layer count differs from network"));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let consts = (state.beta1, state.beta2, state.epsilon);
    for (l, layer) in net.layers.iter_mut().enumerate() {
        if grads.d_weights[l].dims() != layer.weights.dims() {
            return Err(Error::mismatch("gradient tensor shape differs from layer"));
        }
        adam_update(
            layer.weights.values_mut(),
            grads.d_weights[l].values(),
            state.m.d_weights[l].values_mut(),
            state.v.d_weights[l].values_mut(),
            consts,
            (bc1, bc2),
            lr,
        );
        adam_update(
            &mut layer.biases,
            &grads.d_biases[l],
            &mut state.m.d_biases[l],
            &mut state.v.d_biases[l],
            consts,
            (bc1, bc2),
            lr,
        );
    }
    if let Some(d_bank) = &grads.d_bank {
        let (sm, sv) = (
            state.m.d_bank.as_mut().ok_or_else(|| {
                Error::mismatch("optimizer state lacks bank moments")
            })?,
            state.v.d_bank.as_mut().unwrap(),
        );
        for (i, filt) in net.bank.filters_mut().iter_mut().enumerate() {
            adam_update(
                filt.values_mut(),
                &d_bank[i],
                &mut sm[i],
                &mut sv[i],
                consts,
                (bc1, bc2),
                lr,
            );
        }
    }
    Ok(())
}

/// Step decay: `lr0 * decay^(epoch / every)`.
pub fn lr_for_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((epoch / cfg.lr_decay_every) as i32)
}

// --- the training loop ----------------------------------------------------------

/// One logged optimization step.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub phase: usize,
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// Result of a training run.
pub struct TrainOutcome {
    pub net: Network,
    pub history: Vec<StepRecord>,
    pub final_checkpoint: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

/// Prepare the patch list: augment (optionally), crop each variant to scale
/// multiples, degrade, and cut co-located pairs.
pub fn prepare_patches(cfg: &TrainConfig, dataset: &[LumaImage]) -> Result<Vec<PatchPair>> {
    let mut pairs = Vec::new();
    for img in dataset {
        let variants = if cfg.augment {
            augment(img)
        } else {
            vec![img.clone()]
        };
        for v in variants {
            let hr = crop_to_multiple(&v, cfg.scale);
            if hr.height() < cfg.patch || hr.width() < cfg.patch {
                continue;
            }
            let lr = degrade(&v, cfg.scale)?;
            pairs.extend(extract_patches(&lr, &hr, cfg.patch, cfg.overlap));
        }
    }
    if pairs.is_empty() {
        return Err(Error::invalid(
            "dataset produced no patches (images smaller than the patch size?)",
        ));
    }
    Ok(pairs)
}

/// Build the initial network for a config: DCT-initialized bank (random for
/// the random-initialization variant), Xavier CNN, constraints off (they are
/// enabled when the second phase starts).
pub fn init_network(cfg: &TrainConfig) -> Result<Network> {
    let t = cfg.resolved_t();
    let bank = if cfg.variant.dct_initialized() {
        dct_basis(cfg.n)?
    } else {
        random_bank(cfg.n, derive_seed(cfg.seed, 0xb4))?
    };
    let shapes = architecture(cfg.n, t, cfg.depth, cfg.filters, cfg.kernel_first, cfg.kernel_rest);
    let depth = shapes.len();
    let layers: Vec<ConvLayer> = shapes
        .iter()
        .enumerate()
        .map(|(l, &(m, c, k))| {
            let act = if l + 1 < depth || cfg.final_relu {
                Activation::Relu
            } else {
                Activation::None
            };
            ConvLayer::xavier(m, c, k, act, derive_seed(cfg.seed, 1 + l as u64))
        })
        .collect();
    Network::new(
        bank,
        layers,
        t,
        cfg.stride,
        cfg.variant,
        0.0,
        0.0,
        cfg.sigma,
        cfg.final_relu,
    )
}

fn write_log_line(file: &mut Option<std::fs::File>, record: &StepRecord) -> Result<()> {
    if let Some(f) = file {
        use std::io::Write;
        serde_json::to_writer(&mut *f, record)?;
        writeln!(f)?;
    }
    Ok(())
}

/// Run both training phases over the dataset. With `out_dir` set, writes
/// per-epoch checkpoints (atomically), a final checkpoint, and a
/// line-delimited JSON training log.
pub fn train(
    cfg: &TrainConfig,
    dataset: &[LumaImage],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("dataset must be non-empty"));
    }
    let pairs = prepare_patches(cfg, dataset)?;
    log::info!("training on {} patch pairs", pairs.len());

    let mut net = init_network(cfg)?;
    let mut history = Vec::new();
    let mut sampler = seeded(cfg.seed, Stream::Batches);
    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(std::fs::File::create(dir.join("train_log.jsonl"))?)
        }
        None => None,
    };
    let log_path = out_dir.map(|d| d.join("train_log.jsonl"));

    let steps_per_epoch = pairs.len().div_ceil(cfg.batch);
    for phase in 1..=2usize {
        if phase == 2 {
            net.cdct_trainable = cfg.variant.cdct_trainable();
            net.gamma = if cfg.variant.uses_orthogonality() {
                cfg.gamma
            } else {
                0.0
            };
            net.lambda = if cfg.variant.uses_complexity() {
                cfg.lambda
            } else {
                0.0
            };
        }
        let mut state = AdamState::new(&net, cfg.beta1, cfg.beta2, cfg.epsilon);
        for epoch in 0..cfg.epochs_per_phase {
            let lr = lr_for_epoch(cfg, epoch);
            for step in 0..steps_per_epoch {
                let batch: Vec<(&LumaImage, &LumaImage)> = (0..cfg.batch)
                    .map(|_| {
                        let i = sampler.random_range(0..pairs.len());
                        (&pairs[i].lr, &pairs[i].hr)
                    })
                    .collect();
                let (loss, mut grads) = batch_loss_and_gradients(&net, &batch)?;
                if !loss.total.is_finite() {
                    let ckpt = out_dir
                        .map(|d| d.join("ckpt_diverged.bin"))
                        .unwrap_or_else(|| PathBuf::from("ckpt_diverged.bin"));
                    save_checkpoint(&ckpt, &net, cfg.scale, cfg.dtype, None)?;
                    return Err(Error::Diverged {
                        phase,
                        step: epoch * steps_per_epoch + step,
                        checkpoint: ckpt.display().to_string(),
                    });
                }
                clip_in_place(&mut grads, cfg.clip, cfg.clip_mode)?;
                adam_step(&mut net, &grads, &mut state, lr)?;
                let record = StepRecord {
                    phase,
                    epoch,
                    step,
                    lr,
                    loss,
                };
                write_log_line(&mut log_file, &record)?;
                history.push(record);
            }
            if let Some(dir) = out_dir {
                save_checkpoint(
                    &checkpoint_path(dir, phase, epoch),
                    &net,
                    cfg.scale,
                    cfg.dtype,
                    None,
                )?;
            }
        }
    }

    let final_checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join("ckpt_final.bin");
            let extra = serde_json::to_value(cfg)?;
            save_checkpoint(&path, &net, cfg.scale, cfg.dtype, Some(extra))?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutcome {
        net,
        history,
        final_checkpoint,
        log_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn rot90_pixel_mapping_is_exact() {
        let img = LumaImage::from_fn(5, 7, |r, c| (r * 7 + c) as f64);
        let rotated = img.rot90();
        assert_eq!(rotated.height(), 7);
        assert_eq!(rotated.width(), 5);
        for r in 0..5 {
            for c in 0..7 {
                assert_eq!(rotated.get(c, 5 - 1 - r), img.get(r, c));
            }
        }
    }

    #[test]
    fn augment_produces_thirteen_variants_in_fixed_order() {
        let img = synth::scene(40, 50, 3);
        let a = augment(&img);
        assert_eq!(a.len(), 13);
        assert_eq!(a[0], img, "variant 0 is the identity");
        assert_eq!(a[2], img.rot90());
        assert_eq!(a[4], img.rot180());
        assert_eq!(a[6], img.rot270());
        assert_eq!(a[8], img.flip_horizontal());
        assert_eq!(a[9], img.flip_vertical());
        // Scales land on rounded dims.
        assert_eq!((a[10].height(), a[10].width()), (28, 35));
        assert_eq!((a[11].height(), a[11].width()), (32, 40));
        assert_eq!((a[12].height(), a[12].width()), (36, 45));
        // Deterministic.
        let b = augment(&img);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn double_flip_is_identity() {
        let img = synth::scene(30, 30, 4);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_vertical().flip_vertical(), img);
    }

    #[test]
    fn rotate_cropped_square_45_dims() {
        let img = LumaImage::constant(64, 64, 0.5);
        let r = rotate_cropped(&img, 45.0);
        // Largest inscribed axis-aligned square has side 64/sqrt(2) ~ 45.25.
        assert_eq!((r.height(), r.width()), (45, 45));
        for &v in r.data() {
            assert!((v - 0.5).abs() < 1e-9, "constant image must stay constant");
        }
    }

    #[test]
    fn degrade_preserves_constants_and_dims() {
        let img = LumaImage::constant(100, 97, 0.42);
        let lr = degrade(&img, 3).unwrap();
        assert_eq!((lr.height(), lr.width()), (99, 96));
        for &v in lr.data() {
            assert!((v - 0.42).abs() < 1e-9);
        }
    }

    #[test]
    fn degrade_attenuates_high_band_more() {
        // The per-index gap between an image's cube profile and its degraded
        // version's grows with the index.
        let bank = dct_basis(8).unwrap();
        let img = synth::scene(96, 96, 11);
        let hr = crop_to_multiple(&img, 3);
        let lr = degrade(&img, 3).unwrap();
        let ph = crate::imaging::spectrum_profile(&hr, &bank, 2).unwrap();
        let pl = crate::imaging::spectrum_profile(&lr, &bank, 2).unwrap();
        let idx: Vec<f64> = (1..=64).map(|i| i as f64).collect();
        let gap: Vec<f64> = ph.iter().zip(&pl).map(|(a, b)| (a - b).abs()).collect();
        let rho = crate::stats::spearman(&idx, &gap);
        assert!(rho > 0.0, "gap/index rank correlation {rho}");
    }

    #[test]
    fn patch_grid_anchors() {
        assert_eq!(anchors(100, 40, 30), vec![0, 30, 60]);
        assert_eq!(anchors(40, 40, 30), vec![0]);
        assert_eq!(anchors(72, 40, 30), vec![0, 30, 32]);
        assert_eq!(anchors(39, 40, 30), Vec::<usize>::new());
    }

    #[test]
    fn extract_patches_counts_and_colocation() {
        let hr = synth::scene(100, 100, 5);
        let lr = degrade(&hr, 2).unwrap();
        let pairs = extract_patches(&lr, &hr, 40, 10);
        assert_eq!(pairs.len(), 9);
        for p in &pairs {
            assert_eq!((p.lr.height(), p.lr.width()), (40, 40));
            assert_eq!((p.hr.height(), p.hr.width()), (40, 40));
        }
        // Co-location: the first patch matches a direct crop.
        assert_eq!(pairs[0].hr, hr.crop(0, 0, 40, 40).unwrap());
        assert_eq!(pairs[0].lr, lr.crop(0, 0, 40, 40).unwrap());

        let single = extract_patches(&lr.crop(0, 0, 40, 40).unwrap(), &hr.crop(0, 0, 40, 40).unwrap(), 40, 10);
        assert_eq!(single.len(), 1);

        let none = extract_patches(
            &lr.crop(0, 0, 30, 30).unwrap(),
            &hr.crop(0, 0, 30, 30).unwrap(),
            40,
            10,
        );
        assert!(none.is_empty());
    }

    #[test]
    fn adam_first_step_hand_value() {
        // Single coordinate, g = 1, lr = 0.1: bias-corrected m_hat = v_hat = 1,
        // so the update is -0.1 / (1 + eps).
        let mut cfg = TrainConfig::desk_preset();
        cfg.depth = 2;
        cfg.filters = 2;
        cfg.n = 4;
        cfg.patch = 12;
        let mut net = init_network(&cfg).unwrap();
        let before = net.layers[0].biases[0];
        let mut grads = GradientSet::zeros_like(&net);
        grads.d_biases[0][0] = 1.0;
        let mut state = AdamState::new(&net, 0.9, 0.999, 1e-8);
        adam_step(&mut net, &grads, &mut state, 0.1).unwrap();
        let delta = net.layers[0].biases[0] - before;
        assert!((delta + 0.1 / (1.0 + 1e-8)).abs() < 1e-12, "delta {delta}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut cfg = TrainConfig::desk_preset();
        cfg.depth = 2;
        cfg.filters = 2;
        cfg.n = 4;
        let mut net = init_network(&cfg).unwrap();
        let snapshot = net.clone();
        let grads = GradientSet::zeros_like(&net);
        let mut state = AdamState::new(&net, 0.9, 0.999, 1e-8);
        adam_step(&mut net, &grads, &mut state, 0.1).unwrap();
        assert_eq!(state.step, 1);
        for (a, b) in net.layers.iter().zip(&snapshot.layers) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.biases, b.biases);
        }
    }

    #[test]
    fn lr_schedule_quarters_every_thirty_epochs() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_for_epoch(&cfg, 0), 1e-4);
        assert_eq!(lr_for_epoch(&cfg, 29), 1e-4);
        assert!((lr_for_epoch(&cfg, 30) - 7.5e-5).abs() < 1e-18);
        assert!((lr_for_epoch(&cfg, 59) - 7.5e-5).abs() < 1e-18);
        assert!((lr_for_epoch(&cfg, 60) - 5.625e-5).abs() < 1e-18);
        assert!((lr_for_epoch(&cfg, 79) - 5.625e-5).abs() < 1e-18);
    }

    #[test]
    fn config_validation_catches_bad_knobs() {
        let mut cfg = TrainConfig::default();
        cfg.stride = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.patch = 6;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.t = Some(65);
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::desk_preset().validate().is_ok());
    }

    fn smoke_config(variant: Variant) -> TrainConfig {
        TrainConfig {
            variant,
            depth: 3,
            filters: 6,
            epochs_per_phase: 2,
            batch: 8,
            patch: 24,
            overlap: 4,
            augment: false,
            lr0: 1e-3,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_descends_and_is_reproducible() {
        let data = synth::dataset(3, 48, 48, 77);
        let cfg = smoke_config(Variant::Ordsr);
        let out1 = train(&cfg, &data, None).unwrap();
        let out2 = train(&cfg, &data, None).unwrap();
        // Bitwise reproducibility of the learned parameters.
        assert_eq!(out1.net.bank, out2.net.bank);
        for (a, b) in out1.net.layers.iter().zip(&out2.net.layers) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.biases, b.biases);
        }
        // Descent on the data term.
        let first = out1.history.first().unwrap().loss.mse;
        let last = out1.history.last().unwrap().loss.mse;
        assert!(last < first, "mse {first} -> {last}");
    }

    #[test]
    fn frozen_transform_variant_keeps_bank_bitwise() {
        let data = synth::dataset(2, 48, 48, 78);
        let cfg = smoke_config(Variant::DctDsr);
        let out = train(&cfg, &data, None).unwrap();
        let reference = dct_basis(cfg.n).unwrap();
        assert_eq!(out.net.bank, reference, "frozen bank must not move");
    }

    #[test]
    fn phase_one_keeps_bank_frozen_for_all_variants() {
        let data = synth::dataset(2, 48, 48, 79);
        let mut cfg = smoke_config(Variant::Ordsr);
        cfg.epochs_per_phase = 1;
        let out = train(&cfg, &data, None).unwrap();
        // After phase 2 the bank has moved away from the DCT point.
        assert_ne!(out.net.bank, dct_basis(cfg.n).unwrap());
        assert!(out.net.cdct_trainable);
        assert_eq!(out.net.gamma, cfg.gamma);
        assert_eq!(out.net.lambda, cfg.lambda);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let cfg = smoke_config(Variant::Ordsr);
        assert!(train(&cfg, &[], None).is_err());
    }

    #[test]
    fn checkpoints_written_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let data = synth::dataset(2, 48, 48, 80);
        let cfg = smoke_config(Variant::Ordsr);
        let out = train(&cfg, &data, Some(dir.path())).unwrap();
        for phase in 1..=2 {
            for epoch in 0..cfg.epochs_per_phase {
                assert!(checkpoint_path(dir.path(), phase, epoch).exists());
            }
        }
        let final_path = out.final_checkpoint.unwrap();
        assert!(final_path.exists());
        let (net, meta) = crate::container::load_checkpoint(&final_path).unwrap();
        assert_eq!(meta.scale, cfg.scale);
        assert_eq!(net.bank, out.net.bank);
        assert!(out.log_path.unwrap().exists());
    }
}
