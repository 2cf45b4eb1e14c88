//! Image planes, the deterministic bicubic resampler, BT.601 color
//! conversion, quality metrics, and lossless I/O.
//!
//! Super-resolution operates on the luminance plane only; chrominance is
//! carried alongside and enlarged by the same bicubic kernel at inference.

use serde::{Deserialize, Serialize};

use crate::cdct;
use crate::error::{Error, Result};
use crate::transform::FilterBank;

/// A single H x W plane of real values, nominally in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LumaImage {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl LumaImage {
    pub fn zeros(h: usize, w: usize) -> Self {
        LumaImage {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::mismatch(format!(
                "plane expects {} values, got {}",
                h * w,
                data.len()
            )));
        }
        Ok(LumaImage { h, w, data })
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                data.push(f(r, c));
            }
        }
        LumaImage { h, w, data }
    }

    pub fn constant(h: usize, w: usize, value: f64) -> Self {
        LumaImage {
            h,
            w,
            data: vec![value; h * w],
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.w + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.w + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.w..(r + 1) * self.w]
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<LumaImage> {
        if top + h > self.h || left + w > self.w {
            return Err(Error::invalid("crop window exceeds image bounds"));
        }
        Ok(LumaImage::from_fn(h, w, |r, c| self.get(top + r, left + c)))
    }

    /// Clockwise quarter turn: pixel (r, c) moves to (c, H-1-r).
    pub fn rot90(&self) -> LumaImage {
        LumaImage::from_fn(self.w, self.h, |r, c| self.get(self.h - 1 - c, r))
    }

    pub fn rot180(&self) -> LumaImage {
        LumaImage::from_fn(self.h, self.w, |r, c| {
            self.get(self.h - 1 - r, self.w - 1 - c)
        })
    }

    pub fn rot270(&self) -> LumaImage {
        LumaImage::from_fn(self.w, self.h, |r, c| self.get(c, self.w - 1 - r))
    }

    /// Mirror columns.
    pub fn flip_horizontal(&self) -> LumaImage {
        LumaImage::from_fn(self.h, self.w, |r, c| self.get(r, self.w - 1 - c))
    }

    /// Mirror rows.
    pub fn flip_vertical(&self) -> LumaImage {
        LumaImage::from_fn(self.h, self.w, |r, c| self.get(self.h - 1 - r, c))
    }

    pub fn max_abs_diff(&self, other: &LumaImage) -> f64 {
        debug_assert_eq!((self.h, self.w), (other.h, other.w));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Luminance plane plus optional chrominance planes (all same dims).
#[derive(Debug, Clone)]
pub struct ColorImage {
    pub y: LumaImage,
    pub chroma: Option<(LumaImage, LumaImage)>,
}

impl ColorImage {
    pub fn grayscale(y: LumaImage) -> Self {
        ColorImage { y, chroma: None }
    }
}

/// Quality metrics for one image pair; `crop` border pixels were excluded
/// on each side before evaluation. `psnr_db` is `f64::INFINITY` for
/// identical inputs (serialized as JSON null).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QualityReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub crop: usize,
}

// ---------------------------------------------------------------------------
// Bicubic resampling (Keys kernel, a = -0.5)
// ---------------------------------------------------------------------------

/// Keys cubic kernel with a = -0.5.
#[inline]
pub fn keys_kernel(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

#[inline]
fn resample_line(src: &[f64], s: f64) -> f64 {
    let base = s.floor();
    let frac = s - base;
    let base = base as isize;
    let n = src.len() as isize;
    let mut acc = 0.0;
    for k in -1..=2isize {
        let idx = (base + k).clamp(0, n - 1) as usize;
        acc += keys_kernel(frac - k as f64) * src[idx];
    }
    acc
}

/// Resize to explicit target dims with the separable bicubic kernel,
/// edge-clamped. Sample positions align plane centers:
/// `src = (dst + 0.5) * in/out - 0.5`.
pub fn bicubic_resize(img: &LumaImage, out_h: usize, out_w: usize) -> Result<LumaImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("target dims must be positive"));
    }
    // Horizontal pass.
    let sx = img.width() as f64 / out_w as f64;
    let mut horiz = LumaImage::zeros(img.height(), out_w);
    for r in 0..img.height() {
        let src = img.row(r);
        for c in 0..out_w {
            let s = (c as f64 + 0.5) * sx - 0.5;
            horiz.set(r, c, resample_line(src, s));
        }
    }
    // Vertical pass.
    let sy = img.height() as f64 / out_h as f64;
    let mut col = vec![0.0; img.height()];
    let mut out = LumaImage::zeros(out_h, out_w);
    for c in 0..out_w {
        for r in 0..img.height() {
            col[r] = horiz.get(r, c);
        }
        for r in 0..out_h {
            let s = (r as f64 + 0.5) * sy - 0.5;
            out.set(r, c, resample_line(&col, s));
        }
    }
    Ok(out)
}

/// Resize by a scale factor; target dims are rounded.
pub fn bicubic_scale(img: &LumaImage, factor: f64) -> Result<LumaImage> {
    if factor <= 0.0 {
        return Err(Error::invalid("scale factor must be positive"));
    }
    let out_h = ((img.height() as f64 * factor).round() as usize).max(1);
    let out_w = ((img.width() as f64 * factor).round() as usize).max(1);
    bicubic_resize(img, out_h, out_w)
}

/// Bicubic point sample at fractional coordinates (row, col), edge-clamped.
pub fn sample_bicubic(img: &LumaImage, y: f64, x: f64) -> f64 {
    let by = y.floor();
    let bx = x.floor();
    let fy = y - by;
    let fx = x - bx;
    let (by, bx) = (by as isize, bx as isize);
    let h = img.height() as isize;
    let w = img.width() as isize;
    let mut acc = 0.0;
    for ky in -1..=2isize {
        let wy = keys_kernel(fy - ky as f64);
        if wy == 0.0 {
            continue;
        }
        let r = (by + ky).clamp(0, h - 1) as usize;
        let mut row_acc = 0.0;
        for kx in -1..=2isize {
            let c = (bx + kx).clamp(0, w - 1) as usize;
            row_acc += keys_kernel(fx - kx as f64) * img.get(r, c);
        }
        acc += wy * row_acc;
    }
    acc
}

// ---------------------------------------------------------------------------
// BT.601 full-range color conversion
// ---------------------------------------------------------------------------

/// RGB triple (each in [0,1]) to full-range BT.601 YCbCr with 0.5 chroma offset.
#[inline]
pub fn rgb_to_ycbcr_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = (b - y) / 1.772 + 0.5;
    let cr = (r - y) / 1.402 + 0.5;
    (y, cb, cr)
}

#[inline]
pub fn ycbcr_to_rgb_pixel(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let r = y + 1.402 * (cr - 0.5);
    let b = y + 1.772 * (cb - 0.5);
    let g = (y - 0.299 * r - 0.114 * b) / 0.587;
    (r, g, b)
}

/// Convert RGB planes to (Y, Cb, Cr) planes.
pub fn rgb_to_ycbcr(r: &LumaImage, g: &LumaImage, b: &LumaImage) -> (LumaImage, LumaImage, LumaImage) {
    let (h, w) = (r.height(), r.width());
    let mut y = LumaImage::zeros(h, w);
    let mut cb = LumaImage::zeros(h, w);
    let mut cr = LumaImage::zeros(h, w);
    for i in 0..h * w {
        let (yy, ucb, ucr) = rgb_to_ycbcr_pixel(r.data()[i], g.data()[i], b.data()[i]);
        y.data_mut()[i] = yy;
        cb.data_mut()[i] = ucb;
        cr.data_mut()[i] = ucr;
    }
    (y, cb, cr)
}

/// Convert (Y, Cb, Cr) planes back to RGB planes.
pub fn ycbcr_to_rgb(y: &LumaImage, cb: &LumaImage, cr: &LumaImage) -> (LumaImage, LumaImage, LumaImage) {
    let (h, w) = (y.height(), y.width());
    let mut r = LumaImage::zeros(h, w);
    let mut g = LumaImage::zeros(h, w);
    let mut b = LumaImage::zeros(h, w);
    for i in 0..h * w {
        let (rr, gg, bb) = ycbcr_to_rgb_pixel(y.data()[i], cb.data()[i], cr.data()[i]);
        r.data_mut()[i] = rr;
        g.data_mut()[i] = gg;
        b.data_mut()[i] = bb;
    }
    (r, g, b)
}

// ---------------------------------------------------------------------------
// Quality metrics
// ---------------------------------------------------------------------------

/// Peak signal-to-noise ratio in dB for unit-range planes, after excluding
/// `border_crop` pixels on every side. Identical inputs yield `+inf`.
pub fn psnr(a: &LumaImage, b: &LumaImage, border_crop: usize) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::mismatch("psnr operands must share dims"));
    }
    if a.height() <= 2 * border_crop || a.width() <= 2 * border_crop {
        return Err(Error::invalid("border crop leaves no pixels"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in border_crop..a.height() - border_crop {
        for c in border_crop..a.width() - border_crop {
            let d = a.get(r, c) - b.get(r, c);
            sum += d * d;
            count += 1;
        }
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as isize - r;
        *v = (-(d * d) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Mean structural similarity over all fully supported 11x11 Gaussian
/// windows (sigma 1.5), unit dynamic range. Population (weighted) moments,
/// matching the reference convention used for the frozen fixtures.
pub fn ssim(a: &LumaImage, b: &LumaImage) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::mismatch("ssim operands must share dims"));
    }
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::invalid("ssim needs at least an 11x11 image"));
    }
    let kernel = ssim_kernel();
    let c1 = (SSIM_K1) * (SSIM_K1);
    let c2 = (SSIM_K2) * (SSIM_K2);
    let rad = SSIM_WINDOW / 2;
    let mut total = 0.0;
    let mut count = 0usize;
    for cy in rad..a.height() - rad {
        for cx in rad..a.width() - rad {
            let mut ux = 0.0;
            let mut uy = 0.0;
            let mut uxx = 0.0;
            let mut uyy = 0.0;
            let mut uxy = 0.0;
            for (iy, wy) in kernel.iter().enumerate() {
                let r = cy + iy - rad;
                for (ix, wx) in kernel.iter().enumerate() {
                    let c = cx + ix - rad;
                    let w = wy * wx;
                    let va = a.get(r, c);
                    let vb = b.get(r, c);
                    ux += w * va;
                    uy += w * vb;
                    uxx += w * va * va;
                    uyy += w * vb * vb;
                    uxy += w * va * vb;
                }
            }
            let vx = uxx - ux * ux;
            let vy = uyy - uy * uy;
            let vxy = uxy - ux * uy;
            let s = ((2.0 * ux * uy + c1) * (2.0 * vxy + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean absolute coefficient per cube index: the per-filter response
/// profile of an image under the given bank and stride.
pub fn spectrum_profile(img: &LumaImage, bank: &FilterBank, stride: usize) -> Result<Vec<f64>> {
    let cube = cdct::cdct_forward(img, bank, stride)?;
    Ok(cube
        .maps()
        .iter()
        .map(|m| m.iter().map(|v| v.abs()).sum::<f64>() / m.len() as f64)
        .collect())
}

// ---------------------------------------------------------------------------
// File I/O (PNG and PGM, 8/16-bit, values mapped to [0,1])
// ---------------------------------------------------------------------------

/// Read a PNG or PGM file into planes. 8-bit samples map to `v/255`,
/// 16-bit to `v/65535`. RGB inputs are converted to YCbCr.
pub fn read_image(path: &std::path::Path) -> Result<ColorImage> {
    let dynimg = image::open(path)?;
    use image::DynamicImage::*;
    let gray = matches!(
        dynimg,
        ImageLuma8(_) | ImageLumaA8(_) | ImageLuma16(_) | ImageLumaA16(_)
    );
    if gray {
        let img = dynimg.to_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let y = LumaImage::from_fn(h, w, |r, c| {
            img.get_pixel(c as u32, r as u32)[0] as f64 / 65535.0
        });
        Ok(ColorImage::grayscale(y))
    } else {
        let img = dynimg.to_rgb16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let plane = |ch: usize| {
            LumaImage::from_fn(h, w, |r, c| {
                img.get_pixel(c as u32, r as u32)[ch] as f64 / 65535.0
            })
        };
        let (y, cb, cr) = rgb_to_ycbcr(&plane(0), &plane(1), &plane(2));
        Ok(ColorImage {
            y,
            chroma: Some((cb, cr)),
        })
    }
}

/// Convenience: luminance plane of a file.
pub fn read_luma(path: &std::path::Path) -> Result<LumaImage> {
    Ok(read_image(path)?.y)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write an image as 8-bit PNG or PGM depending on the file extension.
/// Grayscale images always produce a single-channel file.
pub fn write_image(path: &std::path::Path, img: &ColorImage) -> Result<()> {
    let (h, w) = (img.y.height() as u32, img.y.width() as u32);
    match &img.chroma {
        None => {
            let buf = image::GrayImage::from_fn(w, h, |c, r| {
                image::Luma([to_u8(img.y.get(r as usize, c as usize))])
            });
            buf.save(path)?;
        }
        Some((cb, cr)) => {
            let (rp, gp, bp) = ycbcr_to_rgb(&img.y, cb, cr);
            let buf = image::RgbImage::from_fn(w, h, |c, r| {
                let (r, c) = (r as usize, c as usize);
                image::Rgb([to_u8(rp.get(r, c)), to_u8(gp.get(r, c)), to_u8(bp.get(r, c))])
            });
            buf.save(path)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_weights_at_half_phase() {
        let w = [
            keys_kernel(1.5),
            keys_kernel(0.5),
            keys_kernel(-0.5),
            keys_kernel(-1.5),
        ];
        assert_eq!(w, [-0.0625, 0.5625, 0.5625, -0.0625]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_partition_of_unity_on_dense_phase_grid() {
        for step in 0..=1000 {
            let phase = step as f64 / 1000.0;
            let sum: f64 = (-1..=2).map(|k| keys_kernel(phase - k as f64)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "phase {phase} sums to {sum}");
        }
    }

    #[test]
    fn resize_factor_one_is_identity() {
        let img = LumaImage::from_fn(9, 7, |r, c| (r * 7 + c) as f64 / 63.0);
        let out = bicubic_resize(&img, 9, 7).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn resize_preserves_constants() {
        let img = LumaImage::constant(12, 20, 0.42);
        for &(h, w) in &[(24, 40), (6, 10), (17, 13)] {
            let out = bicubic_resize(&img, h, w).unwrap();
            for &v in out.data() {
                assert!((v - 0.42).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsampled_ramp_stays_linear_at_midpoints() {
        // A 1-row ramp doubled in width: interior midpoint samples must land
        // exactly on the line because the kernel reproduces linear signals.
        let img = LumaImage::from_fn(1, 16, |_, c| c as f64);
        let out = bicubic_resize(&img, 1, 32).unwrap();
        // Output sample c maps to source position (c + 0.5)/2 - 0.5.
        for c in 4..28 {
            let s = (c as f64 + 0.5) / 2.0 - 0.5;
            assert!(
                (out.get(0, c) - s).abs() < 1e-12,
                "sample {c}: {} vs {s}",
                out.get(0, c)
            );
        }
    }

    #[test]
    fn degenerate_target_rejected() {
        let img = LumaImage::constant(4, 4, 0.0);
        assert!(bicubic_resize(&img, 0, 4).is_err());
        assert!(bicubic_scale(&img, 0.0).is_err());
    }

    #[test]
    fn white_maps_to_unit_luma_neutral_chroma() {
        let (y, cb, cr) = rgb_to_ycbcr_pixel(1.0, 1.0, 1.0);
        assert!((y - 1.0).abs() < 1e-12);
        assert!((cb - 0.5).abs() < 1e-12);
        assert!((cr - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ycbcr_round_trip() {
        for r in 0..=10 {
            for g in 0..=10 {
                for b in 0..=10 {
                    let (rf, gf, bf) = (r as f64 / 10.0, g as f64 / 10.0, b as f64 / 10.0);
                    let (y, cb, cr) = rgb_to_ycbcr_pixel(rf, gf, bf);
                    let (r2, g2, b2) = ycbcr_to_rgb_pixel(y, cb, cr);
                    assert!((rf - r2).abs() < 1e-6);
                    assert!((gf - g2).abs() < 1e-6);
                    assert!((bf - b2).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn gray_ramp_keeps_luma_constant_chroma() {
        let ramp = LumaImage::from_fn(4, 8, |_, c| c as f64 / 7.0);
        let (y, cb, cr) = rgb_to_ycbcr(&ramp, &ramp, &ramp);
        assert!(y.max_abs_diff(&ramp) < 1e-12);
        for &v in cb.data().iter().chain(cr.data()) {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn psnr_uniform_error() {
        let a = LumaImage::constant(16, 16, 0.5);
        let b = LumaImage::constant(16, 16, 0.6);
        let p = psnr(&a, &b, 0).unwrap();
        assert!((p - 20.0).abs() < 1e-9);
        assert_eq!(
            psnr(&a, &b, 2).unwrap(),
            psnr(&b, &a, 2).unwrap(),
            "psnr must be symmetric"
        );
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = LumaImage::constant(8, 8, 0.3);
        assert!(psnr(&a, &a, 1).unwrap().is_infinite());
    }

    #[test]
    fn psnr_rejects_dim_mismatch() {
        let a = LumaImage::constant(8, 8, 0.0);
        let b = LumaImage::constant(8, 9, 0.0);
        assert!(psnr(&a, &b, 0).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let img = LumaImage::from_fn(20, 20, |r, c| ((r * 31 + c * 17) % 13) as f64 / 13.0);
        let s = ssim(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_inverted_checkerboard_is_negative() {
        let a = LumaImage::from_fn(24, 24, |r, c| ((r + c) % 2) as f64);
        let b = LumaImage::from_fn(24, 24, |r, c| 1.0 - ((r + c) % 2) as f64);
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.0, "anti-correlated structure gave ssim {s}");
        let s_rev = ssim(&b, &a).unwrap();
        assert!((s - s_rev).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = LumaImage::constant(8, 8, 0.0);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn rotations_compose() {
        let img = LumaImage::from_fn(5, 7, |r, c| (r * 7 + c) as f64);
        assert_eq!(img.rot90().rot90(), img.rot180());
        assert_eq!(img.rot90().rot270(), img);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        // Pinned mapping: (r, c) -> (c, H-1-r).
        assert_eq!(img.rot90().get(3, 5 - 1 - 2), img.get(2, 3));
    }

    #[test]
    fn png_round_trip_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = LumaImage::from_fn(9, 11, |r, c| ((r * 11 + c) % 256) as f64 / 255.0);
        write_image(&path, &ColorImage::grayscale(img.clone())).unwrap();
        let back = read_luma(&path).unwrap();
        assert!(img.max_abs_diff(&back) < 1e-12);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let img = LumaImage::from_fn(6, 6, |r, c| ((r * 6 + c) * 7 % 256) as f64 / 255.0);
        write_image(&path, &ColorImage::grayscale(img.clone())).unwrap();
        let back = read_luma(&path).unwrap();
        assert!(img.max_abs_diff(&back) < 1e-12);
    }
}
