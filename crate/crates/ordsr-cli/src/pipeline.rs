//! End-to-end inference: bicubic pre-enlargement, the transform-domain
//! restoration pass, chrominance handling, and the geometric self-ensemble.

use ordsr_core::imaging::{bicubic_resize, ColorImage, LumaImage};
use ordsr_core::{Network, Result};

/// Reflect-pad on the bottom/right so both dims are multiples of `s`.
/// Returns the padded plane and whether padding was applied.
pub fn pad_to_multiple(img: &LumaImage, s: usize) -> (LumaImage, bool) {
    let (h, w) = (img.height(), img.width());
    let ph = h.div_ceil(s) * s;
    let pw = w.div_ceil(s) * s;
    if ph == h && pw == w {
        return (img.clone(), false);
    }
    let padded = LumaImage::from_fn(ph, pw, |r, c| {
        // Mirror about the last row/column (edge not repeated).
        let rr = if r < h { r } else { 2 * h - 2 - r };
        let cc = if c < w { c } else { 2 * w - 2 - c };
        img.get(rr, cc)
    });
    (padded, true)
}

/// Run the restoration network on a pre-enlarged luminance plane of
/// arbitrary dims: pad to a stride multiple, infer, crop back.
pub fn infer_luma(net: &Network, x: &LumaImage) -> Result<(LumaImage, bool)> {
    let (padded, was_padded) = pad_to_multiple(x, net.stride);
    let out = net.infer(&padded)?;
    let out = if was_padded {
        out.crop(0, 0, x.height(), x.width())?
    } else {
        out
    };
    Ok((out, was_padded))
}

/// The eight geometric transforms (identity, three rotations, vertical
/// flip, and flip-rotation combinations) with their inverses.
fn transforms() -> [(
    fn(&LumaImage) -> LumaImage,
    fn(&LumaImage) -> LumaImage,
); 8] {
    [
        (|x| x.clone(), |y| y.clone()),
        (|x| x.rot90(), |y| y.rot270()),
        (|x| x.rot180(), |y| y.rot180()),
        (|x| x.rot270(), |y| y.rot90()),
        (|x| x.flip_vertical(), |y| y.flip_vertical()),
        (
            |x| x.rot90().flip_vertical(),
            |y| y.flip_vertical().rot270(),
        ),
        (
            |x| x.rot180().flip_vertical(),
            |y| y.flip_vertical().rot180(),
        ),
        (
            |x| x.rot270().flip_vertical(),
            |y| y.flip_vertical().rot90(),
        ),
    ]
}

/// Geometric self-ensemble: infer each flipped/rotated variant, undo the
/// transform, and average the eight branches in fixed order.
pub fn self_ensemble(net: &Network, x: &LumaImage) -> Result<LumaImage> {
    let mut acc = LumaImage::zeros(x.height(), x.width());
    for (fwd, inv) in transforms() {
        let branch = fwd(x);
        let (restored, _) = infer_luma(net, &branch)?;
        let back = inv(&restored);
        debug_assert_eq!((back.height(), back.width()), (x.height(), x.width()));
        for (a, b) in acc.data_mut().iter_mut().zip(back.data()) {
            *a += b;
        }
    }
    for v in acc.data_mut() {
        *v /= 8.0;
    }
    Ok(acc)
}

/// Super-resolve a color (or grayscale) image by factor `scale`:
/// bicubic pre-enlargement, transform-domain restoration of the luminance,
/// bicubic enlargement of the chrominance planes.
pub fn sr_color(
    net: &Network,
    input: &ColorImage,
    scale: usize,
    ensemble: bool,
) -> Result<(ColorImage, bool)> {
    let (h, w) = (input.y.height(), input.y.width());
    let (oh, ow) = (h * scale, w * scale);
    let pre = bicubic_resize(&input.y, oh, ow)?;
    let (y, padded) = if ensemble {
        (self_ensemble(net, &pre)?, pre.height() % net.stride != 0 || pre.width() % net.stride != 0)
    } else {
        infer_luma(net, &pre)?
    };
    let chroma = match &input.chroma {
        Some((cb, cr)) => Some((
            bicubic_resize(cb, oh, ow)?,
            bicubic_resize(cr, oh, ow)?,
        )),
        None => None,
    };
    Ok((ColorImage { y, chroma }, padded))
}
