//! The regularized training objective and its analytic gradients.
//!
//! Loss = MSE + sigma * weight decay + gamma * orthogonality penalty
//! + lambda * complexity-order penalty, each term carrying its own 1/2
//! factor. The orthogonality sum runs over ordered distinct filter pairs.
//!
//! Gradients are hand-derived adjoints of the exact computation graph: the
//! strided forward transform, the D-layer CNN with the residual bypass, and
//! the transpose-convolution inverse. Every transform filter receives
//! gradient from both of its appearances (analysis in the forward pass and
//! synthesis in the inverse); a central finite-difference oracle validates
//! every parameter class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdct::{cdct_forward, cdct_inverse, gram_matrix};
use crate::error::{Error, Result};
use crate::imaging::LumaImage;
use crate::nn::{Activation, Network};
use crate::tensor::Tensor;
use crate::transform::variance_of;

/// The four loss terms, their coefficients, and the weighted total.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub weight_decay: f64,
    pub orthogonality: f64,
    pub complexity: f64,
    pub total: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub lambda: f64,
}

/// Gradients mirroring the trainable parameters of a [`Network`].
/// `d_bank` is present iff the transform layer is trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_weights: Vec<Tensor>,
    pub d_biases: Vec<Vec<f64>>,
    pub d_bank: Option<Vec<Vec<f64>>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            d_weights: net
                .layers
                .iter()
                .map(|l| Tensor::zeros(l.weights.dims()))
                .collect(),
            d_biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            d_bank: if net.cdct_trainable {
                Some(vec![vec![0.0; net.n() * net.n()]; net.bank.len()])
            } else {
                None
            },
        }
    }

    /// Apply `f` to every scalar gradient.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for t in &mut self.d_weights {
            for v in t.values_mut() {
                f(v);
            }
        }
        for b in &mut self.d_biases {
            for v in b {
                f(v);
            }
        }
        if let Some(bank) = &mut self.d_bank {
            for filt in bank {
                for v in filt {
                    f(v);
                }
            }
        }
    }

    pub fn iter_scalars(&self) -> impl Iterator<Item = f64> + '_ {
        let weights = self.d_weights.iter().flat_map(|t| t.values().iter().copied());
        let biases = self.d_biases.iter().flatten().copied();
        let bank = self.d_bank.iter().flatten().flatten().copied();
        weights.chain(biases).chain(bank)
    }

    /// Accumulate `other` scaled by `factor`.
    pub fn add_scaled(&mut self, other: &GradientSet, factor: f64) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                *x += factor * y;
            }
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * y;
            }
        }
        if let (Some(a), Some(b)) = (&mut self.d_bank, &other.d_bank) {
            for (fa, fb) in a.iter_mut().zip(b) {
                for (x, y) in fa.iter_mut().zip(fb) {
                    *x += factor * y;
                }
            }
        }
    }
}

/// Orthogonality penalty over arbitrary same-length vectors:
/// half the sum of squared inner products over ordered distinct pairs.
pub fn orthogonality_penalty(filters: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for (i, a) in filters.iter().enumerate() {
        for (j, b) in filters.iter().enumerate() {
            if i != j {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                sum += dot * dot;
            }
        }
    }
    0.5 * sum
}

/// Entrywise derivative of the Bessel-corrected variance:
/// `2/(M-1) * (w_a - mean)`; the entries always sum to zero.
pub fn variance_gradient(values: &[f64]) -> Vec<f64> {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    values.iter().map(|v| 2.0 / (m - 1.0) * (v - mean)).collect()
}

fn raw_penalties(net: &Network) -> (f64, f64, f64) {
    let weight_decay = 0.5
        * net
            .layers
            .iter()
            .map(|l| l.weights.values().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>();
    let gram = gram_matrix(&net.bank);
    let orthogonality = 0.5 * crate::cdct::off_diagonal_energy(&gram);
    let complexity = 0.5
        * net
            .bank
            .filters()
            .iter()
            .zip(&net.dct_variances)
            .map(|(f, &target)| {
                let d = variance_of(f.values()) - target;
                d * d
            })
            .sum::<f64>();
    (weight_decay, orthogonality, complexity)
}

fn breakdown(net: &Network, mse: f64) -> LossBreakdown {
    let (weight_decay, orthogonality, complexity) = raw_penalties(net);
    LossBreakdown {
        mse,
        weight_decay,
        orthogonality,
        complexity,
        total: mse
            + net.sigma * weight_decay
            + net.gamma * orthogonality
            + net.lambda * complexity,
        sigma: net.sigma,
        gamma: net.gamma,
        lambda: net.lambda,
    }
}

fn mse_of(y_hat: &LumaImage, y: &LumaImage) -> Result<f64> {
    if (y_hat.height(), y_hat.width()) != (y.height(), y.width()) {
        return Err(Error::mismatch("prediction and target dims differ"));
    }
    Ok(0.5
        * y_hat
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
}

/// Full regularized loss for one sample.
pub fn loss(net: &Network, x: &LumaImage, y: &LumaImage) -> Result<LossBreakdown> {
    let y_hat = net.forward(x)?;
    Ok(breakdown(net, mse_of(&y_hat, y)?))
}

// --- conv adjoints -------------------------------------------------------

/// dL/dW and dL/db of a same-padded conv given the layer input and the
/// gradient at the pre-activation output.
fn conv_param_grads(
    input: &Tensor,
    grad_pre: &Tensor,
    k: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (cin, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let m = grad_pre.dims()[0];
    let pad = (k - 1) / 2;
    let d_weights: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|oc| {
            let g = grad_pre.channel(oc);
            let mut dw = vec![0.0; cin * k * k];
            for ic in 0..cin {
                let ip = input.channel(ic);
                for dy in 0..k {
                    let y_lo = pad.saturating_sub(dy);
                    let y_hi = h - dy.saturating_sub(pad).min(h);
                    for dx in 0..k {
                        let x_lo = pad.saturating_sub(dx);
                        let x_hi = w - dx.saturating_sub(pad).min(w);
                        let mut acc = 0.0;
                        for y in y_lo..y_hi {
                            let iy = y + dy - pad;
                            let grow = &g[y * w + x_lo..y * w + x_hi];
                            let irow = &ip[iy * w + x_lo + dx - pad..iy * w + x_hi + dx - pad];
                            for (gv, iv) in grow.iter().zip(irow) {
                                acc += gv * iv;
                            }
                        }
                        dw[(ic * k + dy) * k + dx] = acc;
                    }
                }
            }
            dw
        })
        .collect();
    let mut flat = Vec::with_capacity(m * cin * k * k);
    for dw in d_weights {
        flat.extend_from_slice(&dw);
    }
    let d_biases = (0..m)
        .map(|oc| grad_pre.channel(oc).iter().sum::<f64>())
        .collect();
    (flat, d_biases)
}

/// dL/d(input) of a same-padded conv: the transpose of the forward AXPY.
fn conv_input_grad(weights: &Tensor, grad_pre: &Tensor, cin: usize, h: usize, w: usize) -> Tensor {
    let m = grad_pre.dims()[0];
    let k = weights.dims()[2];
    let pad = (k - 1) / 2;
    let planes: Vec<Vec<f64>> = (0..cin)
        .into_par_iter()
        .map(|ic| {
            let mut plane = vec![0.0; h * w];
            for oc in 0..m {
                let g = grad_pre.channel(oc);
                for dy in 0..k {
                    let y_lo = pad.saturating_sub(dy);
                    let y_hi = h - dy.saturating_sub(pad).min(h);
                    for dx in 0..k {
                        let wv = weights.values()[((oc * cin + ic) * k + dy) * k + dx];
                        if wv == 0.0 {
                            continue;
                        }
                        let x_lo = pad.saturating_sub(dx);
                        let x_hi = w - dx.saturating_sub(pad).min(w);
                        for y in y_lo..y_hi {
                            let iy = y + dy - pad;
                            let grow = &g[y * w + x_lo..y * w + x_hi];
                            let dst =
                                &mut plane[iy * w + x_lo + dx - pad..iy * w + x_hi + dx - pad];
                            for (d, gv) in dst.iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        }
                    }
                }
            }
            plane
        })
        .collect();
    let mut values = Vec::with_capacity(cin * h * w);
    for p in planes {
        values.extend_from_slice(&p);
    }
    Tensor::from_values(&[cin, h, w], values).expect("adjoint shape is consistent")
}

/// Gradient of a filter from one convolution site: for each tap (p, q),
/// correlate the stride-S map against the circularly shifted error image.
fn bank_use_grad(
    map: &[f64],
    err: &LumaImage,
    n: usize,
    stride: usize,
    scale: f64,
) -> Vec<f64> {
    let (h, w) = (err.height(), err.width());
    let (map_h, map_w) = (h / stride, w / stride);
    let mut out = vec![0.0; n * n];
    for u in 0..map_h {
        for v in 0..map_w {
            let val = map[u * map_w + v] * scale;
            if val == 0.0 {
                continue;
            }
            for p in 0..n {
                let mut r = u * stride + p;
                if r >= h {
                    r -= h;
                }
                let erow = err.row(r);
                let base = v * stride;
                let orow = &mut out[p * n..(p + 1) * n];
                for (q, o) in orow.iter_mut().enumerate() {
                    let mut c = base + q;
                    if c >= w {
                        c -= w;
                    }
                    *o += val * erow[c];
                }
            }
        }
    }
    out
}

/// Loss and the full gradient set for one sample.
pub fn loss_and_gradients(
    net: &Network,
    x: &LumaImage,
    y: &LumaImage,
) -> Result<(LossBreakdown, GradientSet)> {
    let (cube, trace, f_sr) = net.forward_cube(x)?;
    let y_hat = cdct_inverse(&f_sr, &net.bank)?;
    let mse = mse_of(&y_hat, y)?;

    let err = LumaImage::from_vec(
        y.height(),
        y.width(),
        y_hat
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| a - b)
            .collect(),
    )?;

    let n = net.n();
    let stride = net.stride;
    let overlap = ((n / stride) * (n / stride)) as f64;
    let inv_overlap = 1.0 / overlap;

    // dL/df_SR: the adjoint of the weighted inverse is the forward pass
    // scaled by 1/(N/S)^2.
    let mut g_sr = cdct_forward(&err, &net.bank, stride)?;
    for m in g_sr.maps_mut() {
        for v in m {
            *v *= inv_overlap;
        }
    }

    // Residual head: grad at the high band flows into the last layer's
    // post-activation and, via the bypass, into the input cube directly.
    let (map_h, map_w) = cube.map_dims();
    let high_count = n * n - net.t;
    let mut grad_post = Tensor::zeros(&[high_count, map_h, map_w]);
    for c in 0..high_count {
        grad_post
            .channel_mut(c)
            .copy_from_slice(&g_sr.maps()[net.t + c]);
    }

    // CNN backward sweep.
    let depth = net.layers.len();
    let mut d_weights: Vec<Tensor> = Vec::with_capacity(depth);
    let mut d_biases: Vec<Vec<f64>> = Vec::with_capacity(depth);
    for l in &net.layers {
        d_weights.push(Tensor::zeros(l.weights.dims()));
        d_biases.push(vec![0.0; l.biases.len()]);
    }
    let mut grad_out = grad_post;
    for l in (0..depth).rev() {
        let layer = &net.layers[l];
        let pre = &trace.pre[l];
        let mut grad_pre = grad_out;
        if layer.activation == Activation::Relu {
            for (g, &z) in grad_pre.values_mut().iter_mut().zip(pre.values()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let (dw, db) = conv_param_grads(&trace.inputs[l], &grad_pre, layer.kernel());
        d_weights[l] = Tensor::from_values(layer.weights.dims(), dw)?;
        d_biases[l] = db;
        let (cin, h, w) = (
            trace.inputs[l].dims()[0],
            trace.inputs[l].dims()[1],
            trace.inputs[l].dims()[2],
        );
        grad_out = conv_input_grad(&layer.weights, &grad_pre, cin, h, w);
    }

    // Total gradient on each input-cube map: CNN input channel plus the
    // direct path through the SR cube (low maps are copied verbatim, high
    // maps ride the residual bypass).
    let grad_a1 = grad_out;
    let mut g_cube: Vec<Vec<f64>> = Vec::with_capacity(n * n);
    for i in 0..n * n {
        let mut m = grad_a1.channel(i).to_vec();
        for (a, b) in m.iter_mut().zip(&g_sr.maps()[i]) {
            *a += b;
        }
        g_cube.push(m);
    }

    // Weight decay on CNN weights only.
    if net.sigma != 0.0 {
        for (dw, l) in d_weights.iter_mut().zip(&net.layers) {
            for (g, w) in dw.values_mut().iter_mut().zip(l.weights.values()) {
                *g += net.sigma * w;
            }
        }
    }

    let d_bank = if net.cdct_trainable {
        let filters = net.bank.filters();
        let mut grads: Vec<Vec<f64>> = (0..filters.len())
            .into_par_iter()
            .map(|idx| {
                // Forward (analysis) use.
                let mut g = bank_use_grad(&g_cube[idx], x, n, stride, 1.0);
                // Inverse (synthesis) use, carrying the overlap weight.
                let g_inv = bank_use_grad(f_sr.map(idx + 1), &err, n, stride, inv_overlap);
                for (a, b) in g.iter_mut().zip(&g_inv) {
                    *a += b;
                }
                g
            })
            .collect();
        if net.gamma != 0.0 {
            // d/dw_i of (gamma/2) sum over ordered pairs: 2 gamma sum_j s_ij w_j.
            let gram = gram_matrix(&net.bank);
            for (i, g) in grads.iter_mut().enumerate() {
                for (j, other) in filters.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let coeff = 2.0 * net.gamma * gram[i][j];
                    for (gv, wv) in g.iter_mut().zip(other.values()) {
                        *gv += coeff * wv;
                    }
                }
            }
        }
        if net.lambda != 0.0 {
            for ((g, f), &target) in grads.iter_mut().zip(filters).zip(&net.dct_variances) {
                let gap = variance_of(f.values()) - target;
                if gap != 0.0 {
                    for (gv, dv) in g.iter_mut().zip(variance_gradient(f.values())) {
                        *gv += net.lambda * gap * dv;
                    }
                }
            }
        }
        Some(grads)
    } else {
        None
    };

    Ok((
        breakdown(net, mse),
        GradientSet {
            d_weights,
            d_biases,
            d_bank,
        },
    ))
}

/// Gradients only (see [`loss_and_gradients`]).
pub fn gradients(net: &Network, x: &LumaImage, y: &LumaImage) -> Result<GradientSet> {
    loss_and_gradients(net, x, y).map(|(_, g)| g)
}

/// Batch objective: the data term (MSE and its gradients) is averaged over
/// the batch, the parameter penalties enter once. Per-sample gradients are
/// evaluated in parallel and reduced in index order, so results are
/// bit-reproducible.
pub fn batch_loss_and_gradients(
    net: &Network,
    pairs: &[(&LumaImage, &LumaImage)],
) -> Result<(LossBreakdown, GradientSet)> {
    if pairs.is_empty() {
        return Err(Error::invalid("batch must be non-empty"));
    }
    let per_sample: Vec<Result<(LossBreakdown, GradientSet)>> = pairs
        .par_iter()
        .map(|(x, y)| loss_and_gradients(net, x, y))
        .collect();
    let scale = 1.0 / pairs.len() as f64;
    let mut total = GradientSet::zeros_like(net);
    let mut mse = 0.0;
    let mut first: Option<LossBreakdown> = None;
    for r in per_sample {
        let (b, g) = r?;
        mse += b.mse * scale;
        total.add_scaled(&g, scale);
        if first.is_none() {
            first = Some(b);
        }
    }
    let mut b = first.unwrap();
    b.mse = mse;
    b.total = mse + b.sigma * b.weight_decay + b.gamma * b.orthogonality + b.lambda * b.complexity;
    Ok((b, total))
}

// --- gradient clipping ---------------------------------------------------

/// Clipping discipline for applied gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipMode {
    /// Clamp every coordinate into [-c, c].
    Elementwise,
    /// Rescale the whole set when its L2 norm exceeds c.
    GlobalNorm,
}

/// Elementwise clamp of every gradient coordinate into `[-c, c]`.
pub fn gradient_clip(grads: &GradientSet, c: f64) -> Result<GradientSet> {
    let mut out = grads.clone();
    clip_in_place(&mut out, c, ClipMode::Elementwise)?;
    Ok(out)
}

pub fn clip_in_place(grads: &mut GradientSet, c: f64, mode: ClipMode) -> Result<()> {
    if c <= 0.0 {
        return Err(Error::invalid("clip value must be positive"));
    }
    match mode {
        ClipMode::Elementwise => grads.for_each_mut(|v| *v = v.clamp(-c, c)),
        ClipMode::GlobalNorm => {
            let norm = grads.iter_scalars().map(|v| v * v).sum::<f64>().sqrt();
            if norm > c {
                let s = c / norm;
                grads.for_each_mut(|v| *v *= s);
            }
        }
    }
    Ok(())
}

// --- finite-difference oracle --------------------------------------------

/// Address of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamCoord {
    Weight { layer: usize, offset: usize },
    Bias { layer: usize, index: usize },
    Bank { filter: usize, offset: usize },
}

/// Every trainable coordinate of the network, CNN first, bank last
/// (bank coordinates only when the transform layer is trainable).
pub fn all_coords(net: &Network) -> Vec<ParamCoord> {
    let mut coords = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        for offset in 0..layer.weights.len() {
            coords.push(ParamCoord::Weight { layer: l, offset });
        }
        for index in 0..layer.biases.len() {
            coords.push(ParamCoord::Bias { layer: l, index });
        }
    }
    if net.cdct_trainable {
        let per = net.n() * net.n();
        for filter in 0..net.bank.len() {
            for offset in 0..per {
                coords.push(ParamCoord::Bank { filter, offset });
            }
        }
    }
    coords
}

pub fn get_coord(net: &Network, coord: ParamCoord) -> f64 {
    match coord {
        ParamCoord::Weight { layer, offset } => net.layers[layer].weights.values()[offset],
        ParamCoord::Bias { layer, index } => net.layers[layer].biases[index],
        ParamCoord::Bank { filter, offset } => net.bank.filters()[filter].values()[offset],
    }
}

pub fn set_coord(net: &mut Network, coord: ParamCoord, value: f64) {
    match coord {
        ParamCoord::Weight { layer, offset } => {
            net.layers[layer].weights.values_mut()[offset] = value;
        }
        ParamCoord::Bias { layer, index } => net.layers[layer].biases[index] = value,
        ParamCoord::Bank { filter, offset } => {
            net.bank.filters_mut()[filter].values_mut()[offset] = value;
        }
    }
}

pub fn coord_gradient(grads: &GradientSet, coord: ParamCoord) -> f64 {
    match coord {
        ParamCoord::Weight { layer, offset } => grads.d_weights[layer].values()[offset],
        ParamCoord::Bias { layer, index } => grads.d_biases[layer][index],
        ParamCoord::Bank { filter, offset } => {
            grads.d_bank.as_ref().map_or(0.0, |b| b[filter][offset])
        }
    }
}

/// Central finite difference of the total loss along one coordinate:
/// `(L(theta + h e_k) - L(theta - h e_k)) / 2h`.
pub fn finite_diff_oracle(
    net: &Network,
    x: &LumaImage,
    y: &LumaImage,
    coord: ParamCoord,
    h: f64,
) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::invalid("step size must be positive"));
    }
    let base = get_coord(net, coord);
    let mut plus = net.clone();
    set_coord(&mut plus, coord, base + h);
    let mut minus = net.clone();
    set_coord(&mut minus, coord, base - h);
    let lp = loss(&plus, x, y)?.total;
    let lm = loss(&minus, x, y)?.total;
    Ok((lp - lm) / (2.0 * h))
}

/// ReLU activation sign pattern across all rectified layers, used to detect
/// kink crossings during finite differencing.
fn relu_pattern(net: &Network, x: &LumaImage) -> Result<Vec<bool>> {
    let (_, trace, _) = net.forward_cube(x)?;
    let mut pattern = Vec::new();
    for (layer, pre) in net.layers.iter().zip(&trace.pre) {
        if layer.activation == Activation::Relu {
            pattern.extend(pre.values().iter().map(|&v| v > 0.0));
        }
    }
    Ok(pattern)
}

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst: Option<(ParamCoord, f64, f64)>,
}

/// Compare analytic gradients against the central-difference oracle for the
/// given coordinates. Coordinates whose perturbation flips any ReLU sign
/// (a kink crossing, where the two sides of the difference live on
/// different linear pieces) are flagged and excluded. Relative error is
/// `|g_a - g_fd| / max(1, |g_fd|)`.
pub fn fd_compare(
    net: &Network,
    x: &LumaImage,
    y: &LumaImage,
    coords: &[ParamCoord],
    h: f64,
) -> Result<FdReport> {
    let grads = gradients(net, x, y)?;
    let mut report = FdReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped_kinks: 0,
        worst: None,
    };
    for &coord in coords {
        let base = get_coord(net, coord);
        let mut plus = net.clone();
        set_coord(&mut plus, coord, base + h);
        let mut minus = net.clone();
        set_coord(&mut minus, coord, base - h);
        if relu_pattern(&plus, x)? != relu_pattern(&minus, x)? {
            report.skipped_kinks += 1;
            continue;
        }
        let fd = (loss(&plus, x, y)?.total - loss(&minus, x, y)?.total) / (2.0 * h);
        let analytic = coord_gradient(&grads, coord);
        let rel = (analytic - fd).abs() / fd.abs().max(1.0);
        report.checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((coord, analytic, fd));
        }
    }
    Ok(report)
}
