//! The D-layer residual CNN operating on frequency cubes, plus the
//! end-to-end network that sandwiches it between the transform layer's
//! forward and inverse passes.
//!
//! The CNN input is the full cube (low and high maps concatenated in index
//! order); the output layer produces one map per high-frequency index and is
//! added to the input's high maps through a residual bypass. Spatial dims
//! are preserved by zero same-padding; kernels must be odd.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdct::{cdct_forward, cdct_inverse, split_cube, CubeSplit, DctCube};
use crate::error::{Error, Result};
use crate::imaging::LumaImage;
use crate::rng::{seeded, Stream};
use crate::tensor::{Dtype, Tensor};
use crate::transform::{dct_basis, FilterBank};
use rand::Rng;

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    None,
}

/// One convolutional layer: `m` filters of shape `c x k x k` plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// Shape `[m, c, k, k]`.
    pub weights: Tensor,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn zeros(m: usize, c: usize, k: usize, activation: Activation) -> Self {
        ConvLayer {
            weights: Tensor::zeros(&[m, c, k, k]),
            biases: vec![0.0; m],
            activation,
        }
    }

    pub fn xavier(m: usize, c: usize, k: usize, activation: Activation, seed: u64) -> Self {
        ConvLayer {
            weights: xavier_init(&[m, c, k, k], seed),
            biases: vec![0.0; m],
            activation,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.dims()[2]
    }
}

/// Training/inference configuration rows: which parts of the transform layer
/// are learnable and which constraints are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "ORDSR")]
    Ordsr,
    #[serde(rename = "DSR-OC")]
    DsrOc,
    #[serde(rename = "DSR-CC")]
    DsrCc,
    #[serde(rename = "DSR-UC")]
    DsrUc,
    #[serde(rename = "DCT-DSR")]
    DctDsr,
    #[serde(rename = "ORDSR-RI")]
    OrdsrRi,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ordsr => "ORDSR",
            Variant::DsrOc => "DSR-OC",
            Variant::DsrCc => "DSR-CC",
            Variant::DsrUc => "DSR-UC",
            Variant::DctDsr => "DCT-DSR",
            Variant::OrdsrRi => "ORDSR-RI",
        }
    }

    /// Whether the transform layer joins the trainable set (second phase).
    pub fn cdct_trainable(self) -> bool {
        !matches!(self, Variant::DctDsr)
    }

    pub fn uses_orthogonality(self) -> bool {
        matches!(self, Variant::Ordsr | Variant::DsrOc | Variant::OrdsrRi)
    }

    pub fn uses_complexity(self) -> bool {
        matches!(self, Variant::Ordsr | Variant::DsrCc | Variant::OrdsrRi)
    }

    /// All variants start from the DCT bank except the randomly initialized one.
    pub fn dct_initialized(self) -> bool {
        !matches!(self, Variant::OrdsrRi)
    }
}

/// Transform bank + residual CNN with the hyperparameters the loss needs.
#[derive(Debug, Clone)]
pub struct Network {
    pub bank: FilterBank,
    pub layers: Vec<ConvLayer>,
    pub t: usize,
    pub stride: usize,
    pub variant: Variant,
    pub cdct_trainable: bool,
    pub gamma: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub final_relu: bool,
    /// Bessel-corrected variances of the reference DCT bank, the targets of
    /// the complexity-order constraint.
    pub dct_variances: Vec<f64>,
}

impl Network {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bank: FilterBank,
        layers: Vec<ConvLayer>,
        t: usize,
        stride: usize,
        variant: Variant,
        gamma: f64,
        lambda: f64,
        sigma: f64,
        final_relu: bool,
    ) -> Result<Self> {
        let n = bank.n();
        if stride == 0 || n % stride != 0 {
            return Err(Error::invalid("stride must divide block size"));
        }
        if t > n * n {
            return Err(Error::invalid("threshold exceeds map count"));
        }
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one CNN layer"));
        }
        if layers[0].in_channels() != n * n {
            return Err(Error::mismatch(format!(
                "first layer expects {} input channels, has {}",
                n * n,
                layers[0].in_channels()
            )));
        }
        let last = layers.last().unwrap();
        if last.out_channels() != n * n - t {
            return Err(Error::mismatch(format!(
                "output layer must have {} filters, has {}",
                n * n - t,
                last.out_channels()
            )));
        }
        for pair in layers.windows(2) {
            if pair[1].in_channels() != pair[0].out_channels() {
                return Err(Error::mismatch(
                    "layer input channels must equal previous layer's filter count",
                ));
            }
        }
        for l in &layers {
            if l.kernel() % 2 == 0 {
                return Err(Error::invalid("even kernels have no same-padding"));
            }
        }
        let dct_variances = dct_basis(n)?.variances();
        Ok(Network {
            bank,
            layers,
            t,
            stride,
            variant,
            cdct_trainable: false,
            gamma,
            lambda,
            sigma,
            final_relu,
            dct_variances,
        })
    }

    pub fn n(&self) -> usize {
        self.bank.n()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Literal pipeline: forward transform, split, CNN with residual add,
    /// merge, inverse transform. This is the graph the loss and gradients
    /// are defined on.
    pub fn forward(&self, x: &LumaImage) -> Result<LumaImage> {
        let (_, _, f_sr) = self.forward_cube(x)?;
        cdct_inverse(&f_sr, &self.bank)
    }

    /// Inference path: applies the learned high-band correction to the input
    /// directly. Algebraically identical to [`Network::forward`]; a
    /// zero-weight network returns its input bit for bit.
    pub fn infer(&self, x: &LumaImage) -> Result<LumaImage> {
        let mut cube = cdct_forward(x, &self.bank, self.stride)?;
        cube.set_threshold(self.t)?;
        let split = split_cube(&cube, self.t)?;
        let (trace, _) = cnn_forward_traced(&split, self)?;
        let residual = trace.post.last().unwrap();
        let (map_h, map_w) = cube.map_dims();
        let zero = vec![0.0; map_h * map_w];
        let mut maps = vec![zero; self.t];
        for c in 0..residual.dims()[0] {
            maps.push(residual.channel(c).to_vec());
        }
        let mut correction = DctCube::new(self.n(), self.stride, x.height(), x.width(), maps)?;
        correction.set_threshold(self.t)?;
        let delta = cdct_inverse(&correction, &self.bank)?;
        let mut out = x.clone();
        for (o, d) in out.data_mut().iter_mut().zip(delta.data()) {
            *o += d;
        }
        Ok(out)
    }

    /// Forward transform + CNN, returning the input cube, the restored high
    /// maps, and the assembled SR cube.
    pub(crate) fn forward_cube(&self, x: &LumaImage) -> Result<(DctCube, CnnTrace, DctCube)> {
        let mut cube = cdct_forward(x, &self.bank, self.stride)?;
        cube.set_threshold(self.t)?;
        let split = split_cube(&cube, self.t)?;
        let (trace, f_hat_high) = cnn_forward_traced(&split, self)?;
        let mut f_sr = cube.clone();
        for (dst, src) in f_sr.maps_mut()[self.t..].iter_mut().zip(&f_hat_high) {
            dst.clone_from(src);
        }
        Ok((cube, trace, f_sr))
    }
}

/// Same-padded 2D convolution of a `[c, h, w]` tensor, bias added per output
/// channel, activation applied per the layer.
pub fn conv2d_same(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    let mut out = conv2d_pre(input, layer)?;
    if layer.activation == Activation::Relu {
        for v in out.values_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    out.debug_check_finite();
    Ok(out)
}

/// Convolution + bias without the activation (the pre-activation map).
pub(crate) fn conv2d_pre(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    if input.dims().len() != 3 {
        return Err(Error::mismatch("conv input must be rank 3 [c, h, w]"));
    }
    let (cin, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if cin != layer.in_channels() {
        return Err(Error::mismatch(format!(
            "layer expects {} input channels, got {cin}",
            layer.in_channels()
        )));
    }
    let k = layer.kernel();
    if k % 2 == 0 {
        return Err(Error::invalid("even kernels have no same-padding"));
    }
    let pad = (k - 1) / 2;
    let m = layer.out_channels();
    let planes: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|oc| {
            let mut plane = vec![layer.biases[oc]; h * w];
            for ic in 0..cin {
                let in_plane = input.channel(ic);
                for dy in 0..k {
                    // Valid output rows for this kernel row offset.
                    let y_lo = pad.saturating_sub(dy);
                    let y_hi = h - dy.saturating_sub(pad).min(h);
                    for dx in 0..k {
                        let wv = layer.weights.values()
                            [((oc * cin + ic) * k + dy) * k + dx];
                        if wv == 0.0 {
                            continue;
                        }
                        let x_lo = pad.saturating_sub(dx);
                        let x_hi = w - dx.saturating_sub(pad).min(w);
                        for y in y_lo..y_hi {
                            let iy = y + dy - pad;
                            let orow = y * w;
                            let irow = iy * w + dx;
                            let src = &in_plane[irow + x_lo - pad..irow + x_hi - pad];
                            let dst = &mut plane[orow + x_lo..orow + x_hi];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
            plane
        })
        .collect();
    let mut values = Vec::with_capacity(m * h * w);
    for p in planes {
        values.extend_from_slice(&p);
    }
    Tensor::from_values(&[m, h, w], values)
}

/// Per-layer activations retained for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct CnnTrace {
    /// Input to each layer; `inputs[0]` is the full cube as a tensor.
    pub inputs: Vec<Tensor>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Tensor>,
    /// Post-activation output of each layer; the last entry is the learned
    /// residual before the bypass add.
    pub post: Vec<Tensor>,
}

pub(crate) fn cube_as_tensor(cube: &DctCube) -> Tensor {
    let (h, w) = cube.map_dims();
    let mut values = Vec::with_capacity(cube.maps().len() * h * w);
    for m in cube.maps() {
        values.extend_from_slice(m);
    }
    Tensor::from_values(&[cube.maps().len(), h, w], values).expect("cube maps are consistent")
}

pub(crate) fn cnn_forward_traced(
    split: &CubeSplit<'_>,
    net: &Network,
) -> Result<(CnnTrace, Vec<Vec<f64>>)> {
    if split.threshold() != net.t {
        return Err(Error::mismatch("split threshold differs from network"));
    }
    let cube = split.cube();
    if cube.n() != net.n() || cube.stride() != net.stride {
        return Err(Error::mismatch("cube geometry differs from network"));
    }
    let depth = net.layers.len();
    let mut inputs = Vec::with_capacity(depth);
    let mut pre = Vec::with_capacity(depth);
    let mut post = Vec::with_capacity(depth);
    let mut current = cube_as_tensor(cube);
    for (l, layer) in net.layers.iter().enumerate() {
        let expected_act = if l + 1 < depth {
            Activation::Relu
        } else if net.final_relu {
            Activation::Relu
        } else {
            Activation::None
        };
        debug_assert_eq!(layer.activation, expected_act, "layer {l} activation");
        let z = conv2d_pre(&current, layer)?;
        let mut activated = z.clone();
        if layer.activation == Activation::Relu {
            for v in activated.values_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        inputs.push(current);
        pre.push(z);
        post.push(activated.clone());
        current = activated;
    }
    let residual = post.last().unwrap();
    let high = split.high();
    if residual.dims()[0] != high.len() {
        return Err(Error::mismatch("output layer width differs from high band"));
    }
    let mut f_hat_high = Vec::with_capacity(high.len());
    for (c, h_map) in high.iter().enumerate() {
        let r = residual.channel(c);
        f_hat_high.push(r.iter().zip(h_map).map(|(a, b)| a + b).collect());
    }
    Ok((
        CnnTrace {
            inputs,
            pre,
            post,
        },
        f_hat_high,
    ))
}

/// Run the CNN over a split cube, returning the restored high maps
/// (residual output added to the input's high band).
pub fn cnn_forward(split: &CubeSplit<'_>, net: &Network) -> Result<Vec<Vec<f64>>> {
    cnn_forward_traced(split, net).map(|(_, maps)| maps)
}

/// Xavier (Glorot) uniform initialization: entries drawn uniformly in
/// `+-sqrt(6/(fan_in+fan_out))`, deterministic for a fixed seed.
pub fn xavier_init(dims: &[usize], seed: u64) -> Tensor {
    let (fan_in, fan_out) = match dims {
        [m, c, kh, kw] => (c * kh * kw, m * kh * kw),
        [out, inp] => (*inp, *out),
        other => {
            let len: usize = other.iter().product();
            (len, len)
        }
    };
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = seeded(seed, Stream::Custom(0));
    let len: usize = dims.iter().product();
    let values: Vec<f64> = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_values(dims, values).expect("generated length matches shape")
}

/// Layer shape list `(filters, in_channels, kernel)` for a bank of size `n`,
/// threshold `t`, `depth` layers of `filters` each, with a wider first kernel.
pub fn architecture(
    n: usize,
    t: usize,
    depth: usize,
    filters: usize,
    kernel_first: usize,
    kernel_rest: usize,
) -> Vec<(usize, usize, usize)> {
    let mut shapes = Vec::with_capacity(depth);
    for l in 0..depth {
        let c = if l == 0 { n * n } else { filters };
        let m = if l + 1 == depth { n * n - t } else { filters };
        let k = if l == 0 { kernel_first } else { kernel_rest };
        shapes.push((m, c, k));
    }
    shapes
}

/// Scalar parameter tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub weights: u64,
    pub biases: u64,
}

/// Exact scalar parameter counts: the transform bank contributes
/// `N*N` filters of `N*N` weights and no biases.
pub fn count_parameters(net: &Network) -> ParameterCount {
    let n = net.n() as u64;
    let mut weights = n * n * n * n;
    let mut biases = 0u64;
    for l in &net.layers {
        weights += (l.out_channels() * l.in_channels() * l.kernel() * l.kernel()) as u64;
        biases += l.out_channels() as u64;
    }
    ParameterCount { weights, biases }
}

/// Weight count of the 20-layer spatial-domain reference network (two 3x3x64
/// end layers plus eighteen 3x3x64x64 layers), used for size comparisons.
pub fn vdsr_reference_weights() -> u64 {
    2 * (3 * 3 * 64) + 18 * (3 * 3 * 64 * 64)
}

/// Peak single-layer activation footprint in bytes for an H x W input:
/// N*N maps of (H/S) x (W/S), assuming one layer's maps live at a time.
/// Elements are tallied at one byte each in f32 (two in f64), the accounting
/// unit of the published memory figures.
pub fn activation_memory(n: usize, stride: usize, h: usize, w: usize, dtype: Dtype) -> u64 {
    let per_element = (dtype.size_bytes() / 4) as u64;
    (n * n) as u64 * (h / stride) as u64 * (w / stride) as u64 * per_element
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;

    fn tiny_net(n: usize, t: usize, depth: usize, filters: usize, seed: u64) -> Network {
        let bank = dct_basis(n).unwrap();
        let shapes = architecture(n, t, depth, filters, 3, 3);
        let layers: Vec<ConvLayer> = shapes
            .iter()
            .enumerate()
            .map(|(l, &(m, c, k))| {
                let act = if l + 1 < depth { Activation::Relu } else { Activation::Relu };
                ConvLayer::xavier(m, c, k, act, derive_seed(seed, l as u64))
            })
            .collect();
        Network::new(bank, layers, t, 2, Variant::Ordsr, 0.0, 0.0, 0.0, true).unwrap()
    }

    fn zero_net(n: usize, t: usize, depth: usize, filters: usize) -> Network {
        let bank = dct_basis(n).unwrap();
        let shapes = architecture(n, t, depth, filters, 3, 3);
        let layers: Vec<ConvLayer> = shapes
            .iter()
            .map(|&(m, c, k)| ConvLayer::zeros(m, c, k, Activation::Relu))
            .collect();
        Network::new(bank, layers, t, 2, Variant::DctDsr, 0.0, 0.0, 0.0, true).unwrap()
    }

    #[test]
    fn identity_one_by_one_conv_is_relu() {
        let mut layer = ConvLayer::zeros(1, 1, 1, Activation::Relu);
        layer.weights.values_mut()[0] = 1.0;
        let input = Tensor::from_values(&[1, 2, 3], vec![1.0, -2.0, 0.5, -0.1, 0.0, 3.0]).unwrap();
        let out = conv2d_same(&input, &layer).unwrap();
        assert_eq!(out.values(), &[1.0, 0.0, 0.5, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn zero_weights_bias_only() {
        let mut layer = ConvLayer::zeros(2, 3, 3, Activation::Relu);
        layer.biases[0] = 0.7;
        layer.biases[1] = -0.4;
        let input = Tensor::from_values(&[3, 2, 2], (0..12).map(|i| i as f64).collect()).unwrap();
        let out = conv2d_same(&input, &layer).unwrap();
        assert!(out.channel(0).iter().all(|&v| v == 0.7));
        assert!(out.channel(1).iter().all(|&v| v == 0.0), "relu clamps -0.4");
    }

    #[test]
    fn averaging_filter_on_constant_image() {
        let mut layer = ConvLayer::zeros(1, 1, 3, Activation::None);
        for v in layer.weights.values_mut() {
            *v = 1.0 / 9.0;
        }
        let c = 0.6;
        let input = Tensor::from_values(&[1, 5, 5], vec![c; 25]).unwrap();
        let out = conv2d_same(&input, &layer).unwrap();
        // Interior keeps the constant; the zero-padded corner sees only a
        // 2x2 window of the 3x3 support.
        assert!((out.values()[out.idx3(0, 2, 2)] - c).abs() < 1e-12);
        assert!((out.values()[out.idx3(0, 0, 0)] - c * 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_even_kernel() {
        let layer = ConvLayer::zeros(1, 2, 3, Activation::None);
        let input = Tensor::zeros(&[3, 4, 4]);
        assert!(conv2d_same(&input, &layer).is_err());
        let even = ConvLayer::zeros(1, 3, 2, Activation::None);
        assert!(conv2d_same(&input, &even).is_err());
    }

    #[test]
    fn zero_cnn_is_residual_pass_through() {
        let net = zero_net(4, 2, 3, 4);
        let x = LumaImage::from_fn(12, 12, |r, c| ((r * 13 + c * 7) % 11) as f64 / 11.0);
        let cube = cdct_forward(&x, &net.bank, net.stride).unwrap();
        let split = split_cube(&cube, net.t).unwrap();
        let out = cnn_forward(&split, &net).unwrap();
        for (o, h) in out.iter().zip(split.high()) {
            assert_eq!(o, h, "pass-through must be exact");
        }
    }

    #[test]
    fn degenerate_single_layer_net_hand_case() {
        // D=1: f_hat = relu(conv(a1, W) + b) + f_high on a 2x2-bank cube.
        let bank = dct_basis(2).unwrap();
        let mut layer = ConvLayer::zeros(3, 4, 1, Activation::Relu);
        // Output channel j reads input channel j+1 with weight j+1.
        for j in 0..3 {
            layer.weights.values_mut()[j * 4 + (j + 1)] = (j + 1) as f64;
        }
        layer.biases = vec![0.05, -10.0, 0.0];
        let net = Network::new(bank, vec![layer], 1, 2, Variant::DctDsr, 0.0, 0.0, 0.0, true)
            .unwrap();
        let x = LumaImage::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 16.0);
        let cube = cdct_forward(&x, &net.bank, 2).unwrap();
        let split = split_cube(&cube, 1).unwrap();
        let out = cnn_forward(&split, &net).unwrap();
        for j in 0..3 {
            let src = cube.map(j + 2);
            for (k, &v) in out[j].iter().enumerate() {
                let pre = (j + 1) as f64 * src[k] + net.layers[0].biases[j];
                let want = pre.max(0.0) + src[k];
                assert!((v - want).abs() < 1e-12, "channel {j} pixel {k}");
            }
        }
    }

    #[test]
    fn output_map_count_follows_threshold() {
        let net = zero_net(8, 4, 3, 8);
        assert_eq!(net.layers.last().unwrap().out_channels(), 60);
        let x = LumaImage::constant(16, 16, 0.2);
        let cube = cdct_forward(&x, &net.bank, 2).unwrap();
        let split = split_cube(&cube, 4).unwrap();
        assert_eq!(cnn_forward(&split, &net).unwrap().len(), 60);
    }

    #[test]
    fn xavier_is_deterministic_and_bounded() {
        let a = xavier_init(&[4, 3, 3, 3], 42);
        let b = xavier_init(&[4, 3, 3, 3], 42);
        assert_eq!(a, b);
        let c = xavier_init(&[4, 3, 3, 3], 43);
        assert_ne!(a, c);
        let bound = (6.0f64 / (27.0 + 36.0)).sqrt();
        assert!(a.values().iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn xavier_sample_variance_matches_law() {
        // Var of U(-b, b) is b^2/3 = 2/(fan_in+fan_out).
        let t = xavier_init(&[100_000], 7);
        let n = t.len() as f64;
        let mean = t.values().iter().sum::<f64>() / n;
        let var = t.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let want = 2.0 / (100_000.0 + 100_000.0);
        assert!(
            (var - want).abs() < 0.1 * want,
            "sample variance {var} vs expected {want}"
        );
    }

    #[test]
    fn standard_configuration_parameter_counts() {
        let bank = dct_basis(8).unwrap();
        let shapes = architecture(8, 4, 15, 64, 5, 3);
        let layers: Vec<ConvLayer> = shapes
            .iter()
            .map(|&(m, c, k)| ConvLayer::zeros(m, c, k, Activation::Relu))
            .collect();
        let net =
            Network::new(bank, layers, 4, 2, Variant::Ordsr, 3.5, 0.75, 1e-4, true).unwrap();
        let count = count_parameters(&net);
        assert_eq!(count.weights, 620_288);
        assert_eq!(count.biases, 956);
        assert_eq!(vdsr_reference_weights(), 664_704);
        assert_eq!(vdsr_reference_weights() - count.weights, 44_416);
    }

    #[test]
    fn activation_memory_matches_published_figures() {
        assert_eq!(
            activation_memory(8, 2, 512, 512, Dtype::F32),
            4 * 1024 * 1024
        );
        assert_eq!(
            activation_memory(8, 1, 512, 512, Dtype::F32),
            16 * 1024 * 1024
        );
        assert_eq!(
            activation_memory(8, 2, 1024, 1024, Dtype::F32),
            4 * activation_memory(8, 2, 512, 512, Dtype::F32)
        );
        assert_eq!(
            activation_memory(8, 2, 512, 512, Dtype::F64),
            8 * 1024 * 1024
        );
    }

    #[test]
    fn forward_is_deterministic() {
        let net = tiny_net(4, 2, 3, 4, 99);
        let x = LumaImage::from_fn(12, 12, |r, c| ((r * 5 + c * 3) % 9) as f64 / 9.0);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_network_identity_paths() {
        let net = zero_net(8, 4, 3, 8);
        let x = LumaImage::from_fn(16, 16, |r, c| ((r * 31 + c * 17) % 23) as f64 / 23.0);
        // Inference path is exact.
        let out = net.infer(&x).unwrap();
        assert_eq!(out.data(), x.data(), "infer must be bit-exact");
        // Literal path equals the raw transform round trip.
        let literal = net.forward(&x).unwrap();
        let cube = cdct_forward(&x, &net.bank, net.stride).unwrap();
        let round = cdct_inverse(&cube, &net.bank).unwrap();
        assert_eq!(literal.data(), round.data());
        assert!(literal.max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn inference_and_literal_paths_agree() {
        let net = tiny_net(4, 2, 3, 4, 123);
        let x = LumaImage::from_fn(12, 16, |r, c| ((r * 7 + c * 5) % 13) as f64 / 13.0);
        let a = net.forward(&x).unwrap();
        let b = net.infer(&x).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn network_shape_validation() {
        let bank = dct_basis(4).unwrap();
        // Wrong first-layer channel count.
        let bad = vec![ConvLayer::zeros(14, 8, 3, Activation::Relu)];
        assert!(Network::new(bank.clone(), bad, 2, 2, Variant::Ordsr, 0.0, 0.0, 0.0, true)
            .is_err());
        // Wrong output width.
        let bad = vec![ConvLayer::zeros(9, 16, 3, Activation::Relu)];
        assert!(Network::new(bank, bad, 2, 2, Variant::Ordsr, 0.0, 0.0, 0.0, true).is_err());
    }
}
