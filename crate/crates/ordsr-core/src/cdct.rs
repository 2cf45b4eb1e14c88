//! The convolutional transform layer: strided forward convolution producing
//! a frequency cube, the threshold split, and the transpose-convolution
//! inverse with overlap reweighting.
//!
//! With an orthonormal bank the forward pass equals a zig-zag reindexed
//! block DCT at every stride-S block origin (verified against a brute-force
//! oracle), and the inverse reconstructs the input exactly. Boundaries are
//! circular so the reconstruction identity holds at every pixel, border
//! included.
//!
//! Orientation: the forward pass is a cross-correlation (no filter flip);
//! the inverse convolves the filters against the S-zero-padded maps, which
//! is precisely the adjoint of the forward pass scaled by 1/(N/S)^2.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::LumaImage;
use crate::transform::{dct_basis_value, FilterBank, ZigZag};

/// Stack of N*N frequency maps for one image.
///
/// Maps are stored map-major (index outer, row-major spatial inner) so the
/// threshold split is a contiguous slice. `t` records the low/high split
/// point used by the surrounding pipeline; it does not affect the maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DctCube {
    n: usize,
    stride: usize,
    t: usize,
    src_h: usize,
    src_w: usize,
    map_h: usize,
    map_w: usize,
    maps: Vec<Vec<f64>>,
}

impl DctCube {
    pub fn new(
        n: usize,
        stride: usize,
        src_h: usize,
        src_w: usize,
        maps: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if stride == 0 || n % stride != 0 {
            return Err(Error::invalid("stride must divide block size"));
        }
        if src_h % stride != 0 || src_w % stride != 0 {
            return Err(Error::invalid("source dims must be multiples of stride"));
        }
        let (map_h, map_w) = (src_h / stride, src_w / stride);
        if maps.len() != n * n {
            return Err(Error::mismatch(format!(
                "cube expects {} maps, got {}",
                n * n,
                maps.len()
            )));
        }
        if maps.iter().any(|m| m.len() != map_h * map_w) {
            return Err(Error::mismatch("map dims inconsistent with source/stride"));
        }
        Ok(DctCube {
            n,
            stride,
            t: 0,
            src_h,
            src_w,
            map_h,
            map_w,
            maps,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn threshold(&self) -> usize {
        self.t
    }

    pub fn set_threshold(&mut self, t: usize) -> Result<()> {
        if t > self.n * self.n {
            return Err(Error::invalid("threshold exceeds map count"));
        }
        self.t = t;
        Ok(())
    }

    pub fn src_dims(&self) -> (usize, usize) {
        (self.src_h, self.src_w)
    }

    pub fn map_dims(&self) -> (usize, usize) {
        (self.map_h, self.map_w)
    }

    /// Map at 1-based zig-zag index.
    pub fn map(&self, i: usize) -> &[f64] {
        &self.maps[i - 1]
    }

    pub fn maps(&self) -> &[Vec<f64>] {
        &self.maps
    }

    pub fn maps_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.maps
    }

    /// Sum of squared coefficients over the whole cube.
    pub fn energy(&self) -> f64 {
        self.maps
            .iter()
            .flat_map(|m| m.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Frobenius inner product with a cube of identical shape.
    pub fn dot(&self, other: &DctCube) -> f64 {
        debug_assert_eq!(self.maps.len(), other.maps.len());
        self.maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &DctCube) -> f64 {
        self.maps
            .iter()
            .zip(&other.maps)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Views of the cube below/at and above the threshold, in index order.
#[derive(Debug, Clone, Copy)]
pub struct CubeSplit<'a> {
    cube: &'a DctCube,
    t: usize,
}

impl<'a> CubeSplit<'a> {
    pub fn threshold(&self) -> usize {
        self.t
    }

    pub fn cube(&self) -> &'a DctCube {
        self.cube
    }

    /// Maps 1..=T.
    pub fn low(&self) -> &'a [Vec<f64>] {
        &self.cube.maps[..self.t]
    }

    /// Maps T+1..=N*N.
    pub fn high(&self) -> &'a [Vec<f64>] {
        &self.cube.maps[self.t..]
    }

    /// Reassemble the full cube (low then high, index order preserved).
    pub fn merge(&self) -> DctCube {
        let mut cube = self.cube.clone();
        cube.t = self.t;
        cube
    }
}

/// Divide a cube at threshold `t`: low = maps 1..=t, high = the rest.
pub fn split_cube(cube: &DctCube, t: usize) -> Result<CubeSplit<'_>> {
    if t > cube.n * cube.n {
        return Err(Error::invalid(format!(
            "threshold {} out of range 0..={}",
            t,
            cube.n * cube.n
        )));
    }
    Ok(CubeSplit { cube, t })
}

fn check_forward_args(x: &LumaImage, n: usize, stride: usize) -> Result<()> {
    if stride == 0 || n % stride != 0 {
        return Err(Error::invalid(format!(
            "stride {stride} must divide block size {n}"
        )));
    }
    if x.height() < n || x.width() < n {
        return Err(Error::invalid("image smaller than filter"));
    }
    if x.height() % stride != 0 || x.width() % stride != 0 {
        return Err(Error::invalid("image dims must be multiples of the stride"));
    }
    Ok(())
}

/// Forward pass: each map is the circular, valid, stride-S cross-correlation
/// of the image with one filter. Map dims are (H/S, W/S).
pub fn cdct_forward(x: &LumaImage, bank: &FilterBank, stride: usize) -> Result<DctCube> {
    let n = bank.n();
    check_forward_args(x, n, stride)?;
    let (h, w) = (x.height(), x.width());
    let (map_h, map_w) = (h / stride, w / stride);
    let maps: Vec<Vec<f64>> = bank
        .filters()
        .par_iter()
        .map(|filt| {
            let mut map = vec![0.0; map_h * map_w];
            for u in 0..map_h {
                for v in 0..map_w {
                    let mut acc = 0.0;
                    for p in 0..n {
                        let mut r = u * stride + p;
                        if r >= h {
                            r -= h;
                        }
                        let row = x.row(r);
                        let base = v * stride;
                        for q in 0..n {
                            let mut c = base + q;
                            if c >= w {
                                c -= w;
                            }
                            acc += filt.get(p, q) * row[c];
                        }
                    }
                    map[u * map_w + v] = acc;
                }
            }
            map
        })
        .collect();
    DctCube::new(n, stride, h, w, maps)
}

/// Brute-force reference: evaluates the block transform by direct double
/// summation of the DCT-II at every stride-S block origin (circular
/// extension), then reindexes into zig-zag order. Intentionally naive and
/// independent of `cdct_forward`'s code path.
pub fn block_dct_oracle(x: &LumaImage, n: usize, stride: usize) -> Result<DctCube> {
    check_forward_args(x, n, stride)?;
    let (h, w) = (x.height(), x.width());
    let (map_h, map_w) = (h / stride, w / stride);
    let zz = ZigZag::new(n)?;
    let mut maps = vec![vec![0.0; map_h * map_w]; n * n];
    for k1 in 0..n {
        for k2 in 0..n {
            let i = zz.index_of(k1, k2);
            for u in 0..map_h {
                for v in 0..map_w {
                    let mut coeff = 0.0;
                    for n1 in 0..n {
                        for n2 in 0..n {
                            let r = (u * stride + n1) % h;
                            let c = (v * stride + n2) % w;
                            coeff += x.get(r, c) * dct_basis_value(n, k1, k2, n1, n2);
                        }
                    }
                    maps[i - 1][u * map_w + v] = coeff;
                }
            }
        }
    }
    DctCube::new(n, stride, h, w, maps)
}

fn inverse_impl(cube: &DctCube, bank: &FilterBank, weighted: bool) -> Result<LumaImage> {
    let n = bank.n();
    if cube.n != n {
        return Err(Error::mismatch("cube block size differs from bank"));
    }
    let stride = cube.stride;
    let (h, w) = (cube.src_h, cube.src_w);
    let map_w = cube.map_w;
    let taps = n / stride;
    let overlap = (n / stride) * (n / stride);
    let weight = if weighted { 1.0 / overlap as f64 } else { 1.0 };
    // Gather form of the transpose convolution: for output pixel (m, c) the
    // contributing filter offsets are p = m mod S + jS, and the padded map
    // position is ((m - p) mod H) / S. Row-parallel, fixed inner order.
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|m| {
            let mut row = vec![0.0; w];
            let p0 = m % stride;
            for (c, out) in row.iter_mut().enumerate() {
                let q0 = c % stride;
                let mut acc = 0.0;
                for (idx, filt) in bank.filters().iter().enumerate() {
                    let map = &cube.maps[idx];
                    for jp in 0..taps {
                        let p = p0 + jp * stride;
                        let u = ((m + h - p) % h) / stride;
                        let urow = u * map_w;
                        for jq in 0..taps {
                            let q = q0 + jq * stride;
                            let v = ((c + w - q) % w) / stride;
                            acc += filt.get(p, q) * map[urow + v];
                        }
                    }
                }
                *out = acc * weight;
            }
            row
        })
        .collect();
    let mut data = Vec::with_capacity(h * w);
    for row in rows {
        data.extend_from_slice(&row);
    }
    LumaImage::from_vec(h, w, data)
}

/// Transpose-convolution inverse: convolve each filter with its S-zero-padded
/// map, reweighted by 1/(N/S)^2, circular boundary. For an orthonormal bank
/// this inverts `cdct_forward` exactly (to float precision).
pub fn cdct_inverse(cube: &DctCube, bank: &FilterBank) -> Result<LumaImage> {
    inverse_impl(cube, bank, true)
}

/// The raw adjoint of `cdct_forward` (no overlap reweighting). Satisfies
/// `<cdct_forward(x), F> == <x, cdct_inverse_unweighted(F)>` exactly, which
/// is what the backward pass of the layer relies on.
pub fn cdct_inverse_unweighted(cube: &DctCube, bank: &FilterBank) -> Result<LumaImage> {
    inverse_impl(cube, bank, false)
}

/// Gram matrix of the bank: `G[i][j] = vec(w_i)^T vec(w_j)`.
pub fn gram_matrix(bank: &FilterBank) -> Vec<Vec<f64>> {
    let k = bank.len();
    let mut g = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let dot = bank.filters()[i].dot(&bank.filters()[j]);
            g[i][j] = dot;
            g[j][i] = dot;
        }
    }
    g
}

/// Sum of squared off-diagonal Gram entries.
pub fn off_diagonal_energy(gram: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for (i, row) in gram.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                sum += v * v;
            }
        }
    }
    sum
}
