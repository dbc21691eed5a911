//! The generative network: strided upconvolutions, their adjoints, size
//! planning and synthesis of the generative image part.
//!
//! Layers are indexed from the image side: `layers[0]` is layer 1 (whose
//! channels are summed into the image), `layers[L-1]` is the deepest
//! layer. Channel `n` of layer `l` only feeds channel `n` of layer `l-1`.
//!
//! Convolutions follow the index rule
//! `(mu * theta)[n][m] = sum_{i,j} mu[n + r-1 - i][m + r-1 - j] * theta[i][j]`
//! (0-based), i.e. a true convolution with a flipped kernel, not a
//! correlation.

use crate::block::BlockVariable;
use crate::energy::ModelConfig;
use crate::error::{GenregError, Result};
use crate::grid::Grid;
use rayon::prelude::*;

/// Shape bookkeeping of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub stride: usize,
    /// Latent dims `(M_x, M_y)`.
    pub latent: (usize, usize),
    /// Zero-interpolation target `(M~_x, M~_y)`.
    pub interp: (usize, usize),
    /// Output dims of the upconvolution: the next-shallower latent dims,
    /// or the image dims for layer 1.
    pub output: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizePlan {
    pub image: (usize, usize),
    pub kernel_size: usize,
    pub layers: Vec<LayerShape>,
}

impl SizePlan {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// The plan restricted to the first `depth` layers.
    pub fn truncated(&self, depth: usize) -> SizePlan {
        SizePlan {
            image: self.image,
            kernel_size: self.kernel_size,
            layers: self.layers[..depth.min(self.layers.len())].to_vec(),
        }
    }
}

pub fn derive_size_plan(nx: usize, ny: usize, config: &ModelConfig) -> Result<SizePlan> {
    config.validate()?;
    let r = config.kernel_size;
    if nx < r || ny < r {
        return Err(GenregError::Config(format!(
            "image {nx}x{ny} is smaller than the kernel size {r}"
        )));
    }
    let mut layers = Vec::with_capacity(config.layers);
    let mut output = (nx, ny);
    for &stride in config.strides.iter().take(config.layers) {
        let interp = (output.0 + r - 1, output.1 + r - 1);
        let latent = (interp.0.div_ceil(stride), interp.1.div_ceil(stride));
        layers.push(LayerShape {
            stride,
            latent,
            interp,
            output,
        });
        output = latent;
    }
    Ok(SizePlan {
        image: (nx, ny),
        kernel_size: r,
        layers,
    })
}

fn check_interp(latent: (usize, usize), stride: usize, interp: (usize, usize)) -> Result<()> {
    let ok = |m: usize, t: usize| m >= 1 && stride * (m - 1) < t && t <= stride * m;
    if stride == 0 || !ok(latent.0, interp.0) || !ok(latent.1, interp.1) {
        return Err(GenregError::Shape(format!(
            "interpolation target {interp:?} incompatible with latent {latent:?} at stride {stride}"
        )));
    }
    Ok(())
}

fn upconv_output(interp: (usize, usize), r: usize) -> Result<(usize, usize)> {
    if interp.0 < r || interp.1 < r {
        return Err(GenregError::Shape(format!(
            "interpolated size {interp:?} smaller than kernel size {r}"
        )));
    }
    Ok((interp.0 - r + 1, interp.1 - r + 1))
}

fn square_kernel(theta: &Grid) -> Result<usize> {
    let (a, b) = theta.dim();
    if a != b || a == 0 {
        return Err(GenregError::Shape(format!(
            "kernel must be square, got {a}x{b}"
        )));
    }
    Ok(a)
}

/// Places `mu[k][l]` at `(stride*k, stride*l)` of a zero grid of dims `target`.
pub fn zero_interpolate(mu: &Grid, stride: usize, target: (usize, usize)) -> Result<Grid> {
    check_interp(mu.dim(), stride, target)?;
    let mut out = Grid::zeros(target);
    for ((k, l), &v) in mu.indexed_iter() {
        out[[stride * k, stride * l]] = v;
    }
    Ok(out)
}

/// Valid convolution, output dims `(M_x - r + 1, M_y - r + 1)`.
pub fn valid_convolve(mu: &Grid, theta: &Grid) -> Result<Grid> {
    strided_upconvolve(mu, theta, 1, mu.dim())
}

/// Latent index range of one kernel tap along one axis.
///
/// Latent entry `l` meets tap `j` at output position `stride*l + j + 1 - r`.
/// Returns the latents `lo..hi` whose position lies in `0..out_len`, and the
/// output position of `lo`.
#[derive(Clone, Copy)]
struct TapSpan {
    lo: usize,
    hi: usize,
    start: usize,
}

fn tap_spans(r: usize, stride: usize, out_len: usize, latent_len: usize) -> Vec<TapSpan> {
    (0..r)
        .map(|j| {
            let lo = (r - 1 - j).div_ceil(stride);
            let hi = ((out_len + r - 2 - j) / stride + 1).min(latent_len);
            TapSpan {
                lo,
                hi: hi.max(lo),
                start: stride * lo + j + 1 - r,
            }
        })
        .collect()
}

/// Row-major entries of `g`, copied only when `g` is not contiguous.
fn contiguous(g: &Grid) -> std::borrow::Cow<'_, [f64]> {
    match g.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(g.iter().copied().collect()),
    }
}

/// `out += mu *_stride theta`. `out` must already have the upconvolution
/// output dims. Rows of `mu` are swept against kernel taps so the inner
/// loop runs along a whole latent row.
fn upconv_accumulate(mu: &Grid, theta: &Grid, stride: usize, out: &mut Grid) {
    let r = theta.nrows();
    let (ox, oy) = out.dim();
    let (mx, my) = mu.dim();
    let th = contiguous(theta);
    let mu_s = contiguous(mu);
    let spans = tap_spans(r, stride, oy, my);
    let out_slice = out.as_slice_mut().expect("standard layout");
    for k in 0..mx {
        let mrow = &mu_s[k * my..(k + 1) * my];
        for (i, trow) in th.chunks_exact(r).enumerate() {
            let Some(n) = (stride * k + i + 1).checked_sub(r).filter(|&n| n < ox) else {
                continue;
            };
            let orow = &mut out_slice[n * oy..(n + 1) * oy];
            for (&t, span) in trow.iter().zip(&spans) {
                let src = &mrow[span.lo..span.hi];
                if src.is_empty() {
                    continue;
                }
                if stride == 1 {
                    for (o, x) in orow[span.start..span.start + src.len()].iter_mut().zip(src) {
                        *o += t * x;
                    }
                } else {
                    let dst = &mut orow[span.start..span.start + stride * (src.len() - 1) + 1];
                    for (idx, x) in src.iter().enumerate() {
                        dst[stride * idx] += t * x;
                    }
                }
            }
        }
    }
}

/// `mu *_stride theta`: zero interpolation to `interp`, then valid convolution.
pub fn strided_upconvolve(
    mu: &Grid,
    theta: &Grid,
    stride: usize,
    interp: (usize, usize),
) -> Result<Grid> {
    let r = square_kernel(theta)?;
    check_interp(mu.dim(), stride, interp)?;
    let mut out = Grid::zeros(upconv_output(interp, r)?);
    upconv_accumulate(mu, theta, stride, &mut out);
    Ok(out)
}

fn check_residual(resid: &Grid, interp: (usize, usize), r: usize) -> Result<(usize, usize)> {
    let out_dims = upconv_output(interp, r)?;
    if resid.dim() != out_dims {
        return Err(GenregError::Shape(format!(
            "residual {:?} does not match upconvolution output {out_dims:?}",
            resid.dim()
        )));
    }
    Ok(out_dims)
}

/// Adjoint of `mu -> mu *_stride theta` applied to `resid`.
pub fn upconv_adjoint_latent(
    resid: &Grid,
    theta: &Grid,
    stride: usize,
    latent: (usize, usize),
    interp: (usize, usize),
) -> Result<Grid> {
    let r = square_kernel(theta)?;
    check_interp(latent, stride, interp)?;
    let (ox, oy) = check_residual(resid, interp, r)?;
    let (mx, my) = latent;
    let th = contiguous(theta);
    let res = contiguous(resid);
    let spans = tap_spans(r, stride, oy, my);
    let mut g = Grid::zeros(latent);
    let gs = g.as_slice_mut().expect("standard layout");
    for k in 0..mx {
        let grow = &mut gs[k * my..(k + 1) * my];
        for (i, trow) in th.chunks_exact(r).enumerate() {
            let Some(n) = (stride * k + i + 1).checked_sub(r).filter(|&n| n < ox) else {
                continue;
            };
            let rrow = &res[n * oy..(n + 1) * oy];
            for (&t, span) in trow.iter().zip(&spans) {
                let dst = &mut grow[span.lo..span.hi];
                if stride == 1 {
                    for (o, x) in dst.iter_mut().zip(&rrow[span.start..]) {
                        *o += t * x;
                    }
                } else {
                    for (o, x) in dst
                        .iter_mut()
                        .zip(rrow[span.start..].iter().step_by(stride))
                    {
                        *o += t * x;
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Adjoint of `theta -> mu *_stride theta` applied to `resid`; an `r x r` grid.
pub fn upconv_adjoint_kernel(
    resid: &Grid,
    mu: &Grid,
    stride: usize,
    interp: (usize, usize),
    kernel_size: usize,
) -> Result<Grid> {
    let r = kernel_size;
    check_interp(mu.dim(), stride, interp)?;
    let (ox, oy) = check_residual(resid, interp, r)?;
    let (mx, my) = mu.dim();
    let mu_s = contiguous(mu);
    let res = contiguous(resid);
    let spans = tap_spans(r, stride, oy, my);
    let mut g = vec![0.0; r * r];
    for k in 0..mx {
        let mrow = &mu_s[k * my..(k + 1) * my];
        for (i, grow) in g.chunks_exact_mut(r).enumerate() {
            let Some(n) = (stride * k + i + 1).checked_sub(r).filter(|&n| n < ox) else {
                continue;
            };
            let rrow = &res[n * oy..(n + 1) * oy];
            for (gv, span) in grow.iter_mut().zip(&spans) {
                let src = &mrow[span.lo..span.hi];
                *gv += if stride == 1 {
                    dot(src, &rrow[span.start..span.start + src.len()])
                } else {
                    src.iter()
                        .zip(rrow[span.start..].iter().step_by(stride))
                        .map(|(a, b)| a * b)
                        .sum()
                };
            }
        }
    }
    Ok(Grid::from_shape_vec((r, r), g).expect("r*r entries"))
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (a4, a_rest) = a.split_at(a.len() - a.len() % 4);
    let (b4, b_rest) = b.split_at(a4.len());
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        for q in 0..4 {
            acc[q] += x[q] * y[q];
        }
    }
    let tail: f64 = a_rest.iter().zip(b_rest).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Per-layer, per-channel latent variables.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentStack {
    pub layers: Vec<Vec<Grid>>,
}

/// Per-layer, per-channel `r x r` filter kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSet {
    pub layers: Vec<Vec<Grid>>,
}

impl LatentStack {
    pub fn zeros(plan: &SizePlan, channels: usize) -> Self {
        LatentStack {
            layers: plan
                .layers
                .iter()
                .map(|shape| vec![Grid::zeros(shape.latent); channels])
                .collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn channels(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }

    pub fn check_plan(&self, plan: &SizePlan) -> Result<()> {
        if self.depth() != plan.depth() {
            return Err(GenregError::Shape(format!(
                "latent stack has {} layers, plan has {}",
                self.depth(),
                plan.depth()
            )));
        }
        for (l, (chans, shape)) in self.layers.iter().zip(&plan.layers).enumerate() {
            if let Some(bad) = chans.iter().find(|g| g.dim() != shape.latent) {
                return Err(GenregError::Shape(format!(
                    "layer {} latent {:?}, expected {:?}",
                    l + 1,
                    bad.dim(),
                    shape.latent
                )));
            }
        }
        Ok(())
    }
}

impl KernelSet {
    pub fn zeros(depth: usize, channels: usize, kernel_size: usize) -> Self {
        KernelSet {
            layers: vec![vec![Grid::zeros((kernel_size, kernel_size)); channels]; depth],
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn channels(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }
}

impl BlockVariable for LatentStack {
    fn grids(&self) -> Vec<&Grid> {
        self.layers.iter().flatten().collect()
    }

    fn grids_mut(&mut self) -> Vec<&mut Grid> {
        self.layers.iter_mut().flatten().collect()
    }
}

impl BlockVariable for KernelSet {
    fn grids(&self) -> Vec<&Grid> {
        self.layers.iter().flatten().collect()
    }

    fn grids_mut(&mut self) -> Vec<&mut Grid> {
        self.layers.iter_mut().flatten().collect()
    }
}

/// Upconvolutions of every channel of layer `layer` (0-based):
/// `mu[layer][n] *_sigma theta[layer][n]`.
pub fn layer_outputs(
    latents: &LatentStack,
    kernels: &KernelSet,
    plan: &SizePlan,
    layer: usize,
) -> Result<Vec<Grid>> {
    let shape = plan.layers[layer];
    latents.layers[layer]
        .par_iter()
        .zip(kernels.layers[layer].par_iter())
        .map(|(mu, theta)| strided_upconvolve(mu, theta, shape.stride, shape.interp))
        .collect()
}

/// The generative image part `v = sum_n mu^1_n *_1 theta^1_n`.
pub fn synthesize(latents: &LatentStack, kernels: &KernelSet, plan: &SizePlan) -> Result<Grid> {
    if plan.depth() == 0 || latents.depth() == 0 {
        return Ok(Grid::zeros(plan.image));
    }
    if latents.channels() != kernels.channels() {
        return Err(GenregError::Shape(format!(
            "{} latent channels vs {} kernel channels",
            latents.channels(),
            kernels.channels()
        )));
    }
    let parts = layer_outputs(latents, kernels, plan, 0)?;
    let mut v = Grid::zeros(plan.image);
    for part in &parts {
        if part.dim() != plan.image {
            return Err(GenregError::Shape(format!(
                "layer-1 output {:?} does not match image {:?}",
                part.dim(),
                plan.image
            )));
        }
        v += part;
    }
    Ok(v)
}

/// Places a unit delta in channel `channel` of layer `layer` (both 0-based)
/// at `position`, propagates it down the channel's chain, and returns the
/// resulting image.
pub fn sample_delta(
    kernels: &KernelSet,
    plan: &SizePlan,
    layer: usize,
    channel: usize,
    position: (usize, usize),
) -> Result<Grid> {
    if layer >= plan.depth() || layer >= kernels.depth() {
        return Err(GenregError::Index(format!(
            "layer {} out of range (depth {})",
            layer + 1,
            plan.depth().min(kernels.depth())
        )));
    }
    if channel >= kernels.channels() {
        return Err(GenregError::Index(format!(
            "channel {} out of range ({} channels)",
            channel + 1,
            kernels.channels()
        )));
    }
    let dims = plan.layers[layer].latent;
    if position.0 >= dims.0 || position.1 >= dims.1 {
        return Err(GenregError::Index(format!(
            "position {position:?} outside latent of dims {dims:?}"
        )));
    }
    let mut mu = Grid::zeros(dims);
    mu[position] = 1.0;
    for l in (0..=layer).rev() {
        let shape = plan.layers[l];
        mu = strided_upconvolve(&mu, &kernels.layers[l][channel], shape.stride, shape.interp)?;
    }
    Ok(mu)
}
