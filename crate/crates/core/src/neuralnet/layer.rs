//! Layer specifications and their forward/backward kernels.
//!
//! Activations are laid out `[batch, channels, height, width]` for spatial
//! layers and `[batch, features]` after a dense layer. Convolutions use
//! TensorFlow-style "same" padding: output extent `ceil(in/stride)`, with any
//! odd padding cell placed at the bottom/right.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::array::ArrayND;
use super::gemm::{gemm, Op};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        kernel: [usize; 2],
        out_maps: usize,
        stride: usize,
    },
    TransposeConv2d {
        kernel: [usize; 2],
        out_maps: usize,
        stride: usize,
    },
    MaxPool2d {
        kernel: [usize; 2],
        stride: usize,
    },
    Dense {
        out_units: usize,
    },
    Dropout {
        drop_rate: f64,
    },
    /// Reinterprets a flat feature vector as `[channels, height, width]`.
    Reshape {
        dims: [usize; 3],
    },
    /// Fixed elementwise `scale·x + shift`.
    Affine {
        scale: f64,
        shift: f64,
    },
    Relu,
    Linear,
}

impl LayerSpec {
    pub fn conv(kernel: usize, out_maps: usize, stride: usize) -> Self {
        LayerSpec::Conv2d {
            kernel: [kernel, kernel],
            out_maps,
            stride,
        }
    }

    pub fn transpose_conv(kernel: usize, out_maps: usize, stride: usize) -> Self {
        LayerSpec::TransposeConv2d {
            kernel: [kernel, kernel],
            out_maps,
            stride,
        }
    }

    pub fn max_pool(kernel: usize, stride: usize) -> Self {
        LayerSpec::MaxPool2d {
            kernel: [kernel, kernel],
            stride,
        }
    }

    pub fn dense(out_units: usize) -> Self {
        LayerSpec::Dense { out_units }
    }

    pub fn dropout(drop_rate: f64) -> Self {
        LayerSpec::Dropout { drop_rate }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::TransposeConv2d { .. } => "transpose_conv2d",
            LayerSpec::MaxPool2d { .. } => "max_pool2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Relu => "relu",
            LayerSpec::Affine { .. } => "affine",
            LayerSpec::Linear => "linear",
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            LayerSpec::Conv2d {
                kernel,
                out_maps,
                stride,
            }
            | LayerSpec::TransposeConv2d {
                kernel,
                out_maps,
                stride,
            } => {
                if kernel[0] == 0 || kernel[1] == 0 || out_maps == 0 || stride == 0 {
                    return Err(format!("{self:?}: kernel, maps and stride must be >= 1"));
                }
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                if kernel[0] == 0 || kernel[1] == 0 || stride == 0 {
                    return Err(format!("{self:?}: kernel and stride must be >= 1"));
                }
            }
            LayerSpec::Dense { out_units } if out_units == 0 => {
                return Err("dense layer needs at least one unit".into());
            }
            LayerSpec::Dropout { drop_rate } if !(0.0..1.0).contains(&drop_rate) => {
                return Err(format!("drop rate {drop_rate} outside [0, 1)"));
            }
            LayerSpec::Affine { scale, shift } if !(scale.is_finite() && shift.is_finite()) => {
                return Err(format!("affine coefficients {scale}, {shift} must be finite"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        self.validate()?;
        let spatial = || -> std::result::Result<(usize, usize, usize), String> {
            match input {
                [c, h, w] => Ok((*c, *h, *w)),
                _ => Err(format!("{} needs a [c, h, w] input, got {input:?}", self.name())),
            }
        };
        match *self {
            LayerSpec::Conv2d {
                out_maps, stride, ..
            } => {
                let (_, h, w) = spatial()?;
                Ok(vec![out_maps, h.div_ceil(stride), w.div_ceil(stride)])
            }
            LayerSpec::TransposeConv2d {
                out_maps, stride, ..
            } => {
                let (_, h, w) = spatial()?;
                Ok(vec![out_maps, h * stride, w * stride])
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let (c, h, w) = spatial()?;
                if h < kernel[0] || w < kernel[1] || (h - kernel[0]) % stride != 0 || (w - kernel[1]) % stride != 0
                {
                    return Err(format!(
                        "max-pool {kernel:?}/{stride} does not tile a {h}x{w} map"
                    ));
                }
                Ok(vec![c, (h - kernel[0]) / stride + 1, (w - kernel[1]) / stride + 1])
            }
            LayerSpec::Dense { out_units } => Ok(vec![out_units]),
            LayerSpec::Reshape { dims } => {
                let n: usize = input.iter().product();
                if n != dims.iter().product::<usize>() {
                    return Err(format!("cannot reshape {input:?} into {dims:?}"));
                }
                Ok(dims.to_vec())
            }
            LayerSpec::Dropout { .. } | LayerSpec::Affine { .. } | LayerSpec::Relu | LayerSpec::Linear => {
                Ok(input.to_vec())
            }
        }
    }
}

/// Geometry of a same-padded 2-D convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn same(c: usize, h: usize, w: usize, kernel: [usize; 2], stride: usize) -> Self {
        let (kh, kw) = (kernel[0], kernel[1]);
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        let pad_h = ((oh - 1) * stride + kh).saturating_sub(h);
        let pad_w = ((ow - 1) * stride + kw).saturating_sub(w);
        ConvGeom {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            oh,
            ow,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Range of output columns `ox` whose source column `ox·stride + j − pad`
    /// falls inside the input, and the first such source column.
    #[inline]
    fn valid_span(&self, j: usize, pad: usize, extent: usize, outputs: usize) -> (usize, usize, usize) {
        let s = self.stride;
        let lo = if pad > j { (pad - j).div_ceil(s) } else { 0 };
        let hi = if extent + pad > j { ((extent + pad - j - 1) / s + 1).min(outputs) } else { 0 };
        if lo >= hi {
            return (0, 0, 0);
        }
        (lo, hi, lo * s + j - pad)
    }

    /// Unfolds one `[c, h, w]` image into a `[c·kh·kw, oh·ow]` matrix.
    pub fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let n = self.col_cols();
        let s = self.stride;
        for c in 0..self.c {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..self.kh {
                let (ylo, yhi, y0) = self.valid_span(i, self.pad_top, self.h, self.oh);
                for j in 0..self.kw {
                    let (xlo, xhi, x0) = self.valid_span(j, self.pad_left, self.w, self.ow);
                    let row = (c * self.kh + i) * self.kw + j;
                    let dst = &mut col[row * n..(row + 1) * n];
                    dst[..ylo * self.ow].fill(0.0);
                    dst[yhi * self.ow..].fill(0.0);
                    for (oy, y) in (ylo..yhi).zip((y0..).step_by(s)) {
                        let d = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let src = &plane[y * self.w..(y + 1) * self.w];
                        d[..xlo].fill(0.0);
                        d[xhi..].fill(0.0);
                        if s == 1 {
                            d[xlo..xhi].copy_from_slice(&src[x0..x0 + (xhi - xlo)]);
                        } else {
                            for (v, &sv) in d[xlo..xhi].iter_mut().zip(src[x0..].iter().step_by(s)) {
                                *v = sv;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Single-map stride-1 convolution accumulated into `y` without unfolding.
    pub fn direct_forward(&self, x: &[f64], wt: &[f64], y: &mut [f64]) {
        debug_assert_eq!(self.stride, 1);
        for c in 0..self.c {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..self.kh {
                let (ylo, yhi, y0) = self.valid_span(i, self.pad_top, self.h, self.oh);
                for j in 0..self.kw {
                    let (xlo, xhi, x0) = self.valid_span(j, self.pad_left, self.w, self.ow);
                    let wv = wt[(c * self.kh + i) * self.kw + j];
                    let len = xhi - xlo;
                    for (oy, yy) in (ylo..yhi).zip(y0..) {
                        let src = &plane[yy * self.w + x0..yy * self.w + x0 + len];
                        let dst = &mut y[oy * self.ow + xlo..oy * self.ow + xhi];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }

    /// Gradients of [`direct_forward`](Self::direct_forward): accumulates
    /// into `gw` and `dx`.
    pub fn direct_backward(&self, x: &[f64], wt: &[f64], dy: &[f64], gw: &mut [f64], dx: &mut [f64]) {
        debug_assert_eq!(self.stride, 1);
        let hw = self.h * self.w;
        for c in 0..self.c {
            let plane = &x[c * hw..(c + 1) * hw];
            let dplane = &mut dx[c * hw..(c + 1) * hw];
            for i in 0..self.kh {
                let (ylo, yhi, y0) = self.valid_span(i, self.pad_top, self.h, self.oh);
                for j in 0..self.kw {
                    let (xlo, xhi, x0) = self.valid_span(j, self.pad_left, self.w, self.ow);
                    let k = (c * self.kh + i) * self.kw + j;
                    let wv = wt[k];
                    let len = xhi - xlo;
                    let mut acc = 0.0;
                    for (oy, yy) in (ylo..yhi).zip(y0..) {
                        let g = &dy[oy * self.ow + xlo..oy * self.ow + xhi];
                        let at = yy * self.w + x0;
                        for ((d, &v), &gv) in dplane[at..at + len].iter_mut().zip(&plane[at..at + len]).zip(g) {
                            acc += gv * v;
                            *d += wv * gv;
                        }
                    }
                    gw[k] += acc;
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): accumulates columns back into an image.
    pub fn col2im(&self, col: &[f64], x: &mut [f64]) {
        let n = self.col_cols();
        let s = self.stride;
        for c in 0..self.c {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..self.kh {
                let (ylo, yhi, y0) = self.valid_span(i, self.pad_top, self.h, self.oh);
                for j in 0..self.kw {
                    let (xlo, xhi, x0) = self.valid_span(j, self.pad_left, self.w, self.ow);
                    let row = (c * self.kh + i) * self.kw + j;
                    let src = &col[row * n..(row + 1) * n];
                    for (oy, y) in (ylo..yhi).zip((y0..).step_by(s)) {
                        let sv = &src[oy * self.ow + xlo..oy * self.ow + xhi];
                        let dst = &mut plane[y * self.w..(y + 1) * self.w];
                        if s == 1 {
                            for (d, &v) in dst[x0..x0 + sv.len()].iter_mut().zip(sv) {
                                *d += v;
                            }
                        } else {
                            for (d, &v) in dst[x0..].iter_mut().step_by(s).zip(sv) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Per-layer state saved by a training forward pass for reuse in backward.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerCache {
    None,
    /// Dropout multipliers: 0 or `1/keep`.
    Mask(Vec<f64>),
    /// Flat input index of each pooled maximum.
    Argmax(Vec<usize>),
}

/// A layer with its resolved shapes and parameters (`[weights, bias]` for
/// the trainable variants).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    pub spec: LayerSpec,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub params: Vec<ArrayND>,
}

impl Layer {
    pub fn new(spec: LayerSpec, input: &[usize]) -> std::result::Result<Self, String> {
        let output = spec.output_shape(input)?;
        let params = match spec {
            LayerSpec::Conv2d {
                kernel, out_maps, ..
            } => vec![
                ArrayND::zeros(&[out_maps, input[0] * kernel[0] * kernel[1]]),
                ArrayND::zeros(&[out_maps]),
            ],
            LayerSpec::TransposeConv2d {
                kernel, out_maps, ..
            } => vec![
                ArrayND::zeros(&[input[0], out_maps * kernel[0] * kernel[1]]),
                ArrayND::zeros(&[out_maps]),
            ],
            LayerSpec::Dense { out_units } => vec![
                ArrayND::zeros(&[out_units, input.iter().product()]),
                ArrayND::zeros(&[out_units]),
            ],
            _ => Vec::new(),
        };
        Ok(Layer {
            spec,
            input: input.to_vec(),
            output,
            params,
        })
    }

    pub fn fan_in(&self) -> f64 {
        match self.spec {
            LayerSpec::Conv2d { kernel, .. } => (self.input[0] * kernel[0] * kernel[1]) as f64,
            // each output pixel sees about kh·kw/stride² input positions
            LayerSpec::TransposeConv2d { kernel, stride, .. } => {
                ((self.input[0] * kernel[0] * kernel[1]) as f64 / (stride * stride) as f64).max(1.0)
            }
            LayerSpec::Dense { .. } => self.input.iter().product::<usize>() as f64,
            _ => 1.0,
        }
    }

    /// He-normal weights, zero biases.
    pub fn init_params(&mut self, rng: &mut dyn RngCore) {
        let std = (2.0 / self.fan_in()).sqrt();
        if let Some(w) = self.params.first_mut() {
            for v in w.data_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = std * z;
            }
        }
        if let Some(b) = self.params.get_mut(1) {
            b.fill(0.0);
        }
    }

    fn in_len(&self) -> usize {
        self.input.iter().product()
    }

    fn out_len(&self) -> usize {
        self.output.iter().product()
    }

    /// Forward pass on a whole batch. `dropout` is `None` in inference mode,
    /// `Some(Err(rng))` to draw fresh masks, `Some(Ok(mask))` to reuse one.
    pub fn forward<'r>(
        &self,
        x: &ArrayND,
        dropout: Option<std::result::Result<&[f64], &mut (dyn RngCore + 'r)>>,
    ) -> (ArrayND, LayerCache) {
        let n = x.batch();
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&self.output);
        let mut y = ArrayND::zeros(&out_shape);
        let (il, ol) = (self.in_len(), self.out_len());
        let mut cache = LayerCache::None;
        match self.spec {
            LayerSpec::Conv2d { kernel, stride, .. } => {
                let g = ConvGeom::same(self.input[0], self.input[1], self.input[2], kernel, stride);
                let (wt, b) = (&self.params[0], &self.params[1]);
                let maps = self.output[0];
                if maps == 1 && stride == 1 {
                    for s in 0..n {
                        let ys = &mut y.data_mut()[s * ol..(s + 1) * ol];
                        ys.fill(b.data()[0]);
                        g.direct_forward(x.sample(s), wt.data(), ys);
                    }
                    return (y, cache);
                }
                let mut col = vec![0.0; g.col_rows() * g.col_cols()];
                for s in 0..n {
                    g.im2col(x.sample(s), &mut col);
                    let ys = &mut y.data_mut()[s * ol..(s + 1) * ol];
                    for (m, chunk) in ys.chunks_mut(g.col_cols()).enumerate() {
                        chunk.fill(b.data()[m]);
                    }
                    gemm(maps, g.col_rows(), g.col_cols(), 1.0, wt.data(), Op::N, &col, Op::N, 1.0, ys);
                }
            }
            LayerSpec::TransposeConv2d { kernel, stride, .. } => {
                // adjoint of a same-padded strided convolution from the
                // output space back to the input space
                let maps = self.output[0];
                let g = ConvGeom::same(maps, self.output[1], self.output[2], kernel, stride);
                let (wt, b) = (&self.params[0], &self.params[1]);
                let mut col = vec![0.0; g.col_rows() * g.col_cols()];
                for s in 0..n {
                    gemm(
                        g.col_rows(),
                        self.input[0],
                        g.col_cols(),
                        1.0,
                        wt.data(),
                        Op::T,
                        x.sample(s),
                        Op::N,
                        0.0,
                        &mut col,
                    );
                    let ys = &mut y.data_mut()[s * ol..(s + 1) * ol];
                    for (m, chunk) in ys.chunks_mut(ol / maps).enumerate() {
                        chunk.fill(b.data()[m]);
                    }
                    g.col2im(&col, ys);
                }
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let (c, h, w) = (self.input[0], self.input[1], self.input[2]);
                let (oh, ow) = (self.output[1], self.output[2]);
                let mut arg = vec![0usize; n * ol];
                for s in 0..n {
                    let xs = x.sample(s);
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_i = usize::MAX;
                                for i in 0..kernel[0] {
                                    for j in 0..kernel[1] {
                                        let idx = (ch * h + oy * stride + i) * w + ox * stride + j;
                                        // strict comparison keeps the first maximum
                                        if xs[idx] > best || best_i == usize::MAX {
                                            best = xs[idx];
                                            best_i = idx;
                                        }
                                    }
                                }
                                let o = s * ol + (ch * oh + oy) * ow + ox;
                                y.data_mut()[o] = best;
                                arg[o] = best_i;
                            }
                        }
                    }
                }
                cache = LayerCache::Argmax(arg);
            }
            LayerSpec::Dense { out_units } => {
                let (wt, b) = (&self.params[0], &self.params[1]);
                for row in y.data_mut().chunks_mut(out_units) {
                    row.copy_from_slice(b.data());
                }
                gemm(n, il, out_units, 1.0, x.data(), Op::N, wt.data(), Op::T, 1.0, y.data_mut());
            }
            LayerSpec::Dropout { drop_rate } => match dropout {
                None => y.data_mut().copy_from_slice(x.data()),
                Some(source) => {
                    let mask = match source {
                        Ok(mask) => mask.to_vec(),
                        Err(rng) => dropout_mask(rng, x.len(), 1.0 - drop_rate),
                    };
                    for ((o, &v), &m) in y.data_mut().iter_mut().zip(x.data()).zip(&mask) {
                        *o = v * m;
                    }
                    cache = LayerCache::Mask(mask);
                }
            },
            LayerSpec::Relu => {
                for (o, &v) in y.data_mut().iter_mut().zip(x.data()) {
                    *o = v.max(0.0);
                }
            }
            LayerSpec::Affine { scale, shift } => {
                for (o, &v) in y.data_mut().iter_mut().zip(x.data()) {
                    *o = scale * v + shift;
                }
            }
            LayerSpec::Reshape { .. } | LayerSpec::Linear => {
                y.data_mut().copy_from_slice(x.data());
            }
        }
        (y, cache)
    }

    /// Returns the input gradient and parameter gradients (summed over the
    /// batch).
    pub fn backward(&self, x: &ArrayND, cache: &LayerCache, dy: &ArrayND) -> (ArrayND, Vec<ArrayND>) {
        let n = x.batch();
        let mut dx = ArrayND::zeros(x.shape());
        let (il, ol) = (self.in_len(), self.out_len());
        let mut grads: Vec<ArrayND> = self.params.iter().map(|p| ArrayND::zeros(p.shape())).collect();
        match self.spec {
            LayerSpec::Conv2d { kernel, stride, .. } => {
                let g = ConvGeom::same(self.input[0], self.input[1], self.input[2], kernel, stride);
                let maps = self.output[0];
                let wt = &self.params[0];
                let (gw, gb) = grads.split_at_mut(1);
                if maps == 1 && stride == 1 {
                    for s in 0..n {
                        let dys = dy.sample(s);
                        gb[0].data_mut()[0] += dys.iter().sum::<f64>();
                        g.direct_backward(
                            x.sample(s),
                            wt.data(),
                            dys,
                            gw[0].data_mut(),
                            &mut dx.data_mut()[s * il..(s + 1) * il],
                        );
                    }
                    return (dx, grads);
                }
                let mut col = vec![0.0; g.col_rows() * g.col_cols()];
                let mut dcol = vec![0.0; g.col_rows() * g.col_cols()];
                for s in 0..n {
                    let dys = dy.sample(s);
                    g.im2col(x.sample(s), &mut col);
                    gemm(maps, g.col_cols(), g.col_rows(), 1.0, dys, Op::N, &col, Op::T, 1.0, gw[0].data_mut());
                    for (m, chunk) in dys.chunks(g.col_cols()).enumerate() {
                        gb[0].data_mut()[m] += chunk.iter().sum::<f64>();
                    }
                    gemm(g.col_rows(), maps, g.col_cols(), 1.0, wt.data(), Op::T, dys, Op::N, 0.0, &mut dcol);
                    g.col2im(&dcol, &mut dx.data_mut()[s * il..(s + 1) * il]);
                }
            }
            LayerSpec::TransposeConv2d { kernel, stride, .. } => {
                let maps = self.output[0];
                let cin = self.input[0];
                let g = ConvGeom::same(maps, self.output[1], self.output[2], kernel, stride);
                let wt = &self.params[0];
                let mut col = vec![0.0; g.col_rows() * g.col_cols()];
                let (gw, gb) = grads.split_at_mut(1);
                for s in 0..n {
                    let dys = dy.sample(s);
                    g.im2col(dys, &mut col);
                    gemm(cin, g.col_rows(), g.col_cols(), 1.0, wt.data(), Op::N, &col, Op::N, 0.0,
                        &mut dx.data_mut()[s * il..(s + 1) * il]);
                    gemm(cin, g.col_cols(), g.col_rows(), 1.0, x.sample(s), Op::N, &col, Op::T, 1.0, gw[0].data_mut());
                    for (m, chunk) in dys.chunks(ol / maps).enumerate() {
                        gb[0].data_mut()[m] += chunk.iter().sum::<f64>();
                    }
                }
            }
            LayerSpec::MaxPool2d { .. } => {
                let LayerCache::Argmax(arg) = cache else {
                    unreachable!("max-pool backward without argmax cache")
                };
                for s in 0..n {
                    let dxs = &mut dx.data_mut()[s * il..(s + 1) * il];
                    for (o, &src) in dy.sample(s).iter().zip(&arg[s * ol..(s + 1) * ol]) {
                        dxs[src] += o;
                    }
                }
            }
            LayerSpec::Dense { out_units } => {
                let wt = &self.params[0];
                let (gw, gb) = grads.split_at_mut(1);
                gemm(out_units, n, il, 1.0, dy.data(), Op::T, x.data(), Op::N, 0.0, gw[0].data_mut());
                for row in dy.data().chunks(out_units) {
                    for (b, &d) in gb[0].data_mut().iter_mut().zip(row) {
                        *b += d;
                    }
                }
                gemm(n, out_units, il, 1.0, dy.data(), Op::N, wt.data(), Op::N, 0.0, dx.data_mut());
            }
            LayerSpec::Dropout { .. } => match cache {
                LayerCache::Mask(mask) => {
                    for ((o, &d), &m) in dx.data_mut().iter_mut().zip(dy.data()).zip(mask) {
                        *o = d * m;
                    }
                }
                _ => dx.data_mut().copy_from_slice(dy.data()),
            },
            LayerSpec::Relu => {
                for ((o, &d), &v) in dx.data_mut().iter_mut().zip(dy.data()).zip(x.data()) {
                    *o = if v > 0.0 { d } else { 0.0 };
                }
            }
            LayerSpec::Affine { scale, .. } => {
                for (o, &d) in dx.data_mut().iter_mut().zip(dy.data()) {
                    *o = scale * d;
                }
            }
            LayerSpec::Reshape { .. } | LayerSpec::Linear => {
                dx.data_mut().copy_from_slice(dy.data());
            }
        }
        (dx, grads)
    }
}

/// Bernoulli keep mask scaled by `1/keep`, drawn from 32-bit uniforms.
fn dropout_mask(rng: &mut dyn RngCore, len: usize, keep: f64) -> Vec<f64> {
    let mut bytes = vec![0u8; 4 * len];
    rng.fill_bytes(&mut bytes);
    let threshold = keep * 4_294_967_296.0;
    let scale = 1.0 / keep;
    bytes
        .chunks_exact(4)
        .map(|b| {
            let u = u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if f64::from(u) < threshold { scale } else { 0.0 }
        })
        .collect()
}

/// Checks a per-sample shape against what a layer expects.
pub(crate) fn check_input(layer: usize, expected: &[usize], x: &ArrayND) -> Result<()> {
    if x.sample_shape() != expected {
        return Err(Error::LayerShape {
            layer,
            expected: expected.to_vec(),
            actual: x.sample_shape().to_vec(),
        });
    }
    Ok(())
}

/// 2×2 (or general) max pooling of one batch; returns the pooled output
/// and the flat input index of every maximum.
pub fn maxpool2d(input: &ArrayND, kernel: [usize; 2], stride: usize) -> Result<(ArrayND, Vec<usize>)> {
    let layer = Layer::new(LayerSpec::MaxPool2d { kernel, stride }, input.sample_shape())
        .map_err(Error::Shape)?;
    let (y, cache) = layer.forward(input, None);
    match cache {
        LayerCache::Argmax(a) => Ok((y, a)),
        _ => unreachable!(),
    }
}
