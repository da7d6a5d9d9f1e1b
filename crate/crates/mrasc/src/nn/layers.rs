//! The fixed layer set: conv2d, max-pool, dense, ReLU and dropout.
//!
//! Layers process one sample at a time (no batch dimension); the trainer
//! owns batching and parallelism. Forward passes return a cache that the
//! matching backward pass consumes; backward passes accumulate parameter
//! gradients with `+=` so per-sample gradients sum into a batch gradient.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Param, Scalar, Tensor};

/// Whether stochastic layers (dropout and friends) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Eight-lane dot product; the fixed-width partial sums let the compiler
/// vectorize what a plain f32 reduction cannot.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::ZERO; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut acc = T::ZERO;
    for l in lanes {
        acc += l;
    }
    for i in chunks * 8..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// He-uniform fan-in initialization: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub fn he_uniform<T: Scalar>(dims: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let data = (0..dims.iter().product::<usize>())
        .map(|_| T::from_f64(rng.random_range(-limit..limit)))
        .collect();
    Tensor::from_vec(dims, data)
}

/// Zero-padded stride-1 "same" convolution (cross-correlation convention).
///
/// Even kernels pad asymmetrically with the extra row/column on the
/// high-index side, so the output always matches the input extent.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
}

/// Forward cache: the unrolled input patches, reused by backward.
#[derive(Debug, Clone, Default)]
pub struct ConvCache<T> {
    col: Vec<T>,
    h: usize,
    w: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_ch: usize, out_ch: usize, kh: usize, kw: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_ch * kh * kw;
        Self {
            weight: Param::new(he_uniform(&[out_ch, in_ch, kh, kw], fan_in, rng)),
            bias: Param::new(Tensor::zeros(&[out_ch])),
            in_ch,
            out_ch,
            kh,
            kw,
        }
    }

    fn pads(&self) -> (usize, usize) {
        ((self.kh - 1) / 2, (self.kw - 1) / 2)
    }

    /// `x`: `in_ch x H x W` -> `out_ch x H x W`.
    pub fn forward(&self, x: &Tensor<T>, cache: &mut ConvCache<T>) -> Tensor<T> {
        let dims = x.dims();
        assert_eq!(dims.len(), 3, "conv2d expects C x H x W input");
        assert_eq!(dims[0], self.in_ch, "channel mismatch: {} != {}", dims[0], self.in_ch);
        let (h, w) = (dims[1], dims[2]);
        let hw = h * w;
        let k = self.in_ch * self.kh * self.kw;
        let (pt, pl) = self.pads();

        cache.h = h;
        cache.w = w;
        cache.col.resize(k * hw, T::ZERO);
        let col = &mut cache.col;
        let input = x.data();

        for c in 0..self.in_ch {
            let chan = &input[c * hw..(c + 1) * hw];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = &mut col[((c * self.kh + i) * self.kw + j) * hw..][..hw];
                    // x + j - pl must land in [0, w)
                    let xlo = pl.saturating_sub(j);
                    let xhi = (w + pl).saturating_sub(j).min(w);
                    for y in 0..h {
                        let dst = &mut row[y * w..(y + 1) * w];
                        let yy = y + i;
                        if yy < pt || yy - pt >= h || xlo >= xhi {
                            dst.fill(T::ZERO);
                            continue;
                        }
                        let src = &chan[(yy - pt) * w..(yy - pt + 1) * w];
                        dst[..xlo].fill(T::ZERO);
                        dst[xlo..xhi].copy_from_slice(&src[xlo + j - pl..xhi + j - pl]);
                        dst[xhi..].fill(T::ZERO);
                    }
                }
            }
        }

        let wmat = self.weight.value.data();
        let bias = self.bias.value.data();
        let mut out = Tensor::zeros(&[self.out_ch, h, w]);
        let odata = out.data_mut();
        for o in 0..self.out_ch {
            let orow = &mut odata[o * hw..(o + 1) * hw];
            orow.fill(bias[o]);
            // blocks of four col rows cut the output-row memory traffic
            let mut kk = 0;
            while kk + 4 <= k {
                let wv = &wmat[o * k + kk..o * k + kk + 4];
                let (c0, rest) = col[kk * hw..].split_at(hw);
                let (c1, rest) = rest.split_at(hw);
                let (c2, rest) = rest.split_at(hw);
                let c3 = &rest[..hw];
                for (i, ov) in orow.iter_mut().enumerate() {
                    *ov += wv[0] * c0[i] + wv[1] * c1[i] + wv[2] * c2[i] + wv[3] * c3[i];
                }
                kk += 4;
            }
            while kk < k {
                let wv = wmat[o * k + kk];
                let crow = &col[kk * hw..(kk + 1) * hw];
                for (ov, cv) in orow.iter_mut().zip(crow) {
                    *ov += wv * *cv;
                }
                kk += 1;
            }
        }
        out
    }

    /// Accumulates weight/bias gradients, returns the input gradient.
    pub fn backward(&mut self, d_out: &Tensor<T>, cache: &ConvCache<T>) -> Tensor<T> {
        self.backward_impl(d_out, cache, true)
            .expect("compute_d_in was requested")
    }

    /// Like [`Conv2d::backward`] but skips the input-gradient pass; used by
    /// first layers whose input is data, not an activation.
    pub fn backward_no_input_grad(&mut self, d_out: &Tensor<T>, cache: &ConvCache<T>) {
        self.backward_impl(d_out, cache, false);
    }

    fn backward_impl(
        &mut self,
        d_out: &Tensor<T>,
        cache: &ConvCache<T>,
        compute_d_in: bool,
    ) -> Option<Tensor<T>> {
        let (h, w) = (cache.h, cache.w);
        let hw = h * w;
        let k = self.in_ch * self.kh * self.kw;
        assert_eq!(d_out.dims(), &[self.out_ch, h, w]);
        let dout = d_out.data();
        let col = &cache.col;

        let dw = self.weight.grad.data_mut();
        for o in 0..self.out_ch {
            let drow = &dout[o * hw..(o + 1) * hw];
            for kk in 0..k {
                let crow = &col[kk * hw..(kk + 1) * hw];
                dw[o * k + kk] += dot(drow, crow);
            }
        }
        let db = self.bias.grad.data_mut();
        for o in 0..self.out_ch {
            let mut acc = T::ZERO;
            for dv in &dout[o * hw..(o + 1) * hw] {
                acc += *dv;
            }
            db[o] += acc;
        }

        if !compute_d_in {
            return None;
        }

        // dcol = W^T * d_out, blocked over four output channels
        let wmat = self.weight.value.data();
        let mut dcol = vec![T::ZERO; k * hw];
        for kk in 0..k {
            let crow = &mut dcol[kk * hw..(kk + 1) * hw];
            let mut o = 0;
            while o + 4 <= self.out_ch {
                let w0 = wmat[o * k + kk];
                let w1 = wmat[(o + 1) * k + kk];
                let w2 = wmat[(o + 2) * k + kk];
                let w3 = wmat[(o + 3) * k + kk];
                let (d0, rest) = dout[o * hw..].split_at(hw);
                let (d1, rest) = rest.split_at(hw);
                let (d2, rest) = rest.split_at(hw);
                let d3 = &rest[..hw];
                for (i, cv) in crow.iter_mut().enumerate() {
                    *cv += w0 * d0[i] + w1 * d1[i] + w2 * d2[i] + w3 * d3[i];
                }
                o += 4;
            }
            while o < self.out_ch {
                let wv = wmat[o * k + kk];
                let drow = &dout[o * hw..(o + 1) * hw];
                for (cv, dv) in crow.iter_mut().zip(drow) {
                    *cv += wv * *dv;
                }
                o += 1;
            }
        }

        // col2im: scatter-add back through the same padding geometry
        let (pt, pl) = self.pads();
        let mut d_in = Tensor::zeros(&[self.in_ch, h, w]);
        let din = d_in.data_mut();
        for c in 0..self.in_ch {
            let chan = &mut din[c * hw..(c + 1) * hw];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = &dcol[((c * self.kh + i) * self.kw + j) * hw..][..hw];
                    let xlo = pl.saturating_sub(j);
                    let xhi = (w + pl).saturating_sub(j).min(w);
                    if xlo >= xhi {
                        continue;
                    }
                    for y in 0..h {
                        let yy = y + i;
                        if yy < pt || yy - pt >= h {
                            continue;
                        }
                        let src = &row[y * w + xlo..y * w + xhi];
                        let dst = &mut chan
                            [(yy - pt) * w + xlo + j - pl..(yy - pt) * w + xhi + j - pl];
                        for (dv, sv) in dst.iter_mut().zip(src) {
                            *dv += *sv;
                        }
                    }
                }
            }
        }
        Some(d_in)
    }
}

/// Non-overlapping max pooling. Gradient routes to the first (row-major)
/// argmax cell of each window.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub ph: usize,
    pub pw: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PoolCache {
    argmax: Vec<u32>,
    in_dims: [usize; 3],
}

impl MaxPool2d {
    pub fn out_dims(&self, c: usize, h: usize, w: usize) -> (usize, usize, usize) {
        assert!(
            h % self.ph == 0 && w % self.pw == 0,
            "pool {}x{} does not divide {h}x{w}",
            self.ph,
            self.pw
        );
        (c, h / self.ph, w / self.pw)
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>, cache: &mut PoolCache) -> Tensor<T> {
        let dims = x.dims();
        assert_eq!(dims.len(), 3);
        let (c, h, w) = (dims[0], dims[1], dims[2]);
        let (_, oh, ow) = self.out_dims(c, h, w);
        cache.in_dims = [c, h, w];
        cache.argmax.clear();
        cache.argmax.reserve(c * oh * ow);
        let input = x.data();
        let mut out = Tensor::zeros(&[c, oh, ow]);
        let odata = out.data_mut();
        for ch in 0..c {
            let chan = &input[ch * h * w..(ch + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = chan[oy * self.ph * w + ox * self.pw];
                    let mut best_at = (oy * self.ph) * w + ox * self.pw;
                    for iy in 0..self.ph {
                        for ix in 0..self.pw {
                            let at = (oy * self.ph + iy) * w + ox * self.pw + ix;
                            // strict > keeps the first row-major maximum
                            if chan[at] > best {
                                best = chan[at];
                                best_at = at;
                            }
                        }
                    }
                    odata[ch * oh * ow + oy * ow + ox] = best;
                    cache.argmax.push((ch * h * w + best_at) as u32);
                }
            }
        }
        out
    }

    pub fn backward<T: Scalar>(&self, d_out: &Tensor<T>, cache: &PoolCache) -> Tensor<T> {
        let [c, h, w] = cache.in_dims;
        let mut d_in = Tensor::zeros(&[c, h, w]);
        let din = d_in.data_mut();
        for (slot, dv) in cache.argmax.iter().zip(d_out.data()) {
            din[*slot as usize] += *dv;
        }
        d_in
    }
}

/// Fully connected layer: `y = W x + b` with `W: out x in`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, Default)]
pub struct DenseCache<T> {
    input: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::new(he_uniform(&[out_dim, in_dim], in_dim, rng)),
            bias: Param::new(Tensor::zeros(&[out_dim])),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &[T], cache: &mut DenseCache<T>) -> Vec<T> {
        assert_eq!(x.len(), self.in_dim, "dense input size mismatch");
        cache.input.clear();
        cache.input.extend_from_slice(x);
        let wmat = self.weight.value.data();
        let bias = self.bias.value.data();
        (0..self.out_dim)
            .map(|o| {
                let row = &wmat[o * self.in_dim..(o + 1) * self.in_dim];
                bias[o] + dot(row, x)
            })
            .collect()
    }

    pub fn backward(&mut self, d_out: &[T], cache: &DenseCache<T>) -> Vec<T> {
        assert_eq!(d_out.len(), self.out_dim);
        let x = &cache.input;
        let dw = self.weight.grad.data_mut();
        for (o, dv) in d_out.iter().enumerate() {
            let row = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
            for (rw, xv) in row.iter_mut().zip(x) {
                *rw += *dv * *xv;
            }
        }
        let db = self.bias.grad.data_mut();
        for (bv, dv) in db.iter_mut().zip(d_out) {
            *bv += *dv;
        }
        let wmat = self.weight.value.data();
        let mut d_in = vec![T::ZERO; self.in_dim];
        for (o, dv) in d_out.iter().enumerate() {
            let row = &wmat[o * self.in_dim..(o + 1) * self.in_dim];
            for (di, wv) in d_in.iter_mut().zip(row) {
                *di += *dv * *wv;
            }
        }
        d_in
    }
}

/// Elementwise `max(0, x)`; the subgradient at exactly 0 is 0.
pub fn relu_forward<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

/// `d_x = d_y * [y > 0]`, using the forward output as the mask source.
pub fn relu_backward<T: Scalar>(d_y: &mut [T], y: &[T]) {
    for (dv, yv) in d_y.iter_mut().zip(y) {
        if !(*yv > T::ZERO) {
            *dv = T::ZERO;
        }
    }
}

/// Inverted dropout: zero with probability `p` in training, survivors
/// scaled by `1/(1-p)`; identity at inference.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub p: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DropoutCache {
    /// indices that were zeroed (empty in eval mode)
    zeroed: Vec<u32>,
    active: bool,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0, 1)");
        Self { p }
    }

    pub fn forward<T: Scalar>(
        &self,
        x: &mut [T],
        mode: Mode,
        rng: &mut ChaCha8Rng,
        cache: &mut DropoutCache,
    ) {
        cache.zeroed.clear();
        cache.active = mode == Mode::Train && self.p > 0.0;
        if !cache.active {
            return;
        }
        let scale = T::from_f64(1.0 / (1.0 - self.p));
        for (i, v) in x.iter_mut().enumerate() {
            if rng.random::<f64>() < self.p {
                *v = T::ZERO;
                cache.zeroed.push(i as u32);
            } else {
                *v *= scale;
            }
        }
    }

    pub fn backward<T: Scalar>(&self, d_y: &mut [T], cache: &DropoutCache) {
        if !cache.active {
            return;
        }
        let scale = T::from_f64(1.0 / (1.0 - self.p));
        for v in d_y.iter_mut() {
            *v *= scale;
        }
        for &i in &cache.zeroed {
            d_y[i as usize] = T::ZERO;
        }
    }
}
