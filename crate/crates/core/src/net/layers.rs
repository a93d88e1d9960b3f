//! Dense (1x1 convolution) and strided 3x3 convolution layers with explicit
//! backward passes. Feature maps are token-major: `data[token * channels + c]`.

use rand_chacha::ChaCha8Rng;

use super::params::{Init, ParamStore};

/// Per-token affine map, i.e. a 1x1 convolution. Weights are stored
/// input-major: `w[i * d_out + o]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self::with_bias(store, name, d_in, d_out, 0.0, rng)
    }

    pub fn with_bias(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.alloc(
            &format!("{name}.weight"),
            &[d_in, d_out],
            Init::Glorot {
                fan_in: d_in,
                fan_out: d_out,
            },
            rng,
        );
        let b = store.alloc(&format!("{name}.bias"), &[d_out], Init::Const(bias), rng);
        Self { w, b, d_in, d_out }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len() / self.d_in;
        debug_assert_eq!(n * self.d_in, x.len());
        let w = &p[self.w..self.w + self.d_in * self.d_out];
        let b = &p[self.b..self.b + self.d_out];
        let mut y = Vec::with_capacity(n * self.d_out);
        for t in 0..n {
            y.extend_from_slice(b);
            let row = &mut y[t * self.d_out..];
            for (i, &xi) in x[t * self.d_in..(t + 1) * self.d_in].iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (yo, &wo) in row.iter_mut().zip(&w[i * self.d_out..(i + 1) * self.d_out]) {
                    *yo += xi * wo;
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `g` and returns dL/dx.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], dy: &[f64]) -> Vec<f64> {
        let n = x.len() / self.d_in;
        let (d_in, d_out) = (self.d_in, self.d_out);
        let mut dx = vec![0.0; n * d_in];
        for t in 0..n {
            let dyt = &dy[t * d_out..(t + 1) * d_out];
            for (gb, &d) in g[self.b..self.b + d_out].iter_mut().zip(dyt) {
                *gb += d;
            }
            let xt = &x[t * d_in..(t + 1) * d_in];
            for i in 0..d_in {
                let wrow = &p[self.w + i * d_out..self.w + (i + 1) * d_out];
                let mut acc = 0.0;
                for (wo, &d) in wrow.iter().zip(dyt) {
                    acc += wo * d;
                }
                dx[t * d_in + i] = acc;
                let xi = xt[i];
                if xi != 0.0 {
                    let grow = &mut g[self.w + i * d_out..self.w + (i + 1) * d_out];
                    for (go, &d) in grow.iter_mut().zip(dyt) {
                        *go += xi * d;
                    }
                }
            }
        }
        dx
    }
}

/// 3x3 convolution, stride 2, zero padding 1. Weights stored as
/// `w[((ky * 3 + kx) * c_in + ci) * c_out + co]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conv3x3s2 {
    pub w: usize,
    pub b: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv3x3s2 {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.alloc(
            &format!("{name}.weight"),
            &[3, 3, c_in, c_out],
            Init::Glorot {
                fan_in: 9 * c_in,
                fan_out: 9 * c_out,
            },
            rng,
        );
        let b = store.alloc(&format!("{name}.bias"), &[c_out], Init::Const(0.0), rng);
        Self { w, b, c_in, c_out }
    }

    pub fn out_size(width: usize, height: usize) -> (usize, usize) {
        (width.div_ceil(2), height.div_ceil(2))
    }

    /// Input is `width x height x c_in` (row-major tokens).
    pub fn forward(&self, p: &[f64], x: &[f64], width: usize, height: usize) -> Vec<f64> {
        let (ow, oh) = Self::out_size(width, height);
        let (ci_n, co_n) = (self.c_in, self.c_out);
        let b = &p[self.b..self.b + co_n];
        let mut y = Vec::with_capacity(ow * oh * co_n);
        for oy in 0..oh {
            for ox in 0..ow {
                let start = y.len();
                y.extend_from_slice(b);
                let out = &mut y[start..];
                for ky in 0..3 {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (2 * ox + kx) as isize - 1;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        let xin = &x[(iy as usize * width + ix as usize) * ci_n..][..ci_n];
                        let wk = self.w + (ky * 3 + kx) * ci_n * co_n;
                        for (ci, &xv) in xin.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let wrow = &p[wk + ci * co_n..wk + (ci + 1) * co_n];
                            for (o, &wv) in out.iter_mut().zip(wrow) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `g` and returns dL/dx (empty
    /// when `need_dx` is false).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        x: &[f64],
        width: usize,
        height: usize,
        dy: &[f64],
        need_dx: bool,
    ) -> Vec<f64> {
        let (ow, oh) = Self::out_size(width, height);
        let (ci_n, co_n) = (self.c_in, self.c_out);
        let mut dx = if need_dx {
            vec![0.0; x.len()]
        } else {
            Vec::new()
        };
        for oy in 0..oh {
            for ox in 0..ow {
                let d = &dy[(oy * ow + ox) * co_n..][..co_n];
                if d.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for (gb, &dv) in g[self.b..self.b + co_n].iter_mut().zip(d) {
                    *gb += dv;
                }
                for ky in 0..3 {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (2 * ox + kx) as isize - 1;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        let base = (iy as usize * width + ix as usize) * ci_n;
                        let wk = self.w + (ky * 3 + kx) * ci_n * co_n;
                        for ci in 0..ci_n {
                            if need_dx {
                                let wrow = &p[wk + ci * co_n..wk + (ci + 1) * co_n];
                                let mut acc = 0.0;
                                for (wv, &dv) in wrow.iter().zip(d) {
                                    acc += wv * dv;
                                }
                                dx[base + ci] += acc;
                            }
                            let xv = x[base + ci];
                            if xv != 0.0 {
                                let grow = &mut g[wk + ci * co_n..wk + (ci + 1) * co_n];
                                for (gv, &dv) in grow.iter_mut().zip(d) {
                                    *gv += xv * dv;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Backward of ReLU given its *output*.
pub fn relu_backward(out: &[f64], dy: &[f64]) -> Vec<f64> {
    out.iter()
        .zip(dy)
        .map(|(&o, &d)| if o > 0.0 { d } else { 0.0 })
        .collect()
}

/// Row-wise softmax over `k` classes.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(k) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &v in row {
            let e = (v - m).exp();
            sum += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= sum;
        }
    }
    out
}

/// dL/dlogits from dL/dprobs, given the softmax output.
pub fn softmax_backward(probs: &[f64], dprobs: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(probs.len());
    for (p, d) in probs.chunks_exact(k).zip(dprobs.chunks_exact(k)) {
        let dot: f64 = p.iter().zip(d).map(|(a, b)| a * b).sum();
        out.extend(p.iter().zip(d).map(|(pi, di)| pi * (di - dot)));
    }
    out
}
