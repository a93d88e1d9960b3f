//! Linear-attention transformer layer (multi-head, kernel feature map
//! `elu(u) + 1`, no positional encoding).
//!
//! For each head the output at token i is
//!
//! ```text
//!   φ(q_i)ᵀ (Σ_j φ(k_j) v_jᵀ) / max(φ(q_i) · Σ_j φ(k_j), 1e-6)
//! ```
//!
//! which costs O(n·d²) instead of the O(n²·d) of the explicit form. The
//! attention block is followed by a residual connection and a two-layer
//! ReLU feed-forward block with its own residual.

use rand_chacha::ChaCha8Rng;

use super::layers::{relu, relu_backward, Dense};
use super::params::ParamStore;

pub const DENOM_EPS: f64 = 1e-6;
const FFN_MULT: usize = 2;

/// Kernel feature map elu(u) + 1.
#[inline]
pub fn elu1(u: f64) -> f64 {
    if u > 0.0 {
        u + 1.0
    } else {
        u.exp()
    }
}

#[inline]
pub fn elu1_grad(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        u.exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayer {
    pub d: usize,
    pub heads: usize,
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub o: Dense,
    pub ff1: Dense,
    pub ff2: Dense,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    phi_q: Vec<f64>,
    phi_k: Vec<f64>,
    /// Per head, dh x dh, row index over key features.
    kv: Vec<f64>,
    ksum: Vec<f64>,
    /// Per token and head, before clamping.
    den: Vec<f64>,
    att: Vec<f64>,
    y: Vec<f64>,
    hidden: Vec<f64>,
}

/// Multi-head linear attention core. Inputs are `n x d` token-major, already
/// passed through the feature map. Returns (output, kv, ksum, den).
pub fn linear_attention_core(
    phi_q: &[f64],
    phi_k: &[f64],
    v: &[f64],
    d: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = phi_q.len() / d;
    let dh = d / heads;
    let mut kv = vec![0.0; heads * dh * dh];
    let mut ksum = vec![0.0; heads * dh];
    for j in 0..n {
        for h in 0..heads {
            let kj = &phi_k[j * d + h * dh..j * d + (h + 1) * dh];
            let vj = &v[j * d + h * dh..j * d + (h + 1) * dh];
            let s = &mut kv[h * dh * dh..(h + 1) * dh * dh];
            for r in 0..dh {
                ksum[h * dh + r] += kj[r];
                for c in 0..dh {
                    s[r * dh + c] += kj[r] * vj[c];
                }
            }
        }
    }
    let mut out = vec![0.0; n * d];
    let mut den = vec![0.0; n * heads];
    for i in 0..n {
        for h in 0..heads {
            let qi = &phi_q[i * d + h * dh..i * d + (h + 1) * dh];
            let s = &kv[h * dh * dh..(h + 1) * dh * dh];
            let dn: f64 = qi
                .iter()
                .zip(&ksum[h * dh..(h + 1) * dh])
                .map(|(a, b)| a * b)
                .sum();
            den[i * heads + h] = dn;
            let dc = dn.max(DENOM_EPS);
            let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
            for r in 0..dh {
                for c in 0..dh {
                    o[c] += qi[r] * s[r * dh + c];
                }
            }
            for x in o.iter_mut() {
                *x /= dc;
            }
        }
    }
    (out, kv, ksum, den)
}

impl AttentionLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(
            heads > 0 && d.is_multiple_of(heads),
            "d = {d} must be divisible by heads = {heads}"
        );
        Self {
            d,
            heads,
            q: Dense::new(store, &format!("{name}.q"), d, d, rng),
            k: Dense::new(store, &format!("{name}.k"), d, d, rng),
            v: Dense::new(store, &format!("{name}.v"), d, d, rng),
            o: Dense::new(store, &format!("{name}.o"), d, d, rng),
            ff1: Dense::new(store, &format!("{name}.ff1"), d, FFN_MULT * d, rng),
            ff2: Dense::new(store, &format!("{name}.ff2"), FFN_MULT * d, d, rng),
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> (Vec<f64>, AttentionCache) {
        let q = self.q.forward(p, x);
        let k = self.k.forward(p, x);
        let v = self.v.forward(p, x);
        let phi_q: Vec<f64> = q.iter().map(|&u| elu1(u)).collect();
        let phi_k: Vec<f64> = k.iter().map(|&u| elu1(u)).collect();
        let (att, kv, ksum, den) = linear_attention_core(&phi_q, &phi_k, &v, self.d, self.heads);
        let m = self.o.forward(p, &att);
        let y: Vec<f64> = x.iter().zip(&m).map(|(a, b)| a + b).collect();
        let hidden = relu(&self.ff1.forward(p, &y));
        let f = self.ff2.forward(p, &hidden);
        let out = y.iter().zip(&f).map(|(a, b)| a + b).collect();
        let cache = AttentionCache {
            x: x.to_vec(),
            q,
            k,
            v,
            phi_q,
            phi_k,
            kv,
            ksum,
            den,
            att,
            y,
            hidden,
        };
        (out, cache)
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], c: &AttentionCache, dout: &[f64]) -> Vec<f64> {
        let (d, heads) = (self.d, self.heads);
        let dh = d / heads;
        let n = c.x.len() / d;

        let dhidden = self.ff2.backward(p, g, &c.hidden, dout);
        let dpre = relu_backward(&c.hidden, &dhidden);
        let dy_ff = self.ff1.backward(p, g, &c.y, &dpre);
        let dy: Vec<f64> = dout.iter().zip(&dy_ff).map(|(a, b)| a + b).collect();
        let datt = self.o.backward(p, g, &c.att, &dy);

        let mut dphi_q = vec![0.0; n * d];
        let mut dphi_k = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let mut ds = vec![0.0; dh * dh];
        let mut dz = vec![0.0; dh];
        let mut dnum = vec![0.0; dh];
        for h in 0..heads {
            ds.iter_mut().for_each(|v| *v = 0.0);
            dz.iter_mut().for_each(|v| *v = 0.0);
            let s = &c.kv[h * dh * dh..(h + 1) * dh * dh];
            let z = &c.ksum[h * dh..(h + 1) * dh];
            for i in 0..n {
                let gi = &datt[i * d + h * dh..i * d + (h + 1) * dh];
                let oi = &c.att[i * d + h * dh..i * d + (h + 1) * dh];
                let a = &c.phi_q[i * d + h * dh..i * d + (h + 1) * dh];
                let den = c.den[i * heads + h];
                let (dc, dden) = if den > DENOM_EPS {
                    let go: f64 = gi.iter().zip(oi).map(|(x, y)| x * y).sum();
                    (den, -go / den)
                } else {
                    (DENOM_EPS, 0.0)
                };
                for (dn, &gv) in dnum.iter_mut().zip(gi) {
                    *dn = gv / dc;
                }
                let da = &mut dphi_q[i * d + h * dh..i * d + (h + 1) * dh];
                for r in 0..dh {
                    let mut acc = z[r] * dden;
                    for cc in 0..dh {
                        acc += s[r * dh + cc] * dnum[cc];
                        ds[r * dh + cc] += a[r] * dnum[cc];
                    }
                    da[r] = acc;
                    dz[r] += a[r] * dden;
                }
            }
            for j in 0..n {
                let kj = &c.phi_k[j * d + h * dh..j * d + (h + 1) * dh];
                let vj = &c.v[j * d + h * dh..j * d + (h + 1) * dh];
                for r in 0..dh {
                    let mut acc = dz[r];
                    for cc in 0..dh {
                        acc += ds[r * dh + cc] * vj[cc];
                        dv[j * d + h * dh + cc] += ds[r * dh + cc] * kj[r];
                    }
                    dphi_k[j * d + h * dh + r] = acc;
                }
            }
        }
        let dq: Vec<f64> = dphi_q
            .iter()
            .zip(&c.q)
            .map(|(g, &u)| g * elu1_grad(u))
            .collect();
        let dk: Vec<f64> = dphi_k
            .iter()
            .zip(&c.k)
            .map(|(g, &u)| g * elu1_grad(u))
            .collect();

        let mut dx = dy;
        for part in [
            self.q.backward(p, g, &c.x, &dq),
            self.k.backward(p, g, &c.x, &dk),
            self.v.backward(p, g, &c.x, &dv),
        ] {
            for (a, b) in dx.iter_mut().zip(&part) {
                *a += b;
            }
        }
        dx
    }
}
