//! The conditioned coarse-to-fine predictor.
//!
//! ```text
//!   image ─ encoder ─ F ─┬─ 1x1+ReLU ─ MHA×L ─────────────── head_r ─ softmax ─ ŷ_r
//!                        ├─ FiLM(·, onehot r) ─ MHA×L ─ 1x1+ReLU ─ head_s ─ softmax ─ ŷ_s
//!                        └─ FiLM(·, onehot r ⊕ onehot s) ─ MHA×L ─ 1x1+ReLU ─ head_3d ─ ŷ_3D
//! ```
//!
//! In training mode the conditioning one-hots come from the ground-truth
//! labels; at inference they are the argmax of the previous level's
//! prediction. Invalid (sentinel) labels give an all-zero conditioning row.
//! With `conditioned = false` the conditioning input is always zero, so the
//! generators collapse to learned constants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::attention::{AttentionCache, AttentionLayer};
use super::film::{FilmCache, FilmGenerator};
use super::layers::{relu, relu_backward, softmax_backward, softmax_rows, Conv3x3s2, Dense};
use super::params::ParamStore;
use crate::geometry::{Vec3, GRID_STRIDE};
use crate::hierarchy::{CoordLabelMaps, LabelHierarchy};
use crate::image::Image;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("image {0}x{1} must have sides divisible by {GRID_STRIDE}")]
    BadShape(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid mode: {0}")]
    InvalidMode(String),
    #[error("backward called without cached activations")]
    MissingCache,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetConfig {
    /// Feature channels.
    pub d: usize,
    /// Number of level-1 regions (k, or scenes x k for combined hierarchies).
    pub regions: usize,
    /// Level-2 branching factor.
    pub k: usize,
    pub heads: usize,
    /// Attention layers per branch.
    pub mha_layers: usize,
    pub enc_channels: [usize; 2],
    pub conditioned: bool,
    pub seed: u64,
}

impl NetConfig {
    pub fn new(d: usize, k: usize, mha_layers: usize, seed: u64) -> Self {
        Self {
            d,
            regions: k,
            k,
            heads: 2,
            mha_layers,
            enc_channels: [8, 16],
            conditioned: true,
            seed,
        }
    }

    pub fn for_hierarchy(d: usize, hier: &LabelHierarchy, mha_layers: usize, seed: u64) -> Self {
        Self {
            regions: hier.num_regions(),
            ..Self::new(d, hier.k, mha_layers, seed)
        }
    }
}

/// `w x h x d` features, token-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub w: usize,
    pub h: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

/// Network outputs on the prediction grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub w: usize,
    pub h: usize,
    pub regions: usize,
    pub k: usize,
    /// `n x regions`
    pub probs_r: Vec<f64>,
    /// `n x k`
    pub probs_s: Vec<f64>,
    pub residual: Vec<Vec3>,
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn region_argmax(&self, i: usize) -> usize {
        argmax(&self.probs_r[i * self.regions..(i + 1) * self.regions])
    }

    pub fn sub_argmax(&self, i: usize) -> usize {
        argmax(&self.probs_s[i * self.k..(i + 1) * self.k])
    }
}

/// Sub-region centre of the argmax labels plus the predicted residual.
pub fn predict_coords(pred: &PredictionSet, hier: &LabelHierarchy) -> Vec<Vec3> {
    (0..pred.len())
        .map(|i| hier.level2_centers[pred.region_argmax(i)][pred.sub_argmax(i)] + pred.residual[i])
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub enum Mode<'a> {
    /// Condition on ground-truth labels.
    Train(&'a CoordLabelMaps),
    /// Condition on argmax predictions.
    Infer,
}

#[derive(Clone, Debug)]
struct BranchCache {
    film: FilmCache,
    attn: Vec<AttentionCache>,
    attn_out: Vec<f64>,
    x: Vec<f64>,
}

/// Everything the backward pass needs.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    width: usize,
    height: usize,
    /// Input of each encoder stage (the image, then post-ReLU maps).
    enc_in: Vec<Vec<f64>>,
    enc_dims: Vec<(usize, usize)>,
    features: Vec<f64>,
    r_in: Vec<f64>,
    r_attn: Vec<AttentionCache>,
    xr: Vec<f64>,
    s: BranchCache,
    t: BranchCache,
    xs_probs: Vec<f64>,
    xr_probs: Vec<f64>,
}

pub struct ForwardOutput {
    pub pred: PredictionSet,
    pub cache: Option<ForwardCache>,
}

/// Upstream gradients with respect to the three outputs.
#[derive(Clone, Debug)]
pub struct OutputGrads {
    pub probs_r: Vec<f64>,
    pub probs_s: Vec<f64>,
    /// `n x 3`
    pub residual: Vec<f64>,
}

impl OutputGrads {
    pub fn zeros(pred: &PredictionSet) -> Self {
        Self {
            probs_r: vec![0.0; pred.probs_r.len()],
            probs_s: vec![0.0; pred.probs_s.len()],
            residual: vec![0.0; pred.len() * 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Branch {
    film: FilmGenerator,
    attn: Vec<AttentionLayer>,
    out: Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedNet {
    pub config: NetConfig,
    pub params: ParamStore,
    enc: Vec<Conv3x3s2>,
    r_in: Dense,
    r_attn: Vec<AttentionLayer>,
    head_r: Dense,
    s: Branch,
    head_s: Dense,
    t: Branch,
    head_t: Dense,
}

fn one_hot_rows(labels: impl Iterator<Item = Option<usize>>, width: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * width];
    for (i, l) in labels.enumerate() {
        if let Some(l) = l {
            out[i * width + l] = 1.0;
        }
    }
    out
}

impl ConditionedNet {
    /// Builds the layer layout and initialises parameters from `config.seed`.
    pub fn new(config: NetConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let d = config.d;
        let [c1, c2] = config.enc_channels;
        let enc = vec![
            Conv3x3s2::new(&mut store, "enc0", 3, c1, &mut rng),
            Conv3x3s2::new(&mut store, "enc1", c1, c2, &mut rng),
            Conv3x3s2::new(&mut store, "enc2", c2, d, &mut rng),
        ];
        let r_in = Dense::new(&mut store, "r.in", d, d, &mut rng);
        let r_attn = (0..config.mha_layers)
            .map(|i| {
                AttentionLayer::new(&mut store, &format!("r.attn{i}"), d, config.heads, &mut rng)
            })
            .collect();
        let head_r = Dense::new(&mut store, "head_r", d, config.regions, &mut rng);
        let mut branch = |name: &str, c_in: usize, store: &mut ParamStore| Branch {
            film: FilmGenerator::new(store, &format!("{name}.film"), c_in, d, &mut rng),
            attn: (0..config.mha_layers)
                .map(|i| {
                    AttentionLayer::new(
                        store,
                        &format!("{name}.attn{i}"),
                        d,
                        config.heads,
                        &mut rng,
                    )
                })
                .collect(),
            out: Dense::new(store, &format!("{name}.out"), d, d, &mut rng),
        };
        let s = branch("s", config.regions, &mut store);
        let t = branch("t", config.regions + config.k, &mut store);
        let head_s = Dense::new(&mut store, "head_s", d, config.k, &mut rng);
        let head_t = Dense::new(&mut store, "head_3d", d, 3, &mut rng);
        Self {
            config,
            params: store,
            enc,
            r_in,
            r_attn,
            head_r,
            s,
            head_s,
            t,
            head_t,
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Encoder receptive field half-width in input pixels around `8u`.
    pub fn receptive_radius() -> usize {
        // 1 + 2 * (1 + 2 * 1) + ... for three 3x3 stride-2 stages.
        7
    }

    #[allow(clippy::type_complexity)]
    fn encode_with_cache(
        &self,
        image: &Image,
    ) -> Result<(Vec<Vec<f64>>, Vec<(usize, usize)>, Vec<f64>), NetError> {
        let (w, h) = (image.width, image.height);
        if w == 0 || h == 0 || w % GRID_STRIDE != 0 || h % GRID_STRIDE != 0 {
            return Err(NetError::BadShape(w, h));
        }
        let p = &self.params.data;
        let mut inputs = Vec::with_capacity(3);
        let mut dims = Vec::with_capacity(3);
        let mut x = image.data.clone();
        let (mut cw, mut ch) = (w, h);
        for conv in &self.enc {
            let y = relu(&conv.forward(p, &x, cw, ch));
            inputs.push(x);
            dims.push((cw, ch));
            x = y;
            (cw, ch) = Conv3x3s2::out_size(cw, ch);
        }
        Ok((inputs, dims, x))
    }

    /// Dense feature map at 1/8 resolution.
    pub fn encode_features(&self, image: &Image) -> Result<FeatureMap, NetError> {
        let (_, _, data) = self.encode_with_cache(image)?;
        Ok(FeatureMap {
            w: image.width / GRID_STRIDE,
            h: image.height / GRID_STRIDE,
            d: self.config.d,
            data,
        })
    }

    fn run_branch(
        &self,
        b: &Branch,
        features: &[f64],
        cond: &[f64],
    ) -> Result<BranchCache, NetError> {
        let p = &self.params.data;
        let (film_out, film) = b
            .film
            .forward(p, features, cond)
            .map_err(|e| NetError::ShapeMismatch(e.to_string()))?;
        let mut x = film_out;
        let mut attn = Vec::with_capacity(b.attn.len());
        for layer in &b.attn {
            let (y, c) = layer.forward(p, &x);
            attn.push(c);
            x = y;
        }
        let out = relu(&b.out.forward(p, &x));
        Ok(BranchCache {
            film,
            attn,
            attn_out: x,
            x: out,
        })
    }

    fn backward_branch(
        &self,
        b: &Branch,
        c: &BranchCache,
        features: &[f64],
        dx: &[f64],
        g: &mut [f64],
    ) -> Vec<f64> {
        let p = &self.params.data;
        let dpre = relu_backward(&c.x, dx);
        let mut d = b.out.backward(p, g, &c.attn_out, &dpre);
        for (layer, cache) in b.attn.iter().zip(&c.attn).rev() {
            d = layer.backward(p, g, cache, &d);
        }
        b.film.backward(p, g, features, &c.film, &d)
    }

    fn check_labels(&self, gt: &CoordLabelMaps, n: usize) -> Result<(), NetError> {
        if gt.len() != n || gt.region.len() != n || gt.sub.len() != n || gt.mask.len() != n {
            return Err(NetError::InvalidMode(format!(
                "ground-truth maps have {} cells, prediction grid has {n}",
                gt.len()
            )));
        }
        for i in 0..n {
            if gt.mask[i] && (gt.region[i] >= self.config.regions || gt.sub[i] >= self.config.k) {
                return Err(NetError::InvalidMode(format!(
                    "label ({}, {}) at cell {i} out of range",
                    gt.region[i], gt.sub[i]
                )));
            }
        }
        Ok(())
    }

    /// Runs the network. With `keep_cache` the activations needed by
    /// [`ConditionedNet::backward`] are retained.
    pub fn forward(
        &self,
        image: &Image,
        mode: Mode<'_>,
        keep_cache: bool,
    ) -> Result<ForwardOutput, NetError> {
        let cfg = &self.config;
        let p = &self.params.data;
        let (enc_in, enc_dims, features) = self.encode_with_cache(image)?;
        let (w, h) = (image.width / GRID_STRIDE, image.height / GRID_STRIDE);
        let n = w * h;
        if let Mode::Train(gt) = mode {
            self.check_labels(gt, n)?;
        }

        let r_in = relu(&self.r_in.forward(p, &features));
        let mut xr = r_in.clone();
        let mut r_attn = Vec::with_capacity(self.r_attn.len());
        for layer in &self.r_attn {
            let (y, c) = layer.forward(p, &xr);
            r_attn.push(c);
            xr = y;
        }
        let probs_r = softmax_rows(&self.head_r.forward(p, &xr), cfg.regions);

        let region_labels: Vec<Option<usize>> = match mode {
            Mode::Train(gt) => (0..n).map(|i| gt.mask[i].then_some(gt.region[i])).collect(),
            Mode::Infer => (0..n)
                .map(|i| Some(argmax(&probs_r[i * cfg.regions..(i + 1) * cfg.regions])))
                .collect(),
        };
        let s_cond = if cfg.conditioned {
            one_hot_rows(region_labels.iter().copied(), cfg.regions, n)
        } else {
            vec![0.0; n * cfg.regions]
        };
        let s = self.run_branch(&self.s, &features, &s_cond)?;
        let probs_s = softmax_rows(&self.head_s.forward(p, &s.x), cfg.k);

        let sub_labels: Vec<Option<usize>> = match mode {
            Mode::Train(gt) => (0..n).map(|i| gt.mask[i].then_some(gt.sub[i])).collect(),
            Mode::Infer => (0..n)
                .map(|i| Some(argmax(&probs_s[i * cfg.k..(i + 1) * cfg.k])))
                .collect(),
        };
        let t_cond = if cfg.conditioned {
            let width = cfg.regions + cfg.k;
            let mut c = vec![0.0; n * width];
            for i in 0..n {
                if let Some(r) = region_labels[i] {
                    c[i * width + r] = 1.0;
                }
                if let Some(s) = sub_labels[i] {
                    c[i * width + cfg.regions + s] = 1.0;
                }
            }
            c
        } else {
            vec![0.0; n * (cfg.regions + cfg.k)]
        };
        let t = self.run_branch(&self.t, &features, &t_cond)?;
        let res = self.head_t.forward(p, &t.x);
        let residual = res
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect();

        let pred = PredictionSet {
            w,
            h,
            regions: cfg.regions,
            k: cfg.k,
            probs_r: probs_r.clone(),
            probs_s: probs_s.clone(),
            residual,
        };
        let cache = keep_cache.then_some(ForwardCache {
            width: image.width,
            height: image.height,
            enc_in,
            enc_dims,
            features,
            r_in,
            r_attn,
            xr,
            s,
            t,
            xs_probs: probs_s,
            xr_probs: probs_r,
        });
        Ok(ForwardOutput { pred, cache })
    }

    /// Parameter gradients for the given output gradients. Conditioning
    /// inputs are treated as constants.
    pub fn backward(&self, out: &ForwardOutput, grads: &OutputGrads) -> Result<Vec<f64>, NetError> {
        let c = out.cache.as_ref().ok_or(NetError::MissingCache)?;
        let cfg = &self.config;
        let p = &self.params.data;
        let n = out.pred.len();
        if grads.probs_r.len() != n * cfg.regions
            || grads.probs_s.len() != n * cfg.k
            || grads.residual.len() != n * 3
        {
            return Err(NetError::ShapeMismatch(
                "output gradient sizes do not match the prediction".into(),
            ));
        }
        let mut g = self.params.zeros_like();

        // Residual branch.
        let dxt = self.head_t.backward(p, &mut g, &c.t.x, &grads.residual);
        let mut dfeat = self.backward_branch(&self.t, &c.t, &c.features, &dxt, &mut g);

        // Sub-region branch.
        let dls = softmax_backward(&c.xs_probs, &grads.probs_s, cfg.k);
        let dxs = self.head_s.backward(p, &mut g, &c.s.x, &dls);
        let df = self.backward_branch(&self.s, &c.s, &c.features, &dxs, &mut g);
        dfeat.iter_mut().zip(&df).for_each(|(a, b)| *a += b);

        // Region branch.
        let dlr = softmax_backward(&c.xr_probs, &grads.probs_r, cfg.regions);
        let mut d = self.head_r.backward(p, &mut g, &c.xr, &dlr);
        for (layer, cache) in self.r_attn.iter().zip(&c.r_attn).rev() {
            d = layer.backward(p, &mut g, cache, &d);
        }
        let dpre = relu_backward(&c.r_in, &d);
        let df = self.r_in.backward(p, &mut g, &c.features, &dpre);
        dfeat.iter_mut().zip(&df).for_each(|(a, b)| *a += b);

        // Encoder.
        let mut dy = dfeat;
        let mut out_act = &c.features;
        for (i, conv) in self.enc.iter().enumerate().rev() {
            let dpre = relu_backward(out_act, &dy);
            let (cw, ch) = c.enc_dims[i];
            dy = conv.backward(p, &mut g, &c.enc_in[i], cw, ch, &dpre, i > 0);
            if i > 0 {
                out_act = &c.enc_in[i];
            }
        }
        debug_assert_eq!(c.width / GRID_STRIDE * (c.height / GRID_STRIDE), n);
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image {
            width: w,
            height: h,
            data: (0..w * h * 3).map(|_| rng.random()).collect(),
        }
    }

    fn random_labels(w: usize, h: usize, regions: usize, k: usize, seed: u64) -> CoordLabelMaps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = w * h;
        let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        CoordLabelMaps {
            w,
            h,
            region: mask
                .iter()
                .map(|&m| {
                    if m {
                        rng.random_range(0..regions)
                    } else {
                        regions
                    }
                })
                .collect(),
            sub: mask
                .iter()
                .map(|&m| if m { rng.random_range(0..k) } else { k })
                .collect(),
            residual: (0..n).map(|_| Vec3::zeros()).collect(),
            mask,
        }
    }

    #[test]
    fn output_shapes_and_distributions() {
        let net = ConditionedNet::new(NetConfig::new(16, 4, 2, 3));
        let img = random_image(32, 24, 1);
        let f = net.encode_features(&img).unwrap();
        assert_eq!((f.w, f.h, f.d), (4, 3, 16));
        assert_eq!(f.data.len(), 4 * 3 * 16);
        let out = net.forward(&img, Mode::Infer, false).unwrap();
        for row in out.pred.probs_r.chunks(4).chain(out.pred.probs_s.chunks(4)) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        assert!(matches!(
            net.forward(&random_image(30, 24, 1), Mode::Infer, false),
            Err(NetError::BadShape(..))
        ));
    }

    #[test]
    fn zero_image_interior_is_translation_invariant() {
        let mut net = ConditionedNet::new(NetConfig::new(8, 4, 1, 5));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for name in ["enc0.bias", "enc1.bias", "enc2.bias"] {
            net.params
                .tensor_mut(name)
                .unwrap()
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let img = Image::filled(48, 40, 0.0);
        let f = net.encode_features(&img).unwrap();
        let cell = |u: usize, v: usize| &f.data[(v * f.w + u) * f.d..(v * f.w + u + 1) * f.d];
        // Cells in the first row/column see the zero padding.
        for v in 1..f.h {
            for u in 1..f.w {
                assert_eq!(cell(u, v), cell(1, 1));
            }
        }
    }

    #[test]
    fn receptive_field_is_bounded() {
        let net = ConditionedNet::new(NetConfig::new(8, 4, 1, 6));
        let img = random_image(64, 64, 2);
        let base = net.encode_features(&img).unwrap();
        let r = ConditionedNet::receptive_radius() as isize;
        for (px, py) in [(30usize, 33usize), (0, 0), (63, 17)] {
            let mut pert = img.clone();
            pert.data[(py * 64 + px) * 3] += 0.5;
            let f = net.encode_features(&pert).unwrap();
            for v in 0..8 {
                for u in 0..8 {
                    let inside = (8 * u as isize - px as isize).abs() <= r
                        && (8 * v as isize - py as isize).abs() <= r;
                    let changed = (0..8)
                        .any(|c| f.data[(v * 8 + u) * 8 + c] != base.data[(v * 8 + u) * 8 + c]);
                    if !inside {
                        assert!(!changed, "cell ({u},{v}) changed by pixel ({px},{py})");
                    }
                }
            }
        }
    }

    #[test]
    fn train_and_infer_agree_when_predictions_match() {
        let net = ConditionedNet::new(NetConfig::new(8, 3, 1, 9));
        let img = random_image(32, 32, 4);
        let inf = net.forward(&img, Mode::Infer, false).unwrap().pred;
        let n = inf.len();
        let gt = CoordLabelMaps {
            w: 4,
            h: 4,
            region: (0..n).map(|i| inf.region_argmax(i)).collect(),
            sub: (0..n).map(|i| inf.sub_argmax(i)).collect(),
            residual: vec![Vec3::zeros(); n],
            mask: vec![true; n],
        };
        let tr = net.forward(&img, Mode::Train(&gt), false).unwrap().pred;
        assert_eq!(tr, inf);
    }

    #[test]
    fn bad_train_labels_rejected() {
        let net = ConditionedNet::new(NetConfig::new(8, 3, 1, 9));
        let img = random_image(32, 32, 4);
        let gt = random_labels(4, 3, 3, 3, 1);
        assert!(matches!(
            net.forward(&img, Mode::Train(&gt), false),
            Err(NetError::InvalidMode(_))
        ));
    }

    #[test]
    fn backward_requires_cache_and_zero_grad_gives_zero() {
        let net = ConditionedNet::new(NetConfig::new(8, 3, 1, 2));
        let img = random_image(16, 16, 4);
        let out = net.forward(&img, Mode::Infer, false).unwrap();
        let zeros = OutputGrads::zeros(&out.pred);
        assert!(matches!(
            net.backward(&out, &zeros),
            Err(NetError::MissingCache)
        ));
        let out = net.forward(&img, Mode::Infer, true).unwrap();
        let g = net.backward(&out, &zeros).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predict_coords_matches_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let hier = LabelHierarchy::build(&pts, 3, 0).unwrap();
        let n = 12;
        let mut pred = PredictionSet {
            w: 4,
            h: 3,
            regions: 3,
            k: 3,
            probs_r: (0..n * 3).map(|_| rng.random()).collect(),
            probs_s: (0..n * 3).map(|_| rng.random()).collect(),
            residual: (0..n)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        };
        let coords = predict_coords(&pred, &hier);
        for i in 0..n {
            let (mut r, mut s) = (0, 0);
            for c in 1..3 {
                if pred.probs_r[i * 3 + c] > pred.probs_r[i * 3 + r] {
                    r = c;
                }
                if pred.probs_s[i * 3 + c] > pred.probs_s[i * 3 + s] {
                    s = c;
                }
            }
            assert_eq!(coords[i], hier.decode(r, s, &pred.residual[i]).unwrap());
        }
        // One-hot with zero residual lands on the centre exactly.
        pred.probs_r = (0..n * 3).map(|j| (j % 3 == 1) as u8 as f64).collect();
        pred.probs_s = (0..n * 3).map(|j| (j % 3 == 2) as u8 as f64).collect();
        pred.residual = vec![Vec3::zeros(); n];
        assert!(predict_coords(&pred, &hier)
            .iter()
            .all(|c| *c == hier.level2_centers[1][2]));
    }
}
