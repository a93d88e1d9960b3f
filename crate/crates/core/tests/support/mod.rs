//! Central finite differences through the whole network and both training
//! objectives, on an 8x8 prediction grid.

#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scloc_core::geometry::{CameraIntrinsics, PixelGrid, ScenePose, Vec3};
use scloc_core::hierarchy::{label_maps_from_coords, CoordLabelMaps, LabelHierarchy};
use scloc_core::image::Image;
use scloc_core::losses::{
    ce_loss, reprojection_loss, residual_loss, sce_loss, total_dense, total_sparse, DenseParts,
    LossWeights, SparseParts,
};
use scloc_core::net::{ConditionedNet, Mode, NetConfig, OutputGrads};

/// The first step is the nominal one. A ReLU whose pre-activation lies
/// within a step of zero makes the difference quotient straddle a kink, so
/// smaller steps are tried before declaring a mismatch.
pub const STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
pub const FLOOR: f64 = 1e-6;

pub struct Setup {
    net: ConditionedNet,
    hier: LabelHierarchy,
    image: Image,
    maps: CoordLabelMaps,
    pixels: Vec<(f64, f64)>,
    pose: ScenePose,
    intr: CameraIntrinsics,
}

pub fn setup(seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = PixelGrid::new(64, 64).unwrap();
    let intr = CameraIntrinsics::centered(&grid, 0.8).unwrap();
    let pose = ScenePose::identity();
    let points: Vec<Vec3> = (0..400)
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(2.0..4.0),
            )
        })
        .collect();
    let hier = LabelHierarchy::build(&points, 4, seed).unwrap();
    let n = grid.cells();
    let coords: Vec<Vec3> = (0..n).map(|i| points[i * 3 % points.len()]).collect();
    let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
    let maps = label_maps_from_coords(grid.w(), grid.h(), &coords, &mask, &hier).unwrap();
    let image = Image {
        width: 64,
        height: 64,
        data: (0..64 * 64 * 3).map(|_| rng.random()).collect(),
    };
    let mut cfg = NetConfig::for_hierarchy(8, &hier, 2, seed);
    cfg.enc_channels = [4, 8];
    let mut net = ConditionedNet::new(cfg);
    // Zero biases put masked cells exactly on a ReLU kink.
    for v in net.params.data.iter_mut() {
        *v += rng.random_range(-0.05..0.05);
    }
    let pixels = (0..n)
        .map(|c| grid.cell_center(c % grid.w(), c / grid.w()))
        .collect();
    Setup {
        net,
        hier,
        image,
        maps,
        pixels,
        pose,
        intr,
    }
}

pub fn dense_loss(
    s: &Setup,
    net: &ConditionedNet,
) -> (
    f64,
    Option<OutputGrads>,
    Option<scloc_core::net::ForwardOutput>,
) {
    let out = net.forward(&s.image, Mode::Train(&s.maps), true).unwrap();
    let p = &out.pred;
    let parts = DenseParts {
        ce_r: ce_loss(&p.probs_r, p.regions, &s.maps.region, &s.maps.mask).unwrap(),
        ce_s: ce_loss(&p.probs_s, p.k, &s.maps.sub, &s.maps.mask).unwrap(),
        residual: residual_loss(&p.residual, &s.maps.residual, &s.maps.mask).unwrap(),
    };
    let (report, grads) = total_dense(&parts, &LossWeights::single_scene());
    (report.total, Some(grads), Some(out))
}

pub fn sparse_loss(
    s: &Setup,
    net: &ConditionedNet,
) -> (
    f64,
    Option<OutputGrads>,
    Option<scloc_core::net::ForwardOutput>,
) {
    let out = net.forward(&s.image, Mode::Train(&s.maps), true).unwrap();
    let p = &out.pred;
    let w = LossWeights::single_scene();
    let coords: Vec<Vec3> = (0..s.maps.len())
        .map(|i| {
            if s.maps.mask[i] {
                s.hier.level2_centers[s.maps.region[i]][s.maps.sub[i]] + p.residual[i]
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    let parts = SparseParts {
        sce_r: sce_loss(
            &p.probs_r,
            p.regions,
            &s.maps.region,
            &s.maps.mask,
            w.lambda_ce,
            w.lambda_rce,
        )
        .unwrap(),
        sce_s: sce_loss(
            &p.probs_s,
            p.k,
            &s.maps.sub,
            &s.maps.mask,
            w.lambda_ce,
            w.lambda_rce,
        )
        .unwrap(),
        residual: residual_loss(&p.residual, &s.maps.residual, &s.maps.mask).unwrap(),
        reprojection: Some(
            reprojection_loss(&coords, &s.pixels, &s.pose, &s.intr, &s.maps.mask).unwrap(),
        ),
    };
    let (report, grads) = total_sparse(&parts, &w, 11);
    assert!(report.terms["reprojection"] > 0.0);
    (report.total, Some(grads), Some(out))
}

pub type LossFn = fn(
    &Setup,
    &ConditionedNet,
) -> (
    f64,
    Option<OutputGrads>,
    Option<scloc_core::net::ForwardOutput>,
);

#[derive(Debug, Default)]
pub struct CheckReport {
    pub worst: f64,
    pub checked: usize,
    /// Entries that only agreed at a smaller step.
    pub refined: usize,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && 4 * self.refined < self.checked
    }
}

/// Checks a seeded sample of entries from every tensor.
pub fn check(loss: LossFn, seed: u64, per_tensor: usize) -> CheckReport {
    let s = setup(seed);
    let (_, grads, out) = loss(&s, &s.net);
    let analytic = s.net.backward(&out.unwrap(), &grads.unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let mut report = CheckReport::default();
    let mut net = s.net.clone();
    for t in s.net.params.tensors.clone() {
        let r = t.range();
        let picks: Vec<usize> = if r.len() <= per_tensor {
            r.clone().collect()
        } else {
            sample(&mut rng, r.len(), per_tensor)
                .into_iter()
                .map(|i| r.start + i)
                .collect()
        };
        for i in picks {
            let orig = net.params.data[i];
            let mut best = f64::INFINITY;
            let mut last = 0.0;
            for (n, eps) in STEPS.iter().enumerate() {
                net.params.data[i] = orig + eps;
                let up = loss(&s, &net).0;
                net.params.data[i] = orig - eps;
                let down = loss(&s, &net).0;
                net.params.data[i] = orig;
                last = (up - down) / (2.0 * eps);
                best = best
                    .min((last - analytic[i]).abs() / last.abs().max(analytic[i].abs()).max(FLOOR));
                if best < TOL {
                    report.refined += usize::from(n > 0);
                    break;
                }
            }
            if best >= TOL {
                report.failures.push(format!(
                    "{} [{}]: analytic {} numeric {last} rel {best}",
                    t.name,
                    i - r.start,
                    analytic[i]
                ));
            }
            report.worst = report.worst.max(best);
            report.checked += 1;
        }
    }
    report
}
