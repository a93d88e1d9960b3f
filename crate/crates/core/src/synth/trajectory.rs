use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{frustum_fraction, SceneModel, SynthError, MIN_VIEW_FRACTION};
use crate::geometry::{CameraIntrinsics, PixelGrid, ScenePose, Vec3};

/// Every `TEST_EVERY`-th frame (offset `TEST_EVERY - 1`) is held out.
pub const TEST_EVERY: usize = 4;

/// A closed loop inside each room: the camera circles the room centre and
/// looks across it at the far side, with seeded low-frequency wobble in
/// radius, height, yaw and pitch. Frames are split evenly between rooms.
pub fn sample_trajectory(
    scene: &SceneModel,
    n_frames: usize,
    seed: u64,
    intr: &CameraIntrinsics,
    grid: &PixelGrid,
) -> Result<Vec<ScenePose>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rooms = scene.rooms();
    let mut poses = Vec::with_capacity(n_frames);
    for (r, room) in rooms.iter().enumerate() {
        let m = n_frames / rooms.len() + usize::from(r < n_frames % rooms.len());
        let phases: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..TAU)).collect();
        let (c, size) = (room.center(), room.size());
        let radius = 0.25 * size.x.min(size.y);
        for i in 0..m {
            let theta = TAU * i as f64 / m.max(1) as f64 + phases[0];
            let rad = radius * (1.0 + 0.15 * (2.0 * theta + phases[1]).sin());
            let height = 0.15 * size.z * (3.0 * theta + phases[2]).sin();
            let eye = c + Vec3::new(rad * theta.cos(), rad * theta.sin(), height);
            let yaw = theta + PI + 0.35 * (theta + phases[3]).sin();
            let reach = 0.35 * size.x.min(size.y);
            let lift = 0.12 * size.z * (2.0 * theta + phases[4]).sin();
            let target = c + Vec3::new(reach * yaw.cos(), reach * yaw.sin(), lift);
            poses.push(ScenePose::look_at(eye, target, Vec3::z()));
        }
    }
    for pose in &poses {
        let fraction = frustum_fraction(scene, pose, intr, grid);
        if fraction < MIN_VIEW_FRACTION {
            return Err(SynthError::EmptyView { fraction });
        }
    }
    Ok(poses)
}

/// (train indices, test indices).
pub fn train_test_split(n_frames: usize) -> (Vec<usize>, Vec<usize>) {
    (0..n_frames).partition(|i| i % TEST_EVERY != TEST_EVERY - 1)
}

/// Smallest camera-centre distance between any test pose and any training
/// pose, in metres.
pub fn min_test_train_distance(poses: &[ScenePose]) -> f64 {
    let (train, test) = train_test_split(poses.len());
    let mut best = f64::INFINITY;
    for &t in &test {
        for &r in &train {
            best = best.min((poses[t].center() - poses[r].center()).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_frame, SceneKind};

    fn camera() -> (CameraIntrinsics, PixelGrid) {
        let grid = PixelGrid::new(128, 96).unwrap();
        (CameraIntrinsics::centered(&grid, 0.6).unwrap(), grid)
    }

    #[test]
    fn deterministic_and_renderable() {
        let (intr, grid) = camera();
        for kind in [SceneKind::RandomBox, SceneKind::TwinRoom] {
            let scene = SceneModel::generate(kind, 10000, 2).unwrap();
            let a = sample_trajectory(&scene, 80, 3, &intr, &grid).unwrap();
            let b = sample_trajectory(&scene, 80, 3, &intr, &grid).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 80);
            assert_ne!(a, sample_trajectory(&scene, 80, 4, &intr, &grid).unwrap());
            for (i, p) in a.iter().enumerate().step_by(7) {
                render_frame(&scene, p, &intr, &grid, i as u64).unwrap();
            }
            for p in &a {
                assert!(scene.bounds.contains(&p.center()));
            }
        }
    }

    #[test]
    fn twin_frames_split_between_rooms() {
        let (intr, grid) = camera();
        let scene = SceneModel::generate(SceneKind::TwinRoom, 5000, 2).unwrap();
        let poses = sample_trajectory(&scene, 80, 1, &intr, &grid).unwrap();
        let rooms = scene.rooms();
        assert!(poses[..40].iter().all(|p| rooms[0].contains(&p.center())));
        assert!(poses[40..].iter().all(|p| rooms[1].contains(&p.center())));
        let (_, test) = train_test_split(80);
        assert_eq!(test.iter().filter(|&&i| i < 40).count(), 10);
    }

    #[test]
    fn split_is_disjoint_and_separated() {
        let (train, test) = train_test_split(80);
        assert_eq!((train.len(), test.len()), (60, 20));
        assert!(test.iter().all(|t| !train.contains(t)));
        let (intr, grid) = camera();
        for kind in [SceneKind::RandomBox, SceneKind::TwinRoom] {
            let scene = SceneModel::generate(kind, 5000, 1).unwrap();
            for seed in 0..5 {
                let poses = sample_trajectory(&scene, 80, seed, &intr, &grid).unwrap();
                assert!(min_test_train_distance(&poses) >= 0.05);
            }
        }
    }
}
