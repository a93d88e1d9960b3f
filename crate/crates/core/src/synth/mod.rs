//! Deterministic synthetic scenes for end-to-end tests: coloured surface
//! point clouds, ground-truth rendering, camera trajectories and training
//! augmentation.

mod augment;
mod render;
mod trajectory;

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

pub use augment::{augment, AugmentParams};
pub use render::{frustum_fraction, render_frame, RenderedFrame, MIN_VIEW_FRACTION, NOISE_SIGMA};
pub use trajectory::{min_test_train_distance, sample_trajectory, train_test_split, TEST_EVERY};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("only {fraction:.3} of the scene is in view")]
    EmptyView { fraction: f64 },
    #[error("bad scene file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const MIN_POINTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    RandomBox,
    TwinRoom,
}

impl std::str::FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random_box" => Ok(Self::RandomBox),
            "twin_room" => Ok(Self::TwinRoom),
            _ => Err(format!("unknown scene kind '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self {
            min: [min.x, min.y, min.z],
            max: [max.x, max.y, max.z],
        }
    }

    pub fn min(&self) -> Vec3 {
        Vec3::from(self.min)
    }

    pub fn max(&self) -> Vec3 {
        Vec3::from(self.max)
    }

    pub fn size(&self) -> Vec3 {
        self.max() - self.min()
    }

    pub fn center(&self) -> Vec3 {
        (self.min() + self.max()) / 2.0
    }

    pub fn diameter(&self) -> f64 {
        self.size().norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn surface_area(&self) -> f64 {
        let s = self.size();
        2.0 * (s.x * s.y + s.y * s.z + s.z * s.x)
    }
}

pub const BOX_SIZE: f64 = 5.0;
pub const ROOM_SIZE: [f64; 3] = [4.0, 4.0, 3.0];
/// Distance between the origins of the two twin rooms.
pub const TWIN_OFFSET: f64 = 6.0;
/// Height range of the marker band that only the second twin room has.
const BAND_HEIGHT: (f64, f64) = (1.2, 1.6);
const BAND_INSET: f64 = 0.05;
const BAND_COLOR: [f64; 3] = [0.9, 0.05, 0.85];

/// Coloured surface points. Coordinates are exactly representable in f32.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneModel {
    pub seed: u64,
    pub kind: SceneKind,
    pub bounds: Aabb,
    pub points: Vec<[f64; 3]>,
    pub colors: Vec<[f64; 3]>,
}

/// Smooth colour field: one ramp per channel along a permuted axis plus a
/// low-amplitude sinusoidal texture.
struct Palette {
    axes: [usize; 3],
    waves: Vec<(usize, Vec3, f64)>,
}

impl Palette {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut axes = [0, 1, 2];
        for i in (1..3).rev() {
            axes.swap(i, rng.random_range(0..=i));
        }
        let waves = (0..6)
            .map(|i| {
                let dir = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let wavelength = rng.random_range(1.2..3.0);
                (
                    i % 3,
                    dir.normalize() * (TAU / wavelength),
                    rng.random_range(0.0..TAU),
                )
            })
            .collect();
        Self { axes, waves }
    }

    /// `local` is the position relative to the room, `size` the room size.
    fn color(&self, local: &Vec3, size: &Vec3) -> [f64; 3] {
        let mut c = [0.0; 3];
        for ch in 0..3 {
            let a = self.axes[ch];
            c[ch] = 0.15 + 0.65 * (local[a] / size[a]).clamp(0.0, 1.0);
        }
        for (ch, k, phase) in &self.waves {
            c[*ch] += 0.08 * (k.dot(local) + phase).sin();
        }
        c.map(|v| v.clamp(0.0, 1.0))
    }
}

/// Rounds to a multiple of 2⁻¹⁶ m. Such values stay exact in f32 after the
/// twin-room offset is added.
fn snap(v: f64) -> f64 {
    (v * 65536.0).round() / 65536.0
}

/// Uniform point on the surface of the box `[0, size]`.
fn surface_point(size: &Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    let areas = [size.y * size.z, size.x * size.z, size.x * size.y];
    let total = 2.0 * (areas[0] + areas[1] + areas[2]);
    let mut pick = rng.random_range(0.0..total);
    let mut face = 5;
    for f in 0..6 {
        if pick < areas[f / 2] {
            face = f;
            break;
        }
        pick -= areas[f / 2];
    }
    let (axis, high) = (face / 2, face % 2 == 1);
    let mut p = Vec3::new(
        rng.random_range(0.0..size.x),
        rng.random_range(0.0..size.y),
        rng.random_range(0.0..size.z),
    );
    p[axis] = if high { size[axis] } else { 0.0 };
    p
}

impl SceneModel {
    pub fn generate(kind: SceneKind, n_points: usize, seed: u64) -> Result<Self, SynthError> {
        if n_points < MIN_POINTS {
            return Err(SynthError::TooFewPoints {
                min: MIN_POINTS,
                got: n_points,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let palette = Palette::new(&mut rng);
        let mut points = Vec::with_capacity(n_points);
        let mut colors = Vec::with_capacity(n_points);
        let bounds = match kind {
            SceneKind::RandomBox => {
                let size = Vec3::repeat(BOX_SIZE);
                for _ in 0..n_points {
                    let p = surface_point(&size, &mut rng).map(snap);
                    points.push([p.x, p.y, p.z]);
                    colors.push(palette.color(&p, &size));
                }
                Aabb::new(Vec3::zeros(), size)
            }
            SceneKind::TwinRoom => {
                let size = Vec3::from(ROOM_SIZE);
                let offset = Vec3::new(TWIN_OFFSET, 0.0, 0.0);
                let perimeter = 2.0 * (size.x + size.y);
                let band_area = perimeter * (BAND_HEIGHT.1 - BAND_HEIGHT.0);
                let per_room = Aabb::new(Vec3::zeros(), size).surface_area();
                let n_band =
                    ((n_points as f64) * band_area / (2.0 * per_room + band_area)).round() as usize;
                let n_room = (n_points - n_band) / 2;
                let mut room_b = Vec::with_capacity(n_room);
                for _ in 0..n_room {
                    let p = surface_point(&size, &mut rng).map(snap);
                    let c = palette.color(&p, &size);
                    points.push([p.x, p.y, p.z]);
                    colors.push(c);
                    let q = p + offset;
                    room_b.push(([q.x, q.y, q.z], c));
                }
                for (p, c) in room_b {
                    points.push(p);
                    colors.push(c);
                }
                for _ in 0..(n_points - 2 * n_room) {
                    let along = rng.random_range(0.0..perimeter);
                    let z = rng.random_range(BAND_HEIGHT.0..BAND_HEIGHT.1);
                    let (x, y) = if along < size.x {
                        (along, BAND_INSET)
                    } else if along < size.x + size.y {
                        (size.x - BAND_INSET, along - size.x)
                    } else if along < 2.0 * size.x + size.y {
                        (along - size.x - size.y, size.y - BAND_INSET)
                    } else {
                        (BAND_INSET, along - 2.0 * size.x - size.y)
                    };
                    let p = (Vec3::new(
                        x.clamp(BAND_INSET, size.x - BAND_INSET),
                        y.clamp(BAND_INSET, size.y - BAND_INSET),
                        z,
                    ) + offset)
                        .map(snap);
                    points.push([p.x, p.y, p.z]);
                    let shade = 0.05 * (TAU * along / 0.8).sin();
                    colors.push(BAND_COLOR.map(|v| (v + shade).clamp(0.0, 1.0)));
                }
                Aabb::new(Vec3::zeros(), size + offset)
            }
        };
        Ok(Self {
            seed,
            kind,
            bounds,
            points,
            colors,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec3 {
        Vec3::from(self.points[i])
    }

    pub fn point_vecs(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| Vec3::from(*p)).collect()
    }

    /// The rooms a camera can be placed in.
    pub fn rooms(&self) -> Vec<Aabb> {
        match self.kind {
            SceneKind::RandomBox => vec![self.bounds],
            SceneKind::TwinRoom => {
                let size = Vec3::from(ROOM_SIZE);
                let offset = Vec3::new(TWIN_OFFSET, 0.0, 0.0);
                vec![
                    Aabb::new(Vec3::zeros(), size),
                    Aabb::new(offset, offset + size),
                ]
            }
        }
    }

    /// Mean distance between neighbouring surface points.
    pub fn point_spacing(&self) -> f64 {
        let area: f64 = self.rooms().iter().map(|r| r.surface_area()).sum();
        (area / self.len() as f64).sqrt()
    }

    pub fn to_json(&self) -> Result<String, SynthError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let scene: Self = serde_json::from_str(text)?;
        if scene.points.len() != scene.colors.len() || scene.points.is_empty() {
            return Err(SynthError::BadFormat(
                "points and colors must be non-empty and the same length".into(),
            ));
        }
        Ok(scene)
    }
}
