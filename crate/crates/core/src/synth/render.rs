use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{SceneModel, SynthError};
use crate::geometry::{CameraIntrinsics, PixelGrid, ScenePose, Vec3};
use crate::hierarchy::{
    label_maps_from_coords, CoordLabelMaps, CoordMap, HierarchyError, LabelHierarchy,
};
use crate::image::Image;

pub const NOISE_SIGMA: f64 = 0.01;
/// Minimum value of [`frustum_fraction`] for a renderable view.
pub const MIN_VIEW_FRACTION: f64 = 0.1;
const NEAR: f64 = 0.05;
const SPLAT_SCALE: f64 = 1.5;

/// A rendered training or test view with ground truth on the prediction grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub image: Image,
    pub grid: PixelGrid,
    pub coords: Vec<Vec3>,
    pub mask: Vec<bool>,
    pub pose: ScenePose,
    pub intrinsics: CameraIntrinsics,
    /// Pixel in the original camera image that each grid cell looks at.
    /// Cell centres for a plain render; moved by augmentation.
    pub cell_pixels: Vec<(f64, f64)>,
}

impl RenderedFrame {
    /// Reassembles a frame from its stored image, coordinate map and camera.
    pub fn from_parts(
        image: Image,
        map: CoordMap,
        pose: ScenePose,
        intrinsics: CameraIntrinsics,
        grid: PixelGrid,
    ) -> Result<Self, SynthError> {
        if image.width != grid.width
            || image.height != grid.height
            || map.w != grid.w()
            || map.h != grid.h()
        {
            return Err(SynthError::BadFormat(format!(
                "image {}x{} and map {}x{} do not fit a {}x{} camera",
                image.width, image.height, map.w, map.h, grid.width, grid.height
            )));
        }
        let cells = grid.cells();
        Ok(Self {
            image,
            grid,
            coords: map.coords,
            mask: map.mask,
            pose,
            intrinsics,
            cell_pixels: (0..cells)
                .map(|c| grid.cell_center(c % grid.w(), c / grid.w()))
                .collect(),
        })
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn coord_map(&self) -> CoordMap {
        CoordMap {
            w: self.grid.w(),
            h: self.grid.h(),
            coords: self.coords.clone(),
            mask: self.mask.clone(),
        }
    }

    pub fn label_maps(&self, hier: &LabelHierarchy) -> Result<CoordLabelMaps, HierarchyError> {
        label_maps_from_coords(self.grid.w(), self.grid.h(), &self.coords, &self.mask, hier)
    }
}

fn project_local(p: &Vec3, intr: &CameraIntrinsics) -> Option<(f64, f64, f64)> {
    (p.z > NEAR).then(|| {
        (
            intr.focal * p.x / p.z + intr.cx,
            intr.focal * p.y / p.z + intr.cy,
            p.z,
        )
    })
}

fn splat_radius(intr: &CameraIntrinsics, spacing: f64, depth: f64) -> f64 {
    (SPLAT_SCALE * intr.focal * spacing / depth).max(0.5)
}

fn in_image(u: f64, v: f64, grid: &PixelGrid) -> bool {
    u >= 0.0 && v >= 0.0 && u < grid.width as f64 && v < grid.height as f64
}

/// Fraction of the points of the camera's room (the whole scene when the
/// camera is outside every room) that project inside the image in front of
/// the camera, ignoring occlusion.
pub fn frustum_fraction(
    scene: &SceneModel,
    pose: &ScenePose,
    intr: &CameraIntrinsics,
    grid: &PixelGrid,
) -> f64 {
    let room = scene
        .rooms()
        .into_iter()
        .find(|r| r.contains(&pose.center()));
    let (mut total, mut inside) = (0usize, 0usize);
    for p in scene.point_vecs() {
        if room.is_some_and(|r| !r.contains(&p)) {
            continue;
        }
        total += 1;
        if project_local(&pose.inverse_transform(&p), intr)
            .is_some_and(|(u, v, _)| in_image(u, v, grid))
        {
            inside += 1;
        }
    }
    inside as f64 / total.max(1) as f64
}

/// Z-buffered point splatting. Each pixel shows the nearest point whose
/// splat covers it; each grid cell records the visible point projecting
/// closest to the cell centre.
pub fn render_frame(
    scene: &SceneModel,
    pose: &ScenePose,
    intr: &CameraIntrinsics,
    grid: &PixelGrid,
    noise_seed: u64,
) -> Result<RenderedFrame, SynthError> {
    let (width, height) = (grid.width, grid.height);
    let spacing = scene.point_spacing();
    // Points just outside the image still splat onto the border pixels.
    let mut projected = Vec::new();
    for (i, p) in scene.points.iter().enumerate() {
        if let Some((u, v, z)) = project_local(&pose.inverse_transform(&Vec3::from(*p)), intr) {
            let r = splat_radius(intr, spacing, z);
            if u > -r && v > -r && u < width as f64 + r && v < height as f64 + r {
                projected.push((i, u, v, z));
            }
        }
    }
    let fraction = frustum_fraction(scene, pose, intr, grid);
    if fraction < MIN_VIEW_FRACTION {
        return Err(SynthError::EmptyView { fraction });
    }

    let mut zbuf = vec![f64::INFINITY; width * height];
    let mut owner = vec![usize::MAX; width * height];
    for (k, &(_, u, v, z)) in projected.iter().enumerate() {
        let r = splat_radius(intr, spacing, z);
        let lo = |c: f64| (c - r - 0.5).ceil().max(0.0) as usize;
        let hi = |c: f64, n: usize| ((c + r - 0.5).floor().max(0.0) as usize).min(n - 1);
        let (x0, x1, y0, y1) = (lo(u), hi(u, width), lo(v), hi(v, height));
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let pix = y * width + x;
                if z < zbuf[pix] {
                    zbuf[pix] = z;
                    owner[pix] = k;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut image = Image::filled(width, height, 0.0);
    for pix in 0..width * height {
        let base = if owner[pix] == usize::MAX {
            [0.0; 3]
        } else {
            scene.colors[projected[owner[pix]].0]
        };
        for c in 0..3 {
            image.data[pix * 3 + c] = (base[c] + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }

    let mut visible = vec![false; projected.len()];
    for &k in owner.iter().filter(|&&k| k != usize::MAX) {
        visible[k] = true;
    }
    let cells = grid.cells();
    let mut best: Vec<Option<(f64, usize)>> = vec![None; cells];
    for (k, &(i, u, v, _)) in projected.iter().enumerate() {
        if !visible[k] {
            continue;
        }
        if !in_image(u, v, grid) {
            continue;
        }
        let Some((cu, cv)) = grid.cell_of(u, v) else {
            continue;
        };
        let (px, py) = grid.cell_center(cu, cv);
        let d = (u - px).hypot(v - py);
        let cell = cv * grid.w() + cu;
        if best[cell].is_none_or(|(bd, _)| d < bd) {
            best[cell] = Some((d, i));
        }
    }
    let coords = best
        .iter()
        .map(|b| b.map_or(Vec3::zeros(), |(_, i)| scene.point(i)))
        .collect();
    let mask = best.iter().map(|b| b.is_some()).collect();
    let cell_pixels = (0..cells)
        .map(|c| grid.cell_center(c % grid.w(), c / grid.w()))
        .collect();
    Ok(RenderedFrame {
        image,
        grid: *grid,
        coords,
        mask,
        pose: *pose,
        intrinsics: *intr,
        cell_pixels,
    })
}
