use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RenderedFrame;
use crate::image::Image;

/// One affine image warp about the image centre plus a brightness offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Translation as a fraction of the image width / height.
    pub tx: f64,
    pub ty: f64,
    pub rotation_deg: f64,
    pub scale: f64,
    pub shear_deg: f64,
    /// Added to every channel, in [0, 1] intensity units.
    pub brightness: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            tx: 0.0,
            ty: 0.0,
            rotation_deg: 0.0,
            scale: 1.0,
            shear_deg: 0.0,
            brightness: 0.0,
        }
    }

    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        Self {
            tx: rng.random_range(-0.2..=0.2),
            ty: rng.random_range(-0.2..=0.2),
            rotation_deg: rng.random_range(-30.0..=30.0),
            scale: rng.random_range(0.7..=1.5),
            shear_deg: rng.random_range(-10.0..=10.0),
            brightness: rng.random_range(-20.0..=20.0) / 255.0,
        }
    }

    fn linear(&self) -> Matrix2<f64> {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let rot = Matrix2::new(c, -s, s, c);
        let shear = Matrix2::new(1.0, self.shear_deg.to_radians().tan(), 0.0, 1.0);
        rot * shear * self.scale
    }

    /// Maps a destination pixel position back to the source image.
    fn source_of(
        &self,
        inv: &Matrix2<f64>,
        center: Vector2<f64>,
        shift: Vector2<f64>,
        x: f64,
        y: f64,
    ) -> (f64, f64) {
        let s = center + inv * (Vector2::new(x, y) - center - shift);
        (s.x, s.y)
    }

    /// Warps the image bilinearly and the label grid by nearest cell. Cells
    /// and pixels that map outside the source become invalid / black.
    pub fn apply(&self, frame: &RenderedFrame) -> RenderedFrame {
        let (width, height) = (frame.image.width, frame.image.height);
        let grid = frame.grid;
        let inv = self.linear().try_inverse().expect("warp is invertible");
        let center = Vector2::new(width as f64 / 2.0, height as f64 / 2.0);
        let shift = Vector2::new(self.tx * width as f64, self.ty * height as f64);

        let mut image = Image::filled(width, height, 0.0);
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = self.source_of(&inv, center, shift, x as f64 + 0.5, y as f64 + 0.5);
                let rgb = frame.image.sample_bilinear(sx, sy).unwrap_or([0.0; 3]);
                image.set_pixel(x, y, rgb.map(|v| (v + self.brightness).clamp(0.0, 1.0)));
            }
        }

        let cells = grid.cells();
        let mut out = frame.clone();
        out.image = image;
        for cell in 0..cells {
            let (px, py) = grid.cell_center(cell % grid.w(), cell / grid.w());
            let (sx, sy) = self.source_of(&inv, center, shift, px, py);
            out.cell_pixels[cell] = (sx, sy);
            match grid.cell_of(sx, sy) {
                Some((u, v)) if frame.mask[v * grid.w() + u] => {
                    out.coords[cell] = frame.coords[v * grid.w() + u];
                    out.mask[cell] = true;
                }
                _ => {
                    out.coords[cell] = crate::geometry::Vec3::zeros();
                    out.mask[cell] = false;
                }
            }
        }
        out
    }
}

/// Applies one randomly drawn warp.
pub fn augment(frame: &RenderedFrame, seed: u64) -> RenderedFrame {
    AugmentParams::sample(&mut ChaCha8Rng::seed_from_u64(seed)).apply(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, PixelGrid};
    use crate::hierarchy::LabelHierarchy;
    use crate::synth::{render_frame, sample_trajectory, SceneKind, SceneModel};

    fn frame() -> (SceneModel, RenderedFrame) {
        let scene = SceneModel::generate(SceneKind::RandomBox, 20000, 9).unwrap();
        let grid = PixelGrid::new(128, 96).unwrap();
        let intr = CameraIntrinsics::centered(&grid, 0.6).unwrap();
        let poses = sample_trajectory(&scene, 4, 0, &intr, &grid).unwrap();
        let f = render_frame(&scene, &poses[1], &intr, &grid, 1).unwrap();
        (scene, f)
    }

    #[test]
    fn identity_is_unchanged() {
        let (_, f) = frame();
        assert_eq!(AugmentParams::identity().apply(&f), f);
    }

    #[test]
    fn brightness_shift_on_gray() {
        let (_, mut f) = frame();
        f.image = Image::filled(f.image.width, f.image.height, 0.5);
        let p = AugmentParams {
            brightness: 20.0 / 255.0,
            ..AugmentParams::identity()
        };
        let out = p.apply(&f);
        assert!(out
            .image
            .data
            .iter()
            .all(|v| (v - (0.5 + 20.0 / 255.0)).abs() < 1e-12));
    }

    #[test]
    fn sampled_parameters_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let p = AugmentParams::sample(&mut rng);
            assert!(p.tx.abs() <= 0.2 && p.ty.abs() <= 0.2);
            assert!(p.rotation_deg.abs() <= 30.0 && p.shear_deg.abs() <= 10.0);
            assert!((0.7..=1.5).contains(&p.scale));
            assert!(p.brightness.abs() <= 20.0 / 255.0 + 1e-15);
        }
    }

    #[test]
    fn labels_move_with_pixels() {
        let (scene, f) = frame();
        let hier = LabelHierarchy::build(&scene.point_vecs(), 4, 0).unwrap();
        let grid = f.grid;
        for seed in 0..10 {
            let params = AugmentParams::sample(&mut ChaCha8Rng::seed_from_u64(seed));
            let out = params.apply(&f);
            // Oracle: invert the warp explicitly for every cell centre.
            let (s, c) = params.rotation_deg.to_radians().sin_cos();
            let m = Matrix2::new(c, -s, s, c)
                * Matrix2::new(1.0, params.shear_deg.to_radians().tan(), 0.0, 1.0)
                * params.scale;
            for cell in 0..grid.cells() {
                let (px, py) = grid.cell_center(cell % grid.w(), cell / grid.w());
                let d = Vector2::new(px - 64.0 - params.tx * 128.0, py - 48.0 - params.ty * 96.0);
                let src = m.lu().solve(&d).unwrap() + Vector2::new(64.0, 48.0);
                let expect = grid
                    .cell_of(src.x, src.y)
                    .map(|(u, v)| v * grid.w() + u)
                    .filter(|&i| f.mask[i])
                    .map(|i| f.coords[i]);
                assert_eq!(out.mask[cell].then_some(out.coords[cell]), expect);
            }
            let maps = out.label_maps(&hier).unwrap();
            for (cell, decoded) in maps.coords(&hier).into_iter().enumerate() {
                assert_eq!(decoded, out.mask[cell].then_some(out.coords[cell]));
            }
        }
    }

    #[test]
    fn cell_pixels_track_the_source_view() {
        let (_, f) = frame();
        let out = augment(&f, 3);
        for cell in (0..f.grid.cells()).filter(|&c| out.mask[c]) {
            let (u, v) = out.cell_pixels[cell];
            let src = f.grid.cell_of(u, v).unwrap();
            assert_eq!(out.coords[cell], f.coords[src.1 * f.grid.w() + src.0]);
        }
        assert_eq!(out.pose, f.pose);
    }
}
