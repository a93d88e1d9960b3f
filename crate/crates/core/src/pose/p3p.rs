use nalgebra::{DMatrix, Matrix3};

use super::refine::polish_pose;
use super::{reprojection_error, Correspondence, PoseError};
use crate::geometry::{backproject_ray, CameraIntrinsics, ScenePose, Vec3};

const COLLINEAR_TOL: f64 = 1e-9;
const BEARING_TOL: f64 = 1e-12;
const DISTANCE_TOL: f64 = 1e-8;

/// Real roots of a polynomial given highest degree first.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let lead = coeffs
        .iter()
        .position(|c| c.abs() > 1e-14 * scale)
        .unwrap_or(coeffs.len());
    let c = &coeffs[lead..];
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return Vec::new();
    }
    let mut companion = DMatrix::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    let eval = |x: f64| c.iter().fold(0.0, |acc, &k| acc * x + k);
    let deriv = |x: f64| {
        c[..n]
            .iter()
            .enumerate()
            .fold(0.0, |acc, (i, &k)| acc * x + k * (n - i) as f64)
    };
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..8 {
                let d = deriv(x);
                if d == 0.0 {
                    break;
                }
                let step = eval(x) / d;
                x -= step;
                if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                    break;
                }
            }
            x
        })
        .collect()
}

/// Rigid world-to-camera transform (R, t) with `cam ≈ R·world + t`.
fn align(world: &[Vec3; 3], cam: &[Vec3; 3]) -> (Matrix3<f64>, Vec3) {
    let mw = (world[0] + world[1] + world[2]) / 3.0;
    let mc = (cam[0] + cam[1] + cam[2]) / 3.0;
    let mut h = Matrix3::zeros();
    for i in 0..3 {
        h += (world[i] - mw) * (cam[i] - mc).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    (r, mc - r * mw)
}

/// Newton iterations on the three law-of-cosines equations in the distances.
fn polish(s: &mut Vec3, cos: &Vec3, sides2: &Vec3) {
    let (ca, cb, cg) = (cos[0], cos[1], cos[2]);
    for _ in 0..20 {
        let f = Vec3::new(
            s[1] * s[1] + s[2] * s[2] - 2.0 * s[1] * s[2] * ca - sides2[0],
            s[0] * s[0] + s[2] * s[2] - 2.0 * s[0] * s[2] * cb - sides2[1],
            s[0] * s[0] + s[1] * s[1] - 2.0 * s[0] * s[1] * cg - sides2[2],
        );
        let j = Matrix3::new(
            0.0,
            2.0 * s[1] - 2.0 * s[2] * ca,
            2.0 * s[2] - 2.0 * s[1] * ca,
            2.0 * s[0] - 2.0 * s[2] * cb,
            0.0,
            2.0 * s[2] - 2.0 * s[0] * cb,
            2.0 * s[0] - 2.0 * s[1] * cg,
            2.0 * s[1] - 2.0 * s[0] * cg,
            0.0,
        );
        match j.lu().solve(&f) {
            Some(step) if step.iter().all(|v| v.is_finite()) => {
                *s -= step;
                if step.norm() <= 1e-16 * s.norm() {
                    break;
                }
            }
            _ => break,
        }
    }
}

/// All camera poses consistent with three pixel/world pairs.
pub fn p3p(
    corrs: &[Correspondence; 3],
    intr: &CameraIntrinsics,
) -> Result<Vec<ScenePose>, PoseError> {
    let x = [corrs[0].world, corrs[1].world, corrs[2].world];
    let scale = (x[1] - x[0])
        .norm()
        .max((x[2] - x[0]).norm())
        .max((x[2] - x[1]).norm());
    if scale == 0.0 || (x[1] - x[0]).cross(&(x[2] - x[0])).norm() <= COLLINEAR_TOL * scale * scale {
        return Err(PoseError::Degenerate("collinear world points"));
    }
    let f: [Vec3; 3] = std::array::from_fn(|i| backproject_ray(corrs[i].pixel, intr).normalize());
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if f[i].cross(&f[j]).norm() <= BEARING_TOL {
            return Err(PoseError::Degenerate("coincident bearings"));
        }
    }

    // Side lengths opposite each point and the cosines of the ray angles
    // opposite each side.
    let a2 = (x[1] - x[2]).norm_squared();
    let b2 = (x[0] - x[2]).norm_squared();
    let c2 = (x[0] - x[1]).norm_squared();
    let ca = f[1].dot(&f[2]);
    let cb = f[0].dot(&f[2]);
    let cg = f[0].dot(&f[1]);

    // With s2 = u·s1 and s3 = v·s1, eliminating u leaves a quartic in v.
    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let bmc = (b2 - c2) / b2;
    let bma = (b2 - a2) / b2;
    let (ca2, cb2, cg2) = (ca * ca, cb * cb, cg * cg);
    let coeffs = [
        (amc - 1.0).powi(2) - 4.0 * c2 / b2 * ca2,
        4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg + 2.0 * c2 / b2 * ca2 * cb),
        2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cb2 + 2.0 * bmc * ca2
            - 4.0 * apc * ca * cb * cg
            + 2.0 * bma * cg2),
        4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2 / b2 * cg2 * cb - (1.0 - apc) * ca * cg),
        (1.0 + amc).powi(2) - 4.0 * a2 / b2 * cg2,
    ];

    let cos = Vec3::new(ca, cb, cg);
    let sides2 = Vec3::new(a2, b2, c2);
    let mut dists: Vec<Vec3> = Vec::new();
    for v in real_roots(&coeffs) {
        let q = 1.0 + v * v - 2.0 * v * cb;
        if q <= 0.0 || v <= 0.0 {
            continue;
        }
        // s1 and s3 follow from the side opposite point 2; s2 is then a root
        // of the quadratic for side c, checked against side a.
        let s1 = (b2 / q).sqrt();
        let s3 = v * s1;
        let disc = s1 * s1 * cg2 - s1 * s1 + c2;
        if disc < -DISTANCE_TOL * scale * scale {
            continue;
        }
        let root = disc.max(0.0).sqrt();
        for s2 in [s1 * cg + root, s1 * cg - root] {
            let mut s = Vec3::new(s1, s2, s3);
            polish(&mut s, &cos, &sides2);
            if s.iter().any(|&d| !(d > 0.0)) {
                continue;
            }
            let resid = [
                s[1] * s[1] + s[2] * s[2] - 2.0 * s[1] * s[2] * ca - a2,
                s[0] * s[0] + s[2] * s[2] - 2.0 * s[0] * s[2] * cb - b2,
                s[0] * s[0] + s[1] * s[1] - 2.0 * s[0] * s[1] * cg - c2,
            ];
            if resid.iter().any(|r| r.abs() > DISTANCE_TOL * scale * scale) {
                continue;
            }
            if dists.iter().all(|d| (d - s).norm() > 1e-9 * scale) {
                dists.push(s);
            }
        }
    }
    if dists.is_empty() {
        return Err(PoseError::NoRealSolution);
    }
    Ok(dists
        .into_iter()
        .map(|s| {
            let cam = [f[0] * s[0], f[1] * s[1], f[2] * s[2]];
            let (r, t) = align(&x, &cam);
            let pose = ScenePose::from_matrix(&r.transpose(), -(r.transpose() * t));
            polish_pose(&pose, corrs, intr, 3)
        })
        .collect())
}

/// Solves the first three correspondences and keeps the candidate that
/// best reprojects the fourth.
pub fn solve_minimal(
    corrs: &[Correspondence; 4],
    intr: &CameraIntrinsics,
) -> Result<ScenePose, PoseError> {
    let candidates = p3p(&[corrs[0], corrs[1], corrs[2]], intr)?;
    let mut best: Option<(f64, ScenePose)> = None;
    for pose in candidates {
        let e = reprojection_error(&pose, intr, &corrs[3]);
        if best.is_none_or(|(be, _)| e < be) {
            best = Some((e, pose));
        }
    }
    best.map(|(_, p)| p).ok_or(PoseError::NoRealSolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pose_error, project, PixelGrid};
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 320.0, 240.0, &PixelGrid::new(640, 480).unwrap()).unwrap()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> ScenePose {
        ScenePose::new(
            UnitQuaternion::from_euler_angles(
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            ),
            Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ),
        )
    }

    fn observe(pose: &ScenePose, intr: &CameraIntrinsics, cam: &[Vec3]) -> Vec<Correspondence> {
        cam.iter()
            .map(|c| {
                let w = pose.transform(c);
                Correspondence::new(project(&w, pose, intr).unwrap().0, w)
            })
            .collect()
    }

    fn random_cam_point(rng: &mut ChaCha8Rng) -> Vec3 {
        let z = rng.random_range(1.0..6.0);
        Vec3::new(
            rng.random_range(-0.6..0.6) * z,
            rng.random_range(-0.45..0.45) * z,
            z,
        )
    }

    #[test]
    fn real_roots_of_known_polynomials() {
        let mut r = real_roots(&[1.0, -10.0, 35.0, -50.0, 24.0]);
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(real_roots(&[1.0, 0.0, 1.0]).is_empty());
        let r = real_roots(&[0.0, 2.0, -4.0]);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_ground_truth_among_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let intr = intr();
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let cam: Vec<Vec3> = (0..3).map(|_| random_cam_point(&mut rng)).collect();
            let c = observe(&pose, &intr, &cam);
            let cands = p3p(&[c[0], c[1], c[2]], &intr).unwrap();
            assert!(!cands.is_empty() && cands.len() <= 4);
            let best = cands
                .iter()
                .map(|p| pose_error(p, &pose))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            assert!(best.0 < 1e-4 && best.1 < 1e-4, "{best:?}");
            for p in &cands {
                for ci in &c {
                    assert!(reprojection_error(p, &intr, ci) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let intr = intr();
        let pose = ScenePose::identity();
        let c = observe(
            &pose,
            &intr,
            &[
                Vec3::new(0.0, 0.0, 2.0),
                Vec3::new(0.5, 0.1, 3.0),
                Vec3::new(1.0, 0.2, 4.0),
            ],
        );
        assert!(matches!(
            p3p(&[c[0], c[1], c[2]], &intr),
            Err(PoseError::Degenerate(_))
        ));
        let quad = [c[0], c[1], c[2], c[0]];
        assert!(matches!(
            solve_minimal(&quad, &intr),
            Err(PoseError::Degenerate(_))
        ));
    }

    fn symmetric_triangle() -> Vec<Vec3> {
        (0..3)
            .map(|i| {
                let a = i as f64 * 2.0 * std::f64::consts::PI / 3.0;
                Vec3::new(0.8 * a.cos(), 0.8 * a.sin(), 3.0)
            })
            .collect()
    }

    #[test]
    fn symmetric_configuration_has_several_consistent_solutions() {
        let intr = intr();
        let pose = ScenePose::identity();
        let c = observe(&pose, &intr, &symmetric_triangle());
        let cands = p3p(&[c[0], c[1], c[2]], &intr).unwrap();
        assert!(cands.len() >= 2, "{} candidates", cands.len());
        for p in &cands {
            for ci in &c {
                assert!(reprojection_error(p, &intr, ci) < 1e-6);
            }
        }
    }

    #[test]
    fn fourth_point_disambiguates() {
        let intr = intr();
        let pose = ScenePose::new(
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            Vec3::new(0.5, -0.2, 0.1),
        );
        let mut cam = symmetric_triangle();
        cam.push(Vec3::new(0.3, -0.5, 4.0));
        let c = observe(&pose, &intr, &cam);
        assert!(p3p(&[c[0], c[1], c[2]], &intr).unwrap().len() >= 2);
        let est = solve_minimal(&[c[0], c[1], c[2], c[3]], &intr).unwrap();
        let (t, r) = pose_error(&est, &pose);
        assert!(t < 1e-4 && r < 1e-6, "{t} cm {r} deg");
    }

    #[test]
    fn minimal_solver_on_random_quads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let intr = intr();
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let cam: Vec<Vec3> = (0..4).map(|_| random_cam_point(&mut rng)).collect();
            let c = observe(&pose, &intr, &cam);
            let est = solve_minimal(&[c[0], c[1], c[2], c[3]], &intr).unwrap();
            let (t, r) = pose_error(&est, &pose);
            assert!(t < 1e-4 && r < 1e-6, "{t} cm {r} deg");
        }
    }
}
