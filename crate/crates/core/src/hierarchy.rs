//! Two-level hierarchical k-means over scene points, and the conversion
//! between 3D coordinates and (region, sub-region, residual) labels.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

const MAX_LLOYD_ITERS: usize = 200;
const SCMAP_MAGIC: &[u8; 6] = b"SCMAP1";

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("need at least {needed} distinct points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("label ({r}, {s}) out of range for hierarchy with {regions} regions and k = {k}")]
    IndexOutOfRange {
        r: usize,
        s: usize,
        regions: usize,
        k: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid hierarchy: {0}")]
    Invalid(String),
    #[error("bad coordinate map file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Result of one flat k-means run.
#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub centers: Vec<Vec3>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances after each Lloyd step, starting with the
    /// value for the initial (k-means++) centres.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Index of the nearest centre; ties go to the lowest index.
pub fn nearest_center(p: &Vec3, centers: &[Vec3]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn assign_all(points: &[Vec3], centers: &[Vec3]) -> Vec<usize> {
    points.iter().map(|p| nearest_center(p, centers)).collect()
}

fn objective(points: &[Vec3], centers: &[Vec3], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| (p - centers[a]).norm_squared())
        .sum()
}

fn kmeans_pp_init(
    points: &[Vec3],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec3>, HierarchyError> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| (p - centers[0]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(HierarchyError::TooFewPoints {
                needed: k,
                got: centers.len(),
            });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if d > 0.0 && acc >= target {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave `acc` a hair below `target`; fall back to the
        // last point with positive weight.
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap());
        let c = points[pick];
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min((p - c).norm_squared());
        }
        centers.push(c);
    }
    Ok(centers)
}

fn recompute_centers(points: &[Vec3], assignment: &[usize], old: &[Vec3]) -> Vec<Vec3> {
    let k = old.len();
    let mut sums = vec![Vec3::zeros(); k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        sums[a] += p;
        counts[a] += 1;
    }
    let mut centers: Vec<Vec3> = (0..k)
        .map(|c| {
            if counts[c] > 0 {
                sums[c] / counts[c] as f64
            } else {
                old[c]
            }
        })
        .collect();

    // Empty clusters are reseeded to the point farthest from its current
    // centre; each reseed claims a distinct point.
    let mut claimed = vec![false; points.len()];
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, (p, &a)) in points.iter().zip(assignment).enumerate() {
            if claimed[i] {
                continue;
            }
            let d = (p - centers[a]).norm_squared();
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            claimed[i] = true;
            centers[c] = points[i];
        }
    }
    centers
}

/// Lloyd's algorithm with k-means++ seeding. Stops when no assignment
/// changes or after 200 iterations.
pub fn kmeans(points: &[Vec3], k: usize, seed: u64) -> Result<KMeansResult, HierarchyError> {
    if k == 0 {
        return Err(HierarchyError::Invalid("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(HierarchyError::TooFewPoints {
            needed: k,
            got: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp_init(points, k, &mut rng)?;
    let mut assignment = assign_all(points, &centers);
    let mut trace = vec![objective(points, &centers, &assignment)];
    let mut iterations = 0;
    for _ in 0..MAX_LLOYD_ITERS {
        iterations += 1;
        centers = recompute_centers(points, &assignment, &centers);
        let next = assign_all(points, &centers);
        trace.push(objective(points, &centers, &next));
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let assignment = assign_all(points, &centers);
    Ok(KMeansResult {
        centers,
        assignment,
        objective_trace: trace,
        iterations,
    })
}

fn snap_f32(v: Vec3) -> Vec3 {
    v.map(|x| x as f32 as f64)
}

/// Region centres (level 1) and sub-region centres (level 2).
///
/// Centres are rounded to f32-representable values, so for coordinates that
/// are themselves f32 values (everything read from disk) the residual
/// subtraction is exact and `decode(encode(p)) == p` bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelHierarchy {
    pub k: usize,
    pub seed: u64,
    pub level1_centers: Vec<Vec3>,
    /// Indexed `[region][sub_region]`.
    pub level2_centers: Vec<Vec<Vec3>>,
}

#[derive(Serialize, Deserialize)]
struct HierarchyFile {
    k: usize,
    seed: u64,
    level1_centers: Vec<[f64; 3]>,
    level2_centers: Vec<Vec<[f64; 3]>>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl LabelHierarchy {
    /// Two-level hierarchical k-means with branching factor `k`.
    pub fn build(points: &[Vec3], k: usize, seed: u64) -> Result<Self, HierarchyError> {
        Self::build_combined(&[points], k, seed)
    }

    /// Level 1 is built per scene (k regions each) and concatenated; level 2
    /// is uniform with branching factor `k`.
    pub fn build_combined(scenes: &[&[Vec3]], k: usize, seed: u64) -> Result<Self, HierarchyError> {
        if k == 0 {
            return Err(HierarchyError::Invalid("k must be at least 1".into()));
        }
        let mut level1 = Vec::new();
        let mut level2 = Vec::new();
        for (si, points) in scenes.iter().enumerate() {
            if points.len() < k * k {
                return Err(HierarchyError::TooFewPoints {
                    needed: k * k,
                    got: points.len(),
                });
            }
            let scene_seed = seed.wrapping_add((si as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let top = kmeans(points, k, scene_seed)?;
            let centers: Vec<Vec3> = top.centers.iter().copied().map(snap_f32).collect();
            let assignment = assign_all(points, &centers);
            for r in 0..k {
                let members: Vec<Vec3> = points
                    .iter()
                    .zip(&assignment)
                    .filter(|(_, &a)| a == r)
                    .map(|(p, _)| *p)
                    .collect();
                let sub_seed = scene_seed ^ ((r as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
                let sub = kmeans(&members, k, sub_seed)?;
                level2.push(sub.centers.into_iter().map(snap_f32).collect());
            }
            level1.extend(centers);
        }
        let hier = Self {
            k,
            seed,
            level1_centers: level1,
            level2_centers: level2,
        };
        hier.validate()?;
        Ok(hier)
    }

    pub fn num_regions(&self) -> usize {
        self.level1_centers.len()
    }

    /// Sentinel region label for invalid pixels (one past the valid range).
    pub fn region_sentinel(&self) -> usize {
        self.num_regions()
    }

    /// Sentinel sub-region label for invalid pixels.
    pub fn sub_sentinel(&self) -> usize {
        self.k
    }

    pub fn validate(&self) -> Result<(), HierarchyError> {
        let regions = self.num_regions();
        if self.level2_centers.len() != regions
            || self.level2_centers.iter().any(|l| l.len() != self.k)
        {
            return Err(HierarchyError::Invalid(
                "level-2 table must be regions x k".into(),
            ));
        }
        let all_finite = self
            .level1_centers
            .iter()
            .chain(self.level2_centers.iter().flatten())
            .all(|c| c.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(HierarchyError::Invalid("non-finite centre".into()));
        }
        let distinct = |cs: &[Vec3]| {
            cs.iter()
                .enumerate()
                .all(|(i, a)| cs[i + 1..].iter().all(|b| (a - b).norm() > 1e-12))
        };
        if !distinct(&self.level1_centers) || !self.level2_centers.iter().all(|l| distinct(l)) {
            return Err(HierarchyError::Invalid(
                "duplicate centres within a level".into(),
            ));
        }
        for (r, subs) in self.level2_centers.iter().enumerate() {
            for c in subs {
                if nearest_center(c, &self.level1_centers) != r {
                    return Err(HierarchyError::Invalid(format!(
                        "sub-region centre of region {r} is nearer another region"
                    )));
                }
            }
        }
        Ok(())
    }

    /// (region, sub-region, residual) of a point.
    pub fn encode(&self, p: &Vec3) -> (usize, usize, Vec3) {
        let r = nearest_center(p, &self.level1_centers);
        let s = nearest_center(p, &self.level2_centers[r]);
        (r, s, p - self.level2_centers[r][s])
    }

    pub fn decode(&self, r: usize, s: usize, residual: &Vec3) -> Result<Vec3, HierarchyError> {
        Ok(self.center(r, s)? + residual)
    }

    pub fn center(&self, r: usize, s: usize) -> Result<Vec3, HierarchyError> {
        if r >= self.num_regions() || s >= self.k {
            return Err(HierarchyError::IndexOutOfRange {
                r,
                s,
                regions: self.num_regions(),
                k: self.k,
            });
        }
        Ok(self.level2_centers[r][s])
    }

    pub fn to_json(&self) -> Result<String, HierarchyError> {
        let file = HierarchyFile {
            k: self.k,
            seed: self.seed,
            level1_centers: self.level1_centers.iter().map(arr).collect(),
            level2_centers: self
                .level2_centers
                .iter()
                .map(|l| l.iter().map(arr).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HierarchyError> {
        let f: HierarchyFile = serde_json::from_str(text)?;
        let v = |a: &[f64; 3]| Vec3::new(a[0], a[1], a[2]);
        let hier = Self {
            k: f.k,
            seed: f.seed,
            level1_centers: f.level1_centers.iter().map(v).collect(),
            level2_centers: f
                .level2_centers
                .iter()
                .map(|l| l.iter().map(v).collect())
                .collect(),
        };
        hier.validate()?;
        Ok(hier)
    }
}

/// Per-cell ground truth on the prediction grid, row-major (`v * w + u`).
#[derive(Clone, Debug, PartialEq)]
pub struct CoordLabelMaps {
    pub w: usize,
    pub h: usize,
    pub region: Vec<usize>,
    pub sub: Vec<usize>,
    pub residual: Vec<Vec3>,
    pub mask: Vec<bool>,
}

impl CoordLabelMaps {
    pub fn len(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Reassembled coordinates; invalid cells are `None`.
    pub fn coords(&self, hier: &LabelHierarchy) -> Vec<Option<Vec3>> {
        (0..self.len())
            .map(|i| {
                self.mask[i]
                    .then(|| {
                        hier.decode(self.region[i], self.sub[i], &self.residual[i])
                            .ok()
                    })
                    .flatten()
            })
            .collect()
    }
}

/// Encodes every valid cell; invalid cells get sentinel labels and a zero
/// residual.
pub fn label_maps_from_coords(
    w: usize,
    h: usize,
    coords: &[Vec3],
    mask: &[bool],
    hier: &LabelHierarchy,
) -> Result<CoordLabelMaps, HierarchyError> {
    let n = w * h;
    if coords.len() != n || mask.len() != n {
        return Err(HierarchyError::ShapeMismatch(format!(
            "grid {w}x{h} has {n} cells but got {} coordinates and {} mask entries",
            coords.len(),
            mask.len()
        )));
    }
    let mut maps = CoordLabelMaps {
        w,
        h,
        region: vec![hier.region_sentinel(); n],
        sub: vec![hier.sub_sentinel(); n],
        residual: vec![Vec3::zeros(); n],
        mask: mask.to_vec(),
    };
    for i in 0..n {
        if mask[i] {
            let (r, s, res) = hier.encode(&coords[i]);
            maps.region[i] = r;
            maps.sub[i] = s;
            maps.residual[i] = res;
        }
    }
    Ok(maps)
}

/// Dense coordinate map with validity mask, as stored in SCMAP1 files.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordMap {
    pub w: usize,
    pub h: usize,
    pub coords: Vec<Vec3>,
    pub mask: Vec<bool>,
}

impl CoordMap {
    pub fn labels(&self, hier: &LabelHierarchy) -> Result<CoordLabelMaps, HierarchyError> {
        label_maps_from_coords(self.w, self.h, &self.coords, &self.mask, hier)
    }

    /// Little-endian: magic, u32 w, u32 h, row-major f32 triples, row-major
    /// u8 mask.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<(), HierarchyError> {
        out.write_all(SCMAP_MAGIC)?;
        out.write_all(&(self.w as u32).to_le_bytes())?;
        out.write_all(&(self.h as u32).to_le_bytes())?;
        for c in &self.coords {
            for x in c.iter() {
                out.write_all(&(*x as f32).to_le_bytes())?;
            }
        }
        let mask: Vec<u8> = self.mask.iter().map(|&m| m as u8).collect();
        out.write_all(&mask)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self, HierarchyError> {
        let mut magic = [0u8; 6];
        input.read_exact(&mut magic)?;
        if &magic != SCMAP_MAGIC {
            return Err(HierarchyError::BadFormat("missing SCMAP1 magic".into()));
        }
        let mut u = [0u8; 4];
        input.read_exact(&mut u)?;
        let w = u32::from_le_bytes(u) as usize;
        input.read_exact(&mut u)?;
        let h = u32::from_le_bytes(u) as usize;
        let n = w * h;
        let mut buf = vec![0u8; n * 12];
        input.read_exact(&mut buf)?;
        let coords = buf
            .chunks_exact(12)
            .map(|c| {
                let f =
                    |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
                Vec3::new(f(0), f(1), f(2))
            })
            .collect();
        let mut mask = vec![0u8; n];
        input.read_exact(&mut mask)?;
        if mask.iter().any(|&m| m > 1) {
            return Err(HierarchyError::BadFormat(
                "mask bytes must be 0 or 1".into(),
            ));
        }
        Ok(Self {
            w,
            h,
            coords,
            mask: mask.into_iter().map(|m| m == 1).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Uniform::new(-2.5f32, 2.5).unwrap();
        (0..n)
            .map(|_| {
                Vec3::new(
                    d.sample(&mut rng) as f64,
                    d.sample(&mut rng) as f64,
                    d.sample(&mut rng) as f64,
                )
            })
            .collect()
    }

    /// Plain Lloyd iterations from a given start, run to a fixed point.
    fn lloyd_oracle(points: &[Vec3], mut centers: Vec<Vec3>) -> Vec<Vec3> {
        loop {
            let mut sums = vec![Vec3::zeros(); centers.len()];
            let mut counts = vec![0.0; centers.len()];
            for p in points {
                let mut best = 0;
                for c in 1..centers.len() {
                    if (p - centers[c]).norm() < (p - centers[best]).norm() {
                        best = c;
                    }
                }
                sums[best] += p;
                counts[best] += 1.0;
            }
            let next: Vec<Vec3> = sums.iter().zip(&counts).map(|(s, c)| s / *c).collect();
            if next == centers {
                return centers;
            }
            centers = next;
        }
    }

    #[test]
    fn k1_uses_centroid() {
        let pts = random_points(50, 4);
        let h = LabelHierarchy::build(&pts, 1, 0).unwrap();
        let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
        assert!((h.level1_centers[0] - mean).norm() < 1e-6);
        assert!((h.level2_centers[0][0] - mean).norm() < 1e-6);
    }

    #[test]
    fn two_blobs_level1() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let j = Uniform::new(-0.01, 0.01).unwrap();
        let mut pts = Vec::new();
        for sx in [-1.0, 1.0] {
            for _ in 0..100 {
                pts.push(Vec3::new(
                    sx + j.sample(&mut rng),
                    j.sample(&mut rng),
                    j.sample(&mut rng),
                ));
            }
        }
        let h = LabelHierarchy::build(&pts, 2, 3).unwrap();
        let oracle = lloyd_oracle(
            &pts,
            vec![Vec3::new(-0.5, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0)],
        );
        for c in &h.level1_centers {
            assert!(c.y.abs() < 0.02 && c.z.abs() < 0.02 && (c.x.abs() - 1.0).abs() < 0.02);
            let o = oracle
                .iter()
                .map(|o| (o - c).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(o < 1e-6, "differs from Lloyd oracle by {o}");
        }
    }

    #[test]
    fn too_few_points() {
        let pts = random_points(15, 1);
        assert!(matches!(
            LabelHierarchy::build(&pts, 4, 0),
            Err(HierarchyError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn parent_consistency_and_distinctness() {
        for (k, seed) in [(2, 0), (3, 5), (5, 11), (8, 2)] {
            let pts = random_points(3000, seed);
            let h = LabelHierarchy::build(&pts, k, seed).unwrap();
            h.validate().unwrap();
            for (r, subs) in h.level2_centers.iter().enumerate() {
                for c in subs {
                    assert_eq!(nearest_center(c, &h.level1_centers), r);
                }
            }
        }
    }

    #[test]
    fn lloyd_objective_is_monotone() {
        let pts = random_points(2000, 8);
        for k in [3, 8, 16] {
            let res = kmeans(&pts, k, 42).unwrap();
            for w in res.objective_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn level1_assignment_is_optimal() {
        let pts = random_points(2000, 13);
        let h = LabelHierarchy::build(&pts, 6, 1).unwrap();
        for p in &pts {
            let (r, _, _) = h.encode(p);
            let dr = (p - h.level1_centers[r]).norm_squared();
            for (i, c) in h.level1_centers.iter().enumerate() {
                let d = (p - c).norm_squared();
                assert!(d > dr || (d == dr && i >= r));
            }
        }
    }

    #[test]
    fn encode_center_and_ties() {
        let pts = random_points(1000, 21);
        let h = LabelHierarchy::build(&pts, 4, 0).unwrap();
        let c = h.level2_centers[2][3];
        assert_eq!(h.encode(&c), (2, 3, Vec3::zeros()));
        let centers = [Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        assert_eq!(nearest_center(&Vec3::new(0.0, 0.7, 0.0), &centers), 0);
    }

    #[test]
    fn decode_round_trip_and_oracle() {
        let pts = random_points(2000, 17);
        let h = LabelHierarchy::build(&pts, 5, 7).unwrap();
        for p in random_points(10_000, 99) {
            let (r, s, res) = h.encode(&p);
            assert_eq!(h.decode(r, s, &res).unwrap(), p);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (r, s) = (rng.random_range(0..5), rng.random_range(0..5));
            let res = Vec3::new(rng.random(), rng.random(), rng.random());
            let c = h.level2_centers[r][s];
            let expect = Vec3::new(c.x + res.x, c.y + res.y, c.z + res.z);
            assert_eq!(h.decode(r, s, &res).unwrap(), expect);
        }
        assert_eq!(
            h.decode(0, 0, &Vec3::zeros()).unwrap(),
            h.level2_centers[0][0]
        );
        assert!(matches!(
            h.decode(5, 0, &Vec3::zeros()),
            Err(HierarchyError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn label_maps_cases() {
        let pts = random_points(1000, 3);
        let h = LabelHierarchy::build(&pts, 3, 1).unwrap();
        let coords = random_points(12, 4);
        let none = label_maps_from_coords(4, 3, &coords, &[false; 12], &h).unwrap();
        assert!(none.region.iter().all(|&r| r == 3) && none.sub.iter().all(|&s| s == 3));
        assert!(none.residual.iter().all(|r| *r == Vec3::zeros()));

        let mut one = [false; 12];
        one[5] = true;
        let m = label_maps_from_coords(4, 3, &coords, &one, &h).unwrap();
        let (r, s, res) = h.encode(&coords[5]);
        assert_eq!((m.region[5], m.sub[5], m.residual[5]), (r, s, res));
        assert_eq!(m.valid_count(), 1);

        let full = label_maps_from_coords(4, 3, &coords, &[true; 12], &h).unwrap();
        for i in 0..12 {
            assert_eq!(
                (full.region[i], full.sub[i], full.residual[i]),
                h.encode(&coords[i])
            );
            assert_eq!(full.coords(&h)[i], Some(coords[i]));
        }
        assert!(matches!(
            label_maps_from_coords(4, 4, &coords, &[true; 12], &h),
            Err(HierarchyError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn determinism_and_json() {
        let pts = random_points(4000, 6);
        let a = LabelHierarchy::build(&pts, 6, 77).unwrap();
        let b = LabelHierarchy::build(&pts, 6, 77).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = LabelHierarchy::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn combined_hierarchy_concatenates_level1() {
        let a = random_points(500, 1);
        let b: Vec<Vec3> = random_points(500, 2)
            .iter()
            .map(|p| p + Vec3::new(10.0, 0.0, 0.0))
            .collect();
        let h = LabelHierarchy::build_combined(&[&a, &b], 3, 0).unwrap();
        assert_eq!(h.num_regions(), 6);
        assert_eq!(h.level2_centers.len(), 6);
        assert!(h.level1_centers[..3].iter().all(|c| c.x < 5.0));
        assert!(h.level1_centers[3..].iter().all(|c| c.x > 5.0));
    }

    #[test]
    fn scmap_round_trip() {
        let coords = random_points(6, 8);
        let map = CoordMap {
            w: 3,
            h: 2,
            coords,
            mask: vec![true, false, true, true, false, true],
        };
        let mut buf = Vec::new();
        map.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..6], b"SCMAP1");
        assert_eq!(buf.len(), 6 + 8 + 6 * 12 + 6);
        let back = CoordMap::read_from(&mut &buf[..]).unwrap();
        assert_eq!(back, map);
        buf[0] = b'X';
        assert!(CoordMap::read_from(&mut &buf[..]).is_err());
    }
}
