//! Point clouds, rigid poses and the basic filters applied before matching.

mod io;
mod pose;

use std::collections::HashMap;
use std::fmt;

use nalgebra::Vector3;

pub use io::{read_cloud, write_cloud};
pub use pose::{normalize_angle, Pose, RotationDerivatives};

use crate::error::{Error, Result};

/// A 3D point in meters.
///
/// Coordinates are always finite; [`Point::try_new`] and the file loaders reject
/// anything else.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    /// Panics on non-finite input. Use [`Point::try_new`] for untrusted data.
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self::try_new(x, y, z).expect("point coordinates must be finite")
    }

    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() && z.is_finite() {
            Ok(Point { x, y, z })
        } else {
            Err(Error::InvalidArgument(format!(
                "non-finite point ({x}, {y}, {z})"
            )))
        }
    }

    pub const fn origin() -> Self {
        Point {
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Point {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Integer grid index of the cell containing this point, grid anchored at
    /// the world origin.
    pub fn cell_index(&self, size: f64) -> [i64; 3] {
        [
            (self.x / size).floor() as i64,
            (self.y / size).floor() as i64,
            (self.z / size).floor() as i64,
        ]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameId {
    #[default]
    Scan,
    Map,
}

impl FrameId {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameId::Scan => "scan",
            FrameId::Map => "map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: FrameId,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, frame_id: FrameId) -> Self {
        PointCloud { points, frame_id }
    }

    pub fn scan(points: Vec<Point>) -> Self {
        Self::new(points, FrameId::Scan)
    }

    pub fn map(points: Vec<Point>) -> Self {
        Self::new(points, FrameId::Map)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }
}

/// Replaces the points of each occupied `leaf`-sized cell by their centroid.
///
/// Output is ordered by ascending cell index (x, then y, then z).
pub fn voxel_filter(cloud: &PointCloud, leaf: f64) -> Result<PointCloud> {
    if !(leaf > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "voxel leaf must be positive, got {leaf}"
        )));
    }
    let mut cells: HashMap<[i64; 3], ([f64; 3], usize)> = HashMap::new();
    for p in &cloud.points {
        let acc = cells.entry(p.cell_index(leaf)).or_insert(([0.0; 3], 0));
        acc.0[0] += p.x;
        acc.0[1] += p.y;
        acc.0[2] += p.z;
        acc.1 += 1;
    }
    let mut cells: Vec<_> = cells.into_iter().collect();
    cells.sort_unstable_by_key(|(k, _)| *k);
    let points = cells
        .into_iter()
        .map(|(_, (sum, n))| {
            let n = n as f64;
            Point {
                x: sum[0] / n,
                y: sum[1] / n,
                z: sum[2] / n,
            }
        })
        .collect();
    Ok(PointCloud::new(points, cloud.frame_id))
}

/// Keeps the points within `range` of `center`, boundary included.
pub fn crop_range(cloud: &PointCloud, center: &Point, range: f64) -> Result<PointCloud> {
    if !(range > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "crop range must be positive, got {range}"
        )));
    }
    let points = cloud
        .points
        .iter()
        .filter(|p| p.distance(center) <= range)
        .copied()
        .collect();
    Ok(PointCloud::new(points, cloud.frame_id))
}

pub fn apply_pose(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    let rot = pose.rotation();
    let t = pose.translation();
    let points = cloud
        .points
        .iter()
        .map(|p| Point::from_vector(&(rot * p.to_vector() + t)))
        .collect();
    PointCloud::new(points, cloud.frame_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn random_cloud(n: usize, extent: f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::scan(
            (0..n)
                .map(|_| {
                    Point::new(
                        rng.random_range(-extent..extent),
                        rng.random_range(-extent..extent),
                        rng.random_range(-extent..extent),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn voxel_filter_empty() {
        let out = voxel_filter(&PointCloud::default(), 1.0).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn voxel_filter_rejects_bad_leaf() {
        let c = random_cloud(4, 1.0, 1);
        assert!(voxel_filter(&c, 0.0).is_err());
        assert!(voxel_filter(&c, -1.0).is_err());
        assert!(voxel_filter(&c, f64::NAN).is_err());
    }

    #[test]
    fn voxel_filter_cube_corners_to_center() {
        let mut pts = Vec::new();
        for &x in &[0.25, 0.75] {
            for &y in &[0.25, 0.75] {
                for &z in &[0.25, 0.75] {
                    pts.push(Point::new(x, y, z));
                }
            }
        }
        let out = voxel_filter(&PointCloud::scan(pts), 1.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.points[0], Point::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn voxel_filter_count_matches_occupied_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Point> = (0..1000)
            .map(|_| {
                Point::new(
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                )
            })
            .collect();
        let occupied: HashSet<(i64, i64, i64)> = pts
            .iter()
            .map(|p| (p.x.floor() as i64, p.y.floor() as i64, p.z.floor() as i64))
            .collect();
        let out = voxel_filter(&PointCloud::scan(pts), 1.0).unwrap();
        assert_eq!(out.len(), occupied.len());
        let keys: Vec<_> = out.points.iter().map(|p| p.cell_index(1.0)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn crop_boundary_inclusive() {
        let c = PointCloud::scan(vec![Point::new(3.0, 4.0, 0.0), Point::new(3.0, 4.1, 0.0)]);
        let out = crop_range(&c, &Point::origin(), 5.0).unwrap();
        assert_eq!(out.points, vec![Point::new(3.0, 4.0, 0.0)]);
    }

    #[test]
    fn crop_all_far_is_empty() {
        let c = PointCloud::scan(vec![Point::new(30.0, 0.0, 0.0), Point::new(0.0, -20.0, 0.0)]);
        assert!(crop_range(&c, &Point::origin(), 10.0).unwrap().is_empty());
        assert!(crop_range(&c, &Point::origin(), 0.0).is_err());
    }

    #[test]
    fn crop_matches_per_point_distance() {
        let c = random_cloud(2000, 20.0, 3);
        let center = Point::new(1.0, -2.0, 0.5);
        let out = crop_range(&c, &center, 10.0).unwrap();
        let expected: Vec<Point> = c
            .points
            .iter()
            .filter(|p| {
                let d2 = (p.x - 1.0).powi(2) + (p.y + 2.0).powi(2) + (p.z - 0.5).powi(2);
                d2.sqrt() <= 10.0
            })
            .copied()
            .collect();
        assert_eq!(out.points, expected);
    }

    #[test]
    fn apply_identity_and_translation() {
        let c = random_cloud(10, 5.0, 4);
        assert_eq!(apply_pose(&c, &Pose::identity()).points, c.points);
        let moved = apply_pose(
            &PointCloud::scan(vec![Point::origin()]),
            &Pose::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        );
        assert_eq!(moved.points[0], Point::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn apply_then_inverse_restores() {
        let c = random_cloud(50, 20.0, 5);
        let pose = Pose::new(3.0, -1.0, 0.4, 0.1, -0.2, 2.5);
        let back = apply_pose(&apply_pose(&c, &pose), &pose.inverse());
        for (a, b) in back.points.iter().zip(&c.points) {
            assert!(a.distance(b) < 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_cloud() -> impl Strategy<Value = Vec<Point>> {
            prop::collection::vec(
                (-30.0..30.0f64, -30.0..30.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| Point::new(x, y, z)),
                0..200,
            )
        }

        proptest! {
            #[test]
            fn crop_composes_as_min(pts in arb_cloud(), r1 in 0.5..40.0f64, r2 in 0.5..40.0f64) {
                let c = PointCloud::scan(pts);
                let center = Point::new(0.5, -0.5, 0.0);
                let twice = crop_range(&crop_range(&c, &center, r1).unwrap(), &center, r2).unwrap();
                let once = crop_range(&c, &center, r1.min(r2)).unwrap();
                prop_assert_eq!(twice, once);
            }

            #[test]
            fn apply_pose_is_isometry(
                pts in arb_cloud(),
                t in (-50.0..50.0f64, -50.0..50.0f64, -5.0..5.0f64),
                r in (-3.0..3.0f64, -1.5..1.5f64, -3.1..3.1f64),
            ) {
                let c = PointCloud::scan(pts);
                let pose = Pose::new(t.0, t.1, t.2, r.0, r.1, r.2);
                let moved = apply_pose(&c, &pose);
                for i in 0..c.len() {
                    for j in (i + 1..c.len()).step_by(7) {
                        let before = c.points[i].distance(&c.points[j]);
                        let after = moved.points[i].distance(&moved.points[j]);
                        prop_assert!((before - after).abs() < 1e-9);
                    }
                }
            }

            #[test]
            fn voxel_filter_idempotent_on_one_point_per_cell(
                cells in prop::collection::hash_set((-20i64..20, -20i64..20, -3i64..3), 0..100),
                frac in (0.05..0.95f64, 0.05..0.95f64, 0.05..0.95f64),
            ) {
                let pts: Vec<Point> = cells
                    .iter()
                    .map(|&(i, j, k)| Point::new(
                        (i as f64 + frac.0) * 0.5,
                        (j as f64 + frac.1) * 0.5,
                        (k as f64 + frac.2) * 0.5,
                    ))
                    .collect();
                let once = voxel_filter(&PointCloud::scan(pts), 0.5).unwrap();
                let twice = voxel_filter(&once, 0.5).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
