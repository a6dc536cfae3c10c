//! Synthetic street scenes and the trajectory driven through them.
//!
//! A scene is a chain of segments laid along a polyline centerline starting at
//! the origin heading +x. Geometry is sampled surfaces only: the ground plane,
//! building walls, poles (polygonal cylinder shells) and kiosks (box shells).
//! Scans are simulated by cropping the scene around a waypoint and adding
//! fresh noise; there is no occlusion model.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{crop_range, normalize_angle, Point, PointCloud, Pose};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Height of the ground plane; waypoints (the sensor) sit at z = 0.
pub const GROUND_Z: f64 = -1.5;
/// Distance from the centerline to the building line of streets.
pub const STREET_HALF_WIDTH: f64 = 6.0;
const POLE_RADIUS: f64 = 0.15;
const POLE_HEIGHT: f64 = 5.0;
const POLE_FACETS: usize = 8;
const CHAMFER: f64 = 3.0;
const KIOSK_SIZE: f64 = 2.0;
const KIOSK_HEIGHT: f64 = 3.0;
const KIOSK_SPACING: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Street between two continuous parallel facades.
    Corridor,
    /// Open square: ground out to the scene extent, a few kiosks near its rim.
    Plaza,
    /// Crossing with chamfered building corners, walls in three orientations.
    Intersection,
    /// Open road with nothing but ground and occasional poles.
    SparseRoad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub kind: SegmentKind,
    pub length: f64,
    #[serde(default = "default_wall_height")]
    pub wall_height: f64,
    /// Poles per 100 m of segment.
    #[serde(default)]
    pub pole_density: f64,
    #[serde(default = "default_point_spacing")]
    pub point_spacing: f64,
    /// Heading change at the start of the segment, degrees (left positive).
    #[serde(default)]
    pub turn_deg: f64,
}

fn default_wall_height() -> f64 {
    8.0
}

fn default_point_spacing() -> f64 {
    0.5
}

impl SegmentSpec {
    pub fn new(kind: SegmentKind, length: f64) -> Self {
        SegmentSpec {
            kind,
            length,
            wall_height: default_wall_height(),
            pole_density: 0.0,
            point_spacing: default_point_spacing(),
            turn_deg: 0.0,
        }
    }

    pub fn poles(mut self, per_100m: f64) -> Self {
        self.pole_density = per_100m;
        self
    }

    pub fn turn(mut self, deg: f64) -> Self {
        self.turn_deg = deg;
        self
    }

    pub fn spacing(mut self, spacing: f64) -> Self {
        self.point_spacing = spacing;
        self
    }

    pub fn pole_count(&self) -> usize {
        (self.pole_density * self.length / 100.0).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Lateral half-width (m) of the box around the centerline that holds all
    /// generated geometry.
    pub extent: f64,
    pub segments: Vec<SegmentSpec>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.segments.is_empty() {
            return bad("scene needs at least one segment".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.extent > STREET_HALF_WIDTH) {
            return bad(format!("extent must exceed {STREET_HALF_WIDTH} m, got {}", self.extent));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.point_spacing > 0.0) {
                return bad(format!("segment {i}: point_spacing must be > 0"));
            }
            if !(s.length > 0.0) {
                return bad(format!("segment {i}: length must be > 0"));
            }
            if !(s.wall_height >= 0.0) || !(s.pole_density >= 0.0) || !s.turn_deg.is_finite() {
                return bad(format!("segment {i}: invalid wall_height, pole_density or turn"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Start point and heading of every segment.
    pub fn segment_frames(&self) -> Vec<SegmentFrame> {
        let mut frames = Vec::with_capacity(self.segments.len());
        let mut origin = Vector2::new(0.0, 0.0);
        let mut heading = 0.0f64;
        let mut s0 = 0.0;
        for seg in &self.segments {
            heading = normalize_angle(heading + seg.turn_deg.to_radians());
            frames.push(SegmentFrame { origin, heading, arc_start: s0 });
            origin += Vector2::new(heading.cos(), heading.sin()) * seg.length;
            s0 += seg.length;
        }
        frames
    }

    /// The built-in heterogeneous street used by the benchmarks.
    pub fn default_corpus(seed: u64) -> Self {
        use SegmentKind::*;
        SceneSpec {
            extent: 30.0,
            noise_sigma: 0.05,
            seed,
            segments: vec![
                SegmentSpec::new(Intersection, 30.0),
                SegmentSpec::new(Corridor, 70.0).poles(6.0),
                SegmentSpec::new(Intersection, 30.0),
                SegmentSpec::new(Corridor, 90.0).poles(6.0),
                SegmentSpec::new(Intersection, 30.0).turn(90.0),
                SegmentSpec::new(SparseRoad, 50.0).poles(4.0),
                SegmentSpec::new(Plaza, 60.0),
                SegmentSpec::new(Intersection, 30.0).turn(-90.0),
                SegmentSpec::new(Corridor, 60.0).poles(6.0),
                SegmentSpec::new(Intersection, 30.0),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentFrame {
    pub origin: Vector2<f64>,
    pub heading: f64,
    pub arc_start: f64,
}

impl SegmentFrame {
    /// World xy of the segment-local coordinates (along, left).
    fn world(&self, along: f64, left: f64) -> Vector2<f64> {
        let (s, c) = self.heading.sin_cos();
        self.origin + Vector2::new(c * along - s * left, s * along + c * left)
    }
}

/// Collects noisy samples in a segment's local frame.
struct Sampler<'a, R: Rng> {
    frame: SegmentFrame,
    noise: Option<Normal<f64>>,
    rng: &'a mut R,
    out: &'a mut Vec<Point>,
}

impl<R: Rng> Sampler<'_, R> {
    fn push(&mut self, along: f64, left: f64, z: f64) {
        let xy = self.frame.world(along, left);
        let mut p = Point::new(xy.x, xy.y, z);
        if let Some(n) = &self.noise {
            p.x += n.sample(self.rng);
            p.y += n.sample(self.rng);
            p.z += n.sample(self.rng);
        }
        self.out.push(p);
    }

    /// Ground rectangle `along ∈ [a0, a1)`, `left ∈ [l0, l1]`.
    fn ground(&mut self, a0: f64, a1: f64, l0: f64, l1: f64, step: f64) {
        for a in steps(a0, a1, step) {
            for l in steps_inclusive(l0, l1, step) {
                self.push(a, l, GROUND_Z);
            }
        }
    }

    /// Vertical wall over the local segment from `(a0, l0)` to `(a1, l1)`.
    fn wall(&mut self, a0: f64, l0: f64, a1: f64, l1: f64, height: f64, step: f64) {
        let len = ((a1 - a0).powi(2) + (l1 - l0).powi(2)).sqrt();
        if len <= 0.0 || height <= 0.0 {
            return;
        }
        for u in steps(0.0, len, step) {
            let f = u / len;
            let (a, l) = (a0 + f * (a1 - a0), l0 + f * (l1 - l0));
            for z in steps_inclusive(GROUND_Z, GROUND_Z + height, step) {
                self.push(a, l, z);
            }
        }
    }

    fn pole(&mut self, along: f64, left: f64, step: f64) {
        for z in steps_inclusive(GROUND_Z, GROUND_Z + POLE_HEIGHT, step) {
            for k in 0..POLE_FACETS {
                let t = 2.0 * PI * k as f64 / POLE_FACETS as f64;
                self.push(along + POLE_RADIUS * t.cos(), left + POLE_RADIUS * t.sin(), z);
            }
        }
    }

    fn kiosk(&mut self, along: f64, left: f64, step: f64) {
        let h = KIOSK_SIZE / 2.0;
        let corners = [(-h, -h), (h, -h), (h, h), (-h, h), (-h, -h)];
        for w in corners.windows(2) {
            self.wall(
                along + w[0].0,
                left + w[0].1,
                along + w[1].0,
                left + w[1].1,
                KIOSK_HEIGHT,
                step,
            );
        }
    }
}

fn steps(start: f64, end: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((end - start) / step).ceil().max(0.0) as usize;
    (0..n).map(move |i| start + i as f64 * step).filter(move |v| *v < end)
}

fn steps_inclusive(start: f64, end: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((end - start) / step + 1e-9).floor().max(0.0) as usize;
    (0..=n).map(move |i| start + i as f64 * step)
}

/// Samples the whole scene. Deterministic for a fixed spec (including seed).
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let mut points = Vec::new();
    for (i, (seg, frame)) in spec.segments.iter().zip(spec.segment_frames()).enumerate() {
        let mut rng = rng::stream(spec.seed, Purpose::Scene, i as u64);
        let mut s = Sampler {
            frame,
            noise,
            rng: &mut rng,
            out: &mut points,
        };
        sample_segment(&mut s, seg, spec.extent);
    }
    Ok(PointCloud::map(points))
}

fn sample_segment<R: Rng>(s: &mut Sampler<'_, R>, seg: &SegmentSpec, extent: f64) {
    let step = seg.point_spacing;
    let len = seg.length;
    let w = STREET_HALF_WIDTH;
    let poles = seg.pole_count();
    let pole_along = |k: usize| (k as f64 + 0.5) * len / poles as f64;
    let pole_left = |k: usize| if k.is_multiple_of(2) { w - 1.0 } else { -(w - 1.0) };

    match seg.kind {
        SegmentKind::Corridor => {
            s.ground(0.0, len, -w, w, step);
            s.wall(0.0, w, len, w, seg.wall_height, step);
            s.wall(0.0, -w, len, -w, seg.wall_height, step);
            for k in 0..poles {
                s.pole(pole_along(k), pole_left(k), step);
            }
        }
        SegmentKind::SparseRoad => {
            s.ground(0.0, len, -w - 2.0, w + 2.0, step);
            for k in 0..poles {
                s.pole(pole_along(k), pole_left(k), step);
            }
        }
        SegmentKind::Plaza => {
            let half = extent;
            s.ground(0.0, len, -half, half, step);
            let rim = half - 3.0;
            for a in steps(KIOSK_SPACING / 2.0, len, KIOSK_SPACING) {
                s.kiosk(a, rim, step);
                s.kiosk(a, -rim, step);
            }
            for k in 0..poles {
                s.pole(pole_along(k), pole_left(k), step);
            }
        }
        SegmentKind::Intersection => {
            let mid = len / 2.0;
            let cross = extent.min(20.0);
            s.ground(0.0, len, -w, w, step);
            s.ground(mid - w, mid + w, w + step, cross, step);
            s.ground(mid - w, mid + w, -cross, -w - step, step);
            for side in [1.0, -1.0] {
                // facade along the main street, then chamfer, then cross street
                let before = (mid - w - CHAMFER).max(0.0);
                let after = (mid + w + CHAMFER).min(len);
                s.wall(0.0, side * w, before, side * w, seg.wall_height, step);
                s.wall(before, side * w, mid - w, side * (w + CHAMFER), seg.wall_height, step);
                s.wall(mid - w, side * (w + CHAMFER), mid - w, side * cross, seg.wall_height, step);
                s.wall(mid + w, side * (w + CHAMFER), mid + w, side * cross, seg.wall_height, step);
                s.wall(mid + w, side * (w + CHAMFER), after, side * w, seg.wall_height, step);
                s.wall(after, side * w, len, side * w, seg.wall_height, step);
            }
            for k in 0..poles {
                s.pole(pole_along(k), pole_left(k), step);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Point,
    pub yaw: f64,
}

impl Waypoint {
    /// True sensor pose at this waypoint.
    pub fn pose(&self) -> Pose {
        Pose::new(self.position.x, self.position.y, self.position.z, 0.0, 0.0, self.yaw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    pub spacing: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

/// Waypoints at every multiple of `spacing` along the centerline, heading
/// along the local tangent. The sensor height is z = 0.
pub fn make_trajectory(spec: &SceneSpec, spacing: f64) -> Result<Trajectory> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing must be > 0, got {spacing}")));
    }
    spec.validate()?;
    let total = spec.total_length();
    let frames = spec.segment_frames();
    let count = (total / spacing + 1e-9).floor() as usize + 1;
    let waypoints = (0..count)
        .map(|i| {
            let arc = i as f64 * spacing;
            // the segment whose half-open span [start, end) holds arc; the end
            // point belongs to the last segment
            let k = frames
                .iter()
                .rposition(|f| f.arc_start <= arc + 1e-9)
                .unwrap_or(0);
            let f = frames[k];
            let xy = f.world(arc - f.arc_start, 0.0);
            Waypoint {
                position: Point::new(xy.x, xy.y, 0.0),
                yaw: f.heading,
            }
        })
        .collect();
    Ok(Trajectory { waypoints, spacing })
}

/// Scan seen from `waypoint`: scene points within `max_range`, perturbed with
/// independent noise, expressed in the sensor frame.
pub fn simulate_scan(
    scene: &PointCloud,
    waypoint: &Waypoint,
    max_range: f64,
    noise_sigma: f64,
    seed: u64,
    waypoint_id: usize,
) -> Result<PointCloud> {
    let mut local = crop_range(scene, &waypoint.position, max_range)?;
    if noise_sigma > 0.0 {
        let n = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = rng::stream(seed, Purpose::Scan, waypoint_id as u64);
        for p in &mut local.points {
            p.x += n.sample(&mut rng);
            p.y += n.sample(&mut rng);
            p.z += n.sample(&mut rng);
        }
    }
    let mut scan = crate::cloud::apply_pose(&local, &waypoint.pose().inverse());
    scan.frame_id = crate::cloud::FrameId::Scan;
    Ok(scan)
}

/// Trajectory CSV: `waypoint_id,x,y,z,yaw`.
pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!("# spacing={}\nwaypoint_id,x,y,z,yaw\n", traj.spacing);
    for (i, w) in traj.waypoints.iter().enumerate() {
        text.push_str(&format!(
            "{i},{},{},{},{}\n",
            w.position.x, w.position.y, w.position.z, w.yaw
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut spacing = 0.0;
    let mut waypoints = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(c) = line.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("spacing=") {
                spacing = v.parse().map_err(|_| Error::parse(path, i + 1, "bad spacing"))?;
            }
            continue;
        }
        if line.is_empty() || line.starts_with("waypoint_id") {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, i + 1, "bad number"))?;
        if f.len() != 5 {
            return Err(Error::parse(path, i + 1, "expected 5 fields"));
        }
        if f[0] as usize != waypoints.len() {
            return Err(Error::parse(path, i + 1, "waypoint ids must be consecutive from 0"));
        }
        let position = Point::try_new(f[1], f[2], f[3]).map_err(|_| Error::parse(path, i + 1, "non-finite"))?;
        waypoints.push(Waypoint { position, yaw: f[4] });
    }
    Ok(Trajectory { waypoints, spacing })
}
