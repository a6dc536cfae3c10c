#![allow(dead_code)]

use nalgebra::{Rotation3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rangeloc::cloud::{Point, PointCloud, Pose};
use rangeloc::factors::FactorConfig;
use rangeloc::forest::{ForestModel, ForestParams};
use rangeloc::harness::{dataset_from_reports, planar_offsets, sweep_ranges, train_models, EvalConfig, Scenario};
use rangeloc::scene::{generate_scene, make_trajectory, SceneSpec, SegmentKind, SegmentSpec};
use rangeloc::forest::Node;
use rangeloc::ndt::{build_ndt_map, NdtMap};

/// Parallelogram `origin + s·u + t·v`, `s, t ∈ [0, 1]`.
#[derive(Clone, Copy)]
pub struct Patch {
    pub origin: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl Patch {
    fn area(&self) -> f64 {
        self.u.cross(&self.v).norm()
    }

    fn at(&self, s: f64, t: f64) -> Vector3<f64> {
        self.origin + self.u * s + self.v * t
    }
}

pub struct SmallScene {
    pub map: NdtMap,
    /// ~300 noisy points in the sensor frame.
    pub scan: PointCloud,
    pub truth: Pose,
}

fn box_faces(center: Vector3<f64>, half: f64, height: f64) -> Vec<Patch> {
    let z = Vector3::new(0.0, 0.0, height);
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    (0..4)
        .map(|k| {
            let (a, b) = (corners[k], corners[(k + 1) % 4]);
            let p = center + Vector3::new(a.0 * half, a.1 * half, 0.0);
            let q = center + Vector3::new(b.0 * half, b.1 * half, 0.0);
            Patch { origin: p, u: q - p, v: z }
        })
        .collect()
}

/// Ground square, three walls and up to eight boxy posts around the origin;
/// the map is a dense grid sampling, the scan 150 ground plus 150 structure
/// points drawn at random and seen from a random pose near the origin. Both
/// carry 5 cm noise like the street corpus.
pub fn small_scene(seed: u64) -> SmallScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground_z = -1.5;
    let ground = Patch {
        origin: Vector3::new(-9.0, -9.0, ground_z),
        u: Vector3::new(18.0, 0.0, 0.0),
        v: Vector3::new(0.0, 18.0, 0.0),
    };
    let mut structure = Vec::new();
    let base_az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for k in 0..3 {
        let az = base_az + k as f64 * 2.1 + rng.random_range(-0.3..0.3);
        let dist = rng.random_range(4.0..7.0);
        let heading = az + std::f64::consts::FRAC_PI_2 + rng.random_range(-0.4..0.4);
        let len = rng.random_range(5.0..9.0);
        let dir = Vector3::new(heading.cos(), heading.sin(), 0.0);
        let c = Vector3::new(dist * az.cos(), dist * az.sin(), ground_z);
        structure.push(Patch {
            origin: c - dir * (len / 2.0),
            u: dir * len,
            v: Vector3::new(0.0, 0.0, 3.0),
        });
    }
    for _ in 0..8 {
        let c = Vector3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), ground_z);
        if c.xy().norm() < 2.0 {
            continue;
        }
        structure.extend(box_faces(c, 0.25, 3.0));
    }
    let map_noise = Normal::new(0.0, 0.05).unwrap();
    let mut map_pts = Vec::new();
    for p in std::iter::once(&ground).chain(&structure) {
        let ns = (p.u.norm() / 0.15).ceil() as usize;
        let nt = (p.v.norm() / 0.15).ceil() as usize;
        for i in 0..=ns {
            for j in 0..=nt {
                let w = p.at(i as f64 / ns as f64, j as f64 / nt as f64);
                map_pts.push(Point::new(
                    w.x + map_noise.sample(&mut rng),
                    w.y + map_noise.sample(&mut rng),
                    w.z + map_noise.sample(&mut rng),
                ));
            }
        }
    }
    let map = build_ndt_map(&PointCloud::map(map_pts), 1.0).unwrap();

    let truth = Pose::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        0.0,
        0.0,
        0.0,
        rng.random_range(-0.3..0.3),
    );
    let scan_noise = Normal::new(0.0, 0.05).unwrap();
    let total_area: f64 = structure.iter().map(Patch::area).sum();
    let inv = truth.inverse();
    let mut scan_pts = Vec::new();
    for k in 0..300 {
        let w = if k < 150 {
            ground.at(rng.random(), rng.random())
        } else {
            let mut pick = rng.random_range(0.0..total_area);
            let patch = structure
                .iter()
                .find(|p| {
                    pick -= p.area();
                    pick <= 0.0
                })
                .unwrap_or(structure.last().unwrap());
            patch.at(rng.random(), rng.random())
        };
        let noisy = Point::new(
            w.x + scan_noise.sample(&mut rng),
            w.y + scan_noise.sample(&mut rng),
            w.z + scan_noise.sample(&mut rng),
        );
        scan_pts.push(inv.transform(&noisy));
    }
    SmallScene {
        map,
        scan: PointCloud::scan(scan_pts),
        truth,
    }
}

/// Rz(yaw)·Ry(pitch)·Rx(roll) and translation from a pose vector.
pub fn rigid(v: &Vector6<f64>) -> (Rotation3<f64>, Vector3<f64>) {
    (Rotation3::from_euler_angles(v[3], v[4], v[5]), Vector3::new(v[0], v[1], v[2]))
}

/// Score with every point's cell fixed at `base`, so it is smooth in the
/// pose and can be differentiated numerically.
pub fn fixed_assignment_score(map: &NdtMap, scan: &PointCloud, base: &Vector6<f64>) -> impl Fn(&Vector6<f64>) -> f64 {
    let (r, t) = rigid(base);
    let assigned: Vec<(Vector3<f64>, Vector3<f64>, nalgebra::Matrix3<f64>)> = scan
        .points
        .iter()
        .filter_map(|p| {
            let x = p.to_vector();
            let w = r * x + t;
            map.cell_at(&Point::from_vector(&w))
                .map(|c| (x, c.mean.to_vector(), c.inverse_covariance))
        })
        .collect();
    move |v: &Vector6<f64>| {
        let (r, t) = rigid(v);
        assigned
            .iter()
            .map(|(x, mean, icov)| {
                let d = r * x + t - mean;
                (-0.5 * d.dot(&(icov * d))).exp()
            })
            .sum()
    }
}

pub fn central_difference(f: impl Fn(&Vector6<f64>) -> f64, at: &Vector6<f64>, h: f64) -> Vector6<f64> {
    Vector6::from_fn(|k, _| {
        let mut a = *at;
        let mut b = *at;
        a[k] += h;
        b[k] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

/// Best planar pose on a grid around `center`: x and y over ±`half` with
/// `step`, yaw over ±`yaw_half` with `yaw_step` (radians); z, roll and pitch
/// stay at the center's values.
pub fn pose_grid_optimum(map: &NdtMap, scan: &PointCloud, center: &Pose, half: f64, step: f64, yaw_half: f64, yaw_step: f64) -> Pose {
    let n = (2.0 * half / step).round() as i64;
    let ny = (2.0 * yaw_half / yaw_step).round() as i64;
    let mut best = (f64::NEG_INFINITY, *center);
    for iy in 0..=ny {
        let yaw = center.yaw - yaw_half + iy as f64 * yaw_step;
        let rot = Rotation3::from_euler_angles(center.roll, center.pitch, yaw);
        let rotated: Vec<Vector3<f64>> = scan.points.iter().map(|p| rot * p.to_vector()).collect();
        for ix in 0..=n {
            for jx in 0..=n {
                let t = Vector3::new(
                    center.tx - half + ix as f64 * step,
                    center.ty - half + jx as f64 * step,
                    center.tz,
                );
                let mut s = 0.0;
                for q in &rotated {
                    let w = q + t;
                    if let Some(c) = map.cell_at(&Point::from_vector(&w)) {
                        let d = w - c.mean.to_vector();
                        s += (-0.5 * d.dot(&(c.inverse_covariance * d))).exp();
                    }
                }
                if s > best.0 {
                    best = (s, Pose::new(t.x, t.y, t.z, center.roll, center.pitch, yaw));
                }
            }
        }
    }
    best.1
}

/// Exhaustive CART on integer targets with exact rational comparisons.
/// Splits go to the lowest total squared error; ties keep the lower feature
/// index, then the lower threshold. Output is a preorder node list.
pub fn exhaustive_tree(x: &[Vec<f64>], y: &[i64], max_depth: usize, min_leaf: usize) -> Vec<Node> {
    let mut nodes = Vec::new();
    grow(x, y, (0..y.len()).collect(), 0, max_depth, min_leaf, &mut nodes);
    nodes
}

/// `n·Σy² − (Σy)²`, i.e. n times the squared error about the mean.
fn scaled_sse(y: &[i64], rows: &[usize]) -> i128 {
    let n = rows.len() as i128;
    let s: i128 = rows.iter().map(|&i| y[i] as i128).sum();
    let q: i128 = rows.iter().map(|&i| (y[i] as i128).pow(2)).sum();
    n * q - s * s
}

fn grow(x: &[Vec<f64>], y: &[i64], rows: Vec<usize>, depth: usize, max_depth: usize, min_leaf: usize, out: &mut Vec<Node>) {
    let n = rows.len();
    let leaf = Node::Leaf {
        value: {
            let s: i64 = rows.iter().map(|&i| y[i]).sum();
            (s as f64 / n as f64).clamp(
                rows.iter().map(|&i| y[i]).min().unwrap() as f64,
                rows.iter().map(|&i| y[i]).max().unwrap() as f64,
            )
        },
        count: n,
    };
    let constant = rows.iter().all(|&i| y[i] == y[rows[0]]);
    if depth >= max_depth || n < 2 * min_leaf || constant {
        out.push(leaf);
        return;
    }
    // SSE as the fraction num/den; parent is scaled_sse/n.
    let mut best: Option<(i128, i128, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= thr);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let (nl, nr) = (l.len() as i128, r.len() as i128);
            let num = scaled_sse(y, &l) * nr + scaled_sse(y, &r) * nl;
            let den = nl * nr;
            let better = match best {
                None => true,
                Some((bn, bd, _, _)) => num * bd < bn * den,
            };
            if better {
                best = Some((num, den, f, thr));
            }
        }
    }
    let parent = (scaled_sse(y, &rows), n as i128);
    match best {
        Some((num, den, f, thr)) if num * parent.1 < parent.0 * den => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= thr);
            let at = out.len();
            out.push(Node::Split { feature: f, threshold: thr, right: 0 });
            grow(x, y, l, depth + 1, max_depth, min_leaf, out);
            let right_at = out.len();
            if let Node::Split { right, .. } = &mut out[at] {
                *right = right_at;
            }
            grow(x, y, r, depth + 1, max_depth, min_leaf, out);
        }
        _ => out.push(leaf),
    }
}

/// Every factor invariant at one center over ascending `ranges`; returns
/// one message per violation.
pub fn factor_violations(map: &NdtMap, center: &Point, ranges: &[f64], cfg: &rangeloc::factors::FactorConfig) -> Vec<String> {
    use rangeloc::factors::*;
    let mut bad = Vec::new();
    let mut last_count = 0;
    let max_ne = (cfg.normal_bins as f64).log2() + 1e-12;
    let max_se = (cfg.shifts.shifts().len() as f64).log2() + 1e-12;
    for &r in ranges {
        let vic = extract_vicinity(map, center, r);
        for c in &vic.cells {
            let d = dimension_behavior(c);
            if (d.a1d + d.a2d + d.a3d - 1.0).abs() > 1e-9 {
                bad.push(format!("cell at {}: components sum to {}", c.mean, d.a1d + d.a2d + d.a3d));
            }
            for a in [d.a1d, d.a2d, d.a3d] {
                if !(0.0..=1.0).contains(&a) {
                    bad.push(format!("cell at {}: component {a} outside [0, 1]", c.mean));
                }
            }
        }
        let census = dimension_census(&vic);
        let rsum: f64 = census.ratios.iter().sum();
        if !vic.is_empty() && (rsum - 1.0).abs() > 1e-9 {
            bad.push(format!("R={r}: ratios sum to {rsum}"));
        }
        let fv = factor_vector(map, center, r, cfg).unwrap();
        if !(0.0..=1.0).contains(&fv.occupancy_ratio) {
            bad.push(format!("R={r}: occupancy {}", fv.occupancy_ratio));
        }
        if !(0.0..=max_ne).contains(&fv.normal_entropy) {
            bad.push(format!("R={r}: normal entropy {}", fv.normal_entropy));
        }
        if !(0.0..=max_se).contains(&fv.score_entropy) {
            bad.push(format!("R={r}: score entropy {}", fv.score_entropy));
        }
        if let Some(ra) = fv.r_average {
            if ra > r {
                bad.push(format!("R={r}: r_average {ra}"));
            }
        } else if fv.feature_count > 0 {
            bad.push(format!("R={r}: r_average missing with {} features", fv.feature_count));
        }
        if fv.feature_count < last_count {
            bad.push(format!("R={r}: feature_count fell from {last_count} to {}", fv.feature_count));
        }
        last_count = fv.feature_count;
    }
    bad
}

/// Intersection, corridor and plaza with a swept, trained error model per
/// range (10, 20, 30 m).
pub fn small_street() -> (Scenario, EvalConfig, Vec<ForestModel>) {
    let spec = SceneSpec {
        extent: 20.0,
        segments: vec![
            SegmentSpec::new(SegmentKind::Intersection, 30.0),
            SegmentSpec::new(SegmentKind::Corridor, 40.0).poles(5.0),
            SegmentSpec::new(SegmentKind::Plaza, 30.0),
        ],
        noise_sigma: 0.05,
        seed: 9,
    };
    let scene = generate_scene(&spec).unwrap();
    let sc = Scenario {
        map: build_ndt_map(&scene, 1.0).unwrap(),
        trajectory: make_trajectory(&spec, 10.0).unwrap(),
        scene,
        noise_sigma: spec.noise_sigma,
    };
    let cfg = EvalConfig {
        offsets: planar_offsets(0.5, 4),
        candidate_ranges: vec![10.0, 20.0, 30.0],
        gt_range: 40.0,
        seed: 9,
        ..EvalConfig::default()
    };
    let reports = sweep_ranges(&sc, &cfg, &FactorConfig::default()).unwrap();
    let params = ForestParams { n_trees: 20, min_leaf: 1, seed: 9, ..Default::default() };
    let models = train_models(&dataset_from_reports(&reports), &cfg.candidate_ranges, &params).unwrap();
    (sc, cfg, models)
}


/// Run configuration for quick end-to-end CLI runs.
pub const SMALL_CONFIG: &str = r#"
seed = 5
waypoint_spacing = 15.0

[eval]
candidate_ranges = [10, 20, 30]
gt_range = 40
offset_radius = 0.3
offset_count = 4

[forest]
n_trees = 10
holdout_fraction = 0.25

[scene]
extent = 20
noise_sigma = 0.05

[[scene.segments]]
kind = "intersection"
length = 30
pole_density = 10

[[scene.segments]]
kind = "corridor"
length = 30
pole_density = 5
"#;

pub const PIPELINE: [&[&str]; 8] = [
    &["scene"],
    &["build-map"],
    &["factors"],
    &["sweep"],
    &["train"],
    &["plan"],
    &["compare"],
    &["report"],
];

/// Runs the `rangeloc` binary with `args` plus the config and output directory.
pub fn rangeloc(config: &std::path::Path, out: &std::path::Path, args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_rangeloc"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("rangeloc runs")
}
