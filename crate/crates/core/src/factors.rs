//! Map factors describing how well a local vicinity of the NDT map supports
//! localization: feature counts, dimension census, depth-image occupancy,
//! normal-direction entropy, mean feature distance and self-registration
//! score entropy.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::{Point, PointCloud, Pose};
use crate::error::{Error, Result};
use crate::ndt::{ndt_score, CellIndex, NdCell, NdtMap};

/// NDs of the map whose mean lies within `range` of `center`.
#[derive(Debug, Clone)]
pub struct LocalVicinity {
    pub center: Point,
    pub range: f64,
    pub indices: Vec<CellIndex>,
    pub cells: Vec<NdCell>,
}

impl LocalVicinity {
    pub fn feature_count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn extract_vicinity(map: &NdtMap, center: &Point, range: f64) -> LocalVicinity {
    let (indices, cells) = map
        .iter()
        .filter(|(_, c)| c.mean.distance(center) <= range)
        .map(|(k, c)| (*k, c.clone()))
        .unzip();
    LocalVicinity {
        center: *center,
        range,
        indices,
        cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    D1,
    D2,
    D3,
}

/// Line-, plane- and blob-likeness of a cell from its eigen spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionBehavior {
    pub a1d: f64,
    pub a2d: f64,
    pub a3d: f64,
    pub klass: Dimension,
}

pub fn dimension_behavior(cell: &NdCell) -> DimensionBehavior {
    dimension_from_sigmas(cell.eigen_sigmas)
}

/// `a1 = (σ1−σ2)/σ1`, `a2 = (σ2−σ3)/σ1`, `a3 = σ3/σ1` with σ descending.
/// The class is the largest component; ties go to the higher dimension.
pub fn dimension_from_sigmas(sigmas: [f64; 3]) -> DimensionBehavior {
    let [s1, s2, s3] = sigmas;
    let a1d = (s1 - s2) / s1;
    let a2d = (s2 - s3) / s1;
    let a3d = s3 / s1;
    let klass = if a3d >= a2d && a3d >= a1d {
        Dimension::D3
    } else if a2d >= a1d {
        Dimension::D2
    } else {
        Dimension::D1
    };
    DimensionBehavior { a1d, a2d, a3d, klass }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DimensionCensus {
    pub counts: [usize; 3],
    pub ratios: [f64; 3],
}

pub fn dimension_census(vicinity: &LocalVicinity) -> DimensionCensus {
    let mut counts = [0usize; 3];
    for c in &vicinity.cells {
        counts[dimension_behavior(c).klass as usize] += 1;
    }
    let total = vicinity.feature_count();
    let ratios = if total == 0 {
        [0.0; 3]
    } else {
        counts.map(|c| c as f64 / total as f64)
    };
    DimensionCensus { counts, ratios }
}

/// Spherical depth image around the vicinity center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSpec {
    pub azimuth_bins: usize,
    pub elevation_bins: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        ImageSpec {
            azimuth_bins: 180,
            elevation_bins: 20,
            min_elevation_deg: -10.0,
            max_elevation_deg: 30.0,
        }
    }
}

impl ImageSpec {
    /// Pixel hit by the direction from `center` to `p`, if inside the field of view.
    pub fn pixel(&self, center: &Point, p: &Point) -> Option<(usize, usize)> {
        let (dx, dy, dz) = (p.x - center.x, p.y - center.y, p.z - center.z);
        let az = dy.atan2(dx);
        let el = dz.atan2(dx.hypot(dy)).to_degrees();
        if el < self.min_elevation_deg || el > self.max_elevation_deg {
            return None;
        }
        let col = (((az + PI) / (2.0 * PI)) * self.azimuth_bins as f64).floor() as usize;
        let span = self.max_elevation_deg - self.min_elevation_deg;
        let row = (((el - self.min_elevation_deg) / span) * self.elevation_bins as f64).floor() as usize;
        Some((col.min(self.azimuth_bins - 1), row.min(self.elevation_bins - 1)))
    }
}

/// Fraction of depth-image pixels hit by at least one cell mean.
pub fn occupancy_ratio(vicinity: &LocalVicinity, image: &ImageSpec) -> f64 {
    let total = image.azimuth_bins * image.elevation_bins;
    if total == 0 || vicinity.is_empty() {
        return 0.0;
    }
    let mut occupied = vec![false; total];
    for c in &vicinity.cells {
        if let Some((col, row)) = image.pixel(&vicinity.center, &c.mean) {
            occupied[row * image.azimuth_bins + col] = true;
        }
    }
    occupied.iter().filter(|o| **o).count() as f64 / total as f64
}

/// Normals steeper than this (|n_z|) have no meaningful azimuth and are skipped.
pub const MAX_NORMAL_VERTICAL: f64 = 0.866;

/// Shannon entropy (bits) of the folded azimuth histogram of plane-like cell
/// normals. Zero when no plane-like cell has a usable normal.
pub fn normal_entropy(vicinity: &LocalVicinity, bins: usize) -> f64 {
    let bins = bins.max(1);
    let mut hist = vec![0usize; bins];
    for c in &vicinity.cells {
        if dimension_behavior(c).klass != Dimension::D2 {
            continue;
        }
        let n = c.normal();
        if n.z.abs() > MAX_NORMAL_VERTICAL {
            continue;
        }
        let folded = n.y.atan2(n.x).rem_euclid(PI);
        let b = ((folded / PI) * bins as f64).floor() as usize;
        hist[b.min(bins - 1)] += 1;
    }
    entropy_bits(&hist.iter().map(|&h| h as f64).collect::<Vec<_>>())
}

/// `−Σ p log2 p` over the normalized nonzero masses.
pub fn entropy_bits(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let h: f64 = masses
        .iter()
        .filter(|m| **m > 0.0)
        .map(|m| {
            let p = m / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Mean distance from the center to the cell means.
pub fn r_average(vicinity: &LocalVicinity) -> Result<f64> {
    if vicinity.is_empty() {
        return Err(Error::UndefinedFactor("r_average"));
    }
    let sum: f64 = vicinity.cells.iter().map(|c| c.mean.distance(&vicinity.center)).sum();
    Ok(sum / vicinity.feature_count() as f64)
}

/// Square grid of planar shifts `{-half, ..., half}²` with the given step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSpec {
    pub half_extent: f64,
    pub step: f64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            half_extent: 1.0,
            step: 0.2,
        }
    }
}

impl ShiftSpec {
    pub fn per_axis(&self) -> usize {
        (2.0 * self.half_extent / self.step).round() as usize + 1
    }

    pub fn shifts(&self) -> Vec<(f64, f64)> {
        let n = self.per_axis();
        let at = |i: usize| -self.half_extent + i as f64 * self.step;
        (0..n).flat_map(|i| (0..n).map(move |j| (at(i), at(j)))).collect()
    }
}

/// Mean plus the ±σ points along the two widest axes of every cell.
pub fn sigma_point_scan(cells: &[NdCell]) -> PointCloud {
    let mut pts = Vec::with_capacity(cells.len() * 5);
    for c in cells {
        let m = c.mean.to_vector();
        pts.push(c.mean);
        for k in 0..2 {
            let offset = c.eigen_axes[k] * c.eigen_sigmas[k];
            pts.push(Point::from_vector(&(m + offset)));
            pts.push(Point::from_vector(&(m - offset)));
        }
    }
    PointCloud::scan(pts)
}

/// Self-registration scores of the vicinity over the shift grid.
pub fn self_match_scores(map: &NdtMap, center: &Point, range: f64, shifts: &ShiftSpec) -> Vec<f64> {
    let sub = map.filtered(|c| c.mean.distance(center) <= range);
    let scan = sigma_point_scan(sub.cells());
    shifts
        .shifts()
        .into_iter()
        .map(|(x, y)| ndt_score(&sub, &scan, &Pose::shift(x, y)))
        .collect()
}

/// Entropy (bits) of the self-registration scores normalized into a
/// distribution over the shift grid; uniform when every score is zero.
pub fn score_entropy(map: &NdtMap, center: &Point, range: f64, shifts: &ShiftSpec) -> f64 {
    let scores = self_match_scores(map, center, range, shifts);
    if scores.iter().all(|s| *s == 0.0) {
        return (scores.len() as f64).log2();
    }
    entropy_bits(&scores)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorConfig {
    pub image: ImageSpec,
    pub normal_bins: usize,
    pub shifts: ShiftSpec,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            image: ImageSpec::default(),
            normal_bins: 18,
            shifts: ShiftSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorVector {
    pub range: f64,
    pub feature_count: usize,
    pub d1_count: usize,
    pub d2_count: usize,
    pub d3_count: usize,
    pub d1_ratio: f64,
    pub d2_ratio: f64,
    pub d3_ratio: f64,
    pub occupancy_ratio: f64,
    pub normal_entropy: f64,
    /// `None` when the vicinity is empty.
    pub r_average: Option<f64>,
    pub score_entropy: f64,
}

impl FactorVector {
    pub const COLUMNS: [&'static str; 11] = [
        "feature_count",
        "d1_count",
        "d2_count",
        "d3_count",
        "d1_ratio",
        "d2_ratio",
        "d3_ratio",
        "occupancy_ratio",
        "normal_entropy",
        "r_average",
        "score_entropy",
    ];

    /// Values in [`FactorVector::COLUMNS`] order; missing values are `None`.
    pub fn values(&self) -> [Option<f64>; 11] {
        [
            Some(self.feature_count as f64),
            Some(self.d1_count as f64),
            Some(self.d2_count as f64),
            Some(self.d3_count as f64),
            Some(self.d1_ratio),
            Some(self.d2_ratio),
            Some(self.d3_ratio),
            Some(self.occupancy_ratio),
            Some(self.normal_entropy),
            self.r_average,
            Some(self.score_entropy),
        ]
    }

    pub fn from_values(range: f64, v: &[Option<f64>]) -> Result<Self> {
        if v.len() != Self::COLUMNS.len() {
            return Err(Error::FeatureMismatch {
                expected: Self::COLUMNS.len(),
                got: v.len(),
            });
        }
        let req = |k: usize| v[k].ok_or_else(|| Error::Mismatch(format!("missing `{}`", Self::COLUMNS[k])));
        Ok(FactorVector {
            range,
            feature_count: req(0)? as usize,
            d1_count: req(1)? as usize,
            d2_count: req(2)? as usize,
            d3_count: req(3)? as usize,
            d1_ratio: req(4)?,
            d2_ratio: req(5)?,
            d3_ratio: req(6)?,
            occupancy_ratio: req(7)?,
            normal_entropy: req(8)?,
            r_average: v[9],
            score_entropy: req(10)?,
        })
    }
}

pub fn factor_vector(map: &NdtMap, center: &Point, range: f64, config: &FactorConfig) -> Result<FactorVector> {
    if !(range > 0.0) {
        return Err(Error::InvalidArgument(format!("range must be > 0, got {range}")));
    }
    let vicinity = extract_vicinity(map, center, range);
    let census = dimension_census(&vicinity);
    let r_avg = match r_average(&vicinity) {
        Ok(r) => Some(r),
        Err(Error::UndefinedFactor(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FactorVector {
        range,
        feature_count: vicinity.feature_count(),
        d1_count: census.counts[0],
        d2_count: census.counts[1],
        d3_count: census.counts[2],
        d1_ratio: census.ratios[0],
        d2_ratio: census.ratios[1],
        d3_ratio: census.ratios[2],
        occupancy_ratio: occupancy_ratio(&vicinity, &config.image),
        normal_entropy: normal_entropy(&vicinity, config.normal_bins),
        r_average: r_avg,
        score_entropy: score_entropy(map, center, range, &config.shifts),
    })
}

/// One factor CSV row: the waypoint the vector was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorRow {
    pub waypoint_id: usize,
    pub factors: FactorVector,
}

pub const FACTORS_HEADER: &str = "# rangeloc factors v1";

pub fn write_factor_csv(path: impl AsRef<Path>, rows: &[FactorRow]) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!("{FACTORS_HEADER}\nwaypoint_id,range,{}\n", FactorVector::COLUMNS.join(","));
    for row in rows {
        write!(text, "{},{}", row.waypoint_id, row.factors.range).unwrap();
        for v in row.factors.values() {
            match v {
                Some(x) => write!(text, ",{x}").unwrap(),
                None => text.push(','),
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_factor_csv(path: impl AsRef<Path>) -> Result<Vec<FactorRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("waypoint_id") {
            continue;
        }
        let tok: Vec<&str> = line.split(',').collect();
        if tok.len() != 2 + FactorVector::COLUMNS.len() {
            return Err(Error::parse(path, i + 1, format!("expected {} fields", 2 + FactorVector::COLUMNS.len())));
        }
        let bad = |t: &str| Error::parse(path, i + 1, format!("bad value `{t}`"));
        let waypoint_id = tok[0].parse().map_err(|_| bad(tok[0]))?;
        let range: f64 = tok[1].parse().map_err(|_| bad(tok[1]))?;
        let values = tok[2..]
            .iter()
            .map(|t| if t.is_empty() { Ok(None) } else { t.parse().map(Some).map_err(|_| bad(t)) })
            .collect::<Result<Vec<_>>>()?;
        let factors = FactorVector::from_values(range, &values).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        rows.push(FactorRow { waypoint_id, factors });
    }
    Ok(rows)
}
