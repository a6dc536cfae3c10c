//! ASCII cloud files: one `x y z` triple per line, `#` starts a comment line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{FrameId, Point, PointCloud};
use crate::error::{Error, Result};

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut frame_id = FrameId::Scan;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if comment.contains("frame=map") {
                frame_id = FrameId::Map;
            }
            continue;
        }
        let mut coords = [0.0f64; 3];
        let mut tokens = line.split_whitespace();
        for c in coords.iter_mut() {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::parse(path, line_no, "expected 3 coordinates"))?;
            *c = tok
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("not a number: `{tok}`")))?;
        }
        if tokens.next().is_some() {
            return Err(Error::parse(path, line_no, "more than 3 coordinates"));
        }
        let p = Point::try_new(coords[0], coords[1], coords[2])
            .map_err(|_| Error::parse(path, line_no, "non-finite coordinate"))?;
        points.push(p);
    }
    Ok(PointCloud::new(points, frame_id))
}

/// Coordinates are written with 9 significant digits.
pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# rangeloc cloud v1 frame={}", cloud.frame_id.as_str())?;
        for p in &cloud.points {
            writeln!(w, "{:.8e} {:.8e} {:.8e}", p.x, p.y, p.z)?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}
