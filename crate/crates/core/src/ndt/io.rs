//! Text NDT map files: a header carrying the cell size, then one line per cell
//! `ix iy iz count mx my mz cxx cxy cxz cyy cyz czz`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Matrix3;

use super::{NdCell, NdtMap};
use crate::cloud::Point;
use crate::error::{Error, Result};

const HEADER: &str = "# rangeloc ndt v1";

pub fn write_ndt_map(path: impl AsRef<Path>, map: &NdtMap) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{HEADER} cell_size={}", map.cell_size())?;
        for (idx, c) in map.iter() {
            let m = &c.covariance;
            writeln!(
                w,
                "{} {} {} {} {} {} {} {} {} {} {} {} {}",
                idx[0],
                idx[1],
                idx[2],
                c.point_count,
                c.mean.x,
                c.mean.y,
                c.mean.z,
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 2)]
            )?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

pub fn read_ndt_map(path: impl AsRef<Path>) -> Result<NdtMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let cell_size = match lines.next() {
        Some((_, h)) if h.starts_with(HEADER) => h
            .split_whitespace()
            .find_map(|t| t.strip_prefix("cell_size="))
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::parse(path, 1, "header lacks cell_size"))?,
        _ => return Err(Error::parse(path, 1, "missing ndt header")),
    };
    let mut cells = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 13 {
            return Err(Error::parse(path, line_no, format!("expected 13 fields, got {}", tok.len())));
        }
        let int = |k: usize| {
            tok[k]
                .parse::<i64>()
                .map_err(|_| Error::parse(path, line_no, format!("bad integer `{}`", tok[k])))
        };
        let real = |k: usize| {
            tok[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line_no, format!("bad number `{}`", tok[k])))
        };
        let idx = [int(0)?, int(1)?, int(2)?];
        let count = int(3)? as usize;
        let mean = Point::new(real(4)?, real(5)?, real(6)?);
        let (xx, xy, xz, yy, yz, zz) = (real(7)?, real(8)?, real(9)?, real(10)?, real(11)?, real(12)?);
        let cov = Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz);
        cells.push((idx, NdCell::from_regularized(mean, cov, count)));
    }
    NdtMap::from_cells(cell_size, cells)
}
