//! Single-channel Portable Float Map. Rows are stored bottom to top; a negative scale
//! marks little-endian samples. Only little-endian is written.
use std::path::Path;

use mono4d_core::corr::FlowField;
use mono4d_core::{DepthMap, Grid};

use super::{payload, read_bytes, write_bytes, HeaderReader};
use crate::error::{IoError, Result};

pub fn encode(grid: &Grid<f32>) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in grid.as_slice().chunks_exact(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], file: &Path) -> Result<Grid<f32>> {
    let mut header = HeaderReader::new(bytes, file, false);
    let (magic, _) = header.token("magic")?;
    match magic {
        "Pf" => {}
        "PF" => return Err(header.error(0, "three-channel PFM is not supported; expected \"Pf\"")),
        other => return Err(header.error(0, format!("not a PFM file (magic {other:?})"))),
    }
    let w = header.dimension("width")?;
    let h = header.dimension("height")?;
    let (scale, at) = header.parse::<f64>("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(header.error(at, format!("scale must be finite and non-zero, found {scale}")));
    }
    let start = header.end()?;
    let n = w.checked_mul(h).and_then(|n| n.checked_mul(4)).ok_or_else(|| header.error(0, "dimensions overflow"))?;
    let data = payload(bytes, start, n, file)?;
    let little = scale < 0.0;
    let mut values = vec![0.0f32; w * h];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, col) = (k / w, k % w);
        values[(h - 1 - row_from_bottom) * w + col] = v;
    }
    Ok(Grid::from_vec(w, h, values)?)
}

pub fn read(path: &Path) -> Result<Grid<f32>> {
    decode(&read_bytes(path)?, path)
}

pub fn write(path: &Path, grid: &Grid<f32>) -> Result<()> {
    write_bytes(path, &encode(grid))
}

pub fn narrow(grid: &Grid<f64>) -> Grid<f32> {
    grid.map(|&v| v as f32)
}

pub fn widen(grid: &Grid<f32>) -> Grid<f64> {
    grid.map(|&v| f64::from(v))
}

/// Depths with holes written as zero.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let values = Grid::from_fn(depth.width(), depth.height(), |r, c| depth.get(r, c).map_or(0.0, |d| d as f32));
    write(path, &values)
}

/// Zero, negative and non-finite samples become holes.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    Ok(DepthMap::new(widen(&read(path)?)))
}

/// Flow as two files; missing vectors are NaN in both.
pub fn write_flow(u_path: &Path, v_path: &Path, flow: &FlowField) -> Result<()> {
    let pick = |g: &Grid<f64>| {
        Grid::from_fn(g.width(), g.height(), |r, c| if flow.valid[(r, c)] { g[(r, c)] as f32 } else { f32::NAN })
    };
    write(u_path, &pick(&flow.du))?;
    write(v_path, &pick(&flow.dv))
}

pub fn read_flow(u_path: &Path, v_path: &Path) -> Result<FlowField> {
    let du = read(u_path)?;
    let dv = read(v_path)?;
    if du.dims() != dv.dims() {
        return Err(IoError::validation(format!(
            "{} is {}x{} but {} is {}x{}",
            u_path.display(),
            du.width(),
            du.height(),
            v_path.display(),
            dv.width(),
            dv.height()
        )));
    }
    Ok(FlowField::from_components(widen(&du), widen(&dv))?)
}
