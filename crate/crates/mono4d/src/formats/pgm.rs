//! Binary 8-bit PGM (`P5`) confidence masks: sample `k` of maximum `m` is `k / m`.
use std::path::Path;

use mono4d_core::corr::ConfidenceMask;
use mono4d_core::Grid;

use super::{payload, read_bytes, write_bytes, HeaderReader};
use crate::error::Result;

pub fn encode(mask: &ConfidenceMask) -> Vec<u8> {
    let (w, h) = mask.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.values().as_slice().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode(bytes: &[u8], file: &Path) -> Result<ConfidenceMask> {
    let mut header = HeaderReader::new(bytes, file, true);
    let (magic, _) = header.token("magic")?;
    if magic != "P5" {
        return Err(header.error(0, format!("not a binary PGM file (magic {magic:?})")));
    }
    let w = header.dimension("width")?;
    let h = header.dimension("height")?;
    let (max, at) = header.parse::<u32>("maximum value")?;
    if !(1..=255).contains(&max) {
        return Err(header.error(at, format!("maximum value must be in 1..=255, found {max}")));
    }
    let start = header.end()?;
    let data = payload(bytes, start, w * h, file)?;
    if let Some(k) = data.iter().position(|&b| u32::from(b) > max) {
        return Err(header.error(start + k, format!("sample {} exceeds the maximum {max}", data[k])));
    }
    let values = data.iter().map(|&b| f64::from(b) / f64::from(max)).collect();
    Ok(ConfidenceMask::new(Grid::from_vec(w, h, values)?)?)
}

pub fn read(path: &Path) -> Result<ConfidenceMask> {
    decode(&read_bytes(path)?, path)
}

pub fn write(path: &Path, mask: &ConfidenceMask) -> Result<()> {
    write_bytes(path, &encode(mask))
}
