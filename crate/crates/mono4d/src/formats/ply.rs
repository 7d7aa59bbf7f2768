//! Binary little-endian PLY with `float x, y, z` and `uchar red, green, blue`.
use std::path::{Path, PathBuf};

use mono4d_core::{CloudSequence, FrameCloud, Vec3};

use super::write_bytes;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ColorBy {
    /// One color per frame, running through the palette over the sequence.
    FrameIndex,
    /// Color by height above the first camera (world y points down).
    Height,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Layout {
    PerFrame,
    Merged,
}

pub type Vertex = ([f32; 3], [u8; 3]);

pub fn encode(vertices: &[Vertex]) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        vertices.len()
    )
    .into_bytes();
    out.reserve(vertices.len() * 15);
    for (p, c) in vertices {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(c);
    }
    out
}

/// Blue through green to red for `t` in `[0, 1]`; values outside are clamped.
pub fn palette(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let ramp = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ramp(2.0 * t - 1.0), ramp(1.0 - (2.0 * t - 1.0).abs()), ramp(1.0 - 2.0 * t)]
}

/// Chooses vertex colors. Height coloring spans the `y` range of the frame it is
/// built from, so frames written later share the same scale.
#[derive(Debug, Clone, Copy)]
pub struct Colorizer {
    by: ColorBy,
    frames: usize,
    y_range: (f64, f64),
}

impl Colorizer {
    pub fn new(by: ColorBy, frames: usize, reference: &FrameCloud) -> Self {
        let ys = reference.valid_points().into_iter().map(|p| p.y);
        let y_range = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
        Colorizer { by, frames, y_range }
    }

    fn color(&self, frame: usize, p: &Vec3) -> [u8; 3] {
        match self.by {
            ColorBy::FrameIndex => palette(if self.frames > 1 { frame as f64 / (self.frames - 1) as f64 } else { 0.0 }),
            ColorBy::Height => {
                let (lo, hi) = self.y_range;
                // y grows downward, so the top of the scene is the low end.
                palette(if hi > lo { (hi - p.y) / (hi - lo) } else { 0.0 })
            }
        }
    }

    pub fn vertices(&self, frame: usize, cloud: &FrameCloud) -> Vec<Vertex> {
        cloud.valid_points().iter().map(|p| ([p.x as f32, p.y as f32, p.z as f32], self.color(frame, p))).collect()
    }
}

pub fn frame_file(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("frame_{frame:05}.ply"))
}

pub fn write_vertices(path: &Path, vertices: &[Vertex]) -> Result<()> {
    write_bytes(path, &encode(vertices))
}

/// Writes a whole sequence, one file per frame or a single `merged.ply`.
pub fn write_sequence(dir: &Path, seq: &CloudSequence, layout: Layout, by: ColorBy) -> Result<Vec<PathBuf>> {
    let Some(first) = seq.frames.first() else {
        return Ok(Vec::new());
    };
    let colors = Colorizer::new(by, seq.len(), first);
    match layout {
        Layout::PerFrame => seq
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let path = frame_file(dir, t);
                write_vertices(&path, &colors.vertices(t, f)).map(|_| path)
            })
            .collect(),
        Layout::Merged => {
            let all: Vec<Vertex> = seq.frames.iter().enumerate().flat_map(|(t, f)| colors.vertices(t, f)).collect();
            let path = dir.join("merged.ply");
            write_vertices(&path, &all)?;
            Ok(vec![path])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mono4d_core::Grid;

    fn header(bytes: &[u8]) -> String {
        let end = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        String::from_utf8(bytes[..end].to_vec()).unwrap()
    }

    #[test]
    fn one_point_one_vertex() {
        let bytes = encode(&[([1.0, 2.0, 3.0], [4, 5, 6])]);
        let h = header(&bytes);
        assert!(h.contains("element vertex 1\n"));
        assert_eq!(bytes.len(), h.len() + 15);
        assert_eq!(&bytes[h.len()..h.len() + 4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 3..], &[4, 5, 6]);
    }

    #[test]
    fn empty_frame_is_a_valid_file() {
        let cloud = FrameCloud::new(Grid::filled(2, 2, Vec3::zeros()), Grid::filled(2, 2, false)).unwrap();
        let v = Colorizer::new(ColorBy::Height, 1, &cloud).vertices(0, &cloud);
        let bytes = encode(&v);
        assert!(header(&bytes).contains("element vertex 0\n"));
        assert_eq!(bytes.len(), header(&bytes).len());
    }

    #[test]
    fn palette_ends() {
        assert_eq!(palette(0.0), [0, 0, 255]);
        assert_eq!(palette(0.5), [0, 255, 0]);
        assert_eq!(palette(1.0), [255, 0, 0]);
        assert_eq!(palette(f64::NAN), palette(0.0));
    }
}
