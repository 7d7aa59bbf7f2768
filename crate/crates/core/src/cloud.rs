//! Depth rasters, per-frame pointclouds and their assembly into one global frame.
use alloc::vec::Vec;

use crate::raster::Grid;
use crate::{CameraIntrinsics, Error, PoseSE3, Result, Vec3};

/// Per-pixel depth (meters). A pixel is valid only if its value is finite and > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Grid<f64>,
    pub valid: Grid<bool>,
}

impl DepthMap {
    /// Validity derived from the values: zero, negative and non-finite depths are holes.
    pub fn new(values: Grid<f64>) -> Self {
        let valid = values.map(|&d| d.is_finite() && d > 0.0);
        DepthMap { values, valid }
    }

    /// Explicit mask, intersected with the value-derived validity.
    pub fn with_mask(values: Grid<f64>, mask: &Grid<bool>) -> Result<Self> {
        values.expect_dims(mask, "depth mask")?;
        let valid = Grid::from_fn(values.width(), values.height(), |r, c| {
            let d = values[(r, c)];
            mask[(r, c)] && d.is_finite() && d > 0.0
        });
        Ok(DepthMap { values, valid })
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if self.valid[(row, col)] {
            Some(self.values[(row, col)])
        } else {
            None
        }
    }

    /// All depths multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> DepthMap {
        DepthMap::with_mask(self.values.map(|d| d * factor), &self.valid).expect("same dims")
    }
}

/// Per-pixel 3D points with validity.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCloud {
    pub points: Grid<Vec3>,
    pub valid: Grid<bool>,
}

impl FrameCloud {
    pub fn new(points: Grid<Vec3>, valid: Grid<bool>) -> Result<Self> {
        points.expect_dims(&valid, "cloud validity")?;
        Ok(FrameCloud { points, valid })
    }

    pub fn width(&self) -> usize {
        self.points.width()
    }

    pub fn height(&self) -> usize {
        self.points.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.points.dims()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Vec3> {
        if self.valid[(row, col)] {
            Some(self.points[(row, col)])
        } else {
            None
        }
    }

    /// Valid points in row-major order.
    pub fn valid_points(&self) -> Vec<Vec3> {
        self.points.as_slice().iter().zip(self.valid.as_slice()).filter(|(_, &v)| v).map(|(p, _)| *p).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|&&v| v).count()
    }

    /// Applies `f` to every valid point; validity is unchanged.
    pub fn map_points(&self, mut f: impl FnMut(&Vec3) -> Vec3) -> FrameCloud {
        let points = Grid::from_vec(
            self.width(),
            self.height(),
            self.points.as_slice().iter().zip(self.valid.as_slice()).map(|(p, &v)| if v { f(p) } else { *p }).collect(),
        )
        .expect("same length");
        FrameCloud { points, valid: self.valid.clone() }
    }
}

/// Global pointcloud sequence. Frame 0's pose is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudSequence {
    pub frames: Vec<FrameCloud>,
    pub poses: Vec<PoseSE3>,
    pub intrinsics: CameraIntrinsics,
}

impl CloudSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Camera-frame depth of every pixel, recovered by undoing each frame's pose.
    pub fn camera_depths(&self) -> Vec<DepthMap> {
        self.frames
            .iter()
            .zip(&self.poses)
            .map(|(frame, pose)| {
                let inv = pose.inverse();
                let values = frame.points.map(|p| inv.apply(p).z);
                DepthMap::with_mask(values, &frame.valid).expect("same dims")
            })
            .collect()
    }
}

/// Lifts each valid depth pixel through `K⁻¹` at its pixel center.
pub fn unproject(depth: &DepthMap, intr: &CameraIntrinsics) -> Result<FrameCloud> {
    let (w, h) = depth.values.dims();
    if (w, h) != (intr.width, intr.height) {
        return Err(Error::shape("unproject", (intr.width, intr.height), (w, h)));
    }
    let points = Grid::from_fn(w, h, |row, col| {
        let d = depth.values[(row, col)];
        if depth.valid[(row, col)] {
            let (u, v) = CameraIntrinsics::pixel_center(row, col);
            intr.ray(u, v) * d
        } else {
            Vec3::zeros()
        }
    });
    Ok(FrameCloud { points, valid: depth.valid.clone() })
}

pub fn transform(cloud: &FrameCloud, pose: &PoseSE3) -> FrameCloud {
    cloud.map_points(|p| pose.apply(p))
}

/// Maps per-frame camera clouds into the frame of camera 0: frame `t` receives
/// `P₀⁻¹·P_t`, so the output is independent of where the input poses are anchored.
pub fn assemble_global(
    clouds: &[FrameCloud],
    poses: &[PoseSE3],
    intrinsics: &CameraIntrinsics,
) -> Result<CloudSequence> {
    if clouds.len() != poses.len() {
        return Err(Error::CountMismatch {
            context: "assemble_global clouds/poses",
            left: clouds.len(),
            right: poses.len(),
        });
    }
    let Some(first) = poses.first() else {
        return Err(Error::InvalidParameter("assemble_global needs at least one frame".into()));
    };
    let dims = clouds[0].dims();
    if let Some(bad) = clouds.iter().find(|c| c.dims() != dims) {
        return Err(Error::shape("assemble_global frame size", dims, bad.dims()));
    }
    let anchor = first.inverse();
    let rel: Vec<PoseSE3> =
        poses.iter().enumerate().map(|(t, p)| if t == 0 { PoseSE3::identity() } else { anchor.compose(p) }).collect();
    let frames = clouds.iter().zip(&rel).map(|(c, p)| transform(c, p)).collect();
    Ok(CloudSequence { frames, poses: rel, intrinsics: *intrinsics })
}
