//! In-memory bundle of everything one scene (or one window of it) provides.
use alloc::format;
use alloc::vec::Vec;

use crate::corr::{compose_pseudo_mask, flying_pixel_mask, ConfidenceMask, FlowField, TrackSet};
use crate::{CameraIntrinsics, DepthMap, Error, Grid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInputs {
    pub depths: Vec<DepthMap>,
    pub intrinsics: CameraIntrinsics,
    /// `flows[t]` maps frame `t` to frame `t + 1`.
    pub flows: Vec<FlowField>,
    /// Dynamic-region masks, 1 = dynamic.
    pub dynamic_masks: Vec<ConfidenceMask>,
    /// Reference depths regularizing shape, if available.
    pub references: Option<Vec<DepthMap>>,
    pub tracks: Option<TrackSet>,
}

impl SceneInputs {
    pub fn num_frames(&self) -> usize {
        self.depths.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let t = self.depths.len();
        if t == 0 {
            return Err(Error::InvalidParameter("scene has no frames".into()));
        }
        let dims = (self.intrinsics.width, self.intrinsics.height);
        let check = |found: (usize, usize), context: &'static str| {
            if found == dims {
                Ok(())
            } else {
                Err(Error::shape(context, dims, found))
            }
        };
        for d in &self.depths {
            check(d.values.dims(), "depth raster")?;
        }
        if self.flows.len() + 1 != t {
            return Err(Error::CountMismatch { context: "flows vs frames - 1", left: t - 1, right: self.flows.len() });
        }
        for f in &self.flows {
            check(f.dims(), "flow raster")?;
        }
        if self.dynamic_masks.len() != t {
            return Err(Error::CountMismatch {
                context: "dynamic masks vs frames",
                left: t,
                right: self.dynamic_masks.len(),
            });
        }
        for m in &self.dynamic_masks {
            check(m.dims(), "dynamic mask raster")?;
        }
        if let Some(refs) = &self.references {
            if refs.len() != t {
                return Err(Error::CountMismatch { context: "reference depths vs frames", left: t, right: refs.len() });
            }
            for d in refs {
                check(d.values.dims(), "reference depth raster")?;
            }
        }
        if let Some(tracks) = &self.tracks {
            if tracks.num_frames != t {
                return Err(Error::CountMismatch {
                    context: "track frames vs frames",
                    left: t,
                    right: tracks.num_frames,
                });
            }
        }
        Ok(())
    }

    /// Frames `[start, start + len)`. Tracks are re-based so the window's first frame
    /// is their query frame.
    pub fn window(&self, start: usize, len: usize) -> Result<SceneInputs> {
        let end = start + len;
        if len == 0 || end > self.num_frames() {
            return Err(Error::InvalidParameter(format!(
                "window [{start}, {end}) outside a {}-frame scene",
                self.num_frames()
            )));
        }
        let tracks = self.tracks.as_ref().map(|tr| {
            let mut positions = Vec::with_capacity(tr.num_tracks * len);
            let mut visible = Vec::with_capacity(tr.num_tracks * len);
            for n in 0..tr.num_tracks {
                let base = n * tr.num_frames;
                positions.extend_from_slice(&tr.positions[base + start..base + end]);
                visible.extend_from_slice(&tr.visible[base + start..base + end]);
            }
            TrackSet { num_tracks: tr.num_tracks, num_frames: len, positions, visible, query_frame: 0 }
        });
        Ok(SceneInputs {
            depths: self.depths[start..end].to_vec(),
            intrinsics: self.intrinsics,
            flows: self.flows[start..end - 1].to_vec(),
            dynamic_masks: self.dynamic_masks[start..end].to_vec(),
            references: self.references.as_ref().map(|r| r[start..end].to_vec()),
            tracks,
        })
    }

    /// Per-frame pseudo-confidence: static (non-dynamic) and away from depth edges.
    pub fn pseudo_masks(&self, edge_threshold: f64) -> Result<Vec<ConfidenceMask>> {
        self.depths
            .iter()
            .zip(&self.dynamic_masks)
            .map(|(d, dynamic)| {
                let edges = flying_pixel_mask(d, edge_threshold)?;
                let all = Grid::filled(d.width(), d.height(), true);
                compose_pseudo_mask(dynamic, &edges, &all)
            })
            .collect()
    }

    /// Same scene with every predicted depth multiplied by `factor`.
    pub fn with_scaled_depths(&self, factor: f64) -> SceneInputs {
        SceneInputs { depths: self.depths.iter().map(|d| d.scaled(factor)).collect(), ..self.clone() }
    }
}
