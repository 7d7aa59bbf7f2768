//! Sliding-window reconstruction of arbitrarily long sequences.
//!
//! Each window is reconstructed on its own with its first frame as the origin.
//! Consecutive windows share `overlap` frames; the later window is mapped onto the
//! earlier one by the similarity that best aligns the shared frames, and its
//! remaining frames are appended. Frames already emitted are never touched again.
use alloc::format;
use alloc::vec::Vec;

use crate::align::{umeyama_similarity, CorrespondenceSet};
use crate::corr::DEFAULT_EDGE_THRESHOLD;
use crate::refine::solve_window_poses;
use crate::{assemble_global, unproject, CloudSequence, Error, FrameCloud, PoseSE3, Result, SceneInputs, SimTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowConfig {
    pub window_size: usize,
    pub overlap: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { window_size: 4, overlap: 1 }
    }
}

impl WindowConfig {
    pub fn new(window_size: usize, overlap: usize) -> Result<Self> {
        let cfg = WindowConfig { window_size, overlap };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(Error::InvalidParameter(format!("window size must be at least 2, got {}", self.window_size)));
        }
        if self.overlap == 0 || self.overlap >= self.window_size {
            return Err(Error::InvalidParameter(format!(
                "overlap must satisfy 1 <= overlap < window size ({}), got {}",
                self.window_size, self.overlap
            )));
        }
        Ok(())
    }

    /// Frame ranges `[start, end)` of the windows covering `num_frames` frames. The
    /// final window may be shorter but still shares `overlap` frames with its
    /// predecessor.
    pub fn windows(&self, num_frames: usize) -> Vec<(usize, usize)> {
        let stride = self.window_size - self.overlap;
        let mut out = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + self.window_size).min(num_frames);
            out.push((start, end));
            if end >= num_frames {
                return out;
            }
            start += stride;
        }
    }
}

/// Reconstructs one window: unprojection, chained pose solve on pseudo-confidence
/// masks, and assembly in the frame of the window's first camera.
pub fn reconstruct_window(inputs: &SceneInputs) -> Result<CloudSequence> {
    inputs.validate()?;
    if inputs.num_frames() < 2 {
        return Err(Error::InvalidParameter(format!("a window needs at least 2 frames, got {}", inputs.num_frames())));
    }
    let clouds: Vec<FrameCloud> =
        inputs.depths.iter().map(|d| unproject(d, &inputs.intrinsics)).collect::<Result<_>>()?;
    let masks = inputs.pseudo_masks(DEFAULT_EDGE_THRESHOLD)?;
    let poses = solve_window_poses(&clouds, &inputs.flows, &masks)?;
    assemble_global(&clouds, &poses, &inputs.intrinsics)
}

/// Maps `next` onto `prev` through the similarity fitted on their shared frames (the
/// last `overlap` of `prev`, the first `overlap` of `next`) and appends the rest of
/// `next`. `prev` is copied unchanged.
pub fn stitch(prev: &CloudSequence, next: &CloudSequence, overlap: usize) -> Result<(CloudSequence, SimTransform)> {
    if overlap == 0 || overlap > prev.len() || overlap > next.len() {
        return Err(Error::InvalidParameter(format!(
            "overlap {overlap} does not fit sequences of {} and {} frames",
            prev.len(),
            next.len()
        )));
    }
    let offset = prev.len() - overlap;
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for k in 0..overlap {
        let (a, b) = (&prev.frames[offset + k], &next.frames[k]);
        a.points.expect_dims(&b.points, "stitch overlap")?;
        for i in 0..a.points.len() {
            if a.valid.as_slice()[i] && b.valid.as_slice()[i] {
                src.push(b.points.as_slice()[i]);
                dst.push(a.points.as_slice()[i]);
            }
        }
    }
    let sim = umeyama_similarity(&CorrespondenceSet::uniform(src, dst)?, true)?;
    let mut out = prev.clone();
    for k in overlap..next.len() {
        out.frames.push(next.frames[k].map_points(|p| sim.apply(p)));
        out.poses.push(sim.transform_pose(&next.poses[k]));
    }
    Ok((out, sim))
}

/// Random access to the inputs of a scene, one window at a time.
pub trait FrameSource {
    fn num_frames(&self) -> usize;
    /// Inputs of frames `[start, start + len)`.
    fn window(&mut self, start: usize, len: usize) -> Result<SceneInputs>;
}

impl FrameSource for SceneInputs {
    fn num_frames(&self) -> usize {
        self.depths.len()
    }

    fn window(&mut self, start: usize, len: usize) -> Result<SceneInputs> {
        SceneInputs::window(self, start, len)
    }
}

/// A frame whose global geometry is final.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFrame {
    pub index: usize,
    pub cloud: FrameCloud,
    /// Camera-to-world pose in the frame of the scene's first camera.
    pub pose: PoseSE3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSummary {
    pub frames: usize,
    pub windows: usize,
    /// Similarity applied to each window after the first.
    pub stitches: Vec<SimTransform>,
}

/// Reconstruction that stopped early. Everything emitted before the failing window is
/// valid.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error} (after {emitted} final frames)")]
pub struct StreamError {
    #[source]
    pub error: Error,
    pub emitted: usize,
}

/// Streams the windowed reconstruction of `source`, handing each frame to `emit` as
/// soon as it is final. Only the current window and the `overlap` frames preceding it
/// are held in memory.
pub fn reconstruct_stream<S: FrameSource + ?Sized>(
    source: &mut S,
    cfg: &WindowConfig,
    mut emit: impl FnMut(EmittedFrame) -> Result<()>,
) -> Result<StreamSummary, StreamError> {
    let mut emitted = 0;
    let fail = |error: Error, emitted: usize| StreamError { error, emitted };
    cfg.validate().map_err(|e| fail(e, 0))?;
    let total = source.num_frames();
    if total < cfg.window_size {
        return Err(fail(
            Error::InvalidParameter(format!("{total} frames do not fill one window of {}", cfg.window_size)),
            0,
        ));
    }
    let windows = cfg.windows(total);
    let mut tail: Option<CloudSequence> = None;
    let mut stitches = Vec::new();
    for (index, &(start, end)) in windows.iter().enumerate() {
        let local = source
            .window(start, end - start)
            .and_then(|inputs| reconstruct_window(&inputs))
            .map_err(|e| fail(e.in_window(index), emitted))?;
        let (sequence, first_new) = match &tail {
            None => (local, 0),
            Some(prev) => {
                let (joined, sim) = stitch(prev, &local, cfg.overlap).map_err(|e| fail(e.in_window(index), emitted))?;
                stitches.push(sim);
                (joined, prev.len())
            }
        };
        for k in first_new..sequence.len() {
            emit(EmittedFrame { index: emitted, cloud: sequence.frames[k].clone(), pose: sequence.poses[k] })
                .map_err(|e| fail(e, emitted))?;
            emitted += 1;
        }
        let keep = sequence.len() - cfg.overlap;
        tail = Some(CloudSequence {
            frames: sequence.frames[keep..].to_vec(),
            poses: sequence.poses[keep..].to_vec(),
            intrinsics: sequence.intrinsics,
        });
    }
    Ok(StreamSummary { frames: emitted, windows: windows.len(), stitches })
}

/// Windowed reconstruction collected into one sequence.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct PartialReconstruction {
    #[source]
    pub error: Error,
    /// Frames completed before the failure; empty if the first window failed.
    pub frames: Vec<FrameCloud>,
    pub poses: Vec<PoseSE3>,
}

pub fn reconstruct_sequence<S: FrameSource + ?Sized>(
    source: &mut S,
    cfg: &WindowConfig,
) -> Result<CloudSequence, PartialReconstruction> {
    let intrinsics = source.window(0, 1).map(|w| w.intrinsics);
    let mut frames = Vec::new();
    let mut poses = Vec::new();
    let result = reconstruct_stream(source, cfg, |f| {
        frames.push(f.cloud);
        poses.push(f.pose);
        Ok(())
    });
    match (result, intrinsics) {
        (Ok(_), Ok(intrinsics)) => Ok(CloudSequence { frames, poses, intrinsics }),
        (Err(e), _) => Err(PartialReconstruction { error: e.error, frames, poses }),
        (Ok(_), Err(error)) => Err(PartialReconstruction { error, frames, poses }),
    }
}
