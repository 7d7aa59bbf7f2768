//! Scene manifests: a JSON index of every per-frame file of one scene.
//!
//! Paths inside a manifest are relative to the directory holding it. Opening a
//! manifest validates it completely: every referenced file is parsed once and every
//! problem is collected, so a manifest that opens never fails to parse later.
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use mono4d_core::corr::{ConfidenceMask, FlowField, TrackSet};
use mono4d_core::pipeline::FrameSource;
use mono4d_core::{assemble_global, unproject, CameraIntrinsics, CloudSequence, DepthMap, PoseSE3, SceneInputs};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::formats::{json, pfm, pgm};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFiles {
    pub u: PathBuf,
    pub v: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFiles {
    pub depths: Vec<PathBuf>,
    pub poses: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub scene_id: String,
    pub num_frames: usize,
    pub intrinsics: PathBuf,
    pub depths: Vec<PathBuf>,
    /// `flows[t]` maps frame `t` to frame `t + 1`.
    pub flows: Vec<FlowFiles>,
    /// PGM or PFM, chosen by extension; 1 marks the dynamic region.
    pub dynamic_masks: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracks: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthFiles>,
}

/// Conventional file names inside a scene directory.
pub fn depth_name(t: usize) -> PathBuf {
    PathBuf::from(format!("depth/depth_{t:05}.pfm"))
}

pub fn flow_names(t: usize) -> FlowFiles {
    FlowFiles {
        u: PathBuf::from(format!("flow/flow_{t:05}_{:05}.u.pfm", t + 1)),
        v: PathBuf::from(format!("flow/flow_{t:05}_{:05}.v.pfm", t + 1)),
    }
}

pub fn mask_name(t: usize) -> PathBuf {
    PathBuf::from(format!("masks/dynamic_{t:05}.pgm"))
}

pub fn gt_depth_name(t: usize) -> PathBuf {
    PathBuf::from(format!("gt/depth_{t:05}.pfm"))
}

fn read_mask(path: &Path) -> Result<ConfidenceMask> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm")) {
        let values = pfm::widen(&pfm::read(path)?);
        ConfidenceMask::new(values).map_err(|e| IoError::at_offset(path, 0, e.to_string()))
    } else {
        pgm::read(path)
    }
}

/// A manifest that passed validation.
#[derive(Debug, Clone)]
pub struct Manifest {
    dir: PathBuf,
    record: ManifestRecord,
    intrinsics: CameraIntrinsics,
}

/// One file to check: how to parse it and what size it must be.
enum Check<'a> {
    Depth(&'a Path),
    Flow(&'a FlowFiles),
    Mask(&'a Path),
}

impl Manifest {
    /// Accepts the manifest file itself or the directory containing `manifest.json`.
    pub fn open(path: &Path) -> Result<Manifest> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let record: ManifestRecord = json::read(&file)?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::validate(dir, record)
    }

    pub fn validate(dir: PathBuf, record: ManifestRecord) -> Result<Manifest> {
        let mut problems = Vec::new();
        let t = record.num_frames;
        if t == 0 {
            problems.push("num_frames must be positive".to_string());
        }
        let mut count = |what: &str, found: usize, expected: usize| {
            if found != expected {
                problems.push(format!("{what}: expected {expected} entries, found {found}"));
            }
        };
        count("depths", record.depths.len(), t);
        count("flows", record.flows.len(), t.saturating_sub(1));
        count("dynamic_masks", record.dynamic_masks.len(), t);
        if let Some(r) = &record.references {
            count("references", r.len(), t);
        }
        if let Some(gt) = &record.ground_truth {
            count("ground_truth.depths", gt.depths.len(), t);
        }

        let resolve = |p: &Path| dir.join(p);
        let intrinsics = match json::read_intrinsics(&resolve(&record.intrinsics)) {
            Ok(k) => Some(k),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };
        let dims = intrinsics.map(|k| (k.width, k.height));

        let mut checks: Vec<Check<'_>> = Vec::new();
        checks.extend(record.depths.iter().map(|p| Check::Depth(p)));
        checks.extend(record.flows.iter().map(Check::Flow));
        checks.extend(record.dynamic_masks.iter().map(|p| Check::Mask(p)));
        checks.extend(record.references.iter().flatten().map(|p| Check::Depth(p)));
        checks.extend(record.ground_truth.iter().flat_map(|g| g.depths.iter()).map(|p| Check::Depth(p)));
        let raster_problems: Vec<String> = checks
            .par_iter()
            .filter_map(|check| {
                let (path, found) = match check {
                    Check::Depth(p) => (resolve(p), pfm::read_depth(&resolve(p)).map(|d| d.values.dims())),
                    Check::Flow(f) => (resolve(&f.u), pfm::read_flow(&resolve(&f.u), &resolve(&f.v)).map(|f| f.dims())),
                    Check::Mask(p) => (resolve(p), read_mask(&resolve(p)).map(|m| m.dims())),
                };
                match (found, dims) {
                    (Err(e), _) => Some(e.to_string()),
                    (Ok(found), Some(expected)) if found != expected => Some(format!(
                        "{}: raster is {}x{}, intrinsics say {}x{}",
                        path.display(),
                        found.0,
                        found.1,
                        expected.0,
                        expected.1
                    )),
                    _ => None,
                }
            })
            .collect();
        problems.extend(raster_problems);

        if let Some(p) = &record.tracks {
            match json::read_tracks(&resolve(p)) {
                Ok(tr) if tr.num_frames != t => problems.push(format!(
                    "{}: tracks span {} frames, scene has {t}",
                    resolve(p).display(),
                    tr.num_frames
                )),
                Ok(_) => {}
                Err(e) => problems.push(e.to_string()),
            }
        }
        if let Some(gt) = &record.ground_truth {
            match json::read_poses(&resolve(&gt.poses)) {
                Ok(poses) if poses.len() != t => problems.push(format!(
                    "{}: {} ground-truth poses for {t} frames",
                    resolve(&gt.poses).display(),
                    poses.len()
                )),
                Ok(_) => {}
                Err(e) => problems.push(e.to_string()),
            }
        }
        match (problems.is_empty(), intrinsics) {
            (true, Some(intrinsics)) => Ok(Manifest { dir, record, intrinsics }),
            _ => Err(IoError::Validation(problems)),
        }
    }

    pub fn record(&self) -> &ManifestRecord {
        &self.record
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn num_frames(&self) -> usize {
        self.record.num_frames
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    fn path(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }

    fn depths_in(&self, files: &[PathBuf]) -> Result<Vec<DepthMap>> {
        files.par_iter().map(|p| pfm::read_depth(&self.path(p))).collect()
    }

    fn flows_in(&self, files: &[FlowFiles]) -> Result<Vec<FlowField>> {
        files.par_iter().map(|f| pfm::read_flow(&self.path(&f.u), &self.path(&f.v))).collect()
    }

    fn masks_in(&self, files: &[PathBuf]) -> Result<Vec<ConfidenceMask>> {
        files.par_iter().map(|p| read_mask(&self.path(p))).collect()
    }

    pub fn tracks(&self) -> Result<Option<TrackSet>> {
        self.record.tracks.as_ref().map(|p| json::read_tracks(&self.path(p))).transpose()
    }

    /// Everything, loaded at once.
    pub fn inputs(&self) -> Result<SceneInputs> {
        let r = &self.record;
        Ok(SceneInputs {
            depths: self.depths_in(&r.depths)?,
            intrinsics: self.intrinsics,
            flows: self.flows_in(&r.flows)?,
            dynamic_masks: self.masks_in(&r.dynamic_masks)?,
            references: r.references.as_ref().map(|refs| self.depths_in(refs)).transpose()?,
            tracks: self.tracks()?,
        })
    }

    /// The inputs a window reconstruction needs; references and tracks are left out.
    pub fn window_inputs(&self, start: usize, len: usize) -> Result<SceneInputs> {
        let end = start + len;
        let r = &self.record;
        if len == 0 || end > r.num_frames {
            return Err(IoError::Usage(format!("window [{start}, {end}) outside a {}-frame scene", r.num_frames)));
        }
        Ok(SceneInputs {
            depths: self.depths_in(&r.depths[start..end])?,
            intrinsics: self.intrinsics,
            flows: self.flows_in(&r.flows[start..end - 1])?,
            dynamic_masks: self.masks_in(&r.dynamic_masks[start..end])?,
            references: None,
            tracks: None,
        })
    }

    pub fn has_ground_truth(&self) -> bool {
        self.record.ground_truth.is_some()
    }

    fn gt_files(&self) -> Result<&GroundTruthFiles> {
        self.record
            .ground_truth
            .as_ref()
            .ok_or_else(|| IoError::validation(format!("{}: manifest lists no ground truth", self.dir.display())))
    }

    pub fn ground_truth_depths(&self) -> Result<Vec<DepthMap>> {
        self.depths_in(&self.gt_files()?.depths)
    }

    /// Ground-truth clouds placed by the ground-truth poses, anchored at frame 0.
    pub fn ground_truth(&self) -> Result<CloudSequence> {
        let poses = json::read_poses(&self.path(&self.gt_files()?.poses))?;
        let clouds = self
            .ground_truth_depths()?
            .iter()
            .map(|d| unproject(d, &self.intrinsics))
            .collect::<mono4d_core::Result<Vec<_>>>()?;
        Ok(assemble_global(&clouds, &poses, &self.intrinsics)?)
    }
}

/// Streams windows straight from disk. A read failure is reported to the pipeline as
/// a source error; the original is kept for the caller in [`ManifestSource::take_error`].
pub struct ManifestSource<'a> {
    manifest: &'a Manifest,
    failure: Arc<Mutex<Option<IoError>>>,
}

impl<'a> ManifestSource<'a> {
    pub fn new(manifest: &'a Manifest) -> Self {
        ManifestSource { manifest, failure: Arc::default() }
    }

    pub fn take_error(&self) -> Option<IoError> {
        self.failure.lock().expect("not poisoned").take()
    }
}

impl FrameSource for ManifestSource<'_> {
    fn num_frames(&self) -> usize {
        self.manifest.num_frames()
    }

    fn window(&mut self, start: usize, len: usize) -> mono4d_core::Result<SceneInputs> {
        self.manifest.window_inputs(start, len).map_err(|e| {
            let message = e.to_string();
            *self.failure.lock().expect("not poisoned") = Some(e);
            mono4d_core::Error::Source(message)
        })
    }
}

/// Ground truth to store next to the inputs.
pub struct GroundTruth<'a> {
    pub depths: &'a [DepthMap],
    pub poses: &'a [PoseSE3],
}

/// Writes `inputs` (and optional ground truth) as a scene directory with conventional
/// file names. References equal to the depths point at the depth files.
pub fn write_scene(dir: &Path, scene_id: &str, inputs: &SceneInputs, gt: Option<GroundTruth<'_>>) -> Result<Manifest> {
    inputs.validate()?;
    let t = inputs.num_frames();
    let intrinsics = PathBuf::from("intrinsics.json");
    json::write_intrinsics(&dir.join(&intrinsics), &inputs.intrinsics)?;
    let depths: Vec<PathBuf> = (0..t).map(depth_name).collect();
    let flows: Vec<FlowFiles> = (0..t.saturating_sub(1)).map(flow_names).collect();
    let masks: Vec<PathBuf> = (0..t).map(mask_name).collect();
    (0..t).into_par_iter().try_for_each(|k| -> Result<()> {
        pfm::write_depth(&dir.join(&depths[k]), &inputs.depths[k])?;
        pgm::write(&dir.join(&masks[k]), &inputs.dynamic_masks[k])?;
        if k + 1 < t {
            pfm::write_flow(&dir.join(&flows[k].u), &dir.join(&flows[k].v), &inputs.flows[k])?;
        }
        Ok(())
    })?;
    let references = match &inputs.references {
        None => None,
        Some(refs) if *refs == inputs.depths => Some(depths.clone()),
        Some(refs) => {
            let names: Vec<PathBuf> = (0..t).map(|k| PathBuf::from(format!("reference/depth_{k:05}.pfm"))).collect();
            for (name, d) in names.iter().zip(refs) {
                pfm::write_depth(&dir.join(name), d)?;
            }
            Some(names)
        }
    };
    let tracks = match &inputs.tracks {
        Some(tr) => {
            let name = PathBuf::from("tracks.json");
            json::write_tracks(&dir.join(&name), tr)?;
            Some(name)
        }
        None => None,
    };
    let ground_truth = match gt {
        Some(gt) => {
            let names: Vec<PathBuf> = (0..gt.depths.len()).map(gt_depth_name).collect();
            for (name, d) in names.iter().zip(gt.depths) {
                pfm::write_depth(&dir.join(name), d)?;
            }
            let poses = PathBuf::from("gt/poses.json");
            json::write_poses(&dir.join(&poses), gt.poses)?;
            Some(GroundTruthFiles { depths: names, poses })
        }
        None => None,
    };
    let record = ManifestRecord {
        scene_id: scene_id.to_string(),
        num_frames: t,
        intrinsics,
        depths,
        flows,
        dynamic_masks: masks,
        references,
        tracks,
        ground_truth,
    };
    json::write(&dir.join(MANIFEST_FILE), &record)?;
    Manifest::validate(dir.to_path_buf(), record)
}

/// File names of a reconstruction output directory.
pub mod prediction {
    use super::*;

    pub const POSES: &str = "poses.json";
    pub const INTRINSICS: &str = "intrinsics.json";
    pub const LOSSES: &str = "losses.json";
    pub const RUN: &str = "run.json";

    pub fn depth_name(t: usize) -> PathBuf {
        super::depth_name(t)
    }

    /// Rebuilds the per-pixel cloud sequence of a reconstruction from its camera
    /// depths, intrinsics and poses.
    pub fn read(dir: &Path) -> Result<CloudSequence> {
        let intrinsics = json::read_intrinsics(&dir.join(INTRINSICS))?;
        let poses = json::read_poses(&dir.join(POSES))?;
        if poses.is_empty() {
            return Err(IoError::validation(format!("{}: no poses", dir.join(POSES).display())));
        }
        let depths: Vec<DepthMap> = (0..poses.len())
            .into_par_iter()
            .map(|t| pfm::read_depth(&dir.join(depth_name(t))))
            .collect::<Result<_>>()?;
        let mut problems = Vec::new();
        for (t, d) in depths.iter().enumerate() {
            if d.values.dims() != (intrinsics.width, intrinsics.height) {
                problems.push(format!(
                    "{}: raster is {}x{}, intrinsics say {}x{}",
                    dir.join(depth_name(t)).display(),
                    d.width(),
                    d.height(),
                    intrinsics.width,
                    intrinsics.height
                ));
            }
        }
        if !problems.is_empty() {
            return Err(IoError::Validation(problems));
        }
        let clouds = depths.iter().map(|d| unproject(d, &intrinsics)).collect::<mono4d_core::Result<Vec<_>>>()?;
        Ok(assemble_global(&clouds, &poses, &intrinsics)?)
    }
}
