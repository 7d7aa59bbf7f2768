//! JSON records: intrinsics, camera poses, and 2D tracks. Parse failures carry a
//! JSON pointer to the offending value.
use std::path::Path;

use mono4d_core::corr::TrackSet;
use mono4d_core::{CameraIntrinsics, Mat3, PoseSE3, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes};
use crate::error::{IoError, Result};

pub const CAMERA_TO_WORLD: &str = "camera_to_world";

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    path.iter()
        .map(|s| match s {
            Segment::Seq { index } => format!("/{index}"),
            Segment::Map { key } => format!("/{}", key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => format!("/{variant}"),
            Segment::Unknown => "/?".to_string(),
        })
        .collect()
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8], file: &Path) -> Result<T> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let at = pointer(e.path());
        let inner = e.into_inner();
        IoError::at_pointer(file, at, format!("{inner}"))
    })?;
    de.end().map_err(|e| IoError::at_pointer(file, "", e.to_string()))?;
    Ok(value)
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<T> {
    decode(&read_bytes(path)?, path)
}

/// Pretty-printed with a trailing newline. Field order follows the type.
pub fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("records serialize");
    out.push(b'\n');
    out
}

pub fn write<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, &encode(value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&CameraIntrinsics> for IntrinsicsRecord {
    fn from(k: &CameraIntrinsics) -> Self {
        IntrinsicsRecord { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height }
    }
}

pub fn intrinsics_from_record(r: &IntrinsicsRecord, file: &Path) -> Result<CameraIntrinsics> {
    CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
        .map_err(|e| IoError::at_pointer(file, "", e.to_string()))
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    intrinsics_from_record(&read(path)?, path)
}

pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<()> {
    write(path, &IntrinsicsRecord::from(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    /// Row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosesRecord {
    pub convention: String,
    pub poses: Vec<PoseRecord>,
}

impl From<&PoseSE3> for PoseRecord {
    fn from(p: &PoseSE3) -> Self {
        let r = &p.rotation;
        PoseRecord {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

pub fn poses_record(poses: &[PoseSE3]) -> PosesRecord {
    PosesRecord { convention: CAMERA_TO_WORLD.to_string(), poses: poses.iter().map(PoseRecord::from).collect() }
}

pub fn poses_from_record(record: &PosesRecord, file: &Path) -> Result<Vec<PoseSE3>> {
    if record.convention != CAMERA_TO_WORLD {
        return Err(IoError::at_pointer(
            file,
            "/convention",
            format!("unsupported pose convention {:?}; only {CAMERA_TO_WORLD:?} is accepted", record.convention),
        ));
    }
    record
        .poses
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let pose = PoseSE3::new(Mat3::from_row_slice(&p.rotation), Vec3::from_row_slice(&p.translation));
            if !pose.is_valid() {
                return Err(IoError::at_pointer(
                    file,
                    format!("/poses/{k}"),
                    "not a finite rigid transform with a proper rotation",
                ));
            }
            Ok(pose)
        })
        .collect()
}

pub fn read_poses(path: &Path) -> Result<Vec<PoseSE3>> {
    poses_from_record(&read(path)?, path)
}

pub fn write_poses(path: &Path, poses: &[PoseSE3]) -> Result<()> {
    write(path, &poses_record(poses))
}

/// Tracks, track-major: position `n·T + t` is `[positions[2k], positions[2k+1]]` with
/// `k = n·T + t`. Positions that cannot be represented (non-finite) are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracksRecord {
    pub num_tracks: usize,
    pub num_frames: usize,
    #[serde(default)]
    pub query_frame: usize,
    pub positions: Vec<Option<f64>>,
    pub visibility: Vec<bool>,
}

impl From<&TrackSet> for TracksRecord {
    fn from(t: &TrackSet) -> Self {
        TracksRecord {
            num_tracks: t.num_tracks,
            num_frames: t.num_frames,
            query_frame: t.query_frame,
            positions: t.positions.iter().flatten().map(|v| v.is_finite().then_some(*v)).collect(),
            visibility: t.visible.clone(),
        }
    }
}

pub fn tracks_from_record(r: &TracksRecord, file: &Path) -> Result<TrackSet> {
    let n = r
        .num_tracks
        .checked_mul(r.num_frames)
        .ok_or_else(|| IoError::at_pointer(file, "/num_tracks", "track count overflows"))?;
    if r.positions.len() != 2 * n {
        return Err(IoError::at_pointer(
            file,
            "/positions",
            format!(
                "expected {} values (2 × {} tracks × {} frames), found {}",
                2 * n,
                r.num_tracks,
                r.num_frames,
                r.positions.len()
            ),
        ));
    }
    if r.visibility.len() != n {
        return Err(IoError::at_pointer(
            file,
            "/visibility",
            format!("expected {n} flags, found {}", r.visibility.len()),
        ));
    }
    if n > 0 && r.query_frame >= r.num_frames {
        return Err(IoError::at_pointer(
            file,
            "/query_frame",
            format!("{} is not below num_frames {}", r.query_frame, r.num_frames),
        ));
    }
    let mut positions = Vec::with_capacity(n);
    for k in 0..n {
        let (x, y) = (r.positions[2 * k], r.positions[2 * k + 1]);
        if r.visibility[k] && (x.is_none() || y.is_none()) {
            return Err(IoError::at_pointer(file, format!("/positions/{}", 2 * k), "visible track position is null"));
        }
        positions.push([x.unwrap_or(f64::NAN), y.unwrap_or(f64::NAN)]);
    }
    TrackSet::new(r.num_tracks, r.num_frames, positions, r.visibility.clone(), r.query_frame)
        .map_err(|e| IoError::at_pointer(file, "", e.to_string()))
}

pub fn read_tracks(path: &Path) -> Result<TrackSet> {
    tracks_from_record(&read(path)?, path)
}

pub fn write_tracks(path: &Path, tracks: &TrackSet) -> Result<()> {
    write(path, &TracksRecord::from(tracks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Location;

    fn pointer_of(e: IoError) -> String {
        match e {
            IoError::Parse { location: Location::Pointer(p), .. } => p,
            other => panic!("unexpected {other:?}"),
        }
    }

    fn file() -> &'static Path {
        Path::new("p.json")
    }

    #[test]
    fn identity_pose_round_trips_exactly() {
        let poses = [
            PoseSE3::identity(),
            PoseSE3::from_axis_angle(Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.0 / 3.0, 2.0, -1e-9)),
        ];
        let back = poses_from_record(&decode(&encode(&poses_record(&poses)), file()).unwrap(), file()).unwrap();
        assert_eq!(back, poses);
    }

    #[test]
    fn other_conventions_are_rejected() {
        let text = br#"{"convention": "world_to_camera", "poses": [{"rotation": [1,0,0,0,1,0,0,0,1], "translation": [0,0,0]}]}"#;
        let e = poses_from_record(&decode(text, file()).unwrap(), file()).unwrap_err();
        assert!(e.to_string().contains("world_to_camera"));
        assert_eq!(pointer_of(e), "/convention");
    }

    #[test]
    fn schema_errors_point_at_the_value() {
        let text =
            br#"{"convention": "camera_to_world", "poses": [{"rotation": [1,0,0,0,1,0,0,0,1], "translation": [0,0,0]},
            {"rotation": [1,0,0], "translation": [0,0,0]}]}"#;
        assert_eq!(pointer_of(decode::<PosesRecord>(text, file()).unwrap_err()), "/poses/1/rotation");
        let text = br#"{"convention": "camera_to_world", "poses": [{"rotation": [2,0,0,0,1,0,0,0,1], "translation": [0,0,0]}]}"#;
        assert_eq!(pointer_of(poses_from_record(&decode(text, file()).unwrap(), file()).unwrap_err()), "/poses/0");
        let text = br#"{"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": "8", "height": 8}"#;
        assert_eq!(pointer_of(decode::<IntrinsicsRecord>(text, file()).unwrap_err()), "/width");
        let text = br#"{"fx": -1, "fy": 1, "cx": 0, "cy": 0, "width": 8, "height": 8}"#;
        assert!(intrinsics_from_record(&decode(text, file()).unwrap(), file()).is_err());
    }

    #[test]
    fn tracks_round_trip_and_lengths_are_checked() {
        let tracks = TrackSet::new(
            2,
            2,
            vec![[0.5, 1.5], [f64::NAN, 2.0], [3.25, -1.0], [7.0, 8.0]],
            vec![true, false, true, true],
            0,
        )
        .unwrap();
        let record: TracksRecord = decode(&encode(&TracksRecord::from(&tracks)), file()).unwrap();
        let back = tracks_from_record(&record, file()).unwrap();
        assert_eq!(back.visible, tracks.visible);
        assert!(back.positions[1][0].is_nan());
        assert_eq!(back.positions[2], tracks.positions[2]);

        let mut short = record.clone();
        short.positions.pop();
        assert_eq!(pointer_of(tracks_from_record(&short, file()).unwrap_err()), "/positions");
        let mut hidden = record.clone();
        hidden.positions[0] = None;
        assert_eq!(pointer_of(tracks_from_record(&hidden, file()).unwrap_err()), "/positions/0");
        let mut flags = record;
        flags.visibility.push(true);
        assert_eq!(pointer_of(tracks_from_record(&flags, file()).unwrap_err()), "/visibility");
    }

    #[test]
    fn trailing_garbage_is_an_error() {
        assert!(decode::<IntrinsicsRecord>(br#"{"fx":1,"fy":1,"cx":0,"cy":0,"width":8,"height":8} x"#, file()).is_err());
    }
}
