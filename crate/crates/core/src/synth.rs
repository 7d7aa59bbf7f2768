//! Analytic synthetic scenes: planes and boxes ray-cast in closed form, seen by a
//! moving pinhole camera, with an optional rigidly moving box.
//!
//! Everything a reconstruction consumes (depth, flow, dynamic masks, tracks) and
//! everything an evaluation compares against (clouds, poses, 3D trajectories) is
//! derived from the same intersections, so the outputs are exact up to rounding.
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::f64::consts::TAU;

// Float math for no_std builds; std, when linked anywhere in the graph, provides it inherently.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corr::{ConfidenceMask, FlowField, TrackSet};
use crate::eval::Trajectory3D;
use crate::pose::rotation_from_axis_angle;
use crate::{
    assemble_global, CameraIntrinsics, CloudSequence, DepthMap, Error, FrameCloud, Grid, Mat3, PoseSE3, Result,
    SceneInputs, Vec3,
};

pub const DEFAULT_FRAMES: usize = 40;
pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_HEIGHT: usize = 96;
/// Query grid side for long-term tracks.
pub const DEFAULT_TRACK_GRID: usize = 35;

const MIN_HIT: f64 = 1e-9;
/// Relative depth agreement for a reprojected point to count as unoccluded.
const OCCLUSION_TOLERANCE: f64 = 1e-7;

/// In-plane rectangle limiting a plane: `|q·u| ≤ half_u` and `|q·(n×u)| ≤ half_v`,
/// with `q` measured from the plane's anchor point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneBounds {
    pub u_axis: Vec3,
    pub half_u: f64,
    pub half_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Plane { point: Vec3, normal: Vec3, bounds: Option<PlaneBounds> },
    Cuboid { center: Vec3, half_size: Vec3, rotation: Mat3 },
}

impl Primitive {
    pub fn plane(point: Vec3, normal: Vec3) -> Self {
        Primitive::Plane { point, normal: normal.normalize(), bounds: None }
    }

    /// A `2·half_u × 2·half_v` rectangle centered on `point`.
    pub fn card(point: Vec3, normal: Vec3, u_axis: Vec3, half_u: f64, half_v: f64) -> Self {
        let normal = normal.normalize();
        let u_axis = (u_axis - normal * normal.dot(&u_axis)).normalize();
        Primitive::Plane { point, normal, bounds: Some(PlaneBounds { u_axis, half_u, half_v }) }
    }

    /// Box rotated about its center by `yaw` radians around the vertical axis.
    pub fn cuboid(center: Vec3, half_size: Vec3, yaw: f64) -> Self {
        Primitive::Cuboid { center, half_size, rotation: rotation_from_axis_angle(&Vec3::new(0.0, yaw, 0.0)) }
    }

    /// Nearest ray parameter `s > 0` with `origin + s·dir` on the surface.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match self {
            Primitive::Plane { point, normal, bounds } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let s = normal.dot(&(point - origin)) / denom;
                if !(s > MIN_HIT) {
                    return None;
                }
                if let Some(b) = bounds {
                    let q = origin + dir * s - point;
                    let v_axis = normal.cross(&b.u_axis);
                    if q.dot(&b.u_axis).abs() > b.half_u || q.dot(&v_axis).abs() > b.half_v {
                        return None;
                    }
                }
                Some(s)
            }
            Primitive::Cuboid { center, half_size, rotation } => {
                let o = rotation.transpose() * (origin - center);
                let d = rotation.transpose() * dir;
                let (mut near, mut far) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if d[k].abs() < 1e-15 {
                        if o[k].abs() > half_size[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half_size[k] - o[k]) / d[k];
                    let b = (half_size[k] - o[k]) / d[k];
                    near = near.max(a.min(b));
                    far = far.min(a.max(b));
                }
                (near <= far && near > MIN_HIT).then_some(near)
            }
        }
    }
}

/// A box moving rigidly: at frame `t` its pose is rotation `exp(ω·t)·R₀` about a
/// center `c₀ + v·t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingBox {
    pub half_size: Vec3,
    pub center: Vec3,
    pub rotation: Mat3,
    /// Meters per frame.
    pub velocity: Vec3,
    /// Axis-angle radians per frame.
    pub angular_velocity: Vec3,
}

impl MovingBox {
    /// Object-to-world transform at frame `t`.
    pub fn pose(&self, t: usize) -> PoseSE3 {
        let t = t as f64;
        PoseSE3::new(
            rotation_from_axis_angle(&(self.angular_velocity * t)) * self.rotation,
            self.center + self.velocity * t,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CameraPath {
    /// Looks at `target` from a horizontal arc of `arc` radians at distance `radius`,
    /// centered behind the target along −z.
    Orbit { target: Vec3, radius: f64, arc: f64 },
    /// Pure translation; orientation stays fixed looking down +z.
    Dolly { start: Vec3, step: Vec3 },
    /// Forward drift plus a smooth seeded wobble in rotation (radians) and
    /// translation (meters).
    Handheld { start: Vec3, step: Vec3, rotation_amplitude: f64, translation_amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Handheld camera over the cluttered room, with one moving box.
    Default,
    /// The default room and camera without the moving box.
    Static,
    /// Static room seen from an orbit.
    Orbit,
    /// Static room, translation-only camera.
    Dolly,
    /// Fronto-parallel cards in front of a back wall, translation-only camera; every
    /// visible surface is parallel to the image plane.
    Layered,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Default, Preset::Static, Preset::Orbit, Preset::Dolly, Preset::Layered];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Static => "static",
            Preset::Orbit => "orbit",
            Preset::Dolly => "dolly",
            Preset::Layered => "layered",
        }
    }

    pub fn from_name(name: &str) -> Result<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let known: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            Error::InvalidParameter(format!("unknown preset {name:?}; expected one of {}", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub num_frames: usize,
    pub intrinsics: CameraIntrinsics,
    pub path: CameraPath,
    pub statics: Vec<Primitive>,
    pub dynamic: Option<MovingBox>,
}

fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 64.0, cy: 48.0, width: DEFAULT_WIDTH, height: DEFAULT_HEIGHT }
}

fn jitter(rng: &mut ChaCha8Rng, half: f64) -> Vec3 {
    Vec3::new(rng.random_range(-half..=half), rng.random_range(-half..=half), rng.random_range(-half..=half))
}

/// Height of the floor below the first camera. Low enough that bilinear sampling of the
/// floor near the back wall stays accurate to well under a millimeter.
const FLOOR_Y: f64 = 0.8;

/// World frame: y points down, the first camera sits near the origin looking down +z.
fn room(rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    let mut out = vec![
        Primitive::plane(Vec3::new(0.0, 0.0, 2.6), Vec3::new(0.0, 0.0, -1.0)),
        Primitive::plane(Vec3::new(0.0, FLOOR_Y, 0.0), Vec3::new(0.0, -1.0, 0.0)),
        Primitive::plane(Vec3::new(-1.5, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)),
    ];
    let boxes = [
        (Vec3::new(-0.45, 0.40, 1.70), Vec3::new(0.18, 0.15, 0.15), 0.3),
        (Vec3::new(0.50, 0.35, 2.00), Vec3::new(0.20, 0.20, 0.20), -0.4),
        (Vec3::new(0.05, 0.47, 1.40), Vec3::new(0.12, 0.08, 0.10), 0.8),
        (Vec3::new(0.85, 0.10, 2.30), Vec3::new(0.12, 0.45, 0.12), 0.1),
        (Vec3::new(-0.90, 0.30, 2.20), Vec3::new(0.15, 0.25, 0.20), -0.2),
    ];
    for (center, half, yaw) in boxes {
        let mut c = center + jitter(rng, 0.03);
        // Keep the box resting on the floor.
        c.y = FLOOR_Y - half.y;
        let yaw = yaw + rng.random_range(-0.1..=0.1);
        out.push(Primitive::cuboid(c, half, yaw));
    }
    out
}

fn moving_box(rng: &mut ChaCha8Rng) -> MovingBox {
    MovingBox {
        half_size: Vec3::new(0.09, 0.07, 0.09),
        center: Vec3::new(-0.15, 0.15, 1.15) + jitter(rng, 0.02),
        rotation: rotation_from_axis_angle(&Vec3::new(0.2, 0.5, 0.1)),
        velocity: Vec3::new(0.006, -0.002, 0.003) + jitter(rng, 0.0005),
        angular_velocity: Vec3::new(0.01, 0.03, 0.005),
    }
}

fn handheld() -> CameraPath {
    CameraPath::Handheld {
        start: Vec3::zeros(),
        step: Vec3::new(0.002, 0.0, 0.008),
        rotation_amplitude: 0.03,
        translation_amplitude: 0.01,
    }
}

impl SceneSpec {
    pub fn preset(preset: Preset, seed: u64, num_frames: usize) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let intrinsics = default_intrinsics();
        let (path, statics, dynamic) = match preset {
            Preset::Default => {
                let statics = room(&mut rng);
                (handheld(), statics, Some(moving_box(&mut rng)))
            }
            Preset::Static => {
                let statics = room(&mut rng);
                // Draw the moving box anyway so the static room matches the default one.
                let _ = moving_box(&mut rng);
                (handheld(), statics, None)
            }
            Preset::Orbit => {
                let statics = room(&mut rng);
                let path = CameraPath::Orbit { target: Vec3::new(0.0, 0.3, 1.9), radius: 1.9, arc: 0.5 };
                (path, statics, None)
            }
            Preset::Dolly => {
                let statics = room(&mut rng);
                (CameraPath::Dolly { start: Vec3::zeros(), step: Vec3::new(0.003, 0.0, 0.01) }, statics, None)
            }
            Preset::Layered => {
                let facing = Vec3::new(0.0, 0.0, -1.0);
                let x = Vec3::x();
                let mut statics = vec![Primitive::plane(Vec3::new(0.0, 0.0, 2.6), facing)];
                let cards = [
                    (Vec3::new(-0.35, -0.15, 1.2), 0.20, 0.15),
                    (Vec3::new(0.30, 0.20, 1.6), 0.30, 0.20),
                    (Vec3::new(0.10, -0.35, 2.0), 0.45, 0.20),
                    (Vec3::new(-0.55, 0.40, 2.0), 0.30, 0.25),
                ];
                for (center, hu, hv) in cards {
                    statics.push(Primitive::card(center + jitter(&mut rng, 0.02), facing, x, hu, hv));
                }
                (CameraPath::Dolly { start: Vec3::zeros(), step: Vec3::new(0.004, 0.002, 0.006) }, statics, None)
            }
        };
        SceneSpec { seed, num_frames, intrinsics, path, statics, dynamic }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.num_frames == 0 {
            return Err(Error::InvalidParameter("a scene needs at least one frame".into()));
        }
        Ok(())
    }
}

/// One smooth scalar signal in `[-1, 1]`: a normalized mix of two sinusoids.
#[derive(Debug, Clone, Copy)]
struct Wobble {
    freq: [f64; 2],
    phase: [f64; 2],
    weight: [f64; 2],
}

impl Wobble {
    fn draw(rng: &mut ChaCha8Rng) -> Wobble {
        let mut weight = [rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)];
        let total = weight[0] + weight[1];
        weight[0] /= total;
        weight[1] /= total;
        Wobble {
            freq: [rng.random_range(0.08..0.3), rng.random_range(0.08..0.3)],
            phase: [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
            weight,
        }
    }

    fn at(&self, t: f64) -> f64 {
        (0..2).map(|k| self.weight[k] * (self.freq[k] * t + self.phase[k]).sin()).sum()
    }
}

fn look_at(eye: Vec3, target: Vec3) -> PoseSE3 {
    let z = (target - eye).normalize();
    let x = Vec3::y().cross(&z).normalize();
    let y = z.cross(&x);
    PoseSE3::new(Mat3::from_columns(&[x, y, z]), eye)
}

fn camera_poses(spec: &SceneSpec) -> Vec<PoseSE3> {
    let n = spec.num_frames;
    match &spec.path {
        CameraPath::Orbit { target, radius, arc } => (0..n)
            .map(|t| {
                let frac = if n > 1 { t as f64 / (n - 1) as f64 } else { 0.5 };
                let theta = arc * (frac - 0.5);
                look_at(target + Vec3::new(theta.sin(), 0.0, -theta.cos()) * *radius, *target)
            })
            .collect(),
        CameraPath::Dolly { start, step } => {
            (0..n).map(|t| PoseSE3::from_translation(start + step * t as f64)).collect()
        }
        CameraPath::Handheld { start, step, rotation_amplitude, translation_amplitude } => {
            // Separate stream so geometry draws do not shift with the path.
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6a09_e667_f3bc_c908);
            let wobble: Vec<Wobble> = (0..6).map(|_| Wobble::draw(&mut rng)).collect();
            (0..n)
                .map(|t| {
                    let tf = t as f64;
                    let w = |k: usize| wobble[k].at(tf);
                    let angle = Vec3::new(w(0), w(1), w(2)) * *rotation_amplitude;
                    let offset = Vec3::new(w(3), w(4), w(5)) * *translation_amplitude;
                    PoseSE3::from_axis_angle(angle, start + step * tf + offset)
                })
                .collect()
        }
    }
}

/// Which kind of surface a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Camera-frame depth (the ray has unit z in camera coordinates).
    pub depth: f64,
    pub world: Vec3,
    pub surface: Surface,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub depth: DepthMap,
    /// Camera-frame points computed from the hit positions.
    pub cloud: FrameCloud,
    /// Exact silhouette of the moving box.
    pub dynamic: ConfidenceMask,
}

/// Tracks together with their world motion expressed in the first camera's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTracks {
    pub tracks: TrackSet,
    pub trajectories: Vec<Trajectory3D>,
    /// Whether each query point starts on the moving box.
    pub on_dynamic: Vec<bool>,
}

/// A [`SceneSpec`] with its camera and object trajectories resolved.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    cameras: Vec<PoseSE3>,
    objects: Vec<PoseSE3>,
}

/// Evenly spaced query coordinates: cell `k` of `n` over `len` pixels, snapped to a
/// pixel center.
pub fn grid_coordinates(n: usize, len: usize) -> Vec<f64> {
    (0..n).map(|k| ((k as f64 + 0.5) * len as f64 / n as f64).floor() + 0.5).collect()
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Scene> {
        spec.validate()?;
        let cameras = camera_poses(&spec);
        let objects = match &spec.dynamic {
            Some(b) => (0..spec.num_frames).map(|t| b.pose(t)).collect(),
            None => Vec::new(),
        };
        Ok(Scene { spec, cameras, objects })
    }

    pub fn preset(preset: Preset, seed: u64, num_frames: usize) -> Result<Scene> {
        Scene::new(SceneSpec::preset(preset, seed, num_frames))
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn num_frames(&self) -> usize {
        self.spec.num_frames
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.spec.intrinsics
    }

    /// Camera-to-world pose of frame `t`.
    pub fn camera_pose(&self, t: usize) -> PoseSE3 {
        self.cameras[t]
    }

    pub fn camera_poses(&self) -> &[PoseSE3] {
        &self.cameras
    }

    /// Object-to-world pose of the moving box at frame `t`, if there is one.
    pub fn object_pose(&self, t: usize) -> Option<PoseSE3> {
        self.objects.get(t).copied()
    }

    fn check_frame(&self, t: usize) -> Result<()> {
        if t >= self.num_frames() {
            return Err(Error::InvalidParameter(format!("frame {t} outside a {}-frame scene", self.num_frames())));
        }
        Ok(())
    }

    /// Closest surface along a world-space ray at frame `t`.
    pub fn cast(&self, t: usize, origin: &Vec3, dir: &Vec3) -> Option<(f64, Surface)> {
        let mut best: Option<(f64, Surface)> = None;
        let mut consider = |s: Option<f64>, surface| {
            if let Some(s) = s {
                if best.is_none_or(|(b, _)| s < b) {
                    best = Some((s, surface));
                }
            }
        };
        for p in &self.spec.statics {
            consider(p.intersect(origin, dir), Surface::Static);
        }
        if let (Some(b), Some(m)) = (&self.spec.dynamic, self.objects.get(t)) {
            let cuboid = Primitive::Cuboid { center: m.translation, half_size: b.half_size, rotation: m.rotation };
            consider(cuboid.intersect(origin, dir), Surface::Dynamic);
        }
        best
    }

    /// Surface seen through image position `(u, v)` of frame `t`.
    pub fn cast_pixel(&self, t: usize, u: f64, v: f64) -> Option<Hit> {
        let cam = &self.cameras[t];
        let dir = cam.rotation * self.spec.intrinsics.ray(u, v);
        let (s, surface) = self.cast(t, &cam.translation, &dir)?;
        Some(Hit { depth: s, world: cam.translation + dir * s, surface })
    }

    pub fn render_frame(&self, t: usize) -> Result<RenderedFrame> {
        self.check_frame(t)?;
        let (w, h) = (self.spec.intrinsics.width, self.spec.intrinsics.height);
        let hits = Grid::from_fn(w, h, |row, col| {
            let (u, v) = CameraIntrinsics::pixel_center(row, col);
            self.cast_pixel(t, u, v)
        });
        let depth = DepthMap::new(hits.map(|hit| hit.map_or(0.0, |x| x.depth)));
        let to_camera = self.cameras[t].inverse();
        let points = hits.map(|hit| hit.map_or(Vec3::zeros(), |x| to_camera.apply(&x.world)));
        let cloud = FrameCloud::new(points, depth.valid.clone())?;
        let dynamic = ConfidenceMask::from_binary(&hits.map(|hit| hit.is_some_and(|x| x.surface == Surface::Dynamic)));
        Ok(RenderedFrame { depth, cloud, dynamic })
    }

    /// World position at frame `j` of the surface point that sits at `world` in frame
    /// `i`: static points stay put, points on the moving box follow it.
    pub fn carry(&self, surface: Surface, world: &Vec3, i: usize, j: usize) -> Vec3 {
        match surface {
            Surface::Static => *world,
            Surface::Dynamic => self.objects[j].apply(&self.objects[i].inverse().apply(world)),
        }
    }

    /// Where the surface point seen at `(u, v)` in frame `i` appears in frame `j`, or
    /// `None` if nothing is hit, it leaves the image, or it is occluded.
    pub fn correspondence(&self, i: usize, j: usize, u: f64, v: f64) -> Option<(f64, f64)> {
        let hit = self.cast_pixel(i, u, v)?;
        self.reproject(&hit, i, j).map(|(uv, _)| uv)
    }

    /// Projection into frame `j` of a frame-`i` hit, with its world position at `j`.
    fn reproject(&self, hit: &Hit, i: usize, j: usize) -> Option<((f64, f64), Vec3)> {
        let world = self.carry(hit.surface, &hit.world, i, j);
        let local = self.cameras[j].inverse().apply(&world);
        let (u, v) = self.spec.intrinsics.project(&local)?;
        if !self.spec.intrinsics.contains(u, v) {
            return None;
        }
        let seen = self.cast_pixel(j, u, v)?;
        ((seen.depth - local.z).abs() <= OCCLUSION_TOLERANCE * local.z).then_some(((u, v), world))
    }

    /// Exact optical flow from frame `i` to frame `j`.
    pub fn render_flow(&self, i: usize, j: usize) -> Result<FlowField> {
        self.check_frame(i)?;
        self.check_frame(j)?;
        let (w, h) = (self.spec.intrinsics.width, self.spec.intrinsics.height);
        let flow = Grid::from_fn(w, h, |row, col| {
            let (u, v) = CameraIntrinsics::pixel_center(row, col);
            self.correspondence(i, j, u, v).map(|(x, y)| (x - u, y - v))
        });
        let du = flow.map(|f| f.map_or(0.0, |f| f.0));
        let dv = flow.map(|f| f.map_or(0.0, |f| f.1));
        FlowField::new(du, dv, flow.map(|f| f.is_some()))
    }

    /// Tracks seeded on an `n × n` grid of pixel centers of frame 0.
    pub fn render_tracks(&self, grid: usize) -> Result<RenderedTracks> {
        let intr = &self.spec.intrinsics;
        if grid == 0 || grid > intr.width || grid > intr.height {
            return Err(Error::InvalidParameter(format!(
                "a {grid}×{grid} track grid does not fit a {}×{} image",
                intr.width, intr.height
            )));
        }
        let frames = self.num_frames();
        let to_first = self.cameras[0].inverse();
        let rows = grid_coordinates(grid, intr.height);
        let cols = grid_coordinates(grid, intr.width);
        let mut positions = Vec::with_capacity(grid * grid * frames);
        let mut visible = Vec::with_capacity(grid * grid * frames);
        let mut trajectories = Vec::with_capacity(grid * grid);
        let mut on_dynamic = Vec::with_capacity(grid * grid);
        for &v in &rows {
            for &u in &cols {
                let seed = self.cast_pixel(0, u, v);
                on_dynamic.push(seed.is_some_and(|s| s.surface == Surface::Dynamic));
                let mut traj =
                    Trajectory3D { positions: Vec::with_capacity(frames), visible: Vec::with_capacity(frames) };
                for t in 0..frames {
                    let Some(hit) = seed else {
                        positions.push([u, v]);
                        visible.push(false);
                        traj.positions.push(Vec3::zeros());
                        traj.visible.push(false);
                        continue;
                    };
                    let world = self.carry(hit.surface, &hit.world, 0, t);
                    traj.positions.push(to_first.apply(&world));
                    let seen = if t == 0 { Some((u, v)) } else { self.reproject(&hit, 0, t).map(|(uv, _)| uv) };
                    match seen {
                        Some((x, y)) => {
                            positions.push([x, y]);
                            visible.push(true);
                            traj.visible.push(true);
                        }
                        None => {
                            let local = self.cameras[t].inverse().apply(&world);
                            let uv = intr.project(&local).filter(|&(x, y)| x.is_finite() && y.is_finite());
                            positions.push(uv.map_or([0.0, 0.0], |(x, y)| [x, y]));
                            visible.push(false);
                            traj.visible.push(false);
                        }
                    }
                }
                trajectories.push(traj);
            }
        }
        let tracks = TrackSet::new(grid * grid, frames, positions, visible, 0)?;
        Ok(RenderedTracks { tracks, trajectories, on_dynamic })
    }

    /// Exact global pointcloud sequence, anchored at the first camera.
    pub fn ground_truth(&self) -> Result<CloudSequence> {
        let clouds =
            (0..self.num_frames()).map(|t| self.render_frame(t).map(|f| f.cloud)).collect::<Result<Vec<_>>>()?;
        assemble_global(&clouds, &self.cameras, &self.spec.intrinsics)
    }

    /// Exact camera-to-world poses relative to the first camera.
    pub fn relative_poses(&self) -> Vec<PoseSE3> {
        let first = self.cameras[0].inverse();
        self.cameras.iter().map(|p| first.compose(p)).collect()
    }

    /// Everything a reconstruction consumes, rendered exactly. References equal the
    /// depths; tracks are present if `track_grid` is given.
    pub fn inputs(&self, track_grid: Option<usize>) -> Result<SceneInputs> {
        let frames = (0..self.num_frames()).map(|t| self.render_frame(t)).collect::<Result<Vec<_>>>()?;
        let flows = (1..self.num_frames()).map(|t| self.render_flow(t - 1, t)).collect::<Result<Vec<_>>>()?;
        let tracks = track_grid.map(|n| self.render_tracks(n).map(|r| r.tracks)).transpose()?;
        let depths: Vec<DepthMap> = frames.iter().map(|f| f.depth.clone()).collect();
        Ok(SceneInputs {
            references: Some(depths.clone()),
            depths,
            intrinsics: self.spec.intrinsics,
            flows,
            dynamic_masks: frames.into_iter().map(|f| f.dynamic).collect(),
            tracks,
        })
    }

    /// Largest fraction of any frame covered by the moving box.
    pub fn max_dynamic_fraction(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for t in 0..self.num_frames() {
            let frame = self.render_frame(t)?;
            worst = worst.max(frame.dynamic.mass() / frame.depth.values.len() as f64);
        }
        Ok(worst)
    }
}

/// Human-readable summary, mostly for manifests and logs.
pub fn describe(spec: &SceneSpec) -> String {
    let path = match spec.path {
        CameraPath::Orbit { .. } => "orbit",
        CameraPath::Dolly { .. } => "dolly",
        CameraPath::Handheld { .. } => "handheld",
    };
    format!(
        "{} frames, {}x{}, {} camera, {} static primitives, {}",
        spec.num_frames,
        spec.intrinsics.width,
        spec.intrinsics.height,
        path,
        spec.statics.len(),
        if spec.dynamic.is_some() { "one moving box" } else { "no moving object" }
    )
}
