use alloc::vec::Vec;
use rand::Rng;

use crate::{FrameCloud, Grid, PoseSE3, Vec3};

pub(crate) fn random_vec(rng: &mut impl Rng, half: f64) -> Vec3 {
    Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

pub(crate) fn random_pose(rng: &mut impl Rng) -> PoseSE3 {
    PoseSE3::from_axis_angle(random_vec(rng, 2.0), random_vec(rng, 3.0))
}

pub(crate) fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| random_vec(rng, 1.0)).collect()
}

pub(crate) fn random_cloud(rng: &mut impl Rng, width: usize, height: usize) -> FrameCloud {
    let points = Grid::from_fn(width, height, |_, _| random_vec(rng, 2.0) + Vec3::new(0.0, 0.0, 3.0));
    FrameCloud::new(points, Grid::filled(width, height, true)).unwrap()
}
