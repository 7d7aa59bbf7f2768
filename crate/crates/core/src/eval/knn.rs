//! Exact nearest-neighbor queries over a static 3D point set.
use alloc::vec::Vec;

use crate::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// A kd-tree splitting at the median of the widest axis.
#[derive(Debug, Clone)]
pub struct KdTree {
    /// Points with their original indices, permuted into leaf order.
    entries: Vec<(Vec3, usize)>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the slice the tree was built from.
    pub index: usize,
    pub distance: f64,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree { entries: points.iter().copied().zip(0..).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let slice = &mut self.entries[start..end];
        let (mut lo, mut hi) = (slice[0].0, slice[0].0);
        for (p, _) in slice.iter() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let axis = extent.imax();
        if !(extent[axis] > 0.0) {
            return id;
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
        let value = slice[mid].0[axis];
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Closest point to `q`; `None` only for an empty tree.
    pub fn nearest(&self, q: &Vec3) -> Option<Neighbor> {
        if self.entries.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.visit(0, q, &mut best);
        Some(Neighbor { index: best.1, distance: num_traits::Float::sqrt(best.0) })
    }

    fn visit(&self, node: usize, q: &Vec3, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for (p, i) in &self.entries[start..end] {
                    let d = (p - q).norm_squared();
                    if d < best.0 || (d == best.0 && *i < best.1) {
                        *best = (d, *i);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let gap = q[axis] - value;
                let (near, far) = if gap < 0.0 { (left, right) } else { (right, left) };
                self.visit(near, q, best);
                if gap * gap <= best.0 {
                    self.visit(far, q, best);
                }
            }
        }
    }
}
