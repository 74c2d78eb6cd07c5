//! Directions on the unit sphere, node-local frames and diameter-bounded
//! clusters of received directions.
//!
//! All distances are Euclidean chord lengths `‖a − b‖ ∈ [0, 2]`. Vectors are
//! only ever compared when they are expressed in the same frame; protocol code
//! compares vectors in one node's local frame, the monitor compares
//! global-frame representations.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance applied to every geometric identity.
pub const EPS: f64 = 1e-9;

/// Capacity of the bitset used by the exact cluster search.
pub const MAX_CLUSTER_CANDIDATES: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("vector ({0}, {1}, {2}) is not unit length")]
    NotUnit(f64, f64, f64),
    #[error("vector has zero length")]
    ZeroLength,
    #[error("mean of cluster members has zero length")]
    DegenerateMean,
    #[error("matrix is not a proper rotation")]
    NotRotation,
}

/// A direction on the unit sphere.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVector {
    pub const X: UnitVector = UnitVector { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: UnitVector = UnitVector { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: UnitVector = UnitVector { x: 0.0, y: 0.0, z: 1.0 };

    /// Accepts components whose norm is 1 within [`EPS`]; the components are
    /// stored as given.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let norm2 = x * x + y * y + z * z;
        if !norm2.is_finite() || (norm2 - 1.0).abs() > EPS {
            return Err(GeometryError::NotUnit(x, y, z));
        }
        Ok(UnitVector { x, y, z })
    }

    /// Scales an arbitrary non-zero vector onto the sphere.
    pub fn normalize(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let len = (x * x + y * y + z * z).sqrt();
        if !len.is_finite() || len < 1e-12 {
            return Err(GeometryError::ZeroLength);
        }
        Ok(UnitVector { x: x / len, y: y / len, z: z / len })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Any unit vector orthogonal to `self`.
    pub fn orthogonal(&self) -> UnitVector {
        let helper = if self.x.abs() < 0.9 { UnitVector::X } else { UnitVector::Y };
        let [a, b, c] = cross(self.to_array(), helper.to_array());
        UnitVector::normalize(a, b, c).expect("helper axis is never parallel")
    }

    /// Rotates `self` by `angle` radians about `axis` (Rodrigues).
    pub fn rotate_about(&self, axis: &UnitVector, angle: f64) -> UnitVector {
        let v = self.to_array();
        let k = axis.to_array();
        let (s, c) = angle.sin_cos();
        let kxv = cross(k, v);
        let kdv = axis.dot(self);
        let r = [
            v[0] * c + kxv[0] * s + k[0] * kdv * (1.0 - c),
            v[1] * c + kxv[1] * s + k[1] * kdv * (1.0 - c),
            v[2] * c + kxv[2] * s + k[2] * kdv * (1.0 - c),
        ];
        UnitVector::normalize(r[0], r[1], r[2]).expect("rotation preserves length")
    }
}

impl fmt::Debug for UnitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}, {:.6})", self.x, self.y, self.z)
    }
}

impl TryFrom<[f64; 3]> for UnitVector {
    type Error = GeometryError;

    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        UnitVector::new(v[0], v[1], v[2])
    }
}

impl From<UnitVector> for [f64; 3] {
    fn from(v: UnitVector) -> Self {
        v.to_array()
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Euclidean chord distance between two unit vectors in a common frame.
pub fn distance(a: &UnitVector, b: &UnitVector) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// A node's private frame: the rotation taking local coordinates to global
/// coordinates, `global = R · local`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    rotation: [[f64; 3]; 3],
}

impl LocalFrame {
    pub const IDENTITY: LocalFrame = LocalFrame {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_matrix(rotation: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let r = rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > EPS {
                    return Err(GeometryError::NotRotation);
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > EPS {
            return Err(GeometryError::NotRotation);
        }
        Ok(LocalFrame { rotation })
    }

    /// Frame from a quaternion `(w, x, y, z)`; the quaternion is normalized first.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let len = (w * w + x * x + y * y + z * z).sqrt();
        if !len.is_finite() || len < 1e-12 {
            return Err(GeometryError::ZeroLength);
        }
        let (w, x, y, z) = (w / len, x / len, y / len, z / len);
        let rotation = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        LocalFrame::from_matrix(rotation)
    }

    pub fn from_axis_angle(axis: &UnitVector, angle: f64) -> LocalFrame {
        let (s, c) = (angle / 2.0).sin_cos();
        LocalFrame::from_quaternion(c, axis.x * s, axis.y * s, axis.z * s)
            .expect("unit axis gives a unit quaternion")
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.rotation
    }

    /// Local coordinates → global coordinates.
    pub fn to_global(&self, v: &UnitVector) -> UnitVector {
        let r = &self.rotation;
        let out = [
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        ];
        UnitVector::normalize(out[0], out[1], out[2]).expect("rotation preserves length")
    }

    /// Global coordinates → local coordinates.
    pub fn to_local(&self, v: &UnitVector) -> UnitVector {
        let r = &self.rotation;
        let out = [
            r[0][0] * v.x + r[1][0] * v.y + r[2][0] * v.z,
            r[0][1] * v.x + r[1][1] * v.y + r[2][1] * v.z,
            r[0][2] * v.x + r[1][2] * v.y + r[2][2] * v.z,
        ];
        UnitVector::normalize(out[0], out[1], out[2]).expect("rotation preserves length")
    }

    /// Composes `self` after `other`: `(self ∘ other)(v) = self(other(v))`.
    pub fn compose(&self, other: &LocalFrame) -> LocalFrame {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        LocalFrame { rotation }
    }
}

impl fmt::Debug for LocalFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalFrame").field("rotation", &self.rotation).finish()
    }
}

/// Re-expresses `v` (given in `from`) in the frame `to`: applies `to⁻¹ ∘ from`.
pub fn to_frame(v: &UnitVector, from: &LocalFrame, to: &LocalFrame) -> UnitVector {
    if from == to {
        return *v;
    }
    to.to_local(&from.to_global(v))
}

/// Uniform direction on S² (normalized isotropic Gaussian).
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> UnitVector {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        if let Ok(v) = UnitVector::normalize(x, y, z) {
            return v;
        }
    }
}

/// Haar-uniform rotation from a uniform unit quaternion.
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R) -> LocalFrame {
    loop {
        let q: [f64; 4] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        if let Ok(frame) = LocalFrame::from_quaternion(q[0], q[1], q[2], q[3]) {
            return frame;
        }
    }
}

/// Normalized arithmetic mean.
pub fn cluster_center<'a, I>(members: I) -> Result<UnitVector, GeometryError>
where
    I: IntoIterator<Item = &'a UnitVector>,
{
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for v in members {
        sum[0] += v.x;
        sum[1] += v.y;
        sum[2] += v.z;
        count += 1;
    }
    if count == 0 {
        return Err(GeometryError::DegenerateMean);
    }
    let k = count as f64;
    let mean = [sum[0] / k, sum[1] / k, sum[2] / k];
    let len = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
    if len < EPS {
        return Err(GeometryError::DegenerateMean);
    }
    UnitVector::normalize(mean[0], mean[1], mean[2]).map_err(|_| GeometryError::DegenerateMean)
}

pub type NodeId = usize;

/// Classical type tag carried next to a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirTag {
    Init,
    Echo,
    Ready1,
    Ready2,
}

impl DirTag {
    pub const ALL: [DirTag; 4] = [DirTag::Init, DirTag::Echo, DirTag::Ready1, DirTag::Ready2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            DirTag::Init => "init",
            DirTag::Echo => "echo",
            DirTag::Ready1 => "ready1",
            DirTag::Ready2 => "ready2",
        }
    }
}

/// Small set of [`DirTag`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TagSet(u8);

impl TagSet {
    pub const ECHO: TagSet = TagSet(1 << DirTag::Echo as u8);
    pub const READY: TagSet = TagSet((1 << DirTag::Ready1 as u8) | (1 << DirTag::Ready2 as u8));

    pub fn of(tags: &[DirTag]) -> TagSet {
        TagSet(tags.iter().fold(0, |acc, t| acc | (1 << *t as u8)))
    }

    pub fn contains(&self, tag: DirTag) -> bool {
        self.0 & (1 << tag as u8) != 0
    }
}

/// A direction received by a node, in that node's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedDirection {
    pub origin: NodeId,
    pub tag: DirTag,
    pub direction: UnitVector,
    pub arrival_order: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCluster {
    pub members: Vec<TaggedDirection>,
    pub diameter_param: f64,
    pub center: UnitVector,
    pub allowed_tags: TagSet,
}

impl DirectionCluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Sorted origin ids of the members.
    pub fn origins(&self) -> Vec<NodeId> {
        let mut o: Vec<_> = self.members.iter().map(|m| m.origin).collect();
        o.sort_unstable();
        o
    }
}

/// Exact maximum-cardinality cluster of tag-eligible directions whose members
/// are pairwise within `diameter_param`, or `None` when the maximum is below
/// `min_size`.
///
/// A cluster holds at most one direction per origin, so its size counts
/// distinct senders. Among maximum clusters the one with the lexicographically
/// smallest sorted `(origin, tag)` sequence is returned. A maximum cluster
/// whose mean is degenerate is reported as absent.
///
/// # Panics
///
/// Panics when more than [`MAX_CLUSTER_CANDIDATES`] entries are eligible.
pub fn find_cluster(
    store: &[TaggedDirection],
    allowed_tags: TagSet,
    diameter_param: f64,
    min_size: usize,
) -> Option<DirectionCluster> {
    let min_size = min_size.max(1);
    let mut cands: Vec<&TaggedDirection> =
        store.iter().filter(|td| allowed_tags.contains(td.tag)).collect();
    if cands.len() < min_size {
        return None;
    }
    assert!(
        cands.len() <= MAX_CLUSTER_CANDIDATES,
        "find_cluster supports at most {MAX_CLUSTER_CANDIDATES} eligible directions"
    );
    cands.sort_by_key(|td| (td.origin, td.tag));

    let k = cands.len();
    let limit = diameter_param + EPS;
    let mut adj = vec![0u128; k];
    for i in 0..k {
        for j in (i + 1)..k {
            if cands[i].origin != cands[j].origin
                && distance(&cands[i].direction, &cands[j].direction) <= limit
            {
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
        }
    }

    let all: u128 = if k == 128 { u128::MAX } else { (1u128 << k) - 1 };
    let mut search = CliqueSearch { adj: &adj, best: 0, best_len: min_size - 1 };
    search.expand(0, 0, all);
    if search.best_len < min_size || search.best == 0 {
        return None;
    }

    let members: Vec<TaggedDirection> =
        (0..k).filter(|i| search.best & (1 << i) != 0).map(|i| *cands[i]).collect();
    let center = cluster_center(members.iter().map(|m| &m.direction)).ok()?;
    Some(DirectionCluster { members, diameter_param, center, allowed_tags })
}

/// Branch and bound over cliques in ascending index order; the first clique
/// reaching a new maximum is the lexicographically smallest of that size.
struct CliqueSearch<'a> {
    adj: &'a [u128],
    best: u128,
    best_len: usize,
}

impl CliqueSearch<'_> {
    fn expand(&mut self, current: u128, len: usize, mut cands: u128) {
        if len > self.best_len {
            self.best_len = len;
            self.best = current;
        }
        while cands != 0 {
            if len + cands.count_ones() as usize <= self.best_len {
                return;
            }
            let v = cands.trailing_zeros() as usize;
            cands &= !(1u128 << v);
            // only higher indices keep the enumeration in lexicographic order
            let next = cands & self.adj[v];
            self.expand(current | (1 << v), len + 1, next);
        }
    }
}
