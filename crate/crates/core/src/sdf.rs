//! Signed distance fields from closed meshes, clipping and voxelwise losses.
//!
//! Sign convention everywhere in the crate: negative inside the surface,
//! positive outside.

use std::fmt;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::geom::{point_triangle_distance_sq, solid_angle};
use crate::mesh::{Bvh, TriangleMesh};
use crate::volume::{GridGeometry, ScalarVolume};

/// Default clip bound in millimetres.
pub const DEFAULT_CLIP_MM: f64 = 5.0;

/// Signed distance (mm) from every voxel centre of `geometry` to `mesh`.
///
/// Distances are exact point-to-triangle minima. The sign comes from the
/// generalized winding number (`w > 0.5` is inside).
pub fn mesh_to_sdf(mesh: &TriangleMesh, geometry: &GridGeometry) -> Result<ScalarVolume> {
    mesh.require_closed()?;
    let bvh = Bvh::new(mesh);
    let data: Vec<f64> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = geometry.coords(idx);
            signed_distance(&bvh, &geometry.voxel_to_world([i as f64, j as f64, k as f64]))
        })
        .collect();
    ScalarVolume::new(geometry.clone(), data)
}

/// Signed distance from one point, using a prebuilt hierarchy.
pub fn signed_distance(bvh: &Bvh<'_>, p: &Point3<f64>) -> f64 {
    let d = bvh.distance(p);
    if d == 0.0 {
        0.0
    } else if bvh.contains(p) {
        -d
    } else {
        d
    }
}

/// All-pairs reference for [`mesh_to_sdf`] at a single point: minimum over
/// every triangle and the exact winding-number sum.
pub fn signed_distance_brute_force(mesh: &TriangleMesh, p: &Point3<f64>) -> f64 {
    let mut d2 = f64::INFINITY;
    let mut omega = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle_points(t);
        d2 = d2.min(point_triangle_distance_sq(p, a, b, c));
        omega += solid_angle(p, a, b, c);
    }
    let d = d2.sqrt();
    if d == 0.0 {
        0.0
    } else if omega / (4.0 * std::f64::consts::PI) > 0.5 {
        -d
    } else {
        d
    }
}

/// Clamps values to `[-bound, bound]`.
pub fn clip_sdf(vol: &ScalarVolume, bound: f64) -> Result<ScalarVolume> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(invalid(format!("clip bound must be positive, got {bound}")));
    }
    Ok(vol.map(|v| v.clamp(-bound, bound)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
    L2,
    Huber,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
            LossKind::Huber => "huber",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            "huber" => Ok(LossKind::Huber),
            _ => Err(invalid(format!("unknown loss kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Huber threshold in mm.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    1.0
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, delta: 1.0 }
    }

    pub fn huber(delta: f64) -> Self {
        Self {
            kind: LossKind::Huber,
            delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == LossKind::Huber && !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!("Huber delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }

    /// Loss contribution of a single residual.
    #[inline]
    pub fn per_voxel(&self, r: f64) -> f64 {
        match self.kind {
            LossKind::L1 => r.abs(),
            LossKind::L2 => r * r,
            LossKind::Huber => huber(r, self.delta),
        }
    }
}

#[inline]
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Voxelwise loss as the plain sum and as the per-voxel mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub kind: LossKind,
    pub sum: f64,
    pub mean: f64,
}

pub fn sdf_loss(pred: &ScalarVolume, target: &ScalarVolume, spec: &LossSpec) -> Result<LossReport> {
    spec.validate()?;
    if !pred.geometry().matches(target.geometry()) {
        return Err(Error::GeometryMismatch("prediction and target grids differ".into()));
    }
    let terms: Vec<f64> = pred
        .data()
        .par_iter()
        .zip(target.data())
        .map(|(p, t)| spec.per_voxel(p - t))
        .collect();
    let sum = pairwise_sum(&terms);
    Ok(LossReport {
        kind: spec.kind,
        sum,
        mean: sum / terms.len() as f64,
    })
}

const PAIRWISE_BLOCK: usize = 1024;

/// Pairwise summation over a fixed split tree, so the result does not
/// depend on the number of worker threads.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    let (a, b) = rayon::join(|| pairwise_sum(&values[..mid]), || pairwise_sum(&values[mid..]));
    a + b
}
