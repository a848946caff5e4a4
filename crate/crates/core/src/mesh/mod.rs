//! Triangle meshes: construction from masks, topology accounting and
//! repair, smoothing, vertex frames, self-intersection tests and inflation.

pub mod bvh;
mod frames;
pub mod geom;
mod intersect;
pub mod io;
mod isosurface;
mod repair;
pub mod shapes;
mod smooth;
mod tessellate;

pub use bvh::{Aabb, Bvh};
pub use frames::{vertex_frames, VertexFrame};
pub use intersect::{self_intersections, self_intersections_brute_force};
pub use isosurface::extract_isosurface;
pub use repair::{ensure_genus_zero, RepairOutcome, MAX_REPAIR_ROUNDS};
pub use smooth::{inflate, smooth, Inflation, SmoothParams};
pub use tessellate::tessellate;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Vertex positions in world millimetres plus triangle connectivity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

/// Summary of combinatorial checks on a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct TopologyReport {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler: i64,
    /// Every undirected edge bounds exactly two triangles.
    pub closed_manifold: bool,
    /// Each edge is traversed once in each direction.
    pub oriented: bool,
}

impl TopologyReport {
    pub fn is_valid_sphere(&self) -> bool {
        self.closed_manifold && self.oriented && self.euler == 2
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self { vertices, triangles };
        mesh.check_indices()?;
        Ok(mesh)
    }

    /// Index range and repeated-corner checks.
    pub fn check_indices(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(invalid(format!("triangle {t} references a vertex out of range")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(invalid(format!("triangle {t} repeats a vertex")));
            }
        }
        if let Some(v) = self.vertices.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(invalid(format!("vertex {v} is not finite")));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn triangle_points(&self, t: usize) -> [&Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [
            &self.vertices[a as usize],
            &self.vertices[b as usize],
            &self.vertices[c as usize],
        ]
    }

    pub fn triangle_bounds(&self, t: usize) -> Aabb {
        let mut b = Aabb::empty();
        for p in self.triangle_points(t) {
            b.grow(p);
        }
        b
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for p in &self.vertices {
            b.grow(p);
        }
        b
    }

    /// Area-weighted normal of triangle `t` (length = area).
    pub fn triangle_area_vector(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle_points(t);
        geom::area_vector(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area_vector(t).norm())
            .sum()
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (
                    self.vertices[a as usize].coords,
                    self.vertices[b as usize].coords,
                    self.vertices[c as usize].coords,
                );
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum: Vector3<f64> = self.vertices.iter().map(|p| p.coords).sum();
        Point3::from(sum / self.vertices.len().max(1) as f64)
    }

    /// Same mesh with every triangle's winding reversed.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Unique undirected edges, each as `(lo, hi)`, sorted.
    pub fn edges(&self) -> Vec<[u32; 2]> {
        let mut e: Vec<[u32; 2]> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[u, v]| [u.min(v), u.max(v)])
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Vertex neighbourhoods `N_v`: sorted unique adjacent vertices.
    pub fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut n = vec![Vec::new(); self.vertices.len()];
        for [u, v] in self.edges() {
            n[u as usize].push(v);
            n[v as usize].push(u);
        }
        for list in &mut n {
            list.sort_unstable();
        }
        n
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<u32>> {
        let mut vt = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                vt[v as usize].push(t as u32);
            }
        }
        vt
    }

    pub fn euler_characteristic(&self) -> i64 {
        euler_characteristic(self)
    }

    pub fn topology_report(&self) -> TopologyReport {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for &[a, b, c] in &self.triangles {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *directed.entry((u, v)).or_default() += 1;
            }
        }
        let mut undirected: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for (&(u, v), &n) in &directed {
            *undirected.entry((u.min(v), u.max(v))).or_default() += n;
        }
        let closed_manifold = undirected.values().all(|&n| n == 2);
        let oriented = directed
            .iter()
            .all(|(&(u, v), &n)| n == 1 && directed.get(&(v, u)) == Some(&1));
        let edges = undirected.len();
        TopologyReport {
            vertices: self.vertices.len(),
            edges,
            faces: self.triangles.len(),
            euler: self.vertices.len() as i64 - edges as i64 + self.triangles.len() as i64,
            closed_manifold,
            oriented,
        }
    }

    /// Fails unless the mesh is a closed, consistently oriented 2-manifold
    /// without degenerate triangles.
    pub fn require_closed(&self) -> Result<TopologyReport> {
        self.check_indices()?;
        if self.triangles.is_empty() {
            return Err(Error::Topology("mesh has no triangles".into()));
        }
        let report = self.topology_report();
        if !report.closed_manifold {
            return Err(Error::Topology("mesh is open or not edge-manifold".into()));
        }
        if !report.oriented {
            return Err(Error::Topology("mesh is not consistently oriented".into()));
        }
        if let Some(t) = (0..self.triangles.len()).find(|&t| self.triangle_area_vector(t).norm() <= 1e-14) {
            return Err(Error::Topology(format!("triangle {t} has zero area")));
        }
        Ok(report)
    }

    /// Closed, oriented, genus-0 (χ = 2).
    pub fn require_sphere(&self) -> Result<TopologyReport> {
        let report = self.require_closed()?;
        if report.euler != 2 {
            return Err(Error::Topology(format!(
                "expected Euler characteristic 2, got {}",
                report.euler
            )));
        }
        Ok(report)
    }

    /// Connectivity-preserving copy with new positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Self {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        Self {
            vertices,
            triangles: self.triangles.clone(),
        }
    }

    /// Disjoint union of two meshes.
    pub fn merged(&self, other: &TriangleMesh) -> Self {
        let off = self.vertices.len() as u32;
        let mut m = self.clone();
        m.vertices.extend_from_slice(&other.vertices);
        m.triangles
            .extend(other.triangles.iter().map(|&[a, b, c]| [a + off, b + off, c + off]));
        m
    }

    pub fn same_connectivity(&self, other: &TriangleMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.triangles == other.triangles
    }
}

/// `V − E + F` with `E` counted over unique undirected edges.
pub fn euler_characteristic(mesh: &TriangleMesh) -> i64 {
    mesh.vertices.len() as i64 - mesh.edges().len() as i64 + mesh.triangles.len() as i64
}
