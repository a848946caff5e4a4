//! Shrink-compensated smoothing and area-preserving inflation.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{vertex_frames, TriangleMesh};
use crate::error::{invalid, Result};

/// Two-phase (λ then μ) uniform Laplacian smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothParams {
    pub iterations: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self {
            iterations: 10,
            lambda: 0.5,
            mu: -0.53,
        }
    }
}

impl SmoothParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lambda && self.lambda < -self.mu && -self.mu < 1.0) {
            return Err(invalid(format!(
                "smoothing needs 0 < lambda < -mu < 1, got lambda={} mu={}",
                self.lambda, self.mu
            )));
        }
        Ok(())
    }
}

fn laplacian_step(vertices: &[Point3<f64>], neighbors: &[Vec<u32>], factor: f64) -> Vec<Point3<f64>> {
    vertices
        .iter()
        .zip(neighbors)
        .map(|(p, nb)| {
            if nb.is_empty() {
                return *p;
            }
            let mean: Vector3<f64> =
                nb.iter().map(|&u| vertices[u as usize].coords).sum::<Vector3<f64>>() / nb.len() as f64;
            p + factor * (mean - p.coords)
        })
        .collect()
}

pub fn smooth(mesh: &TriangleMesh, params: &SmoothParams) -> Result<TriangleMesh> {
    params.validate()?;
    if params.iterations == 0 {
        return Ok(mesh.clone());
    }
    let neighbors = mesh.neighbors();
    let mut v = mesh.vertices.clone();
    for _ in 0..params.iterations {
        v = laplacian_step(&v, &neighbors, params.lambda);
        v = laplacian_step(&v, &neighbors, params.mu);
    }
    Ok(mesh.with_vertices(v))
}

/// Result of [`inflate`]: the inflated surface and, per vertex, the signed
/// displacement accumulated along the vertex normal (outward positive).
#[derive(Debug, Clone)]
pub struct Inflation {
    pub mesh: TriangleMesh,
    pub displacement: Vec<f64>,
}

const INFLATE_STEP: f64 = 0.5;

/// Uniform Laplacian smoothing with a uniform rescale about the centroid
/// after every iteration so total surface area stays at its initial value.
pub fn inflate(mesh: &TriangleMesh, iterations: usize) -> Result<Inflation> {
    mesh.require_sphere()?;
    let area0 = mesh.area();
    let neighbors = mesh.neighbors();
    let mut current = mesh.clone();
    let mut displacement = vec![0.0; mesh.vertices.len()];
    for _ in 0..iterations {
        let frames = vertex_frames(&current)?;
        let mut next = current.with_vertices(laplacian_step(&current.vertices, &neighbors, INFLATE_STEP));
        let c = next.centroid();
        let scale = (area0 / next.area()).sqrt();
        for p in &mut next.vertices {
            *p = c + (*p - c) * scale;
        }
        for (v, d) in displacement.iter_mut().enumerate() {
            *d += (next.vertices[v] - current.vertices[v]).dot(&frames.normals[v]);
        }
        current = next;
    }
    Ok(Inflation {
        mesh: current,
        displacement,
    })
}
