//! Cortical measurements and surface-to-surface distances.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::geom::point_triangle_distance_sq;
use crate::mesh::io::VertexScalars;
use crate::mesh::{vertex_frames, Bvh, Inflation, TriangleMesh};
use crate::sdf::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Thickness,
    SulcalDepth,
    Curvature,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::Thickness => "thickness",
            Quantity::SulcalDepth => "sulcal_depth",
            Quantity::Curvature => "curvature",
        })
    }
}

/// One value per vertex of the mesh it was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceScalars {
    pub quantity: Quantity,
    pub values: Vec<f64>,
}

impl SurfaceScalars {
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        pairwise_sum(&self.values) / self.values.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let m = self.mean();
        let sq: Vec<f64> = self.values.iter().map(|v| (v - m) * (v - m)).collect();
        (pairwise_sum(&sq) / self.values.len() as f64).sqrt()
    }

    pub fn to_vertex_scalars(&self) -> VertexScalars {
        VertexScalars {
            name: self.quantity.to_string(),
            values: self.values.clone(),
        }
    }
}

fn distances_to(points: &TriangleMesh, surface: &Bvh<'_>) -> Vec<f64> {
    points.vertices.par_iter().map(|p| surface.distance(p)).collect()
}

/// Per vertex, the mean of the white-to-pial and pial-to-white closest-point
/// distances. Both meshes must share connectivity.
pub fn thickness(wm: &TriangleMesh, pial: &TriangleMesh) -> Result<SurfaceScalars> {
    if !wm.same_connectivity(pial) {
        return Err(Error::GeometryMismatch(
            "white and pial meshes differ in connectivity".into(),
        ));
    }
    if wm.triangles.is_empty() {
        return Err(invalid("empty mesh"));
    }
    let to_pial = distances_to(wm, &Bvh::new(pial));
    let to_wm = distances_to(pial, &Bvh::new(wm));
    let values = to_pial.iter().zip(&to_wm).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(SurfaceScalars {
        quantity: Quantity::Thickness,
        values,
    })
}

/// Signed normal displacement accumulated during inflation, mean-centred.
/// Sulci move outward while inflating and come out positive.
pub fn sulcal_depth(mesh: &TriangleMesh, inflation: &Inflation) -> Result<SurfaceScalars> {
    if inflation.displacement.len() != mesh.vertex_count() || !inflation.mesh.same_connectivity(mesh) {
        return Err(invalid("inflation record does not belong to this mesh"));
    }
    let mean = pairwise_sum(&inflation.displacement) / mesh.vertex_count().max(1) as f64;
    Ok(SurfaceScalars {
        quantity: Quantity::SulcalDepth,
        values: inflation.displacement.iter().map(|d| d - mean).collect(),
    })
}

fn cot(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    u.dot(v) / u.cross(v).norm()
}

/// Mean curvature `H = ½‖Δx‖` from the cotangent Laplace-Beltrami operator
/// with mixed Voronoi areas, positive where the surface bends away from its
/// normal (a sphere with outward normals has `H = 1/r`).
pub fn curvature(mesh: &TriangleMesh) -> Result<SurfaceScalars> {
    let n = mesh.vertex_count();
    let mut lap = vec![Vector3::zeros(); n];
    let mut area = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = mesh.triangle_points(t);
        let double_area = (b - a).cross(&(c - a)).norm();
        if !(double_area > 1e-300) {
            return Err(Error::DegenerateGeometry(format!("triangle {t} has zero area")));
        }
        let p = [a, b, c];
        let obtuse = (0..3).find(|&i| (p[(i + 1) % 3] - p[i]).dot(&(p[(i + 2) % 3] - p[i])) < 0.0);
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            // the angle at i weights the opposite edge (j, k)
            let w = cot(&(p[j] - p[i]), &(p[k] - p[i]));
            let (vj, vk) = (tri[j] as usize, tri[k] as usize);
            lap[vj] += w * (p[k] - p[j]);
            lap[vk] += w * (p[j] - p[k]);
            let ai = match obtuse {
                None => {
                    let cot_j = cot(&(p[i] - p[j]), &(p[k] - p[j]));
                    let cot_k = cot(&(p[i] - p[k]), &(p[j] - p[k]));
                    ((p[j] - p[i]).norm_squared() * cot_k + (p[k] - p[i]).norm_squared() * cot_j) / 8.0
                }
                Some(o) if o == i => double_area / 4.0,
                Some(_) => double_area / 8.0,
            };
            area[tri[i] as usize] += ai;
        }
    }
    let frames = vertex_frames(mesh)?;
    let values = (0..n)
        .map(|v| {
            let delta = lap[v] / (2.0 * area[v]);
            let h = 0.5 * delta.norm();
            if delta.dot(&frames.normals[v]) > 0.0 {
                -h
            } else {
                h
            }
        })
        .collect();
    Ok(SurfaceScalars {
        quantity: Quantity::Curvature,
        values,
    })
}

/// Sum over vertices of `2π` minus the incident corner angles. Equals `2πχ`
/// on a closed mesh.
pub fn angle_defect_total(mesh: &TriangleMesh) -> f64 {
    let mut angles = vec![0.0; mesh.vertex_count()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_points(t);
        for i in 0..3 {
            let (u, v) = (p[(i + 1) % 3] - p[i], p[(i + 2) % 3] - p[i]);
            angles[tri[i] as usize] += u.angle(&v);
        }
    }
    let defects: Vec<f64> = angles.iter().map(|a| 2.0 * PI - a).collect();
    pairwise_sum(&defects)
}

/// Distances between two surfaces sampled at their vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// Mean of the pooled distances of both directions.
    pub aad_mm: f64,
    /// 90th percentile (nearest rank) of the pooled distances.
    pub hd90_mm: f64,
    pub mean_a_to_b_mm: f64,
    pub mean_b_to_a_mm: f64,
}

fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn report(ab: Vec<f64>, ba: Vec<f64>) -> DistanceReport {
    let mean = |v: &[f64]| pairwise_sum(v) / v.len() as f64;
    let (mean_a_to_b_mm, mean_b_to_a_mm) = (mean(&ab), mean(&ba));
    let mut pooled = ab;
    pooled.extend(ba);
    pooled.sort_by(f64::total_cmp);
    DistanceReport {
        aad_mm: mean(&pooled),
        hd90_mm: nearest_rank(&pooled, 90.0),
        mean_a_to_b_mm,
        mean_b_to_a_mm,
    }
}

fn check_nonempty(a: &TriangleMesh, b: &TriangleMesh) -> Result<()> {
    if a.triangles.is_empty() || b.triangles.is_empty() {
        return Err(invalid("surface distance needs two non-empty meshes"));
    }
    Ok(())
}

/// Vertex-to-surface distances in both directions, pooled.
pub fn surface_distance(a: &TriangleMesh, b: &TriangleMesh) -> Result<DistanceReport> {
    check_nonempty(a, b)?;
    Ok(report(distances_to(a, &Bvh::new(b)), distances_to(b, &Bvh::new(a))))
}

/// Quadratic reference for [`surface_distance`].
pub fn surface_distance_brute_force(a: &TriangleMesh, b: &TriangleMesh) -> Result<DistanceReport> {
    check_nonempty(a, b)?;
    let one_way = |from: &TriangleMesh, to: &TriangleMesh| -> Vec<f64> {
        from.vertices
            .iter()
            .map(|p| {
                (0..to.triangle_count())
                    .map(|t| {
                        let [x, y, z] = to.triangle_points(t);
                        point_triangle_distance_sq(p, x, y, z)
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    };
    Ok(report(one_way(a, b), one_way(b, a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::inflate;
    use crate::mesh::shapes::{icosphere, plane_grid, radial_map};
    use nalgebra::{Point3, Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mesh(rng: &mut ChaCha8Rng, tris: usize) -> TriangleMesh {
        let mut v = Vec::new();
        let mut t = Vec::new();
        for i in 0..tris {
            let c = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
            for _ in 0..3 {
                v.push(Point3::from(c + Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))));
            }
            t.push([3 * i as u32, 3 * i as u32 + 1, 3 * i as u32 + 2]);
        }
        TriangleMesh::new(v, t).unwrap()
    }

    fn rigid(m: &TriangleMesh) -> TriangleMesh {
        let r = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let t = Vector3::new(4.0, -2.5, 7.0);
        m.with_vertices(m.vertices.iter().map(|p| r * p + t).collect())
    }

    #[test]
    fn concentric_thickness() {
        let wm = icosphere(4, 12.0);
        let pial = icosphere(4, 15.0);
        let th = thickness(&wm, &pial).unwrap();
        for v in &th.values {
            assert!((v - 3.0).abs() < 0.03, "{v}");
        }
        assert_eq!(thickness(&pial, &wm).unwrap().values, th.values);
        assert!(thickness(&wm, &wm).unwrap().values.iter().all(|&v| v == 0.0));
        let moved = thickness(&rigid(&wm), &rigid(&pial)).unwrap();
        for (a, b) in moved.values.iter().zip(&th.values) {
            assert!((a - b).abs() <= 1e-9 * b);
        }
    }

    #[test]
    fn parallel_planes() {
        let a = plane_grid(10, 10, 1.0, 0.0);
        let b = plane_grid(10, 10, 1.0, 2.5);
        let th = thickness(&a, &b).unwrap();
        assert!(th.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn connectivity_mismatch() {
        assert!(thickness(&icosphere(2, 1.0), &icosphere(3, 1.0)).is_err());
    }

    #[test]
    fn sphere_curvature() {
        let r = 12.0;
        let c = curvature(&icosphere(4, r)).unwrap();
        for h in &c.values {
            assert!((h * r - 1.0).abs() < 0.05, "{h}");
        }
        let flipped = curvature(&icosphere(4, r).flipped()).unwrap();
        for (a, b) in c.values.iter().zip(&flipped.values) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_interior_curvature_is_zero() {
        let m = plane_grid(8, 8, 1.0, 3.0);
        let c = curvature(&m).unwrap();
        for (v, p) in m.vertices.iter().enumerate() {
            if p.x > 0.5 && p.x < 6.5 && p.y > 0.5 && p.y < 6.5 {
                assert!(c.values[v].abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gauss_bonnet() {
        for m in [
            icosphere(3, 5.0),
            radial_map(&icosphere(4, 1.0), |t, p| {
                12.0 + 1.5 * (6.0 * t).sin() * (6.0 * p).sin()
            }),
        ] {
            assert!((angle_defect_total(&m) - 4.0 * PI).abs() < 1e-6);
        }
    }

    #[test]
    fn depth_of_sphere_is_zero() {
        let m = icosphere(5, 10.0);
        let d = sulcal_depth(&m, &inflate(&m, 10).unwrap()).unwrap();
        let worst = d.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-2, "{worst}");
        assert!(d.mean().abs() < 1e-9);
    }

    #[test]
    fn depth_follows_fold_phase() {
        let m = radial_map(&icosphere(5, 1.0), |t, p| {
            12.0 + 1.5 * (6.0 * t).sin() * (6.0 * p).sin()
        });
        let d = sulcal_depth(&m, &inflate(&m, 20).unwrap()).unwrap();
        assert!(d.mean().abs() < 1e-9);
        let (mut checked, mut agree) = (0, 0);
        for (v, p) in m.vertices.iter().enumerate() {
            let (t, ph) = crate::mesh::shapes::spherical_angles(p);
            let fold = (6.0 * t).sin() * (6.0 * ph).sin();
            if fold.abs() > 0.9 && (0.4..PI - 0.4).contains(&t) {
                checked += 1;
                // crests (fold > 0) are gyri: negative depth
                agree += usize::from((fold > 0.0) == (d.values[v] < 0.0));
            }
        }
        assert!(checked > 50);
        assert_eq!(agree, checked);
    }

    #[test]
    fn depth_needs_matching_record() {
        let m = icosphere(2, 10.0);
        let other = inflate(&icosphere(1, 10.0), 2).unwrap();
        assert!(sulcal_depth(&m, &other).is_err());
    }

    #[test]
    fn identical_surfaces() {
        let m = icosphere(3, 7.0);
        let r = surface_distance(&m, &m).unwrap();
        assert_eq!((r.aad_mm, r.hd90_mm), (0.0, 0.0));
    }

    #[test]
    fn concentric_distance() {
        let r = surface_distance(&icosphere(4, 12.0), &icosphere(4, 14.0)).unwrap();
        assert!((r.aad_mm - 2.0).abs() < 0.03 && (r.hd90_mm - 2.0).abs() < 0.03, "{r:?}");
    }

    #[test]
    fn symmetric_and_rigid_invariant() {
        let a = icosphere(3, 10.0);
        let b = radial_map(&icosphere(3, 1.0), |t, _| 10.5 + 0.5 * (3.0 * t).cos());
        let ab = surface_distance(&a, &b).unwrap();
        let ba = surface_distance(&b, &a).unwrap();
        assert_eq!(ab.aad_mm, ba.aad_mm);
        assert_eq!(ab.hd90_mm, ba.hd90_mm);
        let moved = surface_distance(&rigid(&a), &rigid(&b)).unwrap();
        assert!((moved.aad_mm - ab.aad_mm).abs() <= 1e-9 * ab.aad_mm);
        assert!((moved.hd90_mm - ab.hd90_mm).abs() <= 1e-9 * ab.hd90_mm);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..3 {
            let a = random_mesh(&mut rng, 250);
            let b = random_mesh(&mut rng, 250);
            let fast = surface_distance(&a, &b).unwrap();
            let slow = surface_distance_brute_force(&a, &b).unwrap();
            assert!((fast.aad_mm - slow.aad_mm).abs() <= 1e-9 * slow.aad_mm);
            assert!((fast.hd90_mm - slow.hd90_mm).abs() <= 1e-9 * slow.hd90_mm);
        }
    }

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 90.0), 9.0);
        assert_eq!(nearest_rank(&v[..1], 90.0), 1.0);
        assert_eq!(nearest_rank(&v[..5], 90.0), 5.0);
    }
}
