use nalgebra::Vector3;

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Per-vertex unit normal and orthonormal tangent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexFrame {
    pub normals: Vec<Vector3<f64>>,
    pub tangent1: Vec<Vector3<f64>>,
    pub tangent2: Vec<Vector3<f64>>,
}

impl VertexFrame {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }
}

/// Normals are area-weighted averages of incident triangle normals. The
/// first tangent is the global z axis projected onto the tangent plane (x
/// when `|n·z| > 0.9`), the second is `n × e1`.
pub fn vertex_frames(mesh: &TriangleMesh) -> Result<VertexFrame> {
    let mut acc = vec![Vector3::zeros(); mesh.vertices.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area_vector(t);
        for &v in tri {
            acc[v as usize] += a;
        }
    }
    let n = acc.len();
    let mut frame = VertexFrame {
        normals: Vec::with_capacity(n),
        tangent1: Vec::with_capacity(n),
        tangent2: Vec::with_capacity(n),
    };
    for (v, sum) in acc.into_iter().enumerate() {
        let len = sum.norm();
        if !(len > 1e-300) {
            return Err(Error::DegenerateGeometry(format!(
                "vertex {v} has a zero-area umbrella"
            )));
        }
        let normal = sum / len;
        let helper = if normal.z.abs() > 0.9 {
            Vector3::x()
        } else {
            Vector3::z()
        };
        let e1 = (helper - normal * normal.dot(&helper)).normalize();
        let e2 = normal.cross(&e1);
        frame.normals.push(normal);
        frame.tangent1.push(e1);
        frame.tangent2.push(e2);
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes::{icosphere, plane_grid};
    use crate::mesh::tessellate;
    use crate::volume::{GridGeometry, LabelVolume};
    use nalgebra::Point3;
    use proptest::prelude::*;

    #[test]
    fn cube_face_interior_normal_is_axis() {
        let g = GridGeometry::axis_aligned([5, 5, 5], [1.0; 3], [0.0; 3]).unwrap();
        let mask = LabelVolume::from_fn(g, |p| {
            u16::from((1.0..=3.0).contains(&p.x) && (1.0..=3.0).contains(&p.y) && (1.0..=3.0).contains(&p.z))
        });
        let m = tessellate(&mask).unwrap();
        let f = vertex_frames(&m).unwrap();
        // vertex at the centre of the +z face: lattice (2.5, 2.5, 3.5) in voxel coords
        let v = m
            .vertices
            .iter()
            .position(|p| (p - Point3::new(1.5, 1.5, 3.5)).norm() < 1e-12)
            .unwrap();
        assert_eq!(f.normals[v], Vector3::z());
        assert_eq!(f.tangent1[v], Vector3::x());
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = icosphere(3, 7.0);
        let f = vertex_frames(&m).unwrap();
        for (p, n) in m.vertices.iter().zip(&f.normals) {
            let angle = p.coords.normalize().dot(n).clamp(-1.0, 1.0).acos();
            assert!(angle.to_degrees() < 1.0);
        }
    }

    #[test]
    fn zero_area_umbrella_errors() {
        let mut m = plane_grid(3, 3, 1.0, 0.0);
        for p in &mut m.vertices {
            *p = Point3::origin();
        }
        assert!(matches!(vertex_frames(&m), Err(Error::DegenerateGeometry(_))));
    }

    proptest! {
        #[test]
        fn frames_are_orthonormal(noise in proptest::collection::vec(-0.3f64..0.3, 42 * 3)) {
            let mut m = icosphere(1, 2.0);
            for (v, p) in m.vertices.iter_mut().enumerate() {
                p.x += noise[3 * v];
                p.y += noise[3 * v + 1];
                p.z += noise[3 * v + 2];
            }
            let f = vertex_frames(&m).unwrap();
            for v in 0..f.len() {
                let (n, a, b) = (f.normals[v], f.tangent1[v], f.tangent2[v]);
                prop_assert!(n.dot(&a).abs() <= 1e-6 && n.dot(&b).abs() <= 1e-6 && a.dot(&b).abs() <= 1e-6);
                prop_assert!((n.norm() - 1.0).abs() <= 1e-6 && (a.norm() - 1.0).abs() <= 1e-6 && (b.norm() - 1.0).abs() <= 1e-6);
            }
        }
    }
}
