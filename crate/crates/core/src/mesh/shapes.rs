//! Reference meshes: icosahedra, icospheres, tori, UV spheres and planar grids.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Point3;

use super::TriangleMesh;

/// Regular icosahedron inscribed in a sphere of the given radius, outward oriented.
pub fn icosahedron(radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|v| Point3::from(nalgebra::Vector3::from(*v).normalize() * radius))
        .collect();
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriangleMesh { vertices, triangles }
}

/// Icosahedron subdivided `level` times with vertices projected onto the
/// sphere of `radius` centred at the origin.
pub fn icosphere(level: u32, radius: f64) -> TriangleMesh {
    let mut mesh = icosahedron(1.0);
    for _ in 0..level {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut tris = Vec::with_capacity(mesh.triangles.len() * 4);
        let mut verts = mesh.vertices.clone();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Point3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let m = nalgebra::center(&verts[a as usize], &verts[b as usize]);
                verts.push(Point3::from(m.coords.normalize()));
                (verts.len() - 1) as u32
            })
        };
        for &[a, b, c] in &mesh.triangles {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            tris.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        mesh = TriangleMesh {
            vertices: verts,
            triangles: tris,
        };
    }
    for p in &mut mesh.vertices {
        *p = Point3::from(p.coords * radius);
    }
    mesh
}

/// Torus around the z axis with `major` x `minor` quads split into triangles.
pub fn torus(major: usize, minor: usize, major_radius: f64, minor_radius: f64) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = 2.0 * PI * i as f64 / major as f64;
        for j in 0..minor {
            let v = 2.0 * PI * j as f64 / minor as f64;
            let r = major_radius + minor_radius * v.cos();
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), minor_radius * v.sin()));
        }
    }
    let id = |i: usize, j: usize| ((i % major) * minor + (j % minor)) as u32;
    let mut triangles = Vec::with_capacity(2 * major * minor);
    for i in 0..major {
        for j in 0..minor {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh { vertices, triangles }
}

/// Latitude-longitude sphere: `rings` interior latitude rings of `segments`
/// vertices each, plus two poles.
pub fn uv_sphere(rings: usize, segments: usize, radius: f64) -> TriangleMesh {
    let mut vertices = vec![Point3::new(0.0, 0.0, radius)];
    for r in 0..rings {
        let theta = PI * (r + 1) as f64 / (rings + 1) as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Point3::new(
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                radius * theta.cos(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, -radius));
    let south = (vertices.len() - 1) as u32;
    let id = |r: usize, s: usize| (1 + r * segments + s % segments) as u32;
    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, id(0, s), id(0, s + 1)]);
    }
    for r in 0..rings.saturating_sub(1) {
        for s in 0..segments {
            let (a, b, c, d) = (id(r, s), id(r + 1, s), id(r + 1, s + 1), id(r, s + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    for s in 0..segments {
        triangles.push([south, id(rings - 1, s + 1), id(rings - 1, s)]);
    }
    TriangleMesh { vertices, triangles }
}

/// Open planar grid in the z = `z` plane with `nx` x `ny` vertices, normals +z.
pub fn plane_grid(nx: usize, ny: usize, spacing: f64, z: f64) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push(Point3::new(i as f64 * spacing, j as f64 * spacing, z));
        }
    }
    let id = |i: usize, j: usize| (j * nx + i) as u32;
    let mut triangles = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh { vertices, triangles }
}

/// Polar angle from +z and azimuth of a direction.
pub fn spherical_angles(p: &Point3<f64>) -> (f64, f64) {
    let r = p.coords.norm();
    let theta = if r > 0.0 {
        (p.z / r).clamp(-1.0, 1.0).acos()
    } else {
        0.0
    };
    (theta, p.y.atan2(p.x))
}

/// Moves every vertex along its direction from the origin to radius `f(θ, φ)`.
pub fn radial_map(mesh: &TriangleMesh, f: impl Fn(f64, f64) -> f64) -> TriangleMesh {
    let vertices = mesh
        .vertices
        .iter()
        .map(|p| {
            let (theta, phi) = spherical_angles(p);
            Point3::from(p.coords.normalize() * f(theta, phi))
        })
        .collect();
    mesh.with_vertices(vertices)
}
