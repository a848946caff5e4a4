//! Level-set extraction by marching tetrahedra.
//!
//! Each lattice cube is split into the six Kuhn tetrahedra sharing its main
//! diagonal, which triangulates shared faces identically in neighbouring
//! cubes. The grid is treated as surrounded by one layer of outside values,
//! so the result is always closed.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::TriangleMesh;
use crate::error::{invalid, Error, Result};
use crate::volume::ScalarVolume;

#[derive(Default)]
struct Soup {
    vertices: Vec<Point3<f64>>,
    lattice_pos: Vec<Vector3<f64>>,
    edge_vertex: HashMap<(usize, usize), u32>,
    triangles: Vec<[u32; 3]>,
}

fn lattice(c: [usize; 3]) -> Vector3<f64> {
    Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64)
}

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Closed surface separating voxels below `level` (inside) from the rest.
/// Triangles face towards increasing values.
pub fn extract_isosurface(vol: &ScalarVolume, level: f64) -> Result<TriangleMesh> {
    if !level.is_finite() {
        return Err(invalid("isosurface level must be finite"));
    }
    let g = vol.geometry();
    let d = g.dims();
    // padded lattice: coordinate c maps to voxel c - 1
    let pd = [d[0] + 2, d[1] + 2, d[2] + 2];
    let outside = level + 1.0;
    let value = |c: [usize; 3]| -> f64 {
        if (0..3).any(|a| c[a] == 0 || c[a] == pd[a] - 1) {
            outside
        } else {
            vol.get(c[0] - 1, c[1] - 1, c[2] - 1)
        }
    };
    let key = |c: [usize; 3]| c[0] + pd[0] * (c[1] + pd[1] * c[2]);

    let mut soup = Soup::default();
    let edge_point = |soup: &mut Soup, a: [usize; 3], b: [usize; 3], fa: f64, fb: f64| -> u32 {
        let (ka, kb) = (key(a), key(b));
        let (lo, hi, flo, fhi, plo, phi) = if ka < kb {
            (ka, kb, fa, fb, a, b)
        } else {
            (kb, ka, fb, fa, b, a)
        };
        if let Some(&v) = soup.edge_vertex.get(&(lo, hi)) {
            return v;
        }
        let t = ((level - flo) / (fhi - flo)).clamp(1e-6, 1.0 - 1e-6);
        let l = lattice(plo) * (1.0 - t) + lattice(phi) * t;
        soup.lattice_pos.push(l);
        soup.vertices.push(g.voxel_to_world([l.x - 1.0, l.y - 1.0, l.z - 1.0]));
        let v = (soup.vertices.len() - 1) as u32;
        soup.edge_vertex.insert((lo, hi), v);
        v
    };

    let mirrored = g.linear().determinant() < 0.0;
    for k in 0..pd[2] - 1 {
        for j in 0..pd[1] - 1 {
            for i in 0..pd[0] - 1 {
                let corner = |n: usize| [i + (n & 1), j + ((n >> 1) & 1), k + ((n >> 2) & 1)];
                let vals: [f64; 8] = std::array::from_fn(|n| value(corner(n)));
                let below = vals.iter().filter(|&&v| v < level).count();
                if below == 0 || below == 8 {
                    continue;
                }
                for perm in PERMS {
                    let tet = [0, 1 << perm[0], (1 << perm[0]) | (1 << perm[1]), 7];
                    let (ins, outs): (Vec<usize>, Vec<usize>) = tet.iter().partition(|&&n| vals[n] < level);
                    if ins.is_empty() || outs.is_empty() {
                        continue;
                    }
                    let mut ep = |a: usize, b: usize| edge_point(&mut soup, corner(a), corner(b), vals[a], vals[b]);
                    let polygon: Vec<u32> = match (ins.len(), outs.len()) {
                        (1, 3) => outs.iter().map(|&o| ep(ins[0], o)).collect(),
                        (3, 1) => ins.iter().map(|&n| ep(n, outs[0])).collect(),
                        _ => vec![
                            ep(ins[0], outs[0]),
                            ep(ins[0], outs[1]),
                            ep(ins[1], outs[1]),
                            ep(ins[1], outs[0]),
                        ],
                    };
                    let cpos = |n: &usize| lattice(corner(*n));
                    let c_in: Vector3<f64> = ins.iter().map(cpos).sum::<Vector3<f64>>() / ins.len() as f64;
                    let c_out: Vector3<f64> = outs.iter().map(cpos).sum::<Vector3<f64>>() / outs.len() as f64;
                    let up = c_out - c_in;
                    let lp = &soup.lattice_pos;
                    let mut emit = |a: u32, b: u32, c: u32| {
                        let (pa, pb, pc) = (lp[a as usize], lp[b as usize], lp[c as usize]);
                        let facing = (pb - pa).cross(&(pc - pa)).dot(&up) > 0.0;
                        if facing != mirrored {
                            soup.triangles.push([a, b, c]);
                        } else {
                            soup.triangles.push([a, c, b]);
                        }
                    };
                    emit(polygon[0], polygon[1], polygon[2]);
                    if polygon.len() == 4 {
                        emit(polygon[0], polygon[2], polygon[3]);
                    }
                }
            }
        }
    }
    if soup.triangles.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(TriangleMesh {
        vertices: soup.vertices,
        triangles: soup.triangles,
    })
}
