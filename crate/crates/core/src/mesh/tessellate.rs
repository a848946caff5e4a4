//! Voxel-face tessellation of a binary mask.
//!
//! Every face between a foreground voxel and a background voxel (or the grid
//! exterior) becomes a quad split into two outward-facing triangles.
//! Vertices sit on the voxel-corner lattice. Corners are merged per surface
//! sheet rather than per lattice point: where two foreground voxels touch
//! only along an edge or at a corner, each keeps its own copy of the shared
//! corner, so the result is always an edge-manifold closed surface consistent
//! with 6-connected foreground.

use std::collections::HashMap;

use super::TriangleMesh;
use crate::error::{invalid, Error, Result};
use crate::volume::LabelVolume;

type Lattice = [i64; 3];

struct Face {
    voxel: usize,
    corners: [Lattice; 4],
}

fn face_corners(i: i64, j: i64, k: i64, dir: usize) -> [Lattice; 4] {
    match dir {
        0 => [[i, j, k], [i, j, k + 1], [i, j + 1, k + 1], [i, j + 1, k]],
        1 => [
            [i + 1, j, k],
            [i + 1, j + 1, k],
            [i + 1, j + 1, k + 1],
            [i + 1, j, k + 1],
        ],
        2 => [[i, j, k], [i + 1, j, k], [i + 1, j, k + 1], [i, j, k + 1]],
        3 => [
            [i, j + 1, k],
            [i, j + 1, k + 1],
            [i + 1, j + 1, k + 1],
            [i + 1, j + 1, k],
        ],
        4 => [[i, j, k], [i, j + 1, k], [i + 1, j + 1, k], [i + 1, j, k]],
        _ => [
            [i, j, k + 1],
            [i + 1, j, k + 1],
            [i + 1, j + 1, k + 1],
            [i, j + 1, k + 1],
        ],
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller id as root so numbering is order-independent
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn tessellate(mask: &LabelVolume) -> Result<TriangleMesh> {
    if !mask.is_binary() {
        return Err(invalid("tessellation needs a 0/1 mask"));
    }
    if mask.count_nonzero() == 0 {
        return Err(Error::EmptyMask);
    }
    let g = mask.geometry();
    let d = g.dims();
    let fg = |i: i64, j: i64, k: i64| -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < d[0]
            && (j as usize) < d[1]
            && (k as usize) < d[2]
            && mask.get(i as usize, j as usize, k as usize) != 0
    };
    const DIRS: [[i64; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

    let mut faces = Vec::new();
    for idx in 0..g.len() {
        if mask.data()[idx] == 0 {
            continue;
        }
        let [i, j, k] = g.coords(idx).map(|c| c as i64);
        for (dir, o) in DIRS.iter().enumerate() {
            if !fg(i + o[0], j + o[1], k + o[2]) {
                faces.push(Face {
                    voxel: idx,
                    corners: face_corners(i, j, k, dir),
                });
            }
        }
    }

    // lattice edge (lower endpoint, axis) -> incident faces
    let mut edges: HashMap<(Lattice, usize), Vec<u32>> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        for e in 0..4 {
            let (p, q) = (face.corners[e], face.corners[(e + 1) % 4]);
            let axis = (0..3).find(|&a| p[a] != q[a]).expect("distinct corners");
            let lo = if p[axis] < q[axis] { p } else { q };
            edges.entry((lo, axis)).or_default().push(f as u32);
        }
    }

    let mut uf = UnionFind((0..faces.len() * 4).collect());
    let slot = |f: usize, p: &Lattice| -> usize {
        let s = faces[f].corners.iter().position(|c| c == p).expect("corner on face");
        f * 4 + s
    };
    let mut keys: Vec<_> = edges.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let incident = &edges[&key];
        let (lo, axis) = key;
        let mut hi = lo;
        hi[axis] += 1;
        let mut join = |a: usize, b: usize| {
            uf.union(slot(a, &lo), slot(b, &lo));
            uf.union(slot(a, &hi), slot(b, &hi));
        };
        match incident.len() {
            2 => join(incident[0] as usize, incident[1] as usize),
            4 => {
                // two diagonal voxels: pair the faces each voxel owns
                for (n, &a) in incident.iter().enumerate() {
                    for &b in &incident[n + 1..] {
                        if faces[a as usize].voxel == faces[b as usize].voxel {
                            join(a as usize, b as usize);
                        }
                    }
                }
            }
            n => unreachable!("lattice edge with {n} boundary faces"),
        }
    }

    let mut vertex_of_root: HashMap<usize, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut corner_vertex = vec![0u32; faces.len() * 4];
    for (f, face) in faces.iter().enumerate() {
        for (s, c) in face.corners.iter().enumerate() {
            let root = uf.find(f * 4 + s);
            let v = *vertex_of_root.entry(root).or_insert_with(|| {
                vertices.push(g.voxel_to_world([c[0] as f64 - 0.5, c[1] as f64 - 0.5, c[2] as f64 - 0.5]));
                (vertices.len() - 1) as u32
            });
            corner_vertex[f * 4 + s] = v;
        }
    }

    let mirrored = g.linear().determinant() < 0.0;
    let mut triangles = Vec::with_capacity(faces.len() * 2);
    for f in 0..faces.len() {
        let c = &corner_vertex[f * 4..f * 4 + 4];
        if mirrored {
            triangles.push([c[0], c[2], c[1]]);
            triangles.push([c[0], c[3], c[2]]);
        } else {
            triangles.push([c[0], c[1], c[2]]);
            triangles.push([c[0], c[2], c[3]]);
        }
    }
    Ok(TriangleMesh { vertices, triangles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::GridGeometry;
    use nalgebra::Matrix4;

    fn mask_from(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> bool + Sync) -> LabelVolume {
        let g = GridGeometry::axis_aligned(dims, [1.0; 3], [0.0; 3]).unwrap();
        LabelVolume::from_fn(g, |p| u16::from(f(p.x as usize, p.y as usize, p.z as usize)))
    }

    /// Independent count of V, E, F from the triangle list.
    fn brute_vef(m: &TriangleMesh) -> (usize, usize, usize) {
        let mut edges = std::collections::BTreeSet::new();
        for t in &m.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let used: std::collections::BTreeSet<u32> = m.triangles.iter().flatten().copied().collect();
        (used.len(), edges.len(), m.triangles.len())
    }

    #[test]
    fn single_voxel_is_cube() {
        let m = tessellate(&mask_from([3, 3, 3], |i, j, k| (i, j, k) == (1, 1, 1))).unwrap();
        assert_eq!(brute_vef(&m), (8, 18, 12));
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.require_sphere().is_ok());
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bar_is_closed_box() {
        let m = tessellate(&mask_from([4, 3, 3], |i, j, k| {
            j == 1 && k == 1 && (1..=2).contains(&i)
        }))
        .unwrap();
        let (v, e, f) = brute_vef(&m);
        assert_eq!(v as i64 - e as i64 + f as i64, 2);
        assert_eq!((v, f), (12, 20));
        assert!(m.require_sphere().is_ok());
    }

    #[test]
    fn voxel_ball_is_outward_sphere() {
        let c = 10.0;
        let m = tessellate(&mask_from([21, 21, 21], |i, j, k| {
            let (x, y, z) = (i as f64 - c, j as f64 - c, k as f64 - c);
            x * x + y * y + z * z <= 64.0
        }))
        .unwrap();
        assert!(m.require_sphere().is_ok());
        assert!(m.signed_volume() > 0.0);
        let centroid = m.centroid();
        for t in 0..m.triangle_count() {
            let [a, b, cc] = m.triangle_points(t);
            let mid = (a.coords + b.coords + cc.coords) / 3.0;
            assert!(m.triangle_area_vector(t).dot(&(mid - centroid.coords)) > 0.0);
        }
    }

    #[test]
    fn diagonal_voxels_stay_manifold() {
        // edge contact
        let m = tessellate(&mask_from([4, 4, 3], |i, j, k| {
            k == 1 && ((i, j) == (1, 1) || (i, j) == (2, 2))
        }))
        .unwrap();
        let r = m.topology_report();
        assert!(r.closed_manifold && r.oriented);
        assert_eq!(r.euler, 4);
        // corner contact
        let m = tessellate(&mask_from([4, 4, 4], |i, j, k| {
            (i, j, k) == (1, 1, 1) || (i, j, k) == (2, 2, 2)
        }))
        .unwrap();
        let r = m.topology_report();
        assert!(r.closed_manifold && r.oriented);
        assert_eq!(r.euler, 4);
    }

    #[test]
    fn ring_has_genus_one() {
        let m = tessellate(&mask_from([5, 5, 3], |i, j, k| {
            k == 1 && (1..=3).contains(&i) && (1..=3).contains(&j) && (i, j) != (2, 2)
        }))
        .unwrap();
        assert_eq!(m.euler_characteristic(), 0);
        assert!(m.require_closed().is_ok());
    }

    #[test]
    fn mirrored_affine_keeps_outward_orientation() {
        let mut a = Matrix4::identity();
        a[(0, 0)] = -1.0;
        let g = GridGeometry::new([3, 3, 3], [1.0; 3], a).unwrap();
        let mask = LabelVolume::from_fn(g, |p| u16::from(p.x == -1.0 && p.y == 1.0 && p.z == 1.0));
        let m = tessellate(&mask).unwrap();
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn empty_mask_errors() {
        assert!(matches!(
            tessellate(&mask_from([2, 2, 2], |_, _, _| false)),
            Err(Error::EmptyMask)
        ));
    }
}
