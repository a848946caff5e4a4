use rayon::prelude::*;

use super::geom::triangles_intersect;
use super::{Bvh, TriangleMesh};

fn share_vertex(a: &[u32; 3], b: &[u32; 3]) -> bool {
    a.iter().any(|v| b.contains(v))
}

fn pair_intersects(mesh: &TriangleMesh, a: usize, b: usize) -> bool {
    let (ta, tb) = (&mesh.triangles[a], &mesh.triangles[b]);
    !share_vertex(ta, tb) && triangles_intersect(mesh.triangle_points(a), mesh.triangle_points(b))
}

/// All pairs `(i, j)`, `i < j`, of triangles that share no vertex and whose
/// closed triangles intersect. Sorted.
pub fn self_intersections(mesh: &TriangleMesh) -> Vec<(u32, u32)> {
    let bvh = Bvh::new(mesh);
    let mut pairs: Vec<(u32, u32)> = (0..mesh.triangles.len())
        .into_par_iter()
        .flat_map_iter(|a| {
            let mut hits = Vec::new();
            bvh.for_each_overlap(&mesh.triangle_bounds(a), |b| {
                if b > a && pair_intersects(mesh, a, b) {
                    hits.push((a as u32, b as u32));
                }
            });
            hits
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Quadratic all-pairs reference for [`self_intersections`].
pub fn self_intersections_brute_force(mesh: &TriangleMesh) -> Vec<(u32, u32)> {
    let n = mesh.triangles.len();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if pair_intersects(mesh, a, b) {
                pairs.push((a as u32, b as u32));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes::{icosphere, plane_grid};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn icosphere_is_clean() {
        assert!(self_intersections(&icosphere(3, 10.0)).is_empty());
    }

    /// Closed thin slab: two parallel grids joined by side walls.
    fn slab(n: usize, gap: f64) -> TriangleMesh {
        let bottom = plane_grid(n, n, 1.0, 0.0).flipped();
        let top = plane_grid(n, n, 1.0, gap);
        let mut m = bottom.merged(&top);
        let off = (n * n) as u32;
        let id = |i: usize, j: usize| (j * n + i) as u32;
        let mut ring = Vec::new();
        for i in 0..n - 1 {
            ring.push(id(i, 0));
        }
        for j in 0..n - 1 {
            ring.push(id(n - 1, j));
        }
        for i in (1..n).rev() {
            ring.push(id(i, n - 1));
        }
        for j in (1..n).rev() {
            ring.push(id(0, j));
        }
        for s in 0..ring.len() {
            let (a, b) = (ring[s], ring[(s + 1) % ring.len()]);
            m.triangles.push([a, b, b + off]);
            m.triangles.push([a, b + off, a + off]);
        }
        m
    }

    #[test]
    fn pushed_vertex_pierces_opposite_wall() {
        let mut m = slab(6, 0.5);
        assert!(m.require_closed().is_ok());
        assert!(self_intersections(&m).is_empty());
        // interior top vertex pushed down through the bottom wall
        let n = 6;
        let v = (n * n + 2 * n + 2) as usize;
        m.vertices[v].z = -0.4;
        let found = self_intersections(&m);
        assert!(!found.is_empty());
        assert_eq!(found, self_intersections_brute_force(&m));
        // every reported pair involves a triangle around the moved vertex
        let around: Vec<u32> = (0..m.triangles.len() as u32)
            .filter(|&t| m.triangles[t as usize].contains(&(v as u32)))
            .collect();
        assert!(found.iter().all(|(a, b)| around.contains(a) || around.contains(b)));
    }

    #[test]
    fn matches_brute_force_on_random_soups() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut m = icosphere(2, 5.0);
            for p in &mut m.vertices {
                let d = Vector3::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                );
                *p += d;
            }
            // a second shell overlapping the first
            let mut other = icosphere(1, 4.0);
            for p in &mut other.vertices {
                *p += Vector3::new(2.0, 0.0, 0.0);
            }
            let soup = m.merged(&other);
            assert!(soup.triangle_count() <= 500);
            let fast = self_intersections(&soup);
            assert_eq!(fast, self_intersections_brute_force(&soup));
        }
    }
}
