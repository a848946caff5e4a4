//! Axis-aligned bounding-volume hierarchy over mesh triangles.
//!
//! Used for nearest-surface queries, triangle overlap broad phase and the
//! far-field approximation of the generalized winding number.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use super::geom::{area_vector, closest_point_on_triangle, solid_angle};
use super::TriangleMesh;

const LEAF_SIZE: usize = 4;

/// Clusters farther than this many radii away use the dipole approximation.
const WINDING_BETA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= o.max[a] && o.min[a] <= self.max[a])
    }

    pub fn distance_sq(&self, p: &Point3<f64>) -> f64 {
        (0..3)
            .map(|a| {
                let d = (self.min[a] - p[a]).max(0.0).max(p[a] - self.max[a]);
                d * d
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

/// Far-field moments of a node for winding-number evaluation.
#[derive(Debug, Clone)]
struct Moments {
    center: Point3<f64>,
    normal: Vector3<f64>,
    radius: f64,
}

#[derive(Debug, Clone)]
pub struct Bvh<'m> {
    mesh: &'m TriangleMesh,
    nodes: Vec<Node>,
    bounds: Vec<Aabb>,
    order: Vec<u32>,
    moments: Vec<Moments>,
}

impl<'m> Bvh<'m> {
    pub fn new(mesh: &'m TriangleMesh) -> Self {
        let tri_bounds: Vec<Aabb> = (0..mesh.triangles.len()).map(|t| mesh.triangle_bounds(t)).collect();
        let centroids: Vec<Point3<f64>> = tri_bounds.iter().map(|b| nalgebra::center(&b.min, &b.max)).collect();
        let mut order: Vec<u32> = (0..mesh.triangles.len() as u32).collect();
        let mut bvh = Bvh {
            mesh,
            nodes: Vec::new(),
            bounds: Vec::new(),
            order: Vec::new(),
            moments: Vec::new(),
        };
        if !order.is_empty() {
            let len = order.len();
            bvh.build(&mut order, 0, len, &tri_bounds, &centroids);
        }
        bvh.order = order;
        bvh.compute_moments();
        bvh
    }

    fn build(&mut self, order: &mut [u32], start: usize, end: usize, tb: &[Aabb], cent: &[Point3<f64>]) -> usize {
        let id = self.nodes.len();
        let mut b = Aabb::empty();
        for &t in &order[start..end] {
            b = b.merge(&tb[t as usize]);
        }
        self.nodes.push(Node::Leaf { start, end });
        self.bounds.push(b);
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut cb = Aabb::empty();
        for &t in &order[start..end] {
            cb.grow(&cent[t as usize]);
        }
        let ext = cb.max - cb.min;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &c| {
            cent[a as usize][axis]
                .total_cmp(&cent[c as usize][axis])
                .then(a.cmp(&c))
        });
        let left = self.build(order, start, mid, tb, cent);
        let right = self.build(order, mid, end, tb, cent);
        self.nodes[id] = Node::Inner { left, right };
        id
    }

    fn compute_moments(&mut self) {
        let mesh = self.mesh;
        let n = self.nodes.len();
        let mut areas = vec![0.0; n];
        let mut moments = vec![
            Moments {
                center: Point3::origin(),
                normal: Vector3::zeros(),
                radius: 0.0,
            };
            n
        ];
        // children always have larger ids than parents
        for id in (0..n).rev() {
            let (weighted, normal, area) = match self.nodes[id] {
                Node::Leaf { start, end } => {
                    let mut c = Vector3::zeros();
                    let mut nrm = Vector3::zeros();
                    let mut area = 0.0;
                    for &t in &self.order[start..end] {
                        let [a, b, cc] = mesh.triangle_points(t as usize);
                        let av = area_vector(a, b, cc);
                        let ar = av.norm();
                        c += ar * (a.coords + b.coords + cc.coords) / 3.0;
                        nrm += av;
                        area += ar;
                    }
                    (c, nrm, area)
                }
                Node::Inner { left, right } => {
                    let (l, r): (&Moments, &Moments) = (&moments[left], &moments[right]);
                    (
                        l.center.coords * areas[left] + r.center.coords * areas[right],
                        l.normal + r.normal,
                        areas[left] + areas[right],
                    )
                }
            };
            let b = &self.bounds[id];
            let center = if area > 0.0 {
                Point3::from(weighted / area)
            } else {
                nalgebra::center(&b.min, &b.max)
            };
            let mut radius = 0.0f64;
            for corner in 0..8 {
                let q = Point3::new(
                    if corner & 1 == 0 { b.min.x } else { b.max.x },
                    if corner & 2 == 0 { b.min.y } else { b.max.y },
                    if corner & 4 == 0 { b.min.z } else { b.max.z },
                );
                radius = radius.max((q - center).norm());
            }
            areas[id] = area;
            moments[id] = Moments { center, normal, radius };
        }
        self.moments = moments;
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    /// Nearest point on the mesh surface: `(distance², triangle, point)`.
    pub fn closest_point(&self, p: &Point3<f64>) -> Option<(f64, usize, Point3<f64>)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX, *p);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if self.bounds[id].distance_sq(p) > best.0 {
                continue;
            }
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &t in &self.order[start..end] {
                        let [a, b, c] = self.mesh.triangle_points(t as usize);
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d = (q - p).norm_squared();
                        if d < best.0 || (d == best.0 && (t as usize) < best.1) {
                            best = (d, t as usize, q);
                        }
                    }
                }
                Node::Inner { left, right } => {
                    let dl = self.bounds[left].distance_sq(p);
                    let dr = self.bounds[right].distance_sq(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        Some(best)
    }

    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.closest_point(p).map_or(f64::INFINITY, |(d, _, _)| d.sqrt())
    }

    /// Calls `f` for every triangle whose bounds overlap `query`.
    pub fn for_each_overlap(&self, query: &Aabb, mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if !self.bounds[id].overlaps(query) {
                continue;
            }
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &t in &self.order[start..end] {
                        f(t as usize);
                    }
                }
                Node::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }

    /// Generalized winding number at `p`: exact solid angles near the
    /// point, dipole approximation for distant clusters.
    pub fn winding_number(&self, p: &Point3<f64>) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let m = &self.moments[id];
            let r = m.center - p;
            let dist = r.norm();
            if dist > WINDING_BETA * m.radius && !matches!(self.nodes[id], Node::Leaf { .. }) {
                total += m.normal.dot(&r) / (dist * dist * dist);
                continue;
            }
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &t in &self.order[start..end] {
                        let [a, b, c] = self.mesh.triangle_points(t as usize);
                        total += solid_angle(p, a, b, c);
                    }
                }
                Node::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        total / (4.0 * PI)
    }

    /// Winding number summed exactly over every triangle.
    pub fn winding_number_exact(&self, p: &Point3<f64>) -> f64 {
        let m = self.mesh;
        (0..m.triangles.len())
            .map(|t| {
                let [a, b, c] = m.triangle_points(t);
                solid_angle(p, a, b, c)
            })
            .sum::<f64>()
            / (4.0 * PI)
    }

    /// Inside test `w > 0.5`, falling back to the exact sum when the
    /// approximation is not decisive.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let w = self.winding_number(p);
        if (w - 0.5).abs() > 0.25 {
            w > 0.5
        } else {
            self.winding_number_exact(p) > 0.5
        }
    }
}
