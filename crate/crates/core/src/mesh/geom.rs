//! Triangle primitives: closest point, solid angle, triangle-triangle overlap.

use nalgebra::{Point3, Vector3};

/// Closest point on the closed triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance_sq(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    (closest_point_on_triangle(p, a, b, c) - p).norm_squared()
}

/// Signed solid angle subtended by triangle `abc` at `p` (positive when the
/// triangle's counter-clockwise normal faces away from `p`).
pub fn solid_angle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    let (ra, rb, rc) = (a - p, b - p, c - p);
    let (la, lb, lc) = (ra.norm(), rb.norm(), rc.norm());
    let num = ra.dot(&rb.cross(&rc));
    let den = la * lb * lc + ra.dot(&rb) * lc + ra.dot(&rc) * lb + rb.dot(&rc) * la;
    2.0 * num.atan2(den)
}

/// Area-weighted normal: half the cross product of two edges.
pub fn area_vector(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Vector3<f64> {
    0.5 * (b - a).cross(&(c - a))
}

fn orient(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, d: &Point3<f64>) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a))
}

/// Whether two closed triangles share at least one point.
pub fn triangles_intersect(p: [&Point3<f64>; 3], q: [&Point3<f64>; 3]) -> bool {
    let scale = p
        .iter()
        .chain(q.iter())
        .flat_map(|v| v.iter().map(|c| c.abs()))
        .fold(1.0f64, f64::max);
    // orient() is cubic in coordinates
    let eps = 1e-12 * scale * scale * scale;
    let snap = |v: f64| if v.abs() <= eps { 0.0 } else { v };

    let dp = [
        snap(orient(q[0], q[1], q[2], p[0])),
        snap(orient(q[0], q[1], q[2], p[1])),
        snap(orient(q[0], q[1], q[2], p[2])),
    ];
    if (dp[0] > 0.0 && dp[1] > 0.0 && dp[2] > 0.0) || (dp[0] < 0.0 && dp[1] < 0.0 && dp[2] < 0.0) {
        return false;
    }
    let dq = [
        snap(orient(p[0], p[1], p[2], q[0])),
        snap(orient(p[0], p[1], p[2], q[1])),
        snap(orient(p[0], p[1], p[2], q[2])),
    ];
    if (dq[0] > 0.0 && dq[1] > 0.0 && dq[2] > 0.0) || (dq[0] < 0.0 && dq[1] < 0.0 && dq[2] < 0.0) {
        return false;
    }
    if dp.iter().all(|&d| d == 0.0) || dq.iter().all(|&d| d == 0.0) {
        return coplanar_overlap(p, q);
    }
    let n1 = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let n2 = (q[1] - q[0]).cross(&(q[2] - q[0]));
    let dir = n1.cross(&n2);
    let proj = |v: &Point3<f64>| dir.dot(&v.coords);
    let (Some(ip), Some(iq)) = (
        interval(proj(p[0]), proj(p[1]), proj(p[2]), dp),
        interval(proj(q[0]), proj(q[1]), proj(q[2]), dq),
    ) else {
        return coplanar_overlap(p, q);
    };
    ip.0.max(iq.0) <= ip.1.min(iq.1)
}

/// Interval of a triangle on the plane-intersection line, from projected
/// vertex positions and signed plane distances.
fn interval(v0: f64, v1: f64, v2: f64, d: [f64; 3]) -> Option<(f64, f64)> {
    let isect = |a: f64, b: f64, c: f64, da: f64, db: f64, dc: f64| {
        let t0 = a + (b - a) * da / (da - db);
        let t1 = a + (c - a) * da / (da - dc);
        (t0.min(t1), t0.max(t1))
    };
    let [d0, d1, d2] = d;
    if d0 * d1 > 0.0 {
        Some(isect(v2, v0, v1, d2, d0, d1))
    } else if d0 * d2 > 0.0 {
        Some(isect(v1, v0, v2, d1, d0, d2))
    } else if d1 * d2 > 0.0 || d0 != 0.0 {
        Some(isect(v0, v1, v2, d0, d1, d2))
    } else if d1 != 0.0 {
        Some(isect(v1, v0, v2, d1, d0, d2))
    } else if d2 != 0.0 {
        Some(isect(v2, v0, v1, d2, d0, d1))
    } else {
        None
    }
}

fn coplanar_overlap(p: [&Point3<f64>; 3], q: [&Point3<f64>; 3]) -> bool {
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let n = if n.norm_squared() > 0.0 {
        n
    } else {
        (q[1] - q[0]).cross(&(q[2] - q[0]))
    };
    // drop the dominant axis
    let (i, j) = if n.x.abs() >= n.y.abs() && n.x.abs() >= n.z.abs() {
        (1, 2)
    } else if n.y.abs() >= n.z.abs() {
        (0, 2)
    } else {
        (0, 1)
    };
    let to2 = |v: &Point3<f64>| [v[i], v[j]];
    let a = [to2(p[0]), to2(p[1]), to2(p[2])];
    let b = [to2(q[0]), to2(q[1]), to2(q[2])];
    for e in 0..3 {
        for f in 0..3 {
            if segments_intersect_2d(a[e], a[(e + 1) % 3], b[f], b[(f + 1) % 3]) {
                return true;
            }
        }
    }
    point_in_triangle_2d(a[0], &b) || point_in_triangle_2d(b[0], &a)
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect_2d(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross2(c, d, a);
    let d2 = cross2(c, d, b);
    let d3 = cross2(a, b, c);
    let d4 = cross2(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn point_in_triangle_2d(p: [f64; 2], t: &[[f64; 2]; 3]) -> bool {
    let s0 = cross2(t[0], t[1], p);
    let s1 = cross2(t[1], t[2], p);
    let s2 = cross2(t[2], t[0], p);
    (s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0) || (s0 <= 0.0 && s1 <= 0.0 && s2 <= 0.0)
}
