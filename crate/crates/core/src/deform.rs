//! Energy-driven placement of a mesh on the zero level set of an SDF.
//!
//! The energy of a mesh `X` with per-vertex frames `(n_v, e1_v, e2_v)` is
//!
//! ```text
//! E(X) = Σ_v tanh(D(x_v))²
//!      + λ1 Σ_v Σ_{u∈N_v} (n_vᵀ(x_v − x_u))²
//!      + λ2 Σ_v Σ_{u∈N_v} [(e1_vᵀ(x_v − x_u))² + (e2_vᵀ(x_v − x_u))²]
//! ```
//!
//! Every ordered neighbour pair is counted, so each edge appears twice.
//! Frames are held fixed while differentiating and recomputed after every
//! accepted step.

use std::io::Write;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::{self_intersections, vertex_frames, TriangleMesh, VertexFrame};
use crate::volume::ScalarVolume;

/// Weights and step control for [`fit_surface`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformConfig {
    pub lambda_normal: f64,
    pub lambda_tangential: f64,
    /// Initial gradient step in mm per unit gradient.
    pub step: f64,
    pub max_iterations: usize,
    /// Relative energy decrease below which a step counts as stalled.
    pub rel_tolerance: f64,
    /// Consecutive stalled steps that end the fit.
    pub patience: usize,
    /// Largest proposed vertex move (mm) below which the fit is converged.
    pub displacement_tolerance: f64,
    pub shrink: f64,
    pub min_step: f64,
}

impl Default for DeformConfig {
    fn default() -> Self {
        Self {
            lambda_normal: 0.0006,
            lambda_tangential: 0.0002,
            step: 0.4,
            max_iterations: 1000,
            rel_tolerance: 1e-6,
            patience: 10,
            displacement_tolerance: 1e-3,
            shrink: 0.5,
            min_step: 1e-4,
        }
    }
}

impl DeformConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.lambda_normal) || !finite_nonneg(self.lambda_tangential) {
            return Err(invalid("spring weights must be finite and >= 0"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(invalid("shrink factor must lie in (0, 1)"));
        }
        if !(self.min_step > 0.0 && self.min_step < self.step) || !self.step.is_finite() {
            return Err(invalid("need 0 < min_step < step"));
        }
        if !finite_nonneg(self.rel_tolerance) || !finite_nonneg(self.displacement_tolerance) {
            return Err(invalid("tolerances must be finite and >= 0"));
        }
        Ok(())
    }
}

/// The three terms of the energy and their weighted sum. `normal` and
/// `tangential` are unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub fidelity: f64,
    pub normal: f64,
    pub tangential: f64,
    pub total: f64,
}

/// One accepted iteration. Row 0 is the initial mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub step: f64,
    pub energy: EnergyBreakdown,
    /// Intersecting triangle pairs found in rejected attempts since the
    /// previous accepted iteration.
    pub intersections_found: usize,
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TraceRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "iteration,step,fidelity,normal,tangential,total,intersections_found"
    )?;
    for r in trace {
        let e = &r.energy;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration, r.step, e.fidelity, e.normal, e.tangential, e.total, r.intersections_found
        )?;
    }
    out.flush()?;
    Ok(())
}

/// A signed distance function with its gradient.
pub trait SignedDistance: Sync {
    fn eval(&self, p: &Point3<f64>) -> Result<(f64, Vector3<f64>)>;
}

/// Sampled trilinearly; points outside the voxel extent are rejected.
impl SignedDistance for ScalarVolume {
    fn eval(&self, p: &Point3<f64>) -> Result<(f64, Vector3<f64>)> {
        if !self.geometry().contains_voxel(self.geometry().world_to_voxel(p)) {
            return Err(Error::OutOfDomain(format!("({:.3}, {:.3}, {:.3})", p.x, p.y, p.z)));
        }
        self.sample_with_gradient(p)
    }
}

/// Analytic SDF `‖x − c‖ − r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSdf {
    pub center: Point3<f64>,
    pub radius: f64,
}

impl SignedDistance for SphereSdf {
    fn eval(&self, p: &Point3<f64>) -> Result<(f64, Vector3<f64>)> {
        let d = p - self.center;
        let n = d.norm();
        let g = if n > 0.0 { d / n } else { Vector3::zeros() };
        Ok((n - self.radius, g))
    }
}

fn spring_terms(
    mesh: &TriangleMesh,
    neighbors: &[Vec<u32>],
    frames: &VertexFrame,
    v: usize,
) -> (f64, f64, Vector3<f64>, Vector3<f64>) {
    let (xv, nv, e1v, e2v) = (
        mesh.vertices[v],
        frames.normals[v],
        frames.tangent1[v],
        frames.tangent2[v],
    );
    let (mut en, mut et) = (0.0, 0.0);
    let (mut gn, mut gt) = (Vector3::zeros(), Vector3::zeros());
    for &u in &neighbors[v] {
        let u = u as usize;
        let d = xv - mesh.vertices[u];
        let (a, b1, b2) = (nv.dot(&d), e1v.dot(&d), e2v.dot(&d));
        en += a * a;
        et += b1 * b1 + b2 * b2;
        // the pair (u, v) contributes through u's frame with d reversed
        let (nu, e1u, e2u) = (frames.normals[u], frames.tangent1[u], frames.tangent2[u]);
        gn += 2.0 * (a * nv + nu.dot(&d) * nu);
        gt += 2.0 * (b1 * e1v + b2 * e2v + e1u.dot(&d) * e1u + e2u.dot(&d) * e2u);
    }
    (en, et, gn, gt)
}

fn evaluate(
    mesh: &TriangleMesh,
    neighbors: &[Vec<u32>],
    frames: &VertexFrame,
    sdf: &dyn SignedDistance,
    cfg: &DeformConfig,
    want_gradient: bool,
) -> Result<(EnergyBreakdown, Vec<Vector3<f64>>)> {
    let per_vertex: Vec<(f64, f64, f64, Vector3<f64>)> = (0..mesh.vertices.len())
        .into_par_iter()
        .map(|v| {
            let (d, gd) = sdf.eval(&mesh.vertices[v])?;
            let t = d.tanh();
            let (en, et, gn, gt) = spring_terms(mesh, neighbors, frames, v);
            let grad = if want_gradient {
                2.0 * t * (1.0 - t * t) * gd + cfg.lambda_normal * gn + cfg.lambda_tangential * gt
            } else {
                Vector3::zeros()
            };
            Ok((t * t, en, et, grad))
        })
        .collect::<Result<_>>()?;
    let mut e = EnergyBreakdown::default();
    let mut grad = Vec::with_capacity(if want_gradient { per_vertex.len() } else { 0 });
    for (f, n, t, g) in per_vertex {
        e.fidelity += f;
        e.normal += n;
        e.tangential += t;
        if want_gradient {
            grad.push(g);
        }
    }
    e.total = e.fidelity + cfg.lambda_normal * e.normal + cfg.lambda_tangential * e.tangential;
    Ok((e, grad))
}

/// Energy of `mesh` under the given frames.
pub fn energy(
    mesh: &TriangleMesh,
    sdf: &dyn SignedDistance,
    frames: &VertexFrame,
    cfg: &DeformConfig,
) -> Result<EnergyBreakdown> {
    Ok(evaluate(mesh, &mesh.neighbors(), frames, sdf, cfg, false)?.0)
}

/// Gradient of [`energy`] with respect to every vertex, frames held fixed.
pub fn energy_gradient(
    mesh: &TriangleMesh,
    sdf: &dyn SignedDistance,
    frames: &VertexFrame,
    cfg: &DeformConfig,
) -> Result<(EnergyBreakdown, Vec<Vector3<f64>>)> {
    evaluate(mesh, &mesh.neighbors(), frames, sdf, cfg, true)
}

/// Output of a successful [`fit_surface`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub mesh: TriangleMesh,
    pub trace: Vec<TraceRecord>,
}

/// Gradient descent with frozen frames. A step that creates
/// self-intersections or raises the energy is reverted and the step size
/// multiplied by `cfg.shrink`. The fit ends when the largest proposed move
/// drops below `displacement_tolerance`, after `patience` consecutive
/// accepted steps with relative decrease below `rel_tolerance`, at
/// `max_iterations`, or when the step falls below `min_step`. Falling below
/// `min_step` right after an intersecting attempt is an error.
pub fn fit_surface(init: &TriangleMesh, sdf: &dyn SignedDistance, cfg: &DeformConfig) -> Result<FitResult> {
    cfg.validate()?;
    init.require_sphere()?;
    if !self_intersections(init).is_empty() {
        return Err(Error::Topology("initial mesh self-intersects".into()));
    }
    let neighbors = init.neighbors();
    let mut mesh = init.clone();
    let (mut current, mut grad) = evaluate(&mesh, &neighbors, &vertex_frames(&mesh)?, sdf, cfg, true)?;
    let mut trace = vec![TraceRecord {
        iteration: 0,
        step: 0.0,
        energy: current,
        intersections_found: 0,
    }];
    let mut step = cfg.step;
    let mut stalled = 0;
    let mut found = 0;
    let mut iteration = 0;
    while iteration < cfg.max_iterations {
        let max_move = grad.iter().map(|g| g.norm()).fold(0.0, f64::max) * cfg.step;
        if max_move < cfg.displacement_tolerance {
            break;
        }
        let moved: Vec<Point3<f64>> = mesh.vertices.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
        let candidate = mesh.with_vertices(moved);
        let hits = self_intersections(&candidate).len();
        let accepted = if hits > 0 {
            found += hits;
            None
        } else {
            let (e, g) = evaluate(&candidate, &neighbors, &vertex_frames(&candidate)?, sdf, cfg, true)?;
            (e.total <= current.total).then_some((e, g))
        };
        match accepted {
            Some((e, g)) => {
                iteration += 1;
                let rel = if current.total > 0.0 {
                    (current.total - e.total) / current.total
                } else {
                    0.0
                };
                stalled = if rel < cfg.rel_tolerance { stalled + 1 } else { 0 };
                mesh = candidate;
                current = e;
                grad = g;
                trace.push(TraceRecord {
                    iteration,
                    step,
                    energy: e,
                    intersections_found: std::mem::take(&mut found),
                });
                if stalled >= cfg.patience {
                    break;
                }
            }
            None => {
                step *= cfg.shrink;
                if step < cfg.min_step {
                    if hits > 0 {
                        return Err(Error::FitStalled {
                            step,
                            intersections: hits,
                            partial: Box::new(mesh),
                            trace,
                        });
                    }
                    break;
                }
            }
        }
    }
    Ok(FitResult { mesh, trace })
}

/// Fits the pial surface starting from the white-matter mesh, keeping its
/// connectivity so vertices correspond one to one.
pub fn fit_pial(wm: &TriangleMesh, pial_sdf: &dyn SignedDistance, cfg: &DeformConfig) -> Result<FitResult> {
    fit_surface(wm, pial_sdf, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes::{icosphere, plane_grid, radial_map};
    use crate::volume::GridGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Wavy;

    impl SignedDistance for Wavy {
        fn eval(&self, p: &Point3<f64>) -> Result<(f64, Vector3<f64>)> {
            let d = p.z - 0.3 * (0.7 * p.x).sin() + 0.2 * (0.5 * p.y).cos();
            Ok((
                d,
                Vector3::new(-0.21 * (0.7 * p.x).cos(), -0.1 * (0.5 * p.y).sin(), 1.0),
            ))
        }
    }

    fn perturbed_sphere(seed: u64, level: u32) -> TriangleMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = icosphere(level, 3.0);
        let v = m
            .vertices
            .iter()
            .map(|p| p + Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2)))
            .collect();
        m.with_vertices(v)
    }

    fn check_gradient(mesh: &TriangleMesh, sdf: &dyn SignedDistance, cfg: &DeformConfig) {
        let frames = vertex_frames(mesh).unwrap();
        let (_, grad) = energy_gradient(mesh, sdf, &frames, cfg).unwrap();
        let h = 1e-6;
        for v in (0..mesh.vertex_count()).step_by(7) {
            for a in 0..3 {
                let mut plus = mesh.vertices.clone();
                let mut minus = mesh.vertices.clone();
                plus[v][a] += h;
                minus[v][a] -= h;
                let ep = energy(&mesh.with_vertices(plus), sdf, &frames, cfg).unwrap().total;
                let em = energy(&mesh.with_vertices(minus), sdf, &frames, cfg).unwrap().total;
                let fd = (ep - em) / (2.0 * h);
                let scale = grad[v].norm().max(1e-3);
                assert!(
                    (fd - grad[v][a]).abs() <= 1e-5 * scale,
                    "v{v} a{a}: fd {fd} vs {}",
                    grad[v][a]
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = DeformConfig {
            lambda_normal: 0.3,
            lambda_tangential: 0.1,
            ..Default::default()
        };
        for seed in 0..3 {
            check_gradient(&perturbed_sphere(seed, 2), &Wavy, &cfg);
        }
        let sphere = SphereSdf {
            center: Point3::new(0.1, 0.0, -0.2),
            radius: 2.8,
        };
        check_gradient(&perturbed_sphere(9, 2), &sphere, &DeformConfig::default());
    }

    #[test]
    fn plane_on_zero_level() {
        let m = plane_grid(6, 6, 1.0, 0.0);
        let plane = |p: &Point3<f64>| p.z;
        struct Plane<F>(F);
        impl<F: Fn(&Point3<f64>) -> f64 + Sync> SignedDistance for Plane<F> {
            fn eval(&self, p: &Point3<f64>) -> Result<(f64, Vector3<f64>)> {
                Ok(((self.0)(p), Vector3::z()))
            }
        }
        let frames = vertex_frames(&m).unwrap();
        let e = energy(&m, &Plane(plane), &frames, &DeformConfig::default()).unwrap();
        assert_eq!(e.fidelity, 0.0);
        assert_eq!(e.normal, 0.0);
        assert!(e.tangential > 0.0);
    }

    #[test]
    fn clipped_region_saturates_fidelity() {
        let g = GridGeometry::centered([12; 3], 1.0).unwrap();
        let sdf = ScalarVolume::filled(g, 5.0);
        let m = icosphere(1, 3.0);
        let e = energy(&m, &sdf, &vertex_frames(&m).unwrap(), &DeformConfig::default()).unwrap();
        let expected = m.vertex_count() as f64 * 5f64.tanh().powi(2);
        assert!((e.fidelity - expected).abs() < 1e-9);
    }

    #[test]
    fn mesh_outside_grid_is_rejected() {
        let g = GridGeometry::centered([8; 3], 1.0).unwrap();
        let sdf = ScalarVolume::filled(g, 1.0);
        let m = icosphere(1, 10.0);
        let err = energy(&m, &sdf, &vertex_frames(&m).unwrap(), &DeformConfig::default()).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain(_)));
    }

    #[test]
    fn stationary_start_barely_moves() {
        let m = icosphere(4, 12.0);
        let fit = fit_surface(
            &m,
            &SphereSdf {
                center: Point3::origin(),
                radius: 12.0,
            },
            &DeformConfig::default(),
        )
        .unwrap();
        assert!(fit.trace.len() <= 3, "{} iterations", fit.trace.len() - 1);
        let moved = fit
            .mesh
            .vertices
            .iter()
            .zip(&m.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(moved < 1e-3, "moved {moved}");
    }

    fn radial_aad(m: &TriangleMesh, r: f64) -> f64 {
        m.vertices.iter().map(|p| (p.coords.norm() - r).abs()).sum::<f64>() / m.vertex_count() as f64
    }

    fn assert_monotone(trace: &[TraceRecord]) {
        for w in trace.windows(2) {
            assert!(w[1].energy.total <= w[0].energy.total);
        }
    }

    #[test]
    fn shrinks_onto_sphere() {
        let init = icosphere(4, 14.0);
        let fit = fit_surface(
            &init,
            &SphereSdf {
                center: Point3::origin(),
                radius: 12.0,
            },
            &DeformConfig::default(),
        )
        .unwrap();
        assert!(radial_aad(&fit.mesh, 12.0) < 0.1, "aad {}", radial_aad(&fit.mesh, 12.0));
        assert_monotone(&fit.trace);
        assert_eq!(fit.mesh.euler_characteristic(), 2);
        assert!(self_intersections(&fit.mesh).is_empty());
    }

    #[test]
    fn without_springs_fidelity_vanishes() {
        let cfg = DeformConfig {
            lambda_normal: 0.0,
            lambda_tangential: 0.0,
            ..Default::default()
        };
        let init = icosphere(3, 13.0);
        let fit = fit_surface(
            &init,
            &SphereSdf {
                center: Point3::origin(),
                radius: 12.0,
            },
            &cfg,
        )
        .unwrap();
        let bound = init.vertex_count() as f64 * 0.05f64.tanh().powi(2);
        assert!(fit.trace.last().unwrap().energy.fidelity < bound);
    }

    #[test]
    fn pial_fit_keeps_correspondence() {
        let wm = icosphere(4, 12.0);
        let fit = fit_pial(
            &wm,
            &SphereSdf {
                center: Point3::origin(),
                radius: 15.0,
            },
            &DeformConfig::default(),
        )
        .unwrap();
        assert!(fit.mesh.same_connectivity(&wm));
        assert!(radial_aad(&fit.mesh, 15.0) < 0.1);
        let mean_disp = fit
            .mesh
            .vertices
            .iter()
            .zip(&wm.vertices)
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / wm.vertex_count() as f64;
        assert!((mean_disp - 3.0).abs() < 0.1, "{mean_disp}");
        assert_monotone(&fit.trace);

        let same = fit_pial(
            &wm,
            &SphereSdf {
                center: Point3::origin(),
                radius: 12.0,
            },
            &DeformConfig::default(),
        )
        .unwrap();
        let moved = same
            .mesh
            .vertices
            .iter()
            .zip(&wm.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(moved < 1e-3, "moved {moved}");
    }

    #[test]
    fn folded_target_from_volume() {
        let g = GridGeometry::centered([40; 3], 1.0).unwrap();
        let target = radial_map(&icosphere(4, 1.0), |t, p| {
            12.0 + 1.0 * (3.0 * t).sin() * (3.0 * p).sin()
        });
        let sdf = crate::sdf::mesh_to_sdf(&target, &g).unwrap();
        let fit = fit_surface(&icosphere(4, 13.0), &sdf, &DeformConfig::default()).unwrap();
        assert_monotone(&fit.trace);
        let bvh = crate::mesh::Bvh::new(&target);
        let aad = fit.mesh.vertices.iter().map(|p| bvh.distance(p)).sum::<f64>() / fit.mesh.vertex_count() as f64;
        assert!(aad < 0.15, "aad {aad}");
    }

    #[test]
    fn bad_configs() {
        for cfg in [
            DeformConfig {
                shrink: 1.0,
                ..Default::default()
            },
            DeformConfig {
                min_step: 1.0,
                ..Default::default()
            },
            DeformConfig {
                lambda_normal: -1.0,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
        let json = r#"{"lambda_normal": 0.001, "typo": 1}"#;
        assert!(serde_json::from_str::<DeformConfig>(json).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rec = TraceRecord {
            iteration: 3,
            step: 0.5,
            energy: EnergyBreakdown {
                fidelity: 1.0,
                normal: 2.0,
                tangential: 3.0,
                total: 4.0,
            },
            intersections_found: 1,
        };
        write_trace_csv(&path, &[rec]).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(
            text,
            "iteration,step,fidelity,normal,tangential,total,intersections_found\n3,0.5,1,2,3,4,1\n"
        );
    }
}
