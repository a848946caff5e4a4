//! Analytic test subjects with known surfaces.

use std::fmt;
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mesh::shapes::{icosphere, radial_map};
use crate::mesh::TriangleMesh;
use crate::sdf::mesh_to_sdf;
use crate::volume::{GridGeometry, LabelVolume, ScalarVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Sphere,
    Concentric,
    Folded,
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomKind::Sphere => "sphere",
            PhantomKind::Concentric => "concentric",
            PhantomKind::Folded => "folded",
        })
    }
}

impl FromStr for PhantomKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(PhantomKind::Sphere),
            "concentric" => Ok(PhantomKind::Concentric),
            "folded" => Ok(PhantomKind::Folded),
            other => Err(invalid(format!("unknown phantom kind '{other}'"))),
        }
    }
}

/// Grid and shape parameters. The grid is isotropic and centred on the
/// world origin, which is also the centre of every shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomParams {
    pub dims: usize,
    pub spacing_mm: f64,
    /// White-matter radius for every kind.
    pub inner_radius_mm: f64,
    /// Pial radius for the concentric phantom.
    pub outer_radius_mm: f64,
    /// Fold amplitude and angular frequency: `r = R + A·sin(kθ)·sin(kφ)`.
    pub fold_amplitude_mm: f64,
    pub fold_frequency: f64,
    /// Icosphere subdivision level of the reference meshes.
    pub subdivision: u32,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            dims: 64,
            spacing_mm: 1.0,
            inner_radius_mm: 12.0,
            outer_radius_mm: 15.0,
            fold_amplitude_mm: 1.5,
            fold_frequency: 6.0,
            subdivision: 5,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self, kind: PhantomKind) -> Result<()> {
        if self.dims < 4 || !(self.spacing_mm > 0.0) || !self.spacing_mm.is_finite() {
            return Err(invalid("phantom grid needs dims >= 4 and spacing > 0"));
        }
        if !(self.inner_radius_mm > 0.0) {
            return Err(invalid("phantom radius must be positive"));
        }
        if kind == PhantomKind::Concentric && !(self.inner_radius_mm < self.outer_radius_mm) {
            return Err(invalid("concentric phantom needs inner radius < outer radius"));
        }
        if kind == PhantomKind::Folded && !(self.fold_amplitude_mm.abs() < self.inner_radius_mm) {
            return Err(invalid("fold amplitude must be smaller than the radius"));
        }
        let outer = match kind {
            PhantomKind::Concentric => self.outer_radius_mm,
            PhantomKind::Folded => self.inner_radius_mm + self.fold_amplitude_mm.abs(),
            PhantomKind::Sphere => self.inner_radius_mm,
        };
        let half = (self.dims / 2 - 1) as f64 * self.spacing_mm;
        if outer >= half {
            return Err(invalid(format!(
                "shape of radius {outer} mm does not fit a {}-voxel grid",
                self.dims
            )));
        }
        if self.subdivision > 7 {
            return Err(invalid("subdivision level above 7"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridGeometry> {
        GridGeometry::centered([self.dims; 3], self.spacing_mm)
    }
}

/// Label map, reference meshes and SDFs. Surfaces are ordered inner to
/// outer. Labels: 0 background, 1 inside the first surface, 2 between the
/// first and the second.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub kind: PhantomKind,
    pub labels: LabelVolume,
    pub meshes: Vec<TriangleMesh>,
    pub sdfs: Vec<ScalarVolume>,
}

fn sphere_sdf(grid: &GridGeometry, r: f64) -> ScalarVolume {
    ScalarVolume::from_fn(grid.clone(), move |p: Point3<f64>| p.coords.norm() - r)
}

/// The folded phantom has no closed-form SDF; its SDF is computed from the
/// reference mesh.
pub fn make_phantom(kind: PhantomKind, params: &PhantomParams) -> Result<Phantom> {
    params.validate(kind)?;
    let grid = params.grid()?;
    let r = params.inner_radius_mm;
    let (meshes, sdfs) = match kind {
        PhantomKind::Sphere => (vec![icosphere(params.subdivision, r)], vec![sphere_sdf(&grid, r)]),
        PhantomKind::Concentric => {
            let r2 = params.outer_radius_mm;
            (
                vec![icosphere(params.subdivision, r), icosphere(params.subdivision, r2)],
                vec![sphere_sdf(&grid, r), sphere_sdf(&grid, r2)],
            )
        }
        PhantomKind::Folded => {
            let (a, k) = (params.fold_amplitude_mm, params.fold_frequency);
            let mesh = radial_map(&icosphere(params.subdivision, 1.0), |t, p| {
                r + a * (k * t).sin() * (k * p).sin()
            });
            let sdf = mesh_to_sdf(&mesh, &grid)?;
            (vec![mesh], vec![sdf])
        }
    };
    let labels = match sdfs.as_slice() {
        [inner] => inner.map(|d| u16::from(d < 0.0)),
        [inner, outer] => {
            let data = inner
                .data()
                .iter()
                .zip(outer.data())
                .map(|(&i, &o)| {
                    if i < 0.0 {
                        1
                    } else if o < 0.0 {
                        2
                    } else {
                        0
                    }
                })
                .collect();
            LabelVolume::new(grid, data)?
        }
        _ => unreachable!(),
    };
    Ok(Phantom {
        kind,
        labels,
        meshes,
        sdfs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes::spherical_angles;

    #[test]
    fn sphere_centre_is_minus_radius() {
        let p = make_phantom(PhantomKind::Sphere, &PhantomParams::default()).unwrap();
        assert_eq!(p.sdfs[0].get(32, 32, 32), -12.0);
        assert_eq!(p.labels.get(32, 32, 32), 1);
        assert_eq!(p.labels.get(0, 0, 0), 0);
        assert_eq!(p.meshes[0].euler_characteristic(), 2);
    }

    #[test]
    fn concentric_shell_labels() {
        let p = make_phantom(PhantomKind::Concentric, &PhantomParams::default()).unwrap();
        for (idx, &l) in p.labels.data().iter().enumerate() {
            let (i, o) = (p.sdfs[0].data()[idx], p.sdfs[1].data()[idx]);
            assert_eq!(l == 2, i >= 0.0 && o < 0.0);
            assert_eq!(l == 1, i < 0.0);
        }
        assert!(p.labels.data().contains(&2));
    }

    #[test]
    fn folded_vertices_follow_formula() {
        let params = PhantomParams {
            dims: 40,
            subdivision: 4,
            ..Default::default()
        };
        let p = make_phantom(PhantomKind::Folded, &params).unwrap();
        for v in &p.meshes[0].vertices {
            let (t, ph) = spherical_angles(v);
            let r = 12.0 + 1.5 * (6.0 * t).sin() * (6.0 * ph).sin();
            assert!((v.coords.norm() - r).abs() < 1e-9);
        }
        assert_eq!(p.labels.get(20, 20, 20), 1);
    }

    #[test]
    fn invalid_parameters() {
        let bad = PhantomParams {
            outer_radius_mm: 10.0,
            ..Default::default()
        };
        assert!(make_phantom(PhantomKind::Concentric, &bad).is_err());
        let tiny = PhantomParams {
            dims: 16,
            ..Default::default()
        };
        assert!(make_phantom(PhantomKind::Sphere, &tiny).is_err());
        assert!("cube".parse::<PhantomKind>().is_err());
        assert_eq!("folded".parse::<PhantomKind>().unwrap(), PhantomKind::Folded);
    }
}
