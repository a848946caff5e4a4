use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Interval, SynthConfig};
use crate::error::{invalid, Result};
use crate::volume::{GridGeometry, ScalarVolume};

/// Uniform draw from a closed interval. Always consumes exactly one value
/// from the stream, even for degenerate intervals.
pub(crate) fn uniform(rng: &mut ChaCha8Rng, iv: Interval) -> f64 {
    let u: f64 = rng.random();
    iv.lo() + (iv.hi() - iv.lo()) * u
}

/// Axis-aligned coarse grid covering the voxel extent of `grid`, with
/// control points `spacing_mm` apart (at least two per axis).
pub(crate) fn coarse_cover(grid: &GridGeometry, spacing_mm: f64) -> Result<GridGeometry> {
    let d = grid.dims();
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in 0..8 {
        let v = [
            if c & 1 == 0 { -0.5 } else { d[0] as f64 - 0.5 },
            if c & 2 == 0 { -0.5 } else { d[1] as f64 - 0.5 },
            if c & 4 == 0 { -0.5 } else { d[2] as f64 - 0.5 },
        ];
        let w = grid.voxel_to_world(v);
        lo = lo.inf(&w);
        hi = hi.sup(&w);
    }
    let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / spacing_mm).ceil() as usize + 1).max(2));
    GridGeometry::axis_aligned(dims, [spacing_mm; 3], [lo.x, lo.y, lo.z])
}

/// I.i.d. zero-mean Gaussian samples on the coarse cover of `grid`.
fn random_field(grid: &GridGeometry, spacing_mm: f64, std: f64, rng: &mut ChaCha8Rng) -> Result<ScalarVolume> {
    let coarse = coarse_cover(grid, spacing_mm)?;
    let normal = Normal::new(0.0, std).map_err(|e| invalid(format!("field std: {e}")))?;
    let data = (0..coarse.len()).map(|_| normal.sample(rng)).collect();
    ScalarVolume::new(coarse, data)
}

/// Scalar field defined by coarse control points and evaluated anywhere by
/// trilinear interpolation with border clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothField {
    coarse: ScalarVolume,
}

impl SmoothField {
    pub(crate) fn sample(grid: &GridGeometry, spacing_mm: f64, std: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            coarse: random_field(grid, spacing_mm, std, rng)?,
        })
    }

    pub fn at(&self, p: &Point3<f64>) -> f64 {
        self.coarse.sample_voxel(self.coarse.geometry().world_to_voxel(p))
    }

    pub fn control_points(&self) -> &ScalarVolume {
        &self.coarse
    }

    /// The field upsampled onto `grid`.
    pub fn dense(&self, grid: &GridGeometry) -> ScalarVolume {
        ScalarVolume::from_fn(grid.clone(), |p| self.at(&p))
    }
}

/// Smooth displacement field with one [`SmoothField`] per world axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    components: [SmoothField; 3],
}

impl DisplacementField {
    pub fn at(&self, p: &Point3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.components[0].at(p),
            self.components[1].at(p),
            self.components[2].at(p),
        )
    }

    pub fn components(&self) -> &[SmoothField; 3] {
        &self.components
    }
}

/// World-space map `φ(x) = φ_aff(x + u(x))`: displacement first, then an
/// affine acting about the grid centre.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialTransform {
    center: Point3<f64>,
    linear: Matrix3<f64>,
    translation: Vector3<f64>,
    displacement: Option<DisplacementField>,
}

impl SpatialTransform {
    pub fn identity() -> Self {
        Self {
            center: Point3::origin(),
            linear: Matrix3::identity(),
            translation: Vector3::zeros(),
            displacement: None,
        }
    }

    pub fn translation(t: Vector3<f64>) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.linear == Matrix3::identity() && self.translation == Vector3::zeros() && self.displacement.is_none()
    }

    pub fn displacement(&self) -> Option<&DisplacementField> {
        self.displacement.as_ref()
    }

    pub fn affine_part(&self, p: &Point3<f64>) -> Point3<f64> {
        if self.linear == Matrix3::identity() {
            return p + self.translation;
        }
        self.center + self.linear * (p - self.center) + self.translation
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        if self.is_identity() {
            return *p;
        }
        let q = match &self.displacement {
            Some(u) => p + u.at(p),
            None => *p,
        };
        self.affine_part(&q)
    }
}

/// Draws rotation (x, y, z), scaling, shear and translation in that order,
/// then the coarse displacement components x, y, z.
pub fn sample_transform(cfg: &SynthConfig, grid: &GridGeometry, rng: &mut ChaCha8Rng) -> Result<SpatialTransform> {
    let a = &cfg.affine;
    let rot = a.rotation_deg.map(|iv| uniform(rng, iv).to_radians());
    let scale = a.scaling.map(|iv| uniform(rng, iv));
    let shear = [0; 3].map(|_| uniform(rng, a.shear));
    let translation = Vector3::from(a.translation_mm.map(|iv| uniform(rng, iv)));

    let r = Rotation3::from_euler_angles(rot[0], rot[1], rot[2]);
    let sh = Matrix3::new(1.0, shear[0], shear[1], 0.0, 1.0, shear[2], 0.0, 0.0, 1.0);
    let linear = r.matrix() * sh * Matrix3::from_diagonal(&Vector3::from(scale));

    let displacement = if cfg.warp.std_mm > 0.0 {
        let (spacing, std) = (cfg.warp.control_spacing_mm, cfg.warp.std_mm);
        let components = [
            SmoothField::sample(grid, spacing, std, rng)?,
            SmoothField::sample(grid, spacing, std, rng)?,
            SmoothField::sample(grid, spacing, std, rng)?,
        ];
        Some(DisplacementField { components })
    } else {
        None
    };
    let d = grid.dims();
    let center = grid.voxel_to_world([
        (d[0] as f64 - 1.0) / 2.0,
        (d[1] as f64 - 1.0) / 2.0,
        (d[2] as f64 - 1.0) / 2.0,
    ]);
    Ok(SpatialTransform {
        center,
        linear,
        translation,
        displacement,
    })
}
