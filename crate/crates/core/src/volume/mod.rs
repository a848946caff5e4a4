//! Voxel grids, interpolation, resampling and binary morphology.
//!
//! Volumes are stored x-fastest: the linear index of voxel `(i, j, k)` is
//! `i + dims[0] * (j + dims[1] * k)`. World coordinates are millimetres,
//! reached from continuous voxel indices through a 4x4 affine.

mod morph;
pub mod nifti;

pub use morph::{dilate, erode, fill_cavities, largest_component, make_well_composed, morphological_close};

use nalgebra::{Matrix3, Matrix4, Point3, Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Voxels with coordinates closer than this to an integer are treated as
/// lying exactly on the voxel centre.
const CENTER_SNAP: f64 = 1e-9;

/// Extent, spacing and voxel-to-world mapping of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
    inverse: Matrix4<f64>,
}

impl GridGeometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(invalid(format!("grid dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(invalid(format!("grid spacing must be > 0, got {spacing:?}")));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(invalid("affine has non-finite entries"));
        }
        let linear: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into();
        if linear.determinant().abs() < 1e-12 {
            return Err(invalid("affine is singular"));
        }
        let inverse = affine
            .try_inverse()
            .ok_or_else(|| invalid("affine is not invertible"))?;
        Ok(Self {
            dims,
            spacing,
            affine,
            inverse,
        })
    }

    /// Axis-aligned grid whose voxel `(0, 0, 0)` sits at `origin`.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let mut affine = Matrix4::identity();
        for a in 0..3 {
            affine[(a, a)] = spacing[a];
            affine[(a, 3)] = origin[a];
        }
        Self::new(dims, spacing, affine)
    }

    /// Isotropic 1mm-style grid centred so that voxel `dims / 2` maps to the world origin.
    pub fn centered(dims: [usize; 3], spacing: f64) -> Result<Self> {
        let origin = [
            -((dims[0] / 2) as f64) * spacing,
            -((dims[1] / 2) as f64) * spacing,
            -((dims[2] / 2) as f64) * spacing,
        ];
        Self::axis_aligned(dims, [spacing; 3], origin)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    /// World position of a continuous voxel coordinate.
    pub fn voxel_to_world(&self, v: [f64; 3]) -> Point3<f64> {
        let h = self.affine * Vector4::new(v[0], v[1], v[2], 1.0);
        Point3::new(h.x, h.y, h.z)
    }

    /// Continuous voxel coordinate of a world position.
    pub fn world_to_voxel(&self, p: &Point3<f64>) -> [f64; 3] {
        let h = self.inverse * Vector4::new(p.x, p.y, p.z, 1.0);
        [h.x, h.y, h.z]
    }

    /// The 3x3 linear part of the voxel-to-world affine.
    pub fn linear(&self) -> Matrix3<f64> {
        self.affine.fixed_view::<3, 3>(0, 0).into()
    }

    pub(crate) fn inverse_linear(&self) -> Matrix3<f64> {
        self.inverse.fixed_view::<3, 3>(0, 0).into()
    }

    /// Whether two grids describe the same voxel lattice (to 1e-9 in the affine).
    pub fn matches(&self, other: &GridGeometry) -> bool {
        self.dims == other.dims
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()))
    }

    /// True when the continuous voxel coordinate lies within the grid's voxel extent.
    pub fn contains_voxel(&self, v: [f64; 3]) -> bool {
        (0..3).all(|a| v[a] >= -0.5 && v[a] <= self.dims[a] as f64 - 0.5)
    }
}

/// A 3D array of values on a [`GridGeometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    geometry: GridGeometry,
    data: Vec<T>,
}

/// Real-valued volume: intensities or signed distances.
pub type ScalarVolume = Volume<f64>;

/// Integer tissue labels; 0 is background.
pub type LabelVolume = Volume<u16>;

impl<T: Copy + Send + Sync> Volume<T> {
    fn from_parts(geometry: GridGeometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(invalid(format!(
                "data length {} does not match grid size {}",
                data.len(),
                geometry.len()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(geometry: GridGeometry, value: T) -> Self {
        let data = vec![value; geometry.len()];
        Self { geometry, data }
    }

    /// Evaluates `f` at the world position of every voxel centre.
    pub fn from_fn(geometry: GridGeometry, f: impl Fn(Point3<f64>) -> T + Sync) -> Self {
        let data = (0..geometry.len())
            .into_par_iter()
            .map(|idx| {
                let [i, j, k] = geometry.coords(idx);
                f(geometry.voxel_to_world([i as f64, j as f64, k as f64]))
            })
            .collect();
        Self { geometry, data }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.geometry.index(i, j, k)]
    }

    pub fn map<U: Copy + Send + Sync>(&self, f: impl Fn(T) -> U + Sync) -> Volume<U> {
        Volume {
            geometry: self.geometry.clone(),
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn with_data<U>(&self, data: Vec<U>) -> Volume<U> {
        debug_assert_eq!(data.len(), self.data.len());
        Volume {
            geometry: self.geometry.clone(),
            data,
        }
    }

    fn nearest_at(&self, v: [f64; 3]) -> T {
        let d = self.geometry.dims;
        let pick = |c: f64, n: usize| -> usize { c.round().clamp(0.0, (n - 1) as f64) as usize };
        self.get(pick(v[0], d[0]), pick(v[1], d[1]), pick(v[2], d[2]))
    }
}

impl ScalarVolume {
    pub fn new(geometry: GridGeometry, data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at voxel {pos}")));
        }
        Self::from_parts(geometry, data)
    }

    /// Trilinear interpolation at a world point, clamping to the border voxels
    /// outside the grid.
    pub fn trilinear_sample(&self, p: &Point3<f64>) -> Result<f64> {
        check_point(p)?;
        Ok(self.sample_voxel(self.geometry.world_to_voxel(p)))
    }

    /// Value and world-space gradient of the trilinear interpolant. The
    /// gradient component along a clamped axis is zero.
    pub fn sample_with_gradient(&self, p: &Point3<f64>) -> Result<(f64, Vector3<f64>)> {
        check_point(p)?;
        let (value, gv) = self.sample_voxel_grad(self.geometry.world_to_voxel(p));
        // d(voxel)/d(world) is the inverse linear part; chain rule transposes it.
        let g = self.geometry.inverse_linear().transpose() * gv;
        Ok((value, g))
    }

    pub(crate) fn sample_voxel(&self, v: [f64; 3]) -> f64 {
        let d = self.geometry.dims;
        let (x0, x1, tx, _) = axis_cell(v[0], d[0]);
        let (y0, y1, ty, _) = axis_cell(v[1], d[1]);
        let (z0, z1, tz, _) = axis_cell(v[2], d[2]);
        let lerp = |a: f64, b: f64, t: f64| (1.0 - t) * a + t * b;
        let c00 = lerp(self.get(x0, y0, z0), self.get(x1, y0, z0), tx);
        let c10 = lerp(self.get(x0, y1, z0), self.get(x1, y1, z0), tx);
        let c01 = lerp(self.get(x0, y0, z1), self.get(x1, y0, z1), tx);
        let c11 = lerp(self.get(x0, y1, z1), self.get(x1, y1, z1), tx);
        let c0 = lerp(c00, c10, ty);
        let c1 = lerp(c01, c11, ty);
        lerp(c0, c1, tz)
    }

    fn sample_voxel_grad(&self, v: [f64; 3]) -> (f64, Vector3<f64>) {
        let d = self.geometry.dims;
        let (x0, x1, tx, fx) = axis_cell(v[0], d[0]);
        let (y0, y1, ty, fy) = axis_cell(v[1], d[1]);
        let (z0, z1, tz, fz) = axis_cell(v[2], d[2]);
        let c = |i, j, k| self.get(i, j, k);
        let (v000, v100, v010, v110) = (c(x0, y0, z0), c(x1, y0, z0), c(x0, y1, z0), c(x1, y1, z0));
        let (v001, v101, v011, v111) = (c(x0, y0, z1), c(x1, y0, z1), c(x0, y1, z1), c(x1, y1, z1));
        let lerp = |a: f64, b: f64, t: f64| (1.0 - t) * a + t * b;

        let c00 = lerp(v000, v100, tx);
        let c10 = lerp(v010, v110, tx);
        let c01 = lerp(v001, v101, tx);
        let c11 = lerp(v011, v111, tx);
        let c0 = lerp(c00, c10, ty);
        let c1 = lerp(c01, c11, ty);
        let value = lerp(c0, c1, tz);

        let dz = if fz { c1 - c0 } else { 0.0 };
        let dy = if fy { lerp(c10 - c00, c11 - c01, tz) } else { 0.0 };
        let dx = if fx {
            let e0 = lerp(v100 - v000, v110 - v010, ty);
            let e1 = lerp(v101 - v001, v111 - v011, ty);
            lerp(e0, e1, tz)
        } else {
            0.0
        };
        (value, Vector3::new(dx, dy, dz))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

impl LabelVolume {
    pub fn new(geometry: GridGeometry, data: Vec<u16>) -> Result<Self> {
        Self::from_parts(geometry, data)
    }

    /// Binary mask (0/1) from a predicate on labels.
    pub fn mask_where(&self, f: impl Fn(u16) -> bool + Sync) -> LabelVolume {
        self.map(|l| u16::from(f(l)))
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Sorted distinct labels present in the volume.
    pub fn label_set(&self) -> Vec<u16> {
        let mut seen = std::collections::BTreeSet::new();
        seen.extend(self.data.iter().copied());
        seen.into_iter().collect()
    }
}

fn check_point(p: &Point3<f64>) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("non-finite sample point {p:?}")))
    }
}

/// Cell lookup along one axis: lower/upper voxel, blend weight and whether
/// the coordinate lies inside the interpolation range (not clamped).
#[inline]
fn axis_cell(c: f64, n: usize) -> (usize, usize, f64, bool) {
    if n == 1 {
        return (0, 0, 0.0, false);
    }
    let hi = (n - 1) as f64;
    let inside = (0.0..=hi).contains(&c);
    let mut c = c.clamp(0.0, hi);
    let r = c.round();
    if (c - r).abs() < CENTER_SNAP {
        c = r;
    }
    let i0 = (c.floor() as usize).min(n - 2);
    (i0, i0 + 1, c - i0 as f64, inside)
}

/// Interpolation used when resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Trilinear,
    Nearest,
}

/// Resampling of a volume onto another grid.
pub trait Resample: Sized {
    fn resample(&self, target: &GridGeometry, mode: Interp) -> Result<Self>;

    /// Backward warp: each output voxel at world `p` pulls the source value at `map(p)`.
    fn warp(
        &self,
        target: &GridGeometry,
        mode: Interp,
        map: &(dyn Fn(Point3<f64>) -> Point3<f64> + Sync),
    ) -> Result<Self>;
}

impl Resample for ScalarVolume {
    fn resample(&self, target: &GridGeometry, mode: Interp) -> Result<Self> {
        self.warp(target, mode, &|p| p)
    }

    fn warp(
        &self,
        target: &GridGeometry,
        mode: Interp,
        map: &(dyn Fn(Point3<f64>) -> Point3<f64> + Sync),
    ) -> Result<Self> {
        let data: Vec<f64> = (0..target.len())
            .into_par_iter()
            .map(|idx| {
                let [i, j, k] = target.coords(idx);
                let p = map(target.voxel_to_world([i as f64, j as f64, k as f64]));
                let v = self.geometry.world_to_voxel(&p);
                match mode {
                    Interp::Trilinear => self.sample_voxel(v),
                    Interp::Nearest => self.nearest_at(v),
                }
            })
            .collect();
        ScalarVolume::new(target.clone(), data)
    }
}

impl Resample for LabelVolume {
    fn resample(&self, target: &GridGeometry, mode: Interp) -> Result<Self> {
        self.warp(target, mode, &|p| p)
    }

    fn warp(
        &self,
        target: &GridGeometry,
        mode: Interp,
        map: &(dyn Fn(Point3<f64>) -> Point3<f64> + Sync),
    ) -> Result<Self> {
        if mode != Interp::Nearest {
            return Err(Error::InvalidMode(
                "label volumes only support nearest-neighbour resampling".into(),
            ));
        }
        let data: Vec<u16> = (0..target.len())
            .into_par_iter()
            .map(|idx| {
                let [i, j, k] = target.coords(idx);
                let p = map(target.voxel_to_world([i as f64, j as f64, k as f64]));
                self.nearest_at(self.geometry.world_to_voxel(&p))
            })
            .collect();
        LabelVolume::new(target.clone(), data)
    }
}
