use nalgebra::Matrix4;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{AcquisitionSpec, Interval, Orientation, MAX_THICKNESS_MM, MIN_THICKNESS_MM, SPACING_RANGE_MM};
use super::transform::uniform;
use crate::error::{invalid, Result};
use crate::volume::{GridGeometry, Interp, Resample, ScalarVolume};

/// Ratio between a Gaussian's full width at half maximum and its σ.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// One sampled acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionParams {
    pub orientation: Orientation,
    pub spacing_mm: f64,
    pub thickness_mm: f64,
    pub noise_std: f64,
}

impl AcquisitionParams {
    pub fn validate(&self) -> Result<()> {
        if !SPACING_RANGE_MM.contains(self.spacing_mm) {
            return Err(invalid(format!("slice spacing {} outside [1, 9] mm", self.spacing_mm)));
        }
        let max_t = MAX_THICKNESS_MM.min(self.spacing_mm);
        if !(MIN_THICKNESS_MM..=max_t).contains(&self.thickness_mm) {
            return Err(invalid(format!(
                "slice thickness {} outside [1, {max_t}] mm",
                self.thickness_mm
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(invalid("noise std must be >= 0"));
        }
        Ok(())
    }
}

/// Orientation, then spacing, thickness and noise level.
pub fn sample_acquisition(spec: &AcquisitionSpec, rng: &mut ChaCha8Rng) -> AcquisitionParams {
    let orientation = spec.orientations[rng.random_range(0..spec.orientations.len())];
    let spacing_mm = uniform(rng, spec.spacing_mm);
    let max_t = MAX_THICKNESS_MM.min(spacing_mm);
    let thickness_mm = uniform(rng, Interval(MIN_THICKNESS_MM, max_t)).min(max_t);
    let noise_std = uniform(rng, spec.noise_std);
    AcquisitionParams {
        orientation,
        spacing_mm,
        thickness_mm,
        noise_std,
    }
}

/// Normalized Gaussian taps for a kernel of the given FWHM on a grid of the
/// given spacing, truncated at ±3σ. Index `r` is the centre tap.
pub fn gaussian_taps(fwhm_mm: f64, spacing_mm: f64) -> Vec<f64> {
    let sigma = fwhm_mm / FWHM_PER_SIGMA / spacing_mm;
    let r = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn axis_stride(dims: [usize; 3], axis: usize) -> usize {
    match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    }
}

/// Convolution along one voxel axis with border clamping.
pub fn blur_axis(vol: &ScalarVolume, axis: usize, fwhm_mm: f64) -> ScalarVolume {
    let g = vol.geometry();
    let d = g.dims();
    let taps = gaussian_taps(fwhm_mm, g.spacing()[axis]);
    let r = (taps.len() / 2) as i64;
    let n = d[axis] as i64;
    let stride = axis_stride(d, axis);
    let src = vol.data();
    let data = (0..g.len())
        .map(|idx| {
            let c = g.coords(idx)[axis] as i64;
            let base = idx - c as usize * stride;
            taps.iter()
                .enumerate()
                .map(|(t, w)| {
                    let s = (c + t as i64 - r).clamp(0, n - 1) as usize;
                    w * src[base + s * stride]
                })
                .sum()
        })
        .collect();
    ScalarVolume::new(g.clone(), data).expect("convolution of finite data")
}

/// Keeps samples `spacing_mm` apart along `axis`, interpolating linearly
/// between source voxels.
fn decimate_axis(vol: &ScalarVolume, axis: usize, spacing_mm: f64) -> Result<ScalarVolume> {
    let g = vol.geometry();
    let d = g.dims();
    let step = spacing_mm / g.spacing()[axis];
    let count = ((d[axis] - 1) as f64 / step).floor() as usize + 1;
    let mut dims = d;
    dims[axis] = count;
    let mut affine: Matrix4<f64> = *g.affine();
    for row in 0..3 {
        affine[(row, axis)] *= step;
    }
    let mut spacing = g.spacing();
    spacing[axis] = spacing_mm;
    let low = GridGeometry::new(dims, spacing, affine)?;
    let stride_src = axis_stride(d, axis);
    let src = vol.data();
    let data = (0..low.len())
        .map(|idx| {
            let mut c = low.coords(idx);
            let pos = c[axis] as f64 * step;
            c[axis] = 0;
            let base = g.index(c[0], c[1], c[2]);
            let i0 = (pos.floor() as usize).min(d[axis] - 1);
            let t = pos - i0 as f64;
            if t == 0.0 || i0 + 1 >= d[axis] {
                src[base + i0 * stride_src]
            } else {
                (1.0 - t) * src[base + i0 * stride_src] + t * src[base + (i0 + 1) * stride_src]
            }
        })
        .collect();
    ScalarVolume::new(low, data)
}

/// Through-plane blur with FWHM = thickness, decimation to the slice
/// spacing, additive Gaussian noise on the low-resolution samples and
/// trilinear upsampling back onto the input grid.
pub fn simulate_acquisition(
    vol: &ScalarVolume,
    params: &AcquisitionParams,
    rng: &mut ChaCha8Rng,
) -> Result<ScalarVolume> {
    params.validate()?;
    let axes = params.orientation.slice_axes();
    let mut low = vol.clone();
    for &a in axes {
        low = blur_axis(&low, a, params.thickness_mm);
    }
    for &a in axes {
        low = decimate_axis(&low, a, params.spacing_mm)?;
    }
    if params.noise_std > 0.0 {
        let normal = Normal::new(0.0, params.noise_std).map_err(|e| invalid(e.to_string()))?;
        let noisy = low.data().iter().map(|v| v + normal.sample(rng)).collect();
        low = ScalarVolume::new(low.geometry().clone(), noisy)?;
    }
    low.resample(vol.geometry(), Interp::Trilinear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{stage_rng, Stage};

    fn grid(n: usize) -> GridGeometry {
        GridGeometry::centered([n; 3], 1.0).unwrap()
    }

    fn params(o: Orientation, s: f64, t: f64) -> AcquisitionParams {
        AcquisitionParams {
            orientation: o,
            spacing_mm: s,
            thickness_mm: t,
            noise_std: 0.0,
        }
    }

    #[test]
    fn constant_volume_survives() {
        let v = ScalarVolume::filled(grid(20), 0.37);
        let mut rng = stage_rng(0, Stage::Acquisition);
        for o in [
            Orientation::Axial,
            Orientation::Coronal,
            Orientation::Sagittal,
            Orientation::Isotropic,
        ] {
            for (s, t) in [(1.0, 1.0), (3.0, 2.5), (6.0, 5.0), (9.0, 4.0)] {
                let out = simulate_acquisition(&v, &params(o, s, t), &mut rng).unwrap();
                assert!(out.data().iter().all(|x| (x - 0.37).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn unit_spacing_is_blur_only() {
        let v = ScalarVolume::from_fn(grid(12), |p| (p.x * 0.4).sin() + p.z * 0.1);
        let out = simulate_acquisition(
            &v,
            &params(Orientation::Axial, 1.0, 1.0),
            &mut stage_rng(0, Stage::Acquisition),
        )
        .unwrap();
        let blurred = blur_axis(&v, 2, 1.0);
        for (a, b) in out.data().iter().zip(blurred.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_gaussian() {
        let g = grid(31);
        let v = ScalarVolume::from_fn(g.clone(), |p| if p == nalgebra::Point3::origin() { 1.0 } else { 0.0 });
        let out = blur_axis(&v, 2, 4.0);
        let sigma = 4.0 / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let r = (3.0 * sigma).ceil() as i64;
        let norm: f64 = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).sum();
        for k in -15i64..=15 {
            let expected = if k.abs() <= r {
                (-(k * k) as f64 / (2.0 * sigma * sigma)).exp() / norm
            } else {
                0.0
            };
            let got = out.get(15, 15, (15 + k) as usize);
            assert!((got - expected).abs() < 1e-6, "tap {k}: {got} vs {expected}");
        }
        assert_eq!(out.get(14, 15, 15), 0.0);
    }

    #[test]
    fn mean_drift_is_small() {
        let v = ScalarVolume::from_fn(grid(32), |p| 1.0 + 0.5 * (p.x * 0.2).sin() * (p.z * 0.3).cos());
        for (s, t) in [(2.0, 2.0), (5.0, 5.0), (9.0, 5.0)] {
            let out = simulate_acquisition(
                &v,
                &params(Orientation::Axial, s, t),
                &mut stage_rng(0, Stage::Acquisition),
            )
            .unwrap();
            assert!((out.mean() / v.mean() - 1.0).abs() <= 0.01);
        }
    }

    #[test]
    fn out_of_range_parameters() {
        let v = ScalarVolume::filled(grid(4), 1.0);
        let mut rng = stage_rng(0, Stage::Acquisition);
        for (s, t) in [(0.5, 1.0), (10.0, 5.0), (3.0, 4.0), (8.0, 6.0), (2.0, 0.5)] {
            assert!(simulate_acquisition(&v, &params(Orientation::Axial, s, t), &mut rng).is_err());
        }
    }

    #[test]
    fn noise_changes_values() {
        let v = ScalarVolume::filled(grid(10), 0.5);
        let mut p = params(Orientation::Coronal, 2.0, 2.0);
        p.noise_std = 0.1;
        let a = simulate_acquisition(&v, &p, &mut stage_rng(3, Stage::Noise)).unwrap();
        let b = simulate_acquisition(&v, &p, &mut stage_rng(3, Stage::Noise)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().any(|x| (x - 0.5).abs() > 1e-3));
    }
}
