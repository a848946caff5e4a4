//! Domain-randomized synthetic scans with spatially matching SDF targets.
//!
//! A sample is produced by the chain: random spatial transform, warp of the
//! label map and SDFs, per-label Gaussian intensities, multiplicative bias
//! field, and a simulated thick-slice acquisition. Every stage draws from its
//! own ChaCha8 stream selected from the config seed, so one seed always
//! reproduces the same sample bit for bit.

mod acquisition;
mod config;
mod transform;

pub use acquisition::{
    blur_axis, gaussian_taps, sample_acquisition, simulate_acquisition, AcquisitionParams, FWHM_PER_SIGMA,
};
pub use config::{
    AcquisitionSpec, AffineSpec, BiasSpec, GmmSpec, Interval, LabelPrior, Orientation, SynthConfig, WarpSpec,
    MAX_THICKNESS_MM, MIN_THICKNESS_MM, SPACING_RANGE_MM,
};
pub use transform::{sample_transform, DisplacementField, SmoothField, SpatialTransform};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::sdf::clip_sdf;
use crate::volume::{Interp, LabelVolume, Resample, ScalarVolume};
use transform::uniform;

/// Independent random stream per generation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Transform = 1,
    Intensity = 2,
    Bias = 3,
    Acquisition = 4,
    Noise = 5,
}

pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

/// Backward warp of labels (nearest) and SDFs (trilinear) through `phi`:
/// the output voxel at `x` takes the source value at `phi(x)`.
pub fn warp_pair(
    labels: &LabelVolume,
    sdfs: &[ScalarVolume],
    phi: &SpatialTransform,
) -> Result<(LabelVolume, Vec<ScalarVolume>)> {
    let g = labels.geometry();
    if let Some(i) = sdfs.iter().position(|s| !s.geometry().matches(g)) {
        return Err(Error::GeometryMismatch(format!(
            "SDF {i} does not share the label grid"
        )));
    }
    if phi.is_identity() {
        return Ok((labels.clone(), sdfs.to_vec()));
    }
    let map = |p| phi.apply(&p);
    let warped_labels = labels.warp(g, Interp::Nearest, &map)?;
    let warped = sdfs
        .iter()
        .map(|s| s.warp(g, Interp::Trilinear, &map))
        .collect::<Result<Vec<_>>>()?;
    Ok((warped_labels, warped))
}

/// Draws `(μ_l, σ_l)` per label present (ascending label order), then one
/// Gaussian value per voxel, and rescales the result to `[0, 1]`.
pub fn synth_intensities(labels: &LabelVolume, gmm: &GmmSpec, rng: &mut ChaCha8Rng) -> Result<ScalarVolume> {
    let present = labels.label_set();
    let mut params = std::collections::HashMap::new();
    for &l in &present {
        let prior = gmm.labels.get(&l).ok_or(Error::MissingLabel(l))?;
        let mu = uniform(rng, prior.mean);
        let sigma = uniform(rng, prior.std);
        params.insert(l, (mu, sigma));
    }
    let raw: Vec<f64> = labels
        .data()
        .iter()
        .map(|l| {
            let (mu, sigma) = params[l];
            let z: f64 = StandardNormal.sample(rng);
            mu + sigma * z
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let data = if hi > lo {
        raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; raw.len()]
    };
    ScalarVolume::new(labels.geometry().clone(), data)
}

/// Draws the bias amplitude and the coarse log-gain field for `grid`.
pub fn sample_bias_field(
    grid: &crate::volume::GridGeometry,
    spec: &BiasSpec,
    rng: &mut ChaCha8Rng,
) -> Result<SmoothField> {
    let amplitude = uniform(rng, spec.amplitude);
    SmoothField::sample(grid, spec.control_spacing_mm, amplitude, rng)
}

/// Multiplies by `exp(B(x))` and rescales so the maximum is 1. Zero stays
/// zero, positive stays positive.
pub fn apply_bias(vol: &ScalarVolume, spec: &BiasSpec, rng: &mut ChaCha8Rng) -> Result<ScalarVolume> {
    if vol.data().iter().any(|&v| v < 0.0) {
        return Err(invalid("bias field needs a non-negative volume"));
    }
    let field = sample_bias_field(vol.geometry(), spec, rng)?;
    let gain = field.dense(vol.geometry());
    let biased: Vec<f64> = vol.data().iter().zip(gain.data()).map(|(v, b)| v * b.exp()).collect();
    let max = biased.iter().copied().fold(0.0, f64::max);
    let data = if max > 0.0 {
        biased.iter().map(|v| v / max).collect()
    } else {
        biased
    };
    ScalarVolume::new(vol.geometry().clone(), data)
}

/// A synthetic image and its clipped SDF targets, plus what was sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub image: ScalarVolume,
    pub targets: Vec<ScalarVolume>,
    pub acquisition: AcquisitionParams,
}

/// Full generative chain for `cfg.seed`. Inputs must be on a 1mm isotropic grid.
pub fn generate_training_pair(labels: &LabelVolume, sdfs: &[ScalarVolume], cfg: &SynthConfig) -> Result<TrainingPair> {
    cfg.validate()?;
    if labels.geometry().spacing().iter().any(|s| (s - 1.0).abs() > 1e-6) {
        return Err(invalid("training inputs must be on a 1mm isotropic grid"));
    }
    let seed = cfg.seed;
    let phi = sample_transform(cfg, labels.geometry(), &mut stage_rng(seed, Stage::Transform))?;
    let (warped_labels, warped_sdfs) = warp_pair(labels, sdfs, &phi)?;
    let image = synth_intensities(&warped_labels, &cfg.gmm, &mut stage_rng(seed, Stage::Intensity))?;
    let image = apply_bias(&image, &cfg.bias, &mut stage_rng(seed, Stage::Bias))?;
    let acquisition = sample_acquisition(&cfg.acquisition, &mut stage_rng(seed, Stage::Acquisition));
    let image = simulate_acquisition(&image, &acquisition, &mut stage_rng(seed, Stage::Noise))?;
    let targets = warped_sdfs
        .iter()
        .map(|s| clip_sdf(s, cfg.clip_mm))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingPair {
        image,
        targets,
        acquisition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::nifti::encode_scalar;
    use crate::volume::GridGeometry;
    use nalgebra::Vector3;

    fn grid(n: usize) -> GridGeometry {
        GridGeometry::centered([n; 3], 1.0).unwrap()
    }

    fn sphere_inputs(n: usize, r: f64) -> (LabelVolume, ScalarVolume) {
        let sdf = ScalarVolume::from_fn(grid(n), |p| p.coords.norm() - r);
        let labels = sdf.map(|d| u16::from(d < 0.0));
        (labels, sdf)
    }

    #[test]
    fn identity_warp_returns_inputs() {
        let (l, s) = sphere_inputs(12, 4.0);
        let (wl, ws) = warp_pair(&l, std::slice::from_ref(&s), &SpatialTransform::identity()).unwrap();
        assert_eq!(wl, l);
        assert_eq!(ws[0], s);
    }

    #[test]
    fn translation_shifts_zero_crossing_by_one_voxel() {
        let sdf = ScalarVolume::from_fn(grid(16), |p| p.x - 0.5);
        let labels = sdf.map(|d| u16::from(d < 0.0));
        let phi = SpatialTransform::translation(Vector3::new(1.0, 0.0, 0.0));
        let (wl, ws) = warp_pair(&labels, std::slice::from_ref(&sdf), &phi).unwrap();
        // output(x) = source(x + 1): the crossing moves from x = 0.5 to x = -0.5
        for i in 1..15 {
            let x = i as f64 - 8.0;
            assert!((ws[0].get(i, 5, 5) - (x + 0.5)).abs() < 1e-12);
            assert_eq!(wl.get(i, 5, 5), u16::from(x + 0.5 < 0.0));
        }
    }

    #[test]
    fn warped_sign_agrees_with_warped_labels() {
        let (l, s) = sphere_inputs(40, 12.0);
        let mut cfg = SynthConfig::degenerate(0);
        cfg.warp.std_mm = 2.0;
        cfg.affine.rotation_deg = [Interval(-10.0, 10.0); 3];
        cfg.affine.scaling = [Interval(0.9, 1.1); 3];
        for seed in 0..3 {
            let phi = sample_transform(&cfg, l.geometry(), &mut stage_rng(seed, Stage::Transform)).unwrap();
            let (wl, ws) = warp_pair(&l, std::slice::from_ref(&s), &phi).unwrap();
            let (mut agree, mut total) = (0usize, 0usize);
            for (lab, d) in wl.data().iter().zip(ws[0].data()) {
                if d.abs() > 1.0 {
                    total += 1;
                    agree += usize::from((*d < 0.0) == (*lab == 1));
                }
            }
            assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
        }
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let (l, _) = sphere_inputs(8, 2.0);
        let other = ScalarVolume::filled(grid(9), 0.0);
        assert!(matches!(
            warp_pair(&l, &[other], &SpatialTransform::identity()),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn zero_std_gives_piecewise_constant_image() {
        let (l, _) = sphere_inputs(10, 3.0);
        let mut gmm = SynthConfig::degenerate(0).gmm;
        gmm.labels.get_mut(&0).unwrap().mean = Interval::point(10.0);
        gmm.labels.get_mut(&1).unwrap().mean = Interval::point(30.0);
        let img = synth_intensities(&l, &gmm, &mut stage_rng(0, Stage::Intensity)).unwrap();
        for (v, lab) in img.data().iter().zip(l.data()) {
            assert_eq!(*v, if *lab == 1 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn missing_label_errors() {
        let l = LabelVolume::filled(grid(3), 7);
        let gmm = SynthConfig::degenerate(0).gmm;
        assert!(matches!(
            synth_intensities(&l, &gmm, &mut stage_rng(0, Stage::Intensity)),
            Err(Error::MissingLabel(7))
        ));
    }

    #[test]
    fn single_label_normalized_mean_is_half() {
        // per-seed normalized means, pooled over seeds
        let l = LabelVolume::filled(grid(12), 1);
        let mut gmm = SynthConfig::degenerate(0).gmm;
        gmm.labels.get_mut(&1).unwrap().std = Interval(1.0, 5.0);
        let means: Vec<f64> = (0..200)
            .map(|s| {
                synth_intensities(&l, &gmm, &mut stage_rng(s, Stage::Intensity))
                    .unwrap()
                    .mean()
            })
            .collect();
        let n = means.len() as f64;
        let m = means.iter().sum::<f64>() / n;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((m - 0.5).abs() <= 3.0 * sd / n.sqrt(), "mean {m}, sd {sd}");
    }

    #[test]
    fn intensities_are_deterministic() {
        let (l, _) = sphere_inputs(10, 3.0);
        let gmm = SynthConfig::default().gmm;
        let a = synth_intensities(&l, &gmm, &mut stage_rng(42, Stage::Intensity)).unwrap();
        let b = synth_intensities(&l, &gmm, &mut stage_rng(42, Stage::Intensity)).unwrap();
        assert_eq!(encode_scalar(&a), encode_scalar(&b));
    }

    #[test]
    fn zero_bias_is_identity_on_unit_range() {
        let v = ScalarVolume::from_fn(grid(8), |p| ((p.x + 4.0) / 7.0).clamp(0.0, 1.0));
        assert_eq!(v.min_max(), (0.0, 1.0));
        let spec = BiasSpec {
            amplitude: Interval::point(0.0),
            control_spacing_mm: 40.0,
        };
        assert_eq!(apply_bias(&v, &spec, &mut stage_rng(0, Stage::Bias)).unwrap(), v);
    }

    #[test]
    fn bias_keeps_positivity_and_is_smooth() {
        let g = grid(24);
        let v = ScalarVolume::from_fn(g.clone(), |p| 0.2 + 0.01 * p.x.abs());
        let spec = BiasSpec {
            amplitude: Interval(0.2, 0.3),
            control_spacing_mm: 10.0,
        };
        let out = apply_bias(&v, &spec, &mut stage_rng(8, Stage::Bias)).unwrap();
        assert!(out.data().iter().all(|&x| x > 0.0));
        let field = sample_bias_field(&g, &spec, &mut stage_rng(8, Stage::Bias)).unwrap();
        let coarse = field.control_points().data().iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let fine = field.dense(&g).data().iter().fold(0.0f64, |m, b| m.max(b.abs()));
        assert!(fine <= coarse + 1e-12);
    }

    #[test]
    fn degenerate_pair_renders_labels() {
        let g = grid(20);
        let labels = LabelVolume::from_fn(g.clone(), |p| {
            let r = p.coords.norm();
            if r < 4.0 {
                1
            } else if r < 7.0 {
                2
            } else {
                0
            }
        });
        let sdf = ScalarVolume::from_fn(g.clone(), |p| p.coords.norm() - 7.0);
        let cfg = SynthConfig::degenerate(3);
        let pair = generate_training_pair(&labels, std::slice::from_ref(&sdf), &cfg).unwrap();
        assert_eq!(pair.targets[0], clip_sdf(&sdf, 5.0).unwrap());
        // away from boundaries along the slice axis the 1mm blur has no effect
        let d = g.dims();
        let mut checked = 0;
        for k in 2..d[2] - 2 {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let l = labels.get(i, j, k);
                    if (k - 2..=k + 2).all(|kk| labels.get(i, j, kk) == l) {
                        assert!((pair.image.get(i, j, k) - l as f64 / 2.0).abs() < 1e-12);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn same_seed_same_pair() {
        let (l, s) = sphere_inputs(24, 7.0);
        let mut cfg = SynthConfig::default();
        cfg.gmm.labels.retain(|&k, _| k <= 1);
        cfg.seed = 77;
        let a = generate_training_pair(&l, std::slice::from_ref(&s), &cfg).unwrap();
        let b = generate_training_pair(&l, std::slice::from_ref(&s), &cfg).unwrap();
        assert_eq!(encode_scalar(&a.image), encode_scalar(&b.image));
        assert_eq!(encode_scalar(&a.targets[0]), encode_scalar(&b.targets[0]));
        cfg.seed = 78;
        let c = generate_training_pair(&l, std::slice::from_ref(&s), &cfg).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn thickness_never_exceeds_limit() {
        let spec = SynthConfig::default().acquisition;
        for seed in 0..10_000 {
            let a = sample_acquisition(&spec, &mut stage_rng(seed, Stage::Acquisition));
            assert!(SPACING_RANGE_MM.contains(a.spacing_mm));
            assert!(a.thickness_mm >= 1.0 && a.thickness_mm <= a.spacing_mm.min(5.0));
        }
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_ranges() {
        let mut v: serde_json::Value = serde_json::from_str(config::DEFAULT_JSON).unwrap();
        v["warp"]["typo"] = 1.into();
        assert!(SynthConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(config::DEFAULT_JSON).unwrap();
        v["acquisition"]["spacing_mm"] = serde_json::json!([0.5, 9.0]);
        assert!(SynthConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(config::DEFAULT_JSON).unwrap();
        v["affine"]["scaling"][1] = serde_json::json!([-0.5, 0.5]);
        assert!(SynthConfig::from_json(&v.to_string()).is_err());
        let back: SynthConfig = serde_json::from_str(&serde_json::to_string(&SynthConfig::default()).unwrap()).unwrap();
        assert_eq!(back, SynthConfig::default());
    }
}
