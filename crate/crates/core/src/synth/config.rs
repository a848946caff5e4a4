use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Closed interval `[lo, hi]`, written as a two-element JSON array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub const fn point(v: f64) -> Self {
        Interval(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, v: f64) -> bool {
        self.0 <= v && v <= self.1
    }

    fn check(&self, what: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) || self.0 > self.1 {
            return Err(invalid(format!("{what}: bad interval [{}, {}]", self.0, self.1)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    /// Rotation about x, y, z in degrees.
    pub rotation_deg: [Interval; 3],
    pub translation_mm: [Interval; 3],
    pub scaling: [Interval; 3],
    /// Shear coefficients (xy, xz, yz) share one interval.
    pub shear: Interval,
}

impl AffineSpec {
    pub fn identity() -> Self {
        Self {
            rotation_deg: [Interval::point(0.0); 3],
            translation_mm: [Interval::point(0.0); 3],
            scaling: [Interval::point(1.0); 3],
            shear: Interval::point(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        for (a, i) in self.rotation_deg.iter().enumerate() {
            i.check(&format!("affine.rotation_deg[{a}]"))?;
        }
        for (a, i) in self.translation_mm.iter().enumerate() {
            i.check(&format!("affine.translation_mm[{a}]"))?;
        }
        for (a, i) in self.scaling.iter().enumerate() {
            i.check(&format!("affine.scaling[{a}]"))?;
            if i.contains(0.0) {
                return Err(invalid(format!("affine.scaling[{a}] must exclude 0")));
            }
        }
        self.shear.check("affine.shear")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpSpec {
    pub control_spacing_mm: f64,
    /// Standard deviation of the coarse displacement samples.
    pub std_mm: f64,
}

impl WarpSpec {
    fn validate(&self) -> Result<()> {
        // target grids are 1mm, so control points must be at least 2mm apart
        if !(self.control_spacing_mm >= 2.0) || !self.control_spacing_mm.is_finite() {
            return Err(invalid("warp.control_spacing_mm must be >= 2"));
        }
        if !(self.std_mm >= 0.0) || !self.std_mm.is_finite() {
            return Err(invalid("warp.std_mm must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelPrior {
    pub mean: Interval,
    pub std: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GmmSpec {
    pub labels: BTreeMap<u16, LabelPrior>,
}

impl GmmSpec {
    fn validate(&self) -> Result<()> {
        for (l, p) in &self.labels {
            p.mean.check(&format!("gmm[{l}].mean"))?;
            p.std.check(&format!("gmm[{l}].std"))?;
            if p.std.lo() < 0.0 {
                return Err(invalid(format!("gmm[{l}].std must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Axial,
    Coronal,
    Sagittal,
    Isotropic,
}

impl Orientation {
    /// Voxel axes that are sampled at the slice spacing.
    pub fn slice_axes(self) -> &'static [usize] {
        match self {
            Orientation::Sagittal => &[0],
            Orientation::Coronal => &[1],
            Orientation::Axial => &[2],
            Orientation::Isotropic => &[0, 1, 2],
        }
    }
}

pub const SPACING_RANGE_MM: Interval = Interval(1.0, 9.0);
pub const MAX_THICKNESS_MM: f64 = 5.0;
pub const MIN_THICKNESS_MM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub orientations: Vec<Orientation>,
    /// Slice spacing is drawn uniformly from this interval, which must lie
    /// within [1, 9] mm. Thickness is then drawn from [1, min(5, spacing)].
    pub spacing_mm: Interval,
    pub noise_std: Interval,
}

impl AcquisitionSpec {
    fn validate(&self) -> Result<()> {
        if self.orientations.is_empty() {
            return Err(invalid("acquisition.orientations is empty"));
        }
        self.spacing_mm.check("acquisition.spacing_mm")?;
        if self.spacing_mm.lo() < SPACING_RANGE_MM.lo() || self.spacing_mm.hi() > SPACING_RANGE_MM.hi() {
            return Err(invalid("acquisition.spacing_mm must lie within [1, 9]"));
        }
        self.noise_std.check("acquisition.noise_std")?;
        if self.noise_std.lo() < 0.0 {
            return Err(invalid("acquisition.noise_std must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    /// Standard deviation of the log-space coarse field.
    pub amplitude: Interval,
    pub control_spacing_mm: f64,
}

impl BiasSpec {
    fn validate(&self) -> Result<()> {
        self.amplitude.check("bias.amplitude")?;
        if self.amplitude.lo() < 0.0 {
            return Err(invalid("bias.amplitude must be >= 0"));
        }
        if !(self.control_spacing_mm >= 2.0) || !self.control_spacing_mm.is_finite() {
            return Err(invalid("bias.control_spacing_mm must be >= 2"));
        }
        Ok(())
    }
}

/// Every sampling range of the generative model plus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub affine: AffineSpec,
    pub warp: WarpSpec,
    pub gmm: GmmSpec,
    pub acquisition: AcquisitionSpec,
    pub bias: BiasSpec,
    #[serde(default = "default_clip")]
    pub clip_mm: f64,
    pub seed: u64,
}

fn default_clip() -> f64 {
    crate::sdf::DEFAULT_CLIP_MM
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.affine.validate()?;
        self.warp.validate()?;
        self.gmm.validate()?;
        self.acquisition.validate()?;
        self.bias.validate()?;
        if !(self.clip_mm > 0.0) {
            return Err(invalid("clip_mm must be positive"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SynthConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Identity transform, noiseless constant intensities, no bias and a
    /// 1mm/1mm acquisition. Labels 0..=3 map to means 0, 1, 2, 3.
    pub fn degenerate(seed: u64) -> Self {
        let labels = (0..=3u16)
            .map(|l| {
                (
                    l,
                    LabelPrior {
                        mean: Interval::point(l as f64),
                        std: Interval::point(0.0),
                    },
                )
            })
            .collect();
        Self {
            affine: AffineSpec::identity(),
            warp: WarpSpec {
                control_spacing_mm: 20.0,
                std_mm: 0.0,
            },
            gmm: GmmSpec { labels },
            acquisition: AcquisitionSpec {
                orientations: vec![Orientation::Axial],
                spacing_mm: Interval::point(1.0),
                noise_std: Interval::point(0.0),
            },
            bias: BiasSpec {
                amplitude: Interval::point(0.0),
                control_spacing_mm: 40.0,
            },
            clip_mm: crate::sdf::DEFAULT_CLIP_MM,
            seed,
        }
    }
}

/// Shipped defaults, identical to `configs/synth_default.json`.
impl Default for SynthConfig {
    fn default() -> Self {
        Self::from_json(DEFAULT_JSON).expect("bundled default config is valid")
    }
}

pub(crate) const DEFAULT_JSON: &str = include_str!("../../../../configs/synth_default.json");
