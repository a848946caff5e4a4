//! White and pial surface reconstruction from SDF volumes, with metrics and
//! a reproducibility manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deform::{fit_pial, fit_surface, write_trace_csv, DeformConfig, TraceRecord};
use crate::error::{Error, Result};
use crate::mesh::io::write_ply;
use crate::mesh::{ensure_genus_zero, inflate, self_intersections, smooth, SmoothParams, TriangleMesh};
use crate::metrics::{curvature, sulcal_depth, surface_distance, thickness, SurfaceScalars};
use crate::volume::nifti::{read_labels, read_scalar};
use crate::volume::{LabelVolume, ScalarVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub smooth: SmoothParams,
    pub deform: DeformConfig,
    pub inflation_iterations: usize,
    pub seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            smooth: SmoothParams::default(),
            deform: DeformConfig::default(),
            inflation_iterations: 20,
            seed: 0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        self.smooth.validate()?;
        self.deform.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ReconConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Hex SHA-256 of the compact JSON encoding with object keys sorted.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    // serde_json's default map is ordered by key
    let canonical = serde_json::to_string(&serde_json::to_value(cfg)?)?;
    Ok(Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Repair,
    Smooth,
    FitWhite,
    FitPial,
    Metrics,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Repair => "repair",
            Stage::Smooth => "smooth",
            Stage::FitWhite => "fit_white",
            Stage::FitPial => "fit_pial",
            Stage::Metrics => "metrics",
            Stage::Write => "write",
        })
    }
}

/// A failed stage. `white` holds the fitted white surface when the failure
/// happened after it was placed.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
    pub white: Option<Box<TriangleMesh>>,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn at(stage: Stage) -> impl FnOnce(Error) -> StageError {
    move |source| StageError {
        stage,
        source,
        white: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub repair_rounds: usize,
    pub euler_white: i64,
    pub euler_pial: i64,
    pub self_intersections_white: usize,
    pub self_intersections_pial: usize,
    pub white_iterations: usize,
    pub pial_iterations: usize,
    pub thickness_mean_mm: f64,
    pub thickness_std_mm: f64,
    pub curvature_mean: f64,
    pub depth_std: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub repair_rounds: usize,
    pub white: TriangleMesh,
    pub pial: TriangleMesh,
    pub white_trace: Vec<TraceRecord>,
    pub pial_trace: Vec<TraceRecord>,
    pub thickness: SurfaceScalars,
    pub curvature: SurfaceScalars,
    pub depth: SurfaceScalars,
    pub summary: MetricSummary,
    pub timings_ms: BTreeMap<Stage, f64>,
}

fn timed<T>(timings: &mut BTreeMap<Stage, f64>, stage: Stage, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(stage, start.elapsed().as_secs_f64() * 1e3);
    out
}

/// Repair and tessellate the white-matter mask, smooth, fit the white
/// surface to `wm_sdf`, fit the pial surface from it, then measure.
pub fn reconstruct(
    wm_sdf: &ScalarVolume,
    pial_sdf: &ScalarVolume,
    wm_mask: &LabelVolume,
    cfg: &ReconConfig,
) -> std::result::Result<Reconstruction, StageError> {
    let mut timings = BTreeMap::new();
    cfg.validate().map_err(at(Stage::Ingest))?;
    let g = wm_mask.geometry();
    if !wm_sdf.geometry().matches(g) || !pial_sdf.geometry().matches(g) {
        return Err(at(Stage::Ingest)(Error::GeometryMismatch(
            "mask and SDF volumes must share one grid".into(),
        )));
    }
    let mask = wm_mask.mask_where(|l| l != 0);

    let repaired = timed(&mut timings, Stage::Repair, || ensure_genus_zero(&mask)).map_err(at(Stage::Repair))?;
    let init = timed(&mut timings, Stage::Smooth, || smooth(&repaired.mesh, &cfg.smooth)).map_err(at(Stage::Smooth))?;
    let white = timed(&mut timings, Stage::FitWhite, || {
        fit_surface(&init, wm_sdf, &cfg.deform)
    })
    .map_err(at(Stage::FitWhite))?;
    let pial = timed(&mut timings, Stage::FitPial, || {
        fit_pial(&white.mesh, pial_sdf, &cfg.deform)
    })
    .map_err(|source| StageError {
        stage: Stage::FitPial,
        source,
        white: Some(Box::new(white.mesh.clone())),
    })?;

    let measured = timed(&mut timings, Stage::Metrics, || -> Result<_> {
        let th = thickness(&white.mesh, &pial.mesh)?;
        let curv = curvature(&white.mesh)?;
        let depth = sulcal_depth(&white.mesh, &inflate(&white.mesh, cfg.inflation_iterations)?)?;
        Ok((th, curv, depth))
    });
    let (th, curv, depth) = measured.map_err(|source| StageError {
        stage: Stage::Metrics,
        source,
        white: Some(Box::new(white.mesh.clone())),
    })?;
    let summary = MetricSummary {
        repair_rounds: repaired.rounds,
        euler_white: white.mesh.euler_characteristic(),
        euler_pial: pial.mesh.euler_characteristic(),
        self_intersections_white: self_intersections(&white.mesh).len(),
        self_intersections_pial: self_intersections(&pial.mesh).len(),
        white_iterations: white.trace.len() - 1,
        pial_iterations: pial.trace.len() - 1,
        thickness_mean_mm: th.mean(),
        thickness_std_mm: th.std(),
        curvature_mean: curv.mean(),
        depth_std: depth.std(),
    };
    Ok(Reconstruction {
        repair_rounds: repaired.rounds,
        white: white.mesh,
        pial: pial.mesh,
        white_trace: white.trace,
        pial_trace: pial.trace,
        thickness: th,
        curvature: curv,
        depth,
        summary,
        timings_ms: timings,
    })
}

/// Input and output locations for [`run_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelinePaths {
    pub wm_sdf: PathBuf,
    pub pial_sdf: PathBuf,
    pub wm_mask: PathBuf,
    pub out_white: PathBuf,
    pub out_pial: PathBuf,
    #[serde(default)]
    pub white_trace: Option<PathBuf>,
    #[serde(default)]
    pub pial_trace: Option<PathBuf>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Reference white surface; adds AAD and HD90 to the manifest.
    #[serde(default)]
    pub reference_white: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub inputs: BTreeMap<String, String>,
    pub config_sha256: String,
    pub seed: u64,
    pub timings_ms: BTreeMap<String, f64>,
    pub outputs: BTreeMap<String, String>,
    pub metrics: MetricSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aad_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hd90_mm: Option<f64>,
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

/// Reads the volumes, reconstructs, and writes meshes (PLY with per-vertex
/// thickness, curvature and sulcal depth on the white surface), traces and
/// the manifest. On failure after the white fit, the white surface is
/// still written to `out_white`.
pub fn run_pipeline(paths: &PipelinePaths, cfg: &ReconConfig) -> std::result::Result<PipelineManifest, StageError> {
    let ingest_start = Instant::now();
    let wm_sdf = read_scalar(&paths.wm_sdf).map_err(at(Stage::Ingest))?;
    let pial_sdf = read_scalar(&paths.pial_sdf).map_err(at(Stage::Ingest))?;
    let mask = read_labels(&paths.wm_mask).map_err(at(Stage::Ingest))?;
    let reference = match &paths.reference_white {
        Some(p) => Some(crate::mesh::io::read_mesh(p).map_err(at(Stage::Ingest))?),
        None => None,
    };
    let ingest_ms = ingest_start.elapsed().as_secs_f64() * 1e3;

    let recon = match reconstruct(&wm_sdf, &pial_sdf, &mask, cfg) {
        Ok(r) => r,
        Err(mut e) => {
            let partial = match (&e.white, &e.source) {
                (Some(m), _) => Some(m.as_ref()),
                (None, Error::FitStalled { partial, .. }) => Some(partial.as_ref()),
                _ => None,
            };
            if let Some(m) = partial {
                if let Err(w) = write_ply(&paths.out_white, m, &[]) {
                    e.source = w;
                    e.stage = Stage::Write;
                }
            }
            return Err(e);
        }
    };

    let write_start = Instant::now();
    let write = || -> Result<BTreeMap<String, String>> {
        let mut outputs = BTreeMap::new();
        let white_scalars = [
            recon.thickness.to_vertex_scalars(),
            recon.curvature.to_vertex_scalars(),
            recon.depth.to_vertex_scalars(),
        ];
        write_ply(&paths.out_white, &recon.white, &white_scalars)?;
        outputs.insert("white".into(), path_string(&paths.out_white));
        write_ply(&paths.out_pial, &recon.pial, &[recon.thickness.to_vertex_scalars()])?;
        outputs.insert("pial".into(), path_string(&paths.out_pial));
        if let Some(p) = &paths.white_trace {
            write_trace_csv(p, &recon.white_trace)?;
            outputs.insert("white_trace".into(), path_string(p));
        }
        if let Some(p) = &paths.pial_trace {
            write_trace_csv(p, &recon.pial_trace)?;
            outputs.insert("pial_trace".into(), path_string(p));
        }
        if let Some(p) = &paths.manifest {
            outputs.insert("manifest".into(), path_string(p));
        }
        Ok(outputs)
    };
    let outputs = write().map_err(at(Stage::Write))?;

    let distance = match &reference {
        Some(r) => Some(surface_distance(&recon.white, r).map_err(at(Stage::Metrics))?),
        None => None,
    };
    let mut timings_ms: BTreeMap<String, f64> = recon.timings_ms.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    timings_ms.insert(Stage::Ingest.to_string(), ingest_ms);
    timings_ms.insert(Stage::Write.to_string(), write_start.elapsed().as_secs_f64() * 1e3);

    let mut inputs = BTreeMap::new();
    inputs.insert("wm_sdf".into(), path_string(&paths.wm_sdf));
    inputs.insert("pial_sdf".into(), path_string(&paths.pial_sdf));
    inputs.insert("wm_mask".into(), path_string(&paths.wm_mask));
    if let Some(p) = &paths.reference_white {
        inputs.insert("reference_white".into(), path_string(p));
    }
    let manifest = PipelineManifest {
        inputs,
        config_sha256: config_hash(cfg).map_err(at(Stage::Write))?,
        seed: cfg.seed,
        timings_ms,
        outputs,
        metrics: recon.summary,
        aad_mm: distance.map(|d| d.aad_mm),
        hd90_mm: distance.map(|d| d.hd90_mm),
    };
    if let Some(p) = &paths.manifest {
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| at(Stage::Write)(e.into()))?;
        std::fs::write(p, text + "\n").map_err(|e| at(Stage::Write)(e.into()))?;
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{make_phantom, PhantomKind, PhantomParams};
    use crate::volume::nifti::{write_labels, write_scalar};

    fn small() -> PhantomParams {
        PhantomParams {
            dims: 40,
            inner_radius_mm: 8.0,
            outer_radius_mm: 11.0,
            subdivision: 4,
            ..Default::default()
        }
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = ReconConfig::from_json(r#"{"seed": 3, "inflation_iterations": 5}"#).unwrap();
        let b = ReconConfig::from_json(r#"{"inflation_iterations": 5, "seed": 3}"#).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&ReconConfig::default()).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
        assert!(ReconConfig::from_json(r#"{"sed": 3}"#).is_err());
    }

    #[test]
    fn concentric_reconstruction() {
        let p = make_phantom(PhantomKind::Concentric, &small()).unwrap();
        let mask = p.labels.mask_where(|l| l == 1);
        let r = reconstruct(&p.sdfs[0], &p.sdfs[1], &mask, &ReconConfig::default()).unwrap();
        assert_eq!(r.summary.euler_white, 2);
        assert_eq!(r.summary.self_intersections_pial, 0);
        assert!((r.summary.thickness_mean_mm - 3.0).abs() < 0.1, "{:?}", r.summary);
        assert!(r.white.same_connectivity(&r.pial));
    }

    #[test]
    fn mismatched_grids_fail_at_ingest() {
        let p = make_phantom(PhantomKind::Sphere, &small()).unwrap();
        let other = make_phantom(PhantomKind::Sphere, &PhantomParams { dims: 42, ..small() }).unwrap();
        let err = reconstruct(&p.sdfs[0], &other.sdfs[0], &p.labels, &ReconConfig::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Ingest);
    }

    #[test]
    fn pipeline_files_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let p = make_phantom(PhantomKind::Concentric, &small()).unwrap();
        write_scalar(d.join("wm.nii"), &p.sdfs[0]).unwrap();
        write_scalar(d.join("pial.nii.gz"), &p.sdfs[1]).unwrap();
        write_labels(d.join("mask.nii"), &p.labels.mask_where(|l| l == 1)).unwrap();
        crate::mesh::io::write_obj(d.join("ref.obj"), &p.meshes[0]).unwrap();
        let paths = |tag: &str| PipelinePaths {
            wm_sdf: d.join("wm.nii"),
            pial_sdf: d.join("pial.nii.gz"),
            wm_mask: d.join("mask.nii"),
            out_white: d.join(format!("white{tag}.ply")),
            out_pial: d.join(format!("pial{tag}.ply")),
            white_trace: Some(d.join(format!("trace{tag}.csv"))),
            pial_trace: None,
            manifest: Some(d.join(format!("manifest{tag}.json"))),
            reference_white: Some(d.join("ref.obj")),
        };
        let cfg = ReconConfig::default();
        let a = run_pipeline(&paths("a"), &cfg).unwrap();
        let b = run_pipeline(&paths("b"), &cfg).unwrap();
        for f in ["white", "pial", "trace"] {
            let ext = if f == "trace" { "csv" } else { "ply" };
            let x = std::fs::read(d.join(format!("{f}a.{ext}"))).unwrap();
            let y = std::fs::read(d.join(format!("{f}b.{ext}"))).unwrap();
            assert_eq!(x, y, "{f}");
        }
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.config_sha256, b.config_sha256);
        assert!(a.aad_mm.unwrap() < 0.2);
        let text = std::fs::read_to_string(d.join("manifesta.json")).unwrap();
        let back: PipelineManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn corrupt_header_fails_at_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        std::fs::write(d.join("bad.nii"), vec![7u8; 400]).unwrap();
        let paths = PipelinePaths {
            wm_sdf: d.join("bad.nii"),
            pial_sdf: d.join("bad.nii"),
            wm_mask: d.join("bad.nii"),
            out_white: d.join("w.ply"),
            out_pial: d.join("p.ply"),
            white_trace: None,
            pial_trace: None,
            manifest: None,
            reference_white: None,
        };
        let err = run_pipeline(&paths, &ReconConfig::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Ingest);
        assert!(matches!(err.source, Error::Format(_)));
    }
}
