//! Simplified genus-0 repair of a binary mask.

use super::{tessellate, TriangleMesh};
use crate::error::{Error, Result};
use crate::volume::{fill_cavities, largest_component, make_well_composed, morphological_close, LabelVolume};

pub const MAX_REPAIR_ROUNDS: usize = 5;

#[derive(Debug, Clone)]
pub struct RepairOutcome {
    pub mask: LabelVolume,
    pub mesh: TriangleMesh,
    /// Repair rounds applied; 0 when the input already tessellated to a sphere.
    pub rounds: usize,
}

fn is_sphere(mesh: &TriangleMesh) -> bool {
    mesh.topology_report().is_valid_sphere()
}

/// Repeats largest component, closing, cavity filling and well-composed
/// cleanup until the tessellated mask has χ = 2. Round `r` closes with
/// radius `r`, so later rounds bridge wider handles.
pub fn ensure_genus_zero(mask: &LabelVolume) -> Result<RepairOutcome> {
    let mesh = tessellate(mask)?;
    if is_sphere(&mesh) {
        return Ok(RepairOutcome {
            mask: mask.clone(),
            mesh,
            rounds: 0,
        });
    }
    let mut current = mask.clone();
    let mut chi = mesh.euler_characteristic();
    for round in 1..=MAX_REPAIR_ROUNDS {
        current = largest_component(&current)?;
        current = morphological_close(&current, round)?;
        current = fill_cavities(&current)?;
        current = make_well_composed(&current)?;
        current = largest_component(&current)?;
        let mesh = tessellate(&current)?;
        if is_sphere(&mesh) {
            return Ok(RepairOutcome {
                mask: current,
                mesh,
                rounds: round,
            });
        }
        chi = mesh.euler_characteristic();
    }
    Err(Error::TopologyRepairFailed {
        chi,
        rounds: MAX_REPAIR_ROUNDS,
    })
}
