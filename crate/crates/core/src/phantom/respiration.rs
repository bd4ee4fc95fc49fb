//! Breathing motion as a closed-form displacement field.
//!
//! The field maps inhale-state positions to exhale-state positions:
//! `inhale(x) = exhale(x + d(x))`. A superior-inferior push peaks at the
//! diaphragm dome and decays with axial distance; the anterior chest wall
//! expands with a cubic ramp in depth under the same axial envelope.

use serde::{Deserialize, Serialize};

use super::{organ, Anatomy, PhantomSpec};
use crate::error::{Error, Result};
use crate::volume::{DisplacementField, Geometry, LabelMap};

/// Axial decay lengths (mm) of the motion envelope above and below the dome.
const DECAY_ABOVE: f64 = 100.0;
const DECAY_BELOW: f64 = 250.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RespirationParams {
    /// Peak superior-inferior excursion of the diaphragm, mm.
    pub diaphragm_amplitude: f64,
    /// Anterior displacement of the chest wall at the skin, mm.
    pub chest_expansion: f64,
    /// 0 = exhale, 1 = inhale.
    pub phase: f64,
}

impl Default for RespirationParams {
    fn default() -> Self {
        RespirationParams {
            diaphragm_amplitude: 15.0,
            chest_expansion: 5.0,
            phase: 1.0,
        }
    }
}

impl RespirationParams {
    pub fn exhale() -> Self {
        RespirationParams {
            phase: 0.0,
            ..Default::default()
        }
    }

    pub fn inhale() -> Self {
        RespirationParams::default()
    }

    pub fn at_phase(self, phase: f64) -> Self {
        RespirationParams { phase, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.diaphragm_amplitude >= 0.0
            && self.chest_expansion >= 0.0
            && self.diaphragm_amplitude.is_finite()
            && self.chest_expansion.is_finite()
            && (0.0..=1.0).contains(&self.phase);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad respiration parameters {self:?}")))
        }
    }
}

/// Motion model bound to one instantiated anatomy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RespirationModel {
    /// Axial level of the diaphragm dome (top of the liver), mm.
    pub dome_z: f64,
    /// Anterior depth of the torso used to normalize chest expansion, mm.
    pub chest_depth: f64,
    pub diaphragm_amplitude: f64,
    pub chest_expansion: f64,
}

impl RespirationModel {
    pub fn new(anatomy: &Anatomy, p: &RespirationParams) -> Result<Self> {
        p.validate()?;
        let dome_z = anatomy
            .top_z(organ::LIVER)
            .ok_or_else(|| Error::InvalidArgument("respiration needs an ellipsoidal liver".into()))?;
        let chest_depth = anatomy
            .torso_depth()
            .ok_or_else(|| Error::InvalidArgument("respiration needs a torso".into()))?;
        Ok(RespirationModel {
            dome_z,
            chest_depth,
            diaphragm_amplitude: p.diaphragm_amplitude,
            chest_expansion: p.chest_expansion,
        })
    }

    /// Axial envelope, 1 at the dome; C¹ because both halves have zero slope there.
    #[inline]
    pub fn envelope(&self, z: f64) -> f64 {
        let u = z - self.dome_z;
        let l = if u > 0.0 { DECAY_ABOVE } else { DECAY_BELOW };
        (-(u / l) * (u / l)).exp()
    }

    /// Chest-wall profile in depth: 0 posterior, cubic up to the skin, linear beyond.
    #[inline]
    pub fn wall_profile(&self, y: f64) -> f64 {
        let t = (-y / self.chest_depth).max(0.0);
        if t <= 1.0 {
            t * t * t
        } else {
            1.0 + 3.0 * (t - 1.0)
        }
    }

    /// Displacement at full inhale (phase 1), mm.
    #[inline]
    pub fn displacement(&self, p: [f64; 3]) -> [f64; 3] {
        let g = self.envelope(p[2]);
        [
            0.0,
            self.chest_expansion * self.wall_profile(p[1]) * g,
            self.diaphragm_amplitude * g,
        ]
    }
}

/// Ground-truth field for `p.phase`, sampled at voxel centers.
///
/// The phase-1 field is rounded to f32 first and then scaled, so
/// `field(t) == t * field(1)` holds voxelwise in f32.
pub fn respiration_field(spec: &PhantomSpec, p: &RespirationParams, grid: &Geometry) -> Result<DisplacementField> {
    grid.validate()?;
    let anatomy = spec.instantiate()?;
    let model = RespirationModel::new(&anatomy, p)?;
    field_from_model(&model, p.phase, grid)
}

pub(crate) fn field_from_model(model: &RespirationModel, phase: f64, grid: &Geometry) -> Result<DisplacementField> {
    let t = phase as f32;
    DisplacementField::from_fn(*grid, |[i, j, k]| {
        let d = model.displacement(grid.world(i, j, k));
        [d[0] as f32 * t, d[1] as f32 * t, d[2] as f32 * t]
    })
}

/// Label map of the breathing state `p`, evaluated analytically at `x + d(x)`.
///
/// Uses the exported f32 displacement, so the label map and the field
/// written alongside it are consistent to the bit.
pub fn phantom_state(spec: &PhantomSpec, p: &RespirationParams, grid: &Geometry) -> Result<LabelMap> {
    grid.validate()?;
    let anatomy = spec.instantiate()?;
    let model = RespirationModel::new(&anatomy, p)?;
    let field = field_from_model(&model, p.phase, grid)?;
    let d = field.data();
    LabelMap::from_fn(*grid, |[i, j, k]| {
        let x = grid.world(i, j, k);
        let u = d[grid.index(i, j, k)];
        anatomy.label_at([x[0] + u[0] as f64, x[1] + u[1] as f64, x[2] + u[2] as f64])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> RespirationModel {
        RespirationModel {
            dome_z: 40.0,
            chest_depth: 75.0,
            diaphragm_amplitude: 20.0,
            chest_expansion: 5.0,
        }
    }

    #[test]
    fn envelope_is_c1_at_dome() {
        let m = model();
        let h = 1e-4;
        let left = (m.envelope(40.0) - m.envelope(40.0 - h)) / h;
        let right = (m.envelope(40.0 + h) - m.envelope(40.0)) / h;
        assert_eq!(m.envelope(40.0), 1.0);
        assert!(left.abs() < 1e-5 && right.abs() < 1e-5);
    }

    #[test]
    fn wall_profile_is_c1_at_skin() {
        let m = model();
        let h = 1e-6;
        let y = -75.0;
        let inner = (m.wall_profile(y + h) - m.wall_profile(y)) / h;
        let outer = (m.wall_profile(y) - m.wall_profile(y - h)) / h;
        assert!((inner - outer).abs() < 1e-4);
        assert_eq!(m.wall_profile(10.0), 0.0);
        assert_eq!(m.wall_profile(-75.0), 1.0);
    }

    #[test]
    fn peak_si_equals_amplitude_at_dome() {
        let d = model().displacement([-20.0, 10.0, 40.0]);
        assert_eq!(d[2], 20.0);
        assert_eq!(d[0], 0.0);
    }
}
