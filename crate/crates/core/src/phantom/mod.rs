//! Procedural abdominal phantom with an analytic respiration model.
//!
//! Organs are superellipsoids, cylinders and a few torso-relative shapes
//! painted in order. Each seed jitters organ centers and radii, so every
//! seed gives a distinct but anatomically ordered patient.

mod anatomy;
mod respiration;

pub use anatomy::{default_organs, Anatomy, Organ, Shape};
pub use respiration::{phantom_state, respiration_field, RespirationModel, RespirationParams};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, LabelMap};

/// Organ IDs of the built-in anatomy.
pub mod organ {
    pub const BACKGROUND: u16 = 0;
    pub const BODY: u16 = 1;
    pub const LIVER: u16 = 2;
    pub const LUNG_LEFT: u16 = 3;
    pub const LUNG_RIGHT: u16 = 4;
    pub const KIDNEY_LEFT: u16 = 5;
    pub const KIDNEY_RIGHT: u16 = 6;
    pub const SPLEEN: u16 = 7;
    pub const SPINE: u16 = 8;
    pub const RIBS: u16 = 9;
    pub const AORTA: u16 = 10;
    pub const STOMACH: u16 = 11;
    pub const HEPATIC_VESSELS: u16 = 12;
    pub const ARMS: u16 = 13;
}

/// World box (mm) every organ must fit inside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for FieldOfView {
    fn default() -> Self {
        FieldOfView {
            min: [-150.0, -130.0, -160.0],
            max: [150.0, 130.0, 160.0],
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

fn default_jitter() -> f64 {
    0.1
}

/// Everything that determines one phantom's anatomy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub body_scale: f64,
    /// Nominal organs in paint order; defaults to the built-in abdomen.
    #[serde(default = "default_organs")]
    pub organs: Vec<Organ>,
    #[serde(default)]
    pub include_arms: bool,
    #[serde(default)]
    pub fov: FieldOfView,
    /// Half-width of the uniform per-seed jitter, relative to organ size.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl PhantomSpec {
    pub fn new(seed: u64) -> Self {
        PhantomSpec {
            seed,
            body_scale: 1.0,
            organs: default_organs(),
            include_arms: false,
            fov: FieldOfView::default(),
            jitter: 0.1,
        }
    }

    pub fn with_arms(mut self, include: bool) -> Self {
        self.include_arms = include;
        self
    }

    /// Jitter, scale and bounds-check the organ list.
    ///
    /// Draws are made for every organ in list order whether or not it is
    /// enabled, so toggling arms never perturbs the other organs.
    pub fn instantiate(&self) -> Result<Anatomy> {
        if !(self.body_scale > 0.0 && self.body_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("body_scale must be positive, got {}", self.body_scale)));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::InvalidArgument(format!("jitter must lie in [0, 1), got {}", self.jitter)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let offset = Uniform::new_inclusive(-self.jitter, self.jitter);
        let scale = Uniform::new_inclusive(1.0 - self.jitter, 1.0 + self.jitter);
        let mut organs = Vec::with_capacity(self.organs.len());
        let mut enabled = Vec::with_capacity(self.organs.len());
        for o in &self.organs {
            let off: [f64; 3] = std::array::from_fn(|_| offset.sample(&mut rng));
            let sc: [f64; 3] = std::array::from_fn(|_| scale.sample(&mut rng));
            let shape = o.shape.jittered(off, sc).scaled(self.body_scale);
            organs.push(Organ {
                id: o.id,
                name: o.name.clone(),
                shape,
            });
            enabled.push(self.include_arms || o.id != organ::ARMS);
        }
        let anatomy = Anatomy::compile(organs, enabled).map_err(Error::InvalidArgument)?;
        for (o, (lo, hi)) in anatomy.bounds() {
            let inside = (0..3).all(|a| lo[a] >= self.fov.min[a] && hi[a] <= self.fov.max[a]);
            if !inside {
                return Err(Error::SpecOutOfBounds { organ: o.name.clone() });
            }
        }
        Ok(anatomy)
    }
}

/// Rasterize the phantom onto `grid` (voxel centers, last-painted organ wins).
pub fn generate_phantom(spec: &PhantomSpec, grid: &Geometry) -> Result<LabelMap> {
    grid.validate()?;
    let anatomy = spec.instantiate()?;
    LabelMap::from_fn(*grid, |[i, j, k]| anatomy.label_at(grid.world(i, j, k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_fov_is_reported() {
        let mut spec = PhantomSpec::new(1);
        spec.body_scale = 1.3;
        assert!(matches!(spec.instantiate(), Err(Error::SpecOutOfBounds { .. })));
    }

    #[test]
    fn spec_json_round_trip_with_defaults() {
        let spec: PhantomSpec = serde_json::from_str(r#"{"seed": 7, "include_arms": true}"#).unwrap();
        assert_eq!(spec, PhantomSpec::new(7).with_arms(true));
        let back: PhantomSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn every_default_organ_appears_on_desk_grid() {
        let l = generate_phantom(&PhantomSpec::new(3).with_arms(true), &Geometry::desk()).unwrap();
        let present = l.labels_present();
        for id in 0..=organ::ARMS {
            assert!(present.contains(&id), "organ {id} missing");
        }
    }
}
