//! CT, CBCT and T1 VIBE MRI images derived from one label map.
//!
//! Intensities come from per-organ physics (attenuation or the spoiled
//! gradient-echo signal), are windowed to [-1, 1] with the modality's
//! window and finally receive spectrally shaped noise.

mod noise;
mod tissue;

pub use noise::{add_textured_noise, NoiseSpec};
pub use tissue::{jitter_tissue, mu_to_hu, Tissue, TissueTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::organ;
use crate::volume::{LabelMap, ResolvedWindow, Volume, WindowSpec};

/// HU assigned outside the CBCT field of view.
pub const CBCT_OUTSIDE_HU: f64 = -1024.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Ct,
    Cbct,
    Mri,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Ct, Modality::Cbct, Modality::Mri];

    pub fn name(&self) -> &'static str {
        match self {
            Modality::Ct => "ct",
            Modality::Cbct => "cbct",
            Modality::Mri => "mri",
        }
    }

    pub fn window(&self) -> WindowSpec {
        match self {
            Modality::Ct => WindowSpec::ct(),
            Modality::Cbct => WindowSpec::cbct(),
            Modality::Mri => WindowSpec::mri(),
        }
    }

    /// Whether the modality's label maps include the arms.
    pub fn has_arms(&self) -> bool {
        matches!(self, Modality::Mri)
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ct" => Ok(Modality::Ct),
            "cbct" => Ok(Modality::Cbct),
            "mri" => Ok(Modality::Mri),
            other => Err(Error::InvalidArgument(format!("unknown modality {other:?}"))),
        }
    }
}

/// Spoiled gradient-echo acquisition parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VibeParams {
    /// Echo time, ms.
    pub te: f64,
    /// Repetition time, ms.
    pub tr: f64,
    /// Flip angle, degrees.
    pub alpha_deg: f64,
}

impl Default for VibeParams {
    fn default() -> Self {
        VibeParams {
            te: 4.54,
            tr: 7.25,
            alpha_deg: 10.0,
        }
    }
}

impl VibeParams {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.te && self.te < self.tr && 0.0 < self.alpha_deg && self.alpha_deg <= 90.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad VIBE parameters {self:?}")))
        }
    }
}

/// Steady-state spoiled gradient-echo signal:
/// `rho sin a (1 - E1) / (1 - cos a E1) * E2`, `E1 = exp(-TR/T1)`, `E2 = exp(-TE/T2)`.
///
/// `1 - E1` and `1 - cos a` are formed without cancellation.
pub fn vibe_signal(t1: f64, t2: f64, rho: f64, p: &VibeParams) -> f64 {
    let a = p.alpha_deg.to_radians();
    let one_minus_e1 = -(-p.tr / t1).exp_m1();
    let half = (0.5 * a).sin();
    let one_minus_cos = 2.0 * half * half;
    let denom = one_minus_cos + a.cos() * one_minus_e1;
    rho * a.sin() * one_minus_e1 / denom * (-p.te / t2).exp()
}

/// Axial cylinder limiting the CBCT field of view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FovCylinder {
    pub radius: f64,
    /// Axial center (x, y) in mm; `None` centers it on the liver.
    #[serde(default)]
    pub center: Option<[f64; 2]>,
}

impl Default for FovCylinder {
    fn default() -> Self {
        FovCylinder {
            radius: 60.0,
            center: None,
        }
    }
}

fn default_signal_scale() -> f64 {
    1.0e4
}

/// How to image one label map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    pub modality: Modality,
    /// keV; CT and CBCT only.
    #[serde(default)]
    pub tube_energy: Option<u32>,
    /// MRI only.
    #[serde(default)]
    pub vibe: Option<VibeParams>,
    /// CBCT only.
    #[serde(default)]
    pub fov_mask: Option<FovCylinder>,
    /// Seed of the per-organ relaxation jitter (MRI).
    #[serde(default)]
    pub jitter_seed: u64,
    #[serde(default)]
    pub noise_seed: u64,
    /// Noise magnitude is in native units (HU, or scaled MRI signal).
    pub noise: NoiseSpec,
    /// Native MRI units per unit of the signal equation.
    #[serde(default = "default_signal_scale")]
    pub signal_scale: f64,
}

impl AcquisitionSpec {
    pub fn ct(tube_energy: u32, noise: NoiseSpec) -> Self {
        AcquisitionSpec {
            modality: Modality::Ct,
            tube_energy: Some(tube_energy),
            vibe: None,
            fov_mask: None,
            jitter_seed: 0,
            noise_seed: 0,
            noise,
            signal_scale: default_signal_scale(),
        }
    }

    pub fn cbct(tube_energy: u32, fov: FovCylinder, noise: NoiseSpec) -> Self {
        AcquisitionSpec {
            modality: Modality::Cbct,
            fov_mask: Some(fov),
            ..AcquisitionSpec::ct(tube_energy, noise)
        }
    }

    pub fn mri(vibe: VibeParams, noise: NoiseSpec) -> Self {
        AcquisitionSpec {
            modality: Modality::Mri,
            tube_energy: None,
            vibe: Some(vibe),
            ..AcquisitionSpec::ct(0, noise)
        }
    }

    pub fn with_seeds(mut self, jitter_seed: u64, noise_seed: u64) -> Self {
        self.jitter_seed = jitter_seed;
        self.noise_seed = noise_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(format!("{} acquisition: {m}", self.modality)));
        match self.modality {
            Modality::Ct | Modality::Cbct => {
                match self.tube_energy {
                    Some(e) if (90..=120).contains(&e) && e % 5 == 0 => {}
                    _ => return bad("tube_energy must be one of 90, 95, ..., 120 keV"),
                }
                if self.vibe.is_some() {
                    return bad("vibe parameters are MRI-only");
                }
                let wants_fov = self.modality == Modality::Cbct;
                if self.fov_mask.is_some() != wants_fov {
                    return bad("fov_mask is required for CBCT and forbidden otherwise");
                }
                if let Some(f) = self.fov_mask {
                    if !(f.radius > 0.0) {
                        return bad("fov radius must be positive");
                    }
                }
            }
            Modality::Mri => {
                if self.tube_energy.is_some() || self.fov_mask.is_some() {
                    return bad("tube_energy and fov_mask are CT/CBCT-only");
                }
                match self.vibe {
                    Some(v) => v.validate()?,
                    None => return bad("vibe parameters are required"),
                }
                if !(self.signal_scale > 0.0) {
                    return bad("signal_scale must be positive");
                }
            }
        }
        Ok(())
    }
}

/// A simulated image with the window that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulated {
    /// Windowed to [-1, 1] before noise.
    pub volume: Volume,
    pub window: ResolvedWindow,
}

/// Native-unit image (HU or scaled MRI signal) before windowing and noise.
pub fn native_image(labels: &LabelMap, table: &TissueTable, a: &AcquisitionSpec) -> Result<Volume> {
    a.validate()?;
    let present = labels.labels_present();
    let lut_len = *present.last().unwrap_or(&0) as usize + 1;
    let mut lut = vec![0.0f32; lut_len];
    match a.modality {
        Modality::Ct | Modality::Cbct => {
            let kev = a.tube_energy.expect("validated");
            for &id in &present {
                lut[id as usize] = table.hu(id, kev)? as f32;
            }
        }
        Modality::Mri => {
            let vibe = a.vibe.expect("validated");
            let jittered = jitter_tissue(table, a.jitter_seed);
            for &id in &present {
                let t = jittered.get(id)?;
                lut[id as usize] = (a.signal_scale * vibe_signal(t.t1, t.t2, t.rho, &vibe)) as f32;
            }
        }
    }
    let image = labels.map(|l| lut[l as usize])?;
    match a.modality {
        Modality::Cbct => {
            let fov = a.fov_mask.expect("validated");
            let center = fov_center(labels, &fov)?;
            let g = *labels.geometry();
            let r2 = fov.radius * fov.radius;
            let data = image.data();
            Volume::from_fn(g, |[i, j, k]| {
                let p = g.world(i, j, k);
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                if dx * dx + dy * dy <= r2 {
                    data[g.index(i, j, k)]
                } else {
                    CBCT_OUTSIDE_HU as f32
                }
            })
        }
        _ => Ok(image),
    }
}

fn fov_center(labels: &LabelMap, fov: &FovCylinder) -> Result<[f64; 2]> {
    if let Some(c) = fov.center {
        return Ok(c);
    }
    let c = labels
        .centroid(organ::LIVER)
        .ok_or_else(|| Error::InvalidArgument("CBCT field of view needs a liver to center on".into()))?;
    Ok([c[0], c[1]])
}

/// Voxels outside the CBCT field of view for this label map.
pub fn cbct_outside_mask(labels: &LabelMap, fov: &FovCylinder) -> Result<Vec<bool>> {
    let center = fov_center(labels, fov)?;
    let g = labels.geometry();
    Ok((0..g.len())
        .map(|idx| {
            let [i, j, k] = g.coords(idx);
            let p = g.world(i, j, k);
            let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
            dx * dx + dy * dy > fov.radius * fov.radius
        })
        .collect())
}

/// Simulate, window and noise one image of `labels`.
///
/// The noise ROI is the liver; noise magnitude is converted from native
/// units to the windowed scale. Outside the CBCT field of view stays at -1.
pub fn simulate(labels: &LabelMap, table: &TissueTable, a: &AcquisitionSpec) -> Result<Simulated> {
    let native = native_image(labels, table, a)?;
    let (windowed, window) = crate::volume::window_normalize(&native, &a.modality.window())?;
    if a.noise.magnitude == 0.0 {
        return Ok(Simulated {
            volume: windowed,
            window,
        });
    }
    let scaled = NoiseSpec {
        magnitude: a.noise.magnitude / window.native_per_unit(),
        radial_profile: a.noise.radial_profile.clone(),
    };
    let mut noisy = add_textured_noise(&windowed, labels, organ::LIVER, &scaled, a.noise_seed)?;
    if let (Modality::Cbct, Some(fov)) = (a.modality, a.fov_mask) {
        let outside = cbct_outside_mask(labels, &fov)?;
        let data = noisy
            .data()
            .iter()
            .zip(&outside)
            .map(|(&v, &o)| if o { -1.0 } else { v })
            .collect();
        noisy = Volume::from_vec(*labels.geometry(), data)?;
    }
    Ok(Simulated { volume: noisy, window })
}
