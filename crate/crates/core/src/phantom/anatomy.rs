//! Organ shapes and the nominal abdominal layout.
//!
//! World frame: +x patient left, +y posterior, +z superior (mm).

use serde::{Deserialize, Serialize};

use super::organ;

/// Geometric primitive of one organ.
///
/// `Ribs`, `Arms` follow the first `Torso` in the anatomy and `Capsule`
/// lives in the normalized frame of its parent superellipsoid, so they
/// move with their host under jitter and scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// `sum |local_a / radius_a|^exponent <= 1`, rotated by `yaw_deg` about z.
    Superellipsoid {
        center: [f64; 3],
        radii: [f64; 3],
        exponent: f64,
        #[serde(default)]
        yaw_deg: f64,
    },
    /// Axial (z-aligned) finite cylinder.
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z_range: [f64; 2],
    },
    /// Superelliptic axial cross-section extruded along z, centered on the z axis.
    Torso {
        semi_axes: [f64; 2],
        exponent: f64,
        z_range: [f64; 2],
    },
    /// Rib bands in a shell of the torso cross-section, joined by an anterior sternum strip.
    Ribs {
        /// Inner and outer shell radius as fractions of the torso cross-section.
        shell: [f64; 2],
        z_range: [f64; 2],
        pitch: f64,
        thickness: f64,
        /// Half-angle of the posterior opening around +y, degrees.
        posterior_gap_deg: f64,
        sternum_half_width: f64,
    },
    /// Tube around a segment in the parent's unit frame; `radius` is in unit-frame units too.
    Capsule {
        parent: u16,
        from: [f64; 3],
        to: [f64; 3],
        radius: f64,
    },
    /// Two axial cylinders beside the torso at `x = ±(semi_axis_x + gap + radius)`.
    Arms {
        gap: f64,
        radius: f64,
        z_range: [f64; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Organ {
    pub id: u16,
    pub name: String,
    pub shape: Shape,
}

impl Organ {
    fn new(id: u16, name: &str, shape: Shape) -> Self {
        Organ {
            id,
            name: name.to_string(),
            shape,
        }
    }
}

/// The nominal organ list in paint order (later entries overwrite earlier ones).
pub fn default_organs() -> Vec<Organ> {
    use Shape::*;
    let ell = |c: [f64; 3], r: [f64; 3], yaw: f64| Superellipsoid {
        center: c,
        radii: r,
        exponent: 2.0,
        yaw_deg: yaw,
    };
    vec![
        Organ::new(
            organ::BODY,
            "body",
            Torso {
                semi_axes: [95.0, 75.0],
                exponent: 2.5,
                z_range: [-150.0, 150.0],
            },
        ),
        Organ::new(organ::LUNG_LEFT, "lung_left", ell([45.0, 5.0, 85.0], [35.0, 45.0, 50.0], 0.0)),
        Organ::new(organ::LUNG_RIGHT, "lung_right", ell([-45.0, 5.0, 85.0], [35.0, 45.0, 50.0], 0.0)),
        Organ::new(organ::STOMACH, "stomach", ell([35.0, -20.0, 10.0], [28.0, 22.0, 28.0], -20.0)),
        Organ::new(organ::SPLEEN, "spleen", ell([60.0, 25.0, 15.0], [17.0, 25.0, 30.0], 25.0)),
        Organ::new(organ::KIDNEY_LEFT, "kidney_left", ell([50.0, 35.0, -35.0], [16.0, 22.0, 36.0], 15.0)),
        Organ::new(organ::KIDNEY_RIGHT, "kidney_right", ell([-50.0, 35.0, -40.0], [16.0, 22.0, 36.0], -15.0)),
        Organ::new(
            organ::AORTA,
            "aorta",
            Cylinder {
                center: [15.0, 25.0],
                radius: 10.0,
                z_range: [-140.0, 140.0],
            },
        ),
        Organ::new(
            organ::SPINE,
            "spine",
            Cylinder {
                center: [0.0, 50.0],
                radius: 15.0,
                z_range: [-145.0, 145.0],
            },
        ),
        Organ::new(
            organ::RIBS,
            "ribs",
            Ribs {
                shell: [0.86, 0.93],
                z_range: [-40.0, 140.0],
                pitch: 24.0,
                thickness: 10.0,
                posterior_gap_deg: 35.0,
                sternum_half_width: 12.0,
            },
        ),
        Organ::new(
            organ::LIVER,
            "liver",
            Superellipsoid {
                center: [-30.0, -5.0, 5.0],
                radii: [45.0, 42.0, 38.0],
                exponent: 2.2,
                yaw_deg: 10.0,
            },
        ),
        Organ::new(
            organ::HEPATIC_VESSELS,
            "hepatic_vessels",
            Capsule {
                parent: organ::LIVER,
                from: [-0.5, -0.1, -0.25],
                to: [0.45, 0.2, 0.3],
                radius: 0.12,
            },
        ),
        Organ::new(
            organ::ARMS,
            "arms",
            Arms {
                gap: 4.0,
                radius: 12.0,
                z_range: [-150.0, 150.0],
            },
        ),
    ]
}

impl Shape {
    /// Scale all lengths by `s` about the world origin; unit-frame shapes are untouched.
    pub(crate) fn scaled(&self, s: f64) -> Shape {
        use Shape::*;
        match self.clone() {
            Superellipsoid {
                center,
                radii,
                exponent,
                yaw_deg,
            } => Superellipsoid {
                center: center.map(|c| c * s),
                radii: radii.map(|r| r * s),
                exponent,
                yaw_deg,
            },
            Cylinder {
                center,
                radius,
                z_range,
            } => Cylinder {
                center: center.map(|c| c * s),
                radius: radius * s,
                z_range: z_range.map(|z| z * s),
            },
            Torso {
                semi_axes,
                exponent,
                z_range,
            } => Torso {
                semi_axes: semi_axes.map(|a| a * s),
                exponent,
                z_range: z_range.map(|z| z * s),
            },
            Ribs {
                shell,
                z_range,
                pitch,
                thickness,
                posterior_gap_deg,
                sternum_half_width,
            } => Ribs {
                shell,
                z_range: z_range.map(|z| z * s),
                pitch: pitch * s,
                thickness: thickness * s,
                posterior_gap_deg,
                sternum_half_width: sternum_half_width * s,
            },
            c @ Capsule { .. } => c,
            Arms { gap, radius, z_range } => Arms {
                gap: gap * s,
                radius: radius * s,
                z_range: z_range.map(|z| z * s),
            },
        }
    }

    /// Apply one organ's jitter draw: `offset` in units of the organ radii, `scale` per axis.
    pub(crate) fn jittered(&self, offset: [f64; 3], scale: [f64; 3]) -> Shape {
        use Shape::*;
        match self.clone() {
            Superellipsoid {
                center,
                radii,
                exponent,
                yaw_deg,
            } => Superellipsoid {
                center: std::array::from_fn(|a| center[a] + offset[a] * radii[a]),
                radii: std::array::from_fn(|a| radii[a] * scale[a]),
                exponent,
                yaw_deg,
            },
            Cylinder {
                center,
                radius,
                z_range,
            } => Cylinder {
                center: [center[0] + offset[0] * radius, center[1] + offset[1] * radius],
                radius: radius * scale[0],
                z_range,
            },
            Torso {
                semi_axes,
                exponent,
                z_range,
            } => Torso {
                semi_axes: [semi_axes[0] * scale[0], semi_axes[1] * scale[1]],
                exponent,
                z_range,
            },
            other => other,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        use Shape::*;
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let ok = match self {
            Superellipsoid { radii, exponent, .. } => radii.iter().all(|&r| pos(r)) && pos(*exponent),
            Cylinder { radius, z_range, .. } => pos(*radius) && z_range[0] < z_range[1],
            Torso {
                semi_axes,
                exponent,
                z_range,
            } => semi_axes.iter().all(|&r| pos(r)) && pos(*exponent) && z_range[0] < z_range[1],
            Ribs {
                shell,
                z_range,
                pitch,
                thickness,
                ..
            } => 0.0 < shell[0] && shell[0] < shell[1] && z_range[0] < z_range[1] && pos(*pitch) && pos(*thickness),
            Capsule { radius, .. } => pos(*radius),
            Arms { radius, z_range, .. } => pos(*radius) && z_range[0] < z_range[1],
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid shape parameters: {self:?}"))
        }
    }
}

/// Axis-aligned world bounding box.
pub(crate) type Bounds = ([f64; 3], [f64; 3]);

#[derive(Clone, Copy, Debug)]
struct TorsoFrame {
    semi_axes: [f64; 2],
    exponent: f64,
}

impl TorsoFrame {
    /// Superelliptic radius of the axial point (1 on the skin).
    #[inline]
    fn radius(&self, x: f64, y: f64) -> f64 {
        let n = self.exponent;
        ((x / self.semi_axes[0]).abs().powf(n) + (y / self.semi_axes[1]).abs().powf(n)).powf(1.0 / n)
    }
}

#[derive(Clone, Copy, Debug)]
struct EllipsoidFrame {
    center: [f64; 3],
    radii: [f64; 3],
    cos: f64,
    sin: f64,
}

impl EllipsoidFrame {
    /// Coordinates in the organ's unit frame.
    #[inline]
    fn local(&self, p: [f64; 3]) -> [f64; 3] {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let rx = self.cos * dx + self.sin * dy;
        let ry = -self.sin * dx + self.cos * dy;
        [rx / self.radii[0], ry / self.radii[1], (p[2] - self.center[2]) / self.radii[2]]
    }

    fn bounds(&self) -> Bounds {
        let hx = (self.cos * self.radii[0]).abs() + (self.sin * self.radii[1]).abs();
        let hy = (self.sin * self.radii[0]).abs() + (self.cos * self.radii[1]).abs();
        let h = [hx, hy, self.radii[2]];
        (
            std::array::from_fn(|a| self.center[a] - h[a]),
            std::array::from_fn(|a| self.center[a] + h[a]),
        )
    }
}

#[derive(Clone, Debug)]
enum Compiled {
    Superellipsoid {
        frame: EllipsoidFrame,
        exponent: f64,
    },
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z_range: [f64; 2],
    },
    Torso {
        frame: TorsoFrame,
        z_range: [f64; 2],
    },
    Ribs {
        torso: TorsoFrame,
        shell: [f64; 2],
        z_range: [f64; 2],
        pitch: f64,
        thickness: f64,
        cos_gap: f64,
        sternum_half_width: f64,
    },
    Capsule {
        frame: EllipsoidFrame,
        from: [f64; 3],
        to: [f64; 3],
        radius: f64,
    },
    Arms {
        x: f64,
        radius: f64,
        z_range: [f64; 2],
    },
}

#[inline]
fn superellipse_sum(q: [f64; 3], n: f64) -> f64 {
    if n == 2.0 {
        q[0] * q[0] + q[1] * q[1] + q[2] * q[2]
    } else {
        q[0].abs().powf(n) + q[1].abs().powf(n) + q[2].abs().powf(n)
    }
}

impl Compiled {
    #[inline]
    fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Compiled::Superellipsoid { frame, exponent } => {
                let q = frame.local(p);
                if q.iter().any(|c| c.abs() > 1.0) {
                    return false;
                }
                superellipse_sum(q, *exponent) <= 1.0
            }
            Compiled::Cylinder {
                center,
                radius,
                z_range,
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                p[2] >= z_range[0] && p[2] <= z_range[1] && dx * dx + dy * dy <= radius * radius
            }
            Compiled::Torso { frame, z_range } => {
                p[2] >= z_range[0]
                    && p[2] <= z_range[1]
                    && p[0].abs() <= frame.semi_axes[0]
                    && p[1].abs() <= frame.semi_axes[1]
                    && frame.radius(p[0], p[1]) <= 1.0
            }
            Compiled::Ribs {
                torso,
                shell,
                z_range,
                pitch,
                thickness,
                cos_gap,
                sternum_half_width,
            } => {
                if p[2] < z_range[0] || p[2] > z_range[1] {
                    return false;
                }
                let r = torso.radius(p[0], p[1]);
                if r < shell[0] || r > shell[1] {
                    return false;
                }
                if p[1] < 0.0 && p[0].abs() <= *sternum_half_width {
                    return true;
                }
                let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
                // angle to the +y (posterior) axis below the gap half-angle
                if norm > 0.0 && p[1] / norm > *cos_gap {
                    return false;
                }
                (p[2] - z_range[0]).rem_euclid(*pitch) < *thickness
            }
            Compiled::Capsule {
                frame,
                from,
                to,
                radius,
            } => {
                let q = frame.local(p);
                let d: [f64; 3] = std::array::from_fn(|a| to[a] - from[a]);
                let w: [f64; 3] = std::array::from_fn(|a| q[a] - from[a]);
                let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let t = ((w[0] * d[0] + w[1] * d[1] + w[2] * d[2]) / dd).clamp(0.0, 1.0);
                let e: [f64; 3] = std::array::from_fn(|a| w[a] - t * d[a]);
                e[0] * e[0] + e[1] * e[1] + e[2] * e[2] <= radius * radius
            }
            Compiled::Arms { x, radius, z_range } => {
                let dx = p[0].abs() - x;
                p[2] >= z_range[0] && p[2] <= z_range[1] && dx * dx + p[1] * p[1] <= radius * radius
            }
        }
    }

    fn bounds(&self) -> Option<Bounds> {
        match self {
            Compiled::Superellipsoid { frame, .. } => Some(frame.bounds()),
            Compiled::Cylinder {
                center,
                radius,
                z_range,
            } => Some((
                [center[0] - radius, center[1] - radius, z_range[0]],
                [center[0] + radius, center[1] + radius, z_range[1]],
            )),
            Compiled::Torso { frame, z_range } => Some((
                [-frame.semi_axes[0], -frame.semi_axes[1], z_range[0]],
                [frame.semi_axes[0], frame.semi_axes[1], z_range[1]],
            )),
            Compiled::Ribs {
                torso, shell, z_range, ..
            } => {
                let h = [torso.semi_axes[0] * shell[1], torso.semi_axes[1] * shell[1]];
                Some(([-h[0], -h[1], z_range[0]], [h[0], h[1], z_range[1]]))
            }
            // contained in the parent's box
            Compiled::Capsule { .. } => None,
            Compiled::Arms { x, radius, z_range } => {
                Some(([-x - radius, -radius, z_range[0]], [x + radius, *radius, z_range[1]]))
            }
        }
    }
}

/// Instantiated organ set ready for point queries.
#[derive(Clone, Debug)]
pub struct Anatomy {
    organs: Vec<Organ>,
    compiled: Vec<Compiled>,
    enabled: Vec<bool>,
}

impl Anatomy {
    pub(crate) fn compile(organs: Vec<Organ>, enabled: Vec<bool>) -> Result<Anatomy, String> {
        let torso = organs.iter().find_map(|o| match o.shape {
            Shape::Torso {
                semi_axes, exponent, ..
            } => Some(TorsoFrame { semi_axes, exponent }),
            _ => None,
        });
        let frame_of = |id: u16| -> Option<EllipsoidFrame> {
            organs.iter().find(|o| o.id == id).and_then(|o| match o.shape {
                Shape::Superellipsoid {
                    center, radii, yaw_deg, ..
                } => Some(ellipsoid_frame(center, radii, yaw_deg)),
                _ => None,
            })
        };
        let mut compiled = Vec::with_capacity(organs.len());
        for o in &organs {
            o.shape.validate()?;
            let c = match &o.shape {
                Shape::Superellipsoid {
                    center,
                    radii,
                    exponent,
                    yaw_deg,
                } => Compiled::Superellipsoid {
                    frame: ellipsoid_frame(*center, *radii, *yaw_deg),
                    exponent: *exponent,
                },
                Shape::Cylinder {
                    center,
                    radius,
                    z_range,
                } => Compiled::Cylinder {
                    center: *center,
                    radius: *radius,
                    z_range: *z_range,
                },
                Shape::Torso {
                    semi_axes,
                    exponent,
                    z_range,
                } => Compiled::Torso {
                    frame: TorsoFrame {
                        semi_axes: *semi_axes,
                        exponent: *exponent,
                    },
                    z_range: *z_range,
                },
                Shape::Ribs {
                    shell,
                    z_range,
                    pitch,
                    thickness,
                    posterior_gap_deg,
                    sternum_half_width,
                } => Compiled::Ribs {
                    torso: torso.ok_or_else(|| format!("{} needs a torso", o.name))?,
                    shell: *shell,
                    z_range: *z_range,
                    pitch: *pitch,
                    thickness: *thickness,
                    cos_gap: posterior_gap_deg.to_radians().cos(),
                    sternum_half_width: *sternum_half_width,
                },
                Shape::Capsule {
                    parent,
                    from,
                    to,
                    radius,
                } => Compiled::Capsule {
                    frame: frame_of(*parent)
                        .ok_or_else(|| format!("{}: parent {parent} is not a superellipsoid", o.name))?,
                    from: *from,
                    to: *to,
                    radius: *radius,
                },
                Shape::Arms { gap, radius, z_range } => {
                    let t = torso.ok_or_else(|| format!("{} needs a torso", o.name))?;
                    Compiled::Arms {
                        x: t.semi_axes[0] + gap + radius,
                        radius: *radius,
                        z_range: *z_range,
                    }
                }
            };
            compiled.push(c);
        }
        Ok(Anatomy {
            organs,
            compiled,
            enabled,
        })
    }

    pub fn organs(&self) -> &[Organ] {
        &self.organs
    }

    pub fn organ(&self, id: u16) -> Option<&Organ> {
        self.organs.iter().find(|o| o.id == id)
    }

    /// Label at a world point; the last enabled organ containing it wins.
    #[inline]
    pub fn label_at(&self, p: [f64; 3]) -> u16 {
        let mut label = organ::BACKGROUND;
        for ((o, c), &on) in self.organs.iter().zip(&self.compiled).zip(&self.enabled) {
            if on && c.contains(p) {
                label = o.id;
            }
        }
        label
    }

    pub(crate) fn bounds(&self) -> impl Iterator<Item = (&Organ, Bounds)> + '_ {
        self.organs
            .iter()
            .zip(&self.compiled)
            .zip(&self.enabled)
            .filter(|(_, &on)| on)
            .filter_map(|((o, c), _)| c.bounds().map(|b| (o, b)))
    }

    /// Superior tip of an ellipsoidal organ (mm).
    pub fn top_z(&self, id: u16) -> Option<f64> {
        match self.organ(id)?.shape {
            Shape::Superellipsoid { center, radii, .. } => Some(center[2] + radii[2]),
            _ => None,
        }
    }

    /// Anterior-posterior semi-axis of the torso cross-section.
    pub fn torso_depth(&self) -> Option<f64> {
        self.organs.iter().find_map(|o| match o.shape {
            Shape::Torso { semi_axes, .. } => Some(semi_axes[1]),
            _ => None,
        })
    }
}

fn ellipsoid_frame(center: [f64; 3], radii: [f64; 3], yaw_deg: f64) -> EllipsoidFrame {
    let (sin, cos) = yaw_deg.to_radians().sin_cos();
    EllipsoidFrame {
        center,
        radii,
        cos,
        sin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal() -> Anatomy {
        let organs = default_organs();
        let n = organs.len();
        Anatomy::compile(organs, vec![true; n]).unwrap()
    }

    #[test]
    fn landmarks_land_in_expected_organs() {
        let a = nominal();
        assert_eq!(a.label_at([-30.0, -5.0, -20.0]), organ::LIVER);
        assert_eq!(a.label_at([0.0, 50.0, 0.0]), organ::SPINE);
        assert_eq!(a.label_at([15.0, 25.0, -60.0]), organ::AORTA);
        assert_eq!(a.label_at([45.0, 5.0, 100.0]), organ::LUNG_LEFT);
        assert_eq!(a.label_at([-45.0, 5.0, 100.0]), organ::LUNG_RIGHT);
        assert_eq!(a.label_at([0.0, 0.0, -100.0]), organ::BODY);
        assert_eq!(a.label_at([0.0, 0.0, 155.0]), organ::BACKGROUND);
        assert_eq!(a.label_at([95.0 + 4.0 + 12.0, 0.0, 0.0]), organ::ARMS);
    }

    #[test]
    fn rib_band_and_gap() {
        let a = nominal();
        // anterior sternum point at torso radius 0.9
        assert_eq!(a.label_at([0.0, -0.9 * 75.0, -35.0]), organ::RIBS);
        // lateral band point inside a rib, and between ribs
        assert_eq!(a.label_at([0.895 * 95.0, 0.0, -35.0]), organ::RIBS);
        assert_eq!(a.label_at([0.895 * 95.0, 0.0, -25.0]), organ::BODY);
    }

    #[test]
    fn vessel_sits_inside_liver() {
        let a = nominal();
        let liver = a.organ(organ::LIVER).unwrap().clone();
        let Shape::Superellipsoid {
            center, radii, yaw_deg, ..
        } = liver.shape
        else {
            unreachable!()
        };
        let f = ellipsoid_frame(center, radii, yaw_deg);
        // unit-frame midpoint of the vessel segment mapped back to world
        let q = [-0.025, 0.05, 0.025];
        let (s, c) = (f.sin, f.cos);
        let lx = q[0] * radii[0];
        let ly = q[1] * radii[1];
        let p = [center[0] + c * lx - s * ly, center[1] + s * lx + c * ly, center[2] + q[2] * radii[2]];
        assert_eq!(a.label_at(p), organ::HEPATIC_VESSELS);
    }
}
