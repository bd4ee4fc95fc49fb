use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../data/tissue_default.json");

/// Physical properties of one organ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tissue {
    pub name: String,
    /// Linear attenuation (1/cm) at each tabulated energy.
    pub mu: Vec<f64>,
    /// ms
    pub t1: f64,
    /// ms
    pub t2: f64,
    pub rho: f64,
}

/// Per-organ properties keyed by organ ID.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueTable {
    pub energies_kev: Vec<u32>,
    pub mu_water: Vec<f64>,
    #[serde(serialize_with = "ser_organs", deserialize_with = "de_organs")]
    pub organs: BTreeMap<u16, Tissue>,
}

fn ser_organs<S: serde::Serializer>(m: &BTreeMap<u16, Tissue>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let keyed: BTreeMap<String, &Tissue> = m.iter().map(|(k, v)| (k.to_string(), v)).collect();
    keyed.serialize(s)
}

fn de_organs<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<u16, Tissue>, D::Error> {
    let keyed: BTreeMap<String, Tissue> = BTreeMap::deserialize(d)?;
    keyed
        .into_iter()
        .map(|(k, v)| {
            k.parse::<u16>()
                .map(|id| (id, v))
                .map_err(|_| serde::de::Error::custom(format!("organ key {k:?} is not a u16")))
        })
        .collect()
}

impl TissueTable {
    /// The shipped table covering the built-in anatomy.
    pub fn builtin() -> Self {
        TissueTable::from_json(DEFAULT_TABLE).expect("shipped tissue table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: TissueTable = serde_json::from_str(text).map_err(|e| Error::Config(format!("tissue table: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TissueTable::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.energies_kev.len();
        let bad = |m: String| Err(Error::Config(format!("tissue table: {m}")));
        if n == 0 || self.mu_water.len() != n {
            return bad("mu_water must have one entry per energy".into());
        }
        if self.mu_water.iter().any(|&m| !(m > 0.0)) {
            return bad("mu_water must be positive".into());
        }
        for (&id, t) in &self.organs {
            if t.mu.len() != n {
                return bad(format!("organ {id}: {} mu values for {n} energies", t.mu.len()));
            }
            let mu_ok = if id == 0 {
                t.mu.iter().all(|&m| m >= 0.0)
            } else {
                t.mu.iter().all(|&m| m > 0.0)
            };
            if !mu_ok {
                return bad(format!("organ {id}: attenuation must be positive"));
            }
            if !(t.t1 > t.t2 && t.t2 > 0.0 && t.rho >= 0.0) {
                return bad(format!("organ {id}: need t1 > t2 > 0 and rho >= 0"));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: u16) -> Result<&Tissue> {
        self.organs.get(&id).ok_or(Error::UnknownLabel(id))
    }

    pub fn energy_index(&self, kev: u32) -> Result<usize> {
        self.energies_kev
            .iter()
            .position(|&e| e == kev)
            .ok_or_else(|| Error::InvalidArgument(format!("tube energy {kev} keV is not tabulated")))
    }

    /// CT number of an organ at a tabulated tube energy.
    pub fn hu(&self, id: u16, kev: u32) -> Result<f64> {
        let e = self.energy_index(kev)?;
        Ok(mu_to_hu(self.get(id)?.mu[e], self.mu_water[e]))
    }
}

/// Hounsfield units relative to water.
#[inline]
pub fn mu_to_hu(mu: f64, mu_water: f64) -> f64 {
    1000.0 * (mu - mu_water) / mu_water
}

/// Multiply t1, t2 and rho of every organ by independent U[0.95, 1.05] factors.
///
/// Organs are visited in ID order with three draws each, so the result
/// depends only on the seed and the set of IDs.
pub fn jitter_tissue(table: &TissueTable, seed: u64) -> TissueTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = Uniform::new_inclusive(0.95, 1.05);
    let mut out = table.clone();
    for t in out.organs.values_mut() {
        t.t1 *= factor.sample(&mut rng);
        t.t2 *= factor.sample(&mut rng);
        t.rho *= factor.sample(&mut rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_round_trips() {
        let t = TissueTable::builtin();
        assert_eq!(t.energies_kev, vec![90, 95, 100, 105, 110, 115, 120]);
        let text = serde_json::to_string(&t).unwrap();
        assert_eq!(TissueTable::from_json(&text).unwrap(), t);
    }

    #[test]
    fn hu_conversion() {
        assert_eq!(mu_to_hu(0.2, 0.2), 0.0);
        assert_eq!(mu_to_hu(0.0, 0.2), -1000.0);
        assert_eq!(mu_to_hu(0.4, 0.2), 1000.0);
        let t = TissueTable::builtin();
        assert_eq!(t.hu(0, 100).unwrap(), -1000.0);
        assert!(t.hu(99, 100).is_err());
        assert!(t.hu(2, 93).is_err());
    }

    #[test]
    fn rejects_inconsistent_tables() {
        let mut t = TissueTable::builtin();
        t.organs.get_mut(&2).unwrap().t2 = 5000.0;
        assert!(t.validate().is_err());
        let mut t = TissueTable::builtin();
        t.mu_water.pop();
        assert!(t.validate().is_err());
    }
}
