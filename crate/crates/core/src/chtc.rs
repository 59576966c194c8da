//! Secondary-cooling heat-transfer coefficient as a distributed parameter.
//!
//! Every nozzle of a face sprays the same downward parabola of height
//! `alpha_p` on top of the baseline `alpha_c`, so two numbers (plus the
//! known footprint geometry) describe the whole face.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{Membership, NozzleRow, SectionId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChtcProfile {
    /// Baseline coefficient [W/(m^2 K)].
    pub alpha_c: f64,
    /// Peak increment under a nozzle axis [W/(m^2 K)].
    pub alpha_p: f64,
    pub w: f64,
    pub nozzles: Vec<f64>,
}

impl ChtcProfile {
    pub fn new(alpha_c: f64, alpha_p: f64, row: &NozzleRow) -> Result<Self> {
        let p = Self { alpha_c, alpha_p, w: row.w, nozzles: row.nozzles.clone() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_c > 0.0) || !(self.alpha_p >= 0.0) || !(self.w > 0.0) {
            return Err(CoreError::Config(format!(
                "heat-transfer profile needs alpha_c > 0, alpha_p >= 0, w > 0 (got {}, {}, {})",
                self.alpha_c, self.alpha_p, self.w
            )));
        }
        Ok(())
    }

    pub fn with_alpha_c(&self, alpha_c: f64) -> Self {
        Self { alpha_c, ..self.clone() }
    }

    fn row(&self) -> NozzleRow {
        NozzleRow { nozzles: self.nozzles.clone(), w: self.w }
    }

    /// Coefficient for a node at signed offset `y` from its nozzle axis.
    pub fn alpha_at_offset(&self, y: f64) -> f64 {
        self.alpha_c + self.alpha_p * (1.0 - (y * y) / (self.w * self.w))
    }

    pub fn alpha_for(&self, membership: Membership) -> f64 {
        match membership {
            Membership::K => self.alpha_c,
            Membership::B { y, .. } => self.alpha_at_offset(y),
        }
    }

    pub fn alpha_at(&self, s: f64) -> f64 {
        self.alpha_for(self.row().classify(s))
    }

    /// `alpha_at` evaluated at every surface node.
    pub fn profile_vector(&self, coords: &[f64]) -> Vec<f64> {
        let row = self.row();
        coords.iter().map(|&s| self.alpha_for(row.classify(s))).collect()
    }
}

/// Profiles for both cooled faces of a section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceProfiles {
    pub inner: ChtcProfile,
    pub outer: ChtcProfile,
}

impl FaceProfiles {
    pub fn face(&self, face: crate::geometry::Face) -> &ChtcProfile {
        match face {
            crate::geometry::Face::Inner => &self.inner,
            crate::geometry::Face::Outer => &self.outer,
        }
    }

    pub fn face_mut(&mut self, face: crate::geometry::Face) -> &mut ChtcProfile {
        match face {
            crate::geometry::Face::Inner => &mut self.inner,
            crate::geometry::Face::Outer => &mut self.outer,
        }
    }
}

/// Serialized form: the `(alpha_c, alpha_p, w)` block tagged with its section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub section: SectionId,
    pub face: crate::geometry::Face,
    pub alpha_c: f64,
    pub alpha_p: f64,
    pub w: f64,
}

impl ProfileRecord {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile record serializes")
    }
}
