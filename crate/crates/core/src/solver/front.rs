//! Crystallization-isotherm extraction and Stefan-condition residuals.

use serde::{Deserialize, Serialize};

use crate::geometry::SectionId;

/// `T_kr` crossing on one grid line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// Interpolated front coordinate.
    pub xi: f64,
    /// Index of the last node on the solid side.
    pub solid: usize,
    /// Index of the first node on the liquid side (adjacent to `solid`).
    pub liquid: usize,
}

impl Crossing {
    /// `+1` when the liquid lies towards larger coordinates.
    pub fn direction(&self) -> f64 {
        if self.liquid > self.solid {
            1.0
        } else {
            -1.0
        }
    }
}

/// Walks a grid line from one end and returns the first solid-to-liquid
/// crossing of `t_kr`. `None` when the starting node is already liquid or
/// the line never reaches `t_kr`.
pub fn locate_crossing(coords: &[f64], temps: &[f64], t_kr: f64, from_start: bool) -> Option<Crossing> {
    let n = temps.len();
    if n < 2 {
        return None;
    }
    let order: Vec<usize> = if from_start { (0..n).collect() } else { (0..n).rev().collect() };
    if temps[order[0]] >= t_kr {
        return None;
    }
    order.windows(2).find(|w| temps[w[1]] >= t_kr).map(|w| {
        let (s, l) = (w[0], w[1]);
        let f = (t_kr - temps[s]) / (temps[l] - temps[s]);
        Crossing { xi: coords[s] + f * (coords[l] - coords[s]), solid: s, liquid: l }
    })
}

/// Energy balance at one front sample [W/m^2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StefanResidual {
    /// Conductive flux carried away from the front through the solid.
    pub flux_solid: f64,
    /// Conductive flux delivered to the front by the liquid.
    pub flux_liquid: f64,
    /// `mu rho(T_kr)` times the solidification speed.
    pub latent: f64,
    /// `flux_solid - flux_liquid - latent`.
    pub residual: f64,
}

/// One-sided fluxes on both sides of `c`, evaluated one cell away from the
/// crossing interval. `growth` is the speed at which the solid advances
/// into the liquid [m/s].
pub fn stefan_residual(
    coords: &[f64],
    temps: &[f64],
    c: &Crossing,
    lambda: impl Fn(f64) -> f64,
    latent_per_volume: f64,
    growth: f64,
) -> Option<StefanResidual> {
    let step = |a: usize, b: usize| (coords[b] - coords[a]).abs();
    let beyond = |i: usize, towards_larger: bool| -> Option<usize> {
        if towards_larger {
            (i + 1 < temps.len()).then_some(i + 1)
        } else {
            i.checked_sub(1)
        }
    };
    let liquid_up = c.liquid > c.solid;
    let s2 = beyond(c.solid, !liquid_up)?;
    let l2 = beyond(c.liquid, liquid_up)?;
    let face = |a: usize, b: usize| lambda(0.5 * (temps[a] + temps[b]));
    let flux_solid = face(c.solid, s2) * (temps[c.solid] - temps[s2]) / step(c.solid, s2);
    let flux_liquid = face(c.liquid, l2) * (temps[l2] - temps[c.liquid]) / step(c.liquid, l2);
    let latent = latent_per_volume * growth;
    Some(StefanResidual { flux_solid, flux_liquid, latent, residual: flux_solid - flux_liquid - latent })
}

/// Front sample at one along-strand node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSample {
    /// Along-strand coordinate (z, phi or x).
    pub coord: f64,
    /// Front reached from the inner face (the only one in the mould).
    pub xi: Option<f64>,
    /// Front reached from the outer face.
    pub xi2: Option<f64>,
    pub stefan: Option<StefanResidual>,
    pub stefan2: Option<StefanResidual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFront {
    pub section: SectionId,
    pub tau: f64,
    pub samples: Vec<FrontSample>,
}

impl PhaseFront {
    /// Mean of `|residual| / max(flux_solid, flux_liquid)` over samples with a residual.
    pub fn mean_relative_residual(&self) -> Option<f64> {
        let rel: Vec<f64> = self
            .samples
            .iter()
            .flat_map(|s| [s.stefan, s.stefan2])
            .flatten()
            .filter_map(|r| {
                let scale = r.flux_solid.abs().max(r.flux_liquid.abs());
                (scale > 0.0).then(|| r.residual.abs() / scale)
            })
            .collect();
        (!rel.is_empty()).then(|| rel.iter().sum::<f64>() / rel.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum FrontResult {
    NoFront,
    Front(PhaseFront),
}

impl FrontResult {
    pub fn front(&self) -> Option<&PhaseFront> {
        match self {
            FrontResult::Front(f) => Some(f),
            FrontResult::NoFront => None,
        }
    }
}
