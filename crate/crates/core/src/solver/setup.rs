//! Serializable inputs of the forward model.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{GridSpec, MachineLayout};
use crate::material::ConstantMedium;

/// Scalar that is either constant or piecewise-linear in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    /// `[[tau, value], ...]`, held constant outside the listed times.
    Table(Vec<[f64; 2]>),
}

impl Schedule {
    pub fn at(&self, tau: f64) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Table(points) => {
                let Some(first) = points.first() else { return f64::NAN };
                if tau <= first[0] {
                    return first[1];
                }
                for w in points.windows(2) {
                    if tau <= w[1][0] {
                        let f = (tau - w[0][0]) / (w[1][0] - w[0][0]);
                        return w[0][1] + f * (w[1][1] - w[0][1]);
                    }
                }
                points[points.len() - 1][1]
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Schedule::Constant(v) => vec![*v],
            Schedule::Table(p) => p.iter().map(|p| p[1]).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if let Schedule::Table(p) = self {
            if p.is_empty() || p.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return Err(CoreError::Config(format!("{what}: schedule times must be non-empty and increasing")));
            }
        }
        if self.values().iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Config(format!("{what}: schedule values must be finite")));
        }
        Ok(())
    }
}

/// Environment of one secondary-cooling section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SectionEnvironment {
    /// Environment temperature at the inner face [K].
    pub t_inner: f64,
    /// Environment temperature at the outer face [K].
    pub t_outer: f64,
    /// Reduced radiation coefficient at the inner face [W/(m^2 K^4)].
    pub c_inner: f64,
    /// Reduced radiation coefficient at the outer face [W/(m^2 K^4)].
    pub c_outer: f64,
}

impl Default for SectionEnvironment {
    fn default() -> Self {
        Self { t_inner: 300.0, t_outer: 300.0, c_inner: 4.5e-8, c_outer: 4.5e-8 }
    }
}

/// Heat-exchange constants outside the ingot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryEnvironment {
    /// Conductivity of the gap gas mixture [W/(m K)].
    pub lambda_gz: f64,
    /// Reduced radiation coefficient across the gap, `(T/100)^4` form.
    pub sigma_n: f64,
    /// Reduced radiation coefficient of the wall above the meniscus, `(T/100)^4` form.
    pub c_n: f64,
    /// Wall bottom (z = Z) convection coefficient [W/(m^2 K)].
    pub alpha_2: f64,
    /// Wall top (z = z0) convection coefficient.
    pub alpha_3: f64,
    /// Wall face above the meniscus.
    pub alpha_4: f64,
    pub t_os1: f64,
    pub t_os2: f64,
    pub t_os3: f64,
    /// Default environment of every secondary-cooling section.
    pub secondary: SectionEnvironment,
    /// Per-section overrides for the curvilinear sections, in order.
    pub curvilinear: Vec<SectionEnvironment>,
    pub rectilinear: Option<SectionEnvironment>,
}

impl Default for BoundaryEnvironment {
    fn default() -> Self {
        Self {
            lambda_gz: 0.6,
            sigma_n: 2.8,
            c_n: 2.8,
            alpha_2: 20.0,
            alpha_3: 20.0,
            alpha_4: 20.0,
            t_os1: 320.0,
            t_os2: 320.0,
            t_os3: 320.0,
            secondary: SectionEnvironment::default(),
            curvilinear: Vec::new(),
            rectilinear: None,
        }
    }
}

impl BoundaryEnvironment {
    pub fn curvilinear_section(&self, m: usize) -> &SectionEnvironment {
        self.curvilinear.get(m.wrapping_sub(1)).unwrap_or(&self.secondary)
    }

    pub fn rectilinear_section(&self) -> &SectionEnvironment {
        self.rectilinear.as_ref().unwrap_or(&self.secondary)
    }

    fn validate(&self) -> Result<()> {
        let coeffs = [self.lambda_gz, self.sigma_n, self.c_n, self.alpha_2, self.alpha_3, self.alpha_4];
        if coeffs.iter().any(|c| !(*c >= 0.0)) {
            return Err(CoreError::Config("mould exchange coefficients must be >= 0".into()));
        }
        let envs = std::iter::once(&self.secondary).chain(&self.curvilinear).chain(&self.rectilinear);
        for e in envs {
            if !(e.c_inner >= 0.0 && e.c_outer >= 0.0) {
                return Err(CoreError::Config("radiation coefficients must be >= 0".into()));
            }
            if !(e.t_inner > 0.0 && e.t_outer > 0.0) {
                return Err(CoreError::Config("environment temperatures must be > 0 K".into()));
            }
        }
        if [self.t_os1, self.t_os2, self.t_os3].iter().any(|t| !(*t > 0.0)) {
            return Err(CoreError::Config("environment temperatures must be > 0 K".into()));
        }
        Ok(())
    }

    /// Lowest environment temperature seen by the steel or the wall.
    pub fn min_temperature(&self) -> f64 {
        let envs = std::iter::once(&self.secondary).chain(&self.curvilinear).chain(&self.rectilinear);
        envs.flat_map(|e| [e.t_inner, e.t_outer])
            .chain([self.t_os1, self.t_os2, self.t_os3])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Mould cooling-water channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaterChannel {
    /// Volumetric heat capacity of water [J/(m^3 K)].
    pub c_w: f64,
    /// Channel cross-section [m^2] per unit slab width.
    pub s_ch: f64,
    /// Water velocity [m/s].
    pub v_water: f64,
    /// Wetted perimeter on the mould-wall side [m].
    pub p_i: f64,
    /// Wetted perimeter on the external side [m].
    pub p_e: f64,
    /// Wall-to-water heat-transfer coefficient [W/(m^2 K)].
    pub alpha_1: f64,
    /// Water-to-external-wall heat-transfer coefficient [W/(m^2 K)].
    pub alpha_e: f64,
    /// External wall temperature [K].
    pub t_e: f64,
    /// Inlet temperature history at `z = Z` [K].
    pub inlet: Schedule,
    /// Initial channel temperature [K].
    pub initial: f64,
}

impl Default for WaterChannel {
    fn default() -> Self {
        Self {
            c_w: 4.18e6,
            s_ch: 5.0e-3,
            v_water: 6.0,
            p_i: 1.0,
            p_e: 1.0,
            alpha_1: 25_000.0,
            alpha_e: 0.0,
            t_e: 303.0,
            inlet: Schedule::Constant(303.0),
            initial: 303.0,
        }
    }
}

impl WaterChannel {
    fn validate(&self) -> Result<()> {
        if !(self.v_water > 0.0 && self.s_ch > 0.0 && self.c_w > 0.0) {
            return Err(CoreError::Config("water channel needs v_water, s_ch, c_w > 0".into()));
        }
        if !(self.alpha_1 >= 0.0 && self.alpha_e >= 0.0 && self.p_i >= 0.0 && self.p_e >= 0.0) {
            return Err(CoreError::Config("water channel coefficients must be >= 0".into()));
        }
        self.inlet.validate("water inlet temperature")
    }
}

/// `(alpha_c, alpha_p)` of one face; footprint geometry comes from the layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaPair {
    pub alpha_c: f64,
    pub alpha_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceAlphas {
    pub inner: AlphaPair,
    pub outer: AlphaPair,
}

impl FaceAlphas {
    pub fn both(alpha_c: f64, alpha_p: f64) -> Self {
        let p = AlphaPair { alpha_c, alpha_p };
        Self { inner: p, outer: p }
    }
}

/// Secondary-cooling heat-transfer coefficients per section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoolingSpec {
    pub curvilinear: Vec<FaceAlphas>,
    pub rectilinear: Option<FaceAlphas>,
}

impl Default for CoolingSpec {
    fn default() -> Self {
        Self {
            curvilinear: vec![FaceAlphas::both(250.0, 750.0), FaceAlphas::both(200.0, 500.0)],
            rectilinear: Some(FaceAlphas::both(150.0, 300.0)),
        }
    }
}

/// Everything the forward model needs besides the material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CasterSetup {
    pub layout: MachineLayout,
    pub grid: GridSpec,
    pub environment: BoundaryEnvironment,
    pub water: WaterChannel,
    /// Withdrawal rate [m/s].
    pub casting_speed: Schedule,
    /// Temperature of the steel entering at the meniscus [K].
    pub pouring_temperature: f64,
    /// Initial steel temperature [K]; the pouring temperature when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_steel: Option<f64>,
    /// Initial wall temperature [K]; the water inlet temperature when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_wall: Option<f64>,
    pub wall: ConstantMedium,
    pub cooling: CoolingSpec,
}

impl Default for CasterSetup {
    fn default() -> Self {
        Self {
            layout: MachineLayout::desk_scale(),
            grid: GridSpec::default(),
            environment: BoundaryEnvironment::default(),
            water: WaterChannel::default(),
            casting_speed: Schedule::Constant(1.0 / 60.0),
            pouring_temperature: 1800.0,
            initial_steel: None,
            initial_wall: None,
            wall: ConstantMedium::copper(),
            cooling: CoolingSpec::default(),
        }
    }
}

impl CasterSetup {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.environment.validate()?;
        self.water.validate()?;
        self.casting_speed.validate("casting speed")?;
        if !(self.casting_speed.min() >= 0.0) {
            return Err(CoreError::Config("casting speed must be >= 0".into()));
        }
        if self.cooling.curvilinear.len() != self.layout.curvilinear.len() {
            return Err(CoreError::Config(format!(
                "cooling lists {} curvilinear sections, layout has {}",
                self.cooling.curvilinear.len(),
                self.layout.curvilinear.len()
            )));
        }
        if self.layout.rectilinear.is_some() && self.cooling.rectilinear.is_none() {
            return Err(CoreError::Config("rectilinear section has no cooling coefficients".into()));
        }
        if !(self.wall.capacity > 0.0 && self.wall.lambda > 0.0) {
            return Err(CoreError::Config("wall properties must be > 0".into()));
        }
        Ok(())
    }

    pub fn initial_steel(&self) -> f64 {
        self.initial_steel.unwrap_or(self.pouring_temperature)
    }

    pub fn initial_wall(&self) -> f64 {
        self.initial_wall.unwrap_or_else(|| self.water.inlet.at(0.0))
    }

    /// Keep the mould and the first `n` curvilinear sections only.
    pub fn truncated(&self, n: usize) -> Self {
        let mut s = self.clone();
        s.layout.curvilinear.truncate(n);
        s.cooling.curvilinear.truncate(n);
        s.layout.rectilinear = None;
        s.cooling.rectilinear = None;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_interpolates_and_holds() {
        let s = Schedule::Table(vec![[0.0, 1.0], [10.0, 3.0]]);
        assert_eq!(s.at(-1.0), 1.0);
        assert_eq!(s.at(5.0), 2.0);
        assert_eq!(s.at(20.0), 3.0);
        assert_eq!(Schedule::Constant(4.0).at(1e9), 4.0);
    }

    #[test]
    fn default_setup_round_trips_through_toml() {
        let s = CasterSetup::default();
        s.validate().unwrap();
        let text = toml::to_string(&s).unwrap();
        let back: CasterSetup = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn cooling_must_cover_layout() {
        let mut s = CasterSetup::default();
        s.cooling.curvilinear.pop();
        assert!(s.validate().is_err());
    }
}
