//! Thermophysical properties of the cast steel and the mould wall.
//!
//! Latent heat is folded into an apparent heat capacity over a band of
//! half-width `dt_smear` around the crystallization temperature. The solver
//! integrates that capacity into a tabulated volumetric enthalpy, which is
//! what it actually advances in time.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Piecewise-linear table `T [K] -> value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct PropertyTable {
    knots: Vec<(f64, f64)>,
}

impl PropertyTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(CoreError::Config("property table has no knots".into()));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(CoreError::Config(format!(
                    "property table temperatures must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(t, v)) = knots.iter().find(|(t, v)| !(t.is_finite() && *v > 0.0 && v.is_finite())) {
            return Err(CoreError::Config(format!(
                "property table value {v} at {t} K must be finite and strictly positive"
            )));
        }
        Ok(Self { knots })
    }

    /// Table with a single value over `[t_min, t_max]`.
    pub fn constant(value: f64, t_min: f64, t_max: f64) -> Result<Self> {
        Self::new(vec![(t_min, value), (t_max, value)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.domain();
        t >= lo && t <= hi
    }

    /// Interpolated value; `None` outside the tabulated domain.
    pub fn get(&self, t: f64) -> Option<f64> {
        if !self.contains(t) {
            return None;
        }
        Some(self.eval_clamped(t))
    }

    /// Interpolated value, holding the end values outside the domain.
    pub fn eval_clamped(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        if t >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let i = k.partition_point(|&(tk, _)| tk <= t);
        let (t0, v0) = k[i - 1];
        let (t1, v1) = k[i];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    fn max_value(&self) -> f64 {
        self.knots.iter().map(|&(_, v)| v).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<[f64; 2]>> for PropertyTable {
    type Error = CoreError;

    fn try_from(rows: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(rows.into_iter().map(|[t, v]| (t, v)).collect())
    }
}

impl From<PropertyTable> for Vec<[f64; 2]> {
    fn from(t: PropertyTable) -> Self {
        t.knots.into_iter().map(|(t, v)| [t, v]).collect()
    }
}

/// Properties at one temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Props {
    /// Specific heat [J/(kg K)].
    pub c: f64,
    /// Density [kg/m^3].
    pub rho: f64,
    /// Thermal conductivity [W/(m K)].
    pub lambda: f64,
}

/// What the finite-volume kernel needs from a conducting medium.
pub trait ThermalMedium: Send + Sync {
    /// Volumetric enthalpy [J/m^3] relative to an arbitrary reference.
    fn enthalpy(&self, t: f64) -> f64;
    /// Inverse of [`ThermalMedium::enthalpy`].
    fn temperature(&self, h: f64) -> f64;
    fn conductivity(&self, t: f64) -> f64;
    /// Lower bound of `dH/dT`, used by the stability bound.
    fn min_capacity(&self) -> f64;
    /// Upper bound of the conductivity over the tabulated range.
    fn max_conductivity(&self) -> f64;
    /// Temperatures for which the medium is defined.
    fn domain(&self) -> (f64, f64);
}

/// Raw description of a material, as read from a material file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    #[serde(default)]
    pub name: String,
    /// Latent heat of crystallization [J/kg].
    pub mu: f64,
    pub t_liquidus: f64,
    pub t_solidus: f64,
    /// Crystallization temperature; the liquidus/solidus midpoint when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_kr: Option<f64>,
    /// Half-width of the latent-heat band [K].
    #[serde(default = "default_dt_smear")]
    pub dt_smear: f64,
    pub tables: MaterialTables,
}

fn default_dt_smear() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialTables {
    /// Specific heat [J/(kg K)].
    pub c: PropertyTable,
    /// Density [kg/m^3].
    pub rho: PropertyTable,
    /// Thermal conductivity [W/(m K)].
    pub lambda: PropertyTable,
}

const ST40_TOML: &str = include_str!("../data/st40.toml");

impl MaterialSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CoreError::Config(format!("material file: {e}")))
    }

    /// Built-in property set for carbon steel grade st40.
    pub fn st40() -> Self {
        Self::from_toml(ST40_TOML).expect("bundled st40 material file is valid")
    }
}

/// Steel properties with the derived enthalpy table.
#[derive(Debug, Clone)]
pub struct MaterialProperties {
    spec: MaterialSpec,
    t_kr: f64,
    domain: (f64, f64),
    enthalpy: EnthalpyTable,
    min_capacity: f64,
    max_conductivity: f64,
}

impl MaterialProperties {
    pub fn new(spec: MaterialSpec) -> Result<Self> {
        let MaterialSpec { mu, t_liquidus, t_solidus, dt_smear, .. } = spec;
        if !(mu > 0.0) {
            return Err(CoreError::Config(format!("latent heat mu must be > 0, got {mu}")));
        }
        if !(dt_smear > 0.0) {
            return Err(CoreError::Config(format!("dt_smear must be > 0, got {dt_smear}")));
        }
        if !(t_solidus <= t_liquidus) {
            return Err(CoreError::Config(format!(
                "solidus {t_solidus} K exceeds liquidus {t_liquidus} K"
            )));
        }
        let t_kr = spec.t_kr.unwrap_or(0.5 * (t_liquidus + t_solidus));
        if !(t_solidus <= t_kr && t_kr <= t_liquidus) {
            return Err(CoreError::Config(format!(
                "crystallization temperature {t_kr} K outside [{t_solidus}, {t_liquidus}] K"
            )));
        }
        let tables = &spec.tables;
        let (c_lo, c_hi) = tables.c.domain();
        let (r_lo, r_hi) = tables.rho.domain();
        let (l_lo, l_hi) = tables.lambda.domain();
        let domain = (c_lo.max(r_lo).max(l_lo), c_hi.min(r_hi).min(l_hi));
        if !(domain.0 < t_kr - dt_smear && t_kr + dt_smear < domain.1) {
            return Err(CoreError::Config(format!(
                "property tables must jointly cover the latent band {}..{} K (common domain {}..{} K)",
                t_kr - dt_smear,
                t_kr + dt_smear,
                domain.0,
                domain.1
            )));
        }

        let mut breaks: Vec<f64> = Vec::new();
        let step = 0.5;
        let n = ((domain.1 - domain.0) / step).ceil() as usize;
        breaks.extend((0..=n).map(|i| (domain.0 + i as f64 * step).min(domain.1)));
        for table in [&tables.c, &tables.rho, &tables.lambda] {
            breaks.extend(table.knots().iter().map(|&(t, _)| t).filter(|t| *t > domain.0 && *t < domain.1));
        }
        breaks.push(t_kr - dt_smear);
        breaks.push(t_kr + dt_smear);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

        let latent_rate = mu * tables.rho.eval_clamped(t_kr) / (2.0 * dt_smear);
        let sensible = |t: f64| tables.c.eval_clamped(t) * tables.rho.eval_clamped(t);
        let mut h = Vec::with_capacity(breaks.len());
        h.push(0.0);
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            // c and rho are linear inside [a, b], so Simpson is exact for their product.
            let mut inc = (b - a) / 6.0 * (sensible(a) + 4.0 * sensible(mid) + sensible(b));
            if mid >= t_kr - dt_smear && mid <= t_kr + dt_smear {
                inc += latent_rate * (b - a);
            }
            h.push(h[h.len() - 1] + inc);
        }
        let enthalpy = EnthalpyTable { t: breaks, h };
        let min_capacity = enthalpy.min_slope();
        let max_conductivity = tables.lambda.max_value();
        Ok(Self { spec, t_kr, domain, enthalpy, min_capacity, max_conductivity })
    }

    pub fn st40() -> Self {
        Self::new(MaterialSpec::st40()).expect("bundled st40 material is valid")
    }

    /// Temperature-independent properties over `[t_min, t_max]`.
    pub fn constant(
        c: f64,
        rho: f64,
        lambda: f64,
        mu: f64,
        t_kr: f64,
        dt_smear: f64,
        (t_min, t_max): (f64, f64),
    ) -> Result<Self> {
        Self::new(MaterialSpec {
            name: "constant".into(),
            mu,
            t_liquidus: t_kr,
            t_solidus: t_kr,
            t_kr: Some(t_kr),
            dt_smear,
            tables: MaterialTables {
                c: PropertyTable::constant(c, t_min, t_max)?,
                rho: PropertyTable::constant(rho, t_min, t_max)?,
                lambda: PropertyTable::constant(lambda, t_min, t_max)?,
            },
        })
    }

    pub fn spec(&self) -> &MaterialSpec {
        &self.spec
    }

    pub fn mu(&self) -> f64 {
        self.spec.mu
    }

    pub fn t_kr(&self) -> f64 {
        self.t_kr
    }

    pub fn dt_smear(&self) -> f64 {
        self.spec.dt_smear
    }

    pub fn rho_kr(&self) -> f64 {
        self.spec.tables.rho.eval_clamped(self.t_kr)
    }

    fn check(&self, property: &'static str, table: &PropertyTable, t: f64) -> Result<f64> {
        table.get(t).ok_or_else(|| {
            let (min, max) = table.domain();
            CoreError::Domain { property, temperature: t, min, max }
        })
    }

    pub fn props_at(&self, t: f64) -> Result<Props> {
        let tables = &self.spec.tables;
        Ok(Props {
            c: self.check("specific heat", &tables.c, t)?,
            rho: self.check("density", &tables.rho, t)?,
            lambda: self.check("thermal conductivity", &tables.lambda, t)?,
        })
    }

    /// Sensible `c rho` plus the smeared latent contribution [J/(m^3 K)].
    pub fn effective_heat_capacity(&self, t: f64) -> Result<f64> {
        let p = self.props_at(t)?;
        let mut cap = p.c * p.rho;
        if (t - self.t_kr).abs() <= self.spec.dt_smear {
            cap += self.spec.mu * self.rho_kr() / (2.0 * self.spec.dt_smear);
        }
        Ok(cap)
    }

    /// Liquid fraction implied by the enthalpy smearing, in `[0, 1]`.
    pub fn liquid_fraction(&self, t: f64) -> f64 {
        ((t - (self.t_kr - self.spec.dt_smear)) / (2.0 * self.spec.dt_smear)).clamp(0.0, 1.0)
    }
}

impl ThermalMedium for MaterialProperties {
    fn enthalpy(&self, t: f64) -> f64 {
        self.enthalpy.h_of_t(t)
    }

    fn temperature(&self, h: f64) -> f64 {
        self.enthalpy.t_of_h(h)
    }

    fn conductivity(&self, t: f64) -> f64 {
        self.spec.tables.lambda.eval_clamped(t)
    }

    fn min_capacity(&self) -> f64 {
        self.min_capacity
    }

    fn max_conductivity(&self) -> f64 {
        self.max_conductivity
    }

    fn domain(&self) -> (f64, f64) {
        self.domain
    }
}

/// Monotone piecewise-linear `H(T)`; linear extrapolation beyond its ends.
#[derive(Debug, Clone)]
struct EnthalpyTable {
    t: Vec<f64>,
    h: Vec<f64>,
}

impl EnthalpyTable {
    fn slope(&self, i: usize) -> f64 {
        (self.h[i + 1] - self.h[i]) / (self.t[i + 1] - self.t[i])
    }

    fn min_slope(&self) -> f64 {
        (0..self.t.len() - 1).map(|i| self.slope(i)).fold(f64::INFINITY, f64::min)
    }

    fn segment(xs: &[f64], x: f64) -> usize {
        xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1) - 1
    }

    fn h_of_t(&self, t: f64) -> f64 {
        let i = Self::segment(&self.t, t);
        self.h[i] + self.slope(i) * (t - self.t[i])
    }

    fn t_of_h(&self, h: f64) -> f64 {
        let i = Self::segment(&self.h, h);
        self.t[i] + (h - self.h[i]) / self.slope(i)
    }
}

/// Constant-property solid, used for the copper mould wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantMedium {
    /// Volumetric heat capacity [J/(m^3 K)].
    pub capacity: f64,
    /// Thermal conductivity [W/(m K)].
    pub lambda: f64,
}

impl ConstantMedium {
    /// Copper, the usual mould wall material.
    pub fn copper() -> Self {
        Self { capacity: 385.0 * 8900.0, lambda: 380.0 }
    }
}

impl ThermalMedium for ConstantMedium {
    fn enthalpy(&self, t: f64) -> f64 {
        self.capacity * t
    }

    fn temperature(&self, h: f64) -> f64 {
        h / self.capacity
    }

    fn conductivity(&self, _t: f64) -> f64 {
        self.lambda
    }

    fn min_capacity(&self) -> f64 {
        self.capacity
    }

    fn max_conductivity(&self) -> f64 {
        self.lambda
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}
