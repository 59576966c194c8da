//! Explicit finite-volume enthalpy kernel on one structured 2D patch.
//!
//! A patch has a through-thickness axis (`across`, index `j`) and an
//! along-strand axis (`along`, index `k`). Nodes sit on the patch boundary,
//! so edge nodes own half cells. Volumes and face areas are exact for the
//! Cartesian and polar metrics and every link is shared by its two nodes,
//! which makes the update conservative to round-off: the enthalpy change of
//! the free nodes equals the boundary heat input, step by step.

use crate::error::{CoreError, Result};
use crate::geometry::Axis;
use crate::material::ThermalMedium;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Cartesian,
    /// `across` is the radius, `along` the polar angle.
    Polar,
}

/// How surface radiation is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiationLaw {
    /// `C (T_env^4 - T^4)`.
    Kelvin4,
    /// `C ((T_env/100)^4 - (T/100)^4)`.
    Hundredths4,
}

impl RadiationLaw {
    fn flux(self, c: f64, t_env: f64, t: f64) -> f64 {
        match self {
            RadiationLaw::Kelvin4 => c * (t_env.powi(4) - t.powi(4)),
            RadiationLaw::Hundredths4 => c * ((t_env / 100.0).powi(4) - (t / 100.0).powi(4)),
        }
    }

    fn slope(self, c: f64, t: f64) -> f64 {
        match self {
            RadiationLaw::Kelvin4 => 4.0 * c * t.abs().powi(3),
            RadiationLaw::Hundredths4 => 4.0 * c * (t.abs() / 100.0).powi(3) / 100.0,
        }
    }
}

/// Convective plus radiative exchange with an environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exchange {
    pub alpha: f64,
    pub t_env: f64,
    pub c_rad: f64,
    pub law: RadiationLaw,
    /// Share of the node's boundary face exposed to this environment.
    pub area_fraction: f64,
}

impl Exchange {
    pub fn new(alpha: f64, t_env: f64, c_rad: f64, law: RadiationLaw) -> Self {
        Self { alpha, t_env, c_rad, law, area_fraction: 1.0 }
    }

    /// Heat flux into the body [W/m^2] at surface temperature `t`.
    pub fn flux_in(&self, t: f64) -> f64 {
        self.alpha * (self.t_env - t) + self.law.flux(self.c_rad, self.t_env, t)
    }

    fn conductance(&self, t: f64) -> f64 {
        self.alpha + self.law.slope(self.c_rad, t.max(self.t_env))
    }
}

/// Boundary treatment of one boundary node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeBc {
    pub exchange: Option<Exchange>,
    /// Prescribed heat input [W per unit depth].
    pub power_in: f64,
    /// Linearized conductance of `power_in` [W/K per unit depth]; only
    /// enters the stability bound.
    pub coupling: f64,
}

impl NodeBc {
    pub const ADIABATIC: NodeBc = NodeBc { exchange: None, power_in: 0.0, coupling: 0.0 };

    pub fn exchange(e: Exchange) -> Self {
        Self { exchange: Some(e), ..Self::ADIABATIC }
    }

    pub fn power(power_in: f64, coupling: f64) -> Self {
        Self { exchange: None, power_in, coupling }
    }
}

/// Upwind transport along `+along` with inflow at `k = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Advection {
    /// Linear speed [m/s] (Cartesian) or angular speed [rad/s] (polar).
    pub speed: f64,
    /// Enthalpy of the material entering each row `j`.
    pub inflow_h: Vec<f64>,
}

/// Conditions on the four patch edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundaries {
    /// `j = 0`, one entry per `k`.
    pub low: Vec<NodeBc>,
    /// `j = n_across - 1`, one entry per `k`.
    pub high: Vec<NodeBc>,
    /// `k = 0`, one entry per `j`.
    pub start: Vec<NodeBc>,
    /// `k = n_along - 1`, one entry per `j`.
    pub end: Vec<NodeBc>,
    pub advection: Option<Advection>,
    /// Volumetric heat release integrated over each node's cell [W per unit depth].
    pub source: Option<Vec<f64>>,
}

impl Boundaries {
    pub fn adiabatic(g: &PatchGeometry) -> Self {
        Self {
            low: vec![NodeBc::ADIABATIC; g.along.n],
            high: vec![NodeBc::ADIABATIC; g.along.n],
            start: vec![NodeBc::ADIABATIC; g.across.n],
            end: vec![NodeBc::ADIABATIC; g.across.n],
            advection: None,
            source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGeometry {
    pub metric: Metric,
    pub across: Axis,
    pub along: Axis,
    volume: Vec<f64>,
    g_across: Vec<f64>,
    g_along: Vec<f64>,
    area_low: Vec<f64>,
    area_high: Vec<f64>,
    area_side: Vec<f64>,
    flow: Vec<f64>,
}

fn cell_extent(axis: &Axis, i: usize) -> (f64, f64) {
    let c = axis.coord(i);
    let lo = if i == 0 { c } else { c - 0.5 * axis.step };
    let hi = if i + 1 == axis.n { c } else { c + 0.5 * axis.step };
    (lo, hi)
}

impl PatchGeometry {
    pub fn new(metric: Metric, across: Axis, along: Axis) -> Result<Self> {
        if across.n < 2 || along.n < 1 {
            return Err(CoreError::Config("a patch needs at least 2 nodes across".into()));
        }
        if metric == Metric::Polar && !(across.start > 0.0) {
            return Err(CoreError::Config("polar patch needs a positive inner radius".into()));
        }
        let (na, nl) = (across.n, along.n);
        let radial: Vec<(f64, f64)> = (0..na).map(|j| cell_extent(&across, j)).collect();
        let angular: Vec<f64> = (0..nl)
            .map(|k| {
                let (a, b) = cell_extent(&along, k);
                b - a
            })
            .collect();
        // Per-row "cross-section" of the along-direction flow and per-row width.
        let (flow, width): (Vec<f64>, Vec<f64>) = radial
            .iter()
            .map(|&(a, b)| match metric {
                Metric::Cartesian => (b - a, b - a),
                Metric::Polar => (0.5 * (b * b - a * a), b - a),
            })
            .unzip();
        let mut volume = Vec::with_capacity(na * nl);
        for &wk in &angular {
            volume.extend(flow.iter().map(|f| f * wk));
        }
        let mut g_across = Vec::with_capacity((na - 1) * nl);
        for &wk in &angular {
            for j in 0..na - 1 {
                let face = match metric {
                    Metric::Cartesian => wk,
                    Metric::Polar => (across.coord(j) + 0.5 * across.step) * wk,
                };
                g_across.push(face / across.step);
            }
        }
        let mut g_along = Vec::with_capacity(na * nl.saturating_sub(1));
        for _ in 0..nl.saturating_sub(1) {
            g_along.extend(radial.iter().map(|&(a, b)| match metric {
                Metric::Cartesian => (b - a) / along.step,
                Metric::Polar => (b / a).ln() / along.step,
            }));
        }
        let (r_lo, r_hi) = match metric {
            Metric::Cartesian => (1.0, 1.0),
            Metric::Polar => (across.start, across.end()),
        };
        let area_low = angular.iter().map(|w| w * r_lo).collect();
        let area_high = angular.iter().map(|w| w * r_hi).collect();
        Ok(Self { metric, across, along, volume, g_across, g_along, area_low, area_high, area_side: width, flow })
    }

    #[inline]
    pub fn idx(&self, j: usize, k: usize) -> usize {
        k * self.across.n + j
    }

    pub fn len(&self) -> usize {
        self.across.n * self.along.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self, j: usize, k: usize) -> f64 {
        self.volume[self.idx(j, k)]
    }

    /// Area of the `j = 0` face owned by node `(0, k)`.
    pub fn area_low(&self, k: usize) -> f64 {
        self.area_low[k]
    }

    pub fn area_high(&self, k: usize) -> f64 {
        self.area_high[k]
    }
}

/// Time step selection for [`Patch::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    /// Physical time step [s]; rejected when it exceeds the stability bound.
    Global(f64),
    /// Per-node pseudo-time steps at `fraction` of the local bound; only
    /// meaningful when marching to a steady state.
    Local(f64),
}

/// Energy bookkeeping of one step, per unit depth.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// Enthalpy change of the free nodes [J].
    pub delta_h: f64,
    /// Net heat that crossed the patch boundary [J].
    pub boundary_in: f64,
    /// Sum of magnitudes of the individual boundary contributions [J].
    pub gross: f64,
    /// Largest nodal temperature change [K].
    pub max_change: f64,
    /// Largest temperature change among nodes inside the latent band [K].
    pub max_band_change: f64,
}

impl StepReport {
    pub fn accumulate(&mut self, o: &StepReport) {
        self.delta_h += o.delta_h;
        self.boundary_in += o.boundary_in;
        self.gross += o.gross;
        self.max_change = self.max_change.max(o.max_change);
        self.max_band_change = self.max_band_change.max(o.max_band_change);
    }

    /// Conservation defect relative to the enthalpy change, falling back to
    /// the gross boundary exchange when the net change is tiny.
    pub fn relative_defect(&self) -> f64 {
        let scale = self.delta_h.abs().max(1e-3 * self.gross).max(f64::MIN_POSITIVE);
        (self.delta_h - self.boundary_in).abs() / scale
    }
}

struct Accumulator<'a> {
    fixed: &'a [bool],
    rate: &'a mut [f64],
    boundary: &'a mut [f64],
    gross: &'a mut [f64],
}

impl Accumulator<'_> {
    /// Heat rate `q` flowing from node `b` into node `a`.
    fn transfer(&mut self, a: usize, b: usize, q: f64) {
        self.rate[a] += q;
        self.rate[b] -= q;
        if self.fixed[a] != self.fixed[b] {
            let (free, into) = if self.fixed[a] { (b, -q) } else { (a, q) };
            self.boundary[free] += into;
            self.gross[free] += into.abs();
        }
    }

    fn external(&mut self, i: usize, q: f64) {
        self.rate[i] += q;
        self.boundary[i] += q;
        self.gross[i] += q.abs();
    }
}

/// Nodal state on one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub geom: PatchGeometry,
    h: Vec<f64>,
    t: Vec<f64>,
    fixed: Vec<bool>,
}

impl Patch {
    pub fn uniform(geom: PatchGeometry, medium: &dyn ThermalMedium, t: f64) -> Self {
        let n = geom.len();
        Self { h: vec![medium.enthalpy(t); n], t: vec![t; n], fixed: vec![false; n], geom }
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.t
    }

    pub fn enthalpies(&self) -> &[f64] {
        &self.h
    }

    pub fn t_at(&self, j: usize, k: usize) -> f64 {
        self.t[self.geom.idx(j, k)]
    }

    pub fn set(&mut self, medium: &dyn ThermalMedium, j: usize, k: usize, t: f64) {
        let i = self.geom.idx(j, k);
        self.t[i] = t;
        self.h[i] = medium.enthalpy(t);
    }

    /// Pins node `(j, k)` to `t`; pinned nodes are not advanced.
    pub fn fix(&mut self, medium: &dyn ThermalMedium, j: usize, k: usize, t: f64) {
        self.set(medium, j, k, t);
        let i = self.geom.idx(j, k);
        self.fixed[i] = true;
    }

    pub fn release(&mut self, j: usize, k: usize) {
        let i = self.geom.idx(j, k);
        self.fixed[i] = false;
    }

    pub fn is_fixed(&self, j: usize, k: usize) -> bool {
        self.fixed[self.geom.idx(j, k)]
    }

    /// Temperatures along row `j` (constant across-index).
    pub fn row(&self, j: usize) -> Vec<f64> {
        (0..self.geom.along.n).map(|k| self.t_at(j, k)).collect()
    }

    /// Temperatures along column `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        let na = self.geom.across.n;
        self.t[k * na..(k + 1) * na].to_vec()
    }

    pub fn column_h(&self, k: usize) -> Vec<f64> {
        let na = self.geom.across.n;
        self.h[k * na..(k + 1) * na].to_vec()
    }

    /// Total enthalpy of the patch [J per unit depth].
    pub fn total_enthalpy(&self) -> f64 {
        self.h.iter().zip(&self.geom.volume).map(|(h, v)| h * v).sum()
    }

    fn conductances(&self, medium: &dyn ThermalMedium, bc: &Boundaries) -> Vec<f64> {
        let g = &self.geom;
        let (na, nl) = (g.across.n, g.along.n);
        let lam: Vec<f64> = self.t.iter().map(|&t| medium.conductivity(t)).collect();
        let mut cond = vec![0.0; g.len()];
        for k in 0..nl {
            for j in 0..na - 1 {
                let (a, b) = (g.idx(j, k), g.idx(j + 1, k));
                let c = g.g_across[k * (na - 1) + j] * 0.5 * (lam[a] + lam[b]);
                cond[a] += c;
                cond[b] += c;
            }
        }
        for k in 0..nl.saturating_sub(1) {
            for j in 0..na {
                let (a, b) = (g.idx(j, k), g.idx(j, k + 1));
                let c = g.g_along[k * na + j] * 0.5 * (lam[a] + lam[b]);
                cond[a] += c;
                cond[b] += c;
            }
        }
        let mut edge = |i: usize, area: f64, n: &NodeBc| {
            if let Some(e) = &n.exchange {
                cond[i] += e.conductance(self.t[i]) * area * e.area_fraction;
            }
            cond[i] += n.coupling;
        };
        for k in 0..nl {
            edge(g.idx(0, k), g.area_low[k], &bc.low[k]);
            edge(g.idx(na - 1, k), g.area_high[k], &bc.high[k]);
        }
        for j in 0..na {
            edge(g.idx(j, 0), g.area_side[j], &bc.start[j]);
            edge(g.idx(j, nl - 1), g.area_side[j], &bc.end[j]);
        }
        if let Some(adv) = &bc.advection {
            for k in 0..nl {
                for j in 0..na {
                    cond[g.idx(j, k)] += adv.speed.abs() * g.flow[j] * medium.min_capacity();
                }
            }
        }
        cond
    }

    /// Largest stable explicit step: `0.8 min_i V_i c_min / sum of conductances`.
    ///
    /// For interior nodes without advection this is
    /// `0.4 c rho / lambda * (1/dx^2 + 1/dz^2)^-1`.
    pub fn admissible_dt(&self, medium: &dyn ThermalMedium, bc: &Boundaries) -> f64 {
        let cap = medium.min_capacity();
        self.conductances(medium, bc)
            .iter()
            .zip(&self.geom.volume)
            .zip(&self.fixed)
            .filter(|(_, fixed)| !**fixed)
            .map(|((c, v), _)| if *c > 0.0 { 0.8 * v * cap / c } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min)
    }

    /// Net heat rate into every node [W per unit depth], with the part that
    /// crossed the patch boundary and its gross magnitude.
    fn rates(&self, medium: &dyn ThermalMedium, bc: &Boundaries) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let g = &self.geom;
        let (na, nl) = (g.across.n, g.along.n);
        let n = g.len();
        let lam: Vec<f64> = self.t.iter().map(|&t| medium.conductivity(t)).collect();
        let mut rate = vec![0.0; n];
        let mut boundary = vec![0.0; n];
        let mut gross = vec![0.0; n];
        let fixed = &self.fixed;
        let t = &self.t;
        let h = &self.h;

        let mut acc = Accumulator { fixed, rate: &mut rate, boundary: &mut boundary, gross: &mut gross };
        for k in 0..nl {
            for j in 0..na - 1 {
                let (a, b) = (g.idx(j, k), g.idx(j + 1, k));
                let c = g.g_across[k * (na - 1) + j] * 0.5 * (lam[a] + lam[b]);
                acc.transfer(a, b, c * (t[b] - t[a]));
            }
        }
        for k in 0..nl.saturating_sub(1) {
            for j in 0..na {
                let (a, b) = (g.idx(j, k), g.idx(j, k + 1));
                let c = g.g_along[k * na + j] * 0.5 * (lam[a] + lam[b]);
                acc.transfer(a, b, c * (t[b] - t[a]));
            }
        }
        if let Some(src) = &bc.source {
            for (i, q) in src.iter().enumerate() {
                acc.external(i, *q);
            }
        }
        if let Some(adv) = &bc.advection {
            let u = adv.speed;
            debug_assert!(u >= 0.0);
            for j in 0..na {
                let f = u * g.flow[j];
                let first = g.idx(j, 0);
                acc.external(first, f * adv.inflow_h[j]);
                for k in 0..nl - 1 {
                    let (a, b) = (g.idx(j, k), g.idx(j, k + 1));
                    acc.transfer(b, a, f * h[a]);
                }
                let last = g.idx(j, nl - 1);
                acc.external(last, -f * h[last]);
            }
        }
        let mut edge = |i: usize, area: f64, nbc: &NodeBc| {
            let mut q = nbc.power_in;
            if let Some(e) = &nbc.exchange {
                q += e.flux_in(t[i]) * area * e.area_fraction;
            }
            acc.external(i, q);
        };
        for k in 0..nl {
            edge(g.idx(0, k), g.area_low[k], &bc.low[k]);
            edge(g.idx(na - 1, k), g.area_high[k], &bc.high[k]);
        }
        for j in 0..na {
            edge(g.idx(j, 0), g.area_side[j], &bc.start[j]);
            edge(g.idx(j, nl - 1), g.area_side[j], &bc.end[j]);
        }

        drop(acc);
        (rate, boundary, gross)
    }

    /// Net heat rate into every node [W per unit depth]; zero at a steady state.
    pub fn net_rate(&self, medium: &dyn ThermalMedium, bc: &Boundaries) -> Vec<f64> {
        self.rates(medium, bc).0
    }

    /// One pseudo-time sweep towards the steady state, with conduction across
    /// the patch implicit column by column and everything else explicit at
    /// `fraction` of its own stability bound. Fixed points coincide with
    /// those of [`Patch::step`]; returns the largest temperature change.
    pub fn relax(&mut self, medium: &dyn ThermalMedium, bc: &Boundaries, fraction: f64) -> Result<f64> {
        let g = &self.geom;
        let (na, nl) = (g.across.n, g.along.n);
        let cap = medium.min_capacity();
        let lam: Vec<f64> = self.t.iter().map(|&t| medium.conductivity(t)).collect();
        let total = self.conductances(medium, bc);
        let rate = self.rates(medium, bc).0;
        let mut max_change: f64 = 0.0;
        let (mut lower, mut diag, mut upper, mut rhs) = (vec![0.0; na], vec![0.0; na], vec![0.0; na], vec![0.0; na]);
        for k in 0..nl {
            let link: Vec<f64> = (0..na - 1)
                .map(|j| g.g_across[k * (na - 1) + j] * 0.5 * (lam[g.idx(j, k)] + lam[g.idx(j + 1, k)]))
                .collect();
            for j in 0..na {
                let i = g.idx(j, k);
                let (gl, gu) = (if j > 0 { link[j - 1] } else { 0.0 }, if j + 1 < na { link[j] } else { 0.0 });
                if self.fixed[i] {
                    (lower[j], diag[j], upper[j], rhs[j]) = (0.0, 1.0, 0.0, 0.0);
                    continue;
                }
                let explicit = (total[i] - gl - gu).max(0.0);
                let mass = (explicit / (0.8 * fraction)).max(1e-12 * (gl + gu));
                (lower[j], diag[j], upper[j], rhs[j]) = (-gl, mass + gl + gu, -gu, rate[i]);
            }
            solve_tridiagonal(&lower, &mut diag, &upper, &mut rhs);
            for (j, dt) in rhs.iter().enumerate() {
                let i = g.idx(j, k);
                if self.fixed[i] {
                    continue;
                }
                let new_h = self.h[i] + cap * dt;
                if !new_h.is_finite() {
                    return Err(CoreError::Numeric(format!("non-finite enthalpy at node {i}")));
                }
                let new_t = medium.temperature(new_h);
                max_change = max_change.max((new_t - self.t[i]).abs());
                self.h[i] = new_h;
                self.t[i] = new_t;
            }
        }
        Ok(max_change)
    }

    /// One explicit update. `band` is the latent-heat band used for the
    /// smearing-width diagnostic.
    pub fn step(
        &mut self,
        medium: &dyn ThermalMedium,
        bc: &Boundaries,
        dt: TimeStep,
        band: Option<(f64, f64)>,
    ) -> Result<StepReport> {
        let g = &self.geom;
        let (na, nl) = (g.across.n, g.along.n);
        debug_assert_eq!(bc.low.len(), nl);
        debug_assert_eq!(bc.start.len(), na);

        let local = match dt {
            TimeStep::Global(step) => {
                let adm = self.admissible_dt(medium, bc);
                if step > adm * (1.0 + 1e-12) {
                    return Err(CoreError::Unstable { requested: step, admissible: adm });
                }
                None
            }
            TimeStep::Local(fraction) => Some(
                self.conductances(medium, bc)
                    .iter()
                    .zip(&g.volume)
                    .map(|(c, v)| if *c > 0.0 { fraction * 0.8 * v * medium.min_capacity() / c } else { 0.0 })
                    .collect::<Vec<_>>(),
            ),
        };

        let (rate, boundary, gross) = self.rates(medium, bc);
        let global = match dt {
            TimeStep::Global(s) => s,
            TimeStep::Local(_) => 0.0,
        };
        let mut report = StepReport::default();
        for i in 0..g.len() {
            if self.fixed[i] {
                continue;
            }
            let dti = local.as_ref().map_or(global, |l| l[i]);
            let dh = dti * rate[i] / g.volume[i];
            let new_h = self.h[i] + dh;
            if !new_h.is_finite() {
                return Err(CoreError::Numeric(format!("non-finite enthalpy at node {i}")));
            }
            let new_t = medium.temperature(new_h);
            let change = (new_t - self.t[i]).abs();
            report.max_change = report.max_change.max(change);
            if let Some((lo, hi)) = band {
                let inside = |x: f64| x >= lo && x <= hi;
                if inside(new_t) || inside(self.t[i]) {
                    report.max_band_change = report.max_band_change.max(change);
                }
            }
            report.delta_h += dh * g.volume[i];
            report.boundary_in += dti * boundary[i];
            report.gross += dti * gross[i];
            self.h[i] = new_h;
            self.t[i] = new_t;
        }
        Ok(report)
    }
}

/// Thomas algorithm; the solution overwrites `rhs`.
fn solve_tridiagonal(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for j in 1..n {
        let w = lower[j] / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for j in (0..n - 1).rev() {
        rhs[j] = (rhs[j] - upper[j] * rhs[j + 1]) / diag[j];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{ConstantMedium, MaterialProperties};

    fn axis(start: f64, step: f64, n: usize) -> Axis {
        Axis { start, step, n }
    }

    #[test]
    fn polar_volumes_sum_to_annulus_sector() {
        let g = PatchGeometry::new(Metric::Polar, axis(2.0, 0.1, 11), axis(0.0, 0.05, 9)).unwrap();
        let total: f64 = (0..g.across.n).flat_map(|j| (0..g.along.n).map(move |k| (j, k))).map(|(j, k)| g.volume(j, k)).sum();
        let exact = 0.5 * (3.0f64.powi(2) - 2.0f64.powi(2)) * 0.4;
        assert!((total - exact).abs() < 1e-12);
    }

    #[test]
    fn stability_bound_matches_interior_formula() {
        let m = ConstantMedium { capacity: 4.0e6, lambda: 40.0 };
        let (dx, dz) = (0.01, 0.02);
        let g = PatchGeometry::new(Metric::Cartesian, axis(0.0, dx, 9), axis(0.0, dz, 9)).unwrap();
        let mut p = Patch::uniform(g, &m, 500.0);
        // Pin the edges so the bound is set by interior nodes alone.
        for k in 0..9 {
            for j in [0, 8] {
                p.fix(&m, j, k, 500.0);
                p.fix(&m, k, j, 500.0);
            }
        }
        let adm = p.admissible_dt(&m, &Boundaries::adiabatic(&p.geom));
        let formula = 0.4 * 4.0e6 / 40.0 / (1.0 / (dx * dx) + 1.0 / (dz * dz));
        assert!((adm - formula).abs() / formula < 1e-12);
    }

    #[test]
    fn oversized_step_names_admissible_value() {
        let m = ConstantMedium { capacity: 4.0e6, lambda: 40.0 };
        let g = PatchGeometry::new(Metric::Cartesian, axis(0.0, 0.01, 5), axis(0.0, 0.01, 5)).unwrap();
        let mut p = Patch::uniform(g, &m, 500.0);
        let bc = Boundaries::adiabatic(&p.geom);
        let adm = p.admissible_dt(&m, &bc);
        match p.step(&m, &bc, TimeStep::Global(2.0 * adm), None) {
            Err(CoreError::Unstable { admissible, .. }) => assert_eq!(admissible, adm),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enthalpy_change_equals_boundary_input() {
        let m = MaterialProperties::st40();
        let g = PatchGeometry::new(Metric::Polar, axis(5.0, 0.01, 21), axis(0.0, 0.005, 31)).unwrap();
        let mut p = Patch::uniform(g, &m, 1790.0);
        let mut bc = Boundaries::adiabatic(&p.geom);
        bc.low = vec![NodeBc::exchange(Exchange::new(400.0, 300.0, 4.5e-8, RadiationLaw::Kelvin4)); 31];
        bc.high = vec![NodeBc::exchange(Exchange::new(300.0, 320.0, 4.5e-8, RadiationLaw::Kelvin4)); 31];
        bc.advection = Some(Advection { speed: 0.003, inflow_h: vec![m.enthalpy(1800.0); 21] });
        let dt = 0.5 * p.admissible_dt(&m, &bc);
        for _ in 0..200 {
            let h0 = p.total_enthalpy();
            let r = p.step(&m, &bc, TimeStep::Global(dt), None).unwrap();
            let dh = p.total_enthalpy() - h0;
            assert!((dh - r.boundary_in).abs() <= 1e-9 * r.gross, "{dh} vs {}", r.boundary_in);
            assert!(r.relative_defect() < 1e-6);
        }
    }
}
