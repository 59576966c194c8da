//! Coupled mould, water channel and secondary-cooling sections.

use std::io::Write;
use std::sync::Arc;

use crate::chtc::{ChtcProfile, FaceProfiles};
use crate::error::{CoreError, Result};
use crate::geometry::{build_grids, Face, MachineGrids, SectionId};
use crate::material::{MaterialProperties, ThermalMedium};

use super::front::{locate_crossing, stefan_residual, FrontResult, FrontSample, PhaseFront};
use super::patch::{
    Advection, Boundaries, Exchange, Metric, NodeBc, Patch, PatchGeometry, RadiationLaw, StepReport, TimeStep,
};
use super::setup::{CasterSetup, FaceAlphas};

/// Nodal state of the whole machine at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub tau: f64,
    /// Ingot half in the mould: `j` along `x` (mid-plane to surface), `k` along `z`.
    pub ingot: Patch,
    /// Mould wall: `j` along `x` (gap side to water side), `k` along `z` from `z0`.
    pub wall: Patch,
    /// Channel water temperature at every wall row.
    pub water: Vec<f64>,
    /// Curved sections: `j` along the radius, `k` along the angle.
    pub curvilinear: Vec<Patch>,
    /// Straight section: `j` across the strand, `k` along it.
    pub rectilinear: Option<Patch>,
    /// Steps in which a node inside the latent band moved by more than half the band.
    pub band_warnings: usize,
}

/// Energy bookkeeping per patch, summed over any number of steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MachineAudit {
    pub ingot: StepReport,
    pub wall: StepReport,
    pub curvilinear: Vec<StepReport>,
    pub rectilinear: Option<StepReport>,
}

impl MachineAudit {
    pub fn accumulate(&mut self, o: &MachineAudit) {
        self.ingot.accumulate(&o.ingot);
        self.wall.accumulate(&o.wall);
        if self.curvilinear.len() < o.curvilinear.len() {
            self.curvilinear.resize(o.curvilinear.len(), StepReport::default());
        }
        for (a, b) in self.curvilinear.iter_mut().zip(&o.curvilinear) {
            a.accumulate(b);
        }
        if let Some(b) = &o.rectilinear {
            self.rectilinear.get_or_insert_with(StepReport::default).accumulate(b);
        }
    }

    /// `(label, report)` for every steel patch.
    pub fn steel(&self) -> Vec<(String, StepReport)> {
        let mut v = vec![("mould".to_string(), self.ingot)];
        v.extend(self.curvilinear.iter().enumerate().map(|(m, r)| (format!("curvilinear{}", m + 1), *r)));
        v.extend(self.rectilinear.iter().map(|r| ("rectilinear".to_string(), *r)));
        v
    }

    /// Largest relative conservation defect over all patches.
    pub fn worst_defect(&self) -> f64 {
        self.steel()
            .iter()
            .map(|(_, r)| *r)
            .chain([self.wall])
            .map(|r| if r.gross > 0.0 { r.relative_defect() } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

/// Forward model of one machine with one set of cooling profiles.
#[derive(Debug, Clone)]
pub struct Caster {
    material: Arc<MaterialProperties>,
    setup: CasterSetup,
    grids: MachineGrids,
    ingot_geom: PatchGeometry,
    wall_geom: PatchGeometry,
    section_geoms: Vec<PatchGeometry>,
    rect_geom: Option<PatchGeometry>,
    profiles: Vec<FaceProfiles>,
    rect_profiles: Option<FaceProfiles>,
}

fn face_profiles(alphas: &FaceAlphas, inner: &crate::geometry::NozzleRow, outer: &crate::geometry::NozzleRow) -> Result<FaceProfiles> {
    Ok(FaceProfiles {
        inner: ChtcProfile::new(alphas.inner.alpha_c, alphas.inner.alpha_p, inner)?,
        outer: ChtcProfile::new(alphas.outer.alpha_c, alphas.outer.alpha_p, outer)?,
    })
}

impl Caster {
    pub fn new(material: Arc<MaterialProperties>, setup: CasterSetup) -> Result<Self> {
        setup.validate()?;
        let grids = build_grids(&setup.layout, &setup.grid)?;
        let mg = &grids.mould;
        let ingot_geom = PatchGeometry::new(Metric::Cartesian, mg.ingot_x.clone(), mg.ingot_z.clone())?;
        let wall_geom = PatchGeometry::new(Metric::Cartesian, mg.wall_x.clone(), mg.wall_z.clone())?;
        let section_geoms = grids
            .curvilinear
            .iter()
            .map(|g| PatchGeometry::new(Metric::Polar, g.across.clone(), g.along.clone()))
            .collect::<Result<Vec<_>>>()?;
        let rect_geom = grids
            .rectilinear
            .as_ref()
            .map(|g| PatchGeometry::new(Metric::Cartesian, g.across.clone(), g.along.clone()))
            .transpose()?;
        let profiles = setup
            .layout
            .curvilinear
            .iter()
            .zip(&setup.cooling.curvilinear)
            .map(|(s, a)| face_profiles(a, &s.inner, &s.outer))
            .collect::<Result<Vec<_>>>()?;
        let rect_profiles = match (&setup.layout.rectilinear, &setup.cooling.rectilinear) {
            (Some(s), Some(a)) => Some(face_profiles(a, &s.inner, &s.outer)?),
            _ => None,
        };
        let (lo, hi) = material.domain();
        for t in [setup.pouring_temperature, setup.initial_steel()] {
            if !(t >= lo && t <= hi) {
                return Err(CoreError::Config(format!("steel temperature {t} K is outside the material tables {lo}..{hi} K")));
            }
        }
        let mut caster = Self { material, setup, grids, ingot_geom, wall_geom, section_geoms, rect_geom, profiles, rect_profiles };
        if !(caster.setup.grid.dt > 0.0) {
            caster.setup.grid.dt = caster.stable_dt();
        }
        Ok(caster)
    }

    /// 90 % of the smallest stability bound over the initial state and uniform
    /// states at both ends of the admissible temperature range.
    pub fn stable_dt(&self) -> f64 {
        let (lo, hi) = self.temperature_bounds();
        let mut states = vec![self.initial_state()];
        for t in [lo, hi] {
            let mut s = self.initial_state();
            let m = self.material.as_ref();
            let steel = |p: &Patch| Patch::uniform(p.geom.clone(), m, t.clamp(m.domain().0, m.domain().1));
            s.ingot = steel(&s.ingot);
            s.curvilinear = s.curvilinear.iter().map(steel).collect();
            s.rectilinear = s.rectilinear.as_ref().map(steel);
            s.wall = Patch::uniform(s.wall.geom.clone(), self.wall_medium(), t);
            s.water = vec![t; s.water.len()];
            states.push(s);
        }
        0.9 * states.iter().map(|s| self.admissible_dt(s)).fold(f64::INFINITY, f64::min)
    }

    pub fn material(&self) -> &MaterialProperties {
        &self.material
    }

    pub fn material_arc(&self) -> Arc<MaterialProperties> {
        self.material.clone()
    }

    pub fn setup(&self) -> &CasterSetup {
        &self.setup
    }

    pub fn grids(&self) -> &MachineGrids {
        &self.grids
    }

    pub fn profiles(&self, section: SectionId) -> Result<&FaceProfiles> {
        match section {
            SectionId::Curvilinear(m) if m >= 1 && m <= self.profiles.len() => Ok(&self.profiles[m - 1]),
            SectionId::Rectilinear if self.rect_profiles.is_some() => Ok(self.rect_profiles.as_ref().unwrap()),
            _ => Err(CoreError::Precondition(format!("section {section} has no spray cooling"))),
        }
    }

    pub fn set_profile(&mut self, section: SectionId, face: Face, profile: ChtcProfile) -> Result<()> {
        profile.validate()?;
        let slot = match section {
            SectionId::Curvilinear(m) if m >= 1 && m <= self.profiles.len() => &mut self.profiles[m - 1],
            SectionId::Rectilinear if self.rect_profiles.is_some() => self.rect_profiles.as_mut().unwrap(),
            _ => return Err(CoreError::Precondition(format!("section {section} has no spray cooling"))),
        };
        *slot.face_mut(face) = profile;
        Ok(())
    }

    /// Replaces only the baseline coefficient of one face.
    pub fn set_alpha_c(&mut self, section: SectionId, face: Face, alpha_c: f64) -> Result<()> {
        let p = self.profiles(section)?.face(face).with_alpha_c(alpha_c);
        self.set_profile(section, face, p)
    }

    fn wall_medium(&self) -> &dyn ThermalMedium {
        &self.setup.wall
    }

    pub fn initial_state(&self) -> SolverState {
        let m = self.material.as_ref();
        let t0 = self.setup.initial_steel();
        SolverState {
            tau: 0.0,
            ingot: Patch::uniform(self.ingot_geom.clone(), m, t0),
            wall: Patch::uniform(self.wall_geom.clone(), self.wall_medium(), self.setup.initial_wall()),
            water: vec![self.setup.water.initial; self.wall_geom.along.n],
            curvilinear: self.section_geoms.iter().map(|g| Patch::uniform(g.clone(), m, t0)).collect(),
            rectilinear: self.rect_geom.as_ref().map(|g| Patch::uniform(g.clone(), m, t0)),
            band_warnings: 0,
        }
    }

    fn band(&self) -> (f64, f64) {
        let m = &self.material;
        (m.t_kr() - m.dt_smear(), m.t_kr() + m.dt_smear())
    }

    fn speed(&self, tau: f64) -> f64 {
        self.setup.casting_speed.at(tau)
    }

    fn gap_flux(&self, t_wall: f64, t_steel: f64) -> (f64, f64) {
        let e = &self.setup.environment;
        let m = &self.setup.layout.mould;
        let q = e.lambda_gz / m.delta * (t_steel - t_wall)
            + e.sigma_n * ((t_steel / 100.0).powi(4) - (t_wall / 100.0).powi(4));
        let hot = t_steel.max(t_wall);
        let g = e.lambda_gz / m.delta + 4.0 * e.sigma_n * (hot / 100.0).powi(3) / 100.0;
        (q, g)
    }

    fn mould_boundaries(&self, s: &SolverState) -> (Boundaries, Boundaries) {
        let env = &self.setup.environment;
        let mr = self.grids.mould.meniscus_row;
        let ig = &self.ingot_geom;
        let (ni, nz) = (ig.across.n, ig.along.n);
        let mut bi = Boundaries::adiabatic(ig);
        let mut bw = Boundaries::adiabatic(&self.wall_geom);
        for k in 0..nz {
            let (q, g) = self.gap_flux(s.wall.t_at(0, k + mr), s.ingot.t_at(ni - 1, k));
            let area = ig.area_high(k);
            bi.high[k] = NodeBc::power(-q * area, g * area);
            bw.low[k + mr] = NodeBc::power(q * area, g * area);
        }
        let above = Exchange::new(env.alpha_4, env.t_os1, env.c_n, RadiationLaw::Hundredths4);
        for k in 0..mr {
            bw.low[k] = NodeBc::exchange(above);
        }
        if mr > 0 {
            bw.low[mr].exchange = Some(Exchange { area_fraction: 0.5, ..above });
        }
        let nw = self.wall_geom.across.n;
        for (k, bc) in bw.high.iter_mut().enumerate() {
            let _ = nw;
            *bc = NodeBc::exchange(Exchange::new(self.setup.water.alpha_1, s.water[k], 0.0, RadiationLaw::Kelvin4));
        }
        bw.start = vec![NodeBc::exchange(Exchange::new(env.alpha_3, env.t_os3, 0.0, RadiationLaw::Kelvin4)); nw];
        bw.end = vec![NodeBc::exchange(Exchange::new(env.alpha_2, env.t_os2, 0.0, RadiationLaw::Kelvin4)); nw];
        bi.advection = Some(Advection {
            speed: self.speed(s.tau),
            inflow_h: vec![self.material.enthalpy(self.setup.pouring_temperature); ni],
        });
        (bi, bw)
    }

    /// Exchange conditions on both faces of a spray-cooled section.
    fn spray_boundaries(
        &self,
        geom: &PatchGeometry,
        profiles: &FaceProfiles,
        env: &super::setup::SectionEnvironment,
        speed: f64,
        inflow_h: Vec<f64>,
    ) -> Boundaries {
        let coords = geom.along.coords();
        let mut b = Boundaries::adiabatic(geom);
        let inner = profiles.inner.profile_vector(&coords);
        let outer = profiles.outer.profile_vector(&coords);
        for k in 0..geom.along.n {
            b.low[k] = NodeBc::exchange(Exchange::new(inner[k], env.t_inner, env.c_inner, RadiationLaw::Kelvin4));
            b.high[k] = NodeBc::exchange(Exchange::new(outer[k], env.t_outer, env.c_outer, RadiationLaw::Kelvin4));
        }
        b.advection = Some(Advection { speed, inflow_h });
        b
    }

    /// Enthalpy column leaving the mould, mirrored onto the full thickness.
    fn mould_outflow(&self, s: &SolverState) -> Vec<f64> {
        let half = s.ingot.column_h(self.ingot_geom.along.n - 1);
        let n = half.len() - 1;
        (0..=2 * n).map(|j| half[j.abs_diff(n)]).collect()
    }

    fn section_inflow(&self, s: &SolverState, m: usize) -> Vec<f64> {
        if m == 0 {
            self.mould_outflow(s)
        } else {
            let p = &s.curvilinear[m - 1];
            p.column_h(p.geom.along.n - 1)
        }
    }

    fn section_boundaries(&self, s: &SolverState, m: usize) -> Boundaries {
        let sec = &self.setup.layout.curvilinear[m];
        let theta = sec.theta(self.speed(s.tau), self.setup.layout.mould.l);
        self.spray_boundaries(
            &self.section_geoms[m],
            &self.profiles[m],
            self.setup.environment.curvilinear_section(m + 1),
            theta,
            self.section_inflow(s, m),
        )
    }

    fn rect_boundaries(&self, s: &SolverState) -> Option<Boundaries> {
        let geom = self.rect_geom.as_ref()?;
        let inflow = self.section_inflow(s, self.section_geoms.len());
        Some(self.spray_boundaries(
            geom,
            self.rect_profiles.as_ref()?,
            self.setup.environment.rectilinear_section(),
            self.speed(s.tau),
            inflow,
        ))
    }

    /// Largest global step accepted by every patch in the current state.
    pub fn admissible_dt(&self, s: &SolverState) -> f64 {
        let m = self.material.as_ref();
        let (bi, bw) = self.mould_boundaries(s);
        let mut dt = s.ingot.admissible_dt(m, &bi).min(s.wall.admissible_dt(self.wall_medium(), &bw));
        for (i, p) in s.curvilinear.iter().enumerate() {
            dt = dt.min(p.admissible_dt(m, &self.section_boundaries(s, i)));
        }
        if let (Some(p), Some(b)) = (&s.rectilinear, self.rect_boundaries(s)) {
            dt = dt.min(p.admissible_dt(m, &b));
        }
        dt
    }

    fn note_band(&self, s: &mut SolverState, r: &StepReport) {
        if r.max_band_change > 0.5 * self.material.dt_smear() {
            if s.band_warnings == 0 {
                tracing::warn!(
                    change = r.max_band_change,
                    dt_smear = self.material.dt_smear(),
                    "latent band is under-resolved by the time step"
                );
            }
            s.band_warnings += 1;
        }
    }

    /// Advances ingot and wall; the water temperatures are read, not changed.
    pub fn step_mould(&self, s: &mut SolverState, dt: f64) -> Result<(StepReport, StepReport)> {
        let (bi, bw) = self.mould_boundaries(s);
        let m = self.material.clone();
        let ri = s.ingot.step(m.as_ref(), &bi, TimeStep::Global(dt), Some(self.band()))?;
        let rw = s.wall.step(self.wall_medium(), &bw, TimeStep::Global(dt), None)?;
        self.note_band(s, &ri);
        Ok((ri, rw))
    }

    /// Water flows from `z = Z` towards `z0`. Every node is found by following
    /// its characteristic back one step and relaxing exactly towards the local
    /// equilibrium temperature along the way.
    pub fn step_water(&self, s: &mut SolverState, dt: f64) -> Result<()> {
        let w = &self.setup.water;
        let nw = self.wall_geom.along.n;
        let dz = self.wall_geom.along.step;
        let jd = self.wall_geom.across.n - 1;
        // Node order along the flow: index i sits at distance i * dz from the inlet.
        let wall: Vec<f64> = (0..nw).map(|i| s.wall.t_at(jd, nw - 1 - i)).collect();
        let old: Vec<f64> = (0..nw).map(|i| s.water[nw - 1 - i]).collect();
        let g_wall = w.p_i * w.alpha_1;
        let g_ext = w.p_e * w.alpha_e;
        let inv_len = (g_wall + g_ext) / (w.c_w * w.s_ch * w.v_water);
        let t_eq = |seg: usize| {
            let t_wall = 0.5 * (wall[seg] + wall[seg + 1]);
            (g_wall * t_wall + g_ext * w.t_e) / (g_wall + g_ext)
        };
        // Between nodes the departure from equilibrium decays exponentially,
        // so it is interpolated geometrically; this keeps steady profiles exact.
        let interpolate = |old: &[f64], c: usize, f: f64, eq: f64| -> f64 {
            let (d0, d1) = (old[c] - eq, old[c + 1] - eq);
            if inv_len > 0.0 && d0 * d1 > 0.0 {
                eq + d0.signum() * d0.abs().powf(1.0 - f) * d1.abs().powf(f)
            } else {
                old[c] + f * (old[c + 1] - old[c])
            }
        };
        let relax = |mut t: f64, from: f64, to: f64| -> f64 {
            if inv_len == 0.0 {
                return t;
            }
            let first = ((from / dz).floor().max(0.0) as usize).min(nw - 2);
            for seg in first..nw - 1 {
                let a = from.max(seg as f64 * dz);
                let b = to.min((seg + 1) as f64 * dz);
                if b > a {
                    let eq = t_eq(seg);
                    t = eq + (t - eq) * (-(b - a) * inv_len).exp();
                }
                if b >= to {
                    break;
                }
            }
            t
        };
        let travel = w.v_water * dt;
        let mut new = vec![0.0; nw];
        for (i, slot) in new.iter_mut().enumerate() {
            let s_i = i as f64 * dz;
            *slot = if s_i <= travel {
                let entered = s.tau + dt - s_i / w.v_water;
                relax(w.inlet.at(entered), 0.0, s_i)
            } else {
                let s0 = s_i - travel;
                let c = ((s0 / dz).floor() as usize).min(nw - 2);
                let f = s0 / dz - c as f64;
                relax(interpolate(&old, c, f, t_eq(c)), s0, s_i)
            };
        }
        if new.iter().any(|t| !t.is_finite()) {
            return Err(CoreError::Numeric("non-finite water temperature".into()));
        }
        for (i, t) in new.into_iter().enumerate() {
            s.water[nw - 1 - i] = t;
        }
        Ok(())
    }

    pub fn step_curvilinear(&self, s: &mut SolverState, m: usize, dt: f64) -> Result<StepReport> {
        if m == 0 || m > self.section_geoms.len() {
            return Err(CoreError::Precondition(format!("machine has no curvilinear section {m}")));
        }
        let b = self.section_boundaries(s, m - 1);
        let mat = self.material.clone();
        let r = s.curvilinear[m - 1].step(mat.as_ref(), &b, TimeStep::Global(dt), Some(self.band()))?;
        self.note_band(s, &r);
        Ok(r)
    }

    pub fn step_rectilinear(&self, s: &mut SolverState, dt: f64) -> Result<Option<StepReport>> {
        let Some(b) = self.rect_boundaries(s) else { return Ok(None) };
        let mat = self.material.clone();
        let band = self.band();
        let r = s.rectilinear.as_mut().expect("state matches caster").step(mat.as_ref(), &b, TimeStep::Global(dt), Some(band))?;
        self.note_band(s, &r);
        Ok(Some(r))
    }

    /// One step of the whole machine in casting order.
    pub fn step(&self, s: &mut SolverState, dt: f64) -> Result<MachineAudit> {
        let (ingot, wall) = self.step_mould(s, dt)?;
        self.step_water(s, dt)?;
        let mut curvilinear = Vec::with_capacity(self.section_geoms.len());
        for m in 1..=self.section_geoms.len() {
            curvilinear.push(self.step_curvilinear(s, m, dt)?);
        }
        let rectilinear = self.step_rectilinear(s, dt)?;
        s.tau += dt;
        Ok(MachineAudit { ingot, wall, curvilinear, rectilinear })
    }

    /// Steps with the configured `dt` until `tau_end`, landing exactly on every
    /// multiple of `sample_interval`, where `on_sample` receives the state and
    /// the audit accumulated since the previous sample.
    pub fn run_to_time(
        &self,
        s: &mut SolverState,
        tau_end: f64,
        sample_interval: Option<f64>,
        mut on_sample: impl FnMut(&SolverState, &MachineAudit) -> Result<()>,
    ) -> Result<MachineAudit> {
        if !(tau_end >= s.tau) {
            return Err(CoreError::Precondition(format!("end time {tau_end} precedes current time {}", s.tau)));
        }
        if let Some(iv) = sample_interval {
            if !(iv > 0.0) {
                return Err(CoreError::Config("sampling interval must be > 0".into()));
            }
        }
        let dt = self.setup.grid.dt;
        let eps = 1e-9 * dt;
        let mut total = MachineAudit::default();
        let mut interval = MachineAudit::default();
        let next_sample = |tau: f64| sample_interval.map(|iv| ((tau + eps) / iv).floor() * iv + iv);
        let mut target = next_sample(s.tau);
        while s.tau < tau_end - eps {
            let mut h = dt.min(tau_end - s.tau);
            if let Some(t) = target {
                h = h.min(t - s.tau);
            }
            let a = self.step(s, h)?;
            interval.accumulate(&a);
            if let Some(t) = target {
                if (s.tau - t).abs() <= eps {
                    s.tau = t;
                    on_sample(s, &interval)?;
                    total.accumulate(&interval);
                    interval = MachineAudit::default();
                    target = next_sample(s.tau);
                }
            }
        }
        total.accumulate(&interval);
        Ok(total)
    }

    /// `(coordinate, T)` along one cooled face, in casting order. The mould
    /// surface is the ingot side of the gap.
    pub fn surface_temperature_profile(&self, s: &SolverState, section: SectionId, face: Face) -> Result<Vec<(f64, f64)>> {
        let (patch, j) = self.surface_line(s, section, face)?;
        Ok(patch.geom.along.coords().into_iter().zip(patch.row(j)).collect())
    }

    fn surface_line<'a>(&self, s: &'a SolverState, section: SectionId, face: Face) -> Result<(&'a Patch, usize)> {
        let p = self.patch(s, section)?;
        let n = p.geom.across.n - 1;
        Ok(match (section, face) {
            (SectionId::Mould, _) => (p, n),
            (_, Face::Inner) => (p, 0),
            (_, Face::Outer) => (p, n),
        })
    }

    pub fn patch<'a>(&self, s: &'a SolverState, section: SectionId) -> Result<&'a Patch> {
        self.setup.layout.section(section)?;
        Ok(match section {
            SectionId::Mould => &s.ingot,
            SectionId::Curvilinear(m) => &s.curvilinear[m - 1],
            SectionId::Rectilinear => s.rectilinear.as_ref().expect("layout checked"),
        })
    }

    /// Enthalpy of the material entering a section at its upstream edge.
    pub fn inflow_enthalpy(&self, s: &SolverState, section: SectionId) -> Result<Vec<f64>> {
        self.setup.layout.section(section)?;
        Ok(match section {
            SectionId::Mould => vec![self.material.enthalpy(self.setup.pouring_temperature); self.ingot_geom.across.n],
            SectionId::Curvilinear(m) => self.section_inflow(s, m - 1),
            SectionId::Rectilinear => self.section_inflow(s, self.section_geoms.len()),
        })
    }

    /// Withdrawal speed along a section's `along` axis (rad/s on curved sections).
    pub fn along_speed(&self, section: SectionId, tau: f64) -> f64 {
        match section {
            SectionId::Curvilinear(m) => self.setup.layout.curvilinear[m - 1].theta(self.speed(tau), self.setup.layout.mould.l),
            _ => self.speed(tau),
        }
    }

    /// Locates the `T_kr` isotherm on every through-thickness line of a
    /// section. With `previous` from an earlier extraction of the same
    /// section, each sample also carries its Stefan residual.
    pub fn extract_front(&self, s: &SolverState, section: SectionId, previous: Option<&PhaseFront>) -> Result<FrontResult> {
        let p = self.patch(s, section)?;
        let mat = self.material.as_ref();
        let t_kr = mat.t_kr();
        let across = p.geom.across.coords();
        let along = p.geom.along.coords();
        let two_sided = section != SectionId::Mould;
        let lines: Vec<Vec<f64>> = (0..along.len()).map(|k| p.column(k)).collect();
        // Mould lines start at the surface (largest x); sections are scanned from both faces.
        let first: Vec<Option<_>> = lines.iter().map(|t| locate_crossing(&across, t, t_kr, two_sided)).collect();
        let second: Vec<Option<_>> = lines
            .iter()
            .map(|t| if two_sided { locate_crossing(&across, t, t_kr, false) } else { None })
            .collect();
        if first.iter().chain(&second).all(Option::is_none) {
            return Ok(FrontResult::NoFront);
        }
        let prev = previous.filter(|f| f.section == section && f.samples.len() == along.len() && f.tau < s.tau);
        let latent = mat.mu() * mat.rho_kr();
        let u = self.along_speed(section, s.tau);
        let material_rate = |branch: &[Option<super::front::Crossing>], k: usize, old: Option<f64>| -> Option<f64> {
            let pf = prev?;
            let xi = branch[k]?.xi;
            let dxdt = (xi - old?) / (s.tau - pf.tau);
            let at = |i: usize| branch.get(i).copied().flatten().map(|c| c.xi);
            let slope = match (k.checked_sub(1).and_then(at), at(k + 1)) {
                (Some(a), Some(b)) => (b - a) / (along[k + 1] - along[k - 1]),
                (None, Some(b)) => (b - xi) / (along[k + 1] - along[k]),
                (Some(a), None) => (xi - a) / (along[k] - along[k - 1]),
                (None, None) => 0.0,
            };
            Some(dxdt + u * slope)
        };
        let lambda = |t: f64| mat.conductivity(t);
        let samples = (0..along.len())
            .map(|k| {
                let residual = |branch: &[Option<super::front::Crossing>], old: Option<f64>| {
                    let c = branch[k]?;
                    let rate = material_rate(branch, k, old)?;
                    // The solid grows when the front moves towards the liquid.
                    stefan_residual(&across, &lines[k], &c, lambda, latent, rate * c.direction())
                };
                let old1 = prev.and_then(|f| f.samples[k].xi);
                let old2 = prev.and_then(|f| f.samples[k].xi2);
                FrontSample {
                    coord: along[k],
                    xi: first[k].map(|c| c.xi),
                    xi2: second[k].map(|c| c.xi),
                    stefan: residual(&first, old1),
                    stefan2: residual(&second, old2),
                }
            })
            .collect();
        Ok(FrontResult::Front(PhaseFront { section, tau: s.tau, samples }))
    }

    /// Lowest and highest temperature the maximum principle allows.
    pub fn temperature_bounds(&self) -> (f64, f64) {
        let st = &self.setup;
        let w = &st.water;
        let mut lo = st.environment.min_temperature().min(w.inlet.min()).min(w.initial).min(st.initial_wall());
        if w.alpha_e > 0.0 {
            lo = lo.min(w.t_e);
        }
        let hi = st.pouring_temperature.max(st.initial_steel()).max(st.initial_wall()).max(w.inlet.max()).max(w.initial);
        (lo, hi)
    }

    /// Fails when any nodal temperature leaves [`Caster::temperature_bounds`].
    pub fn check_bounds(&self, s: &SolverState) -> Result<()> {
        let (lo, hi) = self.temperature_bounds();
        let tol = 1e-6;
        for (label, p) in labelled_patches(s) {
            for &t in p.temperatures() {
                if !(t >= lo - tol && t <= hi + tol) {
                    return Err(CoreError::Numeric(format!("{label}: temperature {t} K outside [{lo}, {hi}] K")));
                }
            }
        }
        if let Some(t) = s.water.iter().find(|t| !(**t >= lo - tol && **t <= hi + tol)) {
            return Err(CoreError::Numeric(format!("water temperature {t} K outside [{lo}, {hi}] K")));
        }
        Ok(())
    }
}

fn labelled_patches(s: &SolverState) -> Vec<(String, &Patch)> {
    let mut v = vec![("mould".to_string(), &s.ingot), ("mould_wall".to_string(), &s.wall)];
    v.extend(s.curvilinear.iter().enumerate().map(|(m, p)| (format!("curvilinear{}", m + 1), p)));
    v.extend(s.rectilinear.iter().map(|p| ("rectilinear".to_string(), p)));
    v
}

/// Nodal temperatures as CSV with columns `section,i,j,coord1,coord2,T`,
/// where `i`/`coord1` run along the strand and `j`/`coord2` across it.
pub fn write_field_csv(s: &SolverState, mut out: impl Write) -> Result<()> {
    writeln!(out, "section,i,j,coord1,coord2,T")?;
    for (label, p) in labelled_patches(s) {
        let (across, along) = (&p.geom.across, &p.geom.along);
        for i in 0..along.n {
            for j in 0..across.n {
                writeln!(out, "{label},{i},{j},{},{},{}", along.coord(i), across.coord(j), p.t_at(j, i))?;
            }
        }
    }
    Ok(())
}

/// Fronts as CSV with columns `section,coord,xi`. Fronts grown from the outer
/// face of a section are labelled `<section>/outer`.
pub fn write_front_csv(fronts: &[FrontResult], mut out: impl Write) -> Result<()> {
    writeln!(out, "section,coord,xi")?;
    for f in fronts.iter().filter_map(FrontResult::front) {
        for (suffix, pick) in [("", 0), ("/outer", 1)] {
            for smp in &f.samples {
                let xi = if pick == 0 { smp.xi } else { smp.xi2 };
                if let Some(xi) = xi {
                    writeln!(out, "{}{suffix},{},{xi}", f.section, smp.coord)?;
                }
            }
        }
    }
    Ok(())
}
