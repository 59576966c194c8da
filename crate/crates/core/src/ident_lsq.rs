//! Initial adjustment: `(alpha_c, alpha_p)` from one measured surface
//! temperature profile.
//!
//! Subsurface temperatures come from a steady reconstruction of the section
//! with the measured surface temperatures held fixed; the boundary condition
//! then yields one flux sample `P = alpha Q` per surface node, and both
//! parameters follow from closed-form least squares.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chtc::ChtcProfile;
use crate::error::{CoreError, Result};
use crate::geometry::{Axis, Face, Membership, SectionId, SurfaceGrid};
use crate::material::ThermalMedium;
use crate::solver::{Advection, Boundaries, Caster, Metric, Patch, PatchGeometry, SolverState};

/// Samples with `|Q|` below this carry no information and are dropped.
pub const MIN_ABS_Q: f64 = 1e-6;

/// Measured surface temperatures of one section, one value per surface node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMeasurements {
    pub inner: Vec<f64>,
    /// When present the reconstruction spans the full thickness; otherwise
    /// it covers the inner half with a symmetry plane in the middle.
    #[serde(default)]
    pub outer: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteriorOptions {
    /// Converged when no node moves by more than this in one sweep [K].
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Share of the local explicit stability limit used as pseudo-time step
    /// for the terms not treated implicitly.
    pub fraction: f64,
    /// Optional heat release per node [W per unit depth], for verification.
    #[serde(skip)]
    pub source: Option<Vec<f64>>,
    /// Initial guess for the reconstructed field, one temperature per node;
    /// typically a previous solution for nearby measurements.
    #[serde(skip)]
    pub warm_start: Option<Vec<f64>>,
}

impl Default for InteriorOptions {
    fn default() -> Self {
        Self { tolerance: 1e-7, max_iterations: 400_000, fraction: 1.0, source: None, warm_start: None }
    }
}

/// Steady subsurface field behind the measured faces.
#[derive(Debug, Clone)]
pub struct InteriorSolution {
    pub patch: Patch,
    pub iterations: usize,
    pub residual: f64,
    full_thickness: bool,
}

impl InteriorSolution {
    /// `[T_0, T_1, T_2]` per surface node, counted inwards from `face`.
    pub fn stencil(&self, face: Face) -> Result<Vec<[f64; 3]>> {
        let n = self.patch.geom.across.n;
        let js = match face {
            Face::Inner => [0, 1, 2],
            Face::Outer if self.full_thickness => [n - 1, n - 2, n - 3],
            Face::Outer => {
                return Err(CoreError::Precondition("outer face was not measured; no stencil available".into()))
            }
        };
        Ok((0..self.patch.geom.along.n).map(|k| js.map(|j| self.patch.t_at(j, k))).collect())
    }

    pub fn grid_step(&self) -> f64 {
        self.patch.geom.across.step
    }
}

fn check_values(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(CoreError::Precondition(format!("{what}: {} measured values for {n} surface nodes", v.len())));
    }
    if let Some(i) = v.iter().position(|t| !t.is_finite() || *t <= 0.0) {
        return Err(CoreError::Precondition(format!("{what}: surface node {i} has no valid measurement")));
    }
    Ok(())
}

/// Marches the steady advection-diffusion enthalpy balance of `section` to
/// convergence with the measured temperatures pinned on the surface. The
/// inflow edge and the initial guess come from `snapshot`.
pub fn solve_interior_dirichlet(
    caster: &Caster,
    snapshot: &SolverState,
    section: SectionId,
    measured: &SurfaceMeasurements,
    opts: &InteriorOptions,
) -> Result<InteriorSolution> {
    if section == SectionId::Mould {
        return Err(CoreError::Precondition("identification needs a spray-cooled section".into()));
    }
    let model = caster.patch(snapshot, section)?;
    let (across, along) = (&model.geom.across, &model.geom.along);
    check_values("inner face", &measured.inner, along.n)?;
    if let Some(o) = &measured.outer {
        check_values("outer face", o, along.n)?;
    }
    let full = measured.outer.is_some();
    let na = if full { across.n } else { across.n / 2 + 1 };
    let metric = if matches!(section, SectionId::Curvilinear(_)) { Metric::Polar } else { Metric::Cartesian };
    let geom = PatchGeometry::new(metric, Axis { n: na, ..across.clone() }, along.clone())?;
    let mat = caster.material();
    let mut patch = Patch::uniform(geom, mat, model.t_at(0, 0));
    if let Some(w) = &opts.warm_start {
        if w.len() != patch.geom.len() {
            return Err(CoreError::Precondition("warm start must have one entry per node".into()));
        }
    }
    for k in 0..along.n {
        for j in 0..na {
            let t = match &opts.warm_start {
                Some(w) => w[patch.geom.idx(j, k)],
                None => model.t_at(j, k),
            };
            patch.set(mat, j, k, t);
        }
        patch.fix(mat, 0, k, measured.inner[k]);
        if let Some(o) = &measured.outer {
            patch.fix(mat, na - 1, k, o[k]);
        }
    }
    let mut bc = Boundaries::adiabatic(&patch.geom);
    let mut inflow = caster.inflow_enthalpy(snapshot, section)?;
    inflow.truncate(na);
    bc.advection = Some(Advection { speed: caster.along_speed(section, snapshot.tau), inflow_h: inflow });
    if let Some(src) = &opts.source {
        if src.len() != patch.geom.len() {
            return Err(CoreError::Precondition("source must have one entry per node".into()));
        }
        bc.source = Some(src.clone());
    }
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        residual = patch.relax(mat, &bc, opts.fraction)?;
        if residual < opts.tolerance {
            return Ok(InteriorSolution { patch, iterations: it, residual, full_thickness: full });
        }
    }
    Err(CoreError::NotConverged { iterations: opts.max_iterations, residual })
}

/// Per-node boundary-condition samples `P_i = alpha_i Q_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSamples {
    pub coords: Vec<f64>,
    pub membership: Vec<Membership>,
    /// Conductive plus radiative flux term [W/m^2].
    pub p: Vec<f64>,
    /// `T_env - T_0` [K].
    pub q: Vec<f64>,
    /// Offset from the nozzle axis, for nodes under a footprint.
    pub y: Vec<Option<f64>>,
}

impl FluxSamples {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    fn select(&self, keep: impl Fn(&Membership) -> bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..self.len() {
            if keep(&self.membership[i]) {
                out.0.push(self.p[i]);
                out.1.push(self.q[i]);
                out.2.push(self.y[i].unwrap_or(0.0));
            }
        }
        out
    }
}

/// Exchange constants of the measured face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceEnvironment {
    pub t_env: f64,
    pub c_rad: f64,
}

/// `P_i = lambda(T_0)(T_2 - 4T_1 + 3T_0)/(2q) - C(T_env^4 - T_0^4)`, `Q_i = T_env - T_0`.
pub fn flux_samples(
    stencil: &[[f64; 3]],
    medium: &dyn ThermalMedium,
    env: FaceEnvironment,
    q: f64,
    surface: &SurfaceGrid,
) -> FluxSamples {
    let (p, qs) = stencil
        .iter()
        .map(|&[t0, t1, t2]| {
            let conduction = medium.conductivity(t0) * (t2 - 4.0 * t1 + 3.0 * t0) / (2.0 * q);
            (conduction - env.c_rad * (env.t_env.powi(4) - t0.powi(4)), env.t_env - t0)
        })
        .unzip();
    FluxSamples {
        coords: surface.coords.clone(),
        membership: surface.membership.clone(),
        p,
        q: qs,
        y: surface.membership.iter().map(Membership::offset).collect(),
    }
}

/// Result of one closed-form fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub value: f64,
    pub used: usize,
    /// Samples dropped because `|Q| < MIN_ABS_Q`.
    pub excluded: usize,
}

/// `alpha_c = sum(Q P) / sum(Q^2)`.
pub fn least_squares_alpha_c(p: &[f64], q: &[f64]) -> Result<Fit> {
    let (mut qp, mut qq, mut used) = (0.0, 0.0, 0);
    for (&p, &q) in p.iter().zip(q) {
        if q.abs() >= MIN_ABS_Q {
            qp += q * p;
            qq += q * q;
            used += 1;
        }
    }
    if qq == 0.0 {
        return Err(CoreError::Degenerate("no informative sample: the surface is at ambient temperature".into()));
    }
    Ok(Fit { value: qp / qq, used, excluded: p.len() - used })
}

/// Minimizer of `sum (P - Q(alpha_c + alpha_p g))^2` with `g = 1 - y^2/w^2`.
pub fn least_squares_alpha_p(p: &[f64], q: &[f64], y: &[f64], alpha_c: f64, w: f64) -> Result<Fit> {
    let (mut num, mut den, mut used) = (0.0, 0.0, 0);
    for ((&p, &q), &y) in p.iter().zip(q).zip(y) {
        if q.abs() >= MIN_ABS_Q {
            let f = y * y / (w * w) - 1.0;
            num += alpha_c * q * q * f - p * q * f;
            den += q * q * f * f;
            used += 1;
        }
    }
    if den == 0.0 {
        return Err(CoreError::Degenerate(
            "no informative footprint sample: all lie on footprint edges or at ambient temperature".into(),
        ));
    }
    Ok(Fit { value: num / den, used, excluded: p.len() - used })
}

pub fn fit_alpha_c(samples: &FluxSamples) -> Result<Fit> {
    let (p, q, _) = samples.select(|m| !m.is_b());
    if p.is_empty() {
        return Err(CoreError::Degenerate(
            "no surface node lies outside the nozzle footprints; widen the grid or the section".into(),
        ));
    }
    least_squares_alpha_c(&p, &q)
}

pub fn fit_alpha_p(samples: &FluxSamples, alpha_c: f64, w: f64) -> Result<Fit> {
    let (p, q, y) = samples.select(Membership::is_b);
    least_squares_alpha_p(&p, &q, &y, alpha_c, w)
}

/// Pointwise `alpha_i = P_i / Q_i`; `None` where `|Q_i|` is too small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectReversion {
    pub alphas: Vec<Option<f64>>,
    pub excluded: usize,
}

impl DirectReversion {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.alphas.iter().flatten().copied()
    }
}

pub fn direct_reversion(samples: &FluxSamples) -> DirectReversion {
    let alphas: Vec<Option<f64>> =
        samples.p.iter().zip(&samples.q).map(|(p, q)| (q.abs() >= MIN_ABS_Q).then(|| p / q)).collect();
    let excluded = alphas.iter().filter(|a| a.is_none()).count();
    DirectReversion { alphas, excluded }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyOptions {
    pub face: Face,
    pub interior: InteriorOptions,
}

/// Outcome of the full identification pipeline for one face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub section: SectionId,
    pub face: Face,
    pub profile: ChtcProfile,
    pub alpha_c: Fit,
    pub alpha_p: Fit,
    /// Root-mean-square misfit `P - alpha Q` over the samples used [W/m^2].
    pub residual_norm: f64,
    /// `alpha_p` is within 2 % of `alpha_c`: the data show no spray enhancement.
    pub no_enhancement: bool,
    pub samples: FluxSamples,
    pub direct: DirectReversion,
    pub interior_iterations: usize,
}

pub fn identify(
    caster: &Caster,
    snapshot: &SolverState,
    section: SectionId,
    measured: &SurfaceMeasurements,
    opts: &IdentifyOptions,
) -> Result<Identification> {
    let grid = caster
        .grids()
        .section(section)
        .ok_or_else(|| CoreError::Precondition(format!("section {section} has no spray cooling")))?;
    let surface = grid.surface(opts.face);
    if surface.k_count() == 0 {
        return Err(CoreError::Degenerate(
            "nozzle footprints cover every surface node; widen the grid or the section".into(),
        ));
    }
    let interior = solve_interior_dirichlet(caster, snapshot, section, measured, &opts.interior)?;
    let stencil = interior.stencil(opts.face)?;
    let env = section_face_environment(caster, section, opts.face);
    let samples = flux_samples(&stencil, caster.material(), env, interior.grid_step(), surface);
    let fc = fit_alpha_c(&samples)?;
    let w = caster.profiles(section)?.face(opts.face).w;
    let fp = fit_alpha_p(&samples, fc.value, w)?;
    let row = match section {
        SectionId::Curvilinear(m) => caster.setup().layout.curvilinear[m - 1].row(opts.face).clone(),
        _ => caster.setup().layout.rectilinear.as_ref().expect("section exists").row(opts.face).clone(),
    };
    let profile = ChtcProfile { alpha_c: fc.value, alpha_p: fp.value, w: row.w, nozzles: row.nozzles };
    let misfit: Vec<f64> = (0..samples.len())
        .filter(|&i| samples.q[i].abs() >= MIN_ABS_Q)
        .map(|i| samples.p[i] - profile.alpha_for(samples.membership[i]) * samples.q[i])
        .collect();
    let residual_norm = (misfit.iter().map(|r| r * r).sum::<f64>() / misfit.len().max(1) as f64).sqrt();
    Ok(Identification {
        section,
        face: opts.face,
        no_enhancement: fp.value.abs() <= 0.02 * fc.value.abs(),
        direct: direct_reversion(&samples),
        profile,
        alpha_c: fc,
        alpha_p: fp,
        residual_norm,
        samples,
        interior_iterations: interior.iterations,
    })
}

/// Environment temperature and radiation coefficient seen by one face.
pub fn section_face_environment(caster: &Caster, section: SectionId, face: Face) -> FaceEnvironment {
    let env = &caster.setup().environment;
    let e = match section {
        SectionId::Curvilinear(m) => env.curvilinear_section(m),
        _ => env.rectilinear_section(),
    };
    match face {
        Face::Inner => FaceEnvironment { t_env: e.t_inner, c_rad: e.c_inner },
        Face::Outer => FaceEnvironment { t_env: e.t_outer, c_rad: e.c_outer },
    }
}

impl Identification {
    /// Per-node report with columns `coord,membership,P,Q,y,alpha_direct`.
    pub fn write_report_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "coord,membership,P,Q,y,alpha_direct")?;
        let s = &self.samples;
        for i in 0..s.len() {
            let set = if s.membership[i].is_b() { "B" } else { "K" };
            let y = s.y[i].map(|v| v.to_string()).unwrap_or_default();
            let a = self.direct.alphas[i].map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{set},{},{},{y},{a}", s.coords[i], s.p[i], s.q[i])?;
        }
        Ok(())
    }

    pub fn summary(&self) -> IdentificationSummary {
        IdentificationSummary {
            section: self.section,
            face: self.face,
            alpha_c: self.profile.alpha_c,
            alpha_p: self.profile.alpha_p,
            w: self.profile.w,
            residual_norm: self.residual_norm,
            samples_k: self.alpha_c.used,
            samples_b: self.alpha_p.used,
            excluded: self.alpha_c.excluded + self.alpha_p.excluded,
            no_enhancement: self.no_enhancement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSummary {
    pub section: SectionId,
    pub face: Face,
    pub alpha_c: f64,
    pub alpha_p: f64,
    pub w: f64,
    pub residual_norm: f64,
    pub samples_k: usize,
    pub samples_b: usize,
    pub excluded: usize,
    pub no_enhancement: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NozzleRow;
    use crate::material::ConstantMedium;

    fn surface(coords: Vec<f64>, row: &NozzleRow) -> SurfaceGrid {
        let membership = coords.iter().map(|&s| row.classify(s)).collect();
        SurfaceGrid { coords, membership }
    }

    #[test]
    fn flux_sample_arithmetic() {
        let m = ConstantMedium { capacity: 1.0, lambda: 30.0 };
        let row = NozzleRow::empty(0.05);
        let s = flux_samples(
            &[[1200.0, 1210.0, 1218.0], [300.0; 3]],
            &m,
            FaceEnvironment { t_env: 300.0, c_rad: 0.0 },
            0.01,
            &surface(vec![0.0, 0.1], &row),
        );
        assert!((s.p[0] + 33_000.0).abs() < 1e-9);
        assert_eq!(s.q[0], -900.0);
        assert_eq!((s.p[1], s.q[1]), (0.0, 0.0));
        let c = 4.5e-8;
        let r = flux_samples(
            &[[1200.0, 1210.0, 1218.0]],
            &m,
            FaceEnvironment { t_env: 300.0, c_rad: c },
            0.01,
            &surface(vec![0.0], &row),
        );
        assert_eq!(r.p[0], s.p[0] - c * (300f64.powi(4) - 1200f64.powi(4)));
    }

    #[test]
    fn closed_forms_on_consistent_data() {
        assert_eq!(least_squares_alpha_c(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap().value, 2.0);
        assert_eq!(least_squares_alpha_c(&[5.0], &[2.0]).unwrap().value, 2.5);
        let f = least_squares_alpha_p(&[5.0, 4.25], &[1.0, 1.0], &[0.0, 0.5], 2.0, 1.0).unwrap();
        assert!((f.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_reported() {
        let e = least_squares_alpha_c(&[1.0, 2.0], &[0.0, 0.0]).unwrap_err();
        assert_eq!(e.kind(), crate::error::ErrorKind::Degenerate);
        let e = least_squares_alpha_p(&[1.0, 2.0], &[1.0, 1.0], &[1.0, -1.0], 2.0, 1.0).unwrap_err();
        assert_eq!(e.kind(), crate::error::ErrorKind::Degenerate);
    }

    #[test]
    fn tiny_q_is_excluded() {
        let f = least_squares_alpha_c(&[2.0, 1.0], &[1.0, 1e-9]).unwrap();
        assert_eq!((f.value, f.used, f.excluded), (2.0, 1, 1));
    }

    #[test]
    fn direct_reversion_is_pointwise() {
        let row = NozzleRow::empty(0.05);
        let s = FluxSamples {
            p: vec![2.0, 4.0, 6.0, 1.0],
            q: vec![1.0, 2.0, 3.0, 0.0],
            y: vec![None; 4],
            ..flux_samples(&[[0.0; 3]; 4], &ConstantMedium::copper(), FaceEnvironment { t_env: 0.0, c_rad: 0.0 }, 1.0, &surface(vec![0.0, 1.0, 2.0, 3.0], &row))
        };
        let d = direct_reversion(&s);
        assert_eq!(d.alphas, vec![Some(2.0), Some(2.0), Some(2.0), None]);
        assert_eq!(d.excluded, 1);
    }
}
