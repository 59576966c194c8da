//! Synthetic experiments: ground-truth forward runs, noisy measurement
//! streams, identification round trips and tuning sweeps.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]; noise
//! comes from a seeded ChaCha generator, so reruns produce byte-identical
//! artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{Face, Membership, SectionId};
use crate::ident_lsq::{identify, solve_interior_dirichlet, Identification, IdentificationSummary, IdentifyOptions, InteriorOptions, SurfaceMeasurements};
use crate::ident_sa::{
    check_stop, run_tuning, sa_step, step_size, CasterTap, MeasurementSample, SaState, StepSequence, StopDecision, StopRule,
    Trajectory, TrajectoryPoint, TunedModel, TuningLimits,
};
use crate::material::{MaterialProperties, MaterialSpec};
use crate::solver::{write_field_csv, write_front_csv, AlphaPair, Caster, CasterSetup, FrontResult, MachineAudit, PhaseFront, SolverState};

/// Named text output of an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

impl Artifact {
    fn new(name: impl Into<String>, content: impl Into<String>) -> Self {
        Self { name: name.into(), content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    /// Zero-mean uniform with standard deviation `sigma`.
    Uniform,
}

/// Additive zero-mean telemetry error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub distribution: NoiseDistribution,
    /// Standard deviation [K].
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { distribution: NoiseDistribution::Gaussian, sigma: 3.0, seed: 7 }
    }
}

impl NoiseModel {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self { distribution: NoiseDistribution::Gaussian, sigma, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CoreError::Config(format!("noise sigma {} must be finite and >= 0", self.sigma)));
        }
        Ok(())
    }

    /// Independent sub-stream `stream` of the seeded generator.
    pub fn stream(&self, stream: u64) -> Result<NoiseStream> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        Ok(NoiseStream { rng, model: *self })
    }
}

pub struct NoiseStream {
    rng: ChaCha8Rng,
    model: NoiseModel,
}

impl NoiseStream {
    pub fn sample(&mut self) -> f64 {
        let s = self.model.sigma;
        if s == 0.0 {
            return 0.0;
        }
        match self.model.distribution {
            NoiseDistribution::Gaussian => Normal::new(0.0, s).expect("sigma validated").sample(&mut self.rng),
            NoiseDistribution::Uniform => {
                let h = s * 3f64.sqrt();
                Uniform::new(-h, h).expect("sigma validated").sample(&mut self.rng)
            }
        }
    }
}

impl Iterator for NoiseStream {
    type Item = f64;
    fn next(&mut self) -> Option<f64> {
        Some(self.sample())
    }
}

/// Which surface nodes are read, how often and how many times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub section: SectionId,
    pub face: Face,
    pub nodes: Vec<usize>,
    /// Time between readings [s].
    pub interval: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub tau: f64,
    pub values: Vec<f64>,
}

/// Advances `state` with the truth model and reads the planned nodes after
/// every interval, adding noise from stream 0 in plan order.
pub fn synthesize_measurements(
    caster: &Caster,
    state: &mut SolverState,
    plan: &SamplingPlan,
    noise: &NoiseModel,
    audit: &mut AuditTracker,
) -> Result<Vec<MeasurementRecord>> {
    if !(plan.interval > 0.0) {
        return Err(CoreError::Config("sampling interval must be > 0".into()));
    }
    let mut rng = noise.stream(0)?;
    let mut out = Vec::with_capacity(plan.count);
    for _ in 0..plan.count {
        let end = state.tau + plan.interval;
        caster.run_to_time(state, end, Some(plan.interval), |s, a| audit.record(caster, s, a))?;
        let profile = caster.surface_temperature_profile(state, plan.section, plan.face)?;
        let values = plan
            .nodes
            .iter()
            .map(|&i| {
                profile
                    .get(i)
                    .map(|p| p.1 + rng.sample())
                    .ok_or_else(|| CoreError::Precondition(format!("sampling node {i} is outside the section")))
            })
            .collect::<Result<_>>()?;
        out.push(MeasurementRecord { tau: state.tau, values });
    }
    Ok(out)
}

/// Worst energy defect and bound check over reporting intervals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditTracker {
    pub intervals: usize,
    pub worst_defect: f64,
}

impl AuditTracker {
    pub fn record(&mut self, caster: &Caster, s: &SolverState, a: &MachineAudit) -> Result<()> {
        caster.check_bounds(s)?;
        self.intervals += 1;
        self.worst_defect = self.worst_defect.max(a.worst_defect());
        Ok(())
    }

    pub fn merge(&mut self, o: &AuditTracker) {
        self.intervals += o.intervals;
        self.worst_defect = self.worst_defect.max(o.worst_defect);
    }
}

/// The section, face and tuning point under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    pub section: SectionId,
    pub face: Face,
    /// Along-strand coordinate of the single tuning measurement.
    pub tap: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self { section: SectionId::Curvilinear(1), face: Face::Inner, tap: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyExperiment {
    /// Through-thickness step for identification runs; the machine grid when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Time step of identification runs; zero or negative picks it automatically.
    pub dt: f64,
    /// Casting time before the profile is read [s].
    pub settle: f64,
    pub noise: NoiseModel,
    /// Noise realisations in the scatter study.
    pub seeds: usize,
    /// Coefficients the identification model starts from.
    pub prior: AlphaPair,
    /// Use the opposite face as well and reconstruct the full thickness.
    pub measure_outer: bool,
    pub interior: InteriorOptions,
}

impl Default for IdentifyExperiment {
    fn default() -> Self {
        Self {
            q: Some(0.00125),
            dt: 0.0,
            settle: 400.0,
            noise: NoiseModel::gaussian(5.0, 11),
            seeds: 100,
            prior: AlphaPair { alpha_c: 400.0, alpha_p: 400.0 },
            measure_outer: false,
            interior: InteriorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningExperiment {
    /// Time between measurements [s].
    pub interval: f64,
    /// Casting time before tuning starts [s].
    pub warmup: f64,
    /// Initial `alpha_c` as a multiple of the truth.
    pub initial_factor: f64,
    pub noise: NoiseModel,
    pub stop: StopRule,
    pub limits: TuningLimits,
}

impl Default for TuningExperiment {
    fn default() -> Self {
        Self {
            interval: 20.0,
            warmup: 400.0,
            initial_factor: 1.3,
            noise: NoiseModel::gaussian(3.0, 7),
            stop: StopRule::default(),
            limits: TuningLimits { max_iterations: 200, stop_on_accept: false, ..TuningLimits::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    /// Casting time to simulate [s].
    pub duration: f64,
    /// Reporting interval for the energy audit and fronts [s].
    pub interval: f64,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self { duration: 600.0, interval: 60.0 }
    }
}

/// One tuning run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub figure: String,
    /// `harmonic`, `sign-reset` or `sign-increment`.
    pub kind: String,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    /// Overrides the experiment's initial factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_factor: Option<f64>,
}

impl SweepCell {
    pub fn new(figure: &str, kind: &str, a: f64, b: f64) -> Self {
        Self { figure: figure.into(), kind: kind.into(), a, b, initial_factor: None }
    }

    pub fn sequence(&self) -> Result<StepSequence> {
        let s = StepSequence::from_name(&self.kind, self.a, self.b)?;
        s.validate()?;
        Ok(s)
    }

    /// File stem, unique within a grid.
    pub fn name(&self) -> String {
        let mut s = format!("{}_{}_a{}", self.figure, self.kind, self.a);
        if self.kind == "harmonic" {
            write!(s, "_b{}", self.b).unwrap();
        }
        if let Some(f) = self.initial_factor {
            write!(s, "_x{f}").unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub cells: Vec<SweepCell>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let mut cells = Vec::new();
        for a in [0.5, 1.0, 2.0, 4.0] {
            cells.push(SweepCell::new("fig4", "harmonic", a, 0.0));
        }
        for b in [0.0, 10.0, 50.0] {
            cells.push(SweepCell::new("fig5", "harmonic", 1.0, b));
        }
        for a in [0.5, 1.0, 2.0, 3.0, 5.0] {
            cells.push(SweepCell::new("fig6", "sign-reset", a, 0.0));
        }
        for a in [0.5, 1.0, 1.35, 2.0] {
            cells.push(SweepCell::new("fig7", "sign-increment", a, 0.0));
        }
        Self { cells }
    }
}

impl SweepGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        let g: Self = toml::from_str(text).map_err(|e| CoreError::Config(format!("sweep grid: {e}")))?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for c in &self.cells {
            c.sequence()?;
            if let Some(f) = c.initial_factor {
                if !(f > 0.0) {
                    return Err(CoreError::Config(format!("{}: initial factor must be > 0", c.name())));
                }
            }
            if !names.insert(c.name()) {
                return Err(CoreError::Config(format!("sweep cell {} is listed twice", c.name())));
            }
        }
        Ok(())
    }
}

/// Complete description of a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub machine: CasterSetup,
    /// Steel grade; the bundled st40 when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialSpec>,
    pub target: TargetSpec,
    /// Ground truth of the target face.
    pub truth: AlphaPair,
    pub identify: IdentifyExperiment,
    pub tuning: TuningExperiment,
    pub sweep: SweepGrid,
    pub simulate: SimulateSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            machine: CasterSetup::default(),
            material: None,
            target: TargetSpec::default(),
            truth: AlphaPair { alpha_c: 250.0, alpha_p: 750.0 },
            identify: IdentifyExperiment::default(),
            tuning: TuningExperiment::default(),
            sweep: SweepGrid::default(),
            simulate: SimulateSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| CoreError::Config(format!("experiment config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    /// The configuration with every default spelled out.
    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.machine.validate()?;
        self.material()?;
        if !(self.machine.casting_speed.min() > 0.0) {
            return Err(CoreError::Config("casting speed must be > 0 for synthetic experiments".into()));
        }
        let t = &self.target;
        if t.section == SectionId::Mould {
            return Err(CoreError::Config("target section must be spray-cooled".into()));
        }
        self.machine.layout.section(t.section).map_err(|e| CoreError::Config(e.to_string()))?;
        if !(self.truth.alpha_c > 0.0 && self.truth.alpha_p >= 0.0) {
            return Err(CoreError::Config("truth needs alpha_c > 0 and alpha_p >= 0".into()));
        }
        let id = &self.identify;
        id.noise.validate()?;
        if !(id.prior.alpha_c > 0.0 && id.prior.alpha_p >= 0.0) {
            return Err(CoreError::Config("identification prior needs alpha_c > 0 and alpha_p >= 0".into()));
        }
        if !(id.settle > 0.0) || id.seeds == 0 {
            return Err(CoreError::Config("identification needs settle > 0 and at least one seed".into()));
        }
        let tu = &self.tuning;
        tu.noise.validate()?;
        if !(tu.interval > 0.0 && tu.warmup >= 0.0 && tu.initial_factor > 0.0) {
            return Err(CoreError::Config("tuning needs interval > 0, warmup >= 0 and initial factor > 0".into()));
        }
        if !(tu.limits.lower > 0.0 && tu.limits.upper > 1.0 && tu.limits.lower < 1.0) {
            return Err(CoreError::Config("tuning limits need 0 < lower < 1 < upper".into()));
        }
        if !(self.simulate.duration >= 0.0 && self.simulate.interval > 0.0) {
            return Err(CoreError::Config("simulate needs duration >= 0 and interval > 0".into()));
        }
        self.sweep.validate()?;
        self.tap_node()?;
        Ok(())
    }

    pub fn material(&self) -> Result<Arc<MaterialProperties>> {
        let spec = self.material.clone().unwrap_or_else(MaterialSpec::st40);
        Ok(Arc::new(MaterialProperties::new(spec)?))
    }

    /// Surface node nearest to the tuning coordinate.
    pub fn tap_node(&self) -> Result<usize> {
        let grids = crate::geometry::build_grids(&self.machine.layout, &self.machine.grid)?;
        let g = grids
            .section(self.target.section)
            .ok_or_else(|| CoreError::Config(format!("machine has no section {}", self.target.section)))?;
        let a = &g.along;
        let i = ((self.target.tap - a.start) / a.step).round();
        if !(i >= 0.0 && (i as usize) < a.n) {
            return Err(CoreError::Config(format!("tap {} lies outside {}", self.target.tap, self.target.section)));
        }
        Ok(i as usize)
    }

    /// Machine up to and including the target section, with `alphas` on the target face.
    pub fn target_setup(&self, alphas: AlphaPair) -> CasterSetup {
        let mut s = match self.target.section {
            SectionId::Curvilinear(m) => self.machine.truncated(m),
            _ => self.machine.clone(),
        };
        let faces = match self.target.section {
            SectionId::Curvilinear(m) => &mut s.cooling.curvilinear[m - 1],
            _ => s.cooling.rectilinear.as_mut().expect("validated"),
        };
        match self.target.face {
            Face::Inner => faces.inner = alphas,
            Face::Outer => faces.outer = alphas,
        }
        s
    }

    fn identification_setup(&self, alphas: AlphaPair) -> CasterSetup {
        let mut s = self.target_setup(alphas);
        if let Some(q) = self.identify.q {
            s.grid.q = q;
        }
        s.grid.dt = self.identify.dt;
        s
    }
}

/// Runs `caster` from its initial state to `tau`, auditing every `interval`.
pub fn settle(caster: &Caster, tau: f64, interval: f64, audit: &mut AuditTracker) -> Result<SolverState> {
    let mut s = caster.initial_state();
    caster.run_to_time(&mut s, tau, Some(interval), |st, a| audit.record(caster, st, a))?;
    Ok(s)
}

const AUDIT_INTERVAL: f64 = 20.0;

fn measured_profile(caster: &Caster, s: &SolverState, cfg: &ExperimentConfig) -> Result<SurfaceMeasurements> {
    let read = |face| -> Result<Vec<f64>> {
        Ok(caster.surface_temperature_profile(s, cfg.target.section, face)?.into_iter().map(|p| p.1).collect())
    };
    if cfg.target.face == Face::Outer && !cfg.identify.measure_outer {
        return Err(CoreError::Config("an outer target needs measure_outer = true".into()));
    }
    let outer = if cfg.identify.measure_outer { Some(read(Face::Outer)?) } else { None };
    Ok(SurfaceMeasurements { inner: read(Face::Inner)?, outer })
}

/// The identification model after `settle`, started from the prior coefficients.
pub fn identification_model(cfg: &ExperimentConfig, audit: &mut AuditTracker) -> Result<(Caster, SolverState)> {
    let caster = Caster::new(cfg.material()?, cfg.identification_setup(cfg.identify.prior))?;
    let s = settle(&caster, cfg.identify.settle, AUDIT_INTERVAL, audit)?;
    Ok((caster, s))
}

/// Identifies the target face from a measured profile.
pub fn identify_measurements(cfg: &ExperimentConfig, measured: &SurfaceMeasurements) -> Result<(Identification, AuditTracker)> {
    let mut audit = AuditTracker::default();
    let (caster, snapshot) = identification_model(cfg, &mut audit)?;
    let opts = IdentifyOptions { face: cfg.target.face, interior: cfg.identify.interior.clone() };
    Ok((identify(&caster, &snapshot, cfg.target.section, measured, &opts)?, audit))
}

/// Surface profile and tuning-point stream produced by the truth model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub coords: Vec<f64>,
    pub profile: SurfaceMeasurements,
    pub stream: Vec<MeasurementRecord>,
    pub audit: AuditTracker,
}

/// Noisy profile at `settle` on the identification grid, plus a noisy tuning
/// stream on the machine grid.
pub fn synthesize(cfg: &ExperimentConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut audit = AuditTracker::default();
    let truth = Caster::new(cfg.material()?, cfg.identification_setup(cfg.truth))?;
    let s = settle(&truth, cfg.identify.settle, AUDIT_INTERVAL, &mut audit)?;
    let mut profile = measured_profile(&truth, &s, cfg)?;
    let mut rng = cfg.identify.noise.stream(0)?;
    for t in profile.inner.iter_mut().chain(profile.outer.iter_mut().flatten()) {
        *t += rng.sample();
    }
    let coords = truth.surface_temperature_profile(&s, cfg.target.section, cfg.target.face)?.into_iter().map(|p| p.0).collect();
    let (stream, a) = truth_stream(cfg, &cfg.tuning.noise)?;
    audit.merge(&a);
    Ok(SyntheticData { coords, profile, stream, audit })
}

/// Truth run on the machine grid, sampled at the tuning point.
fn truth_stream(cfg: &ExperimentConfig, noise: &NoiseModel) -> Result<(Vec<MeasurementRecord>, AuditTracker)> {
    let mut audit = AuditTracker::default();
    let truth = Caster::new(cfg.material()?, cfg.target_setup(cfg.truth))?;
    let tu = &cfg.tuning;
    let mut s = settle(&truth, tu.warmup, tu.interval, &mut audit)?;
    let plan = SamplingPlan {
        section: cfg.target.section,
        face: cfg.target.face,
        nodes: vec![cfg.tap_node()?],
        interval: tu.interval,
        count: tu.limits.max_iterations,
    };
    let stream = synthesize_measurements(&truth, &mut s, &plan, noise, &mut audit)?;
    Ok((stream, audit))
}

impl SyntheticData {
    /// Columns `coord,inner` and `outer` when measured.
    pub fn profile_csv(&self) -> String {
        write_measurements_csv(&self.coords, &self.profile)
    }

    /// Columns `tau,T`.
    pub fn stream_csv(&self) -> String {
        let mut s = String::from("tau,T\n");
        for r in &self.stream {
            writeln!(s, "{},{}", r.tau, r.values[0]).unwrap();
        }
        s
    }
}

pub fn write_measurements_csv(coords: &[f64], m: &SurfaceMeasurements) -> String {
    let mut s = String::from(if m.outer.is_some() { "coord,inner,outer\n" } else { "coord,inner\n" });
    for (i, c) in coords.iter().enumerate() {
        write!(s, "{c},{}", m.inner[i]).unwrap();
        if let Some(o) = &m.outer {
            write!(s, ",{}", o[i]).unwrap();
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Deserialize)]
struct MeasurementRow {
    #[allow(dead_code)]
    coord: f64,
    inner: f64,
    outer: Option<f64>,
}

/// Parses the `coord,inner[,outer]` format written by [`write_measurements_csv`].
pub fn read_measurements_csv(text: &str) -> Result<SurfaceMeasurements> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for (i, row) in rdr.deserialize::<MeasurementRow>().enumerate() {
        let r = row.map_err(|e| CoreError::Config(format!("measurements row {}: {e}", i + 1)))?;
        inner.push(r.inner);
        outer.push(r.outer);
    }
    if inner.is_empty() {
        return Err(CoreError::Config("measurements file has no rows".into()));
    }
    let outer = if outer.iter().all(Option::is_some) {
        Some(outer.into_iter().flatten().collect())
    } else if outer.iter().all(Option::is_none) {
        None
    } else {
        return Err(CoreError::Config("outer column must be filled on every row or on none".into()));
    };
    Ok(SurfaceMeasurements { inner, outer })
}

/// One surface node of the direct-reversion vs least-squares comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileNode {
    pub coord: f64,
    pub membership: Membership,
    pub alpha_truth: f64,
    pub alpha_lsq: f64,
    /// Noiseless pointwise estimate.
    pub alpha_direct: Option<f64>,
    /// Pointwise estimate under the first noise realisation.
    pub alpha_direct_noisy: Option<f64>,
    /// Standard deviation of the pointwise estimate across noise realisations.
    pub direct_std: Option<f64>,
    pub rel_error_lsq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterStats {
    pub seeds: usize,
    pub sigma: f64,
    pub alpha_c_mean: f64,
    pub alpha_p_mean: f64,
    /// Mean over seeds of `|alpha_c - truth|`.
    pub alpha_c_mean_abs_error: f64,
    pub alpha_p_mean_abs_error: f64,
    /// Mean over K nodes of the across-seed standard deviation of the pointwise estimate.
    pub direct_std_k: f64,
    /// `direct_std_k / alpha_c_mean_abs_error`.
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Report {
    pub truth: AlphaPair,
    pub roundtrip: IdentificationSummary,
    pub rel_error_alpha_c: f64,
    pub rel_error_alpha_p: f64,
    pub nodes: Vec<ProfileNode>,
    pub scatter: Option<ScatterStats>,
    pub audit: AuditTracker,
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Noiseless round trip plus the noise-scatter study of both estimators.
/// With `seeds == 0` only the round trip runs.
pub fn run_fig3_experiment(cfg: &ExperimentConfig, seeds: usize) -> Result<Fig3Report> {
    cfg.validate()?;
    let mut audit = AuditTracker::default();
    let truth = Caster::new(cfg.material()?, cfg.identification_setup(cfg.truth))?;
    let ts = settle(&truth, cfg.identify.settle, AUDIT_INTERVAL, &mut audit)?;
    let clean = measured_profile(&truth, &ts, cfg)?;
    let coords: Vec<f64> =
        truth.surface_temperature_profile(&ts, cfg.target.section, cfg.target.face)?.into_iter().map(|p| p.0).collect();
    let truth_profile = truth.profiles(cfg.target.section)?.face(cfg.target.face).clone();
    drop((truth, ts));

    // Identification sees only the measured profile and its own model.
    let (model, snapshot) = identification_model(cfg, &mut audit)?;
    let mut opts = IdentifyOptions { face: cfg.target.face, interior: cfg.identify.interior.clone() };
    let section = cfg.target.section;
    let base = identify(&model, &snapshot, section, &clean, &opts)?;
    // Noisy reconstructions differ from the clean one mostly in short
    // wavelengths, which the pseudo-time march removes quickly.
    let clean_interior = solve_interior_dirichlet(&model, &snapshot, section, &clean, &opts.interior)?;
    opts.interior.warm_start = Some(clean_interior.patch.temperatures().to_vec());

    let noise = cfg.identify.noise;
    let runs: Vec<Identification> = (0..seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = noise.stream(seed)?;
            let mut m = clean.clone();
            for t in m.inner.iter_mut().chain(m.outer.iter_mut().flatten()) {
                *t += rng.sample();
            }
            identify(&model, &snapshot, section, &m, &opts)
        })
        .collect::<Result<_>>()?;

    let n = coords.len();
    let per_node: Vec<Vec<f64>> =
        (0..n).map(|i| runs.iter().filter_map(|r| r.direct.alphas[i]).collect()).collect();
    let nodes = (0..n)
        .map(|i| {
            let membership = base.samples.membership[i];
            let truth_a = truth_profile.alpha_for(membership);
            let lsq = base.profile.alpha_for(membership);
            ProfileNode {
                coord: coords[i],
                membership,
                alpha_truth: truth_a,
                alpha_lsq: lsq,
                alpha_direct: base.direct.alphas[i],
                alpha_direct_noisy: runs.first().and_then(|r| r.direct.alphas[i]),
                direct_std: (per_node[i].len() > 1).then(|| std_dev(&per_node[i])),
                rel_error_lsq: (lsq - truth_a) / truth_a,
            }
        })
        .collect::<Vec<_>>();

    let scatter = (!runs.is_empty()).then(|| {
        let k = runs.len() as f64;
        let mean = |f: &dyn Fn(&Identification) -> f64| runs.iter().map(f).sum::<f64>() / k;
        let stds: Vec<f64> =
            nodes.iter().filter(|nd| !nd.membership.is_b()).filter_map(|nd| nd.direct_std).collect();
        let direct_std_k = stds.iter().sum::<f64>() / stds.len().max(1) as f64;
        let err_c = mean(&|r| (r.profile.alpha_c - cfg.truth.alpha_c).abs());
        ScatterStats {
            seeds: runs.len(),
            sigma: noise.sigma,
            alpha_c_mean: mean(&|r| r.profile.alpha_c),
            alpha_p_mean: mean(&|r| r.profile.alpha_p),
            alpha_c_mean_abs_error: err_c,
            alpha_p_mean_abs_error: mean(&|r| (r.profile.alpha_p - cfg.truth.alpha_p).abs()),
            direct_std_k,
            contrast: direct_std_k / err_c,
        }
    });

    Ok(Fig3Report {
        truth: cfg.truth,
        roundtrip: base.summary(),
        rel_error_alpha_c: (base.profile.alpha_c - cfg.truth.alpha_c) / cfg.truth.alpha_c,
        rel_error_alpha_p: (base.profile.alpha_p - cfg.truth.alpha_p) / cfg.truth.alpha_p,
        nodes,
        scatter,
        audit,
    })
}

impl Fig3Report {
    pub fn profile_csv(&self) -> String {
        let mut s = String::from("coord,membership,alpha_truth,alpha_lsq,rel_error_lsq,alpha_direct,alpha_direct_noisy,direct_std\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for n in &self.nodes {
            let set = if n.membership.is_b() { "B" } else { "K" };
            writeln!(
                s,
                "{},{set},{},{},{},{},{},{}",
                n.coord,
                n.alpha_truth,
                n.alpha_lsq,
                n.rel_error_lsq,
                opt(n.alpha_direct),
                opt(n.alpha_direct_noisy),
                opt(n.direct_std)
            )
            .unwrap();
        }
        s
    }

    pub fn artifacts(&self) -> Vec<Artifact> {
        vec![
            Artifact::new("fig3_profile.csv", self.profile_csv()),
            Artifact::new("fig3_summary.toml", self.summary_toml()),
            Artifact::new("fig3_profile.svg", plot_profile(self)),
        ]
    }

    /// Everything except the per-node table.
    pub fn summary_toml(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            truth: &'a AlphaPair,
            rel_error_alpha_c: f64,
            rel_error_alpha_p: f64,
            roundtrip: &'a IdentificationSummary,
            #[serde(skip_serializing_if = "Option::is_none")]
            scatter: Option<&'a ScatterStats>,
            audit: &'a AuditTracker,
        }
        let v = View {
            truth: &self.truth,
            rel_error_alpha_c: self.rel_error_alpha_c,
            rel_error_alpha_p: self.rel_error_alpha_p,
            roundtrip: &self.roundtrip,
            scatter: self.scatter.as_ref(),
            audit: &self.audit,
        };
        toml::to_string(&v).expect("summary serializes")
    }
}

/// Metrics of one tuning trajectory relative to the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub error_after_20: f64,
    pub error_after_100: f64,
    pub error_after_200: f64,
    pub final_error: f64,
    /// Updates after which the error stays within 5 %.
    pub iterations_to_5pct: Option<usize>,
    /// Largest relative excursion beyond the truth, away from the start.
    pub max_overshoot: f64,
    pub sign_alternations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub cell: SweepCell,
    pub truth: f64,
    pub initial_alpha: f64,
    pub trajectory: Trajectory,
    pub metrics: TrajectoryMetrics,
    pub audit: AuditTracker,
}

impl TrajectoryRecord {
    /// Iterates `alpha_0, alpha_1, ...`: the value after `i` updates.
    pub fn iterates(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.trajectory.points.iter().map(|p| p.alpha).collect();
        v.push(self.trajectory.final_alpha);
        if self.trajectory.points.is_empty() {
            v[0] = self.initial_alpha;
        }
        v
    }

    /// Relative error after `j` updates (the last iterate beyond the end).
    pub fn error_after(&self, j: usize) -> f64 {
        let it = self.iterates();
        let a = it[j.min(it.len() - 1)];
        (a - self.truth).abs() / self.truth
    }

    fn compute_metrics(&mut self) {
        let it = self.iterates();
        let err: Vec<f64> = it.iter().map(|a| (a - self.truth).abs() / self.truth).collect();
        let to5 = match err.iter().rposition(|e| *e > 0.05) {
            None => Some(0),
            Some(i) if i + 1 < err.len() => Some(i + 1),
            Some(_) => None,
        };
        let side = (self.initial_alpha - self.truth).signum();
        let max_overshoot = it.iter().map(|a| (-side * (a - self.truth) / self.truth).max(0.0)).fold(0.0, f64::max);
        let sign_alternations =
            self.trajectory.points.windows(2).filter(|w| w[0].residual * w[1].residual < 0.0).count();
        self.metrics = TrajectoryMetrics {
            error_after_20: self.error_after(20),
            error_after_100: self.error_after(100),
            error_after_200: self.error_after(200),
            final_error: *err.last().expect("at least one iterate"),
            iterations_to_5pct: to5,
            max_overshoot,
            sign_alternations,
        };
    }

    /// Trajectory CSV extended with the truth and the relative error of the iterate.
    pub fn csv(&self) -> String {
        let mut s = String::from("j,alpha,k,residual,n,alpha_truth,rel_error\n");
        for p in &self.trajectory.points {
            let e = (p.alpha - self.truth) / self.truth;
            writeln!(s, "{},{},{},{},{},{},{e}", p.j, p.alpha, p.k, p.residual, p.n, self.truth).unwrap();
        }
        s
    }
}

/// Model wrapper that audits every sampling interval.
struct AuditedTap {
    tap: CasterTap,
    audit: AuditTracker,
}

impl TunedModel for AuditedTap {
    fn advance(&mut self, alpha: f64) -> Result<(f64, f64)> {
        let t = &mut self.tap;
        t.caster.set_alpha_c(t.section, t.face, alpha)?;
        let end = t.state.tau + t.interval;
        let audit = &mut self.audit;
        let caster = &t.caster;
        caster.run_to_time(&mut t.state, end, Some(t.interval), |s, a| audit.record(caster, s, a))?;
        Ok((t.state.tau, t.read()?))
    }
}

/// Runs every cell against one shared truth stream and noise realisation.
/// Model warm-ups are shared between cells with the same initial value.
pub fn run_fig4_7_sweeps(cfg: &ExperimentConfig, grid: &SweepGrid) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate()?;
    grid.validate()?;
    let tu = &cfg.tuning;
    let (stream, truth_audit) = truth_stream(cfg, &tu.noise)?;
    let measured: Vec<f64> = stream.iter().map(|r| r.values[0]).collect();
    let node = cfg.tap_node()?;
    let factor_of = |c: &SweepCell| c.initial_factor.unwrap_or(tu.initial_factor);

    let mut factors: BTreeMap<u64, f64> = BTreeMap::new();
    for c in &grid.cells {
        let f = factor_of(c);
        factors.insert(f.to_bits(), f);
    }
    let warm: BTreeMap<u64, (Caster, SolverState, AuditTracker)> = factors
        .into_par_iter()
        .map(|(bits, f)| {
            let mut audit = AuditTracker::default();
            let alphas = AlphaPair { alpha_c: f * cfg.truth.alpha_c, ..cfg.truth };
            let caster = Caster::new(cfg.material()?, cfg.target_setup(alphas))?;
            let s = settle(&caster, tu.warmup, tu.interval, &mut audit)?;
            Ok((bits, (caster, s, audit)))
        })
        .collect::<Result<_>>()?;

    grid.cells
        .par_iter()
        .map(|cell| {
            let f = factor_of(cell);
            let (caster, state, warm_audit) = &warm[&f.to_bits()];
            let mut model = AuditedTap {
                tap: CasterTap {
                    caster: caster.clone(),
                    state: state.clone(),
                    section: cfg.target.section,
                    face: cfg.target.face,
                    node,
                    interval: tu.interval,
                },
                audit: *warm_audit,
            };
            model.audit.merge(&truth_audit);
            let initial = f * cfg.truth.alpha_c;
            let trajectory =
                run_tuning(&mut model, &mut measured.iter().copied(), cell.sequence()?, initial, tu.stop, tu.limits)?;
            let mut rec = TrajectoryRecord {
                cell: cell.clone(),
                truth: cfg.truth.alpha_c,
                initial_alpha: initial,
                trajectory,
                metrics: TrajectoryMetrics {
                    error_after_20: 0.0,
                    error_after_100: 0.0,
                    error_after_200: 0.0,
                    final_error: 0.0,
                    iterations_to_5pct: None,
                    max_overshoot: 0.0,
                    sign_alternations: 0,
                },
                audit: model.audit,
            };
            rec.compute_metrics();
            Ok(rec)
        })
        .collect()
}

/// One tuning run with the given sequence.
pub fn run_tuning_experiment(cfg: &ExperimentConfig, seq: &StepSequence) -> Result<TrajectoryRecord> {
    let (a, b) = match *seq {
        StepSequence::Harmonic { a, b } => (a, b),
        StepSequence::SignReset { a } | StepSequence::SignIncrement { a } => (a, 0.0),
    };
    let grid = SweepGrid { cells: vec![SweepCell::new("tune", seq.name(), a, b)] };
    Ok(run_fig4_7_sweeps(cfg, &grid)?.remove(0))
}

/// Live tuning against measurements supplied one at a time.
#[derive(Debug, Clone)]
pub struct TuningSession {
    tap: CasterTap,
    sa: SaState,
    sequence: StepSequence,
    points: Vec<TrajectoryPoint>,
    accepted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionUpdate {
    /// `None` when the measurement was rejected.
    pub point: Option<TrajectoryPoint>,
    /// Model temperature at the tuning point for the interval just run [K].
    pub model: f64,
    /// Iterate now in force.
    pub alpha: f64,
    /// First value accepted by the stop rule, once there is one.
    pub accepted: Option<f64>,
}

impl TuningSession {
    /// Warms the model up at `initial_alpha`; the rest of the target face
    /// keeps the configured truth values.
    pub fn start(cfg: &ExperimentConfig, sequence: StepSequence, initial_alpha: f64) -> Result<Self> {
        cfg.validate()?;
        sequence.validate()?;
        if !(initial_alpha > 0.0) {
            return Err(CoreError::Config(format!("initial alpha {initial_alpha} must be > 0")));
        }
        let tu = &cfg.tuning;
        let caster = Caster::new(cfg.material()?, cfg.target_setup(AlphaPair { alpha_c: initial_alpha, ..cfg.truth }))?;
        let state = settle(&caster, tu.warmup, tu.interval, &mut AuditTracker::default())?;
        let tap = CasterTap {
            caster,
            state,
            section: cfg.target.section,
            face: cfg.target.face,
            node: cfg.tap_node()?,
            interval: tu.interval,
        };
        Ok(Self { tap, sa: SaState::new(initial_alpha, tu.stop), sequence, points: Vec::new(), accepted: None })
    }

    pub fn alpha(&self) -> f64 {
        self.sa.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tap.state.tau
    }

    pub fn sequence(&self) -> &StepSequence {
        &self.sequence
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn accepted(&self) -> Option<f64> {
        self.accepted
    }

    /// Runs the model over one interval with the current iterate, then
    /// updates it from the measurement taken at the end of that interval.
    pub fn push(&mut self, measured: f64) -> Result<SessionUpdate> {
        let alpha = self.sa.alpha;
        let (tau, model) = self.tap.advance(alpha)?;
        let sample = MeasurementSample { tau, measured, model };
        let (k, n) = step_size(&self.sequence, &self.sa, sample.residual());
        let j = self.sa.j;
        let point = sa_step(&mut self.sa, &sample, k, n).then(|| TrajectoryPoint { j, alpha, k, residual: sample.residual(), n });
        if let Some(p) = point {
            self.points.push(p);
            if let (None, StopDecision::Accept { alpha }) = (self.accepted, check_stop(&self.sa)) {
                self.accepted = Some(alpha);
            }
        }
        Ok(SessionUpdate { point, model, alpha: self.sa.alpha, accepted: self.accepted })
    }
}

/// Summary table over all cells.
pub fn sweep_summary_csv(records: &[TrajectoryRecord]) -> String {
    let mut s = String::from(
        "cell,figure,kind,a,b,initial_alpha,status,final_alpha,error_after_20,error_after_100,error_after_200,iterations_to_5pct,max_overshoot,sign_alternations\n",
    );
    for r in records {
        let m = &r.metrics;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cell.name(),
            r.cell.figure,
            r.cell.kind,
            r.cell.a,
            r.cell.b,
            r.initial_alpha,
            r.trajectory.status.as_str(),
            r.trajectory.final_alpha,
            m.error_after_20,
            m.error_after_100,
            m.error_after_200,
            m.iterations_to_5pct.map(|v| v.to_string()).unwrap_or_default(),
            m.max_overshoot,
            m.sign_alternations
        )
        .unwrap();
    }
    s
}

/// Per-cell trajectories, the summary table and one plot per figure.
pub fn sweep_artifacts(records: &[TrajectoryRecord]) -> Vec<Artifact> {
    let mut out: Vec<Artifact> = records.iter().map(|r| Artifact::new(format!("{}.csv", r.cell.name()), r.csv())).collect();
    out.push(Artifact::new("sweep_summary.csv", sweep_summary_csv(records)));
    out.extend(emit_plots(records));
    out
}

/// Result of a plain forward run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub state: SolverState,
    pub fronts: Vec<FrontResult>,
    /// `(tau, worst relative defect)` per reporting interval.
    pub intervals: Vec<(f64, f64)>,
    pub audit: AuditTracker,
}

/// Forward run of the whole machine with the configured cooling.
pub fn run_simulation(cfg: &ExperimentConfig) -> Result<Simulation> {
    cfg.validate()?;
    let caster = Caster::new(cfg.material()?, cfg.machine.clone())?;
    let mut s = caster.initial_state();
    let mut audit = AuditTracker::default();
    let mut intervals = Vec::new();
    let sections: Vec<SectionId> = std::iter::once(SectionId::Mould)
        .chain((1..=cfg.machine.layout.curvilinear.len()).map(SectionId::Curvilinear))
        .chain(cfg.machine.layout.rectilinear.iter().map(|_| SectionId::Rectilinear))
        .collect();
    let mut previous: Vec<Option<PhaseFront>> = vec![None; sections.len()];
    let mut fronts = Vec::new();
    caster.run_to_time(&mut s, cfg.simulate.duration, Some(cfg.simulate.interval), |st, a| {
        audit.record(&caster, st, a)?;
        intervals.push((st.tau, a.worst_defect()));
        fronts.clear();
        for (i, &sec) in sections.iter().enumerate() {
            let f = caster.extract_front(st, sec, previous[i].as_ref())?;
            previous[i] = f.front().cloned();
            fronts.push(f);
        }
        Ok(())
    })?;
    if fronts.is_empty() {
        for &sec in &sections {
            fronts.push(caster.extract_front(&s, sec, None)?);
        }
    }
    Ok(Simulation { state: s, fronts, intervals, audit })
}

impl Simulation {
    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        let mut field = Vec::new();
        write_field_csv(&self.state, &mut field)?;
        let mut fronts = Vec::new();
        write_front_csv(&self.fronts, &mut fronts)?;
        let mut audit = String::from("tau,worst_relative_defect\n");
        for (t, d) in &self.intervals {
            writeln!(audit, "{t},{d}").unwrap();
        }
        let text = |b: Vec<u8>| String::from_utf8(b).expect("csv output is utf-8");
        Ok(vec![
            Artifact::new("field.csv", text(field)),
            Artifact::new("fronts.csv", text(fronts)),
            Artifact::new("audit.csv", audit),
        ])
    }
}

const PALETTE: [plotters::style::RGBColor; 6] = [
    plotters::style::RGBColor(31, 119, 180),
    plotters::style::RGBColor(214, 39, 40),
    plotters::style::RGBColor(44, 160, 44),
    plotters::style::RGBColor(148, 103, 189),
    plotters::style::RGBColor(255, 127, 14),
    plotters::style::RGBColor(23, 190, 207),
];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let pad = 0.05 * (hi - lo).max(1e-9 * hi.abs().max(1.0));
    (lo - pad, hi + pad)
}

/// One SVG per figure label: iterate against iteration number, truth dashed.
pub fn emit_plots(records: &[TrajectoryRecord]) -> Vec<Artifact> {
    let mut figures: BTreeMap<&str, Vec<&TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        figures.entry(r.cell.figure.as_str()).or_default().push(r);
    }
    figures.into_iter().map(|(fig, recs)| Artifact::new(format!("{fig}.svg"), plot_trajectories(fig, &recs))).collect()
}

fn plot_trajectories(figure: &str, recs: &[&TrajectoryRecord]) -> String {
    use plotters::prelude::*;
    let series: Vec<(String, Vec<(f64, f64)>)> = recs
        .iter()
        .map(|r| {
            let label = match r.cell.kind.as_str() {
                "harmonic" => format!("a={} b={}", r.cell.a, r.cell.b),
                k => format!("{k} a={}", r.cell.a),
            };
            (label, r.iterates().into_iter().enumerate().map(|(i, a)| (i as f64, a)).collect())
        })
        .collect();
    let truth = recs.first().map_or(0.0, |r| r.truth);
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(2).max(2) as f64 - 1.0;
    let (lo, hi) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)).chain([truth]));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 450)).into_drawing_area();
        root.fill(&WHITE).expect("svg");
        let mut chart = ChartBuilder::on(&root)
            .caption(figure, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(60)
            .build_cartesian_2d(0.0..n, lo..hi)
            .expect("svg");
        chart.configure_mesh().x_desc("iteration").y_desc("alpha_c [W/(m2 K)]").draw().expect("svg");
        chart
            .draw_series(DashedLineSeries::new([(0.0, truth), (n, truth)], 6, 4, BLACK.into()))
            .expect("svg")
            .label("truth")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLACK));
        for (i, (label, pts)) in series.into_iter().enumerate() {
            let c = PALETTE[i % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(pts, c.stroke_width(2)))
                .expect("svg")
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2)));
        }
        chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().expect("svg");
        root.present().expect("svg");
    }
    svg
}

fn plot_profile(rep: &Fig3Report) -> String {
    use plotters::prelude::*;
    let xs = rep.nodes.iter().map(|n| n.coord);
    let (x0, x1) = bounds(xs);
    let direct: Vec<(f64, f64)> =
        rep.nodes.iter().filter_map(|n| n.alpha_direct_noisy.map(|a| (n.coord, a))).collect();
    let (lo, hi) = bounds(rep.nodes.iter().flat_map(|n| [n.alpha_truth, n.alpha_lsq]).chain(direct.iter().map(|p| p.1)));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 450)).into_drawing_area();
        root.fill(&WHITE).expect("svg");
        let mut chart = ChartBuilder::on(&root)
            .caption("fig3", ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, lo..hi)
            .expect("svg");
        chart.configure_mesh().x_desc("coordinate").y_desc("alpha [W/(m2 K)]").draw().expect("svg");
        let line = |f: fn(&ProfileNode) -> f64| rep.nodes.iter().map(|n| (n.coord, f(n))).collect::<Vec<_>>();
        chart
            .draw_series(LineSeries::new(line(|n| n.alpha_truth), BLACK.stroke_width(1)))
            .expect("svg")
            .label("truth")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLACK));
        let c = PALETTE[0];
        chart
            .draw_series(LineSeries::new(line(|n| n.alpha_lsq), c.stroke_width(2)))
            .expect("svg")
            .label("least squares")
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2)));
        let d = PALETTE[1];
        chart
            .draw_series(direct.into_iter().map(|p| Circle::new(p, 2, d.filled())))
            .expect("svg")
            .label("direct reversion")
            .legend(move |(x, y)| Circle::new((x + 9, y), 3, d.filled()));
        chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().expect("svg");
        root.present().expect("svg");
    }
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_silent() {
        let mut s = NoiseModel::gaussian(0.0, 3).stream(0).unwrap();
        assert!((0..100).all(|_| s.sample() == 0.0));
    }

    #[test]
    fn negative_sigma_rejected() {
        let e = NoiseModel::gaussian(-1.0, 3).validate().unwrap_err();
        assert_eq!(e.kind(), crate::ErrorKind::Config);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let m = NoiseModel::gaussian(2.0, 9);
        let a: Vec<f64> = m.stream(1).unwrap().take(5).collect();
        let b: Vec<f64> = m.stream(1).unwrap().take(5).collect();
        let c: Vec<f64> = m.stream(2).unwrap().take(5).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_noise_has_requested_spread() {
        let m = NoiseModel { distribution: NoiseDistribution::Uniform, sigma: 2.0, seed: 1 };
        let v: Vec<f64> = m.stream(0).unwrap().take(40_000).collect();
        assert!(v.iter().all(|x| x.abs() <= 2.0 * 3f64.sqrt()));
        assert!((std_dev(&v) - 2.0).abs() < 0.05);
    }

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.resolved_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sweep_grid_rejects_negative_b_and_duplicates() {
        let bad = "[[cells]]\nfigure = \"x\"\nkind = \"harmonic\"\na = 1.0\nb = -1.0\n";
        assert_eq!(SweepGrid::from_toml(bad).unwrap_err().kind(), crate::ErrorKind::Config);
        let dup = "[[cells]]\nfigure = \"x\"\nkind = \"sign-reset\"\na = 1.0\n[[cells]]\nfigure = \"x\"\nkind = \"sign-reset\"\na = 1.0\n";
        assert!(SweepGrid::from_toml(dup).is_err());
    }

    #[test]
    fn measurements_csv_round_trip() {
        let m = SurfaceMeasurements { inner: vec![1000.0, 1001.5], outer: Some(vec![990.0, 991.25]) };
        let text = write_measurements_csv(&[0.0, 0.005], &m);
        assert_eq!(read_measurements_csv(&text).unwrap(), m);
        let single = "coord,inner\n0,1000\n0.005,1001\n";
        assert_eq!(read_measurements_csv(single).unwrap().outer, None);
        assert!(read_measurements_csv("coord,inner\n0,abc\n").is_err());
    }
}
