//! Operative adjustment of `alpha_c` by stochastic approximation.
//!
//! Each iteration advances the model by one sampling interval, compares the
//! modelled surface temperature with the measured one and moves the
//! coefficient against the discrepancy:
//! `alpha_{j+1} = alpha_j - k_j (T*_j - T_j)`.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{Face, SectionId};
use crate::solver::{Caster, SolverState};

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSequence {
    /// `k_j = a / (b + j)`.
    Harmonic { a: f64, b: f64 },
    /// `k_j = a / n_j`, `n_j` jumps to `j` whenever the residual changes sign.
    SignReset { a: f64 },
    /// `k_j = a / n_j`, `n_j` grows by one whenever the residual changes sign.
    SignIncrement { a: f64 },
}

impl StepSequence {
    pub fn validate(&self) -> Result<()> {
        let a = match *self {
            StepSequence::Harmonic { a, b } => {
                if !(b >= 0.0) {
                    return Err(CoreError::Config(format!(
                        "harmonic offset b = {b} must be >= 0; negative offsets push the tuning the wrong way"
                    )));
                }
                a
            }
            StepSequence::SignReset { a } | StepSequence::SignIncrement { a } => a,
        };
        if !(a > 0.0 && a.is_finite()) {
            return Err(CoreError::Config(format!("step coefficient a = {a} must be > 0")));
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        match *self {
            StepSequence::Harmonic { a, .. } | StepSequence::SignReset { a } | StepSequence::SignIncrement { a } => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepSequence::Harmonic { .. } => "harmonic",
            StepSequence::SignReset { .. } => "sign-reset",
            StepSequence::SignIncrement { .. } => "sign-increment",
        }
    }

    /// Builds a sequence from its command-line name.
    pub fn from_name(name: &str, a: f64, b: f64) -> Result<Self> {
        let s = match name {
            "harmonic" => StepSequence::Harmonic { a, b },
            "sign-reset" => StepSequence::SignReset { a },
            "sign-increment" => StepSequence::SignIncrement { a },
            other => {
                return Err(CoreError::Config(format!(
                    "unknown step sequence {other:?} (harmonic, sign-reset, sign-increment)"
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }
}

/// When to accept the current iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    /// Vicinity half-width; a fraction of the reference iterate when `relative`.
    pub eps: f64,
    pub relative: bool,
    /// Number of later iterates that must stay inside the vicinity.
    pub m: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { eps: 0.005, relative: true, m: 10 }
    }
}

/// Iteration state.
#[derive(Debug, Clone, PartialEq)]
pub struct SaState {
    pub alpha: f64,
    /// Index of the next iteration, starting at 1.
    pub j: usize,
    /// Denominator of the sign-driven sequences for the last iteration.
    pub n: usize,
    pub last_residual: Option<f64>,
    /// The last `m + 1` iterates, oldest first.
    pub history: VecDeque<f64>,
    pub stop: StopRule,
    /// Samples rejected for being non-finite.
    pub rejected: usize,
}

impl SaState {
    pub fn new(alpha: f64, stop: StopRule) -> Self {
        let mut history = VecDeque::with_capacity(stop.m + 1);
        history.push_back(alpha);
        Self { alpha, j: 1, n: 1, last_residual: None, history, stop, rejected: 0 }
    }
}

/// Measured and modelled temperature at the tuning point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub tau: f64,
    pub measured: f64,
    pub model: f64,
}

impl MeasurementSample {
    pub fn residual(&self) -> f64 {
        self.measured - self.model
    }
}

/// `(k_j, n_j)` for the iteration about to use `residual`.
pub fn step_size(seq: &StepSequence, state: &SaState, residual: f64) -> (f64, usize) {
    let j = state.j;
    let changed = state.last_residual.is_some_and(|r| r * residual <= 0.0);
    match *seq {
        StepSequence::Harmonic { a, b } => (a / (b + j as f64), state.n),
        StepSequence::SignReset { a } => {
            let n = if changed { j } else { state.n };
            (a / n as f64, n)
        }
        StepSequence::SignIncrement { a } => {
            let n = if changed { state.n + 1 } else { state.n };
            (a / n as f64, n)
        }
    }
}

/// Applies one update. Non-finite samples are counted and leave the state
/// untouched; the return value tells whether the sample was used.
pub fn sa_step(state: &mut SaState, sample: &MeasurementSample, k: f64, n: usize) -> bool {
    let r = sample.residual();
    if !r.is_finite() || !k.is_finite() {
        state.rejected += 1;
        return false;
    }
    state.alpha -= k * r;
    state.j += 1;
    state.n = n;
    state.last_residual = Some(r);
    state.history.push_back(state.alpha);
    while state.history.len() > state.stop.m + 1 {
        state.history.pop_front();
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    Accept { alpha: f64 },
}

/// Accepts `alpha_n` when the `m` iterates after it all lie within `eps` of it.
pub fn check_stop(state: &SaState) -> StopDecision {
    let m = state.stop.m;
    if m == 0 || state.history.len() < m + 1 {
        return StopDecision::Continue;
    }
    let base = state.history[0];
    let eps = if state.stop.relative { state.stop.eps * base.abs() } else { state.stop.eps };
    if state.history.iter().skip(1).all(|a| (a - base).abs() < eps) {
        StopDecision::Accept { alpha: base }
    } else {
        StopDecision::Continue
    }
}

/// One row of a tuning trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub j: usize,
    /// Iterate used during iteration `j`.
    pub alpha: f64,
    pub k: f64,
    pub residual: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningStatus {
    Accepted,
    Cap,
    Diverged,
}

impl TuningStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TuningStatus::Accepted => "accepted",
            TuningStatus::Cap => "cap",
            TuningStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sequence: StepSequence,
    pub points: Vec<TrajectoryPoint>,
    pub status: TuningStatus,
    pub final_alpha: f64,
    pub iterations: usize,
    pub rejected: usize,
}

impl Trajectory {
    /// Iterate in force during iteration `j` (the final value past the end).
    pub fn alpha_at(&self, j: usize) -> f64 {
        self.points.iter().find(|p| p.j == j).map_or(self.final_alpha, |p| p.alpha)
    }

    /// Columns `j,alpha,k,residual,n`, then the iterate after the last update.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "j,alpha,k,residual,n")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{},{}", p.j, p.alpha, p.k, p.residual, p.n)?;
        }
        Ok(())
    }

    pub fn status_block(&self) -> String {
        format!(
            "status = \"{}\"\nfinal_alpha = {}\niterations = {}\nrejected = {}\n",
            self.status.as_str(),
            self.final_alpha,
            self.iterations,
            self.rejected
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningLimits {
    pub max_iterations: usize,
    /// Divergence guard as multiples of the initial iterate.
    pub lower: f64,
    pub upper: f64,
    /// Stop as soon as the stop rule accepts; otherwise run to the cap and
    /// report acceptance only through the status.
    pub stop_on_accept: bool,
}

impl Default for TuningLimits {
    fn default() -> Self {
        Self { max_iterations: 300, lower: 0.1, upper: 10.0, stop_on_accept: true }
    }
}

/// Something whose surface temperature responds to `alpha_c`.
pub trait TunedModel {
    /// Advances one sampling interval with `alpha` in force and returns the
    /// modelled temperature at the tuning point.
    fn advance(&mut self, alpha: f64) -> Result<(f64, f64)>;
}

/// Runs the tuning loop against `measurements` (one value per interval).
pub fn run_tuning(
    model: &mut dyn TunedModel,
    measurements: &mut dyn Iterator<Item = f64>,
    seq: StepSequence,
    initial_alpha: f64,
    stop: StopRule,
    limits: TuningLimits,
) -> Result<Trajectory> {
    seq.validate()?;
    if !(initial_alpha > 0.0) {
        return Err(CoreError::Config(format!("initial alpha {initial_alpha} must be > 0")));
    }
    let (lo, hi) = (limits.lower * initial_alpha, limits.upper * initial_alpha);
    let mut state = SaState::new(initial_alpha, stop);
    let mut points = Vec::new();
    let mut status = TuningStatus::Cap;
    let mut accepted = None;
    for _ in 0..limits.max_iterations {
        let alpha = state.alpha;
        let (tau, t_model) = model.advance(alpha)?;
        let Some(measured) = measurements.next() else { break };
        let sample = MeasurementSample { tau, measured, model: t_model };
        let (k, n) = step_size(&seq, &state, sample.residual());
        let j = state.j;
        if !sa_step(&mut state, &sample, k, n) {
            continue;
        }
        points.push(TrajectoryPoint { j, alpha, k, residual: sample.residual(), n });
        if !(state.alpha >= lo && state.alpha <= hi) {
            status = TuningStatus::Diverged;
            break;
        }
        if let StopDecision::Accept { alpha } = check_stop(&state) {
            if accepted.is_none() {
                accepted = Some(alpha);
            }
            if limits.stop_on_accept {
                break;
            }
        }
    }
    let final_alpha = match (status, accepted, limits.stop_on_accept) {
        (TuningStatus::Diverged, _, _) => state.alpha,
        (_, Some(a), true) => {
            status = TuningStatus::Accepted;
            a
        }
        (_, Some(_), false) => {
            status = TuningStatus::Accepted;
            state.alpha
        }
        (_, None, _) => state.alpha,
    };
    Ok(Trajectory { sequence: seq, iterations: points.len(), points, status, final_alpha, rejected: state.rejected })
}

/// The forward model with `alpha_c` of one face under tuning, read at one
/// surface node.
#[derive(Debug, Clone)]
pub struct CasterTap {
    pub caster: Caster,
    pub state: SolverState,
    pub section: SectionId,
    pub face: Face,
    /// Surface node index along the section.
    pub node: usize,
    pub interval: f64,
}

impl CasterTap {
    pub fn read(&self) -> Result<f64> {
        let profile = self.caster.surface_temperature_profile(&self.state, self.section, self.face)?;
        profile
            .get(self.node)
            .map(|p| p.1)
            .ok_or_else(|| CoreError::Precondition(format!("tuning node {} is outside the section", self.node)))
    }
}

impl TunedModel for CasterTap {
    fn advance(&mut self, alpha: f64) -> Result<(f64, f64)> {
        self.caster.set_alpha_c(self.section, self.face, alpha)?;
        let end = self.state.tau + self.interval;
        self.caster.run_to_time(&mut self.state, end, None, |_, _| Ok(()))?;
        Ok((self.state.tau, self.read()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with(j: usize, n: usize, last: Option<f64>) -> SaState {
        SaState { j, n, last_residual: last, ..SaState::new(100.0, StopRule::default()) }
    }

    #[test]
    fn harmonic_steps() {
        let seq = StepSequence::Harmonic { a: 1.0, b: 0.0 };
        let ks: Vec<f64> = (1..=3).map(|j| step_size(&seq, &state_with(j, 1, None), 1.0).0).collect();
        assert_eq!(ks, vec![1.0, 0.5, 1.0 / 3.0]);
    }

    #[test]
    fn sign_driven_steps() {
        let (k, n) = step_size(&StepSequence::SignReset { a: 1.0 }, &state_with(4, 1, Some(2.0)), -1.0);
        assert_eq!((k, n), (0.25, 4));
        let (k, n) = step_size(&StepSequence::SignIncrement { a: 1.0 }, &state_with(4, 2, Some(2.0)), -1.0);
        assert_eq!((k, n), (1.0 / 3.0, 3));
        let (_, n) = step_size(&StepSequence::SignIncrement { a: 1.0 }, &state_with(4, 2, Some(0.0)), 3.0);
        assert_eq!(n, 3, "zero product counts as a sign change");
        let (_, n) = step_size(&StepSequence::SignReset { a: 1.0 }, &state_with(4, 2, Some(1.0)), 3.0);
        assert_eq!(n, 2);
    }

    #[test]
    fn update_arithmetic() {
        let mut s = SaState::new(100.0, StopRule::default());
        assert!(sa_step(&mut s, &MeasurementSample { tau: 0.0, measured: 10.0, model: 0.0 }, 0.5, 1));
        assert_eq!(s.alpha, 95.0);
        sa_step(&mut s, &MeasurementSample { tau: 0.0, measured: 7.0, model: 7.0 }, 0.5, 1);
        assert_eq!(s.alpha, 95.0);
        sa_step(&mut s, &MeasurementSample { tau: 0.0, measured: 70.0, model: 7.0 }, 0.0, 1);
        assert_eq!(s.alpha, 95.0);
        assert!(!sa_step(&mut s, &MeasurementSample { tau: 0.0, measured: f64::NAN, model: 7.0 }, 0.5, 1));
        assert_eq!((s.alpha, s.rejected), (95.0, 1));
    }

    #[test]
    fn step_is_linear_in_residual() {
        let mut s = SaState::new(123.0, StopRule::default());
        sa_step(&mut s, &MeasurementSample { tau: 0.0, measured: 4.5, model: 0.0 }, 0.3, 1);
        sa_step(&mut s, &MeasurementSample { tau: 0.0, measured: -4.5, model: 0.0 }, 0.3, 1);
        assert!((s.alpha - 123.0).abs() < 1e-12);
    }

    #[test]
    fn stop_rule_examples() {
        let rule = StopRule { eps: 0.2, relative: false, m: 3 };
        let mut s = SaState::new(0.0, rule);
        s.history = VecDeque::from(vec![100.0, 100.1, 99.95, 100.05]);
        assert_eq!(check_stop(&s), StopDecision::Accept { alpha: 100.0 });
        s.history = VecDeque::from(vec![100.0, 100.3, 100.0, 100.0]);
        assert_eq!(check_stop(&s), StopDecision::Continue);
        s.history = VecDeque::from(vec![100.0, 100.0, 100.0]);
        assert_eq!(check_stop(&s), StopDecision::Continue);
    }

    #[test]
    fn negative_offset_rejected() {
        assert!(StepSequence::Harmonic { a: 1.0, b: -1.0 }.validate().is_err());
        assert!(StepSequence::SignReset { a: 0.0 }.validate().is_err());
        assert!(StepSequence::from_name("bogus", 1.0, 0.0).is_err());
    }

    struct Linear {
        alpha_true: f64,
        tau: f64,
    }

    impl TunedModel for Linear {
        fn advance(&mut self, alpha: f64) -> Result<(f64, f64)> {
            self.tau += 1.0;
            Ok((self.tau, 1000.0 - 0.5 * (alpha - self.alpha_true)))
        }
    }

    #[test]
    fn fixed_point_stays_put() {
        let mut m = Linear { alpha_true: 250.0, tau: 0.0 };
        let mut meas = std::iter::repeat(1000.0);
        let t = run_tuning(
            &mut m,
            &mut meas,
            StepSequence::Harmonic { a: 1.0, b: 0.0 },
            250.0,
            StopRule::default(),
            TuningLimits::default(),
        )
        .unwrap();
        assert!(t.points.iter().all(|p| p.alpha == 250.0 && p.residual == 0.0));
        assert_eq!(t.status, TuningStatus::Accepted);
        assert_eq!(t.final_alpha, 250.0);
    }

    #[test]
    fn divergence_guard_trips() {
        let mut m = Linear { alpha_true: 250.0, tau: 0.0 };
        let mut meas = std::iter::repeat(1000.0);
        let t = run_tuning(
            &mut m,
            &mut meas,
            StepSequence::Harmonic { a: 50.0, b: 0.0 },
            200.0,
            StopRule::default(),
            TuningLimits::default(),
        )
        .unwrap();
        assert_eq!(t.status, TuningStatus::Diverged);
    }
}
