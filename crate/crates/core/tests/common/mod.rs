//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use ccm_core::geometry::{Axis, Membership};
use ccm_core::ident_lsq::{fit_alpha_c, fit_alpha_p, FluxSamples};
use ccm_core::material::{MaterialProperties, ThermalMedium};
use ccm_core::solver::front::locate_crossing;
use ccm_core::solver::{Boundaries, Caster, CasterSetup, Metric, Patch, PatchGeometry, Schedule, TimeStep};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::{erf, erfc};

/// Two-phase freezing of a half-space with equal phase properties.
pub struct Neumann {
    pub c: f64,
    pub rho: f64,
    pub lambda: f64,
    pub latent: f64,
    pub t_wall: f64,
    pub t_melt: f64,
    pub t_init: f64,
}

impl Neumann {
    pub fn steel_like() -> Self {
        Self { c: 700.0, rho: 7000.0, lambda: 30.0, latent: 2.7e5, t_wall: 1000.0, t_melt: 1700.0, t_init: 1800.0 }
    }

    pub fn diffusivity(&self) -> f64 {
        self.lambda / (self.rho * self.c)
    }

    /// Root of `St_s / (e^g^2 erf g) - St_l / (e^g^2 erfc g) = g sqrt(pi)`, by bisection.
    pub fn gamma(&self) -> f64 {
        let st_s = self.c * (self.t_melt - self.t_wall) / self.latent;
        let st_l = self.c * (self.t_init - self.t_melt) / self.latent;
        let f = |g: f64| {
            let e = (g * g).exp();
            st_s / (e * erf(g)) - st_l / (e * erfc(g)) - g * std::f64::consts::PI.sqrt()
        };
        let (mut lo, mut hi) = (1e-6, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn front(&self, t: f64) -> f64 {
        2.0 * self.gamma() * (self.diffusivity() * t).sqrt()
    }

    pub fn material(&self, dt_smear: f64) -> MaterialProperties {
        MaterialProperties::constant(self.c, self.rho, self.lambda, self.latent, self.t_melt, dt_smear, (300.0, 2000.0))
            .expect("valid constant material")
    }
}

pub struct StefanRun {
    pub front: f64,
    pub exact: f64,
    /// Root-mean-square relative error of the isotherm position over the
    /// second half of the run, sampled every step.
    pub rms_error: f64,
    /// Solidified thickness from the nodal liquid fraction at the end.
    pub solid_thickness: f64,
    pub worst_defect: f64,
    pub bounds_ok: bool,
}

/// Explicit enthalpy run on a 1D slab of `length` with spacing `dx` until `t_end`.
pub fn stefan_run(problem: &Neumann, dx: f64, length: f64, t_end: f64, dt_smear: f64) -> StefanRun {
    let mat = problem.material(dt_smear);
    let n = (length / dx).round() as usize + 1;
    let geom = PatchGeometry::new(
        Metric::Cartesian,
        Axis { start: 0.0, step: dx, n },
        Axis { start: 0.0, step: 1.0, n: 2 },
    )
    .unwrap();
    let mut patch = Patch::uniform(geom, &mat, problem.t_init);
    for k in 0..2 {
        patch.fix(&mat, 0, k, problem.t_wall);
    }
    let bc = Boundaries::adiabatic(&patch.geom);
    let adm = patch.admissible_dt(&mat, &bc);
    let steps = (t_end / (0.9 * adm)).ceil() as usize;
    let dt = t_end / steps as f64;
    let mut worst: f64 = 0.0;
    let mut bounds_ok = true;
    let report_every = (steps / 10).max(1);
    let mut acc = ccm_core::solver::StepReport::default();
    let coords = patch.geom.across.coords();
    let (mut sq, mut count) = (0.0, 0usize);
    for s in 1..=steps {
        let r = patch.step(&mat, &bc, TimeStep::Global(dt), None).unwrap();
        acc.accumulate(&r);
        let t = s as f64 * dt;
        if t >= 0.5 * t_end {
            let x = locate_crossing(&coords, &patch.column(0), mat.t_kr(), true).expect("front exists").xi;
            let e = (x - problem.front(t)) / problem.front(t);
            sq += e * e;
            count += 1;
        }
        if s % report_every == 0 || s == steps {
            worst = worst.max(acc.relative_defect());
            acc = Default::default();
            bounds_ok &= patch.temperatures().iter().all(|t| *t >= problem.t_wall - 1e-9 && *t <= problem.t_init + 1e-9);
        }
    }
    let front = locate_crossing(&coords, &patch.column(0), mat.t_kr(), true).expect("front exists").xi;
    let solid_thickness = patch
        .column(0)
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let width = if j == 0 || j + 1 == n { 0.5 * dx } else { dx };
            width * (1.0 - mat.liquid_fraction(t))
        })
        .sum();
    StefanRun {
        front,
        exact: problem.front(t_end),
        rms_error: (sq / count as f64).sqrt(),
        solid_thickness,
        worst_defect: worst,
        bounds_ok,
    }
}

/// Conductivity helper for tests that need a `dyn ThermalMedium`.
pub fn medium(m: &MaterialProperties) -> &dyn ThermalMedium {
    m
}

/// Steady channel temperature at distance `s` from the inlet for a uniform wall.
pub fn channel_closed_form(setup: &CasterSetup, t_wall: f64, t_in: f64, s: f64) -> f64 {
    let w = &setup.water;
    let (gw, ge) = (w.p_i * w.alpha_1, w.p_e * w.alpha_e);
    let t_eq = (gw * t_wall + ge * w.t_e) / (gw + ge);
    let inv_len = (gw + ge) / (w.c_w * w.s_ch * w.v_water);
    t_eq + (t_in - t_eq) * (-inv_len * s).exp()
}

/// Channel temperatures, inlet first, after the water has crossed the
/// uniform wall three times, with the node spacing.
pub fn steady_channel(mut setup: CasterSetup, t_wall: f64, t_in: f64) -> (CasterSetup, Vec<f64>, f64) {
    setup.water.inlet = Schedule::Constant(t_in);
    let caster = Caster::new(Arc::new(MaterialProperties::st40()), setup).unwrap();
    let mut s = caster.initial_state();
    let g = s.wall.geom.clone();
    for k in 0..g.along.n {
        for j in 0..g.across.n {
            s.wall.set(&caster.setup().wall, j, k, t_wall);
        }
    }
    let v = caster.setup().water.v_water;
    let length = g.along.step * (g.along.n - 1) as f64;
    let dt = 0.37 * g.along.step / v;
    for _ in 0..(3.0 * length / (v * dt)).ceil() as usize {
        caster.step_water(&mut s, dt).unwrap();
        s.tau += dt;
    }
    s.water.reverse();
    (caster.setup().clone(), s.water, g.along.step)
}

/// Largest relative deviation of the steady channel from the closed form.
pub fn channel_error(setup: CasterSetup, t_wall: f64, t_in: f64) -> f64 {
    let (setup, water, dz) = steady_channel(setup, t_wall, t_in);
    water
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let exact = channel_closed_form(&setup, t_wall, t_in, i as f64 * dz);
            ((t - exact) / exact).abs()
        })
        .fold(0.0, f64::max)
}

pub const SCAN_RANGE: (f64, f64) = (0.0, 2000.0);
pub const SCAN_STEP: f64 = 1e-3 * (SCAN_RANGE.1 - SCAN_RANGE.0);

/// Argmin of `objective` over `SCAN_RANGE` with spacing `SCAN_STEP`.
pub fn scan(objective: impl Fn(f64) -> f64) -> f64 {
    let n = ((SCAN_RANGE.1 - SCAN_RANGE.0) / SCAN_STEP).round() as usize;
    (0..=n)
        .map(|i| SCAN_RANGE.0 + i as f64 * SCAN_STEP)
        .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
        .unwrap()
}

/// Noisy flux samples from a random profile, with the footprint half-width.
pub fn lsq_instance(rng: &mut ChaCha8Rng) -> (FluxSamples, f64) {
    let n = rng.random_range(20..80);
    let w = rng.random_range(0.02..0.08);
    let (alpha_c, alpha_p) = (rng.random_range(100.0..600.0), rng.random_range(100.0..1200.0));
    let mut s = FluxSamples { coords: vec![], membership: vec![], p: vec![], q: vec![], y: vec![] };
    for i in 0..n {
        let inside = rng.random_bool(0.5);
        let y = rng.random_range(-w..w);
        let m = if inside { Membership::B { nozzle: 0, y } } else { Membership::K };
        let q = rng.random_range(-900.0..-50.0);
        let alpha = if inside { alpha_c + alpha_p * (1.0 - y * y / (w * w)) } else { alpha_c };
        s.coords.push(i as f64);
        s.membership.push(m);
        s.q.push(q);
        s.p.push(alpha * q + rng.random_range(-4000.0..4000.0));
        s.y.push(m.offset());
    }
    (s, w)
}

/// Largest distance, in scan steps, between each closed form and its scan
/// over `cases` instances that have nodes in both sets.
pub fn lsq_scan_deviation(seed: u64, cases: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dc, mut dp, mut done) = (0.0f64, 0.0f64, 0);
    while done < cases {
        let (s, w) = lsq_instance(&mut rng);
        let k: Vec<usize> = (0..s.len()).filter(|&i| !s.membership[i].is_b()).collect();
        let b: Vec<usize> = (0..s.len()).filter(|&i| s.membership[i].is_b()).collect();
        if k.is_empty() || b.is_empty() {
            continue;
        }
        let jc = |a: f64| k.iter().map(|&i| (s.p[i] - s.q[i] * a).powi(2)).sum::<f64>();
        let c = fit_alpha_c(&s).unwrap().value;
        dc = dc.max((c - scan(jc)).abs() / SCAN_STEP);
        let g = |i: usize| 1.0 - s.y[i].unwrap().powi(2) / (w * w);
        let jp = |a: f64| b.iter().map(|&i| (s.p[i] - s.q[i] * (c + a * g(i))).powi(2)).sum::<f64>();
        let p = fit_alpha_p(&s, c, w).unwrap().value;
        dp = dp.max((p - scan(jp)).abs() / SCAN_STEP);
        done += 1;
    }
    (dc, dp)
}
