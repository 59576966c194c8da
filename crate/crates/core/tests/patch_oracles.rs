use ccm_core::geometry::Axis;
use ccm_core::material::{MaterialProperties, ThermalMedium};
use ccm_core::solver::{Advection, Boundaries, Exchange, Metric, NodeBc, Patch, PatchGeometry, RadiationLaw, TimeStep};
use proptest::prelude::*;

fn solid() -> MaterialProperties {
    MaterialProperties::constant(650.0, 7400.0, 28.0, 2.7e5, 1750.0, 10.0, (250.0, 2000.0)).unwrap()
}

fn relax_to_steady(patch: &mut Patch, m: &dyn ThermalMedium, bc: &Boundaries) {
    for _ in 0..200_000 {
        if patch.relax(m, bc, 0.9).unwrap() < 1e-11 {
            return;
        }
    }
    panic!("relaxation did not settle");
}

fn annulus_error(n: usize) -> f64 {
    let m = solid();
    let (r1, r2, t1, t2) = (2.0, 2.25, 1200.0, 600.0);
    let geom = PatchGeometry::new(
        Metric::Polar,
        Axis { start: r1, step: (r2 - r1) / (n - 1) as f64, n },
        Axis { start: 0.0, step: 0.01, n: 5 },
    )
    .unwrap();
    let mut patch = Patch::uniform(geom, &m, 900.0);
    for k in 0..5 {
        patch.fix(&m, 0, k, t1);
        patch.fix(&m, n - 1, k, t2);
    }
    let bc = Boundaries::adiabatic(&patch.geom);
    relax_to_steady(&mut patch, &m, &bc);
    let mut worst: f64 = 0.0;
    for (j, r) in patch.geom.across.coords().iter().enumerate() {
        let exact = t1 + (t2 - t1) * (r / r1).ln() / (r2 / r1).ln();
        for k in 0..5 {
            worst = worst.max((patch.t_at(j, k) - exact).abs());
        }
    }
    worst
}

#[test]
fn annulus_converges_to_logarithmic_profile() {
    let errs: Vec<f64> = [6, 11, 21].iter().map(|&n| annulus_error(n)).collect();
    assert!(errs[2] < 1e-4, "{errs:?}");
    let order = (errs[0] / errs[2]).log2() / 2.0;
    assert!(order > 1.8, "order {order}");
}

/// Transient with a cooled outer face on a thin polar shell far from the axis
/// and on the matching Cartesian slab.
#[test]
fn polar_patch_reduces_to_cartesian_far_from_axis() {
    let m = solid();
    let across = |start| Axis { start, step: 0.005, n: 21 };
    let run = |metric, start: f64, along_step: f64| {
        let geom = PatchGeometry::new(metric, across(start), Axis { start: 0.0, step: along_step, n: 3 }).unwrap();
        let mut patch = Patch::uniform(geom, &m, 1500.0);
        let mut bc = Boundaries::adiabatic(&patch.geom);
        bc.high = vec![NodeBc::exchange(Exchange::new(800.0, 320.0, 5.0e-8, RadiationLaw::Kelvin4)); 3];
        let dt = 0.5 * patch.admissible_dt(&m, &bc);
        for _ in 0..(60.0 / dt) as usize {
            patch.step(&m, &bc, TimeStep::Global(dt), None).unwrap();
        }
        patch.column(1)
    };
    let radius = 1.0e4;
    let polar = run(Metric::Polar, radius, 0.01 / radius);
    let flat = run(Metric::Cartesian, 0.0, 0.01);
    for (p, c) in polar.iter().zip(&flat) {
        assert!((p - 1500.0).abs() > 0.0);
        assert!((p - c).abs() < 1e-3 * (1500.0 - c).abs().max(1.0), "{p} vs {c}");
    }
}

/// A prescribed smooth field becomes the steady state once its own net
/// heating is subtracted as a source.
#[test]
fn manufactured_steady_state_is_recovered() {
    let m = MaterialProperties::st40();
    let geom = PatchGeometry::new(
        Metric::Polar,
        Axis { start: 1.5, step: 0.01, n: 16 },
        Axis { start: 0.0, step: 0.02, n: 11 },
    )
    .unwrap();
    let target = |r: f64, th: f64| 900.0 + 250.0 * ((r - 1.5) * 9.0).sin() + 80.0 * (th * 12.0).cos();
    let mut exact = Patch::uniform(geom.clone(), &m, 900.0);
    for j in 0..geom.across.n {
        for k in 0..geom.along.n {
            exact.set(&m, j, k, target(geom.across.coord(j), geom.along.coord(k)));
        }
    }
    let mut bc = Boundaries::adiabatic(&geom);
    bc.high = vec![NodeBc::exchange(Exchange::new(600.0, 350.0, 4.0e-8, RadiationLaw::Kelvin4)); geom.along.n];
    bc.low = vec![NodeBc::exchange(Exchange::new(150.0, 1400.0, 0.0, RadiationLaw::Kelvin4)); geom.along.n];
    bc.source = Some(exact.net_rate(&m, &bc).iter().map(|r| -r).collect());
    let mut patch = Patch::uniform(geom.clone(), &m, 1000.0);
    relax_to_steady(&mut patch, &m, &bc);
    for (got, want) in patch.temperatures().iter().zip(exact.temperatures()) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn uniform_state_in_equilibrium_stays_put() {
    let m = MaterialProperties::st40();
    let t = 1320.0;
    let geom = PatchGeometry::new(
        Metric::Polar,
        Axis { start: 3.0, step: 0.01, n: 11 },
        Axis { start: 0.0, step: 0.005, n: 9 },
    )
    .unwrap();
    let mut patch = Patch::uniform(geom.clone(), &m, t);
    let mut bc = Boundaries::adiabatic(&geom);
    let e = NodeBc::exchange(Exchange::new(900.0, t, 5.67e-8, RadiationLaw::Kelvin4));
    bc.low = vec![e; geom.along.n];
    bc.high = vec![e; geom.along.n];
    bc.advection = Some(Advection { speed: 0.004, inflow_h: vec![m.enthalpy(t); geom.across.n] });
    let dt = 0.9 * patch.admissible_dt(&m, &bc);
    for _ in 0..500 {
        let r = patch.step(&m, &bc, TimeStep::Global(dt), None).unwrap();
        assert!(r.max_change < 1e-9);
    }
    assert!(patch.temperatures().iter().all(|x| (x - t).abs() < 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn field_stays_within_initial_and_ambient_bounds(
        seed_field in prop::collection::vec(400.0f64..1800.0, 8 * 6),
        t_env in 350.0f64..1500.0,
        alpha in 0.0f64..3000.0,
        speed in 0.0f64..0.02,
        t_in in 400.0f64..1800.0,
    ) {
        let m = MaterialProperties::st40();
        let geom = PatchGeometry::new(
            Metric::Cartesian,
            Axis { start: 0.0, step: 0.01, n: 8 },
            Axis { start: 0.0, step: 0.02, n: 6 },
        ).unwrap();
        let mut patch = Patch::uniform(geom.clone(), &m, 1000.0);
        for j in 0..8 {
            for k in 0..6 {
                patch.set(&m, j, k, seed_field[k * 8 + j]);
            }
        }
        let mut bc = Boundaries::adiabatic(&geom);
        bc.high = vec![NodeBc::exchange(Exchange::new(alpha, t_env, 0.0, RadiationLaw::Kelvin4)); 6];
        bc.advection = Some(Advection { speed, inflow_h: vec![m.enthalpy(t_in); 8] });
        let lo = seed_field.iter().copied().chain([t_env, t_in]).fold(f64::INFINITY, f64::min);
        let hi = seed_field.iter().copied().chain([t_env, t_in]).fold(f64::NEG_INFINITY, f64::max);
        let dt = 0.9 * patch.admissible_dt(&m, &bc);
        for _ in 0..200 {
            let r = patch.step(&m, &bc, TimeStep::Global(dt), None).unwrap();
            prop_assert!(r.relative_defect() < 1e-9);
            for &t in patch.temperatures() {
                prop_assert!(t >= lo - 1e-9 && t <= hi + 1e-9, "{} outside [{}, {}]", t, lo, hi);
            }
        }
    }
}
