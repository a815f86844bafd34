use geodyn::integrators::{
    run, step_vi1, step_vi1_adjoint, step_vi2, DiscreteLagrangian, Form, LagrangianId, Method,
    RunConfig, TrajectoryRecord, Vi2Ordering,
};
use geodyn::kepler::{
    conserved, noether_residual, potential, solve_kepler, vec2, KeplerOrbit, KeplerPart,
    PhaseState, Potential, Quantity, SplitPotential, Vector,
};
use geodyn::modified::{linear_dispersion, linear_modified_series};
use geodyn::relativistic::{
    del_relativistic, legendre_plus_relativistic, run_relativistic, ExtPhaseState, RelMethod, TimePoint,
};
use geodyn::variational::expr::parse_expr;
use geodyn::variational::{
    builtin, check, check_general, vainberg_lagrangian, CheckOptions, Jet, SamplePoint,
    BUILTIN_NAMES,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn bound_state() -> impl Strategy<Value = PhaseState> {
    // Radius in [0.6, 2], speed below escape.
    (0.6f64..2.0, 0.0f64..std::f64::consts::TAU, 0.3f64..0.9, -1.2f64..1.2).prop_map(
        |(r, th, frac, dir)| {
            let speed = frac * (2.0 / r).sqrt();
            let (c, s) = (th.cos(), th.sin());
            let phi = th + std::f64::consts::FRAC_PI_2 + 0.5 * dir;
            PhaseState::planar(r * c, r * s, speed * phi.cos(), speed * phi.sin())
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_parts_sum_to_whole(w in 0.0f64..1.0, x1 in 0.3f64..2.0, x2 in -2.0f64..2.0) {
        let split = SplitPotential::kepler_pair(w).unwrap();
        let x = vec2(x1, x2);
        let parts: f64 = (0..split.len()).map(|i| split.part(i).value(&x).unwrap()).sum();
        prop_assert!((parts - potential(&x).unwrap()).abs() < 1e-14);
        let g = split.gradient(&x).unwrap();
        for i in 0..2 {
            let d = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += d;
            xm[i] -= d;
            let fd = (split.value(&xp).unwrap() - split.value(&xm).unwrap()) / (2.0 * d);
            prop_assert!((fd - g[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn kepler_equation_residual(m in -20.0f64..20.0, e in 0.0f64..0.95) {
        let big_e = solve_kepler(m, e).unwrap();
        let reduced = m.rem_euclid(std::f64::consts::TAU);
        let r = (big_e - e * big_e.sin() - reduced).rem_euclid(std::f64::consts::TAU);
        prop_assert!(r.min(std::f64::consts::TAU - r) < 1e-12);
    }

    #[test]
    fn analytic_orbit_conserves_invariants(s in bound_state(), t in 0.0f64..30.0) {
        let orbit = KeplerOrbit::from_state(&s).unwrap();
        let c0 = conserved(&s).unwrap();
        let c1 = conserved(&orbit.state_at(t).unwrap()).unwrap();
        prop_assert!((c0.h - c1.h).abs() < 1e-10);
        prop_assert!((c0.m - c1.m).abs() < 1e-10);
        prop_assert!((&c0.a - &c1.a).amax() < 1e-9);
        let back = orbit.state_at(orbit.period()).unwrap();
        prop_assert!(back.max_abs_diff(&s) < 1e-8);
    }

    #[test]
    fn noether_identity_holds_off_shell(
        a in 0.8f64..2.0, b in 0.5f64..1.5, k in 1.0f64..3.0, c in -0.3f64..0.3,
    ) {
        let curve = move |t: f64| Ok(PhaseState::planar(
            a * t.cos() + c * (k * t).sin(),
            b * t.sin(),
            -a * t.sin() + c * k * (k * t).cos(),
            b * t.cos(),
        ));
        for q in Quantity::ALL {
            let coarse = noether_residual(&TrajectoryRecord::from_fn("c", 0.01, 100, curve).unwrap(), q).unwrap();
            let fine = noether_residual(&TrajectoryRecord::from_fn("c", 0.005, 200, curve).unwrap(), q).unwrap();
            prop_assert!(fine < 1e-3);
            prop_assert!(coarse / fine > 3.0 && coarse / fine < 5.0, "{:?} {} {}", q, coarse, fine);
        }
    }

    #[test]
    fn composition_methods_are_symplectic(s in bound_state(), w in 0.05f64..0.95, mi in 0usize..6) {
        let split = SplitPotential::kepler_pair(w).unwrap();
        let m = Method::ALL[mi];
        let flat = |p: &PhaseState| [p.x[0], p.x[1], p.v[0], p.v[1]];
        let z = flat(&s);
        let d = 1e-6;
        let mut j = [[0.0; 4]; 4];
        for col in 0..4 {
            let shift = |e: f64| {
                let mut w = z;
                w[col] += e;
                m.step(&PhaseState::planar(w[0], w[1], w[2], w[3]), &split, 0.05).unwrap()
            };
            let (p, q) = (flat(&shift(d)), flat(&shift(-d)));
            for row in 0..4 {
                j[row][col] = (p[row] - q[row]) / (2.0 * d);
            }
        }
        // Jᵀ Ω J = Ω, Ω = [[0, I], [−I, 0]].
        for a in 0..4 {
            for b in 0..4 {
                let mut acc = 0.0;
                for r in 0..2 {
                    acc += j[r][a] * j[r + 2][b] - j[r + 2][a] * j[r][b];
                }
                let expect = match (a, b) {
                    (0, 2) | (1, 3) => 1.0,
                    (2, 0) | (3, 1) => -1.0,
                    _ => 0.0,
                };
                prop_assert!((acc - expect).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn adjoint_identities(s in bound_state(), w in 0.0f64..1.0, h in 0.01f64..0.1) {
        let split = SplitPotential::kepler_pair(w).unwrap();
        let back = step_vi1_adjoint(&step_vi1(&s, &split, -h).unwrap(), &split, h).unwrap();
        prop_assert!(back.max_abs_diff(&s) < 1e-12);
        // vi2 is self-adjoint: Φ_h ∘ Φ_{−h} = id.
        for o in [Vi2Ordering::AdjointLast, Vi2Ordering::AdjointFirst] {
            let back = step_vi2(&step_vi2(&s, &split, -h, o).unwrap(), &split, h, o).unwrap();
            prop_assert!(back.max_abs_diff(&s) < 1e-12);
        }
        let first = DiscreteLagrangian::new(LagrangianId::First, &split);
        let adjoint = DiscreteLagrangian::new(LagrangianId::Adjoint, &split);
        let xb: Vector = &s.x + &s.v * h;
        let gap = adjoint.value(&s.x, &xb, h).unwrap() - first.value(&xb, &s.x, -h).unwrap();
        prop_assert!(gap.abs() < 1e-12);
    }

    #[test]
    fn two_step_form_matches_composition(s in bound_state(), w in 0.0f64..1.0, mi in 0usize..6) {
        let m = Method::ALL[mi];
        let mut cfg = RunConfig::new(m, 0.02, 50);
        cfg.split = SplitPotential::kepler_pair(w).unwrap();
        cfg.diagnostics = false;
        let a = run(&cfg, &s).unwrap();
        cfg.form = Form::TwoStep;
        let b = run(&cfg, &s).unwrap();
        for (p, q) in a.samples.iter().zip(&b.samples) {
            prop_assert!(p.state.max_abs_diff(&q.state) < 1e-9, "{} step {}", m, p.step);
        }
    }

    #[test]
    fn relativistic_two_step_matches_k1(r in 0.8f64..2.0, u in 0.5f64..1.0) {
        let z0 = ExtPhaseState::on_shell(0.0, vec2(r, 0.0), vec2(0.0, u));
        let pot = KeplerPart { weight: 1.0 };
        let h = 0.05;
        let a = run_relativistic(RelMethod::K1, &z0, &pot, h, 100).unwrap();
        // Per step: whole-run gaps grow through close pericentre passes on
        // eccentric seeds and say nothing about the schemes themselves.
        let point = |n: usize| TimePoint { t: a.samples[n].state.t, x: a.samples[n].state.x.clone() };
        for n in 1..100 {
            let next = del_relativistic(&point(n - 1), &point(n), &pot, h).unwrap();
            let want = &a.samples[n + 1].state;
            prop_assert!((next.t - want.t).abs() < 1e-12);
            prop_assert!((&next.x - &want.x).amax() < 1e-12);
            let (gamma, u) = legendre_plus_relativistic(&point(n - 1), &point(n), &pot, h).unwrap();
            let have = &a.samples[n].state;
            prop_assert!((gamma - have.gamma).abs() < 1e-12);
            prop_assert!((&u - &have.u).amax() < 1e-12);
        }
    }

    #[test]
    fn series_agrees_with_dispersion(lambda in 0.1f64..10.0, z in 0.0f64..0.25) {
        let h = (z / lambda).sqrt();
        let omega = linear_dispersion(lambda, h).unwrap();
        let s = linear_modified_series(lambda, h, 20).unwrap();
        prop_assert!(s.within_radius);
        prop_assert!((s.value - omega * omega).abs() < 1e-12 * lambda.max(1.0));
    }

    #[test]
    fn vainberg_is_linear(
        c1 in -3.0f64..3.0, c2 in -3.0f64..3.0,
        x in -2.0f64..2.0, v in -2.0f64..2.0, a in -2.0f64..2.0,
    ) {
        let n1 = |j: &Jet| -> geodyn::Result<DVector<f64>> { Ok(&j.a + j.x.map(|x| x * x * x)) };
        let n2 = |j: &Jet| -> geodyn::Result<DVector<f64>> { Ok(j.x.map(|x| x.sin()) + &j.v * 0.5) };
        let both = |j: &Jet| -> geodyn::Result<DVector<f64>> { Ok(n1(j)? * c1 + n2(j)? * c2) };
        let jet = Jet {
            t: 0.3,
            x: DVector::from_element(1, x),
            v: DVector::from_element(1, v),
            a: DVector::from_element(1, a),
        };
        let l1 = vainberg_lagrangian(&n1, &jet).unwrap();
        let l2 = vainberg_lagrangian(&n2, &jet).unwrap();
        let l = vainberg_lagrangian(&both, &jet).unwrap();
        let expect = c1 * l1 + c2 * l2;
        prop_assert!((l - expect).abs() <= 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn general_check_agrees_with_specialized(
        raw in prop::collection::vec(
            (0.5f64..3.0, 0.0f64..std::f64::consts::TAU, 0.0f64..1.0, 0.0f64..std::f64::consts::TAU, 0.0f64..1.0),
            50,
        ),
    ) {
        let opts = CheckOptions::default();
        for name in BUILTIN_NAMES {
            let sys = builtin(name).unwrap();
            let vmax = if name == "relativistic" { 0.5 } else { 2.0 };
            let samples: Vec<SamplePoint> = raw
                .iter()
                .map(|&(r, th, s, psi, t)| {
                    let (x, v) = if sys.dim() == 1 {
                        (vec![r * th.cos().signum()], vec![vmax * s * psi.cos()])
                    } else {
                        (
                            vec![r * th.cos(), r * th.sin()],
                            vec![vmax * s * psi.cos(), vmax * s * psi.sin()],
                        )
                    };
                    SamplePoint { t, x: DVector::from_vec(x), v: DVector::from_vec(v) }
                })
                .collect();
            let special = check(sys.as_ref(), &samples, &opts).unwrap();
            let general = check_general(sys.as_ref(), &samples, &opts).unwrap();
            prop_assert_eq!(special.pass, general.pass, "{}", name);
        }
    }

    #[test]
    fn parsed_arithmetic_matches_direct(a in -5.0f64..5.0, b in 0.5f64..5.0, c in -3.0f64..3.0) {
        let src = format!("({a}) * x1 + ({b}) ^ 2 / (v2 - ({c}) - 10) - abs(t)");
        let e = parse_expr(&src, 2).unwrap();
        let (t, x, v): (f64, [f64; 2], [f64; 2]) = (-0.7, [1.3, 0.0], [0.0, 2.5]);
        let direct = a * x[0] + b * b / (v[1] - c - 10.0) - t.abs();
        prop_assert!((e.eval(t, &x, &v) - direct).abs() < 1e-12 * direct.abs().max(1.0));
    }
}

/// Passing residuals are finite-difference truncation error and shrink like `δ²`.
#[test]
fn passing_residuals_scale_with_delta_squared() {
    let sys = builtin("kepler").unwrap();
    let cloud: Vec<SamplePoint> = geodyn::variational::default_cloud(sys.as_ref())
        .unwrap()
        .into_iter()
        .filter(|s| s.x.norm() >= 0.5)
        .collect();
    let at = |delta: f64| {
        check(sys.as_ref(), &cloud, &CheckOptions { delta, tolerance: 1e-4 }).unwrap()
    };
    let coarse = at(1e-4).condition("(b)").unwrap().residual;
    let fine = at(1e-5).condition("(b)").unwrap().residual;
    assert!(coarse / fine > 30.0, "{coarse:e} vs {fine:e}");
}
