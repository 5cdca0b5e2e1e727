use std::sync::Arc;

use proptest::prelude::*;

use combsim::evolution::{EvolutionStepper, ModelCoefficients};
use combsim::grid::{gagliardo_nirenberg_ratio, GridFunction, GridSpec, NormKind};
use combsim::model::{accretivity_constant, compute_alpha_beta, Field};
use combsim::reaction::{h2_lipschitz_estimate, SamplingConfig};
use combsim::scenario::{Method, Scenario, ScenarioFile};
use combsim::solver::{self, fixed_point_residual, picard_window, WindowChoices};

fn grid() -> GridSpec {
    GridSpec::new(-10.0, 10.0, 201).unwrap()
}

fn bumps() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-4.0f64..4.0, 0.6f64..2.5, -2.0f64..2.0), 1..4)
}

fn from_bumps(g: GridSpec, b: &[(f64, f64, f64)]) -> GridFunction {
    GridFunction::from_fn(g, |x| b.iter().map(|(c, w, a)| a * (-((x - c) / w).powi(2)).exp()).sum()).unwrap()
}

/// Two-layer scenario text with the given constants and a moving front.
fn scenario_text(a: [f64; 2], b: [f64; 2], c: [f64; 2], lambda: [f64; 2], y: [f64; 2], k: f64, e: f64) -> String {
    let mut s = format!(
        "name = \"prop\"\n[grid]\nx_min = -10.0\nx_max = 10.0\nnx = 101\n\
         [constants]\ncouplings = [0.3]\nheat_loss = [0.1, 0.05]\nactivation_energy = {e}\n\
         [solver]\ndt = 0.01\nhorizon = 0.3\n"
    );
    for i in 0..2 {
        s += &format!(
            "[[layer]]\nK = {k}\na = {}\nb = {}\nc = {}\nd = 0.4\nlambda = {}\n\
             y = {{ expr = [{{ tanh_ramp = {{ center = 0.0, width = 1.5, lo = 0.05, hi = {} }} }}], speed = 0.4 }}\n\
             phi = [{{ gauss = {{ center = {}, width = 1.5, amp = 0.8 }} }}]\n",
            a[i],
            b[i],
            c[i],
            lambda[i],
            y[i],
            i as f64 - 0.5
        );
    }
    s
}

fn build(text: &str) -> Scenario {
    ScenarioFile::parse(text).unwrap().build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sobolev_and_gagliardo_nirenberg_constants(b in bumps()) {
        for g in [grid(), grid().refined()] {
            let f = from_bumps(g, &b);
            prop_assume!(f.norm_h2() > 1e-6);
            // sup^2 <= 2 ||f|| ||f'|| <= ||f||_{H1}^2 in one dimension
            prop_assert!(f.norm_sup() <= f.norm_h1() * (1.0 + 1e-9));
            if let Some(r) = gagliardo_nirenberg_ratio(&f) {
                prop_assert!(r <= 1.0 + 1e-9, "{r}");
            }
        }
    }

    #[test]
    fn stencils_are_linear(b1 in bumps(), b2 in bumps(), s in -3.0f64..3.0, t in -3.0f64..3.0) {
        let g = grid();
        let (f, h) = (from_bumps(g, &b1), from_bumps(g, &b2));
        let combo = f.scaled(s).unwrap().axpy(t, &h).unwrap();
        for (lhs, rhs) in [
            (combo.first_derivative(), f.first_derivative().scaled(s).unwrap().axpy(t, &h.first_derivative()).unwrap()),
            (combo.second_derivative(), f.second_derivative().scaled(s).unwrap().axpy(t, &h.second_derivative()).unwrap()),
        ] {
            let scale = 1.0 + rhs.norm_sup();
            prop_assert!(lhs.sub(&rhs).unwrap().norm_sup() <= 1e-12 * scale);
        }
    }

    #[test]
    fn validated_constant_scenarios_respect_parabolicity(
        a in prop::array::uniform2(0.5f64..3.0),
        b in prop::array::uniform2(0.0f64..2.0),
        c in prop::array::uniform2(0.0f64..1.0),
        lambda in prop::array::uniform2(0.5f64..3.0),
        y in prop::array::uniform2(0.1f64..1.0),
    ) {
        let s = build(&scenario_text(a, b, c, lambda, y, 1.0, 1.0));
        let r = s.validate();
        prop_assert!(r.passed, "{:?}", r.violations);
        let times = s.model.sample_times(s.solver.horizon, s.solver.dt);
        for i in 0..2 {
            for &t in &times {
                let (alpha, _) = s.model.alpha_beta(i, t).unwrap();
                for &v in alpha.values() {
                    prop_assert!(r.mu0 <= v && v <= r.mu1, "{} <= {v} <= {}", r.mu0, r.mu1);
                }
            }
        }
    }

    #[test]
    fn alpha_beta_homogeneous_in_lambda_and_c(
        lambda in 0.5f64..3.0,
        c in 0.0f64..2.0,
        t in 0.0f64..0.3,
    ) {
        let s = build(&scenario_text([1.0, 1.0], [1.0, 0.5], [c, c], [lambda, lambda], [0.8, 0.6], 1.0, 1.0));
        let mut doubled = s.model.layers[0].clone();
        let g = *s.grid();
        doubled.lambda = Field::constant(g, 0.0).unwrap().axpy(2.0, &s.model.layers[0].lambda).unwrap();
        doubled.c = Field::constant(g, 0.0).unwrap().axpy(2.0, &s.model.layers[0].c).unwrap();
        let fuel = s.model.fuel.sample(0, t);
        let (a1, b1) = compute_alpha_beta(&s.model.layers[0], &fuel, 0, t).unwrap();
        let (a2, b2) = compute_alpha_beta(&doubled, &fuel, 0, t).unwrap();
        prop_assert_eq!(a2, a1.scaled(2.0).unwrap());
        prop_assert_eq!(b2, b1.scaled(2.0).unwrap());
    }

    #[test]
    fn accretivity_is_nonnegative_and_monotone(b1 in bumps(), b2 in bumps(), grow in 1.0f64..3.0) {
        let g = grid();
        let (axx, bx) = (from_bumps(g, &b1), from_bumps(g, &b2));
        let base = accretivity_constant(std::slice::from_ref(&axx), std::slice::from_ref(&bx));
        prop_assert!(base >= 0.0);
        let bigger = accretivity_constant(&[axx.scaled(grow).unwrap()], &[bx.scaled(grow).unwrap()]);
        prop_assert!(bigger >= base);
        let more = accretivity_constant(&[axx.clone(), bx.clone()], &[bx]);
        prop_assert!(more >= base);
    }

    #[test]
    fn constant_parameters_always_pass_coefficient_clauses(
        a in 0.1f64..5.0, b in 0.0f64..5.0, c in 0.0f64..5.0, lambda in 0.1f64..5.0,
    ) {
        let s = build(&scenario_text([a, a], [b, b], [c, c], [lambda, lambda], [0.9, 0.9], 1.0, 1.0));
        let r = s.validate();
        prop_assert!(r.violations.iter().all(|v| v.group != combsim::model::ClauseGroup::Coefficients), "{:?}", r.violations);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn each_step_is_stable(b in bumps(), lambda in 0.5f64..2.5, c in 0.0f64..1.0) {
        let s = build(&scenario_text([1.0, 1.2], [1.0, 0.5], [c, c], [lambda, 1.0], [0.9, 0.7], 1.0, 1.0));
        let r = s.validate();
        prop_assume!(r.passed);
        let g = *s.grid();
        let v0 = from_bumps(g, &b).values().to_vec();
        let eps = f64::EPSILON * 10.0 * g.nx() as f64;
        for i in 0..2 {
            let st = EvolutionStepper::new(ModelCoefficients::new(Arc::clone(&s.model), i), s.solver.dt, 0.5).unwrap();
            let mut v = v0.clone();
            v[0] = 0.0;
            *v.last_mut().unwrap() = 0.0;
            for k in 0..30 {
                let before = GridFunction::new(g, v.clone()).unwrap().norm_l2();
                st.advance(&mut v, k, k + 1).unwrap();
                let after = GridFunction::new(g, v.clone()).unwrap().norm_l2();
                let allowed = (r.beta_accretivity[i] * s.solver.dt).exp() * (1.0 + eps);
                prop_assert!(after <= before * allowed, "layer {i} step {k}: {after} > {before} * {allowed}");
            }
        }
    }

    #[test]
    fn picard_fixed_point_unique_and_in_the_contraction_set(k in 0.5f64..2.0, e in 0.5f64..3.0) {
        let s = build(&scenario_text([1.0, 1.5], [1.0, 0.5], [0.5, 0.3], [1.0, 2.0], [0.9, 0.8], k, e));
        let run = s.run(Method::Picard).unwrap();
        let params = run.window.unwrap();
        let out = run.picard.unwrap();
        prop_assert!(params.contraction_bound < 1.0);
        prop_assert!(out.ratios.iter().all(|&q| q <= params.contraction_bound));
        prop_assert!(out.membership.iter().all(|m| m.inside && m.sup_h2 <= params.r && m.sup_free_distance <= params.m));

        let report = s.validate();
        let problem = s.problem(&report).unwrap();
        let residual = fixed_point_residual(&problem, &out.trajectory, 0).unwrap();
        prop_assert!(residual <= s.solver.tol, "{residual}");

        // start from zero instead of the free evolution
        let phi: Vec<Vec<f64>> = s.phi.iter().map(|p| p.values().to_vec()).collect();
        let zeros = vec![vec![vec![0.0; s.grid().nx()]; 2]; out.steps + 1];
        let other = picard_window(&problem, &phi, 0, out.steps, s.picard_config(), Some(&params), Some(&zeros)).unwrap();
        let d = out.trajectory.sup_distance(&other.trajectory, NormKind::L2).unwrap();
        prop_assert!(d <= 2.0 * s.solver.tol, "{d}");
    }

    #[test]
    fn sampled_h2_lipschitz_constant_is_finite(seed in 0u64..1000) {
        let s = build(&scenario_text([1.0, 1.5], [1.0, 0.5], [0.5, 0.3], [1.0, 2.0], [0.9, 0.8], 1.0, 1.0));
        let ctx = s.context().unwrap();
        let cfg = SamplingConfig { seed, ..SamplingConfig::default() };
        let h2 = h2_lipschitz_estimate(&ctx, 2.0, 0.3, cfg).value;
        prop_assert!(h2.is_finite() && h2 > 0.0);
    }

    #[test]
    fn export_round_trips(
        a in prop::array::uniform2(0.5f64..3.0),
        y in prop::array::uniform2(0.1f64..1.0),
        k in 0.0f64..2.0,
        e in 0.0f64..4.0,
        seed in any::<u64>(),
        m in prop::option::of(1.5f64..10.0),
    ) {
        let mut f = ScenarioFile::parse(&scenario_text(a, [1.0, 0.5], [0.5, 0.3], [1.0, 2.0], y, k, e)).unwrap();
        f.sampling.seed = seed;
        f.window.choices = WindowChoices { m, ..WindowChoices::default() };
        let back = ScenarioFile::parse(&f.export().unwrap()).unwrap();
        prop_assert_eq!(back, f);
    }
}

#[test]
fn windowed_solve_restarts_picard_and_matches_mol() {
    let mut s = build(&scenario_text([1.0, 1.5], [1.0, 0.5], [0.5, 0.3], [1.0, 2.0], [0.9, 0.8], 1.0, 1.0));
    s.solver.windows = 3;
    let run = s.run(Method::Global).unwrap();
    let g = run.global.unwrap();
    assert!(g.windows.len() >= 2);

    // the first window is exactly a single picard solve on [0, T']
    let report = s.validate();
    let problem = s.problem(&report).unwrap();
    let first = &g.windows[0];
    let phi: Vec<Vec<f64>> = s.phi.iter().map(|p| p.values().to_vec()).collect();
    let direct = picard_window(&problem, &phi, 0, first.steps, s.picard_config(), Some(&first.params), None).unwrap();
    for k in 0..=first.steps {
        assert_eq!(direct.trajectory.raw(k), run.trajectory.raw(k));
    }
    // the second restarts from the end state of the first
    let restart = picard_window(
        &problem,
        run.trajectory.raw(first.steps),
        first.steps,
        g.windows[1].steps,
        s.picard_config(),
        Some(&g.windows[1].params),
        None,
    )
    .unwrap();
    for k in 0..=g.windows[1].steps {
        assert_eq!(restart.trajectory.raw(k), run.trajectory.raw(first.steps + k));
    }
    let mol = s.mol_like(&run.trajectory).unwrap();
    assert!(run.trajectory.relative_distance(&mol).unwrap() < 1e-3);
}

#[test]
fn zero_perturbation_is_bitwise_deterministic() {
    let s = build(&scenario_text([1.0, 1.5], [1.0, 0.5], [0.5, 0.3], [1.0, 2.0], [0.9, 0.8], 1.0, 1.0));
    for method in [Method::Mol, Method::Global, Method::Picard] {
        let a = s.run(method).unwrap().trajectory;
        let b = s.run(method).unwrap().trajectory;
        assert_eq!(a.sup_distance(&b, NormKind::H2).unwrap(), 0.0);
        for k in 0..a.len() {
            assert_eq!(a.raw(k), b.raw(k));
        }
    }
    let _ = solver::RHO_FLOOR;
}
