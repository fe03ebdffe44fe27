use super::*;
use crate::algebra::{add3, norm3, scale3, sub3};
use crate::fixtures;
use crate::povm::{to_ppovm, Povm};
use approx::assert_abs_diff_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ket0() -> Ket {
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
}

fn walk_for(p: &Povm, phi: f64) -> (WalkState, WalkConfig) {
    let cfg = WalkConfig::new(phi, 1e-3).unwrap();
    let plan = to_ppovm(p, &cfg.tolerances).unwrap();
    (init_walk(&plan, &ket0(), &cfg).unwrap(), cfg)
}

/// Runs one sampled trajectory, checking every state invariant on the way.
fn checked_trajectory(p: &Povm, phi: f64, psi: Ket, seed: u64) -> (WalkState, usize) {
    let cfg = WalkConfig::new(phi, 1e-3).unwrap();
    let plan = to_ppovm(p, &cfg.tolerances).unwrap();
    let mut state = init_walk(&plan, &psi, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(v) = vertex_check(&state, &cfg) {
            return (state, v);
        }
        assert!(state.steps() < cfg.max_steps, "did not converge");
        let step = plan_step(&state, &cfg).unwrap();
        assert!(step.completeness_residual() <= 1e-9);
        assert!(step.ancilla_residual() <= 1e-9);
        let (sum_err, drift) = step.weight_residuals();
        assert!(sum_err <= 1e-10 * (1.0 / (1.0 - dot3(&step.r, &step.r))));
        assert!(drift <= 1e-10);
        assert!(step.reconstruction_residual() <= 1e-10);
        assert!(step.length_identity_residual(phi) <= 1e-9);
        for o in &step.outcomes {
            assert!(o.weight > 0.0);
            assert!(simplex_residual(&o.next_x) <= 1e-10);
            assert_eq!(o.measurement.operator.at(1, 0), Complex64::new(0.0, 0.0));
            assert!(o.measurement.s > 0.0 && o.measurement.s <= 1.0 + 1e-9);
        }
        let probs = step_probabilities(&state, &step);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut k = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                k = i;
                break;
            }
        }
        state = advance(&state, &step, k, &cfg).unwrap();
        assert!(state.simplex_residual() <= 1e-9);
        assert!(state.proportionality_residual() <= 1e-8, "{}", state.proportionality_residual());
        if !state.is_singular() {
            assert!(state.destructive_residual(phi).unwrap() <= 1e-9);
        }
    }
}

#[test]
fn init_examples() {
    let (s, _) = walk_for(&fixtures::trine(), 0.1);
    assert_eq!(s.x(), &[1.0 / 3.0; 3]);
    let (r, b) = mixture_bloch(s.x(), s.frame()).unwrap();
    assert!(norm3(&r) < 1e-15);
    assert_eq!(b, 0.5);

    let (s, _) = walk_for(&fixtures::x_basis(), 0.1);
    assert_eq!(s.x(), &[0.5, 0.5]);
    let (r, _) = mixture_bloch(s.x(), s.frame()).unwrap();
    assert!(norm3(&r) < 1e-15);

    let (s, _) = walk_for(&fixtures::sic(), 0.1);
    assert_eq!(s.x(), &[0.25; 4]);
    assert_eq!(*s.accumulated_op(), ComplexMatrix2::identity());
    assert_eq!(*s.unitary(), ComplexMatrix2::identity());
    assert_eq!(s.steps(), 0);
    assert_eq!(*s.system_state(), ket0());
}

#[test]
fn init_rejects_bad_plans() {
    let cfg = WalkConfig::new(0.1, 1e-3).unwrap();
    let tol = cfg.tolerances;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    // The PPOVM of a generic 5-outcome POVM has five nonzero elements.
    let p = fixtures::random_povm(&mut rng, 5);
    let plan = to_ppovm(&p, &tol).unwrap();
    assert_eq!(plan.active().len(), 5);
    assert!(matches!(init_walk(&plan, &ket0(), &cfg), Err(Error::WalkSize(5))));

    let p = crate::povm::validate_povm(vec![HermitianOp::identity()], &tol).unwrap();
    let plan = to_ppovm(&p, &tol).unwrap();
    assert!(matches!(init_walk(&plan, &ket0(), &cfg), Err(Error::WalkSize(1))));

    // Four projectors in the x-z plane are dependent.
    let p = fixtures::trine();
    let four = crate::povm::validate_povm(
        vec![
            fixtures::z_basis().elements()[0].scale(0.5),
            fixtures::z_basis().elements()[1].scale(0.5),
            fixtures::x_basis().elements()[0].scale(0.5),
            fixtures::x_basis().elements()[1].scale(0.5),
        ],
        &tol,
    )
    .unwrap();
    let plan = to_ppovm(&four, &tol).unwrap();
    assert!(matches!(
        init_walk(&plan, &ket0(), &cfg),
        Err(Error::DependentElements)
    ));
    let plan = to_ppovm(&p, &tol).unwrap();
    let bad = [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
    assert!(matches!(init_walk(&plan, &bad, &cfg), Err(Error::InvalidState(_))));
}

#[test]
fn config_validation() {
    assert!(WalkConfig::new(0.0, 1e-3).is_err());
    assert!(WalkConfig::new(0.8, 1e-3).is_err());
    assert!(WalkConfig::new(0.1, 0.0).is_err());
    assert!(WalkConfig::new(0.1, 0.1).is_err());
    assert!(WalkConfig::new(0.1, 1e-3).unwrap().with_max_steps(0).is_err());
    let cfg = WalkConfig::new(0.1, 1e-3).unwrap();
    assert_eq!(cfg.max_steps, default_max_steps(0.1, 1e-3));
}

#[test]
fn effective_elements_rotate_about_z() {
    let theta: f64 = 0.7;
    let u = ComplexMatrix2::new(
        Complex64::from_polar(1.0, -theta / 2.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::from_polar(1.0, theta / 2.0),
    );
    let original: Vec<BlochForm> = fixtures::sic().elements().iter().map(pauli_decompose).collect();
    let rotated = effective_elements(&u, &original);
    for (a, b) in original.iter().zip(&rotated) {
        assert_abs_diff_eq!(a.q, b.q, epsilon = 1e-15);
        let (c, s) = (theta.cos(), theta.sin());
        let expected = [c * a.v[0] - s * a.v[1], s * a.v[0] + c * a.v[1], a.v[2]];
        for i in 0..3 {
            assert_abs_diff_eq!(b.v[i], expected[i], epsilon = 1e-12);
        }
    }
    let same = effective_elements(&ComplexMatrix2::identity(), &original);
    for (a, b) in original.iter().zip(&same) {
        assert!(sub3(&a.v, &b.v).iter().all(|c| c.abs() < 1e-15));
    }
}

#[test]
fn trine_center_plan() {
    let phi = 0.2;
    let (s, cfg) = walk_for(&fixtures::trine(), phi);
    let plan = plan_step(&s, &cfg).unwrap();
    let v = fixtures::trine_vectors();
    for (k, o) in plan.outcomes.iter().enumerate() {
        assert_abs_diff_eq!(o.length, phi.sin(), epsilon = 1e-11);
        assert_abs_diff_eq!(o.weight, 1.0 / 3.0, epsilon = 1e-10);
        let expected = pauli_compose(&BlochForm::new(1.0 / 3.0, scale3(phi.sin(), &v[k])));
        assert!(o.target.max_distance(&expected) < 1e-10);
        assert_abs_diff_eq!(o.measurement.s, 2.0 / 3.0, epsilon = 1e-10);
    }
    assert!(plan.completeness_residual() < 1e-12);
    let lengths = plan.bloch_lengths();
    assert!(lengths.iter().all(|&l| (l - phi.sin()).abs() < 1e-10));
}

#[test]
fn two_outcome_center_plan() {
    let phi = 0.3;
    let (s, cfg) = walk_for(&fixtures::x_basis(), phi);
    let plan = plan_step(&s, &cfg).unwrap();
    let d0 = plan.outcomes[0].displacement();
    let d1 = plan.outcomes[1].displacement();
    assert!(norm3(&add3(&d0, &d1)) < 1e-11);
    assert_abs_diff_eq!(plan.outcomes[0].weight, 0.5, epsilon = 1e-10);
    assert_abs_diff_eq!(plan.outcomes[1].weight, 0.5, epsilon = 1e-10);
    let len = norm3(&d0);
    let expected = pauli_compose(&BlochForm::new(0.5, [len, 0.0, 0.0]));
    assert!(plan.outcomes[0].target.max_distance(&expected) < 1e-10);
}

#[test]
fn z_basis_center_plan_steps_unevenly() {
    // Toward |0> the destructive family allows short steps only; toward |1>
    // the step goes all the way.
    let phi = 0.3;
    let (s, cfg) = walk_for(&fixtures::z_basis(), phi);
    let plan = plan_step(&s, &cfg).map_err(|e| format!("{e:?}")).unwrap();
    let (s2, c2) = (phi.sin().powi(2), phi.cos().powi(2));
    assert_abs_diff_eq!(plan.outcomes[0].length, s2 / (1.0 + c2), epsilon = 1e-11);
    assert_abs_diff_eq!(plan.outcomes[1].length, 1.0, epsilon = 1e-11);
    assert!(plan.completeness_residual() < 1e-12);
}

#[test]
fn trine_first_step_invariants() {
    let phi = 0.2;
    let (s, cfg) = walk_for(&fixtures::trine(), phi);
    let plan = plan_step(&s, &cfg).unwrap();
    let next = advance(&s, &plan, 0, &cfg).unwrap();
    let tol = Tolerances::default();
    let map = SimplexMap::new(s.frame(), &tol).unwrap();
    let expected = bloch_to_simplex(&map, &plan.outcomes[0].displacement(), &tol).unwrap();
    for (a, b) in next.x().iter().zip(&expected) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }
    assert!(next.proportionality_residual() <= 1e-8);
    assert_eq!(next.accumulated_op().at(1, 0), Complex64::new(0.0, 0.0));
    assert_eq!(next.steps(), 1);
}

#[test]
fn vertex_check_examples() {
    let (mut s, cfg) = walk_for(&fixtures::trine(), 0.1);
    s.x = vec![0.9995, 0.0003, 0.0002];
    assert_eq!(vertex_check(&s, &cfg), Some(0));
    s.x = vec![1.0 / 3.0; 3];
    assert_eq!(vertex_check(&s, &cfg), None);
    s.x = vec![1.0 - cfg.epsilon_vertex, cfg.epsilon_vertex, 0.0];
    assert_eq!(vertex_check(&s, &cfg), Some(0));
    s.x = vec![0.0, 0.9995, 0.0005];
    assert_eq!(vertex_check(&s, &cfg), Some(1));
}

#[test]
fn zero_probability_branch() {
    // The |0>-side z-basis outcome cannot fire... but the |1>-side one jumps
    // straight to |1>; applying it to |0> has probability zero.
    let phi = 0.3;
    let (s, cfg) = walk_for(&fixtures::z_basis(), phi);
    let plan = plan_step(&s, &cfg).unwrap();
    assert!(matches!(
        advance(&s, &plan, 1, &cfg),
        Err(Error::ZeroProbability { outcome: 1 })
    ));
    assert!(matches!(
        advance(&s, &plan, 5, &cfg),
        Err(Error::OutcomeIndex { index: 5, n: 2 })
    ));
}

#[test]
fn destructive_ratio_over_many_steps() {
    // Cycling through the outcomes by hand. This sequence is far from typical
    // and expands rounding errors transverse to the span of the elements by
    // about 2x per step, so it is kept short.
    let phi = 0.15;
    let (mut s, cfg) = walk_for(&fixtures::trine(), phi);
    for t in 0..35 {
        let plan = plan_step(&s, &cfg).unwrap();
        s = advance(&s, &plan, t % 3, &cfg).unwrap();
        assert!(s.destructive_residual(phi).unwrap() <= 1e-9);
        assert!(s.proportionality_residual() <= 1e-8);
        assert!(s.drift() <= 1e-12);
    }
}

#[test]
fn long_sampled_walks_stay_proportional() {
    let cfg = WalkConfig::new(0.1, 1e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for p in [fixtures::trine(), fixtures::sic(), fixtures::random_projective_povm(&mut rng, 4)] {
        let plan = to_ppovm(&p, &cfg.tolerances).unwrap();
        for _ in 0..5 {
            let psi = fixtures::random_pure_state(&mut rng);
            let mut state = init_walk(&plan, &psi, &cfg).unwrap();
            while vertex_check(&state, &cfg).is_none() {
                let step = plan_step(&state, &cfg).unwrap();
                let probs = step_probabilities(&state, &step);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let k = probs
                    .iter()
                    .position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(probs.len() - 1);
                state = advance(&state, &step, k, &cfg).unwrap();
                assert!(state.proportionality_residual() <= 1e-8);
                assert!(state.destructive_residual(cfg.phi).unwrap() <= 1e-9);
            }
            assert!(state.steps() < cfg.max_steps);
        }
    }
}

#[test]
fn trajectories_keep_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for (i, p) in [fixtures::trine(), fixtures::sic(), fixtures::x_basis(), fixtures::z_basis()]
        .iter()
        .enumerate()
    {
        for j in 0..3 {
            let psi = fixtures::random_pure_state(&mut rng);
            checked_trajectory(p, 0.2, psi, (10 * i + j) as u64);
        }
    }
}

#[test]
fn random_projective_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for n in 2..=4 {
        for j in 0..4 {
            let p = fixtures::random_projective_povm(&mut rng, n);
            let psi = fixtures::random_pure_state(&mut rng);
            checked_trajectory(&p, 0.25, psi, 100 + j);
        }
    }
}

#[test]
fn walk_ends_near_the_reached_element() {
    // At the vertex the accumulated element is proportional to the walked
    // projector.
    let (state, v) = checked_trajectory(&fixtures::sic(), 0.2, ket0(), 7);
    let m = *state.accumulated_op();
    let acc = HermitianOp::hermitize(&(m.adjoint() * m));
    let target = pauli_compose(&state.original()[v]);
    let acc = acc.scale(1.0 / acc.trace());
    let target = target.scale(1.0 / target.trace());
    assert!(acc.max_distance(&target) < 2e-3);
}

fn simplex_point(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugation_preserves_frame(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = fixtures::random_projective_povm(&mut rng, n);
        let original: Vec<BlochForm> = p.elements().iter().map(pauli_decompose).collect();
        let a = fixtures::random_povm(&mut rng, 2).elements()[0];
        let u = polar_unitary(a.matrix(), &Tolerances::default()).unwrap();
        let rotated = effective_elements(&u, &original);
        let g0 = frame_gram(&original);
        let g1 = frame_gram(&rotated);
        for (x, y) in g0.iter().zip(&g1) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        let mut sum = [0.0; 3];
        for (a, b) in original.iter().zip(&rotated) {
            prop_assert!((a.q - b.q).abs() < 1e-12);
            prop_assert!((a.bloch_length() - b.bloch_length()).abs() < 1e-10);
            sum = add3(&sum, &scale3(b.q, &b.v));
        }
        prop_assert!(norm3(&sum) < 1e-10);
    }

    #[test]
    fn plan_invariants_at_random_positions(
        seed in any::<u64>(),
        n in 2usize..=4,
        raw in proptest::collection::vec(0.02f64..1.0, 4),
        phi in 0.01f64..0.78,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = fixtures::random_projective_povm(&mut rng, n);
        let cfg = WalkConfig::new(phi, 1e-3).unwrap();
        let plan = to_ppovm(&p, &cfg.tolerances).unwrap();
        let mut s = init_walk(&plan, &ket0(), &cfg).unwrap();
        s.x = simplex_point(&raw[..n]);
        let step = plan_step(&s, &cfg).unwrap();
        prop_assert!(step.completeness_residual() <= 1e-9);
        prop_assert!(step.ancilla_residual() <= 1e-9);
        let (sum_err, drift) = step.weight_residuals();
        prop_assert!(sum_err <= 1e-10 / (1.0 - dot3(&step.r, &step.r)));
        prop_assert!(drift <= 1e-10);
        prop_assert!(step.reconstruction_residual() <= 1e-10);
        prop_assert!(step.length_identity_residual(phi) <= 1e-9);
        for o in &step.outcomes {
            prop_assert!(o.weight > 0.0);
            prop_assert!(simplex_residual(&o.next_x) <= 1e-10);
        }
        let r = simplex_to_bloch(&SimplexMap::new(s.frame(), &cfg.tolerances).unwrap(), s.x());
        prop_assert!(norm3(&sub3(&r, &step.r)) < 1e-12);
    }

    #[test]
    fn simplex_map_has_one_small_singular_value(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = fixtures::random_projective_povm(&mut rng, n);
        let forms: Vec<BlochForm> = p.elements().iter().map(pauli_decompose).collect();
        let map = SimplexMap::new(&forms, &Tolerances::default()).unwrap();
        let sv = map.singular_values();
        let small = sv.iter().filter(|&&s| s < 1e-9 * sv[0]).count();
        prop_assert_eq!(small, 1);
        prop_assert!(map.kernel_residual() < 1e-10);
    }
}
