mod common;

use common::*;
use proptest::prelude::*;
use qcqp_tight::harness::{generate_instance, GeneratorConfig};
use qcqp_tight::linalg::{dot, eig, psd_rank};
use qcqp_tight::sdp::*;
use qcqp_tight::{Field, HermitianMatrix, Sense};

const EPS2: f64 = 1e-4;

#[test]
fn balanced_instance_solution() {
    let inst = fixture("real_infeasible");
    let pair = purify(&solve_sdp(&inst, DEFAULT_EPS1).unwrap(), EPS2).unwrap();
    // The equalities force X = t·I, the trace bound t ≥ 1, so the optimum is X = I.
    assert!((pair.primal_value - 1.0).abs() < 1e-6);
    assert!((&pair.x - &HermitianMatrix::identity(Field::Real, 2)).fro_norm() < 1e-6);
    assert!(pair.z.is_zero());
    for (m, want) in pair.mu.iter().zip([0.5, 0.0, 0.5]) {
        assert!((m - want).abs() < 1e-5, "{:?}", pair.mu);
    }
}

#[test]
fn complex_fixture_solution() {
    let inst = fixture("complex_gap");
    let pair = solve_sdp(&inst, DEFAULT_EPS1).unwrap();
    assert!((pair.primal_value + 10.0083).abs() < 1e-3);
    for (m, want) in pair.mu.iter().zip([0.1821, 0.2708, 0.6705, 0.2464]) {
        assert!((m - want).abs() < 1e-3, "{:?}", pair.mu);
    }
    // The dual objective recomputed from the multipliers.
    let dual: f64 = -inst
        .constraints
        .iter()
        .zip(&pair.mu)
        .map(|(c, m)| c.c * m)
        .sum::<f64>();
    assert!((dual - pair.primal_value).abs() < 1e-6);
    let pure = purify(&pair, EPS2).unwrap();
    assert_eq!(psd_rank(&pure.z, EPS2).unwrap(), 0);
    assert_eq!(psd_rank(&pure.x, EPS2).unwrap(), 2);
}

#[test]
fn convex_objective_sits_at_origin() {
    let inst = instance(
        HermitianMatrix::identity(Field::Real, 3),
        vec![le(HermitianMatrix::identity(Field::Real, 3), 1.0)],
    );
    let pair = solve_sdp(&inst, DEFAULT_EPS1).unwrap();
    assert!(pair.primal_value.abs() < 1e-7);
    assert!(pair.x.fro_norm() < 1e-6);
}

#[test]
fn unbounded_relaxation_is_reported() {
    let inst = instance(
        -&HermitianMatrix::identity(Field::Real, 2),
        vec![le(HermitianMatrix::diagonal(Field::Real, &[1.0, 0.0]), 1.0)],
    );
    assert!(solve_sdp(&inst, DEFAULT_EPS1).is_err());
}

#[test]
fn slater_points_of_balanced_instance() {
    let inst = fixture("real_infeasible");
    let rep = check_slater(&inst).unwrap();
    let p = rep.primal_point.expect("primal interior point");
    assert!(p.x.min_eigenvalue() > 0.0);
    for c in &inst.constraints {
        let v = dot(&c.a, &p.x);
        match c.sense {
            Sense::Eq => assert!((v - c.c).abs() < 1e-8),
            Sense::Le => assert!(v < c.c),
        }
    }
    let d = rep.dual_point.expect("dual interior point");
    let z = HermitianMatrix::lin_comb(
        &std::iter::once((1.0, &inst.objective))
            .chain(
                d.mu.iter()
                    .copied()
                    .zip(inst.constraints.iter().map(|c| &c.a)),
            )
            .collect::<Vec<_>>(),
    );
    assert!((&z - &d.z).fro_norm() < 1e-9);
    assert!(z.min_eigenvalue() > 0.0 && d.mu[2] > 0.0);
}

#[test]
fn negative_trace_bound_has_no_interior() {
    let inst = instance(
        HermitianMatrix::identity(Field::Real, 2),
        vec![le(HermitianMatrix::identity(Field::Real, 2), -1.0)],
    );
    assert!(check_slater(&inst).unwrap().primal_point.is_none());
}

#[test]
fn generated_instances_have_interior_points() {
    for field in [Field::Real, Field::Complex] {
        let cfg = GeneratorConfig::new(field, 3, 42, 5);
        for i in 0..5 {
            assert!(check_slater(&generate_instance(&cfg, i).unwrap())
                .unwrap()
                .holds());
        }
    }
}

#[test]
fn purify_zeroes_small_eigenvalues() {
    let mut r = rng(41);
    let q = qcqp_tight::linalg::orthonormalize(
        &[
            vector(&mut r, Field::Complex, 2),
            vector(&mut r, Field::Complex, 2),
        ],
        1e-9,
    );
    let z = &HermitianMatrix::outer(Field::Complex, &q[0]).scale(3e-5)
        + &HermitianMatrix::outer(Field::Complex, &q[1]).scale(1e-6);
    assert!(purify_matrix(&z, EPS2).unwrap().is_zero());
    let x = &psd(&mut r, Field::Complex, 3, 3) + &HermitianMatrix::identity(Field::Complex, 3);
    assert_eq!(purify_matrix(&x, EPS2).unwrap(), x);
    assert!(purify_matrix(&x, -1.0).is_ok());
    let pair = solve_sdp(&fixture("real_infeasible"), DEFAULT_EPS1).unwrap();
    assert!(purify(&pair, 0.0).is_err());
}

fn random_pair(seed: u64, cplx: bool, n: usize) -> Option<(qcqp_tight::QcqpInstance, SdpPair)> {
    let field = field_of(cplx);
    let cfg = GeneratorConfig::new(field, n, seed, 1);
    let inst = generate_instance(&cfg, 0).unwrap();
    solve_sdp(&inst, DEFAULT_EPS1).ok().map(|p| (inst, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn solved_pairs_satisfy_kkt(seed in any::<u64>(), cplx in any::<bool>(), n in 2usize..7) {
        let Some((inst, pair)) = random_pair(seed, cplx, n) else { return Ok(()); };
        let scale = inst.objective.fro_norm().max(1.0);
        prop_assert!(pair.dual_value <= pair.primal_value + 10.0 * DEFAULT_EPS1 * scale);
        prop_assert!(pair.kkt_residual <= DEFAULT_EPS1 * scale);
        // Residual recomputed from scratch.
        let again = assemble_pair(&inst, pair.x.clone(), pair.mu.clone(), 0);
        prop_assert!((again.kkt_residual - pair.kkt_residual).abs() < 1e-12 * scale);
        prop_assert!(pair.x.min_eigenvalue() > -DEFAULT_EPS1 * scale);
        prop_assert!(pair.mu.iter().all(|m| *m > -DEFAULT_EPS1 * scale));
    }

    #[test]
    fn purification_is_consistent_and_idempotent(seed in any::<u64>(), cplx in any::<bool>(), n in 2usize..7) {
        let Some((_, pair)) = random_pair(seed, cplx, n) else { return Ok(()); };
        let once = purify(&pair, EPS2).unwrap();
        let twice = purify(&once, EPS2).unwrap();
        prop_assert_eq!(&once, &twice);
        for (raw, pure) in [(&pair.x, &once.x), (&pair.z, &once.z)] {
            let zeroed = eig(raw).unwrap().eigenvalues.iter().filter(|l| **l <= EPS2).count();
            prop_assert_eq!(psd_rank(pure, EPS2).unwrap() + zeroed, n);
        }
    }
}
