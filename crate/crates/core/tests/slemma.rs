mod common;

use common::*;
use proptest::prelude::*;
use qcqp_tight::slemma::*;
use qcqp_tight::{CVector, Field, HermitianMatrix, C64};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn run_s_lemma(p: &SLemmaPlant) -> CertificateResult {
    let f = &p.forms;
    let r = match f.len() {
        2 => s_lemma_three(&p.a0, &f[0], &f[1], &p.x0, tol()).unwrap(),
        _ => s_lemma_four_complex(&p.a0, &f[0], &f[1], &f[2], &p.x0, tol()).unwrap(),
    };
    verify_certificate(&p.mats(), &r, tol().eps2).unwrap();
    r
}

fn run_yuan(m: &[HermitianMatrix]) -> CertificateResult {
    let r = match m.len() {
        3 => yuan_lemma_three(&m[0], &m[1], &m[2], tol()).unwrap(),
        _ => yuan_lemma_four_complex(&m[0], &m[1], &m[2], &m[3], tol()).unwrap(),
    };
    verify_certificate(&m.iter().collect::<Vec<_>>(), &r, tol().eps2).unwrap();
    r
}

fn diag(d: &[f64]) -> HermitianMatrix {
    HermitianMatrix::diagonal(Field::Real, d)
}

#[test]
fn planted_kinds() {
    let mut r = rng(1);
    for field in [Field::Real, Field::Complex] {
        for i in 0..20 {
            let n = 3 + i % 3;
            let p = plant_psd_certificate(&mut r, field, n);
            assert_eq!(run_s_lemma(&p).kind(), "psd_certificate", "{field} {i}");
            let p = plant_system(&mut r, field, n);
            assert_eq!(run_s_lemma(&p).kind(), "system_solvable", "{field} {i}");
            let p = plant_witness(&mut r, field, n);
            assert_eq!(run_s_lemma(&p).kind(), "property_witness", "{field} {i}");
        }
    }
}

#[test]
fn identity_objective_needs_no_weights() {
    let mut r = rng(3);
    for field in [Field::Real, Field::Complex] {
        let k = field.multiplicity() + 1;
        let x0 = e(3, 0);
        let forms: Vec<HermitianMatrix> = (0..k)
            .map(|_| {
                &hermitian(&mut r, field, 3, 1.0) - &HermitianMatrix::outer(field, &x0).scale(5.0)
            })
            .collect();
        let p = SLemmaPlant {
            a0: HermitianMatrix::identity(field, 3),
            forms,
            x0,
        };
        match run_s_lemma(&p) {
            // Zero weights certify on their own; any other verified weights are equally valid.
            CertificateResult::PsdCertificate { mu0, convex } => assert!(!convex && mu0.len() == k),
            c => panic!("{c:?}"),
        }
    }
}

#[test]
fn infeasible_start_is_rejected() {
    let a = diag(&[1.0, -1.0]);
    let x0 = e(2, 0);
    assert!(s_lemma_three(&a, &a, &a, &x0, tol()).is_err());
    let c = HermitianMatrix::identity(Field::Complex, 2);
    assert!(s_lemma_four_complex(&c, &c, &c, &c, &x0, tol()).is_err());
    // Field mismatch.
    assert!(yuan_lemma_three(&c, &c, &c, tol()).is_err());
}

#[test]
fn yuan_identity_weights() {
    let i = HermitianMatrix::identity(Field::Real, 2);
    match run_yuan(&[i.clone(), i.clone(), i]) {
        CertificateResult::PsdCertificate { mu0, convex } => {
            assert!(convex && mu0.len() == 3);
            assert!((mu0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        c => panic!("{c:?}"),
    }
}

#[test]
fn yuan_cancelling_pair() {
    match run_yuan(&[diag(&[1.0, -1.0]), diag(&[-1.0, 1.0]), diag(&[0.0, 0.0])]) {
        CertificateResult::PsdCertificate { mu0, .. } => {
            // Any PSD convex combination has equal weight on the first two forms.
            assert!((mu0[0] - mu0[1]).abs() < 1e-5, "{mu0:?}");
        }
        c => panic!("{c:?}"),
    }
}

#[test]
fn yuan_negative_diagonals() {
    match run_yuan(&[diag(&[-1.0, -1.0]), diag(&[-1.0, 0.0]), diag(&[0.0, -1.0])]) {
        CertificateResult::SystemSolvable { x, system } => {
            assert_eq!(system, TargetSystem::AllNegative);
            // Both coordinates must be nonzero.
            assert!(x[0].norm() > 1e-3 && x[1].norm() > 1e-3);
        }
        c => panic!("{c:?}"),
    }
}

#[test]
fn yuan_four_complex_examples() {
    let i = HermitianMatrix::identity(Field::Complex, 2);
    let neg = i.scale(-1.0);
    match run_yuan(&[i.clone(), i.clone(), i.clone(), i.clone()]) {
        CertificateResult::PsdCertificate { convex, .. } => assert!(convex),
        c => panic!("{c:?}"),
    }
    match run_yuan(&[neg.clone(), i.clone(), i.clone(), i.clone()]) {
        CertificateResult::PsdCertificate { mu0, .. } => assert!(mu0[0] <= 0.5 + 1e-6, "{mu0:?}"),
        c => panic!("{c:?}"),
    }
    assert_eq!(
        run_yuan(&[neg.clone(), neg.clone(), neg.clone(), neg]).kind(),
        "system_solvable"
    );
}

#[test]
fn yuan_plants() {
    let mut r = rng(2);
    for field in [Field::Real, Field::Complex] {
        let k = field.multiplicity() + 2;
        for i in 0..20 {
            let n = 2 + i % 4;
            let (m, _) = plant_convex_psd(&mut r, field, n, k);
            assert_eq!(run_yuan(&m).kind(), "psd_certificate");
            let (m, _) = plant_all_negative(&mut r, field, n, k);
            assert_eq!(run_yuan(&m).kind(), "system_solvable");
        }
    }
}

/// Three real forms `cos t·(x₁² − x₂²) + 2 sin t·x₁x₂ − ε‖x‖²` at `t = 0, 2π/3, 4π/3`.
///
/// They sum to `−3εI`, so no convex combination is PSD. Along `(cos s, sin s)` the form
/// values are `cos(2s − t) − ε`, whose maximum over the three `t` is at least `1/2 − ε`.
/// Neither statement of the alternative is available, which leaves the witness.
#[test]
fn yuan_tripod_yields_a_witness() {
    for eps in [0.05, 0.1, 0.3] {
        let m: Vec<_> = (0..3)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                HermitianMatrix::real_from_rows(&[
                    vec![t.cos() - eps, t.sin()],
                    vec![t.sin(), -t.cos() - eps],
                ])
                .unwrap()
            })
            .collect();
        for s in 0..720 {
            let s = std::f64::consts::PI * s as f64 / 720.0;
            let u = CVector::from_vec(vec![C64::new(s.cos(), 0.0), C64::new(s.sin(), 0.0)]);
            assert!(m.iter().map(|a| a.quad(&u)).fold(f64::MIN, f64::max) >= 0.5 - eps - 1e-12);
        }
        assert_eq!(run_yuan(&m).kind(), "property_witness", "eps {eps}");
    }
}

#[test]
fn complex_witness_has_imaginary_cross_term() {
    let mut r = rng(4);
    for _ in 0..10 {
        let p = plant_witness(&mut r, Field::Complex, 4);
        match run_s_lemma(&p) {
            CertificateResult::PropertyWitness { x1, x2, order, .. } => {
                let second = p.mats()[order[2]];
                assert!(second.bilinear(&x1, &x2).im.abs() > tol().eps2);
            }
            c => panic!("{c:?}"),
        }
    }
}

#[test]
fn tampered_certificates_fail_verification() {
    let mut r = rng(5);
    let p = plant_witness(&mut r, Field::Real, 3);
    let res = run_s_lemma(&p);
    let CertificateResult::PropertyWitness {
        mu_breve,
        x1,
        x2,
        order,
    } = res
    else {
        panic!()
    };
    let mut bad_mu = mu_breve.clone();
    bad_mu[0] += 0.5;
    let bad = CertificateResult::PropertyWitness {
        mu_breve: bad_mu,
        x1: x1.clone(),
        x2: x2.clone(),
        order: order.clone(),
    };
    assert!(verify_certificate(&p.mats(), &bad, tol().eps2).is_err());
    let swapped = CertificateResult::PropertyWitness {
        mu_breve,
        x1: x2,
        x2: x1,
        order,
    };
    assert!(verify_certificate(&p.mats(), &swapped, tol().eps2).is_err());

    let neg = diag(&[-1.0, 0.5]);
    let cert = CertificateResult::PsdCertificate {
        mu0: vec![0.0, 0.0],
        convex: false,
    };
    assert!(verify_certificate(&[&neg, &neg, &neg], &cert, tol().eps2).is_err());
    let sys = CertificateResult::SystemSolvable {
        x: e(2, 1),
        system: TargetSystem::AllNegative,
    };
    assert!(verify_certificate(&[&neg, &neg, &neg], &sys, tol().eps2).is_err());
}

/// Real `n = 2` grid search for `A₀(u) < 0` with both constraint forms nonpositive.
fn grid_solves_inequalities(
    a0: &HermitianMatrix,
    a1: &HermitianMatrix,
    a2: &HermitianMatrix,
) -> bool {
    (0..3600).any(|s| {
        let s = std::f64::consts::PI * s as f64 / 3600.0;
        let u = CVector::from_vec(vec![C64::new(s.cos(), 0.0), C64::new(s.sin(), 0.0)]);
        a0.quad(&u) < -1e-3 && a1.quad(&u) <= 0.0 && a2.quad(&u) <= 0.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn certificates_exclude_grid_solutions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x0 = e(2, 0);
        let dip = HermitianMatrix::outer(Field::Real, &x0).scale(3.0);
        let a1 = &hermitian(&mut r, Field::Real, 2, 1.0) - &dip;
        let a2 = &hermitian(&mut r, Field::Real, 2, 1.0) - &dip;
        let a0 = hermitian(&mut r, Field::Real, 2, 1.0);
        let res = s_lemma_three(&a0, &a1, &a2, &x0, tol()).unwrap();
        verify_certificate(&[&a0, &a1, &a2], &res, tol().eps2).unwrap();
        if res.kind() == "psd_certificate" {
            prop_assert!(!grid_solves_inequalities(&a0, &a1, &a2));
        }
    }

    #[test]
    fn kind_is_scale_invariant(seed in any::<u64>(), gamma in 0.1f64..10.0, which in 0usize..3) {
        let mut r = rng(seed);
        let p = match which {
            0 => plant_psd_certificate(&mut r, Field::Real, 3),
            1 => plant_system(&mut r, Field::Real, 3),
            _ => plant_witness(&mut r, Field::Real, 3),
        };
        let scaled = SLemmaPlant { a0: p.a0.scale(gamma), forms: p.forms.clone(), x0: p.x0.clone() };
        prop_assert_eq!(run_s_lemma(&p).kind(), run_s_lemma(&scaled).kind());
    }
}
