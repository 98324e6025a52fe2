//! Alternative theorems for three real or four complex quadratic forms.
//!
//! The S-lemma variants take `A₀` and `m_F + 1` constraint forms with a common strictly
//! negative point `x₀` and decide between a nonnegative multiplier certificate
//! `A₀ + Σ μᵢAᵢ ⪰ 0`, a solution of `{xᴴA₀x < 0, xᴴAᵢx ≤ 0}`, and a pair of witness vectors
//! showing the relaxation has a gap. The Yuan variants drop `x₀` and look for a convex
//! combination `Σ μₖAₖ ⪰ 0` instead.

use crate::decomposition::decompose_two_forms;
use crate::error::{Error, Result};
use crate::linalg::{eig, field_vector, null_basis, CVector, Field, HermitianMatrix, C64};
use crate::sdp::{
    purify, solve_sdp, Constraint, HermitianSdp, QcqpInstance, Row, Sense, DEFAULT_EPS1,
};
use crate::tightness::{analyze, recover_optimum, test_property_i, Outcome, DEFAULT_EPS2};

/// Margin for strict inequalities on unit vectors.
pub const STRICT_MARGIN: f64 = 1e-6;

/// Allowed negative eigenvalue of a returned PSD combination.
pub const PSD_TOL: f64 = 1e-7;

/// Residual allowed on the non-strict parts of a system, relative to `max(1, ‖A‖_F)`.
pub const NONSTRICT_TOL: f64 = 1e-7;

/// Convex-combination optimum `λ` at or above which a certificate is reported.
const LAMBDA_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps1: DEFAULT_EPS1,
            eps2: DEFAULT_EPS2,
        }
    }
}

/// The system a [`CertificateResult::SystemSolvable`] vector solves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetSystem {
    /// `xᴴA₀x < 0` and `xᴴAᵢx ≤ 0` for the constraint forms.
    Inequalities,
    /// `xᴴAₖx < 0` for every form.
    AllNegative,
    /// `xᴴA_{j₀}x < 0` and `xᴴA_{jₖ}x = 0` for `order = (j₀, j₁, …)`.
    Equalities { order: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum CertificateResult {
    /// `Σ mu0ᵢ Aᵢ ⪰ 0`. With `convex` the weights cover `A₀` too and sum to one; otherwise
    /// `A₀`'s weight is one and `mu0` lists the constraint weights.
    PsdCertificate {
        mu0: Vec<f64>,
        convex: bool,
    },
    /// Positive `mu_breve` with `Z = A_{j₀} + Σ mu_breveₖ A_{jₖ} + mu_breve_last·I ⪰ 0`, whose
    /// null space is spanned by `x1, x2`; `order` maps roles to input matrices.
    PropertyWitness {
        mu_breve: Vec<f64>,
        x1: CVector,
        x2: CVector,
        order: Vec<usize>,
    },
    SystemSolvable {
        x: CVector,
        system: TargetSystem,
    },
}

impl CertificateResult {
    pub fn kind(&self) -> &'static str {
        match self {
            CertificateResult::PsdCertificate { .. } => "psd_certificate",
            CertificateResult::PropertyWitness { .. } => "property_witness",
            CertificateResult::SystemSolvable { .. } => "system_solvable",
        }
    }
}

fn check_field(field: Field, mats: &[&HermitianMatrix]) -> Result<usize> {
    let n = mats[0].n();
    for a in mats {
        if a.field() != field {
            return Err(Error::FieldMismatch);
        }
        if a.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.n(),
            });
        }
    }
    Ok(n)
}

pub fn s_lemma_three(
    a0: &HermitianMatrix,
    a1: &HermitianMatrix,
    a2: &HermitianMatrix,
    x0: &CVector,
    tol: Tolerances,
) -> Result<CertificateResult> {
    check_field(Field::Real, &[a0, a1, a2])?;
    s_lemma(a0, &[a1, a2], x0, tol)
}

pub fn s_lemma_four_complex(
    a0: &HermitianMatrix,
    a1: &HermitianMatrix,
    a2: &HermitianMatrix,
    a3: &HermitianMatrix,
    x0: &CVector,
    tol: Tolerances,
) -> Result<CertificateResult> {
    check_field(Field::Complex, &[a0, a1, a2, a3])?;
    s_lemma(a0, &[a1, a2, a3], x0, tol)
}

pub fn yuan_lemma_three(
    a0: &HermitianMatrix,
    a1: &HermitianMatrix,
    a2: &HermitianMatrix,
    tol: Tolerances,
) -> Result<CertificateResult> {
    check_field(Field::Real, &[a0, a1, a2])?;
    yuan_lemma(&[a0, a1, a2], tol)
}

pub fn yuan_lemma_four_complex(
    a0: &HermitianMatrix,
    a1: &HermitianMatrix,
    a2: &HermitianMatrix,
    a3: &HermitianMatrix,
    tol: Tolerances,
) -> Result<CertificateResult> {
    check_field(Field::Complex, &[a0, a1, a2, a3])?;
    yuan_lemma(&[a0, a1, a2, a3], tol)
}

/// `min A₀•X  s.t.  Aᵢ•X ⊴ 0, I•X ≤ 1` with the given sense for the forms.
fn unit_ball_instance(
    a0: &HermitianMatrix,
    forms: &[&HermitianMatrix],
    sense: Sense,
) -> Result<QcqpInstance> {
    let mut cons: Vec<Constraint> = forms
        .iter()
        .map(|a| Constraint::new((*a).clone(), 0.0, sense))
        .collect();
    cons.push(Constraint::new(
        HermitianMatrix::identity(a0.field(), a0.n()),
        1.0,
        Sense::Le,
    ));
    QcqpInstance::new(a0.clone(), cons)
}

/// Unit vector along `x`.
fn unit(x: &CVector) -> CVector {
    x / C64::new(x.norm(), 0.0)
}

fn s_lemma(
    a0: &HermitianMatrix,
    forms: &[&HermitianMatrix],
    x0: &CVector,
    tol: Tolerances,
) -> Result<CertificateResult> {
    let field = a0.field();
    if x0.len() != a0.n() {
        return Err(Error::DimensionMismatch {
            expected: a0.n(),
            found: x0.len(),
        });
    }
    let x0 = field_vector(field, x0);
    if x0.norm() == 0.0 || forms.iter().any(|a| !(a.quad(&unit(&x0)) < 0.0)) {
        return Err(Error::Precondition(
            "x0 must be strictly negative on every constraint form".into(),
        ));
    }
    let inst = unit_ball_instance(a0, forms, Sense::Le)?;
    let pair = purify(&solve_sdp(&inst, tol.eps1)?, tol.eps2)?;
    let report = test_property_i(&inst, &pair, tol.eps2)?;
    let m = forms.len();
    let result = if report.holds {
        let (x1, x2) = report.witnesses.clone().unwrap();
        let sign = forms[m - 1];
        let (x1, x2) = if sign.quad(&x1) < 0.0 {
            (x1, x2)
        } else {
            (x2, x1)
        };
        CertificateResult::PropertyWitness {
            mu_breve: pair.mu.clone(),
            x1,
            x2,
            order: (0..=m).collect(),
        }
    } else if pair.mu[m] <= tol.eps2 {
        CertificateResult::PsdCertificate {
            mu0: pair.mu[..m].iter().map(|v| v.max(0.0)).collect(),
            convex: false,
        }
    } else {
        let verdict = recover_optimum(&inst, &pair, tol.eps2)?;
        match verdict.outcome {
            Outcome::Recovered { x, .. } => CertificateResult::SystemSolvable {
                x,
                system: TargetSystem::Inequalities,
            },
            Outcome::GapOrInfeasible => unreachable!("the test did not hold"),
        }
    };
    let mut mats = vec![a0];
    mats.extend_from_slice(forms);
    verify_certificate(&mats, &result, tol.eps2)?;
    Ok(result)
}

/// `max λ  s.t.  Σ μₖAₖ ⪰ λI, Σ μₖ = 1, μ ≥ 0`, solved through its dual
/// `min max_k Aₖ•Y  s.t.  tr Y = 1, Y ⪰ 0`. Returns `(λ, μ, Y)`.
fn convex_combination(mats: &[&HermitianMatrix]) -> Result<(f64, Vec<f64>, HermitianMatrix)> {
    let field = mats[0].field();
    let n = mats[0].n();
    let k = mats.len();
    // t is shifted by T ≥ max‖Aₖ‖₂ so that it stays nonnegative. LP columns: t', s₀…s_{k−1}.
    let shift = mats.iter().map(|a| a.fro_norm()).fold(0.0, f64::max) + 1.0;
    let nl = 1 + k;
    let mut rows = Vec::with_capacity(k + 1);
    for (j, a) in mats.iter().enumerate() {
        let mut a_lp = vec![0.0; nl];
        a_lp[0] = -1.0;
        a_lp[1 + j] = 1.0;
        rows.push(Row {
            a: (*a).clone(),
            a_lp,
            b: -shift,
        });
    }
    rows.push(Row {
        a: HermitianMatrix::identity(field, n),
        a_lp: vec![0.0; nl],
        b: 1.0,
    });
    let mut c_lp = vec![0.0; nl];
    c_lp[0] = 1.0;
    let sdp = HermitianSdp {
        field,
        c: HermitianMatrix::zeros(field, n),
        c_lp,
        rows,
    };
    let sol = sdp.solve(1e-12)?;
    let mut mu: Vec<f64> = sol.y[..k].iter().map(|v| (-v).max(0.0)).collect();
    let total: f64 = mu.iter().sum();
    if !(total > 0.0) {
        return Err(Error::step("convex combination", "multipliers vanish"));
    }
    mu.iter_mut().for_each(|v| *v /= total);
    let terms: Vec<(f64, &HermitianMatrix)> =
        mu.iter().copied().zip(mats.iter().copied()).collect();
    // Recomputed from the normalized weights rather than taken from the solver.
    let lambda = HermitianMatrix::lin_comb(&terms).min_eigenvalue();
    Ok((lambda, mu, sol.x))
}

/// Unit vector on which every form is below `−STRICT_MARGIN`, searched among pieces of `Y`.
///
/// With `δₖ = Aₖ•Y < 0`, equalizing `m_F` forms against a pivot yields pieces on which those
/// forms share the pivot's sign; the remaining form is checked directly.
fn negative_direction(mats: &[&HermitianMatrix], y: &HermitianMatrix) -> Option<CVector> {
    let field = y.field();
    let mf = field.multiplicity();
    let all_negative = |x: &CVector| -> Option<CVector> {
        if x.norm() == 0.0 {
            return None;
        }
        let u = unit(x);
        mats.iter()
            .all(|a| a.quad(&u) < -STRICT_MARGIN)
            .then_some(u)
    };
    let e = eig(y).ok()?;
    for q in &e.eigenvectors {
        if let Some(u) = all_negative(q) {
            return Some(u);
        }
    }
    let delta: Vec<f64> = mats.iter().map(|a| crate::linalg::dot(a, y)).collect();
    if delta.iter().any(|d| *d >= 0.0) {
        return None;
    }
    let k = mats.len();
    for p in 0..k {
        for free in (0..k).filter(|&f| f != p) {
            let eq: Vec<usize> = (0..k).filter(|&j| j != p && j != free).take(mf).collect();
            let rel: Vec<HermitianMatrix> = eq
                .iter()
                .map(|&j| {
                    HermitianMatrix::lin_comb(&[(1.0, mats[j]), (-delta[j] / delta[p], mats[p])])
                })
                .collect();
            let refs: Vec<&HermitianMatrix> = rel.iter().collect();
            let Ok(d) = decompose_two_forms(y, &refs) else {
                continue;
            };
            for piece in &d.vectors {
                if let Some(u) = all_negative(piece) {
                    return Some(u);
                }
            }
            // Real combinations of two pieces keep the equalized forms proportional only
            // approximately, so each candidate is re-checked.
            for a in 0..d.vectors.len() {
                for b in (a + 1)..d.vectors.len() {
                    for s in 1..16 {
                        let th = std::f64::consts::PI * s as f64 / 16.0;
                        let v = &d.vectors[a] * C64::new(th.cos(), 0.0)
                            + &d.vectors[b] * C64::new(th.sin(), 0.0);
                        if let Some(u) = all_negative(&v) {
                            return Some(u);
                        }
                    }
                }
            }
        }
    }
    None
}

/// Roles `(j₀, j₁, …)` obtained by rotating `(0, 1, …, k−1)`.
fn cyclic_orders(k: usize) -> Vec<Vec<usize>> {
    (0..k)
        .map(|s| (0..k).map(|i| (i + s) % k).collect())
        .collect()
}

fn yuan_lemma(mats: &[&HermitianMatrix], tol: Tolerances) -> Result<CertificateResult> {
    let (lambda, mu, y) = convex_combination(mats)?;
    if lambda >= -LAMBDA_TOL {
        let result = CertificateResult::PsdCertificate {
            mu0: mu,
            convex: true,
        };
        verify_certificate(mats, &result, tol.eps2)?;
        return Ok(result);
    }
    if let Some(x) = negative_direction(mats, &y) {
        let result = CertificateResult::SystemSolvable {
            x,
            system: TargetSystem::AllNegative,
        };
        verify_certificate(mats, &result, tol.eps2)?;
        return Ok(result);
    }
    // Every form is nonnegative somewhere on each direction, yet no convex combination is
    // PSD: some role assignment must admit an equality-constrained solution or a witness.
    let mut last_err = None;
    for order in cyclic_orders(mats.len()) {
        match permutation_case(mats, &order, tol) {
            Ok(Some(result)) => {
                verify_certificate(mats, &result, tol.eps2)?;
                return Ok(result);
            }
            Ok(None) => {}
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| {
        Error::step(
            "role permutations",
            format!(
                "no permutation was conclusive although the best combination has λ = {lambda:.3e}"
            ),
        )
    }))
}

/// `min A_{j₀}•X  s.t.  A_{jₖ}•X = 0, I•X ≤ 1` for one role assignment.
fn permutation_case(
    mats: &[&HermitianMatrix],
    order: &[usize],
    tol: Tolerances,
) -> Result<Option<CertificateResult>> {
    let a0 = mats[order[0]];
    let forms: Vec<&HermitianMatrix> = order[1..].iter().map(|&j| mats[j]).collect();
    let inst = unit_ball_instance(a0, &forms, Sense::Eq)?;
    let (pair, verdict) = analyze(&inst, tol.eps1, tol.eps2)?;
    Ok(match verdict.outcome {
        Outcome::Recovered { x, value, .. } => {
            let nx = x.norm_squared();
            (nx > 0.0 && value / nx < -STRICT_MARGIN).then(|| CertificateResult::SystemSolvable {
                x: unit(&x),
                system: TargetSystem::Equalities {
                    order: order.to_vec(),
                },
            })
        }
        Outcome::GapOrInfeasible if pair.mu.iter().all(|v| *v > tol.eps2) => {
            let (x1, x2) = verdict.report.witnesses.unwrap();
            let sign = forms[forms.len() - 1];
            let (x1, x2) = if sign.quad(&x1) < 0.0 {
                (x1, x2)
            } else {
                (x2, x1)
            };
            Some(CertificateResult::PropertyWitness {
                mu_breve: pair.mu,
                x1,
                x2,
                order: order.to_vec(),
            })
        }
        // Equality multipliers of the wrong sign do not give a witness for these roles.
        Outcome::GapOrInfeasible => None,
    })
}

/// Re-checks a result by substitution.
///
/// `mats` lists `A₀` followed by the constraint forms (S-lemma) or all forms (Yuan).
pub fn verify_certificate(
    mats: &[&HermitianMatrix],
    result: &CertificateResult,
    eps2: f64,
) -> Result<()> {
    let fail = |d: String| Err(Error::step("certificate verification", d));
    let field = mats[0].field();
    let n = mats[0].n();
    match result {
        CertificateResult::PsdCertificate { mu0, convex } => {
            if mu0.iter().any(|v| *v < 0.0) {
                return fail("negative weight".into());
            }
            let terms: Vec<(f64, &HermitianMatrix)> = if *convex {
                if mu0.len() != mats.len() || (mu0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return fail("convex weights must cover every form and sum to one".into());
                }
                mu0.iter().copied().zip(mats.iter().copied()).collect()
            } else {
                if mu0.len() + 1 != mats.len() {
                    return fail("one weight per constraint form expected".into());
                }
                std::iter::once((1.0, mats[0]))
                    .chain(mu0.iter().copied().zip(mats[1..].iter().copied()))
                    .collect()
            };
            let lmin = HermitianMatrix::lin_comb(&terms).min_eigenvalue();
            if lmin < -PSD_TOL {
                return fail(format!("combination has eigenvalue {lmin:.3e}"));
            }
        }
        CertificateResult::PropertyWitness {
            mu_breve,
            x1,
            x2,
            order,
        } => {
            let k = order.len();
            if mu_breve.len() != k || mu_breve.iter().any(|v| !(*v > eps2)) {
                return fail("witness multipliers must exceed eps2".into());
            }
            let roles: Vec<&HermitianMatrix> = order.iter().map(|&j| mats[j]).collect();
            let id = HermitianMatrix::identity(field, n);
            let mut terms = vec![(1.0, roles[0])];
            terms.extend(
                mu_breve[..k - 1]
                    .iter()
                    .copied()
                    .zip(roles[1..].iter().copied()),
            );
            terms.push((mu_breve[k - 1], &id));
            let z = HermitianMatrix::lin_comb(&terms);
            let zs = z.fro_norm().max(1.0);
            if z.min_eigenvalue() < -PSD_TOL * zs {
                return fail(format!("Z has eigenvalue {:.3e}", z.min_eigenvalue()));
            }
            // Residuals of an approximate null space grow with the size of Z.
            let null = null_basis(&z, eps2 * zs)?;
            if null.len() != 2 {
                return fail(format!("null space of Z has dimension {}", null.len()));
            }
            for x in [x1, x2] {
                let r = z.apply(x).norm();
                if r > eps2 * zs * x.norm() {
                    return fail(format!("witness leaves the null space (residual {r:.3e})"));
                }
            }
            let mf = field.multiplicity();
            let first = roles[1];
            if first.quad(x1).abs() > eps2
                || first.quad(x2).abs() > eps2
                || first.bilinear(x1, x2).re.abs() <= eps2
            {
                return fail(
                    "first form does not vanish on the witnesses with a nonzero cross term".into(),
                );
            }
            if mf == 2 {
                let second = roles[2];
                let w = second.bilinear(x1, x2);
                if second.quad(x1).abs() > eps2
                    || second.quad(x2).abs() > eps2
                    || w.re.abs() > eps2
                    || w.im.abs() <= eps2
                {
                    return fail("second form violates the imaginary cross-term condition".into());
                }
            }
            let sign = roles[mf + 1];
            if !(sign.quad(x1) < 0.0 && sign.quad(x2) > 0.0) {
                return fail("sign-tested form does not change sign across the witnesses".into());
            }
        }
        CertificateResult::SystemSolvable { x, system } => {
            if x.norm() == 0.0 {
                return fail("zero vector".into());
            }
            let u = unit(x);
            let scale = |a: &HermitianMatrix| NONSTRICT_TOL * a.fro_norm().max(1.0);
            let ok = match system {
                TargetSystem::Inequalities => {
                    mats[0].quad(&u) < -STRICT_MARGIN
                        && mats[1..].iter().all(|a| a.quad(&u) <= scale(a))
                }
                TargetSystem::AllNegative => mats.iter().all(|a| a.quad(&u) < -STRICT_MARGIN),
                TargetSystem::Equalities { order } => {
                    mats[order[0]].quad(&u) < -STRICT_MARGIN
                        && order[1..]
                            .iter()
                            .all(|&j| mats[j].quad(&u).abs() <= scale(mats[j]))
                }
            };
            if !ok {
                return fail(format!("vector does not solve the {system:?} system"));
            }
        }
    }
    Ok(())
}
