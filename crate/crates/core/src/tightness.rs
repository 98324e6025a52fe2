//! Tightness test for relaxations with `m_F + 2` constraints and rank-one recovery.
//!
//! Constraint layout: indices `0..m_F` are the forms equalized by the two-form
//! decomposition, index `m_F` is the sign-tested form and the last index carries a
//! nonzero bound `c_m`. Forms are compared through `Mᵢ = Aᵢ − (cᵢ/c_m)A_m`.

use std::f64::consts::FRAC_PI_2;

use crate::decomposition::{
    check_joint_definiteness, decompose_two_forms, decompose_two_forms_with_tol,
    extract_four_forms, extract_three_forms, JointDefiniteness,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, eig, null_basis, psd_rank, CVector, Field, HermitianMatrix, C64};
use crate::sdp::{purify, solve_sdp, Constraint, QcqpInstance, SdpPair, Sense};

/// Default threshold for multipliers, numerical ranks and clause values.
pub const DEFAULT_EPS2: f64 = 1e-4;

/// Absolute feasibility tolerance of a recovered vector, scaled by `max(1, |cᵢ|)`.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Objective tolerance of a recovered vector, relative to `max(1, |primal value|)`.
pub const OBJECTIVE_TOL: f64 = 1e-5;

/// Random combinations tried by the joint-definiteness check if its SDP fails.
const DEFINITENESS_TRIALS: usize = 200;

/// Values of the relative forms on a two-piece decomposition `X = x₁x₁ᴴ + x₂x₂ᴴ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PieceValues {
    /// `M₁ • xₖxₖᴴ`.
    pub first_shares: [f64; 2],
    /// `Re(x₁ᴴM₁x₂)`.
    pub first_cross: f64,
    /// `M₂ • xₖxₖᴴ`, complex field only.
    pub second_shares: Option<[f64; 2]>,
    /// `x₁ᴴM₂x₂` after the phase normalization of `x₂`, complex field only.
    pub second_cross: Option<C64>,
    /// Values of the sign-tested relative form on both pieces.
    pub last_shares: [f64; 2],
    /// `last_shares[0] · last_shares[1]`.
    pub product: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyIReport {
    pub holds: bool,
    /// Every LE multiplier exceeds `eps2`.
    pub clause_i1: bool,
    /// `rank(Z, eps2) = n − 2`.
    pub clause_i2: bool,
    /// `rank(X, eps2) = 2`.
    pub clause_i3: bool,
    pub clause_i41: bool,
    /// `None` over the reals.
    pub clause_i42: Option<bool>,
    pub clause_i43: bool,
    pub witnesses: Option<(CVector, CVector)>,
    pub values: Option<PieceValues>,
    pub rank_x: usize,
    pub rank_z: usize,
    pub eps2: f64,
}

/// Which construction produced a recovered vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecoveryRoute {
    /// An inactive LE constraint was dropped.
    ZeroMultiplier { index: usize },
    /// `X` already had rank at most one.
    LowRank,
    /// Four-form extraction inside a null space of dimension at least 3.
    WideNullSpace,
    /// Both pieces already matched every relative form.
    EqualShares,
    /// Real rotation of the pieces solving a scalar quadratic.
    Rotation,
    /// Three-form extraction on `Range(X)` (complex field only).
    RangeExtraction,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Recovered {
        x: CVector,
        value: f64,
        route: RecoveryRoute,
    },
    /// The relaxation has a positive gap or the original problem is infeasible; the test
    /// cannot tell which.
    GapOrInfeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TightnessVerdict {
    pub report: PropertyIReport,
    pub outcome: Outcome,
}

impl TightnessVerdict {
    pub fn is_recovered(&self) -> bool {
        matches!(self.outcome, Outcome::Recovered { .. })
    }
}

fn relative_forms(inst: &QcqpInstance) -> Vec<HermitianMatrix> {
    let last = &inst.constraints[inst.m() - 1];
    inst.constraints[..inst.m() - 1]
        .iter()
        .map(|c| HermitianMatrix::lin_comb(&[(1.0, &c.a), (-c.c / last.c, &last.a)]))
        .collect()
}

fn le_multiplier_ok(inst: &QcqpInstance, pair: &SdpPair, eps2: f64) -> bool {
    inst.constraints
        .iter()
        .zip(&pair.mu)
        .all(|(c, m)| c.sense == Sense::Eq || *m > eps2)
}

/// Evaluates the clauses on a purified pair.
///
/// The multiplier and rank clauses are always evaluated. The decomposition clauses need two
/// pieces and are evaluated exactly when `rank(X, eps2) = 2`; otherwise they read `false`.
pub fn test_property_i(inst: &QcqpInstance, pair: &SdpPair, eps2: f64) -> Result<PropertyIReport> {
    inst.validate_for_tightness()?;
    if !(eps2 > 0.0) {
        return Err(Error::Precondition("eps2 must be positive".into()));
    }
    if pair.mu.len() != inst.m() || pair.x.n() != inst.n {
        return Err(Error::DimensionMismatch {
            expected: inst.m(),
            found: pair.mu.len(),
        });
    }
    let n = inst.n;
    let complex = inst.field == Field::Complex;
    let rank_x = psd_rank(&pair.x, eps2)?;
    let rank_z = psd_rank(&pair.z, eps2)?;
    let clause_i1 = le_multiplier_ok(inst, pair, eps2);
    let clause_i2 = rank_z + 2 == n;
    let clause_i3 = rank_x == 2;
    let mut report = PropertyIReport {
        holds: false,
        clause_i1,
        clause_i2,
        clause_i3,
        clause_i41: false,
        clause_i42: complex.then_some(false),
        clause_i43: false,
        witnesses: None,
        values: None,
        rank_x,
        rank_z,
        eps2,
    };
    if !clause_i3 {
        return Ok(report);
    }

    let m = relative_forms(inst);
    let mf = inst.field.multiplicity();
    let eq: Vec<&HermitianMatrix> = m[..mf].iter().collect();
    let d = decompose_two_forms_with_tol(&pair.x, &eq, eps2)?;
    if d.rank() != 2 {
        return Err(Error::step(
            "two-piece decomposition",
            format!("{} pieces for a rank-2 matrix", d.rank()),
        ));
    }
    let x1 = d.vectors[0].clone();
    let mut x2 = d.vectors[1].clone();
    if complex {
        let w = m[1].bilinear(&x1, &x2);
        if w.norm() > eps2 {
            // Rotates the cross term onto the positive imaginary axis.
            let theta = FRAC_PI_2 - w.arg();
            x2 *= C64::from_polar(1.0, theta);
        }
    }
    let last = &m[mf];
    let first_shares = [m[0].quad(&x1), m[0].quad(&x2)];
    let first_cross = m[0].bilinear(&x1, &x2).re;
    let last_shares = [last.quad(&x1), last.quad(&x2)];
    let product = last_shares[0] * last_shares[1];
    let (second_shares, second_cross) = if complex {
        (
            Some([m[1].quad(&x1), m[1].quad(&x2)]),
            Some(m[1].bilinear(&x1, &x2)),
        )
    } else {
        (None, None)
    };

    report.clause_i41 = first_shares.iter().all(|v| v.abs() <= eps2) && first_cross.abs() > eps2;
    report.clause_i42 = match (second_shares, second_cross) {
        (Some(s), Some(w)) => {
            Some(s.iter().all(|v| v.abs() <= eps2) && w.re.abs() <= eps2 && w.im.abs() > eps2)
        }
        _ => None,
    };
    report.clause_i43 = product < -eps2 * eps2;
    report.holds = clause_i1
        && clause_i2
        && report.clause_i41
        && report.clause_i42.unwrap_or(true)
        && report.clause_i43;
    report.values = Some(PieceValues {
        first_shares,
        first_cross,
        second_shares,
        second_cross,
        last_shares,
        product,
    });
    report.witnesses = Some((x1, x2));
    Ok(report)
}

/// Rank-at-most-one optimizer when the LE multiplier at `i0` vanishes.
///
/// Returns the zero vector when the forms other than `i0` vanish at `X`. Otherwise the
/// returned `x` satisfies `Aᵢ • xxᴴ = Aᵢ • X` for `i ≠ i0` and `A_{i0} • xxᴴ ≤ A_{i0} • X`.
pub fn recover_zero_multiplier(inst: &QcqpInstance, pair: &SdpPair, i0: usize) -> Result<CVector> {
    inst.validate_for_tightness()?;
    if i0 >= inst.m() {
        return Err(Error::Precondition(format!(
            "constraint index {i0} out of range"
        )));
    }
    if inst.constraints[i0].sense != Sense::Le {
        return Err(Error::Precondition(format!(
            "constraint {i0} is an equality"
        )));
    }
    let x = &pair.x;
    let delta: Vec<f64> = inst.constraints.iter().map(|c| dot(&c.a, x)).collect();
    let kept: Vec<usize> = (0..inst.m()).filter(|&i| i != i0).collect();
    let xnorm = x.fro_norm();
    let vanishes = kept
        .iter()
        .all(|&i| delta[i].abs() <= 1e-9 * (inst.constraints[i].a.fro_norm() * xnorm).max(1.0));
    if vanishes {
        return Ok(CVector::zeros(inst.n));
    }

    // Largest |δ| gives the best conditioned ratios δᵢ/δ_p.
    let p = *kept
        .iter()
        .max_by(|&&i, &&j| delta[i].abs().total_cmp(&delta[j].abs()))
        .unwrap();
    let rel = |i: usize| {
        HermitianMatrix::lin_comb(&[
            (1.0, &inst.constraints[i].a),
            (-delta[i] / delta[p], &inst.constraints[p].a),
        ])
    };
    let equalized: Vec<HermitianMatrix> =
        kept.iter().filter(|&&i| i != p).map(|&i| rel(i)).collect();
    let refs: Vec<&HermitianMatrix> = equalized.iter().collect();
    let pieces = decompose_two_forms(x, &refs)?.vectors;
    let dropped = rel(i0);
    // The dropped form sums to zero over the pieces, so its minimum is nonpositive.
    let k0 = (0..pieces.len())
        .min_by(|&a, &b| {
            dropped
                .quad(&pieces[a])
                .total_cmp(&dropped.quad(&pieces[b]))
        })
        .unwrap();
    let t0 = inst.constraints[p].a.quad(&pieces[k0]) / delta[p];
    if !(t0 > 0.0) {
        return Err(Error::step(
            "zero-multiplier scaling",
            format!("t0 = {t0:.3e} is not positive; the pair violates the Slater hypothesis"),
        ));
    }
    Ok(&pieces[k0] / C64::new(t0.sqrt(), 0.0))
}

/// Rescales a piece by `tₖ = A_m • xₖxₖᴴ / c_m`, keeping the one with the smaller violation;
/// both scales must be positive.
fn finish_equal_shares(inst: &QcqpInstance, x1: &CVector, x2: &CVector) -> Result<CVector> {
    let last = &inst.constraints[inst.m() - 1];
    let t = [last.a.quad(x1) / last.c, last.a.quad(x2) / last.c];
    if !(t[0] > 0.0 && t[1] > 0.0) {
        return Err(Error::step(
            "piece scaling",
            format!("scales ({:.3e}, {:.3e}) are not both positive", t[0], t[1]),
        ));
    }
    // The sign-tested form has shares of opposite sign up to eps2; the piece whose
    // rescaling violates less is the one with the nonpositive share.
    let cand = [
        x1 / C64::new(t[0].sqrt(), 0.0),
        x2 / C64::new(t[1].sqrt(), 0.0),
    ];
    let viol = [inst.max_violation(&cand[0]), inst.max_violation(&cand[1])];
    let k = if viol[0] < viol[1] || (viol[0] == viol[1] && t[0] >= t[1]) {
        0
    } else {
        1
    };
    Ok(cand[k].clone())
}

/// Positive root of `a t² + 2b t + c = 0` when `a c < 0`.
pub fn positive_root(a: f64, b: f64, c: f64) -> Result<f64> {
    let disc = b * b - a * c;
    if !(a * c < 0.0) || !(disc > 0.0) {
        return Err(Error::step(
            "rotation quadratic",
            format!("a = {a:.3e}, b = {b:.3e}, c = {c:.3e} do not give roots of opposite sign"),
        ));
    }
    let q = -(b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 {
        let s = (-c / a).sqrt();
        (s, -s)
    } else {
        (q / a, c / q)
    };
    Ok(if r1 > 0.0 { r1 } else { r2 })
}

fn verify(inst: &QcqpInstance, pair: &SdpPair, x: &CVector) -> Result<f64> {
    let viol = inst.max_violation(x);
    if viol > FEASIBILITY_TOL {
        return Err(Error::step(
            "verification",
            format!("recovered vector violates a constraint by {viol:.3e}"),
        ));
    }
    let value = inst.objective_value(x);
    let gap = (value - pair.primal_value).abs();
    if gap > OBJECTIVE_TOL * pair.primal_value.abs().max(1.0) {
        return Err(Error::step(
            "verification",
            format!(
                "recovered value {value} differs from the relaxation value {}",
                pair.primal_value
            ),
        ));
    }
    Ok(value)
}

/// Decides the test on a purified pair and, when it fails, builds a rank-one optimizer.
///
/// Construction branches are tried in a fixed order (zero multiplier, low rank, wide null
/// space, then the decomposition clauses); each is valid only once the earlier ones are
/// excluded. Every recovered vector is checked for feasibility and optimality.
pub fn recover_optimum(inst: &QcqpInstance, pair: &SdpPair, eps2: f64) -> Result<TightnessVerdict> {
    let report = test_property_i(inst, pair, eps2)?;
    if report.holds {
        return Ok(TightnessVerdict {
            report,
            outcome: Outcome::GapOrInfeasible,
        });
    }
    let (x, route) = recover_vector(inst, pair, &report, eps2)?;
    let value = verify(inst, pair, &x)?;
    Ok(TightnessVerdict {
        report,
        outcome: Outcome::Recovered { x, value, route },
    })
}

fn recover_vector(
    inst: &QcqpInstance,
    pair: &SdpPair,
    report: &PropertyIReport,
    eps2: f64,
) -> Result<(CVector, RecoveryRoute)> {
    let n = inst.n;
    if !report.clause_i1 {
        let i0 = (0..inst.m())
            .filter(|&i| inst.constraints[i].sense == Sense::Le)
            .min_by(|&a, &b| pair.mu[a].total_cmp(&pair.mu[b]))
            .unwrap();
        let x = recover_zero_multiplier(inst, pair, i0)?;
        return Ok((x, RecoveryRoute::ZeroMultiplier { index: i0 }));
    }
    if report.rank_x < 2 {
        let e = eig(&pair.x)?;
        let x = if report.rank_x == 0 {
            CVector::zeros(n)
        } else {
            &e.eigenvectors[0] * C64::new(e.eigenvalues[0].max(0.0).sqrt(), 0.0)
        };
        return Ok((x, RecoveryRoute::LowRank));
    }
    let forms: Vec<&HermitianMatrix> = inst.constraints.iter().map(|c| &c.a).collect();
    if report.rank_z + 3 <= n || report.rank_x >= 3 {
        let basis = null_basis(&pair.z, eps2)?;
        if basis.len() < 3 {
            return Err(Error::step(
                "null space",
                format!(
                    "null space of Z has dimension {} but X has rank {}",
                    basis.len(),
                    report.rank_x
                ),
            ));
        }
        if let JointDefiniteness::Counterexample(y) =
            check_joint_definiteness(&forms, &basis, DEFINITENESS_TRIALS)?
        {
            return Err(Error::HypothesisViolated {
                witness: Box::new(y),
            });
        }
        let x = extract_four_forms(&pair.x, &forms, &basis)?;
        return Ok((x, RecoveryRoute::WideNullSpace));
    }

    let (x1, x2) = report
        .witnesses
        .clone()
        .ok_or_else(|| Error::step("decomposition", "rank-2 pair without witnesses"))?;
    let values = report.values.as_ref().unwrap();
    if !report.clause_i43 {
        return Ok((
            finish_equal_shares(inst, &x1, &x2)?,
            RecoveryRoute::EqualShares,
        ));
    }
    let shares_vanish = |s: &[f64; 2]| s.iter().all(|v| v.abs() <= eps2);
    if !shares_vanish(&values.first_shares)
        || !values.second_shares.as_ref().is_none_or(shares_vanish)
    {
        return Err(Error::step(
            "decomposition shares",
            "relative forms do not vanish on the pieces; the pair is not accurate enough for eps2",
        ));
    }
    if values.first_cross.abs() <= eps2 {
        let last = &relative_forms(inst)[inst.field.multiplicity()];
        let a = last.quad(&x1);
        let b = last.bilinear(&x1, &x2).re;
        let c = last.quad(&x2);
        let t = positive_root(a, b, c)?;
        let s = C64::new(1.0 / (1.0 + t * t).sqrt(), 0.0);
        let y1 = (&x1 * C64::new(t, 0.0) + &x2) * s;
        let y2 = (&x2 * C64::new(t, 0.0) - &x1) * s;
        return Ok((
            finish_equal_shares(inst, &y1, &y2)?,
            RecoveryRoute::Rotation,
        ));
    }
    if report.clause_i42 == Some(false) {
        let mf = inst.field.multiplicity();
        let three = [forms[0], forms[mf], forms[mf + 1]];
        let x = extract_three_forms(&pair.x, &three, None)?;
        let target = dot(forms[1], &pair.x);
        let err = (forms[1].quad(&x) - target).abs();
        if err > FEASIBILITY_TOL * target.abs().max(1.0) {
            return Err(Error::step(
                "range extraction",
                format!("second form misses its value by {err:.3e}"),
            ));
        }
        return Ok((x, RecoveryRoute::RangeExtraction));
    }
    Err(Error::step(
        "dispatch",
        "no clause failed although the test did not hold",
    ))
}

/// Solves, purifies and runs [`recover_optimum`].
pub fn analyze(inst: &QcqpInstance, eps1: f64, eps2: f64) -> Result<(SdpPair, TightnessVerdict)> {
    inst.validate_for_tightness()?;
    let pair = purify(&solve_sdp(inst, eps1)?, eps2)?;
    let verdict = recover_optimum(inst, &pair, eps2)?;
    Ok((pair, verdict))
}

/// Instances with `m_F + 1` constraints are always tight: an identically zero equality is
/// prepended and the full pipeline runs. A constraint with nonzero bound is moved last if
/// needed. The recovered vector refers to the original instance.
pub fn solve_mf_plus_one(inst: &QcqpInstance, eps1: f64, eps2: f64) -> Result<TightnessVerdict> {
    inst.validate()?;
    let want = inst.field.multiplicity() + 1;
    if inst.m() != want {
        return Err(Error::InvalidInstance(format!(
            "{} constraints given, {want} expected for the {} field",
            inst.m(),
            inst.field
        )));
    }
    let mut cons = inst.constraints.clone();
    let k = (0..cons.len())
        .rev()
        .find(|&i| cons[i].c != 0.0)
        .ok_or_else(|| Error::InvalidInstance("some constraint bound must be nonzero".into()))?;
    let moved = cons.remove(k);
    cons.push(moved);
    cons.insert(
        0,
        Constraint::new(HermitianMatrix::zeros(inst.field, inst.n), 0.0, Sense::Eq),
    );
    let padded = QcqpInstance::new(inst.objective.clone(), cons)?;
    let (_, verdict) = analyze(&padded, eps1, eps2)?;
    if !verdict.is_recovered() {
        return Err(Error::step(
            "padded instance",
            "the zero equality did not break the test",
        ));
    }
    Ok(verdict)
}
