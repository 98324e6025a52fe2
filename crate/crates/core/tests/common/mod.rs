//! Shared generators for the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qcqp_tight::decomposition::{
    decompose_two_forms, extract_four_forms, extract_three_forms, DEFAULT_RANK_TOL,
};
use qcqp_tight::linalg::range_basis;
use qcqp_tight::{CVector, Constraint, Field, HermitianMatrix, QcqpInstance, Sense, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scalar(rng: &mut ChaCha8Rng, field: Field, r: f64) -> C64 {
    match field {
        Field::Real => C64::new(rng.random_range(-r..r), 0.0),
        Field::Complex => C64::new(rng.random_range(-r..r), rng.random_range(-r..r)),
    }
}

pub fn vector(rng: &mut ChaCha8Rng, field: Field, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| scalar(rng, field, 1.0))
}

pub fn unit_vector(rng: &mut ChaCha8Rng, field: Field, n: usize) -> CVector {
    loop {
        let v = vector(rng, field, n);
        let nv = v.norm();
        if nv > 0.1 {
            return v / C64::new(nv, 0.0);
        }
    }
}

pub fn e(n: usize, i: usize) -> CVector {
    CVector::from_fn(n, |k, _| C64::new(if k == i { 1.0 } else { 0.0 }, 0.0))
}

pub fn hermitian(rng: &mut ChaCha8Rng, field: Field, n: usize, r: f64) -> HermitianMatrix {
    let m = DMatrix::from_fn(n, n, |_, _| scalar(rng, field, r));
    HermitianMatrix::hermitian_part(field, &m)
}

/// `BBᴴ` with `B` of size `n × rank`.
pub fn psd(rng: &mut ChaCha8Rng, field: Field, n: usize, rank: usize) -> HermitianMatrix {
    let b = DMatrix::from_fn(n, rank, |_, _| scalar(rng, field, 1.0));
    HermitianMatrix::hermitian_part(field, &(&b * b.adjoint()))
}

pub fn from_full(field: Field, m: &DMatrix<C64>) -> HermitianMatrix {
    HermitianMatrix::hermitian_part(field, m)
}

pub fn le(a: HermitianMatrix, c: f64) -> Constraint {
    Constraint::new(a, c, Sense::Le)
}

pub fn instance(a0: HermitianMatrix, cons: Vec<Constraint>) -> QcqpInstance {
    QcqpInstance::new(a0, cons).unwrap()
}

/// Data of an S-lemma call: `A₀`, constraint forms and a strictly feasible `x₀`.
pub struct SLemmaPlant {
    pub a0: HermitianMatrix,
    pub forms: Vec<HermitianMatrix>,
    pub x0: CVector,
}

impl SLemmaPlant {
    pub fn mats(&self) -> Vec<&HermitianMatrix> {
        std::iter::once(&self.a0).chain(self.forms.iter()).collect()
    }
}

fn form_count(field: Field) -> usize {
    field.multiplicity() + 1
}

/// `A₀ + Σ μ⁰ₖAₖ` is positive definite by construction.
pub fn plant_psd_certificate(rng: &mut ChaCha8Rng, field: Field, n: usize) -> SLemmaPlant {
    let x0 = e(n, 0);
    let forms: Vec<HermitianMatrix> = (0..form_count(field))
        .map(|_| {
            let r = hermitian(rng, field, n, 1.0);
            let shift = r.get(0, 0).re.abs() + rng.random_range(0.5..1.5);
            &r - &HermitianMatrix::outer(field, &x0).scale(shift)
        })
        .collect();
    let p = &psd(rng, field, n, n) + &HermitianMatrix::identity(field, n).scale(0.1);
    let mut terms = vec![(1.0, &p)];
    let mu: Vec<f64> = forms.iter().map(|_| rng.random_range(0.2..1.0)).collect();
    for (m, a) in mu.iter().zip(&forms) {
        terms.push((-m, a));
    }
    SLemmaPlant {
        a0: HermitianMatrix::lin_comb(&terms),
        forms,
        x0,
    }
}

/// Every matrix, `A₀` included, is strongly negative along a common unit vector.
pub fn plant_all_negative(
    rng: &mut ChaCha8Rng,
    field: Field,
    n: usize,
    count: usize,
) -> (Vec<HermitianMatrix>, CVector) {
    let xbar = unit_vector(rng, field, n);
    let dip = HermitianMatrix::outer(field, &xbar).scale(10.0);
    let mats = (0..count)
        .map(|_| &hermitian(rng, field, n, 1.0) - &dip)
        .collect();
    (mats, xbar)
}

pub fn plant_system(rng: &mut ChaCha8Rng, field: Field, n: usize) -> SLemmaPlant {
    let (mut mats, x0) = plant_all_negative(rng, field, n, form_count(field) + 1);
    let a0 = mats.remove(0);
    SLemmaPlant {
        a0,
        forms: mats,
        x0,
    }
}

/// Planted optimum on `span(e₁, e₂)` with positive multipliers and a rank-`n−2` dual.
///
/// On the plane the first form is `[[0, a], [a, 0]]`, the complex second form is
/// `[[0, ib], [−ib, 0]]` and the sign-tested form is `[[−p, c], [c̄, q]]`.
pub fn plant_witness(rng: &mut ChaCha8Rng, field: Field, n: usize) -> SLemmaPlant {
    assert!(n >= 3);
    let k = form_count(field);
    let mut forms = Vec::with_capacity(k);
    for j in 0..k {
        let mut m = hermitian(rng, field, n, 1.0).matrix().clone();
        let a = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let block: [[C64; 2]; 2] = if j + 1 == k {
            let c = scalar(rng, field, 1.0);
            [
                [C64::new(-rng.random_range(0.5..2.0), 0.0), c],
                [c.conj(), C64::new(rng.random_range(0.5..2.0), 0.0)],
            ]
        } else if j == 0 {
            [
                [C64::new(0.0, 0.0), C64::new(a, 0.0)],
                [C64::new(a, 0.0), C64::new(0.0, 0.0)],
            ]
        } else {
            [
                [C64::new(0.0, 0.0), C64::new(0.0, a)],
                [C64::new(0.0, -a), C64::new(0.0, 0.0)],
            ]
        };
        for r in 0..2 {
            for c in 0..2 {
                m[(r, c)] = block[r][c];
            }
        }
        m[(2, 2)] = C64::new(-1.0, 0.0);
        forms.push(from_full(field, &m));
    }
    // Dual matrix: zero on the plane, positive definite on its complement.
    let mut zb = DMatrix::<C64>::zeros(n, n);
    let tail = psd(rng, field, n - 2, n - 2);
    for r in 2..n {
        for c in 2..n {
            zb[(r, c)] = tail.get(r - 2, c - 2)
                + if r == c {
                    C64::new(0.5, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
        }
    }
    let z = from_full(field, &zb);
    let id = HermitianMatrix::identity(field, n);
    let mu: Vec<f64> = (0..=k).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut terms = vec![(1.0, &z)];
    for (m, a) in mu.iter().zip(&forms) {
        terms.push((-m, a));
    }
    terms.push((-mu[k], &id));
    SLemmaPlant {
        a0: HermitianMatrix::lin_comb(&terms),
        forms,
        x0: e(n, 2),
    }
}

/// Forms whose convex combination with weights `w` is positive definite.
pub fn plant_convex_psd(
    rng: &mut ChaCha8Rng,
    field: Field,
    n: usize,
    count: usize,
) -> (Vec<HermitianMatrix>, Vec<f64>) {
    let w: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut mats: Vec<HermitianMatrix> = (0..count - 1)
        .map(|_| hermitian(rng, field, n, 1.0))
        .collect();
    let p = &psd(rng, field, n, n) + &HermitianMatrix::identity(field, n).scale(0.1);
    let mut terms = vec![(1.0 / w[count - 1], &p)];
    for (wk, a) in w.iter().zip(&mats) {
        terms.push((-wk / w[count - 1], a));
    }
    let last = HermitianMatrix::lin_comb(&terms);
    mats.push(last);
    (mats, w)
}

pub fn field_of(flag: bool) -> Field {
    if flag {
        Field::Complex
    } else {
        Field::Real
    }
}

/// Relative error measure used by the decomposition checks.
pub fn rel(err: f64, reference: f64) -> f64 {
    err / reference.abs().max(1.0)
}

/// `max_k |r·Aⱼ(xₖ) − Aⱼ•X| / max(1, |Aⱼ•X|)` over forms and pieces.
pub fn equalization_error(
    x: &HermitianMatrix,
    forms: &[&HermitianMatrix],
    pieces: &[CVector],
) -> f64 {
    let r = pieces.len() as f64;
    let mut worst = 0.0_f64;
    for f in forms {
        let total = qcqp_tight::linalg::dot(f, x);
        for p in pieces {
            worst = worst.max(rel((r * f.quad(p) - total).abs(), total));
        }
    }
    worst
}

/// `max_i |Aᵢ(v) − Aᵢ•X| / max(1, |Aᵢ•X|)`.
pub fn extraction_error(x: &HermitianMatrix, forms: &[&HermitianMatrix], v: &CVector) -> f64 {
    forms
        .iter()
        .map(|f| {
            let total = qcqp_tight::linalg::dot(f, x);
            rel((f.quad(v) - total).abs(), total)
        })
        .fold(0.0, f64::max)
}

/// A form with `A • X = 0`, obtained by removing the `X` component.
pub fn vanishing_on(a: &HermitianMatrix, x: &HermitianMatrix) -> HermitianMatrix {
    let t = qcqp_tight::linalg::dot(a, x) / qcqp_tight::linalg::dot(x, x);
    a - &x.scale(t)
}

pub struct DecompositionCase {
    pub x: HermitianMatrix,
    pub forms: Vec<HermitianMatrix>,
    pub basis: Option<Vec<CVector>>,
}

impl DecompositionCase {
    pub fn refs(&self) -> Vec<&HermitianMatrix> {
        self.forms.iter().collect()
    }
}

/// Random PSD `X` of random rank with `m_F` random forms.
pub fn two_form_case(seed: u64) -> DecompositionCase {
    let mut r = rng(seed);
    let field = field_of(r.random_bool(0.5));
    let n = r.random_range(1..=8);
    let rank = r.random_range(1..=n);
    let x = psd(&mut r, field, n, rank);
    let forms = (0..field.multiplicity())
        .map(|_| hermitian(&mut r, field, n, 5.0))
        .collect();
    DecompositionCase {
        x,
        forms,
        basis: None,
    }
}

/// Three forms with values not all zero. Over the reals one form is positive definite and
/// `X` has rank at least 3.
pub fn three_form_case(seed: u64) -> DecompositionCase {
    let mut r = rng(seed);
    let field = field_of(r.random_bool(0.5));
    let (n, rank) = match field {
        Field::Complex => {
            let n = r.random_range(1..=6);
            (n, r.random_range(1..=n))
        }
        Field::Real => {
            let n = r.random_range(3..=6);
            (n, r.random_range(3..=n))
        }
    };
    let x = psd(&mut r, field, n, rank);
    let mut forms: Vec<HermitianMatrix> =
        (0..3).map(|_| hermitian(&mut r, field, n, 5.0)).collect();
    if field == Field::Real {
        forms[2] = &psd(&mut r, field, n, n) + &HermitianMatrix::identity(field, n);
    }
    DecompositionCase {
        x,
        forms,
        basis: None,
    }
}

/// Three forms vanishing on `X`, with the whole space as the subspace. Over the reals the
/// third form is a combination of the first two.
pub fn three_form_zero_case(seed: u64) -> DecompositionCase {
    let mut r = rng(seed);
    let field = field_of(r.random_bool(0.5));
    let n = r.random_range(3..=6);
    let rank = r.random_range(1..=n);
    let x = psd(&mut r, field, n, rank);
    let mut forms: Vec<HermitianMatrix> = (0..3)
        .map(|_| vanishing_on(&hermitian(&mut r, field, n, 5.0), &x))
        .collect();
    if field == Field::Real {
        let (a, b) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        forms[2] = HermitianMatrix::lin_comb(&[(a, &forms[0]), (b, &forms[1])]);
    }
    let basis = (0..n).map(|k| e(n, k)).collect();
    DecompositionCase {
        x,
        forms,
        basis: Some(basis),
    }
}

/// `m_F + 2` forms on a random subspace of dimension at least 3, one of them positive
/// definite there, with `X` supported on the subspace.
pub fn four_form_case(seed: u64) -> DecompositionCase {
    let mut r = rng(seed);
    let field = field_of(r.random_bool(0.5));
    let n = r.random_range(3..=7);
    let d = r.random_range(3..=n);
    let basis = qcqp_tight::linalg::orthonormalize(
        &(0..d).map(|_| vector(&mut r, field, n)).collect::<Vec<_>>(),
        1e-9,
    );
    let rank = r.random_range(1..=basis.len());
    let coeffs = DMatrix::from_fn(basis.len(), rank, |_, _| scalar(&mut r, field, 1.0));
    let b = qcqp_tight::linalg::basis_matrix(n, &basis) * coeffs;
    let x = from_full(field, &(&b * b.adjoint()));
    let k = field.multiplicity() + 2;
    let mut forms: Vec<HermitianMatrix> =
        (0..k).map(|_| hermitian(&mut r, field, n, 5.0)).collect();
    let slot = r.random_range(0..k);
    forms[slot] = &psd(&mut r, field, n, n) + &HermitianMatrix::identity(field, n).scale(0.5);
    DecompositionCase {
        x,
        forms,
        basis: Some(basis),
    }
}

pub fn fixture(name: &str) -> QcqpInstance {
    let path = format!("{}/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"));
    qcqp_tight::io::read_instance(path).unwrap()
}

/// Relation imposed on the compressed blocks of a planted tightness instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plant {
    /// The sign-tested block lies in the span of the equalized blocks and the last one.
    EqualShares,
    /// The first block lies in the span of the other equalized block and the last one.
    Rotation,
    /// The second equalized block is a multiple of the last one (complex only).
    RangeExtraction,
    /// Zero dual matrix, so the null space is the whole space.
    WideNullSpace,
}

fn block_form(
    rng: &mut ChaCha8Rng,
    field: Field,
    n: usize,
    block: &HermitianMatrix,
    corner: f64,
) -> HermitianMatrix {
    let mut m = hermitian(rng, field, n, COUPLING).matrix().clone();
    for r in 0..2 {
        for c in 0..2 {
            m[(r, c)] = block.get(r, c);
        }
    }
    if corner != 0.0 {
        m[(n - 1, n - 1)] = C64::new(corner, 0.0);
    }
    from_full(field, &m)
}

/// Block with trace in `[0.5, 2]`.
fn free_block(rng: &mut ChaCha8Rng, field: Field) -> HermitianMatrix {
    let b = hermitian(rng, field, 2, 1.0);
    let t = rng.random_range(0.5..2.0);
    &b + &HermitianMatrix::identity(field, 2).scale((t - b.trace()) / 2.0)
}

/// Size of entries coupling the plane to `e₃`. Solver accuracy tilts the computed ranges of
/// `X` and `Z` by about the square root of the complementarity gap, which these entries
/// turn into form errors.
const COUPLING: f64 = 0.2;

/// `n = 3` instance with optimum `X = diag(1, 1, 0)`, positive multipliers and
/// `Z = s·e₃e₃ᴴ` (or `Z = 0` for [`Plant::WideNullSpace`]).
pub fn plant_route(rng: &mut ChaCha8Rng, field: Field, plant: Plant) -> QcqpInstance {
    let n = 3;
    let mf = field.multiplicity();
    let m = mf + 2;
    let last = &psd(rng, field, 2, 2) + &HermitianMatrix::identity(field, 2).scale(2.0);
    let mut blocks: Vec<HermitianMatrix> = (0..m - 1).map(|_| free_block(rng, field)).collect();
    let sign_a = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let a = sign_a * rng.random_range(0.5..1.5);
    let d = rng.random_range(1.0..2.0);
    match (plant, field) {
        (Plant::EqualShares, _) => {
            let mut terms = vec![(a, &blocks[0]), (d, &last)];
            let b2 = blocks[1].clone();
            if mf == 2 {
                terms.push((rng.random_range(-1.0..1.0), &b2));
            }
            blocks[mf] = HermitianMatrix::lin_comb(&terms);
        }
        (Plant::Rotation, Field::Real) => blocks[0] = last.scale(d),
        (Plant::Rotation, Field::Complex) => {
            blocks[0] = HermitianMatrix::lin_comb(&[(a.abs(), &blocks[1]), (d, &last)]);
        }
        (Plant::RangeExtraction, _) => {
            assert_eq!(field, Field::Complex);
            blocks[1] = last.scale(d);
        }
        (Plant::WideNullSpace, _) => {}
    }
    blocks.push(last);
    let forms: Vec<HermitianMatrix> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| block_form(rng, field, n, b, if i == m - 1 { 10.0 } else { 0.0 }))
        .collect();
    let z = match plant {
        Plant::WideNullSpace => HermitianMatrix::zeros(field, n),
        _ => HermitianMatrix::outer(field, &e(n, n - 1)).scale(rng.random_range(5.0..10.0)),
    };
    let mu: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut terms = vec![(1.0, &z)];
    terms.extend(mu.iter().map(|v| -v).zip(forms.iter()));
    let a0 = HermitianMatrix::lin_comb(&terms);
    let cons = blocks
        .iter()
        .zip(forms)
        .map(|(b, f)| le(f, b.trace()))
        .collect();
    instance(a0, cons)
}

// ---------------------------------------------------------------------------
// Decomposition checks.

pub fn check_two(case: &DecompositionCase) -> Result<(), String> {
    let d = decompose_two_forms(&case.x, &case.refs()).map_err(|e| e.to_string())?;
    let recon = (&d.reconstruct() - &case.x).fro_norm() / case.x.fro_norm().max(1.0);
    if recon > 1e-8 {
        return Err(format!("reconstruction {recon:.2e}"));
    }
    let eq = equalization_error(&case.x, &case.refs(), &d.vectors);
    if eq > 1e-7 {
        return Err(format!("equalization {eq:.2e}"));
    }
    let rank = qcqp_tight::linalg::psd_rank(&case.x, DEFAULT_RANK_TOL * case.x.fro_norm().max(1.0))
        .unwrap();
    if d.rank() != rank {
        return Err(format!("{} pieces for rank {rank}", d.rank()));
    }
    Ok(())
}

pub fn in_range(x: &HermitianMatrix, v: &CVector) -> f64 {
    let basis = range_basis(x, 1e-9 * x.fro_norm().max(1.0)).unwrap();
    let mut proj = v.clone();
    for q in &basis {
        proj -= q * q.dotc(v);
    }
    proj.norm() / v.norm().max(1.0)
}

pub fn check_three(case: &DecompositionCase) -> Result<(), String> {
    let v = extract_three_forms(&case.x, &case.refs(), case.basis.as_deref())
        .map_err(|e| e.to_string())?;
    if v.norm() == 0.0 {
        return Err("zero vector".into());
    }
    let err = extraction_error(&case.x, &case.refs(), &v);
    if err > 1e-7 {
        return Err(format!("extraction {err:.2e}"));
    }
    if case.basis.is_none() {
        let off = in_range(&case.x, &v);
        if off > 1e-8 {
            return Err(format!("vector leaves Range(X) by {off:.2e}"));
        }
    }
    Ok(())
}

pub fn check_four(case: &DecompositionCase) -> Result<(), String> {
    let basis = case.basis.as_ref().unwrap();
    let v = extract_four_forms(&case.x, &case.refs(), basis).map_err(|e| e.to_string())?;
    let err = extraction_error(&case.x, &case.refs(), &v);
    if err > 1e-7 {
        return Err(format!("extraction {err:.2e}"));
    }
    let mut proj = v.clone();
    for q in basis {
        proj -= q * q.dotc(&v);
    }
    if proj.norm() > 1e-8 * v.norm().max(1.0) {
        return Err("vector leaves the subspace".into());
    }
    Ok(())
}
