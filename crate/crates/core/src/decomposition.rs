//! Constructive rank-one decompositions of a PSD matrix against a few quadratic forms.
//!
//! * [`decompose_two_forms`] splits `X` into rank-one pieces that each carry an equal
//!   share of one (real) or two (complex) form values.
//! * [`extract_three_forms`] finds one vector reproducing three form values of `X`.
//! * [`extract_four_forms`] does the same for `m_F + 2` forms on a subspace where the
//!   forms are jointly definite.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{basis_matrix, dot, eig, CVector, Field, HermitianMatrix, C64};
use crate::sdp::{HermitianSdp, Row};

/// Rank threshold of [`decompose_two_forms`], relative to `max(1, ‖X‖_F)`.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative residual accepted for extracted vectors.
pub const EXTRACTION_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct RankOneDecomposition {
    pub field: Field,
    pub vectors: Vec<CVector>,
}

impl RankOneDecomposition {
    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    /// `Σ xₖxₖᴴ`.
    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.vectors[0].len();
        let mut acc = nalgebra::DMatrix::<C64>::zeros(n, n);
        for v in &self.vectors {
            acc += v * v.adjoint();
        }
        HermitianMatrix::hermitian_part(self.field, &acc)
    }
}

/// Values `Aᵢ • Y` of a list of forms.
#[derive(Clone, Debug, PartialEq)]
pub struct FormValues {
    pub values: Vec<f64>,
}

impl FormValues {
    pub fn at_matrix(forms: &[&HermitianMatrix], y: &HermitianMatrix) -> Self {
        Self {
            values: forms.iter().map(|a| dot(a, y)).collect(),
        }
    }

    pub fn at_vector(forms: &[&HermitianMatrix], x: &CVector) -> Self {
        Self {
            values: forms.iter().map(|a| a.quad(x)).collect(),
        }
    }

    /// Largest `|uᵢ − vᵢ| / max(1, |vᵢ|)` against the reference `other`.
    pub fn max_rel_diff(&self, other: &FormValues) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| (u - v).abs() / v.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum JointDefiniteness {
    /// `Σ weightsᵢ VᴴAᵢV ⪰ margin·I` with `margin > 0`, normalized so that
    /// `Σ |weightsᵢ|·‖VᴴAᵢV‖_F = 1`.
    Certified { weights: Vec<f64>, margin: f64 },
    /// Nonzero PSD `Y` supported on the subspace with `Aᵢ • Y ≈ 0` for every form.
    Counterexample(HermitianMatrix),
}

// ---------------------------------------------------------------------------
// Two-form decomposition.

pub fn decompose_two_forms(
    x: &HermitianMatrix,
    forms: &[&HermitianMatrix],
) -> Result<RankOneDecomposition> {
    decompose_two_forms_with_tol(x, forms, DEFAULT_RANK_TOL * x.fro_norm().max(1.0))
}

/// As [`decompose_two_forms`] with eigenvalues `<= eps_rank` treated as zero.
pub fn decompose_two_forms_with_tol(
    x: &HermitianMatrix,
    forms: &[&HermitianMatrix],
    eps_rank: f64,
) -> Result<RankOneDecomposition> {
    let field = x.field();
    if forms.is_empty() || forms.len() > field.multiplicity() {
        return Err(Error::Precondition(format!(
            "{} forms given, between 1 and {} allowed over the {field} field",
            forms.len(),
            field.multiplicity()
        )));
    }
    for f in forms {
        if f.n() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                found: f.n(),
            });
        }
    }
    let mut pieces = eigen_pieces(x, eps_rank)?;
    equalize(&mut pieces, forms[0], None)?;
    if forms.len() == 2 {
        equalize(&mut pieces, forms[1], Some(forms[0]))?;
    }
    let r = pieces.len() as f64;
    for f in forms {
        let total = dot(f, x);
        for p in &pieces {
            let err = (r * f.quad(p) - total).abs();
            if err > 1e-7 * total.abs().max(1.0) {
                return Err(Error::step(
                    "equalization",
                    format!("piece deviates from the mean share by {err:.3e}"),
                ));
            }
        }
    }
    Ok(RankOneDecomposition {
        field,
        vectors: pieces,
    })
}

/// `√λⱼ qⱼ` for eigenvalues above `eps_rank`.
fn eigen_pieces(x: &HermitianMatrix, eps_rank: f64) -> Result<Vec<CVector>> {
    let e = eig(x)?;
    let scale = x.fro_norm().max(1.0);
    if *e.eigenvalues.last().unwrap() < -1e-9 * scale {
        return Err(Error::Precondition(format!(
            "matrix is not PSD (eigenvalue {:.3e})",
            e.eigenvalues.last().unwrap()
        )));
    }
    let pieces: Vec<CVector> = e
        .eigenvalues
        .iter()
        .zip(&e.eigenvectors)
        .filter(|(l, _)| **l > eps_rank)
        .map(|(l, q)| q * C64::new(l.sqrt(), 0.0))
        .collect();
    if pieces.is_empty() {
        return Err(Error::ZeroMatrix);
    }
    Ok(pieces)
}

/// Smaller-magnitude root of `a t² + 2b t + c = 0`, assuming `a·c < 0`.
fn small_root(a: f64, b: f64, c: f64) -> f64 {
    let disc = (b * b - a * c).max(0.0).sqrt();
    let q = -(b + if b >= 0.0 { disc } else { -disc });
    if q == 0.0 {
        return 0.0;
    }
    let t1 = q / a;
    let t2 = c / q;
    if t1.abs() < t2.abs() {
        t1
    } else {
        t2
    }
}

/// Pairwise rotations that bring every piece's value of `form` to the mean. When `keep`
/// is given, its (already equal) values are preserved by a phase choice.
fn equalize(
    pieces: &mut [CVector],
    form: &HermitianMatrix,
    keep: Option<&HermitianMatrix>,
) -> Result<()> {
    let r = pieces.len();
    if r <= 1 {
        return Ok(());
    }
    let mut vals: Vec<f64> = pieces.iter().map(|p| form.quad(p)).collect();
    let tau = vals.iter().sum::<f64>() / r as f64;
    let mass: f64 = pieces.iter().map(|p| p.norm_squared()).sum();
    let tol = 1e-14 * (form.fro_norm() * mass + vals.iter().map(|v| v.abs()).sum::<f64>());
    let mut done = vec![false; r];
    for _ in 0..r * r {
        let above = (0..r).find(|&k| !done[k] && vals[k] - tau > tol);
        let below = (0..r).find(|&k| !done[k] && vals[k] - tau < -tol);
        let (Some(a), Some(b)) = (above, below) else {
            return Ok(());
        };
        let phase = match keep {
            Some(k) => {
                let wk = k.bilinear(&pieces[a], &pieces[b]);
                if wk.norm() > 0.0 {
                    C64::new(0.0, 1.0) * wk.conj() / wk.norm()
                } else {
                    C64::new(1.0, 0.0)
                }
            }
            None => C64::new(1.0, 0.0),
        };
        let w = form.bilinear(&pieces[a], &pieces[b]);
        let gamma = small_root(vals[b] - tau, (phase * w).re, vals[a] - tau);
        let beta = phase * gamma;
        let s = C64::new((1.0 + gamma * gamma).sqrt(), 0.0);
        let (pa, pb) = (pieces[a].clone(), pieces[b].clone());
        pieces[a] = (&pa + &pb * beta) / s;
        pieces[b] = (&pb - &pa * beta.conj()) / s;
        done[a] = true;
        vals[a] = form.quad(&pieces[a]);
        vals[b] = form.quad(&pieces[b]);
    }
    Err(Error::Convergence {
        what: "pairwise equalization",
        iterations: r * r,
    })
}

// ---------------------------------------------------------------------------
// Extraction.

/// Linearly independent subset of `forms` (by index), judged in the trace inner product.
fn independent_forms(forms: &[&HermitianMatrix]) -> Vec<usize> {
    let mut basis: Vec<HermitianMatrix> = Vec::new();
    let mut keep = Vec::new();
    for (i, f) in forms.iter().enumerate() {
        let nrm = f.fro_norm();
        if nrm == 0.0 {
            continue;
        }
        let mut g = (*f).clone();
        for b in &basis {
            let c = dot(&g, b);
            g = &g - &b.scale(c);
        }
        let gn = g.fro_norm();
        if gn > 1e-10 * nrm {
            basis.push(g.scale(1.0 / gn));
            keep.push(i);
        }
    }
    keep
}

fn check_extraction(
    forms: &[&HermitianMatrix],
    x: &HermitianMatrix,
    v: &CVector,
    step: &'static str,
) -> Result<()> {
    let target = FormValues::at_matrix(forms, x);
    let got = FormValues::at_vector(forms, v);
    let err = got.max_rel_diff(&target);
    if v.norm() == 0.0 || !(err <= EXTRACTION_TOL) {
        return Err(Error::step(step, format!("form residual {err:.3e}")));
    }
    Ok(())
}

/// Nonzero `x` with `Aᵢ • xxᴴ = Aᵢ • X` for three forms.
///
/// When the three values are not all zero, `x` lies in `Range(X)`. Otherwise a basis of a
/// subspace containing `Range(X)` with dimension at least 3 must be supplied. Over the
/// reals at most two of the forms may be linearly independent unless a positive definite
/// combination exists, in which case the four-form route is used.
pub fn extract_three_forms(
    x: &HermitianMatrix,
    forms: &[&HermitianMatrix],
    basis: Option<&[CVector]>,
) -> Result<CVector> {
    let field = x.field();
    if forms.len() != 3 {
        return Err(Error::Precondition(format!(
            "three forms expected, {} given",
            forms.len()
        )));
    }
    let e = eig(x)?;
    if e.eigenvalues[0] <= DEFAULT_RANK_TOL * x.fro_norm().max(1.0) {
        return Err(Error::ZeroMatrix);
    }
    let idx = independent_forms(forms);
    let ind: Vec<&HermitianMatrix> = idx.iter().map(|&i| forms[i]).collect();
    let delta: Vec<f64> = ind.iter().map(|f| dot(f, x)).collect();
    let scale = x.fro_norm();
    let nonzero = ind
        .iter()
        .zip(&delta)
        .any(|(f, d)| d.abs() > 1e-12 * f.fro_norm() * scale);

    let v = if ind.is_empty() {
        e.eigenvectors[0].clone() * C64::new(e.eigenvalues[0].sqrt(), 0.0)
    } else if ind.len() > field.multiplicity() + 1 {
        // Three independent real forms: only solvable through a definite combination.
        let owned;
        let basis = match basis {
            Some(b) => b,
            None => {
                owned = crate::linalg::range_basis(x, DEFAULT_RANK_TOL * scale.max(1.0))?;
                &owned[..]
            }
        };
        extract_four_forms(x, forms, basis)?
    } else if nonzero {
        extract_with_pivot(x, &ind, &delta)?
    } else {
        let basis = basis.ok_or(Error::SubspaceTooSmall {
            dim: e
                .eigenvalues
                .iter()
                .filter(|l| **l > DEFAULT_RANK_TOL * scale.max(1.0))
                .count(),
            required: 3,
        })?;
        if basis.len() < 3 {
            return Err(Error::SubspaceTooSmall {
                dim: basis.len(),
                required: 3,
            });
        }
        let mf = field.multiplicity();
        let (eq, target) = if ind.len() > mf {
            (&ind[..mf], Some(ind[mf]))
        } else {
            (&ind[..], None)
        };
        isotropic_in_subspace(field, x, eq, target, basis)?
    };
    check_extraction(forms, x, &v, "three-form extraction")?;
    Ok(v)
}

/// Values not all zero: equalize the forms relative to the largest-|δ| pivot, then rescale
/// a piece with positive pivot share.
fn extract_with_pivot(
    x: &HermitianMatrix,
    forms: &[&HermitianMatrix],
    delta: &[f64],
) -> Result<CVector> {
    let p = (0..delta.len())
        .max_by(|&i, &j| delta[i].abs().total_cmp(&delta[j].abs()))
        .unwrap();
    let relative: Vec<HermitianMatrix> = (0..forms.len())
        .filter(|&i| i != p)
        .map(|i| HermitianMatrix::lin_comb(&[(1.0, forms[i]), (-delta[i] / delta[p], forms[p])]))
        .collect();
    let pieces = if relative.is_empty() {
        eigen_pieces(x, DEFAULT_RANK_TOL * x.fro_norm().max(1.0))?
    } else {
        let refs: Vec<&HermitianMatrix> = relative.iter().collect();
        decompose_two_forms(x, &refs)?.vectors
    };
    let (t, v) = pieces
        .iter()
        .map(|v| (forms[p].quad(v) / delta[p], v))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    if !(t > 0.0) {
        return Err(Error::step(
            "pivot share",
            format!("largest share {t:.3e} is not positive"),
        ));
    }
    Ok(v / C64::new(t.sqrt(), 0.0))
}

/// Nonzero `x ∈ span(V)` matching all form values of `X`, for up to `m_F + 2` forms that
/// are jointly definite on `span(V)`.
pub fn extract_four_forms(
    x: &HermitianMatrix,
    forms: &[&HermitianMatrix],
    basis: &[CVector],
) -> Result<CVector> {
    let field = x.field();
    if basis.len() < 3 {
        return Err(Error::SubspaceTooSmall {
            dim: basis.len(),
            required: 3,
        });
    }
    if forms.is_empty() || forms.len() > 4 {
        return Err(Error::Precondition(format!(
            "1 to 4 forms expected, {} given",
            forms.len()
        )));
    }
    let idx = independent_forms(forms);
    if idx.len() > field.multiplicity() + 2 {
        return Err(Error::Precondition(format!(
            "{} independent forms exceed the {} supported over the {field} field",
            idx.len(),
            field.multiplicity() + 2
        )));
    }
    let ind: Vec<&HermitianMatrix> = idx.iter().map(|&i| forms[i]).collect();
    let xv = x.compress(basis);
    let compressed: Vec<HermitianMatrix> = ind.iter().map(|f| f.compress(basis)).collect();
    let crefs: Vec<&HermitianMatrix> = compressed.iter().collect();
    let weights = match joint_definiteness_compressed(&crefs, 0)? {
        JointDefiniteness::Certified { weights, .. } => weights,
        JointDefiniteness::Counterexample(y) => {
            return Err(Error::HypothesisViolated {
                witness: Box::new(y.lift(basis, field)),
            })
        }
    };
    let terms: Vec<(f64, &HermitianMatrix)> =
        weights.iter().copied().zip(crefs.iter().copied()).collect();
    let p = HermitianMatrix::lin_comb(&terms);
    let delta: Vec<f64> = compressed.iter().map(|b| dot(b, &xv)).collect();
    let tau = dot(&p, &xv);
    if !(tau > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let drop = (0..weights.len())
        .max_by(|&i, &j| weights[i].abs().total_cmp(&weights[j].abs()))
        .unwrap();
    let shifted: Vec<HermitianMatrix> = (0..compressed.len())
        .filter(|&i| i != drop)
        .map(|i| HermitianMatrix::lin_comb(&[(1.0, &compressed[i]), (-delta[i] / tau, &p)]))
        .collect();
    let mf = field.multiplicity();
    let eq: Vec<&HermitianMatrix> = shifted.iter().take(mf).collect();
    let target = shifted.get(mf);
    let d = xv.n();
    let eye: Vec<CVector> = (0..d).map(|k| unit(d, k)).collect();
    let y = isotropic_core(field, &xv, &eq, target, &eye)?;
    let py = p.quad(&y);
    if !(py > 0.0) {
        return Err(Error::step(
            "definite rescaling",
            format!("P(x) = {py:.3e}"),
        ));
    }
    let y = y * C64::new((tau / py).sqrt(), 0.0);
    let v = basis_matrix(x.n(), basis) * y;
    let v = crate::linalg::field_vector(field, &v);
    check_extraction(forms, x, &v, "four-form extraction")?;
    Ok(v)
}

fn unit(d: usize, k: usize) -> CVector {
    let mut e = CVector::zeros(d);
    e[k] = C64::new(1.0, 0.0);
    e
}

/// Compresses to `span(V)`, runs [`isotropic_core`] and lifts back.
fn isotropic_in_subspace(
    field: Field,
    x: &HermitianMatrix,
    eq: &[&HermitianMatrix],
    target: Option<&HermitianMatrix>,
    basis: &[CVector],
) -> Result<CVector> {
    let xv = x.compress(basis);
    let eqc: Vec<HermitianMatrix> = eq.iter().map(|f| f.compress(basis)).collect();
    let eqr: Vec<&HermitianMatrix> = eqc.iter().collect();
    let tc = target.map(|t| t.compress(basis));
    let d = basis.len();
    let eye: Vec<CVector> = (0..d).map(|k| unit(d, k)).collect();
    let y = isotropic_core(field, &xv, &eqr, tc.as_ref(), &eye)?;
    let v = basis_matrix(x.n(), basis) * y;
    Ok(crate::linalg::field_vector(field, &v))
}

/// Nonzero vector in `span(space)` annihilating up to `m_F` forms `eq` and an optional
/// `target`, given PSD `x` (supported in `span(space)`) on which all of them vanish.
fn isotropic_core(
    field: Field,
    x: &HermitianMatrix,
    eq: &[&HermitianMatrix],
    target: Option<&HermitianMatrix>,
    space: &[CVector],
) -> Result<CVector> {
    let eps = DEFAULT_RANK_TOL * x.fro_norm().max(1.0);
    let pieces = if eq.is_empty() {
        eigen_pieces(x, eps)?
    } else {
        decompose_two_forms_with_tol(x, eq, eps)?.vectors
    };
    let Some(target) = target else {
        return Ok(pieces
            .iter()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap()
            .clone());
    };
    let tn = target.fro_norm().max(f64::MIN_POSITIVE);
    let vals: Vec<f64> = pieces.iter().map(|p| target.quad(p)).collect();
    for (p, v) in pieces.iter().zip(&vals) {
        if v.abs() <= 1e-12 * tn * p.norm_squared() {
            return Ok(p.clone());
        }
    }
    let a = (0..vals.len())
        .max_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .unwrap();
    let b = (0..vals.len())
        .min_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .unwrap();
    if !(vals[a] > 0.0 && vals[b] < 0.0) {
        return Err(Error::step(
            "isotropic vector",
            "target form does not change sign over the pieces",
        ));
    }
    let (pa, pb) = (&pieces[a], &pieces[b]);
    if let Some(v) = plane_solution(field, eq, target, pa, pb) {
        return Ok(v);
    }
    if space.len() < 3 {
        return Err(Error::SubspaceTooSmall {
            dim: space.len(),
            required: 3,
        });
    }
    space_solution(field, eq, target, pa, pb, space)
}

/// Tries `x = p_a + β p_b` with a phase that keeps every `eq` form at zero.
fn plane_solution(
    field: Field,
    eq: &[&HermitianMatrix],
    target: &HermitianMatrix,
    pa: &CVector,
    pb: &CVector,
) -> Option<CVector> {
    let cs: Vec<C64> = eq.iter().map(|f| f.bilinear(pa, pb)).collect();
    let size = pa.norm() * pb.norm();
    let small = |c: C64, f: &HermitianMatrix| c.norm() <= 1e-12 * f.fro_norm() * size;
    let phase = match field {
        Field::Real => {
            if cs.iter().zip(eq).all(|(c, f)| small(*c, f)) {
                C64::new(1.0, 0.0)
            } else {
                return None;
            }
        }
        Field::Complex => {
            let lead = cs
                .iter()
                .copied()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap_or(C64::new(0.0, 0.0));
            if cs.len() == 2 {
                let cross = (cs[0].conj() * cs[1]).im;
                if cross.abs() > 1e-12 * eq[0].fro_norm() * eq[1].fro_norm() * size * size {
                    return None;
                }
            }
            if lead.norm() > 0.0 {
                C64::new(0.0, 1.0) * lead.conj() / lead.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        }
    };
    let w = (phase * target.bilinear(pa, pb)).re;
    let rho = small_root(target.quad(pb), w, target.quad(pa));
    Some(pa + pb * (phase * rho))
}

/// Search in a three-dimensional subspace through `p_a`, `p_b` and a third direction.
fn space_solution(
    field: Field,
    eq: &[&HermitianMatrix],
    target: &HermitianMatrix,
    pa: &CVector,
    pb: &CVector,
    space: &[CVector],
) -> Result<CVector> {
    let e1 = pa / C64::new(pa.norm(), 0.0);
    let r = pb - &e1 * e1.dotc(pb);
    let e2 = &r / C64::new(r.norm(), 0.0);
    // Candidate third directions, most orthogonal first.
    let mut thirds: Vec<CVector> = space
        .iter()
        .map(|s| {
            let mut u = s.clone();
            for _ in 0..2 {
                u -= &e1 * e1.dotc(&u);
                u -= &e2 * e2.dotc(&u);
            }
            u
        })
        .filter(|u| u.norm() > 1e-8)
        .collect();
    thirds.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let tn = target.fro_norm();
    for u in thirds {
        let e3 = &u / C64::new(u.norm(), 0.0);
        let solve = |q: &CVector| -> CVector { constrained_point(field, eq, pa, q) };
        let f = |q: &CVector| -> f64 {
            let x = solve(q);
            let nx = x.norm_squared();
            if nx == 0.0 {
                f64::NAN
            } else {
                target.quad(&x) / nx
            }
        };
        for q0 in singular_directions(field, eq, pa, &e2, &e3) {
            let mut q0 = q0;
            let ov = e2.dotc(&q0);
            if ov.norm() > 0.0 {
                q0 *= ov.conj() / ov.norm();
            }
            let path = |s: f64| -> CVector {
                let q = &e2 * C64::new(1.0 - s, 0.0) + &q0 * C64::new(s, 0.0);
                let nq = q.norm();
                q / C64::new(nq, 0.0)
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            let (flo, fhi) = (f(&path(lo)), f(&path(hi)));
            if !(flo < 0.0 && fhi > 0.0) {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(&path(mid));
                if fm.is_nan() {
                    break;
                }
                if fm < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let cand = [solve(&path(lo)), solve(&path(hi))];
            let best = cand.into_iter().filter(|x| x.norm() > 0.0).min_by(|a, b| {
                (target.quad(a) / a.norm_squared())
                    .abs()
                    .total_cmp(&(target.quad(b) / b.norm_squared()).abs())
            });
            if let Some(x) = best {
                let nx = x.norm_squared();
                let ok_t = (target.quad(&x) / nx).abs() <= 1e-10 * tn;
                let ok_eq = eq
                    .iter()
                    .all(|g| (g.quad(&x) / nx).abs() <= 1e-10 * g.fro_norm());
                if ok_t && ok_eq {
                    return Ok(x / C64::new(nx.sqrt(), 0.0));
                }
            }
        }
    }
    Err(Error::step(
        "isotropic vector",
        "no sign change found along the constrained family",
    ))
}

/// The nonzero point `p_a + t q` on which every `eq` form vanishes, scaled to stay finite.
fn constrained_point(field: Field, eq: &[&HermitianMatrix], pa: &CVector, q: &CVector) -> CVector {
    match (field, eq.len()) {
        (_, 0) => q.clone(),
        (Field::Real, _) | (Field::Complex, 1) => {
            // Complex with one form: restrict t to the real axis after a phase fix.
            let w = eq[0].bilinear(pa, q);
            let (q, w) = if field == Field::Complex && w.norm() > 0.0 {
                let ph = w.conj() / w.norm();
                (q * ph, w.norm())
            } else {
                (q.clone(), w.re)
            };
            let d = eq[0].quad(&q);
            pa * C64::new(d, 0.0) - q * C64::new(2.0 * w, 0.0)
        }
        (Field::Complex, _) => {
            let w1 = eq[0].bilinear(pa, q);
            let w2 = eq[1].bilinear(pa, q);
            let d = [eq[0].quad(q), eq[1].quad(q)];
            let g = [[w1.re, -w1.im], [w2.re, -w2.im]];
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            let v = [
                g[1][1] * d[0] - g[0][1] * d[1],
                -g[1][0] * d[0] + g[0][0] * d[1],
            ];
            let vn2 = v[0] * v[0] + v[1] * v[1];
            pa * C64::new(vn2, 0.0) - q * (C64::new(v[0], v[1]) * (2.0 * det))
        }
    }
}

/// Unit directions `q ⊥ p_a` in `span(e2, e3)` where the linear part of the `eq` forms
/// degenerates, so that the constrained point collapses onto `p_a`.
fn singular_directions(
    field: Field,
    eq: &[&HermitianMatrix],
    pa: &CVector,
    e2: &CVector,
    e3: &CVector,
) -> Vec<CVector> {
    let comb = |a: C64, b: C64| -> CVector { e2 * a + e3 * b };
    match (field, eq.len()) {
        (_, 0) => vec![e3.clone()],
        (Field::Real, _) => {
            let u = eq[0].apply(pa);
            let al = u.dotc(e2).re;
            let be = u.dotc(e3).re;
            let mut th = (-al).atan2(be);
            if th > PI / 2.0 {
                th -= PI;
            } else if th < -PI / 2.0 {
                th += PI;
            }
            vec![comb(C64::new(th.cos(), 0.0), C64::new(th.sin(), 0.0))]
        }
        (Field::Complex, 1) => {
            let u = eq[0].apply(pa);
            let (a, b) = (e2.dotc(&u), e3.dotc(&u));
            // q = conj(b)e2 − conj(a)e3 satisfies uᴴq = 0.
            let q = comb(b, -a);
            let n = q.norm();
            if n > 0.0 {
                vec![q / C64::new(n, 0.0)]
            } else {
                vec![e3.clone()]
            }
        }
        (Field::Complex, _) => {
            let u1 = eq[0].apply(pa);
            let u2 = eq[1].apply(pa);
            // K = (u1 u2ᴴ − u2 u1ᴴ)/(2i) restricted to span(e2, e3).
            let basis = [e2, e3];
            let mut k = [[C64::new(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let a = basis[i].dotc(&u1) * u2.dotc(basis[j]);
                    let b = basis[i].dotc(&u2) * u1.dotc(basis[j]);
                    k[i][j] = (a - b) / C64::new(0.0, 2.0);
                }
            }
            let km = HermitianMatrix::hermitian_part(
                Field::Complex,
                &nalgebra::DMatrix::from_fn(2, 2, |i, j| k[i][j]),
            );
            let Ok(e) = eig(&km) else { return vec![] };
            let (lp, lm) = (e.eigenvalues[0], e.eigenvalues[1]);
            let (kp, kn) = (&e.eigenvectors[0], &e.eigenvectors[1]);
            let scale = lp.abs().max(lm.abs()).max(f64::MIN_POSITIVE);
            let mut out = Vec::new();
            if lp > 1e-14 * scale && lm < -1e-14 * scale {
                let (a, b) = ((-lm).sqrt(), lp.sqrt());
                for chi in [0.0, 0.5 * PI, PI, 1.5 * PI] {
                    let ph = C64::from_polar(1.0, chi);
                    let c = kp * C64::new(a, 0.0) + kn * (ph * b);
                    let q = comb(c[0], c[1]);
                    let n = q.norm();
                    out.push(q / C64::new(n, 0.0));
                }
            } else {
                // Semidefinite: the eigenvector of the smaller |λ| is the only candidate.
                let (l, v) = if lp.abs() < lm.abs() {
                    (lp, kp)
                } else {
                    (lm, kn)
                };
                if l.abs() <= 1e-8 * scale {
                    out.push(comb(v[0], v[1]));
                }
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Joint definiteness.

/// Decides whether some combination of the forms is positive definite on `span(V)`.
///
/// Solves `min t  s.t.  Y ⪰ 0, tr Y = 1, |Bᵢ • Y| ≤ t` with `Bᵢ = VᴴAᵢV`. A positive
/// optimum certifies definiteness through the dual weights; otherwise the optimal `Y`,
/// lifted back, is returned. If the solver fails, `trials` random combinations are tried.
pub fn check_joint_definiteness(
    forms: &[&HermitianMatrix],
    basis: &[CVector],
    trials: usize,
) -> Result<JointDefiniteness> {
    if basis.is_empty() {
        return Err(Error::SubspaceTooSmall {
            dim: 0,
            required: 1,
        });
    }
    let field = forms.iter().fold(Field::Real, |f, a| f.join(a.field()));
    let compressed: Vec<HermitianMatrix> = forms.iter().map(|f| f.compress(basis)).collect();
    let refs: Vec<&HermitianMatrix> = compressed.iter().collect();
    Ok(match joint_definiteness_compressed(&refs, trials)? {
        JointDefiniteness::Counterexample(y) => {
            JointDefiniteness::Counterexample(y.lift(basis, field))
        }
        c => c,
    })
}

/// Margin below which the compressed forms are treated as not jointly definite.
pub const DEFINITENESS_TOL: f64 = 1e-8;

fn joint_definiteness_compressed(
    forms: &[&HermitianMatrix],
    trials: usize,
) -> Result<JointDefiniteness> {
    let d = forms.first().map(|f| f.n()).unwrap_or(0);
    let field = forms.iter().fold(Field::Real, |f, a| f.join(a.field()));
    let norms: Vec<f64> = forms.iter().map(|f| f.fro_norm()).collect();
    let active: Vec<usize> = (0..forms.len()).filter(|&i| norms[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(JointDefiniteness::Counterexample(
            HermitianMatrix::identity(field, d).scale(1.0 / d as f64),
        ));
    }
    let k = active.len();
    // LP columns: t, then (s⁺ᵢ, s⁻ᵢ) per form.
    let nl = 1 + 2 * k;
    let mut rows = Vec::new();
    for (j, &i) in active.iter().enumerate() {
        let b = forms[i].scale(1.0 / norms[i]);
        let mut up = vec![0.0; nl];
        up[0] = -1.0;
        up[1 + 2 * j] = 1.0;
        rows.push(Row {
            a: b.clone(),
            a_lp: up,
            b: 0.0,
        });
        let mut dn = vec![0.0; nl];
        dn[0] = 1.0;
        dn[2 + 2 * j] = -1.0;
        rows.push(Row {
            a: b,
            a_lp: dn,
            b: 0.0,
        });
    }
    rows.push(Row {
        a: HermitianMatrix::identity(field, d),
        a_lp: vec![0.0; nl],
        b: 1.0,
    });
    let mut c_lp = vec![0.0; nl];
    c_lp[0] = 1.0;
    let sdp = HermitianSdp {
        field,
        c: HermitianMatrix::zeros(field, d),
        c_lp,
        rows,
    };
    let verify = |w: &[f64]| -> Option<(Vec<f64>, f64)> {
        let terms: Vec<(f64, &HermitianMatrix)> =
            w.iter().copied().zip(forms.iter().copied()).collect();
        let p = HermitianMatrix::lin_comb(&terms);
        let scale: f64 = w.iter().zip(&norms).map(|(a, n)| a.abs() * n).sum();
        if scale == 0.0 {
            return None;
        }
        let margin = p.min_eigenvalue() / scale;
        (margin > DEFINITENESS_TOL).then(|| {
            let w: Vec<f64> = w.iter().map(|v| v / scale).collect();
            (w, margin)
        })
    };
    if let Ok(sol) = sdp.solve(1e-11) {
        let t = sol.x_lp[0];
        let mut w = vec![0.0; forms.len()];
        for (j, &i) in active.iter().enumerate() {
            w[i] = -(sol.y[2 * j] + sol.y[2 * j + 1]) / norms[i];
        }
        if let Some((weights, margin)) = verify(&w) {
            return Ok(JointDefiniteness::Certified { weights, margin });
        }
        let y = sol.x.scale(1.0 / sol.x.trace());
        let worst = active
            .iter()
            .map(|&i| (dot(forms[i], &y) / norms[i]).abs())
            .fold(0.0, f64::max);
        if t <= DEFINITENESS_TOL && worst <= DEFINITENESS_TOL {
            return Ok(JointDefiniteness::Counterexample(y));
        }
    }
    let mut rng_state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = || {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..trials {
        let w: Vec<f64> = (0..forms.len()).map(|_| next()).collect();
        if let Some((weights, margin)) = verify(&w) {
            return Ok(JointDefiniteness::Certified { weights, margin });
        }
    }
    Err(Error::Convergence {
        what: "joint definiteness test",
        iterations: trials,
    })
}
