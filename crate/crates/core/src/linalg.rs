//! Dense Hermitian matrices over a real or complex field tag.
//!
//! Every matrix is stored in full but built by mirroring its lower triangle, so
//! `a[i][j] == conj(a[j][i])` holds bit for bit.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVector = DVector<C64>;

/// Reconstruction tolerance of [`eig`], relative to `max(1, ‖A‖_F)`.
pub const TOL_EIG: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    /// Number of forms a rank-one decomposition can equalize: 1 over the reals, 2 over the complexes.
    pub fn multiplicity(self) -> usize {
        match self {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }

    pub fn join(self, other: Field) -> Field {
        if self == Field::Complex || other == Field::Complex {
            Field::Complex
        } else {
            Field::Real
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Real => "real",
            Field::Complex => "complex",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    field: Field,
    data: DMatrix<C64>,
}

impl HermitianMatrix {
    /// Builds from a lower-triangle generator `f(i, j)` with `i >= j`.
    pub fn from_lower<F>(field: Field, n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> C64,
    {
        if n == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut data = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::NonFinite(i, j));
                }
                if i == j && v.im != 0.0 {
                    return Err(Error::NotHermitian(format!(
                        "diagonal entry {i} has imaginary part {}",
                        v.im
                    )));
                }
                if field == Field::Real && v.im != 0.0 {
                    return Err(Error::NotHermitian(format!(
                        "real-field entry ({i}, {j}) has imaginary part {}",
                        v.im
                    )));
                }
                data[(i, j)] = v;
                data[(j, i)] = v.conj();
            }
        }
        Ok(Self { field, data })
    }

    /// Validates that `m` is Hermitian within `tol * max(1, ‖m‖_F)` and mirrors its lower triangle.
    pub fn from_full(field: Field, m: &DMatrix<C64>, tol: f64) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.ncols(),
            });
        }
        let scale = m.norm().max(1.0);
        for i in 0..n {
            for j in 0..=i {
                let d = (m[(i, j)] - m[(j, i)].conj()).norm();
                if !(d <= tol * scale) {
                    return Err(Error::NotHermitian(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ by {d:.3e}"
                    )));
                }
            }
        }
        Self::from_lower(field, n, |i, j| {
            let v = m[(i, j)];
            if i == j {
                C64::new(v.re, 0.0)
            } else if field == Field::Real {
                if v.im.abs() <= tol * scale {
                    C64::new(v.re, 0.0)
                } else {
                    C64::new(v.re, v.im)
                }
            } else {
                v
            }
        })
    }

    /// `(M + Mᴴ)/2`, dropping imaginary parts when `field` is real.
    pub fn hermitian_part(field: Field, m: &DMatrix<C64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "hermitian_part needs a square matrix");
        let mut data = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let mut v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                if i == j || field == Field::Real {
                    v.im = 0.0;
                }
                data[(i, j)] = v;
                data[(j, i)] = v.conj();
            }
        }
        Self { field, data }
    }

    pub fn real_from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = DMatrix::from_fn(n, n, |i, j| {
            C64::new(rows[i].get(j).copied().unwrap_or(f64::NAN), 0.0)
        });
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            for (j, v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(i, j));
                }
            }
        }
        Self::from_full(Field::Real, &m, 1e-12)
    }

    pub fn complex_from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_full(Field::Complex, &m, 1e-12)
    }

    pub fn zeros(field: Field, n: usize) -> Self {
        Self {
            field,
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(field: Field, n: usize) -> Self {
        Self {
            field,
            data: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(field: Field, d: &[f64]) -> Self {
        let n = d.len();
        let mut data = DMatrix::zeros(n, n);
        for (i, v) in d.iter().enumerate() {
            data[(i, i)] = C64::new(*v, 0.0);
        }
        Self { field, data }
    }

    /// `x xᴴ`. Over the reals only the real part of `x` is used.
    pub fn outer(field: Field, x: &CVector) -> Self {
        let x = field_vector(field, x);
        Self::hermitian_part(field, &(&x * x.adjoint()))
    }

    /// `Σ wᵢ Aᵢ` over a non-empty list of same-size matrices.
    pub fn lin_comb(terms: &[(f64, &HermitianMatrix)]) -> Self {
        let first = terms.first().expect("lin_comb needs at least one term").1;
        let mut field = first.field;
        let mut data = DMatrix::<C64>::zeros(first.n(), first.n());
        for (w, a) in terms {
            assert_eq!(a.n(), first.n(), "lin_comb dimension mismatch");
            field = field.join(a.field);
            data += &a.data * C64::new(*w, 0.0);
        }
        Self::hermitian_part(field, &data)
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    /// Same entries tagged as complex.
    pub fn to_complex(&self) -> Self {
        Self {
            field: Field::Complex,
            data: self.data.clone(),
        }
    }

    /// Real part as an `f64` matrix (exact for real-field matrices).
    pub fn real_part(&self) -> DMatrix<f64> {
        self.data.map(|z| z.re)
    }

    pub fn imag_part(&self) -> DMatrix<f64> {
        self.data.map(|z| z.im)
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.data[(i, i)].re).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    /// `xᴴ A x`, real by Hermitian symmetry.
    pub fn quad(&self, x: &CVector) -> f64 {
        x.dotc(&(&self.data * x)).re
    }

    /// `xᴴ A y`.
    pub fn bilinear(&self, x: &CVector, y: &CVector) -> C64 {
        x.dotc(&(&self.data * y))
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        &self.data * x
    }

    /// `Vᴴ A V` for a list of basis vectors.
    pub fn compress(&self, basis: &[CVector]) -> Self {
        let v = basis_matrix(self.n(), basis);
        Self::hermitian_part(self.field, &(v.adjoint() * &self.data * v))
    }

    /// `V B Vᴴ` for a matrix given in basis coordinates.
    pub fn lift(&self, basis: &[CVector], field: Field) -> Self {
        let n = basis.first().map(|b| b.len()).unwrap_or(0);
        let v = basis_matrix(n, basis);
        Self::hermitian_part(field, &(&v * &self.data * v.adjoint()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            field: self.field,
            data: &self.data * C64::new(s, 0.0),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eig(self)
            .map(|e| *e.eigenvalues.last().unwrap())
            .unwrap_or(f64::NAN)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        eig(self).map(|e| e.eigenvalues[0]).unwrap_or(f64::NAN)
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.n(), rhs.n(), "dimension mismatch in add");
        HermitianMatrix {
            field: self.field.join(rhs.field),
            data: &self.data + &rhs.data,
        }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.n(), rhs.n(), "dimension mismatch in sub");
        HermitianMatrix {
            field: self.field.join(rhs.field),
            data: &self.data - &rhs.data,
        }
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, s: f64) -> HermitianMatrix {
        self.scale(s)
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        self.scale(-1.0)
    }
}

/// Columns of `basis` stacked into an `n × k` matrix.
pub fn basis_matrix(n: usize, basis: &[CVector]) -> DMatrix<C64> {
    let mut v = DMatrix::<C64>::zeros(n, basis.len());
    for (k, b) in basis.iter().enumerate() {
        v.set_column(k, b);
    }
    v
}

/// Drops imaginary parts when `field` is real.
pub fn field_vector(field: Field, x: &CVector) -> CVector {
    match field {
        Field::Real => x.map(|z| C64::new(z.re, 0.0)),
        Field::Complex => x.clone(),
    }
}

pub fn real_vector(v: &[f64]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|x| C64::new(*x, 0.0)))
}

/// `A • B = Re tr(Bᴴ A)`.
pub fn inner_product(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    if a.field != b.field {
        return Err(Error::FieldMismatch);
    }
    Ok(dot(a, b))
}

/// [`inner_product`] without the field check; dimensions must agree.
pub fn dot(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    // Re Σ conj(b_ij) a_ij; the pairwise order keeps the result symmetric in (a, b).
    a.data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal, `eigenvectors[k]` pairs with `eigenvalues[k]`.
    pub eigenvectors: Vec<CVector>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self, field: Field) -> HermitianMatrix {
        self.rebuild(field, |l| l)
    }

    /// `Σ f(λₖ) qₖ qₖᴴ`.
    pub fn rebuild<F: Fn(f64) -> f64>(&self, field: Field, f: F) -> HermitianMatrix {
        let n = self.eigenvalues.len();
        let mut data = DMatrix::<C64>::zeros(n, n);
        for (l, q) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let w = f(*l);
            if w != 0.0 {
                data += (q * q.adjoint()) * C64::new(w, 0.0);
            }
        }
        HermitianMatrix::hermitian_part(field, &data)
    }
}

/// Cyclic Jacobi eigensolver with complex unitary rotations and a fixed sweep order.
pub fn eig(a: &HermitianMatrix) -> Result<EigenDecomposition> {
    let n = a.n();
    let real = a.field == Field::Real;
    let mut m = a.data.clone();
    let mut v = DMatrix::<C64>::identity(n, n);
    let scale = a.fro_norm();
    let max_sweeps = 100 * n * n;
    let mut sweep = 0;
    loop {
        if n <= 1 || scale == 0.0 {
            break;
        }
        if sweep >= max_sweeps {
            return Err(Error::Convergence {
                what: "Jacobi eigensolver",
                iterations: sweep,
            });
        }
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        sweep += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let g = apq.norm();
                if g == 0.0 {
                    continue;
                }
                let e = if real {
                    C64::new(apq.re.signum(), 0.0)
                } else {
                    apq / g
                };
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let theta = (aqq - app) / (2.0 * g);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    let s = if theta >= 0.0 { 1.0 } else { -1.0 };
                    s / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let eb = e.conj();
                let upp = C64::new(c, 0.0);
                let upq = C64::new(s, 0.0);
                let uqp = eb * (-s);
                let uqq = eb * c;
                // m <- m U
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * upp + mkq * uqp;
                    m[(k, q)] = mkp * upq + mkq * uqq;
                }
                // m <- Uᴴ m
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = upp.conj() * mpk + uqp.conj() * mqk;
                    m[(q, k)] = upq.conj() * mpk + uqq.conj() * mqk;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)].im = 0.0;
                m[(q, q)].im = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * upp + vkq * uqp;
                    v[(k, q)] = vkp * upq + vkq * uqq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| m[(i, i)].re).collect();
    let eigenvectors = order
        .iter()
        .map(|&i| {
            let mut q: CVector = v.column(i).into_owned();
            if real {
                q.iter_mut().for_each(|z| z.im = 0.0);
            }
            q
        })
        .collect();
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Number of eigenvalues strictly greater than `eps`.
pub fn psd_rank(a: &HermitianMatrix, eps: f64) -> Result<usize> {
    Ok(eig(a)?.eigenvalues.iter().filter(|l| **l > eps).count())
}

/// Eigenvectors whose eigenvalues satisfy `|λ| <= eps`, in descending eigenvalue order.
pub fn null_basis(a: &HermitianMatrix, eps: f64) -> Result<Vec<CVector>> {
    let e = eig(a)?;
    Ok(e.eigenvalues
        .iter()
        .zip(e.eigenvectors)
        .filter(|(l, _)| l.abs() <= eps)
        .map(|(_, q)| q)
        .collect())
}

/// Eigenvectors whose eigenvalues exceed `eps`.
pub fn range_basis(a: &HermitianMatrix, eps: f64) -> Result<Vec<CVector>> {
    let e = eig(a)?;
    Ok(e.eigenvalues
        .iter()
        .zip(e.eigenvectors)
        .filter(|(l, _)| **l > eps)
        .map(|(_, q)| q)
        .collect())
}

/// Orthonormalizes `vs` by modified Gram-Schmidt, dropping vectors whose residual norm is below `tol`.
pub fn orthonormalize(vs: &[CVector], tol: f64) -> Vec<CVector> {
    let mut out: Vec<CVector> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = q.dotc(&w);
                w -= q * c;
            }
        }
        let nrm = w.norm();
        if nrm > tol {
            out.push(w / C64::new(nrm, 0.0));
        }
    }
    out
}
