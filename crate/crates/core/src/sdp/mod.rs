//! The lifted relaxation of a homogeneous QCQP, its dual, Slater checks and purification.

mod ipm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, eig, field_vector, CVector, Field, HermitianMatrix, C64};

/// Default primal-dual accuracy.
pub const DEFAULT_EPS1: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub a: HermitianMatrix,
    pub c: f64,
    pub sense: Sense,
}

impl Constraint {
    pub fn new(a: HermitianMatrix, c: f64, sense: Sense) -> Self {
        Self { a, c, sense }
    }
}

/// `min xᴴA₀x  s.t.  xᴴAᵢx ⊴ᵢ cᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct QcqpInstance {
    pub field: Field,
    pub n: usize,
    pub objective: HermitianMatrix,
    pub constraints: Vec<Constraint>,
}

impl QcqpInstance {
    pub fn new(objective: HermitianMatrix, constraints: Vec<Constraint>) -> Result<Self> {
        let inst = Self {
            field: objective.field(),
            n: objective.n(),
            objective,
            constraints,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    /// Dimensions, fields and finiteness of all data.
    pub fn validate(&self) -> Result<()> {
        let check = |a: &HermitianMatrix| -> Result<()> {
            if a.n() != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    found: a.n(),
                });
            }
            if a.field() != self.field {
                return Err(Error::FieldMismatch);
            }
            Ok(())
        };
        check(&self.objective)?;
        if self.constraints.is_empty() {
            return Err(Error::InvalidInstance("no constraints".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            check(&c.a)?;
            if !c.c.is_finite() {
                return Err(Error::InvalidInstance(format!("bound {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Additionally requires `m = m_F + 2` and a nonzero last bound.
    pub fn validate_for_tightness(&self) -> Result<()> {
        self.validate()?;
        let want = self.field.multiplicity() + 2;
        if self.m() != want {
            return Err(Error::InvalidInstance(format!(
                "{} constraints given, the tightness test needs {want} for the {} field",
                self.m(),
                self.field
            )));
        }
        if self.constraints[self.m() - 1].c == 0.0 {
            return Err(Error::InvalidInstance("last bound must be nonzero".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &CVector) -> f64 {
        self.objective.quad(&field_vector(self.field, x))
    }

    /// Largest violation `max(0, xᴴAᵢx − cᵢ)` (LE) or `|xᴴAᵢx − cᵢ|` (EQ), each divided by `max(1, |cᵢ|)`.
    pub fn max_violation(&self, x: &CVector) -> f64 {
        let x = field_vector(self.field, x);
        self.constraints
            .iter()
            .map(|c| {
                let r = c.a.quad(&x) - c.c;
                let v = match c.sense {
                    Sense::Le => r.max(0.0),
                    Sense::Eq => r.abs(),
                };
                v / c.c.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// A primal-dual pair of the relaxation.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpPair {
    pub x: HermitianMatrix,
    pub z: HermitianMatrix,
    pub mu: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimalSlaterPoint {
    pub x: HermitianMatrix,
    /// `min(λ_min(X̃), min over LE of cᵢ − Aᵢ•X̃)`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSlaterPoint {
    pub mu: Vec<f64>,
    pub z: HermitianMatrix,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlaterReport {
    pub primal_point: Option<PrimalSlaterPoint>,
    pub dual_point: Option<DualSlaterPoint>,
}

impl SlaterReport {
    pub fn holds(&self) -> bool {
        self.primal_point.is_some() && self.dual_point.is_some()
    }
}

/// Strict-interior threshold used by [`check_slater`].
pub const SLATER_MARGIN: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Hermitian front end over the real solver.

/// `min C•X + cₗ·x  s.t.  Aᵢ•X + aᵢ·x = bᵢ` with `X` Hermitian PSD over `field`.
#[derive(Clone, Debug)]
pub(crate) struct HermitianSdp {
    pub field: Field,
    pub c: HermitianMatrix,
    pub c_lp: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub a: HermitianMatrix,
    pub a_lp: Vec<f64>,
    pub b: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct HermitianSolution {
    pub x: HermitianMatrix,
    pub x_lp: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
}

impl HermitianSdp {
    pub fn solve(&self, tol: f64) -> Result<HermitianSolution> {
        let nl = self.c_lp.len();
        let mut keep = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            if r.a.is_zero() && r.a_lp.iter().all(|v| *v == 0.0) {
                if r.b != 0.0 {
                    return Err(Error::Infeasible(format!("row {i} reads 0 = {}", r.b)));
                }
            } else {
                keep.push(i);
            }
        }
        let embed = |a: &HermitianMatrix| embed(self.field, a);
        let mut a_lp = DMatrix::<f64>::zeros(keep.len(), nl);
        for (k, &i) in keep.iter().enumerate() {
            for j in 0..nl {
                a_lp[(k, j)] = self.rows[i].a_lp[j];
            }
        }
        let problem = ipm::ConeProblem {
            c: embed(&self.c),
            c_lp: DVector::from_column_slice(&self.c_lp),
            a: keep.iter().map(|&i| embed(&self.rows[i].a)).collect(),
            a_lp,
            b: DVector::from_iterator(keep.len(), keep.iter().map(|&i| self.rows[i].b)),
        };
        // A stalled iterate is still returned; callers verify what they use.
        let sol = match ipm::solve(&problem, tol, ipm::MAX_ITER) {
            Ok(s) => s,
            Err(ipm::IpmFailure::Stalled(s)) => *s,
            Err(ipm::IpmFailure::Infeasible(which)) => {
                return Err(Error::Infeasible(format!("{which} problem diverged")))
            }
        };
        let mut y = vec![0.0; self.rows.len()];
        for (k, &i) in keep.iter().enumerate() {
            y[i] = sol.y[k];
        }
        Ok(HermitianSolution {
            x: unembed(self.field, &sol.x),
            x_lp: sol.x_lp.iter().copied().collect(),
            y,
            iterations: sol.iterations,
        })
    }
}

/// Real data of a Hermitian matrix. Complex matrices use `½[[Re, −Im], [Im, Re]]`,
/// so that `embed(A)•embed₁(X) = A•X` where `embed₁` omits the ½.
fn embed(field: Field, a: &HermitianMatrix) -> DMatrix<f64> {
    match field {
        Field::Real => a.real_part(),
        Field::Complex => {
            let n = a.n();
            let re = a.real_part();
            let im = a.imag_part();
            let mut out = DMatrix::<f64>::zeros(2 * n, 2 * n);
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] = 0.5 * re[(i, j)];
                    out[(i + n, j + n)] = 0.5 * re[(i, j)];
                    out[(i, j + n)] = -0.5 * im[(i, j)];
                    out[(i + n, j)] = 0.5 * im[(i, j)];
                }
            }
            out
        }
    }
}

fn unembed(field: Field, x: &DMatrix<f64>) -> HermitianMatrix {
    match field {
        Field::Real => HermitianMatrix::hermitian_part(Field::Real, &x.map(|v| C64::new(v, 0.0))),
        Field::Complex => {
            let n = x.nrows() / 2;
            let m = DMatrix::from_fn(n, n, |i, j| {
                C64::new(
                    0.5 * (x[(i, j)] + x[(i + n, j + n)]),
                    0.5 * (x[(i + n, j)] - x[(i, j + n)]),
                )
            });
            HermitianMatrix::hermitian_part(Field::Complex, &m)
        }
    }
}

// ---------------------------------------------------------------------------

fn internal_tol(eps1: f64) -> f64 {
    (eps1 * 1e-2).max(1e-13)
}

/// Solves the relaxation `min A₀•X s.t. Aᵢ•X ⊴ᵢ cᵢ, X ⪰ 0` and its dual.
pub fn solve_sdp(inst: &QcqpInstance, eps1: f64) -> Result<SdpPair> {
    inst.validate()?;
    if !(eps1 > 0.0) {
        return Err(Error::Precondition("eps1 must be positive".into()));
    }
    let le: Vec<usize> = (0..inst.m())
        .filter(|&i| inst.constraints[i].sense == Sense::Le)
        .collect();
    let nl = le.len();
    let rows = inst
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut a_lp = vec![0.0; nl];
            if let Some(k) = le.iter().position(|&j| j == i) {
                a_lp[k] = 1.0;
            }
            Row {
                a: c.a.clone(),
                a_lp,
                b: c.c,
            }
        })
        .collect();
    let sdp = HermitianSdp {
        field: inst.field,
        c: inst.objective.clone(),
        c_lp: vec![0.0; nl],
        rows,
    };
    let sol = sdp.solve(internal_tol(eps1))?;
    let mu: Vec<f64> = sol.y.iter().map(|v| -v).collect();
    let pair = assemble_pair(inst, sol.x, mu, sol.iterations);
    // Residuals grow with the data and the optimal value, so acceptance is relative to both.
    let scale = inst
        .constraints
        .iter()
        .map(|c| c.c.abs())
        .fold(inst.objective.fro_norm().max(1.0), f64::max)
        .max(pair.primal_value.abs());
    let ok = pair.kkt_residual <= eps1 * scale
        && (pair.primal_value - pair.dual_value).abs() <= eps1 * scale;
    if ok {
        Ok(pair)
    } else {
        Err(Error::SolverStalled {
            iterations: pair.iterations,
            residual: pair.kkt_residual,
            best: Box::new(pair),
        })
    }
}

/// Builds `Z = A₀ + Σ μᵢAᵢ`, both objective values and the KKT residual for a candidate pair.
pub fn assemble_pair(
    inst: &QcqpInstance,
    x: HermitianMatrix,
    mu: Vec<f64>,
    iterations: usize,
) -> SdpPair {
    let mut terms = vec![(1.0, &inst.objective)];
    for (c, m) in inst.constraints.iter().zip(&mu) {
        terms.push((*m, &c.a));
    }
    let z = HermitianMatrix::lin_comb(&terms);
    let primal_value = dot(&inst.objective, &x);
    let dual_value = -inst
        .constraints
        .iter()
        .zip(&mu)
        .map(|(c, m)| c.c * m)
        .sum::<f64>();
    let kkt_residual = kkt_residual(inst, &x, &z, &mu);
    SdpPair {
        x,
        z,
        mu,
        primal_value,
        dual_value,
        kkt_residual,
        iterations,
    }
}

/// Largest of: primal infeasibility, PSD violations of `X` and `Z`, sign violations of LE
/// multipliers, `|Z•X|` and `|μᵢ(Aᵢ•X − cᵢ)|`.
pub fn kkt_residual(
    inst: &QcqpInstance,
    x: &HermitianMatrix,
    z: &HermitianMatrix,
    mu: &[f64],
) -> f64 {
    let mut r: f64 = 0.0;
    for (c, m) in inst.constraints.iter().zip(mu) {
        let slack = dot(&c.a, x) - c.c;
        r = r.max(match c.sense {
            Sense::Le => slack.max(0.0).max(-m),
            Sense::Eq => slack.abs(),
        });
        r = r.max((m * slack).abs());
    }
    r = r.max(-x.min_eigenvalue()).max(-z.min_eigenvalue());
    r.max(dot(z, x).abs())
}

/// Tries to find strictly feasible points for the relaxation and its dual by maximizing a margin.
pub fn check_slater(inst: &QcqpInstance) -> Result<SlaterReport> {
    inst.validate()?;
    Ok(SlaterReport {
        primal_point: primal_slater(inst),
        dual_point: dual_slater(inst),
    })
}

fn primal_slater(inst: &QcqpInstance) -> Option<PrimalSlaterPoint> {
    // X = X' + (1 − t)I with X' ⪰ 0, t ≥ 0; minimize t. LP columns: t, one slack per LE row, trace slack.
    let n = inst.n;
    let le: Vec<usize> = (0..inst.m())
        .filter(|&i| inst.constraints[i].sense == Sense::Le)
        .collect();
    let nl = 2 + le.len();
    let cmax = inst
        .constraints
        .iter()
        .map(|c| c.c.abs())
        .fold(1.0, f64::max);
    let trace_bound = 100.0 * n as f64 * cmax;
    let mut rows = Vec::new();
    for (i, c) in inst.constraints.iter().enumerate() {
        let tr = c.a.trace();
        let mut a_lp = vec![0.0; nl];
        let b = match c.sense {
            Sense::Le => {
                a_lp[0] = -(tr + 1.0);
                a_lp[1 + le.iter().position(|&j| j == i).unwrap()] = 1.0;
                c.c - tr - 1.0
            }
            Sense::Eq => {
                a_lp[0] = -tr;
                c.c - tr
            }
        };
        rows.push(Row {
            a: c.a.clone(),
            a_lp,
            b,
        });
    }
    let mut a_lp = vec![0.0; nl];
    a_lp[nl - 1] = 1.0;
    rows.push(Row {
        a: HermitianMatrix::identity(inst.field, n),
        a_lp,
        b: trace_bound,
    });
    let mut c_lp = vec![0.0; nl];
    c_lp[0] = 1.0;
    let sdp = HermitianSdp {
        field: inst.field,
        c: HermitianMatrix::zeros(inst.field, n),
        c_lp,
        rows,
    };
    let sol = sdp.solve(1e-10).ok()?;
    let tau = 1.0 - sol.x_lp[0];
    if tau <= SLATER_MARGIN {
        return None;
    }
    // Back off slightly so that solver inaccuracy cannot eat the margin.
    let x = &sol.x + &HermitianMatrix::identity(inst.field, n).scale(0.999 * tau);
    let mut margin = x.min_eigenvalue();
    for c in &inst.constraints {
        let v = dot(&c.a, &x);
        match c.sense {
            Sense::Le => margin = margin.min(c.c - v),
            Sense::Eq => {
                if (v - c.c).abs() > 1e-8 * c.c.abs().max(1.0) {
                    return None;
                }
            }
        }
    }
    (margin >= SLATER_MARGIN).then_some(PrimalSlaterPoint { x, margin })
}

fn dual_slater(inst: &QcqpInstance) -> Option<DualSlaterPoint> {
    // Maximize ρ over (μ, ρ) with A₀ + Σ μᵢAᵢ ⪰ ρI, μᵢ ≥ ρ on LE rows, ρ ≤ 1 and box bounds.
    const BOX: f64 = 1e4;
    let n = inst.n;
    let m = inst.m();
    // LP columns as (cost, coefficient on μ_0..μ_{m-1}, coefficient on ρ).
    let mut cols: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    for (i, c) in inst.constraints.iter().enumerate() {
        if c.sense == Sense::Le {
            let mut a = vec![0.0; m];
            a[i] = -1.0;
            cols.push((0.0, a, 1.0));
        }
    }
    cols.push((1.0, vec![0.0; m], 1.0));
    cols.push((BOX, vec![0.0; m], -1.0));
    for i in 0..m {
        let mut a = vec![0.0; m];
        a[i] = 1.0;
        cols.push((BOX, a.clone(), 0.0));
        a[i] = -1.0;
        cols.push((BOX, a, 0.0));
    }
    let mut rows = Vec::new();
    for (i, c) in inst.constraints.iter().enumerate() {
        rows.push(Row {
            a: c.a.scale(-1.0),
            a_lp: cols.iter().map(|col| col.1[i]).collect(),
            b: 0.0,
        });
    }
    rows.push(Row {
        a: HermitianMatrix::identity(inst.field, n),
        a_lp: cols.iter().map(|col| col.2).collect(),
        b: 1.0,
    });
    let sdp = HermitianSdp {
        field: inst.field,
        c: inst.objective.clone(),
        c_lp: cols.iter().map(|col| col.0).collect(),
        rows,
    };
    let sol = sdp.solve(1e-10).ok()?;
    let mu: Vec<f64> = sol.y[..m].to_vec();
    let mut terms = vec![(1.0, &inst.objective)];
    for (c, v) in inst.constraints.iter().zip(&mu) {
        terms.push((*v, &c.a));
    }
    let z = HermitianMatrix::lin_comb(&terms);
    let min_eigenvalue = z.min_eigenvalue();
    let le_ok = inst
        .constraints
        .iter()
        .zip(&mu)
        .all(|(c, v)| c.sense == Sense::Eq || *v >= SLATER_MARGIN);
    (le_ok && min_eigenvalue >= SLATER_MARGIN).then_some(DualSlaterPoint {
        mu,
        z,
        min_eigenvalue,
    })
}

/// Eigenvalues `<= eps2` are set to zero. Matrices with nothing to zero beyond roundoff are
/// returned untouched, which makes the operation idempotent.
pub fn purify_matrix(a: &HermitianMatrix, eps2: f64) -> Result<HermitianMatrix> {
    let e = eig(a)?;
    let roundoff = 64.0 * f64::EPSILON * a.fro_norm().max(1.0);
    let dirty = e
        .eigenvalues
        .iter()
        .any(|l| *l <= eps2 && l.abs() > roundoff);
    if !dirty {
        return Ok(a.clone());
    }
    Ok(e.rebuild(a.field(), |l| if l > eps2 { l } else { 0.0 }))
}

/// Eigenvalue thresholding of `X` and `Z`; multipliers and objective values are kept.
pub fn purify(pair: &SdpPair, eps2: f64) -> Result<SdpPair> {
    if !(eps2 > 0.0) {
        return Err(Error::Precondition("eps2 must be positive".into()));
    }
    Ok(SdpPair {
        x: purify_matrix(&pair.x, eps2)?,
        z: purify_matrix(&pair.z, eps2)?,
        ..pair.clone()
    })
}
