//! Infeasible-start primal-dual path-following method for
//!
//! ```text
//! min  C•X + cₗ·x   s.t.  Aᵢ•X + aᵢ·x = bᵢ,  X ⪰ 0,  x ≥ 0
//! max  b·y          s.t.  S = C − Σ yᵢAᵢ ⪰ 0,  s = cₗ − Σ yᵢaᵢ ≥ 0
//! ```
//!
//! with one dense symmetric block and a nonnegative orthant. Directions use the
//! Nesterov-Todd scaling and a Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, LU};

#[derive(Clone, Debug)]
pub(crate) struct ConeProblem {
    pub c: DMatrix<f64>,
    pub c_lp: DVector<f64>,
    pub a: Vec<DMatrix<f64>>,
    /// `m × nₗ`, row `i` holds `aᵢ`.
    pub a_lp: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct ConeSolution {
    pub x: DMatrix<f64>,
    pub x_lp: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DMatrix<f64>,
    pub s_lp: DVector<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub(crate) enum IpmFailure {
    Infeasible(&'static str),
    Stalled(Box<ConeSolution>),
}

pub(crate) const MAX_ITER: usize = 200;

struct Scaled {
    c: DMatrix<f64>,
    c_lp: DVector<f64>,
    a: Vec<DMatrix<f64>>,
    a_lp: DMatrix<f64>,
    b: DVector<f64>,
    row_scale: Vec<f64>,
    b_scale: f64,
    c_scale: f64,
}

fn scale_problem(p: &ConeProblem) -> Scaled {
    let m = p.a.len();
    let mut a = p.a.clone();
    let mut a_lp = p.a_lp.clone();
    let mut b = p.b.clone();
    let mut row_scale = vec![1.0; m];
    for i in 0..m {
        let r = (a[i].norm_squared() + a_lp.row(i).norm_squared()).sqrt();
        if r > 0.0 {
            row_scale[i] = r;
            a[i] /= r;
            for v in a_lp.row_mut(i).iter_mut() {
                *v /= r;
            }
            b[i] /= r;
        }
    }
    let b_scale = amax(&b).max(1.0);
    b /= b_scale;
    let c_scale = (p.c.norm() + amax(&p.c_lp)).max(1.0);
    Scaled {
        c: &p.c / c_scale,
        c_lp: &p.c_lp / c_scale,
        a,
        a_lp,
        b,
        row_scale,
        b_scale,
        c_scale,
    }
}

fn amax(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest `α ∈ (0, ∞]` with `X + αΔX ⪰ 0`, given the Cholesky factor of `X`.
fn max_step_psd(l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let linv_dx = l.solve_lower_triangular(dx).expect("triangular solve");
    let t = l
        .solve_lower_triangular(&linv_dx.transpose())
        .expect("triangular solve");
    let t = sym(&t);
    let lmin = SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        match Cholesky::new(m.clone()) {
            Some(c) => Some(Factor::Chol(c)),
            None => {
                let lu = LU::new(m);
                if lu.is_invertible() {
                    Some(Factor::Lu(lu))
                } else {
                    None
                }
            }
        }
    }

    fn solve(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Factor::Chol(c) => Some(c.solve(r)),
            Factor::Lu(l) => l.solve(r),
        }
    }
}

struct Iterate {
    x: DMatrix<f64>,
    xl: DVector<f64>,
    y: DVector<f64>,
    s: DMatrix<f64>,
    sl: DVector<f64>,
}

/// Search direction `(dX, dx_lp, dy, dS, ds_lp)`.
type Direction = (
    DMatrix<f64>,
    DVector<f64>,
    DVector<f64>,
    DMatrix<f64>,
    DVector<f64>,
);

pub(crate) fn solve(
    p: &ConeProblem,
    tol: f64,
    max_iter: usize,
) -> Result<ConeSolution, IpmFailure> {
    let sp = scale_problem(p);
    let n = sp.c.nrows();
    let nl = sp.c_lp.len();
    let m = sp.a.len();
    let nu = (n + nl) as f64;

    let norm_b = sp.b.norm();
    let norm_c = (sp.c.norm_squared() + sp.c_lp.norm_squared()).sqrt();
    let xi = 10f64.max((n as f64).sqrt()).max(nu * (1.0 + amax(&sp.b)));
    let eta = 10f64.max((n as f64).sqrt()).max(1.0 + norm_c);

    let mut it = Iterate {
        x: DMatrix::identity(n, n) * xi,
        xl: DVector::from_element(nl, xi),
        y: DVector::zeros(m),
        s: DMatrix::identity(n, n) * eta,
        sl: DVector::from_element(nl, eta),
    };

    let mut best: Option<(f64, ConeSolution)> = None;
    let mut small_steps = 0;

    for iter in 0..=max_iter {
        // Residuals.
        let mut rp = sp.b.clone();
        for i in 0..m {
            rp[i] -= inner(&sp.a[i], &it.x) + sp.a_lp.row(i).dot(&it.xl.transpose());
        }
        let mut rd = &sp.c - &it.s;
        let mut rd_lp = &sp.c_lp - &it.sl;
        for i in 0..m {
            rd -= &sp.a[i] * it.y[i];
            rd_lp -= sp.a_lp.row(i).transpose() * it.y[i];
        }
        let pobj = inner(&sp.c, &it.x) + sp.c_lp.dot(&it.xl);
        let dobj = sp.b.dot(&it.y);
        let comp = inner(&it.x, &it.s) + it.xl.dot(&it.sl);
        let mu = comp / nu;
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = (rd.norm_squared() + rd_lp.norm_squared()).sqrt() / (1.0 + norm_c);
        let relgap = comp.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        let residual = pinf.max(dinf).max(relgap);

        let snapshot = |iterations: usize| ConeSolution {
            x: it.x.clone(),
            x_lp: it.xl.clone(),
            y: it.y.clone(),
            s: it.s.clone(),
            s_lp: it.sl.clone(),
            iterations,
        };
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, snapshot(iter)));
        }
        if residual <= tol {
            return Ok(unscale(&sp, snapshot(iter)));
        }
        let xnorm = it.x.trace() + it.xl.sum();
        if xnorm > 1e12 && dinf < 1e-6 && pobj < -1e8 {
            return Err(IpmFailure::Infeasible("dual"));
        }
        if amax(&it.y) > 1e12 && pinf < 1e-6 && dobj > 1e8 {
            return Err(IpmFailure::Infeasible("primal"));
        }
        if iter == max_iter || small_steps >= 8 {
            break;
        }

        // NT scaling point W = G Gᵀ with Gᵀ S G = G⁻¹ X G⁻ᵀ = diag(d).
        let Some(lx) = Cholesky::new(sym(&it.x)) else {
            break;
        };
        let lx = lx.l();
        let k = sym(&(lx.transpose() * &it.s * &lx));
        let ek = SymmetricEigen::new(k);
        if ek.eigenvalues.iter().any(|v| *v <= 0.0) {
            break;
        }
        let d: DVector<f64> = ek.eigenvalues.map(|v| v.sqrt());
        let quarter = ek.eigenvalues.map(|v| v.powf(-0.25));
        let g = &lx * &ek.eigenvectors * DMatrix::from_diagonal(&quarter);
        let ginv = DMatrix::from_diagonal(&ek.eigenvalues.map(|v| v.powf(0.25)))
            * ek.eigenvectors.transpose()
            * lx.clone()
                .try_inverse()
                .unwrap_or_else(|| DMatrix::identity(n, n));
        let w = &g * g.transpose();

        let waw: Vec<DMatrix<f64>> = sp.a.iter().map(|a| &w * a * &w).collect();
        let ratio: DVector<f64> = it.xl.component_div(&it.sl);
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let mut v = inner(&sp.a[i], &waw[j]);
                for k in 0..nl {
                    v += sp.a_lp[(i, k)] * sp.a_lp[(j, k)] * ratio[k];
                }
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let Some(factor) = Factor::new(schur) else {
            break;
        };

        // Solves for a given complementarity right-hand side (scaled block form, LP form).
        let direction = |h_rhs: &DMatrix<f64>, lp_rhs: &DVector<f64>| -> Option<Direction> {
            let mut h = h_rhs.clone();
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] /= d[i] + d[j];
                }
            }
            let rc = &g * h * g.transpose();
            let base = &rc - &w * &rd * &w;
            let lp_base = lp_rhs.component_div(&it.sl) - ratio.component_mul(&rd_lp);
            let mut rhs = rp.clone();
            for i in 0..m {
                rhs[i] -= inner(&sp.a[i], &base) + sp.a_lp.row(i).dot(&lp_base.transpose());
            }
            let dy = factor.solve(&rhs)?;
            let mut ds = rd.clone();
            let mut ds_lp = rd_lp.clone();
            for i in 0..m {
                ds -= &sp.a[i] * dy[i];
                ds_lp -= sp.a_lp.row(i).transpose() * dy[i];
            }
            let dx = sym(&(&rc - &w * &ds * &w));
            let dx_lp = lp_rhs.component_div(&it.sl) - ratio.component_mul(&ds_lp);
            Some((dx, dx_lp, dy, sym(&ds), ds_lp))
        };

        let dsq = DMatrix::from_diagonal(&d.map(|v| v * v));
        let Some((dxa, dxla, _, dsa, dsla)) =
            direction(&(-2.0 * &dsq), &(-it.xl.component_mul(&it.sl)))
        else {
            break;
        };
        let Some(ls) = Cholesky::new(sym(&it.s)) else {
            break;
        };
        let ls = ls.l();
        let ap_aff = max_step_psd(&lx, &dxa)
            .min(max_step_lp(&it.xl, &dxla))
            .min(1.0);
        let ad_aff = max_step_psd(&ls, &dsa)
            .min(max_step_lp(&it.sl, &dsla))
            .min(1.0);
        let mu_aff = (inner(&(&it.x + &dxa * ap_aff), &(&it.s + &dsa * ad_aff))
            + (&it.xl + &dxla * ap_aff).dot(&(&it.sl + &dsla * ad_aff)))
            / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let dxt = &ginv * &dxa * ginv.transpose();
        let dst = g.transpose() * &dsa * &g;
        let cross = &dxt * &dst + &dst * &dxt;
        let h_rhs = DMatrix::identity(n, n) * (2.0 * sigma * mu) - 2.0 * &dsq - cross;
        let lp_rhs = DVector::from_element(nl, sigma * mu)
            - it.xl.component_mul(&it.sl)
            - dxla.component_mul(&dsla);
        let Some((dx, dxl, dy, ds, dsl)) = direction(&h_rhs, &lp_rhs) else {
            break;
        };

        let ap = max_step_psd(&lx, &dx).min(max_step_lp(&it.xl, &dxl));
        let ad = max_step_psd(&ls, &ds).min(max_step_lp(&it.sl, &dsl));
        let gamma = 0.9 + 0.09 * ap_aff.min(ad_aff);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap.max(ad) < 1e-9 {
            small_steps += 1;
        } else {
            small_steps = 0;
        }
        it.x = sym(&(&it.x + dx * ap));
        it.xl += dxl * ap;
        it.y += dy * ad;
        it.s = sym(&(&it.s + ds * ad));
        it.sl += dsl * ad;
    }
    let (_, b) = best.expect("at least one iterate");
    Err(IpmFailure::Stalled(Box::new(unscale(&sp, b))))
}

fn unscale(sp: &Scaled, mut sol: ConeSolution) -> ConeSolution {
    sol.x *= sp.b_scale;
    sol.x_lp *= sp.b_scale;
    sol.s *= sp.c_scale;
    sol.s_lp *= sp.c_scale;
    for i in 0..sol.y.len() {
        sol.y[i] *= sp.c_scale / sp.row_scale[i];
    }
    sol
}
