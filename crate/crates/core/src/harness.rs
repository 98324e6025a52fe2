//! Random instance generation, batch statistics and a brute-force oracle for `n = 2`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CVector, Field, HermitianMatrix, C64};
use crate::sdp::{Constraint, QcqpInstance, Sense};
use crate::tightness::{analyze, Outcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub field: Field,
    pub n: usize,
    pub seed: u64,
    pub count: usize,
    pub entry_range: f64,
    pub z_range: f64,
}

impl GeneratorConfig {
    pub fn new(field: Field, n: usize, seed: u64, count: usize) -> Self {
        Self {
            field,
            n,
            seed,
            count,
            entry_range: 10.0,
            z_range: 40.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Precondition("generator needs n >= 2".into()));
        }
        if self.count == 0 {
            return Err(Error::Precondition("generator needs count >= 1".into()));
        }
        if !(self.entry_range > 0.0 && self.z_range > 0.0) {
            return Err(Error::Precondition("entry ranges must be positive".into()));
        }
        Ok(())
    }
}

const MAX_RESAMPLES: usize = 100;

fn uniform_scalar(rng: &mut ChaCha8Rng, field: Field, r: f64) -> C64 {
    let re = rng.random_range(-r..=r);
    match field {
        Field::Real => C64::new(re, 0.0),
        Field::Complex => C64::new(re, rng.random_range(-r..=r)),
    }
}

fn uniform_hermitian(rng: &mut ChaCha8Rng, field: Field, n: usize, r: f64) -> HermitianMatrix {
    let m = nalgebra::DMatrix::from_fn(n, n, |_, _| uniform_scalar(rng, field, r));
    HermitianMatrix::hermitian_part(field, &m)
}

/// Instance with `m_F + 2` LE constraints whose multipliers `(1, …, 1)` give `Z ⪰ I`.
pub fn generate_instance(cfg: &GeneratorConfig, index: u64) -> Result<QcqpInstance> {
    generate_with_constraints(cfg, index, cfg.field.multiplicity() + 2)
}

/// As [`generate_instance`] with `m` constraints; the last one closes the dual Slater point.
///
/// The stream for `index` is seeded with `seed ⊕ index`, so any instance can be regenerated
/// on its own.
pub fn generate_with_constraints(
    cfg: &GeneratorConfig,
    index: u64,
    m: usize,
) -> Result<QcqpInstance> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::Precondition(
            "at least one constraint is needed".into(),
        ));
    }
    let (field, n) = (cfg.field, cfg.n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index);
    let mut mats: Vec<HermitianMatrix> = (0..m)
        .map(|_| uniform_hermitian(&mut rng, field, n, cfg.entry_range))
        .collect();
    let mut z = uniform_hermitian(&mut rng, field, n, cfg.z_range);
    let lmin = z.min_eigenvalue();
    if lmin < 1.0 {
        z = &z + &HermitianMatrix::identity(field, n).scale(1.0 - lmin);
    }
    let mut terms: Vec<(f64, &HermitianMatrix)> = vec![(1.0, &z)];
    terms.extend(mats.iter().map(|a| (-1.0, a)));
    let last = HermitianMatrix::lin_comb(&terms);
    // mats[0] is the objective; constraints are mats[1..] followed by `last`.
    mats.push(last);
    let objective = mats.remove(0);

    for _ in 0..MAX_RESAMPLES {
        let x = CVector::from_fn(n, |_, _| uniform_scalar(&mut rng, field, 1.0));
        let cs: Vec<f64> = mats
            .iter()
            .map(|a| a.quad(&x) + rng.random_range(0.5..1.5))
            .collect();
        if cs[m - 1] != 0.0 {
            let constraints = mats
                .iter()
                .zip(cs)
                .map(|(a, c)| Constraint::new(a.clone(), c, Sense::Le))
                .collect();
            return QcqpInstance::new(objective, constraints);
        }
    }
    Err(Error::InvalidInstance(
        "could not draw a nonzero last bound".into(),
    ))
}

// ---------------------------------------------------------------------------
// Experiment.

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub total: usize,
    /// Instances whose test failed; each of them was recovered.
    pub property_i_failed: usize,
    pub recovered: usize,
    pub gap_or_infeasible: usize,
    /// Solver or recovery errors.
    pub solver_failures: usize,
}

impl ExperimentRow {
    pub fn failure_rate(&self) -> f64 {
        self.property_i_failed as f64 / self.total.max(1) as f64
    }

    pub fn is_consistent(&self) -> bool {
        self.recovered == self.property_i_failed
            && self.recovered + self.gap_or_infeasible + self.solver_failures == self.total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub field: Field,
    pub seed: u64,
    pub count: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub per_n: Vec<ExperimentRow>,
}

impl ExperimentSummary {
    /// Counts laid out with one column per dimension.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let cols = |f: &dyn Fn(&ExperimentRow) -> String| {
            self.per_n.iter().map(f).collect::<Vec<_>>().join(" | ")
        };
        let _ = writeln!(s, "| n | {} |", cols(&|r| r.n.to_string()));
        let _ = writeln!(s, "|---|{}", "---|".repeat(self.per_n.len()));
        let _ = writeln!(
            s,
            "| k (test fails) | {} |",
            cols(&|r| r.property_i_failed.to_string())
        );
        let _ = writeln!(
            s,
            "| gap or infeasible | {} |",
            cols(&|r| r.gap_or_infeasible.to_string())
        );
        let _ = writeln!(
            s,
            "| solver failures | {} |",
            cols(&|r| r.solver_failures.to_string())
        );
        let _ = writeln!(s, "| total | {} |", cols(&|r| r.total.to_string()));
        let _ = writeln!(
            s,
            "| rate | {} |",
            cols(&|r| format!("{:.3}", r.failure_rate()))
        );
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tally {
    Recovered,
    Gap,
    Failure,
}

fn classify(inst: &QcqpInstance, eps1: f64, eps2: f64) -> Tally {
    match analyze(inst, eps1, eps2) {
        Ok((_, v)) => match v.outcome {
            Outcome::Recovered { .. } => Tally::Recovered,
            Outcome::GapOrInfeasible => Tally::Gap,
        },
        Err(_) => Tally::Failure,
    }
}

fn tally(n: usize, outcomes: &[Tally]) -> ExperimentRow {
    let count = |t| outcomes.iter().filter(|o| **o == t).count();
    let recovered = count(Tally::Recovered);
    ExperimentRow {
        n,
        total: outcomes.len(),
        property_i_failed: recovered,
        recovered,
        gap_or_infeasible: count(Tally::Gap),
        solver_failures: count(Tally::Failure),
    }
}

/// Runs the pipeline on given instances of dimension `n`.
pub fn summarize_instances(
    n: usize,
    instances: &[QcqpInstance],
    eps1: f64,
    eps2: f64,
) -> ExperimentRow {
    let outcomes: Vec<Tally> = instances
        .par_iter()
        .map(|i| classify(i, eps1, eps2))
        .collect();
    tally(n, &outcomes)
}

/// Generates `count` instances per dimension and tallies the outcomes.
///
/// Instances run in parallel; the counts do not depend on scheduling.
pub fn run_experiment(
    field: Field,
    n_list: &[usize],
    count: usize,
    seed: u64,
    eps1: f64,
    eps2: f64,
) -> Result<ExperimentSummary> {
    let mut per_n = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cfg = GeneratorConfig::new(field, n, seed, count);
        cfg.validate()?;
        let outcomes: Vec<Tally> = (0..count as u64)
            .into_par_iter()
            .map(|i| match generate_instance(&cfg, i) {
                Ok(inst) => classify(&inst, eps1, eps2),
                Err(_) => Tally::Failure,
            })
            .collect();
        per_n.push(tally(n, &outcomes));
    }
    Ok(ExperimentSummary {
        field,
        seed,
        count,
        eps1,
        eps2,
        per_n,
    })
}

// ---------------------------------------------------------------------------
// Brute force.

#[derive(Clone, Debug, PartialEq)]
pub enum BruteForce {
    Feasible {
        value: f64,
        argmin: CVector,
    },
    Infeasible,
    /// Some feasible ray drives the objective to −∞.
    Unbounded,
}

/// Margin by which grid points may violate a constraint.
const GRID_MARGIN: f64 = 1e-9;

/// Pattern-search steps after the grid search.
const REFINE_STEPS: usize = 200;

/// Best grid points used as pattern-search starts.
const REFINE_STARTS: usize = 16;

/// Best objective value along the ray `r·u`, `r ≥ 0`, over the feasible radii.
///
/// Along a ray every form scales with `r²`, so the feasible set of `s = r²` is an interval
/// computed exactly; the objective is linear in `s`.
fn ray_value(inst: &QcqpInstance, u: &CVector) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for c in &inst.constraints {
        let q = c.a.quad(u);
        let tol = GRID_MARGIN * c.c.abs().max(1.0);
        match c.sense {
            Sense::Le => {
                if q.abs() <= GRID_MARGIN {
                    if c.c < -tol {
                        return None;
                    }
                } else if q > 0.0 {
                    hi = hi.min((c.c + tol) / q);
                } else {
                    lo = lo.max((c.c + tol) / q);
                }
            }
            Sense::Eq => {
                if q.abs() <= GRID_MARGIN {
                    if c.c.abs() > tol {
                        return None;
                    }
                } else {
                    let s = c.c / q;
                    if s < -tol {
                        return None;
                    }
                    let s = s.max(0.0);
                    let w = tol / q.abs();
                    lo = lo.max(s - w);
                    hi = hi.min(s + w);
                }
            }
        }
    }
    if lo > hi {
        return None;
    }
    let q0 = inst.objective.quad(u);
    let s = if q0 >= 0.0 { lo } else { hi };
    Some((q0 * s, s))
}

fn direction(field: Field, p: &[f64]) -> CVector {
    match field {
        Field::Real => {
            CVector::from_vec(vec![C64::new(p[0].cos(), 0.0), C64::new(p[0].sin(), 0.0)])
        }
        Field::Complex => CVector::from_vec(vec![
            C64::new(p[0].cos(), 0.0),
            C64::from_polar(p[0].sin(), p[1]),
        ]),
    }
}

/// Grid search over unit directions (one angle over the reals, two over the complex field)
/// with exact radius per direction, followed by a pattern search on the angles from the best
/// grid points. A coarse grid can miss a narrow feasible wedge around the optimum.
pub fn brute_force_value(inst: &QcqpInstance, resolution: usize) -> Result<BruteForce> {
    inst.validate()?;
    if inst.n != 2 {
        return Err(Error::Unsupported(format!(
            "brute force needs n = 2, got n = {}",
            inst.n
        )));
    }
    let res = resolution.max(4);
    let field = inst.field;
    let grid: Vec<Vec<f64>> = match field {
        Field::Real => (0..res).map(|i| vec![PI * i as f64 / res as f64]).collect(),
        Field::Complex => (0..=res)
            .flat_map(|i| {
                (0..res).map(move |j| {
                    vec![
                        0.5 * PI * i as f64 / res as f64,
                        2.0 * PI * j as f64 / res as f64,
                    ]
                })
            })
            .collect(),
    };
    let eval = |p: &[f64]| ray_value(inst, &direction(field, p));
    let mut feasible: Vec<(f64, Vec<f64>)> = Vec::new();
    for p in grid {
        if let Some((v, _)) = eval(&p) {
            if v == f64::NEG_INFINITY || v.is_nan() {
                return Ok(BruteForce::Unbounded);
            }
            feasible.push((v, p));
        }
    }
    if feasible.is_empty() {
        return Ok(BruteForce::Infeasible);
    }
    feasible.sort_by(|a, b| a.0.total_cmp(&b.0));
    feasible.truncate(REFINE_STARTS);
    // Pattern search on a 5-point (real) or 5×5 (complex) stencil. Optima often sit where
    // several constraints meet, so axis-only moves would stall at the kink.
    let offsets: Vec<Vec<f64>> = match field {
        Field::Real => [-2.0, -1.0, 1.0, 2.0].iter().map(|a| vec![*a]).collect(),
        Field::Complex => (-2..=2)
            .flat_map(|i| (-2..=2).map(move |j| vec![i as f64, j as f64]))
            .filter(|o| o.iter().any(|v| *v != 0.0))
            .collect(),
    };
    let refine = |(mut value, mut p): (f64, Vec<f64>)| {
        let mut step = PI / res as f64;
        for _ in 0..REFINE_STEPS {
            let mut next: Option<(f64, Vec<f64>)> = None;
            for o in &offsets {
                let q: Vec<f64> = p.iter().zip(o).map(|(a, b)| a + step * b).collect();
                if let Some((v, _)) = eval(&q) {
                    if v < next.as_ref().map_or(value, |n| n.0) {
                        next = Some((v, q));
                    }
                }
            }
            match next {
                Some((v, q)) => {
                    value = v;
                    p = q;
                }
                None => step *= 0.5,
            }
        }
        (value, p)
    };
    let (value, p) = feasible
        .into_iter()
        .map(refine)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");
    let u = direction(field, &p);
    let (_, s) = eval(&p).expect("refined point stays feasible");
    Ok(BruteForce::Feasible {
        value,
        argmin: u * C64::new(s.sqrt(), 0.0),
    })
}
