//! JSON encoding of instances, matrices, vectors and results.
//!
//! Matrices are row-major arrays of rows; each entry is `[re, im]` or, for the real
//! field, a plain number. A flat array of `n²` entries is also accepted on input.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::harness::BruteForce;
use crate::linalg::{CVector, Field, HermitianMatrix, C64};
use crate::sdp::{Constraint, QcqpInstance, SdpPair, Sense, SlaterReport};
use crate::slemma::{CertificateResult, TargetSystem};
use crate::tightness::{Outcome, PropertyIReport, RecoveryRoute, TightnessVerdict};

pub const SCHEMA: &str = "qcqp-tight/1";

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidInstance(msg.into())
}

fn entry_from_json(field: Field, v: &Value) -> Result<C64> {
    let z = match v {
        Value::Number(x) => C64::new(x.as_f64().ok_or_else(|| bad("bad number"))?, 0.0),
        Value::Array(p) if p.len() == 2 => {
            let re = p[0].as_f64().ok_or_else(|| bad("bad real part"))?;
            let im = p[1].as_f64().ok_or_else(|| bad("bad imaginary part"))?;
            C64::new(re, im)
        }
        _ => {
            return Err(bad(format!(
                "matrix entry must be a number or [re, im], got {v}"
            )))
        }
    };
    if field == Field::Real && z.im != 0.0 {
        return Err(bad("complex entry in a real-field matrix"));
    }
    Ok(z)
}

fn entries(field: Field, n: usize, v: &Value) -> Result<Vec<C64>> {
    let arr = v.as_array().ok_or_else(|| bad("matrix must be an array"))?;
    // Nested rows unless the array is already flat. For n = 1 a row is an array holding
    // exactly one entry, whereas a flat `[re, im]` pair holds two numbers.
    let nested = if n == 1 {
        arr.len() == 1 && arr[0].as_array().is_some_and(|r| r.len() == 1)
    } else {
        arr.len() == n
    };
    let flat: Vec<&Value> = if nested {
        let mut out = Vec::with_capacity(n * n);
        for r in arr {
            let row = r
                .as_array()
                .ok_or_else(|| bad("matrix row must be an array"))?;
            if row.len() != n {
                return Err(bad(format!(
                    "matrix row has {} entries, expected {n}",
                    row.len()
                )));
            }
            out.extend(row.iter());
        }
        out
    } else {
        arr.iter().collect()
    };
    if flat.len() != n * n {
        return Err(bad(format!(
            "expected {} matrix entries, found {}",
            n * n,
            flat.len()
        )));
    }
    flat.into_iter()
        .map(|e| entry_from_json(field, e))
        .collect()
}

pub fn matrix_from_json(field: Field, n: usize, v: &Value) -> Result<HermitianMatrix> {
    let e = entries(field, n, v)?;
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| e[i * n + j]);
    HermitianMatrix::from_full(field, &m, 1e-9)
}

fn entry_to_json(field: Field, z: C64) -> Value {
    match field {
        Field::Real => json!(z.re),
        Field::Complex => json!([z.re, z.im]),
    }
}

pub fn matrix_to_json(a: &HermitianMatrix) -> Value {
    let n = a.n();
    Value::Array(
        (0..n)
            .map(|i| {
                Value::Array(
                    (0..n)
                        .map(|j| entry_to_json(a.field(), a.get(i, j)))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn vector_to_json(field: Field, x: &CVector) -> Value {
    Value::Array(x.iter().map(|z| entry_to_json(field, *z)).collect())
}

pub fn vector_from_json(field: Field, v: &Value) -> Result<CVector> {
    let arr = v.as_array().ok_or_else(|| bad("vector must be an array"))?;
    let e: Vec<C64> = arr
        .iter()
        .map(|e| entry_from_json(field, e))
        .collect::<Result<_>>()?;
    Ok(CVector::from_vec(e))
}

pub fn field_from_json(v: &Value) -> Result<Field> {
    match v.as_str() {
        Some("real") => Ok(Field::Real),
        Some("complex") => Ok(Field::Complex),
        _ => Err(bad("field must be \"real\" or \"complex\"")),
    }
}

pub fn instance_from_json(v: &Value) -> Result<QcqpInstance> {
    let field = field_from_json(&v["field"])?;
    let n = v["n"]
        .as_u64()
        .ok_or_else(|| bad("n must be a positive integer"))? as usize;
    if n == 0 {
        return Err(bad("n must be positive"));
    }
    let objective = matrix_from_json(field, n, &v["A0"])?;
    let cons = v["constraints"]
        .as_array()
        .ok_or_else(|| bad("constraints must be an array"))?;
    let constraints = cons
        .iter()
        .map(|c| {
            let a = matrix_from_json(field, n, &c["A"])?;
            let b = c["c"]
                .as_f64()
                .ok_or_else(|| bad("constraint bound c must be a number"))?;
            let sense = match c.get("sense").and_then(Value::as_str).unwrap_or("le") {
                "le" => Sense::Le,
                "eq" => Sense::Eq,
                s => return Err(bad(format!("unknown sense {s:?}"))),
            };
            Ok(Constraint::new(a, b, sense))
        })
        .collect::<Result<Vec<_>>>()?;
    QcqpInstance::new(objective, constraints)
}

pub fn instance_to_json(inst: &QcqpInstance) -> Value {
    json!({
        "field": inst.field.to_string(),
        "n": inst.n,
        "A0": matrix_to_json(&inst.objective),
        "constraints": inst.constraints.iter().map(|c| json!({
            "A": matrix_to_json(&c.a),
            "c": c.c,
            "sense": match c.sense { Sense::Le => "le", Sense::Eq => "eq" },
        })).collect::<Vec<_>>(),
    })
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<QcqpInstance> {
    let text = std::fs::read_to_string(path)?;
    instance_from_json(&serde_json::from_str(&text)?)
}

pub fn write_instance(path: impl AsRef<Path>, inst: &QcqpInstance) -> Result<()> {
    std::fs::write(
        path,
        serde_json::to_string_pretty(&instance_to_json(inst))? + "\n",
    )?;
    Ok(())
}

pub fn pair_to_json(pair: &SdpPair) -> Value {
    json!({
        "X": matrix_to_json(&pair.x),
        "Z": matrix_to_json(&pair.z),
        "mu": pair.mu,
        "primal_value": pair.primal_value,
        "dual_value": pair.dual_value,
        "kkt_residual": pair.kkt_residual,
        "iterations": pair.iterations,
    })
}

pub fn slater_to_json(r: &SlaterReport) -> Value {
    json!({
        "primal_point": r.primal_point.as_ref().map(|p| json!({
            "X": matrix_to_json(&p.x), "margin": p.margin,
        })),
        "dual_point": r.dual_point.as_ref().map(|d| json!({
            "mu": d.mu, "Z": matrix_to_json(&d.z), "min_eigenvalue": d.min_eigenvalue,
        })),
    })
}

fn complex_to_json(z: C64) -> Value {
    json!([z.re, z.im])
}

pub fn report_to_json(field: Field, r: &PropertyIReport) -> Value {
    json!({
        "holds": r.holds,
        "clause_i1": r.clause_i1,
        "clause_i2": r.clause_i2,
        "clause_i3": r.clause_i3,
        "clause_i41": r.clause_i41,
        "clause_i42": r.clause_i42,
        "clause_i43": r.clause_i43,
        "rank_x": r.rank_x,
        "rank_z": r.rank_z,
        "eps2": r.eps2,
        "witnesses": r.witnesses.as_ref().map(|(a, b)| json!([vector_to_json(field, a), vector_to_json(field, b)])),
        "values": r.values.as_ref().map(|v| json!({
            "first_shares": v.first_shares,
            "first_cross": v.first_cross,
            "second_shares": v.second_shares,
            "second_cross": v.second_cross.map(complex_to_json),
            "last_shares": v.last_shares,
            "product": v.product,
        })),
    })
}

fn route_name(r: RecoveryRoute) -> String {
    match r {
        RecoveryRoute::ZeroMultiplier { index } => format!("zero_multiplier[{index}]"),
        RecoveryRoute::LowRank => "low_rank".into(),
        RecoveryRoute::WideNullSpace => "wide_null_space".into(),
        RecoveryRoute::EqualShares => "equal_shares".into(),
        RecoveryRoute::Rotation => "rotation".into(),
        RecoveryRoute::RangeExtraction => "range_extraction".into(),
    }
}

pub fn verdict_to_json(field: Field, v: &TightnessVerdict) -> Value {
    let outcome = match &v.outcome {
        Outcome::Recovered { x, value, route } => json!({
            "status": "recovered",
            "x": vector_to_json(field, x),
            "value": value,
            "route": route_name(*route),
        }),
        Outcome::GapOrInfeasible => json!({ "status": "gap_or_infeasible" }),
    };
    json!({ "report": report_to_json(field, &v.report), "outcome": outcome })
}

pub fn certificate_to_json(field: Field, c: &CertificateResult) -> Value {
    let body = match c {
        CertificateResult::PsdCertificate { mu0, convex } => {
            json!({ "mu0": mu0, "convex": convex })
        }
        CertificateResult::PropertyWitness {
            mu_breve,
            x1,
            x2,
            order,
        } => json!({
            "mu_breve": mu_breve,
            "x1": vector_to_json(field, x1),
            "x2": vector_to_json(field, x2),
            "order": order,
        }),
        CertificateResult::SystemSolvable { x, system } => {
            let (name, order) = match system {
                TargetSystem::Inequalities => ("inequalities", None),
                TargetSystem::AllNegative => ("all_negative", None),
                TargetSystem::Equalities { order } => ("equalities", Some(order)),
            };
            json!({ "x": vector_to_json(field, x), "system": name, "order": order })
        }
    };
    let mut map = Map::new();
    map.insert("certificate".into(), json!(c.kind()));
    if let Value::Object(b) = body {
        map.extend(b);
    }
    Value::Object(map)
}

pub fn brute_force_to_json(field: Field, b: &BruteForce) -> Value {
    match b {
        BruteForce::Feasible { value, argmin } => json!({
            "status": "feasible", "value": value, "argmin": vector_to_json(field, argmin),
        }),
        BruteForce::Infeasible => json!({ "status": "infeasible" }),
        BruteForce::Unbounded => json!({ "status": "unbounded" }),
    }
}

/// Matrices for the certificate procedures: `{"field", "n", "matrices": [...], "x0"?}`.
pub fn matrices_from_json(v: &Value) -> Result<(Field, Vec<HermitianMatrix>, Option<CVector>)> {
    let field = field_from_json(&v["field"])?;
    let n = v["n"]
        .as_u64()
        .ok_or_else(|| bad("n must be a positive integer"))? as usize;
    if n == 0 {
        return Err(bad("n must be positive"));
    }
    let mats = v["matrices"]
        .as_array()
        .ok_or_else(|| bad("matrices must be an array"))?
        .iter()
        .map(|m| matrix_from_json(field, n, m))
        .collect::<Result<Vec<_>>>()?;
    let x0 = match v.get("x0") {
        None | Some(Value::Null) => None,
        Some(x) => Some(vector_from_json(field, x)?),
    };
    Ok((field, mats, x0))
}

/// Wraps `body` in an object tagged with [`SCHEMA`].
pub fn with_schema(kind: &str, body: Value) -> Value {
    let mut map = Map::new();
    map.insert("schema".into(), json!(SCHEMA));
    map.insert("kind".into(), json!(kind));
    if let Value::Object(b) = body {
        map.extend(b);
    } else {
        map.insert("result".into(), body);
    }
    Value::Object(map)
}
