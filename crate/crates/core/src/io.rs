//! File formats: JSON for matrices, results and certificates; CSV for curves.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gmn::NegativityResult;
use crate::rdm::{validate_state, DensityMatrix, StateMeta, BASIS_CONVENTION};
use crate::separability::{CertificateCheck, SeparabilityCertificate, SeparabilityOutcome};

pub const FORMAT_VERSION: &str = "xyent-format 1";

pub fn matrix_to_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|c| json!(m[(r, c)])).collect()))
            .collect(),
    )
}

pub fn matrix_from_json(v: &Value) -> Result<DMatrix<f64>> {
    let rows = v.as_array().ok_or_else(|| Error::Format("matrix must be an array of rows".into()))?;
    let n = rows.len();
    let mut out = DMatrix::zeros(n, n);
    for (r, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| Error::Format(format!("row {r} is not an array")))?;
        if row.len() != n {
            return Err(Error::Format(format!("row {r} has {} entries, expected {n}", row.len())));
        }
        for (c, x) in row.iter().enumerate() {
            out[(r, c)] = x
                .as_f64()
                .ok_or_else(|| Error::Format(format!("entry ({r}, {c}) is not a number")))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixFile {
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    basis: Option<String>,
    #[serde(default)]
    parties: Option<usize>,
    #[serde(default)]
    meta: Option<StateMeta>,
    matrix: Value,
}

pub fn density_matrix_to_json(rho: &DensityMatrix) -> Value {
    json!({
        "format": FORMAT_VERSION,
        "basis": BASIS_CONVENTION,
        "parties": rho.parties(),
        "meta": rho.meta(),
        "matrix": matrix_to_json(rho.matrix()),
    })
}

/// Accepts either the object written by [`density_matrix_to_json`] or a bare
/// array of rows.
pub fn density_matrix_from_json(v: &Value) -> Result<DensityMatrix> {
    let (matrix, meta) = if v.is_array() {
        (matrix_from_json(v)?, None)
    } else {
        let file: MatrixFile = serde_json::from_value(v.clone())?;
        let m = matrix_from_json(&file.matrix)?;
        if let Some(p) = file.parties {
            if m.nrows() != 1 << p {
                return Err(Error::Format(format!("{} parties but a {}x{} matrix", p, m.nrows(), m.nrows())));
            }
        }
        (m, file.meta)
    };
    let rho = DensityMatrix::from_matrix(matrix)?;
    let report = validate_state(&rho, 1e-8);
    if !report.passed {
        return Err(Error::Unphysical {
            trace_deviation: report.trace_deviation,
            asymmetry: report.asymmetry,
            min_eigenvalue: report.min_eigenvalue,
        });
    }
    Ok(match meta {
        Some(m) => rho.with_meta(m),
        None => rho,
    })
}

pub fn read_density_matrix(path: &std::path::Path) -> Result<DensityMatrix> {
    let text = std::fs::read_to_string(path)?;
    density_matrix_from_json(&serde_json::from_str(&text)?)
}

pub fn negativity_to_json(res: &NegativityResult, with_witness: bool) -> Value {
    let mut v = json!({
        "value": res.value,
        "raw_value": res.raw_value,
        "duality_gap": res.duality_gap,
        "status": res.status,
        "iterations": res.iterations,
        "parity_reduced": res.parity_reduced,
    });
    if with_witness {
        let w = &res.witness;
        v["witness"] = json!({
            "bipartitions": w.bipartitions.iter().map(|b| b.to_string()).collect::<Vec<_>>(),
            "w": matrix_to_json(&w.w),
            "p": w.p.iter().map(matrix_to_json).collect::<Vec<_>>(),
            "q": w.q.iter().map(matrix_to_json).collect::<Vec<_>>(),
        });
    }
    v
}

pub fn certificate_to_json(cert: &SeparabilityCertificate) -> Value {
    json!({
        "filters": cert.filters.iter().map(matrix_to_json).collect::<Vec<_>>(),
        "components": cert.components.iter().map(|c| json!({
            "weight": c.weight,
            "bipartition": c.bipartition.to_string(),
            "subset": c.bipartition.subset(),
            "re": c.state.iter().map(|x| x.re).collect::<Vec<_>>(),
            "im": c.state.iter().map(|x| x.im).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "tail_weight": cert.tail_weight,
        "tail": matrix_to_json(cert.tail.matrix()),
        "iterations": cert.iterations,
    })
}

pub fn outcome_to_json(out: &SeparabilityOutcome, check: Option<&CertificateCheck>) -> Value {
    match out {
        SeparabilityOutcome::Certified(c) => json!({
            "outcome": "certified",
            "certificate": certificate_to_json(c),
            "check": check,
        }),
        SeparabilityOutcome::Inconclusive {
            iterations,
            final_purity,
            reason,
        } => json!({
            "outcome": "inconclusive",
            "iterations": iterations,
            "final_purity": final_purity,
            "reason": reason,
        }),
    }
}

/// Shortest round-trip formatting is not fixed-width; curves use 17
/// significant digits.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.16e}")
    }
}

/// CSV with `#`-prefixed header lines, then a column header, then rows.
pub fn write_csv<W: Write>(out: &mut W, header: &[String], columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    writeln!(out, "# {FORMAT_VERSION}")?;
    for line in header {
        for part in line.lines() {
            writeln!(out, "# {part}")?;
        }
    }
    writeln!(out, "{}", columns.join(","))?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::Format(format!("row with {} fields for {} columns", row.len(), columns.len())));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
