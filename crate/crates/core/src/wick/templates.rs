//! Closed-form determinant templates for four-site Pauli expectations.
//!
//! Every non-vanishing expectation `⟨σ_i^m σ_j^n σ_k^o σ_l^p⟩` with spacings
//! `α = j − i`, `β = k − j`, `δ = l − k` is a signed determinant
//! `± det[G_{c_v − r_u}]` whose row and column index sets are read off the
//! printed matrices. Patterns with identities on some sites reuse the same
//! layouts on the occupied sites, which is what the substitution rules
//! (`β → β + δ`, `α → α + β`, …) express.
//!
//! This is an independent transcription used to cross-check the general
//! reduction in [`super::reduce_pauli_string`].

use nalgebra::DMatrix;

use super::{determinant, format_labels, Pauli};
use crate::correlators::CorrelatorTable;
use crate::error::{Error, Result};

/// Value of a template together with the parity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateValue {
    pub value: f64,
    /// Set when `σ^x` or `σ^y` occurs an odd number of times; the value is 0.
    pub vanishes_by_parity: bool,
}

/// Signed determinant layout `sign · det[G_{cols[v] − rows[u]}]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub sign: i8,
    pub rows: Vec<i64>,
    pub cols: Vec<i64>,
}

fn span(lo: i64, hi: i64) -> Vec<i64> {
    (lo..=hi).collect()
}

fn without(mut v: Vec<i64>, drop: &[i64]) -> Vec<i64> {
    v.retain(|x| !drop.contains(x));
    v
}

fn cat(parts: &[Vec<i64>]) -> Vec<i64> {
    parts.concat()
}

fn parity_sign(e: i64) -> i8 {
    if e.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// Layout for the non-identity word `word` on absolute positions `pos`.
pub fn layout(word: &str, pos: &[i64]) -> Option<Layout> {
    let l = |sign_exp: i64, rows: Vec<i64>, cols: Vec<i64>| {
        Some(Layout {
            sign: parity_sign(sign_exp),
            rows,
            cols,
        })
    };
    match (word, pos) {
        ("", []) => l(0, vec![], vec![]),
        ("z", &[p]) => l(1, vec![p], vec![p]),
        ("zz", &[p, q]) => l(0, vec![p, q], vec![p, q]),
        ("zzz", &[p, q, s]) => l(1, vec![p, q, s], vec![p, q, s]),
        ("zzzz", &[p, q, s, t]) => l(0, vec![p, q, s, t], vec![p, q, s, t]),

        ("xx", &[p, q]) => l(q - p, span(p + 1, q), span(p, q - 1)),
        ("yy", &[p, q]) => l(q - p, span(p, q - 1), span(p + 1, q)),

        ("xxz", &[p, q, s]) => l(q - p + 1, cat(&[span(p + 1, q), vec![s]]), cat(&[span(p, q - 1), vec![s]])),
        ("yyz", &[p, q, s]) => l(q - p + 1, cat(&[span(p, q - 1), vec![s]]), cat(&[span(p + 1, q), vec![s]])),
        ("xzx", &[p, q, s]) => l(s - p, without(span(p + 1, s), &[q]), without(span(p, s - 1), &[q])),
        ("yzy", &[p, q, s]) => l(s - p, without(span(p, s - 1), &[q]), without(span(p + 1, s), &[q])),
        ("zxx", &[p, q, s]) => l(s - q + 1, cat(&[vec![p], span(q + 1, s)]), cat(&[vec![p], span(q, s - 1)])),
        ("zyy", &[p, q, s]) => l(s - q + 1, cat(&[vec![p], span(q, s - 1)]), cat(&[vec![p], span(q + 1, s)])),

        (w, &[i, j, k, m]) => four_site(w, i, j - i, k - j, m - k),
        _ => None,
    }
}

fn four_site(word: &str, i: i64, a: i64, b: i64, d: i64) -> Option<Layout> {
    let (j, k, m) = (i + a, i + a + b, i + a + b + d);
    let l = |sign_exp: i64, rows: Vec<i64>, cols: Vec<i64>| {
        Some(Layout {
            sign: parity_sign(sign_exp),
            rows,
            cols,
        })
    };
    match word {
        "xxzz" => l(a, cat(&[span(i + 1, j), vec![k, m]]), cat(&[span(i, j - 1), vec![k, m]])),
        "zzxx" => l(d, cat(&[vec![i, j], span(k + 1, m)]), cat(&[vec![i, j], span(k, m - 1)])),
        "zxxz" => l(b, cat(&[vec![i], span(j + 1, k), vec![m]]), cat(&[vec![i], span(j, k - 1), vec![m]])),
        "xzzx" => l(a + b + d, without(span(i + 1, m), &[j, k]), without(span(i, m - 1), &[j, k])),

        "yyzz" => l(a, cat(&[span(i, j - 1), vec![k, m]]), cat(&[span(i + 1, j), vec![k, m]])),
        "zzyy" => l(d, cat(&[vec![i, j], span(k, m - 1)]), cat(&[vec![i, j], span(k + 1, m)])),
        "zyyz" => l(b, cat(&[vec![i], span(j, k - 1), vec![m]]), cat(&[vec![i], span(j + 1, k), vec![m]])),
        "yzzy" => l(a + b + d, without(span(i, m - 1), &[j, k]), without(span(i + 1, m), &[j, k])),

        "xzxz" => l(
            a + b + 1,
            cat(&[without(span(i + 1, k), &[j]), vec![m]]),
            cat(&[without(span(i, k - 1), &[j]), vec![m]]),
        ),
        "zxzx" => l(
            b + d + 1,
            cat(&[vec![i], without(span(j + 1, m), &[k])]),
            cat(&[vec![i], without(span(j, m - 1), &[k])]),
        ),
        "yzyz" => l(
            a + b + 1,
            cat(&[without(span(i, k - 1), &[j]), vec![m]]),
            cat(&[without(span(i + 1, k), &[j]), vec![m]]),
        ),
        "zyzy" => l(
            b + d + 1,
            cat(&[vec![i], without(span(j, m - 1), &[k])]),
            cat(&[vec![i], without(span(j + 1, m), &[k])]),
        ),

        "xxyy" => l(a + d, cat(&[span(i + 1, j), span(k, m - 1)]), cat(&[span(i, j - 1), span(k + 1, m)])),
        "yyxx" => l(a + d, cat(&[span(i, j - 1), span(k + 1, m)]), cat(&[span(i + 1, j), span(k, m - 1)])),
        "xyyx" => l(a + d, cat(&[span(i + 1, j - 1), span(k, m)]), cat(&[span(i, j), span(k + 1, m - 1)])),
        "yxxy" => l(a + d, cat(&[span(i, j), span(k + 1, m - 1)]), cat(&[span(i + 1, j - 1), span(k, m)])),
        "xxxx" => l(a + d, cat(&[span(i + 1, j), span(k + 1, m)]), cat(&[span(i, j - 1), span(k, m - 1)])),
        // unequal numbers of A and B factors: identically zero
        "xyxy" | "yxyx" => Some(Layout {
            sign: 0,
            rows: vec![],
            cols: vec![],
        }),
        "yyyy" => l(a + d, cat(&[span(i, j - 1), span(k, m - 1)]), cat(&[span(i + 1, j), span(k + 1, m)])),
        _ => None,
    }
}

/// Evaluate a layout against a correlator table.
pub fn evaluate_layout(layout: &Layout, g: &CorrelatorTable) -> Result<f64> {
    if layout.sign == 0 {
        return Ok(0.0);
    }
    let n = layout.rows.len();
    let mut m = DMatrix::zeros(n, n);
    for (u, &r) in layout.rows.iter().enumerate() {
        for (v, &c) in layout.cols.iter().enumerate() {
            m[(u, v)] = g.get(c - r)?;
        }
    }
    Ok(f64::from(layout.sign) * determinant(m))
}

/// Four-site expectation from the closed-form templates, in the same frame
/// as [`super::expectation`].
pub fn template_expectation(labels: [Pauli; 4], arr: (usize, usize, usize), g: &CorrelatorTable) -> Result<TemplateValue> {
    let (a, b, d) = arr;
    if a == 0 || b == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("spacings must be positive, got {arr:?}")));
    }
    let count = |p| labels.iter().filter(|&&l| l == p).count();
    if count(Pauli::X) % 2 == 1 || count(Pauli::Y) % 2 == 1 {
        return Ok(TemplateValue {
            value: 0.0,
            vanishes_by_parity: true,
        });
    }
    let sites = [0i64, a as i64, (a + b) as i64, (a + b + d) as i64];
    let (word, pos): (Vec<Pauli>, Vec<i64>) = labels
        .iter()
        .zip(sites)
        .filter(|(p, _)| **p != Pauli::I)
        .map(|(p, s)| (*p, s))
        .unzip();
    let word = format_labels(&word);
    let layout = layout(&word, &pos).ok_or_else(|| Error::InvalidParameter(format!("no template for pattern `{word}`")))?;
    Ok(TemplateValue {
        value: evaluate_layout(&layout, g)?,
        vanishes_by_parity: false,
    })
}

/// All four-site label patterns with an even number of `x` and of `y`.
/// `xyxy` and `yxyx` are among them but vanish identically.
pub fn nonvanishing_patterns() -> Vec<[Pauli; 4]> {
    let mut out = Vec::new();
    for &p in &Pauli::ALL {
        for &q in &Pauli::ALL {
            for &r in &Pauli::ALL {
                for &s in &Pauli::ALL {
                    let w = [p, q, r, s];
                    let c = |t| w.iter().filter(|&&l| l == t).count();
                    if c(Pauli::X) % 2 == 0 && c(Pauli::Y) % 2 == 0 {
                        out.push(w);
                    }
                }
            }
        }
    }
    out
}
