//! Pauli strings on chain sites, their reduction to ordered Majorana
//! monomials, and the determinant evaluation of those monomials.
//!
//! The operator forms used for the reduction are
//!
//! ```text
//! σ^x_l = A_l Π_{i<l} A_i B_i,   σ^y_l = −i B_l Π_{i<l} A_i B_i,   σ^z_l = −A_l B_l
//! ```
//!
//! with `A_l² = 1`, `B_l² = −1` and all distinct Majoranas anticommuting.
//! Expectations computed in this frame differ from those of the spin
//! Hamiltonian's computational basis by a per-string sign, see
//! [`computational_frame_sign`].

pub mod templates;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correlators::CorrelatorTable;
use crate::error::{Error, Result};

/// Single-site Pauli label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => '1',
            Pauli::X => 'x',
            Pauli::Y => 'y',
            Pauli::Z => 'z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c.to_ascii_lowercase() {
            '1' | 'i' => Some(Pauli::I),
            'x' => Some(Pauli::X),
            'y' => Some(Pauli::Y),
            'z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// Parse a label word such as `"xx1z"`.
pub fn parse_labels(s: &str) -> Result<Vec<Pauli>> {
    s.chars()
        .map(|c| Pauli::from_symbol(c).ok_or_else(|| Error::InvalidParameter(format!("unknown Pauli label `{c}` in `{s}`"))))
        .collect()
}

pub fn format_labels(labels: &[Pauli]) -> String {
    labels.iter().map(|p| p.symbol()).collect()
}

/// Tensor product of Pauli operators on strictly increasing sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliString {
    sites: Vec<usize>,
    labels: Vec<Pauli>,
}

impl PauliString {
    pub fn new(sites: Vec<usize>, labels: Vec<Pauli>) -> Result<Self> {
        if sites.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} sites but {} labels",
                sites.len(),
                labels.len()
            )));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!("sites {sites:?} are not strictly increasing")));
        }
        Ok(Self { sites, labels })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn labels(&self) -> &[Pauli] {
        &self.labels
    }

    pub fn count(&self, p: Pauli) -> usize {
        self.labels.iter().filter(|&&l| l == p).count()
    }

    /// Non-identity factors as `(site, label)`.
    pub fn support(&self) -> impl Iterator<Item = (usize, Pauli)> + '_ {
        self.sites.iter().copied().zip(self.labels.iter().copied()).filter(|&(_, p)| p != Pauli::I)
    }

    /// Whether the ground-state symmetries force the expectation to zero:
    /// `σ^x` and `σ^y` must each appear an even number of times.
    pub fn vanishes_by_parity(&self) -> bool {
        self.count(Pauli::X) % 2 == 1 || self.count(Pauli::Y) % 2 == 1
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, p) in self.sites.iter().zip(&self.labels) {
            write!(f, "{}{}", p.symbol(), s)?;
        }
        Ok(())
    }
}

/// `sign · A_{a_1} … A_{a_k} B_{b_1} … B_{b_k}` with ascending sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ABMonomial {
    pub sign: i8,
    pub a_sites: Vec<usize>,
    pub b_sites: Vec<usize>,
}

/// Result of reducing a Pauli string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reduced {
    Monomial(ABMonomial),
    /// The expectation vanishes identically (parity or unbalanced A/B count).
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Majorana {
    A(usize),
    B(usize),
}

/// Ordered product of Majoranas with a phase `i^phase`.
struct Word {
    phase: u8,
    ops: Vec<Majorana>,
}

impl Word {
    fn new() -> Self {
        Self { phase: 0, ops: Vec::new() }
    }

    fn mul_phase(&mut self, quarter_turns: u8) {
        self.phase = (self.phase + quarter_turns) % 4;
    }

    /// Right-multiply by `op`, keeping the word normal ordered (all A before
    /// all B, ascending) and cancelling squares.
    fn push(&mut self, op: Majorana) {
        let pos = self.ops.partition_point(|&o| o <= op);
        let passed = self.ops.len() - pos;
        if passed % 2 == 1 {
            self.mul_phase(2);
        }
        if pos > 0 && self.ops[pos - 1] == op {
            self.ops.remove(pos - 1);
            if let Majorana::B(_) = op {
                self.mul_phase(2);
            }
        } else {
            self.ops.insert(pos, op);
        }
    }

    fn push_string(&mut self, below: usize) {
        for i in 0..below {
            self.push(Majorana::A(i));
            self.push(Majorana::B(i));
        }
    }
}

/// Expand each Pauli operator into Majoranas, cancel repeats and bring the
/// product into `± A…A B…B` order.
pub fn reduce_pauli_string(ps: &PauliString) -> Reduced {
    if ps.vanishes_by_parity() {
        return Reduced::Zero;
    }
    let mut w = Word::new();
    for (site, label) in ps.support() {
        match label {
            Pauli::I => {}
            Pauli::X => {
                w.push(Majorana::A(site));
                w.push_string(site);
            }
            Pauli::Y => {
                w.mul_phase(3);
                w.push(Majorana::B(site));
                w.push_string(site);
            }
            Pauli::Z => {
                w.mul_phase(2);
                w.push(Majorana::A(site));
                w.push(Majorana::B(site));
            }
        }
    }
    debug_assert!(w.phase % 2 == 0, "even Y count gives a real phase");
    let sign = if w.phase == 0 { 1 } else { -1 };
    let mut a_sites = Vec::new();
    let mut b_sites = Vec::new();
    for op in &w.ops {
        match *op {
            Majorana::A(s) => a_sites.push(s),
            Majorana::B(s) => b_sites.push(s),
        }
    }
    if a_sites.len() != b_sites.len() {
        return Reduced::Zero;
    }
    Reduced::Monomial(ABMonomial { sign, a_sites, b_sites })
}

/// Determinant via partially pivoted elimination.
pub fn determinant(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.lu().determinant()
}

/// `⟨sign · A…A B…B⟩ = sign · (−1)^{k(k−1)/2} det[G_{b_v − a_u}]`.
pub fn wick_determinant(m: &ABMonomial, g: &CorrelatorTable) -> Result<f64> {
    let k = m.a_sites.len();
    if m.b_sites.len() != k {
        return Err(Error::InvalidParameter(format!(
            "monomial has {} A and {} B operators",
            k,
            m.b_sites.len()
        )));
    }
    let mut mat = DMatrix::zeros(k, k);
    for (u, &a) in m.a_sites.iter().enumerate() {
        for (v, &b) in m.b_sites.iter().enumerate() {
            mat[(u, v)] = g.get(b as i64 - a as i64)?;
        }
    }
    let pf_sign = if (k * k.saturating_sub(1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(f64::from(m.sign) * pf_sign * determinant(mat))
}

/// Ground-state expectation of `ps` in the Majorana frame.
pub fn expectation(ps: &PauliString, g: &CorrelatorTable) -> Result<f64> {
    match reduce_pauli_string(ps) {
        Reduced::Zero => Ok(0.0),
        Reduced::Monomial(m) => wick_determinant(&m, g),
    }
}

/// Sign relating the Majorana-frame expectation of `ps` to its expectation
/// in the computational basis of the spin Hamiltonian (`|0⟩ = σ^z = +1`).
///
/// Two effects combine. The fermionic Hamiltonian is the spin Hamiltonian
/// conjugated by `Π_i σ^x_i`, which flips `σ^y` and `σ^z`. The operator forms
/// above omit the `(−1)^{l−1}` carried by the true Jordan–Wigner string of
/// `σ^x_l` and `σ^y_l`, a site-dependent sign on every `x`/`y` factor.
pub fn computational_frame_sign(ps: &PauliString) -> f64 {
    let flips = ps
        .support()
        .map(|(site, p)| match p {
            Pauli::Z => 1,
            Pauli::Y => 1 + site,
            Pauli::X => site,
            Pauli::I => 0,
        })
        .sum::<usize>();
    if flips % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Expectation of `ps` in the computational basis of the spin chain.
pub fn spin_expectation(ps: &PauliString, g: &CorrelatorTable) -> Result<f64> {
    Ok(computational_frame_sign(ps) * expectation(ps, g)?)
}
