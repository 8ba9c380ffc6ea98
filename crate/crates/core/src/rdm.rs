//! Reduced three- and four-qubit density matrices of the ground state,
//! assembled from Pauli expectations.
//!
//! Basis convention: tensor factors ordered left to right by site (first
//! site is the most significant bit); `|0⟩` is the `σ^z = +1` eigenstate.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correlators::{table_for_span, CorrelatorTable};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, qubit_bit};
use crate::model::{ChainSize, ModelParams};
use crate::wick::{spin_expectation, Pauli, PauliString};

/// Human-readable statement of the basis convention, echoed into outputs.
pub const BASIS_CONVENTION: &str =
    "tensor factors ordered by site, first site most significant; |0> is the sigma_z=+1 eigenstate";

/// Site spacings `(α, β)` or `(α, β, δ)` of a reduced state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arrangement {
    spacings: Vec<usize>,
}

impl Arrangement {
    pub fn new(spacings: Vec<usize>) -> Result<Self> {
        if !(2..=3).contains(&spacings.len()) {
            return Err(Error::InvalidParameter(format!(
                "an arrangement has 2 or 3 spacings, got {}",
                spacings.len()
            )));
        }
        if spacings.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter(format!("spacings must be positive, got {spacings:?}")));
        }
        Ok(Self { spacings })
    }

    pub fn spacings(&self) -> &[usize] {
        &self.spacings
    }

    pub fn parties(&self) -> usize {
        self.spacings.len() + 1
    }

    /// Site offsets relative to the first site.
    pub fn sites(&self) -> Vec<usize> {
        let mut out = vec![0];
        for s in &self.spacings {
            out.push(out.last().unwrap() + s);
        }
        out
    }

    pub fn span(&self) -> usize {
        self.spacings.iter().sum()
    }

    /// Spacings read right to left.
    pub fn mirrored(&self) -> Self {
        Self {
            spacings: self.spacings.iter().rev().copied().collect(),
        }
    }

    /// Representative with `α ≤ β` (three sites) or `α ≤ δ` (four sites).
    pub fn canonical(&self) -> Self {
        let m = self.mirrored();
        if m.spacings < self.spacings {
            m
        } else {
            self.clone()
        }
    }

    pub fn fits(&self, size: ChainSize) -> bool {
        match size {
            ChainSize::Finite(l) => self.span() < l,
            ChainSize::Thermodynamic => true,
        }
    }
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.spacings.iter().map(|s| s.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl std::str::FromStr for Arrangement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let spacings = t
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidParameter(format!("bad arrangement `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spacings)
    }
}

/// Where a reduced state came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMeta {
    pub params: ModelParams,
    pub arrangement: Arrangement,
}

/// Real symmetric qubit density matrix of dimension `2^parties`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<f64>,
    parties: usize,
    meta: Option<StateMeta>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<f64>, parties: usize) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != 1 << parties {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for {} qubits",
                matrix.nrows(),
                matrix.ncols(),
                parties
            )));
        }
        Ok(Self {
            matrix,
            parties,
            meta: None,
        })
    }

    /// Infers the number of qubits from the dimension.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!("dimension {n} is not a power of two")));
        }
        Self::new(matrix, n.trailing_zeros() as usize)
    }

    pub fn maximally_mixed(parties: usize) -> Self {
        let d = 1 << parties;
        Self::new(DMatrix::identity(d, d) / d as f64, parties).unwrap()
    }

    /// Projector onto a (not necessarily normalized) real vector.
    pub fn pure(psi: &[f64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        let n2 = v.norm_squared();
        if n2 == 0.0 {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        Self::from_matrix(&v * v.transpose() / n2)
    }

    pub fn with_meta(mut self, meta: StateMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn meta(&self) -> Option<&StateMeta> {
        self.meta.as_ref()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.component_mul(&self.matrix).sum()
    }

    /// Mixture `(1 − p) ρ + p 𝟙/d`.
    pub fn mixed_with_identity(&self, p: f64) -> Self {
        let d = self.dim();
        Self {
            matrix: &self.matrix * (1.0 - p) + DMatrix::identity(d, d) * (p / d as f64),
            parties: self.parties,
            meta: None,
        }
    }

    /// Eigenvalues below `floor` raised to `floor`, then renormalized.
    pub fn clipped(&self, floor: f64) -> Self {
        let m = crate::linalg::sym_apply(&self.matrix, |x| x.max(floor));
        let tr = m.trace();
        Self {
            matrix: m / tr,
            parties: self.parties,
            meta: self.meta.clone(),
        }
    }

    /// Reorders tensor factors: party `k` of the result is party `perm[k]` of `self`.
    pub fn permute_parties(&self, perm: &[usize]) -> Result<Self> {
        let n = self.parties;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation of {n} parties")));
        }
        let map = |idx: usize| -> usize {
            (0..n).fold(0, |acc, k| (acc << 1) | qubit_bit(idx, perm[k], n))
        };
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                out[(map(r), map(c))] = self.matrix[(r, c)];
            }
        }
        Ok(Self {
            matrix: out,
            parties: n,
            meta: None,
        })
    }

    /// Traces out the listed parties.
    pub fn trace_out(&self, drop: &[usize]) -> Result<Self> {
        let n = self.parties;
        if drop.iter().any(|&p| p >= n) || drop.len() >= n {
            return Err(Error::InvalidParameter(format!("cannot trace out {drop:?} of {n} parties")));
        }
        let keep: Vec<usize> = (0..n).filter(|p| !drop.contains(p)).collect();
        let k = keep.len();
        let d = self.dim();
        let kept = |idx: usize| keep.iter().fold(0, |acc, &p| (acc << 1) | qubit_bit(idx, p, n));
        let rest = |idx: usize| drop.iter().fold(0, |acc, &p| (acc << 1) | qubit_bit(idx, p, n));
        let mut out = DMatrix::zeros(1 << k, 1 << k);
        for r in 0..d {
            for c in 0..d {
                if rest(r) == rest(c) {
                    out[(kept(r), kept(c))] += self.matrix[(r, c)];
                }
            }
        }
        Self::new(out, k)
    }
}

/// Physicality diagnostics of a candidate density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trace_deviation: f64,
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

pub fn validate_matrix(m: &DMatrix<f64>, tol: f64) -> ValidationReport {
    let trace_deviation = (m.trace() - 1.0).abs();
    let asymmetry = (m - m.transpose()).abs().max();
    let min_eigenvalue = min_eigenvalue(m);
    ValidationReport {
        trace_deviation,
        asymmetry,
        min_eigenvalue,
        passed: trace_deviation <= tol && asymmetry <= tol && min_eigenvalue >= -tol,
    }
}

pub fn validate_state(rho: &DensityMatrix, tol: f64) -> ValidationReport {
    validate_matrix(rho.matrix(), tol)
}

/// Adds `coeff · σ^{labels}` to `out` (real representation; the number of
/// `y` factors must be even).
pub fn add_pauli_tensor(out: &mut DMatrix<f64>, labels: &[Pauli], coeff: f64) {
    let n = labels.len();
    let d = 1 << n;
    let mut flip = 0usize;
    let mut y_count = 0;
    for (k, &p) in labels.iter().enumerate() {
        if matches!(p, Pauli::X | Pauli::Y) {
            flip |= 1 << (n - 1 - k);
        }
        if p == Pauli::Y {
            y_count += 1;
        }
    }
    debug_assert!(y_count % 2 == 0);
    let base = if (y_count / 2) % 2 == 0 { coeff } else { -coeff };
    for r in 0..d {
        let mut v = base;
        for (k, &p) in labels.iter().enumerate() {
            let bit = qubit_bit(r, k, n);
            match p {
                // Y_{r,1-r} = i (-1)^{1+r}; the i's were collected into `base`
                Pauli::Z | Pauli::Y if (bit == 1) ^ (p == Pauli::Y) => v = -v,
                _ => {}
            }
        }
        out[(r, r ^ flip)] += v;
    }
}

/// All label words of length `n` whose expectation can be nonzero.
pub fn allowed_words(n: usize) -> Vec<Vec<Pauli>> {
    let mut words = vec![Vec::new()];
    for _ in 0..n {
        words = words
            .into_iter()
            .flat_map(|w| {
                Pauli::ALL.iter().map(move |&p| {
                    let mut v = w.clone();
                    v.push(p);
                    v
                })
            })
            .collect();
    }
    words.retain(|w| {
        w.iter().filter(|&&p| p == Pauli::X).count() % 2 == 0 && w.iter().filter(|&&p| p == Pauli::Y).count() % 2 == 0
    });
    words
}

/// Assemble the reduced state from a prepared correlator table.
pub fn rdm_from_table(g: &CorrelatorTable, arr: &Arrangement) -> Result<DMatrix<f64>> {
    let sites = arr.sites();
    let n = sites.len();
    let d = 1 << n;
    let mut rho = DMatrix::zeros(d, d);
    for word in allowed_words(n) {
        let ps = PauliString::new(sites.clone(), word.clone())?;
        let value = spin_expectation(&ps, g)?;
        if value != 0.0 {
            add_pauli_tensor(&mut rho, &word, value / d as f64);
        }
    }
    Ok(rho)
}

/// Reduced density matrix of the ground state on the sites of `arr`.
pub fn build_rdm(params: &ModelParams, arr: &Arrangement, tol: f64) -> Result<DensityMatrix> {
    if !arr.fits(params.size()) {
        return Err(Error::InvalidParameter(format!(
            "arrangement {arr} spans {} sites, more than the chain of {}",
            arr.span() + 1,
            params.size()
        )));
    }
    let g = table_for_span(params, arr.span() as i64, tol.min(crate::correlators::DEFAULT_TOL))?;
    let rho = rdm_from_table(&g, arr)?;
    let report = validate_matrix(&rho, tol.max(1e-9));
    if !report.passed {
        return Err(Error::Unphysical {
            trace_deviation: report.trace_deviation,
            asymmetry: report.asymmetry,
            min_eigenvalue: report.min_eigenvalue,
        });
    }
    Ok(DensityMatrix::new(rho, arr.parties())?.with_meta(StateMeta {
        params: *params,
        arrangement: arr.clone(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_tensor_matches_kronecker() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]); // Y = iJ
        let mut m = DMatrix::zeros(8, 8);
        add_pauli_tensor(&mut m, &[Pauli::Y, Pauli::Z, Pauli::Y], 1.0);
        // Y⊗Z⊗Y = (iJ)⊗Z⊗(iJ) = −J⊗Z⊗J
        let expect = -j.kronecker(&z).kronecker(&j);
        assert_eq!(m, expect);
        let mut m = DMatrix::zeros(4, 4);
        add_pauli_tensor(&mut m, &[Pauli::X, Pauli::Z], 2.0);
        assert_eq!(m, x.kronecker(&z) * 2.0);
    }

    #[test]
    fn word_counts() {
        assert_eq!(allowed_words(3).len(), 20);
        assert_eq!(allowed_words(4).len(), 72);
    }

    #[test]
    fn arrangement_basics() {
        let a: Arrangement = "(2,1)".parse().unwrap();
        assert_eq!(a.sites(), vec![0, 2, 3]);
        assert_eq!(a.canonical().spacings(), &[1, 2]);
        assert!(Arrangement::new(vec![1]).is_err());
        assert!(Arrangement::new(vec![1, 0]).is_err());
        assert!(!a.fits(ChainSize::Finite(3)));
        assert!(a.fits(ChainSize::Finite(5)));
    }

    #[test]
    fn validation() {
        let r = validate_state(&DensityMatrix::maximally_mixed(3), 1e-12);
        assert!(r.passed);
        assert!((r.min_eigenvalue - 0.125).abs() < 1e-15);
        let m = DMatrix::identity(8, 8) * (0.9 / 8.0);
        let r = validate_matrix(&m, 1e-9);
        assert!(!r.passed);
        assert!((r.trace_deviation - 0.1).abs() < 1e-12);
    }

    #[test]
    fn field_only_limit_is_pure_product() {
        let p = ModelParams::ising(0.0, ChainSize::Thermodynamic).unwrap();
        let rho = build_rdm(&p, &Arrangement::new(vec![1, 2]).unwrap(), 1e-12).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        assert!((rho.matrix()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permute_and_trace() {
        let p = ModelParams::ising(0.9, ChainSize::Thermodynamic).unwrap();
        let rho = build_rdm(&p, &Arrangement::new(vec![1, 2]).unwrap(), 1e-12).unwrap();
        let back = rho.permute_parties(&[2, 1, 0]).unwrap().permute_parties(&[2, 1, 0]).unwrap();
        assert!((back.matrix() - rho.matrix()).abs().max() < 1e-15);
        let m = rho.trace_out(&[2]).unwrap();
        assert_eq!(m.dim(), 4);
        assert!((m.matrix().trace() - 1.0).abs() < 1e-12);
        assert!(rho.permute_parties(&[0, 0, 1]).is_err());
    }
}
