//! Exact diagonalization of the periodic spin chain for small odd `L`.
//!
//! `H = −Σ_i [λ/4((1+γ) X_i X_{i+1} + (1−γ) Y_i Y_{i+1}) + ½ Z_i]`.
//! Basis states are bit strings with site 0 as the most significant bit and
//! bit value 0 meaning `σ^z = +1`. `H` conserves `Π Z_i`, so each parity
//! sector is solved separately; the ground state is the lower of the two
//! sector minima and the distance to the other one is reported as the gap.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rdm::DensityMatrix;
use crate::wick::{Pauli, PauliString};

/// Largest chain handled.
pub const MAX_SITES: usize = 15;
/// Chains up to this size use a dense sector eigensolve; larger ones use Lanczos.
pub const DENSE_MAX_SITES: usize = 7;

const LANCZOS_TOL: f64 = 1e-13;
const LANCZOS_MAX_ITER: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinGroundState {
    pub sites: usize,
    pub params: ModelParams,
    pub energy: f64,
    /// Lowest energy in the opposite parity sector minus `energy`.
    pub gap: f64,
    /// `‖Hψ − Eψ‖`.
    pub residual: f64,
    pub solver: Solver,
    /// Set when `gap < 1e−12`.
    pub near_degenerate: bool,
    #[serde(skip)]
    pub amplitudes: Vec<f64>,
}

struct SpinHamiltonian {
    l: usize,
    diag: Vec<f64>,
    same: f64,
    diff: f64,
}

impl SpinHamiltonian {
    fn new(params: &ModelParams, l: usize) -> Self {
        let n = 1usize << l;
        let diag = (0..n).map(|s: usize| -0.5 * (l as f64 - 2.0 * s.count_ones() as f64)).collect();
        let (lam, gam) = (params.lambda(), params.gamma());
        Self {
            l,
            diag,
            same: -lam / 4.0 * ((1.0 + gam) - (1.0 - gam)),
            diff: -lam / 4.0 * ((1.0 + gam) + (1.0 - gam)),
        }
    }

    fn bond_mask(&self, i: usize) -> (usize, usize) {
        let j = (i + 1) % self.l;
        (1 << (self.l - 1 - i), 1 << (self.l - 1 - j))
    }

    /// Off-diagonal element for flipping bond `(mi, mj)` out of state `s`.
    fn flip_amp(&self, s: usize, mi: usize, mj: usize) -> f64 {
        if ((s & mi) == 0) == ((s & mj) == 0) {
            self.same
        } else {
            self.diff
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (s, (yv, &xv)) in y.iter_mut().zip(x).enumerate() {
            *yv = self.diag[s] * xv;
        }
        for i in 0..self.l {
            let (mi, mj) = self.bond_mask(i);
            let m = mi | mj;
            for (s, &xv) in x.iter().enumerate() {
                if xv != 0.0 {
                    y[s ^ m] += self.flip_amp(s, mi, mj) * xv;
                }
            }
        }
    }
}

fn parity(s: usize) -> usize {
    (s.count_ones() & 1) as usize
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lowest eigenpair of `h` restricted to the sector of parity `sector`.
fn dense_sector(h: &SpinHamiltonian, sector: usize) -> (f64, Vec<f64>) {
    let n = 1usize << h.l;
    let states: Vec<usize> = (0..n).filter(|&s| parity(s) == sector).collect();
    let mut index = vec![usize::MAX; n];
    for (k, &s) in states.iter().enumerate() {
        index[s] = k;
    }
    let d = states.len();
    let mut m = DMatrix::zeros(d, d);
    for (k, &s) in states.iter().enumerate() {
        m[(k, k)] += h.diag[s];
        for i in 0..h.l {
            let (mi, mj) = h.bond_mask(i);
            m[(index[s ^ mi ^ mj], k)] += h.flip_amp(s, mi, mj);
        }
    }
    let eig = SymmetricEigen::new(m);
    let (k0, &e0) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a: &(usize, &f64), b: &(usize, &f64)| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let mut psi = vec![0.0; n];
    for (k, &s) in states.iter().enumerate() {
        psi[s] = eig.eigenvectors[(k, k0)];
    }
    (e0, psi)
}

/// Lanczos with full reorthogonalization from the uniform sector vector.
fn lanczos_sector(h: &SpinHamiltonian, sector: usize) -> Result<(f64, Vec<f64>)> {
    let n = 1usize << h.l;
    let mut v0: Vec<f64> = (0..n).map(|s| if parity(s) == sector { 1.0 } else { 0.0 }).collect();
    let norm = dot(&v0, &v0).sqrt();
    v0.iter_mut().for_each(|x| *x /= norm);
    let dim = n / 2;
    let max_iter = LANCZOS_MAX_ITER.min(dim);

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut ritz: Option<(f64, DVector<f64>)> = None;

    for j in 0..max_iter {
        h.apply(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alphas.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();

        let k = alphas.len();
        let t = DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alphas[r]
            } else if r + 1 == c {
                betas.get(r).copied().unwrap_or(0.0)
            } else if c + 1 == r {
                betas.get(c).copied().unwrap_or(0.0)
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (i0, &e0) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap();
        let y = eig.eigenvectors.column(i0).into_owned();
        let estimate = b * y[k - 1].abs();
        ritz = Some((e0, y));
        if estimate < LANCZOS_TOL * e0.abs().max(1.0) || b < 1e-14 {
            break;
        }
        betas.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }

    let (e0, y) = ritz.ok_or_else(|| Error::Eigensolver("Lanczos produced no iterate".into()))?;
    let mut psi = vec![0.0; n];
    for (coef, v) in y.iter().zip(&basis) {
        psi.iter_mut().zip(v).for_each(|(p, x)| *p += coef * x);
    }
    let norm = dot(&psi, &psi).sqrt();
    psi.iter_mut().for_each(|x| *x /= norm);
    Ok((e0, psi))
}

fn residual(h: &SpinHamiltonian, e: f64, psi: &[f64]) -> f64 {
    let mut hpsi = vec![0.0; psi.len()];
    h.apply(psi, &mut hpsi);
    hpsi.iter().zip(psi).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt()
}

/// Ground state of a finite chain, `L ≤ 15`.
pub fn exact_ground_state(params: &ModelParams) -> Result<SpinGroundState> {
    let l = params
        .size()
        .finite()
        .ok_or_else(|| Error::InvalidParameter("exact diagonalization needs a finite chain".into()))?;
    if l > MAX_SITES {
        return Err(Error::InvalidParameter(format!("L = {l} exceeds the limit of {MAX_SITES}")));
    }
    let h = SpinHamiltonian::new(params, l);
    let solver = if l <= DENSE_MAX_SITES { Solver::Dense } else { Solver::Lanczos };
    let solve = |sector| match solver {
        Solver::Dense => Ok(dense_sector(&h, sector)),
        Solver::Lanczos => lanczos_sector(&h, sector),
    };
    let (e_even, psi_even) = solve(0)?;
    let (e_odd, psi_odd) = solve(1)?;
    let (energy, mut amplitudes, other) = if e_even <= e_odd {
        (e_even, psi_even, e_odd)
    } else {
        (e_odd, psi_odd, e_even)
    };
    let lead = amplitudes
        .iter()
        .copied()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap_or(1.0);
    if lead < 0.0 {
        amplitudes.iter_mut().for_each(|x| *x = -*x);
    }
    let res = residual(&h, energy, &amplitudes);
    if res > 1e-9 {
        return Err(Error::Eigensolver(format!("ground state residual {res:.3e}")));
    }
    let gap = other - energy;
    Ok(SpinGroundState {
        sites: l,
        params: *params,
        energy,
        gap,
        residual: res,
        solver,
        near_degenerate: gap < 1e-12,
        amplitudes,
    })
}

/// `⟨ψ|P|ψ⟩` for a Pauli string acting on the chain.
pub fn pauli_expectation(state: &SpinGroundState, ps: &PauliString) -> Result<f64> {
    let l = state.sites;
    if ps.sites().iter().any(|&s| s >= l) {
        return Err(Error::InvalidParameter(format!("sites {:?} outside a chain of {l}", ps.sites())));
    }
    if ps.count(Pauli::Y) % 2 == 1 {
        // Hermitian with an imaginary real-basis representation: zero on real states
        return Ok(0.0);
    }
    let mut flip = 0usize;
    let mut zmask = 0usize;
    let mut ymask = 0usize;
    for (site, p) in ps.support() {
        let m = 1 << (l - 1 - site);
        match p {
            Pauli::X => flip |= m,
            Pauli::Y => {
                flip |= m;
                ymask |= m;
            }
            Pauli::Z => zmask |= m,
            Pauli::I => {}
        }
    }
    // Y|b⟩ = i(−1)^b |1−b⟩
    let base = if (ps.count(Pauli::Y) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let psi = &state.amplitudes;
    let mut acc = 0.0;
    for (s, &amp) in psi.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        let neg = ((s & zmask).count_ones() + (s & ymask).count_ones()) & 1;
        let v = if neg == 1 { -amp } else { amp };
        acc += psi[s ^ flip] * v;
    }
    Ok(base * acc)
}

/// Reduced state on `sites` (tensor order as listed).
pub fn partial_trace(state: &SpinGroundState, sites: &[usize]) -> Result<DensityMatrix> {
    let l = state.sites;
    let k = sites.len();
    if k == 0 || k >= l || sites.iter().any(|&s| s >= l) {
        return Err(Error::InvalidParameter(format!("cannot keep sites {sites:?} of a chain of {l}")));
    }
    for (i, a) in sites.iter().enumerate() {
        if sites[..i].contains(a) {
            return Err(Error::InvalidParameter(format!("repeated site in {sites:?}")));
        }
    }
    let rest: Vec<usize> = (0..l).filter(|s| !sites.contains(s)).collect();
    let bit = |s: usize, site: usize| (s >> (l - 1 - site)) & 1;
    let mut psi = DMatrix::zeros(1 << k, 1 << (l - k));
    for (s, &amp) in state.amplitudes.iter().enumerate() {
        let a = sites.iter().fold(0, |acc, &q| (acc << 1) | bit(s, q));
        let b = rest.iter().fold(0, |acc, &q| (acc << 1) | bit(s, q));
        psi[(a, b)] = amp;
    }
    DensityMatrix::new(&psi * psi.transpose(), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ground_energy, ChainSize};
    use crate::wick::parse_labels;

    fn chain(lambda: f64, l: usize) -> ModelParams {
        ModelParams::ising(lambda, ChainSize::Finite(l)).unwrap()
    }

    #[test]
    fn field_only_product_state() {
        let s = exact_ground_state(&chain(0.0, 9)).unwrap();
        assert!((s.energy + 4.5).abs() < 1e-12);
        assert!((s.amplitudes[0] - 1.0).abs() < 1e-12);
        let rho = partial_trace(&s, &[0, 1, 2]).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_and_lanczos_agree() {
        for &lambda in &[0.3, 1.0, 1.7] {
            let p = ModelParams::new(lambda, 0.6, ChainSize::Finite(7)).unwrap();
            let h = SpinHamiltonian::new(&p, 7);
            for sector in 0..2 {
                let (e1, v1) = dense_sector(&h, sector);
                let (e2, v2) = lanczos_sector(&h, sector).unwrap();
                assert!((e1 - e2).abs() < 1e-11, "{e1} {e2}");
                assert!((dot(&v1, &v2).abs() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn matches_free_fermion_energy() {
        for &lambda in &[0.2, 0.6, 1.0, 1.4] {
            for l in [5usize, 9, 11] {
                let p = chain(lambda, l);
                let s = exact_ground_state(&p).unwrap();
                let e = ground_energy(&p).unwrap();
                assert!((s.energy - e).abs() < 1e-10, "λ={lambda} L={l}: {} vs {e}", s.energy);
                assert!(s.residual < 1e-10);
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let s = exact_ground_state(&chain(1.0, 11)).unwrap();
        let a = partial_trace(&s, &[0, 1, 2]).unwrap();
        let b = partial_trace(&s, &[2, 3, 4]).unwrap();
        assert!((a.matrix() - b.matrix()).abs().max() < 1e-10);
    }

    #[test]
    fn pauli_expectation_matches_rdm() {
        let s = exact_ground_state(&chain(0.8, 9)).unwrap();
        let rho = partial_trace(&s, &[1, 2, 4]).unwrap();
        let labels = parse_labels("yzy").unwrap();
        let mut op = DMatrix::zeros(8, 8);
        crate::rdm::add_pauli_tensor(&mut op, &labels, 1.0);
        let direct = pauli_expectation(&s, &PauliString::new(vec![1, 2, 4], labels).unwrap()).unwrap();
        assert!(((rho.matrix() * op).trace() - direct).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(exact_ground_state(&ModelParams::ising(1.0, ChainSize::Thermodynamic).unwrap()).is_err());
        assert!(exact_ground_state(&chain(1.0, 17)).is_err());
    }
}
