//! Genuine multiparticle negativity via fully decomposable witnesses:
//! `N_ρ = −min tr(Wρ)` over `W = P_m + Q_m^{T_m}` with `0 ⪯ P_m, Q_m ⪯ 𝟙`
//! for every bipartition `m`.
//!
//! Only real symmetric `W, P_m, Q_m` are used. When `ρ` commutes with
//! `Z^{⊗n}` the search is further restricted to parity-preserving matrices,
//! which splits every block in two.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::rdm::{validate_state, DensityMatrix};
use crate::sdp::{self, Block, Entry, Problem, Settings};

pub const DEFAULT_TOL: f64 = 1e-9;

/// One side of a bipartition of the parties.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bipartition {
    subset: Vec<usize>,
    parties: usize,
}

impl Bipartition {
    /// Canonical form: the smaller side, or the side holding party 0 on a tie.
    pub fn new(mut subset: Vec<usize>, parties: usize) -> Result<Self> {
        subset.sort_unstable();
        subset.dedup();
        if subset.is_empty() || subset.len() >= parties || subset.iter().any(|&p| p >= parties) {
            return Err(Error::InvalidParameter(format!(
                "{subset:?} is not a nonempty proper subset of {parties} parties"
            )));
        }
        let complement: Vec<usize> = (0..parties).filter(|p| !subset.contains(p)).collect();
        let pick_complement =
            complement.len() < subset.len() || (complement.len() == subset.len() && complement[0] == 0);
        Ok(Self {
            subset: if pick_complement { complement } else { subset },
            parties,
        })
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    /// Bit mask of the subset in the qubit index convention (party 0 most significant).
    pub fn mask(&self) -> usize {
        self.subset.iter().fold(0, |m, &p| m | 1 << (self.parties - 1 - p))
    }

    /// All distinct bipartitions: 3 for three parties, 7 for four.
    pub fn all(parties: usize) -> Vec<Self> {
        let mut out: Vec<Self> = (1..(1usize << parties) - 1)
            .map(|bits| {
                let subset = (0..parties).filter(|p| bits >> p & 1 == 1).collect();
                Self::new(subset, parties).unwrap()
            })
            .collect();
        out.sort();
        out.dedup();
        out.sort_by(|a, b| a.subset.len().cmp(&b.subset.len()).then(a.subset.cmp(&b.subset)));
        out
    }

    /// The same cut after relabelling party `p` as `perm⁻¹(p)`, matching
    /// [`DensityMatrix::permute_parties`].
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let subset = self
            .subset
            .iter()
            .map(|&p| perm.iter().position(|&q| q == p).unwrap())
            .collect();
        Self::new(subset, self.parties)
    }
}

impl fmt::Display for Bipartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |p: usize| (b'A' + p as u8) as char;
        let rest: String = (0..self.parties).filter(|p| !self.subset.contains(p)).map(name).collect();
        let side: String = self.subset.iter().map(|&p| name(p)).collect();
        write!(f, "{side}|{rest}")
    }
}

/// Partial transpose on the parties in `subset` for local dimensions `dims`.
pub fn partial_transpose(m: &DMatrix<f64>, subset: &[usize], dims: &[usize]) -> Result<DMatrix<f64>> {
    let d: usize = dims.iter().product();
    if !m.is_square() || m.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix for local dimensions {dims:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    if subset.iter().any(|&p| p >= dims.len()) {
        return Err(Error::InvalidParameter(format!("subset {subset:?} exceeds {} parties", dims.len())));
    }
    let digits = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            out[k] = idx % dims[k];
            idx /= dims[k];
        }
        out
    };
    let index = |ds: &[usize]| ds.iter().zip(dims).fold(0, |acc, (&x, &n)| acc * n + x);
    let mut out = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let (mut dr, mut dc) = (digits(r), digits(c));
            for &p in subset {
                std::mem::swap(&mut dr[p], &mut dc[p]);
            }
            out[(index(&dr), index(&dc))] = m[(r, c)];
        }
    }
    Ok(out)
}

/// Qubit partial transpose through a bit mask.
fn pt_indices(r: usize, c: usize, mask: usize) -> (usize, usize) {
    ((r & !mask) | (c & mask), (c & !mask) | (r & mask))
}

pub fn partial_transpose_qubits(m: &DMatrix<f64>, b: &Bipartition) -> DMatrix<f64> {
    let mask = b.mask();
    let d = m.nrows();
    let mut out = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let (r2, c2) = pt_indices(r, c, mask);
            out[(r2, c2)] = m[(r, c)];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessDecomposition {
    pub bipartitions: Vec<Bipartition>,
    pub w: DMatrix<f64>,
    pub p: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativityResult {
    pub value: f64,
    /// `−tr(Wρ)` at the returned witness, before clamping at zero.
    pub raw_value: f64,
    pub duality_gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub parity_reduced: bool,
    pub witness: WitnessDecomposition,
}

fn parity_symmetric(rho: &DMatrix<f64>) -> bool {
    let d = rho.nrows();
    let scale = rho.amax().max(1.0);
    (0..d).all(|r| {
        (0..d).all(|c| (r.count_ones() + c.count_ones()) % 2 == 0 || rho[(r, c)].abs() <= 1e-14 * scale)
    })
}

/// Coordinates of the symmetric variable space.
struct Coordinates {
    sectors: Vec<Vec<usize>>,
    /// (sector, local index) of each basis index
    place: Vec<(usize, usize)>,
    coords: Vec<(usize, usize)>,
}

impl Coordinates {
    fn new(d: usize, parity: bool) -> Self {
        let sectors: Vec<Vec<usize>> = if parity {
            vec![
                (0..d).filter(|i| i.count_ones() % 2 == 0).collect(),
                (0..d).filter(|i| i.count_ones() % 2 == 1).collect(),
            ]
        } else {
            vec![(0..d).collect()]
        };
        let mut place = vec![(0, 0); d];
        for (t, sec) in sectors.iter().enumerate() {
            for (k, &i) in sec.iter().enumerate() {
                place[i] = (t, k);
            }
        }
        let mut coords = Vec::new();
        for sec in &sectors {
            for (a, &r) in sec.iter().enumerate() {
                for &c in &sec[a..] {
                    coords.push((r, c));
                }
            }
        }
        Self {
            sectors,
            place,
            coords,
        }
    }

    fn len(&self) -> usize {
        self.coords.len()
    }

    fn assemble(&self, vals: &[f64]) -> DMatrix<f64> {
        let d = self.place.len();
        let mut m = DMatrix::zeros(d, d);
        for (&(r, c), &v) in self.coords.iter().zip(vals) {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }
}

fn build_problem(rho: &DMatrix<f64>, cuts: &[Bipartition], co: &Coordinates) -> Problem {
    let nc = co.len();
    let mut b = vec![0.0; nc * (1 + cuts.len())];
    for (i, &(r, c)) in co.coords.iter().enumerate() {
        b[i] = -if r == c { rho[(r, r)] } else { rho[(r, c)] + rho[(c, r)] };
    }
    let mut blocks = Vec::new();
    for (m, cut) in cuts.iter().enumerate() {
        let mask = cut.mask();
        let q0 = nc * (1 + m);
        for (t, sec) in co.sectors.iter().enumerate() {
            let n = sec.len();
            let mut w_terms = Vec::new();
            let mut qt_terms = Vec::new();
            let mut q_terms = Vec::new();
            for (i, &(r, c)) in co.coords.iter().enumerate() {
                let ((tr, lr), (_, lc)) = (co.place[r], co.place[c]);
                if tr == t {
                    w_terms.push((i, lr, lc));
                    q_terms.push((q0 + i, lr, lc));
                }
                let (r2, c2) = pt_indices(r, c, mask);
                let ((tr2, lr2), (tc2, lc2)) = (co.place[r2], co.place[c2]);
                debug_assert_eq!(tr2, tc2);
                if tr2 == t {
                    qt_terms.push((q0 + i, lr2, lc2));
                }
            }
            let entries = |terms: &[(usize, usize, usize)], coef: f64| {
                terms
                    .iter()
                    .map(move |&(var, r, s)| Entry { var, r, s, coef })
                    .collect::<Vec<_>>()
            };
            // P_m = W − Q_m^{T_m}
            let mut p = entries(&w_terms, -1.0);
            p.extend(entries(&qt_terms, 1.0));
            let mut ip = entries(&w_terms, 1.0);
            ip.extend(entries(&qt_terms, -1.0));
            for (c, e) in [(0.0, p), (1.0, ip), (0.0, entries(&q_terms, -1.0)), (1.0, entries(&q_terms, 1.0))] {
                blocks.push(Block {
                    size: n,
                    c,
                    group: Some(m),
                    entries: e,
                });
            }
        }
    }
    Problem {
        shared: nc,
        groups: (0..cuts.len()).map(|m| nc * (1 + m)..nc * (2 + m)).collect(),
        b,
        blocks,
    }
}

fn start_point(co: &Coordinates, cuts: usize) -> Vec<f64> {
    let nc = co.len();
    let mut y = vec![0.0; nc * (1 + cuts)];
    for (i, &(r, c)) in co.coords.iter().enumerate() {
        if r == c {
            y[i] = 0.5;
            for m in 0..cuts {
                y[nc * (1 + m) + i] = 0.25;
            }
        }
    }
    y
}

/// `N_ρ` for a three- or four-qubit state.
pub fn genuine_negativity(rho: &DensityMatrix, tol: f64) -> Result<NegativityResult> {
    genuine_negativity_with(rho, &Settings { tol, ..Default::default() })
}

pub fn genuine_negativity_with(rho: &DensityMatrix, settings: &Settings) -> Result<NegativityResult> {
    let n = rho.parties();
    if !(2..=4).contains(&n) {
        return Err(Error::InvalidParameter(format!("expected 2 to 4 qubits, got {n}")));
    }
    let report = validate_state(rho, 1e-8);
    if !report.passed {
        return Err(Error::Unphysical {
            trace_deviation: report.trace_deviation,
            asymmetry: report.asymmetry,
            min_eigenvalue: report.min_eigenvalue,
        });
    }
    let m = rho.matrix();
    let cuts = Bipartition::all(n);
    let parity = parity_symmetric(m);
    let co = Coordinates::new(rho.dim(), parity);
    let problem = build_problem(m, &cuts, &co);
    let sol = sdp::solve(&problem, &start_point(&co, cuts.len()), settings)?;

    let nc = co.len();
    let w = co.assemble(&sol.y[..nc]);
    let q: Vec<DMatrix<f64>> = (0..cuts.len())
        .map(|k| co.assemble(&sol.y[nc * (1 + k)..nc * (2 + k)]))
        .collect();
    let p = cuts.iter().zip(&q).map(|(c, qm)| &w - partial_transpose_qubits(qm, c)).collect();
    let raw = -(&w * m).trace();
    Ok(NegativityResult {
        value: raw.max(0.0),
        raw_value: raw,
        duality_gap: sol.gap(),
        status: match sol.status {
            sdp::Status::Optimal => SolveStatus::Optimal,
            sdp::Status::Inaccurate => SolveStatus::Inaccurate,
        },
        iterations: sol.iterations,
        parity_reduced: parity,
        witness: WitnessDecomposition {
            bipartitions: cuts,
            w,
            p,
            q,
        },
    })
}

/// Outcome of re-checking a witness without solver state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub passed: bool,
    pub decomposition_residual: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub value_mismatch: f64,
    pub violations: Vec<String>,
}

pub fn verify_witness(res: &NegativityResult, rho: &DensityMatrix, tol: f64) -> WitnessReport {
    let wd = &res.witness;
    let mut violations = Vec::new();
    let d = rho.dim();
    let mut residual: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    if wd.w.nrows() != d || wd.p.len() != wd.bipartitions.len() || wd.q.len() != wd.bipartitions.len() {
        violations.push("witness dimensions do not match the state".into());
    } else {
        for (k, cut) in wd.bipartitions.iter().enumerate() {
            let r = (&wd.w - &wd.p[k] - partial_transpose_qubits(&wd.q[k], cut)).amax();
            residual = residual.max(r);
            if r > tol {
                violations.push(format!("W ≠ P + Q^T for {cut}: residual {r:.3e}"));
            }
            for (name, mat) in [("P", &wd.p[k]), ("Q", &wd.q[k])] {
                let asym = (mat - mat.transpose()).amax();
                if asym > tol {
                    violations.push(format!("{name} for {cut} is not symmetric ({asym:.3e})"));
                }
                let (vals, _) = sym_eigen(mat);
                let (a, b) = (vals[0], vals[vals.len() - 1]);
                lo = lo.min(a);
                hi = hi.max(b);
                if a < -tol || b > 1.0 + tol {
                    violations.push(format!("{name} for {cut} has eigenvalues in [{a:.6}, {b:.6}]"));
                }
            }
        }
    }
    let direct = if wd.w.nrows() == d { -(&wd.w * rho.matrix()).trace() } else { f64::NAN };
    let mismatch = (direct.max(0.0) - res.value).abs();
    if !(mismatch <= res.duality_gap + tol) {
        violations.push(format!("reported value {} but −tr(Wρ) = {direct}", res.value));
    }
    WitnessReport {
        passed: violations.is_empty(),
        decomposition_residual: residual,
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        value_mismatch: mismatch,
        violations,
    }
}
