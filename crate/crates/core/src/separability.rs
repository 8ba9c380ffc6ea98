//! Randomized certification of biseparability.
//!
//! A state is certified by an explicit decomposition
//! `ρ ∝ F⁻¹ (Σ_k p_k |ψ_k⟩⟨ψ_k| + p_tail τ) F⁻ᵀ` where every `ψ_k` is a product
//! across some bipartition, `τ` lies in the purity ball around `𝟙/D` (all
//! states there are fully separable) and `F` is a product of invertible local
//! filters. Pure states are drawn at random, scored by their overlap with the
//! current remainder, and polished by alternating maximization.
//!
//! Real states may need complex product states: a complex `ψ` enters the real
//! picture as `Re |ψ⟩⟨ψ| = ½(|ψ⟩⟨ψ| + |ψ̄⟩⟨ψ̄|)` and is recorded as that pair.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmn::Bipartition;
use crate::linalg::{min_eigenvalue, nnls, qubit_bit, sym_apply, sym_eigen};
use crate::rdm::{validate_state, DensityMatrix};

pub mod check;

pub use check::{check_certificate, CertificateCheck};

/// Strict purity bound of the separable ball for total dimension `d`.
pub fn ball_bound(d: usize) -> f64 {
    1.0 / (d as f64 - 1.0)
}

pub fn ball_check(rho: &DensityMatrix) -> bool {
    rho.purity() < ball_bound(rho.dim())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    /// One invertible 2×2 filter per party.
    pub filters: Vec<DMatrix<f64>>,
    pub filtered_state: DensityMatrix,
    /// Largest entrywise deviation of a single-party marginal from `𝟙/2`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn marginal(rho: &DMatrix<f64>, party: usize, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2, 2);
    let d = rho.nrows();
    let others = !(1usize << (n - 1 - party)) & (d - 1);
    for r in 0..d {
        for c in 0..d {
            if r & others == c & others {
                m[(qubit_bit(r, party, n), qubit_bit(c, party, n))] += rho[(r, c)];
            }
        }
    }
    m
}

/// Kronecker product of per-party operators, party 0 leftmost.
pub fn local_product(ops: &[DMatrix<f64>]) -> DMatrix<f64> {
    ops.iter().fold(DMatrix::from_element(1, 1, 1.0), |acc, f| acc.kronecker(f))
}

fn embed(f: &DMatrix<f64>, party: usize, n: usize) -> DMatrix<f64> {
    let ops: Vec<DMatrix<f64>> = (0..n)
        .map(|k| if k == party { f.clone() } else { DMatrix::identity(2, 2) })
        .collect();
    local_product(&ops)
}

/// Iterate `ρ ← F_i ρ F_iᵀ / tr` with `F_i = (2ρ_i)^{−1/2}` until every
/// single-party marginal is within `tol` of `𝟙/2`.
pub fn filter_normal_form(rho: &DensityMatrix, tol: f64, max_iter: usize) -> Result<FilterResult> {
    let n = rho.parties();
    let mut m = rho.matrix().clone();
    let mut filters = vec![DMatrix::<f64>::identity(2, 2); n];
    let deviation = |m: &DMatrix<f64>| {
        (0..n)
            .map(|p| (marginal(m, p, n) - DMatrix::identity(2, 2) * 0.5).amax())
            .fold(0.0, f64::max)
    };
    let mut residual = deviation(&m);
    let mut iterations = 0;
    while residual > tol && iterations < max_iter {
        for p in 0..n {
            let marg = marginal(&m, p, n);
            let (vals, _) = sym_eigen(&marg);
            if vals[0] <= 1e-13 * vals[1].max(f64::MIN_POSITIVE) {
                return Err(Error::Filtering(format!(
                    "marginal of party {p} is singular (eigenvalues {:.3e}, {:.3e})",
                    vals[0], vals[1]
                )));
            }
            let f = sym_apply(&marg, |x| (2.0 * x).powf(-0.5));
            let big = embed(&f, p, n);
            m = &big * &m * big.transpose();
            let tr = m.trace();
            m /= tr;
            filters[p] = &f * &filters[p];
        }
        m = (&m + m.transpose()) * 0.5;
        iterations += 1;
        residual = deviation(&m);
        if !residual.is_finite() {
            return Err(Error::Filtering("filtering diverged".into()));
        }
    }
    Ok(FilterResult {
        filters,
        filtered_state: DensityMatrix::new(m, n)?,
        residual,
        iterations,
        converged: residual <= tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Filter when the smallest eigenvalue is below [`AUTO_FILTER_THRESHOLD`].
    Auto,
    Always,
    Never,
}

pub const AUTO_FILTER_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Subtract one pure state per step, keeping every remainder positive;
    /// candidates are scored by `⟨ψ|√ρ_k|ψ⟩`, `ε_k = ½ min(λ_min, 1/⟨ψ|ρ_k⁻¹|ψ⟩)`.
    Subtractive,
    /// Fix the tail weight and refit all weights by nonnegative least squares
    /// after each new state; only the final tail has to be positive.
    Corrective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityOptions {
    pub max_iter: usize,
    pub seed: u64,
    pub trials_per_iter: usize,
    pub filter: FilterMode,
    /// Alternating sweeps polishing the best sampled candidate; 0 disables.
    pub refine_sweeps: usize,
    pub strategy: Strategy,
    /// Sample complex product states.
    pub complex: bool,
}

impl Default for SeparabilityOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            seed: 0,
            trials_per_iter: 64,
            filter: FilterMode::Auto,
            refine_sweeps: 4,
            strategy: Strategy::Corrective,
            complex: true,
        }
    }
}

/// Share of the largest white-noise weight `D·λ_min` reserved for the tail.
pub const TAIL_SHARE: f64 = 0.5;

/// Consecutive fruitless oracle calls before the corrective search gives up.
const MAX_MISSES: usize = 200;

/// Relative safety margin on the ball test of the final tail.
const BALL_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    /// Unit vector, product across `bipartition`, in the filtered frame.
    pub state: Vec<Complex64>,
    pub bipartition: Bipartition,
}

/// `ρ ∝ F⁻¹ (Σ_k p_k |ψ_k⟩⟨ψ_k| + p_tail τ) F⁻ᵀ` with `F = ⊗ filters`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityCertificate {
    pub filters: Vec<DMatrix<f64>>,
    pub components: Vec<Component>,
    pub tail_weight: f64,
    pub tail: DensityMatrix,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparabilityOutcome {
    Certified(SeparabilityCertificate),
    Inconclusive {
        iterations: usize,
        final_purity: f64,
        reason: String,
    },
}

impl SeparabilityOutcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, Self::Certified(_))
    }

    pub fn certificate(&self) -> Option<&SeparabilityCertificate> {
        match self {
            Self::Certified(c) => Some(c),
            Self::Inconclusive { .. } => None,
        }
    }
}

struct Candidate {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    cut: Bipartition,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize, complex: bool) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..dim)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = if complex { StandardNormal.sample(rng) } else { 0.0 };
                Complex64::new(re, im)
            })
            .collect();
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Full index of `(ia, ib)` for the side/rest split of `cut`.
fn split_index(cut: &Bipartition) -> DMatrix<usize> {
    let n = cut.parties();
    let side = cut.subset();
    let rest: Vec<usize> = (0..n).filter(|p| !side.contains(p)).collect();
    let mut idx = DMatrix::zeros(1 << side.len(), 1 << rest.len());
    for full in 0..1usize << n {
        let ia = side.iter().fold(0, |acc, &p| (acc << 1) | qubit_bit(full, p, n));
        let ib = rest.iter().fold(0, |acc, &p| (acc << 1) | qubit_bit(full, p, n));
        idx[(ia, ib)] = full;
    }
    idx
}

fn product_state(cand: &Candidate) -> Vec<Complex64> {
    let idx = split_index(&cand.cut);
    let mut out = vec![Complex64::new(0.0, 0.0); idx.len()];
    for i in 0..idx.nrows() {
        for k in 0..idx.ncols() {
            out[idx[(i, k)]] = cand.a[i] * cand.b[k];
        }
    }
    out
}

/// `⟨ψ|M|ψ⟩` for real symmetric `M`.
fn overlap(m: &DMatrix<f64>, psi: &[Complex64]) -> f64 {
    let mut s = 0.0;
    for r in 0..psi.len() {
        for c in 0..psi.len() {
            s += m[(r, c)] * (psi[r].conj() * psi[c]).re;
        }
    }
    s
}

/// `Re |ψ⟩⟨ψ|`.
fn real_projector(psi: &[Complex64]) -> DMatrix<f64> {
    DMatrix::from_fn(psi.len(), psi.len(), |r, c| (psi[r] * psi[c].conj()).re)
}

fn top_eigenvector(m: DMatrix<Complex64>) -> Vec<Complex64> {
    let eig = m.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    eig.eigenvectors.column(k).iter().copied().collect()
}

/// Real unit vector with the same ray as `v` (exact when `v` is real up to phase).
fn realify(v: Vec<Complex64>) -> Vec<Complex64> {
    let k = (0..v.len()).max_by(|&p, &q| v[p].norm().total_cmp(&v[q].norm())).unwrap();
    let phase = v[k].conj() / v[k].norm();
    let w: Vec<Complex64> = v.iter().map(|x| Complex64::new((x * phase).re, 0.0)).collect();
    let norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    w.into_iter().map(|x| x / norm).collect()
}

/// Alternating maximization of `⟨a⊗b|M|a⊗b⟩` with the cut fixed.
fn refine(m: &DMatrix<f64>, cand: &mut Candidate, sweeps: usize, complex: bool) {
    let idx = split_index(&cand.cut);
    let (da, db) = idx.shape();
    let fix = |v: Vec<Complex64>| if complex { v } else { realify(v) };
    for _ in 0..sweeps {
        let ma = DMatrix::from_fn(da, da, |i, j| {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..db {
                for l in 0..db {
                    s += cand.b[k].conj() * cand.b[l] * m[(idx[(i, k)], idx[(j, l)])];
                }
            }
            s
        });
        cand.a = fix(top_eigenvector(ma));
        let mb = DMatrix::from_fn(db, db, |k, l| {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..da {
                for j in 0..da {
                    s += cand.a[i].conj() * cand.a[j] * m[(idx[(i, k)], idx[(j, l)])];
                }
            }
            s
        });
        cand.b = fix(top_eigenvector(mb));
    }
}

/// Best of `trials_per_iter` random candidates under `⟨ψ|M|ψ⟩`, then polished.
fn best_candidate(m: &DMatrix<f64>, rng: &mut ChaCha8Rng, cuts: &[Bipartition], opts: &SeparabilityOptions) -> Candidate {
    let mut best: Option<(f64, Candidate)> = None;
    for _ in 0..opts.trials_per_iter {
        let cut = cuts[rng.random_range(0..cuts.len())].clone();
        let k = cut.subset().len();
        let n = cut.parties();
        let a = unit_gaussian(rng, 1 << k, opts.complex);
        let b = unit_gaussian(rng, 1 << (n - k), opts.complex);
        let cand = Candidate { a, b, cut };
        let score = overlap(m, &product_state(&cand));
        // ties keep the lowest trial index
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    let (_, mut cand) = best.expect("at least one trial");
    refine(m, &mut cand, opts.refine_sweeps, opts.complex);
    cand
}

/// Components for a real atom `Re |ψ⟩⟨ψ|` of weight `w`.
fn push_atom(out: &mut Vec<Component>, psi: Vec<Complex64>, cut: Bipartition, w: f64) {
    if psi.iter().all(|x| x.im.abs() <= 1e-15) {
        let state = psi.into_iter().map(|x| Complex64::new(x.re, 0.0)).collect();
        out.push(Component {
            weight: w,
            state,
            bipartition: cut,
        });
    } else {
        let conj = psi.iter().map(|x| x.conj()).collect();
        out.push(Component {
            weight: 0.5 * w,
            state: psi,
            bipartition: cut.clone(),
        });
        out.push(Component {
            weight: 0.5 * w,
            state: conj,
            bipartition: cut,
        });
    }
}

enum Search {
    Done {
        components: Vec<Component>,
        tail_weight: f64,
        tail: DMatrix<f64>,
        iterations: usize,
    },
    Stuck {
        iterations: usize,
        final_purity: f64,
        reason: String,
    },
}

/// Search for a certificate of `rho`.
pub fn certify_biseparable(rho: &DensityMatrix, opts: &SeparabilityOptions) -> Result<SeparabilityOutcome> {
    if opts.max_iter == 0 || opts.trials_per_iter == 0 {
        return Err(Error::InvalidParameter("max_iter and trials_per_iter must be positive".into()));
    }
    let report = validate_state(rho, 1e-8);
    if !report.passed {
        return Err(Error::Unphysical {
            trace_deviation: report.trace_deviation,
            asymmetry: report.asymmetry,
            min_eigenvalue: report.min_eigenvalue,
        });
    }
    let n = rho.parties();
    if n < 2 {
        return Err(Error::InvalidParameter("biseparability needs at least two parties".into()));
    }
    if ball_check(rho) {
        return Ok(SeparabilityOutcome::Certified(SeparabilityCertificate {
            filters: vec![DMatrix::identity(2, 2); n],
            components: vec![],
            tail_weight: 1.0,
            tail: rho.clone(),
            iterations: 0,
        }));
    }
    let lmin = report.min_eigenvalue;
    if lmin <= 1e-14 {
        return Ok(SeparabilityOutcome::Inconclusive {
            iterations: 0,
            final_purity: rho.purity(),
            reason: format!("state is not strictly positive (smallest eigenvalue {lmin:.3e})"),
        });
    }

    let want_filter = match opts.filter {
        FilterMode::Always => true,
        FilterMode::Never => false,
        FilterMode::Auto => lmin < AUTO_FILTER_THRESHOLD,
    };
    let identity = || vec![DMatrix::identity(2, 2); n];
    let (filters, start) = if want_filter {
        match filter_normal_form(rho, 1e-12, 500) {
            Ok(f) => (f.filters, f.filtered_state.into_matrix()),
            Err(_) => (identity(), rho.matrix().clone()),
        }
    } else {
        (identity(), rho.matrix().clone())
    };

    let search = match opts.strategy {
        Strategy::Subtractive => subtractive(&start, n, opts),
        Strategy::Corrective => corrective(&start, n, opts),
    };
    Ok(match search {
        Search::Done {
            components,
            tail_weight,
            tail,
            iterations,
        } => SeparabilityOutcome::Certified(SeparabilityCertificate {
            filters,
            components,
            tail_weight,
            tail: DensityMatrix::new(tail, n)?,
            iterations,
        }),
        Search::Stuck {
            iterations,
            final_purity,
            reason,
        } => SeparabilityOutcome::Inconclusive {
            iterations,
            final_purity,
            reason,
        },
    })
}

fn subtractive(start: &DMatrix<f64>, n: usize, opts: &SeparabilityOptions) -> Search {
    let d = start.nrows();
    let cuts = Bipartition::all(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bound = ball_bound(d);
    let mut current = start.clone();
    let mut remaining = 1.0;
    let mut components = Vec::new();

    for iter in 0..opts.max_iter {
        let purity = current.norm_squared();
        if purity < bound * (1.0 - BALL_MARGIN) {
            return Search::Done {
                components,
                tail_weight: remaining,
                tail: current,
                iterations: iter,
            };
        }
        let (vals, vecs) = sym_eigen(&current);
        let lmin = vals[0];
        if lmin <= 0.0 {
            return Search::Stuck {
                iterations: iter,
                final_purity: purity,
                reason: format!("remainder lost positivity (smallest eigenvalue {lmin:.3e})"),
            };
        }
        let spectral = |f: &dyn Fn(f64) -> f64| {
            let scaled = DMatrix::from_fn(d, d, |r, c| vecs[(r, c)] * f(vals[c]));
            &scaled * vecs.transpose()
        };
        let sqrt = spectral(&f64::sqrt);
        let inv = spectral(&|x| 1.0 / x);
        let cand = best_candidate(&sqrt, &mut rng, &cuts, opts);
        let psi = product_state(&cand);
        let proj = real_projector(&psi);
        let mut eps = 0.5 * lmin.min(1.0 / overlap(&inv, &psi));
        let mut next = (&current - &proj * eps) / (1.0 - eps);
        let mut retries = 0;
        while min_eigenvalue(&next) < -1e-14 {
            retries += 1;
            if retries > 30 {
                return Search::Stuck {
                    iterations: iter,
                    final_purity: purity,
                    reason: "subtraction step collapsed".into(),
                };
            }
            eps *= 0.5;
            next = (&current - &proj * eps) / (1.0 - eps);
        }
        push_atom(&mut components, psi, cand.cut, remaining * eps);
        remaining *= 1.0 - eps;
        current = (&next + next.transpose()) * 0.5;
    }
    Search::Stuck {
        iterations: opts.max_iter,
        final_purity: current.norm_squared(),
        reason: format!("purity above {bound:.6} after {} iterations", opts.max_iter),
    }
}

/// Coordinates of a symmetric matrix under the Frobenius inner product.
fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for r in 0..d {
        out.push(m[(r, r)]);
        for c in r + 1..d {
            out.push(std::f64::consts::SQRT_2 * m[(r, c)]);
        }
    }
    DVector::from_vec(out)
}

fn corrective(start: &DMatrix<f64>, n: usize, opts: &SeparabilityOptions) -> Search {
    let d = start.nrows();
    let cuts = Bipartition::all(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bound = ball_bound(d);
    let t = TAIL_SHARE * d as f64 * min_eigenvalue(start);
    let target = start - DMatrix::identity(d, d) * (t / d as f64);
    let target_vec = svec(&target);

    let mut atoms: Vec<(Vec<Complex64>, Bipartition, DMatrix<f64>)> = Vec::new();
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut residual = target.clone();
    let mut purity = start.norm_squared();
    let mut misses = 0;

    for iter in 0..opts.max_iter {
        let tail_weight = 1.0 - weights.iter().sum::<f64>();
        if tail_weight > 0.0 {
            let tail = (start - (&target - &residual)) / tail_weight;
            purity = tail.norm_squared();
            if purity < bound * (1.0 - BALL_MARGIN) {
                let mut components = Vec::new();
                for ((psi, cut, _), w) in atoms.into_iter().zip(weights) {
                    push_atom(&mut components, psi, cut, w);
                }
                return Search::Done {
                    components,
                    tail_weight,
                    tail: (&tail + tail.transpose()) * 0.5,
                    iterations: iter,
                };
            }
        }
        let cand = best_candidate(&residual, &mut rng, &cuts, opts);
        let psi = product_state(&cand);
        if overlap(&residual, &psi) <= 0.0 {
            misses += 1;
            if misses >= MAX_MISSES {
                return Search::Stuck {
                    iterations: iter + 1,
                    final_purity: purity,
                    reason: format!("no sampled biseparable state overlapped the residual in {MAX_MISSES} consecutive iterations"),
                };
            }
            continue;
        }
        misses = 0;
        let proj = real_projector(&psi);
        columns.push(svec(&proj));
        atoms.push((psi, cand.cut, proj));
        let w = nnls(&DMatrix::from_columns(&columns), &target_vec, 20 * columns.len() + 100);
        let keep: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 0.0).collect();
        atoms = keep.iter().map(|&k| atoms[k].clone()).collect();
        columns = keep.iter().map(|&k| columns[k].clone()).collect();
        weights = keep.iter().map(|&k| w[k]).collect();
        residual = target.clone();
        for ((_, _, proj), &w) in atoms.iter().zip(&weights) {
            residual -= proj * w;
        }
    }
    Search::Stuck {
        iterations: opts.max_iter,
        final_purity: purity,
        reason: format!("tail purity above {bound:.6} after {} iterations", opts.max_iter),
    }
}
