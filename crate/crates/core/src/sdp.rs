//! Primal-dual interior-point solver for block SDPs whose constraint
//! matrices are signed unit symmetric matrices.
//!
//! Primal: `min Σ⟨C_k, X_k⟩  s.t.  Σ_k ⟨A_{ik}, X_k⟩ = b_i,  X_k ⪰ 0`.
//! Dual:   `max bᵀy  s.t.  S_k = C_k − Σ_i y_i A_{ik} ⪰ 0`.
//!
//! Every `C_k` is a multiple of the identity. Variables are split into a
//! shared group and independent groups; a block may touch the shared group
//! and at most one independent group, so the Schur complement system has
//! arrow structure and is solved group by group. HKM search direction with
//! Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// One `±E_{rs}` term of a block constraint (`E_{rs} = e_r e_sᵀ + e_s e_rᵀ`,
/// or `e_r e_rᵀ` on the diagonal).
#[derive(Debug, Clone, Copy)]
pub struct Entry {
    pub var: usize,
    pub r: usize,
    pub s: usize,
    pub coef: f64,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub size: usize,
    /// `C_k = c · 𝟙`.
    pub c: f64,
    /// Independent group this block couples to, if any.
    pub group: Option<usize>,
    pub entries: Vec<Entry>,
}

/// Variables `0..shared` are shared; group `g` owns `groups[g]`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub shared: usize,
    pub groups: Vec<std::ops::Range<usize>>,
    pub b: Vec<f64>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Inaccurate,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub y: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub x: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// `|pobj − dobj|` at the iterate with the best combined residual.
    pub duality_gap: f64,
    score: f64,
    pub iterations: usize,
    pub status: Status,
}

impl Solution {
    pub fn gap(&self) -> f64 {
        self.duality_gap
    }
}

fn add_unit(m: &mut DMatrix<f64>, r: usize, s: usize, v: f64) {
    m[(r, s)] += v;
    if r != s {
        m[(s, r)] += v;
    }
}

/// `⟨E_{rs}, K⟩` for a (not necessarily symmetric) `K`.
fn unit_inner(k: &DMatrix<f64>, r: usize, s: usize) -> f64 {
    if r == s {
        k[(r, r)]
    } else {
        k[(r, s)] + k[(s, r)]
    }
}

/// `⟨E_{rs}, X E_{pq} Y⟩`.
fn unit_sandwich(x: &DMatrix<f64>, y: &DMatrix<f64>, p: usize, q: usize, r: usize, s: usize) -> f64 {
    // (X E_pq Y)[a,b] = X[a,p] Y[q,b] + X[a,q] Y[p,b]  (single term when p == q)
    let f = |a: usize, b: usize| {
        if p == q {
            x[(a, p)] * y[(p, b)]
        } else {
            x[(a, p)] * y[(q, b)] + x[(a, q)] * y[(p, b)]
        }
    };
    if r == s {
        f(r, r)
    } else {
        f(r, s) + f(s, r)
    }
}

impl Problem {
    pub fn nvars(&self) -> usize {
        self.b.len()
    }

    /// `A_k(y) = Σ_i y_i A_{ik}`.
    fn block_op(&self, k: usize, y: &[f64]) -> DMatrix<f64> {
        let blk = &self.blocks[k];
        let mut m = DMatrix::zeros(blk.size, blk.size);
        for e in &blk.entries {
            add_unit(&mut m, e.r, e.s, e.coef * y[e.var]);
        }
        m
    }

    pub fn slack(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        (0..self.blocks.len())
            .map(|k| {
                let blk = &self.blocks[k];
                DMatrix::identity(blk.size, blk.size) * blk.c - self.block_op(k, y)
            })
            .collect()
    }

    /// `(Σ_k ⟨A_{ik}, K_k⟩)_i`.
    fn adjoint(&self, ks: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.nvars());
        for (blk, k) in self.blocks.iter().zip(ks) {
            for e in &blk.entries {
                out[e.var] += e.coef * unit_inner(k, e.r, e.s);
            }
        }
        out
    }

    fn group_of(&self, var: usize) -> Option<usize> {
        if var < self.shared {
            None
        } else {
            self.groups.iter().position(|g| g.contains(&var))
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.nvars();
        let mut covered = self.shared;
        for g in &self.groups {
            if g.start != covered {
                return Err(Error::Numerical("variable groups must tile the variable range".into()));
            }
            covered = g.end;
        }
        if covered != n {
            return Err(Error::Numerical("variable groups do not cover all variables".into()));
        }
        for blk in &self.blocks {
            for e in &blk.entries {
                if e.var >= n || e.r >= blk.size || e.s >= blk.size {
                    return Err(Error::Numerical("block entry out of range".into()));
                }
                let g = self.group_of(e.var);
                if g.is_some() && g != blk.group {
                    return Err(Error::Numerical("block couples to a foreign variable group".into()));
                }
            }
        }
        Ok(())
    }
}

/// Schur matrix in arrow form.
struct Schur {
    groups: Vec<std::ops::Range<usize>>,
    shared: DMatrix<f64>,
    coupling: Vec<DMatrix<f64>>,
    diag: Vec<DMatrix<f64>>,
}

struct Factored {
    shared: Cholesky<f64, nalgebra::Dyn>,
    coupling: Vec<DMatrix<f64>>,
    diag: Vec<Cholesky<f64, nalgebra::Dyn>>,
}

/// Cholesky with escalating diagonal shifts relative to `scale`; late in a
/// solve the Schur matrix is nearly singular and rounding can spoil it.
fn cholesky(m: DMatrix<f64>, scale: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let m = (&m + m.transpose()) * 0.5;
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let scale = scale.max(f64::MIN_POSITIVE);
    for shift in [1e-15, 1e-13, 1e-11, 1e-9] {
        if let Some(c) = Cholesky::new(&m + DMatrix::identity(n, n) * (scale * shift)) {
            return Ok(c);
        }
    }
    Err(Error::Numerical("Schur complement is not positive definite".into()))
}

impl Problem {
    fn schur(&self, x: &[DMatrix<f64>], sinv: &[DMatrix<f64>]) -> Schur {
        let ns = self.shared;
        let mut shared = DMatrix::zeros(ns, ns);
        let mut coupling: Vec<DMatrix<f64>> = self.groups.iter().map(|g| DMatrix::zeros(ns, g.len())).collect();
        let mut diag: Vec<DMatrix<f64>> = self.groups.iter().map(|g| DMatrix::zeros(g.len(), g.len())).collect();
        for (k, blk) in self.blocks.iter().enumerate() {
            let (xk, sk) = (&x[k], &sinv[k]);
            for (a, ei) in blk.entries.iter().enumerate() {
                for ej in &blk.entries[a..] {
                    let v = ei.coef * ej.coef * unit_sandwich(xk, sk, ei.r, ei.s, ej.r, ej.s);
                    let (lo, hi) = if ei.var <= ej.var { (ei, ej) } else { (ej, ei) };
                    match (lo.var < ns, hi.var < ns) {
                        (true, true) => {
                            shared[(lo.var, hi.var)] += v;
                            if lo.var != hi.var {
                                shared[(hi.var, lo.var)] += v;
                            }
                        }
                        (true, false) => {
                            let g = blk.group.unwrap();
                            coupling[g][(lo.var, hi.var - self.groups[g].start)] += v;
                        }
                        (false, false) => {
                            let g = blk.group.unwrap();
                            let o = self.groups[g].start;
                            diag[g][(lo.var - o, hi.var - o)] += v;
                            if lo.var != hi.var {
                                diag[g][(hi.var - o, lo.var - o)] += v;
                            }
                        }
                        (false, true) => unreachable!(),
                    }
                }
            }
        }
        Schur {
            groups: self.groups.clone(),
            shared,
            coupling,
            diag,
        }
    }
}

impl Schur {
    fn matvec(&self, v: &DVector<f64>, groups: &[std::ops::Range<usize>]) -> DVector<f64> {
        let ns = self.shared.nrows();
        let vw = v.rows(0, ns);
        let mut out = DVector::zeros(v.len());
        let mut ow = &self.shared * vw;
        for ((g, b), d) in groups.iter().zip(&self.coupling).zip(&self.diag) {
            let vg = v.rows(g.start, g.len());
            ow += b * vg;
            out.rows_mut(g.start, g.len()).copy_from(&(b.transpose() * vw + d * vg));
        }
        out.rows_mut(0, ns).copy_from(&ow);
        out
    }

    /// Arrow elimination when every pivot block factors cleanly, otherwise a
    /// Cholesky factorization of the assembled matrix.
    fn factor(&self) -> Result<Factorization> {
        match self.factor_arrow() {
            Some(f) => Ok(Factorization::Arrow(f)),
            None => self.factor_full(),
        }
    }

    fn factor_arrow(&self) -> Option<Factored> {
        let diag = self
            .diag
            .iter()
            .map(|d| Cholesky::new((d + d.transpose()) * 0.5))
            .collect::<Option<Vec<_>>>()?;
        let mut reduced = self.shared.clone();
        for (b, d) in self.coupling.iter().zip(&diag) {
            let t = d.solve(&b.transpose());
            reduced -= b * t;
        }
        Some(Factored {
            shared: Cholesky::new((&reduced + reduced.transpose()) * 0.5)?,
            coupling: self.coupling.clone(),
            diag,
        })
    }

    fn dense(&self, groups: &[std::ops::Range<usize>]) -> DMatrix<f64> {
        let ns = self.shared.nrows();
        let n = groups.last().map_or(ns, |g| g.end);
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (ns, ns)).copy_from(&self.shared);
        for ((g, b), d) in groups.iter().zip(&self.coupling).zip(&self.diag) {
            m.view_mut((0, g.start), (ns, g.len())).copy_from(b);
            m.view_mut((g.start, 0), (g.len(), ns)).copy_from(&b.transpose());
            m.view_mut((g.start, g.start), (g.len(), g.len())).copy_from(d);
        }
        m
    }

    fn factor_full(&self) -> Result<Factorization> {
        let m = self.dense(&self.groups);
        let scale = m.diagonal().amax();
        Ok(Factorization::Full(cholesky(m, scale)?))
    }
}

enum Factorization {
    Arrow(Factored),
    Full(Cholesky<f64, nalgebra::Dyn>),
}

impl Factorization {
    fn solve(&self, rhs: &DVector<f64>, shared: usize, groups: &[std::ops::Range<usize>]) -> DVector<f64> {
        match self {
            Self::Arrow(f) => f.solve(rhs, shared, groups),
            Self::Full(c) => c.solve(rhs),
        }
    }
}

impl Factored {
    fn solve(&self, rhs: &DVector<f64>, shared: usize, groups: &[std::ops::Range<usize>]) -> DVector<f64> {
        let mut rw = rhs.rows(0, shared).into_owned();
        let local: Vec<DVector<f64>> = groups
            .iter()
            .zip(&self.diag)
            .map(|(g, d)| d.solve(&rhs.rows(g.start, g.len()).into_owned()))
            .collect();
        for (b, l) in self.coupling.iter().zip(&local) {
            rw -= b * l;
        }
        let dw = self.shared.solve(&rw);
        let mut out = DVector::zeros(rhs.len());
        out.rows_mut(0, shared).copy_from(&dw);
        for ((g, b), d) in groups.iter().zip(&self.coupling).zip(&self.diag) {
            let r = rhs.rows(g.start, g.len()) - b.transpose() * &dw;
            out.rows_mut(g.start, g.len()).copy_from(&d.solve(&r));
        }
        out
    }
}

/// Largest `α ≤ 1` with `M + α D ⪰ 0`, given the Cholesky factor of `M ≻ 0`.
fn max_step(chol: &Cholesky<f64, nalgebra::Dyn>, d: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    // L⁻¹ D L⁻ᵀ
    let a = l.solve_lower_triangular(d).unwrap();
    let b = l.solve_lower_triangular(&a.transpose()).unwrap();
    let sym = (&b + b.transpose()) * 0.5;
    let lmin = nalgebra::SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

const REFINEMENT_STEPS: usize = 2;
/// Primal and dual residuals are not driven below this, whatever `tol` asks.
pub const FEASIBILITY_FLOOR: f64 = 1e-10;
/// Relative residual above which the arrow elimination is abandoned.
const ARROW_RESIDUAL: f64 = 1e-12;

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Solve from a strictly dual-feasible `y0`.
pub fn solve(problem: &Problem, y0: &[f64], settings: &Settings) -> Result<Solution> {
    problem.validate()?;
    let nb = problem.blocks.len();
    let b = DVector::from_column_slice(&problem.b);
    let bnorm = b.norm();
    let cnorm = problem.blocks.iter().map(|k| k.c.abs() * (k.size as f64).sqrt()).fold(0.0, f64::max);
    let ntot: usize = problem.blocks.iter().map(|k| k.size).sum();

    let mut y = DVector::from_column_slice(y0);
    let mut s = problem.slack(y.as_slice());
    let mut x: Vec<DMatrix<f64>> = problem.blocks.iter().map(|k| DMatrix::identity(k.size, k.size)).collect();
    for sk in &s {
        if Cholesky::new(sk.clone()).is_none() {
            return Err(Error::Numerical("starting point is not strictly dual feasible".into()));
        }
    }

    let feas_tol = settings.tol.max(FEASIBILITY_FLOOR);
    let mut best: Option<Solution> = None;
    let mut best_dual: Option<(f64, Vec<f64>, Vec<DMatrix<f64>>)> = None;
    let mut min_pinf = f64::INFINITY;
    let mut prev_mu = f64::INFINITY;
    let mut stalls = 0;
    let mut iterations = 0;
    for iter in 0..=settings.max_iter {
        iterations = iter;
        let pobj: f64 = problem.blocks.iter().zip(&x).map(|(k, xk)| k.c * xk.trace()).sum();
        let dobj = b.dot(&y);
        let rp = &b - problem.adjoint(&x);
        let rd: Vec<DMatrix<f64>> = problem
            .slack(y.as_slice())
            .iter()
            .zip(&s)
            .map(|(exact, sk)| exact - sk)
            .collect();
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = rd.iter().map(|m| m.norm()).fold(0.0, f64::max) / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        if dinf <= feas_tol && best_dual.as_ref().map_or(true, |(d, _, _)| dobj > *d) {
            best_dual = Some((dobj, y.as_slice().to_vec(), s.clone()));
        }
        let converged = pinf <= feas_tol && dinf <= feas_tol && gap <= settings.tol;
        let score = pinf.max(dinf).max(gap);
        if best.as_ref().map_or(true, |bs| score < bs.score) {
            best = Some(Solution {
                y: y.as_slice().to_vec(),
                s: s.clone(),
                x: x.clone(),
                primal_objective: pobj,
                dual_objective: dobj,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                duality_gap: (pobj - dobj).abs(),
                score,
                iterations: iter,
                status: if converged { Status::Optimal } else { Status::Inaccurate },
            });
        }
        if converged || iter == settings.max_iter {
            break;
        }
        // rounding has taken over once the primal residual climbs far above its best value
        if iter > 5 && pinf > 1e3 * min_pinf.max(feas_tol) {
            break;
        }
        min_pinf = min_pinf.min(pinf);

        let mu = (0..nb).map(|k| inner(&x[k], &s[k])).sum::<f64>() / ntot as f64;
        stalls = if mu > 0.7 * prev_mu { stalls + 1 } else { 0 };
        if stalls >= 5 {
            break;
        }
        prev_mu = mu;
        let s_chol: Vec<_> = match s.iter().map(|sk| Cholesky::new(sk.clone())).collect::<Option<Vec<_>>>() {
            Some(c) => c,
            None => break,
        };
        let x_chol: Vec<_> = match x.iter().map(|xk| Cholesky::new(xk.clone())).collect::<Option<Vec<_>>>() {
            Some(c) => c,
            None => break,
        };
        let sinv: Vec<DMatrix<f64>> = s_chol.iter().map(|c| c.inverse()).collect();
        let schur = problem.schur(&x, &sinv);
        let mut factored = match schur.factor() {
            Ok(f) => f,
            Err(_) => break,
        };

        // rhs without the centering and second-order terms
        let x_rd_sinv: Vec<DMatrix<f64>> = (0..nb).map(|k| &x[k] * &rd[k] * &sinv[k]).collect();
        let base_rhs = &b + problem.adjoint(&x_rd_sinv);
        let sinv_adj = problem.adjoint(&sinv);
        if matches!(factored, Factorization::Arrow(_)) {
            let mut probe = factored.solve(&base_rhs, problem.shared, &problem.groups);
            let mut r = &base_rhs - schur.matvec(&probe, &problem.groups);
            for _ in 0..REFINEMENT_STEPS {
                probe += factored.solve(&r, problem.shared, &problem.groups);
                r = &base_rhs - schur.matvec(&probe, &problem.groups);
            }
            if r.norm() > ARROW_RESIDUAL * base_rhs.norm() {
                factored = match schur.factor_full() {
                    Ok(f) => f,
                    Err(_) => break,
                };
            }
        }

        let direction = |rhs: &DVector<f64>, sigma_mu: f64, corr: Option<&[DMatrix<f64>]>| {
            let mut dy = factored.solve(rhs, problem.shared, &problem.groups);
            for _ in 0..REFINEMENT_STEPS {
                let r = rhs - schur.matvec(&dy, &problem.groups);
                dy += factored.solve(&r, problem.shared, &problem.groups);
            }
            let ds: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] - problem.block_op(k, dy.as_slice())).collect();
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|k| {
                    let mut m = &sinv[k] * sigma_mu - &x[k] - &x[k] * &ds[k] * &sinv[k];
                    if let Some(c) = corr {
                        m -= &c[k];
                    }
                    (&m + m.transpose()) * 0.5
                })
                .collect();
            (dy, dx, ds)
        };
        let steps = |dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]| {
            let ap = (0..nb).map(|k| max_step(&x_chol[k], &dx[k])).fold(f64::INFINITY, f64::min);
            let ad = (0..nb).map(|k| max_step(&s_chol[k], &ds[k])).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // predictor
        let (_, dxa, dsa) = direction(&base_rhs, 0.0, None);
        let (apa, ada) = steps(&dxa, &dsa);
        let (apa, ada) = (apa.min(1.0), ada.min(1.0));
        let mu_aff = (0..nb)
            .map(|k| inner(&(&x[k] + &dxa[k] * apa), &(&s[k] + &dsa[k] * ada)))
            .sum::<f64>()
            / ntot as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let corr: Vec<DMatrix<f64>> = (0..nb).map(|k| &dxa[k] * &dsa[k] * &sinv[k]).collect();
        let rhs = &base_rhs - &sinv_adj * (sigma * mu) + problem.adjoint(&corr);
        let (dy, dx, ds) = direction(&rhs, sigma * mu, Some(&corr));
        let (ap, ad) = steps(&dx, &ds);
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);
        if !(ap > 0.0 && ad > 0.0) {
            break;
        }
        for k in 0..nb {
            x[k] += &dx[k] * ap;
            s[k] += &ds[k] * ad;
        }
        y += &dy * ad;
        // keep S consistent with y to avoid drift in the dual residual
        let exact = problem.slack(y.as_slice());
        if exact.iter().all(|m| Cholesky::new(m.clone()).is_some()) {
            s = exact;
        }
    }
    let mut sol = best.ok_or_else(|| Error::Numerical("interior-point solver produced no iterate".into()))?;
    // every dual-feasible iterate certifies a bound; report the tightest one
    if let Some((d, yb, sb)) = best_dual {
        if d > sol.dual_objective {
            sol.dual_objective = d;
            sol.y = yb;
            sol.s = sb;
        }
    }
    sol.iterations = iterations;
    Ok(sol)
}
