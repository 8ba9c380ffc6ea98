//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach the output; exits nonzero on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use xyent::correlators::{correlator, CorrelatorTable};
use xyent::ed::{exact_ground_state, partial_trace};
use xyent::gmn::{genuine_negativity, verify_witness};
use xyent::model::{ground_energy, ChainSize, ModelParams};
use xyent::rdm::{build_rdm, Arrangement, DensityMatrix};
use xyent::scaling::{derivative, fit_log_divergence, run_pipeline, PipelineConfig, Stencil};
use xyent::separability::{certify_biseparable, check_certificate, SeparabilityOptions, SeparabilityOutcome};
use xyent::wick::templates::{nonvanishing_patterns, template_expectation};
use xyent::wick::{expectation, format_labels, PauliString};

type Outcome = Result<String, String>;

const SDP_TOL: f64 = 1e-10;

fn thermo(lambda: f64) -> ModelParams {
    ModelParams::ising(lambda, ChainSize::Thermodynamic).unwrap()
}

fn arr(s: &[usize]) -> Arrangement {
    Arrangement::new(s.to_vec()).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ghz(n: usize) -> DensityMatrix {
    let d = 1 << n;
    let mut psi = vec![0.0; d];
    psi[0] = 1.0;
    psi[d - 1] = 1.0;
    DensityMatrix::pure(&psi).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, parties: usize, rank: usize) -> DensityMatrix {
    let d = 1 << parties;
    let a = DMatrix::from_fn(d, rank, |_, _| rng.random::<f64>() - 0.5);
    let m = &a * a.transpose();
    let t = m.trace();
    DensityMatrix::new(m / t, parties).unwrap()
}

fn spacings_up_to(parties: usize, span: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 1..parties {
        out = out
            .into_iter()
            .flat_map(|s: Vec<usize>| {
                (1..=span).filter_map(move |k| {
                    let mut t = s.clone();
                    t.push(k);
                    (t.iter().sum::<usize>() <= span).then_some(t)
                })
            })
            .collect();
    }
    out
}

fn criterion_1() -> Outcome {
    let mut worst_rdm: f64 = 0.0;
    let mut worst_energy: f64 = 0.0;
    let mut count = 0;
    let mut arrangements = spacings_up_to(3, 5);
    arrangements.extend(spacings_up_to(4, 5));
    for &l in &[9usize, 11, 13] {
        for &lambda in &[0.2, 0.6, 1.0, 1.4] {
            let params = ModelParams::ising(lambda, ChainSize::Finite(l)).map_err(err)?;
            let gs = exact_ground_state(&params).map_err(err)?;
            worst_energy = worst_energy.max((gs.energy - ground_energy(&params).map_err(err)?).abs());
            for s in &arrangements {
                let a = arr(s);
                let ed = partial_trace(&gs, &a.sites()).map_err(err)?;
                let wick = build_rdm(&params, &a, 1e-13).map_err(err)?;
                worst_rdm = worst_rdm.max((ed.matrix() - wick.matrix()).amax());
                count += 1;
            }
        }
    }
    let detail = format!("{count} RDMs, max entry deviation {worst_rdm:.2e}, max energy deviation {worst_energy:.2e}");
    if worst_rdm <= 1e-8 && worst_energy <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let patterns = nonvanishing_patterns();
    let mut worst: f64 = 0.0;
    let mut deviations = Vec::new();
    for _ in 0..200 {
        let w = patterns[rng.random_range(0..patterns.len())];
        let (a, b, d) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3));
        let lambda = rng.random_range(0.05..2.0);
        let g = CorrelatorTable::build(&thermo(lambda), -10, 10, 1e-13).map_err(err)?;
        let t = template_expectation(w, (a, b, d), &g).map_err(err)?.value;
        let ps = PauliString::new(vec![0, a, a + b, a + b + d], w.to_vec()).map_err(err)?;
        let e = expectation(&ps, &g).map_err(err)?;
        let dev = (t - e).abs();
        worst = worst.max(dev);
        if dev > 1e-10 {
            deviations.push(format!("{} {:?} λ={lambda:.3}: {dev:.2e}", format_labels(&w), (a, b, d)));
        }
    }
    let detail = format!("200 samples, max deviation {worst:.2e}");
    if deviations.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", deviations.join(", ")))
    }
}

fn criterion_3() -> Outcome {
    let closed = |r: i64| 2.0 * (-1f64).powi(r as i32) / (PI * (2 * r + 1) as f64);
    let inf = thermo(1.0);
    let fin = ModelParams::ising(1.0, ChainSize::Finite(1001)).map_err(err)?;
    let (mut w_inf, mut w_fin): (f64, f64) = (0.0, 0.0);
    for r in -3..=3 {
        w_inf = w_inf.max((correlator(&inf, r, 1e-13).map_err(err)? - closed(r)).abs());
        w_fin = w_fin.max((correlator(&fin, r, 1e-13).map_err(err)? - closed(r)).abs());
    }
    let detail = format!("thermodynamic max deviation {w_inf:.2e}, L=1001 max deviation {w_fin:.2e}");
    if w_inf <= 1e-9 && w_fin <= 2e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome {
    let mut problems = Vec::new();
    let mut smallest_positive = f64::INFINITY;
    let mut largest_zero: f64 = 0.0;
    for lambda in [0.95, 1.0, 1.05] {
        let p = thermo(lambda);
        for s in [&[1, 1][..], &[1, 2], &[1, 1, 1], &[1, 1, 2], &[1, 2, 1]] {
            let v = genuine_negativity(&build_rdm(&p, &arr(s), 1e-13).map_err(err)?, SDP_TOL).map_err(err)?.value;
            smallest_positive = smallest_positive.min(v);
            if v <= 1e-4 {
                problems.push(format!("N{s:?}(λ={lambda}) = {v:.3e} not > 1e-4"));
            }
        }
        for s in [&[1, 3][..], &[2, 2], &[1, 1, 3], &[1, 3, 1], &[2, 1, 2], &[1, 2, 2], &[2, 2, 2]] {
            let v = genuine_negativity(&build_rdm(&p, &arr(s), 1e-13).map_err(err)?, SDP_TOL).map_err(err)?.value;
            largest_zero = largest_zero.max(v);
            if v >= 1e-8 {
                problems.push(format!("N{s:?}(λ={lambda}) = {v:.3e} not < 1e-8"));
            }
        }
    }
    let mut max_iters = 0;
    for lambda in [0.8, 1.0, 1.2] {
        for s in [&[1, 3][..], &[2, 2]] {
            let rho = build_rdm(&thermo(lambda), &arr(s), 1e-13).map_err(err)?;
            let opts = SeparabilityOptions {
                max_iter: 10_000,
                ..SeparabilityOptions::default()
            };
            match certify_biseparable(&rho, &opts).map_err(err)? {
                SeparabilityOutcome::Certified(c) => {
                    max_iters = max_iters.max(c.iterations);
                    let check = check_certificate(&c, &rho, 1e-8);
                    if !check.valid {
                        problems.push(format!("{s:?} λ={lambda}: certificate rejected: {}", check.messages.join("; ")));
                    }
                }
                SeparabilityOutcome::Inconclusive { iterations, reason, .. } => {
                    problems.push(format!("{s:?} λ={lambda}: inconclusive after {iterations} iterations ({reason})"));
                }
            }
        }
    }
    let detail = format!(
        "min entangled N {smallest_positive:.3e}, max separated N {largest_zero:.1e}, (1,3)/(2,2) certified in at most {max_iters} iterations"
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn within(name: &str, value: f64, target: f64, tol: f64, problems: &mut Vec<String>) -> String {
    if (value - target).abs() > tol {
        problems.push(format!("{name} = {value:.4} outside {target} ± {tol}"));
    }
    format!("{name} {value:.4}")
}

fn criterion_5() -> Outcome {
    let mut problems = Vec::new();
    let mut parts = Vec::new();

    let three = run_pipeline(&PipelineConfig::new(arr(&[1, 1]))).map_err(err)?;
    let (Some(vf), Some(sh), Some(nu)) = (&three.value_fit, &three.shift, three.nu) else {
        return Err(format!("three-site fits missing: {:?}", three.warnings));
    };
    parts.push(within("3-site inf slope", three.infinite_fit.slope, 0.170, 0.02, &mut problems));
    parts.push(within("intercept", three.infinite_fit.intercept, 0.267, 0.02, &mut problems));
    parts.push(within("finite slope", vf.slope, -0.170, 0.02, &mut problems));
    parts.push(within("intercept", vf.intercept, 0.191, 0.02, &mut problems));
    parts.push(within("kappa", sh.kappa, 2.19, 0.15, &mut problems));
    parts.push(within("nu", nu, 1.0, 0.05, &mut problems));
    let fit = &three.infinite_fit;
    let mut loo: f64 = 0.0;
    for k in 0..fit.xs.len() {
        let xs: Vec<f64> = fit.xs.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, x)| *x).collect();
        let ys: Vec<f64> = fit.ys.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, y)| *y).collect();
        loo = loo.max((fit_log_divergence(&xs, &ys).map_err(err)?.slope - fit.slope).abs());
    }
    if loo >= 0.01 {
        problems.push(format!("leave-one-out slope change {loo:.4}"));
    }
    parts.push(format!("leave-one-out {loo:.4}"));

    let mut cfg = PipelineConfig::new(arr(&[1, 1, 1]));
    cfg.sizes = vec![11, 15, 21, 27, 33];
    let four = run_pipeline(&cfg).map_err(err)?;
    let (Some(vf), Some(sh), Some(nu)) = (&four.value_fit, &four.shift, four.nu) else {
        return Err(format!("four-site fits missing: {:?}", four.warnings));
    };
    parts.push(within("4-site inf slope", four.infinite_fit.slope, 0.20, 0.03, &mut problems));
    parts.push(within("intercept", four.infinite_fit.intercept, 0.36, 0.03, &mut problems));
    parts.push(within("finite slope", vf.slope, -0.20, 0.03, &mut problems));
    parts.push(within("intercept", vf.intercept, 0.27, 0.03, &mut problems));
    parts.push(format!("kappa {:.4}", sh.kappa));
    parts.push(within("nu", nu, 1.0, 0.05, &mut problems));

    let detail = parts.join(", ");
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut problems = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut states = vec![
        build_rdm(&thermo(1.0), &arr(&[1, 1]), 1e-13).map_err(err)?,
        build_rdm(&thermo(0.7), &arr(&[1, 2]), 1e-13).map_err(err)?,
        build_rdm(&thermo(1.0), &arr(&[1, 1, 1]), 1e-13).map_err(err)?,
        ghz(3).mixed_with_identity(0.3),
        ghz(4).mixed_with_identity(0.2),
    ];
    for parties in [3, 3, 4] {
        states.push(random_state(&mut rng, parties, 2));
    }
    let mut checked = 0;
    let mut worst_perm: f64 = 0.0;
    for rho in &states {
        let res = genuine_negativity(rho, SDP_TOL).map_err(err)?;
        checked += 1;
        if !verify_witness(&res, rho, 1e-8).passed {
            problems.push(format!("witness check failed for a {}-qubit state", rho.parties()));
        }
        let perms = permutations(rho.parties());
        for perm in perms.iter().skip(1).step_by(if rho.parties() == 4 { 5 } else { 1 }) {
            let q = rho.permute_parties(perm).map_err(err)?;
            let r = genuine_negativity(&q, SDP_TOL).map_err(err)?;
            checked += 1;
            if !verify_witness(&r, &q, 1e-8).passed {
                problems.push(format!("witness check failed after permutation {perm:?}"));
            }
            worst_perm = worst_perm.max((r.value - res.value).abs());
        }
    }
    if worst_perm > 1e-8 {
        problems.push(format!("permutation deviation {worst_perm:.2e}"));
    }

    let g = genuine_negativity(&ghz(3), SDP_TOL).map_err(err)?;
    if (g.value - 0.5).abs() > 1e-6 {
        problems.push(format!("GHZ3 gives {}", g.value));
    }
    let mut zeros: f64 = 0.0;
    let mut product = vec![0.0; 8];
    product[0] = 1.0;
    let plus = [0.5f64.sqrt(), 0.5f64.sqrt()];
    let tilted = [0.6, 0.8];
    let mixed_product: Vec<f64> = (0..8).map(|i| plus[i >> 2] * tilted[(i >> 1) & 1] * plus[i & 1]).collect();
    for rho in [
        DensityMatrix::maximally_mixed(3),
        DensityMatrix::pure(&product).map_err(err)?,
        DensityMatrix::pure(&mixed_product).map_err(err)?,
    ] {
        let r = genuine_negativity(&rho, SDP_TOL).map_err(err)?;
        checked += 1;
        if !verify_witness(&r, &rho, 1e-8).passed {
            problems.push("witness check failed for a separable state".into());
        }
        zeros = zeros.max(r.value.abs());
    }
    if zeros > 1e-8 {
        problems.push(format!("separable state gives {zeros:.2e}"));
    }

    let detail = format!(
        "{checked} solves verified, GHZ3 {:.9}, separable max {zeros:.1e}, permutation deviation {worst_perm:.1e}",
        g.value
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn criterion_7() -> Outcome {
    let mut problems = Vec::new();
    let mut states: Vec<(String, DensityMatrix)> = Vec::new();
    for lambda in [0.5, 1.0, 1.5] {
        for s in [&[1, 1][..], &[1, 2], &[1, 3], &[2, 2]] {
            states.push((format!("{s:?} λ={lambda}"), build_rdm(&thermo(lambda), &arr(s), 1e-13).map_err(err)?));
        }
    }
    for p in [0.5, 0.8, 0.9] {
        states.push((format!("GHZ3 noise {p}"), ghz(3).mixed_with_identity(p)));
    }
    let (mut certified, mut inconclusive) = (0, 0);
    for (name, rho) in &states {
        let n = genuine_negativity(rho, SDP_TOL).map_err(err)?.value;
        let opts = SeparabilityOptions {
            max_iter: 3000,
            ..SeparabilityOptions::default()
        };
        match certify_biseparable(rho, &opts).map_err(err)? {
            SeparabilityOutcome::Certified(c) => {
                certified += 1;
                let check = check_certificate(&c, rho, 1e-8);
                if !check.valid {
                    problems.push(format!("{name}: certificate rejected: {}", check.messages.join("; ")));
                }
                if n > 1e-8 {
                    problems.push(format!("{name}: certified biseparable but N = {n:.3e}"));
                }
            }
            SeparabilityOutcome::Inconclusive { .. } => inconclusive += 1,
        }
    }
    let detail = format!("{} states: {certified} certificates checked, {inconclusive} inconclusive, no contradiction with N", states.len());
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(problems.join("; "))
    }
}

fn criterion_8() -> Outcome {
    let mut problems = Vec::new();
    let mut ratios = Vec::new();
    let cases: [(&str, fn(f64) -> f64, fn(f64) -> f64, f64); 3] = [
        ("sin", f64::sin, f64::cos, 0.4),
        ("exp*sin", |x| x.exp() * x.sin(), |x| x.exp() * (x.sin() + x.cos()), 0.7),
        ("1/(1+x^2)", |x| 1.0 / (1.0 + x * x), |x| -2.0 * x / (1.0 + x * x).powi(2), 0.3),
    ];
    for (name, f, df, x) in cases {
        for s in [Stencil::Central, Stencil::Forward, Stencil::Backward] {
            let e = |h: f64| (derivative(|t| Ok(f(t)), x, h, s).unwrap() - df(x)).abs();
            let ratio = e(0.04) / e(0.02);
            ratios.push(ratio);
            if !(12.0..=20.0).contains(&ratio) {
                problems.push(format!("{name} {s:?}: error ratio {ratio:.2} outside [12, 20]"));
            }
            if e(1e-3) > 1e-10 {
                problems.push(format!("{name} {s:?}: error {:.2e} at h=1e-3", e(1e-3)));
            }
        }
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let detail = format!("error ratio under halving in [{lo:.2}, {hi:.2}] (O(h^4) gives 16)");
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", criterion_1),
        ("template cross-check", criterion_2),
        ("critical correlator closed form", criterion_3),
        ("entanglement geography", criterion_4),
        ("scaling fits", criterion_5),
        ("solver integrity", criterion_6),
        ("certificate soundness", criterion_7),
        ("finite-difference stencils", criterion_8),
    ];
    let only: Option<usize> = std::env::var("XYENT_ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {}: PASS {name} ({d}) [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({d}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
