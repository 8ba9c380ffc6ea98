use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use xyent::concurrence::c4_mixed;
use xyent::correlators::{correlator, table_for_span};
use xyent::ed::{exact_ground_state, partial_trace};
use xyent::gmn::{genuine_negativity_with, verify_witness};
use xyent::io::{
    density_matrix_to_json, format_f64, negativity_to_json, outcome_to_json, read_density_matrix, write_csv,
    FORMAT_VERSION,
};
use xyent::model::{ground_energy, ChainSize, ModelParams};
use xyent::rdm::{build_rdm, Arrangement, DensityMatrix};
use xyent::scaling::{linear_grid, run_pipeline, Curve, PipelineConfig, Stencil};
use xyent::sdp::Settings;
use xyent::separability::{certify_biseparable, check_certificate, FilterMode, SeparabilityOptions, Strategy};
use xyent::wick::{parse_labels, spin_expectation, PauliString};
use xyent::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

#[derive(Parser)]
#[command(name = "xyent", version, about = "Multipartite entanglement in the ground state of the XY chain")]
#[command(args_override_self = true)]
#[command(after_help = "Any run can be read from a TOML file with --config FILE: keys are flag names \
(underscores for dashes), `command` names the subcommand, arrays repeat a flag. Flags given on the \
command line take precedence. Every output echoes its resolved configuration in this format.")]
struct Cli {
    /// Worker threads (default: all cores). Does not change any output.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-point correlators G_r over a range of offsets.
    Corr(CorrArgs),
    /// Ground-state expectation value of a Pauli string.
    Expect(ExpectArgs),
    /// Reduced density matrix of an arrangement of sites.
    Rdm(RdmArgs),
    /// Exact diagonalization of a finite chain.
    Ed(EdArgs),
    /// Genuine multiparticle negativity with its witness.
    Gmn(GmnArgs),
    /// Biseparability certificate search.
    Sep(SepArgs),
    /// Four-qubit concurrence of a state or along a range of couplings.
    C4(C4Args),
    /// Genuine negativity over a range of couplings for several arrangements.
    Scan(ScanArgs),
    /// Logarithmic-divergence and finite-size scaling analysis.
    Scaling(ScalingArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Corr(_) => "corr",
            Command::Expect(_) => "expect",
            Command::Rdm(_) => "rdm",
            Command::Ed(_) => "ed",
            Command::Gmn(_) => "gmn",
            Command::Sep(_) => "sep",
            Command::C4(_) => "c4",
            Command::Scan(_) => "scan",
            Command::Scaling(_) => "scaling",
        }
    }
}

fn as_string<T: std::fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn opt_as_string<T: std::fmt::Display, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.collect_str(x),
        None => s.serialize_none(),
    }
}

fn vec_as_string<T: std::fmt::Display, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

#[derive(Debug, Clone, Copy)]
struct Range3 {
    start: f64,
    end: f64,
    step: f64,
}

impl std::str::FromStr for Range3 {
    type Err = Error;

    fn from_str(s: &str) -> xyent::Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::InvalidParameter(format!("range `{s}` is not start:end:step")))?;
        match parts[..] {
            [start, end, step] if step > 0.0 && end >= start => Ok(Self { start, end, step }),
            _ => Err(Error::InvalidParameter(format!("range `{s}` is not start:end:step with end >= start, step > 0"))),
        }
    }
}

impl std::fmt::Display for Range3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.step)
    }
}

impl Range3 {
    fn grid(&self) -> xyent::Result<Vec<f64>> {
        linear_grid(self.start, self.end, self.step)
    }
}

#[derive(Debug, Clone, Copy)]
struct Window(f64, f64);

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> xyent::Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::InvalidParameter(format!("window `{s}` is not lo:hi")))?;
        match parts[..] {
            [lo, hi] if lo > 0.0 && hi > lo => Ok(Self(lo, hi)),
            _ => Err(Error::InvalidParameter(format!("window `{s}` must be lo:hi with 0 < lo < hi"))),
        }
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

#[derive(Args, Serialize)]
struct ModelArgs {
    /// Coupling λ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// Anisotropy γ.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Chain length: odd integer or `inf`.
    #[arg(long = "L", default_value = "inf")]
    #[serde(rename = "L", serialize_with = "as_string")]
    size: ChainSize,
}

impl ModelArgs {
    fn params(&self) -> xyent::Result<ModelParams> {
        let lambda = self
            .lambda
            .ok_or_else(|| Error::InvalidParameter("--lambda is required".into()))?;
        ModelParams::new(lambda, self.gamma, self.size)
    }
}

#[derive(Args, Serialize)]
struct CorrArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Smallest offset r.
    #[arg(long, default_value_t = -5, allow_hyphen_values = true)]
    rmin: i64,
    /// Largest offset r.
    #[arg(long, default_value_t = 5, allow_hyphen_values = true)]
    rmax: i64,
    /// Quadrature tolerance.
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ExpectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Pauli labels, one per site, e.g. `xzx`.
    #[arg(long)]
    labels: String,
    /// Sites, strictly increasing, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',', required = true)]
    sites: Vec<usize>,
    /// Correlator quadrature tolerance.
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct RdmArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Spacings between consecutive sites, e.g. `1,3`.
    #[arg(long)]
    #[serde(serialize_with = "as_string")]
    arr: Arrangement,
    /// Correlator quadrature tolerance.
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Also compare the reduced density matrix of this arrangement.
    #[arg(long)]
    #[serde(serialize_with = "opt_as_string", skip_serializing_if = "Option::is_none")]
    arr: Option<Arrangement>,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

/// A state given either as a JSON file or by model parameters and an arrangement.
#[derive(Args, Serialize)]
struct StateArgs {
    /// Density matrix JSON file; overrides the model flags.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Spacings between consecutive sites, e.g. `1,3`.
    #[arg(long)]
    #[serde(serialize_with = "opt_as_string", skip_serializing_if = "Option::is_none")]
    arr: Option<Arrangement>,
    /// Correlator quadrature tolerance.
    #[arg(long, default_value_t = 1e-13)]
    corr_tol: f64,
}

impl StateArgs {
    fn state(&self) -> xyent::Result<DensityMatrix> {
        if let Some(path) = &self.input {
            return read_density_matrix(path);
        }
        let arr = self
            .arr
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("either --input or --arr is required".into()))?;
        build_rdm(&self.model.params()?, arr, self.corr_tol)
    }
}

#[derive(Args, Serialize)]
struct GmnArgs {
    #[command(flatten)]
    #[serde(flatten)]
    state: StateArgs,
    /// SDP tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Include the full witness decomposition.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    witness: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    state: StateArgs,
    /// Iteration budget of the search.
    #[arg(long, default_value_t = 10000)]
    max_iter: usize,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random candidates drawn per iteration.
    #[arg(long, default_value_t = 64)]
    trials: usize,
    /// Local filtering to the marginal normal form.
    #[arg(long, default_value = "auto", value_parser = ["auto", "always", "never"])]
    filter: String,
    /// Decomposition strategy.
    #[arg(long, default_value = "corrective", value_parser = ["corrective", "subtractive"])]
    strategy: String,
    /// Sample complex product states.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    complex: bool,
    /// Entrywise tolerance of the certificate check.
    #[arg(long, default_value_t = 1e-8)]
    check_tol: f64,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct C4Args {
    #[command(flatten)]
    #[serde(flatten)]
    state: StateArgs,
    /// Scan λ as start:end:step instead of a single state.
    #[arg(long)]
    #[serde(serialize_with = "opt_as_string", skip_serializing_if = "Option::is_none")]
    lambda_range: Option<Range3>,
    /// SDP tolerance for the accompanying negativity.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ScanArgs {
    /// λ grid as start:end:step.
    #[arg(long)]
    #[serde(serialize_with = "as_string")]
    lambda_range: Range3,
    /// Anisotropy γ.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Chain length: odd integer or `inf`.
    #[arg(long = "L", default_value = "inf")]
    #[serde(rename = "L", serialize_with = "as_string")]
    size: ChainSize,
    /// Arrangement; repeat for several.
    #[arg(long, required = true)]
    #[serde(serialize_with = "vec_as_string")]
    arr: Vec<Arrangement>,
    /// Correlator quadrature tolerance.
    #[arg(long, default_value_t = 1e-13)]
    corr_tol: f64,
    /// SDP tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ScalingArgs {
    #[arg(long, default_value = "1,1")]
    #[serde(serialize_with = "as_string")]
    arr: Arrangement,
    /// Anisotropy γ.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Chain lengths for the minimum-value fit.
    #[arg(long = "L", value_delimiter = ',', default_value = "11,15,21,27,33,41,61,81,101")]
    #[serde(rename = "L")]
    sizes: Vec<usize>,
    /// Chain lengths for the shift-exponent fit, a subset of --L.
    #[arg(long, value_delimiter = ',', default_value = "11,15,21,27,33")]
    position_sizes: Vec<usize>,
    /// Coarse λ grid start:end:step for the minimum search.
    #[arg(long, default_value = "0.9:1.1:0.005")]
    #[serde(serialize_with = "as_string")]
    coarse: Range3,
    #[arg(long, default_value_t = 5e-4)]
    fine_step: f64,
    /// Refined grid half-width in coarse steps.
    #[arg(long, default_value_t = 2)]
    fine_halfwidth: usize,
    /// |λ − λ_c| window lo:hi of the thermodynamic fit.
    #[arg(long, default_value = "0.0005:0.02")]
    #[serde(serialize_with = "as_string")]
    window: Window,
    /// Log-spaced points in the thermodynamic window.
    #[arg(long, default_value_t = 10)]
    points: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    #[arg(long, default_value = "central", value_parser = ["central", "forward", "backward"])]
    stencil: String,
    /// SDP tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Correlator quadrature tolerance.
    #[arg(long, default_value_t = 1e-13)]
    corr_tol: f64,
    /// Critical coupling the fits are referred to.
    #[arg(long, default_value_t = 1.0)]
    lambda_c: f64,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

/// Outcome of a subcommand that produced its output.
enum Done {
    Ok,
    Inconclusive,
}

fn echo<T: Serialize>(command: &str, args: &T) -> Value {
    let mut v = serde_json::to_value(args).expect("arguments serialize");
    if let Value::Object(map) = &mut v {
        map.insert("command".into(), json!(command));
    }
    v
}

fn echo_lines(config: &Value) -> Vec<String> {
    let mut lines = Vec::new();
    if let Value::Object(map) = config {
        for (k, v) in map {
            lines.push(format!("{k} = {v}"));
        }
    }
    lines
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> xyent::Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
        }
    }
    Ok(())
}

fn emit_json(out: Option<&Path>, config: &Value, result: Value) -> xyent::Result<()> {
    let doc = json!({ "format": FORMAT_VERSION, "config": config, "result": result });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn csv_bytes(config: &Value, columns: &[&str], rows: &[Vec<String>]) -> xyent::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, &echo_lines(config), columns, rows)?;
    Ok(buf)
}

fn sdp_settings(tol: f64) -> Settings {
    Settings {
        tol,
        ..Settings::default()
    }
}

fn run_corr(a: &CorrArgs, config: &Value) -> xyent::Result<Done> {
    if a.rmin > a.rmax {
        return Err(Error::InvalidParameter(format!("--rmin {} exceeds --rmax {}", a.rmin, a.rmax)));
    }
    let params = a.model.params()?;
    let rows = (a.rmin..=a.rmax)
        .into_par_iter()
        .map(|r| Ok(vec![r.to_string(), format_f64(correlator(&params, r, a.tol)?)]))
        .collect::<xyent::Result<Vec<_>>>()?;
    emit(a.out.as_deref(), &csv_bytes(config, &["r", "G"], &rows)?)?;
    Ok(Done::Ok)
}

fn run_expect(a: &ExpectArgs, config: &Value) -> xyent::Result<Done> {
    let params = a.model.params()?;
    let ps = PauliString::new(a.sites.clone(), parse_labels(&a.labels)?)?;
    let first = *a.sites.first().unwrap_or(&0);
    let shifted: Vec<usize> = a.sites.iter().map(|s| s - first).collect();
    let ps_local = PauliString::new(shifted.clone(), ps.labels().to_vec())?;
    let span = *shifted.last().unwrap_or(&0) as i64;
    if let Some(l) = params.size().finite() {
        if span as usize >= l {
            return Err(Error::InvalidParameter(format!("sites span {span} does not fit a chain of {l}")));
        }
    }
    let table = table_for_span(&params, span, a.tol)?;
    let value = spin_expectation(&ps_local, &table)?;
    emit_json(a.out.as_deref(), config, json!({ "value": value }))?;
    Ok(Done::Ok)
}

fn run_rdm(a: &RdmArgs, config: &Value) -> xyent::Result<Done> {
    let rho = build_rdm(&a.model.params()?, &a.arr, a.tol)?;
    emit_json(a.out.as_deref(), config, density_matrix_to_json(&rho))?;
    Ok(Done::Ok)
}

fn run_ed(a: &EdArgs, config: &Value) -> xyent::Result<Done> {
    let params = a.model.params()?;
    if params.size().is_thermodynamic() {
        return Err(Error::ThermodynamicSize);
    }
    let gs = exact_ground_state(&params)?;
    let analytic = ground_energy(&params)?;
    let mut result = json!({
        "energy": gs.energy,
        "free_fermion_energy": analytic,
        "energy_difference": (gs.energy - analytic).abs(),
        "gap": gs.gap,
        "residual": gs.residual,
        "solver": gs.solver,
        "near_degenerate": gs.near_degenerate,
    });
    if let Some(arr) = &a.arr {
        let ed_rho = partial_trace(&gs, &arr.sites())?;
        let wick_rho = build_rdm(&params, arr, 1e-13)?;
        let diff = (ed_rho.matrix() - wick_rho.matrix()).amax();
        result["rdm"] = density_matrix_to_json(&ed_rho);
        result["rdm_max_deviation"] = json!(diff);
    }
    emit_json(a.out.as_deref(), config, result)?;
    Ok(Done::Ok)
}

fn run_gmn(a: &GmnArgs, config: &Value) -> xyent::Result<Done> {
    let rho = a.state.state()?;
    let res = genuine_negativity_with(&rho, &sdp_settings(a.tol))?;
    let report = verify_witness(&res, &rho, 1e-8);
    let mut result = negativity_to_json(&res, a.witness);
    result["witness_check"] = serde_json::to_value(&report)?;
    emit_json(a.out.as_deref(), config, result)?;
    Ok(Done::Ok)
}

fn run_sep(a: &SepArgs, config: &Value) -> xyent::Result<Done> {
    let rho = a.state.state()?;
    let opts = SeparabilityOptions {
        max_iter: a.max_iter,
        seed: a.seed,
        trials_per_iter: a.trials,
        filter: serde_json::from_value::<FilterMode>(json!(a.filter))?,
        strategy: serde_json::from_value::<Strategy>(json!(a.strategy))?,
        complex: a.complex,
        ..SeparabilityOptions::default()
    };
    let outcome = certify_biseparable(&rho, &opts)?;
    let check = outcome.certificate().map(|c| check_certificate(c, &rho, a.check_tol));
    if let Some(c) = &check {
        if !c.valid {
            return Err(Error::Numerical(format!("certificate failed its check: {}", c.messages.join("; "))));
        }
    }
    emit_json(a.out.as_deref(), config, outcome_to_json(&outcome, check.as_ref()))?;
    Ok(if outcome.is_certified() { Done::Ok } else { Done::Inconclusive })
}

fn run_c4(a: &C4Args, config: &Value) -> xyent::Result<Done> {
    let settings = sdp_settings(a.tol);
    match &a.lambda_range {
        None => {
            let rho = a.state.state()?;
            let c4 = c4_mixed(&rho)?;
            let n = genuine_negativity_with(&rho, &settings)?;
            emit_json(a.out.as_deref(), config, json!({ "c4": c4, "negativity": n.value }))?;
        }
        Some(range) => {
            if a.state.input.is_some() {
                return Err(Error::InvalidParameter("--lambda-range cannot be combined with --input".into()));
            }
            let arr = a
                .state
                .arr
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("--lambda-range needs --arr".into()))?;
            let rows = range
                .grid()?
                .into_par_iter()
                .map(|l| {
                    let params = ModelParams::new(l, a.state.model.gamma, a.state.model.size)?;
                    let rho = build_rdm(&params, arr, a.state.corr_tol)?;
                    let c4 = c4_mixed(&rho)?;
                    let n = genuine_negativity_with(&rho, &settings)?;
                    Ok(vec![format_f64(l), format_f64(c4), format_f64(n.value)])
                })
                .collect::<xyent::Result<Vec<_>>>()?;
            emit(a.out.as_deref(), &csv_bytes(config, &["lambda", "c4", "negativity"], &rows)?)?;
        }
    }
    Ok(Done::Ok)
}

fn run_scan(a: &ScanArgs, config: &Value) -> xyent::Result<Done> {
    let grid = a.lambda_range.grid()?;
    let settings = sdp_settings(a.tol);
    let jobs: Vec<(&Arrangement, f64)> = grid.iter().flat_map(|&l| a.arr.iter().map(move |arr| (arr, l))).collect();
    let rows = jobs
        .into_par_iter()
        .map(|(arr, l)| {
            let params = ModelParams::new(l, a.gamma, a.size)?;
            let rho = build_rdm(&params, arr, a.corr_tol)?;
            let n = genuine_negativity_with(&rho, &settings)?;
            Ok(vec![
                format_f64(l),
                format!("\"{arr}\""),
                format_f64(n.value),
                format_f64(n.duality_gap),
                serde_json::to_value(n.status)?.as_str().unwrap_or("").to_string(),
            ])
        })
        .collect::<xyent::Result<Vec<_>>>()?;
    emit(
        a.out.as_deref(),
        &csv_bytes(config, &["lambda", "arrangement", "negativity", "duality_gap", "status"], &rows)?,
    )?;
    Ok(Done::Ok)
}

fn negativity_at(c: &Curve, i: usize) -> f64 {
    c.negativity.as_ref().map_or(f64::NAN, |n| n[i])
}

fn run_scaling(a: &ScalingArgs, config: &Value) -> xyent::Result<Done> {
    if a.sizes.is_empty() {
        return Err(Error::InvalidParameter("the list of chain lengths (--L) is empty".into()));
    }
    let mut cfg = PipelineConfig::new(a.arr.clone());
    cfg.eval.gamma = a.gamma;
    cfg.eval.corr_tol = a.corr_tol;
    cfg.eval.sdp_tol = a.tol;
    cfg.eval.h = a.h;
    cfg.eval.stencil = a.stencil.parse::<Stencil>()?;
    cfg.sizes = a.sizes.clone();
    cfg.position_sizes = a.position_sizes.clone();
    cfg.coarse = (a.coarse.start, a.coarse.end, a.coarse.step);
    cfg.fine_step = a.fine_step;
    cfg.fine_halfwidth = a.fine_halfwidth;
    cfg.infinite_window = (a.window.0, a.window.1);
    cfg.infinite_points = a.points;
    cfg.lambda_c = a.lambda_c;

    let res = run_pipeline(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let mut header = echo_lines(config);

    for pc in &res.minima {
        let mut merged: Vec<(f64, f64, f64)> = Vec::new();
        let mut seen = BTreeSet::new();
        for c in [&pc.coarse, &pc.fine] {
            for (i, (l, v)) in c.lambdas.iter().zip(&c.values).enumerate() {
                if seen.insert(l.to_bits()) {
                    merged.push((*l, negativity_at(c, i), *v));
                }
            }
        }
        merged.sort_by(|x, y| x.0.total_cmp(&y.0));
        let rows: Vec<Vec<String>> = merged
            .iter()
            .map(|(l, n, v)| vec![format_f64(*l), format_f64(*n), format_f64(*v)])
            .collect();
        let mut h = header.clone();
        h.push(format!("L = {}, lambda_c(L) = {}, minimum = {}", pc.size, pc.lambda_c, pc.min_value));
        let mut buf = Vec::new();
        write_csv(&mut buf, &h, &["lambda", "N", "dN_dlambda"], &rows)?;
        fs::write(a.out.join(format!("derivative_L{}.csv", pc.size)), buf)?;
    }

    let inf_rows: Vec<Vec<String>> = res
        .infinite
        .lambdas
        .iter()
        .zip(&res.infinite.values)
        .enumerate()
        .map(|(i, (l, v))| {
            let d = (l - cfg.lambda_c).abs();
            vec![format_f64(*l), format_f64(d.ln()), format_f64(negativity_at(&res.infinite, i)), format_f64(*v)]
        })
        .collect();
    let mut h = header.clone();
    h.push(format!(
        "fit dN/dlambda = {} ln|lambda - lambda_c| + {}",
        res.infinite_fit.slope, res.infinite_fit.intercept
    ));
    let mut buf = Vec::new();
    write_csv(&mut buf, &h, &["lambda", "ln_abs_delta", "N", "dN_dlambda"], &inf_rows)?;
    fs::write(a.out.join("derivative_inf.csv"), buf)?;

    let min_rows: Vec<Vec<String>> = res
        .minima
        .iter()
        .map(|pc| {
            vec![
                pc.size.to_string(),
                format_f64((pc.size as f64).ln()),
                format_f64(pc.lambda_c),
                format_f64((pc.lambda_c - cfg.lambda_c).abs().ln()),
                format_f64(pc.min_value),
            ]
        })
        .collect();
    if let Some(f) = &res.value_fit {
        header.push(format!("fit minimum = {} ln L + {}", f.slope, f.intercept));
    }
    if let Some(sh) = &res.shift {
        header.push(format!("fit |lambda_c(L) - lambda_c| = {} L^-{}", sh.prefactor, sh.kappa));
    }
    if let Some(nu) = res.nu {
        header.push(format!("nu = {nu}"));
    }
    let mut buf = Vec::new();
    write_csv(
        &mut buf,
        &header,
        &["L", "ln_L", "lambda_c_L", "ln_abs_shift", "minimum"],
        &min_rows,
    )?;
    fs::write(a.out.join("minima.csv"), buf)?;

    let summary = json!({
        "format": FORMAT_VERSION,
        "config": config,
        "result": {
            "infinite_fit": res.infinite_fit,
            "value_fit": res.value_fit,
            "shift": res.shift,
            "nu": res.nu,
            "minima": res.minima.iter().map(|pc| json!({
                "L": pc.size, "lambda_c": pc.lambda_c, "min_value": pc.min_value,
            })).collect::<Vec<_>>(),
            "warnings": res.warnings,
        },
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(a.out.join("summary.json"), text)?;
    let mut so = std::io::stdout().lock();
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    writeln!(
        so,
        "infinite slope {:.6}, finite slope {}, kappa {}, nu {}",
        res.infinite_fit.slope,
        opt(res.value_fit.as_ref().map(|f| f.slope)),
        opt(res.shift.as_ref().map(|s| s.kappa)),
        opt(res.nu)
    )?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Done::Ok)
}

fn dispatch(cmd: &Command) -> xyent::Result<Done> {
    let name = cmd.name();
    match cmd {
        Command::Corr(a) => run_corr(a, &echo(name, a)),
        Command::Expect(a) => run_expect(a, &echo(name, a)),
        Command::Rdm(a) => run_rdm(a, &echo(name, a)),
        Command::Ed(a) => run_ed(a, &echo(name, a)),
        Command::Gmn(a) => run_gmn(a, &echo(name, a)),
        Command::Sep(a) => run_sep(a, &echo(name, a)),
        Command::C4(a) => run_c4(a, &echo(name, a)),
        Command::Scan(a) => run_scan(a, &echo(name, a)),
        Command::Scaling(a) => run_scaling(a, &echo(name, a)),
    }
}

const SUBCOMMANDS: [&str; 9] = ["corr", "expect", "rdm", "ed", "gmn", "sep", "c4", "scan", "scaling"];

fn toml_scalar(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Rewrites `--config FILE` into flags. Keys become `--key value` (underscores
/// as dashes); arrays repeat the flag; `command` selects the subcommand.
/// Flags given on the command line take precedence over the file.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::new();
    let mut config = None;
    let mut it = argv.into_iter();
    let prog = it.next().unwrap_or_else(|| "xyent".into());
    while let Some(arg) = it.next() {
        if arg == "--config" {
            config = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        let mut out = vec![prog];
        out.extend(rest);
        return Ok(out);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let table: toml::Table = text.parse().map_err(|e| format!("invalid config {path}: {e}"))?;

    let cli_command = rest.iter().position(|a| SUBCOMMANDS.contains(&a.as_str()));
    let command = match (cli_command, table.get("command")) {
        (Some(i), _) => rest.remove(i),
        (None, Some(toml::Value::String(s))) => s.clone(),
        _ => return Err(format!("{path}: no `command` key and no subcommand given")),
    };
    let given: BTreeSet<String> = rest
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut out = vec![prog, command];
    for (key, value) in &table {
        if key == "command" {
            continue;
        }
        let flag = key.replace('_', "-");
        if given.contains(&flag) {
            continue;
        }
        match value {
            toml::Value::Array(items) => {
                for item in items {
                    let s = toml_scalar(item).ok_or_else(|| format!("{path}: unsupported value for `{key}`"))?;
                    out.push(format!("--{flag}"));
                    out.push(s);
                }
            }
            v => {
                let s = toml_scalar(v).ok_or_else(|| format!("{path}: unsupported value for `{key}`"))?;
                out.push(format!("--{flag}"));
                out.push(s);
            }
        }
    }
    out.extend(rest);
    Ok(out)
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match dispatch(&cli.command) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::Inconclusive) => ExitCode::from(EXIT_INCONCLUSIVE),
        Err(e) => {
            let record = json!({ "error": e.kind(), "message": e.to_string(), "command": cli.command.name() });
            eprintln!("{record}");
            ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_NUMERICAL })
        }
    }
}
