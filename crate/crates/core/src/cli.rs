//! Command-line driver.
//!
//! Every subcommand resolves its configuration (JSON file, then flags, then
//! defaults), prints one JSON summary line on success, and writes outputs
//! atomically. Exit codes: 0 success, 2 usage or configuration error,
//! 3 numerical failure, 4 I/O failure.

use crate::baseline::{ds_frame_bounds, SequenceRule};
use crate::error::{Error, Result};
use crate::frames::{
    analysis, frame_bounds, gram_matrix, quadratic_forms, reconstruct, scheme_m, synthesis_norm_sq, tilde_map,
    Convention, Method, Override, PerturbationScheme, SchemeRule, SchemeSpec, Truncation,
};
use crate::grid::{make_bump, norm_sq, Bump, ExpSum, GridSpec};
use crate::group::weil_check;
use crate::numfmt::format_g17;
use crate::representations::{hs_norm_sq_integral, hs_norm_sq_kernel, hs_norm_sq_lattice_series, RepParams, WindowSpec};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "heisenframe", version, about = "Frames of representations on the Heisenberg group")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Samples per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long = "Kxy")]
    k_xy: Option<i64>,
    #[arg(long = "Kt")]
    k_t: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct SchemeArgs {
    /// Scheme as inline JSON, or `@path` to read it from a file.
    #[arg(long)]
    scheme: Option<String>,
    /// Overrides `omega_k`; repeatable, as `K=VALUE`.
    #[arg(long = "set-omega", value_parser = parse_omega_override)]
    set_omega: Vec<(i64, f64)>,
    /// Use the unweighted Gram matrix.
    #[arg(long)]
    unweighted: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Harmonic Parseval ratio 2 p(f) / |f|^2 for a bump.
    ParsevalCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<f64>>,
    },
    /// Integral, lattice and kernel routes to the Hilbert-Schmidt norm.
    HsOracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        omegas: Option<Vec<f64>>,
        /// Half-width L of the kernel window [-L, L)^n.
        #[arg(long)]
        window: Option<f64>,
    },
    /// Frame bounds and envelope for one scheme.
    FrameBounds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scheme: SchemeArgs,
    },
    /// Bounds along a sweep of deviation sizes; writes CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "m", value_delimiter = ',')]
        m_values: Option<Vec<f64>>,
        #[arg(long)]
        unweighted: bool,
    },
    /// Round trip of a random in-span function through analysis and reconstruction.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// `gram-solve` or `frame-iteration`.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long = "max-iter")]
        max_iter: Option<usize>,
    },
    /// Unfolding identity for a bump over the lattice quotient.
    WeilCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<f64>>,
        #[arg(long)]
        sharpness: Option<f64>,
        #[arg(long = "gamma-radius")]
        gamma_radius: Option<u32>,
    },
    /// One-dimensional perturbed exponentials.
    DsBaseline {
        #[command(flatten)]
        common: Common,
        #[arg(long = "K")]
        k: Option<i64>,
        /// Sequence rule as inline JSON.
        #[arg(long)]
        sequence: Option<String>,
    },
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<usize>,
    grid: Option<usize>,
    #[serde(rename = "K_xy")]
    k_xy: Option<i64>,
    #[serde(rename = "K_t")]
    k_t: Option<i64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    widths: Option<Vec<f64>>,
    omegas: Option<Vec<f64>>,
    window_half_width: Option<f64>,
    scheme: Option<SchemeSpec>,
    weighted: Option<bool>,
    m_values: Option<Vec<f64>>,
    method: Option<Method>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    sharpness: Option<f64>,
    gamma_radius: Option<u32>,
    #[serde(rename = "K")]
    k: Option<i64>,
    sequence: Option<SequenceRule>,
}

fn parse_omega_override(s: &str) -> std::result::Result<(i64, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected K=VALUE, got {s:?}"))?;
    let k = k.trim().parse::<i64>().map_err(|e| e.to_string())?;
    let v = v.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((k, v))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn read_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))
        }
    }
}

struct Base {
    n: usize,
    grid: usize,
    k_xy: i64,
    k_t: i64,
    seed: u64,
    out: Option<PathBuf>,
}

fn resolve_base(c: &Common, file: &FileConfig, grid: usize, k: i64) -> Result<Base> {
    let base = Base {
        n: c.n.or(file.n).unwrap_or(1),
        grid: c.grid.or(file.grid).unwrap_or(grid),
        k_xy: c.k_xy.or(file.k_xy).unwrap_or(k),
        k_t: c.k_t.or(file.k_t).unwrap_or(k),
        seed: c.seed.or(file.seed).unwrap_or(0),
        out: c.out.clone().or_else(|| file.out.clone()),
    };
    if base.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if base.grid < 2 {
        return Err(usage("--grid must be at least 2"));
    }
    if base.k_xy < 1 || base.k_t < 1 {
        return Err(usage("--Kxy and --Kt must be at least 1"));
    }
    Ok(base)
}

fn resolve_widths(flag: &Option<Vec<f64>>, file: &FileConfig, n: usize) -> Result<Vec<f64>> {
    let w = flag.clone().or_else(|| file.widths.clone()).unwrap_or_else(|| vec![0.9; 2 * n + 1]);
    if w.len() != 2 * n + 1 || w.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
        return Err(usage(format!("--widths needs {} values in (0, 1]", 2 * n + 1)));
    }
    Ok(w)
}

fn resolve_scheme(args: &SchemeArgs, file: &FileConfig, default: SchemeSpec) -> Result<SchemeSpec> {
    let mut spec = match &args.scheme {
        Some(text) => {
            let json = match text.strip_prefix('@') {
                Some(path) => std::fs::read_to_string(path)?,
                None => text.clone(),
            };
            serde_json::from_str(&json).map_err(|e| usage(format!("--scheme: {e}")))?
        }
        None => file.scheme.clone().unwrap_or(default),
    };
    for &(k, value) in &args.set_omega {
        spec.overrides.push(Override::Omega { k, value });
    }
    Ok(spec)
}

fn digest(config: &Value) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn summary(command: &str, config: Value, results: Value) -> Value {
    let mut out = json!({
        "command": command,
        "version": VERSION,
        "config_digest": digest(&config),
        "config": config,
    });
    if let (Some(o), Value::Object(r)) = (out.as_object_mut(), results) {
        o.extend(r);
    }
    out
}

fn json_line(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string(v).expect("json serializes");
    s.push('\n');
    s.into_bytes()
}

fn parseval_check(common: &Common, widths: &Option<Vec<f64>>) -> Result<Value> {
    let file = read_config(&common.config)?;
    let b = resolve_base(common, &file, 64, 8)?;
    let widths = resolve_widths(widths, &file, b.n)?;
    let config = json!({"n": b.n, "grid": b.grid, "K_xy": b.k_xy, "K_t": b.k_t, "widths": widths});
    let spec = GridSpec::cube(b.n, b.grid)?;
    let f = make_bump(&spec, &widths)?;
    let s = PerturbationScheme::harmonic(Truncation::new(b.n, b.k_xy, b.k_t)?);
    let qf = quadratic_forms(&f, &s)?;
    let nf = norm_sq(&f);
    let out = summary(
        "parseval-check",
        config,
        json!({"ratio": 2.0 * qf.p / nf, "p": qf.p, "q": qf.q, "r": qf.r, "phi": qf.phi, "norm_sq": nf}),
    );
    if let Some(path) = &b.out {
        write_atomic(path, &json_line(&out))?;
    }
    Ok(out)
}

fn hs_oracle(common: &Common, omegas: &Option<Vec<f64>>, window: Option<f64>) -> Result<Value> {
    let file = read_config(&common.config)?;
    let b = resolve_base(common, &file, 64, 8)?;
    let omegas = omegas.clone().or_else(|| file.omegas.clone()).unwrap_or_else(|| vec![2.0, -2.0, 4.0]);
    let half = window.or(file.window_half_width).unwrap_or(crate::representations::DEFAULT_WINDOW_HALF_WIDTH);
    let widths = resolve_widths(&None, &file, b.n)?;
    let config = json!({"n": b.n, "grid": b.grid, "K_xy": b.k_xy, "omegas": omegas, "window_half_width": half, "widths": widths});
    let reps = omegas.iter().map(|&w| RepParams::new(w)).collect::<Result<Vec<_>>>()?;
    let spec = GridSpec::cube(b.n, b.grid)?;
    let f = make_bump(&spec, &widths)?;
    let window = WindowSpec::symmetric(b.n, half, spec.spacing(0))?;
    let mut rows = Vec::new();
    let mut csv = String::from("omega,integral,lattice,kernel,max_rel_diff\n");
    let mut worst: f64 = 0.0;
    for r in &reps {
        let integral = hs_norm_sq_integral(r, &f);
        let series = hs_norm_sq_lattice_series(r, &f, b.k_xy)?;
        let lattice = series.value();
        let kernel = hs_norm_sq_kernel(r, &f, &window)?;
        let vals = [integral, lattice, kernel];
        let mut rel: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                rel = rel.max((vals[i] - vals[j]).abs() / vals[i].abs().max(vals[j].abs()));
            }
        }
        worst = worst.max(rel);
        csv.push_str(&[r.omega(), integral, lattice, kernel, rel].map(format_g17).join(","));
        csv.push('\n');
        rows.push(json!({"omega": r.omega(), "integral": integral, "lattice": lattice, "lattice_tail": series.tail(), "kernel": kernel, "max_rel_diff": rel}));
    }
    if let Some(path) = &b.out {
        write_atomic(path, csv.as_bytes())?;
    }
    Ok(summary("hs-oracle", config, json!({"rows": rows, "max_rel_diff": worst})))
}

fn frame_bounds_cmd(common: &Common, args: &SchemeArgs) -> Result<Value> {
    let file = read_config(&common.config)?;
    let b = resolve_base(common, &file, 64, 4)?;
    let spec = resolve_scheme(args, &file, SchemeSpec::harmonic())?;
    let weighted = !args.unweighted && file.weighted.unwrap_or(true);
    let config = json!({"n": b.n, "K_xy": b.k_xy, "K_t": b.k_t, "scheme": spec, "weighted": weighted});
    let s = PerturbationScheme::from_spec(Truncation::new(b.n, b.k_xy, b.k_t)?, &spec)?;
    let report = frame_bounds(&s, weighted)?;
    let report_json = serde_json::to_value(&report).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(path) = &b.out {
        write_atomic(path, &json_line(&report_json))?;
    }
    Ok(summary("frame-bounds", config, json!({"report": report_json})))
}

pub const SWEEP_HEADER: &str = "M,A_est,B_est,envelope_lo,envelope_hi,C_M,T_est";

fn sweep(common: &Common, m_values: &Option<Vec<f64>>, unweighted: bool) -> Result<Value> {
    let file = read_config(&common.config)?;
    let b = resolve_base(common, &file, 64, 4)?;
    let path = b.out.clone().ok_or_else(|| usage("sweep requires --out"))?;
    let ms = m_values.clone().or_else(|| file.m_values.clone()).unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.01]);
    let weighted = !unweighted && file.weighted.unwrap_or(true);
    let limit = 2.0 / b.n as f64;
    if ms.is_empty() || ms.iter().any(|&m| !(m >= 0.0 && m < limit)) {
        return Err(usage(format!("sweep values must lie in [0, {limit})")));
    }
    let config = json!({"n": b.n, "K_xy": b.k_xy, "K_t": b.k_t, "seed": b.seed, "m_values": ms, "weighted": weighted, "rule": "random"});
    let truncation = Truncation::new(b.n, b.k_xy, b.k_t)?;
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    let mut rows = Vec::new();
    for &m in &ms {
        let s = PerturbationScheme::from_spec(truncation, &SchemeSpec::with_rule(SchemeRule::Random { m, seed: b.seed }))?;
        let r = frame_bounds(&s, weighted)?;
        let row = [scheme_m(&s), r.a_est, r.b_est, r.envelope_lo, r.envelope_hi, r.c_m, r.t_est];
        csv.push_str(&row.map(format_g17).join(","));
        csv.push('\n');
        rows.push(json!({"M": row[0], "A_est": r.a_est, "B_est": r.b_est, "degenerate_lower": r.degenerate_lower}));
    }
    write_atomic(&path, csv.as_bytes())?;
    Ok(summary("sweep", config, json!({"rows": rows, "out": path.display().to_string()})))
}

fn reconstruct_cmd(
    common: &Common,
    args: &SchemeArgs,
    method: &Option<String>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> Result<Value> {
    let file = read_config(&common.config)?;
    let b = resolve_base(common, &file, 32, 2)?;
    let default = SchemeSpec::with_rule(SchemeRule::Random { m: 0.05, seed: b.seed });
    let spec = resolve_scheme(args, &file, default)?;
    let method = match method {
        Some(m) => m.parse::<Method>()?,
        None => file.method.unwrap_or(Method::GramSolve),
    };
    let tol = tol.or(file.tol).unwrap_or(1e-10);
    let max_iter = max_iter.or(file.max_iter).unwrap_or(200);
    if !(tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let config = json!({"n": b.n, "grid": b.grid, "K_xy": b.k_xy, "K_t": b.k_t, "seed": b.seed, "scheme": spec,
        "method": method, "tol": tol, "max_iter": max_iter});
    let truncation = Truncation::new(b.n, b.k_xy, b.k_t)?;
    let s = PerturbationScheme::from_spec(truncation, &spec)?;
    let g = random_coefficients(truncation.count(), b.seed);
    let f = synthesize(&s, &g)?;
    let table = analysis(&f, &s, Convention::HaarNormalized)?;
    let target = GridSpec::cube(b.n, b.grid)?;
    let rec = reconstruct(&table, &s, &target, method, tol, max_iter)?;
    let gram = gram_matrix(&s, false)?;
    let diff: Vec<Complex64> = rec.coefficients.iter().zip(&g).map(|(a, b)| a - b).collect();
    let rel = (synthesis_norm_sq(&gram, &diff).max(0.0) / synthesis_norm_sq(&gram, &g)).sqrt();
    if let Some(path) = &b.out {
        let mut buf = Vec::new();
        rec.function.write_hgf1(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    Ok(summary(
        "reconstruct",
        config,
        json!({"relative_l2_error": rel, "iterations": rec.iterations, "residual": rec.residual, "M": scheme_m(&s)}),
    ))
}

/// Synthesis coefficients with real and imaginary parts uniform in `[-1, 1]`, from ChaCha8.
pub fn random_coefficients(count: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Complex64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))).collect()
}

/// `sum_z g_z sqrt(HAAR_SCALE) e_{z~}` over the scheme's truncation.
pub fn synthesize(s: &PerturbationScheme, g: &[Complex64]) -> Result<ExpSum> {
    let root = crate::group::HAAR_SCALE.sqrt();
    let terms = s
        .truncation()
        .indices()
        .iter()
        .zip(g)
        .map(|(z, c)| Ok((tilde_map(s, z)?, c * root)))
        .collect::<Result<Vec<_>>>()?;
    ExpSum::new(s.n(), terms)
}

fn weil_cmd(common: &Common, widths: &Option<Vec<f64>>, sharpness: Option<f64>, radius: Option<u32>) -> Result<Value> {
    let file = read_config(&common.config)?;
    let b = resolve_base(common, &file, 64, 1)?;
    let widths = resolve_widths(widths, &file, b.n)?;
    let sharpness = sharpness.or(file.sharpness).unwrap_or(8.0);
    let radius = radius.or(file.gamma_radius);
    let config = json!({"n": b.n, "grid": b.grid, "widths": widths, "sharpness": sharpness, "gamma_radius": radius});
    let f = Bump::centered(b.n, &widths)?.with_sharpness(sharpness)?;
    let w = weil_check(&f, &GridSpec::cube(b.n, b.grid)?, radius)?;
    let out = summary(
        "weil-check",
        config,
        json!({"lhs": [w.lhs.re, w.lhs.im], "rhs": [w.rhs.re, w.rhs.im], "relative_gap": w.relative_gap(),
            "gamma_radius_used": w.gamma_radius, "contributing_samples": w.contributing}),
    );
    if let Some(path) = &b.out {
        write_atomic(path, &json_line(&out))?;
    }
    Ok(out)
}

fn ds_cmd(common: &Common, k: Option<i64>, sequence: &Option<String>) -> Result<Value> {
    let file = read_config(&common.config)?;
    let out_path = common.out.clone().or_else(|| file.out.clone());
    let k = k.or(file.k).unwrap_or(16);
    if k < 1 {
        return Err(usage("--K must be at least 1"));
    }
    let rule = match sequence {
        Some(text) => serde_json::from_str(text).map_err(|e| usage(format!("--sequence: {e}")))?,
        None => file.sequence.clone().unwrap_or(SequenceRule::Alternating { amp: 0.2 }),
    };
    let config = json!({"K": k, "sequence": rule});
    let report = ds_frame_bounds(&rule.build(k)?)?;
    let doubled = ds_frame_bounds(&rule.build(2 * k)?)?;
    let report_json = serde_json::to_value(&report).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(path) = &out_path {
        write_atomic(path, &json_line(&report_json))?;
    }
    Ok(summary(
        "ds-baseline",
        config,
        json!({"report": report_json, "doubled_K": {"A_est": doubled.a_est, "B_est": doubled.b_est,
            "delta_A": (doubled.a_est - report.a_est).abs(), "delta_B": (doubled.b_est - report.b_est).abs()}}),
    ))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HEISENFRAME_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| usage(format!("HEISENFRAME_THREADS={v:?} is not a count")))?;
        if n > 0 {
            // a pool that already exists keeps its size
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    Ok(())
}

/// Exit code for an error: 4 for I/O, 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn dispatch(command: &Command) -> Result<Value> {
    match command {
        Command::ParsevalCheck { common, widths } => parseval_check(common, widths),
        Command::HsOracle { common, omegas, window } => hs_oracle(common, omegas, *window),
        Command::FrameBounds { common, scheme } => frame_bounds_cmd(common, scheme),
        Command::Sweep { common, m_values, unweighted } => sweep(common, m_values, *unweighted),
        Command::Reconstruct { common, scheme, method, tol, max_iter } => {
            reconstruct_cmd(common, scheme, method, *tol, *max_iter)
        }
        Command::WeilCheck { common, widths, sharpness, gamma_radius } => {
            weil_cmd(common, widths, *sharpness, *gamma_radius)
        }
        Command::DsBaseline { common, k, sequence } => ds_cmd(common, *k, sequence),
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    match dispatch(&cli.command) {
        Ok(v) => {
            println!("{}", serde_json::to_string(&v).expect("json serializes"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
