use std::fmt;
use std::io::Write;
use std::path::Path;

use latvol::bond_volume::{len_bruteforce, len_tetra, DEFAULT_BRUTEFORCE_BUDGET};
use latvol::crystal_model::{build_perfect_problem, CrystalBasis};
use latvol::energy::{patch_test, LennardJones, PairPotential};
use latvol::equilibrium::{
    convergence_csv, convergence_slopes, convergence_study, fourier_scan, stability_csv, stability_model,
    stability_scan, NewtonConfig, StabilityScan, CONVERGENCE_GRADIENT,
};
use latvol::lattice_geometry::{IntVec3, LatticeTet};
use latvol::LatvolError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BondvolConfig, ConvergeConfig, PatchtestConfig, SelftestConfig, StabilityConfig};

pub const OUTPUT_FORMAT_VERSION: &str = "latvol-output/1";
const PATCH_TOLERANCE: f64 = 1e-10;
const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Assertion(String),
    Solver(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Assertion(_) => 1,
            CliError::Invalid(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Assertion(m) => write!(f, "assertion failed: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<LatvolError> for CliError {
    fn from(e: LatvolError) -> Self {
        match e {
            LatvolError::NoConvergence { .. } | LatvolError::LinearSolve(_) | LatvolError::Singularity { .. } => {
                CliError::Solver(e.to_string())
            }
            LatvolError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn envelope<C: Serialize>(command: &str, config: &C, result: Value) -> String {
    let doc = json!({
        "format_version": OUTPUT_FORMAT_VERSION,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("output is serializable");
    s.push('\n');
    s
}

fn csv_header<C: Serialize>(command: &str, config: &C, extra: &[String]) -> String {
    let mut s = format!(
        "# format_version: {OUTPUT_FORMAT_VERSION}\n# command: {command}\n# version: {}\n# config: {}\n",
        env!("CARGO_PKG_VERSION"),
        serde_json::to_string(config).expect("config is serializable"),
    );
    for line in extra {
        s.push_str(&format!("# {line}\n"));
    }
    s
}

pub fn bondvol(cfg: BondvolConfig, out: Option<&Path>) -> Result<(), CliError> {
    let tet = cfg.tet.ok_or_else(|| CliError::Invalid("--tet is required".into()))?;
    let dir = cfg.dir.ok_or_else(|| CliError::Invalid("--dir is required".into()))?;
    let (t, r) = (LatticeTet::from_i64(tet), IntVec3::from(dir));
    let len = len_tetra(&t, &r)?;
    let mut result = json!({ "len": len });
    if cfg.oracle {
        let oracle = len_bruteforce(&t, &r, cfg.budget)?;
        result["oracle_len"] = json!(oracle);
        result["abs_diff"] = json!((len - oracle).abs());
    }
    emit(out, &envelope("bondvol", &cfg, result))
}

fn check_pair(n: i64, k: i64) -> Result<(), CliError> {
    if !(2 <= k && k < n) {
        return Err(CliError::Invalid(format!("need 2 <= K < N, got N = {n}, K = {k}")));
    }
    Ok(())
}

pub fn patchtest(
    cfg: PatchtestConfig,
    model_out: Option<&Path>,
    assert: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    check_pair(cfg.n, cfg.k)?;
    let mut model = build_perfect_problem(cfg.n, cfg.k, &CrystalBasis::fcc())?;
    if cfg.cauchy_born {
        model = model.with_cauchy_born_volumes();
    }
    if let Some(p) = model_out {
        let doc = serde_json::to_string(&model.to_document()).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(p, doc).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    let report = patch_test(&model, &LennardJones::default(), cfg.f)?;
    let result = serde_json::to_value(&report).expect("report is serializable");
    emit(out, &envelope("patchtest", &cfg, result))?;
    if assert && !(report.relative <= PATCH_TOLERANCE) {
        return Err(CliError::Assertion(format!(
            "relative ghost force {:e} exceeds {PATCH_TOLERANCE:e}",
            report.relative
        )));
    }
    Ok(())
}

pub fn converge(cfg: ConvergeConfig, assert: bool, out: Option<&Path>) -> Result<(), CliError> {
    if cfg.n.is_empty() || cfg.k.is_empty() {
        return Err(CliError::Invalid("N and K lists must be nonempty".into()));
    }
    let newton = NewtonConfig {
        max_iterations: cfg.max_iterations,
        gradient_tolerance: cfg.tolerance,
        ..NewtonConfig::default()
    };
    let pot = LennardJones::default();
    let rows = convergence_study(&cfg.n, &cfg.k, &CrystalBasis::fcc(), &pot, cfg.f, &newton)?;
    if rows.is_empty() {
        return Err(CliError::Invalid("no (N, K) pair satisfies 2 <= K < N".into()));
    }
    let mut ns: Vec<i64> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    let mut slopes = Vec::new();
    let mut failures = Vec::new();
    for &n in &ns {
        if rows.iter().filter(|r| r.n == n).count() < 2 {
            continue;
        }
        let (w, e) = convergence_slopes(&rows, n);
        slopes.push(format!("slopes N={n}: w1inf {w:.4} energy {e:.4}"));
        if !(w <= cfg.w1inf_slope_bound && e <= cfg.energy_slope_bound) {
            failures.push(format!("N = {n}: slopes {w:.3}, {e:.3}"));
        }
    }
    let text = csv_header("converge", &cfg, &slopes) + &convergence_csv(&rows);
    emit(out, &text)?;
    if assert && !failures.is_empty() {
        return Err(CliError::Assertion(format!("slopes out of bounds at {}", failures.join("; "))));
    }
    Ok(())
}

pub fn stability(cfg: StabilityConfig, assert: bool, out: Option<&Path>) -> Result<(), CliError> {
    check_pair(cfg.n, cfg.k)?;
    if cfg.k_grid == 0 {
        return Err(CliError::Invalid("k_grid must be positive".into()));
    }
    let basis = CrystalBasis::fcc();
    let pot = LennardJones::default();
    let scan = StabilityScan { t_range: cfg.t_range, s_range: cfg.s_range, step: cfg.step };
    let model = stability_model(cfg.n, cfg.k, &basis)?;
    let coupled = stability_scan(&model, &pot, &scan)?;
    let fourier = fourier_scan(&basis, pot.cutoff(), &pot, &scan, cfg.k_grid)?;
    let contained = coupled.contains(&fourier);
    let summary = format!(
        "stable points: coupled {}, fourier {}; fourier region contained: {contained}",
        coupled.stable_count(),
        fourier.stable_count()
    );
    let text = csv_header("stability", &cfg, &[summary.clone()])
        + &stability_csv(&[("coupled", &coupled), ("fourier", &fourier)]);
    emit(out, &text)?;
    eprintln!("{summary}");
    if assert && !contained {
        return Err(CliError::Assertion("a Fourier-stable point is unstable for the coupled model".into()));
    }
    Ok(())
}

pub fn selftest(cfg: SelftestConfig, out: Option<&Path>) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut oracle_worst = 0.0f64;
    let mut pairs = 0usize;
    for _ in 0..cfg.tets {
        let tet: [[i64; 3]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-4..=4)));
        let dir = loop {
            let d: [i64; 3] = std::array::from_fn(|_| rng.gen_range(-2..=2));
            if d != [0, 0, 0] {
                break d;
            }
        };
        let (t, r) = (LatticeTet::from_i64(tet), IntVec3::from(dir));
        let fast = len_tetra(&t, &r)?;
        let slow = len_bruteforce(&t, &r, DEFAULT_BRUTEFORCE_BUDGET)?;
        oracle_worst = oracle_worst.max((fast - slow).abs() / t.volume().max(1.0));
        pairs += 1;
    }

    let pot = LennardJones::default();
    let model = build_perfect_problem(4, 2, &CrystalBasis::fcc())?;
    let mut patch = Vec::new();
    for f in [[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], CONVERGENCE_GRADIENT] {
        patch.push(patch_test(&model, &pot, f)?.relative);
    }
    let patch_worst = patch.iter().cloned().fold(0.0, f64::max);

    let oracle_ok = oracle_worst <= ORACLE_TOLERANCE;
    let patch_ok = patch_worst <= PATCH_TOLERANCE;
    let result = json!({
        "oracle": { "pairs": pairs, "max_relative_diff": oracle_worst, "pass": oracle_ok },
        "patch": { "relative": patch, "pass": patch_ok },
    });
    emit(out, &envelope("selftest", &cfg, result))?;
    if !(oracle_ok && patch_ok) {
        return Err(CliError::Assertion("selftest failed".into()));
    }
    Ok(())
}
