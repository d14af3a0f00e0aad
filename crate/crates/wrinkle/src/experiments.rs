//! Reproducible experiment harness: configuration with file, environment and
//! flag layers, per-L solves and scans, the scaling-law experiment, the
//! repair test, and report generation from persisted artifacts.
//!
//! Every output is a deterministic function of the configuration: per-L jobs
//! run on a bounded worker pool, but records and tables are written in the
//! order of the configured L list, and no timestamps are recorded.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::build_cascade;
use crate::diagnostics::{regularity_report, solve, structural_checks, CheckReport, SolveResult, X_LO};
use crate::error::{Result, WrinkleError};
use crate::fvk::{assemble_upper_bound, evaluate_el, AssemblyOptions, DeformationField, EnergyBreakdown, E0};
use crate::grid::GridSpec;
use crate::repair::{eta_max, lower_bound_certificate, repair, RepairOptions, TwoSidedField};
use crate::solver::SolveOptions;
use crate::spectral::FrequencyGrid;

/// Prefix of environment variables that override configuration values.
pub const ENV_PREFIX: &str = "WRINKLE_";

/// Version string recorded with every result.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Name of the append-only record file inside the output directory.
pub const RECORDS_FILE: &str = "records.jsonl";

/// Full description of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form label.
    pub experiment: String,
    /// Half-periods to process.
    #[serde(rename = "L")]
    pub l_values: Vec<f64>,
    /// x-grid.
    pub grid: GridSpec,
    /// Modes per unit of `L`; the cap is `ceil(modes_per_unit * L)`.
    pub modes_per_unit: u32,
    /// Solver controls; `solver.seed` is replaced by `seed`.
    pub solver: SolveOptions,
    /// Base half-period of the scaling experiment.
    pub l0: f64,
    /// Cutoff scales `delta = factor / L` tried by the scaling experiment;
    /// the smallest excess is kept.
    pub delta_factors: Vec<f64>,
    /// Intervals on `[-1, 0]` of assembled deformations.
    pub neg_intervals: usize,
    /// Mollification scale of the repair; `None` selects `min(L^-1/2, pi^-6/2)`.
    pub eta: Option<f64>,
    /// Amplitude factor applied to the cascade in the repair test.
    pub repair_scale: f64,
    /// Relative slack of the sigma inequalities in scans.
    pub inequality_tol: f64,
    /// Output directory.
    pub out_dir: PathBuf,
    /// Seed of every random choice.
    pub seed: u64,
    /// Worker threads for per-L jobs.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: "wrinkle".into(),
            l_values: vec![1.0, 2.0, 4.0, 8.0],
            grid: GridSpec::LogLinear { n: 400, x_c: 1e-4, beta: 2.0 },
            modes_per_unit: 32,
            solver: SolveOptions::default(),
            l0: 4.0,
            delta_factors: vec![1.0, 2.0, 4.0, 8.0],
            neg_intervals: 64,
            eta: None,
            repair_scale: 0.9,
            inequality_tol: 1e-3,
            out_dir: PathBuf::from("wrinkle-out"),
            seed: 0,
            workers: 1,
        }
    }
}

/// Command-line overrides; `None` leaves the configured value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// `--L`.
    pub l_values: Option<Vec<f64>>,
    /// `--grid-n`.
    pub grid_n: Option<usize>,
    /// `--modes`.
    pub modes_per_unit: Option<u32>,
    /// `--seed`.
    pub seed: Option<u64>,
    /// `--out`.
    pub out_dir: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> WrinkleError {
    WrinkleError::InvalidParameter(msg.into())
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| invalid(format!("cannot parse {t:?} as a number"))))
        .collect()
}

fn with_intervals(g: &GridSpec, n: usize) -> GridSpec {
    match *g {
        GridSpec::Uniform { .. } => GridSpec::Uniform { n },
        GridSpec::Power { gamma, .. } => GridSpec::Power { n, gamma },
        GridSpec::LogLinear { x_c, beta, .. } => GridSpec::LogLinear { n, x_c, beta },
    }
}

impl ExperimentConfig {
    /// Reads a JSON config file.
    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
    }

    /// Applies `WRINKLE_*` variables: `L`, `GRID_N`, `MODES`, `SEED`, `OUT`,
    /// `WORKERS`, `L0`. Unknown names with the prefix are rejected.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        for (key, val) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            let bad = || invalid(format!("cannot parse {key}={val:?}"));
            match name {
                "L" => self.l_values = parse_list(&val)?,
                "GRID_N" => self.grid = with_intervals(&self.grid, val.parse().map_err(|_| bad())?),
                "MODES" => self.modes_per_unit = val.parse().map_err(|_| bad())?,
                "SEED" => self.seed = val.parse().map_err(|_| bad())?,
                "OUT" => self.out_dir = PathBuf::from(val),
                "WORKERS" => self.workers = val.parse().map_err(|_| bad())?,
                "L0" => self.l0 = val.parse().map_err(|_| bad())?,
                _ => return Err(invalid(format!("unknown override variable {key}"))),
            }
        }
        Ok(())
    }

    /// Applies command-line overrides.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.l_values {
            self.l_values = v.clone();
        }
        if let Some(n) = o.grid_n {
            self.grid = with_intervals(&self.grid, n);
        }
        if let Some(m) = o.modes_per_unit {
            self.modes_per_unit = m;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
    }

    /// Checks every value before any computation starts.
    pub fn validate(&self) -> Result<()> {
        if self.l_values.is_empty() {
            return Err(invalid("the L list is empty"));
        }
        for &l in self.l_values.iter().chain(std::iter::once(&self.l0)) {
            if !(l >= 1.0) || !l.is_finite() {
                return Err(invalid(format!("every L must be finite and >= 1, got {l}")));
            }
        }
        let mut sorted = self.l_values.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate L values"));
        }
        self.grid.build()?;
        if self.modes_per_unit < 2 {
            return Err(invalid("modes_per_unit must be at least 2"));
        }
        let s = &self.solver;
        if !(s.grad_tol > 0.0) || s.max_iters == 0 || s.restarts == 0 {
            return Err(invalid("solver needs grad_tol > 0, max_iters >= 1, restarts >= 1"));
        }
        if !(s.tau_final > 0.0 && s.tau_final <= s.tau_start) || !(s.tau_factor > 0.0 && s.tau_factor < 1.0) {
            return Err(invalid("barrier schedule needs 0 < tau_final <= tau_start and 0 < tau_factor < 1"));
        }
        if self.delta_factors.is_empty() || self.delta_factors.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(invalid("delta_factors must be a nonempty list of positive numbers"));
        }
        if self.neg_intervals < 7 {
            return Err(invalid("neg_intervals must be at least 7"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta < eta_max()) {
                return Err(invalid(format!("eta must lie in (0, pi^-6), got {eta}")));
            }
        }
        if !(self.repair_scale > 0.0) || !(self.inequality_tol >= 0.0) {
            return Err(invalid("repair_scale must be positive and inequality_tol nonnegative"));
        }
        if self.workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        Ok(())
    }

    /// Hash of everything that influences results (all fields except the
    /// output directory and the worker count), as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.workers = 1;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }

    /// Solver options with the configured seed.
    pub fn solver_options(&self) -> SolveOptions {
        SolveOptions { seed: self.seed, ..self.solver.clone() }
    }

    /// Mode cap for half-period `l`.
    pub fn mode_cap(&self, l: f64) -> u32 {
        ((self.modes_per_unit as f64 * l).ceil() as u32).max(2 * l.floor() as u32)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Exit status of the command-line tool for an error.
pub fn exit_code(e: &WrinkleError) -> i32 {
    match e {
        WrinkleError::NonConvergence(_) => 3,
        WrinkleError::Io(_) | WrinkleError::Csv(_) => 4,
        _ => 2,
    }
}

/// Filename-safe rendering of `L`.
pub fn l_tag(l: f64) -> String {
    format!("{l}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| WrinkleError::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// One line of the append-only record file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    /// Hash of the producing configuration.
    pub config_hash: String,
    /// Crate version.
    pub code_version: String,
    /// Half-period.
    #[serde(rename = "L")]
    pub l: f64,
    /// Estimate of `sigma_L`; absent when the solve failed.
    pub sigma: Option<f64>,
    /// Iterations of the kept start.
    pub iterations: usize,
    /// Tolerance met.
    pub converged: bool,
    /// Aggregate Euler-Lagrange residual.
    pub el_residual: f64,
    /// Largest constraint violation.
    pub constraint_residual: f64,
    /// Relative tangential gradient.
    pub projected_gradient: f64,
    /// Passed structural checks.
    pub checks_passed: usize,
    /// Structural checks with a pass/fail verdict.
    pub checks_total: usize,
    /// Names of failed checks.
    pub failed_checks: Vec<String>,
    /// Regularity constants in moment order.
    pub regularity_constants: Vec<f64>,
    /// Error message of a failed solve.
    pub error: Option<String>,
}

#[derive(Serialize)]
struct LambdaRow<'a> {
    config_hash: &'a str,
    x: f64,
    lambda: Option<f64>,
    lambda_discrete: Option<f64>,
}

#[derive(Serialize)]
struct MuRow<'a> {
    config_hash: &'a str,
    mode: u32,
    k: f64,
    x: f64,
    mu: f64,
}

#[derive(Serialize)]
struct SpectrumRow<'a> {
    config_hash: &'a str,
    mode: u32,
    k: f64,
    x: f64,
    amplitude: f64,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Solves at one `L` and returns the result with its checks.
pub fn run_single(cfg: &ExperimentConfig, l: f64) -> Result<(SolveResult, CheckReport)> {
    let freq = FrequencyGrid::dense(l, cfg.mode_cap(l))?;
    let x = cfg.grid.build()?;
    let res = solve(&freq, &x, &cfg.solver_options(), None)?;
    let checks = structural_checks(&res);
    Ok((res, checks))
}

/// Writes the per-L artifacts and returns the record.
fn persist_single(cfg: &ExperimentConfig, hash: &str, res: &SolveResult, checks: &CheckReport) -> Result<ScanRecord> {
    let l = res.field.l();
    let tag = l_tag(l);
    let reg = regularity_report(&res.field, X_LO);
    write_atomic(&cfg.path(&format!("solve_L{tag}.json")), res.to_json()?.as_bytes())?;
    write_json(&cfg.path(&format!("checks_L{tag}.json")), checks)?;
    write_atomic(&cfg.path(&format!("checks_L{tag}.txt")), checks.to_text().as_bytes())?;
    write_json(&cfg.path(&format!("regularity_L{tag}.json")), &reg)?;
    let xs = res.field.xgrid().nodes();
    let lambda: Vec<LambdaRow> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| LambdaRow {
            config_hash: hash,
            x,
            lambda: finite(res.multiplier.lambda[i]),
            lambda_discrete: finite(res.lambda_discrete[i]),
        })
        .collect();
    write_csv(&cfg.path(&format!("lambda_L{tag}.csv")), &lambda)?;
    let mut mu = Vec::new();
    for j in 0..res.mu.modes.len() {
        for (i, &x) in res.mu.x.iter().enumerate() {
            if let Some(v) = res.mu.get(j, i) {
                mu.push(MuRow { config_hash: hash, mode: res.mu.modes[j], k: res.mu.k[j], x, mu: v });
            }
        }
    }
    write_csv(&cfg.path(&format!("mu_L{tag}.csv")), &mu)?;
    let f = &res.field;
    let mut spec = Vec::new();
    for j in 0..f.freq().len() {
        if f.sup_of_mode(j) == 0.0 {
            continue;
        }
        for (i, &x) in xs.iter().enumerate() {
            spec.push(SpectrumRow { config_hash: hash, mode: f.freq().modes()[j], k: f.freq().k(j), x, amplitude: f.row(j)[i] });
        }
    }
    write_csv(&cfg.path(&format!("spectrum_L{tag}.csv")), &spec)?;
    let verdicts: Vec<_> = checks.items.iter().filter(|c| c.bound.is_some()).collect();
    Ok(ScanRecord {
        config_hash: hash.into(),
        code_version: CODE_VERSION.into(),
        l,
        sigma: Some(res.sigma_estimate),
        iterations: res.iterations,
        converged: res.converged,
        el_residual: res.el.aggregate,
        constraint_residual: res.constraint_residual,
        projected_gradient: res.projected_gradient,
        checks_passed: verdicts.iter().filter(|c| c.passed).count(),
        checks_total: verdicts.len(),
        failed_checks: verdicts.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect(),
        regularity_constants: reg.constants(),
        error: None,
    })
}

/// Solves at one `L`, writes its artifacts into the output directory and
/// returns the record (which is not appended to the record file).
pub fn solve_and_persist(cfg: &ExperimentConfig, l: f64) -> Result<ScanRecord> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let (res, checks) = run_single(cfg, l)?;
    persist_single(cfg, &cfg.hash(), &res, &checks)
}

fn failed_record(hash: &str, l: f64, e: &WrinkleError) -> ScanRecord {
    ScanRecord {
        config_hash: hash.into(),
        code_version: CODE_VERSION.into(),
        l,
        sigma: None,
        iterations: 0,
        converged: false,
        el_residual: f64::NAN,
        constraint_residual: f64::NAN,
        projected_gradient: f64::NAN,
        checks_passed: 0,
        checks_total: 0,
        failed_checks: vec![],
        regularity_constants: vec![],
        error: Some(e.to_string()),
    }
}

/// Records of the record file that belong to `hash`, keyed by `L`.
pub fn load_records(dir: &Path, hash: &str) -> Result<BTreeMap<String, ScanRecord>> {
    let path = dir.join(RECORDS_FILE);
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    for line in fs::read_to_string(&path)?.lines() {
        // A torn final line from an interrupted run is skipped.
        let Ok(rec) = serde_json::from_str::<ScanRecord>(line) else { continue };
        if rec.config_hash == hash {
            out.insert(l_tag(rec.l), rec);
        }
    }
    Ok(out)
}

/// Runs one job per `L` on the worker pool and appends the records in the
/// configured order as soon as each prefix is complete. `L` values with a
/// record from the same configuration are not recomputed.
fn run_jobs(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<ScanRecord>> {
    fs::create_dir_all(&cfg.out_dir)?;
    let done = load_records(&cfg.out_dir, hash)?;
    let pending: Vec<(usize, f64)> =
        cfg.l_values.iter().copied().enumerate().filter(|(_, l)| !done.contains_key(&l_tag(*l))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    let mut file = OpenOptions::new().create(true).append(true).open(cfg.out_dir.join(RECORDS_FILE))?;
    let mut results: Vec<Option<ScanRecord>> = cfg.l_values.iter().map(|l| done.get(&l_tag(*l)).cloned()).collect();
    let (tx, rx) = mpsc::channel::<(usize, Result<ScanRecord>)>();
    std::thread::scope(|s| -> Result<()> {
        s.spawn(|| {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, &(idx, l)| {
                    let rec = match run_single(cfg, l) {
                        Ok((res, checks)) => persist_single(cfg, hash, &res, &checks),
                        Err(e) if matches!(e, WrinkleError::Io(_)) => Err(e),
                        Err(e) => Ok(failed_record(hash, l, &e)),
                    };
                    let _ = tx.send((idx, rec));
                });
            });
        });
        let mut next = 0;
        for (idx, rec) in rx {
            results[idx] = Some(rec?);
            while next < results.len() {
                match &results[next] {
                    Some(r) if pending.iter().any(|p| p.0 == next) => {
                        writeln!(file, "{}", serde_json::to_string(r)?)?;
                        file.flush()?;
                    }
                    Some(_) => {}
                    None => break,
                }
                next += 1;
            }
        }
        Ok(())
    })?;
    Ok(results.into_iter().map(|r| r.expect("every job reports")).collect())
}

/// Pairwise check of one sigma inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    /// `decrease` (`sigma_{NL} <= sigma_L`), `growth` (`sigma_{aL} <= a^2
    /// sigma_L`) or `uniform` (`sigma_L <= 4 sigma_1`).
    pub kind: String,
    /// Smaller half-period.
    pub l_small: f64,
    /// Larger half-period.
    pub l_large: f64,
    /// Left side.
    pub lhs: f64,
    /// Right side including the slack.
    pub rhs: f64,
    /// Verdict.
    pub passed: bool,
}

/// Evaluates every applicable inequality among the scanned values.
pub fn sigma_inequalities(sigma: &[(f64, f64)], tol: f64) -> Vec<InequalityCheck> {
    let mut out = Vec::new();
    let mut push = |kind: &str, ls: f64, ll: f64, lhs: f64, rhs: f64| {
        let rhs = rhs * (1.0 + tol);
        out.push(InequalityCheck { kind: kind.into(), l_small: ls, l_large: ll, lhs, rhs, passed: lhs <= rhs });
    };
    for &(la, sa) in sigma {
        for &(lb, sb) in sigma {
            if lb <= la {
                continue;
            }
            let ratio = lb / la;
            if (ratio - ratio.round()).abs() < 1e-12 {
                push("decrease", la, lb, sb, sa);
            }
            push("growth", la, lb, sb, ratio * ratio * sa);
        }
    }
    if let Some(&(_, s1)) = sigma.iter().find(|(l, _)| *l == 1.0) {
        for &(l, s) in sigma {
            push("uniform", 1.0, l, s, 4.0 * s1);
        }
    }
    out
}

/// Scan result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    /// Hash of the configuration.
    pub config_hash: String,
    /// One record per L in configured order.
    pub records: Vec<ScanRecord>,
    /// Pairwise inequalities among the successful solves.
    pub inequalities: Vec<InequalityCheck>,
}

impl ScanOutcome {
    /// True when every solve converged.
    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }
}

#[derive(Serialize)]
struct ScanCsvRow<'a> {
    config_hash: &'a str,
    #[serde(rename = "L")]
    l: f64,
    sigma: Option<f64>,
    iterations: usize,
    converged: bool,
    el_residual: f64,
    checks_passed: usize,
    checks_total: usize,
    error: &'a str,
}

/// Solves every configured `L` and writes per-L artifacts plus `scan.csv`
/// and `scan.json`; failed solves are recorded and the scan continues.
pub fn sigma_scan(cfg: &ExperimentConfig) -> Result<ScanOutcome> {
    cfg.validate()?;
    let hash = cfg.hash();
    let records = run_jobs(cfg, &hash)?;
    let sig: Vec<(f64, f64)> = records.iter().filter_map(|r| r.sigma.map(|s| (r.l, s))).collect();
    let inequalities = sigma_inequalities(&sig, cfg.inequality_tol);
    let rows: Vec<ScanCsvRow> = records
        .iter()
        .map(|r| ScanCsvRow {
            config_hash: &hash,
            l: r.l,
            sigma: r.sigma,
            iterations: r.iterations,
            converged: r.converged,
            el_residual: r.el_residual,
            checks_passed: r.checks_passed,
            checks_total: r.checks_total,
            error: r.error.as_deref().unwrap_or(""),
        })
        .collect();
    write_csv(&cfg.path("scan.csv"), &rows)?;
    let outcome = ScanOutcome { config_hash: hash, records, inequalities };
    write_json(&cfg.path("scan.json"), &outcome)?;
    Ok(outcome)
}

/// One row of the scaling table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    /// Hash of the configuration.
    pub config_hash: String,
    /// Thickness `h = L^-2`.
    pub h: f64,
    /// Half-period.
    #[serde(rename = "L")]
    pub l: f64,
    /// Number of base periods.
    pub copies: u32,
    /// Cutoff scale.
    pub delta: f64,
    /// `E_L` of the assembled deformation.
    pub e_l: f64,
    /// `E_0 = -5/3`.
    pub e0: f64,
    /// `L^2 (E_L - E_0)`.
    pub excess_scaled: f64,
    /// Estimate of `sigma_{L0}`.
    pub sigma_l0: f64,
    /// Upper estimate of `sigma_L` (the periodic extension of the base
    /// minimizer).
    pub sigma_l: f64,
    /// Measured repair overhead.
    pub delta_hat: f64,
    /// `excess_scaled + delta_hat - sigma_l`.
    pub certificate: f64,
    /// Energy terms.
    #[serde(flatten)]
    pub terms: EnergyBreakdown,
}

/// Scaling experiment result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingOutcome {
    /// Hash of the configuration.
    pub config_hash: String,
    /// Base half-period.
    pub l0: f64,
    /// Estimate of `sigma_{L0}`.
    pub sigma_l0: f64,
    /// Base solve converged.
    pub converged: bool,
    /// Best cutoff per L.
    pub rows: Vec<ScalingRow>,
    /// Every cutoff tried.
    pub candidates: Vec<ScalingRow>,
}

#[derive(Serialize)]
struct ScalingCsvRow<'a> {
    config_hash: &'a str,
    h: f64,
    #[serde(rename = "L")]
    l: f64,
    copies: u32,
    delta: f64,
    e_l: f64,
    e0: f64,
    excess_scaled: f64,
    sigma_l0: f64,
    sigma_l: f64,
    delta_hat: f64,
    certificate: f64,
    t1a: f64,
    t1b: f64,
    t1c: f64,
    t2: f64,
    t3: f64,
    t4: f64,
    t5: f64,
}

impl<'a> From<&'a ScalingRow> for ScalingCsvRow<'a> {
    fn from(r: &'a ScalingRow) -> Self {
        let t = &r.terms;
        ScalingCsvRow {
            config_hash: &r.config_hash,
            h: r.h,
            l: r.l,
            copies: r.copies,
            delta: r.delta,
            e_l: r.e_l,
            e0: r.e0,
            excess_scaled: r.excess_scaled,
            sigma_l0: r.sigma_l0,
            sigma_l: r.sigma_l,
            delta_hat: r.delta_hat,
            certificate: r.certificate,
            t1a: t.t1a,
            t1b: t.t1b,
            t1c: t.t1c,
            t2: t.t2,
            t3: t.t3,
            t4: t.t4,
            t5: t.t5,
        }
    }
}

fn scaling_row(
    hash: &str,
    d: &DeformationField,
    delta: f64,
    sigma_l0: f64,
    repair_opts: &RepairOptions,
) -> Result<ScalingRow> {
    let cert = lower_bound_certificate(d, sigma_l0, repair_opts)?;
    Ok(ScalingRow {
        config_hash: hash.into(),
        h: d.l.powi(-2),
        l: d.l,
        copies: d.copies,
        delta,
        e_l: cert.energy.total,
        e0: E0,
        excess_scaled: cert.excess_scaled,
        sigma_l0,
        sigma_l: sigma_l0,
        delta_hat: cert.delta_hat,
        certificate: cert.value,
        terms: cert.energy,
    })
}

/// Solves on `L0`, assembles the upper-bound deformation on every configured
/// `L` (integer multiples of `L0`) for each cutoff factor, and reports the
/// normalized excess and the repair-based certificate.
pub fn scaling_law(cfg: &ExperimentConfig) -> Result<ScalingOutcome> {
    cfg.validate()?;
    let mut copies = Vec::new();
    for &l in &cfg.l_values {
        let n = l / cfg.l0;
        if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
            return Err(invalid(format!("L = {l} is not a positive integer multiple of L0 = {}", cfg.l0)));
        }
        copies.push(n.round() as u32);
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let hash = cfg.hash();
    let (base, _) = run_single(cfg, cfg.l0)?;
    let sigma_l0 = base.sigma_estimate;
    let asm = AssemblyOptions { ny: None, neg_intervals: cfg.neg_intervals };
    let repair_opts = RepairOptions { eta: cfg.eta, ..Default::default() };
    let mut rows = Vec::new();
    let mut candidates = Vec::new();
    for (&l, &n) in cfg.l_values.iter().zip(&copies) {
        let mut best: Option<ScalingRow> = None;
        for &f in &cfg.delta_factors {
            let delta = f / l;
            if delta >= 1.0 {
                continue;
            }
            let d = assemble_upper_bound(&base.field, n, delta, &asm)?;
            let row = scaling_row(&hash, &d, delta, sigma_l0, &repair_opts)?;
            if best.as_ref().is_none_or(|b| row.excess_scaled < b.excess_scaled) {
                best = Some(row.clone());
            }
            candidates.push(row);
        }
        rows.push(best.ok_or_else(|| invalid(format!("no cutoff factor gives delta < 1 at L = {l}")))?);
    }
    let outcome = ScalingOutcome { config_hash: hash, l0: cfg.l0, sigma_l0, converged: base.converged, rows, candidates };
    let csv_rows: Vec<ScalingCsvRow> = outcome.rows.iter().map(ScalingCsvRow::from).collect();
    write_csv(&cfg.path("scaling.csv"), &csv_rows)?;
    write_json(&cfg.path("scaling.json"), &outcome)?;
    Ok(outcome)
}

/// One row of the repair test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairRow {
    /// Hash of the configuration.
    pub config_hash: String,
    /// Half-period.
    #[serde(rename = "L")]
    pub l: f64,
    /// Mollification scale.
    pub eta: f64,
    /// `min (sum g^2 k^2 - 2x)`.
    pub feasibility_margin: f64,
    /// Largest `|g_k(0)|`.
    pub g_at_zero: f64,
    /// Measured overhead.
    pub delta_hat: f64,
    /// Penalty of the input.
    pub penalty: f64,
    /// Energy of the input.
    pub energy_input: f64,
    /// Energy of the output.
    pub energy_output: f64,
    /// Ramp component.
    pub ramp_cost: f64,
    /// Cascade component.
    pub cascade_cost: f64,
    /// Compensating-mode component.
    pub compensation_cost: f64,
    /// Fitted deficit constant.
    pub c_bar_fit: f64,
    /// Compensating wavenumber.
    pub k0: f64,
}

/// Repair test result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairTestOutcome {
    /// Hash of the configuration.
    pub config_hash: String,
    /// One row per L.
    pub rows: Vec<RepairRow>,
    /// `delta_hat` strictly decreases along the L list sorted ascending.
    pub delta_hat_decreasing: bool,
}

/// Repairs the scaled cascade on every configured `L`.
pub fn repair_test(cfg: &ExperimentConfig) -> Result<RepairTestOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let hash = cfg.hash();
    let x = cfg.grid.build()?;
    let opts = RepairOptions { eta: cfg.eta, ..Default::default() };
    let mut rows = Vec::new();
    for &l in &cfg.l_values {
        let mut u = build_cascade(l, 1.0, &x, None)?.field;
        for j in 0..u.freq().len() {
            let r: Vec<f64> = u.row(j).iter().map(|a| cfg.repair_scale * a).collect();
            u.set_row(j, &r);
        }
        let v = TwoSidedField::from_one_sided(&u, cfg.neg_intervals)?;
        let out = repair(&v, &opts)?;
        let g = &out.field;
        let g0 = (0..g.freq().len()).map(|j| g.row(j)[0].abs()).fold(0.0, f64::max);
        let b = out.budget;
        rows.push(RepairRow {
            config_hash: hash.clone(),
            l,
            eta: b.eta,
            feasibility_margin: out.feasibility_margin,
            g_at_zero: g0,
            delta_hat: b.delta_hat,
            penalty: b.penalty,
            energy_input: b.energy_input,
            energy_output: b.energy_output,
            ramp_cost: b.ramp_cost,
            cascade_cost: b.cascade_cost,
            compensation_cost: b.compensation_cost,
            c_bar_fit: b.c_bar_fit,
            k0: b.k0,
        });
    }
    let mut by_l: Vec<(f64, f64)> = rows.iter().map(|r| (r.l, r.delta_hat)).collect();
    by_l.sort_by(|a, b| a.0.total_cmp(&b.0));
    let delta_hat_decreasing = by_l.windows(2).all(|w| w[1].1 < w[0].1);
    let outcome = RepairTestOutcome { config_hash: hash, rows, delta_hat_decreasing };
    write_csv(&cfg.path("repair.csv"), &outcome.rows)?;
    write_json(&cfg.path("repair.json"), &outcome)?;
    Ok(outcome)
}

/// Energy terms of a deformation read from disk, for the `report` path.
pub fn evaluate_file(path: &Path) -> Result<EnergyBreakdown> {
    evaluate_el(&DeformationField::from_json(&fs::read_to_string(path)?)?)
}

/// Bundle assembled from the artifacts of an output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Scan summary, if present.
    pub scan: Option<ScanOutcome>,
    /// Structural checks per L.
    pub checks: Vec<CheckReport>,
    /// Scaling experiment, if present.
    pub scaling: Option<ScalingOutcome>,
    /// Repair test, if present.
    pub repair: Option<RepairTestOutcome>,
}

fn read_opt<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}

impl Report {
    /// Loads whatever artifacts exist in `dir`; a missing directory gives an
    /// empty report.
    pub fn load(dir: &Path) -> Result<Report> {
        let mut checks: Vec<CheckReport> = Vec::new();
        if dir.exists() {
            let mut names: Vec<PathBuf> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    let n = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
                    n.starts_with("checks_L") && n.ends_with(".json")
                })
                .collect();
            names.sort();
            for p in names {
                checks.push(serde_json::from_str(&fs::read_to_string(&p)?)?);
            }
            checks.sort_by(|a, b| a.l.total_cmp(&b.l));
        }
        Ok(Report {
            scan: read_opt(&dir.join("scan.json"))?,
            checks,
            scaling: read_opt(&dir.join("scaling.json"))?,
            repair: read_opt(&dir.join("repair.json"))?,
        })
    }

    /// Markdown rendering.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Wrinkle experiment report\n\n");
        if self.scan.is_none() && self.checks.is_empty() && self.scaling.is_none() && self.repair.is_none() {
            s.push_str("No runs found.\n");
            return s;
        }
        if let Some(scan) = &self.scan {
            s.push_str(&format!("## Sigma scan (config {})\n\n", scan.config_hash));
            s.push_str("| L | sigma | iterations | converged | checks |\n|---|---|---|---|---|\n");
            for r in &scan.records {
                let sigma = r.sigma.map_or_else(|| "failed".into(), |v| format!("{v:.9}"));
                s.push_str(&format!(
                    "| {} | {} | {} | {} | {}/{} |\n",
                    r.l, sigma, r.iterations, r.converged, r.checks_passed, r.checks_total
                ));
            }
            let failed: Vec<_> = scan.inequalities.iter().filter(|c| !c.passed).collect();
            s.push_str(&format!(
                "\nSigma inequalities: {} checked, {} failed.\n",
                scan.inequalities.len(),
                failed.len()
            ));
            for c in failed {
                s.push_str(&format!("- FAIL {} L={} vs L={}: {} > {}\n", c.kind, c.l_large, c.l_small, c.lhs, c.rhs));
            }
            s.push('\n');
        }
        for c in &self.checks {
            s.push_str(&format!("## Structural checks, L = {}\n\n```\n{}```\n\n", c.l, c.to_text()));
        }
        if let Some(sc) = &self.scaling {
            s.push_str(&format!(
                "## Scaling law (config {}, L0 = {}, sigma_L0 = {:.6})\n\n",
                sc.config_hash, sc.l0, sc.sigma_l0
            ));
            s.push_str("| h | L | delta | E_L | L^2 (E_L - E_0) | delta_hat | certificate |\n|---|---|---|---|---|---|---|\n");
            for r in &sc.rows {
                s.push_str(&format!(
                    "| {:.6e} | {} | {:.6} | {:.9} | {:.6} | {:.6} | {:.6} |\n",
                    r.h, r.l, r.delta, r.e_l, r.excess_scaled, r.delta_hat, r.certificate
                ));
            }
            s.push('\n');
        }
        if let Some(rp) = &self.repair {
            s.push_str(&format!("## Repair test (config {})\n\n", rp.config_hash));
            s.push_str("| L | eta | margin | g(0) | delta_hat | ramp | cascade | compensation |\n|---|---|---|---|---|---|---|---|\n");
            for r in &rp.rows {
                s.push_str(&format!(
                    "| {} | {:.4e} | {:.3e} | {} | {:.6} | {:.4e} | {:.6} | {:.6} |\n",
                    r.l, r.eta, r.feasibility_margin, r.g_at_zero, r.delta_hat, r.ramp_cost, r.cascade_cost, r.compensation_cost
                ));
            }
            s.push_str(&format!("\ndelta_hat strictly decreasing in L: {}\n", rp.delta_hat_decreasing));
        }
        s
    }
}

/// Writes `report.md` and `report.json` into `dir` from its artifacts.
pub fn report(dir: &Path) -> Result<Report> {
    let r = Report::load(dir)?;
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("report.md"), r.to_markdown().as_bytes())?;
    write_json(&dir.join("report.json"), &r)?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            l_values: vec![1.0, 2.0],
            grid: GridSpec::LogLinear { n: 60, x_c: 1e-3, beta: 2.0 },
            modes_per_unit: 8,
            solver: SolveOptions { restarts: 1, ..Default::default() },
            out_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn overrides_apply_in_layers() {
        let mut c = ExperimentConfig::default();
        c.apply_env(vec![("WRINKLE_L".into(), "1, 3".into()), ("HOME".into(), "/x".into())]).unwrap();
        assert_eq!(c.l_values, vec![1.0, 3.0]);
        c.apply(&Overrides { grid_n: Some(50), seed: Some(9), ..Default::default() });
        assert_eq!(c.grid.intervals(), 50);
        assert_eq!(c.seed, 9);
        assert!(c.apply_env(vec![("WRINKLE_BOGUS".into(), "1".into())]).is_err());
        assert!(c.apply_env(vec![("WRINKLE_SEED".into(), "x".into())]).is_err());
    }

    #[test]
    fn validation_rejects_bad_values_and_hash_ignores_output_location() {
        let mut c = ExperimentConfig::default();
        c.validate().unwrap();
        let h = c.hash();
        c.out_dir = "elsewhere".into();
        c.workers = 4;
        assert_eq!(c.hash(), h);
        c.seed = 1;
        assert_ne!(c.hash(), h);
        for bad in [
            ExperimentConfig { l_values: vec![0.5], ..Default::default() },
            ExperimentConfig { l_values: vec![], ..Default::default() },
            ExperimentConfig { eta: Some(0.01), ..Default::default() },
            ExperimentConfig { workers: 0, ..Default::default() },
            ExperimentConfig { l_values: vec![2.0, 2.0], ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(WrinkleError::InvalidParameter(_))));
        }
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn inequalities_cover_integer_multiples_and_growth() {
        let checks = sigma_inequalities(&[(1.0, 10.0), (1.5, 5.0), (2.0, 4.0), (4.0, 3.9)], 1e-3);
        assert!(checks.iter().all(|c| c.passed));
        assert!(checks.iter().any(|c| c.kind == "decrease" && c.l_small == 2.0 && c.l_large == 4.0));
        assert!(!checks.iter().any(|c| c.kind == "decrease" && c.l_small == 1.5 && c.l_large == 2.0));
        let bad = sigma_inequalities(&[(1.0, 1.0), (2.0, 1.5)], 1e-3);
        assert!(bad.iter().any(|c| c.kind == "decrease" && !c.passed));
    }

    #[test]
    fn empty_report_is_valid_and_regeneration_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(dir.path()).unwrap();
        assert!(r.to_markdown().contains("No runs found."));
        let first = fs::read(dir.path().join("report.json")).unwrap();
        report(dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("report.json")).unwrap());
    }

    #[test]
    fn scaling_table_has_constant_anchor_and_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { l_values: vec![2.0, 4.0], l0: 2.0, delta_factors: vec![1.0], ..small(dir.path()) };
        let out = scaling_law(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows.iter().all(|r| r.e0 == E0 && r.excess_scaled > 0.0));
        let text = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
        assert!(text.lines().skip(1).all(|l| l.starts_with(&out.config_hash)));
        let bad = ExperimentConfig { l_values: vec![3.0], ..cfg };
        assert!(scaling_law(&bad).is_err());
    }

    #[test]
    fn scan_is_resumable_and_writes_trajectories() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let a = sigma_scan(&cfg).unwrap();
        assert_eq!(a.records.len(), 2);
        let lines = fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap().lines().count();
        assert_eq!(lines, 2);
        let b = sigma_scan(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap().lines().count(), 2);
        let mu = fs::read_to_string(dir.path().join("mu_L2.csv")).unwrap();
        assert!(mu.starts_with("config_hash,mode,k,x,mu\n"));
        assert!(mu.lines().skip(1).all(|l| l.starts_with(&a.config_hash)));
    }
}
