//! Run orchestration and persistence: manifests, diagnostics CSV, theorem
//! reports, verdict summaries, and parameter sweeps with parallel execution.

use crate::analysis::{check_conditions, estimate_gn, GnEstimate, SearchBudget, TheoremReport};
use crate::config::{InitialSpec, SimConfig, SourceSpec};
use crate::diagnostics::{classify, DiagnosticsSeries, RunVerdict};
use crate::error::{KsError, Result};
use crate::stepper::{simulate_with, TerminationStatus};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

/// Exact column order of the per-run diagnostics CSV.
pub const DIAGNOSTICS_HEADER: &str = "t,dt,mass,entropy,grad_v_energy,F,u_max,u_min,u_l2,v_max";

/// Exact column order of the sweep summary CSV.
pub const SUMMARY_HEADER: &str =
    "run_id,chi,alpha,K,mass0,nx,cond_K,cond_chiM,verdict,sup_mass,sup_F,sup_umax,status,wall_s";

pub fn diagnostics_csv(series: &DiagnosticsSeries) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in &series.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.dt_used,
            r.mass,
            r.entropy,
            r.grad_v_energy,
            r.lyapunov_f,
            r.u_max,
            r.u_min,
            r.u_l2,
            r.v_max
        );
    }
    out
}

/// Everything one run produces in memory.
#[derive(Debug)]
pub struct RunOutcome {
    pub series: DiagnosticsSeries,
    pub status: TerminationStatus,
    pub verdict: RunVerdict,
    pub mass0: f64,
    pub theorem: Option<TheoremReport>,
    pub mean_identity_max_err: f64,
}

/// Process exit codes of the CLI contract.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const CONFIG_ERROR: i32 = 1;
    pub const NUMERICAL_FAILURE: i32 = 2;
    pub const BLOWUP: i32 = 3;
}

/// Execute one configured run without touching the filesystem.
pub fn execute(cfg: &SimConfig, c_gn_override: Option<f64>) -> Result<RunOutcome> {
    let spec = cfg.build_run_spec()?;
    let mass0 = spec.u0.integrate();
    let tau0 = cfg.model.tau == 0;
    let mut mean_err: f64 = 0.0;
    let (series, status) = simulate_with(&spec, |state, _| {
        if tau0 {
            let iu = state.u.integrate();
            let iv = state.v.integrate();
            mean_err = mean_err.max((iv - iu).abs() / iu.abs().max(f64::MIN_POSITIVE));
        }
    })?;
    let u0_max = series.records[0].u_max;
    let verdict = classify(&series, &status, &cfg.classifier_config(u0_max))?;
    let theorem = match cfg.model.source {
        SourceSpec::Gompertz { .. } => {
            let c_gn = match c_gn_override {
                Some(c) => c,
                None => {
                    estimate_gn(spec.grid, SearchBudget::default(), cfg.seed)?.c_gn_lower
                }
            };
            Some(check_conditions(&cfg.model_params(), mass0, spec.grid.area, c_gn)?)
        }
        _ => None,
    };
    Ok(RunOutcome {
        series,
        status,
        verdict,
        mass0,
        theorem,
        mean_identity_max_err: mean_err,
    })
}

fn render_theorem(report: &TheoremReport, heuristic: bool) -> String {
    format!(
        "m = {}\nalpha = {}\nk = {}\nchi = {}\nc_gn_used = {}\nc_gn_source = \"{}\"\n\
         cond_k = {}\nmargin_k = {}\ncond_chi_m = {}\nmargin_chi_m = {}\noverall = {}\n",
        report.m,
        report.alpha,
        report.k,
        report.chi,
        report.c_gn_used,
        if heuristic { "estimated-heuristic-lower-bound" } else { "user-supplied" },
        report.cond_k,
        report.margin_k,
        report.cond_chi_m,
        report.margin_chi_m,
        report.overall
    )
}

fn render_verdict(outcome: &RunOutcome) -> String {
    let mut out = format!(
        "verdict = \"{}\"\nstatus = \"{}\"\nsup_mass = {}\nsup_f = {}\nsup_umax = {}\n",
        outcome.verdict.label(),
        outcome.status.label(),
        outcome.series.sup_mass(),
        outcome.series.sup_f(),
        outcome.series.sup_umax()
    );
    match &outcome.verdict {
        RunVerdict::BlowupSuspect { t_event, .. } => {
            let _ = writeln!(out, "t_event = {t_event}");
        }
        RunVerdict::Inconclusive { note } => {
            let _ = writeln!(out, "note = {note:?}");
        }
        RunVerdict::Bounded { .. } => {}
    }
    out
}

fn write_failure(out_dir: &Path, kind: &str, message: &str) {
    let _ = fs::write(
        out_dir.join("failure.toml"),
        format!("kind = \"{kind}\"\nmessage = {message:?}\n"),
    );
}

/// Run one configuration, persist all artifacts, and return the exit code.
pub fn run_command(cfg: &SimConfig, out_dir: &Path, fail_on_blowup: bool) -> i32 {
    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return exit_code::CONFIG_ERROR;
    }
    let manifest = format!(
        "version = \"{}\"\nseed = {}\n\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        cfg.render()
    );
    if let Err(e) = fs::write(out_dir.join("manifest.toml"), manifest) {
        eprintln!("cannot write manifest: {e}");
        write_failure(out_dir, "io", &e.to_string());
        return exit_code::CONFIG_ERROR;
    }
    let outcome = match execute(cfg, None) {
        Ok(o) => o,
        Err(KsError::Config(m)) | Err(KsError::Precondition(m)) => {
            eprintln!("configuration error: {m}");
            write_failure(out_dir, "config", &m);
            return exit_code::CONFIG_ERROR;
        }
        Err(e) => {
            eprintln!("numerical failure: {e}");
            write_failure(out_dir, "numerical", &e.to_string());
            return exit_code::NUMERICAL_FAILURE;
        }
    };
    let mut ok = true;
    ok &= fs::write(out_dir.join("diagnostics.csv"), diagnostics_csv(&outcome.series)).is_ok();
    if let Some(report) = &outcome.theorem {
        ok &= fs::write(out_dir.join("theorem_report.toml"), render_theorem(report, true)).is_ok();
    }
    ok &= fs::write(out_dir.join("verdict.toml"), render_verdict(&outcome)).is_ok();
    if !ok {
        write_failure(out_dir, "io", "failed to persist run artifacts");
        return exit_code::CONFIG_ERROR;
    }
    match &outcome.status {
        TerminationStatus::PositivityLoss { .. } | TerminationStatus::SolverFailure { .. } => {
            exit_code::NUMERICAL_FAILURE
        }
        TerminationStatus::DtCollapse { .. } | TerminationStatus::LinfOverflow { .. }
            if fail_on_blowup =>
        {
            exit_code::BLOWUP
        }
        _ => exit_code::OK,
    }
}

fn default_max_runs() -> usize {
    10_000
}

/// Sweep definition: a base config plus value lists along named axes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: SimConfig,
    #[serde(default)]
    pub axes: SweepAxes,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub chi: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub k: Option<Vec<f64>>,
    #[serde(default)]
    pub total_mass: Option<Vec<f64>>,
    #[serde(default)]
    pub nx: Option<Vec<usize>>,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<SweepConfig> {
        let cfg: SweepConfig = toml::from_str(text)
            .map_err(|e| KsError::Config(format!("sweep config syntax error: {e}")))?;
        cfg.base.validate()?;
        let n = cfg.expand()?.len();
        if n > cfg.max_runs {
            return Err(KsError::Config(format!(
                "sweep cross product has {n} runs, exceeding the cap {}",
                cfg.max_runs
            )));
        }
        Ok(cfg)
    }

    /// Cross product in fixed axis order chi, alpha, K, total_mass, nx.
    pub fn expand(&self) -> Result<Vec<SimConfig>> {
        let base = &self.base;
        let chis = axis_or(&self.axes.chi, base.model.chi);
        let (base_alpha, base_k) = match base.model.source {
            SourceSpec::Gompertz { alpha, k } => (Some(alpha), Some(k)),
            _ => (None, None),
        };
        if (self.axes.alpha.is_some() || self.axes.k.is_some()) && base_alpha.is_none() {
            return Err(KsError::Config(
                "alpha/K sweep axes require a gompertz base source".into(),
            ));
        }
        let alphas = axis_or(&self.axes.alpha, base_alpha.unwrap_or(f64::NAN));
        let ks = axis_or(&self.axes.k, base_k.unwrap_or(f64::NAN));
        let masses: Vec<Option<f64>> = match &self.axes.total_mass {
            Some(v) => v.iter().map(|&m| Some(m)).collect(),
            None => vec![None],
        };
        let nxs: Vec<Option<usize>> = match &self.axes.nx {
            Some(v) => v.iter().map(|&n| Some(n)).collect(),
            None => vec![None],
        };

        let mut configs = Vec::new();
        for &chi in &chis {
            for &alpha in &alphas {
                for &k in &ks {
                    for &mass in &masses {
                        for &nx in &nxs {
                            let mut c = base.clone();
                            c.model.chi = chi;
                            if let SourceSpec::Gompertz { alpha: a, k: kk } = &mut c.model.source {
                                *a = alpha;
                                *kk = k;
                            }
                            if let Some(m) = mass {
                                set_total_mass(&mut c, m)?;
                            }
                            if let Some(n) = nx {
                                c.grid.nx = n;
                                c.grid.ny = n;
                            }
                            configs.push(c);
                        }
                    }
                }
            }
        }
        Ok(configs)
    }
}

fn axis_or(axis: &Option<Vec<f64>>, base: f64) -> Vec<f64> {
    axis.clone().unwrap_or_else(|| vec![base])
}

fn set_total_mass(cfg: &mut SimConfig, mass: f64) -> Result<()> {
    match &mut cfg.initial {
        InitialSpec::Uniform { value } => {
            *value = mass / (cfg.grid.lx * cfg.grid.ly);
            Ok(())
        }
        InitialSpec::Gaussian { total_mass, .. } => {
            *total_mass = mass;
            Ok(())
        }
        InitialSpec::SumOfGaussians { terms } => {
            let current: f64 = terms.iter().map(|t| t.total_mass).sum();
            for t in terms {
                t.total_mass *= mass / current;
            }
            Ok(())
        }
        InitialSpec::FromFile { .. } => Err(KsError::Config(
            "total_mass sweep axis is not applicable to from_file initial data".into(),
        )),
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Stable per-run directory name derived from the swept parameter values.
pub fn run_id(cfg: &SimConfig) -> String {
    let (alpha, k) = match cfg.model.source {
        SourceSpec::Gompertz { alpha, k } => (format!("{alpha}"), format!("{k}")),
        _ => ("na".into(), "na".into()),
    };
    let key = format!(
        "chi={};alpha={alpha};k={k};initial={:?};nx={};ny={}",
        cfg.model.chi, cfg.initial, cfg.grid.nx, cfg.grid.ny
    );
    format!("{:016x}", fnv1a64(key.as_bytes()))
}

fn summary_row(id: &str, cfg: &SimConfig, outcome: &std::result::Result<RunOutcome, String>, wall_s: f64) -> String {
    let (alpha, k) = match cfg.model.source {
        SourceSpec::Gompertz { alpha, k } => (format!("{alpha}"), format!("{k}")),
        _ => ("na".into(), "na".into()),
    };
    match outcome {
        Ok(o) => {
            let (cond_k, cond_chi_m) = match &o.theorem {
                Some(t) => (t.cond_k.to_string(), t.cond_chi_m.to_string()),
                None => ("na".into(), "na".into()),
            };
            format!(
                "{id},{},{alpha},{k},{},{},{cond_k},{cond_chi_m},{},{},{},{},{},{wall_s}",
                cfg.model.chi,
                o.mass0,
                cfg.grid.nx,
                o.verdict.label(),
                o.series.sup_mass(),
                o.series.sup_f(),
                o.series.sup_umax(),
                o.status.label()
            )
        }
        Err(msg) => {
            let clean = msg.replace([',', '\n'], ";");
            format!(
                "{id},{},{alpha},{k},na,{},na,na,failed,nan,nan,nan,\"{clean}\",{wall_s}",
                cfg.model.chi, cfg.grid.nx
            )
        }
    }
}

/// Execute the sweep cross product with at most `jobs` runs in flight.
/// Per-run artifacts land in `<out_root>/<run_id>/`; completed directories
/// (holding a summary row file) are skipped. Returns the exit code.
pub fn sweep(sweep_cfg: &SweepConfig, out_root: &Path, jobs: usize) -> Result<i32> {
    use rayon::prelude::*;

    let configs = sweep_cfg.expand()?;
    fs::create_dir_all(out_root)?;

    // estimate the GN constant once per distinct grid; sequential for
    // deterministic summaries regardless of parallelism
    let mut gn_by_grid: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for c in &configs {
        if matches!(c.model.source, SourceSpec::Gompertz { .. }) {
            let key = (c.grid.nx, c.grid.ny);
            if !gn_by_grid.contains_key(&key) {
                let grid = c.build_grid()?;
                let est: GnEstimate = estimate_gn(grid, SearchBudget::default(), sweep_cfg.base.seed)?;
                gn_by_grid.insert(key, est.c_gn_lower);
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| KsError::Config(format!("cannot build thread pool: {e}")))?;

    let rows: Vec<(String, bool)> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let id = run_id(cfg);
                let dir = out_root.join(&id);
                let row_path = dir.join("row.csv");
                if let Ok(existing) = fs::read_to_string(&row_path) {
                    let line = existing.trim_end().to_string();
                    let failed = line.contains(",failed,");
                    return (line, !failed);
                }
                let start = Instant::now();
                let _ = fs::create_dir_all(&dir);
                let _ = fs::write(
                    dir.join("manifest.toml"),
                    format!(
                        "version = \"{}\"\nseed = {}\n\n{}",
                        env!("CARGO_PKG_VERSION"),
                        cfg.seed,
                        cfg.render()
                    ),
                );
                let gn = gn_by_grid.get(&(cfg.grid.nx, cfg.grid.ny)).copied();
                let outcome = match execute(cfg, gn) {
                    Ok(o) => {
                        let _ = fs::write(dir.join("diagnostics.csv"), diagnostics_csv(&o.series));
                        let _ = fs::write(dir.join("verdict.toml"), render_verdict(&o));
                        if let Some(t) = &o.theorem {
                            let _ = fs::write(dir.join("theorem_report.toml"), render_theorem(t, true));
                        }
                        Ok(o)
                    }
                    Err(e) => {
                        write_failure(&dir, "run", &e.to_string());
                        Err(e.to_string())
                    }
                };
                let wall_s = start.elapsed().as_secs_f64();
                let row = summary_row(&id, cfg, &outcome, wall_s);
                let _ = fs::write(&row_path, format!("{row}\n"));
                (row, outcome.is_ok())
            })
            .collect()
    });

    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut any_ok = false;
    for (row, ok) in &rows {
        summary.push_str(row);
        summary.push('\n');
        any_ok |= ok;
    }
    fs::write(out_root.join("summary.csv"), summary)?;
    Ok(if any_ok || rows.is_empty() { exit_code::OK } else { exit_code::NUMERICAL_FAILURE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::DiagnosticsRecord;

    fn base_toml() -> String {
        r#"
[base.grid]
lx = 1.0
ly = 1.0
nx = 8
ny = 8

[base.model]
chi = 0.1
tau = 0

[base.model.source]
kind = "gompertz"
alpha = 1.0
k = 1.0

[base.initial]
kind = "uniform"
value = 0.5

[base.time]
t_end = 0.05
"#
        .to_string()
    }

    #[test]
    fn degenerate_sweep_is_one_run() {
        let cfg = SweepConfig::parse(&base_toml()).unwrap();
        assert_eq!(cfg.expand().unwrap().len(), 1);
    }

    #[test]
    fn cross_product_counts() {
        let text = format!(
            "{}\n[axes]\nchi = [0.01, 1.0]\ntotal_mass = [0.1, 10.0]\n",
            base_toml()
        );
        let cfg = SweepConfig::parse(&text).unwrap();
        let runs = cfg.expand().unwrap();
        assert_eq!(runs.len(), 4);
        // mass axis rewrites the uniform value as mass/area
        let masses: Vec<f64> = runs
            .iter()
            .map(|c| match c.initial {
                InitialSpec::Uniform { value } => value,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(masses, vec![0.1, 10.0, 0.1, 10.0]);
    }

    #[test]
    fn cap_is_enforced() {
        let text = format!(
            "{}\nmax_runs = 3\n[axes]\nchi = [0.1, 0.2]\ntotal_mass = [1.0, 2.0]\n",
            base_toml()
        );
        assert!(SweepConfig::parse(&text).is_err());
    }

    #[test]
    fn run_ids_are_stable_and_distinct() {
        let text = format!("{}\n[axes]\nchi = [0.01, 1.0]\n", base_toml());
        let cfg = SweepConfig::parse(&text).unwrap();
        let runs = cfg.expand().unwrap();
        let a1 = run_id(&runs[0]);
        let a2 = run_id(&runs[0]);
        assert_eq!(a1, a2);
        assert_ne!(a1, run_id(&runs[1]));
    }

    #[test]
    fn axes_on_non_gompertz_source_are_rejected() {
        let text = format!(
            "{}\n[axes]\nalpha = [1.0]\n",
            base_toml().replace(
                "kind = \"gompertz\"\nalpha = 1.0\nk = 1.0",
                "kind = \"none\""
            )
        );
        assert!(SweepConfig::parse(&text).is_err());
    }

    #[test]
    fn diagnostics_csv_header_is_exact() {
        assert_eq!(
            DIAGNOSTICS_HEADER,
            "t,dt,mass,entropy,grad_v_energy,F,u_max,u_min,u_l2,v_max"
        );
        let mut s = DiagnosticsSeries::default();
        s.push(DiagnosticsRecord {
            t: 0.5,
            dt_used: 0.125,
            mass: 1.0,
            entropy: -0.25,
            grad_v_energy: 0.0,
            lyapunov_f: -0.25,
            u_max: 2.0,
            u_min: 0.5,
            u_l2: 1.0,
            v_max: 1.0,
        });
        let csv = diagnostics_csv(&s);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), DIAGNOSTICS_HEADER);
        assert_eq!(lines.next().unwrap(), "0.5,0.125,1,-0.25,0,-0.25,2,0.5,1,1");
    }

    #[test]
    fn sweep_writes_summary_and_is_deterministic() {
        let text = format!("{}\n[axes]\nchi = [0.05, 0.1]\n", base_toml());
        let cfg = SweepConfig::parse(&text).unwrap();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        assert_eq!(sweep(&cfg, dir1.path(), 2).unwrap(), 0);
        assert_eq!(sweep(&cfg, dir2.path(), 1).unwrap(), 0);
        let strip_wall = |s: String| -> Vec<String> {
            s.lines()
                .map(|l| l.rsplit_once(',').map(|(a, _)| a.to_string()).unwrap_or_default())
                .collect()
        };
        let s1 = strip_wall(fs::read_to_string(dir1.path().join("summary.csv")).unwrap());
        let s2 = strip_wall(fs::read_to_string(dir2.path().join("summary.csv")).unwrap());
        assert_eq!(s1, s2);
        assert!(s1[0].starts_with("run_id,chi,alpha,K,mass0,nx"));
        assert_eq!(s1.len(), 3);
    }

    #[test]
    fn run_command_steady_state_exit_zero() {
        let (cfg, _) = SimConfig::parse(
            r#"
[grid]
lx = 1.0
ly = 1.0
nx = 8
ny = 8
[model]
chi = 1.0
tau = 0
[model.source]
kind = "gompertz"
alpha = 1.0
k = 1.0
[initial]
kind = "uniform"
value = 1.0
[time]
t_end = 0.05
"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let code = run_command(&cfg, dir.path(), false);
        assert_eq!(code, exit_code::OK);
        assert!(dir.path().join("manifest.toml").exists());
        assert!(dir.path().join("diagnostics.csv").exists());
        assert!(dir.path().join("theorem_report.toml").exists());
        let verdict = fs::read_to_string(dir.path().join("verdict.toml")).unwrap();
        assert!(verdict.contains("bounded"), "{verdict}");
    }
}
