use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use cofrag_core::diagnostics::{self, GelationVerdict, TestFunction, Verdict};
use cofrag_core::integrator::{default_exponents, prepare, run_from, RunConfig};
use cofrag_core::kernel::{validate as validate_spec, InitialMoments};
use cofrag_core::operators::WeakForm;
use cofrag_core::reference::relative_l1_projected;
use cofrag_core::{grid, DerivedConstants, Discretization, State, TimeSeries, ValidatedSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, Experiment};
use crate::files;
use crate::CliError;

/// Largest accepted weak-form residual, relative to `σ`.
pub const WEAK_RESIDUAL_TOL: f64 = 1e-3;
/// Largest accepted defect of `M_1(t) + loss(t) = M_1(0)`, relative to `M_1(0)`.
pub const LEDGER_TOL: f64 = 1e-8;

fn core(e: cofrag_core::Error) -> CliError {
    CliError::from_core(e)
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s.into_bytes()
}

fn exponents(spec: &ValidatedSpec, rc: &RunConfig) -> Result<(f64, f64), CliError> {
    let (d0, d1) = default_exponents(spec).map_err(core)?;
    let m0 = rc.m0.unwrap_or(d0);
    Ok((m0, rc.m1.unwrap_or(d1)))
}

pub fn validate(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = Config::load(path)?;
    let rc = cfg.run_config(None)?;
    let spec = validate_spec(rc.spec.clone()).map_err(core)?;
    let (m0, m1) = exponents(&spec, &rc)?;
    let (disc, s0) = prepare(&rc).map_err(core)?;
    let mom = grid::moments(&s0, &[m0, m1, 1.0]);
    let init = InitialMoments {
        m_m0: mom.get(m0).unwrap_or(0.0),
        mass: mom.get(1.0).unwrap_or(0.0),
        m_m1: mom.get(m1).unwrap_or(0.0),
        log_mass: mom.log_mass,
    };
    let derived = DerivedConstants::compute(&spec, m0, m1, init).map_err(core)?;
    let rho = init.mass;
    let w0 = spec.m0_window();
    let w1 = spec.m1_window(m0);
    let exact = spec.exact_constants();
    println!("coefficients: lambda = {}, alpha = {}, K0 = {}, a0 = {}, nu = {}", spec.lambda(), spec.alpha(), spec.k0(), spec.a0(), spec.nu());
    match exact {
        Some(e) => println!(
            "b_ln = {:.16e} (exact {}/{}); rho_star = {:.16e} (rho_star ln 2 = {}/{})",
            derived.b_ln,
            e.b_ln.numer(),
            e.b_ln.denom(),
            derived.rho_star,
            e.rho_star_times_ln2.numer(),
            e.rho_star_times_ln2.denom()
        ),
        None => println!("b_ln = {:.16e}; rho_star = {:.16e}", derived.b_ln, derived.rho_star),
    }
    let delta = if rho < derived.rho_star { Some(spec.delta_rho(rho)) } else { None };
    match delta {
        Some(d) => println!("initial mass {rho:.16e} is below rho_star; delta_rho = {d:.16e}"),
        None => println!("initial mass {rho:.16e} is not below rho_star; the Lyapunov estimate does not apply"),
    }
    println!("m0 window {:?}, m0 = {m0}; m1 window {:?}, m1 = {m1}", (w0.lo, w0.hi), (w1.lo, w1.hi));
    println!("sigma lower bound = {:.16e}; truncation size j = {}; {} cells", derived.sigma, disc.j(), disc.grid().len());
    if let Some(out) = out {
        let v = json!({
            "lambda": spec.lambda(), "alpha": spec.alpha(), "k0": spec.k0(), "a0": spec.a0(), "nu": spec.nu(),
            "b_ln": derived.b_ln, "rho_star": derived.rho_star, "initial_mass": rho, "delta_rho": delta,
            "m0_window": [w0.lo, w0.hi], "m1_window": [w1.lo, w1.hi], "m0": m0, "m1": m1,
            "sigma": derived.sigma, "j": disc.j(), "cells": disc.grid().len(),
        });
        files::write_atomic(out, &json_bytes(&v))?;
    }
    Ok(())
}

fn integrate(cfg: &Config, snapshot_every: Option<f64>) -> Result<TimeSeries, CliError> {
    let rc = cfg.run_config(snapshot_every)?;
    let (disc, s0) = prepare(&rc).map_err(core)?;
    run_from(&disc, s0, &rc).map_err(core)
}

fn write_run(dir: &Path, cfg: &Config, ts: &TimeSeries) -> Result<(), CliError> {
    files::write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    files::write_atomic(&dir.join("timeseries.csv"), &files::timeseries_csv(ts)?)?;
    for (k, s) in ts.snapshots.iter().enumerate() {
        files::write_atomic(&dir.join("snapshots").join(format!("snap_{k:05}.txt")), files::snapshot_text(s).as_bytes())?;
    }
    let last = ts.records.last().expect("runs record their initial state");
    let summary = json!({
        "j": ts.j, "m0": ts.m0, "m1": ts.m1, "cells": ts.grid.len(),
        "t_end": last.t, "steps": last.steps, "rejected": last.rejected,
        "initial_mass": ts.initial_mass(), "final_mass": last.moments.get(1.0),
        "cum_trunc_loss": last.cum_trunc_loss, "cum_flushed": last.cum_flushed,
        "snapshots": ts.snapshots.len(),
    });
    files::write_atomic(&dir.join("summary.json"), &json_bytes(&summary))
}

pub fn run(path: &Path, out: &Path, snapshot_every: Option<f64>) -> Result<(), CliError> {
    let cfg = Config::load(path)?;
    let ts = integrate(&cfg, snapshot_every)?;
    write_run(out, &cfg, &ts)?;
    let last = ts.records.last().expect("runs record their initial state");
    println!(
        "t = {}: M1 = {:.10e} (initial {:.10e}), truncation loss {:.3e}, {} steps",
        last.t,
        last.moments.get(1.0).unwrap_or(f64::NAN),
        ts.initial_mass(),
        last.cum_trunc_loss,
        last.steps
    );
    Ok(())
}

struct Job {
    dir: PathBuf,
    config: Config,
}

/// Runs every job on a pool of `threads` workers; each worker writes its own
/// run directory. Results keep the job order.
fn run_pool(jobs: &[Job], threads: usize, snapshot_every: Option<f64>) -> Vec<Result<TimeSeries, CliError>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TimeSeries, CliError>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(k) else { break };
                let r = integrate(&job.config, snapshot_every).and_then(|ts| write_run(&job.dir, &job.config, &ts).map(|_| ts));
                results.lock().expect("result lock")[k] = Some(r);
            });
        }
    });
    results.into_inner().expect("result lock").into_iter().map(|r| r.expect("every job ran")).collect()
}

fn verdict_name(v: GelationVerdict) -> &'static str {
    match v {
        GelationVerdict::MassConserving => "MassConserving",
        GelationVerdict::Gelling { .. } => "Gelling",
        GelationVerdict::Inconclusive => "Inconclusive",
    }
}

fn scan_json(rho: f64, runs: &[TimeSeries]) -> Result<Value, CliError> {
    let refs: Vec<&TimeSeries> = runs.iter().collect();
    match diagnostics::gelation_scan(&refs, None) {
        Ok(rep) => {
            let t_gel = match rep.verdict {
                GelationVerdict::Gelling { t_gel } => t_gel,
                _ => None,
            };
            Ok(json!({
                "rho": rho, "verdict": verdict_name(rep.verdict), "t_gel": t_gel, "time": rep.time,
                "js": rep.js, "losses": rep.losses, "factors": rep.factors, "spread": rep.spread,
            }))
        }
        Err(cofrag_core::Error::InsufficientRuns { needed, got }) => Ok(json!({
            "rho": rho, "verdict": "Inconclusive", "t_gel": null,
            "js": runs.iter().map(|r| r.j).collect::<Vec<_>>(),
            "losses": runs.iter().map(|r| r.final_loss()).collect::<Vec<_>>(),
            "reason": format!("need at least {needed} truncation sizes, got {got}"),
        })),
        Err(e) => Err(core(e)),
    }
}

fn collect(results: Vec<Result<TimeSeries, CliError>>) -> Result<Vec<TimeSeries>, CliError> {
    results.into_iter().collect()
}

pub fn sweep(path: &Path, out: &Path, threads: usize, snapshot_every: Option<f64>) -> Result<(), CliError> {
    let cfg = Config::load(path)?;
    let verdict = match &cfg.experiment {
        Experiment::Single { .. } => {
            return Err(CliError::Validation("sweep needs [experiment] kind j_sweep, rho_sweep or convergence_study".into()))
        }
        Experiment::JSweep { js, .. } => {
            let jobs: Vec<Job> = js
                .iter()
                .enumerate()
                .map(|(k, &j)| Job { dir: out.join(format!("j_{k:02}")), config: cfg.with_j(j) })
                .collect();
            let runs = collect(run_pool(&jobs, threads, snapshot_every))?;
            json!({ "kind": "j_sweep", "points": [scan_json(cfg.initial.mass, &runs)?] })
        }
        Experiment::RhoSweep { rhos, js, .. } => {
            let mut jobs = Vec::new();
            for (i, &rho) in rhos.iter().enumerate() {
                for (k, &j) in js.iter().enumerate() {
                    jobs.push(Job { dir: out.join(format!("rho_{i:02}")).join(format!("j_{k:02}")), config: cfg.with_mass(rho).with_j(j) });
                }
            }
            let runs = collect(run_pool(&jobs, threads, snapshot_every))?;
            let points = rhos
                .iter()
                .zip(runs.chunks(js.len()))
                .map(|(&rho, chunk)| scan_json(rho, chunk))
                .collect::<Result<Vec<_>, _>>()?;
            json!({ "kind": "rho_sweep", "points": points })
        }
        Experiment::ConvergenceStudy { cells_per_decade, .. } => {
            let jobs: Vec<Job> = cells_per_decade
                .iter()
                .map(|&n| Job { dir: out.join(format!("n_{n:04}")), config: cfg.with_resolution(n) })
                .collect();
            let runs = collect(run_pool(&jobs, threads, snapshot_every))?;
            let finest = runs.last().and_then(|r| r.final_state()).expect("non-empty study").clone();
            let mut points = Vec::new();
            for (n, ts) in cells_per_decade.iter().zip(&runs) {
                let s = ts.final_state().expect("final snapshot");
                let err = relative_l1_projected(s, &finest).map_err(core)?;
                points.push(json!({
                    "cells_per_decade": n, "cells": ts.grid.len(), "l1_vs_finest": err,
                    "final_mass": ts.records.last().and_then(|r| r.moments.get(1.0)),
                    "cum_trunc_loss": ts.final_loss(),
                }));
            }
            json!({ "kind": "convergence_study", "points": points })
        }
    };
    files::write_atomic(&out.join("verdict.json"), &json_bytes(&verdict))?;
    println!("{}", serde_json::to_string(&verdict).expect("json serializes"));
    Ok(())
}

/// A run directory read back from disk.
struct Loaded {
    ts: TimeSeries,
    disc: Discretization,
    spec: ValidatedSpec,
}

fn load_run(dir: &Path) -> Result<Loaded, CliError> {
    let cfg = Config::load(&dir.join("config.toml"))?;
    let rc = cfg.run_config(None)?;
    let spec = validate_spec(rc.spec.clone()).map_err(core)?;
    let (m0, m1) = exponents(&spec, &rc)?;
    let grid = Arc::new(rc.grid.build().map_err(core)?);
    let disc = Discretization::new(&spec, grid.clone(), rc.trunc, rc.physics).map_err(core)?;
    let mut ts = TimeSeries {
        spec: rc.spec.clone(),
        grid: grid.clone(),
        trunc: rc.trunc,
        j: disc.j(),
        physics: rc.physics,
        m0,
        m1,
        rel_tol: rc.control.rel_tol,
        records: Vec::new(),
        snapshots: Vec::new(),
    };
    ts.records = files::read_timeseries_csv(&dir.join("timeseries.csv"), files::csv_exponents(&ts))?;
    let snap_dir = dir.join("snapshots");
    if snap_dir.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&snap_dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", snap_dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for p in paths {
            let s: State = files::read_snapshot(&p)?;
            if s.grid() != &grid {
                return Err(CliError::Parse(format!("{}: snapshot grid differs from the configured grid", p.display())));
            }
            ts.snapshots.push(s);
        }
    }
    Ok(Loaded { ts, disc, spec })
}

#[derive(Serialize)]
struct CheckLine {
    name: String,
    pass: bool,
    worst_margin: Option<f64>,
    worst_time: Option<f64>,
    detail: String,
}

impl CheckLine {
    fn from_verdict(v: &Verdict, detail: String) -> CheckLine {
        CheckLine { name: v.name.clone(), pass: v.pass, worst_margin: Some(v.worst_margin), worst_time: Some(v.worst_time), detail }
    }

    fn plain(name: &str, pass: bool, detail: String) -> CheckLine {
        CheckLine { name: name.into(), pass, worst_margin: None, worst_time: None, detail }
    }
}

fn ledger_check(ts: &TimeSeries) -> CheckLine {
    let m1: Vec<f64> = ts.records.iter().map(|r| r.moments.get(1.0).unwrap_or(f64::NAN)).collect();
    let scale = m1[0].abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    let mut monotone = true;
    for (k, r) in ts.records.iter().enumerate() {
        worst = worst.max((m1[k] + r.cum_trunc_loss - m1[0]).abs() / scale);
        monotone &= m1[k] <= m1[0] * (1.0 + LEDGER_TOL);
    }
    CheckLine::plain(
        "mass_ledger",
        worst <= LEDGER_TOL && monotone,
        format!("max |M1 + loss - M1(0)|/M1(0) = {worst:.3e} (tol {LEDGER_TOL:e}); M1 <= M1(0): {monotone}"),
    )
}

fn single_checks(run: &Loaded, lines: &mut Vec<CheckLine>) -> Result<(), CliError> {
    let ts = &run.ts;
    let spec = &run.spec;
    lines.push(ledger_check(ts));
    let rho = ts.initial_mass();
    if rho > 0.0 && rho < spec.rho_star() {
        let rep = diagnostics::lyapunov_check(ts, ts.m1, spec, rho).map_err(core)?;
        lines.push(CheckLine::from_verdict(&rep.verdict, format!("m = {}, C1 = {:.6e}, delta_rho = {:.6e}", rep.m, rep.c1, rep.delta)));
        lines.push(CheckLine::from_verdict(&rep.integral_verdict, "integral of M_lambda against (sigma + C1 t)/delta_rho".into()));
        if ts.m0 < ts.m1 {
            let v = diagnostics::low_moment_check(ts, ts.m0, spec).map_err(core)?;
            lines.push(CheckLine::from_verdict(&v, format!("m = {}", ts.m0)));
        }
    } else {
        lines.push(CheckLine::plain("lyapunov", true, format!("skipped: initial mass {rho} is not in (0, rho_star = {})", spec.rho_star())));
    }
    let high = 2.0 * spec.lambda() - spec.alpha();
    let rep = diagnostics::high_moment_check(ts, high, spec).map_err(core)?;
    lines.push(CheckLine::plain("high_moment", rep.pass, format!("sup M_{high} = {:.6e} at t = {}", rep.sup, rep.sup_time)));
    if ts.snapshots.len() >= 3 && rho > 0.0 {
        let rep = diagnostics::weak_residual(ts, &run.disc, &TestFunction::family(ts.m1), WeakForm::Scheme).map_err(core)?;
        lines.push(CheckLine::plain(
            "weak_residual",
            rep.max_residual <= WEAK_RESIDUAL_TOL,
            format!("max residual / sigma = {:.3e} (tol {WEAK_RESIDUAL_TOL:e}) over {} snapshots", rep.max_residual, ts.snapshots.len()),
        ));
    } else {
        lines.push(CheckLine::plain("weak_residual", true, format!("skipped: {} snapshots (need 3)", ts.snapshots.len())));
    }
    Ok(())
}

/// Adds the upper bound `M_α ≤ M_{m0} + M_1` (valid for `m0 ≤ α ≤ 1`) when the
/// CSV carries no `M_α` column.
fn bound_alpha_moment(ts: &mut TimeSeries, alpha: f64) {
    let m0 = ts.m0;
    for r in &mut ts.records {
        if r.moments.get(alpha).is_none() {
            let b = r.moments.get(m0).unwrap_or(f64::INFINITY) + r.moments.get(1.0).unwrap_or(f64::INFINITY);
            r.moments.entries.push((alpha, b));
        }
    }
}

pub fn check(dir: &Path, other: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let mut run = load_run(dir)?;
    let mut lines = Vec::new();
    single_checks(&run, &mut lines)?;
    if let Some(o) = other {
        let mut second = load_run(o)?;
        if second.ts.grid != run.ts.grid {
            return Err(core(cofrag_core::Error::GridMismatch));
        }
        if second.ts.spec != run.ts.spec {
            return Err(CliError::Validation("stability check needs both runs to share the coefficients".into()));
        }
        let alpha = run.spec.alpha();
        bound_alpha_moment(&mut run.ts, alpha);
        bound_alpha_moment(&mut second.ts, alpha);
        let rep = diagnostics::contraction_check(&run.ts, &second.ts, &run.spec).map_err(core)?;
        lines.push(CheckLine::from_verdict(
            &rep.verdict,
            format!("D(0) = {:.6e}, R = {:.6e}, {} shared snapshots", rep.distance[0], rep.rate, rep.times.len()),
        ));
    }
    let pass = lines.iter().all(|l| l.pass);
    let v = json!({ "run": dir.display().to_string(), "pass": pass, "checks": lines });
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("verdict.json"));
    files::write_atomic(&target, &json_bytes(&v))?;
    for l in &lines {
        println!("{:<28} {}  {}", l.name, if l.pass { "pass" } else { "FAIL" }, l.detail);
    }
    if pass {
        Ok(())
    } else {
        let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.name.as_str()).collect();
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}
