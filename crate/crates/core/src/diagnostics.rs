//! Checks of the moment and Lyapunov estimates along recorded trajectories,
//! gelation scans over the truncation size, the weighted stability distance
//! between two runs, and weak-form residuals.
//!
//! Every check is a pure function of [`TimeSeries`] data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{domain, Error};
use crate::grid::State;
use crate::integrator::TimeSeries;
use crate::kernel::{DerivedConstants, InitialMoments, ValidatedSpec};
use crate::math;
use crate::operators::{Discretization, WeakForm};
use crate::Result;

/// Machine-readable outcome of one check. `worst_margin` is the smallest
/// relative slack `(bound - value) / |bound|` seen, negative on violation.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_time: f64,
}

impl Verdict {
    fn from_margins(name: &str, times: &[f64], values: &[f64], bounds: &[f64]) -> Verdict {
        let mut worst = f64::INFINITY;
        let mut worst_time = times.first().copied().unwrap_or(0.0);
        let mut pass = true;
        for ((&t, &v), &b) in times.iter().zip(values).zip(bounds) {
            pass &= v <= b;
            let margin = if b != 0.0 { (b - v) / b.abs() } else if v <= 0.0 { 0.0 } else { -f64::INFINITY };
            if margin < worst {
                worst = margin;
                worst_time = t;
            }
        }
        Verdict { name: name.into(), pass, worst_margin: worst, worst_time }
    }
}

/// Cumulative trapezoid integral of `values` over `times`.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for i in 0..times.len() {
        if i > 0 {
            acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Cumulative integral of the piecewise-quadratic interpolant through
/// consecutive triples of samples (Simpson's rule on non-uniform nodes).
pub fn cumulative_quadratic(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 3 {
        return cumulative_trapezoid(times, values);
    }
    // integral of the quadratic through (0,f0),(h0,f1),(h0+h1,f2) over [0,h0] and [0,h0+h1]
    let parts = |i: usize| -> (f64, f64) {
        let (h0, h1) = (times[i + 1] - times[i], times[i + 2] - times[i + 1]);
        let h = h0 + h1;
        let (f0, f1, f2) = (values[i], values[i + 1], values[i + 2]);
        let first = f0 * (h0 / 2.0 - h0 * h0 / (6.0 * h)) + f1 * h0 * (3.0 * h - 2.0 * h0) / (6.0 * h1)
            - f2 * h0 * h0 * h0 / (6.0 * h * h1);
        let total = h / 6.0 * ((2.0 - h1 / h0) * f0 + h * h / (h0 * h1) * f1 + (2.0 - h0 / h1) * f2);
        (first, total)
    };
    let mut out = alloc::vec![0.0; n];
    let mut i = 0;
    while i + 2 < n {
        let (first, total) = parts(i);
        out[i + 1] = out[i] + first;
        out[i + 2] = out[i] + total;
        i += 2;
    }
    if i + 1 < n {
        let (first, total) = parts(i - 1);
        out[i + 1] = out[i] + (total - first);
    }
    out
}

fn initial_moments(ts: &TimeSeries) -> Result<InitialMoments> {
    let r = &ts.records[0].moments;
    Ok(InitialMoments {
        m_m0: r.get(ts.m0).ok_or(Error::MissingMoment(ts.m0))?,
        mass: r.get(1.0).ok_or(Error::MissingMoment(1.0))?,
        m_m1: r.get(ts.m1).ok_or(Error::MissingMoment(ts.m1))?,
        log_mass: r.log_mass,
    })
}

/// The lower bound for `σ` computed from the first record of `ts`.
pub fn sigma(ts: &TimeSeries, spec: &ValidatedSpec) -> Result<f64> {
    Ok(DerivedConstants::compute(spec, ts.m0, ts.m1, initial_moments(ts)?)?.sigma)
}

/// Per-record terms of the Lyapunov inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovReport {
    pub m: f64,
    pub times: Vec<f64>,
    /// `Σ x̄|ln x̄| f Δ + M_m / (e(1-m))`.
    pub l_m: Vec<f64>,
    /// Running `∫_0^t M_λ ds` (trapezoid on records).
    pub int_m_lambda: Vec<f64>,
    /// `ln(j) ∫_0^t flux ds`, from the integrator's exact loss ledger.
    pub flux_term: Vec<f64>,
    /// `L_m(t) + δ_ρ ∫M_λ + ln(j) ∫flux`.
    pub lhs: Vec<f64>,
    /// `L⁰ + C_1(m) t + slack`.
    pub rhs: Vec<f64>,
    pub l0: f64,
    pub c1: f64,
    pub delta: f64,
    pub slack: f64,
    /// `(σ + C_1(m1) t) / δ_ρ`, the bound on `∫M_λ`.
    pub m_lambda_bound: Vec<f64>,
    pub first_violation: Option<f64>,
    pub verdict: Verdict,
    pub integral_verdict: Verdict,
}

/// Checks `L_m(t) + δ_ρ∫M_λ + ln(j)∫flux ≤ L⁰ + C_1(m) t + slack` at every record,
/// with `L⁰ = Σx̄|ln x̄|f⁰Δ + 2M_m(0)/(e(1-m))` and `slack = 10 · rel_tol · L⁰`,
/// and the companion bound `∫M_λ ≤ (σ + C_1(m1) t)/δ_ρ`.
pub fn lyapunov_check(ts: &TimeSeries, m: f64, spec: &ValidatedSpec, rho: f64) -> Result<LyapunovReport> {
    if !(m >= ts.m1 && m < 1.0) {
        return Err(domain(format!("m = {m} must lie in [m1, 1) = [{}, 1)", ts.m1)));
    }
    if !(rho < spec.rho_star()) {
        return Err(domain(format!("rho = {rho} is not below the critical mass {}", spec.rho_star())));
    }
    let times = ts.times();
    let mm = ts.moment_series(m)?;
    let ml = ts.moment_series(spec.lambda())?;
    let delta = spec.delta_rho(rho);
    let c1 = spec.lemma_c1(m, rho)?;
    let c1_m1 = spec.lemma_c1(ts.m1, rho)?;
    let sig = sigma(ts, spec)?;
    let coef = 1.0 / (math::E * (1.0 - m));
    let l0 = ts.records[0].moments.log_mass + 2.0 * coef * mm[0];
    let slack = 10.0 * ts.rel_tol * l0;
    let ln_j = math::ln(ts.j);
    let int_m_lambda = cumulative_trapezoid(&times, &ml);
    let mut l_m = Vec::with_capacity(times.len());
    let mut flux_term = Vec::with_capacity(times.len());
    let mut lhs = Vec::with_capacity(times.len());
    let mut rhs = Vec::with_capacity(times.len());
    let mut bound = Vec::with_capacity(times.len());
    for (k, r) in ts.records.iter().enumerate() {
        let l = r.moments.log_mass + coef * mm[k];
        let ft = ln_j * r.cum_trunc_loss;
        l_m.push(l);
        flux_term.push(ft);
        lhs.push(l + delta * int_m_lambda[k] + ft);
        rhs.push(l0 + c1 * r.t + slack);
        bound.push((sig + c1_m1 * r.t) / delta);
    }
    let verdict = Verdict::from_margins("lyapunov", &times, &lhs, &rhs);
    let integral_verdict = Verdict::from_margins("lyapunov_m_lambda_integral", &times, &int_m_lambda, &bound);
    let first_violation = times.iter().zip(lhs.iter().zip(&rhs)).find(|(_, (a, b))| a > b).map(|(t, _)| *t);
    Ok(LyapunovReport {
        m,
        times,
        l_m,
        int_m_lambda,
        flux_term,
        lhs,
        rhs,
        l0,
        c1,
        delta,
        slack,
        m_lambda_bound: bound,
        first_violation,
        verdict,
        integral_verdict,
    })
}

/// Checks `M_m(t) ≤ max{M_m(0), C_2(m)} (2+t)^{(λ-m)/(λ-1)}` with
/// `C_2(m) = ((σ + C_1(m1))/δ_ρ) (a0 𝔟_{m,1})^{(λ-m)/(λ-1)}`, `ρ = M_1(0)`.
pub fn low_moment_check(ts: &TimeSeries, m: f64, spec: &ValidatedSpec) -> Result<Verdict> {
    let lo = -spec.nu() - 1.0;
    if !(m > lo && m < ts.m1) {
        return Err(domain(format!("m = {m} must lie in ({lo}, {})", ts.m1)));
    }
    let rho = ts.initial_mass();
    if !(rho < spec.rho_star()) {
        return Err(domain(format!("initial mass {rho} is not below the critical mass {}", spec.rho_star())));
    }
    let lambda = spec.lambda();
    let expo = (lambda - m) / (lambda - 1.0);
    let sig = sigma(ts, spec)?;
    let delta = spec.delta_rho(rho);
    let c1 = spec.lemma_c1(ts.m1, rho)?;
    let c2 = (sig + c1) / delta * math::powf(spec.a0() * spec.frag_moment(m, 1.0)?, expo);
    let mm = ts.moment_series(m)?;
    let base = mm[0].max(c2);
    let times = ts.times();
    let bounds: Vec<f64> = times.iter().map(|&t| base * math::powf(2.0 + t, expo)).collect();
    Ok(Verdict::from_margins("low_moment", &times, &mm, &bounds))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HighMomentReport {
    pub m: f64,
    pub sup: f64,
    pub sup_time: f64,
    pub pass: bool,
}

/// Reports `sup_t M_m(t)` for `m > 1 + λ - α`; passes when it is finite.
pub fn high_moment_check(ts: &TimeSeries, m: f64, spec: &ValidatedSpec) -> Result<HighMomentReport> {
    let lo = 1.0 + spec.lambda() - spec.alpha();
    if !(m > lo) {
        return Err(domain(format!("m = {m} must exceed 1 + lambda - alpha = {lo}")));
    }
    let mm = ts.moment_series(m)?;
    let mut sup = 0.0;
    let mut sup_time = 0.0;
    let mut pass = true;
    for (r, &v) in ts.records.iter().zip(&mm) {
        pass &= v.is_finite();
        if v > sup || !v.is_finite() {
            sup = v;
            sup_time = r.t;
        }
    }
    Ok(HighMomentReport { m, sup, sup_time, pass })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GelationVerdict {
    MassConserving,
    Gelling { t_gel: Option<f64> },
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GelationReport {
    pub verdict: GelationVerdict,
    pub time: f64,
    pub js: Vec<f64>,
    /// Cumulative truncation loss at `time` for each run.
    pub losses: Vec<f64>,
    /// Loss reduction factor per doubling of `j` for consecutive runs.
    pub factors: Vec<f64>,
    /// `|L_last - L_prev| / max(L_last, L_prev)`.
    pub spread: f64,
    pub initial_mass: f64,
}

/// Per-doubling loss factor accepted as "at least halving" (0.5 plus 30 %).
pub const HALVING_FACTOR: f64 = 0.65;
/// Largest relative spread between the two largest `j` for a converged loss.
pub const GEL_SPREAD: f64 = 0.2;
/// Loss fraction of the initial mass that counts as a positive limit, and
/// that defines the gelation time estimate.
pub const GEL_FLOOR: f64 = 0.01;
/// Losses below this fraction of the initial mass are rounding noise.
pub const NEGLIGIBLE_LOSS: f64 = 1e-12;

/// Classifies a sequence of runs with identical physics and increasing `j`,
/// comparing cumulative losses at the common final time (or `time`).
pub fn gelation_scan(runs: &[&TimeSeries], time: Option<f64>) -> Result<GelationReport> {
    if runs.len() < 3 {
        return Err(Error::InsufficientRuns { needed: 3, got: runs.len() });
    }
    let first = runs[0];
    for r in runs {
        if r.spec != first.spec || r.physics != first.physics || r.records.is_empty() {
            return Err(domain("gelation scan runs must share the same physics"));
        }
    }
    let js: Vec<f64> = runs.iter().map(|r| r.j).collect();
    if js.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain(format!("truncation sizes must increase strictly, got {js:?}")));
    }
    let common_end = runs.iter().map(|r| r.records.last().unwrap().t).fold(f64::INFINITY, f64::min);
    let t = time.unwrap_or(common_end);
    if t > common_end {
        return Err(domain(format!("scan time {t} is past the shortest run ({common_end})")));
    }
    let initial_mass = first.initial_mass();
    let losses: Vec<f64> = runs.iter().map(|r| r.loss_at(t)).collect();
    let floor = NEGLIGIBLE_LOSS * initial_mass;
    let factors: Vec<f64> = js
        .windows(2)
        .zip(losses.windows(2))
        .map(|(j, l)| {
            if l[0] <= 0.0 {
                if l[1] <= 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                math::powf(l[1] / l[0], 1.0 / (math::ln(j[1] / j[0]) / math::LN_2))
            }
        })
        .collect();
    let n = losses.len();
    let (prev, last) = (losses[n - 2], losses[n - 1]);
    let spread = if last.max(prev) > 0.0 { (last - prev).abs() / last.max(prev) } else { 0.0 };
    let conserving = losses.windows(2).zip(&factors).all(|(l, &q)| l[1] <= floor || q <= HALVING_FACTOR);
    let verdict = if conserving {
        GelationVerdict::MassConserving
    } else if last >= GEL_FLOOR * initial_mass && spread < GEL_SPREAD {
        let threshold = GEL_FLOOR * initial_mass;
        let big = runs[n - 1];
        let mut t_gel = None;
        for w in big.records.windows(2) {
            if w[1].cum_trunc_loss > threshold {
                let (a, b) = (&w[0], &w[1]);
                let s = (threshold - a.cum_trunc_loss) / (b.cum_trunc_loss - a.cum_trunc_loss);
                t_gel = Some(a.t + s.clamp(0.0, 1.0) * (b.t - a.t));
                break;
            }
        }
        GelationVerdict::Gelling { t_gel }
    } else {
        GelationVerdict::Inconclusive
    };
    Ok(GelationReport { verdict, time: t, js, losses, factors, spread, initial_mass })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    /// `D(t) = Σ W(x̄_i) |f1_i - f2_i| Δ_i`, `W(x) = x^α + x^λ`.
    pub distance: Vec<f64>,
    /// Sum of the two trajectories' suprema of `M_α` and of `M_{2λ-α}`.
    pub sup_m_alpha: f64,
    pub sup_m_high: f64,
    /// `9 K0 (𝓜_α + 𝓜_{2λ-α}) + a0 𝔟_{α,1}`.
    pub rate: f64,
    pub bounds: Vec<f64>,
    pub verdict: Verdict,
}

/// Slack factor on the Grönwall bound.
pub const CONTRACTION_SLACK: f64 = 1.05;
/// Absolute distance accepted when both runs start from the same state.
pub const IDENTICAL_TOL: f64 = 1e-12;

/// Weighted distance between two states on the same grid.
pub fn weighted_distance(a: &State, b: &State, alpha: f64, lambda: f64) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let g = a.grid();
    let mut d = 0.0;
    for (((&x, &w), &fa), &fb) in g.centers().iter().zip(g.widths()).zip(a.values()).zip(b.values()) {
        d += (math::powf(x, alpha) + math::powf(x, lambda)) * (fa - fb).abs() * w;
    }
    Ok(d)
}

/// Checks `D(t) ≤ 1.05 · D(0) e^{R t}` on the snapshot times shared by both runs
/// (or `D(t) ≤ 1e-12` when `D(0) = 0`).
pub fn contraction_check(ts1: &TimeSeries, ts2: &TimeSeries, spec: &ValidatedSpec) -> Result<ContractionReport> {
    if ts1.grid != ts2.grid {
        return Err(Error::GridMismatch);
    }
    let (alpha, lambda) = (spec.alpha(), spec.lambda());
    let mut pairs: Vec<(&State, &State)> = Vec::new();
    for s in &ts1.snapshots {
        if let Some(o) = ts2.snapshots.iter().find(|o| o.t == s.t) {
            pairs.push((s, o));
        }
    }
    if pairs.is_empty() || pairs[0].0.t != ts1.records[0].t {
        return Err(Error::MissingSnapshots);
    }
    let t_max = pairs.last().unwrap().0.t;
    let sup = |ts: &TimeSeries, m: f64| -> Result<f64> {
        let v = ts.moment_series(m)?;
        Ok(ts.records.iter().zip(v).filter(|(r, _)| r.t <= t_max).map(|(_, v)| v).fold(0.0, f64::max))
    };
    let high = 2.0 * lambda - alpha;
    let sup_m_alpha = sup(ts1, alpha)? + sup(ts2, alpha)?;
    let sup_m_high = sup(ts1, high)? + sup(ts2, high)?;
    let rate = 9.0 * spec.k0() * (sup_m_alpha + sup_m_high) + spec.a0() * spec.frag_moment(alpha, 1.0)?;
    let mut times = Vec::new();
    let mut distance = Vec::new();
    for (a, b) in &pairs {
        times.push(a.t);
        distance.push(weighted_distance(a, b, alpha, lambda)?);
    }
    let d0 = distance[0];
    let t0 = times[0];
    let bounds: Vec<f64> = times
        .iter()
        .map(|&t| if d0 > 0.0 { CONTRACTION_SLACK * d0 * math::exp(rate * (t - t0)) } else { IDENTICAL_TOL })
        .collect();
    let verdict = Verdict::from_margins("contraction", &times, &distance, &bounds);
    Ok(ContractionReport { times, distance, sup_m_alpha, sup_m_high, rate, bounds, verdict })
}

/// Test functions for the weak-form residual; all vanish at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction {
    /// `min(x, R)`.
    MinCap(f64),
    /// `R^m (1 - exp(-(x/R)^m))`, close to `x^m` for `x ≪ R` and bounded.
    PowerCap { m: f64, r: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::MinCap(r) => x.min(r),
            TestFunction::PowerCap { m, r } => {
                let u = math::powf(x / r, m);
                -math::powf(r, m) * math::expm1(-u)
            }
        }
    }

    /// The default family: `x ∧ R` for `R ∈ {0.1, 1, 10}` and the capped `x^{m1}`.
    pub fn family(m1: f64) -> Vec<TestFunction> {
        alloc::vec![
            TestFunction::MinCap(0.1),
            TestFunction::MinCap(1.0),
            TestFunction::MinCap(10.0),
            TestFunction::PowerCap { m: m1, r: 10.0 },
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakResidualReport {
    /// Largest `|Σϑf(t)Δ - Σϑf(0)Δ - ∫(terms)| / σ` per test function.
    pub per_function: Vec<(TestFunction, f64)>,
    pub max_residual: f64,
    pub sigma: f64,
}

/// Evaluates the weak identity on the stored snapshots; the time integral of
/// the right-hand side uses piecewise-quadratic interpolation.
pub fn weak_residual(
    ts: &TimeSeries,
    disc: &Discretization,
    functions: &[TestFunction],
    form: WeakForm,
) -> Result<WeakResidualReport> {
    if ts.snapshots.len() < 2 {
        return Err(Error::MissingSnapshots);
    }
    if disc.grid() != &ts.grid {
        return Err(Error::GridMismatch);
    }
    let sig = sigma(ts, disc.spec())?;
    let times: Vec<f64> = ts.snapshots.iter().map(|s| s.t).collect();
    let mut per_function = Vec::new();
    let mut max_residual: f64 = 0.0;
    for tf in functions {
        let theta = |x: f64| tf.eval(x);
        let mut integrand = Vec::with_capacity(times.len());
        let mut pairing = Vec::with_capacity(times.len());
        for s in &ts.snapshots {
            integrand.push(disc.weak_terms(s.values(), theta, form)?.total());
            let g = s.grid();
            let p: f64 = g
                .centers()
                .iter()
                .zip(g.widths())
                .zip(s.values())
                .map(|((&x, &w), &f)| theta(x) * f * w)
                .sum();
            pairing.push(p);
        }
        let integral = cumulative_quadratic(&times, &integrand);
        let worst = pairing
            .iter()
            .zip(&integral)
            .map(|(p, i)| (p - pairing[0] - i).abs())
            .fold(0.0, f64::max);
        let normalized = if sig > 0.0 { worst / sig } else { worst };
        max_residual = max_residual.max(normalized);
        per_function.push((*tf, normalized));
    }
    Ok(WeakResidualReport { per_function, max_residual, sigma: sig })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::InitialData;
    use crate::integrator::{prepare, run, run_from, GridSpec, RunConfig, SnapshotPolicy};
    use crate::kernel::{validate, CoefficientSpec};
    use crate::operators::{Physics, TruncationSpec};
    use alloc::sync::Arc;

    fn canonical() -> ValidatedSpec {
        validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, 0.0)).unwrap()
    }

    fn small_run(rho: f64, j: f64, t_end: f64) -> RunConfig {
        let mut c = RunConfig::new(
            CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, 0.0),
            GridSpec::geometric(1e-3, 1e3, 12),
            InitialData::Exponential { scale: 1.0 },
            Some(rho),
        );
        c.trunc = TruncationSpec::paper(j);
        c.t_end = t_end;
        c.output_stride = 0.25;
        c
    }

    #[test]
    fn quadrature_rules() {
        let t = [0.0, 0.3, 0.5, 1.2, 2.0, 2.1];
        let v: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 1.0).collect();
        let q = cumulative_quadratic(&t, &v);
        for (x, i) in t.iter().zip(&q) {
            let exact = x * x * x - 0.5 * x * x + x;
            assert!((i - exact).abs() < 1e-12, "{x}: {i} {exact}");
        }
        let tr = cumulative_trapezoid(&[0.0, 1.0, 3.0], &[0.0, 1.0, 3.0]);
        assert_eq!(tr, vec![0.0, 0.5, 4.5]);
    }

    #[test]
    fn lyapunov_check_sub_threshold() {
        let spec = canonical();
        let ts = run(&small_run(0.2, 100.0, 3.0)).unwrap();
        let rep = lyapunov_check(&ts, ts.m1, &spec, 0.2).unwrap();
        assert!(rep.verdict.pass, "{:?}", rep.verdict);
        assert!(rep.integral_verdict.pass);
        // at t = 0 only the coefficient 1 vs 2 differs
        assert!(rep.lhs[0] < rep.rhs[0]);
        assert!(rep.int_m_lambda.windows(2).all(|w| w[1] >= w[0]));
        assert!(lyapunov_check(&ts, 0.5, &spec, 0.2).is_err());
        assert!(lyapunov_check(&ts, ts.m1, &spec, 0.5).is_err());
    }

    #[test]
    fn low_and_high_moment_checks() {
        let spec = canonical();
        let ts = run(&small_run(0.2, 100.0, 3.0)).unwrap();
        let v = low_moment_check(&ts, ts.m0, &spec).unwrap();
        assert!(v.pass && v.worst_margin >= 0.0);
        assert!(low_moment_check(&ts, -1.0, &spec).is_err());
        let h = high_moment_check(&ts, 3.0, &spec).unwrap();
        assert!(h.pass && h.sup > 0.0);
        assert!(high_moment_check(&ts, 2.0, &spec).is_err());
    }

    #[test]
    fn gelation_scan_edge_cases() {
        let zero: Vec<TimeSeries> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&j| {
                let mut c = small_run(0.2, j, 0.5);
                c.initial = InitialData::Zero;
                c.mass = None;
                run(&c).unwrap()
            })
            .collect();
        let refs: Vec<&TimeSeries> = zero.iter().collect();
        let rep = gelation_scan(&refs, None).unwrap();
        assert_eq!(rep.verdict, GelationVerdict::MassConserving);
        assert!(rep.losses.iter().all(|&l| l == 0.0));
        assert!(matches!(gelation_scan(&refs[..1], None), Err(Error::InsufficientRuns { .. })));
        let rev = [refs[2], refs[1], refs[0]];
        assert!(gelation_scan(&rev, None).is_err());
    }

    #[test]
    fn contraction_identical_and_perturbed() {
        let spec = canonical();
        let mut c = small_run(0.2, 100.0, 1.0);
        c.snapshots = SnapshotPolicy::All;
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        let rep = contraction_check(&a, &b, &spec).unwrap();
        assert!(rep.verdict.pass && rep.distance.iter().all(|&d| d == 0.0));

        let (disc, s0) = prepare(&c).unwrap();
        let mut v = s0.values().to_vec();
        v[20] *= 1.01;
        let s1 = State::new(s0.grid().clone(), v, 0.0).unwrap();
        let p = run_from(&disc, s1, &c).unwrap();
        let rep = contraction_check(&a, &p, &spec).unwrap();
        assert!(rep.verdict.pass, "{:?}", rep.verdict);
        assert!(rep.distance[0] > 0.0);

        let mut other = c.clone();
        other.grid.n_cells += 1;
        let o = run(&other).unwrap();
        assert!(matches!(contraction_check(&a, &o, &spec), Err(Error::GridMismatch)));
    }

    #[test]
    fn weak_residual_zero_and_scheme() {
        let mut c = small_run(0.2, 100.0, 1.0);
        c.snapshots = SnapshotPolicy::All;
        c.output_stride = 0.05;
        let (disc, _) = prepare(&c).unwrap();
        let ts = run(&c).unwrap();
        let fam = TestFunction::family(ts.m1);
        let rep = weak_residual(&ts, &disc, &fam, WeakForm::Scheme).unwrap();
        assert!(rep.max_residual < 1e-5, "{rep:?}");

        let mut z = c.clone();
        z.initial = InitialData::Zero;
        z.mass = None;
        let zt = run(&z).unwrap();
        let rep = weak_residual(&zt, &disc, &fam, WeakForm::Continuous).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        let _ = Arc::strong_count(&ts.grid);
    }

    #[test]
    fn weak_residual_pure_fragmentation_continuous() {
        let mut c = RunConfig::new(
            CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, 0.0),
            GridSpec::geometric(1e-4, 1e2, 40),
            InitialData::Exponential { scale: 1.0 },
            None,
        );
        c.physics = Physics { coagulation: false, fragmentation: true };
        c.t_end = 1.0;
        c.output_stride = 0.05;
        c.snapshots = SnapshotPolicy::All;
        let (disc, _) = prepare(&c).unwrap();
        let ts = run(&c).unwrap();
        let rep = weak_residual(&ts, &disc, &TestFunction::family(ts.m1), WeakForm::Continuous).unwrap();
        assert!(rep.max_residual < 1e-2, "{rep:?}");
    }

    #[test]
    fn test_functions_vanish_at_zero_and_are_bounded() {
        for tf in TestFunction::family(0.75) {
            assert_eq!(tf.eval(0.0), 0.0);
            assert!(tf.eval(1e12).is_finite() && tf.eval(1e12) <= 10.0f64.powf(0.75) + 10.0);
        }
        let p = TestFunction::PowerCap { m: 0.75, r: 10.0 };
        assert!((p.eval(1e-3) / 1e-3f64.powf(0.75) - 1.0).abs() < 1e-2);
    }
}
