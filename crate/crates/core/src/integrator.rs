//! Adaptive Heun time stepping with an embedded Euler error estimate.
//!
//! Steps are never clipped: a step whose Euler stage or result has a negative
//! entry is rejected and retried with half the step size. The truncation loss
//! is accumulated with the same trapezoidal weights as the state update, so
//! `M_1(t) + loss(t) = M_1(0)` holds to rounding.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Error};
use crate::grid::{make_grid, moments, GridKind, InitialData, MomentReport, SizeGrid, State};
use crate::kernel::{validate, CoefficientSpec, ValidatedSpec};
use crate::math::{self, Compensated};
use crate::operators::{Discretization, Physics, Rates, StepLedger, TruncationSpec};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub kind: GridKind,
}

impl GridSpec {
    /// Geometric grid with `per_decade` cells per decade.
    pub fn geometric(x_min: f64, x_max: f64, per_decade: usize) -> Self {
        let decades = math::ln(x_max / x_min) / math::ln(10.0);
        let n = math::floor(decades * per_decade as f64 + 0.5) as usize;
        GridSpec { x_min, x_max, n_cells: n.max(2), kind: GridKind::Geometric }
    }

    pub fn build(&self) -> Result<SizeGrid> {
        make_grid(self.x_min, self.x_max, self.n_cells, self.kind)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::geometric(1e-4, 1e4, 160)
    }
}

/// Which output records also keep the full state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SnapshotPolicy {
    /// Initial and final state only.
    None,
    /// Every output record.
    All,
    /// Records at least `interval` apart in time.
    Every(f64),
    /// Records at times `first, first·ratio, first·ratio², …`.
    Geometric { first: f64, ratio: f64 },
}

/// Step-size control parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Abort with [`Error::ResourceCap`] after this many attempted steps.
    pub max_steps: u64,
    /// Accepted densities below this value are set to zero and their mass is
    /// booked in [`Record::cum_flushed`]; `0` disables flushing.
    pub flush_below: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { dt_init: 1e-4, dt_min: 1e-14, dt_max: 1.0, rel_tol: 1e-6, abs_tol: 1e-14, max_steps: 50_000_000, flush_below: 1e-20 }
    }
}

impl StepControl {
    pub fn check(&self) -> Result<()> {
        let StepControl { dt_init, dt_min, dt_max, rel_tol, abs_tol, .. } = *self;
        if !(dt_min > 0.0 && dt_min <= dt_init && dt_init <= dt_max && dt_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {dt_min}, {dt_init}, {dt_max}"
            )));
        }
        if !(self.flush_below >= 0.0 && self.flush_below < abs_tol) {
            return Err(Error::InvalidConfig(format!(
                "flush threshold must lie in [0, abs_tol), got {}",
                self.flush_below
            )));
        }
        if !(rel_tol > 0.0 && abs_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must be positive, got rel {rel_tol}, abs {abs_tol}"
            )));
        }
        Ok(())
    }
}

/// Everything needed for one deterministic run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spec: CoefficientSpec,
    pub grid: GridSpec,
    pub initial: InitialData,
    /// Target initial mass `ρ`; `None` keeps the projected density as is.
    pub mass: Option<f64>,
    pub trunc: TruncationSpec,
    pub physics: Physics,
    pub t_end: f64,
    pub output_stride: f64,
    pub control: StepControl,
    /// Exponents for the Lyapunov functional; default to window midpoints.
    pub m0: Option<f64>,
    pub m1: Option<f64>,
    pub extra_moments: Vec<f64>,
    pub snapshots: SnapshotPolicy,
}

impl RunConfig {
    pub fn new(spec: CoefficientSpec, grid: GridSpec, initial: InitialData, mass: Option<f64>) -> Self {
        RunConfig {
            spec,
            grid,
            initial,
            mass,
            trunc: TruncationSpec::none(),
            physics: Physics::default(),
            t_end: 1.0,
            output_stride: 0.1,
            control: StepControl::default(),
            m0: None,
            m1: None,
            extra_moments: Vec::new(),
            snapshots: SnapshotPolicy::None,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.control.check()?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if !(self.output_stride > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "output stride must be positive, got {}",
                self.output_stride
            )));
        }
        if let SnapshotPolicy::Geometric { first, ratio } = self.snapshots {
            if !(first > 0.0 && ratio > 1.0) {
                return Err(Error::InvalidConfig("geometric snapshots need first > 0 and ratio > 1".into()));
            }
        }
        if let SnapshotPolicy::Every(dt) = self.snapshots {
            if !(dt > 0.0) {
                return Err(Error::InvalidConfig("snapshot interval must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Moments and bookkeeping at one output time.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub t: f64,
    pub moments: MomentReport,
    /// `Σ x̄|ln x̄| f Δ + M_{m1} / (e(1-m1))`.
    pub lyapunov: f64,
    pub cum_trunc_loss: f64,
    /// Mass removed by the underflow floor; `M_1 + cum_trunc_loss + cum_flushed`
    /// is constant up to rounding.
    pub cum_flushed: f64,
    /// Flux out of `(0, j)` at this time.
    pub flux: f64,
    /// Last accepted step size (0 before the first step).
    pub dt: f64,
    pub steps: u64,
    pub rejected: u64,
}

/// Trace of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub spec: CoefficientSpec,
    pub grid: Arc<SizeGrid>,
    pub trunc: TruncationSpec,
    /// Effective truncation size.
    pub j: f64,
    pub physics: Physics,
    pub m0: f64,
    pub m1: f64,
    pub rel_tol: f64,
    pub records: Vec<Record>,
    pub snapshots: Vec<State>,
}

impl TimeSeries {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// `M_m` at every record.
    pub fn moment_series(&self, m: f64) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| r.moments.get(m).ok_or(Error::MissingMoment(m)))
            .collect()
    }

    pub fn initial_mass(&self) -> f64 {
        self.records[0].moments.get(1.0).unwrap_or(0.0)
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map(|r| r.cum_trunc_loss).unwrap_or(0.0)
    }

    /// Cumulative truncation loss at time `t`, interpolated linearly between records.
    pub fn loss_at(&self, t: f64) -> f64 {
        let r = &self.records;
        let k = r.partition_point(|x| x.t <= t);
        if k == 0 {
            return r[0].cum_trunc_loss;
        }
        if k >= r.len() {
            return r[r.len() - 1].cum_trunc_loss;
        }
        let (a, b) = (&r[k - 1], &r[k]);
        a.cum_trunc_loss + (b.cum_trunc_loss - a.cum_trunc_loss) * (t - a.t) / (b.t - a.t)
    }

    pub fn final_state(&self) -> Option<&State> {
        self.snapshots.last()
    }
}

/// Default exponents `(m0, m1)`: window midpoints.
pub fn default_exponents(spec: &ValidatedSpec) -> Result<(f64, f64)> {
    let w0 = spec.m0_window();
    if w0.is_empty() {
        return Err(domain("the m0 window is empty"));
    }
    let m0 = w0.midpoint();
    let w1 = spec.m1_window(m0);
    if w1.is_empty() {
        return Err(domain("the m1 window is empty"));
    }
    Ok((m0, w1.midpoint()))
}

/// Exponents tracked in every record.
pub fn tracked_exponents(spec: &ValidatedSpec, m0: f64, m1: f64, extra: &[f64]) -> Vec<f64> {
    let lambda = spec.lambda();
    let alpha = spec.alpha();
    let mut out: Vec<f64> = Vec::new();
    for m in [m0, m1, 1.0, lambda, 2.0 * lambda - alpha, alpha].into_iter().chain(extra.iter().copied()) {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn lyapunov_value(report: &MomentReport, m1: f64) -> f64 {
    report.log_mass + report.get(m1).unwrap_or(0.0) / (math::E * (1.0 - m1))
}

/// Validates the configuration, projects the initial datum and integrates.
pub fn run(config: &RunConfig) -> Result<TimeSeries> {
    let (disc, state) = prepare(config)?;
    run_from(&disc, state, config)
}

/// Builds the operator tables and the (truncated) initial state.
pub fn prepare(config: &RunConfig) -> Result<(Discretization, State)> {
    config.check()?;
    let spec = validate(config.spec.clone())?;
    let grid = Arc::new(config.grid.build()?);
    let disc = Discretization::new(&spec, grid.clone(), config.trunc, config.physics)?;
    let state = config.initial.project(grid, config.mass)?.truncated(disc.j());
    Ok((disc, state))
}

struct Recorder {
    exponents: Vec<f64>,
    m1: f64,
    policy: SnapshotPolicy,
    next_snapshot: f64,
    records: Vec<Record>,
    snapshots: Vec<State>,
}

impl Recorder {
    fn new(exponents: Vec<f64>, m1: f64, policy: SnapshotPolicy) -> Self {
        let next_snapshot = match policy {
            SnapshotPolicy::Geometric { first, .. } => first,
            _ => 0.0,
        };
        Recorder { exponents, m1, policy, next_snapshot, records: Vec::new(), snapshots: Vec::new() }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, state: &State, loss: (f64, f64), flux: f64, dt: f64, steps: u64, rejected: u64, last: bool) {
        let report = moments(state, &self.exponents);
        let lyapunov = lyapunov_value(&report, self.m1);
        self.records.push(Record {
            t: state.t,
            moments: report,
            lyapunov,
            cum_trunc_loss: loss.0,
            cum_flushed: loss.1,
            flux,
            dt,
            steps,
            rejected,
        });
        let first = self.records.len() == 1;
        let keep = first
            || last
            || match self.policy {
                SnapshotPolicy::None => false,
                SnapshotPolicy::All => true,
                SnapshotPolicy::Every(_) | SnapshotPolicy::Geometric { .. } => {
                    state.t >= self.next_snapshot * (1.0 - 1e-12)
                }
            };
        if keep {
            let already = self.snapshots.last().map(|s| s.t == state.t).unwrap_or(false);
            if !already {
                self.snapshots.push(state.clone());
            }
            match self.policy {
                SnapshotPolicy::Every(interval) => {
                    while self.next_snapshot <= state.t * (1.0 + 1e-12) {
                        self.next_snapshot += interval;
                    }
                }
                SnapshotPolicy::Geometric { ratio, .. } => {
                    while self.next_snapshot <= state.t * (1.0 + 1e-12) {
                        self.next_snapshot *= ratio;
                    }
                }
                _ => {}
            }
        }
    }
}

/// Mutable stepping workspace.
struct Stepper<'a> {
    disc: &'a Discretization,
    k1: Rates,
    k2: Rates,
    stage: Vec<f64>,
    next: Vec<f64>,
    ledger1: StepLedger,
    fresh: bool,
}

enum Attempt {
    Accepted { err: f64, flux_avg: f64 },
    Negative,
    TooLarge { err: f64 },
}

impl<'a> Stepper<'a> {
    fn new(disc: &'a Discretization) -> Self {
        let n = disc.grid().len();
        Stepper {
            disc,
            k1: Rates::new(n),
            k2: Rates::new(n),
            stage: vec![0.0; n],
            next: vec![0.0; n],
            ledger1: StepLedger::default(),
            fresh: false,
        }
    }

    fn ensure_k1(&mut self, y: &[f64]) {
        if !self.fresh {
            self.ledger1 = self.disc.evaluate(y, &mut self.k1);
            self.fresh = true;
        }
    }

    /// Largest step allowed by the explicit stability guard.
    fn stiffness_limit(&self, y: &[f64], abs_tol: f64) -> f64 {
        let mut rate: f64 = 0.0;
        for (&f, &l) in y.iter().zip(&self.k1.loss) {
            if f > abs_tol {
                rate = rate.max(l / f);
            }
        }
        if rate > 0.0 {
            0.5 / rate
        } else {
            f64::INFINITY
        }
    }

    fn attempt(&mut self, y: &[f64], h: f64, ctl: &StepControl) -> Result<Attempt> {
        for ((s, &yi), &k) in self.stage.iter_mut().zip(y).zip(&self.k1.rhs) {
            *s = yi + h * k;
        }
        if self.stage.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite Euler stage"));
        }
        if self.stage.iter().any(|&v| v < 0.0) {
            return Ok(Attempt::Negative);
        }
        let ledger2 = self.disc.evaluate(&self.stage, &mut self.k2);
        let mut err_sq = Compensated::default();
        let mut negative = false;
        for i in 0..y.len() {
            let (a, b) = (self.k1.rhs[i], self.k2.rhs[i]);
            let v = y[i] + 0.5 * h * (a + b);
            self.next[i] = v;
            negative |= v < 0.0;
            let scale = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(v.abs());
            let e = 0.5 * h * (b - a) / scale;
            err_sq.add(e * e);
        }
        let err = math::sqrt(err_sq.value() / y.len() as f64);
        if self.next.iter().any(|v| !v.is_finite()) || !err.is_finite() {
            return Err(domain("non-finite Heun update"));
        }
        if negative {
            return Ok(Attempt::Negative);
        }
        if err > 1.0 {
            return Ok(Attempt::TooLarge { err });
        }
        let flux_avg = 0.5 * (self.ledger1.coag_mass_flux_out + ledger2.coag_mass_flux_out);
        Ok(Attempt::Accepted { err, flux_avg })
    }
}

/// Zeroes entries below `floor` and books their mass.
fn flush(y: &mut [f64], grid: &SizeGrid, floor: f64, flushed: &mut Compensated) {
    for ((v, &x), &w) in y.iter_mut().zip(grid.centers()).zip(grid.widths()) {
        if *v != 0.0 && *v < floor {
            flushed.add(x * *v * w);
            *v = 0.0;
        }
    }
}

const SAFETY: f64 = 0.9;
const PI_ALPHA: f64 = 0.35;
const PI_BETA: f64 = 0.2;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Integrates from `state` (already projected and truncated) to `config.t_end`.
pub fn run_from(disc: &Discretization, state: State, config: &RunConfig) -> Result<TimeSeries> {
    config.check()?;
    let spec = disc.spec().clone();
    let (dm0, dm1) = default_exponents(&spec)?;
    let m0 = config.m0.unwrap_or(dm0);
    let m1 = config.m1.unwrap_or(dm1);
    let exponents = tracked_exponents(&spec, m0, m1, &config.extra_moments);
    let ctl = config.control;
    let mut rec = Recorder::new(exponents, m1, config.snapshots);

    let t0 = state.t;
    let t_end = t0 + config.t_end;
    let grid = state.grid().clone();
    let mut y = state.into_values();
    let mut t = t0;
    let mut loss = Compensated::default();
    let mut flushed = Compensated::default();
    let mut stepper = Stepper::new(disc);
    stepper.ensure_k1(&y);
    if y.iter().any(|v| !v.is_finite()) || stepper.k1.rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t, last_state: alloc::boxed::Box::new(State::from_parts(grid, y, t)) });
    }
    let mut steps = 0u64;
    let mut rejected = 0u64;
    let mut last_dt;
    let done = config.t_end == 0.0;
    rec.record(
        &State::from_parts(grid.clone(), y.clone(), t),
        (0.0, 0.0),
        stepper.ledger1.coag_mass_flux_out,
        0.0,
        0,
        0,
        done,
    );

    let mut k_out = 1u64;
    let mut h = ctl.dt_init;
    let mut err_prev: f64 = 1.0;
    while t < t_end {
        let mut t_out = t0 + k_out as f64 * config.output_stride;
        if t_out > t_end || (t_end - t_out) <= 1e-12 * t_end.abs() {
            t_out = t_end;
        }
        stepper.ensure_k1(&y);
        let guard = stepper.stiffness_limit(&y, ctl.abs_tol);
        let desired = h.min(ctl.dt_max).min(guard);
        let (step, lands) = if t + desired >= t_out * (1.0 - 1e-14) {
            (t_out - t, true)
        } else {
            (desired, false)
        };
        if steps + rejected >= ctl.max_steps {
            return Err(Error::ResourceCap(format!("step budget of {} exhausted at t = {t}", ctl.max_steps)));
        }
        let outcome = match stepper.attempt(&y, step, &ctl) {
            Ok(o) => o,
            Err(_) => {
                return Err(Error::NonFinite { t, last_state: alloc::boxed::Box::new(State::from_parts(grid, y, t)) })
            }
        };
        match outcome {
            Attempt::Accepted { err, flux_avg } => {
                loss.add(step * flux_avg);
                core::mem::swap(&mut y, &mut stepper.next);
                if ctl.flush_below > 0.0 {
                    flush(&mut y, &grid, ctl.flush_below, &mut flushed);
                }
                t = if lands { t_out } else { t + step };
                steps += 1;
                last_dt = step;
                stepper.fresh = false;
                let e = err.max(1e-10);
                let fac = SAFETY * math::powf(e, -PI_ALPHA) * math::powf(err_prev, PI_BETA);
                let grown = desired * fac.clamp(FAC_MIN, FAC_MAX);
                // a step shortened to land on an output time does not shrink the next one
                h = if lands { grown.max(desired) } else { grown };
                err_prev = e;
                if lands {
                    stepper.ensure_k1(&y);
                    let last = t >= t_end;
                    rec.record(
                        &State::from_parts(grid.clone(), y.clone(), t),
                        (loss.value(), flushed.value()),
                        stepper.ledger1.coag_mass_flux_out,
                        last_dt,
                        steps,
                        rejected,
                        last,
                    );
                    k_out += 1;
                }
            }
            Attempt::Negative => {
                rejected += 1;
                h = 0.5 * step;
            }
            Attempt::TooLarge { err } => {
                rejected += 1;
                let fac = SAFETY * math::powf(err, -PI_ALPHA);
                h = step * fac.clamp(FAC_MIN, 1.0);
            }
        }
        if h < ctl.dt_min {
            return Err(Error::StepTooSmall { t, dt: h });
        }
    }

    Ok(TimeSeries {
        spec: spec.spec().clone(),
        grid,
        trunc: disc.truncation(),
        j: disc.j(),
        physics: disc.physics(),
        m0,
        m1,
        rel_tol: ctl.rel_tol,
        records: rec.records,
        snapshots: rec.snapshots,
    })
}

/// Result of one fixed-size step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: State,
    /// Step actually taken after negativity halvings.
    pub dt: f64,
    /// Mass lost through the truncation boundary during the step.
    pub trunc_loss: f64,
    pub ledger: StepLedger,
}

/// One Heun step of size `dt`, halved until both stages are non-negative.
pub fn step(disc: &Discretization, state: &State, dt: f64, dt_min: f64) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(domain(format!("step size must be positive, got {dt}")));
    }
    let n = disc.grid().len();
    let y = state.values();
    let mut k1 = Rates::new(n);
    let mut k2 = Rates::new(n);
    let l1 = disc.evaluate(y, &mut k1);
    let mut h = dt;
    loop {
        if h < dt_min {
            return Err(Error::StepTooSmall { t: state.t, dt: h });
        }
        let stage: Vec<f64> = y.iter().zip(&k1.rhs).map(|(a, k)| a + h * k).collect();
        if stage.iter().all(|&v| v >= 0.0) {
            let l2 = disc.evaluate(&stage, &mut k2);
            let next: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * (k1.rhs[i] + k2.rhs[i])).collect();
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t: state.t, last_state: alloc::boxed::Box::new(state.clone()) });
            }
            if next.iter().all(|&v| v >= 0.0) {
                let flux = 0.5 * (l1.coag_mass_flux_out + l2.coag_mass_flux_out);
                let ledger = crate::operators::combine(l1, l2);
                return Ok(StepOutcome {
                    state: State::from_parts(state.grid().clone(), next, state.t + h),
                    dt: h,
                    trunc_loss: h * flux,
                    ledger,
                });
            }
        }
        h *= 0.5;
    }
}

/// Fixed-step integration recording at multiples of `stride` (which must be a
/// multiple of `dt` up to rounding).
pub fn run_fixed(
    disc: &Discretization,
    state: State,
    dt: f64,
    t_end: f64,
    stride: f64,
    extra_moments: &[f64],
) -> Result<TimeSeries> {
    if !(dt > 0.0 && stride > 0.0 && t_end >= 0.0) {
        return Err(domain("fixed-step run needs dt > 0, stride > 0 and t_end >= 0"));
    }
    let spec = disc.spec().clone();
    let (m0, m1) = default_exponents(&spec)?;
    let exponents = tracked_exponents(&spec, m0, m1, extra_moments);
    let mut rec = Recorder::new(exponents, m1, SnapshotPolicy::All);
    let t0 = state.t;
    let mut s = state;
    let (_, l0) = disc.rhs(s.values());
    let mut loss = Compensated::default();
    let mut steps = 0u64;
    rec.record(&s, (0.0, 0.0), l0.coag_mass_flux_out, 0.0, 0, 0, t_end == 0.0);
    let n_steps = math::floor(t_end / dt + 0.5) as u64;
    let per_record = (math::floor(stride / dt + 0.5) as u64).max(1);
    for k in 1..=n_steps {
        let target = t0 + k as f64 * dt;
        let out = step(disc, &s, target - s.t, dt * 1e-6)?;
        let mut next = out.state;
        if out.dt < target - s.t {
            // a halving happened; finish the interval in the same way
            next.t = s.t + out.dt;
            loss.add(out.trunc_loss);
            s = next;
            let mut remaining = target - s.t;
            while remaining > 0.0 {
                let o = step(disc, &s, remaining, dt * 1e-6)?;
                loss.add(o.trunc_loss);
                remaining -= o.dt;
                s = o.state;
            }
            s.t = target;
        } else {
            loss.add(out.trunc_loss);
            next.t = target;
            s = next;
        }
        steps += 1;
        if k % per_record == 0 || k == n_steps {
            let (_, l) = disc.rhs(s.values());
            rec.record(&s, (loss.value(), 0.0), l.coag_mass_flux_out, dt, steps, 0, k == n_steps);
        }
    }
    Ok(TimeSeries {
        spec: spec.spec().clone(),
        grid: disc.grid().clone(),
        trunc: disc.truncation(),
        j: disc.j(),
        physics: disc.physics(),
        m0,
        m1,
        rel_tol: 0.0,
        records: rec.records,
        snapshots: rec.snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::kernel::CoefficientSpec;

    fn frag_only(per_decade: usize) -> RunConfig {
        let mut c = RunConfig::new(
            CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, 0.0),
            GridSpec::geometric(1e-4, 1e2, per_decade),
            InitialData::Exponential { scale: 1.0 },
            None,
        );
        c.physics = Physics { coagulation: false, fragmentation: true };
        c.t_end = 1.0;
        c.output_stride = 0.5;
        c
    }

    #[test]
    fn zero_state_stays_zero() {
        let mut c = frag_only(20);
        c.initial = InitialData::Zero;
        c.physics = Physics::default();
        let ts = run(&c).unwrap();
        assert!(ts.final_state().unwrap().values().iter().all(|&v| v == 0.0));
        assert_eq!(ts.final_loss(), 0.0);
    }

    #[test]
    fn zero_end_time_gives_one_record() {
        let mut c = frag_only(20);
        c.t_end = 0.0;
        let ts = run(&c).unwrap();
        assert_eq!(ts.records.len(), 1);
        assert_eq!(ts.snapshots.len(), 1);
        let (_, s0) = prepare(&c).unwrap();
        assert_eq!(ts.snapshots[0].values(), s0.values());
    }

    #[test]
    fn pure_fragmentation_matches_exact_solution() {
        let c = frag_only(40);
        let ts = run(&c).unwrap();
        let s = ts.final_state().unwrap();
        assert_eq!(s.t, 1.0);
        let g = s.grid();
        let mut err = 0.0;
        let mut norm = 0.0;
        for (i, w) in g.edges().windows(2).enumerate() {
            let avg = reference::pure_fragmentation_cell_average(1.0, 1.0, w[0], w[1]);
            err += (s.values()[i] - avg).abs() * g.widths()[i];
            norm += avg * g.widths()[i];
        }
        assert!(err / norm < 2e-2, "{}", err / norm);
        // records land exactly on the output grid
        assert_eq!(ts.times(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn mass_ledger_and_monotonicity_with_truncation() {
        let mut c = RunConfig::new(
            CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, 0.0),
            GridSpec::geometric(1e-3, 1e2, 20),
            InitialData::Exponential { scale: 1.0 },
            Some(1.0),
        );
        c.trunc = TruncationSpec::paper(10.0);
        c.t_end = 2.0;
        c.output_stride = 0.25;
        let ts = run(&c).unwrap();
        let m = ts.moment_series(1.0).unwrap();
        for (r, mi) in ts.records.iter().zip(&m) {
            let total = mi + r.cum_trunc_loss + r.cum_flushed;
            assert!((total - m[0]).abs() < 1e-12, "{} {}", mi, r.cum_trunc_loss);
            assert!(r.cum_flushed < 1e-15);
        }
        for w in m.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        assert!(ts.final_loss() > 0.0);
    }

    #[test]
    fn heun_is_second_order() {
        let c = frag_only(10);
        let (disc, s) = prepare(&c).unwrap();
        // a(x) ≤ 100 on this grid, so these steps never trigger a halving
        let full = step(&disc, &s, 4e-3, 1e-12).unwrap().state;
        let half = step(&disc, &step(&disc, &s, 2e-3, 1e-12).unwrap().state, 2e-3, 1e-12).unwrap().state;
        let full2 = step(&disc, &s, 2e-3, 1e-12).unwrap().state;
        let half2 = step(&disc, &step(&disc, &s, 1e-3, 1e-12).unwrap().state, 1e-3, 1e-12).unwrap().state;
        assert_eq!(full.t, 4e-3);
        let d = |a: &State, b: &State| -> f64 {
            a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let ratio = d(&full, &half) / d(&full2, &half2);
        assert!(ratio > 7.0 && ratio < 9.0, "{ratio}");
    }

    #[test]
    fn deterministic() {
        let mut c = frag_only(20);
        c.physics = Physics::default();
        c.trunc = TruncationSpec::paper(20.0);
        c.mass = Some(0.3);
        assert_eq!(run(&c).unwrap(), run(&c).unwrap());
    }

    #[test]
    fn config_checks() {
        let mut c = frag_only(10);
        c.control.dt_min = 1.0;
        assert!(matches!(run(&c), Err(Error::InvalidConfig(_))));
        let mut c = frag_only(10);
        c.control.dt_max = 1e-3;
        c.control.dt_init = 1e-3;
        c.control.dt_min = 1e-8;
        c.control.max_steps = 10;
        let r = run(&c);
        assert!(matches!(r, Err(Error::ResourceCap(_))), "{r:?}");
    }

    #[test]
    fn multiplicative_second_moment() {
        let mut c = RunConfig::new(
            CoefficientSpec::power_law(2.0, 1.0, 0.5, 1.0, 0.0),
            GridSpec::geometric(1e-3, 1e3, 30),
            InitialData::Exponential { scale: 1.0 },
            Some(1.0),
        );
        c.physics = Physics { coagulation: true, fragmentation: false };
        // K = 2·K0·xy = xy, M2(0) ≈ 2, blow-up at 1/(2·0.5·2) = 0.5
        c.t_end = 0.3;
        c.output_stride = 0.1;
        let ts = run(&c).unwrap();
        let m2 = ts.moment_series(2.0).unwrap();
        for (r, v) in ts.records.iter().zip(&m2) {
            let expect = m2[0] / (1.0 - 2.0 * 0.5 * m2[0] * r.t);
            assert!((v / expect - 1.0).abs() < 0.02, "t={} {v} {expect}", r.t);
        }
    }

    #[test]
    fn geometric_snapshots() {
        let mut c = frag_only(10);
        c.t_end = 1.0;
        c.output_stride = 0.05;
        c.snapshots = SnapshotPolicy::Geometric { first: 0.1, ratio: 2.0 };
        let ts = run(&c).unwrap();
        let times: Vec<f64> = ts.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 6, "{times:?}");
        assert_eq!(*times.last().unwrap(), 1.0);
    }
}
