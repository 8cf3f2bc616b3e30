//! Conservative sectional discretization of the truncated coagulation and
//! fragmentation operators.
//!
//! Cells are "below j" when their pivot satisfies `x̄_i ≤ j`; the kernel and
//! the fragmentation rate vanish on all other cells. A merger of cells `i` and
//! `k` produces size `v = x̄_i + x̄_k`:
//!
//! * `v > j`: the pair leaves the system and its mass `v` is booked as
//!   truncation flux;
//! * `x̄_l ≤ v < x̄_{l+1}` for active `l, l+1`: split between the two pivots so
//!   that number and mass are both conserved;
//! * `v` beyond the last active pivot but `≤ j`: the last active cell receives
//!   `v / x̄_last` particles, which conserves mass.
//!
//! Daughters of a parent in cell `k` are distributed over every cell below
//! `x̄_k`, including the lower half of cell `k` itself, and rescaled per parent
//! so that the discrete mass of the fragments equals `x̄_k`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::domain;
use crate::grid::{SizeGrid, State};
use crate::kernel::{DaughterSpec, ValidatedSpec};
use crate::math::{self, Compensated};
use crate::quad;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationMode {
    /// Kernel and fragmentation rate are zero for sizes above `j`.
    Paper,
    /// `j` is the right end of the grid.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationSpec {
    pub mode: TruncationMode,
    pub j: f64,
}

impl TruncationSpec {
    pub fn paper(j: f64) -> Self {
        TruncationSpec { mode: TruncationMode::Paper, j }
    }

    pub fn none() -> Self {
        TruncationSpec { mode: TruncationMode::None, j: f64::INFINITY }
    }

    /// The effective truncation size on `grid`.
    pub fn resolve(&self, grid: &SizeGrid) -> Result<f64> {
        match self.mode {
            TruncationMode::None => Ok(grid.x_max()),
            TruncationMode::Paper => {
                let j = self.j;
                if !(j > 1.0 && j.is_finite()) {
                    return Err(domain(format!("truncation size must be finite and > 1, got {j}")));
                }
                if j > grid.x_max() {
                    return Err(domain(format!(
                        "truncation size {j} exceeds the grid end {}",
                        grid.x_max()
                    )));
                }
                Ok(j)
            }
        }
    }
}

/// Switches for the two mechanisms; disabling one is a testing mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Physics {
    pub coagulation: bool,
    pub fragmentation: bool,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { coagulation: true, fragmentation: true }
    }
}

/// Mass rates produced by one right-hand-side evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLedger {
    /// Rate at which mass leaves `(0, j)` through pairs with `x̄_i + x̄_k > j`.
    pub coag_mass_flux_out: f64,
    /// Discrete mass rate of the fragmentation operator; zero up to rounding.
    pub frag_mass_residual: f64,
    pub coag_mass_gain: f64,
    pub coag_mass_loss: f64,
    pub frag_mass_gain: f64,
    pub frag_mass_loss: f64,
}

impl StepLedger {
    fn merge(self, other: StepLedger) -> StepLedger {
        StepLedger {
            coag_mass_flux_out: self.coag_mass_flux_out + other.coag_mass_flux_out,
            frag_mass_residual: self.frag_mass_residual + other.frag_mass_residual,
            coag_mass_gain: self.coag_mass_gain + other.coag_mass_gain,
            coag_mass_loss: self.coag_mass_loss + other.coag_mass_loss,
            frag_mass_gain: self.frag_mass_gain + other.frag_mass_gain,
            frag_mass_loss: self.frag_mass_loss + other.frag_mass_loss,
        }
    }
}

/// Per-cell density rates: `rhs = gain - loss`, with `loss ≥ 0` proportional
/// to the cell's own density.
#[derive(Clone, Debug, Default)]
pub struct Rates {
    pub rhs: Vec<f64>,
    pub loss: Vec<f64>,
    gain: Vec<f64>,
    number: Vec<f64>,
}

impl Rates {
    pub fn new(n: usize) -> Self {
        Rates { rhs: vec![0.0; n], loss: vec![0.0; n], gain: vec![0.0; n], number: vec![0.0; n] }
    }
}

/// Where the product of one merger goes.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Target {
    /// Leaves `(0, j)` carrying mass `v`.
    Out(f64),
    /// Split between pivots `lo` and `lo + 1` with these particle counts.
    Split(usize, f64, f64),
    /// `v / x̄_last` particles in the last active cell.
    Last(usize, f64),
}

/// Pivot data used by the pair loops; kernel values and split weights are
/// recomputed on the fly, which is cheaper than streaming `O(N²)` tables.
#[derive(Clone, Debug, Default)]
struct PairGeometry {
    c: Vec<f64>,
    /// `x̄^α` and `x̄^{λ-α}`.
    xa: Vec<f64>,
    xb: Vec<f64>,
    inv_gap: Vec<f64>,
    /// First `k ≥ i` whose merger with `i` reaches the last active pivot.
    k_last: Vec<usize>,
    /// First `k ≥ i` whose merger with `i` exceeds `j`.
    k_out: Vec<usize>,
}

impl PairGeometry {
    fn new(spec: &ValidatedSpec, centers: &[f64], j: f64) -> Self {
        let n = centers.len();
        let c = centers.to_vec();
        let xa = c.iter().map(|&x| math::powf(x, spec.alpha())).collect();
        let xb = c.iter().map(|&x| math::powf(x, spec.lambda() - spec.alpha())).collect();
        let inv_gap = c.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect();
        let last = c[n - 1];
        let k_last = (0..n).map(|i| i + c[i..].partition_point(|&y| c[i] + y < last)).collect();
        let k_out = (0..n).map(|i| i + c[i..].partition_point(|&y| c[i] + y <= j)).collect();
        PairGeometry { c, xa, xb, inv_gap, k_last, k_out }
    }

    #[inline]
    fn kernel(&self, k0: f64, i: usize, k: usize) -> f64 {
        // i ≤ k, same operand order as ValidatedSpec::kernel
        k0 * (self.xa[i] * self.xb[k] + self.xb[i] * self.xa[k])
    }

    #[inline]
    fn split(&self, lo: usize, v: f64) -> (f64, f64) {
        let w_hi = (v - self.c[lo]) * self.inv_gap[lo];
        (1.0 - w_hi, w_hi)
    }

    fn target(&self, i: usize, k: usize) -> Target {
        let n = self.c.len();
        let v = self.c[i] + self.c[k];
        if k >= self.k_out[i] {
            Target::Out(v)
        } else if k >= self.k_last[i] {
            Target::Last(n - 1, v / self.c[n - 1])
        } else {
            let lo = k + self.c[k..].partition_point(|&y| y <= v) - 1;
            let (a, b) = self.split(lo, v);
            Target::Split(lo, a, b)
        }
    }
}

#[derive(Clone, Debug)]
enum Fragmentation {
    /// Power-law daughters: `b(x, y) = (ν+2) x^ν y^{-ν-1}` factorizes, so the
    /// gain into cell `i` is `p_i Σ_{k>i} c_k g_k + keep_i g_i`.
    Separable { p: Vec<f64>, c: Vec<f64>, keep: Vec<f64> },
    /// General daughters: `w[off(k) + i]` is the rate of particles created in
    /// cell `i ≤ k` per particle in cell `k`.
    Dense { w: Vec<f64> },
}

/// Which discrete version of the weak-form terms to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeakForm {
    /// Pivot quadrature of the continuous integrands, with `N_ϑ` from
    /// quadrature of `B`.
    Continuous,
    /// The terms the scheme itself produces: `χ_ϑ` and `N_ϑ` use the same
    /// splitting and daughter weights as the right-hand side, so
    /// `d/dt Σ ϑ(x̄_i) f_i Δ_i` equals the sum of the three terms exactly.
    Scheme,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WeakTerms {
    pub coag: f64,
    pub frag: f64,
    pub boundary: f64,
}

impl WeakTerms {
    pub fn total(&self) -> f64 {
        self.coag + self.frag + self.boundary
    }
}

/// Precomputed operator tables for one coefficient set, grid and truncation.
#[derive(Clone, Debug)]
pub struct Discretization {
    spec: ValidatedSpec,
    grid: Arc<SizeGrid>,
    trunc: TruncationSpec,
    physics: Physics,
    j: f64,
    n_act: usize,
    /// Fragmentation rate on active cells.
    a: Vec<f64>,
    pairs: PairGeometry,
    frag: Fragmentation,
}

/// `∫_a^b x^{s-1} dx` for `0 < a ≤ b`, accurate for `s` near zero.
fn power_integral(a: f64, b: f64, s: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let l = math::ln(b / a);
    if s == 0.0 {
        l
    } else {
        math::powf(a, s) * math::expm1(s * l) / s
    }
}

impl Discretization {
    pub fn new(spec: &ValidatedSpec, grid: Arc<SizeGrid>, trunc: TruncationSpec, physics: Physics) -> Result<Self> {
        let j = trunc.resolve(&grid)?;
        let centers = grid.centers();
        let n_act = centers.partition_point(|&x| x <= j);
        let a: Vec<f64> = centers[..n_act].iter().map(|&x| spec.frag_rate(x)).collect();

        let pairs = if physics.coagulation && n_act > 0 {
            PairGeometry::new(spec, &centers[..n_act], j)
        } else {
            PairGeometry::default()
        };
        let frag = if physics.fragmentation {
            fragmentation_tables(spec, &grid, n_act, &a)
        } else {
            Fragmentation::Separable { p: Vec::new(), c: Vec::new(), keep: Vec::new() }
        };
        Ok(Discretization { spec: spec.clone(), grid, trunc, physics, j, n_act, a, pairs, frag })
    }

    pub fn spec(&self) -> &ValidatedSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<SizeGrid> {
        &self.grid
    }

    pub fn truncation(&self) -> TruncationSpec {
        self.trunc
    }

    pub fn physics(&self) -> Physics {
        self.physics
    }

    /// Effective truncation size.
    pub fn j(&self) -> f64 {
        self.j
    }

    /// Number of cells with pivot `≤ j`.
    pub fn active_len(&self) -> usize {
        self.n_act
    }

    fn check_len(&self, f: &[f64]) {
        assert_eq!(f.len(), self.grid.len(), "state length does not match the grid");
    }

    /// Full right-hand side; `rates.rhs` and `rates.loss` are overwritten.
    pub fn evaluate(&self, f: &[f64], rates: &mut Rates) -> StepLedger {
        self.check_len(f);
        let n = self.grid.len();
        if rates.rhs.len() != n {
            *rates = Rates::new(n);
        }
        for v in rates.gain.iter_mut().chain(rates.loss.iter_mut()) {
            *v = 0.0;
        }
        let widths = self.grid.widths();
        for ((g, &fi), &w) in rates.number.iter_mut().zip(f).zip(widths) {
            *g = fi * w;
        }
        let mut ledger = StepLedger::default();
        if self.physics.coagulation {
            let flux = self.coagulate(&rates.number, &mut rates.gain, &mut rates.loss);
            ledger.coag_mass_flux_out = flux;
        }
        let (coag_gain, coag_loss) = self.mass_of(&rates.gain, &rates.loss);
        ledger.coag_mass_gain = coag_gain;
        ledger.coag_mass_loss = coag_loss;
        if self.physics.fragmentation {
            let mut fgain = vec![0.0; n];
            let mut floss = vec![0.0; n];
            self.fragment(&rates.number, &mut fgain, &mut floss);
            let (g, l) = self.mass_of(&fgain, &floss);
            ledger.frag_mass_gain = g;
            ledger.frag_mass_loss = l;
            let c = self.grid.centers();
            let mut acc = Compensated::default();
            for i in 0..n {
                acc.add(c[i] * (fgain[i] - floss[i]));
                rates.gain[i] += fgain[i];
                rates.loss[i] += floss[i];
            }
            ledger.frag_mass_residual = acc.value();
        }
        for i in 0..n {
            rates.rhs[i] = (rates.gain[i] - rates.loss[i]) / widths[i];
            rates.loss[i] /= widths[i];
        }
        ledger
    }

    /// Convenience wrapper returning only the density rate.
    pub fn rhs(&self, f: &[f64]) -> (Vec<f64>, StepLedger) {
        let mut rates = Rates::new(self.grid.len());
        let ledger = self.evaluate(f, &mut rates);
        (rates.rhs, ledger)
    }

    fn mass_of(&self, gain: &[f64], loss: &[f64]) -> (f64, f64) {
        let mut g = Compensated::default();
        let mut l = Compensated::default();
        for ((&x, &gi), &li) in self.grid.centers().iter().zip(gain).zip(loss) {
            g.add(x * gi);
            l.add(x * li);
        }
        (g.value(), l.value())
    }

    /// Number rates of coagulation; returns the outflow mass rate.
    fn coagulate(&self, g: &[f64], gain: &mut [f64], loss: &mut [f64]) -> f64 {
        let n = self.n_act;
        let geo = &self.pairs;
        let c = &geo.c;
        let k0 = self.spec.k0();
        let last = n.saturating_sub(1);
        let mut flux = Compensated::default();
        // cells past the last occupied one contribute nothing
        let top = g[..n].iter().rposition(|&v| v != 0.0).map_or(0, |p| p + 1);
        for i in 0..top {
            let gi = g[i];
            if gi == 0.0 {
                continue;
            }
            let ci = c[i];
            let k_last = geo.k_last[i].min(top);
            let k_out = geo.k_out[i].min(top);
            let mut loss_i = 0.0;
            let mut lo = i;
            for k in i..k_last {
                let v = ci + c[k];
                while c[lo + 1] <= v {
                    lo += 1;
                }
                let gk = g[k];
                if gk == 0.0 {
                    continue;
                }
                let mut r = geo.kernel(k0, i, k) * gi * gk;
                if k == i {
                    r *= 0.5;
                    loss_i += r;
                }
                loss_i += r;
                if k != i {
                    loss[k] += r;
                }
                let (a, b) = geo.split(lo, v);
                gain[lo] += a * r;
                gain[lo + 1] += b * r;
            }
            for k in k_last.max(i)..k_out {
                let gk = g[k];
                if gk == 0.0 {
                    continue;
                }
                let mut r = geo.kernel(k0, i, k) * gi * gk;
                if k == i {
                    r *= 0.5;
                    loss_i += r;
                }
                loss_i += r;
                if k != i {
                    loss[k] += r;
                }
                gain[last] += (ci + c[k]) / c[last] * r;
            }
            for k in k_out.max(i)..top {
                let gk = g[k];
                if gk == 0.0 {
                    continue;
                }
                let mut r = geo.kernel(k0, i, k) * gi * gk;
                if k == i {
                    r *= 0.5;
                    loss_i += r;
                }
                loss_i += r;
                if k != i {
                    loss[k] += r;
                }
                flux.add((ci + c[k]) * r);
            }
            loss[i] += loss_i;
        }
        flux.value()
    }

    /// Number rates of fragmentation.
    fn fragment(&self, g: &[f64], gain: &mut [f64], loss: &mut [f64]) {
        let n = self.n_act;
        for i in 0..n {
            loss[i] += self.a[i] * g[i];
        }
        match &self.frag {
            Fragmentation::Separable { p, c, keep } => {
                // compensated suffix sum keeps the discrete mass balance at rounding level
                let mut suffix = Compensated::default();
                for i in (0..n).rev() {
                    gain[i] += p[i] * suffix.value() + keep[i] * g[i];
                    suffix.add(c[i] * g[i]);
                }
            }
            Fragmentation::Dense { w } => {
                for k in 0..n {
                    let gk = g[k];
                    if gk == 0.0 {
                        continue;
                    }
                    let off = k * (k + 1) / 2;
                    for (gi, wi) in gain[..=k].iter_mut().zip(&w[off..=off + k]) {
                        *gi += wi * gk;
                    }
                }
            }
        }
    }

    /// Particles created in cell `i` per unit time per particle in cell `k`
    /// (`i ≤ k`), including the rate factor `a(x̄_k)`.
    pub fn daughter_rate(&self, i: usize, k: usize) -> f64 {
        if !self.physics.fragmentation || k >= self.n_act || i > k {
            return 0.0;
        }
        match &self.frag {
            Fragmentation::Separable { p, c, keep } => {
                if i == k {
                    keep[k]
                } else {
                    p[i] * c[k]
                }
            }
            Fragmentation::Dense { w } => w[k * (k + 1) / 2 + i],
        }
    }

    /// The three terms of the truncated weak identity for test function `theta`.
    pub fn weak_terms<F: Fn(f64) -> f64>(&self, f: &[f64], theta: F, form: WeakForm) -> Result<WeakTerms> {
        self.check_len(f);
        let n = self.n_act;
        let centers = self.grid.centers();
        let g: Vec<f64> = f.iter().zip(self.grid.widths()).map(|(a, b)| a * b).collect();
        let th: Vec<f64> = centers[..n].iter().map(|&x| theta(x)).collect();
        let mut coag = Compensated::default();
        let mut boundary = Compensated::default();
        if self.physics.coagulation {
            let k0 = self.spec.k0();
            for i in 0..n {
                for k in i..n {
                    if g[i] == 0.0 || g[k] == 0.0 {
                        continue;
                    }
                    let mut r = self.pairs.kernel(k0, i, k) * g[i] * g[k];
                    if k == i {
                        r *= 0.5;
                    }
                    let v = centers[i] + centers[k];
                    let created = match (self.pairs.target(i, k), form) {
                        (Target::Out(_), _) => {
                            let tv = theta(v);
                            boundary.add(-r * tv);
                            tv
                        }
                        (_, WeakForm::Continuous) => theta(v),
                        (Target::Split(lo, a, b), WeakForm::Scheme) => a * th[lo] + b * th[lo + 1],
                        (Target::Last(l, w), WeakForm::Scheme) => w * th[l],
                    };
                    coag.add(r * (created - th[i] - th[k]));
                }
            }
        }
        let mut frag = Compensated::default();
        if self.physics.fragmentation {
            for k in 0..n {
                if g[k] == 0.0 {
                    continue;
                }
                let n_theta = match form {
                    WeakForm::Continuous => {
                        let y = centers[k];
                        th[k] - daughter_average(self.spec.daughter(), |z| theta(y * z))?
                    }
                    WeakForm::Scheme => {
                        let mut created = 0.0;
                        for i in 0..=k {
                            created += self.daughter_rate(i, k) * th[i];
                        }
                        th[k] - created / self.a[k]
                    }
                };
                frag.add(-self.a[k] * g[k] * n_theta);
            }
        }
        Ok(WeakTerms { coag: coag.value(), frag: frag.value(), boundary: boundary.value() })
    }
}

/// `∫_0^1 φ(z) B(z) dz`.
fn daughter_average<F: Fn(f64) -> f64>(daughter: &DaughterSpec, phi: F) -> Result<f64> {
    match daughter {
        DaughterSpec::PowerLaw { .. } => {
            let g = |z: f64| phi(z) * daughter.eval(z);
            // test functions with kinks defeat tanh-sinh; fall back to bisection
            quad::tanh_sinh(g, 0.0, 1.0, 1e-12).or_else(|_| quad::adaptive_gk(g, 0.0, 1.0, 1e-12, 1e-300))
        }
        DaughterSpec::Tabulated(t) => {
            let mut total = 0.0;
            for (lo, hi, _) in t.pieces() {
                total += quad::adaptive_gk(|z| phi(z) * t.eval(z), lo, hi, 1e-12, 1e-300)?;
            }
            Ok(total)
        }
    }
}

fn fragmentation_tables(spec: &ValidatedSpec, grid: &SizeGrid, n_act: usize, a: &[f64]) -> Fragmentation {
    let edges = grid.edges();
    let centers = grid.centers();
    match spec.daughter() {
        DaughterSpec::PowerLaw { nu } => {
            let s = nu + 1.0;
            let scale = nu + 2.0;
            // full-cell and own-half-cell integrals of (ν+2) x^ν
            let p: Vec<f64> = (0..n_act).map(|i| scale * power_integral(edges[i], edges[i + 1], s)).collect();
            let half: Vec<f64> = (0..n_act).map(|i| scale * power_integral(edges[i], centers[i], s)).collect();
            let mut c = vec![0.0; n_act];
            let mut keep = vec![0.0; n_act];
            let mut below = Compensated::default();
            for k in 0..n_act {
                let q = math::powf(centers[k], -s);
                let mass = q * (below.value() + centers[k] * half[k]);
                let renorm = if mass > 0.0 { centers[k] / mass } else { 0.0 };
                if renorm > 0.0 {
                    c[k] = a[k] * renorm * q;
                    keep[k] = c[k] * half[k];
                } else {
                    keep[k] = a[k];
                }
                below.add(centers[k] * p[k]);
            }
            Fragmentation::Separable { p, c, keep }
        }
        DaughterSpec::Tabulated(t) => {
            let mut w = vec![0.0; n_act * (n_act + 1) / 2];
            for k in 0..n_act {
                let y = centers[k];
                let off = k * (k + 1) / 2;
                let mut mass = Compensated::default();
                for i in 0..=k {
                    let hi = if i == k { y } else { edges[i + 1] };
                    let count = t.integral(edges[i] / y, hi / y);
                    w[off + i] = count;
                    mass.add(centers[i] * count);
                }
                let mass = mass.value();
                if mass > 0.0 {
                    let factor = a[k] * y / mass;
                    for v in &mut w[off..=off + k] {
                        *v *= factor;
                    }
                } else {
                    for v in &mut w[off..=off + k] {
                        *v = 0.0;
                    }
                    w[off + k] = a[k];
                }
            }
            Fragmentation::Dense { w }
        }
    }
}

/// Coagulation part of the right-hand side (density rates).
pub fn coagulation_rhs(state: &State, spec: &ValidatedSpec, trunc: TruncationSpec) -> Result<(Vec<f64>, StepLedger)> {
    let physics = Physics { coagulation: true, fragmentation: false };
    let d = Discretization::new(spec, state.grid().clone(), trunc, physics)?;
    Ok(d.rhs(state.values()))
}

/// Fragmentation part of the right-hand side (density rates).
pub fn fragmentation_rhs(state: &State, spec: &ValidatedSpec, trunc: TruncationSpec) -> Result<(Vec<f64>, StepLedger)> {
    let physics = Physics { coagulation: false, fragmentation: true };
    let d = Discretization::new(spec, state.grid().clone(), trunc, physics)?;
    Ok(d.rhs(state.values()))
}

/// Weak-form terms with pivot quadrature of the continuous integrands.
pub fn weak_form_terms<F: Fn(f64) -> f64>(
    state: &State,
    spec: &ValidatedSpec,
    trunc: TruncationSpec,
    theta: F,
) -> Result<WeakTerms> {
    let d = Discretization::new(spec, state.grid().clone(), trunc, Physics::default())?;
    d.weak_terms(state.values(), theta, WeakForm::Continuous)
}

pub(crate) fn combine(a: StepLedger, b: StepLedger) -> StepLedger {
    a.merge(b)
}
