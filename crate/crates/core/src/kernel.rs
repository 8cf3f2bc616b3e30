//! Balanced-growth coefficient family and the scalar constants derived from it.
//!
//! ```text
//! K(x, y) = K0 (x^α y^(λ-α) + x^(λ-α) y^α)
//! a(x)    = a0 x^(λ-1)
//! b(x, y) = B(x/y) / y,          ∫_0^1 z B(z) dz = 1
//! ```
//!
//! with `λ ∈ (1, 2]`, `α ∈ [max{1/2, λ-1}, λ/2]` and `-ν-1 < α`, where `ν`
//! measures the singularity of `B` at `z = 0`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{domain, Assumption, Error};
use crate::exact::{self, Ratio};
use crate::math;
use crate::quad;
use crate::Result;

/// Tolerance used when checking the unit first moment of a tabulated daughter.
pub const DAUGHTER_MASS_TOL: f64 = 1e-10;

/// Piecewise-polynomial daughter distribution on a breakpoint mesh of `(0, 1)`.
///
/// Piece `k` covers `[z_k, z_{k+1}]` and stores coefficients in the monomial
/// basis of `z` (not shifted), so moments `∫ z^m B(z)^p dz` with integer `p`
/// are evaluated in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedDaughter {
    breakpoints: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

impl TabulatedDaughter {
    pub fn new(breakpoints: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(domain("tabulated daughter needs at least two breakpoints"));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(domain("tabulated daughter breakpoints must start at 0 and end at 1"));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("tabulated daughter breakpoints must be strictly increasing"));
        }
        if coeffs.len() != breakpoints.len() - 1 {
            return Err(domain(format!(
                "tabulated daughter has {} pieces but {} breakpoints",
                coeffs.len(),
                breakpoints.len()
            )));
        }
        if coeffs.iter().any(|c| c.is_empty() || c.iter().any(|v| !v.is_finite())) {
            return Err(domain("tabulated daughter coefficients must be finite and non-empty"));
        }
        Ok(TabulatedDaughter { breakpoints, coeffs })
    }

    /// Continuous piecewise-linear interpolant through `(z, B)` samples that
    /// start at `z = 0` and end at `z = 1`.
    pub fn piecewise_linear(points: &[(f64, f64)]) -> Result<Self> {
        let breakpoints: Vec<f64> = points.iter().map(|p| p.0).collect();
        let coeffs = points
            .windows(2)
            .map(|w| {
                let (z0, b0) = w[0];
                let (z1, b1) = w[1];
                let slope = (b1 - b0) / (z1 - z0);
                alloc::vec![b0 - slope * z0, slope]
            })
            .collect();
        TabulatedDaughter::new(breakpoints, coeffs)
    }

    /// Rescales `B` so that `∫ z B(z) dz = 1`.
    pub fn normalized(mut self) -> Result<Self> {
        let mass = self.moment_int(1.0, 1);
        if !(mass > 0.0) {
            return Err(Error::AssumptionViolation {
                assumption: Assumption::DaughterMass,
                detail: format!("first moment {mass} cannot be normalized"),
            });
        }
        for piece in &mut self.coeffs {
            for c in piece.iter_mut() {
                *c /= mass;
            }
        }
        Ok(self)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    fn piece_index(&self, z: f64) -> usize {
        let n = self.coeffs.len();
        match self.breakpoints[1..n].iter().position(|&b| z < b) {
            Some(k) => k,
            None => n - 1,
        }
    }

    /// `B(z)` for `z ∈ (0, 1)`.
    pub fn eval(&self, z: f64) -> f64 {
        let c = &self.coeffs[self.piece_index(z)];
        c.iter().rev().fold(0.0, |acc, &ci| acc * z + ci)
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, &[f64])> + '_ {
        self.breakpoints
            .windows(2)
            .zip(self.coeffs.iter())
            .map(|(w, c)| (w[0], w[1], c.as_slice()))
    }

    /// `∫_{z0}^{z1} B(z) dz` for `0 ≤ z0 ≤ z1 ≤ 1`.
    pub fn integral(&self, z0: f64, z1: f64) -> f64 {
        let mut total = 0.0;
        for (lo, hi, c) in self.pieces() {
            let a = lo.max(z0);
            let b = hi.min(z1);
            if b <= a {
                continue;
            }
            let mut pa = a;
            let mut pb = b;
            for (i, &ci) in c.iter().enumerate() {
                total += ci * (pb - pa) / (i + 1) as f64;
                pa *= a;
                pb *= b;
            }
        }
        total
    }

    /// Coefficients of `P(z)^p` for a polynomial `P` in monomial form.
    fn poly_pow(c: &[f64], p: u32) -> Vec<f64> {
        let mut acc = alloc::vec![1.0];
        for _ in 0..p {
            let mut next = alloc::vec![0.0; acc.len() + c.len() - 1];
            for (i, &a) in acc.iter().enumerate() {
                for (k, &b) in c.iter().enumerate() {
                    next[i + k] += a * b;
                }
            }
            acc = next;
        }
        acc
    }

    /// `∫_0^1 z^m B(z)^p dz` for integer `p`, piece by piece in closed form.
    fn moment_int(&self, m: f64, p: u32) -> f64 {
        let mut total = 0.0;
        for (lo, hi, c) in self.pieces() {
            let q = Self::poly_pow(c, p);
            for (i, &qi) in q.iter().enumerate() {
                let e = m + i as f64 + 1.0;
                let upper = math::powf(hi, e);
                let lower = if lo == 0.0 { 0.0 } else { math::powf(lo, e) };
                total += qi * (upper - lower) / e;
            }
        }
        total
    }

    /// `∫_0^1 z |ln z| B(z) dz` in closed form.
    fn log_moment(&self) -> f64 {
        // antiderivative of z^k ln z is z^{k+1} (ln z/(k+1) - 1/(k+1)^2)
        let anti = |z: f64, k: f64| -> f64 {
            if z == 0.0 {
                0.0
            } else {
                let e = k + 1.0;
                math::powf(z, e) * (math::ln(z) / e - 1.0 / (e * e))
            }
        };
        let mut total = 0.0;
        for (lo, hi, c) in self.pieces() {
            for (i, &ci) in c.iter().enumerate() {
                let k = i as f64 + 1.0;
                // on (0, 1), |ln z| = -ln z
                total -= ci * (anti(hi, k) - anti(lo, k));
            }
        }
        total
    }

    /// Smallest value of `B` sampled on each piece (endpoints plus interior).
    fn sampled_min(&self) -> f64 {
        let mut min = f64::INFINITY;
        for (lo, hi, c) in self.pieces() {
            for s in 0..=64 {
                let z = lo + (hi - lo) * s as f64 / 64.0;
                let v = c.iter().rev().fold(0.0, |acc, &ci| acc * z + ci);
                min = min.min(v);
            }
        }
        min
    }
}

/// Daughter distribution `B` of the scaling form `b(x, y) = B(x/y)/y`.
#[derive(Clone, Debug, PartialEq)]
pub enum DaughterSpec {
    /// `B_ν(z) = (ν+2) z^ν` with `ν ∈ (-2, 0]`.
    PowerLaw { nu: f64 },
    /// Bounded piecewise-polynomial `B`; behaves like `ν = 0`.
    Tabulated(TabulatedDaughter),
}

impl DaughterSpec {
    /// Singularity exponent `ν` governing the admissible set.
    pub fn nu(&self) -> f64 {
        match self {
            DaughterSpec::PowerLaw { nu } => *nu,
            DaughterSpec::Tabulated(_) => 0.0,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            DaughterSpec::PowerLaw { nu } => (nu + 2.0) * math::powf(z, *nu),
            DaughterSpec::Tabulated(t) => t.eval(z),
        }
    }
}

/// Raw coefficient parameters, not yet checked against the standing assumptions.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSpec {
    pub lambda: f64,
    pub alpha: f64,
    pub k0: f64,
    pub a0: f64,
    pub daughter: DaughterSpec,
}

impl CoefficientSpec {
    pub fn power_law(lambda: f64, alpha: f64, k0: f64, a0: f64, nu: f64) -> Self {
        CoefficientSpec {
            lambda,
            alpha,
            k0,
            a0,
            daughter: DaughterSpec::PowerLaw { nu },
        }
    }
}

/// A coefficient specification that satisfies every standing assumption.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedSpec {
    spec: CoefficientSpec,
    b_ln: f64,
}

/// Checks the standing assumptions and returns a [`ValidatedSpec`].
pub fn validate(spec: CoefficientSpec) -> Result<ValidatedSpec> {
    let CoefficientSpec { lambda, alpha, k0, a0, .. } = spec;
    for (name, v) in [("lambda", lambda), ("alpha", alpha), ("K0", k0), ("a0", a0)] {
        if !v.is_finite() {
            return Err(domain(format!("{name} must be finite, got {v}")));
        }
    }
    if !(k0 > 0.0) {
        return Err(domain(format!("K0 must be positive, got {k0}")));
    }
    if !(a0 > 0.0) {
        return Err(domain(format!("a0 must be positive, got {a0}")));
    }
    if !(lambda > 1.0 && lambda <= 2.0) {
        return Err(Error::AssumptionViolation {
            assumption: Assumption::ExponentRange,
            detail: format!("lambda must lie in (1, 2], got {lambda}"),
        });
    }
    let alpha_lo = 0.5f64.max(lambda - 1.0);
    let alpha_hi = 0.5 * lambda;
    if !(alpha >= alpha_lo && alpha <= alpha_hi) {
        return Err(Error::AssumptionViolation {
            assumption: Assumption::ExponentRange,
            detail: format!("alpha must lie in [{alpha_lo}, {alpha_hi}], got {alpha}"),
        });
    }
    match &spec.daughter {
        DaughterSpec::PowerLaw { nu } => {
            let nu = *nu;
            if !(nu > -2.0 && nu <= 0.0) {
                return Err(domain(format!("nu must lie in (-2, 0], got {nu}")));
            }
            if !(-nu - 1.0 < alpha) {
                return Err(Error::AssumptionViolation {
                    assumption: Assumption::SmallSizeCompatibility,
                    detail: format!("-nu-1 = {} must be below alpha = {alpha}", -nu - 1.0),
                });
            }
        }
        DaughterSpec::Tabulated(t) => {
            let min = t.sampled_min();
            if min < 0.0 {
                return Err(Error::AssumptionViolation {
                    assumption: Assumption::DaughterMass,
                    detail: format!("daughter distribution takes negative value {min}"),
                });
            }
            let mass = t.moment_int(1.0, 1);
            if (mass - 1.0).abs() > DAUGHTER_MASS_TOL {
                return Err(Error::AssumptionViolation {
                    assumption: Assumption::DaughterMass,
                    detail: format!("first moment of B is {mass}, expected 1"),
                });
            }
        }
    }
    let b_ln = match &spec.daughter {
        DaughterSpec::PowerLaw { nu } => 1.0 / (nu + 2.0),
        DaughterSpec::Tabulated(t) => t.log_moment(),
    };
    Ok(ValidatedSpec { spec, b_ln })
}

/// Half-open or closed interval of admissible moment exponents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentWindow {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl ExponentWindow {
    pub fn contains(&self, m: f64) -> bool {
        let above = if self.lo_closed { m >= self.lo } else { m > self.lo };
        let below = if self.hi_closed { m <= self.hi } else { m < self.hi };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl ValidatedSpec {
    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn k0(&self) -> f64 {
        self.spec.k0
    }

    pub fn a0(&self) -> f64 {
        self.spec.a0
    }

    pub fn nu(&self) -> f64 {
        self.spec.daughter.nu()
    }

    pub fn daughter(&self) -> &DaughterSpec {
        &self.spec.daughter
    }

    /// Coagulation kernel without argument checks.
    #[inline]
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        let CoefficientSpec { lambda, alpha, k0, .. } = self.spec;
        let beta = lambda - alpha;
        // summed in a fixed order so that K(x, y) and K(y, x) agree bitwise
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        k0 * (math::powf(lo, alpha) * math::powf(hi, beta) + math::powf(lo, beta) * math::powf(hi, alpha))
    }

    /// Overall fragmentation rate without argument checks.
    #[inline]
    pub fn frag_rate(&self, x: f64) -> f64 {
        self.spec.a0 * math::powf(x, self.spec.lambda - 1.0)
    }

    /// `𝒜_ν` membership: `m > -1`, `p ≥ 1`, `m + pν > -1`.
    pub fn admissible(&self, m: f64, p: f64) -> bool {
        m > -1.0 && p >= 1.0 && m + p * self.nu() > -1.0
    }

    /// Closed-form `𝔟_{m,p}`; quadrature is used only for tabulated daughters
    /// with a non-integer power.
    pub fn frag_moment(&self, m: f64, p: f64) -> Result<f64> {
        if !m.is_finite() || !p.is_finite() || !self.admissible(m, p) {
            return Err(Error::NotInAdmissibleSet { m, p });
        }
        match &self.spec.daughter {
            DaughterSpec::PowerLaw { nu } => {
                Ok(math::powf(nu + 2.0, p) / (m + p * nu + 1.0))
            }
            DaughterSpec::Tabulated(t) => {
                if p == math::floor(p) && p <= 64.0 {
                    Ok(t.moment_int(m, p as u32))
                } else {
                    let mut total = 0.0;
                    for (lo, hi, _) in t.pieces() {
                        total += quad::tanh_sinh(
                            |z| math::powf(z, m) * math::powf(t.eval(z).max(0.0), p),
                            lo,
                            hi,
                            1e-13,
                        )?;
                    }
                    Ok(total)
                }
            }
        }
    }

    /// `𝔟_{m,p}` by tanh-sinh quadrature of `z^m B(z)^p` on `(0, 1)`; an
    /// independent route to [`frag_moment`](Self::frag_moment).
    pub fn frag_moment_quadrature(&self, m: f64, p: f64) -> Result<f64> {
        if !self.admissible(m, p) {
            return Err(Error::NotInAdmissibleSet { m, p });
        }
        match &self.spec.daughter {
            DaughterSpec::PowerLaw { nu } => {
                let scale = math::powf(nu + 2.0, p);
                let e = m + p * nu;
                // z = e^{-s} turns the endpoint singularity into slow exponential decay
                Ok(scale * quad::exp_sinh(|s| math::exp(-(e + 1.0) * s), 0.0, 1e-13)?)
            }
            DaughterSpec::Tabulated(t) => {
                let mut total = 0.0;
                for (lo, hi, _) in t.pieces() {
                    total += quad::tanh_sinh(
                        |z| math::powf(z, m) * math::powf(t.eval(z).max(0.0), p),
                        lo,
                        hi,
                        1e-14,
                    )?;
                }
                Ok(total)
            }
        }
    }

    /// `𝔟_ln = ∫_0^1 z |ln z| B(z) dz`.
    pub fn b_ln(&self) -> f64 {
        self.b_ln
    }

    /// `𝔟_ln` by tanh-sinh quadrature.
    pub fn b_ln_quadrature(&self) -> Result<f64> {
        let d = &self.spec.daughter;
        let integrand = |z: f64| -z * math::ln(z) * d.eval(z);
        match d {
            DaughterSpec::PowerLaw { .. } => quad::tanh_sinh(integrand, 0.0, 1.0, 1e-13),
            DaughterSpec::Tabulated(t) => {
                let mut total = 0.0;
                for (lo, hi, _) in t.pieces() {
                    total += quad::tanh_sinh(integrand, lo, hi, 1e-13)?;
                }
                Ok(total)
            }
        }
    }

    /// Critical mass `ρ★ = a0 𝔟_ln / (2 K0 ln 2)`.
    pub fn rho_star(&self) -> f64 {
        self.spec.a0 * self.b_ln / (2.0 * self.spec.k0 * math::LN_2)
    }

    /// `δ_ρ = K0 ln 2 (ρ★ - ρ)`, positive below the critical mass.
    pub fn delta_rho(&self, rho: f64) -> f64 {
        self.spec.k0 * math::LN_2 * (self.rho_star() - rho)
    }

    /// Window `(-ν-1, α) ∩ [0, 1)` for the small-size exponent `m0`.
    pub fn m0_window(&self) -> ExponentWindow {
        let singular = -self.nu() - 1.0;
        let (lo, lo_closed) = if singular >= 0.0 { (singular, false) } else { (0.0, true) };
        let (hi, hi_closed) = (self.spec.alpha.min(1.0), false);
        ExponentWindow { lo, lo_closed, hi, hi_closed }
    }

    /// Window `[m0, 1) ∩ [2-λ, 1)` for `m1`.
    pub fn m1_window(&self, m0: f64) -> ExponentWindow {
        ExponentWindow {
            lo: m0.max(2.0 - self.spec.lambda),
            lo_closed: true,
            hi: 1.0,
            hi_closed: false,
        }
    }

    /// Smallest constant `C1(m)` such that
    /// `a0 𝔟_{m,1} ρ^{(1-m)/(λ-1)} X^θ ≤ (e(1-m)δ_ρ/3) X + (e(1-m)/3) C1(m)`
    /// for all `X ≥ 0`, with `θ = (m+λ-2)/(λ-1)`.
    pub fn lemma_c1(&self, m: f64, rho: f64) -> Result<f64> {
        let lambda = self.spec.lambda;
        if !(m < 1.0 && m >= 2.0 - lambda) {
            return Err(domain(format!("m must lie in [2 - lambda, 1) = [{}, 1), got {m}", 2.0 - lambda)));
        }
        if !(rho > 0.0 && rho < self.rho_star()) {
            return Err(domain(format!(
                "rho must lie in (0, rho_star) = (0, {}), got {rho}",
                self.rho_star()
            )));
        }
        let b_m = self.frag_moment(m, 1.0)?;
        let theta = (m + lambda - 2.0) / (lambda - 1.0);
        let amplitude = self.spec.a0 * b_m * math::powf(rho, (1.0 - m) / (lambda - 1.0));
        let scale = math::E * (1.0 - m) / 3.0;
        let eps = scale * self.delta_rho(rho);
        let c = young_constant(amplitude, theta, eps)?;
        Ok(c / scale)
    }

    /// Exact rational forms of the derived constants, when every input is an
    /// exactly representable rational and the daughter is a power law.
    pub fn exact_constants(&self) -> Option<ExactConstants> {
        let DaughterSpec::PowerLaw { nu } = self.spec.daughter else {
            return None;
        };
        let nu = Ratio::from_f64(nu)?;
        let b_ln = exact::power_law_b_ln(nu)?;
        let rho_star_ln2 =
            exact::rho_star_times_ln2(Ratio::from_f64(self.spec.a0)?, Ratio::from_f64(self.spec.k0)?, b_ln)?;
        Some(ExactConstants { b_ln, rho_star_times_ln2: rho_star_ln2 })
    }
}

/// Rational forms of `𝔟_ln` and `ρ★ ln 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactConstants {
    pub b_ln: Ratio,
    pub rho_star_times_ln2: Ratio,
}

/// Sharp constant of Young's inequality `A X^θ ≤ ε X + C` on `X ≥ 0`:
/// `C = (1-θ) θ^{θ/(1-θ)} A^{1/(1-θ)} ε^{-θ/(1-θ)}`.
pub fn young_constant(amplitude: f64, theta: f64, eps: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(domain(format!("Young exponent must lie in [0, 1), got {theta}")));
    }
    if !(eps > 0.0) || !(amplitude >= 0.0) {
        return Err(domain("Young inequality needs eps > 0 and a non-negative amplitude"));
    }
    if theta == 0.0 {
        return Ok(amplitude);
    }
    let q = 1.0 / (1.0 - theta);
    Ok((1.0 - theta)
        * math::powf(theta, theta * q)
        * math::powf(amplitude, q)
        * math::powf(eps, -theta * q))
}

/// Checked `K(x, y)`.
pub fn eval_k(spec: &ValidatedSpec, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0) {
        return Err(domain(format!("kernel arguments must be positive, got ({x}, {y})")));
    }
    Ok(spec.kernel(x, y))
}

/// Checked `a(x)`.
pub fn eval_a(spec: &ValidatedSpec, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(domain(format!("fragmentation rate argument must be positive, got {x}")));
    }
    Ok(spec.frag_rate(x))
}

/// Checked `b(x, y) = B(x/y)/y` for `0 < x < y`.
pub fn eval_b(spec: &ValidatedSpec, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && x < y) {
        return Err(domain(format!("daughter density needs 0 < x < y, got ({x}, {y})")));
    }
    Ok(spec.daughter().eval(x / y) / y)
}

/// `x ln x + y ln y + 2 ln 2 √(xy) - (x+y) ln(x+y)`, which is non-negative and
/// vanishes on the diagonal.
pub fn log_merge_gap(x: f64, y: f64) -> f64 {
    math::xlnx(x) + math::xlnx(y) + 2.0 * math::LN_2 * math::sqrt(x * y) - math::xlnx(x + y)
}

/// Returns `(x|ln x| - 2x^m/(e(1-m)), x ln x, x|ln x|)`, which are ordered
/// non-decreasingly for `x > 0` and `m ∈ [0, 1)`.
pub fn xlogx_sandwich(x: f64, m: f64) -> (f64, f64, f64) {
    let xl = math::xlnx(x);
    let abs = xl.abs();
    (abs - 2.0 * math::powf(x, m) / (math::E * (1.0 - m)), xl, abs)
}

/// Constants that depend on the coefficients, the chosen exponents and the
/// initial datum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedConstants {
    pub b_ln: f64,
    pub rho_star: f64,
    pub m0: f64,
    pub m1: f64,
    pub sigma: f64,
}

/// Initial-datum moments that enter the lower bound for `σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialMoments {
    pub m_m0: f64,
    pub mass: f64,
    pub m_m1: f64,
    pub log_mass: f64,
}

impl DerivedConstants {
    /// Checks the exponent windows and sets `σ` to its lower bound
    /// `M_{m0} + M_1 + 3 M_{m1}/(e(1-m1)) + ∫ x|ln x| f dx`.
    pub fn compute(spec: &ValidatedSpec, m0: f64, m1: f64, init: InitialMoments) -> Result<Self> {
        let w0 = spec.m0_window();
        if !w0.contains(m0) {
            return Err(domain(format!("m0 = {m0} is outside its window {w0:?}")));
        }
        let w1 = spec.m1_window(m0);
        if !w1.contains(m1) {
            return Err(domain(format!("m1 = {m1} is outside its window {w1:?}")));
        }
        let sigma = sigma_lower_bound(m1, init);
        Ok(DerivedConstants {
            b_ln: spec.b_ln(),
            rho_star: spec.rho_star(),
            m0,
            m1,
            sigma,
        })
    }
}

pub fn sigma_lower_bound(m1: f64, init: InitialMoments) -> f64 {
    init.m_m0 + init.mass + 3.0 / (math::E * (1.0 - m1)) * init.m_m1 + init.log_mass
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> ValidatedSpec {
        validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, 0.0)).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, 0.0)).is_ok());
        match validate(CoefficientSpec::power_law(1.5, 0.9, 1.0, 1.0, 0.0)) {
            Err(Error::AssumptionViolation { assumption, .. }) => {
                assert_eq!(assumption, Assumption::ExponentRange)
            }
            other => panic!("unexpected {other:?}"),
        }
        match validate(CoefficientSpec::power_law(1.5, 0.75, 1.0, 1.0, -1.8)) {
            Err(Error::AssumptionViolation { assumption, .. }) => {
                assert_eq!(assumption, Assumption::SmallSizeCompatibility)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            validate(CoefficientSpec::power_law(2.0, 1.0, 0.0, 1.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, -1.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn kernel_values() {
        let s = canonical();
        assert_eq!(eval_k(&s, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(eval_k(&s, 2.0, 8.0).unwrap(), 32.0);
        assert!(eval_k(&s, 0.0, 1.0).is_err());
        assert!(eval_k(&s, 1.0, -2.0).is_err());
    }

    #[test]
    fn fragmentation_rate_values() {
        let s = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 2.0, 0.0)).unwrap();
        assert_eq!(eval_a(&s, 1.0).unwrap(), 2.0);
        assert_eq!(eval_a(&s, 3.0).unwrap(), 6.0);
        let s = validate(CoefficientSpec::power_law(1.5, 0.6, 1.0, 1.0, 0.0)).unwrap();
        assert_eq!(eval_a(&s, 4.0).unwrap(), 2.0);
        assert!(eval_a(&s, 0.0).is_err());
    }

    #[test]
    fn daughter_density() {
        let s = canonical();
        for &(x, y) in &[(0.1, 1.0), (2.0, 7.5), (1e-3, 1e3)] {
            assert_eq!(eval_b(&s, x, y).unwrap(), 2.0 / y);
        }
        let s = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, -1.0)).unwrap();
        for &(x, y) in &[(0.1, 1.0), (2.0, 7.5)] {
            let v = eval_b(&s, x, y).unwrap();
            assert!((v - 1.0 / x).abs() <= 1e-15 / x);
        }
        assert!(eval_b(&s, 2.0, 1.0).is_err());
        // ∫_0^y x b(x, y) dx = y
        for nu in [0.0, -0.5, -1.0, -1.5] {
            let s = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, nu)).unwrap();
            for y in [0.3, 1.0, 40.0] {
                let v = quad::tanh_sinh(|x| x * s.daughter().eval(x / y) / y, 0.0, y, 1e-14).unwrap();
                assert!(((v - y) / y).abs() < 1e-10, "nu={nu} y={y}: {v}");
            }
        }
    }

    #[test]
    fn frag_moment_examples() {
        for nu in [0.0, -0.3, -1.0, -1.7] {
            let s = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, nu)).unwrap();
            assert!((s.frag_moment(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        }
        let s = canonical();
        assert!((s.frag_moment(0.5, 2.0).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        let s = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, -1.0)).unwrap();
        assert!(matches!(s.frag_moment(0.0, 1.0), Err(Error::NotInAdmissibleSet { .. })));
        assert!(matches!(s.frag_moment(0.5, 0.5), Err(Error::NotInAdmissibleSet { .. })));
    }

    #[test]
    fn b_ln_and_rho_star() {
        let s = canonical();
        assert_eq!(s.b_ln(), 0.5);
        assert!((s.rho_star() - 1.0 / (4.0 * core::f64::consts::LN_2)).abs() < 1e-15);
        assert!((s.rho_star() - 0.360_674).abs() < 1e-6);
        let s1 = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, -1.0)).unwrap();
        assert_eq!(s1.b_ln(), 1.0);
        assert!((s1.rho_star() - 0.721_348).abs() < 1e-6);
        let doubled = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 2.0, 0.0)).unwrap();
        assert!((doubled.rho_star() - 2.0 * s.rho_star()).abs() < 1e-15);
        for nu in [0.0, -0.4, -1.0, -1.6] {
            let s = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, nu)).unwrap();
            let q = s.b_ln_quadrature().unwrap();
            assert!((q - s.b_ln()).abs() < 1e-9 * s.b_ln(), "nu={nu}: {q}");
        }
    }

    #[test]
    fn exact_forms() {
        let e = canonical().exact_constants().unwrap();
        assert_eq!(e.b_ln, Ratio::new(1, 2).unwrap());
        assert_eq!(e.rho_star_times_ln2, Ratio::new(1, 4).unwrap());
    }

    #[test]
    fn lemma_c1_domain_and_monotonicity() {
        let s = canonical();
        assert!(s.lemma_c1(1.0, 0.2).is_err());
        assert!(s.lemma_c1(0.5, 0.5).is_err());
        assert!(s.lemma_c1(0.5, 0.0).is_err());
        let c = s.lemma_c1(0.5, 0.2).unwrap();
        assert!(c > 0.0 && c.is_finite());
        // halving ε at least doubles the constant when θ ≥ 1/2
        let a = 1.3;
        let c1 = young_constant(a, 0.5, 0.2).unwrap();
        let c2 = young_constant(a, 0.5, 0.1).unwrap();
        assert!(c2 >= 2.0 * c1 * (1.0 - 1e-15));
        let c3 = young_constant(a, 0.2, 0.1).unwrap();
        assert!(c3 > young_constant(a, 0.2, 0.2).unwrap());
        assert_eq!(young_constant(a, 0.0, 0.3).unwrap(), a);
    }

    #[test]
    fn lemma_c1_is_tight_young_constant() {
        // brute-force scan: the inequality holds everywhere and is nearly
        // attained at the maximizer
        let s = validate(CoefficientSpec::power_law(1.6, 0.7, 1.3, 0.8, -0.4)).unwrap();
        let rho = 0.5 * s.rho_star();
        for m in [0.4, 0.55, 0.8, 0.95] {
            let c1 = s.lemma_c1(m, rho).unwrap();
            let lambda = s.lambda();
            let theta = (m + lambda - 2.0) / (lambda - 1.0);
            let amp = s.a0() * s.frag_moment(m, 1.0).unwrap() * rho.powf((1.0 - m) / (lambda - 1.0));
            let scale = core::f64::consts::E * (1.0 - m) / 3.0;
            let eps = scale * s.delta_rho(rho);
            let mut worst: f64 = f64::NEG_INFINITY;
            let xstar = if theta > 0.0 { (theta * amp / eps).powf(1.0 / (1.0 - theta)) } else { 1e-8 };
            for k in 0..=4000 {
                let x = xstar * 10f64.powf(-4.0 + 8.0 * k as f64 / 4000.0);
                let gap = amp * x.powf(theta) - eps * x - scale * c1;
                assert!(gap <= 1e-12 * (scale * c1).max(1.0), "m={m} x={x} gap={gap}");
                worst = worst.max(gap);
            }
            assert!(worst > -1e-3 * scale * c1, "constant not sharp: {worst}");
        }
    }

    #[test]
    fn windows() {
        let s = canonical();
        let w0 = s.m0_window();
        assert!(w0.contains(0.0) && w0.contains(0.99) && !w0.contains(1.0));
        let s = validate(CoefficientSpec::power_law(2.0, 1.0, 1.0, 1.0, -1.5)).unwrap();
        let w0 = s.m0_window();
        assert!(!w0.contains(0.5) && w0.contains(0.51));
        let w1 = s.m1_window(0.6);
        assert!(w1.contains(0.6) && !w1.contains(0.59) && !w1.contains(1.0));
    }

    #[test]
    fn tabulated_daughter_matches_uniform_power_law() {
        // B ≡ 2 as a two-piece linear table
        let t = TabulatedDaughter::piecewise_linear(&[(0.0, 2.0), (0.4, 2.0), (1.0, 2.0)]).unwrap();
        let tab = validate(CoefficientSpec {
            lambda: 2.0,
            alpha: 1.0,
            k0: 1.0,
            a0: 1.0,
            daughter: DaughterSpec::Tabulated(t),
        })
        .unwrap();
        let pl = canonical();
        assert!((tab.b_ln() - 0.5).abs() < 1e-15);
        for &(m, p) in &[(0.5, 2.0), (1.0, 1.0), (-0.5, 1.0), (2.0, 3.0), (0.3, 1.5)] {
            let a = tab.frag_moment(m, p).unwrap();
            let b = pl.frag_moment(m, p).unwrap();
            assert!((a - b).abs() < 1e-12 * b, "({m},{p}): {a} vs {b}");
        }
        assert!((tab.b_ln_quadrature().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tabulated_daughter_rejections() {
        let bad = TabulatedDaughter::piecewise_linear(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        let r = validate(CoefficientSpec {
            lambda: 2.0,
            alpha: 1.0,
            k0: 1.0,
            a0: 1.0,
            daughter: DaughterSpec::Tabulated(bad.clone()),
        });
        assert!(matches!(r, Err(Error::AssumptionViolation { assumption: Assumption::DaughterMass, .. })));
        let fixed = bad.normalized().unwrap();
        assert!((fixed.eval(0.5) - 2.0).abs() < 1e-15);
        let neg = TabulatedDaughter::piecewise_linear(&[(0.0, -1.0), (1.0, 5.0)]).unwrap();
        let r = validate(CoefficientSpec {
            lambda: 2.0,
            alpha: 1.0,
            k0: 1.0,
            a0: 1.0,
            daughter: DaughterSpec::Tabulated(neg),
        });
        assert!(matches!(r, Err(Error::AssumptionViolation { .. })));
        assert!(TabulatedDaughter::new(alloc::vec![0.0, 0.5], alloc::vec![alloc::vec![1.0]]).is_err());
    }
}
