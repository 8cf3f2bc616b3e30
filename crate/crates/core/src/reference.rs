//! Independent oracles: closed-form solutions and a fixed-step fine-grid solver.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;

use crate::error::{domain, Error};
use crate::grid::{make_grid, project_state, GridKind, State};
use crate::integrator::{run_fixed, RunConfig, TimeSeries};
use crate::kernel::validate;
use crate::math;
use crate::operators::Discretization;
use crate::Result;

/// A closed-form density with the range of times where it is valid.
pub struct OracleSolution {
    pub density: fn(f64, f64) -> f64,
    pub t_max: f64,
    pub provenance: String,
}

/// `(1 + a0 t)^2 e^{-(1 + a0 t) x}`: pure fragmentation with `λ = 2`, `ν = 0`
/// (so `a(x) = a0 x`, `b(x, y) = 2/y`) from `e^{-x}`.
///
/// Substituting into `∂_t f = -a0 x f + 2 a0 ∫_x^∞ f(y) dy` with `c = 1 + a0 t`:
/// the left side is `a0 (2c - c^2 x) e^{-cx}`, and the right side is
/// `-a0 c^2 x e^{-cx} + 2 a0 c e^{-cx}`.
pub fn exact_pure_fragmentation(a0: f64, t: f64, x: f64) -> Result<f64> {
    if !(a0 > 0.0 && t >= 0.0 && x > 0.0) {
        return Err(domain(format!("need a0 > 0, t >= 0, x > 0, got ({a0}, {t}, {x})")));
    }
    let c = 1.0 + a0 * t;
    Ok(c * c * math::exp(-c * x))
}

/// Average of [`exact_pure_fragmentation`] over the cell `[a, b]`.
pub fn pure_fragmentation_cell_average(a0: f64, t: f64, a: f64, b: f64) -> f64 {
    let c = 1.0 + a0 * t;
    c * (math::exp(-c * a) - math::exp(-c * b)) / (b - a)
}

pub fn pure_fragmentation_oracle() -> OracleSolution {
    fn density(t: f64, x: f64) -> f64 {
        let c = 1.0 + t;
        c * c * math::exp(-c * x)
    }
    OracleSolution {
        density,
        t_max: f64::INFINITY,
        provenance: "pure fragmentation, lambda = 2, nu = 0, a0 = 1, initial e^{-x}; verified by substitution".into(),
    }
}

/// `M_2(t) = M_2(0) / (1 - 2 K0 M_2(0) t)` for `K(x, y) = 2 K0 x y`, from
/// `dM_2/dt = (1/2) ∫∫ K(x, y) 2xy f f = 2 K0 M_2^2`.
pub fn multiplicative_m2(k0: f64, m2_0: f64, t: f64) -> Result<f64> {
    if !(k0 > 0.0 && m2_0 >= 0.0 && t >= 0.0) {
        return Err(domain(format!("need K0 > 0, M2(0) >= 0, t >= 0, got ({k0}, {m2_0}, {t})")));
    }
    let d = 1.0 - 2.0 * k0 * m2_0 * t;
    if d <= 0.0 {
        return Err(domain(format!("t = {t} is at or past the blow-up time {}", multiplicative_blowup(k0, m2_0))));
    }
    Ok(m2_0 / d)
}

/// Blow-up time `1 / (2 K0 M_2(0))` of [`multiplicative_m2`].
pub fn multiplicative_blowup(k0: f64, m2_0: f64) -> f64 {
    1.0 / (2.0 * k0 * m2_0)
}

/// Relative L¹ distance `Σ|f_i - g_i|Δ_i / Σ|g_i|Δ_i` against exact cell averages.
pub fn relative_l1_exact<F: Fn(f64, f64) -> f64>(state: &State, cell_average: F) -> f64 {
    let g = state.grid();
    let mut err = 0.0;
    let mut norm = 0.0;
    for ((w, &d), &f) in g.edges().windows(2).zip(g.widths()).zip(state.values()) {
        let exact = cell_average(w[0], w[1]);
        err += (f - exact).abs() * d;
        norm += exact.abs() * d;
    }
    err / norm
}

/// Relative L¹ distance between `state` and `reference`, after conservative
/// projection of `reference` onto the cells of `state` inside the overlap of
/// both grids.
pub fn relative_l1_projected(state: &State, reference: &State) -> Result<f64> {
    let g = state.grid();
    let r = reference.grid();
    let lo = g.x_min().max(r.x_min());
    let hi = g.x_max().min(r.x_max());
    let first = g.edges().partition_point(|&e| e < lo);
    let last = g.edges().partition_point(|&e| e <= hi);
    if last < first + 2 {
        return Err(Error::GridMismatch);
    }
    let mut sub_edges = g.edges()[first..last].to_vec();
    sub_edges.dedup();
    let sub = Arc::new(crate::grid::SizeGrid::from_edges(sub_edges, g.kind())?);
    let proj = project_state(reference, sub.clone());
    let mut err = 0.0;
    let mut norm = 0.0;
    for (k, &w) in sub.widths().iter().enumerate() {
        let a = state.values()[first + k];
        let b = proj.values()[k];
        err += (a - b).abs() * w;
        norm += b.abs() * w;
    }
    if norm == 0.0 {
        return Ok(if err == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(err / norm)
}

/// Parameters for [`fine_reference`].
#[derive(Clone, Debug, PartialEq)]
pub struct FineReference {
    pub run: RunConfig,
    /// Cells of the reference grid per cell of `run.grid` (at least 4).
    pub refinement: usize,
    pub dt: f64,
}

/// Most cells accepted by [`fine_reference`].
pub const FINE_REFERENCE_MAX_CELLS: usize = 2000;

/// Fixed-step Heun run on a uniform grid with `refinement` times the cells of
/// the configured grid.
pub fn fine_reference(config: &FineReference) -> Result<TimeSeries> {
    if config.refinement < 4 {
        return Err(domain(format!("refinement must be at least 4, got {}", config.refinement)));
    }
    let n = config.run.grid.n_cells * config.refinement;
    if n > FINE_REFERENCE_MAX_CELLS {
        return Err(Error::ResourceCap(format!(
            "fine reference needs {n} cells, limit is {FINE_REFERENCE_MAX_CELLS}"
        )));
    }
    let spec = validate(config.run.spec.clone())?;
    let grid = Arc::new(make_grid(config.run.grid.x_min, config.run.grid.x_max, n, GridKind::Uniform)?);
    let disc = Discretization::new(&spec, grid.clone(), config.run.trunc, config.run.physics)?;
    let state = config.run.initial.project(grid, config.run.mass)?.truncated(disc.j());
    run_fixed(&disc, state, config.dt, config.run.t_end, config.run.output_stride, &config.run.extra_moments)
}
