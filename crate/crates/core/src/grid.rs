//! Size grids on `(x_min, x_max]`, cell-average states and their moments.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{domain, Error};
use crate::math::{self, Compensated};
use crate::quad;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    Geometric,
    Uniform,
}

/// Partition of `(e_0, e_N]` into cells with midpoint pivots.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeGrid {
    edges: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
    kind: GridKind,
}

/// Builds a grid with `e_0 = x_min` and `e_N = x_max`.
pub fn make_grid(x_min: f64, x_max: f64, n_cells: usize, kind: GridKind) -> Result<SizeGrid> {
    if !(x_min > 0.0 && x_min.is_finite()) {
        return Err(domain(format!("x_min must be positive, got {x_min}")));
    }
    if !(x_max > x_min && x_max.is_finite()) {
        return Err(domain(format!("x_max must exceed x_min, got ({x_min}, {x_max})")));
    }
    if n_cells < 2 {
        return Err(domain(format!("at least two cells are required, got {n_cells}")));
    }
    let n = n_cells as f64;
    let mut edges: Vec<f64> = (0..=n_cells)
        .map(|i| match kind {
            GridKind::Geometric => x_min * math::powf(x_max / x_min, i as f64 / n),
            GridKind::Uniform => x_min + (x_max - x_min) * (i as f64 / n),
        })
        .collect();
    edges[0] = x_min;
    edges[n_cells] = x_max;
    SizeGrid::from_edges(edges, kind)
}

impl SizeGrid {
    /// Grid from explicit edges; `kind` is informational.
    pub fn from_edges(edges: Vec<f64>, kind: GridKind) -> Result<SizeGrid> {
        if edges.len() < 3 {
            return Err(domain("a grid needs at least two cells"));
        }
        if !(edges[0] > 0.0) || edges.iter().any(|e| !e.is_finite()) {
            return Err(domain("grid edges must be positive and finite"));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("grid edges must be strictly increasing"));
        }
        let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(SizeGrid { edges, centers, widths, kind })
    }

    /// Geometric grid with the given resolution per decade of size.
    pub fn geometric_per_decade(x_min: f64, x_max: f64, cells_per_decade: usize) -> Result<SizeGrid> {
        if !(x_min > 0.0 && x_max > x_min) {
            return Err(domain(format!("invalid size range ({x_min}, {x_max})")));
        }
        let decades = math::ln(x_max / x_min) / math::ln(10.0);
        let n = math::floor(decades * cells_per_decade as f64 + 0.5) as usize;
        make_grid(x_min, x_max, n.max(2), GridKind::Geometric)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn x_min(&self) -> f64 {
        self.edges[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }
}

/// Cell-averaged number density on a grid at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    grid: Arc<SizeGrid>,
    values: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(grid: Arc<SizeGrid>, values: Vec<f64>, t: f64) -> Result<State> {
        if values.len() != grid.len() {
            return Err(domain(format!(
                "state has {} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(domain("state values must be finite and non-negative"));
        }
        Ok(State { grid, values, t })
    }

    /// Skips the sign and finiteness checks.
    pub(crate) fn from_parts(grid: Arc<SizeGrid>, values: Vec<f64>, t: f64) -> State {
        State { grid, values, t }
    }

    pub fn zeros(grid: Arc<SizeGrid>) -> State {
        let n = grid.len();
        State { grid, values: alloc::vec![0.0; n], t: 0.0 }
    }

    pub fn grid(&self) -> &Arc<SizeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `M_m = Σ x̄_i^m f_i Δ_i`.
    pub fn moment(&self, m: f64) -> f64 {
        let g = &self.grid;
        let mut acc = Compensated::default();
        for ((&x, &w), &f) in g.centers.iter().zip(&g.widths).zip(&self.values) {
            if f != 0.0 {
                acc.add(math::powf(x, m) * f * w);
            }
        }
        acc.value()
    }

    /// `M_1`, the total mass.
    pub fn mass(&self) -> f64 {
        let g = &self.grid;
        let mut acc = Compensated::default();
        for ((&x, &w), &f) in g.centers.iter().zip(&g.widths).zip(&self.values) {
            acc.add(x * f * w);
        }
        acc.value()
    }

    /// `Σ x̄_i |ln x̄_i| f_i Δ_i`.
    pub fn log_mass(&self) -> f64 {
        let g = &self.grid;
        let mut acc = Compensated::default();
        for ((&x, &w), &f) in g.centers.iter().zip(&g.widths).zip(&self.values) {
            acc.add(math::xlnx(x).abs() * f * w);
        }
        acc.value()
    }

    /// Multiplies every value by `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> State {
        State {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            t: self.t,
        }
    }

    /// Zeroes every cell whose pivot exceeds `j`.
    pub fn truncated(&self, j: f64) -> State {
        let values = self
            .values
            .iter()
            .zip(self.grid.centers())
            .map(|(&v, &x)| if x <= j { v } else { 0.0 })
            .collect();
        State { grid: self.grid.clone(), values, t: self.t }
    }
}

/// Moments `M_m` for a list of exponents together with the log-mass.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub entries: Vec<(f64, f64)>,
    pub log_mass: f64,
}

impl MomentReport {
    pub fn get(&self, m: f64) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == m).map(|e| e.1)
    }
}

pub fn moments(state: &State, exponents: &[f64]) -> MomentReport {
    let mut entries: Vec<(f64, f64)> = Vec::with_capacity(exponents.len());
    for &m in exponents {
        if entries.iter().any(|e| e.0 == m) {
            continue;
        }
        let v = if m == 1.0 { state.mass() } else { state.moment(m) };
        entries.push((m, v));
    }
    MomentReport { entries, log_mass: state.log_mass() }
}

/// Cell averages `(1/Δ_i) ∫_cell fin(x) dx` by adaptive quadrature (relative
/// tolerance `1e-10` per cell).
pub fn project<F: Fn(f64) -> f64>(fin: F, grid: Arc<SizeGrid>) -> Result<State> {
    let mut values = Vec::with_capacity(grid.len());
    for (w, &width) in grid.edges.windows(2).zip(&grid.widths) {
        let integral = quad::adaptive_gk(&fin, w[0], w[1], 1e-10, 0.0)?;
        if !(integral.is_finite() && integral >= 0.0) {
            return Err(Error::Quadrature(format!(
                "initial density has integral {integral} on cell [{}, {}]",
                w[0], w[1]
            )));
        }
        values.push(integral / width);
    }
    Ok(State { grid, values, t: 0.0 })
}

/// Built-in initial densities (before mass scaling).
#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Zero,
    /// `e^{-x/scale}`.
    Exponential { scale: f64 },
    /// Gaussian bump `exp(-(x-center)^2 / (2 width^2))` restricted to `x > 0`.
    MonodisperseSmoothed { center: f64, width: f64 },
    /// `x^{-exponent} e^{-x/cutoff}`.
    PowerLawCutoff { exponent: f64, cutoff: f64 },
    /// Linear interpolation of `(size, density)` samples, zero outside their range.
    Tabulated(Vec<(f64, f64)>),
}

impl InitialData {
    pub fn check(&self) -> Result<()> {
        match self {
            InitialData::Zero => Ok(()),
            InitialData::Exponential { scale } if *scale > 0.0 => Ok(()),
            InitialData::MonodisperseSmoothed { center, width } if *center > 0.0 && *width > 0.0 => Ok(()),
            InitialData::PowerLawCutoff { exponent, cutoff } if *cutoff > 0.0 && *exponent < 2.0 => Ok(()),
            InitialData::Tabulated(pts) => {
                if pts.len() < 2 {
                    return Err(domain("tabulated initial data needs at least two samples"));
                }
                if pts.iter().any(|p| !(p.0 > 0.0 && p.1 >= 0.0 && p.0.is_finite() && p.1.is_finite())) {
                    return Err(domain("tabulated initial data needs positive sizes and non-negative densities"));
                }
                if pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(domain("tabulated initial sizes must be strictly increasing"));
                }
                Ok(())
            }
            other => Err(domain(format!("invalid initial data parameters: {other:?}"))),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            InitialData::Zero => 0.0,
            InitialData::Exponential { scale } => math::exp(-x / scale),
            InitialData::MonodisperseSmoothed { center, width } => {
                let u = (x - center) / width;
                math::exp(-0.5 * u * u)
            }
            InitialData::PowerLawCutoff { exponent, cutoff } => {
                math::powf(x, -exponent) * math::exp(-x / cutoff)
            }
            InitialData::Tabulated(pts) => interpolate(pts, x),
        }
    }

    /// Cell averages on `grid`, rescaled so that the discrete mass equals
    /// `mass` when given.
    pub fn project(&self, grid: Arc<SizeGrid>, mass: Option<f64>) -> Result<State> {
        self.check()?;
        let state = match self {
            InitialData::Tabulated(pts) => project_piecewise_linear(pts, grid),
            _ => project(|x| self.density(x), grid)?,
        };
        match mass {
            None => Ok(state),
            Some(target) => {
                if !(target >= 0.0) {
                    return Err(domain(format!("initial mass must be non-negative, got {target}")));
                }
                let m = state.mass();
                if m == 0.0 {
                    if target == 0.0 {
                        return Ok(state);
                    }
                    return Err(domain("cannot rescale a zero initial density to positive mass"));
                }
                Ok(state.scaled(target / m))
            }
        }
    }
}

fn interpolate(pts: &[(f64, f64)], x: f64) -> f64 {
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if x < first.0 || x > last.0 {
        return 0.0;
    }
    let k = pts.partition_point(|p| p.0 <= x);
    if k == 0 {
        return first.1;
    }
    if k >= pts.len() {
        return last.1;
    }
    let (x0, y0) = pts[k - 1];
    let (x1, y1) = pts[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Exact cell averages of the piecewise-linear interpolant.
fn project_piecewise_linear(pts: &[(f64, f64)], grid: Arc<SizeGrid>) -> State {
    let mut values = Vec::with_capacity(grid.len());
    for (w, &width) in grid.edges.windows(2).zip(&grid.widths) {
        let (a, b) = (w[0], w[1]);
        let mut total = 0.0;
        for seg in pts.windows(2) {
            let lo = seg[0].0.max(a);
            let hi = seg[1].0.min(b);
            if hi > lo {
                // trapezoid is exact for a linear segment
                total += 0.5 * (hi - lo) * (interpolate(pts, lo) + interpolate(pts, hi));
            }
        }
        values.push(total / width);
    }
    State { grid, values, t: 0.0 }
}

/// Conservative projection of a piecewise-constant state onto another grid:
/// each target cell receives the overlap-weighted number of the source cells.
pub fn project_state(state: &State, target: Arc<SizeGrid>) -> State {
    let src = state.grid();
    let mut values = alloc::vec![0.0; target.len()];
    let mut s = 0;
    for (t, value) in values.iter_mut().enumerate() {
        let (a, b) = (target.edges[t], target.edges[t + 1]);
        while s < src.len() && src.edges[s + 1] <= a {
            s += 1;
        }
        let mut k = s;
        let mut total = 0.0;
        while k < src.len() && src.edges[k] < b {
            let lo = src.edges[k].max(a);
            let hi = src.edges[k + 1].min(b);
            if hi > lo {
                total += state.values[k] * (hi - lo);
            }
            k += 1;
        }
        *value = total / target.widths[t];
    }
    State { grid: target, values, t: state.t }
}
