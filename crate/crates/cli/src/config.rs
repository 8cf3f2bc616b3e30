//! Experiment configuration files (TOML).
//!
//! Physical parameters have no defaults: `[model]`, `[daughter]` and the
//! initial mass must be given explicitly. Solver settings default to the
//! values of [`StepControl::default`].

use std::path::Path;

use cofrag_core::integrator::{GridSpec, RunConfig, StepControl};
use cofrag_core::kernel::TabulatedDaughter;
use cofrag_core::{CoefficientSpec, DaughterSpec, GridKind, InitialData, Physics, SnapshotPolicy, TruncationSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: Model,
    pub daughter: Daughter,
    pub initial: Initial,
    pub grid: Grid,
    #[serde(default)]
    pub truncation: Truncation,
    pub solver: Solver,
    #[serde(default)]
    pub experiment: Experiment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    pub lambda: f64,
    pub alpha: f64,
    pub k0: f64,
    pub a0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Daughter {
    PowerLaw { nu: f64 },
    /// Piecewise-linear `B` through `(z, B(z))` points on `[0, 1]`.
    Tabulated {
        points: Vec<[f64; 2]>,
        #[serde(default)]
        normalize: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Initial {
    #[serde(flatten)]
    pub shape: Shape,
    /// Initial mass `ρ`.
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Zero,
    Exponential { scale: f64 },
    Monodisperse { center: f64, width: f64 },
    PowerLawCutoff { exponent: f64, cutoff: f64 },
    /// Piecewise-linear density through `(x, f(x))` points.
    Tabulated { points: Vec<[f64; 2]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Geometric,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    /// Cells per decade (geometric grids); exclusive with `n_cells`.
    pub cells_per_decade: Option<usize>,
    pub n_cells: Option<usize>,
    #[serde(default = "geometric")]
    pub kind: Kind,
}

fn geometric() -> Kind {
    Kind::Geometric
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    /// Truncation size; absent means no truncation inside the grid.
    pub j: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    pub t_end: f64,
    pub output_stride: f64,
    #[serde(default = "yes")]
    pub coagulation: bool,
    #[serde(default = "yes")]
    pub fragmentation: bool,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub dt_init: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub max_steps: Option<u64>,
    pub flush_below: Option<f64>,
    pub m0: Option<f64>,
    pub m1: Option<f64>,
    pub snapshot_every: Option<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Single {
        #[serde(default)]
        seed: u64,
    },
    JSweep {
        js: Vec<f64>,
        #[serde(default)]
        seed: u64,
    },
    RhoSweep {
        rhos: Vec<f64>,
        js: Vec<f64>,
        #[serde(default)]
        seed: u64,
    },
    ConvergenceStudy {
        cells_per_decade: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment::Single { seed: 0 }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn strictly_increasing<T: PartialOrd + Copy + std::fmt::Debug>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(invalid(format!("experiment list `{name}` is empty")));
    }
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(format!("experiment list `{name}` must increase strictly, got {v:?}")));
    }
    Ok(())
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, CliError> {
        let c: Config = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        c.check()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn check(&self) -> Result<(), CliError> {
        match (self.grid.cells_per_decade, self.grid.n_cells) {
            (Some(_), Some(_)) => return Err(invalid("grid: give either cells_per_decade or n_cells, not both")),
            (None, None) => return Err(invalid("grid: cells_per_decade or n_cells is required")),
            (Some(_), None) if self.grid.kind != Kind::Geometric => {
                return Err(invalid("grid: cells_per_decade needs kind = \"geometric\""))
            }
            _ => {}
        }
        match &self.experiment {
            Experiment::Single { .. } => Ok(()),
            Experiment::JSweep { js, .. } => strictly_increasing("js", js),
            Experiment::RhoSweep { rhos, js, .. } => {
                strictly_increasing("rhos", rhos)?;
                strictly_increasing("js", js)
            }
            Experiment::ConvergenceStudy { cells_per_decade, .. } => {
                if self.grid.kind != Kind::Geometric {
                    return Err(invalid("convergence studies need a geometric grid"));
                }
                strictly_increasing("cells_per_decade", cells_per_decade)
            }
        }
    }

    pub fn coefficients(&self) -> Result<CoefficientSpec, CliError> {
        let daughter = match &self.daughter {
            Daughter::PowerLaw { nu } => DaughterSpec::PowerLaw { nu: *nu },
            Daughter::Tabulated { points, normalize } => {
                let pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
                let mut t = TabulatedDaughter::piecewise_linear(&pts).map_err(CliError::from_core)?;
                if *normalize {
                    t = t.normalized().map_err(CliError::from_core)?;
                }
                DaughterSpec::Tabulated(t)
            }
        };
        let Model { lambda, alpha, k0, a0 } = self.model;
        Ok(CoefficientSpec { lambda, alpha, k0, a0, daughter })
    }

    pub fn grid_spec(&self) -> GridSpec {
        let kind = match self.grid.kind {
            Kind::Geometric => GridKind::Geometric,
            Kind::Uniform => GridKind::Uniform,
        };
        match (self.grid.cells_per_decade, self.grid.n_cells) {
            (Some(per_decade), _) => GridSpec::geometric(self.grid.x_min, self.grid.x_max, per_decade),
            (None, n) => GridSpec { x_min: self.grid.x_min, x_max: self.grid.x_max, n_cells: n.unwrap_or(0), kind },
        }
    }

    pub fn initial_data(&self) -> InitialData {
        match &self.initial.shape {
            Shape::Zero => InitialData::Zero,
            Shape::Exponential { scale } => InitialData::Exponential { scale: *scale },
            Shape::Monodisperse { center, width } => InitialData::MonodisperseSmoothed { center: *center, width: *width },
            Shape::PowerLawCutoff { exponent, cutoff } => {
                InitialData::PowerLawCutoff { exponent: *exponent, cutoff: *cutoff }
            }
            Shape::Tabulated { points } => InitialData::Tabulated(points.iter().map(|p| (p[0], p[1])).collect()),
        }
    }

    /// The core run configuration; `snapshot_every` overrides the config file.
    pub fn run_config(&self, snapshot_every: Option<f64>) -> Result<RunConfig, CliError> {
        let mass = match self.initial.shape {
            Shape::Zero => None,
            _ => Some(self.initial.mass),
        };
        let mut c = RunConfig::new(self.coefficients()?, self.grid_spec(), self.initial_data(), mass);
        c.trunc = match self.truncation.j {
            Some(j) => TruncationSpec::paper(j),
            None => TruncationSpec::none(),
        };
        let s = &self.solver;
        c.physics = Physics { coagulation: s.coagulation, fragmentation: s.fragmentation };
        c.t_end = s.t_end;
        c.output_stride = s.output_stride;
        let d = StepControl::default();
        c.control = StepControl {
            dt_init: s.dt_init.unwrap_or(d.dt_init),
            dt_min: s.dt_min.unwrap_or(d.dt_min),
            dt_max: s.dt_max.unwrap_or(d.dt_max),
            rel_tol: s.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: s.abs_tol.unwrap_or(d.abs_tol),
            max_steps: s.max_steps.unwrap_or(d.max_steps),
            flush_below: s.flush_below.unwrap_or(d.flush_below),
        };
        c.m0 = s.m0;
        c.m1 = s.m1;
        c.snapshots = match snapshot_every.or(s.snapshot_every) {
            Some(dt) => SnapshotPolicy::Every(dt),
            None => SnapshotPolicy::None,
        };
        c.check().map_err(CliError::from_core)?;
        Ok(c)
    }

    pub fn with_j(&self, j: f64) -> Config {
        let mut c = self.clone();
        c.truncation.j = Some(j);
        c.experiment = Experiment::default();
        c
    }

    pub fn with_mass(&self, rho: f64) -> Config {
        let mut c = self.clone();
        c.initial.mass = rho;
        c
    }

    pub fn with_resolution(&self, per_decade: usize) -> Config {
        let mut c = self.clone();
        c.grid.cells_per_decade = Some(per_decade);
        c.grid.n_cells = None;
        c.experiment = Experiment::default();
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const CANONICAL: &str = r#"
[model]
lambda = 2.0
alpha = 1.0
k0 = 1.0
a0 = 1.0

[daughter]
kind = "power_law"
nu = 0.0

[initial]
kind = "exponential"
scale = 1.0
mass = 0.2

[grid]
x_min = 1e-3
x_max = 1e3
cells_per_decade = 10

[truncation]
j = 100.0

[solver]
t_end = 1.0
output_stride = 0.5
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = Config::parse(CANONICAL).unwrap();
        assert_eq!(c.initial.mass, 0.2);
        assert_eq!(c.experiment, Experiment::Single { seed: 0 });
        let again = Config::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        let rc = c.run_config(None).unwrap();
        assert_eq!(rc.grid.n_cells, 60);
        assert_eq!(rc.trunc, TruncationSpec::paper(100.0));
    }

    #[test]
    fn physical_parameters_are_required() {
        let missing = CANONICAL.replace("mass = 0.2\n", "");
        assert!(matches!(Config::parse(&missing), Err(CliError::Validation(_))));
        let missing = CANONICAL.replace("nu = 0.0\n", "");
        assert!(matches!(Config::parse(&missing), Err(CliError::Validation(_))));
        let unknown = CANONICAL.replace("a0 = 1.0", "a0 = 1.0\nbeta = 2.0");
        assert!(matches!(Config::parse(&unknown), Err(CliError::Validation(_))));
    }

    #[test]
    fn experiment_lists() {
        let empty = format!("{CANONICAL}\n[experiment]\nkind = \"j_sweep\"\njs = []\n");
        assert!(matches!(Config::parse(&empty), Err(CliError::Validation(_))));
        let unordered = format!("{CANONICAL}\n[experiment]\nkind = \"j_sweep\"\njs = [100.0, 10.0]\n");
        assert!(matches!(Config::parse(&unordered), Err(CliError::Validation(_))));
        let ok = format!("{CANONICAL}\n[experiment]\nkind = \"rho_sweep\"\nrhos = [0.2, 2.0]\njs = [10.0, 100.0, 1000.0]\n");
        assert!(Config::parse(&ok).is_ok());
    }
}
