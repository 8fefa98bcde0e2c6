//! Problem specification: physical, cost and discretization parameters,
//! JSON loading with validation, and closed-form oracles for degenerate
//! test cases.
//!
//! The configuration file is a JSON object with top-level keys `sde`,
//! `pde`, `cost`, `control` and `discretization`. Matrices are row-major
//! nested arrays; plain numbers are accepted wherever the state dimension
//! is one. See the repository README for the full schema.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::spectral::GridFunction;
use crate::{as_f64, real, Real};

/// Errors raised while loading or validating a configuration file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

/// Drift, input and noise coefficients of the SDE block.
#[derive(Clone, Debug, PartialEq)]
pub struct SdeParams<T: Real> {
    /// State drift matrix, d x d.
    pub a: DMatrix<T>,
    /// Input drift gain, d x 1.
    pub b: DVector<T>,
    /// State noise gain, d x d.
    pub c: DMatrix<T>,
    /// Input noise gain, d x 1.
    pub d: DVector<T>,
    /// Deterministic initial state.
    pub x0: DVector<T>,
}

impl<T: Real> SdeParams<T> {
    /// State dimension d.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Initial condition of the PDE state.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition<T: Real> {
    /// Spatially constant profile.
    Constant(T),
    /// Tabulated profile on a grid covering [0, 1].
    Table(GridFunction<T>),
}

/// Reaction coefficient and initial condition of the heat equation.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeParams<T: Real> {
    /// Reaction coefficient; positive values destabilize the PDE.
    pub c: T,
    /// Initial profile u(0, .).
    pub u0: InitialCondition<T>,
}

/// Quadratic cost weights and horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct CostParams<T: Real> {
    /// State weight, symmetric PSD, d x d.
    pub q: DMatrix<T>,
    /// Boundary-value weight, positive.
    pub r: T,
    /// Terminal state weight, symmetric PSD, d x d.
    pub g: DMatrix<T>,
    /// Regularization weight on the auxiliary control, positive.
    pub delta: T,
    /// Time horizon, positive.
    pub horizon: T,
}

/// How the initial boundary value U(0) is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum U0Mode<T: Real> {
    /// Minimize the quadratic value over U(0).
    Optimal,
    /// Use the given value.
    Fixed(T),
}

/// Lifting shift and initial-control policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlParams<T: Real> {
    /// Lifting shift; must exceed the PDE reaction coefficient.
    pub mu: T,
    /// Initial boundary-value policy.
    pub u0_mode: U0Mode<T>,
}

/// Numerical settings: spectral truncation, integrator grids, sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscretizationParams<T: Real> {
    /// Highest retained eigenmode; modes 0..=modes are kept.
    pub modes: usize,
    /// Number of intervals of the backward Riccati grid.
    pub riccati_steps: usize,
    /// Euler-Maruyama time step.
    pub sim_dt: T,
    /// Monte Carlo sample count.
    pub mc_paths: usize,
    /// Base seed for all random streams.
    pub seed: u64,
    /// Spatial grid points of the finite-difference plant.
    pub fd_grid_points: usize,
}

/// Complete, validated problem specification. Immutable after load; safe
/// for shared concurrent reads.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec<T: Real> {
    pub sde: SdeParams<T>,
    pub pde: PdeParams<T>,
    pub cost: CostParams<T>,
    pub control: ControlParams<T>,
    pub disc: DiscretizationParams<T>,
}

impl<T: Real> ProblemSpec<T> {
    /// State dimension d of the SDE block.
    pub fn state_dim(&self) -> usize {
        self.sde.dim()
    }

    /// Converts every number to another scalar type through `f64`.
    pub fn cast<S: Real>(&self) -> ProblemSpec<S> {
        let conv_m = |m: &DMatrix<T>| m.map(|x| real::<S>(as_f64(x)));
        let conv_v = |v: &DVector<T>| v.map(|x| real::<S>(as_f64(x)));
        let conv = |x: T| real::<S>(as_f64(x));
        ProblemSpec {
            sde: SdeParams {
                a: conv_m(&self.sde.a),
                b: conv_v(&self.sde.b),
                c: conv_m(&self.sde.c),
                d: conv_v(&self.sde.d),
                x0: conv_v(&self.sde.x0),
            },
            pde: PdeParams {
                c: conv(self.pde.c),
                u0: match &self.pde.u0 {
                    InitialCondition::Constant(v) => InitialCondition::Constant(conv(*v)),
                    InitialCondition::Table(g) => InitialCondition::Table(
                        GridFunction::new(
                            g.xs.iter().map(|&x| conv(x)).collect(),
                            g.values.iter().map(|&x| conv(x)).collect(),
                        )
                        .expect("valid grid stays valid under cast"),
                    ),
                },
            },
            cost: CostParams {
                q: conv_m(&self.cost.q),
                r: conv(self.cost.r),
                g: conv_m(&self.cost.g),
                delta: conv(self.cost.delta),
                horizon: conv(self.cost.horizon),
            },
            control: ControlParams {
                mu: conv(self.control.mu),
                u0_mode: match self.control.u0_mode {
                    U0Mode::Optimal => U0Mode::Optimal,
                    U0Mode::Fixed(v) => U0Mode::Fixed(conv(v)),
                },
            },
            disc: DiscretizationParams {
                modes: self.disc.modes,
                riccati_steps: self.disc.riccati_steps,
                sim_dt: conv(self.disc.sim_dt),
                mc_paths: self.disc.mc_paths,
                seed: self.disc.seed,
                fd_grid_points: self.disc.fd_grid_points,
            },
        }
    }
}

impl ProblemSpec<f64> {
    /// Canonical JSON form: defaults materialized, matrices as nested arrays.
    ///
    /// Loading the serialized value reproduces the spec field by field.
    pub fn to_json(&self) -> Value {
        let mat = |m: &DMatrix<f64>| {
            Value::Array(
                (0..m.nrows())
                    .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
                    .collect(),
            )
        };
        let vec = |v: &DVector<f64>| Value::Array(v.iter().map(|x| json!(x)).collect());
        let u0 = match &self.pde.u0 {
            InitialCondition::Constant(v) => json!(v),
            InitialCondition::Table(g) => json!({ "xs": g.xs, "values": g.values }),
        };
        let u0_mode = match self.control.u0_mode {
            U0Mode::Optimal => json!("optimal"),
            U0Mode::Fixed(v) => json!({ "fixed": v }),
        };
        json!({
            "sde": {
                "A": mat(&self.sde.a),
                "B": vec(&self.sde.b),
                "C": mat(&self.sde.c),
                "D": vec(&self.sde.d),
                "X0": vec(&self.sde.x0),
            },
            "pde": { "c": self.pde.c, "u0": u0 },
            "cost": {
                "Q": mat(&self.cost.q),
                "r": self.cost.r,
                "G": mat(&self.cost.g),
                "delta": self.cost.delta,
                "T": self.cost.horizon,
            },
            "control": { "mu": self.control.mu, "u0_mode": u0_mode },
            "discretization": {
                "N": self.disc.modes,
                "riccati_steps": self.disc.riccati_steps,
                "sim_dt": self.disc.sim_dt,
                "mc_paths": self.disc.mc_paths,
                "seed": self.disc.seed,
                "fd_grid_points": self.disc.fd_grid_points,
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Raw JSON schema
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VectorInput {
    Scalar(f64),
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum U0Input {
    Constant(f64),
    Table { xs: Vec<f64>, values: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum U0ModeInput {
    Word(String),
    Fixed { fixed: f64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSde {
    #[serde(rename = "A")]
    a: MatrixInput,
    #[serde(rename = "B")]
    b: VectorInput,
    #[serde(rename = "C")]
    c: MatrixInput,
    #[serde(rename = "D")]
    d: VectorInput,
    #[serde(rename = "X0")]
    x0: VectorInput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPde {
    c: f64,
    u0: U0Input,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    #[serde(rename = "Q")]
    q: MatrixInput,
    r: f64,
    #[serde(rename = "G")]
    g: MatrixInput,
    delta: f64,
    #[serde(rename = "T", default)]
    horizon: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawControl {
    #[serde(default)]
    mu: Option<f64>,
    #[serde(default)]
    u0_mode: Option<U0ModeInput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisc {
    #[serde(rename = "N")]
    modes: usize,
    #[serde(default = "default_riccati_steps")]
    riccati_steps: usize,
    #[serde(default = "default_sim_dt")]
    sim_dt: f64,
    #[serde(default = "default_mc_paths")]
    mc_paths: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_fd_grid_points")]
    fd_grid_points: usize,
}

fn default_riccati_steps() -> usize {
    2000
}
fn default_sim_dt() -> f64 {
    1e-3
}
fn default_mc_paths() -> usize {
    10_000
}
fn default_fd_grid_points() -> usize {
    256
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    sde: RawSde,
    pde: RawPde,
    cost: RawCost,
    #[serde(default)]
    control: Option<RawControl>,
    discretization: RawDisc,
}

// ---------------------------------------------------------------------------
// Loading and validation
// ---------------------------------------------------------------------------

/// Loads and validates a problem specification from a JSON file.
///
/// Every invariant is checked; no partially valid spec escapes. Schema
/// errors name the offending field, validation errors name the violated
/// invariant.
pub fn load_spec(path: impl AsRef<Path>) -> Result<ProblemSpec<f64>, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    build_spec(raw)
}

/// Loads a specification from an in-memory JSON string (used by round-trip
/// checks and tests; same validation as [`load_spec`]).
pub fn load_spec_str(text: &str) -> Result<ProblemSpec<f64>, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
        path: PathBuf::from("<string>"),
        source,
    })?;
    build_spec(raw)
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

fn to_matrix(name: &str, input: &MatrixInput) -> Result<DMatrix<f64>, ConfigError> {
    match input {
        MatrixInput::Scalar(v) => Ok(DMatrix::from_element(1, 1, *v)),
        MatrixInput::Rows(rows) => {
            let n = rows.len();
            if n == 0 {
                return Err(invalid(format!("{name} must not be empty")));
            }
            if rows.iter().any(|r| r.len() != rows[0].len()) {
                return Err(invalid(format!("{name} rows have inconsistent lengths")));
            }
            Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
        }
    }
}

fn to_vector(name: &str, input: &VectorInput) -> Result<DVector<f64>, ConfigError> {
    match input {
        VectorInput::Scalar(v) => Ok(DVector::from_element(1, *v)),
        VectorInput::Flat(v) => {
            if v.is_empty() {
                return Err(invalid(format!("{name} must not be empty")));
            }
            Ok(DVector::from_column_slice(v))
        }
        VectorInput::Rows(rows) => {
            if rows.is_empty() || rows.iter().any(|r| r.len() != 1) {
                return Err(invalid(format!("{name} must be a column (d x 1)")));
            }
            Ok(DVector::from_iterator(
                rows.len(),
                rows.iter().map(|r| r[0]),
            ))
        }
    }
}

fn check_finite(name: &str, it: impl IntoIterator<Item = f64>) -> Result<(), ConfigError> {
    for v in it {
        if !v.is_finite() {
            return Err(invalid(format!("{name} contains a non-finite entry")));
        }
    }
    Ok(())
}

fn check_square(name: &str, m: &DMatrix<f64>, d: usize) -> Result<(), ConfigError> {
    if m.nrows() != d || m.ncols() != d {
        return Err(invalid(format!(
            "{name} must be {d}x{d}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Symmetry within 1e-12 and smallest eigenvalue at least -1e-12.
fn check_sym_psd(name: &str, m: &DMatrix<f64>) -> Result<(), ConfigError> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 {
        return Err(invalid(format!(
            "{name} must be symmetric (asymmetry {asym:.3e} exceeds 1e-12)"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eigmin = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if eigmin < -1e-12 {
        return Err(invalid(format!(
            "{name} must be positive semidefinite (eigmin {eigmin:.3e} below -1e-12)"
        )));
    }
    Ok(())
}

fn build_spec(raw: RawConfig) -> Result<ProblemSpec<f64>, ConfigError> {
    let a = to_matrix("A", &raw.sde.a)?;
    let d_dim = a.nrows();
    if d_dim == 0 {
        return Err(invalid("state dimension d must be at least 1"));
    }
    check_square("A", &a, d_dim)?;
    let b = to_vector("B", &raw.sde.b)?;
    let c = to_matrix("C", &raw.sde.c)?;
    let dn = to_vector("D", &raw.sde.d)?;
    let x0 = to_vector("X0", &raw.sde.x0)?;
    check_square("C", &c, d_dim)?;
    for (name, v) in [("B", &b), ("D", &dn), ("X0", &x0)] {
        if v.len() != d_dim {
            return Err(invalid(format!("{name} must have {d_dim} rows")));
        }
    }
    check_finite("A", a.iter().copied())?;
    check_finite("B", b.iter().copied())?;
    check_finite("C", c.iter().copied())?;
    check_finite("D", dn.iter().copied())?;
    check_finite("X0", x0.iter().copied())?;

    check_finite("c", [raw.pde.c])?;
    let u0 = match raw.pde.u0 {
        U0Input::Constant(v) => {
            check_finite("u0", [v])?;
            InitialCondition::Constant(v)
        }
        U0Input::Table { xs, values } => {
            check_finite("u0.xs", xs.iter().copied())?;
            check_finite("u0.values", values.iter().copied())?;
            let g = GridFunction::new(xs, values)
                .map_err(|e| invalid(format!("u0 table: {e}")))?;
            InitialCondition::Table(g)
        }
    };

    let q = to_matrix("Q", &raw.cost.q)?;
    let g = to_matrix("G", &raw.cost.g)?;
    check_square("Q", &q, d_dim)?;
    check_square("G", &g, d_dim)?;
    check_finite("Q", q.iter().copied())?;
    check_finite("G", g.iter().copied())?;
    check_sym_psd("Q", &q)?;
    check_sym_psd("G", &g)?;
    if !(raw.cost.r > 0.0) {
        return Err(invalid("r must be positive"));
    }
    if !(raw.cost.delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    let horizon = raw.cost.horizon.unwrap_or(1.0);
    if !(horizon > 0.0) {
        return Err(invalid("T must be positive"));
    }

    let control = raw.control.unwrap_or_default();
    let mu = control.mu.unwrap_or(raw.pde.c + 1.0);
    check_finite("mu", [mu])?;
    if !(mu > raw.pde.c) {
        return Err(invalid("mu must exceed c"));
    }
    let u0_mode = match control.u0_mode {
        None => U0Mode::Optimal,
        Some(U0ModeInput::Word(w)) if w == "optimal" => U0Mode::Optimal,
        Some(U0ModeInput::Word(w)) => {
            return Err(invalid(format!(
                "u0_mode must be \"optimal\" or {{\"fixed\": value}}, got \"{w}\""
            )));
        }
        Some(U0ModeInput::Fixed { fixed }) => {
            check_finite("u0_mode.fixed", [fixed])?;
            U0Mode::Fixed(fixed)
        }
    };

    let disc = raw.discretization;
    if disc.modes == 0 {
        return Err(invalid("N must be at least 1"));
    }
    if disc.riccati_steps < 2 {
        return Err(invalid("riccati_steps must be at least 2"));
    }
    if !(disc.sim_dt > 0.0) {
        return Err(invalid("sim_dt must be positive"));
    }
    if disc.sim_dt > horizon {
        return Err(invalid("sim_dt must not exceed T"));
    }
    if disc.mc_paths == 0 {
        return Err(invalid("mc_paths must be at least 1"));
    }
    if disc.fd_grid_points < 8 {
        return Err(invalid("fd_grid_points must be at least 8"));
    }

    Ok(ProblemSpec {
        sde: SdeParams {
            a,
            b,
            c,
            d: dn,
            x0,
        },
        pde: PdeParams { c: raw.pde.c, u0 },
        cost: CostParams {
            q,
            r: raw.cost.r,
            g,
            delta: raw.cost.delta,
            horizon,
        },
        control: ControlParams { mu, u0_mode },
        disc: DiscretizationParams {
            modes: disc.modes,
            riccati_steps: disc.riccati_steps,
            sim_dt: disc.sim_dt,
            mc_paths: disc.mc_paths,
            seed: disc.seed,
            fd_grid_points: disc.fd_grid_points,
        },
    })
}

// ---------------------------------------------------------------------------
// Closed-form oracles
// ---------------------------------------------------------------------------

/// Exact second moment of the uncontrolled scalar SDE
/// `dX = a X dt + c X dW`, `X(0) = x0`:
/// `E[X_t^2] = x0^2 exp((2a + c^2) t)`.
pub fn uncontrolled_second_moment<T: Real>(a: T, c_noise: T, x0: T, t: T) -> T {
    x0 * x0 * ((a + a + c_noise * c_noise) * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sec7_json() -> String {
        r#"{
            "sde": { "A": 2.0, "B": 2.0, "C": 1.0, "D": 0.5, "X0": 1.0 },
            "pde": { "c": 0.5, "u0": 1.0 },
            "cost": { "Q": 10.0, "r": 1.0, "G": 10.0, "delta": 0.5, "T": 1.0 },
            "control": { "mu": 1.5, "u0_mode": "optimal" },
            "discretization": {
                "N": 3, "riccati_steps": 2000, "sim_dt": 0.001,
                "mc_paths": 10000, "seed": 42, "fd_grid_points": 256
            }
        }"#
        .to_string()
    }

    #[test]
    fn mu_below_c_is_rejected_by_name() {
        let text = sec7_json().replace("\"mu\": 1.5", "\"mu\": 0.4");
        let err = load_spec_str(&text).unwrap_err();
        match err {
            ConfigError::Validation(msg) => assert!(msg.contains("mu must exceed c")),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn shipped_sec7_parameters_are_valid() {
        let spec = load_spec_str(&sec7_json()).unwrap();
        assert_eq!(spec.state_dim(), 1);
        assert_eq!(spec.sde.a[(0, 0)], 2.0);
        assert_eq!(spec.sde.b[0], 2.0);
        assert_eq!(spec.sde.c[(0, 0)], 1.0);
        assert_eq!(spec.sde.d[0], 0.5);
        assert_eq!(spec.pde.c, 0.5);
        assert_eq!(spec.cost.delta, 0.5);
        assert_eq!(spec.disc.modes, 3);
        assert_eq!(spec.control.u0_mode, U0Mode::Optimal);
    }

    #[test]
    fn missing_delta_is_a_parse_error_naming_delta() {
        let text = sec7_json().replace("\"delta\": 0.5,", "");
        let err = load_spec_str(&text).unwrap_err();
        match err {
            ConfigError::Parse { source, .. } => {
                assert!(source.to_string().contains("delta"), "{source}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn defaults_mu_and_horizon() {
        let text = sec7_json()
            .replace("\"control\": { \"mu\": 1.5, \"u0_mode\": \"optimal\" },", "")
            .replace(", \"T\": 1.0", "");
        let spec = load_spec_str(&text).unwrap();
        assert_eq!(spec.control.mu, 1.5); // c + 1
        assert_eq!(spec.cost.horizon, 1.0);
        assert_eq!(spec.control.u0_mode, U0Mode::Optimal);
    }

    #[test]
    fn nested_matrix_and_fixed_u0_forms() {
        let text = r#"{
            "sde": {
                "A": [[2.0, 0.1], [0.0, -1.0]],
                "B": [2.0, 0.0],
                "C": [[1.0, 0.0], [0.0, 1.0]],
                "D": [[0.5], [0.0]],
                "X0": [1.0, -1.0]
            },
            "pde": { "c": 0.5, "u0": { "xs": [0.0, 0.5, 1.0], "values": [1.0, 2.0, 1.0] } },
            "cost": {
                "Q": [[10.0, 0.0], [0.0, 1.0]], "r": 1.0,
                "G": [[10.0, 0.0], [0.0, 1.0]], "delta": 0.5, "T": 2.0
            },
            "control": { "u0_mode": { "fixed": 0.25 } },
            "discretization": { "N": 4 }
        }"#;
        let spec = load_spec_str(text).unwrap();
        assert_eq!(spec.state_dim(), 2);
        assert_eq!(spec.control.u0_mode, U0Mode::Fixed(0.25));
        assert_eq!(spec.disc.riccati_steps, 2000);
        assert_eq!(spec.disc.sim_dt, 1e-3);
        assert_eq!(spec.disc.fd_grid_points, 256);
        assert!(matches!(spec.pde.u0, InitialCondition::Table(_)));
    }

    #[test]
    fn invariant_violations_are_named() {
        for (patch, needle) in [
            (("\"delta\": 0.5", "\"delta\": -0.5"), "delta"),
            (("\"r\": 1.0", "\"r\": 0.0"), "r must be positive"),
            (("\"T\": 1.0", "\"T\": -2.0"), "T must be positive"),
            (("\"N\": 3", "\"N\": 0"), "N must be at least 1"),
            (
                ("\"fd_grid_points\": 256", "\"fd_grid_points\": 4"),
                "fd_grid_points",
            ),
            (("\"sim_dt\": 0.001", "\"sim_dt\": 5.0"), "sim_dt"),
            (
                ("\"riccati_steps\": 2000", "\"riccati_steps\": 1"),
                "riccati_steps",
            ),
            (("\"Q\": 10.0", "\"Q\": -1.0"), "positive semidefinite"),
        ] {
            let text = sec7_json().replace(patch.0, patch.1);
            let err = load_spec_str(&text).unwrap_err();
            match err {
                ConfigError::Validation(msg) => {
                    assert!(msg.contains(needle), "message {msg:?} misses {needle:?}")
                }
                other => panic!("expected validation error for {needle}, got {other}"),
            }
        }
    }

    #[test]
    fn round_trip_is_field_identical() {
        let spec = load_spec_str(&sec7_json()).unwrap();
        let text = serde_json::to_string(&spec.to_json()).unwrap();
        let again = load_spec_str(&text).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn second_moment_degenerate_cases() {
        assert_eq!(uncontrolled_second_moment(2.0, 1.0, 1.0, 0.0), 1.0);
        assert_eq!(uncontrolled_second_moment(0.0, 0.0, 3.0, 7.0), 9.0);
    }

    #[test]
    fn second_moment_matches_ito_closed_form() {
        let m = uncontrolled_second_moment(2.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(m, 5.0f64.exp(), max_relative = 1e-15);
        assert_relative_eq!(m, 148.413, max_relative = 1e-5);
    }

    // Monte Carlo confirmation of the closed form: sample the exact solution
    // X_1 = exp((a - c^2/2) + c W_1) and average X_1^2 over 1e5 draws.
    #[test]
    fn second_moment_confirmed_by_sampling() {
        let (a, c, x0) = (2.0f64, 1.0f64, 1.0f64);
        let mut rng = crate::rng::path_stream(7, 0);
        let paths = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..paths {
            let w: f64 = rng.sample(StandardNormal);
            let x = x0 * ((a - 0.5 * c * c) + c * w).exp();
            sum += x * x;
            sq += x.powi(4);
        }
        let mean = sum / paths as f64;
        let var = (sq / paths as f64 - mean * mean).max(0.0);
        let se = (var / paths as f64).sqrt();
        let exact = uncontrolled_second_moment(a, c, x0, 1.0);
        assert!(
            (mean - exact).abs() <= 4.0 * se,
            "mean {mean} vs exact {exact} (se {se})"
        );
    }
}
