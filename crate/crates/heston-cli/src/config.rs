//! Flat JSON run configuration.
//!
//! ```json
//! {
//!   "params": {"sigma": 1.0, "rho": 0.0, "kappa": 1.0, "theta": 0.5, "r": 1.0, "q": 1.0},
//!   "gamma": null,
//!   "domain": {"x_lo": -3.0, "x_hi": 3.0, "y_max": null},
//!   "grid": {"nx": 65, "ny": 65, "grading": 2.0},
//!   "problem": "vi",
//!   "lambda": null,
//!   "upwind": false,
//!   "data": {
//!     "f":   {"kind": "constant", "c": 0.0},
//!     "psi": {"kind": "put", "strike": 1.0},
//!     "g":   {"kind": "put", "strike": 1.0}
//!   },
//!   "penalty": {"eps_sequence": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
//!               "newton_tol": 1e-11, "newton_max_iter": 60},
//!   "solver": {"tol": 1e-10, "max_outer": 300},
//!   "manufactured": null,
//!   "seed": 42
//! }
//! ```
//!
//! `y_max: null` selects the default truncation `20 max(1, beta)/mu`;
//! `gamma: null` selects `gamma0`; `lambda: null` selects `lambda0`.

use heston_core::params::{
    derive_constants_with_gamma, DerivedConstants, HestonParams,
};
use heston_core::solvers::PenaltyConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid coefficients: {0}")]
    Coefficients(#[from] heston_core::params::CoefficientError),
    #[error("invalid domain or grid: {0}")]
    Grid(#[from] heston_core::grid::GridError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsSection {
    pub sigma: f64,
    pub rho: f64,
    pub kappa: f64,
    pub theta: f64,
    pub r: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSection {
    pub x_lo: f64,
    pub x_hi: f64,
    #[serde(default)]
    pub y_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
}

fn default_grading() -> f64 {
    2.0
}

/// Builtin data families. `exp_family` is `d0 + d2 y + d3 e^{l x} + d4 e^{k y}`;
/// `manufactured_source` is the closed-form image `A u*` of that family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Constant { c: f64 },
    Affine { d0: f64, d2: f64 },
    ExpFamily { d0: f64, d2: f64, d3: f64, l: f64, d4: f64, k: f64 },
    Put { strike: f64 },
    ManufacturedSource { d0: f64, d2: f64, d3: f64, l: f64, d4: f64, k: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSection {
    pub f: DataSpec,
    #[serde(default)]
    pub psi: Option<DataSpec>,
    pub g: DataSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltySection {
    #[serde(default = "default_eps_sequence")]
    pub eps_sequence: Vec<f64>,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
}

fn default_eps_sequence() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}
fn default_newton_tol() -> f64 {
    1e-11
}
fn default_newton_max_iter() -> usize {
    60
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            eps_sequence: default_eps_sequence(),
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSection {
    #[serde(default = "default_outer_tol")]
    pub tol: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
}

fn default_outer_tol() -> f64 {
    1e-8
}
fn default_max_outer() -> usize {
    300
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: default_outer_tol(), max_outer: default_max_outer() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Equation,
    Vi,
}

/// Manufactured-solution block for `refine-study`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManufacturedSection {
    pub d0: f64,
    pub d2: f64,
    pub d3: f64,
    pub l: f64,
    pub d4: f64,
    pub k: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
}

fn default_levels() -> Vec<usize> {
    vec![65, 129, 257]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ParamsSection,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub domain: DomainSection,
    pub grid: GridSection,
    pub problem: ProblemKind,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub upwind: bool,
    pub data: DataSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub manufactured: Option<ManufacturedSection>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

/// Everything derived from a parsed configuration.
pub struct Prepared {
    pub params: HestonParams,
    pub consts: DerivedConstants,
    pub domain: heston_core::grid::Domain,
    pub penalty: PenaltyConfig,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let p = &self.params;
        let params =
            HestonParams::new(p.sigma, p.rho, p.kappa, p.theta, p.r, p.q).validate()?;
        let consts = derive_constants_with_gamma(&params, self.gamma)?;
        if self.grid.nx < 3 || self.grid.ny < 3 {
            return Err(ConfigError::Invalid(format!(
                "grid sizes must be >= 3, got {} x {}",
                self.grid.nx, self.grid.ny
            )));
        }
        let y_max = match self.domain.y_max {
            Some(y) if y > 0.0 => y,
            Some(y) => {
                return Err(ConfigError::Invalid(format!("y_max must be positive, got {y}")))
            }
            None => 20.0 * f64::max(1.0, consts.beta) / consts.mu,
        };
        let domain = heston_core::grid::Domain::rectangle(self.domain.x_lo, self.domain.x_hi, y_max)?;
        let pc = &self.penalty;
        if pc.eps_sequence.is_empty()
            || pc.eps_sequence.iter().any(|&e| !(e > 0.0))
            || pc.eps_sequence.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(ConfigError::Invalid(
                "penalty.eps_sequence must be positive and strictly decreasing".into(),
            ));
        }
        let penalty = PenaltyConfig {
            eps_sequence: pc.eps_sequence.clone(),
            newton_tol: pc.newton_tol,
            newton_max_iter: pc.newton_max_iter,
            lambda: self.lambda,
            linear_tol: 1e-12,
        };
        if let Some(l) = self.lambda {
            if l < consts.lambda0 {
                return Err(ConfigError::Invalid(format!(
                    "lambda = {l} below lambda0 = {}",
                    consts.lambda0
                )));
            }
        }
        Ok(Prepared { params, consts, domain, penalty })
    }
}
