use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 0x5eed;

/// Every parameter of every subcommand. Unused fields stay `None`; the
/// effective configuration is embedded in each output document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand id; filled in from the command line.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,

    /// Domain: `orthotope:1,0.84`, `disk`, `ellipse:1,1.3`, `polygon:0,0;1,0;0,1`, or JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,

    /// `closed` (orthotopes only) or `fem`; default closed for orthotopes without `--h`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,

    /// Mesh size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,

    /// Number of eigenpairs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,

    /// Eigensolver residual tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,

    /// Relative gap below which eigenvalues count as equal.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,

    /// Residual accepted for floating integer relations.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,

    /// Mesh sizes for `converge`, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,

    /// Coefficient height for the relation search.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<u64>,

    /// Also propose larger relations by lattice reduction.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<bool>,

    /// Random point sets for the determinant witness search.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,

    /// Mode number, starting at 1.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,

    /// Moving orthotope face: `x2+` is the upper face normal to axis 2.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub face: Option<String>,

    /// Uniform normal speed of the face.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,

    /// Finite-difference step for shape derivatives.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,

    /// Finite-difference step for potential derivatives.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_eps: Option<f64>,

    /// Potential: polynomial such as `x1^2 - x2 + 1`, or JSON.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,

    /// `lumped` or `consistent` potential matrix.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assembly: Option<String>,

    /// Damped area budget.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,

    /// Number of modes in the damping objective.
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub big_n: Option<usize>,

    /// Number of budgets in a sweep of the optimal value (CSV).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<usize>,

    /// Band half-width for the bang-bang report.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,

    /// Viscous damping coefficient.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_damp: Option<f64>,

    /// Modes kept in the decay-rate pencil.
    #[arg(long = "M")]
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub big_m: Option<usize>,

    /// Density for `decay-rate`: `full`, `uniform`, `optimal` or a JSON file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,

    /// Deformation field: `stretch[:ly[,rho]]` or `squash[:rho]`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,

    /// Flow time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,

    /// End domain of an interpolation path (orthotopes).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,

    /// Steps of a deformation path.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,

    /// Extra modes solved beyond `n` while tracking.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing_tol: Option<f64>,

    /// Random potentials to try in `schrodinger-check`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_attempts: Option<usize>,

    /// Total degree of the random potentials.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Output directory; without it the document goes to standard output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// Also write CSV where the command has a table.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<bool>,
}

impl RunConfig {
    /// `base` from a config file with every field given on the command line replacing it.
    pub fn merged(base: RunConfig, flags: RunConfig) -> Result<RunConfig, CliError> {
        let mut obj = match serde_json::to_value(&base)? {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("RunConfig serializes to an object"),
        };
        if let serde_json::Value::Object(m) = serde_json::to_value(&flags)? {
            obj.extend(m);
        }
        Ok(serde_json::from_value(serde_json::Value::Object(obj))?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    /// Fills the seed and checks that numeric parameters are in range.
    pub fn validate(mut self) -> Result<RunConfig, CliError> {
        self.seed.get_or_insert(DEFAULT_SEED);
        let positive = [
            ("h", self.h),
            ("tolerance", self.tolerance),
            ("gap_tol", self.gap_tol),
            ("residual_tol", self.residual_tol),
            ("dt", self.dt),
            ("d_eps", self.d_eps),
            ("ell", self.ell),
            ("eps", self.eps),
            ("t", self.t),
            ("crossing_tol", self.crossing_tol),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some(k) = self.k_damp {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(CliError::Config(format!("k_damp must be nonnegative, got {k}")));
            }
        }
        if let Some(list) = &self.h_list {
            if list.is_empty() || list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                return Err(CliError::Config("h_list must hold positive mesh sizes".into()));
            }
        }
        let at_least_one = [
            ("n", self.n),
            ("mode", self.mode),
            ("N", self.big_n),
            ("M", self.big_m),
            ("steps", self.steps),
            ("trials", self.trials),
            ("max_iterations", self.max_iterations),
            ("search_attempts", self.search_attempts),
        ];
        for (name, v) in at_least_one {
            if v == Some(0) {
                return Err(CliError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.height == Some(0) {
            return Err(CliError::Config("height must be at least 1".into()));
        }
        Ok(self)
    }
}
