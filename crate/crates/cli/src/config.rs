use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sdeproj::filter::{
    FdScheme, FilterComparisonConfig, FilterKind, GaussianParams, GridSpec, DEFAULT_QUADRATURE_NODES,
    DEFAULT_THETA_MIN, MIN_QUADRATURE_NODES,
};
use sdeproj::ProjectionKind;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    FilterComparison,
    OrderCheck,
    CrossDiffusionPaths,
    CoefficientTable,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FilterComparison => "filter-comparison",
            Self::OrderCheck => "order-check",
            Self::CrossDiffusionPaths => "cross-diffusion-paths",
            Self::CoefficientTable => "coefficient-table",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().replace('_', "-").as_str() {
            "filter-comparison" => Ok(Self::FilterComparison),
            "order-check" => Ok(Self::OrderCheck),
            "cross-diffusion-paths" => Ok(Self::CrossDiffusionPaths),
            "coefficient-table" => Ok(Self::CoefficientTable),
            other => Err(format!(
                "unknown experiment '{other}' (expected filter-comparison, order-check, cross-diffusion-paths or coefficient-table)"
            )),
        }
    }
}

/// Everything a run needs. Keys not relevant to the chosen experiment are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,

    // filter-comparison
    pub epsilon: f64,
    pub horizon: f64,
    pub dt_filter: f64,
    pub dt_fd: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub kinds: Vec<FilterKind>,
    pub report_every: usize,
    pub theta_min: f64,
    pub prior_mean: f64,
    pub prior_std: f64,
    pub fd_scheme: FdScheme,

    // order-check
    pub projections: Vec<ProjectionKind>,
    pub n_paths: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub n_levels: usize,
    pub steps_per_level: usize,
    pub theta0: f64,

    // cross-diffusion-paths
    pub sigma: f64,
    pub x0: f64,
    pub y0: f64,
    pub dt_path: f64,

    // coefficient-table
    pub quadrature_nodes: usize,
    pub mean_min: f64,
    pub mean_max: f64,
    pub std_min: f64,
    pub std_max: f64,
    pub grid_points: usize,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let fc = FilterComparisonConfig::<f64>::default();
        let (horizon, kinds) = match experiment {
            ExperimentKind::CrossDiffusionPaths => (5.0, FilterKind::ALL.to_vec()),
            ExperimentKind::CoefficientTable => (
                fc.horizon,
                FilterKind::ALL.iter().copied().filter(|k| k.projection().is_some()).collect(),
            ),
            _ => (fc.horizon, FilterKind::ALL.to_vec()),
        };
        Self {
            experiment,
            seeds: (0..20).collect(),
            output: None,
            epsilon: fc.eps,
            horizon,
            dt_filter: fc.dt_filter,
            dt_fd: fc.dt_fd,
            x_min: fc.grid.x_min,
            x_max: fc.grid.x_max,
            n_cells: fc.grid.n_cells,
            kinds,
            report_every: fc.report_every,
            theta_min: DEFAULT_THETA_MIN,
            prior_mean: fc.prior.mean,
            prior_std: fc.prior.std_dev,
            fd_scheme: fc.scheme,
            projections: ProjectionKind::ALL.to_vec(),
            n_paths: 10_000,
            t_min: 1e-3,
            t_max: 1e-1,
            n_levels: 5,
            steps_per_level: 20,
            theta0: sdeproj::circle::GENERIC_START_ANGLE,
            sigma: 1.0,
            x0: 1.0,
            y0: 0.0,
            dt_path: 1e-3,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            mean_min: -1.0,
            mean_max: 1.0,
            std_min: 0.5,
            std_max: 2.0,
            grid_points: 5,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parse `key = value` lines; `#` starts a comment. `experiment` is required.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let err = |line: usize, message: String| CliError::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected 'key = value', found '{line}'")))?;
            entries.push((i + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let experiment = entries
            .iter()
            .rev()
            .find(|(_, k, _)| k == "experiment")
            .ok_or_else(|| err(0, "missing 'experiment' key".into()))
            .and_then(|(line, _, v)| v.parse::<ExperimentKind>().map_err(|m| err(*line, m)))?;
        let mut cfg = Self::defaults(experiment);
        for (line, key, value) in &entries {
            cfg.set(key, value).map_err(|m| err(*line, m))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("'{key}' expects a number, found '{v}'"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String>
        where
            T::Err: fmt::Display,
        {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| format!("'{key}': {e}")))
                .collect()
        }
        match key {
            "experiment" => {}
            "seeds" => self.seeds = parse_seeds(value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            "epsilon" => self.epsilon = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "dt_filter" => self.dt_filter = num(key, value)?,
            "dt_fd" => self.dt_fd = num(key, value)?,
            "x_min" => self.x_min = num(key, value)?,
            "x_max" => self.x_max = num(key, value)?,
            "n_cells" => self.n_cells = num(key, value)?,
            "kinds" => self.kinds = list(key, value)?,
            "report_every" => self.report_every = num(key, value)?,
            "theta_min" => self.theta_min = num(key, value)?,
            "prior_mean" => self.prior_mean = num(key, value)?,
            "prior_std" => self.prior_std = num(key, value)?,
            "fd_scheme" => self.fd_scheme = value.parse().map_err(|e| format!("'{key}': {e}"))?,
            "projections" => self.projections = list(key, value)?,
            "n_paths" => self.n_paths = num(key, value)?,
            "t_min" => self.t_min = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "n_levels" => self.n_levels = num(key, value)?,
            "steps_per_level" => self.steps_per_level = num(key, value)?,
            "theta0" => self.theta0 = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "x0" => self.x0 = num(key, value)?,
            "y0" => self.y0 = num(key, value)?,
            "dt_path" => self.dt_path = num(key, value)?,
            "quadrature_nodes" => self.quadrature_nodes = num(key, value)?,
            "mean_min" => self.mean_min = num(key, value)?,
            "mean_max" => self.mean_max = num(key, value)?,
            "std_min" => self.std_min = num(key, value)?,
            "std_max" => self.std_max = num(key, value)?,
            "grid_points" => self.grid_points = num(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// The library configuration of a filter comparison.
    pub fn filter_comparison(&self) -> FilterComparisonConfig<f64> {
        FilterComparisonConfig {
            eps: self.epsilon,
            horizon: self.horizon,
            dt_filter: self.dt_filter,
            dt_fd: self.dt_fd,
            grid: GridSpec {
                x_min: self.x_min,
                x_max: self.x_max,
                n_cells: self.n_cells,
            },
            prior: GaussianParams {
                mean: self.prior_mean,
                std_dev: self.prior_std,
            },
            kinds: self.kinds.clone(),
            report_every: self.report_every,
            theta_min: self.theta_min,
            scheme: self.fd_scheme,
        }
    }

    /// Problems that would stop `run`; empty iff a run would start.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.seeds.is_empty() {
            out.push("seeds must not be empty".to_string());
        }
        let positive = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive (got {v})"));
            }
        };
        match self.experiment {
            ExperimentKind::FilterComparison => out.extend(self.filter_comparison().diagnostics()),
            ExperimentKind::OrderCheck => {
                if self.projections.is_empty() {
                    out.push("at least one projection is required".to_string());
                }
                positive("t_min", self.t_min, &mut out);
                if !(self.t_max > self.t_min) {
                    out.push(format!("t_max must exceed t_min (got {} <= {})", self.t_max, self.t_min));
                }
                if self.n_levels < 4 {
                    out.push(format!("n_levels must be at least 4 (got {})", self.n_levels));
                }
                if self.n_paths == 0 || self.steps_per_level == 0 {
                    out.push("n_paths and steps_per_level must be positive".to_string());
                }
            }
            ExperimentKind::CrossDiffusionPaths => {
                positive("sigma", self.sigma, &mut out);
                positive("horizon", self.horizon, &mut out);
                positive("dt_path", self.dt_path, &mut out);
                if self.x0 == 0.0 && self.y0 == 0.0 {
                    out.push("(x0, y0) must not be the origin".to_string());
                }
                if self.horizon > 0.0 && self.dt_path > 0.0 {
                    let r = self.horizon / self.dt_path;
                    if (r - r.round()).abs() > 1e-6 {
                        out.push("dt_path must divide the horizon".to_string());
                    }
                }
            }
            ExperimentKind::CoefficientTable => {
                if self.kinds.is_empty() {
                    out.push("at least one filter kind is required".to_string());
                }
                for k in &self.kinds {
                    if k.projection().is_none() {
                        out.push(format!("{k} has no numeric projection to compare against"));
                    }
                }
                if self.quadrature_nodes < MIN_QUADRATURE_NODES {
                    out.push(format!(
                        "quadrature_nodes must be at least {MIN_QUADRATURE_NODES} (got {})",
                        self.quadrature_nodes
                    ));
                }
                positive("std_min", self.std_min, &mut out);
                if self.mean_max < self.mean_min || self.std_max < self.std_min {
                    out.push("parameter ranges must satisfy min <= max".to_string());
                }
                if self.grid_points == 0 {
                    out.push("grid_points must be positive".to_string());
                }
            }
        }
        out
    }
}

/// Comma-separated seeds; `a..b` adds the half-open range.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range '{part}'"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range '{part}'"))?;
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| format!("bad seed '{part}'"))?);
        }
    }
    Ok(seeds)
}
